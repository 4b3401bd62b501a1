/**
 * Wire protocol messages, line-delimited JSON over stdio.
 *
 * Requests:   {"type":"hello","version":1}
 *             {"type":"detect","id":n,"image":{"w":..,"h":..,"b64":".."}}
 * Responses:  {"type":"hello","classes":[...]}
 *             {"type":"detections","id":n,"items":[{"bbox":[u0,v0,u1,v1],
 *               "objectness":x,"probs":[...]}]}
 *             {"type":"error","id":n,"message":".."}
 *
 * Serialization is byte-stable: fixed key order, no whitespace, so response
 * transcripts can be golden-tested.
 */

export const PROTOCOL_VERSION = 1;

export interface DetectionItem {
  bbox: [number, number, number, number];
  objectness: number;
  probs: number[];
}

export interface ImagePayload {
  w: number;
  h: number;
  b64: string;
}

export interface DecodedImage {
  width: number;
  height: number;
  data: Buffer; // raw row-major RGB24
}

export class ProtocolViolation extends Error {}

export function parseRequest(line: string): Record<string, unknown> {
  let msg: unknown;
  try {
    msg = JSON.parse(line);
  } catch (e) {
    throw new ProtocolViolation(`undecodable message: ${(e as Error).message}`);
  }
  if (typeof msg !== "object" || msg === null || Array.isArray(msg)) {
    throw new ProtocolViolation("message is not a JSON object");
  }
  const record = msg as Record<string, unknown>;
  if (typeof record.type !== "string") {
    throw new ProtocolViolation("message has no type");
  }
  return record;
}

export function decodeImage(image: unknown): DecodedImage {
  if (typeof image !== "object" || image === null) {
    throw new ProtocolViolation("detect request has no image object");
  }
  const payload = image as Partial<ImagePayload>;
  const { w, h, b64 } = payload;
  if (!Number.isInteger(w) || !Number.isInteger(h) || (w as number) <= 0 ||
      (h as number) <= 0 || typeof b64 !== "string") {
    throw new ProtocolViolation("image payload must carry positive integer w/h and b64 data");
  }
  const data = Buffer.from(b64, "base64");
  const expected = (w as number) * (h as number) * 3;
  if (data.length !== expected) {
    throw new ProtocolViolation(
      `image payload is ${data.length} bytes, expected ${expected} for ${w}x${h}`);
  }
  return { width: w as number, height: h as number, data };
}

export function requestId(msg: Record<string, unknown>): number {
  return typeof msg.id === "number" && Number.isInteger(msg.id) ? msg.id : -1;
}

// Responses are built with explicit key order; JSON.stringify preserves
// string-key insertion order, which pins the bytes.

export function helloResponse(classes: string[]): string {
  return JSON.stringify({ type: "hello", classes });
}

export function detectionsResponse(id: number, items: DetectionItem[]): string {
  return JSON.stringify({
    type: "detections",
    id,
    items: items.map((item) => ({
      bbox: item.bbox,
      objectness: item.objectness,
      probs: item.probs,
    })),
  });
}

export function errorResponse(id: number, message: string): string {
  return JSON.stringify({ type: "error", id, message });
}
