#!/usr/bin/env node
/**
 * Bridge entry point: one request-processing loop over stdin, responses in
 * request order on stdout. A malformed request produces an error response
 * (with the request's id when recoverable) and the connection stays open;
 * the process ends cleanly when stdin closes.
 */

import { createInterface } from "node:readline";
import { pathToFileURL } from "node:url";

import { parseArgs, type BridgeDetector } from "./detector.js";
import { MockDetector } from "./mock.js";
import { createModelDetector } from "./model.js";
import {
  decodeImage,
  detectionsResponse,
  errorResponse,
  helloResponse,
  parseRequest,
  requestId,
  ProtocolViolation,
  PROTOCOL_VERSION,
} from "./protocol.js";

function send(line: string): void {
  process.stdout.write(line + "\n");
}

export async function handleLine(detector: BridgeDetector, line: string): Promise<void> {
  if (line.trim().length === 0) {
    return;
  }
  let msg;
  try {
    msg = parseRequest(line);
  } catch (e) {
    send(errorResponse(-1, (e as Error).message));
    return;
  }
  const id = requestId(msg);
  try {
    switch (msg.type) {
      case "hello": {
        if (msg.version !== PROTOCOL_VERSION) {
          send(errorResponse(id, `unsupported protocol version ${msg.version}`));
          return;
        }
        send(helloResponse(detector.classes));
        return;
      }
      case "detect": {
        if (id < 0) {
          send(errorResponse(-1, "detect request has no integer id"));
          return;
        }
        const image = decodeImage(msg.image);
        const items = await detector.detect(image);
        send(detectionsResponse(id, items));
        return;
      }
      default:
        send(errorResponse(id, `unknown request type ${String(msg.type)}`));
    }
  } catch (e) {
    if (e instanceof ProtocolViolation) {
      send(errorResponse(id, e.message));
    } else {
      send(errorResponse(id, `internal error: ${(e as Error).message}`));
    }
  }
}

export async function serve(detector: BridgeDetector): Promise<void> {
  const rl = createInterface({ input: process.stdin, crlfDelay: Infinity });
  // Sequential processing keeps responses in request order.
  let chain: Promise<void> = Promise.resolve();
  rl.on("line", (line) => {
    chain = chain.then(() => handleLine(detector, line));
  });
  await new Promise<void>((resolve) => rl.on("close", resolve));
  await chain;
  await detector.close?.();
}

async function main(): Promise<void> {
  let detector: BridgeDetector;
  try {
    const config = parseArgs(process.argv.slice(2));
    detector = config.mock
      ? new MockDetector(config.mock)
      : await createModelDetector(config.model!, config.classesFile,
                                  config.confidenceFloor);
  } catch (e) {
    console.error(`incx-bridge: ${(e as Error).message}`);
    process.exit(1);
  }
  await serve(detector);
}

const invokedDirectly = process.argv[1] !== undefined &&
  import.meta.url === pathToFileURL(process.argv[1]).href;
if (invokedDirectly) {
  main().catch((e) => {
    console.error(`incx-bridge: ${(e as Error).message}`);
    process.exit(1);
  });
}
