import { createHash } from "node:crypto";
import { readFileSync } from "node:fs";

import type { BridgeDetector } from "./detector.js";
import type { DecodedImage, DetectionItem } from "./protocol.js";

interface MockScript {
  classes: string[];
  responses: Record<string, DetectionItem[]>;
}

export function imageDigest(image: DecodedImage): string {
  return createHash("sha256").update(image.data).digest("hex");
}

function validateItems(digest: string, items: unknown): DetectionItem[] {
  if (!Array.isArray(items)) {
    throw new Error(`script entry ${digest} is not a list`);
  }
  return items.map((item, index) => {
    const it = item as Partial<DetectionItem>;
    if (!Array.isArray(it.bbox) || it.bbox.length !== 4 ||
        !it.bbox.every((v) => typeof v === "number" && Number.isFinite(v))) {
      throw new Error(`script entry ${digest}[${index}] has a bad bbox`);
    }
    if (typeof it.objectness !== "number" || it.objectness < 0 || it.objectness > 1) {
      throw new Error(`script entry ${digest}[${index}] has a bad objectness`);
    }
    if (!Array.isArray(it.probs) || it.probs.length === 0 ||
        !it.probs.every((v) => typeof v === "number" && v >= 0 && v <= 1)) {
      throw new Error(`script entry ${digest}[${index}] has bad probs`);
    }
    return it as DetectionItem;
  });
}

/**
 * Deterministic detector scripted by image-content digest. Images the
 * script does not know yield an empty detection list plus a warning on
 * stderr, so protocol conformance tests can run without any ML runtime.
 */
export class MockDetector implements BridgeDetector {
  classes: string[];
  private responses: Map<string, DetectionItem[]>;

  constructor(scriptPath: string) {
    let script: MockScript;
    try {
      script = JSON.parse(readFileSync(scriptPath, "utf-8")) as MockScript;
    } catch (e) {
      throw new Error(`cannot load mock script ${scriptPath}: ${(e as Error).message}`);
    }
    if (!Array.isArray(script.classes) || script.classes.length === 0 ||
        !script.classes.every((c) => typeof c === "string")) {
      throw new Error(`mock script ${scriptPath} has no class vocabulary`);
    }
    this.classes = script.classes;
    this.responses = new Map();
    for (const [digest, items] of Object.entries(script.responses ?? {})) {
      this.responses.set(digest, validateItems(digest, items));
    }
  }

  async detect(image: DecodedImage): Promise<DetectionItem[]> {
    const digest = imageDigest(image);
    const items = this.responses.get(digest);
    if (items === undefined) {
      console.error(`incx-bridge: unknown image ${digest.slice(0, 12)}…, returning no detections`);
      return [];
    }
    return items;
  }
}
