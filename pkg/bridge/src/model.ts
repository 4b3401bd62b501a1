import { readFileSync } from "node:fs";
import { pathToFileURL } from "node:url";

import type { BridgeDetector } from "./detector.js";
import type { DecodedImage, DetectionItem } from "./protocol.js";

const TFJS_MODULE = "@tensorflow/tfjs";

interface DetectionGraph {
  executeAsync(input: unknown): Promise<unknown>;
}

/**
 * Wraps a TensorFlow.js detection graph model (SSD-style signature:
 * normalized [y1,x1,y2,x2] boxes, per-detection scores and class indices).
 * The tfjs runtime is loaded lazily so mock mode carries no ML dependency;
 * a missing runtime or model is a startup error.
 */
export async function createModelDetector(
  modelPath: string,
  classesFile: string | undefined,
  confidenceFloor: number,
): Promise<BridgeDetector> {
  let tf: any;
  try {
    tf = await import(TFJS_MODULE);
  } catch (e) {
    throw new Error(
      `model mode needs the optional ${TFJS_MODULE} runtime ` +
      `(npm install ${TFJS_MODULE}): ${(e as Error).message}`);
  }
  if (!classesFile) {
    throw new Error("model mode requires --classes FILE (JSON list of names)");
  }
  const classes = JSON.parse(readFileSync(classesFile, "utf-8")) as string[];
  if (!Array.isArray(classes) || classes.length === 0) {
    throw new Error(`class file ${classesFile} must hold a non-empty JSON list`);
  }
  let model: DetectionGraph;
  try {
    model = await tf.loadGraphModel(pathToFileURL(modelPath).href);
  } catch (e) {
    throw new Error(`cannot load model ${modelPath}: ${(e as Error).message}`);
  }

  return {
    classes,
    async detect(image: DecodedImage): Promise<DetectionItem[]> {
      const input = tf.tensor4d(Uint8Array.from(image.data),
                                [1, image.height, image.width, 3], "int32");
      try {
        const outputs = (await model.executeAsync(input)) as any[];
        const [boxes, scores, labels] = await Promise.all([
          outputs[0].array(), outputs[1].array(), outputs[2].array(),
        ]);
        const items: DetectionItem[] = [];
        for (let i = 0; i < scores[0].length; i++) {
          const score = scores[0][i];
          if (score < confidenceFloor) {
            continue;
          }
          const [y1, x1, y2, x2] = boxes[0][i];
          const label = Math.round(labels[0][i]);
          const probs = new Array<number>(classes.length).fill(0);
          if (label >= 0 && label < classes.length) {
            probs[label] = score;
          }
          items.push({
            bbox: [x1 * image.width, y1 * image.height,
                   x2 * image.width, y2 * image.height],
            objectness: score,
            probs,
          });
        }
        outputs.forEach((t) => t.dispose?.());
        return items;
      } finally {
        input.dispose?.();
      }
    },
  };
}
