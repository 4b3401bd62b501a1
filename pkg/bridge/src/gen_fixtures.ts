/**
 * Records the golden transcript: builds the mock script, spawns the real
 * server over it, drives a fixed request sequence and pins the exact
 * response bytes. Run once via `npm run gen-fixtures`; the output is
 * committed and replayed by the test suite.
 */

import { spawn } from "node:child_process";
import { createHash } from "node:crypto";
import { mkdirSync, writeFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { createInterface } from "node:readline";

const here = dirname(fileURLToPath(import.meta.url));
const fixturesDir = join(here, "..", "fixtures");

function patternImage(width: number, height: number, seed: number): Buffer {
  const data = Buffer.alloc(width * height * 3);
  let state = seed >>> 0;
  for (let i = 0; i < data.length; i++) {
    state = (state * 1664525 + 1013904223) >>> 0;
    data[i] = state % 256;
  }
  return data;
}

function detectRequest(id: number, width: number, height: number, data: Buffer): string {
  return JSON.stringify({
    type: "detect",
    id,
    image: { w: width, h: height, b64: data.toString("base64") },
  });
}

async function main(): Promise<void> {
  mkdirSync(fixturesDir, { recursive: true });

  const imgA = patternImage(4, 4, 1);
  const imgB = patternImage(4, 4, 2);
  const imgC = patternImage(6, 3, 3);
  const unknown = patternImage(4, 4, 99);
  const digest = (buf: Buffer) => createHash("sha256").update(buf).digest("hex");

  const script = {
    classes: ["car", "person", "sign", "cyclist"],
    responses: {
      [digest(imgA)]: [
        { bbox: [0.5, 1, 3.25, 3.75], objectness: 0.875, probs: [0.7, 0.1, 0.15, 0.05] },
      ],
      [digest(imgB)]: [
        { bbox: [0, 0, 2, 2], objectness: 0.5, probs: [0.05, 0.8, 0.1, 0.05] },
        { bbox: [1, 1, 4, 4], objectness: 0.9375, probs: [0.25, 0.25, 0.25, 0.25] },
      ],
      [digest(imgC)]: [],
    },
  };
  const scriptPath = join(fixturesDir, "mock_script.json");
  writeFileSync(scriptPath, JSON.stringify(script, null, 2) + "\n");

  const requests = [
    JSON.stringify({ type: "hello", version: 1 }),
    detectRequest(0, 4, 4, imgA),
    detectRequest(1, 4, 4, imgB),
    detectRequest(2, 6, 3, imgC),
    detectRequest(3, 4, 4, unknown),      // unscripted digest -> empty items
    "this is not json",                    // malformed -> error id -1
    JSON.stringify({ type: "nonsense", id: 9 }),
    JSON.stringify({ type: "detect", id: 4,
                     image: { w: 4, h: 4, b64: "AAAA" } }), // bad length
    detectRequest(5, 4, 4, imgA),          // same image, identical response
    JSON.stringify({ type: "hello", version: 1 }),
  ];

  const server = spawn("node", [join(here, "server.js"), "--mock", scriptPath],
                       { stdio: ["pipe", "pipe", "inherit"] });
  const lines = createInterface({ input: server.stdout });
  const responses: string[] = [];
  const done = new Promise<void>((resolve) => {
    lines.on("line", (line) => {
      responses.push(line);
      if (responses.length === requests.length) {
        resolve();
      }
    });
  });
  for (const request of requests) {
    server.stdin.write(request + "\n");
  }
  await done;
  server.stdin.end();

  const transcript = requests.map((send, i) => ({ send, expect: responses[i] }));
  writeFileSync(join(fixturesDir, "golden_transcript.json"),
                JSON.stringify(transcript, null, 2) + "\n");
  console.log(`wrote ${requests.length} request/response pairs`);
}

main().catch((e) => {
  console.error(e);
  process.exit(1);
});
