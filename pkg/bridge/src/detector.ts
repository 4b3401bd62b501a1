import type { DecodedImage, DetectionItem } from "./protocol.js";

/** What the server needs from any detector backend. */
export interface BridgeDetector {
  classes: string[];
  detect(image: DecodedImage): Promise<DetectionItem[]>;
  close?(): Promise<void>;
}

export interface BridgeConfig {
  mock?: string;        // path to a mock script file
  model?: string;       // path/identifier of a detection model
  classesFile?: string; // class vocabulary for model mode
  confidenceFloor: number;
}

export function parseArgs(argv: string[]): BridgeConfig {
  const config: BridgeConfig = { confidenceFloor: 0.25 };
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    const next = () => {
      if (i + 1 >= argv.length) {
        throw new Error(`missing value for ${arg}`);
      }
      return argv[++i];
    };
    switch (arg) {
      case "--mock":
        config.mock = next();
        break;
      case "--model":
        config.model = next();
        break;
      case "--classes":
        config.classesFile = next();
        break;
      case "--conf": {
        const value = Number(next());
        if (!(value >= 0 && value <= 1)) {
          throw new Error(`--conf must be in [0, 1], got ${value}`);
        }
        config.confidenceFloor = value;
        break;
      }
      default:
        throw new Error(`unknown argument ${arg}`);
    }
  }
  if (!config.mock && !config.model) {
    throw new Error("one of --mock SCRIPT or --model NAME is required");
  }
  if (config.mock && config.model) {
    throw new Error("--mock and --model are mutually exclusive");
  }
  return config;
}
