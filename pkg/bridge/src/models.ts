/**
 * Model backends for noise prediction.
 *
 * `echo` predicts zero noise and exists so the transport can be exercised
 * without any model weights. `onnx:<path>` wires a real text-to-image
 * denoiser through onnxruntime when that package and a local model file
 * are available; without a trained conditioning adapter the state-map grid
 * is ignored and the session advertises itself as unconditioned.
 */

export interface ScoreQuery {
  z: Float32Array;
  shape: number[];
  tau: number;
  nsm: Float32Array;
  nsmShape: number[];
  prompt: string;
}

export interface ScoreModel {
  name: string;
  capabilities: { conditioned: boolean; [k: string]: unknown };
  predict(q: ScoreQuery): Promise<Float32Array>;
}

class EchoModel implements ScoreModel {
  name = "echo";
  capabilities = { conditioned: false, echo: true };

  async predict(q: ScoreQuery): Promise<Float32Array> {
    return new Float32Array(q.z.length);
  }
}

class OnnxModel implements ScoreModel {
  name: string;
  capabilities = { conditioned: false, backend: "onnxruntime" };
  private session: unknown;

  private constructor(name: string, session: unknown) {
    this.name = name;
    this.session = session;
  }

  static async load(path: string): Promise<OnnxModel> {
    let ort: any;
    try {
      ort = require("onnxruntime-node");
    } catch {
      throw new Error(
        "model spec requires onnxruntime-node; install it or use --model echo"
      );
    }
    const session = await ort.InferenceSession.create(path);
    return new OnnxModel(`onnx:${path}`, session);
  }

  async predict(q: ScoreQuery): Promise<Float32Array> {
    const ort = require("onnxruntime-node");
    const session = this.session as { run: (feeds: Record<string, unknown>) => Promise<Record<string, { data: Float32Array }>> };
    const feeds: Record<string, unknown> = {
      sample: new ort.Tensor("float32", q.z, [1, q.shape[2], q.shape[0], q.shape[1]]),
      timestep: new ort.Tensor("int64", BigInt64Array.from([BigInt(q.tau)]), [1]),
    };
    const out = await session.run(feeds);
    const first = Object.values(out)[0];
    return Float32Array.from(first.data.slice(0, q.z.length));
  }
}

export async function resolveModel(spec: string): Promise<ScoreModel> {
  if (spec === "echo") {
    return new EchoModel();
  }
  if (spec.startsWith("onnx:")) {
    return OnnxModel.load(spec.slice(5));
  }
  throw new Error(`unknown model spec ${JSON.stringify(spec)} (use echo or onnx:PATH)`);
}
