/**
 * Single-session TCP score provider.
 *
 * Serves one connection at a time (inference is the bottleneck; concurrent
 * connections are refused with an error frame). Every well-formed request
 * is answered exactly once with a same-id response; malformed-but-framed
 * requests get an error reply; frames that corrupt the stream boundary end
 * that connection and the listener simply accepts the next one.
 *
 * Usage: node dist/src/server.js --model echo --port 0 [--host 127.0.0.1]
 * Prints "listening <port>" once bound.
 */

import * as net from "net";

import { FrameReader, encodeError, encodeResponse, prod } from "./framing";
import { ScoreModel, resolveModel } from "./models";

export interface ServerOptions {
  host?: string;
  port?: number;
}

const MAX_WAITING = 8;

export class ProviderSession {
  private busy = false;
  private waiting: net.Socket[] = [];
  readonly server: net.Server;
  readonly model: ScoreModel;

  constructor(model: ScoreModel) {
    this.model = model;
    this.server = net.createServer((sock) => this.accept(sock));
  }

  listen(opts: ServerOptions = {}): Promise<number> {
    return new Promise((resolve, reject) => {
      this.server.once("error", reject);
      this.server.listen(opts.port ?? 0, opts.host ?? "127.0.0.1", () => {
        const addr = this.server.address() as net.AddressInfo;
        resolve(addr.port);
      });
    });
  }

  close(): Promise<void> {
    return new Promise((resolve) => this.server.close(() => resolve()));
  }

  private accept(sock: net.Socket): void {
    if (this.busy) {
      // single session: brief close races queue up, sustained concurrency
      // is refused
      if (this.waiting.length >= MAX_WAITING) {
        sock.end(encodeError(null, "busy: single-session provider"));
        return;
      }
      sock.pause();
      sock.on("error", () => {});
      this.waiting.push(sock);
      return;
    }
    this.serve(sock);
  }

  private serve(sock: net.Socket): void {
    this.busy = true;
    const reader = new FrameReader();
    let queue: Promise<void> = Promise.resolve();

    const fail = (id: number | string | null, message: string, fatal: boolean) => {
      try {
        sock.write(encodeError(id, message));
      } catch {
        /* peer already gone */
      }
      if (fatal) sock.end();
    };

    sock.on("data", (chunk) => {
      let frames;
      try {
        frames = reader.push(chunk);
      } catch (e) {
        // stream boundary lost; report and drop this connection
        fail(null, `malformed frame: ${(e as Error).message}`, true);
        return;
      }
      for (const { header, payload } of frames) {
        // serialized handling: inference for one request finishes before the
        // next is evaluated
        queue = queue.then(() => this.handle(sock, header, payload));
      }
    });
    sock.on("error", () => {
      /* reset by peer during fuzzing is expected */
    });
    sock.on("close", () => {
      this.busy = false;
      const next = this.waiting.shift();
      if (next !== undefined && !next.destroyed) {
        next.resume();
        this.serve(next);
      }
    });
  }

  private async handle(sock: net.Socket, header: Record<string, unknown>, payload: Buffer): Promise<void> {
    const id = (header.id as number | string | null) ?? null;
    if (header.role !== "score_request") {
      sock.write(encodeError(id, `unexpected role ${JSON.stringify(header.role)}`));
      return;
    }
    try {
      const shape = (header.shape as number[]).map(Number);
      const nsmShape = (header.nsm_shape as number[]).map(Number);
      const nz = prod(shape);
      const z = new Float32Array(nz);
      const nsm = new Float32Array(prod(nsmShape));
      for (let i = 0; i < z.length; i++) z[i] = payload.readFloatLE(4 * i);
      for (let i = 0; i < nsm.length; i++) nsm[i] = payload.readFloatLE(4 * (nz + i));
      const eps = await this.model.predict({
        z,
        shape,
        tau: Number(header.tau ?? 1),
        nsm,
        nsmShape,
        prompt: String(header.prompt ?? ""),
      });
      if (eps.length !== z.length) {
        throw new Error("model changed the payload shape");
      }
      sock.write(encodeResponse(id, shape, eps));
    } catch (e) {
      sock.write(encodeError(id, `provider failure: ${(e as Error).message}`));
    }
  }
}

export async function main(argv: string[]): Promise<void> {
  let model = "echo";
  let port = 0;
  let host = "127.0.0.1";
  for (let i = 0; i < argv.length; i++) {
    if (argv[i] === "--model") model = argv[++i];
    else if (argv[i] === "--port") port = Number(argv[++i]);
    else if (argv[i] === "--host") host = argv[++i];
    else throw new Error(`unknown flag ${argv[i]}`);
  }
  const session = new ProviderSession(await resolveModel(model));
  const bound = await session.listen({ host, port });
  console.log(`listening ${bound}`);
  console.log(
    `model ${session.model.name} capabilities ${JSON.stringify(session.model.capabilities)}`
  );
}

if (require.main === module) {
  main(process.argv.slice(2)).catch((e) => {
    console.error(String(e));
    process.exit(1);
  });
}
