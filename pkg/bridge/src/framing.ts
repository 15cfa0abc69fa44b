/**
 * Wire framing for score requests/responses.
 *
 * Frame layout: [4 bytes uint32 LE: JSON header length][UTF-8 JSON header]
 * [raw float32 LE payload]. The payload length is implied by the header's
 * `shape` and `nsm_shape` fields: 4 * (prod(shape) + prod(nsm_shape)) bytes
 * for requests, 4 * prod(shape) for responses. Error replies carry no
 * payload.
 */

export const HEADER_CAP = 1 << 20;
export const PAYLOAD_CAP = 1 << 28;

export interface RequestHeader {
  id: number | string | null;
  role: "score_request";
  tau: number;
  shape: number[];
  nsm_shape: number[];
  prompt?: string;
}

export interface ResponseHeader {
  id: number | string | null;
  role: "score_response";
  shape: number[];
  nsm_shape: number[];
}

export interface ErrorHeader {
  id: number | string | null;
  role: "error";
  message: string;
}

export function prod(dims: number[]): number {
  return dims.reduce((a, b) => a * b, 1);
}

function checkedProd(dims: unknown, what: string): number {
  if (!Array.isArray(dims)) {
    throw new Error(`header is missing ${what}`);
  }
  const nums = dims.map(Number);
  if (nums.some((d) => !Number.isInteger(d) || d <= 0)) {
    throw new Error("shape dimensions must be positive integers");
  }
  return prod(nums);
}

/** Payload size implied by a header, by role: requests carry z plus the
 * state map, responses carry the score, error frames carry nothing. */
export function payloadBytes(header: { role?: unknown; shape?: unknown; nsm_shape?: unknown }): number {
  let n: number;
  if (header.role === "score_response") {
    n = 4 * checkedProd(header.shape, "shape");
  } else if (header.role === "error") {
    n = 0;
  } else {
    n = 4 * (checkedProd(header.shape, "shape") + checkedProd(header.nsm_shape, "nsm_shape"));
  }
  if (n > PAYLOAD_CAP) {
    throw new Error(`payload of ${n} bytes exceeds the cap`);
  }
  return n;
}

export function encodeFrame(header: object, payload: Buffer = Buffer.alloc(0)): Buffer {
  const hb = Buffer.from(JSON.stringify(header), "utf-8");
  const len = Buffer.alloc(4);
  len.writeUInt32LE(hb.length, 0);
  return Buffer.concat([len, hb, payload]);
}

export function encodeError(id: number | string | null, message: string): Buffer {
  return encodeFrame({ id, role: "error", message });
}

export function encodeResponse(id: number | string | null, shape: number[], eps: Float32Array): Buffer {
  const payload = Buffer.from(eps.buffer, eps.byteOffset, eps.byteLength);
  return encodeFrame({ id, role: "score_response", shape, nsm_shape: [0] }, payload);
}

/**
 * Incremental frame parser. Feed raw socket chunks; complete frames come
 * back as (header, payload) pairs. A header that cannot be parsed poisons
 * the stream (the payload boundary is unrecoverable), which the caller
 * handles by dropping the connection.
 */
export class FrameReader {
  private buf: Buffer = Buffer.alloc(0);
  private pendingHeader: { id: number | string | null; body: Record<string, unknown>; need: number } | null = null;

  push(chunk: Buffer): Array<{ header: Record<string, unknown>; payload: Buffer }> {
    this.buf = Buffer.concat([this.buf, chunk]);
    const frames: Array<{ header: Record<string, unknown>; payload: Buffer }> = [];
    for (;;) {
      if (this.pendingHeader === null) {
        if (this.buf.length < 4) break;
        const hlen = this.buf.readUInt32LE(0);
        if (hlen === 0 || hlen > HEADER_CAP) {
          throw new Error(`header length ${hlen} out of range`);
        }
        if (this.buf.length < 4 + hlen) break;
        const raw = this.buf.subarray(4, 4 + hlen).toString("utf-8");
        this.buf = this.buf.subarray(4 + hlen);
        let body: Record<string, unknown>;
        try {
          body = JSON.parse(raw);
        } catch (e) {
          throw new Error(`unparseable header: ${e}`);
        }
        if (typeof body !== "object" || body === null) {
          throw new Error("header must be a JSON object");
        }
        const need = payloadBytes(body); // throws when shapes are unusable
        this.pendingHeader = { id: (body.id as number | string | null) ?? null, body, need };
      }
      if (this.buf.length < this.pendingHeader.need) break;
      const payload = this.buf.subarray(0, this.pendingHeader.need);
      this.buf = this.buf.subarray(this.pendingHeader.need);
      frames.push({ header: this.pendingHeader.body, payload: Buffer.from(payload) });
      this.pendingHeader = null;
    }
    return frames;
  }
}
