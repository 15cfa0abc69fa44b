"""Score-provider wire protocol and conformance harness.

Frame layout: 4-byte little-endian header length, UTF-8 JSON header, then a
raw float32 little-endian payload whose size follows from the header's
``shape`` and ``nsm_shape`` fields. Requests carry z_tau followed by the
state-map grid; responses mirror the header with role ``score_response``
and carry the predicted noise. Error replies use role ``error`` and no
payload.

A provider served over this protocol answers every well-formed request id
exactly once and survives arbitrary garbage: frames that corrupt the
stream boundary terminate that connection (the next connection starts
clean), frames with readable headers get an error reply in place.
"""

from __future__ import annotations

import json
import socket
import struct
import threading

import numpy as np

from ..tape import DTYPE
from .providers import ProviderError, ProviderTimeout, ScoreRequest

HEADER_CAP = 1 << 20
PAYLOAD_CAP = 1 << 28


def _payload_bytes(header: dict) -> int:
    shape = [int(x) for x in header["shape"]]
    nshape = [int(x) for x in header["nsm_shape"]]
    if any(d <= 0 for d in shape + nshape):
        raise ValueError("non-positive dimension")
    n = 4 * (int(np.prod(shape)) + int(np.prod(nshape)))
    if n > PAYLOAD_CAP:
        raise ValueError("payload too large")
    return n


def encode_request(req: ScoreRequest) -> bytes:
    z = np.ascontiguousarray(req.z_tau, dtype="<f4")
    nsm = np.ascontiguousarray(req.nsm, dtype="<f4")
    header = {
        "id": req.request_id,
        "role": "score_request",
        "tau": int(req.tau),
        "shape": list(z.shape),
        "nsm_shape": list(nsm.shape),
        "prompt": req.prompt,
    }
    hb = json.dumps(header).encode("utf-8")
    return struct.pack("<I", len(hb)) + hb + z.tobytes() + nsm.tobytes()


def encode_response(request_id, eps: np.ndarray) -> bytes:
    eps = np.ascontiguousarray(eps, dtype="<f4")
    header = {"id": request_id, "role": "score_response", "shape": list(eps.shape), "nsm_shape": [0]}
    hb = json.dumps(header).encode("utf-8")
    return struct.pack("<I", len(hb)) + hb + eps.tobytes()


def encode_error(request_id, message: str) -> bytes:
    header = {"id": request_id, "role": "error", "message": message}
    hb = json.dumps(header).encode("utf-8")
    return struct.pack("<I", len(hb)) + hb


def _read_exact(sock: socket.socket, n: int) -> bytes | None:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            return None
        buf += chunk
    return buf


def _read_header(sock: socket.socket):
    raw = _read_exact(sock, 4)
    if raw is None:
        return None
    (hlen,) = struct.unpack("<I", raw)
    if hlen == 0 or hlen > HEADER_CAP:
        raise ValueError(f"header length {hlen} out of range")
    hb = _read_exact(sock, hlen)
    if hb is None:
        return None
    return json.loads(hb.decode("utf-8"))


def handle_connection(conn: socket.socket, provider) -> int:
    """Serve one connection until EOF or an unrecoverable framing error.

    Returns the number of requests answered.
    """
    answered = 0
    while True:
        try:
            header = _read_header(conn)
        except (ValueError, json.JSONDecodeError, UnicodeDecodeError) as e:
            # stream boundary is lost: report and drop the connection
            try:
                conn.sendall(encode_error(None, f"malformed header: {e}"))
            except OSError:
                pass
            return answered
        if header is None:
            return answered
        if not isinstance(header, dict):
            try:
                conn.sendall(encode_error(None, "header must be a JSON object"))
            except OSError:
                pass
            return answered
        rid = header.get("id")
        try:
            nbytes = _payload_bytes(header)
        except Exception as e:
            try:
                conn.sendall(encode_error(rid, f"bad shape fields: {e}"))
            except OSError:
                pass
            return answered
        payload = _read_exact(conn, nbytes)
        if payload is None:
            return answered
        if header.get("role") != "score_request":
            conn.sendall(encode_error(rid, "expected role score_request"))
            continue
        try:
            shape = tuple(int(x) for x in header["shape"])
            nshape = tuple(int(x) for x in header["nsm_shape"])
            nz = 4 * int(np.prod(shape))
            z = np.frombuffer(payload[:nz], dtype="<f4").reshape(shape).astype(DTYPE)
            nsm = np.frombuffer(payload[nz:], dtype="<f4").reshape(nshape).astype(DTYPE)
            req = ScoreRequest(
                z_tau=z,
                tau=int(header.get("tau", 1)),
                nsm=nsm,
                prompt=str(header.get("prompt", "")),
                request_id=rid,
            )
            eps = np.asarray(provider(req))
            if eps.shape != z.shape:
                raise ProviderError("provider changed the payload shape")
            conn.sendall(encode_response(rid, eps))
            answered += 1
        except Exception as e:
            conn.sendall(encode_error(rid, f"provider failure: {e}"))
    return answered


class ProviderServer:
    """Single-session TCP server wrapping an in-process provider."""

    def __init__(self, provider, host: str = "127.0.0.1", port: int = 0):
        self.provider = provider
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen(4)
        self.address = self._sock.getsockname()
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    def serve_forever(self):
        self._sock.settimeout(0.2)
        while not self._stop.is_set():
            try:
                conn, _ = self._sock.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            with conn:
                try:
                    handle_connection(conn, self.provider)
                except OSError:
                    pass
        self._sock.close()

    def start(self) -> "ProviderServer":
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self):
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5.0)


class RemoteScoreProvider:
    """Client side: a ScoreProvider backed by a socket endpoint.

    A missed deadline raises ProviderTimeout so the caller can skip the
    iteration rather than block the loop.
    """

    def __init__(self, address: str, timeout: float = 10.0):
        host, _, port = address.rpartition(":")
        self.host, self.port = host or "127.0.0.1", int(port)
        self.timeout = timeout
        self.capabilities = {"remote": True}
        self._sock: socket.socket | None = None

    def _connect(self) -> socket.socket:
        if self._sock is None:
            s = socket.create_connection((self.host, self.port), timeout=self.timeout)
            s.settimeout(self.timeout)
            self._sock = s
        return self._sock

    def close(self):
        if self._sock is not None:
            self._sock.close()
            self._sock = None

    def __call__(self, req: ScoreRequest) -> np.ndarray:
        try:
            sock = self._connect()
            sock.sendall(encode_request(req))
            header = _read_header(sock)
            if header is None:
                raise ProviderError("provider closed the connection")
            if header.get("role") == "error":
                raise ProviderError(f"remote error: {header.get('message')}")
            shape = tuple(int(x) for x in header["shape"])
            payload = _read_exact(sock, 4 * int(np.prod(shape)))
            if payload is None:
                raise ProviderError("provider closed mid-response")
            return np.frombuffer(payload, dtype="<f4").reshape(shape).astype(DTYPE)
        except socket.timeout as e:
            self.close()
            raise ProviderTimeout(f"provider deadline missed: {e}") from e
        except (ConnectionError, OSError) as e:
            self.close()
            raise ProviderError(f"transport failure: {e}") from e


# ---------------------------------------------------------------------------
# conformance harness


def _fuzz_frames(rng: np.random.Generator, n: int):
    """Deterministic malformed frames spanning the failure taxonomy."""
    out = []
    for i in range(n):
        kind = i % 8
        if kind == 0:
            out.append(rng.bytes(rng.integers(1, 64)))  # unframed garbage
        elif kind == 1:
            out.append(struct.pack("<I", HEADER_CAP + 1) + b"x" * 16)  # huge header
        elif kind == 2:
            out.append(struct.pack("<I", 0))  # zero-length header
        elif kind == 3:
            body = b'{"id": 1, "role": "score_request"'  # truncated JSON
            out.append(struct.pack("<I", len(body) + 8) + body)
        elif kind == 4:
            hb = json.dumps({"id": i, "role": "mystery", "shape": [2, 2, 3], "nsm_shape": [1, 1, 1]}).encode()
            out.append(struct.pack("<I", len(hb)) + hb + b"\x00" * (4 * (12 + 1)))
        elif kind == 5:
            hb = json.dumps({"id": i, "role": "score_request"}).encode()  # missing shapes
            out.append(struct.pack("<I", len(hb)) + hb)
        elif kind == 6:
            hb = json.dumps({"id": i, "role": "score_request", "shape": [4, 4, 3], "nsm_shape": [2, 2, 3], "tau": 1}).encode()
            out.append(struct.pack("<I", len(hb)) + hb + b"\x00" * 8)  # truncated payload
        else:
            hb = json.dumps({"id": i, "role": "score_request", "shape": [1 << 20, 1 << 10, 3], "nsm_shape": [1, 1, 1], "tau": 1}).encode()
            out.append(struct.pack("<I", len(hb)) + hb)  # absurd declared shape
    return out


def run_conformance(target, n_frames: int = 100, seed: int = 0, shape=(8, 8, 3), nsm_shape=(4, 4, 3), timeout: float = 10.0) -> dict:
    """Exercise a provider endpoint with fuzzed and well-formed traffic.

    ``target`` is either an in-process provider object (a loopback server is
    spun up around it) or a ``host:port`` string. Sends ``n_frames`` fuzzed
    frames, each on its own connection, interleaved with ``n_frames``
    well-formed requests; checks every well-formed id is answered exactly
    once with the full float32 payload and that the endpoint stays alive.
    """
    server = None
    if isinstance(target, str):
        address = target
    else:
        server = ProviderServer(target).start()
        address = f"{server.address[0]}:{server.address[1]}"
    host, _, port = address.rpartition(":")
    port = int(port)
    rng = np.random.default_rng(seed)
    fuzz = _fuzz_frames(rng, n_frames)
    answered: dict[int, int] = {}
    sched_tau = 1

    try:
        for i in range(n_frames):
            # fuzz on its own connection; half-close so the peer sees EOF at
            # once instead of waiting out a read. Any reply or closure is fine.
            try:
                with socket.create_connection((host, port), timeout=timeout) as s:
                    s.settimeout(0.5)
                    s.sendall(fuzz[i])
                    try:
                        s.shutdown(socket.SHUT_WR)
                        s.recv(1 << 16)
                    except (socket.timeout, OSError):
                        pass
            except OSError as e:
                raise AssertionError(f"endpoint died during fuzz frame {i}: {e}") from e

            # well-formed request, fresh connection
            rid = 1000 + i
            z = rng.standard_normal(shape)
            nsm = rng.standard_normal(nsm_shape)
            req = ScoreRequest(z_tau=z, tau=sched_tau, nsm=nsm, prompt="probe", request_id=rid)
            with socket.create_connection((host, port), timeout=timeout) as s:
                s.settimeout(timeout)
                s.sendall(encode_request(req))
                header = _read_header(s)
                if header is None or header.get("role") != "score_response":
                    raise AssertionError(f"request {rid}: no valid response ({header})")
                if header.get("id") != rid:
                    raise AssertionError(f"request {rid}: response id {header.get('id')}")
                rshape = tuple(int(x) for x in header["shape"])
                if rshape != tuple(shape):
                    raise AssertionError(f"request {rid}: shape {rshape}")
                payload = _read_exact(s, 4 * int(np.prod(rshape)))
                if payload is None or len(payload) != 4 * int(np.prod(rshape)):
                    raise AssertionError(f"request {rid}: short payload")
                answered[rid] = answered.get(rid, 0) + 1
    finally:
        if server is not None:
            server.stop()

    dupes = [k for k, v in answered.items() if v != 1]
    report = {
        "fuzz_frames": n_frames,
        "requests": n_frames,
        "answered": len(answered),
        "duplicates": dupes,
        "ok": len(answered) == n_frames and not dupes,
    }
    if not report["ok"]:
        raise AssertionError(f"conformance failed: {report}")
    return report
