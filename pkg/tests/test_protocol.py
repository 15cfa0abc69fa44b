import json
import socket
import struct
import subprocess
from pathlib import Path

import numpy as np
import pytest

from intrinsics4d.distill import (
    EchoProvider,
    ProviderError,
    ProviderServer,
    ProviderTimeout,
    RemoteScoreProvider,
    ScoreRequest,
    encode_request,
    run_conformance,
)
from intrinsics4d.distill.protocol import _payload_bytes


def test_frame_encoding_layout():
    rng = np.random.default_rng(0)
    z = rng.random((4, 5, 3))
    nsm = rng.random((2, 2, 3))
    req = ScoreRequest(z_tau=z, tau=17, nsm=nsm, prompt="hello", request_id=9)
    frame = encode_request(req)
    (hlen,) = struct.unpack_from("<I", frame, 0)
    header = json.loads(frame[4 : 4 + hlen])
    assert header["role"] == "score_request"
    assert header["id"] == 9 and header["tau"] == 17
    assert header["shape"] == [4, 5, 3] and header["nsm_shape"] == [2, 2, 3]
    payload = frame[4 + hlen :]
    assert len(payload) == 4 * (4 * 5 * 3 + 2 * 2 * 3)
    back = np.frombuffer(payload[: 4 * 60], dtype="<f4").reshape(4, 5, 3)
    assert np.allclose(back, z, atol=1e-7)
    assert _payload_bytes(header) == len(payload)


def test_roundtrip_against_echo_server():
    server = ProviderServer(EchoProvider()).start()
    try:
        addr = f"{server.address[0]}:{server.address[1]}"
        client = RemoteScoreProvider(addr, timeout=5.0)
        rng = np.random.default_rng(1)
        req = ScoreRequest(z_tau=rng.random((6, 6, 3)), tau=3, nsm=rng.random((2, 2, 3)), request_id=1)
        out = client(req)
        assert out.shape == (6, 6, 3)
        assert np.all(out == 0.0)  # echo predicts zero noise
        # payload byte count was exactly 4*H*W*C both ways
        client.close()
    finally:
        server.stop()


def test_remote_provider_timeout_is_reported():
    # a listener that accepts but never answers
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.bind(("127.0.0.1", 0))
    sock.listen(1)
    host, port = sock.getsockname()
    try:
        client = RemoteScoreProvider(f"{host}:{port}", timeout=0.3)
        req = ScoreRequest(z_tau=np.zeros((2, 2, 3)), tau=1, nsm=np.zeros((1, 1, 1)))
        with pytest.raises(ProviderTimeout):
            client(req)
    finally:
        sock.close()


def test_remote_provider_surfaces_error_frames():
    class Failing:
        def __call__(self, req):
            raise RuntimeError("synthetic model failure")

    server = ProviderServer(Failing()).start()
    try:
        addr = f"{server.address[0]}:{server.address[1]}"
        client = RemoteScoreProvider(addr, timeout=5.0)
        req = ScoreRequest(z_tau=np.zeros((2, 2, 3)), tau=1, nsm=np.zeros((1, 1, 1)))
        with pytest.raises(ProviderError, match="model failure"):
            client(req)
        client.close()
        # the session survives a provider failure
        client2 = RemoteScoreProvider(addr, timeout=5.0)
        with pytest.raises(ProviderError):
            client2(req)
        client2.close()
    finally:
        server.stop()


def test_conformance_in_process_echo():
    report = run_conformance(EchoProvider(), n_frames=100, seed=3)
    assert report["ok"]
    assert report["answered"] == 100
    assert report["duplicates"] == []


def test_conformance_rejects_shape_violating_provider():
    class WrongShape:
        def __call__(self, req):
            return np.zeros((1, 1, 3))

    with pytest.raises(AssertionError):
        run_conformance(WrongShape(), n_frames=4, seed=0)


# --- optional integration with the TypeScript bridge -------------------------

BRIDGE_DIR = Path(__file__).resolve().parents[1] / "bridge"


@pytest.mark.skipif(
    not (BRIDGE_DIR / "dist" / "src" / "server.js").exists(), reason="bridge not built"
)
def test_bridge_echo_conformance_over_socket():
    proc = subprocess.Popen(
        ["node", str(BRIDGE_DIR / "dist" / "src" / "server.js"), "--model", "echo", "--port", "0"],
        stdout=subprocess.PIPE,
        stderr=subprocess.STDOUT,
        text=True,
    )
    try:
        line = proc.stdout.readline()
        # the server announces "listening <port>" once bound
        port = int(line.strip().split()[-1])
        report = run_conformance(f"127.0.0.1:{port}", n_frames=100, seed=5)
        assert report["ok"] and report["answered"] == 100
    finally:
        proc.terminate()
        proc.wait(timeout=10)
