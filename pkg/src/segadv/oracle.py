"""Wire protocol for driving the attack against an out-of-process model.

Protocol sgv-oracle/1: newline-delimited JSON over stdio or TCP. Ops are
"meta", "predict" and "grad"; tensors travel as base64 of raw
little-endian bytes with explicit shape and dtype ("f32" for pixels and
gradients, "u8" for labels), so float round trips are lossless. Every
request carries a client-chosen id that the response echoes; malformed
JSON is answered with id null.

The module also ships a reference linear per-pixel model with a
closed-form gradient, used to validate any responder implementation, and
a loopback transport that runs a responder in process while still
exercising the full encode/decode path.
"""

import base64
import binascii
import json
import shlex
import socket
import subprocess

import numpy as np

from .errors import (
    LabelRangeError,
    OracleConnectionError,
    OracleProtocolError,
    ShapeError,
)

PROTOCOL_VERSION = "sgv-oracle/1"

_DTYPES = {"f32": np.dtype("<f4"), "u8": np.dtype("u1")}


def encode_tensor(arr, dtype):
    if dtype not in _DTYPES:
        raise OracleProtocolError(f"unknown wire dtype {dtype!r}")
    raw = np.ascontiguousarray(arr, dtype=_DTYPES[dtype]).tobytes()
    return {
        "dtype": dtype,
        "shape": [int(s) for s in arr.shape],
        "data": base64.b64encode(raw).decode("ascii"),
    }


def decode_tensor(obj):
    if not isinstance(obj, dict):
        raise OracleProtocolError("tensor must be an object")
    dtype = obj.get("dtype")
    shape = obj.get("shape")
    data = obj.get("data")
    if dtype not in _DTYPES:
        raise OracleProtocolError(f"unknown wire dtype {dtype!r}")
    if not isinstance(shape, list) or not all(isinstance(s, int) and s > 0 for s in shape):
        raise OracleProtocolError(f"bad tensor shape {shape!r}")
    if not isinstance(data, str):
        raise OracleProtocolError("tensor data must be a base64 string")
    try:
        raw = base64.b64decode(data, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise OracleProtocolError(f"invalid base64 tensor data: {exc}") from exc
    dt = _DTYPES[dtype]
    count = int(np.prod(shape))
    if len(raw) != count * dt.itemsize:
        raise OracleProtocolError(
            f"tensor data length {len(raw)} does not match shape {shape} ({dtype})"
        )
    return np.frombuffer(raw, dtype=dt).reshape(shape).copy()


# Reference linear model: logits[k] = sum_ch W[k][ch] * (pixel[ch]/255) + b[k].
# The same constants are hard-coded in every responder implementation.
LINEAR_WEIGHTS = np.array([
    [0.9, -0.2, 0.1],
    [-0.4, 0.8, -0.3],
    [0.2, 0.5, 0.7],
    [-0.6, -0.1, 0.4],
    [0.3, -0.7, -0.5],
], dtype=np.float64)
LINEAR_BIAS = np.array([0.05, -0.1, 0.0, 0.15, -0.05], dtype=np.float64)


class ReferenceLinearModel:
    """Per-pixel linear classifier with closed-form loss gradient.

    Internals run in float64; the returned gradient is cast to float32 so
    in-process use and the f32 wire encoding agree bitwise.
    """

    num_classes = 5
    input_range = (0.0, 255.0)

    def _logits(self, image):
        if image.ndim != 3 or image.shape[0] != 3:
            raise ShapeError(f"image must be (3,H,W), got {image.shape}")
        xn = image.astype(np.float64) / 255.0
        return np.tensordot(LINEAR_WEIGHTS, xn, axes=([1], [0])) + LINEAR_BIAS[:, None, None]

    def predict(self, image):
        return np.argmax(self._logits(image), axis=0)

    def loss_and_input_grad(self, image, target):
        logits = self._logits(image)
        k, h, w = logits.shape
        target = np.asarray(target)
        if target.shape != (h, w):
            raise ShapeError(f"target shape {target.shape}, expected {(h, w)}")
        if target.min() < 0 or target.max() >= k:
            raise LabelRangeError(f"target labels outside [0,{k})")
        shifted = logits - logits.max(axis=0, keepdims=True)
        exp = np.exp(shifted)
        p = exp / exp.sum(axis=0, keepdims=True)
        rows, cols = np.indices((h, w))
        n = h * w
        loss = float(-np.log(p[target, rows, cols]).sum() / n)
        delta = p.copy()
        delta[target, rows, cols] -= 1.0
        grad = np.tensordot(LINEAR_WEIGHTS.T, delta, axes=([1], [0])) / (n * 255.0)
        return loss, grad.astype(np.float32)


class Responder:
    """Answers protocol requests against any DifferentiableModel.

    Never raises on bad input: every failure becomes an error response, so
    a serving loop survives malformed traffic.
    """

    def __init__(self, model, input_range=(0.0, 255.0)):
        self.model = model
        self.input_range = input_range

    def handle_line(self, line):
        try:
            req = json.loads(line)
        except json.JSONDecodeError as exc:
            return json.dumps({"id": None, "ok": False,
                               "error": {"code": "bad_json", "message": str(exc)}})
        req_id = req.get("id") if isinstance(req, dict) else None
        try:
            if not isinstance(req, dict):
                raise OracleProtocolError("request must be a JSON object")
            op = req.get("op")
            if op == "meta":
                resp = {
                    "id": req_id, "ok": True,
                    "version": PROTOCOL_VERSION,
                    "classes": int(self.model.num_classes),
                    "input_range": list(self.input_range),
                }
            elif op == "predict":
                image = decode_tensor(req.get("image"))
                labels = self.model.predict(image)
                resp = {"id": req_id, "ok": True,
                        "labels": encode_tensor(labels, "u8")}
            elif op == "grad":
                image = decode_tensor(req.get("image"))
                target = decode_tensor(req.get("target")).astype(np.int64)
                loss, grad = self.model.loss_and_input_grad(image, target)
                resp = {"id": req_id, "ok": True, "loss": loss,
                        "grad": encode_tensor(grad, "f32")}
            else:
                raise OracleProtocolError(f"unknown op {op!r}")
        except (OracleProtocolError, ShapeError, LabelRangeError) as exc:
            resp = {"id": req_id, "ok": False,
                    "error": {"code": type(exc).__name__, "message": str(exc)}}
        return json.dumps(resp)


class LoopbackTransport:
    """In-process transport that still serializes every message."""

    def __init__(self, responder):
        self.responder = responder

    def request(self, line):
        return self.responder.handle_line(line)

    def close(self):
        pass


class TcpTransport:
    def __init__(self, host, port, timeout=30.0):
        try:
            self.sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise OracleConnectionError(f"cannot connect to {host}:{port}: {exc}") from exc
        self.reader = self.sock.makefile("r", encoding="utf-8")

    def request(self, line):
        try:
            self.sock.sendall((line + "\n").encode("utf-8"))
            resp = self.reader.readline()
        except OSError as exc:
            raise OracleConnectionError(f"oracle connection lost: {exc}") from exc
        if not resp:
            raise OracleConnectionError("oracle closed the connection")
        return resp.rstrip("\n")

    def close(self):
        self.reader.close()
        self.sock.close()


class StdioTransport:
    """Spawns a responder subprocess and speaks NDJSON over its stdio."""

    def __init__(self, command):
        try:
            self.proc = subprocess.Popen(
                shlex.split(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise OracleConnectionError(f"cannot start oracle {command!r}: {exc}") from exc

    def request(self, line):
        if self.proc.poll() is not None:
            raise OracleConnectionError("oracle process has exited")
        try:
            self.proc.stdin.write(line + "\n")
            self.proc.stdin.flush()
            resp = self.proc.stdout.readline()
        except OSError as exc:
            raise OracleConnectionError(f"oracle pipe broken: {exc}") from exc
        if not resp:
            raise OracleConnectionError("oracle produced no response")
        return resp.rstrip("\n")

    def close(self):
        if self.proc.poll() is None:
            self.proc.terminate()
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()


def open_transport(endpoint):
    """Parse an endpoint spec: tcp:HOST:PORT or stdio:CMD."""
    if endpoint.startswith("tcp:"):
        rest = endpoint[4:]
        host, sep, port = rest.rpartition(":")
        if not sep or not port.isdigit():
            raise ValueError(f"bad tcp endpoint {endpoint!r}, expected tcp:HOST:PORT")
        return TcpTransport(host, int(port))
    if endpoint.startswith("stdio:"):
        return StdioTransport(endpoint[6:])
    raise ValueError(f"unknown oracle endpoint {endpoint!r}")


class RemoteModel:
    """DifferentiableModel backed by a responder across a transport."""

    def __init__(self, transport):
        self.transport = transport
        self._next_id = 0
        meta = self._call({"op": "meta"})
        if meta.get("version") != PROTOCOL_VERSION:
            raise OracleProtocolError(
                f"oracle speaks {meta.get('version')!r}, expected {PROTOCOL_VERSION!r}"
            )
        self.num_classes = int(meta["classes"])
        self.input_range = tuple(meta.get("input_range", (0.0, 255.0)))

    def _call(self, payload):
        self._next_id += 1
        req_id = self._next_id
        payload = dict(payload, id=req_id)
        resp_line = self.transport.request(json.dumps(payload))
        try:
            resp = json.loads(resp_line)
        except json.JSONDecodeError as exc:
            raise OracleProtocolError(f"oracle sent invalid JSON: {exc}") from exc
        if resp.get("id") != req_id:
            raise OracleProtocolError(
                f"oracle echoed id {resp.get('id')!r}, expected {req_id}"
            )
        if not resp.get("ok"):
            err = resp.get("error") or {}
            raise OracleProtocolError(
                f"oracle error {err.get('code')}: {err.get('message')}"
            )
        return resp

    def predict(self, image):
        resp = self._call({"op": "predict",
                           "image": encode_tensor(image, "f32")})
        return decode_tensor(resp["labels"]).astype(np.int64)

    def loss_and_input_grad(self, image, target):
        resp = self._call({
            "op": "grad",
            "image": encode_tensor(image, "f32"),
            "target": encode_tensor(np.asarray(target), "u8"),
        })
        grad = decode_tensor(resp["grad"])
        if list(grad.shape) != list(image.shape):
            raise OracleProtocolError(
                f"oracle grad shape {grad.shape} != image shape {image.shape}"
            )
        return float(resp["loss"]), grad

    def close(self):
        self.transport.close()


def serve_stdio(model, stdin, stdout):
    """Blocking NDJSON serving loop over file objects (used for testing the
    Python-side responder; the production external responder lives in the
    frontend package)."""
    responder = Responder(model)
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        stdout.write(responder.handle_line(line) + "\n")
        stdout.flush()
