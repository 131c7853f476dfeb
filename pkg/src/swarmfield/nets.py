"""Small numpy MLPs with hand-written backprop, Adam, soft updates and checkpoints.

Checkpoint file layout (all integers little-endian uint32, floats float64)::

    magic "SWFCKPT1"
    version
    len, layout string (utf-8)
    len, config hash (utf-8)
    len, metadata JSON (utf-8)
    tensor count
    per tensor: len, name, rank, dims..., raw float64 data
"""
from __future__ import annotations

import io
import json
import logging
import struct
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

MAGIC = b"SWFCKPT1"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


class CorruptCheckpointError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class LayoutMismatchError(CheckpointError):
    pass


class Mlp:
    """Feed-forward net: tanh hidden layers, identity or tanh output."""

    def __init__(self, weights, biases, output: str = "identity"):
        if output not in ("identity", "tanh"):
            raise ValueError(f"unknown output activation {output!r}")
        self.weights = [np.asarray(w, dtype=float) for w in weights]
        self.biases = [np.asarray(b, dtype=float) for b in biases]
        self.output = output
        for w, b in zip(self.weights, self.biases):
            if w.shape[0] != b.shape[0]:
                raise ValueError("bias length must match weight rows")
        for w0, w1 in zip(self.weights, self.weights[1:]):
            if w1.shape[1] != w0.shape[0]:
                raise ValueError("inconsistent layer shapes")

    @classmethod
    def init(cls, sizes, rng: np.random.Generator, output: str = "identity", final_scale: float = 1.0):
        weights, biases = [], []
        for k, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            bound = 1.0 / np.sqrt(n_in)
            if k == len(sizes) - 2:
                bound *= final_scale
            weights.append(rng.uniform(-bound, bound, size=(n_out, n_in)))
            biases.append(rng.uniform(-bound, bound, size=n_out))
        return cls(weights, biases, output)

    @classmethod
    def zeros(cls, sizes, output: str = "identity"):
        return cls([np.zeros((o, i)) for i, o in zip(sizes[:-1], sizes[1:])],
                   [np.zeros(o) for o in sizes[1:]], output)

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "Mlp":
        return Mlp([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.output)

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.sizes[0]:
            raise ValueError(f"input dim {x.shape[-1]} != {self.sizes[0]}")
        return x

    def forward(self, x) -> np.ndarray:
        h = self._check(x)
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.T + b
            if k < last or self.output == "tanh":
                h = np.tanh(h)
        return h

    __call__ = forward

    def forward_cache(self, x):
        h = self._check(x)
        acts = [h]
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.T + b
            if k < last or self.output == "tanh":
                h = np.tanh(h)
            acts.append(h)
        return h, acts

    def backward(self, acts, upstream):
        """Reverse pass; returns (param grads in ``params()`` order, input grad).

        Batched inputs sum their gradient contributions over the batch.
        """
        g = np.asarray(upstream, dtype=float)
        last = len(self.weights) - 1
        grads = [None] * (2 * len(self.weights))
        for k in range(last, -1, -1):
            if k < last or self.output == "tanh":
                g = g * (1.0 - acts[k + 1] ** 2)
            x = acts[k]
            if g.ndim == 1:
                grads[2 * k] = np.outer(g, x)
                grads[2 * k + 1] = g.copy()
            else:
                grads[2 * k] = g.T @ x
                grads[2 * k + 1] = g.sum(axis=0)
            g = g @ self.weights[k]
        return grads, g


def forward(net: Mlp, x) -> np.ndarray:
    return net.forward(x)


def gradients(net: Mlp, x, upstream):
    out, acts = net.forward_cache(x)
    upstream = np.asarray(upstream, dtype=float)
    if upstream.shape != out.shape:
        raise ValueError(f"upstream shape {upstream.shape} != output shape {out.shape}")
    return net.backward(acts, upstream)


@dataclass
class Adam:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    skipped: int = 0

    def step(self, net: Mlp, grads) -> bool:
        """Apply one update in place; returns False (and skips) on non-finite grads."""
        if not all(np.all(np.isfinite(g)) for g in grads):
            self.skipped += 1
            log.warning("non-finite gradient, optimizer step skipped")
            return False
        params = net.params()
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return True


def soft_update(target: Mlp, online: Mlp, zeta: float) -> Mlp:
    """In place ``target <- (1 - zeta) target + zeta online``."""
    if not 0.0 <= zeta < 1.0:
        raise ValueError("zeta must lie in [0, 1)")
    if target.sizes != online.sizes:
        raise ValueError("target/online shape mismatch")
    for t, o in zip(target.params(), online.params()):
        t *= 1.0 - zeta
        t += zeta * o
    return target


def hard_update(target: Mlp, online: Mlp) -> Mlp:
    for t, o in zip(target.params(), online.params()):
        t[...] = o
    return target


@dataclass
class Checkpoint:
    layout: str
    config_hash: str
    nets: dict
    meta: dict = field(default_factory=dict)
    version: int = FORMAT_VERSION


def _pack_str(buf, s: str):
    raw = s.encode("utf-8")
    buf.write(struct.pack("<I", len(raw)))
    buf.write(raw)


def save_checkpoint(path, nets: dict, layout: str, config_hash: str, meta: dict | None = None):
    meta = dict(meta or {})
    meta["nets"] = {name: {"sizes": net.sizes, "output": net.output} for name, net in nets.items()}
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", FORMAT_VERSION))
    _pack_str(buf, layout)
    _pack_str(buf, config_hash)
    _pack_str(buf, json.dumps(meta, sort_keys=True))
    tensors = []
    for name in sorted(nets):
        for k, p in enumerate(nets[name].params()):
            kind = "W" if k % 2 == 0 else "b"
            tensors.append((f"{name}/{kind}{k // 2}", p))
    buf.write(struct.pack("<I", len(tensors)))
    for tname, arr in tensors:
        _pack_str(buf, tname)
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptCheckpointError("truncated checkpoint")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def string(self) -> str:
        try:
            return self.take(self.u32()).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorruptCheckpointError("bad string field") from exc


def load_checkpoint(path, expected_layout: str | None = None,
                    expected_config_hash: str | None = None) -> Checkpoint:
    with open(path, "rb") as fh:
        r = _Reader(fh.read())
    if r.take(len(MAGIC)) != MAGIC:
        raise CorruptCheckpointError("bad magic")
    version = r.u32()
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"checkpoint version {version}, expected {FORMAT_VERSION}")
    layout = r.string()
    if expected_layout is not None and layout != expected_layout:
        raise LayoutMismatchError(f"observation layout {layout!r} != {expected_layout!r}")
    config_hash = r.string()
    if expected_config_hash is not None and config_hash != expected_config_hash:
        raise CheckpointError(f"config hash {config_hash} != {expected_config_hash}")
    try:
        meta = json.loads(r.string())
    except json.JSONDecodeError as exc:
        raise CorruptCheckpointError("bad metadata") from exc
    tensors = {}
    for _ in range(r.u32()):
        name = r.string()
        rank = r.u32()
        dims = struct.unpack(f"<{rank}I", r.take(4 * rank))
        count = int(np.prod(dims)) if rank else 1
        tensors[name] = np.frombuffer(r.take(8 * count), dtype="<f8").reshape(dims).astype(float)
    if r.pos != len(r.data):
        raise CorruptCheckpointError("trailing bytes after tensors")
    nets = {}
    for name, spec in meta.pop("nets", {}).items():
        n_layers = len(spec["sizes"]) - 1
        try:
            ws = [tensors[f"{name}/W{k}"] for k in range(n_layers)]
            bs = [tensors[f"{name}/b{k}"] for k in range(n_layers)]
        except KeyError as exc:
            raise CorruptCheckpointError(f"missing tensor {exc}") from exc
        nets[name] = Mlp(ws, bs, spec["output"])
    return Checkpoint(layout=layout, config_hash=config_hash, nets=nets, meta=meta, version=version)
