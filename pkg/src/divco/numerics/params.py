"""Named parameter store, Adam, deterministic checkpoints, seeded RNG."""

import json
import zlib

import numpy as np

from .tape import DTYPE

MAGIC = b"DIVCO1\n"


class CheckpointError(ValueError):
    """Checkpoint file is malformed or inconsistent with its header."""


def seeded_rng(*keys) -> np.random.Generator:
    """PCG64 generator derived from a tuple of ints/strings.

    Strings hash through crc32 so ("train", seed, epoch) style keys give
    stable, platform-independent streams.
    """
    ints = []
    for k in keys:
        if isinstance(k, str):
            ints.append(zlib.crc32(k.encode("utf-8")))
        elif isinstance(k, (int, np.integer)):
            ints.append(int(k) & 0xFFFFFFFF)
        else:
            raise TypeError(f"seed key must be int or str, got {type(k)!r}")
    return np.random.default_rng(np.random.SeedSequence(ints))


def glorot(rng, fan_in, fan_out, shape=None) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    if shape is None:
        shape = (fan_in, fan_out)
    return rng.uniform(-a, a, size=shape).astype(DTYPE)


class ParamStore:
    """Ordered mapping name -> matrix, with grad buffers and Adam state."""

    def __init__(self):
        self.params = {}
        self.grads = {}
        self._adam_m = {}
        self._adam_v = {}
        self.step_count = 0
        self.meta = {}

    def add(self, name, value) -> np.ndarray:
        if name in self.params:
            raise ValueError(f"duplicate parameter {name!r}")
        value = np.ascontiguousarray(value, dtype=DTYPE)
        if value.ndim != 2:
            raise ValueError(f"parameter {name!r} must be 2-D, got shape {value.shape}")
        self.params[name] = value
        self.grads[name] = np.zeros_like(value)
        self._adam_m[name] = np.zeros_like(value)
        self._adam_v[name] = np.zeros_like(value)
        return value

    def names(self):
        return list(self.params)

    def zero_grads(self) -> None:
        for g in self.grads.values():
            g.fill(0.0)

    def adam_step(self, lr, beta1=0.9, beta2=0.999, eps=1e-8) -> None:
        """One Adam update over all parameters from the current grads.

        Raises FloatingPointError naming the first parameter whose
        gradient contains a NaN/Inf, before touching any state.
        """
        for name, g in self.grads.items():
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - beta1 ** t
        bc2 = 1.0 - beta2 ** t
        for name, g in self.grads.items():
            m = self._adam_m[name]
            v = self._adam_v[name]
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * (g * g)
            self.params[name] -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)

    # ------------------------------------------------------------------
    # checkpoint IO: magic, uint64 LE header length, canonical JSON
    # header, then raw '<f8' row-major payloads in header order.

    def save(self, path) -> None:
        entries = []
        for name, arr in self.params.items():
            entries.append({"name": name, "shape": list(arr.shape)})
        header = {
            "step_count": self.step_count,
            "meta": self.meta,
            "params": entries,
        }
        blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
        with open(path, "wb") as f:
            f.write(MAGIC)
            f.write(len(blob).to_bytes(8, "little"))
            f.write(blob)
            for name in self.params:
                f.write(np.ascontiguousarray(self.params[name], dtype="<f8").tobytes())
            for name in self.params:
                f.write(np.ascontiguousarray(self._adam_m[name], dtype="<f8").tobytes())
            for name in self.params:
                f.write(np.ascontiguousarray(self._adam_v[name], dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "ParamStore":
        with open(path, "rb") as f:
            data = f.read()
        if not data.startswith(MAGIC):
            raise CheckpointError(f"{path}: bad magic")
        off = len(MAGIC)
        if len(data) < off + 8:
            raise CheckpointError(f"{path}: truncated header length")
        hlen = int.from_bytes(data[off:off + 8], "little")
        off += 8
        if len(data) < off + hlen:
            raise CheckpointError(f"{path}: truncated header")
        try:
            header = json.loads(data[off:off + hlen].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{path}: unreadable header: {exc}") from exc
        off += hlen

        store = cls()
        store.step_count = int(header.get("step_count", 0))
        store.meta = header.get("meta", {})
        entries = header.get("params", [])
        sizes = []
        for ent in entries:
            shape = tuple(int(s) for s in ent["shape"])
            sizes.append((ent["name"], shape, shape[0] * shape[1] * 8))
        total = sum(s for _, _, s in sizes)
        if len(data) != off + 3 * total:
            raise CheckpointError(
                f"{path}: payload is {len(data) - off} bytes, expected {3 * total}")

        def read_block(target):
            nonlocal off
            for name, shape, nbytes in sizes:
                arr = np.frombuffer(data[off:off + nbytes], dtype="<f8").reshape(shape)
                # frombuffer views are read-only; training mutates in place
                target[name] = arr.astype(DTYPE, copy=True)
                off += nbytes

        read_block(store.params)
        read_block(store._adam_m)
        read_block(store._adam_v)
        for name in store.params:
            store.grads[name] = np.zeros_like(store.params[name])
        return store
