"""Dense-array numerics shared by every other module.

All math runs on plain numpy arrays in 64-bit precision by default; float32
is an opt-in for speed.  Randomness always flows through :func:`make_rng`
(PCG64), so any pipeline rerun with the same seed is bit-identical.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

DEFAULT_DTYPE = np.float64

CHECKPOINT_MAGIC = b"RCNN1\x00"
_DTYPE_CODES = {np.dtype("float64"): 0, np.dtype("float32"): 1}
_CODE_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<f4")}


class ShapeMismatch(ValueError):
    pass


class NonFiniteValue(ArithmeticError):
    pass


def make_rng(seed, *stream):
    """Deterministic PCG64 generator.

    Extra integers select independent, reproducible substreams of the same
    seed (e.g. ``make_rng(7, 1)`` for shuffling, ``make_rng(7, 2)`` for
    dropout).
    """
    entropy = (int(seed),) + tuple(int(s) for s in stream)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def check_finite(name, arr):
    """Raise NonFiniteValue naming `name` if arr contains NaN or Inf."""
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue(f"non-finite values in '{name}'")
    return arr


# -- elementary tensor operations -------------------------------------------
#
# These are thin wrappers over numpy; the test suite holds them to naive
# loop oracles on small random inputs.

def matmul(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul: incompatible shapes {a.shape} x {b.shape}")
    return a @ b


def add(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"add: incompatible shapes {a.shape} vs {b.shape}")
    return a + b


def elementwise_mul(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"elementwise_mul: incompatible shapes {a.shape} vs {b.shape}")
    return a * b


def transpose(a):
    return np.asarray(a).T.copy()


def glorot_init(shape, rng, dtype=DEFAULT_DTYPE):
    """Uniform draw in +-sqrt(6 / (fan_in + fan_out)).

    For rank >= 2 the trailing dimensions count as the receptive field
    (so a C_out x C_in x 3 x 3 kernel gets fan_in = 9*C_in).
    """
    shape = tuple(int(d) for d in shape)
    if len(shape) == 0 or any(d <= 0 for d in shape):
        raise ValueError(f"glorot_init: invalid shape {shape}")
    if len(shape) == 1:
        fan_in = fan_out = shape[0]
    else:
        receptive = int(np.prod(shape[2:])) if len(shape) > 2 else 1
        fan_in = shape[1] * receptive if len(shape) > 2 else shape[0]
        fan_out = shape[0] * receptive if len(shape) > 2 else shape[1]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


# -- parameter storage and Adam ---------------------------------------------

@dataclass
class Param:
    value: np.ndarray
    grad: np.ndarray
    adam_m: np.ndarray
    adam_v: np.ndarray


@dataclass
class ParameterStore:
    """Named parameters with their gradients and Adam moment estimates."""

    entries: dict = field(default_factory=dict)
    step_count: int = 0

    def add(self, name, value):
        if name in self.entries:
            raise ValueError(f"duplicate parameter name '{name}'")
        value = np.asarray(value)
        self.entries[name] = Param(
            value=value,
            grad=np.zeros_like(value),
            adam_m=np.zeros_like(value),
            adam_v=np.zeros_like(value),
        )
        return self.entries[name]

    def __getitem__(self, name):
        return self.entries[name]

    def __contains__(self, name):
        return name in self.entries

    def names(self):
        return list(self.entries)

    def n_params(self):
        return sum(p.value.size for p in self.entries.values())

    def zero_grads(self):
        for p in self.entries.values():
            p.grad[...] = 0.0


def adam_step(store, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One Adam update with bias correction; zeroes gradients afterwards."""
    store.step_count += 1
    t = store.step_count
    for name, p in store.entries.items():
        if not np.all(np.isfinite(p.grad)):
            raise NonFiniteValue(f"non-finite gradient for parameter '{name}'")
        g = p.grad
        p.adam_m[...] = beta1 * p.adam_m + (1.0 - beta1) * g
        p.adam_v[...] = beta2 * p.adam_v + (1.0 - beta2) * g * g
        m_hat = p.adam_m / (1.0 - beta1 ** t)
        v_hat = p.adam_v / (1.0 - beta2 ** t)
        p.value[...] = p.value - lr * m_hat / (np.sqrt(v_hat) + eps)
        p.grad[...] = 0.0
    return store


# -- checkpoint format --------------------------------------------------------
#
# Binary layout: magic "RCNN1\0", little-endian u32 entry count, then per
# entry: u32 name length, UTF-8 name, u8 dtype code (0=f64, 1=f32),
# u32 rank, u32 per dimension, raw little-endian array data.

def save_checkpoint(store, path):
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(store.entries)))
        for name, p in store.entries.items():
            raw = name.encode("utf-8")
            arr = p.value
            code = _DTYPE_CODES.get(arr.dtype)
            if code is None:
                raise ValueError(f"unsupported dtype {arr.dtype} for '{name}'")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", code))
            fh.write(struct.pack("<I", arr.ndim))
            for d in arr.shape:
                fh.write(struct.pack("<I", d))
            fh.write(np.ascontiguousarray(arr, dtype=_CODE_DTYPES[code]).tobytes())


def load_checkpoint(path):
    """Read a checkpoint back into a fresh ParameterStore (moments zeroed)."""
    store = ParameterStore()
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"bad checkpoint magic in {path!r}")
        (count,) = struct.unpack("<I", fh.read(4))
        for _ in range(count):
            (name_len,) = struct.unpack("<I", fh.read(4))
            name = fh.read(name_len).decode("utf-8")
            (code,) = struct.unpack("<B", fh.read(1))
            if code not in _CODE_DTYPES:
                raise ValueError(f"unknown dtype code {code} in {path!r}")
            (rank,) = struct.unpack("<I", fh.read(4))
            dims = struct.unpack("<" + "I" * rank, fh.read(4 * rank))
            n = int(np.prod(dims)) if rank else 1
            raw = fh.read(n * _CODE_DTYPES[code].itemsize)
            value = np.frombuffer(raw, dtype=_CODE_DTYPES[code]).reshape(dims)
            store.add(name, value.astype(_CODE_DTYPES[code].newbyteorder("=")))
    return store
