"""Binary model checkpoints.

Layout (little-endian)::

    b"NNBW"  u32 version
    u32 n_arch, n_arch x u32             architecture integers
    u32 n_entries, then per entry:
        u32 name_len, name (utf-8), u32 ndim, ndim x u32 shape, f64 values
    u32 has_optimizer, and if set:
        u64 step, f64 lr, beta1, beta2, eps, weight_decay,
        u32 n_moments, then m and v arrays in parameter order (f64)
"""

import io
import struct

import numpy as np

from ..channel import atomic_write_bytes

CHECKPOINT_MAGIC = b"NNBW"
CHECKPOINT_VERSION = 1


class CheckpointFormatError(ValueError):
    pass


def _u32(buf, value):
    buf.write(struct.pack("<I", int(value)))


def encode_checkpoint(arch, state, optimizer_state=None):
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    _u32(buf, CHECKPOINT_VERSION)
    _u32(buf, len(arch))
    for value in arch:
        _u32(buf, value)
    _u32(buf, len(state))
    for name, value in state.items():
        value = np.asarray(value, dtype="<f8")
        raw = name.encode("utf-8")
        _u32(buf, len(raw))
        buf.write(raw)
        _u32(buf, value.ndim)
        for n in value.shape:
            _u32(buf, n)
        buf.write(value.tobytes())
    if optimizer_state is None:
        _u32(buf, 0)
    else:
        s = optimizer_state
        _u32(buf, 1)
        buf.write(struct.pack("<Q5d", s.t, s.lr, s.beta1, s.beta2, s.eps, s.weight_decay))
        _u32(buf, len(s.m))
        for arr in list(s.m) + list(s.v):
            buf.write(np.asarray(arr, dtype="<f8").tobytes())
    return buf.getvalue()


class _Reader:
    def __init__(self, payload):
        self.payload = payload
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.payload):
            raise CheckpointFormatError("truncated checkpoint")
        out = self.payload[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]


def decode_checkpoint(payload):
    """Return ``(arch, state, optimizer)``; ``optimizer`` is a dict or None.

    The optimizer dict holds ``t, lr, beta1, beta2, eps, weight_decay`` and the
    raw moment arrays (shapes follow the state entries in order).
    """
    r = _Reader(payload)
    if r.take(4) != CHECKPOINT_MAGIC:
        raise CheckpointFormatError("bad magic")
    version = r.u32()
    if version != CHECKPOINT_VERSION:
        raise CheckpointFormatError(f"unsupported version {version}")
    arch = tuple(r.u32() for _ in range(r.u32()))
    state = {}
    for _ in range(r.u32()):
        name = r.take(r.u32()).decode("utf-8")
        shape = tuple(r.u32() for _ in range(r.u32()))
        count = int(np.prod(shape, dtype=np.int64))
        state[name] = np.frombuffer(r.take(8 * count), dtype="<f8").reshape(shape).copy()
    optimizer = None
    if r.u32():
        t, lr, b1, b2, eps, wd = struct.unpack("<Q5d", r.take(8 + 5 * 8))
        n = r.u32()
        shapes = [v.shape for v in state.values()][:n]
        if len(shapes) != n:
            raise CheckpointFormatError("optimizer moments exceed stored entries")
        moments = []
        for shape in shapes + shapes:
            count = int(np.prod(shape, dtype=np.int64))
            moments.append(np.frombuffer(r.take(8 * count), dtype="<f8").reshape(shape).copy())
        optimizer = dict(t=t, lr=lr, beta1=b1, beta2=b2, eps=eps, weight_decay=wd,
                         m=moments[:n], v=moments[n:])
    if r.pos != len(payload):
        raise CheckpointFormatError("trailing bytes after checkpoint")
    return arch, state, optimizer


def save_checkpoint(path, arch, state, optimizer_state=None):
    atomic_write_bytes(path, encode_checkpoint(arch, state, optimizer_state))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return decode_checkpoint(fh.read())
