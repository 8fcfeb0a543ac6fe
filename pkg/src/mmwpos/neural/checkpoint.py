"""Binary checkpoint files for sets of MLPs.

Layout (all integers little-endian)::

    8 bytes   magic  b"MMWPCKPT"
    u32       format version (currently 1)
    u16 + n   model kind, UTF-8
    f64       training SNR in dB
    u32       number of networks K
    K times:
        u16 + n   network role, UTF-8
        u8        output activation (0 = linear, 1 = tanh)
        u32       number of widths L+1
        u32 * (L+1) layer widths
    then, for each network in header order and each layer in order:
        f64 * (in*out)  weight matrix, row-major (in, out)
        f64 * out       bias

See docs/formats.md for the full description.
"""
from __future__ import annotations

import struct
from pathlib import Path
from typing import Dict, Tuple

import numpy as np

from .autodiff import Tensor
from .mlp import ACTIVATIONS, Mlp, MlpSpec

MAGIC = b"MMWPCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<H", len(raw)) + raw


def save_checkpoint(path, kind: str, snr_db: float, nets: Dict[str, Mlp]) -> None:
    buf = bytearray(MAGIC)
    buf += struct.pack("<I", VERSION)
    buf += _pack_str(kind)
    buf += struct.pack("<d", float(snr_db))
    buf += struct.pack("<I", len(nets))
    for role, net in nets.items():
        buf += _pack_str(role)
        buf += struct.pack("<B", ACTIVATIONS.index(net.spec.output_activation))
        buf += struct.pack("<I", len(net.spec.widths))
        buf += struct.pack(f"<{len(net.spec.widths)}I", *net.spec.widths)
    for net in nets.values():
        for p in net.params:
            buf += np.ascontiguousarray(p.value, dtype="<f8").tobytes()
    Path(path).write_bytes(bytes(buf))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise CheckpointError("truncated checkpoint")
        out = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return out

    def string(self) -> str:
        (n,) = self.take("<H")
        raw = self.data[self.pos:self.pos + n]
        if len(raw) != n:
            raise CheckpointError("truncated checkpoint")
        self.pos += n
        return raw.decode("utf-8")


def load_checkpoint(path) -> Tuple[str, float, Dict[str, Mlp]]:
    """Returns ``(kind, snr_db, {role: Mlp})``."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc.strerror}") from None
    try:
        return _parse(path, data)
    except (UnicodeDecodeError, ValueError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"{path}: malformed header ({exc})") from None


def _parse(path, data: bytes):
    if data[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    r = _Reader(data)
    r.pos = 8
    (version,) = r.take("<I")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version} (expected {VERSION})")
    kind = r.string()
    (snr_db,) = r.take("<d")
    (k,) = r.take("<I")
    specs = []
    for _ in range(k):
        role = r.string()
        (act,) = r.take("<B")
        (nw,) = r.take("<I")
        widths = r.take(f"<{nw}I")
        if act >= len(ACTIVATIONS):
            raise CheckpointError(f"{path}: unknown activation code {act}")
        specs.append((role, MlpSpec(widths, ACTIVATIONS[act])))
    nets = {}
    for role, spec in specs:
        params = []
        for fi, fo in zip(spec.widths[:-1], spec.widths[1:]):
            for shape in ((fi, fo), (fo,)):
                n = int(np.prod(shape))
                if r.pos + 8 * n > len(data):
                    raise CheckpointError("truncated checkpoint")
                arr = np.frombuffer(data, dtype="<f8", count=n, offset=r.pos).astype(np.float64).reshape(shape)
                r.pos += 8 * n
                params.append(Tensor(arr, requires_grad=True))
        nets[role] = Mlp(spec, params)
    if r.pos != len(data):
        raise CheckpointError(f"{path}: trailing bytes after parameters")
    return kind, snr_db, nets
