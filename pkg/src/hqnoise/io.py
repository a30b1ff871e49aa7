"""Binary noise-pair dataset format.

Layout (all little-endian)::

    b"EDNP"  u16 version  u64 record_count
    u8 ndim_z  u32[ndim_z] z_shape   u8 ndim_I  u32[ndim_I] I_shape
    u32 meta_len  meta_len bytes of UTF-8 JSON (n, gamma1, gamma2)
    record_count x:
        u64 seed
        f32[z_shape] z_T   f32[z_shape] z_tilde_T   f32[I_shape] I
        u8 flags (bit 0: s_rd present, bit 1: s_hq present)
        f64 s_rd  f64 s_hq   (0.0 when absent)
"""

from __future__ import annotations

import json
import struct

import numpy as np

from hqnoise.collector import NoisePair
from hqnoise.errors import FormatError

MAGIC = b"EDNP"
VERSION = 1


def _shape_bytes(shape):
    return struct.pack("<B", len(shape)) + struct.pack(f"<{len(shape)}I", *shape)


def _f32(a):
    return np.ascontiguousarray(a, dtype="<f4").tobytes()


def write_pairs(path, pairs):
    pairs = list(pairs)
    if pairs:
        z_shape = tuple(np.shape(pairs[0].z_T))
        i_shape = tuple(np.shape(pairs[0].I))
        meta = {"n": pairs[0].n, "gamma1": pairs[0].gamma1, "gamma2": pairs[0].gamma2}
    else:
        z_shape, i_shape, meta = (), (), {}
    blob = json.dumps(meta, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<HQ", VERSION, len(pairs)))
        fh.write(_shape_bytes(z_shape) + _shape_bytes(i_shape))
        fh.write(struct.pack("<I", len(blob)) + blob)
        for p in pairs:
            if np.shape(p.z_T) != z_shape or np.shape(p.z_tilde_T) != z_shape:
                raise FormatError(f"seed {p.seed}: latent shape differs from first record")
            if np.shape(p.I) != i_shape:
                raise FormatError(f"seed {p.seed}: reference shape differs from first record")
            flags = (p.s_rd is not None) | ((p.s_hq is not None) << 1)
            fh.write(struct.pack("<Q", p.seed))
            fh.write(_f32(p.z_T) + _f32(p.z_tilde_T) + _f32(p.I))
            fh.write(struct.pack("<Bdd", flags, p.s_rd or 0.0, p.s_hq or 0.0))


class _Reader:
    def __init__(self, data, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n):
        if self.pos + n > len(self.data):
            raise FormatError(f"{self.path}: truncated at byte {self.pos}")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def shape(self):
        (nd,) = self.unpack("<B")
        return tuple(self.unpack(f"<{nd}I")) if nd else ()

    def array(self, shape):
        count = int(np.prod(shape)) if shape else 0
        raw = self.take(4 * count)
        return np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(shape)


def read_pairs(path):
    with open(path, "rb") as fh:
        data = fh.read()
    r = _Reader(data, path)
    if r.take(4) != MAGIC:
        raise FormatError(f"{path}: bad magic, not a noise-pair file")
    version, count = r.unpack("<HQ")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    z_shape = r.shape()
    i_shape = r.shape()
    (meta_len,) = r.unpack("<I")
    meta = json.loads(r.take(meta_len) or b"{}")
    pairs = []
    for _ in range(count):
        (seed,) = r.unpack("<Q")
        z = r.array(z_shape)
        zt = r.array(z_shape)
        ref = r.array(i_shape)
        flags, s_rd, s_hq = r.unpack("<Bdd")
        pairs.append(
            NoisePair(
                z_T=z,
                z_tilde_T=zt,
                I=ref,
                seed=int(seed),
                n=int(meta.get("n", 0)),
                gamma1=str(meta.get("gamma1", "")),
                gamma2=float(meta.get("gamma2", 0.0)),
                s_rd=s_rd if flags & 1 else None,
                s_hq=s_hq if flags & 2 else None,
            )
        )
    if r.pos != len(data):
        raise FormatError(f"{path}: record count {count} does not match body length")
    return pairs


def read_scores(path):
    """External score file: ``seed,s_rd,s_hq`` per line; ``#`` comments allowed."""
    scores = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#") or line.lower().startswith("seed"):
                continue
            parts = [p.strip() for p in line.replace("\t", ",").split(",")]
            if len(parts) != 3:
                raise FormatError(f"{path}:{lineno}: expected seed,s_rd,s_hq")
            scores[int(parts[0])] = (float(parts[1]), float(parts[2]))
    return scores
