"""Versioned binary checkpoints: byte-exact round-trips, self-describing.

Layout (little-endian, no padding):

    magic "RGDC" | u32 version | u32 D | u32 K | u32 M | i64 train_seed
    (D+1) x u32 ranks (shared by all components)
    M x D x u32 permutations
    D x f64 affine offsets, D x f64 affine scales
    u32 name length | utf-8 dataset name
    M x D float64 core arrays, row-major (R_{d-1}, K, R_d)

A JSON export is available as a lossy human-readable view.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import CheckpointError
from .mixture import RingMixtureModel
from .model import RingDensityModel
from .splines import BasisGrid
from .tensor_ring import TrCores

MAGIC = b"RGDC"
VERSION = 1


def save_checkpoint(path, target, offset, scale, dataset_name="", train_seed=0):
    """Serialize a model or mixture with its standardization affine."""
    mix = target if isinstance(target, RingMixtureModel) else RingMixtureModel([target])
    d = mix.ndim
    k = mix.components[0].grids[0].k_basis
    ranks = mix.components[0].coeff.ranks
    for c in mix.components:
        if c.coeff.ranks != ranks:
            raise CheckpointError("components must share ranks to checkpoint")
        if any(g.k_basis != k for g in c.grids):
            raise CheckpointError("components must share a single basis count")
    offset = np.asarray(offset, dtype=float)
    scale = np.asarray(scale, dtype=float)
    if offset.shape != (d,) or scale.shape != (d,):
        raise CheckpointError("affine offset/scale must have one entry per dimension")
    name_bytes = str(dataset_name).encode("utf-8")
    parts = [
        MAGIC,
        struct.pack("<IIIIq", VERSION, d, k, mix.m, int(train_seed)),
        struct.pack(f"<{d + 1}I", *ranks),
    ]
    for c in mix.components:
        parts.append(struct.pack(f"<{d}I", *c.permutation))
    parts.append(offset.astype("<f8").tobytes())
    parts.append(scale.astype("<f8").tobytes())
    parts.append(struct.pack("<I", len(name_bytes)))
    parts.append(name_bytes)
    for c in mix.components:
        for g in c.coeff.cores:
            parts.append(np.ascontiguousarray(g, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_checkpoint(path):
    """Returns (mixture, offset, scale, dataset_name, train_seed)."""
    with open(path, "rb") as fh:
        buf = fh.read()
    view = memoryview(buf)
    if buf[:4] != MAGIC:
        raise CheckpointError(f"bad magic in {path}")
    pos = 4

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(buf):
            raise CheckpointError("truncated checkpoint")
        vals = struct.unpack_from(fmt, view, pos)
        pos += size
        return vals

    version, d, k, m, train_seed = take("<IIIIq")
    if version != VERSION:
        raise CheckpointError(
            f"checkpoint version {version} unsupported (expected {VERSION})"
        )
    ranks = take(f"<{d + 1}I")
    if ranks[0] != ranks[-1]:
        raise CheckpointError("ranks do not close the ring")
    perms = [take(f"<{d}I") for _ in range(m)]
    offset = np.frombuffer(view, "<f8", d, pos).copy()
    pos += 8 * d
    scale = np.frombuffer(view, "<f8", d, pos).copy()
    pos += 8 * d
    (name_len,) = take("<I")
    name = bytes(view[pos : pos + name_len]).decode("utf-8")
    pos += name_len
    grids = [BasisGrid(k) for _ in range(d)]
    comps = []
    for mi in range(m):
        cores = []
        for di in range(d):
            count = ranks[di] * k * ranks[di + 1]
            arr = np.frombuffer(view, "<f8", count, pos)
            if arr.size != count:
                raise CheckpointError("truncated core data")
            pos += 8 * count
            cores.append(arr.reshape(ranks[di], k, ranks[di + 1]).copy())
        comps.append(RingDensityModel(TrCores(cores), grids, perms[mi]))
    if pos != len(buf):
        raise CheckpointError(f"{len(buf) - pos} trailing bytes in checkpoint")
    return RingMixtureModel(comps), offset, scale, name, int(train_seed)


def export_json(path, json_path):
    """Lossy human-readable view of a checkpoint (decimal text floats)."""
    mix, offset, scale, name, seed = load_checkpoint(path)
    doc = {
        "version": VERSION,
        "ndim": mix.ndim,
        "k_basis": mix.components[0].grids[0].k_basis,
        "components": mix.m,
        "ranks": list(mix.components[0].coeff.ranks),
        "permutations": [list(c.permutation) for c in mix.components],
        "offset": offset.tolist(),
        "scale": scale.tolist(),
        "dataset": name,
        "train_seed": seed,
        "cores": [[g.tolist() for g in c.coeff.cores] for c in mix.components],
    }
    with open(json_path, "w") as fh:
        json.dump(doc, fh, indent=1)
