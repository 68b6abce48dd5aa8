"""Pure-Python side of the engine's file formats.

Feature extractors run outside the engine (pretrained encoders, video
decoding) and hand their results over as TensorFiles plus a JSON manifest.
Everything here is independent of the native module so an extractor only
needs numpy.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

MAGIC = b"DVLT"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1}
SCHEMA_VERSION = 1
_MASK = (1 << 64) - 1


class FormatError(ValueError):
    """Malformed TensorFile bytes."""


def encode_tensor(array: np.ndarray) -> bytes:
    a = np.asarray(array)
    if a.dtype not in _CODES:
        raise FormatError(f"unsupported dtype {a.dtype}; use float32 or float64")
    if a.ndim > 255:
        raise FormatError("rank exceeds 255")
    if any(d == 0 or d >= 1 << 32 for d in a.shape):
        raise FormatError(f"unstorable shape {a.shape}")
    header = MAGIC + struct.pack("<BBB", VERSION, _CODES[a.dtype], a.ndim)
    header += struct.pack(f"<{a.ndim}I", *a.shape)
    return header + np.ascontiguousarray(a, dtype=_DTYPES[_CODES[a.dtype]]).tobytes()


def decode_tensor(data: bytes) -> np.ndarray:
    if len(data) < 7:
        raise FormatError(f"truncated header: {len(data)} bytes")
    if data[:4] != MAGIC:
        raise FormatError("bad magic, expected DVLT")
    version, code, ndim = struct.unpack_from("<BBB", data, 4)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    if code not in _DTYPES:
        raise FormatError(f"unknown dtype code {code}")
    if len(data) < 7 + 4 * ndim:
        raise FormatError(f"truncated header: expected {ndim} extents")
    shape = struct.unpack_from(f"<{ndim}I", data, 7)
    if any(d == 0 for d in shape):
        raise FormatError("zero extent")
    dtype = _DTYPES[code]
    count = int(np.prod(shape, dtype=np.uint64)) if shape else 1
    payload = data[7 + 4 * ndim:]
    if len(payload) != count * dtype.itemsize:
        raise FormatError(f"payload size mismatch: expected {count * dtype.itemsize} bytes, got {len(payload)}")
    return np.frombuffer(payload, dtype=dtype).reshape(shape).astype(dtype.newbyteorder("="))


def write_tensor(path: str | os.PathLike, array: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(encode_tensor(array))


def read_tensor(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as f:
        return decode_tensor(f.read())


class SplitMix64:
    """Same generator the engine uses for frame windows and fragment crops."""

    def __init__(self, seed: int) -> None:
        self.state = seed & _MASK

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)


def fragment_offsets(height: int, width: int, grid: int, patch: int, seed: int) -> list[tuple[int, int]]:
    """Row-major (y, x) crop origins, one per grid region."""
    if grid <= 0 or patch <= 0:
        raise ValueError("grid and patch must be positive")
    rng = SplitMix64(seed)
    out = []
    for gy in range(grid):
        y0, y1 = gy * height // grid, (gy + 1) * height // grid
        for gx in range(grid):
            x0, x1 = gx * width // grid, (gx + 1) * width // grid
            if y1 - y0 < patch or x1 - x0 < patch:
                raise ValueError(f"fragment region {y1 - y0}x{x1 - x0} is smaller than the {patch}x{patch} patch")
            y = y0 + rng.next() % (y1 - y0 - patch + 1)
            x = x0 + rng.next() % (x1 - x0 - patch + 1)
            out.append((y, x))
    return out


def sample_fragments(frames: np.ndarray, grid: int, patch: int, seed: int) -> np.ndarray:
    """C x T x H x W frames to C x T x (grid*patch) x (grid*patch) fragments."""
    c, t, h, w = frames.shape
    side = grid * patch
    out = np.empty((c, t, side, side), dtype=frames.dtype)
    for i, (y, x) in enumerate(fragment_offsets(h, w, grid, patch, seed)):
        gy, gx = divmod(i, grid)
        out[:, :, gy * patch:(gy + 1) * patch, gx * patch:(gx + 1) * patch] = frames[:, :, y:y + patch, x:x + patch]
    return out


def sample_frames(num_available: int, count: int, seed: int) -> list[int]:
    """Contiguous frame window, padded with the last frame when too short."""
    if num_available == 0 or count == 0:
        raise ValueError("need at least one frame")
    if num_available < count:
        return list(range(num_available)) + [num_available - 1] * (count - num_available)
    start = SplitMix64(seed).next() % (num_available - count + 1)
    return list(range(start, start + count))


def assign_splits(n: int, seed: int) -> list[str]:
    """Seeded 70/10/20 train/val/test labels, identical to the engine's."""
    order = list(range(n))
    rng = SplitMix64(seed)
    for i in range(n, 1, -1):
        j = rng.next() % i
        order[i - 1], order[j] = order[j], order[i - 1]
    # C llround: halves away from zero, unlike Python's round().
    n_train = int(np.floor(0.7 * n + 0.5))
    n_val = int(np.floor(0.1 * n + 0.5))
    labels = [""] * n
    for k, idx in enumerate(order):
        labels[idx] = "train" if k < n_train else ("val" if k < n_train + n_val else "test")
    return labels


@dataclass
class ManifestEntry:
    video_id: str
    mos: float
    frames_path: str
    fragments_path: str
    num_frames: int
    mos_scale: Sequence[float] = (0.0, 1.0)
    split: str = ""
    dataset: str = ""
    clip_path: str | None = None


@dataclass
class Manifest:
    entries: list[ManifestEntry]
    guide: str
    pos: str
    neg: str
    encoder: str = ""
    schema_version: int = SCHEMA_VERSION
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        entries = []
        for e in self.entries:
            d = asdict(e)
            d["mos_scale"] = list(e.mos_scale)
            if e.clip_path is None:
                d.pop("clip_path")
            entries.append(d)
        out = {
            "schema_version": self.schema_version,
            "entries": entries,
            "text_embeddings": {"guide": self.guide, "pos": self.pos, "neg": self.neg},
        }
        if self.encoder:
            out["encoder"] = self.encoder
        return out


def build_manifest(
    out_path: str | os.PathLike,
    entries: Iterable[ManifestEntry],
    text: dict[str, str],
    encoder: str = "",
) -> Manifest:
    """Writes a manifest whose paths are relative to its own directory."""
    base = os.path.dirname(os.path.abspath(out_path))

    def rel(p: str | None) -> str | None:
        if p is None:
            return None
        return os.path.relpath(os.path.abspath(p), base) if os.path.isabs(p) else p

    fixed = []
    for e in entries:
        if e.mos is None:
            raise ValueError(f"missing MOS for {e.video_id}")
        fixed.append(
            ManifestEntry(**{**asdict(e), "frames_path": rel(e.frames_path), "fragments_path": rel(e.fragments_path),
                             "clip_path": rel(e.clip_path)})
        )
    m = Manifest(fixed, rel(text["guide"]), rel(text["pos"]), rel(text["neg"]), encoder=encoder)
    with open(out_path, "w") as f:
        json.dump(m.to_json(), f, indent=2)
        f.write("\n")
    return m
