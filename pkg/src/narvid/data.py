"""On-disk embedding container and in-memory episode/batch structures.

Container layout (little-endian):
  magic "NRV1" | u32 version=1 | u32 episode count | u32 dim D
  per episode: u16 id length | id UTF-8 | u32 L | u32 K |
               (L+1)*D float64 query tokens (EOS row last) |
               K*D float64 frames | K*D float64 captions, row-major.
A sidecar JSON manifest (same stem, ".json") lists id/L/K per episode for
human inspection; the binary file is authoritative.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CorruptionError, FormatError, UsageError, ValidationError

MAGIC = b"NRV1"
VERSION = 1


@dataclass
class Episode:
    """One retrieval unit: query tokens (L words + EOS), K frames, K captions."""

    id: str
    query_tokens: np.ndarray  # (L+1, D), EOS row last
    frames: np.ndarray        # (K, D)
    captions: np.ndarray      # (K, D)

    @property
    def num_words(self):
        return self.query_tokens.shape[0] - 1

    @property
    def num_frames(self):
        return self.frames.shape[0]

    @property
    def dim(self):
        return self.query_tokens.shape[1]

    @property
    def eos(self):
        return self.query_tokens[-1]

    @property
    def words(self):
        return self.query_tokens[:-1]

    def validate(self):
        q, f, c = self.query_tokens, self.frames, self.captions
        if q.ndim != 2 or f.ndim != 2 or c.ndim != 2:
            raise ValidationError(f"episode {self.id!r}: tensors must be 2-D")
        d = q.shape[1]
        if d < 2:
            raise ValidationError(f"episode {self.id!r}: dim {d} < 2")
        if q.shape[0] < 2:
            raise ValidationError(f"episode {self.id!r}: needs at least one word before EOS")
        if f.shape[0] < 1:
            raise ValidationError(f"episode {self.id!r}: needs at least one frame")
        if f.shape != c.shape:
            raise ValidationError(
                f"episode {self.id!r}: frames {f.shape} and captions {c.shape} differ")
        if f.shape[1] != d:
            raise ValidationError(f"episode {self.id!r}: frame dim {f.shape[1]} != {d}")
        for name, arr in (("query", q), ("frames", f), ("captions", c)):
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"episode {self.id!r}: non-finite {name} values")
        return self


@dataclass
class Dataset:
    episodes: list
    dim: int

    def __len__(self):
        return len(self.episodes)

    def __getitem__(self, i):
        return self.episodes[i]

    def validate(self):
        ids = set()
        for ep in self.episodes:
            ep.validate()
            if ep.dim != self.dim:
                raise ValidationError(
                    f"episode {ep.id!r}: dim {ep.dim} != dataset dim {self.dim}")
            if ep.id in ids:
                raise ValidationError(f"duplicate episode id {ep.id!r}")
            ids.add(ep.id)
        return self

    def max_frames(self):
        return max((ep.num_frames for ep in self.episodes), default=0)


@dataclass(frozen=True)
class Batch:
    """Episode indices; position i of each stream pairs as the positive."""

    indices: tuple

    def __len__(self):
        return len(self.indices)


def write_container(dataset: Dataset, path):
    """Write the dataset; bit-deterministic for identical input."""
    dataset.validate()
    path = Path(path)
    parts = [MAGIC,
             struct.pack("<III", VERSION, len(dataset.episodes), dataset.dim)]
    manifest = []
    for ep in dataset.episodes:
        ident = ep.id.encode("utf-8")
        if len(ident) > 0xFFFF:
            raise ValidationError(f"episode id too long: {ep.id[:32]!r}...")
        parts.append(struct.pack("<H", len(ident)))
        parts.append(ident)
        parts.append(struct.pack("<II", ep.num_words, ep.num_frames))
        for arr in (ep.query_tokens, ep.frames, ep.captions):
            parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        manifest.append({"id": ep.id, "L": ep.num_words, "K": ep.num_frames})
    path.write_bytes(b"".join(parts))
    sidecar = {"version": VERSION, "dim": dataset.dim, "episodes": manifest}
    path.with_suffix(".json").write_text(
        json.dumps(sidecar, sort_keys=True, indent=2) + "\n")


class _Reader:
    def __init__(self, blob, context):
        self.blob = blob
        self.pos = 0
        self.context = context

    def take(self, n, what):
        if self.pos + n > len(self.blob):
            raise CorruptionError(
                f"truncated container while reading {what} ({self.context()})")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def read_container(path) -> Dataset:
    blob = Path(path).read_bytes()
    current = {"id": "<header>"}
    r = _Reader(blob, lambda: f"episode {current['id']!r}")
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    version, count, dim = r.unpack("<III", "header")
    if version != VERSION:
        raise FormatError(f"unsupported container version {version}")
    episodes = []
    for _ in range(count):
        (id_len,) = r.unpack("<H", "id length")
        ident = r.take(id_len, "id").decode("utf-8")
        current["id"] = ident
        l, k = r.unpack("<II", "episode header")
        if l < 1 or k < 1:
            raise ValidationError(f"episode {ident!r}: L={l}, K={k} out of range")

        def block(rows, what):
            raw = r.take(rows * dim * 8, what)
            return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(rows, dim)

        q = block(l + 1, "query tokens")
        f = block(k, "frames")
        c = block(k, "captions")
        episodes.append(Episode(id=ident, query_tokens=q, frames=f, captions=c))
    if r.pos != len(blob):
        raise CorruptionError(f"{len(blob) - r.pos} trailing bytes after last episode")
    return Dataset(episodes=episodes, dim=dim).validate()


# -- batching ------------------------------------------------------------------


def _splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return x, z ^ (z >> 31)


def _shuffled(n, seed, epoch):
    """Fisher-Yates with an integer-only PRNG; pure function of (seed, epoch)."""
    order = list(range(n))
    state = (seed * 0x2545F4914F6CDD1D + epoch) & 0xFFFFFFFFFFFFFFFF
    for i in range(n - 1, 0, -1):
        state, draw = _splitmix64(state)
        j = draw % (i + 1)
        order[i], order[j] = order[j], order[i]
    return order


def batch_iter(dataset: Dataset, batch_size, seed=0, shuffle=True, epoch=0):
    """Partition one epoch into floor(N/B) full batches; remainder dropped."""
    n = len(dataset)
    if batch_size < 1 or batch_size > n:
        raise UsageError(f"batch size {batch_size} not in [1, {n}]")
    order = _shuffled(n, seed, epoch) if shuffle else list(range(n))
    for start in range(0, n - batch_size + 1, batch_size):
        yield Batch(indices=tuple(order[start:start + batch_size]))
