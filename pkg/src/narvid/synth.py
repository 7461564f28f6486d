"""Planted synthetic episodes: a latent topic per episode, noisy views of it
as words/frames/captions, plus two difficulty knobs -- a fraction of frames
borrowed from other topics (irrelevant footage the filter should reject)
and a fraction of captions replaced with other topics (hallucinations).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset, Episode
from .errors import ConfigError


@dataclass
class PlantSpec:
    episodes: int = 64
    frames: int = 12
    words: int = 6
    dim: int = 32
    seed: int = 0
    signal: float = 0.6        # s: topic weight in every generated row
    corrupt: float = 0.0       # rho: fraction of captions hallucinated
    overlap: float = 0.0       # o: fraction of frames from another topic

    def validate(self):
        if self.episodes < 1 or self.frames < 1 or self.words < 1 or self.dim < 2:
            raise ConfigError("episodes, frames, words >= 1 and dim >= 2 required")
        for name in ("signal", "corrupt", "overlap"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {value}")
        return self


def _unit(v):
    return v / max(np.linalg.norm(v), 1e-12)


def _count(rate, k):
    return 0 if rate == 0 else min(k, math.ceil(rate * k))


def gen_planted(spec: PlantSpec) -> Dataset:
    """Deterministic in spec.seed, down to the container bytes."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n, k, l, d, s = spec.episodes, spec.frames, spec.words, spec.dim, spec.signal
    topics = np.stack([_unit(rng.normal(size=d)) for _ in range(n)])

    def noisy(topic):
        return _unit(s * topic + (1.0 - s) * rng.normal(size=d))

    def other_index(i):
        j = int(rng.integers(0, n - 1)) if n > 1 else i
        return j + 1 if (n > 1 and j >= i) else j

    episodes = []
    for i in range(n):
        words = np.stack([noisy(topics[i]) for _ in range(l)])
        eos = _unit(words.mean(axis=0))
        sources = np.full(k, i)
        for row in rng.permutation(k)[:_count(spec.overlap, k)]:
            sources[row] = other_index(i)
        frames = np.stack([noisy(topics[src]) for src in sources])
        caption_sources = sources.copy()
        for row in rng.permutation(k)[:_count(spec.corrupt, k)]:
            caption_sources[row] = other_index(i)
        captions = np.stack([noisy(topics[src]) for src in caption_sources])
        episodes.append(Episode(id=f"ep{i:04d}",
                                query_tokens=np.vstack([words, eos[None, :]]),
                                frames=frames, captions=captions))
    return Dataset(episodes=episodes, dim=d).validate()
