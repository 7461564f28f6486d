"""Score fusion, ranking, and retrieval metrics.

The two score matrices live on different value ranges, so the default
fusion z-normalizes each over all entries before summing. Ranking is
pessimistic about ties: any non-target score >= the target's counts
against it.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, ShapeError, UsageError

STD_EPS = 1e-8

FUSION_MODES = ("standardized", "sum", "qv", "qn")


@dataclass
class FusionStats:
    """Mean/std over all entries of each matrix at evaluation time."""

    mu_qv: float
    sigma_qv: float
    mu_qn: float
    sigma_qn: float


@dataclass
class RetrievalReport:
    direction: str
    mode: str
    r1: float
    r5: float
    r10: float
    mdr: float
    mnr: float
    n: int

    def to_dict(self):
        return asdict(self)


def fusion_stats(s_qv, s_qn) -> FusionStats:
    return FusionStats(mu_qv=float(s_qv.mean()), sigma_qv=float(s_qv.std()),
                       mu_qn=float(s_qn.mean()), sigma_qn=float(s_qn.std()))


def fuse(s_qv, s_qn, mode="standardized"):
    """Combine the two score matrices; single modes pass through."""
    s_qv = s_qv.data if isinstance(s_qv, ad.Tensor) else np.asarray(s_qv, dtype=np.float64)
    s_qn = s_qn.data if isinstance(s_qn, ad.Tensor) else np.asarray(s_qn, dtype=np.float64)
    if s_qv.shape != s_qn.shape:
        raise ShapeError(f"matrix shapes differ: {s_qv.shape} vs {s_qn.shape}")
    if mode == "qv":
        return s_qv.copy()
    if mode == "qn":
        return s_qn.copy()
    if mode == "sum":
        return s_qv + s_qn
    if mode == "standardized":
        stats = fusion_stats(s_qv, s_qn)
        z_qv = (s_qv - stats.mu_qv) / max(stats.sigma_qv, STD_EPS)
        z_qn = (s_qn - stats.mu_qn) / max(stats.sigma_qn, STD_EPS)
        return z_qv + z_qn
    raise ConfigError(f"unknown fusion mode {mode!r}; expected one of {FUSION_MODES}")


def rank_metrics(scores, ground_truth=None, direction="t2v", mode="standardized"
                 ) -> RetrievalReport:
    """Ranks with pessimistic ties; MdR averages the middle pair for even N."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2:
        raise ShapeError(f"score matrix must be 2-D, got {scores.shape}")
    n, m = scores.shape
    if ground_truth is None:
        if n != m:
            raise UsageError("non-square scores need an explicit ground-truth mapping")
        gt = np.arange(n)
    else:
        gt = np.asarray(ground_truth, dtype=np.intp)
        if gt.shape != (n,) or (gt < 0).any() or (gt >= m).any():
            raise UsageError("ground-truth mapping out of range")
    target = scores[np.arange(n), gt]
    better_or_tied = (scores >= target[:, None]).sum(axis=1)
    # the target itself always satisfies >=; ties elsewhere count against
    ranks = better_or_tied.astype(np.float64)
    ordered = np.sort(ranks)
    if n % 2 == 1:
        mdr = float(ordered[n // 2])
    else:
        mdr = float(0.5 * (ordered[n // 2 - 1] + ordered[n // 2]))
    return RetrievalReport(
        direction=direction,
        mode=mode,
        r1=float(100.0 * (ranks <= 1).mean()),
        r5=float(100.0 * (ranks <= 5).mean()),
        r10=float(100.0 * (ranks <= 10).mean()),
        mdr=mdr,
        mnr=float(ranks.mean()),
        n=n,
    )


def raw_similarity_matrices(dataset, pooling="mean"):
    """Zero-shot matrices on raw features: EOS vector vs mean-pooled rows."""
    if pooling != "mean":
        raise ConfigError(f"unsupported pooling {pooling!r}")
    n = len(dataset)
    eos = np.stack([ep.eos for ep in dataset.episodes])
    frames = np.stack([ep.frames.mean(axis=0) for ep in dataset.episodes])
    captions = np.stack([ep.captions.mean(axis=0) for ep in dataset.episodes])

    def unit(rows):
        return rows / np.maximum(np.linalg.norm(rows, axis=1, keepdims=True),
                                 ad.COSINE_EPS)

    ue = unit(eos)
    return ue @ unit(frames).T, ue @ unit(captions).T


def zero_shot_eval(dataset, pooling="mean", direction="t2v"):
    """Untrained baseline reports for every fusion mode."""
    s_qv, s_qn = raw_similarity_matrices(dataset, pooling=pooling)
    reports = {}
    for mode in FUSION_MODES:
        fused = fuse(s_qv, s_qn, mode=mode)
        if direction == "v2t":
            fused = fused.T
        reports[mode] = rank_metrics(fused, direction=direction, mode=mode)
    return reports


def model_similarity_matrices(dataset, params, p=0.4, tau=0.1,
                              filter_mode="nucleus", filter_k=3):
    """Full N x N score matrices through the trained pipeline, detached."""
    from .matching import similarity_matrices
    from .model import enhance

    with ad.no_grad():
        enhanced = [enhance(ep.frames, ep.captions, params)
                    for ep in dataset.episodes]
        s_qv, s_qn = similarity_matrices(dataset.episodes, enhanced, params,
                                         p=p, tau=tau, filter_mode=filter_mode,
                                         filter_k=filter_k)
    return s_qv.data, s_qn.data


def model_eval(dataset, params, p=0.4, tau=0.1, mode="standardized",
               direction="t2v", filter_mode="nucleus", filter_k=3
               ) -> RetrievalReport:
    """Rank report of the trained pipeline under the chosen fusion mode."""
    s_qv, s_qn = model_similarity_matrices(dataset, params, p=p, tau=tau,
                                           filter_mode=filter_mode,
                                           filter_k=filter_k)
    fused = fuse(s_qv, s_qn, mode=mode)
    if direction == "v2t":
        fused = fused.T
    return rank_metrics(fused, direction=direction, mode=mode)
