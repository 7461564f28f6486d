"""Training losses and the optimizer step.

Both score matrices feed a symmetric temperature-scaled contrastive loss.
Hard negatives are batch indices whose diagonal gap falls below lambda
times the row (or column) standard deviation in either matrix; the unified
sets drive a hinge rank loss with margin eta*lambda*sigma. Set membership
and the sigma thresholds are computed on detached scores: gradients flow
through matrix entries only, never through the combinatorial selection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, ShapeError

DEFAULTS = {
    "p": 0.4,
    "lambda": 0.7,
    "eta": 1.8,
    "alpha": 1.0,
    "tau": 0.1,
    "lr": 1e-4,
    "warmup": 0.1,
    "epochs": 5,
    "batch_size": 8,
    "heads": 4,
    "seed": 0,
}


@dataclass
class TrainConfig:
    p: float = DEFAULTS["p"]
    lam: float = DEFAULTS["lambda"]
    eta: float = DEFAULTS["eta"]
    alpha: float = DEFAULTS["alpha"]
    tau: float = DEFAULTS["tau"]
    lr: float = DEFAULTS["lr"]
    warmup: float = DEFAULTS["warmup"]
    epochs: int = DEFAULTS["epochs"]
    batch_size: int = DEFAULTS["batch_size"]
    heads: int = DEFAULTS["heads"]
    seed: int = DEFAULTS["seed"]
    filter_mode: str = "nucleus"
    filter_k: int = 3

    def validate(self):
        if self.lam < 0 or self.eta < 0 or self.alpha < 0:
            raise ConfigError("lambda, eta, alpha must be nonnegative")
        if self.tau <= 0:
            raise ConfigError("tau must be positive")
        if not 0.0 < self.p <= 1.0:
            raise ConfigError(f"p must be in (0, 1], got {self.p}")
        if not 0.0 <= self.warmup <= 1.0:
            raise ConfigError(f"warmup proportion must be in [0, 1], got {self.warmup}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        return self

    @classmethod
    def from_dict(cls, raw):
        known = {"p": "p", "lambda": "lam", "eta": "eta", "alpha": "alpha",
                 "tau": "tau", "lr": "lr", "warmup": "warmup", "epochs": "epochs",
                 "batch_size": "batch_size", "heads": "heads", "seed": "seed",
                 "filter_mode": "filter_mode", "filter_k": "filter_k"}
        unknown = set(raw) - set(known)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {known[k]: v for k, v in raw.items()}
        return cls(**kwargs).validate()


@dataclass
class HardNegativeSets:
    """Per-row and per-column hard-negative indices with the stds behind them."""

    h_qv: list
    h_qn: list
    h: list          # unified row sets H_i
    h_t: list        # unified column sets from the transposed matrices
    row_std_qv: np.ndarray
    row_std_qn: np.ndarray
    col_std_qv: np.ndarray
    col_std_qn: np.ndarray

    def mean_size(self):
        b = len(self.h)
        return sum(len(s) for s in self.h) / b if b else 0.0


def _require_square(s):
    if s.data.ndim != 2 or s.data.shape[0] != s.data.shape[1]:
        raise ShapeError(f"expected a square matrix, got {s.data.shape}")


def info_nce(s, tau):
    """Symmetric cross-entropy over rows and columns of s/tau, 1/2B scaled."""
    s = s if isinstance(s, ad.Tensor) else ad.Tensor(s)
    _require_square(s)
    b = s.data.shape[0]
    scaled = s * (1.0 / tau)
    diag = ad.diagonal(scaled)
    row_lse = ad.logsumexp(scaled, axis=1)
    col_lse = ad.logsumexp(ad.transpose(scaled), axis=1)
    total = ad.tsum(diag - row_lse) + ad.tsum(diag - col_lse)
    return (-1.0 / (2.0 * b)) * total


def hard_sets(s_qv, s_qn, lam) -> HardNegativeSets:
    """Gap-vs-lambda*sigma selection on detached scores (population std,
    diagonal included)."""
    a = s_qv.data if isinstance(s_qv, ad.Tensor) else np.asarray(s_qv, dtype=np.float64)
    c = s_qn.data if isinstance(s_qn, ad.Tensor) else np.asarray(s_qn, dtype=np.float64)
    if a.shape != c.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"matrices must be square and equal-shape: {a.shape} vs {c.shape}")
    b = a.shape[0]
    row_std_qv = a.std(axis=1)
    row_std_qn = c.std(axis=1)
    col_std_qv = a.std(axis=0)
    col_std_qn = c.std(axis=0)

    def sets_from(m, stds, transposed):
        out = []
        for i in range(b):
            row = m[:, i] if transposed else m[i]
            gaps = m[i, i] - row
            members = {int(j) for j in np.nonzero(gaps < lam * stds[i])[0] if j != i}
            out.append(members)
        return out

    h_qv = sets_from(a, row_std_qv, False)
    h_qn = sets_from(c, row_std_qn, False)
    h_qv_t = sets_from(a, col_std_qv, True)
    h_qn_t = sets_from(c, col_std_qn, True)
    return HardNegativeSets(
        h_qv=h_qv, h_qn=h_qn,
        h=[h_qv[i] | h_qn[i] for i in range(b)],
        h_t=[h_qv_t[i] | h_qn_t[i] for i in range(b)],
        row_std_qv=row_std_qv, row_std_qn=row_std_qn,
        col_std_qv=col_std_qv, col_std_qn=col_std_qn,
    )


def _mask_from_sets(sets, b):
    mask = np.zeros((b, b))
    for i, members in enumerate(sets):
        for j in members:
            mask[i, j] = 1.0
    return mask


def matrix_row_std(s):
    """Differentiable per-row population std; the 1e-24 keeps sqrt off the
    zero-variance singularity without moving any std worth measuring."""
    s = s if isinstance(s, ad.Tensor) else ad.Tensor(s)
    mu = ad.tmean(s, axis=1, keepdims=True)
    centered = s - mu
    return ad.sqrt(ad.tmean(centered * centered, axis=1) + ad.Tensor(1e-24))


def hard_rank_loss(s, sets: HardNegativeSets, lam, eta, row_std=None, col_std=None):
    """Hinge over the unified sets: row direction uses S(i,j)-S(i,i)+margin_i,
    column direction S(j,i)-S(i,i) with the column-std margin.

    Margins default to live (differentiable) stds of s; membership masks are
    always the detached combinatorial sets.
    """
    s = s if isinstance(s, ad.Tensor) else ad.Tensor(s)
    _require_square(s)
    b = s.data.shape[0]
    if row_std is None:
        row_std = matrix_row_std(s)
    if col_std is None:
        col_std = matrix_row_std(ad.transpose(s))
    row_std = row_std if isinstance(row_std, ad.Tensor) else ad.Tensor(row_std)
    col_std = col_std if isinstance(col_std, ad.Tensor) else ad.Tensor(col_std)
    diag = ad.reshape(ad.diagonal(s), (b, 1))
    row_mask = _mask_from_sets(sets.h, b)
    col_mask = _mask_from_sets(sets.h_t, b)
    row_margin = ad.reshape((eta * lam) * row_std, (b, 1))
    col_margin = ad.reshape((eta * lam) * col_std, (b, 1))
    row_part = ad.tsum(ad.relu(s - diag + row_margin) * ad.Tensor(row_mask))
    col_part = ad.tsum(ad.relu(ad.transpose(s) - diag + col_margin) * ad.Tensor(col_mask))
    return (1.0 / (2.0 * b)) * (row_part + col_part)


def cross_view_hard_loss(s_qv, s_qn, sets: HardNegativeSets, lam, eta):
    return hard_rank_loss(s_qv, sets, lam, eta) + hard_rank_loss(s_qn, sets, lam, eta)


def total_loss(s_qv, s_qn, config: TrainConfig):
    """Contrastive average plus alpha-weighted cross-view hinge loss.

    Returns (loss, parts dict). alpha == 0 returns the contrastive node
    itself (bitwise identical) and reports l_cvh as None.
    """
    nce = 0.5 * (info_nce(s_qv, config.tau) + info_nce(s_qn, config.tau))
    sets = hard_sets(s_qv, s_qn, config.lam)
    if config.alpha == 0:
        return nce, {"l_nce": nce, "l_cvh": None, "sets": sets}
    cvh = cross_view_hard_loss(s_qv, s_qn, sets, config.lam, config.eta)
    return nce + config.alpha * cvh, {"l_nce": nce, "l_cvh": cvh, "sets": sets}


def _restricted_lse(scaled, members_by_row, transposed):
    """logsumexp over {diagonal} union {member columns} per row; rows are
    handled one by one since the member sets are ragged."""
    b = scaled.data.shape[0]
    terms = []
    for i in range(b):
        cols = [i] + sorted(members_by_row[i])
        row = ad.take_rows(ad.transpose(scaled), [i]) if transposed \
            else ad.take_rows(scaled, [i])
        picked = ad.take_rows(ad.reshape(row, (b,)), cols)
        terms.append(ad.logsumexp(picked, axis=0))
    return ad.stack(terms)


def hard_info_nce(s_qv, s_qn, sets: HardNegativeSets, tau):
    """Contrastive variant with denominators restricted to the hard sets
    (positive term always included); empty sets contribute -log(1) = 0."""

    def one(s):
        s = s if isinstance(s, ad.Tensor) else ad.Tensor(s)
        _require_square(s)
        b = s.data.shape[0]
        scaled = s * (1.0 / tau)
        diag = ad.diagonal(scaled)
        row = _restricted_lse(scaled, sets.h, transposed=False)
        col = _restricted_lse(scaled, sets.h_t, transposed=True)
        return (-1.0 / (2.0 * b)) * (ad.tsum(diag - row) + ad.tsum(diag - col))

    return 0.5 * (one(s_qv) + one(s_qn))


# -- optimizer ------------------------------------------------------------------


def lr_at(step, total_steps, base_lr, warmup_proportion):
    """Linear warm-up to base, then half-cosine decay to ~0; step is 1-based."""
    warm = int(round(warmup_proportion * total_steps))
    if warm > 0 and step <= warm:
        return base_lr * step / warm
    if total_steps == warm:
        return base_lr
    progress = (step - warm) / (total_steps - warm)
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


@dataclass
class Adam:
    """Adaptive-moment optimizer with bias correction."""

    params: list
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def __post_init__(self):
        if not self.m:
            self.m = [np.zeros_like(p.data) for p in self.params]
            self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, lr):
        self.step_count += 1
        t = self.step_count
        for i, p in enumerate(self.params):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * (g * g)
            m_hat = self.m[i] / (1 - self.beta1 ** t)
            v_hat = self.v[i] / (1 - self.beta2 ** t)
            p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


def train_step(params, optimizer: Adam, episodes, config: TrainConfig,
               step_index, total_steps):
    """One optimization step over a batch of episodes.

    Forward (enhance -> match -> loss), backward, Adam update at the
    scheduled rate. Returns a log record of detached scalars.
    """
    from .matching import similarity_matrices
    from .model import enhance

    optimizer.zero_grad()
    enhanced = [enhance(ep.frames, ep.captions, params) for ep in episodes]
    s_qv, s_qn = similarity_matrices(episodes, enhanced, params, p=config.p,
                                     tau=config.tau, filter_mode=config.filter_mode,
                                     filter_k=config.filter_k)
    loss, parts = total_loss(s_qv, s_qn, config)
    loss.backward()
    lr = lr_at(step_index, total_steps, config.lr, config.warmup)
    optimizer.step(lr)
    cvh = parts["l_cvh"]
    return {
        "step": step_index,
        "lr": lr,
        "loss": loss.item(),
        "l_nce": parts["l_nce"].item(),
        "l_cvh": 0.0 if cvh is None else cvh.item(),
        "hard_mean": parts["sets"].mean_size(),
    }


def train(dataset, config: TrainConfig, log_fn=None):
    """Full training loop; returns the trained params.

    Batches are a pure function of (seed, epoch); the remainder of each
    epoch is dropped so every loss sees the same B.
    """
    from .data import batch_iter
    from .model import init_params

    config.validate()
    n = len(dataset)
    if config.batch_size > n:
        raise ConfigError(f"batch size {config.batch_size} exceeds dataset size {n}")
    params = init_params(dataset.dim, config.heads, max(dataset.max_frames(), 1),
                         seed=config.seed)
    optimizer = Adam([t for _, t in params.named()])
    steps_per_epoch = n // config.batch_size
    total_steps = steps_per_epoch * config.epochs
    step = 0
    for epoch in range(config.epochs):
        for batch in batch_iter(dataset, config.batch_size, seed=config.seed,
                                shuffle=True, epoch=epoch):
            step += 1
            episodes = [dataset[i] for i in batch.indices]
            record = train_step(params, optimizer, episodes, config, step, total_steps)
            record["epoch"] = epoch
            if log_fn is not None:
                log_fn(record)
    return params
