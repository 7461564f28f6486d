"""Learnable feature enhancement: cross-modal co-attention between frame and
caption streams, then a per-modality temporal block with additive positional
rows.

Both blocks are pre-normalization: attention and feed-forward contributions
are added onto a residual stream, so zeroing the output projections makes
each block an exact identity. The temporal block computes its contributions
from (input + positions) but adds them back onto the position-free input.

Checkpoint layout (little-endian): magic "NRVC" | u32 version=1 | u32 heads |
u32 entry count; per entry: u16 name length | name UTF-8 | u8 ndim |
u32 dims... | float64 payload row-major.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, CorruptionError, FormatError

FFN_MULT = 4

_BLOCKS = ("co_video", "co_narration", "temporal_video", "temporal_narration")
_BLOCK_WEIGHTS = ("wq", "wk", "wv", "wo", "ffn_w1", "ffn_w2")
_BLOCK_SUFFIXES = ("wq", "wk", "wv", "wo",
                   "ln1_gain", "ln1_bias", "ln2_gain", "ln2_bias",
                   "ffn_w1", "ffn_b1", "ffn_w2", "ffn_b2")

CKPT_MAGIC = b"NRVC"
CKPT_VERSION = 1


class ModelParams:
    """Named parameter tensors plus the attention head count."""

    def __init__(self, dim, heads, tensors):
        self.dim = dim
        self.heads = heads
        self.tensors = tensors

    def __getitem__(self, name):
        return self.tensors[name]

    def named(self):
        return self.tensors.items()

    @property
    def k_max(self):
        return self.tensors["pos_embedding"].data.shape[0]

    @property
    def word_weight(self):
        return self.tensors["word_weight"]

    @property
    def word_bias(self):
        return self.tensors["word_bias"]

    def block(self, name):
        return {s: self.tensors[f"{name}.{s}"] for s in _BLOCK_SUFFIXES}

    def reset_grads(self):
        for t in self.tensors.values():
            t.grad = None


def _xavier(rng, fan_in, fan_out, shape):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_params(dim, heads, k_max, seed=0) -> ModelParams:
    """Deterministic seeded init; same seed gives bitwise-identical params."""
    if dim % heads != 0:
        raise ConfigError(f"model dim {dim} not divisible by {heads} heads")
    if k_max < 1:
        raise ConfigError(f"k_max must be >= 1, got {k_max}")
    rng = np.random.default_rng(seed)
    hidden = FFN_MULT * dim
    tensors = {}

    def param(name, arr):
        tensors[name] = ad.Tensor(arr, requires_grad=True)

    for blk in _BLOCKS:
        for w in ("wq", "wk", "wv", "wo"):
            param(f"{blk}.{w}", _xavier(rng, dim, dim, (dim, dim)))
        param(f"{blk}.ffn_w1", _xavier(rng, dim, hidden, (dim, hidden)))
        param(f"{blk}.ffn_w2", _xavier(rng, hidden, dim, (hidden, dim)))
        param(f"{blk}.ffn_b1", np.zeros(hidden))
        param(f"{blk}.ffn_b2", np.zeros(dim))
        for ln in ("ln1", "ln2"):
            param(f"{blk}.{ln}_gain", np.ones(dim))
            param(f"{blk}.{ln}_bias", np.zeros(dim))
    param("pos_embedding", np.zeros((k_max, dim)))
    param("word_weight", _xavier(rng, dim, 1, (dim,)))
    param("word_bias", np.zeros(()))
    return ModelParams(dim=dim, heads=heads, tensors=tensors)


def _contributions(x_in, ctx, block, heads):
    """Attention and feed-forward deltas of one pre-norm encoder block.

    Returns (a, f): a attends LN1(x_in) over LN1(ctx); f is the FFN applied
    to LN2(x_in + a). Both deltas are scaled by 1/sqrt(D): layer-normed rows
    have norm ~sqrt(D) while the residual stream carries unit-norm embedding
    rows, and the untrained blocks must perturb, not drown, that stream.
    The caller picks the residual base.
    """
    dim = x_in.data.shape[-1]
    scale = 1.0 / np.sqrt(dim)
    xn = ad.layer_norm(x_in, block["ln1_gain"], block["ln1_bias"])
    cn = xn if ctx is x_in else ad.layer_norm(ctx, block["ln1_gain"], block["ln1_bias"])
    a = scale * ad.multi_head_attention(xn, cn, cn, block["wq"], block["wk"],
                                        block["wv"], block["wo"], heads)
    z = x_in + a
    zn = ad.layer_norm(z, block["ln2_gain"], block["ln2_bias"])
    f = scale * (ad.gelu(zn @ block["ffn_w1"] + block["ffn_b1"]) @ block["ffn_w2"]
                 + block["ffn_b2"])
    return a, f


def co_attention(frames, captions, params: ModelParams):
    """Mutual cross-attention: each stream queries the other, K row by row."""
    frames = frames if isinstance(frames, ad.Tensor) else ad.Tensor(frames)
    captions = captions if isinstance(captions, ad.Tensor) else ad.Tensor(captions)
    if frames.data.shape != captions.data.shape:
        from .errors import ShapeError
        raise ShapeError(
            f"frame/caption shapes differ: {frames.data.shape} vs {captions.data.shape}")
    av, fv = _contributions(frames, captions, params.block("co_video"), params.heads)
    an, fn = _contributions(captions, frames, params.block("co_narration"), params.heads)
    v_hat = frames + av + fv
    n_hat = captions + an + fn
    return v_hat, n_hat


def temporal(seq_hat, params: ModelParams, modality):
    """Self-attention over the sequence with positional rows added first;
    contributions land on the position-free input (outer residual)."""
    if modality not in ("video", "narration"):
        raise ConfigError(f"unknown modality {modality!r}")
    seq_hat = seq_hat if isinstance(seq_hat, ad.Tensor) else ad.Tensor(seq_hat)
    k = seq_hat.data.shape[0]
    if k > params.k_max:
        raise ConfigError(f"sequence length {k} exceeds positional rows {params.k_max}")
    pos = ad.take_rows(params["pos_embedding"], np.arange(k))
    y = seq_hat + pos
    a, f = _contributions(y, y, params.block(f"temporal_{modality}"), params.heads)
    return seq_hat + a + f


@dataclass
class EnhancedFeatures:
    """Per-episode enhanced streams: hats after co-attention, checks after
    the temporal block."""

    v_hat: ad.Tensor
    n_hat: ad.Tensor
    v_check: ad.Tensor
    n_check: ad.Tensor


def enhance(frames, captions, params: ModelParams) -> EnhancedFeatures:
    v_hat, n_hat = co_attention(frames, captions, params)
    return EnhancedFeatures(
        v_hat=v_hat,
        n_hat=n_hat,
        v_check=temporal(v_hat, params, "video"),
        n_check=temporal(n_hat, params, "narration"),
    )


# -- checkpoints ---------------------------------------------------------------


def save_params(params: ModelParams, path):
    parts = [CKPT_MAGIC,
             struct.pack("<III", CKPT_VERSION, params.heads, len(params.tensors))]
    for name, t in params.named():
        nb = name.encode("utf-8")
        arr = t.data
        parts.append(struct.pack("<H", len(nb)))
        parts.append(nb)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_params(path) -> ModelParams:
    blob = Path(path).read_bytes()
    if blob[:4] != CKPT_MAGIC:
        raise FormatError(f"bad checkpoint magic {blob[:4]!r}, expected {CKPT_MAGIC!r}")
    pos = 4
    try:
        version, heads, count = struct.unpack_from("<III", blob, pos)
        pos += 12
        if version != CKPT_VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        tensors = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", blob, pos)
            pos += 2
            name = blob[pos:pos + nlen].decode("utf-8")
            pos += nlen
            (ndim,) = struct.unpack_from("<B", blob, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}I", blob, pos)
            pos += 4 * ndim
            size = int(np.prod(shape, dtype=np.int64)) if ndim else 1
            raw = blob[pos:pos + 8 * size]
            if len(raw) != 8 * size:
                raise CorruptionError(f"checkpoint truncated in tensor {name!r}")
            pos += 8 * size
            arr = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
            tensors[name] = ad.Tensor(arr, requires_grad=True)
    except struct.error as exc:
        raise CorruptionError(f"checkpoint truncated: {exc}") from exc
    if pos != len(blob):
        raise CorruptionError(f"{len(blob) - pos} trailing bytes in checkpoint")
    if "word_weight" not in tensors or "pos_embedding" not in tensors:
        raise CorruptionError("checkpoint missing core tensors")
    dim = tensors["word_weight"].data.shape[0]
    return ModelParams(dim=dim, heads=heads, tensors=tensors)
