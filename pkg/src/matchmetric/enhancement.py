"""Trainable enhancement layer mapping encoder outputs into a shared space.

Two variants produce the enhanced pair ``(e_t, e_c)``:

* ``linear``          - separate affine maps of the pooled task / code
                        vectors; each output depends only on its own side.
* ``cross_attention`` - per side, multi-head attention where one side's
                        token rows are the queries and the other side's are
                        keys and values, followed by layer normalization,
                        mean pooling over query positions, and a final
                        affine projection into the shared space.

Forward passes record a cache; :func:`enhancement_backward` consumes it and
returns analytic gradients for every parameter tensor and both inputs.
No positional encodings and no residual connections: position information
is the encoder backend's concern.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .seeding import substream

LINEAR = "linear"
CROSS_ATTENTION = "cross_attention"
VARIANTS = (LINEAR, CROSS_ATTENTION)
LAYER_NORM_EPS = 1e-5
DEFAULT_NUM_HEADS = 8
DEFAULT_DROPOUT = 0.2
SIDES = ("task", "code")


class EnhancementError(ValueError):
    """Bad variant, shape, or configuration."""


@dataclass(frozen=True)
class EnhancedPair:
    """Task and code embeddings in the shared d-dimensional space."""

    e_t: np.ndarray
    e_c: np.ndarray

    def __post_init__(self) -> None:
        if self.e_t.shape != self.e_c.shape or self.e_t.ndim != 1:
            raise EnhancementError("enhanced embeddings must be vectors of equal length")
        if not (np.all(np.isfinite(self.e_t)) and np.all(np.isfinite(self.e_c))):
            raise EnhancementError("enhanced embeddings contain non-finite values")


@dataclass
class EnhancementParameters:
    """Named parameter tensors for one enhancement variant.

    Tensor keys are stable and ordered; optimizers and checkpoints rely on
    that ordering.
    """

    variant: str
    encoder_dim: int
    shared_dim: int
    num_heads: int = DEFAULT_NUM_HEADS
    dropout_rate: float = DEFAULT_DROPOUT
    tensors: dict[str, np.ndarray] = None

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise EnhancementError(f"unknown variant {self.variant!r}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise EnhancementError("dropout_rate must lie in [0, 1)")
        if self.variant == CROSS_ATTENTION:
            if self.encoder_dim % self.num_heads:
                raise EnhancementError(
                    f"attention dimension {self.encoder_dim} not divisible by "
                    f"{self.num_heads} heads"
                )
            if self.shared_dim % self.num_heads:
                raise EnhancementError(
                    f"shared dimension {self.shared_dim} not divisible by "
                    f"{self.num_heads} heads"
                )
        if self.tensors is not None:
            for name, tensor in self.tensors.items():
                if not np.all(np.isfinite(tensor)):
                    raise EnhancementError(f"parameter {name!r} contains non-finite values")


def _uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_enhancement(
    variant: str,
    encoder_dim: int,
    shared_dim: int,
    seed: int,
    num_heads: int = DEFAULT_NUM_HEADS,
    dropout_rate: float = DEFAULT_DROPOUT,
) -> EnhancementParameters:
    """Seeded init: weights uniform scaled by 1/sqrt(fan_in), biases zero."""
    rng = substream(seed, "init", "enhancement", variant)
    tensors: dict[str, np.ndarray] = {}
    if variant == LINEAR:
        for side in SIDES:
            tensors[f"linear/{side}/w"] = _uniform(rng, (shared_dim, encoder_dim), encoder_dim)
            tensors[f"linear/{side}/b"] = np.zeros(shared_dim)
    elif variant == CROSS_ATTENTION:
        a = encoder_dim
        for side in SIDES:
            for proj in ("q", "k", "v", "o"):
                tensors[f"ca/{side}/{proj}_w"] = _uniform(rng, (a, a), a)
                tensors[f"ca/{side}/{proj}_b"] = np.zeros(a)
            tensors[f"ca/{side}/ln_g"] = np.ones(a)
            tensors[f"ca/{side}/ln_b"] = np.zeros(a)
            tensors[f"ca/{side}/p_w"] = _uniform(rng, (shared_dim, a), a)
            tensors[f"ca/{side}/p_b"] = np.zeros(shared_dim)
    else:
        raise EnhancementError(f"unknown variant {variant!r}")
    return EnhancementParameters(
        variant=variant,
        encoder_dim=encoder_dim,
        shared_dim=shared_dim,
        num_heads=num_heads,
        dropout_rate=dropout_rate,
        tensors=tensors,
    )


def _affine(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    # Rows of x map through w: (L, in) @ (out, in).T + (out,)
    return x @ w.T + b


def _affine_backward(x: np.ndarray, w: np.ndarray, dy: np.ndarray):
    dw = dy.T @ x
    db = dy.sum(axis=0)
    dx = dy @ w
    return dx, dw, db


@dataclass
class LinearCache:
    task_pooled: np.ndarray
    code_pooled: np.ndarray


def enhance_linear(
    params: EnhancementParameters, task_pooled: np.ndarray, code_pooled: np.ndarray
) -> tuple[EnhancedPair, LinearCache]:
    """e_t = W_t t + b_t and e_c = W_c c + b_c; each side sees only its input."""
    if params.variant != LINEAR:
        raise EnhancementError("parameters are not for the linear variant")
    w_t = params.tensors["linear/task/w"]
    w_c = params.tensors["linear/code/w"]
    if task_pooled.shape != (w_t.shape[1],) or code_pooled.shape != (w_c.shape[1],):
        raise EnhancementError(
            f"pooled inputs {task_pooled.shape}/{code_pooled.shape} do not match "
            f"weight shapes {w_t.shape}/{w_c.shape}"
        )
    e_t = w_t @ task_pooled + params.tensors["linear/task/b"]
    e_c = w_c @ code_pooled + params.tensors["linear/code/b"]
    return EnhancedPair(e_t=e_t, e_c=e_c), LinearCache(task_pooled, code_pooled)


def _softmax_rows(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def _split_heads(x: np.ndarray, num_heads: int) -> np.ndarray:
    rows, dim = x.shape
    return x.reshape(rows, num_heads, dim // num_heads).transpose(1, 0, 2)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    heads, rows, depth = x.shape
    return x.transpose(1, 0, 2).reshape(rows, heads * depth)


@dataclass
class _SideCache:
    q_in: np.ndarray
    kv_in: np.ndarray
    q_heads: np.ndarray
    k_heads: np.ndarray
    v_heads: np.ndarray
    attn: np.ndarray  # post-softmax, pre-dropout (H, Lq, Lk)
    dropout_mask: np.ndarray | None
    merged: np.ndarray  # concatenated head outputs (Lq, a)
    att_out: np.ndarray  # after output projection (Lq, a)
    ln_xhat: np.ndarray
    ln_inv_std: np.ndarray
    pooled: np.ndarray


@dataclass
class CrossAttentionCache:
    training: bool
    sides: dict[str, _SideCache]


def _attend_side(
    params: EnhancementParameters,
    side: str,
    q_in: np.ndarray,
    kv_in: np.ndarray,
    training: bool,
    dropout_rng: np.random.Generator | None,
) -> tuple[np.ndarray, _SideCache]:
    t = params.tensors
    heads = params.num_heads
    depth = params.encoder_dim // heads
    q = _affine(q_in, t[f"ca/{side}/q_w"], t[f"ca/{side}/q_b"])
    k = _affine(kv_in, t[f"ca/{side}/k_w"], t[f"ca/{side}/k_b"])
    v = _affine(kv_in, t[f"ca/{side}/v_w"], t[f"ca/{side}/v_b"])
    qh, kh, vh = (_split_heads(x, heads) for x in (q, k, v))
    scores = qh @ kh.transpose(0, 2, 1) / np.sqrt(depth)
    attn = _softmax_rows(scores)
    mask = None
    attended = attn
    if training and params.dropout_rate > 0.0:
        if dropout_rng is None:
            raise EnhancementError("training-mode forward needs a dropout generator")
        keep = 1.0 - params.dropout_rate
        mask = (dropout_rng.random(attn.shape) < keep).astype(np.float64) / keep
        attended = attn * mask
    out_heads = attended @ vh
    merged = _merge_heads(out_heads)
    att_out = _affine(merged, t[f"ca/{side}/o_w"], t[f"ca/{side}/o_b"])

    mean = att_out.mean(axis=-1, keepdims=True)
    var = att_out.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + LAYER_NORM_EPS)
    xhat = (att_out - mean) * inv_std
    normed = xhat * t[f"ca/{side}/ln_g"] + t[f"ca/{side}/ln_b"]

    pooled = normed.mean(axis=0)
    e = t[f"ca/{side}/p_w"] @ pooled + t[f"ca/{side}/p_b"]
    cache = _SideCache(
        q_in=q_in,
        kv_in=kv_in,
        q_heads=qh,
        k_heads=kh,
        v_heads=vh,
        attn=attn,
        dropout_mask=mask,
        merged=merged,
        att_out=att_out,
        ln_xhat=xhat,
        ln_inv_std=inv_std,
        pooled=pooled,
    )
    return e, cache


def enhance_cross_attention(
    params: EnhancementParameters,
    task_seq: np.ndarray,
    code_seq: np.ndarray,
    training: bool = False,
    dropout_rng: np.random.Generator | None = None,
) -> tuple[EnhancedPair, CrossAttentionCache]:
    """Cross-attention both ways: code queries attend over task keys/values
    and vice versa.  Dropout hits attention weights only, and only when
    ``training`` is true.
    """
    if params.variant != CROSS_ATTENTION:
        raise EnhancementError("parameters are not for the cross_attention variant")
    for name, seq in (("task", task_seq), ("code", code_seq)):
        if seq.ndim != 2 or seq.shape[0] < 1:
            raise EnhancementError(f"{name} sequence must be a non-empty (L, d_enc) matrix")
        if seq.shape[1] != params.encoder_dim:
            raise EnhancementError(
                f"{name} sequence has dimension {seq.shape[1]}, expected {params.encoder_dim}"
            )
    e_t, task_cache = _attend_side(params, "task", task_seq, code_seq, training, dropout_rng)
    e_c, code_cache = _attend_side(params, "code", code_seq, task_seq, training, dropout_rng)
    cache = CrossAttentionCache(training=training, sides={"task": task_cache, "code": code_cache})
    return EnhancedPair(e_t=e_t, e_c=e_c), cache


def _softmax_backward(attn: np.ndarray, d_attn: np.ndarray) -> np.ndarray:
    inner = (attn * d_attn).sum(axis=-1, keepdims=True)
    return attn * (d_attn - inner)


def _attend_side_backward(
    params: EnhancementParameters,
    side: str,
    cache: _SideCache,
    training: bool,
    d_e: np.ndarray,
    grads: dict[str, np.ndarray],
) -> tuple[np.ndarray, np.ndarray]:
    t = params.tensors
    heads = params.num_heads
    depth = params.encoder_dim // heads
    rows = cache.q_in.shape[0]

    grads[f"ca/{side}/p_w"] += np.outer(d_e, cache.pooled)
    grads[f"ca/{side}/p_b"] += d_e
    d_pooled = t[f"ca/{side}/p_w"].T @ d_e

    d_normed = np.tile(d_pooled / rows, (rows, 1))

    grads[f"ca/{side}/ln_g"] += (d_normed * cache.ln_xhat).sum(axis=0)
    grads[f"ca/{side}/ln_b"] += d_normed.sum(axis=0)
    d_xhat = d_normed * t[f"ca/{side}/ln_g"]
    # Per-row layer-norm backward with biased variance.
    d_att_out = cache.ln_inv_std * (
        d_xhat
        - d_xhat.mean(axis=-1, keepdims=True)
        - cache.ln_xhat * (d_xhat * cache.ln_xhat).mean(axis=-1, keepdims=True)
    )

    d_merged, dw_o, db_o = _affine_backward(cache.merged, t[f"ca/{side}/o_w"], d_att_out)
    grads[f"ca/{side}/o_w"] += dw_o
    grads[f"ca/{side}/o_b"] += db_o

    d_out_heads = _split_heads(d_merged, heads)
    attended = cache.attn if cache.dropout_mask is None else cache.attn * cache.dropout_mask
    d_attended = d_out_heads @ cache.v_heads.transpose(0, 2, 1)
    d_vh = attended.transpose(0, 2, 1) @ d_out_heads
    d_attn = d_attended if cache.dropout_mask is None else d_attended * cache.dropout_mask
    d_scores = _softmax_backward(cache.attn, d_attn) / np.sqrt(depth)
    d_qh = d_scores @ cache.k_heads
    d_kh = d_scores.transpose(0, 2, 1) @ cache.q_heads

    d_q = _merge_heads(d_qh)
    d_k = _merge_heads(d_kh)
    d_v = _merge_heads(d_vh)

    d_q_in, dw_q, db_q = _affine_backward(cache.q_in, t[f"ca/{side}/q_w"], d_q)
    d_kv_k, dw_k, db_k = _affine_backward(cache.kv_in, t[f"ca/{side}/k_w"], d_k)
    d_kv_v, dw_v, db_v = _affine_backward(cache.kv_in, t[f"ca/{side}/v_w"], d_v)
    grads[f"ca/{side}/q_w"] += dw_q
    grads[f"ca/{side}/q_b"] += db_q
    grads[f"ca/{side}/k_w"] += dw_k
    grads[f"ca/{side}/k_b"] += db_k
    grads[f"ca/{side}/v_w"] += dw_v
    grads[f"ca/{side}/v_b"] += db_v
    return d_q_in, d_kv_k + d_kv_v


def zero_gradients(params: EnhancementParameters) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(tensor) for name, tensor in params.tensors.items()}


def enhancement_backward(
    params: EnhancementParameters,
    cache: LinearCache | CrossAttentionCache,
    d_e_t: np.ndarray,
    d_e_c: np.ndarray,
    grads: dict[str, np.ndarray] | None = None,
):
    """Gradients of every parameter tensor and of both inputs.

    ``grads`` accumulates in place when given (one dict per batch);
    returns ``(grads, d_task_input, d_code_input)``.  Input gradients are
    pooled vectors for the linear variant and full (L, d_enc) matrices for
    cross-attention.
    """
    if grads is None:
        grads = zero_gradients(params)
    if params.variant == LINEAR:
        if not isinstance(cache, LinearCache):
            raise EnhancementError("cache does not match the linear variant")
        w_t = params.tensors["linear/task/w"]
        w_c = params.tensors["linear/code/w"]
        if d_e_t.shape != (w_t.shape[0],) or d_e_c.shape != (w_c.shape[0],):
            raise EnhancementError("upstream gradient shape mismatch")
        grads["linear/task/w"] += np.outer(d_e_t, cache.task_pooled)
        grads["linear/task/b"] += d_e_t
        grads["linear/code/w"] += np.outer(d_e_c, cache.code_pooled)
        grads["linear/code/b"] += d_e_c
        return grads, w_t.T @ d_e_t, w_c.T @ d_e_c

    if not isinstance(cache, CrossAttentionCache):
        raise EnhancementError("cache does not match the cross_attention variant")
    if d_e_t.shape != (params.shared_dim,) or d_e_c.shape != (params.shared_dim,):
        raise EnhancementError("upstream gradient shape mismatch")
    d_task_q, d_code_kv = _attend_side_backward(
        params, "task", cache.sides["task"], cache.training, d_e_t, grads
    )
    d_code_q, d_task_kv = _attend_side_backward(
        params, "code", cache.sides["code"], cache.training, d_e_c, grads
    )
    return grads, d_task_q + d_task_kv, d_code_q + d_code_kv
