"""Tuple scoring network: static branch, multi-head attention branch, and a
signed squared-difference scoring head.

Every node in a candidate tuple gets a static embedding (a function of its
own features alone) and a dynamic embedding (attention over the other tuple
members).  The per-node score contrasts the two; the tuple probability pools
per-node probabilities by mean, or by min when hunting for the member that
least belongs.

Variants:
  standard        attention excludes the node's own term; score (d - s)^2
  self-inclusive  attention keeps the self term; scoring unchanged
  dynamic-only    self term kept and the score reads the dynamic vector
                  directly (no static contrast)
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DataError

VARIANTS = ("standard", "self-inclusive", "dynamic-only")
FEATURE_MODES = ("walk", "encoder")
POOL_MODES = ("mean", "min")


@dataclass(frozen=True)
class ModelConfig:
    dim: int = 64
    heads: int = 4
    variant: str = "standard"
    feature_mode: str = "walk"
    recon_weight: float = 0.0

    def __post_init__(self):
        if self.dim < 1 or self.heads < 1:
            raise DataError("dim and heads must be >= 1")
        if self.dim % self.heads != 0:
            raise DataError(f"dim {self.dim} not divisible by heads {self.heads}")
        if self.variant not in VARIANTS:
            raise DataError(f"unknown variant {self.variant!r}")
        if self.feature_mode not in FEATURE_MODES:
            raise DataError(f"unknown feature_mode {self.feature_mode!r}")
        if self.recon_weight < 0:
            raise DataError("recon_weight must be nonnegative")

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads

    @property
    def includes_self(self) -> bool:
        return self.variant != "standard"

    @property
    def uses_static(self) -> bool:
        return self.variant != "dynamic-only"

    def min_tuple_size(self) -> int:
        return 1 if self.variant == "self-inclusive" else 2


def _glorot(rng, fan_in: int, fan_out: int, shape) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


@dataclass
class ModelParams:
    static_w: Tensor                 # feat x dim
    query_w: list[Tensor]            # per head: feat x head_dim
    key_w: list[Tensor]
    value_w: list[Tensor]
    score_w: Tensor                  # dim x 1
    score_b: Tensor                  # scalar
    encoder_w: Tensor | None = None  # n_nodes x feat
    encoder_b: Tensor | None = None  # feat

    @classmethod
    def init(cls, cfg: ModelConfig, feat_dim: int, n_nodes: int | None = None,
             seed: int = 0) -> "ModelParams":
        rng = np.random.default_rng(seed)
        hd = cfg.head_dim

        def t(arr):
            return Tensor(arr, requires_grad=True)

        static_w = t(_glorot(rng, feat_dim, cfg.dim, (feat_dim, cfg.dim)))
        query_w, key_w, value_w = [], [], []
        for _ in range(cfg.heads):
            query_w.append(t(_glorot(rng, feat_dim, hd, (feat_dim, hd))))
            key_w.append(t(_glorot(rng, feat_dim, hd, (feat_dim, hd))))
            value_w.append(t(_glorot(rng, feat_dim, hd, (feat_dim, hd))))
        score_w = t(_glorot(rng, cfg.dim, 1, (cfg.dim, 1)))
        score_b = t(np.zeros(()))
        encoder_w = encoder_b = None
        if cfg.feature_mode == "encoder":
            if n_nodes is None:
                raise DataError("encoder mode needs the node count")
            encoder_w = t(_glorot(rng, n_nodes, feat_dim, (n_nodes, feat_dim)))
            encoder_b = t(np.zeros(feat_dim))
        return cls(static_w, query_w, key_w, value_w, score_w, score_b,
                   encoder_w, encoder_b)

    def named(self) -> list[tuple[str, Tensor]]:
        """Tensors in their declared (checkpoint) order."""
        out = [("static_w", self.static_w)]
        for h, (q, k, v) in enumerate(zip(self.query_w, self.key_w,
                                          self.value_w)):
            out += [(f"query_w_{h}", q), (f"key_w_{h}", k), (f"value_w_{h}", v)]
        out += [("score_w", self.score_w), ("score_b", self.score_b)]
        if self.encoder_w is not None:
            out += [("encoder_w", self.encoder_w), ("encoder_b", self.encoder_b)]
        return out

    def trainable(self) -> list[Tensor]:
        return [t for _, t in self.named()]

    @property
    def feat_dim(self) -> int:
        return self.static_w.shape[0]


def _linear(x, w: Tensor) -> Tensor:
    """x @ w over the last axis through one 2-d GEMM regardless of leading
    shape, so a row's bits do not depend on its batch context.  The
    single-row case would take the GEMV accumulation path, which rounds
    differently; pad it onto the GEMM path instead."""
    x = ad.as_tensor(x)
    lead = x.data.shape[:-1]
    flat = ad.reshape(x, (-1, x.data.shape[-1]))
    if flat.data.shape[0] == 1:
        padded = ad.concat([flat, Tensor(np.zeros_like(flat.data))], axis=0)
        out = ad.take_rows(ad.matmul(padded, w), np.array([0]))
    else:
        out = ad.matmul(flat, w)
    return ad.reshape(out, lead + (w.data.shape[-1],))


def encode_features(params: ModelParams, adj_rows) -> Tensor:
    """Node features from adjacency rows: codes = tanh(a W_enc + b_enc)."""
    if params.encoder_w is None:
        raise DataError("model has no encoder parameters")
    a = ad.as_tensor(adj_rows)
    if a.data.shape[-1] != params.encoder_w.shape[0]:
        raise ValueError(f"adjacency row length {a.data.shape[-1]} does not "
                         f"match encoder input {params.encoder_w.shape[0]}")
    return ad.tanh(ad.add(_linear(a, params.encoder_w), params.encoder_b))


def reconstruct(params: ModelParams, codes: Tensor) -> Tensor:
    """Tied-weight decoder: rebuilt rows = tanh(codes W_enc^T)."""
    if params.encoder_w is None:
        raise DataError("model has no encoder parameters")
    return ad.tanh(_linear(codes, ad.transpose_last2(params.encoder_w)))


def static_embed(params: ModelParams, x) -> Tensor:
    """Per-node static embedding; depends only on the node's own features."""
    return ad.tanh(_linear(x, params.static_w))


def _check_tuple_size(cfg: ModelConfig, k: int) -> None:
    if k < cfg.min_tuple_size():
        raise DataError(f"variant {cfg.variant!r} needs tuples of size "
                        f">= {cfg.min_tuple_size()}, got {k}")


def _attention(params: ModelParams, cfg: ModelConfig, x3: Tensor) -> Tensor:
    """Dynamic embeddings for a (B, k, feat) feature block."""
    b, k, _ = x3.data.shape
    _check_tuple_size(cfg, k)
    if cfg.includes_self:
        mask = np.zeros((b, k, k), dtype=bool)
    else:
        mask = np.broadcast_to(np.eye(k, dtype=bool), (b, k, k))
    heads = []
    for h in range(cfg.heads):
        q = _linear(x3, params.query_w[h])
        key = _linear(x3, params.key_w[h])
        logits = ad.matmul(q, ad.transpose_last2(key))
        alpha = ad.masked_softmax(logits, mask)
        heads.append(ad.matmul(alpha, _linear(x3, params.value_w[h])))
    return ad.tanh(ad.concat(heads, axis=-1))


def attention_weights(params: ModelParams, cfg: ModelConfig,
                      x_tuple) -> list[np.ndarray]:
    """Per-head attention matrices for one tuple (diagnostics only)."""
    x = np.asarray(x_tuple, dtype=np.float64)
    k = x.shape[0]
    _check_tuple_size(cfg, k)
    mask = (np.zeros((k, k), dtype=bool) if cfg.includes_self
            else np.eye(k, dtype=bool))
    out = []
    for h in range(cfg.heads):
        logits = (x @ params.query_w[h].data) @ (x @ params.key_w[h].data).T
        y = ad.masked_softmax(Tensor(logits), mask)
        out.append(y.data)
    return out


@dataclass
class ForwardOutput:
    static: Tensor          # (..., k, dim)
    dynamic: Tensor         # (..., k, dim)
    per_node_score: Tensor  # (..., k); pre-sigmoid, safe to rank when
                            # probabilities saturate to exact 0 or 1
    per_node_prob: Tensor   # (..., k)
    tuple_prob: Tensor      # (...)


def batch_forward(params: ModelParams, cfg: ModelConfig, x3,
                  pool: str = "mean") -> ForwardOutput:
    """Score a block of same-size tuples given their (B, k, feat) features."""
    if pool not in POOL_MODES:
        raise DataError(f"unknown pool mode {pool!r}")
    x3 = ad.as_tensor(x3)
    if x3.data.ndim != 3:
        raise ValueError(f"batch_forward expects (B, k, feat), got {x3.shape}")
    b, k, _ = x3.data.shape
    dyn = _attention(params, cfg, x3)
    sta = static_embed(params, x3)
    if cfg.uses_static:
        gap = ad.square(ad.sub(dyn, sta))
        z = ad.add(_linear(gap, params.score_w), params.score_b)
    else:
        z = ad.add(_linear(dyn, params.score_w), params.score_b)
    z = ad.reshape(z, (b, k))
    per_node = ad.sigmoid(z)
    pooled = (ad.mean(per_node, axis=-1) if pool == "mean"
              else ad.amin(per_node, axis=-1))
    return ForwardOutput(static=sta, dynamic=dyn, per_node_score=z,
                         per_node_prob=per_node, tuple_prob=pooled)


def dynamic_embed(params: ModelParams, cfg: ModelConfig, x_tuple) -> Tensor:
    """Dynamic embeddings for one tuple's (k, feat) features."""
    x = ad.as_tensor(x_tuple)
    if x.data.ndim != 2:
        raise ValueError(f"dynamic_embed expects (k, feat), got {x.shape}")
    k, f = x.data.shape
    return ad.reshape(_attention(params, cfg, ad.reshape(x, (1, k, f))),
                      (k, cfg.dim))


def score_tuple(params: ModelParams, cfg: ModelConfig, x_tuple,
                pool: str = "mean") -> ForwardOutput:
    """Score one tuple from its (k, feat) feature rows."""
    x = ad.as_tensor(x_tuple)
    if x.data.ndim != 2:
        raise ValueError(f"score_tuple expects (k, feat), got {x.shape}")
    k, f = x.data.shape
    out = batch_forward(params, cfg, ad.reshape(x, (1, k, f)), pool=pool)
    return ForwardOutput(
        static=ad.reshape(out.static, (k, cfg.dim)),
        dynamic=ad.reshape(out.dynamic, (k, cfg.dim)),
        per_node_score=ad.reshape(out.per_node_score, (k,)),
        per_node_prob=ad.reshape(out.per_node_prob, (k,)),
        tuple_prob=ad.reshape(out.tuple_prob, ()))


def _size_buckets(samples) -> dict[int, list[int]]:
    buckets: dict[int, list[int]] = {}
    for i, s in enumerate(samples):
        buckets.setdefault(len(s.members), []).append(i)
    return buckets


def _prepare_lookup(params: ModelParams, cfg: ModelConfig, samples,
                    node_inputs):
    """Feature lookup shared by the batched scorers.

    In encoder mode the batch's distinct nodes are encoded once and the
    codes are shared across tuples; (codes, rows) is returned alongside for
    the reconstruction term.
    """
    node_inputs = np.asarray(node_inputs, dtype=np.float64)
    if cfg.feature_mode == "encoder":
        distinct = sorted({v for s in samples for v in s.members})
        local = {v: i for i, v in enumerate(distinct)}
        rows = node_inputs[distinct]
        codes = encode_features(params, rows)
        return codes, local.__getitem__, (codes, rows)
    return ad.as_tensor(node_inputs), (lambda v: v), None


def batch_probs(params: ModelParams, cfg: ModelConfig, samples, node_inputs,
                pool: str = "mean") -> tuple[Tensor, np.ndarray, Tensor | None]:
    """Tuple probabilities for a mixed-size batch.

    Tuples are grouped by size (no padding); the returned label array is
    aligned with the probability order.  The third return value carries
    (codes, rows) for the reconstruction term in encoder mode, else None.
    """
    if not samples:
        raise DataError("empty batch")
    lookup, index_of, recon_pack = _prepare_lookup(params, cfg, samples,
                                                   node_inputs)
    probs, labels = [], []
    for k, idxs in sorted(_size_buckets(samples).items()):
        flat = [index_of(v) for i in idxs for v in samples[i].members]
        x3 = ad.reshape(ad.take_rows(lookup, np.array(flat, dtype=np.int64)),
                        (len(idxs), k, -1))
        out = batch_forward(params, cfg, x3, pool=pool)
        probs.append(out.tuple_prob)
        labels.extend(samples[i].label for i in idxs)
    p = probs[0] if len(probs) == 1 else ad.concat(probs, axis=0)
    return p, np.array(labels, dtype=np.float64), recon_pack


def batch_member_probs(params: ModelParams, cfg: ModelConfig, samples,
                       node_inputs) -> tuple[Tensor, list[int]]:
    """Flattened per-member probabilities for a mixed-size batch.

    Returns the probabilities in size-bucketed order plus the sample indices
    in that order, so callers can align per-member targets.
    """
    if not samples:
        raise DataError("empty batch")
    lookup, index_of, _ = _prepare_lookup(params, cfg, samples, node_inputs)
    chunks, order = [], []
    for k, idxs in sorted(_size_buckets(samples).items()):
        flat = [index_of(v) for i in idxs for v in samples[i].members]
        x3 = ad.reshape(ad.take_rows(lookup, np.array(flat, dtype=np.int64)),
                        (len(idxs), k, -1))
        out = batch_forward(params, cfg, x3)
        chunks.append(ad.reshape(out.per_node_prob, (len(idxs) * k,)))
        order.extend(idxs)
    p = chunks[0] if len(chunks) == 1 else ad.concat(chunks, axis=0)
    return p, order


def total_loss(params: ModelParams, cfg: ModelConfig, samples, node_inputs,
               pool: str = "mean") -> Tensor:
    """Mean tuple cross-entropy, plus the weighted reconstruction error of
    the batch's distinct nodes in encoder mode."""
    p, labels, recon_pack = batch_probs(params, cfg, samples, node_inputs,
                                        pool=pool)
    loss = ad.bce_loss(p, labels)
    if cfg.feature_mode == "encoder" and cfg.recon_weight > 0.0:
        codes, rows = recon_pack
        err = ad.mean(ad.square(ad.sub(reconstruct(params, codes),
                                       ad.as_tensor(rows))))
        loss = ad.add(loss, ad.mul(err, ad.as_tensor(cfg.recon_weight)))
    return loss


def node_repr_for_classification(params: ModelParams, cfg: ModelConfig,
                                 features) -> np.ndarray:
    """Per-node vectors fed to downstream classifiers.

    Static-branch variants use the static embedding; the dynamic-only
    variant uses the concatenated per-head value projections.
    """
    x = np.asarray(features, dtype=np.float64)
    if cfg.uses_static:
        return np.tanh(x @ params.static_w.data)
    return np.concatenate([x @ w.data for w in params.value_w], axis=-1)
