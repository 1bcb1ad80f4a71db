"""Mini-batch training on positive and corrupted tuples, min-pool
fine-tuning, outsider ranking, and checkpoint serialization."""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import model as md
from .autodiff import Tensor
from .errors import CheckpointError, DataError, DivergenceError
from .hypergraph import Hypergraph, TupleSample, sample_negatives
from .metrics import auroc

_MAGIC = b"HSGN1"
_FORMAT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 1e-3
    neg_ratio: int = 5
    mix_pairwise: bool = False
    seed: int = 0
    pool_mode: str = "mean"
    val_fraction: float = 0.1
    fine_tune_epochs: int = 5
    # Weight of the optional per-node cross-entropy against known-replacement
    # labels; 0 disables the term.
    outsider_ce_weight: float = 0.0

    def __post_init__(self):
        if self.epochs < 1:
            raise DataError("epochs must be >= 1")
        if self.batch_size < 1:
            raise DataError("batch_size must be >= 1")
        if self.neg_ratio < 1:
            raise DataError("neg_ratio must be >= 1")
        if not self.learning_rate > 0:
            raise DataError("learning_rate must be positive")
        if self.pool_mode not in md.POOL_MODES:
            raise DataError(f"unknown pool_mode {self.pool_mode!r}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise DataError("val_fraction must lie in [0, 1)")
        if self.fine_tune_epochs < 1:
            raise DataError("fine_tune_epochs must be >= 1")
        if self.outsider_ce_weight < 0:
            raise DataError("outsider_ce_weight must be nonnegative")


@dataclass
class EpochStats:
    epoch: int
    loss: float
    val_auc: float | None
    val_auc_by_kind: dict[str, float] = field(default_factory=dict)
    negatives_digest: str = ""


class Adam:
    """First-order adaptive-moment updates with bias correction."""

    def __init__(self, tensors, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.tensors = list(tensors)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m = [np.zeros_like(t.data) for t in self.tensors]
        self._v = [np.zeros_like(t.data) for t in self.tensors]

    def step(self) -> None:
        self.step_count += 1
        b1c = 1.0 - self.beta1 ** self.step_count
        b2c = 1.0 - self.beta2 ** self.step_count
        for i, p in enumerate(self.tensors):
            if p.grad is None:
                continue
            g = p.grad
            self._m[i] = self.beta1 * self._m[i] + (1.0 - self.beta1) * g
            self._v[i] = self.beta2 * self._v[i] + (1.0 - self.beta2) * g * g
            m_hat = self._m[i] / b1c
            v_hat = self._v[i] / b2c
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
            p.grad = None


def hyper_positives(g: Hypergraph) -> list[TupleSample]:
    return [TupleSample(members=tuple(e.members), label=1, kind="hyper")
            for e in g.edges]


def pairwise_positives_of(samples) -> list[TupleSample]:
    """Distinct unordered member pairs of the given positives."""
    seen: set[tuple[int, int]] = set()
    out: list[TupleSample] = []
    for s in samples:
        m = sorted(s.members)
        for i in range(len(m)):
            for j in range(i + 1, len(m)):
                k = (m[i], m[j])
                if k not in seen:
                    seen.add(k)
                    out.append(TupleSample(members=k, label=1,
                                           kind="pairwise"))
    return out


def _derived_seed(base: int, *key: int) -> int:
    ss = np.random.SeedSequence(entropy=base, spawn_key=tuple(key))
    return int(ss.generate_state(1)[0])


def _negatives_digest(negs) -> str:
    h = hashlib.sha256()
    for k in sorted(n.key for n in negs):
        h.update(repr(k).encode())
    return h.hexdigest()[:16]


def _check_features(g: Hypergraph, features, cfg: md.ModelConfig) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    n = len(g.nodes)
    if features.ndim != 2 or features.shape[0] != n:
        raise DataError(f"features must have one row per node ({n}), got "
                        f"shape {features.shape}")
    if cfg.feature_mode == "encoder" and features.shape[1] != n:
        raise DataError("encoder mode expects square adjacency rows")
    return features


def _split_validation(positives, fraction: float, rng) -> tuple[list, list]:
    """Hold out about ``fraction`` of each kind, never emptying the train
    side of that kind."""
    by_kind: dict[str, list[TupleSample]] = {}
    for s in positives:
        by_kind.setdefault(s.kind, []).append(s)
    train, val = [], []
    for kind in sorted(by_kind):
        group = by_kind[kind]
        n = len(group)
        n_val = int(round(n * fraction))
        n_val = min(n_val, n - 1)
        if fraction > 0 and n >= 2:
            n_val = max(n_val, 1)
        order = rng.permutation(n)
        chosen = set(order[:n_val].tolist())
        for i, s in enumerate(group):
            (val if i in chosen else train).append(s)
    return train, val


def _auc_safe(labels: np.ndarray, scores: np.ndarray) -> float | None:
    if labels.size == 0 or labels.min() == labels.max():
        return None
    return auroc(scores, labels)


def _validation_auc(params, model_cfg, pool, features, val_pos, val_neg):
    # batch_probs returns tuples in size-bucket order, so score each kind
    # with its own call to keep labels and kinds aligned
    if not val_pos or not val_neg:
        return None, {}
    groups: dict[str, list[TupleSample]] = {}
    for s in list(val_pos) + list(val_neg):
        groups.setdefault(s.kind, []).append(s)
    by_kind: dict[str, float] = {}
    all_scores, all_labels = [], []
    for kind in sorted(groups):
        p, labels, _ = md.batch_probs(params, model_cfg, groups[kind],
                                      features, pool=pool)
        scores = p.data.ravel()
        all_scores.append(scores)
        all_labels.append(labels)
        auc = _auc_safe(labels, scores)
        if auc is not None:
            by_kind[kind] = auc
    overall = _auc_safe(np.concatenate(all_labels),
                        np.concatenate(all_scores))
    if len(groups) == 1:
        by_kind = {}
    return overall, by_kind


def _pair_forbidden(g: Hypergraph, positives) -> frozenset[tuple[int, ...]]:
    """When pairwise tuples are in play, no corrupted pair may equal a pair
    contained in any hyperedge of the full graph."""
    if not any(s.kind == "pairwise" for s in positives):
        return frozenset()
    keys: set[tuple[int, ...]] = set()
    for e in g.edges:
        m = sorted(e.members)
        for i in range(len(m)):
            for j in range(i + 1, len(m)):
                keys.add((m[i], m[j]))
    return frozenset(keys)


def _member_targets(g: Hypergraph, sample: TupleSample) -> list[float] | None:
    """Per-member membership targets, or None when the tuple does not carry
    a usable replacement.

    Positives target 1 everywhere.  A corrupted tuple is usable only when
    its replacement shares no hyperedge with the remaining members, so the
    label "does not belong here" is provably right.
    """
    if sample.label == 1:
        return [1.0] * len(sample.members)
    o = sample.planted
    if o is None:
        return None
    rest = [v for v in sample.members if v != o]
    if any(g.incident_set(o) & g.incident_set(v) for v in rest):
        return None
    return [0.0 if v == o else 1.0 for v in sample.members]


def _outsider_ce(params: md.ModelParams, model_cfg: md.ModelConfig,
                 g: Hypergraph, batch, features) -> "ad.Tensor | None":
    """Cross-entropy between per-member probabilities and membership
    targets, over the tuples of the batch that carry usable targets."""
    labeled = []
    for s in batch:
        targets = _member_targets(g, s)
        if targets is not None:
            labeled.append((s, targets))
    if not labeled:
        return None
    probs, order = md.batch_member_probs(
        params, model_cfg, [s for s, _ in labeled], features)
    flat = np.concatenate([labeled[i][1] for i in order])
    return ad.bce_loss(probs, flat)


def _run_epochs(params: md.ModelParams, g: Hypergraph, features: np.ndarray,
                model_cfg: md.ModelConfig, train_cfg: TrainConfig,
                train_pos, val_pos, val_neg, pool: str, epochs: int,
                seed_realm: int) -> list[EpochStats]:
    forbidden = _pair_forbidden(g, train_pos)
    opt = Adam(params.trainable(), lr=train_cfg.learning_rate)
    history: list[EpochStats] = []
    for epoch in range(epochs):
        negs = sample_negatives(
            g, train_pos, train_cfg.neg_ratio,
            seed=_derived_seed(train_cfg.seed, seed_realm, 1, epoch),
            forbidden=forbidden)
        stream = list(train_pos) + negs
        rng = np.random.default_rng(
            _derived_seed(train_cfg.seed, seed_realm, 2, epoch))
        order = rng.permutation(len(stream))

        total = 0.0
        count = 0
        for start in range(0, len(order), train_cfg.batch_size):
            batch = [stream[i] for i in order[start:start +
                                              train_cfg.batch_size]]
            loss = md.total_loss(params, model_cfg, batch, features,
                                 pool=pool)
            if train_cfg.outsider_ce_weight > 0.0:
                extra = _outsider_ce(params, model_cfg, g, batch, features)
                if extra is not None:
                    loss = ad.add(loss, ad.mul(
                        extra, ad.as_tensor(train_cfg.outsider_ce_weight)))
            value = float(loss.data)
            if not np.isfinite(value):
                raise DivergenceError(epoch)
            total += value * len(batch)
            count += len(batch)
            loss.backward()
            opt.step()

        val_auc, by_kind = _validation_auc(params, model_cfg, pool, features,
                                           val_pos, val_neg)
        history.append(EpochStats(epoch=epoch, loss=total / count,
                                  val_auc=val_auc, val_auc_by_kind=by_kind,
                                  negatives_digest=_negatives_digest(negs)))
    return history


def train(g: Hypergraph, features, model_cfg: md.ModelConfig,
          train_cfg: TrainConfig,
          positives=None) -> tuple[md.ModelParams, list[EpochStats]]:
    """Fit fresh parameters on the graph's tuples (or a supplied positive
    list, e.g. a train split).

    Each epoch redraws ``neg_ratio`` corrupted tuples per positive; a fixed
    held-out slice of positives with matched negatives tracks per-epoch
    validation quality.
    """
    features = _check_features(g, features, model_cfg)
    if positives is None:
        positives = hyper_positives(g)
        if train_cfg.mix_pairwise:
            positives = positives + pairwise_positives_of(positives)
    positives = list(positives)
    if not positives:
        raise DataError("no training positives")

    split_rng = np.random.default_rng(_derived_seed(train_cfg.seed, 0, 0))
    train_pos, val_pos = _split_validation(positives, train_cfg.val_fraction,
                                           split_rng)
    if not train_pos:
        raise DataError("validation split left no training positives")
    val_neg = []
    if val_pos:
        val_neg = sample_negatives(
            g, val_pos, train_cfg.neg_ratio,
            seed=_derived_seed(train_cfg.seed, 0, 1),
            forbidden=_pair_forbidden(g, val_pos))

    feat_dim = (model_cfg.dim if model_cfg.feature_mode == "encoder"
                else features.shape[1])
    params = md.ModelParams.init(model_cfg, feat_dim, n_nodes=len(g.nodes),
                                 seed=train_cfg.seed)
    history = _run_epochs(params, g, features, model_cfg, train_cfg,
                          train_pos, val_pos, val_neg,
                          pool=train_cfg.pool_mode, epochs=train_cfg.epochs,
                          seed_realm=1)
    return params, history


def clone_params(params: md.ModelParams) -> md.ModelParams:
    def cp(t):
        return Tensor(t.data.copy(), requires_grad=True)

    return md.ModelParams(
        static_w=cp(params.static_w),
        query_w=[cp(t) for t in params.query_w],
        key_w=[cp(t) for t in params.key_w],
        value_w=[cp(t) for t in params.value_w],
        score_w=cp(params.score_w),
        score_b=cp(params.score_b),
        encoder_w=None if params.encoder_w is None else cp(params.encoder_w),
        encoder_b=None if params.encoder_b is None else cp(params.encoder_b))


def fine_tune_min_pool(params: md.ModelParams, g: Hypergraph, features,
                       model_cfg: md.ModelConfig,
                       train_cfg: TrainConfig,
                       positives=None) -> md.ModelParams:
    """Continue training a copy of the parameters with min pooling for a
    short epoch budget; the input parameters are left untouched."""
    features = _check_features(g, features, model_cfg)
    if positives is None:
        positives = hyper_positives(g)
        if train_cfg.mix_pairwise:
            positives = positives + pairwise_positives_of(positives)
    positives = list(positives)
    if not positives:
        raise DataError("no training positives")
    tuned = clone_params(params)
    _run_epochs(tuned, g, features, model_cfg, train_cfg,
                train_pos=positives, val_pos=[], val_neg=[], pool="min",
                epochs=train_cfg.fine_tune_epochs, seed_realm=2)
    return tuned


def _tuple_forward(params: md.ModelParams, model_cfg: md.ModelConfig,
                   features, members) -> md.ForwardOutput:
    md_features = np.asarray(features, dtype=np.float64)
    if model_cfg.feature_mode == "encoder":
        x = md.encode_features(params, md_features[list(members)])
    else:
        x = ad.as_tensor(md_features[list(members)])
    x3 = ad.reshape(x, (1, len(members), -1))
    return md.batch_forward(params, model_cfg, x3, pool="min")


def tuple_member_probs(params: md.ModelParams, model_cfg: md.ModelConfig,
                       features, members) -> np.ndarray:
    """Per-member probabilities for one tuple."""
    members = tuple(int(v) for v in members)
    out = _tuple_forward(params, model_cfg, features, members)
    return out.per_node_prob.data.ravel().copy()


def predict_outsider(params: md.ModelParams, model_cfg: md.ModelConfig,
                     features, members) -> list[int]:
    """Members ranked by ascending membership probability; equal
    probabilities fall back to node-id order.

    Ordering uses the pre-sigmoid scores: identical ordering in exact
    arithmetic, but still discriminative once probabilities round to 0 or 1.
    """
    members = tuple(int(v) for v in members)
    if len(members) < 2:
        raise DataError("outsider ranking needs a tuple of size >= 2")
    out = _tuple_forward(params, model_cfg, features, members)
    scores = out.per_node_score.data.ravel()
    order = sorted(range(len(members)), key=lambda i: (scores[i], members[i]))
    return [members[i] for i in order]


def save_checkpoint(params: md.ModelParams, model_cfg: md.ModelConfig,
                    path: str, *, vocab_hash: str = "", seed: int = 0,
                    epoch: int = 0, n_nodes: int | None = None,
                    features=None) -> None:
    entries: list[tuple[str, np.ndarray]] = [
        (name, t.data) for name, t in params.named()]
    if features is not None:
        entries.append(("features", np.asarray(features, dtype=np.float64)))
    meta = {
        "format_version": _FORMAT_VERSION,
        "config": {
            "dim": model_cfg.dim,
            "heads": model_cfg.heads,
            "variant": model_cfg.variant,
            "feature_mode": model_cfg.feature_mode,
            "recon_weight": model_cfg.recon_weight,
        },
        "feature_mode": model_cfg.feature_mode,
        "n_nodes": (int(n_nodes) if n_nodes is not None
                    else None if params.encoder_w is None
                    else int(params.encoder_w.shape[0])),
        "vocab_hash": vocab_hash,
        "seed": int(seed),
        "epoch": int(epoch),
        "tensors": [{"name": n, "shape": list(a.shape)} for n, a in entries],
    }
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for _, a in entries:
            f.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


@dataclass
class Checkpoint:
    params: md.ModelParams
    config: md.ModelConfig
    meta: dict
    features: np.ndarray | None


def _expected_names(cfg: md.ModelConfig) -> list[str]:
    names = ["static_w"]
    for h in range(cfg.heads):
        names += [f"query_w_{h}", f"key_w_{h}", f"value_w_{h}"]
    names += ["score_w", "score_b"]
    if cfg.feature_mode == "encoder":
        names += ["encoder_w", "encoder_b"]
    return names


def load_checkpoint(path: str,
                    expected_vocab_hash: str | None = None) -> Checkpoint:
    with open(path, "rb") as f:
        magic = f.read(len(_MAGIC))
        if magic != _MAGIC:
            raise CheckpointError(f"bad magic {magic!r}; not a checkpoint "
                                  "or unsupported version")
        header = f.read(4)
        if len(header) != 4:
            raise CheckpointError("truncated checkpoint header")
        (meta_len,) = struct.unpack("<I", header)
        blob = f.read(meta_len)
        if len(blob) != meta_len:
            raise CheckpointError("truncated checkpoint metadata")
        try:
            meta = json.loads(blob.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"unreadable metadata: {exc}") from exc
        if meta.get("format_version") != _FORMAT_VERSION:
            raise CheckpointError(
                f"unsupported format version {meta.get('format_version')!r}")
        if (expected_vocab_hash is not None
                and meta.get("vocab_hash") != expected_vocab_hash):
            raise CheckpointError("checkpoint was written for a different "
                                  "node vocabulary")
        try:
            cfg = md.ModelConfig(**meta["config"])
        except (KeyError, TypeError, DataError) as exc:
            raise CheckpointError(f"invalid stored config: {exc}") from exc

        arrays: dict[str, np.ndarray] = {}
        order: list[str] = []
        for entry in meta.get("tensors", []):
            name = entry["name"]
            shape = tuple(int(s) for s in entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = f.read(count * 8)
            if len(buf) != count * 8:
                raise CheckpointError(f"truncated tensor {name!r}")
            arrays[name] = np.frombuffer(buf, dtype="<f8").reshape(
                shape).astype(np.float64)
            order.append(name)
        if f.read(1):
            raise CheckpointError("trailing bytes after declared tensors")

    features = arrays.pop("features", None)
    expected = _expected_names(cfg)
    if [n for n in order if n != "features"] != expected:
        raise CheckpointError("tensor layout does not match stored config")

    def t(name):
        return Tensor(arrays[name], requires_grad=True)

    params = md.ModelParams(
        static_w=t("static_w"),
        query_w=[t(f"query_w_{h}") for h in range(cfg.heads)],
        key_w=[t(f"key_w_{h}") for h in range(cfg.heads)],
        value_w=[t(f"value_w_{h}") for h in range(cfg.heads)],
        score_w=t("score_w"),
        score_b=t("score_b"),
        encoder_w=(t("encoder_w") if cfg.feature_mode == "encoder" else None),
        encoder_b=(t("encoder_b") if cfg.feature_mode == "encoder" else None))
    return Checkpoint(params=params, config=cfg, meta=meta, features=features)
