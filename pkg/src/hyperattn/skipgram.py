"""Skip-gram with negative sampling over walk corpora.

Trains input and context vector tables with vectorized minibatch SGD.
Windowing is fixed-width (no per-center shrink) so a given corpus, seed
and single-thread mode reproduce the table bit for bit.  Input vectors
are the exported node features.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .hypergraph import Hypergraph

_BATCH = 8192
_MIN_LR_FRACTION = 1e-4


def _batch_size(vocab_n: int) -> int:
    # a batch much larger than the vocabulary piles many gradient
    # contributions onto the same row in one step, which diverges
    return max(32, min(_BATCH, vocab_n))


@dataclass(frozen=True)
class SkipGramConfig:
    dim: int = 64
    window: int = 10
    negatives_per_pair: int = 5
    epochs: int = 5
    initial_lr: float = 0.025
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.dim < 1:
            raise DataError("embedding dim must be >= 1")
        if self.window < 1:
            raise DataError("window must be >= 1")
        if self.negatives_per_pair < 0:
            raise DataError("negatives_per_pair must be >= 0")
        if self.epochs < 1:
            raise DataError("epochs must be >= 1")
        if self.initial_lr <= 0:
            raise DataError("initial_lr must be positive")
        if self.workers < 1:
            raise DataError("workers must be >= 1")


@dataclass
class EmbeddingTable:
    tokens: tuple[str, ...]
    rows: np.ndarray
    context_rows: np.ndarray
    epoch_losses: tuple[float, ...] = ()
    _index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self._index = {tok: i for i, tok in enumerate(self.tokens)}

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def index(self, token: str) -> int:
        try:
            return self._index[token]
        except KeyError:
            raise DataError(f"token {token!r} not in embedding table") from None

    def row(self, token: str) -> np.ndarray:
        return self.rows[self.index(token)]


def context_pairs(path, window: int) -> list[tuple]:
    """All ordered (center, context) pairs within the fixed window."""
    if window < 1:
        raise DataError("window must be >= 1")
    out = []
    n = len(path)
    for i in range(n):
        for j in range(max(0, i - window), min(n, i + window + 1)):
            if j != i:
                out.append((path[i], path[j]))
    return out


def noise_distribution(counts: np.ndarray) -> np.ndarray:
    """Negative-sampling noise: unigram frequency raised to 3/4."""
    noise = np.asarray(counts, dtype=np.float64) ** 0.75
    total = noise.sum()
    if total <= 0:
        raise DataError("noise distribution needs positive counts")
    return noise / total


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _run_batch(rows, ctx, centers, contexts, cum_noise, rng, lr, k_neg):
    """One SGD step over a pair slice; returns the summed pair loss."""
    u = rows[centers]
    v = ctx[contexts]
    s_pos = _sigmoid(np.einsum("bd,bd->b", u, v))
    g_pos = s_pos - 1.0

    if k_neg > 0:
        neg = np.searchsorted(cum_noise, rng.random((len(centers), k_neg)),
                              side="right")
        vn = ctx[neg]
        s_neg = _sigmoid(np.einsum("bd,bkd->bk", u, vn))
        gu = g_pos[:, None] * v + np.einsum("bk,bkd->bd", s_neg, vn)
        ctx_idx = np.concatenate([contexts, neg.ravel()])
        ctx_grad = np.concatenate(
            [g_pos[:, None] * u,
             (s_neg[:, :, None] * u[:, None, :]).reshape(-1, u.shape[1])])
        loss = (-np.log(np.clip(s_pos, 1e-10, None))
                - np.log(np.clip(1.0 - s_neg, 1e-10, None)).sum(axis=1)).sum()
    else:
        gu = g_pos[:, None] * v
        ctx_idx = contexts
        ctx_grad = g_pos[:, None] * u
        loss = -np.log(np.clip(s_pos, 1e-10, None)).sum()

    np.add.at(rows, centers, -lr * gu)
    np.add.at(ctx, ctx_idx, -lr * ctx_grad)
    return float(loss)


def train_skipgram(corpus: list[list[str]], cfg: SkipGramConfig) -> EmbeddingTable:
    if not corpus:
        raise DataError("empty corpus")

    token_ids: dict[str, int] = {}
    for sent in corpus:
        for tok in sent:
            if tok not in token_ids:
                token_ids[tok] = len(token_ids)
    tokens = tuple(sorted(token_ids, key=token_ids.get))
    n = len(tokens)

    counts = np.zeros(n)
    centers_l, contexts_l = [], []
    for sent in corpus:
        ids = [token_ids[t] for t in sent]
        for i in ids:
            counts[i] += 1
        for c, o in context_pairs(ids, cfg.window):
            centers_l.append(c)
            contexts_l.append(o)
    if not centers_l:
        raise DataError("corpus has no context pairs; sentences too short")
    centers = np.array(centers_l, dtype=np.int64)
    contexts = np.array(contexts_l, dtype=np.int64)

    cum_noise = np.cumsum(noise_distribution(counts))
    cum_noise[-1] = 1.0

    rng = np.random.default_rng(cfg.seed)
    rows = rng.uniform(-0.5 / cfg.dim, 0.5 / cfg.dim, size=(n, cfg.dim))
    ctx = np.zeros((n, cfg.dim))

    n_pairs = len(centers)
    batch = _batch_size(n)
    total_steps = n_pairs * cfg.epochs
    losses = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n_pairs)
        starts = range(0, n_pairs, batch)
        epoch_loss = 0.0

        def lr_at(start):
            done = epoch * n_pairs + start
            frac = max(1.0 - done / total_steps, _MIN_LR_FRACTION)
            return cfg.initial_lr * frac

        if cfg.workers == 1:
            for s in starts:
                sl = order[s:s + batch]
                epoch_loss += _run_batch(rows, ctx, centers[sl], contexts[sl],
                                         cum_noise, rng, lr_at(s),
                                         cfg.negatives_per_pair)
        else:
            # lock-free: workers race on the shared tables, results may
            # differ run to run
            seeds = rng.spawn(cfg.workers)
            chunks = np.array_split(np.arange(0, n_pairs, batch), cfg.workers)

            def work(args):
                wrng, my_starts = args
                acc = 0.0
                for s in my_starts:
                    sl = order[s:s + batch]
                    acc += _run_batch(rows, ctx, centers[sl], contexts[sl],
                                      cum_noise, wrng, lr_at(int(s)),
                                      cfg.negatives_per_pair)
                return acc

            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                rngs = [np.random.default_rng(s) for s in seeds]
                epoch_loss = sum(pool.map(work, zip(rngs, chunks)))
        losses.append(epoch_loss / n_pairs)

    if not np.all(np.isfinite(rows)):
        raise DataError("skip-gram training produced non-finite embeddings")
    return EmbeddingTable(tokens=tokens, rows=rows, context_rows=ctx,
                          epoch_losses=tuple(losses))


def baseline_tuple_score(emb: EmbeddingTable, members, mode: str) -> float:
    """Aggregate pairwise cosine similarity of the member embeddings."""
    if mode not in ("mean", "min"):
        raise DataError(f"unknown aggregation mode {mode!r}")
    if len(members) < 2:
        raise DataError("tuple needs at least 2 members")
    x = emb.rows[np.asarray(members, dtype=np.int64)]
    norms = np.linalg.norm(x, axis=1)
    sims = []
    for i in range(len(members)):
        for j in range(i + 1, len(members)):
            denom = norms[i] * norms[j]
            sims.append(float(x[i] @ x[j] / denom) if denom > 0 else 0.0)
    return float(np.mean(sims)) if mode == "mean" else float(np.min(sims))


def features_for_graph(emb: EmbeddingTable, g: Hypergraph) -> np.ndarray:
    """Input vectors reordered to node-id order; every node must be present."""
    out = np.empty((g.n_nodes, emb.dim))
    for nd in g.nodes:
        out[nd.id] = emb.rows[emb.index(nd.token)]
    return out


def write_embeddings(emb: EmbeddingTable, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        n, dim = emb.rows.shape
        fh.write(f"{n} {dim}\n")
        for tok, row in zip(emb.tokens, emb.rows):
            fh.write(tok + " " + " ".join(f"{v:.17g}" for v in row) + "\n")


def read_embeddings(path: str) -> EmbeddingTable:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        try:
            n, dim = (int(f) for f in header)
        except ValueError:
            raise DataError(f"bad embedding header in {path}") from None
        tokens, rows = [], np.empty((n, dim))
        for i in range(n):
            fields = fh.readline().split()
            if len(fields) != dim + 1:
                raise DataError(f"bad embedding record {i} in {path}")
            tokens.append(fields[0])
            rows[i] = [float(v) for v in fields[1:]]
    return EmbeddingTable(tokens=tuple(tokens), rows=rows,
                          context_rows=np.zeros_like(rows))
