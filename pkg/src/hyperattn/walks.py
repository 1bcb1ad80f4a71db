"""Biased second-order random walks on hypergraphs.

A walk steps v -> x -> t.  The first-order rule picks an incident hyperedge
of x proportional to its weight, then a member of that edge uniformly; the
second-order rule reweights candidates by whether they close a hyperedge
with the previous node before renormalizing.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .hypergraph import Hypergraph


@dataclass(frozen=True)
class WalkConfig:
    p: float = 1.0
    q: float = 1.0
    walk_length: int = 40
    walks_per_vertex: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.p <= 0.0 or self.q <= 0.0:
            raise DataError("walk bias parameters p and q must be positive")
        if self.walk_length < 2:
            raise DataError("walk_length must be at least 2")
        if self.walks_per_vertex < 1:
            raise DataError("walks_per_vertex must be at least 1")


@dataclass(frozen=True)
class Walk:
    path: tuple[int, ...]

    def __len__(self):
        return len(self.path)


def _first_order_arrays(g: Hypergraph, x: int):
    """Normalized successor targets and probabilities for x, or None if x
    has no successor.  Self-transitions are excluded before normalizing."""
    mass: dict[int, float] = {}
    for ei in g.incidence[x]:
        e = g.edges[ei]
        share = e.weight / e.size
        for t in e.members:
            if t != x:
                mass[t] = mass.get(t, 0.0) + share
    if not mass:
        return None
    targets = np.array(sorted(mass), dtype=np.int64)
    probs = np.array([mass[t] for t in targets])
    total = probs.sum()
    if total <= 0.0:
        return None
    return targets, probs / total


def first_order_distribution(g: Hypergraph, x: int) -> dict[int, float]:
    arrays = _first_order_arrays(g, x)
    if arrays is None:
        raise DataError(f"node {x} has no walk successor")
    targets, probs = arrays
    return {int(t): float(pr) for t, pr in zip(targets, probs)}


def second_order_bias(g: Hypergraph, t: int, v: int, x: int,
                      p: float, q: float) -> float:
    et = g.incident_set(t)
    ev = g.incident_set(v)
    ex = g.incident_set(x)
    if et & ev & ex:
        return 1.0 / p
    if et & ex:
        return 1.0
    return 1.0 / q


def transition_distribution(g: Hypergraph, v: int, x: int,
                            cfg: WalkConfig) -> dict[int, float]:
    if not (g.incident_set(v) & g.incident_set(x)):
        raise DataError(f"nodes {v} and {x} share no hyperedge")
    base = first_order_distribution(g, x)
    mass = {t: pr * second_order_bias(g, t, v, x, cfg.p, cfg.q)
            for t, pr in base.items()}
    z = sum(mass.values())
    return {t: m / z for t, m in mass.items()}


def isolated_nodes(g: Hypergraph) -> list[int]:
    return [v for v in range(g.n_nodes) if _first_order_arrays(g, v) is None]


class _Tables:
    """Per-graph memoized cumulative sampling tables.

    Second-order tables are built lazily per (v, x) pair; precomputing all
    pairs is prohibitive on large graphs.
    """

    def __init__(self, g: Hypergraph, cfg: WalkConfig):
        self.g = g
        self.cfg = cfg
        self._first: dict[int, tuple[np.ndarray, np.ndarray] | None] = {}
        self._second: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}

    def first(self, x: int):
        if x not in self._first:
            arrays = _first_order_arrays(self.g, x)
            if arrays is None:
                self._first[x] = None
            else:
                targets, probs = arrays
                self._first[x] = (targets, np.cumsum(probs))
        return self._first[x]

    def second(self, v: int, x: int):
        key = (v, x)
        entry = self._second.get(key)
        if entry is not None:
            return entry
        base = self.first(x)
        if base is None:
            return None
        targets, _ = base
        arrays = _first_order_arrays(self.g, x)
        probs = arrays[1].copy()
        # on the support every t already shares an edge with x, so the
        # bias is 1/p when some edge holds t, v and x together, else 1
        shared = self.g.incident_set(v) & self.g.incident_set(x)
        closing = set()
        for ei in shared:
            closing.update(self.g.edges[ei].members)
        for i, t in enumerate(targets):
            if int(t) in closing:
                probs[i] /= self.cfg.p
        probs /= probs.sum()
        entry = (targets, np.cumsum(probs))
        self._second[key] = entry
        return entry


def _draw(rng, targets: np.ndarray, cum: np.ndarray) -> int:
    i = int(np.searchsorted(cum, rng.random(), side="right"))
    return int(targets[min(i, len(targets) - 1)])


def simulate_walks(g: Hypergraph, cfg: WalkConfig) -> list[Walk]:
    """walks_per_vertex walks from every non-isolated node.

    Each walk draws from its own RNG stream keyed by (seed, start, index),
    so the corpus does not depend on generation order.
    """
    tables = _Tables(g, cfg)
    walks = []
    for start in range(g.n_nodes):
        if tables.first(start) is None:
            continue
        for index in range(cfg.walks_per_vertex):
            seq = np.random.SeedSequence(entropy=cfg.seed,
                                         spawn_key=(start, index))
            rng = np.random.default_rng(seq)
            path = [start]
            targets, cum = tables.first(start)
            path.append(_draw(rng, targets, cum))
            while len(path) < cfg.walk_length:
                entry = tables.second(path[-2], path[-1])
                if entry is None:
                    break
                path.append(_draw(rng, entry[0], entry[1]))
            walks.append(Walk(path=tuple(path)))
    return walks


def write_corpus(walks: list[Walk], g: Hypergraph, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for w in walks:
            fh.write(" ".join(g.nodes[v].token for v in w.path))
            fh.write("\n")


def read_corpus(path: str) -> list[list[str]]:
    sentences = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            tokens = line.split()
            if tokens:
                sentences.append(tokens)
    if not sentences:
        raise DataError(f"corpus {path} is empty")
    return sentences
