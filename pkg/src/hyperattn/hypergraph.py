"""Immutable hypergraph data model with incidence algebra and sampling.

Nodes carry a dense integer id, the original string token, and a small
integer type tag. Hyperedges are weighted node multisets of size >= 2;
exact duplicates are collapsed at build time with summed weight. Tuples
are treated as order-free throughout, so membership keys are sorted id
tuples.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class Node:
    """A node record: dense id, original token, and type tag."""

    id: int
    token: str
    node_type: int


@dataclass(frozen=True)
class Hyperedge:
    """A weighted hyperedge over >= 2 distinct node ids."""

    members: tuple[int, ...]
    weight: float = 1.0

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class TupleSample:
    """A candidate node tuple with a binary label and provenance kind.

    ``planted`` records the replacement node when the tuple was built by
    corrupting a positive; None for organic tuples.
    """

    members: tuple[int, ...]
    label: int
    kind: str = "hyper"  # "hyper" or "pairwise"
    planted: int | None = None

    @property
    def key(self) -> tuple[int, ...]:
        return tuple(sorted(self.members))


def edge_key(members: Iterable[int]) -> tuple[int, ...]:
    return tuple(sorted(members))


class Hypergraph:
    """Immutable hypergraph with a per-node incidence index.

    Construct through :func:`build_hypergraph`; direct construction expects
    already-validated nodes and edges.
    """

    def __init__(self, nodes: Sequence[Node], edges: Sequence[Hyperedge],
                 type_names: Sequence[str]):
        self.nodes = tuple(nodes)
        self.edges = tuple(edges)
        self.type_names = tuple(type_names)
        self._validate()
        incidence: list[list[int]] = [[] for _ in self.nodes]
        for ei, e in enumerate(self.edges):
            for v in e.members:
                incidence[v].append(ei)
        self.incidence = tuple(tuple(sorted(lst)) for lst in incidence)
        self.edge_keys = frozenset(edge_key(e.members) for e in self.edges)
        by_type: dict[int, list[int]] = {}
        for nd in self.nodes:
            by_type.setdefault(nd.node_type, []).append(nd.id)
        self._nodes_by_type = {t: tuple(ids) for t, ids in by_type.items()}

    def _validate(self) -> None:
        tokens = set()
        for i, nd in enumerate(self.nodes):
            if nd.id != i:
                raise DataError(f"node ids must be contiguous, got {nd.id} at {i}")
            if nd.token in tokens:
                raise DataError(f"duplicate node token {nd.token!r}")
            tokens.add(nd.token)
            if not 0 <= nd.node_type < len(self.type_names):
                raise DataError(f"node type {nd.node_type} out of range")
        seen = set()
        for e in self.edges:
            if len(e.members) < 2:
                raise DataError(f"hyperedge {e.members} has fewer than 2 members")
            if len(set(e.members)) != len(e.members):
                raise DataError(f"hyperedge {e.members} repeats a member")
            if e.weight < 0:
                raise DataError(f"hyperedge {e.members} has negative weight")
            k = edge_key(e.members)
            if k in seen:
                raise DataError(f"duplicate hyperedge {k}")
            seen.add(k)
            for v in e.members:
                if not 0 <= v < len(self.nodes):
                    raise DataError(f"hyperedge member {v} out of range")

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def node_id(self, token: str) -> int:
        if not hasattr(self, "_token_index"):
            self._token_index = {nd.token: nd.id for nd in self.nodes}
        try:
            return self._token_index[token]
        except KeyError:
            raise DataError(f"unknown node token {token!r}") from None

    def nodes_of_type(self, node_type: int) -> tuple[int, ...]:
        return self._nodes_by_type.get(node_type, ())

    def incident_set(self, v: int) -> frozenset[int]:
        """Incident hyperedge indices of v as a set, cached per node."""
        self._check_node(v)
        if not hasattr(self, "_incident_sets"):
            self._incident_sets = [None] * self.n_nodes
        cached = self._incident_sets[v]
        if cached is None:
            cached = frozenset(self.incidence[v])
            self._incident_sets[v] = cached
        return cached

    def _check_node(self, v: int) -> None:
        if not 0 <= v < self.n_nodes:
            raise DataError(f"node id {v} out of range (n={self.n_nodes})")

    def degree(self, v: int) -> float:
        """Weighted degree: sum of w(e) over hyperedges incident to v."""
        self._check_node(v)
        return float(sum(self.edges[ei].weight for ei in self.incidence[v]))

    def adjacency_row(self, v: int) -> np.ndarray:
        """Row v of the co-membership count matrix, with a zero diagonal.

        Counts are unit (unweighted) hyperedge co-occurrences.
        """
        self._check_node(v)
        row = np.zeros(self.n_nodes, dtype=np.float64)
        for ei in self.incidence[v]:
            for u in self.edges[ei].members:
                if u != v:
                    row[u] += 1.0
        return row

    def adjacency_matrix(self) -> np.ndarray:
        """Dense co-membership count matrix (zero diagonal)."""
        mat = np.zeros((self.n_nodes, self.n_nodes), dtype=np.float64)
        for e in self.edges:
            m = e.members
            for i in m:
                for j in m:
                    if i != j:
                        mat[i, j] += 1.0
        return mat

    def vocab_hash(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for nd in self.nodes:
            h.update(nd.token.encode("utf-8"))
            h.update(b"\x00")
            h.update(str(nd.node_type).encode("ascii"))
            h.update(b"\n")
        return h.hexdigest()


def parse_edge_line(line: str) -> tuple[list[str], float]:
    """Split one hyperedge record into member tokens and a weight.

    Format: whitespace-separated tokens, optional trailing "w=<float>".
    """
    fields = line.split()
    weight = 1.0
    if fields and fields[-1].startswith("w="):
        try:
            weight = float(fields[-1][2:])
        except ValueError:
            raise DataError(f"bad weight field {fields[-1]!r} in line {line!r}")
        fields = fields[:-1]
    if len(fields) < 2:
        raise DataError(f"hyperedge line needs at least 2 node tokens: {line!r}")
    if len(set(fields)) != len(fields):
        raise DataError(f"hyperedge line repeats a token: {line!r}")
    if weight < 0:
        raise DataError(f"negative weight in line {line!r}")
    return fields, weight


def build_hypergraph(edge_lines: Iterable[str],
                     type_map: dict[str, str] | None = None,
                     default_type: str | None = None) -> Hypergraph:
    """Build a hypergraph from text records.

    ``type_map`` maps tokens to type names; tokens absent from it fall back
    to ``default_type`` or raise. Duplicate hyperedges (same member multiset)
    collapse with summed weight. Node ids follow first appearance; type tags
    follow sorted type-name order.
    """
    type_map = type_map or {}
    parsed: list[tuple[list[str], float]] = []
    for line in edge_lines:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parsed.append(parse_edge_line(line))

    token_order: list[str] = []
    token_to_id: dict[str, int] = {}
    for tokens, _ in parsed:
        for tok in tokens:
            if tok not in token_to_id:
                token_to_id[tok] = len(token_order)
                token_order.append(tok)

    names = set(type_map.values())
    if default_type is not None:
        names.add(default_type)
    for tok in token_order:
        if tok not in type_map and default_type is None:
            raise DataError(f"token {tok!r} has no declared type and no default")
    type_names = sorted(names) if names else ["node"]
    type_tag = {name: i for i, name in enumerate(type_names)}

    nodes = []
    for tok in token_order:
        name = type_map.get(tok, default_type)
        nodes.append(Node(id=token_to_id[tok], token=tok, node_type=type_tag[name]))

    collapsed: dict[tuple[int, ...], float] = {}
    member_order: dict[tuple[int, ...], tuple[int, ...]] = {}
    for tokens, weight in parsed:
        ids = tuple(token_to_id[t] for t in tokens)
        k = edge_key(ids)
        collapsed[k] = collapsed.get(k, 0.0) + weight
        member_order.setdefault(k, ids)
    edges = [Hyperedge(members=member_order[k], weight=w) for k, w in collapsed.items()]
    return Hypergraph(nodes, edges, type_names)


def decompose_pairwise(g: Hypergraph) -> list[TupleSample]:
    """All distinct unordered member pairs of every hyperedge, as positives."""
    seen: set[tuple[int, int]] = set()
    out: list[TupleSample] = []
    for e in g.edges:
        m = sorted(e.members)
        for i in range(len(m)):
            for j in range(i + 1, len(m)):
                k = (m[i], m[j])
                if k not in seen:
                    seen.add(k)
                    out.append(TupleSample(members=k, label=1, kind="pairwise"))
    return out


_MAX_RESAMPLE = 200


def sample_negatives(g: Hypergraph, positives: Sequence[TupleSample],
                     ratio: int, seed: int,
                     forbidden: frozenset[tuple[int, ...]] | None = None) -> list[TupleSample]:
    """Corrupt each positive ``ratio`` times: one slot replaced by a random
    distinct node of the same type.

    Candidates matching an existing hyperedge, any supplied positive, or any
    key in ``forbidden`` are rejected and resampled (bounded retries).
    """
    if ratio < 1:
        raise ValueError("ratio must be >= 1")
    reject = set(g.edge_keys)
    reject.update(p.key for p in positives)
    if forbidden:
        reject.update(forbidden)
    rng = np.random.default_rng(seed)
    out: list[TupleSample] = []
    for pos in positives:
        members = pos.members
        k = len(members)
        for _ in range(ratio):
            for attempt in range(_MAX_RESAMPLE):
                slot = int(rng.integers(k))
                victim = members[slot]
                pool = g.nodes_of_type(g.nodes[victim].node_type)
                if len(pool) < 2:
                    raise DataError(
                        f"node type {g.nodes[victim].node_type} has fewer than 2 nodes")
                repl = int(pool[rng.integers(len(pool))])
                if repl == victim or repl in members:
                    continue
                cand = members[:slot] + (repl,) + members[slot + 1:]
                if edge_key(cand) in reject:
                    continue
                out.append(TupleSample(members=cand, label=0, kind=pos.kind,
                                       planted=repl))
                break
            else:
                raise DataError(
                    "negative sampling retry budget exhausted; graph too dense "
                    f"for ratio {ratio}")
    return out


def split_train_test(edges: Sequence, ratio_train: int, ratio_test: int,
                     seed: int) -> tuple[list, list]:
    """Disjoint shuffle split with sizes within 1 of the exact ratio."""
    if ratio_train < 1 or ratio_test < 1:
        raise ValueError("split ratios must be >= 1")
    n = len(edges)
    if n < ratio_train + ratio_test:
        raise DataError(f"cannot split {n} edges at ratio "
                        f"{ratio_train}:{ratio_test}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_train = int(round(n * ratio_train / (ratio_train + ratio_test)))
    n_train = min(max(n_train, 1), n - 1)
    train_idx = sorted(order[:n_train].tolist())
    test_idx = sorted(order[n_train:].tolist())
    return [edges[i] for i in train_idx], [edges[i] for i in test_idx]


def downsample(hyperedges: Sequence, pairwise_edges: Sequence,
               hyper_frac: float, edge_frac: float,
               seed: int) -> tuple[list, list]:
    """Uniform subsets of the stated fractions (rounded), original order kept."""
    for frac in (hyper_frac, edge_frac):
        if not 0.0 <= frac <= 1.0:
            raise ValueError(f"fraction {frac} outside [0, 1]")
    rng = np.random.default_rng(seed)

    def pick(items: Sequence, frac: float) -> list:
        n = len(items)
        keep = int(round(n * frac))
        if keep >= n:
            return list(items)
        idx = sorted(rng.choice(n, size=keep, replace=False).tolist())
        return [items[i] for i in idx]

    return pick(hyperedges, hyper_frac), pick(pairwise_edges, edge_frac)


def read_type_file(path: str) -> dict[str, str]:
    """Parse "token<TAB>type_name" records."""
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataError(f"bad type record {line!r}")
            out[parts[0]] = parts[1]
    return out


def read_label_file(path: str) -> dict[str, list[str]]:
    """Parse "token<TAB>label[,label...]" records (multi-label permitted)."""
    out: dict[str, list[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[1]:
                raise DataError(f"bad label record {line!r}")
            out[parts[0]] = parts[1].split(",")
    return out


def read_edge_file(path: str) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh]
