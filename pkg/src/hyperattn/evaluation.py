"""Task-level evaluation workflows: network reconstruction, held-out
hyperedge prediction, node classification, and outsider ranking."""

from __future__ import annotations

import numpy as np

from . import model as md
from .errors import DataError
from .hypergraph import (Hypergraph, TupleSample, sample_negatives,
                         split_train_test)
from .metrics import (MetricReport, auroc, aupr, f1_scores, fit_logistic,
                      outsider_topk_accuracy)
from .training import hyper_positives, predict_outsider


def scored_labels(params, model_cfg, samples, features,
                  pool: str = "mean") -> tuple[np.ndarray, np.ndarray]:
    p, labels, _ = md.batch_probs(params, model_cfg, samples, features,
                                  pool=pool)
    return p.data.ravel(), labels


def eval_reconstruction(params, model_cfg, g: Hypergraph, features,
                        neg_ratio: int = 5, seed: int = 0,
                        pool: str = "mean") -> MetricReport:
    """Separate the graph's own hyperedges from fresh corrupted tuples."""
    pos = hyper_positives(g)
    neg = sample_negatives(g, pos, neg_ratio, seed=seed)
    scores, labels = scored_labels(params, model_cfg, pos + neg, features,
                                   pool)
    return MetricReport(
        task="reconstruction",
        values={"auroc": auroc(scores, labels),
                "aupr": aupr(scores, labels)},
        metadata={"seed": seed, "n_pos": len(pos), "n_neg": len(neg),
                  "dataset_hash": g.vocab_hash()})


def linkpred_split(g: Hypergraph, split_seed: int,
                   ratio: tuple[int, int] = (4, 1)):
    """The deterministic train/test hyperedge split shared by training and
    evaluation."""
    return split_train_test(g.edges, ratio[0], ratio[1], split_seed)


def eval_linkpred(params, model_cfg, g: Hypergraph, features,
                  split_seed: int, ratio: tuple[int, int] = (4, 1),
                  neg_ratio: int = 5, seed: int = 0,
                  pool: str = "mean") -> MetricReport:
    """Score the held-out hyperedges of the split against fresh negatives.

    Negative candidates are rejected against the full graph, so no test
    negative is a true hyperedge anywhere.
    """
    _, test_edges = linkpred_split(g, split_seed, ratio)
    pos = [TupleSample(members=tuple(e.members), label=1, kind="hyper")
           for e in test_edges]
    neg = sample_negatives(g, pos, neg_ratio, seed=seed)
    scores, labels = scored_labels(params, model_cfg, pos + neg, features,
                                   pool)
    return MetricReport(
        task="linkpred",
        values={"auroc": auroc(scores, labels),
                "aupr": aupr(scores, labels)},
        metadata={"seed": seed, "split_seed": split_seed,
                  "ratio": f"{ratio[0]}:{ratio[1]}", "n_pos": len(pos),
                  "n_neg": len(neg), "dataset_hash": g.vocab_hash()})


def _train_indices(n: int, fraction: float, seed: int) -> np.ndarray:
    # mirrors the subset rule inside fit_logistic so the complement is the
    # honest test set
    if fraction >= 1.0:
        return np.arange(n)
    rng = np.random.default_rng(seed)
    return np.sort(rng.permutation(n)[:max(1, int(round(n * fraction)))])


def eval_nodeclass(params, model_cfg, features,
                   label_map: dict[int, list[str]], mode: str | None = None,
                   train_fraction: float = 0.8,
                   seed: int = 0) -> MetricReport:
    """Logistic-regression probe on the node representations.

    ``label_map`` assigns each labeled node a list of class names; a single
    class everywhere selects multiclass mode unless overridden.
    """
    if not label_map:
        raise DataError("no labeled nodes")
    ids = sorted(label_map)
    if mode is None:
        mode = ("multiclass"
                if all(len(label_map[i]) == 1 for i in ids)
                else "multilabel")
    if mode == "multiclass":
        if any(len(label_map[i]) != 1 for i in ids):
            raise DataError("multiclass mode needs exactly one label per "
                            "node")
        labels = [label_map[i][0] for i in ids]
    else:
        labels = [sorted(label_map[i]) for i in ids]

    reps = md.node_repr_for_classification(params, model_cfg, features)[ids]
    clf = fit_logistic(reps, labels, mode=mode,
                       train_fraction=train_fraction, seed=seed)
    train_idx = _train_indices(len(ids), train_fraction, seed)
    mask = np.ones(len(ids), dtype=bool)
    if train_fraction < 1.0:
        mask[train_idx] = False
    test_idx = np.flatnonzero(mask) if mask.any() else np.arange(len(ids))
    y_true = [labels[i] for i in test_idx]
    y_pred = clf.predict(reps[test_idx])
    return MetricReport(
        task="nodeclass",
        values=f1_scores(y_true, y_pred, mode=mode),
        metadata={"seed": seed, "mode": mode,
                  "train_fraction": train_fraction,
                  "n_labeled": len(ids), "n_test": len(test_idx)})


def eval_outsider(params, model_cfg, features, tuples,
                  answers=None, ks=(1, 2)) -> tuple[list[list[int]],
                                                    MetricReport]:
    """Rank each tuple's members by membership probability; score top-k
    accuracy when the true outsiders are supplied."""
    rankings = [predict_outsider(params, model_cfg, features, t)
                for t in tuples]
    values = {}
    if answers is not None:
        for k in ks:
            values[f"top{k}_accuracy"] = outsider_topk_accuracy(
                rankings, answers, k)
    return rankings, MetricReport(task="outsider", values=values,
                                  metadata={"n_tuples": len(tuples)})


def generate_outsider_tuples(g: Hypergraph, n: int,
                             seed: int = 0) -> list[tuple[tuple[int, ...],
                                                          int]]:
    """Evaluation tuples with one planted outsider each.

    A true hyperedge has one member replaced by a same-type node that
    shares no hyperedge with any remaining member; returns (members,
    outsider) pairs.
    """
    if n < 1:
        raise DataError("n must be >= 1")
    rng = np.random.default_rng(seed)
    out: list[tuple[tuple[int, ...], int]] = []
    seen: set[tuple[int, ...]] = set()
    attempts = 0
    while len(out) < n and attempts < 400 * n:
        attempts += 1
        e = g.edges[int(rng.integers(len(g.edges)))]
        slot = int(rng.integers(len(e.members)))
        victim = e.members[slot]
        rest = [m for i, m in enumerate(e.members) if i != slot]
        pool = g.nodes_of_type(g.nodes[victim].node_type)
        cands = [r for r in pool
                 if r not in e.members
                 and all(not (g.incident_set(r) & g.incident_set(m))
                         for m in rest)]
        if not cands:
            continue
        repl = int(cands[int(rng.integers(len(cands)))])
        members = e.members[:slot] + (repl,) + e.members[slot + 1:]
        if members in seen:
            continue
        seen.add(members)
        out.append((members, repl))
    if len(out) < n:
        raise DataError(f"could only plant {len(out)} of {n} outsider "
                        "tuples; graph too dense")
    return out


def mean_report(task: str, reports: list[MetricReport],
                metadata: dict | None = None) -> MetricReport:
    """Average repeated runs of one task; per-run values are retained."""
    if not reports:
        raise DataError("no reports to average")
    names = sorted(reports[0].values)
    per_run = {n: [r.values[n] for r in reports] for n in names}
    values = {n: float(np.mean(per_run[n])) for n in names}
    meta = {"runs": len(reports)}
    if metadata:
        meta.update(metadata)
    return MetricReport(task=task, values=values, metadata=meta,
                        per_run=per_run)
