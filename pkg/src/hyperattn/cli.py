"""Command-line front end: ingest, walk, embed, train, evaluate, outsider
analysis, and plot export, each emitting a reproducible run manifest."""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time

import numpy as np

from . import __version__
from . import model as md
from .errors import DataError, DivergenceError
from .evaluation import (eval_linkpred, eval_nodeclass, eval_outsider,
                         eval_reconstruction, linkpred_split)
from .hypergraph import (Hyperedge, Hypergraph, Node, TupleSample,
                         build_hypergraph, read_edge_file, read_label_file,
                         read_type_file)
from .metrics import project_2d, write_report_csv, write_report_text
from .skipgram import (SkipGramConfig, features_for_graph, read_embeddings,
                       train_skipgram, write_embeddings)
from .training import (TrainConfig, load_checkpoint, save_checkpoint, train)
from .walks import (WalkConfig, isolated_nodes, read_corpus, simulate_walks,
                    write_corpus)


# ---------------------------------------------------------------- plumbing

def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _read_kv_config(path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataError(f"config line without '=': {line!r}")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def _parse_value(raw: str, typ, key: str):
    if typ is bool:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise DataError(f"bad boolean for {key}: {raw!r}")
    try:
        return typ(raw)
    except ValueError:
        raise DataError(f"bad value for {key}: {raw!r}") from None


def _resolve(ns, file_cfg: dict[str, str], decls) -> dict:
    """Flags beat config-file entries beat declared defaults."""
    resolved = {}
    for dest, typ, default in decls:
        val = getattr(ns, dest)
        if val is None:
            key = dest.replace("_", "-")
            if key in file_cfg:
                val = _parse_value(file_cfg[key], typ, key)
            else:
                val = default
        resolved[dest] = val
    return resolved


_GLOBAL_DECLS = [("seed", int, 0), ("threads", int, 1),
                 ("deterministic", bool, False)]


def _workers(resolved: dict) -> int:
    if resolved["deterministic"]:
        return 1
    return max(1, resolved["threads"])


def _write_manifest(path: str, command: str, resolved: dict,
                    inputs: dict[str, str], outputs: list[str],
                    t0: float) -> None:
    man = {
        "command": command,
        "version": __version__,
        "config": resolved,
        "inputs": inputs,
        "outputs": sorted(outputs),
        "timings": {"total_s": round(time.time() - t0, 3)},
        "written_at": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(man, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _manifest_path(ns, primary_out: str) -> str:
    return ns.manifest if ns.manifest else primary_out + ".manifest.json"


def _load_graph(ns) -> tuple[Hypergraph, dict[str, str]]:
    if getattr(ns, "graph", None):
        with open(ns.graph, encoding="utf-8") as fh:
            data = json.load(fh)
        try:
            nodes = [Node(int(i), tok, int(t)) for i, tok, t in data["nodes"]]
            edges = [Hyperedge(members=tuple(int(v) for v in m),
                               weight=float(w)) for m, w in data["edges"]]
            g = Hypergraph(nodes, edges, data["type_names"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"bad graph cache {ns.graph}: {exc}") from exc
        return g, {ns.graph: _sha256(ns.graph)}
    if not getattr(ns, "edges", None):
        raise DataError("need --edges (with optional --types) or --graph")
    lines = read_edge_file(ns.edges)
    digests = {ns.edges: _sha256(ns.edges)}
    if getattr(ns, "types", None):
        tmap = read_type_file(ns.types)
        digests[ns.types] = _sha256(ns.types)
        g = build_hypergraph(lines, type_map=tmap)
    else:
        g = build_hypergraph(lines, default_type="node")
    return g, digests


def _features_for(ns, g: Hypergraph, model_cfg: md.ModelConfig,
                  stored: np.ndarray | None,
                  inputs: dict[str, str]) -> np.ndarray:
    if model_cfg.feature_mode == "encoder":
        return g.adjacency_matrix()
    if stored is not None:
        return stored
    if not getattr(ns, "embeddings", None):
        raise DataError("walk mode needs --embeddings (or a checkpoint "
                        "that stores the feature table)")
    emb = read_embeddings(ns.embeddings)
    inputs[ns.embeddings] = _sha256(ns.embeddings)
    return features_for_graph(emb, g)


def _parse_ratio(raw: str) -> tuple[int, int]:
    parts = raw.split(":")
    if len(parts) != 2:
        raise DataError(f"ratio must look like 4:1, got {raw!r}")
    try:
        a, b = int(parts[0]), int(parts[1])
    except ValueError:
        raise DataError(f"ratio must be integers, got {raw!r}") from None
    if a < 1 or b < 1:
        raise DataError("ratio parts must be >= 1")
    return a, b


# ---------------------------------------------------------------- svg

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
            "#8c564b", "#e377c2", "#7f7f7f")


def _svg_open(width: int, height: int) -> list[str]:
    return [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
            f'height="{height}" viewBox="0 0 {width} {height}">',
            f'<rect width="{width}" height="{height}" fill="white"/>']


def _axis_frame(x0, y0, x1, y1, title, xlabel, ylabel) -> list[str]:
    return [
        f'<line x1="{x0}" y1="{y1}" x2="{x1}" y2="{y1}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
        f'<text x="{(x0 + x1) / 2:.0f}" y="16" text-anchor="middle" '
        f'font-size="13">{title}</text>',
        f'<text x="{(x0 + x1) / 2:.0f}" y="{y1 + 32:.0f}" '
        f'text-anchor="middle" font-size="11">{xlabel}</text>',
        f'<text x="14" y="{(y0 + y1) / 2:.0f}" text-anchor="middle" '
        f'font-size="11" transform="rotate(-90 14 {(y0 + y1) / 2:.0f})">'
        f'{ylabel}</text>',
    ]


def write_curve_svg(path: str, series: list[tuple[str, list[float]]],
                    title: str, ylabel: str = "value",
                    emphasize: str | None = None) -> None:
    """Polyline chart: one line per named series over epoch index."""
    width, height = 640, 400
    x0, y0, x1, y1 = 56, 28, width - 16, height - 44
    ys_all = [v for _, ys in series for v in ys if np.isfinite(v)]
    if not ys_all:
        raise DataError("nothing to plot")
    lo, hi = min(ys_all), max(ys_all)
    if hi == lo:
        hi = lo + 1.0
    n = max(len(ys) for _, ys in series)

    def px(i):
        return x0 + (x1 - x0) * (i / max(1, n - 1))

    def py(v):
        return y1 - (y1 - y0) * ((v - lo) / (hi - lo))

    parts = _svg_open(width, height)
    parts += _axis_frame(x0, y0, x1, y1, title, "epoch", ylabel)
    parts.append(f'<text x="{x0 - 4}" y="{y1:.0f}" text-anchor="end" '
                 f'font-size="10">{lo:.3f}</text>')
    parts.append(f'<text x="{x0 - 4}" y="{y0 + 8:.0f}" text-anchor="end" '
                 f'font-size="10">{hi:.3f}</text>')
    parts.append(f'<text x="{x1}" y="{y1 + 16:.0f}" text-anchor="end" '
                 f'font-size="10">{n - 1}</text>')
    for k, (label, ys) in enumerate(series):
        pts = " ".join(f"{px(i):.1f},{py(v):.1f}"
                       for i, v in enumerate(ys) if np.isfinite(v))
        bold = emphasize is not None and label == emphasize
        color = "#000000" if bold else _PALETTE[k % len(_PALETTE)]
        wide = 2.5 if bold else 1.2
        parts.append(f'<polyline points="{pts}" fill="none" '
                     f'stroke="{color}" stroke-width="{wide}"/>')
        parts.append(f'<text x="{x1 - 4}" y="{y0 + 12 + 13 * k}" '
                     f'text-anchor="end" font-size="10" fill="{color}">'
                     f'{label}</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")


def write_scatter_svg(path: str, points: np.ndarray, groups: list[int],
                      group_names: list[str], title: str) -> None:
    """2-d scatter colored by group."""
    width, height = 520, 520
    x0, y0, x1, y1 = 40, 28, width - 16, height - 40
    pts = np.asarray(points, dtype=np.float64)
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    span = np.where(hi - lo == 0, 1.0, hi - lo)

    parts = _svg_open(width, height)
    parts += _axis_frame(x0, y0, x1, y1, title, "component 1", "component 2")
    for (x, y), grp in zip(pts, groups):
        cx = x0 + (x1 - x0) * (x - lo[0]) / span[0]
        cy = y1 - (y1 - y0) * (y - lo[1]) / span[1]
        color = _PALETTE[grp % len(_PALETTE)]
        parts.append(f'<circle cx="{cx:.1f}" cy="{cy:.1f}" r="3" '
                     f'fill="{color}" fill-opacity="0.7"/>')
    for k, name in enumerate(group_names):
        color = _PALETTE[k % len(_PALETTE)]
        parts.append(f'<text x="{x1 - 4}" y="{y0 + 12 + 13 * k}" '
                     f'text-anchor="end" font-size="10" fill="{color}">'
                     f'{name}</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")


# ---------------------------------------------------------------- commands

def cmd_ingest(ns, file_cfg) -> int:
    t0 = time.time()
    resolved = _resolve(ns, file_cfg, _GLOBAL_DECLS)
    g, inputs = _load_graph(ns)
    data = {
        "type_names": list(g.type_names),
        "nodes": [[nd.id, nd.token, nd.node_type] for nd in g.nodes],
        "edges": [[list(e.members), e.weight] for e in g.edges],
        "vocab_hash": g.vocab_hash(),
    }
    with open(ns.out, "w", encoding="utf-8") as fh:
        json.dump(data, fh, sort_keys=True)
        fh.write("\n")
    n_iso = len(isolated_nodes(g))
    print(f"ingested {g.n_nodes} nodes ({len(g.type_names)} types), "
          f"{len(g.edges)} hyperedges, {n_iso} isolated")
    _write_manifest(_manifest_path(ns, ns.out), "ingest", resolved, inputs,
                    [ns.out], t0)
    return 0


_WALK_DECLS = [("p", float, 1.0), ("q", float, 1.0),
               ("walk_length", int, 40), ("walks_per_vertex", int, 10)]


def cmd_walk(ns, file_cfg) -> int:
    t0 = time.time()
    resolved = _resolve(ns, file_cfg, _GLOBAL_DECLS + _WALK_DECLS)
    g, inputs = _load_graph(ns)
    cfg = WalkConfig(p=resolved["p"], q=resolved["q"],
                     walk_length=resolved["walk_length"],
                     walks_per_vertex=resolved["walks_per_vertex"],
                     seed=resolved["seed"])
    walks = simulate_walks(g, cfg)
    write_corpus(walks, g, ns.out)
    skipped = len(isolated_nodes(g))
    print(f"wrote {len(walks)} walks to {ns.out}"
          + (f" ({skipped} isolated nodes skipped)" if skipped else ""))
    _write_manifest(_manifest_path(ns, ns.out), "walk", resolved, inputs,
                    [ns.out], t0)
    return 0


_EMBED_DECLS = [("dim", int, 64), ("window", int, 10),
                ("negatives", int, 5), ("epochs", int, 5),
                ("lr", float, 0.025)]


def cmd_embed(ns, file_cfg) -> int:
    t0 = time.time()
    resolved = _resolve(ns, file_cfg, _GLOBAL_DECLS + _EMBED_DECLS)
    sentences = read_corpus(ns.corpus)
    inputs = {ns.corpus: _sha256(ns.corpus)}
    cfg = SkipGramConfig(dim=resolved["dim"], window=resolved["window"],
                         negatives_per_pair=resolved["negatives"],
                         epochs=resolved["epochs"],
                         initial_lr=resolved["lr"], seed=resolved["seed"],
                         workers=_workers(resolved))
    emb = train_skipgram(sentences, cfg)
    write_embeddings(emb, ns.out)
    print(f"embedded {len(emb.tokens)} tokens at dim {emb.dim}; "
          f"final epoch loss {emb.epoch_losses[-1]:.4f}")
    _write_manifest(_manifest_path(ns, ns.out), "embed", resolved, inputs,
                    [ns.out], t0)
    return 0


_TRAIN_DECLS = [("dim", int, 64), ("heads", int, 4),
                ("variant", str, "standard"),
                ("feature_mode", str, "walk"),
                ("recon_weight", float, 0.0),
                ("epochs", int, 30), ("batch_size", int, 64),
                ("lr", float, 1e-3), ("neg_ratio", int, 5),
                ("mix_pairwise", bool, False),
                ("pool", str, "mean"), ("val_fraction", float, 0.1),
                ("outsider_ce_weight", float, 0.0),
                ("split", str, ""), ("split_seed", int, 0)]


def _history_csv(path: str, history) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,loss,val_auc,val_auc_hyper,val_auc_pairwise\n")
        for h in history:
            auc = "" if h.val_auc is None else f"{h.val_auc:.6f}"
            hk = h.val_auc_by_kind.get("hyper")
            pk = h.val_auc_by_kind.get("pairwise")
            fh.write(f"{h.epoch},{h.loss:.6f},{auc},"
                     f"{'' if hk is None else f'{hk:.6f}'},"
                     f"{'' if pk is None else f'{pk:.6f}'}\n")


def cmd_train(ns, file_cfg) -> int:
    t0 = time.time()
    resolved = _resolve(ns, file_cfg, _GLOBAL_DECLS + _TRAIN_DECLS)
    g, inputs = _load_graph(ns)
    model_cfg = md.ModelConfig(dim=resolved["dim"], heads=resolved["heads"],
                               variant=resolved["variant"],
                               feature_mode=resolved["feature_mode"],
                               recon_weight=resolved["recon_weight"])
    feats = _features_for(ns, g, model_cfg, None, inputs)
    train_cfg = TrainConfig(epochs=resolved["epochs"],
                            batch_size=resolved["batch_size"],
                            learning_rate=resolved["lr"],
                            neg_ratio=resolved["neg_ratio"],
                            mix_pairwise=resolved["mix_pairwise"],
                            seed=resolved["seed"],
                            pool_mode=resolved["pool"],
                            val_fraction=resolved["val_fraction"],
                            outsider_ce_weight=resolved["outsider_ce_weight"])
    positives = None
    if resolved["split"]:
        ratio = _parse_ratio(resolved["split"])
        train_edges, _ = linkpred_split(g, resolved["split_seed"], ratio)
        positives = [TupleSample(members=tuple(e.members), label=1,
                                 kind="hyper") for e in train_edges]
        if train_cfg.mix_pairwise:
            from .training import pairwise_positives_of
            positives = positives + pairwise_positives_of(positives)

    params, history = train(g, feats, model_cfg, train_cfg,
                            positives=positives)
    save_checkpoint(params, model_cfg, ns.out, vocab_hash=g.vocab_hash(),
                    seed=train_cfg.seed, epoch=train_cfg.epochs,
                    n_nodes=g.n_nodes, features=feats)
    hist_path = ns.history if ns.history else ns.out + ".history.csv"
    _history_csv(hist_path, history)
    last = history[-1]
    auc_txt = "n/a" if last.val_auc is None else f"{last.val_auc:.4f}"
    print(f"trained {model_cfg.variant}/{model_cfg.feature_mode} for "
          f"{train_cfg.epochs} epochs: loss {last.loss:.4f}, "
          f"val auroc {auc_txt}")
    _write_manifest(_manifest_path(ns, ns.out), "train", resolved, inputs,
                    [ns.out, hist_path], t0)
    return 0


def _load_model(ns, g: Hypergraph, inputs: dict[str, str]):
    ck = load_checkpoint(ns.checkpoint, expected_vocab_hash=g.vocab_hash())
    inputs[ns.checkpoint] = _sha256(ns.checkpoint)
    feats = _features_for(ns, g, ck.config, ck.features, inputs)
    return ck, feats


_EVAL_DECLS = [("neg_ratio", int, 5), ("pool", str, "mean")]


def _emit_report(ns, report, t0, command, resolved, inputs) -> None:
    reports = report if isinstance(report, list) else [report]
    write_report_text(reports, ns.report)
    csv_path = ns.csv if ns.csv else ns.report + ".csv"
    write_report_csv(reports, csv_path)
    for rep in reports:
        for name in sorted(rep.values):
            print(f"{rep.task} {name}: {rep.values[name]:.6f}")
    _write_manifest(_manifest_path(ns, ns.report), command, resolved,
                    inputs, [ns.report, csv_path], t0)


def cmd_eval_reconstruction(ns, file_cfg) -> int:
    t0 = time.time()
    resolved = _resolve(ns, file_cfg, _GLOBAL_DECLS + _EVAL_DECLS)
    g, inputs = _load_graph(ns)
    ck, feats = _load_model(ns, g, inputs)
    rep = eval_reconstruction(ck.params, ck.config, g, feats,
                              neg_ratio=resolved["neg_ratio"],
                              seed=resolved["seed"], pool=resolved["pool"])
    _emit_report(ns, rep, t0, "eval-reconstruction", resolved, inputs)
    return 0


def cmd_eval_linkpred(ns, file_cfg) -> int:
    t0 = time.time()
    decls = _GLOBAL_DECLS + _EVAL_DECLS + [("ratio", str, "4:1"),
                                           ("split_seed", int, 0)]
    resolved = _resolve(ns, file_cfg, decls)
    g, inputs = _load_graph(ns)
    ck, feats = _load_model(ns, g, inputs)
    rep = eval_linkpred(ck.params, ck.config, g, feats,
                        split_seed=resolved["split_seed"],
                        ratio=_parse_ratio(resolved["ratio"]),
                        neg_ratio=resolved["neg_ratio"],
                        seed=resolved["seed"], pool=resolved["pool"])
    _emit_report(ns, rep, t0, "eval-linkpred", resolved, inputs)
    return 0


def cmd_eval_nodeclass(ns, file_cfg) -> int:
    t0 = time.time()
    decls = _GLOBAL_DECLS + [("mode", str, "auto"),
                             ("train_fraction", float, 0.8)]
    resolved = _resolve(ns, file_cfg, decls)
    g, inputs = _load_graph(ns)
    ck, feats = _load_model(ns, g, inputs)
    raw = read_label_file(ns.labels)
    inputs[ns.labels] = _sha256(ns.labels)
    token_to_id = {nd.token: nd.id for nd in g.nodes}
    label_map = {}
    for token, labels in raw.items():
        if token not in token_to_id:
            raise DataError(f"labeled token {token!r} not in the graph")
        label_map[token_to_id[token]] = labels
    mode = None if resolved["mode"] == "auto" else resolved["mode"]
    rep = eval_nodeclass(ck.params, ck.config, feats, label_map, mode=mode,
                         train_fraction=resolved["train_fraction"],
                         seed=resolved["seed"])
    _emit_report(ns, rep, t0, "eval-nodeclass", resolved, inputs)
    return 0


def _read_tuple_file(path: str, g: Hypergraph):
    """Member tokens per line; a '*' suffix marks a labeled outsider."""
    token_to_id = {nd.token: nd.id for nd in g.nodes}
    tuples, answers = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            members, outsider = [], None
            for field in line.split():
                labeled = field.endswith("*")
                token = field[:-1] if labeled else field
                if token not in token_to_id:
                    raise DataError(f"{path}:{lineno}: unknown token "
                                    f"{token!r}")
                vid = token_to_id[token]
                members.append(vid)
                if labeled:
                    if outsider is not None:
                        raise DataError(f"{path}:{lineno}: two outsider "
                                        "markers")
                    outsider = vid
            if len(members) < 2:
                raise DataError(f"{path}:{lineno}: tuple needs >= 2 members")
            tuples.append(tuple(members))
            answers.append(outsider)
    if not tuples:
        raise DataError(f"no tuples in {path}")
    labeled = [a is not None for a in answers]
    if any(labeled) and not all(labeled):
        raise DataError(f"{path}: either label every tuple's outsider with "
                        "'*' or none")
    return tuples, (answers if all(labeled) else None)


def cmd_outsider(ns, file_cfg) -> int:
    t0 = time.time()
    resolved = _resolve(ns, file_cfg, _GLOBAL_DECLS + [("topk", int, 2)])
    g, inputs = _load_graph(ns)
    ck, feats = _load_model(ns, g, inputs)
    tuples, answers = _read_tuple_file(ns.tuples, g)
    inputs[ns.tuples] = _sha256(ns.tuples)
    ks = tuple(range(1, resolved["topk"] + 1))
    rankings, rep = eval_outsider(ck.params, ck.config, feats, tuples,
                                  answers, ks=ks)
    outputs = [ns.out]
    with open(ns.out, "w", encoding="utf-8") as fh:
        for ranked in rankings:
            fh.write("\t".join(g.nodes[v].token for v in ranked) + "\n")
    if answers is not None:
        for k in ks:
            v = rep.values[f"top{k}_accuracy"]
            print(f"top-{k} accuracy: {v:.4f}")
        report_path = ns.report if ns.report else ns.out + ".report.txt"
        write_report_text([rep], report_path)
        write_report_csv([rep], report_path + ".csv")
        outputs += [report_path, report_path + ".csv"]
    else:
        print(f"ranked {len(rankings)} tuples (no outsider labels)")
    _write_manifest(_manifest_path(ns, ns.out), "outsider", resolved,
                    inputs, outputs, t0)
    return 0


def _read_history_csv(path: str) -> dict[str, list[float]]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        cols: dict[str, list[float]] = {name: [] for name in header}
        for line in fh:
            parts = line.rstrip("\n").split(",")
            if len(parts) != len(header):
                raise DataError(f"ragged history row in {path}")
            for name, value in zip(header, parts):
                cols[name].append(float(value) if value else np.nan)
    if "epoch" not in cols:
        raise DataError(f"{path} has no epoch column")
    return cols


def cmd_export_plot(ns, file_cfg) -> int:
    t0 = time.time()
    resolved = _resolve(ns, file_cfg,
                        _GLOBAL_DECLS + [("metric", str, "val_auc")])
    inputs: dict[str, str] = {}
    prefix = ns.out_prefix
    outputs = [prefix + ".csv", prefix + ".svg"]

    if ns.history:
        metric = resolved["metric"]
        series = []
        for path in ns.history:
            cols = _read_history_csv(path)
            inputs[path] = _sha256(path)
            if metric not in cols:
                raise DataError(f"{path} has no column {metric!r}")
            series.append((path.rsplit("/", 1)[-1], cols[metric]))
        n = max(len(ys) for _, ys in series)
        mean = [float(np.nanmean([ys[i] for _, ys in series
                                  if i < len(ys)])) for i in range(n)]
        with open(prefix + ".csv", "w", encoding="utf-8") as fh:
            fh.write("epoch," + ",".join(label for label, _ in series)
                     + ",mean\n")
            for i in range(n):
                row = [str(i)]
                for _, ys in series:
                    row.append(f"{ys[i]:.6f}" if i < len(ys)
                               and np.isfinite(ys[i]) else "")
                row.append(f"{mean[i]:.6f}" if np.isfinite(mean[i]) else "")
                fh.write(",".join(row) + "\n")
        plot_series = series + [("mean", mean)]
        write_curve_svg(prefix + ".svg", plot_series,
                        title=f"{metric} per epoch", ylabel=metric,
                        emphasize="mean")
        print(f"wrote curve over {len(series)} runs to {prefix}.svg")
    elif ns.checkpoint:
        g, g_inputs = _load_graph(ns)
        inputs.update(g_inputs)
        ck, feats = _load_model(ns, g, inputs)
        reps = md.node_repr_for_classification(ck.params, ck.config, feats)
        proj = project_2d(reps, seed=resolved["seed"])
        with open(prefix + ".csv", "w", encoding="utf-8") as fh:
            fh.write("node,token,type,x,y\n")
            for nd in g.nodes:
                fh.write(f"{nd.id},{nd.token},"
                         f"{g.type_names[nd.node_type]},"
                         f"{proj[nd.id, 0]:.6f},{proj[nd.id, 1]:.6f}\n")
        write_scatter_svg(prefix + ".svg", proj,
                          [nd.node_type for nd in g.nodes],
                          list(g.type_names), "node representations")
        print(f"wrote 2-d projection of {g.n_nodes} nodes to {prefix}.svg")
    else:
        raise DataError("export-plot needs --history files or --checkpoint")
    _write_manifest(_manifest_path(ns, prefix + ".svg"), "export-plot",
                    resolved, inputs, outputs, t0)
    return 0


# ---------------------------------------------------------------- parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_global_flags(p) -> None:
    p.add_argument("--seed", type=int, default=None,
                   help="master random seed (default 0)")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads where supported (default 1)")
    p.add_argument("--deterministic", action="store_const", const=True,
                   default=None, help="force single-threaded execution")
    p.add_argument("--config", default=None,
                   help="key=value file; flags override it")
    p.add_argument("--manifest", default=None,
                   help="run manifest path (default <output>.manifest.json)")


def _add_graph_flags(p) -> None:
    p.add_argument("--edges", default=None, help="hyperedge list file")
    p.add_argument("--types", default=None, help="token->type map file")
    p.add_argument("--graph", default=None,
                   help="cached graph JSON from ingest")


def build_parser() -> _Parser:
    parser = _Parser(prog="hyperattn",
                     description="hypergraph tuple-scoring toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("ingest", parents=[], help="validate and cache")
    _add_graph_flags(p)
    _add_global_flags(p)
    p.add_argument("--out", required=True, help="graph cache JSON")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("walk", help="emit a random-walk corpus")
    _add_graph_flags(p)
    _add_global_flags(p)
    p.add_argument("--p", type=float, default=None,
                   help="return bias (default 1.0)")
    p.add_argument("--q", type=float, default=None,
                   help="exploration bias (default 1.0)")
    p.add_argument("--walk-length", type=int, default=None,
                   help="steps per walk (default 40)")
    p.add_argument("--walks-per-vertex", type=int, default=None,
                   help="walks per start node (default 10)")
    p.add_argument("--out", required=True, help="corpus text file")
    p.set_defaults(func=cmd_walk)

    p = sub.add_parser("embed", help="skip-gram embeddings from a corpus")
    _add_global_flags(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--dim", type=int, default=None,
                   help="embedding size (default 64)")
    p.add_argument("--window", type=int, default=None,
                   help="context window (default 10)")
    p.add_argument("--negatives", type=int, default=None,
                   help="noise samples per pair (default 5)")
    p.add_argument("--epochs", type=int, default=None,
                   help="passes over the corpus (default 5)")
    p.add_argument("--lr", type=float, default=None,
                   help="initial learning rate (default 0.025)")
    p.add_argument("--out", required=True, help="embedding text file")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("train", help="fit the scoring model")
    _add_graph_flags(p)
    _add_global_flags(p)
    p.add_argument("--embeddings", default=None,
                   help="embedding file (walk mode)")
    p.add_argument("--feature-mode", default=None,
                   choices=("walk", "encoder"))
    p.add_argument("--dim", type=int, default=None,
                   help="model width (default 64)")
    p.add_argument("--heads", type=int, default=None,
                   help="attention heads (default 4)")
    p.add_argument("--variant", default=None,
                   choices=("standard", "self-inclusive", "dynamic-only"))
    p.add_argument("--recon-weight", type=float, default=None,
                   help="encoder reconstruction weight (default 0)")
    p.add_argument("--epochs", type=int, default=None,
                   help="training epochs (default 30)")
    p.add_argument("--batch-size", type=int, default=None,
                   help="tuples per step (default 64)")
    p.add_argument("--lr", type=float, default=None,
                   help="learning rate (default 1e-3)")
    p.add_argument("--neg-ratio", type=int, default=None,
                   help="negatives per positive (default 5)")
    p.add_argument("--mix-pairwise", action="store_const", const=True,
                   default=None,
                   help="also train on decomposed pairwise edges")
    p.add_argument("--pool", default=None, choices=("mean", "min"),
                   help="tuple pooling (default mean)")
    p.add_argument("--outsider-ce-weight", type=float, default=None,
                   help="weight of the per-node membership cross-entropy "
                        "on corrupted tuples with a verified replacement "
                        "(0 disables)")
    p.add_argument("--val-fraction", type=float, default=None,
                   help="positives held out for the curve (default 0.1)")
    p.add_argument("--split", default=None,
                   help="train on the train side of an A:B edge split")
    p.add_argument("--split-seed", type=int, default=None,
                   help="edge split seed (default 0)")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--history", default=None,
                   help="history CSV (default <out>.history.csv)")
    p.set_defaults(func=cmd_train)

    def eval_parser(name, help_text):
        q = sub.add_parser(name, help=help_text)
        _add_graph_flags(q)
        _add_global_flags(q)
        q.add_argument("--checkpoint", required=True)
        q.add_argument("--report", required=True, help="text report path")
        q.add_argument("--csv", default=None,
                       help="CSV report (default <report>.csv)")
        q.add_argument("--embeddings", default=None,
                       help="feature fallback when the checkpoint lacks a "
                            "stored table")
        return q

    p = eval_parser("eval-reconstruction",
                    "score the graph's own edges against negatives")
    p.add_argument("--neg-ratio", type=int, default=None,
                   help="negatives per positive (default 5)")
    p.add_argument("--pool", default=None, choices=("mean", "min"))
    p.set_defaults(func=cmd_eval_reconstruction)

    p = eval_parser("eval-linkpred", "score held-out hyperedges")
    p.add_argument("--neg-ratio", type=int, default=None)
    p.add_argument("--pool", default=None, choices=("mean", "min"))
    p.add_argument("--ratio", default=None, help="split ratio (default 4:1)")
    p.add_argument("--split-seed", type=int, default=None,
                   help="must match the training split seed")
    p.set_defaults(func=cmd_eval_linkpred)

    p = eval_parser("eval-nodeclass",
                    "logistic-regression probe on node labels")
    p.add_argument("--labels", required=True,
                   help="token<TAB>label[,label...] file")
    p.add_argument("--mode", default=None,
                   choices=("auto", "multiclass", "multilabel"))
    p.add_argument("--train-fraction", type=float, default=None,
                   help="labeled fraction used for fitting (default 0.8)")
    p.set_defaults(func=cmd_eval_nodeclass)

    p = sub.add_parser("outsider", help="rank tuple members by membership")
    _add_graph_flags(p)
    _add_global_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--tuples", required=True,
                   help="member tokens per line; '*' marks the outsider")
    p.add_argument("--embeddings", default=None)
    p.add_argument("--topk", type=int, default=None,
                   help="report top-1..top-k accuracy (default 2)")
    p.add_argument("--out", required=True, help="ranked tokens TSV")
    p.add_argument("--report", default=None,
                   help="accuracy report when tuples are labeled")
    p.set_defaults(func=cmd_outsider)

    p = sub.add_parser("export-plot",
                       help="metric curves or a 2-d node projection")
    _add_graph_flags(p)
    _add_global_flags(p)
    p.add_argument("--history", nargs="+", default=None,
                   help="history CSV files to chart")
    p.add_argument("--metric", default=None,
                   help="history column to plot (default val_auc)")
    p.add_argument("--checkpoint", default=None,
                   help="project this model's node representations")
    p.add_argument("--embeddings", default=None)
    p.add_argument("--out-prefix", required=True,
                   help="writes <prefix>.csv and <prefix>.svg")
    p.set_defaults(func=cmd_export_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    if ns.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        file_cfg = _read_kv_config(ns.config) if ns.config else {}
        return ns.func(ns, file_cfg)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (DataError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
