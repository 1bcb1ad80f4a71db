import json
import os

import numpy as np
import pytest

from hyperattn.cli import main
from hyperattn.evaluation import generate_outsider_tuples
from hyperattn.hypergraph import (build_hypergraph, read_edge_file,
                                  read_type_file)
from hyperattn.training import load_checkpoint
from synthgen import planted_clusters, planted_hypergraph

MANIFEST_KEYS = {"command", "version", "config", "inputs", "outputs",
                 "timings", "written_at"}


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    g = planted_hypergraph(seed=0)
    clusters = planted_clusters(g)
    edges = d / "edges.txt"
    edges.write_text("".join(
        " ".join(g.nodes[v].token for v in e.members) + "\n"
        for e in g.edges))
    types = d / "types.tsv"
    types.write_text("".join(
        f"{nd.token}\t{g.type_names[nd.node_type]}\n" for nd in g.nodes))
    labels = d / "labels.tsv"
    labels.write_text("".join(
        f"{nd.token}\tc{clusters[nd.id]}\n" for nd in g.nodes))

    paths = {
        "dir": d, "graph_src": g,
        "edges": str(edges), "types": str(types), "labels": str(labels),
        "gjson": str(d / "g.json"), "corpus": str(d / "corpus.txt"),
        "emb": str(d / "emb.txt"), "ckpt": str(d / "m.ckpt"),
    }
    assert main(["ingest", "--edges", paths["edges"], "--types",
                 paths["types"], "--out", paths["gjson"]]) == 0
    assert main(["walk", "--graph", paths["gjson"], "--walk-length", "10",
                 "--walks-per-vertex", "2", "--out", paths["corpus"]]) == 0
    assert main(["embed", "--corpus", paths["corpus"], "--dim", "8",
                 "--window", "3", "--epochs", "1", "--out",
                 paths["emb"]]) == 0
    assert main(["train", "--graph", paths["gjson"], "--embeddings",
                 paths["emb"], "--dim", "8", "--heads", "2", "--epochs",
                 "2", "--out", paths["ckpt"]]) == 0
    return paths


def read_manifest(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


class TestExitCodes:
    def test_unknown_command(self):
        assert main(["frobnicate"]) == 1

    def test_unknown_flag(self):
        assert main(["ingest", "--bogus", "x"]) == 1

    def test_missing_required_flag(self):
        assert main(["ingest"]) == 1

    def test_no_command(self):
        assert main([]) == 1

    def test_help_exits_zero(self):
        assert main(["--help"]) == 0

    def test_version_exits_zero(self):
        assert main(["--version"]) == 0

    def test_missing_input_file(self, tmp_path):
        assert main(["ingest", "--edges", str(tmp_path / "nope.txt"),
                     "--out", str(tmp_path / "g.json")]) == 2

    def test_malformed_config_file(self, work, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text("this line has no equals sign\n")
        assert main(["ingest", "--edges", work["edges"], "--types",
                     work["types"], "--config", str(bad),
                     "--out", str(tmp_path / "g.json")]) == 2

    def test_divergence_exits_three(self, work, tmp_path):
        lines = open(work["emb"], encoding="utf-8").read().splitlines()
        head = lines[0]
        tok, rest = lines[1].split(" ", 1)
        lines[1] = tok + " " + " ".join("nan" for _ in rest.split())
        nan_emb = tmp_path / "nan_emb.txt"
        nan_emb.write_text("\n".join([head] + lines[1:]) + "\n")
        assert main(["train", "--graph", work["gjson"], "--embeddings",
                     str(nan_emb), "--dim", "8", "--heads", "2",
                     "--epochs", "1", "--out",
                     str(tmp_path / "m.ckpt")]) == 3


class TestIngest:
    def test_cache_contents(self, work):
        with open(work["gjson"], encoding="utf-8") as fh:
            cache = json.load(fh)
        assert set(cache) >= {"type_names", "nodes", "edges", "vocab_hash"}
        assert len(cache["nodes"]) == 60
        assert len(cache["edges"]) == 500
        rebuilt = build_hypergraph(read_edge_file(work["edges"]),
                                   type_map=read_type_file(work["types"]))
        assert cache["vocab_hash"] == rebuilt.vocab_hash()

    def test_manifest(self, work):
        man = read_manifest(work["gjson"] + ".manifest.json")
        assert set(man) == MANIFEST_KEYS
        assert man["command"] == "ingest"
        assert work["gjson"] in man["outputs"]
        for digest in man["inputs"].values():
            assert len(digest) == 64
            int(digest, 16)
        assert man["config"]["seed"] == 0


class TestWalkEmbed:
    def test_corpus_tokens(self, work):
        g = work["graph_src"]
        vocab = {nd.token for nd in g.nodes}
        lines = open(work["corpus"], encoding="utf-8").read().splitlines()
        assert len(lines) == 2 * g.n_nodes
        for line in lines[:20]:
            assert set(line.split()) <= vocab

    def test_embedding_table_shape(self, work):
        head = open(work["emb"], encoding="utf-8").readline().split()
        assert head == ["60", "8"]


class TestTrainArtifacts:
    def test_checkpoint_loads(self, work):
        ck = load_checkpoint(work["ckpt"])
        assert ck.config.dim == 8
        assert ck.meta["epoch"] == 2
        assert ck.features is not None
        assert ck.features.shape == (60, 8)

    def test_history_csv(self, work):
        lines = open(work["ckpt"] + ".history.csv",
                     encoding="utf-8").read().splitlines()
        assert lines[0] == "epoch,loss,val_auc,val_auc_hyper,val_auc_pairwise"
        assert len(lines) == 3
        assert lines[1].startswith("0,")

    def test_manifest_materializes_defaults(self, work):
        man = read_manifest(work["ckpt"] + ".manifest.json")
        cfg = man["config"]
        assert cfg["dim"] == 8
        assert cfg["epochs"] == 2
        assert cfg["neg_ratio"] == 5
        assert cfg["lr"] == 1e-3
        assert cfg["pool"] == "mean"
        assert cfg["outsider_ce_weight"] == 0.0
        assert man["command"] == "train"


class TestConfigPrecedence:
    def test_file_value_used_when_no_flag(self, work, tmp_path):
        cfg = tmp_path / "train.cfg"
        cfg.write_text("# comment\ndim=12\nheads=2\nepochs=1\n")
        out = tmp_path / "m12.ckpt"
        assert main(["train", "--graph", work["gjson"], "--embeddings",
                     work["emb"], "--config", str(cfg), "--out",
                     str(out)]) == 0
        assert load_checkpoint(str(out)).config.dim == 12

    def test_flag_beats_file(self, work, tmp_path):
        cfg = tmp_path / "train.cfg"
        cfg.write_text("dim=12\nheads=2\nepochs=1\n")
        out = tmp_path / "m8.ckpt"
        assert main(["train", "--graph", work["gjson"], "--embeddings",
                     work["emb"], "--config", str(cfg), "--dim", "8",
                     "--out", str(out)]) == 0
        assert load_checkpoint(str(out)).config.dim == 8

    def test_unknown_keys_ignored(self, work, tmp_path):
        cfg = tmp_path / "train.cfg"
        cfg.write_text("dim=12\nheads=2\nepochs=1\nsomebody-elses-knob=7\n")
        assert main(["train", "--graph", work["gjson"], "--embeddings",
                     work["emb"], "--config", str(cfg), "--out",
                     str(tmp_path / "m.ckpt")]) == 0

    def test_unparsable_value(self, work, tmp_path):
        cfg = tmp_path / "train.cfg"
        cfg.write_text("dim=twelve\n")
        assert main(["train", "--graph", work["gjson"], "--embeddings",
                     work["emb"], "--config", str(cfg), "--out",
                     str(tmp_path / "m.ckpt")]) == 2


class TestEvalCommands:
    def test_reconstruction(self, work, tmp_path):
        rep = tmp_path / "recon.txt"
        assert main(["eval-reconstruction", "--graph", work["gjson"],
                     "--checkpoint", work["ckpt"], "--report",
                     str(rep)]) == 0
        text = rep.read_text()
        assert "reconstruction" in text and "auroc" in text
        csv = (tmp_path / "recon.txt.csv").read_text().splitlines()
        assert csv[0] == "run,task,metric,value,seed"
        man = read_manifest(str(rep) + ".manifest.json")
        assert man["command"] == "eval-reconstruction"

    def test_linkpred(self, work, tmp_path):
        rep = tmp_path / "link.txt"
        assert main(["eval-linkpred", "--graph", work["gjson"],
                     "--checkpoint", work["ckpt"], "--split-seed", "3",
                     "--report", str(rep)]) == 0
        assert "linkpred" in rep.read_text()

    def test_bad_ratio(self, work, tmp_path):
        assert main(["eval-linkpred", "--graph", work["gjson"],
                     "--checkpoint", work["ckpt"], "--ratio", "nonsense",
                     "--report", str(tmp_path / "r.txt")]) == 2

    def test_nodeclass(self, work, tmp_path):
        rep = tmp_path / "nodes.txt"
        assert main(["eval-nodeclass", "--graph", work["gjson"],
                     "--checkpoint", work["ckpt"], "--labels",
                     work["labels"], "--report", str(rep)]) == 0
        text = rep.read_text()
        assert "micro_f1" in text and "macro_f1" in text


class TestOutsider:
    def tuple_lines(self, work, labeled=True, n=12):
        g = work["graph_src"]
        tuples = generate_outsider_tuples(g, n, seed=11)
        lines = []
        for members, outsider in tuples:
            fields = [g.nodes[v].token +
                      ("*" if labeled and v == outsider else "")
                      for v in members]
            lines.append(" ".join(fields))
        return "\n".join(lines) + "\n", tuples

    def test_labeled_run(self, work, tmp_path, capsys):
        text, tuples = self.tuple_lines(work)
        tfile = tmp_path / "tuples.txt"
        tfile.write_text(text)
        out = tmp_path / "ranks.tsv"
        assert main(["outsider", "--graph", work["gjson"], "--checkpoint",
                     work["ckpt"], "--tuples", str(tfile), "--topk", "2",
                     "--out", str(out)]) == 0
        printed = capsys.readouterr().out
        assert "top-1 accuracy:" in printed and "top-2 accuracy:" in printed
        rows = out.read_text().splitlines()
        assert len(rows) == len(tuples)
        g = work["graph_src"]
        for row, (members, _) in zip(rows, tuples):
            assert sorted(row.split("\t")) == sorted(g.nodes[v].token
                                                     for v in members)
        assert (tmp_path / "ranks.tsv.report.txt").exists()

    def test_unlabeled_run(self, work, tmp_path, capsys):
        text, _ = self.tuple_lines(work, labeled=False)
        tfile = tmp_path / "tuples.txt"
        tfile.write_text(text)
        out = tmp_path / "ranks.tsv"
        assert main(["outsider", "--graph", work["gjson"], "--checkpoint",
                     work["ckpt"], "--tuples", str(tfile), "--out",
                     str(out)]) == 0
        assert "no outsider labels" in capsys.readouterr().out
        assert not (tmp_path / "ranks.tsv.report.txt").exists()

    def test_partial_labels_rejected(self, work, tmp_path):
        text, _ = self.tuple_lines(work)
        lines = text.splitlines()
        lines[0] = lines[0].replace("*", "")
        tfile = tmp_path / "tuples.txt"
        tfile.write_text("\n".join(lines) + "\n")
        assert main(["outsider", "--graph", work["gjson"], "--checkpoint",
                     work["ckpt"], "--tuples", str(tfile), "--out",
                     str(tmp_path / "r.tsv")]) == 2

    def test_unknown_token_rejected(self, work, tmp_path):
        tfile = tmp_path / "tuples.txt"
        tfile.write_text("u0 zz9* a0\n")
        assert main(["outsider", "--graph", work["gjson"], "--checkpoint",
                     work["ckpt"], "--tuples", str(tfile), "--out",
                     str(tmp_path / "r.tsv")]) == 2

    def test_double_marker_rejected(self, work, tmp_path):
        g = work["graph_src"]
        e = g.edges[0].members
        toks = [g.nodes[v].token for v in e]
        tfile = tmp_path / "tuples.txt"
        tfile.write_text(f"{toks[0]}* {toks[1]}* {toks[2]}\n")
        assert main(["outsider", "--graph", work["gjson"], "--checkpoint",
                     work["ckpt"], "--tuples", str(tfile), "--out",
                     str(tmp_path / "r.tsv")]) == 2


class TestExportPlot:
    def test_history_curve(self, work, tmp_path):
        prefix = str(tmp_path / "curve")
        assert main(["export-plot", "--history",
                     work["ckpt"] + ".history.csv", "--metric", "loss",
                     "--out-prefix", prefix]) == 0
        csv = open(prefix + ".csv", encoding="utf-8").read().splitlines()
        assert csv[0].startswith("epoch,")
        assert csv[0].endswith(",mean")
        assert "<svg" in open(prefix + ".svg", encoding="utf-8").read()

    def test_unknown_metric(self, work, tmp_path):
        assert main(["export-plot", "--history",
                     work["ckpt"] + ".history.csv", "--metric", "zz",
                     "--out-prefix", str(tmp_path / "c")]) == 2

    def test_projection(self, work, tmp_path):
        prefix = str(tmp_path / "proj")
        assert main(["export-plot", "--graph", work["gjson"],
                     "--checkpoint", work["ckpt"], "--out-prefix",
                     prefix]) == 0
        rows = open(prefix + ".csv", encoding="utf-8").read().splitlines()
        assert rows[0] == "node,token,type,x,y"
        assert len(rows) == 61
        svg = open(prefix + ".svg", encoding="utf-8").read()
        assert "<svg" in svg

    def test_needs_a_source(self, work, tmp_path):
        assert main(["export-plot", "--out-prefix",
                     str(tmp_path / "c")]) == 2


class TestDeterminism:
    def train_once(self, work, out, seed="5"):
        assert main(["train", "--graph", work["gjson"], "--embeddings",
                     work["emb"], "--dim", "8", "--heads", "2",
                     "--epochs", "2", "--seed", seed, "--threads", "1",
                     "--out", out]) == 0

    def test_identical_runs_byte_identical(self, work, tmp_path):
        a, b = str(tmp_path / "a.ckpt"), str(tmp_path / "b.ckpt")
        self.train_once(work, a)
        self.train_once(work, b)
        assert open(a, "rb").read() == open(b, "rb").read()
        assert (open(a + ".history.csv", "rb").read() ==
                open(b + ".history.csv", "rb").read())

    def test_seed_changes_artifacts(self, work, tmp_path):
        a, b = str(tmp_path / "a.ckpt"), str(tmp_path / "c.ckpt")
        self.train_once(work, a, seed="5")
        self.train_once(work, b, seed="6")
        assert open(a, "rb").read() != open(b, "rb").read()
