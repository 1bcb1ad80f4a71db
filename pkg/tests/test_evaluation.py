import numpy as np
import pytest

from hyperattn import model as md
from hyperattn.errors import DataError
from hyperattn.evaluation import (eval_linkpred, eval_nodeclass,
                                  eval_outsider, eval_reconstruction,
                                  generate_outsider_tuples, linkpred_split,
                                  mean_report, scored_labels, _train_indices)
from hyperattn.hypergraph import TupleSample, build_hypergraph
from hyperattn.metrics import MetricReport
from hyperattn.training import TrainConfig, train
from synthgen import cluster_features, planted_clusters, planted_hypergraph


@pytest.fixture(scope="module")
def fitted():
    g = planted_hypergraph(seed=0)
    feats = cluster_features(planted_clusters(g), seed=0)
    cfg = md.ModelConfig(dim=16, heads=2)
    params, _ = train(g, feats, cfg, TrainConfig(epochs=8, batch_size=64,
                                                 seed=0))
    return g, feats, cfg, params


class TestScoredLabels:
    def test_alignment_with_mixed_sizes(self, fitted):
        g, feats, cfg, params = fitted
        samples = [TupleSample(members=(0, 20, 40), label=1),
                   TupleSample(members=(1, 21), label=0, kind="pairwise"),
                   TupleSample(members=(2, 22, 42), label=1)]
        scores, labels = scored_labels(params, cfg, samples, feats)
        assert scores.shape == (3,)
        assert np.all((scores >= 0) & (scores <= 1))
        # bucketed order puts the pair first
        assert labels.tolist() == [0.0, 1.0, 1.0]


class TestReconstruction:
    def test_report_contract(self, fitted):
        g, feats, cfg, params = fitted
        rep = eval_reconstruction(params, cfg, g, feats, neg_ratio=3, seed=4)
        assert rep.task == "reconstruction"
        assert set(rep.values) == {"auroc", "aupr"}
        assert rep.metadata["n_pos"] == len(g.edges)
        assert rep.metadata["n_neg"] == 3 * len(g.edges)
        assert rep.metadata["seed"] == 4
        assert rep.metadata["dataset_hash"] == g.vocab_hash()

    def test_trained_model_separates(self, fitted):
        g, feats, cfg, params = fitted
        rep = eval_reconstruction(params, cfg, g, feats, seed=1)
        assert rep.values["auroc"] >= 0.9

    def test_seed_determinism(self, fitted):
        g, feats, cfg, params = fitted
        a = eval_reconstruction(params, cfg, g, feats, seed=9)
        b = eval_reconstruction(params, cfg, g, feats, seed=9)
        assert a.values == b.values


class TestLinkpred:
    def test_split_sizes_and_disjointness(self, fitted):
        g, *_ = fitted
        tr, te = linkpred_split(g, split_seed=0)
        assert len(tr) == 400 and len(te) == 100
        tr_keys = {tuple(sorted(e.members)) for e in tr}
        te_keys = {tuple(sorted(e.members)) for e in te}
        assert not tr_keys & te_keys
        assert len(tr_keys | te_keys) == len(g.edges)

    def test_split_seed_changes_partition(self, fitted):
        g, *_ = fitted
        a = {tuple(sorted(e.members)) for e in linkpred_split(g, 0)[1]}
        b = {tuple(sorted(e.members)) for e in linkpred_split(g, 1)[1]}
        assert a != b

    def test_report_contract(self, fitted):
        g, feats, cfg, params = fitted
        rep = eval_linkpred(params, cfg, g, feats, split_seed=2, seed=5)
        assert rep.task == "linkpred"
        assert rep.metadata["ratio"] == "4:1"
        assert rep.metadata["split_seed"] == 2
        assert rep.metadata["n_pos"] == 100
        assert rep.metadata["n_neg"] == 500


class TestNodeclass:
    def label_map(self, g):
        return {v: [g.type_names[g.nodes[v].node_type]]
                for v in range(g.n_nodes)}

    def test_multiclass_auto(self, fitted):
        g, feats, cfg, params = fitted
        rep = eval_nodeclass(params, cfg, feats, self.label_map(g), seed=0)
        assert rep.task == "nodeclass"
        assert rep.metadata["mode"] == "multiclass"
        assert set(rep.values) == {"micro_f1", "macro_f1"}
        assert rep.metadata["n_labeled"] == 60
        assert rep.metadata["n_test"] == 12

    def test_cluster_labels_are_separable(self, fitted):
        # the fixture's features encode the planted cluster, so a probe on
        # the learned representations recovers it
        g, feats, cfg, params = fitted
        clusters = planted_clusters(g)
        lm = {v: [f"c{clusters[v]}"] for v in range(g.n_nodes)}
        rep = eval_nodeclass(params, cfg, feats, lm, seed=0)
        assert rep.values["micro_f1"] >= 0.9

    def test_multilabel_auto(self, fitted):
        g, feats, cfg, params = fitted
        lm = self.label_map(g)
        lm[0] = ["user", "extra"]
        rep = eval_nodeclass(params, cfg, feats, lm, seed=0)
        assert rep.metadata["mode"] == "multilabel"

    def test_forced_multiclass_rejects_multilabel_nodes(self, fitted):
        g, feats, cfg, params = fitted
        lm = self.label_map(g)
        lm[0] = ["user", "extra"]
        with pytest.raises(DataError):
            eval_nodeclass(params, cfg, feats, lm, mode="multiclass")

    def test_empty_label_map(self, fitted):
        g, feats, cfg, params = fitted
        with pytest.raises(DataError):
            eval_nodeclass(params, cfg, feats, {})

    def test_full_fraction_tests_on_everything(self, fitted):
        g, feats, cfg, params = fitted
        rep = eval_nodeclass(params, cfg, feats, self.label_map(g),
                             train_fraction=1.0, seed=0)
        assert rep.metadata["n_test"] == 60

    def test_train_indices_mirror_classifier_subset(self):
        for n, frac, seed in [(60, 0.8, 0), (31, 0.5, 7), (10, 0.99, 3)]:
            rng = np.random.default_rng(seed)
            expect = np.sort(rng.permutation(n)[:max(1, int(round(n * frac)))])
            assert np.array_equal(_train_indices(n, frac, seed), expect)
        assert np.array_equal(_train_indices(5, 1.0, 0), np.arange(5))


class TestOutsiderEval:
    def test_rankings_are_member_permutations(self, fitted):
        g, feats, cfg, params = fitted
        tuples = generate_outsider_tuples(g, 10, seed=3)
        rankings, rep = eval_outsider(params, cfg, feats,
                                      [t for t, _ in tuples])
        assert rep.values == {}
        assert rep.metadata["n_tuples"] == 10
        for (members, _), ranked in zip(tuples, rankings):
            assert sorted(ranked) == sorted(members)

    def test_topk_keys_and_nesting(self, fitted):
        g, feats, cfg, params = fitted
        tuples = generate_outsider_tuples(g, 20, seed=3)
        _, rep = eval_outsider(params, cfg, feats, [t for t, _ in tuples],
                               answers=[o for _, o in tuples])
        assert set(rep.values) == {"top1_accuracy", "top2_accuracy"}
        assert rep.values["top2_accuracy"] >= rep.values["top1_accuracy"]

    def test_ks_parameter(self, fitted):
        g, feats, cfg, params = fitted
        tuples = generate_outsider_tuples(g, 5, seed=3)
        _, rep = eval_outsider(params, cfg, feats, [t for t, _ in tuples],
                               answers=[o for _, o in tuples], ks=(1,))
        assert set(rep.values) == {"top1_accuracy"}


class TestGenerateOutsiderTuples:
    def test_planted_tuples_satisfy_both_conditions(self, fitted):
        g, *_ = fitted
        tuples = generate_outsider_tuples(g, 50, seed=2)
        assert len(tuples) == 50
        edge_keys = set(g.edge_keys)
        for members, o in tuples:
            assert o in members
            rest = [m for m in members if m != o]
            # the rest reconstitutes a true hyperedge with some same-type node
            assert any(set(rest) < set(e.members) for e in g.edges)
            # the outsider shares no hyperedge with any remaining member
            for m in rest:
                assert not (g.incident_set(o) & g.incident_set(m))
            assert tuple(sorted(members)) not in edge_keys

    def test_type_profile_preserved(self, fitted):
        g, *_ = fitted
        for members, _ in generate_outsider_tuples(g, 30, seed=5):
            kinds = sorted(g.nodes[m].node_type for m in members)
            assert kinds == [0, 1, 2]

    def test_distinct_and_deterministic(self, fitted):
        g, *_ = fitted
        a = generate_outsider_tuples(g, 40, seed=9)
        b = generate_outsider_tuples(g, 40, seed=9)
        assert a == b
        assert len({m for m, _ in a}) == 40

    def test_saturated_graph_raises(self):
        lines = [f"u{i} v{j}" for i in range(3) for j in range(3)]
        type_map = {f"u{i}": "u" for i in range(3)}
        type_map.update({f"v{j}": "v" for j in range(3)})
        g = build_hypergraph(lines, type_map=type_map)
        with pytest.raises(DataError):
            generate_outsider_tuples(g, 4, seed=0)

    def test_rejects_nonpositive_count(self, fitted):
        g, *_ = fitted
        with pytest.raises(DataError):
            generate_outsider_tuples(g, 0)


class TestMeanReport:
    def make(self, auroc, aupr, run):
        return MetricReport(task="reconstruction",
                            values={"auroc": auroc, "aupr": aupr},
                            metadata={"seed": run})

    def test_averages_and_per_run(self):
        reports = [self.make(0.9, 0.7, 0), self.make(0.8, 0.5, 1)]
        rep = mean_report("reconstruction", reports, metadata={"note": "x"})
        assert rep.values["auroc"] == pytest.approx(0.85)
        assert rep.values["aupr"] == pytest.approx(0.6)
        assert rep.per_run["auroc"] == [0.9, 0.8]
        assert rep.metadata["runs"] == 2
        assert rep.metadata["note"] == "x"

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            mean_report("reconstruction", [])
