import itertools
import math
from fractions import Fraction

import pytest

import unilp

TINY = {"embed_dim": 8, "hidden_dim": 8, "attention_dim": 8, "mlp_hidden": 8, "encoder_layers": 2}


def test_graph_roundtrip():
    g = unilp.Graph(4, [(0, 1), (1, 2), (2, 1), (3, 3)])
    assert g.node_count == 4
    assert g.edge_count == 2
    assert g.edges() == [(0, 1), (1, 2)]
    assert g.has_edge(2, 1)
    assert g.neighbors(1) == [0, 2]
    with pytest.raises(unilp.DataError):
        unilp.Graph(2, [(0, 5)])


def test_lattice_degrees():
    grid = unilp.lattice("grid", 6, 6)
    tri = unilp.lattice("triangular", 6, 6)
    assert {grid.degree(u) for u in range(36)} == {4}
    assert {tri.degree(u) for u in range(36)} == {6}
    with pytest.raises(unilp.ConfigError):
        unilp.lattice("hexagonal", 3, 3)


def test_pattern_rationals():
    grid = unilp.verify_pattern(unilp.lattice("grid", 8, 8))
    tri = unilp.verify_pattern(unilp.lattice("triangular", 8, 8))
    assert grid["p_A2"] == [0, 1]
    assert Fraction(*grid["p_A3"]) == Fraction(1, 4)
    assert Fraction(*tri["p_A2"]) == Fraction(1, 3)
    assert Fraction(*tri["p_A3"]) == Fraction(1, 6)
    assert tri["counts"]["A3_pairs"] == 64 * 36 // 2


def test_split_is_seeded_and_serializable():
    g = unilp.lattice("grid", 10, 10)
    a = unilp.split_edges(g, seed=4)
    assert a == unilp.split_edges(g, seed=4)
    assert a != unilp.split_edges(g, seed=5)
    assert (len(a.observed), len(a.valid_pos), len(a.test_pos)) == (140, 20, 40)
    assert len(a.test_neg) == len(a.test_pos)
    assert unilp.Split.from_dict(a.to_dict()) == a
    held = set(a.test_pos) | set(a.valid_pos)
    assert held.isdisjoint(a.observed)


def test_heuristics_against_python():
    g = unilp.sbm([15, 15], 0.4, 0.05, seed=2)
    nbr = {u: set(g.neighbors(u)) for u in range(g.node_count)}
    pairs = list(itertools.combinations(range(g.node_count), 2))[:120]
    cn = unilp.heuristic_scores("cn", g, pairs)
    aa = unilp.heuristic_scores("aa", g, pairs)
    for (u, v), c, a in zip(pairs, cn, aa):
        common = nbr[u] & nbr[v]
        assert c == len(common)
        assert a == pytest.approx(sum(1.0 / math.log(len(nbr[w])) for w in common), abs=1e-12)


def test_hits_at_k():
    assert unilp.hits_at_k([0.9, 0.5, 0.1], [0.8, 0.4, 0.3], 1) == pytest.approx(1 / 3)
    assert unilp.effective_k(50, 12) == 12
    with pytest.raises(unilp.ConfigError):
        unilp.hits_at_k([1.0], [0.0], 2)


def test_grid_common_neighbors_is_blind():
    d = unilp.Dataset("grid", unilp.split_edges(unilp.lattice("grid", 10, 10), seed=1))
    report = unilp.evaluate_heuristic("cn", d, hits_k=50)
    assert report["mean"] == 0.0
    assert report["k"] == 40


def test_gradcheck():
    assert unilp.gradcheck(TINY, seed=3) < 1e-4


def test_train_predict_save_load(tmp_path):
    d = unilp.Dataset("tri", unilp.split_edges(unilp.lattice("triangular", 6, 6), seed=0))
    model = unilp.Model(TINY, seed=1)
    assert model.config["hidden_dim"] == 8
    train = {"context_k": 3, "batch_size": 8, "max_epochs": 2, "patience": 2, "queries_per_graph": 30,
             "eval_context_size": 8, "val_links": 10}
    trained, record = unilp.pretrain(model, [d], [d], train, seed=1)
    assert len(record["epochs"]) == 2
    assert record["stop_reason"] in {"max_epochs", "patience"}

    probs = trained.predict(d, d.split.test_pos[:5], context_size=6, seed=2)
    assert len(probs) == 5
    assert all(0.0 < p < 1.0 for p in probs)

    path = tmp_path / "model.json"
    trained.save(path)
    restored = unilp.Model.load(path)
    assert restored.predict(d, d.split.test_pos[:5], context_size=6, seed=2) == probs

    report = unilp.evaluate(trained, d, context_size=6, runs=2, seed=3)
    assert len(report["runs"]) == 2
    flipped = unilp.evaluate(trained, d, context_size=6, perturb="flip_label", runs=2, seed=3)
    assert flipped["perturb"] == "flip_label"


def test_bad_config_rejected():
    with pytest.raises(unilp.ConfigError):
        unilp.Model({"embed_dim": 0})
    with pytest.raises(unilp.ConfigError):
        unilp.Model({"embed_size": 8})
