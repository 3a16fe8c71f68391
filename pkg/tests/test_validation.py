import numpy as np
import pytest

from causalbma.causal import InterventionSpec
from causalbma.data import ColumnMeta, Dataset
from causalbma.errors import BudgetExceeded, ContractViolation, InvalidInputError
from causalbma.graph import Dag
from causalbma.prior import PriorMatrix
from causalbma.validation import (LUCAS_NAMES, GroundTruthModel, PipelineConfig, Query, TruthNode,
                                  binary5_model, chain5_model, confounded_triangle_model, end_to_end_check,
                                  exact_posterior, lucas_model, lucas_queries, sample_data,
                                  true_interventional)


def _binary_chain(p0=0.5, flip=0.1):
    g = Dag.from_edges(2, [(0, 1)])
    return GroundTruthModel(g, [TruthNode("discrete", 2, np.array([[1 - p0, p0]])),
                                TruthNode("discrete", 2, np.array([[1 - flip, flip], [flip, 1 - flip]]))],
                            ["a", "b"])


def test_sample_deterministic_cpt():
    m = _binary_chain(p0=0.5, flip=0.0)
    ds = sample_data(m, 500, np.random.default_rng(0))
    assert np.array_equal(ds.column(0), ds.column(1))


def test_sample_root_frequency():
    ds = sample_data(_binary_chain(), 10000, np.random.default_rng(1))
    assert ds.column(0).mean() == pytest.approx(0.5, abs=0.02)


def test_sample_noiseless_linear():
    m = chain5_model()
    for nd in m.nodes:
        nd.sigma = 0.0
    ds = sample_data(m, 10, np.random.default_rng(0))
    assert np.all(ds.rows == 0.0)
    with pytest.raises(InvalidInputError):
        sample_data(m, 0, np.random.default_rng(0))


def test_exact_posterior_normalized(binary3):
    ep = exact_posterior(binary3)
    assert len(ep.dags) == 25
    assert ep.probs.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(ep.probs >= 0)


def test_exact_posterior_pinned_edge(gauss3):
    a = np.full((3, 3), 0.5)
    a[0, 1] = 1.0
    ep = exact_posterior(gauss3, PriorMatrix(a))
    assert ep.edge_probability(0, 1) == pytest.approx(1.0, abs=1e-12)
    assert ep.edge_probability(1, 0) == 0.0


def test_exact_posterior_refuses_large_d(rng):
    ds = Dataset([ColumnMeta(f"x{k}") for k in range(5)], rng.normal(size=(20, 5)))
    with pytest.raises(InvalidInputError):
        exact_posterior(ds)


def test_total_variation_of_exact_is_zero(binary3):
    ep = exact_posterior(binary3)
    counts = {g.key: p for g, p in zip(ep.dags, ep.probs)}
    assert ep.total_variation(counts) == pytest.approx(0.0, abs=1e-12)
    one = {ep.dags[0].key: 1}
    assert ep.total_variation(one) == pytest.approx(1.0 - ep.probs[0])


def test_true_interventional_binary_chain():
    r = true_interventional(_binary_chain(), InterventionSpec({0: 1.0}), 1)
    assert r["dist"][1] == pytest.approx(0.9, abs=1e-12)
    assert r["mean"] == pytest.approx(0.9) and r["var"] == pytest.approx(0.09)


def test_true_interventional_root_is_marginal():
    r = true_interventional(_binary_chain(p0=0.3), InterventionSpec({1: 1.0}), 0)
    assert r["mean"] == pytest.approx(0.3, abs=1e-12)
    with pytest.raises(ContractViolation):
        true_interventional(_binary_chain(), InterventionSpec({1: 1.0}), 1)


def test_true_interventional_linear_closed_form():
    m = confounded_triangle_model()
    r = true_interventional(m, InterventionSpec({1: 3.0}), 2)
    # y = s + 2*3 + e with s, e standard normal
    assert r["mean"] == pytest.approx(6.0) and r["var"] == pytest.approx(2.0)
    r = true_interventional(chain5_model(), InterventionSpec({1: 1.0}), 4)
    assert r["mean"] == pytest.approx(0.8 ** 3)
    assert r["var"] == pytest.approx(1 + 0.64 + 0.64 ** 2)


def test_true_interventional_budget():
    with pytest.raises(BudgetExceeded):
        true_interventional(lucas_model(), InterventionSpec({0: 1.0}), 5, budget=100)


def test_lucas_reference_value():
    ix = {n: k for k, n in enumerate(LUCAS_NAMES)}
    spec = InterventionSpec({ix["Genetics"]: 1.0, ix["Smoking"]: 1.0})
    r = true_interventional(lucas_model(), spec, ix["Lung_Cancer"])
    assert r["mean"] == pytest.approx(0.99351, abs=1e-12)


def test_lucas_queries_shape():
    qs = lucas_queries()
    assert len(qs) == 15 and len({q.label for q in qs}) == 15
    for q in qs:
        assert q.quality not in q.spec.nodes and len(q.spec.nodes) == 2


def test_model_json_round_trip(tmp_path):
    for m in (lucas_model(), confounded_triangle_model()):
        path = tmp_path / "m.json"
        m.save(path)
        back = GroundTruthModel.load(path)
        assert back.g == m.g and back.names == m.names and back.roles == m.roles
        a = sample_data(m, 50, np.random.default_rng(4)).rows
        b = sample_data(back, 50, np.random.default_rng(4)).rows
        assert np.array_equal(a, b)


def test_model_validation_errors():
    g = Dag.from_edges(2, [(0, 1)])
    root = TruthNode("discrete", 2, np.array([[0.5, 0.5]]))
    with pytest.raises(InvalidInputError):
        GroundTruthModel(g, [root, TruthNode("discrete", 2, np.array([[0.5, 0.5]]))], ["a", "b"])
    with pytest.raises(InvalidInputError):
        GroundTruthModel(g, [root, TruthNode("discrete", 2, np.array([[0.6, 0.6], [0.5, 0.5]]))], ["a", "b"])
    with pytest.raises(InvalidInputError):
        GroundTruthModel(g, [root, TruthNode("continuous")], ["a", "b"])
    with pytest.raises(InvalidInputError):
        GroundTruthModel(g, [TruthNode("continuous"), TruthNode("continuous")], ["a", "b"])
    with pytest.raises(InvalidInputError):
        GroundTruthModel(g, [root], ["a", "b"])


def _binary5_queries():
    return [Query(3, InterventionSpec({2: 1.0}, name="b2=1"), "b3|do(b2=1)"),
            Query(4, InterventionSpec({2: 0.0}, name="b2=0"), "b4|do(b2=0)"),
            Query(2, InterventionSpec({0: 1.0, 1: 1.0}, name="b0,b1"), "b2|do(b0=1,b1=1)")]


def test_end_to_end_error_shrinks_with_n():
    cfg = PipelineConfig(n_steps=2000, m_draws=30)
    qs = _binary5_queries()
    small = [max(r.error for r in end_to_end_check(binary5_model(), 300, qs, cfg, s)) for s in range(3)]
    large = [max(r.error for r in end_to_end_check(binary5_model(), 20000, qs, cfg, s)) for s in range(3)]
    assert np.mean(large) < np.mean(small)
    assert max(large) < 0.05


def test_end_to_end_coverage_binary5():
    cfg = PipelineConfig(n_steps=2000, m_draws=30)
    res = [r for s in range(10) for r in end_to_end_check(binary5_model(), 2000, _binary5_queries(), cfg, s)]
    assert np.mean([r.covered for r in res]) >= 0.8
    # single-node interventions are always identified; joint ones may hit graphs
    # with no admissible backdoor or frontdoor set
    assert all(r.good_mass == 1.0 for r in res if not r.label.startswith("b2|"))
