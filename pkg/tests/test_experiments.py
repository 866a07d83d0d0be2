from itertools import combinations

import numpy as np
import pytest

from mtcca import (DependencyGraph, MethodConfig, NodeSetMismatch, SimulationModel,
                   TooManyFailures, ZeroVector, alignment, build_graph,
                   closest_graph_by_edit_distance, generate, run_monte_carlo,
                   symmetric_difference)
from mtcca.experiments import trial_seed
from mtcca.graph import default_lambda_grid, edit_distance, pairwise_first_order


class TestGenerate:
    @pytest.mark.parametrize("name,p,q", [("example1", 2, 2), ("example2", 5, 3), ("null", 2, 2)])
    def test_dimensions(self, name, p, q):
        s = generate(SimulationModel(name, 40, 0))
        assert (s.n, s.p, s.q) == (40, p, q)

    def test_seeded(self):
        a = generate(SimulationModel("example2", 30, 4))
        b = generate(SimulationModel("example2", 30, 4))
        np.testing.assert_array_equal(a.y_data, b.y_data)

    def test_noise_free_example1(self):
        s = generate(SimulationModel("example1", 100, 1, noise_scale=0.0))
        np.testing.assert_array_equal(s.y_data[:, 0], np.cos(s.x_data[:, 0]))

    def test_example1_second_coordinate_is_unrelated(self):
        s = generate(SimulationModel("example1", 50_000, 2))
        c = np.corrcoef(np.column_stack([s.x_data, s.y_data]).T)
        assert np.abs(c[1, [0, 2, 3]]).max() < 0.03

    def test_example2_linear_signal(self):
        s = generate(SimulationModel("example2", 100_000, 3))
        signal = s.x_data[:, 0] + 0.5 * s.x_data[:, 1]
        # var(signal) = 1.25, noise variance 0.01
        corr = np.corrcoef(signal, s.y_data[:, 0])[0, 1]
        assert corr >= 0.99
        assert corr == pytest.approx(np.sqrt(1.25 / 1.26), abs=2e-3)

    def test_rejects_tiny_sample(self):
        with pytest.raises(ValueError):
            SimulationModel("example1", 1)


class TestAlignment:
    def test_equal_and_orthogonal(self):
        assert alignment([1.0, 2.0], [1.0, 2.0]) == pytest.approx(1.0)
        assert alignment([1.0, 0.0], [0.0, 3.0]) == 0.0

    def test_sign_free(self):
        assert alignment([1.0, 2.0], [-2.0, -4.0]) == pytest.approx(1.0)

    def test_zero_vector(self):
        with pytest.raises(ZeroVector):
            alignment([0.0, 0.0], [1.0, 0.0])


class TestMonteCarlo:
    def test_lcca_example1_band(self):
        (lcca,) = run_monte_carlo(SimulationModel("example1", 1000), [MethodConfig.lcca()], 100)
        assert 0.03 <= lcca.mean_rho[0] <= 0.12
        assert lcca.n_failures == 0

    def test_example2_first_coefficient(self):
        methods = [MethodConfig.lcca(), MethodConfig.mtcca("exponential")]
        for summary in run_monte_carlo(SimulationModel("example2", 1000), methods, 20, seed=1):
            assert summary.mean_rho[0] >= 0.99

    def test_null_model_is_not_significant(self):
        (g,) = run_monte_carlo(SimulationModel("null", 300), [MethodConfig.mtcca("gaussian")],
                               10, seed=2, m_permutations=40, alpha=0.01)
        assert g.mean_p_value[0] >= 0.2

    def test_alignments_in_unit_interval(self):
        (s,) = run_monte_carlo(SimulationModel("example2", 200), [MethodConfig.lcca()], 5)
        assert set(s.align_a_mean) == {1, 2}
        for d in (s.align_a_mean, s.align_b_mean):
            assert all(0.0 <= v <= 1.0 for v in d.values())

    def test_deterministic_and_independent_of_jobs(self):
        model = SimulationModel("example1", 200)
        methods = [MethodConfig.lcca(), MethodConfig.mtcca("exponential", reselect=False)]
        a = run_monte_carlo(model, methods, 4, seed=9, m_permutations=10)
        b = run_monte_carlo(model, methods, 4, seed=9, m_permutations=10)
        c = run_monte_carlo(model, methods, 4, seed=9, m_permutations=10, n_jobs=2)
        assert [x.to_dict() for x in a] == [x.to_dict() for x in b] == [x.to_dict() for x in c]

    def test_trial_seeds_differ(self):
        assert len({trial_seed(0, i) for i in range(100)}) == 100

    def test_too_many_failures(self, monkeypatch):
        from mtcca import experiments
        from mtcca.errors import SingularCovariance

        def broken(*args, **kwargs):
            raise SingularCovariance("sigma_x")
        monkeypatch.setattr(experiments, "mtcca", broken)
        with pytest.raises(TooManyFailures):
            run_monte_carlo(SimulationModel("example1", 50), [MethodConfig.lcca()], 3)


def _labels(n):
    return [f"n{i}" for i in range(n)]


def _random_symmetric(rng, n):
    c = rng.uniform(size=(n, n))
    c = (c + c.T) / 2
    np.fill_diagonal(c, 1.0)
    return c


class TestGraph:
    def test_zero_matrix_is_empty(self):
        assert build_graph(np.zeros((4, 4)), _labels(4), 0.1).n_edges == 0

    def test_strict_threshold(self):
        c = np.array([[1.0, 0.6, 0.4], [0.6, 1.0, 0.5], [0.4, 0.5, 1.0]])
        g = build_graph(c, ["a", "b", "c"], 0.5)
        assert g.edges == frozenset({("a", "b")})
        np.testing.assert_array_equal(g.adjacency(), [[0, 1, 0], [1, 0, 0], [0, 0, 0]])

    def test_edge_count_monotone_in_threshold(self):
        rng = np.random.default_rng(0)
        c = _random_symmetric(rng, 3)
        counts = [build_graph(c, _labels(3), lam).n_edges for lam in default_lambda_grid()]
        assert all(b <= a for a, b in zip(counts, counts[1:]))

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            build_graph(np.array([[1.0, 0.2], [0.3, 1.0]]), ["a", "b"], 0.1)

    def test_symmetric_difference_cases(self):
        c = np.array([[1.0, 0.9, 0.0], [0.9, 1.0, 0.0], [0.0, 0.0, 1.0]])
        d = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.9], [0.0, 0.9, 1.0]])
        g1, g2 = build_graph(c, "abc", 0.5), build_graph(d, "abc", 0.5)
        assert symmetric_difference(g1, g1) == (frozenset(), frozenset())
        assert symmetric_difference(g1, g2) == ({("a", "b")}, {("b", "c")})
        assert edit_distance(g1, g2) == 2

    def test_symmetric_difference_set_oracle(self):
        rng = np.random.default_rng(1)
        labels = _labels(6)
        for _ in range(20):
            g1 = build_graph(_random_symmetric(rng, 6), labels, 0.5)
            g2 = build_graph(_random_symmetric(rng, 6), labels, 0.5)
            e1 = {tuple(sorted(e)) for e in g1.edges}
            e2 = {tuple(sorted(e)) for e in g2.edges}
            assert symmetric_difference(g1, g2) == (e1 - e2, e2 - e1)

    def test_node_set_mismatch(self):
        with pytest.raises(NodeSetMismatch):
            symmetric_difference(build_graph(np.eye(2), "ab", 0.5), build_graph(np.eye(2), "ac", 0.5))

    def test_closest_graph_reproducible_reference(self):
        rng = np.random.default_rng(2)
        c = _random_symmetric(rng, 5)
        ref = build_graph(c, _labels(5), 0.37)
        g, d = closest_graph_by_edit_distance(ref, c, _labels(5))
        assert d == 0 and g.edges == ref.edges

    def test_closest_graph_complete_reference(self):
        labels = _labels(5)
        full = DependencyGraph(tuple(labels), frozenset(combinations(labels, 2)), 0.0, np.ones((5, 5)))
        g, d = closest_graph_by_edit_distance(full, np.zeros((5, 5)), labels)
        assert d == 10 and g.lam == 0.0

    def test_closest_graph_brute_force(self):
        rng = np.random.default_rng(3)
        labels = _labels(5)
        for _ in range(10):
            ref = build_graph(_random_symmetric(rng, 5), labels, 0.5)
            c = _random_symmetric(rng, 5)
            dists = []
            for lam in default_lambda_grid():
                edges = {(labels[i], labels[j]) for i, j in combinations(range(5), 2) if c[i, j] > lam}
                dists.append(len(edges ^ set(ref.edges)))
            g, d = closest_graph_by_edit_distance(ref, c, labels)
            assert d == min(dists)
            assert g.lam == default_lambda_grid()[int(np.argmin(dists))]

    def test_pairwise_first_order_planted_pair(self):
        rng = np.random.default_rng(4)
        a = rng.standard_normal((400, 2))
        b = a @ [[1.0, 0.0], [0.5, 1.0]] + 0.1 * rng.standard_normal((400, 2))
        c = rng.standard_normal((400, 2))
        coef, labels = pairwise_first_order({"a": a, "b": b, "c": c})
        assert labels == ("a", "b", "c")
        g = build_graph(coef, labels, 0.5)
        assert g.edges == frozenset({("a", "b")})
