import numpy as np
import pytest

from mtcca import (Family, MtFunctionSpec, PairedSample, SelectionConfig, TransformedMoments,
                   ZeroVariance, build_search_region, default_gaussian_widths, mtcca,
                   psi_objective, select_parameters, solve_cca, transformed_moments)
from mtcca.selection import (PercentileBox, PsiEvaluator, QuadraticMgfRegion,
                             projected_ascent, psi_gradient, select_parameters_many)
from mtcca.simulation import SimulationModel, generate

from oracles import linear_percentile, random_cca_instance


def _tm(sx, sy, sxy):
    return TransformedMoments(np.atleast_2d(sx), np.atleast_2d(sy), np.atleast_2d(sxy),
                              np.zeros(1), np.zeros(1))


class TestPsi:
    def test_zero_cross_covariance(self):
        assert psi_objective(_tm(np.eye(2), np.eye(3), np.zeros((2, 3)))) == 0.0

    def test_scalar_case_is_tight(self):
        m = _tm(1.0, 1.0, 0.5)
        assert psi_objective(m) == pytest.approx(0.5)
        assert solve_cca(m).rho[0] == pytest.approx(0.5)

    def test_zero_variance(self):
        with pytest.raises(ZeroVariance):
            psi_objective(_tm(np.diag([1.0, 0.0]), 1.0, np.zeros((2, 1))))

    def test_lower_bounds_first_coefficient(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            sx, sy, sxy = random_cca_instance(rng, 3, 2, max_rho=0.999)
            m = TransformedMoments(sx, sy, sxy, np.zeros(3), np.zeros(2))
            assert psi_objective(m) <= solve_cca(m).rho[0] + 1e-10


class TestRegions:
    def test_origin_in_exponential_region(self):
        s = generate(SimulationModel("example1", 200, 0))
        region = build_search_region(s, "exponential")
        assert isinstance(region, QuadraticMgfRegion)
        assert region.j_hat(np.zeros(4))[0] == pytest.approx(1.0)
        assert region.contains(np.zeros(4))[0]

    def test_percentile_box_standard_normal(self):
        rng = np.random.default_rng(1)
        s = PairedSample(rng.standard_normal(100_000), rng.standard_normal(100_000))
        box = build_search_region(s, "gaussian")
        # exact normal percentiles: +-1.6449
        np.testing.assert_allclose(box.lo, [-1.6449, -1.6449], atol=0.1)
        np.testing.assert_allclose(box.hi, [1.6449, 1.6449], atol=0.1)

    def test_percentile_box_hand_dataset(self):
        x, y = [1.0, 2.0, 4.0, 8.0], [0.0, -1.0, 3.0, 5.0]
        box = build_search_region(PairedSample(x, y), "gaussian")
        expected_lo = [linear_percentile(x, 5), linear_percentile(y, 5)]
        expected_hi = [linear_percentile(x, 95), linear_percentile(y, 95)]
        np.testing.assert_allclose(box.lo, expected_lo)
        np.testing.assert_allclose(box.hi, expected_hi)
        # frozen hand values
        np.testing.assert_allclose(box.lo, [1.15, -0.85])
        np.testing.assert_allclose(box.hi, [7.4, 4.7])
        # the origin is outside, so the box is anchored at the sample mean
        assert box.centred
        np.testing.assert_allclose(box.anchor, [3.75, 1.75])

    def test_projection_stays_feasible(self):
        rng = np.random.default_rng(2)
        s = generate(SimulationModel("example2", 300, 0))
        region = build_search_region(s, "exponential")
        far = rng.normal(scale=5.0, size=(50, 8))
        proj = region.project(None, far)
        assert region.contains(proj).all()
        inside = region.project(None, proj)
        np.testing.assert_array_equal(inside, proj)

    def test_box_projection_is_clip(self):
        box = PercentileBox(np.array([-1.0]), np.array([1.0]), np.array([0.0]), np.array([2.0]))
        np.testing.assert_array_equal(box.project(None, [[3.0, -1.0]]), [[1.0, 0.0]])

    def test_starts_are_members(self):
        s = generate(SimulationModel("example1", 300, 3))
        for kind in ("exponential", "gaussian"):
            region = build_search_region(s, kind)
            starts = region.starts(16, seed=5)
            np.testing.assert_array_equal(starts[0], region.anchor)
            assert region.contains(starts).all()


class TestWidths:
    def test_mean_of_stds(self):
        x = np.column_stack([np.array([-1.0, 1.0]) / np.sqrt(2), 3 * np.array([-1.0, 1.0]) / np.sqrt(2)])
        sigma, tau = default_gaussian_widths(PairedSample(x, np.array([0.0, 2.0])))
        assert sigma == pytest.approx(2.0)
        assert tau == pytest.approx(np.std([0.0, 2.0], ddof=1))

    def test_large_sample(self):
        rng = np.random.default_rng(3)
        sigma, _ = default_gaussian_widths(PairedSample(rng.standard_normal((5000, 3)), rng.standard_normal(5000)))
        assert abs(sigma - 1.0) < 0.05

    def test_constant_coordinate(self):
        with pytest.raises(ZeroVariance):
            default_gaussian_widths(PairedSample(np.ones((5, 1)), np.arange(5.0)))


class TestGradient:
    def test_richardson_consistency(self):
        s = generate(SimulationModel("example1", 400, 1))
        ev = PsiEvaluator(s, "exponential")
        th = np.array([[0.3, -0.1, 0.2, 0.05]])
        g1 = psi_gradient(ev, th, 1e-4)
        g2 = psi_gradient(ev, th, 5e-5)
        np.testing.assert_allclose(g1, g2, rtol=1e-4, atol=1e-8)

    def test_matches_per_point_objective(self):
        s = generate(SimulationModel("example1", 300, 2))
        sig, tau = default_gaussian_widths(s)
        ev = PsiEvaluator(s, "gaussian", sig, tau, min_ess=0.0)
        th = np.array([0.5, -0.2, 0.3, 0.1])
        spec = MtFunctionSpec.gaussian(th[:2], th[2:], sig, tau)
        assert ev(th)[0] == pytest.approx(psi_objective(transformed_moments(s, spec)), abs=1e-12)


class TestSelect:
    @pytest.mark.parametrize("kind", ["exponential", "gaussian"])
    def test_trace_monotone_and_feasible(self, kind):
        s = generate(SimulationModel("example1", 500, 4))
        res = select_parameters(s, kind, SelectionConfig(n_starts=3))
        region = build_search_region(s, kind)
        for trace in res.trace:
            psis = [row[1] for row in trace]
            assert all(b > a for a, b in zip(psis, psis[1:]))
        assert region.contains(np.concatenate([res.s_star, res.t_star]))[0]
        assert np.isfinite(res.psi_star) and 0 <= res.psi_star <= 1
        assert res.psi_star >= max(trace[0][1] for trace in res.trace)
        assert res.best_start == int(np.argmax([trace[-1][1] for trace in res.trace]))

    def test_deterministic(self):
        s = generate(SimulationModel("example2", 300, 5))
        a = select_parameters(s, "exponential", SelectionConfig(n_starts=4, seed=3))
        b = select_parameters(s, "exponential", SelectionConfig(n_starts=4, seed=3))
        np.testing.assert_array_equal(a.s_star, b.s_star)
        assert a.to_dict() == b.to_dict()

    def test_independent_data_has_small_psi(self):
        rng = np.random.default_rng(6)
        s = PairedSample(rng.standard_normal((5000, 2)), rng.standard_normal((5000, 2)))
        for kind in ("exponential", "gaussian"):
            assert select_parameters(s, kind).psi_star <= 0.1

    def test_recovers_nonlinear_dependence(self):
        s = generate(SimulationModel("example1", 1000, 7))
        lin = mtcca(s).rho[0]
        res = select_parameters(s, "exponential")
        assert mtcca(s, res.spec).rho[0] > lin + 0.5

    def test_ess_floor_is_respected(self):
        s = generate(SimulationModel("example2", 500, 8))
        res = select_parameters(s, "gaussian", SelectionConfig(min_ess=0.2))
        assert transformed_moments(s, res.spec).effective_sample_fraction >= 0.2 - 1e-12

    def test_ess_floor_never_excludes_the_anchor(self):
        rng = np.random.default_rng(9)
        # many coordinates make Gaussian weights at the anchor very uneven
        s = PairedSample(rng.standard_normal((200, 15)), rng.standard_normal((200, 15)))
        res = select_parameters(s, "gaussian", SelectionConfig(min_ess=0.99, max_iters=5))
        assert np.isfinite(res.psi_star)

    @pytest.mark.parametrize("kind", ["exponential", "gaussian"])
    def test_batched_selection_matches_single(self, kind):
        s = generate(SimulationModel("example1", 300, 9))
        rng = np.random.default_rng(0)
        perms = np.array([rng.permutation(s.n) for _ in range(4)])
        specs = select_parameters_many(s, kind, perms, SelectionConfig(n_starts=2))
        for perm, spec in zip(perms, specs):
            ref = select_parameters(s.with_y_permuted(perm), kind, SelectionConfig(n_starts=2)).spec
            np.testing.assert_allclose(spec.s, ref.s, atol=1e-6)
            np.testing.assert_allclose(spec.t, ref.t, atol=1e-6)

    def test_identity_family_has_no_region(self):
        s = generate(SimulationModel("example1", 50, 0))
        with pytest.raises(ValueError):
            build_search_region(s, Family.IDENTITY)
