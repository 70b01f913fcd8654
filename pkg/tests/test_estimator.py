from math import exp, pi, sqrt

import numpy as np
import pytest
from numpy.testing import assert_allclose

from hetdecon import (
    K2,
    SINC,
    Degenerate,
    EstimatorConfig,
    HetSample,
    Laplace,
    Normal,
    QuadratureSpec,
    ReplicatedSample,
    estimate_density,
    phi_hat_ridge,
    phi_n,
    postprocess_density,
    psi_n,
)
from hetdecon.exceptions import ZeroDenominatorError

from helpers import classical_kde, homoscedastic_reference, simpson_weights


def _sample(rng, n, model):
    return HetSample.homoscedastic(rng.normal(size=n), model)


class TestPsi:
    def test_single_degenerate(self):
        s = HetSample.homoscedastic([0.0], Degenerate())
        for t in (0.0, 0.7, -2.3):
            assert psi_n(s, t) == 1.0 + 0.0j

    def test_single_normal_closed_form(self):
        s = HetSample.homoscedastic([0.0], Normal(0, 1))
        for t in (0.5, 1.0):
            assert_allclose(psi_n(s, t), exp(t ** 2 / 2), rtol=1e-13)

    def test_unit_at_zero(self):
        rng = np.random.default_rng(2)
        s = HetSample(
            rng.normal(size=6),
            [0, 0, 1, 1, 2, 2],
            (Normal(0, 1), Laplace(0.5), Degenerate()),
        )
        assert psi_n(s, 0.0) == 1.0 + 0.0j

    def test_conjugate_symmetry(self):
        rng = np.random.default_rng(3)
        s = HetSample(
            rng.normal(size=9),
            rng.integers(0, 2, size=9),
            (Normal(0, 0.5), Laplace(1.0)),
        )
        ts = np.linspace(0.1, 4, 17)
        assert_allclose(
            np.asarray(psi_n(s, -ts)), np.conj(np.asarray(psi_n(s, ts))), rtol=1e-12
        )


class TestPhi:
    def test_degenerate_reduces_to_ecf(self):
        from hetdecon import empirical_cf

        rng = np.random.default_rng(4)
        ys = rng.normal(size=12)
        s = HetSample.homoscedastic(ys, Degenerate())
        ts = np.linspace(-3, 3, 13)
        assert_allclose(
            np.asarray(phi_n(s, ts)), empirical_cf(ys, ts), rtol=1e-13
        )

    def test_unit_at_zero(self):
        s = HetSample.homoscedastic([1.0, 2.0], Normal(0, 1))
        assert phi_n(s, 0.0) == 1.0 + 0.0j

    def test_cancelling_asymmetric_cfs_raise(self):
        # two opposite-mean normals: cf sum proportional to cos(mu t),
        # zero at t = pi / (2 mu)
        s = HetSample(
            [0.0, 1.0], [0, 1], (Normal(1.0, 0.3), Normal(-1.0, 0.3))
        )
        with pytest.raises(ZeroDenominatorError):
            phi_n(s, pi / 2)

    def test_equals_psi_for_shared_symmetric_model(self):
        rng = np.random.default_rng(5)
        ys = rng.normal(size=15)
        s = HetSample.homoscedastic(ys, Laplace(0.8))
        ts = np.linspace(-2, 2, 11)
        assert_allclose(
            np.asarray(phi_n(s, ts)), np.asarray(psi_n(s, ts)), rtol=1e-11
        )


class TestPhiHatRidge:
    def test_unit_at_zero(self):
        reps = ReplicatedSample([("a", [0.5, 1.5]), ("b", [2.0, 2.5])])
        assert_allclose(phi_hat_ridge(reps, 0.0, ridge=0.5), 1.0, rtol=1e-14)

    def test_constant_replicates(self):
        c = 1.7
        reps = ReplicatedSample([("a", [c, c]), ("b", [c, c])])
        for t in (0.3, 1.1):
            assert_allclose(
                phi_hat_ridge(reps, t, ridge=0.5), np.exp(1j * t * c), rtol=1e-13
            )

    def test_recovers_target_transform_seeded(self):
        rng = np.random.default_rng(6)
        b = 0.7
        n_subj = 10 ** 4
        lap = lambda size: -b * np.sign(rng.random(size) - 0.5) * np.log(
            1 - 2 * np.abs(rng.random(size) - 0.5)
        )
        values = rng.normal(0, 1, size=n_subj)[:, None] + lap((n_subj, 2))
        reps = ReplicatedSample([(i, row) for i, row in enumerate(values)])
        est = phi_hat_ridge(reps, 1.0, ridge=1e-3)
        assert abs(est - exp(-0.5)) < 0.05

    def test_conjugate_symmetry(self):
        rng = np.random.default_rng(7)
        values = rng.normal(size=(40, 3))
        reps = ReplicatedSample([(i, row) for i, row in enumerate(values)])
        ts = np.linspace(0.2, 3, 9)
        fwd = np.asarray(phi_hat_ridge(reps, ts, ridge=0.1))
        bwd = np.asarray(phi_hat_ridge(reps, -ts, ridge=0.1))
        assert_allclose(bwd, np.conj(fwd), rtol=1e-12)


class TestEstimateDensity:
    def test_single_point_sinc(self):
        s = HetSample.homoscedastic([0.0], Degenerate())
        cfg = EstimatorConfig(kernel=SINC, h=1.0, x_grid=np.array([0.0, np.pi]))
        est = estimate_density(s, cfg)
        assert_allclose(est.values[0], 1.0 / pi, rtol=1e-12)
        assert abs(est.values[1]) < 1e-12
        # general x reproduces sin(x)/(pi x)
        xs = np.array([0.5, 1.0, 2.0])
        est2 = estimate_density(
            s, EstimatorConfig(kernel=SINC, h=1.0, x_grid=xs)
        )
        assert_allclose(est2.values, np.sin(xs) / (pi * xs), atol=1e-12)

    @pytest.mark.parametrize("kernel", [SINC, K2])
    def test_error_free_reduction_to_classical_kde(self, kernel):
        rng = np.random.default_rng(8)
        ys = rng.normal(size=50)
        s = HetSample.homoscedastic(ys, Degenerate())
        x = np.linspace(-4, 4, 201)
        h = 0.35
        est = estimate_density(s, EstimatorConfig(kernel=kernel, h=h, x_grid=x))
        oracle = classical_kde(ys, kernel, h, x)
        assert np.max(np.abs(est.values - oracle)) < 1e-6

    def test_homoscedastic_reduction(self):
        rng = np.random.default_rng(9)
        var = 0.4
        ys = rng.normal(size=40) + rng.normal(0, sqrt(var), size=40)
        s = HetSample.homoscedastic(ys, Normal(0, var))
        x = np.linspace(-4, 4, 101)
        h = 0.45
        est = estimate_density(s, EstimatorConfig(kernel=K2, h=h, x_grid=x))
        ref = homoscedastic_reference(
            ys, lambda t: np.exp(-0.5 * var * t ** 2), K2, h, x
        )
        assert np.max(np.abs(est.values - ref)) < 1e-10

    def test_translation_equivariance(self):
        rng = np.random.default_rng(10)
        ys = rng.normal(size=25)
        shift = 3.25
        x = np.linspace(-3, 3, 61)
        model = Normal(0, 0.2)
        a = estimate_density(
            HetSample.homoscedastic(ys, model),
            EstimatorConfig(kernel=K2, h=0.5, x_grid=x),
        )
        b = estimate_density(
            HetSample.homoscedastic(ys + shift, model),
            EstimatorConfig(kernel=K2, h=0.5, x_grid=x + shift),
        )
        assert np.max(np.abs(a.values - b.values)) < 1e-9

    def test_imaginary_residue_negligible(self):
        rng = np.random.default_rng(11)
        ys = rng.normal(size=30)
        s = HetSample.homoscedastic(ys, Laplace(0.5))
        est = estimate_density(
            s, EstimatorConfig(kernel=K2, h=0.4, x_grid=np.linspace(-5, 5, 101))
        )
        assert est.imag_ok

    def test_mass_close_to_one(self):
        rng = np.random.default_rng(12)
        ys = rng.normal(size=400) + rng.normal(0, 0.5, size=400)
        s = HetSample.homoscedastic(ys, Normal(0, 0.25))
        x = np.linspace(-8.0, 8.0, 401)
        est = estimate_density(s, EstimatorConfig(kernel=K2, h=0.4, x_grid=x))
        assert abs(np.trapezoid(est.values, x) - 1.0) < 0.02

    def test_derivative_matches_finite_differences(self):
        rng = np.random.default_rng(13)
        ys = rng.normal(size=60)
        s = HetSample.homoscedastic(ys, Degenerate())
        x = np.linspace(-3, 3, 1201)
        h = 0.6
        base = estimate_density(s, EstimatorConfig(kernel=K2, h=h, x_grid=x))
        deriv = estimate_density(
            s,
            EstimatorConfig(kernel=K2, h=h, x_grid=x, derivative_order=1),
        )
        dx = x[1] - x[0]
        fd = (base.values[2:] - base.values[:-2]) / (2 * dx)
        assert np.max(np.abs(deriv.values[1:-1] - fd)) < 1e-4

    def test_parseval(self):
        rng = np.random.default_rng(14)
        ys = rng.normal(size=35)
        s = HetSample.homoscedastic(ys, Normal(0, 0.3))
        h = 0.5
        x = np.linspace(-30, 30, 6001)
        est = estimate_density(s, EstimatorConfig(kernel=K2, h=h, x_grid=x))
        spatial = np.trapezoid(est.values ** 2, x)
        t, w = simpson_weights(-1 / h, 1 / h, 4097)
        from hetdecon import kft_eval

        weight = np.asarray(psi_n(s, t))
        freq = (w * np.abs(kft_eval(K2, t * h) * weight) ** 2).sum() / (2 * pi)
        assert abs(spatial - freq) < 1e-4

    def test_ridge_weight_source(self):
        rng = np.random.default_rng(15)
        values = rng.normal(size=(200, 2))
        reps = ReplicatedSample([(i, row) for i, row in enumerate(values)])
        cfg = EstimatorConfig(
            kernel=K2,
            h=0.5,
            x_grid=np.linspace(-3, 3, 61),
            weight_source="ridge",
            ridge=0.05,
        )
        est = estimate_density(reps, cfg)
        assert est.imag_ok
        assert np.all(np.isfinite(est.values))

    def test_weight_source_requires_matching_input(self):
        s = HetSample.homoscedastic([0.0, 1.0], Degenerate())
        cfg = EstimatorConfig(
            kernel=K2,
            h=0.5,
            x_grid=np.linspace(-1, 1, 11),
            weight_source="ridge",
            ridge=0.1,
        )
        with pytest.raises(ValueError):
            estimate_density(s, cfg)

    def test_postprocess_nonnegative_unit_mass(self):
        rng = np.random.default_rng(16)
        ys = rng.normal(size=20)
        s = HetSample.homoscedastic(ys, Degenerate())
        x = np.linspace(-6, 6, 301)
        est = estimate_density(s, EstimatorConfig(kernel=SINC, h=0.4, x_grid=x))
        assert np.min(est.values) < 0  # raw sinc estimate oscillates
        clean = postprocess_density(est)
        assert np.min(clean.values) >= 0
        assert_allclose(np.trapezoid(clean.values, x), 1.0, rtol=1e-12)


class TestConfigValidation:
    def test_bad_bandwidth(self):
        with pytest.raises(ValueError):
            EstimatorConfig(kernel=K2, h=0.0, x_grid=np.array([0.0, 1.0]))

    def test_decreasing_grid(self):
        with pytest.raises(ValueError):
            EstimatorConfig(kernel=K2, h=1.0, x_grid=np.array([1.0, 0.0]))

    def test_ridge_requires_value(self):
        with pytest.raises(ValueError):
            EstimatorConfig(
                kernel=K2,
                h=1.0,
                x_grid=np.array([0.0, 1.0]),
                weight_source="ridge",
            )
