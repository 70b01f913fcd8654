from math import exp, pi, sqrt

import numpy as np
import pytest
from numpy.testing import assert_allclose

from hetdecon import (
    Averaged,
    Degenerate,
    EmpiricalSymmetric,
    HetSample,
    Laplace,
    Normal,
    ReplicatedSample,
    StableSymmetric,
    averaged_model,
    cf_sum_sq,
    char_fn,
    consistency_diagnostic,
    empirical_cf,
    empirical_error_cf,
    error_moments,
    estimate_error_variance,
    estimate_linear_variance_param,
    identify_linear_variance,
    parse_models_config,
)
from hetdecon.exceptions import (
    DegenerateDenominatorError,
    InfiniteVarianceError,
    InsufficientReplicatesError,
)

ALL_MODELS = [
    Degenerate(),
    Normal(0.0, 1.0),
    Normal(-1.2, 0.5),
    Laplace(0.8),
    StableSymmetric(1.0, 1.0),
    StableSymmetric(0.7, 2.0),
    Averaged(Laplace(0.5), 3),
]


class TestCharFn:
    def test_normal_closed_form(self):
        assert_allclose(char_fn(Normal(0, 1), 1.0), exp(-0.5), rtol=1e-14)

    def test_degenerate(self):
        assert char_fn(Degenerate(), 7.3) == 1.0 + 0.0j

    def test_stable(self):
        assert_allclose(
            char_fn(StableSymmetric(1.0, 1.0), 2.0), exp(-1.0), rtol=1e-14
        )

    def test_laplace(self):
        assert_allclose(char_fn(Laplace(2.0), 0.5), 1.0 / 2.0, rtol=1e-14)

    @pytest.mark.parametrize("model", ALL_MODELS)
    def test_cf_axioms(self, model):
        rng = np.random.default_rng(3)
        ts = rng.uniform(-40, 40, size=1000)
        vals = np.asarray(model.cf(ts))
        assert model.cf(0.0) == 1.0 + 0.0j
        assert np.all(np.abs(vals) <= 1.0 + 1e-14)
        flipped = np.asarray(model.cf(-ts))
        assert np.max(np.abs(flipped - np.conj(vals))) < 1e-14

    @pytest.mark.parametrize(
        "model",
        [Degenerate(), Laplace(1.1), StableSymmetric(0.9, 1.5)],
    )
    def test_symmetric_models_have_real_cf(self, model):
        ts = np.linspace(-20, 20, 101)
        assert np.max(np.abs(np.imag(model.cf(ts)))) == 0.0


class TestAveraging:
    def test_normal_simplification(self):
        out = averaged_model(Normal(0.0, 4.0), 4)
        assert out == Normal(0.0, 1.0)

    def test_degenerate_fixed_point(self):
        assert averaged_model(Degenerate(), 10) == Degenerate()

    def test_laplace_cf_product_form(self):
        b = 1.3
        model = averaged_model(Laplace(b), 2)
        ts = np.linspace(-5, 5, 41)
        expected = (1.0 / (1.0 + (b * ts / 2) ** 2)) ** 2
        assert_allclose(np.asarray(model.cf(ts)).real, expected, rtol=1e-13)

    def test_r1_identity(self):
        base = Laplace(0.7)
        assert averaged_model(base, 1) is base

    def test_stable_stays_stable(self):
        out = averaged_model(StableSymmetric(1.0, 1.0), 5)
        # Cauchy averages keep their scale
        assert out == StableSymmetric(1.0, 1.0)
        out2 = averaged_model(StableSymmetric(2.0, 2.0), 4)
        assert_allclose(out2.scale, 1.0)

    def test_nonzero_mean_exactness(self):
        # exact average cf for mean-shifted normals keeps the full shift
        model = averaged_model(Normal(3.0, 2.0), 2)
        assert model == Normal(3.0, 1.0)
        t = 0.7
        expected = (Normal(3.0, 2.0).cf(t / 2)) ** 2
        assert_allclose(model.cf(t), expected, rtol=1e-14)


class TestMoments:
    def test_normal(self):
        assert error_moments(Normal(2.0, 3.0)) == (2.0, 7.0)

    def test_degenerate(self):
        assert error_moments(Degenerate()) == (0.0, 0.0)

    def test_laplace(self):
        assert_allclose(error_moments(Laplace(1.5)), (0.0, 4.5))

    def test_cauchy_rejected(self):
        with pytest.raises(InfiniteVarianceError):
            error_moments(StableSymmetric(1.0, 1.0))

    def test_averaged(self):
        mean, second = error_moments(Averaged(Laplace(1.0), 4))
        assert_allclose((mean, second), (0.0, 0.5))


class TestCfSumSq:
    def test_all_degenerate(self):
        sample = HetSample.homoscedastic([1.0, 2.0, 3.0], Degenerate())
        assert cf_sum_sq(sample, 17.0) == 3.0

    def test_two_normals(self):
        sample = HetSample.homoscedastic([0.0, 1.0], Normal(0, 1))
        assert_allclose(cf_sum_sq(sample, 1.0), 2 * exp(-1.0), rtol=1e-14)

    def test_mixed_at_zero(self):
        sample = HetSample(
            [0.0, 1.0], [0, 1], (Degenerate(), Normal(0, 1))
        )
        assert cf_sum_sq(sample, 0.0) == 2.0

    def test_underflow_raises(self):
        sample = HetSample.homoscedastic([0.0], Normal(0, 1.0))
        with pytest.raises(DegenerateDenominatorError):
            cf_sum_sq(sample, 60.0)  # exp(-3600) underflows

    def test_accepts_plain_model_list(self):
        assert cf_sum_sq([Degenerate()] * 5, 2.0) == 5.0


class TestReplicates:
    def test_variance_single_subject_pair(self):
        reps = ReplicatedSample([("a", [1.0, 3.0])])
        assert estimate_error_variance(reps) == 2.0

    def test_variance_zero_differences(self):
        reps = ReplicatedSample([("a", [0.0, 0.0]), ("b", [2.0, 2.0])])
        assert estimate_error_variance(reps) == 0.0

    def test_variance_three_replicates(self):
        reps = ReplicatedSample([("a", [0.0, 2.0, 4.0])])
        assert_allclose(estimate_error_variance(reps), 4.0)

    def test_no_pairs_raises(self):
        reps = ReplicatedSample([("a", [1.0]), ("b", [2.0])])
        with pytest.raises(InsufficientReplicatesError):
            estimate_error_variance(reps)

    def test_variance_recovery_seeded(self):
        rng = np.random.default_rng(11)
        sigma2 = 1.7
        values = rng.normal(0, 1, size=2000)[:, None] + rng.normal(
            0, sqrt(sigma2), size=(2000, 2)
        )
        reps = ReplicatedSample([(i, row) for i, row in enumerate(values)])
        est = estimate_error_variance(reps)
        assert abs(est - sigma2) / sigma2 < 0.05

    def test_empirical_error_cf_trivial_values(self):
        reps = ReplicatedSample([("a", [1.0, 1.0]), ("b", [4.0, 4.0])])
        assert empirical_error_cf(reps, 0.0, ridge=0.5) == 1.0
        assert empirical_error_cf(reps, 3.7, ridge=0.5) == 1.0

    def test_empirical_error_cf_single_pair(self):
        reps = ReplicatedSample([("a", [0.0, np.pi])])
        # |exp(-i pi / 2)| = 1 from the single pair
        assert_allclose(empirical_error_cf(reps, 1.0, ridge=0.1), 1.0, rtol=1e-14)

    def test_empirical_error_cf_floor(self):
        reps = ReplicatedSample([("a", [0.0, np.pi])])
        # at t = 1 the pair gives cos(pi/2) ~ 0 for the real part but the
        # modulus is 1; push the floor above 1 to see it bind
        assert empirical_error_cf(reps, 1.0, ridge=2.0) == 2.0

    def test_empirical_error_cf_converges_seeded(self):
        rng = np.random.default_rng(5)
        b = 0.9
        n_subj = 10 ** 4
        lap = lambda size: -b * np.sign(rng.random(size) - 0.5) * np.log(
            1 - 2 * np.abs(rng.random(size) - 0.5)
        )
        values = rng.normal(0, 1, size=n_subj)[:, None] + lap(
            (n_subj, 2)
        ).reshape(n_subj, 2)
        reps = ReplicatedSample([(i, row) for i, row in enumerate(values)])
        ts = np.linspace(0.0, 3.0, 31)
        est = empirical_error_cf(reps, ts, ridge=1e-6)
        truth = (1.0 / (1.0 + (b * ts / 2) ** 2)) ** 2
        assert np.max(np.abs(est - truth)) < 0.05

    def test_subject_means_and_counts(self):
        reps = ReplicatedSample([("a", [1.0, 3.0]), ("b", [5.0])])
        assert_allclose(reps.subject_means(), [2.0, 5.0])
        assert list(reps.replicate_counts()) == [2, 1]
        assert reps.pair_count() == 1


class TestSamplingMatchesCf:
    @pytest.mark.parametrize(
        "model",
        [
            Normal(0.0, 1.0),
            Laplace(1.0),
            Averaged(Laplace(1.0), 3),
            StableSymmetric(0.8, 2.0),
        ],
    )
    def test_empirical_cf_matches_char_fn(self, model):
        rng = np.random.default_rng(17)
        draws = model.sample(rng, 10 ** 5)
        for t in (0.5, 1.0, 2.0):
            assert abs(empirical_cf(draws, t) - model.cf(t)) < 3.0 / sqrt(10 ** 5)

    def test_cauchy_sampling_median_and_cf(self):
        model = StableSymmetric(2.0, 1.0)
        rng = np.random.default_rng(23)
        draws = model.sample(rng, 10 ** 5)
        assert abs(np.median(draws)) < 0.05
        assert abs(empirical_cf(draws, 1.0) - model.cf(1.0)) < 0.01


class TestConsistencyDiagnostic:
    def test_constant_scales(self):
        models = [StableSymmetric(0.8, 2.0)] * 12
        expected = 12 * exp(-(0.8 ** 2))
        assert_allclose(consistency_diagnostic(models, 1.0), expected, rtol=1e-13)

    def test_log_scale_family_harmonic_sum(self):
        gamma = 2.0
        models = [
            StableSymmetric(np.log(j) ** (1 / gamma), gamma) for j in range(1, 101)
        ]
        expected = sum(1.0 / j for j in range(1, 101))
        assert_allclose(consistency_diagnostic(models, 1.0), expected, rtol=1e-12)

    def test_monotone_in_omega(self):
        models = [StableSymmetric(s, 1.5) for s in (0.5, 1.0, 2.0)]
        values = [consistency_diagnostic(models, w) for w in (0.5, 1.0, 2.0, 4.0)]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_mixed_exponents_rejected(self):
        models = [StableSymmetric(1.0, 1.0), StableSymmetric(1.0, 2.0)]
        with pytest.raises(ValueError):
            consistency_diagnostic(models, 1.0)


class TestLinearVarianceScan:
    N = 10 ** 5
    M = 20
    C = 1.0
    BETA = 0.01

    @staticmethod
    def _mean_upper(a, t, n):
        j = np.arange(1, n + 1) / n
        return np.exp(-0.5 * a * (1.0 + j) * t * t).mean()

    def test_oracle_recovers_midcell(self):
        # noiseless accessible curve with a = 1.5 and the target transform
        # saturating the polynomial lower envelope
        def phi(t):
            return self._mean_upper(1.5, t, self.N) * self.C / (
                1.0 + t ** (self.BETA + 0.5)
            )

        a_hat = identify_linear_variance(
            phi, n=self.N, c=self.C, beta=self.BETA, m=self.M, t_max=10.0
        )
        assert abs(a_hat - 1.5) <= 1.0 / self.M + 0.05

    def test_boundary_clamps(self):
        high = identify_linear_variance(
            lambda t: 1.0, n=self.N, c=self.C, beta=self.BETA, m=self.M
        )
        assert high == 1.0
        low = identify_linear_variance(
            lambda t: 0.0, n=self.N, c=self.C, beta=self.BETA, m=self.M
        )
        assert low == 2.0

    def test_no_interleaving_raises(self):
        from hetdecon.exceptions import IdentificationError

        with pytest.raises(IdentificationError):
            identify_linear_variance(
                lambda t: 0.5, n=100, c=0.01, beta=3.0, m=20, t_max=2.0
            )

    def test_data_driven_path_returns_in_range(self):
        rng = np.random.default_rng(1234)
        n = 20000
        j = np.arange(1, n + 1) / n
        ys = rng.standard_normal(n) + rng.normal(0, np.sqrt(1.5 * (1 + j)))
        a_hat = estimate_linear_variance_param(
            ys, c=self.C, beta=self.BETA, m=self.M
        )
        assert 1.0 <= a_hat <= 2.0


class TestEmpiricalSymmetric:
    def test_from_replicates_matches_truth(self):
        rng = np.random.default_rng(31)
        b = 1.0
        n_subj = 5000
        lap = lambda size: -b * np.sign(rng.random(size) - 0.5) * np.log(
            1 - 2 * np.abs(rng.random(size) - 0.5)
        )
        values = rng.normal(0, 1, size=n_subj)[:, None] + lap((n_subj, 2))
        reps = ReplicatedSample([(i, row) for i, row in enumerate(values)])
        model = EmpiricalSymmetric.from_replicates(reps, t_max=3.0, ridge=1e-4)
        ts = np.linspace(0, 2.5, 11)
        truth = 1.0 / (1.0 + (b * ts) ** 2)
        est = np.asarray(model.cf(ts)).real
        assert np.max(np.abs(est - truth)) < 0.06

    def test_cf_clamped(self):
        model = EmpiricalSymmetric(
            np.array([0.0, 1.0]), np.array([1.0, 0.5]), floor=0.2
        )
        assert model.cf(10.0).real == 0.2  # beyond the table
        assert model.cf(0.0) == 1.0 + 0.0j


class TestModelConfigGrammar:
    TEXT = """
# error catalogue
model a degenerate
model b normal 0 1.5
model c laplace 0.6
model d stable 1.2 2
model e averaged b 4
"""

    def test_parse(self):
        models = parse_models_config(self.TEXT)
        assert models["a"] == Degenerate()
        assert models["b"] == Normal(0.0, 1.5)
        assert models["c"] == Laplace(0.6)
        assert models["d"] == StableSymmetric(1.2, 2.0)
        assert models["e"] == Normal(0.0, 1.5 / 4)

    def test_unknown_family(self):
        with pytest.raises(ValueError, match="unknown family"):
            parse_models_config("model x cauchy 1")

    def test_duplicate_id(self):
        with pytest.raises(ValueError, match="duplicate"):
            parse_models_config("model a degenerate\nmodel a degenerate")

    def test_forward_reference(self):
        with pytest.raises(ValueError, match="unknown base"):
            parse_models_config("model e averaged b 4")


class TestHetSample:
    def test_validation(self):
        with pytest.raises(ValueError):
            HetSample([], [], (Degenerate(),))
        with pytest.raises(ValueError):
            HetSample([1.0], [2], (Degenerate(),))

    def test_from_models_dedup(self):
        sample = HetSample.from_models(
            [1.0, 2.0, 3.0], [Normal(0, 1), Degenerate(), Normal(0, 1)]
        )
        assert len(sample.models) == 2
        assert list(sample.model_counts()) == [2, 1]
