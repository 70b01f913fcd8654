"""Exact and asymptotic risk of the deconvolution estimator.

The exact mean integrated squared error splits into three quadratures
(squared-bias, variance, and a small subtracted cross term of order 1/n);
the asymptotic form trades a polynomial bias term against a variance
integral and drives the plug-in bandwidth machinery, together with the
roughness functionals theta_r = integral of (f^{(r)})^2 and their
normal-reference and frequency-domain estimates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import hermite_e

from .errors import ErrorModel, HetSample, cf_sum_sq, error_moments
from .estimator import psi_n
from .exceptions import UnsupportedKernelError
from .kernels import Kernel, kft_eval
from .quadrature import QuadratureSpec, integrate_values

__all__ = [
    "NormalMixture",
    "RiskReport",
    "exact_mise",
    "amise",
    "rn_term",
    "abias_theta",
    "theta_hat",
    "theta_normal_ref",
    "normal_theta",
    "estimate_sigma_x",
    "SIGMA_X_FLOOR",
]

SIGMA_X_FLOOR = 1e-8


@dataclass(frozen=True)
class NormalMixture:
    """Finite normal mixture with closed-form transform and derivatives."""

    weights: tuple[float, ...]
    means: tuple[float, ...]
    variances: tuple[float, ...]

    def __post_init__(self):
        w = tuple(float(v) for v in self.weights)
        mu = tuple(float(v) for v in self.means)
        var = tuple(float(v) for v in self.variances)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "variances", var)
        if not (len(w) == len(mu) == len(var)) or len(w) == 0:
            raise ValueError("component lists must be non-empty and equal length")
        if any(x <= 0 for x in w) or abs(sum(w) - 1.0) > 1e-12:
            raise ValueError("weights must be positive and sum to 1")
        if any(v <= 0 for v in var):
            raise ValueError("variances must be > 0")

    def pdf(self, x) -> np.ndarray:
        x_arr = np.asarray(x, dtype=float)
        out = np.zeros_like(x_arr)
        for w, mu, var in zip(self.weights, self.means, self.variances):
            out = out + w * np.exp(-0.5 * (x_arr - mu) ** 2 / var) / math.sqrt(
                2.0 * math.pi * var
            )
        return out

    def pdf_derivative(self, x, r: int) -> np.ndarray:
        """r-th derivative of the density (probabilists' Hermite form)."""
        if r == 0:
            return self.pdf(x)
        x_arr = np.asarray(x, dtype=float)
        out = np.zeros_like(x_arr)
        he = hermite_e.hermeval
        coef = np.zeros(r + 1)
        coef[r] = 1.0
        for w, mu, var in zip(self.weights, self.means, self.variances):
            sd = math.sqrt(var)
            z = (x_arr - mu) / sd
            phi = np.exp(-0.5 * z ** 2) / math.sqrt(2.0 * math.pi)
            out = out + w * (-1.0) ** r * he(z, coef) * phi / sd ** (r + 1)
        return out

    def ft(self, t) -> np.ndarray:
        """Fourier transform sum_i w_i exp(i mu_i t - var_i t^2 / 2)."""
        t_arr = np.asarray(t, dtype=float)
        out = np.zeros(t_arr.shape, dtype=complex)
        for w, mu, var in zip(self.weights, self.means, self.variances):
            out = out + w * np.exp(1j * mu * t_arr - 0.5 * var * t_arr ** 2)
        return out

    def ft_abs2(self, t) -> np.ndarray:
        return np.abs(self.ft(t)) ** 2

    def mean(self) -> float:
        return sum(w * mu for w, mu in zip(self.weights, self.means))

    def variance(self) -> float:
        second = sum(
            w * (var + mu ** 2)
            for w, mu, var in zip(self.weights, self.means, self.variances)
        )
        return second - self.mean() ** 2

    def sigma_min(self) -> float:
        return math.sqrt(min(self.variances))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Mixture draws; component choice then Box-Muller normals."""
        from .errors import _box_muller

        u = rng.random(size)
        edges = np.cumsum(self.weights)
        comp = np.searchsorted(edges, u, side="right")
        comp = np.minimum(comp, len(self.weights) - 1)
        z = _box_muller(rng, size)
        mu = np.asarray(self.means)[comp]
        sd = np.sqrt(np.asarray(self.variances))[comp]
        return mu + sd * z


@dataclass(frozen=True)
class RiskReport:
    """The three exact-risk terms at one bandwidth."""

    h: float
    n: int
    bias_term: float
    variance_term: float
    rn_term: float

    def __post_init__(self):
        for name in ("bias_term", "variance_term", "rn_term"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")

    @property
    def mise(self) -> float:
        return self.bias_term + self.variance_term - self.rn_term

    def csv_row(self) -> str:
        cells = (self.h, self.bias_term, self.variance_term, self.rn_term, self.mise)
        return ",".join(f"{v:.17g}" for v in cells)


def _as_model_list(models) -> list[ErrorModel]:
    if isinstance(models, HetSample):
        return models.models_per_observation()
    return list(models)


def _variance_integrand(models, kernel, h, t_nodes):
    taper2 = kft_eval(kernel, t_nodes * h) ** 2
    return taper2 / cf_sum_sq(models, t_nodes)


def _rn_integrand(fx, models, kernel, h, t_nodes):
    from .errors import _group_models

    unique, counts = _group_models(models)
    sum_sq = np.zeros(t_nodes.shape)
    sum_quad = np.zeros(t_nodes.shape)
    for mdl, cnt in zip(unique, counts):
        mod2 = np.abs(np.asarray(mdl.cf(t_nodes))) ** 2
        sum_sq += cnt * mod2
        sum_quad += cnt * mod2 ** 2
    taper2 = kft_eval(kernel, t_nodes * h) ** 2
    return sum_quad / sum_sq ** 2 * fx.ft_abs2(t_nodes) * taper2


def exact_mise(
    fx: NormalMixture,
    models: list[ErrorModel],
    kernel: Kernel,
    h: float,
    quad: QuadratureSpec = QuadratureSpec(),
) -> RiskReport:
    """Exact risk decomposition at bandwidth h.

    bias term: (2 pi)^{-1} integral |f_ft|^2 |K_ft(t h) - 1|^2, split at
    the transform support edge (outside it K_ft = 0, so the integrand is
    |f_ft|^2, integrated out to where the mixture transform vanishes);
    variance term: (2 pi)^{-1} integral K_ft(t h)^2 / sum_k |cf_k|^2;
    subtracted term: see :func:`rn_term`.
    """
    if h <= 0:
        raise ValueError(f"bandwidth must be > 0, got {h}")
    models = _as_model_list(models)
    edge = 1.0 / h
    t_in = quad.nodes(-edge, edge)

    bias_in = fx.ft_abs2(t_in) * (kft_eval(kernel, t_in * h) - 1.0) ** 2
    bias = integrate_values(bias_in, (-edge, edge), quad).real
    # tail: K_ft == 0, integrand |f_ft|^2; mixture transform is dead past
    # edge + 40 / sigma_min
    t_hi = edge + 40.0 / fx.sigma_min()
    t_tail = quad.nodes(edge, t_hi)
    tail = integrate_values(fx.ft_abs2(t_tail), (edge, t_hi), quad).real
    bias += 2.0 * tail

    var_in = _variance_integrand(models, kernel, h, t_in)
    variance = integrate_values(var_in, (-edge, edge), quad).real

    rn_in = _rn_integrand(fx, models, kernel, h, t_in)
    rn = integrate_values(rn_in, (-edge, edge), quad).real

    two_pi = 2.0 * math.pi
    return RiskReport(
        h=h,
        n=len(models),
        bias_term=max(bias / two_pi, 0.0),
        variance_term=variance / two_pi,
        rn_term=rn / two_pi,
    )


def rn_term(
    fx: NormalMixture,
    models: list[ErrorModel],
    kernel: Kernel,
    h: float,
    quad: QuadratureSpec = QuadratureSpec(),
) -> float:
    """Subtracted exact-risk term; equals n^{-1} times a fixed integral
    when all models coincide."""
    models = _as_model_list(models)
    edge = 1.0 / h
    t_in = quad.nodes(-edge, edge)
    rn_in = _rn_integrand(fx, models, kernel, h, t_in)
    return integrate_values(rn_in, (-edge, edge), quad).real / (2.0 * math.pi)


def amise(
    theta_k: float,
    models: list[ErrorModel],
    kernel: Kernel,
    h: float,
    quad: QuadratureSpec = QuadratureSpec(),
) -> float:
    """Asymptotic risk: h^{2k} mu_k^2 theta_k / (k!)^2 plus the variance
    integral (2 pi h)^{-1} integral K_ft(t)^2 / sum_k |cf_k(t/h)|^2 dt."""
    if kernel.order is None:
        raise UnsupportedKernelError("amise needs a kernel of finite even order")
    if theta_k < 0:
        raise ValueError(f"theta_k must be >= 0, got {theta_k}")
    if h <= 0:
        raise ValueError(f"bandwidth must be > 0, got {h}")
    models = _as_model_list(models)
    k = kernel.order
    bias = h ** (2 * k) * kernel.mu_k ** 2 * theta_k / math.factorial(k) ** 2
    t_std = quad.nodes(-1.0, 1.0)
    integrand = kft_eval(kernel, t_std) ** 2 / cf_sum_sq(models, t_std / h)
    variance = integrate_values(integrand, (-1.0, 1.0), quad).real / (
        2.0 * math.pi * h
    )
    return bias + variance


def abias_theta(
    r: int,
    h_r: float,
    theta_next: float,
    models: list[ErrorModel],
    kernel: Kernel,
    quad: QuadratureSpec = QuadratureSpec(),
) -> float:
    """Leading bias of the theta_r estimator at pilot bandwidth h_r.

    Signed sum of (-1)^{k/2} (2 h^k / k!) mu_k theta_{r + k/2} and the
    variance-driven integral (2 pi h^{2r+1})^{-1} integral t^{2r}
    K_ft(t)^2 / sum_k |cf_k(t/h)|^2 dt. The two terms have opposite signs
    for a second-order kernel, so near-cancellation marks a good pilot.
    """
    if kernel.order is None or kernel.order % 2 != 0:
        raise UnsupportedKernelError("abias_theta needs a finite even kernel order")
    if r < 1:
        raise ValueError(f"derivative order must be >= 1, got {r}")
    if h_r <= 0:
        raise ValueError(f"bandwidth must be > 0, got {h_r}")
    models = _as_model_list(models)
    k = kernel.order
    sign = (-1.0) ** (k // 2)
    first = sign * 2.0 * h_r ** k * kernel.mu_k * theta_next / math.factorial(k)
    t_std = quad.nodes(-1.0, 1.0)
    integrand = t_std ** (2 * r) * kft_eval(kernel, t_std) ** 2 / cf_sum_sq(
        models, t_std / h_r
    )
    second = integrate_values(integrand, (-1.0, 1.0), quad).real / (
        2.0 * math.pi * h_r ** (2 * r + 1)
    )
    return first + second


def theta_hat(
    sample: HetSample,
    r: int,
    kernel: Kernel,
    h_r: float,
    quad: QuadratureSpec = QuadratureSpec(),
) -> float:
    """Frequency-domain estimate of theta_r = integral (f^{(r)})^2.

    By the Parseval identity this is (2 pi)^{-1} integral t^{2r}
    |K_ft(t h) Psi(t)|^2 dt over the taper support; non-negative by
    construction.
    """
    if h_r <= 0:
        raise ValueError(f"bandwidth must be > 0, got {h_r}")
    edge = 1.0 / h_r
    t_nodes = quad.nodes(-edge, edge)
    w = np.asarray(psi_n(sample, t_nodes))
    integrand = t_nodes ** (2 * r) * (
        kft_eval(kernel, t_nodes * h_r) * np.abs(w)
    ) ** 2
    return integrate_values(integrand, (-edge, edge), quad).real / (2.0 * math.pi)


def normal_theta(r: int, sigma: float) -> float:
    """theta_r of a N(0, sigma^2) density: (2r)! / ((2 sigma)^{2r+1} r! sqrt(pi))."""
    if r < 0:
        raise ValueError(f"r must be >= 0, got {r}")
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    return math.factorial(2 * r) / (
        (2.0 * sigma) ** (2 * r + 1) * math.factorial(r) * math.sqrt(math.pi)
    )


def theta_normal_ref(k: int, sigma_x: float) -> float:
    """Normal-reference value of theta_{2k} for a kernel of even order k."""
    if k < 1 or k % 2 != 0:
        raise ValueError(f"kernel order k must be a positive even integer, got {k}")
    return normal_theta(2 * k, sigma_x)


def estimate_sigma_x(sample: HetSample) -> float:
    """Variance estimate for the latent variable.

    Biased sample variance of the observations minus the average error
    variance contribution, floored at a small positive value so the
    normal-reference rule stays defined on adversarial samples.
    """
    ys = sample.ys
    sample_var = float(np.mean(ys ** 2) - np.mean(ys) ** 2)
    means = np.empty(sample.n)
    seconds = np.empty(sample.n)
    moments = [error_moments(m) for m in sample.models]
    for j, idx in enumerate(sample.model_index):
        means[j], seconds[j] = moments[idx]
    error_var = float(np.mean(seconds) - np.mean(means) ** 2)
    return max(sample_var - error_var, SIGMA_X_FLOOR)
