"""Deconvolution density estimators.

The estimate is the inverse Fourier transform of a kernel-tapered weight
function W(t):

    f_hat(x) = (2 pi)^{-1} integral (-it)^r exp(-itx) K_ft(t h) W(t) dt

with the integral running over exactly the kernel transform's support
[-1/h, 1/h]. Three weight functions are available:

``psi``    per-observation error transforms in a ratio that downweights
           heavily contaminated observations,
``phi``    a ratio needing only the unordered set of error transforms,
``ridge``  a replicate-based estimate of the weight when the error
           distributions are unknown.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import HetSample, ReplicatedSample, cf_sum_sq, empirical_error_cf
from .quadrature import QuadratureSpec, empirical_cf
from .exceptions import NumericalIntegrationError, ZeroDenominatorError
from .kernels import Kernel, kft_eval

__all__ = [
    "EstimatorConfig",
    "DensityEstimate",
    "psi_n",
    "phi_n",
    "phi_hat_ridge",
    "estimate_density",
    "postprocess_density",
]

_WEIGHT_SOURCES = ("psi", "phi", "ridge")

# x-rows per exp() block when forming the inversion matrix
_X_BLOCK = 64


@dataclass(frozen=True)
class EstimatorConfig:
    """Everything needed to evaluate the estimator on a grid.

    ``ridge`` is required (and only used) when weight_source == "ridge".
    ``derivative_order`` r > 0 estimates the r-th derivative instead of
    the density itself.
    """

    kernel: Kernel
    h: float
    x_grid: np.ndarray
    quad: QuadratureSpec = field(default_factory=QuadratureSpec)
    weight_source: str = "psi"
    ridge: float | None = None
    derivative_order: int = 0

    def __post_init__(self):
        object.__setattr__(self, "x_grid", np.asarray(self.x_grid, dtype=float))
        if self.h <= 0:
            raise ValueError(f"bandwidth must be > 0, got {self.h}")
        if self.x_grid.ndim != 1 or self.x_grid.size == 0:
            raise ValueError("x_grid must be a non-empty 1-d array")
        if np.any(np.diff(self.x_grid) <= 0):
            raise ValueError("x_grid must be strictly increasing")
        if self.weight_source not in _WEIGHT_SOURCES:
            raise ValueError(
                f"weight_source must be one of {_WEIGHT_SOURCES}, "
                f"got {self.weight_source!r}"
            )
        if self.weight_source == "ridge" and (self.ridge is None or self.ridge <= 0):
            raise ValueError("ridge weight source needs a positive ridge value")
        if self.derivative_order < 0:
            raise ValueError("derivative_order must be >= 0")


@dataclass
class DensityEstimate:
    """Estimator values on a grid plus evaluation metadata.

    ``max_imag_discarded`` is the largest imaginary residue dropped when
    taking the real part; conjugate symmetry of the integrand keeps it at
    rounding level (checked by ``imag_ok``).
    """

    x_grid: np.ndarray
    values: np.ndarray
    max_imag_discarded: float
    h: float
    weight_source: str
    kernel_name: str
    node_count: int
    derivative_order: int = 0

    @property
    def imag_ok(self) -> bool:
        scale = float(np.max(np.abs(self.values)))
        if scale == 0.0:
            return self.max_imag_discarded == 0.0
        return self.max_imag_discarded < 1e-8 * scale


def psi_n(sample: HetSample, t) -> complex | np.ndarray:
    """Error-weighted empirical Fourier quotient.

    Numerator: sum_j conj(f_eps_j_ft(t)) exp(i t y_j); denominator: sum of
    squared transform moduli. Conjugate-symmetric in t with value 1 at 0.
    """
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    denom = cf_sum_sq(sample, t_arr)
    num = _psi_numerator(sample, t_arr)
    out = num / denom
    if np.ndim(t) == 0:
        return complex(out[0])
    return out


def _psi_numerator(sample: HetSample, t_arr: np.ndarray) -> np.ndarray:
    num = np.zeros(t_arr.shape, dtype=complex)
    for k, model in enumerate(sample.models):
        ys_k = sample.ys[sample.model_index == k]
        if ys_k.size == 0:
            continue
        cf_k = np.asarray(model.cf(t_arr))
        num += np.conj(cf_k) * ys_k.size * empirical_cf(ys_k, t_arr)
    return num


def phi_n(sample: HetSample, t) -> complex | np.ndarray:
    """Unordered-set variant: sum_j exp(i t y_j) / sum_k f_eps_k_ft(t).

    Equals psi_n when all observations share one symmetric (real-cf)
    model; for non-symmetric mixes the denominator can vanish, which
    raises ZeroDenominatorError.
    """
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    counts = sample.model_counts()
    denom = np.zeros(t_arr.shape, dtype=complex)
    for k, model in enumerate(sample.models):
        if counts[k] == 0:
            continue
        denom += counts[k] * np.asarray(model.cf(t_arr))
    bad = np.abs(denom) <= 1e-12 * sample.n
    if np.any(bad):
        t_bad = float(t_arr[np.argmax(bad)])
        raise ZeroDenominatorError(
            f"characteristic-function sum vanishes at t = {t_bad:g}"
        )
    num = sample.n * empirical_cf(sample.ys, t_arr)
    out = num / denom
    if np.ndim(t) == 0:
        return complex(out[0])
    return out


def phi_hat_ridge(reps: ReplicatedSample, t, ridge: float) -> complex | np.ndarray:
    """Replicate-based weight for unknown symmetric error distributions.

    Numerator: mean over within-subject pairs of exp(i t (Y1 + Y2)/2);
    denominator: the ridged estimate of mean |f_eps_ft(t/2)|^2, which is
    bounded away from zero, so the ratio is always defined.
    """
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    sums, _ = reps.pair_halves()
    num = empirical_cf(sums, t_arr)
    denom = empirical_error_cf(reps, t_arr, ridge)
    out = num / denom
    if np.ndim(t) == 0:
        return complex(out[0])
    return out


def _weight_values(data, cfg: EstimatorConfig, t_nodes: np.ndarray) -> np.ndarray:
    if cfg.weight_source == "psi":
        if not isinstance(data, HetSample):
            raise ValueError("psi weight source needs a HetSample")
        return psi_n(data, t_nodes)
    if cfg.weight_source == "phi":
        if not isinstance(data, HetSample):
            raise ValueError("phi weight source needs a HetSample")
        return phi_n(data, t_nodes)
    if not isinstance(data, ReplicatedSample):
        raise ValueError("ridge weight source needs a ReplicatedSample")
    return phi_hat_ridge(data, t_nodes, cfg.ridge)


def estimate_density(data, cfg: EstimatorConfig) -> DensityEstimate:
    """Evaluate the deconvolution estimator (or a derivative) on a grid.

    ``data`` is a HetSample for the psi/phi weights or a ReplicatedSample
    for the ridge weight. Returns raw estimator values: no clipping or
    renormalization is applied (see :func:`postprocess_density`).
    """
    h = cfg.h
    t_nodes = cfg.quad.nodes(-1.0 / h, 1.0 / h)
    w_quad = cfg.quad.weights(-1.0 / h, 1.0 / h)
    weight = np.asarray(_weight_values(data, cfg, t_nodes), dtype=complex)
    taper = kft_eval(cfg.kernel, t_nodes * h)
    r = cfg.derivative_order
    integrand = taper * weight
    if r > 0:
        integrand = integrand * (-1j * t_nodes) ** r
    weighted = w_quad * integrand / (2.0 * np.pi)

    x = cfg.x_grid
    values = np.empty(x.size)
    max_imag = 0.0
    for lo in range(0, x.size, _X_BLOCK):
        xb = x[lo : lo + _X_BLOCK]
        block = np.exp(-1j * xb[:, None] * t_nodes[None, :]) @ weighted
        values[lo : lo + _X_BLOCK] = block.real
        if block.size:
            max_imag = max(max_imag, float(np.max(np.abs(block.imag))))
    if not np.all(np.isfinite(values)):
        raise NumericalIntegrationError("estimator produced non-finite values")
    return DensityEstimate(
        x_grid=x,
        values=values,
        max_imag_discarded=max_imag,
        h=h,
        weight_source=cfg.weight_source,
        kernel_name=cfg.kernel.name,
        node_count=cfg.quad.node_count,
        derivative_order=r,
    )


def postprocess_density(estimate: DensityEstimate) -> DensityEstimate:
    """Presentation-only variant: clip negatives and renormalize to mass 1.

    The raw estimator is what the risk formulas describe; use this only
    for display.
    """
    if estimate.derivative_order != 0:
        raise ValueError("postprocessing applies to density estimates only")
    clipped = np.clip(estimate.values, 0.0, None)
    mass = np.trapezoid(clipped, estimate.x_grid)
    if mass > 0:
        clipped = clipped / mass
    return DensityEstimate(
        x_grid=estimate.x_grid,
        values=clipped,
        max_imag_discarded=estimate.max_imag_discarded,
        h=estimate.h,
        weight_source=estimate.weight_source,
        kernel_name=estimate.kernel_name,
        node_count=estimate.node_count,
        derivative_order=0,
    )
