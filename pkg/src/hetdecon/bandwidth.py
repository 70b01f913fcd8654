"""Two-stage plug-in bandwidth selection.

The chain for a second-order kernel runs: latent-variance estimate ->
normal-reference theta_4 -> pilot bandwidth h_3 -> theta_3 estimate ->
pilot h_2 -> theta_2 estimate -> final bandwidth minimizing the
asymptotic risk on a geometric grid. Pilot bandwidths minimize the
absolute leading bias of the corresponding theta estimator, whose two
terms have opposite signs, so near-cancellation is the selection signal.

All grid searches are deterministic with ties broken toward the smaller
bandwidth. :class:`PluginEngine` precomputes every data-independent
integral for a fixed error-model assignment, which makes per-sample
selection cheap inside Monte Carlo loops.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ErrorModel, HetSample, _group_models, cf_sum_sq
from .exceptions import DegenerateDenominatorError, UnsupportedKernelError
from .kernels import K2, Kernel, kft_eval
from .quadrature import QuadratureSpec, empirical_cf
from .risk import estimate_sigma_x, theta_normal_ref

__all__ = [
    "PluginConfig",
    "PluginTrace",
    "PluginEngine",
    "default_h_grid",
    "select_stage_bandwidth",
    "minimize_amise",
    "plugin_bandwidth",
]


@dataclass(frozen=True)
class PluginConfig:
    """Grid policy for every minimization in the chain.

    With ``h_min``/``h_max`` unset, the grid spans
    [min_factor, max_factor] x IQR(sample) / n^{1/5}.
    """

    grid_count: int = 61
    h_min: float | None = None
    h_max: float | None = None
    min_factor: float = 0.05
    max_factor: float = 5.0

    def __post_init__(self):
        if self.grid_count < 11:
            raise ValueError(f"grid_count must be >= 11, got {self.grid_count}")
        if (self.h_min is None) != (self.h_max is None):
            raise ValueError("set both h_min and h_max or neither")
        if self.h_min is not None:
            if not (0 < self.h_min < self.h_max):
                raise ValueError("need 0 < h_min < h_max")
        if not (0 < self.min_factor < self.max_factor):
            raise ValueError("need 0 < min_factor < max_factor")


@dataclass
class PluginTrace:
    """Intermediates of one plug-in run."""

    sigma_x: float
    theta4: float
    h3: float
    theta3: float
    h2: float
    theta2: float
    h: float
    h_grid: np.ndarray
    degenerate_sample: bool = False

    def lines(self) -> list[str]:
        return [
            f"sigma_x   = {self.sigma_x:.17g}",
            f"theta4    = {self.theta4:.17g}",
            f"h3        = {self.h3:.17g}",
            f"theta3    = {self.theta3:.17g}",
            f"h2        = {self.h2:.17g}",
            f"theta2    = {self.theta2:.17g}",
            f"h         = {self.h:.17g}",
            f"grid      = [{self.h_grid[0]:.17g}, {self.h_grid[-1]:.17g}] "
            f"({self.h_grid.size} points)",
            f"degenerate_sample = {self.degenerate_sample}",
        ]


def default_h_grid(ys: np.ndarray, cfg: PluginConfig) -> np.ndarray:
    """Geometric bandwidth grid scaled by sample spread and size."""
    if cfg.h_min is not None:
        return np.geomspace(cfg.h_min, cfg.h_max, cfg.grid_count)
    ys = np.asarray(ys, dtype=float)
    q75, q25 = np.percentile(ys, [75.0, 25.0])
    iqr = float(q75 - q25)
    scale = iqr if iqr > 0 else 1.0
    base = scale / ys.size ** 0.2
    return np.geomspace(cfg.min_factor * base, cfg.max_factor * base, cfg.grid_count)


class PluginEngine:
    """Plug-in machinery for one fixed error-model assignment.

    Precomputes, per grid bandwidth h: the squared-transform denominator
    on scaled Simpson nodes, the pilot-bias integrals for r = 3 and
    r = 2, and the asymptotic variance integral. ``run`` then needs only
    the observations. Instances are immutable after construction and may
    be shared across threads.
    """

    def __init__(
        self,
        models: list[ErrorModel] | HetSample,
        kernel: Kernel = K2,
        quad: QuadratureSpec = QuadratureSpec(),
        h_grid: np.ndarray | None = None,
        stage_orders: tuple[int, ...] = (3, 2),
    ):
        if isinstance(models, HetSample):
            models = models.models_per_observation()
        if kernel.order is None or kernel.order % 2 != 0:
            raise UnsupportedKernelError(
                "plug-in selection supports only kernels of finite even order"
            )
        if h_grid is None:
            raise ValueError("PluginEngine needs an explicit h_grid")
        self.models = list(models)
        self.n = len(self.models)
        self.kernel = kernel
        self.quad = quad
        self.h_grid = np.asarray(h_grid, dtype=float)
        if np.any(np.diff(self.h_grid) <= 0) or self.h_grid[0] <= 0:
            raise ValueError("h_grid must be positive and strictly increasing")
        self.stage_orders = stage_orders

        self._u = quad.nodes(-1.0, 1.0)
        self._w = quad.weights(-1.0, 1.0)
        self._taper2 = kft_eval(kernel, self._u) ** 2
        # denominator sum_k |cf_k(u/h)|^2 per grid h (rows) and node (cols)
        unique, counts = _group_models(self.models)
        denom = np.zeros((self.h_grid.size, self._u.size))
        for hi, h in enumerate(self.h_grid):
            total = np.zeros(self._u.size)
            for mdl, cnt in zip(unique, counts):
                total += cnt * np.abs(np.asarray(mdl.cf(self._u / h))) ** 2
            denom[hi] = total
        self._denom = denom
        # bandwidths whose denominator underflows where the taper is
        # still positive get +inf objectives and are never selected
        self._feasible = ~np.any((denom < 1e-300) & (self._taper2 > 0.0), axis=1)
        denom_safe = np.maximum(denom, 1e-300)
        # stage integrals V_r(h) = int u^{2r} K_ft(u)^2 / denom(h) du and
        # the asymptotic variance integral (r = 0)
        self._stage_integral = {}
        for r in (0,) + tuple(stage_orders):
            powers = self._u ** (2 * r) if r > 0 else 1.0
            vals = (powers * self._taper2 / denom_safe) @ self._w
            self._stage_integral[r] = np.where(self._feasible, vals, np.inf)
        self._denom_by_h = {
            float(h): denom[hi] for hi, h in enumerate(self.h_grid)
        }

    # -- data-independent pieces -------------------------------------

    def abias_values(self, r: int, theta_next: float) -> np.ndarray:
        """Leading theta_r-estimator bias on the whole grid."""
        k = self.kernel.order
        sign = (-1.0) ** (k // 2)
        first = (
            sign
            * 2.0
            * self.h_grid ** k
            * self.kernel.mu_k
            * theta_next
            / math.factorial(k)
        )
        second = self._stage_integral[r] / (
            2.0 * math.pi * self.h_grid ** (2 * r + 1)
        )
        return first + second

    def amise_values(self, theta_k: float) -> np.ndarray:
        k = self.kernel.order
        bias = (
            self.h_grid ** (2 * k)
            * self.kernel.mu_k ** 2
            * theta_k
            / math.factorial(k) ** 2
        )
        variance = self._stage_integral[0] / (2.0 * math.pi * self.h_grid)
        return bias + variance

    def _argmin_feasible(self, vals: np.ndarray) -> float:
        if not np.any(self._feasible):
            raise DegenerateDenominatorError(
                "squared-transform sum vanishes at every grid bandwidth"
            )
        return float(self.h_grid[int(np.argmin(vals))])

    def select_stage(self, r: int, theta_next: float) -> float:
        return self._argmin_feasible(np.abs(self.abias_values(r, theta_next)))

    def minimize_amise(self, theta_k: float) -> float:
        return self._argmin_feasible(self.amise_values(theta_k))

    # -- data-dependent pieces ----------------------------------------

    def psi_on_scaled_nodes(self, ys: np.ndarray, h: float) -> np.ndarray:
        """Psi weight at nodes u/h, using the cached denominator when h
        is a grid point."""
        ys = np.asarray(ys, dtype=float)
        t_nodes = self._u / h
        denom = self._denom_by_h.get(float(h))
        if denom is None:
            denom = cf_sum_sq(self.models, t_nodes)
        num = np.zeros(t_nodes.shape, dtype=complex)
        # group observations by model identity to share cf evaluations
        key_rows: dict[tuple, list[int]] = {}
        for j, mdl in enumerate(self.models):
            key_rows.setdefault(mdl.cache_key(), []).append(j)
        for key, rows in key_rows.items():
            mdl = self.models[rows[0]]
            cf_vals = np.asarray(mdl.cf(t_nodes))
            num += np.conj(cf_vals) * len(rows) * empirical_cf(ys[rows], t_nodes)
        # an underflowed denominator can only occur where the taper is
        # exactly zero (endpoints of a feasible bandwidth); the weight is
        # irrelevant there, so zero it instead of dividing by zero
        dead = denom < 1e-300
        if np.any(dead):
            out = np.zeros(t_nodes.shape, dtype=complex)
            np.divide(num, denom, out=out, where=~dead)
            return out
        return num / denom

    def theta_hat(self, ys: np.ndarray, r: int, h: float) -> float:
        w = self.psi_on_scaled_nodes(ys, h)
        integrand = (self._u / h) ** (2 * r) * self._taper2 * np.abs(w) ** 2
        return float((integrand @ self._w) / (2.0 * math.pi * h))

    def density_on_grid(
        self, ys: np.ndarray, h: float, x_grid: np.ndarray, r: int = 0
    ) -> np.ndarray:
        """Estimator values on x_grid; matches estimate_density with the
        same nodes."""
        t_nodes = self._u / h
        w = self.psi_on_scaled_nodes(ys, h)
        integrand = kft_eval(self.kernel, self._u) * w
        if r > 0:
            integrand = integrand * (-1j * t_nodes) ** r
        weighted = (self._w / h) * integrand / (2.0 * math.pi)
        x = np.asarray(x_grid, dtype=float)
        out = np.empty(x.size)
        for lo in range(0, x.size, 64):
            xb = x[lo : lo + 64]
            out[lo : lo + 64] = (
                np.exp(-1j * xb[:, None] * t_nodes[None, :]) @ weighted
            ).real
        return out

    def run(self, ys: np.ndarray) -> tuple[float, PluginTrace]:
        """Full plug-in chain on one set of observations."""
        ys = np.asarray(ys, dtype=float)
        if ys.size != self.n:
            raise ValueError(f"expected {self.n} observations, got {ys.size}")
        if np.ptp(ys) == 0.0:
            h = float(self.h_grid[0])
            trace = PluginTrace(
                sigma_x=0.0, theta4=math.nan, h3=math.nan, theta3=math.nan,
                h2=math.nan, theta2=math.nan, h=h, h_grid=self.h_grid,
                degenerate_sample=True,
            )
            return h, trace
        sample = HetSample.from_models(ys, self.models)
        var_x = estimate_sigma_x(sample)
        sigma_x = math.sqrt(var_x)
        theta4 = theta_normal_ref(self.kernel.order, sigma_x)
        h3 = self.select_stage(3, theta4)
        theta3 = self.theta_hat(ys, 3, h3)
        h2 = self.select_stage(2, theta3)
        theta2 = self.theta_hat(ys, 2, h2)
        h = self.minimize_amise(theta2)
        trace = PluginTrace(
            sigma_x=sigma_x, theta4=theta4, h3=h3, theta3=theta3,
            h2=h2, theta2=theta2, h=h, h_grid=self.h_grid,
        )
        return h, trace


def select_stage_bandwidth(
    sample: HetSample,
    r: int,
    theta_next: float,
    kernel: Kernel = K2,
    quad: QuadratureSpec = QuadratureSpec(),
    h_grid: np.ndarray | None = None,
    cfg: PluginConfig = PluginConfig(),
) -> float:
    """Pilot bandwidth minimizing |leading bias| of the theta_r estimate."""
    if h_grid is None:
        h_grid = default_h_grid(sample.ys, cfg)
    engine = PluginEngine(sample, kernel, quad, h_grid, stage_orders=(r,))
    return engine.select_stage(r, theta_next)


def minimize_amise(
    theta_k: float,
    models: list[ErrorModel] | HetSample,
    kernel: Kernel = K2,
    quad: QuadratureSpec = QuadratureSpec(),
    h_grid: np.ndarray | None = None,
) -> float:
    """Grid argmin of the asymptotic risk; ties go to the smaller h."""
    if h_grid is None:
        raise ValueError("minimize_amise needs an explicit h_grid")
    engine = PluginEngine(models, kernel, quad, h_grid, stage_orders=())
    return engine.minimize_amise(theta_k)


def plugin_bandwidth(
    sample: HetSample,
    kernel: Kernel = K2,
    quad: QuadratureSpec = QuadratureSpec(),
    cfg: PluginConfig = PluginConfig(),
) -> tuple[float, PluginTrace]:
    """Data-driven bandwidth for the deconvolution estimator.

    Deterministic given (sample, config); a sample of identical values
    short-circuits to the grid minimum with ``degenerate_sample`` set.
    """
    h_grid = default_h_grid(sample.ys, cfg)
    engine = PluginEngine(sample, kernel, quad, h_grid)
    return engine.run(sample.ys)
