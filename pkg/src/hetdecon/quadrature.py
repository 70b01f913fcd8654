"""Complex-valued quadrature on compact intervals and the empirical
characteristic function.

All frequency-domain integrals in this package run through the composite
Simpson rule defined here. Integrands are smooth and compactly supported
(kernel transforms vanish outside [-1, 1]), so a fixed equispaced rule is
predictable, deterministic and grid-independent.

Fourier convention: ``g_ft(t) = integral exp(i t x) g(x) dx``, so the
characteristic function of a sample is ``mean(exp(i t y))``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .exceptions import NumericalIntegrationError

__all__ = [
    "QuadratureSpec",
    "ComplexFunctionTable",
    "empirical_cf",
    "integrate",
    "integrate_values",
]

# exp() on blocks of at most this many entries keeps peak memory modest
_CHUNK = 2 ** 18


@dataclass(frozen=True)
class QuadratureSpec:
    """Composite Simpson rule on an odd equispaced grid.

    Parameters
    ----------
    node_count : int
        Number of quadrature nodes, odd and >= 3. The default 4097 gives
        integration error well below 1e-8 for the shipped kernels at
        desk-scale bandwidths.
    """

    node_count: int = 4097

    def __post_init__(self):
        if self.node_count < 3 or self.node_count % 2 == 0:
            raise ValueError(
                f"node_count must be an odd integer >= 3, got {self.node_count}"
            )

    def nodes(self, a: float, b: float) -> np.ndarray:
        if not (a <= b):
            raise ValueError(f"interval endpoints out of order: [{a}, {b}]")
        return np.linspace(a, b, self.node_count)

    def weights(self, a: float, b: float) -> np.ndarray:
        """Simpson weights: (step/3) * [1, 4, 2, 4, ..., 2, 4, 1]."""
        n = self.node_count
        step = (b - a) / (n - 1)
        w = np.full(n, 2.0)
        w[1::2] = 4.0
        w[0] = w[-1] = 1.0
        return w * (step / 3.0)


@dataclass(frozen=True)
class ComplexFunctionTable:
    """Values of a complex function on the Simpson nodes of an interval.

    ``conjugate_symmetric=True`` asserts value(-t) == conj(value(t)) at
    paired nodes, which holds for the Fourier transform of any real
    function; construction fails if the table violates it beyond 1e-12.
    """

    t_lo: float
    t_hi: float
    values: np.ndarray
    conjugate_symmetric: bool = False

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        object.__setattr__(self, "values", values)
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            raise NumericalIntegrationError(
                f"non-finite table value at node index {bad}"
            )
        if self.conjugate_symmetric:
            if not np.isclose(self.t_lo, -self.t_hi):
                raise ValueError("conjugate symmetry needs an interval [-T, T]")
            dev = self.conjugate_deviation()
            if dev > 1e-12:
                raise ValueError(
                    f"table violates conjugate symmetry by {dev:.3e}"
                )

    def conjugate_deviation(self) -> float:
        return float(np.max(np.abs(self.values - np.conj(self.values[::-1]))))

    def integrate(self) -> complex:
        n = len(self.values)
        spec = QuadratureSpec(node_count=n)
        return complex(np.dot(spec.weights(self.t_lo, self.t_hi), self.values))


def empirical_cf(ys: Sequence[float], t) -> complex | np.ndarray:
    """Empirical characteristic function ``mean(exp(i t y))``.

    ``t`` may be a scalar or an array; the result matches its shape.
    Satisfies |value| <= 1 up to rounding, value at t=0 exactly 1, and
    value(-t) = conj(value(t)) exactly.
    """
    ys = np.asarray(ys, dtype=float)
    if ys.size == 0:
        raise ValueError("empirical_cf: empty sample")
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty(t_arr.shape, dtype=complex)
    block = max(1, _CHUNK // ys.size)
    for lo in range(0, t_arr.size, block):
        tb = t_arr[lo : lo + block]
        out[lo : lo + block] = np.exp(1j * tb[:, None] * ys[None, :]).mean(axis=1)
    if np.isscalar(t) or np.ndim(t) == 0:
        return complex(out[0])
    return out


def integrate(
    f: Callable[[np.ndarray], np.ndarray],
    interval: tuple[float, float],
    quad: QuadratureSpec = QuadratureSpec(),
) -> complex:
    """Composite-Simpson integral of a vectorized complex function.

    Exact for polynomials of degree <= 3 on each panel. Raises
    NumericalIntegrationError naming the offending node if ``f`` returns
    a non-finite value.
    """
    a, b = interval
    nodes = quad.nodes(a, b)
    values = np.asarray(f(nodes), dtype=complex)
    if values.shape != nodes.shape:
        raise ValueError("integrand must return one value per node")
    return integrate_values(values, interval, quad)


def integrate_values(
    values: np.ndarray,
    interval: tuple[float, float],
    quad: QuadratureSpec = QuadratureSpec(),
) -> complex:
    """Simpson integral of pre-evaluated node values."""
    a, b = interval
    values = np.asarray(values, dtype=complex)
    if values.shape != (quad.node_count,):
        raise ValueError(
            f"expected {quad.node_count} node values, got shape {values.shape}"
        )
    if not np.all(np.isfinite(values)):
        bad = int(np.flatnonzero(~np.isfinite(values))[0])
        t_bad = a + (b - a) * bad / (quad.node_count - 1)
        raise NumericalIntegrationError(
            f"non-finite integrand value at node {bad} (t = {t_bad:g})"
        )
    return complex(np.dot(quad.weights(a, b), values))
