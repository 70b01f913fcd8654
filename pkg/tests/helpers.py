"""Independent oracle implementations used across the test suite.

Everything here is deliberately coded from scratch (plain loops, its own
Simpson weights) so that agreement with the package is a genuine
cross-check rather than a tautology.
"""

from __future__ import annotations

import numpy as np

from hetdecon import kernel_eval, kft_eval


def simpson_weights(a: float, b: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    nodes = np.linspace(a, b, n)
    w = np.full(n, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return nodes, w * ((b - a) / (n - 1) / 3.0)


def classical_kde(ys, kernel, h, x_grid) -> np.ndarray:
    """(n h)^{-1} sum K((x - y_j)/h), the error-free reference."""
    ys = np.asarray(ys, float)
    x_grid = np.asarray(x_grid, float)
    out = np.empty(x_grid.size)
    for i, x in enumerate(x_grid):
        out[i] = kernel_eval(kernel, (x - ys) / h).sum() / (ys.size * h)
    return out


def homoscedastic_reference(ys, error_cf, kernel, h, x_grid, n_nodes=4097):
    """Classical homoscedastic deconvolution estimator.

    (2 pi)^{-1} integral exp(-itx) K_ft(t h) mean(exp(i t y)) / cf(t) dt
    over the taper support, with its own Simpson rule.
    """
    ys = np.asarray(ys, float)
    t, w = simpson_weights(-1.0 / h, 1.0 / h, n_nodes)
    ecf = np.exp(1j * t[:, None] * ys[None, :]).mean(axis=1)
    integrand = kft_eval(kernel, t * h) * ecf / error_cf(t)
    out = np.empty(np.asarray(x_grid).size)
    for i, x in enumerate(np.asarray(x_grid, float)):
        out[i] = (w * np.exp(-1j * t * x) * integrand).sum().real / (2 * np.pi)
    return out


def mc_standard_error(values) -> float:
    values = np.asarray(values, float)
    return float(values.std(ddof=1) / np.sqrt(values.size))
