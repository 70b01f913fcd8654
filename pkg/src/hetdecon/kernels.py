"""Deconvolution kernels with compactly supported Fourier transforms.

Two kernels ship: the sinc kernel ``sin(x)/(pi x)`` whose transform is the
indicator of [-1, 1], and a second-order kernel whose transform is
``(1 - t^2)^3`` on [-1, 1]. Both transforms vanish outside [-1, 1] and
equal 1 at t = 0, so every frequency integral in the package runs over a
compact interval. Any kernel with those two properties can be added.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial, pi

import numpy as np

from .exceptions import UnsupportedKernelError

__all__ = ["Kernel", "SINC", "K2", "KERNELS", "get_kernel",
           "kft_eval", "kernel_eval", "kernel_moment"]


@dataclass(frozen=True)
class Kernel:
    """A kernel known in both domains.

    ``order`` is the smallest j >= 1 with nonzero moment mu_j (None for
    the sinc kernel, whose higher moments do not absolutely converge);
    ``mu_k`` is that moment's value; ``roughness`` is integral of K^2.
    """

    name: str
    order: int | None
    mu_k: float | None
    roughness: float


SINC = Kernel(name="sinc", order=None, mu_k=None, roughness=1.0 / pi)
K2 = Kernel(name="k2", order=2, mu_k=6.0, roughness=1024.0 / (3003.0 * pi))

KERNELS = {SINC.name: SINC, K2.name: K2}

# mu_j for the k2 kernel, j = 0..6, read off the Taylor coefficients of
# (1 - t^2)^3 via mu_j = i^{-j} d^j/dt^j at 0
_K2_MOMENTS = (1.0, 0.0, 6.0, 0.0, 72.0, 0.0, 720.0)

# below this |x| the k2 closed form loses ~x^{-6} digits to cancellation;
# the power series is exact to machine precision out to |x| ~ 2
_K2_SERIES_CUTOFF = 1.0
_K2_SERIES_TERMS = 12
_K2_SERIES_COEF = np.array(
    [
        (-1.0) ** m
        * 48.0
        / (factorial(2 * m) * (2 * m + 1) * (2 * m + 3) * (2 * m + 5) * (2 * m + 7))
        / pi
        for m in range(_K2_SERIES_TERMS)
    ]
)


def get_kernel(name: str) -> Kernel:
    try:
        return KERNELS[name]
    except KeyError:
        raise ValueError(
            f"unknown kernel {name!r}; available: {sorted(KERNELS)}"
        ) from None


def kft_eval(kernel: Kernel, t) -> float | np.ndarray:
    """Fourier transform of the kernel, zero outside [-1, 1]."""
    t_arr = np.asarray(t, dtype=float)
    inside = np.abs(t_arr) <= 1.0
    if kernel.name == "sinc":
        out = inside.astype(float)
    elif kernel.name == "k2":
        out = np.where(inside, (1.0 - t_arr ** 2) ** 3, 0.0)
    else:
        raise ValueError(f"unknown kernel {kernel.name!r}")
    if np.ndim(t) == 0:
        return float(out)
    return out


def _k2_series(x: np.ndarray) -> np.ndarray:
    x2 = x ** 2
    out = np.full_like(x, _K2_SERIES_COEF[-1])
    for c in _K2_SERIES_COEF[-2::-1]:
        out = out * x2 + c
    return out


def _k2_closed(x: np.ndarray) -> np.ndarray:
    return 48.0 * np.cos(x) * (1.0 - 15.0 / x ** 2) / (pi * x ** 4) - 144.0 * np.sin(
        x
    ) * (2.0 - 5.0 / x ** 2) / (pi * x ** 5)


def kernel_eval(kernel: Kernel, x) -> float | np.ndarray:
    """Time-domain kernel value; removable singularities handled."""
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    if kernel.name == "sinc":
        # sin(x)/(pi x); np.sinc(y) = sin(pi y)/(pi y)
        out = np.sinc(x_arr / pi) / pi
    elif kernel.name == "k2":
        small = np.abs(x_arr) < _K2_SERIES_CUTOFF
        out = np.empty_like(x_arr)
        if np.any(small):
            out[small] = _k2_series(x_arr[small])
        if np.any(~small):
            out[~small] = _k2_closed(x_arr[~small])
    else:
        raise ValueError(f"unknown kernel {kernel.name!r}")
    if np.ndim(x) == 0:
        return float(out[0])
    return out


def kernel_moment(kernel: Kernel, j: int) -> float:
    """Moment mu_j = integral x^j K(x) dx, available for k2 with j <= 6."""
    if kernel.name != "k2":
        raise UnsupportedKernelError(
            f"moments of {kernel.name!r} of order >= 1 do not absolutely converge"
        )
    if not (0 <= j <= 6):
        raise ValueError(f"moment order out of range (0..6): {j}")
    return _K2_MOMENTS[j]
