"""Measurement-error models known through their characteristic functions.

Every model satisfies cf(0) = 1, |cf(t)| <= 1 and cf(-t) = conj(cf(t)).
Degenerate, Laplace, StableSymmetric and EmpiricalSymmetric have symmetric
densities, so their characteristic functions are real.

Also defined here: the contaminated-sample containers, replicate-based
error learning (pooled variance, empirical squared transform), the
scale-family identification scan for linearly growing error variances,
and the divergence diagnostic for unbounded error scales.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .exceptions import (
    DegenerateDenominatorError,
    IdentificationError,
    InfiniteVarianceError,
    InsufficientReplicatesError,
)
from .quadrature import empirical_cf

__all__ = [
    "ErrorModel",
    "Degenerate",
    "Normal",
    "Laplace",
    "StableSymmetric",
    "Averaged",
    "EmpiricalSymmetric",
    "HetSample",
    "ReplicatedSample",
    "char_fn",
    "averaged_model",
    "error_moments",
    "cf_sum_sq",
    "estimate_error_variance",
    "empirical_error_cf",
    "estimate_linear_variance_param",
    "identify_linear_variance",
    "consistency_diagnostic",
    "parse_models_config",
    "format_model_line",
]


def _box_muller(rng: np.random.Generator, size: int) -> np.ndarray:
    """Standard normal draws from two uniform streams."""
    u1 = 1.0 - rng.random(size)  # in (0, 1]
    u2 = rng.random(size)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


class ErrorModel:
    """Base class; concrete models implement cf, moments and sampling."""

    def cf(self, t) -> complex | np.ndarray:
        raise NotImplementedError

    def moments(self) -> tuple[float, float]:
        """(mean, second moment); raises if the variance is infinite."""
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def cache_key(self) -> tuple:
        """Hashable identity used to group equal models in sums."""
        raise NotImplementedError

    def _wrap(self, t, values) -> complex | np.ndarray:
        if np.ndim(t) == 0:
            return complex(np.asarray(values, dtype=complex).item())
        return np.asarray(values, dtype=complex)


@dataclass(frozen=True)
class Degenerate(ErrorModel):
    """Point mass at zero: error-free observation."""

    def cf(self, t):
        return self._wrap(t, np.ones_like(np.asarray(t, dtype=float)))

    def moments(self):
        return (0.0, 0.0)

    def sample(self, rng, size):
        return np.zeros(size)

    def cache_key(self):
        return ("degenerate",)


@dataclass(frozen=True)
class Normal(ErrorModel):
    mean: float = 0.0
    variance: float = 1.0

    def __post_init__(self):
        if self.variance < 0:
            raise ValueError(f"variance must be >= 0, got {self.variance}")

    def cf(self, t):
        t_arr = np.asarray(t, dtype=float)
        vals = np.exp(1j * self.mean * t_arr - 0.5 * self.variance * t_arr ** 2)
        return self._wrap(t, vals)

    def moments(self):
        return (self.mean, self.mean ** 2 + self.variance)

    def sample(self, rng, size):
        return self.mean + math.sqrt(self.variance) * _box_muller(rng, size)

    def cache_key(self):
        return ("normal", self.mean, self.variance)


@dataclass(frozen=True)
class Laplace(ErrorModel):
    """Symmetric Laplace with density exp(-|x|/b)/(2b); variance 2 b^2."""

    scale: float

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError(f"scale must be > 0, got {self.scale}")

    def cf(self, t):
        t_arr = np.asarray(t, dtype=float)
        return self._wrap(t, 1.0 / (1.0 + (self.scale * t_arr) ** 2) + 0j)

    def moments(self):
        return (0.0, 2.0 * self.scale ** 2)

    def sample(self, rng, size):
        u = rng.random(size) - 0.5
        return -self.scale * np.sign(u) * np.log(1.0 - 2.0 * np.abs(u))

    def cache_key(self):
        return ("laplace", self.scale)


@dataclass(frozen=True)
class StableSymmetric(ErrorModel):
    """Symmetric stable family with cf exp(-scale^gamma |t|^gamma / 2).

    gamma = 1 is a Cauchy scale family, gamma = 2 a centred normal one.
    scale = 0 is admitted as the error-free limit (cf identically 1).
    """

    scale: float
    exponent: float

    def __post_init__(self):
        if self.scale < 0:
            raise ValueError(f"scale must be >= 0, got {self.scale}")
        if not (1.0 <= self.exponent <= 2.0):
            raise ValueError(f"exponent must be in [1, 2], got {self.exponent}")

    def cf(self, t):
        t_arr = np.asarray(t, dtype=float)
        vals = np.exp(
            -0.5 * self.scale ** self.exponent * np.abs(t_arr) ** self.exponent
        ) + 0j
        return self._wrap(t, vals)

    def moments(self):
        if self.exponent < 2.0 and self.scale > 0:
            raise InfiniteVarianceError(
                f"stable exponent {self.exponent} < 2 has no finite variance"
            )
        return (0.0, self.scale ** 2)

    def sample(self, rng, size):
        if self.scale == 0:
            return np.zeros(size)
        if self.exponent == 2.0:
            # cf exp(-scale^2 t^2 / 2) is N(0, scale^2)
            return self.scale * _box_muller(rng, size)
        if self.exponent == 1.0:
            # cf exp(-scale |t| / 2) is Cauchy with scale/2
            return 0.5 * self.scale * np.tan(np.pi * (rng.random(size) - 0.5))
        raise ValueError(
            f"sampling implemented only for exponent 1 or 2, got {self.exponent}"
        )

    def cache_key(self):
        return ("stable", self.scale, self.exponent)


@dataclass(frozen=True)
class Averaged(ErrorModel):
    """Mean of r i.i.d. draws from a base model: cf(t) = base.cf(t/r)^r."""

    base: ErrorModel
    r: int

    def __post_init__(self):
        if self.r < 1:
            raise ValueError(f"replicate count must be >= 1, got {self.r}")

    def cf(self, t):
        t_arr = np.asarray(t, dtype=float)
        vals = np.asarray(self.base.cf(t_arr / self.r), dtype=complex) ** self.r
        return self._wrap(t, vals)

    def moments(self):
        mean, second = self.base.moments()
        var = second - mean ** 2
        return (mean, mean ** 2 + var / self.r)

    def sample(self, rng, size):
        draws = self.base.sample(rng, size * self.r).reshape(size, self.r)
        return draws.mean(axis=1)

    def cache_key(self):
        return ("averaged", self.base.cache_key(), self.r)


class EmpiricalSymmetric(ErrorModel):
    """Symmetric error transform tabulated from replicate differences.

    The table holds estimates of |f_eps_ft(t)| on an equispaced t >= 0
    grid; cf() interpolates linearly and clamps to [floor, 1]. Outside
    the table range the floor applies.
    """

    def __init__(self, t_grid: np.ndarray, values: np.ndarray, floor: float):
        t_grid = np.asarray(t_grid, dtype=float)
        values = np.asarray(values, dtype=float)
        if t_grid.ndim != 1 or t_grid.size < 2 or np.any(np.diff(t_grid) <= 0):
            raise ValueError("t_grid must be strictly increasing with >= 2 points")
        if t_grid[0] != 0.0:
            raise ValueError("t_grid must start at 0")
        if values.shape != t_grid.shape:
            raise ValueError("values must match t_grid")
        if not (0 < floor <= 1):
            raise ValueError(f"floor must be in (0, 1], got {floor}")
        self.t_grid = t_grid
        self.values = np.clip(values, floor, 1.0)
        self.floor = float(floor)
        self._key = ("empirical", id(self))

    @classmethod
    def from_replicates(
        cls,
        reps: "ReplicatedSample",
        t_max: float,
        n_points: int = 201,
        ridge: float = 1.0,
    ) -> "EmpiricalSymmetric":
        """Estimate |f_eps_ft| on [0, t_max] from within-subject differences."""
        t_grid = np.linspace(0.0, t_max, n_points)
        sq = empirical_error_cf(reps, 2.0 * t_grid, ridge)
        floor = math.sqrt(ridge / reps.pair_count())
        return cls(t_grid, np.sqrt(np.maximum(sq, 0.0)), floor=min(floor, 1.0))

    def cf(self, t):
        t_arr = np.abs(np.asarray(t, dtype=float))
        vals = np.interp(t_arr, self.t_grid, self.values,
                         left=self.values[0], right=self.floor)
        vals = np.clip(vals, self.floor, 1.0) + 0j
        return self._wrap(t, vals)

    def moments(self):
        raise InfiniteVarianceError(
            "empirical transform carries no moment information"
        )

    def sample(self, rng, size):
        raise ValueError("EmpiricalSymmetric supports cf evaluation only")

    def cache_key(self):
        return self._key


@dataclass(frozen=True)
class HetSample:
    """Observations y_j, each tagged with the index of its error model."""

    ys: np.ndarray
    model_index: np.ndarray
    models: tuple[ErrorModel, ...]

    def __post_init__(self):
        ys = np.asarray(self.ys, dtype=float)
        idx = np.asarray(self.model_index, dtype=int)
        object.__setattr__(self, "ys", ys)
        object.__setattr__(self, "model_index", idx)
        object.__setattr__(self, "models", tuple(self.models))
        if ys.ndim != 1 or ys.size == 0:
            raise ValueError("ys must be a non-empty 1-d array")
        if idx.shape != ys.shape:
            raise ValueError("model_index must match ys")
        if len(self.models) == 0 or idx.min() < 0 or idx.max() >= len(self.models):
            raise ValueError("model_index refers outside the model list")

    @classmethod
    def homoscedastic(cls, ys, model: ErrorModel) -> "HetSample":
        ys = np.asarray(ys, dtype=float)
        return cls(ys, np.zeros(ys.size, dtype=int), (model,))

    @classmethod
    def from_models(cls, ys, models: Sequence[ErrorModel]) -> "HetSample":
        """One model per observation, deduplicated by value."""
        ys = np.asarray(ys, dtype=float)
        if len(models) != ys.size:
            raise ValueError("need one model per observation")
        unique: list[ErrorModel] = []
        index_of: dict[tuple, int] = {}
        idx = np.empty(ys.size, dtype=int)
        for j, m in enumerate(models):
            key = m.cache_key()
            if key not in index_of:
                index_of[key] = len(unique)
                unique.append(m)
            idx[j] = index_of[key]
        return cls(ys, idx, tuple(unique))

    @property
    def n(self) -> int:
        return int(self.ys.size)

    def model_counts(self) -> np.ndarray:
        return np.bincount(self.model_index, minlength=len(self.models))

    def models_per_observation(self) -> list[ErrorModel]:
        return [self.models[i] for i in self.model_index]


class ReplicatedSample:
    """Per-subject replicate measurements Y_{j,1..r_j}."""

    def __init__(self, subjects: Sequence[tuple[object, Sequence[float]]]):
        cleaned = []
        for sid, values in subjects:
            arr = np.asarray(values, dtype=float)
            if arr.ndim != 1 or arr.size < 1:
                raise ValueError(f"subject {sid!r} needs >= 1 replicate")
            cleaned.append((sid, arr))
        if not cleaned:
            raise ValueError("replicated sample is empty")
        self.subjects = tuple(cleaned)

    def pair_count(self) -> int:
        return sum(len(a) * (len(a) - 1) // 2 for _, a in self.subjects)

    def pair_halves(self) -> tuple[np.ndarray, np.ndarray]:
        """((Y1 + Y2)/2, (Y1 - Y2)/2) over all within-subject pairs k1 < k2."""
        sums, diffs = [], []
        for _, arr in self.subjects:
            r = arr.size
            if r < 2:
                continue
            i, k = np.triu_indices(r, k=1)
            sums.append(0.5 * (arr[i] + arr[k]))
            diffs.append(0.5 * (arr[i] - arr[k]))
        if not sums:
            raise InsufficientReplicatesError(
                "no subject carries two or more replicates"
            )
        return np.concatenate(sums), np.concatenate(diffs)

    def subject_means(self) -> np.ndarray:
        return np.array([arr.mean() for _, arr in self.subjects])

    def replicate_counts(self) -> np.ndarray:
        return np.array([arr.size for _, arr in self.subjects], dtype=int)


def char_fn(model: ErrorModel, t) -> complex | np.ndarray:
    """Characteristic function of an error model at t (scalar or array)."""
    return model.cf(t)


def averaged_model(base: ErrorModel, r: int) -> ErrorModel:
    """Model of the mean of r i.i.d. draws from ``base``.

    The cf is exactly base.cf(t/r)^r; families closed under averaging
    (degenerate, normal, stable) simplify to a member of the same family.
    """
    if r < 1:
        raise ValueError(f"replicate count must be >= 1, got {r}")
    if r == 1:
        return base
    if isinstance(base, Degenerate):
        return base
    if isinstance(base, Normal):
        return Normal(base.mean, base.variance / r)
    if isinstance(base, StableSymmetric):
        # (exp(-s^g |t/r|^g / 2))^r = exp(-(s r^{1/g - 1})^g |t|^g / 2)
        g = base.exponent
        return StableSymmetric(base.scale * r ** (1.0 / g - 1.0), g)
    return Averaged(base, r)


def error_moments(model: ErrorModel) -> tuple[float, float]:
    """(mean, second moment) of the error distribution."""
    return model.moments()


def _group_models(models: Sequence[ErrorModel]) -> tuple[list[ErrorModel], np.ndarray]:
    unique: list[ErrorModel] = []
    counts: list[int] = []
    index_of: dict[tuple, int] = {}
    for m in models:
        key = m.cache_key()
        if key in index_of:
            counts[index_of[key]] += 1
        else:
            index_of[key] = len(unique)
            unique.append(m)
            counts.append(1)
    return unique, np.asarray(counts, dtype=float)


def cf_sum_sq(sample_or_models, t) -> float | np.ndarray:
    """Sum over observations of |cf(t)|^2.

    Accepts a HetSample or a per-observation model sequence. Strictly
    positive whenever at least one model has a non-vanishing cf; raises
    DegenerateDenominatorError if the sum underflows below 1e-300.
    """
    if isinstance(sample_or_models, HetSample):
        unique = list(sample_or_models.models)
        counts = sample_or_models.model_counts().astype(float)
    else:
        unique, counts = _group_models(sample_or_models)
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    total = np.zeros(t_arr.shape)
    for m, c in zip(unique, counts):
        if c == 0:
            continue
        total += c * np.abs(np.asarray(m.cf(t_arr))) ** 2
    if np.any(total < 1e-300):
        t_bad = float(t_arr[np.argmin(total)])
        raise DegenerateDenominatorError(
            f"sum of squared error transforms is numerically zero at t = {t_bad:g}"
        )
    if np.ndim(t) == 0:
        return float(total[0])
    return total


def estimate_error_variance(reps: ReplicatedSample) -> float:
    """Pooled error variance from within-subject squared differences.

    Unbiased for the error variance under i.i.d. errors with two or more
    replicates on at least one subject.
    """
    _, diffs = reps.pair_halves()
    n_pairs = diffs.size
    # (2N)^{-1} sum (Y1 - Y2)^2 with diffs already halved
    return float(np.sum((2.0 * diffs) ** 2) / (2.0 * n_pairs))


def empirical_error_cf(reps: ReplicatedSample, t, ridge: float) -> float | np.ndarray:
    """Estimate of mean |f_eps_ft(t/2)|^2 from replicate differences.

    Returns max(|mean over pairs of exp(i t (Y1 - Y2)/2)|, ridge/N); the
    floor keeps downstream divisions away from zero.
    """
    if ridge <= 0:
        raise ValueError(f"ridge must be > 0, got {ridge}")
    _, diffs = reps.pair_halves()
    n_pairs = diffs.size
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    raw = np.abs(empirical_cf(diffs, t_arr))
    out = np.maximum(raw, ridge / n_pairs)
    if np.ndim(t) == 0:
        return float(out[0])
    return out


def identify_linear_variance(
    phi_hat: Callable[[float], float],
    n: int,
    c: float,
    beta: float,
    m: int = 20,
    t_max: float = 10.0,
    t_points: int = 200,
) -> float:
    """Locate the scale parameter of linearly growing normal error variances.

    The error variances are assumed to follow a(1 + j/n) with a in [1, 2].
    On the grid a_j = 1 + j/m the t-scan finds the smallest t where the
    upper/lower envelope bands of consecutive grid points separate, then
    brackets phi_hat(t) between upper envelopes and returns the midpoint
    of the bracketing cell, clamped to [1, 2].
    """
    if not (0 < c <= 1):
        raise ValueError(f"c must be in (0, 1], got {c}")
    if beta <= 0:
        raise ValueError(f"beta must be > 0, got {beta}")
    if m < 2:
        raise ValueError(f"grid size m must be >= 2, got {m}")
    a_grid = 1.0 + np.arange(1, m + 1) / m

    def upper(a: np.ndarray, t: float) -> np.ndarray:
        # mean over j=1..n of exp(-a (1 + j/n) t^2 / 2) via the exact
        # geometric-sum closed form (b = a t^2 / (2n) per step)
        a = np.asarray(a, dtype=float)
        q = 0.5 * a * t ** 2
        b = q / n
        return np.exp(-q - b) * np.expm1(-q) / np.expm1(-b) / n

    t_scan = np.linspace(0.0, t_max, t_points + 1)[1:]
    t_star = None
    for t in t_scan:
        env = c / (1.0 + t ** (beta + 0.5))
        up = upper(a_grid, t)
        low = up * env
        if np.all(up > low) and np.all(low[:-1] > up[1:]):
            t_star = float(t)
            break
    if t_star is None:
        raise IdentificationError(
            f"no t <= {t_max:g} separates the envelope bands; "
            "raise t_max or coarsen the grid"
        )
    up = upper(a_grid, t_star)
    value = float(phi_hat(t_star))
    if value >= up[0]:
        return 1.0
    if value < up[-1] * c / (1.0 + t_star ** (beta + 0.5)):
        return 2.0
    cell = int(np.searchsorted(-up, -value, side="left"))
    # value lies between up[cell-1] and up[cell]; bracketing a-cell ditto
    if cell >= m:
        return 2.0
    lo_a, hi_a = a_grid[cell - 1], a_grid[cell]
    return float(min(max(0.5 * (lo_a + hi_a), 1.0), 2.0))


def estimate_linear_variance_param(
    ys: Sequence[float],
    c: float,
    beta: float,
    m: int = 20,
    t_max: float = 10.0,
    t_points: int = 200,
) -> float:
    """Data-driven version of :func:`identify_linear_variance`.

    The accessible curve is estimated by max(0, Re empirical cf of ys).
    """
    ys = np.asarray(ys, dtype=float)
    if ys.size == 0:
        raise ValueError("empty sample")

    def phi_hat(t: float) -> float:
        return max(0.0, float(np.real(empirical_cf(ys, t))))

    return identify_linear_variance(
        phi_hat, n=ys.size, c=c, beta=beta, m=m, t_max=t_max, t_points=t_points
    )


def consistency_diagnostic(models: Sequence[ErrorModel], omega: float) -> float:
    """Divergence functional for stable-family error scales.

    Returns sum over models of exp(-scale^gamma * omega^gamma); values
    growing with the sample size indicate the consistent regime even when
    the scales themselves are unbounded.
    """
    if omega <= 0:
        raise ValueError(f"omega must be > 0, got {omega}")
    if not models:
        raise ValueError("empty model list")
    gammas = set()
    scales = []
    for mdl in models:
        if not isinstance(mdl, StableSymmetric):
            raise ValueError(
                "consistency_diagnostic requires StableSymmetric models"
            )
        gammas.add(mdl.exponent)
        scales.append(mdl.scale)
    if len(gammas) != 1:
        raise ValueError(f"models must share one exponent, got {sorted(gammas)}")
    gamma = gammas.pop()
    scales_arr = np.asarray(scales)
    return float(np.sum(np.exp(-(scales_arr ** gamma) * omega ** gamma)))


_MODEL_KEYWORDS = {"degenerate", "normal", "laplace", "stable", "averaged"}


def parse_models_config(text: str) -> dict[str, ErrorModel]:
    """Parse model-definition lines.

    Grammar, one model per line::

        model <id> degenerate
        model <id> normal <mu> <var>
        model <id> laplace <scale>
        model <id> stable <sigma> <gamma>
        model <id> averaged <base-id> <r>

    Blank lines and ``#`` comments are ignored. Averaged lines may only
    reference ids defined earlier in the file.
    """
    models: dict[str, ErrorModel] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] != "model" or len(parts) < 3:
            raise ValueError(f"line {lineno}: expected 'model <id> <family> ...'")
        _, mid, family, *args = parts
        if family not in _MODEL_KEYWORDS:
            raise ValueError(f"line {lineno}: unknown family {family!r}")
        if mid in models:
            raise ValueError(f"line {lineno}: duplicate model id {mid!r}")
        try:
            if family == "degenerate":
                if args:
                    raise ValueError("degenerate takes no parameters")
                models[mid] = Degenerate()
            elif family == "normal":
                mu, var = map(float, args)
                models[mid] = Normal(mu, var)
            elif family == "laplace":
                (scale,) = map(float, args)
                models[mid] = Laplace(scale)
            elif family == "stable":
                sigma, gamma = map(float, args)
                models[mid] = StableSymmetric(sigma, gamma)
            else:  # averaged
                base_id, r_text = args
                if base_id not in models:
                    raise ValueError(f"unknown base model id {base_id!r}")
                models[mid] = averaged_model(models[base_id], int(r_text))
        except (TypeError, ValueError) as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    return models


def format_model_line(mid: str, model: ErrorModel) -> str:
    """Inverse of one parse_models_config line for simple families."""
    if isinstance(model, Degenerate):
        return f"model {mid} degenerate"
    if isinstance(model, Normal):
        return f"model {mid} normal {model.mean:.17g} {model.variance:.17g}"
    if isinstance(model, Laplace):
        return f"model {mid} laplace {model.scale:.17g}"
    if isinstance(model, StableSymmetric):
        return f"model {mid} stable {model.scale:.17g} {model.exponent:.17g}"
    raise ValueError(f"no config syntax for {type(model).__name__}")
