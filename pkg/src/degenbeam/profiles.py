"""Degeneracy coefficients a(x) and the constants derived from them.

A profile is a coefficient a on [0, 1] with a(0) = 0 and a > 0 on (0, 1].
Its degeneracy exponent is

    K = sup_{x in (0, 1]} x |a'(x)| / a(x),

and the profile is weakly degenerate (WD) for K in (0, 1), strongly
degenerate (SD) for K in [1, 2).  Coefficients with K >= 2 are rejected.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .errors import DegeneracyOutOfRange, InvalidProfile

# Smallest abscissa of the log-spaced sample used to approximate the sup.
# Suprema attained only as x -> 0+ are resolved to double precision there.
_LOG_SAMPLE_MIN_EXP = -18.0
_MONOTONE_WINDOW = 0.1


class Regime(str, enum.Enum):
    WD = "WD"
    SD = "SD"


@dataclass(frozen=True)
class Power:
    alpha: float


@dataclass(frozen=True)
class Custom:
    a: Callable[[np.ndarray], np.ndarray]
    a_prime: Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class DegeneracyProfile:
    """Coefficient ``scale * base(x)`` where ``base`` is a power or a user function.

    Instances are callable and return a(x).  Construct them through
    :func:`make_power_profile` or :func:`make_custom_profile`, which check the
    invariants; direct construction is allowed for non-degenerate reference
    coefficients used in tests.
    """

    kind: Union[Power, Custom]
    scale: float = 1.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if isinstance(self.kind, Power):
            return self.scale * x**self.kind.alpha
        return self.scale * np.asarray(self.kind.a(x), dtype=float) * np.ones_like(x)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        if isinstance(self.kind, Power):
            alpha = self.kind.alpha
            with np.errstate(divide="ignore", invalid="ignore"):
                return self.scale * alpha * x ** (alpha - 1.0)
        return self.scale * np.asarray(self.kind.a_prime(x), dtype=float) * np.ones_like(x)

    def log_slope(self, x):
        """Return x a'(x) / a(x) on (0, 1], analytically for power profiles."""
        x = np.asarray(x, dtype=float)
        if isinstance(self.kind, Power):
            return np.full_like(x, self.kind.alpha)
        return x * self.derivative(x) / self(x)

    def describe(self) -> dict:
        if isinstance(self.kind, Power):
            return {"type": "power", "alpha": self.kind.alpha, "scale": self.scale}
        return {"type": "custom", "scale": self.scale}


@dataclass(frozen=True)
class DegeneracyClass:
    K: float
    regime: Regime
    a_at_1: float


def make_power_profile(alpha: float, scale: float = 1.0) -> DegeneracyProfile:
    """Return the profile a(x) = scale * x**alpha, for which K = alpha."""
    if not scale > 0:
        raise InvalidProfile(f"scale must be positive, got {scale}")
    if not 0.0 < alpha < 2.0:
        raise DegeneracyOutOfRange(f"power exponent {alpha} outside (0, 2)")
    return DegeneracyProfile(Power(float(alpha)), float(scale))


def make_custom_profile(a, a_prime, scale: float = 1.0, samples: int = 2001) -> DegeneracyProfile:
    """Wrap a user coefficient and its derivative after checking a(0) = 0 and a > 0."""
    if not scale > 0:
        raise InvalidProfile(f"scale must be positive, got {scale}")
    profile = DegeneracyProfile(Custom(a, a_prime), float(scale))
    _check_positive(profile, samples)
    return profile


def _check_positive(profile: DegeneracyProfile, samples: int) -> None:
    a0 = float(profile(np.array([0.0]))[0])
    if a0 != 0.0:
        raise InvalidProfile(f"a(0) must vanish, got {a0}")
    x = np.concatenate([np.logspace(_LOG_SAMPLE_MIN_EXP, 0.0, samples), np.linspace(0.0, 1.0, samples)[1:]])
    vals = profile(x)
    if not np.all(np.isfinite(vals)) or np.any(vals <= 0.0):
        bad = x[~(np.isfinite(vals) & (vals > 0.0))][0]
        raise InvalidProfile(f"a(x) must be positive on (0, 1]; fails at x={bad:.3e}")


def _log_sample(resolution: int) -> np.ndarray:
    x = np.logspace(_LOG_SAMPLE_MIN_EXP, 0.0, resolution)
    x[-1] = 1.0
    return x


def classify(profile: DegeneracyProfile, resolution: int = 1000) -> DegeneracyClass:
    """Compute K and the WD/SD regime of ``profile``.

    For power profiles K is the exponent itself.  For custom profiles K is the
    maximum of x|a'|/a over ``resolution`` log-spaced points in (0, 1], and
    x**K / a(x) is additionally required to be non-decreasing on (0, 0.1].
    """
    if resolution < 100:
        raise ValueError("resolution must be at least 100")
    a1 = float(profile(np.array([1.0]))[0])
    if isinstance(profile.kind, Power):
        K = profile.kind.alpha
    else:
        x = _log_sample(resolution)
        a = profile(x)
        if np.any(~np.isfinite(a)) or np.any(a <= 0.0):
            raise InvalidProfile("a(x) must be positive on (0, 1]")
        ratio = np.abs(profile.log_slope(x))
        if not np.all(np.isfinite(ratio)):
            raise InvalidProfile("x a'(x)/a(x) is not finite on the sample")
        K = float(ratio.max())
    if not 0.0 < K < 2.0:
        raise DegeneracyOutOfRange(f"K = {K} outside (0, 2)")
    if isinstance(profile.kind, Custom):
        _check_monotone_near_origin(profile, K, resolution)
    regime = Regime.WD if K < 1.0 else Regime.SD
    return DegeneracyClass(K=float(K), regime=regime, a_at_1=a1)


def _check_monotone_near_origin(profile: DegeneracyProfile, K: float, resolution: int) -> None:
    x = np.logspace(-8.0, np.log10(_MONOTONE_WINDOW), resolution)
    q = x**K / profile(x)
    drops = np.diff(q) < -1e-12 * np.abs(q[1:])
    if np.any(drops):
        at = x[1:][drops][0]
        raise InvalidProfile(f"x^K/a(x) decreases near the origin (at x={at:.3e})")


def _bound_max(cls: DegeneracyClass) -> float:
    return max(1.0, 4.0 / cls.a_at_1, 4.0 * cls.K / cls.a_at_1)


def observability_time(cls: DegeneracyClass) -> float:
    """Minimal time T0 = 4/(2-K) * max{1, 4/a(1), 4K/a(1)} beyond which the lower bound is positive."""
    return 4.0 / (2.0 - cls.K) * _bound_max(cls)


def observability_bounds(cls: DegeneracyClass, T: float) -> tuple[float, float]:
    """Return (lower, upper) constants bracketing int_0^T y_xx(t,1)^2 dt / E(0).

    lower = T(2-K) - 4 max{1, 4/a(1), 4K/a(1)} and may be negative (vacuous);
    upper = 12 T + 4 max{4/a(1), 1}.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    lower = T * (2.0 - cls.K) - 4.0 * _bound_max(cls)
    upper = 12.0 * T + 4.0 * max(4.0 / cls.a_at_1, 1.0)
    return lower, upper
