"""Sigmoid relaxations used for continuous conditional swaps.

Every function here maps a real difference ``x`` to a swap probability in
``[0, 1]`` with ``f(0) = 1/2`` and ``f(x) + f(-x) = 1``.  The tail
``f(-|x|)`` is computed directly for each kind so that far-out values keep
full relative precision (the error-bound scans go out to ``|x| = 1e6``).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

ART_EPS = 1e-10


class SigmoidKind(str, enum.Enum):
    LOGISTIC = "logistic"
    LOGISTIC_ART = "logistic_art"
    RECIPROCAL = "reciprocal"
    CAUCHY = "cauchy"
    OPTIMAL = "optimal"


@dataclass(frozen=True)
class SigmoidSpec:
    """A sigmoid kind with inverse temperature ``beta``.

    ``art_lambda`` and ``art_eps`` only matter for ``logistic_art``.
    """

    kind: SigmoidKind = SigmoidKind.CAUCHY
    beta: float = 1.0
    art_lambda: float = 0.25
    art_eps: float = ART_EPS

    def __post_init__(self):
        object.__setattr__(self, "kind", SigmoidKind(self.kind))
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise ValueError(f"beta must be a positive finite number, got {self.beta}")
        if not 0.0 <= self.art_lambda <= 1.0:
            raise ValueError(f"art_lambda must lie in [0, 1], got {self.art_lambda}")
        if not self.art_eps > 0:
            raise ValueError(f"art_eps must be positive, got {self.art_eps}")

    def __call__(self, x):
        return evaluate(self, x)

    def deriv(self, x):
        return derivative(self, x)


def _check_finite(x):
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("sigmoid input must be finite")
    return x


def art(x, lam: float, eps: float = ART_EPS):
    """Activation replacement transform ``x / (|x|**lam + eps)``."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    x = _check_finite(x)
    out = x / (np.abs(x) ** lam + eps)
    return out if out.ndim else float(out)


def _art_slope(x, lam, eps):
    ax = np.abs(x) ** lam
    return ((1.0 - lam) * ax + eps) / (ax + eps) ** 2


def _tail(kind, z):
    """``f(-|z|)`` for the unit-temperature sigmoid of ``kind``."""
    a = np.abs(z)
    if kind is SigmoidKind.LOGISTIC:
        e = np.exp(-a)
        return e / (1.0 + e)
    if kind is SigmoidKind.RECIPROCAL:
        return 0.5 / (1.0 + 2.0 * a)
    if kind is SigmoidKind.CAUCHY:
        return np.arctan2(1.0, a) / np.pi
    if kind is SigmoidKind.OPTIMAL:
        with np.errstate(divide="ignore"):
            return np.where(a > 0.25, 1.0 / (16.0 * np.maximum(a, 0.25)), 0.5 - a)
    raise AssertionError(kind)


def _unit_slope(kind, z):
    a = np.abs(z)
    if kind is SigmoidKind.LOGISTIC:
        t = _tail(kind, z)
        return t * (1.0 - t)
    if kind is SigmoidKind.RECIPROCAL:
        return 1.0 / (1.0 + 2.0 * a) ** 2
    if kind is SigmoidKind.CAUCHY:
        return 1.0 / (np.pi * (1.0 + a * a))
    if kind is SigmoidKind.OPTIMAL:
        # joints at |z| = 1/4 take the linear-branch slope
        return np.where(a > 0.25, 1.0 / (16.0 * np.maximum(a, 0.25) ** 2), 1.0)
    raise AssertionError(kind)


def _value(spec: SigmoidSpec, x):
    """Unchecked vectorized evaluation (hot path)."""
    kind = spec.kind
    if kind is SigmoidKind.LOGISTIC_ART:
        x = x / (np.abs(x) ** spec.art_lambda + spec.art_eps)
        kind = SigmoidKind.LOGISTIC
    z = spec.beta * x
    t = _tail(kind, z)
    return np.where(z < 0, t, 1.0 - t)


def _slope(spec: SigmoidSpec, x):
    """Unchecked vectorized derivative (hot path)."""
    if spec.kind is SigmoidKind.LOGISTIC_ART:
        u = x / (np.abs(x) ** spec.art_lambda + spec.art_eps)
        return (spec.beta * _unit_slope(SigmoidKind.LOGISTIC, spec.beta * u)
                * _art_slope(x, spec.art_lambda, spec.art_eps))
    return spec.beta * _unit_slope(spec.kind, spec.beta * x)


def evaluate(spec: SigmoidSpec, x):
    """Evaluate ``f(x)``; scalars in, float out."""
    x = _check_finite(x)
    out = _value(spec, x)
    return out if out.ndim else float(out)


def derivative(spec: SigmoidSpec, x):
    """Analytic ``f'(x)``."""
    x = _check_finite(x)
    out = _slope(spec, x)
    return out if out.ndim else float(out)


_UNIT_LIPSCHITZ = {
    SigmoidKind.LOGISTIC: 4.0,
    SigmoidKind.RECIPROCAL: 1.0,
    SigmoidKind.CAUCHY: math.pi,
    SigmoidKind.OPTIMAL: 1.0,
}


def unit_lipschitz_beta(kind) -> float:
    """The ``beta`` at which ``max f' = 1``."""
    kind = SigmoidKind(kind)
    if kind not in _UNIT_LIPSCHITZ:
        raise ValueError(f"no unit-Lipschitz normalization defined for {kind.value}")
    return _UNIT_LIPSCHITZ[kind]


def relaxed_min_zero(spec: SigmoidSpec, x):
    """``min_f(x, 0) = x * f(-x)``, the curve the monotonicity and error results are stated on."""
    x = _check_finite(x)
    return x * _value(spec, -x)
