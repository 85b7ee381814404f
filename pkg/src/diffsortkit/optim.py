"""Split optimization at the model/loss boundary, plus first-order optimizers.

A loss-side optimizer proposes a target ``z*`` for the model output ``y``
and the model is then trained on ``1/2 ||z* - y||^2``, whose gradient with
respect to ``y`` is ``y - z*``.  Newton losses obtain ``z*`` from a damped
Newton step of the loss; RESGRO obtains it from loss-ranked random
perturbations and never needs a loss gradient.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import model as mlp_model


class Curvature(str, enum.Enum):
    ELEMENTWISE_HESSIAN = "elementwise"
    EMPIRICAL_HESSIAN = "empirical"
    EMPIRICAL_FISHER = "fisher"


class LossKind(str, enum.Enum):
    MSE = "mse"
    SMCE = "smce"
    BCE = "bce"
    SBCE = "sbce"
    CUSTOM = "custom"


@dataclass(frozen=True)
class NewtonLossSpec:
    """How the Newton target is formed.

    For ``CUSTOM`` supply ``grad_fn(y, target) -> (B, m)`` and, unless the
    curvature is Fisher, ``hess_fn(y, target) -> (B, m, m)`` or ``(B, m)``
    for diagonal Hessians.
    """

    curvature: Curvature = Curvature.ELEMENTWISE_HESSIAN
    damping: float = 1e-4
    loss_kind: LossKind = LossKind.MSE
    grad_fn: Callable | None = field(default=None, compare=False)
    hess_fn: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "curvature", Curvature(self.curvature))
        object.__setattr__(self, "loss_kind", LossKind(self.loss_kind))
        if not (math.isfinite(self.damping) and self.damping >= 0):
            raise ValueError(f"damping must be a finite non-negative number, got {self.damping}")
        if self.loss_kind is LossKind.CUSTOM:
            if self.grad_fn is None:
                raise ValueError("a custom Newton loss needs grad_fn")
            if self.hess_fn is None and self.curvature is not Curvature.EMPIRICAL_FISHER:
                raise ValueError("a custom Newton loss needs hess_fn unless the curvature is Fisher")


def _sigmoid(y):
    return np.where(y >= 0, 1.0 / (1.0 + np.exp(-np.abs(y))), np.exp(-np.abs(y)) / (1.0 + np.exp(-np.abs(y))))


def _softmax(y):
    e = np.exp(y - y.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def loss_value(kind: LossKind, y, target):
    """Per-sample value of the built-in losses (used by tests and logging)."""
    kind = LossKind(kind)
    y = np.asarray(y, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if kind is LossKind.MSE:
        return 0.5 * np.sum((y - t) ** 2, axis=-1)
    if kind is LossKind.SMCE:
        z = y - y.max(axis=-1, keepdims=True)
        logq = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
        return -np.sum(t * logq, axis=-1)
    if kind is LossKind.BCE:
        return -np.sum(t * np.log(y) + (1 - t) * np.log1p(-y), axis=-1)
    if kind is LossKind.SBCE:
        # -p log s(y) - (1-p) log(1-s(y)) = softplus(y) - p y
        return np.sum(np.logaddexp(0.0, y) - t * y, axis=-1)
    raise ValueError(f"no closed form for {kind.value}")


def loss_grad_and_hessian(kind: LossKind, y, target):
    """Per-sample gradient ``(B, m)`` and Hessian (``(B, m, m)`` or diagonal ``(B, m)``)."""
    kind = LossKind(kind)
    y = np.asarray(y, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if kind is LossKind.MSE:
        return y - t, np.ones_like(y)
    if kind is LossKind.SMCE:
        q = _softmax(y)
        H = q[..., :, None] * (np.eye(y.shape[-1]) - q[..., None, :])
        return q - t, H
    if kind is LossKind.BCE:
        if np.any((y <= 0) | (y >= 1)):
            raise ValueError("BCE needs outputs strictly inside (0, 1)")
        return -t / y + (1 - t) / (1 - y), t / y**2 + (1 - t) / (1 - y) ** 2
    if kind is LossKind.SBCE:
        s = _sigmoid(y)
        return s - t, s * (1.0 - s)
    raise ValueError(f"no closed form for {kind.value}")


def _is_diagonal(C, y, diagonal):
    m = y.shape[-1]
    if diagonal is not None:
        return diagonal
    if C.ndim == 1:
        return True
    if C.ndim == 2 and y.ndim == 2 and C.shape == y.shape and C.shape != (m, m):
        return True
    if C.ndim == 2 and C.shape == (m, m) and C.shape == y.shape:
        raise ValueError("ambiguous curvature shape; pass diagonal=True or False")
    return False


def newton_step(y, grad, curvature, damping: float = 1e-4, diagonal: bool | None = None):
    """``(curvature + damping I)^-1 grad``, i.e. ``y - z*``.

    ``y`` and ``grad`` are ``(m,)`` or ``(B, m)``.  ``curvature`` is either a
    diagonal (``(m,)`` shared or ``(B, m)`` per sample) or a matrix
    (``(m, m)`` shared or ``(B, m, m)`` per sample).  ``diagonal`` settles
    the one ambiguous case, ``B == m``.
    """
    y = np.asarray(y, dtype=np.float64)
    g = np.asarray(grad, dtype=np.float64)
    C = np.asarray(curvature, dtype=np.float64)
    if damping < 0:
        raise ValueError("damping must be non-negative")
    if g.shape != y.shape:
        raise ValueError(f"grad shape {g.shape} does not match y shape {y.shape}")
    m = y.shape[-1]
    if _is_diagonal(C, y, diagonal):
        if C.shape not in {(m,), y.shape}:
            raise ValueError(f"diagonal curvature shape {C.shape} does not match y shape {y.shape}")
        denom = C + damping
        if np.any(denom == 0):
            raise ValueError("singular curvature; use damping > 0")
        return g / denom
    if C.shape[-2:] != (m, m) or C.ndim not in (2, y.ndim + 1):
        raise ValueError(f"curvature shape {C.shape} does not match output dimension {m}")
    if not np.allclose(C, np.swapaxes(C, -1, -2), rtol=1e-10, atol=1e-12):
        raise ValueError("curvature must be symmetric")
    A = C + damping * np.eye(m)
    if damping == 0:
        cond = np.linalg.cond(A)
        if np.any(~np.isfinite(cond) | (cond > 1e14)):
            raise ValueError("singular curvature; use damping > 0")
    if A.ndim == 2:
        return np.linalg.solve(A, g.T).T
    return np.linalg.solve(A, g[..., None])[..., 0]


def newton_target(y, grad, curvature, damping: float = 1e-4, diagonal: bool | None = None):
    """Projected optimum ``z* = y - (curvature + damping I)^-1 grad``; see :func:`newton_step`."""
    return np.asarray(y, dtype=np.float64) - newton_step(y, grad, curvature, damping, diagonal)


def newton_loss_grad(spec: NewtonLossSpec, y, target):
    """Surrogate gradient ``y - z*`` per sample, shape ``(B, m)``.

    The step is returned as solved rather than as ``y - z*`` so that no
    rounding is introduced by the round trip.  The empirical variants average the curvature over the batch before the
    solve; the element-wise variant uses each sample's own Hessian.
    """
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if spec.loss_kind is LossKind.CUSTOM:
        g = np.asarray(spec.grad_fn(y, target), dtype=np.float64)
        H = None if spec.curvature is Curvature.EMPIRICAL_FISHER else np.asarray(spec.hess_fn(y, target), dtype=np.float64)
    else:
        g, H = loss_grad_and_hessian(spec.loss_kind, y, target)
    if g.shape != y.shape:
        raise ValueError(f"gradient shape {g.shape} does not match output shape {y.shape}")
    if spec.curvature is Curvature.EMPIRICAL_FISHER:
        C = np.einsum("bi,bj->ij", g, g) / g.shape[0]
        return newton_step(y, g, C, spec.damping, diagonal=False)
    diag = H.ndim == 2
    if spec.curvature is Curvature.EMPIRICAL_HESSIAN:
        H = H.mean(axis=0)
    return newton_step(y, g, H, spec.damping, diagonal=diag)


class Noise(str, enum.Enum):
    GAUSSIAN = "gaussian"
    CAUCHY = "cauchy"


@dataclass(frozen=True)
class ResgroSpec:
    """``k`` samples per greedy pick, ``m`` drawn in total (bootstrapped when ``m > k``)."""

    k: int = 64
    m: int = 64
    sigma: float = 0.1
    noise: Noise = Noise.GAUSSIAN

    def __post_init__(self):
        object.__setattr__(self, "noise", Noise(self.noise))
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.k > self.m:
            raise ValueError(f"k ({self.k}) must not exceed m ({self.m})")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


def resgro_rank_weights(m: int, k: int) -> np.ndarray:
    """Probability that the rank-``r`` sample (1-based, ascending loss) is the best of a uniform ``k``-subset."""
    if not 1 <= k <= m:
        raise ValueError(f"need 1 <= k <= m, got k={k}, m={m}")
    total = math.comb(m, k)
    return np.array([math.comb(m - r, k - 1) / total for r in range(1, m + 1)])


def resgro_target(y, loss_fn, spec: ResgroSpec, rng=None, eps=None):
    """Loss-ranked perturbation target.

    ``loss_fn`` maps points of shape ``(..., M, dim)`` to losses ``(..., M)``.
    ``eps`` overrides the random draw (shape ``(..., M, dim)``).  Ties in the
    loss are resolved in favour of the earlier draw.
    """
    y = np.asarray(y, dtype=np.float64)
    if eps is None:
        if rng is None:
            raise ValueError("need rng or explicit eps")
        size = y.shape[:-1] + (spec.m, y.shape[-1])
        draw = rng.standard_normal(size) if spec.noise is Noise.GAUSSIAN else rng.standard_cauchy(size)
        eps = spec.sigma * draw
    else:
        eps = np.asarray(eps, dtype=np.float64)
        if eps.shape != y.shape[:-1] + (spec.m, y.shape[-1]):
            raise ValueError(f"eps must have shape {y.shape[:-1] + (spec.m, y.shape[-1])}, got {eps.shape}")
    losses = np.asarray(loss_fn(y[..., None, :] + eps), dtype=np.float64)
    order = np.argsort(losses, axis=-1, kind="stable")
    ranked = np.take_along_axis(eps, order[..., None], axis=-2)
    w = resgro_rank_weights(spec.m, spec.k)
    return y + np.einsum("r,...rd->...d", w, ranked)


def two_stage_gd_step(model: mlp_model.Mlp, x, loss_grad_fn, lr: float) -> mlp_model.Mlp:
    """Unit gradient step on the outputs, then a parameter step of size ``lr`` towards ``z*``.

    ``loss_grad_fn(y)`` returns dl/dy for the batch; the loss is summed over
    the batch.
    """
    y, cache = mlp_model.forward(model, x)
    z_star = y - loss_grad_fn(y)
    grads, _ = mlp_model.backward(model, cache, y - z_star)
    return model.with_params([p - lr * g for p, g in zip(model.params(), grads)])


class OptimizerKind(str, enum.Enum):
    SGD = "sgd"
    ADAM = "adam"


@dataclass
class OptimizerState:
    kind: OptimizerKind = OptimizerKind.ADAM
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def __post_init__(self):
        self.kind = OptimizerKind(self.kind)
        if not self.lr > 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")


def step(state: OptimizerState, params, grads) -> list:
    """Return updated parameters; moment buffers in ``state`` are updated in place."""
    if len(params) != len(grads) or any(p.shape != g.shape for p, g in zip(params, grads)):
        raise ValueError("parameter and gradient shapes do not match")
    if state.kind is OptimizerKind.SGD:
        return [p - state.lr * g for p, g in zip(params, grads)]
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    elif any(a.shape != p.shape for a, p in zip(state.m, params)) or len(state.m) != len(params):
        raise ValueError("optimizer state does not match the parameters")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    out = []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        out.append(p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps))
    return out


def kendall_tau(pred, truth):
    """Kendall's tau between predicted scores and true ranks along the last axis.

    Pairs tied in either argument count as neither concordant nor discordant.
    Returns a float for 1-D input, an array otherwise.
    """
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    n = pred.shape[-1]
    if n < 2:
        raise ValueError(f"Kendall's tau needs n >= 2, got {n}")
    if truth.shape[-1] != n:
        raise ValueError("pred and truth lengths differ")
    iu, ju = np.triu_indices(n, 1)
    s = np.sign(pred[..., ju] - pred[..., iu]) * np.sign(truth[..., ju] - truth[..., iu])
    tau = s.sum(axis=-1) / (n * (n - 1) / 2)
    return float(tau) if np.ndim(tau) == 0 else tau
