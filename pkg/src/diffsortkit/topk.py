"""Top-k rows of relaxed permutation matrices and the top-k classification loss."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import diffsort
from .network import NetworkKind, SortingNetwork, build
from .sigmoid import SigmoidKind, SigmoidSpec

LOG_FLOOR = 1e-12


class RelaxationCollapse(ValueError):
    """The relaxed ranking put zero mass on the true class for every accepted rank."""


@dataclass(frozen=True)
class TopKDistribution:
    """``probs[k-1]`` is the weight ``P_K(k)``."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64).ravel()
        if p.size == 0 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"P_K must be non-negative and sum to 1, got {p.tolist()}")
        object.__setattr__(self, "probs", p)

    @classmethod
    def parse(cls, text: str) -> "TopKDistribution":
        return cls(np.array([float(t) for t in text.split(",")]))

    @property
    def k_max(self) -> int:
        nz = np.flatnonzero(self.probs)
        return int(nz[-1]) + 1

    def rank_weights(self, skip_first: bool = False) -> np.ndarray:
        """``w_j = sum_{k >= j} P_K(k)``; rank ``j`` counts for every ``k >= j``."""
        p = self.probs[: self.k_max].copy()
        if skip_first:
            p[0] = 0.0
        return np.cumsum(p[::-1])[::-1]


@dataclass(frozen=True)
class TopKConfig:
    m: int = 16
    mixture: bool = False
    temperature: float = 1.0
    sigmoid: SigmoidSpec = field(default_factory=lambda: SigmoidSpec(SigmoidKind.CAUCHY, beta=10.0))
    network: NetworkKind = NetworkKind.ODD_EVEN

    def __post_init__(self):
        object.__setattr__(self, "network", NetworkKind(self.network))
        if self.m < 1:
            raise ValueError("m must be positive")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")


def topk_rows(net: SortingNetwork, spec: SigmoidSpec, x, k: int, return_work: bool = False):
    """First ``k`` rows of the relaxed permutation matrix.

    The network runs forward once (keeping only the swap coefficients), then
    a ``k x n`` block is multiplied through the sparse layer factors from the
    last layer to the first.  ``work`` counts the scalar multiplications of
    that second pass.
    """
    if not 1 <= k <= net.n:
        raise ValueError(f"k must lie in [1, {net.n}], got {k}")
    res = diffsort.relaxed_sort(net, spec, x, materialize_P=False)
    shape = res._shape
    bsz = int(np.prod(shape[:-1], dtype=np.int64))
    n = net.n
    R = np.zeros((bsz, k, n))
    R[:, np.arange(k), np.arange(k)] = 1.0
    work = 0
    for st in reversed(res._steps):
        i, j = st.i, st.j
        w = st.alpha[:, None, :]
        ri, rj = R[:, :, i], R[:, :, j]
        R[:, :, i] = w * ri + (1.0 - w) * rj
        R[:, :, j] = w * rj + (1.0 - w) * ri
        work += 4 * k * i.size
    R = R.reshape(shape[:-1] + (k, n))
    return (R, work) if return_work else R


def select_subset(scores, y, m: int):
    """Class indices routed into the ranking network.

    Takes the top-``m`` scores, swaps the lowest of them for the true class
    when it is missing, and returns the indices in ascending class order
    together with the position of ``y`` inside the subset.
    """
    scores = np.atleast_2d(scores)
    y = np.atleast_1d(np.asarray(y, dtype=np.intp))
    order = np.argsort(-scores, axis=-1, kind="stable")[:, :m].copy()
    missing = ~np.any(order == y[:, None], axis=-1)
    order[missing, m - 1] = y[missing]
    idx = np.sort(order, axis=-1)
    pos = np.argmax(idx == y[:, None], axis=-1)
    return idx, pos


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _prepare(scores, y, pk, config):
    scores = np.asarray(scores, dtype=np.float64)
    single = scores.ndim == 1
    scores = np.atleast_2d(scores)
    y = np.atleast_1d(np.asarray(y, dtype=np.intp))
    if not isinstance(pk, TopKDistribution):
        pk = TopKDistribution(pk)
    classes = scores.shape[-1]
    m = min(config.m, classes)
    if not 1 <= pk.k_max <= m:
        raise ValueError(f"need 1 <= k_max ({pk.k_max}) <= m ({m}) <= classes ({classes})")
    if y.shape != scores.shape[:1] or np.any((y < 0) | (y >= classes)):
        raise ValueError("y must hold one valid class index per row of scores")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    return scores, y, pk, m, single


def _topk_terms(scores, y, pk, config, m):
    idx, pos = select_subset(scores, y, m)
    sub = np.take_along_axis(scores, idx, axis=-1)
    net = build(config.network, m)
    rows = topk_rows(net, config.sigmoid, -sub, pk.k_max)
    col = np.take_along_axis(rows, pos[:, None, None], axis=-1)[..., 0]
    w = pk.rank_weights(skip_first=config.mixture)
    p = col @ w
    return idx, pos, sub, net, w, p


def _check_p(p):
    if not np.all(p > 0):
        raise RelaxationCollapse("top-k probability of the true class is zero; the relaxation has collapsed")


def topk_loss(scores, y, pk, config: TopKConfig = TopKConfig()):
    """Per-sample top-k loss ``-log sum_k P_K(k) sum_{j<=k} P[j, y]``.

    Ranks are descending (rank 1 = largest score).  With ``mixture`` the
    rank-1 term is replaced by a softmax cross-entropy weighted by ``P_K(1)``.
    """
    scores, y, pk, m, single = _prepare(scores, y, pk, config)
    p1 = pk.probs[0]
    loss = np.zeros(scores.shape[0])
    if config.mixture:
        q = _softmax(scores / config.temperature)
        loss += p1 * -np.log(np.maximum(q[np.arange(len(y)), y], LOG_FLOOR))
    if not config.mixture or p1 < 1.0:
        *_, p = _topk_terms(scores, y, pk, config, m)
        _check_p(p)
        coef = (1.0 - p1) if config.mixture else 1.0
        loss += coef * -np.log(np.maximum(p, LOG_FLOOR))
    return float(loss[0]) if single else loss


def topk_loss_grad(scores, y, pk, config: TopKConfig = TopKConfig()):
    """Gradient of :func:`topk_loss` per sample, shape of ``scores``.

    Subset selection is routing, so classes outside the subset only receive
    gradient from the softmax term of the mixture.
    """
    scores, y, pk, m, single = _prepare(scores, y, pk, config)
    grad = np.zeros_like(scores)
    p1 = pk.probs[0]
    rows = np.arange(len(y))
    if config.mixture:
        q = _softmax(scores / config.temperature)
        q[rows, y] -= 1.0
        grad += p1 * q / config.temperature
    if not config.mixture or p1 < 1.0:
        idx, pos, sub, net, w, p = _topk_terms(scores, y, pk, config, m)
        _check_p(p)
        coef = (1.0 - p1) if config.mixture else 1.0
        dp = np.where(p > LOG_FLOOR, -coef / np.maximum(p, LOG_FLOOR), 0.0)
        u = np.zeros((len(y), m))
        u[:, : w.size] = w
        e_pos = np.zeros((len(y), m))
        e_pos[rows, pos] = 1.0
        res = diffsort.relaxed_sort(net, config.sigmoid, -sub, materialize_P=False)
        g_neg = diffsort.backward_rank_one(res, u, e_pos, weight=dp)
        np.add.at(grad, (rows[:, None], idx), -g_neg)
    return grad[0] if single else grad
