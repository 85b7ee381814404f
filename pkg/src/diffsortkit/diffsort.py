"""Relaxed execution of sorting networks.

Each comparator mixes its two wires with ``alpha = f(b - a)``; the layer
factor ``P_l`` has ``alpha`` on the two diagonal entries and ``1 - alpha``
off-diagonal.  ``P = P_L ... P_1`` is doubly stochastic and column ``c`` is
a distribution over the output positions of input ``c``.

Everything is vectorized over leading batch axes; the trailing axis is the
wire axis of length ``net.n``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .network import SortingNetwork, ranks_of
from .sigmoid import SigmoidSpec, _slope, _value

LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class GroundTruthPermutation:
    """``ranks[c]`` is the true output position of input ``c``."""

    ranks: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.ranks, dtype=np.intp)
        if r.ndim != 1 or not np.array_equal(np.sort(r), np.arange(r.size)):
            raise ValueError("ranks must be a permutation of 0..n-1")
        object.__setattr__(self, "ranks", r)

    @property
    def n(self) -> int:
        return self.ranks.size

    def matrix(self) -> np.ndarray:
        return permutation_matrix(self.ranks)


def permutation_matrix(ranks):
    """One-hot ``Q`` with ``Q[ranks[c], c] = 1`` (batched over leading axes)."""
    ranks = np.asarray(ranks, dtype=np.intp)
    n = ranks.shape[-1]
    return (ranks[..., None, :] == np.arange(n)[:, None]).astype(np.float64)


@dataclass
class _Step:
    i: np.ndarray
    j: np.ndarray
    a: np.ndarray
    b: np.ndarray
    d: np.ndarray
    alpha: np.ndarray
    p_prev: np.ndarray | None


@dataclass
class RelaxedSortResult:
    sorted_values: np.ndarray
    alphas: list
    perm: np.ndarray | None
    spec: SigmoidSpec = field(repr=False)
    _steps: list = field(repr=False, default_factory=list)
    _shape: tuple = field(repr=False, default=())


def relaxed_swap(spec: SigmoidSpec, a, b):
    """Continuous conditional swap; returns ``(min_f, max_f, alpha)``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("relaxed_swap inputs must be finite")
    alpha = _value(spec, b - a)
    lo = a * alpha + b * (1.0 - alpha)
    hi = b * alpha + a * (1.0 - alpha)
    if lo.ndim == 0:
        return float(lo), float(hi), float(alpha)
    return lo, hi, alpha


def _as_batch(net, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1:] != (net.n,):
        raise ValueError(f"expected trailing length {net.n}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("inputs must be finite")
    return x.reshape(-1, net.n), x.shape


def relaxed_sort(net: SortingNetwork, spec: SigmoidSpec, x, materialize_P: bool = True) -> RelaxedSortResult:
    """Execute ``net`` with relaxed swaps; optionally accumulate ``P``."""
    v, shape = _as_batch(net, x)
    v = v.copy()
    bsz, n = v.shape
    P = np.broadcast_to(np.eye(n), (bsz, n, n)).copy() if materialize_P else None
    steps, alphas = [], []
    for i, j in net.wires:
        if i.size == 0:
            alphas.append(np.empty(shape[:-1] + (0,)))
            continue
        a, b = v[:, i], v[:, j]
        d = b - a
        al = _value(spec, d)
        v[:, i] = al * a + (1.0 - al) * b
        v[:, j] = al * b + (1.0 - al) * a
        p_prev = None
        if P is not None:
            p_prev = P
            P = P.copy()
            w = al[:, :, None]
            pi, pj = p_prev[:, i], p_prev[:, j]
            P[:, i] = w * pi + (1.0 - w) * pj
            P[:, j] = w * pj + (1.0 - w) * pi
        steps.append(_Step(i, j, a, b, d, al, p_prev))
        alphas.append(al.reshape(shape[:-1] + (i.size,)))
    perm = None if P is None else P.reshape(shape + (n,))
    return RelaxedSortResult(v.reshape(shape), alphas, perm, spec, steps, shape)


def backward_from_result(res: RelaxedSortResult, grad_P=None, grad_values=None):
    """Reverse pass through the swap chain.

    ``grad_P`` is dL/dP (needs a materialized forward), ``grad_values`` is
    dL/d(sorted_values).  Returns dL/dx with the input's shape.
    """
    shape = res._shape
    n = shape[-1]
    bsz = int(np.prod(shape[:-1], dtype=np.int64))
    gv = np.zeros((bsz, n)) if grad_values is None else np.array(grad_values, dtype=np.float64).reshape(bsz, n)
    gp = None
    if grad_P is not None:
        if res.perm is None:
            raise ValueError("grad_P requires a forward pass with materialize_P=True")
        gp = np.array(grad_P, dtype=np.float64).reshape(bsz, n, n)
    for st in reversed(res._steps):
        i, j, al = st.i, st.j, st.alpha
        gi, gj = gv[:, i], gv[:, j]
        g_alpha = (gi - gj) * (st.a - st.b)
        gv[:, i] = al * gi + (1.0 - al) * gj
        gv[:, j] = al * gj + (1.0 - al) * gi
        if gp is not None:
            Gi, Gj = gp[:, i], gp[:, j]
            g_alpha += np.einsum("bkn,bkn->bk", Gi - Gj, st.p_prev[:, i] - st.p_prev[:, j])
            w = al[:, :, None]
            gp[:, i] = w * Gi + (1.0 - w) * Gj
            gp[:, j] = w * Gj + (1.0 - w) * Gi
        gd = g_alpha * _slope(res.spec, st.d)
        gv[:, j] += gd
        gv[:, i] -= gd
    return gv.reshape(shape)


def _pick(P, ranks):
    ranks = np.asarray(ranks, dtype=np.intp)
    if P.shape[-2:] != (ranks.shape[-1],) * 2 or P.shape[:-2] != ranks.shape[:-1]:
        raise ValueError(f"shape mismatch: P {P.shape} vs ranks {ranks.shape}")
    return np.take_along_axis(P, ranks[..., None, :], axis=-2)[..., 0, :]


def ranking_ce_loss(P, truth, floor: float = LOG_FLOOR) -> float:
    """Mean over columns (and batch) of ``-log P[rank(c), c]``."""
    P = np.asarray(P, dtype=np.float64)
    ranks = truth.ranks if isinstance(truth, GroundTruthPermutation) else truth
    p = _pick(P, ranks)
    return float(np.mean(-np.log(np.maximum(p, floor))))


def ranking_ce_grad(P, truth, floor: float = LOG_FLOOR):
    """dL/dP for :func:`ranking_ce_loss`; zero where the floor is active."""
    P = np.asarray(P, dtype=np.float64)
    ranks = np.asarray(truth.ranks if isinstance(truth, GroundTruthPermutation) else truth, dtype=np.intp)
    p = _pick(P, ranks)
    scale = p.size
    g = np.where(p > floor, -1.0 / (np.maximum(p, floor) * scale), 0.0)
    out = np.zeros_like(P)
    np.put_along_axis(out, ranks[..., None, :], g[..., None, :], axis=-2)
    return out


def loss_and_grad(net, spec, x, truth):
    """Ranking cross-entropy and its gradient wrt the input scores."""
    res = relaxed_sort(net, spec, x, materialize_P=True)
    ranks = truth.ranks if isinstance(truth, GroundTruthPermutation) else truth
    loss = ranking_ce_loss(res.perm, ranks)
    grad = backward_from_result(res, grad_P=ranking_ce_grad(res.perm, ranks))
    return loss, grad


def backward(net, spec, x, truth):
    return loss_and_grad(net, spec, x, truth)[1]


def metrics_em_ew(pred_scores, truth, em5: bool = True):
    """Exact-match, element-wise and 5-tuple exact-match rank accuracies.

    EM5 splits every tuple into consecutive groups of five and compares the
    induced orderings, so models trained on any ``n >= 5`` are scored on
    the same footing.  Returns ``(EM, EW, EM5)``; EM5 is ``None`` when not
    requested.
    """
    pred_scores = np.atleast_2d(np.asarray(pred_scores, dtype=np.float64))
    truth = np.atleast_2d(np.asarray(truth, dtype=np.intp))
    if pred_scores.shape != truth.shape or pred_scores.size == 0:
        raise ValueError(f"need a non-empty batch with matching shapes, got {pred_scores.shape} and {truth.shape}")
    n = truth.shape[-1]
    pred = ranks_of(pred_scores)
    hit = pred == truth
    em = float(np.mean(np.all(hit, axis=-1)))
    ew = float(np.mean(hit))
    em5_val = None
    if em5:
        if n < 5:
            raise ValueError(f"EM5 needs n >= 5, got n={n}")
        g = n // 5
        ps = pred_scores[:, : 5 * g].reshape(-1, 5)
        ts = truth[:, : 5 * g].reshape(-1, 5)
        em5_val = float(np.mean(np.all(ranks_of(ps) == ranks_of(ts), axis=-1)))
    return em, ew, em5_val


def backward_rank_one(res: RelaxedSortResult, u, c, weight=None):
    """Gradient wrt x of ``sum_b weight_b * u_b^T P_b c_b``.

    Works on a forward pass without a materialized ``P``: the column
    ``P c`` is pushed forward and the row ``u^T P`` pulled backward, so the
    cost is O(n) per layer instead of O(n^2).
    """
    shape = res._shape
    n = shape[-1]
    bsz = int(np.prod(shape[:-1], dtype=np.int64))
    u = np.broadcast_to(np.asarray(u, dtype=np.float64), shape).reshape(bsz, n)
    col = np.broadcast_to(np.asarray(c, dtype=np.float64), shape).reshape(bsz, n).copy()
    if weight is not None:
        u = u * np.asarray(weight, dtype=np.float64).reshape(bsz, 1)
    cols = []
    for st in res._steps:
        cols.append(col)
        i, j, al = st.i, st.j, st.alpha
        ci, cj = col[:, i], col[:, j]
        col = col.copy()
        col[:, i] = al * ci + (1.0 - al) * cj
        col[:, j] = al * cj + (1.0 - al) * ci
    row = u.copy()
    gv = np.zeros((bsz, n))
    for st, cprev in zip(reversed(res._steps), reversed(cols)):
        i, j, al = st.i, st.j, st.alpha
        ri, rj = row[:, i], row[:, j]
        gi, gj = gv[:, i], gv[:, j]
        g_alpha = (ri - rj) * (cprev[:, i] - cprev[:, j]) + (gi - gj) * (st.a - st.b)
        row[:, i] = al * ri + (1.0 - al) * rj
        row[:, j] = al * rj + (1.0 - al) * ri
        gv[:, i] = al * gi + (1.0 - al) * gj
        gv[:, j] = al * gj + (1.0 - al) * gi
        gd = g_alpha * _slope(res.spec, st.d)
        gv[:, j] += gd
        gv[:, i] -= gd
    return gv.reshape(shape)
