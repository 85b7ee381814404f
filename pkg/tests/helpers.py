"""Finite-difference oracle shared by the tests."""
import numpy as np

from diffsortkit import diffsort
from diffsortkit.sigmoid import SigmoidKind


def central_fd(f, x, h):
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        up = f(x)
        x[idx] = old - h
        down = f(x)
        x[idx] = old
        g[idx] = (up - down) / (2 * h)
    return g


def rel_err(g, ref):
    return float(np.max(np.abs(np.asarray(g) - ref)) / max(np.max(np.abs(ref)), 1e-10))


def near_kink(net, spec, x, h):
    """Reject points where a comparator difference sits within 10h of a non-smooth point of f."""
    res = diffsort.relaxed_sort(net, spec, x, materialize_P=False)
    d = np.concatenate([np.abs(s.d).ravel() for s in res._steps])
    if spec.kind is SigmoidKind.OPTIMAL:
        return bool(np.any(np.abs(d - 0.25 / spec.beta) < 10 * h))
    if spec.kind is SigmoidKind.RECIPROCAL:
        return bool(np.any(d < 10 * h))
    if spec.kind is SigmoidKind.LOGISTIC_ART:
        # phi has an |x|^-lambda slope singularity; its third derivative spoils the difference quotient near 0
        return bool(np.any(d < 0.1))
    return False
