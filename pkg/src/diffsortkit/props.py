"""Self-checks behind the ``props`` and ``gradcheck`` subcommands.

Each suite returns a :class:`Check`; sizes are kept small enough for an
interactive run.  The test suite runs the full-size versions.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import diffsort, model, optim, topk
from .network import NetworkKind, bitonic_depth, build, hard_sort
from .sigmoid import SigmoidKind, SigmoidSpec, relaxed_min_zero, unit_lipschitz_beta


@dataclass
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def central_fd(f, x, h):
    """Central finite-difference gradient of a scalar function."""
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


def rel_err(g, ref) -> float:
    return float(np.max(np.abs(g - ref)) / max(np.max(np.abs(ref)), 1e-10))


def _near_kink(net, spec, x, h):
    """True if some comparator difference lies within ``10 h`` of a point where ``f'`` is not smooth."""
    res = diffsort.relaxed_sort(net, spec, x, materialize_P=False)
    d = np.concatenate([np.abs(st.d).ravel() for st in res._steps])
    if spec.kind is SigmoidKind.OPTIMAL and np.any(np.abs(spec.beta * d - 0.25) < 10 * h * spec.beta):
        return True
    if spec.kind is SigmoidKind.RECIPROCAL and np.any(d < 10 * h):
        return True
    # the ART slope is singular at 0, which ruins difference quotients well beyond 10 h
    if spec.kind is SigmoidKind.LOGISTIC_ART and np.any(d < 0.1):
        return True
    return False


def _random_ranks(rng, n):
    return rng.permutation(n)


def gradcheck_diffsort(rng, spec, n, cases=10, h=1e-5):
    net = build(NetworkKind.ODD_EVEN, n)
    worst = 0.0
    done = 0
    while done < cases:
        x = rng.normal(size=n)
        if _near_kink(net, spec, x, h):
            continue
        ranks = _random_ranks(rng, n)
        _, g = diffsort.loss_and_grad(net, spec, x, ranks)
        fd = central_fd(lambda v: diffsort.ranking_ce_loss(diffsort.relaxed_sort(net, spec, v).perm, ranks), x, h)
        worst = max(worst, rel_err(g, fd))
        done += 1
    return worst


def gradcheck_topk(rng, spec, classes, cases=10, h=1e-5):
    cfg = topk.TopKConfig(m=classes, sigmoid=spec)
    pk = topk.TopKDistribution([0.5, 0, 0, 0, 0.5][: min(5, classes)] if classes >= 5 else [1.0])
    net = build(NetworkKind.ODD_EVEN, classes)
    worst = 0.0
    done = 0
    while done < cases:
        s = rng.normal(size=classes)
        if _near_kink(net, spec, -s, h):
            continue
        y = int(rng.integers(classes))
        g = topk.topk_loss_grad(s, y, pk, cfg)
        fd = central_fd(lambda v: topk.topk_loss(v, y, pk, cfg), s, h)
        worst = max(worst, rel_err(g, fd))
        done += 1
    return worst


def gradcheck_model(rng, dims=(4, 8, 1), cases=5, h=1e-5):
    worst = 0.0
    for seed in range(cases):
        mlp = model.init(dims, seed=int(rng.integers(1 << 31)))
        x = rng.normal(size=(3, dims[0]))
        w = rng.normal(size=(3, dims[-1]))
        out, cache = model.forward(mlp, x)
        grads, gx = model.backward(mlp, cache, w)
        params = mlp.params()
        for k, p in enumerate(params):
            def f(v, k=k):
                ps = list(params)
                ps[k] = v
                return float(np.sum(model.forward(mlp.with_params(ps), x)[0] * w))
            worst = max(worst, rel_err(grads[k], central_fd(f, p, h)))
        worst = max(worst, rel_err(gx, central_fd(lambda v: float(np.sum(model.forward(mlp, v)[0] * w)), x, h)))
    return worst


def check_topologies(rng) -> Check:
    bad = []
    for n in range(1, 11):
        bits = np.array(list(itertools.product([0.0, 1.0], repeat=n)))
        for kind in NetworkKind:
            if kind is NetworkKind.BITONIC and n & (n - 1):
                continue
            out, _ = hard_sort(build(kind, n), bits)
            if not np.array_equal(out, np.sort(bits, axis=-1)):
                bad.append(f"{kind.value} n={n}")
    for n in list(range(2, 33)) + [128]:
        x = rng.normal(size=(100, n))
        if not np.array_equal(hard_sort(build(NetworkKind.ODD_EVEN, n), x)[0], np.sort(x, axis=-1)):
            bad.append(f"odd_even random n={n}")
    for n, depth in ((16, 10), (32, 15), (1024, 55)):
        if build(NetworkKind.BITONIC, n).depth != depth or bitonic_depth(n) != depth:
            bad.append(f"bitonic depth n={n}")
    return Check("topologies", not bad, "ok" if not bad else ", ".join(bad))


def check_doubly_stochastic(rng) -> Check:
    worst = 0.0
    for n in (4, 8, 16):
        net = build(NetworkKind.ODD_EVEN, n)
        for kind in SigmoidKind:
            for beta in (1.0, 10.0, 100.0):
                P = diffsort.relaxed_sort(net, SigmoidSpec(kind, beta), rng.normal(size=(20, n))).perm
                worst = max(worst, np.max(np.abs(P.sum(-1) - 1)), np.max(np.abs(P.sum(-2) - 1)))
    return Check("doubly stochastic", worst <= 1e-6, f"max |sum - 1| = {worst:.2e}")


def check_axioms(rng, count=10_000) -> Check:
    worst = 0.0
    for kind in SigmoidKind:
        spec = SigmoidSpec(kind, float(rng.uniform(0.5, 20)))
        a, b, c = rng.normal(scale=3, size=(3, count))
        lo, hi, _ = diffsort.relaxed_swap(spec, a, b)
        lo2, hi2, _ = diffsort.relaxed_swap(spec, b, a)
        nlo, nhi, _ = diffsort.relaxed_swap(spec, -a, -b)
        slo, shi, _ = diffsort.relaxed_swap(spec, a + c, b + c)
        ilo, ihi, _ = diffsort.relaxed_swap(spec, a, a)
        errs = [
            np.abs(lo - lo2), np.abs(hi - hi2),
            np.maximum(lo - hi, 0),
            np.abs(ilo - a), np.abs(ihi - a),
            np.abs(lo + nhi), np.abs(hi + nlo),
            np.abs(slo - (lo + c)), np.abs(shi - (hi + c)),
            np.abs(lo + hi - a - b),
            np.maximum(np.minimum(a, b) - lo, 0), np.maximum(hi - np.maximum(a, b), 0),
        ]
        worst = max(worst, max(float(e.max()) for e in errs))
    return Check("relaxed min/max axioms", worst <= 1e-9, f"max violation {worst:.2e}")


def check_monotonicity() -> Check:
    x = np.arange(-20.0, 20.0 + 5e-4, 1e-3)
    msgs, ok = [], True
    for kind in (SigmoidKind.RECIPROCAL, SigmoidKind.CAUCHY, SigmoidKind.OPTIMAL):
        step = np.diff(relaxed_min_zero(SigmoidSpec(kind, 1.0), x)).min()
        ok &= step >= -1e-12
        msgs.append(f"{kind.value} min step {step:.1e}")
    slope = (np.diff(relaxed_min_zero(SigmoidSpec(SigmoidKind.LOGISTIC, 1.0), x)) / np.diff(x)).min()
    ok &= slope < -1e-4
    msgs.append(f"logistic min slope {slope:.1e}")
    return Check("min_f(x,0) monotonicity", bool(ok), "; ".join(msgs))


def check_error_bounds() -> Check:
    x = np.logspace(-6, 6, 200_001)
    x = np.concatenate([-x, x])
    sup = {}
    for kind in (SigmoidKind.OPTIMAL, SigmoidKind.CAUCHY, SigmoidKind.LOGISTIC, SigmoidKind.RECIPROCAL):
        spec = SigmoidSpec(kind, unit_lipschitz_beta(kind))
        sup[kind] = float(np.max(np.abs(relaxed_min_zero(spec, x) - np.minimum(x, 0))))
    ok = (abs(sup[SigmoidKind.OPTIMAL] - 1 / 16) <= 1e-3 and abs(sup[SigmoidKind.CAUCHY] - 1 / math.pi**2) <= 1e-3
          and abs(sup[SigmoidKind.LOGISTIC] - 0.0696) <= 1e-3 and sup[SigmoidKind.RECIPROCAL] >= 0.249)
    return Check("error suprema", ok, ", ".join(f"{k.value} {v:.4f}" for k, v in sup.items()))


def check_gradients(rng) -> Check:
    errs = {
        "diffsort": max(gradcheck_diffsort(rng, SigmoidSpec(k, 2.0), n, cases=3) for k in SigmoidKind for n in (3, 5)),
        "topk": gradcheck_topk(rng, SigmoidSpec(SigmoidKind.CAUCHY, 3.0), 6, cases=5),
        "model": gradcheck_model(rng),
    }
    return Check("gradients vs finite differences", max(errs.values()) < 1e-5,
                 ", ".join(f"{k} {v:.1e}" for k, v in errs.items()))


def check_two_stage(rng) -> Check:
    mlp = model.init([4, 8, 3], seed=int(rng.integers(1 << 31)))
    x = rng.normal(size=(5, 4))
    t = rng.normal(size=(5, 3))
    lr = 0.05
    two = optim.two_stage_gd_step(mlp, x, lambda y: y - t, lr)
    y, cache = model.forward(mlp, x)
    grads, _ = model.backward(mlp, cache, y - t)
    direct = [p - lr * g for p, g in zip(mlp.params(), grads)]
    gap = max(float(np.max(np.abs(a - b))) for a, b in zip(two.params(), direct))
    bit = np.array_equal(optim.newton_loss_grad(optim.NewtonLossSpec(damping=0.0), y, t), y - t)
    return Check("two-stage equivalence", gap <= 1e-10 and bit, f"max gap {gap:.1e}, MSE surrogate bit-equal {bit}")


def check_topk_rows(rng) -> Check:
    worst = 0.0
    for n in (8, 16, 32):
        net = build(NetworkKind.ODD_EVEN, n)
        spec = SigmoidSpec(SigmoidKind.CAUCHY, 5.0)
        x = rng.normal(size=n)
        P = diffsort.relaxed_sort(net, spec, x).perm
        for k in (1, 5):
            worst = max(worst, float(np.max(np.abs(topk.topk_rows(net, spec, x, k) - P[:k]))))
    _, w1 = topk.topk_rows(build(NetworkKind.ODD_EVEN, 16), spec, rng.normal(size=16), 1, return_work=True)
    _, w5 = topk.topk_rows(build(NetworkKind.ODD_EVEN, 16), spec, rng.normal(size=16), 5, return_work=True)
    ratio = w5 / w1
    return Check("top-k truncation", worst <= 1e-9 and 5 / 3 <= ratio <= 15,
                 f"max row gap {worst:.1e}, work ratio k=5/k=1 {ratio:.2f}")


def check_resgro_weights() -> Check:
    worst = 0.0
    for M in range(1, 9):
        for K in range(1, M + 1):
            counts = np.zeros(M)
            for sub in itertools.combinations(range(M), K):
                counts[min(sub)] += 1
            worst = max(worst, float(np.max(np.abs(counts / counts.sum() - optim.resgro_rank_weights(M, K)))))
    return Check("RESGRO rank weights", worst <= 1e-12, f"max gap {worst:.1e}")


def run_all(seed: int = 0) -> list:
    rng = np.random.default_rng(seed)
    return [
        check_topologies(rng),
        check_doubly_stochastic(rng),
        check_gradients(rng),
        check_monotonicity(),
        check_error_bounds(),
        check_two_stage(rng),
        check_topk_rows(rng),
        check_resgro_weights(),
        check_axioms(rng),
    ]
