"""Training loops for ranking supervision and top-k classification."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import data, diffsort, model, optim, topk
from .network import NetworkKind, build
from .sigmoid import SigmoidKind, SigmoidSpec

# Inverse temperatures tuned for the four-digit ranking benchmark, keyed by (network, n).
PAPER_BETA = {
    ("odd_even", 3): {"logistic": 79, "logistic_art": 15, "reciprocal": 14, "cauchy": 14.5 * math.pi, "optimal": 6},
    ("odd_even", 5): {"logistic": 30, "logistic_art": 20, "reciprocal": 60, "cauchy": 51 * math.pi, "optimal": 20},
    ("odd_even", 7): {"logistic": 33, "logistic_art": 13, "reciprocal": 69, "cauchy": 71 * math.pi, "optimal": 29},
    ("odd_even", 9): {"logistic": 54, "logistic_art": 34, "reciprocal": 44, "cauchy": 15 * math.pi, "optimal": 32},
    ("odd_even", 15): {"logistic": 32, "logistic_art": 16, "reciprocal": 120, "cauchy": 40 * math.pi, "optimal": 25},
    ("odd_even", 32): {"logistic": 128, "logistic_art": 29, "reciprocal": 1140, "cauchy": 169 * math.pi, "optimal": 124},
    ("bitonic", 16): {"logistic": 43, "logistic_art": 28, "reciprocal": 124, "cauchy": 12 * math.pi, "optimal": 17},
    ("bitonic", 32): {"logistic": 8, "logistic_art": 26, "reciprocal": 76, "cauchy": 48.5 * math.pi, "optimal": 25},
}


def default_beta(kind, network, n: int) -> float:
    """Tabulated value for ``(network, n)``; falls back to the odd-even ``n = 5`` column."""
    kind = SigmoidKind(kind).value
    network = NetworkKind(network).value
    return float(PAPER_BETA.get((network, n), PAPER_BETA[("odd_even", 5)])[kind])


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class RankConfig:
    n: int = 5
    d: int = 16
    hidden: tuple = (64, 64)
    network: str = "odd_even"
    sigmoid: str = "cauchy"
    beta: float | None = None
    art_lambda: float = 0.25
    objective: str = "ce"  # ce | resgro | newton
    optimizer: str = "adam"
    lr: float = 10**-3.5
    steps: int = 20000
    batch: int = 64
    seed: int = 0
    teacher_seed: int = 0
    pool: int = 100000
    eval_every: int = 500
    eval_tuples: int = 1000
    resgro_k: int = 64
    resgro_m: int = 64
    resgro_sigma: float = 0.1
    resgro_noise: str = "gaussian"
    curvature: str = "fisher"
    damping: float = 1e-4
    mnist_dir: str | None = None
    walltime: bool = True

    def __post_init__(self):
        self.network = NetworkKind(self.network).value
        self.sigmoid = SigmoidKind(self.sigmoid).value
        if self.objective not in ("ce", "resgro", "newton"):
            raise ValueError(f"unknown objective {self.objective!r}")
        for name in ("n", "d", "steps", "batch", "pool", "eval_every", "eval_tuples"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.n < 2:
            raise ValueError("ranking needs n >= 2")
        build(self.network, self.n)  # rejects unsupported sizes early
        self.spec()
        optim.ResgroSpec(self.resgro_k, self.resgro_m, self.resgro_sigma, self.resgro_noise)
        optim.OptimizerState(self.optimizer, self.lr)
        if self.objective == "newton":
            self.newton_spec()

    def spec(self) -> SigmoidSpec:
        beta = default_beta(self.sigmoid, self.network, self.n) if self.beta is None else self.beta
        return SigmoidSpec(self.sigmoid, beta, art_lambda=self.art_lambda)

    def newton_spec(self) -> optim.NewtonLossSpec:
        # the ranking loss has no closed-form Hessian here, so only Fisher curvature is available
        return optim.NewtonLossSpec(self.curvature, self.damping, optim.LossKind.CUSTOM,
                                    grad_fn=lambda y, t: t, hess_fn=None)


@dataclass
class EvalRow:
    step: int
    loss: float
    em: float
    ew: float
    em5: float
    wall_time: float


@dataclass
class RankResult:
    model: model.Mlp
    rows: list = field(default_factory=list)

    @property
    def final(self) -> EvalRow:
        return self.rows[-1]


def _scores(mlp, inputs):
    t, n, d = inputs.shape
    out, cache = model.forward(mlp, inputs.reshape(t * n, d))
    return out.reshape(t, n), cache


def evaluate_rank(mlp, batch: data.RankingBatch, net, spec) -> tuple:
    """Held-out ranking cross-entropy and ``(EM, EW, EM5)``."""
    scores, _ = _scores(mlp, batch.inputs)
    res = diffsort.relaxed_sort(net, spec, scores)
    loss = diffsort.ranking_ce_loss(res.perm, batch.ranks)
    em, ew, em5 = diffsort.metrics_em_ew(scores, batch.ranks, em5=batch.n >= 5)
    return loss, em, ew, (math.nan if em5 is None else em5)


def _rank_sources(cfg: RankConfig):
    rng_pool = np.random.default_rng([cfg.seed, 0])
    rng_eval = np.random.default_rng([cfg.seed, 1])
    if cfg.mnist_dir:
        images, labels = data.load_mnist(cfg.mnist_dir, "train")
        train = data.mnist_item_pool(rng_pool, images, labels, cfg.pool)
        try:
            images, labels = data.load_mnist(cfg.mnist_dir, "t10k")
        except FileNotFoundError:
            pass
        held = data.mnist_item_pool(rng_eval, images, labels, cfg.eval_tuples).sample(rng_eval, cfg.eval_tuples, cfg.n)
        return (lambda rng, b: train.sample(rng, b, cfg.n)), held, train.features.shape[1]
    train = data.synth_ranking(rng_pool, cfg.d, cfg.n, cfg.pool, cfg.teacher_seed)
    held = data.synth_ranking(rng_eval, cfg.d, cfg.n, cfg.eval_tuples, cfg.teacher_seed)
    return (lambda rng, b: train.sample(rng, b)), held, cfg.d


def train_rank(cfg: RankConfig, on_eval=None) -> RankResult:
    """Train an MLP scorer from ordering supervision only.

    ``on_eval(row)`` is called after every evaluation (including step 0).
    """
    sample, held, d_in = _rank_sources(cfg)
    rng_batch = np.random.default_rng([cfg.seed, 2])
    rng_resgro = np.random.default_rng([cfg.seed, 3])
    net = build(cfg.network, cfg.n)
    spec = cfg.spec()
    mlp = model.init([d_in, *cfg.hidden, 1], seed=cfg.seed)
    state = optim.OptimizerState(cfg.optimizer, cfg.lr)
    rspec = optim.ResgroSpec(cfg.resgro_k, cfg.resgro_m, cfg.resgro_sigma, cfg.resgro_noise)
    nspec = cfg.newton_spec() if cfg.objective == "newton" else None
    result = RankResult(mlp)
    start = time.perf_counter()

    def record(step):
        loss, em, ew, em5 = evaluate_rank(result.model, held, net, spec)
        wall = time.perf_counter() - start if cfg.walltime else 0.0
        row = EvalRow(step, loss, em, ew, em5, wall)
        result.rows.append(row)
        if on_eval is not None:
            on_eval(row)

    record(0)
    for step in range(1, cfg.steps + 1):
        batch = sample(rng_batch, cfg.batch)
        y, cache = _scores(result.model, batch.inputs)
        B = y.shape[0]
        if cfg.objective == "resgro":
            ranks = batch.ranks[:, None, :]
            z = optim.resgro_target(y, lambda pts: -optim.kendall_tau(pts, ranks), rspec, rng_resgro)
            loss = -float(np.mean(optim.kendall_tau(y, batch.ranks)))
            gy = (y - z) / B
        else:
            res = diffsort.relaxed_sort(net, spec, y)
            loss = diffsort.ranking_ce_loss(res.perm, batch.ranks)
            gy = diffsort.backward_from_result(res, grad_P=diffsort.ranking_ce_grad(res.perm, batch.ranks))
            if nspec is not None:
                # per-tuple gradients (the batch loss is their mean)
                gy = optim.newton_loss_grad(nspec, y, gy * B) / B
        if not (math.isfinite(loss) and np.all(np.isfinite(gy))):
            raise TrainingDiverged(f"non-finite loss or gradient at step {step} (loss={loss})")
        grads, _ = model.backward(result.model, cache, gy.reshape(-1, 1))
        result.model = result.model.with_params(optim.step(state, result.model.params(), grads))
        if step % cfg.eval_every == 0 or step == cfg.steps:
            record(step)
    return result


@dataclass
class TopKTrainConfig:
    classes: int = 10
    d: int = 16
    hidden: tuple = (64, 64)
    pk: str = "0.5,0,0,0,0.5"
    m: int = 16
    mixture: bool = False
    sigmoid: str = "cauchy"
    beta: float = 10.0
    network: str = "odd_even"
    lr: float = 1e-3
    steps: int = 5000
    batch: int = 64
    seed: int = 0
    teacher_seed: int = 0
    pool: int = 20000
    eval_every: int = 500
    eval_samples: int = 1000
    walltime: bool = True

    def __post_init__(self):
        for name in ("classes", "d", "steps", "batch", "pool", "eval_every", "eval_samples"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        self.distribution()
        self.topk_config()

    def distribution(self) -> topk.TopKDistribution:
        return topk.TopKDistribution.parse(self.pk)

    def topk_config(self) -> topk.TopKConfig:
        return topk.TopKConfig(m=self.m, mixture=self.mixture, sigmoid=SigmoidSpec(self.sigmoid, self.beta),
                               network=self.network)


@dataclass
class TopKRow:
    step: int
    loss: float
    top1: float
    top5: float
    wall_time: float


def train_topk(cfg: TopKTrainConfig, on_eval=None):
    """Train a classifier on the top-k objective; returns ``(model, rows)``."""
    rng_pool = np.random.default_rng([cfg.seed, 0])
    rng_eval = np.random.default_rng([cfg.seed, 1])
    rng_batch = np.random.default_rng([cfg.seed, 2])
    x_pool, y_pool = data.synth_classes(rng_pool, cfg.d, cfg.classes, cfg.pool, cfg.teacher_seed)
    x_held, y_held = data.synth_classes(rng_eval, cfg.d, cfg.classes, cfg.eval_samples, cfg.teacher_seed)
    pk = cfg.distribution()
    tcfg = cfg.topk_config()
    mlp = model.init([cfg.d, *cfg.hidden, cfg.classes], seed=cfg.seed)
    state = optim.OptimizerState("adam", cfg.lr)
    rows = []
    start = time.perf_counter()

    def record(step):
        logits, _ = model.forward(mlp, x_held)
        loss = float(np.mean(topk.topk_loss(logits, y_held, pk, tcfg)))
        order = np.argsort(-logits, axis=-1, kind="stable")
        top1 = float(np.mean(order[:, 0] == y_held))
        top5 = float(np.mean(np.any(order[:, :5] == y_held[:, None], axis=-1)))
        row = TopKRow(step, loss, top1, top5, time.perf_counter() - start if cfg.walltime else 0.0)
        rows.append(row)
        if on_eval is not None:
            on_eval(row)

    record(0)
    for step in range(1, cfg.steps + 1):
        idx = rng_batch.integers(0, cfg.pool, size=cfg.batch)
        logits, cache = model.forward(mlp, x_pool[idx])
        loss = float(np.mean(topk.topk_loss(logits, y_pool[idx], pk, tcfg)))
        g = topk.topk_loss_grad(logits, y_pool[idx], pk, tcfg) / cfg.batch
        if not (math.isfinite(loss) and np.all(np.isfinite(g))):
            raise TrainingDiverged(f"non-finite loss or gradient at step {step} (loss={loss})")
        grads, _ = model.backward(mlp, cache, g)
        mlp = mlp.with_params(optim.step(state, mlp.params(), grads))
        if step % cfg.eval_every == 0 or step == cfg.steps:
            record(step)
    return mlp, rows
