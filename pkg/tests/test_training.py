import math

import numpy as np
import pytest

from diffsortkit import training


def small(**kw):
    base = dict(steps=30, pool=400, eval_tuples=100, eval_every=10, hidden=(8,), walltime=False)
    base.update(kw)
    return training.RankConfig(**base)


def test_default_beta_table():
    assert training.default_beta("cauchy", "odd_even", 5) == pytest.approx(51 * math.pi)
    assert training.default_beta("logistic", "bitonic", 16) == 43
    assert training.default_beta("optimal", "odd_even", 6) == training.default_beta("optimal", "odd_even", 5)
    assert small(beta=3.0).spec().beta == 3.0


def test_config_validation():
    for bad in (dict(n=1), dict(objective="sgd"), dict(network="bitonic", n=5), dict(lr=0.0), dict(resgro_k=100)):
        with pytest.raises(ValueError):
            small(**bad)


@pytest.mark.parametrize("objective", ["ce", "resgro", "newton"])
def test_training_is_deterministic(objective):
    a = training.train_rank(small(objective=objective, resgro_k=4, resgro_m=8))
    b = training.train_rank(small(objective=objective, resgro_k=4, resgro_m=8))
    assert [r.step for r in a.rows] == [0, 10, 20, 30]
    assert a.rows == b.rows
    assert all(np.array_equal(p, q) for p, q in zip(a.model.params(), b.model.params()))


def test_em5_only_for_five_or_more():
    assert math.isnan(training.train_rank(small(n=4, steps=1)).final.em5)
    assert not math.isnan(training.train_rank(small(n=6, steps=1)).final.em5)


def test_short_training_improves_ranking():
    rows = training.train_rank(small(steps=400, eval_every=400, hidden=(32,), pool=5000, eval_tuples=300)).rows
    assert rows[-1].ew > rows[0].ew + 0.1
    assert rows[-1].loss < rows[0].loss


def test_divergence_is_raised(monkeypatch):
    monkeypatch.setattr(training.diffsort, "ranking_ce_grad", lambda p, r: np.full_like(p, np.nan))
    with pytest.raises(training.TrainingDiverged):
        training.train_rank(small())


def test_topk_training_smoke():
    cfg = training.TopKTrainConfig(steps=20, eval_every=10, pool=500, eval_samples=100, walltime=False)
    _, rows = training.train_topk(cfg)
    assert [r.step for r in rows] == [0, 10, 20]
    assert all(0 <= r.top1 <= r.top5 <= 1 for r in rows)
    with pytest.raises(ValueError):
        training.TopKTrainConfig(pk="0.5,0.6")
