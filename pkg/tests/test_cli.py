import csv
import json

import numpy as np
import pytest

from diffsortkit import cli, training


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_bench_layers_single_value(capsys):
    code, out, _ = run(capsys, "bench-layers", "--network", "bitonic", "--n", "16")
    assert code == 0 and out.strip() == "10"
    assert run(capsys, "bench-layers", "--network", "odd_even", "--n", "7")[1].strip() == "7"


def test_bench_layers_table(capsys):
    code, out, _ = run(capsys, "bench-layers")
    rows = list(csv.reader(out.splitlines()))
    assert code == 0 and rows[0] == ["n", "odd_even", "bitonic"]
    assert ["1024", "1024", "55"] in rows


def test_props_exit_zero(capsys):
    code, out, _ = run(capsys, "props")
    assert code == 0
    assert out.count("PASS") == len(out.strip().splitlines())


@pytest.mark.parametrize("kind", ["logistic", "logistic_art", "reciprocal", "cauchy", "optimal"])
def test_gradcheck(capsys, kind):
    code, out, _ = run(capsys, "gradcheck", "--sigmoid", kind, "--beta", "2")
    assert code == 0
    assert all(float(line.split()[-1]) < 1e-5 for line in out.strip().splitlines())


def test_dump_network_and_perm(capsys):
    code, out, _ = run(capsys, "dump-network", "--network", "odd_even", "--n", "3")
    assert code == 0 and out.strip()
    code, out, _ = run(capsys, "dump-perm", "--values", "3,1,2", "--sigmoid", "logistic", "--beta", "1000")
    P = np.loadtxt(out.splitlines(), delimiter=",")
    np.testing.assert_allclose(P, [[0, 1, 0], [0, 0, 1], [1, 0, 0]], atol=1e-9)


def test_dump_perm_needs_values(capsys):
    assert run(capsys, "dump-perm")[0] == 2


def test_train_rank_csv_is_deterministic(tmp_path, capsys):
    outs = []
    for name in ("a", "b"):
        code, _, _ = run(capsys, "train-rank", "--steps", "40", "--seed", "3", "--no-walltime",
                         "--out", str(tmp_path / name), "--config", str(small_config(tmp_path)))
        assert code == 0
        outs.append((tmp_path / name / "metrics.csv").read_text())
    assert outs[0] == outs[1]
    rows = list(csv.DictReader(outs[0].splitlines()))
    assert [r["step"] for r in rows] == ["0", "20", "40"]
    assert all(float(r["wall_time"]) == 0.0 for r in rows)
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["status"] == "ok" and summary["config"]["seed"] == 3


def small_config(tmp_path):
    path = tmp_path / "small.cfg"
    path.write_text("# tiny run\npool = 500\neval_tuples = 50\neval_every = 20\nhidden = 8\nsteps = 999\n")
    return path


def test_flags_override_config(tmp_path, capsys):
    code, out, err = run(capsys, "train-rank", "--config", str(small_config(tmp_path)), "--steps", "5")
    assert code == 0
    rows = list(csv.DictReader(out.splitlines()))
    assert rows[-1]["step"] == "5"
    summary = json.loads(err)
    assert summary["config"]["pool"] == 500 and summary["config"]["hidden"] == [8]


@pytest.mark.parametrize("flag", ["--resgro", "--newton"])
def test_alternative_objectives_run(tmp_path, capsys, flag):
    code, out, _ = run(capsys, "train-rank", flag, "--steps", "10", "--config", str(small_config(tmp_path)))
    assert code == 0
    assert all(np.isfinite(float(r["loss"])) for r in csv.DictReader(out.splitlines()))


def test_resgro_config_aliases(tmp_path, capsys):
    cfg = small_config(tmp_path)
    cfg.write_text(cfg.read_text() + "objective = resgro\nresgro.k = 4\nresgro.m = 8\n")
    code, _, err = run(capsys, "train-rank", "--steps", "3", "--config", str(cfg))
    assert code == 0
    assert json.loads(err)["config"]["resgro_k"] == 4


def test_train_topk_runs(capsys):
    code, out, err = run(capsys, "train-topk", "--steps", "20", "--no-walltime")
    assert code == 0
    assert list(csv.reader(out.splitlines()))[0] == ["step", "loss", "top1", "top5", "wall_time"]
    assert json.loads(err)["status"] == "ok"


@pytest.mark.parametrize("text", ["steps = -1\n", "sigmoid = tanh\n", "no_such_key = 1\n", "garbage line\n",
                                  "resgro.k = 100\n", "batch = many\n"])
def test_invalid_config_is_rejected(tmp_path, capsys, text):
    path = tmp_path / "bad.cfg"
    path.write_text(text)
    code, _, err = run(capsys, "train-rank", "--config", str(path))
    assert code == 2 and err.startswith("error:")


def test_missing_config_and_conflicting_flags(tmp_path, capsys):
    assert run(capsys, "train-rank", "--config", str(tmp_path / "nope.cfg"))[0] == 2
    assert run(capsys, "train-rank", "--resgro", "--newton")[0] == 2
    assert run(capsys, "train-topk", "--n", "5")[0] == 2


def test_divergence_exit_code(tmp_path, capsys, monkeypatch):
    monkeypatch.setattr(training.diffsort, "ranking_ce_loss", lambda *a, **k: float("nan"))
    code, _, err = run(capsys, "train-rank", "--steps", "5", "--config", str(small_config(tmp_path)),
                       "--out", str(tmp_path / "o"))
    assert code == 3 and "diverged" in err
    assert json.loads((tmp_path / "o" / "summary.json").read_text())["status"] == "diverged"


def test_read_config_comments_and_aliases(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("  # header\nresgro.sigma = 0.2  # trailing\nmnist-dir = none\n\n")
    assert cli.read_config(path) == {"resgro_sigma": "0.2", "mnist_dir": "none"}
