"""Command-line front end: ``diffsortkit <subcommand> [flags]``."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import os
import sys

import numpy as np

from . import diffsort, props, training
from .network import NetworkKind, bitonic_depth, build
from .sigmoid import SigmoidKind, SigmoidSpec

TASKS = ("train-rank", "train-topk", "props", "gradcheck", "bench-layers", "dump-network", "dump-perm")

# config-file keys that differ from the dataclass field names
_ALIASES = {
    "resgro.k": "resgro_k",
    "resgro.m": "resgro_m",
    "resgro.sigma": "resgro_sigma",
    "resgro.noise": "resgro_noise",
    "p_k": "pk",
    "lambda": "art_lambda",
    "art.lambda": "art_lambda",
}


class ConfigError(ValueError):
    pass


def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[_ALIASES.get(key, key).replace(".", "_").replace("-", "_")] = value
    return out


def _coerce(field: dataclasses.Field, value: str):
    default = field.default
    if field.name == "hidden":
        return tuple(int(v) for v in value.split(",") if v.strip())
    if isinstance(default, bool):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {value!r}")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float) or field.name == "beta":
        return float(value)
    if field.name == "mnist_dir" and value.lower() in ("", "none"):
        return None
    return value


def build_config(cls, settings: dict):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in settings.items():
        if key not in fields:
            raise ConfigError(f"unknown setting {key!r} for this task")
        try:
            kwargs[key] = _coerce(fields[key], value) if isinstance(value, str) else value
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from exc
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def _parser():
    p = argparse.ArgumentParser(prog="diffsortkit", description="Differentiable sorting networks: training and checks.")
    p.add_argument("task", choices=TASKS)
    p.add_argument("--config", help="key=value settings file (flags take precedence)")
    p.add_argument("--seed", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--sigmoid", choices=[k.value for k in SigmoidKind])
    p.add_argument("--beta", type=float)
    p.add_argument("--network", choices=[k.value for k in NetworkKind])
    p.add_argument("--steps", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--out", help="directory for metrics.csv and summary.json")
    p.add_argument("--mnist-dir", help="directory with the MNIST IDX files (train-rank)")
    p.add_argument("--resgro", action="store_true", help="train-rank: RESGRO on negative Kendall tau")
    p.add_argument("--newton", action="store_true", help="train-rank: Newton-loss surrogate with Fisher curvature")
    p.add_argument("--no-walltime", action="store_true", help="write 0 in the wall_time column (reproducible CSV)")
    p.add_argument("--values", help="dump-perm: comma-separated input scores")
    return p


def _settings(args) -> dict:
    settings = read_config(args.config) if args.config else {}
    flags = {"seed": args.seed, "n": args.n, "sigmoid": args.sigmoid, "beta": args.beta, "network": args.network,
             "steps": args.steps, "batch": args.batch, "mnist_dir": args.mnist_dir}
    settings.update({k: v for k, v in flags.items() if v is not None})
    if args.resgro and args.newton:
        raise ConfigError("--resgro and --newton are mutually exclusive")
    if args.resgro:
        settings["objective"] = "resgro"
    if args.newton:
        settings["objective"] = "newton"
    if args.no_walltime:
        settings["walltime"] = False
    return settings


class _Sink:
    """CSV rows to ``<out>/metrics.csv`` or stdout; summary to ``<out>/summary.json`` or stderr."""

    def __init__(self, out, header):
        self.out = out
        if out:
            os.makedirs(out, exist_ok=True)
            self.fh = open(os.path.join(out, "metrics.csv"), "w", newline="")
        else:
            self.fh = sys.stdout
        self.writer = csv.writer(self.fh, lineterminator="\n")
        self.writer.writerow(header)
        self.fh.flush()

    def row(self, values):
        self.writer.writerow([repr(float(v)) if isinstance(v, float) else v for v in values])
        self.fh.flush()

    def close(self, summary):
        text = json.dumps(summary, indent=2, sort_keys=True, default=str)
        if self.out:
            self.fh.close()
            with open(os.path.join(self.out, "summary.json"), "w") as fh:
                fh.write(text + "\n")
        else:
            print(text, file=sys.stderr)


def _echo(cfg):
    return {k: v for k, v in dataclasses.asdict(cfg).items()}


def run_train_rank(args) -> int:
    settings = _settings(args)
    cfg = build_config(training.RankConfig, settings)
    sink = _Sink(args.out, ["step", "loss", "EM", "EW", "EM5", "wall_time"])
    try:
        result = training.train_rank(cfg, on_eval=lambda r: sink.row([r.step, r.loss, r.em, r.ew, r.em5, r.wall_time]))
    except training.TrainingDiverged as exc:
        sink.close({"status": "diverged", "error": str(exc), "config": _echo(cfg)})
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return 3
    f = result.final
    sink.close({"status": "ok", "final": {"step": f.step, "loss": f.loss, "EM": f.em, "EW": f.ew, "EM5": f.em5},
                "beta": cfg.spec().beta, "config": _echo(cfg)})
    return 0


def run_train_topk(args) -> int:
    settings = _settings(args)
    for key in ("n", "mnist_dir", "objective"):
        if key in settings:
            raise ConfigError(f"{key} does not apply to train-topk")
    cfg = build_config(training.TopKTrainConfig, settings)
    sink = _Sink(args.out, ["step", "loss", "top1", "top5", "wall_time"])
    try:
        _, rows = training.train_topk(cfg, on_eval=lambda r: sink.row([r.step, r.loss, r.top1, r.top5, r.wall_time]))
    except training.TrainingDiverged as exc:
        sink.close({"status": "diverged", "error": str(exc), "config": _echo(cfg)})
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return 3
    f = rows[-1]
    sink.close({"status": "ok", "initial_loss": rows[0].loss,
                "final": {"step": f.step, "loss": f.loss, "top1": f.top1, "top5": f.top5}, "config": _echo(cfg)})
    return 0


def run_props(args) -> int:
    checks = props.run_all(args.seed or 0)
    for c in checks:
        print(c.line())
    return 0 if all(c.passed for c in checks) else 1


def _spec_from(args, default_kind="cauchy", default_beta=2.0):
    settings = _settings(args)
    return SigmoidSpec(settings.get("sigmoid", default_kind), float(settings.get("beta", default_beta)))


def run_gradcheck(args) -> int:
    settings = _settings(args)
    n = int(settings.get("n", 5))
    spec = _spec_from(args)
    rng = np.random.default_rng(int(settings.get("seed", 0)))
    errs = {
        "diffsort": props.gradcheck_diffsort(rng, spec, n),
        "topk": props.gradcheck_topk(rng, spec, max(n, 2)),
        "model": props.gradcheck_model(rng),
    }
    for name, err in errs.items():
        print(f"{name} max_rel_err {err:.3e}")
    return 0 if max(errs.values()) < 1e-5 else 1


def run_bench_layers(args) -> int:
    settings = _settings(args)
    kinds = [NetworkKind(settings["network"])] if "network" in settings else list(NetworkKind)
    if "n" in settings:
        n = int(settings["n"])
        for kind in kinds:
            depth = build(kind, n).depth
            print(depth if len(kinds) == 1 else f"{kind.value} {depth}")
        return 0
    print("n,odd_even,bitonic")
    for k in range(1, 11):
        n = 2**k
        print(f"{n},{n},{bitonic_depth(n)}")
    return 0


def run_dump_network(args) -> int:
    settings = _settings(args)
    net = build(settings.get("network", "odd_even"), int(settings.get("n", 4)))
    print(net.dump())
    return 0


def run_dump_perm(args) -> int:
    if not args.values:
        raise ConfigError("dump-perm needs --values, e.g. --values 3,1,2")
    x = np.array([float(v) for v in args.values.split(",")])
    settings = _settings(args)
    net = build(settings.get("network", "odd_even"), x.size)
    P = diffsort.relaxed_sort(net, _spec_from(args), x).perm
    buf = io.StringIO()
    np.savetxt(buf, P, delimiter=",", fmt="%.10g")
    print(buf.getvalue(), end="")
    return 0


_RUNNERS = {
    "train-rank": run_train_rank,
    "train-topk": run_train_topk,
    "props": run_props,
    "gradcheck": run_gradcheck,
    "bench-layers": run_bench_layers,
    "dump-network": run_dump_network,
    "dump-perm": run_dump_perm,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _RUNNERS[args.task](args)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
