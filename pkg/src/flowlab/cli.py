"""``flowlab`` command line: train, sample, validate, export-path.

Every command reads one strict JSON run configuration (unknown keys are
rejected) and writes its outputs into ``--out``. Exit codes: 0 success,
1 validation failure, 2 configuration error, 3 runtime divergence.

Configuration sections (all optional unless a command needs them)::

    {
      "seed": 0,
      "dataset":  {"kind": "checkerboard", "n_points": 4096, "seed": 0, ...}
                  or {"points": [[...], ...], "labels": [...]},
      "model":    {"hidden": [64, 64, 64], "n_time_features": 8, "n_classes": 0,
                   "embed_dim": 8, "activation": "silu"},
      "train":    {"loss_kind": "cfm", "schedule": "condot", "batch_size": 256,
                   "n_steps": 5000, "learning_rate": 0.001, "adam_beta1": 0.9,
                   "adam_beta2": 0.999, "adam_eps": 1e-8, "label_drop_eta": 0.1,
                   "t_clamp": {"eps_low": 0.0001, "eps_high": 0.001}},
      "sample":   {"checkpoint": null, "sampler": "euler", "n": 4096,
                   "steps": 100, "sigma": 0.0, "label": null, "w": 1.0,
                   "bounds": [-3, 3, -3, 3]},
      "validate": {"suite": "all", "checkpoint": null},
      "export":   {"schedule": "condot", "times": [0, 0.25, 0.5, 0.75, 1],
                   "n": 4096, "bins": 128, "bounds": [-3, 3, -3, 3]},
      "out": ".", "format": "csv"
    }

Relative paths resolve against the config file's directory. Without
``sample.checkpoint`` the sampler reads ``<out>/checkpoint.json``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from contextlib import nullcontext
from dataclasses import fields
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import validate as validation
from .data_eval import DatasetSpec, histogram2d, make_dataset
from .dynamics import TimeGrid, simulate_euler, simulate_heun
from .errors import ConfigError, DomainError, FlowlabError, SimulationError, TrainingError
from .formats import (
    Checkpoint,
    heatmap_image,
    load_checkpoint,
    save_checkpoint,
    scatter_image,
    write_csv,
    write_ppm,
)
from .guidance import guided_velocity, simulate_extended_sde
from .net import MlpSpec, forward
from .oracle import Dataset
from .paths import (
    GaussianPath,
    NoiseSchedule,
    TimeClamp,
    cond_sample,
    score_to_velocity,
    velocity_to_score,
)
from .rng import make_rng
from .train import TrainConfig, eps_to_score, train

EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3

TOP_KEYS = {"seed", "dataset", "model", "train", "sample", "validate", "export", "out", "format"}
MODEL_KEYS = {"hidden", "n_time_features", "n_classes", "embed_dim", "activation"}
TRAIN_KEYS = {f.name for f in fields(TrainConfig)} - {"seed"}
SAMPLE_DEFAULTS = {
    "checkpoint": None,
    "sampler": "euler",
    "n": 4096,
    "steps": 100,
    "sigma": 0.0,
    "label": None,
    "w": 1.0,
    "bounds": [-3.0, 3.0, -3.0, 3.0],
}
VALIDATE_DEFAULTS = {"suite": "all", "checkpoint": None}
EXPORT_DEFAULTS = {
    "schedule": "condot",
    "times": [0.0, 0.25, 0.5, 0.75, 1.0],
    "n": 4096,
    "bins": 128,
    "bounds": [-3.0, 3.0, -3.0, 3.0],
}
SAMPLERS = ("euler", "heun", "em")
FORMATS = ("csv", "csv+ppm")


# --------------------------------------------------------------------------
# configuration


class RunConfig:
    """Parsed run configuration; sections are validated lazily by each command."""

    def __init__(self, doc: dict, base_dir: Path, seed: int, out: Path, fmt: str):
        self.doc = doc
        self.base_dir = base_dir
        self.seed = seed
        self.out = out
        self.format = fmt

    def section(self, name: str, allowed, defaults: dict | None = None) -> dict:
        raw = self.doc.get(name, {})
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise ConfigError(f"'{name}' must be an object", field=name)
        unknown = sorted(set(raw) - set(allowed))
        if unknown:
            raise ConfigError(f"unknown key '{name}.{unknown[0]}'", field=f"{name}.{unknown[0]}")
        merged = dict(defaults or {})
        merged.update(raw)
        return merged

    def resolve(self, path) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p


def load_config(path: str | None, seed: int | None, out: str | None, fmt: str | None) -> RunConfig:
    doc: dict = {}
    base = Path.cwd()
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}", field="config") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}", field="config") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object", field="config")
        base = Path(path).resolve().parent
    unknown = sorted(set(doc) - TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown key '{unknown[0]}'", field=unknown[0])
    run_seed = seed if seed is not None else doc.get("seed", 0)
    if isinstance(run_seed, bool) or not isinstance(run_seed, int) or not 0 <= run_seed < 2**64:
        raise ConfigError("seed must be an integer in [0, 2^64)", field="seed")
    out_dir = Path(out) if out is not None else Path(doc.get("out", "."))
    if out is None and not out_dir.is_absolute():
        out_dir = base / out_dir
    fmt = fmt if fmt is not None else doc.get("format", "csv")
    if fmt not in FORMATS:
        raise ConfigError(f"format must be one of {FORMATS}", field="format")
    return RunConfig(doc, base, run_seed, out_dir, fmt)


def _culprit(factory, section: str, fixed: dict, user: dict) -> str:
    """Name the first user key that fails on its own, else the whole section."""
    try:
        factory(**fixed)
    except (TypeError, ValueError):
        return section
    for key, value in user.items():
        try:
            factory(**fixed, **{key: value})
        except (TypeError, ValueError):
            return f"{section}.{key}"
    return section


def _build(factory, section: str, user: dict, **fixed):
    try:
        return factory(**fixed, **user)
    except (TypeError, ValueError) as exc:
        field_name = _culprit(factory, section, fixed, user)
        raise ConfigError(f"invalid '{field_name}': {exc}", field=field_name) from exc


def parse_dataset(cfg: RunConfig) -> Dataset:
    if "dataset" not in cfg.doc:
        raise ConfigError("missing 'dataset' section", field="dataset")
    raw = cfg.doc["dataset"]
    if isinstance(raw, dict) and "points" in raw:
        sec = cfg.section("dataset", {"points", "labels", "weights"})
        return _build(Dataset, "dataset", sec)
    allowed = {f.name for f in fields(DatasetSpec)}
    sec = cfg.section("dataset", allowed)
    return make_dataset(_build(DatasetSpec, "dataset", sec))


def parse_model(cfg: RunConfig, dim: int) -> MlpSpec:
    sec = cfg.section("model", MODEL_KEYS)
    if "hidden" in sec:
        if not isinstance(sec["hidden"], list):
            raise ConfigError("'model.hidden' must be a list of widths", field="model.hidden")
        sec["hidden"] = tuple(sec["hidden"])
    return _build(MlpSpec, "model", sec, dim=dim)


def parse_train(cfg: RunConfig) -> TrainConfig:
    sec = cfg.section("train", TRAIN_KEYS)
    if "t_clamp" in sec:
        clamp = sec["t_clamp"]
        if not isinstance(clamp, dict) or set(clamp) - {"eps_low", "eps_high"}:
            raise ConfigError("'train.t_clamp' takes eps_low and eps_high", field="train.t_clamp")
        sec["t_clamp"] = _build(TimeClamp, "train.t_clamp", clamp)
    return _build(TrainConfig, "train", sec, seed=cfg.seed)


def _bounds(value, field_name: str) -> tuple[float, float, float, float]:
    if not isinstance(value, list) or len(value) != 4:
        raise ConfigError(f"'{field_name}' must be [x_min, x_max, y_min, y_max]", field=field_name)
    b = tuple(float(v) for v in value)
    if not (b[1] > b[0] and b[3] > b[2]):
        raise ConfigError(f"'{field_name}' bounds are inverted", field=field_name)
    return b


def _require(cond: bool, message: str, field_name: str):
    if not cond:
        raise ConfigError(message, field=field_name)


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


# --------------------------------------------------------------------------
# commands


def cmd_train(cfg: RunConfig) -> int:
    data = parse_dataset(cfg)
    spec = parse_model(cfg, data.dim)
    config = parse_train(cfg)
    if spec.conditional and data.labels is None:
        raise ConfigError("conditional model needs a labelled dataset", field="model.n_classes")
    if spec.conditional and data.n_classes > spec.n_classes:
        raise ConfigError(
            f"dataset has {data.n_classes} classes but model.n_classes = {spec.n_classes}",
            field="model.n_classes",
        )
    params, history = train(config, data, spec)
    cfg.out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(
        cfg.out / "checkpoint.json",
        Checkpoint(
            params,
            config.schedule,
            config.loss_kind,
            config.label_drop_eta,
            config.t_clamp,
            config.seed,
            config.n_steps,
        ),
    )
    write_csv(cfg.out / "loss_history.csv", ["step", "loss"], history)
    return EXIT_OK


def model_fields(ckpt: Checkpoint):
    """Velocity and score callables ``f(x, t, y)`` for any trained loss kind."""
    params = ckpt.params
    path = GaussianPath(NoiseSchedule(ckpt.schedule), params.spec.dim)
    clamp = ckpt.t_clamp

    def net(x, t, y):
        return forward(params, x, t, y)

    if ckpt.loss_kind == "cfm":

        def score(x, t, y):
            return velocity_to_score(path, x, t, net(x, t, y))

        return net, score
    if ckpt.loss_kind == "csm":
        score = net
    else:

        def score(x, t, y):
            return eps_to_score(path, t, net(x, t, y))

    def velocity(x, t, y):
        # the conversion is singular at both ends (alpha_0 = 0, beta_1 = 0)
        tc = float(clamp(t))
        return score_to_velocity(path, x, tc, score(x, tc, y))

    return velocity, score


def cmd_sample(cfg: RunConfig, checkpoint: str | None = None) -> int:
    sec = cfg.section("sample", SAMPLE_DEFAULTS, SAMPLE_DEFAULTS)
    if checkpoint:
        ckpt_path = Path(checkpoint)
    elif sec["checkpoint"]:
        ckpt_path = cfg.resolve(sec["checkpoint"])
    else:
        ckpt_path = cfg.out / "checkpoint.json"
    ckpt = load_checkpoint(ckpt_path)
    spec = ckpt.params.spec
    sampler, n, steps, sigma, label, w = (sec[k] for k in ("sampler", "n", "steps", "sigma", "label", "w"))
    _require(sampler in SAMPLERS, f"'sample.sampler' must be one of {SAMPLERS}", "sample.sampler")
    _require(_is_int(n) and n >= 0, "'sample.n' must be an integer >= 0", "sample.n")
    _require(_is_int(steps) and steps >= 1, "'sample.steps' must be an integer >= 1", "sample.steps")
    _require(isinstance(sigma, (int, float)) and sigma >= 0, "'sample.sigma' must be >= 0", "sample.sigma")
    _require(isinstance(w, (int, float)) and w >= 0, "'sample.w' must be >= 0", "sample.w")
    bounds = _bounds(sec["bounds"], "sample.bounds")
    if label is not None:
        _require(spec.conditional, "'sample.label' given for an unconditional model", "sample.label")
        _require(
            _is_int(label) and 0 <= label < spec.n_classes,
            f"'sample.label' must be an integer in 0..{spec.n_classes - 1}",
            "sample.label",
        )
    elif spec.conditional and ckpt.label_drop_eta == 0.0:
        raise ConfigError(
            "conditional model was trained without the null label; set 'sample.label'",
            field="sample.label",
        )

    velocity, score = model_fields(ckpt)
    header = ["sample_id"] + [f"x{j}" for j in range(spec.dim)]
    if label is not None:
        header += ["label", "w"]
    cfg.out.mkdir(parents=True, exist_ok=True)
    samples = np.zeros((0, spec.dim))
    if n > 0:
        y = None if label is None else np.full(n, label, dtype=np.int64)

        def guided(f):
            if y is None:
                return lambda x, t: f(x, t, None)
            return lambda x, t: guided_velocity(f, x, t, y, float(w))

        u, s = guided(velocity), guided(score)
        rng = make_rng(cfg.seed, 2)
        x0 = rng.standard_normal((n, spec.dim))
        grid = TimeGrid(steps)
        if sampler == "euler":
            samples = simulate_euler(u, x0, grid, record="terminal").terminal
        elif sampler == "heun":
            samples = simulate_heun(u, x0, grid, record="terminal").terminal
        else:
            samples = simulate_extended_sde(u, s, lambda t: float(sigma), x0, grid, rng)
    rows = []
    for i, x in enumerate(samples):
        row = [i, *x]
        if label is not None:
            row += [label, float(w)]
        rows.append(row)
    write_csv(cfg.out / "samples.csv", header, rows)
    if cfg.format == "csv+ppm":
        labels = None if label is None else np.full(len(samples), label)
        write_ppm(cfg.out / "samples.ppm", scatter_image(samples[:, :2], bounds, labels))
    return EXIT_OK


def cmd_validate(cfg: RunConfig, suite: str | None = None, checkpoint: str | None = None) -> int:
    sec = cfg.section("validate", VALIDATE_DEFAULTS, VALIDATE_DEFAULTS)
    names = suite if suite is not None else sec["suite"]
    if names == "all":
        names = list(validation.SUITES)
    elif isinstance(names, str):
        names = [names]
    for name in names:
        _require(name in validation.SUITES, f"unknown suite '{name}'", "validate.suite")
    ckpt_path = checkpoint or sec["checkpoint"]
    params = load_checkpoint(cfg.resolve(ckpt_path)).params if ckpt_path else None
    rows = []
    for name in names:
        rows += validation.run_suite(name, params=params, seed=cfg.seed)
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_csv(
        cfg.out / "validate.csv",
        ["check", "probe", "value", "threshold", "pass"],
        [[r.check, r.probe, r.value, r.threshold, "true" if r.passed else "false"] for r in rows],
    )
    failed = [r for r in rows if not r.passed]
    for r in failed:
        print(f"FAIL {r.check} {r.probe}: {r.value:.3e} (threshold {r.threshold:.3e})", file=sys.stderr)
    return EXIT_VALIDATION if failed else EXIT_OK


def cmd_export_path(cfg: RunConfig) -> int:
    data = parse_dataset(cfg)
    sec = cfg.section("export", EXPORT_DEFAULTS, EXPORT_DEFAULTS)
    schedule = _build(NoiseSchedule, "export.schedule", {}, kind=sec["schedule"])
    times = sec["times"]
    _require(
        isinstance(times, list) and all(isinstance(t, (int, float)) and 0 <= t <= 1 for t in times),
        "'export.times' must be a list of times in [0, 1]",
        "export.times",
    )
    n = sec["n"]
    _require(_is_int(n) and n >= 1, "'export.n' must be an integer >= 1", "export.n")
    bins = sec["bins"]
    _require(_is_int(bins) and bins >= 1, "'export.bins' must be an integer >= 1", "export.bins")
    bounds = _bounds(sec["bounds"], "export.bounds")
    path = GaussianPath(schedule, data.dim)
    cfg.out.mkdir(parents=True, exist_ok=True)
    header = ["sample_id"] + [f"x{j}" for j in range(data.dim)]
    if data.labels is not None:
        header.append("label")
    write_csv(cfg.out / "path_times.csv", ["index", "t"], [[k, float(t)] for k, t in enumerate(times)])
    for k, t in enumerate(times):
        rng = make_rng(cfg.seed, 3, k)
        idx = rng.choice(len(data), size=n, p=data.weights)
        x = cond_sample(path, data.points[idx], float(t), rng)
        rows = []
        for i in range(n):
            row = [i, *x[i]]
            if data.labels is not None:
                row.append(int(data.labels[idx[i]]))
            rows.append(row)
        write_csv(cfg.out / f"path_{k:03d}.csv", header, rows)
        if cfg.format == "csv+ppm" and data.dim == 2:
            hist = histogram2d(x, bounds, (bins, bins))
            write_ppm(cfg.out / f"path_{k:03d}.ppm", heatmap_image(hist.counts))
    return EXIT_OK


# --------------------------------------------------------------------------
# entry point


def thread_limit() -> int:
    """Worker cap from ``FLOWLAB_THREADS`` (0 or unset means no cap)."""
    raw = os.environ.get("FLOWLAB_THREADS", "0").strip() or "0"
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"FLOWLAB_THREADS must be an integer, got {raw!r}", "FLOWLAB_THREADS")
    if value < 0:
        raise ConfigError("FLOWLAB_THREADS must be >= 0", "FLOWLAB_THREADS")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flowlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("train", "train a network and write checkpoint.json and loss_history.csv"),
        ("sample", "sample from a checkpoint into samples.csv"),
        ("validate", "run numerical validation suites into validate.csv"),
        ("export-path", "write samples of the probability path at several times"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="run seed (overrides the config)")
        p.add_argument("--format", choices=FORMATS, help="csv or csv+ppm")
        if name in ("sample", "validate"):
            p.add_argument("--checkpoint", help="checkpoint path (overrides the config)")
        if name == "validate":
            p.add_argument("--suite", choices=("all", *validation.SUITES))
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.seed, args.out, args.format)
        threads = thread_limit()
        limiter = threadpool_limits(limits=threads) if threads > 0 else nullcontext()
        with limiter:
            if args.command == "train":
                return cmd_train(cfg)
            if args.command == "sample":
                return cmd_sample(cfg, args.checkpoint)
            if args.command == "validate":
                return cmd_validate(cfg, args.suite, args.checkpoint)
            return cmd_export_path(cfg)
    except TrainingError as exc:
        print(f"error: training diverged at step {exc.step}: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (SimulationError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DomainError, FlowlabError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
