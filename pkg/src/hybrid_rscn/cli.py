"""Command-line entry point.

Every command takes an optional JSON ``--config`` (a run config or a
previous run's ``manifest.json``) plus flag overrides, writes its outputs
into a fresh directory and records the fully resolved config there.

Exit status: 0 success, 2 usage or input errors, 3 algorithmic failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from .construct import ConstructionError
from .dataset import LagSpec, ParseError, SchemaError, LagSpecError, generate_sysid_series, load_csv, save_csv
from .eval import export_report, grid_search, run_trials
from .lasso import NoOrdersSelected
from .online import run_stream, stream_from_arrays
from .presets import PRESETS, ModelSettings, TaskData, make_task, task_from_series
from .serialization import load_model, save_model
from .variants import VARIANTS, evaluate, fit_variant, get_variant, select_for_task

logger = logging.getLogger("hybrid_rscn")

EXIT_OK, EXIT_USAGE, EXIT_FAILURE = 0, 2, 3


class UsageError(Exception):
    """Bad arguments, config or input files."""


_SECTIONS = {
    "task": None,
    "seed": None,
    "variant": None,
    "output_dir": None,
    "workers": None,
    "data": {"path", "train", "val", "test", "n_train", "n_val", "n_test", "form", "noise_sigma", "washout"},
    "lags": {"max_lag"},
    "model": None,  # validated by ModelSettings.from_dict
    "trials": {"n", "base_seed", "variants"},
    "grid": {"c_values", "n_values", "trials_per_cell", "base_seed"},
    "online": {"adapt", "guard", "model"},
}


@dataclass
class RunConfig:
    """Resolved configuration of one command invocation."""

    task: str = "sysid"
    seed: int = 0
    variant: str = "LASSO-RSCN-L2"
    output_dir: Optional[str] = None
    workers: int = 1
    data: dict = field(default_factory=dict)
    lags: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    trials: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    online: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d) -> "RunConfig":
        if "config" in d and "command" in d:  # a manifest from an earlier run
            d = d["config"]
        unknown = set(d) - set(_SECTIONS)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        for key, allowed in _SECTIONS.items():
            if allowed is not None and key in d:
                if not isinstance(d[key], dict):
                    raise UsageError(f"config section {key!r} must be an object")
                bad = set(d[key]) - allowed
                if bad:
                    raise UsageError(f"unknown keys in {key!r}: {sorted(bad)}")
        return cls(**{k: (dict(v) if isinstance(v, dict) else v) for k, v in d.items()})

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "seed": self.seed,
            "variant": self.variant,
            "output_dir": self.output_dir,
            "workers": self.workers,
            "data": self.data,
            "lags": self.lags,
            "model": self.settings().to_dict(),
            "trials": self.trials,
            "grid": self.grid,
            "online": self.online,
        }

    def settings(self) -> ModelSettings:
        base = PRESETS[self.task].settings if self.task in PRESETS else ModelSettings()
        if not self.model:
            return base
        merged = base.to_dict()
        for k, v in self.model.items():
            if k == "construct":
                merged["construct"] = {**merged["construct"], **v}
            else:
                merged[k] = v
        try:
            return ModelSettings.from_dict(merged)
        except (TypeError, ValueError) as exc:
            raise UsageError(str(exc)) from None

    def validate(self):
        if self.task not in PRESETS:
            raise UsageError(f"unknown task {self.task!r}; choose from {sorted(PRESETS)}")
        if self.variant not in VARIANTS:
            raise UsageError(f"unknown variant {self.variant!r}; choose from {list(VARIANTS)}")
        if self.workers < 1:
            raise UsageError("workers must be >= 1")
        for key in ("n_train", "n_val", "n_test"):
            if key in self.data and int(self.data[key]) < 5:
                raise UsageError(f"{key} must be at least 5")
        if "max_lag" in self.lags and int(self.lags["max_lag"]) < 1:
            raise UsageError("max_lag must be >= 1")
        self.settings()


# --------------------------------------------------------------------------- config plumbing


def _load_config(args) -> RunConfig:
    d = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        try:
            d = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: invalid JSON ({exc})") from None
    cfg = RunConfig.from_dict(d)
    flag_map = {
        "task": ("task",), "seed": ("seed",), "variant": ("variant",), "out": ("output_dir",),
        "workers": ("workers",), "data": ("data", "path"), "train": ("data", "train"),
        "val": ("data", "val"), "test": ("data", "test"), "n_train": ("data", "n_train"),
        "n_val": ("data", "n_val"), "n_test": ("data", "n_test"), "washout": ("data", "washout"),
        "max_lag": ("lags", "max_lag"), "n_trials": ("trials", "n"), "base_seed": ("trials", "base_seed"),
        "variants": ("trials", "variants"), "c_values": ("grid", "c_values"), "n_values": ("grid", "n_values"),
        "trials_per_cell": ("grid", "trials_per_cell"), "adapt": ("online", "adapt"),
        "guard": ("online", "guard"), "model": ("online", "model"),
    }
    for flag, target in flag_map.items():
        val = getattr(args, flag, None)
        if val is None:
            continue
        if len(target) == 1:
            setattr(cfg, target[0], val)
        else:
            getattr(cfg, target[0])[target[1]] = val
    if getattr(args, "grid_base_seed", None) is not None:
        cfg.grid["base_seed"] = args.grid_base_seed
    for item in getattr(args, "set", None) or []:
        key, _, raw = item.partition("=")
        if not _:
            raise UsageError(f"--set expects key=value, got {item!r}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        cfg.model.setdefault("construct", {})
        if key in ScTrainFields:
            cfg.model["construct"][key] = value
        else:
            cfg.model[key] = value
    cfg.validate()
    return cfg


ScTrainFields = set(ModelSettings().construct.to_dict())


def _output_dir(cfg: RunConfig, command: str) -> Path:
    out = Path(cfg.output_dir) if cfg.output_dir else Path("runs") / f"{command}-{time.strftime('%Y%m%d-%H%M%S')}"
    if out.exists() and any(out.iterdir()):
        raise UsageError(f"output directory {out} is not empty; outputs are write-once")
    out.mkdir(parents=True, exist_ok=True)
    cfg.output_dir = str(out)
    return out


def _write_manifest(out: Path, command: str, cfg: RunConfig, outputs: List[str], extra=None):
    manifest = {
        "command": command,
        "version": __version__,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "outputs": sorted(outputs),
    }
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))


def _require_file(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"input file not found: {p}")
    return p


def _sysid_schema():
    return {"u": "input", "y": "target"}


def _load_task(cfg: RunConfig) -> TaskData:
    d = cfg.data
    if cfg.task == "sysid" and any(k in d for k in ("train", "val", "test")):
        missing = [k for k in ("train", "val", "test") if k not in d]
        if missing:
            raise UsageError(f"sysid from files needs train, val and test CSVs (missing {missing})")
        series = [load_csv(_require_file(d[k]), _sysid_schema()) for k in ("train", "val", "test")]
        task = task_from_series("sysid", *series, washout=d.get("washout"))
    elif cfg.task in ("debutanizer", "load"):
        if "path" not in d:
            raise UsageError(f"task {cfg.task!r} needs --data pointing at its CSV")
        kw = {k: d[k] for k in ("n_train", "n_test", "noise_sigma") if k in d}
        task = make_task(cfg.task, cfg.seed, _require_file(d["path"]), **kw)
        if "washout" in d:
            task = replace(task, washout=int(d["washout"]))
    elif cfg.task == "sysid":
        kw = {k: d[k] for k in ("n_train", "n_val", "n_test", "form", "washout") if k in d}
        task = make_task("sysid", cfg.seed, **kw)
    else:
        kw = {k: d[k] for k in ("noise_sigma",) if k in d}
        task = make_task(cfg.task, cfg.seed, **kw)
        if "washout" in d:
            task = replace(task, washout=int(d["washout"]))
    if "max_lag" in cfg.lags:
        m = int(cfg.lags["max_lag"])
        task = replace(task, screening=LagSpec.screening(task.train, m, m))
    return task


# --------------------------------------------------------------------------- commands


def cmd_gen_data(args) -> int:
    cfg = _load_config(args)
    if cfg.task != "sysid":
        raise UsageError("gen-data synthesizes the sysid benchmark only")
    out = _output_dir(cfg, "gen-data")
    task = _load_task(cfg)
    names = {"train": task.train, "val": task.val, "test": task.test}
    for k, raw in names.items():
        save_csv(raw, out / f"{k}.csv")
    _write_manifest(out, "gen-data", cfg, [f"{k}.csv" for k in names])
    print(f"wrote {', '.join(f'{k}.csv ({v.n_samples} rows)' for k, v in names.items())} to {out}")
    return EXIT_OK


def cmd_select_orders(args) -> int:
    cfg = _load_config(args)
    task = _load_task(cfg)
    out = _output_dir(cfg, "select-orders")
    sel = select_for_task(task, True, cfg.settings())
    orders = sel.orders
    (out / "orders.json").write_text(orders.to_json())
    (out / "path.json").write_text(sel.path.to_json())
    with open(out / "coefficients.csv", "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(["variable", "lag", "coefficient", "standardized", "selected"])
        w = sel.linear.weights
        scale = sel.standardizer.feature_scale
        chosen = set(orders.selected)
        for j, (name, lag) in enumerate(sel.linear.feature_map):
            wr.writerow([name, lag, repr(float(w[0, j] / scale[j])), repr(float(w[0, j])), int((name, lag) in chosen)])
    _write_manifest(out, "select-orders", cfg, ["orders.json", "path.json", "coefficients.csv"],
                    {"c_l": orders.c_l_used, "n_selected": len(orders.selected)})
    print(f"c_l={orders.c_l_used:.6g}; {len(orders.selected)} orders selected: "
          + ", ".join(f"{n}(n-{l})" if l else f"{n}(n)" for n, l in orders.selected))
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_config(args)
    task = _load_task(cfg)
    out = _output_dir(cfg, "train")
    res = fit_variant(task, cfg.variant, cfg.settings(), cfg.seed)
    save_model(res.model, out / "model.json")
    outputs = ["model.json", "metrics.json"]
    if res.report is not None:
        res.report.to_csv(out / "build_report.csv")
        outputs.append("build_report.csv")
    metrics = {
        "variant": cfg.variant,
        "reservoir_size": res.final_n,
        "train_seconds": res.train_seconds,
        "train_nrmse": res.train_nrmse,
        "test_nrmse": res.model.score(task.test),
        "stop_reason": None if res.report is None else res.report.stop_reason,
    }
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2))
    _write_manifest(out, "train", cfg, outputs)
    print(json.dumps(metrics))
    return EXIT_OK


def _eval_series(cfg: RunConfig, model):
    if cfg.data.get("test") or cfg.data.get("path"):
        path = _require_file(cfg.data.get("test") or cfg.data.get("path"))
        schema = {n: "input" for n in model.spec.input_lags}
        schema.update({n: "target" for n in model.spec.output_lags})
        return load_csv(path, schema)
    return _load_task(cfg).test


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    model_path = _require_file(cfg.online.get("model") or "")
    model = load_model(model_path)
    raw = _eval_series(cfg, model)
    out = _output_dir(cfg, "eval")
    metrics = evaluate(model, raw)
    metrics["variant"] = model.variant
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2))
    _write_manifest(out, "eval", cfg, ["metrics.json"])
    print(json.dumps(metrics))
    return EXIT_OK


def cmd_online(args) -> int:
    cfg = _load_config(args)
    model = load_model(_require_file(cfg.online.get("model") or ""))
    raw = _eval_series(cfg, model)
    out = _output_dir(cfg, "online")
    d = model.lagged(raw)
    u = model.reservoir_input(d)
    stream = stream_from_arrays(u, d.design, d.targets, start=d.offset)
    traj = run_stream(
        model.net, model.readout, model.linear, stream,
        adapt=bool(cfg.online.get("adapt", True)), guard=float(cfg.online.get("guard", 1e-8)),
    )
    traj.to_csv(out / "trajectory.csv")
    w = model.washout
    summary = {"adapt": bool(cfg.online.get("adapt", True)), "nrmse": traj.nrmse(w), "samples": len(traj)}
    (out / "online.json").write_text(json.dumps(summary, indent=2))
    _write_manifest(out, "online", cfg, ["trajectory.csv", "online.json"])
    print(json.dumps(summary))
    return EXIT_OK


def cmd_trials(args) -> int:
    cfg = _load_config(args)
    task = _load_task(cfg)
    out = _output_dir(cfg, "trials")
    n = int(cfg.trials.get("n", 10))
    base = int(cfg.trials.get("base_seed", cfg.seed))
    variants = cfg.trials.get("variants") or [cfg.variant]
    for v in variants:
        get_variant(v)
    summaries = [run_trials(task, v, n, base, cfg.settings(), cfg.workers) for v in variants]
    export_report(summaries, "csv", out / "table.csv")
    export_report(summaries, "json", out / "table.json")
    _write_manifest(out, "trials", cfg, ["table.csv", "table.json"])
    for s in summaries:
        r = s.row()
        print(f"{r['model']:<14} N={r['reservoir_size']:.1f} test NRMSE {r['testing_nrmse_mean']:.5f}"
              f" +- {r['testing_nrmse_std']:.5f} ({r['trials']} trials)")
    return EXIT_OK


def cmd_grid(args) -> int:
    cfg = _load_config(args)
    task = _load_task(cfg)
    out = _output_dir(cfg, "grid")
    g = cfg.grid
    surface = grid_search(
        task,
        g.get("c_values", [1e-4, 1e-3, 1e-2, 1e-1]),
        g.get("n_values", [20, 80, 150, 300]),
        int(g.get("trials_per_cell", 1)),
        int(g.get("base_seed", cfg.seed)),
        cfg.variant,
        cfg.settings(),
        cfg.workers,
    )
    export_report(surface, "csv", out / "surface.csv")
    export_report(surface, "json", out / "surface.json")
    c, n, v = surface.best()
    _write_manifest(out, "grid", cfg, ["surface.csv", "surface.json"], {"argmin": {"c": c, "n": n, "nrmse": v}})
    print(f"argmin C={c:g} N={n} mean test NRMSE {v:.5f}")
    return EXIT_OK


# --------------------------------------------------------------------------- argument parsing


def _csv_floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _csv_ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _csv_strs(text):
    # variant names contain commas ("ESN-L1,2"), so split on semicolons
    return [v.strip() for v in text.split(";") if v.strip()]


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hybrid-rscn", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, data=True):
        sp.add_argument("--config", help="run config JSON or a previous manifest.json")
        sp.add_argument("--out", help="output directory (must be new or empty)")
        sp.add_argument("--seed", type=int, help="random seed (data and reservoir)")
        sp.add_argument("--task", choices=sorted(PRESETS), help="benchmark preset (default sysid)")
        sp.add_argument("--workers", type=_positive_int, help="parallel worker processes")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a model/construction setting, e.g. --set c=0.01")
        sp.add_argument("--n-train", type=_positive_int, help="training samples")
        sp.add_argument("--n-val", type=_positive_int, help="validation samples (sysid)")
        sp.add_argument("--n-test", type=_positive_int, help="test samples")
        if data:
            sp.add_argument("--data", help="CSV for the debutanizer/load tasks")
            sp.add_argument("--train", help="sysid training CSV (columns u,y)")
            sp.add_argument("--val", help="sysid validation CSV")
            sp.add_argument("--test", help="sysid test CSV")
            sp.add_argument("--washout", type=int, help="leading samples excluded from fitting and scoring")
            sp.add_argument("--max-lag", type=_positive_int, help="screening depth for every variable")

    sp = sub.add_parser("gen-data", help="write sysid train/val/test CSVs")
    common(sp, data=False)
    sp.set_defaults(func=cmd_gen_data)

    sp = sub.add_parser("select-orders", help="sparse order selection on the screening design")
    common(sp)
    sp.set_defaults(func=cmd_select_orders)

    sp = sub.add_parser("train", help="train one variant and save the model")
    common(sp)
    sp.add_argument("--variant", choices=list(VARIANTS))
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="score a saved model")
    common(sp)
    sp.add_argument("--model", required=True, help="model.json from train")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("online", help="stream a series through a saved model")
    common(sp)
    sp.add_argument("--model", required=True, help="model.json from train")
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--adapt", dest="adapt", action="store_true", default=None, help="adapt the readout (default)")
    g.add_argument("--frozen", dest="adapt", action="store_false", help="keep the readout fixed")
    sp.add_argument("--guard", type=float, help="denominator guard of the projection update")
    sp.set_defaults(func=cmd_online)

    sp = sub.add_parser("trials", help="repeated trials with summary statistics")
    common(sp)
    sp.add_argument("--variant", choices=list(VARIANTS))
    sp.add_argument("--variants", type=_csv_strs, help="semicolon-separated variant names")
    sp.add_argument("--n-trials", type=_positive_int)
    sp.add_argument("--base-seed", type=int)
    sp.set_defaults(func=cmd_trials)

    sp = sub.add_parser("grid", help="test-NRMSE surface over (C, N)")
    common(sp)
    sp.add_argument("--variant", choices=list(VARIANTS))
    sp.add_argument("--c-values", type=_csv_floats)
    sp.add_argument("--n-values", type=_csv_ints)
    sp.add_argument("--trials-per-cell", type=_positive_int)
    sp.add_argument("--base-seed", dest="grid_base_seed", type=int)
    sp.set_defaults(func=cmd_grid)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, SchemaError, ParseError, LagSpecError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NoOrdersSelected as exc:
        print(f"error: {exc}. Lower the sparsity penalty or widen the lag design.", file=sys.stderr)
        return EXIT_FAILURE
    except (ConstructionError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
