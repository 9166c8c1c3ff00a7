"""Command-line entry point.

Exit codes: 0 success, 1 usage error (bad flags, malformed config), 2 runtime
failure. Every successful run writes ``provenance.json`` with the resolved
configuration. Option precedence is flag > ``--config`` file > default; the
output root defaults to ``$SWARMPRO_OUTPUT_ROOT/<subcommand>`` when ``--out``
is not given.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import neural, pipeline
from .metrics import EvalReport
from .scenario import ProblemInstance
from .scp import ScpConfig, warm_start_solve

OUTPUT_ROOT_ENV = "SWARMPRO_OUTPUT_ROOT"

SUBCOMMANDS = ("gen-data", "train", "plan", "eval", "warmstart-bench", "exp1", "exp2", "exp3")

# built-in defaults per option; None means "required unless a config file sets it"
DEFAULTS = {
    "seed": 0,
    "scale": "desk",
    "jobs": None,
    "count": 10,
    "n": 10,
    "T": 11,
    "rcol": 15.0,
    "data": None,
    "models": None,
    "models_dir": None,
    "instance": None,
    "seed_mode": "zero",
    "model": None,
    "max_epochs": None,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON file with option values")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--scale", choices=("desk", "paper"))
    common.add_argument("--jobs", type=int, help="worker processes (default: available cores)")

    p = _Parser(prog="swarmpro", description="Swarm trajectory planning and learned planners.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="subcommand", parser_class=_Parser)
    sub.required = True

    g = sub.add_parser("gen-data", parents=[common], help="sample instances and solve them")
    g.add_argument("--count", type=int)
    g.add_argument("--n", type=int)
    g.add_argument("--T", type=int)
    g.add_argument("--rcol", type=float)

    t = sub.add_parser("train", parents=[common], help="train models on a dataset")
    t.add_argument("--data", help="dataset directory")
    t.add_argument("--models", nargs="+", choices=neural.MODEL_NAMES)
    t.add_argument("--max-epochs", dest="max_epochs", type=int)

    pl = sub.add_parser("plan", parents=[common], help="solve one instance")
    pl.add_argument("--instance", help="instance JSON")
    pl.add_argument("--seed-mode", dest="seed_mode", choices=("zero", "linear", "network"))
    pl.add_argument("--model", help="model JSON (network seeding)")

    e = sub.add_parser("eval", parents=[common], help="evaluate models on a dataset's test split")
    e.add_argument("--data")
    e.add_argument("--models-dir", dest="models_dir")

    w = sub.add_parser("warmstart-bench", parents=[common], help="compare seeding modes")
    w.add_argument("--data")
    w.add_argument("--models-dir", dest="models_dir")

    for name in ("exp1", "exp2", "exp3"):
        x = sub.add_parser(name, parents=[common], help=f"run {name} end to end")
        x.add_argument("--models", nargs="+", choices=neural.MODEL_NAMES)
        x.add_argument("--max-epochs", dest="max_epochs", type=int)
    return p


def resolve(ns: argparse.Namespace) -> dict:
    """Merge defaults, config file and flags (later wins)."""
    cfg = dict(DEFAULTS)
    if ns.config:
        try:
            loaded = json.loads(Path(ns.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {ns.config}: {exc}") from None
        if not isinstance(loaded, dict):
            raise UsageError("config file must hold a JSON object")
        cfg.update({k.replace("-", "_"): v for k, v in loaded.items()})
    for k, v in vars(ns).items():
        if v is not None and k not in ("config", "verbose"):
            cfg[k] = v
    cfg["subcommand"] = ns.subcommand
    if cfg.get("jobs") is None:
        cfg["jobs"] = pipeline.default_jobs()
    if cfg["scale"] not in pipeline.PRESETS:
        raise UsageError(f"unknown scale {cfg['scale']!r}")
    if not cfg.get("out"):
        root = os.environ.get(OUTPUT_ROOT_ENV)
        if not root:
            raise UsageError(f"--out is required (or set {OUTPUT_ROOT_ENV})")
        cfg["out"] = str(Path(root) / ns.subcommand)
    return cfg


def _need(cfg, *keys):
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def _spec(cfg) -> pipeline.ExperimentSpec:
    spec = replace(pipeline.PRESETS[cfg["scale"]], seed=cfg["seed"], jobs=cfg["jobs"])
    if cfg.get("models"):
        spec = replace(spec, models=tuple(cfg["models"]))
    if cfg.get("max_epochs"):
        spec = replace(spec, train=replace(spec.train, max_epochs=cfg["max_epochs"]))
    return spec


def _load_nets(cfg) -> dict:
    return pipeline.load_models(cfg["models_dir"])


def run(cfg: dict) -> dict:
    """Execute a resolved configuration; returns extra provenance fields."""
    out = Path(cfg["out"])
    sc = cfg["subcommand"]
    extra: dict = {}
    if sc == "gen-data":
        ds = pipeline.generate_dataset(cfg["count"], (8, 1, 1), cfg["n"], cfg["T"], cfg["rcol"],
                                       cfg["seed"], ScpConfig(), jobs=cfg["jobs"])
        ds.save(out)
        extra["dataset"] = ds.provenance
    elif sc == "train":
        _need(cfg, "data")
        spec = _spec(cfg)
        ds = pipeline.Dataset.load(cfg["data"])
        models = pipeline.train_models(ds.encoded_data(), spec.models, ds.instances[0].T,
                                       spec.train, seed=spec.seed)
        pipeline.save_models(models, out)
        extra["train_config"] = spec.train.__dict__
        extra["status"] = {name: h.status for name, (_, h) in models.items()}
    elif sc == "plan":
        _need(cfg, "instance")
        inst = ProblemInstance.from_json(Path(cfg["instance"]).read_text())
        net = None
        if cfg["seed_mode"] == "network":
            _need(cfg, "model")
            net = neural.Network.load(cfg["model"])
        res = warm_start_solve(inst, ScpConfig(), cfg["seed_mode"], network=net, rng_seed=cfg["seed"])
        out.mkdir(parents=True, exist_ok=True)
        (out / "plan.json").write_text(res.to_json())
        extra["scp_config"] = ScpConfig().__dict__
    elif sc == "eval":
        _need(cfg, "data", "models_dir")
        ds = pipeline.Dataset.load(cfg["data"])
        insts, sols = ds.part("test")
        reports: dict[str, EvalReport] = {"true": pipeline.expert_report(sols, insts)}
        for name, net in _load_nets(cfg).items():
            reports[name] = pipeline.evaluate_network(net, insts, seed=cfg["seed"], label=name)
        out.mkdir(parents=True, exist_ok=True)
        (out / "eval_results.csv").write_text(pipeline._rows_csv(
            ["model", "trial", "fuel", "collisions", "runtime_s"], pipeline.reports_to_rows(reports)))
        pipeline._write_json(out / "summary.json", {k: r.summary() for k, r in reports.items()})
    elif sc == "warmstart-bench":
        _need(cfg, "data", "models_dir")
        ds = pipeline.Dataset.load(cfg["data"])
        pipeline.run_experiment3(_spec(cfg), ds.part("test")[0], _load_nets(cfg), out)
    else:
        spec = replace(_spec(cfg), which=sc)
        extra["experiment"] = spec.to_dict()
        pipeline.run_pipeline(spec, out)
        return extra
    return extra


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        cfg = resolve(ns)
        logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if cfg["subcommand"] in ("train", "eval", "warmstart-bench") and cfg.get("data") is None:
            _need(cfg, "data")
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        extra = run(cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - reported as runtime failure
        logging.getLogger(__name__).debug("failure", exc_info=True)
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    if cfg["subcommand"] not in ("exp1", "exp2", "exp3"):
        pipeline.write_provenance(cfg["out"], {"resolved": cfg, **extra})
    return 0


if __name__ == "__main__":
    sys.exit(main())
