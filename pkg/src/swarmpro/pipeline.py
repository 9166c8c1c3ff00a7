"""Experiment drivers: dataset generation, model training, and the three
evaluation experiments (n=10 quality, swarm-size sweep, warm starting).

Everything is deterministic under fixed seeds except wall-clock fields;
:func:`tree_digest` hashes an output tree with those fields masked.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import neural
from .dynamics import default_params
from .metrics import EvalReport, collision_count, fuel_cost
from .scenario import ProblemInstance, sample_random
from .scp import PlanResult, ScpConfig, repair_plan, solve, warm_start_solve

log = logging.getLogger(__name__)

DROP_WARN_RATE = 0.2
_SEED_STRIDE = 1_000_000


@dataclass(frozen=True)
class ExperimentSpec:
    which: str = "all"
    n_train: int = 800
    n_valid: int = 100
    n_test: int = 100
    n: int = 10
    T: int = 11
    r_col: float = 15.0
    n_sweep: tuple[int, ...] = (2, 5, 10, 15, 20, 30)
    sweep_instances: int = 20
    warm_instances: int = 20
    models: tuple[str, ...] = neural.MODEL_NAMES
    seed: int = 0
    combo_cap: int = 100
    jobs: int = 1
    scp: ScpConfig = field(default_factory=ScpConfig)
    train: neural.TrainConfig = field(default_factory=neural.TrainConfig)

    def __post_init__(self):
        if min(self.n_train, self.n_valid, self.n_test, self.sweep_instances, self.warm_instances) < 1:
            raise ValueError("all experiment counts must be at least 1")
        if self.which not in ("exp1", "exp2", "exp3", "all"):
            raise ValueError(f"unknown experiment {self.which!r}")
        unknown = set(self.models) - set(neural.MODEL_NAMES)
        if unknown:
            raise ValueError(f"unknown models {sorted(unknown)}")

    @property
    def count(self) -> int:
        return self.n_train + self.n_valid + self.n_test

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n_sweep"] = list(self.n_sweep)
        d["models"] = list(self.models)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        d = dict(d)
        if "scp" in d and isinstance(d["scp"], dict):
            d["scp"] = ScpConfig(**d["scp"])
        if "train" in d and isinstance(d["train"], dict):
            d["train"] = neural.TrainConfig(**d["train"])
        for k in ("n_sweep", "models"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


PRESETS = {
    "desk": ExperimentSpec(),
    "paper": ExperimentSpec(n_train=8000, n_valid=1000, n_test=1000,
                            n_sweep=tuple(range(2, 31)), sweep_instances=100, warm_instances=100),
}


def _pmap(fn, items, jobs: int):
    items = list(items)
    if jobs <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def instance_seed(seed: int, stream: int, k: int) -> int:
    return seed * _SEED_STRIDE + stream * 100_000 + k


# ---------------------------------------------------------------- datasets

@dataclass
class Dataset:
    instances: list[ProblemInstance]
    solutions: list[PlanResult]
    split: dict[str, list[int]]
    provenance: dict

    def __post_init__(self):
        if len(self.instances) != len(self.solutions):
            raise ValueError("need exactly one solution per instance")
        idx = sorted(i for part in self.split.values() for i in part)
        if idx != list(range(len(self.instances))):
            raise ValueError("splits must be disjoint and cover every instance")

    def part(self, name: str) -> tuple[list[ProblemInstance], list[PlanResult]]:
        ids = self.split[name]
        return [self.instances[i] for i in ids], [self.solutions[i] for i in ids]

    def encoded(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        insts, sols = self.part(name)
        X = np.stack([neural.encode_instance(inst) for inst in insts])
        Y = np.stack([neural.encode_trajectories(sol.trajectories) for sol in sols])
        return X, Y

    def encoded_data(self) -> neural.EncodedData:
        xt, yt = self.encoded("train")
        xv, yv = self.encoded("valid")
        return neural.EncodedData(xt, yt, xv, yv)

    def save(self, root) -> None:
        root = Path(root)
        (root / "instances").mkdir(parents=True, exist_ok=True)
        (root / "solutions").mkdir(parents=True, exist_ok=True)
        for k, (inst, sol) in enumerate(zip(self.instances, self.solutions)):
            (root / "instances" / f"{k:05d}.json").write_text(inst.to_json())
            (root / "solutions" / f"{k:05d}.json").write_text(sol.to_json())
        _write_json(root / "splits.json", self.split)
        _write_json(root / "provenance.json", self.provenance)

    @classmethod
    def load(cls, root) -> "Dataset":
        root = Path(root)
        inst_files = sorted((root / "instances").glob("*.json"))
        sol_files = sorted((root / "solutions").glob("*.json"))
        instances = [ProblemInstance.from_json(p.read_text()) for p in inst_files]
        solutions = [PlanResult.from_json(p.read_text()) for p in sol_files]
        split = json.loads((root / "splits.json").read_text())
        provenance = json.loads((root / "provenance.json").read_text())
        return cls(instances, solutions, split, provenance)


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _solve_seeded(args):
    seed, n, T, r_col, params, cfg = args
    inst = sample_random(seed, n, T, r_col, params)
    return inst, solve(inst, cfg)


def split_sizes(count: int, ratios) -> tuple[int, int, int]:
    ratios = np.asarray(ratios, dtype=float)
    if ratios.shape != (3,) or np.any(ratios < 0) or ratios.sum() <= 0:
        raise ValueError("ratios must be three non-negative weights")
    frac = ratios / ratios.sum()
    n_valid = int(round(count * frac[1]))
    n_test = int(round(count * frac[2]))
    return count - n_valid - n_test, n_valid, n_test


def generate_dataset(count: int, ratios=(8, 1, 1), n: int = 10, T: int = 11, r_col: float = 15.0,
                     seed: int = 0, scp_config: ScpConfig | None = None, params=None,
                     jobs: int = 1) -> Dataset:
    """Sample ``count`` instances, solve each with the expert planner, keep the
    converged ones and split them with a seeded shuffle."""
    cfg = scp_config or ScpConfig()
    params = params or default_params(T)
    jobs_args = [(instance_seed(seed, 0, k), n, T, r_col, params, cfg) for k in range(count)]
    results = _pmap(_solve_seeded, jobs_args, jobs)
    kept = [(inst, sol) for inst, sol in results if sol.converged]
    dropped = count - len(kept)
    drop_rate = dropped / count if count else 0.0
    if drop_rate > DROP_WARN_RATE:
        log.warning("expert failed to converge on %.0f%% of instances", 100 * drop_rate)
    n_tr, n_va, n_te = split_sizes(len(kept), ratios)
    order = np.random.default_rng([seed, 1]).permutation(len(kept)).tolist()
    split = {"train": sorted(order[:n_tr]), "valid": sorted(order[n_tr:n_tr + n_va]),
             "test": sorted(order[n_tr + n_va:])}
    provenance = {
        "generator_seed": seed,
        "requested": count,
        "kept": len(kept),
        "dropped": dropped,
        "drop_rate": drop_rate,
        "status": "warning: high drop rate" if drop_rate > DROP_WARN_RATE else "ok",
        "n": n, "T": T, "r_col": r_col,
        "dt": params.dt, "mu": params.mu, "r0": params.r0,
        "transfer_time_s": params.dt * (T - 1),
        "ratios": list(ratios),
        "scp_config": asdict(cfg),
    }
    return Dataset([k[0] for k in kept], [k[1] for k in kept], split, provenance)


# ---------------------------------------------------------------- models

def train_models(data: neural.EncodedData, names, T: int, train_cfg: neural.TrainConfig,
                 seed: int = 0) -> dict[str, tuple[neural.Network, neural.TrainHistory]]:
    out = {}
    for k, name in enumerate(names):
        net = neural.build_model(name, T=T, seed=seed + k)
        cfg = replace(train_cfg, rng_seed=train_cfg.rng_seed + seed + k)
        log.info("training %s (%d parameters)", name, net.n_params())
        out[name] = neural.train(net, data, cfg)
    return out


def save_models(models: dict, root) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for name, (net, hist) in models.items():
        net.save(root / f"{name}.json")
        (root / f"{name}_history.csv").write_text(hist.to_csv())


def load_models(root, names=None) -> dict[str, neural.Network]:
    root = Path(root)
    names = names or [p.stem for p in sorted(root.glob("*.json")) if p.name != "provenance.json"]
    return {name: neural.Network.load(root / f"{name}.json") for name in names}


def trajectory_fuel(traj, instance: ProblemInstance) -> float:
    """Fuel needed to fly ``traj`` as a feasible transfer (see :func:`repair_plan`)."""
    return fuel_cost(repair_plan(instance, traj)[1])


def evaluate_network(net: neural.Network, instances, combo_cap: int = 100,
                     seed: int = 0, label: str = "") -> EvalReport:
    rep = EvalReport(label=label or net.name)
    for k, inst in enumerate(instances):
        t0 = time.perf_counter()
        pred = neural.predict_swarm(net, inst, combo_cap=combo_cap, rng_seed=seed + k)
        rt = time.perf_counter() - t0
        rep.add(trajectory_fuel(pred, inst), collision_count(pred, inst.r_col), rt)
    return rep


def expert_report(solutions, instances, label: str = "true") -> EvalReport:
    rep = EvalReport(label=label)
    for sol, inst in zip(solutions, instances):
        rep.add(sol.fuel, collision_count(sol.trajectories, inst.r_col), sol.solve_time)
    return rep


# ---------------------------------------------------------------- reports

def _rows_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def reports_to_rows(reports: dict[str, EvalReport], extra=()) -> list[list]:
    rows = []
    for name, rep in reports.items():
        for k, (f, c, rt) in enumerate(rep.per_trial):
            rows.append([name, *extra, k, f, c, rt])
    return rows


def reports_from_csv(text: str, key_cols=("model",)) -> dict:
    """Rebuild per-model (or per-(model, n)) reports from a results CSV."""
    out: dict = {}
    for row in csv.DictReader(io.StringIO(text)):
        key = tuple(row[c] for c in key_cols)
        key = key[0] if len(key) == 1 else key
        out.setdefault(key, EvalReport(label=str(key))).add(
            float(row["fuel"]), int(row["collisions"]), float(row["runtime_s"]))
    return out


# ---------------------------------------------------------------- experiments

def run_experiment1(spec: ExperimentSpec, dataset: Dataset, out_dir=None,
                    models: dict | None = None) -> dict:
    """Train (unless ``models`` given) and evaluate every model on the test split."""
    data = dataset.encoded_data()
    if models is None:
        models = train_models(data, spec.models, spec.T, spec.train, seed=spec.seed)
    test_insts, test_sols = dataset.part("test")
    X_test, Y_test = dataset.encoded("test")
    reports = {"true": expert_report(test_sols, test_insts)}
    model_info = {}
    mse_cfg = neural.TrainConfig()
    for k, (name, (net, hist)) in enumerate(models.items()):
        reports[name] = evaluate_network(net, test_insts, spec.combo_cap, seed=spec.seed, label=name)
        untrained = neural.build_model(name, T=spec.T, seed=spec.seed + k)
        plain = replace(net, output_layer="regression")
        model_info[name] = {
            "kind": net.kind,
            "hidden_sizes": list(net.hidden_sizes),
            "train_time_s": hist.seconds,
            "epochs": len(hist.epochs),
            "status": hist.status,
            "best_epoch": hist.best_epoch,
            "test_mse": neural.evaluate(plain, X_test, Y_test, mse_cfg),
            "untrained_test_mse": neural.evaluate(replace(untrained, output_layer="regression"),
                                                  X_test, Y_test, mse_cfg),
        }
    table = {}
    for name, rep in reports.items():
        table[name] = {**rep.summary(), "fuel_ci95": list(rep.fuel_ci())}
    result = {"reports": reports, "models": models, "table": table, "model_info": model_info}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "exp1_results.csv").write_text(
            _rows_csv(["model", "trial", "fuel", "collisions", "runtime_s"], reports_to_rows(reports)))
        plot_rows = [[name, spec.n, metric, float(table[name][metric])]
                     for name in table for metric in ("collisions_avg", "collisions_max", "fuel_avg")]
        (out / "exp1_plot.csv").write_text(_rows_csv(["model", "n", "metric", "value"], plot_rows))
        _write_json(out / "exp1_summary.json", {"table": table, "models": model_info})
        save_models(models, out / "models")
    return result


def _expert_on(args):
    inst, cfg = args
    return solve(inst, cfg)


def sweep_instances(spec: ExperimentSpec) -> dict[int, list[ProblemInstance]]:
    params = default_params(spec.T)
    return {n: [sample_random(instance_seed(spec.seed, 1 + j, k), n, spec.T, spec.r_col, params)
                for k in range(spec.sweep_instances)]
            for j, n in enumerate(spec.n_sweep)}


def run_experiment2(spec: ExperimentSpec, networks: dict[str, neural.Network], out_dir=None) -> dict:
    """Expert and every network across swarm sizes ``spec.n_sweep``."""
    per_n = sweep_instances(spec)
    reports: dict[tuple[str, int], EvalReport] = {}
    for n, insts in per_n.items():
        sols = _pmap(_expert_on, [(inst, spec.scp) for inst in insts], spec.jobs)
        reports[("true", n)] = expert_report(sols, insts)
        for name, net in networks.items():
            reports[(name, n)] = evaluate_network(net, insts, spec.combo_cap, seed=spec.seed, label=name)
    ns = np.array(spec.n_sweep, dtype=float)
    trend = {}
    for name in ["true", *networks]:
        cols = np.array([reports[(name, n)].collisions_avg for n in spec.n_sweep])
        slope = float(np.polyfit(ns, cols, 1)[0]) if len(ns) > 1 else 0.0
        trend[name] = {"collision_slope": slope,
                       "collisions_avg": dict(zip(map(str, spec.n_sweep), cols.tolist())),
                       "fuel_avg": {str(n): reports[(name, n)].fuel_avg for n in spec.n_sweep},
                       "runtime_avg": {str(n): reports[(name, n)].runtime_avg for n in spec.n_sweep}}
    result = {"reports": reports, "trend": trend}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        rows = []
        for (name, n), rep in reports.items():
            for k, (f, c, rt) in enumerate(rep.per_trial):
                rows.append([name, n, k, f, c, rt])
        (out / "exp2_results.csv").write_text(
            _rows_csv(["model", "n", "trial", "fuel", "collisions", "runtime_s"], rows))
        plot = [[name, n, metric, float(getattr(rep, metric))]
                for (name, n), rep in reports.items()
                for metric in ("collisions_avg", "fuel_avg", "runtime_avg")]
        (out / "exp2_plot.csv").write_text(_rows_csv(["model", "n", "metric", "value"], plot))
        _write_json(out / "exp2_summary.json", trend)
    return result


def _warm_job(args):
    inst, cfg, mode, net, seed = args
    src = "network" if net is not None else mode
    return warm_start_solve(inst, cfg, src, network=net, rng_seed=seed)


def run_experiment3(spec: ExperimentSpec, instances, networks: dict[str, neural.Network],
                    out_dir=None) -> dict:
    """Expert iterations/solve time from zero, straight-line and network seeds."""
    instances = list(instances)[: spec.warm_instances]
    modes = {"zero": None, "linear": None, **networks}
    runs: dict[str, list[PlanResult]] = {}
    for mode, net in modes.items():
        args = [(inst, spec.scp, mode, net, spec.seed + k) for k, inst in enumerate(instances)]
        runs[mode] = _pmap(_warm_job, args, spec.jobs)
    table = {}
    zero_it = np.array([r.iterations for r in runs["zero"]], dtype=float)
    for mode, rs in runs.items():
        it = np.array([r.iterations for r in rs], dtype=float)
        st = np.array([r.solve_time for r in rs])
        diff = zero_it - it
        sd = diff.std(ddof=1) if len(diff) > 1 else 0.0
        table[mode] = {
            "iterations_mean": float(it.mean()),
            "iterations_var": float(it.var(ddof=1)) if len(it) > 1 else 0.0,
            "solve_time_mean": float(st.mean()),
            "solve_time_var": float(st.var(ddof=1)) if len(st) > 1 else 0.0,
            "converged_frac": float(np.mean([r.converged for r in rs])),
            "fuel_mean": float(np.mean([r.fuel for r in rs])),
            "iteration_saving_effect_size": float(diff.mean() / sd) if sd > 0 else 0.0,
        }
    result = {"runs": runs, "table": table}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        rows = [[mode, k, r.iterations, r.converged, r.fuel, r.solve_time]
                for mode, rs in runs.items() for k, r in enumerate(rs)]
        (out / "exp3_results.csv").write_text(
            _rows_csv(["seed_mode", "trial", "iterations", "converged", "fuel", "solve_time_s"], rows))
        plot = [[mode, 10, metric, float(v[metric])] for mode, v in table.items()
                for metric in ("iterations_mean", "solve_time_mean")]
        (out / "exp3_plot.csv").write_text(_rows_csv(["model", "n", "metric", "value"], plot))
        _write_json(out / "exp3_summary.json", table)
    return result


def run_pipeline(spec: ExperimentSpec, out_dir) -> dict:
    """Dataset, training and all requested experiments into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    ds = generate_dataset(spec.count, (spec.n_train, spec.n_valid, spec.n_test), spec.n, spec.T,
                          spec.r_col, spec.seed, spec.scp, jobs=spec.jobs)
    ds.save(out / "dataset")
    res: dict = {"dataset": ds}
    e1 = run_experiment1(spec, ds, out)
    res["exp1"] = e1
    nets = {name: net for name, (net, _) in e1["models"].items()}
    if spec.which in ("exp2", "all"):
        res["exp2"] = run_experiment2(spec, nets, out)
    if spec.which in ("exp3", "all"):
        res["exp3"] = run_experiment3(spec, ds.part("test")[0], nets, out)
    summary = {"exp1": e1["table"], "models": e1["model_info"]}
    if "exp2" in res:
        summary["exp2"] = res["exp2"]["trend"]
    if "exp3" in res:
        summary["exp3"] = res["exp3"]["table"]
    _write_json(out / "summary.json", summary)
    write_provenance(out, {"experiment": spec.to_dict(), "dataset": ds.provenance,
                           "wall_time_s": time.perf_counter() - t0})
    return res


def write_provenance(out_dir, config: dict) -> None:
    _write_json(Path(out_dir) / "provenance.json", config)


# ---------------------------------------------------------------- hashing

def _is_timing(name: str) -> bool:
    name = name.lower()
    return "time" in name or "seconds" in name


def _mask(obj):
    if isinstance(obj, dict):
        return {k: ("<masked>" if _is_timing(k) else _mask(v)) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_mask(v) for v in obj]
    return obj


def canonical_bytes(path: Path) -> bytes:
    """File content with wall-clock fields masked: JSON keys, CSV columns and
    long-format CSV rows whose metric is a timing."""
    data = path.read_bytes()
    if path.suffix == ".json":
        return json.dumps(_mask(json.loads(data)), sort_keys=True).encode()
    if path.suffix == ".csv":
        rows = list(csv.reader(io.StringIO(data.decode())))
        if not rows:
            return b""
        keep = [j for j, h in enumerate(rows[0]) if not _is_timing(h)]
        # long-format plot rows name their metric in a cell
        rows = [rows[0]] + [r for r in rows[1:] if not any(_is_timing(c) for c in r)]
        return "\n".join(",".join(r[j] for j in keep) for r in rows).encode()
    return data


def tree_digest(root) -> str:
    """SHA-256 over every file under ``root`` (relative path + canonical bytes)."""
    root = Path(root)
    h = hashlib.sha256()
    for p in sorted(q for q in root.rglob("*") if q.is_file()):
        h.update(str(p.relative_to(root)).encode())
        h.update(b"\0")
        h.update(canonical_bytes(p))
        h.update(b"\0")
    return h.hexdigest()


def default_jobs() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)
