"""End-to-end acceptance checks, one test per criterion.

Each test records its outcome in ``conftest.ACCEPTANCE`` so the terminal
summary prints one pass/fail line per criterion. The desk-scale pipeline
(criteria 8-12) takes the better part of an hour on one core.
"""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE
from oracles import (
    central_difference,
    condensed_single_craft_fuel,
    naive_collision_count,
    random_bounded_lp,
    rel_error,
    vertex_enumeration,
)
from swarmpro import neural, pipeline
from swarmpro.dynamics import (
    MU_EARTH,
    R0_LEO,
    Pro,
    default_params,
    discretize,
    dynamics_residual,
    mean_motion,
    pro_state,
    propagate,
)
from swarmpro.lp import LpProblem, solve_lp
from swarmpro.metrics import collision_count
from swarmpro.neural import encoding
from swarmpro.neural.train import loss_and_grads, loss_value
from swarmpro.scenario import TransferTemplate, instantiate, sample_random
from swarmpro.scp import solve

E = mean_motion(MU_EARTH, R0_LEO)
FF_FAMILY = ("FF1", "FF2", "FFcol")
LSTM_FAMILY = ("LSTM1", "LSTM2", "LSTMcol")


def record(k, ok, detail):
    ACCEPTANCE[k] = (bool(ok), detail)
    assert ok, f"criterion {k}: {detail}"


def textbook_cw_stm(n, t):
    """Clohessy-Wiltshire transition matrix as usually tabulated (x radial, y along-track)."""
    s, c = np.sin(n * t), np.cos(n * t)
    return np.array([
        [4 - 3 * c, 0, 0, s / n, 2 * (1 - c) / n, 0],
        [6 * (s - n * t), 1, 0, -2 * (1 - c) / n, (4 * s - 3 * n * t) / n, 0],
        [0, 0, c, 0, 0, s / n],
        [3 * n * s, 0, 0, c, 2 * s, 0],
        [-6 * n * (1 - c), 0, 0, -2 * s, 4 * c - 3, 0],
        [0, 0, -n * s, 0, 0, c],
    ])


@pytest.fixture(scope="module")
def desk_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("desk_a")
    t0 = time.perf_counter()
    res = pipeline.run_pipeline(pipeline.PRESETS["desk"], out)
    return out, res, time.perf_counter() - t0


def test_criterion_01_dynamics_exactness():
    t0 = time.perf_counter()
    params = default_params(11)
    worst_a = worst_semi = 0.0
    for dt in (1.0, 10.0, 60.0, 300.0):
        A = discretize(params.with_dt(dt)).A
        A2 = discretize(params.with_dt(2 * dt)).A
        worst_a = max(worst_a, np.max(np.abs(A - textbook_cw_stm(E, dt))))
        worst_semi = max(worst_semi, np.max(np.abs(A @ A - A2)))
    elapsed = time.perf_counter() - t0
    record(1, worst_a < 1e-9 and worst_semi < 1e-9 and elapsed < 1.0,
           f"max|A-STM|={worst_a:.1e} max|A^2-A(2dt)|={worst_semi:.1e} in {elapsed:.3f}s")


def test_criterion_02_pro_periodicity():
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    steps = 100
    params = default_params(11)
    dyn = discretize(params.with_dt(params.period / steps))
    worst_p = worst_v = 0.0
    for _ in range(20):
        pro = Pro(rng.uniform(50, 400), phase=rng.uniform(0, 2 * math.pi),
                  slant=rng.uniform(-1.2, 1.2), y_offset=rng.uniform(-200, 200))
        s0 = pro_state(pro, params, 0.0)
        end = propagate(s0, np.zeros((steps, 3)), dyn)[-1]
        worst_p = max(worst_p, np.max(np.abs(end[:3] - s0[:3])))
        worst_v = max(worst_v, np.max(np.abs(end[3:] - s0[3:])))
    elapsed = time.perf_counter() - t0
    record(2, worst_p < 1e-6 and worst_v < 1e-9 and elapsed < 1.0,
           f"position err {worst_p:.1e} m, velocity err {worst_v:.1e} m/s in {elapsed:.3f}s")


def test_criterion_03_lp_oracle():
    rng = np.random.default_rng(3)
    problems = [random_bounded_lp(rng) for _ in range(100)]
    t0 = time.perf_counter()
    sols = []
    for c, Aeq, beq, Ain, bin_, lb, ub in problems:
        sols.append(solve_lp(LpProblem(c, Aeq, beq, Ain, bin_, lb, ub)))
    elapsed = time.perf_counter() - t0
    worst = max(abs(s.objective - vertex_enumeration(*p)) for s, p in zip(sols, problems))
    ok = all(s.ok for s in sols) and worst < 1e-6 and elapsed < 10.0
    record(3, ok, f"100 LPs, max |obj - vertex optimum| = {worst:.1e}, solve time {elapsed:.2f}s")


def test_criterion_04_expert_feasibility():
    t0 = time.perf_counter()
    insts = [sample_random(pipeline.instance_seed(4, 9, k), 10, 11, 15.0) for k in range(50)]
    results = [solve(inst) for inst in insts]
    elapsed = time.perf_counter() - t0
    conv = [r for r in results if r.converged]
    cols = np.array([r.collisions for r in conv])
    zero_frac = float(np.mean(cols == 0)) if len(cols) else 0.0
    resid = max(dynamics_residual(r.trajectories, r.controls, discretize(i.params))
                for r, i in zip(results, insts))
    ok = len(conv) > 0 and zero_frac >= 0.95 and cols.max() <= 2 and resid < 1e-8 and elapsed < 600
    record(4, ok, f"{len(conv)}/50 converged, {zero_frac:.0%} collision-free, max {cols.max()} "
                  f"collisions, residual {resid:.1e}, {elapsed:.0f}s")


def test_criterion_05_single_craft_optimality():
    worst = 0.0
    for k in range(20):
        inst = sample_random(pipeline.instance_seed(5, 0, k), 1, 11, 15.0)
        worst = max(worst, abs(solve(inst).fuel - condensed_single_craft_fuel(inst)))
    rng = np.random.default_rng(5)
    drift = 0.0
    for _ in range(5):
        pro = Pro(rng.uniform(100, 300), phase=rng.uniform(0, 2 * math.pi), slant=rng.uniform(-0.7, 0.7))
        drift = max(drift, solve(instantiate(TransferTemplate([(pro, 1)], [(pro, 1)]), 1, 11, 15.0)).fuel)
    record(5, worst < 1e-6 and drift <= 1e-8,
           f"max |fuel - one-shot LP| = {worst:.1e} on 20 instances, drift fuel {drift:.1e}")


def test_criterion_06_collision_oracle():
    rng = np.random.default_rng(6)
    mismatches = 0
    for _ in range(100):
        n, T = int(rng.integers(1, 9)), int(rng.integers(1, 12))
        traj = rng.uniform(-40, 40, size=(n, T, 6))
        r = float(rng.uniform(5, 30))
        mismatches += collision_count(traj, r) != naive_collision_count(traj, r)
    record(6, mismatches == 0, f"{mismatches} mismatches over 100 random trajectory sets")


def _param_gradient_error(net, x, y, cfg, rng, n_probe=20):
    _, grads = loss_and_grads(net, x, y, cfg)
    ana, num = [], []
    for key, P in net.params.items():
        flat = P.reshape(-1)
        for idx in rng.choice(P.size, size=min(n_probe, P.size), replace=False):
            old = flat[idx]
            flat[idx] = old + 1e-6
            fp = loss_value(net, neural.forward(net, x), y, cfg)
            flat[idx] = old - 1e-6
            fm = loss_value(net, neural.forward(net, x), y, cfg)
            flat[idx] = old
            ana.append(grads[key].reshape(-1)[idx])
            num.append((fp - fm) / 2e-6)
    return rel_error(ana, num)


def test_criterion_07_gradient_checks():
    rng = np.random.default_rng(7)
    T, cfg = 11, neural.TrainConfig()
    worst = {"MLP": 0.0, "LSTM": 0.0, "MSE": 0.0, "collision-penalized": 0.0}
    for k in range(10):
        mlp = neural.init_network("mlp", (9, 6), T=T, seed=k)
        x, y = rng.normal(size=(2, 660)), rng.normal(size=(2, 660))
        worst["MLP"] = max(worst["MLP"], _param_gradient_error(mlp, x, y, cfg, rng))
        lstm = neural.init_network("lstm", (5, 4), T=T, seed=k)
        x, y = rng.normal(size=(2, 6 * 3 * T)), rng.normal(size=(2, 6 * 3 * T))
        worst["LSTM"] = max(worst["LSTM"], _param_gradient_error(lstm, x, y, cfg, rng))
        p, t = rng.normal(size=(3, 30)), rng.normal(size=(3, 30))
        fd = central_difference(lambda q: neural.loss_mse(q, t), p)
        worst["MSE"] = max(worst["MSE"], rel_error(neural.mse_grad(p, t), fd))
        n = 4
        pred = encoding.encode_trajectories(rng.uniform(-12, 12, size=(n, T, 6)), n_slots=5)[None]
        target = pred + rng.normal(scale=0.05, size=pred.shape)
        f = lambda q: neural.loss_collision_penalized(q, target, n, T, 15.0, 0.3)
        g = neural.collision_penalized_grad(pred, target, n, T, 15.0, 0.3)
        worst["collision-penalized"] = max(worst["collision-penalized"],
                                           rel_error(g, central_difference(f, pred, h=1e-7)))
    record(7, max(worst.values()) < 1e-4,
           "max relative error " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))


def test_criterion_08_training_sanity(desk_run):
    ds = pipeline.generate_dataset(10, (8, 1, 1), n=10, seed=8)
    insts, sols = ds.instances, ds.solutions
    X = np.stack([encoding.encode_instance(i) for i in insts])
    Y = np.stack([encoding.encode_trajectories(s.trajectories) for s in sols])
    net = neural.build_model("FF1", dropout_rate=0.0)
    fitted, hist = neural.train(net, neural.EncodedData(X, Y, X, Y), neural.TrainConfig(max_epochs=200))
    overfit = neural.evaluate(fitted, X, Y, neural.TrainConfig())
    info = desk_run[1]["exp1"]["model_info"]
    ratios = {name: m["test_mse"] / m["untrained_test_mse"] for name, m in info.items()}
    ok = overfit < 1e-3 and len(hist.epochs) <= 200 and set(ratios) == set(neural.MODEL_NAMES)
    ok = ok and all(r < 0.1 for r in ratios.values())
    record(8, ok, f"FF1 10-sample train MSE {overfit:.1e} after {len(hist.epochs)} epochs; "
                  "test/untrained MSE " + ", ".join(f"{k} {v:.3f}" for k, v in ratios.items()))


def test_criterion_09_fuel_orderings(desk_run):
    table = desk_run[1]["exp1"]["table"]
    expert = table["true"]["fuel_avg"]
    trials = desk_run[1]["exp1"]["reports"]["true"].per_trial
    nets = {k: v for k, v in table.items() if k != "true"}
    ff = float(np.mean([table[k]["fuel_avg"] for k in FF_FAMILY]))
    lstm = float(np.mean([table[k]["fuel_avg"] for k in LSTM_FAMILY]))
    ok = len(trials) >= 100 and all(expert < v["fuel_avg"] for v in nets.values()) and lstm < ff
    cis = ", ".join(f"{k} {v['fuel_avg']:.4f} [{v['fuel_ci95'][0]:.4f}, {v['fuel_ci95'][1]:.4f}]"
                    for k, v in table.items())
    record(9, ok, f"{len(trials)} test instances; LSTM family {lstm:.4f} vs FF family {ff:.4f}; {cis}")


def test_criterion_10_swarm_size_trends(desk_run):
    trend = desk_run[1]["exp2"]["trend"]
    expert_rt = trend["true"]["runtime_avg"]["30"]
    parts, ok = [], True
    for name, tr in trend.items():
        if name == "true":
            continue
        c10, c30 = tr["collisions_avg"]["10"], tr["collisions_avg"]["30"]
        speedup = expert_rt / tr["runtime_avg"]["30"]
        ok = ok and c30 > c10 and speedup > 10
        parts.append(f"{name} {c10:.2f}->{c30:.2f} x{speedup:.0f}")
    record(10, ok, "collisions n=10->30 and expert/network time at n=30: " + ", ".join(parts))


def test_criterion_11_warm_start(desk_run):
    res = desk_run[1]
    table = res["exp3"]["table"]
    n_runs = len(res["exp3"]["runs"]["zero"])
    zero = table["zero"]["iterations_mean"]
    nets = {k: v["iterations_mean"] for k, v in table.items() if k in neural.MODEL_NAMES}
    insts, sols = res["dataset"].part("test")
    self_iters = [solve(i, seed=s.trajectories).iterations for i, s in zip(insts[:10], sols[:10])]
    ok = n_runs >= 20 and len(nets) == 6 and all(v <= 0.8 * zero for v in nets.values())
    ok = ok and all(k == 1 for k in self_iters)
    record(11, ok, f"{n_runs} instances, zero seed {zero:.2f} iterations; "
                   + ", ".join(f"{k} {v:.2f}" for k, v in nets.items())
                   + f"; self-seed iterations {sorted(set(self_iters))}")


def test_criterion_12_determinism(desk_run, tmp_path_factory):
    first = desk_run[0]
    second = tmp_path_factory.mktemp("desk_b")
    pipeline.run_pipeline(pipeline.PRESETS["desk"], second)
    a, b = pipeline.tree_digest(first), pipeline.tree_digest(second)
    record(12, a == b, f"digests {a[:16]} vs {b[:16]} (first run {desk_run[2]:.0f}s)")
