import csv
import io
import json

import numpy as np
import pytest

from swarmpro import neural, pipeline
from swarmpro.dynamics import discretize, dynamics_residual
from swarmpro.scp import PlanResult, ScpConfig, repair_plan

TINY = pipeline.ExperimentSpec(
    n_train=12, n_valid=4, n_test=4, n_sweep=(2, 12), sweep_instances=2, warm_instances=2,
    models=("FF1", "LSTMcol"), train=neural.TrainConfig(max_epochs=3),
)


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("tiny")
    res = pipeline.run_pipeline(TINY, out)
    return out, res


def test_split_sizes():
    assert pipeline.split_sizes(10, (8, 1, 1)) == (8, 1, 1)
    assert pipeline.split_sizes(1000, (8, 1, 1)) == (800, 100, 100)
    assert sum(pipeline.split_sizes(37, (3, 2, 1))) == 37
    with pytest.raises(ValueError):
        pipeline.split_sizes(10, (1, 1))


def test_dataset_splits_and_determinism(tmp_path):
    a = pipeline.generate_dataset(10, (8, 1, 1), n=4, seed=3)
    assert a.provenance["kept"] == 10
    assert {k: len(v) for k, v in a.split.items()} == {"train": 8, "valid": 1, "test": 1}
    b = pipeline.generate_dataset(10, (8, 1, 1), n=4, seed=3)
    a.save(tmp_path / "a")
    b.save(tmp_path / "b")
    for sub in ("instances/00003.json", "splits.json", "provenance.json"):
        assert (tmp_path / "a" / sub).read_bytes() == (tmp_path / "b" / sub).read_bytes()
    assert pipeline.tree_digest(tmp_path / "a") == pipeline.tree_digest(tmp_path / "b")
    loaded = pipeline.Dataset.load(tmp_path / "a")
    assert loaded.split == a.split
    assert np.array_equal(loaded.solutions[5].trajectories, a.solutions[5].trajectories)
    assert loaded.instances[2].to_json() == a.instances[2].to_json()


def test_dataset_encodings():
    ds = pipeline.generate_dataset(10, (8, 1, 1), n=10, seed=0)
    data = ds.encoded_data()
    assert data.x_train.shape == data.y_train.shape == (8, 660)
    X, Y = ds.encoded("test")
    assert X.shape == (1, 660)


def test_drop_rate_warning(monkeypatch):
    real = pipeline.solve

    def flaky(inst, cfg):
        res = real(inst, ScpConfig(max_outer_iter=1))
        res.converged = False
        return res

    monkeypatch.setattr(pipeline, "solve", flaky)
    ds = pipeline.generate_dataset(3, (1, 1, 1), n=2, seed=0)
    assert ds.provenance["drop_rate"] == 1.0
    assert ds.provenance["status"].startswith("warning")
    assert ds.instances == []


def test_dataset_invariants():
    ds = pipeline.generate_dataset(3, (1, 1, 1), n=2, seed=1)
    with pytest.raises(ValueError):
        pipeline.Dataset(ds.instances, ds.solutions[:2], ds.split, {})
    with pytest.raises(ValueError):
        pipeline.Dataset(ds.instances, ds.solutions, {"train": [0, 1], "valid": [1], "test": [2]}, {})


def test_spec_validation_and_round_trip():
    with pytest.raises(ValueError):
        pipeline.ExperimentSpec(n_train=0)
    with pytest.raises(ValueError):
        pipeline.ExperimentSpec(models=("FF9",))
    with pytest.raises(ValueError):
        pipeline.ExperimentSpec(which="exp4")
    d = json.loads(json.dumps(TINY.to_dict()))
    assert pipeline.ExperimentSpec.from_dict(d) == TINY
    full = pipeline.PRESETS["paper"]
    assert (full.n_train, full.n_valid, full.n_test) == (8000, 1000, 1000)
    assert full.n_sweep == tuple(range(2, 31))


def test_parallel_map_preserves_order():
    items = [(pipeline.instance_seed(0, 0, k), 3, 11, 15.0, None, ScpConfig()) for k in range(4)]
    serial = pipeline._pmap(pipeline._solve_seeded, items, 1)
    parallel = pipeline._pmap(pipeline._solve_seeded, items, 2)
    for (i1, s1), (i2, s2) in zip(serial, parallel):
        assert i1.to_json() == i2.to_json()
        assert np.array_equal(s1.trajectories, s2.trajectories)


def test_pipeline_outputs(tiny_run):
    out, res = tiny_run
    for name in ("exp1_results.csv", "exp2_results.csv", "exp3_results.csv", "exp1_plot.csv",
                 "exp2_plot.csv", "exp3_plot.csv", "summary.json", "provenance.json",
                 "dataset/splits.json", "models/FF1.json", "models/LSTMcol_history.csv"):
        assert (out / name).exists(), name
    rows = list(csv.DictReader(io.StringIO((out / "exp2_plot.csv").read_text())))
    assert set(rows[0]) == {"model", "n", "metric", "value"}
    summary = json.loads((out / "summary.json").read_text())
    assert set(summary["exp1"]) == {"true", "FF1", "LSTMcol"}
    assert set(summary["exp3"]) == {"zero", "linear", "FF1", "LSTMcol"}


def test_reports_recomputable_from_rows(tiny_run):
    out, res = tiny_run
    table = json.loads((out / "exp1_summary.json").read_text())["table"]
    rebuilt = pipeline.reports_from_csv((out / "exp1_results.csv").read_text())
    for name, rep in rebuilt.items():
        for key in ("fuel_avg", "fuel_max", "collisions_avg", "collisions_max", "runtime_avg"):
            assert rep.summary()[key] == table[name][key]
    per_n = pipeline.reports_from_csv((out / "exp2_results.csv").read_text(), key_cols=("model", "n"))
    trend = json.loads((out / "exp2_summary.json").read_text())
    for (name, n), rep in per_n.items():
        assert rep.collisions_avg == trend[name]["collisions_avg"][n]


def test_expert_row_matches_dataset(tiny_run):
    out, res = tiny_run
    ds = res["dataset"]
    _, sols = ds.part("test")
    assert res["exp1"]["reports"]["true"].fuel_avg == pytest.approx(np.mean([s.fuel for s in sols]))


def test_network_fuel_is_for_a_feasible_transfer(tiny_run):
    _, res = tiny_run
    ds = res["dataset"]
    inst = ds.part("test")[0][0]
    net = res["exp1"]["models"]["FF1"][0]
    pred = neural.predict_swarm(net, inst)
    traj, U = repair_plan(inst, pred)
    assert dynamics_residual(traj, U, discretize(inst.params)) < 1e-8
    assert pipeline.trajectory_fuel(pred, inst) == pytest.approx(np.abs(U).sum())


def test_digest_masks_timing_only(tmp_path):
    (tmp_path / "a.json").write_text(json.dumps({"fuel": 1.0, "solve_time_s": 3.0}))
    (tmp_path / "b.csv").write_text("model,n,metric,value\nFF1,2,runtime_avg,0.1\nFF1,2,fuel_avg,0.5\n")
    (tmp_path / "c.csv").write_text("epoch,train_loss,val_loss,seconds\n1,0.5,0.6,1.25\n")
    d0 = pipeline.tree_digest(tmp_path)
    (tmp_path / "a.json").write_text(json.dumps({"fuel": 1.0, "solve_time_s": 9.0}))
    (tmp_path / "b.csv").write_text("model,n,metric,value\nFF1,2,runtime_avg,0.7\nFF1,2,fuel_avg,0.5\n")
    (tmp_path / "c.csv").write_text("epoch,train_loss,val_loss,seconds\n1,0.5,0.6,7.5\n")
    assert pipeline.tree_digest(tmp_path) == d0
    (tmp_path / "b.csv").write_text("model,n,metric,value\nFF1,2,runtime_avg,0.7\nFF1,2,fuel_avg,0.6\n")
    assert pipeline.tree_digest(tmp_path) != d0


def test_plan_results_persist_solve_time(tiny_run):
    out, _ = tiny_run
    sol = PlanResult.from_json((out / "dataset" / "solutions" / "00000.json").read_text())
    assert sol.solve_time > 0
