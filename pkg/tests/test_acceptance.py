"""Acceptance criteria 1-10, one PASS/FAIL line each.

Every criterion is a function returning ``(ok, detail, artifacts)`` where
``artifacts`` maps file names to the exact CSV bytes the run exported.
Criterion 10 reruns 1-9 and compares those bytes.

Run with ``pytest tests/test_acceptance.py -v -s`` or directly with
``python3 tests/test_acceptance.py``.
"""

import functools
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

from sigmatune.adaptive import SIGMA_UPDATE
from sigmatune.config import config_from_dict, load_config, load_scenario, scenario_from_dict
from sigmatune.controller import CLFController
from sigmatune.dynamics import PlantParams, PlantState, rk4_step, simulate
from sigmatune.harness import (
    export_dataset,
    export_train_log,
    export_trajectory,
    write_csv,
)
from sigmatune.pipeline import (
    build_dataset,
    initial_buffer,
    regime_shift_experiment,
    run_adaptive_scenario,
    run_simulation,
    train_surrogate,
)
from sigmatune.surrogate import TRAIN, NetConfig, backward, forward, init_net, loss_mse

ROOT = Path(__file__).resolve().parents[1]
# frozen from the seeded baseline run
GOLDEN_MAX_E_AFTER_HALF_SECOND = 0.09772791931201197
UPTICK_TIME = 0.8867
THRESHOLD = 0.8


def _bytes(write, *args):
    with tempfile.TemporaryDirectory() as d:
        path = Path(d) / "out.csv"
        write(*args, path)
        return path.read_bytes()


def _trajectory_bytes(traj):
    return _bytes(export_trajectory, traj)


def _rows_bytes(header, rows):
    return _bytes(lambda h, r, p: write_csv(p, h, r), header, rows)


# -- criteria ---------------------------------------------------------------------

def criterion_1():
    k = 115.0
    traj = simulate(PlantState(0.0, 0.5, 0.0), PlantParams(), CLFController(), t_end=0.05)
    t, V = np.array(traj.t), np.array(traj.V)
    mask = t <= 5.0 / k + 1e-12
    rel = np.abs(V[mask] / (V[0] * np.exp(-k * t[mask])) - 1.0)
    ok = bool(rel.max() <= 0.02)
    return ok, f"max relative error {rel.max():.2e} over {mask.sum()} samples (<= 2%)", \
        {"c1_trajectory.csv": _trajectory_bytes(traj)}


def criterion_2():
    traj = run_simulation(config_from_dict({}))
    t, e = np.array(traj.t), np.abs(traj.e)
    worst = float(e[t > 0.5].max())
    ok = traj.status == "Completed" and worst <= GOLDEN_MAX_E_AFTER_HALF_SECOND
    return ok, f"status {traj.status}, max|e| after 0.5 s = {worst!r} " \
               f"(golden {GOLDEN_MAX_E_AFTER_HALF_SECOND!r})", \
        {"c2_trajectory.csv": _trajectory_bytes(traj)}


def criterion_3():
    sc = load_scenario(ROOT / "scenarios" / "failure.json")
    traj = run_simulation(config_from_dict({}), sc)
    ok = traj.status == "Diverged" and traj.diverged_at < 0.5
    b = sc.binding
    return ok, f"binding ({b.target1}, {b.target2}): {traj.status} at t = {traj.diverged_at}", \
        {"c3_trajectory.csv": _trajectory_bytes(traj)}


@functools.lru_cache(maxsize=None)
def _default_pipeline():
    cfg = config_from_dict({})
    ds = build_dataset(cfg)
    net, train, test = train_surrogate(cfg, ds)
    return cfg, ds, net, train, test


def criterion_4():
    cfg, ds, net, _, test = _default_pipeline()
    final = net.train_log_.test_rmse[-1]
    ok = len(net.train_log_.lr) == 5 and final <= 0.05
    return ok, f"held-out RMSE {final:.5f} after {len(net.train_log_.lr)} epochs (<= 0.05)", {
        "c4_dataset.csv": _bytes(export_dataset, ds),
        "c4_trainlog.csv": _bytes(export_train_log, net.train_log_),
    }


def criterion_5():
    cfg = NetConfig(input_dim=5, hidden_width=4, blocks=5, dropout_rate=0.0)
    net = init_net(cfg, np.random.default_rng(0))
    rng = np.random.default_rng(1)
    for i in range(cfg.blocks):
        net.params[f"gamma{i}"] = 1.0 + 0.3 * rng.standard_normal(4)
        net.params[f"beta{i}"] = 0.2 * rng.standard_normal(4)
    X, y = rng.standard_normal((8, 5)), rng.standard_normal(8)
    pred, cache = forward(net, X, TRAIN, update_stats=False)
    grads = backward(net, cache, pred, y)
    h, worst, rows = 1e-5, 0.0, []
    for name, p in net.params.items():
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + h
            lp = loss_mse(forward(net, X, TRAIN, update_stats=False)[0], y)
            p[idx] = orig - h
            lm = loss_mse(forward(net, X, TRAIN, update_stats=False)[0], y)
            p[idx] = orig
            num, ana = (lp - lm) / (2 * h), grads[name][idx]
            rel = abs(num - ana) / max(abs(num) + abs(ana), 1e-8)
            worst = max(worst, rel)
            rows.append([name, str(idx), ana, num])
    return worst < 1e-4, f"max relative error {worst:.2e} over {len(rows)} parameters (< 1e-4)", \
        {"c5_gradients.csv": _rows_bytes(("param", "index", "analytic", "numeric"), rows)}


def criterion_6():
    def endpoint(dt):
        ctrl, s = CLFController(), PlantState()
        for _ in range(int(round(0.1 / dt))):
            s = rk4_step(s, PlantParams(), ctrl.u, dt)
        return s.x

    ref = endpoint(1e-6)
    e1, e2 = abs(endpoint(2e-3) - ref), abs(endpoint(1e-3) - ref)
    ratio = e1 / e2
    return 12.0 <= ratio <= 20.0, f"error ratio {ratio:.3f} for dt 2e-3 -> 1e-3 (in [12, 20])", \
        {"c6_rk4.csv": _rows_bytes(("dt", "abs_error"), [[2e-3, e1], [1e-3, e2]])}


@functools.lru_cache(maxsize=None)
def _sabotage_pipeline():
    cfg = load_config(ROOT / "configs" / "sabotage.json")
    ds = build_dataset(cfg)
    net, (Xtr, ytr), _ = train_surrogate(cfg, ds)
    return cfg, net, initial_buffer(cfg, ds, Xtr, ytr)


def _sabotage_run():
    cfg, net, buf = _sabotage_pipeline()
    sc = load_scenario(ROOT / "scenarios" / "sabotage.json")
    return run_adaptive_scenario(cfg, net, buf, sc)


def criterion_7():
    res = _sabotage_run()
    traj = res.trajectory
    t, e = np.array(traj.t), np.abs(traj.e)
    ups = [r for r in res.events.of_kind(SIGMA_UPDATE) if r["t"] > UPTICK_TIME]
    above = np.flatnonzero((t > UPTICK_TIME) & (e > THRESHOLD))
    if len(above) == 0:
        return False, "no error uptick above the threshold after the sabotage", {}
    up = int(above[0])
    below = np.flatnonzero((np.arange(len(e)) > up) & (e < THRESHOLD))
    steps = int(below[0] - up) if len(below) else None
    ok = bool(ups) and steps is not None and steps <= 100
    detail = (f"uptick at t = {t[up]:.3f}, |e| < {THRESHOLD} again after {steps} steps (<= 100), "
              f"{len(ups)} SigmaUpdates after t = {UPTICK_TIME}, run {traj.status}")
    return ok, detail, {"c7_trajectory.csv": _trajectory_bytes(traj),
                        "c7_eventlog.csv": _bytes(lambda p: res.events.export(p))}


def _audit_runs():
    """Every adaptive run of the suite: the sabotage run plus a dormant baseline run."""
    cfg, ds, net, (Xtr, ytr), _ = _default_pipeline()
    dormant = run_adaptive_scenario(cfg, net, initial_buffer(cfg, ds, Xtr, ytr))
    return {"sabotage": _sabotage_run(), "baseline": dormant}


def criterion_8():
    runs = _audit_runs()
    n, bad = 0, []
    for name, res in runs.items():
        for r in res.events.of_kind(SIGMA_UPDATE):
            n += 1
            if not r["predicted_err"] < r["measured_err"]:
                bad.append((name, r["t"]))
    ok = not bad and n > 0
    artifacts = {f"c8_{k}_eventlog.csv": _bytes(lambda p, r=r: r.events.export(p))
                 for k, r in runs.items()}
    return ok, f"{n} SigmaUpdates audited over {len(runs)} runs, {len(bad)} violations", artifacts


def criterion_9():
    cfg = load_config(ROOT / "configs" / "regime_shift.json")
    r = regime_shift_experiment(cfg, {"forcing_amp": 12.0})
    ok = r["with_memory"] < r["without_memory"] and r["with_memory"] <= 2.0 * r["pre"]
    detail = (f"pre-shift {r['pre']:.5f}, with memory {r['with_memory']:.5f} "
              f"({r['with_memory'] / r['pre']:.2f}x, <= 2x), without memory "
              f"{r['without_memory']:.5f}")
    rows = [[k, v] for k, v in sorted(r.items())]
    return ok, detail, {"c9_results.csv": _rows_bytes(("quantity", "value"), rows)}


CRITERIA = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
            6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9}


@functools.lru_cache(maxsize=None)
def first_run(n):
    start = time.perf_counter()
    ok, detail, artifacts = CRITERIA[n]()
    return ok, detail, artifacts, time.perf_counter() - start


def criterion_10():
    # drop the memoized pipelines so the rerun recomputes everything from the seeds
    for n in CRITERIA:
        first_run(n)
    _default_pipeline.cache_clear()
    _sabotage_pipeline.cache_clear()
    diffs, files = [], 0
    for n, fn in CRITERIA.items():
        before = first_run(n)[2]
        after = fn()[2]
        files += len(before)
        if before.keys() != after.keys():
            diffs.append(f"{n}: different outputs")
            continue
        diffs += [name for name in before if before[name] != after[name]]
    return not diffs, f"{files} output files compared, {len(diffs)} differ {diffs or ''}", {}


def _line(n, ok, detail):
    return f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail, seconds):
        with capsys.disabled():
            print(f"\n{_line(n, ok, detail)} [{seconds:.1f} s]")
    return emit


@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_criterion(n, report):
    ok, detail, _, seconds = first_run(n)
    report(n, ok, detail, seconds)
    assert ok, detail


def test_criterion_10_determinism(report):
    start = time.perf_counter()
    ok, detail, _ = criterion_10()
    report(10, ok, detail, time.perf_counter() - start)
    assert ok, detail


def test_misinitialized_model_is_kept_from_diverging():
    # not a numbered criterion: the same corruption as the sabotage, applied at start
    sc = scenario_from_dict({"binding": ["gamma2", "model.eps1"], "events": [
        {"at_time": 0.0, "action": "SetSigmas", "s1": 4.0, "s2": -1.0}]})
    cfg, net, buf = _sabotage_pipeline()
    assert run_simulation(cfg, sc).status == "Diverged"
    res = run_adaptive_scenario(cfg, net, buf, sc)
    assert res.trajectory.status == "Completed"
    ups = res.events.of_kind(SIGMA_UPDATE)
    assert ups and all(r["predicted_err"] < r["measured_err"] for r in ups)


if __name__ == "__main__":
    failed = 0
    for n in sorted(CRITERIA):
        ok, detail, _, seconds = first_run(n)
        print(f"{_line(n, ok, detail)} [{seconds:.1f} s]", flush=True)
        failed += not ok
    ok, detail, _ = criterion_10()
    print(_line(10, ok, detail), flush=True)
    sys.exit(1 if failed or not ok else 0)
