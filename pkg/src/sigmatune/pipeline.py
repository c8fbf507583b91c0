"""End-to-end steps shared by the CLI and the acceptance tests."""

from __future__ import annotations

import copy
from dataclasses import replace

import numpy as np

from .adaptive import MemoryBuffer, retrain, run_adaptive
from .config import RunConfig, Scenario
from .dynamics import simulate
from .harness import collect_dataset, make_xy, rmse, split_dataset


def binding_for(cfg: RunConfig, scenario: Scenario | None = None):
    if scenario is not None and scenario.binding is not None:
        return scenario.binding
    return cfg.adaptive.sigma_binding()


def run_simulation(cfg: RunConfig, scenario: Scenario | None = None):
    sim = cfg.simulation
    return simulate(cfg.initial_state(), cfg.plant, cfg.make_controller(), dt=sim.dt,
                    t_end=sim.t_end, events=scenario.events if scenario else (),
                    binding=binding_for(cfg, scenario), divergence_bound=sim.divergence_bound,
                    zero_order_hold=sim.zero_order_hold)


def build_dataset(cfg: RunConfig, binding=None, n_episodes=None):
    """Collect and split the training dataset described by ``cfg``."""
    seed = cfg.section_seed("collection")
    ds = collect_dataset(
        n_episodes or cfg.collection.n_episodes,
        plant=cfg.plant,
        controller=cfg.make_controller(),
        binding=binding or cfg.adaptive.sigma_binding(),
        sampler=cfg.adaptive.sampler(),
        dt=cfg.simulation.dt,
        t_end=cfg.collection.t_end,
        seed=seed,
        redraws=cfg.collection.redraws,
        initial=cfg.initial_state(),
        divergence_bound=cfg.simulation.divergence_bound,
    )
    return split_dataset(ds, seed=seed)


def training_pairs(cfg: RunConfig, ds):
    s = cfg.surrogate
    bound = cfg.simulation.divergence_bound
    train = make_xy(ds, ds.train_idx, s.horizon, s.include_u, bound)
    test = make_xy(ds, ds.test_idx, s.horizon, s.include_u, bound)
    return train, test


def train_surrogate(cfg: RunConfig, ds):
    """Fit a fresh surrogate on the train split; returns ``(net, (Xtr, ytr), (Xte, yte))``."""
    (Xtr, ytr), (Xte, yte) = training_pairs(cfg, ds)
    net = cfg.surrogate.estimator(cfg.seed)
    net.fit(Xtr, ytr, eval_set=(Xte, yte) if len(yte) else None)
    return net, (Xtr, ytr), (Xte, yte)


def initial_buffer(cfg: RunConfig, ds, Xtr, ytr):
    """Rehearsal memory drawn from the training pairs; the reference mean is the dataset's."""
    rng = np.random.default_rng([cfg.section_seed("adaptive"), 2])
    prev = float(np.mean(ds.col("err")[ds.train_idx])) if len(ds) else 0.0
    return MemoryBuffer.from_training(Xtr, ytr, cfg.adaptive.memory_fraction, rng,
                                      prev_sys_avg=prev, horizon=cfg.surrogate.horizon)


def run_adaptive_scenario(cfg: RunConfig, net, buffer, scenario: Scenario | None = None):
    sim = cfg.simulation
    return run_adaptive(
        cfg.initial_state(), cfg.plant, cfg.make_controller(), net, cfg.adaptive, buffer,
        events=scenario.events if scenario else (), dt=sim.dt, t_end=sim.t_end,
        binding=binding_for(cfg, scenario), divergence_bound=sim.divergence_bound,
        zero_order_hold=sim.zero_order_hold, seed=cfg.section_seed("adaptive"),
    )


def regime_shift_experiment(cfg: RunConfig, shift: dict, n_new_episodes=1, new_seed=99):
    """Memory ablation: retrain after the true plant drifts, with and without rehearsal.

    A surrogate is trained on the regime described by ``cfg``. The plant then
    changes by ``shift`` while the controller keeps its old model, and
    ``n_new_episodes`` are logged under the new regime. The surrogate is
    retrained on that new data once with the rehearsal memory and once
    without. Returns held-out RMSEs on the original regime.
    """
    ds_a = build_dataset(cfg)
    net, (Xa, ya), (Xa_test, ya_test) = train_surrogate(cfg, ds_a)

    plant_b = replace(cfg.plant, **shift)
    ds_b = collect_dataset(
        n_new_episodes, plant=plant_b, controller=cfg.make_controller(),
        binding=cfg.adaptive.sigma_binding(), sampler=cfg.adaptive.sampler(),
        dt=cfg.simulation.dt, t_end=cfg.collection.t_end, seed=new_seed,
        redraws=cfg.collection.redraws, initial=cfg.initial_state(),
        divergence_bound=cfg.simulation.divergence_bound,
    )
    split_dataset(ds_b, seed=new_seed)
    (Xb, yb), _ = training_pairs(cfg, ds_b)

    out = {"pre": rmse(net.predict(Xa_test), ya_test), "n_new": int(len(yb))}
    frac = cfg.adaptive.memory_fraction
    for use_memory in (True, False):
        buf = MemoryBuffer.from_training(Xa, ya, frac, np.random.default_rng(0),
                                         horizon=cfg.surrogate.horizon)
        buf.new_X, buf.new_y = list(Xb), list(yb)
        refit = copy.deepcopy(net)
        retrain(refit, buf, frac, np.random.default_rng(1), use_memory=use_memory)
        out["with_memory" if use_memory else "without_memory"] = rmse(refit.predict(Xa_test),
                                                                      ya_test)
    return out
