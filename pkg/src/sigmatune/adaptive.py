"""Online sigma retuning driven by the error surrogate.

Per control step: if the tracking error is above the threshold, sample
candidate sigma pairs until the surrogate predicts an error below the
measured one, and apply that pair. Every ``window`` steps compare the
window's mean error with the previous reference mean; if it got worse,
retrain the surrogate on the rehearsal memory plus the data gathered since
the last retrain, then move a share of that new data into the memory.
"""

from __future__ import annotations

import copy
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .config import AdaptiveConfig
from .dynamics import DIVERGENCE_BOUND, STATUS_DIVERGED, Simulation, n_steps
from .exceptions import EmptyDataset, Untrained
from .harness import rmse, write_csv
from .sigmas import SigmaBinding, SigmaPair, SigmaSampler, apply_sigmas  # noqa: F401
from .surrogate import ErrorSurrogate

EVENTLOG_COLUMNS = (
    "t", "kind", "s1", "s2", "predicted_err", "measured_err", "attempts",
    "memo_size", "new_data_size", "post_rmse",
)
SIGMA_UPDATE = "SigmaUpdate"
NO_IMPROVEMENT = "NoImprovement"
RETRAIN = "Retrain"


@dataclass
class Proposal:
    pair: SigmaPair
    predicted_err: float
    attempts: int
    improved: bool


def propose_sigmas(net, t, x, v, current_err, sampler: SigmaSampler, max_attempts, rng, u=None):
    """Screen up to ``max_attempts`` sampled pairs with the surrogate.

    Returns the first pair predicted strictly below ``current_err``; if none
    qualifies the result has ``improved=False`` and carries the pair with the
    lowest prediction. Candidates are scored in one batch, which is
    equivalent to the sequential loop because ``rng`` is used for nothing else.
    """
    if isinstance(net, ErrorSurrogate) and not hasattr(net, "net_"):
        raise Untrained("surrogate has not been trained")
    s1, s2 = sampler.draw_many(rng, max_attempts)
    cols = [np.full(max_attempts, t), np.full(max_attempts, x), np.full(max_attempts, v), s1, s2]
    if getattr(net, "include_u", False):
        cols.append(np.full(max_attempts, u))
    pred = np.asarray(net.predict_fast(np.column_stack(cols)), dtype=float)
    ok = np.flatnonzero(pred < current_err)
    if ok.size:
        i = int(ok[0])
        return Proposal(SigmaPair(float(s1[i]), float(s2[i])), float(pred[i]), i + 1, True)
    i = int(np.nanargmin(pred)) if np.isfinite(pred).any() else 0
    return Proposal(SigmaPair(float(s1[i]), float(s2[i])), float(pred[i]), max_attempts, False)


@dataclass
class MemoryBuffer:
    """Rehearsal memory plus the (features, target) pairs gathered since the last retrain.

    Features are logged every step; a row becomes a training pair once the
    error ``horizon`` steps later is known, and only if the sigmas did not
    change in between.
    """

    memo_X: np.ndarray
    memo_y: np.ndarray
    prev_sys_avg: float
    horizon: int = 0
    new_X: list = field(default_factory=list)
    new_y: list = field(default_factory=list)
    avg_sys_err: float = 0.0
    window_count: int = 0
    _pending: deque = field(default_factory=deque)
    _epoch: int = 0
    _last_sigma: tuple | None = None

    @classmethod
    def from_training(cls, X, y, fraction, rng, prev_sys_avg=None, horizon=0):
        """Memory seeded with ``ceil(fraction * n)`` uniformly chosen training pairs."""
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        k = min(len(y), math.ceil(fraction * len(y)))
        idx = np.sort(rng.choice(len(y), size=k, replace=False)) if k else np.array([], dtype=int)
        if prev_sys_avg is None:
            prev_sys_avg = float(np.mean(np.abs(y))) if len(y) else 0.0
        return cls(memo_X=X[idx].copy(), memo_y=y[idx].copy(), prev_sys_avg=prev_sys_avg,
                   horizon=horizon)

    @property
    def n_features(self):
        return self.memo_X.shape[1]

    def observe(self, features, err, sigma):
        """Log one step's features and measured error."""
        if sigma != self._last_sigma:
            self._epoch += 1
            self._last_sigma = sigma
        self.avg_sys_err += err
        self.window_count += 1
        self._pending.append((np.asarray(features, dtype=float), self._epoch))
        if len(self._pending) > self.horizon:
            row, epoch = self._pending.popleft()
            if epoch == self._epoch:
                self.new_X.append(row)
                self.new_y.append(float(err))

    def close_diverged(self, bound=DIVERGENCE_BOUND):
        """Run ended in divergence: every pending row's future error is the bound."""
        while self._pending:
            row, epoch = self._pending.popleft()
            if epoch == self._epoch:
                self.new_X.append(row)
                self.new_y.append(float(bound))

    def window_average(self):
        return self.avg_sys_err / self.window_count if self.window_count else 0.0

    def reset_window(self):
        self.avg_sys_err = 0.0
        self.window_count = 0

    def new_arrays(self):
        if not self.new_X:
            return np.empty((0, self.n_features)), np.empty(0)
        return np.vstack(self.new_X), np.asarray(self.new_y)


def window_probe(buf: MemoryBuffer) -> bool:
    """True (retrain) iff the window mean error strictly exceeds the reference mean."""
    return buf.window_average() > buf.prev_sys_avg


def retrain(net, buf: MemoryBuffer, fraction, rng, use_memory=True):
    """Refit ``net`` in place on memory + new data; returns the post-retrain RMSE on that set.

    Afterwards ``ceil(fraction * |new|)`` new pairs join the memory and the
    new data is cleared.
    """
    new_X, new_y = buf.new_arrays()
    if use_memory:
        X = np.vstack([buf.memo_X, new_X])
        y = np.concatenate([buf.memo_y, new_y])
    else:
        X, y = new_X, new_y
    if len(y) < 2:
        raise EmptyDataset("nothing to retrain on")
    net.set_params(warm_start=True)
    net.fit(X, y)
    post = rmse(net.predict(X), y)

    k = min(len(new_y), math.ceil(fraction * len(new_y)))
    if k:
        pick = np.sort(rng.choice(len(new_y), size=k, replace=False))
        buf.memo_X = np.vstack([buf.memo_X, new_X[pick]])
        buf.memo_y = np.concatenate([buf.memo_y, new_y[pick]])
    buf.new_X, buf.new_y = [], []
    return post


@dataclass
class EventLog:
    rows: list = field(default_factory=list)

    def add(self, t, kind, **kw):
        row = {c: None for c in EVENTLOG_COLUMNS}
        row.update(t=t, kind=kind, **kw)
        self.rows.append(row)

    def of_kind(self, kind):
        return [r for r in self.rows if r["kind"] == kind]

    def export(self, path):
        write_csv(path, EVENTLOG_COLUMNS, [[r[c] for c in EVENTLOG_COLUMNS] for r in self.rows])


def read_event_log(path) -> EventLog:
    from .harness import read_csv

    log = EventLog()
    for row in read_csv(path, EVENTLOG_COLUMNS, text_columns=("kind",)):
        if row["attempts"] is not None:
            row["attempts"] = int(row["attempts"])
        for key in ("memo_size", "new_data_size"):
            if row[key] is not None:
                row[key] = int(row[key])
        log.rows.append(row)
    return log


@dataclass
class AdaptiveResult:
    trajectory: object
    events: EventLog
    buffer: MemoryBuffer
    net: object


def run_adaptive(initial, plant, controller, net, cfg: AdaptiveConfig, buffer: MemoryBuffer, *,
                 events=(), dt=1e-3, t_end=2.5, binding=None,
                 divergence_bound=DIVERGENCE_BOUND, zero_order_hold=False, seed=0):
    """Closed-loop run with the monitor, the sigma proposer and windowed retraining.

    ``net``, ``controller`` and ``buffer`` are copied; the returned result
    holds the evolved versions.
    """
    net = copy.deepcopy(net)
    buf = copy.deepcopy(buffer)
    binding = binding if binding is not None else cfg.sigma_binding()
    sampler = cfg.sampler()
    include_u = getattr(net, "include_u", False)
    sim = Simulation(initial, plant, controller.copy(), dt=dt, events=events, binding=binding,
                     divergence_bound=divergence_bound, zero_order_hold=zero_order_hold)
    log = EventLog()
    retrain_rng = np.random.default_rng([seed, 1])
    n_triggers = 0
    prev_err = math.inf
    traj = sim.trajectory

    for step in range(n_steps(initial.t, t_end, dt)):
        sim.fire_due_events()
        st = sim.state
        _, e, _ = sim.controller.observe(st.t, st.x, st.v)
        err = abs(e)
        fire = err > cfg.err_threshold
        if cfg.trigger == "slope":
            fire = fire and err > prev_err
        prev_err = err
        if fire:
            u = sim.applied_u(st.t, st.x, st.v) if include_u else None
            rng = np.random.default_rng([seed, 0, n_triggers])
            n_triggers += 1
            prop = propose_sigmas(net, st.t, st.x, st.v, err, sampler, cfg.max_attempts, rng, u=u)
            kind = SIGMA_UPDATE if prop.improved else NO_IMPROVEMENT
            if prop.improved:
                sim.apply_sigmas(prop.pair.s1, prop.pair.s2)
            log.add(st.t, kind, s1=prop.pair.s1, s2=prop.pair.s2,
                    predicted_err=prop.predicted_err, measured_err=err, attempts=prop.attempts)

        status = sim.step()
        i = len(traj) - 1
        if traj.t[i] > st.t:
            # the appended offending sample is not a live observation
            i -= 1
        feats = [traj.t[i], traj.x[i], traj.v[i], traj.s1[i], traj.s2[i]]
        if include_u:
            feats.append(traj.u[i])
        buf.observe(feats, abs(traj.e[i]), (traj.s1[i], traj.s2[i]))
        if status == STATUS_DIVERGED:
            buf.close_diverged(divergence_bound)
            break

        if (step + 1) % cfg.window == 0:
            avg = buf.window_average()
            if window_probe(buf) and cfg.retrain and len(buf.new_y) + (
                    len(buf.memo_y) if cfg.use_memory else 0) >= 2:
                memo_before, new_before = len(buf.memo_y), len(buf.new_y)
                post = retrain(net, buf, cfg.memory_fraction, retrain_rng, cfg.use_memory)
                buf.prev_sys_avg = avg
                log.add(sim.state.t, RETRAIN, measured_err=avg, memo_size=memo_before,
                        new_data_size=new_before, post_rmse=post)
            buf.reset_window()

    return AdaptiveResult(sim.finish(), log, buf, net)
