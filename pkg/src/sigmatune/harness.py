"""Dataset collection, splitting, metrics and CSV interchange."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .controller import CLFController
from .dynamics import (
    DIVERGENCE_BOUND,
    STATUS_DIVERGED,
    TRAJECTORY_COLUMNS,
    PlantState,
    ScenarioEvent,
    Simulation,
    Trajectory,
    n_steps,
)
from .exceptions import EmptyInput, ParseFailure, TooSmall

DATASET_COLUMNS = ("t", "x", "v", "u", "s1", "s2", "err")
TRAINLOG_COLUMNS = ("epoch", "lr", "train_rmse", "test_rmse")


@dataclass(frozen=True)
class SampleRecord:
    t: float
    x: float
    v: float
    u: float
    s1: float
    s2: float
    err: float


@dataclass
class Dataset:
    """Logged samples, one row per control step, grouped into episodes.

    ``data`` has columns ``DATASET_COLUMNS``. ``episodes`` lists
    ``(start, stop, diverged)`` row ranges.
    """

    data: np.ndarray = field(default_factory=lambda: np.empty((0, len(DATASET_COLUMNS))))
    episodes: list = field(default_factory=list)
    train_idx: np.ndarray | None = None
    test_idx: np.ndarray | None = None

    def __len__(self):
        return self.data.shape[0]

    def col(self, name):
        return self.data[:, DATASET_COLUMNS.index(name)]

    @property
    def records(self):
        return [SampleRecord(*map(float, row)) for row in self.data]

    @classmethod
    def from_trajectories(cls, trajectories, divergence_bound=DIVERGENCE_BOUND):
        blocks, episodes, start = [], [], 0
        for traj in trajectories:
            block = trajectory_records(traj, divergence_bound)
            if len(block) == 0:
                continue
            blocks.append(block)
            episodes.append((start, start + len(block), traj.diverged))
            start += len(block)
        data = np.vstack(blocks) if blocks else np.empty((0, len(DATASET_COLUMNS)))
        return cls(data=data, episodes=episodes)


def trajectory_records(traj: Trajectory, divergence_bound=DIVERGENCE_BOUND) -> np.ndarray:
    """Dataset rows for one trajectory; err is |e| capped at the divergence bound."""
    n = len(traj)
    out = np.empty((n, len(DATASET_COLUMNS)))
    for j, name in enumerate(("t", "x", "v", "u", "s1", "s2")):
        out[:, j] = traj.column(name)
    err = np.abs(np.asarray(traj.e, dtype=float))
    err = np.where(np.isfinite(err), np.minimum(err, divergence_bound), divergence_bound)
    if traj.diverged and n:
        err[-1] = divergence_bound
    out[:, -1] = err
    return out


def collect_dataset(
    n_episodes,
    *,
    plant,
    controller: CLFController,
    binding,
    sampler,
    dt=1e-3,
    t_end=2.5,
    seed=0,
    redraws=0,
    initial=PlantState(),
    divergence_bound=DIVERGENCE_BOUND,
) -> Dataset:
    """Run seeded episodes, each with freshly drawn sigmas applied at t = initial.t.

    With ``redraws > 0`` each episode also switches to new draws at that many
    uniformly random times.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    children = np.random.SeedSequence(seed).spawn(n_episodes)
    trajs = []
    for child in children:
        rng = np.random.default_rng(child)
        pair = sampler.draw(rng)
        events = [ScenarioEvent(initial.t, "SetSigmas", {"s1": pair.s1, "s2": pair.s2})]
        if redraws:
            times = np.sort(rng.uniform(initial.t, t_end, size=redraws))
            for at in times:
                p = sampler.draw(rng)
                events.append(ScenarioEvent(float(at), "SetSigmas", {"s1": p.s1, "s2": p.s2}))
        sim = Simulation(initial, plant, controller.copy(), dt=dt, events=events,
                         binding=binding, divergence_bound=divergence_bound)
        for _ in range(n_steps(initial.t, t_end, dt)):
            if sim.step() == STATUS_DIVERGED:
                break
        trajs.append(sim.finish())
    return Dataset.from_trajectories(trajs, divergence_bound)


def split_count(n, ratio=0.6):
    return int(math.floor(ratio * n + 0.5))


def split_dataset(ds: Dataset, ratio=0.6, seed=0) -> Dataset:
    n = len(ds)
    if n < 2:
        raise TooSmall(f"need at least 2 records to split, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    k = split_count(n, ratio)
    ds.train_idx = np.sort(order[:k])
    ds.test_idx = np.sort(order[k:])
    return ds


def _segments(ds: Dataset):
    """Segment id per row: a new segment starts at each episode and each sigma change."""
    n = len(ds)
    change = np.zeros(n, dtype=bool)
    if n:
        s1, s2 = ds.col("s1"), ds.col("s2")
        change[1:] = (s1[1:] != s1[:-1]) | (s2[1:] != s2[:-1])
        for start, _, _ in ds.episodes:
            change[start] = True
    return np.cumsum(change)


def make_xy(ds: Dataset, rows=None, horizon=0, include_u=False,
            divergence_bound=DIVERGENCE_BOUND):
    """Feature rows (t, x, v, s1, s2[, u]) paired with the error ``horizon`` steps later.

    A pair is kept only if the sigmas stay the same over the horizon. If an
    episode diverged before the horizon is reached the target is the
    divergence bound; pairs that run past the end of a completed episode are
    dropped.
    """
    n = len(ds)
    if rows is None:
        rows = np.arange(n)
    rows = np.asarray(rows, dtype=int)
    seg = _segments(ds)
    err = ds.col("err")
    ep_stop = np.empty(n, dtype=int)
    ep_div = np.zeros(n, dtype=bool)
    for start, stop, diverged in ds.episodes:
        ep_stop[start:stop] = stop
        ep_div[start:stop] = diverged

    j = rows + horizon
    inside = j < ep_stop[rows]
    j_safe = np.where(inside, j, ep_stop[rows] - 1)
    same = seg[j_safe] == seg[rows]
    keep = same & (inside | ep_div[rows])
    rows, j, inside = rows[keep], j[keep], inside[keep]
    y = np.where(inside, err[np.minimum(j, n - 1)], divergence_bound)
    cols = ["t", "x", "v", "s1", "s2"] + (["u"] if include_u else [])
    X = np.column_stack([ds.col(c)[rows] for c in cols]) if len(rows) else np.empty((0, len(cols)))
    return X, y


@dataclass
class RunMetrics:
    rmse: float
    n: int
    max_err_after: float | None = None
    transient: float | None = None
    window_means: list = field(default_factory=list)
    diverged: bool = False
    diverged_at: float | None = None

    def to_dict(self):
        return {
            "rmse": self.rmse,
            "n": self.n,
            "max_err_after": self.max_err_after,
            "transient": self.transient,
            "window_means": self.window_means,
            "diverged": self.diverged,
            "diverged_at": self.diverged_at,
        }


def rmse(pred, target) -> float:
    pred = np.asarray(pred, dtype=float).ravel()
    target = np.asarray(target, dtype=float).ravel()
    if pred.size == 0:
        raise EmptyInput("rmse of an empty set")
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    r = pred - target
    return float(np.sqrt(np.mean(r * r)))


def compute_metrics(residuals=None, *, predictions=None, targets=None, t=None,
                    transient=None, window=None, diverged_at=None) -> RunMetrics:
    """RMSE plus optional post-transient max and per-window means.

    Pass either ``residuals`` (e.g. a tracking-error trace) or
    ``predictions`` and ``targets``.
    """
    if residuals is None:
        if predictions is None or targets is None:
            raise EmptyInput("need residuals or predictions + targets")
        residuals = np.asarray(predictions, dtype=float) - np.asarray(targets, dtype=float)
    r = np.asarray(residuals, dtype=float).ravel()
    if r.size == 0:
        raise EmptyInput("no samples")
    out = RunMetrics(rmse=rmse(r, np.zeros_like(r)), n=int(r.size))
    a = np.abs(r)
    if transient is not None and t is not None:
        mask = np.asarray(t, dtype=float) > transient
        out.transient = transient
        out.max_err_after = float(a[mask].max()) if mask.any() else None
    if window:
        out.window_means = [float(a[i:i + window].mean()) for i in range(0, r.size, window)]
    if diverged_at is not None:
        out.diverged = True
        out.diverged_at = float(diverged_at)
    return out


def trajectory_metrics(traj: Trajectory, transient=0.5, window=100) -> RunMetrics:
    return compute_metrics(traj.e, t=traj.t, transient=transient, window=window,
                           diverged_at=traj.diverged_at if traj.diverged else None)


# -- CSV ---------------------------------------------------------------------

def _fmt(value):
    if isinstance(value, str):
        return value
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    # repr gives the shortest string that round-trips
    return repr(float(value))


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_csv(path, header, text_columns=()):
    """Parse a CSV written by ``write_csv``; returns a list of row dicts.

    Numeric columns become floats (empty cells become None).
    """
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise ParseFailure(f"cannot open: {exc.strerror}", path) from None
    with fh:
        reader = csv.reader(fh)
        try:
            got = next(reader)
        except StopIteration:
            raise ParseFailure("empty file, expected a header row", path, 1) from None
        if tuple(got) != tuple(header):
            raise ParseFailure(f"expected header {','.join(header)}, got {','.join(got)}", path, 1)
        rows = []
        for lineno, raw in enumerate(reader, start=2):
            if len(raw) != len(header):
                raise ParseFailure(f"expected {len(header)} fields, got {len(raw)}", path, lineno)
            row = {}
            for name, cell in zip(header, raw):
                if name in text_columns:
                    row[name] = cell
                elif cell == "":
                    row[name] = None
                else:
                    try:
                        row[name] = float(cell)
                    except ValueError:
                        raise ParseFailure(f"column {name}: not a number: {cell!r}",
                                           path, lineno) from None
            rows.append(row)
    return rows


def export_trajectory(traj: Trajectory, path):
    write_csv(path, TRAJECTORY_COLUMNS, traj.rows())


def import_trajectory(path) -> Trajectory:
    rows = read_csv(path, TRAJECTORY_COLUMNS, text_columns=("status",))
    traj = Trajectory()
    for row in rows:
        traj.append(**row)
    if rows:
        traj.status = rows[-1]["status"]
        if traj.status == STATUS_DIVERGED:
            traj.diverged_at = rows[-1]["t"]
    return traj


def export_dataset(ds: Dataset, path):
    write_csv(path, DATASET_COLUMNS, ds.data.tolist())


def import_dataset(path, divergence_bound=DIVERGENCE_BOUND) -> Dataset:
    rows = read_csv(path, DATASET_COLUMNS)
    if not rows:
        return Dataset()
    data = np.array([[row[c] for c in DATASET_COLUMNS] for row in rows], dtype=float)
    # episodes restart the clock
    t = data[:, 0]
    starts = [0] + [i for i in range(1, len(t)) if t[i] <= t[i - 1]]
    stops = starts[1:] + [len(t)]
    episodes = []
    for a, b in zip(starts, stops):
        last = data[b - 1]
        diverged = bool(abs(last[1]) > divergence_bound or last[-1] >= divergence_bound)
        episodes.append((a, b, diverged))
    return Dataset(data=data, episodes=episodes)


def export_train_log(log, path):
    write_csv(path, TRAINLOG_COLUMNS, log.rows())
