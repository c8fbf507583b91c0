"""Forced Duffing-Van der Pol plant, fixed-step RK4 and the simulation loop.

The plant is

    x'' + delta*x' + eps1*(x**2 * x'' + x * x'**2) + eps2*x**3 = u + P*cos(w*t)

and the state-space form used here is obtained by solving that equation for
x''. The printed first-order form that usually accompanies this model flips
the sign of the damping term and drops the forcing; the second-order equation
above is treated as the ground truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Callable, Iterable, Sequence

from .exceptions import ConfigError, SingularMass

MASS_GUARD = 1e-9
DIVERGENCE_BOUND = 100.0

STATUS_LIVE = "Live"
STATUS_COMPLETED = "Completed"
STATUS_DIVERGED = "Diverged"


@dataclass(frozen=True)
class PlantParams:
    """Physical coefficients. Defaults are the hand-tuned baseline."""

    delta: float = 0.5
    eps1: float = 1.6
    eps2: float = -0.8
    forcing_amp: float = 3.0
    forcing_freq: float = 10.0
    # not part of the plant equation; kept so the "+ x" variant of the
    # published control law can be reproduced
    lin_stiffness: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not math.isfinite(value):
                raise ConfigError(f"plant parameter {f.name} must be finite, got {value!r}")
        if self.forcing_freq < 0:
            raise ConfigError("forcing_freq must be >= 0")


@dataclass(frozen=True)
class PlantState:
    t: float = 0.0
    x: float = 0.0
    v: float = 0.0

    def is_finite(self) -> bool:
        return math.isfinite(self.t) and math.isfinite(self.x) and math.isfinite(self.v)


def effective_mass(x: float, params: PlantParams) -> float:
    m = 1.0 + params.eps1 * x * x
    if not abs(m) > MASS_GUARD:
        raise SingularMass(f"1 + eps1*x^2 = {m!r} at x = {x!r}")
    return m


def plant_forces(t: float, x: float, v: float, params: PlantParams) -> float:
    """Everything on the right-hand side except u, before dividing by the mass."""
    return (
        -params.delta * v
        - params.eps1 * x * v * v
        - params.lin_stiffness * x
        - params.eps2 * x ** 3
        + params.forcing_amp * math.cos(params.forcing_freq * t)
    )


def plant_accel(state: PlantState, params: PlantParams, u: float) -> float:
    m = effective_mass(state.x, params)
    return (plant_forces(state.t, state.x, state.v, params) + u) / m


def _accel(t, x, v, params, u):
    m = effective_mass(x, params)
    return (plant_forces(t, x, v, params) + u) / m


def rk4_step(
    state: PlantState,
    params: PlantParams,
    u_of: Callable[[float, float, float], float],
    dt: float,
) -> PlantState:
    """One classical RK4 step of (x, v); ``u_of`` is evaluated at every stage.

    A non-finite result is returned as is; callers check ``is_finite``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    t, x, v = state.t, state.x, state.v
    h2 = 0.5 * dt

    k1x = v
    k1v = _accel(t, x, v, params, u_of(t, x, v))

    x2, v2 = x + h2 * k1x, v + h2 * k1v
    k2x = v2
    k2v = _accel(t + h2, x2, v2, params, u_of(t + h2, x2, v2))

    x3, v3 = x + h2 * k2x, v + h2 * k2v
    k3x = v3
    k3v = _accel(t + h2, x3, v3, params, u_of(t + h2, x3, v3))

    x4, v4 = x + dt * k3x, v + dt * k3v
    k4x = v4
    k4v = _accel(t + dt, x4, v4, params, u_of(t + dt, x4, v4))

    return PlantState(
        t=t + dt,
        x=x + dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x),
        v=v + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v),
    )


# --------------------------------------------------------------------------
# scripted events

EVENT_ACTIONS = {
    "SetControllerGains": ("gamma1", "gamma2", "k"),
    "SetSigmas": ("s1", "s2"),
    "SetPlantParams": (),
    "ActuatorScale": ("factor",),
    "AdditiveDisturbance": ("amplitude", "freq", "duration"),
    "ImpulseVelocity": ("dv",),
}


@dataclass(frozen=True)
class ScenarioEvent:
    """A perturbation applied once, before the first step starting at or after ``at_time``.

    ``args`` holds the action-specific parameters, e.g. ``{"s1": 100, "s2": 0.6}``
    for ``SetSigmas``. ``SetControllerGains`` accepts any subset of
    gamma1/gamma2/k and ``SetPlantParams`` any subset of the plant fields.
    """

    at_time: float
    action: str
    args: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (math.isfinite(self.at_time) and self.at_time >= 0):
            raise ConfigError(f"event at_time must be finite and >= 0, got {self.at_time!r}")
        if self.action not in EVENT_ACTIONS:
            raise ConfigError(f"unknown event action {self.action!r}")
        allowed = EVENT_ACTIONS[self.action]
        if self.action == "SetPlantParams":
            allowed = tuple(f.name for f in fields(PlantParams))
        unknown = set(self.args) - set(allowed)
        if unknown:
            raise ConfigError(f"{self.action}: unknown argument(s) {sorted(unknown)}")
        partial_ok = self.action in ("SetControllerGains", "SetPlantParams")
        if not partial_ok and set(self.args) != set(allowed):
            raise ConfigError(f"{self.action} requires arguments {list(allowed)}")
        for key, value in self.args.items():
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ConfigError(f"{self.action}.{key} must be a finite number")


def sort_events(events: Iterable[ScenarioEvent]) -> list[ScenarioEvent]:
    # stable: same-time events keep their file order
    return sorted(events, key=lambda ev: ev.at_time)


@dataclass
class _Disturbance:
    amplitude: float
    freq: float
    start: float
    stop: float

    def __call__(self, t):
        if self.start <= t < self.stop:
            return self.amplitude * math.sin(self.freq * (t - self.start))
        return 0.0


# --------------------------------------------------------------------------
# trajectories

TRAJECTORY_COLUMNS = ("t", "x", "v", "u", "qd", "e", "V", "s1", "s2", "status")


@dataclass
class Trajectory:
    t: list = field(default_factory=list)
    x: list = field(default_factory=list)
    v: list = field(default_factory=list)
    u: list = field(default_factory=list)
    qd: list = field(default_factory=list)
    e: list = field(default_factory=list)
    V: list = field(default_factory=list)
    s1: list = field(default_factory=list)
    s2: list = field(default_factory=list)
    row_status: list = field(default_factory=list)
    status: str = STATUS_LIVE
    diverged_at: float | None = None

    def __len__(self):
        return len(self.t)

    def append(self, **row):
        for name in TRAJECTORY_COLUMNS[:-1]:
            getattr(self, name).append(float(row[name]))
        self.row_status.append(row.get("status", STATUS_LIVE))

    def column(self, name):
        if name == "status":
            return self.row_status
        return getattr(self, name)

    def rows(self):
        cols = [self.column(name) for name in TRAJECTORY_COLUMNS]
        return list(zip(*cols))

    @property
    def diverged(self) -> bool:
        return self.status == STATUS_DIVERGED


class Simulation:
    """Stepwise closed-loop run: plant + controller + scripted events.

    ``simulate`` drives this to completion; the adaptive loop drives it one
    step at a time so it can retune the controller between steps.

    Parameters
    ----------
    initial : PlantState
    plant : PlantParams
        True plant. ``SetPlantParams`` events modify this only; the
        controller keeps its own model.
    controller : CLFController
        Any object with ``u(t, x, v)``, ``observe(t, x, v)`` returning
        ``(qd, e, V)`` and ``sigma_values()``; see :mod:`sigmatune.controller`.
    dt : float
    events : sequence of ScenarioEvent
    binding : SigmaBinding, optional
        Resolves ``SetSigmas`` events; default binds to (gamma1, gamma2).
    zero_order_hold : bool
        Hold u at its step-start value for the whole RK4 step instead of
        re-evaluating it at each stage.
    """

    def __init__(
        self,
        initial: PlantState,
        plant: PlantParams,
        controller,
        dt: float = 1e-3,
        events: Sequence[ScenarioEvent] = (),
        binding=None,
        divergence_bound: float = DIVERGENCE_BOUND,
        zero_order_hold: bool = False,
    ):
        if not dt > 0:
            raise ValueError("dt must be positive")
        from .sigmas import SigmaBinding

        self.state = initial
        self.plant = plant
        self.controller = controller
        self.dt = dt
        self.binding = binding if binding is not None else SigmaBinding()
        self.divergence_bound = divergence_bound
        self.zero_order_hold = zero_order_hold
        self._pending = sort_events(events)
        self._actuator_scale = 1.0
        self._disturbances: list[_Disturbance] = []
        self.fired: list[ScenarioEvent] = []
        self.trajectory = Trajectory()
        self.steps = 0

    @property
    def done(self):
        return self.trajectory.status != STATUS_LIVE

    def sigma_values(self):
        return self.binding.read(gains=self.controller.gains, plant=self.plant,
                                 model=self.controller.model)

    def apply_sigmas(self, s1, s2):
        from .sigmas import SigmaPair, apply_sigmas

        gains, plant, model = apply_sigmas(
            SigmaPair(s1, s2), self.binding,
            gains=self.controller.gains, plant=self.plant, model=self.controller.model,
        )
        self.controller.gains = gains
        self.controller.model = model
        self.plant = plant

    def _fire(self, ev: ScenarioEvent):
        a = ev.args
        if ev.action == "SetControllerGains":
            self.controller.gains = replace(self.controller.gains, **a)
        elif ev.action == "SetSigmas":
            self.apply_sigmas(a["s1"], a["s2"])
        elif ev.action == "SetPlantParams":
            self.plant = replace(self.plant, **a)
        elif ev.action == "ActuatorScale":
            self._actuator_scale *= a["factor"]
        elif ev.action == "AdditiveDisturbance":
            start = self.state.t
            self._disturbances.append(
                _Disturbance(a["amplitude"], a["freq"], start, start + a["duration"])
            )
        elif ev.action == "ImpulseVelocity":
            self.state = replace(self.state, v=self.state.v + a["dv"])
        self.fired.append(ev)

    def fire_due_events(self):
        # snap to grid: an event fires before the first step whose start
        # time reaches at_time (half-step slack absorbs accumulated rounding)
        slack = 0.5 * self.dt
        while self._pending and self._pending[0].at_time <= self.state.t + slack:
            self._fire(self._pending.pop(0))

    def applied_u(self, t, x, v):
        u = self._actuator_scale * self.controller.u(t, x, v)
        for dist in self._disturbances:
            u += dist(t)
        return u

    def _out_of_bounds(self, state):
        return not state.is_finite() or abs(state.x) > self.divergence_bound

    def step(self):
        """Advance one control period and record the pre-step sample."""
        if self.done:
            return self.trajectory.status
        self.fire_due_events()
        st = self.state
        u0 = self.applied_u(st.t, st.x, st.v)
        qd, e, V = self.controller.observe(st.t, st.x, st.v)
        s1, s2 = self.sigma_values()
        self.trajectory.append(t=st.t, x=st.x, v=st.v, u=u0, qd=qd, e=e, V=V, s1=s1, s2=s2)

        if self.zero_order_hold:
            u_of = lambda t, x, v: u0  # noqa: E731
        else:
            u_of = self.applied_u
        try:
            new = rk4_step(st, self.plant, u_of, self.dt)
        except (SingularMass, OverflowError):
            new = PlantState(st.t + self.dt, math.nan, math.nan)
        except ZeroDivisionError:
            new = PlantState(st.t + self.dt, math.nan, math.nan)
        self.steps += 1
        self.state = new

        if self._out_of_bounds(new):
            traj = self.trajectory
            traj.status = STATUS_DIVERGED
            traj.diverged_at = new.t
            if new.is_finite():
                try:
                    qd, e, V = self.controller.observe(new.t, new.x, new.v)
                except (ArithmeticError, ValueError):
                    qd, e, V = math.nan, math.nan, math.nan
                if all(math.isfinite(val) for val in (qd, e, V)):
                    traj.append(t=new.t, x=new.x, v=new.v, u=u0, qd=qd, e=e, V=V,
                                s1=s1, s2=s2, status=STATUS_DIVERGED)
                    return traj.status
            traj.row_status[-1] = STATUS_DIVERGED
        return self.trajectory.status

    def finish(self):
        if self.trajectory.status == STATUS_LIVE:
            self.trajectory.status = STATUS_COMPLETED
            if self.trajectory.row_status:
                self.trajectory.row_status[-1] = STATUS_COMPLETED
        return self.trajectory


def n_steps(t0: float, t_end: float, dt: float) -> int:
    if not t_end > t0:
        raise ValueError("t_end must be greater than the initial time")
    # tolerate representation error in (t_end - t0) / dt
    return max(1, int(math.floor((t_end - t0) / dt + 1e-9)))


def simulate(
    initial: PlantState,
    params: PlantParams,
    controller,
    dt: float = 1e-3,
    t_end: float = 2.5,
    events: Sequence[ScenarioEvent] = (),
    binding=None,
    divergence_bound: float = DIVERGENCE_BOUND,
    zero_order_hold: bool = False,
) -> Trajectory:
    """Run the closed loop from ``initial.t`` to ``t_end`` on a fixed grid.

    Records one sample per step (the state at the start of the step together
    with the control applied over it). Stops early with status ``Diverged``
    once |x| exceeds ``divergence_bound`` or the state stops being finite.
    The controller object is mutated by gain events; pass a copy if it is
    reused.
    """
    sim = Simulation(initial, params, controller, dt=dt, events=events, binding=binding,
                     divergence_bound=divergence_bound, zero_order_hold=zero_order_hold)
    for _ in range(n_steps(initial.t, t_end, dt)):
        if sim.step() == STATUS_DIVERGED:
            break
    return sim.finish()
