"""Harmonic reference and the control-Lyapunov-function tracking law.

With tracking error e = qd - x and the sliding variable s = gamma1*e' + gamma2*e,
the Lyapunov candidate is V = s**2 / 2. Asking for V' = -k*V means
s' = -(k/2)*s, i.e.

    gamma1*e'' + gamma2*e' = -(k/2) * (gamma1*e' + gamma2*e)

so the commanded acceleration is

    x''_cmd = qd'' + (gamma2/gamma1)*e' + k/(2*gamma1) * s

and u is the inverse dynamics of the plant evaluated at x''_cmd. The
commonly printed form of this law divides by gamma2 and carries a bare
"+ x" and an "eps1*x'*x**2" term; those are inconsistent with the plant
equation and are not used here (``PlantParams.lin_stiffness`` covers the
"+ x" variant on the plant side).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .dynamics import PlantParams, PlantState, effective_mass, plant_forces
from .exceptions import ConfigError, GainDegenerate


@dataclass(frozen=True)
class ControllerParams:
    gamma1: float = 12.0
    gamma2: float = 4.0
    k: float = 115.0

    def __post_init__(self):
        for name in ("gamma1", "gamma2", "k"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")
        if self.k < 0:
            raise ConfigError("k must be >= 0")


@dataclass(frozen=True)
class ReferenceSignal:
    """qd(t) = sum(a_i * sin(i * base_freq * t)) over (index, amplitude) pairs."""

    harmonics: tuple = ((1, 0.1), (3, 0.5), (5, 1.0))
    base_freq: float = 1.0

    def __post_init__(self):
        pairs = tuple((int(i), float(a)) for i, a in self.harmonics)
        object.__setattr__(self, "harmonics", pairs)
        prev = 0
        for idx, amp in pairs:
            if idx <= prev:
                raise ConfigError("harmonic indices must be positive and strictly increasing")
            if not math.isfinite(amp):
                raise ConfigError("harmonic amplitudes must be finite")
            prev = idx
        if not math.isfinite(self.base_freq):
            raise ConfigError("base_freq must be finite")


@dataclass(frozen=True)
class RefEval:
    qd: float
    qd_dot: float
    qd_ddot: float


def reference_eval(ref: ReferenceSignal, t: float) -> RefEval:
    qd = qd_dot = qd_ddot = 0.0
    for idx, amp in ref.harmonics:
        w = idx * ref.base_freq
        s, c = math.sin(w * t), math.cos(w * t)
        qd += amp * s
        qd_dot += amp * w * c
        qd_ddot -= amp * w * w * s
    return RefEval(qd, qd_dot, qd_ddot)


def tracking_error(state: PlantState, ref: RefEval) -> tuple[float, float]:
    return ref.qd - state.x, ref.qd_dot - state.v


def clf_value(e: float, e_dot: float, cp: ControllerParams) -> float:
    s = cp.gamma1 * e_dot + cp.gamma2 * e
    return 0.5 * s * s


def commanded_accel(ref: RefEval, e: float, e_dot: float, cp: ControllerParams) -> float:
    if cp.gamma1 == 0:
        raise GainDegenerate("gamma1 must be non-zero")
    s = cp.gamma1 * e_dot + cp.gamma2 * e
    return ref.qd_ddot + (cp.gamma2 / cp.gamma1) * e_dot + cp.k / (2.0 * cp.gamma1) * s


def control_law(state: PlantState, ref: RefEval, cp: ControllerParams, pp: PlantParams) -> float:
    e, e_dot = tracking_error(state, ref)
    acc = commanded_accel(ref, e, e_dot, cp)
    m = effective_mass(state.x, pp)
    return m * acc - plant_forces(state.t, state.x, state.v, pp)


@dataclass
class CLFController:
    """Stateful policy wrapper used by :class:`~sigmatune.dynamics.Simulation`.

    ``model`` is the controller's own copy of the plant coefficients; it
    defaults to the baseline plant and is deliberately not updated when the
    true plant is perturbed.
    """

    gains: ControllerParams = field(default_factory=ControllerParams)
    reference: ReferenceSignal = field(default_factory=ReferenceSignal)
    model: PlantParams = field(default_factory=PlantParams)

    def u(self, t, x, v):
        return control_law(PlantState(t, x, v), reference_eval(self.reference, t),
                           self.gains, self.model)

    def observe(self, t, x, v):
        ref = reference_eval(self.reference, t)
        e, e_dot = ref.qd - x, ref.qd_dot - v
        return ref.qd, e, clf_value(e, e_dot, self.gains)

    def copy(self):
        return CLFController(self.gains, self.reference, self.model)
