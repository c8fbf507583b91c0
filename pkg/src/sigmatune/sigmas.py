"""The two tunable parameters ("sigmas") and what they are bound to.

A binding target is one of

* a controller gain: ``gamma1``, ``gamma2``, ``k``
* a true-plant coefficient: ``delta``, ``eps1``, ``eps2``, ``forcing_amp``,
  ``forcing_freq``, ``lin_stiffness``
* a coefficient of the controller's plant model, prefixed ``model.``
  (e.g. ``model.eps1``); the true plant is left alone.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .controller import ControllerParams
from .dynamics import PlantParams
from .exceptions import ConfigError, UnknownTarget

GAIN_TARGETS = tuple(f.name for f in fields(ControllerParams))
PLANT_TARGETS = tuple(f.name for f in fields(PlantParams))
MODEL_TARGETS = tuple("model." + name for name in PLANT_TARGETS)
ALL_TARGETS = GAIN_TARGETS + PLANT_TARGETS + MODEL_TARGETS


@dataclass(frozen=True)
class SigmaPair:
    s1: float
    s2: float


@dataclass(frozen=True)
class SigmaBinding:
    target1: str = "gamma1"
    target2: str = "gamma2"

    def __post_init__(self):
        for target in (self.target1, self.target2):
            if target not in ALL_TARGETS:
                raise UnknownTarget(target)
        if self.target1 == self.target2:
            raise ConfigError("sigma binding targets must be distinct")

    @classmethod
    def parse(cls, text: str) -> "SigmaBinding":
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 2:
            raise ConfigError(f"binding must be 't1,t2', got {text!r}")
        return cls(*parts)

    def read(self, gains, plant, model=None):
        return tuple(_get(t, gains, plant, model) for t in (self.target1, self.target2))


def _get(target, gains, plant, model):
    if target in GAIN_TARGETS:
        return getattr(gains, target)
    if target in PLANT_TARGETS:
        return getattr(plant, target)
    if target in MODEL_TARGETS:
        return getattr(model if model is not None else plant, target[len("model."):])
    raise UnknownTarget(target)


def apply_sigmas(pair: SigmaPair, binding: SigmaBinding, *, gains: ControllerParams,
                 plant: PlantParams, model: PlantParams | None = None):
    """Overwrite the two bound parameters; returns ``(gains, plant, model)``."""
    for target, value in ((binding.target1, pair.s1), (binding.target2, pair.s2)):
        if target in GAIN_TARGETS:
            gains = replace(gains, **{target: float(value)})
        elif target in PLANT_TARGETS:
            plant = replace(plant, **{target: float(value)})
        elif target in MODEL_TARGETS:
            if model is None:
                raise UnknownTarget(f"{target}: controller has no plant model")
            model = replace(model, **{target[len("model."):]: float(value)})
        else:
            raise UnknownTarget(target)
    return gains, plant, model


@dataclass(frozen=True)
class SigmaSampler:
    """Draws candidate pairs: s1 ~ U[low, high], s2 = coupling * s1.

    ``coupling=None`` samples s2 independently from the same interval.
    """

    low: float = -50.0
    high: float = 50.0
    coupling: float | None = -1.0 / 8.0

    def __post_init__(self):
        if not self.low < self.high:
            raise ConfigError("sigma range must satisfy low < high")

    def draw(self, rng) -> SigmaPair:
        s1 = rng.uniform(self.low, self.high)
        if self.coupling is None:
            return SigmaPair(float(s1), float(rng.uniform(self.low, self.high)))
        return SigmaPair(float(s1), float(self.coupling * s1))

    def draw_many(self, rng, n):
        """Same stream as ``n`` successive ``draw`` calls."""
        if self.coupling is None:
            both = rng.uniform(self.low, self.high, size=(n, 2))
            return both[:, 0].copy(), both[:, 1].copy()
        s1 = rng.uniform(self.low, self.high, size=n)
        return s1, self.coupling * s1


def parse_coupling(value):
    if value is None or value == "uncoupled":
        return None
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"coupling must be a number or 'uncoupled', got {value!r}") from None
    if out != out or out in (float("inf"), float("-inf")):
        raise ConfigError("coupling must be finite")
    return out
