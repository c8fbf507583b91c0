"""Run configuration and scenario files (JSON).

Every section is optional and defaults to the hand-tuned baseline. Unknown
keys raise :class:`ConfigError` so typos do not silently fall back to
defaults.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .controller import CLFController, ControllerParams, ReferenceSignal
from .dynamics import DIVERGENCE_BOUND, PlantParams, PlantState, ScenarioEvent
from .exceptions import ConfigError
from .sigmas import SigmaBinding, SigmaSampler, parse_coupling


@dataclass
class SimulationConfig:
    dt: float = 1e-3
    t_end: float = 2.5
    x0: float = 0.0
    v0: float = 0.0
    divergence_bound: float = DIVERGENCE_BOUND
    zero_order_hold: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("simulation.dt must be > 0")
        if not self.t_end > 0:
            raise ConfigError("simulation.t_end must be > 0")
        if not self.divergence_bound > 0:
            raise ConfigError("simulation.divergence_bound must be > 0")


@dataclass
class AdaptiveConfig:
    err_threshold: float = 0.8
    window: int = 100
    max_attempts: int = 200
    memory_fraction: float = 0.10
    binding: str = "gamma1,gamma2"
    coupling: float | str | None = -0.125
    sigma_low: float = -50.0
    sigma_high: float = 50.0
    # "error": |e| > threshold; "slope": additionally require |e| to be growing
    trigger: str = "error"
    retrain: bool = True
    use_memory: bool = True
    seed: int | None = None

    def __post_init__(self):
        if not self.err_threshold > 0:
            raise ConfigError("adaptive.err_threshold must be > 0")
        if int(self.window) != self.window or self.window < 1:
            raise ConfigError("adaptive.window must be an integer >= 1")
        if int(self.max_attempts) != self.max_attempts or self.max_attempts < 1:
            raise ConfigError("adaptive.max_attempts must be an integer >= 1")
        if not 0 < self.memory_fraction < 1:
            raise ConfigError("adaptive.memory_fraction must be in (0, 1)")
        if self.trigger not in ("error", "slope"):
            raise ConfigError("adaptive.trigger must be 'error' or 'slope'")
        if isinstance(self.binding, (list, tuple)):
            self.binding = ",".join(self.binding)
        self.sigma_binding()
        self.sampler()

    def sigma_binding(self) -> SigmaBinding:
        return SigmaBinding.parse(self.binding)

    def sampler(self) -> SigmaSampler:
        return SigmaSampler(self.sigma_low, self.sigma_high, parse_coupling(self.coupling))


@dataclass
class CollectionConfig:
    n_episodes: int = 50
    t_end: float = 2.5
    # extra sigma re-draws per episode, at uniformly random times
    redraws: int = 0
    seed: int | None = None

    def __post_init__(self):
        if self.n_episodes < 1:
            raise ConfigError("collection.n_episodes must be >= 1")
        if self.redraws < 0:
            raise ConfigError("collection.redraws must be >= 0")


@dataclass
class SurrogateConfig:
    hidden_width: int = 32
    n_blocks: int = 5
    dropout_rate: float = 0.2
    bn_momentum: float = 0.9
    bn_epsilon: float = 1e-5
    epochs: int = 5
    lr: float = 1e-3
    lr_decay: float = 0.2
    decay_every: int = 5
    batch_size: int = 64
    standardize_target: bool = True
    target_transform: str = "none"
    horizon: int = 20
    include_u: bool = False
    random_state: int | None = None

    def __post_init__(self):
        if self.horizon < 0:
            raise ConfigError("surrogate.horizon must be >= 0")
        if not 0 <= self.dropout_rate < 1:
            raise ConfigError("surrogate.dropout_rate must be in [0, 1)")
        if self.batch_size < 2:
            raise ConfigError("surrogate.batch_size must be >= 2")

    def estimator(self, seed):
        from .surrogate import ErrorSurrogate

        params = asdict(self)
        if params["random_state"] is None:
            params["random_state"] = seed
        return ErrorSurrogate(**params)


@dataclass
class RunConfig:
    plant: PlantParams = field(default_factory=PlantParams)
    controller: ControllerParams = field(default_factory=ControllerParams)
    reference: ReferenceSignal = field(default_factory=ReferenceSignal)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    adaptive: AdaptiveConfig = field(default_factory=AdaptiveConfig)
    collection: CollectionConfig = field(default_factory=CollectionConfig)
    surrogate: SurrogateConfig = field(default_factory=SurrogateConfig)
    seed: int = 0

    def initial_state(self):
        return PlantState(0.0, self.simulation.x0, self.simulation.v0)

    def make_controller(self):
        return CLFController(self.controller, self.reference, self.plant)

    def section_seed(self, section):
        s = getattr(self, section).seed
        return self.seed if s is None else s

    def to_dict(self):
        out = {}
        for f in fields(self):
            val = getattr(self, f.name)
            out[f.name] = val if f.name == "seed" else asdict(val)
        out["reference"]["harmonics"] = [list(h) for h in self.reference.harmonics]
        return out


_SECTIONS = {
    "plant": PlantParams,
    "controller": ControllerParams,
    "reference": ReferenceSignal,
    "simulation": SimulationConfig,
    "adaptive": AdaptiveConfig,
    "collection": CollectionConfig,
    "surrogate": SurrogateConfig,
}


def _build(section, cls, data):
    if not isinstance(data, dict):
        raise ConfigError(f"section {section!r} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in section {section!r}: {unknown}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"section {section!r}: {exc}") from None


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = sorted(set(data) - set(_SECTIONS) - {"seed"})
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {unknown}")
    kwargs = {name: _build(name, cls, data[name]) for name, cls in _SECTIONS.items() if name in data}
    if "seed" in data:
        seed = data["seed"]
        if not isinstance(seed, int) or seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        kwargs["seed"] = seed
    return RunConfig(**kwargs)


def _read_json(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"file not found: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None


def load_config(path) -> RunConfig:
    try:
        return config_from_dict(_read_json(path))
    except ConfigError as exc:
        if str(path) in str(exc):
            raise
        raise ConfigError(f"{path}: {exc}") from None


@dataclass
class Scenario:
    events: list = field(default_factory=list)
    binding: SigmaBinding | None = None
    description: str = ""


def scenario_from_dict(data: dict) -> Scenario:
    if not isinstance(data, dict):
        raise ConfigError("scenario must be a JSON object")
    unknown = sorted(set(data) - {"events", "binding", "description"})
    if unknown:
        raise ConfigError(f"unknown scenario key(s): {unknown}")
    events = []
    for i, raw in enumerate(data.get("events", [])):
        if not isinstance(raw, dict) or "at_time" not in raw or "action" not in raw:
            raise ConfigError(f"event #{i} needs 'at_time' and 'action'")
        args = {k: v for k, v in raw.items() if k not in ("at_time", "action")}
        at = raw["at_time"]
        if not isinstance(at, (int, float)) or not math.isfinite(at):
            raise ConfigError(f"event #{i}: at_time must be a number")
        events.append(ScenarioEvent(float(at), raw["action"], args))
    binding = data.get("binding")
    if isinstance(binding, list):
        binding = SigmaBinding(*binding)
    elif isinstance(binding, str):
        binding = SigmaBinding.parse(binding)
    return Scenario(events=events, binding=binding, description=data.get("description", ""))


def load_scenario(path) -> Scenario:
    try:
        return scenario_from_dict(_read_json(path))
    except ConfigError as exc:
        if str(path) in str(exc):
            raise
        raise ConfigError(f"{path}: {exc}") from None


def scenario_to_dict(sc: Scenario) -> dict:
    out = {"description": sc.description, "events": []}
    if sc.binding is not None:
        out["binding"] = [sc.binding.target1, sc.binding.target2]
    for ev in sc.events:
        out["events"].append({"at_time": ev.at_time, "action": ev.action, **ev.args})
    return out
