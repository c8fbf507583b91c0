"""Surrogate-guided online retuning of a CLF tracking controller for a forced
Duffing-Van der Pol oscillator."""

from .adaptive import MemoryBuffer, propose_sigmas, retrain, run_adaptive, window_probe
from .config import RunConfig, config_from_dict, load_config, load_scenario
from .controller import CLFController, ControllerParams, ReferenceSignal
from .dynamics import PlantParams, PlantState, ScenarioEvent, Simulation, rk4_step, simulate
from .harness import Dataset, collect_dataset, compute_metrics, split_dataset
from .sigmas import SigmaBinding, SigmaPair, SigmaSampler, apply_sigmas
from .surrogate import ErrorSurrogate, predict_error

__version__ = "0.1.0"

__all__ = [
    "CLFController",
    "ControllerParams",
    "Dataset",
    "ErrorSurrogate",
    "MemoryBuffer",
    "PlantParams",
    "PlantState",
    "ReferenceSignal",
    "RunConfig",
    "ScenarioEvent",
    "SigmaBinding",
    "SigmaPair",
    "SigmaSampler",
    "Simulation",
    "apply_sigmas",
    "collect_dataset",
    "compute_metrics",
    "config_from_dict",
    "load_config",
    "load_scenario",
    "predict_error",
    "propose_sigmas",
    "retrain",
    "rk4_step",
    "run_adaptive",
    "simulate",
    "split_dataset",
    "window_probe",
]
