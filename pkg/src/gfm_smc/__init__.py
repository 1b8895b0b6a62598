"""Grid-forming inverter with PI voltage / sliding-mode current control and
metaheuristic (PSO, GA, SA) tuning of the current-loop gains."""

from .control import BASELINE_GAINS, ControllerConfig, SmcGains
from .frames import DqPair, ThreePhase, TwoAxis
from .plant import LinearLoadParams, NonlinearLoadParams, PlantParams
from .simloop import Event, Scenario, default_scenario, run_scenario

__all__ = [
    "BASELINE_GAINS", "ControllerConfig", "SmcGains", "DqPair", "ThreePhase", "TwoAxis",
    "LinearLoadParams", "NonlinearLoadParams", "PlantParams", "Event", "Scenario",
    "default_scenario", "run_scenario",
]

__version__ = "0.1.0"
