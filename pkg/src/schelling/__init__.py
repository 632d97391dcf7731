"""Schelling segregation dynamics on the two-dimensional torus.

Modules: ``grid`` (state and counts), ``dynamics`` (schedulers), ``regions``
(detectors), ``bounds`` (closed forms and exact probabilities), ``fpp``
(first-passage growth) and ``harness`` (configuration, I/O, runner).
"""

from .dynamics import (
    ContinuousScheduler,
    DiscreteScheduler,
    WaitingTimeDistribution,
    lyapunov,
    run_to_steady_state,
)
from .grid import MINUS, PLUS, Intolerance, SpinGrid, make_rng

__version__ = "0.1.0"

__all__ = [
    "MINUS",
    "PLUS",
    "ContinuousScheduler",
    "DiscreteScheduler",
    "Intolerance",
    "SpinGrid",
    "WaitingTimeDistribution",
    "lyapunov",
    "make_rng",
    "run_to_steady_state",
]
