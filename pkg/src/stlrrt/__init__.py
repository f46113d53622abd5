"""Time-varying barrier sets from STL tasks and an RRT* planner that samples inside them."""
from .formula import parse, pretty, horizon, to_conjunctions
from .geometry import LinearPredicate, Polytope
from .dynamics import Dynamics
from .barrier import ConjunctionBarrier, TaskBarrier, make_task_barrier
from .encoder import ClassKGain, build_lp, solve_lp, encode_disjunction
from .trajectory import Trajectory
from .monitor import SampledSignal, robustness, satisfies_with_degree
from .scenario import Scenario, load_scenario

__version__ = "0.1.0"

__all__ = [
    "parse", "pretty", "horizon", "to_conjunctions", "LinearPredicate", "Polytope", "Dynamics",
    "ConjunctionBarrier", "TaskBarrier", "make_task_barrier", "ClassKGain", "build_lp",
    "solve_lp", "encode_disjunction", "Trajectory", "SampledSignal", "robustness",
    "satisfies_with_degree", "Scenario", "load_scenario",
]
