"""Asynchronous variational contact integrator with discrete penalty layers."""

from .certificates import CertificateTable, SeparatingSlab, find_certificate, schedule
from .diagnostics import Snapshot, drift_slope, snapshot
from .errors import (ClockRegressionError, ConfigurationError, DegenerateGeometryError,
                     NumericError, SceneError, SimulationError, StatisticsError)
from .potentials import (ContactPair, ContactParams, Gravity, PenaltyLayer, Spring,
                         base_timestep, layer_timestep)
from .scene import SceneConfig, build_simulation, builtin_scene, format_scene, parse_scene
from .scheduler import EventQueue, Simulation
from .state import FIXED, Body, BodyKind, State, drift, kick

__version__ = "0.1.0"
