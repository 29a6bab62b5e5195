"""Lattice kinetic scheme for incompressible flow, classical and as a hybrid quantum circuit."""
from .benchmarks import (AnalyticCase, ErrorReport, ReferenceProfile, compare_profile, convergence_order,
                         l2_relative_error, load_reference, measured_viscosity, taylor_green_2d, taylor_green_3d)
from .classical import (BoundarySpec, InstabilityError, MacroFields, Mesh, compute_gradients, lks_step, run)
from .config import CaseConfig, ConfigError, parse_config
from .lattice import (FlowParams, VelocitySet, a_from_viscosity, equilibrium, make_velocity_set,
                      normalized_equilibrium, pressure, viscosity_from_a)
from .pipeline import qlks_step, resource_estimate
from .statevector import RegisterLayout, StateVector

__version__ = "0.1.0"
