"""Batch LSPI with non-deterministic policy improvement on continuous navigation tasks."""
from .errors import ConfigError, ContractError, DataError, GeometryError, SolverError
from .features import FeatureMap, FourierMap, TabularMap, compose_state_action, q_all
from .lspi import LspiResult, LstdSystem, lspi_train, lstd_assemble, lstd_solve
from .navsim import Batch, Pose, WorldSpec, collect_random_walk, make_world, step
from .policy import ImprovementConfig, apply_operator, improvement_policy

__version__ = "0.1.0"
