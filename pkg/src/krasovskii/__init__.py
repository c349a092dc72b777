"""Krasovskii passivity: certificates, extended-system simulation, and rate-feedback control."""
from .dynamics import ExtendedSystem, InputAffineSystem, eval_jacobians, eval_vector_field, extend, find_equilibrium
from .models import BoostParams, RlcZipParams, boost_converter, boost_equilibrium, parallel_rlc_zip
from .passivity import StorageMetric, RegionSampler, check_gradient, check_ph, check_prop1, storage, supply_output
from .sim import Constant, PiecewiseConstant, SimConfig, Trajectory, convergence_metrics, integrate, verify_dissipation
from .control import KrasovskiiController, close_loop, interconnect

__all__ = [
    "ExtendedSystem", "InputAffineSystem", "eval_jacobians", "eval_vector_field", "extend", "find_equilibrium",
    "BoostParams", "RlcZipParams", "boost_converter", "boost_equilibrium", "parallel_rlc_zip",
    "StorageMetric", "RegionSampler", "check_gradient", "check_ph", "check_prop1", "storage", "supply_output",
    "Constant", "PiecewiseConstant", "SimConfig", "Trajectory", "convergence_metrics", "integrate", "verify_dissipation",
    "KrasovskiiController", "close_loop", "interconnect",
]
