"""Quantum autoencoder classification on MNIST, simulated with numpy state vectors."""

__version__ = "0.1.0"

from .ansatz import CircuitSpec, GateOp, build_arch_a, build_arch_b, build_qcnn, invert, run
from .sim import DensityMatrix, StateVector
from .training import TrainConfig, TrainReport, train

__all__ = [
    "CircuitSpec", "GateOp", "build_arch_a", "build_arch_b", "build_qcnn", "invert", "run",
    "DensityMatrix", "StateVector", "TrainConfig", "TrainReport", "train",
]
