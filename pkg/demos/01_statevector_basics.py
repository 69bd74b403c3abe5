"""
Statevectors, gates and reduced states
======================================

A tour of the simulator layer: building states, applying gates, tracing
out qubits and comparing states.
"""

import numpy as np

from qae.ansatz import prim_matrix
from qae.sim import (
    StateVector, apply_1q, apply_2q, expectation_pauli, fidelity, new_zero_state,
    partial_trace, trace_distance,
)

# Qubit 0 is the least significant bit of the basis label, so flipping it
# moves the amplitude from basis state 0 to basis state 1.
psi = new_zero_state(3)
psi = apply_1q(psi, prim_matrix("RY", np.pi / 2), 0)
print("RY(pi) on qubit 0:", np.round(apply_1q(new_zero_state(3), prim_matrix("RY", np.pi), 0).amplitudes.real, 3))

# A Hadamard-like rotation plus CNOT gives a Bell pair on qubits 0 and 1.
cnot = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]])
bell = apply_2q(psi, cnot, 0, 1)
print("Bell pair amplitudes:", np.round(bell.amplitudes.real, 3))

# Each half of a Bell pair is maximally mixed: purity 1/2, Bloch vector 0.
rho0 = partial_trace(bell, {0})
print("purity of qubit 0:", round(rho0.purity(), 6))
print("<X>, <Y>, <Z> on qubit 0:", [round(expectation_pauli(bell, 0, a), 6) for a in "XYZ"])

# Qubit 2 never interacted, so its reduced state is still pure |0>.
print("purity of qubit 2:", round(partial_trace(bell, {2}).purity(), 6))

# For pure states the trace distance is fixed by the fidelity.
rng = np.random.default_rng(0)
a = rng.normal(size=8) + 1j * rng.normal(size=8)
b = rng.normal(size=8) + 1j * rng.normal(size=8)
a, b = StateVector(a / np.linalg.norm(a)), StateVector(b / np.linalg.norm(b))
f = fidelity(a, b)
print(f"F = {f:.6f}, D = {trace_distance(a, b):.6f}, sqrt(1 - F) = {np.sqrt(1 - f):.6f}")
