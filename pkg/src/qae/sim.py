"""Exact statevector and density-matrix primitives.

Qubit ordering is little-endian throughout: qubit 0 is the least-significant
bit of a basis-state label, and is drawn as the top wire of a circuit.  For a
two-qubit matrix acting on the ordered pair ``(q1, q2)``, ``q1`` is the more
significant index of the 4x4 basis.

Single states are wrapped in the small immutable :class:`StateVector` and
:class:`DensityMatrix` value types.  The ``*_batch`` style helpers underneath
operate on raw arrays of shape ``(batch, 2**n)`` and are what the circuit
runner and the training loop use.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

MAX_QUBITS = 24
UNITARY_ATOL = 1e-10
NORM_ATOL = 1e-9
PSD_ATOL = 1e-9

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = {"X": PAULI_X, "Y": PAULI_Y, "Z": PAULI_Z}


class CapacityError(ValueError):
    """Requested register is outside the supported 1..24 qubit range."""


class ValidationError(ValueError):
    """An argument violates a precondition (shape, unitarity, indices)."""


def _check_n(n: int) -> int:
    if not isinstance(n, (int, np.integer)) or not 1 <= n <= MAX_QUBITS:
        raise CapacityError(f"qubit count must be in [1, {MAX_QUBITS}], got {n!r}")
    return int(n)


def _n_from_dim(dim: int) -> int:
    n = int(dim).bit_length() - 1
    if dim < 2 or 1 << n != dim:
        raise ValidationError(f"dimension {dim} is not a power of two >= 2")
    return n


@dataclass(frozen=True, eq=False)
class StateVector:
    """Pure state of ``n_qubits`` qubits; ``amplitudes`` has length ``2**n``."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        _check_n(_n_from_dim(amps.size))
        if abs(np.linalg.norm(amps) - 1.0) > NORM_ATOL:
            raise ValidationError(f"state is not normalized (norm={np.linalg.norm(amps):.12g})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def n_qubits(self) -> int:
        return self.amplitudes.size.bit_length() - 1

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def __repr__(self):
        return f"StateVector(n_qubits={self.n_qubits})"


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Mixed state of ``n_qubits`` qubits as a ``2**n x 2**n`` matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValidationError(f"density matrix must be square, got shape {m.shape}")
        _check_n(_n_from_dim(m.shape[0]))
        if not np.allclose(m, m.conj().T, atol=UNITARY_ATOL, rtol=0):
            raise ValidationError("density matrix is not Hermitian within 1e-10")
        if abs(np.trace(m) - 1.0) > UNITARY_ATOL:
            raise ValidationError(f"density matrix trace is {np.trace(m).real:.12g}, not 1")
        if np.linalg.eigvalsh(m).min() < -PSD_ATOL:
            raise ValidationError("density matrix has a negative eigenvalue below -1e-9")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def n_qubits(self) -> int:
        return self.matrix.shape[0].bit_length() - 1

    @classmethod
    def from_state(cls, state: StateVector) -> "DensityMatrix":
        v = state.amplitudes
        return cls(np.outer(v, v.conj()))

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))

    def __repr__(self):
        return f"DensityMatrix(n_qubits={self.n_qubits})"


def _as_dm(x) -> DensityMatrix:
    if isinstance(x, DensityMatrix):
        return x
    if isinstance(x, StateVector):
        return DensityMatrix.from_state(x)
    raise TypeError(f"expected StateVector or DensityMatrix, got {type(x).__name__}")


def _check_qubit(q, n: int) -> int:
    if not isinstance(q, (int, np.integer)) or not 0 <= q < n:
        raise ValidationError(f"qubit index {q!r} out of range for {n} qubits")
    return int(q)


def _check_unitary(u: np.ndarray, dim: int) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    if u.shape != (dim, dim):
        raise ValidationError(f"expected a {dim}x{dim} matrix, got shape {u.shape}")
    if not np.allclose(u.conj().T @ u, np.eye(dim), atol=UNITARY_ATOL, rtol=0):
        raise ValidationError("matrix is not unitary within 1e-10")
    return u


# --------------------------------------------------------------------------
# Batched kernels.  ``psi`` has shape (B, 2**n); matrices need not be unitary
# (the adjoint gradient applies generators through the same code path).
# --------------------------------------------------------------------------

@numba.njit(cache=True)
def _insert_zero(x, p):
    return ((x >> p) << (p + 1)) | (x & ((1 << p) - 1))


@numba.njit(cache=True)
def _apply1_inplace(psi, u, q):
    b, dim = psi.shape
    m = 1 << q
    for r in range(b):
        for k in range(dim >> 1):
            i0 = _insert_zero(k, q)
            i1 = i0 | m
            a0, a1 = psi[r, i0], psi[r, i1]
            psi[r, i0] = u[0, 0] * a0 + u[0, 1] * a1
            psi[r, i1] = u[1, 0] * a0 + u[1, 1] * a1


@numba.njit(cache=True)
def _apply2_inplace(psi, u, hi, lo):
    # u is expressed with qubit ``hi`` as the more significant index
    b, dim = psi.shape
    mh, ml = 1 << hi, 1 << lo
    for r in range(b):
        for k in range(dim >> 2):
            i0 = _insert_zero(_insert_zero(k, lo), hi)
            i1, i2, i3 = i0 | ml, i0 | mh, i0 | mh | ml
            a0, a1, a2, a3 = psi[r, i0], psi[r, i1], psi[r, i2], psi[r, i3]
            psi[r, i0] = u[0, 0] * a0 + u[0, 1] * a1 + u[0, 2] * a2 + u[0, 3] * a3
            psi[r, i1] = u[1, 0] * a0 + u[1, 1] * a1 + u[1, 2] * a2 + u[1, 3] * a3
            psi[r, i2] = u[2, 0] * a0 + u[2, 1] * a1 + u[2, 2] * a2 + u[2, 3] * a3
            psi[r, i3] = u[3, 0] * a0 + u[3, 1] * a1 + u[3, 2] * a2 + u[3, 3] * a3


@numba.njit(cache=True)
def _cross1_sum(psi, lam, q):
    b, dim = psi.shape
    m = 1 << q
    c = np.zeros((2, 2), dtype=np.complex128)
    for r in range(b):
        for k in range(dim >> 1):
            i0 = _insert_zero(k, q)
            idx = (i0, i0 | m)
            for x in range(2):
                px = psi[r, idx[x]]
                for y in range(2):
                    c[x, y] += px * np.conj(lam[r, idx[y]])
    return c


@numba.njit(cache=True)
def _cross2_sum(psi, lam, hi, lo):
    b, dim = psi.shape
    mh, ml = 1 << hi, 1 << lo
    c = np.zeros((4, 4), dtype=np.complex128)
    for r in range(b):
        for k in range(dim >> 2):
            i0 = _insert_zero(_insert_zero(k, lo), hi)
            idx = (i0, i0 | ml, i0 | mh, i0 | mh | ml)
            for x in range(4):
                px = psi[r, idx[x]]
                for y in range(4):
                    c[x, y] += px * np.conj(lam[r, idx[y]])
    return c


def _swap_order(m: np.ndarray) -> np.ndarray:
    """Re-express a 4x4 matrix with its two qubit indices exchanged."""
    return m.reshape(2, 2, 2, 2).transpose(1, 0, 3, 2).reshape(4, 4)


def apply_matrix_inplace(psi: np.ndarray, u: np.ndarray, qubits: tuple, n: int) -> np.ndarray:
    """Apply ``u`` to every row of the C-contiguous complex array ``psi`` in place."""
    u = np.ascontiguousarray(u, dtype=complex)
    if len(qubits) == 1:
        _apply1_inplace(psi, u, qubits[0])
    else:
        q1, q2 = qubits
        if q1 > q2:
            _apply2_inplace(psi, u, q1, q2)
        else:
            _apply2_inplace(psi, np.ascontiguousarray(_swap_order(u)), q2, q1)
    return psi


def _writable_copy(psi: np.ndarray) -> np.ndarray:
    return np.array(psi, dtype=complex, order="C", copy=True)


def apply_matrix_1q(psi: np.ndarray, u: np.ndarray, q: int, n: int) -> np.ndarray:
    return apply_matrix_inplace(_writable_copy(psi), u, (q,), n)


def apply_matrix_2q(psi: np.ndarray, u: np.ndarray, q1: int, q2: int, n: int) -> np.ndarray:
    return apply_matrix_inplace(_writable_copy(psi), u, (q1, q2), n)


def apply_matrix(psi: np.ndarray, u: np.ndarray, qubits: tuple, n: int) -> np.ndarray:
    return apply_matrix_inplace(_writable_copy(psi), u, tuple(qubits), n)


def local_cross(psi: np.ndarray, lam: np.ndarray, qubits: tuple, n: int) -> np.ndarray:
    """Reduced operator ``Tr_rest |psi><lam|`` on ``qubits``, shape (B, d, d)."""
    b = psi.shape[0]
    k = len(qubits)
    axes = tuple(1 + (n - 1 - q) for q in qubits)
    dest = tuple(range(-k, 0))
    tp = np.moveaxis(psi.reshape((b,) + (2,) * n), axes, dest).reshape(b, -1, 1 << k)
    tl = np.moveaxis(lam.reshape((b,) + (2,) * n), axes, dest).reshape(b, -1, 1 << k)
    return np.einsum("bri,brj->bij", tp, tl.conj())


def local_cross_sum(psi: np.ndarray, lam: np.ndarray, qubits: tuple) -> np.ndarray:
    """``local_cross`` summed over the batch, without temporaries."""
    psi = np.ascontiguousarray(psi, dtype=complex)
    lam = np.ascontiguousarray(lam, dtype=complex)
    if len(qubits) == 1:
        return _cross1_sum(psi, lam, qubits[0])
    q1, q2 = qubits
    if q1 > q2:
        return _cross2_sum(psi, lam, q1, q2)
    return _swap_order(_cross2_sum(psi, lam, q2, q1))


def prob_one_batch(psi: np.ndarray, q: int, n: int) -> np.ndarray:
    b = psi.shape[0]
    view = psi.reshape(b, 1 << (n - 1 - q), 2, 1 << q)
    return np.einsum("bhl,bhl->b", view[:, :, 1, :], view[:, :, 1, :].conj()).real


def bloch_batch(psi: np.ndarray, q: int, n: int) -> np.ndarray:
    """(<X>, <Y>, <Z>) of qubit ``q`` for every row of ``psi``; shape (B, 3)."""
    b = psi.shape[0]
    view = psi.reshape(b, 1 << (n - 1 - q), 2, 1 << q)
    a0, a1 = view[:, :, 0, :], view[:, :, 1, :]
    p0 = np.einsum("bhl,bhl->b", a0, a0.conj()).real
    p1 = np.einsum("bhl,bhl->b", a1, a1.conj()).real
    # rho_01 = sum conj(a1) a0 ; <X> = 2 Re rho_01, <Y> = -2 Im rho_01
    r01 = np.einsum("bhl,bhl->b", a0, a1.conj())
    return np.stack([2 * r01.real, -2 * r01.imag, p0 - p1], axis=1)


# --------------------------------------------------------------------------
# Single-state operations
# --------------------------------------------------------------------------

def new_zero_state(n: int) -> StateVector:
    n = _check_n(n)
    amps = np.zeros(1 << n, dtype=complex)
    amps[0] = 1.0
    return StateVector(amps)


def set_amplitudes(n: int, v) -> StateVector:
    n = _check_n(n)
    v = np.asarray(v, dtype=complex).reshape(-1)
    if v.size != 1 << n:
        raise ValidationError(f"expected {1 << n} amplitudes for {n} qubits, got {v.size}")
    if abs(np.linalg.norm(v) - 1.0) > NORM_ATOL:
        raise ValidationError(f"amplitudes are not normalized (norm={np.linalg.norm(v):.12g})")
    return StateVector(v)


def apply_1q(state: StateVector, u, q: int) -> StateVector:
    n = state.n_qubits
    q = _check_qubit(q, n)
    u = _check_unitary(u, 2)
    return StateVector(apply_matrix_1q(state.amplitudes[None, :], u, q, n)[0])


def apply_2q(state: StateVector, u, q1: int, q2: int) -> StateVector:
    n = state.n_qubits
    q1, q2 = _check_qubit(q1, n), _check_qubit(q2, n)
    if q1 == q2:
        raise ValidationError(f"two-qubit gate needs distinct qubits, got ({q1}, {q2})")
    u = _check_unitary(u, 4)
    return StateVector(apply_matrix_2q(state.amplitudes[None, :], u, q1, q2, n)[0])


def marginal_prob_one(state: StateVector, q: int) -> float:
    n = state.n_qubits
    q = _check_qubit(q, n)
    return float(prob_one_batch(state.amplitudes[None, :], q, n)[0])


def expectation_pauli(state: StateVector, q: int, axis: str) -> float:
    n = state.n_qubits
    q = _check_qubit(q, n)
    try:
        i = "XYZ".index(axis.upper())
    except (ValueError, AttributeError):
        raise ValidationError(f"axis must be one of X, Y, Z; got {axis!r}") from None
    return float(bloch_batch(state.amplitudes[None, :], q, n)[0, i])


def partial_trace(state, keep) -> DensityMatrix:
    """Reduced density matrix on ``keep``.

    Kept qubits are relabelled in ascending order, so the smallest kept index
    becomes qubit 0 of the result.
    """
    keep = sorted(set(int(k) for k in keep))
    if isinstance(state, StateVector):
        n = state.n_qubits
    else:
        n = _as_dm(state).n_qubits
    if not keep:
        raise ValidationError("partial_trace needs a non-empty keep set")
    for q in keep:
        _check_qubit(q, n)
    k = len(keep)
    keep_axes = [n - 1 - q for q in reversed(keep)]   # most significant first
    drop_axes = [a for a in range(n) if a not in keep_axes]
    if isinstance(state, StateVector):
        t = state.amplitudes.reshape((2,) * n).transpose(drop_axes + keep_axes)
        t = t.reshape(-1, 1 << k)
        rho = t.T @ t.conj()
    else:
        m = state.matrix.reshape((2,) * (2 * n))
        perm = drop_axes + keep_axes + [n + a for a in drop_axes] + [n + a for a in keep_axes]
        m = m.transpose(perm).reshape(1 << (n - k), 1 << k, 1 << (n - k), 1 << k)
        rho = np.einsum("aiaj->ij", m)
    return DensityMatrix(rho)


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def _pure_vector(dm: DensityMatrix, tol: float = 1e-10):
    """Return the state vector of a rank-one density matrix, else None."""
    m = dm.matrix
    if abs(np.real(np.trace(m @ m)) - 1.0) > tol:
        return None
    w, v = np.linalg.eigh(m)
    return v[:, -1]


def fidelity(a, b) -> float:
    """Uhlmann fidelity ``(Tr sqrt(sqrt(a) b sqrt(a)))**2``.

    Accepts state vectors or density matrices.  When either side is pure the
    exact specialization ``<psi|rho|psi>`` is used.
    """
    if isinstance(a, StateVector) and isinstance(b, StateVector):
        if a.n_qubits != b.n_qubits:
            raise ValidationError("fidelity arguments have different dimensions")
        return float(min(1.0, abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2))
    if isinstance(b, StateVector) and not isinstance(a, StateVector):
        a, b = b, a
    if isinstance(a, StateVector):
        b = _as_dm(b)
        if a.n_qubits != b.n_qubits:
            raise ValidationError("fidelity arguments have different dimensions")
        v = a.amplitudes
        return float(np.clip(np.real(v.conj() @ b.matrix @ v), 0.0, 1.0))
    a, b = _as_dm(a), _as_dm(b)
    if a.matrix.shape != b.matrix.shape:
        raise ValidationError("fidelity arguments have different dimensions")
    for x, y in ((a, b), (b, a)):
        v = _pure_vector(x)
        if v is not None:
            return float(np.clip(np.real(v.conj() @ y.matrix @ v), 0.0, 1.0))
    sa = _psd_sqrt(a.matrix)
    inner = sa @ b.matrix @ sa
    w = np.clip(np.linalg.eigvalsh((inner + inner.conj().T) / 2), 0.0, None)
    return float(np.clip(np.sum(np.sqrt(w)) ** 2, 0.0, 1.0))


def trace_distance(a, b) -> float:
    a, b = _as_dm(a), _as_dm(b)
    if a.matrix.shape != b.matrix.shape:
        raise ValidationError("trace_distance arguments have different dimensions")
    d = a.matrix - b.matrix
    w = np.linalg.eigvalsh((d + d.conj().T) / 2)
    return float(np.clip(0.5 * np.sum(np.abs(w)), 0.0, 1.0))


def tensor_with_zeros(dm: DensityMatrix, t: int) -> DensityMatrix:
    """``dm ⊗ |0><0|^{⊗t}`` as a Kronecker product in that order.

    The fresh qubits take indices ``0..t-1``; the qubits of ``dm`` move up to
    ``t..t+k-1``.
    """
    if t < 1:
        raise ValidationError(f"t must be >= 1, got {t}")
    dm = _as_dm(dm)
    _check_n(dm.n_qubits + t)
    zeros = np.zeros((1 << t, 1 << t), dtype=complex)
    zeros[0, 0] = 1.0
    return DensityMatrix(np.kron(dm.matrix, zeros))
