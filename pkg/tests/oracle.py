"""Independent dense-matrix reference implementations used by the tests.

Everything here is built from explicit basis-index loops, Kronecker products
and matrix exponentials, never from the package's reshape-based kernels.
"""
import numpy as np
from scipy.linalg import expm

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = {"X": X, "Y": Y, "Z": Z}


def rot(axis, a):
    return expm(-0.5j * a * PAULI[axis])


def u3(theta, phi, lam):
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -np.exp(1j * lam) * s],
                     [np.exp(1j * phi) * s, np.exp(1j * (phi + lam)) * c]])


def controlled(u):
    """4x4 with the control as the more significant index."""
    out = np.eye(4, dtype=complex)
    out[2:, 2:] = u
    return out


CNOT = controlled(X)


def embed(u, qubits, n):
    """Full 2**n matrix of ``u`` acting on ``qubits`` (qubits[0] most significant in u)."""
    k = len(qubits)
    dim = 1 << n
    full = np.zeros((dim, dim), dtype=complex)
    for col in range(dim):
        loc_in = sum(((col >> q) & 1) << (k - 1 - j) for j, q in enumerate(qubits))
        for loc_out in range(1 << k):
            row = col
            for j, q in enumerate(qubits):
                bit = (loc_out >> (k - 1 - j)) & 1
                row = (row & ~(1 << q)) | (bit << q)
            full[row, col] += u[loc_out, loc_in]
    return full


def kron_embed_1q(u, q, n):
    """Single-qubit embedding from Kronecker products (most significant first)."""
    out = np.ones((1, 1), dtype=complex)
    for k in reversed(range(n)):
        out = np.kron(out, u if k == q else I2)
    return out


def op_matrix(op, params):
    a = [params[s] for s in op.slots]
    k = op.kind
    if k in ("RX", "RY", "RZ"):
        m = rot(k[1], a[0])
    elif k in ("CRX", "CRY", "CRZ"):
        m = controlled(rot(k[2], a[0]))
    elif k == "U3":
        m = u3(*a)
    elif k == "CU3":
        m = controlled(u3(*a))
    elif k == "X":
        m = X
    elif k == "CNOT":
        m = CNOT
    else:
        raise ValueError(k)
    return m.conj().T if op.adjoint else m


def circuit_matrix(spec, params):
    u = np.eye(1 << spec.n_qubits, dtype=complex)
    for op in spec.ops:
        u = embed(op_matrix(op, params), op.qubits, spec.n_qubits) @ u
    return u


def ptrace(rho, keep, n):
    """Reduced density matrix on ``keep`` (ascending; smallest kept qubit -> bit 0)."""
    keep = sorted(keep)
    drop = [q for q in range(n) if q not in keep]
    k = len(keep)
    out = np.zeros((1 << k, 1 << k), dtype=complex)

    def compose(kbits, dbits):
        idx = 0
        for j, q in enumerate(keep):
            idx |= ((kbits >> j) & 1) << q
        for j, q in enumerate(drop):
            idx |= ((dbits >> j) & 1) << q
        return idx

    for d in range(1 << len(drop)):
        for i in range(1 << k):
            for j in range(1 << k):
                out[i, j] += rho[compose(i, d), compose(j, d)]
    return out


def place(rho_sub, sub_qubits, n):
    """n-qubit density matrix with ``rho_sub`` on ``sub_qubits`` (in order, first = bit 0)
    and |0> on every other qubit."""
    dim = 1 << n
    out = np.zeros((dim, dim), dtype=complex)
    k = len(sub_qubits)
    for i in range(1 << k):
        for j in range(1 << k):
            ri = sum(((i >> b) & 1) << q for b, q in enumerate(sub_qubits))
            rj = sum(((j >> b) & 1) << q for b, q in enumerate(sub_qubits))
            out[ri, rj] = rho_sub[i, j]
    return out


def random_state(rng, n):
    v = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return v / np.linalg.norm(v)


def random_unitary(rng, d):
    q, r = np.linalg.qr(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_density(rng, n, rank=None):
    d = 1 << n
    rank = rank or d
    a = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def fidelity_dm(a, b):
    """Uhlmann fidelity through scipy's matrix square root."""
    from scipy.linalg import sqrtm
    sa = sqrtm(a)
    return float(np.real(np.trace(sqrtm(sa @ b @ sa))) ** 2)


def reconstruction_overlap(enc, theta, dec, theta_dec, phi):
    """<φ| D (Tr_t[E ρ E†] ⊗ |0><0|^t) D† |φ> with every step as a dense matrix."""
    n = enc.n_qubits
    e = circuit_matrix(enc, theta)
    d = circuit_matrix(dec, theta_dec)
    rho = e @ np.outer(phi, phi.conj()) @ e.conj().T
    # reduced state of the compressed qubits in enc.compressed order (first = bit 0)
    order = list(enc.compressed)
    rho_c = ptrace(rho, order, n)
    # ptrace sorts; re-order to enc.compressed order
    srt = sorted(order)
    perm = [srt.index(q) for q in order]
    k = len(order)
    p = np.zeros((1 << k, 1 << k))
    for i in range(1 << k):
        j = sum(((i >> b) & 1) << perm[b] for b in range(k))
        p[i, j] = 1
    rho_c = p @ rho_c @ p.T
    rho_in = place(rho_c, list(dec.compressed), n)
    rho_out = d @ rho_in @ d.conj().T
    return float(np.real(phi.conj() @ rho_out @ phi))
