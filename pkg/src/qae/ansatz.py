"""Circuit IR, encoder builders and the compiled circuit runner.

A :class:`CircuitSpec` is an immutable list of :class:`GateOp` with parameter
slot bindings.  Before simulation a spec is compiled into primitive gates, each
of the form ``exp(-i * angle * H)`` for a fixed generator ``H`` (or a fixed
gate such as CNOT), and the primitives are grouped into segments touching at
most two qubits.  Segments are fused into a single 2x2/4x4 matrix for the
forward pass; the per-primitive structure is kept for gradients.

U3 is implemented in the standard form
``[[cos(t/2), -e^{il} sin(t/2)], [e^{ip} sin(t/2), e^{i(p+l)} cos(t/2)]]``
which factors exactly as ``P(p) RY(t) P(l)`` with ``P(a) = diag(1, e^{ia})``.
CU3 is the controlled version of the same matrix.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .sim import (
    PAULI_X, PAULI_Y, PAULI_Z, StateVector, ValidationError, apply_matrix, apply_matrix_inplace,
)

ONE_QUBIT_KINDS = {"RX": 1, "RY": 1, "RZ": 1, "U3": 3, "X": 0}
TWO_QUBIT_KINDS = {"CNOT": 0, "CRX": 1, "CRY": 1, "CRZ": 1, "CU3": 3}
GATE_KINDS = {**ONE_QUBIT_KINDS, **TWO_QUBIT_KINDS}

CONV_SLOTS = {1: 15, 2: 2, 3: 3}
POOL_SLOTS = {"zx": 2, "generalized": 6, "none": 0}


@dataclass(frozen=True)
class GateOp:
    kind: str
    qubits: tuple
    slots: tuple = ()
    adjoint: bool = False

    def __post_init__(self):
        kind = self.kind.upper()
        if kind not in GATE_KINDS:
            raise ValidationError(f"unknown gate kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        object.__setattr__(self, "slots", tuple(int(s) for s in self.slots))
        n_q = 1 if kind in ONE_QUBIT_KINDS else 2
        if len(self.qubits) != n_q:
            raise ValidationError(f"{kind} acts on {n_q} qubit(s), got {self.qubits}")
        if n_q == 2 and self.qubits[0] == self.qubits[1]:
            raise ValidationError(f"{kind} needs distinct qubits, got {self.qubits}")
        if len(self.slots) != GATE_KINDS[kind]:
            raise ValidationError(
                f"{kind} takes {GATE_KINDS[kind]} parameter slot(s), got {len(self.slots)}")

    def dagger(self) -> "GateOp":
        if self.kind in ("X", "CNOT"):
            return self
        return replace(self, adjoint=not self.adjoint)


@dataclass(frozen=True, eq=False)
class CircuitSpec:
    n_qubits: int
    ops: tuple
    n_params: int
    trash: tuple = ()
    compressed: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "ops", tuple(self.ops))
        object.__setattr__(self, "trash", tuple(int(q) for q in self.trash))
        object.__setattr__(self, "compressed", tuple(int(q) for q in self.compressed))
        n = self.n_qubits
        used = set()
        for op in self.ops:
            for q in op.qubits:
                if not 0 <= q < n:
                    raise ValidationError(f"{op} addresses qubit outside [0, {n})")
            for s in op.slots:
                if not 0 <= s < self.n_params:
                    raise ValidationError(f"{op} references slot outside [0, {self.n_params})")
            used.update(op.slots)
        if len(used) != self.n_params:
            missing = sorted(set(range(self.n_params)) - used)
            raise ValidationError(f"parameter slots never used: {missing[:10]}")
        t, c = set(self.trash), set(self.compressed)
        if t & c or (t | c) != set(range(n)) or len(t) != len(self.trash) \
                or len(c) != len(self.compressed):
            raise ValidationError("trash and compressed must partition the qubits")

    def with_partition(self, trash, compressed) -> "CircuitSpec":
        return CircuitSpec(self.n_qubits, self.ops, self.n_params, tuple(trash), tuple(compressed))

    @cached_property
    def program(self) -> "Program":
        return compile_circuit(self)

    def __len__(self):
        return len(self.ops)

    def __repr__(self):
        return (f"CircuitSpec(n_qubits={self.n_qubits}, ops={len(self.ops)}, "
                f"n_params={self.n_params}, trash={self.trash}, compressed={self.compressed})")


# --------------------------------------------------------------------------
# Primitive gates
# --------------------------------------------------------------------------

_I2 = np.eye(2, dtype=complex)
_P1 = np.diag([0.0, 1.0]).astype(complex)
_CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
_SWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)

# generator H with gate = exp(-i a H)
_GENERATORS = {
    "RX": PAULI_X / 2, "RY": PAULI_Y / 2, "RZ": PAULI_Z / 2, "P": -_P1,
    "CRX": np.kron(_P1, PAULI_X / 2), "CRY": np.kron(_P1, PAULI_Y / 2),
    "CRZ": np.kron(_P1, PAULI_Z / 2), "CP": -np.kron(_P1, _P1),
}
_FIXED = {"X": PAULI_X, "CNOT": _CNOT}

_C1 = (np.sqrt(2) + 1) / (4 * np.sqrt(2))
_C2 = (np.sqrt(2) - 1) / (4 * np.sqrt(2))
TWO_TERM = ((0.5, np.pi / 2), (-0.5, -np.pi / 2))
FOUR_TERM = ((_C1, np.pi / 2), (-_C1, -np.pi / 2), (-_C2, 3 * np.pi / 2), (_C2, -3 * np.pi / 2))
SHIFT_RULES = {"RX": TWO_TERM, "RY": TWO_TERM, "RZ": TWO_TERM, "P": TWO_TERM, "CP": TWO_TERM,
               "CRX": FOUR_TERM, "CRY": FOUR_TERM, "CRZ": FOUR_TERM}


def prim_matrix(kind: str, angle: float = 0.0) -> np.ndarray:
    if kind in _FIXED:
        return _FIXED[kind]
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    if kind == "RX":
        return np.array([[c, -1j * s], [-1j * s, c]])
    if kind == "RY":
        return np.array([[c, -s], [s, c]], dtype=complex)
    if kind == "RZ":
        return np.diag([np.exp(-0.5j * angle), np.exp(0.5j * angle)])
    if kind == "P":
        return np.diag([1.0, np.exp(1j * angle)])
    if kind == "CP":
        return np.diag([1.0, 1.0, 1.0, np.exp(1j * angle)])
    if kind in ("CRX", "CRY", "CRZ"):
        out = np.eye(4, dtype=complex)
        out[2:, 2:] = prim_matrix(kind[1:], angle)
        return out
    raise ValidationError(f"unknown primitive {kind!r}")


def u3_matrix(theta, phi, lam) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -np.exp(1j * lam) * s],
                     [np.exp(1j * phi) * s, np.exp(1j * (phi + lam)) * c]])


def gate_matrix(op: GateOp, params) -> np.ndarray:
    """Matrix of a single op (control first for two-qubit kinds)."""
    a = [params[s] for s in op.slots]
    if op.kind == "U3":
        m = u3_matrix(*a)
    elif op.kind == "CU3":
        m = np.eye(4, dtype=complex)
        m[2:, 2:] = u3_matrix(*a)
    else:
        m = prim_matrix(op.kind, a[0] if a else 0.0)
    return m.conj().T if op.adjoint else m


@dataclass(frozen=True)
class Prim:
    kind: str
    qubits: tuple
    slot: int = -1        # -1 for fixed gates
    sign: float = 1.0     # bound angle = sign * params[slot]


def _expand(op: GateOp) -> list:
    k, q, s = op.kind, op.qubits, op.slots
    if k in _FIXED:
        prims = [Prim(k, q)]
    elif k == "U3":
        prims = [Prim("P", q, s[2]), Prim("RY", q, s[0]), Prim("P", q, s[1])]
    elif k == "CU3":
        prims = [Prim("CP", q, s[2]), Prim("CRY", q, s[0]), Prim("CP", q, s[1])]
    else:
        prims = [Prim(k, q, s[0])]
    if op.adjoint:
        prims = [replace(p, sign=-p.sign) if p.slot >= 0 else p for p in reversed(prims)]
    return prims


def _embed(m: np.ndarray, prim_qubits: tuple, seg_qubits: tuple) -> np.ndarray:
    """Express a primitive matrix in the local basis of its segment."""
    if len(seg_qubits) == 1:
        return m
    if len(prim_qubits) == 1:
        return np.kron(m, _I2) if prim_qubits[0] == seg_qubits[0] else np.kron(_I2, m)
    if prim_qubits == seg_qubits:
        return m
    return _SWAP @ m @ _SWAP


@dataclass
class Segment:
    qubits: tuple
    prims: list = field(default_factory=list)


@dataclass
class Program:
    """Compiled form of a circuit: primitives grouped into <=2-qubit segments."""

    n_qubits: int
    n_params: int
    segments: list

    def local_matrices(self, params) -> list:
        """Per segment, the embedded matrix of each of its primitives."""
        out = []
        for seg in self.segments:
            mats = []
            for p in seg.prims:
                angle = p.sign * params[p.slot] if p.slot >= 0 else 0.0
                mats.append(_embed(prim_matrix(p.kind, angle), p.qubits, seg.qubits))
            out.append(mats)
        return out

    def fused(self, params) -> list:
        fused = []
        for mats in self.local_matrices(params):
            u = mats[0]
            for m in mats[1:]:
                u = m @ u
            fused.append(u)
        return fused

    def apply(self, psi: np.ndarray, params, fused=None) -> np.ndarray:
        if fused is None:
            fused = self.fused(params)
        n = self.n_qubits
        psi = np.array(psi, dtype=complex, order="C", copy=True)
        for seg, u in zip(self.segments, fused):
            apply_matrix_inplace(psi, u, seg.qubits, n)
        return psi

    def generators(self) -> list:
        return [[_embed(_GENERATORS[p.kind], p.qubits, seg.qubits) if p.slot >= 0 else None
                 for p in seg.prims] for seg in self.segments]


def compile_circuit(spec: CircuitSpec) -> Program:
    segments: list[Segment] = []
    for op in spec.ops:
        for prim in _expand(op):
            qs = prim.qubits
            if segments:
                cur = segments[-1]
                union = set(cur.qubits) | set(qs)
                if len(union) <= 2:
                    if len(union) > len(cur.qubits):
                        extra = [q for q in qs if q not in cur.qubits]
                        cur.qubits = cur.qubits + tuple(extra)
                    cur.prims.append(prim)
                    continue
            segments.append(Segment(tuple(qs), [prim]))
    for seg in segments:
        seg.qubits = tuple(seg.qubits)
    return Program(spec.n_qubits, spec.n_params, segments)


# --------------------------------------------------------------------------
# Building blocks
# --------------------------------------------------------------------------

def conv_block(conv_type: int, pair, base_slot: int) -> list:
    """Two-qubit convolution ansatz on ``pair = (a, b)`` using slots from ``base_slot``."""
    a, b = pair
    if a == b:
        raise ValidationError(f"convolution needs distinct qubits, got {pair}")
    s = base_slot
    if conv_type == 1:
        return [
            GateOp("U3", (a,), (s, s + 1, s + 2)), GateOp("U3", (b,), (s + 3, s + 4, s + 5)),
            GateOp("CNOT", (b, a)),
            GateOp("RZ", (a,), (s + 6,)), GateOp("RY", (b,), (s + 7,)),
            GateOp("CNOT", (a, b)),
            GateOp("RY", (b,), (s + 8,)),
            GateOp("CNOT", (b, a)),
            GateOp("U3", (a,), (s + 9, s + 10, s + 11)), GateOp("U3", (b,), (s + 12, s + 13, s + 14)),
        ]
    if conv_type == 2:
        return [GateOp("RY", (a,), (s,)), GateOp("RY", (b,), (s + 1,)), GateOp("CNOT", (a, b))]
    if conv_type == 3:
        return [GateOp("RY", (a,), (s,)), GateOp("RY", (b,), (s + 1,)),
                GateOp("CRZ", (a, b), (s + 2,))]
    raise ValidationError(f"unknown convolution type {conv_type!r} (expected 1, 2 or 3)")


def pool_block(kind: str, control: int, target: int, base_slot: int) -> list:
    """Pooling ansatz; ``control`` is the qubit that gets discarded."""
    if control == target:
        raise ValidationError("pooling needs distinct control and target")
    k = kind.lower()
    s = base_slot
    if k == "zx":
        return [GateOp("CRZ", (control, target), (s,)), GateOp("X", (control,)),
                GateOp("CRX", (control, target), (s + 1,))]
    if k == "generalized":
        return [GateOp("CU3", (control, target), (s, s + 1, s + 2)), GateOp("X", (control,)),
                GateOp("CU3", (control, target), (s + 3, s + 4, s + 5))]
    if k == "none":
        return []
    raise ValidationError(f"unknown pooling kind {kind!r} (expected zx, generalized or none)")


def _conv_slots(conv_type) -> int:
    if conv_type not in CONV_SLOTS:
        raise ValidationError(f"unknown convolution type {conv_type!r}")
    return CONV_SLOTS[conv_type]


def _pool_slots(kind) -> int:
    if str(kind).lower() not in POOL_SLOTS:
        raise ValidationError(f"unknown pooling kind {kind!r}")
    return POOL_SLOTS[str(kind).lower()]


def build_qcnn(n: int, layers: int, conv: int = 1, pool: str = "zx") -> CircuitSpec:
    """QCNN encoder: ``layers`` rounds of shared-weight convolution and pooling.

    Each layer convolves even-adjacent then odd-adjacent (ring) pairs of the
    active qubits and pools pairs ``(a[2i], a[2i+1])``, discarding ``a[2i]``.
    """
    if n < 2 or n & (n - 1):
        raise ValidationError(f"QCNN needs a power-of-two qubit count, got {n}")
    m = n.bit_length() - 1
    if not 0 <= layers <= m:
        raise ValidationError(f"layers must be in [0, {m}] for {n} qubits, got {layers}")
    c_slots, p_slots = _conv_slots(conv), _pool_slots(pool)
    ops, trash = [], []
    active = list(range(n))
    slot = 0
    for _ in range(layers):
        k = len(active)
        pairs = [(active[i], active[i + 1]) for i in range(0, k, 2)]
        if k > 2:
            pairs += [(active[i], active[(i + 1) % k]) for i in range(1, k, 2)]
        for pair in pairs:
            ops += conv_block(conv, pair, slot)
        slot += c_slots
        kept = []
        for i in range(0, k, 2):
            ops += pool_block(pool, active[i], active[i + 1], slot)
            trash.append(active[i])
            kept.append(active[i + 1])
        slot += p_slots
        active = kept
    return CircuitSpec(n, ops, slot, trash, active)


def _default_partition(n: int, n_compressed: int):
    if not 1 <= n_compressed < n:
        raise ValidationError(f"n_compressed must be in [1, {n - 1}], got {n_compressed}")
    return tuple(range(n - n_compressed)), tuple(range(n - n_compressed, n))


def build_arch_a(n: int, n_compressed: int = 1) -> CircuitSpec:
    """Programmable circuit of ``n`` rotation + controlled-rotation layers.

    Layer k: RZ, RY on every qubit, then qubit k-1 controls a rotation on each
    other qubit with axis X, Y, Z cycling by layer.  A final RZ, RY layer
    closes the circuit.  No slot sharing.
    """
    if n < 2:
        raise ValidationError(f"architecture A needs n >= 2, got {n}")
    ops, slot = [], 0

    def rot_layer():
        nonlocal slot
        for q in range(n):
            ops.append(GateOp("RZ", (q,), (slot,)))
            ops.append(GateOp("RY", (q,), (slot + 1,)))
            slot += 2

    for k in range(1, n + 1):
        rot_layer()
        ctrl = k - 1
        kind = "CR" + "XYZ"[(k - 1) % 3]
        for q in range(n):
            if q != ctrl:
                ops.append(GateOp(kind, (ctrl, q), (slot,)))
                slot += 1
    rot_layer()
    return CircuitSpec(n, ops, slot, *_default_partition(n, n_compressed))


def arch_b_pairs(n: int, k: int) -> list:
    pairs, q = [], 0
    while q + k < n:
        pairs.append((q, q + k))
        q += k + 1
    return pairs


def build_arch_b(n: int, n_compressed: int = 1) -> CircuitSpec:
    """``n-1`` layers of unshared Type-1 blocks on pairs ``(q, q+k)``."""
    if n < 2:
        raise ValidationError(f"architecture B needs n >= 2, got {n}")
    ops, slot = [], 0
    for k in range(1, n):
        for pair in arch_b_pairs(n, k):
            ops += conv_block(1, pair, slot)
            slot += CONV_SLOTS[1]
    return CircuitSpec(n, ops, slot, *_default_partition(n, n_compressed))


def build_encoder(architecture: str, n: int, layers: int = 3, conv: int = 1,
                  pool: str = "zx") -> CircuitSpec:
    """Dispatch on architecture name; Arch A/B get QCNN's compressed count."""
    arch = architecture.lower()
    if arch == "qcnn":
        return build_qcnn(n, layers, conv, pool)
    n_c = max(1, n >> layers)
    if arch == "arch_a":
        return build_arch_a(n, n_c)
    if arch == "arch_b":
        return build_arch_b(n, n_c)
    raise ValidationError(f"unknown architecture {architecture!r}")


def invert(spec: CircuitSpec) -> CircuitSpec:
    """Adjoint circuit: ops reversed, each replaced by its adjoint; same slots."""
    return CircuitSpec(spec.n_qubits, [op.dagger() for op in reversed(spec.ops)],
                       spec.n_params, spec.trash, spec.compressed)


# --------------------------------------------------------------------------
# Running circuits
# --------------------------------------------------------------------------

def _check_params(spec: CircuitSpec, params) -> np.ndarray:
    params = np.asarray(params, dtype=float).reshape(-1)
    if params.size != spec.n_params:
        raise ValidationError(f"expected {spec.n_params} parameters, got {params.size}")
    return params


def run_batch(spec: CircuitSpec, params, states: np.ndarray) -> np.ndarray:
    """Apply the circuit to every row of ``states`` (shape (B, 2**n))."""
    params = _check_params(spec, params)
    states = np.asarray(states, dtype=complex)
    if states.ndim == 1:
        states = states[None, :]
    if states.shape[1] != 1 << spec.n_qubits:
        raise ValidationError(
            f"states have dimension {states.shape[1]}, circuit needs {1 << spec.n_qubits}")
    return spec.program.apply(states, params)


def run(spec: CircuitSpec, params, state: StateVector) -> StateVector:
    if state.n_qubits != spec.n_qubits:
        raise ValidationError(f"state has {state.n_qubits} qubits, circuit has {spec.n_qubits}")
    return StateVector(run_batch(spec, params, state.amplitudes[None, :])[0])


def circuit_unitary(spec: CircuitSpec, params) -> np.ndarray:
    dim = 1 << spec.n_qubits
    return run_batch(spec, params, np.eye(dim, dtype=complex)).T


def count_cnots(spec: CircuitSpec) -> int:
    """Two-qubit gate count (CNOT and controlled rotations)."""
    return sum(1 for op in spec.ops if len(op.qubits) == 2)


# --------------------------------------------------------------------------
# Text serialization
# --------------------------------------------------------------------------

CIRCUIT_HEADER = "QAECIRC v1"


def _ints(xs) -> str:
    return ",".join(str(x) for x in xs) if xs else "-"


def _parse_ints(tok: str) -> tuple:
    return () if tok == "-" else tuple(int(x) for x in tok.split(","))


def dumps_circuit(spec: CircuitSpec) -> str:
    lines = [CIRCUIT_HEADER, f"qubits {spec.n_qubits}", f"params {spec.n_params}",
             f"trash {_ints(spec.trash)}", f"compressed {_ints(spec.compressed)}",
             f"ops {len(spec.ops)}"]
    for op in spec.ops:
        lines.append(f"{op.kind} {_ints(op.qubits)} {_ints(op.slots)} {int(op.adjoint)}")
    return "\n".join(lines) + "\n"


def loads_circuit(text: str) -> CircuitSpec:
    lines = text.splitlines()
    if not lines or lines[0].strip() != CIRCUIT_HEADER:
        raise ValidationError(f"not a circuit file (expected header {CIRCUIT_HEADER!r})")
    fields = {}
    for line in lines[1:6]:
        key, _, val = line.partition(" ")
        fields[key] = val.strip()
    try:
        n, n_params, n_ops = int(fields["qubits"]), int(fields["params"]), int(fields["ops"])
        trash, comp = _parse_ints(fields["trash"]), _parse_ints(fields["compressed"])
    except (KeyError, ValueError) as exc:
        raise ValidationError(f"malformed circuit header: {exc}") from None
    body = [ln for ln in lines[6:] if ln.strip()]
    if len(body) != n_ops:
        raise ValidationError(f"expected {n_ops} op lines, found {len(body)}")
    ops = []
    for i, line in enumerate(body, start=7):
        parts = line.split()
        if len(parts) != 4:
            raise ValidationError(f"line {i}: expected 'KIND qubits slots adjoint'")
        ops.append(GateOp(parts[0], _parse_ints(parts[1]), _parse_ints(parts[2]),
                          bool(int(parts[3]))))
    return CircuitSpec(n, ops, n_params, trash, comp)
