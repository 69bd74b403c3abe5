import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qae.ansatz import (
    CONV_SLOTS, GATE_KINDS, CircuitSpec, GateOp, arch_b_pairs, build_arch_a, build_arch_b,
    build_encoder, build_qcnn, circuit_unitary, conv_block, count_cnots, dumps_circuit,
    gate_matrix, invert, loads_circuit, pool_block, run, run_batch, u3_matrix,
)
from qae.sim import StateVector, ValidationError, new_zero_state

from oracle import circuit_matrix, op_matrix, random_state, u3 as u3_oracle

SWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)


def rand_params(spec, seed=0):
    return np.random.default_rng(seed).uniform(0, 2 * np.pi, spec.n_params)


def block_spec(ops, n=2):
    n_params = 1 + max((s for op in ops for s in op.slots), default=-1)
    return CircuitSpec(n, ops, n_params, (), tuple(range(n)))


ALL_BUILDERS = [
    ("qcnn4", lambda: build_qcnn(4, 2)),
    ("qcnn8", lambda: build_qcnn(8, 3)),
    ("qcnn4_gen_t2", lambda: build_qcnn(4, 2, conv=2, pool="generalized")),
    ("qcnn4_t3", lambda: build_qcnn(4, 1, conv=3)),
    ("arch_a4", lambda: build_arch_a(4)),
    ("arch_a5", lambda: build_arch_a(5)),
    ("arch_b4", lambda: build_arch_b(4)),
    ("arch_b6", lambda: build_arch_b(6)),
]


# ---- GateOp / CircuitSpec ---------------------------------------------------

@pytest.mark.parametrize("kind,n_slots", sorted(GATE_KINDS.items()))
def test_gateop_slot_count_enforced(kind, n_slots):
    qubits = (0,) if kind in ("RX", "RY", "RZ", "U3", "X") else (0, 1)
    GateOp(kind, qubits, tuple(range(n_slots)))
    with pytest.raises(ValidationError):
        GateOp(kind, qubits, tuple(range(n_slots + 1)))


def test_gateop_rejects_bad_input():
    with pytest.raises(ValidationError):
        GateOp("RW", (0,), (0,))
    with pytest.raises(ValidationError):
        GateOp("CNOT", (1, 1))
    with pytest.raises(ValidationError):
        GateOp("RX", (0, 1), (0,))


def test_circuit_spec_invariants():
    ops = [GateOp("RX", (0,), (0,)), GateOp("RY", (1,), (1,))]
    CircuitSpec(2, ops, 2, (0,), (1,))
    with pytest.raises(ValidationError):
        CircuitSpec(2, ops, 3, (0,), (1,))           # slot 2 never used
    with pytest.raises(ValidationError):
        CircuitSpec(2, ops, 1, (0,), (1,))           # slot 1 out of range
    with pytest.raises(ValidationError):
        CircuitSpec(2, ops, 2, (0,), (0, 1))         # overlap
    with pytest.raises(ValidationError):
        CircuitSpec(2, ops, 2, (), (1,))             # not covering
    with pytest.raises(ValidationError):
        CircuitSpec(2, [GateOp("RX", (2,), (0,))], 1, (0,), (1,))


@pytest.mark.parametrize("kind", sorted(GATE_KINDS))
def test_gate_times_adjoint_is_identity(kind):
    qubits = (0,) if kind in ("RX", "RY", "RZ", "U3", "X") else (0, 1)
    op = GateOp(kind, qubits, tuple(range(GATE_KINDS[kind])))
    params = np.random.default_rng(1).uniform(-4, 4, 3)
    m, md = gate_matrix(op, params), gate_matrix(op.dagger(), params)
    assert np.allclose(m @ md, np.eye(m.shape[0]), atol=1e-12)
    assert np.allclose(m, op_matrix(op, params), atol=1e-12)


def test_u3_standard_form():
    t, p, l = 0.3, 1.1, -0.4
    assert np.allclose(u3_matrix(t, p, l), u3_oracle(t, p, l))
    m = u3_matrix(t, p, l)
    assert np.allclose(m.conj().T @ m, np.eye(2), atol=1e-12)


# ---- building blocks --------------------------------------------------------

@pytest.mark.parametrize("conv_type,slots", [(1, 15), (2, 2), (3, 3)])
def test_conv_block_slot_counts(conv_type, slots):
    ops = conv_block(conv_type, (0, 1), 0)
    used = sorted({s for op in ops for s in op.slots})
    assert used == list(range(slots)) and CONV_SLOTS[conv_type] == slots


def test_conv_block_errors():
    with pytest.raises(ValidationError):
        conv_block(4, (0, 1), 0)
    with pytest.raises(ValidationError):
        conv_block(1, (2, 2), 0)


def test_type1_block_at_zero_is_unitary_swap():
    # The three alternating CNOTs make the zero-angle block a SWAP, not I.
    spec = block_spec(conv_block(1, (0, 1), 0))
    u = circuit_unitary(spec, np.zeros(15))
    assert np.allclose(u.conj().T @ u, np.eye(4), atol=1e-12)
    assert np.allclose(u, SWAP, atol=1e-12)


@pytest.mark.parametrize("kind,slots", [("zx", 2), ("generalized", 6)])
def test_pool_block_slots_and_unitarity(kind, slots):
    ops = pool_block(kind, 0, 1, 0)
    assert sorted({s for op in ops for s in op.slots}) == list(range(slots))
    spec = block_spec(ops)
    u = circuit_unitary(spec, rand_params(spec))
    assert np.allclose(u.conj().T @ u, np.eye(4), atol=1e-12)
    assert ops[0].qubits[0] == 0     # control (discarded qubit) listed first


def test_zx_pool_at_zero_flips_control():
    spec = block_spec(pool_block("zx", 0, 1, 0))
    out = run(spec, np.zeros(2), new_zero_state(2)).amplitudes
    assert np.allclose(out, [0, 1, 0, 0])           # qubit 0 (control) flipped


def test_pool_block_errors():
    with pytest.raises(ValidationError):
        pool_block("xy", 0, 1, 0)
    with pytest.raises(ValidationError):
        pool_block("zx", 1, 1, 0)


# ---- builders ---------------------------------------------------------------

def test_qcnn_8_3():
    spec = build_qcnn(8, 3, 1, "zx")
    assert spec.n_params == 3 * (15 + 2) == 51
    assert len(spec.compressed) == 1 and len(spec.trash) == 7
    assert spec.trash == (0, 2, 4, 6, 1, 5, 3) and spec.compressed == (7,)


def test_qcnn_layer_variants():
    assert len(build_qcnn(8, 2).compressed) == 2
    s16 = build_qcnn(16, 4)
    assert len(s16.compressed) == 1 and s16.n_params == 4 * 17


@pytest.mark.parametrize("layers", [1, 2, 3])
def test_qcnn_param_count_independent_of_n(layers):
    counts = {build_qcnn(n, layers).n_params for n in (8, 16)}
    assert counts == {layers * 17}
    assert build_qcnn(8, layers, 2, "generalized").n_params == layers * (2 + 6)


def test_qcnn_errors():
    with pytest.raises(ValidationError):
        build_qcnn(6, 1)
    with pytest.raises(ValidationError):
        build_qcnn(8, 4)


def test_qcnn_pairing_layer1():
    spec = build_qcnn(8, 1, conv=2, pool="zx")
    cnots = [op.qubits for op in spec.ops if op.kind == "CNOT"]
    even = [(0, 1), (2, 3), (4, 5), (6, 7)]
    odd = [(1, 2), (3, 4), (5, 6), (7, 0)]
    assert cnots == even + odd
    pools = [op.qubits for op in spec.ops if op.kind == "CRZ"]
    assert pools == even


def test_qcnn_two_active_skips_odd_sublayer():
    spec = build_qcnn(2, 1, conv=2)
    assert [op.qubits for op in spec.ops if op.kind == "CNOT"] == [(0, 1)]


def test_arch_a_counts_and_identity():
    spec = build_arch_a(8)
    assert spec.n_params == 8 * (16 + 7) + 16 == 200
    assert spec.compressed == (7,) and len(spec.trash) == 7
    kinds = [op.kind for op in spec.ops if len(op.qubits) == 2]
    assert len(kinds) == 8 * 7
    assert [kinds[7 * k] for k in range(8)] == ["CRX", "CRY", "CRZ"] * 2 + ["CRX", "CRY"]
    small = build_arch_a(4)
    assert np.allclose(circuit_unitary(small, np.zeros(small.n_params)), np.eye(16))


def test_arch_b_layout():
    assert arch_b_pairs(8, 1) == [(0, 1), (2, 3), (4, 5), (6, 7)]
    assert arch_b_pairs(8, 2) == [(0, 2), (3, 5)]
    assert arch_b_pairs(8, 7) == [(0, 7)]
    spec = build_arch_b(8)
    layers = [k for k in range(1, 8) if arch_b_pairs(8, k)]
    assert len(layers) == 8 - 1
    n_blocks = sum(len(arch_b_pairs(8, k)) for k in range(1, 8))
    assert spec.n_params == 15 * n_blocks


def test_arch_b_at_zero_is_a_permutation():
    spec = build_arch_b(4)
    u = circuit_unitary(spec, np.zeros(spec.n_params))
    assert np.allclose(np.abs(u), np.round(np.abs(u)), atol=1e-12)
    assert np.allclose(u.conj().T @ u, np.eye(16), atol=1e-12)


def test_builders_reject_small_n():
    with pytest.raises(ValidationError):
        build_arch_a(1)
    with pytest.raises(ValidationError):
        build_arch_b(1)
    with pytest.raises(ValidationError):
        build_encoder("arch_c", 8)


def test_build_encoder_matches_qcnn_compression():
    assert len(build_encoder("arch_a", 8, 2).compressed) == 2
    assert build_encoder("arch_b", 8, 3).compressed == (7,)
    assert build_encoder("qcnn", 8, 3).n_params == 51


@pytest.mark.parametrize("name,builder", ALL_BUILDERS)
def test_partition_and_norm_preservation(name, builder):
    spec = builder()
    assert set(spec.trash) | set(spec.compressed) == set(range(spec.n_qubits))
    assert not set(spec.trash) & set(spec.compressed)
    rng = np.random.default_rng(7)
    states = np.stack([random_state(rng, spec.n_qubits) for _ in range(100)])
    out = run_batch(spec, rand_params(spec, 3), states)
    assert np.allclose(np.linalg.norm(out, axis=1), 1.0, atol=1e-10)


@pytest.mark.parametrize("name,builder", ALL_BUILDERS)
def test_invert_undoes_run(name, builder):
    spec = builder()
    theta = rand_params(spec, 5)
    rng = np.random.default_rng(9)
    psi = np.stack([random_state(rng, spec.n_qubits) for _ in range(5)])
    back = run_batch(invert(spec), theta, run_batch(spec, theta, psi))
    assert np.allclose(back, psi, atol=1e-10)
    twice = invert(invert(spec))
    assert np.allclose(run_batch(twice, theta, psi), run_batch(spec, theta, psi), atol=1e-12)


@pytest.mark.parametrize("name,builder", ALL_BUILDERS[:6:2])
def test_builders_match_dense_oracle(name, builder):
    spec = builder()
    theta = rand_params(spec, 11)
    assert np.allclose(circuit_unitary(spec, theta), circuit_matrix(spec, theta), atol=1e-10)


@st.composite
def random_circuits(draw):
    n = draw(st.integers(2, 4))
    n_params = 0
    ops = []
    for _ in range(draw(st.integers(1, 12))):
        kind = draw(st.sampled_from(sorted(GATE_KINDS)))
        k = GATE_KINDS[kind]
        if kind in ("RX", "RY", "RZ", "U3", "X"):
            qubits = (draw(st.integers(0, n - 1)),)
        else:
            q1 = draw(st.integers(0, n - 1))
            qubits = (q1, draw(st.integers(0, n - 1).filter(lambda q: q != q1)))
        ops.append(GateOp(kind, qubits, tuple(range(n_params, n_params + k)),
                          draw(st.booleans())))
        n_params += k
    return CircuitSpec(n, ops, n_params, (0,), tuple(range(1, n)))


@settings(max_examples=40, deadline=None)
@given(spec=random_circuits(), seed=st.integers(0, 1000))
def test_random_circuits_match_oracle(spec, seed):
    theta = np.random.default_rng(seed).uniform(-7, 7, spec.n_params)
    assert np.allclose(circuit_unitary(spec, theta), circuit_matrix(spec, theta), atol=1e-10)
    u = circuit_unitary(invert(spec), theta) @ circuit_unitary(spec, theta)
    assert np.allclose(u, np.eye(u.shape[0]), atol=1e-10)


# ---- run / invert edge cases -----------------------------------------------

def test_run_examples():
    empty = CircuitSpec(1, [], 0, (), (0,))
    v = StateVector(np.array([0.6, 0.8]))
    assert np.allclose(run(empty, [], v).amplitudes, v.amplitudes)
    ry = CircuitSpec(1, [GateOp("RY", (0,), (0,))], 1, (), (0,))
    assert np.allclose(run(ry, [np.pi], new_zero_state(1)).amplitudes, [0, 1], atol=1e-12)
    with pytest.raises(ValidationError):
        run(ry, [1.0, 2.0], new_zero_state(1))
    assert invert(empty).ops == ()


def test_count_cnots():
    assert count_cnots(block_spec(conv_block(1, (0, 1), 0))) == 3


# ---- serialization ----------------------------------------------------------

@pytest.mark.parametrize("name,builder", ALL_BUILDERS)
def test_circuit_text_round_trip(name, builder):
    spec = invert(builder())
    back = loads_circuit(dumps_circuit(spec))
    assert back.ops == spec.ops and back.n_params == spec.n_params
    assert back.trash == spec.trash and back.compressed == spec.compressed
    assert dumps_circuit(back) == dumps_circuit(spec)


def test_circuit_text_errors():
    with pytest.raises(ValidationError):
        loads_circuit("QAECIRC v2\n")
    text = dumps_circuit(build_qcnn(4, 1))
    with pytest.raises(ValidationError):
        loads_circuit("\n".join(text.splitlines()[:-1]))
