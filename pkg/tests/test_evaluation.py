import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qae.ansatz import CircuitSpec, GateOp, build_qcnn, invert
from qae.evaluation import (
    Alignment, SeparatingPlane, accuracy, aligned_z, alignment_from_plane, bloch_features,
    bloch_readout, classify, classify_batch, fit_plane, multiclass_eval,
    multiclass_eval_features, reconstruction_rate, rot_x, rot_y,
)
from qae.sim import ValidationError
from qae.svm import OneVsRest, pegasos

from oracle import random_state


def identity(n=1, compressed=0):
    trash = tuple(q for q in range(n) if q != compressed)
    return CircuitSpec(n, [], 0, trash, (compressed,))


def batch(rng, n, k):
    return np.stack([random_state(rng, n) for _ in range(k)])


# ---- Bloch readout ----------------------------------------------------------

def test_bloch_readout_examples():
    s2 = 1 / np.sqrt(2)
    assert np.allclose(bloch_readout(identity(), [], np.array([[1, 0]])), [[0, 0, 1]])
    assert np.allclose(bloch_readout(identity(), [], np.array([[s2, s2]])), [[1, 0, 0]])
    assert np.allclose(bloch_readout(identity(), [], np.array([[s2, 1j * s2]])), [[0, 1, 0]])
    # compressed qubit 1 of |10> (basis 2) points down
    v = np.zeros((1, 4), complex)
    v[0, 2] = 1
    assert np.allclose(bloch_readout(identity(2, 1), [], v), [[0, 0, -1]])


def test_bloch_readout_inside_unit_ball():
    spec = build_qcnn(4, 2)
    rng = np.random.default_rng(0)
    pts = bloch_readout(spec, rng.uniform(0, 6, spec.n_params), batch(rng, 4, 30), qubit=spec.compressed[0])
    assert np.all(np.sum(pts ** 2, axis=1) <= 1 + 1e-9)
    feats = bloch_features(spec, rng.uniform(0, 6, spec.n_params), batch(rng, 4, 5))
    assert feats.shape == (5, 3 * len(spec.compressed))
    with pytest.raises(ValidationError):
        bloch_readout(build_qcnn(4, 1), np.zeros(build_qcnn(4, 1).n_params), batch(rng, 4, 1))


# ---- plane fitting ----------------------------------------------------------

def clusters(rng, k=50, centre=(0, 0, 0.8), spread=0.1):
    c = np.asarray(centre, float)
    a = c + spread * rng.normal(size=(k, 3))
    b = -c + spread * rng.normal(size=(k, 3))
    return np.vstack([a, b]), np.array([0] * k + [1] * k)


def test_fit_plane_antipodal_clusters():
    pts, y = clusters(np.random.default_rng(0))
    plane = fit_plane(pts, y)
    assert np.linalg.norm(plane.normal) == pytest.approx(1, abs=1e-9)
    assert np.mean(plane.predict(pts) == y) == 1.0
    assert abs(plane.normal @ [0, 0, 1]) > 0.9


def test_fit_plane_identical_sets_near_chance():
    rng = np.random.default_rng(1)
    pts = rng.normal(size=(100, 3)) * 0.3
    x, y = np.vstack([pts, pts]), np.array([0] * 100 + [1] * 100)
    acc = np.mean(fit_plane(x, y).predict(x) == y)
    assert acc == pytest.approx(0.5, abs=0.05)


def test_fit_plane_deterministic_and_scale_invariant():
    pts, y = clusters(np.random.default_rng(2))
    a, b = fit_plane(pts, y, seed=3), fit_plane(pts, y, seed=3)
    assert np.array_equal(a.normal, b.normal) and a.offset == b.offset
    scaled = fit_plane(5 * pts, y, seed=3)
    assert np.array_equal(scaled.predict(5 * pts), a.predict(pts))


def test_fit_plane_needs_two_classes():
    with pytest.raises(ValidationError):
        fit_plane(np.zeros((4, 3)), [1, 1, 1, 1])
    with pytest.raises(ValidationError):
        fit_plane(np.zeros((3, 3)), [0, 1, 2])


# ---- alignment --------------------------------------------------------------

def test_alignment_examples():
    al = alignment_from_plane(SeparatingPlane(np.array([0.0, 0, 1]), 0.0, 1, 0))
    assert al.alpha == pytest.approx(0) and al.beta == pytest.approx(0)
    al = alignment_from_plane(SeparatingPlane(np.array([1.0, 0, 0]), 0.0, 1, 0))
    assert al.beta == pytest.approx(-np.pi / 2)
    with pytest.raises(ValidationError):
        alignment_from_plane(SeparatingPlane(np.array([1.0, 1, 0]), 0.0, 1, 0))


unit = st.tuples(*[st.floats(-1, 1)] * 3).map(np.array).filter(lambda v: np.linalg.norm(v) > 1e-3)


@settings(max_examples=200)
@given(v=unit)
def test_alignment_maps_normal_to_z(v):
    n = v / np.linalg.norm(v)
    al = alignment_from_plane(SeparatingPlane(n, 0.0, 1, 0))
    assert np.allclose(rot_y(al.beta) @ rot_x(al.alpha) @ n, [0, 0, 1], atol=1e-8)


def rotated_readout(spec, params, align, states):
    pts = bloch_readout(spec, params, states)
    return pts @ (rot_y(align.beta) @ rot_x(align.alpha)).T


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), offset=st.floats(-0.5, 0.5))
def test_classify_after_alignment_equals_plane_side(seed, offset):
    rng = np.random.default_rng(seed)
    spec = build_qcnn(4, 2, 1, "zx").with_partition((0, 2, 1), (3,))
    params = rng.uniform(0, 6, spec.n_params)
    states = batch(rng, 4, 40)
    n = rng.normal(size=3)
    plane = SeparatingPlane(n / np.linalg.norm(n), offset, 7, 3)
    al = alignment_from_plane(plane)
    pts = bloch_readout(spec, params, states)
    side = plane.side(pts)
    ok = np.abs(side) > 1e-9
    assert np.array_equal(classify_batch(spec, params, al, states)[ok], plane.predict(pts)[ok])
    # the gate-level rotation agrees with rotating the Bloch vectors
    assert np.allclose(aligned_z(spec, params, al, states), rotated_readout(spec, params, al, states)[:, 2],
                       atol=1e-12)


def test_classify_ties_and_basis_states():
    al = Alignment(0.0, 0.0, class_of_zero=4, other_class=9)
    spec = identity()
    assert classify(spec, [], al, np.array([1, 0])) == 4
    assert classify(spec, [], al, np.array([0, 1])) == 9
    s2 = 1 / np.sqrt(2)
    assert classify(spec, [], al, np.array([s2, s2])) == 4          # <Z> = 0 tie
    assert classify(spec, [], al, np.exp(0.7j) * np.array([0.6, 0.8])) == \
        classify(spec, [], al, np.array([0.6, 0.8]))


def test_accuracy_toy_sets():
    al = Alignment(0.0, 0.0, 0, 1)
    states = np.array([[1, 0], [1, 0], [0, 1]], complex)
    assert accuracy(identity(), [], al, states, [0, 0, 1]) == 1.0
    assert accuracy(identity(), [], al, states, [1, 1, 0]) == 0.0
    with pytest.raises(ValidationError):
        accuracy(identity(), [], al, states[:0], [])


def test_shots_estimate_is_seeded_and_close():
    spec = identity()
    states = np.tile([[0.6, 0.8]], (50, 1)).astype(complex)
    al = Alignment(0.0, 0.0, 0, 1)
    exact = aligned_z(spec, [], al, states)
    a = aligned_z(spec, [], al, states, shots=2000, rng=np.random.default_rng(1))
    b = aligned_z(spec, [], al, states, shots=2000, rng=np.random.default_rng(1))
    assert np.array_equal(a, b)
    assert abs(a.mean() - exact.mean()) < 0.02


# ---- reconstruction ---------------------------------------------------------

def test_reconstruction_rate_bounds():
    rng = np.random.default_rng(3)
    states = batch(rng, 4, 8)
    enc = build_qcnn(4, 0)
    assert reconstruction_rate(enc, [], invert(enc), [], states, tied=True) == pytest.approx(1, abs=1e-10)
    enc = build_qcnn(4, 2)
    dec = invert(enc)
    th, thd = rng.uniform(0, 6, enc.n_params), rng.uniform(0, 6, dec.n_params)
    r = reconstruction_rate(enc, th, dec, thd, states)
    assert 0 <= r < 1
    assert r == pytest.approx(reconstruction_rate(enc, th, dec, thd, states, method="circuit"), abs=1e-10)
    with pytest.raises(ValidationError):
        reconstruction_rate(enc, th, dec, thd, states, method="tomography")


def test_random_8_qubit_reconstruction_below_one():
    rng = np.random.default_rng(4)
    enc = build_qcnn(8, 3)
    dec = invert(enc)
    states = batch(rng, 8, 10)
    r = reconstruction_rate(enc, rng.uniform(0, 6, enc.n_params), dec, rng.uniform(0, 6, dec.n_params), states)
    assert 0 <= r < 1


# ---- linear classifiers -----------------------------------------------------

def test_pegasos_separable_and_errors():
    rng = np.random.default_rng(5)
    x = np.vstack([rng.normal(2, 0.3, (30, 2)), rng.normal(-2, 0.3, (30, 2))])
    y = np.array([1.0] * 30 + [-1.0] * 30)
    w, b = pegasos(x, y)
    assert np.all(np.sign(x @ w + b) == y)
    with pytest.raises(ValueError):
        pegasos(x, np.zeros(60))
    with pytest.raises(ValueError):
        pegasos(x[:0], y[:0])


def corner_features(rng, labels, dim=6):
    corners = {c: rng.choice([-1.0, 1.0], dim) for c in np.unique(labels)}
    return np.stack([corners[c] for c in labels]) + 0.05 * rng.normal(size=(len(labels), dim))


def test_multiclass_clustered_corners():
    rng = np.random.default_rng(6)
    y = np.repeat([0, 1, 2, 3], 20)
    x = corner_features(rng, y)
    while len({tuple(np.sign(r)) for r in x[::20]}) < 4:
        x = corner_features(rng, y)
    assert multiclass_eval_features(x, y, x, y) == 1.0


def test_multiclass_label_permutation():
    rng = np.random.default_rng(7)
    y = np.repeat([0, 1, 8], 30)
    x = rng.normal(size=(90, 3)) + 1.5 * np.eye(3)[np.searchsorted([0, 1, 8], y)]
    perm = {0: 8, 1: 0, 8: 1}
    y2 = np.array([perm[v] for v in y])
    a = OneVsRest().fit(x, y).predict(x)
    b = OneVsRest().fit(x, y2).predict(x)
    assert np.array_equal(np.array([perm[v] for v in a]), b)
    assert multiclass_eval_features(x, y, x, y) == multiclass_eval_features(x, y2, x, y2)


def test_multiclass_eval_on_qcnn_features():
    spec = build_qcnn(8, 2)
    assert len(spec.compressed) == 2
    rng = np.random.default_rng(8)
    params = rng.uniform(0, 6, spec.n_params)
    states = batch(rng, 8, 24)
    labels = np.repeat([0, 1, 2, 3], 6)
    assert bloch_features(spec, params, states).shape == (24, 6)
    acc = multiclass_eval(spec, params, states, labels, states, labels, k_classes=4)
    assert 0 <= acc <= 1
    with pytest.raises(ValidationError):
        multiclass_eval(spec, params, states, labels % 2, states, labels, k_classes=4)
