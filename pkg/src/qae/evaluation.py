"""Bloch-sphere readout, separating plane, alignment and accuracy metrics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ansatz import CircuitSpec, prim_matrix
from .encoding import AngleStates
from .sim import ValidationError, apply_matrix_inplace, bloch_batch
from .svm import LAMBDA, PASSES, OneVsRest, pegasos
from .training import _as_batch, mirror_overlaps, reconstruction_overlaps


@dataclass(frozen=True)
class SeparatingPlane:
    """Decision rule ``normal·r + offset > 0 -> positive``; ``normal`` is unit length."""

    normal: np.ndarray
    offset: float
    positive: int
    negative: int

    def side(self, points) -> np.ndarray:
        return np.asarray(points) @ self.normal + self.offset

    def predict(self, points) -> np.ndarray:
        return np.where(self.side(points) > 0, self.positive, self.negative)


@dataclass(frozen=True)
class Alignment:
    """RX(alpha) then RY(beta) on the compressed qubit; ``<Z> >= threshold -> class_of_zero``.

    ``threshold`` is minus the plane offset, so it is 0 for a plane through
    the origin.
    """

    alpha: float
    beta: float
    class_of_zero: int
    other_class: int
    threshold: float = 0.0


# rows per block are chosen so one block holds about this many amplitudes
BLOCK_AMPLITUDES = 1 << 21


def row_blocks(states):
    """Yield consecutive row blocks of a state batch (array or :class:`AngleStates`)."""
    if not isinstance(states, AngleStates):
        states = _as_batch(states)
    n_rows, dim = states.shape
    step = max(1, BLOCK_AMPLITUDES // dim)
    for i in range(0, n_rows, step):
        yield states[i:i + step]


def encode_compressed(spec: CircuitSpec, params, states) -> np.ndarray:
    return spec.program.apply(_as_batch(states), np.asarray(params, dtype=float))


def _map_blocks(spec, params, states, fn) -> np.ndarray:
    params = np.asarray(params, dtype=float)
    return np.concatenate([fn(spec.program.apply(blk, params)) for blk in row_blocks(states)])


def bloch_readout(spec: CircuitSpec, params, states, qubit: int | None = None) -> np.ndarray:
    """(<X>, <Y>, <Z>) of the compressed qubit for every sample, shape (N, 3)."""
    if qubit is None:
        if len(spec.compressed) != 1:
            raise ValidationError("bloch_readout needs exactly one compressed qubit; pass qubit=")
        qubit = spec.compressed[0]
    return _map_blocks(spec, params, states, lambda psi: bloch_batch(psi, qubit, spec.n_qubits))


def bloch_features(spec: CircuitSpec, params, states) -> np.ndarray:
    """Concatenated Bloch vectors of every compressed qubit, shape (N, 3c)."""
    return _map_blocks(spec, params, states, lambda psi: np.hstack(
        [bloch_batch(psi, q, spec.n_qubits) for q in spec.compressed]))


def fit_plane(points, labels, lam: float = LAMBDA, passes: int = PASSES,
              seed: int = 0) -> SeparatingPlane:
    points = np.asarray(points, dtype=float)
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if classes.size != 2:
        raise ValidationError(f"fit_plane needs exactly two classes, got {classes.tolist()}")
    neg, pos = int(classes[0]), int(classes[1])
    w, b = pegasos(points, np.where(labels == pos, 1.0, -1.0), lam, passes, seed)
    norm = np.linalg.norm(w)
    if norm == 0:
        raise ValidationError("degenerate separating plane (zero normal)")
    return SeparatingPlane(w / norm, b / norm, pos, neg)


def rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])


def alignment_from_plane(plane: SeparatingPlane, points=None, labels=None) -> Alignment:
    n = np.asarray(plane.normal, dtype=float)
    if not np.isclose(np.linalg.norm(n), 1.0, atol=1e-9):
        raise ValidationError("plane normal must be a unit vector")
    alpha = float(np.arctan2(n[1], n[2]))
    n1 = rot_x(alpha) @ n
    beta = float(-np.arctan2(n1[0], n1[2]))
    threshold = -float(plane.offset)
    zero, other = plane.positive, plane.negative
    if points is not None and labels is not None:
        z = (np.asarray(points, dtype=float) @ (rot_y(beta) @ rot_x(alpha)).T)[:, 2]
        up = np.asarray(labels)[z >= threshold]
        if up.size:
            vals, counts = np.unique(up, return_counts=True)
            zero = int(vals[np.argmax(counts)])
            other = plane.negative if zero == plane.positive else plane.positive
    return Alignment(alpha, beta, zero, other, threshold)


def aligned_z(spec: CircuitSpec, params, align: Alignment, states, shots: int = 0,
              rng: np.random.Generator | None = None) -> np.ndarray:
    """<Z> of the compressed qubit after the alignment gates.

    With ``shots > 0`` the exact value is replaced by a binomial estimate.
    """
    if len(spec.compressed) != 1:
        raise ValidationError("classification needs exactly one compressed qubit")
    q, n = spec.compressed[0], spec.n_qubits
    rx, ry = prim_matrix("RX", align.alpha), prim_matrix("RY", align.beta)

    def readout(psi):
        apply_matrix_inplace(psi, rx, (q,), n)
        apply_matrix_inplace(psi, ry, (q,), n)
        return bloch_batch(psi, q, n)[:, 2]
    z = _map_blocks(spec, params, states, readout)
    if shots:
        rng = rng if rng is not None else np.random.default_rng(0)
        p0 = np.clip((1 + z) / 2, 0.0, 1.0)
        z = 2 * rng.binomial(shots, p0) / shots - 1
    return z


def classify_batch(spec, params, align: Alignment, states, shots: int = 0, rng=None) -> np.ndarray:
    z = aligned_z(spec, params, align, states, shots, rng)
    return np.where(z >= align.threshold, align.class_of_zero, align.other_class)


def classify(spec, params, align: Alignment, sample) -> int:
    return int(classify_batch(spec, params, align, sample)[0])


def accuracy(spec, params, align: Alignment, states, labels, shots: int = 0, rng=None) -> float:
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValidationError("accuracy needs a non-empty test set")
    pred = classify_batch(spec, params, align, states, shots, rng)
    return float(np.mean(pred == labels))


def reconstruction_rate(enc, theta, dec, theta_dec, states, tied: bool = False,
                        method: str = "mirror", chunk: int = 64) -> float:
    """Mean overlap ``|<φ|ψ_out>|²`` over samples.

    ``method="circuit"`` simulates the full encoder/decoder register;
    ``"mirror"`` uses the equivalent n-qubit form and is much cheaper.
    """
    if method == "mirror":
        theta_dec = theta if tied else theta_dec
        vals = np.concatenate([mirror_overlaps(enc, theta, dec, theta_dec, blk)
                               for blk in row_blocks(states)])
    elif method == "circuit":
        batch = _as_batch(states)
        vals = np.concatenate([
            reconstruction_overlaps(enc, theta, dec, theta_dec, batch[i:i + chunk], tied)
            for i in range(0, batch.shape[0], chunk)])
    else:
        raise ValidationError(f"unknown method {method!r}")
    return float(np.clip(np.mean(vals), 0.0, 1.0))


def multiclass_eval(spec, params, train_states, train_labels, test_states, test_labels,
                    k_classes: int | None = None, seed: int = 0) -> float:
    """One-vs-rest accuracy on concatenated per-qubit Bloch features."""
    train_labels = np.asarray(train_labels)
    present = np.unique(train_labels)
    if k_classes is not None and present.size < k_classes:
        raise ValidationError(f"expected {k_classes} classes, found {present.size}")
    clf = OneVsRest(seed=seed).fit(bloch_features(spec, params, train_states), train_labels)
    pred = clf.predict(bloch_features(spec, params, test_states))
    return float(np.mean(pred == np.asarray(test_labels)))


def multiclass_eval_features(train_x, train_y, test_x, test_y, seed: int = 0) -> float:
    clf = OneVsRest(seed=seed).fit(train_x, train_y)
    return float(np.mean(clf.predict(test_x) == np.asarray(test_y)))
