"""Classical-to-quantum data encodings and the PCA reducer for angle encoding."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sim import StateVector, ValidationError, set_amplitudes

ANGLE_MAX = np.pi


def angle_encode_batch(x: np.ndarray) -> np.ndarray:
    """Rows of features in [0, π] to product states ``⊗_i RY(x_i)|0>``.

    Feature ``i`` drives qubit ``i``.  Returns shape (N, 2**n).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if not np.all(np.isfinite(x)):
        raise ValidationError("angle features must be finite")
    if np.any(x < 0) or np.any(x > ANGLE_MAX):
        raise ValidationError("angle features must lie in [0, pi]")
    n = x.shape[1]
    c, s = np.cos(x / 2), np.sin(x / 2)
    out = np.ones((x.shape[0], 1), dtype=complex)
    # build from the most significant qubit down so qubit 0 ends up as bit 0
    for q in reversed(range(n)):
        out = np.einsum("ba,bk->bak", out, np.stack([c[:, q], s[:, q]], axis=1))
        out = out.reshape(x.shape[0], -1)
    return out


class AngleStates:
    """Angle-encoded states materialised on demand from a feature matrix.

    Behaves like a read-only ``(N, 2**d)`` array for row indexing, so large
    registers (16 qubits) never hold the whole encoded dataset in memory.
    """

    def __init__(self, features):
        features = np.atleast_2d(np.asarray(features, dtype=float))
        if not np.all(np.isfinite(features)):
            raise ValidationError("angle features must be finite")
        if np.any(features < 0) or np.any(features > ANGLE_MAX):
            raise ValidationError("angle features must lie in [0, pi]")
        self.features = features

    @property
    def shape(self) -> tuple:
        return self.features.shape[0], 1 << self.features.shape[1]

    def __len__(self):
        return self.features.shape[0]

    def __getitem__(self, idx) -> np.ndarray:
        if np.isscalar(idx):
            return angle_encode_batch(self.features[idx][None, :])[0]
        return angle_encode_batch(self.features[idx])

    def __array__(self, dtype=None, copy=None):
        out = angle_encode_batch(self.features)
        return out if dtype is None else out.astype(dtype)


def angle_encode(x) -> StateVector:
    return StateVector(angle_encode_batch(np.asarray(x, dtype=float)[None, :])[0])


def amplitude_encode_batch(x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    dim = x.shape[1]
    if dim < 2 or dim & (dim - 1):
        raise ValidationError(f"amplitude encoding needs a power-of-two length, got {dim}")
    norms = np.linalg.norm(x, axis=1)
    if np.any(norms == 0):
        raise ValidationError("cannot amplitude-encode a zero vector")
    return (x / norms[:, None]).astype(complex)


def amplitude_encode(x) -> StateVector:
    x = np.asarray(x, dtype=float).reshape(-1)
    v = amplitude_encode_batch(x[None, :])[0]
    return set_amplitudes(v.size.bit_length() - 1, v)


@dataclass(frozen=True, eq=False)
class Reducer:
    """PCA projection followed by a per-dimension affine map onto [0, π]."""

    mean: np.ndarray
    components: np.ndarray   # (d, N), orthonormal rows
    out_min: np.ndarray
    out_max: np.ndarray

    @property
    def d(self) -> int:
        return self.components.shape[0]

    @property
    def input_dim(self) -> int:
        return self.components.shape[1]

    def project(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.input_dim:
            raise ValidationError(
                f"reducer expects {self.input_dim} features, got {x.shape[-1]}")
        return (x - self.mean) @ self.components.T


def fit_reducer(data, d: int) -> Reducer:
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise ValidationError("fit_reducer expects a 2-D (samples, features) array")
    n_samples, dim = data.shape
    if not 1 <= d <= dim:
        raise ValidationError(f"d must be in [1, {dim}], got {d}")
    if n_samples < d:
        raise ValidationError(f"need at least {d} samples, got {n_samples}")
    mean = data.mean(axis=0)
    _, s, vt = np.linalg.svd(data - mean, full_matrices=False)
    if s.size < d or s[d - 1] <= 1e-10 * max(s[0], 1e-300):
        raise ValidationError(f"covariance has rank < {d}; cannot extract {d} components")
    comps = vt[:d]
    # sign convention: largest-magnitude entry of each component is positive
    flip = np.sign(comps[np.arange(d), np.argmax(np.abs(comps), axis=1)])
    comps = comps * flip[:, None]
    proj = (data - mean) @ comps.T
    return Reducer(mean, comps, proj.min(axis=0), proj.max(axis=0))


def reduce_and_scale(r: Reducer, x) -> np.ndarray:
    """Project and map ``[out_min, out_max]`` onto ``[0, π]``, clamping outliers."""
    z = r.project(x)
    span = r.out_max - r.out_min
    return np.clip((z - r.out_min) / span * ANGLE_MAX, 0.0, ANGLE_MAX)


REDUCER_HEADER = "QAEPCA v1"


def dumps_reducer(r: Reducer) -> str:
    fmt = lambda v: format(float(v), ".17g")  # noqa: E731
    lines = [REDUCER_HEADER, f"{r.d} {r.input_dim}"]
    lines += [fmt(v) for v in r.components.reshape(-1)]
    lines += [fmt(v) for v in r.mean]
    lines += [fmt(v) for v in r.out_min]
    lines += [fmt(v) for v in r.out_max]
    return "\n".join(lines) + "\n"


def loads_reducer(text: str) -> Reducer:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != REDUCER_HEADER:
        raise ValidationError(f"not a reducer file (expected header {REDUCER_HEADER!r})")
    try:
        d, dim = (int(v) for v in lines[1].split())
        vals = np.array([float(v) for v in lines[2:]])
    except ValueError as exc:
        raise ValidationError(f"malformed reducer file: {exc}") from None
    if vals.size != d * dim + dim + 2 * d:
        raise ValidationError("reducer file has the wrong number of values")
    comps = vals[:d * dim].reshape(d, dim)
    rest = vals[d * dim:]
    return Reducer(rest[:dim], comps, rest[dim:dim + d], rest[dim + d:])
