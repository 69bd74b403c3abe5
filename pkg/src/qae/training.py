"""Trash-qubit losses, analytic gradients and mini-batch SGD.

Two gradient routes are provided and must agree to round-off:

* ``method="shift"`` evaluates the circuit at shifted angles.  Rotations with a
  Pauli/2 (or projector) generator use the two-term rule at ``±π/2``;
  controlled rotations use the four-term rule at ``±π/2, ±3π/2``.  U3/CU3 are
  split into three primitive rotations, and slots shared between ops
  accumulate every contribution.
* ``method="adjoint"`` back-propagates a co-state through the compiled circuit
  and evaluates every primitive derivative from a 2x2/4x4 reduced operator.
  Its cost is a small multiple of one forward pass, which is what makes the
  desk-scale experiments fit in minutes.  This is the training default.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .ansatz import (
    SHIFT_RULES, CircuitSpec, GateOp, Program, build_encoder, invert, prim_matrix, _embed,
)
from .encoding import AngleStates
from .sim import (
    DensityMatrix, StateVector, ValidationError, apply_matrix, apply_matrix_inplace, fidelity,
    local_cross_sum,
)

BCE_EPS = 1e-12
LOSSES = ("mse", "bce")
ARCHITECTURES = ("qcnn", "arch_a", "arch_b")
ENCODINGS = ("angle", "amplitude")
MODES = ("encoder_only", "full_qae")
GRADIENT_METHODS = ("adjoint", "shift")


# --------------------------------------------------------------------------
# Losses on trash-qubit probabilities.  ``p`` has shape (..., T).
# --------------------------------------------------------------------------

def mse_loss(p) -> float | np.ndarray:
    """Mean squared distance of the trash |1> probabilities from the |0> target."""
    p = np.asarray(p, dtype=float)
    return np.mean(p ** 2, axis=-1)


def bce_loss(p) -> float | np.ndarray:
    p = np.clip(np.asarray(p, dtype=float), BCE_EPS, 1 - BCE_EPS)
    return -np.mean(np.log1p(-p), axis=-1)


def _loss_and_slope(name: str, p: np.ndarray):
    t = p.shape[-1]
    if name == "mse":
        return mse_loss(p), 2 * p / t
    if name == "bce":
        inside = (p >= BCE_EPS) & (p <= 1 - BCE_EPS)
        pc = np.clip(p, BCE_EPS, 1 - BCE_EPS)
        return bce_loss(p), np.where(inside, 1.0 / (t * (1 - pc)), 0.0)
    raise ValidationError(f"unknown loss {name!r} (expected one of {', '.join(LOSSES)})")


def _as_batch(states) -> np.ndarray:
    if isinstance(states, StateVector):
        return states.amplitudes[None, :]
    if isinstance(states, (list, tuple)) and states and isinstance(states[0], StateVector):
        return np.stack([s.amplitudes for s in states])
    arr = np.asarray(states, dtype=complex)
    return arr[None, :] if arr.ndim == 1 else arr


def _trash_masks(spec: CircuitSpec) -> np.ndarray:
    idx = np.arange(1 << spec.n_qubits)
    return np.stack([(idx >> q) & 1 for q in spec.trash]).astype(float)  # (T, dim)


def trash_probs(spec: CircuitSpec, params, states) -> np.ndarray:
    """|1> probability of each trash qubit after encoding, in trash order.

    Returns shape (T,) for a single StateVector and (B, T) for a batch.
    """
    if not spec.trash:
        raise ValidationError("circuit has no trash qubits")
    single = isinstance(states, StateVector)
    psi = spec.program.apply(_as_batch(states), np.asarray(params, dtype=float))
    p = (np.abs(psi) ** 2) @ _trash_masks(spec).T
    return p[0] if single else p


# --------------------------------------------------------------------------
# Adjoint engine
# --------------------------------------------------------------------------

def adjoint_backward(program: Program, params, psi: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Gradient ``dL/dθ = 2 Re <λ|dψ/dθ>`` given the output state and co-state.

    ``lam`` must already be ``∂L/∂ψ̄`` of the (batch-averaged) loss.
    """
    n = program.n_qubits
    grad = np.zeros(program.n_params)
    psi = np.array(psi, dtype=complex, order="C", copy=True)
    lam = np.array(lam, dtype=complex, order="C", copy=True)
    local = program.local_matrices(params)
    gens = program.generators()
    for seg, mats, hs in zip(reversed(program.segments), reversed(local), reversed(gens)):
        u = mats[0]
        for m in mats[1:]:
            u = m @ u
        if any(h is not None for h in hs):
            c = local_cross_sum(psi, lam, seg.qubits)
            for prim, m, h in zip(reversed(seg.prims), reversed(mats), reversed(hs)):
                if h is not None:
                    grad[prim.slot] += prim.sign * 2.0 * np.imag(np.trace(h @ c))
                c = m.conj().T @ c @ m
        ud = u.conj().T
        apply_matrix_inplace(psi, ud, seg.qubits, n)
        apply_matrix_inplace(lam, ud, seg.qubits, n)
    return grad


def _trash_value_and_grad_adjoint(spec, params, batch, loss):
    prog = spec.program
    psi = prog.apply(batch, params)
    masks = _trash_masks(spec)
    p = (np.abs(psi) ** 2) @ masks.T
    vals, slope = _loss_and_slope(loss, p)
    b = batch.shape[0]
    lam = (slope @ masks) * psi / b
    return float(np.mean(vals)), adjoint_backward(prog, params, psi, lam)


# --------------------------------------------------------------------------
# Parameter-shift engine
# --------------------------------------------------------------------------

def shift_jacobian(program: Program, params, psi0: np.ndarray, observe) -> np.ndarray:
    """d(observe)/dθ by the parameter-shift rule.

    ``observe`` maps a batch of final states (B, dim) to expectation values of
    fixed observables, shape (B, K).  Returns shape (n_params, B, K).
    """
    n = program.n_qubits
    local = program.local_matrices(params)
    fused = []
    for mats in local:
        u = mats[0]
        for m in mats[1:]:
            u = m @ u
        fused.append(u)
    prefix = [psi0]
    for seg, u in zip(program.segments, fused):
        prefix.append(apply_matrix(prefix[-1], u, seg.qubits, n))
    k = observe(prefix[-1]).shape[-1]
    jac = np.zeros((program.n_params, psi0.shape[0], k))
    for j, seg in enumerate(program.segments):
        for i, prim in enumerate(seg.prims):
            if prim.slot < 0:
                continue
            angle = prim.sign * params[prim.slot]
            d = 0.0
            for coeff, shift in SHIFT_RULES[prim.kind]:
                mats = list(local[j])
                mats[i] = _embed(prim_matrix(prim.kind, angle + shift), prim.qubits, seg.qubits)
                u = mats[0]
                for m in mats[1:]:
                    u = m @ u
                psi = apply_matrix(prefix[j], u, seg.qubits, n)
                for seg2, u2 in zip(program.segments[j + 1:], fused[j + 1:]):
                    psi = apply_matrix(psi, u2, seg2.qubits, n)
                d = d + coeff * observe(psi)
            jac[prim.slot] += prim.sign * d
    return jac


def _trash_value_and_grad_shift(spec, params, batch, loss):
    masks = _trash_masks(spec)

    def observe(psi):
        return (np.abs(psi) ** 2) @ masks.T

    p = observe(spec.program.apply(batch, params))
    vals, slope = _loss_and_slope(loss, p)
    jac = shift_jacobian(spec.program, params, batch, observe)
    grad = np.einsum("jbk,bk->j", jac, slope) / batch.shape[0]
    return float(np.mean(vals)), grad


def value_and_grad(loss: str, spec: CircuitSpec, params, batch, method: str = "adjoint"):
    """Mean batch loss and its gradient with respect to every parameter slot."""
    params = np.asarray(params, dtype=float)
    if params.size != spec.n_params:
        raise ValidationError(f"expected {spec.n_params} parameters, got {params.size}")
    batch = _as_batch(batch)
    if batch.shape[0] == 0:
        raise ValidationError("gradient needs a non-empty batch")
    if method == "adjoint":
        return _trash_value_and_grad_adjoint(spec, params, batch, loss)
    if method == "shift":
        return _trash_value_and_grad_shift(spec, params, batch, loss)
    raise ValidationError(f"unknown gradient method {method!r}")


def gradient(loss: str, spec: CircuitSpec, params, batch, method: str = "shift") -> np.ndarray:
    return value_and_grad(loss, spec, params, batch, method)[1]


def batch_loss(loss: str, spec: CircuitSpec, params, batch) -> float:
    p = trash_probs(spec, params, _as_batch(batch))
    return float(np.mean(_loss_and_slope(loss, p)[0]))


# --------------------------------------------------------------------------
# Reconstruction (encoder + decoder)
# --------------------------------------------------------------------------

def qae_circuit(enc: CircuitSpec, dec: CircuitSpec, tied: bool = False):
    """Encoder and decoder on one ``n + t`` qubit register.

    The encoder acts on qubits ``0..n-1``; fresh reference qubits occupy
    ``n..n+t-1``.  Decoder qubit ``dec.compressed[i]`` is wired to
    ``enc.compressed[i]`` and ``dec.trash[j]`` to reference qubit ``n + j``.
    Returns the combined spec and the physical qubit of each decoder qubit.
    """
    n, t = enc.n_qubits, len(enc.trash)
    if dec.n_qubits != n or len(dec.compressed) != len(enc.compressed):
        raise ValidationError("decoder is not dimensioned for this encoder")
    wiring = {}
    for dq, eq in zip(dec.compressed, enc.compressed):
        wiring[dq] = eq
    for j, dq in enumerate(dec.trash):
        wiring[dq] = n + j
    if tied:
        if dec.n_params != enc.n_params:
            raise ValidationError("tied decoder must share the encoder's parameter count")
        offset, total = 0, enc.n_params
    else:
        offset, total = enc.n_params, enc.n_params + dec.n_params
    ops = list(enc.ops) + [
        GateOp(op.kind, tuple(wiring[q] for q in op.qubits),
               tuple(s + offset for s in op.slots), op.adjoint) for op in dec.ops]
    out = tuple(wiring[q] for q in range(n))
    rest = tuple(q for q in range(n + t) if q not in out)
    return CircuitSpec(n + t, ops, total, rest, out), out


def _axes_for(qubits, n):
    # little-endian index over ``qubits`` in list order: last one most significant
    return [1 + (n - 1 - q) for q in reversed(qubits)]


def gather(psi: np.ndarray, rows, cols, n: int) -> np.ndarray:
    """Reshape (B, 2**n) into (B, 2**len(rows), 2**len(cols)) by qubit lists."""
    b = psi.shape[0]
    t = psi.reshape((b,) + (2,) * n).transpose([0] + _axes_for(rows, n) + _axes_for(cols, n))
    return t.reshape(b, 1 << len(rows), 1 << len(cols))


def scatter(mat: np.ndarray, rows, cols, n: int) -> np.ndarray:
    """Inverse of :func:`gather`."""
    b = mat.shape[0]
    perm = [0] + _axes_for(rows, n) + _axes_for(cols, n)
    t = mat.reshape((b,) + (2,) * n).transpose(np.argsort(perm))
    return t.reshape(b, -1)


def _pad_reference(batch: np.ndarray, t: int) -> np.ndarray:
    out = np.zeros((batch.shape[0], batch.shape[1] << t), dtype=complex)
    out[:, :batch.shape[1]] = batch
    return out


def reconstruction_overlaps(enc, theta, dec, theta_dec, states, tied: bool = False) -> np.ndarray:
    """Per-sample ``<φ|ρ_out|φ>`` from the ``c + 2t`` qubit pure-state circuit."""
    batch = _as_batch(states)
    full, out = qae_circuit(enc, dec, tied)
    params = np.asarray(theta, float) if tied else np.concatenate([theta, theta_dec])
    t = len(enc.trash)
    psi = full.program.apply(_pad_reference(batch, t), params)
    rest = [q for q in range(full.n_qubits) if q not in out]
    m = gather(psi, rest, list(out), full.n_qubits)
    result = np.empty(batch.shape[0])
    for i in range(batch.shape[0]):
        rho_out = DensityMatrix(m[i].T @ m[i].conj())
        result[i] = fidelity(rho_out, StateVector(batch[i]))
    return result


def reconstruction_loss(enc, theta, dec, theta_dec, state, tied: bool = False) -> float:
    """``1 - F(ρ_out, |φ><φ|)`` for a single input state."""
    return float(1.0 - reconstruction_overlaps(enc, theta, dec, theta_dec, state, tied)[0])


def _mirror_parts(enc, theta, dec, theta_dec, batch):
    n = enc.n_qubits
    dinv = invert(dec)
    psi_e = enc.program.apply(batch, theta)
    psi_d = dinv.program.apply(batch, theta_dec)
    m = gather(psi_e, list(enc.trash), list(enc.compressed), n)          # (B, 2^t, 2^c)
    u = gather(psi_d, list(dec.trash), list(dec.compressed), n)[:, 0, :]  # (B, 2^c)
    a = np.einsum("btc,bc->bt", m, u.conj())
    return dinv, psi_e, psi_d, m, u, a


def mirror_overlaps(enc, theta, dec, theta_dec, states) -> np.ndarray:
    """Same overlaps as :func:`reconstruction_overlaps`, on ``n`` qubits only.

    With ``Eφ = Σ M[T,c]|T>|c>`` and ``u = <c,0|D†|φ>`` the overlap equals
    ``Σ_T |Σ_c M[T,c] conj(u_c)|²``.
    """
    batch = _as_batch(states)
    *_, a = _mirror_parts(enc, np.asarray(theta, float), dec, np.asarray(theta_dec, float), batch)
    return np.sum(np.abs(a) ** 2, axis=1)


def reconstruction_value_and_grad(enc, theta, dec, theta_dec, batch, tied: bool = False):
    """Mean ``1 - overlap`` and gradient (adjoint route) over the batch.

    Gradient layout is ``[∂θ, ∂θ']`` (untied) or ``∂θ`` (tied, ``dec = E†``).
    """
    batch = _as_batch(batch)
    theta = np.asarray(theta, float)
    theta_dec = theta if tied else np.asarray(theta_dec, float)
    n, b = enc.n_qubits, batch.shape[0]
    dinv, psi_e, psi_d, m, u, a = _mirror_parts(enc, theta, dec, theta_dec, batch)
    overlap = np.sum(np.abs(a) ** 2, axis=1)
    lam_e = scatter(-np.einsum("bt,bc->btc", a, u) / b, list(enc.trash), list(enc.compressed), n)
    lam_u = -np.einsum("btc,bt->bc", m, a.conj()) / b
    lam_d_mat = np.zeros((b, 1 << len(dec.trash), 1 << len(dec.compressed)), dtype=complex)
    lam_d_mat[:, 0, :] = lam_u
    lam_d = scatter(lam_d_mat, list(dec.trash), list(dec.compressed), n)
    g_e = adjoint_backward(enc.program, theta, psi_e, lam_e)
    g_d = adjoint_backward(dinv.program, theta_dec, psi_d, lam_d)
    grad = g_e + g_d if tied else np.concatenate([g_e, g_d])
    return float(np.mean(1.0 - overlap)), grad


def reconstruction_grad_shift(enc, theta, dec, theta_dec, batch, tied: bool = False):
    """Parameter-shift gradient of the mean reconstruction loss on the full circuit."""
    batch = _as_batch(batch)
    full, out = qae_circuit(enc, dec, tied)
    params = np.asarray(theta, float) if tied else np.concatenate([theta, theta_dec])
    t = len(enc.trash)
    rest = [q for q in range(full.n_qubits) if q not in out]
    phis = batch

    def observe(psi):
        m = gather(psi, rest, list(out), full.n_qubits)
        amp = np.einsum("brj,bj->br", m, phis.conj())
        return np.sum(np.abs(amp) ** 2, axis=1, keepdims=True)

    jac = shift_jacobian(full.program, params, _pad_reference(batch, t), observe)
    return -jac[:, :, 0].mean(axis=1)


# --------------------------------------------------------------------------
# Configuration, reports and the SGD loop
# --------------------------------------------------------------------------

@dataclass
class TrainConfig:
    architecture: str = "qcnn"
    layers: int = 3
    conv_type: int = 1
    pool_kind: str = "zx"
    encoding: str = "angle"
    loss: str = "bce"
    learning_rate: float = 0.005
    batch_size: int = 32
    iterations: int = 64
    seed: int = 0
    classes: tuple = (0, 1)
    n_qubits: int = 8
    mode: str = "encoder_only"
    tied_decoder: bool = False
    gradient: str = "adjoint"

    def __post_init__(self):
        self.classes = tuple(int(c) for c in self.classes)
        self.validate()

    def validate(self):
        checks = [
            ("architecture", self.architecture in ARCHITECTURES, ARCHITECTURES),
            ("encoding", self.encoding in ENCODINGS, ENCODINGS),
            ("loss", self.loss in LOSSES, LOSSES),
            ("mode", self.mode in MODES, MODES),
            ("gradient", self.gradient in GRADIENT_METHODS, GRADIENT_METHODS),
            ("pool_kind", self.pool_kind in ("zx", "generalized", "none"),
             ("zx", "generalized", "none")),
            ("conv_type", self.conv_type in (1, 2, 3), (1, 2, 3)),
        ]
        for name, ok, allowed in checks:
            if not ok:
                raise ValidationError(
                    f"{name}: invalid value {getattr(self, name)!r} "
                    f"(expected one of {', '.join(map(str, allowed))})")
        if not self.learning_rate >= 0:
            raise ValidationError("learning_rate: must be >= 0")
        if self.batch_size < 1:
            raise ValidationError("batch_size: must be >= 1")
        if self.iterations < 1:
            raise ValidationError("iterations: must be >= 1")
        if len(self.classes) < 2 or len(set(self.classes)) != len(self.classes) \
                or not all(0 <= c <= 9 for c in self.classes):
            raise ValidationError("classes: need at least two distinct digits in 0..9")
        if not 2 <= self.n_qubits <= 16:
            raise ValidationError("n_qubits: must be in [2, 16]")

    def encoder(self) -> CircuitSpec:
        return build_encoder(self.architecture, self.n_qubits, self.layers,
                             self.conv_type, self.pool_kind)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["classes"] = list(self.classes)
        return d


@dataclass
class TrainReport:
    losses: list
    params: np.ndarray
    initial_params: np.ndarray
    seed: int
    wall_time: float = 0.0
    n_params: int = 0
    extra: dict = field(default_factory=dict)


def init_params(n_params: int, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(0.0, 2 * np.pi, size=n_params)


def train(config: TrainConfig, data, enc: CircuitSpec | None = None,
          dec: CircuitSpec | None = None) -> TrainReport:
    """Mini-batch SGD on the trash loss (or the reconstruction loss in full mode).

    Parameters are drawn uniformly from [0, 2π); each iteration draws one batch
    without replacement, evaluates the mean loss and steps ``θ -= lr * ∇``.
    """
    if not isinstance(data, AngleStates):
        data = _as_batch(data)
    if data.shape[0] == 0:
        raise ValidationError("training set is empty")
    enc = enc if enc is not None else config.encoder()
    full = config.mode == "full_qae"
    tied = full and config.tied_decoder
    if full:
        dec = dec if dec is not None else invert(config.encoder())
        n_total = enc.n_params if tied else enc.n_params + dec.n_params
    else:
        if not enc.trash:
            raise ValidationError("encoder-only training needs at least one trash qubit")
        n_total = enc.n_params

    init_rng, batch_rng = (np.random.default_rng(s)
                           for s in np.random.SeedSequence(config.seed).spawn(2))
    params = init_params(n_total, init_rng)
    initial = params.copy()
    size = min(config.batch_size, data.shape[0])
    losses = []
    start = time.perf_counter()
    for _ in range(config.iterations):
        idx = batch_rng.choice(data.shape[0], size=size, replace=False)
        batch = data[idx]
        if full:
            th = params[:enc.n_params]
            thd = th if tied else params[enc.n_params:]
            if config.gradient == "adjoint":
                value, grad = reconstruction_value_and_grad(enc, th, dec, thd, batch, tied)
            else:
                value = float(np.mean(1 - mirror_overlaps(enc, th, dec, thd, batch)))
                grad = reconstruction_grad_shift(enc, th, dec, thd, batch, tied)
        else:
            value, grad = value_and_grad(config.loss, enc, params, batch, config.gradient)
        losses.append(value)
        params = params - config.learning_rate * grad
    return TrainReport(losses, params, initial, config.seed,
                       time.perf_counter() - start, n_total)


# --------------------------------------------------------------------------
# Parameter checkpoints
# --------------------------------------------------------------------------

PARAMS_HEADER = "QAEPARAMS v1"


def dumps_params(params) -> str:
    vals = np.asarray(params, dtype=float).reshape(-1)
    return "\n".join([PARAMS_HEADER] + [format(v, ".17g") for v in vals]) + "\n"


def loads_params(text: str) -> np.ndarray:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != PARAMS_HEADER:
        raise ValidationError(f"not a parameter file (expected header {PARAMS_HEADER!r})")
    try:
        return np.array([float(x) for x in lines[1:]])
    except ValueError as exc:
        raise ValidationError(f"malformed parameter value: {exc}") from None
