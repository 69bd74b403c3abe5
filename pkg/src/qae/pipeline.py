"""End-to-end experiments: features -> states -> training -> readout -> metrics."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .ansatz import invert
from .data import Samples, drop_blank, make_split, resize16_batch
from .encoding import (
    AngleStates, Reducer, amplitude_encode_batch, fit_reducer, reduce_and_scale,
)
from .evaluation import (
    aligned_z, alignment_from_plane, bloch_features, bloch_readout, fit_plane,
    reconstruction_rate, rot_x, rot_y,
)
from .svm import OneVsRest
from .training import TrainConfig, train

log = logging.getLogger(__name__)


def pixel_features(samples: Samples) -> np.ndarray:
    return samples.images.reshape(len(samples), -1).astype(float) / 255.0


def fit_pixel_reducer(train: Samples, d: int) -> Reducer:
    """PCA reducer over the full (all-digit) training split."""
    return fit_reducer(pixel_features(train), d)


@dataclass
class Prepared:
    train_states: np.ndarray
    train_labels: np.ndarray
    test_states: np.ndarray
    test_labels: np.ndarray
    dropped: int = 0


def encode_samples(config: TrainConfig, samples: Samples, reducer: Reducer | None):
    if config.encoding == "angle":
        if reducer is None or reducer.d != config.n_qubits:
            raise ValueError("angle encoding needs a reducer with d = n_qubits")
        return samples, AngleStates(reduce_and_scale(reducer, pixel_features(samples))), 0
    if config.n_qubits != 8:
        raise ValueError("amplitude encoding of 16x16 images needs n_qubits = 8")
    feats = resize16_batch(samples.images)
    samples, feats, dropped = drop_blank(samples, feats)
    return samples, amplitude_encode_batch(feats), dropped


def prepare(config: TrainConfig, train: Samples, test: Samples, reducer: Reducer | None,
            test_count: int = 400, split_seed: int | None = None) -> Prepared:
    split_seed = config.seed if split_seed is None else split_seed
    tr, te = make_split(train, test, config.classes, test_count, split_seed)
    tr, tr_states, d1 = encode_samples(config, tr, reducer)
    te, te_states, d2 = encode_samples(config, te, reducer)
    return Prepared(tr_states, tr.labels.astype(int), te_states, te.labels.astype(int), d1 + d2)


def evaluate(config: TrainConfig, prepared: Prepared, params, shots: int = 0,
             initial_params=None) -> dict:
    """Read out and score trained parameters.

    Binary runs fit the separating plane on training-set Bloch points, align
    it to z and classify the evaluation draw; runs with more classes (or more
    than one compressed qubit) use the one-vs-rest readout.  ``full_qae``
    configurations also report the reconstruction rate, and the rate of
    ``initial_params`` when given.
    """
    enc = config.encoder()
    params = np.asarray(params, dtype=float)
    theta = params[:enc.n_params]
    out = {}
    classes = sorted(config.classes)
    if len(classes) == 2 and len(enc.compressed) == 1:
        pts_train = bloch_readout(enc, theta, prepared.train_states)
        plane = fit_plane(pts_train, prepared.train_labels, seed=config.seed)
        align = alignment_from_plane(plane, pts_train, prepared.train_labels)
        rng = np.random.default_rng(config.seed)
        z = aligned_z(enc, theta, align, prepared.test_states, shots, rng)
        pred = np.where(z >= align.threshold, align.class_of_zero, align.other_class)
        pre = bloch_readout(enc, theta, prepared.test_states)
        out.update(plane_normal=[float(v) for v in plane.normal],
                   plane_offset=float(plane.offset), alpha=align.alpha, beta=align.beta,
                   class_of_zero=align.class_of_zero, threshold=align.threshold)
        out["bloch_pre"], out["bloch_post"] = pre, pre @ _rot(align).T
    else:
        ftr = bloch_features(enc, theta, prepared.train_states)
        fte = bloch_features(enc, theta, prepared.test_states)
        clf = OneVsRest(seed=config.seed).fit(ftr, prepared.train_labels)
        pred = clf.predict(fte)
    out["accuracy"] = float(np.mean(pred == prepared.test_labels))
    out["per_class"] = {
        str(c): {"count": int(np.sum(prepared.test_labels == c)),
                 "correct": int(np.sum((pred == c) & (prepared.test_labels == c)))}
        for c in classes}
    if config.mode == "full_qae":
        tied = config.tied_decoder
        dec = invert(enc)

        def rate(p):
            return reconstruction_rate(enc, p[:enc.n_params], dec,
                                       p[:enc.n_params] if tied else p[enc.n_params:],
                                       prepared.test_states, tied)
        out["reconstruction_rate"] = rate(params)
        if initial_params is not None:
            out["baseline_reconstruction_rate"] = rate(np.asarray(initial_params, dtype=float))
    return out


def run_experiment(config: TrainConfig, prepared: Prepared, shots: int = 0) -> dict:
    """Train one configuration, then :func:`evaluate` it."""
    enc = config.encoder()
    report = train(config, prepared.train_states, enc=enc)
    out = {
        "n_params": int(report.n_params),
        "encoder_params": int(enc.n_params),
        "initial_loss": float(report.losses[0]),
        "final_loss": float(report.losses[-1]),
        "losses": [float(v) for v in report.losses],
    }
    out.update(evaluate(config, prepared, report.params, shots, report.initial_params))
    out["report"] = report
    return out


def _rot(align) -> np.ndarray:
    return rot_y(align.beta) @ rot_x(align.alpha)
