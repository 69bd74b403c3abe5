"""
Compressing MNIST digits into one qubit
=======================================

Train the 8-qubit QCNN encoder on zeros and ones, read the compressed qubit
out on the Bloch sphere and turn a separating plane into a Z measurement.
Runs in a few seconds on one core.
"""

import numpy as np

from qae.data import load_mnist
from qae.evaluation import (
    accuracy, alignment_from_plane, bloch_readout, fit_plane, rot_x, rot_y,
)
from qae.pipeline import fit_pixel_reducer, prepare
from qae.training import TrainConfig, train

train_s, test_s = load_mnist("data/mnist")

# The default configuration is the main protocol: QCNN with 3 layers,
# angle encoding of 8 PCA features, BCE on the 7 trash qubits.
cfg = TrainConfig(seed=0)
enc = cfg.encoder()
print(f"encoder: {enc.n_params} parameters, trash {enc.trash}, compressed {enc.compressed}")

reducer = fit_pixel_reducer(train_s, 8)
data = prepare(cfg, train_s, test_s, reducer)
print(f"{len(data.train_labels)} training states, {len(data.test_labels)} test states")

report = train(cfg, data.train_states)
print(f"loss {report.losses[0]:.4f} -> {report.losses[-1]:.4f} in {len(report.losses)} steps")

# %%
# Bloch readout of the compressed qubit, one point per image.
pts = bloch_readout(enc, report.params, data.train_states)
for digit in (0, 1):
    centre = pts[data.train_labels == digit].mean(axis=0)
    print(f"digit {digit}: mean Bloch vector {np.round(centre, 3)}")

# %%
# A linear SVM on the training points gives a plane; rotating its normal
# onto z turns the classifier into a plain Z measurement.
plane = fit_plane(pts, data.train_labels)
align = alignment_from_plane(plane, pts, data.train_labels)
print("plane normal:", np.round(plane.normal, 3), "offset", round(plane.offset, 3))
print("normal after RX, RY:", np.round(rot_y(align.beta) @ rot_x(align.alpha) @ plane.normal, 6))

acc = accuracy(enc, report.params, align, data.test_states, data.test_labels)
print(f"test accuracy on {len(data.test_labels)} samples: {acc:.4f}")

# Finite sampling instead of exact expectations.
acc_shots = accuracy(enc, report.params, align, data.test_states, data.test_labels,
                     shots=100, rng=np.random.default_rng(0))
print(f"with 100 shots per sample: {acc_shots:.4f}")
