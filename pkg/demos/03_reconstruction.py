"""
Encoder, decoder and reconstruction
===================================

Train a full autoencoder: the decoder receives the compressed qubit plus
fresh |0> reference qubits and should rebuild the input state.
"""

import numpy as np

from qae.ansatz import build_qcnn, invert
from qae.data import load_mnist
from qae.evaluation import reconstruction_rate
from qae.pipeline import fit_pixel_reducer, prepare
from qae.training import TrainConfig, train

# With no trash qubits the decoder is the exact inverse, so nothing is lost.
rng = np.random.default_rng(1)
states = rng.normal(size=(5, 16)) + 1j * rng.normal(size=(5, 16))
states /= np.linalg.norm(states, axis=1, keepdims=True)
enc0 = build_qcnn(4, 0)
print("t=0 tied rate:", reconstruction_rate(enc0, [], invert(enc0), [], states, tied=True))

# %%
# On digits the encoder and an independent decoder are trained together on
# the mean reconstruction infidelity.
train_s, test_s = load_mnist("data/mnist")
cfg = TrainConfig(mode="full_qae", seed=0)
data = prepare(cfg, train_s, test_s, fit_pixel_reducer(train_s, 8))
report = train(cfg, data.train_states)
print(f"{report.n_params} parameters (encoder and decoder), "
      f"loss {report.losses[0]:.5f} -> {report.losses[-1]:.5f}")

enc = cfg.encoder()
dec = invert(enc)
k = enc.n_params


def rate(p):
    return reconstruction_rate(enc, p[:k], dec, p[k:], data.test_states)


print(f"reconstruction rate, random init: {rate(report.initial_params):.5f}")
print(f"reconstruction rate, trained:     {rate(report.params):.5f}")
