"""
More than two digits
====================

A 2-layer QCNN keeps two compressed qubits.  Their six Pauli expectations
feed one-vs-rest linear classifiers.
"""

import numpy as np

from qae.data import load_mnist
from qae.pipeline import fit_pixel_reducer, prepare, run_experiment
from qae.training import TrainConfig

train_s, test_s = load_mnist("data/mnist")
reducer = fit_pixel_reducer(train_s, 8)

for classes in ((0, 1, 8), (0, 1, 2, 3)):
    for layers in (3, 2):
        cfg = TrainConfig(classes=classes, layers=layers, seed=0)
        res = run_experiment(cfg, prepare(cfg, train_s, test_s, reducer))
        n_c = len(cfg.encoder().compressed)
        per = {c: f"{v['correct']}/{v['count']}" for c, v in res["per_class"].items()}
        print(f"classes {classes}, {layers} layers ({n_c} compressed): "
              f"accuracy {res['accuracy']:.4f}  {per}")
