"""Shared oracle helpers: numpy mirrors of torch building blocks."""

import numpy as np


def numpy_gru_forward(gru, emb, layer: int = 0):
    """Replay a (single-direction) torch GRU layer on one sequence in numpy."""
    w_ih = getattr(gru, f"weight_ih_l{layer}").detach().numpy()
    w_hh = getattr(gru, f"weight_hh_l{layer}").detach().numpy()
    b_ih = getattr(gru, f"bias_ih_l{layer}").detach().numpy()
    b_hh = getattr(gru, f"bias_hh_l{layer}").detach().numpy()
    h = np.zeros(w_hh.shape[1])
    n_hidden = w_hh.shape[1]

    def sigmoid(v):
        return 1.0 / (1.0 + np.exp(-v))

    for x_t in emb:
        gi = w_ih @ x_t + b_ih
        gh = w_hh @ h + b_hh
        r = sigmoid(gi[:n_hidden] + gh[:n_hidden])
        z = sigmoid(gi[n_hidden : 2 * n_hidden] + gh[n_hidden : 2 * n_hidden])
        n = np.tanh(gi[2 * n_hidden :] + r * gh[2 * n_hidden :])
        h = (1 - z) * n + z * h
    return h
