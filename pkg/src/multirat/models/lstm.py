"""Hand-rolled LSTM layer math: batched forward recurrence and full
backpropagation through time, in 64-bit numpy.

Gate layout in the fused weight matrices is [input, forget, cell, output]
along the last axis. The forget-gate bias block is initialized to 1.0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def init_lstm_params(input_dim: int, hidden_dim: int,
                     rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Glorot-uniform gate weights; forget bias 1, other biases 0."""
    bound_w = np.sqrt(6.0 / (input_dim + hidden_dim))
    bound_u = np.sqrt(6.0 / (2 * hidden_dim))
    w = rng.uniform(-bound_w, bound_w, size=(input_dim, 4 * hidden_dim))
    u = rng.uniform(-bound_u, bound_u, size=(hidden_dim, 4 * hidden_dim))
    b = np.zeros(4 * hidden_dim)
    b[hidden_dim:2 * hidden_dim] = 1.0
    return {"w": w, "u": u, "b": b}


@dataclass
class LstmCache:
    x: np.ndarray                      # (B, T, D)
    gi: np.ndarray                     # (B, T, H) input gate
    gf: np.ndarray                     # forget gate
    gc: np.ndarray                     # cell candidate (tanh)
    go: np.ndarray                     # output gate
    c: np.ndarray                      # cell states
    tanh_c: np.ndarray
    h: np.ndarray                      # hidden outputs


def lstm_forward(params: dict[str, np.ndarray],
                 x: np.ndarray) -> tuple[np.ndarray, LstmCache]:
    """Run the gate recurrence over x of shape (B, T, D).

    Returns the hidden sequence (B, T, H) and the cache needed for backprop.
    """
    w, u, b = params["w"], params["u"], params["b"]
    if x.ndim != 3 or x.shape[2] != w.shape[0]:
        raise ValueError(f"input shape {x.shape} incompatible with weight "
                         f"shape {w.shape}")
    bsz, steps, _ = x.shape
    hid = u.shape[0]
    gi = np.empty((bsz, steps, hid))
    gf = np.empty_like(gi)
    gc = np.empty_like(gi)
    go = np.empty_like(gi)
    cs = np.empty_like(gi)
    tanh_c = np.empty_like(gi)
    hs = np.empty_like(gi)

    # Input projections for all steps at once; the recurrent part is serial.
    xz = x @ w + b
    h = np.zeros((bsz, hid))
    c = np.zeros((bsz, hid))
    for t in range(steps):
        z = xz[:, t] + h @ u
        gi[:, t] = sigmoid(z[:, :hid])
        gf[:, t] = sigmoid(z[:, hid:2 * hid])
        gc[:, t] = np.tanh(z[:, 2 * hid:3 * hid])
        go[:, t] = sigmoid(z[:, 3 * hid:])
        c = gf[:, t] * c + gi[:, t] * gc[:, t]
        cs[:, t] = c
        tanh_c[:, t] = np.tanh(c)
        h = go[:, t] * tanh_c[:, t]
        hs[:, t] = h
    return hs, LstmCache(x=x, gi=gi, gf=gf, gc=gc, go=go, c=cs,
                         tanh_c=tanh_c, h=hs)


def lstm_backward(params: dict[str, np.ndarray], cache: LstmCache,
                  dh_seq: np.ndarray) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Backpropagate gradients dh_seq (B, T, H) wrt the hidden outputs.

    Returns (dx, grads) with grads keyed like params.
    """
    w, u = params["w"], params["u"]
    bsz, steps, hid = dh_seq.shape
    dw = np.zeros_like(w)
    du = np.zeros_like(u)
    db = np.zeros_like(params["b"])
    dx = np.empty_like(cache.x)
    dh_next = np.zeros((bsz, hid))
    dc_next = np.zeros((bsz, hid))
    dz = np.empty((bsz, 4 * hid))
    for t in range(steps - 1, -1, -1):
        dh = dh_seq[:, t] + dh_next
        go = cache.go[:, t]
        tc = cache.tanh_c[:, t]
        dc = dh * go * (1.0 - tc * tc) + dc_next
        gi, gf, gc = cache.gi[:, t], cache.gf[:, t], cache.gc[:, t]
        c_prev = cache.c[:, t - 1] if t > 0 else 0.0
        dz[:, :hid] = dc * gc * gi * (1.0 - gi)
        dz[:, hid:2 * hid] = dc * c_prev * gf * (1.0 - gf)
        dz[:, 2 * hid:3 * hid] = dc * gi * (1.0 - gc * gc)
        dz[:, 3 * hid:] = dh * tc * go * (1.0 - go)
        dw += cache.x[:, t].T @ dz
        if t > 0:
            du += cache.h[:, t - 1].T @ dz
        db += dz.sum(axis=0)
        dx[:, t] = dz @ w.T
        dh_next = dz @ u.T
        dc_next = dc * gf
    return dx, {"w": dw, "u": du, "b": db}


def bidir_forward(params_f: dict, params_b: dict, x: np.ndarray):
    """Bidirectional layer: forward pass on x plus a pass on time-reversed x.

    Output sequence is the per-step concatenation [h_fwd[t], h_bwd[t]] where
    h_bwd is re-aligned to input time order.
    """
    h_f, cache_f = lstm_forward(params_f, x)
    h_b_rev, cache_b = lstm_forward(params_b, x[:, ::-1])
    h_b = h_b_rev[:, ::-1]
    return np.concatenate([h_f, h_b], axis=2), (cache_f, cache_b)


def bidir_backward(params_f: dict, params_b: dict, caches,
                   dh_seq: np.ndarray):
    cache_f, cache_b = caches
    hid = dh_seq.shape[2] // 2
    dx_f, grads_f = lstm_backward(params_f, cache_f, dh_seq[:, :, :hid])
    dx_b_rev, grads_b = lstm_backward(params_b, cache_b,
                                      dh_seq[:, ::-1, hid:])
    dx = dx_f + dx_b_rev[:, ::-1]
    return dx, grads_f, grads_b
