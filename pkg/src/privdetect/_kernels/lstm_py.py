"""Pure numpy LSTM direction kernels (reference fallback).

Arrays are time-major: ``xproj`` is T x B x 4H holding the input
projection plus bias for gate order (input, forget, cell, output).
Masked steps (mask 0) carry the recurrent state through unchanged and emit
a zero output, so padding never influences real positions.
"""

import numpy as np


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def lstm_forward(xproj, w_hh, mask, reverse=False):
    T, B, G = xproj.shape
    H = G // 4
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    out = np.zeros((T, B, H))
    gates = np.zeros((T, B, G))
    tanh_c = np.zeros((T, B, H))
    h_prev = np.zeros((T, B, H))
    c_prev = np.zeros((T, B, H))
    steps = range(T - 1, -1, -1) if reverse else range(T)
    for t in steps:
        m = mask[t][:, None] != 0
        z = xproj[t] + h @ w_hh.T
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H:2 * H])
        g = np.tanh(z[:, 2 * H:3 * H])
        o = _sigmoid(z[:, 3 * H:])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        h_prev[t] = h
        c_prev[t] = c
        gates[t, :, :H] = i
        gates[t, :, H:2 * H] = f
        gates[t, :, 2 * H:3 * H] = g
        gates[t, :, 3 * H:] = o
        tanh_c[t] = tc
        h = np.where(m, h_new, h)
        c = np.where(m, c_new, c)
        out[t] = np.where(m, h_new, 0.0)
    return out, (gates, tanh_c, h_prev, c_prev)


def lstm_backward(dout, cache, w_hh, mask, reverse=False):
    gates, tanh_c, h_prev, c_prev = cache
    T, B, G = gates.shape
    H = G // 4
    dxproj = np.zeros((T, B, G))
    dw = np.zeros((G, H))
    dh = np.zeros((B, H))
    dc = np.zeros((B, H))
    steps = range(T) if reverse else range(T - 1, -1, -1)
    for t in steps:
        m = (mask[t] != 0).astype(np.float64)[:, None]
        i = gates[t, :, :H]
        f = gates[t, :, H:2 * H]
        g = gates[t, :, 2 * H:3 * H]
        o = gates[t, :, 3 * H:]
        tc = tanh_c[t]
        dh_t = dout[t] * m + dh
        dc_t = dc + dh_t * o * (1.0 - tc * tc)
        dz = np.empty((B, G))
        dz[:, :H] = dc_t * g * i * (1.0 - i)
        dz[:, H:2 * H] = dc_t * c_prev[t] * f * (1.0 - f)
        dz[:, 2 * H:3 * H] = dc_t * i * (1.0 - g * g)
        dz[:, 3 * H:] = dh_t * tc * o * (1.0 - o)
        dz *= m
        dxproj[t] = dz
        dw += dz.T @ h_prev[t]
        dh = dz @ w_hh + (1.0 - m) * dh
        dc = m * dc_t * f + (1.0 - m) * dc
    return dxproj, dw
