"""Pure numpy reference implementations of the hot kernels.

Same contracts as the compiled `_fast` extension; selected automatically
when the extension is unavailable or TRIPLETPLAN_PURE is set. Gate layout
for the LSTM kernels is [input, forget, cell, output] along the last axis.
"""

import numpy as np


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def lstm_forward(pre_x, w_hh):
    """Run an LSTM over a window, zero initial state.

    pre_x: (B, T, 4H) input-to-hidden preactivations (x @ W_ih + b).
    w_hh:  (H, 4H) recurrent weights.
    Returns (h_seq, c_seq, gates) with shapes (B,T,H), (B,T,H), (B,T,4H);
    gates hold post-activation values needed by the backward pass.
    """
    B, T, H4 = pre_x.shape
    H = H4 // 4
    h_seq = np.empty((B, T, H))
    c_seq = np.empty((B, T, H))
    gates = np.empty((B, T, H4))
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    for t in range(T):
        pre = pre_x[:, t, :] + h @ w_hh
        i = _sigmoid(pre[:, :H])
        f = _sigmoid(pre[:, H : 2 * H])
        g = np.tanh(pre[:, 2 * H : 3 * H])
        o = _sigmoid(pre[:, 3 * H :])
        c = f * c + i * g
        h = o * np.tanh(c)
        gates[:, t, :H] = i
        gates[:, t, H : 2 * H] = f
        gates[:, t, 2 * H : 3 * H] = g
        gates[:, t, 3 * H :] = o
        h_seq[:, t, :] = h
        c_seq[:, t, :] = c
    return h_seq, c_seq, gates


def lstm_backward(dh_seq, h_seq, c_seq, gates, w_hh):
    """BPTT through :func:`lstm_forward`.

    dh_seq: (B, T, H) upstream gradient w.r.t. every hidden output.
    Returns (d_pre_x, d_w_hh): gradients w.r.t. the preactivation input
    and the recurrent weights.
    """
    B, T, H = dh_seq.shape
    d_pre = np.empty((B, T, 4 * H))
    d_w_hh = np.zeros_like(w_hh)
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        i = gates[:, t, :H]
        f = gates[:, t, H : 2 * H]
        g = gates[:, t, 2 * H : 3 * H]
        o = gates[:, t, 3 * H :]
        c = c_seq[:, t, :]
        c_prev = c_seq[:, t - 1, :] if t > 0 else np.zeros((B, H))
        h_prev = h_seq[:, t - 1, :] if t > 0 else np.zeros((B, H))
        tanh_c = np.tanh(c)
        dh = dh_seq[:, t, :] + dh_next
        do = dh * tanh_c
        dc = dh * o * (1.0 - tanh_c * tanh_c) + dc_next
        di = dc * g
        df = dc * c_prev
        dg = dc * i
        dc_next = dc * f
        d_pre[:, t, :H] = di * i * (1.0 - i)
        d_pre[:, t, H : 2 * H] = df * f * (1.0 - f)
        d_pre[:, t, 2 * H : 3 * H] = dg * (1.0 - g * g)
        d_pre[:, t, 3 * H :] = do * o * (1.0 - o)
        dh_next = d_pre[:, t, :] @ w_hh.T
        d_w_hh += h_prev.T @ d_pre[:, t, :]
    return d_pre, d_w_hh


def gae_scan(rewards, values, dones, gamma, lam):
    """Generalized advantage estimation.

    values has length N+1 (bootstrap value appended); dones[t]=1 marks a
    transition into a terminal/reset state, which cuts the recursion.
    Returns (advantages, returns), both length N.
    """
    N = rewards.shape[0]
    adv = np.empty(N)
    acc = 0.0
    for t in range(N - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * values[t + 1] * nonterminal - values[t]
        acc = delta + gamma * lam * nonterminal * acc
        adv[t] = acc
    return adv, adv + values[:N]


def adam_step(param, grad, m, v, t, lr, beta1, beta2, eps):
    """One Adam update, in place on flat float64 arrays."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    bias1 = 1.0 - beta1 ** t
    bias2 = 1.0 - beta2 ** t
    param -= lr * (m / bias1) / (np.sqrt(v / bias2) + eps)


def ap_weighted(labels_sorted, weights_sorted):
    """Average precision of a multiset ranking given integer multiplicities.

    Rows must already be sorted by descending score with ties broken by
    ascending original index; duplicates of one row (weight > 1) occupy
    adjacent ranks. Returns nan when no positive has weight > 0.
    """
    y = np.asarray(labels_sorted, dtype=np.float64)
    w = np.asarray(weights_sorted, dtype=np.int64)
    wy = w * (y > 0)
    cum_total_before = np.cumsum(w) - w
    cum_pos_before = np.cumsum(wy) - wy
    pos = np.nonzero(wy > 0)[0]
    total_pos = int(wy.sum())
    if total_pos == 0:
        return float("nan")
    reps = w[pos]
    # per-copy rank offsets 1..w_i within each positive row's block
    k = np.arange(reps.sum()) - np.repeat(np.cumsum(reps) - reps, reps) + 1.0
    ap_sum = np.sum((np.repeat(cum_pos_before[pos], reps) + k) / (np.repeat(cum_total_before[pos], reps) + k))
    return float(ap_sum / total_pos)
