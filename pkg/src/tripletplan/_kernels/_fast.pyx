# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: LSTM BPTT, GAE scan, fused Adam, weighted AP.

Contracts mirror `pure.py` exactly; matmuls go through BLAS dgemm, the
elementwise recurrences run as C loops. Gate layout is [i, f, g, o].
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, tanh, sqrt
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


cdef inline double _sigmoid(double x) nogil:
    cdef double e
    if x >= 0.0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


cdef void _gemm_rm(char ta, char tb, int M, int N, int K, double alpha,
                   double* A, int lda, double* B, int ldb,
                   double beta, double* C, int ldc) nogil:
    # Row-major C(M,N) = alpha*opA(A)@opB(B) + beta*C via the transposed
    # Fortran call. lda/ldb/ldc are row strides of the row-major buffers.
    dgemm(&tb, &ta, &N, &M, &K, &alpha, B, &ldb, A, &lda, &beta, C, &ldc)


def lstm_forward(double[:, :, ::1] pre_x, double[:, ::1] w_hh):
    cdef int B = pre_x.shape[0]
    cdef int T = pre_x.shape[1]
    cdef int H4 = pre_x.shape[2]
    cdef int H = H4 // 4
    h_seq_arr = np.empty((B, T, H))
    c_seq_arr = np.empty((B, T, H))
    gates_arr = np.empty((B, T, H4))
    cdef double[:, :, ::1] h_seq = h_seq_arr
    cdef double[:, :, ::1] c_seq = c_seq_arr
    cdef double[:, :, ::1] gates = gates_arr
    pre_arr = np.empty((B, H4))
    cdef double[:, ::1] pre = pre_arr
    cdef int t, b, j
    cdef double iv, fv, gv, ov, cv, c_prev
    with nogil:
        for t in range(T):
            for b in range(B):
                for j in range(H4):
                    pre[b, j] = pre_x[b, t, j]
            if t > 0:
                _gemm_rm(b'N', b'N', B, H4, H, 1.0,
                         &h_seq[0, t - 1, 0], T * H, &w_hh[0, 0], H4,
                         1.0, &pre[0, 0], H4)
            for b in range(B):
                for j in range(H):
                    iv = _sigmoid(pre[b, j])
                    fv = _sigmoid(pre[b, H + j])
                    gv = tanh(pre[b, 2 * H + j])
                    ov = _sigmoid(pre[b, 3 * H + j])
                    c_prev = c_seq[b, t - 1, j] if t > 0 else 0.0
                    cv = fv * c_prev + iv * gv
                    gates[b, t, j] = iv
                    gates[b, t, H + j] = fv
                    gates[b, t, 2 * H + j] = gv
                    gates[b, t, 3 * H + j] = ov
                    c_seq[b, t, j] = cv
                    h_seq[b, t, j] = ov * tanh(cv)
    return h_seq_arr, c_seq_arr, gates_arr


def lstm_backward(double[:, :, ::1] dh_seq, double[:, :, ::1] h_seq,
                  double[:, :, ::1] c_seq, double[:, :, ::1] gates,
                  double[:, ::1] w_hh):
    cdef int B = dh_seq.shape[0]
    cdef int T = dh_seq.shape[1]
    cdef int H = dh_seq.shape[2]
    cdef int H4 = 4 * H
    d_pre_arr = np.empty((B, T, H4))
    d_w_hh_arr = np.zeros((H, H4))
    dh_next_arr = np.zeros((B, H))
    dc_next_arr = np.zeros((B, H))
    cdef double[:, :, ::1] d_pre = d_pre_arr
    cdef double[:, ::1] d_w_hh = d_w_hh_arr
    cdef double[:, ::1] dh_next = dh_next_arr
    cdef double[:, ::1] dc_next = dc_next_arr
    cdef int t, b, j
    cdef double iv, fv, gv, ov, cv, tc, dh, do, dc, c_prev
    with nogil:
        for t in range(T - 1, -1, -1):
            for b in range(B):
                for j in range(H):
                    iv = gates[b, t, j]
                    fv = gates[b, t, H + j]
                    gv = gates[b, t, 2 * H + j]
                    ov = gates[b, t, 3 * H + j]
                    cv = c_seq[b, t, j]
                    c_prev = c_seq[b, t - 1, j] if t > 0 else 0.0
                    tc = tanh(cv)
                    dh = dh_seq[b, t, j] + dh_next[b, j]
                    do = dh * tc
                    dc = dh * ov * (1.0 - tc * tc) + dc_next[b, j]
                    d_pre[b, t, j] = dc * gv * iv * (1.0 - iv)
                    d_pre[b, t, H + j] = dc * c_prev * fv * (1.0 - fv)
                    d_pre[b, t, 2 * H + j] = dc * iv * (1.0 - gv * gv)
                    d_pre[b, t, 3 * H + j] = do * ov * (1.0 - ov)
                    dc_next[b, j] = dc * fv
            # dh_next = d_pre[:, t, :] @ w_hh.T
            _gemm_rm(b'N', b'T', B, H, H4, 1.0,
                     &d_pre[0, t, 0], T * H4, &w_hh[0, 0], H4,
                     0.0, &dh_next[0, 0], H)
            # d_w_hh += h_prev.T @ d_pre[:, t, :]
            if t > 0:
                _gemm_rm(b'T', b'N', H, H4, B, 1.0,
                         &h_seq[0, t - 1, 0], T * H, &d_pre[0, t, 0], T * H4,
                         1.0, &d_w_hh[0, 0], H4)
    return d_pre_arr, d_w_hh_arr


def gae_scan(double[::1] rewards, double[::1] values, double[::1] dones,
             double gamma, double lam):
    cdef int N = rewards.shape[0]
    adv_arr = np.empty(N)
    ret_arr = np.empty(N)
    cdef double[::1] adv = adv_arr
    cdef double[::1] ret = ret_arr
    cdef double acc = 0.0
    cdef double nonterminal, delta
    cdef int t
    with nogil:
        for t in range(N - 1, -1, -1):
            nonterminal = 1.0 - dones[t]
            delta = rewards[t] + gamma * values[t + 1] * nonterminal - values[t]
            acc = delta + gamma * lam * nonterminal * acc
            adv[t] = acc
            ret[t] = acc + values[t]
    return adv_arr, ret_arr


def adam_step(double[::1] param, double[::1] grad, double[::1] m, double[::1] v,
              long t, double lr, double beta1, double beta2, double eps):
    cdef int n = param.shape[0]
    cdef double bias1 = 1.0 - beta1 ** t
    cdef double bias2 = 1.0 - beta2 ** t
    cdef int k
    with nogil:
        for k in range(n):
            m[k] = beta1 * m[k] + (1.0 - beta1) * grad[k]
            v[k] = beta2 * v[k] + (1.0 - beta2) * grad[k] * grad[k]
            param[k] -= lr * (m[k] / bias1) / (sqrt(v[k] / bias2) + eps)


def ap_weighted(double[::1] labels_sorted, long[::1] weights_sorted):
    cdef int n = labels_sorted.shape[0]
    cdef double cum_total = 0.0
    cdef double cum_pos = 0.0
    cdef double ap_sum = 0.0
    cdef double total_pos = 0.0
    cdef long w, k
    cdef int i
    with nogil:
        for i in range(n):
            w = weights_sorted[i]
            if w == 0:
                continue
            if labels_sorted[i] > 0.0:
                for k in range(1, w + 1):
                    ap_sum += (cum_pos + k) / (cum_total + k)
                cum_pos += w
                total_pos += w
            cum_total += w
    if total_pos == 0.0:
        return float("nan")
    return ap_sum / total_pos
