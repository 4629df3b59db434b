# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Gibbs sweep for batches of RBM chains.

One sweep samples h ~ p(h | v) and then v' ~ p(v | h) for every chain in the
batch. Random draws are supplied by the caller so that the compiled and the
numpy paths consume identical streams.
"""
from libc.math cimport exp, fmax, fmin
from scipy.linalg.cython_blas cimport dgemm


cdef inline double _sigmoid(double x) nogil:
    # clamp keeps exp finite so the loop can be vectorised safely
    x = fmin(fmax(x, -700.0), 700.0)
    return 1.0 / (1.0 + exp(-x))


def gibbs_sweep(
    const double[:, ::1] w_up,
    const double[:, ::1] w_down,
    const double[:, :] hidden_bias,
    const double[:, :] visible_bias,
    const double[:, ::1] v,
    const double[:, ::1] u_hidden,
    const double[:, ::1] noise_visible,
    const double[::1] visible_sd,
    bint gaussian,
    double[:, ::1] h_out,
    double[:, ::1] ph_out,
    double[:, ::1] v_out,
    double[:, ::1] vmean_out,
):
    cdef int n_vis = w_up.shape[0]
    cdef int n_hid = w_up.shape[1]
    cdef int batch = v.shape[0]
    cdef int b, i, j
    cdef double one = 1.0, zero = 0.0
    cdef char no_t = b'N'
    cdef char tr = b'T'
    cdef double p, mu

    if batch == 0:
        return
    with nogil:
        # ph_out (row-major B x M) = v (B x N) @ w_up (N x M)
        dgemm(&no_t, &no_t, &n_hid, &batch, &n_vis, &one,
              <double*>&w_up[0, 0], &n_hid, <double*>&v[0, 0], &n_vis, &zero,
              &ph_out[0, 0], &n_hid)
        for b in range(batch):
            for j in range(n_hid):
                ph_out[b, j] += hidden_bias[b, j]
            for j in range(n_hid):
                ph_out[b, j] = _sigmoid(ph_out[b, j])
            for j in range(n_hid):
                h_out[b, j] = 1.0 if u_hidden[b, j] < ph_out[b, j] else 0.0
        # vmean_out (B x N) = h (B x M) @ w_down.T (M x N)
        dgemm(&tr, &no_t, &n_vis, &batch, &n_hid, &one,
              <double*>&w_down[0, 0], &n_hid, &h_out[0, 0], &n_hid, &zero,
              &vmean_out[0, 0], &n_vis)
        if gaussian:
            for b in range(batch):
                for i in range(n_vis):
                    mu = vmean_out[b, i] + visible_bias[b, i]
                    vmean_out[b, i] = mu
                    v_out[b, i] = mu + visible_sd[i] * noise_visible[b, i]
        else:
            for b in range(batch):
                for i in range(n_vis):
                    p = _sigmoid(vmean_out[b, i] + visible_bias[b, i])
                    vmean_out[b, i] = p
                    v_out[b, i] = 1.0 if noise_visible[b, i] < p else 0.0
