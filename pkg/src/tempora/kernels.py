"""Hot Gibbs-sampling kernels with a compiled core and a numpy fallback.

The compiled module ``tempora._gibbs`` is used when it imports cleanly.
Setting ``TEMPORA_PURE_PYTHON=1`` before import forces the numpy path.
Both paths take their random draws from the caller, so they agree up to
floating-point rounding in the matrix products.
"""
from __future__ import annotations

import os

import numpy as np


def sigmoid(x):
    """Logistic function, evaluated without overflow for any finite input."""
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return out if out.ndim else float(out)


def _gibbs_sweep_numpy(w_up, w_down, hidden_bias, visible_bias, v, u_hidden,
                       noise_visible, visible_sd, gaussian,
                       h_out, ph_out, v_out, vmean_out):
    np.matmul(v, w_up, out=ph_out)
    ph_out += hidden_bias
    ph_out[...] = sigmoid(ph_out)
    np.less(u_hidden, ph_out, out=h_out, casting="unsafe")
    np.matmul(h_out, w_down.T, out=vmean_out)
    vmean_out += visible_bias
    if gaussian:
        np.multiply(noise_visible, visible_sd, out=v_out)
        v_out += vmean_out
    else:
        vmean_out[...] = sigmoid(vmean_out)
        np.less(noise_visible, vmean_out, out=v_out, casting="unsafe")


_gibbs_sweep_compiled = None
if os.environ.get("TEMPORA_PURE_PYTHON") != "1":
    try:
        from ._gibbs import gibbs_sweep as _gibbs_sweep_compiled
    except ImportError:  # extension not built
        _gibbs_sweep_compiled = None

BACKEND = "compiled" if _gibbs_sweep_compiled is not None else "numpy"


def gibbs_sweep(w_up, w_down, hidden_bias, visible_bias, v, u_hidden,
                noise_visible, visible_sd, gaussian, backend=None):
    """Run one block-Gibbs sweep v -> h -> v' on a batch of chains.

    ``w_up`` is the visible-to-hidden matrix already divided by the visible
    variances (equal to ``w_down`` for binary visibles). Biases are per-chain
    ``(B, M)`` / ``(B, N)`` arrays and may be broadcast views.

    Returns ``(h, p_h, v_next, v_mean)`` where ``v_mean`` holds Bernoulli
    probabilities (binary) or conditional means (Gaussian).
    """
    v = np.ascontiguousarray(v, dtype=np.float64)
    batch, n_vis = v.shape
    n_hid = w_up.shape[1]
    h = np.empty((batch, n_hid))
    ph = np.empty((batch, n_hid))
    v_next = np.empty((batch, n_vis))
    v_mean = np.empty((batch, n_vis))
    use = backend or BACKEND
    hb = np.broadcast_to(np.asarray(hidden_bias, dtype=np.float64), (batch, n_hid))
    vb = np.broadcast_to(np.asarray(visible_bias, dtype=np.float64), (batch, n_vis))
    args = (
        np.ascontiguousarray(w_up, dtype=np.float64),
        np.ascontiguousarray(w_down, dtype=np.float64),
        hb, vb, v,
        np.ascontiguousarray(u_hidden, dtype=np.float64),
        np.ascontiguousarray(noise_visible, dtype=np.float64),
        np.ascontiguousarray(visible_sd, dtype=np.float64),
        bool(gaussian), h, ph, v_next, v_mean,
    )
    if use == "compiled":
        if _gibbs_sweep_compiled is None:
            raise RuntimeError("compiled kernels are not available")
        _gibbs_sweep_compiled(*args)
    elif use == "numpy":
        _gibbs_sweep_numpy(*args)
    else:
        raise ValueError(f"unknown backend {use!r}")
    return h, ph, v_next, v_mean
