"""Temporal RBM (hidden-to-hidden delays) and conditional RBM.

Past frames are always laid out oldest first: ``past[..., t, :]`` is
``v^t`` for ``t = 0..T-1`` and the frame being modelled is ``v^T``. Delay
``d`` (1-based) therefore refers to ``past[..., T - d, :]``; the delayed
matrices are stored as stacks indexed ``d - 1``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import rbm as _rbm
from .kernels import sigmoid
from .rbm import (Momentum, RbmParams, ShapeError, UnitKind, cd_statistics,
                  energy, minibatches, run_chain)
from .rng import as_stream

PHASES = ("fresh", "static", "ta", "joint", "mlp")


class StageOrderError(RuntimeError):
    """A training stage was requested before its prerequisites ran."""


@dataclass
class HistoryWindow:
    past_frames: np.ndarray
    present_frame: np.ndarray | None = None

    def __post_init__(self):
        self.past_frames = np.atleast_2d(np.asarray(self.past_frames, dtype=np.float64))
        if self.present_frame is not None:
            self.present_frame = np.asarray(self.present_frame, dtype=np.float64)


def _past_batch(past, order: int, n_visible: int) -> tuple[np.ndarray, bool]:
    if isinstance(past, HistoryWindow):
        past = past.past_frames
    arr = np.asarray(past, dtype=np.float64)
    single = arr.ndim == 2
    if single:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[1:] != (order, n_visible):
        raise ShapeError(f"history has shape {np.shape(past)}, expected (..., {order}, {n_visible})")
    return arr, single


def _delay_slice(past: np.ndarray, d: int) -> np.ndarray:
    return past[:, past.shape[1] - d, :]


class _TemporalModel:
    """Shared plumbing for the two temporal parameterisations."""

    base: RbmParams
    phase: str

    @property
    def n_visible(self) -> int:
        return self.base.n_visible

    @property
    def n_hidden(self) -> int:
        return self.base.n_hidden

    @property
    def gaussian(self) -> bool:
        return self.base.gaussian

    def with_phase(self, phase: str):
        if phase not in PHASES:
            raise ValueError(f"unknown phase {phase!r}")
        return replace(self, phase=phase)

    def past_batch(self, past):
        return _past_batch(past, self.order, self.n_visible)

    def generate(self, past, gibbs_steps: int = 100, rng=0, output: str | None = None,
                 backend=None):
        """Fill in the present frame given the history (see module docs)."""
        if gibbs_steps < 1:
            raise ValueError("gibbs_steps must be >= 1")
        rng = as_stream(rng)
        arr, single = self.past_batch(past)
        hb, vb = self.present_biases(arr, rng.child(0))
        chain_rng = rng.child(1)
        if self.gaussian:
            v0 = chain_rng.normal((arr.shape[0], self.n_visible))
        else:
            v0 = (chain_rng.uniform((arr.shape[0], self.n_visible)) < 0.5).astype(np.float64)
        res = run_chain(self.base, v0, gibbs_steps, chain_rng, hb, vb, backend=backend)
        mode = output or ("mean" if self.gaussian else "sample")
        if mode == "mean":
            out = res.visible_mean
        elif mode == "sample":
            out = res.visible
        else:
            raise ValueError(f"unknown output mode {mode!r}")
        return out[0] if single else out


@dataclass(frozen=True, eq=False)
class TrbmParams(_TemporalModel):
    """Static RBM shared across slices plus T hidden-to-hidden matrices.

    ``delayed[d-1][j, k]`` couples ``h^T_j`` with ``h^{T-d}_k``.
    """
    base: RbmParams
    delayed: np.ndarray
    phase: str = "fresh"

    def __post_init__(self):
        d = np.array(self.delayed, dtype=np.float64)
        m = self.base.n_hidden
        if d.ndim != 3 or d.shape[1:] != (m, m) or d.shape[0] < 1:
            raise ShapeError(f"delayed weights must be (T, {m}, {m}), got {d.shape}")
        if not np.all(np.isfinite(d)):
            raise ValueError("delayed weights must be finite")
        object.__setattr__(self, "delayed", d)

    @classmethod
    def initialize(cls, n_visible, n_hidden, order, rng, kind=UnitKind.GAUSSIAN, scale=0.01):
        base = RbmParams.initialize(n_visible, n_hidden, rng, kind, scale)
        return cls(base, np.zeros((order, n_hidden, n_hidden)))

    @property
    def order(self) -> int:
        return self.delayed.shape[0]

    def tensors(self) -> dict[str, np.ndarray]:
        t = self.base.tensors()
        for d in range(1, self.order + 1):
            t[f"W_DELAY_{d}"] = self.delayed[d - 1]
        return t

    def with_tensors(self, tensors):
        base = self.base.with_tensors(tensors)
        delayed = np.stack([tensors.get(f"W_DELAY_{d}", self.delayed[d - 1])
                            for d in range(1, self.order + 1)])
        return replace(self, base=base, delayed=delayed)

    def filter_hidden(self, past, rng) -> np.ndarray:
        """Sample every past hidden layer from its static conditional."""
        arr, single = self.past_batch(past)
        b, t, _ = arr.shape
        p = sigmoid(arr @ self.base.up_weights + self.base.hidden_bias)
        u = as_stream(rng).uniform((b, t, self.n_hidden))
        h = (u < p).astype(np.float64)
        return h[0] if single else h

    def hidden_bias_from(self, past_hidden: np.ndarray, active: int | None = None) -> np.ndarray:
        """b^h + sum_d W^d h^{T-d} for a batch of past hidden states (B, T, M)."""
        active = self.order if active is None else active
        bias = np.broadcast_to(self.base.hidden_bias, (past_hidden.shape[0], self.n_hidden)).copy()
        for d in range(1, active + 1):
            bias += _delay_slice(past_hidden, d) @ self.delayed[d - 1].T
        return bias

    def present_biases(self, past, rng):
        arr, _ = self.past_batch(past)
        h = self.filter_hidden(arr, rng)
        vb = np.broadcast_to(self.base.visible_bias, (arr.shape[0], self.n_visible))
        return self.hidden_bias_from(h), vb

    def parameter_count(self) -> int:
        return self.base.weights.size + self.n_visible + self.n_hidden + self.delayed.size


@dataclass(frozen=True, eq=False)
class CrbmParams(_TemporalModel):
    """Static RBM on the present frame with past-frame-driven biases.

    ``delayed_vh[d-1]`` is ``(N, M)`` and ``delayed_vv[d-1][i, l]`` couples
    ``v^{T-d}_i`` with ``v^T_l``.
    """
    base: RbmParams
    delayed_vh: np.ndarray
    delayed_vv: np.ndarray
    phase: str = "fresh"

    def __post_init__(self):
        vh = np.array(self.delayed_vh, dtype=np.float64)
        vv = np.array(self.delayed_vv, dtype=np.float64)
        n, m = self.base.n_visible, self.base.n_hidden
        if vh.ndim != 3 or vh.shape[1:] != (n, m) or vh.shape[0] < 1:
            raise ShapeError(f"delayed_vh must be (T, {n}, {m}), got {vh.shape}")
        if vv.shape != (vh.shape[0], n, n):
            raise ShapeError(f"delayed_vv must be ({vh.shape[0]}, {n}, {n}), got {vv.shape}")
        if not (np.all(np.isfinite(vh)) and np.all(np.isfinite(vv))):
            raise ValueError("delayed weights must be finite")
        object.__setattr__(self, "delayed_vh", vh)
        object.__setattr__(self, "delayed_vv", vv)

    @classmethod
    def initialize(cls, n_visible, n_hidden, order, rng, kind=UnitKind.GAUSSIAN, scale=0.01):
        base = RbmParams.initialize(n_visible, n_hidden, rng, kind, scale)
        return cls(base, np.zeros((order, n_visible, n_hidden)),
                   np.zeros((order, n_visible, n_visible)))

    @property
    def order(self) -> int:
        return self.delayed_vh.shape[0]

    def tensors(self) -> dict[str, np.ndarray]:
        t = self.base.tensors()
        for d in range(1, self.order + 1):
            t[f"W_DELAY_{d}"] = self.delayed_vh[d - 1]
        for d in range(1, self.order + 1):
            t[f"P_DELAY_{d}"] = self.delayed_vv[d - 1]
        return t

    def with_tensors(self, tensors):
        base = self.base.with_tensors(tensors)
        vh = np.stack([tensors.get(f"W_DELAY_{d}", self.delayed_vh[d - 1])
                       for d in range(1, self.order + 1)])
        vv = np.stack([tensors.get(f"P_DELAY_{d}", self.delayed_vv[d - 1])
                       for d in range(1, self.order + 1)])
        return replace(self, base=base, delayed_vh=vh, delayed_vv=vv)

    def dynamic_biases(self, past):
        arr, single = self.past_batch(past)
        hb = np.broadcast_to(self.base.hidden_bias, (arr.shape[0], self.n_hidden)).copy()
        vb = np.broadcast_to(self.base.visible_bias, (arr.shape[0], self.n_visible)).copy()
        for d in range(1, self.order + 1):
            v = _delay_slice(arr, d)
            hb += v @ self.delayed_vh[d - 1]
            vb += v @ self.delayed_vv[d - 1]
        return (hb[0], vb[0]) if single else (hb, vb)

    def present_biases(self, past, rng=None):
        arr, _ = self.past_batch(past)
        return self.dynamic_biases(arr)

    def parameter_count(self) -> int:
        return (self.base.weights.size + self.n_visible + self.n_hidden
                + self.delayed_vh.size + self.delayed_vv.size)


# ---------------------------------------------------------------------------
# energies and operation-level wrappers

def trbm_energy(m: TrbmParams, visibles, hiddens) -> float:
    """Energy of a full (T+1)-slice configuration, slices oldest first."""
    vs = np.asarray(visibles, dtype=np.float64)
    hs = np.asarray(hiddens, dtype=np.float64)
    t = m.order
    if vs.shape != (t + 1, m.n_visible) or hs.shape != (t + 1, m.n_hidden):
        raise ShapeError(f"expected ({t + 1}, N) visibles and ({t + 1}, M) hiddens")
    total = float(np.sum(energy(m.base, vs, hs)))
    for s in range(t):
        total -= float(hs[t] @ m.delayed[t - s - 1] @ hs[s])
    return total


def crbm_energy(m: CrbmParams, past, v, h) -> float:
    """Energy of the present (v^T, h^T) conditioned on the history."""
    arr, _ = m.past_batch(past)
    v = np.asarray(v, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    e = energy(m.base, v, h)
    for d in range(1, m.order + 1):
        pv = _delay_slice(arr, d)[0]
        e -= float(pv @ m.delayed_vh[d - 1] @ h + pv @ m.delayed_vv[d - 1] @ v)
    return e


def trbm_filter_hidden(m: TrbmParams, past, rng):
    return m.filter_hidden(past, as_stream(rng))


def trbm_generate_frame(m: TrbmParams, past, gibbs_steps: int = 100, rng=0, output=None):
    return m.generate(past, gibbs_steps, rng, output)


def crbm_dynamic_biases(m: CrbmParams, past):
    return m.dynamic_biases(past)


def crbm_generate_frame(m: CrbmParams, past, gibbs_steps: int = 100, rng=0, output=None):
    return m.generate(past, gibbs_steps, rng, output)


# ---------------------------------------------------------------------------
# contrastive divergence on windows

def _window_arrays(m, windows):
    past, present = windows
    past, _ = m.past_batch(past)
    present = np.atleast_2d(np.asarray(present, dtype=np.float64))
    if present.shape != (past.shape[0], m.n_visible):
        raise ShapeError("present frames do not match the history batch")
    if past.shape[0] == 0:
        raise ValueError("empty minibatch")
    return past, present


def _static_grads(base: RbmParams, v0, p0, vn, pn):
    b = v0.shape[0]
    inv = base.inv_variance
    return {
        "W": (v0.T @ p0 - vn.T @ pn) / b * inv[:, None],
        "BV": (v0 - vn).mean(axis=0) * inv,
        "BH": (p0 - pn).mean(axis=0),
    }


def trbm_cd_gradient(m: TrbmParams, windows, n: int, rng, sample_visible=True) -> dict:
    """CD-n gradient for the TRBM under the filtering approximation.

    Past hidden layers are sampled once and held fixed; only the present
    slice runs a Gibbs chain.
    """
    rng = as_stream(rng)
    past, present = _window_arrays(m, windows)
    h_past = m.filter_hidden(past, rng.child(0))
    hb = m.hidden_bias_from(h_past)
    v0, p0, vn, pn = cd_statistics(m.base, present, n, rng.child(1), hidden_bias=hb,
                                   sample_visible=sample_visible)
    grads = _static_grads(m.base, v0, p0, vn, pn)
    dp = (p0 - pn) / v0.shape[0]
    for d in range(1, m.order + 1):
        grads[f"W_DELAY_{d}"] = dp.T @ _delay_slice(h_past, d)
    return {k: _rbm._CD_SIGN * g for k, g in grads.items()}


def crbm_cd_gradient(m: CrbmParams, windows, n: int, rng, sample_visible=True) -> dict:
    """CD-n gradient of the conditional model; past frames are clamped."""
    rng = as_stream(rng)
    past, present = _window_arrays(m, windows)
    hb, vb = m.dynamic_biases(past)
    v0, p0, vn, pn = cd_statistics(m.base, present, n, rng, hidden_bias=hb, visible_bias=vb,
                                   sample_visible=sample_visible)
    grads = _static_grads(m.base, v0, p0, vn, pn)
    b = v0.shape[0]
    dp = (p0 - pn) / b
    dv = (v0 - vn) * m.base.inv_variance / b
    for d in range(1, m.order + 1):
        pv = _delay_slice(past, d)
        grads[f"W_DELAY_{d}"] = pv.T @ dp
        grads[f"P_DELAY_{d}"] = pv.T @ dv
    return {k: _rbm._CD_SIGN * g for k, g in grads.items()}


def cd_gradient(m, windows, n, rng, sample_visible=True) -> dict:
    if isinstance(m, TrbmParams):
        return trbm_cd_gradient(m, windows, n, rng, sample_visible)
    if isinstance(m, CrbmParams):
        return crbm_cd_gradient(m, windows, n, rng, sample_visible)
    raise TypeError(f"not a temporal model: {type(m).__name__}")


def _apply(m, grads, lr, optimizer):
    if lr < 0:
        raise ValueError("learning rate must be non-negative")
    opt = optimizer if optimizer is not None else Momentum(lr)
    return m.with_tensors(opt.step(m.tensors(), grads))


def trbm_cd_update(m: TrbmParams, windows, n: int = 1, lr: float = 1e-3, rng=0, optimizer=None):
    return _apply(m, trbm_cd_gradient(m, windows, n, rng), lr, optimizer)


def crbm_cd_update(m: CrbmParams, windows, n: int = 1, lr: float = 1e-3, rng=0, optimizer=None):
    return _apply(m, crbm_cd_gradient(m, windows, n, rng), lr, optimizer)


def present_reconstruction_mse(m, past, present) -> float:
    """Mean-field up-down reconstruction of the present frame given history.

    The TRBM uses past hidden probabilities in place of samples, so the
    value is deterministic.
    """
    past, _ = m.past_batch(past)
    if isinstance(m, TrbmParams):
        hp = sigmoid(past @ m.base.up_weights + m.base.hidden_bias)
        hb = m.hidden_bias_from(hp)
        vb = m.base.visible_bias
    else:
        hb, vb = m.dynamic_biases(past)
    ph = sigmoid(present @ m.base.up_weights + hb)
    act = ph @ m.base.weights.T + vb
    recon = act if m.gaussian else sigmoid(act)
    return float(np.mean((present - recon) ** 2))


def joint_train(m, past, present, schedule, epochs: int, rng, log=None, stage: str = "joint",
                monitor: int = 500):
    """Train every weight of a temporal model together with CD.

    Refuses to run on a model that has not been through static pretraining.
    """
    if m.phase == "fresh":
        raise StageOrderError("joint CD needs a statically pretrained model (phase is 'fresh')")
    rng = as_stream(rng)
    past, present = _window_arrays(m, (past, present))
    opt = Momentum(schedule.learning_rate, schedule.momentum)
    mon = slice(0, min(monitor, len(present)))
    for epoch in range(epochs):
        erng = rng.child(epoch)
        for bi, idx in enumerate(minibatches(len(present), schedule.minibatch_size, erng)):
            grads = cd_gradient(m, (past[idx], present[idx]), schedule.cd_steps, erng.child(bi))
            m = m.with_tensors(opt.step(m.tensors(), grads))
        if log is not None:
            log.record(stage, "cd_reconstruction_mse",
                       present_reconstruction_mse(m, past[mon], present[mon]))
    return m.with_phase("joint")
