"""Static restricted Boltzmann machines.

Binary-binary and Gaussian-binary RBMs: energies, factorised conditionals,
block Gibbs sampling, contrastive-divergence updates, and brute-force
enumeration oracles for small binary models.

Conventions: ``weights`` is ``(N, M)`` (visible by hidden); visible and
hidden states may be single vectors or ``(B, N)`` / ``(B, M)`` batches.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .kernels import sigmoid
from .rng import RngStream, as_stream

__all__ = [
    "UnitKind", "RbmParams", "RbmGradient", "ShapeError", "ChainResult",
    "sigmoid", "energy", "hidden_given_visible", "visible_given_hidden",
    "gibbs_step", "run_chain", "exact_partition", "log_partition",
    "joint_probabilities", "visible_marginals", "exact_loglik",
    "exact_loglik_gradient", "cd_gradient", "cd_update", "Momentum",
    "static_pretrain", "reconstruction_mse", "minibatches",
]

ENUMERATION_LIMIT = 24

# Sign applied to every CD gradient. Only the verification mutation test
# touches this.
_CD_SIGN = 1.0


class ShapeError(ValueError):
    """Array dimensions disagree with the model."""


class UnitKind(enum.Enum):
    BINARY = "binary"
    GAUSSIAN = "gaussian"

    @classmethod
    def parse(cls, value) -> "UnitKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown unit kind {value!r}") from None


@dataclass(frozen=True, eq=False)
class RbmParams:
    weights: np.ndarray
    visible_bias: np.ndarray
    hidden_bias: np.ndarray
    visible_kind: UnitKind = UnitKind.BINARY
    visible_variance: np.ndarray | None = None

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64, ndmin=2)
        bv = np.array(self.visible_bias, dtype=np.float64).reshape(-1)
        bh = np.array(self.hidden_bias, dtype=np.float64).reshape(-1)
        n, m = w.shape
        if n < 1 or m < 1:
            raise ShapeError("RBM needs at least one visible and one hidden unit")
        if bv.shape != (n,) or bh.shape != (m,):
            raise ShapeError(
                f"bias lengths {bv.shape[0]}, {bh.shape[0]} do not match weights {w.shape}")
        var = (np.ones(n) if self.visible_variance is None
               else np.array(self.visible_variance, dtype=np.float64).reshape(-1))
        if var.shape != (n,):
            raise ShapeError("visible_variance must have one entry per visible unit")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(bv)) and np.all(np.isfinite(bh))):
            raise ValueError("RBM parameters must be finite")
        if not np.all(var > 0) or not np.all(np.isfinite(var)):
            raise ValueError("visible variances must be positive and finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "visible_bias", bv)
        object.__setattr__(self, "hidden_bias", bh)
        object.__setattr__(self, "visible_variance", var)
        object.__setattr__(self, "visible_kind", UnitKind.parse(self.visible_kind))

    @classmethod
    def initialize(cls, n_visible: int, n_hidden: int, rng, kind=UnitKind.BINARY,
                   scale: float = 0.01) -> "RbmParams":
        """Small Gaussian weights, zero biases, unit visible variances."""
        rng = as_stream(rng)
        return cls(rng.normal((n_visible, n_hidden)) * scale,
                   np.zeros(n_visible), np.zeros(n_hidden), kind)

    @property
    def n_visible(self) -> int:
        return self.weights.shape[0]

    @property
    def n_hidden(self) -> int:
        return self.weights.shape[1]

    @property
    def gaussian(self) -> bool:
        return self.visible_kind is UnitKind.GAUSSIAN

    @property
    def inv_variance(self) -> np.ndarray:
        """Per-visible 1/sigma^2 for Gaussian units, ones for binary units."""
        if self.gaussian:
            return 1.0 / self.visible_variance
        return np.ones(self.n_visible)

    @property
    def up_weights(self) -> np.ndarray:
        """Visible-to-hidden weights with the 1/sigma^2 scaling folded in."""
        return self.weights * self.inv_variance[:, None]

    def tensors(self) -> dict[str, np.ndarray]:
        return {"W": self.weights, "BV": self.visible_bias, "BH": self.hidden_bias}

    def with_tensors(self, tensors: dict[str, np.ndarray]) -> "RbmParams":
        return replace(
            self,
            weights=tensors.get("W", self.weights),
            visible_bias=tensors.get("BV", self.visible_bias),
            hidden_bias=tensors.get("BH", self.hidden_bias),
        )


@dataclass
class RbmGradient:
    weights: np.ndarray
    visible_bias: np.ndarray
    hidden_bias: np.ndarray

    def flat(self) -> np.ndarray:
        return np.concatenate([self.weights.ravel(), self.visible_bias, self.hidden_bias])

    def tensors(self) -> dict[str, np.ndarray]:
        return {"W": self.weights, "BV": self.visible_bias, "BH": self.hidden_bias}


@dataclass
class ChainResult:
    """Final state of a batch of Gibbs chains."""
    visible: np.ndarray
    visible_mean: np.ndarray
    hidden: np.ndarray
    hidden_prob: np.ndarray


def _as_batch(x, width: int, what: str) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.ndim != 2 or arr.shape[1] != width:
        raise ShapeError(f"{what} has shape {np.shape(x)}, expected last dimension {width}")
    return arr, single


def energy(rbm: RbmParams, v, h):
    """Energy of visible/hidden configurations (scalar or per-row)."""
    v, single_v = _as_batch(v, rbm.n_visible, "visible state")
    h, single_h = _as_batch(h, rbm.n_hidden, "hidden state")
    if v.shape[0] != h.shape[0] and 1 not in (v.shape[0], h.shape[0]):
        raise ShapeError("visible and hidden batches differ in length")
    if rbm.gaussian:
        inv = rbm.inv_variance
        coupling = np.einsum("bi,ij,bj->b", v * inv, rbm.weights, h)
        quad = 0.5 * np.sum((rbm.visible_bias - v) ** 2 * inv, axis=1)
        e = -coupling + quad - h @ rbm.hidden_bias
    else:
        e = (-np.einsum("bi,ij,bj->b", v, rbm.weights, h)
             - v @ rbm.visible_bias - h @ rbm.hidden_bias)
    return float(e[0]) if single_v and single_h else e


def hidden_given_visible(rbm: RbmParams, v, hidden_bias=None):
    """P(h_j = 1 | v). ``hidden_bias`` overrides the static bias (dynamic biases)."""
    v, single = _as_batch(v, rbm.n_visible, "visible state")
    bias = rbm.hidden_bias if hidden_bias is None else hidden_bias
    p = sigmoid(v @ rbm.up_weights + bias)
    return p[0] if single and np.ndim(bias) <= 1 else p


def visible_given_hidden(rbm: RbmParams, h, visible_bias=None):
    """Bernoulli probabilities (binary) or ``(mean, variance)`` (Gaussian)."""
    h, single = _as_batch(h, rbm.n_hidden, "hidden state")
    bias = rbm.visible_bias if visible_bias is None else visible_bias
    act = h @ rbm.weights.T + bias
    if single and np.ndim(bias) <= 1:
        act = act[0]
    if rbm.gaussian:
        return act, np.broadcast_to(rbm.visible_variance, act.shape).copy()
    return sigmoid(act)


def run_chain(rbm: RbmParams, v0, steps: int, rng: RngStream, hidden_bias=None,
              visible_bias=None, sample_visible: bool = True, backend=None) -> ChainResult:
    """Run ``steps`` block-Gibbs sweeps from ``v0`` on a batch of chains.

    With ``sample_visible=False`` the visible layer is propagated as its
    conditional mean (mean-field) instead of a sample.
    """
    if steps < 1:
        raise ValueError("a Gibbs chain needs at least one step")
    v, _ = _as_batch(v0, rbm.n_visible, "visible state")
    batch = v.shape[0]
    hb = rbm.hidden_bias if hidden_bias is None else hidden_bias
    vb = rbm.visible_bias if visible_bias is None else visible_bias
    w_up = np.ascontiguousarray(rbm.up_weights)
    sd = np.sqrt(rbm.visible_variance)
    for _ in range(steps):
        u = rng.uniform((batch, rbm.n_hidden))
        noise = rng.normal((batch, rbm.n_visible)) if rbm.gaussian else rng.uniform((batch, rbm.n_visible))
        h, ph, v_next, v_mean = kernels.gibbs_sweep(
            w_up, rbm.weights, hb, vb, v, u, noise, sd, rbm.gaussian, backend=backend)
        v = v_next if sample_visible else v_mean
    return ChainResult(v, v_mean, h, ph)


def gibbs_step(rbm: RbmParams, v, rng: RngStream):
    """One sweep: sample h from p(h|v), then v' from p(v|h)."""
    arr, single = _as_batch(v, rbm.n_visible, "visible state")
    res = run_chain(rbm, arr, 1, rng)
    if single:
        return res.hidden[0], res.visible[0]
    return res.hidden, res.visible


# ---------------------------------------------------------------------------
# enumeration oracles

def _binary_states(n: int) -> np.ndarray:
    idx = np.arange(2 ** n, dtype=np.int64)
    return ((idx[:, None] >> np.arange(n - 1, -1, -1)) & 1).astype(np.float64)


def _check_enumerable(rbm: RbmParams):
    if rbm.gaussian:
        raise NotImplementedError("exact enumeration is only defined for binary visibles")
    if rbm.n_visible + rbm.n_hidden > ENUMERATION_LIMIT:
        raise ValueError(
            f"refusing to enumerate 2^{rbm.n_visible + rbm.n_hidden} states "
            f"(limit N + M <= {ENUMERATION_LIMIT})")


def _neg_energy_table(rbm: RbmParams, vs: np.ndarray, hs: np.ndarray) -> np.ndarray:
    """-E(v, h) for every pair, shape (len(vs), len(hs))."""
    return ((vs @ rbm.weights) @ hs.T
            + (vs @ rbm.visible_bias)[:, None] + (hs @ rbm.hidden_bias)[None, :])


def _logsumexp(a: np.ndarray, axis=None):
    amax = np.max(a, axis=axis, keepdims=True)
    out = np.log(np.sum(np.exp(a - amax), axis=axis, keepdims=True)) + amax
    return out.squeeze() if axis is None else np.squeeze(out, axis=axis)


def log_partition(rbm: RbmParams, chunk: int = 4096) -> float:
    """log Z by explicit summation over all 2^(N+M) joint states."""
    _check_enumerable(rbm)
    hs = _binary_states(rbm.n_hidden)
    n_v = 2 ** rbm.n_visible
    parts = []
    for start in range(0, n_v, chunk):
        idx = np.arange(start, min(start + chunk, n_v), dtype=np.int64)
        vs = ((idx[:, None] >> np.arange(rbm.n_visible - 1, -1, -1)) & 1).astype(np.float64)
        parts.append(_logsumexp(_neg_energy_table(rbm, vs, hs)))
    return float(_logsumexp(np.array(parts)))


def exact_partition(rbm: RbmParams) -> float:
    """Z = sum over all binary (v, h) of exp(-E(v, h))."""
    return float(np.exp(log_partition(rbm)))


def joint_probabilities(rbm: RbmParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All states and their probabilities: ``(vs, hs, P)`` with P shaped (2^N, 2^M)."""
    _check_enumerable(rbm)
    vs, hs = _binary_states(rbm.n_visible), _binary_states(rbm.n_hidden)
    table = _neg_energy_table(rbm, vs, hs)
    return vs, hs, np.exp(table - log_partition(rbm))


def visible_marginals(rbm: RbmParams) -> np.ndarray:
    """Exact P(v_i = 1) for each visible unit."""
    vs, _, p = joint_probabilities(rbm)
    return p.sum(axis=1) @ vs


def exact_loglik(rbm: RbmParams, data) -> float:
    """Mean log P(v) over the data, by enumeration over the hidden layer."""
    _check_enumerable(rbm)
    data, _ = _as_batch(data, rbm.n_visible, "data")
    hs = _binary_states(rbm.n_hidden)
    return float(np.mean(_logsumexp(_neg_energy_table(rbm, data, hs), axis=1)) - log_partition(rbm))


def exact_loglik_gradient(rbm: RbmParams, data) -> RbmGradient:
    """Gradient of the mean log-likelihood: data expectation minus model expectation."""
    _check_enumerable(rbm)
    data, _ = _as_batch(data, rbm.n_visible, "data")
    hs = _binary_states(rbm.n_hidden)
    table = _neg_energy_table(rbm, data, hs)
    post = np.exp(table - _logsumexp(table, axis=1)[:, None])   # P(h | v_d)
    h_data = post @ hs
    pos_w = data.T @ h_data / len(data)
    pos_bv = data.mean(axis=0)
    pos_bh = h_data.mean(axis=0)

    vs, hs, joint = joint_probabilities(rbm)
    neg_w = vs.T @ joint @ hs
    neg_bv = joint.sum(axis=1) @ vs
    neg_bh = joint.sum(axis=0) @ hs
    return RbmGradient(pos_w - neg_w, pos_bv - neg_bv, pos_bh - neg_bh)


# ---------------------------------------------------------------------------
# contrastive divergence

def cd_statistics(rbm: RbmParams, v0, n: int, rng: RngStream, hidden_bias=None,
                  visible_bias=None, sample_visible: bool = True):
    """Positive and negative phase states for CD-n.

    Returns ``(v0, p0, vn, pn)``: data visibles with hidden probabilities, and
    the chain's final visible sample with its hidden probabilities.
    """
    v0, _ = _as_batch(v0, rbm.n_visible, "minibatch")
    hb = rbm.hidden_bias if hidden_bias is None else hidden_bias
    p0 = sigmoid(v0 @ rbm.up_weights + hb)
    res = run_chain(rbm, v0, n, rng, hidden_bias, visible_bias, sample_visible)
    vn = res.visible
    pn = sigmoid(vn @ rbm.up_weights + hb)
    return v0, p0, vn, pn


def cd_gradient(rbm: RbmParams, minibatch, n: int, rng: RngStream,
                sample_visible: bool = True) -> tuple[RbmGradient, np.ndarray]:
    """CD-n estimate of the log-likelihood gradient.

    Returns the gradient and the batch-mean hidden activation of the data
    phase (used by the sparsity term).
    """
    if n < 1:
        raise ValueError("CD needs n >= 1")
    v0, p0, vn, pn = cd_statistics(rbm, minibatch, n, rng, sample_visible=sample_visible)
    b = v0.shape[0]
    inv = rbm.inv_variance
    gw = (v0.T @ p0 - vn.T @ pn) / b * inv[:, None]
    gbv = (v0 - vn).mean(axis=0) * inv
    gbh = (p0 - pn).mean(axis=0)
    s = _CD_SIGN
    return RbmGradient(s * gw, s * gbv, s * gbh), p0.mean(axis=0)


class Momentum:
    """Classical momentum: v <- m v + lr g ; theta <- theta + v (ascent)."""

    def __init__(self, lr: float, momentum: float = 0.0):
        if lr < 0:
            raise ValueError("learning rate must be non-negative")
        if not 0.0 <= momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        self.lr = float(lr)
        self.momentum = float(momentum)
        self.velocity: dict[str, np.ndarray] = {}

    def step(self, tensors: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        out = {}
        for name, g in grads.items():
            vel = self.velocity.get(name)
            vel = self.lr * g if vel is None else self.momentum * vel + self.lr * g
            self.velocity[name] = vel
            out[name] = tensors[name] + vel
        return out


def cd_update(rbm: RbmParams, minibatch, n: int = 1, lr: float = 1e-3, rng=0,
              optimizer: Momentum | None = None, sparsity_target: float = 0.1,
              sparsity_strength: float = 0.0, sample_visible: bool = True) -> RbmParams:
    """One CD-n parameter update on a minibatch; returns new parameters.

    The optional sparsity term adds ``strength * (target - <h_j>)`` to the
    hidden-bias gradient.
    """
    if lr < 0:
        raise ValueError("learning rate must be non-negative")
    minibatch = np.atleast_2d(np.asarray(minibatch, dtype=np.float64))
    if minibatch.shape[0] == 0:
        raise ValueError("empty minibatch")
    rng = as_stream(rng)
    grad, mean_h = cd_gradient(rbm, minibatch, n, rng, sample_visible)
    grads = grad.tensors()
    if sparsity_strength:
        grads["BH"] = grads["BH"] + sparsity_strength * (sparsity_target - mean_h)
    opt = optimizer if optimizer is not None else Momentum(lr)
    return rbm.with_tensors(opt.step(rbm.tensors(), grads))


def minibatches(n_items: int, batch_size: int, rng: RngStream):
    """Shuffled index blocks covering ``range(n_items)`` once."""
    if batch_size < 1:
        raise ValueError("minibatch size must be >= 1")
    order = rng.permutation(n_items)
    for start in range(0, n_items, batch_size):
        yield order[start:start + batch_size]


def reconstruction_mse(rbm: RbmParams, frames, hidden_bias=None, visible_bias=None) -> float:
    """Mean squared error of one deterministic up-down pass."""
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    hb = rbm.hidden_bias if hidden_bias is None else hidden_bias
    vb = rbm.visible_bias if visible_bias is None else visible_bias
    ph = sigmoid(frames @ rbm.up_weights + hb)
    act = ph @ rbm.weights.T + vb
    recon = act if rbm.gaussian else sigmoid(act)
    return float(np.mean((frames - recon) ** 2))


def static_pretrain(rbm: RbmParams, frames, schedule, rng, log=None,
                    stage: str = "static") -> RbmParams:
    """CD training on single frames with a hidden-activation sparsity penalty.

    ``schedule`` supplies ``static_epochs``, ``minibatch_size``, ``cd_steps``,
    ``learning_rate``, ``momentum``, ``sparsity_target``, ``sparsity_strength``.
    The reconstruction MSE of the whole frame set is logged after each epoch.
    """
    rng = as_stream(rng)
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    if frames.shape[1] != rbm.n_visible:
        raise ShapeError(f"frames have {frames.shape[1]} dims, model has {rbm.n_visible}")
    opt = Momentum(schedule.learning_rate, schedule.momentum)
    for epoch in range(schedule.static_epochs):
        erng = rng.child(epoch)
        for bi, idx in enumerate(minibatches(len(frames), schedule.minibatch_size, erng)):
            rbm = cd_update(rbm, frames[idx], schedule.cd_steps, schedule.learning_rate,
                            erng.child(bi), optimizer=opt,
                            sparsity_target=schedule.sparsity_target,
                            sparsity_strength=schedule.sparsity_strength)
        if log is not None:
            log.record(stage, "reconstruction_mse", reconstruction_mse(rbm, frames))
    return rbm
