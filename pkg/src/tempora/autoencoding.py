"""Temporal autoencoding: pretraining delayed weights by prediction.

The temporal model is unrolled into a deterministic feed-forward network
that predicts the present frame from the past frames. Squared prediction
error is minimised by backpropagation with plain minibatch SGD, adding one
delay at a time. The staged trainer chains static CD, this pretraining,
and joint CD.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .kernels import sigmoid
from .rbm import ShapeError, UnitKind, minibatches, static_pretrain
from .rng import RngStream, as_stream
from .schedule import MetricsLog, OutputActivation, TaConfig, TrainingSchedule
from .temporal import CrbmParams, TrbmParams, _delay_slice, joint_train

__all__ = [
    "TaCache", "StaleCacheError", "ta_forward", "ta_forward_trbm", "ta_forward_crbm",
    "ta_loss", "ta_batch_loss", "ta_gradient", "ta_backprop_update", "ta_pretrain",
    "train_staged", "train_mlp", "TrainResult", "new_model",
]


class StaleCacheError(RuntimeError):
    """Backward pass requested with activations from a different model."""


@dataclass
class TaCache:
    model: object
    active: int
    past: np.ndarray
    inputs_hidden: np.ndarray | None   # TRBM: (B, j, M) delayed hidden activations
    hidden: np.ndarray                  # present hidden activations (B, M)
    output: np.ndarray                  # prediction (B, N)
    activation: OutputActivation


def _activation(m, cfg: TaConfig | None) -> OutputActivation:
    if cfg is not None and cfg.output_activation is not None:
        return cfg.output_activation
    return OutputActivation.IDENTITY if m.gaussian else OutputActivation.SIGMOID


def _check_active(m, j: int):
    if not 1 <= j <= m.order:
        raise ValueError(f"active delays must lie in 1..{m.order}, got {j}")


def ta_forward_trbm(m: TrbmParams, past, active: int, cfg: TaConfig | None = None,
                    past_hidden: np.ndarray | None = None):
    """Deterministic prediction of v^T from the ``active`` most recent frames.

    ``past_hidden`` may carry precomputed sigmoid activations of every past
    frame (B, T, M); they depend only on the static weights.
    """
    _check_active(m, active)
    arr, single = m.past_batch(past)
    base = m.base
    if past_hidden is None:
        recent = arr[:, m.order - active:, :]
        hid = sigmoid(recent @ base.up_weights + base.hidden_bias)
    else:
        hid = past_hidden[:, m.order - active:, :]
    a = np.broadcast_to(base.hidden_bias, (arr.shape[0], m.n_hidden)).copy()
    for d in range(1, active + 1):
        a += _delay_slice(hid, d) @ m.delayed[d - 1].T
    h = sigmoid(a)
    act = _activation(m, cfg)
    z = h @ base.weights.T + base.visible_bias
    out = z if act is OutputActivation.IDENTITY else sigmoid(z)
    cache = TaCache(m, active, arr, hid, h, out, act)
    return (out[0] if single else out), cache


def ta_forward_crbm(m: CrbmParams, past, active: int, cfg: TaConfig | None = None):
    """Deterministic prediction through the single conditional hidden layer.

    The visible-to-visible matrices take no part in this network.
    """
    _check_active(m, active)
    arr, single = m.past_batch(past)
    base = m.base
    a = np.broadcast_to(base.hidden_bias, (arr.shape[0], m.n_hidden)).copy()
    for d in range(1, active + 1):
        a += _delay_slice(arr, d) @ m.delayed_vh[d - 1]
    h = sigmoid(a)
    act = _activation(m, cfg)
    z = h @ base.weights.T + base.visible_bias
    out = z if act is OutputActivation.IDENTITY else sigmoid(z)
    cache = TaCache(m, active, arr, None, h, out, act)
    return (out[0] if single else out), cache


def ta_forward(m, past, active: int | None = None, cfg: TaConfig | None = None, **kw):
    active = m.order if active is None else active
    if isinstance(m, TrbmParams):
        return ta_forward_trbm(m, past, active, cfg, **kw)
    if isinstance(m, CrbmParams):
        return ta_forward_crbm(m, past, active, cfg)
    raise TypeError(f"not a temporal model: {type(m).__name__}")


def ta_loss(target, prediction) -> float:
    """Squared Euclidean distance between two frames."""
    target = np.asarray(target, dtype=np.float64)
    prediction = np.asarray(prediction, dtype=np.float64)
    if target.shape != prediction.shape:
        raise ShapeError(f"length mismatch: {target.shape} vs {prediction.shape}")
    return float(np.sum((target - prediction) ** 2))


def ta_batch_loss(targets, predictions) -> float:
    """Mean over the batch of the per-frame squared distance."""
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    predictions = np.atleast_2d(np.asarray(predictions, dtype=np.float64))
    if targets.shape != predictions.shape:
        raise ShapeError(f"shape mismatch: {targets.shape} vs {predictions.shape}")
    return float(np.mean(np.sum((targets - predictions) ** 2, axis=1)))


def ta_gradient(m, cache: TaCache, present, update_biases: bool = False,
                train_static: bool = False) -> dict[str, np.ndarray]:
    """Exact gradient of the batch loss with respect to the trainable tensors.

    Delayed weights of inactive delays get exact zeros.
    """
    if cache.model is not m:
        raise StaleCacheError("cached activations belong to a different model")
    present = np.atleast_2d(np.asarray(present, dtype=np.float64))
    out, h = cache.output, cache.hidden
    if present.shape != out.shape:
        raise ShapeError("targets do not match the cached prediction")
    b = out.shape[0]
    base = m.base
    d_z = 2.0 * (out - present) / b
    if cache.activation is OutputActivation.SIGMOID:
        d_z = d_z * out * (1.0 - out)
    d_a = (d_z @ base.weights) * h * (1.0 - h)
    grads: dict[str, np.ndarray] = {}
    d_bh = d_a.sum(axis=0)
    d_w = d_z.T @ h if train_static else None

    if isinstance(m, TrbmParams):
        for d in range(1, m.order + 1):
            if d > cache.active:
                grads[f"W_DELAY_{d}"] = np.zeros((m.n_hidden, m.n_hidden))
                continue
            hd = _delay_slice(cache.inputs_hidden, d)
            grads[f"W_DELAY_{d}"] = d_a.T @ hd
            if update_biases or train_static:
                d_ad = (d_a @ m.delayed[d - 1]) * hd * (1.0 - hd)
                d_bh = d_bh + d_ad.sum(axis=0)
                if train_static:
                    vd = _delay_slice(cache.past, d) * base.inv_variance
                    d_w = d_w + vd.T @ d_ad
    else:
        for d in range(1, m.order + 1):
            if d > cache.active:
                grads[f"W_DELAY_{d}"] = np.zeros((m.n_visible, m.n_hidden))
                continue
            grads[f"W_DELAY_{d}"] = _delay_slice(cache.past, d).T @ d_a
    if update_biases:
        grads["BH"] = d_bh
        grads["BV"] = d_z.sum(axis=0)
    if train_static:
        grads["W"] = d_w
    return grads


def ta_backprop_update(m, past, present, active: int, cfg: TaConfig,
                       cache: TaCache | None = None, past_hidden=None):
    """One SGD step on the prediction loss. Returns ``(new_model, batch_loss)``."""
    if cache is None:
        kw = {"past_hidden": past_hidden} if past_hidden is not None else {}
        _, cache = ta_forward(m, past, active, cfg, **kw)
    elif cache.active != active:
        raise StaleCacheError("cache was computed for a different number of delays")
    loss = ta_batch_loss(present, cache.output)
    grads = ta_gradient(m, cache, present, cfg.update_biases, cfg.train_static)
    tensors = m.tensors()
    new = {k: tensors[k] - cfg.learning_rate * g for k, g in grads.items()}
    return m.with_tensors(new), loss


def ta_pretrain(m, past, present, cfg: TaConfig, rng, log: MetricsLog | None = None,
                stage: str = "ta", extra_epochs: int = 0):
    """Progressive-depth pretraining: delays 1..j active for j = 1..T.

    Weights learned with fewer delays carry over and keep training as more
    delays are switched on. ``extra_epochs`` appends that many epochs at full
    depth (used by the MLP baseline).
    """
    rng = as_stream(rng)
    past, _ = m.past_batch(past)
    present = np.atleast_2d(np.asarray(present, dtype=np.float64))
    if len(past) == 0:
        raise ValueError("dataset shorter than order + 1 frames")
    if len(present) != len(past):
        raise ShapeError("history and present batches differ in length")
    cache_hidden = (isinstance(m, TrbmParams) and not cfg.update_biases and not cfg.train_static)
    hidden_all = None
    if cache_hidden:
        hidden_all = sigmoid(past @ m.base.up_weights + m.base.hidden_bias)
    plan = [j for j in range(1, m.order + 1) for _ in range(cfg.epochs_per_delay)]
    plan += [m.order] * extra_epochs
    for epoch, j in enumerate(plan):
        erng = rng.child(epoch)
        losses, sizes = [], []
        for idx in minibatches(len(present), cfg.minibatch_size, erng):
            ph = hidden_all[idx] if hidden_all is not None else None
            m, loss = ta_backprop_update(m, past[idx], present[idx], j, cfg, past_hidden=ph)
            losses.append(loss)
            sizes.append(len(idx))
        if log is not None:
            log.record(stage, f"ta_loss_j{j}", float(np.average(losses, weights=sizes)))
    return m


def new_model(kind: str, n_visible: int, n_hidden: int, order: int, rng,
              visible_kind=UnitKind.GAUSSIAN, scale: float = 0.01):
    kind = kind.lower()
    if kind == "trbm":
        return TrbmParams.initialize(n_visible, n_hidden, order, rng, visible_kind, scale)
    if kind == "crbm":
        return CrbmParams.initialize(n_visible, n_hidden, order, rng, visible_kind, scale)
    raise ValueError(f"unknown model kind {kind!r} (expected trbm or crbm)")


@dataclass
class TrainResult:
    model: object
    log: MetricsLog = field(default_factory=MetricsLog)


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


def _windows_from_frames(frames: np.ndarray, order: int):
    idx = np.arange(len(frames) - order)
    past = np.stack([frames[i:i + order] for i in idx]) if len(idx) else np.empty((0, order, frames.shape[1]))
    present = frames[order:]
    return past, present


def train_staged(model_kind: str, frames, schedule: TrainingSchedule, use_ta: bool,
                 order: int = 6, n_hidden: int = 100, visible_kind=UnitKind.GAUSSIAN,
                 rng: RngStream | int | None = None) -> TrainResult:
    """Static CD, then (optionally) temporal autoencoding, then joint CD.

    ``frames`` is the normalised training sequence (L, N). Stage 1 draws from
    the same random lane on both paths, so the two paths share their first
    ``static_epochs`` epochs exactly.
    """
    rng = as_stream(schedule.seed if rng is None else rng)
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    if len(frames) < order + 1:
        raise ValueError(f"need at least {order + 1} frames for order {order}, got {len(frames)}")
    log = MetricsLog()
    past, present = _windows_from_frames(frames, order)
    model = new_model(model_kind, frames.shape[1], n_hidden, order, rng.child(0), visible_kind)

    stage = "static"
    try:
        base = static_pretrain(model.base, frames, schedule, rng.child(1), log, stage)
        model = replace(model, base=base, phase="static")
        if use_ta:
            stage = "ta"
            model = ta_pretrain(model, past, present, schedule.ta, rng.child(2), log, stage)
            model = model.with_phase("ta")
        stage = "joint"
        model = joint_train(model, past, present, schedule, schedule.joint_cd_epochs(use_ta),
                            rng.child(3), log, stage)
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        raise StageError(stage, exc) from exc
    return TrainResult(model, log)


def train_mlp(model_kind: str, frames, schedule: TrainingSchedule, order: int = 6,
              n_hidden: int = 100, visible_kind=UnitKind.GAUSSIAN, rng=None,
              total_epochs: int | None = None) -> TrainResult:
    """Backprop-only training of the unrolled prediction network.

    Same architecture and progressive-depth plan as temporal autoencoding,
    but the static weights and biases are trained too and no CD is run. The
    epoch budget defaults to the staged trainer's total.
    """
    rng = as_stream(schedule.seed if rng is None else rng)
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    if len(frames) < order + 1:
        raise ValueError(f"need at least {order + 1} frames for order {order}, got {len(frames)}")
    log = MetricsLog()
    past, present = _windows_from_frames(frames, order)
    model = new_model(model_kind, frames.shape[1], n_hidden, order, rng.child(0), visible_kind)
    total = schedule.total_epochs(order, True) if total_epochs is None else total_epochs
    progressive = schedule.ta.epochs_per_delay * order
    cfg = TaConfig(
        epochs_per_delay=schedule.ta.epochs_per_delay if total >= progressive else 0,
        learning_rate=schedule.ta.learning_rate,
        minibatch_size=schedule.ta.minibatch_size,
        update_biases=True,
        output_activation=schedule.ta.output_activation,
        train_static=True,
    )
    extra = total - cfg.epochs_per_delay * order
    model = ta_pretrain(model, past, present, cfg, rng.child(2), log, "mlp", extra_epochs=extra)
    return TrainResult(model.with_phase("mlp"), log)
