"""Filling-in-frames and free-running evaluation, metrics, baselines.

MSE is reported in normalised units; MAPE in original units (percent).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .autoencoding import TrainResult, ta_forward, train_mlp
from .data import NormalizationStats, WindowBatch
from .rbm import ShapeError, UnitKind
from .rng import as_stream
from .temporal import CrbmParams, TrbmParams

__all__ = [
    "PredictionMode", "SingleSample", "PosteriorMean", "Deterministic",
    "mse", "mape", "predict", "fill_in", "free_run", "FillInResult", "HorizonReport",
    "PersistencePredictor", "mlp_baseline", "ta_parameter_count",
]


@dataclass(frozen=True)
class PredictionMode:
    kind: str
    samples: int = 1

    def __post_init__(self):
        if self.kind not in ("single", "posterior_mean", "deterministic"):
            raise ValueError(f"unknown prediction mode {self.kind!r}")
        if self.samples < 1:
            raise ValueError("posterior mean needs at least one sample")

    @classmethod
    def parse(cls, text: str, samples: int = 50) -> "PredictionMode":
        key = text.strip().lower().replace("-", "_")
        if key in ("single", "single_sample"):
            return SingleSample()
        if key in ("posterior_mean", "mean"):
            return PosteriorMean(samples)
        if key in ("deterministic", "det"):
            return Deterministic()
        raise ValueError(f"unknown prediction mode {text!r}")

    @property
    def stochastic(self) -> bool:
        return self.kind != "deterministic"

    def __str__(self):
        return f"posterior_mean({self.samples})" if self.kind == "posterior_mean" else self.kind


def SingleSample() -> PredictionMode:
    return PredictionMode("single", 1)


def PosteriorMean(k: int = 50) -> PredictionMode:
    return PredictionMode("posterior_mean", k)


def Deterministic() -> PredictionMode:
    return PredictionMode("deterministic", 1)


# ---------------------------------------------------------------------------
# metrics

def _pair(pred, truth):
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ShapeError(f"prediction shape {pred.shape} != truth shape {truth.shape}")
    return pred, truth


def mse(pred, truth) -> float:
    """Mean over every element of the squared difference."""
    pred, truth = _pair(pred, truth)
    return float(np.mean((pred - truth) ** 2))


def mape(pred, truth, epsilon: float = 1e-8) -> float:
    """Mean absolute percentage error; ``epsilon`` floors |truth|."""
    pred, truth = _pair(pred, truth)
    return float(100.0 * np.mean(np.abs(truth - pred) / np.maximum(np.abs(truth), epsilon)))


# ---------------------------------------------------------------------------
# predictors

@dataclass(frozen=True)
class PersistencePredictor:
    """Repeats the most recent frame; exact on constant series."""
    order: int
    n_visible: int

    def past_batch(self, past):
        arr = np.asarray(past, dtype=np.float64)
        single = arr.ndim == 2
        arr = arr[None] if single else arr
        if arr.shape[1:] != (self.order, self.n_visible):
            raise ShapeError(f"history shape {arr.shape[1:]} != ({self.order}, {self.n_visible})")
        return arr, single


def ta_parameter_count(model) -> int:
    """Number of parameters in the unrolled prediction network."""
    base = model.base.weights.size + model.n_visible + model.n_hidden
    if isinstance(model, TrbmParams):
        return base + model.delayed.size
    if isinstance(model, CrbmParams):
        return base + model.delayed_vh.size
    raise TypeError(f"not a temporal model: {type(model).__name__}")


def predict(model, past, mode: PredictionMode, gibbs_steps: int = 100, rng=0) -> np.ndarray:
    """Predict the present frame for a batch of histories (K, T, N)."""
    if isinstance(model, PersistencePredictor):
        arr, _ = model.past_batch(past)
        return arr[:, -1, :].copy()
    if not mode.stochastic:
        return ta_forward(model, past)[0]
    rng = as_stream(rng)
    if mode.samples == 1:
        return model.generate(past, gibbs_steps, rng.child(0))
    total = None
    for k in range(mode.samples):
        g = model.generate(past, gibbs_steps, rng.child(k))
        total = g if total is None else total + g
    return total / mode.samples


def _effective_reps(model, mode: PredictionMode, repetitions: int) -> int:
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    if isinstance(model, PersistencePredictor) or not mode.stochastic:
        return 1
    return repetitions


@dataclass
class FillInResult:
    mode: str
    metric_name: str
    mean: float
    sd: float
    per_repetition: np.ndarray
    predictions: np.ndarray          # first repetition, (K, N)
    per_window: np.ndarray           # squared error per window averaged over repetitions
    source_index: np.ndarray
    units: str = "normalized"

    @property
    def n_trials(self) -> int:
        return len(self.per_repetition)


def fill_in(model, windows: WindowBatch, mode: PredictionMode, gibbs_steps: int = 100,
            rng=0, repetitions: int = 100) -> FillInResult:
    """Generate each window's present frame from its history and score it.

    Repetition ``r`` draws from ``rng.child(r).child(0)``, the same lane a
    one-step :func:`free_run` uses.
    """
    rng = as_stream(rng)
    reps = _effective_reps(model, mode, repetitions)
    per_rep = np.empty(reps)
    per_window = np.zeros(len(windows))
    first = None
    for r in range(reps):
        pred = predict(model, windows.past, mode, gibbs_steps, rng.child(r).child(0))
        se = np.mean((pred - windows.present) ** 2, axis=1)
        per_rep[r] = se.mean()
        per_window += se / reps
        if first is None:
            first = pred
    return FillInResult(str(mode), "MSE", float(per_rep.mean()), float(per_rep.std()),
                        per_rep, first, per_window, windows.source_index.copy())


@dataclass
class HorizonReport:
    metric_name: str
    values: np.ndarray
    dispersion: np.ndarray
    n_trials: int
    units: str
    mode: str = ""

    @property
    def horizon(self) -> int:
        return len(self.values)


def free_run(model, frames, present_indices, horizon: int = 6,
             mode: PredictionMode | None = None, rng=0, repetitions: int = 1,
             gibbs_steps: int = 100, metric: str = "MSE",
             stats: NormalizationStats | None = None, epsilon: float = 1e-8) -> HorizonReport:
    """Generate ``horizon`` frames autonomously after each start index.

    ``frames`` is the normalised sequence; generation for start ``s`` is
    seeded with ``frames[s-T:s]`` and scored against ``frames[s:s+horizon]``.
    Predictions are fed back as history. MAPE is computed after mapping both
    sides back to original units with ``stats``.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    mode = mode or SingleSample()
    metric = metric.upper()
    if metric not in ("MSE", "MAPE"):
        raise ValueError(f"unknown metric {metric!r}")
    frames = np.asarray(getattr(frames, "frames", frames), dtype=np.float64)
    starts = np.asarray(present_indices, dtype=np.int64).reshape(-1)
    order = model.order
    if len(starts) == 0:
        raise ValueError("no start indices")
    if starts.min() < order:
        raise ValueError(f"start index {starts.min()} leaves fewer than {order} history frames")
    if starts.max() + horizon > len(frames):
        raise ValueError(
            f"insufficient ground truth: start {starts.max()} + horizon {horizon} > {len(frames)} frames")
    if metric == "MAPE" and stats is None:
        stats = NormalizationStats.identity(frames.shape[1])
    rng = as_stream(rng)
    reps = _effective_reps(model, mode, repetitions)
    offsets = np.arange(-order, 0)
    per_rep = np.empty((reps, horizon))
    for r in range(reps):
        hist = frames[starts[:, None] + offsets[None, :]]
        for k in range(horizon):
            pred = predict(model, hist, mode, gibbs_steps, rng.child(r).child(k))
            truth = frames[starts + k]
            if metric == "MSE":
                per_rep[r, k] = mse(pred, truth)
            else:
                per_rep[r, k] = mape(stats.invert(pred), stats.invert(truth), epsilon)
            hist = np.concatenate([hist[:, 1:, :], pred[:, None, :]], axis=1)
    units = "normalized" if metric == "MSE" else "original (percent)"
    return HorizonReport(metric, per_rep.mean(axis=0), per_rep.std(axis=0), reps, units, str(mode))


def mlp_baseline(model_kind: str, frames, schedule, rng=None, order: int = 6,
                 n_hidden: int = 100, visible_kind=UnitKind.GAUSSIAN) -> TrainResult:
    """Deterministic predictor with the prediction-network architecture.

    Trained by backpropagation alone (static weights and biases included);
    evaluate it with ``Deterministic()``.
    """
    return train_mlp(model_kind, frames, schedule, order, n_hidden, visible_kind, rng)


# ---------------------------------------------------------------------------
# report files

def write_fill_in_report(path, result: FillInResult):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["window", "source_index", "squared_error", "metric", "units"])
        for k, (idx, se) in enumerate(zip(result.source_index, result.per_window)):
            w.writerow([k, int(idx), repr(float(se)), "MSE", result.units])


def write_horizon(path, report: HorizonReport):
    """Plot data: one row per generated step."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "mean", "sd", "metric", "units"])
        for k, (m, s) in enumerate(zip(report.values, report.dispersion), start=1):
            w.writerow([k, repr(float(m)), repr(float(s)), report.metric_name, report.units])


def summary_text(model_name: str, fill: FillInResult | None, horizon: HorizonReport | None) -> str:
    lines = [f"model: {model_name}"]
    if fill is not None:
        lines += [
            f"fill-in metric: MSE ({fill.units} units)",
            f"fill-in mode: {fill.mode}",
            f"fill-in windows: {len(fill.per_window)}",
            f"fill-in repetitions: {fill.n_trials}",
            f"fill-in MSE: {fill.mean:.6g} +/- {fill.sd:.6g}",
        ]
    if horizon is not None:
        lines += [
            f"free-run metric: {horizon.metric_name} ({horizon.units} units)",
            f"free-run mode: {horizon.mode}",
            f"free-run trials: {horizon.n_trials}",
        ]
        lines += [f"  step {k}: {m:.6g} +/- {s:.6g}"
                  for k, (m, s) in enumerate(zip(horizon.values, horizon.dispersion), start=1)]
    return "\n".join(lines) + "\n"
