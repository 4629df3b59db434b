"""Sequence datasets: CSV ingestion, normalisation, windows, generators."""
from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .rng import RngStream, as_stream

log = logging.getLogger(__name__)

SD_FLOOR = 1e-8


class DataError(ValueError):
    """Malformed or insufficient input data."""


@dataclass
class NormalizationStats:
    mean: np.ndarray
    sd: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        self.sd = np.maximum(np.asarray(self.sd, dtype=np.float64).reshape(-1), SD_FLOOR)

    @classmethod
    def identity(cls, n: int) -> "NormalizationStats":
        return cls(np.zeros(n), np.ones(n))

    def apply(self, x):
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.sd

    def invert(self, x):
        return np.asarray(x, dtype=np.float64) * self.sd + self.mean


@dataclass
class SequenceDataset:
    frames: np.ndarray
    dim_names: list[str] | None = None
    norm: NormalizationStats | None = None

    def __post_init__(self):
        f = np.asarray(self.frames, dtype=np.float64)
        if f.ndim == 1:
            f = f[:, None]
        if f.ndim != 2:
            raise DataError(f"frames must be a (time, dims) matrix, got shape {f.shape}")
        if not np.all(np.isfinite(f)):
            raise DataError("frames contain NaN or Inf")
        self.frames = f
        if self.norm is None:
            self.norm = NormalizationStats.identity(f.shape[1])

    def __len__(self):
        return self.frames.shape[0]

    @property
    def n_dims(self) -> int:
        return self.frames.shape[1]

    def denormalized(self) -> np.ndarray:
        return self.norm.invert(self.frames)


@dataclass
class Window:
    past_frames: np.ndarray
    present_frame: np.ndarray
    source_index: int


@dataclass
class WindowBatch:
    """Stacked windows: ``past`` (K, T, N), ``present`` (K, N), ``source_index`` (K,)."""
    past: np.ndarray
    present: np.ndarray
    source_index: np.ndarray

    def __len__(self):
        return len(self.present)

    def __iter__(self):
        for p, v, i in zip(self.past, self.present, self.source_index):
            yield Window(p, v, int(i))

    def subset(self, idx) -> "WindowBatch":
        return WindowBatch(self.past[idx], self.present[idx], self.source_index[idx])


# ---------------------------------------------------------------------------
# CSV

def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def load_csv(path, has_header: bool | None = None) -> SequenceDataset:
    """Read a rectangular numeric CSV (rows are time steps).

    ``has_header=None`` treats the first row as column names when none of
    its cells is numeric. Parse errors name the 1-based data row and column
    of the bad cell.
    """
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from exc
    names = None
    rows: list[list[float]] = []
    with fh:
        reader = csv.reader(fh)
        width = None
        for line_no, raw in enumerate(reader):
            if not raw or all(not c.strip() for c in raw):
                continue
            if has_header is None:
                has_header = not any(_is_number(c) for c in raw)
            if has_header and names is None:
                names = [c.strip() for c in raw]
                width = len(names)
                continue
            row_no = len(rows) + 1
            if width is None:
                width = len(raw)
            if len(raw) != width:
                raise DataError(f"{path}: row {row_no} has {len(raw)} columns, expected {width}")
            vals = []
            for col_no, cell in enumerate(raw, start=1):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise DataError(
                        f"{path}: non-numeric value {cell.strip()!r} at row {row_no}, column {col_no}"
                    ) from None
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    frames = np.array(rows, dtype=np.float64)
    if not np.all(np.isfinite(frames)):
        bad = np.argwhere(~np.isfinite(frames))[0]
        raise DataError(f"{path}: non-finite value at row {bad[0] + 1}, column {bad[1] + 1}")
    return SequenceDataset(frames, names)


def save_csv(dataset_or_frames, path, header: list[str] | None = None):
    """Write frames with ``repr`` floats so that loading is bit-exact."""
    frames = getattr(dataset_or_frames, "frames", dataset_or_frames)
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    if header is None and isinstance(dataset_or_frames, SequenceDataset):
        header = dataset_or_frames.dim_names
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(header)
        for row in frames:
            w.writerow([repr(float(x)) for x in row])


# ---------------------------------------------------------------------------
# normalisation and windows

def normalize(dataset: SequenceDataset, train_range: tuple[int, int] | None = None):
    """Z-score each dimension with statistics from ``train_range`` only.

    Population standard deviation; constant dimensions map to zero.
    """
    frames = dataset.frames
    if len(frames) == 0:
        raise DataError("cannot normalise an empty dataset")
    lo, hi = (0, len(frames)) if train_range is None else train_range
    ref = frames[lo:hi]
    if len(ref) == 0:
        raise DataError(f"training range {lo}:{hi} is empty")
    stats = NormalizationStats(ref.mean(axis=0), ref.std(axis=0))
    return replace(dataset, frames=stats.apply(frames), norm=stats), stats


def apply_normalization(dataset: SequenceDataset, stats: NormalizationStats) -> SequenceDataset:
    return replace(dataset, frames=stats.apply(dataset.frames), norm=stats)


def denormalize(frames, stats: NormalizationStats) -> np.ndarray:
    return stats.invert(frames)


def window_batch(dataset, order: int, start: int = 0, stop: int | None = None) -> WindowBatch:
    """All consecutive (order + 1)-frame windows inside ``[start, stop)``.

    There are ``stop - start - order`` of them; window ``k`` has present frame
    ``start + order + k``.
    """
    frames = getattr(dataset, "frames", dataset)
    frames = np.asarray(frames, dtype=np.float64)
    stop = len(frames) if stop is None else stop
    if not 0 <= start <= stop <= len(frames):
        raise DataError(f"range {start}:{stop} outside a sequence of length {len(frames)}")
    if order < 1:
        raise DataError("order must be >= 1")
    count = stop - start - order
    if count < 1:
        raise DataError(f"range {start}:{stop} is shorter than order + 1 = {order + 1} frames")
    seg = frames[start:stop]
    idx = np.arange(count)[:, None] + np.arange(order)[None, :]
    past = seg[idx]
    present = seg[order:order + count].copy()
    return WindowBatch(past, present, np.arange(start + order, start + order + count))


def windows(dataset, order: int, start: int = 0, stop: int | None = None):
    """Iterate :class:`Window` objects, oldest-first history layout."""
    yield from window_batch(dataset, order, start, stop)


# ---------------------------------------------------------------------------
# univariate state augmentation

def augment_univariate(series, chunk: int = 4) -> SequenceDataset:
    """Group a univariate series into successive non-overlapping chunks.

    Frame ``t`` is ``series[t*chunk : (t+1)*chunk]``; a trailing remainder is
    dropped with a warning.
    """
    x = np.asarray(series, dtype=np.float64).reshape(-1)
    if chunk < 1:
        raise DataError("chunk must be >= 1")
    if len(x) < 2 * chunk:
        raise DataError(f"series of length {len(x)} is too short for two chunks of {chunk}")
    n = len(x) // chunk
    dropped = len(x) - n * chunk
    if dropped:
        warnings.warn(f"dropping {dropped} trailing value(s) that do not fill a chunk of {chunk}",
                      stacklevel=2)
    names = [f"lag{k}" for k in range(chunk)]
    return SequenceDataset(x[:n * chunk].reshape(n, chunk), names)


def flatten_frames(frames) -> np.ndarray:
    """Inverse of :func:`augment_univariate` on the retained prefix."""
    return np.asarray(getattr(frames, "frames", frames), dtype=np.float64).reshape(-1)


# ---------------------------------------------------------------------------
# generators

DEFAULT_FREQS = (1 / 23.0, 1 / 31.0, 1 / 41.0, 1 / 53.0)


def synth_multisine(dims: int = 4, length: int = 3000, freqs=None, noise_sd: float = 0.05,
                    seed: int = 0) -> SequenceDataset:
    """Independent sinusoids plus white noise.

    Dimension ``i`` at step ``t`` is ``sin(2 pi f_i t + phi_i) + noise_sd * e``
    with phases uniform on [0, 2 pi) and standard normal ``e``, both drawn
    from ``seed``. The sinusoid has variance 1/2, so the stationary variance
    of a dimension is ``0.5 + noise_sd**2``.
    """
    if dims < 1:
        raise DataError("dims must be >= 1")
    if length < 1:
        raise DataError("length must be positive")
    if noise_sd < 0:
        raise DataError("noise_sd must be non-negative")
    if freqs is None:
        freqs = [DEFAULT_FREQS[i % len(DEFAULT_FREQS)] * (1 + 0.1 * (i // len(DEFAULT_FREQS)))
                 for i in range(dims)]
    freqs = np.asarray(freqs, dtype=np.float64).reshape(-1)
    if freqs.shape != (dims,):
        raise DataError(f"need {dims} frequencies, got {freqs.size}")
    rng = RngStream(seed, stream_id=0x5EED)
    phases = rng.uniform(dims) * 2 * np.pi
    t = np.arange(length, dtype=np.float64)[:, None]
    clean = np.sin(2 * np.pi * freqs[None, :] * t + phases[None, :])
    noise = rng.normal((length, dims)) * noise_sd
    return SequenceDataset(clean + noise, [f"sin{i}" for i in range(dims)])


def synth_ar1(dims: int, length: int, coef: float = 0.9, noise_sd: float = 0.1,
              seed: int = 0) -> SequenceDataset:
    """Independent order-1 autoregressive channels, x_t = coef x_{t-1} + e_t."""
    if length < 1:
        raise DataError("length must be positive")
    rng = RngStream(seed, stream_id=0xA121)
    eps = rng.normal((length, dims)) * noise_sd
    x = np.zeros((length, dims))
    x[0] = eps[0] / np.sqrt(max(1 - coef ** 2, 1e-12))
    for t in range(1, length):
        x[t] = coef * x[t - 1] + eps[t]
    return SequenceDataset(x, [f"ar{i}" for i in range(dims)])
