"""Seeded random streams.

Every stochastic routine takes an :class:`RngStream` instead of touching
global state. A stream is identified by ``(seed, stream_id)`` plus an
optional path of child indices, and the same identity always produces the
same draws.
"""
from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


class RngStream:
    """A reproducible random lane backed by numpy's PCG64."""

    def __init__(self, seed: int, stream_id: int = 0, path: tuple[int, ...] = ()):
        self.seed = int(seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        self.path = tuple(int(p) for p in path)
        seq = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, *self.path))
        self._gen = np.random.Generator(np.random.PCG64(seq))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, path={self.path})"

    def child(self, index: int) -> "RngStream":
        """Independent sub-stream; does not advance this stream."""
        return RngStream(self.seed, self.stream_id, self.path + (index,))

    def fresh(self) -> "RngStream":
        """A copy of this stream rewound to its start."""
        return RngStream(self.seed, self.stream_id, self.path)

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def uniform(self, shape) -> np.ndarray:
        return self._gen.random(shape)

    def normal(self, shape) -> np.ndarray:
        return self._gen.standard_normal(shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)


def as_stream(rng) -> RngStream:
    """Accept an int seed or an existing stream."""
    if isinstance(rng, (RngStream, RowStreams)):
        return rng
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng))
    raise TypeError(f"expected RngStream or int seed, got {type(rng).__name__}")


class RowStreams:
    """One stream per batch row; draws are stacked so row ``i`` always comes
    from ``lanes[i]`` regardless of where that row sits in the batch."""

    def __init__(self, lanes):
        self.lanes = list(lanes)

    def __len__(self):
        return len(self.lanes)

    def _draw(self, method: str, shape):
        shape = tuple(np.atleast_1d(shape))
        if shape[0] != len(self.lanes):
            raise ValueError(f"leading dimension {shape[0]} != {len(self.lanes)} lanes")
        return np.stack([getattr(lane, method)(shape[1:]) for lane in self.lanes])

    def uniform(self, shape) -> np.ndarray:
        return self._draw("uniform", shape)

    def normal(self, shape) -> np.ndarray:
        return self._draw("normal", shape)

    def child(self, index: int) -> "RowStreams":
        return RowStreams(lane.child(index) for lane in self.lanes)
