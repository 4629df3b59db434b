"""Training schedules and the per-epoch metrics log."""
from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, field


class OutputActivation(enum.Enum):
    SIGMOID = "sigmoid"
    IDENTITY = "identity"


@dataclass
class TaConfig:
    """Settings for temporal-autoencoding pretraining.

    ``output_activation=None`` picks identity for Gaussian visibles and
    sigmoid for binary ones.
    """
    epochs_per_delay: int = 50
    learning_rate: float = 0.05
    minibatch_size: int = 100
    update_biases: bool = False
    output_activation: OutputActivation | None = None
    train_static: bool = False

    def __post_init__(self):
        if self.epochs_per_delay < 0:
            raise ValueError("epochs_per_delay must be >= 0")
        if self.minibatch_size < 1:
            raise ValueError("minibatch_size must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.output_activation is not None and not isinstance(self.output_activation, OutputActivation):
            self.output_activation = OutputActivation(str(self.output_activation).lower())


@dataclass
class TrainingSchedule:
    static_epochs: int = 100
    ta: TaConfig = field(default_factory=TaConfig)
    joint_epochs_ta: int = 100
    joint_epochs_cd: int = 400
    cd_steps: int = 1
    seed: int = 0
    learning_rate: float = 1e-3
    momentum: float = 0.9
    minibatch_size: int = 100
    sparsity_target: float = 0.1
    sparsity_strength: float = 0.1

    def __post_init__(self):
        if self.cd_steps < 1:
            raise ValueError("cd_steps must be >= 1")
        if self.minibatch_size < 1:
            raise ValueError("minibatch_size must be >= 1")

    def joint_cd_epochs(self, use_ta: bool) -> int:
        return self.joint_epochs_ta if use_ta else self.joint_epochs_cd

    def total_epochs(self, order: int, use_ta: bool) -> int:
        ta = self.ta.epochs_per_delay * order if use_ta else 0
        return self.static_epochs + ta + self.joint_cd_epochs(use_ta)


class MetricsLog:
    """Rows of (epoch, stage, loss_name, loss_value); epochs count across stages."""

    header = ("epoch", "stage", "loss_name", "loss_value")

    def __init__(self):
        self.rows: list[tuple[int, str, str, float]] = []

    def record(self, stage: str, loss_name: str, value: float):
        self.rows.append((len(self.rows) + 1, stage, loss_name, float(value)))

    def stage_rows(self, stage: str):
        return [r for r in self.rows if r[1] == stage]

    def values(self, stage: str) -> list[float]:
        return [r[3] for r in self.stage_rows(stage)]

    def __len__(self):
        return len(self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        for epoch, stage, name, value in self.rows:
            w.writerow((epoch, stage, name, repr(value)))
        return buf.getvalue()

    def write(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())
