"""Temporal RBMs (TRBM, CRBM) with temporal-autoencoding pretraining."""

__version__ = "0.1.0"

from .rbm import RbmParams, UnitKind, cd_update, energy, exact_partition  # noqa: E402
from .temporal import CrbmParams, TrbmParams  # noqa: E402
from .schedule import TaConfig, TrainingSchedule  # noqa: E402
from .autoencoding import ta_forward, ta_pretrain, train_mlp, train_staged  # noqa: E402

__all__ = [
    "RbmParams", "UnitKind", "cd_update", "energy", "exact_partition",
    "TrbmParams", "CrbmParams", "TaConfig", "TrainingSchedule",
    "ta_forward", "ta_pretrain", "train_mlp", "train_staged", "__version__",
]
