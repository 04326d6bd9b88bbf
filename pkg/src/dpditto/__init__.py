"""Simulator and analytics for personalized federated learning with
differential privacy (DP-Ditto)."""

__version__ = "0.1.0"

from . import blr, bounds, core, data, dp, fairness, fedsim, lambdaopt, models  # noqa: E402
from .core import (AssumptionParams, ClientDataset, PrivacySpec, TrainingConfig,  # noqa: E402
                   partition_dataset, seeded_rng)
from .errors import *  # noqa: E402,F401,F403
