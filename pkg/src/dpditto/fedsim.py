"""DP-Ditto training loop.

Each round every client (1) restarts its local model from the broadcast
global model and takes a gradient step, (2) clips and perturbs the result
before upload, and (3) moves its personalized model using the *previous*
broadcast global model.  The server averages the noisy uploads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import dp
from .core import (STREAM_INIT, STREAM_MINIBATCH, STREAM_NOISE, ClientDataset,
                   PrivacySpec, TrainingConfig, finite_or_raise, seeded_rng)
from .errors import InvalidAggregationError, ShapeError
from .models import LossModel


@dataclass
class RoundLog:
    round: int
    global_model: np.ndarray
    losses: np.ndarray
    accuracies: np.ndarray
    empirical_fairness: float
    mean_accuracy: float
    global_loss: float = math.nan

    @property
    def mean_loss(self) -> float:
        return float(np.mean(self.losses))


@dataclass
class TrainingRun:
    logs: list[RoundLog]
    global_model: np.ndarray
    personalized: list[np.ndarray]
    calibration: dp.NoiseCalibration | None
    heuristic: bool = False
    notes: list[str] = field(default_factory=list)

    def __len__(self):
        return len(self.logs)

    def __iter__(self):
        return iter(self.logs)

    def __getitem__(self, i):
        return self.logs[i]


def local_step(u: np.ndarray, model: LossModel, data: ClientDataset, eta_g: float) -> np.ndarray:
    return u - eta_g * model.grad(u, data)


def personalized_step(p: np.ndarray, omega: np.ndarray, model: LossModel, data: ClientDataset,
                      eta_l: float, lam: float) -> np.ndarray:
    if not 0 <= lam <= 2:
        raise ValueError("lam must lie in [0, 2]")
    if np.shape(p) != np.shape(omega):
        raise ShapeError(f"personalized model {np.shape(p)} and global model {np.shape(omega)} differ")
    g = (1 - lam / 2) * model.grad(p, data) if lam < 2 else 0.0
    return p - eta_l * (g + lam * (p - omega))


def aggregate(uploads: Sequence[np.ndarray]) -> np.ndarray:
    if len(uploads) == 0:
        raise InvalidAggregationError("cannot aggregate an empty list of uploads")
    shapes = {np.shape(u) for u in uploads}
    if len(shapes) != 1:
        raise ShapeError(f"uploads have mismatched shapes {sorted(shapes)}")
    # fixed client order keeps the sum bit-reproducible
    total = np.zeros_like(np.asarray(uploads[0], dtype=np.float64))
    for u in uploads:
        total = total + u
    return total / len(uploads)


def empirical_fairness(losses) -> float:
    """Population variance of per-client losses."""
    losses = np.asarray(losses, dtype=np.float64)
    if losses.size == 0:
        raise ValueError("need at least one loss")
    return float(np.var(losses))


def _batch(data: ClientDataset, batch_size: int | None, rng) -> ClientDataset:
    if batch_size is None or batch_size >= data.size:
        return data
    return data.subset(rng.choice(data.size, size=batch_size, replace=False))


def run_training(config: TrainingConfig, privacy: PrivacySpec, model: LossModel,
                 datasets: Sequence[ClientDataset], *,
                 eval_datasets: Sequence[ClientDataset] | None = None,
                 omega0: np.ndarray | None = None,
                 personal0: Sequence[np.ndarray] | None = None,
                 on_upload: Callable[[int, int, np.ndarray, np.ndarray], None] | None = None,
                 ) -> TrainingRun:
    """Run ``config.rounds`` rounds of DP-Ditto and log each round.

    ``eval_datasets`` (held-out data) is used for accuracy; fairness and the
    logged losses always use the training data.  ``on_upload(round, client,
    clipped, noisy)`` observes every upload.  With ``privacy.epsilon = inf``
    no noise is added.
    """
    n = config.n_clients
    if len(datasets) != n:
        raise ShapeError(f"expected {n} client datasets, got {len(datasets)}")
    if eval_datasets is not None and len(eval_datasets) != n:
        raise ShapeError("eval_datasets must have one entry per client")
    sizes = {d.size for d in datasets}
    if len(sizes) != 1:
        raise ShapeError(f"client datasets must be equally sized, got sizes {sorted(sizes)}")

    omega = model.init_params(seeded_rng(config.seed, STREAM_INIT)) if omega0 is None \
        else np.array(omega0, dtype=np.float64)
    if omega.shape != (model.dim,):
        raise ShapeError(f"initial global model has shape {omega.shape}, expected ({model.dim},)")
    personal = [omega.copy() for _ in range(n)] if personal0 is None \
        else [np.array(p, dtype=np.float64) for p in personal0]

    calibration = None
    sigma_u = 0.0
    if config.rounds > 0:
        delta_s = dp.sensitivity(privacy.clip_c, datasets[0].size)
        calibration = dp.calibrate(delta_s, config.rounds, n, privacy.epsilon, privacy.delta)
        sigma_u = calibration.sigma_u

    evals = eval_datasets if eval_datasets is not None else datasets
    logs: list[RoundLog] = []
    for t in range(config.rounds):
        uploads = []
        new_personal = []
        for i, data in enumerate(datasets):
            mb_rng = seeded_rng(config.seed, (STREAM_MINIBATCH, i, t))
            u = omega.copy()
            for _ in range(config.local_epochs):
                u = local_step(u, model, _batch(data, config.batch_size, mb_rng), config.eta_g)
            finite_or_raise(u, "local model", round=t, client=i)
            clipped = dp.clip_model(u, privacy.clip_c)
            noisy = dp.perturb(clipped, sigma_u, seeded_rng(config.seed, (STREAM_NOISE, i, t)))
            if on_upload is not None:
                on_upload(t, i, clipped, noisy)
            uploads.append(noisy)

            p = personal[i]
            for _ in range(config.personal_epochs):
                p = personalized_step(p, omega, model, _batch(data, config.batch_size, mb_rng),
                                      config.eta_l, config.lam)
            finite_or_raise(p, "personalized model", round=t, client=i)
            new_personal.append(p)

        omega = aggregate(uploads)
        finite_or_raise(omega, "global model", round=t)
        personal = new_personal

        losses = np.array([model.loss(p, d) for p, d in zip(personal, datasets)])
        bad = np.flatnonzero(~np.isfinite(losses))
        if bad.size:
            finite_or_raise(losses, "personalized losses", round=t, client=int(bad[0]))
        if model.is_classifier:
            accs = np.array([model.accuracy(p, d) for p, d in zip(personal, evals)])
        else:
            accs = np.full(n, math.nan)
        global_loss = float(np.mean([model.loss(omega, d) for d in datasets]))
        logs.append(RoundLog(
            round=t + 1,
            global_model=omega.copy(),
            losses=losses,
            accuracies=accs,
            empirical_fairness=empirical_fairness(losses),
            mean_accuracy=float(np.mean(accs)),
            global_loss=global_loss,
        ))

    return TrainingRun(logs, omega, personal, calibration, heuristic=model.kind == "mlp")
