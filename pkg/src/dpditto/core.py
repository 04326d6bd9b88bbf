"""Shared domain types, seeded randomness and dataset partitioning."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidPartitionError, NumericalError, ShapeError

# Stream tags for ``seeded_rng``; each purpose gets its own key space so that,
# e.g., DP noise draws never shift when data shuffling changes.
STREAM_DATA = 0
STREAM_NOISE = 1
STREAM_INIT = 2
STREAM_MINIBATCH = 3
STREAM_ORACLE = 4
STREAM_SYNTH = 5


def seeded_rng(seed: int, stream_id: int | Sequence[int] = 0) -> np.random.Generator:
    """Return an independent, reproducible generator for ``(seed, stream_id)``.

    ``stream_id`` may be a single integer or a tuple of integers such as
    ``(STREAM_NOISE, client, round)``.  Streams are derived with
    ``SeedSequence.spawn_key`` so distinct ids give statistically independent
    sequences regardless of the order in which they are created.
    """
    if seed < 0:
        raise ValueError("seed must be a non-negative integer")
    key = (int(stream_id),) if np.isscalar(stream_id) else tuple(int(s) for s in stream_id)
    if any(k < 0 for k in key):
        raise ValueError("stream ids must be non-negative")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))


def model_vector(values, dim: int | None = None) -> np.ndarray:
    """Validate and return a flat float64 parameter vector."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ShapeError(f"model vector must be 1-D and non-empty, got shape {v.shape}")
    if dim is not None and v.size != dim:
        raise ShapeError(f"expected dimension {dim}, got {v.size}")
    if not np.all(np.isfinite(v)):
        raise ValueError("model vector has non-finite entries")
    return v


@dataclass(frozen=True)
class ClientDataset:
    """Features ``(b, d)`` and targets ``(b,)``; integer targets are class labels."""

    features: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        x = np.array(self.features, dtype=np.float64)
        y = np.array(self.targets)
        if x.ndim != 2:
            raise ShapeError(f"features must be 2-D, got shape {x.shape}")
        if y.ndim != 1 or y.shape[0] != x.shape[0]:
            raise ShapeError(f"targets shape {y.shape} does not match {x.shape[0]} samples")
        if x.shape[0] < 1:
            raise ShapeError("dataset must hold at least one sample")
        x.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "targets", y)

    @property
    def size(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "ClientDataset":
        idx = np.asarray(idx, dtype=np.intp)
        return ClientDataset(self.features[idx], self.targets[idx])


@dataclass(frozen=True)
class PrivacySpec:
    epsilon: float
    delta: float
    clip_c: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if not self.clip_c > 0:
            raise ValueError("clip_c must be positive")


@dataclass(frozen=True)
class TrainingConfig:
    n_clients: int
    rounds: int
    eta_g: float
    eta_l: float
    lam: float
    seed: int = 0
    local_epochs: int = 1
    personal_epochs: int = 1
    batch_size: int | None = None

    def __post_init__(self):
        if self.n_clients < 1:
            raise ValueError("n_clients must be >= 1")
        if self.rounds < 0:
            raise ValueError("rounds must be >= 0")
        if not (self.eta_g > 0 and self.eta_l > 0):
            raise ValueError("learning rates must be positive")
        if not 0 <= self.lam <= 2:
            raise ValueError("lam must lie in [0, 2]")
        if self.local_epochs < 1 or self.personal_epochs < 1:
            raise ValueError("epoch counts must be >= 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be positive when set")


@dataclass(frozen=True)
class AssumptionParams:
    """Strong convexity / smoothness constants and initial gaps.

    ``psi1`` is the initial global loss gap and ``psi2`` the initial squared
    distance of a personalized model from its optimum.
    """

    mu: float
    l_smooth: float
    g0: float
    m_dist: float
    psi1: float
    psi2: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if self.l_smooth < self.mu:
            raise ValueError("l_smooth must be >= mu")
        for name in ("g0", "m_dist", "psi1", "psi2"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def violations(self, eta_g: float, lam: float) -> list[str]:
        """Names of the step-size / weighting conditions that fail."""
        out = []
        if eta_g > 2.0 / self.l_smooth:
            out.append("eta_g > 2/L")
        if lam < 2 and not self.mu > (2 - 2 * lam) / (2 - lam):
            out.append("mu <= (2-2*lam)/(2-lam)")
        return out


@dataclass(frozen=True)
class Partition:
    """Client datasets plus the indices into the source corpus."""

    datasets: list[ClientDataset]
    indices: list[np.ndarray] = field(repr=False)
    dropped: int = 0

    def __len__(self):
        return len(self.datasets)

    def __iter__(self):
        return iter(self.datasets)

    def __getitem__(self, i):
        return self.datasets[i]


def partition_dataset(full: ClientDataset, n: int, scheme: str = "iid",
                      rng: np.random.Generator | None = None, k: int = 2) -> Partition:
    """Split ``full`` into ``n`` equally sized client datasets.

    Each client receives ``floor(size / n)`` samples; the surplus is dropped.
    ``scheme="iid"`` splits a random permutation.  ``scheme="label-shard"``
    orders samples by label (random order inside a label), cuts the sequence
    into ``n * k`` contiguous shards and deals ``k`` random shards to each
    client.  Shards are label-pure whenever every class count is a multiple
    of the shard size.
    """
    if n < 1 or full.size < n:
        raise InvalidPartitionError(f"cannot split {full.size} samples across {n} clients")
    rng = rng if rng is not None else seeded_rng(0, STREAM_DATA)
    per_client = full.size // n
    used = per_client * n

    if scheme == "iid":
        perm = rng.permutation(full.size)[:used]
        idx = [np.sort(perm[i * per_client:(i + 1) * per_client]) for i in range(n)]
    elif scheme in ("label-shard", "label_shard", "shard"):
        if k < 1 or per_client < k:
            raise InvalidPartitionError(f"label-shard({k}) needs at least {k} samples per client")
        labels = np.asarray(full.targets)
        jitter = rng.permutation(full.size)
        order = jitter[np.argsort(labels[jitter], kind="stable")][:used]
        # shard sizes for one client: as equal as possible, summing to per_client
        sizes = np.full(k, per_client // k)
        sizes[: per_client % k] += 1
        shard_sizes = np.tile(sizes, n)
        bounds = np.concatenate([[0], np.cumsum(shard_sizes)])
        shards = [order[bounds[i]:bounds[i + 1]] for i in range(n * k)]
        # deal shards so each client gets one of each size class
        deal = np.arange(n * k).reshape(n, k)
        for j in range(k):
            deal[:, j] = deal[rng.permutation(n), j]
        idx = [np.sort(np.concatenate([shards[s] for s in deal[i]])) for i in range(n)]
    else:
        raise InvalidPartitionError(f"unknown partition scheme {scheme!r}")

    return Partition([full.subset(i) for i in idx], idx, full.size - used)


def finite_or_raise(v: np.ndarray, what: str, round: int | None = None,
                    client: int | None = None) -> None:
    if not np.all(np.isfinite(v)):
        raise NumericalError(f"non-finite values in {what}", round=round, client=client)


def ln_inv(delta: float) -> float:
    return math.log(1.0 / delta)
