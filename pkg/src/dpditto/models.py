"""Loss models with flattened parameter vectors.

Every model exposes ``loss``, ``grad`` and (for classifiers) ``accuracy`` on
a :class:`~dpditto.core.ClientDataset`.  Parameters are a single 1-D vector so
clipping and noise act on the whole model at once.
"""

from __future__ import annotations

import numpy as np

from .core import ClientDataset
from .errors import ShapeError, UnsupportedMetricError


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def _cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    b = logits.shape[0]
    logp = _log_softmax(logits)
    loss = -logp[np.arange(b), labels].mean()
    dlogits = np.exp(logp)
    dlogits[np.arange(b), labels] -= 1.0
    return float(loss), dlogits / b


class LossModel:
    kind = "abstract"
    dim: int
    n_features: int

    def _check(self, w, data: ClientDataset):
        w = np.asarray(w, dtype=np.float64)
        if w.ndim != 1 or w.size != self.dim:
            raise ShapeError(f"{self.kind}: parameter vector has size {w.size}, expected {self.dim}")
        if data.dim != self.n_features:
            raise ShapeError(f"{self.kind}: data has {data.dim} features, expected {self.n_features}")
        return w

    def loss(self, w, data: ClientDataset) -> float:
        raise NotImplementedError

    def grad(self, w, data: ClientDataset) -> np.ndarray:
        raise NotImplementedError

    def loss_and_grad(self, w, data: ClientDataset):
        return self.loss(w, data), self.grad(w, data)

    def accuracy(self, w, data: ClientDataset) -> float:
        raise UnsupportedMetricError(f"accuracy is undefined for the {self.kind} model")

    def init_params(self, rng: np.random.Generator | None = None) -> np.ndarray:
        return np.zeros(self.dim)

    @property
    def is_classifier(self) -> bool:
        return False

    def kink_signature(self, w, data: ClientDataset):
        """Hashable summary of non-smooth regions; ``None`` for smooth models."""
        return None


class QuadraticModel(LossModel):
    """Least squares ``(1/b) ||X w - y||^2``."""

    kind = "quadratic"

    def __init__(self, n_features: int):
        self.n_features = int(n_features)
        self.dim = self.n_features

    def loss(self, w, data):
        w = self._check(w, data)
        r = data.features @ w - data.targets
        return float(r @ r) / data.size

    def grad(self, w, data):
        w = self._check(w, data)
        r = data.features @ w - data.targets
        return (2.0 / data.size) * (data.features.T @ r)

    def curvature(self, data: ClientDataset) -> tuple[float, float]:
        """Smallest and largest Hessian eigenvalues ``(mu, L)``."""
        ev = np.linalg.eigvalsh((2.0 / data.size) * data.features.T @ data.features)
        return float(ev[0]), float(ev[-1])


class MLRModel(LossModel):
    """Multinomial logistic regression; parameters are ``W`` (features x classes) then bias."""

    kind = "mlr"

    def __init__(self, n_features: int, n_classes: int):
        self.n_features = int(n_features)
        self.n_classes = int(n_classes)
        self.dim = (self.n_features + 1) * self.n_classes

    @property
    def is_classifier(self):
        return True

    def _unpack(self, w):
        k = self.n_classes
        return w[: self.n_features * k].reshape(self.n_features, k), w[self.n_features * k:]

    def logits(self, w, data):
        w = self._check(w, data)
        W, c = self._unpack(w)
        return data.features @ W + c

    def loss(self, w, data):
        return _cross_entropy(self.logits(w, data), data.targets.astype(np.intp))[0]

    def grad(self, w, data):
        return self.loss_and_grad(w, data)[1]

    def loss_and_grad(self, w, data):
        loss, dz = _cross_entropy(self.logits(w, data), data.targets.astype(np.intp))
        return loss, np.concatenate([(data.features.T @ dz).ravel(), dz.sum(axis=0)])

    def accuracy(self, w, data):
        pred = self.logits(w, data).argmax(axis=1)
        return float(np.mean(pred == data.targets))


class MLPModel(LossModel):
    """One hidden ReLU layer followed by a softmax output."""

    kind = "mlp"

    def __init__(self, n_features: int, hidden: int, n_classes: int):
        self.n_features = int(n_features)
        self.hidden = int(hidden)
        self.n_classes = int(n_classes)
        f, h, k = self.n_features, self.hidden, self.n_classes
        self._sizes = [f * h, h, h * k, k]
        self.dim = sum(self._sizes)

    @property
    def is_classifier(self):
        return True

    def _unpack(self, w):
        f, h, k = self.n_features, self.hidden, self.n_classes
        a, b_, c = np.cumsum(self._sizes)[:3]
        return w[:a].reshape(f, h), w[a:b_], w[b_:c].reshape(h, k), w[c:]

    def init_params(self, rng=None):
        # zero weights would leave every hidden unit dead under ReLU
        rng = rng if rng is not None else np.random.default_rng(0)
        W1 = rng.normal(0, np.sqrt(2.0 / self.n_features), size=(self.n_features, self.hidden))
        W2 = rng.normal(0, np.sqrt(1.0 / self.hidden), size=(self.hidden, self.n_classes))
        return np.concatenate([W1.ravel(), np.zeros(self.hidden), W2.ravel(), np.zeros(self.n_classes)])

    def _forward(self, w, data):
        w = self._check(w, data)
        W1, b1, W2, b2 = self._unpack(w)
        pre = data.features @ W1 + b1
        act = np.maximum(pre, 0.0)
        return pre, act, act @ W2 + b2

    def loss(self, w, data):
        return _cross_entropy(self._forward(w, data)[2], data.targets.astype(np.intp))[0]

    def grad(self, w, data):
        return self.loss_and_grad(w, data)[1]

    def loss_and_grad(self, w, data):
        W1, b1, W2, b2 = self._unpack(np.asarray(w, dtype=np.float64))
        pre, act, logits = self._forward(w, data)
        loss, dz = _cross_entropy(logits, data.targets.astype(np.intp))
        dW2 = act.T @ dz
        db2 = dz.sum(axis=0)
        dpre = (dz @ W2.T) * (pre > 0)
        dW1 = data.features.T @ dpre
        db1 = dpre.sum(axis=0)
        return loss, np.concatenate([dW1.ravel(), db1, dW2.ravel(), db2])

    def accuracy(self, w, data):
        pred = self._forward(w, data)[2].argmax(axis=1)
        return float(np.mean(pred == data.targets))

    def kink_signature(self, w, data):
        return (self._forward(w, data)[0] > 0).tobytes()


def make_model(kind: str, n_features: int, n_classes: int = 10, hidden: int = 16) -> LossModel:
    if kind == "quadratic":
        return QuadraticModel(n_features)
    if kind == "mlr":
        return MLRModel(n_features, n_classes)
    if kind == "mlp":
        return MLPModel(n_features, hidden, n_classes)
    raise ValueError(f"unknown model kind {kind!r}")


def loss(model: LossModel, w, data: ClientDataset) -> float:
    return model.loss(w, data)


def grad(model: LossModel, w, data: ClientDataset) -> np.ndarray:
    return model.grad(w, data)


def accuracy(model: LossModel, w, data: ClientDataset) -> float:
    return model.accuracy(w, data)


def finite_diff_check(model: LossModel, w, data: ClientDataset, step: float = 1e-5) -> float:
    """Largest per-coordinate relative error of ``grad`` against central differences.

    The relative error of coordinate ``i`` is ``|g_i - fd_i| / max(|g_i|, |fd_i|, floor)``
    with ``floor = 1e-4 * max|g| + 1e-10``, so coordinates that are numerically
    zero are judged against the gradient's overall scale.  For piecewise-smooth
    models, coordinates whose +/- step crosses a kink are skipped.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    w = np.asarray(w, dtype=np.float64)
    g = model.grad(w, data)
    base_sig = model.kink_signature(w, data)
    fd = np.empty_like(g)
    valid = np.ones(g.size, dtype=bool)
    for i in range(w.size):
        wp = w.copy()
        wm = w.copy()
        wp[i] += step
        wm[i] -= step
        if base_sig is not None and (model.kink_signature(wp, data) != base_sig
                                     or model.kink_signature(wm, data) != base_sig):
            valid[i] = False
        fd[i] = (model.loss(wp, data) - model.loss(wm, data)) / (2 * step)
    if not valid.any():
        return 0.0
    floor = 1e-4 * float(np.max(np.abs(g))) + 1e-10
    denom = np.maximum(np.maximum(np.abs(g), np.abs(fd)), floor)
    return float(np.max((np.abs(g - fd) / denom)[valid]))
