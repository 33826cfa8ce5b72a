"""MLP and compact CNN classifiers trained with Adam and early stopping."""
from dataclasses import asdict, dataclass, field
from typing import List, Tuple

import numpy as np

from ..errors import InvalidInputError, InvalidParameterError, TrainingError
from .base import ModelHandle, audit_probes, gradient_audit
from .nn import Adam, BatchNorm, Conv3x3, Dense, Dropout, MaxPool2, Network, ReLU, Reshape

QUALIFICATION_ACCURACY = 0.90
AUDIT_TOLERANCE = 1e-4
AUDIT_PROBES = 5


@dataclass(frozen=True)
class MlpConfig:
    hidden_dims: Tuple[int, ...] = (128, 64, 32, 16)
    dropout: float = 0.25
    batch_size: int = 128
    learning_rate: float = 1e-4
    patience: int = 100
    max_epochs: int = 500
    lr_factor: float = 0.1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        counts = (self.batch_size, self.patience, self.max_epochs) + self.hidden_dims
        if not self.hidden_dims or min(counts) < 1:
            raise InvalidParameterError("all counts must be >= 1")
        if not 0 <= self.dropout < 1:
            raise InvalidParameterError(f"dropout must lie in [0, 1), got {self.dropout}")
        if not self.learning_rate > 0:
            raise InvalidParameterError("learning_rate must be > 0")


@dataclass(frozen=True)
class CnnConfig:
    channels: Tuple[int, ...] = (8, 16)
    dropout: float = 0.25
    batch_size: int = 128
    learning_rate: float = 1e-4
    patience: int = 100
    max_epochs: int = 500
    lr_factor: float = 0.1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        counts = (self.batch_size, self.patience, self.max_epochs) + self.channels
        if len(self.channels) != 2 or min(counts) < 1:
            raise InvalidParameterError("need two channel counts and positive counts")
        if not 0 <= self.dropout < 1:
            raise InvalidParameterError(f"dropout must lie in [0, 1), got {self.dropout}")


@dataclass
class TrainReport:
    epochs_run: int
    best_epoch: int
    best_val_accuracy: float
    test_accuracy: float
    train_loss: List[float] = field(default_factory=list)
    val_accuracy: List[float] = field(default_factory=list)
    lr_drops: List[int] = field(default_factory=list)
    gradient_error: float = float("nan")

    @property
    def qualified(self):
        return self.test_accuracy >= QUALIFICATION_ACCURACY

    def to_dict(self):
        d = asdict(self)
        d["qualified"] = self.qualified
        return d


class NetworkModel(ModelHandle):
    """Two-logit network; the explained score is the class-1 logit."""

    def __init__(self, arch, network, n_features, config, image_shape=None):
        super().__init__(n_features, {"architecture": arch})
        self.arch = arch
        self.network = network
        self.config = config
        self.image_shape = image_shape

    def logits(self, X):
        X2, single, _ = self._as_batch(X)
        out, _ = self.network.forward(X2, train=False)
        return out[0] if single else out

    def _score(self, X):
        out, _ = self.network.forward(X, train=False)
        return out[:, 1]

    def _grad(self, X):
        out, caches = self.network.forward(X, train=False)
        g = np.zeros_like(out)
        g[:, 1] = 1.0
        dx, _ = self.network.backward(g, caches)
        return dx.reshape(X.shape)

    def predict_label(self, X):
        X2, single, _ = self._as_batch(X)
        out, _ = self.network.forward(X2, train=False)
        lab = (out[:, 1] > out[:, 0]).astype(np.int64)
        return lab[0] if single else lab

    def parameters(self):
        return self.network.named_arrays()

    def config_dict(self):
        d = asdict(self.config)
        if self.image_shape is not None:
            d["image_shape"] = list(self.image_shape)
        return d


def build_mlp(n_features, config):
    layers = []
    prev = n_features
    for i, h in enumerate(config.hidden_dims):
        layers += [
            (f"fc{i}", Dense(prev, h)),
            (f"bn{i}", BatchNorm(h)),
            (f"relu{i}", ReLU()),
            (f"drop{i}", Dropout(config.dropout)),
        ]
        prev = h
    layers.append(("out", Dense(prev, 2)))
    return Network(layers)


def build_cnn_small(image_shape, config):
    h, w = image_shape
    if h % 4 or w % 4:
        raise InvalidInputError(f"compact CNN needs sides divisible by 4, got {image_shape}")
    c1, c2 = config.channels
    layers = [
        ("in", Reshape((h, w, 1))),
        ("conv0", Conv3x3(1, c1)),
        ("bn0", BatchNorm(c1)),
        ("relu0", ReLU()),
        ("pool0", MaxPool2()),
        ("drop0", Dropout(config.dropout)),
        ("conv1", Conv3x3(c1, c2)),
        ("bn1", BatchNorm(c2)),
        ("relu1", ReLU()),
        ("pool1", MaxPool2()),
        ("drop1", Dropout(config.dropout)),
        ("flat", Reshape((h // 4 * w // 4 * c2,))),
        ("out", Dense(h // 4 * w // 4 * c2, 2)),
    ]
    return Network(layers)


def _softmax_xent(logits, y):
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -logp[np.arange(len(y)), y].mean()
    grad = np.exp(logp)
    grad[np.arange(len(y)), y] -= 1.0
    return loss, grad / len(y)


def _accuracy(network, X, y):
    out, _ = network.forward(X, train=False)
    return float(np.mean((out[:, 1] > out[:, 0]).astype(np.int64) == y))


def _quantize(arrays):
    # checkpoints hold float32; make the in-memory model identical to a reloaded one
    return {k: v.astype(np.float32).astype(np.float64) for k, v in arrays.items()}


def train_network(network, data, config, log=None):
    """Mini-batch Adam on softmax cross-entropy.

    The learning rate is multiplied by ``lr_factor`` once validation accuracy
    has not improved for more than ``patience`` epochs, and training stops
    after ``patience`` epochs without improvement.  The weights with the
    highest validation accuracy are restored (and rounded to float32).
    """
    (Xtr, ytr), (Xva, yva), (Xte, yte) = data
    rng = np.random.default_rng(config.seed)
    network.init(rng)
    opt = Adam(config.learning_rate)
    n = len(Xtr)
    best_acc, best_epoch, best = -1.0, 0, None
    since_best = since_drop = 0
    losses, val_accs, drops = [], [], []
    epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            if len(idx) < 2 and start > 0:
                continue  # batch statistics need two samples
            out, caches = network.forward(Xtr[idx], train=True, rng=rng)
            loss, g = _softmax_xent(out, ytr[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"loss diverged at epoch {epoch}", epoch=epoch)
            total += loss * len(idx)
            _, grads = network.backward(g, caches)
            opt.step(network, grads)
        losses.append(total / n)
        acc = _accuracy(network, Xva, yva)
        val_accs.append(acc)
        if log is not None:
            log(epoch, losses[-1], acc)
        if acc > best_acc:
            best_acc, best_epoch = acc, epoch
            best = {k: v.copy() for k, v in network.named_arrays().items()}
            since_best = since_drop = 0
        else:
            since_best += 1
            since_drop += 1
        if since_best >= config.patience:
            break
        if since_drop > config.patience:
            opt.lr *= config.lr_factor
            drops.append(epoch)
            since_drop = 0
    network.set_arrays(_quantize(best))
    return TrainReport(
        epochs_run=epoch,
        best_epoch=best_epoch,
        best_val_accuracy=best_acc,
        test_accuracy=_accuracy(network, Xte, yte),
        train_loss=[float(v) for v in losses],
        val_accuracy=val_accs,
        lr_drops=drops,
    )


def _splits(dataset):
    return tuple(dataset.subset(k)[:2] for k in ("train", "val", "test"))


def _audit(model, report, dataset, seed):
    """Finite-difference audit of a freshly trained network; fails training on a mismatch."""
    probes = audit_probes(dataset.subset("train")[0], AUDIT_PROBES, seed=[seed, 1])
    report.gradient_error = gradient_audit(model, probes)
    if not report.gradient_error < AUDIT_TOLERANCE:
        raise TrainingError(f"gradient audit failed: relative error {report.gradient_error:.2e} >= {AUDIT_TOLERANCE:g}")


def train_mlp(dataset, config=None, log=None):
    config = config or MlpConfig()
    network = build_mlp(dataset.n_features, config)
    report = train_network(network, _splits(dataset), config, log)
    model = NetworkModel("mlp", network, dataset.n_features, config)
    model.report = report
    _audit(model, report, dataset, config.seed)
    return model, report


def train_cnn_small(dataset, config=None, log=None):
    config = config or CnnConfig()
    shape = tuple(dataset.image_shape)
    if len(shape) != 2:
        raise InvalidInputError("compact CNN needs 2-D images")
    network = build_cnn_small(shape, config)
    report = train_network(network, _splits(dataset), config, log)
    model = NetworkModel("cnn_small", network, dataset.n_features, config, image_shape=shape)
    model.report = report
    _audit(model, report, dataset, config.seed)
    return model, report
