"""Cross-entropy training, evaluation metrics and the repeated-run protocol."""
import json
import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .data import extract_patches, make_split
from .exceptions import ArgumentError, ConfigurationError
from .models import SPATIAL_VARIANTS, build, predict_logits
from .tensor import log_softmax, softmax

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 64
    epochs: int = 100
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        v = []
        if not self.lr >= 0:
            v.append(f"lr={self.lr} must be >= 0")
        if self.batch_size < 1:
            v.append(f"batch_size={self.batch_size} must be >= 1")
        if self.epochs < 1:
            v.append(f"epochs={self.epochs} must be >= 1")
        if self.optimizer not in ("sgd", "adam"):
            v.append(f"optimizer={self.optimizer!r} must be 'sgd' or 'adam'")
        if v:
            raise ConfigurationError(v)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


# ---------------------------------------------------------------------------
# loss


def cross_entropy(logits, label):
    """``-log softmax(logits)[label]`` for a 1-based class ``label``."""
    logits = np.asarray(logits, dtype=np.float64)
    C = logits.shape[-1]
    if not 1 <= label <= C:
        raise ArgumentError(f"label {label} outside 1..{C}")
    return float(-log_softmax(logits)[label - 1])


def cross_entropy_grad(logits, label):
    g = softmax(logits)
    g[label - 1] -= 1.0
    return g


def batch_cross_entropy(logits, targets):
    """Mean loss over a batch and its gradient w.r.t. the logits.

    ``targets`` are 0-based class indices.
    """
    B = logits.shape[0]
    rows = np.arange(B)
    loss = -log_softmax(logits)[rows, targets].mean()
    grad = softmax(logits)
    grad[rows, targets] -= 1.0
    return float(loss), grad / B


# ---------------------------------------------------------------------------
# optimizers


class SGD:
    def __init__(self, lr):
        self.lr = lr

    def step(self, params, grads):
        for k, p in params.items():
            p -= self.lr * grads[k]


class Adam:
    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, params, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for k, p in params.items():
            g = grads[k]
            m = self.m.setdefault(k, np.zeros_like(p))
            v = self.v.setdefault(k, np.zeros_like(p))
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(cfg):
    if cfg.optimizer == "sgd":
        return SGD(cfg.lr)
    return Adam(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)


def optimizer_step(state, params, grads, config):
    """One in-place update of ``params``; ``state`` is the optimizer object
    from a previous call, or ``None`` to create it."""
    for k, p in params.items():
        if p.shape != grads[k].shape:
            raise ArgumentError(f"gradient for {k} has shape {grads[k].shape}, "
                                f"parameter has {p.shape}")
    if state is None:
        state = make_optimizer(config)
    state.step(params, grads)
    return state


# ---------------------------------------------------------------------------
# training


def sample_inputs(spec, cube, samples, idx=None):
    """Model inputs for the given samples: patches or bare spectra."""
    rows, cols = samples.rows, samples.cols
    if idx is not None:
        rows, cols = rows[idx], cols[idx]
    if spec.variant in SPATIAL_VARIANTS:
        return extract_patches(cube, rows, cols, spec.P)
    return cube.values[rows, cols]


def fit_batches(m, n, get_batch, cfg, on_epoch=None):
    """Mini-batch training loop over ``n`` samples.

    ``get_batch(idx)`` returns ``(X, targets)`` with 0-based targets. Returns
    the per-epoch mean loss.
    """
    net = m.network
    params = net.parameters()
    opt = make_optimizer(cfg)
    rng = np.random.default_rng(cfg.seed)
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            X, y = get_batch(idx)
            logits = net.forward(X)
            loss, dlogits = batch_cross_entropy(logits, y)
            net.zero_grad()
            net.backward(dlogits)
            opt.step(params, net.grads)
            total += loss * len(idx)
        history.append(total / n)
        if on_epoch is not None:
            on_epoch(epoch, history[-1])
        logger.debug("epoch %d loss %.6f", epoch + 1, history[-1])
    return history


def train(m, train_set, cube, cfg):
    """Fit ``m`` in place on ``train_set``; returns ``(m, loss_history)``."""
    if len(train_set) == 0:
        raise ArgumentError("training set is empty")
    targets = train_set.labels - 1

    def get_batch(idx):
        return sample_inputs(m.spec, cube, train_set, idx), targets[idx]

    history = fit_batches(m, len(train_set), get_batch, cfg)
    return m, history


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class Metrics:
    overall_accuracy: float
    per_class_accuracy: list
    confusion: np.ndarray  # rows: true class, cols: predicted class
    loss_history: list = field(default_factory=list)

    @property
    def n_samples(self):
        return int(self.confusion.sum())

    @classmethod
    def from_predictions(cls, true, pred, n_classes, loss_history=()):
        true = np.asarray(true, dtype=np.int64)
        pred = np.asarray(pred, dtype=np.int64)
        conf = np.zeros((n_classes, n_classes), dtype=np.int64)
        np.add.at(conf, (true - 1, pred - 1), 1)
        support = conf.sum(axis=1)
        per_class = [float(conf[k, k] / support[k]) if support[k] else float("nan")
                     for k in range(n_classes)]
        oa = float(np.trace(conf) / conf.sum()) if conf.sum() else float("nan")
        return cls(oa, per_class, conf, list(loss_history))

    def to_dict(self):
        return {
            "overall_accuracy": self.overall_accuracy,
            "per_class_accuracy": [None if np.isnan(a) else a for a in self.per_class_accuracy],
            "confusion": self.confusion.tolist(),
            "n_samples": self.n_samples,
            "loss_history": list(self.loss_history),
        }

    def format_table(self, class_names=None):
        lines = [f"{'class':>6} {'name':<22} {'support':>8} {'accuracy':>9}"]
        support = self.confusion.sum(axis=1)
        for k, acc in enumerate(self.per_class_accuracy):
            name = class_names[k] if class_names and k < len(class_names) else ""
            shown = "n/a" if np.isnan(acc) else f"{100 * acc:.2f}%"
            lines.append(f"{k + 1:>6} {name:<22} {support[k]:>8} {shown:>9}")
        lines.append(f"{'OA':>6} {'':<22} {self.n_samples:>8} "
                     f"{100 * self.overall_accuracy:>8.2f}%")
        return "\n".join(lines)


def predict_samples(m, samples, cube, batch_size=1024):
    """Predicted 1-based class ids for every sample."""
    preds = []
    for start in range(0, len(samples), batch_size):
        idx = np.arange(start, min(start + batch_size, len(samples)))
        X = sample_inputs(m.spec, cube, samples, idx)
        preds.append(predict_logits(m, X).argmax(axis=1) + 1)
    return np.concatenate(preds) if preds else np.zeros(0, dtype=np.int64)


def evaluate(m, test_set, cube, loss_history=()):
    if len(test_set) == 0:
        raise ArgumentError("test set is empty")
    pred = predict_samples(m, test_set, cube)
    return Metrics.from_predictions(test_set.labels, pred, m.spec.C, loss_history)


# ---------------------------------------------------------------------------
# repeated runs


@dataclass
class RunSummary:
    mean_oa: float
    std_oa: float
    runs: list

    def format(self, name):
        return f"{name}  {100 * self.mean_oa:.2f}±{100 * self.std_oa:.2f}%"

    def to_dict(self):
        return {"mean_oa": self.mean_oa, "std_oa": self.std_oa,
                "runs": [r.to_dict() for r in self.runs]}


def run_once(spec, cube, gt, split, cfg):
    train_set, test_set = make_split(gt, split)
    m = build(spec)
    m, history = train(m, train_set, cube, cfg)
    return m, evaluate(m, test_set, cube, history)


def repeat_runs(spec, data, cfg, n=10, reseed=True):
    """``n`` independent build/train/evaluate cycles.

    ``data`` is ``(cube, gt, split)``. Run ``i`` offsets the model, training
    and split seeds by ``i``; with ``reseed=False`` every run reuses the given
    seeds. The spread is the sample standard deviation.
    """
    if n < 2:
        raise ArgumentError(f"need at least 2 runs for a standard deviation, got {n}")
    cube, gt, split = data
    runs = []
    for i in range(n):
        k = i if reseed else 0
        _, metrics = run_once(replace(spec, seed=spec.seed + k), cube, gt,
                              split.with_seed(split.seed + k), replace(cfg, seed=cfg.seed + k))
        logger.info("run %d/%d OA %.4f", i + 1, n, metrics.overall_accuracy)
        runs.append(metrics)
    oa = np.array([r.overall_accuracy for r in runs])
    return RunSummary(float(oa.mean()), float(oa.std(ddof=1)), runs)
