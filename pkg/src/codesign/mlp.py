"""MLP genomes and a small double-precision numpy trainer.

Hidden layers compute ``act(X @ W + b)``; the head is a softmax layer that
always carries a bias. Training minimizes mean cross-entropy with mini-batch
SGD or Adam.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .dataset import Dataset, FoldPlan, normalize_apply, normalize_fit

logger = logging.getLogger(__name__)

ACTIVATIONS = ("relu", "sigmoid", "tanh")


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class LayerGene:
    neurons: int
    activation: str = "relu"
    has_bias: bool = True

    def __post_init__(self):
        if self.neurons < 1:
            raise ValueError("a layer needs at least one neuron")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass(frozen=True)
class MlpGenome:
    input_size: int
    output_size: int
    hidden: Tuple[LayerGene, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(self.hidden))
        if self.input_size < 1 or self.output_size < 1:
            raise ValueError("input/output sizes must be positive")

    @property
    def layer_sizes(self) -> List[int]:
        return [self.input_size] + [g.neurons for g in self.hidden] + [self.output_size]

    @property
    def n_params(self) -> int:
        total = 0
        sizes = self.layer_sizes
        biases = [g.has_bias for g in self.hidden] + [True]
        for fan_in, fan_out, b in zip(sizes[:-1], sizes[1:], biases):
            total += fan_in * fan_out + (fan_out if b else 0)
        return total

    @property
    def total_neurons(self) -> int:
        return sum(g.neurons for g in self.hidden)

    def spec(self) -> str:
        """Compact text form, e.g. ``784:64/relu,32/tanh/nobias:10``."""
        parts = []
        for g in self.hidden:
            s = f"{g.neurons}/{g.activation}"
            if not g.has_bias:
                s += "/nobias"
            parts.append(s)
        return f"{self.input_size}:{','.join(parts)}:{self.output_size}"

    @classmethod
    def parse(cls, text: str) -> "MlpGenome":
        try:
            fields = text.strip().split(":")
            if len(fields) != 3:
                raise ValueError("expected IN:HIDDEN:OUT")
            hidden = []
            for item in filter(None, fields[1].split(",")):
                bits = item.split("/")
                act = bits[1] if len(bits) > 1 and bits[1] != "nobias" else "relu"
                hidden.append(LayerGene(int(bits[0]), act, "nobias" not in bits[1:]))
            return cls(int(fields[0]), int(fields[2]), tuple(hidden))
        except (ValueError, IndexError) as e:
            raise ValueError(f"bad genome spec {text!r}: {e}") from None

    def to_dict(self) -> dict:
        return {
            "input_size": self.input_size,
            "output_size": self.output_size,
            "hidden": [[g.neurons, g.activation, g.has_bias] for g in self.hidden],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpGenome":
        return cls(d["input_size"], d["output_size"], tuple(LayerGene(int(n), a, bool(b)) for n, a, b in d["hidden"]))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class TrainedModel:
    genome: MlpGenome
    weights: List[np.ndarray]
    biases: List[Optional[np.ndarray]]
    train_meta: Dict = field(default_factory=dict)

    @property
    def activations(self) -> List[Optional[str]]:
        return [g.activation for g in self.genome.hidden] + [None]

    def params(self) -> List[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            if b is not None:
                out.append(b)
        return out

    def to_json(self) -> str:
        """Portable text form: shapes plus row-major parameter values."""
        return json.dumps({
            "format": "codesign-mlp/1",
            "genome": self.genome.to_dict(),
            "layers": [
                {
                    "weight_shape": list(w.shape),
                    "weight": w.ravel(order="C").tolist(),
                    "bias": None if b is None else b.tolist(),
                }
                for w, b in zip(self.weights, self.biases)
            ],
            "train_meta": self.train_meta,
        })

    @classmethod
    def from_json(cls, text: str) -> "TrainedModel":
        d = json.loads(text)
        ws, bs = [], []
        for layer in d["layers"]:
            ws.append(np.asarray(layer["weight"], dtype=np.float64).reshape(layer["weight_shape"]))
            bs.append(None if layer["bias"] is None else np.asarray(layer["bias"], dtype=np.float64))
        return cls(MlpGenome.from_dict(d["genome"]), ws, bs, d.get("train_meta", {}))


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        return 0.5 * (1.0 + np.tanh(0.5 * z))
    return np.tanh(z)


def _act_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (z > 0).astype(z.dtype)  # derivative 0 at exactly 0
    if name == "sigmoid":
        return a * (1.0 - a)
    return 1.0 - a * a


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def init_network(genome: MlpGenome, seed: int = 0) -> TrainedModel:
    rng = np.random.default_rng(seed)
    sizes = genome.layer_sizes
    has_bias = [g.has_bias for g in genome.hidden] + [True]
    weights, biases = [], []
    for fan_in, fan_out, b in zip(sizes[:-1], sizes[1:], has_bias):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out) if b else None)
    return TrainedModel(genome, weights, biases, {"epochs": 0, "seed": seed, "loss_history": []})


def _forward_cache(model: TrainedModel, x: np.ndarray):
    zs, acts = [], [x]
    a = x
    for w, b, act in zip(model.weights, model.biases, model.activations):
        z = a @ w
        if b is not None:
            z = z + b
        a = softmax(z) if act is None else _act(act, z)
        zs.append(z)
        acts.append(a)
    return zs, acts


def forward(model: TrainedModel, batch: np.ndarray) -> np.ndarray:
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != model.genome.input_size:
        raise ValueError(f"expected batch of width {model.genome.input_size}, got shape {batch.shape}")
    return _forward_cache(model, batch)[1][-1]


def loss_and_grads(model: TrainedModel, x: np.ndarray, y: np.ndarray):
    """Mean cross-entropy and its gradients, ordered like ``model.params()``."""
    zs, acts = _forward_cache(model, x)
    probs = acts[-1]
    m = x.shape[0]
    loss = -np.mean(np.log(np.clip(probs[np.arange(m), y], 1e-300, None)))
    delta = probs.copy()
    delta[np.arange(m), y] -= 1.0
    delta /= m
    grads: List[np.ndarray] = []
    n_layers = len(model.weights)
    for i in range(n_layers - 1, -1, -1):
        if i < n_layers - 1:
            act = model.activations[i]
            delta = delta * _act_grad(act, zs[i], acts[i + 1])
        gw = acts[i].T @ delta
        layer_grads = [gw]
        if model.biases[i] is not None:
            layer_grads.append(delta.sum(axis=0))
        grads = layer_grads + grads
        if i > 0:
            delta = delta @ model.weights[i].T
    return loss, grads


def train(genome: MlpGenome, x: np.ndarray, y: np.ndarray, cfg: TrainConfig) -> TrainedModel:
    """Train a fresh network for ``genome`` on already-normalized rows."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if x.shape[1] != genome.input_size:
        raise ValueError(f"shape mismatch: genome expects {genome.input_size} inputs, data has {x.shape[1]}")
    if y.size and (y.min() < 0 or y.max() >= genome.output_size):
        raise ValueError("labels outside the genome's output range")
    model = init_network(genome, cfg.seed)
    rng = np.random.default_rng(cfg.seed + 1)
    params = model.params()
    m1 = [np.zeros_like(p) for p in params]
    m2 = [np.zeros_like(p) for p in params]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0
    history = []
    n = x.shape[0]
    bs = min(cfg.batch_size, n)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            with np.errstate(over="ignore", invalid="ignore"):  # divergence is reported below
                loss, grads = loss_and_grads(model, x[idx], y[idx])
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch starting {start}")
            total += loss * len(idx)
            step += 1
            if cfg.optimizer == "sgd":
                for p, g in zip(params, grads):
                    p -= cfg.learning_rate * g
            else:
                lr_t = cfg.learning_rate * np.sqrt(1 - beta2 ** step) / (1 - beta1 ** step)
                for p, g, a, b in zip(params, grads, m1, m2):
                    a *= beta1
                    a += (1 - beta1) * g
                    b *= beta2
                    b += (1 - beta2) * g * g
                    p -= lr_t * a / (np.sqrt(b) + eps)
        history.append(total / n)
    model.train_meta = {"epochs": cfg.epochs, "final_loss": history[-1], "seed": cfg.seed, "loss_history": history}
    return model


def predict(model: TrainedModel, x: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. ties go to the lowest class index.
    return np.argmax(forward(model, x), axis=1)


def accuracy(model: TrainedModel, x: np.ndarray, y: np.ndarray) -> float:
    y = np.asarray(y)
    if y.size == 0:
        raise ValueError("accuracy needs at least one row")
    return float(np.mean(predict(model, x) == y))


@dataclass
class KFoldResult:
    mean: float
    per_fold: List[Optional[float]]
    failures: int = 0


def split_accuracy(genome: MlpGenome, ds: Dataset, train_rows: np.ndarray, test_rows: np.ndarray,
                   cfg: TrainConfig) -> float:
    stats = normalize_fit(ds.features[train_rows])
    xtr = normalize_apply(stats, ds.features[train_rows])
    xte = normalize_apply(stats, ds.features[test_rows])
    model = train(genome, xtr, ds.labels[train_rows], cfg)
    return accuracy(model, xte, ds.labels[test_rows])


def kfold_accuracy(genome: MlpGenome, ds: Dataset, plan: FoldPlan, cfg: TrainConfig) -> KFoldResult:
    if plan.assignments.shape[0] != ds.n_rows:
        raise ValueError("fold plan does not belong to this dataset")
    per_fold: List[Optional[float]] = []
    failures = 0
    for f in range(plan.k):
        try:
            per_fold.append(split_accuracy(genome, ds, plan.train_rows(f), plan.test_rows(f), cfg))
        except TrainingError as e:
            logger.warning("fold %d failed: %s", f, e)
            per_fold.append(None)
            failures += 1
    ok = [a for a in per_fold if a is not None]
    mean = float(np.mean(ok)) if ok else float("nan")
    return KFoldResult(mean, per_fold, failures)


def gradient_check(genome: MlpGenome, seed: int = 0, batch: int = 6, step: float = 1e-5,
                   floor: float = 1e-6) -> float:
    """Max relative error between backprop and central finite differences.

    Relative error is ``|g - fd| / max(|g|, |fd|, floor)``; the floor keeps
    near-zero gradient entries from dominating through round-off alone.
    """
    if genome.n_params > 64:
        raise ValueError(f"gradient_check is meant for <= 64 parameters, genome has {genome.n_params}")
    rng = np.random.default_rng(seed)
    model = init_network(genome, seed)
    for b in model.biases:
        if b is not None:
            b[:] = rng.normal(scale=0.1, size=b.shape)
    x = rng.normal(size=(batch, genome.input_size))
    y = rng.integers(0, genome.output_size, size=batch)
    _, grads = loss_and_grads(model, x, y)
    worst = 0.0
    for p, g in zip(model.params(), grads):
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            lp, _ = loss_and_grads(model, x, y)
            flat[i] = orig - step
            lm, _ = loss_and_grads(model, x, y)
            flat[i] = orig
            fd = (lp - lm) / (2 * step)
            rel = abs(gflat[i] - fd) / max(abs(gflat[i]), abs(fd), floor)
            worst = max(worst, rel)
    return worst
