"""Dense softmax classifiers with hand-rolled training and input gradients.

The networks here are small feed-forward stacks (ReLU hidden layers, softmax
head) trained with ADAM and cross-entropy on standardized features.  Training
is written out explicitly rather than delegated to an autodiff framework
because downstream code needs two things frameworks make awkward: exact
input-space gradients J^T u for arbitrary upstream vectors u, and bit-for-bit
reproducibility from a seed, including across save/load round trips.

All randomness (splits, init, batch order, dropout masks) comes from named
sub-streams of the one training seed.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .rng import substream

__all__ = [
    "TrainConfig",
    "DenseClassifier",
    "ForwardCache",
    "train_classifier",
    "fit_temperature",
    "predict_proba",
    "predict_proba_batch",
    "predict_logits",
    "forward_cache",
    "input_gradient",
    "logit_input_gradient",
    "ece",
    "ece_from_probs",
    "save_model",
    "load_model",
]

_ADAM_B1 = 0.9
_ADAM_B2 = 0.999
_ADAM_EPS = 1e-8
_PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 200
    patience: int = 20
    split: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0 or self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("invalid training hyperparameters")
        if len(self.split) != 3 or any(s < 0 for s in self.split):
            raise ValueError("split must be three non-negative fractions")
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1")
        if self.split[0] <= 0:
            raise ValueError("train fraction must be positive")


@dataclass
class DenseClassifier:
    """Weights plus the standardizer that maps raw features to net inputs.

    ``temperature`` divides the logits before the softmax head.  It defaults
    to 1 and is set by :func:`fit_temperature` so that predicted probabilities
    are calibrated; raw logits (``predict_logits``, ``ForwardCache.logits``)
    are never rescaled, so margin-based code sees the untouched scores.
    """

    layer_dims: tuple[int, ...]          # input, hidden..., output
    weights: list[np.ndarray]            # weights[l]: (out, in)
    biases: list[np.ndarray]
    mean: np.ndarray
    std: np.ndarray
    dropout_rate: float = 0.0
    temperature: float = 1.0
    seed: int = 0
    metadata: dict = field(default_factory=dict)

    @property
    def num_classes(self) -> int:
        return self.layer_dims[-1]

    @property
    def num_features(self) -> int:
        return self.layer_dims[0]


@dataclass
class ForwardCache:
    """Intermediate activations of one forward pass, for reuse in backprop."""

    x_std: np.ndarray
    pre: list[np.ndarray]      # pre-activation of each hidden layer
    act: list[np.ndarray]      # post-ReLU activations (act[0] is the input)
    logits: np.ndarray
    probs: np.ndarray


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _standardize(model: DenseClassifier, x: np.ndarray) -> np.ndarray:
    return (x - model.mean) / model.std


def _forward_batch(weights, biases, x_std: np.ndarray):
    acts = [x_std]
    pres = []
    h = x_std
    for w, b in zip(weights[:-1], biases[:-1]):
        z = h @ w.T + b
        pres.append(z)
        h = np.maximum(z, 0.0)
        acts.append(h)
    logits = h @ weights[-1].T + biases[-1]
    return pres, acts, logits


def forward_cache(model: DenseClassifier, x: np.ndarray) -> ForwardCache:
    x = np.asarray(x, dtype=float)
    if x.shape != (model.num_features,):
        raise ValueError(
            f"expected {model.num_features} features, got shape {x.shape}"
        )
    xs = _standardize(model, x)
    pres, acts, logits = _forward_batch(model.weights, model.biases, xs[None, :])
    probs = _softmax(logits / model.temperature)
    return ForwardCache(xs, [p[0] for p in pres], [a[0] for a in acts],
                        logits[0], probs[0])


def predict_proba(model: DenseClassifier, x: np.ndarray) -> np.ndarray:
    return forward_cache(model, x).probs


def predict_proba_batch(model: DenseClassifier, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != model.num_features:
        raise ValueError("expected (n, d) feature matrix matching the model")
    xs = _standardize(model, x)
    _, _, logits = _forward_batch(model.weights, model.biases, xs)
    return _softmax(logits / model.temperature)


def predict_logits(model: DenseClassifier, x: np.ndarray) -> np.ndarray:
    """Pre-softmax scores; used by margin-based attack objectives."""
    return forward_cache(model, x).logits


def _backward_from_logits(model: DenseClassifier, cache: ForwardCache,
                          g_logits: np.ndarray) -> np.ndarray:
    g = model.weights[-1].T @ g_logits
    for w, pre in zip(reversed(model.weights[:-1]), reversed(cache.pre)):
        g = g * (pre > 0.0)
        g = w.T @ g
    # Chain through the standardizer back to raw feature units.
    return g / model.std


def input_gradient(model: DenseClassifier, x: np.ndarray,
                   upstream: np.ndarray,
                   cache: ForwardCache | None = None) -> np.ndarray:
    """J^T upstream, where J is the Jacobian of predict_proba at x."""
    if cache is None:
        cache = forward_cache(model, x)
    upstream = np.asarray(upstream, dtype=float)
    if upstream.shape != (model.num_classes,):
        raise ValueError("upstream vector must have one entry per class")
    s = cache.probs
    g_logits = s * (upstream - float(s @ upstream)) / model.temperature
    return _backward_from_logits(model, cache, g_logits)


def logit_input_gradient(model: DenseClassifier, x: np.ndarray,
                         upstream: np.ndarray,
                         cache: ForwardCache | None = None) -> np.ndarray:
    """Same as :func:`input_gradient` but for the pre-softmax logits."""
    if cache is None:
        cache = forward_cache(model, x)
    upstream = np.asarray(upstream, dtype=float)
    if upstream.shape != (model.num_classes,):
        raise ValueError("upstream vector must have one entry per class")
    return _backward_from_logits(model, cache, upstream)


# ---------------------------------------------------------------------------
# training


def _init_params(layer_dims, rng):
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        limit = math.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def _cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    picked = probs[np.arange(labels.size), labels]
    return float(-np.mean(np.log(np.maximum(picked, _PROB_FLOOR))))


def _accuracy(probs: np.ndarray, labels: np.ndarray) -> float:
    if labels.size == 0:
        return float("nan")
    return float(np.mean(probs.argmax(axis=1) == labels))


def _split_indices(n: int, split, rng) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    order = rng.permutation(n)
    n_train = int(round(n * split[0]))
    n_val = int(round(n * split[1]))
    n_train = min(max(n_train, 1), n)
    n_val = min(n_val, n - n_train)
    return order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:]


def train_classifier(x: np.ndarray, labels: np.ndarray, cfg: TrainConfig,
                     hidden_dims=(60, 60, 60), dropout_rate: float = 0.0,
                     num_classes: int | None = None) -> DenseClassifier:
    """Train a softmax net on (x, labels) with an internal train/val/test split.

    Labels must be integers 0..k-1; every class must occur in the train split.
    Early stopping watches validation cross-entropy and the returned weights
    are the best validation snapshot, never a later, worse one.
    """
    x = np.asarray(x, dtype=float)
    labels = np.asarray(labels)
    if x.ndim != 2 or labels.shape != (x.shape[0],):
        raise ValueError("expected (n, d) features with n labels")
    if not np.issubdtype(labels.dtype, np.integer):
        raise ValueError("labels must be integers")
    k = int(num_classes) if num_classes is not None else int(labels.max()) + 1
    if k < 2:
        raise ValueError("need at least two classes")
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError("labels out of range")
    if not (0.0 <= dropout_rate < 1.0):
        raise ValueError("dropout rate must lie in [0, 1)")

    idx_train, idx_val, idx_test = _split_indices(
        x.shape[0], cfg.split, substream(cfg.seed, "split")
    )
    present = np.unique(labels[idx_train])
    if present.size != k:
        missing = sorted(set(range(k)) - set(int(c) for c in present))
        raise ValueError(f"classes {missing} are absent from the train split")

    x_train, y_train = x[idx_train], labels[idx_train]
    mean = x_train.mean(axis=0)
    std = x_train.std(axis=0)
    std = np.where(std <= 0.0, 1.0, std)

    xs = {"train": (x_train - mean) / std}
    if idx_val.size:
        xs["val"] = (x[idx_val] - mean) / std
    if idx_test.size:
        xs["test"] = (x[idx_test] - mean) / std

    layer_dims = (x.shape[1], *hidden_dims, k)
    weights, biases = _init_params(layer_dims, substream(cfg.seed, "init"))
    m_w = [np.zeros_like(w) for w in weights]
    v_w = [np.zeros_like(w) for w in weights]
    m_b = [np.zeros_like(b) for b in biases]
    v_b = [np.zeros_like(b) for b in biases]
    step = 0

    batch_rng = substream(cfg.seed, "batches")
    drop_rng = substream(cfg.seed, "dropout")
    n_train = x_train.shape[0]
    keep = 1.0 - dropout_rate

    best_val = math.inf
    best_snapshot = ([w.copy() for w in weights], [b.copy() for b in biases])
    best_epoch = 0
    stall = 0
    val_history: list[float] = []
    epochs_run = 0

    for epoch in range(1, cfg.max_epochs + 1):
        epochs_run = epoch
        order = batch_rng.permutation(n_train)
        for start in range(0, n_train, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            xb = xs["train"][batch]
            yb = y_train[batch]

            acts = [xb]
            pres = []
            masks = []
            h = xb
            for w, b in zip(weights[:-1], biases[:-1]):
                z = h @ w.T + b
                pres.append(z)
                h = np.maximum(z, 0.0)
                if dropout_rate > 0.0:
                    mask = (drop_rng.random(h.shape) < keep) / keep
                    h = h * mask
                    masks.append(mask)
                acts.append(h)
            logits = h @ weights[-1].T + biases[-1]
            probs = _softmax(logits)

            g = probs
            g[np.arange(yb.size), yb] -= 1.0
            g /= yb.size

            grads_w = [None] * len(weights)
            grads_b = [None] * len(biases)
            for layer in range(len(weights) - 1, -1, -1):
                grads_w[layer] = g.T @ acts[layer]
                grads_b[layer] = g.sum(axis=0)
                if layer > 0:
                    g = g @ weights[layer]
                    if dropout_rate > 0.0:
                        g = g * masks[layer - 1]
                    g = g * (pres[layer - 1] > 0.0)

            step += 1
            correct1 = 1.0 - _ADAM_B1 ** step
            correct2 = 1.0 - _ADAM_B2 ** step
            for layer in range(len(weights)):
                m_w[layer] = _ADAM_B1 * m_w[layer] + (1 - _ADAM_B1) * grads_w[layer]
                v_w[layer] = _ADAM_B2 * v_w[layer] + (1 - _ADAM_B2) * grads_w[layer] ** 2
                weights[layer] -= cfg.learning_rate * (m_w[layer] / correct1) / (
                    np.sqrt(v_w[layer] / correct2) + _ADAM_EPS
                )
                m_b[layer] = _ADAM_B1 * m_b[layer] + (1 - _ADAM_B1) * grads_b[layer]
                v_b[layer] = _ADAM_B2 * v_b[layer] + (1 - _ADAM_B2) * grads_b[layer] ** 2
                biases[layer] -= cfg.learning_rate * (m_b[layer] / correct1) / (
                    np.sqrt(v_b[layer] / correct2) + _ADAM_EPS
                )

        if "val" in xs:
            _, _, val_logits = _forward_batch(weights, biases, xs["val"])
            val_loss = _cross_entropy(_softmax(val_logits), labels[idx_val])
            val_history.append(val_loss)
            if val_loss < best_val:
                best_val = val_loss
                best_snapshot = ([w.copy() for w in weights],
                                 [b.copy() for b in biases])
                best_epoch = epoch
                stall = 0
            else:
                stall += 1
                if stall > cfg.patience:
                    break

    if "val" in xs:
        weights, biases = best_snapshot
    else:
        best_epoch = epochs_run
        best_val = float("nan")

    model = DenseClassifier(
        layer_dims=layer_dims,
        weights=weights,
        biases=biases,
        mean=mean,
        std=std,
        dropout_rate=float(dropout_rate),
        seed=cfg.seed,
        metadata={},
    )
    metadata = {
        "epochs_run": epochs_run,
        "best_epoch": best_epoch,
        "best_val_loss": best_val,
        "val_loss_history": val_history,
        "split_sizes": [int(idx_train.size), int(idx_val.size), int(idx_test.size)],
        "split_indices": {
            "train": [int(i) for i in idx_train],
            "val": [int(i) for i in idx_val],
            "test": [int(i) for i in idx_test],
        },
    }
    for name, idx in (("train", idx_train), ("val", idx_val), ("test", idx_test)):
        if idx.size:
            probs = predict_proba_batch(model, x[idx])
            metadata[f"{name}_accuracy"] = _accuracy(probs, labels[idx])
        else:
            metadata[f"{name}_accuracy"] = float("nan")
    model.metadata = metadata
    return model


# ---------------------------------------------------------------------------
# calibration


def fit_temperature(model: DenseClassifier, x: np.ndarray,
                    labels: np.ndarray) -> DenseClassifier:
    """Return a copy of the model with its softmax temperature fit on (x, labels).

    Minimizes held-out cross-entropy over the inverse temperature by ternary
    search; the objective is convex in the inverse temperature, so the search
    is exact to the tolerance.  Weights are untouched, and the argmax (hence
    accuracy) is invariant, only the confidence scale moves.
    """
    x = np.asarray(x, dtype=float)
    labels = np.asarray(labels)
    if x.ndim != 2 or labels.shape != (x.shape[0],):
        raise ValueError("expected (n, d) features with n labels")
    if labels.size == 0:
        raise ValueError("need at least one labelled point to fit temperature")
    xs = _standardize(model, x)
    _, _, logits = _forward_batch(model.weights, model.biases, xs)

    def nll(beta: float) -> float:
        return _cross_entropy(_softmax(logits * beta), labels)

    lo, hi = 1.0 / 50.0, 50.0
    for _ in range(200):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if nll(m1) <= nll(m2):
            hi = m2
        else:
            lo = m1
    beta = (lo + hi) / 2.0
    fitted = replace(model, temperature=float(1.0 / beta),
                     metadata=dict(model.metadata))
    fitted.metadata["temperature_fit"] = {
        "points": int(labels.size),
        "nll_before": nll(1.0),
        "nll_after": nll(beta),
    }
    return fitted


# ---------------------------------------------------------------------------
# calibration error


def ece_from_probs(probs: np.ndarray, labels: np.ndarray, bins: int = 15) -> float:
    """Expected calibration error over equal-width confidence bins.

    Confidence is the top predicted probability; each prediction falls in the
    bin ((i-1)/bins, i/bins] (confidence 0 goes to the first bin) and the
    result is the prediction-weighted mean |accuracy - confidence| gap.
    """
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels)
    if probs.ndim != 2 or labels.shape != (probs.shape[0],):
        raise ValueError("expected (n, k) probabilities with n labels")
    if bins < 1:
        raise ValueError("need at least one bin")
    conf = probs.max(axis=1)
    correct = (probs.argmax(axis=1) == labels).astype(float)
    idx = np.clip(np.ceil(conf * bins).astype(int) - 1, 0, bins - 1)
    n = labels.size
    total = 0.0
    for b in range(bins):
        members = idx == b
        count = int(members.sum())
        if count == 0:
            continue
        gap = abs(float(correct[members].mean()) - float(conf[members].mean()))
        total += count / n * gap
    return total


def ece(model: DenseClassifier, x: np.ndarray, labels: np.ndarray,
        bins: int = 15) -> float:
    return ece_from_probs(predict_proba_batch(model, x), labels, bins)


# ---------------------------------------------------------------------------
# persistence: self-describing text, exact float round trip


def save_model(model: DenseClassifier, path) -> None:
    payload = {
        "kind": "dense-softmax-classifier",
        "layer_dims": list(model.layer_dims),
        "dropout_rate": model.dropout_rate,
        "temperature": model.temperature,
        "seed": model.seed,
        "standardizer": {"mean": model.mean.tolist(), "std": model.std.tolist()},
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "metadata": model.metadata,
    }
    Path(path).write_text(json.dumps(payload, indent=1) + "\n")


def load_model(path) -> DenseClassifier:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"model file not found: {path}")
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"model file {path} is not valid: {exc}") from None
    if payload.get("kind") != "dense-softmax-classifier":
        raise ValueError(f"model file {path} has unknown kind")
    return DenseClassifier(
        layer_dims=tuple(payload["layer_dims"]),
        weights=[np.array(w, dtype=float) for w in payload["weights"]],
        biases=[np.array(b, dtype=float) for b in payload["biases"]],
        mean=np.array(payload["standardizer"]["mean"], dtype=float),
        std=np.array(payload["standardizer"]["std"], dtype=float),
        dropout_rate=float(payload["dropout_rate"]),
        temperature=float(payload.get("temperature", 1.0)),
        seed=int(payload["seed"]),
        metadata=payload["metadata"],
    )
