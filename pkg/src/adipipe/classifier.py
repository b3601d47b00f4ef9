"""Softmax classifiers over bag vectors and over raw frames.

Two model families:

  * LinearModel: single-layer softmax over bag vectors, trained by
    mini-batch gradient descent on mean cross-entropy from a zero init
    (the objective is convex, so the zero init is exact and runs are
    deterministic per seed).
  * TapHead: per-frame linear projection, mean pool over time, then a
    linear classification layer. Projection and mean pooling are both
    affine, so pooling first and projecting once per utterance gives the
    same outputs and gradients as projecting every frame.

Confidence is the raw max softmax posterior, uncalibrated.
"""

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, NumericError
from .evaluation import macro_f1
from .featurestore import DEFAULT_FPS, FeatureMatrix, read_features, write_features
from .schedules import TrainConfig, TriStateSchedule, lr_at


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class LinearModel:
    weights: np.ndarray  # C x K
    bias: np.ndarray  # C
    label_set: tuple[str, ...]

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        self.label_set = tuple(self.label_set)
        c = len(self.label_set)
        if c < 2:
            raise DataError(f"need at least 2 classes, got {c}")
        if self.weights.shape[0] != c or self.bias.shape != (c,):
            raise DataError(
                f"parameter shapes {self.weights.shape}/{self.bias.shape} do not match {c} classes"
            )
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias).all()):
            raise NumericError("model parameters contain non-finite values")

    @property
    def input_dim(self) -> int:
        return self.weights.shape[1]

    def logits(self, x: np.ndarray) -> np.ndarray:
        return x @ self.weights.T + self.bias


@dataclass
class TapHead:
    projection: np.ndarray  # P x D
    proj_bias: np.ndarray  # P
    classifier: np.ndarray  # C x P
    clf_bias: np.ndarray  # C
    label_set: tuple[str, ...]

    def __post_init__(self):
        self.projection = np.asarray(self.projection, dtype=np.float64)
        self.proj_bias = np.asarray(self.proj_bias, dtype=np.float64)
        self.classifier = np.asarray(self.classifier, dtype=np.float64)
        self.clf_bias = np.asarray(self.clf_bias, dtype=np.float64)
        self.label_set = tuple(self.label_set)
        p, d = self.projection.shape
        c = len(self.label_set)
        if p < 1:
            raise DataError(f"projection width must be >= 1, got {p}")
        if self.proj_bias.shape != (p,) or self.classifier.shape != (c, p) or self.clf_bias.shape != (c,):
            raise DataError("tap head parameter shapes are inconsistent")
        for a in (self.projection, self.proj_bias, self.classifier, self.clf_bias):
            if not np.isfinite(a).all():
                raise NumericError("tap head parameters contain non-finite values")

    @property
    def input_dim(self) -> int:
        return self.projection.shape[1]

    def logits_from_mean(self, mean_frames: np.ndarray) -> np.ndarray:
        h = mean_frames @ self.projection.T + self.proj_bias
        return h @ self.classifier.T + self.clf_bias


def tap_forward(head: TapHead, frames: np.ndarray) -> np.ndarray:
    """Posteriors for one utterance: project frames, mean pool, classify."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[1] != head.input_dim:
        raise DataError(f"frames shape {frames.shape} does not match head input dim {head.input_dim}")
    return softmax(head.logits_from_mean(frames.mean(axis=0)))


@dataclass
class Prediction:
    utterance_id: str
    posteriors: np.ndarray
    predicted_label: str
    confidence: float


def _prediction(utterance_id: str, logits: np.ndarray, label_set: tuple[str, ...]) -> Prediction:
    post = softmax(logits)
    idx = int(np.argmax(post))  # argmax takes the lowest index on ties
    return Prediction(utterance_id, post, label_set[idx], float(post[idx]))


def predict(model, x, utterance_id: str = "") -> Prediction:
    """Predict for one input: a bag vector for LinearModel, a FeatureMatrix
    (or T x D array) for TapHead."""
    if isinstance(model, LinearModel):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (model.input_dim,):
            raise DataError(f"input shape {x.shape} does not match model dim {model.input_dim}")
        return _prediction(utterance_id, model.logits(x), model.label_set)
    if isinstance(model, TapHead):
        if isinstance(x, FeatureMatrix):
            utterance_id = utterance_id or x.utterance_id
            x = x.frames
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != model.input_dim:
            raise DataError(f"input shape {x.shape} does not match head dim {model.input_dim}")
        return _prediction(utterance_id, model.logits_from_mean(x.mean(axis=0)), model.label_set)
    raise ConfigError(f"unsupported model type {type(model).__name__}")


def predict_bags(model: LinearModel, bags: np.ndarray, ids: list[str]) -> list[Prediction]:
    bags = np.asarray(bags, dtype=np.float64)
    if bags.ndim != 2 or bags.shape[1] != model.input_dim:
        raise DataError(f"bag matrix shape {bags.shape} does not match model dim {model.input_dim}")
    if bags.shape[0] != len(ids):
        raise DataError(f"{bags.shape[0]} bags but {len(ids)} ids")
    logits = model.logits(bags)
    return [_prediction(uid, row, model.label_set) for uid, row in zip(ids, logits)]


# ---------------------------------------------------------------------------
# training: linear model
# ---------------------------------------------------------------------------

@dataclass
class LinearTrainSettings:
    batch_size: int
    learning_rate: float
    epochs: int
    seed: int

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")


@dataclass
class LinearTrainResult:
    model: LinearModel
    epoch_losses: list[float]
    final_loss: float
    stopped_epoch: int | None = None  # set when dev-F1 early stopping fired
    dev_f1_history: list[float] = field(default_factory=list)


def _one_hot(labels: list[str], label_set: tuple[str, ...]) -> np.ndarray:
    index = {label: i for i, label in enumerate(label_set)}
    try:
        rows = [index[label] for label in labels]
    except KeyError as exc:
        raise DataError(f"label {exc.args[0]!r} not in label set") from exc
    y = np.zeros((len(labels), len(label_set)))
    y[np.arange(len(labels)), rows] = 1.0
    return y


def cross_entropy_and_grads(weights, bias, x, y) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy over the batch and its analytic gradients."""
    logits = x @ weights.T + bias
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(log_norm - (z * y).sum(axis=1)))
    g = (softmax(logits) - y) / len(x)
    return loss, g.T @ x, g.sum(axis=0)


def train_linear(bags: np.ndarray, labels: list[str], cfg: LinearTrainSettings,
                 label_set: tuple[str, ...] | None = None,
                 dev: tuple[np.ndarray, list[str]] | None = None,
                 patience: int = 10) -> LinearTrainResult:
    """Mini-batch gradient descent from a zero init.

    Each epoch draws one permutation from the run generator and walks it in
    consecutive batch_size slices (last slice may be short). With a dev set
    the run stops once dev macro-F1 has not improved for `patience` epochs
    and the best-scoring parameters are kept.
    """
    bags = np.asarray(bags, dtype=np.float64)
    if bags.ndim != 2 or len(bags) != len(labels):
        raise DataError(f"bag matrix {bags.shape} does not match {len(labels)} labels")
    if not np.isfinite(bags).all():
        raise DataError("bag features contain non-finite values")
    if label_set is None:
        label_set = tuple(sorted(set(labels)))
    if len(set(labels)) < 2:
        raise DataError("training data covers fewer than 2 classes")

    y = _one_hot(labels, label_set)
    c, k = len(label_set), bags.shape[1]
    weights = np.zeros((c, k))
    bias = np.zeros(c)
    rng = np.random.default_rng(cfg.seed)

    def full_loss() -> float:
        loss, _, _ = cross_entropy_and_grads(weights, bias, bags, y)
        return loss

    epoch_losses: list[float] = []
    dev_history: list[float] = []
    best = (weights.copy(), bias.copy())
    best_f1 = -1.0
    best_epoch = -1
    stopped_epoch = None

    for epoch in range(cfg.epochs):
        order = rng.permutation(len(bags))
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            loss, dw, db = cross_entropy_and_grads(weights, bias, bags[batch], y[batch])
            if not np.isfinite(loss):
                raise NumericError(f"non-finite training loss at epoch {epoch}")
            weights -= cfg.learning_rate * dw
            bias -= cfg.learning_rate * db
        epoch_losses.append(full_loss())

        if dev is not None:
            dev_x, dev_labels = dev
            snapshot = LinearModel(weights, bias, label_set)
            ids = [str(i) for i in range(len(dev_labels))]
            preds = [p.predicted_label for p in predict_bags(snapshot, np.asarray(dev_x), ids)]
            score = macro_f1(dev_labels, preds, label_set).macro_f1
            dev_history.append(score)
            if score > best_f1:
                best_f1 = score
                best = (weights.copy(), bias.copy())
                best_epoch = epoch
            elif epoch - best_epoch >= patience:
                stopped_epoch = epoch
                break

    if dev is not None and best_epoch >= 0:
        weights, bias = best

    model = LinearModel(weights, bias, label_set)
    final = epoch_losses[-1] if epoch_losses else full_loss()
    return LinearTrainResult(model, epoch_losses, final, stopped_epoch, dev_history)


@dataclass
class GridSearchResult:
    k: int
    batch_size: int
    learning_rate: float
    model: LinearModel
    evaluations: list[dict]


def grid_search_linear(train_by_k: dict[int, tuple[np.ndarray, list[str]]],
                       dev_by_k: dict[int, tuple[np.ndarray, list[str]]],
                       batch_sizes: list[int], learning_rates: list[float],
                       epochs: int, seed: int,
                       label_set: tuple[str, ...] | None = None) -> GridSearchResult:
    """Train one model per (k, batch, lr) cell and pick the best dev macro-F1.

    Ties break toward smaller k, then larger batch, then smaller learning
    rate. A cell that fails to train aborts the whole search with the cell
    named.
    """
    if not train_by_k or not batch_sizes or not learning_rates:
        raise ConfigError("all three grid axes must be nonempty")
    for k, (_, dev_labels) in dev_by_k.items():
        if any(label is None for label in dev_labels):
            raise DataError(f"dev set for k={k} has unlabeled rows")

    if label_set is None:
        pool = set()
        for _, labels in train_by_k.values():
            pool.update(labels)
        label_set = tuple(sorted(pool))

    evaluations = []
    models = {}
    for k, batch, lr in itertools.product(sorted(train_by_k), batch_sizes, learning_rates):
        if k not in dev_by_k:
            raise DataError(f"no dev bags for k={k}")
        train_x, train_labels = train_by_k[k]
        dev_x, dev_labels = dev_by_k[k]
        cfg = LinearTrainSettings(batch_size=batch, learning_rate=lr, epochs=epochs, seed=seed)
        try:
            result = train_linear(train_x, train_labels, cfg, label_set)
        except Exception as exc:
            raise type(exc)(f"grid cell (k={k}, batch={batch}, lr={lr}): {exc}") from exc
        ids = [str(i) for i in range(len(dev_labels))]
        preds = [p.predicted_label for p in predict_bags(result.model, np.asarray(dev_x), ids)]
        score = macro_f1(dev_labels, preds, label_set).macro_f1
        evaluations.append({"k": k, "batch_size": batch, "learning_rate": lr, "dev_macro_f1": score})
        models[(k, batch, lr)] = result.model

    ranked = sorted(evaluations, key=lambda e: (-e["dev_macro_f1"], e["k"], -e["batch_size"], e["learning_rate"]))
    best = ranked[0]
    key = (best["k"], best["batch_size"], best["learning_rate"])
    return GridSearchResult(*key, models[key], evaluations)


# ---------------------------------------------------------------------------
# training: TAP head
# ---------------------------------------------------------------------------

@dataclass
class TapTrainResult:
    head: TapHead
    step_losses: list[float]


def tap_loss_and_grads(head: TapHead, mean_frames: np.ndarray, y: np.ndarray):
    """Mean cross-entropy over mean-pooled utterances, and gradients for all
    four parameter arrays."""
    h = mean_frames @ head.projection.T + head.proj_bias
    logits = h @ head.classifier.T + head.clf_bias
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(log_norm - (z * y).sum(axis=1)))

    g = (softmax(logits) - y) / len(mean_frames)  # B x C
    d_clf = g.T @ h
    d_clf_bias = g.sum(axis=0)
    dh = g @ head.classifier  # B x P
    d_proj = dh.T @ mean_frames
    d_proj_bias = dh.sum(axis=0)
    return loss, d_proj, d_proj_bias, d_clf, d_clf_bias


def init_tap_head(input_dim: int, proj_dim: int, label_set: tuple[str, ...], seed: int) -> TapHead:
    """Scaled-uniform projection init; the classification layer starts at zero."""
    rng = np.random.default_rng(seed)
    scale = 1.0 / np.sqrt(input_dim)
    return TapHead(
        projection=rng.uniform(-scale, scale, size=(proj_dim, input_dim)),
        proj_bias=np.zeros(proj_dim),
        classifier=np.zeros((len(label_set), proj_dim)),
        clf_bias=np.zeros(len(label_set)),
        label_set=label_set,
    )


def train_tap(features: list[FeatureMatrix], labels: list[str], cfg: TrainConfig,
              label_set: tuple[str, ...] | None = None, proj_dim: int = 256,
              on_step=None) -> TapTrainResult:
    """Train a TAP head over stored frames under the tri-state schedule.

    Each step samples batch_size utterances (with replacement), takes a
    random contiguous crop of at most duration_s seconds of frames from
    each, and applies one gradient update. For the first freeze_steps
    updates only the classification layer moves. The lna and thaw_depth
    fields describe backbone finetuning and are carried but unused here.
    on_step(step, loss, head), when given, runs after every update.
    """
    if len(features) == 0:
        raise DataError("no training utterances")
    if len(features) != len(labels):
        raise DataError(f"{len(features)} feature matrices but {len(labels)} labels")
    if len(set(labels)) < 2:
        raise DataError("training data covers fewer than 2 classes")
    if cfg.batch_size < 1:
        raise DataError(f"batch_size must be >= 1, got {cfg.batch_size}")
    dims = {m.dim for m in features}
    if len(dims) != 1:
        raise DataError(f"inconsistent feature dimensions: {sorted(dims)}")

    if label_set is None:
        label_set = tuple(sorted(set(labels)))
    y_all = _one_hot(labels, label_set)

    head = init_tap_head(dims.pop(), proj_dim, label_set, cfg.seed)
    schedule = TriStateSchedule(max_lr=cfg.learning_rate, total_steps=cfg.max_steps)
    rng = np.random.default_rng(cfg.seed)
    fps = features[0].fps or DEFAULT_FPS
    crop = max(1, int(cfg.duration_s * fps))

    # Utterances short enough to never be cropped reuse one pooled mean.
    frame_arrays = [m.frames for m in features]
    full_means = np.stack([f.mean(axis=0, dtype=np.float64) for f in frame_arrays])

    step_losses: list[float] = []
    for step in range(cfg.max_steps):
        idx = rng.integers(0, len(features), size=cfg.batch_size)
        means = np.empty((cfg.batch_size, head.input_dim))
        for row, i in enumerate(idx):
            frames = frame_arrays[i]
            if len(frames) > crop:
                start = int(rng.integers(0, len(frames) - crop + 1))
                means[row] = frames[start:start + crop].mean(axis=0, dtype=np.float64)
            else:
                means[row] = full_means[i]

        loss, d_proj, d_proj_bias, d_clf, d_clf_bias = tap_loss_and_grads(head, means, y_all[idx])
        if not np.isfinite(loss):
            raise NumericError(f"non-finite loss at step {step}")
        step_losses.append(loss)

        lr = lr_at(schedule, step)
        if step >= cfg.freeze_steps:
            head.projection -= lr * d_proj
            head.proj_bias -= lr * d_proj_bias
        head.classifier -= lr * d_clf
        head.clf_bias -= lr * d_clf_bias
        if on_step is not None:
            on_step(step, loss, head)

    return TapTrainResult(head, step_losses)


# ---------------------------------------------------------------------------
# serialization: feature-format matrices plus a JSON sidecar
# ---------------------------------------------------------------------------

def save_model(model, stem) -> None:
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)

    def dump(name: str, array: np.ndarray) -> None:
        matrix = array if array.ndim == 2 else array[None, :]
        write_features(FeatureMatrix(name, matrix.astype(np.float32)),
                       stem.parent / f"{stem.name}.{name}.fmx")

    if isinstance(model, LinearModel):
        meta = {"kind": "linear", "label_set": list(model.label_set)}
        dump("weights", model.weights)
        dump("bias", model.bias)
    elif isinstance(model, TapHead):
        meta = {"kind": "tap", "label_set": list(model.label_set)}
        dump("projection", model.projection)
        dump("proj_bias", model.proj_bias)
        dump("classifier", model.classifier)
        dump("clf_bias", model.clf_bias)
    else:
        raise ConfigError(f"unsupported model type {type(model).__name__}")
    (stem.parent / f"{stem.name}.json").write_text(json.dumps(meta, sort_keys=True) + "\n", encoding="utf-8")


def load_model(stem):
    stem = Path(stem)
    meta_path = stem.parent / f"{stem.name}.json"
    if not meta_path.exists():
        raise DataError(f"model sidecar not found: {meta_path}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    label_set = tuple(meta["label_set"])

    def load(name: str, vector: bool = False) -> np.ndarray:
        m = read_features(stem.parent / f"{stem.name}.{name}.fmx")
        return m.frames[0].astype(np.float64) if vector else m.frames.astype(np.float64)

    if meta.get("kind") == "linear":
        return LinearModel(load("weights"), load("bias", vector=True), label_set)
    if meta.get("kind") == "tap":
        return TapHead(load("projection"), load("proj_bias", vector=True),
                       load("classifier"), load("clf_bias", vector=True), label_set)
    raise DataError(f"{meta_path}: unknown model kind {meta.get('kind')!r}")
