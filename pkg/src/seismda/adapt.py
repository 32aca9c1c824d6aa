"""Multi-source adversarial damage classifier and its training loop.

The model has three parts: a convolutional feature extractor shared by all
domains, a damage predictor on top of the features, and one binary domain
discriminator per source building that tries to tell that source's
features from the target's.  Discriminators see the features through a
gradient reversal node, so a single backward pass pushes the extractor
towards domain-invariant features while the discriminators improve.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import autodiff as ad
from .errors import (ArchitectureError, ArgumentError, ConfigurationError, DimensionError,
                     TrainingError)
from .quakesim import TASK_CLASSES
from .sigprep import Dataset, pool

log = logging.getLogger(__name__)

MODES = ("phymdan", "mdan", "c_dann", "b_dann", "c_cnn", "target_supervised")


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: str  # "conv" or "dense"
    out: int
    kernel: int = 1
    stride: int = 1
    activation: bool = True


def layer_plan(task, width=81):
    """Extractor and predictor conv layers as ``LayerSpec`` lists.

    ``width`` is the extractor channel count; predictor widths are 3x, 1x
    and 1/3 of it (243, 81, 27 at the default).
    """
    if task not in TASK_CLASSES:
        raise ArgumentError(f"unknown task {task!r}")
    if width < 3:
        raise ArgumentError(f"channel width must be >= 3, got {width}")
    w3 = max(1, width // 3)
    if task == "quantification":
        extractor = [LayerSpec("e1", "conv", width, 5, 2), LayerSpec("e2", "conv", width, 5, 2),
                     LayerSpec("e3", "conv", width, 3, 2),
                     LayerSpec("e4", "conv", width, 3, 2, activation=False)]
        predictor = [LayerSpec("m1", "conv", 3 * width, 3, 2), LayerSpec("m2", "conv", width, 3, 1),
                     LayerSpec("m3", "conv", w3, 3, 1)]
    else:
        extractor = [LayerSpec("e1", "conv", width, 5, 2), LayerSpec("e2", "conv", width, 5, 2),
                     LayerSpec("e3", "conv", width, 3, 2, activation=False)]
        predictor = [LayerSpec("m1", "conv", 3 * width, 3, 2), LayerSpec("m2", "conv", width, 3, 1)]
    return extractor, predictor


class PhyMDANModel:
    """Parameters plus forward passes of extractor, predictor and discriminators."""

    def __init__(self, task, n_domains, l, width=81, slope=0.2, seed=0, in_channels=3):
        self.task = task
        self.n_classes = TASK_CLASSES[task]
        self.n_domains = int(n_domains)
        self.l = int(l)
        self.width = int(width)
        self.slope = float(slope)
        self.seed = seed
        self.in_channels = in_channels
        if self.n_domains < 0:
            raise ArgumentError("domain count must be >= 0")
        if not 0.0 < self.slope < 1.0:
            raise ArgumentError(f"LeakyReLU slope must lie in (0, 1), got {slope}")

        self.extractor, self.predictor = layer_plan(task, width)
        rng = np.random.default_rng(seed)
        self.params: dict[str, ad.Tensor] = {}
        self.shapes: dict[str, tuple] = {}
        channels, length = in_channels, self.l
        for spec in self.extractor:
            channels, length = self._add_conv(spec, channels, length, rng)
        self.feature_shape = (channels, length)
        for spec in self.predictor:
            channels, length = self._add_conv(spec, channels, length, rng)
        self.predictor_flat = channels * length
        self._add_dense("m_out", self.predictor_flat, self.n_classes, rng)
        self.feature_dim = self.feature_shape[0] * self.feature_shape[1]
        for i in range(self.n_domains):
            self._add_dense(f"d{i}_out", self.feature_dim, 2, rng)

    # --------------------------------------------------------------- building
    def _add_conv(self, spec, channels, length, rng):
        if spec.kernel > length:
            raise ArchitectureError(
                f"layer {spec.name} (kernel {spec.kernel}, stride {spec.stride}) needs input "
                f"length >= {spec.kernel}, got {length} from l={self.l}")
        out_len = ad.conv_output_length(length, spec.kernel, spec.stride)
        fan_in = channels * spec.kernel
        self._param(f"{spec.name}.w", ad.init_uniform((spec.out, channels, spec.kernel), fan_in, rng))
        self._param(f"{spec.name}.b", np.zeros(spec.out))
        self.shapes[spec.name] = (spec.out, out_len)
        return spec.out, out_len

    def _add_dense(self, name, n_in, n_out, rng):
        self._param(f"{name}.w", ad.init_uniform((n_out, n_in), n_in, rng))
        self._param(f"{name}.b", np.zeros(n_out))
        self.shapes[name] = (n_out,)

    def _param(self, name, value):
        self.params[name] = ad.Tensor(value, requires_grad=True, name=name)

    # ----------------------------------------------------------------- groups
    def group(self, part) -> list:
        """Parameter names of ``"extractor"``, ``"predictor"`` or ``"d<i>"``."""
        if part == "extractor":
            prefixes = tuple(f"{s.name}." for s in self.extractor)
        elif part == "predictor":
            prefixes = tuple(f"{s.name}." for s in self.predictor) + ("m_out.",)
        else:
            prefixes = (f"{part}_out.",)
        return [k for k in self.params if k.startswith(prefixes)]

    def n_parameters(self, part=None) -> int:
        names = self.params if part is None else self.group(part)
        return int(sum(self.params[k].size for k in names))

    # --------------------------------------------------------------- forward
    def _conv_stack(self, h, specs):
        for spec in specs:
            h = ad.conv1d(h, self.params[f"{spec.name}.w"], self.params[f"{spec.name}.b"],
                          spec.stride)
            if spec.activation:
                h = ad.leaky_relu(h, self.slope)
        return h

    def _as_input(self, x):
        t = x if isinstance(x, ad.Tensor) else ad.Tensor(x)
        if t.ndim == 2:  # single sample
            t = ad.Tensor(t.data[None])
        if t.shape[-2:] != (self.in_channels, self.l):
            raise DimensionError(f"model expects samples of shape {(self.in_channels, self.l)}, "
                                 f"got {t.shape}")
        return t

    def extract(self, x) -> ad.Tensor:
        return self._conv_stack(self._as_input(x), self.extractor)

    def classify(self, z) -> ad.Tensor:
        h = ad.flatten(self._conv_stack(z, self.predictor))
        return ad.dense(h, self.params["m_out.w"], self.params["m_out.b"])

    def discriminate(self, z, i) -> ad.Tensor:
        if not 0 <= i < self.n_domains:
            raise ArgumentError(f"no discriminator {i} (model has {self.n_domains})")
        return ad.dense(ad.flatten(z), self.params[f"d{i}_out.w"], self.params[f"d{i}_out.b"])

    def logits(self, x) -> ad.Tensor:
        return self.classify(self.extract(x))

    # ------------------------------------------------------------ persistence
    def architecture(self) -> dict:
        return {"task": self.task, "n_classes": self.n_classes, "n_domains": self.n_domains,
                "l": self.l, "width": self.width, "slope": self.slope,
                "feature_shape": list(self.feature_shape),
                "discriminator_input": self.feature_dim,
                "predictor_flatten": self.predictor_flat,
                "layers": {k: list(v) for k, v in self.shapes.items()},
                "n_parameters": self.n_parameters()}

    def state(self) -> dict:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state(self, state) -> None:
        for k, v in state.items():
            if k not in self.params:
                raise ArgumentError(f"unknown parameter {k!r}")
            if v.shape != self.params[k].shape:
                raise DimensionError(f"parameter {k!r}: expected {self.params[k].shape}, "
                                     f"got {v.shape}")
            self.params[k].data = np.array(v, dtype=np.float64)

    def save(self, path) -> None:
        ad.save_params(path, self.params)

    def load(self, path) -> None:
        self.load_state(ad.load_params(path))


def build_model(task="detection", n_domains=1, l=1000, width=81, slope=0.2, seed=0):
    return PhyMDANModel(task, n_domains, l, width=width, slope=slope, seed=seed)


# ------------------------------------------------------------------- losses

def predictor_loss(model, x, y) -> ad.Tensor:
    """Mean damage cross-entropy of a labeled batch."""
    return ad.softmax_cross_entropy(model.logits(x), y)


def _discriminator_ce(model, zs, zt, i, lam, reverse=True):
    z = ad.concat([zs, zt], axis=0)
    if reverse:
        z = ad.grad_reverse(z, lam)
    logits = model.discriminate(z, i)
    labels = np.concatenate([np.ones(zs.shape[0], np.int64), np.zeros(zt.shape[0], np.int64)])
    return ad.softmax_cross_entropy(logits, labels), logits


def discriminator_loss(model, xs, xt, i=0, lam=1.0, reverse=True) -> ad.Tensor:
    """Cross-entropy of discriminator ``i`` on source (label 1) vs target (label 0).

    The loss is a mean over the pooled batch.  Features pass through a
    reversal node with coefficient ``lam`` so the forward value does not
    depend on it; ``reverse=False`` leaves the node out.
    """
    if len(xs) == 0 or len(xt) == 0:
        raise ArgumentError("discriminator needs nonempty source and target batches")
    zs, zt = model.extract(xs), model.extract(xt)
    return _discriminator_ce(model, zs, zt, i, lam, reverse)[0]


@dataclass
class ObjectiveResult:
    value: float
    grads: dict
    predictor_losses: list
    discriminator_losses: list
    discriminator_correct: list = field(default_factory=list)
    discriminator_counts: list = field(default_factory=list)


def total_objective(model, source_batches, target_x, weights, lam) -> ObjectiveResult:
    """Weighted predictor losses plus ``lam`` times weighted discriminator losses.

    ``source_batches`` is a list of ``(x, y)``; ``target_x`` may be ``None``
    when the model has no discriminators.  Discriminator terms enter the
    graph through a unit reversal and are scaled by ``lam * w_i``: the
    extractor then gets ``w_i dL_M - lam w_i dL_D``, each discriminator
    ``+lam w_i dL_D`` and the predictor only its own terms.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (len(source_batches),):
        raise DimensionError(f"{len(source_batches)} source batches but weights of shape "
                             f"{weights.shape}")
    if lam < 0:
        raise ArgumentError(f"trade-off factor must be >= 0, got {lam}")
    adversarial = model.n_domains > 0
    if adversarial and model.n_domains != len(source_batches):
        raise DimensionError(f"model has {model.n_domains} discriminators for "
                             f"{len(source_batches)} sources")
    if adversarial and target_x is None:
        raise ArgumentError("adversarial objective needs a target batch")

    zt = model.extract(target_x) if adversarial else None
    terms, coeffs, lm, ld, correct, counts = [], [], [], [], [], []
    for i, (xs, ys) in enumerate(source_batches):
        zs = model.extract(xs)
        loss_m = ad.softmax_cross_entropy(model.classify(zs), ys)
        terms.append(loss_m)
        coeffs.append(weights[i])
        lm.append(float(loss_m.data))
        if adversarial:
            loss_d, logits = _discriminator_ce(model, zs, zt, i, 1.0)
            terms.append(loss_d)
            coeffs.append(lam * weights[i])
            ld.append(float(loss_d.data))
            pred = logits.data.argmax(axis=1)
            truth = np.concatenate([np.ones(zs.shape[0]), np.zeros(zt.shape[0])])
            correct.append(int(np.sum(pred == truth)))
            counts.append(int(truth.size))
    objective = ad.weighted_sum(terms, coeffs)
    grads = ad.backward(objective, model.params)
    value = float(np.dot(weights, lm) + (lam * np.dot(weights, ld) if adversarial else 0.0))
    return ObjectiveResult(value, grads, lm, ld, correct, counts)


# ----------------------------------------------------------------- training

@dataclass
class TrainConfig:
    lam: float = 0.5
    weights: tuple | None = None  # None -> uniform over sources
    lr: float = 0.005
    decay: float = 0.1
    milestones: tuple = (0.5, 0.75)
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0
    task: str = "detection"
    slope: float = 0.2
    width: int = 81
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    val_fraction: float = 0.1
    steps_per_epoch: int | None = None  # None -> longest domain / batch size
    n_folds: int = 1  # > 1: validate on fold ``fold`` of a k-fold split instead
    fold: int = 0

    def __post_init__(self):
        if self.lam < 0:
            raise ArgumentError(f"lam must be >= 0, got {self.lam}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ArgumentError("batch size and epochs must be >= 1")
        if self.lr <= 0:
            raise ArgumentError("learning rate must be positive")
        if not 0.0 < self.val_fraction < 1.0:
            raise ArgumentError("validation fraction must lie in (0, 1)")
        if self.n_folds < 1 or not 0 <= self.fold < self.n_folds:
            raise ArgumentError(f"fold {self.fold} invalid for {self.n_folds} folds")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=np.float64)
            if np.any(w < 0) or not math.isclose(w.sum(), 1.0, abs_tol=1e-9):
                raise ArgumentError(f"source weights must be a probability vector, got {w}")
            self.weights = tuple(float(v) for v in w)
        self.milestones = tuple(self.milestones)

    def to_dict(self):
        return asdict(self)

    def lr_at(self, epoch) -> float:
        drops = sum(epoch >= int(round(m * self.epochs)) for m in self.milestones)
        return self.lr * self.decay ** drops


class BatchCycler:
    """Endless shuffled minibatches of indices; reshuffles after each pass."""

    def __init__(self, n, batch_size, rng):
        if n == 0:
            raise ArgumentError("cannot draw batches from an empty dataset")
        self.n, self.batch_size, self.rng = n, batch_size, rng
        self._order = rng.permutation(n)
        self._pos = 0

    def next(self) -> np.ndarray:
        out = []
        need = min(self.batch_size, self.n)
        while len(out) < need:
            if self._pos >= self.n:
                self._order = self.rng.permutation(self.n)
                self._pos = 0
            take = min(need - len(out), self.n - self._pos)
            out.extend(self._order[self._pos:self._pos + take])
            self._pos += take
        return np.sort(np.asarray(out))


@dataclass
class TrainResult:
    model: PhyMDANModel
    log: list
    config: TrainConfig

    def write_log(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            for row in self.log:
                fh.write(json.dumps(row, sort_keys=True) + "\n")


def predict_proba(model, X, batch=256) -> np.ndarray:
    X = np.asarray(X.X if isinstance(X, Dataset) else X, dtype=np.float64)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or X.shape[1:] != (model.in_channels, model.l):
        raise DimensionError(f"model expects samples of shape {(model.in_channels, model.l)}, "
                             f"got {X.shape}")
    out = [ad.softmax(model.logits(X[i:i + batch]).data) for i in range(0, len(X), batch)]
    return np.concatenate(out) if out else np.zeros((0, model.n_classes))


def predict(model, X, batch=256):
    """Class indices (ties go to the lower index) and probability rows."""
    probs = predict_proba(model, X, batch)
    return probs.argmax(axis=1), probs


def features(model, X, batch=256) -> np.ndarray:
    """Flattened extractor output for every sample."""
    X = np.asarray(X.X if isinstance(X, Dataset) else X, dtype=np.float64)
    out = [ad.flatten(model.extract(X[i:i + batch])).data for i in range(0, len(X), batch)]
    return np.concatenate(out) if out else np.zeros((0, model.feature_dim))


def _disc_accuracy(model, i, xs, xt, batch=256):
    correct = total = 0
    for X, label in ((xs, 1), (xt, 0)):
        for j in range(0, len(X), batch):
            z = model.extract(X[j:j + batch])
            pred = model.discriminate(z, i).data.argmax(axis=1)
            correct += int(np.sum(pred == label))
            total += pred.size
    return correct / total if total else float("nan")


def _accuracy(model, X, y):
    if len(X) == 0:
        return float("nan")
    return float(np.mean(predict(model, X)[0] == y))


def train(model, sources, target, config: TrainConfig, log_path=None) -> TrainResult:
    """Minimax training with simultaneous reversal-layer updates.

    ``sources`` are labeled ``Dataset``s; only the samples of ``target``
    are used, never its labels.  Each domain is split 90/10 (by default)
    into training and validation parts.  Per step, one batch per source and
    one target batch go through :func:`total_objective` and Adam updates
    every parameter group at once.
    """
    sources = list(sources)
    if not sources:
        raise ArgumentError("need at least one source dataset")
    for d in sources:
        if len(d) == 0:
            raise ArgumentError(f"source domain {d.domain_id!r} is empty")
    adversarial = model.n_domains > 0
    if adversarial:
        if target is None or len(target) == 0:
            raise ArgumentError("adversarial training needs a nonempty target dataset")
        if model.n_domains != len(sources):
            raise DimensionError(f"model has {model.n_domains} discriminators for "
                                 f"{len(sources)} sources")
    weights = (np.asarray(config.weights) if config.weights is not None
               else np.full(len(sources), 1.0 / len(sources)))
    if weights.size != len(sources):
        raise DimensionError(f"{len(sources)} sources but {weights.size} weights")

    seq = np.random.SeedSequence(config.seed)
    split_seed, batch_seed = (int(s.generate_state(1)[0]) for s in seq.spawn(2))
    frac = 1.0 - config.val_fraction

    def split(d, k):
        if config.n_folds > 1:
            return d.kfold(config.n_folds, config.fold, seed=split_seed + k)
        return d.split(frac, seed=split_seed + k)

    src_train, src_val = [], []
    for k, d in enumerate(sources):
        tr, va = split(d, k)
        src_train.append((tr.X, tr.y))
        src_val.append((va.X, va.y))
    if adversarial:
        tr, va = split(target, len(sources))
        tgt_train, tgt_val = tr.X, va.X

    rng = np.random.default_rng(batch_seed)
    cyclers = [BatchCycler(len(x), config.batch_size, rng) for x, _ in src_train]
    tgt_cycler = BatchCycler(len(tgt_train), config.batch_size, rng) if adversarial else None
    longest = max(len(x) for x, _ in src_train)
    if adversarial:
        longest = max(longest, len(tgt_train))
    steps = config.steps_per_epoch or max(1, math.ceil(longest / config.batch_size))

    opt = ad.Adam(model.params, lr=config.lr, beta1=config.beta1, beta2=config.beta2,
                  weight_decay=config.weight_decay)
    logrows = []
    fh = open(log_path, "w") if log_path else None
    try:
        for epoch in range(config.epochs):
            lr = config.lr_at(epoch)
            sums = {"obj": 0.0, "lm": np.zeros(len(sources)), "ld": np.zeros(len(sources)),
                    "dc": np.zeros(len(sources)), "dn": np.zeros(len(sources))}
            for step in range(steps):
                batches = []
                for (x, y), cyc in zip(src_train, cyclers):
                    idx = cyc.next()
                    batches.append((x[idx], y[idx]))
                xt = tgt_train[tgt_cycler.next()] if adversarial else None
                res = total_objective(model, batches, xt, weights, config.lam)
                if not np.isfinite(res.value):
                    raise TrainingError(f"non-finite loss at epoch {epoch} step {step}")
                try:
                    opt.step(res.grads, lr)
                except TrainingError as exc:
                    raise TrainingError(f"epoch {epoch} step {step}: {exc}") from exc
                sums["obj"] += res.value
                sums["lm"] += res.predictor_losses
                if adversarial:
                    sums["ld"] += res.discriminator_losses
                    sums["dc"] += res.discriminator_correct
                    sums["dn"] += res.discriminator_counts
            row = {"epoch": epoch, "lr": lr, "objective": sums["obj"] / steps,
                   "predictor_loss": (sums["lm"] / steps).tolist(),
                   "source_val_acc": [_accuracy(model, x, y) for x, y in src_val]}
            if adversarial:
                row["discriminator_loss"] = (sums["ld"] / steps).tolist()
                row["disc_train_acc"] = (sums["dc"] / sums["dn"]).tolist()
                row["disc_val_acc"] = [_disc_accuracy(model, i, src_val[i][0], tgt_val)
                                       for i in range(len(sources))]
            logrows.append(row)
            if fh:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
            log.debug("epoch %d: %s", epoch, row)
    finally:
        if fh:
            fh.close()
    return TrainResult(model, logrows, config)


# ----------------------------------------------------------------- variants

@dataclass
class VariantRun:
    mode: str
    results: list  # TrainResult per trained model
    weights: list
    sources: list
    best: int = 0
    selection: dict | None = None  # b_dann: target accuracy per run
    holdout: Dataset | None = None  # target_supervised: untouched evaluation part

    @property
    def model(self):
        return self.results[self.best].model


def _with_config(config, **changes):
    d = config.to_dict()
    d.update(changes)
    return TrainConfig(**d)


def train_variant(mode, sources, target, config: TrainConfig, weights=None) -> VariantRun:
    """Train one comparison method.

    ``weights`` is used by ``phymdan`` (required) and ignored otherwise;
    ``mdan`` always uses uniform weights.  ``target_supervised`` trains on
    the labeled target alone and keeps its validation part as a holdout.
    """
    if mode not in MODES:
        raise ConfigurationError(f"unknown mode {mode!r}; choose from {', '.join(MODES)}")
    sources = list(sources)
    ids = [d.domain_id for d in sources]
    l = (sources[0] if sources else target).X.shape[2]
    n = len(sources)

    def make(n_domains):
        return build_model(config.task, n_domains, l, config.width, config.slope, config.seed)

    if mode == "target_supervised":
        if target is None or not target.labeled:
            raise ConfigurationError("target_supervised needs a labeled target domain")
        tr, hold = target.split(1.0 - config.val_fraction, seed=config.seed)
        cfg = _with_config(config, lam=0.0, weights=None)
        res = train(make(0), [tr], None, cfg)
        return VariantRun(mode, [res], [1.0], [target.domain_id], holdout=hold)

    if not sources:
        raise ConfigurationError(f"mode {mode!r} needs at least one source domain")
    if mode != "c_cnn" and (target is None or len(target) == 0):
        raise ConfigurationError(f"mode {mode!r} needs target samples")
    tgt = target.unlabeled() if target is not None and mode != "b_dann" else target

    if mode == "phymdan":
        if weights is None:
            raise ConfigurationError("phymdan needs physics weights")
        w = np.asarray(weights, dtype=np.float64).tolist()
        if len(w) != n:
            raise DimensionError(f"{n} sources but {len(w)} physics weights")
        res = train(make(n), sources, tgt, _with_config(config, weights=tuple(w)))
        return VariantRun(mode, [res], w, ids)
    if mode == "mdan":
        w = [1.0 / n] * n
        res = train(make(n), sources, tgt, _with_config(config, weights=tuple(w)))
        return VariantRun(mode, [res], w, ids)
    if mode in ("c_dann", "c_cnn"):
        pooled = pool(sources, "+".join(ids))
        if mode == "c_cnn":
            res = train(make(0), [pooled], None, _with_config(config, lam=0.0, weights=None))
        else:
            res = train(make(1), [pooled], tgt, _with_config(config, weights=None))
        return VariantRun(mode, [res], [1.0], [pooled.domain_id])

    # b_dann: one single-source model per source, best picked with target labels
    if not target.labeled:
        raise ConfigurationError("b_dann selects its best run with target labels")
    runs = [train(make(1), [d], target.unlabeled(), _with_config(config, weights=None))
            for d in sources]
    y = target.y
    accs = [float(np.mean(predict(r.model, target.X)[0] == y)) for r in runs]
    best = int(np.argmax(accs))
    return VariantRun(mode, runs, [1.0] * n, ids, best=best,
                      selection={"target_accuracy": dict(zip(ids, accs)), "best": ids[best],
                                 "uses_target_labels": True})


# ---------------------------------------------------------------- estimator

class PhyMDANClassifier(ClassifierMixin, BaseEstimator):
    """Scikit-learn wrapper around :func:`train`.

    ``fit(X, y, domains=..., X_target=...)`` takes stacked spectra of all
    labeled source samples, a parallel array of domain ids and unlabeled
    target spectra.  Domains are ordered by sorted id; ``source_weights``
    follow that order.  Without ``X_target`` (or with ``lam=0``) it trains
    a plain source-only classifier.
    """

    def __init__(self, task="detection", lam=0.5, source_weights=None, epochs=20, batch_size=32,
                 lr=0.005, width=81, slope=0.2, weight_decay=1e-4, seed=0):
        self.task = task
        self.lam = lam
        self.source_weights = source_weights
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.width = width
        self.slope = slope
        self.weight_decay = weight_decay
        self.seed = seed

    def _config(self, weights):
        return TrainConfig(lam=self.lam, weights=weights, lr=self.lr, epochs=self.epochs,
                           batch_size=self.batch_size, seed=self.seed, task=self.task,
                           slope=self.slope, width=self.width, weight_decay=self.weight_decay)

    def fit(self, X, y, domains=None, X_target=None):
        X, y = check_X_y(X, y, allow_nd=True, ensure_2d=False)
        if X.ndim != 3:
            raise DimensionError(f"expected n x channels x l samples, got {X.shape}")
        domains = np.zeros(len(y), int) if domains is None else np.asarray(domains)
        if domains.shape != y.shape:
            raise DimensionError("domains must have one entry per sample")
        self.classes_ = np.arange(TASK_CLASSES[self.task])
        self.domains_ = sorted({str(d) for d in domains})
        dom_str = np.array([str(d) for d in domains])
        sources = [Dataset(X[dom_str == d], y[dom_str == d], d, task=self.task)
                   for d in self.domains_]
        adversarial = X_target is not None and self.lam > 0
        target = None
        if adversarial:
            Xt = check_array(X_target, allow_nd=True, ensure_2d=False)
            target = Dataset(Xt, None, "target", task=self.task)
        weights = self.source_weights
        if weights is not None and len(weights) != len(sources):
            raise DimensionError(f"{len(sources)} domains but {len(weights)} source weights")
        cfg = self._config(None if weights is None else tuple(weights))
        model = build_model(self.task, len(sources) if adversarial else 0, X.shape[2],
                            self.width, self.slope, self.seed)
        self.result_ = train(model, sources, target, cfg)
        self.model_ = self.result_.model
        self.n_features_in_ = int(np.prod(X.shape[1:]))
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        return predict_proba(self.model_, check_array(X, allow_nd=True, ensure_2d=False))

    def predict(self, X):
        return self.predict_proba(X).argmax(axis=1)

    def transform(self, X):
        check_is_fitted(self, "model_")
        return features(self.model_, check_array(X, allow_nd=True, ensure_2d=False))
