"""Prediction heads, evaluation protocols and report assembly.

A *row* of the report is either a mining metric (an image encoder is
trained with triplets mined in that space, then frozen) or a baseline:

``F`` / ``S``
    same food category / same slice type are positives.
``A_play``, ``A_cut``
    nearest neighbours among PCA-reduced audio features.
``P``
    nearest neighbours among raw proprioceptive features.
``X+Y``
    nearest neighbours after concatenating the spaces of X and Y and
    running a standardized PCA on the result.
``X|Y``
    separate encoders for X and Y whose embeddings are concatenated.
``vision_direct``
    encoder and head trained end to end on the task labels.
``audio_direct``
    a head on PCA-reduced playing-audio features.

Tasks run either on the trial split (trials 1-4 train, trial 5 test) or
leave-one-category-out, where the held-out category is excluded from
mining, PCA fitting, encoder training and head training.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .audiofeat import MfccConfig
from .datamodel import HARDNESS, JUICINESS, FoodSample
from .embedtrain import EncoderSpec, TrainConfig, embed_dataset, sample_inputs, train_embedding
from .features import FeatureMatrix, extract_features, hstack, pca_fit, pca_transform
from .nn import Sequential, build_network, make_optimizer, mean_squared_error, softmax_cross_entropy
from .tripletmine import FEATURE_KNN, LABEL_MATCH, NeighborIndex, mine_neighbors

CLASSIFY, REGRESS = "classify", "regress"
BASELINES = ("vision_direct", "audio_direct")
DEFAULT_METRICS = ("F", "S", "A_play", "A_cut", "P", "A_play+P")
DEFAULT_TASKS = ("food_type", "hardness", "juiciness", "slice_type", "slice_width")
DEFAULT_LOO_TASKS = ("hardness", "juiciness", "cooked")

# Published results on the physical dataset with a pretrained vision
# backbone.  They document the shape of the expected outcome and are not
# reproducible at desk scale; nothing in this package tests against them.
PUBLISHED_REFERENCE = {
    "columns": ["food_type", "hardness", "juiciness", "slice_type", "slice_width"],
    "rows": {
        "F": [92.0, 40.7, 36.6, 12.9, 10.9],
        "S": [17.1, 37.0, 34.9, 40.5, 11.8],
        "A_play": [85.7, 35.0, 46.0, 17.1, 9.9],
        "A_cut": [93.5, 33.5, 45.6, 16.8, 11.3],
        "P": [49.5, 47.1, 37.0, 20.0, 7.9],
        "A_play+P": [83.8, 36.4, 40.2, 21.4, 9.5],
        "vision_direct": [98.9, 34.9, 36.5, 30.0, 13.9],
        "audio_direct": [84.4, 40.8, 34.0, 30.1, 34.4],
    },
}
PUBLISHED_COOKED_REFERENCE = {
    "columns": ["hardness", "juiciness", "cooked"],
    "rows": {
        "A_play": [98.0, 62.9, 98.9],
        "P": [63.0, 68.4, 60.6],
        "A_play+P": [99.7, 70.6, 99.1],
        "vision_direct": [90.5, 66.1, 90.4],
        "audio_direct": [82.1, 67.4, 88.8],
    },
}


# --- tasks --------------------------------------------------------------------

@dataclass(frozen=True)
class Task:
    name: str
    kind: str
    classes: tuple = ()

    @property
    def n_outputs(self) -> int:
        return len(self.classes) if self.kind == CLASSIFY else 1


def make_task(name: str, samples: Sequence[FoodSample] = ()) -> Task:
    """Task definition; ``food_type`` takes its classes from ``samples``."""
    if name == "food_type":
        return Task(name, CLASSIFY, tuple(sorted({s.food_category for s in samples})))
    if name == "hardness":
        return Task(name, CLASSIFY, HARDNESS)
    if name == "juiciness":
        return Task(name, CLASSIFY, JUICINESS)
    if name == "slice_type":
        return Task(name, CLASSIFY, tuple(range(1, 15)))
    if name == "cooked":
        return Task(name, CLASSIFY, (False, True))
    if name == "slice_width":
        return Task(name, REGRESS)
    raise ValueError(f"unknown task {name!r}")


def _raw_target(s: FoodSample, name: str):
    if name == "food_type":
        return s.food_category
    if name == "slice_type":
        return s.slice_type
    if name == "slice_width":
        return s.gripper_width
    if s.labels is None:
        return None
    return getattr(s.labels, name)


def task_targets(samples: Sequence[FoodSample], task: Task) -> tuple[np.ndarray, np.ndarray]:
    """(targets, usable mask).  Classification targets are indices into
    ``task.classes``; rows whose target is missing or unknown are unusable."""
    y = np.zeros(len(samples), dtype=np.int64 if task.kind == CLASSIFY else np.float64)
    ok = np.zeros(len(samples), dtype=bool)
    for i, s in enumerate(samples):
        v = _raw_target(s, task.name)
        if v is None:
            continue
        if task.kind == CLASSIFY:
            if v not in task.classes:
                continue
            y[i] = task.classes.index(v)
        else:
            y[i] = float(v)
        ok[i] = True
    return y, ok


# --- heads ----------------------------------------------------------------------

@dataclass(frozen=True)
class HeadConfig:
    hidden: tuple = (64, 32)
    optimizer: str = "adam"
    lr: float = 1e-2
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    epochs: int = 100
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if len(self.hidden) != 2:
            raise ValueError("a head has exactly two hidden layers")
        if self.lr <= 0 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("lr must be positive, batch_size >= 1, epochs >= 0")


@dataclass
class HeadModel:
    task: Task
    net: Sequential
    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: float = 0.0
    y_scale: float = 1.0


def _safe_std(a, axis=None):
    s = np.std(a, axis=axis)
    return np.where(s > 0, s, 1.0)


def _fit(net: Sequential, X: np.ndarray, y: np.ndarray, task: Task, cfg, seed) -> list[float]:
    """Minibatch training on shuffled data with the task's loss."""
    opt = make_optimizer(cfg, [a for _, _, a in net.parameters()])
    rng = np.random.default_rng(seed)
    N = X.shape[0]
    history = []
    for _ in range(cfg.epochs):
        order = rng.permutation(N)
        for start in range(0, N, cfg.batch_size):
            b = order[start:start + cfg.batch_size]
            out = net.forward(X[b])
            if task.kind == CLASSIFY:
                loss, g = softmax_cross_entropy(out, y[b])
            else:
                loss, g = mean_squared_error(out, y[b])
            net.backward(g)
            opt.step(net.gradients())
            history.append(loss)
    return history


def _values(E) -> np.ndarray:
    return np.asarray(E.values if isinstance(E, FeatureMatrix) else E, dtype=np.float64)


def train_head(E, targets, task: Task, cfg: HeadConfig | None = None) -> HeadModel:
    """Train a two-hidden-layer ReLU perceptron on standardized inputs
    (regression targets are standardized too)."""
    cfg = cfg or HeadConfig()
    X = _values(E)
    y = np.asarray(targets)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError(f"{X.shape[0]} feature rows do not align with {y.shape[0]} targets")
    if X.shape[0] == 0:
        raise ValueError("no training rows")
    x_mean, x_scale = X.mean(axis=0), _safe_std(X, axis=0)
    y_mean, y_scale = 0.0, 1.0
    if task.kind == REGRESS:
        y_mean, y_scale = float(y.mean()), float(_safe_std(y))
        y = (y - y_mean) / y_scale
    rng = np.random.default_rng([cfg.seed, 0])
    net = build_network((X.shape[1],), [f"dense:{cfg.hidden[0]}", "relu", f"dense:{cfg.hidden[1]}", "relu"],
                        task.n_outputs, rng)
    _fit(net, (X - x_mean) / x_scale, y, task, cfg, [cfg.seed, 1])
    return HeadModel(task, net, x_mean, x_scale, y_mean, y_scale)


def predict(head: HeadModel, E) -> np.ndarray:
    X = (_values(E) - head.x_mean) / head.x_scale
    out = head.net.forward(X)
    if head.task.kind == CLASSIFY:
        return out.argmax(axis=1)
    return out[:, 0] * head.y_scale + head.y_mean


@dataclass(frozen=True)
class Metrics:
    value: float     # accuracy in percent, or RMSE in the target's unit
    kind: str
    n: int


def score(pred, y, task: Task) -> Metrics:
    pred, y = np.asarray(pred), np.asarray(y)
    if y.size == 0:
        raise ValueError("empty test set")
    if pred.shape != y.shape:
        raise ValueError(f"{pred.shape[0]} predictions for {y.shape[0]} targets")
    if task.kind == CLASSIFY:
        return Metrics(100.0 * float(np.mean(pred == y)), "accuracy_percent", y.size)
    return Metrics(float(np.sqrt(np.mean((pred - y) ** 2))), "rmse_mm", y.size)


def evaluate_task(head: HeadModel, E_test, targets_test, task: Task | None = None) -> Metrics:
    task = task or head.task
    X = _values(E_test)
    y = np.asarray(targets_test)
    if y.size == 0 or X.shape[0] == 0:
        raise ValueError("empty test set")
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"{X.shape[0]} test rows do not align with {y.shape[0]} targets")
    return score(predict(head, X), y, task)


# --- pipeline configuration ---------------------------------------------------

@dataclass
class PipelineConfig:
    mfcc: MfccConfig = field(default_factory=MfccConfig)
    aggregate: str = "mean_std"
    pca_variance: float = 0.95
    mining_n: int = 10
    embedding_dim: int = 32
    encoder_layers: tuple = ()            # empty means the default image stack
    train: TrainConfig = field(default_factory=TrainConfig)
    head: HeadConfig = field(default_factory=HeadConfig)
    metrics: tuple = DEFAULT_METRICS
    baselines: tuple = BASELINES
    tasks: tuple = DEFAULT_TASKS
    loo_tasks: tuple = DEFAULT_LOO_TASKS  # tasks evaluated leave-one-category-out
    train_trials: tuple = (1, 2, 3, 4)
    test_trials: tuple = (5,)
    seed: int = 0

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        kw = {}
        if "mfcc" in d:
            kw["mfcc"] = MfccConfig(**d.pop("mfcc"))
        if "train" in d:
            kw["train"] = TrainConfig(**d.pop("train"))
        if "head" in d:
            kw["head"] = HeadConfig(**d.pop("head"))
        for k, v in d.items():
            if k not in cls.__dataclass_fields__:
                raise ValueError(f"unknown pipeline setting {k!r}")
            kw[k] = tuple(v) if isinstance(v, list) else v
        return cls(**kw)


def derive_seed(*parts: int) -> int:
    """Stable 32-bit seed from integer parts."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def encoder_spec(cfg: PipelineConfig, input_shape) -> EncoderSpec:
    if cfg.encoder_layers:
        return EncoderSpec(tuple(input_shape), tuple(cfg.encoder_layers), cfg.embedding_dim)
    return EncoderSpec(tuple(input_shape), embedding_dim=cfg.embedding_dim)


# --- metric spaces and mining -------------------------------------------------

def _atoms(row: str, sep: str) -> list[str]:
    return [a.strip() for a in row.split(sep)]


def metric_space(metric: str, feats: dict[str, FeatureMatrix], train_idx, cfg: PipelineConfig) -> np.ndarray:
    """Training-row coordinates in which neighbours are mined.  PCA models
    are fitted on the training rows only."""
    parts = _atoms(metric, "+")
    cols = []
    for p in parts:
        if p not in feats:
            raise ValueError(f"metric {metric!r} needs modality {p!r}, which is unavailable")
        X = feats[p].values[train_idx]
        if p.startswith("A_"):
            X = pca_transform(pca_fit(X, variance=cfg.pca_variance), X)
        cols.append(X)
    Z = np.hstack(cols)
    if len(parts) > 1:
        Z = pca_transform(pca_fit(Z, variance=cfg.pca_variance, standardize=True), Z)
    return Z


def mine_for_metric(metric: str, samples: Sequence[FoodSample], feats: dict[str, FeatureMatrix],
                    train_idx, cfg: PipelineConfig) -> NeighborIndex:
    train = [samples[i] for i in train_idx]
    if metric == "F":
        return mine_neighbors(n=cfg.mining_n, mode=LABEL_MATCH, labels=[s.food_category for s in train])
    if metric == "S":
        return mine_neighbors(n=cfg.mining_n, mode=LABEL_MATCH, labels=[s.slice_type for s in train])
    Z = metric_space(metric, feats, train_idx, cfg)
    return mine_neighbors(Z, min(cfg.mining_n, Z.shape[0] - 1), FEATURE_KNN)


def train_metric_encoders(metric: str, samples, feats, X, train_idx, cfg: PipelineConfig, seed: int):
    """One encoder per ``|``-separated part of ``metric``."""
    models = []
    for k, part in enumerate(_atoms(metric, "|")):
        idx = mine_for_metric(part, samples, feats, train_idx, cfg)
        tcfg = TrainConfig(**{**asdict(cfg.train), "seed": derive_seed(seed, k)})
        models.append(train_embedding(X[train_idx], idx, encoder_spec(cfg, X.shape[1:]), tcfg))
    return models


def embed_rows(models, X, ids) -> FeatureMatrix:
    return hstack([embed_dataset(m, X, ids) for m in models])


# --- rows -------------------------------------------------------------------------

@dataclass
class Context:
    samples: list
    feats: dict
    X: np.ndarray
    ids: list
    cfg: PipelineConfig


def _vision_direct(ctx: Context, task: Task, y, train, test, seed) -> float:
    cfg = ctx.cfg
    spec = encoder_spec(cfg, ctx.X.shape[1:])
    rng = np.random.default_rng([seed, 0])
    net = build_network(spec.input_shape, spec.layers, task.n_outputs, rng)
    tcfg = cfg.train
    yt = y[train].astype(np.float64) if task.kind == REGRESS else y[train]
    y_mean, y_scale = 0.0, 1.0
    if task.kind == REGRESS:
        y_mean, y_scale = float(yt.mean()), float(_safe_std(yt))
        yt = (yt - y_mean) / y_scale
    _fit(net, ctx.X[train], yt, task, tcfg, [seed, 1])
    out = np.concatenate([net.forward(ctx.X[test[i:i + 256]]) for i in range(0, len(test), 256)])
    pred = out.argmax(axis=1) if task.kind == CLASSIFY else out[:, 0] * y_scale + y_mean
    return score(pred, y[test], task).value


def evaluate_row(row: str, ctx: Context, train_idx, test_idx, tasks: Sequence[Task], seed: int,
                 keep_models: list | None = None) -> dict[str, float | dict]:
    """Train what ``row`` needs on ``train_idx`` and score every task on
    ``test_idx``.  Failures become ``{"error": reason}`` cells."""
    train_idx, test_idx = np.asarray(train_idx), np.asarray(test_idx)
    leak = {ctx.ids[i] for i in train_idx} & {ctx.ids[i] for i in test_idx}
    assert not leak, f"train/test overlap: {sorted(map(str, leak))[:5]}"
    targets = {t.name: task_targets(ctx.samples, t) for t in tasks}
    out: dict = {}
    E = None
    if row not in BASELINES:
        try:
            models = train_metric_encoders(row, ctx.samples, ctx.feats, ctx.X, train_idx, ctx.cfg, seed)
            if keep_models is not None:
                keep_models.extend(models)
            E = embed_rows(models, ctx.X, ctx.ids).values
        except (ValueError, KeyError) as exc:
            return {t.name: {"error": str(exc)} for t in tasks}
    elif row == "audio_direct":
        if "A_play" not in ctx.feats:
            return {t.name: {"error": "playing audio features unavailable"} for t in tasks}
        A = ctx.feats["A_play"].values
        E = pca_transform(pca_fit(A[train_idx], variance=ctx.cfg.pca_variance), A)
    for t in tasks:
        y, ok = targets[t.name]
        tr, te = train_idx[ok[train_idx]], test_idx[ok[test_idx]]
        if te.size == 0:
            out[t.name] = {"error": "no test sample has this target"}
            continue
        if tr.size == 0:
            out[t.name] = {"error": "no training sample has this target"}
            continue
        try:
            if row == "vision_direct":
                out[t.name] = _vision_direct(ctx, t, y, tr, te, derive_seed(seed, 7))
            else:
                head = train_head(E[tr], y[tr], t, ctx.cfg.head)
                out[t.name] = evaluate_task(head, E[te], y[te], t).value
        except ValueError as exc:
            out[t.name] = {"error": str(exc)}
    return out


def trial_split(samples: Sequence[FoodSample], cfg: PipelineConfig) -> tuple[np.ndarray, np.ndarray]:
    train = np.array([i for i, s in enumerate(samples) if s.trial in cfg.train_trials], dtype=np.int64)
    test = np.array([i for i, s in enumerate(samples) if s.trial in cfg.test_trials], dtype=np.int64)
    return train, test


@dataclass
class FoldResult:
    category: str
    n_train: int
    n_test: int
    values: dict  # task -> value or {"error": ...}


@dataclass
class LooResult:
    row: str
    means: dict          # task -> unweighted mean over usable folds, or {"error": ...}
    folds: list[FoldResult]

    def errored(self, task: str) -> list[str]:
        return [f.category for f in self.folds if isinstance(f.values.get(task), dict)]


def category_folds(samples: Sequence[FoodSample]) -> list[tuple[str, np.ndarray, np.ndarray]]:
    cats = sorted({s.food_category for s in samples})
    if len(cats) < 2:
        raise ValueError("leave-one-out needs at least 2 food categories")
    out = []
    for c in cats:
        test = np.array([i for i, s in enumerate(samples) if s.food_category == c], dtype=np.int64)
        train = np.array([i for i, s in enumerate(samples) if s.food_category != c], dtype=np.int64)
        out.append((c, train, test))
    return out


def leave_one_out(ctx: Context, row: str, tasks: Sequence[Task], seed: int | None = None) -> LooResult:
    """One fold per category; embedding, PCA, mining and heads are refitted
    without the held-out category.  Means are unweighted over folds whose
    cell did not error."""
    seed = ctx.cfg.seed if seed is None else seed
    folds = []
    for k, (cat, train, test) in enumerate(category_folds(ctx.samples)):
        assert not set(train) & set(test)
        values = evaluate_row(row, ctx, train, test, tasks, derive_seed(seed, 1000 + k))
        folds.append(FoldResult(cat, int(train.size), int(test.size), values))
    means = {}
    for t in tasks:
        vals = [f.values[t.name] for f in folds if not isinstance(f.values[t.name], dict)]
        means[t.name] = float(np.mean(vals)) if vals else {"error": "every fold errored"}
    return LooResult(row, means, folds)


def make_context(samples: Sequence[FoodSample], cfg: PipelineConfig,
                 feats: dict[str, FeatureMatrix] | None = None) -> Context:
    samples = list(samples)
    if feats is None:
        feats = extract_features(samples, cfg.mfcc, cfg.aggregate)
    ids = [s.key for s in samples]
    feats = {k: v.rows(ids) for k, v in feats.items()}
    X = sample_inputs(samples, EncoderSpec((*samples[0].image.shape[:2], 3), embedding_dim=1)) \
        if samples and samples[0].image is not None else np.zeros((len(samples), 0))
    return Context(samples, feats, X, ids, cfg)


# --- report -------------------------------------------------------------------------

def scatter_rows(values: np.ndarray, samples: Sequence[FoodSample]) -> list[list]:
    """Top-3 principal coordinates per sample with category and cooked flag."""
    values = np.asarray(values, dtype=np.float64)
    k = min(3, values.shape[1], values.shape[0] - 1)
    Y = pca_transform(pca_fit(values, n_components=k), values)
    Y = np.hstack([Y, np.zeros((Y.shape[0], 3 - k))])
    return [[float(a), float(b), float(c), s.food_category,
             "" if s.labels is None or s.labels.cooked is None else int(bool(s.labels.cooked))]
            for (a, b, c), s in zip(Y, samples)]


@dataclass
class EvalReport:
    rows: list[str]
    tasks: list[str]
    protocol: dict              # task -> "trial" | "leave_one_out"
    grid: dict                  # row -> task -> value | {"error": ...}
    folds: dict                 # row -> list of per-fold dicts
    config: dict
    scatter: dict = field(default_factory=dict)   # name -> rows (x, y, z, category, cooked)
    models: dict = field(default_factory=dict)    # row -> trial-split encoders (not serialized)

    def to_dict(self) -> dict:
        return {"rows": self.rows, "tasks": self.tasks, "protocol": self.protocol, "grid": self.grid,
                "folds": self.folds, "config": self.config,
                "units": {t: ("rmse_mm" if t == "slice_width" else "accuracy_percent") for t in self.tasks},
                "scatter": self.scatter}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def grid_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["embedding", *self.tasks])
        for r in self.rows:
            cells = []
            for t in self.tasks:
                v = self.grid[r][t]
                cells.append(f"error: {v['error']}" if isinstance(v, dict) else f"{v:.4f}")
            w.writerow([r, *cells])
        return buf.getvalue()

    def save(self, directory) -> None:
        from pathlib import Path
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        (d / "report.json").write_text(self.to_json())
        (d / "grid.csv").write_text(self.grid_csv())
        for name, rows in self.scatter.items():
            with open(d / f"scatter_{name}.csv", "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["x", "y", "z", "category", "cooked"])
                w.writerows([[repr(r[0]), repr(r[1]), repr(r[2]), r[3], r[4]] for r in rows])
        mdir = d / "models"
        mdir.mkdir(exist_ok=True)
        for row, models in self.models.items():
            for k, m in enumerate(models):
                m.save(mdir / f"{row.replace('|', '_').replace('+', '_plus_')}_{k}.json")


def full_report(samples: Sequence[FoodSample], cfg: PipelineConfig | None = None,
                feats: dict[str, FeatureMatrix] | None = None) -> EvalReport:
    """Evaluate every (row x task) cell.  Tasks listed in ``cfg.loo_tasks``
    use leave-one-category-out; the rest use the trial split."""
    cfg = cfg or PipelineConfig()
    if not cfg.tasks:
        raise ValueError("task list is empty")
    if not samples:
        raise ValueError("no samples")
    ctx = make_context(samples, cfg, feats)
    tasks = [make_task(t, ctx.samples) for t in cfg.tasks]
    trial_tasks = [t for t in tasks if t.name not in cfg.loo_tasks]
    loo_tasks = [t for t in tasks if t.name in cfg.loo_tasks]
    rows = list(cfg.metrics) + list(cfg.baselines)
    train, test = trial_split(ctx.samples, cfg)
    grid, folds, models = {}, {}, {}
    for r_i, row in enumerate(rows):
        grid[row] = {}
        kept: list = []
        if trial_tasks:
            if train.size == 0 or test.size == 0:
                grid[row].update({t.name: {"error": "trial split leaves an empty side"} for t in trial_tasks})
            else:
                grid[row].update(evaluate_row(row, ctx, train, test, trial_tasks, derive_seed(cfg.seed, r_i), kept))
        if kept:
            models[row] = kept
        if loo_tasks:
            try:
                res = leave_one_out(ctx, row, loo_tasks, derive_seed(cfg.seed, r_i, 1))
            except ValueError as exc:
                grid[row].update({t.name: {"error": str(exc)} for t in loo_tasks})
            else:
                grid[row].update(res.means)
                folds[row] = [asdict(f) for f in res.folds]
        grid[row] = {t.name: grid[row][t.name] for t in tasks}
    scatter = {}
    if "A_play" in ctx.feats:
        scatter["A_play_features"] = scatter_rows(ctx.feats["A_play"].values, ctx.samples)
    if "A_play" in models:
        E = embed_rows(models["A_play"], ctx.X, ctx.ids).values
        scatter["A_play_embedding"] = scatter_rows(E, ctx.samples)
    protocol = {t.name: ("leave_one_out" if t.name in cfg.loo_tasks else "trial") for t in tasks}
    return EvalReport(rows, [t.name for t in tasks], protocol, grid, folds, cfg.to_dict(), scatter, models)
