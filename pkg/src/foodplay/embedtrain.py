"""Triplet-loss embedding networks: spec, training, gradient checks and I/O."""

from __future__ import annotations

import json
import math
from fractions import Fraction
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .datamodel import FoodSample
from .features import FeatureMatrix, hstack
from .nn import Sequential, build_network, make_optimizer
from .tripletmine import NeighborIndex, sample_triplets, triplet_arrays

IMAGE_LAYERS = ("conv:8", "relu", "conv:16", "relu", "gap", "dense:64", "relu", "dense:32", "relu")
VECTOR_LAYERS = ("dense:64", "relu", "dense:32", "relu")


@dataclass(frozen=True)
class EncoderSpec:
    """``input_shape`` is (H, W, 3) for images or (d,) for vectors.
    ``layers`` are the hidden layers; a final linear ``dense:embedding_dim``
    is always appended."""

    input_shape: tuple = (64, 64, 3)
    layers: tuple = IMAGE_LAYERS
    embedding_dim: int = 32

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        if len(self.input_shape) == 3 and self.input_shape[2] != 3:
            raise ValueError("image inputs must have 3 channels")
        if len(self.input_shape) not in (1, 3):
            raise ValueError(f"unsupported input shape {self.input_shape}")
        if self.embedding_dim < 1:
            raise ValueError("embedding_dim must be positive")

    @property
    def is_image(self) -> bool:
        return len(self.input_shape) == 3

    @classmethod
    def image(cls, size: int = 64, embedding_dim: int = 32, layers=IMAGE_LAYERS) -> "EncoderSpec":
        return cls((size, size, 3), layers, embedding_dim)

    @classmethod
    def vector(cls, d_in: int, embedding_dim: int = 32, layers=VECTOR_LAYERS) -> "EncoderSpec":
        return cls((d_in,), layers, embedding_dim)


@dataclass(frozen=True)
class TrainConfig:
    margin: float = 0.2
    optimizer: str = "adam"
    lr: float = 1e-3
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    epochs: int = 30
    seed: int = 0

    def __post_init__(self):
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")


@dataclass
class EmbeddingModel:
    spec: EncoderSpec
    net: Sequential
    config: TrainConfig = field(default_factory=TrainConfig)
    loss_history: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "spec": {"input_shape": list(self.spec.input_shape), "layers": list(self.spec.layers),
                     "embedding_dim": self.spec.embedding_dim},
            "config": asdict(self.config),
            "parameters": [
                {"layer": i, "name": name, "shape": list(a.shape), "values": a.ravel().tolist()}
                for i, name, a in self.net.parameters()
            ],
            "loss_history": list(self.loss_history),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EmbeddingModel":
        spec = EncoderSpec(tuple(d["spec"]["input_shape"]), tuple(d["spec"]["layers"]), d["spec"]["embedding_dim"])
        model = init_model(spec, TrainConfig(**d["config"]))
        for p in d["parameters"]:
            arr = model.net.layers[p["layer"]].params[p["name"]]
            if list(arr.shape) != p["shape"]:
                raise ValueError(f"checkpoint parameter {p['layer']}/{p['name']} has shape {p['shape']}, "
                                 f"spec implies {list(arr.shape)}")
            arr[...] = np.array(p["values"], dtype=np.float64).reshape(arr.shape)
        model.loss_history = [float(v) for v in d["loss_history"]]
        return model

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "EmbeddingModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def init_model(spec: EncoderSpec, cfg: TrainConfig | None = None, seed: int | None = None) -> EmbeddingModel:
    """Fresh model with Glorot-uniform weights and zero biases."""
    cfg = cfg or TrainConfig()
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    return EmbeddingModel(spec, build_network(spec.input_shape, spec.layers, spec.embedding_dim, rng), cfg)


def encoder_forward(model: EmbeddingModel, x: np.ndarray) -> np.ndarray:
    """Embed one input (shape ``spec.input_shape``) or a batch of them."""
    x = np.asarray(x, dtype=np.float64)
    shape = model.spec.input_shape
    single = x.shape == shape
    if single:
        x = x[None]
    if x.shape[1:] != shape:
        raise ValueError(f"input of shape {x.shape[1:]} does not match spec {shape}")
    out = model.net.forward(x)
    return out[0] if single else out


# --- triplet loss -------------------------------------------------------------

def triplet_loss(ea, ep, en, margin: float = 0.2) -> float:
    """max(0, |ea - ep|^2 - |ea - en|^2 + margin)."""
    ea, ep, en = (np.asarray(v, dtype=np.float64) for v in (ea, ep, en))
    if not ea.shape == ep.shape == en.shape:
        raise ValueError(f"embedding dimensions differ: {ea.shape}, {ep.shape}, {en.shape}")
    dp = np.sum((ea - ep) ** 2)
    dn = np.sum((ea - en) ** 2)
    return float(max(0.0, _hinge_argument(dp, dn, margin)))


def _hinge_argument(dp, dn, margin):
    """dp - dn + margin, with values inside the rounding error of that sum
    set to exactly zero so boundary cases land on the hinge.  Exact
    (object) arrays are left alone."""
    per = dp - dn + margin
    dtype = np.asarray(per).dtype
    if dtype.kind != "f":
        return per
    tol = 4 * np.finfo(dtype).eps * (dp + dn + margin)
    return np.where(np.abs(per) <= tol, 0 * per, per)


def batch_triplet_loss(A, P, N, margin):
    """Mean triplet loss over rows and its gradients w.r.t. A, P and N.

    Works for float and object (exact rational) arrays alike.
    """
    dp = np.sum((A - P) ** 2, axis=1)
    dn = np.sum((A - N) ** 2, axis=1)
    per = _hinge_argument(dp, dn, margin)
    active = (per > 0)[:, None]
    B = A.shape[0]
    loss = np.sum(np.where(per > 0, per, 0 * per)) / B
    gA = 2 * (N - P) * active / B
    gP = -2 * (A - P) * active / B
    gN = 2 * (A - N) * active / B
    return loss, gA, gP, gN


def triplet_step(net: Sequential, xa, xp, xn, margin, backward: bool = True) -> float:
    """Forward the stacked batch, and optionally backpropagate the mean loss."""
    B = xa.shape[0]
    out = net.forward(np.concatenate([xa, xp, xn]))
    loss, gA, gP, gN = batch_triplet_loss(out[:B], out[B:2 * B], out[2 * B:], margin)
    if backward:
        net.backward(np.concatenate([gA, gP, gN]))
    return float(loss)


@dataclass
class GradCheckResult:
    max_rel_error: float
    n_checked: int
    n_kinked: int  # perturbations that changed a ReLU or hinge pattern
    worst: tuple = ()  # (layer, name, flat index, analytic, finite difference)


def _embed_and_pattern(net: Sequential, x):
    out = net.forward(x)
    return out, [m.copy() for m in net.relu_masks()]


def _hinge_pattern(out, B, margin):
    A, P, N = out[:B], out[B:2 * B], out[2 * B:]
    return _hinge_argument(np.sum((A - P) ** 2, axis=1), np.sum((A - N) ** 2, axis=1), margin) > 0


def _loss_difference(up, down, B, margin):
    """L(up) - L(down) for stacked (A; P; N) embeddings sharing one hinge
    pattern, via |u+|^2 - |u-|^2 = (u+ - u-).(u+ + u-) to avoid cancellation."""
    def parts(out):
        return out[:B] - out[B:2 * B], out[:B] - out[2 * B:]

    (u1, v1), (u0, v0) = parts(up), parts(down)
    diff = np.sum((u1 - u0) * (u1 + u0), axis=1) - np.sum((v1 - v0) * (v1 + v0), axis=1)
    active = _hinge_pattern(up, B, margin)
    return np.sum(diff[active]) / B


ARITHMETIC = ("auto", "float64", "extended", "exact")
# "auto" checks networks up to this many parameters in exact arithmetic
EXACT_PARAM_LIMIT = 200


def _converter(arithmetic: str):
    if arithmetic == "float64":
        return (lambda a: np.array(a, dtype=np.float64)), np.float64
    if arithmetic == "extended":
        return (lambda a: np.asarray(a, dtype=np.float64).astype(np.longdouble)), np.longdouble
    if arithmetic == "exact":
        return np.vectorize(Fraction, otypes=[object]), Fraction
    raise ValueError(f"arithmetic must be one of {ARITHMETIC}, got {arithmetic!r}")


def grad_check_report(model: EmbeddingModel, batch, eps: float = 1e-5, margin: float | None = None,
                      arithmetic: str = "auto") -> GradCheckResult:
    """Compare backprop gradients of the mean triplet loss against central
    finite differences for every parameter.

    The network's 64-bit parameters and inputs are converted (exactly) to
    the chosen ``arithmetic`` and both the backward pass and the perturbed
    forward passes run there: ``float64``, ``extended`` (80-bit long
    double) or ``exact`` (rational; only practical for small networks).
    ``auto`` picks ``exact`` up to ``EXACT_PARAM_LIMIT`` parameters and
    ``extended`` above it.  Higher precision keeps round-off from swamping small or identically
    zero gradients.  The finite-difference loss change is formed with the
    difference-of-squares identity to avoid cancellation.

    A perturbation whose +eps or -eps evaluation flips any ReLU unit or
    hinge term relative to the unperturbed pattern straddles a
    non-differentiable point; such parameters are counted in ``n_kinked``
    and left out of the maximum.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError(f"eps={eps} outside [1e-7, 1e-3]")
    if arithmetic == "auto":
        arithmetic = "exact" if model.net.n_params() <= EXACT_PARAM_LIMIT else "extended"
    convert, scalar = _converter(arithmetic)
    xa, xp, xn = (np.asarray(b, dtype=np.float64) for b in batch)
    B = xa.shape[0]
    margin = model.config.margin if margin is None else margin
    net = model.net.astype(convert)
    x = convert(np.concatenate([xa, xp, xn]))
    m_e = scalar(margin)
    step = scalar(eps)

    out0 = net.forward(x)
    relu0 = [m.copy() for m in net.relu_masks()]
    hinge0 = _hinge_pattern(out0, B, m_e)
    _, gA, gP, gN = batch_triplet_loss(out0[:B], out0[B:2 * B], out0[2 * B:], m_e)
    net.backward(np.concatenate([gA, gP, gN]))
    analytic = [g.copy() for g in net.gradients()]

    worst, where, checked, kinked = 0.0, (), 0, 0
    for (li, name, arr), g in zip(net.parameters(), analytic):
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            up, relu_up = _embed_and_pattern(net, x)
            flat[j] = orig - step
            down, relu_down = _embed_and_pattern(net, x)
            flat[j] = orig
            same = all(np.array_equal(a, b) and np.array_equal(a, c)
                       for a, b, c in zip(relu0, relu_up, relu_down))
            same = same and np.array_equal(hinge0, _hinge_pattern(up, B, m_e)) \
                and np.array_equal(hinge0, _hinge_pattern(down, B, m_e))
            if not same:
                kinked += 1
                continue
            fd = float(_loss_difference(up, down, B, m_e) / (2 * step))
            a = float(gflat[j])
            rel = abs(a - fd) / max(abs(a), abs(fd), 1e-12)
            checked += 1
            if rel > worst or not where:
                worst, where = max(worst, rel), (li, name, j, a, fd)
    return GradCheckResult(worst, checked, kinked, where)


def grad_check(model: EmbeddingModel, batch, eps: float = 1e-5, margin: float | None = None,
               arithmetic: str = "auto") -> float:
    """Largest relative error |a - f| / max(|a|, |f|, 1e-12) between the
    analytic and central-difference gradients; see grad_check_report."""
    return grad_check_report(model, batch, eps, margin, arithmetic).max_rel_error


# --- training -----------------------------------------------------------------

def sample_inputs(samples: Sequence[FoodSample], spec: EncoderSpec) -> np.ndarray:
    """Stack image inputs for ``samples``; error names every sample lacking one."""
    if not spec.is_image:
        raise ValueError("sample_inputs is for image encoders; pass vectors directly")
    missing = [str(s.key) for s in samples if s.image is None]
    if missing:
        raise ValueError(f"samples without an image: {missing}")
    X = np.stack([s.image for s in samples]).astype(np.float64)
    if X.shape[1:] != spec.input_shape:
        raise ValueError(f"images of shape {X.shape[1:]} do not match encoder input {spec.input_shape}")
    return X


def train_embedding(samples, index: NeighborIndex, spec: EncoderSpec, cfg: TrainConfig | None = None) -> EmbeddingModel:
    """Train an encoder so that triplets drawn from ``index`` are respected.

    ``samples`` may be FoodSamples (images are used) or an input array whose
    first axis is aligned with ``index``.  Runs ``epochs * ceil(N / batch)``
    optimizer steps, one triplet batch per step.
    """
    cfg = cfg or TrainConfig()
    X = samples if isinstance(samples, np.ndarray) else sample_inputs(samples, spec)
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] != index.size:
        raise ValueError(f"index covers {index.size} samples but {X.shape[0]} inputs were given")
    model = init_model(spec, cfg)
    params = [a for _, _, a in model.net.parameters()]
    opt = make_optimizer(cfg, params)
    rng = np.random.default_rng([cfg.seed, 1])
    steps = cfg.epochs * math.ceil(X.shape[0] / cfg.batch_size)
    for _ in range(steps):
        a, p, n = triplet_arrays(sample_triplets(index, cfg.batch_size, rng))
        loss = triplet_step(model.net, X[a], X[p], X[n], cfg.margin)
        opt.step(model.net.gradients())
        model.loss_history.append(loss)
    return model


def embed_dataset(model: EmbeddingModel, samples, ids=None, chunk: int = 256) -> FeatureMatrix:
    """Embed FoodSamples (or an input array with explicit ``ids``)."""
    if isinstance(samples, np.ndarray):
        X = samples
        if ids is None:
            raise ValueError("ids are required when embedding a raw array")
    else:
        X = sample_inputs(samples, model.spec)
        ids = [s.key for s in samples]
    out = np.concatenate([encoder_forward(model, X[i:i + chunk]) for i in range(0, X.shape[0], chunk)]) \
        if X.shape[0] else np.zeros((0, model.spec.embedding_dim))
    return FeatureMatrix(out, list(ids), ["embedding"] * model.spec.embedding_dim)


def concat_embeddings(parts: Sequence[FeatureMatrix]) -> FeatureMatrix:
    return hstack(parts)


def retag(fm: FeatureMatrix, name: str) -> FeatureMatrix:
    return replace(fm, columns=[name] * fm.values.shape[1])
