"""Proprioceptive features, PCA and feature-table plumbing."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .audiofeat import MfccConfig, aggregate, mfcc
from .datamodel import FoodSample, ProprioRecord, SampleKey

log = logging.getLogger(__name__)

CONTACT_THRESHOLD = 0.5  # newtons


@dataclass
class FeatureVector:
    values: np.ndarray
    key: SampleKey | None = None
    columns: list[str] = field(default_factory=list)  # provenance per column

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        if not self.columns:
            self.columns = [""] * self.values.size
        if len(self.columns) != self.values.size:
            raise ValueError("one provenance label per column is required")


@dataclass
class FeatureMatrix:
    """Rows are samples (identified by ``ids``), columns carry the name of the
    modality they came from."""

    values: np.ndarray
    ids: list[SampleKey]
    columns: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=np.float64))
        if not self.columns:
            self.columns = [""] * self.values.shape[1]
        if self.values.shape != (len(self.ids), len(self.columns)):
            raise ValueError(
                f"values of shape {self.values.shape} do not match "
                f"{len(self.ids)} ids x {len(self.columns)} columns")

    def __len__(self):
        return len(self.ids)

    def rows(self, keys: Sequence[SampleKey]) -> "FeatureMatrix":
        pos = {k: i for i, k in enumerate(self.ids)}
        missing = [str(k) for k in keys if k not in pos]
        if missing:
            raise KeyError(f"samples not in feature matrix: {missing[:5]}")
        idx = [pos[k] for k in keys]
        return FeatureMatrix(self.values[idx], list(keys), list(self.columns))


# --- proprioception ---------------------------------------------------------

@dataclass(frozen=True)
class ProprioFeatures:
    z_f: float
    delta_z: float
    w_g: float

    def as_array(self) -> np.ndarray:
        return np.array([self.z_f, self.delta_z, self.w_g])


def first_crossing(values: np.ndarray, signal: np.ndarray, threshold: float) -> float | None:
    """Value of ``values`` where ``signal`` first reaches ``threshold``,
    linearly interpolated between the bracketing samples."""
    above = np.flatnonzero(signal >= threshold)
    if above.size == 0:
        return None
    i = above[0]
    if i == 0:
        return float(values[0])
    s0, s1 = signal[i - 1], signal[i]
    frac = (threshold - s0) / (s1 - s0)
    return float(values[i - 1] + frac * (values[i] - values[i - 1]))


def proprio_features(r: ProprioRecord, contact_threshold: float = CONTACT_THRESHOLD,
                     delta_z_tolerance: float = 1e-3) -> ProprioFeatures:
    z, fz = r.push[:, 1], r.push[:, 2]
    z_f = first_crossing(z, fz, r.push_force_threshold)
    if z_f is None:
        raise ValueError("push force threshold not reached")
    contact = first_crossing(z, fz, contact_threshold)
    w_g = first_crossing(r.grasp[:, 1], r.grasp[:, 2], r.grasp_force_threshold)
    if w_g is None:
        raise ValueError("grasp force threshold not reached")
    delta_z = contact - z_f
    if delta_z < -delta_z_tolerance:
        raise ValueError(f"negative push depth {delta_z:.6f} m beyond tolerance")
    return ProprioFeatures(z_f, delta_z, w_g)


# --- per-sample feature extraction -------------------------------------------

AUDIO_MODALITIES = {"A_play": "audio_play", "A_cut": "audio_cut"}


def sample_features(s: FoodSample, mfcc_cfg: MfccConfig | None = None,
                    method: str = "mean_std") -> dict[str, FeatureVector]:
    """Raw (pre-PCA) feature vectors available for one sample, keyed by
    modality name (``A_play``, ``A_cut``, ``P``)."""
    out = {}
    for name, attr in AUDIO_MODALITIES.items():
        w = getattr(s, attr)
        if w is not None:
            v = aggregate(mfcc(w, mfcc_cfg), method)
            out[name] = FeatureVector(v, s.key, [name] * v.size)
    if s.proprio is not None:
        out["P"] = FeatureVector(proprio_features(s.proprio).as_array(), s.key, ["P"] * 3)
    return out


def extract_features(samples: Sequence[FoodSample], mfcc_cfg: MfccConfig | None = None,
                     method: str = "mean_std") -> dict[str, FeatureMatrix]:
    """Stack per-sample features into one matrix per modality.  A modality
    is included only when every sample provides it."""
    per_sample = [sample_features(s, mfcc_cfg, method) for s in samples]
    names = set.intersection(*(set(f) for f in per_sample)) if per_sample else set()
    out = {}
    for name in sorted(names):
        vecs = [f[name] for f in per_sample]
        out[name] = FeatureMatrix(np.stack([v.values for v in vecs]),
                                  [s.key for s in samples], list(vecs[0].columns))
    return out


def concat_features(parts: Sequence[FeatureVector]) -> FeatureVector:
    if not parts:
        raise ValueError("nothing to concatenate")
    keys = {p.key for p in parts}
    if len(keys) > 1:
        raise ValueError(f"parts come from different samples: {sorted(map(str, keys))}")
    return FeatureVector(np.concatenate([p.values for p in parts]), parts[0].key,
                         [c for p in parts for c in p.columns])


def hstack(parts: Sequence[FeatureMatrix]) -> FeatureMatrix:
    """Column-wise concatenation of row-aligned matrices."""
    if not parts:
        raise ValueError("nothing to concatenate")
    for p in parts[1:]:
        if p.ids != parts[0].ids:
            raise ValueError("feature matrices are not row-aligned by sample identifier")
    return FeatureMatrix(np.hstack([p.values for p in parts]), list(parts[0].ids),
                         [c for p in parts for c in p.columns])


def write_feature_table(path, tables: dict[str, FeatureMatrix]) -> None:
    """Long-format table: one row per (sample, modality) followed by values."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["food_category", "slice_type", "trial", "modality", "values"])
        for name in sorted(tables):
            fm = tables[name]
            for key, row in zip(fm.ids, fm.values):
                w.writerow([key.food_category, key.slice_type, key.trial, name, *map(repr, row.tolist())])


def read_feature_table(path) -> dict[str, FeatureMatrix]:
    rows: dict[str, tuple[list, list]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for r in reader:
            ids, vals = rows.setdefault(r[3], ([], []))
            ids.append(SampleKey(r[0], int(r[1]), int(r[2])))
            vals.append([float(v) for v in r[4:]])
    return {name: FeatureMatrix(np.array(vals), ids, [name] * len(vals[0]))
            for name, (ids, vals) in rows.items()}


# --- PCA --------------------------------------------------------------------

@dataclass
class PcaModel:
    mean: np.ndarray                      # (d,) column means of the raw input
    components: np.ndarray                # (k, d_kept), orthonormal rows
    explained_variance: np.ndarray        # (k,)
    explained_variance_ratio: np.ndarray  # (k,)
    kept: np.ndarray                      # indices of the columns used
    scale: np.ndarray | None = None       # (d,) per-column std when standardized

    @property
    def n_features(self) -> int:
        return self.mean.size

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "components": self.components.tolist(),
            "explained_variance": self.explained_variance.tolist(),
            "explained_variance_ratio": self.explained_variance_ratio.tolist(),
            "kept": self.kept.tolist(),
            "scale": None if self.scale is None else self.scale.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PcaModel":
        return cls(
            np.array(d["mean"], dtype=np.float64),
            np.array(d["components"], dtype=np.float64).reshape(-1, len(d["kept"])),
            np.array(d["explained_variance"], dtype=np.float64),
            np.array(d["explained_variance_ratio"], dtype=np.float64),
            np.array(d["kept"], dtype=np.int64),
            None if d["scale"] is None else np.array(d["scale"], dtype=np.float64),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "PcaModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _values(X) -> np.ndarray:
    return X.values if isinstance(X, FeatureMatrix) else np.atleast_2d(np.asarray(X, dtype=np.float64))


def pca_fit(X, n_components: int | None = None, variance: float | None = 0.95,
            standardize: bool = False) -> PcaModel:
    """Fit PCA on the rows of ``X``.

    Give either ``n_components`` or a ``variance`` fraction (the smallest
    count whose cumulative explained-variance ratio reaches it).  Each
    component is signed so that its largest-magnitude entry is positive.
    """
    A = _values(X)
    n, d = A.shape
    if n < 2:
        raise ValueError(f"PCA needs at least 2 rows, got {n}")
    mean = A.mean(axis=0)
    kept = np.arange(d)
    scale = None
    Z = A - mean
    if standardize:
        std = A.std(axis=0)
        kept = np.flatnonzero(std > 0)
        if kept.size < d:
            log.warning("dropping %d zero-variance column(s) before PCA", d - kept.size)
        if kept.size == 0:
            raise ValueError("every column has zero variance")
        scale = np.where(std > 0, std, 1.0)
        Z = Z[:, kept] / std[kept]
    cov = Z.T @ Z / (n - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    comps = evecs[:, order].T
    total = evals.sum()
    if total <= 0:
        raise ValueError("data has zero variance")
    ratio = evals / total
    if n_components is not None:
        k = int(n_components)
        if not 1 <= k <= comps.shape[0]:
            raise ValueError(f"n_components must lie in [1, {comps.shape[0]}], got {k}")
    else:
        if variance is None or not 0 < variance <= 1:
            raise ValueError("variance fraction must lie in (0, 1]")
        k = int(np.searchsorted(np.cumsum(ratio), variance - 1e-12) + 1)
        k = min(k, comps.shape[0])
    comps = comps[:k]
    pivot = np.argmax(np.abs(comps), axis=1)
    comps = comps * np.sign(comps[np.arange(k), pivot])[:, None]
    return PcaModel(mean, comps, evals[:k], ratio[:k], kept, scale)


def _standardized(m: PcaModel, A: np.ndarray) -> np.ndarray:
    Z = A - m.mean
    if m.scale is not None:
        Z = Z / m.scale
    return Z[:, m.kept]


def pca_transform(m: PcaModel, X):
    """Project rows onto the components.  Returns a FeatureMatrix when given
    one, otherwise a plain array."""
    A = _values(X)
    if A.shape[1] != m.n_features:
        raise ValueError(f"expected {m.n_features} columns, got {A.shape[1]}")
    Y = _standardized(m, A) @ m.components.T
    if isinstance(X, FeatureMatrix):
        tag = X.columns[0] if X.columns else ""
        return FeatureMatrix(Y, list(X.ids), [tag] * Y.shape[1])
    return Y


def pca_inverse_transform(m: PcaModel, Y) -> np.ndarray:
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    Z = np.zeros((Y.shape[0], m.n_features))
    Z[:, m.kept] = Y @ m.components
    if m.scale is not None:
        Z = Z * m.scale
    return Z + m.mean
