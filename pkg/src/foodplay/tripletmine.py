"""Positive/negative candidate sets and random triplet sampling."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

FEATURE_KNN = "feature_knn"
LABEL_MATCH = "label_match"


@dataclass(frozen=True)
class NeighborIndex:
    """Per-anchor positive candidates; every other index (except the anchor)
    is a negative candidate."""

    n: int
    mode: str
    positives: tuple[tuple[int, ...], ...]
    metric: str = "L2"

    @property
    def size(self) -> int:
        return len(self.positives)

    def eligible_anchors(self) -> np.ndarray:
        """Anchors with at least one positive and at least one negative."""
        N = self.size
        return np.array([a for a, p in enumerate(self.positives) if 0 < len(p) < N - 1], dtype=np.int64)

    def to_dict(self, ids: Sequence | None = None) -> dict:
        d = {"n": self.n, "mode": self.mode, "metric": self.metric,
             "positives": [list(p) for p in self.positives]}
        if ids is not None:
            d["ids"] = [str(i) for i in ids]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NeighborIndex":
        return cls(d["n"], d["mode"], tuple(tuple(p) for p in d["positives"]), d.get("metric", "L2"))

    def save(self, path, ids: Sequence | None = None) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(ids), fh, indent=1)


@dataclass(frozen=True)
class Triplet:
    anchor: int
    positive: int
    negative: int


def pairwise_sq_dists(X: np.ndarray) -> np.ndarray:
    diff = X[:, None, :] - X[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def mine_neighbors(X=None, n: int = 10, mode: str = FEATURE_KNN, labels: Sequence | None = None) -> NeighborIndex:
    """Build a NeighborIndex.

    ``feature_knn``: the ``n`` rows of ``X`` closest to each anchor in L2,
    ties broken by lower index.  ``label_match``: every other sample sharing
    the anchor's label (``n`` is recorded but unused).
    """
    if mode == FEATURE_KNN:
        A = np.atleast_2d(np.asarray(getattr(X, "values", X), dtype=np.float64))
        N = A.shape[0]
    elif mode == LABEL_MATCH:
        if labels is None:
            raise ValueError("label_match mode needs labels")
        N = len(labels)
    else:
        raise ValueError(f"unknown mining mode {mode!r}")
    if N < 3:
        raise ValueError(f"need at least 3 samples to form triplets, got {N}")
    if n < 1:
        raise ValueError("n must be at least 1")

    if mode == LABEL_MATCH:
        groups: dict = {}
        for i, lab in enumerate(labels):
            groups.setdefault(lab, []).append(i)
        positives = tuple(tuple(j for j in groups[lab] if j != i) for i, lab in enumerate(labels))
        return NeighborIndex(n, mode, positives)

    if n >= N:
        raise ValueError(f"n={n} must be smaller than the number of samples ({N})")
    D = pairwise_sq_dists(A)
    np.fill_diagonal(D, np.inf)
    # stable sort keeps lower indices first among equal distances
    order = np.argsort(D, axis=1, kind="stable")[:, :n]
    return NeighborIndex(n, mode, tuple(tuple(int(j) for j in row) for row in order))


def sample_triplets(idx: NeighborIndex, count: int, seed=None) -> list[Triplet]:
    """Draw ``count`` triplets: anchor uniform over eligible anchors, positive
    uniform over its candidates, negative uniform over the rest.

    ``seed`` may be an int or a ``numpy.random.Generator`` (which is then
    advanced in place).
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    anchors = idx.eligible_anchors()
    if anchors.size == 0:
        raise ValueError("no anchor has both a positive and a negative candidate")
    N = idx.size
    out = []
    for _ in range(count):
        a = int(anchors[rng.integers(anchors.size)])
        pos = idx.positives[a]
        p = pos[rng.integers(len(pos))]
        excluded = set(pos)
        excluded.add(a)
        # rejection sampling is uniform over the complement and cheap when
        # the positive set is a small fraction of N
        if len(excluded) <= N // 2:
            while True:
                n_ = int(rng.integers(N))
                if n_ not in excluded:
                    break
        else:
            neg = [j for j in range(N) if j not in excluded]
            n_ = neg[rng.integers(len(neg))]
        out.append(Triplet(a, int(p), n_))
    return out


def triplet_arrays(triplets: Sequence[Triplet]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    t = np.array([(x.anchor, x.positive, x.negative) for x in triplets], dtype=np.int64).reshape(-1, 3)
    return t[:, 0], t[:, 1], t[:, 2]
