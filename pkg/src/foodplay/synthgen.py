"""Deterministic synthetic food-interaction trials.

Each category carries latent properties (hardness level ``h``, juiciness
level ``j``, cooked flag, hue, nominal thickness).  Every sensor stream is a
fixed function of those latents plus seeded noise:

* playing audio: damped sinusoids with fundamental ``200 + 400 h`` Hz and
  decay rate ``5 + 10 h`` per second, an upper partial at a per-category
  ratio (weaker when cooked), and uniform broadband noise of amplitude
  ``0.1 j``;
* cutting audio: a decaying tone at ``150 + 250 j`` Hz over low-passed
  noise whose level and brightness grow with ``h``;
* push: force rises linearly from contact to exactly 10 N over a depth
  whose measured value is ``(3 - h) * 2`` mm plus noise;
* grasp: force reaches exactly 60 N at width ``thickness * (1 - 0.1 h)``
  plus noise;
* overhead image: a hue-tinted ellipse on a light background, minor axis
  tracking thickness, speckle proportional to ``j``, desaturated when
  cooked.

Higher ``h`` means harder and higher ``j`` juicier.

Sample ``i`` of category ``k`` draws all its noise from
``numpy.random.default_rng([seed, k, i])`` (PCG64 seeded through
SeedSequence), so datasets are reproducible on any platform and samples can
be generated independently.
"""

from __future__ import annotations

import colorsys
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.signal import lfilter

from .datamodel import (FoodSample, LabelSet, ProprioRecord, Waveform, write_label_table, write_png,
                        write_proprio, write_wav)
from .features import proprio_features

HARDNESS_BY_LEVEL = ("soft", "medium", "hard")
JUICINESS_BY_LEVEL = ("dry", "medium", "juicy")

PUSH_FORCE = 10.0     # newtons at the end of the push
GRASP_FORCE = 60.0    # newtons at the end of the grasp
CONTACT_FORCE = 0.5   # newtons, contact threshold used by feature extraction


def play_f0(h: int) -> float:
    return 200.0 + 400.0 * h


def play_decay(h: int) -> float:
    return 5.0 + 10.0 * h


@dataclass(frozen=True)
class CategoryLatents:
    name: str
    h: int
    j: int
    cooked: bool
    hue: float          # degrees
    thickness: float    # millimeters, nominal
    partial_ratio: float = 2.7

    def labels(self) -> LabelSet:
        return LabelSet(HARDNESS_BY_LEVEL[self.h], JUICINESS_BY_LEVEL[self.j], self.cooked)


@dataclass(frozen=True)
class SynthSpec:
    n_categories: int = 21
    samples_per_category: int = 10
    seed: int = 0
    sample_rate: int = 16000
    duration: float = 0.5
    image_size: int = 64
    # When True, categories sharing a hardness level get neighbouring hues,
    # so appearance similarity implies property similarity across classes.
    hue_banding: bool = True
    latents: tuple | None = None   # explicit CategoryLatents per category

    def __post_init__(self):
        if self.n_categories < 0 or self.samples_per_category < 0:
            raise ValueError("counts must be non-negative")
        if self.n_categories == 0 and self.samples_per_category > 0:
            raise ValueError("zero categories cannot hold samples")
        if self.samples_per_category > 70:
            raise ValueError("at most 14 slice types x 5 trials = 70 samples per category")
        if self.sample_rate <= 0 or self.duration <= 0 or self.image_size < 8:
            raise ValueError("sample_rate and duration must be positive, image_size >= 8")
        if self.latents is not None and len(self.latents) != self.n_categories:
            raise ValueError(f"{len(self.latents)} latents given for {self.n_categories} categories")


def category_name(k: int) -> str:
    return f"food{k:02d}"


def assign_latents(spec: SynthSpec) -> list[CategoryLatents]:
    """Latents from ``spec.latents`` or, if absent, drawn from the seed:
    hardness and juiciness levels balanced over categories and shuffled
    independently, cooked flags balanced, thickness uniform in 10-40 mm."""
    if spec.latents is not None:
        return [c if isinstance(c, CategoryLatents) else CategoryLatents(**c) for c in spec.latents]
    n = spec.n_categories
    rng = np.random.default_rng([spec.seed, 0])
    h = rng.permutation(np.arange(n) % 3)
    j = rng.permutation(np.arange(n) % 3)
    cooked = rng.permutation(np.arange(n) % 2).astype(bool)
    thickness = rng.uniform(10.0, 40.0, n)
    ratio = rng.uniform(2.3, 3.1, n)
    if spec.hue_banding:
        # each hardness level owns a 120 degree sector; its categories are
        # spread over the central 80 degrees in index order
        hue = np.empty(n)
        for level in range(3):
            members = np.flatnonzero(h == level)
            for rank, k in enumerate(members):
                hue[k] = 120.0 * level + 20.0 + 80.0 * (rank + 0.5) / len(members)
    else:
        hue = (np.arange(n) * 360.0 / max(n, 1) + rng.uniform(0, 360.0)) % 360.0
    return [CategoryLatents(category_name(k), int(h[k]), int(j[k]), bool(cooked[k]),
                            float(hue[k]), float(thickness[k]), float(ratio[k])) for k in range(n)]


def _rng(state) -> np.random.Generator:
    return state if isinstance(state, np.random.Generator) else np.random.default_rng(state)


def _quantize_audio(x: np.ndarray) -> np.ndarray:
    # clip, then snap to the 16-bit grid so a WAV round trip is lossless
    return np.round(np.clip(x, -1.0, 1.0) * 32767.0) / 32767.0


def synth_audio(h: int, j: int, rng_state=None, sample_rate: int = 16000, duration: float = 0.5,
                cooked: bool = False, partial_ratio: float = 2.7) -> Waveform:
    """Playing audio for one drop: a damped fundamental at ``200 + 400 h`` Hz
    (jittered by at most 5 Hz), an upper partial, and noise ``0.1 j``."""
    if h not in (0, 1, 2) or j not in (0, 1, 2):
        raise ValueError(f"levels must be 0, 1 or 2, got h={h}, j={j}")
    rng = _rng(rng_state)
    n = int(round(sample_rate * duration))
    t = np.arange(n) / sample_rate
    f0 = play_f0(h) + rng.uniform(-5.0, 5.0)
    env = np.exp(-play_decay(h) * t)
    phase = rng.uniform(0.0, 2 * np.pi, 2)
    partial = 0.15 if cooked else 0.35
    x = 0.7 * env * (np.sin(2 * np.pi * f0 * t + phase[0])
                     + partial * np.sin(2 * np.pi * partial_ratio * f0 * t + phase[1]))
    x += 0.1 * j * rng.uniform(-1.0, 1.0, n)
    return Waveform(_quantize_audio(x), sample_rate)


def synth_cut_audio(h: int, j: int, rng_state=None, sample_rate: int = 16000, duration: float = 0.5) -> Waveform:
    """Cutting audio: tone at ``150 + 250 j`` Hz decaying at 3/s over noise of
    amplitude ``0.1 + 0.15 h`` smoothed by a one-pole low-pass whose
    coefficient ``0.9 - 0.3 h`` makes harder food brighter."""
    rng = _rng(rng_state)
    n = int(round(sample_rate * duration))
    t = np.arange(n) / sample_rate
    tone = 0.4 * np.exp(-3.0 * t) * np.sin(2 * np.pi * (150.0 + 250.0 * j) * t + rng.uniform(0, 2 * np.pi))
    noise = rng.uniform(-1.0, 1.0, n)
    a = 0.9 - 0.3 * h
    smooth = lfilter([1.0 - a], [1.0, -a], noise)
    smooth /= max(np.max(np.abs(smooth)), 1e-12)
    return Waveform(_quantize_audio(tone + (0.1 + 0.15 * h) * smooth), sample_rate)


def synth_proprio(thickness_mm: float, h: int, rng_state=None) -> ProprioRecord:
    """Push and grasp series in SI units (seconds, meters, newtons)."""
    rng = _rng(rng_state)
    top = thickness_mm / 1000.0
    # measured depth between the 0.5 N and 10 N crossings
    dz = max((3 - h) * 2.0 + rng.normal(0.0, 0.2), 0.5) / 1000.0
    span = dz * PUSH_FORCE / (PUSH_FORCE - CONTACT_FORCE)   # top surface to 10 N
    z = np.concatenate([np.linspace(top + 0.01, top, 40, endpoint=False),
                        np.linspace(top, top - span, 121)])
    fz = np.where(z < top, PUSH_FORCE * (top - z) / span, 0.0)
    fz[-1] = PUSH_FORCE
    speed = 0.01  # m/s
    push = np.column_stack([(z[0] - z) / speed, z, fz])

    w_g = (thickness_mm * (1.0 - 0.1 * h) + rng.normal(0.0, 0.3)) / 1000.0
    w_touch = w_g + 0.05 * top + 0.0005
    w = np.concatenate([np.linspace(w_touch + 0.02, w_touch, 40, endpoint=False),
                        np.linspace(w_touch, w_g, 81)])
    f = np.where(w < w_touch, GRASP_FORCE * (w_touch - w) / (w_touch - w_g), 0.0)
    f[-1] = GRASP_FORCE
    grasp = np.column_stack([(w[0] - w) / speed, w, f])
    return ProprioRecord(push, grasp)


def synth_image(c: CategoryLatents, thickness_mm: float, slice_type: int, size: int,
                rng_state=None) -> np.ndarray:
    rng = _rng(rng_state)
    sat = 0.35 if c.cooked else 0.8
    color = np.array(colorsys.hsv_to_rgb((c.hue % 360.0) / 360.0, sat, 0.85))
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    cy, cx = size / 2 + rng.uniform(-0.05, 0.05, 2) * size
    a = size * (0.30 + 0.006 * slice_type)          # semi-major, horizontal
    b = size * (0.05 + 0.2 * thickness_mm / 40.0)    # semi-minor tracks thickness
    b = min(b, a)
    inside = ((xx - cx) / a) ** 2 + ((yy - cy) / b) ** 2 <= 1.0
    img = np.full((size, size, 3), 0.92)
    img[inside] = color
    speckle = rng.normal(0.0, 1.0, (size, size, 1)) * 0.06 * c.j
    img = np.where(inside[..., None], img + speckle, img)
    img += rng.normal(0.0, 0.01, img.shape)
    return np.round(np.clip(img, 0.0, 1.0) * 255.0) / 255.0


def slice_thickness(c: CategoryLatents, slice_type: int) -> float:
    """Slice geometry scales the nominal thickness by 0.74 (type 1) to 1.26 (type 14)."""
    return c.thickness * (0.7 + 0.04 * slice_type)


def category_slices(spec: SynthSpec, k: int) -> list[int]:
    n_slices = math.ceil(spec.samples_per_category / 5)
    rng = np.random.default_rng([spec.seed, k])
    return sorted(int(s) for s in rng.choice(np.arange(1, 15), n_slices, replace=False))


def generate_sample(spec: SynthSpec, c: CategoryLatents, k: int, i: int, slice_type: int) -> FoodSample:
    rng = np.random.default_rng([spec.seed, k, i])
    play = synth_audio(c.h, c.j, rng, spec.sample_rate, spec.duration, c.cooked, c.partial_ratio)
    cut = synth_cut_audio(c.h, c.j, rng, spec.sample_rate, spec.duration)
    thick = slice_thickness(c, slice_type)
    proprio = synth_proprio(thick, c.h, rng)
    image = synth_image(c, thick, slice_type, spec.image_size, rng)
    width_mm = proprio_features(proprio).w_g * 1000.0
    return FoodSample(c.name, slice_type, i % 5 + 1, play, cut, image, proprio, width_mm, c.labels())


def generate_dataset(spec: SynthSpec) -> list[FoodSample]:
    """``n_categories * samples_per_category`` samples ordered by category,
    slice type and trial."""
    latents = assign_latents(spec)
    out = []
    for k, c in enumerate(latents):
        slices = category_slices(spec, k)
        for i in range(spec.samples_per_category):
            out.append(generate_sample(spec, c, k, i, slices[i // 5]))
    return out


def label_table(latents: Sequence[CategoryLatents]) -> dict[str, LabelSet]:
    return {c.name: c.labels() for c in latents}


def write_dataset(samples: Sequence[FoodSample], root, labels_path=None) -> Path:
    """Write the ``<food>/slice_<n>/trial_<n>/`` tree and, optionally, the
    label table."""
    root = Path(root)
    table = {}
    for s in samples:
        d = root / s.food_category / f"slice_{s.slice_type:02d}" / f"trial_{s.trial}"
        d.mkdir(parents=True, exist_ok=True)
        write_wav(d / "play.wav", s.audio_play)
        write_wav(d / "cut.wav", s.audio_cut)
        write_png(d / "overhead.png", s.image)
        write_proprio(d, s.proprio)
        if s.labels is not None:
            table[s.food_category] = s.labels
    if labels_path is not None:
        write_label_table(labels_path, table)
    return root


@dataclass
class SynthDataset:
    spec: SynthSpec
    latents: list[CategoryLatents] = field(default_factory=list)
    samples: list[FoodSample] = field(default_factory=list)


def build(spec: SynthSpec) -> SynthDataset:
    return SynthDataset(spec, assign_latents(spec), generate_dataset(spec))
