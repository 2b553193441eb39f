"""Dataset schema, directory-tree loading and label attachment.

A dataset tree is laid out as ``<root>/<food>/<slice>/<trial>/`` with one
file per modality inside each trial directory.  Slice and trial directory
names may be bare integers (``3``) or prefixed (``slice_3``, ``trial03``).
"""

from __future__ import annotations

import csv
import fnmatch
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

HARDNESS = ("hard", "medium", "soft")
JUICINESS = ("juicy", "medium", "dry")
MODALITIES = ("audio_play", "audio_cut", "image", "proprio")


class DatasetError(ValueError):
    """Raised for malformed dataset trees, manifests and label tables."""


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise DatasetError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise DatasetError("waveform must be a non-empty 1-D array")

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class ProprioRecord:
    """Push-down and grasp time series for one trial (SI units).

    ``push`` has columns (t, z, fz); ``grasp`` has columns (t, width, force).
    """

    push: np.ndarray
    grasp: np.ndarray
    push_force_threshold: float = 10.0
    grasp_force_threshold: float = 60.0

    def __post_init__(self):
        for name, series in (("push", self.push), ("grasp", self.grasp)):
            if series.ndim != 2 or series.shape[1] != 3:
                raise DatasetError(f"{name} series must have 3 columns")
            if series.shape[0] > 1 and not np.all(np.diff(series[:, 0]) > 0):
                raise DatasetError(f"{name} timestamps are not strictly increasing")


@dataclass(frozen=True)
class LabelSet:
    hardness: str
    juiciness: str
    cooked: bool | None = None

    def __post_init__(self):
        if self.hardness not in HARDNESS:
            raise DatasetError(f"illegal hardness token {self.hardness!r}")
        if self.juiciness not in JUICINESS:
            raise DatasetError(f"illegal juiciness token {self.juiciness!r}")


@dataclass(frozen=True)
class SampleKey:
    food_category: str
    slice_type: int
    trial: int

    def __str__(self):
        return f"{self.food_category}/{self.slice_type}/{self.trial}"


@dataclass
class FoodSample:
    """One playing trial.  ``image`` is an (H, W, 3) array in [0, 1];
    ``gripper_width`` is in millimeters."""

    food_category: str
    slice_type: int
    trial: int
    audio_play: Waveform | None = None
    audio_cut: Waveform | None = None
    image: np.ndarray | None = None
    proprio: ProprioRecord | None = None
    gripper_width: float | None = None
    labels: LabelSet | None = None

    def __post_init__(self):
        if not 1 <= self.slice_type <= 14:
            raise DatasetError(f"slice_type {self.slice_type} outside [1, 14]")
        if not 1 <= self.trial <= 5:
            raise DatasetError(f"trial {self.trial} outside [1, 5]")
        if all(getattr(self, m) is None for m in MODALITIES) and self.gripper_width is None:
            raise DatasetError(f"sample {self.key} has no modality")
        if self.image is not None:
            img = self.image
            if img.ndim != 3 or img.shape[2] != 3:
                raise DatasetError(f"image for {self.key} must be (H, W, 3)")
            if img.min() < 0.0 or img.max() > 1.0:
                raise DatasetError(f"image for {self.key} has values outside [0, 1]")

    @property
    def key(self) -> SampleKey:
        return SampleKey(self.food_category, self.slice_type, self.trial)


@dataclass(frozen=True)
class PatternConfig:
    """Filename globs per modality, matched inside each trial directory."""

    audio_play: str = "*play*.wav"
    audio_cut: str = "*cut*.wav"
    image: str = "*overhead*.png"
    proprio: str = "*proprio*.csv"

    def items(self):
        return [(m, getattr(self, m)) for m in MODALITIES]


@dataclass(frozen=True)
class IndexEntry:
    key: SampleKey
    paths: dict[str, tuple[str, ...]]  # modality -> paths relative to root


@dataclass
class DatasetIndex:
    root: Path
    entries: list[IndexEntry] = field(default_factory=list)
    skipped: list[tuple[str, str]] = field(default_factory=list)


_SLICE_RE = re.compile(r"^(?:slice[_-]?)?(\d+)$", re.IGNORECASE)
_TRIAL_RE = re.compile(r"^(?:trial[_-]?)?(\d+)$", re.IGNORECASE)


def _subdirs(path: Path) -> list[Path]:
    return sorted((p for p in path.iterdir() if p.is_dir()), key=lambda p: p.name)


def load_manifest(root, patterns: PatternConfig | None = None) -> DatasetIndex:
    """Walk ``root`` and resolve modality files for every trial directory."""
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} does not exist")
    patterns = patterns or PatternConfig()
    entries: list[IndexEntry] = []
    skipped: list[tuple[str, str]] = []
    for food_dir in _subdirs(root):
        for slice_dir in _subdirs(food_dir):
            m = _SLICE_RE.match(slice_dir.name)
            if m is None or not 1 <= int(m.group(1)) <= 14:
                skipped.append((slice_dir.relative_to(root).as_posix(), "unparseable slice id"))
                continue
            for trial_dir in _subdirs(slice_dir):
                rel = trial_dir.relative_to(root).as_posix()
                t = _TRIAL_RE.match(trial_dir.name)
                if t is None or not 1 <= int(t.group(1)) <= 5:
                    skipped.append((rel, "unparseable trial id"))
                    continue
                names = sorted(p.name for p in trial_dir.iterdir() if p.is_file())
                paths = {}
                for modality, glob in patterns.items():
                    hits = tuple(f"{rel}/{n}" for n in fnmatch.filter(names, glob))
                    if hits:
                        paths[modality] = hits
                key = SampleKey(food_dir.name, int(m.group(1)), int(t.group(1)))
                entries.append(IndexEntry(key, paths))
    entries.sort(key=lambda e: (e.key.food_category, e.key.slice_type, e.key.trial))
    return DatasetIndex(root, entries, skipped)


MANIFEST_COLUMNS = ("food_category", "slice_type", "trial", "modality", "relative_path")


def write_manifest(index: DatasetIndex, path) -> None:
    """Write entries as manifest rows; skipped directories go in
    ``modality=skipped`` rows with the reason in the path column's place."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_COLUMNS)
        for e in index.entries:
            if not e.paths:
                w.writerow([e.key.food_category, e.key.slice_type, e.key.trial, "", ""])
            for modality in MODALITIES:
                for p in e.paths.get(modality, ()):
                    w.writerow([e.key.food_category, e.key.slice_type, e.key.trial, modality, p])
        for p, reason in index.skipped:
            w.writerow(["", "", "", "skipped", f"{p}|{reason}"])


def read_manifest(path, root) -> DatasetIndex:
    entries: dict[SampleKey, dict[str, list[str]]] = {}
    skipped = []
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        header = next(rows, None)
        if tuple(header or ()) != MANIFEST_COLUMNS:
            raise DatasetError(f"{path}: bad manifest header {header}")
        for row in rows:
            food, slice_type, trial, modality, rel = row
            if modality == "skipped":
                p, _, reason = rel.partition("|")
                skipped.append((p, reason))
                continue
            key = SampleKey(food, int(slice_type), int(trial))
            paths = entries.setdefault(key, {})
            if modality:
                paths.setdefault(modality, []).append(rel)
    out = [IndexEntry(k, {m: tuple(v) for m, v in p.items()}) for k, p in entries.items()]
    out.sort(key=lambda e: (e.key.food_category, e.key.slice_type, e.key.trial))
    return DatasetIndex(Path(root), out, skipped)


# --- file readers -----------------------------------------------------------

def read_wav(path) -> Waveform:
    """Read a PCM WAV file as mono in [-1, 1].

    16-bit integers are scaled by 1/32767 (and clipped) so that a waveform
    quantized with :func:`write_wav` reloads bit-exactly.
    """
    from scipy.io import wavfile

    rate, data = wavfile.read(path)
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32767.0
    elif data.dtype == np.int32:
        x = data.astype(np.float64) / 2147483647.0
    elif data.dtype.kind == "f":
        x = data.astype(np.float64)
    else:
        raise DatasetError(f"{path}: unsupported WAV sample type {data.dtype}")
    if x.ndim == 2:
        x = x.mean(axis=1)
    return Waveform(np.clip(x, -1.0, 1.0), float(rate))


def write_wav(path, w: Waveform) -> None:
    from scipy.io import wavfile

    q = np.round(np.clip(w.samples, -1.0, 1.0) * 32767.0).astype(np.int16)
    wavfile.write(path, int(w.sample_rate), q)


def read_png(path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


def write_png(path, image: np.ndarray) -> None:
    from PIL import Image

    Image.fromarray(np.round(image * 255.0).astype(np.uint8), "RGB").save(path)


def _read_series(path) -> tuple[tuple[str, ...], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DatasetError(f"{path}: empty proprioceptive file")
    header = tuple(c.strip() for c in rows[0])
    return header, np.array([[float(v) for v in r] for r in rows[1:]], dtype=np.float64).reshape(-1, len(header))


def read_proprio(paths: Sequence) -> ProprioRecord:
    """Build a record from a push file (t, z, fz) and a grasp file
    (t, width, force); the two are told apart by their headers."""
    push = grasp = None
    for p in paths:
        header, data = _read_series(p)
        if header == ("t", "z", "fz"):
            push = data
        elif header == ("t", "width", "force"):
            grasp = data
        else:
            raise DatasetError(f"{p}: unrecognised proprioceptive header {header}")
    if push is None or grasp is None:
        raise DatasetError(f"proprioceptive files {list(map(str, paths))} lack a push or grasp series")
    return ProprioRecord(push, grasp)


def write_proprio(directory, record: ProprioRecord) -> list[Path]:
    directory = Path(directory)
    out = []
    for name, header, data in (
        ("proprio_push.csv", ("t", "z", "fz"), record.push),
        ("proprio_grasp.csv", ("t", "width", "force"), record.grasp),
    ):
        path = directory / name
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows([[repr(float(v)) for v in row] for row in data])
        out.append(path)
    return out


def load_samples(index: DatasetIndex) -> list[FoodSample]:
    """Read every modality file referenced by ``index``.

    ``gripper_width`` is derived from the grasp series when proprioception
    is present.
    """
    from .features import proprio_features

    samples = []
    for e in index.entries:
        p = {m: [index.root / r for r in rels] for m, rels in e.paths.items()}
        proprio = read_proprio(p["proprio"]) if "proprio" in p else None
        width = None
        if proprio is not None:
            width = proprio_features(proprio).w_g * 1000.0
        samples.append(FoodSample(
            e.key.food_category, e.key.slice_type, e.key.trial,
            audio_play=read_wav(p["audio_play"][0]) if "audio_play" in p else None,
            audio_cut=read_wav(p["audio_cut"][0]) if "audio_cut" in p else None,
            image=read_png(p["image"][0]) if "image" in p else None,
            proprio=proprio,
            gripper_width=width,
        ))
    return samples


# --- labels -----------------------------------------------------------------

LABEL_COLUMNS = ("food_category", "hardness", "juiciness", "cooked")


def _parse_bool(token: str) -> bool | None:
    t = token.strip().lower()
    if t in ("", "na", "none"):
        return None
    if t in ("true", "yes", "1"):
        return True
    if t in ("false", "no", "0"):
        return False
    raise DatasetError(f"illegal cooked token {token!r}")


def read_label_table(path) -> dict[str, LabelSet]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) [:3] != LABEL_COLUMNS[:3]:
            raise DatasetError(f"{path}: label table header must start with {LABEL_COLUMNS[:3]}")
        return {
            row["food_category"]: LabelSet(
                row["hardness"].strip(), row["juiciness"].strip(),
                _parse_bool(row.get("cooked") or ""),
            )
            for row in reader
        }


def write_label_table(path, table: dict[str, LabelSet]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LABEL_COLUMNS)
        for cat in sorted(table):
            ls = table[cat]
            w.writerow([cat, ls.hardness, ls.juiciness, "" if ls.cooked is None else str(ls.cooked).lower()])


def attach_labels(samples: Iterable[FoodSample], table: dict) -> list[FoodSample]:
    """Return copies of ``samples`` carrying their category's LabelSet.

    ``table`` values may be LabelSet instances or (hardness, juiciness[,
    cooked]) tuples.  Every sample category must be present.
    """
    from dataclasses import replace

    samples = list(samples)
    parsed = {}
    for cat, value in table.items():
        parsed[cat] = value if isinstance(value, LabelSet) else LabelSet(*value)
    missing = sorted({s.food_category for s in samples} - parsed.keys())
    if missing:
        raise DatasetError(f"label table is missing categories {missing}")
    return [replace(s, labels=parsed[s.food_category]) for s in samples]
