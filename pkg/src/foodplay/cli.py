"""Command-line entry point: ``foodplay <stage> [--config F] [--set k=v] [--out D] [--seed N]``.

Stages hand off through files under the output directory (default
``$FOODPLAY_OUT`` or ``./foodplay_out``)::

    synth/     dataset tree, labels.csv
    features/  features.csv (long format), manifest.csv
    pca/       pca_<modality>.json, scores.csv
    mine/      index.json (neighbour sets over the training trials)
    train/     model.json, loss.png
    eval/      metrics.json, metrics.csv
    report/    report.json, grid.csv, scatter_*.csv, models/, figures/
    plot/      scatter.csv, scatter.png

Every stage directory also receives the resolved ``config.json``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from . import plotting
from .datamodel import (DatasetError, PatternConfig, attach_labels, load_manifest, load_samples,
                        read_label_table, write_manifest)
from .embedtrain import EmbeddingModel, TrainConfig, embed_dataset, sample_inputs, train_embedding
from .evalharness import (PipelineConfig, encoder_spec, evaluate_task, full_report, make_task,
                          mine_for_metric, scatter_rows, task_targets, train_head, trial_split)
from .features import extract_features, pca_fit, pca_transform, read_feature_table, write_feature_table
from .synthgen import SynthSpec, build, write_dataset
from .tripletmine import NeighborIndex

log = logging.getLogger("foodplay")

STAGES = ("synth", "features", "pca", "mine", "train", "eval", "report", "plot")
OUT_ENV = "FOODPLAY_OUT"


class CliError(Exception):
    """A user-facing failure; ``code`` is the exit status."""

    def __init__(self, message: str, code: int = 1):
        super().__init__(message)
        self.code = code


@dataclass
class RunConfig:
    out: str = ""
    seed: int = 0
    dataset_root: str = ""   # empty: <out>/synth/dataset
    labels: str = ""         # empty: <out>/synth/labels.csv
    metric: str = "A_play"   # mining metric used by the mine/train/eval/plot stages
    patterns: PatternConfig = field(default_factory=PatternConfig)
    synth: dict = field(default_factory=lambda: {k: v for k, v in asdict(SynthSpec()).items()
                                                 if k not in ("seed", "latents")})
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)

    def to_dict(self) -> dict:
        d = {"out": self.out, "seed": self.seed, "dataset_root": self.dataset_root, "labels": self.labels,
             "metric": self.metric, "patterns": asdict(self.patterns), "synth": dict(self.synth),
             "pipeline": self.pipeline.to_dict()}
        return json.loads(json.dumps(d))

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise CliError(f"unknown config keys: {unknown}", 2)
        kw = {k: d[k] for k in ("out", "seed", "dataset_root", "labels", "metric") if k in d}
        try:
            if "patterns" in d:
                kw["patterns"] = PatternConfig(**d["patterns"])
            if "synth" in d:
                synth = dict(cls().synth)
                synth.update(d["synth"])
                SynthSpec(**synth)  # validate early
                kw["synth"] = synth
            if "pipeline" in d:
                kw["pipeline"] = PipelineConfig.from_dict(d["pipeline"])
        except (TypeError, ValueError) as exc:
            raise CliError(f"malformed config: {exc}", 2) from exc
        cfg = cls(**kw)
        cfg.seed = int(cfg.seed)
        return cfg

    # resolved settings ------------------------------------------------------
    def out_dir(self) -> Path:
        return Path(self.out or os.environ.get(OUT_ENV) or "foodplay_out")

    def stage_dir(self, stage: str) -> Path:
        return self.out_dir() / stage

    def dataset_path(self) -> Path:
        return Path(self.dataset_root) if self.dataset_root else self.stage_dir("synth") / "dataset"

    def labels_path(self) -> Path:
        return Path(self.labels) if self.labels else self.stage_dir("synth") / "labels.csv"

    def synth_spec(self) -> SynthSpec:
        return SynthSpec(**self.synth, seed=self.seed)

    def pipeline_config(self) -> PipelineConfig:
        p = self.pipeline
        return PipelineConfig.from_dict({**p.to_dict(), "seed": self.seed})

    def resolved(self) -> dict:
        d = self.to_dict()
        d["out"] = str(self.out_dir())
        d["dataset_root"] = str(self.dataset_path())
        d["labels"] = str(self.labels_path())
        d["pipeline"]["seed"] = self.seed
        return d


def set_dotted(d: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    cur = d
    for k in keys[:-1]:
        nxt = cur.get(k)
        if nxt is None:
            nxt = cur[k] = {}
        if not isinstance(nxt, dict):
            raise CliError(f"--set {dotted}: {k!r} is not a section", 2)
        cur = nxt
    cur[keys[-1]] = value


def load_config(path, overrides=(), out=None, seed=None) -> RunConfig:
    base = RunConfig().to_dict()
    if path is not None:
        try:
            with open(path) as fh:
                loaded = yaml.safe_load(fh) or {}
        except FileNotFoundError as exc:
            raise CliError(f"config file {path} not found", 2) from exc
        except yaml.YAMLError as exc:
            raise CliError(f"malformed config {path}: {exc}", 2) from exc
        if not isinstance(loaded, dict):
            raise CliError(f"malformed config {path}: top level must be a mapping", 2)
        _merge(base, loaded)
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise CliError(f"--set expects dotted.key=value, got {item!r}", 2)
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise CliError(f"--set {key}: cannot parse value {raw!r}", 2) from exc
        set_dotted(base, key, value)
    if out is not None:
        base["out"] = out
    if seed is not None:
        base["seed"] = seed
    return RunConfig.from_dict(base)


def _merge(dst: dict, src: dict) -> None:
    for k, v in src.items():
        if isinstance(v, dict) and isinstance(dst.get(k), dict):
            _merge(dst[k], v)
        else:
            dst[k] = v


# --- helpers -----------------------------------------------------------------

def _stage_dir(cfg: RunConfig, stage: str) -> Path:
    d = cfg.stage_dir(stage)
    d.mkdir(parents=True, exist_ok=True)
    (d / "config.json").write_text(json.dumps(cfg.resolved(), indent=1) + "\n")
    return d


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise CliError(f"missing {what}: {path} (run the upstream stage first)")
    return path


def load_dataset(cfg: RunConfig):
    try:
        index = load_manifest(cfg.dataset_path(), cfg.patterns)
        samples = load_samples(index)
        labels = cfg.labels_path()
        if labels.exists():
            samples = attach_labels(samples, read_label_table(labels))
        else:
            log.warning("no label table at %s; label tasks will be reported as errors", labels)
    except DatasetError as exc:
        raise CliError(str(exc)) from exc
    if not samples:
        raise CliError(f"no samples found under {cfg.dataset_path()}")
    return index, samples


def _features_path(cfg: RunConfig) -> Path:
    return cfg.stage_dir("features") / "features.csv"


def _load_features(cfg: RunConfig, samples):
    feats = read_feature_table(_require(_features_path(cfg), "feature table"))
    ids = [s.key for s in samples]
    try:
        return {k: v.rows(ids) for k, v in feats.items()}
    except KeyError as exc:
        raise CliError(f"feature table does not cover the dataset: {exc}") from exc


def _training_rows(cfg: RunConfig, samples) -> np.ndarray:
    train, _ = trial_split(samples, cfg.pipeline_config())
    if train.size < 3:
        raise CliError("fewer than 3 samples in the training trials")
    return train


# --- stages ---------------------------------------------------------------------

def cmd_synth(cfg: RunConfig) -> None:
    d = _stage_dir(cfg, "synth")
    ds = build(cfg.synth_spec())
    write_dataset(ds.samples, d / "dataset", d / "labels.csv")
    (d / "latents.json").write_text(json.dumps([asdict(c) for c in ds.latents], indent=1) + "\n")
    print(f"wrote {len(ds.samples)} samples in {len(ds.latents)} categories to {d / 'dataset'}")


def cmd_features(cfg: RunConfig) -> None:
    index, samples = load_dataset(cfg)
    d = _stage_dir(cfg, "features")
    p = cfg.pipeline_config()
    try:
        feats = extract_features(samples, p.mfcc, p.aggregate)
    except ValueError as exc:
        raise CliError(f"feature extraction failed: {exc}") from exc
    write_feature_table(d / "features.csv", feats)
    write_manifest(index, d / "manifest.csv")
    print(f"features for {len(samples)} samples: " + ", ".join(f"{k} ({v.values.shape[1]})" for k, v in feats.items()))


def cmd_pca(cfg: RunConfig) -> None:
    feats = read_feature_table(_require(_features_path(cfg), "feature table"))
    d = _stage_dir(cfg, "pca")
    p = cfg.pipeline_config()
    scores = {}
    for name in sorted(feats):
        if not name.startswith("A_"):
            continue
        m = pca_fit(feats[name], variance=p.pca_variance)
        m.save(d / f"pca_{name}.json")
        scores[name] = pca_transform(m, feats[name])
        print(f"{name}: {m.n_components} components, explained {float(m.explained_variance_ratio.sum()):.4f}")
    write_feature_table(d / "scores.csv", scores)


def cmd_mine(cfg: RunConfig) -> None:
    _, samples = load_dataset(cfg)
    feats = _load_features(cfg, samples)
    d = _stage_dir(cfg, "mine")
    train = _training_rows(cfg, samples)
    try:
        idx = mine_for_metric(cfg.metric, samples, feats, train, cfg.pipeline_config())
    except ValueError as exc:
        raise CliError(f"mining failed: {exc}") from exc
    idx.save(d / "index.json", [samples[i].key for i in train])
    print(f"{cfg.metric}: {idx.size} anchors, {idx.eligible_anchors().size} eligible")


def _aligned(samples, ids):
    by_key = {str(s.key): s for s in samples}
    missing = [i for i in ids if i not in by_key]
    if missing:
        raise CliError(f"index refers to samples missing from the dataset: {missing[:5]}")
    return [by_key[i] for i in ids]


def cmd_train(cfg: RunConfig) -> None:
    path = _require(cfg.stage_dir("mine") / "index.json", "neighbour index")
    raw = json.loads(path.read_text())
    idx = NeighborIndex.from_dict(raw)
    _, samples = load_dataset(cfg)
    train = _aligned(samples, raw["ids"])
    d = _stage_dir(cfg, "train")
    p = cfg.pipeline_config()
    try:
        X = sample_inputs(train, encoder_spec(p, (*train[0].image.shape[:2], 3)))
    except (ValueError, AttributeError) as exc:
        raise CliError(f"cannot build encoder inputs: {exc}") from exc
    tcfg = TrainConfig(**{**asdict(p.train), "seed": cfg.seed})
    model = train_embedding(X, idx, encoder_spec(p, X.shape[1:]), tcfg)
    model.save(d / "model.json")
    plotting.loss_curve(model.loss_history, d / "loss.png", f"triplet loss ({cfg.metric})")
    hist = model.loss_history
    print(f"trained {len(hist)} steps; final loss {hist[-1]:.5f}" if hist else "trained 0 steps")


def _load_model(cfg: RunConfig) -> EmbeddingModel:
    return EmbeddingModel.load(_require(cfg.stage_dir("train") / "model.json", "trained model"))


def cmd_eval(cfg: RunConfig) -> None:
    model = _load_model(cfg)
    _, samples = load_dataset(cfg)
    d = _stage_dir(cfg, "eval")
    p = cfg.pipeline_config()
    E = embed_dataset(model, samples).values
    train, test = trial_split(samples, p)
    results = {}
    for name in p.tasks:
        task = make_task(name, samples)
        y, ok = task_targets(samples, task)
        tr, te = train[ok[train]], test[ok[test]]
        try:
            head = train_head(E[tr], y[tr], task, p.head)
            results[name] = evaluate_task(head, E[te], y[te], task).value
        except ValueError as exc:
            results[name] = {"error": str(exc)}
    (d / "metrics.json").write_text(json.dumps({"metric": cfg.metric, "results": results}, indent=1) + "\n")
    with open(d / "metrics.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["task", "value"])
        for k, v in results.items():
            w.writerow([k, f"error: {v['error']}" if isinstance(v, dict) else f"{v:.4f}"])
    for k, v in results.items():
        print(f"{k}: {v}")


def cmd_report(cfg: RunConfig) -> None:
    _require(_features_path(cfg), "feature table")
    _, samples = load_dataset(cfg)
    feats = _load_features(cfg, samples)
    d = _stage_dir(cfg, "report")
    try:
        report = full_report(samples, cfg.pipeline_config(), feats)
    except ValueError as exc:
        raise CliError(f"report failed: {exc}") from exc
    report.save(d)
    figs = d / "figures"
    plotting.grid_heatmap(report, figs / "grid.png")
    for name, rows in report.scatter.items():
        plotting.scatter3d(rows, figs / f"scatter_{name}.png", name)
    for row, models in report.models.items():
        for k, m in enumerate(models):
            plotting.loss_curve(m.loss_history, figs / f"loss_{row.replace('|', '_').replace('+', '_plus_')}_{k}.png",
                                f"triplet loss ({row})")
    print(report.grid_csv(), end="")


def cmd_plot(cfg: RunConfig) -> None:
    model = _load_model(cfg)
    _, samples = load_dataset(cfg)
    d = _stage_dir(cfg, "plot")
    rows = scatter_rows(embed_dataset(model, samples).values, samples)
    with open(d / "scatter.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "z", "category", "cooked"])
        w.writerows([[repr(r[0]), repr(r[1]), repr(r[2]), r[3], r[4]] for r in rows])
    plotting.scatter3d(rows, d / "scatter.png", f"{cfg.metric} embedding")
    print(f"wrote {len(rows)} scatter rows to {d / 'scatter.csv'}")


COMMANDS = {"synth": cmd_synth, "features": cmd_features, "pca": cmd_pca, "mine": cmd_mine,
            "train": cmd_train, "eval": cmd_eval, "report": cmd_report, "plot": cmd_plot}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="foodplay", description=__doc__.split("\n")[0])
    ap.add_argument("stage", choices=STAGES, help="pipeline stage to run")
    ap.add_argument("--config", help="YAML or JSON run configuration")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override a setting by dotted path, e.g. pipeline.train.epochs=5")
    ap.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./foodplay_out)")
    ap.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:  # argparse already printed the problem
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.seed is not None and not 0 <= args.seed < 2 ** 64:
            raise CliError("--seed must be an unsigned 64-bit integer", 2)
        cfg = load_config(args.config, args.set, args.out, args.seed)
        COMMANDS[args.stage](cfg)
    except CliError as exc:
        print(f"foodplay: error: {exc}", file=sys.stderr)
        return exc.code
    return 0


if __name__ == "__main__":
    sys.exit(main())
