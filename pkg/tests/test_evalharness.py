import json

import numpy as np
import pytest

from foodplay.embedtrain import TrainConfig
from foodplay.evalharness import (BASELINES, CLASSIFY, DEFAULT_METRICS, DEFAULT_TASKS, PUBLISHED_COOKED_REFERENCE,
                                  PUBLISHED_REFERENCE, REGRESS, HeadConfig, PipelineConfig, Task, category_folds,
                                  evaluate_row, evaluate_task, full_report, leave_one_out, make_context, make_task,
                                  predict, score, task_targets, train_head, trial_split)
from foodplay.synthgen import SynthSpec, generate_dataset

CHEAP = dict(train=TrainConfig(epochs=2, batch_size=16), head=HeadConfig(epochs=30), mining_n=3)


def test_constant_target_is_learned():
    X = np.random.default_rng(0).normal(size=(30, 4))
    task = Task("t", CLASSIFY, ("a", "b", "c"))
    y = np.full(30, 1)
    head = train_head(X, y, task, HeadConfig(epochs=20))
    assert evaluate_task(head, X, y).value == 100.0


def test_separable_blobs():
    rng = np.random.default_rng(1)

    def blobs(n):
        y = np.arange(n) % 2
        return rng.normal(size=(n, 2)) + np.where(y[:, None] == 1, [10.0, 0.0], [0.0, 0.0]), y

    X, y = blobs(200)
    Xt, yt = blobs(200)
    head = train_head(X, y, Task("blob", CLASSIFY, (0, 1)), HeadConfig(epochs=20))
    assert evaluate_task(head, Xt, yt).value >= 95.0


def test_constant_regression():
    X = np.random.default_rng(2).normal(size=(40, 3))
    y = np.full(40, 23.5)
    head = train_head(X, y, Task("w", REGRESS), HeadConfig(epochs=10))
    assert evaluate_task(head, X, y).value < 1e-2 * 23.5


def test_regression_fits_a_linear_target():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(200, 2))
    y = 20 + 5 * X[:, 0] - 3 * X[:, 1]
    head = train_head(X, y, Task("w", REGRESS), HeadConfig(epochs=60))
    assert evaluate_task(head, X, y).value < 0.1 * np.std(y)


def test_head_is_deterministic():
    rng = np.random.default_rng(4)
    X, y = rng.normal(size=(50, 3)), rng.integers(0, 3, 50)
    task = Task("t", CLASSIFY, (0, 1, 2))
    a = predict(train_head(X, y, task, HeadConfig(epochs=5)), X)
    b = predict(train_head(X, y, task, HeadConfig(epochs=5)), X)
    assert np.array_equal(a, b)


def test_head_shape_errors():
    with pytest.raises(ValueError, match="align"):
        train_head(np.zeros((5, 2)), np.zeros(4, dtype=int), Task("t", CLASSIFY, (0,)))
    with pytest.raises(ValueError, match="two hidden"):
        HeadConfig(hidden=(8,))


def test_perfect_predictions():
    c = Task("t", CLASSIFY, (0, 1, 2))
    r = Task("w", REGRESS)
    y = np.array([0, 2, 1, 1])
    assert score(y, y, c).value == 100.0
    assert score(y.astype(float), y.astype(float), r).value == 0.0


def test_uniform_random_predictor_sits_at_chance():
    y = np.arange(3000) % 3
    pred = np.random.default_rng(5).integers(0, 3, 3000)
    acc = score(pred, y, Task("t", CLASSIFY, (0, 1, 2))).value
    assert abs(acc - 100 / 3) <= 3.0
    assert 0.0 <= acc <= 100.0


def test_empty_test_set():
    head = train_head(np.zeros((3, 2)), np.array([0, 1, 0]), Task("t", CLASSIFY, (0, 1)), HeadConfig(epochs=1))
    with pytest.raises(ValueError, match="empty test set"):
        evaluate_task(head, np.zeros((0, 2)), np.zeros(0, dtype=int))


def test_tasks_and_targets(tiny_dataset):
    assert make_task("food_type", tiny_dataset).classes == ("food00", "food01", "food02")
    assert make_task("slice_width").kind == REGRESS
    assert make_task("slice_type").n_outputs == 14
    with pytest.raises(ValueError):
        make_task("sweetness")
    y, ok = task_targets(tiny_dataset, make_task("slice_width"))
    assert ok.all() and np.allclose(y, [s.gripper_width for s in tiny_dataset])


def test_trial_split(small_dataset):
    cfg = PipelineConfig()
    train, test = trial_split(small_dataset, cfg)
    assert {small_dataset[i].trial for i in train} == {1, 2, 3, 4}
    assert {small_dataset[i].trial for i in test} == {5}
    assert len(train) + len(test) == len(small_dataset)


def test_fold_structure(tiny_dataset):
    folds = category_folds(tiny_dataset)
    assert [c for c, _, _ in folds] == ["food00", "food01", "food02"]
    seen = np.concatenate([test for _, _, test in folds])
    assert sorted(seen.tolist()) == list(range(len(tiny_dataset)))
    for _, train, test in folds:
        assert not set(train) & set(test)
        assert len(train) + len(test) == len(tiny_dataset)


def test_leave_one_out_mean_is_unweighted(tiny_dataset):
    cfg = PipelineConfig(**CHEAP)
    ctx = make_context(tiny_dataset, cfg)
    res = leave_one_out(ctx, "audio_direct", [make_task("hardness")])
    assert len(res.folds) == 3
    vals = [f.values["hardness"] for f in res.folds]
    assert res.means["hardness"] == pytest.approx(sum(vals) / 3)


def test_single_category_cannot_be_left_out():
    S = generate_dataset(SynthSpec(1, 5, seed=0, image_size=16))
    with pytest.raises(ValueError, match="at least 2"):
        category_folds(S)


def test_leakage_is_asserted(tiny_dataset):
    ctx = make_context(tiny_dataset, PipelineConfig(**CHEAP))
    with pytest.raises(AssertionError, match="overlap"):
        evaluate_row("audio_direct", ctx, [0, 1, 2], [2, 3], [make_task("hardness")], 0)


def test_missing_targets_become_cell_errors(tiny_dataset):
    ctx = make_context(tiny_dataset, PipelineConfig(**CHEAP))
    out = evaluate_row("audio_direct", ctx, [0, 1], [5, 6], [make_task("slice_type")], 0)
    assert isinstance(out["slice_type"], float)
    out = evaluate_row("audio_direct", ctx, [0, 1], [5], [Task("slice_type", CLASSIFY, (99,))], 0)
    assert "error" in out["slice_type"]


def test_unknown_metric_is_a_cell_error(tiny_dataset):
    ctx = make_context(tiny_dataset, PipelineConfig(**CHEAP))
    out = evaluate_row("Q", ctx, [0, 1, 2, 3], [4], [make_task("hardness")], 0)
    assert "error" in out["hardness"]


def test_empty_task_list(tiny_dataset):
    with pytest.raises(ValueError, match="empty"):
        full_report(tiny_dataset, PipelineConfig(tasks=()))


def test_held_out_category_with_shared_hardness(small_dataset):
    # six categories, two per hardness level, so every held-out class has a
    # training class with the same hardness
    levels = [s.labels.hardness for s in small_dataset[::10]]
    assert all(levels.count(h) == 2 for h in set(levels))
    cfg = PipelineConfig(**CHEAP)
    res = leave_one_out(make_context(small_dataset, cfg), "A_play", [make_task("hardness")])
    assert len(res.folds) == 6
    assert res.means["hardness"] > 100 / 3 + 10


def test_full_config_grid_has_eight_rows_and_five_columns(tiny_dataset, tmp_path):
    cfg = PipelineConfig(train=TrainConfig(epochs=1, batch_size=16), head=HeadConfig(epochs=2), mining_n=3)
    assert cfg.metrics == DEFAULT_METRICS and cfg.baselines == BASELINES and cfg.tasks == DEFAULT_TASKS
    rep = full_report(tiny_dataset, cfg)
    assert len(rep.rows) == 8 and len(rep.tasks) == 5
    for row in rep.rows:
        assert set(rep.grid[row]) == set(DEFAULT_TASKS)
        for v in rep.grid[row].values():
            assert isinstance(v, dict) or v >= 0
    lines = rep.grid_csv().strip().split("\n")
    assert len(lines) == 9 and all(len(l.split(",")) == 6 for l in lines)
    rep.save(tmp_path)
    d = json.loads((tmp_path / "report.json").read_text())
    assert d["protocol"]["hardness"] == "leave_one_out" and d["protocol"]["food_type"] == "trial"
    assert len(d["folds"]["A_play"]) == 3
    assert (tmp_path / "scatter_A_play_embedding.csv").exists()


def test_accuracy_cells_are_percentages(tiny_dataset):
    cfg = PipelineConfig(metrics=("A_play",), baselines=("audio_direct",), tasks=("hardness", "slice_width"),
                         **CHEAP)
    rep = full_report(tiny_dataset, cfg)
    for row in rep.rows:
        assert 0.0 <= rep.grid[row]["hardness"] <= 100.0
        assert rep.grid[row]["slice_width"] >= 0.0


def test_scatter_rows(tiny_dataset):
    cfg = PipelineConfig(metrics=("A_play",), baselines=(), tasks=("food_type",), **CHEAP)
    rep = full_report(tiny_dataset, cfg)
    rows = rep.scatter["A_play_features"]
    assert len(rows) == len(tiny_dataset)
    assert all(len(r) == 5 and r[3] == s.food_category and r[4] in (0, 1) for r, s in zip(rows, tiny_dataset))


def test_config_round_trip():
    cfg = PipelineConfig(metrics=("A_play", "P"), head=HeadConfig(epochs=3), seed=9)
    assert PipelineConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
    with pytest.raises(ValueError, match="unknown"):
        PipelineConfig.from_dict({"colour": 1})


def test_published_reference_values_are_documented():
    cols = PUBLISHED_REFERENCE["columns"]
    assert len(PUBLISHED_REFERENCE["rows"]) == 8 and len(cols) == 5
    assert PUBLISHED_REFERENCE["rows"]["F"][cols.index("food_type")] == 92.0
    assert PUBLISHED_REFERENCE["rows"]["P"][cols.index("slice_width")] == 7.9
    cooked = PUBLISHED_COOKED_REFERENCE
    assert cooked["rows"]["A_play+P"][cooked["columns"].index("hardness")] == 99.7
