import numpy as np
import pytest
from scipy.io import wavfile

from foodplay.datamodel import (DatasetError, FoodSample, LabelSet, PatternConfig, ProprioRecord, Waveform,
                                attach_labels, load_manifest, load_samples, read_label_table,
                                read_manifest, read_png, read_proprio, read_wav, write_label_table,
                                write_manifest, write_png, write_proprio, write_wav)


def _record():
    push = np.array([[0.0, 0.11, 0.0], [1.0, 0.10, 0.5], [2.0, 0.085, 10.0]])
    grasp = np.array([[0.0, 0.03, 0.0], [1.0, 0.021, 60.0]])
    return ProprioRecord(push, grasp)


def _trial(path, with_files=True):
    path.mkdir(parents=True)
    if not with_files:
        return
    w = Waveform(np.sin(np.linspace(0, 20, 2048)) * 0.5, 8000)
    write_wav(path / "play.wav", w)
    write_wav(path / "cut.wav", w)
    write_png(path / "overhead.png", np.full((4, 4, 3), 0.5))
    write_proprio(path, _record())


def test_empty_root_gives_empty_index(tmp_path):
    idx = load_manifest(tmp_path)
    assert idx.entries == [] and idx.skipped == []


def test_missing_root_is_fatal(tmp_path):
    with pytest.raises(DatasetError, match="does not exist"):
        load_manifest(tmp_path / "nope")


def test_two_categories_resolve_all_modalities(tmp_path):
    for food in ("apple", "pear"):
        _trial(tmp_path / food / "slice_1" / "trial_1")
    idx = load_manifest(tmp_path)
    assert [str(e.key) for e in idx.entries] == ["apple/1/1", "pear/1/1"]
    for e in idx.entries:
        assert set(e.paths) == {"audio_play", "audio_cut", "image", "proprio"}
        assert len(e.paths["proprio"]) == 2  # push and grasp files


def test_non_numeric_trial_is_skipped(tmp_path):
    _trial(tmp_path / "apple" / "slice_1" / "trial_x")
    idx = load_manifest(tmp_path)
    assert idx.entries == []
    assert idx.skipped == [("apple/slice_1/trial_x", "unparseable trial id")]


def test_missing_modality_keeps_entry(tmp_path):
    d = tmp_path / "apple" / "2" / "3"
    _trial(d)
    (d / "cut.wav").unlink()
    (e,) = load_manifest(tmp_path).entries
    assert "audio_cut" not in e.paths and "audio_play" in e.paths


def test_ordering_is_by_category_slice_trial(tmp_path):
    for food, s, t in [("b", 10, 1), ("a", 2, 5), ("a", 2, 1), ("a", 10, 2)]:
        _trial(tmp_path / food / f"slice_{s}" / f"trial_{t}", with_files=False)
    keys = [(e.key.food_category, e.key.slice_type, e.key.trial) for e in load_manifest(tmp_path).entries]
    assert keys == sorted(keys)
    assert load_manifest(tmp_path).entries == load_manifest(tmp_path).entries


def test_manifest_round_trip(tmp_path):
    root = tmp_path / "data"
    _trial(root / "apple" / "slice_1" / "trial_1")
    _trial(root / "kiwi" / "slice_3" / "trial_2")
    _trial(root / "kiwi" / "slice_x" / "trial_1")
    idx = load_manifest(root)
    write_manifest(idx, tmp_path / "m.csv")
    back = read_manifest(tmp_path / "m.csv", root)
    assert back.entries == idx.entries
    assert back.skipped == idx.skipped == [("kiwi/slice_x", "unparseable slice id")]


def test_load_samples_reads_every_modality(tmp_path):
    _trial(tmp_path / "apple" / "slice_1" / "trial_1")
    (s,) = load_samples(load_manifest(tmp_path))
    assert s.audio_play.sample_rate == 8000
    assert s.image.shape == (4, 4, 3)
    assert s.gripper_width == pytest.approx(21.0)


def test_custom_patterns(tmp_path):
    d = tmp_path / "apple" / "1" / "1"
    d.mkdir(parents=True)
    write_wav(d / "drop.wav", Waveform(np.zeros(1024), 8000))
    (e,) = load_manifest(tmp_path, PatternConfig(audio_play="drop*.wav")).entries
    assert e.paths == {"audio_play": ("apple/1/1/drop.wav",)}


def test_wav_int16_round_trip_is_exact(tmp_path):
    x = np.round(np.random.default_rng(0).uniform(-1, 1, 500) * 32767) / 32767
    write_wav(tmp_path / "a.wav", Waveform(x, 16000))
    assert np.array_equal(read_wav(tmp_path / "a.wav").samples, x)


def test_wav_float_and_stereo(tmp_path):
    stereo = np.stack([np.full(100, 0.5, dtype=np.float32), np.full(100, -0.25, dtype=np.float32)], axis=1)
    wavfile.write(tmp_path / "s.wav", 8000, stereo)
    w = read_wav(tmp_path / "s.wav")
    assert w.samples.shape == (100,)
    assert np.allclose(w.samples, 0.125)


def test_png_round_trip(tmp_path):
    img = np.round(np.random.default_rng(1).uniform(0, 1, (5, 6, 3)) * 255) / 255
    write_png(tmp_path / "i.png", img)
    assert np.array_equal(read_png(tmp_path / "i.png"), img)


def test_proprio_round_trip(tmp_path):
    paths = write_proprio(tmp_path, _record())
    back = read_proprio(paths[::-1])
    assert np.array_equal(back.push, _record().push) and np.array_equal(back.grasp, _record().grasp)


def test_proprio_requires_increasing_time():
    with pytest.raises(ValueError):
        ProprioRecord(np.array([[0.0, 1, 0], [0.0, 0.9, 1]]), np.array([[0.0, 1, 0], [1.0, 0.9, 60]]))


def test_sample_identifier_ranges():
    w = Waveform(np.zeros(10), 8000)
    with pytest.raises(DatasetError):
        FoodSample("apple", 15, 1, audio_play=w)
    with pytest.raises(DatasetError):
        FoodSample("apple", 1, 6, audio_play=w)
    with pytest.raises(DatasetError, match="no modality"):
        FoodSample("apple", 1, 1)
    with pytest.raises(DatasetError):
        FoodSample("apple", 1, 1, image=np.full((2, 2, 3), 1.5))


def test_waveform_validation():
    with pytest.raises(ValueError):
        Waveform(np.zeros(0), 8000)
    with pytest.raises(ValueError):
        Waveform(np.zeros(5), 0)


# --- labels ---------------------------------------------------------------

def _samples(cats):
    w = Waveform(np.zeros(10), 8000)
    return [FoodSample(c, 1, t, audio_play=w) for c in cats for t in (1, 2)]


def test_attach_labels_total_mapping():
    cats = [f"food{k:02d}" for k in range(21)]
    table = {c: ("hard", "dry", False) for c in cats}
    out = attach_labels(_samples(cats), table)
    assert all(s.labels == LabelSet("hard", "dry", False) for s in out)


def test_attach_labels_lists_missing_categories():
    with pytest.raises(DatasetError, match=r"\['tomato'\]"):
        attach_labels(_samples(["apple", "tomato"]), {"apple": ("soft", "juicy")})


def test_illegal_label_token_is_named():
    with pytest.raises(DatasetError, match="crunchy"):
        attach_labels(_samples(["apple"]), {"apple": ("crunchy", "juicy")})


def test_label_table_round_trip(tmp_path):
    table = {"apple": LabelSet("hard", "juicy", False), "bread": LabelSet("soft", "dry", None)}
    write_label_table(tmp_path / "l.csv", table)
    assert read_label_table(tmp_path / "l.csv") == table


def test_label_table_rejects_bad_token(tmp_path):
    (tmp_path / "l.csv").write_text("food_category,hardness,juiciness,cooked\napple,crunchy,dry,\n")
    with pytest.raises(DatasetError, match="crunchy"):
        read_label_table(tmp_path / "l.csv")
