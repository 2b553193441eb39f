import numpy as np
import pytest

from foodplay.datamodel import load_manifest, load_samples, read_label_table, attach_labels
from foodplay.features import proprio_features
from foodplay.synthgen import (HARDNESS_BY_LEVEL, JUICINESS_BY_LEVEL, SynthSpec, assign_latents, build,
                               generate_dataset, play_f0, synth_audio, synth_cut_audio, write_dataset)
from oracles import dft_peak_hz, dft_peaks_hz


def _level(s):
    return HARDNESS_BY_LEVEL.index(s.labels.hardness)


@pytest.fixture(scope="module")
def paper_sized():
    return build(SynthSpec(21, 10, seed=7, image_size=16))


def test_no_samples_per_category_gives_empty_list():
    assert generate_dataset(SynthSpec(4, 0, seed=1)) == []


def test_zero_categories_with_samples_is_an_error():
    with pytest.raises(ValueError):
        SynthSpec(0, 3)


def test_same_seed_gives_byte_identical_datasets(tmp_path):
    spec = SynthSpec(3, 5, seed=2, image_size=16)
    roots = [write_dataset(generate_dataset(spec), tmp_path / str(i)) for i in range(2)]
    files = sorted(p.relative_to(roots[0]) for p in roots[0].rglob("*") if p.is_file())
    assert files and files == sorted(p.relative_to(roots[1]) for p in roots[1].rglob("*") if p.is_file())
    for f in files:
        assert (roots[0] / f).read_bytes() == (roots[1] / f).read_bytes()


def test_different_seed_changes_the_data():
    a = generate_dataset(SynthSpec(3, 5, seed=2, image_size=16))
    b = generate_dataset(SynthSpec(3, 5, seed=3, image_size=16))
    assert not np.array_equal(a[0].audio_play.samples, b[0].audio_play.samples)


def test_play_audio_peak_tracks_hardness(paper_sized):
    S = paper_sized.samples
    assert len(S) == 210
    X = np.array([s.audio_play.samples for s in S])
    peaks = dft_peaks_hz(X, 16000)
    want = np.array([play_f0(_level(s)) for s in S])
    assert np.all(np.abs(peaks - want) <= 20.0)


def test_mean_peak_strictly_increases_with_hardness(paper_sized):
    S = paper_sized.samples
    peaks = dft_peaks_hz(np.array([s.audio_play.samples for s in S]), 16000)
    h = np.array([_level(s) for s in S])
    means = [peaks[h == level].mean() for level in range(3)]
    assert means[0] < means[1] < means[2]


def test_hard_dry_tone_peaks_near_1000_hz():
    w = synth_audio(2, 0, np.random.default_rng(0))
    assert abs(dft_peak_hz(w.samples, w.sample_rate) - 1000.0) <= 20.0


def test_audio_length_clipping_and_determinism():
    for h in range(3):
        for j in range(3):
            w = synth_audio(h, j, 5, sample_rate=8000, duration=0.25)
            assert w.samples.size == 2000
            assert np.max(np.abs(w.samples)) <= 1.0
            assert np.array_equal(w.samples, synth_audio(h, j, 5, sample_rate=8000, duration=0.25).samples)
    loud = synth_cut_audio(2, 2, 0)
    assert np.max(np.abs(loud.samples)) <= 1.0


def test_audio_rejects_bad_levels():
    with pytest.raises(ValueError):
        synth_audio(3, 0, 0)


def test_harder_categories_press_less(paper_sized):
    S = paper_sized.samples
    h = np.array([_level(s) for s in S])
    dz = np.array([proprio_features(s.proprio).delta_z for s in S])
    means = [dz[h == level].mean() for level in range(3)]
    assert means[0] > means[1] > means[2]
    # roughly (3 - h) * 2 mm
    assert np.allclose(means, [0.006, 0.004, 0.002], atol=3e-4)


def test_push_ends_at_ten_newtons(paper_sized):
    for s in paper_sized.samples[:20]:
        assert s.proprio.push[-1, 2] == 10.0


def test_gripper_width_follows_thickness(paper_sized):
    lat = {c.name: c for c in paper_sized.latents}
    for s in paper_sized.samples:
        c = lat[s.food_category]
        nominal = c.thickness * (0.7 + 0.04 * s.slice_type) * (1 - 0.1 * c.h)
        assert abs(s.gripper_width - nominal) < 1.5  # noise sd is 0.3 mm


def test_labels_follow_latents(paper_sized):
    lat = {c.name: c for c in paper_sized.latents}
    for s in paper_sized.samples:
        c = lat[s.food_category]
        assert s.labels.hardness == HARDNESS_BY_LEVEL[c.h]
        assert s.labels.juiciness == JUICINESS_BY_LEVEL[c.j]
        assert s.labels.cooked == c.cooked


def test_latents_are_balanced_and_seeded():
    lat = assign_latents(SynthSpec(21, 1, seed=7))
    assert [sum(c.h == k for c in lat) for k in range(3)] == [7, 7, 7]
    assert [sum(c.j == k for c in lat) for k in range(3)] == [7, 7, 7]
    assert sum(c.cooked for c in lat) in (10, 11)
    assert all(10 <= c.thickness <= 40 for c in lat)
    assert lat == assign_latents(SynthSpec(21, 1, seed=7))


def test_hue_bands_follow_hardness():
    for c in assign_latents(SynthSpec(12, 1, seed=3)):
        assert 120 * c.h <= c.hue < 120 * (c.h + 1)


def test_image_is_tinted_and_grows_with_thickness():
    from foodplay.synthgen import CategoryLatents, synth_image
    c = CategoryLatents("x", 0, 0, False, hue=0.0, thickness=20.0)
    thin = synth_image(c, 12.0, 5, 32, 0)
    thick = synth_image(c, 36.0, 5, 32, 0)
    red = lambda img: np.sum((img[..., 0] - img[..., 2]) > 0.3)
    assert red(thick) > red(thin) > 0


def test_sample_layout():
    S = generate_dataset(SynthSpec(2, 10, seed=4, image_size=16))
    for s in S:
        assert s.image.shape == (16, 16, 3)
        assert s.audio_play.sample_rate == 16000 and s.audio_play.samples.size == 8000
    trials = [s.trial for s in S[:10]]
    assert trials == [1, 2, 3, 4, 5] * 2
    assert S[0].slice_type < S[5].slice_type


def test_written_tree_loads_back(tmp_path, tiny_dataset):
    root = write_dataset(tiny_dataset, tmp_path / "data", tmp_path / "labels.csv")
    back = attach_labels(load_samples(load_manifest(root)), read_label_table(tmp_path / "labels.csv"))
    assert [s.key for s in back] == [s.key for s in tiny_dataset]
    for a, b in zip(back, tiny_dataset):
        assert np.array_equal(a.audio_play.samples, b.audio_play.samples)
        assert np.array_equal(a.image, b.image)
        assert a.labels == b.labels
        assert proprio_features(a.proprio) == pytest.approx(proprio_features(b.proprio))
