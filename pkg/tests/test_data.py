"""Manifest loading, score scaling, splits, and augmentation."""

import numpy as np
import pytest
from PIL import Image

from progiqa.data import (
    HIGHER_IS_BETTER,
    LOWER_IS_BETTER,
    AugmentationSpec,
    DatasetManifest,
    ImageSample,
    ScoreScaler,
    augment,
    derive_seed,
    load_image,
    load_manifest,
    scale_scores,
    split_dataset,
    write_manifest,
)
from progiqa.errors import (
    ConfigError,
    DegenerateScoreRangeError,
    InsufficientDataError,
    InvalidImageError,
)
from progiqa.metrics import PairedScores, srcc


def manifest_for(entries, polarity=HIGHER_IS_BETTER, raw_min=0.0, raw_max=100.0):
    return DatasetManifest(
        name="t", entries=tuple(entries), score_polarity=polarity,
        raw_min=raw_min, raw_max=raw_max,
    )


class TestManifest:
    def test_rejects_empty(self):
        with pytest.raises(ConfigError):
            manifest_for([])

    def test_rejects_degenerate_range(self):
        with pytest.raises(DegenerateScoreRangeError):
            manifest_for([("a", 1.0)], raw_min=5.0, raw_max=5.0)

    def test_rejects_duplicate_paths(self):
        with pytest.raises(ConfigError):
            manifest_for([("a", 1.0), ("a", 2.0)])

    def test_rejects_score_outside_range(self):
        with pytest.raises(ConfigError):
            manifest_for([("a", 150.0)])


class TestScaleScores:
    def test_min_maps_to_zero_when_higher_is_better(self):
        m = manifest_for([("a", 0.0), ("b", 100.0)])
        assert scale_scores(m)[0] == 0.0

    def test_min_maps_to_one_when_lower_is_better(self):
        m = manifest_for([("a", 0.0), ("b", 100.0)], polarity=LOWER_IS_BETTER)
        assert scale_scores(m) == [1.0, 0.0]

    def test_affine_midpoint(self):
        m = manifest_for([("a", 0.0), ("b", 50.0), ("c", 100.0)])
        assert scale_scores(m) == [0.0, 0.5, 1.0]

    def test_order_preserved_or_reversed_by_polarity(self):
        rng = np.random.default_rng(0)
        raw = rng.uniform(10, 90, size=20)
        entries = [(f"p{i}", float(v)) for i, v in enumerate(raw)]
        up = scale_scores(manifest_for(entries))
        down = scale_scores(manifest_for(entries, polarity=LOWER_IS_BETTER))
        assert srcc(PairedScores(raw, np.array(up))) == pytest.approx(1.0)
        assert srcc(PairedScores(raw, np.array(down))) == pytest.approx(-1.0)

    def test_scaler_rejects_degenerate_range(self):
        with pytest.raises(DegenerateScoreRangeError):
            ScoreScaler(2.0, 2.0)


class TestSplit:
    def test_four_to_one(self, hundred_dataset):
        train, test = split_dataset(hundred_dataset, 0.8, seed=0, crop_size=24,
                                    resize_short_side=32)
        assert (len(train), len(test)) == (80, 20)

    def test_small_rounding(self, hundred_dataset):
        small = DatasetManifest(
            name=hundred_dataset.name,
            entries=hundred_dataset.entries[:5],
            score_polarity=hundred_dataset.score_polarity,
            raw_min=hundred_dataset.raw_min,
            raw_max=hundred_dataset.raw_max,
        )
        train, test = split_dataset(small, 0.8, seed=0, crop_size=24,
                                    resize_short_side=32)
        assert (len(train), len(test)) == (4, 1)

    def test_same_seed_same_membership(self, hundred_dataset):
        a = split_dataset(hundred_dataset, 0.8, seed=3, crop_size=24, resize_short_side=32)
        b = split_dataset(hundred_dataset, 0.8, seed=3, crop_size=24, resize_short_side=32)
        assert [s.source_path for s in a[0]] == [s.source_path for s in b[0]]
        assert [s.source_path for s in a[1]] == [s.source_path for s in b[1]]

    def test_different_seeds_differ(self, hundred_dataset):
        a = split_dataset(hundred_dataset, 0.8, seed=0, crop_size=24, resize_short_side=32)
        b = split_dataset(hundred_dataset, 0.8, seed=1, crop_size=24, resize_short_side=32)
        assert {s.source_path for s in a[0]} != {s.source_path for s in b[0]}

    def test_partition_property(self, hundred_dataset):
        every = {p for p, _ in hundred_dataset.entries}
        for seed in range(5):
            train, test = split_dataset(hundred_dataset, 0.8, seed=seed,
                                        crop_size=24, resize_short_side=32)
            train_paths = {s.source_path for s in train}
            test_paths = {s.source_path for s in test}
            assert train_paths | test_paths == every
            assert train_paths & test_paths == set()

    def test_split_tags_and_scores(self, hundred_dataset):
        train, test = split_dataset(hundred_dataset, 0.8, seed=0,
                                    crop_size=24, resize_short_side=32)
        assert all(s.split == "train" for s in train)
        assert all(s.split == "test" for s in test)
        assert all(0.0 <= s.scaled_score <= 1.0 for s in train + test)
        assert all(s.dataset == hundred_dataset.name for s in train + test)

    def test_too_few_entries(self, hundred_dataset):
        one = DatasetManifest(
            name="one", entries=hundred_dataset.entries[:1],
            raw_min=hundred_dataset.raw_min, raw_max=hundred_dataset.raw_max,
        )
        with pytest.raises(InsufficientDataError):
            split_dataset(one, 0.8, seed=0, crop_size=24, resize_short_side=32)

    def test_fraction_bounds(self, hundred_dataset):
        for bad in (0.0, 1.0, -0.2, 1.3):
            with pytest.raises(ConfigError):
                split_dataset(hundred_dataset, bad, seed=0)


def make_sample(h=64, w=64, score=0.5, seed=0):
    rng = np.random.default_rng(seed)
    return ImageSample(
        image=rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8).astype(np.uint8),
        scaled_score=score,
        split="train",
        source_path=f"mem://{seed}",
    )


class TestAugment:
    def test_view_count(self):
        sample = make_sample()
        spec = AugmentationSpec(crop_size=48, num_views=10, seed=1)
        assert len(augment(sample, spec)) == 10

    def test_view_geometry_and_score_inheritance(self):
        sample = make_sample(score=0.37)
        views = augment(sample, AugmentationSpec(crop_size=48, num_views=5, seed=2))
        for v in views:
            assert v.image.shape == (48, 48, 3)
            assert v.scaled_score == 0.37
            assert v.source_path == sample.source_path
            assert v.split == sample.split

    def test_same_seed_bit_identical(self):
        sample = make_sample()
        spec = AugmentationSpec(crop_size=40, num_views=6, seed=9)
        a = augment(sample, spec)
        b = augment(sample, spec)
        for va, vb in zip(a, b):
            assert np.array_equal(va.image, vb.image)

    def test_single_deterministic_view_without_flip(self):
        sample = make_sample()
        spec = AugmentationSpec(crop_size=32, num_views=1, allow_hflip=False, seed=4)
        (view,) = augment(sample, spec)
        (view2,) = augment(sample, spec)
        assert np.array_equal(view.image, view2.image)

    def test_views_are_crops_of_the_source(self):
        sample = make_sample()
        spec = AugmentationSpec(crop_size=64, num_views=3, allow_hflip=False, seed=0)
        for v in augment(sample, spec):  # crop == full image here
            assert np.array_equal(v.image, sample.image)

    def test_too_small_image_rejected(self):
        sample = make_sample(h=30, w=30)
        with pytest.raises(InvalidImageError):
            augment(sample, AugmentationSpec(crop_size=48, num_views=2, seed=0))

    def test_invalid_spec(self):
        with pytest.raises(ConfigError):
            AugmentationSpec(crop_size=0)
        with pytest.raises(ConfigError):
            AugmentationSpec(num_views=0)


class TestLoadImage:
    def test_small_image_resized_up(self, tmp_path):
        path = tmp_path / "small.png"
        Image.fromarray(np.zeros((40, 60, 3), dtype=np.uint8)).save(path)
        arr = load_image(path, crop_size=48, resize_short_side=64)
        assert min(arr.shape[:2]) == 64
        assert arr.shape[1] / arr.shape[0] == pytest.approx(60 / 40, rel=0.05)

    def test_big_enough_image_untouched(self, tmp_path):
        path = tmp_path / "big.png"
        Image.fromarray(np.zeros((100, 80, 3), dtype=np.uint8)).save(path)
        assert load_image(path, crop_size=48).shape == (100, 80, 3)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_image(tmp_path / "nope.png", crop_size=48)


class TestManifestIO:
    def test_round_trip(self, tmp_path, blur_dataset):
        manifest, _ = blur_dataset
        csv_path = write_manifest(manifest, tmp_path / "m.csv")
        again = load_manifest(csv_path)
        assert again.name == manifest.name
        assert [e[1] for e in again.entries] == [e[1] for e in manifest.entries]
        assert again.score_polarity == manifest.score_polarity
        assert again.num_views == manifest.num_views

    def test_bad_header_rejected(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("image,mos\nx.png,1\n")
        (tmp_path / "bad.toml").write_text(
            'name = "x"\npolarity = "higher_is_better"\nraw_min = 0.0\nraw_max = 1.0\n'
        )
        with pytest.raises(ConfigError):
            load_manifest(bad)

    def test_missing_sidecar_rejected(self, tmp_path):
        csv = tmp_path / "m.csv"
        csv.write_text("path,score\nx.png,1\n")
        with pytest.raises(ConfigError):
            load_manifest(csv)

    def test_unknown_sidecar_key_rejected(self, tmp_path):
        csv = tmp_path / "m.csv"
        csv.write_text("path,score\nx.png,1\n")
        (tmp_path / "m.toml").write_text(
            'name = "x"\npolarity = "higher_is_better"\nraw_min = 0.0\n'
            "raw_max = 1.0\nmystery = 3\n"
        )
        with pytest.raises(ConfigError, match="mystery"):
            load_manifest(csv)


def test_derive_seed_is_stable_and_sensitive():
    assert derive_seed(1, 2) == derive_seed(1, 2)
    assert derive_seed(1, 2) != derive_seed(2, 1)
