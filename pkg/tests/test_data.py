"""
Patches, splits, augmentation, synthetic generation and dataset trees
"""
import numpy as np
import pytest
from PIL import Image

from src.core.errors import ConfigError, DatasetError, ShapeError
from src.core.models import AugmentConfig
from src.data import (
    SPLIT_PRESETS,
    BiTemporalSample,
    augment,
    color_jitter,
    crop_array,
    crop_patches,
    draw_rescale_factor,
    hflip,
    load_dataset,
    patchify,
    random_scene,
    read_label,
    read_rgb,
    render_scene,
    rescale_crop,
    split_random,
    stack_batch,
    stitch_array,
    stitch_patches,
    synth_generate,
    vflip,
    write_dataset,
    write_mask,
    write_rgb,
)
from src.metrics import ConfusionMatrix, accumulate, report

GEOMETRY_ONLY = dict(blur_p=0.0, jitter_p=0.0)


def random_sample(rng, size=32, name="s"):
    label = (rng.random((size, size)) < 0.3).astype(np.uint8)
    pre = rng.random((size, size, 3)).astype(np.float32)
    post = rng.random((size, size, 3)).astype(np.float32)
    return BiTemporalSample(pre, post, label, name=name)


def label_tracking_sample(rng, size=32):
    """Channel 0 of both images equals the label, so geometric sync is checkable"""
    sample = random_sample(rng, size)
    sample.pre[..., 0] = sample.label
    sample.post[..., 0] = sample.label
    return sample


class TestPatches:
    """Non-overlapping crops and their inverse"""

    @pytest.mark.parametrize("size,count", [(1024, 16), (512, 4), (256, 1)])
    def test_01_crop_then_stitch(self, size, count, rng):
        sample = random_sample(rng, size, name="scene")
        patches = crop_patches(sample, 256)
        assert len(patches) == count
        assert all(p.size == (256, 256) for p in patches)
        grid = (size // 256, size // 256)
        back = stitch_patches(patches, grid)
        assert np.array_equal(back.pre, sample.pre)
        assert np.array_equal(back.post, sample.post)
        assert np.array_equal(back.label, sample.label)

    def test_02_patch_names_are_row_major(self, rng):
        names = [p.name for p in crop_patches(random_sample(rng, 64, name="img"), 32)]
        assert names == ["img_0_0", "img_0_1", "img_1_0", "img_1_1"]

    def test_03_indivisible_source(self):
        with pytest.raises(ShapeError, match="1000x1000"):
            crop_array(np.zeros((1000, 1000)), 256)

    def test_04_stitch_needs_full_grid(self):
        with pytest.raises(ShapeError):
            stitch_array([np.zeros((2, 2))] * 3, (2, 2))

    def test_05_random_split(self):
        ids = [f"p{i:03d}" for i in range(100)]
        splits = split_random(ids, (70, 10, 20), seed=3)
        assert [len(splits[name]) for name in ("train", "val", "test")] == [70, 10, 20]
        members = [set(splits[name].ids) for name in ("train", "val", "test")]
        assert not (members[0] & members[1] or members[0] & members[2] or members[1] & members[2])
        assert split_random(ids, (70, 10, 20), seed=3)["val"].ids == splits["val"].ids

    def test_06_split_needs_enough_ids(self):
        with pytest.raises(ConfigError):
            split_random(["a", "b"], (2, 1, 0), seed=0)

    def test_07_published_split_sizes(self):
        assert sum(SPLIT_PRESETS["levir-cd"]) == 637 * 16


class TestAugment:
    """Synchronized geometric and independent photometric transforms"""

    def test_01_flips_are_involutions(self, rng):
        sample = random_sample(rng)
        for flip in (hflip, vflip):
            twice = flip(flip(sample))
            assert np.array_equal(twice.pre, sample.pre) and np.array_equal(twice.label, sample.label)

    def test_02_flips_move_label_with_images(self, rng):
        config = AugmentConfig(hflip_p=1.0, vflip_p=1.0, rescale_p=0.0, **GEOMETRY_ONLY)
        out = augment(label_tracking_sample(rng), rng, config)
        assert np.array_equal(out.pre[..., 0], out.label.astype(np.float32))
        assert np.array_equal(out.post[..., 0], out.label.astype(np.float32))

    @pytest.mark.parametrize("factor", [0.8, 1.0, 1.2])
    def test_03_rescale_keeps_size_and_binary_label(self, factor, rng):
        out = rescale_crop(random_sample(rng), factor, rng)
        assert out.size == (32, 32) and out.pre.shape == (32, 32, 3)
        assert set(np.unique(out.label)) <= {0, 1}

    @pytest.mark.parametrize("factor", [0.8, 1.2])
    def test_04_rescale_moves_marker_identically(self, factor):
        pre = np.zeros((32, 32, 3), dtype=np.float32)
        pre[8:14, 10:16] = 1.0
        label = np.zeros((32, 32), dtype=np.uint8)
        label[8:14, 10:16] = 1
        sample = BiTemporalSample(pre, pre.copy(), label, name="marker")

        for seed in range(4):
            out = rescale_crop(sample, factor, np.random.default_rng(seed))
            assert np.array_equal(out.pre, out.post)
            rows, cols = np.nonzero(out.label)
            assert rows.size > 0
            image_rows, image_cols = np.nonzero(out.pre[..., 0] >= 0.5)
            assert abs(rows.mean() - image_rows.mean()) <= 0.5
            assert abs(cols.mean() - image_cols.mean()) <= 0.5
            assert abs(rows.min() - image_rows.min()) <= 1 and abs(rows.max() - image_rows.max()) <= 1
            assert abs(cols.min() - image_cols.min()) <= 1 and abs(cols.max() - image_cols.max()) <= 1

    def test_05_rescale_factor_bounds(self, rng):
        factors = [draw_rescale_factor(rng) for _ in range(1000)]
        assert 0.8 <= min(factors) and max(factors) <= 1.2

    def test_06_full_pipeline_keeps_binary_labels(self, rng):
        config = AugmentConfig(hflip_p=1.0, vflip_p=1.0, rescale_p=1.0, blur_p=1.0, jitter_p=1.0)
        for _ in range(5):
            out = augment(random_sample(rng), rng, config)
            assert out.size == (32, 32)
            assert set(np.unique(out.label)) <= {0, 1}
            assert 0.0 <= out.pre.min() and out.pre.max() <= 1.0

    def test_07_photometric_never_touches_label(self, rng):
        sample = random_sample(rng)
        config = AugmentConfig(hflip_p=0.0, vflip_p=0.0, rescale_p=0.0, blur_p=1.0, jitter_p=1.0)
        out = augment(sample, rng, config)
        assert np.array_equal(out.label, sample.label)
        assert not np.array_equal(out.pre, sample.pre)

    def test_08_disabled_returns_sample(self, rng):
        sample = random_sample(rng)
        assert augment(sample, rng, AugmentConfig(enabled=False)) is sample

    def test_09_color_jitter_stays_in_range(self, rng):
        out = color_jitter(rng.random((8, 8, 3)).astype(np.float32), rng, AugmentConfig(brightness=0.9))
        assert out.dtype == np.float32
        assert 0.0 <= out.min() and out.max() <= 1.0

    def test_10_same_generator_same_result(self):
        sample = random_sample(np.random.default_rng(0))
        first = augment(sample, np.random.default_rng([1, 2, 3]))
        second = augment(sample, np.random.default_rng([1, 2, 3]))
        assert np.array_equal(first.pre, second.pre) and np.array_equal(first.label, second.label)


class TestSynthetic:
    """Synthetic bi-temporal scenes with exact change labels"""

    def test_01_label_is_union_of_edited_shapes(self):
        rng = np.random.default_rng(11)
        scene = random_scene(rng, 64, edits=3)
        sample = render_scene(scene, rng)
        expected = np.zeros((64, 64), dtype=bool)
        for shape in [scene.shapes[i] for i in scene.removed] + scene.added:
            expected |= shape.mask(64)
        assert np.array_equal(sample.label, expected.astype(np.uint8))

    def test_02_deterministic(self):
        first, second = synth_generate(3, 32, seed=9), synth_generate(3, 32, seed=9)
        for a, b in zip(first, second):
            assert np.array_equal(a.pre, b.pre) and np.array_equal(a.label, b.label)
            assert a.name == b.name

    def test_03_streams_differ(self):
        train, val = synth_generate(1, 32, seed=9), synth_generate(1, 32, seed=9, stream=1)
        assert not np.array_equal(train[0].pre, val[0].pre)

    def test_04_no_edits_no_change(self):
        assert all(not s.label.any() for s in synth_generate(4, 32, seed=1, edits=0))

    def test_05_images_in_unit_range(self):
        for sample in synth_generate(4, 64, seed=2):
            assert sample.pre.dtype == np.float32
            assert 0.0 <= sample.pre.min() and sample.post.max() <= 1.0

    def test_06_change_is_visible(self):
        """A thresholded difference image already recovers most of the label"""
        cm = ConfusionMatrix()
        for sample in synth_generate(8, 64, seed=4):
            delta = sample.post - sample.pre
            delta -= np.median(delta, axis=(0, 1))
            predicted = (np.abs(delta).mean(axis=-1) > 0.1).astype(np.uint8)
            cm = accumulate(cm, predicted, sample.label)
        assert report(cm).f1 > 0.5

    @pytest.mark.parametrize("n,size", [(4, 50), (0, 32), (2, 0)])
    def test_07_invalid_requests(self, n, size):
        with pytest.raises(ConfigError):
            synth_generate(n, size, seed=0)


class TestDatasetTree:
    """Reading and validating A/B/label trees"""

    def test_01_splits_and_sorted_names(self, dataset_dir):
        dataset = load_dataset(dataset_dir)
        assert dataset.counts() == {"train": 4, "val": 2, "test": 2}
        assert dataset.names("train") == sorted(dataset.names("train"))
        sample = dataset.load_split("val")[0]
        assert sample.pre.shape == (32, 32, 3) and sample.label.shape == (32, 32)

    def test_02_missing_post_image(self, dataset_dir):
        (dataset_dir / "train" / "B" / "train_00001.png").unlink()
        with pytest.raises(DatasetError, match="train_00001"):
            load_dataset(dataset_dir)

    def test_03_label_with_foreign_value(self, dataset_dir):
        path = dataset_dir / "test" / "label" / "test_00000.png"
        Image.fromarray(np.full((32, 32), 128, dtype=np.uint8)).save(path)
        with pytest.raises(DatasetError, match="128"):
            load_dataset(dataset_dir)

    def test_04_size_mismatch(self, dataset_dir):
        write_rgb(dataset_dir / "val" / "B" / "val_00000.png", np.zeros((16, 16, 3)))
        with pytest.raises(DatasetError, match="val_00000"):
            load_dataset(dataset_dir)

    def test_05_missing_root_and_split(self, dataset_dir, tmp_path):
        with pytest.raises(DatasetError):
            load_dataset(tmp_path / "absent")
        with pytest.raises(DatasetError):
            load_dataset(dataset_dir).refs("holdout")

    def test_06_mask_round_trip(self, tmp_path, rng):
        mask = (rng.random((16, 24)) < 0.5).astype(np.uint8)
        write_mask(tmp_path / "mask.png", mask)
        assert set(np.unique(np.asarray(Image.open(tmp_path / "mask.png")))) <= {0, 255}
        assert np.array_equal(read_label(tmp_path / "mask.png"), mask)

    def test_07_rgb_quantization(self, tmp_path, rng):
        image = rng.random((8, 8, 3))
        write_rgb(tmp_path / "img.png", image)
        assert np.abs(read_rgb(tmp_path / "img.png") - image).max() <= 0.5 / 255 + 1e-6

    def test_08_patchify_writes_split_tree(self, tmp_path):
        write_dataset(tmp_path / "raw", {"scenes": synth_generate(2, 64, seed=6, prefix="scene")})
        written = patchify(tmp_path / "raw" / "scenes", tmp_path / "patches", 32, (5, 2, 1), seed=0)
        assert written == {"train": 5, "val": 2, "test": 1}
        dataset = load_dataset(tmp_path / "patches")
        assert dataset.counts() == written
        assert dataset.load_split("test")[0].size == (32, 32)

    def test_09_stack_batch(self, samples32):
        pre, post, labels = stack_batch(samples32, "float64")
        assert pre.shape == (4, 32, 32, 3) and pre.dtype == np.float64
        assert labels.shape == (4, 32, 32) and labels.dtype == np.int64
        with pytest.raises(ShapeError):
            stack_batch([samples32[0], synth_generate(1, 64, seed=0)[0]])
