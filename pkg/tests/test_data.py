"""Dataset scanning, manifests, augmentation policy and the batch stream."""

import numpy as np
import pytest
import torch
from PIL import Image

from citygan.data import (
    AugmentConfig,
    DEFAULT_CROP_FRACTION,
    DatasetManifest,
    Layout,
    Sample,
    altitude_between,
    augment_sample,
    batch_iterator,
    encode_label,
    filter_manifest,
    scan_dataset,
)
from citygan.imaging import denormalize_pixels, load_rgb, normalize_pixels

from conftest import make_color_dataset


def _coord_image(edge):
    """Pixel (y, x) encodes its own coordinates in channels R and G."""
    img = np.empty((edge, edge, 3), dtype=np.uint8)
    img[..., 0] = (np.arange(edge) % 256)[:, None]
    img[..., 1] = (np.arange(edge) % 256)[None, :]
    img[..., 2] = 7
    return img


def _decode_offset(out):
    """Recover (oy, ox) from an un-flipped crop of a coordinate image."""
    corner = denormalize_pixels(out[:2, 0, 0])
    return int(corner[0]), int(corner[1])


# ---------------------------------------------------------------- scanning

def test_scan_folder_layout(dataset_root, manifest):
    assert manifest.classes == ["blue", "red"]
    assert len(manifest.samples) == 24
    assert manifest.source_image_size == 40
    assert manifest.unreadable_count == 0
    by_class = {idx: 0 for idx in range(2)}
    for s in manifest.samples:
        by_class[s.class_index] += 1
        assert s.metadata_dict()["shorter_edge"] == 40
    assert by_class == {0: 12, 1: 12}


def test_scan_is_deterministic(dataset_root):
    assert scan_dataset(dataset_root) == scan_dataset(dataset_root)


def test_scan_rejects_empty_class_dir(tmp_path):
    make_color_dataset(tmp_path, per_class=2)
    (tmp_path / "green").mkdir()
    with pytest.raises(ValueError, match="green"):
        scan_dataset(tmp_path)


def test_scan_skips_unreadable_files(tmp_path):
    make_color_dataset(tmp_path, per_class=2)
    (tmp_path / "red" / "broken.png").write_bytes(b"this is not an image")
    manifest = scan_dataset(tmp_path)
    assert manifest.unreadable_count == 1
    assert len(manifest.samples) == 4


def test_scan_missing_root():
    with pytest.raises(FileNotFoundError):
        scan_dataset("/nonexistent/path/xyz")


def _make_flat_root(tmp_path, rows):
    rng = np.random.default_rng(0)
    lines = ["path\tclass\taltitude_degrees"]
    for name, cls, altitude in rows:
        img = rng.integers(0, 255, (30, 30, 3), dtype=np.uint8)
        Image.fromarray(img).save(tmp_path / name)
        lines.append(f"{name}\t{cls}\t{altitude}")
    (tmp_path / "index.tsv").write_text("\n".join(lines) + "\n")
    return tmp_path


def test_scan_flat_layout(tmp_path):
    root = _make_flat_root(tmp_path, [
        ("a.png", "vienna", 12.5),
        ("b.png", "paris", 35.0),
        ("c.png", "vienna", 80.0),
    ])
    manifest = scan_dataset(root, Layout.FLAT_WITH_METADATA)
    assert manifest.classes == ["paris", "vienna"]
    assert len(manifest.samples) == 3
    meta = manifest.samples[0].metadata_dict()
    assert meta["altitude_degrees"] == 12.5
    assert meta["shorter_edge"] == 30


def test_scan_flat_requires_index(tmp_path):
    with pytest.raises(FileNotFoundError, match="index.tsv"):
        scan_dataset(tmp_path, Layout.FLAT_WITH_METADATA)


def test_scan_flat_rejects_bad_header(tmp_path):
    Image.fromarray(np.zeros((20, 20, 3), np.uint8)).save(tmp_path / "a.png")
    (tmp_path / "index.tsv").write_text("file\tlabel\na.png\tx\n")
    with pytest.raises(ValueError, match="header"):
        scan_dataset(tmp_path, Layout.FLAT_WITH_METADATA)


def test_filter_manifest_by_altitude(tmp_path):
    root = _make_flat_root(tmp_path, [
        ("a.png", "x", 0.0),
        ("b.png", "x", 40.0),
        ("c.png", "x", 41.0),
        ("d.png", "x", -3.0),
    ])
    manifest = scan_dataset(root, Layout.FLAT_WITH_METADATA)
    kept = filter_manifest(manifest, altitude_between(0, 40))
    assert [s.path.split("/")[-1] for s in kept.samples] == ["a.png", "b.png"]
    assert kept.classes == manifest.classes
    assert kept.missing_metadata_count == 0


def test_filter_manifest_counts_missing_keys(manifest):
    # folder-layout samples have no altitude metadata at all
    kept = filter_manifest(manifest, altitude_between(0, 40))
    assert kept.samples == []
    assert kept.missing_metadata_count == len(manifest.samples)


# ---------------------------------------------------------------- manifests

def test_manifest_text_round_trip(manifest):
    text = manifest.to_text()
    again = DatasetManifest.from_text(text)
    assert again == manifest
    assert again.digest() == manifest.digest()


def test_manifest_save_load(manifest, tmp_path):
    path = tmp_path / "m.tsv"
    manifest.save(path)
    assert DatasetManifest.load(path) == manifest


def test_manifest_digest_tracks_content(manifest):
    changed = DatasetManifest(list(manifest.classes), manifest.samples[:-1],
                              manifest.source_image_size)
    assert changed.digest() != manifest.digest()


def test_manifest_validate_rejects_bad_index():
    m = DatasetManifest(["a"], [Sample("x.png", 3, ())], 0)
    with pytest.raises(ValueError, match="out of range"):
        m.validate(check_paths=False)


def test_manifest_validate_checks_paths(manifest, tmp_path):
    ghost = DatasetManifest(list(manifest.classes),
                            [Sample(str(tmp_path / "gone.png"), 0, ())], 40)
    with pytest.raises(FileNotFoundError, match="gone.png"):
        ghost.validate(check_paths=True)


def test_manifest_float_metadata_round_trips_exactly():
    sample = Sample("p.png", 0, (("altitude_degrees", 0.1), ("shorter_edge", 30)))
    m = DatasetManifest(["only"], [sample], 30)
    again = DatasetManifest.from_text(m.to_text())
    assert again.samples[0].metadata_dict()["altitude_degrees"] == 0.1


# ---------------------------------------------------------------- labels

def test_encode_label_one_hot():
    for count in (1, 2, 5):
        for idx in range(count):
            vec = encode_label(idx, count)
            assert vec.dtype == np.float32
            assert vec.sum() == 1.0 and vec.max() == 1.0
            assert vec.min() == (0.0 if count > 1 else 1.0)
            assert vec[idx] == 1.0


def test_encode_label_range():
    with pytest.raises(ValueError):
        encode_label(2, 2)
    with pytest.raises(ValueError):
        encode_label(-1, 2)


# ------------------------------------------------------------- augmentation

def test_normalization_round_trip_exact():
    values = np.arange(256, dtype=np.uint8).reshape(16, 16)
    assert (denormalize_pixels(normalize_pixels(values)) == values).all()
    norm = normalize_pixels(values)
    assert norm.min() == -1.0 and norm.max() == 1.0


def test_augment_output_contract():
    cfg = AugmentConfig(target_size=16, crop_fraction=16 / 20)
    rng = np.random.default_rng(0)
    out = augment_sample(_coord_image(20), cfg, rng)
    assert out.shape == (3, 16, 16)
    assert out.dtype == np.float32
    assert out.min() >= -1.0 and out.max() <= 1.0


def test_augment_default_fraction_reproduces_source_pair():
    assert AugmentConfig(target_size=256).source_edge == 300
    assert AugmentConfig(target_size=64).source_edge == 75
    assert AugmentConfig(target_size=128).source_edge == 150


def test_augment_rejects_small_images():
    cfg = AugmentConfig(target_size=256)
    small = np.zeros((299, 299, 3), dtype=np.uint8)
    with pytest.raises(ValueError, match="tile_7.png"):
        augment_sample(small, cfg, np.random.default_rng(0), name="tile_7.png")


def test_augment_downscales_larger_sources():
    cfg = AugmentConfig(target_size=16, crop_fraction=16 / 20, flip_probability=0.0)
    big = np.full((40, 60, 3), 128, dtype=np.uint8)
    out = augment_sample(big, cfg, np.random.default_rng(0))
    assert out.shape == (3, 16, 16)


def test_augment_covers_every_crop_offset():
    """target 16 from source 20 admits exactly 5x5 crop origins."""
    cfg = AugmentConfig(target_size=16, crop_fraction=16 / 20, flip_probability=0.0)
    img = _coord_image(20)
    seen = set()
    rng = np.random.default_rng(3)
    for _ in range(600):
        seen.add(_decode_offset(augment_sample(img, cfg, rng)))
    assert seen == {(y, x) for y in range(5) for x in range(5)}


def test_augment_flip_mirrors_columns():
    cfg = AugmentConfig(target_size=16, crop_fraction=1.0, flip_probability=1.0)
    out = augment_sample(_coord_image(16), cfg, np.random.default_rng(0))
    green = denormalize_pixels(out[1])
    assert list(green[0]) == list(range(15, -1, -1))


def test_augment_is_deterministic_per_rng_state():
    cfg = AugmentConfig(target_size=16, crop_fraction=16 / 20)
    img = _coord_image(20)
    a = augment_sample(img, cfg, np.random.default_rng(123))
    b = augment_sample(img, cfg, np.random.default_rng(123))
    assert (a == b).all()


def test_grayscale_and_alpha_decode_to_rgb(tmp_path):
    gray = Image.fromarray(np.arange(256, dtype=np.uint8).reshape(16, 16), mode="L")
    gray.save(tmp_path / "gray.png")
    raster = load_rgb(tmp_path / "gray.png")
    assert raster.shape == (16, 16, 3)
    assert (raster[..., 0] == raster[..., 1]).all()
    assert (raster[..., 1] == raster[..., 2]).all()

    rgba = np.zeros((8, 8, 4), dtype=np.uint8)
    rgba[..., 0] = 200
    rgba[..., 3] = 128
    Image.fromarray(rgba, mode="RGBA").save(tmp_path / "rgba.png")
    raster = load_rgb(tmp_path / "rgba.png")
    assert raster.shape == (8, 8, 3)


# ------------------------------------------------------------- batch stream

def test_batch_count_and_shapes(manifest):
    cfg = AugmentConfig(target_size=16)
    stream = batch_iterator(manifest, cfg, batch_size=8, epoch_seed=5)
    batches = list(stream)
    assert len(stream) == 3
    assert [b.images.shape[0] for b in batches] == [8, 8, 8]
    for b in batches:
        assert b.images.shape[1:] == (3, 16, 16)
        assert b.images.dtype == torch.float32
        assert b.labels.shape == (b.images.shape[0], 2)


def test_batch_count_with_remainder(manifest):
    cfg = AugmentConfig(target_size=16)
    batches = list(batch_iterator(manifest, cfg, batch_size=7, epoch_seed=5))
    assert [b.images.shape[0] for b in batches] == [7, 7, 7, 3]


def test_unit_batches(manifest):
    cfg = AugmentConfig(target_size=16)
    batches = list(batch_iterator(manifest, cfg, batch_size=1, epoch_seed=5))
    assert len(batches) == len(manifest.samples)
    assert all(b.images.shape == (1, 3, 16, 16) for b in batches)


def test_labels_are_one_hot(manifest):
    cfg = AugmentConfig(target_size=16)
    for batch in batch_iterator(manifest, cfg, batch_size=8, epoch_seed=9):
        rows = batch.labels
        assert (rows.sum(dim=1) == 1.0).all()
        assert (rows.max(dim=1).values == 1.0).all()
        assert (rows.min(dim=1).values == 0.0).all()


def test_epoch_seed_reshuffles(manifest):
    cfg = AugmentConfig(target_size=16)
    a = next(iter(batch_iterator(manifest, cfg, 8, epoch_seed=1)))
    b = next(iter(batch_iterator(manifest, cfg, 8, epoch_seed=2)))
    assert not torch.equal(a.images, b.images)


def test_same_epoch_seed_is_reproducible(manifest):
    cfg = AugmentConfig(target_size=16)
    a = list(batch_iterator(manifest, cfg, 8, epoch_seed=7))
    b = list(batch_iterator(manifest, cfg, 8, epoch_seed=7))
    for x, y in zip(a, b):
        assert torch.equal(x.images, y.images)
        assert torch.equal(x.labels, y.labels)


def test_start_batch_resumes_exactly(manifest):
    cfg = AugmentConfig(target_size=16)
    full = list(batch_iterator(manifest, cfg, 8, epoch_seed=7))
    tail = list(batch_iterator(manifest, cfg, 8, epoch_seed=7, start_batch=1))
    assert len(tail) == len(full) - 1
    for x, y in zip(full[1:], tail):
        assert torch.equal(x.images, y.images)
        assert torch.equal(x.labels, y.labels)


def test_undecodable_sample_is_skipped(tmp_path):
    make_color_dataset(tmp_path, per_class=3)
    manifest = scan_dataset(tmp_path)
    # corrupt one file after scanning so only the stream sees the failure
    victim = manifest.samples[0].path
    with open(victim, "wb") as fh:
        fh.write(b"garbage")
    cfg = AugmentConfig(target_size=16)
    stream = batch_iterator(manifest, cfg, batch_size=6, epoch_seed=0)
    batches = list(stream)
    assert stream.skipped == 1
    assert sum(b.images.shape[0] for b in batches) == 5
