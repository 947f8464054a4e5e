"""Shared fixtures: a small synthetic dataset and a trained checkpoint."""

import numpy as np
import pytest
from PIL import Image

from citygan.data import scan_dataset
from citygan.models import NetworkConfig, Variant
from citygan.training import TrainConfig, run_training


def make_color_dataset(root, per_class=12, edge=40, seed=0):
    """Two classes of noisy-but-dominant color tiles, blue and red."""
    rng = np.random.default_rng(seed)
    for name, channel in (("blue", 2), ("red", 0)):
        class_dir = root / name
        class_dir.mkdir(parents=True)
        for i in range(per_class):
            img = rng.integers(0, 60, (edge, edge, 3), dtype=np.uint8)
            img[..., channel] = rng.integers(180, 256, (edge, edge), dtype=np.uint8)
            Image.fromarray(img).save(class_dir / f"{i:03d}.png")


@pytest.fixture(scope="session")
def dataset_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("dataset")
    make_color_dataset(root)
    return root


@pytest.fixture(scope="session")
def manifest(dataset_root):
    return scan_dataset(dataset_root)


@pytest.fixture(scope="session")
def fixture_run(tmp_path_factory, manifest):
    """A briefly trained broadcast run; returns (out_dir, final record)."""
    out = tmp_path_factory.mktemp("fixture_run")
    net = NetworkConfig(variant=Variant.BROADCAST, image_size=16,
                        label_count=2, base_feature_maps=8)
    cfg = TrainConfig(network=net, total_steps=30, batch_size=8,
                      eval_every=10, checkpoint_every=15, seed=11)
    record = run_training(cfg, manifest, out)
    return out, record


@pytest.fixture(scope="session")
def ckpt_path(fixture_run):
    return fixture_run[1].path
