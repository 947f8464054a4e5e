"""Dataset scanning, manifests, label encoding and the flip/crop augmentation."""

import hashlib
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .imaging import hwc_to_chw, load_rgb, normalize_pixels

log = logging.getLogger(__name__)

IMAGE_EXTENSIONS = {".jpg", ".jpeg", ".png", ".bmp"}
INDEX_FILENAME = "index.tsv"

# generalizes the 300 -> 256 crop pair to other target sizes
DEFAULT_CROP_FRACTION = 256 / 300


class Layout(str, Enum):
    FOLDER_PER_CLASS = "folder_per_class"
    FLAT_WITH_METADATA = "flat_with_metadata"


@dataclass(frozen=True)
class Sample:
    path: str
    class_index: int
    metadata: tuple  # sorted (key, value) pairs; values are int, float or str

    def metadata_dict(self):
        return dict(self.metadata)


@dataclass
class DatasetManifest:
    """Ordered view of a labeled image dataset.

    source_image_size is the smallest shorter edge across samples, the
    limiting size for augmentation.
    """

    classes: list
    samples: list
    source_image_size: int
    unreadable_count: int = field(default=0, compare=False)
    missing_metadata_count: int = field(default=0, compare=False)

    def validate(self, check_paths=True):
        if not self.classes:
            raise ValueError("manifest has no classes")
        if len(set(self.classes)) != len(self.classes):
            raise ValueError(f"duplicate class names: {self.classes}")
        for sample in self.samples:
            if not 0 <= sample.class_index < len(self.classes):
                raise ValueError(
                    f"class index {sample.class_index} out of range for {sample.path}"
                )
            if check_paths and not Path(sample.path).is_file():
                raise FileNotFoundError(f"manifest sample missing on disk: {sample.path}")

    def to_text(self):
        lines = ["\t".join(self.classes)]
        for s in self.samples:
            fields = [s.path, str(s.class_index)]
            fields += [f"{k}={_format_value(v)}" for k, v in s.metadata]
            lines.append("\t".join(fields))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        lines = text.splitlines()
        if not lines or not lines[0].strip():
            raise ValueError("manifest text has no class header")
        classes = lines[0].split("\t")
        samples = []
        for lineno, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) < 2:
                raise ValueError(f"manifest line {lineno} malformed: {line!r}")
            metadata = []
            for item in fields[2:]:
                key, _, raw = item.partition("=")
                metadata.append((key, _parse_value(raw)))
            samples.append(Sample(fields[0], int(fields[1]), tuple(sorted(metadata))))
        manifest = cls(classes, samples, _min_shorter_edge(samples))
        manifest.validate(check_paths=False)
        return manifest

    def save(self, path):
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path):
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def digest(self):
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()


def _format_value(v):
    return repr(v) if isinstance(v, float) else str(v)


def _parse_value(raw):
    for kind in (int, float):
        try:
            return kind(raw)
        except ValueError:
            continue
    return raw


def _min_shorter_edge(samples):
    edges = [dict(s.metadata).get("shorter_edge") for s in samples]
    edges = [e for e in edges if isinstance(e, int)]
    return min(edges) if edges else 0


def _probe_image(path):
    """Return the shorter edge of an image, or None if it cannot be parsed."""
    try:
        with Image.open(path) as img:
            width, height = img.size
        return min(width, height)
    except Exception:
        return None


def scan_dataset(root_path, layout=Layout.FOLDER_PER_CLASS) -> DatasetManifest:
    """Scan a dataset tree into a manifest with lexicographic ordering.

    folder_per_class expects root/<class>/<image>; flat_with_metadata expects
    root/index.tsv with header columns path, class, altitude_degrees (extra
    columns become metadata). Unreadable image files are skipped and counted.
    """
    root = Path(root_path)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset root is not a directory: {root}")
    layout = Layout(layout)
    if layout is Layout.FOLDER_PER_CLASS:
        return _scan_folders(root)
    return _scan_flat(root)


def _scan_folders(root):
    class_dirs = sorted((d for d in root.iterdir() if d.is_dir()), key=lambda d: d.name)
    if not class_dirs:
        raise ValueError(f"no class directories under {root}")
    classes = [d.name for d in class_dirs]
    samples = []
    unreadable = 0
    for index, class_dir in enumerate(class_dirs):
        files = sorted(
            (p for p in class_dir.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS),
            key=str,
        )
        kept = 0
        for p in files:
            edge = _probe_image(p)
            if edge is None:
                unreadable += 1
                log.warning("skipping unreadable image: %s", p)
                continue
            samples.append(Sample(str(p), index, (("shorter_edge", edge),)))
            kept += 1
        if kept == 0:
            raise ValueError(f"class directory has no readable images: {class_dir}")
    samples.sort(key=lambda s: s.path)
    manifest = DatasetManifest(classes, samples, _min_shorter_edge(samples), unreadable)
    manifest.validate(check_paths=False)
    if unreadable:
        log.warning("skipped %d unreadable images during scan", unreadable)
    return manifest


def _scan_flat(root):
    index_path = root / INDEX_FILENAME
    if not index_path.is_file():
        raise FileNotFoundError(f"flat layout requires {index_path}")
    lines = index_path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError(f"empty index file: {index_path}")
    header = lines[0].split("\t")
    if header[:2] != ["path", "class"]:
        raise ValueError(f"index header must start with 'path\\tclass', got {header}")
    extra_columns = header[2:]

    rows = []
    class_names = set()
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != len(header):
            raise ValueError(f"{index_path}:{lineno}: expected {len(header)} columns")
        rows.append(fields)
        class_names.add(fields[1])
    classes = sorted(class_names)
    if not classes:
        raise ValueError(f"index file lists no samples: {index_path}")
    class_index = {name: i for i, name in enumerate(classes)}

    samples = []
    per_class = {name: 0 for name in classes}
    unreadable = 0
    for fields in rows:
        path = root / fields[0]
        edge = _probe_image(path)
        if edge is None:
            unreadable += 1
            log.warning("skipping unreadable image: %s", path)
            continue
        metadata = [("shorter_edge", edge)]
        metadata += [(k, _parse_value(v)) for k, v in zip(extra_columns, fields[2:])]
        samples.append(Sample(str(path), class_index[fields[1]], tuple(sorted(metadata))))
        per_class[fields[1]] += 1
    for name, count in per_class.items():
        if count == 0:
            raise ValueError(f"class has no readable images: {name}")
    samples.sort(key=lambda s: s.path)
    manifest = DatasetManifest(classes, samples, _min_shorter_edge(samples), unreadable)
    manifest.validate(check_paths=False)
    return manifest


def filter_manifest(manifest, predicate) -> DatasetManifest:
    """Keep exactly the samples whose metadata satisfies the predicate.

    The predicate receives the sample's metadata dict; raising KeyError
    (a referenced key is missing) excludes the sample and increments
    missing_metadata_count on the result. The class list is unchanged.
    """
    kept = []
    missing = 0
    for sample in manifest.samples:
        try:
            keep = predicate(sample.metadata_dict())
        except KeyError:
            missing += 1
            continue
        if keep:
            kept.append(sample)
    size = _min_shorter_edge(kept) or manifest.source_image_size
    return DatasetManifest(
        list(manifest.classes),
        kept,
        size,
        manifest.unreadable_count,
        missing,
    )


def altitude_between(lo, hi):
    """Predicate for filter_manifest: lo <= altitude_degrees <= hi."""
    def predicate(metadata):
        return lo <= metadata["altitude_degrees"] <= hi
    return predicate


def encode_label(class_index, label_count):
    """One-hot vector of length label_count marking class_index."""
    if not 0 <= class_index < label_count:
        raise ValueError(f"class index {class_index} out of range [0, {label_count})")
    vec = np.zeros(label_count, dtype=np.float32)
    vec[class_index] = 1.0
    return vec


@dataclass(frozen=True)
class AugmentConfig:
    """Flip/crop augmentation parameters for one target image size."""

    target_size: int
    flip_probability: float = 0.5
    crop_fraction: float = DEFAULT_CROP_FRACTION
    seed: int = 0

    def __post_init__(self):
        if self.target_size < 1:
            raise ValueError(f"target size must be >= 1, got {self.target_size}")
        if not 0.0 <= self.flip_probability <= 1.0:
            raise ValueError(f"flip probability must be in [0, 1], got {self.flip_probability}")
        if not 0.0 < self.crop_fraction <= 1.0:
            raise ValueError(f"crop fraction must be in (0, 1], got {self.crop_fraction}")

    @property
    def source_edge(self):
        """Edge length the source is resized to before the random crop."""
        return int(round(self.target_size / self.crop_fraction))


def augment_sample(image, cfg: AugmentConfig, rng, name=None):
    """Resize, square-crop, randomly crop and flip one decoded RGB raster.

    Policy: shorter edge resized to round(target/crop_fraction) (bilinear,
    aspect preserved, downscale only), center crop to square, uniform random
    crop to target_size, horizontal flip with flip_probability, then map
    pixels v -> v/127.5 - 1.

    Args:
        image: (H, W, 3) uint8 array.
        rng: numpy Generator; consumes crop-y, crop-x, then the flip draw.
        name: label for error messages (usually the file path).

    Returns:
        (3, target_size, target_size) float32 array in [-1, 1].
    """
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise ValueError(f"expected (H, W, 3) uint8 raster, got {image.shape} {image.dtype}")
    edge = cfg.source_edge
    height, width = image.shape[:2]
    shorter = min(height, width)
    if shorter < edge:
        raise ValueError(
            f"image {name or ''} is {width}x{height}, smaller than the "
            f"{edge}px source edge required for target {cfg.target_size}"
        )
    if shorter != edge:
        scale = edge / shorter
        new_w = edge if width == shorter else max(edge, int(round(width * scale)))
        new_h = edge if height == shorter else max(edge, int(round(height * scale)))
        pil = Image.fromarray(image, mode="RGB").resize((new_w, new_h), Image.BILINEAR)
        image = np.asarray(pil, dtype=np.uint8)
        height, width = image.shape[:2]
    y0 = (height - edge) // 2
    x0 = (width - edge) // 2
    image = image[y0:y0 + edge, x0:x0 + edge]

    span = edge - cfg.target_size
    oy = int(rng.integers(0, span + 1))
    ox = int(rng.integers(0, span + 1))
    image = image[oy:oy + cfg.target_size, ox:ox + cfg.target_size]
    if rng.random() < cfg.flip_probability:
        image = image[:, ::-1]
    return hwc_to_chw(normalize_pixels(image))


@dataclass
class Batch:
    images: torch.Tensor  # (N, 3, S, S) float32 in [-1, 1]
    labels: torch.Tensor  # (N, L) float32 one-hot


# spawn key for the epoch shuffle; sample positions stay below 2**32
_SHUFFLE_KEY = 2 ** 32


def _position_rng(epoch_seed, position):
    seq = np.random.SeedSequence(entropy=epoch_seed & (2 ** 64 - 1), spawn_key=(position,))
    return np.random.Generator(np.random.PCG64(seq))


class BatchStream:
    """One epoch of shuffled, augmented batches.

    Batch b always covers shuffle positions [b*batch_size, (b+1)*batch_size),
    and each position's augmentation RNG depends only on (epoch_seed,
    position), so resuming at a batch boundary or decoding in parallel
    reproduces the single-pass batch sequence exactly. Samples that fail to
    decode are dropped from their batch and counted in .skipped.
    """

    def __init__(self, manifest, cfg, batch_size, epoch_seed, start_batch=0):
        if batch_size < 1:
            raise ValueError(f"batch size must be >= 1, got {batch_size}")
        self.manifest = manifest
        self.cfg = cfg
        self.batch_size = batch_size
        self.epoch_seed = epoch_seed
        self.start_batch = start_batch
        self.skipped = 0

    def __len__(self):
        n = len(self.manifest.samples)
        return (n + self.batch_size - 1) // self.batch_size - self.start_batch

    def __iter__(self):
        self.skipped = 0
        samples = self.manifest.samples
        label_count = len(self.manifest.classes)
        order = _position_rng(self.epoch_seed, _SHUFFLE_KEY).permutation(len(samples))
        for batch_index in range(self.start_batch, (len(samples) + self.batch_size - 1) // self.batch_size):
            lo = batch_index * self.batch_size
            hi = min(lo + self.batch_size, len(samples))
            images, labels = [], []
            for position in range(lo, hi):
                sample = samples[order[position]]
                try:
                    raster = load_rgb(sample.path)
                except Exception:
                    self.skipped += 1
                    log.warning("skipping undecodable image: %s", sample.path)
                    continue
                rng = _position_rng(self.epoch_seed, position)
                images.append(augment_sample(raster, self.cfg, rng, name=sample.path))
                labels.append(encode_label(sample.class_index, label_count))
            if not images:
                continue
            yield Batch(
                torch.from_numpy(np.stack(images)),
                torch.from_numpy(np.stack(labels)),
            )


def batch_iterator(manifest, cfg, batch_size, epoch_seed, start_batch=0) -> BatchStream:
    """Seeded uniform shuffle of the manifest, delivered as normalized batches."""
    return BatchStream(manifest, cfg, batch_size, epoch_seed, start_batch)
