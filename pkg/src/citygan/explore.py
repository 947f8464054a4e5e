"""Label-space exploration: expressions, interpolation and image strips.

Labels are plain float vectors, so a trained conditional generator accepts
mixtures ("half one class, half another"), negative weights, and linear
walks between two label vectors. Nothing here renormalizes: the vector you
write is the vector the generator sees.
"""

from dataclasses import dataclass

import numpy as np
import torch

from .imaging import assemble_grid, chw_to_hwc, denormalize_pixels


def parse_expression(text):
    """Parse "a*0.5 + b*0.5 - c" into (name, weight) terms.

    Terms are joined by + or -; a bare name means weight 1 and a weight may
    itself be signed ("a*-1"). Class names cannot contain '*', '+', '-' or
    whitespace.
    """
    if not text or not text.strip():
        raise ValueError("empty label expression")
    terms = []
    i, n = 0, len(text)
    sign = 1.0
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch in "+-":
            if ch == "-":
                sign = -sign
            i += 1
            continue
        j = i
        while j < n and text[j] not in "*+-" and not text[j].isspace():
            j += 1
        name = text[i:j]
        i = j
        while i < n and text[i].isspace():
            i += 1
        weight = 1.0
        if i < n and text[i] == "*":
            i += 1
            while i < n and text[i].isspace():
                i += 1
            j = i
            if j < n and text[j] in "+-":
                j += 1
            while j < n and (text[j].isdigit() or text[j] == "."):
                j += 1
            if j < n and text[j] in "eE":
                j += 1
                if j < n and text[j] in "+-":
                    j += 1
                while j < n and text[j].isdigit():
                    j += 1
            try:
                weight = float(text[i:j])
            except ValueError:
                raise ValueError(f"malformed weight in label term near {text[i:]!r}") from None
            i = j
        terms.append((name, sign * weight))
        sign = 1.0
    if not terms:
        raise ValueError(f"label expression has no terms: {text!r}")
    return terms


def resolve_expression(text, classes):
    """Evaluate a label expression against a class list.

    Terms accumulate in (class index, weight) order, so any textual
    permutation of the same terms produces an identical vector.
    """
    classes = list(classes)
    index = {name: i for i, name in enumerate(classes)}
    resolved = []
    for name, weight in parse_expression(text):
        if name not in index:
            raise ValueError(
                f"unknown class {name!r}; expected one of {', '.join(classes)}"
            )
        resolved.append((index[name], weight))
    vec = np.zeros(len(classes), dtype=np.float32)
    for class_index, weight in sorted(resolved):
        vec[class_index] += np.float32(weight)
    return vec


def interpolate_labels(source, target, steps):
    """steps label vectors walking linearly from source to target.

    Endpoints are returned exactly (no float round trip); interior steps
    are source + (i/(steps-1)) * (target - source) in float32.
    """
    if steps < 2:
        raise ValueError(f"need at least 2 steps, got {steps}")
    source = np.asarray(source, dtype=np.float32)
    target = np.asarray(target, dtype=np.float32)
    if source.shape != target.shape:
        raise ValueError(f"label shapes differ: {source.shape} vs {target.shape}")
    out = []
    for i in range(steps):
        if i == 0:
            out.append(source.copy())
        elif i == steps - 1:
            out.append(target.copy())
        else:
            t = np.float32(i) / np.float32(steps - 1)
            out.append(source + t * (target - source))
    return out


@dataclass(frozen=True)
class InterpolationSpec:
    """A strip request: walk source -> target over steps, one row per seed."""

    source: np.ndarray
    target: np.ndarray
    steps: int = 5
    seeds: tuple = (0,)

    def __post_init__(self):
        if self.steps < 2:
            raise ValueError(f"need at least 2 steps, got {self.steps}")
        if not self.seeds:
            raise ValueError("need at least one seed")


def make_noise(seed, noise_dim, count=1):
    """(count, noise_dim) standard normal draws from a dedicated generator."""
    rng = torch.Generator().manual_seed(int(seed) & (2 ** 63 - 1))
    return torch.randn(count, noise_dim, generator=rng)


def sample_from_vector(generator, noise, label=None):
    """One eval-mode forward for a single noise row; uint8 HWC output."""
    was_training = generator.training
    generator.eval()
    if noise.dim() == 1:
        noise = noise.unsqueeze(0)
    labels = None
    if label is not None:
        vec = np.asarray(label, dtype=np.float32)
        if vec.size:
            labels = torch.as_tensor(vec).reshape(1, -1)
    with torch.no_grad():
        image = generator(noise, labels)[0].numpy()
    generator.train(was_training)
    return denormalize_pixels(chw_to_hwc(image))


def sample_single(generator, seed, label=None):
    """Seeded single image; the seed fully determines the noise row."""
    noise = make_noise(seed, generator.config.noise_dim)
    return sample_from_vector(generator, noise, label)


def _forward_cell(generator, noise, label):
    """Batch-of-one forward returning the raw (3, S, S) float output."""
    was_training = generator.training
    generator.eval()
    vec = torch.as_tensor(label).reshape(1, -1) if np.asarray(label).size else None
    with torch.no_grad():
        image = generator(noise, vec)[0].numpy()
    generator.train(was_training)
    return image


def render_strip(generator, spec: InterpolationSpec):
    """Interpolation grid: rows are seeds, columns walk source -> target.

    Every cell is generated with a batch of one, so the first and last
    columns match sample_single for the same seed and label exactly.
    """
    labels = interpolate_labels(spec.source, spec.target, spec.steps)
    cells = []
    for seed in spec.seeds:
        noise = make_noise(seed, generator.config.noise_dim)
        cells.append(np.stack([_forward_cell(generator, noise, label) for label in labels]))
    return assemble_grid(np.stack(cells))
