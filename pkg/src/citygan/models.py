"""Generator/discriminator architectures: plain, late-fusion and label-broadcast.

All three share the same convolutional geometry. The generator maps a
(noise [+ label]) vector through transposed convolutions (kernel 4, first
stage stride 1 to 4x4, then stride 2 doubling) up to the target size. The
discriminator halves spatial size with stride-2 convolutions down to 4x4,
reduces to 1x1 with one stride-1 convolution, and scores realness through
a linear head + sigmoid. The variants differ only in how the label enters:

- plain: no label anywhere.
- latefusion: label concatenated to the noise vector (generator) and to the
  flattened convolutional features just before the dense head (discriminator).
- broadcast: label concatenated to the noise vector (generator); on the
  discriminator side every label component becomes one constant per-pixel
  input plane, so an image with L classes enters as 3+L channels.
"""

import math
from dataclasses import dataclass
from enum import Enum

import torch
import torch.nn as nn


class Variant(str, Enum):
    PLAIN = "plain"
    LATE_FUSION = "latefusion"
    BROADCAST = "broadcast"


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture variant plus the sizes that fully determine layer shapes."""

    variant: Variant
    image_size: int
    label_count: int = 0
    noise_dim: int = 100
    base_feature_maps: int = 64

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        size = self.image_size
        if size < 16 or (size & (size - 1)) != 0:
            raise ValueError(f"image size must be a power of two >= 16, got {size}")
        if self.label_count < 0:
            raise ValueError(f"label count must be >= 0, got {self.label_count}")
        if self.noise_dim < 1:
            raise ValueError(f"noise dim must be >= 1, got {self.noise_dim}")
        if self.base_feature_maps < 1:
            raise ValueError(f"base feature maps must be >= 1, got {self.base_feature_maps}")

    @property
    def conditional(self):
        return self.variant is not Variant.PLAIN

    @property
    def effective_label_count(self):
        # the plain variant ignores labels entirely
        return self.label_count if self.conditional else 0

    @property
    def generator_input_dim(self):
        return self.noise_dim + self.effective_label_count

    @property
    def discriminator_input_channels(self):
        return 3 + (self.label_count if self.variant is Variant.BROADCAST else 0)

    @property
    def stride2_stages(self):
        return int(math.log2(self.image_size)) - 2


def broadcast_label_plane(images, labels):
    """Append one constant plane per label component to an image batch.

    Args:
        images: (N, 3, S, S) tensor.
        labels: (L,) or (N, L) tensor; each component c fills output
            channel 3+c with its value at every pixel.

    Returns:
        (N, 3+L, S, S) tensor; channels 0-2 are the unchanged input.
    """
    if images.dim() != 4:
        raise ValueError(f"expected (N, C, S, S) images, got shape {tuple(images.shape)}")
    n, _, h, w = images.shape
    if labels.dim() == 1:
        labels = labels.unsqueeze(0).expand(n, -1)
    if labels.dim() != 2 or labels.shape[0] != n:
        raise ValueError(
            f"label batch shape {tuple(labels.shape)} does not match image batch {n}"
        )
    if labels.shape[1] == 0:
        return images
    planes = labels.to(images.dtype)[:, :, None, None].expand(n, labels.shape[1], h, w)
    return torch.cat([images, planes], dim=1)


class Generator(nn.Module):
    """Transposed-convolution generator producing (N, 3, S, S) images in [-1, 1].

    Feature widths halve from base*2^(k-1) down to base across the k stride-2
    stages (k = log2(S) - 2); hidden stages carry batch norm + ReLU, the output
    stage is a bare transposed convolution + tanh.
    """

    def __init__(self, config: NetworkConfig):
        super().__init__()
        self.config = config
        in_dim = config.generator_input_dim
        base = config.base_feature_maps
        k = config.stride2_stages

        layers = [
            nn.ConvTranspose2d(in_dim, base * 2 ** (k - 1), 4, 1, 0, bias=False),
            nn.BatchNorm2d(base * 2 ** (k - 1)),
            nn.ReLU(True),
        ]
        for j in range(1, k):
            layers += [
                nn.ConvTranspose2d(base * 2 ** (k - j), base * 2 ** (k - j - 1), 4, 2, 1, bias=False),
                nn.BatchNorm2d(base * 2 ** (k - j - 1)),
                nn.ReLU(True),
            ]
        layers += [
            nn.ConvTranspose2d(base, 3, 4, 2, 1, bias=False),
            nn.Tanh(),
        ]
        self.stages = nn.Sequential(*layers)

    def forward(self, noise, labels=None):
        """Map (N, noise_dim) noise [and (N, L) labels] to an image batch."""
        cfg = self.config
        if noise.dim() != 2 or noise.shape[1] != cfg.noise_dim:
            raise ValueError(
                f"expected noise of shape (N, {cfg.noise_dim}), got {tuple(noise.shape)}"
            )
        x = torch.cat([noise, self._check_labels(labels, noise.shape[0], noise)], dim=1)
        return self.stages(x[:, :, None, None])

    def _check_labels(self, labels, n, like):
        cfg = self.config
        if not cfg.conditional:
            if labels is not None:
                raise ValueError("plain variant takes no labels")
            return like.new_zeros((n, 0))
        want = cfg.label_count
        if labels is None:
            if want == 0:
                return like.new_zeros((n, 0))
            raise ValueError(f"{cfg.variant.value} variant requires labels of shape (N, {want})")
        if labels.dim() != 2 or labels.shape != (n, want):
            raise ValueError(
                f"expected labels of shape ({n}, {want}), got {tuple(labels.shape)}"
            )
        return labels.to(like.dtype)


class Discriminator(nn.Module):
    """Strided-convolution discriminator scoring realness in (0, 1).

    Input channels are 3 (plain, latefusion) or 3+L (broadcast, via
    broadcast_label_plane). Hidden convolutions use leaky ReLU (slope 0.2)
    with batch norm everywhere except the input stage and the final 1x1
    reduction. The head is linear -> sigmoid; the latefusion variant first
    fuses the label through linear -> ReLU.
    """

    def __init__(self, config: NetworkConfig):
        super().__init__()
        self.config = config
        base = config.base_feature_maps
        k = config.stride2_stages
        c_final = base * 2 ** k

        layers = [
            nn.Conv2d(config.discriminator_input_channels, base, 4, 2, 1, bias=False),
            nn.LeakyReLU(0.2, inplace=True),
        ]
        for j in range(1, k):
            layers += [
                nn.Conv2d(base * 2 ** (j - 1), base * 2 ** j, 4, 2, 1, bias=False),
                nn.BatchNorm2d(base * 2 ** j),
                nn.LeakyReLU(0.2, inplace=True),
            ]
        layers += [
            nn.Conv2d(base * 2 ** (k - 1), c_final, 4, 1, 0, bias=False),
            nn.LeakyReLU(0.2, inplace=True),
        ]
        self.features = nn.Sequential(*layers)
        self.fuse = (
            nn.Linear(c_final + config.label_count, c_final)
            if config.variant is Variant.LATE_FUSION
            else None
        )
        self.classifier = nn.Linear(c_final, 1)

    def forward(self, images, labels=None):
        """Score an image batch; returns (N, 1) probabilities in (0, 1)."""
        return torch.sigmoid(self.forward_logits(images, labels))

    def forward_logits(self, images, labels=None):
        """Pre-sigmoid scores; the numerically stable path for loss terms."""
        cfg = self.config
        labels = self._check_labels(labels, images)
        if images.dim() != 4 or images.shape[1] != 3 or images.shape[2:] != (cfg.image_size,) * 2:
            raise ValueError(
                f"expected images of shape (N, 3, {cfg.image_size}, {cfg.image_size}), "
                f"got {tuple(images.shape)}"
            )
        if cfg.variant is Variant.BROADCAST:
            images = broadcast_label_plane(images, labels)
        x = self.features(images).flatten(1)
        if cfg.variant is Variant.LATE_FUSION:
            x = torch.relu(self.fuse(torch.cat([x, labels], dim=1)))
        return self.classifier(x)

    def _check_labels(self, labels, images):
        cfg = self.config
        n = images.shape[0]
        if not cfg.conditional:
            if labels is not None:
                raise ValueError("plain variant takes no labels")
            return None
        want = cfg.label_count
        if labels is None:
            if want == 0:
                return images.new_zeros((n, 0))
            raise ValueError(f"{cfg.variant.value} variant requires labels of shape (N, {want})")
        if labels.dim() == 1:
            labels = labels.unsqueeze(0).expand(n, -1)
        if labels.shape != (n, want):
            raise ValueError(
                f"expected labels of shape ({n}, {want}), got {tuple(labels.shape)}"
            )
        return labels.to(images.dtype)


def _init_weights(net, rng_seed):
    # explicit per-parameter draws from a local generator keep builds
    # bit-reproducible regardless of the global RNG state
    gen = torch.Generator().manual_seed(rng_seed)
    with torch.no_grad():
        for module in net.modules():
            if isinstance(module, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
                module.weight.copy_(
                    torch.normal(0.0, 0.02, size=module.weight.shape, generator=gen)
                )
                if module.bias is not None:
                    module.bias.zero_()
            elif isinstance(module, nn.BatchNorm2d):
                module.weight.copy_(
                    torch.normal(1.0, 0.02, size=module.weight.shape, generator=gen)
                )
                module.bias.zero_()
    return net


def build_generator(config: NetworkConfig, rng_seed: int) -> Generator:
    """Construct a generator with Normal(0, 0.02) conv kernels drawn from rng_seed."""
    return _init_weights(Generator(config), rng_seed)


def build_discriminator(config: NetworkConfig, rng_seed: int) -> Discriminator:
    """Construct a discriminator with Normal(0, 0.02) conv kernels drawn from rng_seed."""
    return _init_weights(Discriminator(config), rng_seed)


def count_parameters(net):
    return sum(p.numel() for p in net.parameters())
