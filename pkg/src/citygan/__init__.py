"""Conditional GAN toolkit for aerial city tiles.

Train plain, late-fusion or label-broadcast DCGAN variants on labeled
image folders, then explore the label space: class mixtures, negative
weights and linear interpolations, over a CLI or a small HTTP service.
"""

__version__ = "0.1.0"

from .models import (
    NetworkConfig,
    Variant,
    build_discriminator,
    build_generator,
)

__all__ = [
    "NetworkConfig",
    "Variant",
    "build_discriminator",
    "build_generator",
    "__version__",
]
