from .networks import (
    Discriminator,
    DiscriminatorSpec,
    Generator,
    GeneratorSpec,
    build_discriminator,
    build_generator,
    load_network,
    receptive_field,
    receptive_field_size,
)
from .ssim import ssim
from .store import ParameterStore, read_manifest

__all__ = [
    "Discriminator", "DiscriminatorSpec", "Generator", "GeneratorSpec", "ParameterStore",
    "build_discriminator", "build_generator", "load_network", "read_manifest", "receptive_field",
    "receptive_field_size", "ssim",
]
