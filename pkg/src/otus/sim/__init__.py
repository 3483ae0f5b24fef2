"""Linear-scattering ultrasound simulator and dataset builder."""

from .bmode import BModeImage, load_image, log_compress, save_image
from .channel import (
    ChannelFrame,
    active_subset,
    beamform_iq,
    das_beamform,
    das_envelope,
    simulate_channel_data,
    with_active,
)
from .dataset import Dataset, EvalItem, build_unpaired_dataset, load_dataset, paired_targets, write_dataset
from .degrade import degrade
from .geometry import ImageGrid
from .phantom import Phantom, Region, make_phantom
from .psf import PsfSpec, convolve_psf
from .speckle import clean_image, speckle_image

__all__ = [
    "BModeImage", "ChannelFrame", "Dataset", "EvalItem", "ImageGrid", "Phantom", "PsfSpec", "Region",
    "active_subset", "beamform_iq", "build_unpaired_dataset", "clean_image", "convolve_psf",
    "das_beamform", "das_envelope", "degrade", "load_dataset", "load_image", "log_compress", "paired_targets",
    "make_phantom", "save_image", "simulate_channel_data", "speckle_image", "with_active",
    "write_dataset",
]
