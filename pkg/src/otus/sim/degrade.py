"""Degraded renderings: channel subsampling, MLA, planewave compounding, PSF blur."""

from __future__ import annotations

import re

from ..errors import InvalidArgumentError
from .channel import (
    ChannelFrame,
    SCAN_LINES,
    active_subset,
    das_beamform,
    simulate_channel_data,
    with_active,
)
from .phantom import Phantom
from .psf import PsfSpec
from .speckle import speckle_image

SUBSAMPLE_COUNTS = (4, 8, 16, 24, 32)
MLA_FACTORS = (1, 2, 3, 4, 6)
PLANEWAVE_COUNTS = (3, 7, 11, 31)
BLUR_FACTOR = 2.0
ACQ_NOISE_DB = -10.0


def parse_kind(kind, factor=None):
    """'mla-4' -> ('mla', 4); bare kinds take ``factor``."""
    m = re.fullmatch(r"(subsample|mla|planewave|pw|blur-psf)(?:-(\d+))?", kind)
    if not m:
        raise InvalidArgumentError(f"unknown degradation kind {kind!r}")
    name = "planewave" if m.group(1) == "pw" else m.group(1)
    if m.group(2) is not None:
        factor = int(m.group(2))
    return name, factor


def degrade(source, kind, factor=None, seed=0, psf=None, noise_db=ACQ_NOISE_DB, pattern="center"):
    """Degraded B-mode image of ``source``.

    subsample needs a ChannelFrame (or a Phantom, which is first acquired with
    96 focused events); mla and planewave acquire the Phantom with the matching
    transmit sequence; blur-psf renders speckle through a widened PSF.
    """
    name, factor = parse_kind(kind, factor)
    psf = psf or PsfSpec()
    if name == "subsample":
        if factor not in SUBSAMPLE_COUNTS:
            raise InvalidArgumentError(f"unsupported channel count {factor}; expected one of {SUBSAMPLE_COUNTS}")
        if isinstance(source, Phantom):
            source = simulate_channel_data(source, psf, noise_db=noise_db, noise_seed=seed)
        if not isinstance(source, ChannelFrame):
            raise InvalidArgumentError("subsampling needs channel data")
        mask = active_subset(source.active.size, factor, pattern, seed)
        return das_beamform(with_active(source, mask))
    if not isinstance(source, Phantom):
        raise InvalidArgumentError(f"{name} degradation renders from a phantom")
    if name == "mla":
        if factor not in MLA_FACTORS:
            raise InvalidArgumentError(f"unsupported MLA factor {factor}; expected one of {MLA_FACTORS}")
        frame = simulate_channel_data(source, psf, "focused", SCAN_LINES // factor,
                                      noise_db=noise_db, noise_seed=seed)
        return das_beamform(frame)
    if name == "planewave":
        if factor not in PLANEWAVE_COUNTS:
            raise InvalidArgumentError(f"unsupported planewave count {factor}; expected one of {PLANEWAVE_COUNTS}")
        frame = simulate_channel_data(source, psf, "planewave", factor, noise_db=noise_db, noise_seed=seed)
        return das_beamform(frame)
    blur = factor if factor is not None else BLUR_FACTOR
    if blur <= 1:
        raise InvalidArgumentError("blur factor must exceed 1")
    return speckle_image(source, psf.widened(blur), provenance="blurred")
