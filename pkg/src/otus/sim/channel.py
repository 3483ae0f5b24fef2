"""Per-element RF simulation and delay-and-sum beamforming.

RF traces are built in baseband: every scatterer deposits a phase-rotated
impulse (linear interpolation between the two nearest samples) which is then
convolved with the Gaussian pulse envelope and remodulated onto the carrier.
Beamforming demodulates the real RF back to IQ and applies dynamic receive
focusing with phase rotation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import convolve1d, gaussian_filter1d

from ..errors import InvalidArgumentError
from .bmode import BModeImage, log_compress
from .geometry import ImageGrid, N_ELEMENTS, PITCH_MM, element_positions
from .psf import FWHM_PER_SIGMA, PsfSpec

SCAN_LINES = 96
TX_BEAM_FWHM_MM = 0.95
TX_TRUNCATION = 3.0
PW_SPAN_DEG = 9.0
CHANNEL_SET = (4, 8, 16, 24, 32, 64)
WINDOW_MARGIN_MM = 2.0
DEMOD_SIGMA_SAMPLES = 1.5


@dataclass
class ChannelFrame:
    """Raw per-element RF for a sequence of transmit events.

    ``rf`` is exposed as (elements, samples, events); ``events`` holds the
    focused-beam centres (mm) or the planewave angles (rad); ``lines`` maps
    each focused event to the receive line positions it forms.
    """

    data: np.ndarray = field(repr=False)  # (events, elements, samples)
    mode: str
    events: np.ndarray
    lines: tuple
    active: np.ndarray
    t0_us: float
    psf: PsfSpec
    grid: ImageGrid
    pitch: float = PITCH_MM
    tag: str = "das"

    def __post_init__(self):
        if self.mode not in ("focused", "planewave"):
            raise InvalidArgumentError(f"unknown acquisition mode {self.mode!r}")
        if not np.isfinite(self.data).all():
            raise InvalidArgumentError("RF data must be finite")

    @property
    def rf(self):
        return self.data.transpose(1, 2, 0)

    @property
    def n_active(self):
        return int(np.count_nonzero(self.active))

    @property
    def elements(self):
        return element_positions(self.data.shape[1], self.pitch)

    def time_axis(self):
        return self.t0_us + np.arange(self.data.shape[2]) / self.psf.fs_mhz


def scan_lines(grid, n_lines=SCAN_LINES):
    x0, x1 = grid.lateral
    return x0 + (np.arange(n_lines) + 0.5) * (x1 - x0) / n_lines


def mla_groups(grid, factor, n_lines=SCAN_LINES):
    """Transmit centres and per-event line positions for ``factor`` lines per event."""
    if n_lines % factor:
        raise InvalidArgumentError(f"{n_lines} lines do not split into groups of {factor}")
    lines = scan_lines(grid, n_lines).reshape(-1, factor)
    return lines.mean(axis=1), tuple(lines)


def planewave_angles(n, span_deg=PW_SPAN_DEG):
    if n < 1:
        raise InvalidArgumentError("need at least one planewave")
    if n == 1:
        return np.zeros(1)
    return np.deg2rad(np.linspace(-span_deg, span_deg, n))


def _window(grid, psf, n_el, pitch):
    """Recorded time window (us) covering the grid depths with a margin."""
    c = psf.c * 1e-3  # mm/us
    z_lo = max(grid.axial[0] - WINDOW_MARGIN_MM, 0.0)
    z_hi = grid.axial[1] + WINDOW_MARGIN_MM
    span = (grid.lateral[1] - grid.lateral[0]) / 2 + (n_el - 1) * pitch / 2
    t0 = z_lo * 0.9 / c
    t1 = (z_hi + np.hypot(z_hi, span)) / c
    n = int(np.ceil((t1 - t0) * psf.fs_mhz)) + 1
    return t0, n


def simulate_channel_data(phantom, psf=None, mode="focused", events=SCAN_LINES, grid=None,
                          tx_fwhm_mm=TX_BEAM_FWHM_MM, span_deg=PW_SPAN_DEG,
                          n_elements=N_ELEMENTS, pitch=PITCH_MM, noise_db=None, noise_seed=0):
    """Per-element RF for every transmit event.

    focused: ``events`` transmit beams (Gaussian, centred on their line group)
    sharing ``SCAN_LINES`` receive lines, so each event forms
    ``SCAN_LINES / events`` lines (MLA factor); planewave: ``events`` angles over
    +-``span_deg``. Receive amplitude falls off as 1/r. ``noise_db`` adds white
    Gaussian channel noise at that level relative to the RF rms.
    """
    psf = psf or PsfSpec()
    grid = grid or ImageGrid(shape=phantom.grid.shape)
    if events < 1:
        raise InvalidArgumentError("events must be >= 1")
    c = psf.c * 1e-3
    fs, fc = psf.fs_mhz, psf.fc_mhz
    t0, n_samp = _window(grid, psf, n_elements, pitch)
    pos = phantom.positions
    z, x = pos[:, 0], pos[:, 1]
    if (z <= 0).any() or (z < grid.axial[0] - WINDOW_MARGIN_MM).any() or (z > grid.axial[1] + WINDOW_MARGIN_MM).any():
        raise InvalidArgumentError("scatterer outside the unambiguous depth range of the recording")
    xe = element_positions(n_elements, pitch)
    r = np.sqrt((x[:, None] - xe[None, :]) ** 2 + z[:, None] ** 2)  # (N, elements)
    amp_rx = phantom.amplitudes[:, None] / r

    if mode == "focused":
        if SCAN_LINES % events:
            raise InvalidArgumentError(f"{events} events do not divide {SCAN_LINES} scan lines")
        mla_factor = SCAN_LINES // events
        centres, lines = mla_groups(grid, mla_factor)
        tau = (z[:, None] + r) / c
        base = _deposit_plan(tau, t0, fs, fc, n_samp, amp_rx)
        sigma_tx = tx_fwhm_mm / FWHM_PER_SIGMA
        out = np.zeros((events, n_elements, n_samp), dtype=np.complex128)
        for e, xc in enumerate(centres):
            sel = np.flatnonzero(np.abs(x - xc) <= TX_TRUNCATION * sigma_tx)
            g = np.exp(-(x[sel] - xc) ** 2 / (2 * sigma_tx ** 2))
            out[e] = _deposit(base, sel, g, n_elements, n_samp)
        geometry = centres
    elif mode == "planewave":
        angles = planewave_angles(events, span_deg)
        lines = ()
        out = np.zeros((events, n_elements, n_samp), dtype=np.complex128)
        for e, th in enumerate(angles):
            tau = ((z * np.cos(th) + x * np.sin(th))[:, None] + r) / c
            base = _deposit_plan(tau, t0, fs, fc, n_samp, amp_rx)
            out[e] = _deposit(base, None, None, n_elements, n_samp)
        geometry = angles
    else:
        raise InvalidArgumentError(f"unknown acquisition mode {mode!r}")

    # pulse envelope, then back onto the carrier
    sig = psf.pulse_sigma_us * fs
    half = int(np.ceil(4 * sig))
    kern = np.exp(-np.arange(-half, half + 1) ** 2 / (2 * sig ** 2))
    bb = convolve1d(out.real, kern, axis=-1, mode="constant") + 1j * convolve1d(out.imag, kern, axis=-1, mode="constant")
    t = t0 + np.arange(n_samp) / fs
    rf = (bb * np.exp(2j * np.pi * fc * t)).real
    if noise_db is not None:
        level = np.sqrt(np.mean(rf ** 2)) * 10.0 ** (noise_db / 20.0)
        rf = rf + level * np.random.default_rng([noise_seed, 23]).standard_normal(rf.shape)
    if mode == "focused":
        tag = f"mla-{mla_factor}" if mla_factor > 1 else "das"
    else:
        tag = f"pw-{events}"
    return ChannelFrame(rf, mode, np.asarray(geometry), lines, np.ones(n_elements, dtype=bool),
                        t0, psf, grid, pitch, tag)


def _deposit_plan(tau, t0, fs, fc, n_samp, amp):
    p = (tau - t0) * fs
    i = np.floor(p).astype(np.int64)
    if i.min() < 0 or i.max() + 1 >= n_samp:
        raise InvalidArgumentError("scatterer echo falls outside the recorded window")
    f = p - i
    w = amp * np.exp(-2j * np.pi * fc * tau)
    n_el = tau.shape[1]
    idx = i + (np.arange(n_el) * n_samp)[None, :]
    return idx, w * (1 - f), w * f


def _deposit(base, sel, g, n_el, n_samp):
    idx, w0, w1 = base
    if sel is not None:
        idx, w0, w1 = idx[sel], w0[sel] * g[:, None], w1[sel] * g[:, None]
    idx = np.concatenate([idx.ravel(), idx.ravel() + 1])
    w = np.concatenate([w0.ravel(), w1.ravel()])
    size = n_el * n_samp
    acc = np.bincount(idx, weights=w.real, minlength=size) + 1j * np.bincount(idx, weights=w.imag, minlength=size)
    return acc.reshape(n_el, n_samp)


def demodulate(frame):
    """Quadrature demodulation of the RF to complex baseband (events, elements, samples)."""
    t = frame.time_axis()
    mixed = frame.data * np.exp(-2j * np.pi * frame.psf.fc_mhz * t)
    return 2.0 * (gaussian_filter1d(mixed.real, DEMOD_SIGMA_SAMPLES, axis=-1, mode="constant")
                  + 1j * gaussian_filter1d(mixed.imag, DEMOD_SIGMA_SAMPLES, axis=-1, mode="constant"))


def _sample(iq, tau, t0, fs):
    """Linear interpolation of iq (elements, samples) at tau (..., elements)."""
    p = (tau - t0) * fs
    i = np.clip(np.floor(p).astype(np.int64), 0, iq.shape[1] - 2)
    f = np.clip(p - i, 0.0, 1.0)
    el = np.arange(iq.shape[0])
    return iq[el, i] * (1 - f) + iq[el, i + 1] * f


def beamform_iq(frame):
    """Complex DAS output.

    focused: (depths, lines) on the scan-line positions; planewave: one
    (depths, columns) image per angle, shape (angles, depths, columns).
    """
    if frame.n_active == 0:
        raise InvalidArgumentError("no active elements")
    iq = demodulate(frame)
    c = frame.psf.c * 1e-3
    fs, fc = frame.psf.fs_mhz, frame.psf.fc_mhz
    xe = frame.elements
    act = frame.active.astype(np.float64)
    zp = frame.grid.z
    if frame.mode == "focused":
        cols = []
        for e, lines in enumerate(frame.lines):
            lines = np.asarray(lines)
            r = np.sqrt((lines[:, None, None] - xe[None, None, :]) ** 2 + zp[None, :, None] ** 2)
            tau = (zp[None, :, None] + r) / c
            v = _sample(iq[e], tau, frame.t0_us, fs) * np.exp(2j * np.pi * fc * tau)
            cols.append((v * act).sum(axis=-1))  # (k, depths)
        return np.concatenate(cols, axis=0).T
    zz, xx = frame.grid.mesh()
    r = np.sqrt((xx[..., None] - xe) ** 2 + zz[..., None] ** 2)
    out = []
    for e, th in enumerate(frame.events):
        tau = ((zz * np.cos(th) + xx * np.sin(th))[..., None] + r) / c
        v = _sample(iq[e], tau, frame.t0_us, fs) * np.exp(2j * np.pi * fc * tau)
        out.append((v * act).sum(axis=-1))
    return np.stack(out)


def das_envelope(frame):
    """Envelope on the image grid before log compression."""
    bf = beamform_iq(frame)
    if frame.mode == "planewave":
        return np.abs(bf.mean(axis=0))
    lines = np.concatenate([np.asarray(l) for l in frame.lines])
    env = np.abs(bf)
    cols = frame.grid.x
    return np.stack([np.interp(cols, lines, row) for row in env])


def das_beamform(frame, dynamic_range=60.0):
    """Delay-and-sum B-mode image (boxcar apodization over active elements)."""
    env = das_envelope(frame)
    g = frame.grid
    tag = frame.tag
    if frame.n_active < frame.active.size:
        tag = f"subsampled-{frame.n_active}"
    return BModeImage(log_compress(env, dynamic_range), g.axial, g.lateral, tag, dynamic_range)


def with_active(frame, active):
    active = np.asarray(active, dtype=bool)
    if active.shape != frame.active.shape:
        raise InvalidArgumentError("active mask must cover every element")
    return replace(frame, active=active)


def active_subset(n_elements, count, pattern="center", seed=0):
    """Boolean mask of ``count`` active elements: central block, uniform stride or random."""
    if count not in CHANNEL_SET or count > n_elements:
        raise InvalidArgumentError(f"unsupported channel count {count}; expected one of {CHANNEL_SET}")
    mask = np.zeros(n_elements, dtype=bool)
    if pattern == "center":
        start = (n_elements - count) // 2
        mask[start:start + count] = True
    elif pattern == "uniform":
        mask[np.round(np.linspace(0, n_elements - 1, count)).astype(int)] = True
    elif pattern == "random":
        mask[np.random.default_rng([seed, 17]).choice(n_elements, count, replace=False)] = True
    else:
        raise InvalidArgumentError(f"unknown subsampling pattern {pattern!r}")
    return mask
