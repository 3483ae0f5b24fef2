"""Unpaired training sets and the paired evaluation set, plus their directory format.

Domain Y holds degraded renderings, domain X clean or target renderings; the
two are drawn from disjoint phantom seed ranges. Directory layout::

    manifest.txt      key = value header, then "[files]" rows
                      "<domain> <stem> <phantom seed> <provenance>"
    Y/y_00000.tnsr + .meta
    X/x_00000.tnsr + .meta
    eval/e_00000_<label>.tnsr + .meta, e_00000_target.*, e_00000.mask
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial

from ..errors import InvalidArgumentError
from ..metrics import read_mask, write_mask
from .bmode import load_image, save_image
from .channel import active_subset, das_beamform, simulate_channel_data, with_active
from .degrade import ACQ_NOISE_DB, MLA_FACTORS, PLANEWAVE_COUNTS, SUBSAMPLE_COUNTS, degrade
from .geometry import ImageGrid
from .phantom import make_phantom
from .psf import PsfSpec
from .speckle import clean_image, speckle_image

TASKS = ("despeckle", "deconv", "pw-enhance", "mla", "missing-channel")
SEED_BLOCK = 100_000
N_EVAL = 20
MLA_TRAIN_FACTORS = (2, 3, 4, 6)
PW_TRAIN_COUNTS = (3, 7, 11)
SHARPEN = 0.5
FORMAT = "otus-dataset v1"


@dataclass
class EvalItem:
    seed: int
    mask: object
    target: object
    inputs: dict  # label -> BModeImage


@dataclass
class Dataset:
    task: str
    seed: int
    size: int
    y: list
    x: list
    y_seeds: list
    x_seeds: list
    eval: list = field(default_factory=list)

    @property
    def eval_seeds(self):
        return [e.seed for e in self.eval]


def seed_ranges(n_frames, seed, n_eval=N_EVAL):
    """Disjoint phantom seed ranges (Y, X, eval) for a dataset seed."""
    base = seed * SEED_BLOCK
    block = 1000 * math.ceil(max(n_frames, n_eval) / 1000)
    y = range(base, base + n_frames)
    x = range(base + block, base + block + n_frames)
    ev = range(base + 2 * block, base + 2 * block + n_eval)
    return y, x, ev


def check_disjoint(*ranges):
    seen = set()
    for r in ranges:
        s = set(r)
        if seen & s:
            raise InvalidArgumentError("phantom seed ranges overlap between domains")
        seen |= s


def _phantom(s, size):
    return make_phantom("random", s, grid=ImageGrid.square(size))


def _degraded(task, s, index, size):
    """Domain-Y rendering of phantom seed ``s`` (the ``index``-th frame)."""
    ph = _phantom(s, size)
    if task == "despeckle":
        return speckle_image(ph)
    if task == "deconv":
        return degrade(ph, "blur-psf")
    if task == "mla":
        k = MLA_TRAIN_FACTORS[index % len(MLA_TRAIN_FACTORS)]
        return _tag(degrade(ph, "mla", k, seed=s), "factor", k)
    if task == "pw-enhance":
        n = PW_TRAIN_COUNTS[index % len(PW_TRAIN_COUNTS)]
        return _tag(degrade(ph, "planewave", n, seed=s), "factor", n)
    k = SUBSAMPLE_COUNTS[index % len(SUBSAMPLE_COUNTS)]
    return _tag(degrade(ph, "subsample", k, seed=s), "factor", k)


def _target(task, s, size):
    """Domain-X rendering of phantom seed ``s``."""
    ph = _phantom(s, size)
    if task == "deconv":
        narrow = PsfSpec()
        narrow = PsfSpec(cycles=narrow.cycles * SHARPEN, beamwidth_mm=narrow.beamwidth_mm * SHARPEN)
        img = speckle_image(ph, narrow, provenance="deconvolved-target")
        return img
    if task == "missing-channel":
        return das_beamform(simulate_channel_data(ph, noise_db=ACQ_NOISE_DB, noise_seed=s))
    return clean_image(ph)


def eval_factors(task):
    if task == "mla":
        return MLA_FACTORS
    if task == "pw-enhance":
        return PLANEWAVE_COUNTS
    if task == "missing-channel":
        return SUBSAMPLE_COUNTS + (64,)
    return (None,)


def _eval_item(task, s, size):
    ph = _phantom(s, size)
    inputs = {}
    if task == "despeckle":
        inputs["speckled"] = speckle_image(ph)
    elif task == "deconv":
        inputs["blurred"] = degrade(ph, "blur-psf")
    elif task == "mla":
        for k in MLA_FACTORS:
            inputs["sla" if k == 1 else f"mla-{k}"] = _tag(degrade(ph, "mla", k, seed=s), "factor", k)
    elif task == "pw-enhance":
        for n in PLANEWAVE_COUNTS:
            inputs[f"pw-{n}"] = _tag(degrade(ph, "planewave", n, seed=s), "factor", n)
    else:
        frame = simulate_channel_data(ph, noise_db=ACQ_NOISE_DB, noise_seed=s)
        for k in SUBSAMPLE_COUNTS + (64,):
            img = das_beamform(with_active(frame, active_subset(64, k)))
            inputs[f"ch-{k}"] = _tag(img, "factor", k)
    target = clean_image(ph) if task in ("despeckle", "mla", "pw-enhance") else _target(task, s, size)
    return EvalItem(s, ph.roi_mask(), target, inputs)


def _tag(img, key, value):
    img.meta[key] = value
    return img


def _map(fn, items, workers):
    if workers <= 1:
        return [fn(*a) for a in items]
    with ProcessPoolExecutor(workers) as pool:
        return list(pool.map(_star, [(fn, a) for a in items]))


def _star(job):
    fn, args = job
    return fn(*args)


def build_unpaired_dataset(task, n_frames, seed, size=64, n_eval=N_EVAL, workers=1, seeds=None):
    """Unpaired (Y, X) training domains plus a paired evaluation set.

    ``seeds`` may override the (Y, X, eval) phantom seed ranges; they must be disjoint.
    """
    if task not in TASKS:
        raise InvalidArgumentError(f"unknown task {task!r}; expected one of {TASKS}")
    if n_frames < 2:
        raise InvalidArgumentError("n_frames must be at least 2")
    y_r, x_r, e_r = seeds if seeds is not None else seed_ranges(n_frames, seed, n_eval)
    check_disjoint(y_r, x_r, e_r)
    y = _map(partial(_degraded, task), [(s, i, size) for i, s in enumerate(y_r)], workers)
    x = _map(partial(_target, task), [(s, size) for s in x_r], workers)
    ev = _map(partial(_eval_item, task), [(s, size) for s in e_r], workers)
    return Dataset(task, seed, size, y, x, list(y_r), list(x_r), ev)


def paired_targets(ds, workers=1):
    """Domain-X renderings of the domain-Y phantoms, for the supervised baseline."""
    return _map(partial(_target, ds.task), [(s, ds.size) for s in ds.y_seeds], workers)


def write_dataset(directory, ds):
    for sub in ("Y", "X", "eval"):
        os.makedirs(os.path.join(directory, sub), exist_ok=True)
    rows = []
    for i, (img, s) in enumerate(zip(ds.y, ds.y_seeds)):
        stem = f"Y/y_{i:05d}"
        save_image(os.path.join(directory, stem), img)
        rows.append(("Y", stem, s, img.provenance))
    for i, (img, s) in enumerate(zip(ds.x, ds.x_seeds)):
        stem = f"X/x_{i:05d}"
        save_image(os.path.join(directory, stem), img)
        rows.append(("X", stem, s, img.provenance))
    for i, item in enumerate(ds.eval):
        for label, img in item.inputs.items():
            stem = f"eval/e_{i:05d}_{label}"
            save_image(os.path.join(directory, stem), img)
            rows.append(("eval-input", stem, item.seed, label))
        stem = f"eval/e_{i:05d}_target"
        save_image(os.path.join(directory, stem), item.target)
        rows.append(("eval-target", stem, item.seed, item.target.provenance))
        write_mask(os.path.join(directory, f"eval/e_{i:05d}.mask"), item.mask)
        rows.append(("eval-mask", f"eval/e_{i:05d}.mask", item.seed, "mask"))
    lines = [f"format = {FORMAT}", f"task = {ds.task}", f"seed = {ds.seed}", f"size = {ds.size}",
             f"n_y = {len(ds.y)}", f"n_x = {len(ds.x)}", f"n_eval = {len(ds.eval)}", "[files]"]
    lines += [" ".join(map(str, r)) for r in rows]
    tmp = os.path.join(directory, "manifest.txt.tmp")
    with open(tmp, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, os.path.join(directory, "manifest.txt"))


def read_dataset_manifest(directory):
    path = os.path.join(directory, "manifest.txt")
    if not os.path.exists(path):
        raise InvalidArgumentError(f"no dataset manifest in {directory}")
    header, rows, in_files = {}, [], False
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line == "[files]":
                in_files = True
            elif in_files:
                domain, stem, s, prov = line.split()
                rows.append((domain, stem, int(s), prov))
            else:
                k, v = (t.strip() for t in line.split("=", 1))
                header[k] = v
    if header.get("format") != FORMAT:
        raise InvalidArgumentError(f"unsupported dataset format {header.get('format')!r}")
    return header, rows


def load_dataset(directory, with_train=True):
    header, rows = read_dataset_manifest(directory)
    y, x, ys, xs = [], [], [], []
    items = {}
    for domain, stem, s, label in rows:
        full = os.path.join(directory, stem)
        if domain == "Y" and with_train:
            y.append(load_image(full))
            ys.append(s)
        elif domain == "X" and with_train:
            x.append(load_image(full))
            xs.append(s)
        elif domain.startswith("eval"):
            key = stem.split("/")[1][:7]
            item = items.setdefault(key, EvalItem(s, None, None, {}))
            if domain == "eval-input":
                item.inputs[label] = load_image(full)
            elif domain == "eval-target":
                item.target = load_image(full)
            else:
                item.mask = read_mask(full)
    check_disjoint(ys, xs, [it.seed for it in items.values()])
    return Dataset(header["task"], int(header["seed"]), int(header["size"]), y, x, ys, xs,
                   [items[k] for k in sorted(items)])
