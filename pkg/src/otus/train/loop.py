"""Unsupervised OT-cycleGAN and supervised l1+SSIM training loops."""

from __future__ import annotations

import csv
import os
import shutil
from dataclasses import asdict, dataclass

import numpy as np

from ..autodiff import Tensor, no_grad, tnsr
from ..autodiff import functional as Fn
from ..errors import InvalidArgumentError, TrainingDivergedError
from ..nn import Discriminator, Generator, ssim
from .losses import cycle_terms, lsgan_disc_loss, lsgan_gen_loss
from .optim import Adam

DB_SCALE = 30.0  # [-60, 0] dB <-> [-1, 1]
SSIM_RANGE = 2.0
LOSS_FIELDS = ("step", "epoch", "cycle_x", "cycle_y", "disc_x", "disc_y", "gen_adv_x", "gen_adv_y",
               "total_gen", "total_disc")
SUP_FIELDS = ("step", "epoch", "l1", "ssim", "total")


def to_net(pixels_db):
    return np.asarray(pixels_db, dtype=np.float32) / DB_SCALE + 1.0


def from_net(values, dynamic_range=60.0):
    return np.clip((np.asarray(values, dtype=np.float64) - 1.0) * DB_SCALE, -dynamic_range, 0.0)


def stack_images(images):
    """(N, 1, H, W) network array from BModeImages or 2-D dB arrays."""
    arrs = [getattr(im, "pixels", im) for im in images]
    if not arrs:
        raise InvalidArgumentError("empty dataset")
    return to_net(np.stack(arrs))[:, None]


@dataclass
class LossReport:
    step: int
    epoch: int
    cycle_x: float
    cycle_y: float
    disc_x: float
    disc_y: float
    gen_adv_x: float
    gen_adv_y: float
    total_gen: float
    total_disc: float

    def values(self):
        return asdict(self)


class LossWriter:
    def __init__(self, path, columns):
        self.columns = columns
        self.fh = open(path, "w", newline="") if path else None
        if self.fh:
            csv.writer(self.fh, lineterminator="\n").writerow(columns)

    def write(self, row):
        if self.fh:
            csv.writer(self.fh, lineterminator="\n").writerow([_fmt(row[c]) for c in self.columns])
            self.fh.flush()

    def close(self):
        if self.fh:
            self.fh.close()


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def read_losses(path):
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def _augment(batch, rng):
    """Random lateral flips; lateral mirroring preserves the imaging geometry."""
    flip = rng.random(batch.shape[0]) < 0.5
    out = batch.copy()
    out[flip] = out[flip, :, :, ::-1]
    return out


def _steps(cfg, n):
    steps = cfg.steps_per_epoch or n // cfg.batch_size
    if steps < 1:
        raise InvalidArgumentError(f"dataset of {n} images is smaller than one batch of {cfg.batch_size}")
    return steps


def _order(seed, epoch, stream, n, steps, batch):
    """Index batches for one epoch; reshuffles whenever a pass is exhausted."""
    rng = np.random.default_rng([seed, epoch, stream])
    need = steps * batch
    idx = np.concatenate([rng.permutation(n) for _ in range(-(-need // n))])[:need]
    return idx.reshape(steps, batch)


def _dump(out_dir, name, arrays, message):
    dump = os.path.join(out_dir or ".", "nan_dump")
    os.makedirs(dump, exist_ok=True)
    for key, arr in arrays.items():
        tnsr.save(os.path.join(dump, f"{name}_{key}.tnsr"), arr)
    raise TrainingDivergedError(message, dump)


def _save(nets, out_dir, epoch, cfg, final=False):
    if not out_dir:
        return
    tag = "final" if final else "latest"
    dirs = [os.path.join(out_dir, "checkpoints", tag)]
    if cfg.keep_all_checkpoints and not final:
        dirs.append(os.path.join(out_dir, "checkpoints", f"epoch_{epoch:04d}"))
    for d in dirs:
        for name, net in nets.items():
            net.params.meta["gamma"] = cfg.gamma
            net.params.save(os.path.join(d, name), epoch)


@dataclass
class TrainResult:
    G: object
    F: object
    reports: list
    disc_x: object = None
    disc_y: object = None


def build_networks(cfg, unsupervised=True):
    """Generators (and discriminators) seeded deterministically from ``cfg.seed``."""
    gs, ds = cfg.generator_spec, cfg.discriminator_spec
    G = Generator(gs, seed=cfg.seed * 4 + 0)
    if not unsupervised:
        return G, None, None, None
    F = Generator(gs, seed=cfg.seed * 4 + 1)
    DX = Discriminator(ds, seed=cfg.seed * 4 + 2)
    DY = Discriminator(ds, seed=cfg.seed * 4 + 3)
    return G, F, DX, DY


def _trainable(*nets):
    return [t for net in nets for t in net.params.trainable().values()]


def train_unsupervised(cfg, domain_x, domain_y, out_dir=None, log=None, nets=None):
    """Alternating LS-GAN discriminator / generator updates on unpaired batches.

    ``domain_x`` holds target images, ``domain_y`` degraded ones (BModeImages or
    dB arrays). Each step: one discriminator update on fakes from the current
    generators, then one generator update of gamma * cycle + adversarial terms.
    """
    X = stack_images(domain_x)
    Y = stack_images(domain_y)
    G, F, DX, DY = nets or build_networks(cfg)
    for net in (G, F, DX, DY):
        net.train()
    betas = (cfg.adam_beta1, cfg.adam_beta2)
    opt_g = Adam(_trainable(G, F), cfg.lr_start, betas, cfg.adam_eps)
    opt_d = Adam(_trainable(DX, DY), cfg.lr_start, betas, cfg.adam_eps)
    steps = _steps(cfg, min(len(X), len(Y)))
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    writer = LossWriter(os.path.join(out_dir, "losses.csv") if out_dir else None, LOSS_FIELDS)
    reports = []
    step = 0
    try:
        for epoch in range(cfg.epochs):
            lr = cfg.lr(epoch)
            opt_g.lr = opt_d.lr = lr
            ix = _order(cfg.seed, epoch, 0, len(X), steps, cfg.batch_size)
            iy = _order(cfg.seed, epoch, 1, len(Y), steps, cfg.batch_size)
            aug = np.random.default_rng([cfg.seed, epoch, 2])
            for s in range(steps):
                xb, yb = X[ix[s]], Y[iy[s]]
                if cfg.augment:
                    xb, yb = _augment(xb, aug), _augment(yb, aug)
                x, y = Tensor(xb), Tensor(yb)
                cyc_x, cyc_y, fake_y, fake_x = cycle_terms(x, y, G, F)

                # discriminator step on detached fakes
                DX.train(), DY.train()
                d_x = lsgan_disc_loss(x, fake_x, DX)
                d_y = lsgan_disc_loss(y, fake_y, DY)
                d_total = d_x + d_y
                opt_d.zero_grad()
                d_total.backward()
                opt_d.step()

                # generator step against the updated discriminators
                DX.eval(), DY.eval()
                adv_x = lsgan_gen_loss(fake_x, DX)
                adv_y = lsgan_gen_loss(fake_y, DY)
                g_total = cfg.gamma * (cyc_x + cyc_y) + adv_x + adv_y
                opt_g.zero_grad()
                g_total.backward()
                opt_g.step()
                for d in (DX, DY):
                    d.params.zero_grad()

                rep = LossReport(step, epoch, cyc_x.item(), cyc_y.item(), d_x.item(), d_y.item(),
                                 adv_x.item(), adv_y.item(), g_total.item(), d_total.item())
                vals = rep.values()
                if not all(np.isfinite(v) for v in vals.values()):
                    _dump(out_dir, f"step{step:06d}", {"x": xb, "y": yb},
                          f"non-finite loss at epoch {epoch} step {step}")
                reports.append(rep)
                writer.write(vals)
                step += 1
            if log:
                last = reports[-steps:]
                log(f"epoch {epoch} lr {lr:.3g} cycle {np.mean([r.cycle_x + r.cycle_y for r in last]):.4f} "
                    f"disc {np.mean([r.total_disc for r in last]):.4f}")
            _save({"G": G, "F": F, "DX": DX, "DY": DY}, out_dir, epoch, cfg)
    finally:
        writer.close()
    _save({"G": G, "F": F, "DX": DX, "DY": DY}, out_dir, cfg.epochs - 1, cfg, final=True)
    for net in (G, F, DX, DY):
        net.eval()
    return TrainResult(G, F, reports, DX, DY)


def supervised_loss(out, target, cfg):
    l1 = Fn.abs_mean(out - target)
    total = cfg.lambda_l1 * l1
    s = None
    if cfg.lambda_ssim > 0:
        s = ssim(out, target, data_range=SSIM_RANGE)
        total = total + cfg.lambda_ssim * (1.0 - s)
    return total, l1, s


def train_supervised(cfg, inputs, targets, out_dir=None, log=None, net=None):
    """Paired regression: lambda_l1 * L1 + lambda_ssim * (1 - SSIM)."""
    Xin = stack_images(inputs)
    Xt = stack_images(targets)
    if Xin.shape != Xt.shape:
        raise InvalidArgumentError("inputs and targets must pair up one to one")
    G = net or build_networks(cfg, unsupervised=False)[0]
    G.train()
    opt = Adam(_trainable(G), cfg.lr_start, (cfg.adam_beta1, cfg.adam_beta2), cfg.adam_eps)
    steps = _steps(cfg, len(Xin))
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    writer = LossWriter(os.path.join(out_dir, "losses.csv") if out_dir else None, SUP_FIELDS)
    reports = []
    step = 0
    try:
        for epoch in range(cfg.epochs):
            opt.lr = cfg.lr(epoch)
            idx = _order(cfg.seed, epoch, 0, len(Xin), steps, cfg.batch_size)
            aug = np.random.default_rng([cfg.seed, epoch, 2])
            for s in range(steps):
                pair = np.concatenate([Xin[idx[s]], Xt[idx[s]]], axis=1)
                if cfg.augment:
                    pair = _augment(pair, aug)
                x, t = Tensor(pair[:, :1]), Tensor(pair[:, 1:])
                total, l1, sv = supervised_loss(G(x), t, cfg)
                opt.zero_grad()
                total.backward()
                opt.step()
                row = {"step": step, "epoch": epoch, "l1": l1.item(),
                       "ssim": sv.item() if sv is not None else float("nan"), "total": total.item()}
                if not np.isfinite(row["total"]):
                    _dump(out_dir, f"step{step:06d}", {"input": pair[:, :1], "target": pair[:, 1:]},
                          f"non-finite loss at epoch {epoch} step {step}")
                reports.append(row)
                writer.write(row)
                step += 1
            if log:
                log(f"epoch {epoch} lr {opt.lr:.3g} loss {np.mean([r['total'] for r in reports[-steps:]]):.4f}")
            _save({"G": G}, out_dir, epoch, cfg)
    finally:
        writer.close()
    _save({"G": G}, out_dir, cfg.epochs - 1, cfg, final=True)
    G.eval()
    return TrainResult(G, None, reports)


def enhance(G, images, batch_size=8):
    """Apply ``G`` (eval mode) to dB images; returns (dB arrays, per-image milliseconds)."""
    import time

    G.eval()
    arrs = [getattr(im, "pixels", im) for im in images]
    outs, times = [], []
    with no_grad():
        for i in range(0, len(arrs), batch_size):
            chunk = stack_images(arrs[i:i + batch_size])
            t0 = time.perf_counter()
            y = G(Tensor(chunk)).data
            dt = (time.perf_counter() - t0) * 1e3 / len(chunk)
            outs += [from_net(v[0]) for v in y]
            times += [dt] * len(chunk)
    return outs, times


def smoothed(values, window=None):
    """Moving average used to compare the start and end of a loss curve."""
    v = np.asarray(values, dtype=np.float64)
    window = window or max(1, len(v) // 10)
    kernel = np.ones(window) / window
    return np.convolve(v, kernel, mode="valid")


def clear_dir(path):
    if os.path.isdir(path):
        shutil.rmtree(path)
