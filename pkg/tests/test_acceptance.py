"""Acceptance suite: one PASS/FAIL line per criterion, at the stated tolerances and budgets.

The training criteria take tens of minutes on one CPU core; deselect them with
``-m "not slow"`` for a quick run.
"""

import os
import time

import numpy as np
import pytest

from otus import cli, metrics, verify
from otus.sim import (
    active_subset,
    build_unpaired_dataset,
    das_beamform,
    degrade,
    make_phantom,
    paired_targets,
    simulate_channel_data,
    with_active,
)
from otus.sim.degrade import ACQ_NOISE_DB
from otus.train import TrainConfig, enhance, smoothed, supervised_defaults, train_supervised, train_unsupervised

# desk-scale settings shared by the training criteria
FRAMES = 200
SEED = 0
UNSUP = dict(gamma=50.0, epochs=16)
SUP = dict(epochs=16)  # same epoch budget as the unsupervised run
MLA = dict(gamma=50.0, epochs=16)
TRAIN_BUDGET_S = 45 * 60


@pytest.fixture
def emit(capsys):
    def _emit(n, title, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n} ({title}): {detail}")
    return _emit


def region_means(images, items):
    cnr = np.mean([metrics.cnr(im, it.mask) for im, it in zip(images, items)])
    gcnr = np.mean([metrics.gcnr(im, it.mask) for im, it in zip(images, items)])
    return cnr, gcnr


# -- 1. gradients ---------------------------------------------------------------

def test_gradient_correctness(emit):
    t0 = time.perf_counter()
    checks = verify.gradcheck_suite("all", instances=50, seed=0)
    elapsed = time.perf_counter() - t0
    summary = verify.summarize(checks)
    bad = [k for k, (p, n, _) in summary.items() if p != n]
    ok = not bad and elapsed < 300
    worst32 = max(c.value for c in checks if c.name.endswith("/32"))
    worst64 = max(c.value for c in checks if c.name.endswith("/64"))
    emit(1, "gradient correctness", ok,
         f"{len(checks)} checks over {len(summary)} groups, worst rel err {worst32:.2e} (32-bit) "
         f"{worst64:.2e} (64-bit), failing {bad or 'none'}, {elapsed:.0f} s")
    assert not bad, bad
    assert elapsed < 300


# -- 2. optimal transport -------------------------------------------------------

def test_ot_theory(emit):
    t0 = time.perf_counter()
    checks = verify.ot_suite(instances=100, seed=0)
    elapsed = time.perf_counter() - t0
    summary = verify.summarize(checks)
    bad = [k for k, (p, n, _) in summary.items() if p != n]
    ok = not bad and elapsed < 120
    emit(2, "OT theory", ok, f"{len(checks)} checks, failing {bad or 'none'}, {elapsed:.1f} s")
    assert summary["pushforward"][2] == 0
    assert not bad, bad
    assert elapsed < 120


# -- 3. metrics -----------------------------------------------------------------

def half_mask(h=100, w=200):
    """Left half region a, right half region b: 10^4 pixels each."""
    ra = np.zeros((h, w), bool)
    ra[:, :w // 2] = True
    return metrics.RoiMask(ra, ~ra)


def test_metric_sanity(emit):
    from scipy.stats import norm

    rng = np.random.default_rng(0)
    mask = half_mask()
    results = {}
    img = np.where(mask.ra, rng.uniform(-60, -40, mask.ra.shape), rng.uniform(-30, -10, mask.ra.shape))
    results["disjoint"] = metrics.gcnr(img, mask) == 1.0
    same = rng.normal(-30, 5, mask.ra.shape)
    results["identical"] = metrics.gcnr(same, mask) <= 0.05
    d = 1.5
    gauss = np.where(mask.ra, rng.normal(0, 1, mask.ra.shape), rng.normal(d, 1, mask.ra.shape))
    expected = 1 - 2 * norm.cdf(-d / 2)
    results["gaussian"] = abs(metrics.gcnr(gauss, mask) - expected) <= 0.02
    base = rng.integers(-60, 0, mask.ra.shape).astype(np.float64)
    cr, cnr = metrics.cr(base, mask), metrics.cnr(base, mask)
    results["offset"] = metrics.cr(base + 7.0, mask) == cr and metrics.cnr(base + 7.0, mask) == cnr
    results["scale"] = metrics.cnr(base * 4.0, mask) == cnr and metrics.cr(base * 4.0, mask) == 4.0 * cr
    results["swap"] = metrics.cr(base, metrics.RoiMask(mask.rb, mask.ra)) == cr
    ok = all(results.values())
    emit(3, "metric sanity", ok, ", ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in results.items()))
    assert ok, results


# -- 4 and 7. despeckle --------------------------------------------------------

@pytest.fixture(scope="module")
def despeckle():
    t0 = time.perf_counter()
    ds = build_unpaired_dataset("despeckle", FRAMES, SEED)
    return ds, time.perf_counter() - t0


@pytest.fixture(scope="module")
def unsupervised_run(despeckle):
    ds, data_s = despeckle
    t0 = time.perf_counter()
    res = train_unsupervised(TrainConfig(seed=SEED, **UNSUP), ds.x, ds.y)
    inputs = [e.inputs["speckled"] for e in ds.eval]
    outputs, _ = enhance(res.G, inputs)
    return res, region_means(inputs, ds.eval), region_means(outputs, ds.eval), data_s + time.perf_counter() - t0


@pytest.fixture(scope="module")
def supervised_run(despeckle):
    ds, _ = despeckle
    res = train_supervised(supervised_defaults(seed=SEED, **SUP), ds.y, paired_targets(ds))
    outputs, _ = enhance(res.G, [e.inputs["speckled"] for e in ds.eval])
    return region_means(outputs, ds.eval)


@pytest.mark.slow
def test_unsupervised_despeckle(emit, unsupervised_run):
    res, (cnr_in, gcnr_in), (cnr_out, gcnr_out), elapsed = unsupervised_run
    cyc = smoothed([r.cycle_x + r.cycle_y for r in res.reports])
    ratio = cyc[-1] / cyc[0]
    checks = {"cnr": cnr_out >= cnr_in + 0.1, "gcnr": gcnr_out > gcnr_in, "cycle": ratio < 0.2,
              "runtime": elapsed <= TRAIN_BUDGET_S}
    ok = all(checks.values())
    emit(4, "unsupervised despeckle", ok,
         f"CNR {cnr_in:.3f} -> {cnr_out:.3f}, GCNR {gcnr_in:.4f} -> {gcnr_out:.4f}, "
         f"cycle final/initial {ratio:.3f}, {elapsed / 60:.1f} min")
    assert ok, checks


@pytest.mark.slow
def test_supervised_parity(emit, unsupervised_run, supervised_run):
    _, (cnr_in, _), (cnr_unsup, _), _ = unsupervised_run
    cnr_sup, _ = supervised_run
    gain_u, gain_s = cnr_unsup - cnr_in, cnr_sup - cnr_in
    ok = gain_u > 0 and gain_s > 0 and gain_u >= 0.7 * gain_s
    emit(7, "supervised parity", ok,
         f"CNR gain unsupervised {gain_u:.3f}, supervised {gain_s:.3f}, ratio {gain_u / gain_s:.2f}")
    assert ok


# -- 5. degradation monotonicity ---------------------------------------------------

def test_degradation_monotonicity(emit):
    cyst = make_phantom("cyst", 0)
    mask = cyst.roi_mask()
    frame = simulate_channel_data(cyst, noise_db=ACQ_NOISE_DB, noise_seed=0)
    crs = [metrics.cr(das_beamform(with_active(frame, active_subset(64, k))), mask) for k in (64, 32, 16, 8, 4)]
    gcnrs = [metrics.gcnr(degrade(cyst, "planewave", n), mask) for n in (3, 7, 11, 31)]
    ok = all(a > b for a, b in zip(crs, crs[1:])) and all(a < b for a, b in zip(gcnrs, gcnrs[1:]))
    emit(5, "degradation monotonicity", ok,
         "CR by channels 64..4 " + " ".join(f"{v:.2f}" for v in crs)
         + "; GCNR by planewaves 3..31 " + " ".join(f"{v:.4f}" for v in gcnrs))
    assert ok


# -- 6. MLA single model ----------------------------------------------------------

@pytest.mark.slow
def test_mla_single_model(emit):
    t0 = time.perf_counter()
    ds = build_unpaired_dataset("mla", FRAMES, SEED)
    res = train_unsupervised(TrainConfig(seed=SEED, **MLA), ds.x, ds.y)
    gains = {}
    for lab in ds.eval[0].inputs:
        inputs = [e.inputs[lab] for e in ds.eval]
        outputs, _ = enhance(res.G, inputs)
        gains[lab] = (region_means(inputs, ds.eval)[1], region_means(outputs, ds.eval)[1])
    elapsed = time.perf_counter() - t0
    improved = all(gains[f"mla-{k}"][1] > gains[f"mla-{k}"][0] for k in (2, 3, 4, 6))
    ok = improved and elapsed <= TRAIN_BUDGET_S
    emit(6, "MLA single model", ok,
         ", ".join(f"{k} {a:.4f}->{b:.4f}" for k, (a, b) in gains.items()) + f", {elapsed / 60:.1f} min")
    assert improved, gains
    assert elapsed <= TRAIN_BUDGET_S


# -- 8. determinism -------------------------------------------------------------

def snapshot(root):
    """Relative path -> file contents, with wall-clock fields dropped."""
    out = {}
    for dirpath, _, names in os.walk(root):
        for n in names:
            full = os.path.join(dirpath, n)
            rel = os.path.relpath(full, root)
            # the run directories themselves are the one input that differs
            blob = open(full, "rb").read().replace(str(root).encode(), b"<root>")
            if n == "metrics.csv":
                blob = b"\n".join(line.rsplit(b",", 1)[0] for line in blob.splitlines())
            elif n == "timing.csv":
                blob = b"\n".join(line.split(b",")[0] for line in blob.splitlines())
            out[rel] = blob
    return out


def test_determinism(emit, tmp_path, capsys):
    tiny = ["--set", "epochs=2", "--set", "batch_size=2", "--set", "gen_filters=2", "--set", "disc_filters=2",
            "--set", "disc_blocks=2"]
    stem = os.path.join("data", "eval", "e_00000_speckled")
    commands = {
        "gen-data": lambda d: ["gen-data", "--out", f"{d}/data", "--frames", "6", "--size", "32", "--n-eval", "2"],
        "train": lambda d: ["train", "--data", f"{d}/data", "--out", f"{d}/train", *tiny],
        "eval": lambda d: ["eval", "--data", f"{d}/data", "--checkpoint", f"{d}/train", "--out", f"{d}/eval"],
        "infer": lambda d: ["infer", "--checkpoint", f"{d}/train", "--out", f"{d}/infer", f"{d}/{stem}"],
        "verify-ot": lambda d: ["verify-ot", "--instances", "5", "--out", f"{d}/ot"],
        "gradcheck": lambda d: ["gradcheck", "--spec", "primitives", "--instances", "1", "--out", f"{d}/grad"],
    }
    stdout = {}
    for run in ("a", "b"):
        d = str(tmp_path / run)
        for name, argv in commands.items():
            assert cli.main([*argv(d), "-q"]) == 0, name
            stdout[run, name] = capsys.readouterr().out
    a, b = snapshot(tmp_path / "a"), snapshot(tmp_path / "b")
    differing = sorted(k for k in a.keys() | b.keys() if a.get(k) != b.get(k))
    differing += [n for n in commands if stdout["a", n] != stdout["b", n]]
    ok = not differing
    emit(8, "determinism", ok, f"{len(commands)} commands, {len(a)} files compared, differing {differing or 'none'}")
    assert ok, differing
