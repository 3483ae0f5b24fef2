"""Verification suites: finite-difference gradient checks and OT property checks.

Each suite returns a list of :class:`Check` records; ``summarize`` folds
them into per-name pass counts for the CLI report.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, precision
from .autodiff import functional as Fn
from .autodiff.functional import RunningStats
from .autodiff.gradcheck import (
    branch_pattern,
    check_directional,
    check_op,
    default_rtol,
    off_kink,
    rel_error,
    same_branches,
)
from .errors import InvalidArgumentError
from .nn import Discriminator, DiscriminatorSpec, Generator, GeneratorSpec
from .ot import DiscreteMeasure, joint_cost_lower_bound, joint_transport_cost, pushforward, w1_1d, w1_dual, w1_exact

OT_TOL = 1e-9
GAP_TOL = 1e-6
KINK_RETRIES = 8
# each instance probes every TENSOR_GROUPS-th parameter tensor; being odd, it
# pairs every group with both batch-norm modes over 2 * TENSOR_GROUPS instances
TENSOR_GROUPS = 5


@dataclass
class Check:
    suite: str
    name: str
    instance: int
    value: float
    tolerance: float
    passed: bool


def summarize(checks):
    """``{name: (passed, total, worst value)}`` in first-seen order."""
    out = {}
    for c in checks:
        p, t, w = out.get(c.name, (0, 0, 0.0))
        out[c.name] = (p + c.passed, t + 1, max(w, c.value))
    return out


# -- gradient checks ----------------------------------------------------------

def _primitive_cases(rng):
    """``name -> (fn, arrays)`` for one random instance of every primitive."""
    n, c, h, w = (int(v) for v in (rng.integers(1, 3), rng.integers(1, 4), 2 * rng.integers(2, 5), 2 * rng.integers(2, 5)))
    shape = (n, c, h, w)
    a = rng.standard_normal(shape)
    b = rng.standard_normal(shape)
    cout = int(rng.integers(1, 5))
    k = int(rng.choice([1, 3]))
    stride = int(rng.integers(1, 3))
    pad = str(rng.choice(["same", "valid"]))
    kernel = rng.standard_normal((cout, c, k, k))
    bias = rng.standard_normal(cout)
    gamma = rng.uniform(0.5, 1.5, c)
    beta = rng.standard_normal(c)
    stats = RunningStats(c, np.float64)
    stats.mean = rng.standard_normal(c)
    stats.var = rng.uniform(0.5, 2.0, c)
    # maxpool inputs: distinct values with gaps well above the FD step
    pool = rng.permutation(np.prod(shape)).reshape(shape) * 1e-2 + rng.uniform(-1, 1)
    row = rng.standard_normal((int(rng.integers(2, 5)), int(rng.integers(2, 5))))
    return {
        "add": (Fn.add, [a, b[:, :, :1, :]]),
        "sub": (Fn.sub, [a, b]),
        "mul": (Fn.mul, [a, b]),
        "div": (Fn.div, [a, np.sign(b) * (np.abs(b) + 0.5)]),
        "square": (Fn.square, [a]),
        "abs": (Fn.abs, [off_kink(rng, shape)]),
        "relu": (Fn.relu, [off_kink(rng, shape)]),
        "leaky_relu": (lambda t: Fn.leaky_relu(t, 0.2), [off_kink(rng, shape)]),
        "sum": (lambda t: Fn.sum(t, axis=(0, 2)), [a]),
        "mean": (lambda t: Fn.mean(t, axis=1, keepdims=True), [a]),
        "abs_mean": (Fn.abs_mean, [off_kink(rng, shape)]),
        "reshape": (lambda t: Fn.reshape(t, (-1,)), [row]),
        "getitem": (lambda t: Fn.getitem(t, (slice(None), slice(1, None))), [row]),
        "concat_channels": (Fn.concat_channels, [a, rng.standard_normal((n, 2, h, w))]),
        "conv2d": (lambda x, kk, bb: Fn.conv2d(x, kk, bb, stride=stride, padding=pad), [a, kernel, bias]),
        "batchnorm_train": (lambda x, g, be: Fn.batchnorm2d(x, g, be, training=True), [a, gamma, beta]),
        "batchnorm_eval": (lambda x, g, be: Fn.batchnorm2d(x, g, be, stats, training=False), [a, gamma, beta]),
        "maxpool2d": (Fn.maxpool2d, [pool]),
        "upsample_nearest": (Fn.upsample_nearest, [a]),
    }


def primitive_checks(instances=50, seed=0):
    checks = []
    for i in range(instances):
        rng = np.random.default_rng([seed, i])
        for name, (fn, arrays) in _primitive_cases(rng).items():
            for dtype in (np.float64, np.float32):
                err = check_op(fn, arrays, seed=i, dtype=dtype)
                tol = default_rtol(dtype)
                bits = 64 if dtype == np.float64 else 32
                checks.append(Check("gradcheck", f"{name}/{bits}", i, err, tol, err < tol))
    return checks


def _copy_params(dst, src):
    """Copy weights and running statistics across precisions."""
    for name, t in src.params.items():
        dst.params[name].data = t.data.astype(dst.params[name].dtype)


def _perturb(net, rng):
    """He-scaled kernels plus random affine and running statistics.

    The training init is deliberately small; at that scale eval-mode batch
    norm leaves early-layer gradients below the finite-difference noise floor.
    """
    for name, t in net.params.items():
        c = t.shape[0]
        if name.endswith("kernel"):
            fan_in = t.size // c
            t.data = (rng.standard_normal(t.shape) * np.sqrt(2.0 / fan_in)).astype(t.dtype)
        elif name.endswith("running_mean") or name.endswith("beta") or name.endswith("bias"):
            t.data = (0.1 * rng.standard_normal(c)).astype(t.dtype)
        elif name.endswith("running_var") or name.endswith("gamma"):
            t.data = rng.uniform(0.5, 2.0, c).astype(t.dtype)


def _build(kind, filters, seed, dtype):
    if kind == "unet":
        return Generator(GeneratorSpec(filters, 9), seed=seed, dtype=dtype)
    return Discriminator(DiscriminatorSpec(filters, 4), seed=seed, dtype=dtype)


def network_checks(kind, filters, instances=50, seed=0):
    """Directional checks of every parameter tensor of a U-Net or PatchGAN.

    Each instance draws fresh weights, running statistics, inputs and targets,
    then takes one random direction per probed tensor. The directional
    derivatives of the 32- and 64-bit networks are compared, norm-wise over
    the probed tensors, with 64-bit finite differences through the 64-bit
    copy. Even instances run batch norm in eval mode on one image, odd ones in
    train mode on a batch large enough that the coarsest level still has
    several values per channel to normalize over. Kinks are excluded twice:
    inputs are redrawn until both precisions take the same side of every
    switch, and directions whose finite-difference segment crosses a switch
    are redrawn (tensors that never find a smooth direction are dropped).
    """
    checks = []
    for i in range(instances):
        rng = np.random.default_rng([seed, 1000 + i])
        train = i % 2 == 1
        size = 16 if kind == "unet" else 64
        batch = 1
        if train:
            # keep >= 8 values per channel at the coarsest batch-normalized level
            size, batch = (2 * size, 2) if kind == "unet" else (size, 8)
        net32 = _build(kind, filters, seed * 100003 + i, np.float32)
        net64 = _build(kind, filters, 0, np.float64)
        _perturb(net32, rng)
        _copy_params(net64, net32)
        for net in (net32, net64):
            net.train() if train else net.eval()

        def make_loss(net, dtype):
            def loss():
                with precision(dtype):
                    diff = net(Tensor(x, dtype=dtype)) - Tensor(target, dtype=dtype)
                    return Fn.mean(Fn.square(diff)) if kind == "patchgan" else Fn.abs_mean(diff)
            return loss

        # a pre-activation within rounding of a switch can land on different
        # sides at the two precisions; such draws compare different linear
        # pieces and are redrawn like any other kink
        for _ in range(KINK_RETRIES + 1):
            x = rng.standard_normal((batch, 1, size, size))
            with precision(np.float64):
                target = rng.standard_normal(net64(Tensor(x, dtype=np.float64)).shape)
            if same_branches(branch_pattern(make_loss(net32, np.float32)()),
                             branch_pattern(make_loss(net64, np.float64)())):
                break

        ref = make_loss(net64, np.float64)
        names = list(net64.params.trainable())[i % TENSOR_GROUPS::TENSOR_GROUPS]
        p64 = {k: net64.params[k] for k in names}
        for dtype, net in ((np.float64, net64), (np.float32, net32)):
            pairs = []
            check_directional(make_loss(net, dtype), {k: net.params[k] for k in names}, seed=i,
                              ref_loss_fn=ref, ref_params=p64, kink_retries=KINK_RETRIES, pairs=pairs)
            ad, fd = np.array(pairs).T
            err = rel_error(ad, fd)
            bits = 64 if dtype == np.float64 else 32
            tol = default_rtol(dtype)
            checks.append(Check("gradcheck", f"{kind}-{filters}/{bits}", i, err, tol, err < tol))
    return checks


def parse_spec(spec):
    """'unet-gf8' -> ('unet', 8); 'patchgan-df4' -> ('patchgan', 4); 'primitives'."""
    if spec == "primitives":
        return ("primitives", None)
    m = re.fullmatch(r"(unet)-gf(\d+)|(patchgan)-df(\d+)", spec)
    if not m:
        raise InvalidArgumentError(f"unknown gradcheck spec {spec!r}")
    return (m.group(1), int(m.group(2))) if m.group(1) else (m.group(3), int(m.group(4)))


def gradcheck_suite(spec="all", instances=50, seed=0, composite_instances=None):
    """Run the named gradient-check suite; ``all`` covers primitives, unet-gf8 and patchgan-df16."""
    specs = ["primitives", "unet-gf8", "patchgan-df16"] if spec == "all" else [spec]
    comp = instances if composite_instances is None else composite_instances
    checks = []
    for s in specs:
        kind, filters = parse_spec(s)
        if kind == "primitives":
            checks += primitive_checks(instances, seed)
        else:
            checks += network_checks(kind, filters, comp, seed)
    return checks


# -- optimal-transport checks ---------------------------------------------------

def random_measure(rng, max_atoms=6, dim=None, lattice=True):
    n = int(rng.integers(1, max_atoms + 1))
    d = int(rng.integers(1, 3)) if dim is None else dim
    pts = rng.integers(-4, 5, (n, d)).astype(float) if lattice else rng.standard_normal((n, d))
    pts = np.unique(pts, axis=0)
    w = rng.random(pts.shape[0]) + 0.05
    return DiscreteMeasure(pts, w / w.sum())


def _same_dim(rng, d, max_atoms=6):
    return random_measure(rng, max_atoms, dim=d, lattice=bool(rng.random() < 0.5))


def ot_checks(instances=100, seed=0):
    """Metric axioms, duality, 1-D closed form, marginals and push-forward enumeration."""
    checks = []
    for i in range(instances):
        rng = np.random.default_rng([seed, 5000 + i])
        d = int(rng.integers(1, 3))
        mu, nu, rho = (_same_dim(rng, d) for _ in range(3))
        metric = "L1" if rng.random() < 0.7 else "L2"
        a, plan = w1_exact(mu, nu, metric)
        b, _ = w1_exact(nu, mu, metric)
        ac, _ = w1_exact(mu, rho, metric)
        cb, _ = w1_exact(rho, nu, metric)
        self_cost, _ = w1_exact(mu, mu, metric)
        checks.append(Check("ot", "nonnegativity", i, max(0.0, -a), OT_TOL, a >= -OT_TOL))
        checks.append(Check("ot", "identity", i, abs(self_cost), OT_TOL, abs(self_cost) <= OT_TOL))
        checks.append(Check("ot", "symmetry", i, abs(a - b), OT_TOL, abs(a - b) <= OT_TOL))
        tri = a - (ac + cb)
        checks.append(Check("ot", "triangle", i, max(0.0, tri), OT_TOL, tri <= OT_TOL))
        me = plan.marginal_error(mu, nu)
        checks.append(Check("ot", "marginals", i, me, OT_TOL, me <= OT_TOL))
        dual, _, _ = w1_dual(mu, nu, metric)
        checks.append(Check("ot", "duality_gap", i, abs(a - dual), GAP_TOL, abs(a - dual) <= GAP_TOL))
        m1, n1 = _same_dim(rng, 1), _same_dim(rng, 1)
        gap1 = abs(w1_1d(m1, n1) - w1_exact(m1, n1)[0])
        checks.append(Check("ot", "closed_form_1d", i, gap1, OT_TOL, gap1 <= OT_TOL))
        bad = pushforward_violations(rng)
        checks.append(Check("ot", "pushforward", i, float(bad), 0.0, bad == 0))
        G, F = _random_map(rng, d), _random_map(rng, d)
        cost, jplan = joint_transport_cost(mu, nu, G, F)
        bound = joint_cost_lower_bound(mu, nu, G, F)
        checks.append(Check("ot", "joint_bound", i, max(0.0, bound - cost), OT_TOL, cost >= bound - OT_TOL))
    return checks


def _random_map(rng, d):
    """Piecewise-affine lattice map, deterministic given the drawn coefficients."""
    A = rng.integers(-2, 3, (d, d)).astype(float)
    t = rng.integers(-2, 3, d).astype(float)
    return lambda p: A @ np.asarray(p, dtype=float) + t


def pushforward_violations(rng, n=5):
    """Count subsets B of the image support where nu(B) != mu(T^-1(B)) as exact fractions.

    Weights are dyadic rationals so sums are exact in floating point.
    """
    pts = rng.integers(-3, 4, (n, 1)).astype(float)
    pts = pts + np.arange(n)[:, None] * 10.0  # distinct atoms
    # dyadic weights keep every partial sum exact
    raw = rng.integers(1, 9, n)
    w = raw / 2.0 ** 10
    w[-1] = 1.0 - w[:-1].sum()
    mu = DiscreteMeasure(pts, w)
    targets = rng.integers(0, 3, n)
    table = {tuple(p): (float(targets[k]),) for k, p in enumerate(pts)}
    T = lambda p: np.array(table[tuple(p)])  # noqa: E731
    nu = pushforward(T, mu)
    image = [tuple(p) for p in nu.support]
    bad = 0
    for r in range(len(image) + 1):
        for B in itertools.combinations(image, r):
            lhs = nu.mass_of(np.array(B)) if B else 0.0
            pre = [k for k, p in enumerate(pts) if tuple(T(p)) in B]
            rhs = float(sum(mu.weights[k] for k in pre))
            bad += lhs != rhs
    return bad


def ot_suite(instances=100, seed=0):
    return ot_checks(instances, seed)
