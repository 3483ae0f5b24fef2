"""U-Net generator and PatchGAN discriminator built on the autodiff primitives."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..autodiff import functional as F
from ..errors import CheckpointMismatchError, InvalidArgumentError
from .store import BatchNormBuffers, ParameterStore, param_dtype, read_manifest, truncated_normal

LEAKY_SLOPE = 0.2


@dataclass(frozen=True)
class GeneratorSpec:
    """U-Net layout: ``depth`` modules of three convolutions each.

    The first ``(depth - 1) / 2`` modules form the encoder (each ends in a 2x2
    max-pool), one module is the bottleneck, the rest form the decoder (each
    starts with nearest upsampling and a skip concatenation). The last
    convolution of the final decoder module is the 1x1 linear output layer.
    """

    base_filters: int = 8
    depth: int = 9
    in_channels: int = 1
    out_channels: int = 1

    def __post_init__(self):
        if self.base_filters < 1 or self.depth < 3 or self.depth % 2 == 0:
            raise InvalidArgumentError("need base_filters >= 1 and an odd depth >= 3")

    @property
    def levels(self):
        return (self.depth - 1) // 2

    def widths(self):
        """Filter count per encoder level plus the bottleneck."""
        return [self.base_filters * 2 ** i for i in range(self.levels + 1)]

    def conv_layers(self):
        """``[(path, cin, cout, kernel)]`` in forward order."""
        f = self.widths()
        layers = []
        cin = self.in_channels
        for i in range(self.levels):
            layers += [(f"enc{i}/conv0", cin, f[i], 3),
                       (f"enc{i}/conv1", f[i], f[i], 3),
                       (f"enc{i}/conv2", f[i], f[i], 3)]
            cin = f[i]
        top = self.levels
        layers += [("mid/conv0", cin, f[top], 3),
                   ("mid/conv1", f[top], f[top], 3),
                   ("mid/conv2", f[top], f[top], 3)]
        below = f[top]
        for i in reversed(range(self.levels)):
            layers += [(f"dec{i}/conv0", below + f[i], f[i], 3),
                       (f"dec{i}/conv1", f[i], f[i], 3)]
            if i == 0:
                layers.append(("dec0/out", f[0], self.out_channels, 1))
            else:
                layers.append((f"dec{i}/conv2", f[i], f[i], 3))
            below = f[i]
        return layers


@dataclass(frozen=True)
class DiscriminatorSpec:
    """PatchGAN layout: ``blocks`` blocks of two stride-2 3x3 convolutions.

    Filters double per block; a 1x1 convolution maps to one score channel.
    The very first convolution has a bias and no batch norm.
    """

    base_filters: int = 256
    blocks: int = 4
    in_channels: int = 1

    def __post_init__(self):
        if self.base_filters < 1 or self.blocks < 1:
            raise InvalidArgumentError("need base_filters >= 1 and blocks >= 1")

    def widths(self):
        return [self.base_filters * 2 ** b for b in range(self.blocks)]

    def min_extent(self):
        # every stride-2 layer but the last two still halves a map of extent >= 2
        return 4 ** (self.blocks - 1)

    def conv_layers(self):
        """``[(path, cin, cout, kernel, stride)]`` in forward order."""
        layers, cin = [], self.in_channels
        for b, f in enumerate(self.widths()):
            layers += [(f"block{b}/conv0", cin, f, 3, 2), (f"block{b}/conv1", f, f, 3, 2)]
            cin = f
        layers.append(("out", cin, 1, 1, 1))
        return layers


class _Network:
    kind = "network"

    def __init__(self, spec, seed, dtype=None):
        self.spec = spec
        self.seed = seed
        self.dtype = param_dtype(dtype)
        self.params = ParameterStore(self.kind, asdict(spec), seed)
        self.training = True
        self._bn = {}

    def train(self):
        self.training = True
        return self

    def eval(self):
        self.training = False
        return self

    def _add_conv(self, rng, path, cin, cout, k, bias):
        self.params.add(f"{path}/kernel", truncated_normal(rng, (cout, cin, k, k), dtype=self.dtype))
        if bias:
            self.params.add(f"{path}/bias", np.zeros(cout, dtype=self.dtype))

    def _add_bn(self, path, c):
        p = self.params
        p.add(f"{path}/gamma", np.ones(c, dtype=self.dtype))
        p.add(f"{path}/beta", np.zeros(c, dtype=self.dtype))
        mean = p.add(f"{path}/running_mean", np.zeros(c, dtype=self.dtype), trainable=False)
        var = p.add(f"{path}/running_var", np.ones(c, dtype=self.dtype), trainable=False)
        self._bn[path] = BatchNormBuffers(mean, var)

    def _conv(self, x, path, stride=1):
        p = self.params
        bias = p[f"{path}/bias"] if f"{path}/bias" in p else None
        return F.conv2d(x, p[f"{path}/kernel"], bias, stride=stride, padding="same")

    def _bn_apply(self, x, path):
        p = self.params
        return F.batchnorm2d(x, p[f"{path}/gamma"], p[f"{path}/beta"], self._bn[path],
                             training=self.training)

    def __call__(self, x):
        return self.forward(x)


class Generator(_Network):
    """Shape-preserving U-Net (3x3 conv + batch norm + ReLU, linear 1x1 output)."""

    kind = "generator"

    def __init__(self, spec: GeneratorSpec, seed=0, dtype=None):
        super().__init__(spec, seed, dtype)
        rng = np.random.default_rng(seed)
        for path, cin, cout, k in spec.conv_layers():
            if path.endswith("/out"):
                self._add_conv(rng, path, cin, cout, k, bias=True)
            else:
                self._add_conv(rng, path, cin, cout, k, bias=False)
                self._add_bn(path.replace("conv", "bn"), cout)

    def check_input(self, x):
        if x.ndim != 4 or x.shape[1] != self.spec.in_channels:
            raise InvalidArgumentError(f"expected N x {self.spec.in_channels} x H x W, got {x.shape}")
        div = 2 ** self.spec.levels
        if x.shape[2] % div or x.shape[3] % div:
            raise InvalidArgumentError(f"spatial extent {x.shape[2:]} not divisible by {div}")

    def _module(self, x, name, n=3):
        for j in range(n):
            x = self._conv(x, f"{name}/conv{j}")
            x = F.relu(self._bn_apply(x, f"{name}/bn{j}"))
        return x

    def forward(self, x):
        self.check_input(x)
        skips = []
        for i in range(self.spec.levels):
            x = self._module(x, f"enc{i}")
            skips.append(x)
            x = F.maxpool2d(x, 2, 2)
        x = self._module(x, "mid")
        for i in reversed(range(self.spec.levels)):
            x = F.concat_channels(F.upsample_nearest(x, 2), skips[i])
            x = self._module(x, f"dec{i}", n=2 if i == 0 else 3)
        return self._conv(x, "dec0/out")


class Discriminator(_Network):
    """PatchGAN returning raw (un-squashed) scores for the least-squares loss."""

    kind = "discriminator"

    def __init__(self, spec: DiscriminatorSpec, seed=0, dtype=None):
        super().__init__(spec, seed, dtype)
        rng = np.random.default_rng(seed)
        for idx, (path, cin, cout, k, _) in enumerate(spec.conv_layers()):
            first, last = idx == 0, path == "out"
            self._add_conv(rng, path, cin, cout, k, bias=first or last)
            if not (first or last):
                self._add_bn(path.replace("conv", "bn"), cout)

    def check_input(self, x):
        if x.ndim != 4 or x.shape[1] != self.spec.in_channels:
            raise InvalidArgumentError(f"expected N x {self.spec.in_channels} x H x W, got {x.shape}")
        if min(x.shape[2:]) < self.spec.min_extent():
            raise InvalidArgumentError(
                f"input {x.shape[2:]} smaller than minimum extent {self.spec.min_extent()}")

    def forward(self, x):
        self.check_input(x)
        for idx, (path, _, _, _, stride) in enumerate(self.spec.conv_layers()[:-1]):
            x = self._conv(x, path, stride=stride)
            if idx:
                x = self._bn_apply(x, path.replace("conv", "bn"))
            x = F.leaky_relu(x, LEAKY_SLOPE)
        return self._conv(x, "out")

    def output_extent(self, h, w):
        """Patch-grid extent: each stride-2 layer maps n to ceil(n / 2)."""
        for _ in range(2 * self.spec.blocks):
            h, w = -(-h // 2), -(-w // 2)
        return h, w


def receptive_field(spec: DiscriminatorSpec, size):
    """Input index range ``(lo, hi)`` (inclusive, clipped) seen by each output cell along one axis."""
    geometry = []
    n = size
    for _, _, _, k, s in spec.conv_layers():
        before, _ = F.same_padding(n, k, s)
        geometry.append((k, s, before, n))
        n = F.conv_output_size(n, k, s, "same")
    ranges = []
    for o in range(n):
        lo = hi = o
        for k, s, before, n_in in reversed(geometry):
            lo = max(lo * s - before, 0)
            hi = min(hi * s - before + k - 1, n_in - 1)
        ranges.append((lo, hi))
    return ranges


def receptive_field_size(spec: DiscriminatorSpec):
    """Unclipped receptive-field extent: 1 + sum((k - 1) * product of earlier strides)."""
    total, jump = 1, 1
    for _, _, _, k, s in spec.conv_layers():
        total += (k - 1) * jump
        jump *= s
    return total


def build_generator(spec: GeneratorSpec, rng_seed=0, dtype=None):
    net = Generator(spec, rng_seed, dtype)
    return net, net.params


def build_discriminator(spec: DiscriminatorSpec, rng_seed=0, dtype=None):
    net = Discriminator(spec, rng_seed, dtype)
    return net, net.params


def load_network(directory, dtype=None):
    """Rebuild a generator or discriminator from the spec recorded in its checkpoint."""
    meta, _ = read_manifest(directory)
    kinds = {Generator.kind: (Generator, GeneratorSpec), Discriminator.kind: (Discriminator, DiscriminatorSpec)}
    if meta.get("kind") not in kinds:
        raise CheckpointMismatchError(f"{directory}: unknown network kind {meta.get('kind')!r}")
    cls, spec_cls = kinds[meta["kind"]]
    fields = {k[5:]: int(v) for k, v in meta.items() if k.startswith("spec.")}
    try:
        spec = spec_cls(**fields)
    except TypeError as exc:
        raise CheckpointMismatchError(f"{directory}: {exc}") from None
    net = cls(spec, seed=int(meta.get("seed", 0)), dtype=dtype)
    net.params.load(directory)
    return net.eval()
