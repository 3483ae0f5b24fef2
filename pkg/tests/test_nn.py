import numpy as np
import pytest

from otus.autodiff import Tensor, precision
from otus.autodiff import functional as F
from otus.autodiff.gradcheck import check_directional
from otus.errors import CheckpointMismatchError, InvalidArgumentError
from otus.nn import (
    Discriminator,
    DiscriminatorSpec,
    Generator,
    GeneratorSpec,
    build_discriminator,
    build_generator,
    load_network,
    receptive_field,
    receptive_field_size,
    ssim,
)


def hand_count_unet(gf):
    """Layer-by-layer count: bias-free 3x3 convs + BN (gamma, beta), 1x1 output with bias."""
    w = [gf, 2 * gf, 4 * gf, 8 * gf, 16 * gf]

    def conv(cin, cout):
        return 9 * cin * cout + 2 * cout

    total = 0
    cin = 1
    for f in w[:4]:
        total += conv(cin, f) + 2 * conv(f, f)
        cin = f
    total += conv(w[3], w[4]) + 2 * conv(w[4], w[4])
    below = w[4]
    for i in (3, 2, 1):
        total += conv(below + w[i], w[i]) + 2 * conv(w[i], w[i])
        below = w[i]
    total += conv(below + w[0], w[0]) + conv(w[0], w[0]) + (w[0] + 1)
    return total


@pytest.fixture(scope="module")
def unet8():
    return Generator(GeneratorSpec(8, 9), seed=0)


class TestGenerator:
    def test_shape_preserved(self, unet8):
        out = unet8(Tensor(np.zeros((1, 1, 64, 64))))
        assert out.shape == (1, 1, 64, 64)

    def test_27_convs_and_doubling(self):
        spec = GeneratorSpec(8, 9)
        layers = spec.conv_layers()
        assert len(layers) == 27
        assert spec.widths() == [8, 16, 32, 64, 128]
        assert layers[-1][3] == 1 and layers[-1][2] == 1

    def test_param_count(self, unet8):
        assert hand_count_unet(8) == 737_249
        assert unet8.params.count() == 737_249

    def test_zero_output_layer_gives_constant(self, unet8):
        g = Generator(GeneratorSpec(4, 9), seed=1)
        g.params["dec0/out/kernel"].data[:] = 0
        g.params["dec0/out/bias"].data[:] = 0.25
        x = np.random.default_rng(0).standard_normal((2, 1, 32, 32))
        out = g(Tensor(x)).data
        np.testing.assert_array_equal(out, np.full_like(out, 0.25))

    def test_indivisible_raises(self, unet8):
        with pytest.raises(InvalidArgumentError):
            unet8(Tensor(np.zeros((1, 1, 24, 24))))

    def test_seeded_init_reproducible(self):
        a = Generator(GeneratorSpec(4, 9), seed=5).params.digest()
        b = Generator(GeneratorSpec(4, 9), seed=5).params.digest()
        c = Generator(GeneratorSpec(4, 9), seed=6).params.digest()
        assert a == b != c

    def test_build_returns_params(self):
        net, params = build_generator(GeneratorSpec(4, 9), 0)
        assert params is net.params

    def test_every_parameter_gets_gradient(self):
        g = Generator(GeneratorSpec(4, 9), seed=2)
        x = np.random.default_rng(1).standard_normal((2, 1, 32, 32))
        F.abs_mean(g(Tensor(x)) - Tensor(np.ones((2, 1, 32, 32)))).backward()
        for name, p in g.params.trainable().items():
            assert p.grad is not None and np.any(p.grad != 0), name

    def test_fd_gradients_float32_eval(self):
        """Every parameter tensor of the Gf=8 U-Net on a 1x1x16x16 input, L1 loss."""
        rng = np.random.default_rng(3)
        g32 = Generator(GeneratorSpec(8, 9), seed=3, dtype=np.float32)
        g64 = Generator(GeneratorSpec(8, 9), seed=3, dtype=np.float64)
        for name, p in g32.params.items():
            if name.endswith("kernel"):
                p.data = (rng.standard_normal(p.shape) * np.sqrt(2.0 / (p.size // p.shape[0]))).astype(np.float32)
            g64.params[name].data = p.data.astype(np.float64)
        g32.eval(), g64.eval()
        x = rng.standard_normal((1, 1, 16, 16))
        target = rng.standard_normal((1, 1, 16, 16))

        def make(net, dt):
            def loss():
                with precision(dt):
                    return F.abs_mean(net(Tensor(x, dtype=dt)) - Tensor(target, dtype=dt))
            return loss

        errs = check_directional(make(g32, np.float32), g32.params.trainable(), seed=0,
                                 ref_loss_fn=make(g64, np.float64), ref_params=g64.params.trainable(),
                                 kink_retries=8)
        assert max(errs.values()) < 1e-2


class TestDiscriminator:
    def test_output_extent_64(self):
        d = Discriminator(DiscriminatorSpec(4, 4), seed=0)
        out = d(Tensor(np.zeros((2, 1, 64, 64))))
        assert out.shape == (2, 1, 1, 1) == (2, 1, *d.output_extent(64, 64))

    def test_output_extent_formula(self):
        d = Discriminator(DiscriminatorSpec(2, 2), seed=0).eval()
        for n in (4, 9, 16, 33):
            out = d(Tensor(np.zeros((1, 1, n, n + 3))))
            assert out.shape[2:] == d.output_extent(n, n + 3) == (-(-n // 16), -(-(n + 3) // 16))

    def test_too_small_raises(self):
        with pytest.raises(InvalidArgumentError):
            Discriminator(DiscriminatorSpec(4, 4))(Tensor(np.zeros((1, 1, 32, 32))))

    def test_zero_params_zero_output(self):
        d = Discriminator(DiscriminatorSpec(4, 3), seed=0).eval()
        for p in d.params.trainable().values():
            p.data[:] = 0
        x = np.random.default_rng(0).standard_normal((1, 1, 32, 32))
        np.testing.assert_array_equal(d(Tensor(x)).data, 0)

    def test_channel_sequence(self):
        assert DiscriminatorSpec(256, 4).widths() == [256, 512, 1024, 2048]
        layers = DiscriminatorSpec(256, 4).conv_layers()
        assert [layer[4] for layer in layers[:-1]] == [2] * 8
        assert layers[-1][2:4] == (1, 1)

    def test_first_layer_has_no_bn(self):
        _, params = build_discriminator(DiscriminatorSpec(4, 4), 0)
        assert "block0/bn0/gamma" not in params
        assert "block0/bn1/gamma" in params

    def test_patch_locality(self):
        spec = DiscriminatorSpec(2, 2)
        d = Discriminator(spec, seed=0).eval()
        rng = np.random.default_rng(0)
        for p in d.params.trainable().values():
            p.data = rng.standard_normal(p.shape).astype(np.float32)
        n = 64
        x = rng.standard_normal((1, 1, n, n))
        base = d(Tensor(x)).data[0, 0]
        fields = receptive_field(spec, n)
        for i, j in [(0, 0), (20, 45), (63, 10)]:
            y = x.copy()
            y[0, 0, i, j] += 5.0
            changed = d(Tensor(y)).data[0, 0] != base
            covered = np.outer([lo <= i <= hi for lo, hi in fields], [lo <= j <= hi for lo, hi in fields])
            assert not np.any(changed & ~covered)
            assert np.any(changed)

    def test_receptive_field_size(self):
        # 3x3 kernels with stride 2: 1 + 2 * (1 + 2 + 4 + 8) for two blocks
        assert receptive_field_size(DiscriminatorSpec(2, 2)) == 31


class TestSsim:
    def test_identity(self):
        x = Tensor(np.random.default_rng(0).random((1, 1, 16, 16)))
        assert ssim(x, x).item() == pytest.approx(1.0, abs=1e-6)

    def test_checkerboard_inverse(self):
        cb = (np.indices((16, 16)).sum(axis=0) % 2).astype(np.float64)[None, None]
        assert ssim(Tensor(cb), Tensor(1.0 - cb), data_range=1.0).item() < 0.1

    def test_constants_closed_form(self):
        a = Tensor(np.zeros((1, 1, 12, 12)), dtype=np.float64)
        b = Tensor(np.full((1, 1, 12, 12), 2.0), dtype=np.float64)
        c1 = (0.01 * 2.0) ** 2
        assert ssim(a, b, data_range=2.0).item() == pytest.approx(c1 / (4.0 + c1), rel=1e-9)

    def test_shape_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            ssim(Tensor(np.zeros((1, 1, 12, 12))), Tensor(np.zeros((1, 1, 12, 13))))

    def test_range(self):
        rng = np.random.default_rng(4)
        for _ in range(5):
            a, b = rng.random((1, 1, 16, 16)), rng.random((1, 1, 16, 16))
            v = ssim(Tensor(a), Tensor(b)).item()
            assert -1.0 < v <= 1.0


class TestCheckpoint:
    def test_roundtrip_bit_exact(self, tmp_path):
        g = Generator(GeneratorSpec(4, 9), seed=9)
        g.params.save(tmp_path / "g", epoch=3)
        h = Generator(GeneratorSpec(4, 9), seed=0)
        h.params.load(tmp_path / "g")
        assert h.params.digest() == g.params.digest()
        assert h.params.meta["epoch"] == 3

    def test_spec_mismatch_refused(self, tmp_path):
        Generator(GeneratorSpec(4, 9)).params.save(tmp_path / "g")
        with pytest.raises(CheckpointMismatchError):
            Generator(GeneratorSpec(8, 9)).params.load(tmp_path / "g")

    def test_load_network_rebuilds(self, tmp_path):
        d = Discriminator(DiscriminatorSpec(2, 3), seed=4)
        d.params.save(tmp_path / "d")
        e = load_network(tmp_path / "d")
        assert isinstance(e, Discriminator) and e.spec == d.spec
        assert e.params.digest() == d.params.digest()
