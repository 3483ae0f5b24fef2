import numpy as np
import pytest
from scipy.stats import norm

from otus import metrics as M
from otus.errors import DegenerateVarianceError, InvalidArgumentError


@pytest.fixture
def halves():
    ra = np.zeros((100, 200), dtype=bool)
    ra[:, :100] = True
    return M.RoiMask(ra, ~ra)


def two_region(mask, a, b):
    img = np.zeros(mask.shape)
    img[mask.ra] = a
    img[mask.rb] = b
    return img


class TestMask:
    def test_overlap_rejected(self):
        ra = np.ones((4, 4), dtype=bool)
        with pytest.raises(InvalidArgumentError):
            M.RoiMask(ra, ra)

    def test_empty_rejected(self):
        with pytest.raises(InvalidArgumentError):
            M.RoiMask(np.zeros((4, 4), bool), np.ones((4, 4), bool))

    def test_text_roundtrip(self, tmp_path):
        mask = M.RoiMask.from_indices((3, 5), [0, 1, 7], [14])
        M.write_mask(tmp_path / "m.mask", mask)
        text = (tmp_path / "m.mask").read_text()
        assert text == "MASK v1 3 5\naa...\n..a..\n....b\n"
        back = M.read_mask(tmp_path / "m.mask")
        np.testing.assert_array_equal(back.ra, mask.ra)
        np.testing.assert_array_equal(back.rb, mask.rb)

    @pytest.mark.parametrize("text", ["MASK v1 2 2\nab\n", "MASK v1 1 2\nax\n", "MASK v2 1 2\nab\n"])
    def test_bad_text(self, text):
        with pytest.raises(InvalidArgumentError):
            M.RoiMask.from_text(text)

    def test_index_bounds(self):
        with pytest.raises(InvalidArgumentError):
            M.RoiMask.from_indices((2, 2), [4], [0])

    def test_shape_mismatch(self, halves):
        with pytest.raises(InvalidArgumentError):
            M.cr(np.zeros((10, 10)), halves)


class TestContrast:
    def test_cr_two_levels(self, halves):
        assert M.cr(two_region(halves, -40.0, -10.0), halves) == 30.0

    def test_cnr_hand(self, halves):
        img = two_region(halves, 0.0, 0.0)
        img[halves.ra] = np.tile([0.0, 2.0], halves.ra.sum() // 2)  # mean 1, var 1
        img[halves.rb] = 5.0
        assert M.cnr(img, halves) == pytest.approx(4.0)

    def test_cnr_constant_raises(self, halves):
        with pytest.raises(DegenerateVarianceError):
            M.cnr(two_region(halves, 1.0, 2.0), halves)

    def test_linear_mode(self, halves):
        img = two_region(halves, -20.0, 0.0)
        assert M.cr(img, halves, mode="linear") == pytest.approx(0.9)

    def test_unknown_mode(self, halves):
        with pytest.raises(InvalidArgumentError):
            M.cr(np.zeros(halves.shape), halves, mode="log")

    def test_offset_invariance_exact(self, halves):
        rng = np.random.default_rng(0)
        img = rng.integers(-60, 0, halves.shape).astype(np.float64)
        for shift in (-7.0, 3.0, 16.0):
            assert M.cr(img + shift, halves) == M.cr(img, halves)
            assert M.cnr(img + shift, halves) == M.cnr(img, halves)

    def test_scale_invariance_cnr(self, halves):
        rng = np.random.default_rng(1)
        img = rng.integers(-60, 0, halves.shape).astype(np.float64)
        assert M.cnr(4.0 * img, halves) == M.cnr(img, halves)
        assert M.cr(4.0 * img, halves) == 4.0 * M.cr(img, halves)
        assert M.cnr(4.0 * img - 9.0, halves) == M.cnr(img, halves)

    def test_general_affine_close(self, halves):
        img = np.random.default_rng(2).standard_normal(halves.shape) * 6 - 30
        assert M.cnr(1.7 * img + 0.3, halves) == pytest.approx(M.cnr(img, halves), rel=1e-12)
        assert M.cr(img + 5.0, halves) == pytest.approx(M.cr(img, halves), rel=1e-12)

    def test_gcnr_monotone_remap(self, halves):
        rng = np.random.default_rng(3)
        img = rng.standard_normal(halves.shape)
        img[halves.rb] += 1.0
        assert M.gcnr(2.0 * img + 8.0, halves) == M.gcnr(img, halves)


class TestGcnr:
    def test_disjoint_support_is_one(self, halves):
        rng = np.random.default_rng(2)
        img = np.zeros(halves.shape)
        img[halves.ra] = rng.uniform(-50, -30, halves.ra.sum())
        img[halves.rb] = rng.uniform(-20, 0, halves.rb.sum())
        assert M.gcnr(img, halves) == 1.0

    def test_identical_distributions_small(self, halves):
        rng = np.random.default_rng(3)
        img = rng.standard_normal(halves.shape)
        assert M.gcnr(img, halves) <= 0.05

    def test_gaussian_overlap(self, halves):
        rng = np.random.default_rng(4)
        d = 1.5
        img = rng.standard_normal(halves.shape)
        img[halves.rb] += d
        expected = 1.0 - 2.0 * norm.cdf(-d / 2.0)
        assert M.gcnr(img, halves) == pytest.approx(expected, abs=0.02)

    def test_too_few_pixels(self):
        mask = M.RoiMask.from_indices((4, 4), [0, 1], list(range(4, 16)))
        with pytest.raises(InvalidArgumentError):
            M.gcnr(np.arange(16.0).reshape(4, 4), mask)

    def test_constant_image(self, halves):
        assert M.gcnr(np.zeros(halves.shape), halves) == 0.0

    def test_bounded(self, halves):
        rng = np.random.default_rng(5)
        for _ in range(5):
            v = M.gcnr(rng.standard_normal(halves.shape) * rng.uniform(0.5, 3), halves, bins=int(rng.integers(5, 200)))
            assert 0.0 <= v <= 1.0


class TestReport:
    def test_columns_and_roundtrip(self, halves, tmp_path):
        rng = np.random.default_rng(6)
        imgs = [rng.standard_normal(halves.shape) - 30 for _ in range(2)]
        text = M.report(imgs, halves, "input", recon_ms=[1.0, 2.0])
        assert text.splitlines()[0] == ",".join(M.REPORT_COLUMNS)
        (tmp_path / "r.csv").write_text(text)
        rows = M.read_report(tmp_path / "r.csv")
        assert [r["frame_id"] for r in rows] == ["0", "1"]
        assert rows[1]["recon_ms"] == 2.0
        assert rows[0]["cnr"] == pytest.approx(M.cnr(imgs[0], halves), abs=1e-6)

    def test_empty_is_header(self, halves):
        assert M.report([], halves, "x") == ",".join(M.REPORT_COLUMNS) + "\n"

    def test_non_strict_nan(self, halves):
        row = M.all_metrics(two_region(halves, 1.0, 2.0), halves, strict=False)
        assert np.isnan(row["cnr"]) and row["cr_db"] == 1.0

    def test_summary_mean(self):
        rows = [{"cr_db": 1.0, "cnr": 2.0, "gcnr": 0.5, "recon_ms": 1.0},
                {"cr_db": 3.0, "cnr": 4.0, "gcnr": 0.7, "recon_ms": 3.0}]
        s = M.summary_row(rows, "out")
        assert s["cr_db"] == 2.0 and s["gcnr"] == pytest.approx(0.6) and s["frame_id"] == "mean"
