import math

import numpy as np
import pytest

from ringpact.metrics import Rect, RegionSpec, cnr, normalize01, psnr, snr, ssim


# -- independent oracles: scalar loops, no shared code with the package --


def ssim_oracle(f, gt, c1=0.01**2, c2=0.03**2):
    n = f.size
    mu_f = sum(f.ravel()) / n
    mu_g = sum(gt.ravel()) / n
    var_f = sum((v - mu_f) ** 2 for v in f.ravel()) / n
    var_g = sum((v - mu_g) ** 2 for v in gt.ravel()) / n
    cov = sum((a - mu_f) * (b - mu_g) for a, b in zip(f.ravel(), gt.ravel())) / n
    return ((2 * mu_f * mu_g + c1) * (2 * cov + c2)) / (
        (mu_f**2 + mu_g**2 + c1) * (var_f + var_g + c2)
    )


def psnr_oracle(f, gt):
    mse = sum((a - b) ** 2 for a, b in zip(f.ravel(), gt.ravel())) / f.size
    peak = max(max(f.ravel()), max(gt.ravel()))
    return 10 * math.log10(peak**2 / mse)


def region_stats_oracle(img, rect):
    vals = [img[iy, ix] for iy in range(rect.iy0, rect.iy1) for ix in range(rect.ix0, rect.ix1)]
    mean = sum(vals) / len(vals)
    std = math.sqrt(sum((v - mean) ** 2 for v in vals) / len(vals))
    return mean, std


REGIONS = RegionSpec(signal_rect=Rect(1, 1, 4, 4), background_rect=Rect(5, 5, 8, 8))


class TestOracles:
    def test_random_pairs_match_oracles(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            f = rng.uniform(0, 1, (8, 8))
            gt = rng.uniform(0, 1, (8, 8))
            assert ssim(f, gt) == pytest.approx(ssim_oracle(f, gt), abs=1e-10)
            assert psnr(f, gt) == pytest.approx(psnr_oracle(f, gt), abs=1e-10)
            sm, _ = region_stats_oracle(f, REGIONS.signal_rect)
            bm, bs = region_stats_oracle(f, REGIONS.background_rect)
            assert snr(f, REGIONS) == pytest.approx(20 * math.log10(abs(sm) / bs), abs=1e-10)
            assert cnr(f, REGIONS) == pytest.approx(
                20 * math.log10(abs(sm - bm) / bs), abs=1e-10
            )


class TestSsim:
    def test_self_similarity_is_one(self):
        rng = np.random.default_rng(3)
        f = rng.uniform(0, 1, (16, 16))
        assert ssim(f, f) == pytest.approx(1.0, abs=1e-14)

    def test_symmetry(self):
        rng = np.random.default_rng(4)
        f, g = rng.uniform(0, 1, (8, 8)), rng.uniform(0, 1, (8, 8))
        assert ssim(f, g) == ssim(g, f)

    def test_below_one_for_different_images(self):
        rng = np.random.default_rng(5)
        f = rng.uniform(0, 1, (8, 8))
        g = f + rng.normal(0, 0.1, (8, 8))
        assert ssim(f, g) < 1.0

    def test_raw_constant_mode_preserves_ordering(self):
        rng = np.random.default_rng(6)
        gt = rng.uniform(0, 1, (16, 16))
        near = gt + rng.normal(0, 0.02, gt.shape)
        far = gt + rng.normal(0, 0.3, gt.shape)
        for raw in (False, True):
            assert ssim(near, gt, raw_constants=raw) > ssim(far, gt, raw_constants=raw)

    def test_windowed_variant_in_range(self):
        rng = np.random.default_rng(7)
        f = rng.uniform(0, 1, (32, 32))
        g = f + rng.normal(0, 0.05, f.shape)
        v = ssim(f, g, windowed=True)
        assert -1.0 <= v <= 1.0
        assert ssim(f, f, windowed=True) == pytest.approx(1.0, abs=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            ssim(np.zeros((4, 4)), np.zeros((4, 5)))


class TestPsnr:
    def test_worked_example_20db(self):
        f = np.full((8, 8), 0.9)
        gt = np.ones((8, 8))
        assert psnr(f, gt) == pytest.approx(20.0, abs=1e-12)

    def test_identical_is_infinite(self):
        f = np.linspace(0, 1, 16).reshape(4, 4)
        assert psnr(f, f) == math.inf

    def test_noise_monotonicity(self):
        rng = np.random.default_rng(8)
        gt = rng.uniform(0, 1, (32, 32))
        values = []
        for sigma in (0.01, 0.05, 0.2):
            noisy = gt + rng.normal(0, sigma, gt.shape)
            values.append(psnr(noisy, gt))
        assert values[0] > values[1] > values[2]

    def test_non_square_uses_total_pixels(self):
        f = np.full((2, 8), 0.9)
        gt = np.ones((2, 8))
        assert psnr(f, gt) == pytest.approx(20.0, abs=1e-12)


class TestSnrCnr:
    def test_snr_worked_example_20db(self):
        img = np.zeros((10, 10))
        img[1:4, 1:4] = 10.0
        bg = np.array([[1, -1, 1], [-1, 1, -1], [-1, 1, -1]], dtype=float)
        img[5:8, 5:8] = (bg - bg.mean()) / bg.std()  # exact mean 0, std 1
        assert snr(img, REGIONS) == pytest.approx(20.0, abs=1e-12)

    def test_cnr_worked_example_20db(self):
        img = np.zeros((10, 10))
        img[1:4, 1:4] = 11.0
        bg = np.array([[2, 0, 2], [0, 2, 0], [2, 0, 2]], dtype=float)
        bg = (bg - bg.mean()) / bg.std() + 1.0  # mean 1, std 1
        img[5:8, 5:8] = bg
        assert cnr(img, REGIONS) == pytest.approx(20.0, abs=1e-12)

    def test_snr_scale_invariant(self):
        rng = np.random.default_rng(9)
        img = rng.uniform(0.1, 1, (10, 10))
        assert snr(3.7 * img, REGIONS) == pytest.approx(snr(img, REGIONS), abs=1e-10)

    def test_cnr_offset_invariant(self):
        rng = np.random.default_rng(10)
        img = rng.uniform(0, 1, (10, 10))
        assert cnr(img + 5.0, REGIONS) == pytest.approx(cnr(img, REGIONS), abs=1e-9)

    def test_zero_background_std_sentinel(self):
        img = np.zeros((10, 10))
        img[1:4, 1:4] = 1.0
        assert snr(img, REGIONS) == math.inf
        assert cnr(img, REGIONS) == math.inf

    def test_equal_means_sentinel(self):
        rng = np.random.default_rng(11)
        img = np.zeros((10, 10))
        bg = rng.uniform(0, 1, (3, 3))
        img[5:8, 5:8] = bg
        img[1:4, 1:4] = bg.mean()
        assert cnr(img, REGIONS) == -math.inf

    def test_negative_signal_mean_warns(self):
        img = np.zeros((10, 10))
        img[1:4, 1:4] = -10.0
        bg = np.array([[1, -1, 1], [-1, 1, -1], [1, -1, 1]], dtype=float)
        img[5:8, 5:8] = (bg - bg.mean()) / bg.std()
        with pytest.warns(UserWarning, match="negative"):
            v = snr(img, REGIONS)
        assert v == pytest.approx(20.0, abs=1e-9)


class TestRegions:
    def test_overlap_rejected(self):
        with pytest.raises(ValueError):
            RegionSpec(signal_rect=Rect(0, 0, 4, 4), background_rect=Rect(3, 3, 6, 6))

    def test_too_small_rejected(self):
        with pytest.raises(ValueError):
            RegionSpec(signal_rect=Rect(0, 0, 1, 3), background_rect=Rect(4, 4, 8, 8))

    def test_out_of_bounds_rejected(self):
        spec = RegionSpec(signal_rect=Rect(0, 0, 4, 4), background_rect=Rect(6, 6, 12, 12))
        with pytest.raises(ValueError):
            snr(np.zeros((10, 10)), spec)


class TestNormalize:
    def test_range(self):
        rng = np.random.default_rng(12)
        v = normalize01(rng.normal(5, 3, (8, 8)))
        assert v.min() == 0.0 and v.max() == 1.0

    def test_constant_maps_to_zero(self):
        assert np.array_equal(normalize01(np.full((4, 4), 7.0)), np.zeros((4, 4)))
