"""Image-quality metrics: global SSIM, PSNR, and region-based SNR/CNR.

SSIM and PSNR are full-reference metrics against a ground truth and assume
both images share one dynamic range; the comparison pipeline min-max
normalizes reconstructions to [0, 1] first (see :func:`normalize01`).
SNR and CNR need no ground truth, only a signal and a background region,
and are invariant to positive rescaling of the image.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import HeatImage


def _values(img) -> np.ndarray:
    if isinstance(img, HeatImage):
        return img.values
    return np.asarray(img, dtype=np.float64)


def normalize01(img) -> np.ndarray:
    """Min-max normalize to [0, 1]; constant images map to all zeros."""
    v = _values(img)
    lo, hi = v.min(), v.max()
    if hi <= lo:
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)


@dataclass(frozen=True)
class Rect:
    """Half-open pixel rectangle [ix0, ix1) x [iy0, iy1)."""

    ix0: int
    iy0: int
    ix1: int
    iy1: int

    def __post_init__(self):
        if self.ix1 <= self.ix0 or self.iy1 <= self.iy0:
            raise ValueError(f"empty rectangle {self}")

    @property
    def num_pixels(self) -> int:
        return (self.ix1 - self.ix0) * (self.iy1 - self.iy0)

    def overlaps(self, other: "Rect") -> bool:
        return not (
            self.ix1 <= other.ix0
            or other.ix1 <= self.ix0
            or self.iy1 <= other.iy0
            or other.iy1 <= self.iy0
        )

    def extract(self, values: np.ndarray) -> np.ndarray:
        return values[self.iy0 : self.iy1, self.ix0 : self.ix1]


@dataclass(frozen=True)
class RegionSpec:
    """Signal and background rectangles for SNR/CNR."""

    signal_rect: Rect
    background_rect: Rect

    def __post_init__(self):
        for name, r in (("signal", self.signal_rect), ("background", self.background_rect)):
            if r.num_pixels < 4:
                raise ValueError(f"{name} region must cover >= 4 pixels, has {r.num_pixels}")
        if self.signal_rect.overlaps(self.background_rect):
            raise ValueError("signal and background regions overlap")

    def validate_shape(self, shape: tuple[int, int]) -> None:
        ny, nx = shape
        for name, r in (("signal", self.signal_rect), ("background", self.background_rect)):
            if not (0 <= r.ix0 and r.ix1 <= nx and 0 <= r.iy0 and r.iy1 <= ny):
                raise ValueError(f"{name} region {r} exceeds image shape {shape}")


def ssim(f, gt, *, raw_constants: bool = False, windowed: bool = False) -> float:
    """Structural similarity between ``f`` and ``gt``.

    By default this is the global single-window form: one mean/variance/
    cross-covariance triple over the whole image.  Stabilizers follow the
    standard convention ``C1 = (K1*L)**2``, ``C2 = (K2*L)**2`` with
    ``K1 = 0.01``, ``K2 = 0.03`` and dynamic range ``L = 1``;
    ``raw_constants=True`` instead uses C1 = 0.01, C2 = 0.03 literally.
    ``windowed=True`` computes an 11x11 Gaussian sliding-window SSIM map
    and returns its mean (cross-check variant only).
    """
    fv, gv = _values(f), _values(gt)
    if fv.shape != gv.shape:
        raise ValueError(f"shape mismatch: {fv.shape} vs {gv.shape}")
    if raw_constants:
        c1, c2 = 0.01, 0.03
    else:
        c1, c2 = 0.01**2, 0.03**2
    if windowed:
        return _windowed_ssim(fv, gv, c1, c2)
    mu_f, mu_g = fv.mean(), gv.mean()
    var_f, var_g = fv.var(), gv.var()
    cov = ((fv - mu_f) * (gv - mu_g)).mean()
    num = (2 * mu_f * mu_g + c1) * (2 * cov + c2)
    den = (mu_f**2 + mu_g**2 + c1) * (var_f + var_g + c2)
    return float(num / den)


def _windowed_ssim(fv, gv, c1, c2, sigma=1.5):
    from scipy.ndimage import gaussian_filter

    def g(x):
        return gaussian_filter(x, sigma=sigma, truncate=3.5, mode="reflect")

    mu_f, mu_g = g(fv), g(gv)
    var_f = g(fv * fv) - mu_f**2
    var_g = g(gv * gv) - mu_g**2
    cov = g(fv * gv) - mu_f * mu_g
    s = ((2 * mu_f * mu_g + c1) * (2 * cov + c2)) / (
        (mu_f**2 + mu_g**2 + c1) * (var_f + var_g + c2)
    )
    return float(s.mean())


def psnr(f, gt) -> float:
    """Peak signal-to-noise ratio in dB; +inf when the images are identical.

    The peak is the max over both images; MSE averages over all pixels.
    """
    fv, gv = _values(f), _values(gt)
    if fv.shape != gv.shape:
        raise ValueError(f"shape mismatch: {fv.shape} vs {gv.shape}")
    mse = np.mean((fv - gv) ** 2)
    if mse == 0:
        return math.inf
    i_max = max(fv.max(), gv.max())
    return float(10.0 * np.log10(i_max**2 / mse))


def snr(img, regions: RegionSpec) -> float:
    """Region SNR in dB: 20*log10(mean(signal) / std(background))."""
    v = _values(img)
    regions.validate_shape(v.shape)
    sig = regions.signal_rect.extract(v).mean()
    bg_std = regions.background_rect.extract(v).std()
    if bg_std == 0:
        return math.inf
    if sig < 0:
        warnings.warn(f"signal region mean is negative ({sig:.4g}); using its magnitude")
        sig = -sig
    if sig == 0:
        return -math.inf
    return float(20.0 * np.log10(sig / bg_std))


def cnr(img, regions: RegionSpec) -> float:
    """Region CNR in dB: 20*log10(|mean(signal) - mean(background)| / std(background))."""
    v = _values(img)
    regions.validate_shape(v.shape)
    diff = abs(regions.signal_rect.extract(v).mean() - regions.background_rect.extract(v).mean())
    bg_std = regions.background_rect.extract(v).std()
    if bg_std == 0:
        return math.inf
    if diff == 0:
        return -math.inf
    return float(20.0 * np.log10(diff / bg_std))
