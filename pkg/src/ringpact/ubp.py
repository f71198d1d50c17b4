"""Universal back-projection reconstruction for the ring array.

Per pixel, each element contributes the filtered trace value

    b(t) = 2 p(t) - 2 t dp/dt(t)

sampled (linearly interpolated) at the time of flight, weighted by
cos(theta)/distance^2 where theta is the angle between the element->pixel
direction and the inward element normal.  Negative output pixels are
clamped to zero by default; the overall scale is arbitrary and normalized
away before metric computation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import HeatImage, ImageGrid, Medium, Sinogram


@dataclass(frozen=True)
class UbpConfig:
    clamp_negatives: bool = True
    solid_angle: float = 4.0 * math.pi  # ring array with cylindrical geometry

    def __post_init__(self):
        if self.solid_angle <= 0:
            raise ValueError(f"solid_angle must be > 0, got {self.solid_angle}")


def ubp_reconstruct(
    sino: Sinogram, grid: ImageGrid, medium: Medium, cfg: UbpConfig = UbpConfig()
) -> HeatImage:
    """Back-project the traces onto the grid."""
    if sino.num_samples < 3:
        raise ValueError("UBP needs at least 3 time samples")
    acq = sino.acquisition
    times = acq.times
    dt = acq.dt
    c = medium.sos_mps

    # derivative: central differences inside, one-sided at the ends
    dpdt = np.gradient(sino.data, dt, axis=1)
    b = 2.0 * sino.data - 2.0 * times[None, :] * dpdt

    X, Y = grid.pixel_coords()
    positions = sino.geometry.element_positions
    rt = sino.geometry.radius_m
    nt = sino.num_samples
    acc = np.zeros(grid.shape)
    for e in range(sino.num_elements):
        ex, ey = positions[e]
        dx = X - ex
        dy = Y - ey
        dist = np.hypot(dx, dy)
        u = (dist / c - acq.t_start_s) * acq.sample_rate_hz  # fractional sample
        valid = (u >= 0) & (u <= nt - 1) & (dist > 0)
        i0 = np.clip(np.floor(u).astype(np.int64), 0, nt - 2)
        frac = np.clip(u - i0, 0.0, 1.0)
        bi = np.where(valid, (1 - frac) * b[e, i0] + frac * b[e, i0 + 1], 0.0)
        # cos(theta): element->pixel direction against the inward normal -pos/rt
        cos_t = (-(X - ex) * ex - (Y - ey) * ey) / (rt * np.maximum(dist, 1e-300))
        acc += bi * cos_t / np.maximum(dist, 1e-300) ** 2

    # nominal element area: arc length per element times unit elevation
    d_s = 2.0 * math.pi * rt / sino.num_elements
    out = acc * d_s / cfg.solid_angle
    if cfg.clamp_negatives:
        out = np.maximum(out, 0.0)
    return HeatImage(grid=grid, values=out)
