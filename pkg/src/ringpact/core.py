"""Shared domain types for 2-D ring-array photoacoustic imaging.

Conventions used throughout the package:

* All quantities are SI (meters, seconds, Hz, m/s).
* The transducer ring is centered on the origin; element ``i`` sits at
  angle ``2*pi*i/num_elements``.
* Images are stored row-major with shape ``(ny, nx)``; ``values[iy, ix]``
  is the pixel whose center is ``grid.pixel_center(ix, iy)``, and ``iy``
  increases with +y.
* All types here are immutable after construction and safe to share
  across workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class RingGeometry:
    """Full-ring transducer array of ``num_elements`` point-like elements.

    Element ``i`` is located at ``radius_m * (cos a_i, sin a_i)`` with
    ``a_i = 2*pi*i / num_elements``.
    """

    radius_m: float
    num_elements: int

    def __post_init__(self):
        if self.radius_m <= 0:
            raise ValueError(f"radius_m must be > 0, got {self.radius_m}")
        if self.num_elements < 1:
            raise ValueError(f"num_elements must be >= 1, got {self.num_elements}")

    @property
    def element_angles(self) -> np.ndarray:
        """Angles of all elements, uniform on [0, 2*pi)."""
        return 2.0 * np.pi * np.arange(self.num_elements) / self.num_elements

    @property
    def element_positions(self) -> np.ndarray:
        """Element centers, shape (num_elements, 2)."""
        a = self.element_angles
        return self.radius_m * np.stack([np.cos(a), np.sin(a)], axis=1)


@dataclass(frozen=True)
class Medium:
    """Homogeneous acoustic medium."""

    sos_mps: float
    grueneisen: float = 1.0  # folded into the reconstructed amplitude

    def __post_init__(self):
        if self.sos_mps <= 0:
            raise ValueError(f"sos_mps must be > 0, got {self.sos_mps}")
        if self.grueneisen <= 0:
            raise ValueError(f"grueneisen must be > 0, got {self.grueneisen}")


@dataclass(frozen=True)
class Acquisition:
    """Temporal sampling of the received traces."""

    sample_rate_hz: float
    num_samples: int
    t_start_s: float = 0.0

    def __post_init__(self):
        if self.sample_rate_hz <= 0:
            raise ValueError(f"sample_rate_hz must be > 0, got {self.sample_rate_hz}")
        if self.num_samples < 3:
            # the temporal central difference needs both neighbours
            raise ValueError(f"num_samples must be >= 3, got {self.num_samples}")
        if self.t_start_s < 0:
            raise ValueError(f"t_start_s must be >= 0, got {self.t_start_s}")

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate_hz

    @property
    def times(self) -> np.ndarray:
        """Sample times, shape (num_samples,)."""
        return self.t_start_s + np.arange(self.num_samples) / self.sample_rate_hz


@dataclass(frozen=True)
class ImageGrid:
    """Square-pixel reconstruction grid.

    ``center`` is the physical location of the grid center (defaults to the
    ring center at the origin).  Pixel (0, 0) is the lower-left pixel; its
    center sits at ``center - ((nx-1)/2*dx, (ny-1)/2*dx)``.
    """

    nx: int
    ny: int
    pixel_size_m: float
    center: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError(f"grid must have >= 1 pixel per axis, got {self.nx}x{self.ny}")
        if self.pixel_size_m <= 0:
            raise ValueError(f"pixel_size_m must be > 0, got {self.pixel_size_m}")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    @property
    def shape(self) -> tuple[int, int]:
        """Array shape of an image on this grid: (ny, nx)."""
        return (self.ny, self.nx)

    @property
    def num_pixels(self) -> int:
        return self.nx * self.ny

    @property
    def extent_m(self) -> tuple[float, float]:
        """Physical size of the full pixel area, (width, height)."""
        return (self.nx * self.pixel_size_m, self.ny * self.pixel_size_m)

    @property
    def roi_radius_m(self) -> float:
        """Half-diagonal of the physical grid extent (circumscribing radius)."""
        w, h = self.extent_m
        return 0.5 * math.hypot(w, h)

    @property
    def origin(self) -> tuple[float, float]:
        """Physical coordinates of the center of pixel (0, 0)."""
        return (
            self.center[0] - 0.5 * (self.nx - 1) * self.pixel_size_m,
            self.center[1] - 0.5 * (self.ny - 1) * self.pixel_size_m,
        )

    def pixel_center(self, ix: int, iy: int) -> tuple[float, float]:
        """Physical coordinates of the center of pixel (ix, iy)."""
        if not (0 <= ix < self.nx and 0 <= iy < self.ny):
            raise ValueError(f"pixel index ({ix}, {iy}) out of range for {self.nx}x{self.ny} grid")
        ox, oy = self.origin
        return (ox + ix * self.pixel_size_m, oy + iy * self.pixel_size_m)

    def nearest_pixel(self, x: float, y: float) -> tuple[int, int]:
        """Index of the pixel whose center is closest to (x, y), clipped to the grid."""
        ox, oy = self.origin
        ix = int(round((x - ox) / self.pixel_size_m))
        iy = int(round((y - oy) / self.pixel_size_m))
        return (min(max(ix, 0), self.nx - 1), min(max(iy, 0), self.ny - 1))

    def pixel_coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Meshgrid of pixel-center coordinates, two (ny, nx) arrays (X, Y)."""
        ox, oy = self.origin
        xs = ox + np.arange(self.nx) * self.pixel_size_m
        ys = oy + np.arange(self.ny) * self.pixel_size_m
        return np.meshgrid(xs, ys)


@dataclass(frozen=True)
class Sinogram:
    """Stacked RF traces: one row per transducer element.

    ``data`` has shape ``(num_elements, num_samples)`` and row ``i``
    belongs to the element at ``geometry.element_angles[i]``.
    """

    geometry: RingGeometry
    acquisition: Acquisition
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        expected = (self.geometry.num_elements, self.acquisition.num_samples)
        if data.shape != expected:
            raise ValueError(f"sinogram data shape {data.shape} != {expected}")
        if not np.all(np.isfinite(data)):
            raise ValueError("sinogram data contains non-finite values")
        object.__setattr__(self, "data", data)

    @property
    def num_elements(self) -> int:
        return self.geometry.num_elements

    @property
    def num_samples(self) -> int:
        return self.acquisition.num_samples


@dataclass(frozen=True)
class HeatImage:
    """Initial-heat image on a grid; shape (ny, nx)."""

    grid: ImageGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != self.grid.shape:
            raise ValueError(f"image shape {values.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("image contains non-finite values")
        object.__setattr__(self, "values", values)


def subsample_projections(sino: Sinogram, k: int) -> Sinogram:
    """Keep ``k`` equally-spaced elements (stride ``num_elements/k``, phase 0).

    ``k`` must divide the element count; non-uniform sparse patterns are
    out of scope.  The returned geometry has ``k`` elements and its angles
    coincide with the retained elements of the input.
    """
    n = sino.num_elements
    if not (1 <= k <= n):
        raise ValueError(f"k must be in [1, {n}], got {k}")
    if n % k != 0:
        raise ValueError(f"k={k} does not divide num_elements={n}")
    stride = n // k
    geom = RingGeometry(radius_m=sino.geometry.radius_m, num_elements=k)
    return Sinogram(geometry=geom, acquisition=sino.acquisition, data=sino.data[::stride].copy())
