"""Synthetic initial-heat phantoms and in-silico sinogram synthesis.

Three phantom families are supported: filled discs ("spheres" imaged in
cross section), wire polylines (constant-width capsules), and procedurally
generated branching vessels (a random binary tree of tapered capsule
segments grown from a seed, so experiments are repeatable).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import Acquisition, HeatImage, ImageGrid, Medium, RingGeometry, Sinogram
from .forward import ArcSamplingConfig, ForwardOperator

PHANTOM_KINDS = ("vessel_branches", "spheres", "wire_polyline")


@dataclass(frozen=True)
class Disc:
    center: tuple[float, float]
    radius: float
    amplitude: float


@dataclass(frozen=True)
class Capsule:
    """Line segment swept with a linearly tapering radius."""

    p0: tuple[float, float]
    p1: tuple[float, float]
    width0: float
    width1: float
    amplitude: float


@dataclass(frozen=True)
class PhantomSpec:
    """Declarative phantom description; see the module docstring.

    For ``vessel_branches`` the capsule segments are derived from ``seed``
    and the vessel generation parameters; for the other kinds they are
    given explicitly.
    """

    kind: str
    discs: tuple[Disc, ...] = ()
    capsules: tuple[Capsule, ...] = ()
    seed: int = 0
    vessel_depth: int = 4
    vessel_trunk_width_frac: float = 0.035  # of the ROI radius

    def __post_init__(self):
        if self.kind not in PHANTOM_KINDS:
            raise ValueError(f"unknown phantom kind {self.kind!r}; expected one of {PHANTOM_KINDS}")
        for d in self.discs:
            _check_amplitude(d.amplitude)
        for c in self.capsules:
            _check_amplitude(c.amplitude)

    @staticmethod
    def sphere_phantom(spheres: list[tuple[tuple[float, float], float, float]]) -> "PhantomSpec":
        """Spheres given as (center, radius, amplitude)."""
        return PhantomSpec(
            kind="spheres", discs=tuple(Disc(tuple(c), r, a) for c, r, a in spheres)
        )

    @staticmethod
    def wire_phantom(
        polylines: list[tuple[list[tuple[float, float]], float, float]]
    ) -> "PhantomSpec":
        """Wires given as (list of points, width, amplitude)."""
        caps = []
        for pts, width, amp in polylines:
            for a, b in zip(pts[:-1], pts[1:]):
                caps.append(Capsule(tuple(a), tuple(b), width, width, amp))
        return PhantomSpec(kind="wire_polyline", capsules=tuple(caps))

    @staticmethod
    def vessel_phantom(seed: int = 7, depth: int = 4, trunk_width_frac: float = 0.035) -> "PhantomSpec":
        return PhantomSpec(
            kind="vessel_branches",
            seed=seed,
            vessel_depth=depth,
            vessel_trunk_width_frac=trunk_width_frac,
        )

    def structures(self, roi_radius_m: float) -> tuple:
        """Resolve to concrete discs/capsules, growing vessels if needed."""
        if self.kind == "vessel_branches":
            return _grow_vessel_tree(
                roi_radius_m, self.seed, self.vessel_depth, self.vessel_trunk_width_frac
            )
        return self.discs + self.capsules


def _check_amplitude(a: float) -> None:
    if not (0 < a <= 1):
        raise ValueError(f"structure amplitude must be in (0, 1], got {a}")


def _structure_reach(s) -> float:
    """Largest distance from the origin covered by the structure."""
    if isinstance(s, Disc):
        return math.hypot(*s.center) + s.radius
    return max(
        math.hypot(*s.p0) + s.width0,
        math.hypot(*s.p1) + s.width1,
    )


def _grow_vessel_tree(
    roi_radius_m: float, seed: int, depth: int, trunk_width_frac: float
) -> tuple[Capsule, ...]:
    """Random binary tree of tapered capsules, rescaled to stay inside the ROI."""
    rng = np.random.default_rng(seed)
    trunk_w = trunk_width_frac * roi_radius_m
    segments: list[Capsule] = []

    def grow(p, direction, width, level):
        if level >= depth:
            return
        # a branch is a short chain of jittered sub-segments
        n_sub = rng.integers(2, 4)
        amp = float(np.clip(1.0 - 0.12 * level + rng.uniform(-0.05, 0.05), 0.3, 1.0))
        for _ in range(n_sub):
            length = roi_radius_m * rng.uniform(0.10, 0.16) * (0.9**level)
            direction = direction + rng.uniform(-0.25, 0.25)
            q = (p[0] + length * math.cos(direction), p[1] + length * math.sin(direction))
            w_end = width * rng.uniform(0.88, 0.97)
            segments.append(Capsule(p, q, width, w_end, amp))
            p, width = q, w_end
        for sign in (-1.0, 1.0):
            if level + 1 < depth and rng.uniform() < 0.9:
                grow(p, direction + sign * rng.uniform(0.35, 0.85), width * 0.72, level + 1)

    start = (-0.45 * roi_radius_m, -0.35 * roi_radius_m)
    grow(start, rng.uniform(0.1, 0.7), trunk_w, 0)

    reach = max(_structure_reach(s) for s in segments)
    limit = 0.92 * roi_radius_m
    if reach > limit:
        f = limit / reach
        segments = [
            Capsule(
                (s.p0[0] * f, s.p0[1] * f),
                (s.p1[0] * f, s.p1[1] * f),
                s.width0 * f,
                s.width1 * f,
                s.amplitude,
            )
            for s in segments
        ]
    return tuple(segments)


def rasterize(spec: PhantomSpec, grid: ImageGrid) -> HeatImage:
    """Paint the phantom onto the grid: max of structure amplitudes per pixel.

    A pixel takes the amplitude of a structure when its center lies inside
    that structure; overlaps resolve to the maximum.  Raises if any
    structure reaches outside the circular ROI of the grid.
    """
    structures = spec.structures(grid.roi_radius_m)
    for s in structures:
        if _structure_reach(s) > grid.roi_radius_m:
            raise ValueError(
                f"structure {s} reaches {_structure_reach(s):.4g} m, "
                f"outside the ROI radius {grid.roi_radius_m:.4g} m"
            )
    X, Y = grid.pixel_coords()
    img = np.zeros(grid.shape)
    for s in structures:
        if isinstance(s, Disc):
            inside = (X - s.center[0]) ** 2 + (Y - s.center[1]) ** 2 <= s.radius**2
            amp = s.amplitude
        else:
            dx = s.p1[0] - s.p0[0]
            dy = s.p1[1] - s.p0[1]
            len2 = dx * dx + dy * dy
            if len2 == 0:
                continue
            u = np.clip(((X - s.p0[0]) * dx + (Y - s.p0[1]) * dy) / len2, 0.0, 1.0)
            cx = s.p0[0] + u * dx
            cy = s.p0[1] + u * dy
            w = s.width0 + u * (s.width1 - s.width0)
            inside = (X - cx) ** 2 + (Y - cy) ** 2 <= w**2
            amp = s.amplitude
        img = np.where(inside, np.maximum(img, amp), img)
    return HeatImage(grid=grid, values=img)


def synthesize_sinogram(
    img: HeatImage,
    geometry: RingGeometry,
    medium: Medium,
    acquisition: Acquisition,
    noise_snr_db: float | None = None,
    arc: ArcSamplingConfig | None = None,
    seed: int = 0,
) -> Sinogram:
    """Forward-model traces for an image, optionally with white noise.

    When ``noise_snr_db`` is given, zero-mean Gaussian noise is added so
    that the RMS signal-to-noise ratio over the whole sinogram equals it.
    """
    op = ForwardOperator(geometry, medium, acquisition, img.grid, arc=arc)
    sino = op.apply(img)
    if noise_snr_db is None:
        return sino
    rms = float(np.sqrt(np.mean(sino.data**2)))
    if rms == 0:
        return sino
    sigma = rms / (10.0 ** (noise_snr_db / 20.0))
    rng = np.random.default_rng(seed)
    noisy = sino.data + rng.normal(0.0, sigma, size=sino.data.shape)
    return Sinogram(geometry=geometry, acquisition=acquisition, data=noisy)
