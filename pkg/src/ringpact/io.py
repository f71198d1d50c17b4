"""Binary file formats and image export.

Sinogram files ("PARF") and image files ("PAIM") are self-describing
little-endian containers: magic bytes, a u16 version, a fixed scalar
header, then the payload as 32-bit floats in row-major order.

PARF v1 header: u32 num_elements, u32 num_samples, f64 ring radius [m],
f64 speed of sound [m/s], f64 Grueneisen, f64 sample rate [Hz],
f64 start time [s]; payload num_elements x num_samples.

PAIM v1 header: u32 nx, u32 ny, f64 pixel size [m], f64 center x [m],
f64 center y [m]; payload ny rows of nx values, row iy=0 first and iy
increasing with +y.

A raw importer for pre-recorded data is also provided: a headerless file
of interleaved 32-bit floats, elements x samples, with the geometry
supplied separately (typically from the experiment config).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .core import Acquisition, HeatImage, ImageGrid, Medium, RingGeometry, Sinogram

SINOGRAM_MAGIC = b"PARF"
IMAGE_MAGIC = b"PAIM"
FORMAT_VERSION = 1


def write_sinogram(path, sino: Sinogram, medium: Medium) -> None:
    head = struct.pack(
        "<4sHII5d",
        SINOGRAM_MAGIC,
        FORMAT_VERSION,
        sino.num_elements,
        sino.num_samples,
        sino.geometry.radius_m,
        medium.sos_mps,
        medium.grueneisen,
        sino.acquisition.sample_rate_hz,
        sino.acquisition.t_start_s,
    )
    with open(path, "wb") as f:
        f.write(head)
        f.write(np.ascontiguousarray(sino.data, dtype="<f4").tobytes())


def read_sinogram(path) -> tuple[Sinogram, Medium]:
    with open(path, "rb") as f:
        head = f.read(struct.calcsize("<4sHII5d"))
        magic, version, ne, nt, radius, sos, gamma, fs, t0 = struct.unpack("<4sHII5d", head)
        if magic != SINOGRAM_MAGIC:
            raise ValueError(f"{path}: not a sinogram file (bad magic {magic!r})")
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported sinogram version {version}")
        data = np.frombuffer(f.read(4 * ne * nt), dtype="<f4").reshape(ne, nt)
    sino = Sinogram(
        geometry=RingGeometry(radius_m=radius, num_elements=ne),
        acquisition=Acquisition(sample_rate_hz=fs, num_samples=nt, t_start_s=t0),
        data=data.astype(np.float64),
    )
    return sino, Medium(sos_mps=sos, grueneisen=gamma)


def write_image(path, img: HeatImage) -> None:
    g = img.grid
    head = struct.pack(
        "<4sHII3d",
        IMAGE_MAGIC,
        FORMAT_VERSION,
        g.nx,
        g.ny,
        g.pixel_size_m,
        g.center[0],
        g.center[1],
    )
    with open(path, "wb") as f:
        f.write(head)
        f.write(np.ascontiguousarray(img.values, dtype="<f4").tobytes())


def read_image(path) -> HeatImage:
    with open(path, "rb") as f:
        head = f.read(struct.calcsize("<4sHII3d"))
        magic, version, nx, ny, dx, cx, cy = struct.unpack("<4sHII3d", head)
        if magic != IMAGE_MAGIC:
            raise ValueError(f"{path}: not an image file (bad magic {magic!r})")
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported image version {version}")
        values = np.frombuffer(f.read(4 * nx * ny), dtype="<f4").reshape(ny, nx)
    grid = ImageGrid(nx=nx, ny=ny, pixel_size_m=dx, center=(cx, cy))
    return HeatImage(grid=grid, values=values.astype(np.float64))


def describe(path) -> dict:
    """Header dump of either container, for the ``inspect`` CLI verb."""
    path = Path(path)
    with open(path, "rb") as f:
        magic = f.read(4)
    if magic == SINOGRAM_MAGIC:
        sino, medium = read_sinogram(path)
        return {
            "format": "sinogram",
            "version": FORMAT_VERSION,
            "num_elements": sino.num_elements,
            "num_samples": sino.num_samples,
            "ring_radius_m": sino.geometry.radius_m,
            "sos_mps": medium.sos_mps,
            "grueneisen": medium.grueneisen,
            "sample_rate_hz": sino.acquisition.sample_rate_hz,
            "t_start_s": sino.acquisition.t_start_s,
            "data_min": float(sino.data.min()),
            "data_max": float(sino.data.max()),
        }
    if magic == IMAGE_MAGIC:
        img = read_image(path)
        return {
            "format": "image",
            "version": FORMAT_VERSION,
            "nx": img.grid.nx,
            "ny": img.grid.ny,
            "pixel_size_m": img.grid.pixel_size_m,
            "center": list(img.grid.center),
            "data_min": float(img.values.min()),
            "data_max": float(img.values.max()),
        }
    raise ValueError(f"{path}: unrecognized magic bytes {magic!r}")


def read_raw_sinogram(
    path, geometry: RingGeometry, acquisition: Acquisition
) -> Sinogram:
    """Import a headerless elements-x-samples float32 dump."""
    data = np.fromfile(path, dtype="<f4")
    expected = geometry.num_elements * acquisition.num_samples
    if data.size != expected:
        raise ValueError(
            f"{path}: holds {data.size} samples, expected "
            f"{geometry.num_elements} x {acquisition.num_samples} = {expected}"
        )
    return Sinogram(
        geometry=geometry,
        acquisition=acquisition,
        data=data.reshape(geometry.num_elements, acquisition.num_samples).astype(np.float64),
    )


def write_png(path, values, flip_vertical: bool = True) -> None:
    """8-bit grayscale PNG, min-max normalized per image; +y renders upward."""
    from PIL import Image

    v = values.values if isinstance(values, HeatImage) else np.asarray(values, dtype=np.float64)
    lo, hi = v.min(), v.max()
    scaled = np.zeros_like(v) if hi <= lo else (v - lo) / (hi - lo)
    img8 = (np.round(scaled * 255)).astype(np.uint8)
    if flip_vertical:
        img8 = img8[::-1]
    Image.fromarray(img8, mode="L").save(path)
