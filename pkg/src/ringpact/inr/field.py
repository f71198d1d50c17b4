"""Continuous neural representation of the initial-heat image.

A :class:`NeuralField` maps physical (x, y) inside its square domain to a
heat value in (0, 1): hash-encode the normalized coordinates, run the MLP,
squash through a sigmoid.  The field is deterministic given its parameters
and differentiable end to end via the explicit backward passes.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass

import numpy as np

from ..core import HeatImage, ImageGrid
from .encoding import HashEncodingConfig, encode_backward, encode_forward
from .network import PARAM_NAMES, mlp_backward, mlp_forward, mlp_init

CHECKPOINT_MAGIC = b"PANF"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class FieldDomain:
    """Square region represented by the field, mapped onto [0, 1]^2."""

    center: tuple[float, float]
    half_extent_m: float

    def __post_init__(self):
        if self.half_extent_m <= 0:
            raise ValueError(f"half_extent_m must be > 0, got {self.half_extent_m}")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    @staticmethod
    def from_grid(grid: ImageGrid) -> "FieldDomain":
        w, h = grid.extent_m
        return FieldDomain(center=grid.center, half_extent_m=0.5 * max(w, h))

    def to_unit(self, pts: np.ndarray) -> np.ndarray:
        """Map physical points (n, 2) to unit coordinates (no clamping)."""
        lo = np.array([self.center[0] - self.half_extent_m, self.center[1] - self.half_extent_m])
        return (pts - lo) / (2.0 * self.half_extent_m)

    def contains_unit(self, pts01: np.ndarray) -> np.ndarray:
        return (
            (pts01[:, 0] >= 0.0)
            & (pts01[:, 0] <= 1.0)
            & (pts01[:, 1] >= 0.0)
            & (pts01[:, 1] <= 1.0)
        )

    @property
    def roi_radius_m(self) -> float:
        """Circumscribing radius of the domain square."""
        return self.half_extent_m * np.sqrt(2.0)


class NeuralField:
    """Hash-encoded coordinate network with trainable tables and MLP."""

    def __init__(
        self,
        encoding: HashEncodingConfig,
        domain: FieldDomain,
        hidden: int = 128,
        seed: int = 0,
        dtype=np.float32,
    ):
        if hidden < 1:
            raise ValueError(f"hidden width must be >= 1, got {hidden}")
        self.encoding = encoding
        self.domain = domain
        self.hidden = hidden
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        self.tables = encoding.init_tables(rng, dtype=self.dtype)
        self.mlp = mlp_init(encoding.output_dim, hidden, rng, dtype=self.dtype)

    # -- evaluation ----------------------------------------------------
    def _check_finite(self):
        for t in self.tables:
            if not np.all(np.isfinite(t)):
                raise ValueError("neural field has non-finite encoding parameters")
        for v in self.mlp.values():
            if not np.all(np.isfinite(v)):
                raise ValueError("neural field has non-finite network parameters")

    def eval_unit(self, pts01: np.ndarray, with_cache: bool = False):
        """Field values at unit-square points (n, 2); outputs in (0, 1)."""
        pts01 = np.asarray(pts01, dtype=self.dtype)
        feats, enc_cache = encode_forward(pts01, self.encoding, self.tables)
        y, mlp_cache = mlp_forward(feats, self.mlp)
        if with_cache:
            return y, (enc_cache, mlp_cache)
        return y

    def eval_points(self, pts: np.ndarray) -> np.ndarray:
        """Field values at physical points (n, 2); outside points clamp to the edge."""
        self._check_finite()
        pts = np.asarray(pts, dtype=np.float64)
        return self.eval_unit(self.domain.to_unit(pts).astype(self.dtype))

    def backward(self, cache, dvals: np.ndarray) -> dict:
        """Parameter gradients for upstream value gradients (n,)."""
        enc_cache, mlp_cache = cache
        dfeats, grads = mlp_backward(dvals.astype(self.dtype), mlp_cache, self.mlp)
        table_grads = encode_backward(dfeats, enc_cache, self.encoding, self.tables)
        for level, g in enumerate(table_grads):
            grads[f"table{level}"] = g
        return grads

    def parameters(self) -> dict:
        out = {f"table{i}": t for i, t in enumerate(self.tables)}
        out.update(self.mlp)
        return out

    def render_grid(self, grid: ImageGrid) -> HeatImage:
        """Evaluate the field at every pixel center of the grid."""
        X, Y = grid.pixel_coords()
        pts = np.stack([X.ravel(), Y.ravel()], axis=1)
        vals = self.eval_points(pts)
        return HeatImage(grid=grid, values=vals.reshape(grid.shape).astype(np.float64))

    # -- flat-parameter view (used by the finite-difference harness) ----
    def param_names(self) -> list[str]:
        return [f"table{i}" for i in range(len(self.tables))] + list(PARAM_NAMES)

    def get_flat(self) -> np.ndarray:
        p = self.parameters()
        return np.concatenate([p[k].ravel().astype(np.float64) for k in self.param_names()])

    def set_flat(self, vec: np.ndarray) -> None:
        p = self.parameters()
        pos = 0
        for k in self.param_names():
            arr = p[k]
            n = arr.size
            arr[...] = vec[pos : pos + n].reshape(arr.shape).astype(self.dtype)
            pos += n
        if pos != vec.size:
            raise ValueError(f"flat vector has {vec.size} entries, expected {pos}")

    def flat_grads(self, grads: dict) -> np.ndarray:
        return np.concatenate([grads[k].ravel().astype(np.float64) for k in self.param_names()])

    # -- checkpointing ---------------------------------------------------
    def save(self, path) -> None:
        """Versioned binary checkpoint; see the format notes in the README."""
        header = {
            "encoding": {
                "num_levels": self.encoding.num_levels,
                "features_per_level": self.encoding.features_per_level,
                "table_size_log2": self.encoding.table_size_log2,
                "base_resolution": self.encoding.base_resolution,
                "finest_resolution": self.encoding.finest_resolution,
                "hash_primes": list(self.encoding.hash_primes),
            },
            "domain": {
                "center": list(self.domain.center),
                "half_extent_m": self.domain.half_extent_m,
            },
            "hidden": self.hidden,
        }
        blob = json.dumps(header, sort_keys=True).encode("utf-8")
        buf = io.BytesIO()
        buf.write(CHECKPOINT_MAGIC)
        buf.write(struct.pack("<H", CHECKPOINT_VERSION))
        buf.write(struct.pack("<I", len(blob)))
        buf.write(blob)
        params = self.parameters()
        names = self.param_names()
        buf.write(struct.pack("<H", len(names)))
        for name in names:
            arr = np.ascontiguousarray(params[name], dtype="<f4")
            nm = name.encode("ascii")
            buf.write(struct.pack("<B", len(nm)))
            buf.write(nm)
            buf.write(struct.pack("<B", arr.ndim))
            for d in arr.shape:
                buf.write(struct.pack("<I", d))
            buf.write(arr.tobytes())
        with open(path, "wb") as f:
            f.write(buf.getvalue())

    @staticmethod
    def load(path) -> "NeuralField":
        with open(path, "rb") as f:
            raw = f.read()
        buf = io.BytesIO(raw)
        if buf.read(4) != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a neural-field checkpoint")
        (version,) = struct.unpack("<H", buf.read(2))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        (blob_len,) = struct.unpack("<I", buf.read(4))
        header = json.loads(buf.read(blob_len).decode("utf-8"))
        enc = HashEncodingConfig(
            num_levels=header["encoding"]["num_levels"],
            features_per_level=header["encoding"]["features_per_level"],
            table_size_log2=header["encoding"]["table_size_log2"],
            base_resolution=header["encoding"]["base_resolution"],
            finest_resolution=header["encoding"]["finest_resolution"],
            hash_primes=tuple(header["encoding"]["hash_primes"]),
        )
        domain = FieldDomain(
            center=tuple(header["domain"]["center"]),
            half_extent_m=header["domain"]["half_extent_m"],
        )
        nf = NeuralField(enc, domain, hidden=header["hidden"], seed=0, dtype=np.float32)
        params = nf.parameters()
        (count,) = struct.unpack("<H", buf.read(2))
        for _ in range(count):
            (nm_len,) = struct.unpack("<B", buf.read(1))
            name = buf.read(nm_len).decode("ascii")
            (ndim,) = struct.unpack("<B", buf.read(1))
            shape = tuple(struct.unpack("<I", buf.read(4))[0] for _ in range(ndim))
            n = int(np.prod(shape)) if shape else 1
            arr = np.frombuffer(buf.read(4 * n), dtype="<f4").reshape(shape)
            if name not in params:
                raise ValueError(f"{path}: unexpected tensor {name!r}")
            if params[name].shape != arr.shape:
                raise ValueError(
                    f"{path}: tensor {name!r} has shape {arr.shape}, expected {params[name].shape}"
                )
            params[name][...] = arr
        return nf
