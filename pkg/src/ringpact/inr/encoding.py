"""Multiresolution hash encoding of 2-D coordinates on [0, 1]^2.

Each level carries a feature table indexed by the level's grid vertices:
densely when the vertex count fits the table, otherwise through an
XOR-of-prime-multiples spatial hash.  A query point is encoded per level
by bilinearly blending the four corner features of its cell; levels are
concatenated.  Query coordinates are fixed inputs (arc geometry), so the
backward pass only produces table gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class HashEncodingConfig:
    num_levels: int = 8
    features_per_level: int = 2
    table_size_log2: int = 16
    base_resolution: int = 16
    finest_resolution: int = 512
    hash_primes: tuple[int, int] = (2654435761, 805459861)

    def __post_init__(self):
        if self.num_levels < 2:
            raise ValueError(f"num_levels must be >= 2, got {self.num_levels}")
        if self.features_per_level < 1:
            raise ValueError("features_per_level must be >= 1")
        if not (0 < self.base_resolution < self.finest_resolution):
            raise ValueError(
                f"need 0 < base_resolution ({self.base_resolution}) "
                f"< finest_resolution ({self.finest_resolution})"
            )
        if self.table_size_log2 < 2:
            raise ValueError("table_size_log2 must be >= 2")

    @property
    def table_size(self) -> int:
        return 1 << self.table_size_log2

    @property
    def growth(self) -> float:
        return math.exp(
            (math.log(self.finest_resolution) - math.log(self.base_resolution))
            / (self.num_levels - 1)
        )

    def level_resolutions(self) -> np.ndarray:
        levels = np.arange(self.num_levels)
        return np.floor(self.base_resolution * self.growth**levels).astype(np.int64)

    def level_is_dense(self) -> np.ndarray:
        n = self.level_resolutions()
        return (n + 1) ** 2 <= self.table_size

    def level_table_rows(self) -> np.ndarray:
        """Rows actually allocated per level: full grid when dense, else T."""
        n = self.level_resolutions()
        return np.minimum((n + 1) ** 2, self.table_size)

    @property
    def output_dim(self) -> int:
        return self.num_levels * self.features_per_level

    def init_tables(self, rng: np.random.Generator, dtype=np.float32) -> list[np.ndarray]:
        return [
            rng.uniform(-1e-4, 1e-4, size=(int(rows), self.features_per_level)).astype(dtype)
            for rows in self.level_table_rows()
        ]


def _corner_indices(cfg: HashEncodingConfig, level: int, cx: np.ndarray, cy: np.ndarray):
    """Table row per integer vertex coordinate, dense or hashed."""
    n = int(cfg.level_resolutions()[level])
    if cfg.level_is_dense()[level]:
        return cx + (n + 1) * cy
    p1, p2 = cfg.hash_primes
    h = (cx.astype(np.uint64) * np.uint64(p1)) ^ (cy.astype(np.uint64) * np.uint64(p2))
    return (h % np.uint64(cfg.table_size)).astype(np.int64)


def encode_forward(
    pts01: np.ndarray, cfg: HashEncodingConfig, tables: list[np.ndarray]
) -> tuple[np.ndarray, list]:
    """Encode points (n, 2) in [0, 1]^2; out-of-range coordinates are clamped.

    Returns the (n, L*F) feature matrix and a cache for
    :func:`encode_backward`.
    """
    pts = np.clip(pts01, 0.0, 1.0)
    n_pts = pts.shape[0]
    dtype = tables[0].dtype
    feats = np.empty((n_pts, cfg.output_dim), dtype=dtype)
    resolutions = cfg.level_resolutions()
    f_per = cfg.features_per_level
    cache = []
    for level in range(cfg.num_levels):
        res = int(resolutions[level])
        s = pts * res
        i0 = np.clip(np.floor(s[:, 0]).astype(np.int64), 0, res - 1)
        j0 = np.clip(np.floor(s[:, 1]).astype(np.int64), 0, res - 1)
        fx = (s[:, 0] - i0).astype(dtype)
        fy = (s[:, 1] - j0).astype(dtype)
        idx = np.empty((4, n_pts), dtype=np.int64)
        w = np.empty((4, n_pts), dtype=dtype)
        for c, (di, dj) in enumerate(((0, 0), (1, 0), (0, 1), (1, 1))):
            idx[c] = _corner_indices(cfg, level, i0 + di, j0 + dj)
            wx = fx if di else (1.0 - fx)
            wy = fy if dj else (1.0 - fy)
            w[c] = wx * wy
        t = tables[level]
        block = (
            t[idx[0]] * w[0, :, None]
            + t[idx[1]] * w[1, :, None]
            + t[idx[2]] * w[2, :, None]
            + t[idx[3]] * w[3, :, None]
        )
        feats[:, level * f_per : (level + 1) * f_per] = block
        cache.append((idx, w))
    return feats, cache


def encode_backward(
    dfeats: np.ndarray, cache: list, cfg: HashEncodingConfig, tables: list[np.ndarray]
) -> list[np.ndarray]:
    """Table gradients for upstream feature gradients (n, L*F)."""
    f_per = cfg.features_per_level
    grads = []
    for level, (idx, w) in enumerate(cache):
        dblock = dfeats[:, level * f_per : (level + 1) * f_per]
        rows = tables[level].shape[0]
        g = np.zeros((rows, f_per), dtype=tables[level].dtype)
        flat_idx = idx.ravel()
        for f in range(f_per):
            contrib = (dblock[:, f][None, :] * w).ravel()
            g[:, f] = np.bincount(flat_idx, weights=contrib, minlength=rows).astype(
                tables[level].dtype
            )
        grads.append(g)
    return grads
