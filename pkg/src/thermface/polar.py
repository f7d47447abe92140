"""
Log-polar registration of Cartesian face images.

A rotation of the input about the image centre becomes a circular shift
along the column (angle) axis of the output; a uniform scaling becomes a
shift along the row (log-radius) axis, which the fixed output size then
absorbs into the resampling.

Output layout: rows index log-radius (row 0 is the smallest radius),
columns index angle, with column ``c`` at ``c * 360 / side`` degrees
measured counterclockwise in ``(x, y)`` pixel coordinates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateRadius, ImageTooSmall, InvalidParameter
from .imaging import as_gray

OVERSAMPLE = 4


@dataclass(frozen=True)
class PolarConfig:
    base: int = 2
    fixed_side: Optional[int] = 128
    r_min: float = 1.0

    def __post_init__(self):
        if int(self.base) != self.base or self.base < 2:
            raise InvalidParameter(f"polar.base must be an integer >= 2, got {self.base!r}")
        if not self.r_min > 0:
            raise InvalidParameter(f"polar.r_min must be positive, got {self.r_min!r}")
        if self.fixed_side is not None:
            side = int(self.fixed_side)
            if side != self.fixed_side or side < 1 or not _is_power(side, int(self.base)):
                raise InvalidParameter(
                    f"polar.fixed_side={self.fixed_side!r} is not a power of {self.base}"
                )


def _is_power(value: int, base: int) -> bool:
    while value > 1 and value % base == 0:
        value //= base
    return value == 1


def center_and_radius(img) -> tuple[int, int, float]:
    """
    Centre ``(m, n)`` and the largest radius whose circle fits in the frame.

    ``m`` is the column (x) and ``n`` the row (y) of the centre pixel.
    """
    height, width = np.shape(img)
    if width < 3 or height < 3:
        raise ImageTooSmall(f"image must be at least 3x3, got {width}x{height}")
    m, n = width // 2, height // 2
    radius = min(m, n, width - 1 - m, height - 1 - n)
    return m, n, float(radius)


def _round_half_up(x):
    return np.floor(x + 0.5).astype(np.int64)


def to_polar(img, cfg: PolarConfig, angular_samples: int, radial_samples: int) -> np.ndarray:
    """
    Sample *img* on a linear polar grid by inverse mapping.

    Row ``i`` lies at radius ``i * R / (radial_samples - 1)``, column ``j`` at
    angle ``j * 360 / angular_samples`` degrees. Each sample takes the
    nearest Cartesian pixel.
    """
    if angular_samples < 8 or radial_samples < 8:
        raise InvalidParameter("angular_samples and radial_samples must be >= 8")
    img = np.asarray(img, dtype=np.float64)
    m, n, radius = center_and_radius(img)
    height, width = img.shape
    r = np.linspace(0.0, radius, radial_samples)
    theta = 2.0 * np.pi * np.arange(angular_samples) / angular_samples
    x = m + r[:, None] * np.cos(theta)[None, :]
    y = n + r[:, None] * np.sin(theta)[None, :]
    col = np.clip(_round_half_up(x), 0, width - 1)
    row = np.clip(_round_half_up(y), 0, height - 1)
    return img[row, col]


def log_radius_samples(radius: float, r_min: float, rows: int) -> np.ndarray:
    """Log-radius value sampled by each output row, uniform on [ln r_min, ln R]."""
    if not radius > r_min:
        raise DegenerateRadius(f"radius {radius} does not exceed r_min {r_min}")
    return np.linspace(math.log(r_min), math.log(radius), rows)


def log_radial(polar_grid, cfg: PolarConfig, radius: float, rows: Optional[int] = None) -> np.ndarray:
    """
    Resample the radial axis of a :func:`to_polar` grid onto a log scale.

    Grid radii below ``r_min`` are clamped to ``r_min`` before taking the
    log, so the centre pixel (radius 0) feeds row 0. Each output row takes
    the grid row whose clamped log-radius is nearest; ties go to the smaller
    radius.
    """
    grid = np.asarray(polar_grid, dtype=np.float64)
    rows = grid.shape[0] if rows is None else int(rows)
    targets = log_radius_samples(radius, cfg.r_min, rows)
    grid_r = np.linspace(0.0, radius, grid.shape[0])
    grid_p = np.log(np.maximum(grid_r, cfg.r_min))
    hi = np.clip(np.searchsorted(grid_p, targets, side="left"), 0, len(grid_p) - 1)
    lo = np.maximum(hi - 1, 0)
    pick = np.where(np.abs(targets - grid_p[lo]) <= np.abs(grid_p[hi] - targets), lo, hi)
    # searchsorted lands on the first of a run of equal clamped values
    return grid[pick]


def output_side(radius: float, cfg: PolarConfig) -> int:
    if cfg.fixed_side is not None:
        return int(cfg.fixed_side)
    base = int(cfg.base)
    # integer search avoids float error in ceil(log_base(R))
    q, side = 0, 1
    while side < radius:
        side *= base
        q += 1
    return side


def resize_square(grid, cfg: PolarConfig, radius: Optional[float] = None) -> np.ndarray:
    """
    Nearest-neighbour resize to ``side x side``.

    ``side`` is ``cfg.fixed_side`` when set, otherwise ``base ** ceil(log_base R)``.
    Output index ``i`` reads source index ``floor(i * src / side)``.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2 or grid.size == 0:
        raise InvalidParameter("resize_square needs a non-empty 2-D grid")
    if cfg.fixed_side is None and radius is None:
        raise InvalidParameter("radius is required when polar.fixed_side is unset")
    side = output_side(radius if radius is not None else 0.0, cfg)
    rows = (np.arange(side) * grid.shape[0]) // side
    cols = (np.arange(side) * grid.shape[1]) // side
    return grid[rows[:, None], cols[None, :]]


def log_polar_transform(img, cfg: Optional[PolarConfig] = None) -> np.ndarray:
    """Full registration: centre, polar sampling, log-radius resampling, resize."""
    cfg = cfg or PolarConfig()
    img = as_gray(img)
    _, _, radius = center_and_radius(img)
    if not radius > cfg.r_min:
        raise DegenerateRadius(f"radius {radius} does not exceed r_min {cfg.r_min}")
    side = output_side(radius, cfg)
    samples = OVERSAMPLE * side
    grid = to_polar(img, cfg, samples, samples)
    grid = log_radial(grid, cfg, radius)
    return resize_square(grid, cfg, radius)


def best_column_shift(reference, moved) -> tuple[int, float]:
    """
    Circular column shift ``k`` maximising the normalised cross-correlation
    between ``np.roll(reference, k, axis=1)`` and *moved*.

    Returns ``(k, peak)`` with ``k`` in ``[-side/2, side/2)``.
    """
    a = np.asarray(reference, dtype=np.float64)
    b = np.asarray(moved, dtype=np.float64)
    a = a - a.mean()
    b = b - b.mean()
    denom = math.sqrt(float((a * a).sum()) * float((b * b).sum()))
    cols = a.shape[1]
    if denom == 0.0:
        return 0, 0.0
    # circular cross-correlation along columns, summed over rows
    spec = np.fft.fft(b, axis=1) * np.conj(np.fft.fft(a, axis=1))
    corr = np.fft.ifft(spec.sum(axis=0)).real / denom
    k = int(np.argmax(corr))
    peak = float(corr[k])
    if k >= cols - cols // 2:
        k -= cols
    return k, peak
