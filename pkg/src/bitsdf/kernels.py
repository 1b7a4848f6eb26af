"""Precomputed directional kernels.

One shared K^3 distance-mask kernel (the distance encoding depends only on
the Euclidean offset norm) plus one shadow offset set per azimuth-elevation
bin. The shadow models the region behind a LiDAR return: a truncated
hemisphere of radius r_s aligned with the bin direction, or optionally a
cone. With the default 40x40 binning this yields 1600 shadow sets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .grid import run_mask

DEFAULT_KERNEL_SIZE = 21
DEFAULT_AZIMUTH_BINS = 40
DEFAULT_ELEVATION_BINS = 40
DEFAULT_CONE_HALF_ANGLE_DEG = 30.0

HEMISPHERE = "hemisphere"
CONE = "cone"

TWO_PI = 2.0 * math.pi


def bin_index(p, b_az: int, b_el: int) -> tuple[int, int]:
    """Quantize a direction (any nonzero vector) to (azimuth, elevation) bins.

    Azimuth wraps atan2 into [0, 2*pi); the elevation index saturates at
    b_el - 1 for the +z pole. Both indices are clamped into range.
    """
    x, y, z = (float(v) for v in p)
    norm = math.sqrt(x * x + y * y + z * z)
    if norm == 0.0:
        raise ConfigurationError("cannot bin a zero-length direction")
    az = math.atan2(y, x)
    if az < 0.0:
        az += TWO_PI
    b_a = int(az / TWO_PI * b_az)
    b_e = int((math.asin(max(-1.0, min(1.0, z / norm))) + math.pi / 2) / math.pi * b_el)
    return min(max(b_a, 0), b_az - 1), min(max(b_e, 0), b_el - 1)


def bin_index_array(dirs: np.ndarray, b_az: int, b_el: int):
    """Vectorized bin_index over an (n, 3) array of nonzero vectors."""
    norms = np.linalg.norm(dirs, axis=1)
    az = np.arctan2(dirs[:, 1], dirs[:, 0])
    az = np.where(az < 0.0, az + TWO_PI, az)
    el = np.arcsin(np.clip(dirs[:, 2] / norms, -1.0, 1.0))
    b_a = np.clip((az / TWO_PI * b_az).astype(np.int64), 0, b_az - 1)
    b_e = np.clip(((el + np.pi / 2) / np.pi * b_el).astype(np.int64), 0, b_el - 1)
    return b_a, b_e


def bin_direction(b_a: int, b_e: int, b_az: int, b_el: int) -> np.ndarray:
    """Representative unit vector at the center of a bin's angular range."""
    if not (0 <= b_a < b_az and 0 <= b_e < b_el):
        raise ConfigurationError(f"bin ({b_a},{b_e}) outside {b_az}x{b_el}")
    a = (b_a + 0.5) * TWO_PI / b_az
    e = (b_e + 0.5) * math.pi / b_el - math.pi / 2
    return np.array(
        [math.cos(e) * math.cos(a), math.cos(e) * math.sin(a), math.sin(e)]
    )


def make_distance_mask(offset) -> int:
    """Distance mask for an integer voxel offset: 0 at the center, otherwise
    a low-bit run of ceil(|offset|_2) bits."""
    ox, oy, oz = (int(v) for v in offset)
    r = math.sqrt(ox * ox + oy * oy + oz * oz)
    if r == 0.0:
        return 0
    return run_mask(min(math.ceil(r), 32))


def _offset_cube(half_extent: int):
    """All integer offsets of the K^3 cube as an (K^3, 3) array plus their
    Euclidean norms."""
    rng = np.arange(-half_extent, half_extent + 1)
    ox, oy, oz = np.meshgrid(rng, rng, rng, indexing="ij")
    offs = np.stack([ox.ravel(), oy.ravel(), oz.ravel()], axis=1)
    return offs, np.linalg.norm(offs.astype(np.float64), axis=1)


def build_shadow_mask(
    direction,
    shadow_radius: float,
    model: str = HEMISPHERE,
    cone_half_angle_deg: float = DEFAULT_CONE_HALF_ANGLE_DEG,
    half_extent: int = DEFAULT_KERNEL_SIZE // 2,
) -> np.ndarray:
    """Offsets (n, 3) behind a return along ``direction``.

    Hemisphere: |o| <= r_s and o . d >= 0. Cone: additionally within
    ``cone_half_angle_deg`` of the axis. The center offset is always
    included. Offsets are emitted in lexicographic cube order.
    """
    if shadow_radius < 0 or shadow_radius > half_extent:
        raise ConfigurationError(
            f"shadow radius {shadow_radius} outside [0, {half_extent}]"
        )
    d = np.asarray(direction, dtype=np.float64)
    offs, norms = _offset_cube(half_extent)
    dot = offs @ d
    inside = norms <= shadow_radius
    if model == HEMISPHERE:
        keep = inside & (dot >= 0.0)
    elif model == CONE:
        cos_half = math.cos(math.radians(cone_half_angle_deg))
        keep = inside & ((norms == 0.0) | (dot >= norms * cos_half))
    else:
        raise ConfigurationError(f"unknown shadow model {model!r}")
    keep |= norms == 0.0
    return offs[keep]


@dataclass
class KernelBank:
    """Immutable bundle of the shared distance kernel and per-bin shadows."""

    size: int
    b_az: int
    b_el: int
    shadow_radius: float
    shadow_model: str
    cone_half_angle_deg: float
    distance_kernel: np.ndarray  # uint32, (K, K, K), index [dx+R, dy+R, dz+R]
    shadow_offsets: list  # per flat bin b_a * b_el + b_e: (n_i, 3) int64
    bin_dirs: np.ndarray  # (b_az * b_el, 3)

    @property
    def half_extent(self) -> int:
        return self.size // 2

    def flat_bin(self, b_a: int, b_e: int) -> int:
        return b_a * self.b_el + b_e


def default_shadow_radius(voxel_size: float, half_extent: int = 10) -> int:
    """5 cm physical shadow radius expressed in voxels, at least 1, capped at
    the kernel half-extent; coarse grids get a small radius, fine grids a
    large one."""
    return min(max(1, round(0.05 / voxel_size)), half_extent)


def build_kernel_bank(
    size: int = DEFAULT_KERNEL_SIZE,
    b_az: int = DEFAULT_AZIMUTH_BINS,
    b_el: int = DEFAULT_ELEVATION_BINS,
    shadow_radius: float = 3,
    shadow_model: str = HEMISPHERE,
    cone_half_angle_deg: float = DEFAULT_CONE_HALF_ANGLE_DEG,
) -> KernelBank:
    """Build the full bank; deterministic for identical parameters."""
    if size % 2 == 0 or size < 1:
        raise ConfigurationError(f"kernel size must be odd and positive, got {size}")
    if b_az < 1 or b_el < 1:
        raise ConfigurationError("bin counts must be at least 1")
    half = size // 2
    offs, norms = _offset_cube(half)
    runs = np.ceil(norms).astype(np.int64)
    runs[norms == 0.0] = 0
    runs = np.minimum(runs, 32)
    lut = np.array([run_mask(int(k)) for k in range(33)], dtype=np.uint32)
    distance_kernel = lut[runs].reshape(size, size, size)

    bin_dirs = np.zeros((b_az * b_el, 3))
    shadow_offsets = []
    for b_a in range(b_az):
        for b_e in range(b_el):
            d = bin_direction(b_a, b_e, b_az, b_el)
            bin_dirs[b_a * b_el + b_e] = d
            shadow_offsets.append(
                build_shadow_mask(
                    d, shadow_radius, shadow_model, cone_half_angle_deg, half
                )
            )
    return KernelBank(
        size=size,
        b_az=b_az,
        b_el=b_el,
        shadow_radius=float(shadow_radius),
        shadow_model=shadow_model,
        cone_half_angle_deg=float(cone_half_angle_deg),
        distance_kernel=distance_kernel,
        shadow_offsets=shadow_offsets,
        bin_dirs=bin_dirs,
    )
