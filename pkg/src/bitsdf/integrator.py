"""Fuse posed scans into the voxel grid.

Per LiDAR return: optional motion compensation, transform to the map frame,
boundary filtering (the whole K^3 neighborhood must fit inside the grid),
azimuth-elevation bin selection from the map-frame ray direction, then the
kernel stamp: bitwise AND of the distance kernel onto the mask array and a
saturating hit increment over the bin's shadow offsets. A voxel turns
occupied exactly when its hit count reaches the occupancy threshold; since
AND and saturating increments are commutative and idempotent/monotone, the
final grid is independent of point processing order.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

from .errors import ConfigurationError
from .grid import SIGN_OCCUPIED, VoxelGrid, world_to_voxel_array
from .kernels import KernelBank, bin_index_array
from .transforms import check_rotation

COMPENSATION_MODES = ("none", "yaw", "se3")


@dataclass
class ScanFrame:
    """One LiDAR sweep: points in the sensor frame plus the end-of-sweep pose
    (4x4, map frame). ``prev_pose`` is the pose at the start of the sweep and
    is only needed for motion compensation. ``timestamps`` are normalized to
    [0, 1] over the sweep; when absent they default to point order."""

    points: np.ndarray
    pose: np.ndarray
    timestamps: np.ndarray | None = None
    prev_pose: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        self.pose = np.asarray(self.pose, dtype=np.float64)
        check_rotation(self.pose)
        if self.prev_pose is not None:
            self.prev_pose = np.asarray(self.prev_pose, dtype=np.float64)
            check_rotation(self.prev_pose)
        if self.timestamps is not None:
            self.timestamps = np.asarray(self.timestamps, dtype=np.float64).ravel()
            if self.timestamps.shape[0] != self.points.shape[0]:
                raise ConfigurationError("timestamp count does not match point count")


@dataclass
class IntegrationParams:
    h_max: int = 255
    t_occ: int = 2
    compensation: str = "none"
    downsample: int = 1
    first_return_per_voxel: bool = False

    def __post_init__(self):
        if not 1 <= self.t_occ <= self.h_max <= 255:
            raise ConfigurationError(
                f"need 1 <= T ({self.t_occ}) <= H_max ({self.h_max}) <= 255"
            )
        if self.compensation not in COMPENSATION_MODES:
            raise ConfigurationError(
                f"compensation must be one of {COMPENSATION_MODES}"
            )
        if self.downsample < 1:
            raise ConfigurationError("downsample factor must be >= 1")


@dataclass
class FrameStats:
    points_in: int = 0
    points_discarded: int = 0
    voxels_written: int = 0
    elapsed_ms: float = 0.0


def _scan_times(scan: ScanFrame) -> np.ndarray:
    if scan.timestamps is not None:
        return scan.timestamps
    n = scan.points.shape[0]
    return np.linspace(0.0, 1.0, n) if n > 1 else np.zeros(n)


def motion_compensate(scan: ScanFrame, mode: str) -> ScanFrame:
    """Deskew: move each point to where it would have been observed from the
    end-of-sweep sensor frame, interpolating prev_pose -> pose at the point's
    normalized timestamp. mode "none" is the identity."""
    if mode not in COMPENSATION_MODES:
        raise ConfigurationError(f"unknown compensation mode {mode!r}")
    if mode == "none" or scan.points.shape[0] == 0:
        return scan
    if scan.prev_pose is None:
        raise ConfigurationError("motion compensation requires prev_pose")

    ts = np.clip(_scan_times(scan), 0.0, 1.0)
    T0, T1 = scan.prev_pose, scan.pose
    trans = (1.0 - ts)[:, None] * T0[:3, 3] + ts[:, None] * T1[:3, 3]
    if mode == "se3":
        rots = Slerp(
            [0.0, 1.0], Rotation.from_matrix(np.stack([T0[:3, :3], T1[:3, :3]]))
        )(ts)
    else:  # yaw-only: lerp heading along the shortest arc, keep end tilt
        y0 = Rotation.from_matrix(T0[:3, :3]).as_euler("zyx")[0]
        y1 = Rotation.from_matrix(T1[:3, :3]).as_euler("zyx")[0]
        dy = (y1 - y0 + np.pi) % (2 * np.pi) - np.pi
        tilt = Rotation.from_euler("z", -y1) * Rotation.from_matrix(T1[:3, :3])
        rots = Rotation.from_euler("z", y0 + ts * dy) * tilt

    mats = rots.as_matrix()  # (n, 3, 3)
    p_map = np.einsum("nij,nj->ni", mats, scan.points) + trans
    # Express in the end-of-sweep sensor frame.
    p_end = (p_map - T1[:3, 3]) @ T1[:3, :3]
    return ScanFrame(
        points=p_end, pose=scan.pose, timestamps=scan.timestamps,
        prev_pose=scan.prev_pose,
    )


def _shadow_flat_offsets(bank: KernelBank, dims) -> list:
    """Per-bin shadow offsets as flat-index deltas for a C-order
    (nx, ny, nz) array; cached on the bank per grid shape."""
    cache = getattr(bank, "_shadow_flat_cache", None)
    if cache is not None and cache[0] == tuple(dims):
        return cache[1]
    ny, nz = dims[1], dims[2]
    strides = np.array([ny * nz, nz, 1], dtype=np.int64)
    flat = [offs @ strides for offs in bank.shadow_offsets]
    bank._shadow_flat_cache = (tuple(dims), flat)
    return flat


def _stamp(grid, bank, center, flat_bin, shadow_flat, mask3, hits_flat, sign_flat):
    """Apply the distance kernel and the bin's shadow at one center voxel.
    Caller guarantees the K^3 neighborhood is in bounds. Returns the number
    of mask cells whose value changed."""
    r = bank.half_extent
    cx, cy, cz = center
    sub = mask3[cx - r : cx + r + 1, cy - r : cy + r + 1, cz - r : cz + r + 1]
    anded = sub & bank.distance_kernel
    changed = int(np.count_nonzero(anded != sub))
    if changed:
        sub[...] = anded

    ny, nz = grid.dims[1], grid.dims[2]
    cflat = (cx * ny + cy) * nz + cz
    idx = cflat + shadow_flat[flat_bin]
    h = hits_flat[idx]
    h += h < grid.h_max  # saturating +1; bool casts to 1
    hits_flat[idx] = h
    occ = idx[h >= grid.t_occ]
    if occ.size:
        sign_flat[occ] = SIGN_OCCUPIED
    return changed


def integrate_point(
    grid: VoxelGrid,
    bank: KernelBank,
    p_map,
    sensor_pos,
    params: IntegrationParams,
) -> str:
    """Fuse one map-frame return; returns "applied" or "discarded"."""
    p_map = np.asarray(p_map, dtype=np.float64)
    sensor_pos = np.asarray(sensor_pos, dtype=np.float64)
    ray = p_map - sensor_pos
    if np.linalg.norm(ray) < grid.voxel_size:
        return "discarded"
    center = world_to_voxel_array(grid, p_map[None, :])[0]
    r = bank.half_extent
    dims = np.array(grid.dims)
    if np.any(center < r) or np.any(center > dims - 1 - r):
        return "discarded"
    grid.h_max = params.h_max
    grid.t_occ = params.t_occ
    b_a, b_e = bin_index_array(ray[None, :], bank.b_az, bank.b_el)
    shadow_flat = _shadow_flat_offsets(bank, grid.dims)
    _stamp(
        grid, bank, center, bank.flat_bin(int(b_a[0]), int(b_e[0])),
        shadow_flat, grid.mask, grid.hits.reshape(-1), grid.sign.reshape(-1),
    )
    return "applied"


def _prepare_chunk(grid, bank, pts_map, sensor):
    rays = pts_map - sensor
    norms = np.linalg.norm(rays, axis=1)
    ok = norms >= grid.voxel_size
    centers = world_to_voxel_array(grid, pts_map)
    r = bank.half_extent
    dims = np.array(grid.dims)
    ok &= np.all(centers >= r, axis=1) & np.all(centers <= dims - 1 - r, axis=1)
    b_a = np.zeros(len(pts_map), dtype=np.int64)
    b_e = np.zeros(len(pts_map), dtype=np.int64)
    if np.any(ok):
        b_a[ok], b_e[ok] = bin_index_array(rays[ok], bank.b_az, bank.b_el)
    return centers, ok, b_a * bank.b_el + b_e


def integrate_frame(
    grid: VoxelGrid,
    bank: KernelBank,
    scan: ScanFrame,
    params: IntegrationParams,
    threads: int = 1,
) -> FrameStats:
    """Fuse one scan. Geometry preprocessing (transforms, binning, bounds
    checks) is chunked across worker threads; voxel writes are applied by a
    single writer so the result is bit-identical for any worker count."""
    t0 = time.perf_counter()
    stats = FrameStats()
    pts = scan.points
    if pts.shape[0] == 0:
        return stats

    if params.downsample > 1:
        keep = slice(None, None, params.downsample)
        scan = ScanFrame(
            points=pts[keep], pose=scan.pose,
            timestamps=None if scan.timestamps is None else scan.timestamps[keep],
            prev_pose=scan.prev_pose,
        )
    scan = motion_compensate(scan, params.compensation)

    pts_map = scan.points @ scan.pose[:3, :3].T + scan.pose[:3, 3]
    sensor = scan.pose[:3, 3]
    stats.points_in = pts_map.shape[0]

    grid.h_max = params.h_max
    grid.t_occ = params.t_occ

    n = pts_map.shape[0]
    if threads > 1 and n > 4 * threads:
        bounds = np.linspace(0, n, threads + 1, dtype=int)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(
                pool.map(
                    lambda se: _prepare_chunk(grid, bank, pts_map[se[0] : se[1]], sensor),
                    zip(bounds[:-1], bounds[1:]),
                )
            )
        centers = np.concatenate([p[0] for p in parts])
        ok = np.concatenate([p[1] for p in parts])
        bins = np.concatenate([p[2] for p in parts])
    else:
        centers, ok, bins = _prepare_chunk(grid, bank, pts_map, sensor)

    apply_idx = np.nonzero(ok)[0]
    if params.first_return_per_voxel and apply_idx.size:
        ny, nz = grid.dims[1], grid.dims[2]
        cflat = (centers[apply_idx, 0] * ny + centers[apply_idx, 1]) * nz + centers[
            apply_idx, 2
        ]
        _, first = np.unique(cflat, return_index=True)
        apply_idx = apply_idx[np.sort(first)]

    stats.points_discarded = stats.points_in - int(np.count_nonzero(ok))

    if apply_idx.size:
        # stamp in voxel order for cache locality on large grids; the final
        # grid is order-independent so this only affects speed
        ny, nz = grid.dims[1], grid.dims[2]
        cflat = (centers[apply_idx, 0] * ny + centers[apply_idx, 1]) * nz + centers[
            apply_idx, 2
        ]
        apply_idx = apply_idx[np.argsort(cflat, kind="stable")]

    shadow_flat = _shadow_flat_offsets(bank, grid.dims)
    mask3 = grid.mask
    hits_flat = grid.hits.reshape(-1)
    sign_flat = grid.sign.reshape(-1)
    written = 0
    for i in apply_idx:
        written += _stamp(
            grid, bank, centers[i], int(bins[i]), shadow_flat,
            mask3, hits_flat, sign_flat,
        )
    stats.voxels_written = written
    stats.elapsed_ms = (time.perf_counter() - t0) * 1e3
    return stats
