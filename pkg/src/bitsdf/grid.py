"""Dense voxel grid: storage, indexing, distance decoding, signed queries.

Each voxel is an 8-byte record: a 32-bit distance mask (a contiguous low-bit
run whose population count is the truncated distance in voxel cells), a sign
flag (0 = occupied, 1 = free) and an 8-bit saturating hit counter. A fresh
voxel has all mask bits set, sign free, zero hits; that state is treated as
"unobserved".

Internally the three fields live in separate numpy arrays of shape
(nx, ny, nz) so the integrator can use whole-array bit operations. The
serialized record order follows the linear index ix + nx*(iy + ny*iz).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, CorruptionError, ResourceError

FULL_MASK = 0xFFFFFFFF
MAX_DISTANCE_CELLS = 32

SIGN_OCCUPIED = 0
SIGN_FREE = 1

BYTES_PER_VOXEL = 8

# Serialized voxel record: mask (4, little-endian), sign (1), hits (1),
# 2 reserved zero bytes.
VOXEL_DTYPE = np.dtype(
    [("mask", "<u4"), ("sign", "u1"), ("hits", "u1"), ("reserved", "<u2")]
)

DEFAULT_MEMORY_CAP = 8 << 30  # bytes of voxel payload


@dataclass
class VoxelGrid:
    """Fixed-size axis-aligned voxel grid; structure is immutable after
    construction, voxel contents are updated in place by the integrator."""

    dims: tuple[int, int, int]
    voxel_size: float
    origin: np.ndarray
    mask: np.ndarray  # uint32, shape dims
    sign: np.ndarray  # uint8, shape dims
    hits: np.ndarray  # uint8, shape dims
    # Integration parameters recorded for snapshot provenance.
    h_max: int = 255
    t_occ: int = 2
    _observed_dirty: bool = field(default=False, repr=False)

    @property
    def num_voxels(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz


def new_grid(
    dims,
    voxel_size: float,
    origin=(0.0, 0.0, 0.0),
    memory_cap: int = DEFAULT_MEMORY_CAP,
) -> VoxelGrid:
    """Allocate a fresh grid with every voxel unobserved.

    Raises ConfigurationError for degenerate dims/voxel_size and
    ResourceError when the voxel payload would exceed ``memory_cap``.
    """
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or any(d < 1 for d in dims):
        raise ConfigurationError(f"grid dims must be three positive counts, got {dims}")
    if not voxel_size > 0.0:
        raise ConfigurationError(f"voxel_size must be positive, got {voxel_size}")
    payload = dims[0] * dims[1] * dims[2] * BYTES_PER_VOXEL
    if payload > memory_cap:
        raise ResourceError(
            f"grid payload {payload} bytes exceeds memory cap {memory_cap}"
        )
    return VoxelGrid(
        dims=dims,
        voxel_size=float(voxel_size),
        origin=np.asarray(origin, dtype=np.float64).copy(),
        mask=np.full(dims, FULL_MASK, dtype=np.uint32),
        sign=np.full(dims, SIGN_FREE, dtype=np.uint8),
        hits=np.zeros(dims, dtype=np.uint8),
    )


def memory_bytes(grid: VoxelGrid) -> int:
    """Voxel payload size: nx*ny*nz*8 bytes."""
    return grid.num_voxels * BYTES_PER_VOXEL


def world_to_voxel(grid: VoxelGrid, p):
    """Map a world point to integer voxel indices; None when out of bounds."""
    idx = np.floor((np.asarray(p, dtype=np.float64) - grid.origin) / grid.voxel_size)
    ix, iy, iz = (int(v) for v in idx)
    nx, ny, nz = grid.dims
    if 0 <= ix < nx and 0 <= iy < ny and 0 <= iz < nz:
        return ix, iy, iz
    return None


def world_to_voxel_array(grid: VoxelGrid, points: np.ndarray) -> np.ndarray:
    """Vectorized floor indexing; no bounds check (callers filter)."""
    return np.floor(
        (points - grid.origin[np.newaxis, :]) / grid.voxel_size
    ).astype(np.int64)


def voxel_center(grid: VoxelGrid, ix, iy, iz) -> np.ndarray:
    return grid.origin + (np.array([ix, iy, iz], dtype=np.float64) + 0.5) * grid.voxel_size


def is_run_mask(mask) -> bool:
    """True iff mask is a contiguous low-bit run (including 0 and all-ones)."""
    m = int(mask) & FULL_MASK
    return (m & (m + 1)) & FULL_MASK == 0


def decode_distance(mask, checked: bool = True) -> int:
    """Population count of a run mask = truncated distance in voxel cells."""
    m = int(mask) & FULL_MASK
    if checked and not is_run_mask(m):
        raise CorruptionError(f"distance mask {m:#010x} is not a low-bit run")
    return m.bit_count()


def run_mask(k: int) -> int:
    """Run mask with k active low bits, k in [0, 32]."""
    if not 0 <= k <= 32:
        raise ConfigurationError(f"run length {k} outside [0, 32]")
    return FULL_MASK >> (32 - k) if k > 0 else 0


def is_observed(grid: VoxelGrid, ix, iy, iz) -> bool:
    return not (
        grid.mask[ix, iy, iz] == FULL_MASK and grid.hits[ix, iy, iz] == 0
    )


def signed_distance(grid: VoxelGrid, ix, iy, iz):
    """Signed distance in meters at a voxel, or None when unobserved.

    Negative inside occupied space. Indices must be in bounds (IndexError
    otherwise, negative indices rejected explicitly).
    """
    nx, ny, nz = grid.dims
    if not (0 <= ix < nx and 0 <= iy < ny and 0 <= iz < nz):
        raise IndexError(f"voxel index ({ix},{iy},{iz}) outside dims {grid.dims}")
    if not is_observed(grid, ix, iy, iz):
        return None
    d = decode_distance(grid.mask[ix, iy, iz])
    sigma = -1.0 if grid.sign[ix, iy, iz] == SIGN_OCCUPIED else 1.0
    return sigma * d * grid.voxel_size


def observed_array(grid: VoxelGrid) -> np.ndarray:
    """Boolean array marking voxels touched by at least one integration."""
    return ~((grid.mask == FULL_MASK) & (grid.hits == 0))


def popcount_array(masks: np.ndarray) -> np.ndarray:
    return np.bitwise_count(masks).astype(np.int32)


def signed_distance_field(grid: VoxelGrid):
    """Dense (field, observed) pair; field entries for unobserved voxels are
    +32*voxel_size placeholders and must be gated by the observed array."""
    dist = popcount_array(grid.mask).astype(np.float64) * grid.voxel_size
    sigma = np.where(grid.sign == SIGN_OCCUPIED, -1.0, 1.0)
    return sigma * dist, observed_array(grid)


def to_records(grid: VoxelGrid) -> np.ndarray:
    """Flatten to serialized voxel records in linear-index order
    (ix + nx*(iy + ny*iz))."""
    rec = np.zeros(grid.num_voxels, dtype=VOXEL_DTYPE)
    rec["mask"] = grid.mask.ravel(order="F")
    rec["sign"] = grid.sign.ravel(order="F")
    rec["hits"] = grid.hits.ravel(order="F")
    return rec


def from_records(
    rec: np.ndarray, dims, voxel_size, origin, h_max=255, t_occ=2
) -> VoxelGrid:
    dims = tuple(int(d) for d in dims)
    if rec.shape[0] != dims[0] * dims[1] * dims[2]:
        raise CorruptionError(
            f"record count {rec.shape[0]} does not match dims {dims}"
        )
    g = new_grid(dims, voxel_size, origin)
    g.mask[...] = rec["mask"].reshape(dims, order="F")
    g.sign[...] = rec["sign"].reshape(dims, order="F")
    g.hits[...] = rec["hits"].reshape(dims, order="F")
    g.h_max = int(h_max)
    g.t_occ = int(t_occ)
    return g


def grids_equal(a: VoxelGrid, b: VoxelGrid) -> bool:
    return (
        a.dims == b.dims
        and a.voxel_size == b.voxel_size
        and np.array_equal(a.origin, b.origin)
        and np.array_equal(a.mask, b.mask)
        and np.array_equal(a.sign, b.sign)
        and np.array_equal(a.hits, b.hits)
    )
