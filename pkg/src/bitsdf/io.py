"""File formats: PCD/PLY/XYZ scans, TUM trajectories, mesh export (PLY/OBJ),
CSV grid export and the "DBTSDF01" binary grid snapshot.

Readers raise FormatError for unrecognized or malformed input and
CorruptionError for truncated or inconsistent payloads; every writer/reader
pair round-trips its own output bit-exactly.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

from .errors import CorruptionError, FormatError
from .grid import (
    SIGN_OCCUPIED,
    VoxelGrid,
    from_records,
    observed_array,
    signed_distance_field,
    to_records,
)
from .mesher import TriangleMesh
from .transforms import make_pose

SNAPSHOT_MAGIC = b"DBTSDF01"
_SNAPSHOT_HEADER = struct.Struct("<3I4d2B6x")


@dataclass
class ScanData:
    """Points read from one scan file, with optional per-point timestamps
    (normalized or raw, as stored) and the count of dropped non-finite rows."""

    points: np.ndarray
    timestamps: np.ndarray | None
    dropped: int


def _drop_nonfinite(points, timestamps=None):
    ok = np.all(np.isfinite(points), axis=1)
    dropped = int(points.shape[0] - np.count_nonzero(ok))
    ts = timestamps[ok] if timestamps is not None else None
    return ScanData(points=points[ok], timestamps=ts, dropped=dropped)


# ---------------------------------------------------------------------------
# PCD

_PCD_TYPE = {("F", 4): "<f4", ("F", 8): "<f8", ("U", 1): "u1", ("U", 2): "<u2",
             ("U", 4): "<u4", ("I", 1): "i1", ("I", 2): "<i2", ("I", 4): "<i4"}
_TIME_FIELDS = ("time", "t", "timestamp", "stamp")


def _read_pcd(path: Path) -> ScanData:
    raw = path.read_bytes()
    lines = []
    pos = 0
    header = {}
    while True:
        nl = raw.find(b"\n", pos)
        if nl < 0:
            raise CorruptionError(f"{path}: PCD header never ends")
        line = raw[pos:nl].decode("ascii", errors="replace").strip()
        pos = nl + 1
        lines.append(line)
        if line.startswith("#") or not line:
            continue
        key, _, val = line.partition(" ")
        header[key.upper()] = val
        if key.upper() == "DATA":
            break
    for req in ("FIELDS", "SIZE", "TYPE", "POINTS", "DATA"):
        if req not in header:
            raise FormatError(f"{path}: PCD header missing {req}")
    fields = header["FIELDS"].split()
    sizes = [int(s) for s in header["SIZE"].split()]
    types = header["TYPE"].split()
    if "COUNT" in header:
        counts = [int(c) for c in header["COUNT"].split()]
    else:
        counts = [1] * len(fields)
    n_points = int(header["POINTS"])
    for axis in "xyz":
        if axis not in fields:
            raise FormatError(f"{path}: PCD has no '{axis}' field")

    dtype_fields = []
    for name, size, typ, cnt in zip(fields, sizes, types, counts):
        base = _PCD_TYPE.get((typ, size))
        if base is None:
            raise FormatError(f"{path}: unsupported PCD field type {typ}{size}")
        dtype_fields.append((name, base, (cnt,)) if cnt > 1 else (name, base))
    dtype = np.dtype(dtype_fields)

    data_mode = header["DATA"].lower()
    if data_mode == "ascii":
        body = raw[pos:].decode("ascii", errors="replace")
        try:
            table = np.loadtxt(body.splitlines(), ndmin=2)
        except ValueError as e:
            raise FormatError(f"{path}: malformed ASCII PCD body: {e}") from None
        if table.shape[0] < n_points:
            raise CorruptionError(
                f"{path}: PCD declares {n_points} points, body has {table.shape[0]}"
            )
        col = 0
        columns = {}
        for name, cnt in zip(fields, counts):
            columns[name] = table[:n_points, col]
            col += cnt
        pts = np.stack([columns["x"], columns["y"], columns["z"]], axis=1)
        ts = next((columns[f] for f in _TIME_FIELDS if f in columns), None)
    elif data_mode == "binary":
        need = n_points * dtype.itemsize
        payload = raw[pos : pos + need]
        if len(payload) < need:
            raise CorruptionError(
                f"{path}: binary PCD truncated at byte {pos + len(payload)}"
            )
        rec = np.frombuffer(payload, dtype=dtype, count=n_points)
        pts = np.stack(
            [rec["x"].astype(np.float64), rec["y"].astype(np.float64),
             rec["z"].astype(np.float64)], axis=1
        )
        ts = None
        for f in _TIME_FIELDS:
            if f in rec.dtype.names:
                ts = rec[f].astype(np.float64)
                break
    else:
        raise FormatError(f"{path}: unsupported PCD data mode {data_mode!r}")
    return _drop_nonfinite(pts, ts)


def write_pcd(points: np.ndarray, path, binary: bool = False, timestamps=None):
    """Minimal PCD v0.7 writer (x y z [+ time]); used for synthetic scans and
    round-trip tests."""
    path = Path(path)
    points = np.asarray(points, dtype=np.float32).reshape(-1, 3)
    n = points.shape[0]
    fields, sizes, types = ["x", "y", "z"], ["4"] * 3, ["F"] * 3
    if timestamps is not None:
        fields.append("time")
        sizes.append("4")
        types.append("F")
    header = (
        "# .PCD v0.7 - Point Cloud Data file format\n"
        "VERSION 0.7\n"
        f"FIELDS {' '.join(fields)}\n"
        f"SIZE {' '.join(sizes)}\n"
        f"TYPE {' '.join(types)}\n"
        f"COUNT {' '.join('1' for _ in fields)}\n"
        f"WIDTH {n}\nHEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\nPOINTS {n}\n"
        f"DATA {'binary' if binary else 'ascii'}\n"
    )
    cols = points
    if timestamps is not None:
        cols = np.column_stack([points, np.asarray(timestamps, dtype=np.float32)])
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        if binary:
            f.write(np.ascontiguousarray(cols, dtype="<f4").tobytes())
        else:
            np.savetxt(f, cols.astype(np.float64), fmt="%.9g")


# ---------------------------------------------------------------------------
# PLY

_PLY_TYPE = {"float": "<f4", "float32": "<f4", "double": "<f8", "float64": "<f8",
             "uchar": "u1", "uint8": "u1", "char": "i1", "int8": "i1",
             "short": "<i2", "ushort": "<u2", "int": "<i4", "int32": "<i4",
             "uint": "<u4", "uint32": "<u4"}


def _parse_ply_header(raw: bytes, path: Path):
    end = raw.find(b"end_header\n")
    if not raw.startswith(b"ply") or end < 0:
        raise FormatError(f"{path}: not a PLY file")
    body_at = end + len(b"end_header\n")
    text = raw[:end].decode("ascii", errors="replace").splitlines()
    fmt = None
    elements = []  # (name, count, [(prop_name, type) or ("__list__", ...)])
    for line in text[1:]:
        tok = line.split()
        if not tok or tok[0] == "comment":
            continue
        if tok[0] == "format":
            fmt = tok[1]
        elif tok[0] == "element":
            elements.append((tok[1], int(tok[2]), []))
        elif tok[0] == "property":
            if not elements:
                raise FormatError(f"{path}: PLY property before element")
            if tok[1] == "list":
                elements[-1][2].append(("__list__", tok[2], tok[3], tok[4]))
            else:
                elements[-1][2].append((tok[2], tok[1]))
    if fmt not in ("ascii", "binary_little_endian"):
        raise FormatError(f"{path}: unsupported PLY format {fmt!r}")
    return fmt, elements, body_at


def _read_ply(path: Path) -> ScanData:
    raw = path.read_bytes()
    fmt, elements, pos = _parse_ply_header(raw, path)
    vertex = next((e for e in elements if e[0] == "vertex"), None)
    if vertex is None:
        raise FormatError(f"{path}: PLY has no vertex element")
    _, count, props = vertex
    if any(p[0] == "__list__" for p in props):
        raise FormatError(f"{path}: list properties on vertex element unsupported")
    names = [p[0] for p in props]
    for axis in "xyz":
        if axis not in names:
            raise FormatError(f"{path}: PLY vertex lacks '{axis}'")
    if fmt == "ascii":
        body = raw[pos:].decode("ascii", errors="replace").splitlines()
        rows = []
        for line in body:
            if len(rows) == count:
                break
            if line.strip():
                rows.append([float(v) for v in line.split()[: len(names)]])
        if len(rows) < count:
            raise CorruptionError(f"{path}: PLY declares {count} vertices, found {len(rows)}")
        table = np.asarray(rows)
        pts = np.stack([table[:, names.index(a)] for a in "xyz"], axis=1)
    else:
        dtype = np.dtype([(n, _PLY_TYPE[t]) for n, t in props])
        need = count * dtype.itemsize
        if len(raw) - pos < need:
            raise CorruptionError(f"{path}: binary PLY truncated")
        rec = np.frombuffer(raw, dtype=dtype, count=count, offset=pos)
        pts = np.stack([rec[a].astype(np.float64) for a in "xyz"], axis=1)
    return _drop_nonfinite(pts)


# ---------------------------------------------------------------------------
# scan dispatch

def read_scan(path) -> ScanData:
    """Read a point-cloud file (PCD v0.7, PLY, or whitespace XYZ text)."""
    path = Path(path)
    if not path.exists():
        raise FormatError(f"scan file not found: {path}")
    suffix = path.suffix.lower()
    head = path.open("rb").read(16)
    if suffix == ".pcd" or head.startswith(b"# .PCD") or head.startswith(b"VERSION"):
        return _read_pcd(path)
    if suffix == ".ply" or head.startswith(b"ply"):
        return _read_ply(path)
    if suffix in (".xyz", ".txt"):
        try:
            table = np.loadtxt(path, ndmin=2)
        except ValueError as e:
            raise FormatError(f"{path}: malformed XYZ text: {e}") from None
        if table.size == 0:
            return ScanData(np.zeros((0, 3)), None, 0)
        if table.shape[1] < 3:
            raise FormatError(f"{path}: XYZ text needs at least 3 columns")
        return _drop_nonfinite(table[:, :3])
    raise FormatError(f"{path}: unrecognized scan format")


# ---------------------------------------------------------------------------
# trajectories (TUM)

@dataclass
class Trajectory:
    times: np.ndarray  # (n,), strictly increasing seconds
    translations: np.ndarray  # (n, 3)
    rotations: Rotation  # batch of n

    def __len__(self) -> int:
        return self.times.shape[0]

    def pose(self, i: int) -> np.ndarray:
        return make_pose(self.rotations[i], self.translations[i])


def read_trajectory(path) -> Trajectory:
    """TUM format: "t tx ty tz qx qy qz qw" per line, '#' comments allowed."""
    path = Path(path)
    if not path.exists():
        raise FormatError(f"trajectory file not found: {path}")
    times, trans, quats = [], [], []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 8:
            raise FormatError(f"{path}:{lineno}: expected 8 fields, got {len(parts)}")
        try:
            vals = [float(v) for v in parts]
        except ValueError:
            raise FormatError(f"{path}:{lineno}: non-numeric field") from None
        q = np.array(vals[4:8])
        norm = np.linalg.norm(q)
        if abs(norm - 1.0) > 1e-3:
            raise FormatError(f"{path}:{lineno}: quaternion norm {norm:.6f} too far from 1")
        times.append(vals[0])
        trans.append(vals[1:4])
        quats.append(q / norm)
    if not times:
        raise FormatError(f"{path}: trajectory has no records")
    times = np.asarray(times)
    if np.any(np.diff(times) <= 0):
        raise FormatError(f"{path}: timestamps are not strictly increasing")
    return Trajectory(
        times=times,
        translations=np.asarray(trans),
        rotations=Rotation.from_quat(np.asarray(quats)),
    )


def lookup_pose(traj: Trajectory, t: float) -> np.ndarray:
    """Pose at time t: translation lerp + rotation slerp between bracketing
    records, clamped at the trajectory ends."""
    times = traj.times
    if t <= times[0]:
        return traj.pose(0)
    if t >= times[-1]:
        return traj.pose(len(traj) - 1)
    j = int(np.searchsorted(times, t, side="right"))
    i = j - 1
    u = (t - times[i]) / (times[j] - times[i])
    rot = Slerp(times[i : j + 1], traj.rotations[i : j + 1])(t)
    trans = (1.0 - u) * traj.translations[i] + u * traj.translations[j]
    return make_pose(rot, trans)


# ---------------------------------------------------------------------------
# mesh writers

MESH_FORMATS = ("ply_binary", "ply_ascii", "obj")


def write_mesh(mesh: TriangleMesh, path, fmt: str = "ply_binary") -> None:
    path = Path(path)
    if fmt == "obj":
        _write_obj(mesh, path)
    elif fmt in ("ply_ascii", "ply_binary"):
        _write_ply(mesh, path, binary=(fmt == "ply_binary"))
    else:
        raise FormatError(f"unknown mesh format {fmt!r}")


def _write_ply(mesh: TriangleMesh, path: Path, binary: bool) -> None:
    nv, nf = mesh.vertices.shape[0], mesh.triangles.shape[0]
    with_normals = mesh.normals is not None
    header = ["ply", f"format {'binary_little_endian' if binary else 'ascii'} 1.0",
              f"element vertex {nv}",
              "property double x", "property double y", "property double z"]
    if with_normals:
        header += ["property double nx", "property double ny", "property double nz"]
    header += [f"element face {nf}", "property list uchar int vertex_indices",
               "end_header"]
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        verts = mesh.vertices
        if with_normals:
            verts = np.column_stack([mesh.vertices, mesh.normals])
        if binary:
            f.write(np.ascontiguousarray(verts, dtype="<f8").tobytes())
            if nf:
                face_dtype = np.dtype([("n", "u1"), ("idx", "<i4", (3,))])
                faces = np.empty(nf, dtype=face_dtype)
                faces["n"] = 3
                faces["idx"] = mesh.triangles
                f.write(faces.tobytes())
        else:
            np.savetxt(f, verts, fmt="%.17g")
            for tri in mesh.triangles:
                f.write(f"3 {tri[0]} {tri[1]} {tri[2]}\n".encode("ascii"))


def _write_obj(mesh: TriangleMesh, path: Path) -> None:
    with open(path, "w") as f:
        for v in mesh.vertices:
            f.write(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
        if mesh.normals is not None:
            for n in mesh.normals:
                f.write(f"vn {n[0]:.17g} {n[1]:.17g} {n[2]:.17g}\n")
        for tri in mesh.triangles:  # OBJ indices are 1-based
            f.write(f"f {tri[0] + 1} {tri[1] + 1} {tri[2] + 1}\n")


def read_mesh_ply(path) -> TriangleMesh:
    """Read back a PLY mesh written by write_mesh (vertices + faces)."""
    path = Path(path)
    raw = path.read_bytes()
    fmt, elements, pos = _parse_ply_header(raw, path)
    verts = np.zeros((0, 3))
    normals = None
    faces = np.zeros((0, 3), dtype=np.int64)
    if fmt == "ascii":
        lines = [ln for ln in raw[pos:].decode("ascii").splitlines() if ln.strip()]
        cursor = 0
        for name, count, props in elements:
            block = lines[cursor : cursor + count]
            cursor += count
            if name == "vertex":
                table = np.asarray([[float(v) for v in ln.split()] for ln in block])
                table = table.reshape(count, -1) if count else np.zeros((0, 3))
                verts = table[:, :3] if count else verts
                if count and table.shape[1] >= 6:
                    normals = table[:, 3:6]
            elif name == "face" and count:
                faces = np.asarray(
                    [[int(v) for v in ln.split()[1:4]] for ln in block], dtype=np.int64
                )
    else:
        for name, count, props in elements:
            if name == "vertex":
                dtype = np.dtype([(n, _PLY_TYPE[t]) for n, t in props])
                need = count * dtype.itemsize
                if len(raw) - pos < need:
                    raise CorruptionError(f"{path}: binary PLY truncated")
                rec = np.frombuffer(raw, dtype=dtype, count=count, offset=pos)
                pos += need
                verts = np.stack([rec[a].astype(np.float64) for a in "xyz"], axis=1)
                if "nx" in rec.dtype.names:
                    verts_n = np.stack(
                        [rec[a].astype(np.float64) for a in ("nx", "ny", "nz")], axis=1
                    )
                    normals = verts_n
            elif name == "face":
                face_dtype = np.dtype([("n", "u1"), ("idx", "<i4", (3,))])
                need = count * face_dtype.itemsize
                if len(raw) - pos < need:
                    raise CorruptionError(f"{path}: binary PLY truncated in faces")
                rec = np.frombuffer(raw, dtype=face_dtype, count=count, offset=pos)
                pos += need
                faces = rec["idx"].astype(np.int64)
    return TriangleMesh(vertices=verts, triangles=faces, normals=normals)


# ---------------------------------------------------------------------------
# grid snapshot + CSV

def save_grid(grid: VoxelGrid, path) -> None:
    """Write a DBTSDF01 snapshot: magic, header, voxel records in
    linear-index order."""
    path = Path(path)
    header = _SNAPSHOT_HEADER.pack(
        *grid.dims, grid.voxel_size, *grid.origin, grid.h_max, grid.t_occ
    )
    with open(path, "wb") as f:
        f.write(SNAPSHOT_MAGIC)
        f.write(header)
        f.write(to_records(grid).tobytes())


def load_grid(path) -> VoxelGrid:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:8] != SNAPSHOT_MAGIC:
        raise CorruptionError(f"{path}: bad snapshot magic {raw[:8]!r}")
    if len(raw) < 8 + _SNAPSHOT_HEADER.size:
        raise CorruptionError(f"{path}: snapshot header truncated")
    nx, ny, nz, voxel_size, ox, oy, oz, h_max, t_occ = _SNAPSHOT_HEADER.unpack_from(
        raw, 8
    )
    if min(nx, ny, nz) < 1 or voxel_size <= 0:
        raise CorruptionError(f"{path}: degenerate snapshot header")
    n = nx * ny * nz
    body = raw[8 + _SNAPSHOT_HEADER.size :]
    if len(body) < n * 8:
        raise CorruptionError(
            f"{path}: snapshot payload short ({len(body)} < {n * 8} bytes)"
        )
    rec = np.frombuffer(body, dtype=np.dtype(
        [("mask", "<u4"), ("sign", "u1"), ("hits", "u1"), ("reserved", "<u2")]
    ), count=n)
    return from_records(rec, (nx, ny, nz), voxel_size, (ox, oy, oz), h_max, t_occ)


CSV_HEADER = "x,y,z,sdf,hits,sign"


def export_grid_csv(grid: VoxelGrid, path, include: str = "observed") -> int:
    """Dump selected voxels as CSV rows (voxel centers in meters); returns
    the row count. include: "observed" or "occupied_only"."""
    if include == "observed":
        sel = observed_array(grid)
    elif include == "occupied_only":
        sel = grid.sign == SIGN_OCCUPIED
    else:
        raise FormatError(f"unknown CSV selection {include!r}")
    field, _ = signed_distance_field(grid)
    ix, iy, iz = np.nonzero(sel)
    centers = grid.origin + (np.stack([ix, iy, iz], axis=1) + 0.5) * grid.voxel_size
    with open(path, "w") as f:
        f.write(CSV_HEADER + "\n")
        for (x, y, z), sdf, h, s in zip(
            centers, field[ix, iy, iz], grid.hits[ix, iy, iz], grid.sign[ix, iy, iz]
        ):
            f.write(f"{x:.17g},{y:.17g},{z:.17g},{sdf:.17g},{int(h)},{int(s)}\n")
    return int(ix.size)


# ---------------------------------------------------------------------------
# scan/pose association

_FLOAT_STEM = re.compile(r"([-+]?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?)\s*$")


def scan_timestamp(path) -> float | None:
    """Timestamp encoded in a scan filename stem (trailing float), if any."""
    m = _FLOAT_STEM.search(Path(path).stem)
    return float(m.group(1)) if m else None
