"""Command-line front end: fuse, mesh, eval, export, bench, info.

Exit codes: 0 success, 2 configuration, 3 format, 4 corruption,
5 evaluation, 6 resource.
"""

from __future__ import annotations

import json
import statistics
import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from . import io as bio
from .config import RunConfig, load_config, save_config
from .errors import (
    BitsdfError,
    ConfigurationError,
    CorruptionError,
    EvaluationError,
    FormatError,
    ResourceError,
)
from .grid import memory_bytes, new_grid, observed_array
from .integrator import IntegrationParams, ScanFrame, integrate_frame
from .kernels import build_kernel_bank
from .mesher import extract_mesh, vertex_normals
from .metrics import evaluate, sample_mesh

EXIT_CODES = {
    ConfigurationError: 2,
    FormatError: 3,
    CorruptionError: 4,
    EvaluationError: 5,
    ResourceError: 6,
}

SCAN_SUFFIXES = (".pcd", ".ply", ".xyz", ".txt")


def _exit_code(exc: BitsdfError) -> int:
    for cls, code in EXIT_CODES.items():
        if isinstance(exc, cls):
            return code
    return 1


@click.group()
def cli():
    """CPU bitmask-TSDF mapping toolkit."""


def _config_with_overrides(config_path, **overrides) -> RunConfig:
    cfg = load_config(config_path)
    for key, val in overrides.items():
        if val is None:
            continue
        if key in ("voxel_size",):
            cfg.grid.voxel_size = val
        elif key in ("threads",):
            cfg.threads = val
        elif key in ("downsample", "t_occ", "h_max", "compensation",
                     "first_return_per_voxel"):
            setattr(cfg.integration, key, val)
        elif key in ("shadow_radius", "shadow_model", "cone_half_angle_deg"):
            setattr(cfg.kernel, key, val)
        elif key in ("scans", "trajectory", "output_dir"):
            setattr(cfg.paths, key, str(val))
    return cfg


def _list_scans(scans_dir: Path):
    if not scans_dir.is_dir():
        raise ConfigurationError(f"scans directory not found: {scans_dir}")
    files = sorted(
        p for p in scans_dir.iterdir() if p.suffix.lower() in SCAN_SUFFIXES
    )
    if not files:
        raise ConfigurationError(f"no scan files in {scans_dir}")
    stamped = [(bio.scan_timestamp(p), p) for p in files]
    if all(t is not None for t, _ in stamped):
        stamped.sort(key=lambda tp: tp[0])
        return stamped
    # No parseable stamps: pair scans with trajectory records by order.
    return [(None, p) for p in files]


def _normalized_times(ts):
    if ts is None:
        return None
    lo, hi = float(np.min(ts)), float(np.max(ts))
    if hi <= lo:
        return None
    return (ts - lo) / (hi - lo)


def run_fuse(cfg: RunConfig, echo=click.echo):
    """Fuse all scans; returns (grid, stats rows, snapshot path)."""
    out_dir = Path(cfg.paths.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if cfg.paths.trajectory is None or not Path(cfg.paths.trajectory).exists():
        raise ConfigurationError(
            f"trajectory file not found: {cfg.paths.trajectory}"
        )
    traj = bio.read_trajectory(cfg.paths.trajectory)
    scans = _list_scans(Path(cfg.paths.scans)) if cfg.paths.scans else []
    dims, origin = cfg.resolve_grid()
    grid = new_grid(dims, cfg.grid.voxel_size, origin, cfg.grid.memory_cap_bytes)
    bank = build_kernel_bank(
        size=cfg.kernel.size,
        b_az=cfg.kernel.azimuth_bins,
        b_el=cfg.kernel.elevation_bins,
        shadow_radius=cfg.resolved_shadow_radius(),
        shadow_model=cfg.kernel.shadow_model,
        cone_half_angle_deg=cfg.kernel.cone_half_angle_deg,
    )
    params = IntegrationParams(
        h_max=cfg.integration.h_max,
        t_occ=cfg.integration.t_occ,
        compensation=cfg.integration.compensation,
        downsample=cfg.integration.downsample,
        first_return_per_voxel=cfg.integration.first_return_per_voxel,
    )

    rows = []
    prev_time = None
    for frame_idx, (stamp, path) in enumerate(scans):
        data = bio.read_scan(path)
        if stamp is None:
            if frame_idx >= len(traj):
                echo(f"warning: no trajectory record for scan {path.name}, skipped")
                continue
            pose = traj.pose(frame_idx)
            prev_pose = traj.pose(frame_idx - 1) if frame_idx > 0 else None
        else:
            gap = float(np.min(np.abs(traj.times - stamp)))
            if gap > cfg.paths.max_time_gap:
                echo(
                    f"warning: scan {path.name} is {gap:.3f}s from the nearest "
                    "pose, skipped"
                )
                continue
            pose = bio.lookup_pose(traj, stamp)
            prev_pose = (
                bio.lookup_pose(traj, prev_time) if prev_time is not None else None
            )
            prev_time = stamp
        scan = ScanFrame(
            points=data.points,
            pose=pose,
            timestamps=_normalized_times(data.timestamps),
            prev_pose=prev_pose,
        )
        stats = integrate_frame(grid, bank, scan, params, threads=cfg.threads)
        rows.append(
            (frame_idx, stats.points_in, stats.points_discarded,
             stats.voxels_written, stats.elapsed_ms)
        )

    snapshot = out_dir / "map.dbtsdf"
    bio.save_grid(grid, snapshot)
    with open(out_dir / "frame_stats.csv", "w") as f:
        f.write("frame,points_in,points_discarded,voxels_written,elapsed_ms\n")
        for row in rows:
            f.write(f"{row[0]},{row[1]},{row[2]},{row[3]},{row[4]:.3f}\n")
    save_config(cfg, out_dir / "config.resolved.yaml")
    return grid, rows, snapshot


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--voxel-size", type=float, default=None)
@click.option("--threads", type=int, default=None)
@click.option("--downsample", type=int, default=None)
@click.option("--t-occ", type=int, default=None)
@click.option("--h-max", type=int, default=None)
@click.option("--compensation", type=click.Choice(["none", "yaw", "se3"]), default=None)
@click.option("--shadow-radius", type=float, default=None)
@click.option("--shadow-model", type=click.Choice(["hemisphere", "cone"]), default=None)
@click.option("--scans", type=click.Path(), default=None)
@click.option("--trajectory", type=click.Path(), default=None)
@click.option("--output-dir", type=click.Path(), default=None)
@click.option("--json", "as_json", is_flag=True)
def fuse(config_path, as_json, **overrides):
    """Fuse a scan directory into a grid snapshot."""
    cfg = _config_with_overrides(config_path, **overrides)
    grid, rows, snapshot = run_fuse(cfg)
    summary = {
        "frames": len(rows),
        "points": int(sum(r[1] for r in rows)),
        "discarded": int(sum(r[2] for r in rows)),
        "mean_frame_ms": (
            float(statistics.fmean(r[4] for r in rows)) if rows else 0.0
        ),
        "snapshot": str(snapshot),
        "memory_bytes": memory_bytes(grid),
    }
    if as_json:
        click.echo(json.dumps(summary, indent=2))
    else:
        click.echo(
            f"fused {summary['frames']} frames, {summary['points']} points "
            f"({summary['discarded']} discarded), "
            f"{summary['mean_frame_ms']:.1f} ms/frame -> {snapshot}"
        )


@cli.command()
@click.argument("snapshot", type=click.Path())
@click.option("-o", "--out", required=True, type=click.Path())
@click.option("--format", "fmt", type=click.Choice(list(bio.MESH_FORMATS)),
              default="ply_binary")
@click.option("--iso", type=float, default=0.0)
@click.option("--normals/--no-normals", default=False)
@click.option("--json", "as_json", is_flag=True)
def mesh(snapshot, out, fmt, iso, normals, as_json):
    """Extract the iso-surface mesh from a grid snapshot."""
    grid = bio.load_grid(snapshot)
    m = extract_mesh(grid, iso=iso)
    if normals:
        m = vertex_normals(m)
    bio.write_mesh(m, out, fmt)
    info = {"vertices": int(m.vertices.shape[0]),
            "triangles": int(m.triangles.shape[0]), "mesh": str(out)}
    if as_json:
        click.echo(json.dumps(info, indent=2))
    else:
        click.echo(f"{info['vertices']} vertices, {info['triangles']} triangles -> {out}")


@cli.command("eval")
@click.option("--pred", required=True, type=click.Path(), help="predicted mesh (PLY)")
@click.option("--gt", required=True, type=click.Path(), help="ground-truth points")
@click.option("--threshold", type=float, default=0.1)
@click.option("--samples", type=int, default=1_000_000)
@click.option("--seed", type=int, default=0)
@click.option("-o", "--out", type=click.Path(), default=None)
@click.option("--json", "as_json", is_flag=True)
def eval_cmd(pred, gt, threshold, samples, seed, out, as_json):
    """Evaluate a reconstructed mesh against ground-truth points."""
    mesh_pred = bio.read_mesh_ply(pred)
    gt_pts = bio.read_scan(gt).points
    pred_pts = sample_mesh(mesh_pred, samples, seed)
    report = evaluate(pred_pts, gt_pts, threshold)
    payload = report.to_json(seed=seed)
    if out:
        Path(out).write_text(payload)
    if as_json:
        click.echo(payload)
    else:
        click.echo(
            f"chamfer-L1 {report.chamfer_l1_m:.4f} m, "
            f"recall {report.recall_pct:.1f}%, f-score {report.fscore_pct:.1f}% "
            f"@ {threshold} m"
        )


@cli.command()
@click.argument("snapshot", type=click.Path())
@click.option("-o", "--out", required=True, type=click.Path())
@click.option("--include", type=click.Choice(["observed", "occupied_only"]),
              default="observed")
@click.option("--json", "as_json", is_flag=True)
def export(snapshot, out, include, as_json):
    """Export selected voxels of a snapshot as CSV."""
    grid = bio.load_grid(snapshot)
    n = bio.export_grid_csv(grid, out, include)
    if as_json:
        click.echo(json.dumps({"rows": n, "csv": str(out)}))
    else:
        click.echo(f"{n} rows -> {out}")


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--voxel-sizes", default="0.3,0.2,0.1,0.05",
              help="comma-separated voxel edge lengths in meters")
@click.option("--repeats", type=int, default=3)
@click.option("-o", "--out", type=click.Path(), default=None)
@click.option("--json", "as_json", is_flag=True)
def bench(config_path, voxel_sizes, repeats, out, as_json):
    """Fuse the same scans at several resolutions and report frame latency."""
    sizes = [float(s) for s in voxel_sizes.split(",") if s.strip()]
    if not sizes:
        raise ConfigurationError("no voxel sizes given")
    if repeats < 2:
        click.echo("warning: fewer than 2 repeats, std is unreliable", err=True)
    base = load_config(config_path)
    results = []
    for size in sizes:
        cfg = RunConfig(
            grid=replace(base.grid, voxel_size=size),
            kernel=replace(base.kernel),
            integration=replace(base.integration),
            paths=replace(base.paths,
                          output_dir=str(Path(base.paths.output_dir) / f"vs_{size}")),
            threads=base.threads,
        )
        latencies = []
        mem = 0
        for _ in range(max(repeats, 1)):
            grid, rows, _snap = run_fuse(cfg, echo=lambda *_: None)
            latencies.extend(r[4] for r in rows)
            mem = memory_bytes(grid)
        mean = float(np.mean(latencies))
        std = float(np.std(latencies))
        results.append(
            {"voxel_size": size, "mean_ms": mean, "std_ms": std,
             "samples": len(latencies), "memory_bytes": mem}
        )
    ratio = (
        max(r["mean_ms"] for r in results) / min(r["mean_ms"] for r in results)
        if results else 0.0
    )
    if out:
        with open(out, "w") as f:
            f.write("voxel_size,mean_ms,std_ms,samples,memory_bytes\n")
            for r in results:
                f.write(
                    f"{r['voxel_size']},{r['mean_ms']:.3f},{r['std_ms']:.3f},"
                    f"{r['samples']},{r['memory_bytes']}\n"
                )
    if as_json:
        click.echo(json.dumps({"results": results, "max_min_ratio": ratio}, indent=2))
    else:
        for r in results:
            click.echo(
                f"voxel {r['voxel_size']:>5} m: {r['mean_ms']:8.1f} ± "
                f"{r['std_ms']:.1f} ms/frame, {r['memory_bytes']} bytes"
            )
        click.echo(f"max/min mean latency ratio: {ratio:.3f}")


@cli.command()
@click.argument("snapshot", type=click.Path())
@click.option("--json", "as_json", is_flag=True)
def info(snapshot, as_json):
    """Print snapshot header and occupancy summary."""
    grid = bio.load_grid(snapshot)
    observed = int(np.count_nonzero(observed_array(grid)))
    occupied = int(np.count_nonzero(grid.sign == 0))
    payload = {
        "dims": list(grid.dims),
        "voxel_size": grid.voxel_size,
        "origin": [float(v) for v in grid.origin],
        "h_max": grid.h_max,
        "t_occ": grid.t_occ,
        "voxels": grid.num_voxels,
        "observed": observed,
        "occupied": occupied,
        "memory_bytes": memory_bytes(grid),
    }
    if as_json:
        click.echo(json.dumps(payload, indent=2))
    else:
        for k, v in payload.items():
            click.echo(f"{k}: {v}")


def main():
    try:
        cli(standalone_mode=False)
    except click.ClickException as e:
        e.show()
        sys.exit(e.exit_code)
    except click.Abort:
        sys.exit(130)
    except BitsdfError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(_exit_code(e))


if __name__ == "__main__":
    main()
