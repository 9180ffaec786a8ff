"""Batch runner: epochs in, per-epoch JSON reports and an aggregate CSV out."""
from __future__ import annotations

import csv
import io as _io
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .config import RunConfig
from .core import MapCloud, Pose2, ScanCloud
from .icp import IcpMap, grid_convergence_study
from .io import atomic_write_text, export_grids_csv, export_heatmap, load_map, load_scan
from .metrics import EpochMetrics, UndefinedMetricError, best_slice, epoch_metrics
from .objectives import Objective
from .search import EmptyConsensusError, build_search_index, maximum_consensus
from .synth import build_scene, generate_map, make_epoch, scan_with_normals, simulate_scan

log = logging.getLogger(__name__)

CSV_HEADER = (
    "epoch", "scene", "objective", "offset_i", "offset_j", "offset_x_m", "offset_y_m",
    "heading_index", "heading_deg", "best_value", "peak_ratio", "kurtosis",
    "kl_divergence", "plateau_distance", "ray_x", "ray_y", "icp_failed_runs",
    "icp_epoch_failed", "error",
)


@dataclass
class ObjectiveSummary:
    objective: str
    offset_cells: Optional[tuple[int, int]] = None
    offset_m: Optional[tuple[float, float]] = None
    heading_index: Optional[int] = None
    heading_deg: Optional[float] = None
    best_value: Optional[float] = None
    metrics: Optional[EpochMetrics] = None
    error: Optional[str] = None

    def as_dict(self) -> dict:
        return {
            "objective": self.objective,
            "offset_cells": None if self.offset_cells is None else list(self.offset_cells),
            "offset_m": None if self.offset_m is None else list(self.offset_m),
            "heading_index": self.heading_index,
            "heading_deg": self.heading_deg,
            "best_value": self.best_value,
            "metrics": None if self.metrics is None else self.metrics.as_dict(),
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ObjectiveSummary":
        return cls(
            d["objective"],
            None if d["offset_cells"] is None else tuple(d["offset_cells"]),
            None if d["offset_m"] is None else tuple(d["offset_m"]),
            d["heading_index"],
            d["heading_deg"],
            d["best_value"],
            None if d["metrics"] is None else EpochMetrics.from_dict(d["metrics"]),
            d["error"],
        )


@dataclass
class EpochReport:
    epoch: int
    scene: str
    initial_pose: tuple[float, float, float]
    results: list[ObjectiveSummary] = field(default_factory=list)
    icp_failed_runs: Optional[int] = None
    icp_epoch_failed: Optional[bool] = None
    wall_times: Optional[dict] = None
    error: Optional[str] = None

    @property
    def errored(self) -> bool:
        return self.error is not None

    def as_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "scene": self.scene,
            "initial_pose": list(self.initial_pose),
            "results": [r.as_dict() for r in self.results],
            "icp": None if self.icp_failed_runs is None else {
                "failed_runs": self.icp_failed_runs,
                "total_runs": 25,
                "epoch_failed": self.icp_epoch_failed,
            },
            "wall_times": self.wall_times,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EpochReport":
        icp = d.get("icp")
        return cls(
            d["epoch"],
            d["scene"],
            tuple(d["initial_pose"]),
            [ObjectiveSummary.from_dict(r) for r in d["results"]],
            None if icp is None else icp["failed_runs"],
            None if icp is None else icp["epoch_failed"],
            d.get("wall_times"),
            d.get("error"),
        )

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EpochReport":
        return cls.from_dict(json.loads(text))

    def result(self, objective) -> ObjectiveSummary:
        name = Objective(objective).value
        for r in self.results:
            if r.objective == name:
                return r
        raise KeyError(name)


@dataclass
class EpochData:
    scene: str
    scan: ScanCloud
    map_cloud: MapCloud
    initial_pose: Pose2
    truth: Optional[Pose2]


def load_epoch(config: RunConfig, epoch: int) -> EpochData:
    """Generate or read the scan and map of one epoch."""
    if config.mode == "synthetic":
        spec = config.scenes[epoch % len(config.scenes)]
        scene_spec, truth = make_epoch(spec, (config.seed, epoch))
        scene = build_scene(scene_spec)
        cloud = generate_map(scene)
        scan = scan_with_normals(simulate_scan(scene, truth), k=config.scan_normal_k)
        name = spec.layout.value + ("+bias" if spec.bias_factor != 1.0 else "")
        return EpochData(name, scan, cloud, truth, truth)
    fe = config.files[epoch]
    cloud = load_map(fe.map_path)
    scan = load_scan(fe.scan_path)
    if scan.normals is None and Objective.HELMERT in config.objectives:
        scan = scan_with_normals(scan, k=config.scan_normal_k)
    return EpochData(fe.scan_path.name, scan, cloud, fe.initial_pose, fe.truth)


def _heatmap_path(config: RunConfig, epoch: int, objective: Objective) -> Path:
    return config.output_dir / "heatmaps" / f"epoch_{epoch:04d}_{objective.value}.pgm"


def run_epoch(config: RunConfig, epoch: int, search_workers: int = 1) -> EpochReport:
    """Run every configured objective (and optionally the ICP study) on one epoch."""
    times = {}
    t0 = time.perf_counter()
    try:
        data = load_epoch(config, epoch)
    except Exception as exc:  # report and carry on with the batch
        log.exception("epoch %d: could not load data", epoch)
        return EpochReport(epoch, "", (math.nan,) * 3, error=f"{type(exc).__name__}: {exc}")
    times["load"] = time.perf_counter() - t0
    p0 = data.initial_pose
    report = EpochReport(epoch, data.scene, (p0.tx, p0.ty, math.degrees(p0.theta)))
    spec = config.search
    try:
        index = build_search_index(data.map_cloud, spec)
    except Exception as exc:
        report.error = f"{type(exc).__name__}: {exc}"
        return report

    for objective in config.objectives:
        summary = ObjectiveSummary(objective.value)
        t = time.perf_counter()
        try:
            res = maximum_consensus(data.scan, index, spec, objective, p0, workers=search_workers)
        except EmptyConsensusError as exc:
            summary.error = f"EmptyConsensusError: {exc}"
            report.results.append(summary)
            continue
        except Exception as exc:
            summary.error = f"{type(exc).__name__}: {exc}"
            report.error = summary.error
            report.results.append(summary)
            continue
        times[objective.value] = time.perf_counter() - t
        di, dj = res.offset_cells(spec)
        summary.offset_cells = (di, dj)
        summary.offset_m = (res.best_pose.tx, res.best_pose.ty)
        summary.heading_index = res.best_index.h
        summary.heading_deg = math.degrees(res.best_pose.theta)
        summary.best_value = res.best_value
        grids = res.grids
        try:
            summary.metrics = epoch_metrics(grids)
        except UndefinedMetricError as exc:
            summary.error = f"UndefinedMetricError: {exc}"
        if config.heatmaps:
            export_heatmap(best_slice(grids), _heatmap_path(config, epoch, objective))
        if config.grid_csv:
            export_grids_csv(grids, config.output_dir / "grids", f"epoch_{epoch:04d}_{objective.value}")
        report.results.append(summary)

    if config.icp_study:
        if data.truth is None:
            report.error = "the ICP study needs a truth pose"
        else:
            t = time.perf_counter()
            study = grid_convergence_study(
                data.scan, IcpMap.from_cloud(data.map_cloud), data.truth, config.icp
            )
            times["icp_study"] = time.perf_counter() - t
            report.icp_failed_runs = study.n_failed
            report.icp_epoch_failed = study.epoch_failed
    if config.record_timing:
        report.wall_times = times
    return report


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def aggregate_csv(reports: list[EpochReport]) -> str:
    """One row per (epoch, objective); failed epochs carry an error message."""
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for rep in sorted(reports, key=lambda r: r.epoch):
        rows = rep.results or [ObjectiveSummary("", error=rep.error)]
        for r in rows:
            m = r.metrics
            w.writerow([_fmt(v) for v in (
                rep.epoch, rep.scene, r.objective,
                *(r.offset_cells or (None, None)),
                *(r.offset_m or (None, None)),
                r.heading_index, r.heading_deg, r.best_value,
                *((m.peak_ratio, m.kurtosis, m.kl_divergence, m.plateau_distance,
                   m.ray_direction[0], m.ray_direction[1]) if m else (None,) * 6),
                rep.icp_failed_runs, rep.icp_epoch_failed,
                r.error or rep.error,
            )])
    return buf.getvalue()


def read_aggregate_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@dataclass
class BatchOutcome:
    reports: list[EpochReport]
    csv_path: Path
    exit_code: int


def run_batch(config: RunConfig, workers: Optional[int] = None) -> BatchOutcome:
    """Run all epochs, writing ``epochs/epoch_NNNN.json`` and ``summary.csv``.

    Epochs run on ``workers`` threads; with a single epoch the threads go to
    the heading loop instead.  Outputs do not depend on the worker count.
    The exit code is 0 iff no epoch errored.
    """
    workers = workers or config.workers
    out = Path(config.output_dir)
    (out / "epochs").mkdir(parents=True, exist_ok=True)

    def one(e):
        rep = run_epoch(config, e, search_workers=workers if config.epochs == 1 else 1)
        atomic_write_text(out / "epochs" / f"epoch_{e:04d}.json", rep.to_json())
        return rep

    if workers > 1 and config.epochs > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(one, range(config.epochs)))
    else:
        reports = [one(e) for e in range(config.epochs)]
    csv_path = out / "summary.csv"
    atomic_write_text(csv_path, aggregate_csv(reports))
    code = 0 if not any(r.errored for r in reports) else 1
    return BatchOutcome(reports, csv_path, code)
