"""Run configuration read from TOML.

Example::

    mode = "synthetic"          # or "files"
    epochs = 10
    seed = 1
    objectives = ["count", "helmert"]
    icp_study = false
    output_dir = "out"
    workers = 1
    heatmaps = false
    grid_csv = false            # raw objective grids, one CSV per heading
    record_timing = false

    [search]                    # optional overrides
    half_extent_xy = 3.0
    cell_size = 0.06
    heading_half_range_deg = 2.0
    heading_step_deg = 0.5
    epsilon = 0.06
    match_mode = "all_pairs"

    [icp]                       # optional overrides
    rejection_radius = 2.5

    [[scene]]                   # synthetic mode; epochs cycle through scenes
    layout = "corridor"
    bias_factor = 3.0

    [[epoch]]                   # files mode; one table per epoch
    map = "map.xyz"
    scan = "scan.xyz"
    initial_pose = [0.0, 0.0, 0.0]   # x, y, heading in degrees
    truth = [0.0, 0.0, 0.0]          # optional, needed for the ICP study

Relative file paths are resolved against the config file's directory.
"""
from __future__ import annotations

import dataclasses
import math
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .core import MatchMode, Pose2, SearchSpec
from .icp import IcpParams
from .objectives import Objective
from .synth import EpochSpec, Layout


class ConfigError(ValueError):
    def __init__(self, message: str, field: str = "", line: Optional[int] = None):
        where = field
        if line is not None:
            where = f"line {line}: {field}" if field else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)
        self.field = field
        self.line = line


@dataclass(frozen=True)
class FileEpoch:
    map_path: Path
    scan_path: Path
    initial_pose: Pose2
    truth: Optional[Pose2] = None


@dataclass(frozen=True)
class RunConfig:
    mode: str = "synthetic"
    epochs: int = 1
    seed: int = 0
    objectives: tuple[Objective, ...] = (Objective.COUNT, Objective.HELMERT)
    icp_study: bool = False
    output_dir: Path = Path("mcloc-out")
    workers: int = 1
    heatmaps: bool = False
    grid_csv: bool = False
    record_timing: bool = False
    search: SearchSpec = field(default_factory=SearchSpec)
    icp: IcpParams = field(default_factory=IcpParams)
    scenes: tuple[EpochSpec, ...] = (EpochSpec(),)
    files: tuple[FileEpoch, ...] = ()
    scan_normal_k: int = 30

    def __post_init__(self):
        if self.mode not in ("synthetic", "files"):
            raise ConfigError(f"unknown mode {self.mode!r}", "mode")
        if self.epochs < 1:
            raise ConfigError("must be at least 1", "epochs")
        if not self.objectives:
            raise ConfigError("select at least one objective", "objectives")
        if self.workers < 1:
            raise ConfigError("must be at least 1", "workers")
        if self.mode == "synthetic" and not self.scenes:
            raise ConfigError("synthetic mode needs at least one [[scene]]", "scene")
        if self.mode == "files" and len(self.files) != self.epochs:
            raise ConfigError("files mode needs one [[epoch]] table per epoch", "epoch")


_TOP_KEYS = {
    "mode", "epochs", "seed", "objectives", "icp_study", "output_dir", "workers",
    "heatmaps", "grid_csv", "record_timing", "search", "icp", "scene", "epoch", "scan_normal_k",
}
_SEARCH_KEYS = {
    "half_extent_xy", "cell_size", "heading_half_range_deg", "heading_step_deg",
    "epsilon", "match_mode",
}
_ICP_KEYS = {f.name for f in dataclasses.fields(IcpParams)}
_SCENE_KEYS = {f.name for f in dataclasses.fields(EpochSpec)}
_EPOCH_KEYS = {"map", "scan", "initial_pose", "truth"}


def _line_of(text: str, key: str) -> Optional[int]:
    pattern = re.compile(rf"^\s*{re.escape(key)}\s*=", re.MULTILINE)
    m = pattern.search(text)
    if m is None:
        pattern = re.compile(rf"^\s*\[+\s*{re.escape(key)}\s*\]+", re.MULTILINE)
        m = pattern.search(text)
    return None if m is None else text.count("\n", 0, m.start()) + 1


class _Reader:
    def __init__(self, text: str):
        self.text = text

    def fail(self, path: str, message: str):
        key = path.split(".")[-1].split("[")[0]
        raise ConfigError(message, path, _line_of(self.text, key))

    def check_keys(self, table: dict, allowed: set, prefix: str):
        for k in table:
            if k not in allowed:
                self.fail(f"{prefix}{k}", "unknown key")

    def get(self, table: dict, key: str, kind, default, prefix: str = ""):
        path = f"{prefix}{key}"
        if key not in table:
            return default
        v = table[key]
        if kind is float and isinstance(v, int) and not isinstance(v, bool):
            v = float(v)
        if kind is bool and not isinstance(v, bool):
            self.fail(path, f"expected true or false, got {v!r}")
        if kind is int and (isinstance(v, bool) or not isinstance(v, int)):
            self.fail(path, f"expected an integer, got {v!r}")
        if kind is float and not isinstance(v, float):
            self.fail(path, f"expected a number, got {v!r}")
        if kind is float and not math.isfinite(v):
            self.fail(path, "must be finite")
        if kind is str and not isinstance(v, str):
            self.fail(path, f"expected a string, got {v!r}")
        if kind is list and not isinstance(v, list):
            self.fail(path, f"expected a list, got {v!r}")
        return v


def _pose(reader: _Reader, value, path: str) -> Pose2:
    if (not isinstance(value, list) or len(value) != 3
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)):
        reader.fail(path, "expected [x, y, heading_deg]")
    return Pose2(float(value[0]), float(value[1]), math.radians(float(value[2])))


def parse_config(text: str, base_dir: Path = Path(".")) -> RunConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from None
    r = _Reader(text)
    r.check_keys(data, _TOP_KEYS, "")

    mode = r.get(data, "mode", str, "synthetic")
    objectives_raw = r.get(data, "objectives", list, ["count", "helmert"])
    objectives = []
    for name in objectives_raw:
        try:
            obj = Objective(name)
        except ValueError:
            r.fail("objectives", f"unknown objective {name!r} (use 'count' or 'helmert')")
        if obj not in objectives:
            objectives.append(obj)
    if not objectives:
        r.fail("objectives", "select at least one objective")

    s = data.get("search", {})
    r.check_keys(s, _SEARCH_KEYS, "search.")
    defaults = SearchSpec()
    try:
        search = SearchSpec(
            half_extent_xy=r.get(s, "half_extent_xy", float, defaults.half_extent_xy, "search."),
            cell_size=r.get(s, "cell_size", float, defaults.cell_size, "search."),
            heading_half_range=math.radians(r.get(s, "heading_half_range_deg", float, 2.0, "search.")),
            heading_step=math.radians(r.get(s, "heading_step_deg", float, 0.5, "search.")),
            epsilon=r.get(s, "epsilon", float, None, "search."),
            match_mode=MatchMode(r.get(s, "match_mode", str, "all_pairs", "search.")),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc), "search", _line_of(text, "search")) from None

    ic = data.get("icp", {})
    r.check_keys(ic, _ICP_KEYS, "icp.")
    icp_kwargs = {}
    for f in dataclasses.fields(IcpParams):
        if f.name in ic:
            kind = int if f.name == "max_iterations" else float
            if f.name == "max_points" and ic[f.name] is not None:
                kind = int
            icp_kwargs[f.name] = r.get(ic, f.name, kind, None, "icp.")
    icp = IcpParams(**icp_kwargs)

    scenes = []
    for k, sc in enumerate(data.get("scene", [])):
        prefix = f"scene[{k}]."
        r.check_keys(sc, _SCENE_KEYS, prefix)
        kwargs = dict(sc)
        if "layout" in kwargs:
            try:
                kwargs["layout"] = Layout(kwargs["layout"])
            except ValueError:
                r.fail(prefix + "layout", f"unknown layout {kwargs['layout']!r}")
        try:
            scenes.append(EpochSpec(**kwargs))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), prefix.rstrip("."), _line_of(text, "scene")) from None

    files = []
    for k, ep in enumerate(data.get("epoch", [])):
        prefix = f"epoch[{k}]."
        r.check_keys(ep, _EPOCH_KEYS, prefix)
        for key in ("map", "scan"):
            if key not in ep:
                r.fail(prefix + key, "missing")
        truth = _pose(r, ep["truth"], prefix + "truth") if "truth" in ep else None
        init = _pose(r, ep["initial_pose"], prefix + "initial_pose") if "initial_pose" in ep else truth
        if init is None:
            r.fail(prefix + "initial_pose", "missing")
        files.append(FileEpoch(base_dir / r.get(ep, "map", str, "", prefix),
                               base_dir / r.get(ep, "scan", str, "", prefix), init, truth))

    epochs_default = len(files) if mode == "files" else 1
    epochs = r.get(data, "epochs", int, epochs_default)
    if epochs < 1:
        r.fail("epochs", "must be at least 1")
    workers = r.get(data, "workers", int, 1)
    if workers < 1:
        r.fail("workers", "must be at least 1")
    k_normals = r.get(data, "scan_normal_k", int, 30)
    if k_normals < 3:
        r.fail("scan_normal_k", "must be at least 3")

    out = Path(r.get(data, "output_dir", str, "mcloc-out"))
    try:
        return RunConfig(
            mode=mode,
            epochs=epochs,
            seed=r.get(data, "seed", int, 0),
            objectives=tuple(objectives),
            icp_study=r.get(data, "icp_study", bool, False),
            output_dir=out if out.is_absolute() else base_dir / out,
            workers=workers,
            heatmaps=r.get(data, "heatmaps", bool, False),
            grid_csv=r.get(data, "grid_csv", bool, False),
            record_timing=r.get(data, "record_timing", bool, False),
            search=search,
            icp=icp,
            scenes=tuple(scenes) if scenes else (EpochSpec(),),
            files=tuple(files),
            scan_normal_k=k_normals,
        )
    except ConfigError as exc:
        raise ConfigError(str(exc).split(": ", 1)[-1], exc.field, _line_of(text, exc.field)) from None


def load_config(path) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), path.parent)
