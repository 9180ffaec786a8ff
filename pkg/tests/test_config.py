import math
from pathlib import Path

import pytest

from mcloc import MatchMode, Objective
from mcloc.config import ConfigError, load_config, parse_config
from mcloc.synth import Layout

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


class TestParse:
    def test_defaults(self):
        c = parse_config("")
        assert c.mode == "synthetic" and c.epochs == 1
        assert c.objectives == (Objective.COUNT, Objective.HELMERT)
        assert c.search.shape == (9, 100, 100)
        assert c.icp.rejection_radius == 2.5

    def test_full(self, tmp_path):
        text = """
mode = "synthetic"
epochs = 3
seed = 4
objectives = ["helmert"]
output_dir = "res"
[search]
half_extent_xy = 1.5
heading_half_range_deg = 1
heading_step_deg = 0.25
match_mode = "one_per_scan_point"
[icp]
rejection_radius = 1.0
max_points = 100
[[scene]]
layout = "crossing"
lateral = [0.0, 1.0]
"""
        c = parse_config(text, tmp_path)
        assert c.objectives == (Objective.HELMERT,)
        assert c.search.shape == (9, 50, 50)
        assert c.search.heading_step == pytest.approx(math.radians(0.25))
        assert c.search.match_mode is MatchMode.ONE_PER_SCAN_POINT
        assert c.icp.rejection_radius == 1.0 and c.icp.max_points == 100
        assert c.scenes[0].layout is Layout.CROSSING
        assert c.output_dir == tmp_path / "res"

    def test_files_mode(self, tmp_path):
        text = """
mode = "files"
[[epoch]]
map = "m.xyz"
scan = "s.xyz"
initial_pose = [1.0, 2.0, 90.0]
"""
        c = parse_config(text, tmp_path)
        assert c.epochs == 1
        fe = c.files[0]
        assert fe.map_path == tmp_path / "m.xyz"
        assert fe.initial_pose.theta == pytest.approx(math.pi / 2) and fe.truth is None

    @pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.toml")), ids=lambda p: p.name)
    def test_shipped_configs(self, path):
        assert load_config(path).epochs >= 1


class TestErrors:
    def test_zero_objectives(self):
        with pytest.raises(ConfigError) as info:
            parse_config('epochs = 2\nobjectives = []\n')
        assert info.value.field == "objectives" and info.value.line == 2

    def test_unknown_objective(self):
        with pytest.raises(ConfigError, match="unknown objective"):
            parse_config('objectives = ["ncc"]')

    def test_unknown_key_line(self):
        with pytest.raises(ConfigError) as info:
            parse_config('seed = 1\n\n[search]\ncell = 0.1\n')
        assert info.value.field == "search.cell" and info.value.line == 4
        assert "line 4" in str(info.value)

    def test_wrong_type(self):
        with pytest.raises(ConfigError, match="expected an integer"):
            parse_config('epochs = "ten"')

    def test_zero_epochs(self):
        with pytest.raises(ConfigError):
            parse_config("epochs = 0")

    def test_bad_search(self):
        with pytest.raises(ConfigError):
            parse_config("[search]\ncell_size = -1.0\n")

    def test_bad_scene(self):
        with pytest.raises(ConfigError):
            parse_config('[[scene]]\nlayout = "maze"\n')
        with pytest.raises(ConfigError):
            parse_config("[[scene]]\nlateral = [0.0, 9.0]\n")

    def test_files_mode_needs_epochs(self):
        with pytest.raises(ConfigError):
            parse_config('mode = "files"\nepochs = 2\n[[epoch]]\nmap = "a"\nscan = "b"\ninitial_pose = [0, 0, 0]\n')

    def test_bad_pose(self):
        with pytest.raises(ConfigError, match="initial_pose"):
            parse_config('mode = "files"\n[[epoch]]\nmap = "a"\nscan = "b"\ninitial_pose = [0, 0]\n')

    def test_invalid_toml(self):
        with pytest.raises(ConfigError, match="invalid TOML"):
            parse_config("epochs = = 1")
