import math

import numpy as np
import pytest

from mcloc import MapCloud, ScanCloud


def random_instance(rng, n_scan=200, n_map=2000, extent=1.0, depth=0.4, nan_every=0):
    """Random points and unit normals, dense enough to produce matches."""
    q = rng.uniform([-extent, -extent, 0.0], [extent, extent, depth], (n_map, 3))
    mn = rng.normal(size=(n_map, 3))
    mn /= np.linalg.norm(mn, axis=1)[:, None]
    p = rng.uniform([-extent, -extent, 0.0], [extent, extent, depth], (n_scan, 3))
    sn = rng.normal(size=(n_scan, 3))
    sn /= np.linalg.norm(sn, axis=1)[:, None]
    if nan_every:
        sn[::nan_every] = np.nan
    return ScanCloud(p, sn), MapCloud(q, mn)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def small_spec(**kw):
    from mcloc import SearchSpec

    base = dict(half_extent_xy=0.63, cell_size=0.06,
                heading_half_range=math.radians(1.0), heading_step=math.radians(1.0))
    base.update(kw)
    return SearchSpec(**base)


def pytest_configure(config):
    config._acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def criterion(request):
    """``record(number, passed, detail)`` prints and collects one verdict line."""

    def record(number, passed, detail=""):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}".rstrip()
        print(line)
        request.config._acceptance_lines.append(line)
        return passed

    return record
