"""Compare the compiled and the numpy accumulation kernels.

Runs a full search on a synthetic corridor for both objectives with every
available backend, checks that the grids agree and prints wall times.

    python benchmarks/bench_kernels.py --scan 10000 --map-spacing 0.08
"""
import argparse
import time

import numpy as np

from mcloc import BACKENDS, Objective, Pose2, ScanCloud, SearchSpec
from mcloc.search import build_search_index, maximum_consensus
from mcloc.synth import SceneSpec, build_scene, generate_map, scan_with_normals, simulate_scan


def make_instance(n_scan, spacing, length, seed):
    scene = build_scene(SceneSpec(layout="corridor", spacing=spacing, length=length, seed=seed))
    cloud = generate_map(scene)
    pose = Pose2(0.3, 1.0, 0.01)
    scan = scan_with_normals(simulate_scan(scene, pose))
    stride = max(1, len(scan) // n_scan)
    scan = ScanCloud(scan.points[::stride][:n_scan], scan.normals[::stride][:n_scan])
    return scan, cloud, pose


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scan", type=int, default=10000, help="scan points")
    ap.add_argument("--map-spacing", type=float, default=0.08, help="map point spacing in m")
    ap.add_argument("--length", type=float, default=80.0, help="corridor length in m")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--repeat", type=int, default=1)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    scan, cloud, pose = make_instance(args.scan, args.map_spacing, args.length, args.seed)
    spec = SearchSpec()
    t = time.perf_counter()
    index = build_search_index(cloud, spec)
    print(f"{len(scan)} scan points, {len(cloud)} map points, grid {spec.shape}, "
          f"index built in {time.perf_counter() - t:.3f} s")

    for objective in (Objective.COUNT, Objective.HELMERT):
        grids = {}
        for backend in BACKENDS:
            best = np.inf
            for _ in range(args.repeat):
                t = time.perf_counter()
                res = maximum_consensus(scan, index, spec, objective, pose,
                                        workers=args.workers, backend=backend)
                best = min(best, time.perf_counter() - t)
            grids[backend] = res.grids
            print(f"{objective.value:8s} {backend:9s} {best:8.3f} s  best {res.best_index}")
        if len(grids) == 2:
            a, b = grids["compiled"], grids["python"]
            if objective is Objective.COUNT:
                same = np.array_equal(a, b)
            else:
                same = np.allclose(a, b, rtol=1e-9, atol=1e-9)
            print(f"{objective.value:8s} backends agree: {same}")


if __name__ == "__main__":
    main()
