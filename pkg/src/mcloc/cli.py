"""Command line interface: ``mcloc run | gen | icp-study | inspect``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import ConfigError, RunConfig, load_config
from .icp import IcpMap, grid_convergence_study, write_study_csv
from .io import CloudFormatError, atomic_write_text, save_cloud
from .pipeline import EpochReport, load_epoch, run_batch, run_epoch


def _override(config: RunConfig, args) -> RunConfig:
    changes = {}
    if getattr(args, "output", None):
        changes["output_dir"] = Path(args.output)
    if getattr(args, "workers", None):
        changes["workers"] = args.workers
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    return dataclasses.replace(config, **changes) if changes else config


def _fmt_num(v, spec=".4g"):
    return "-" if v is None else format(v, spec)


def print_report(rep: EpochReport, out=None) -> None:
    out = out or sys.stdout
    x, y, h = rep.initial_pose
    print(f"epoch {rep.epoch} [{rep.scene}] initial pose x={x:.3f} y={y:.3f} heading={h:.3f} deg", file=out)
    for r in rep.results:
        if r.offset_cells is None:
            print(f"  {r.objective:8s} error: {r.error}", file=out)
            continue
        m = r.metrics
        line = (f"  {r.objective:8s} offset cells ({r.offset_cells[0]:+d}, {r.offset_cells[1]:+d}) "
                f"= ({r.offset_m[0]:+.3f}, {r.offset_m[1]:+.3f}) m, heading {r.heading_deg:+.2f} deg, "
                f"value {_fmt_num(r.best_value)}")
        print(line, file=out)
        if m is not None:
            print(f"           peak ratio {m.peak_ratio:.4f}  kurtosis {m.kurtosis:.3f}  "
                  f"KL {m.kl_divergence:.3f} nats  plateau {m.plateau_distance} cells  "
                  f"ray ({m.ray_direction[0]:+.3f}, {m.ray_direction[1]:+.3f})", file=out)
        elif r.error:
            print(f"           {r.error}", file=out)
    if rep.icp_failed_runs is not None:
        verdict = "failed" if rep.icp_epoch_failed else "ok"
        print(f"  icp study: {rep.icp_failed_runs}/25 starts missed the truth ({verdict})", file=out)
    if rep.error:
        print(f"  error: {rep.error}", file=out)


def cmd_run(args) -> int:
    config = _override(load_config(args.config), args)
    outcome = run_batch(config)
    for rep in outcome.reports:
        print_report(rep)
    print(f"wrote {outcome.csv_path}")
    return outcome.exit_code


def cmd_gen(args) -> int:
    config = _override(load_config(args.config), args)
    if config.mode != "synthetic":
        raise ConfigError("gen needs a synthetic config", "mode")
    out = Path(config.output_dir)
    epochs = [args.epoch] if args.epoch is not None else range(config.epochs)
    tables = []
    for e in epochs:
        data = load_epoch(config, e)
        t = data.truth
        map_name, scan_name = f"epoch_{e:04d}_map.xyz", f"epoch_{e:04d}_scan.xyz"
        save_cloud(out / map_name, data.map_cloud, header=f"synthetic {data.scene} map, epoch {e}")
        save_cloud(out / scan_name, data.scan,
                   header=f"synthetic {data.scene} scan, vehicle frame, epoch {e}")
        pose = f"[{t.tx!r}, {t.ty!r}, {math.degrees(t.theta)!r}]"
        tables.append(f'[[epoch]]\nmap = "{map_name}"\nscan = "{scan_name}"\n'
                      f"initial_pose = {pose}\ntruth = {pose}\n")
        print(f"epoch {e}: {len(data.map_cloud)} map points, {len(data.scan)} scan points")
    objectives = ", ".join(f'"{o.value}"' for o in config.objectives)
    text = (f'# generated from {Path(args.config).name}\nmode = "files"\n'
            f"epochs = {len(tables)}\nobjectives = [{objectives}]\n"
            f'output_dir = "results"\n\n' + "\n".join(tables))
    atomic_write_text(out / "epochs.toml", text)
    print(f"wrote {out / 'epochs.toml'}")
    return 0


def cmd_icp_study(args) -> int:
    config = _override(load_config(args.config), args)
    data = load_epoch(config, args.epoch)
    if data.truth is None:
        raise ConfigError("the ICP study needs a truth pose", f"epoch[{args.epoch}].truth")
    study = grid_convergence_study(data.scan, IcpMap.from_cloud(data.map_cloud), data.truth,
                                   config.icp, workers=config.workers)
    for (dx, dy), r in zip(study.offsets, study.runs):
        p = r.final_pose
        print(f"start ({dx:+.0f}, {dy:+.0f}) m -> error ({p.tx - data.truth.tx:+.3f}, "
              f"{p.ty - data.truth.ty:+.3f}) m, {r.iterations:2d} it, "
              f"{'reached' if r.reached_truth else 'MISSED'}")
    print(f"epoch {'failed' if study.epoch_failed else 'ok'}: {study.n_failed}/25 missed")
    if args.csv:
        Path(args.csv).parent.mkdir(parents=True, exist_ok=True)
        write_study_csv(args.csv, study)
    return 0


def cmd_inspect(args) -> int:
    if args.report:
        rep = EpochReport.from_json(Path(args.report).read_text(encoding="utf-8"))
    else:
        if not args.config:
            raise ConfigError("give a report file or --config", "config")
        config = _override(load_config(args.config), args)
        rep = run_epoch(config, args.epoch, search_workers=config.workers)
    print_report(rep)
    return 1 if rep.errored else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mcloc", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("-c", "--config", required=config_required, help="TOML run configuration")
        sp.add_argument("-o", "--output", help="output directory (overrides output_dir)")
        sp.add_argument("-w", "--workers", type=int, help="worker threads")
        sp.add_argument("-s", "--seed", type=int, help="run seed (overrides seed)")

    sp = sub.add_parser("run", help="run a batch of epochs")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("gen", help="write synthetic maps and scans as XYZ files")
    common(sp)
    sp.add_argument("-e", "--epoch", type=int, help="only this epoch")
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("icp-study", help="5x5 ICP initialisation study for one epoch")
    common(sp)
    sp.add_argument("-e", "--epoch", type=int, default=0)
    sp.add_argument("--csv", help="write the 25 runs to this CSV file")
    sp.set_defaults(func=cmd_icp_study)

    sp = sub.add_parser("inspect", help="print one epoch's results and metrics")
    common(sp, config_required=False)
    sp.add_argument("report", nargs="?", help="epoch JSON report written by 'run'")
    sp.add_argument("-e", "--epoch", type=int, default=0)
    sp.set_defaults(func=cmd_inspect)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, CloudFormatError, FileNotFoundError) as exc:
        print(f"mcloc: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
