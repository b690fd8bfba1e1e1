"""Command-line entry point.

Subcommands map onto the experiment pipelines: simulate (snapshots only),
classify (one training/evaluation run), sweep (electrode-count sweep),
compartments, freqgen, and render (re-render images from saved files).
Exit codes: 0 success, 1 validation error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import experiments, io, layout
from .config import parse_config, resolved_text
from .errors import ConfigError, GeometryError, SpinresError, StabilityError
from .geometry import build_geometry, build_regions, initial_state
from .llg import relax, run


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, default=None, help="config file (INI-style)")
    p.add_argument("--profile", choices=("paper", "fast"), default=None)
    p.add_argument("--seed", type=int, default=None, help="base seed for schedules and layouts")
    p.add_argument("--out", type=Path, default=None, help="output directory")
    p.add_argument("--threads", type=int, default=None, help="integration threads (0 = auto)")


def _load_config(args):
    overrides = {}
    if args.profile:
        overrides[("experiment", "profile")] = args.profile
    if args.seed is not None:
        overrides[("schedule", "train_seed")] = args.seed
        overrides[("schedule", "test_seed")] = args.seed + 1
        overrides[("experiment", "layout_seed")] = args.seed + 100
    if args.threads is not None:
        overrides[("integrator", "threads")] = args.threads
    return parse_config(args.config, overrides)


def _out_dir(args) -> Path:
    out = args.out or Path("runs/latest")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    config = _load_config(args)
    out = _out_dir(args)
    (out / "config.resolved").write_text(resolved_text(config))
    mat = build_geometry(config.grid, config.material)
    state = relax(initial_state(mat), mat, config.integrator)
    sched = experiments.make_schedule(
        config, config.schedule.n_train_sections, config.schedule.train_seed
    )
    steps = config.snapshot_steps or tuple(
        range(args.snap_start, args.snap_start + args.snap_count * args.snap_every, args.snap_every)
    )
    steps = tuple(s for s in steps if s < sched.total_steps)

    def sink(step, frame):
        path = out / f"snapshot_{step:06d}.spnx"
        io.write_snapshot(path, frame, step)
        io.write_ppm(out / f"snapshot_{step:06d}.ppm", experiments.render_snapshot(frame))

    run(state, mat, sched, np.empty((0, 2)), config.integrator,
        snapshot_steps=steps, snapshot_sink=sink)
    (out / "schedule.txt").write_text(sched.to_text())
    print(f"wrote {len(steps)} snapshot frames to {out}")
    return 0


def cmd_classify(args) -> int:
    config = _load_config(args)
    out = _out_dir(args)
    rec, model, train_run, _ = experiments.run_classification(config)
    regions = build_regions(config.grid, config.material)
    electrodes = experiments.make_layout(
        regions, config.arrangement, config.n_o, seed=config.sweep.layout_seed
    )

    report = experiments.ExperimentReport(
        records=[rec], config_hash=experiments.config_hash(config)
    )
    report.save(out)
    (out / "config.resolved").write_text(resolved_text(config))
    io.write_electrodes_csv(out / "electrodes.csv", electrodes)
    rows = np.column_stack([electrodes.positions, model.w_out])
    io.write_matrix_csv(out / "weights.csv", rows, ["ix", "iy", "w"])
    if electrodes.arrangement == layout.FULL:
        rgb, _ = experiments.render_weight_map(model, electrodes, regions)
        io.write_ppm(out / "weights.ppm", rgb)
    (out / "schedule.txt").write_text(train_run.schedule.to_text())
    print(f"rmse={rec.rmse:.4f} correct_rate={rec.correct_rate:.4f} "
          f"settled={rec.correct_rate_settled:.4f}")
    return 0


def cmd_sweep(args) -> int:
    config = _load_config(args)
    report = experiments.sweep_electrode_count(config, out_dir=_out_dir(args))
    for agg in report.aggregates():
        print(f"{agg['arrangement']:>10} n_o={agg['n_o']:<4} "
              f"rmse={agg['mean_rmse']:.4f}+-{agg['std_rmse']:.4f} "
              f"rate={agg['mean_correct_rate']:.4f}+-{agg['std_correct_rate']:.4f}")
    return 0


def cmd_compartments(args) -> int:
    config = _load_config(args)
    report = experiments.sweep_compartments(config, out_dir=_out_dir(args))
    for agg in report.aggregates():
        print(f"compartment={agg['compartment']} n_o={agg['n_o']:<4} "
              f"rmse={agg['mean_rmse']:.4f} rate={agg['mean_correct_rate']:.4f}")
    return 0


def cmd_freqgen(args) -> int:
    config = _load_config(args)
    report = experiments.frequency_generalization(config, out_dir=_out_dir(args))
    for agg in report.aggregates():
        if agg["waveform"] == "all":
            continue
        print(f"f={agg['freq_ghz']:.3f} GHz {agg['waveform']:>6}: rmse={agg['mean_rmse']:.4f}")
    return 0


def cmd_render(args) -> int:
    if args.weights is None and args.snapshot is None:
        raise ConfigError("render needs --weights or --snapshot")
    if args.weights is not None:
        header, rows = io.read_matrix_csv(args.weights)
        if header[:2] != ["ix", "iy"]:
            raise ConfigError(f"{args.weights}: expected columns ix,iy,w")
        ix = rows[:, 0].astype(int)
        iy = rows[:, 1].astype(int)
        w = rows[:, 2]
        gx = ix - ix.min()
        gy = iy - iy.min()
        grid = np.zeros((gy.max() + 1, gx.max() + 1))
        grid[gy, gx] = w
        target = Path(args.out_file or Path(args.weights).with_suffix(".ppm"))
        io.write_ppm(target, io.diverging_rgb(grid))
        print(f"wrote {target} ({grid.shape[1]}x{grid.shape[0]})")
    if args.snapshot is not None:
        frame, idx = io.read_snapshot(args.snapshot)
        target = Path(args.out_file or Path(args.snapshot).with_suffix(".ppm"))
        io.write_ppm(target, experiments.render_snapshot(frame))
        print(f"wrote {target} (frame {idx}, {frame.shape[1]}x{frame.shape[0]})")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="spinres", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="integrate the drive and export snapshots")
    _add_common(p)
    p.add_argument("--snap-start", type=int, default=0)
    p.add_argument("--snap-every", type=int, default=1)
    p.add_argument("--snap-count", type=int, default=10)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("classify", help="single train/test classification run")
    _add_common(p)
    p.set_defaults(fn=cmd_classify)

    p = sub.add_parser("sweep", help="electrode-count sweep with repeats")
    _add_common(p)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("compartments", help="per-compartment electrode sweep")
    _add_common(p)
    p.set_defaults(fn=cmd_compartments)

    p = sub.add_parser("freqgen", help="frequency-generalization study")
    _add_common(p)
    p.set_defaults(fn=cmd_freqgen)

    p = sub.add_parser("render", help="re-render images from saved CSV/binary files")
    p.add_argument("--weights", type=Path, default=None)
    p.add_argument("--snapshot", type=Path, default=None)
    p.add_argument("--out-file", type=Path, default=None)
    p.set_defaults(fn=cmd_render)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except (ConfigError, StabilityError, GeometryError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except SpinresError as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
