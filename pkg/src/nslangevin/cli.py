"""Command-line pipeline: simulate datasets, fit models, evaluate and export.

Exit codes: 0 success, 2 usage or validation failure, 3 numerical failure
(partial outputs are still written).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .datagen import (
    FIXED_DURATION,
    REACTION_TIME,
    GroundTruthPreset,
    SimConfig,
    generate_dataset,
    load_dataset,
    preset_model,
    save_dataset,
)
from .grid import GridFunction, build_grid
from .likelihood import InferenceMode, dataset_loglik
from .model import LatentModel
from .operators import BoundaryCondition, build_basis
from .optimizer import FitConfig, fit, relative_loglik

EXIT_USAGE = 2
EXIT_NUMERICAL = 3


def _fail(msg: str, code: int = EXIT_USAGE) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return code


def _add_grid_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--elements", type=int, default=64, help="spectral elements")
    p.add_argument("--points", type=int, default=8, help="points per element")


def _add_mode_args(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--mode",
        choices=["full", "no-absorption-op", "reflecting-bc", "equilibrium-p0"],
        default="full",
    )
    p.add_argument(
        "--bc",
        choices=["absorbing", "reflecting"],
        default=None,
        help="boundary condition; must agree with --mode if given",
    )


def _resolve_mode(args) -> InferenceMode:
    mode = InferenceMode.named(args.mode)
    if args.bc is not None and BoundaryCondition(args.bc) is not mode.bc:
        raise ValueError(
            f"--bc {args.bc} is inconsistent with --mode {args.mode}"
        )
    return mode


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nslangevin",
        description=(
            "Infer latent non-stationary Langevin dynamics from spike trains, "
            "and generate synthetic ground-truth datasets."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate a synthetic dataset")
    sim.add_argument("--preset", choices=["ramping", "stepping"], default=None)
    sim.add_argument("--model", type=Path, default=None, help="custom model JSON")
    sim.add_argument(
        "--task", choices=[REACTION_TIME, FIXED_DURATION], default=REACTION_TIME
    )
    sim.add_argument("--duration", type=float, default=2.0,
                     help="trial length for fixed-duration tasks, seconds")
    sim.add_argument("--trials", type=int, required=True)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--dt", type=float, default=1e-4)
    sim.add_argument("--t-max", type=float, default=10.0)
    sim.add_argument("--out-dir", type=Path, default=Path("."))
    _add_grid_args(sim)
    sim.add_argument("--print-config", action="store_true")

    fitp = sub.add_parser("fit", help="fit a model to a dataset")
    fitp.add_argument("dataset", type=Path)
    _add_mode_args(fitp)
    fitp.add_argument("--ground-truth", type=Path, default=None)
    fitp.add_argument("--iters", type=int, default=500)
    fitp.add_argument("--lr-force", type=float, default=0.005)
    fitp.add_argument("--lr-f0", type=float, default=0.025)
    fitp.add_argument("--lr-d", type=float, default=0.00025)
    fitp.add_argument(
        "--schedule", choices=["force-only", "alternating"], default="force-only"
    )
    fitp.add_argument("--nv", type=int, default=447)
    fitp.add_argument("--init-d", type=float, default=1.0)
    fitp.add_argument(
        "--init-from-model",
        type=Path,
        default=None,
        help="take F0 and D initializations (and the rate) from a model JSON",
    )
    fitp.add_argument("--snapshot-every", type=int, default=10)
    fitp.add_argument("--workers", type=int, default=1)
    fitp.add_argument("--out-dir", type=Path, default=Path("."))
    _add_grid_args(fitp)
    fitp.add_argument("--print-config", action="store_true")

    ev = sub.add_parser("eval", help="evaluate a model on a dataset")
    ev.add_argument("model", type=Path)
    ev.add_argument("dataset", type=Path)
    _add_mode_args(ev)
    ev.add_argument("--nv", type=int, default=447)
    ev.add_argument("--compare", type=Path, default=None)
    ev.add_argument("--export-csv", type=Path, default=None)
    ev.add_argument("--workers", type=int, default=1)
    ev.add_argument("--print-config", action="store_true")

    return parser


def _print_config(args) -> None:
    doc = {
        k: (str(v) if isinstance(v, Path) else v)
        for k, v in vars(args).items()
        if k != "print_config"
    }
    print(json.dumps(doc, indent=2))


def cmd_simulate(args) -> int:
    if (args.preset is None) == (args.model is None):
        return _fail("provide exactly one of --preset or --model")
    try:
        config = SimConfig(
            n_trials=args.trials,
            rng_seed=args.seed,
            task=args.task,
            duration=args.duration if args.task == FIXED_DURATION else None,
            dt=args.dt,
            t_max=args.t_max,
        )
    except ValueError as exc:
        return _fail(str(exc))

    if args.model is not None:
        model = LatentModel.load(args.model)
        name = "custom"
    else:
        grid = build_grid(args.elements, args.points, -1.0, 1.0)
        model = preset_model(args.preset, grid)
        name = args.preset
    preset = GroundTruthPreset(name, model)

    trials, meta = generate_dataset(preset, config)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    dataset_path = args.out_dir / "dataset.json"
    model_path = args.out_dir / "ground_truth.json"
    try:
        save_dataset(dataset_path, trials, meta)
        model.save(model_path)
    except OSError as exc:
        return _fail(str(exc))

    durations = np.array([t.duration for t in trials])
    counts = np.array([t.n_spikes for t in trials])
    bounds = meta["boundaries"]
    print(f"wrote {dataset_path} and {model_path}")
    print(f"trials: {len(trials)} (timed out: {meta['n_timed_out']})")
    print(f"mean duration: {durations.mean():.4f} s")
    print(f"mean spike count: {counts.mean():.2f}")
    for b in sorted(set(bounds)):
        print(f"fraction {b}: {bounds.count(b) / len(bounds):.3f}")
    return 0


def cmd_fit(args) -> int:
    try:
        mode = _resolve_mode(args)
    except ValueError as exc:
        return _fail(str(exc))
    if not args.dataset.exists():
        return _fail(f"dataset not found: {args.dataset}")

    trials, _meta = load_dataset(args.dataset)
    grid = build_grid(args.elements, args.points, -1.0, 1.0)

    ground_truth = None
    if args.ground_truth is not None:
        if not args.ground_truth.exists():
            return _fail(f"ground-truth model not found: {args.ground_truth}")
        ground_truth = LatentModel.load(args.ground_truth)

    init_f0 = None
    init_d = args.init_d
    rate_fn = None
    if args.init_from_model is not None:
        init_model = LatentModel.load(args.init_from_model)
        init_f0 = GridFunction(init_model.f0.values, grid)
        init_d = init_model.diffusion
        rate_fn = GridFunction(init_model.rate_fn.values, grid)

    try:
        config = FitConfig(
            mode=mode,
            lr_force=args.lr_force,
            lr_f0=args.lr_f0,
            lr_d=args.lr_d,
            max_iters=args.iters,
            update_schedule=args.schedule,
            nv=args.nv,
            init_f0=init_f0,
            init_d=init_d,
            snapshot_every=args.snapshot_every,
            n_workers=args.workers,
        )
    except ValueError as exc:
        return _fail(str(exc))

    trace = fit(trials, grid, config, ground_truth=ground_truth, rate_fn=rate_fn)

    args.out_dir.mkdir(parents=True, exist_ok=True)
    trace.write_csv(args.out_dir / "trace.csv")
    for it, snap in trace.snapshots.items():
        snap.save(args.out_dir / f"snapshot_{it:06d}.json")
    if trace.final_model is not None:
        trace.final_model.save(args.out_dir / "final_model.json")
    if trace.loglik_gt is not None:
        print(f"ground-truth loglik: {trace.loglik_gt!r}")
    if trace.records:
        last = trace.records[-1]
        print(f"iterations: {last.iteration}, final loglik: {last.loglik!r}")
    if trace.aborted:
        print(f"numerical failure: {trace.error}", file=sys.stderr)
        return EXIT_NUMERICAL
    return 0


def _export_model_csv(model: LatentModel, path: Path) -> None:
    peq = model.equilibrium().values
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "phi", "p0", "peq", "force"])
        for row in zip(
            model.grid.nodes,
            model.phi.values,
            model.p0.values,
            peq,
            model.force.values,
        ):
            writer.writerow([repr(v) for v in row])


def cmd_eval(args) -> int:
    try:
        mode = _resolve_mode(args)
    except ValueError as exc:
        return _fail(str(exc))
    for p in (args.model, args.dataset):
        if not p.exists():
            return _fail(f"file not found: {p}")

    model = LatentModel.load(args.model)
    trials, _meta = load_dataset(args.dataset)
    try:
        basis = build_basis(model, mode.bc, args.nv)
        loglik = dataset_loglik(basis, model, trials, mode, args.workers)
    except ArithmeticError as exc:
        return _fail(str(exc), EXIT_NUMERICAL)
    print(f"loglik: {loglik!r}")

    if args.compare is not None:
        if not args.compare.exists():
            return _fail(f"file not found: {args.compare}")
        other = LatentModel.load(args.compare)
        basis_other = build_basis(other, mode.bc, args.nv)
        loglik_other = dataset_loglik(basis_other, other, trials, mode, args.workers)
        print(f"loglik (compare): {loglik_other!r}")
        print(f"delta loglik: {loglik - loglik_other!r}")
        print(f"rel_loglik: {relative_loglik(loglik, loglik_other)!r}")

    if args.export_csv is not None:
        _export_model_csv(model, args.export_csv)
        print(f"wrote {args.export_csv}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "print_config", False):
        _print_config(args)
        return 0
    handlers = {"simulate": cmd_simulate, "fit": cmd_fit, "eval": cmd_eval}
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
