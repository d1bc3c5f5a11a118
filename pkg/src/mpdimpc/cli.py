"""Command-line entry point: ``mpdimpc {generate,explicit,simulate,bench}``.

Exit codes: 0 success, 2 usage error, 3 numerical failure, 4 I/O or schema
error. ``MPDIMPC_SEED`` overrides the default base seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import io, plots, sim
from .dimpc import LocalSolveFailed
from .iterfree import NoValidCombination
from .mpc import MPCWeights, condense_local
from .numerics import SingularError
from .opt import QPError
from .plant import fixture_plant, generate_random_plant

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


class UsageError(Exception):
    pass


def default_seed() -> int:
    raw = os.environ.get("MPDIMPC_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError as exc:
        raise UsageError(f"MPDIMPC_SEED must be an integer, got {raw!r}") from exc


def _check_new(path: Path, force: bool) -> None:
    if path.exists() and not force:
        raise FileExistsError(f"{path} exists (use --force to overwrite)")


def cmd_generate(args) -> int:
    if args.count < 0 or args.M < 1:
        raise UsageError("need --count >= 0 and --M >= 1")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.fixture:
        p = out / "plant_fixture.json"
        _check_new(p, args.force)
        io.save_plant(fixture_plant(), p)
        print(p)
        return EXIT_OK
    seed = default_seed() if args.seed is None else args.seed
    paths = [out / f"plant_M{args.M}_seed{seed + j}.json" for j in range(args.count)]
    for p in paths:
        _check_new(p, args.force)
    for j, p in enumerate(paths):
        io.save_plant(generate_random_plant(args.M, seed + j), p)
        print(p)
    return EXIT_OK


def _explicit_paths(out: Path, M: int) -> list[Path]:
    return [out / f"controller_{i + 1}.json" for i in range(M)]


def cmd_explicit(args) -> int:
    net = io.load_plant(args.plant)
    w = MPCWeights.for_network(net, args.Np)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = _explicit_paths(out, net.M)
    for p in paths:
        _check_new(p, args.force)
    for i, (sol, p) in enumerate(zip(sim.build_explicit(net, w), paths)):
        io.save_solution(sol, p, controller=i, Np=args.Np)
        print(f"{p}: {sol.n_CR} regions")
    return EXIT_OK


def _parse_x0(text: str, net, w, fraction: float) -> np.ndarray:
    if "," in text or "." in text or text.startswith("-"):
        try:
            x0 = np.array([float(v) for v in text.split(",")])
        except ValueError as exc:
            raise UsageError(f"--x0: cannot parse {text!r}") from exc
        if x0.shape != (net.n_x,):
            raise UsageError(f"--x0 needs {net.n_x} values, got {x0.shape[0]}")
        return x0
    try:
        seed = int(text)
    except ValueError as exc:
        raise UsageError(f"--x0 must be a seed or comma-separated values, got {text!r}") from exc
    x0 = sim.admissible_initial_state(net, w, seed, fraction)
    if x0 is None:
        raise sim.ControllerFailed(0, RuntimeError("no admissible initial state for this plant"))
    return x0


def cmd_simulate(args) -> int:
    net = io.load_plant(args.plant)
    if args.controller == "if" and net.M >= 4 and not args.force:
        raise UsageError("full enumeration is impractical for M >= 4; pass --force to run it anyway")
    w = MPCWeights.for_network(net, args.Np)
    x0 = _parse_x0(args.x0, net, w, args.fraction)
    sols = None
    if args.controller in sim.EXPLICIT_KINDS:
        if args.solutions:
            paths = _explicit_paths(Path(args.solutions), net.M)
            sols = [io.load_solution(p, condense_local(net, w, i)) for i, p in enumerate(paths)]
        else:
            sols = sim.build_explicit(net, w)
    cfg = sim.ControllerConfig(args.controller, eps=args.eps, p_max=args.pmax)
    out = Path(args.out)
    try:
        tr = sim.simulate(net, w, cfg, x0, args.steps, solutions=sols)
    except sim.ControllerFailed as exc:
        if exc.trace is not None:
            io.write_trace(exc.trace, net, out)
        raise
    io.write_trace(tr, net, out)
    s = sim.settling_step(tr, net)
    print(f"{out}: {tr.steps} steps, settling step {s}, transfers {sum(tr.transfers)}")
    return EXIT_OK


def cmd_bench(args) -> int:
    Ms = [int(v) for v in args.M_list.split(",")]
    ctrls = args.controllers.split(",")
    for c in ctrls:
        if c not in sim.KINDS:
            raise UsageError(f"unknown controller {c!r}")
    if "if" in ctrls and max(Ms) >= 4 and not args.force:
        raise UsageError("full enumeration is impractical for M >= 4; pass --force to run it anyway")
    if args.plants < 1:
        raise UsageError("--plants must be at least 1")
    seed = default_seed() if args.seed is None else args.seed
    jobs = args.jobs or os.cpu_count() or 1

    def progress(r):
        status = r.failure or f"settling {r.settling_step}, {r.total_wall_time:.3f}s, {r.total_transfers} transfers"
        print(f"M={r.M} seed={r.seed} {r.controller}: {status}", file=sys.stderr)

    records = sim.benchmark_suite(
        Ms, args.plants, ctrls, base_seed=seed, steps=args.steps, Np=args.Np, repeats=args.repeats, jobs=jobs, progress=progress
    )
    aggregates = sim.summarize(records)
    doc = {
        "version": io.FORMAT_VERSION,
        "config": {"M_list": Ms, "plants": args.plants, "controllers": ctrls, "base_seed": seed, "steps": args.steps, "Np": args.Np},
        "records": [r.as_dict() for r in records],
        "aggregates": aggregates,
    }
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    io.save_summary(doc, out)
    figdir = Path(args.figures) if args.figures else out.parent / "figures"
    figdir.mkdir(parents=True, exist_ok=True)
    for name, svg in plots.benchmark_figures(aggregates).items():
        (figdir / name).write_text(svg)
    print(json.dumps(aggregates, indent=1))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mpdimpc", description="Explicit and iteration-free distributed MPC")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write random controllable plants")
    g.add_argument("--M", type=int, default=2)
    g.add_argument("--fixture", action="store_true", help="write the published two-subsystem plant instead")
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--seed", type=int)
    g.add_argument("--out", required=True)
    g.add_argument("--force", action="store_true")
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("explicit", help="compute the local explicit solutions of a plant")
    e.add_argument("--plant", required=True)
    e.add_argument("--Np", type=int, default=3)
    e.add_argument("--out", required=True)
    e.add_argument("--force", action="store_true")
    e.set_defaults(func=cmd_explicit)

    s = sub.add_parser("simulate", help="closed-loop run, written as a CSV trace")
    s.add_argument("--plant", required=True)
    s.add_argument("--controller", choices=sim.KINDS, required=True)
    s.add_argument("--steps", type=int, default=100)
    s.add_argument("--x0", default="0", help="seed of an admissible draw, or comma-separated values")
    s.add_argument("--fraction", type=float, default=0.5)
    s.add_argument("--eps", type=float, default=1e-8)
    s.add_argument("--pmax", type=int, default=100)
    s.add_argument("--Np", type=int, default=3)
    s.add_argument("--solutions", help="directory written by 'explicit'")
    s.add_argument("--out", required=True)
    s.add_argument("--force", action="store_true")
    s.set_defaults(func=cmd_simulate)

    b = sub.add_parser("bench", help="benchmark suite with summary JSON and SVG figures")
    b.add_argument("--M-list", default="2,3")
    b.add_argument("--plants", type=int, default=3)
    b.add_argument("--controllers", default=",".join(sim.KINDS))
    b.add_argument("--steps", type=int, default=100)
    b.add_argument("--Np", type=int, default=3)
    b.add_argument("--seed", type=int)
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--jobs", type=int)
    b.add_argument("--out", required=True)
    b.add_argument("--figures")
    b.add_argument("--force", action="store_true")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (sim.ControllerFailed, QPError, LocalSolveFailed, NoValidCombination, SingularError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, io.SchemaError, io.FingerprintMismatch) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main_exit() -> None:
    sys.exit(main())
