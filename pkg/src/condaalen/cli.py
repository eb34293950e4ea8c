"""Command-line front end.

Four subcommands: ``simulate`` draws a sample from a scenario file,
``fit`` estimates conditional hazards and occupations at one or more
covariate points, ``covariance`` adds plug-in covariance surfaces, and
``check`` runs the acceptance suite. Numeric CSV output uses 17
significant digits so every value round-trips exactly; runs with the
same configuration and seed are byte-identical.

Exit codes: 0 on success, 2 when an evaluation point carries no kernel
mass, 1 on any other failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .covariance import default_surface_grid, hazard_covariance, occupation_covariance
from .data import ParseError, Sample, ValidationError, load_sample, write_sample
from .estimators import FitResult, fit
from .kernels import KernelSpec, NoKernelMass
from .simulate import load_scenario, simulate_path

_EXIT_OK = 0
_EXIT_ERROR = 1
_EXIT_NO_MASS = 2


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def _parse_x(raw: str, dim: int) -> tuple[float, ...]:
    parts = [p.strip() for p in raw.split(",")]
    try:
        coords = tuple(float(p) for p in parts)
    except ValueError:
        raise ValueError(f"bad --x value {raw!r}") from None
    if len(coords) != dim:
        raise ValueError(f"--x {raw!r} has {len(coords)} coordinates, data has {dim}")
    return coords


def _parse_atoms(entries, dim: int) -> tuple[tuple[float, ...], ...]:
    atom_sets: list[tuple[float, ...]] = [() for _ in range(dim)]
    for entry in entries or ():
        head, sep, tail = entry.partition(":")
        if not sep:
            raise ValueError(f"bad --atoms entry {entry!r}, expected i:v1,v2")
        try:
            pos = int(head)
        except ValueError:
            raise ValueError(f"bad --atoms dimension {head!r}") from None
        if not 1 <= pos <= dim:
            raise ValueError(f"--atoms dimension {pos} outside 1..{dim}")
        try:
            values = tuple(float(v) for v in tail.split(","))
        except ValueError:
            raise ValueError(f"bad --atoms values {tail!r}") from None
        atom_sets[pos - 1] = values
    return tuple(atom_sets)


def _fit_points(sample: Sample, args) -> list[FitResult]:
    dim = sample.covariate_dim
    atoms = _parse_atoms(args.atoms, dim)
    spec = KernelSpec.for_dims(dim, kernel=args.kernel, atoms=atoms)
    points = [_parse_x(raw, dim) for raw in args.x]

    def run(coords):
        return fit(
            sample,
            coords,
            spec,
            eta=args.eta,
            explicit_bandwidth=args.bandwidth,
            epsilon=args.epsilon,
            theta=args.theta,
        )

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            return list(pool.map(run, points))
    return [run(p) for p in points]


def _warn_flags(result: FitResult, label: str) -> None:
    flagged = sum(len(v) for v in result.hazard.floor_active.values())
    if flagged:
        print(
            f"warning: {label}: denominator floor engaged at {flagged} state-time pairs",
            file=sys.stderr,
        )
    beyond = result.beyond_theta()
    if beyond.size:
        print(
            f"warning: {label}: {beyond.size} event times beyond horizon "
            f"theta={_fmt(result.theta)}; values there are extrapolations",
            file=sys.stderr,
        )


def _write_hazard_csv(result: FitResult, path: str) -> None:
    states = result.hazard.states
    grid = result.hazard.times
    hazard = result.hazard.hazard.values
    counts = result.hazard.counts.values
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["time", "quantity", "j", "k", "value"])
        for i, t in enumerate(grid):
            ts = _fmt(t)
            for a, sa in enumerate(states):
                for b, sb in enumerate(states):
                    if a != b:
                        writer.writerow([ts, "hazard", sa, sb, _fmt(hazard[i, a, b])])
            for a, sa in enumerate(states):
                for b, sb in enumerate(states):
                    if a != b and counts[i, a, b] != 0.0:
                        writer.writerow([ts, "count", sa, sb, _fmt(counts[i, a, b])])
            for sa in states:
                writer.writerow([ts, "exposure", sa, "", _fmt(result.hazard.exposure[sa](t))])


def _write_occupation_csv(result: FitResult, path: str) -> None:
    states = result.occupation.states
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["time", "j", "value"])
        for idx, s in enumerate(states):
            writer.writerow([_fmt(0.0), s, _fmt(result.occupation.initial[idx])])
        for i, t in enumerate(result.occupation.times):
            for idx, s in enumerate(states):
                writer.writerow([_fmt(t), s, _fmt(result.occupation.values[i, idx])])


def _fit_json(result: FitResult, n: int) -> dict:
    states = result.hazard.states
    grid = [float(t) for t in result.hazard.times]
    hazard = result.hazard.hazard.values
    counts = result.hazard.counts.values
    body = {
        "x": list(result.x.coords),
        "atom_flags": list(result.x.atom_flags),
        "kernel": list(result.spec.kernels),
        "atoms": [list(a) for a in result.spec.atoms],
        "n": n,
        "bandwidth": result.bandwidth,
        "epsilon": result.hazard.epsilon,
        "theta": result.theta,
        "density": result.weights.density_value,
        "phi": result.phi,
        "states": list(states),
        "grid": grid,
        "initial": {str(s): float(v) for s, v in zip(states, result.occupation.initial)},
        "hazard": {},
        "counts": {},
        "exposure": {},
        "occupation": {},
        "floor_active": {str(s): list(v) for s, v in result.hazard.floor_active.items()},
        "beyond_theta": [float(t) for t in result.beyond_theta()],
    }
    for a, sa in enumerate(states):
        for b, sb in enumerate(states):
            if a != b:
                body["hazard"][f"{sa}->{sb}"] = [float(v) for v in hazard[:, a, b]]
                body["counts"][f"{sa}->{sb}"] = [float(v) for v in counts[:, a, b]]
        curve = result.hazard.exposure[sa]
        body["exposure"][str(sa)] = {
            "initial": float(curve.initial),
            "values": [float(v) for v in curve.values],
        }
        body["occupation"][str(sa)] = {
            "initial": float(result.occupation.initial[a]),
            "values": [float(v) for v in result.occupation.values[:, a]],
        }
    return body


def cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    n = args.n if args.n is not None else scenario["n"]
    seed = args.seed if args.seed is not None else scenario["seed"]
    intensity, censoring = scenario["intensity"], scenario["censoring"]

    def one(i: int):
        return simulate_path(intensity, censoring, seed, i)

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            paths = tuple(pool.map(one, range(n)))
    else:
        paths = tuple(one(i) for i in range(n))
    sample = Sample(paths, intensity.state_space)
    write_sample(sample, args.out)
    print(f"wrote {n} paths to {args.out}", file=sys.stderr)
    return _EXIT_OK


def cmd_fit(args) -> int:
    sample = load_sample(args.input)
    results = _fit_points(sample, args)
    os.makedirs(args.out, exist_ok=True)
    for i, result in enumerate(results):
        label = f"x[{i}]=({', '.join(_fmt(c) for c in result.x.coords)})"
        _warn_flags(result, label)
        _write_hazard_csv(result, os.path.join(args.out, f"hazard_{i}.csv"))
        _write_occupation_csv(result, os.path.join(args.out, f"occupation_{i}.csv"))
        if args.json:
            with open(os.path.join(args.out, f"fit_{i}.json"), "w", encoding="utf-8") as handle:
                json.dump(_fit_json(result, len(sample)), handle, indent=1, sort_keys=True)
                handle.write("\n")
    return _EXIT_OK


def cmd_covariance(args) -> int:
    sample = load_sample(args.input)
    results = _fit_points(sample, args)
    os.makedirs(args.out, exist_ok=True)
    for i, result in enumerate(results):
        label = f"x[{i}]=({', '.join(_fmt(c) for c in result.x.coords)})"
        _warn_flags(result, label)
        grid = default_surface_grid(result.hazard.times, args.grid)
        states = result.hazard.states
        final_counts = result.hazard.counts.values[-1] if result.hazard.times.size else None
        pairs = []
        for a, sa in enumerate(states):
            for b, sb in enumerate(states):
                if a != b and final_counts is not None and final_counts[a, b] > 0:
                    pairs.append((sa, sb))
        for sa, sb in pairs:
            surface = hazard_covariance(
                sample, result.weights, result.hazard, result.phi, (sa, sb), grid
            )
            _write_surface(surface, os.path.join(args.out, f"cov_hazard_{sa}_{sb}_{i}.csv"))
        occ = occupation_covariance(
            sample, result.weights, result.hazard, result.occupation, result.phi, grid
        )
        for s, surface in occ.items():
            _write_surface(surface, os.path.join(args.out, f"cov_occupation_{s}_{i}.csv"))
        meta = {
            "x": list(result.x.coords),
            "grid": [float(t) for t in grid],
            "pairs": [f"{a}->{b}" for a, b in pairs],
            "states": list(states),
            "bandwidth": result.bandwidth,
            "phi": result.phi,
        }
        with open(os.path.join(args.out, f"cov_meta_{i}.json"), "w", encoding="utf-8") as handle:
            json.dump(meta, handle, indent=1, sort_keys=True)
            handle.write("\n")
    return _EXIT_OK


def _write_surface(surface, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["s", "t", "value"])
        for a, s in enumerate(surface.grid):
            for b, t in enumerate(surface.grid):
                writer.writerow([_fmt(s), _fmt(t), _fmt(surface.values[a, b])])


def cmd_check(args) -> int:
    from .checks import run_suite

    results = run_suite(quick=args.quick, scenario_path=args.scenario)
    failed = 0
    for r in results:
        if r.skipped:
            status = "SKIP"
        elif r.passed:
            status = "PASS"
        else:
            status = "FAIL"
            failed += 1
        print(f"{status} {r.name}: {r.detail} ({r.seconds:.1f}s)")
    return _EXIT_OK if failed == 0 else _EXIT_ERROR


def _add_fit_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--input", required=True, help="long-format sample CSV")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument(
        "--x",
        action="append",
        required=True,
        help="evaluation point, comma-separated coordinates; repeatable",
    )
    parser.add_argument(
        "--atoms",
        action="append",
        help="declared atoms per dimension as i:v1,v2 (1-based); repeatable",
    )
    parser.add_argument(
        "--kernel",
        default="epanechnikov",
        choices=["epanechnikov", "triangular", "uniform"],
    )
    parser.add_argument("--eta", type=float, default=0.75, help="bandwidth exponent in (0,1)")
    parser.add_argument("--bandwidth", type=float, default=None, help="explicit bandwidth override")
    parser.add_argument("--epsilon", type=float, default=1e-4, help="denominator floor")
    parser.add_argument("--theta", type=float, default=None, help="estimation horizon")
    parser.add_argument("--threads", type=int, default=1, help="parallelism over points")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="condaalen",
        description="Conditional hazard and occupation estimation for jump processes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="draw a sample from a scenario file")
    p_sim.add_argument("--scenario", required=True, help="scenario JSON file")
    p_sim.add_argument("--out", required=True, help="sample CSV to write")
    p_sim.add_argument("--n", type=int, default=None, help="override scenario n")
    p_sim.add_argument("--seed", type=int, default=None, help="override scenario seed")
    p_sim.add_argument("--threads", type=int, default=1, help="parallelism over paths")
    p_sim.set_defaults(func=cmd_simulate)

    p_fit = sub.add_parser("fit", help="conditional hazard and occupation estimates")
    _add_fit_flags(p_fit)
    p_fit.add_argument("--json", action="store_true", help="also write full JSON output")
    p_fit.set_defaults(func=cmd_fit)

    p_cov = sub.add_parser("covariance", help="plug-in covariance surfaces")
    _add_fit_flags(p_cov)
    p_cov.add_argument("--grid", type=int, default=50, help="surface grid size")
    p_cov.set_defaults(func=cmd_covariance)

    p_check = sub.add_parser("check", help="run the acceptance suite")
    p_check.add_argument("--quick", action="store_true", help="skip the slow Monte Carlo checks")
    p_check.add_argument("--scenario", default=None, help="scenario override for scenario-driven checks")
    p_check.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NoKernelMass as err:
        print(f"error: {err}", file=sys.stderr)
        return _EXIT_NO_MASS
    except (ParseError, ValidationError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return _EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
