"""Command-line front end.

Reads network description files (strict JSON: nodes, links with 4-vector
delay coefficients, OD pairs), dispatches the solver and analysis runs,
and emits machine-readable results: CSV for sweeps, JSON mirroring the
report types otherwise. All floating-point output uses 12 significant
digits, so identical inputs produce byte-identical outputs. Progress and
diagnostics go to standard error only.

Exit codes: 0 success, 1 assumption violation (e.g. monotonicity on a
non-parallel network without --exploratory, or failed operator
conditions), 2 solver non-convergence, 3 I/O or parse failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import analysis, oracle
from .calculus import (
    check_conditions,
    coefficient_table,
    poly_eval,
    total_delay,
)
from .equilibrium import (
    ConditionsUnverified,
    NotConverged,
    solve_equilibrium,
)
from .netmodel import (
    DelayPoly,
    IncidenceStructure,
    Link,
    Network,
    OdSpec,
    enumerate_paths,
    validate_network,
)
from .sysopt import solve_system_optimum

EXIT_OK = 0
EXIT_ASSUMPTION = 1
EXIT_NOT_CONVERGED = 2
EXIT_IO = 3


class NetworkFormatError(ValueError):
    """Malformed or invalid network description file."""


@dataclass
class RunConfig:
    """One CLI invocation."""

    command: str
    network_path: Optional[str] = None
    alpha: Optional[float] = None
    grid: Optional[int] = None
    tol: float = 1e-8
    max_iters: int = 200_000
    out: Optional[str] = None
    seed: Optional[int] = None
    links: int = 3
    demand: float = 1.0
    exploratory: bool = False
    parallel: bool = False


# ---------------------------------------------------------------------------
# network file format
# ---------------------------------------------------------------------------

_TOP_KEYS = {"name", "nodes", "links", "od_pairs"}
_LINK_KEYS = {"id", "tail", "head", "delay"}
_OD_KEYS = {"origin", "destination", "demand", "fleet_share"}


def parse_network_file(path: str) -> Network:
    """Strict parse of a network description file, then full validation.

    Unknown fields are rejected; any validation violation aborts with the
    report attached to the error message.
    """
    net = _parse_structure(path)
    report = validate_network(net)
    if report:
        raise NetworkFormatError(
            f"{path}: invalid network:\n  " + "\n  ".join(report)
        )
    return net


def _parse_structure(path: str) -> Network:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise NetworkFormatError(
            f"{path}: syntax error at line {exc.lineno}, column {exc.colno}: "
            f"{exc.msg}"
        ) from exc

    if not isinstance(raw, dict):
        raise NetworkFormatError(f"{path}: top level must be an object")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise NetworkFormatError(
            f"{path}: unknown fields {sorted(unknown)}")
    for key in ("nodes", "links", "od_pairs"):
        if key not in raw:
            raise NetworkFormatError(f"{path}: missing field '{key}'")

    links = []
    for i, entry in enumerate(raw["links"]):
        unknown = set(entry) - _LINK_KEYS
        if unknown:
            raise NetworkFormatError(
                f"{path}: link {i}: unknown fields {sorted(unknown)}")
        missing = _LINK_KEYS - set(entry)
        if missing:
            raise NetworkFormatError(
                f"{path}: link {i}: missing fields {sorted(missing)}")
        delay = entry["delay"]
        if not isinstance(delay, list) or len(delay) != 4:
            raise NetworkFormatError(
                f"{path}: link {i}: delay must have 4 coefficients")
        links.append(Link(
            id=str(entry["id"]), tail=str(entry["tail"]),
            head=str(entry["head"]),
            delay=DelayPoly(tuple(float(c) for c in delay)),
        ))

    ods = []
    for i, entry in enumerate(raw["od_pairs"]):
        unknown = set(entry) - _OD_KEYS
        if unknown:
            raise NetworkFormatError(
                f"{path}: od pair {i}: unknown fields {sorted(unknown)}")
        for key in ("origin", "destination", "demand"):
            if key not in entry:
                raise NetworkFormatError(
                    f"{path}: od pair {i}: missing field '{key}'")
        ods.append(OdSpec(
            origin=str(entry["origin"]),
            destination=str(entry["destination"]),
            demand_total=float(entry["demand"]),
            fleet_share=float(entry.get("fleet_share", 0.0)),
        ))

    return Network(
        nodes=tuple(str(n) for n in raw["nodes"]),
        links=tuple(links),
        od_pairs=tuple(ods),
        name=str(raw.get("name", "")),
    )


def network_to_dict(net: Network) -> dict:
    return {
        "name": net.name,
        "nodes": list(net.nodes),
        "links": [
            {"id": link.id, "tail": link.tail, "head": link.head,
             "delay": [_num(c) for c in link.delay.coefficients]}
            for link in net.links
        ],
        "od_pairs": [
            {"origin": od.origin, "destination": od.destination,
             "demand": _num(od.demand_total),
             "fleet_share": _num(od.fleet_share)}
            for od in net.od_pairs
        ],
    }


def gen_random_parallel(seed: int, n_links: int, D: float) -> Network:
    """Random valid parallel network from a seeded PCG64 generator.

    Coefficients are uniform draws a0 in [0, 2], a1 in [0.1, 2],
    a2 in [0, 0.5], a3 in [0, 0.1] per link; generation is verified
    against the validator and the operator conditions and redrawn on the
    (never yet observed) failure.
    """
    if n_links < 2:
        raise ValueError("a parallel instance needs at least 2 links")
    rng = np.random.default_rng(seed)
    while True:
        delays = []
        for _ in range(n_links):
            a0 = rng.uniform(0.0, 2.0)
            a1 = rng.uniform(0.1, 2.0)
            a2 = rng.uniform(0.0, 0.5)
            a3 = rng.uniform(0.0, 0.1)
            delays.append(DelayPoly((a0, a1, a2, a3)))
        links = tuple(
            Link(id=f"l{i + 1}", tail="o", head="d", delay=d)
            for i, d in enumerate(delays)
        )
        net = Network(
            nodes=("o", "d"), links=links,
            od_pairs=(OdSpec("o", "d", float(D), 0.5),),
            name=f"parallel-s{seed}-n{n_links}",
        )
        if validate_network(net):
            continue
        report = check_conditions(net, max(float(D), 1e-9))
        if report.convexity_ok and report.strong_mono_ok:
            return net


# ---------------------------------------------------------------------------
# deterministic formatting
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{float(x):.12g}"


def _num(x: float) -> float:
    """Round-trip a float through the 12-significant-digit form so JSON
    output is byte-identical across runs."""
    return float(_fmt(x))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, frozenset):
        return sorted(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return _num(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _emit_json(payload: dict, out: Optional[str]) -> None:
    _emit(json.dumps(_jsonable(payload), indent=2) + "\n", out)


def _log(message: str) -> None:
    print(message, file=sys.stderr)


# ---------------------------------------------------------------------------
# command implementations
# ---------------------------------------------------------------------------


def _load(config: RunConfig) -> tuple[Network, IncidenceStructure]:
    if not config.network_path:
        raise NetworkFormatError("no network file given (use --network)")
    net = parse_network_file(config.network_path)
    return net, enumerate_paths(net)


def _ods_with_alpha(net: Network, alpha: Optional[float]):
    if alpha is None:
        return net.od_pairs
    if not 0.0 <= alpha <= 1.0:
        raise NetworkFormatError("alpha must lie in [0, 1]")
    return tuple(od.with_share(alpha) for od in net.od_pairs)


def _solve_payload(net, inc, result) -> dict:
    coeffs = coefficient_table(net)
    F = result.f_star.F
    d = poly_eval(coeffs, F, 0)
    m = d + result.f_star.fC * poly_eval(coeffs, F, 1)
    return {
        "theta": result.theta,
        "mu": result.mu,
        "total_delay": total_delay(net, result.f_star),
        "wardrop_residual": result.wardrop_residual,
        "vi_gap": result.vi_gap,
        "iterations": result.iterations,
        "converged": result.converged,
        "links": [
            {"id": link.id, "fS": result.f_star.fS[l],
             "fC": result.f_star.fC[l], "F": F[l], "d": d[l], "m": m[l]}
            for l, link in enumerate(net.links)
        ],
        "paths": [
            {"links": [net.links[l].id for l in path],
             "zS": result.z_star.zS[p], "zC": result.z_star.zC[p]}
            for p, path in enumerate(inc.paths)
        ],
    }


def _sweep_csv(net: Network, records) -> str:
    header = ["alpha", "poa", "total_delay", "theta", "mu", "converged"]
    for link in net.links:
        header.extend(
            f"{q}_{link.id}" for q in ("fS", "fC", "F", "d", "m"))
    lines = [",".join(header)]
    coeffs = coefficient_table(net)
    for rec in records:
        F = rec.f_star.F
        d = poly_eval(coeffs, F, 0)
        m = d + rec.f_star.fC * poly_eval(coeffs, F, 1)
        row = [_fmt(rec.alpha), _fmt(rec.poa), _fmt(rec.total_delay),
               _fmt(rec.theta), _fmt(rec.mu),
               "true" if rec.converged else "false"]
        for l in range(net.n_links):
            row.extend(_fmt(v) for v in
                       (rec.f_star.fS[l], rec.f_star.fC[l], F[l], d[l], m[l]))
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def _run_sweep(config: RunConfig, net, inc):
    grid_n = config.grid if config.grid else 101
    grid = np.linspace(0.0, 1.0, grid_n)
    return analysis.sweep_alpha(
        net, inc, grid=grid, tol=config.tol, max_iters=config.max_iters,
        parallel_mode=config.parallel,
    )


def _cmd_validate(config: RunConfig) -> int:
    net = _parse_structure(config.network_path)
    report = validate_network(net)
    _emit_json({"valid": not report, "violations": report}, config.out)
    return EXIT_OK if not report else EXIT_IO


def _cmd_check(config: RunConfig) -> int:
    net, _ = _load(config)
    D = net.total_demand()
    report = check_conditions(net, D if D > 0 else 1.0)
    payload = dataclasses.asdict(report)
    _emit_json(payload, config.out)
    ok = report.convexity_ok and report.strong_mono_ok
    return EXIT_OK if ok else EXIT_ASSUMPTION


def _cmd_solve(config: RunConfig) -> int:
    net, inc = _load(config)
    ods = _ods_with_alpha(net, config.alpha)
    try:
        result = solve_equilibrium(
            net, inc, ods, tol=config.tol, max_iters=config.max_iters)
    except NotConverged as exc:
        _emit_json(_solve_payload(net, inc, exc.result), config.out)
        return EXIT_NOT_CONVERGED
    _emit_json(_solve_payload(net, inc, result), config.out)
    return EXIT_OK


def _cmd_optimum(config: RunConfig) -> int:
    net, inc = _load(config)
    try:
        F, T = solve_system_optimum(net, inc, net.od_pairs)
    except NotConverged:
        return EXIT_NOT_CONVERGED
    payload = {
        "total_delay_min": T,
        "links": [{"id": link.id, "F": F[l]}
                  for l, link in enumerate(net.links)],
    }
    _emit_json(payload, config.out)
    return EXIT_OK


def _cmd_sweep(config: RunConfig) -> int:
    net, inc = _load(config)
    records = _run_sweep(config, net, inc)
    _emit(_sweep_csv(net, records), config.out)
    if not all(rec.converged for rec in records):
        _log("warning: some sweep points did not converge")
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _cmd_critical_share(config: RunConfig) -> int:
    net, inc = _load(config)
    records = _run_sweep(config, net, inc)
    report = analysis.detect_critical_share(
        net, inc, records, solver_tol=config.tol)
    _emit_json(dataclasses.asdict(report), config.out)
    return EXIT_OK


def _cmd_monotonicity(config: RunConfig) -> int:
    net, inc = _load(config)
    records = _run_sweep(config, net, inc)
    report = analysis.monotonicity_report(
        records, net, slack=10.0 * config.tol,
        exploratory=config.exploratory)
    payload = dataclasses.asdict(report)
    payload.pop("witnesses", None)
    _emit_json(payload, config.out)
    return EXIT_OK


def _cmd_oracle_compare(config: RunConfig) -> int:
    net, inc = _load(config)
    ods = _ods_with_alpha(net, config.alpha)
    grid_n = config.grid if config.grid else 2001
    result = solve_equilibrium(
        net, inc, ods, tol=config.tol, max_iters=config.max_iters)
    oracle_load, certificate = oracle.brute_force_equilibrium(
        net, inc, ods, grid_n)
    F_opt, T_opt = solve_system_optimum(net, inc, ods)
    F_oracle, T_oracle = oracle.brute_force_optimum(
        net, inc, net.total_demand(), grid_n)
    load_delta = float(np.max(np.abs(
        result.f_star.stacked() - oracle_load.stacked())))
    payload = {
        "grid_n": grid_n,
        "grid_step": net.total_demand() / (grid_n - 1),
        "equilibrium_load_delta": load_delta,
        "oracle_certificate": certificate,
        "optimum_delta": abs(T_opt - T_oracle),
        "total_delay_solver": T_opt,
        "total_delay_oracle": T_oracle,
    }
    _emit_json(payload, config.out)
    return EXIT_OK


def _cmd_gen(config: RunConfig) -> int:
    seed = config.seed if config.seed is not None else 0
    net = gen_random_parallel(seed, config.links, config.demand)
    _emit_json(network_to_dict(net), config.out)
    return EXIT_OK


_COMMANDS = {
    "validate": _cmd_validate,
    "check": _cmd_check,
    "solve": _cmd_solve,
    "optimum": _cmd_optimum,
    "sweep": _cmd_sweep,
    "critical-share": _cmd_critical_share,
    "monotonicity": _cmd_monotonicity,
    "oracle-compare": _cmd_oracle_compare,
    "gen": _cmd_gen,
}


def run(config: RunConfig) -> int:
    """Dispatch a run configuration; returns the process exit code."""
    try:
        return _COMMANDS[config.command](config)
    except (NetworkFormatError, OSError) as exc:
        _log(f"error: {exc}")
        return EXIT_IO
    except (analysis.AssumptionViolated, ConditionsUnverified) as exc:
        _log(f"assumption violated: {exc}")
        return EXIT_ASSUMPTION
    except NotConverged as exc:
        _log(f"not converged: {exc}")
        return EXIT_NOT_CONVERGED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="routegame",
        description="Two-class routing game solver and analysis toolkit",
    )
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--network", dest="network_path")
    parser.add_argument("--alpha", type=float, default=None,
                        help="fleet share override in [0, 1]")
    parser.add_argument("--grid", type=int, default=None,
                        help="sweep grid points (default 101) or oracle "
                             "grid density (default 2001)")
    parser.add_argument("--tol", type=float, default=1e-8)
    parser.add_argument("--max-iters", type=int, default=200_000)
    parser.add_argument("--out", default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--links", type=int, default=3,
                        help="link count for gen")
    parser.add_argument("--demand", type=float, default=1.0,
                        help="total demand for gen")
    parser.add_argument("--exploratory", action="store_true")
    parser.add_argument("--parallel", action="store_true",
                        help="solve sweep shares in lock-step from cold "
                             "starts instead of warm-started sequence")
    return parser


def config_from_args(argv: Optional[Sequence[str]] = None) -> RunConfig:
    args = build_parser().parse_args(argv)
    if args.grid is not None and args.grid < 2:
        build_parser().error("--grid must be at least 2")
    return RunConfig(
        command=args.command,
        network_path=args.network_path,
        alpha=args.alpha,
        grid=args.grid,
        tol=args.tol,
        max_iters=args.max_iters,
        out=args.out,
        seed=args.seed,
        links=args.links,
        demand=args.demand,
        exploratory=args.exploratory,
        parallel=args.parallel,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    return run(config_from_args(argv))


if __name__ == "__main__":
    sys.exit(main())
