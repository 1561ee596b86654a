"""Command-line surface.

Exit codes: 0 success, 1 usage error, 2 input/parse error, 3 zero-probability
evidence, 4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .baselines import arg_max_product, independent_map, max_product
from .bench import parse_bench_config, render_summary, run_benchmark, write_records_csv
from .circuit import CircuitFormatError, CircuitStructureError, load_circuit, validate_structure
from .inference import (
    ZeroEvidenceError,
    brute_force_map,
    make_oracle,
    min_entropy,
    parse_query_spec,
    tabulate_conditional,
)
from .solvers import Budget, DeterministicEps, Exact, Pac, PacParams, budget_pac_map, naive_map, pac_map, smooth_pac_map

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_ZERO_EVIDENCE = 3
EXIT_INTERNAL = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _bitstring(bits) -> str:
    return "".join(str(int(b)) for b in bits)


def _load_problem(args):
    circuit = load_circuit(args.circuit)
    spec_text = Path(args.query).read_text(encoding="utf-8")
    spec = parse_query_spec(spec_text, circuit.num_vars)
    return circuit, spec


def _cert_fields(cert) -> tuple[str, str, str]:
    if isinstance(cert, Exact):
        return "exact", "0.0", "0.0"
    if isinstance(cert, DeterministicEps):
        return "det-eps", repr(cert.epsilon), "0.0"
    if isinstance(cert, Pac):
        return "pac", repr(cert.epsilon), repr(cert.delta)
    if isinstance(cert, Budget):
        return "budget", "", ""
    return "", "", ""


def _write_trajectory(points, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["m", "p_hat", "p_check", "miss_bound", "stop_time"])
        for p in points:
            writer.writerow([p.m, repr(p.p_hat), repr(p.p_check), repr(p.miss_bound), p.stop_time_m])


def cmd_solve(args) -> int:
    circuit, spec = _load_problem(args)
    oracle = make_oracle(circuit, spec)
    warm = None
    if args.warm_from and args.method not in ("pac", "smooth", "budget"):
        raise ValueError(f"--warm-from is not supported with method {args.method!r}")
    if args.warm_from:
        if args.warm_from == "mp":
            warm = [max_product(circuit, spec, oracle=oracle).q_hat]
        elif args.warm_from == "amp":
            warm = [arg_max_product(circuit, spec, oracle=oracle).q_hat]
        elif args.warm_from == "ind":
            warm = [independent_map(oracle).q_hat]
        else:
            raise ValueError("--warm-from expects one of mp, amp, ind")

    trajectory = [] if args.trajectory else None
    method = args.method
    if method in ("pac", "smooth"):
        params = PacParams(args.epsilon, args.delta)
        if method == "pac":
            sol = pac_map(
                oracle, params, cap=args.cap, warm=warm, rng=args.seed,
                batch_size=args.batch_size, trajectory=trajectory,
            )
        else:
            sol = smooth_pac_map(
                oracle, params, radius=args.radius, exploit_period=args.period,
                cap=args.cap, warm=warm, rng=args.seed,
                batch_size=args.batch_size, trajectory=trajectory,
            )
    elif method == "budget":
        if args.budget is None:
            raise ValueError("--budget is required for method 'budget'")
        sol, _ = budget_pac_map(oracle, args.budget, warm=warm, rng=args.seed)
    elif method == "naive":
        if args.budget is None:
            raise ValueError("--budget is required for method 'naive'")
        sol = naive_map(oracle, args.budget, rng=args.seed)
    elif method in ("mp", "amp", "ind"):
        res = {"mp": max_product, "amp": arg_max_product}.get(method)
        result = res(circuit, spec, oracle=oracle) if res else independent_map(oracle)
        print(
            f"result method={method} q={_bitstring(result.q_hat)} "
            f"log_p_hat={result.log_p_hat!r} cert= epsilon= delta= draws=0 "
            f"oracle_calls= wall_ms={result.wall_time * 1000.0:.3g}"
        )
        print(f"{method} assignment over {len(result.q_hat)} query vars, ln p = {result.log_p_hat:.6f}")
        return EXIT_OK
    else:
        raise ValueError(f"unknown method {method!r}")

    kind, eps_s, delta_s = _cert_fields(sol.certificate)
    print(
        f"result method={method} q={_bitstring(sol.q_hat)} log_p_hat={sol.log_p_hat!r} "
        f"cert={kind} epsilon={eps_s} delta={delta_s} draws={sol.draws_used} "
        f"oracle_calls={sol.oracle_calls} wall_ms={sol.wall_time * 1000.0:.3g}"
    )
    print(
        f"{method} finished after {sol.draws_used} draws with a {kind} certificate; "
        f"ln p(q|e) = {sol.log_p_hat:.6f}"
    )
    if args.trajectory:
        _write_trajectory(trajectory, args.trajectory)
        print(f"trajectory written to {args.trajectory} ({len(trajectory)} points)")
    return EXIT_OK


def cmd_validate(args) -> int:
    circuit = load_circuit(args.circuit, validate=False)
    report = validate_structure(circuit)
    print(f"smooth: {'yes' if report.is_smooth else 'no'}")
    print(f"decomposable: {'yes' if report.is_decomposable else 'no'}")
    for nid, prop, desc in report.violations:
        print(f"violation: node {nid}: {prop}: {desc}")
    if not report.violations:
        print("no violations")
    return EXIT_OK


def cmd_pareto(args) -> int:
    circuit, spec = _load_problem(args)
    oracle = make_oracle(circuit, spec)
    sol, front = budget_pac_map(oracle, args.budget, rng=args.seed, grid=args.grid)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epsilon", "delta"])
        for eps, delta in front.points:
            writer.writerow([repr(eps), repr(delta)])
    kind, _, _ = _cert_fields(sol.certificate)
    print(
        f"budget={args.budget} p_hat={front.p_hat!r} cert={kind} "
        f"points={len(front.points)} out={args.out}"
    )
    return EXIT_OK


def cmd_oracle(args) -> int:
    circuit, spec = _load_problem(args)
    oracle = make_oracle(circuit, spec)
    table = tabulate_conditional(oracle)
    q_star, log_p_star = brute_force_map(table)
    p_star = float(np.exp(log_p_star))
    print(
        f"q_star={_bitstring(q_star)} p_star={p_star!r} log_p_star={log_p_star!r} "
        f"min_entropy_bits={min_entropy(p_star)!r}"
    )
    return EXIT_OK


def cmd_illustrate(args) -> int:
    circuit, spec = _load_problem(args)
    oracle = make_oracle(circuit, spec)
    trajectory = []
    sol = pac_map(oracle, PacParams(args.epsilon, args.delta), rng=args.seed, trajectory=trajectory)
    _write_trajectory(trajectory, args.out)
    kind, _, _ = _cert_fields(sol.certificate)
    final_stop = trajectory[-1].stop_time_m if trajectory else 0
    print(
        f"draws={sol.draws_used} cert={kind} p_hat={float(np.exp(sol.log_p_hat))!r} "
        f"final_stop_time={final_stop} out={args.out}"
    )
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = parse_bench_config(Path(args.config).read_text(encoding="utf-8"))
    records = run_benchmark(cfg)
    if args.out == "-":
        write_records_csv(records, sys.stdout)
        print(render_summary(records), file=sys.stderr)
    else:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            write_records_csv(records, fh)
        print(render_summary(records))
        print(f"records written to {args.out}")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="pacmap", description="PAC MAP inference over probabilistic circuits")
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="run one solver on a circuit and query spec")
    solve.add_argument("--circuit", required=True)
    solve.add_argument("--query", required=True)
    solve.add_argument("--method", required=True, choices=["pac", "smooth", "budget", "naive", "mp", "amp", "ind"])
    solve.add_argument("--epsilon", type=float, default=0.01)
    solve.add_argument("--delta", type=float, default=0.01)
    solve.add_argument("--budget", type=int, default=None)
    solve.add_argument("--cap", type=int, default=None)
    solve.add_argument("--batch-size", type=int, default=5000)
    solve.add_argument("--period", type=int, default=100)
    solve.add_argument("--radius", type=int, default=1)
    solve.add_argument("--warm-from", default=None)
    solve.add_argument("--seed", type=int, default=0)
    solve.add_argument("--trajectory", default=None)
    solve.set_defaults(func=cmd_solve)

    bench = sub.add_parser("bench", help="run the benchmark harness from a config file")
    bench.add_argument("--config", required=True)
    bench.add_argument("--out", default="-", help="records CSV path, or - for stdout")
    bench.set_defaults(func=cmd_bench)

    pareto = sub.add_parser("pareto", help="fixed-budget run and its (epsilon, delta) frontier")
    pareto.add_argument("--circuit", required=True)
    pareto.add_argument("--query", required=True)
    pareto.add_argument("--budget", type=int, required=True)
    pareto.add_argument("--grid", type=int, default=100)
    pareto.add_argument("--seed", type=int, default=0)
    pareto.add_argument("--out", required=True)
    pareto.set_defaults(func=cmd_pareto)

    validate = sub.add_parser("validate", help="report smoothness/decomposability")
    validate.add_argument("--circuit", required=True)
    validate.set_defaults(func=cmd_validate)

    oracle = sub.add_parser("oracle", help="exact MAP by enumeration (|Q| <= 24)")
    oracle.add_argument("--circuit", required=True)
    oracle.add_argument("--query", required=True)
    oracle.set_defaults(func=cmd_oracle)

    illustrate = sub.add_parser("illustrate", help="write the per-draw bound trajectory CSV")
    illustrate.add_argument("--circuit", required=True)
    illustrate.add_argument("--query", required=True)
    illustrate.add_argument("--epsilon", type=float, default=0.01)
    illustrate.add_argument("--delta", type=float, default=0.01)
    illustrate.add_argument("--seed", type=int, default=0)
    illustrate.add_argument("--out", required=True)
    illustrate.set_defaults(func=cmd_illustrate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ZeroEvidenceError as exc:
        print(f"pacmap: zero-probability evidence: {exc}", file=sys.stderr)
        return EXIT_ZERO_EVIDENCE
    except (CircuitFormatError, CircuitStructureError, ValueError, OSError) as exc:
        print(f"pacmap: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # internal invariant violation
        print(f"pacmap: internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
