"""Command-line front end: solve SDPA files, generate instances, run batches."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import SolverConfig
from .sdpa import (
    gen_matrix_completion, gen_maxcut, gen_mc_random, parse_gset_file,
    parse_sdpa_file, random_gset_graph, write_csv_row, write_sdpa,
    write_solution,
)
from .solver import STATUS_CONVERGED, run_benchmark, solve

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CAP = 2


def _add_solver_options(parser):
    parser.add_argument("--eps", type=float, default=1e-5,
                        help="final primal-infeasibility tolerance (default 1e-5)")
    parser.add_argument("--switch-tol", type=float, default=None,
                        help="phase-switch tolerance (default: by problem class)")
    parser.add_argument("--rank", default="log",
                        help="log | log-large | sqrt2m | <int> (default log)")
    parser.add_argument("--rank-escalation-factor", type=float, default=1.5)
    parser.add_argument("--rank-difficulty-threshold", type=int, default=None)
    parser.add_argument("--h", dest="heuristic", type=float, default=None,
                        help="penalty multiplier at the phase switch (default: by class)")
    parser.add_argument("--rho0", type=float, default=1.0,
                        help="initial penalty for the warm-start phase")
    parser.add_argument("--gamma", type=float, default=None,
                        help="proximal coupling weight (default: penalty at switch)")
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--time-limit", type=float, default=None, metavar="SECONDS")
    parser.add_argument("--class", dest="problem_class", default=None,
                        choices=["maxcut", "matrix_completion", "generic"],
                        help="override automatic class detection")
    parser.add_argument("-v", "--verbose", action="store_true")


_RANK_MODES = {"log": "log_small", "log-large": "log_large", "sqrt2m": "sqrt2m"}


def _config_from_args(args) -> SolverConfig:
    rank = args.rank
    if rank in _RANK_MODES:
        rank_mode = _RANK_MODES[rank]
    else:
        try:
            rank_mode = int(rank)
        except ValueError:
            raise SystemExit(f"bad --rank value {rank!r}")
    return SolverConfig(
        epsilon=args.eps,
        switch_tol=args.switch_tol,
        rho_init=args.rho0,
        heuristic_factor=args.heuristic,
        gamma=args.gamma,
        rank_mode=rank_mode,
        rank_escalation_factor=args.rank_escalation_factor,
        rank_difficulty_threshold=args.rank_difficulty_threshold,
        seed=args.seed,
        time_limit_s=args.time_limit,
        class_override=args.problem_class,
    )


def _cmd_solve(args) -> int:
    problem = parse_sdpa_file(args.file)
    report = solve(problem, _config_from_args(args))
    print(f"{report.name or args.file}: {report.status}")
    print(f"  objective   {report.objective:.10g}")
    print(f"  p_infeas    {report.p_infeas:.3e}   (one-norm {report.p_infeas_one:.3e},"
          f" two-norm {report.p_infeas_two:.3e})")
    print(f"  d_infeas    {report.d_infeas:.3e}")
    print(f"  pd_gap      {report.pd_gap:.3e}")
    print(f"  phase1      {report.phase1_outer} outer / {report.phase1_inner_total} inner,"
          f" rank {report.final_rank}")
    print(f"  phase2      {report.phase2_iters} sweeps, {report.cg_total} CG iters"
          f" (avg {report.cg_avg:.2f})")
    print(f"  time        {report.time_total_s:.3f}s"
          f" ({report.time_phase1_s:.3f}s + {report.time_phase2_s:.3f}s)")
    if args.out:
        write_csv_row(report, args.out)
    if args.factor_out:
        write_solution(report, args.factor_out)
    return EXIT_OK if report.status == STATUS_CONVERGED else EXIT_CAP


def _cmd_gen(args) -> int:
    if args.kind == "maxcut":
        if args.gset:
            graph = parse_gset_file(args.gset)
        else:
            graph = random_gset_graph(args.vertices, avg_degree=args.avg_degree,
                                      seed=args.seed, signed=args.signed)
        problem = gen_maxcut(graph)
    else:
        instance = gen_mc_random(args.rows, args.cols, args.mc_rank,
                                 args.fraction, seed=args.seed)
        problem = gen_matrix_completion(instance)
    stem = Path(args.output).stem
    problem = type(problem)(
        n=problem.n, m=problem.m, objective=problem.objective,
        constraints=problem.constraints, rhs=problem.rhs,
        class_tag=problem.class_tag, maximize=problem.maximize,
        name=stem, blocks=problem.blocks)
    write_sdpa(problem, args.output)
    print(f"wrote {args.output}: n={problem.n}, m={problem.m}")
    return EXIT_OK


def _cmd_bench(args) -> int:
    manifest = Path(args.manifest)
    paths = [ln.strip() for ln in manifest.read_text().splitlines()
             if ln.strip() and not ln.strip().startswith("#")]
    if not paths:
        print("manifest lists no problems", file=sys.stderr)
        return EXIT_ERROR
    base = manifest.parent
    problems = []
    for p in paths:
        candidate = Path(p)
        if not candidate.is_absolute():
            candidate = base / candidate
        problems.append(parse_sdpa_file(candidate))
    reports, mean_time = run_benchmark(problems, _config_from_args(args),
                                       csv_path=args.out)
    for rep in reports:
        print(f"{rep.name}: {rep.status}, time {rep.time_total_s:.3f}s,"
              f" p_infeas {rep.p_infeas:.3e}")
    print(f"shifted geometric mean of times (s=10): {mean_time:.4f}")
    bad = sum(r.status != STATUS_CONVERGED for r in reports)
    return EXIT_OK if bad == 0 else EXIT_CAP


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lorank",
        description="Low-rank two-phase SDP solver (SDPA sparse input)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve one SDPA file")
    p_solve.add_argument("file")
    _add_solver_options(p_solve)
    p_solve.add_argument("--out", default=None, help="append a CSV report row")
    p_solve.add_argument("--factor-out", default=None,
                         help="dump the recombined factor (LRSDP1 container)")
    p_solve.set_defaults(fn=_cmd_solve)

    p_gen = sub.add_parser("gen", help="generate an instance as an SDPA file")
    gen_sub = p_gen.add_subparsers(dest="kind", required=True)
    g_max = gen_sub.add_parser("maxcut")
    g_max.add_argument("--gset", default=None, help="convert a Gset graph file")
    g_max.add_argument("--vertices", type=int, default=100)
    g_max.add_argument("--avg-degree", type=float, default=6.0)
    g_max.add_argument("--signed", action="store_true", help="+-1 edge weights")
    g_max.add_argument("--seed", type=int, default=42)
    g_max.add_argument("-o", "--output", required=True)
    g_max.set_defaults(fn=_cmd_gen)
    g_mc = gen_sub.add_parser("mc")
    g_mc.add_argument("--rows", type=int, required=True)
    g_mc.add_argument("--cols", type=int, required=True)
    g_mc.add_argument("--rank", dest="mc_rank", type=int, default=3)
    g_mc.add_argument("--fraction", type=float, default=0.2)
    g_mc.add_argument("--seed", type=int, default=42)
    g_mc.add_argument("-o", "--output", required=True)
    g_mc.set_defaults(fn=_cmd_gen)

    p_bench = sub.add_parser("bench", help="solve every file in a manifest")
    p_bench.add_argument("manifest")
    _add_solver_options(p_bench)
    p_bench.add_argument("--out", default=None, help="CSV output path")
    p_bench.set_defaults(fn=_cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
