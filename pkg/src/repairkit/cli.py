"""Command line entry point: ``repairkit {mine,mutate,repair,bench}``.

Exit codes: 0 success, 1 no fix found, 2 usage or config error,
3 environment or test-baseline error.
"""

from __future__ import annotations

import argparse
import difflib
import functools
import json
import logging
import shlex
import sys
import tempfile
from pathlib import Path
from typing import Sequence

from repairkit import __version__, bench, mutate
from repairkit.config import Config, ConfigError
from repairkit.corpus import mine_repository, write_pairs
from repairkit.errors import (
    BaselineFailure, CommandNotFound, GeneratorUnavailable, InsufficientCoverage, NoSuspects,
    RepairKitError, SandboxFailure, SuiteTimeout,
)
from repairkit.repair import (
    VERBATIM, ExternalGenerator, Generator, body_delete_generator, echo_generator, oracle_generator,
    build_task_skeleton, splice,
)
from repairkit.structure import find_function

EXIT_OK, EXIT_NO_FIX, EXIT_USAGE, EXIT_ENV = 0, 1, 2, 3
GENERATORS = ("oracle", "echo", "delete-body", "external")


class UsageError(Exception):
    pass


def _positive_int(text: str) -> int:
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _k_list(text: str) -> list[int]:
    try:
        ks = [int(k) for k in text.split(",") if k.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not ks:
        raise argparse.ArgumentTypeError("empty k list")
    return sorted(set(ks))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="repairkit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="YAML config file; flags override its values")
    parser.add_argument("--seed", type=int, help="random seed")
    parser.add_argument("--jobs", type=_positive_int, help="parallel cases (bench)")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mine", help="extract method edit pairs from fix commits of a git repo")
    p.add_argument("repo")
    p.add_argument("-o", "--out", required=True, help="output JSONL file")
    p.add_argument("--repo-id")

    p = sub.add_parser("mutate", help="inject validated bugs into projects")
    p.add_argument("projects", nargs="+")
    p.add_argument("-n", "--n-cases", type=int, required=True, help="bugs per project")
    p.add_argument("-o", "--out", required=True, help="output JSONL file")
    p.add_argument("--bench-dir", help="also keep the cases as a bench directory")
    p.add_argument("--operators", help="comma-separated operator ids (default: non-lossy)")

    p = sub.add_parser("repair", help="localize and repair the failing tests of a project")
    p.add_argument("project")
    p.add_argument("--trace", dest="trace", action="store_true", default=True,
                   help="give the generator the rendered failure trace (default)")
    p.add_argument("--no-trace", dest="trace", action="store_false")
    _generator_flags(p)
    p.add_argument("--apply", action="store_true", help="write the winning patch into the project")
    p.add_argument("--patch-out", default="repairkit.patch", help="unified diff of the winning patch")
    p.add_argument("--report-out", help="write the repair report as JSON")

    p = sub.add_parser("bench", help="evaluate a generator over a bench directory")
    p.add_argument("bench_dir")
    p.add_argument("--out", help="report JSON path (default: BENCH_DIR/report.json)")
    p.add_argument("--k", type=_k_list, help="comma-separated k values, e.g. 1,10")
    p.add_argument("--no-trace", dest="trace", action="store_false", default=True)
    _generator_flags(p)
    return parser


def _generator_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--generator", choices=GENERATORS)
    p.add_argument("--generator-command", help="command line of an external generator")
    p.add_argument("--budget-candidates", type=_positive_int)
    p.add_argument("--budget-seconds", type=_positive_float)
    p.add_argument("--top-k", type=_k_list, help="comma-separated k values for the report")


def effective_config(args: argparse.Namespace) -> Config:
    cfg = Config.load(args.config)
    command = getattr(args, "generator_command", None)
    ks = getattr(args, "top_k", None) or getattr(args, "k", None)
    return cfg.override(
        seed=args.seed,
        jobs=args.jobs,
        generator=getattr(args, "generator", None),
        generator_command=shlex.split(command) if command else None,
        max_candidates=getattr(args, "budget_candidates", None),
        wall_clock_seconds=getattr(args, "budget_seconds", None),
        k_values=ks,
    )


def make_generator(cfg: Config) -> Generator:
    if cfg.generator == "oracle":
        return functools.partial(oracle_generator, weights=cfg.operator_weights)
    if cfg.generator == "echo":
        return echo_generator
    if cfg.generator == "delete-body":
        return body_delete_generator
    if cfg.generator == "external":
        if not cfg.generator_command:
            raise UsageError("--generator external needs --generator-command")
        return ExternalGenerator(cfg.generator_command, cfg.max_candidates, cfg.wall_clock_seconds)
    raise UsageError(f"unknown generator {cfg.generator!r}")


def run_settings(cfg: Config, use_trace: bool = True) -> bench.RunSettings:
    return bench.RunSettings(
        budgets=cfg.budgets(), k_values=tuple(cfg.k_values), use_trace=use_trace,
        skeleton=cfg.skeleton_config(), trace=cfg.trace_config(), sandbox=cfg.sandbox(),
        exclude_globs=tuple(cfg.exclude_globs), test_globs=tuple(cfg.test_globs),
        max_suspects=cfg.max_suspects, stop_at=VERBATIM,
    )


# -- commands ------------------------------------------------------------------------------

def cmd_mine(args: argparse.Namespace, cfg: Config) -> int:
    repo = Path(args.repo)
    if not (repo / ".git").exists():
        raise UsageError(f"{repo} is not a git repository")
    out = Path(args.out)
    with out.open("w", encoding="utf-8") as fh:
        n = write_pairs(mine_repository(repo, args.repo_id), fh)
    print(f"wrote {n} edit pairs to {out}")
    return EXIT_OK


def cmd_mutate(args: argparse.Namespace, cfg: Config) -> int:
    if args.n_cases < 0:
        raise UsageError("--n-cases must be non-negative")
    operators = mutate.NON_LOSSY
    if args.operators:
        operators = [op.strip() for op in args.operators.split(",") if op.strip()]
        unknown = [op for op in operators if op not in mutate.OPERATORS]
        if unknown:
            raise UsageError(f"unknown operators: {', '.join(unknown)}")
    projects = [Path(p) for p in args.projects]
    for project in projects:
        if not project.is_dir():
            raise UsageError(f"{project} is not a directory")
    out = Path(args.out)
    with tempfile.TemporaryDirectory(prefix="repairkit-mutate-") as tmp:
        bench_dir = Path(args.bench_dir) if args.bench_dir else Path(tmp)
        bench_dir.mkdir(parents=True, exist_ok=True)
        cases: list[bench.BenchCase] = []
        for project in projects:
            cases += bench.build_bench_from_mutations(
                project, args.n_cases, operators, cfg.seed, bench_dir, cfg.sandbox(),
                id_prefix=project.name)
        if args.bench_dir:
            bench.write_index(bench_dir, {c.case_id for c in bench.load_bench(bench_dir)}
                              | {c.case_id for c in cases})
        with out.open("w", encoding="utf-8") as fh:
            for case in cases:
                fh.write(json.dumps(case_record(case, cfg), ensure_ascii=False) + "\n")
    print(f"wrote {len(cases)} injected bugs to {out}")
    return EXIT_OK


def case_record(case: bench.BenchCase, cfg: Config) -> dict:
    """The JSONL form of one bench case: original, mutated, skeleton and trace."""
    index = bench.ProjectIndex(case.project_dir)
    src = index(case.focal_file)
    func = find_function(src, case.focal_function)
    trace_path = case.project_dir.parent / bench.TRACE_FILE
    m = case.manifest
    return {
        "case_id": case.case_id,
        "focal_file": case.focal_file,
        "focal_function": case.focal_function,
        "original": case.reference().source,
        "mutated": src.source_of(func),
        "operator": m.get("injected_operator"),
        "site": m.get("site"),
        "seed": m.get("seed"),
        "lossy": m.get("lossy"),
        "skeleton": build_task_skeleton(src, func, cfg.skeleton_config()).text,
        "trace": trace_path.read_text(encoding="utf-8") if trace_path.is_file() else None,
    }


def cmd_repair(args: argparse.Namespace, cfg: Config) -> int:
    project = Path(args.project)
    if not project.is_dir():
        raise UsageError(f"{project} is not a directory")
    gen = make_generator(cfg)
    settings = run_settings(cfg, args.trace)
    try:
        result = bench.repair_project(project, gen, settings, prior=cfg.operator_weights)
    finally:
        if isinstance(gen, ExternalGenerator):
            gen.close()
    report = result.report
    metrics = report.metrics(False)
    ranking = result.localization.ranking
    print("suspects:")
    for i, entry in enumerate(ranking.entries[:settings.max_suspects or len(ranking)], 1):
        print(f"  {i}. {entry.unit}")
    for unit, attempt in report.attempts:
        counts: dict[str, int] = {}
        for o in attempt.outcomes:
            counts[o.cls] = counts.get(o.cls, 0) + 1
        print(f"{unit}: {attempt.status}, {len(attempt.outcomes)} validated {counts}")
    print(f"status: {report.status} in {report.duration:.1f} s")
    print(json.dumps(metrics.to_json(), sort_keys=True))
    if args.report_out:
        Path(args.report_out).write_text(json.dumps({
            "status": report.status,
            "duration": report.duration,
            "suspects": ranking.units(),
            "attempts": [{"unit": u, "status": r.status,
                          "outcomes": [{"class": o.cls, "origin": o.candidate.origin,
                                        "tests_run": o.tests_run, "duration": o.duration}
                                       for o in r.outcomes]}
                         for u, r in report.attempts],
            "metrics": metrics.to_json(),
        }, indent=2) + "\n", encoding="utf-8")
    winner = report.winner
    if winner is None:
        print("no plausible patch found")
        return EXIT_NO_FIX
    unit, outcome = winner
    task = result.tasks[unit]
    patched = splice(task, outcome.candidate.text)
    diff = "".join(difflib.unified_diff(
        task.file_source.splitlines(keepends=True), patched.splitlines(keepends=True),
        fromfile=f"a/{task.file_path}", tofile=f"b/{task.file_path}"))
    Path(args.patch_out).write_text(diff, encoding="utf-8")
    print(f"patch for {unit} written to {args.patch_out}")
    if args.apply:
        (project / task.file_path).write_text(patched, encoding="utf-8")
        print(f"applied to {project / task.file_path}")
    return EXIT_OK


def cmd_bench(args: argparse.Namespace, cfg: Config) -> int:
    bench_dir = Path(args.bench_dir)
    cases = bench.load_bench(bench_dir)
    if not cases:
        raise UsageError(f"no bench cases in {bench_dir}")
    gen = make_generator(cfg)
    try:
        report = bench.run_bench(cases, gen, run_settings(cfg, args.trace), jobs=cfg.jobs)
    finally:
        if isinstance(gen, ExternalGenerator):
            gen.close()
    out = Path(args.out) if args.out else bench_dir / "report.json"
    json_path, table_path = bench.write_report(report, out)
    print(report.table(), end="")
    print(f"report: {json_path}\ntable: {table_path}")
    return EXIT_OK


COMMANDS = {"mine": cmd_mine, "mutate": cmd_mutate, "repair": cmd_repair, "bench": cmd_bench}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = effective_config(args)
    except (ConfigError, ValueError) as exc:
        print(f"repairkit: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print("# effective config", file=sys.stderr)
    print(cfg.dump(), file=sys.stderr, end="")
    try:
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"repairkit: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (BaselineFailure, InsufficientCoverage, SuiteTimeout, CommandNotFound, SandboxFailure,
            GeneratorUnavailable, NoSuspects) as exc:
        print(f"repairkit: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ENV
    except RepairKitError as exc:
        print(f"repairkit: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ENV


if __name__ == "__main__":
    sys.exit(main())
