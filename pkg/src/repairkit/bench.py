"""Single-bug benchmark corpora: building them from mutations and evaluating repairs.

Layout of a bench directory::

    index.json               {"cases": ["case-000", ...]}
    case-000/manifest.json   focal_file, focal_function, reference_fix_file, ...
    case-000/project/        the buggy project, tests included
    case-000/reference.py    the original (fixed) function
    case-000/trace.txt       failure output of the first failing covering test
"""

from __future__ import annotations

import dataclasses
import json
import logging
import random
import shutil
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from repairkit import mutate
from repairkit.corpus import MethodRecord
from repairkit.errors import (
    BaselineFailure, DegenerateMutation, InsufficientCoverage, NoCoveringTests, NoProjectFrames, NoSuspects,
    RepairKitError, SyntaxBroken, UnrecognizedTraceFormat,
)
from repairkit.harness import Baseline, Sandbox, TestRun, baseline, copy_project, \
    coverage_matrix, covered_files, mutated_file, run_suite, validate_bug
from repairkit.localize import (
    DEFAULT_EXCLUDES, DEFAULT_TEST_GLOBS, SuspectRanking, _matches, line_scores, merge_rankings,
    rank_functions_by_spectrum, rank_functions_by_trace, split_unit,
)
from repairkit.repair import (
    VERBATIM, Budgets, Generator, JointReport, RepairTask, adaptive_timeout, build_task_skeleton,
    joint_localize_and_repair,
)
from repairkit.skeleton import SkeletonConfig
from repairkit.structure import FunctionInfo, SourceIndex, find_function, index_file
from repairkit.trace import TraceRenderConfig, parse_trace, render_trace

logger = logging.getLogger(__name__)

INDEX_FILE = "index.json"
MANIFEST_FILE = "manifest.json"
REFERENCE_FILE = "reference.py"
TRACE_FILE = "trace.txt"


@dataclass(frozen=True)
class BenchCase:
    case_id: str
    project_dir: Path
    manifest: Mapping

    @property
    def focal_file(self) -> str:
        return self.manifest["focal_file"]

    @property
    def focal_function(self) -> str:
        return self.manifest["focal_function"]

    @property
    def unit(self) -> str:
        return f"{self.focal_file}::{self.focal_function}"

    def reference(self) -> MethodRecord | None:
        name = self.manifest.get("reference_fix_file")
        if not name:
            return None
        path = self.project_dir.parent / name
        return MethodRecord.from_source(path.read_text(encoding="utf-8"),
                                        file_path=self.focal_file,
                                        qualified_name=self.focal_function)


# -- project introspection ------------------------------------------------------------

def python_files(project: Path, exclude: Sequence[str] = DEFAULT_EXCLUDES) -> list[str]:
    out = []
    for path in sorted(project.rglob("*.py")):
        rel = path.relative_to(project).as_posix()
        if not _matches(rel, exclude) and "__pycache__" not in rel:
            out.append(rel)
    return out


class ProjectIndex:
    """Lazily indexed source files of one project directory."""

    def __init__(self, project: Path, overrides: Mapping[str, str] | None = None):
        self.project = Path(project)
        self.overrides = dict(overrides or {})
        self._cache: dict[str, SourceIndex | None] = {}

    def source(self, rel: str) -> str | None:
        if rel in self.overrides:
            return self.overrides[rel]
        path = self.project / rel
        if not path.is_file():
            return None
        return path.read_text(encoding="utf-8")

    def __call__(self, rel: str) -> SourceIndex | None:
        if rel not in self._cache:
            text = self.source(rel)
            try:
                self._cache[rel] = index_file(text, rel) if text is not None else None
            except (RepairKitError, IndentationError, ValueError):
                self._cache[rel] = None
        return self._cache[rel]

    def functions(self, test_globs: Sequence[str] = DEFAULT_TEST_GLOBS,
                  include_tests: bool = False) -> list[tuple[str, FunctionInfo]]:
        out = []
        for rel in python_files(self.project):
            if not include_tests and _matches(rel, test_globs):
                continue
            index = self(rel)
            if index is not None:
                out.extend((rel, f) for f in index.all_functions())
        return out


# -- building ---------------------------------------------------------------------------

def _candidates(project: Path, index: ProjectIndex, base: Baseline,
                operators: Sequence[str]) -> list[tuple[str, FunctionInfo, list[tuple[str, mutate.Site]]]]:
    out = []
    for rel, func in index.functions():
        if not base.covering(rel, func.lines()):
            continue
        source = index(rel).source_of(func)
        try:
            sites = mutate.all_sites(source, operators)
        except (SyntaxError, ValueError):
            continue
        if sites:
            out.append((rel, func, sites))
    return out


def build_bench_from_mutations(project: str | Path, n_cases: int,
                               operators: Sequence[str] = mutate.NON_LOSSY, seed: int = 0,
                               out_dir: str | Path | None = None, sandbox: Sandbox = Sandbox(),
                               id_prefix: str = "case", start_index: int = 0,
                               base: Baseline | None = None) -> list[BenchCase]:
    """Inject validated single-operator bugs into ``project``.

    Functions covered by passing tests are visited round-robin in an order
    shuffled by ``seed``. Each visit tries one more site of the operator that
    has produced the fewest accepted bugs so far, which keeps the operator
    mix balanced. A function contributes at most one bug per round, and only
    bugs that make a covering test fail are kept.
    """
    if n_cases <= 0:
        return []
    project = Path(project)
    base = base or baseline(project, sandbox)
    if not base.passing():
        raise BaselineFailure("the project has no passing tests")
    index = ProjectIndex(project)
    pool = _candidates(project, index, base, operators)
    rng = random.Random(seed)
    rng.shuffle(pool)
    queues: list[tuple[str, FunctionInfo, dict[str, list[mutate.Site]]]] = []
    for rel, func, sites in pool:
        by_op: dict[str, list[mutate.Site]] = {}
        for op, site in sites:
            by_op.setdefault(op, []).append(site)
        for op_sites in by_op.values():
            rng.shuffle(op_sites)
        queues.append((rel, func, by_op))
    out_dir = Path(out_dir) if out_dir is not None else None
    cases: list[BenchCase] = []
    accepted_ops: dict[str, int] = {op: 0 for op in operators}
    while len(cases) < n_cases and any(any(q[2].values()) for q in queues):
        for rel, func, by_op in queues:
            if len(cases) >= n_cases:
                break
            # keep trying this function until one bug sticks or it runs dry
            while any(by_op.values()):
                live = [op for op in by_op if by_op[op]]
                op = min(live, key=lambda o: (accepted_ops.get(o, 0), rng.random()))
                site = by_op[op].pop(0)
                found = _try_bug(project, index, base, sandbox, rel, func, op, site,
                                 rng.randrange(2 ** 31))
                if found is None:
                    continue
                bug, trace = found
                accepted_ops[op] = accepted_ops.get(op, 0) + 1
                case_id = f"{id_prefix}-{start_index + len(cases):03d}"
                cases.append(_write_case(case_id, project, rel, func, bug,
                                         index(rel).source_of(func), trace, out_dir))
                break
    if len(cases) < n_cases:
        raise InsufficientCoverage(f"only {len(cases)} of {n_cases} bugs survived validation")
    return cases


def _try_bug(project: Path, index: ProjectIndex, base: Baseline, sandbox: Sandbox, rel: str,
             func: FunctionInfo, op: str, site: mutate.Site,
             seed: int) -> tuple[mutate.InjectedBug, str] | None:
    source = index(rel).source_of(func)
    record = MethodRecord.from_source(source, repo_id=project.name, file_path=rel,
                                      qualified_name=func.qualified_name, line_span=func.span)
    try:
        bug = mutate.apply(source, op, site, seed, record=record)
        verdict = validate_bug(project, bug, base, sandbox)
    except (DegenerateMutation, SyntaxBroken, NoCoveringTests, ValueError) as exc:
        logger.debug("skipping %s %s at %s: %s", rel, op, site.position, exc)
        return None
    if not verdict.accepted:
        return None
    trace = next((r.raw_trace for r in verdict.runs if not r.passed and r.raw_trace), "")
    return bug, trace


def _write_case(case_id: str, project: Path, rel: str, func: FunctionInfo,
                bug: mutate.InjectedBug, original: str, trace: str, out_dir: Path | None) -> BenchCase:
    manifest = {
        "case_id": case_id,
        "source_project": project.name,
        "focal_file": rel,
        "focal_function": func.qualified_name,
        "reference_fix_file": REFERENCE_FILE,
        "injected_operator": bug.operator,
        "site": list(bug.site),
        "seed": bug.seed,
        "lossy": bug.lossy,
        "test_command": None,
    }
    if out_dir is None:
        return BenchCase(case_id, project, manifest)
    case_dir = out_dir / case_id
    if case_dir.exists():
        shutil.rmtree(case_dir)
    case_dir.mkdir(parents=True)
    file_text = (project / rel).read_text(encoding="utf-8")
    copy_project(project, case_dir / "project", {rel: mutated_file(file_text, bug)})
    (case_dir / REFERENCE_FILE).write_text(original, encoding="utf-8")
    (case_dir / TRACE_FILE).write_text(trace, encoding="utf-8")
    (case_dir / MANIFEST_FILE).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                          encoding="utf-8")
    return BenchCase(case_id, case_dir / "project", manifest)


def write_index(out_dir: str | Path, cases: Iterable[BenchCase | str]) -> Path:
    out_dir = Path(out_dir)
    ids = sorted({c if isinstance(c, str) else c.case_id for c in cases})
    path = out_dir / INDEX_FILE
    path.write_text(json.dumps({"cases": ids}, indent=2) + "\n", encoding="utf-8")
    return path


def load_bench(bench_dir: str | Path) -> list[BenchCase]:
    bench_dir = Path(bench_dir)
    index = bench_dir / INDEX_FILE
    if index.is_file():
        ids = json.loads(index.read_text(encoding="utf-8"))["cases"]
    else:
        ids = sorted(p.name for p in bench_dir.iterdir() if (p / MANIFEST_FILE).is_file()) \
            if bench_dir.is_dir() else []
    cases = []
    for case_id in ids:
        case_dir = bench_dir / case_id
        manifest = json.loads((case_dir / MANIFEST_FILE).read_text(encoding="utf-8"))
        cases.append(BenchCase(case_id, case_dir / "project", manifest))
    return cases


# -- evaluation -----------------------------------------------------------------------------

@dataclass(frozen=True)
class RunSettings:
    budgets: Budgets = field(default_factory=Budgets)
    k_values: tuple[int, ...] = (1, 10)
    use_trace: bool = True
    skeleton: SkeletonConfig = field(default_factory=SkeletonConfig)
    trace: TraceRenderConfig = field(default_factory=TraceRenderConfig)
    sandbox: Sandbox = field(default_factory=Sandbox)
    exclude_globs: tuple[str, ...] = DEFAULT_EXCLUDES
    test_globs: tuple[str, ...] = DEFAULT_TEST_GLOBS
    use_operator_prior: bool = True
    max_suspects: int | None = 5
    stop_at: str = VERBATIM


@dataclass
class Localization:
    ranking: SuspectRanking
    trace_text: str | None
    lines: dict[str, dict[int, float]]


def localize(project: Path, runs: Sequence[TestRun], index: ProjectIndex,
             settings: RunSettings) -> Localization:
    """Trace-recency ranking of the first failing test, with a DStar tail."""
    failing = [r for r in runs if not r.passed]
    trace_text = None
    parsed = None
    ranking = SuspectRanking()
    if failing:
        raw = failing[0].raw_trace
        try:
            parsed = parse_trace(raw)
            trace_text = render_trace(parsed, settings.skeleton.tokenizer, settings.trace)
            ranking = rank_functions_by_trace(
                parsed, project, index, settings.exclude_globs, settings.test_globs,
                project_functions=index.functions)
        except UnrecognizedTraceFormat:
            trace_text = raw or None
        except NoProjectFrames:
            pass
    files = [f for f in covered_files(runs) if not _matches(f, settings.test_globs)]
    matrices = [coverage_matrix(runs, f) for f in files]
    spectrum = rank_functions_by_spectrum(matrices, index)
    ranking = merge_rankings(ranking, spectrum)
    ranking.entries = [e for e in ranking.entries
                       if not _matches(split_unit(e.unit)[0], settings.test_globs)]
    return Localization(ranking, trace_text, line_scores(parsed, matrices, project))


def task_factory(project: Path, runs: Sequence[TestRun], index: ProjectIndex,
                 settings: RunSettings, loc: Localization,
                 references: Mapping[str, MethodRecord] | None = None,
                 prior: Mapping[str, float] | None = None
                 ) -> Callable[[str], RepairTask | None]:
    def make(unit: str) -> RepairTask | None:
        rel, name = split_unit(unit)
        src_index = index(rel)
        if src_index is None:
            return None
        try:
            func = find_function(src_index, name)
        except RepairKitError:
            return None
        # the failing tests always take part, so an untouched suspect can never look fixed
        hits = [r for r in runs if not r.passed or r.covers(rel, func.lines())]
        covering = [r.test_id for r in hits]
        budgets = dataclasses.replace(settings.budgets, validation_timeout=adaptive_timeout(
            [r.duration for r in hits], settings.budgets.validation_timeout))
        return RepairTask(
            project=project, file_path=rel, focal=func,
            file_source=index.source(rel), skeleton=build_task_skeleton(src_index, func, settings.skeleton),
            trace_context=loc.trace_text if settings.use_trace else None,
            reference_fix=(references or {}).get(unit),
            budgets=budgets, covering_tests=covering,
            operator_prior=dict(prior or {}), sandbox=settings.sandbox,
            line_scores=loc.lines.get(rel, {}),
        )
    return make


@dataclass
class CaseRow:
    case_id: str
    status: str
    plausible: bool
    verbatim: bool
    first_fix_index: int | None
    fixed_unit: str | None
    true_unit: str
    trace_rank: int | None
    n_validated: int
    n_duplicates_removed: int
    plausible_at_k: dict[str, bool]
    verbatim_at_k: dict[str, bool]
    duration: float
    error: str | None = None

    @property
    def plausible_only(self) -> bool:
        return self.plausible and not self.verbatim


@dataclass
class BenchReport:
    rows: list[CaseRow]
    k_values: tuple[int, ...] = (1, 10)

    @property
    def n_cases(self) -> int:
        return len(self.rows)

    @property
    def n_fixed(self) -> int:
        return sum(r.plausible for r in self.rows)

    @property
    def n_plausible_only(self) -> int:
        return sum(r.plausible_only for r in self.rows)

    @property
    def n_verbatim(self) -> int:
        return sum(r.verbatim for r in self.rows)

    @property
    def true_positive_proxy_rate(self) -> float | None:
        denom = self.n_verbatim + self.n_plausible_only
        return self.n_verbatim / denom if denom else None

    @property
    def localization_top1(self) -> float | None:
        ranked = [r for r in self.rows if r.error is None]
        return sum(r.trace_rank == 1 for r in ranked) / len(ranked) if ranked else None

    def topk(self) -> dict[str, dict[str, float]]:
        n = len(self.rows)
        table = {}
        for k in self.k_values:
            key = str(k)
            table[key] = {
                "plausible": sum(r.plausible_at_k.get(key, False) for r in self.rows) / n if n else 0.0,
                "verbatim": sum(r.verbatim_at_k.get(key, False) for r in self.rows) / n if n else 0.0,
            }
        return table

    def aggregates(self) -> dict:
        return {
            "n_cases": self.n_cases,
            "n_fixed": self.n_fixed,
            "n_plausible_only": self.n_plausible_only,
            "true_positive_proxy_rate": self.true_positive_proxy_rate,
            "n_verbatim": self.n_verbatim,
            "localization_top1": self.localization_top1,
            "topk": self.topk(),
        }

    def to_json(self) -> dict:
        return {"k_values": list(self.k_values), "aggregates": self.aggregates(),
                "cases": [asdict(r) for r in self.rows]}

    @classmethod
    def from_json(cls, data: dict) -> "BenchReport":
        return cls([CaseRow(**row) for row in data["cases"]], tuple(data["k_values"]))

    def table(self) -> str:
        rate = self.true_positive_proxy_rate
        rows = [
            ("Number of Bugs", str(self.n_cases)),
            ("Number of Bugs Fixed (plausible)", str(self.n_fixed)),
            ("Plausible-not-verbatim (false-positive proxy)", str(self.n_plausible_only)),
            ("True Positive Rate (proxy)", "n/a" if rate is None else f"{rate:.1%}"),
            ("Number of Verbatim Fixes", str(self.n_verbatim)),
        ]
        for key, vals in self.topk().items():
            rows.append((f"Top-{key} Success Rate (verbatim)", f"{vals['verbatim']:.1%}"))
            rows.append((f"Top-{key} Success Rate (plausible)", f"{vals['plausible']:.1%}"))
        loc = self.localization_top1
        rows.append(("Trace top-1 localization", "n/a" if loc is None else f"{loc:.1%}"))
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name:<{width}}  {value:>8}" for name, value in rows) + "\n"

    def case_table(self) -> str:
        header = ("case", "status", "verbatim", "plausible", "first_fix", "rank", "validated", "secs")
        lines = [header]
        for r in self.rows:
            lines.append((r.case_id, r.status, str(r.verbatim), str(r.plausible),
                          "-" if r.first_fix_index is None else str(r.first_fix_index),
                          "-" if r.trace_rank is None else str(r.trace_rank),
                          str(r.n_validated), f"{r.duration:.1f}"))
        widths = [max(len(row[i]) for row in lines) for i in range(len(header))]
        return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
                         for row in lines) + "\n"


@dataclass
class ProjectRepair:
    report: JointReport
    localization: Localization
    runs: list[TestRun]
    tasks: dict[str, RepairTask]


def repair_project(project: str | Path, gen: Generator, settings: RunSettings = RunSettings(),
                   references: Mapping[str, MethodRecord] | None = None,
                   prior: Mapping[str, float] | None = None,
                   runs: Sequence[TestRun] | None = None) -> ProjectRepair:
    """Localize from the failing tests of ``project`` and repair suspects in rank order.

    Raises :class:`BaselineFailure` when every test passes and
    :class:`NoSuspects` when nothing can be ranked.
    """
    project = Path(project)
    if runs is None:
        runs = run_suite(project, settings.sandbox, coverage=True)
    runs = list(runs)
    if all(r.passed for r in runs):
        raise BaselineFailure("every test passes; there is nothing to repair")
    index = ProjectIndex(project)
    loc = localize(project, runs, index, settings)
    if not len(loc.ranking):
        raise NoSuspects("no project function is covered by a failing test")
    make = task_factory(project, runs, index, settings, loc, references, prior)
    tasks: dict[str, RepairTask] = {}

    def task_for(unit: str) -> RepairTask | None:
        task = make(unit)
        if task is not None:
            tasks[unit] = task
        return task

    report = joint_localize_and_repair(loc.ranking, task_for, gen, settings.budgets,
                                       settings.k_values, settings.stop_at, settings.max_suspects)
    return ProjectRepair(report, loc, runs, tasks)


def run_case(case: BenchCase, gen: Generator, settings: RunSettings = RunSettings()) -> CaseRow:
    start = time.monotonic()
    empty = {str(k): False for k in settings.k_values}

    def failed_row(error: str) -> CaseRow:
        return CaseRow(case.case_id, "error", False, False, None, None, case.unit, None, 0, 0,
                       dict(empty), dict(empty), time.monotonic() - start, error)

    reference = case.reference()
    prior = {}
    if settings.use_operator_prior and case.manifest.get("injected_operator"):
        # the oracle knows what kind of edit broke the code, not where
        prior = {case.manifest["injected_operator"]: 2.0}
    try:
        result = repair_project(case.project_dir, gen, settings,
                                {case.unit: reference} if reference else {}, prior)
    except RepairKitError as exc:
        return failed_row(f"{type(exc).__name__}: {exc}")
    report = result.report
    metrics = report.metrics(reference is not None)
    winner = report.winner
    return CaseRow(
        case_id=case.case_id,
        status=report.status,
        plausible=winner is not None or metrics.n_plausible > 0,
        verbatim=metrics.n_verbatim > 0,
        first_fix_index=metrics.first_fix_index,
        fixed_unit=winner[0] if winner else None,
        true_unit=case.unit,
        trace_rank=result.localization.ranking.rank_of(case.unit),
        n_validated=len(report.outcomes),
        n_duplicates_removed=metrics.n_duplicates_removed,
        plausible_at_k={str(k): v for k, v in metrics.plausible_at_k.items()},
        verbatim_at_k={str(k): v for k, v in metrics.verbatim_at_k.items()},
        duration=time.monotonic() - start,
    )


def run_bench(cases: Sequence[BenchCase], gen: Generator | Callable[[], Generator],
              settings: RunSettings = RunSettings(), jobs: int = 1) -> BenchReport:
    """Evaluate every case; per-case failures become rows, never exceptions."""
    ordered = sorted(cases, key=lambda c: c.case_id)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(lambda c: run_case(c, gen, settings), ordered))
    else:
        rows = [run_case(c, gen, settings) for c in ordered]
    return BenchReport(rows, tuple(settings.k_values))


def write_report(report: BenchReport, out: str | Path) -> tuple[Path, Path]:
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report.to_json(), indent=2) + "\n", encoding="utf-8")
    table = out.with_suffix(".txt")
    table.write_text(report.table() + "\n" + report.case_table(), encoding="utf-8")
    return out, table
