"""Fault localization: DStar spectrum scores and the stack-trace recency heuristic."""

from __future__ import annotations

import fnmatch
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path, PurePosixPath
from typing import IO, Callable, Iterable, Mapping, Sequence

from repairkit.errors import NoProjectFrames
from repairkit.structure import FunctionInfo, SourceIndex
from repairkit.trace import ParsedTrace

INFINITY = math.inf

DEFAULT_EXCLUDES = (
    ".venv/*", "venv/*", "env/*", ".tox/*", "*/site-packages/*", "site-packages/*",
    "*/dist-packages/*", "build/*", "node_modules/*",
)
DEFAULT_TEST_GLOBS = ("test_*.py", "*_test.py", "tests/*", "test/*", "*/tests/*", "conftest.py",
                      "*/conftest.py")


@dataclass(frozen=True)
class DStarParams:
    e: float = 2

    def __post_init__(self) -> None:
        if not self.e > 0:
            raise ValueError("DStar exponent must be positive")


def dstar_score(failed: int, passed: int, totalfailed: int, p: DStarParams = DStarParams()) -> float:
    """Suspiciousness ``failed**e / (passed + totalfailed - failed)``.

    A zero numerator scores 0 even when the denominator is also 0; a zero
    denominator otherwise returns ``math.inf``.
    """
    if failed < 0 or passed < 0 or failed > totalfailed:
        raise ValueError(f"invalid counts failed={failed} passed={passed} totalfailed={totalfailed}")
    if failed == 0:
        return 0.0
    denominator = passed + (totalfailed - failed)
    if denominator == 0:
        return INFINITY
    return failed ** p.e / denominator


@dataclass(frozen=True)
class ScoredStatement:
    file_path: str
    line: int
    failed: int
    passed: int
    score: float


@dataclass(frozen=True)
class RankedUnit:
    unit: str
    score: float
    file_path: str = ""
    line: int = 0


@dataclass
class SuspectRanking:
    entries: list[RankedUnit] = field(default_factory=list)
    fallback: bool = False

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def units(self) -> list[str]:
        return [e.unit for e in self.entries]

    def rank_of(self, unit: str) -> int | None:
        """1-based rank of ``unit``, or ``None`` if absent."""
        for i, entry in enumerate(self.entries, 1):
            if entry.unit == unit:
                return i
        return None

    def write_jsonl(self, out: IO[str]) -> None:
        for rank, entry in enumerate(self.entries, 1):
            out.write(json.dumps({"rank": rank, "unit": entry.unit, "score": entry.score,
                                  "file": entry.file_path, "line": entry.line}) + "\n")


@dataclass(frozen=True)
class CoverageMatrix:
    """Per-line ``(failed, passed)`` counts for one file."""

    file_path: str
    counts: Mapping[int, tuple[int, int]]
    totalfailed: int

    def __getitem__(self, line: int) -> tuple[int, int]:
        return self.counts.get(line, (0, 0))


def _sort_key(entry: RankedUnit) -> tuple:
    return (-entry.score, entry.file_path, entry.line)


def rank_statements(matrices: CoverageMatrix | Sequence[CoverageMatrix],
                    p: DStarParams = DStarParams()) -> SuspectRanking:
    if isinstance(matrices, CoverageMatrix):
        matrices = [matrices]
    scored = []
    for matrix in matrices:
        for line, (failed, passed) in matrix.counts.items():
            score = dstar_score(failed, passed, matrix.totalfailed, p)
            scored.append(RankedUnit(f"{matrix.file_path}:{line}", score, matrix.file_path, line))
    scored.sort(key=_sort_key)
    return SuspectRanking(scored)


def scored_statements(matrix: CoverageMatrix, p: DStarParams = DStarParams()) -> list[ScoredStatement]:
    return [
        ScoredStatement(matrix.file_path, line, f, ps, dstar_score(f, ps, matrix.totalfailed, p))
        for line, (f, ps) in sorted(matrix.counts.items())
    ]


def rank_functions_by_spectrum(matrices: Sequence[CoverageMatrix],
                               index_of: Callable[[str], SourceIndex | None],
                               p: DStarParams = DStarParams()) -> SuspectRanking:
    """Lift statement scores to functions by taking each function's best line."""
    best: dict[tuple[str, str], RankedUnit] = {}
    for stmt in rank_statements(matrices, p):
        index = index_of(stmt.file_path)
        func = index.enclosing_function(stmt.line) if index else None
        if func is None:
            continue
        key = (stmt.file_path, func.qualified_name)
        if key not in best:
            best[key] = RankedUnit(_unit(stmt.file_path, func), stmt.score, stmt.file_path,
                                   func.span[0])
    entries = sorted(best.values(), key=_sort_key)
    return SuspectRanking(entries)


# -- trace heuristic ------------------------------------------------------------

def _unit(path: str, func: FunctionInfo) -> str:
    return f"{path}::{func.qualified_name}"


def split_unit(unit: str) -> tuple[str, str]:
    path, _, name = unit.partition("::")
    return path, name


def _matches(path: str, globs: Iterable[str]) -> bool:
    pure = PurePosixPath(path)
    return any(fnmatch.fnmatch(path, g) or pure.match(g) for g in globs)


def _project_relative(path: str, root: Path) -> str | None:
    candidate = Path(path)
    if not candidate.is_absolute():
        candidate = root / candidate
    try:
        rel = candidate.resolve().relative_to(root.resolve())
    except ValueError:
        return None
    return rel.as_posix()


_IDENT_RE = re.compile(r"[A-Za-z_]\w*")
_MISSING_ATTR_RE = re.compile(r"AttributeError: '(\w+)' object has no attribute")


def _called_names(text: str) -> list[str]:
    names = []
    for m in re.finditer(r"([A-Za-z_]\w*)\s*\(", text):
        if m.group(1) not in names:
            names.append(m.group(1))
    return names


def rank_functions_by_trace(
    trace: ParsedTrace,
    project_root: str | Path,
    index_of: Callable[[str], SourceIndex | None],
    exclude_globs: Sequence[str] = DEFAULT_EXCLUDES,
    test_globs: Sequence[str] | None = None,
    project_functions: Callable[[], Iterable[tuple[str, FunctionInfo]]] | None = None,
) -> SuspectRanking:
    """Rank the functions of the trace's project frames, most recent call first.

    Frames outside ``project_root`` or matching ``exclude_globs`` are ignored;
    repeated functions keep their most recent position. When no frame belongs
    to the project, every resolvable frame is ranked instead and the result is
    flagged ``fallback``; if none resolves, :class:`NoProjectFrames` is raised.

    With ``test_globs`` set, a frame in a test file is preceded by the project
    functions called on its failing line (and named in pytest's ``where``
    explanations), since assertion failures never enter the faulty function.
    """
    root = Path(project_root)
    ranked: list[RankedUnit] = []
    seen: set[str] = set()

    def push(path: str, func: FunctionInfo) -> None:
        unit = _unit(path, func)
        if unit in seen:
            return
        seen.add(unit)
        ranked.append(RankedUnit(unit, 0.0, path, func.span[0]))

    def callees(frame) -> list[tuple[str, FunctionInfo]]:
        if project_functions is None:
            return []
        text = " ".join(frame.error_lines[::-1]) + " " + (frame.failing_line or "")
        wanted = _called_names(text)
        by_name: dict[str, list[tuple[str, FunctionInfo]]] = {}
        for path, func in project_functions():
            if _matches(path, test_globs or ()):
                continue
            by_name.setdefault(func.name, []).append((path, func))
        out = []
        for name in wanted:
            out.extend(by_name.get(name, []))
        return out

    def constructors() -> list[tuple[str, FunctionInfo]]:
        # a missing attribute usually means the constructor never set it
        if project_functions is None or not trace.frames:
            return []
        m = _MISSING_ATTR_RE.search(trace.frames[-1].error_message)
        if m is None:
            return []
        wanted = f"{m.group(1)}.__init__"
        return [(path, func) for path, func in project_functions()
                if func.qualified_name.endswith(wanted)
                and not _matches(path, test_globs or ())]

    fallback_frames = []
    for frame in reversed(trace.frames):
        rel = _project_relative(frame.footer.file_path, root)
        if rel is None or _matches(rel, exclude_globs):
            fallback_frames.append(frame)
            continue
        index = index_of(rel)
        func = index.enclosing_function(frame.footer.line_number) if index else None
        if func is None:
            continue
        if test_globs and _matches(rel, test_globs):
            for path, callee in callees(frame):
                push(path, callee)
        first = not ranked
        push(rel, func)
        if first and test_globs:
            for path, ctor in constructors():
                push(path, ctor)

    fallback = False
    if not ranked:
        for frame in fallback_frames:
            index = index_of(frame.footer.file_path)
            func = index.enclosing_function(frame.footer.line_number) if index else None
            if func is not None:
                push(frame.footer.file_path, func)
        if not ranked:
            raise NoProjectFrames("no trace frame maps to a function in the project")
        fallback = True
    n = len(ranked)
    entries = [RankedUnit(e.unit, float(n - i), e.file_path, e.line) for i, e in enumerate(ranked)]
    return SuspectRanking(entries, fallback=fallback)


def merge_rankings(primary: SuspectRanking, *others: SuspectRanking) -> SuspectRanking:
    """Append units from ``others`` that ``primary`` lacks, keeping their order."""
    seen = set(primary.units())
    entries = list(primary.entries)
    for other in others:
        for entry in other.entries:
            if entry.unit not in seen:
                seen.add(entry.unit)
                entries.append(entry)
    return SuspectRanking(entries, fallback=primary.fallback)


def line_scores(trace: ParsedTrace | None, matrices: Sequence[CoverageMatrix],
                project_root: str | Path, p: DStarParams = DStarParams()) -> dict[str, dict[int, float]]:
    """Per-file line suspiciousness for ordering edits inside a function.

    Lines named by trace frames outrank every spectrum score (innermost frame
    highest); remaining lines get their DStar score, capped below the trace band.
    """
    out: dict[str, dict[int, float]] = {}
    for m in matrices:
        scores = out.setdefault(m.file_path, {})
        for line, (failed, passed) in m.counts.items():
            scores[line] = min(dstar_score(failed, passed, m.totalfailed, p), _TRACE_BAND - 1)
    if trace is not None:
        root = Path(project_root)
        frames = list(reversed(trace.frames))
        for depth, frame in enumerate(frames):
            rel = _project_relative(frame.footer.file_path, root)
            if rel is None:
                continue
            scores = out.setdefault(rel, {})
            scores[frame.footer.line_number] = max(scores.get(frame.footer.line_number, 0.0),
                                                   _TRACE_BAND + len(frames) - depth)
    return out


_TRACE_BAND = 1e9
