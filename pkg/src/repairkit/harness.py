"""Running project test suites in throwaway copies of the project.

Each run copies the project into a fresh temporary directory, applies any
file overrides there and runs pytest with :mod:`repairkit.harness_plugin`,
which reports outcomes, failure traces and (optionally) executed lines. The
original project directory is only ever read.
"""

from __future__ import annotations

import json
import logging
import os
import shlex
import shutil
import signal
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import repairkit
from repairkit.errors import (
    BaselineFailure, CommandNotFound, NoCoveringTests, RepairKitError, SuiteTimeout,
)
from repairkit.localize import CoverageMatrix
from repairkit.mutate import InjectedBug

logger = logging.getLogger(__name__)

PASS, FAIL, ERROR, TIMEOUT = "pass", "fail", "error", "timeout"

DEFAULT_TEST_COMMAND = (
    "{python} -m pytest -q -p no:cacheprovider -p repairkit.harness_plugin "
    "--tb=long -l {selected_tests}"
)
_IGNORED = shutil.ignore_patterns(
    ".git", "__pycache__", ".pytest_cache", "*.pyc", ".venv", "venv", ".tox", ".mypy_cache",
)
_ENV_KEEP = ("PATH", "LANG", "LC_ALL", "TMPDIR", "SYSTEMROOT")


@dataclass(frozen=True)
class Sandbox:
    """Limits and command for one suite run; each run gets its own workdir."""

    timeout_seconds: float = 60.0
    output_cap_bytes: int = 1_000_000
    test_command: str = DEFAULT_TEST_COMMAND
    per_test_timeout: float | None = None
    grace_seconds: float = 5.0
    env: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class TestRun:
    test_id: str
    outcome: str
    duration: float
    executed_lines: Mapping[str, frozenset[int]] | None = None
    raw_trace: str = ""

    def __post_init__(self) -> None:
        if self.outcome == PASS and self.raw_trace:
            raise ValueError("a passing run carries no trace")

    @property
    def passed(self) -> bool:
        return self.outcome == PASS

    def covers(self, file_path: str, lines: Iterable[int]) -> bool:
        hit = (self.executed_lines or {}).get(file_path, ())
        return any(line in hit for line in lines)


@dataclass
class SuiteResult:
    runs: list[TestRun]
    stdout: str = ""
    returncode: int | None = None
    timed_out: bool = False

    def by_id(self) -> dict[str, TestRun]:
        return {r.test_id: r for r in self.runs}

    def failing(self) -> list[TestRun]:
        return [r for r in self.runs if not r.passed]


def copy_project(project: Path, dest: Path, overrides: Mapping[str, str] | None = None) -> Path:
    shutil.copytree(project, dest, ignore=_IGNORED, symlinks=True)
    for rel, text in (overrides or {}).items():
        target = dest / rel
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text, encoding="utf-8")
    return dest


def _environment(workdir: Path, cfg: Sandbox, report: Path, coverage: bool) -> dict[str, str]:
    env = {k: os.environ[k] for k in _ENV_KEEP if k in os.environ}
    package_parent = str(Path(repairkit.__file__).resolve().parent.parent)
    env.update({
        "HOME": str(workdir),
        "PYTHONHASHSEED": "0",
        "PYTHONDONTWRITEBYTECODE": "1",
        "PYTEST_DISABLE_PLUGIN_AUTOLOAD": "1",
        "PYTHONPATH": os.pathsep.join([str(workdir), package_parent]),
        "REPAIRKIT_REPORT": str(report),
    })
    if coverage:
        env["REPAIRKIT_COVERAGE_ROOT"] = str(workdir)
    if cfg.per_test_timeout:
        env["REPAIRKIT_TEST_TIMEOUT"] = str(cfg.per_test_timeout)
    env.update(cfg.env)
    return env


def _command(cfg: Sandbox, workdir: Path, selected: Sequence[str] | None) -> list[str]:
    parts = []
    for token in shlex.split(cfg.test_command):
        if token == "{selected_tests}":
            parts.extend(selected or [])
        else:
            parts.append(token.replace("{python}", sys.executable).replace("{workdir}", str(workdir)))
    return parts


def _read_report(path: Path) -> list[dict]:
    if not path.exists():
        return []
    out = []
    for line in path.read_text(encoding="utf-8", errors="replace").splitlines():
        try:
            out.append(json.loads(line))
        except json.JSONDecodeError:
            break  # torn final line from a killed run
    return out


def _collect(events: list[dict], timed_out: bool, elapsed: float) -> list[TestRun]:
    collected: list[str] = []
    results: dict[str, TestRun] = {}
    current = None
    for ev in events:
        if ev["event"] == "collected":
            collected = list(ev["ids"])
        elif ev["event"] == "start":
            current = ev["id"]
        elif ev["event"] == "result":
            lines = ev.get("lines")
            executed = None if lines is None else {k: frozenset(v) for k, v in lines.items()}
            trace = ev.get("trace", "") if ev["outcome"] != PASS else ""
            results[ev["id"]] = TestRun(ev["id"], ev["outcome"], ev["duration"], executed, trace)
            current = None
    if timed_out:
        for test_id in collected:
            if test_id not in results:
                trace = "suite timeout while running this test" if test_id == current else \
                    "suite timeout before this test started"
                results[test_id] = TestRun(test_id, TIMEOUT, elapsed if test_id == current else 0.0,
                                           None, trace)
    order = {tid: i for i, tid in enumerate(collected)}
    return sorted(results.values(), key=lambda r: (order.get(r.test_id, len(order)), r.test_id))


def run_tests(workdir: Path, cfg: Sandbox = Sandbox(), coverage: bool = False,
              selected: Sequence[str] | None = None) -> SuiteResult:
    """Run the suite in an existing ``workdir`` (which the caller owns)."""
    workdir = Path(workdir)
    with tempfile.TemporaryDirectory(prefix="rk_report_") as tmp:
        report = Path(tmp) / "report.jsonl"
        out_path = Path(tmp) / "out.txt"
        argv = _command(cfg, workdir, selected)
        start = time.monotonic()
        with open(out_path, "wb") as out:
            try:
                proc = subprocess.Popen(
                    argv, cwd=workdir, env=_environment(workdir, cfg, report, coverage),
                    stdout=out, stderr=subprocess.STDOUT, stdin=subprocess.DEVNULL,
                    start_new_session=True,
                )
            except FileNotFoundError as exc:
                raise CommandNotFound(f"test command not found: {argv[0]}") from exc
            timed_out = False
            try:
                proc.wait(timeout=cfg.timeout_seconds)
            except subprocess.TimeoutExpired:
                timed_out = True
                try:
                    os.killpg(proc.pid, signal.SIGKILL)
                except ProcessLookupError:
                    pass
                proc.wait()
        elapsed = time.monotonic() - start
        with open(out_path, "rb") as fh:
            stdout = fh.read(cfg.output_cap_bytes).decode("utf-8", errors="replace")
        events = _read_report(report)
    if not events:
        if timed_out:
            raise SuiteTimeout(f"suite exceeded {cfg.timeout_seconds} s before collecting tests")
        if "No module named pytest" in stdout or "No module named" in stdout and "harness_plugin" in stdout:
            raise CommandNotFound(stdout.strip().splitlines()[-1])
        raise CommandNotFound(f"test command produced no report (exit {proc.returncode}): "
                              f"{stdout.strip()[-500:]}")
    return SuiteResult(_collect(events, timed_out, elapsed), stdout, proc.returncode, timed_out)


def run_suite(project: str | Path, cfg: Sandbox = Sandbox(), coverage: bool = False,
              selected: Sequence[str] | None = None,
              overrides: Mapping[str, str] | None = None) -> list[TestRun]:
    """Run the project's tests in a fresh copy; one :class:`TestRun` per test."""
    return run_suite_full(project, cfg, coverage, selected, overrides).runs


def run_suite_full(project: str | Path, cfg: Sandbox = Sandbox(), coverage: bool = False,
                   selected: Sequence[str] | None = None,
                   overrides: Mapping[str, str] | None = None) -> SuiteResult:
    project = Path(project)
    if not project.is_dir():
        raise RepairKitError(f"project directory not found: {project}")
    with tempfile.TemporaryDirectory(prefix="rk_sandbox_") as tmp:
        workdir = copy_project(project, Path(tmp) / "work", overrides)
        return run_tests(workdir, cfg, coverage, selected)


# -- baselines and bug validation -------------------------------------------------

@dataclass
class Baseline:
    runs: list[TestRun]
    quarantined: list[str] = field(default_factory=list)
    failing: list[str] = field(default_factory=list)

    def passing(self) -> list[TestRun]:
        skip = set(self.quarantined) | set(self.failing)
        return [r for r in self.runs if r.passed and r.test_id not in skip]

    def covering(self, file_path: str, lines: Iterable[int]) -> list[TestRun]:
        lines = list(lines)
        return [r for r in self.passing() if r.covers(file_path, lines)]


def baseline(project: str | Path, cfg: Sandbox = Sandbox(), strict: bool = True) -> Baseline:
    """Two coverage runs; tests whose outcome differs between them are quarantined.

    With ``strict`` a test that fails both times raises :class:`BaselineFailure`.
    """
    first = run_suite(project, cfg, coverage=True)
    second = {r.test_id: r for r in run_suite(project, cfg, coverage=True)}
    quarantined, failing = [], []
    for run in first:
        other = second.get(run.test_id)
        if other is None or other.outcome != run.outcome:
            quarantined.append(run.test_id)
        elif not run.passed:
            failing.append(run.test_id)
    if failing and strict:
        raise BaselineFailure(f"{len(failing)} test(s) fail on the unmodified project: "
                              + ", ".join(failing[:5]))
    return Baseline(first, quarantined, failing)


@dataclass(frozen=True)
class Verdict:
    accepted: bool
    reason: str
    runs: tuple[TestRun, ...] = ()

    def failing(self) -> list[TestRun]:
        return [r for r in self.runs if not r.passed]


def mutated_file(file_source: str, bug: InjectedBug) -> str:
    lines = file_source.splitlines(keepends=True)
    start, end = bug.original.line_span
    body = bug.mutated_source
    if not body.endswith("\n") and end < len(lines):
        body += "\n"
    return "".join(lines[: start - 1]) + body + "".join(lines[end:])


def validate_bug(project: str | Path, bug: InjectedBug, base: Baseline | Sequence[TestRun],
                 cfg: Sandbox = Sandbox()) -> Verdict:
    """Rerun the baseline-passing tests that cover the bug's function on the mutant.

    ``bug.original`` must carry the project-relative ``file_path`` and the
    function's ``line_span`` in that file.
    """
    if not isinstance(base, Baseline):
        base = Baseline(list(base))
    path = bug.original.file_path
    start, end = bug.original.line_span
    covering = base.covering(path, range(start, end + 1))
    if not covering:
        raise NoCoveringTests(f"no passing test executes {path}:{start}-{end}")
    source = (Path(project) / path).read_text(encoding="utf-8")
    result = run_suite_full(project, cfg, coverage=False,
                            selected=[r.test_id for r in covering],
                            overrides={path: mutated_file(source, bug)})
    runs = tuple(result.runs)
    if any(not r.passed for r in runs):
        return Verdict(True, "accepted", runs)
    return Verdict(False, "still-passing", runs)


def coverage_matrix(runs: Sequence[TestRun], file_path: str) -> CoverageMatrix:
    """Per-line (failed, passed) counts for ``file_path``; any non-pass outcome counts as failed."""
    counts: dict[int, list[int]] = {}
    totalfailed = 0
    for run in runs:
        failed = not run.passed
        totalfailed += failed
        for line in (run.executed_lines or {}).get(file_path, ()):
            pair = counts.setdefault(line, [0, 0])
            pair[0 if failed else 1] += 1
    return CoverageMatrix(file_path, {k: (v[0], v[1]) for k, v in sorted(counts.items())}, totalfailed)


def covered_files(runs: Sequence[TestRun]) -> list[str]:
    files: set[str] = set()
    for run in runs:
        files.update((run.executed_lines or {}).keys())
    return sorted(files)
