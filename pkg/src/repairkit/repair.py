"""The generate-and-validate repair loop.

A generator yields whole-function rewrites for a focal function. The loop
drops duplicates (by normalized text), splices each survivor into a sandboxed
copy of the project, runs the tests that cover the function and classifies
the result. Budgets are counted in raw generator samples and wall-clock
seconds.
"""

from __future__ import annotations

import json
import logging
import queue
import subprocess
import textwrap
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator, Mapping, Sequence

from repairkit import mutate
from repairkit.corpus import MethodRecord, normalize
from repairkit.errors import (
    BudgetTooSmall, CommandNotFound, GeneratorUnavailable, NoSuspects, ProtocolError,
    SandboxFailure, SuiteTimeout,
)
from repairkit.harness import Sandbox, run_suite_full
from repairkit.localize import SuspectRanking
from repairkit.skeleton import Skeleton, SkeletonConfig, build_skeleton
from repairkit.structure import FunctionInfo, SourceIndex, SyntaxChecker, syntax_check

logger = logging.getLogger(__name__)

SYNTAX_INVALID = "syntactically_invalid"
STILL_FAILING = "still_failing"
PLAUSIBLE = "plausible"
VERBATIM = "verbatim"

FIXED, EXHAUSTED, TIMEOUT = "fixed", "exhausted", "timeout"


@dataclass(frozen=True)
class Budgets:
    max_candidates: int = 100
    wall_clock_seconds: float = 60.0
    validation_timeout: float = 10.0

    def __post_init__(self) -> None:
        if self.max_candidates <= 0 or self.wall_clock_seconds <= 0 or self.validation_timeout <= 0:
            raise ValueError("budgets must be positive")


@dataclass
class RepairTask:
    project: Path
    file_path: str
    focal: FunctionInfo
    file_source: str
    skeleton: Skeleton
    trace_context: str | None = None
    reference_fix: MethodRecord | None = None
    budgets: Budgets = field(default_factory=Budgets)
    covering_tests: Sequence[str] | None = None
    operator_prior: Mapping[str, float] = field(default_factory=dict)
    sandbox: Sandbox = field(default_factory=Sandbox)
    checker: SyntaxChecker | None = None
    # file line -> suspiciousness, from the trace and the coverage spectrum
    line_scores: Mapping[int, float] = field(default_factory=dict)

    @property
    def focal_source(self) -> str:
        lines = self.file_source.splitlines(keepends=True)
        start, end = self.focal.span
        return "".join(lines[start - 1:end])

    @property
    def unit(self) -> str:
        return f"{self.file_path}::{self.focal.qualified_name}"


@dataclass(frozen=True)
class PatchCandidate:
    text: str
    origin: str
    sample_index: int
    score: float | None = None

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("candidate text is empty")


@dataclass(frozen=True)
class ValidationOutcome:
    candidate: PatchCandidate
    cls: str
    tests_run: int
    duration: float
    unit: str = ""

    @property
    def plausible(self) -> bool:
        return self.cls in (PLAUSIBLE, VERBATIM)


@dataclass(frozen=True)
class RepairMetrics:
    top1_success: bool
    topk_success: Mapping[int, bool]
    n_plausible: int
    n_verbatim: int
    n_duplicates_removed: int
    first_fix_index: int | None
    plausible_at_k: Mapping[int, bool] = field(default_factory=dict)
    verbatim_at_k: Mapping[int, bool] = field(default_factory=dict)
    n_raw: int = 0

    def to_json(self) -> dict:
        return {
            "top1_success": self.top1_success,
            "topk_success": {str(k): v for k, v in self.topk_success.items()},
            "plausible_at_k": {str(k): v for k, v in self.plausible_at_k.items()},
            "verbatim_at_k": {str(k): v for k, v in self.verbatim_at_k.items()},
            "n_plausible": self.n_plausible,
            "n_verbatim": self.n_verbatim,
            "n_duplicates_removed": self.n_duplicates_removed,
            "first_fix_index": self.first_fix_index,
            "n_raw": self.n_raw,
        }


@dataclass
class RepairResult:
    outcomes: list[ValidationOutcome]
    metrics: RepairMetrics
    status: str
    duration: float

    @property
    def winner(self) -> ValidationOutcome | None:
        i = self.metrics.first_fix_index
        return self.outcomes[i] if i is not None else None


Generator = Callable[[RepairTask], Iterable[PatchCandidate]]


def adaptive_timeout(durations: Iterable[float], cap: float, floor: float = 3.0,
                     factor: float = 5.0) -> float:
    """Per-validation timeout scaled from how long the covering tests took.

    Candidates that loop forever are common (swapped loop conditions), and
    letting each one burn the full cap would eat the whole wall clock.
    """
    return min(cap, floor + factor * sum(durations))


# -- candidate handling -------------------------------------------------------------

def _indent_of(text: str) -> str:
    for line in text.splitlines():
        if line.strip():
            return line[: len(line) - len(line.lstrip(" \t"))]
    return ""


def reindent(text: str, indent: str) -> str:
    """Shift ``text`` so its first non-blank line starts with ``indent``."""
    if _indent_of(text) == indent:
        out = text
    else:
        body = textwrap.dedent(text)
        out = "".join(indent + line if line.strip() else line
                      for line in body.splitlines(keepends=True))
    return out if out.endswith("\n") else out + "\n"


def _norm(text: str) -> str:
    try:
        return normalize(textwrap.dedent(text))
    except ValueError:
        return text.strip()


def dedupe(candidates: Iterable[PatchCandidate], stats: dict | None = None) -> Iterator[PatchCandidate]:
    """Drop candidates whose normalized text was seen before; counts go in ``stats``."""
    seen: set[str] = set()
    if stats is not None:
        stats.setdefault("removed", 0)
    for cand in candidates:
        key = _norm(cand.text)
        if key in seen:
            if stats is not None:
                stats["removed"] += 1
            continue
        seen.add(key)
        yield cand


def splice(task: RepairTask, text: str) -> str:
    lines = task.file_source.splitlines(keepends=True)
    start, end = task.focal.span
    return "".join(lines[: start - 1]) + reindent(text, task.focal.indent) + "".join(lines[end:])


def is_verbatim(task: RepairTask, text: str) -> bool:
    return task.reference_fix is not None and _norm(text) == _norm(task.reference_fix.source)


def validate_candidate(task: RepairTask, c: PatchCandidate,
                       timeout: float | None = None) -> ValidationOutcome:
    start = time.monotonic()
    patched = splice(task, c.text)
    failure = syntax_check(patched, task.checker)
    if failure is not None:
        return ValidationOutcome(c, SYNTAX_INVALID, 0, time.monotonic() - start, task.unit)
    limit = min(task.budgets.validation_timeout, timeout) if timeout else task.budgets.validation_timeout
    cfg = Sandbox(
        timeout_seconds=max(limit, 0.5),
        output_cap_bytes=task.sandbox.output_cap_bytes,
        test_command=task.sandbox.test_command,
        per_test_timeout=task.sandbox.per_test_timeout,
        env=task.sandbox.env,
    )
    try:
        result = run_suite_full(task.project, cfg, coverage=False,
                                selected=list(task.covering_tests or []) or None,
                                overrides={task.file_path: patched})
        runs = result.runs
    except SuiteTimeout:
        return ValidationOutcome(c, STILL_FAILING, 0, time.monotonic() - start, task.unit)
    except CommandNotFound as exc:
        raise SandboxFailure(str(exc)) from exc
    ok = bool(runs) and all(r.passed for r in runs)
    if not ok:
        cls = STILL_FAILING
    elif is_verbatim(task, c.text):
        cls = VERBATIM
    else:
        cls = PLAUSIBLE
    return ValidationOutcome(c, cls, len(runs), time.monotonic() - start, task.unit)


def compute_metrics(outcomes: Sequence[ValidationOutcome], k_values: Sequence[int],
                    has_reference: bool, duplicates: int = 0, n_raw: int = 0) -> RepairMetrics:
    def first(pred) -> int | None:
        return next((i for i, o in enumerate(outcomes) if pred(o)), None)

    first_plausible = first(lambda o: o.plausible)
    first_verbatim = first(lambda o: o.cls == VERBATIM)
    fix = first_verbatim if has_reference else first_plausible
    plausible_at = {k: first_plausible is not None and first_plausible < k for k in k_values}
    verbatim_at = {k: first_verbatim is not None and first_verbatim < k for k in k_values}
    topk = verbatim_at if has_reference else plausible_at
    return RepairMetrics(
        top1_success=fix is not None and fix < 1,
        topk_success=topk,
        n_plausible=sum(o.plausible for o in outcomes),
        n_verbatim=sum(o.cls == VERBATIM for o in outcomes),
        n_duplicates_removed=duplicates,
        first_fix_index=fix,
        plausible_at_k=plausible_at,
        verbatim_at_k=verbatim_at,
        n_raw=n_raw,
    )


def repair_loop(task: RepairTask, gen: Generator, k_values: Sequence[int] = (1, 10),
                stop_at: str = VERBATIM, deadline: float | None = None) -> RepairResult:
    """Generate, dedupe and validate until a fix or an exhausted budget.

    Stops at the first verbatim fix, or the first plausible one when
    ``stop_at`` is ``"plausible"`` or there is no reference fix.
    """
    start = time.monotonic()
    own_deadline = start + task.budgets.wall_clock_seconds
    deadline = min(deadline, own_deadline) if deadline is not None else own_deadline
    outcomes: list[ValidationOutcome] = []
    seen: set[str] = set()
    duplicates = raw = 0
    status = EXHAUSTED
    want_verbatim = stop_at == VERBATIM and task.reference_fix is not None
    stream = iter(gen(task))
    while True:
        if time.monotonic() >= deadline:
            status = TIMEOUT
            break
        if raw >= task.budgets.max_candidates:
            break
        try:
            cand = next(stream)
        except StopIteration:
            break
        raw += 1
        key = _norm(cand.text)
        if key in seen:
            duplicates += 1
            continue
        seen.add(key)
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            status = TIMEOUT
            break
        outcome = validate_candidate(task, cand, timeout=remaining)
        outcomes.append(outcome)
        if outcome.cls == VERBATIM or (outcome.plausible and not want_verbatim):
            status = FIXED
            break
    close = getattr(stream, "close", None)
    if close:
        close()
    metrics = compute_metrics(outcomes, k_values, task.reference_fix is not None, duplicates, raw)
    return RepairResult(outcomes, metrics, status, time.monotonic() - start)


# -- generators -----------------------------------------------------------------------

def oracle_generator(task: RepairTask, catalog: Sequence[str] = mutate.NON_LOSSY,
                     weights: Mapping[str, float] | None = None) -> Iterator[PatchCandidate]:
    """Every inverse edit of every catalog operator on the buggy focal function.

    Operators are tried by descending weight (``task.operator_prior`` then
    ``weights``, default 1), ties in catalog order; within an operator, in
    site order, most suspicious lines (``task.line_scores``) first. The stream
    is capped at ``task.budgets.max_candidates``.
    """
    prior = dict(weights or {})
    prior.update(task.operator_prior)
    order = sorted(catalog, key=lambda op: -prior.get(op, 1.0))
    source = task.focal_source
    offset = task.focal.span[0] - 1
    local = {line - offset: score for line, score in task.line_scores.items()}
    emitted = 0
    for op in order:
        for patch in mutate.inverse_patches(source, op, task.skeleton, local):
            if emitted >= task.budgets.max_candidates:
                return
            yield PatchCandidate(patch.source, f"oracle:{op}", emitted)
            emitted += 1


def echo_generator(task: RepairTask) -> Iterator[PatchCandidate]:
    """Stub that proposes the buggy function unchanged."""
    yield PatchCandidate(task.focal_source, "echo", 0)


def body_delete_generator(task: RepairTask) -> Iterator[PatchCandidate]:
    """Stub that replaces the body with ``pass`` (the classic overfitting patch)."""
    lines = task.focal_source.splitlines(keepends=True)
    header_end = task.focal.signature_span[1] - task.focal.span[0] + 1
    body_indent = _indent_of("".join(lines[header_end:])) or task.focal.indent + "    "
    yield PatchCandidate("".join(lines[:header_end]) + body_indent + "pass\n", "delete-body", 0)


class ExternalGenerator:
    """Talks to a generator process over newline-delimited JSON on stdin/stdout."""

    def __init__(self, command: Sequence[str], num_candidates: int = 100, timeout: float = 60.0,
                 cwd: str | None = None):
        self.command = list(command)
        self.num_candidates = num_candidates
        self.timeout = timeout
        self.cwd = cwd
        self._proc: subprocess.Popen | None = None
        self._lines: queue.Queue = queue.Queue()
        self._counter = 0

    def _start(self) -> subprocess.Popen:
        if self._proc is not None and self._proc.poll() is None:
            return self._proc
        try:
            self._proc = subprocess.Popen(
                self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL, text=True, encoding="utf-8", bufsize=1, cwd=self.cwd,
            )
        except OSError as exc:
            raise GeneratorUnavailable(f"cannot start generator {self.command!r}: {exc}") from exc
        lines = self._lines = queue.Queue()
        proc = self._proc

        def pump():
            for line in proc.stdout:
                lines.put(line)
            lines.put(None)

        threading.Thread(target=pump, daemon=True).start()
        return self._proc

    def request(self, skeleton: str, trace: str | None, num_candidates: int) -> list[dict]:
        proc = self._start()
        self._counter += 1
        req_id = f"req-{self._counter}"
        payload = {"id": req_id, "skeleton": skeleton, "trace": trace,
                   "num_candidates": num_candidates}
        try:
            proc.stdin.write(json.dumps(payload) + "\n")
            proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise GeneratorUnavailable(f"generator closed its input: {exc}") from exc
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            raise GeneratorUnavailable(f"generator did not answer within {self.timeout} s") from None
        if line is None:
            raise GeneratorUnavailable("generator exited without answering")
        try:
            reply = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"malformed generator reply: {line[:200]!r}") from exc
        if not isinstance(reply, dict) or reply.get("id") != req_id \
                or not isinstance(reply.get("candidates"), list):
            raise ProtocolError(f"unexpected generator reply: {line[:200]!r}")
        for cand in reply["candidates"]:
            if not isinstance(cand, dict) or not isinstance(cand.get("text"), str):
                raise ProtocolError(f"malformed candidate in reply: {cand!r}")
        return reply["candidates"]

    def __call__(self, task: RepairTask) -> Iterator[PatchCandidate]:
        n = min(self.num_candidates, task.budgets.max_candidates)
        for i, cand in enumerate(self.request(task.skeleton.text, task.trace_context, n)):
            if cand["text"].strip():
                score = cand.get("score")
                yield PatchCandidate(cand["text"], "external", i,
                                     float(score) if isinstance(score, (int, float)) else None)

    def close(self) -> None:
        if self._proc is not None:
            try:
                self._proc.stdin.close()
                self._proc.wait(timeout=5)
            except (OSError, subprocess.TimeoutExpired):
                self._proc.kill()
            self._proc = None


# -- tasks and joint localization -------------------------------------------------------------

def build_task_skeleton(index: SourceIndex, focal: FunctionInfo,
                        cfg: SkeletonConfig | None = None) -> Skeleton:
    """Skeleton at ``cfg``'s budget, growing the budget if the focal function alone exceeds it."""
    cfg = cfg or SkeletonConfig()
    while True:
        try:
            return build_skeleton(index, focal, cfg=cfg)
        except BudgetTooSmall:
            cfg = SkeletonConfig(cfg.budget_tokens * 2, cfg.open_marker, cfg.close_marker,
                                 cfg.tokenizer)


@dataclass
class JointReport:
    attempts: list[tuple[str, RepairResult]]
    status: str
    duration: float
    k_values: tuple[int, ...] = (1, 10)

    @property
    def winner(self) -> tuple[str, ValidationOutcome] | None:
        for unit, result in self.attempts:
            if result.status == FIXED and result.winner is not None:
                return unit, result.winner
        return None

    @property
    def outcomes(self) -> list[ValidationOutcome]:
        return [o for _, r in self.attempts for o in r.outcomes]

    def metrics(self, has_reference: bool) -> RepairMetrics:
        return compute_metrics(
            self.outcomes, self.k_values, has_reference,
            sum(r.metrics.n_duplicates_removed for _, r in self.attempts),
            sum(r.metrics.n_raw for _, r in self.attempts),
        )


def joint_localize_and_repair(ranking: SuspectRanking,
                              task_for: Callable[[str], RepairTask | None],
                              gen: Generator, budgets: Budgets = Budgets(),
                              k_values: Sequence[int] = (1, 10), stop_at: str = VERBATIM,
                              max_suspects: int | None = None) -> JointReport:
    """Repair suspects in rank order under one shared wall clock.

    Each suspect gets the full candidate budget; the next suspect is tried
    only if time remains. Stops at the first suspect that is fixed.
    """
    if not len(ranking):
        raise NoSuspects("the suspect ranking is empty")
    start = time.monotonic()
    deadline = start + budgets.wall_clock_seconds
    attempts: list[tuple[str, RepairResult]] = []
    status = EXHAUSTED
    for n, unit in enumerate(ranking.units()):
        if max_suspects is not None and n >= max_suspects:
            break
        if time.monotonic() >= deadline:
            status = TIMEOUT
            break
        task = task_for(unit)
        if task is None:
            continue
        result = repair_loop(task, gen, k_values, stop_at, deadline=deadline)
        attempts.append((unit, result))
        if result.status == FIXED:
            status = FIXED
            break
        if result.status == TIMEOUT:
            status = TIMEOUT
            break
    return JointReport(attempts, status, time.monotonic() - start, tuple(k_values))
