from __future__ import annotations

import time
from pathlib import Path

import pytest

from repairkit import mutate
from repairkit.corpus import MethodRecord
from repairkit.errors import BaselineFailure, CommandNotFound, NoCoveringTests
from repairkit.harness import (
    FAIL, PASS, TIMEOUT, Baseline, Sandbox, TestRun as Run, baseline, coverage_matrix, covered_files,
    run_suite, validate_bug,
)
from repairkit.structure import find_function, index_file

from conftest import make_project, tree_digest


LIB = """\
def clamp(x, lo, hi):
    if x < lo:
        return lo
    if x > hi:
        return hi
    return x


def unused(x):
    if x == 12345:
        return x < 0
    return x
"""

TESTS = """\
from pkg.lib import clamp, unused


def test_low():
    assert clamp(-5, 0, 10) == 0


def test_high():
    assert clamp(50, 0, 10) == 10


def test_mid():
    assert clamp(5, 0, 10) == 5


def test_unused_plain():
    assert unused(3) == 3
"""


@pytest.fixture
def clamp_project(tmp_path):
    return make_project(tmp_path / "proj", {
        "pkg/__init__.py": "", "pkg/lib.py": LIB, "tests/test_lib.py": TESTS})


def bug_for(project: Path, rel: str, name: str, op: str, line_in_func: int) -> mutate.InjectedBug:
    source = (project / rel).read_text()
    index = index_file(source, rel)
    func = find_function(index, name)
    record = MethodRecord.from_source(index.source_of(func), file_path=rel, qualified_name=name,
                                      line_span=func.span)
    site = next(s for s in mutate.enumerate_sites(record.source, op) if s.line == line_in_func)
    return mutate.apply(record.source, op, site, 0, record=record)


# -- run_suite

def test_all_pass(clamp_project):
    runs = run_suite(clamp_project)
    assert [r.test_id.split("::")[1] for r in runs] == [
        "test_low", "test_high", "test_mid", "test_unused_plain"]
    assert all(r.outcome == PASS and r.raw_trace == "" for r in runs)
    assert all(r.executed_lines is None for r in runs)


def test_failure_carries_trace(clamp_project):
    (clamp_project / "pkg/lib.py").write_text(LIB.replace("return lo", "return hi"))
    runs = {r.test_id.split("::")[1]: r for r in run_suite(clamp_project)}
    assert runs["test_low"].outcome == FAIL
    assert "assert 10 == 0" in runs["test_low"].raw_trace
    assert "pkg/lib.py" in runs["test_low"].raw_trace or "test_lib.py" in runs["test_low"].raw_trace
    assert runs["test_mid"].outcome == PASS


def test_outcomes_deterministic(clamp_project):
    a = [(r.test_id, r.outcome) for r in run_suite(clamp_project)]
    b = [(r.test_id, r.outcome) for r in run_suite(clamp_project)]
    assert a == b


def test_infinite_loop_times_out(tmp_path):
    project = make_project(tmp_path / "loop", {
        "tests/test_loop.py": "def test_ok():\n    pass\n\n\ndef test_spin():\n    while True:\n        pass\n",
    })
    cfg = Sandbox(timeout_seconds=2.0)
    start = time.monotonic()
    runs = {r.test_id.split("::")[1]: r for r in run_suite(project, cfg)}
    elapsed = time.monotonic() - start
    assert runs["test_spin"].outcome == TIMEOUT
    assert runs["test_ok"].outcome == PASS
    assert elapsed < 2.0 + cfg.grace_seconds


def test_missing_command(clamp_project):
    with pytest.raises(CommandNotFound):
        run_suite(clamp_project, Sandbox(test_command="/nonexistent/runner {selected_tests}"))


def test_pass_with_trace_rejected():
    with pytest.raises(ValueError):
        Run("t", PASS, 0.1, None, "trace")


def test_coverage_lines(clamp_project):
    runs = {r.test_id.split("::")[1]: r for r in run_suite(clamp_project, coverage=True)}
    assert runs["test_mid"].executed_lines["pkg/lib.py"] >= {2, 4, 6}
    assert 3 not in runs["test_mid"].executed_lines["pkg/lib.py"]
    assert "pkg/lib.py" in covered_files(list(runs.values()))


# -- baseline

def test_baseline_rejects_failing_suite(clamp_project):
    (clamp_project / "pkg/lib.py").write_text(LIB.replace("return lo", "return hi"))
    with pytest.raises(BaselineFailure):
        baseline(clamp_project)
    base = baseline(clamp_project, strict=False)
    assert len(base.failing) == 1 and len(base.passing()) == 3


# -- validate_bug

def test_cmp_swap_on_tested_branch_accepted(clamp_project):
    base = baseline(clamp_project)
    before = tree_digest(clamp_project)
    bug = bug_for(clamp_project, "pkg/lib.py", "clamp", "cmp_swap", 2)
    verdict = validate_bug(clamp_project, bug, base)
    assert verdict.accepted and verdict.reason == "accepted"
    assert verdict.failing()
    failing = {r.test_id for r in verdict.failing()}
    assert failing <= {r.test_id for r in base.passing()}
    assert tree_digest(clamp_project) == before


def test_dead_code_mutation_still_passing(clamp_project):
    base = baseline(clamp_project)
    before = tree_digest(clamp_project)
    # line 3 of unused() only runs for x == 12345, which no test passes
    bug = bug_for(clamp_project, "pkg/lib.py", "unused", "cmp_swap", 3)
    verdict = validate_bug(clamp_project, bug, base)
    assert not verdict.accepted and verdict.reason == "still-passing"
    assert tree_digest(clamp_project) == before


def test_untested_function_has_no_covering_tests(tmp_path):
    project = make_project(tmp_path / "p", {
        "pkg/__init__.py": "",
        "pkg/lib.py": LIB + "\n\ndef lonely(a, b):\n    return a < b\n",
        "tests/test_lib.py": TESTS,
    })
    base = baseline(project)
    bug = bug_for(project, "pkg/lib.py", "lonely", "cmp_swap", 2)
    with pytest.raises(NoCoveringTests):
        validate_bug(project, bug, base)


def test_quarantine_from_plain_runs(clamp_project):
    runs = run_suite(clamp_project, coverage=True)
    base = Baseline(runs, quarantined=[runs[0].test_id])
    assert runs[0] not in base.passing()


# -- coverage_matrix

def _run(outcome, lines):
    return Run("t", outcome, 0.0, {"f.py": frozenset(lines)}, "" if outcome == PASS else "x")


def test_matrix_definition():
    runs = [_run(FAIL, {1, 2}), _run(FAIL, {1}), _run(PASS, {1, 3})]
    m = coverage_matrix(runs, "f.py")
    assert m[1] == (2, 1)
    assert m[2] == (1, 0)
    assert m[3] == (0, 1)
    assert m[99] == (0, 0)
    assert m.totalfailed == 2


FIVE_LIB = """\
def sign(x):
    if x > 0:
        return 1
    if x < 0:
        return -1
    return 0
"""

FIVE_TESTS = """\
from pkg.lib import sign


def test_pos():
    assert sign(3) == 1


def test_neg():
    assert sign(-3) == -1


def test_zero():
    assert sign(0) == 0


def test_big():
    assert sign(10**9) == 1


def test_neg_wrong():
    assert sign(-1) == 1
"""


def test_five_test_matrix_matches_hand_tally(tmp_path):
    project = make_project(tmp_path / "five", {
        "pkg/__init__.py": "", "pkg/lib.py": FIVE_LIB, "tests/test_lib.py": FIVE_TESTS})
    runs = run_suite(project, coverage=True)
    assert [r.outcome for r in runs] == [PASS, PASS, PASS, PASS, FAIL]
    m = coverage_matrix(runs, "pkg/lib.py")
    # executed lines per test, tallied by reading the code (the def line counts on every call):
    #   pos, big: 1 2 3    neg: 1 2 4 5    neg_wrong (fails): 1 2 4 5    zero: 1 2 4 6
    hand = {1: (1, 4), 2: (1, 4), 3: (0, 2), 4: (1, 2), 5: (1, 1), 6: (0, 1)}
    assert {line: m[line] for line in hand} == hand
    assert m.totalfailed == 1
