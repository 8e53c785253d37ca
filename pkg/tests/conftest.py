from __future__ import annotations

import hashlib
import json
import shutil
import textwrap
import time
from pathlib import Path

import pytest

from repairkit import bench
from repairkit.harness import Sandbox

FIXTURES = Path(__file__).parent / "fixtures"
PROJECTS = FIXTURES / "projects"
TRACES = FIXTURES / "traces"

# 20 + 15 + 15 non-lossy bugs across three projects
MICRO_BENCH = (("algos", 20), ("shop", 15), ("textkit", 15))
MICRO_BENCH_SEED = 7


def tree_digest(root: Path) -> str:
    """Hash of every file's relative path and bytes under ``root``."""
    h = hashlib.sha256()
    for path in sorted(p for p in root.rglob("*") if p.is_file() and "__pycache__" not in p.parts):
        h.update(path.relative_to(root).as_posix().encode())
        h.update(b"\0")
        h.update(path.read_bytes())
    return h.hexdigest()


def make_project(root: Path, files: dict[str, str]) -> Path:
    """Write a small project from ``{relative path: source}``."""
    for rel, text in files.items():
        path = root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(textwrap.dedent(text))
    return root


@pytest.fixture
def project_copy(tmp_path):
    """Copy a fixture project into a private directory."""
    def make(name: str) -> Path:
        dest = tmp_path / name
        shutil.copytree(PROJECTS / name, dest, ignore=shutil.ignore_patterns("__pycache__"))
        return dest
    return make


@pytest.fixture(scope="session")
def micro_bench(tmp_path_factory):
    """The seeded oracle bench shared by the bench and acceptance tests."""
    out = tmp_path_factory.mktemp("micro-bench")
    before = {name: tree_digest(PROJECTS / name) for name, _ in MICRO_BENCH}
    start = time.monotonic()
    cases = []
    for name, n in MICRO_BENCH:
        cases += bench.build_bench_from_mutations(PROJECTS / name, n, seed=MICRO_BENCH_SEED,
                                                  out_dir=out, sandbox=Sandbox(), id_prefix=name)
    bench.write_index(out, cases)
    after = {name: tree_digest(PROJECTS / name) for name, _ in MICRO_BENCH}
    # every validation ran on a copy; the sources must be untouched
    (out / "build.json").write_text(json.dumps(
        {"before": before, "after": after, "seconds": time.monotonic() - start}, indent=2))
    return out


@pytest.fixture(scope="session")
def micro_bench_report(micro_bench):
    from repairkit.repair import oracle_generator
    start = time.monotonic()
    report = bench.run_bench(bench.load_bench(micro_bench), oracle_generator)
    report.wall_seconds = time.monotonic() - start
    (micro_bench / "report.json").write_text(json.dumps(report.to_json(), indent=2))
    return report


# one line per acceptance criterion, repeated at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
