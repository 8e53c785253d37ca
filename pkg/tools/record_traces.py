"""Record real failure traces from the fixture projects.

For each injected bug this writes three files into tests/fixtures/traces:
``<name>.txt`` (pytest long form, as the harness captures it), ``<name>.native.txt``
(the same failure with ``--tb=native``, an independent view of the frames) and
``<name>.json`` (the parsed form, frozen for regression).
"""

from __future__ import annotations

import json
import subprocess
import sys
import tempfile
from pathlib import Path

from repairkit import bench, mutate
from repairkit.harness import Sandbox, run_suite
from repairkit.trace import parse_trace

ROOT = Path(__file__).resolve().parents[1]
PROJECTS = ROOT / "tests" / "fixtures" / "projects"
OUT = ROOT / "tests" / "fixtures" / "traces"


def native_trace(project: Path, test_id: str) -> str:
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", "--tb=native", test_id],
        cwd=project, capture_output=True, text=True,
        env={"PYTHONPATH": str(project), "PYTEST_DISABLE_PLUGIN_AUTOLOAD": "1", "PATH": "/usr/bin:/bin"},
    )
    return proc.stdout


def main() -> None:
    n = 0
    with tempfile.TemporaryDirectory() as tmp:
        for name, count in (("algos", 5), ("shop", 4), ("textkit", 4)):
            cases = bench.build_bench_from_mutations(
                PROJECTS / name, count, list(mutate.OPERATORS), seed=11, out_dir=Path(tmp),
                sandbox=Sandbox(), id_prefix=name)
            for case in cases:
                runs = run_suite(case.project_dir, Sandbox())
                failing = next(r for r in runs if not r.passed)
                raw = failing.raw_trace
                stem = f"{case.case_id}_{case.manifest['injected_operator']}"
                (OUT / f"{stem}.txt").write_text(raw)
                (OUT / f"{stem}.native.txt").write_text(native_trace(case.project_dir, failing.test_id))
                (OUT / f"{stem}.json").write_text(
                    json.dumps(parse_trace(raw).to_json(), indent=2, sort_keys=True) + "\n")
                n += 1
    print(f"recorded {n} traces")


if __name__ == "__main__":
    main()
