from __future__ import annotations

import json

import pytest

from repairkit import bench
from repairkit.errors import BaselineFailure
from repairkit.harness import run_suite
from repairkit.mutate import replace_function
from repairkit.repair import Budgets, body_delete_generator
from repairkit.structure import find_function, index_file

from conftest import PROJECTS, make_project

FAST = bench.RunSettings(budgets=Budgets(20, 30))


def test_zero_cases():
    assert bench.build_bench_from_mutations(PROJECTS / "algos", 0) == []


def test_no_passing_tests(tmp_path):
    project = make_project(tmp_path / "p", {
        "pkg/__init__.py": "",
        "pkg/lib.py": "def f():\n    return 1\n",
        "tests/test_lib.py": "from pkg.lib import f\n\n\ndef test_f():\n    assert f() == 2\n",
    })
    with pytest.raises(BaselineFailure):
        bench.build_bench_from_mutations(project, 1)


def test_algos_has_ten_covered_functions():
    index = bench.ProjectIndex(PROJECTS / "algos")
    assert len(index.functions()) >= 10


@pytest.fixture(scope="module")
def five_cases(tmp_path_factory):
    out = tmp_path_factory.mktemp("five")
    cases = bench.build_bench_from_mutations(PROJECTS / "algos", 5, seed=3, out_dir=out)
    bench.write_index(out, cases)
    return out, cases


def test_five_cases_each_fail(five_cases):
    out, cases = five_cases
    assert len(cases) == 5
    assert [c.case_id for c in bench.load_bench(out)] == sorted(c.case_id for c in cases)
    for case in bench.load_bench(out):
        runs = run_suite(case.project_dir)
        assert any(not r.passed for r in runs), case.case_id
        assert (case.project_dir.parent / bench.TRACE_FILE).read_text().strip()


def test_reference_fix_makes_suite_pass(five_cases):
    out, cases = five_cases
    for case in bench.load_bench(out):
        rel = case.focal_file
        buggy = (case.project_dir / rel).read_text()
        func = find_function(index_file(buggy, rel), case.focal_function)
        fixed = replace_function(buggy, func, case.reference().source)
        assert fixed == (PROJECTS / "algos" / rel).read_text()
        runs = run_suite(case.project_dir, overrides={rel: fixed})
        assert all(r.passed for r in runs), case.case_id


def test_manifests_reproducible(five_cases, tmp_path):
    out, cases = five_cases
    again = bench.build_bench_from_mutations(PROJECTS / "algos", 5, seed=3, out_dir=tmp_path)
    assert [c.case_id for c in again] == [c.case_id for c in cases]
    for case in cases:
        a = (out / case.case_id / bench.MANIFEST_FILE).read_bytes()
        b = (tmp_path / case.case_id / bench.MANIFEST_FILE).read_bytes()
        assert a == b
    manifest = json.loads(a)
    assert set(manifest) >= {"focal_file", "focal_function", "reference_fix_file", "injected_operator"}


def test_load_bench_without_index(five_cases, tmp_path):
    out, cases = five_cases
    assert [c.case_id for c in bench.load_bench(tmp_path / "missing")] == []
    (out / bench.INDEX_FILE).rename(tmp_path / "saved-index.json")
    try:
        assert [c.case_id for c in bench.load_bench(out)] == sorted(c.case_id for c in cases)
    finally:
        (tmp_path / "saved-index.json").rename(out / bench.INDEX_FILE)


def test_empty_report():
    report = bench.run_bench([], body_delete_generator)
    agg = report.aggregates()
    assert agg["n_cases"] == agg["n_fixed"] == agg["n_verbatim"] == agg["n_plausible_only"] == 0
    assert agg["true_positive_proxy_rate"] is None
    assert agg["topk"] == {"1": {"plausible": 0.0, "verbatim": 0.0},
                           "10": {"plausible": 0.0, "verbatim": 0.0}}


@pytest.fixture(scope="module")
def weak_report(tmp_path_factory):
    out = tmp_path_factory.mktemp("weak")
    cases = bench.build_bench_from_mutations(PROJECTS / "weak", 2, seed=0, out_dir=out,
                                             id_prefix="weak")
    return bench.run_bench(cases, body_delete_generator, FAST)


def test_body_delete_on_weak_suite_is_flagged(weak_report):
    assert weak_report.n_plausible_only > 0
    assert weak_report.n_verbatim == 0
    assert weak_report.true_positive_proxy_rate == 0.0
    assert "false-positive proxy" in weak_report.table()


def recompute(rows, k_values):
    """Aggregates rebuilt straight from the row dicts."""
    n = len(rows)
    verbatim = sum(1 for r in rows if r["verbatim"])
    plausible_only = sum(1 for r in rows if r["plausible"] and not r["verbatim"])
    ranked = [r for r in rows if r["error"] is None]
    return {
        "n_cases": n,
        "n_fixed": sum(1 for r in rows if r["plausible"]),
        "n_plausible_only": plausible_only,
        "true_positive_proxy_rate": verbatim / (verbatim + plausible_only)
        if verbatim + plausible_only else None,
        "n_verbatim": verbatim,
        "localization_top1": sum(1 for r in ranked if r["trace_rank"] == 1) / len(ranked)
        if ranked else None,
        "topk": {str(k): {"plausible": sum(1 for r in rows if r["plausible_at_k"][str(k)]) / n,
                          "verbatim": sum(1 for r in rows if r["verbatim_at_k"][str(k)]) / n}
                 for k in k_values},
    }


def test_aggregates_recompute_from_rows(weak_report, micro_bench_report):
    for report in (weak_report, micro_bench_report):
        data = json.loads(json.dumps(report.to_json()))
        assert data["aggregates"] == recompute(data["cases"], data["k_values"])
        assert bench.BenchReport.from_json(data).aggregates() == data["aggregates"]


def test_bench_report_files(weak_report, tmp_path):
    json_path, table_path = bench.write_report(weak_report, tmp_path / "report.json")
    assert json.loads(json_path.read_text())["aggregates"]["n_cases"] == 2
    text = table_path.read_text()
    assert "Top-1 Success Rate (verbatim)" in text and "weak-000" in text


def test_errors_become_rows(tmp_path):
    project = make_project(tmp_path / "case-x" / "project", {
        "pkg/__init__.py": "", "pkg/lib.py": "def f():\n    return 1\n",
        "tests/test_lib.py": "from pkg.lib import f\n\n\ndef test_f():\n    assert f() == 1\n",
    })
    case = bench.BenchCase("case-x", project, {"focal_file": "pkg/lib.py", "focal_function": "f"})
    report = bench.run_bench([case], body_delete_generator, FAST)
    (row,) = report.rows
    assert row.status == "error" and row.error.startswith("BaselineFailure")
