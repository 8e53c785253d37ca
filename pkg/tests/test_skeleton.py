from __future__ import annotations

import math
import sys

import pytest
from hypothesis import given, settings, strategies as st

from repairkit.errors import BudgetTooSmall, ToolUnavailable
from repairkit.skeleton import (
    CLOSE_MARKER, OPEN_MARKER, BudgetTokenizer, SkeletonConfig, build_skeleton, count_tokens,
)
from repairkit.structure import find_function, index_file

from conftest import FIXTURES, PROJECTS

TOK = BudgetTokenizer()
DPOS = (FIXTURES / "dpos_skeleton.py").read_text()
FOCAL = "DbCursor.execute_and_fetchone"


def dpos(budget, override=None):
    index = index_file(DPOS, "dpos.py")
    return build_skeleton(index, find_function(index, FOCAL), override, SkeletonConfig(budget))


# -- count_tokens

def test_count_empty():
    assert count_tokens(TOK, "") == 0


def test_count_signature():
    # def, f, (, x, ), :
    assert count_tokens(TOK, "def f(x):") == 6


def test_count_whitespace_token():
    assert count_tokens(TOK, " " * 8 + "pass") == 2


@given(st.text(max_size=60), st.text(max_size=60))
def test_concatenation_bound(a, b):
    assert count_tokens(TOK, a + b) <= count_tokens(TOK, a) + count_tokens(TOK, b) + 1


def test_external_tokenizer(tmp_path):
    script = tmp_path / "count.py"
    script.write_text("import sys\nprint(len(sys.stdin.read().split()))\n")
    ext = BudgetTokenizer("external-command", command=(sys.executable, str(script)))
    assert count_tokens(ext, "a b  c\nd") == 4
    with pytest.raises(ToolUnavailable):
        count_tokens(BudgetTokenizer("external-command", command=("/nonexistent/tok",)), "x")


# -- build_skeleton on the dpos file

def test_dpos_budget_400():
    sk = dpos(400)
    assert sk.token_count <= 400
    assert [e.kind for e in sk.manifest if e.kind == "import"] == ["import"] * 5
    index = index_file(DPOS)
    for m in index.class_named("DbCursor").methods:
        assert sk.inclusion(m.qualified_name) in ("signature-only", "full")
    assert sk.inclusion(FOCAL) == "full"
    lines = sk.text.splitlines()
    i = lines.index("    " + OPEN_MARKER)
    assert lines[i + 1].strip().startswith("def execute_and_fetchone")
    assert lines[i + 4] == "    " + CLOSE_MARKER
    # bodies of other methods do not fit
    assert "return self._cur.description" not in sk.text


def test_infinite_budget_reconstructs_file():
    sk = dpos(math.inf)
    lines = sk.text.splitlines(keepends=True)
    i = lines.index("    " + OPEN_MARKER + "\n")
    j = lines.index("    " + CLOSE_MARKER + "\n")
    assert lines[j + 1] == "\n"
    rebuilt = lines[:i] + lines[i + 1:j] + lines[j + 2:]
    assert "".join(rebuilt) == DPOS


def test_exact_budget_holds_only_focal():
    index = index_file(DPOS)
    func = find_function(index, FOCAL)
    only = f"    {OPEN_MARKER}\n" + index.source_of(func) + f"    {CLOSE_MARKER}\n\n"
    budget = count_tokens(TOK, only)
    sk = dpos(budget)
    assert [e.kind for e in sk.manifest] == ["focal"]
    assert sk.text == only
    with pytest.raises(BudgetTooSmall):
        dpos(budget - 1)


def test_override_replaces_focal_body():
    buggy = ("    def execute_and_fetchone(self, qry, *args, cur_type=None):\n"
             "        return None\n")
    sk = dpos(400, buggy)
    assert sk.focal_source() == buggy
    assert "fetchtwo" not in sk.text


def test_globals_tier_and_priority():
    src = ("import os\n\nLIMIT = 10\n\n\nclass A:\n    \"\"\"A doc.\"\"\"\n    size = 3\n\n"
           "    def focal(self):\n        return self.size\n\n"
           "    def other(self):\n        \"\"\"Other doc.\"\"\"\n        return os.sep * LIMIT\n")
    index = index_file(src)
    func = find_function(index, "A.focal")
    kinds_by_budget = []
    for budget in range(20, 200, 5):
        try:
            sk = build_skeleton(index, func, cfg=SkeletonConfig(budget))
        except BudgetTooSmall:
            continue
        kinds_by_budget.append({e.kind for e in sk.manifest})
    order = ["focal", "class", "import", "class_docstring", "global", "signature", "docstring", "body"]
    first_seen = {}
    for i, kinds in enumerate(kinds_by_budget):
        for k in kinds:
            first_seen.setdefault(k, i)
    assert set(order) <= set(first_seen)
    assert [first_seen[k] for k in order] == sorted(first_seen[k] for k in order)


def _fixture_targets():
    out = []
    for path in sorted(PROJECTS.rglob("*.py")) + [FIXTURES / "dpos_skeleton.py"]:
        index = index_file(path.read_text(), path.name)
        out.extend((path, f.qualified_name) for f in index.all_functions())
    return out


TARGETS = _fixture_targets()


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(TARGETS), st.integers(min_value=10, max_value=1500),
       st.integers(min_value=0, max_value=600))
def test_budget_invariants(target, b1, extra):
    path, name = target
    index = index_file(path.read_text(), path.name)
    func = find_function(index, name)
    try:
        small = build_skeleton(index, func, cfg=SkeletonConfig(b1))
    except BudgetTooSmall:
        return
    large = build_skeleton(index, func, cfg=SkeletonConfig(b1 + extra))
    for sk, budget in ((small, b1), (large, b1 + extra)):
        assert sk.token_count == count_tokens(TOK, sk.text) <= budget
        assert sk.text.count(OPEN_MARKER) == 1 and sk.text.count(CLOSE_MARKER) == 1
        assert sk.focal_source() == index.source_of(func)
        firsts = [e.span[0] for e in sk.manifest]
        assert firsts == sorted(firsts)
    assert set(small.manifest) <= set(large.manifest)
    again = build_skeleton(index, func, cfg=SkeletonConfig(b1))
    assert again.text == small.text
