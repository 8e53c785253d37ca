from __future__ import annotations

import json
import sys
import textwrap

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from repairkit import mutate
from repairkit.corpus import normalize
from repairkit.errors import DegenerateMutation, SyntaxBroken
from repairkit.structure import SyntaxChecker, index_file, syntax_check

from conftest import PROJECTS

GET_KEY = '''def get_key(self, *args, **kwargs):
    """Pass 'force' to _get_key_internal()
    in the headers
    since the call signature of _get_key_internal
    can not be changed.
    """
    if kwargs.pop('force', None):
        headers = kwargs.get('headers', {})
        headers['force'] = True
        kwargs['headers'] = headers

    return super(Bucket, self).get_key(
                                *args, **kwargs)
'''

TEAR_DOWN = '''def tearDown(self):
    for bucket in self.boto_conn.get_all_buckets():
        if bucket.name.startswith(self.name):
            for key in bucket.list():
                key.delete()

            bucket.delete()

    for key in self.redis.keys(
                tpl.connection + '*'):
        self.redis.delete(key)
'''

SAX = '''def _generate_SAX_single(self, sections, section_height, value):
    sax = 0
    for s in sections:
        if value >= sections[s]:
            sax = s
        else:
            break
    return sax
'''


def test_catalog():
    assert set(mutate.OPERATORS) == {
        "cmp_swap", "is_not_swap", "var_misuse", "drop_self", "delete_stmt", "swap_args",
        "dot_to_bracket", "truncate_chain", "delete_return", "wrap_return", "unwrap_return",
        "swap_exception", "rename_call", "delete_break"}
    assert mutate.LOSSY == {"delete_stmt", "delete_return", "delete_break", "truncate_chain"}
    assert set(mutate.NON_LOSSY) | mutate.LOSSY == set(mutate.OPERATORS)


# -- enumerate_sites

def test_pop_is_one_site():
    src = "def f(kwargs):\n    if kwargs.pop('force', None):\n        return 1\n"
    sites = mutate.enumerate_sites(src, "rename_call")
    assert [s.text for s in sites] == ["pop"]
    assert sites[0].position == (2, 14)


def test_get_key_sites_include_pop():
    assert "pop" in [s.text for s in mutate.enumerate_sites(GET_KEY, "rename_call")]


def test_no_comparisons_no_sites():
    assert mutate.enumerate_sites("def f(x):\n    return x + 1\n", "cmp_swap") == []


def test_two_comparison_sites():
    src = "def f(a, b, c, d):\n    if a >= b and c != d:\n        return 1\n"
    sites = mutate.enumerate_sites(src, "cmp_swap")
    assert [s.text for s in sites] == [">=", "!="]
    assert [s.position for s in sites] == sorted(s.position for s in sites)


def test_unknown_operator():
    with pytest.raises(ValueError):
        mutate.enumerate_sites("def f():\n    pass\n", "no_such_op")


# -- apply

def test_get_key_pop_to_get():
    site = next(s for s in mutate.enumerate_sites(GET_KEY, "rename_call") if s.text == "pop")
    for seed in range(5):
        bug = mutate.apply(GET_KEY, "rename_call", site, seed)
        assert bug.mutated_source.count("kwargs.pop(") == 0 or seed
    bug = mutate.apply(GET_KEY, "rename_call", site, 0)
    assert normalize(bug.mutated_source) != bug.original.normalized


def test_tear_down_strictify():
    (site,) = [s for s in mutate.enumerate_sites(TEAR_DOWN, "cmp_swap") if s.kind == "strict"]
    bug = mutate.apply(TEAR_DOWN, "cmp_swap", site, 0)
    assert "if bucket.name == self.name:" in bug.mutated_source
    assert "startswith" not in bug.mutated_source


def test_sax_delete_break():
    (site,) = mutate.enumerate_sites(SAX, "delete_break")
    bug = mutate.apply(SAX, "delete_break", site, 0)
    assert "else" not in bug.mutated_source and "break" not in bug.mutated_source
    assert bug.mutated_source == SAX.replace("        else:\n            break\n", "")
    assert bug.lossy


def test_unwrap_return():
    src = "def f(a, b):\n    return (a, b)\n"
    (site,) = mutate.enumerate_sites(src, "unwrap_return")
    bug = mutate.apply(src, "unwrap_return", site, 0)
    assert bug.mutated_source == "def f(a, b):\n    return a\n"
    assert normalize(bug.mutated_source) != normalize(src)


def test_apply_at_position_tuple():
    src = "def f(a, b):\n    return a < b\n"
    (site,) = mutate.enumerate_sites(src, "cmp_swap")
    assert mutate.apply(src, "cmp_swap", site.position, 3) == mutate.apply(src, "cmp_swap", site, 3)
    with pytest.raises(ValueError):
        mutate.apply(src, "cmp_swap", (1, 0), 3)


def test_degenerate_mutation():
    # the only replacement differs in a comment, so it normalizes equal
    src = "def f(e):\n    try:\n        pass\n    except ValueError:\n        raise\n"
    with pytest.raises((DegenerateMutation, ValueError)):
        mutate.apply(src, "drop_self", (1, 0), 0)


def test_syntax_broken_from_checker():
    src = "def f(a, b):\n    return a < b\n"
    (site,) = mutate.enumerate_sites(src, "cmp_swap")
    reject_all = (sys.executable, "-c", "import sys; print('1:1: rejected'); sys.exit(1)", "{file}")
    with pytest.raises(SyntaxBroken):
        mutate.apply(src, "cmp_swap", site, 0, checker=SyntaxChecker(reject_all))


def test_jsonl_record():
    src = "def f(a, b):\n    return a < b\n"
    bug = mutate.apply(src, "cmp_swap", mutate.enumerate_sites(src, "cmp_swap")[0], 1)
    row = json.loads(json.dumps(bug.to_json("skel")))
    assert set(row) == {"original", "mutated", "operator", "site", "seed", "skeleton", "lossy"}
    assert row["site"] == [2, 13] and row["lossy"] is False


# -- inverse_candidates

def test_cmp_inverse_closure():
    assert set(mutate.inverse_candidates("cmp_swap", "<")) == {">=", ">", "<=", "==", "!="}


def test_rename_inverse_uses_context():
    assert "pop" in mutate.inverse_candidates("rename_call", "get", GET_KEY)
    assert "pop" in mutate.inverse_candidates("rename_call", "get")  # family member


def test_delete_stmt_inverse_from_context():
    reference = "def f():\n    x = 1\n    return x\n"
    cands = mutate.inverse_candidates("delete_stmt", "", reference)
    assert "x = 1" in cands
    assert "" not in cands


# -- properties over the fixture corpus

def _functions():
    out = []
    for path in sorted(PROJECTS.rglob("*.py")):
        if "tests" in path.relative_to(PROJECTS).parts:
            continue
        index = index_file(path.read_text(), path.name)
        out.extend(index.source_of(f) for f in index.all_functions())
    return out


FUNCTIONS = _functions()
SITES = [(src, op, site) for src in FUNCTIONS for op, site in mutate.all_sites(src)]


def test_fixture_corpus_has_sites_for_most_operators():
    assert len({op for _, op, _ in SITES}) >= 10


def _restored(bug) -> bool:
    target = bug.original.normalized
    for patch in mutate.inverse_patches(bug.mutated_source, bug.operator):
        try:
            if normalize(patch.source) == target:
                return True
        except ValueError:
            continue
    return False


@settings(max_examples=150, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.sampled_from(SITES), st.integers(min_value=0, max_value=2**16))
def test_apply_invariants(item, seed):
    src, op, site = item
    try:
        bug = mutate.apply(src, op, site, seed)
    except DegenerateMutation:
        return
    assert normalize(bug.mutated_source) != bug.original.normalized
    assert syntax_check(textwrap.dedent(bug.mutated_source)) is None
    assert bug.site == site.position
    assert mutate.apply(src, op, site, seed) == bug
    if not bug.lossy:
        assert _restored(bug)


def test_round_trip_every_non_lossy_site():
    checked = 0
    for src, op, site in SITES:
        if op in mutate.LOSSY:
            continue
        bug = mutate.apply(src, op, site, 0)
        assert _restored(bug), (op, site, bug.mutated_source)
        checked += 1
    assert checked >= 50
