"""Heuristic bug injection and the inverse catalog used to undo it.

Every operator works on the text of one function. Sites are character spans
of that text; a mutation splices a replacement into the span, and the
inverse catalog proposes replacements that splice the original back. The
operators that throw information away (``LOSSY``) still propose inverses,
but nothing guarantees they can restore the original.
"""

from __future__ import annotations

import ast
import bisect
import keyword
import random
import re
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Iterator, Mapping, Sequence, Union

from repairkit import lexer
from repairkit.corpus import MethodRecord, normalize
from repairkit.errors import DegenerateMutation, SyntaxBroken
from repairkit.skeleton import Skeleton
from repairkit.structure import FunctionInfo, SyntaxChecker, syntax_check

CMP_FAMILY = ("<", "<=", ">", ">=", "==", "!=")
EXCEPTION_FAMILY = (
    "Exception", "ValueError", "TypeError", "KeyError", "IndexError", "AttributeError",
    "LookupError", "RuntimeError", "NotImplementedError", "ZeroDivisionError",
    "AssertionError", "StopIteration", "OSError",
)
CALL_FAMILIES = (
    ("pop", "get"), ("append", "extend"), ("keys", "values", "items"),
    ("startswith", "endswith"), ("lower", "upper"), ("strip", "lstrip", "rstrip"),
    ("find", "index"), ("add", "update"), ("remove", "discard"), ("split", "rsplit"),
    ("min", "max"), ("sort", "reverse"),
)
_STRICT_METHODS = ("startswith", "endswith")

Context = Union[Skeleton, str, None]


@dataclass(frozen=True)
class MutationOperator:
    id: str
    site_selector: str
    lossy: bool = False


@dataclass(frozen=True)
class Site:
    """A span of the function text. ``line`` is 1-based, ``col`` 0-based."""

    line: int
    col: int
    start: int
    end: int
    text: str
    kind: str = ""

    @property
    def position(self) -> tuple[int, int]:
        return (self.line, self.col)


@dataclass(frozen=True)
class InjectedBug:
    original: MethodRecord
    mutated_source: str
    operator: str
    site: tuple[int, int]
    seed: int
    replacement: str = ""
    lossy: bool = False

    def to_json(self, skeleton: str | None = None) -> dict:
        return {
            "original": self.original.source,
            "mutated": self.mutated_source,
            "operator": self.operator,
            "site": list(self.site),
            "seed": self.seed,
            "skeleton": skeleton,
            "lossy": self.lossy,
        }


# -- parsed view of a function --------------------------------------------------

_LINE_RE = re.compile(r"[^\n]*\n|[^\n]+$")


class _Code:
    """Function text plus its AST, with node positions mapped to text offsets.

    Indented methods are dedented before parsing; lines keep a per-line shift
    so offsets still point into the original text.
    """

    def __init__(self, source: str):
        self.source = source
        lines = _LINE_RE.findall(source)
        self.starts = [0]
        for line in lines:
            self.starts.append(self.starts[-1] + len(line))
        first = next((l for l in lines if l.strip()), "")
        indent = first[: len(first) - len(first.lstrip(" \t"))]
        self.shift: list[int] = []
        body: list[str] = []
        for line in lines:
            if indent and line.startswith(indent):
                body.append(line[len(indent):])
                self.shift.append(len(indent))
            else:
                body.append(line)
                self.shift.append(0)
        self.blines = body
        self.dedented = "".join(body)
        self.tree = ast.parse(self.dedented)
        self.root: ast.AST = next(
            (n for n in self.tree.body if isinstance(n, (ast.FunctionDef, ast.AsyncFunctionDef))),
            self.tree,
        )
        self.parents: dict[ast.AST, ast.AST] = {}
        for node in ast.walk(self.root):
            for child in ast.iter_child_nodes(node):
                self.parents[child] = node

    def offset(self, lineno: int, col_bytes: int) -> int:
        bline = self.blines[lineno - 1]
        col = len(bline.encode("utf-8")[:col_bytes].decode("utf-8", "ignore"))
        return self.starts[lineno - 1] + self.shift[lineno - 1] + col

    def start(self, node: ast.AST) -> int:
        return self.offset(node.lineno, node.col_offset)

    def end(self, node: ast.AST) -> int:
        return self.offset(node.end_lineno, node.end_col_offset)

    def text(self, node: ast.AST) -> str:
        return self.source[self.start(node):self.end(node)]

    def site(self, start: int, end: int, kind: str) -> Site:
        line = bisect.bisect_right(self.starts, start)
        line = min(line, len(self.starts) - 1) or 1
        return Site(line, start - self.starts[line - 1], start, end, self.source[start:end], kind)

    def node_site(self, node: ast.AST, kind: str) -> Site:
        return self.site(self.start(node), self.end(node), kind)

    def walk(self) -> Iterator[ast.AST]:
        return ast.walk(self.root)

    def line_span(self, first: int, last: int) -> tuple[int, int]:
        return self.starts[first - 1], self.starts[min(last, len(self.starts) - 1)]

    def owns_lines(self, node: ast.AST) -> bool:
        """True if nothing but whitespace or a comment shares the node's lines."""
        a, b = self.line_span(node.lineno, node.end_lineno)
        before = self.source[a:self.start(node)]
        after = self.source[self.end(node):b]
        return not before.strip() and (not after.strip() or after.strip().startswith("#"))


# -- identifier pools -----------------------------------------------------------

@dataclass
class _Pools:
    locals: list[str] = field(default_factory=list)
    names: list[str] = field(default_factory=list)
    self_attrs: list[str] = field(default_factory=list)
    attrs: list[str] = field(default_factory=list)
    call_attrs: list[str] = field(default_factory=list)
    statements: list[str] = field(default_factory=list)

    def merge(self, other: "_Pools") -> "_Pools":
        out = _Pools()
        for name in out.__dataclass_fields__:
            merged = list(getattr(self, name))
            merged.extend(x for x in getattr(other, name) if x not in merged)
            setattr(out, name, merged)
        return out


def _add(seq: list[str], item: str) -> None:
    if item not in seq:
        seq.append(item)


def _is_self(node: ast.AST) -> bool:
    return isinstance(node, ast.Name) and node.id in ("self", "cls")


def _sorted_nodes(code: _Code, kinds) -> list:
    nodes = [n for n in code.walk() if isinstance(n, kinds) and hasattr(n, "lineno")]
    return sorted(nodes, key=lambda n: (n.lineno, n.col_offset))


def _pools_from_code(code: _Code) -> _Pools:
    pools = _Pools()
    root = code.root
    if isinstance(root, (ast.FunctionDef, ast.AsyncFunctionDef)):
        a = root.args
        for arg in [*a.posonlyargs, *a.args, a.vararg, *a.kwonlyargs, a.kwarg]:
            if arg is not None and arg.arg not in ("self", "cls"):
                _add(pools.locals, arg.arg)
                _add(pools.names, arg.arg)
    for node in _sorted_nodes(code, (ast.Name, ast.Attribute, ast.arg)):
        if isinstance(node, ast.Name) and node.id not in ("self", "cls"):
            _add(pools.names, node.id)
            if isinstance(node.ctx, ast.Store):
                _add(pools.locals, node.id)
        elif isinstance(node, ast.Attribute):
            _add(pools.attrs, node.attr)
            if _is_self(node.value):
                _add(pools.self_attrs, node.attr)
    for node in _sorted_nodes(code, ast.Call):
        if isinstance(node.func, ast.Attribute):
            _add(pools.call_attrs, node.func.attr)
    pools.statements = _statements(code.source)
    return pools


def _statements(text: str) -> list[str]:
    out: list[str] = []
    for line in text.splitlines():
        s = line.strip()
        if s and not s.startswith(("#", "def ", "async def ", "class ", "@")) \
                and s not in ("# target edit", "# end"):
            _add(out, s)
    return out


def _pools_from_text(text: str) -> _Pools:
    """Lexical fallback for text that does not parse (e.g. a skeleton)."""
    pools = _Pools()
    try:
        toks = [t for t in lexer.iter_tokens(text) if t.kind not in (lexer.SPACE, lexer.COMMENT)]
    except Exception:
        return pools
    for i, tok in enumerate(toks):
        if tok.kind != lexer.NAME or keyword.iskeyword(tok.text):
            continue
        prev = toks[i - 1] if i else None
        nxt = toks[i + 1] if i + 1 < len(toks) else None
        if prev is not None and prev.text == ".":
            _add(pools.attrs, tok.text)
            if i >= 2 and toks[i - 2].text == "self":
                _add(pools.self_attrs, tok.text)
            if nxt is not None and nxt.text == "(":
                _add(pools.call_attrs, tok.text)
        elif tok.text not in ("self", "cls"):
            _add(pools.names, tok.text)
    pools.statements = _statements(text)
    return pools


def context_pools(context: Context) -> _Pools:
    if context is None:
        return _Pools()
    if isinstance(context, Skeleton):
        focal, text = context.focal_source(), context.text
    else:
        focal = text = context
    pools = _Pools()
    try:
        pools = _pools_from_code(_Code(focal))
    except SyntaxError:
        pass
    return pools.merge(_pools_from_text(text))


# -- token helpers --------------------------------------------------------------

_CMP_TOKEN = re.compile(r"(?<![<>=!])(<=|>=|==|!=|<|>)(?!=)")
_IS_TOKEN = re.compile(r"\bis\s+not\b|\bis\b")


def _blank_comments(segment: str) -> str:
    return re.sub(r"#[^\n]*", lambda m: " " * len(m.group()), segment)


def _op_sites(code: _Code, pattern: re.Pattern, op_types, kind: str) -> list[Site]:
    sites = []
    for node in _sorted_nodes(code, ast.Compare):
        operands = [node.left, *node.comparators]
        for i, op in enumerate(node.ops):
            if not isinstance(op, op_types):
                continue
            a, b = code.end(operands[i]), code.start(operands[i + 1])
            m = pattern.search(_blank_comments(code.source[a:b]))
            if m:
                sites.append(code.site(a + m.start(), a + m.end(), kind))
    return sites


def _attr_token(code: _Code, node: ast.Attribute, kind: str) -> Site:
    end = code.end(node)
    return code.site(end - len(node.attr), end, kind)


def _in_bool_context(code: _Code, node: ast.AST) -> bool:
    parent = code.parents.get(node)
    if isinstance(parent, (ast.If, ast.While, ast.IfExp, ast.Assert)):
        return parent.test is node
    if isinstance(parent, ast.comprehension):
        return node in parent.ifs
    return isinstance(parent, ast.BoolOp) or (
        isinstance(parent, ast.UnaryOp) and isinstance(parent.op, ast.Not))


def _family(name: str, families: Sequence[Sequence[str]]) -> list[str]:
    out: list[str] = []
    for fam in families:
        if name in fam:
            for other in fam:
                if other != name:
                    _add(out, other)
    return out


def _is_docstring(code: _Code, stmt: ast.stmt) -> bool:
    parent = code.parents.get(stmt)
    return (
        isinstance(stmt, ast.Expr) and isinstance(stmt.value, ast.Constant)
        and isinstance(stmt.value.value, str)
        and isinstance(parent, (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef))
        and parent.body and parent.body[0] is stmt
    )


def _blocks(code: _Code) -> Iterator[list[ast.stmt]]:
    for node in code.walk():
        for name in ("body", "orelse", "finalbody"):
            block = getattr(node, name, None)
            if isinstance(block, list) and block and isinstance(block[0], ast.stmt):
                yield block
        if isinstance(node, ast.Try):
            for handler in node.handlers:
                yield handler.body


# -- operators ------------------------------------------------------------------

class _Op:
    id = ""
    lossy = False
    selector = ""

    def sites(self, code: _Code, pools: _Pools) -> list[Site]:
        raise NotImplementedError

    def replacements(self, code: _Code, site: Site, pools: _Pools) -> list[str]:
        raise NotImplementedError

    def inverse_sites(self, code: _Code) -> list[Site]:
        raise NotImplementedError

    def inverse(self, text: str, kind: str | None, pools: _Pools) -> list[str]:
        raise NotImplementedError


class CmpSwap(_Op):
    id = "cmp_swap"
    selector = "comparison operators; x.startswith(y) in a condition (strictified to x == y)"

    def sites(self, code, pools):
        sites = _op_sites(code, _CMP_TOKEN, (ast.Lt, ast.LtE, ast.Gt, ast.GtE, ast.Eq, ast.NotEq),
                          "op")
        for node in _sorted_nodes(code, ast.Call):
            f = node.func
            if (isinstance(f, ast.Attribute) and f.attr in _STRICT_METHODS and len(node.args) == 1
                    and not node.keywords and not isinstance(node.args[0], ast.Starred)
                    and _in_bool_context(code, node)):
                sites.append(code.node_site(node, "strict"))
        return sites

    def replacements(self, code, site, pools):
        if site.kind == "strict":
            node = next(n for n in code.walk() if isinstance(n, ast.Call) and code.start(n) == site.start
                        and code.end(n) == site.end)
            return [f"{code.text(node.func.value)} == {code.text(node.args[0])}"]
        return [op for op in CMP_FAMILY if op != site.text]

    def inverse_sites(self, code):
        sites = _op_sites(code, _CMP_TOKEN, (ast.Lt, ast.LtE, ast.Gt, ast.GtE, ast.Eq, ast.NotEq),
                          "op")
        for node in _sorted_nodes(code, ast.Compare):
            if len(node.ops) == 1 and isinstance(node.ops[0], ast.Eq) and _in_bool_context(code, node):
                sites.append(code.node_site(node, "strict"))
        return sites

    def inverse(self, text, kind, pools):
        stripped = text.strip()
        if kind == "op" or (kind is None and stripped in CMP_FAMILY):
            return [op for op in CMP_FAMILY if op != stripped]
        try:
            node = ast.parse(stripped, mode="eval").body
        except SyntaxError:
            return []
        if not (isinstance(node, ast.Compare) and len(node.ops) == 1
                and isinstance(node.ops[0], ast.Eq)):
            return []
        left = ast.get_source_segment(stripped, node.left)
        right = ast.get_source_segment(stripped, node.comparators[0])
        return [f"{left}.{m}({right})" for m in _STRICT_METHODS]


class IsNotSwap(_Op):
    id = "is_not_swap"
    selector = "``is`` / ``is not`` comparisons"

    def sites(self, code, pools):
        return _op_sites(code, _IS_TOKEN, (ast.Is, ast.IsNot), "op")

    def replacements(self, code, site, pools):
        return self.inverse(site.text, "op", pools)

    def inverse_sites(self, code):
        return self.sites(code, _Pools())

    def inverse(self, text, kind, pools):
        return ["is"] if text.split() == ["is", "not"] else ["is not"]


class VarMisuse(_Op):
    id = "var_misuse"
    selector = "loads of local names, and self attributes"

    def _candidates(self, code):
        out = []
        for node in _sorted_nodes(code, (ast.Name, ast.Attribute)):
            if not isinstance(node.ctx, ast.Load):
                continue
            if isinstance(node, ast.Name) and node.id not in ("self", "cls"):
                out.append((node, code.node_site(node, "name")))
            elif isinstance(node, ast.Attribute) and _is_self(node.value):
                out.append((node, _attr_token(code, node, "attr")))
        return out

    def sites(self, code, pools):
        out = []
        for node, site in self._candidates(code):
            if site.kind == "name" and node.id not in pools.locals:
                continue
            out.append(site)
        return out

    def replacements(self, code, site, pools):
        pool = pools.locals if site.kind == "name" else pools.self_attrs
        return [x for x in pool if x != site.text]

    def inverse_sites(self, code):
        return [site for _node, site in self._candidates(code)]

    def inverse(self, text, kind, pools):
        if kind == "name":
            pool = pools.locals
        elif kind == "attr":
            pool = pools.self_attrs
        else:
            pool = pools.locals + [a for a in pools.self_attrs if a not in pools.locals]
        return [x for x in pool if x != text]


class DropSelf(_Op):
    id = "drop_self"
    selector = "``self.x`` attribute accesses"

    def sites(self, code, pools):
        return [code.node_site(n, "attr") for n in _sorted_nodes(code, ast.Attribute)
                if _is_self(n.value) and n.value.id == "self"]

    def replacements(self, code, site, pools):
        return [site.text.split(".", 1)[1].strip()]

    def inverse_sites(self, code):
        return [code.node_site(n, "name") for n in _sorted_nodes(code, ast.Name)
                if n.id not in ("self", "cls")]

    def inverse(self, text, kind, pools):
        return [f"self.{text.strip()}"]


def _positional(node: ast.Call) -> list[ast.expr]:
    if any(isinstance(a, ast.Starred) for a in node.args):
        return []
    return list(node.args)


def _swaps(code: _Code, args: list[ast.expr]) -> list[str]:
    texts = [code.text(a) for a in args]
    seps = [code.source[code.end(args[i]):code.start(args[i + 1])] for i in range(len(args) - 1)]
    out: list[str] = []
    for i, j in combinations(range(len(args)), 2):
        if texts[i] == texts[j]:
            continue
        swapped = list(texts)
        swapped[i], swapped[j] = swapped[j], swapped[i]
        pieces = [swapped[0]]
        for sep, arg in zip(seps, swapped[1:]):
            pieces.extend([sep, arg])
        _add(out, "".join(pieces))
    return out


class SwapArgs(_Op):
    id = "swap_args"
    selector = "calls with two or more positional arguments"

    def sites(self, code, pools):
        out = []
        for node in _sorted_nodes(code, ast.Call):
            args = _positional(node)
            if len(args) >= 2:
                out.append(code.site(code.start(args[0]), code.end(args[-1]), "args"))
        return out

    def _args_at(self, code, site):
        for node in code.walk():
            if isinstance(node, ast.Call):
                args = _positional(node)
                if len(args) >= 2 and code.start(args[0]) == site.start and code.end(args[-1]) == site.end:
                    return args
        return []

    def replacements(self, code, site, pools):
        return _swaps(code, self._args_at(code, site))

    def inverse_sites(self, code):
        return self.sites(code, _Pools())

    def inverse(self, text, kind, pools):
        try:
            call = _Code("_(" + text + ")")
        except SyntaxError:
            return []
        node = call.tree.body[0].value
        args = _positional(node) if isinstance(node, ast.Call) else []
        return _swaps(call, args) if len(args) >= 2 else []


_IDENT = re.compile(r"^[A-Za-z_]\w*$")


class DotToBracket(_Op):
    id = "dot_to_bracket"
    selector = "attribute reads on non-self objects (``a.b`` to ``a['b']``)"

    def sites(self, code, pools):
        out = []
        for node in _sorted_nodes(code, ast.Attribute):
            parent = code.parents.get(node)
            if (_is_self(node.value) or not isinstance(node.ctx, ast.Load)
                    or (isinstance(parent, ast.Call) and parent.func is node)):
                continue
            end = code.end(node)
            dot = code.source.rfind(".", code.end(node.value), end - len(node.attr))
            if dot >= 0:
                out.append(code.site(dot, end, "dot"))
        return out

    def replacements(self, code, site, pools):
        return [f"['{site.text.split('.', 1)[1].strip()}']"]

    def inverse_sites(self, code):
        out = []
        for node in _sorted_nodes(code, ast.Subscript):
            key = node.slice
            if (isinstance(key, ast.Constant) and isinstance(key.value, str)
                    and _IDENT.match(key.value) and not keyword.iskeyword(key.value)):
                bracket = code.source.rfind("[", code.end(node.value), code.start(key))
                if bracket >= 0:
                    out.append(code.site(bracket, code.end(node), "bracket"))
        return out

    def inverse(self, text, kind, pools):
        m = re.match(r"^\[\s*(['\"])([A-Za-z_]\w*)\1\s*\]$", text.strip())
        return ["." + m.group(2)] if m else []


class TruncateChain(_Op):
    id = "truncate_chain"
    lossy = True
    selector = "attribute chains; the last attribute is dropped"

    def sites(self, code, pools):
        return [code.node_site(n, "chain") for n in _sorted_nodes(code, ast.Attribute)
                if isinstance(n.value, (ast.Attribute, ast.Call)) and isinstance(n.ctx, ast.Load)]

    def replacements(self, code, site, pools):
        node = next(n for n in code.walk() if isinstance(n, ast.Attribute)
                    and code.start(n) == site.start and code.end(n) == site.end)
        return [code.text(node.value)]

    def inverse_sites(self, code):
        return [code.node_site(n, "chain") for n in _sorted_nodes(code, (ast.Attribute, ast.Call))]

    def inverse(self, text, kind, pools):
        return [f"{text}.{a}" for a in pools.attrs]


class DeleteReturn(_Op):
    id = "delete_return"
    lossy = True
    selector = "``return <value>``; the value is dropped"

    def sites(self, code, pools):
        out = []
        for node in _sorted_nodes(code, ast.Return):
            if node.value is not None:
                start = code.start(node) + len("return")
                out.append(code.site(start, code.end(node), "value"))
        return out

    def replacements(self, code, site, pools):
        return [""]

    def inverse_sites(self, code):
        out = []
        for node in _sorted_nodes(code, ast.Return):
            if node.value is None:
                at = code.start(node) + len("return")
                out.append(code.site(at, at, "value"))
        return out

    def inverse(self, text, kind, pools):
        return [f" {name}" for name in pools.names]


class WrapReturn(_Op):
    id = "wrap_return"
    selector = "returned values, wrapped in a tuple, list or dict"

    def sites(self, code, pools):
        return [code.node_site(n.value, "value") for n in _sorted_nodes(code, ast.Return)
                if n.value is not None
                and not isinstance(n.value, (ast.Tuple, ast.List, ast.Dict, ast.NamedExpr))]

    def replacements(self, code, site, pools):
        v = site.text
        return [f"({v},)", f"[{v}]", f"{{'value': {v}}}"]

    def inverse_sites(self, code):
        out = []
        for node in _sorted_nodes(code, ast.Return):
            v = node.value
            if (isinstance(v, (ast.Tuple, ast.List)) and len(v.elts) == 1) or (
                    isinstance(v, ast.Dict) and len(v.keys) == 1 and v.keys[0] is not None):
                out.append(code.node_site(v, "wrapped"))
        return out

    def inverse(self, text, kind, pools):
        try:
            inner = _Code(text.strip())
        except SyntaxError:
            return []
        expr = inner.tree.body[0].value if inner.tree.body and isinstance(
            inner.tree.body[0], ast.Expr) else None
        if isinstance(expr, (ast.Tuple, ast.List)) and len(expr.elts) == 1:
            return [inner.text(expr.elts[0])]
        if isinstance(expr, ast.Dict) and len(expr.values) == 1:
            return [inner.text(expr.values[0])]
        return []


class UnwrapReturn(_Op):
    id = "unwrap_return"
    selector = "``return (a, b)`` where b is a name; only the first element is kept"

    def sites(self, code, pools):
        return [code.node_site(n.value, "tuple") for n in _sorted_nodes(code, ast.Return)
                if isinstance(n.value, ast.Tuple) and len(n.value.elts) == 2
                and isinstance(n.value.elts[1], ast.Name)
                and not isinstance(n.value.elts[0], ast.Starred)]

    def replacements(self, code, site, pools):
        node = next(n for n in code.walk() if isinstance(n, ast.Tuple)
                    and code.start(n) == site.start and code.end(n) == site.end)
        return [code.text(node.elts[0])]

    def inverse_sites(self, code):
        return [code.node_site(n.value, "value") for n in _sorted_nodes(code, ast.Return)
                if n.value is not None and not isinstance(n.value, ast.Tuple)]

    def inverse(self, text, kind, pools):
        out: list[str] = []
        for name in pools.names:
            _add(out, f"({text}, {name})")
            _add(out, f"{text}, {name}")
        return out


class SwapException(_Op):
    id = "swap_exception"
    selector = "exception class names in ``except`` clauses and ``raise``"

    def _names(self, code):
        out = []
        for node in code.walk():
            target = None
            if isinstance(node, ast.ExceptHandler):
                target = node.type
            elif isinstance(node, ast.Raise):
                target = node.exc.func if isinstance(node.exc, ast.Call) else node.exc
            if isinstance(target, ast.Tuple):
                out.extend(e for e in target.elts if isinstance(e, ast.Name))
            elif isinstance(target, ast.Name):
                out.append(target)
        return sorted((n for n in out if n.id in EXCEPTION_FAMILY),
                      key=lambda n: (n.lineno, n.col_offset))

    def sites(self, code, pools):
        return [code.node_site(n, "exc") for n in self._names(code)]

    def replacements(self, code, site, pools):
        return self.inverse(site.text, "exc", pools)

    def inverse_sites(self, code):
        return self.sites(code, _Pools())

    def inverse(self, text, kind, pools):
        return [e for e in EXCEPTION_FAMILY if e != text.strip()]


class RenameCall(_Op):
    id = "rename_call"
    selector = "method-call names (``a.pop(...)`` to ``a.get(...)``)"

    def sites(self, code, pools):
        return [_attr_token(code, n.func, "call") for n in _sorted_nodes(code, ast.Call)
                if isinstance(n.func, ast.Attribute)]

    def replacements(self, code, site, pools):
        out = _family(site.text, CALL_FAMILIES)
        for name in pools.call_attrs:
            if name != site.text:
                _add(out, name)
        return out

    def inverse_sites(self, code):
        return self.sites(code, _Pools())

    def inverse(self, text, kind, pools):
        out = _family(text, CALL_FAMILIES)
        for name in pools.call_attrs + pools.attrs:
            if name != text:
                _add(out, name)
        return out


class DeleteBreak(_Op):
    id = "delete_break"
    lossy = True
    selector = "``break`` statements (an ``else: break`` block goes entirely)"

    def sites(self, code, pools):
        out = []
        for node in _sorted_nodes(code, ast.Break):
            parent = code.parents.get(node)
            if (isinstance(parent, ast.If) and parent.orelse == [node]
                    and code.owns_lines(node)):
                first = self._else_line(code, parent, node)
                if first is not None:
                    a, b = code.line_span(first, node.end_lineno)
                    site = code.site(a, b, "else")
                    indent = len(site.text) - len(site.text.lstrip())
                    out.append(Site(site.line, indent, a, b, site.text, "else"))
                    continue
            block = next((blk for blk in _blocks(code) if node in blk), [node])
            if len(block) >= 2 and code.owns_lines(node):
                out.append(_line_site(code, node, "line"))
            else:
                out.append(code.node_site(node, "stmt"))
        return out

    @staticmethod
    def _else_line(code, parent: ast.If, node: ast.Break) -> int | None:
        for line in range(node.lineno - 1, parent.body[-1].end_lineno, -1):
            if re.match(r"^\s*else\s*:\s*(#.*)?$", code.source[code.starts[line - 1]:code.starts[line]]):
                return line
        return None

    def replacements(self, code, site, pools):
        return ["pass"] if site.kind == "stmt" else [""]

    def inverse_sites(self, code):
        return [code.node_site(n, "stmt") for n in _sorted_nodes(code, ast.Pass)]

    def inverse(self, text, kind, pools):
        return ["break"]


def _line_site(code: _Code, node: ast.stmt, kind: str) -> Site:
    a, b = code.line_span(node.lineno, node.end_lineno)
    site = code.site(a, b, kind)
    return Site(node.lineno, code.start(node) - a, a, b, site.text, kind)


_DELETABLE = (ast.Assign, ast.AugAssign, ast.AnnAssign, ast.Expr, ast.Return, ast.Raise,
              ast.Assert, ast.Delete, ast.Continue)


class DeleteStmt(_Op):
    id = "delete_stmt"
    lossy = True
    selector = "simple statements in blocks of two or more statements"

    def sites(self, code, pools):
        out = []
        for block in _blocks(code):
            if len(block) < 2:
                continue
            for stmt in block:
                if isinstance(stmt, _DELETABLE) and not _is_docstring(code, stmt) \
                        and code.owns_lines(stmt):
                    out.append(_line_site(code, stmt, "line"))
        return sorted(out, key=lambda s: s.start)

    def replacements(self, code, site, pools):
        return [""]

    def inverse_sites(self, code):
        out = []
        for block in _blocks(code):
            for stmt in block:
                if code.owns_lines(stmt):
                    a, _ = code.line_span(stmt.lineno, stmt.lineno)
                    out.append(Site(stmt.lineno, 0, a, a, "", "line"))
        return sorted(out, key=lambda s: s.start)

    def inverse(self, text, kind, pools):
        return list(pools.statements)


_IMPLS: dict[str, _Op] = {
    op.id: op for op in (
        CmpSwap(), IsNotSwap(), VarMisuse(), DropSelf(), DeleteStmt(), SwapArgs(), DotToBracket(),
        TruncateChain(), DeleteReturn(), WrapReturn(), UnwrapReturn(), SwapException(),
        RenameCall(), DeleteBreak(),
    )
}

OPERATORS: dict[str, MutationOperator] = {
    op_id: MutationOperator(op_id, impl.selector, impl.lossy) for op_id, impl in _IMPLS.items()
}
LOSSY = frozenset(op_id for op_id, op in OPERATORS.items() if op.lossy)
NON_LOSSY = tuple(op_id for op_id in OPERATORS if op_id not in LOSSY)

OpLike = Union[str, MutationOperator]


def _impl(op: OpLike) -> _Op:
    op_id = op.id if isinstance(op, MutationOperator) else op
    try:
        return _IMPLS[op_id]
    except KeyError:
        raise ValueError(f"unknown mutation operator {op_id!r}") from None


def _splice(source: str, site: Site, text: str) -> str:
    return source[:site.start] + text + source[site.end:]


def _parses(source: str) -> bool:
    try:
        _Code(source)
    except (SyntaxError, ValueError):
        return False
    return True


def _restores(impl: _Op, mutated: str, at: int, target_norm: str, extra: _Pools) -> bool:
    try:
        code = _Code(mutated)
    except SyntaxError:
        return False
    pools = _pools_from_code(code).merge(extra)
    for site in impl.inverse_sites(code):
        if site.start != at:
            continue
        for cand in impl.inverse(site.text, site.kind, pools):
            patched = _splice(mutated, site, cand)
            try:
                if normalize(patched) == target_norm:
                    return True
            except ValueError:
                continue
    return False


def _usable(impl: _Op, source: str, site: Site, text: str, original_norm: str,
            extra: _Pools) -> str | None:
    """Why ``text`` at ``site`` is unusable, or ``None`` if it is fine."""
    mutated = _splice(source, site, text)
    try:
        if normalize(mutated) == original_norm:
            return "degenerate"
    except ValueError:
        return "syntax"
    if not _parses(mutated):
        return "syntax"
    if not impl.lossy and not _restores(impl, mutated, site.start, original_norm, extra):
        return "unrecoverable"
    return None


def _candidate_sites(impl: _Op, code: _Code, pools: _Pools) -> list[Site]:
    seen: set[int] = set()
    out = []
    for site in sorted(impl.sites(code, pools), key=lambda s: (s.start, -s.end)):
        if site.start not in seen:
            seen.add(site.start)
            out.append(site)
    return out


def enumerate_sites(source: str, op: OpLike, context: Context = None) -> list[Site]:
    """Applicable sites of ``op`` in the function ``source``, by (line, column).

    A site is applicable when at least one replacement there parses, changes
    the normalized text and (for non-lossy operators) can be undone by the
    inverse catalog.
    """
    impl = _impl(op)
    code = _Code(source)
    extra = context_pools(context)
    pools = _pools_from_code(code).merge(extra)
    original_norm = normalize(source)
    out = []
    for site in _candidate_sites(impl, code, pools):
        if any(_usable(impl, source, site, t, original_norm, extra) is None
               for t in impl.replacements(code, site, pools)):
            out.append(site)
    return out


def _resolve(impl: _Op, code: _Code, pools: _Pools, site) -> Site:
    pos = site.position if isinstance(site, Site) else tuple(site)
    for candidate in _candidate_sites(impl, code, pools):
        if candidate.position == pos:
            return candidate
    raise ValueError(f"no {impl.id} site at line {pos[0]}, column {pos[1]}")


def apply(source: str, op: OpLike, site: Site | tuple[int, int], seed: int,
          context: Context = None, *, checker: SyntaxChecker | None = None,
          check: bool = True, record: MethodRecord | None = None) -> InjectedBug:
    """Mutate ``source`` at ``site``; the replacement is drawn with ``random.Random(seed)``."""
    impl = _impl(op)
    code = _Code(source)
    extra = context_pools(context)
    pools = _pools_from_code(code).merge(extra)
    target = _resolve(impl, code, pools, site)
    original_norm = normalize(source)
    options = impl.replacements(code, target, pools)
    random.Random(seed).shuffle(options)
    reasons = []
    for text in options:
        reason = _usable(impl, source, target, text, original_norm, extra)
        if reason is not None:
            reasons.append(reason)
            continue
        mutated = _splice(source, target, text)
        if check:
            failure = syntax_check(_Code(mutated).dedented, checker)
            if failure is not None:
                raise SyntaxBroken(failure.line, failure.message)
        original = record or MethodRecord.from_source(source)
        return InjectedBug(original, mutated, impl.id, target.position, seed, text, impl.lossy)
    if reasons and all(r == "syntax" for r in reasons):
        raise SyntaxBroken(target.line, "every replacement fails to parse")
    raise DegenerateMutation(f"{impl.id} at {target.position}: no usable replacement")


def inverse_candidates(op: OpLike, mutated_site_text: str, context: Context = None) -> list[str]:
    """Replacement texts that may undo ``op`` at a site now reading ``mutated_site_text``."""
    return _impl(op).inverse(mutated_site_text, None, context_pools(context))


@dataclass(frozen=True)
class InversePatch:
    operator: str
    site: Site
    replacement: str
    source: str


def inverse_patches(mutated_source: str, op: OpLike, context: Context = None,
                    line_priority: Mapping[int, float] | None = None) -> Iterator[InversePatch]:
    """Every inverse of ``op`` at every inverse site, in site then catalog order.

    ``line_priority`` (function-relative line -> score) moves sites on more
    suspicious lines to the front; ties keep source order.
    """
    impl = _impl(op)
    try:
        code = _Code(mutated_source)
    except SyntaxError:
        return
    pools = _pools_from_code(code).merge(context_pools(context))
    prio = line_priority or {}
    for site in sorted(impl.inverse_sites(code), key=lambda s: (-prio.get(s.line, 0.0), s.start, -s.end)):
        for cand in impl.inverse(site.text, site.kind, pools):
            if cand != site.text:
                yield InversePatch(impl.id, site, cand, _splice(mutated_source, site, cand))


def all_sites(source: str, ops: Iterable[OpLike] | None = None,
              context: Context = None) -> list[tuple[str, Site]]:
    out = []
    for op in ops or OPERATORS:
        out.extend((_impl(op).id, s) for s in enumerate_sites(source, op, context))
    return out


def replace_function(file_source: str, func: FunctionInfo, new_source: str) -> str:
    """Splice ``new_source`` over the lines of ``func`` in ``file_source``."""
    lines = file_source.splitlines(keepends=True)
    start, end = func.span
    if new_source and not new_source.endswith("\n") and end < len(lines):
        new_source += "\n"
    return "".join(lines[: start - 1]) + new_source + "".join(lines[end:])
