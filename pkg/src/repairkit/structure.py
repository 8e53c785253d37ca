"""Indentation-based structural index of Python source files.

The index records where imports, module globals, classes and functions live
(as 1-based inclusive line spans). It does not attempt to understand
expressions; full syntactic validation is delegated to :func:`syntax_check`,
which shells out to a configurable checker command.
"""

from __future__ import annotations

import io
import os
import re
import subprocess
import sys
import tempfile
import tokenize
from dataclasses import dataclass, field
from typing import Iterator, Sequence

from repairkit.errors import Ambiguous, NotFound, ParseFailure, ToolUnavailable

Span = tuple[int, int]


@dataclass(frozen=True)
class FunctionInfo:
    qualified_name: str
    signature_span: Span
    docstring_span: Span | None
    body_span: Span
    parent_class: str | None = None
    indent: str = ""

    @property
    def name(self) -> str:
        return self.qualified_name.rsplit(".", 1)[-1]

    @property
    def span(self) -> Span:
        return (self.signature_span[0], max(self.body_span[1], self.signature_span[1]))

    def lines(self) -> range:
        return range(self.span[0], self.span[1] + 1)


@dataclass(frozen=True)
class ClassInfo:
    name: str
    header_span: Span
    docstring_span: Span | None
    attribute_spans: tuple[Span, ...]
    methods: tuple[FunctionInfo, ...]
    end_line: int
    indent: str = ""

    @property
    def definition_line(self) -> int:
        return self.header_span[0]

    @property
    def span(self) -> Span:
        return (self.header_span[0], self.end_line)


@dataclass(frozen=True)
class SourceIndex:
    file_path: str
    lines: tuple[str, ...]
    imports: tuple[Span, ...] = ()
    globals: tuple[Span, ...] = ()
    classes: tuple[ClassInfo, ...] = ()
    functions: tuple[FunctionInfo, ...] = ()
    comments: tuple[int, ...] = ()

    def all_functions(self) -> list[FunctionInfo]:
        """Top-level functions and methods, in file order."""
        funcs = list(self.functions)
        for cls in self.classes:
            funcs.extend(cls.methods)
        return sorted(funcs, key=lambda f: f.span[0])

    def class_named(self, name: str) -> ClassInfo | None:
        for cls in self.classes:
            if cls.name == name:
                return cls
        return None

    def enclosing_function(self, line: int) -> FunctionInfo | None:
        for func in self.all_functions():
            if func.span[0] <= line <= func.span[1]:
                return func
        return None

    def source_of(self, func: FunctionInfo) -> str:
        start, end = func.span
        return "".join(self.lines[start - 1 : end])


@dataclass
class _Logical:
    start: int
    end: int
    depth: int
    tokens: list[tokenize.TokenInfo]
    children: list["_Logical"] = field(default_factory=list)

    @property
    def first(self) -> str:
        return self.tokens[0].string

    def last_line(self) -> int:
        end = self.end
        for child in self.children:
            end = max(end, child.last_line())
        return end

    def is_string_only(self) -> bool:
        return bool(self.tokens) and all(t.type == tokenize.STRING for t in self.tokens)

    def is_def(self) -> bool:
        return self.first == "def" or (
            self.first == "async" and len(self.tokens) > 1 and self.tokens[1].string == "def"
        )

    def def_name(self) -> str:
        idx = 1 if self.first in ("def", "class") else 2
        return self.tokens[idx].string


_SKIP = {
    tokenize.NL,
    tokenize.COMMENT,
    tokenize.INDENT,
    tokenize.DEDENT,
    tokenize.ENCODING,
    tokenize.ENDMARKER,
}


def _logical_lines(source: str) -> list[_Logical]:
    out: list[_Logical] = []
    depth = 0
    current: list[tokenize.TokenInfo] = []
    reader = io.StringIO(source).readline
    try:
        for tok in tokenize.generate_tokens(reader):
            if tok.type == tokenize.INDENT:
                depth += 1
            elif tok.type == tokenize.DEDENT:
                depth -= 1
            if tok.type == tokenize.NEWLINE or (tok.type == tokenize.ENDMARKER and current):
                if current:
                    out.append(_Logical(current[0].start[0], tok.start[0], depth, current))
                current = []
                continue
            if tok.type in _SKIP:
                continue
            current.append(tok)
    except IndentationError:
        raise
    except tokenize.TokenError as exc:
        msg, (line, _col) = exc.args
        raise ParseFailure(msg, line) from None
    except SyntaxError as exc:
        raise ParseFailure(exc.msg, exc.lineno) from None
    return out


def _build_tree(logicals: list[_Logical]) -> list[_Logical]:
    roots: list[_Logical] = []
    stack: list[_Logical] = []
    for node in logicals:
        while stack and stack[-1].depth >= node.depth:
            stack.pop()
        if stack:
            stack[-1].children.append(node)
        else:
            roots.append(node)
        stack.append(node)
    return roots


def _indent_of(lines: Sequence[str], lineno: int) -> str:
    text = lines[lineno - 1]
    return text[: len(text) - len(text.lstrip(" \t"))]


def _function(node: _Logical, decorators: list[_Logical], prefix: str, lines: Sequence[str],
              parent: str | None) -> FunctionInfo:
    start = decorators[0].start if decorators else node.start
    signature = (start, node.end)
    docstring = None
    if node.children:
        body = (node.children[0].start, node.last_line())
        if node.children[0].is_string_only():
            docstring = (node.children[0].start, node.children[0].end)
    else:
        # one-line definition: ``def f(): return 1``
        body = (node.end, node.end)
    return FunctionInfo(
        qualified_name=prefix + node.def_name(),
        signature_span=signature,
        docstring_span=docstring,
        body_span=body,
        parent_class=parent,
        indent=_indent_of(lines, start),
    )


def _class(node: _Logical, decorators: list[_Logical], lines: Sequence[str]) -> ClassInfo:
    name = node.def_name()
    start = decorators[0].start if decorators else node.start
    docstring = None
    attributes: list[Span] = []
    methods: list[FunctionInfo] = []
    pending: list[_Logical] = []
    for i, child in enumerate(node.children):
        if i == 0 and child.is_string_only():
            docstring = (child.start, child.end)
            continue
        if child.first == "@":
            pending.append(child)
            continue
        if child.is_def():
            methods.append(_function(child, pending, name + ".", lines, name))
        else:
            first = pending[0].start if pending else child.start
            attributes.append((first, child.last_line()))
        pending = []
    return ClassInfo(
        name=name,
        header_span=(start, node.end),
        docstring_span=docstring,
        attribute_spans=tuple(attributes),
        methods=tuple(methods),
        end_line=node.last_line(),
        indent=_indent_of(lines, start),
    )


def index_file(source: str, file_path: str = "") -> SourceIndex:
    """Build a :class:`SourceIndex` for ``source``.

    Raises :class:`IndentationError` (with ``lineno``) on an inconsistent
    dedent and :class:`ParseFailure` on other lexical errors.
    """
    lines = tuple(source.splitlines(keepends=True))
    roots = _build_tree(_logical_lines(source))
    imports: list[Span] = []
    globals_: list[Span] = []
    classes: list[ClassInfo] = []
    functions: list[FunctionInfo] = []
    pending: list[_Logical] = []
    for node in roots:
        if node.first == "@":
            pending.append(node)
            continue
        if node.is_def():
            functions.append(_function(node, pending, "", lines, None))
        elif node.first == "class":
            classes.append(_class(node, pending, lines))
        elif node.first in ("import", "from"):
            imports.append((node.start, node.last_line()))
        else:
            first = pending[0].start if pending else node.start
            globals_.append((first, node.last_line()))
        pending = []

    covered: set[int] = set()
    for a, b in imports + globals_:
        covered.update(range(a, b + 1))
    for func in functions:
        covered.update(func.lines())
    for cls in classes:
        covered.update(range(cls.header_span[0], cls.header_span[1] + 1))
        if cls.docstring_span:
            covered.update(range(cls.docstring_span[0], cls.docstring_span[1] + 1))
        for a, b in cls.attribute_spans:
            covered.update(range(a, b + 1))
        for method in cls.methods:
            covered.update(method.lines())
    comments = tuple(
        n for n, text in enumerate(lines, 1) if n not in covered and text.strip()
    )
    return SourceIndex(
        file_path=file_path,
        lines=lines,
        imports=tuple(imports),
        globals=tuple(globals_),
        classes=tuple(classes),
        functions=tuple(functions),
        comments=comments,
    )


def find_function(index: SourceIndex, qualified_name: str) -> FunctionInfo:
    matches = [f for f in index.all_functions() if f.qualified_name == qualified_name]
    if not matches:
        raise NotFound(qualified_name)
    if len(matches) > 1:
        raise Ambiguous(f"{qualified_name} is defined {len(matches)} times")
    return matches[0]


def iter_functions(index: SourceIndex) -> Iterator[FunctionInfo]:
    yield from index.all_functions()


# -- syntax checking ---------------------------------------------------------

# Reports the line of the offending block head for "expected an indented block
# after ... on line N" rather than the line where the parser noticed.
_CHECK_SNIPPET = r"""
import re, sys
path = sys.argv[1]
with open(path, encoding="utf-8") as fh:
    src = fh.read()
try:
    compile(src, path, "exec", dont_inherit=True)
except SyntaxError as exc:
    m = re.search(r"on line (\d+)", exc.msg or "")
    line = int(m.group(1)) if m else exc.lineno
    sys.stderr.write("line %s: %s: %s\n" % (line, type(exc).__name__, exc.msg))
    sys.exit(1)
"""

DEFAULT_CHECK_COMMAND = (sys.executable, "-c", _CHECK_SNIPPET, "{file}")

_LINE_RE = re.compile(r"line (\d+)")


@dataclass(frozen=True)
class SyntaxFailure:
    line: int | None
    message: str = ""


@dataclass(frozen=True)
class SyntaxChecker:
    """Runs an external compile-only command; exit status 0 means the file parses."""

    command: tuple[str, ...] = DEFAULT_CHECK_COMMAND
    suffix: str = ".py"
    timeout: float = 30.0

    def __call__(self, source: str) -> SyntaxFailure | None:
        fd, path = tempfile.mkstemp(suffix=self.suffix, prefix="rk_check_")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(source)
            argv = [part.replace("{file}", path) for part in self.command]
            try:
                proc = subprocess.run(
                    argv, capture_output=True, text=True, timeout=self.timeout
                )
            except FileNotFoundError as exc:
                raise ToolUnavailable(f"syntax checker not found: {argv[0]}") from exc
        finally:
            os.unlink(path)
        if proc.returncode == 0:
            return None
        err = proc.stderr or proc.stdout
        m = _LINE_RE.search(err)
        message = err.strip().splitlines()[-1] if err.strip() else ""
        return SyntaxFailure(int(m.group(1)) if m else None, message)


_default_checker = SyntaxChecker()


def syntax_check(source: str, checker: SyntaxChecker | None = None) -> SyntaxFailure | None:
    """Return ``None`` if ``source`` passes the checker, else a :class:`SyntaxFailure`."""
    return (checker or _default_checker)(source)
