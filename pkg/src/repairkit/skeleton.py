"""Token-budgeted code skeletons around a focal function.

Elements of the focal file are admitted in a fixed priority order until the
next one no longer fits; the admitted lines are then emitted in file order,
with the focal function bracketed by ``# target edit`` / ``# end`` comments.
"""

from __future__ import annotations

import re
import subprocess
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

from repairkit.errors import BudgetTooSmall, ToolUnavailable
from repairkit.structure import ClassInfo, FunctionInfo, SourceIndex, Span

OPEN_MARKER = "# target edit"
CLOSE_MARKER = "# end"

_WORD_RE = re.compile(r"[A-Z]+(?![a-z])|[A-Z]?[a-z]+|\d+|[^\W\d_]+|\S")
_LEADING_WS = re.compile(r"^[ \t]*")
_INNER_WS = re.compile(r"[ \t]{2,}")


@dataclass(frozen=True)
class BudgetTokenizer:
    """Counts tokens for budgeting purposes.

    ``approximate`` splits identifiers into sub-words, counts punctuation
    characters individually, treats runs of 4 and 8 spaces as one token each
    and counts every newline. ``external-command`` pipes the text to
    ``command`` and reads a decimal count from its stdout.
    """

    mode: str = "approximate"
    whitespace_run_tokens: tuple[int, ...] = (4, 8)
    command: tuple[str, ...] = ()

    @property
    def additive(self) -> bool:
        # approximate counts are a plain sum over lines plus one per newline
        return self.mode == "approximate"

    def count(self, text: str) -> int:
        return count_tokens(self, text)


def _run_tokens(n: int, sizes: tuple[int, ...]) -> int:
    count = 0
    for size in sorted(sizes, reverse=True):
        count += n // size
        n %= size
    return count + (1 if n else 0)


@lru_cache(maxsize=65536)
def _line_tokens(line: str, sizes: tuple[int, ...]) -> int:
    lead = _LEADING_WS.match(line).group()
    count = 0
    if lead:
        spaces = lead.replace("\t", "")
        count += lead.count("\t") + (_run_tokens(len(spaces), sizes) if spaces else 0)
    rest = line[len(lead):]
    for m in _INNER_WS.finditer(rest.rstrip(" \t")):
        count += _run_tokens(len(m.group().replace("\t", "")) - 1, sizes) + m.group().count("\t")
    count += len(_WORD_RE.findall(rest))
    return count


def count_tokens(tokenizer: BudgetTokenizer, text: str) -> int:
    if not text:
        return 0
    if tokenizer.mode == "external-command":
        if not tokenizer.command:
            raise ToolUnavailable("external tokenizer mode needs a command")
        try:
            proc = subprocess.run(list(tokenizer.command), input=text, capture_output=True,
                                  text=True, timeout=60)
        except FileNotFoundError as exc:
            raise ToolUnavailable(f"tokenizer command not found: {tokenizer.command[0]}") from exc
        if proc.returncode != 0:
            raise ToolUnavailable(f"tokenizer command failed: {proc.stderr.strip()}")
        return int(proc.stdout.strip())
    if tokenizer.mode != "approximate":
        raise ValueError(f"unknown tokenizer mode {tokenizer.mode!r}")
    sizes = tuple(tokenizer.whitespace_run_tokens)
    lines = text.split("\n")
    return sum(_line_tokens(line, sizes) for line in lines) + len(lines) - 1


# -- skeleton -----------------------------------------------------------------

@dataclass(frozen=True)
class SkeletonConfig:
    budget_tokens: float = 1024
    open_marker: str = OPEN_MARKER
    close_marker: str = CLOSE_MARKER
    tokenizer: BudgetTokenizer = field(default_factory=BudgetTokenizer)


@dataclass(frozen=True)
class ManifestEntry:
    kind: str
    name: str
    span: Span


@dataclass(frozen=True)
class Skeleton:
    text: str
    token_count: int
    manifest: tuple[ManifestEntry, ...]
    focal_name: str = ""

    def inclusion(self, qualified_name: str) -> str | None:
        """``"full"``, ``"signature-only"`` or ``None`` for a function in the manifest."""
        kinds = {e.kind for e in self.manifest if e.name == qualified_name}
        if "focal" in kinds or "body" in kinds:
            return "full"
        if "signature" in kinds:
            return "signature-only"
        return None

    def focal_source(self) -> str:
        """The text between the two markers (the focal function as given to the model)."""
        lines = self.text.split("\n")
        start = end = None
        for i, line in enumerate(lines):
            if start is None and line.strip() == OPEN_MARKER:
                start = i + 1
            elif start is not None and line.strip() == CLOSE_MARKER:
                end = i
                break
        if start is None or end is None:
            return ""
        return "\n".join(lines[start:end]) + "\n"


@dataclass
class _Element:
    kind: str
    name: str
    lines: tuple[int, ...]
    requires: tuple[int, ...] = ()
    ident: int = -1

    @property
    def first(self) -> int:
        return self.lines[0]


def _span(span: Span | None) -> tuple[int, ...]:
    if span is None:
        return ()
    return tuple(range(span[0], span[1] + 1))


def _elements(index: SourceIndex, focal: FunctionInfo) -> tuple[list[list[_Element]], list[_Element]]:
    """Element tiers in priority order (within each tier, file order) plus an id table."""
    focal_class: ClassInfo | None = (
        index.class_named(focal.parent_class) if focal.parent_class else None
    )
    focal_lines = set(focal.lines())
    tiers: list[list[_Element]] = [[] for _ in range(9)]
    table: list[_Element] = []
    headers: dict[str, int] = {}

    def add(tier: int, el: _Element, *, sort_later: bool = False) -> int:
        el.ident = len(table)
        table.append(el)
        if not sort_later:
            tiers[tier].append(el)
        return el.ident

    add(0, _Element("focal", focal.qualified_name, tuple(focal.lines())))

    if focal_class is not None:
        headers[focal_class.name] = add(
            1, _Element("class", focal_class.name, _span(focal_class.header_span)))
    for span in index.imports:
        add(2, _Element("import", "", _span(span)))
    if focal_class is not None:
        hdr = (headers[focal_class.name],)
        if focal_class.docstring_span:
            add(3, _Element("class_docstring", focal_class.name,
                            _span(focal_class.docstring_span), hdr))
        for span in focal_class.attribute_spans:
            add(3, _Element("class_attribute", focal_class.name, _span(span), hdr))
    for span in index.globals:
        add(4, _Element("global", "", _span(span)))

    # Signatures of other classes/functions. Class headers of non-focal classes
    # are placed in this tier so that their method signatures have a parent.
    entries: list[tuple[int, object]] = [(c.header_span[0], c) for c in index.classes]
    entries += [(f.span[0], f) for f in index.all_functions()]
    signature_ids: dict[str, int] = {}
    for _, item in sorted(entries, key=lambda e: e[0]):
        if isinstance(item, ClassInfo):
            if item is not focal_class:
                headers[item.name] = add(5, _Element("class", item.name, _span(item.header_span)))
            continue
        func: FunctionInfo = item
        if func.qualified_name == focal.qualified_name and set(func.lines()) & focal_lines:
            continue
        req = (headers[func.parent_class],) if func.parent_class in headers else ()
        signature_ids[func.qualified_name + f"@{func.span[0]}"] = add(
            5, _Element("signature", func.qualified_name, _span(func.signature_span), req))

    for func in index.all_functions():
        key = func.qualified_name + f"@{func.span[0]}"
        if key not in signature_ids:
            continue
        if func.docstring_span:
            add(6, _Element("docstring", func.qualified_name, _span(func.docstring_span),
                            (signature_ids[key],)))
    for cls in index.classes:
        if cls is focal_class:
            continue
        if cls.docstring_span:
            add(6, _Element("class_docstring", cls.name, _span(cls.docstring_span),
                            (headers[cls.name],)))

    body_items: list[_Element] = []
    for func in index.all_functions():
        key = func.qualified_name + f"@{func.span[0]}"
        if key not in signature_ids:
            continue
        sig = set(_span(func.signature_span))
        doc = set(_span(func.docstring_span))
        lines = tuple(n for n in _span(func.body_span) if n not in sig and n not in doc)
        if lines:
            el = _Element("body", func.qualified_name, lines, (signature_ids[key],))
            add(7, el, sort_later=True)
            body_items.append(el)
    for cls in index.classes:
        if cls is focal_class:
            continue
        for span in cls.attribute_spans:
            el = _Element("class_attribute", cls.name, _span(span), (headers[cls.name],))
            add(7, el, sort_later=True)
            body_items.append(el)
    tiers[7].extend(sorted(body_items, key=lambda e: e.first))
    for n in index.comments:
        if n not in focal_lines:
            add(8, _Element("comment", "", (n,)))
    return tiers, table


class _Packer:
    """Tracks emitted lines and the token cost of rendering them."""

    def __init__(self, lines: Sequence[str], tokenizer: BudgetTokenizer, marker_cost: int):
        self.lines = lines
        self.tokenizer = tokenizer
        self.emitted = [False] * (len(lines) + 2)
        self.cost = marker_cost
        n = len(lines)
        self.blank = [False] + [not lines[i].strip() for i in range(n)] + [False]
        # blank runs: map each blank line to (first, last) of its run
        self.run_of: dict[int, tuple[int, int]] = {}
        i = 1
        while i <= n:
            if self.blank[i]:
                j = i
                while j + 1 <= n and self.blank[j + 1]:
                    j += 1
                for k in range(i, j + 1):
                    self.run_of[k] = (i, j)
                i = j + 1
            else:
                i += 1
        self.line_cost = [0] + [
            count_tokens(tokenizer, lines[i].rstrip("\r\n")) + 1 for i in range(n)
        ]
        self.emitted[0] = self.emitted[n + 1] = True  # file edges count as emitted

    def _runs_completed(self, added: set[int]) -> list[tuple[int, int]]:
        runs = []
        n = len(self.lines)
        for line in added:
            for neighbour in (line - 1, line + 1):
                if 1 <= neighbour <= n and self.blank[neighbour] and not self.emitted[neighbour]:
                    a, b = self.run_of[neighbour]
                    before = a - 1 in added or self.emitted[a - 1]
                    after = b + 1 in added or self.emitted[b + 1]
                    if before and after and (a, b) not in runs:
                        runs.append((a, b))
        return runs

    def delta(self, lines: Sequence[int]) -> tuple[int, set[int]]:
        added = {n for n in lines if not self.emitted[n]}
        all_new = set(added)
        for a, b in self._runs_completed(added):
            all_new.update(range(a, b + 1))
        return sum(self.line_cost[n] for n in all_new), all_new

    def commit(self, new_lines: set[int], cost: int) -> None:
        for n in new_lines:
            self.emitted[n] = True
        self.cost += cost


def _render(index: SourceIndex, focal: FunctionInfo, emitted: Sequence[bool],
            focal_text: Sequence[str], cfg: SkeletonConfig) -> str:
    out: list[str] = []
    start, end = focal.span
    n = len(index.lines)
    for i in range(1, n + 1):
        if i == start:
            out.append(focal.indent + cfg.open_marker)
            out.extend(focal_text)
            out.append(focal.indent + cfg.close_marker)
            out.append("")
        if start <= i <= end or not emitted[i]:
            continue
        out.append(index.lines[i - 1].rstrip("\r\n"))
    return "\n".join(out) + "\n"


def _focal_lines(index: SourceIndex, focal: FunctionInfo, override: str | None) -> list[str]:
    if override is None:
        return [index.lines[i - 1].rstrip("\r\n") for i in focal.lines()]
    raw = override.rstrip("\n").split("\n")
    first = next((l for l in raw if l.strip()), "")
    current = first[: len(first) - len(first.lstrip(" \t"))]
    if current == focal.indent:
        return raw
    out = []
    for line in raw:
        if line.startswith(current):
            line = line[len(current):]
        out.append(focal.indent + line if line.strip() else line)
    return out


def build_skeleton(index: SourceIndex, focal: FunctionInfo, focal_source_override: str | None = None,
                   cfg: SkeletonConfig | None = None) -> Skeleton:
    cfg = cfg or SkeletonConfig()
    tok = cfg.tokenizer
    focal_text = _focal_lines(index, focal, focal_source_override)
    marker_lines = [focal.indent + cfg.open_marker, focal.indent + cfg.close_marker, ""]
    fixed_cost = sum(count_tokens(tok, l) + 1 for l in focal_text + marker_lines)
    if fixed_cost > cfg.budget_tokens:
        raise BudgetTooSmall(
            f"focal function plus markers needs {fixed_cost} tokens, budget is {cfg.budget_tokens}")

    # the focal lines are rendered separately; mark them emitted so that blank
    # runs next to them behave as if the function were present.
    packer = _Packer(index.lines, tok, fixed_cost)
    for n in focal.lines():
        packer.emitted[n] = True
    admitted: dict[int, _Element] = {}
    tiers, table = _elements(index, focal)
    for tier in tiers:
        stop = False
        for el in tier:
            if el.kind == "focal":
                admitted[el.ident] = el
                continue
            group = [el]
            pending = list(el.requires)
            while pending:
                dep = pending.pop()
                if dep not in admitted and table[dep] not in group:
                    group.append(table[dep])
                    pending.extend(table[dep].requires)
            lines = sorted({n for g in group for n in g.lines})
            if tok.additive:
                cost, new_lines = packer.delta(lines)
                ok = packer.cost + cost <= cfg.budget_tokens
            else:
                cost, new_lines = packer.delta(lines)
                trial = list(packer.emitted)
                for n in new_lines:
                    trial[n] = True
                ok = count_tokens(tok, _render(index, focal, trial, focal_text, cfg)) <= cfg.budget_tokens
            if not ok:
                stop = True
                break
            packer.commit(new_lines, cost)
            for g in group:
                admitted[g.ident] = g
        if stop:
            break

    # the focal lines were only marked to steer blank-line handling
    emitted = list(packer.emitted)
    text = _render(index, focal, emitted, focal_text, cfg)
    count = count_tokens(tok, text)
    if count > cfg.budget_tokens:  # pragma: no cover - guarded by the packer
        raise AssertionError(f"skeleton exceeds budget: {count} > {cfg.budget_tokens}")
    manifest = tuple(
        ManifestEntry(el.kind, el.name, (el.lines[0], el.lines[-1]))
        for el in sorted(admitted.values(), key=lambda e: e.first)
    )
    return Skeleton(text=text, token_count=count, manifest=manifest,
                    focal_name=focal.qualified_name)
