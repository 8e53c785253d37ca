"""Parsing and budgeted rendering of pytest long-form failure traces.

A frame in ``--tb=long --showlocals`` output looks like::

    self = <App ...>, x = 3

        def helper(self, x):
    >       return 1 / x
    E       ZeroDivisionError: division by zero

    self       = <App ...>
    x          = 0

    pkg/mod.py:8: ZeroDivisionError

Frames are separated by ``_ _ _ _`` rules; the innermost frame comes last.
"""

from __future__ import annotations

import re
from dataclasses import asdict, dataclass

from repairkit.errors import UnrecognizedTraceFormat
from repairkit.skeleton import BudgetTokenizer, count_tokens

MAX_VALUE_CHARS = 200
ELLIPSIS = "..."

_SEPARATOR_RE = re.compile(r"^(?:_ ){5,}_?\s*$")
_CHAIN_RE = re.compile(
    r"^(The above exception was the direct cause of the following exception:"
    r"|During handling of the above exception, another exception occurred:)\s*$"
)
_HEADER_RE = re.compile(r"^_{3,} .* _{3,}$")
_FOOTER_RE = re.compile(r"^(?P<path>[^\s:][^:]*?):(?P<line>\d+): ?(?P<name>.*?)\s*$")
_LOCAL_RE = re.compile(r"^(?P<name>[A-Za-z_@.][\w@.\[\]]*)\s*= (?P<value>.*)$")
_ARG_SPLIT_RE = re.compile(r", (?=[A-Za-z_]\w* = )")


@dataclass(frozen=True)
class Footer:
    file_path: str
    line_number: int
    error_name: str = ""

    def render(self) -> str:
        return f"{self.file_path}:{self.line_number}: {self.error_name}".rstrip() \
            if self.error_name else f"{self.file_path}:{self.line_number}: "


@dataclass(frozen=True)
class TraceFrame:
    input_vars: tuple[tuple[str, str], ...]
    head_lines: tuple[str, ...]
    error_lines: tuple[str, ...]
    local_vars: tuple[tuple[str, str], ...]
    footer: Footer

    @property
    def error_message(self) -> str:
        return "\n".join(line[1:].strip() for line in self.error_lines)

    @property
    def failing_line(self) -> str | None:
        for line in self.head_lines:
            if line.startswith(">"):
                return line[1:].strip()
        return None


@dataclass(frozen=True)
class ParsedTrace:
    frames: tuple[TraceFrame, ...]
    summary_line: str | None = None

    @property
    def error_name(self) -> str:
        return self.frames[-1].footer.error_name

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "ParsedTrace":
        frames = tuple(
            TraceFrame(
                input_vars=tuple(tuple(v) for v in f["input_vars"]),
                head_lines=tuple(f["head_lines"]),
                error_lines=tuple(f["error_lines"]),
                local_vars=tuple(tuple(v) for v in f["local_vars"]),
                footer=Footer(**f["footer"]),
            )
            for f in data["frames"]
        )
        return cls(frames, data.get("summary_line"))


@dataclass(frozen=True)
class TraceRenderConfig:
    budget_tokens: float = 896
    include_heads: bool = True
    include_locals: bool = True


def elide(value: str, limit: int = MAX_VALUE_CHARS) -> str:
    if len(value) <= limit:
        return value
    keep = limit - len(ELLIPSIS)
    head = keep // 2
    return value[:head] + ELLIPSIS + value[len(value) - (keep - head):]


def _join_continuations(lines: list[str]) -> list[str]:
    out: list[str] = []
    for line in lines:
        if line.startswith("...") and out:
            out[-1] = out[-1] + line[3:]
        else:
            out.append(line)
    return out


def _split_frames(lines: list[str]) -> list[list[str]]:
    chunks: list[list[str]] = [[]]
    for line in lines:
        if _SEPARATOR_RE.match(line) or _CHAIN_RE.match(line):
            chunks.append([])
        elif _HEADER_RE.match(line):
            continue
        elif line.startswith("====="):
            break
        else:
            chunks[-1].append(line)
    return [c for c in chunks if any(l.strip() for l in c)]


def _parse_vars(lines: list[str], split_args: bool) -> list[tuple[str, str]]:
    out: list[tuple[str, str]] = []
    for line in lines:
        pieces = _ARG_SPLIT_RE.split(line) if split_args else [line]
        for piece in pieces:
            m = _LOCAL_RE.match(piece)
            if m:
                out.append((m.group("name"), elide(m.group("value"))))
            elif out:
                # a value that wrapped onto its own line
                name, value = out[-1]
                out[-1] = (name, elide(value + "\n" + piece))
    return out


def _parse_frame(chunk: list[str]) -> TraceFrame | None:
    while chunk and not chunk[-1].strip():
        chunk = chunk[:-1]
    while chunk and not chunk[0].strip():
        chunk = chunk[1:]
    if not chunk:
        return None
    m = _FOOTER_RE.match(chunk[-1])
    if not m:
        return None
    footer = Footer(m.group("path"), int(m.group("line")), m.group("name"))
    body = chunk[:-1]

    # locate the source block: from the first indented or ">" line up to the
    # last ">" or "E" line
    marks = [i for i, l in enumerate(body) if l.startswith(">") or re.match(r"^E(\s|$)", l)]
    src_start = next(
        (i for i, l in enumerate(body) if l.startswith("    ") or l.startswith(">")), None
    )
    if src_start is None:
        src_start = marks[0] if marks else len(body)
    src_end = (marks[-1] + 1) if marks else src_start

    pre = [l for l in body[:src_start] if l.strip()]
    source = body[src_start:src_end]
    post = [l for l in body[src_end:] if l.strip()]

    head: list[str] = []
    errors: list[str] = []
    for line in source:
        if re.match(r"^E(\s|$)", line):
            errors.append(line.rstrip())
        elif errors:
            # pytest does not interleave source after E lines; keep as error text
            errors.append(line.rstrip())
        else:
            head.append(line.rstrip())
    while head and not head[-1].strip():
        head.pop()
    return TraceFrame(
        input_vars=tuple(_parse_vars(pre, split_args=True)),
        head_lines=tuple(head),
        error_lines=tuple(errors),
        local_vars=tuple(_parse_vars(post, split_args=False)),
        footer=footer,
    )


def parse_trace(raw: str) -> ParsedTrace:
    """Parse pytest ``--tb=long -l`` output into frames, outermost first."""
    lines = _join_continuations(raw.expandtabs(8).splitlines())
    frames = []
    for chunk in _split_frames(lines):
        frame = _parse_frame(chunk)
        if frame is not None:
            frames.append(frame)
    if not frames:
        raise UnrecognizedTraceFormat(raw, "no trace frame with a path:line footer found")
    last = frames[-1]
    summary = None
    if last.error_lines:
        summary = last.error_lines[0][1:].strip() or None
    return ParsedTrace(tuple(frames), summary)


# -- rendering ------------------------------------------------------------------

_SEPARATOR = "_ " * 39 + "_"


def _render_frame(frame: TraceFrame, sections: set[str]) -> list[str]:
    blocks: list[list[str]] = []
    if "inputs" in sections and frame.input_vars:
        blocks.append([f"{name} = {value}" for name, value in frame.input_vars])
    src: list[str] = []
    if "head" in sections:
        src.extend(frame.head_lines)
    if "errors" in sections:
        src.extend(frame.error_lines)
    if src:
        blocks.append(src)
    if "locals" in sections and frame.local_vars:
        blocks.append([f"{name:<10} = {value}" for name, value in frame.local_vars])
    if "footer" in sections:
        blocks.append([frame.footer.render()])
    out: list[str] = []
    for block in blocks:
        if out:
            out.append("")
        out.extend(block)
    return out


def _render(trace: ParsedTrace, chosen: dict[int, set[str]]) -> str:
    parts: list[list[str]] = []
    for i, frame in enumerate(trace.frames):
        if chosen.get(i):
            parts.append(_render_frame(frame, chosen[i]))
    out: list[str] = []
    for part in parts:
        if out:
            out.extend(["", _SEPARATOR, ""])
        out.extend(part)
    return "\n".join(out) + ("\n" if out else "")


def render_trace(trace: ParsedTrace, tokenizer: BudgetTokenizer | None = None,
                 cfg: TraceRenderConfig | None = None) -> str:
    """Render ``trace`` within ``cfg.budget_tokens``.

    Whole sections are dropped, outermost frames first, in this order of
    importance: the last frame's error and footer, other frames' errors and
    footers, source heads, then local and input variables. If even the last
    error and footer exceed the budget they are still returned.
    """
    tokenizer = tokenizer or BudgetTokenizer()
    cfg = cfg or TraceRenderConfig()
    n = len(trace.frames)
    last = n - 1
    chosen: dict[int, set[str]] = {last: {"errors", "footer"}}

    order: list[tuple[int, tuple[str, ...]]] = []
    for i in range(last - 1, -1, -1):
        order.append((i, ("errors", "footer")))
    if cfg.include_heads:
        for i in range(last, -1, -1):
            order.append((i, ("head",)))
    if cfg.include_locals:
        for i in range(last, -1, -1):
            order.append((i, ("locals",)))
        for i in range(last, -1, -1):
            order.append((i, ("inputs",)))

    for i, sections in order:
        if "footer" not in sections and "footer" not in chosen.get(i, ()):
            # a frame is only readable with its path:line footer
            continue
        trial = {k: set(v) for k, v in chosen.items()}
        trial.setdefault(i, set()).update(sections)
        if count_tokens(tokenizer, _render(trace, trial)) <= cfg.budget_tokens:
            chosen = trial
    return _render(trace, chosen)


def minimum_budget(trace: ParsedTrace, tokenizer: BudgetTokenizer | None = None) -> int:
    """Tokens needed for the innermost frame's error lines and footer alone."""
    tokenizer = tokenizer or BudgetTokenizer()
    return count_tokens(tokenizer, _render(trace, {len(trace.frames) - 1: {"errors", "footer"}}))
