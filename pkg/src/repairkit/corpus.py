"""Mining bug-fix method pairs from version-control history."""

from __future__ import annotations

import json
import logging
import re
import subprocess
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Iterator, Mapping

from repairkit import lexer
from repairkit.errors import Ambiguous, ParseFailure, RepairKitError
from repairkit.structure import find_function, index_file

logger = logging.getLogger(__name__)

STR_LIT = "STR_LIT"
NUM_LIT = "NUM_LIT"

_INNER_SPACE = re.compile(r"[ \t\f]+")


@dataclass(frozen=True)
class CommitRef:
    repo_id: str
    commit_hash: str
    message: str
    parent_hash: str

    def __post_init__(self) -> None:
        if not self.commit_hash or not self.parent_hash:
            raise ValueError("commit and parent hashes must be non-empty")
        if self.commit_hash == self.parent_hash:
            raise ValueError("commit hash equals its parent hash")


@dataclass(frozen=True)
class MethodRecord:
    repo_id: str
    file_path: str
    qualified_name: str
    line_span: tuple[int, int]
    source: str
    normalized: str

    @classmethod
    def from_source(cls, source: str, *, repo_id: str = "", file_path: str = "",
                    qualified_name: str = "", line_span: tuple[int, int] | None = None
                    ) -> "MethodRecord":
        if not source.strip():
            raise ValueError("method source is empty")
        if line_span is None:
            line_span = (1, max(1, len(source.splitlines())))
        return cls(repo_id, file_path, qualified_name, line_span, source, normalize(source))


@dataclass(frozen=True)
class MethodEditPair:
    before: MethodRecord
    after: MethodRecord
    commit: CommitRef

    def to_json(self) -> dict:
        return {
            "repo_id": self.commit.repo_id,
            "commit": self.commit.commit_hash,
            "path": self.after.file_path,
            "name": self.after.qualified_name,
            "before": self.before.source,
            "after": self.after.source,
            "before_normalized": self.before.normalized,
            "after_normalized": self.after.normalized,
        }


def filter_fix_commits(commits: Iterable[CommitRef]) -> Iterator[CommitRef]:
    """Keep commits whose message mentions "fix" anywhere, ignoring case."""
    for commit in commits:
        if "fix" in commit.message.lower():
            yield commit


def normalize(source: str) -> str:
    """Strip comments, abstract literals and standardize whitespace.

    String literals (docstrings included) become ``STR_LIT`` and numeric
    literals ``NUM_LIT``. Indentation is kept, other runs of blanks collapse to
    one space, trailing whitespace is dropped and consecutive blank lines are
    merged. Raises :class:`UnterminatedLiteral` for a string that never closes.
    """
    parts: list[str] = []
    for tok in lexer.iter_tokens(source):
        if tok.kind == lexer.COMMENT:
            continue
        if tok.kind == lexer.STRING:
            parts.append(STR_LIT)
        elif tok.kind == lexer.NUMBER:
            parts.append(NUM_LIT)
        elif tok.kind == lexer.NEWLINE:
            parts.append("\n")
        else:
            parts.append(tok.text)
    out: list[str] = []
    for line in "".join(parts).split("\n"):
        stripped = line.strip()
        if not stripped:
            if out and out[-1] != "":
                out.append("")
            continue
        indent = line[: len(line) - len(line.lstrip(" \t\f"))]
        out.append(indent + _INNER_SPACE.sub(" ", stripped))
    while out and out[-1] == "":
        out.pop()
    return "\n".join(out)


def _records(tree: Mapping[str, str], path: str, repo_id: str,
             failures: list[ParseFailure] | None) -> dict[str, MethodRecord] | None:
    source = tree[path]
    try:
        index = index_file(source, path)
    except (ParseFailure, IndentationError) as exc:
        failure = exc if isinstance(exc, ParseFailure) else ParseFailure(
            str(exc.msg), exc.lineno, path)
        if failures is not None:
            failures.append(failure)
        logger.warning("skipping %s: %s", path, exc)
        return None
    records: dict[str, MethodRecord] = {}
    for func in index.all_functions():
        try:
            find_function(index, func.qualified_name)
        except Ambiguous:
            continue
        text = index.source_of(func)
        try:
            records[func.qualified_name] = MethodRecord.from_source(
                text, repo_id=repo_id, file_path=path,
                qualified_name=func.qualified_name, line_span=func.span)
        except RepairKitError as exc:
            logger.warning("skipping %s:%s: %s", path, func.qualified_name, exc)
    return records


def extract_edit_pairs(commit: CommitRef, before_tree: Mapping[str, str],
                       after_tree: Mapping[str, str],
                       failures: list[ParseFailure] | None = None) -> list[MethodEditPair]:
    """Pair up functions edited non-trivially by ``commit``.

    Functions are matched by ``(file path, qualified name)``; files present in
    only one tree, and functions present on only one side, are ignored. Files
    that fail to parse are appended to ``failures`` and skipped.
    """
    pairs: list[MethodEditPair] = []
    for path in sorted(set(before_tree) & set(after_tree)):
        if before_tree[path] == after_tree[path]:
            continue
        before = _records(before_tree, path, commit.repo_id, failures)
        after = _records(after_tree, path, commit.repo_id, failures)
        if before is None or after is None:
            continue
        for name, old in before.items():
            new = after.get(name)
            if new is not None and old.normalized != new.normalized:
                pairs.append(MethodEditPair(old, new, commit))
    return pairs


# -- git plumbing ----------------------------------------------------------

def _git(repo: Path, *args: str) -> str:
    proc = subprocess.run(
        ["git", "-C", str(repo), *args], capture_output=True, text=True,
        encoding="utf-8", errors="replace",
    )
    if proc.returncode != 0:
        raise RepairKitError(f"git {' '.join(args)} failed: {proc.stderr.strip()}")
    return proc.stdout


def iter_commits(repo: Path, repo_id: str | None = None, rev: str = "HEAD") -> Iterator[CommitRef]:
    """First-parent history of ``rev``, oldest first; root commits are skipped."""
    repo_id = repo_id or repo.resolve().name
    out = _git(repo, "log", "--first-parent", "--reverse", "--format=%H%x00%P%x00%B%x1e", rev)
    for entry in out.split("\x1e"):
        entry = entry.strip("\n")
        if not entry:
            continue
        commit_hash, parents, message = entry.split("\x00", 2)
        parents = parents.split()
        if not parents:
            continue
        yield CommitRef(repo_id, commit_hash, message.strip(), parents[0])


def _changed_python_files(repo: Path, commit: CommitRef) -> list[str]:
    out = _git(repo, "diff", "--name-only", "--no-renames", commit.parent_hash,
               commit.commit_hash, "--", "*.py")
    return [line for line in out.splitlines() if line]


def _file_at(repo: Path, rev: str, path: str) -> str | None:
    proc = subprocess.run(
        ["git", "-C", str(repo), "show", f"{rev}:{path}"], capture_output=True,
        text=True, encoding="utf-8", errors="replace",
    )
    return proc.stdout if proc.returncode == 0 else None


def mine_repository(repo: Path, repo_id: str | None = None) -> Iterator[MethodEditPair]:
    for commit in filter_fix_commits(iter_commits(repo, repo_id)):
        before: dict[str, str] = {}
        after: dict[str, str] = {}
        for path in _changed_python_files(repo, commit):
            old = _file_at(repo, commit.parent_hash, path)
            new = _file_at(repo, commit.commit_hash, path)
            if old is not None and new is not None:
                before[path] = old
                after[path] = new
        yield from extract_edit_pairs(commit, before, after)


def write_pairs(pairs: Iterable[MethodEditPair], out: IO[str]) -> int:
    count = 0
    for pair in pairs:
        out.write(json.dumps(pair.to_json(), ensure_ascii=False) + "\n")
        count += 1
    return count
