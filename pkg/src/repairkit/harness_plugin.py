"""pytest plugin loaded by the harness with ``-p repairkit.harness_plugin``.

It appends one JSON object per line to the file named by ``REPAIRKIT_REPORT``:
``collected`` once, then ``start`` and ``result`` for every test. Lines are
flushed immediately so a killed run still leaves a usable prefix.

``REPAIRKIT_COVERAGE_ROOT`` turns on line tracing (call phase only) for files
under that directory; ``REPAIRKIT_TEST_TIMEOUT`` arms a per-test alarm.
"""

from __future__ import annotations

import json
import os
import signal
import sys
import threading
import time

import pytest

_EXCLUDED_PARTS = ("site-packages", "dist-packages", os.sep + ".venv" + os.sep)


class PerTestTimeout(BaseException):
    """Raised inside a test that overran ``REPAIRKIT_TEST_TIMEOUT``."""


class _Reporter:
    def __init__(self, path: str):
        self.fh = open(path, "a", encoding="utf-8")
        self.root = os.environ.get("REPAIRKIT_COVERAGE_ROOT") or None
        if self.root:
            self.root = os.path.realpath(self.root) + os.sep
        timeout = os.environ.get("REPAIRKIT_TEST_TIMEOUT")
        self.timeout = float(timeout) if timeout else None
        self.phases: dict[str, dict] = {}
        self.lines: dict[str, set[int]] = {}
        self.started: dict[str, float] = {}
        self._known: dict[str, str | None] = {}

    def emit(self, record: dict) -> None:
        self.fh.write(json.dumps(record) + "\n")
        self.fh.flush()

    # -- coverage

    def _relative(self, filename: str) -> str | None:
        hit = self._known.get(filename, "")
        if hit != "":
            return hit
        rel = None
        real = "" if filename.startswith("<") else os.path.realpath(filename)
        if real and real.startswith(self.root) and not any(p in real for p in _EXCLUDED_PARTS):
            rel = real[len(self.root):].replace(os.sep, "/")
        self._known[filename] = rel
        return rel

    def _global_tracer(self, frame, event, arg):
        rel = self._relative(frame.f_code.co_filename)
        if rel is None:
            return None
        hits = self.lines.setdefault(rel, set())

        def local(frame, event, arg):
            if event == "line":
                hits.add(frame.f_lineno)
            return local

        if event == "call":
            hits.add(frame.f_lineno)
        return local

    def start_trace(self) -> None:
        if self.root:
            threading.settrace(self._global_tracer)
            sys.settrace(self._global_tracer)

    def stop_trace(self) -> None:
        if self.root:
            sys.settrace(None)
            threading.settrace(None)


_reporter: _Reporter | None = None


def pytest_configure(config):
    global _reporter
    path = os.environ.get("REPAIRKIT_REPORT")
    if path and _reporter is None:
        _reporter = _Reporter(path)


def pytest_collection_finish(session):
    if _reporter is not None:
        _reporter.emit({"event": "collected", "ids": [item.nodeid for item in session.items]})


def pytest_runtest_logstart(nodeid, location):
    if _reporter is not None:
        _reporter.started[nodeid] = time.monotonic()
        _reporter.lines = {}
        _reporter.phases[nodeid] = {}
        _reporter.emit({"event": "start", "id": nodeid})


def _alarm(signum, frame):
    raise PerTestTimeout(f"test exceeded {_reporter.timeout} s")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_call(item):
    rep = _reporter
    armed = False
    if rep is not None and rep.timeout and hasattr(signal, "setitimer"):
        signal.signal(signal.SIGALRM, _alarm)
        signal.setitimer(signal.ITIMER_REAL, rep.timeout)
        armed = True
    if rep is not None:
        rep.start_trace()
    try:
        yield
    finally:
        if rep is not None:
            rep.stop_trace()
        if armed:
            signal.setitimer(signal.ITIMER_REAL, 0)


def pytest_runtest_logreport(report):
    if _reporter is not None:
        _reporter.phases.setdefault(report.nodeid, {})[report.when] = report


def _outcome(phases: dict) -> tuple[str, str]:
    traces = []
    outcome = "pass"
    for when in ("setup", "call", "teardown"):
        rep = phases.get(when)
        if rep is None or not rep.failed:
            continue
        text = rep.longreprtext or ""
        traces.append(text)
        if "PerTestTimeout" in text and when == "call":
            outcome = "timeout"
        elif outcome == "pass":
            outcome = "fail" if when == "call" else "error"
    return outcome, "\n".join(traces)


def pytest_runtest_logfinish(nodeid, location):
    rep = _reporter
    if rep is None:
        return
    outcome, trace = _outcome(rep.phases.pop(nodeid, {}))
    rep.emit({
        "event": "result",
        "id": nodeid,
        "outcome": outcome,
        "duration": time.monotonic() - rep.started.pop(nodeid, time.monotonic()),
        "trace": trace,
        "lines": {k: sorted(v) for k, v in rep.lines.items()} if rep.root else None,
    })
    rep.lines = {}


def pytest_unconfigure(config):
    global _reporter
    if _reporter is not None:
        _reporter.fh.close()
        _reporter = None
