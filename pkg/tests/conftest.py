"""Shared fixtures and the acceptance report hook.

Acceptance tests call record_acceptance() with one line per criterion; the
collected lines are echoed in the terminal summary so a plain `pytest -v`
run shows every PASS/FAIL verdict even though stdout is captured.
"""

from __future__ import annotations

import dataclasses

import pytest
from hypothesis import settings

from sddlab.core import load_catalog, load_instance

settings.register_profile("suite", deadline=None, max_examples=50, derandomize=True)
settings.load_profile("suite")

_ACCEPTANCE_LINES: list[str] = []


def record_acceptance(line: str) -> None:
    _ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for line in _ACCEPTANCE_LINES:
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def catalog():
    return load_catalog()


@pytest.fixture(scope="session")
def inst0():
    return load_instance(0)


def make_instance(base=None, **overrides):
    """Variant of a catalog instance with selected fields replaced."""
    if base is None:
        base = load_instance(0)
    return dataclasses.replace(base, **overrides)
