from __future__ import annotations

import numpy as np
import pytest

_ACCEPTANCE: list[tuple[int, str, bool, str]] = []


class AcceptanceLog:
    def check(self, number: int, title: str, ok: bool, detail: str) -> None:
        _ACCEPTANCE.append((number, title, bool(ok), detail))
        print(f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}")
        assert ok, f"criterion {number} ({title}) failed: {detail}"


@pytest.fixture
def acceptance() -> AcceptanceLog:
    return AcceptanceLog()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, detail in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"criterion {number} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
