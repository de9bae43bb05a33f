import numpy as np
import pytest

ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, name: str, ok: bool, detail: str = "") -> None:
    line = f"criterion {number:2d} [{'PASS' if ok else 'FAIL'}] {name}"
    if detail:
        line += f" :: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def dft_oracle(x):
    """Quadratic-time unitary DFT with the ``exp(-2 pi i j k / d)`` analysis sign."""
    x = np.asarray(x, dtype=complex)
    d = x.shape[0]
    out = np.empty(d, dtype=complex)
    for j in range(d):
        acc = 0j
        for k in range(d):
            acc += x[k] * complex(np.cos(2 * np.pi * j * k / d), -np.sin(2 * np.pi * j * k / d))
        out[j] = acc / np.sqrt(d)
    return out


def brute_coarray(elements, d=None):
    """Set of differences by a double loop; cyclic when ``d`` is given."""
    out = set()
    for i in elements:
        for j in elements:
            if d is None:
                if i >= j:
                    out.add(i - j)
            else:
                out.add((i - j) % d)
    return out
