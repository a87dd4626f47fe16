import numpy as np
import pytest

from voxkit import ScalarField


def radial_distance_field(n: int, name: str = "dist") -> ScalarField:
    """Distance from the center of a [0,1]^3 domain, sampled at n^3 centers."""
    ax = (np.arange(n) + 0.5) / n
    dx = ax - 0.5
    r2 = (dx[:, None, None] ** 2 + dx[None, :, None] ** 2
          + dx[None, None, :] ** 2)
    return ScalarField(name, np.sqrt(r2), spacing=(1 / n,) * 3, origin=(0, 0, 0))


def random_field(rng, dims, lo=0.0, hi=1.0, name="rand") -> ScalarField:
    values = rng.uniform(lo, hi, size=dims)
    return ScalarField(name, values, spacing=(1.0, 1.0, 1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(20260808)


@pytest.fixture(scope="session")
def sphere_field_64():
    return radial_distance_field(64)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of the run."""
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if getattr(rep, "when", None) != "call":
                continue
            if "test_acceptance.py" in rep.nodeid:
                status = "PASS" if outcome == "passed" else "FAIL"
                lines.append(f"{status}  {rep.nodeid.split('::')[-1]}")
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(lines, key=lambda s: s.split()[-1]):
            terminalreporter.write_line(line)
