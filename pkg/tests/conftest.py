import pytest

from leo_gfra.config import SystemConfig


@pytest.fixture
def small_cfg():
    return SystemConfig(U=2, Q=2, M=4, N=3, N_y=2, N_z=2, P=2, M_cp=8,
                        delay_range=(0.0, 4e-4), doppler_range=(-2e3, 2e3), sigma2=0.0)


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Record one summary line per acceptance criterion; shown at the end of the run."""
    def record(number, title, passed, detail, seconds=None):
        t = "" if seconds is None else f"  [{seconds:.1f} s]"
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {title}: {detail}{t}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
