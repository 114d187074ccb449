import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def circ_tprod(a, b):
    """Tube-wise circular convolution, straight from the definition (O(n3^2))."""
    n1, n2, n3 = a.shape
    n4 = b.shape[1]
    out = np.zeros((n1, n4, n3))
    for i in range(n1):
        for j in range(n4):
            for l in range(n2):
                for k in range(n3):
                    for m in range(n3):
                        out[i, j, k] += a[i, l, m] * b[l, j, (k - m) % n3]
    return out


def fd_grad(f, x, h=1e-6):
    """Central finite differences of a scalar function over every entry of ``x``."""
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + h
        fp = f(x)
        x[idx] = old - h
        fm = f(x)
        x[idx] = old
        g[idx] = (fp - fm) / (2 * h)
    return g


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12))


ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one acceptance line; printed together at the end of the run."""
    def _add(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return _add


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
