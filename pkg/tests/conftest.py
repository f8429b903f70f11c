import numpy as np
import pytest

from mechlab import kernels

BACKENDS = ["numpy"] + (["numba"] if kernels.numba_backend is not None else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def direct_circular_convolution(a, b):
    """O(N^2 M^2) convolution straight from the definition."""
    R, C = a.shape
    out = np.zeros((R, C), dtype=np.result_type(a, b))
    for n in range(R):
        for m in range(C):
            s = 0
            for k in range(R):
                for j in range(C):
                    s += a[k, j] * b[(n - k) % R, (m - j) % C]
            out[n, m] = s
    return out


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record and print one PASS/FAIL line for an acceptance criterion."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
