import numpy as np
import pytest

ACCEPTANCE_KEY = pytest.StashKey[list]()


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def triple_loop_matmul(a, b):
    rows, inner = a.shape
    cols = b.shape[1]
    out = np.zeros((rows, cols), dtype=complex)
    for i in range(rows):
        for j in range(cols):
            acc = 0j
            for k in range(inner):
                acc += a[i, k] * b[k, j]
            out[i, j] = acc
    return out


def sliding_window_conv(x, w, b, stride, padding):
    batch, cin, length = x.shape
    cout, _, kernel = w.shape
    xp = np.zeros((batch, cin, length + 2 * padding))
    xp[:, :, padding:padding + length] = x
    out_len = (length + 2 * padding - kernel) // stride + 1
    out = np.zeros((batch, cout, out_len))
    for n in range(batch):
        for o in range(cout):
            for t in range(out_len):
                acc = b[o]
                for c in range(cin):
                    for k in range(kernel):
                        acc += w[o, c, k] * xp[n, c, t * stride + k]
                out[n, o, t] = acc
    return out


@pytest.fixture(scope="session")
def acceptance_log(pytestconfig):
    return pytestconfig.stash.setdefault(ACCEPTANCE_KEY, [])


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
