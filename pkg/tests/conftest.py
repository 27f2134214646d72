import numpy as np
import pytest

from parconv import _accel, kernels

PATHS = ["numpy"] + (["jit"] if _accel.HAVE_NUMBA else [])


@pytest.fixture(params=PATHS)
def kernel_path(request, monkeypatch):
    """Run the test once per kernel implementation."""
    monkeypatch.setattr(kernels, "USE_JIT", request.param == "jit")
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def toy_dir(tmp_path_factory):
    from parconv.dataset import synthesize_toy_dataset

    out = tmp_path_factory.mktemp("toy")
    synthesize_toy_dataset(2, seed=3, out_dir=out)
    return out


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one ``PASS``/``FAIL`` line for an acceptance criterion."""

    def record(criterion, ok, detail):
        ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
