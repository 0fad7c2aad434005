import numpy as np
import pytest

from homquant import scenarios as examples


@pytest.fixture
def rng():
    return np.random.default_rng(20241016)


@pytest.fixture(scope="session")
def chain_plant():
    return examples.chain_plant()


@pytest.fixture(scope="session")
def published_dilation():
    return examples.published_dilation()


@pytest.fixture(scope="session")
def chain_certificate():
    """Self-synthesized certificate for the 3-state chain at delta = 0.4."""
    return examples.synthesize_chain_certificate()


_CRITERIA = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_CRITERIA] = {}


@pytest.fixture
def record_criterion(request):
    """Store a one-line verdict for an acceptance criterion; printed in the terminal summary."""
    store = request.config.stash[_CRITERIA]

    def record(number, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {detail}"
        store[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    store = config.stash.get(_CRITERIA, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(store):
        terminalreporter.write_line(store[number])
