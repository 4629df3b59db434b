import itertools

import numpy as np
import pytest

from tempora.rbm import RbmParams, UnitKind
from tempora.rng import RngStream


def brute_joint(rbm: RbmParams):
    """(v, h, prob) for every binary state, via itertools rather than the library."""
    n, m = rbm.weights.shape
    states = []
    for v in itertools.product((0.0, 1.0), repeat=n):
        for h in itertools.product((0.0, 1.0), repeat=m):
            v_, h_ = np.array(v), np.array(h)
            neg_e = v_ @ rbm.weights @ h_ + v_ @ rbm.visible_bias + h_ @ rbm.hidden_bias
            states.append((v_, h_, np.exp(neg_e)))
    z = sum(s[2] for s in states)
    return [(v, h, w / z) for v, h, w in states], z


def brute_loglik(rbm: RbmParams, data) -> float:
    joint, _ = brute_joint(rbm)
    total = 0.0
    for row in np.atleast_2d(data):
        total += np.log(sum(p for v, _, p in joint if np.array_equal(v, row)))
    return total / len(np.atleast_2d(data))


@pytest.fixture
def random_binary():
    def make(n, m, seed=0, scale=1.0):
        r = RngStream(seed, 99)
        return RbmParams(r.normal((n, m)) * scale, r.normal(n) * scale, r.normal(m) * scale,
                         UnitKind.BINARY)
    return make


# --- acceptance summary ------------------------------------------------------

ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def verdict(request):
    """Record one pass/fail line for a numbered criterion, then assert it."""
    lines = request.config.stash.setdefault(ACCEPTANCE, {})

    def record(number: int, passed: bool, detail: str):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        lines[number] = line
        print(line)
        assert passed, line
    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
