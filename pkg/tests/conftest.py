import numpy as np
import pytest
from scipy import optimize, stats

# two-state chain in dB: level per state, unit Gaussian jitter
MARKOV_LEVELS = np.array([10.0, 20.0])
MARKOV_P = np.array([[0.95, 0.05], [0.2, 0.8]])


def markov_chain_db(n, seed=0, levels=MARKOV_LEVELS, P=MARKOV_P, jitter=1.0):
    rng = np.random.default_rng(seed)
    s = np.empty(n, dtype=int)
    s[0] = 0
    u = rng.random(n)
    for t in range(1, n):
        s[t] = int(u[t] > P[s[t - 1], 0])
    return levels[s] + jitter * rng.standard_normal(n), s


def markov_next_cdf(state, x, levels=MARKOV_LEVELS, P=MARKOV_P, jitter=1.0):
    return float(sum(P[state, j] * stats.norm.cdf(x, levels[j], jitter) for j in range(2)))


def markov_next_quantile(state, p, **kw):
    return optimize.brentq(lambda x: markov_next_cdf(state, x, **kw) - p, -50, 80)


def markov_next_mean(state, levels=MARKOV_LEVELS, P=MARKOV_P):
    return float(P[state] @ levels)


@pytest.fixture(scope="session")
def markov_data():
    return markov_chain_db(50_000, seed=42)


_ACCEPTANCE_LINES = []


def record_acceptance(line: str):
    _ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
