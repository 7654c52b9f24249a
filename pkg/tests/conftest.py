import numpy as np
import pytest

from impact_game.model import AgentParams, MarketParams, make_grid


def baseline_market(**kw):
    base = dict(a=0.01, b=0.01, T=1.0, drift=0.02, vol=0.2, s0=100.0)
    base.update(kw)
    return MarketParams(**base)


def baseline_agents():
    return [AgentParams(1.0, 1.0, 1.0), AgentParams(0.5, 0.5, 1.0), AgentParams(0.25, 0.25, 0.5)]


def ac_inventory(q0, b, beta, T, t):
    """Risk-neutral, driftless single-agent inventory."""
    return q0 * (b + beta * (T - t)) / (b + beta * T)


@pytest.fixture
def market():
    return baseline_market()


@pytest.fixture
def agents():
    return baseline_agents()


@pytest.fixture
def grid():
    return make_grid(1.0, 1000)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
