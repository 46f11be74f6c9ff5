import numpy as np
import pytest

from modfleet import Network, RebalancePromotion


def random_network(rng, n, lam_range=(0.5, 3.0), t_range=(0.2, 2.0)):
    """Dense random network: Dirichlet routing rows, uniform rates/times."""
    lam = rng.uniform(*lam_range, size=n)
    routing = np.zeros((n, n))
    for i in range(n):
        row = rng.dirichlet(np.ones(n - 1))
        routing[i, :i] = row[:i]
        routing[i, i + 1:] = row[i:]
    travel = rng.uniform(*t_range, size=(n, n))
    travel = (travel + travel.T) / 2.0
    np.fill_diagonal(travel, 0.0)
    return Network(lam=lam, P=routing, T=travel)


def random_promotion(rng, n, psi_max=2.0):
    psi = rng.uniform(0.0, psi_max, size=n)
    alpha = np.zeros((n, n))
    for i in range(n):
        row = rng.dirichlet(np.ones(n - 1))
        alpha[i, :i] = row[:i]
        alpha[i, i + 1:] = row[i:]
    return RebalancePromotion(psi=psi, alpha=alpha)


@pytest.fixture
def symmetric_two():
    return Network(lam=[1.0, 1.0], P=[[0.0, 1.0], [1.0, 0.0]],
                   T=[[0.0, 1.0], [1.0, 0.0]])


@pytest.fixture
def skewed_two():
    return Network(lam=[2.0, 1.0], P=[[0.0, 1.0], [1.0, 0.0]],
                   T=[[0.0, 1.0], [1.0, 0.0]])
