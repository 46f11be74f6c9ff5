"""Synthesis of the optimal repositioning promotion.

Customer routing drains some stations and floods others; the per-station
imbalance is b_i = -lam_i + sum_j P[j][i] * lam_j (vehicles accumulate where
b_i > 0).  Shipping those imbalances over the travel-time metric at minimum
cost yields repositioning rates beta[i][j]; expressed as a virtual-demand
promotion (psi, alpha), any flow satisfying the balance equations equalizes
the relative utilizations across stations, and the minimum-cost flow does it
with the fewest vehicles on the road on average.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import jackson
from .errors import ValidationError
from .mincost import SUPPLY_SNAP, solve_transshipment
from .netmodel import Network, RebalancePromotion, build_abstract_net


@dataclass(frozen=True)
class FlowProblem:
    """Minimum-cost flow instance on the complete station digraph.

    costs  : travel-time matrix (positive off the diagonal).
    supply : per-station imbalance; sums to zero for any stochastic routing.
    """

    costs: np.ndarray
    supply: np.ndarray

    def __post_init__(self):
        costs = np.array(self.costs, dtype=float)
        supply = np.array(self.supply, dtype=float)
        n = supply.shape[0]
        if costs.shape != (n, n):
            raise ValidationError("cost matrix shape does not match supply")
        off = ~np.eye(n, dtype=bool)
        if np.any(costs[off] <= 0.0):
            raise ValidationError("costs must be positive off the diagonal")
        scale = max(1.0, float(np.max(np.abs(supply))))
        if abs(supply.sum()) > 1e-9 * scale:
            raise ValidationError(f"unbalanced supplies: sum {supply.sum():.3e}")
        supply = supply.copy()
        supply[np.abs(supply) < SUPPLY_SNAP] = 0.0
        costs.setflags(write=False)
        supply.setflags(write=False)
        object.__setattr__(self, "costs", costs)
        object.__setattr__(self, "supply", supply)

    @classmethod
    def from_network(cls, net: Network) -> "FlowProblem":
        supply = net.P.T @ net.lam - net.lam
        return cls(costs=net.T, supply=supply)

    @property
    def n_stations(self) -> int:
        return self.supply.shape[0]


def solve_min_cost_flow(prob: FlowProblem):
    """Optimal repositioning rates for a flow problem.

    Returns (beta, cost, potentials): beta[i][j] is the rate of empty
    vehicles sent i -> j, cost their expected number on the road, and the
    potentials certify optimality (pot[j] - pot[i] <= T[i][j] everywhere,
    tight on arcs with positive flow).
    """
    n = prob.n_stations
    arcs = [(i, j, float(prob.costs[i, j]))
            for i in range(n) for j in range(n) if i != j]
    res = solve_transshipment(n, arcs, prob.supply)
    beta = np.zeros((n, n))
    for k, (i, j, _) in enumerate(arcs):
        beta[i, j] = res.flows[k]
    return beta, res.cost, res.potentials


@dataclass(frozen=True)
class RebalancePlan:
    """Repositioning rates plus their promotion form.

    beta[i][j] : empty-vehicle rate i -> j, zero diagonal.
    cost       : sum of T[i][j] * beta[i][j], the mean number of
                 repositioning vehicles on the road.
    promotion  : equivalent virtual-demand layer; rows of alpha with no
                 outgoing flow fall back to the uniform distribution.
    """

    beta: np.ndarray
    cost: float
    promotion: RebalancePromotion

    def __post_init__(self):
        beta = np.array(self.beta, dtype=float)
        if np.any(beta < 0.0) or np.any(np.abs(np.diagonal(beta)) > 0.0):
            raise ValidationError("beta must be nonnegative with zero diagonal")
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)

    def to_json(self) -> dict:
        return {
            "schema": 1,
            "beta": self.beta.tolist(),
            "psi": self.promotion.psi.tolist(),
            "alpha": self.promotion.alpha.tolist(),
            "cost": self.cost,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "RebalancePlan":
        promo = RebalancePromotion(psi=np.asarray(doc["psi"]),
                                   alpha=np.asarray(doc["alpha"]))
        return cls(beta=np.asarray(doc["beta"]), cost=float(doc["cost"]),
                   promotion=promo)


def plan_from_flow(net: Network, beta: np.ndarray) -> RebalancePlan:
    """Convert a conserving flow into a promotion-form plan.

    psi_i is station i's total outgoing rate; alpha_i splits it in
    proportion to the flows.  Stations that send nothing get the uniform
    off-diagonal row, which keeps alpha stochastic without generating trips.
    """
    n = net.n_stations
    beta = np.asarray(beta, dtype=float)
    flow_balance = beta.sum(axis=1) - beta.sum(axis=0)
    target = net.P.T @ net.lam - net.lam
    if np.max(np.abs(flow_balance - target)) > 1e-9 * max(1.0, np.max(net.lam)):
        raise ValidationError("flow does not conserve the demand imbalance")
    psi = beta.sum(axis=1)
    alpha = np.zeros((n, n))
    for i in range(n):
        if psi[i] > 0.0:
            alpha[i] = beta[i] / psi[i]
            alpha[i, i] = 0.0
        else:
            alpha[i] = 1.0 / (n - 1)
            alpha[i, i] = 0.0
    cost = float(np.sum(net.T * beta))
    return RebalancePlan(beta=beta, cost=cost,
                         promotion=RebalancePromotion(psi=psi, alpha=alpha))


def solve_rebalancing(net: Network) -> RebalancePlan:
    """End to end: imbalance -> optimal flow -> promotion-form plan."""
    beta, _, _ = solve_min_cost_flow(FlowProblem.from_network(net))
    return plan_from_flow(net, beta)


def verify_balance(net: Network, plan: RebalancePlan) -> float:
    """Spread of the relative utilizations under a plan's promotion.

    Builds the promoted network, solves its traffic equations, and returns
    max(gamma) - min(gamma) after scaling the vector to a unit maximum.  A
    conserving plan drives the spread to numerical noise.
    """
    qnet = build_abstract_net(net, plan.promotion)
    pi = jackson.solve_throughputs(qnet)
    gamma = pi.stations / qnet.eff_lambda
    gamma = gamma / gamma.max()
    return float(gamma.max() - gamma.min())
