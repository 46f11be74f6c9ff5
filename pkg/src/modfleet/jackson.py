"""Closed-network analytics: traffic equations, product-form oracle, MVA.

The network population is the vehicle fleet.  Relative throughputs solve the
station-level traffic equations (road nodes fold away because each road has a
single feeder station and forwards to a single destination).  Two independent
evaluators compute fleet-size-dependent metrics:

* ``oracle_metrics`` sums the product-form stationary distribution through
  its normalization constants (a per-node convolution, with a literal
  state-space enumeration kept as a cross-check for tiny networks);
* ``mva_metrics`` runs the mean-value recursion, which never forms the
  normalization constant and scales to large fleets.

Per-station availability is the probability the station holds at least one
idle vehicle; it equals station throughput divided by its demand rate.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from math import comb
from typing import Optional

import numpy as np

from .errors import ConvergenceError, ValidationError
from .netmodel import AbstractQueueNet

# Refuse the explicit product-form evaluation beyond this many states.
ORACLE_STATE_GUARD = 10 ** 7


@dataclass(frozen=True)
class Throughputs:
    """Relative throughputs of all nodes, stations first.

    The solution of the traffic equations is only determined up to a positive
    factor; the convention here scales the largest station entry to 1.  Road
    entries equal the feeder station's throughput times the routing weight.
    """

    pi: np.ndarray
    n_stations: int

    def __post_init__(self):
        arr = np.array(self.pi, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "pi", arr)

    @property
    def stations(self) -> np.ndarray:
        return self.pi[: self.n_stations]

    def road_matrix(self) -> np.ndarray:
        """Road throughputs as an (n, n) matrix with zero diagonal."""
        n = self.n_stations
        out = np.zeros((n, n))
        k = n
        for i in range(n):
            for j in range(n):
                if i != j:
                    out[i, j] = self.pi[k]
                    k += 1
        return out


def solve_throughputs(
    qnet: AbstractQueueNet, tol: float = 1e-12, max_iter: int = 10 ** 6
) -> Throughputs:
    """Solve the station-level traffic equations by damped power iteration.

    Iterates x <- (x + x @ eff_p) / 2; the averaging step removes
    periodicity (a bare power step oscillates on cyclic routing) without
    changing the fixed point.  Converges when the max-norm change drops
    below ``tol``.
    """
    p = qnet.eff_p
    n = qnet.n_stations
    x = np.full(n, 1.0 / n)
    for it in range(max_iter):
        x_new = 0.5 * (x + x @ p)
        x_new /= x_new.sum()
        delta = np.max(np.abs(x_new - x))
        x = x_new
        if delta < tol:
            break
    else:
        residual = np.max(np.abs(x @ p - x))
        raise ConvergenceError(
            f"traffic equations did not converge in {max_iter} iterations "
            f"(last step change {delta:.3e}, residual {residual:.3e})"
        )
    x = x / x.max()
    pi = np.empty(qnet.n_nodes)
    pi[:n] = x
    for idx in range(n, qnet.n_nodes):
        nd = qnet.nodes[idx]
        pi[idx] = x[nd.parent] * p[nd.parent, nd.child]
    return Throughputs(pi=pi, n_stations=n)


@dataclass(frozen=True)
class PerfReport:
    """Steady-state metrics for a given fleet size.

    A      : per-station availability in [0, 1].
    Lambda : per-station served demand rate.
    L, W   : mean queue length and mean sojourn time per node (stations
             first, then road nodes in index order).
    gamma  : per-station relative utilization (throughput / demand rate).
    """

    m: int
    A: np.ndarray
    Lambda: np.ndarray
    L: np.ndarray
    W: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        for name in ("A", "Lambda", "L", "W", "gamma"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        total = float(self.L.sum())
        if abs(total - self.m) > 1e-9 * max(1.0, self.m):
            raise AssertionError(
                f"queue lengths sum to {total}, expected fleet size {self.m}"
            )

    @property
    def n_stations(self) -> int:
        return self.A.shape[0]

    def to_json(self, station_ids=None) -> dict:
        ids = list(station_ids) if station_ids else list(range(self.n_stations))
        ids = [str(s) for s in ids]
        n = self.n_stations
        return {
            "schema": 1,
            "fleet": self.m,
            "stations": ids,
            "availability": dict(zip(ids, self.A.tolist())),
            "throughput": dict(zip(ids, self.Lambda.tolist())),
            "gamma": dict(zip(ids, self.gamma.tolist())),
            "queue_length": dict(zip(ids, self.L[:n].tolist())),
            "wait": dict(zip(ids, self.W[:n].tolist())),
        }

    def to_csv(self, station_ids=None) -> str:
        ids = list(station_ids) if station_ids else list(range(self.n_stations))
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["station", "availability", "throughput", "gamma",
                    "queue_length", "wait"])
        for k, sid in enumerate(ids):
            w.writerow([sid, f"{self.A[k]:.10g}", f"{self.Lambda[k]:.10g}",
                        f"{self.gamma[k]:.10g}", f"{self.L[k]:.10g}",
                        f"{self.W[k]:.10g}"])
        return buf.getvalue()


def _checked_availability(raw: np.ndarray) -> np.ndarray:
    """Clamp availabilities into [0, 1] after confirming they are within
    numerical noise of the range; clamping must never paper over a bug."""
    if np.any(raw < -1e-9) or np.any(raw > 1.0 + 1e-9):
        raise AssertionError(f"availability outside [0,1] beyond tolerance: {raw}")
    return np.clip(raw, 0.0, 1.0)


def _service_factors(qnet: AbstractQueueNet, pi: np.ndarray, m: int) -> np.ndarray:
    """Per-node product-form factors f[i][x] for x = 0..m.

    f[i][x] = pi_i^x / prod_{k=1..x} mu_i(k), with mu growing linearly in
    the occupancy for unbounded road nodes and saturating at the server
    count otherwise (stations are the single-server case).
    """
    nn = qnet.n_nodes
    f = np.zeros((nn, m + 1))
    f[:, 0] = 1.0
    servers = qnet.server_counts()
    rates = qnet.service_rates()
    for i in range(nn):
        for x in range(1, m + 1):
            active = x if np.isinf(servers[i]) else min(x, servers[i])
            f[i, x] = f[i, x - 1] * pi[i] / (rates[i] * active)
    return f


def _convolve_g(factors: np.ndarray, m: int, skip: int = -1) -> np.ndarray:
    """Normalization constants G(0..m) over all nodes except ``skip``."""
    g = np.zeros(m + 1)
    g[0] = 1.0
    for i in range(factors.shape[0]):
        if i == skip:
            continue
        new = np.zeros(m + 1)
        for tot in range(m + 1):
            new[tot] = np.dot(factors[i, : tot + 1], g[tot::-1])
        g = new
    return g


def normalization_by_enumeration(qnet: AbstractQueueNet, pi: np.ndarray,
                                 m: int) -> np.ndarray:
    """G(0..m) by literal summation over every population split.

    Exponentially expensive; kept as an independent cross-check of the
    convolution for networks of at most 6 nodes and fleets of at most 4.
    """
    nn = qnet.n_nodes
    if nn > 6 or m > 4:
        raise ValidationError("literal enumeration limited to 6 nodes, fleet 4")
    factors = _service_factors(qnet, pi, m)

    def splits(total, parts):
        if parts == 1:
            yield (total,)
            return
        for first in range(total + 1):
            for rest in splits(total - first, parts - 1):
                yield (first,) + rest

    g = np.zeros(m + 1)
    for k in range(m + 1):
        acc = 0.0
        for state in splits(k, nn):
            term = 1.0
            for i, x in enumerate(state):
                term *= factors[i, x]
            acc += term
        g[k] = acc
    return g


def oracle_metrics(qnet: AbstractQueueNet, pi: Throughputs, m: int) -> PerfReport:
    """Exact metrics from the product-form stationary distribution.

    Availability and throughput come from the ratio G(m-1)/G(m); queue
    lengths come from exact marginals, each of which needs the normalization
    constant of the network with that node removed.  Only viable for small
    state spaces; large cases must use ``mva_metrics``.
    """
    if m < 0:
        raise ValidationError("fleet size must be nonnegative")
    nn = qnet.n_nodes
    n = qnet.n_stations
    if comb(m + nn - 1, m) > ORACLE_STATE_GUARD:
        raise ValidationError(
            f"state space of {comb(m + nn - 1, m)} exceeds the oracle guard; "
            "use MVA"
        )
    pvec = pi.pi
    gamma = pvec[:n] / qnet.eff_lambda
    if m == 0:
        zero_n = np.zeros(n)
        zero_nn = np.zeros(nn)
        return PerfReport(m=0, A=zero_n, Lambda=zero_n, L=zero_nn, W=zero_nn,
                          gamma=gamma)

    factors = _service_factors(qnet, pvec, m)
    g = _convolve_g(factors, m)
    ratio = g[m - 1] / g[m]

    lam_node = pvec * ratio  # actual node throughputs
    big_l = np.zeros(nn)
    for i in range(nn):
        g_wo = _convolve_g(factors, m, skip=i)
        occ = np.arange(m + 1)
        big_l[i] = np.dot(occ * factors[i], g_wo[::-1]) / g[m]
    big_w = np.divide(big_l, lam_node, out=np.zeros(nn),
                      where=lam_node > 0.0)
    avail = _checked_availability(gamma * ratio)
    return PerfReport(m=m, A=avail, Lambda=lam_node[:n], L=big_l, W=big_w,
                      gamma=gamma)


def mva_metrics(qnet: AbstractQueueNet, pi: Throughputs, m: int) -> PerfReport:
    """Mean-value recursion over fleet sizes 1..m.

    Road nodes are pure delays (sojourn = travel time).  Station sojourn at
    population k is (1 + L(k-1)) service times.  Queue lengths follow from
    the population split proportional to pi_i * W_i.  Requires every road
    node to be unbounded; capacity-limited roads are handled by the
    congestion variant.
    """
    if m < 1:
        raise ValidationError("MVA needs a fleet of at least one vehicle")
    for nd in qnet.nodes[qnet.n_stations:]:
        if nd.servers is not None:
            raise ValidationError(
                "network has finite-server road nodes; use the congestion MVA"
            )
    n = qnet.n_stations
    nn = qnet.n_nodes
    pvec = pi.pi
    road_t = qnet.road_times()
    lam_eff = qnet.eff_lambda

    big_l = np.zeros(nn)
    big_w = np.zeros(nn)
    for k in range(1, m + 1):
        big_w[n:] = road_t[n:]
        big_w[:n] = (1.0 + big_l[:n]) / lam_eff
        denom = np.dot(pvec, big_w)
        scale = k / denom
        big_l = scale * pvec * big_w
        total = big_l.sum()
        if abs(total - k) > 1e-9 * k:
            raise AssertionError(
                f"population not conserved at MVA step {k}: {total}"
            )
    lam_node = np.divide(big_l, big_w, out=np.zeros(nn), where=big_w > 0.0)
    gamma = pvec[:n] / lam_eff
    avail = _checked_availability(lam_node[:n] / lam_eff)
    return PerfReport(m=m, A=avail, Lambda=lam_node[:n], L=big_l, W=big_w,
                      gamma=gamma)


def utilization_identity_residual(qnet: AbstractQueueNet, pi: Throughputs) -> float:
    """Residual of the utilization-weighted flow-balance identity.

    For relative utilizations gamma_i = pi_i / (lam_i + psi_i), stationarity
    of the combined routing forces, at every station,

        (lam_i + psi_i) * gamma_i
            = sum_j gamma_j * (alpha[j][i] * psi_j + P[j][i] * lam_j).

    Returns the largest absolute violation; a correct throughput solve keeps
    it at numerical noise for any promotion.
    """
    n = qnet.n_stations
    lam = qnet.base.lam
    if qnet.promo is not None:
        psi = qnet.promo.psi
        alpha = qnet.promo.alpha
    else:
        psi = np.zeros(n)
        alpha = np.zeros((n, n))
    gamma = pi.stations / qnet.eff_lambda
    lhs = (lam + psi) * gamma
    weights = alpha * psi[:, None] + qnet.base.P * lam[:, None]
    rhs = weights.T @ gamma
    return float(np.max(np.abs(lhs - rhs)))
