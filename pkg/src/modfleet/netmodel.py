"""Station-level fleet model and its closed queueing-network abstraction.

A service area is described by per-station customer arrival rates, a routing
matrix of destination choices, and pairwise mean travel times.  The abstract
network view attaches one single-server queue to each station (vehicles wait
there for customers) and one delay queue to each ordered station pair
(vehicles in transit).  An optional promotion layer superposes virtual demand
on top of the real demand, which induces empty-vehicle repositioning trips
while keeping the network in the product-form family.

All types are immutable after construction; arrays are marked read-only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ValidationError

# Routing rows must sum to one within this tolerance; rows that fail are
# rejected outright rather than renormalized, so data errors stay visible.
ROW_SUM_TOL = 1e-9


def _readonly(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


def _strongly_connected(positive: np.ndarray) -> bool:
    """True if the directed graph of True entries is strongly connected."""
    n = positive.shape[0]

    def covers(mat: np.ndarray) -> bool:
        seen = np.zeros(n, dtype=bool)
        seen[0] = True
        stack = [0]
        while stack:
            u = stack.pop()
            for v in np.nonzero(mat[u])[0]:
                if not seen[v]:
                    seen[v] = True
                    stack.append(int(v))
        return bool(seen.all())

    return covers(positive) and covers(positive.T)


def _check_stochastic(mat: np.ndarray, name: str) -> None:
    if np.any(mat < -1e-15):
        raise ValidationError(f"{name} has negative entries")
    if np.any(np.abs(np.diagonal(mat)) > 1e-15):
        raise ValidationError(f"{name} has nonzero diagonal entries")
    sums = mat.sum(axis=1)
    bad = np.nonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)[0]
    if bad.size:
        i = int(bad[0])
        raise ValidationError(
            f"non-stochastic routing row {i} in {name}: sum={sums[i]:.12g}"
        )


@dataclass(frozen=True)
class Network:
    """Physical description of the service area.

    lam[i]   : customer arrival rate at station i (per unit time), > 0.
    P[i][j]  : probability that a customer at i requests destination j;
               rows sum to 1, zero diagonal, irreducible.
    T[i][j]  : mean travel time from i to j, > 0 off the diagonal.
    stations : optional per-station metadata (names, coordinates); passed
               through untouched.
    """

    lam: np.ndarray
    P: np.ndarray
    T: np.ndarray
    stations: tuple = ()

    def __post_init__(self):
        lam = _readonly(self.lam)
        P = _readonly(self.P)
        T = _readonly(self.T)
        n = lam.shape[0]
        if lam.ndim != 1 or P.shape != (n, n) or T.shape != (n, n):
            raise ValidationError(
                f"inconsistent shapes: lam {lam.shape}, P {P.shape}, T {T.shape}"
            )
        if n < 2:
            raise ValidationError("need at least two stations")
        if np.any(lam <= 0.0):
            raise ValidationError("arrival rates must be strictly positive")
        _check_stochastic(P, "P")
        off = ~np.eye(n, dtype=bool)
        if np.any(T[off] <= 0.0):
            raise ValidationError("travel times must be positive off the diagonal")
        if not _strongly_connected(P > 0.0):
            raise ValidationError("routing matrix P is not irreducible")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "stations", tuple(self.stations))

    @property
    def n_stations(self) -> int:
        return self.lam.shape[0]

    @classmethod
    def from_json(cls, doc: dict) -> "Network":
        try:
            lam = doc["lambda"]
            P = doc["P"]
            T = doc["T"]
        except KeyError as exc:
            raise ValidationError(f"network document missing key {exc}") from exc
        stations = tuple(doc.get("stations", ()))
        return cls(lam=np.asarray(lam), P=np.asarray(P), T=np.asarray(T),
                   stations=stations)

    @classmethod
    def from_json_file(cls, path) -> "Network":
        with open(path) as fh:
            return cls.from_json(json.load(fh))

    def to_json(self) -> dict:
        return {
            "stations": list(self.stations) or list(range(self.n_stations)),
            "lambda": self.lam.tolist(),
            "P": self.P.tolist(),
            "T": self.T.tolist(),
        }


@dataclass(frozen=True)
class RebalancePromotion:
    """Virtual-demand layer: station i emits virtual customers at rate
    psi[i] and routes them to j with probability alpha[i][j]."""

    psi: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        psi = _readonly(self.psi)
        alpha = _readonly(self.alpha)
        n = psi.shape[0]
        if alpha.shape != (n, n):
            raise ValidationError(
                f"alpha shape {alpha.shape} does not match psi length {n}"
            )
        if np.any(psi < 0.0):
            raise ValidationError("virtual arrival rates must be nonnegative")
        _check_stochastic(alpha, "alpha")
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "alpha", alpha)

    @property
    def n_stations(self) -> int:
        return self.psi.shape[0]


@dataclass(frozen=True)
class NodeSpec:
    """Descriptor of one queue in the abstract network.

    kind    : "station" (single server) or "road" (delay or multi-server).
    parent  : origin station index (= the station itself for station nodes).
    child   : destination station index.
    rate    : per-server service rate (total demand rate for stations,
              1 / mean travel time for roads).
    servers : 1 for stations; None for unbounded road nodes; a positive
              integer for capacity-limited road nodes.
    """

    kind: str
    parent: int
    child: int
    rate: float
    servers: Optional[int]


def road_index(i: int, j: int, n: int) -> int:
    """Index of the road node carrying trips i -> j (stations occupy 0..n-1)."""
    if i == j:
        raise ValidationError("no road node exists for a station pair (i, i)")
    return n + i * (n - 1) + (j - 1 if j > i else j)


def road_pair(idx: int, n: int) -> tuple:
    """Inverse of road_index."""
    k = idx - n
    i, r = divmod(k, n - 1)
    return i, (r if r < i else r + 1)


@dataclass(frozen=True)
class AbstractQueueNet:
    """Closed network of n_stations single-server nodes followed by
    n*(n-1) road nodes in road_index order.

    eff_lambda : total (real + virtual) demand rate per station.
    eff_p      : destination distribution of the combined demand.
    nodes      : per-node descriptors, stations first.
    base/promo : the physical inputs the network was built from.
    """

    n_stations: int
    eff_lambda: np.ndarray
    eff_p: np.ndarray
    nodes: tuple
    base: Network
    promo: Optional[RebalancePromotion]

    def __post_init__(self):
        object.__setattr__(self, "eff_lambda", _readonly(self.eff_lambda))
        object.__setattr__(self, "eff_p", _readonly(self.eff_p))
        object.__setattr__(self, "nodes", tuple(self.nodes))
        if len(self.nodes) != self.n_stations ** 2:
            raise ValidationError("abstract network must have n^2 nodes")

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def road_index(self, i: int, j: int) -> int:
        return road_index(i, j, self.n_stations)

    def service_rates(self) -> np.ndarray:
        """Per-server service rate of every node, in node order."""
        return np.array([nd.rate for nd in self.nodes])

    def server_counts(self) -> np.ndarray:
        """Server count per node; numpy.inf marks unbounded road nodes."""
        return np.array(
            [np.inf if nd.servers is None else float(nd.servers) for nd in self.nodes]
        )

    def road_times(self) -> np.ndarray:
        """Mean travel time of every node (0 for stations), in node order."""
        out = np.zeros(self.n_nodes)
        for idx in range(self.n_stations, self.n_nodes):
            nd = self.nodes[idx]
            out[idx] = 1.0 / nd.rate
        return out

    def routing_matrix(self) -> np.ndarray:
        """Dense node-level routing matrix.

        Built on demand: it is O(n^4) in the station count and is only
        needed for inspection and tests; all analytics work on eff_p.
        """
        n, nn = self.n_stations, self.n_nodes
        r = np.zeros((nn, nn))
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                ridx = self.road_index(i, j)
                r[i, ridx] = self.eff_p[i, j]
                r[ridx, j] = 1.0
        return r

    def with_road_servers(self, m_road: np.ndarray) -> "AbstractQueueNet":
        """Copy of the network with finite road server counts.

        m_road[i][j] is the server count of road node (i -> j).  Roads that
        carry traffic (eff_p > 0) must get at least one server; unused roads
        may keep 0, which is stored as 1 server to keep the node well defined.
        """
        m_road = np.asarray(m_road)
        n = self.n_stations
        if m_road.shape != (n, n):
            raise ValidationError("road server matrix must be n x n")
        nodes = list(self.nodes[:n])
        for idx in range(n, self.n_nodes):
            i, j = road_pair(idx, n)
            s = int(m_road[i, j])
            if self.eff_p[i, j] > 0.0 and s < 1:
                raise ValidationError(
                    f"road ({i}->{j}) carries traffic but has {s} servers"
                )
            nodes.append(
                NodeSpec("road", i, j, self.nodes[idx].rate, max(s, 1))
            )
        return AbstractQueueNet(
            n_stations=n,
            eff_lambda=self.eff_lambda,
            eff_p=self.eff_p,
            nodes=tuple(nodes),
            base=self.base,
            promo=self.promo,
        )


def build_abstract_net(
    net: Network, promo: Optional[RebalancePromotion] = None
) -> AbstractQueueNet:
    """Construct the closed queueing abstraction of a physical network.

    Without a promotion the effective demand equals the real demand.  With a
    promotion, real and virtual arrivals superpose: the combined rate at
    station i is lam[i] + psi[i], and the combined destination distribution
    is the mixture of alpha (weight psi/(lam+psi)) and P (remaining weight).
    """
    n = net.n_stations
    if promo is not None:
        if promo.n_stations != n:
            raise ValidationError("promotion station count does not match network")
        lam_eff = net.lam + promo.psi
        w = promo.psi / lam_eff  # virtual share of combined arrivals
        p_eff = promo.alpha * w[:, None] + net.P * (1.0 - w[:, None])
    else:
        lam_eff = net.lam.copy()
        p_eff = net.P.copy()

    nodes = [NodeSpec("station", i, i, float(lam_eff[i]), 1) for i in range(n)]
    for i in range(n):
        for j in range(n):
            if i != j:
                nodes.append(NodeSpec("road", i, j, 1.0 / float(net.T[i, j]), None))
    # road_index order: (0,1)..(0,n-1),(1,0),... matches the loop above
    return AbstractQueueNet(
        n_stations=n,
        eff_lambda=lam_eff,
        eff_p=p_eff,
        nodes=tuple(nodes),
        base=net,
        promo=promo,
    )
