"""Road capacity effects: finite-server road queues and a repositioning
impact study.

Physical road segments have a capacity (the vehicle count at which flow
peaks); trips between different station pairs share segments.  Segment
capacity is split between the pairs routed over it in proportion to their
relative throughputs, giving each abstract road queue a finite server count.
A multi-server mean-value recursion then evaluates availability under those
capacities.

The impact study draws random demand patterns on a grid, computes optimal
repositioning rates, spreads passenger and repositioning loads uniformly
over all shortest paths, and compares per-segment utilization with and
without repositioning.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .jackson import PerfReport, Throughputs, _checked_availability
from .mincost import solve_transshipment
from .netmodel import AbstractQueueNet


@dataclass(frozen=True)
class RoadGraph:
    """Directed road segments plus all shortest station-to-station paths.

    edges     : (tail, head) station pairs, one entry per directed segment.
    capacity  : vehicles each segment carries before queueing delays start.
    seg_time_min : free-flow traversal time of one segment, minutes
                   (segments are uniform).
    paths     : per ordered station pair, every shortest path as a tuple of
                segment indices.
    shares[i][j][c] : fraction of i->j trips crossing segment c when trips
                split uniformly over the shortest paths.
    """

    n_stations: int
    edges: tuple
    capacity: np.ndarray
    seg_time_min: float
    dist: np.ndarray
    paths: dict
    shares: np.ndarray

    def __post_init__(self):
        cap = np.array(self.capacity, dtype=float)
        cap.setflags(write=False)
        object.__setattr__(self, "capacity", cap)
        shares = np.array(self.shares, dtype=float)
        shares.setflags(write=False)
        object.__setattr__(self, "shares", shares)
        dist = np.array(self.dist, dtype=np.int64)
        dist.setflags(write=False)
        object.__setattr__(self, "dist", dist)

    @property
    def n_segments(self) -> int:
        return len(self.edges)

    def pair_times_min(self) -> np.ndarray:
        """Station-to-station free-flow travel times in minutes."""
        return self.dist * self.seg_time_min

    @classmethod
    def from_edges(cls, n: int, undirected_edges, capacity: float = 40.0,
                   seg_time_min: float = 1.0) -> "RoadGraph":
        """Build from undirected adjacency; each edge becomes two segments."""
        edges = []
        for u, v in undirected_edges:
            edges.append((int(u), int(v)))
            edges.append((int(v), int(u)))
        index = {e: k for k, e in enumerate(edges)}
        adj = [[] for _ in range(n)]
        for u, v in edges:
            adj[u].append(v)
        for row in adj:
            row.sort()

        dist = np.full((n, n), -1, dtype=np.int64)
        paths = {}
        shares = np.zeros((n, n, len(edges)))
        for src in range(n):
            d = np.full(n, -1, dtype=np.int64)
            d[src] = 0
            frontier = [src]
            while frontier:
                nxt = []
                for u in frontier:
                    for v in adj[u]:
                        if d[v] < 0:
                            d[v] = d[u] + 1
                            nxt.append(v)
                frontier = nxt
            if np.any(d < 0):
                raise ValidationError("disconnected road graph")
            dist[src] = d

            def enumerate_paths(dst):
                if dst == src:
                    return [()]
                out = []
                for u in range(n):
                    if d[u] == d[dst] - 1 and (u, dst) in index:
                        for prefix in enumerate_paths(u):
                            out.append(prefix + (index[(u, dst)],))
                return out

            for dst in range(n):
                if dst == src:
                    continue
                plist = enumerate_paths(dst)
                paths[(src, dst)] = tuple(plist)
                for p in plist:
                    for c in p:
                        shares[src, dst, c] += 1.0 / len(plist)

        return cls(
            n_stations=n, edges=tuple(edges),
            capacity=np.full(len(edges), float(capacity)),
            seg_time_min=float(seg_time_min), dist=dist, paths=paths,
            shares=shares,
        )

    @classmethod
    def grid(cls, rows: int = 3, cols: int = 3, segment_km: float = 0.5,
             capacity: float = 40.0, speed_kmh: float = 30.0) -> "RoadGraph":
        """Rectangular lattice with two-way segments between neighbors."""
        n = rows * cols
        und = []
        for r in range(rows):
            for c in range(cols):
                u = r * cols + c
                if c + 1 < cols:
                    und.append((u, u + 1))
                if r + 1 < rows:
                    und.append((u, u + cols))
        seg_time_min = segment_km / speed_kmh * 60.0
        return cls.from_edges(n, und, capacity=capacity,
                              seg_time_min=seg_time_min)

    @classmethod
    def line(cls, n: int, capacity: float = 40.0,
             seg_time_min: float = 1.0) -> "RoadGraph":
        return cls.from_edges(n, [(k, k + 1) for k in range(n - 1)],
                              capacity=capacity, seg_time_min=seg_time_min)


@dataclass(frozen=True)
class VirtualCapacities:
    """Server counts of the abstract road queues, mapped from segment
    capacities.  For every segment, the share-weighted sum of the counts of
    the pairs routed across it stays within the segment capacity."""

    mij: np.ndarray

    def __post_init__(self):
        mij = np.array(self.mij, dtype=np.int64)
        if np.any(mij < 0):
            raise ValidationError("server counts must be nonnegative")
        mij.setflags(write=False)
        object.__setattr__(self, "mij", mij)


def virtual_capacities(graph: RoadGraph, pi_road: np.ndarray) -> VirtualCapacities:
    """Split segment capacities into per-pair road server counts.

    Each segment's capacity is divided between the station pairs crossing it
    in proportion to share * relative throughput; a pair's count is the sum
    over its paths of the bottleneck allocation along the path, floored to
    an integer.  On multi-path topologies the bottleneck sums can slightly
    oversubscribe a segment; when that happens all counts are scaled down
    proportionally before flooring so that every segment's share-weighted
    server total stays within its capacity.  Pairs with positive throughput
    never end at zero servers: a floor of 1 is applied with a warning.
    """
    n = graph.n_stations
    pi_road = np.asarray(pi_road, dtype=float)
    if pi_road.shape != (n, n):
        raise ValidationError("road throughput matrix must be n x n")
    denom = np.einsum("ijc,ij->c", graph.shares, pi_road)
    raw = np.zeros((n, n))
    for (i, j), plist in graph.paths.items():
        if pi_road[i, j] <= 0.0:
            continue
        total = 0.0
        for p in plist:
            allocs = [
                graph.capacity[c] * graph.shares[i, j, c] * pi_road[i, j]
                / denom[c]
                for c in p
            ]
            total += min(allocs)
        raw[i, j] = total

    seg_totals = np.einsum("ijc,ij->c", graph.shares, raw)
    overshoot = float(np.max(seg_totals / graph.capacity, initial=0.0))
    if overshoot > 1.0:
        raw /= overshoot
    mij = np.floor(raw).astype(np.int64)

    used = pi_road > 0.0
    for c in range(graph.n_segments):
        load = float(np.sum(graph.shares[:, :, c] * mij))
        if load > graph.capacity[c] + 1e-9:
            raise AssertionError(
                f"virtual capacities oversubscribe segment {c}: "
                f"{load} > {graph.capacity[c]}"
            )
    bumped = used & (mij == 0)
    if np.any(bumped):
        warnings.warn(
            f"{int(bumped.sum())} road pair(s) with positive throughput got "
            "0 servers; raised to 1",
            stacklevel=2,
        )
        mij = mij + bumped.astype(np.int64)
    return VirtualCapacities(mij=mij)


def finite_mva(qnet: AbstractQueueNet, pi: Throughputs, m: int) -> PerfReport:
    """Mean-value recursion with capacity-limited road nodes.

    Nodes with s servers hold marginal occupancy probabilities; the sojourn
    at population k adds the expected wait for a free server,
    (1 + L(k-1) + sum_{j<s-1} (s-1-j) p(j | k-1)) / (s * mu).  Unbounded
    roads stay pure delays and single-server nodes reduce to the plain
    recursion.  Matches the plain MVA exactly when every road is unbounded.
    """
    if m < 1:
        raise ValidationError("MVA needs a fleet of at least one vehicle")
    n = qnet.n_stations
    nn = qnet.n_nodes
    pvec = pi.pi
    rates = qnet.service_rates()
    servers = qnet.server_counts()
    road_t = qnet.road_times()
    lam_eff = qnet.eff_lambda

    is_delay = np.isinf(servers)
    is_delay[:n] = False
    for idx in range(n, nn):
        if not is_delay[idx] and servers[idx] < 1 and pvec[idx] > 0.0:
            raise ValidationError(
                "every road carrying traffic needs at least one server"
            )
    multi = np.nonzero((~is_delay) & (servers >= 2))[0]
    nm = multi.size
    s_multi = servers[multi]
    rate_multi = rates[multi]
    pi_multi = pvec[multi]
    # probs[f][j]: occupancy-j probability of the f-th multi-server node
    probs = np.zeros((nm, m + 1))
    probs[:, 0] = 1.0
    # busy[f][j-1] = min(j, s_f) for j = 1..m
    occ = np.arange(1, m + 1)
    busy = np.minimum(occ[None, :], s_multi[:, None]) if nm else np.zeros((0, m))

    big_l = np.zeros(nn)
    big_w = np.zeros(nn)
    for k in range(1, m + 1):
        big_w = np.where(is_delay, road_t, (1.0 + big_l) / rates)
        if nm:
            idle_servers = np.zeros(nm)
            for f in range(nm):
                s = int(s_multi[f])
                # occupancies above the current population have zero mass
                lim = min(s - 1, probs.shape[1])
                j = np.arange(lim)
                idle_servers[f] = np.dot(s - 1 - j, probs[f, :lim])
            big_w[multi] = (1.0 + big_l[multi] + idle_servers) / (
                s_multi * rate_multi
            )
        denom = np.dot(pvec, big_w)
        throughput_scale = k / denom
        big_l = throughput_scale * pvec * big_w
        total = big_l.sum()
        if abs(total - k) > 1e-9 * k:
            raise AssertionError(
                f"population not conserved at MVA step {k}: {total}"
            )
        if nm:
            lam_nodes = pi_multi * throughput_scale
            new = np.zeros((nm, m + 1))
            new[:, 1 : k + 1] = (
                lam_nodes[:, None] / (rate_multi[:, None] * busy[:, :k])
            ) * probs[:, :k]
            tail = new[:, 1 : k + 1].sum(axis=1)
            if np.any(new < -1e-12) or np.any(tail > 1.0 + 1e-9):
                raise AssertionError("marginal probabilities left [0, 1]")
            new[:, 0] = 1.0 - tail
            probs = np.clip(new, 0.0, None)

    lam_node = np.divide(big_l, big_w, out=np.zeros(nn), where=big_w > 0.0)
    gamma = pvec[:n] / lam_eff
    avail = _checked_availability(lam_node[:n] / lam_eff)
    return PerfReport(m=m, A=avail, Lambda=lam_node[:n], L=big_l, W=big_w,
                      gamma=gamma)


@dataclass(frozen=True)
class CongestionReport:
    """Per-segment load picture of one demand pattern, with and without
    repositioning flows, assuming every request is served."""

    lam: np.ndarray
    routing: np.ndarray
    beta: np.ndarray
    pair_load: np.ndarray
    pair_reb_load: np.ndarray
    road_load: np.ndarray
    road_reb_load: np.ndarray
    rho_before: np.ndarray
    rho_after: np.ndarray
    reb_ratio: float
    avg_increase: float
    max_increase: float
    stable: bool


def evaluate_system(graph: RoadGraph, lam: np.ndarray,
                    routing: np.ndarray) -> CongestionReport:
    """Load and utilization accounting for one demand pattern.

    Rates are per minute; travel times come from the graph's segment time.
    Passenger flow i->j of lam_i * p_ij keeps T_ij vehicles on the road on
    average; repositioning adds beta_ij * T_ij.  Loads spread uniformly over
    the shortest paths.  The increase at the single most loaded segment
    (before repositioning, lowest index on ties) is the max increase.
    """
    n = graph.n_stations
    lam = np.asarray(lam, dtype=float)
    routing = np.asarray(routing, dtype=float)
    tmat = graph.pair_times_min()

    pair_load = lam[:, None] * routing * tmat
    road_load = np.einsum("ijc,ij->c", graph.shares, pair_load)
    # accounting identity: segment totals equal pair loads times path length
    path_len = graph.shares.sum(axis=2)
    lhs = road_load.sum()
    rhs = float(np.sum(pair_load * path_len))
    if abs(lhs - rhs) > 1e-9 * max(1.0, rhs):
        raise AssertionError("segment load accounting mismatch")

    supply = routing.T @ lam - lam
    arcs = [(i, j, float(tmat[i, j]))
            for i in range(n) for j in range(n) if i != j]
    res = solve_transshipment(n, arcs, supply)
    beta = np.zeros((n, n))
    for k, (i, j, _) in enumerate(arcs):
        beta[i, j] = res.flows[k]
    pair_reb = beta * tmat
    road_reb = np.einsum("ijc,ij->c", graph.shares, pair_reb)

    rho_before = road_load / graph.capacity
    rho_after = (road_load + road_reb) / graph.capacity
    stable = bool(np.all(rho_before < 1.0))

    # on-road vehicle counts, segment level: makes the average-utilization
    # increase an exactly linear function of the ratio for uniform capacity
    total_pax = float(road_load.sum())
    reb_ratio = float(road_reb.sum() / total_pax) if total_pax > 0 else 0.0
    mean_before = float(rho_before.mean())
    avg_increase = (
        float((rho_after.mean() - mean_before) / mean_before)
        if mean_before > 0 else 0.0
    )
    worst = int(np.argmax(rho_before))
    max_increase = (
        float((rho_after[worst] - rho_before[worst]) / rho_before[worst])
        if rho_before[worst] > 0 else 0.0
    )
    return CongestionReport(
        lam=lam, routing=routing, beta=beta, pair_load=pair_load,
        pair_reb_load=pair_reb, road_load=road_load, road_reb_load=road_reb,
        rho_before=rho_before, rho_after=rho_after, reb_ratio=reb_ratio,
        avg_increase=avg_increase, max_increase=max_increase, stable=stable,
    )


@dataclass(frozen=True)
class StudyResult:
    """Scatter data of the ensemble: one row per accepted system."""

    rows: tuple  # (attempt_seed, reb_ratio, avg_increase, max_increase)
    resampled: int

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["seed", "reb_ratio", "avg_util_increase",
                    "max_util_increase"])
        for row in self.rows:
            w.writerow([row[0], f"{row[1]:.10g}", f"{row[2]:.10g}",
                        f"{row[3]:.10g}"])
        return buf.getvalue()

    def arrays(self):
        data = np.array([r[1:] for r in self.rows], dtype=float)
        return data[:, 0], data[:, 1], data[:, 2]


def congestion_study(graph: RoadGraph = None, n_systems: int = 500,
                     seed: int = 0, lam_range=(1.0, 7.0)) -> StudyResult:
    """Repositioning impact over randomly drawn demand patterns.

    Arrival rates are uniform on ``lam_range`` (per minute) and routing rows
    are flat Dirichlet with a zero diagonal.  Systems whose passenger loads
    already saturate a segment are discarded, counted, and redrawn.  Every
    attempt gets its own child seed, logged in the output rows.
    """
    if graph is None:
        graph = RoadGraph.grid()
    n = graph.n_stations
    lo, hi = lam_range
    rows = []
    resampled = 0
    attempt = 0
    while len(rows) < n_systems:
        if attempt > 50 * n_systems:
            raise ValidationError(
                "too many unstable systems; lower the demand range"
            )
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=seed, spawn_key=(attempt,))
        )
        attempt += 1
        lam = rng.uniform(lo, hi, size=n)
        routing = np.zeros((n, n))
        for i in range(n):
            row = rng.dirichlet(np.ones(n - 1))
            routing[i, :i] = row[:i]
            routing[i, i + 1:] = row[i:]
        report = evaluate_system(graph, lam, routing)
        if not report.stable:
            resampled += 1
            continue
        rows.append((attempt - 1, report.reb_ratio, report.avg_increase,
                     report.max_increase))
    return StudyResult(rows=tuple(rows), resampled=resampled)
