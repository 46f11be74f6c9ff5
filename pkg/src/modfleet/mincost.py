"""Uncapacitated minimum-cost transshipment by successive shortest paths.

Works on an explicit arc list with nonnegative costs and real-valued node
supplies (positive = must ship out, negative = must receive).  Node
potentials keep reduced costs nonnegative so every search is a Dijkstra run;
the final potentials certify optimality through complementary slackness:
pot[j] - pot[i] <= cost(i, j) on every arc, with equality wherever the arc
carries flow.

Determinism: sources are drained in index order, the search settles equal
distances at the lowest node index first, and arcs relax in input order, so
tied optima resolve the same way on every run.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, ValidationError

# Supplies smaller than this are treated as zero (float noise in balances).
SUPPLY_SNAP = 1e-12


@dataclass(frozen=True)
class FlowResult:
    """flows[k] is the amount on arcs[k]; potentials certify optimality."""

    flows: np.ndarray
    cost: float
    potentials: np.ndarray


def solve_transshipment(n: int, arcs, supply) -> FlowResult:
    """Route ``supply`` through ``arcs`` at minimum total cost.

    arcs   : sequence of (tail, head, cost) with cost >= 0.
    supply : length-n array summing to ~0 (tolerance 1e-9 of its scale).
    """
    supply = np.array(supply, dtype=float)
    if supply.shape != (n,):
        raise ValidationError("supply vector length does not match node count")
    scale = max(1.0, float(np.max(np.abs(supply), initial=0.0)))
    if abs(supply.sum()) > 1e-9 * scale:
        raise ValidationError(
            f"unbalanced supplies: sum {supply.sum():.3e}"
        )
    supply[np.abs(supply) < SUPPLY_SNAP] = 0.0

    tails = np.array([a[0] for a in arcs], dtype=int)
    heads = np.array([a[1] for a in arcs], dtype=int)
    costs = np.array([a[2] for a in arcs], dtype=float)
    if np.any(costs < 0.0):
        raise ValidationError("arc costs must be nonnegative")
    n_arcs = len(arcs)
    out_arcs = [[] for _ in range(n)]
    in_arcs = [[] for _ in range(n)]
    for k in range(n_arcs):
        out_arcs[tails[k]].append(k)
        in_arcs[heads[k]].append(k)

    flows = np.zeros(n_arcs)
    pot = np.zeros(n)
    remaining = supply.copy()
    stop_tol = 1e-11 * scale

    def dijkstra(src):
        dist = np.full(n, np.inf)
        dist[src] = 0.0
        # parent[v] = (arc index, forward?) on the tree edge into v
        parent = [None] * n
        done = np.zeros(n, dtype=bool)
        heap = [(0.0, src)]
        while heap:
            d, u = heapq.heappop(heap)
            if done[u]:
                continue
            done[u] = True
            for k in out_arcs[u]:
                v = heads[k]
                rc = costs[k] + pot[u] - pot[v]
                if rc < 0.0:  # float noise only; invariant keeps rc >= 0
                    rc = 0.0
                nd = d + rc
                if nd < dist[v]:
                    dist[v] = nd
                    parent[v] = (k, True)
                    heapq.heappush(heap, (nd, v))
            for k in in_arcs[u]:
                if flows[k] <= 0.0:
                    continue
                v = tails[k]
                rc = -costs[k] + pot[u] - pot[v]
                if rc < 0.0:
                    rc = 0.0
                nd = d + rc
                if nd < dist[v]:
                    dist[v] = nd
                    parent[v] = (k, False)
                    heapq.heappush(heap, (nd, v))
        return dist, parent

    max_rounds = 10 * n * n + 10 * n_arcs + 100
    rounds = 0
    while True:
        src = -1
        for i in range(n):
            if remaining[i] > stop_tol:
                src = i
                break
        if src < 0:
            break
        rounds += 1
        if rounds > max_rounds:
            raise ConvergenceError(
                f"augmentation did not terminate after {max_rounds} rounds"
            )
        dist, parent = dijkstra(src)
        sink = -1
        best = np.inf
        for j in range(n):
            if remaining[j] < -stop_tol and dist[j] < best:
                best = dist[j]
                sink = j
        if sink < 0:
            raise ValidationError(
                "no receiving node reachable from a supplying node"
            )
        # walk the path backwards, collecting the bottleneck
        delta = min(remaining[src], -remaining[sink])
        v = sink
        path = []
        while v != src:
            k, forward = parent[v]
            path.append((k, forward))
            if not forward:
                delta = min(delta, flows[k])
            v = tails[k] if forward else heads[k]
        for k, forward in path:
            if forward:
                flows[k] += delta
            else:
                flows[k] -= delta
        remaining[src] -= delta
        remaining[sink] += delta
        cap = dist[sink]
        pot += np.minimum(dist, cap)

    return FlowResult(
        flows=flows, cost=float(np.dot(costs, flows)), potentials=pot
    )
