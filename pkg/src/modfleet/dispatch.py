"""Closed-loop repositioning of idle vehicles between stations.

At each planning instant, a station "owns" the vehicles parked there, the
vehicles traveling toward it, and the ones its boarding customers are about
to bring in.  Excess vehicles (owned minus queued customers) are spread so
that every station ends up with at least the floor-equalized share of the
system-wide excess; moving a vehicle i -> j costs its travel time.  The
constraint matrix of that program is totally unimodular, so the continuous
flow relaxation already lands on integers and is used directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .mincost import solve_transshipment

INTEGRALITY_TOL = 1e-6


def _int_matrix(a, name: str) -> np.ndarray:
    arr = np.array(a)
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(arr == np.round(arr)):
            raise ValidationError(f"{name} must contain integers")
        arr = np.round(arr)
    arr = arr.astype(np.int64)
    if np.any(arr < 0):
        raise ValidationError(f"{name} must be nonnegative")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class FleetState:
    """Snapshot of the fleet at a planning instant.

    v[i]             : idle vehicles at station i.
    v_enroute[j][i]  : vehicles traveling from j to i.
    c_wait[i]        : customers queued at station i.
    c_boarding[j][i] : customers at j about to board toward i; at most
                       v[j] of them in total per origin.
    t                : the instant the snapshot was taken.
    """

    v: np.ndarray
    v_enroute: np.ndarray
    c_wait: np.ndarray
    c_boarding: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        v = _int_matrix(self.v, "v")
        enroute = _int_matrix(self.v_enroute, "v_enroute")
        c_wait = _int_matrix(self.c_wait, "c_wait")
        boarding = _int_matrix(self.c_boarding, "c_boarding")
        n = v.shape[0]
        if enroute.shape != (n, n) or c_wait.shape != (n,) \
                or boarding.shape != (n, n):
            raise ValidationError("fleet state arrays have inconsistent shapes")
        if np.any(boarding.sum(axis=1) > v):
            raise ValidationError(
                "boarding customers at a station exceed its idle vehicles"
            )
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "v_enroute", enroute)
        object.__setattr__(self, "c_wait", c_wait)
        object.__setattr__(self, "c_boarding", boarding)

    @property
    def n_stations(self) -> int:
        return self.v.shape[0]

    def vehicle_total(self) -> int:
        return int(self.v.sum() + self.v_enroute.sum())


@dataclass(frozen=True)
class DispatchOrder:
    """num[i][j] idle vehicles to send from i to j over the next horizon."""

    num: np.ndarray

    def __post_init__(self):
        num = _int_matrix(self.num, "num")
        if np.any(np.diagonal(num) != 0):
            raise ValidationError("dispatch orders cannot target the origin")
        object.__setattr__(self, "num", num)

    def total(self) -> int:
        return int(self.num.sum())


def excess_and_target(state: FleetState, m: int):
    """Per-station excess vehicles and the equal-share floor target.

    excess_i = idle + incoming + boarding-bound - queued customers (may be
    negative when a station is swamped).  The target is the floor of the
    system excess divided by the station count, where the system excess
    discounts only customers that the local idle vehicles cannot cover.

    The floor target is guaranteed reachable only when boarding is maximal
    (every station boards min(idle, queued) customers); snapshots taken
    right after a boarding pass satisfy this with no customers boarding.
    """
    if state.vehicle_total() != m:
        raise ValidationError(
            f"state accounts for {state.vehicle_total()} vehicles, expected {m}"
        )
    n = state.n_stations
    excess = (state.v + state.v_enroute.sum(axis=0)
              + state.c_boarding.sum(axis=0) - state.c_wait)
    unmet = np.maximum(state.c_wait - state.v, 0).sum()
    target = int((m - int(unmet)) // n)
    return excess.astype(np.int64), target


def plan_dispatch(state: FleetState, m: int, travel: np.ndarray) -> DispatchOrder:
    """Minimum-travel-time orders that lift every station to the target.

    Solved as an uncapacitated flow: stations supply excess - target (any
    sign), and a zero-cost virtual sink absorbs the surplus that need not
    move because the constraint is one-sided.  The relaxation is checked to
    be integral before rounding.
    """
    travel = np.asarray(travel, dtype=float)
    n = state.n_stations
    if travel.shape != (n, n):
        raise ValidationError("travel-time matrix shape does not match state")
    excess, target = excess_and_target(state, m)
    balance = excess - target
    total = int(balance.sum())
    if total < 0:
        raise ValidationError(
            "total demand exceeds total supply; target floor violated"
        )

    sink = n
    supply = np.zeros(n + 1)
    supply[:n] = balance
    supply[sink] = -total
    arcs = [(i, j, float(travel[i, j]))
            for i in range(n) for j in range(n) if i != j]
    station_arcs = len(arcs)
    arcs += [(i, sink, 0.0) for i in range(n)]
    res = solve_transshipment(n + 1, arcs, supply)

    flows = res.flows[:station_arcs]
    drift = np.max(np.abs(flows - np.round(flows)), initial=0.0)
    if drift > INTEGRALITY_TOL:
        raise AssertionError(
            f"relaxation produced non-integral flow (max drift {drift:.2e})"
        )
    num = np.zeros((n, n), dtype=np.int64)
    k = 0
    for i in range(n):
        for j in range(n):
            if i != j:
                num[i, j] = int(round(flows[k]))
                k += 1
    after = excess + num.sum(axis=0) - num.sum(axis=1)
    if np.any(after < target):
        raise AssertionError("orders leave a station below its target")
    return DispatchOrder(num=num)
