"""Discrete-time fleet simulator.

Time advances in fixed steps.  Each step parks the vehicles whose trips have
completed, draws Poisson customer arrivals per station, handles boarding
(instant in loss mode, first-come-first-serve in queue mode), and at
repositioning boundaries plans and launches empty-vehicle moves.  Demand is
piecewise constant per hour, taken from a profile of per-hour networks whose
rates are per hour and travel times in hours.

Steps with no activity are skipped without being simulated one by one, which
changes nothing because the state is constant between events.  Randomness is
split into one arrival stream and one travel stream per station, so the
customer process is identical across runs that differ only in fleet size.
"""

from __future__ import annotations

import heapq
import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dispatch import FleetState, plan_dispatch
from .errors import ValidationError
from .netmodel import Network

SECONDS_PER_HOUR = 3600.0


@dataclass(frozen=True)
class DemandProfile:
    """Hour-by-hour demand: one network per hour, cycled over the run.

    Rates are per hour and travel times in hours.  ``speeds_kmh`` is an
    optional diagnostic from estimation and does not affect simulation.
    """

    slices: tuple
    speeds_kmh: tuple = ()
    station_coords: tuple = ()

    def __post_init__(self):
        slices = tuple(self.slices)
        if not slices:
            raise ValidationError("profile needs at least one hourly slice")
        n = slices[0].n_stations
        for s in slices:
            if not isinstance(s, Network):
                raise ValidationError("profile slices must be Network values")
            if s.n_stations != n:
                raise ValidationError("profile slices disagree on station count")
        object.__setattr__(self, "slices", slices)
        object.__setattr__(self, "speeds_kmh", tuple(self.speeds_kmh))
        object.__setattr__(self, "station_coords", tuple(self.station_coords))

    @classmethod
    def constant(cls, net: Network) -> "DemandProfile":
        return cls(slices=(net,))

    @property
    def n_stations(self) -> int:
        return self.slices[0].n_stations

    def slice_for_hour(self, hour: int) -> Network:
        return self.slices[hour % len(self.slices)]


@dataclass(frozen=True)
class SimConfig:
    """Run parameters.

    dt              : step length in seconds.
    rebalance_every : seconds between repositioning plans (multiple of dt).
    duration        : simulated seconds (multiple of dt).
    mode            : "loss" (unserved customers leave) or "queue" (FCFS).
    travel          : "exponential" draws or "deterministic" mean times.
    sample_every    : steps between state samples in the trace; 0 disables.
    """

    profile: DemandProfile
    dt: float = 2.0
    rebalance_every: float = 900.0
    duration: float = 86400.0
    mode: str = "loss"
    travel: str = "exponential"
    seed: int = 0
    sample_every: int = 0

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValidationError("dt must be positive")
        for name in ("rebalance_every", "duration"):
            value = getattr(self, name)
            steps = value / self.dt
            if abs(steps - round(steps)) > 1e-9 or round(steps) < 1:
                raise ValidationError(f"{name} must be a positive multiple of dt")
        if self.mode not in ("loss", "queue"):
            raise ValidationError(f"unknown mode {self.mode!r}")
        if self.travel not in ("exponential", "deterministic"):
            raise ValidationError(f"unknown travel model {self.travel!r}")
        if self.sample_every < 0:
            raise ValidationError("sample_every must be nonnegative")


@dataclass(frozen=True)
class SimTrace:
    """Complete record of one run.

    customers  : (arrival_t, origin, destination, board_t or None, lost).
    dispatches : (t, requested, sent, order matrix as nested lists).
    samples    : (t, idle per station, queued per station).
    arrived/served/lost : per-station counters.
    waits      : boarding delays of served customers, queue mode only.
    """

    m: int
    n_stations: int
    mode: str
    duration: float
    seed: int
    customers: tuple
    dispatches: tuple
    samples: tuple
    arrived: np.ndarray
    served: np.ndarray
    lost: np.ndarray
    waits: np.ndarray
    reb_trips: int
    reb_clipped: int

    def summary(self) -> dict:
        out = {
            "schema": 1,
            "mode": self.mode,
            "fleet": self.m,
            "duration_s": self.duration,
            "seed": self.seed,
            "arrived": self.arrived.tolist(),
            "served": self.served.tolist(),
            "lost": self.lost.tolist(),
            "total_arrived": int(self.arrived.sum()),
            "total_served": int(self.served.sum()),
            "rebalancing_trips": self.reb_trips,
            "rebalancing_clipped": self.reb_clipped,
        }
        if self.mode == "loss":
            out["availability"] = availability_from_trace(self)
        else:
            if self.waits.size:
                qs = np.percentile(self.waits, [50, 90, 95])
                out["wait_mean_s"] = float(self.waits.mean())
                out["wait_p50_s"] = float(qs[0])
                out["wait_p90_s"] = float(qs[1])
                out["wait_p95_s"] = float(qs[2])
            else:
                out["wait_mean_s"] = None
            out["still_queued"] = int(self.arrived.sum() - self.served.sum())
        return out

    def write_events(self, fh) -> int:
        """Line-delimited JSON event log, ordered by time. Returns #lines."""
        events = []
        for rec in self.customers:
            events.append((rec[0], {
                "type": "customer", "t": rec[0], "origin": rec[1],
                "destination": rec[2], "board_t": rec[3], "lost": rec[4],
            }))
        for t, requested, sent, num in self.dispatches:
            events.append((t, {"type": "dispatch", "t": t,
                               "requested": requested, "sent": sent,
                               "orders": num}))
        for t, idle, queued in self.samples:
            events.append((t, {"type": "sample", "t": t, "idle": idle,
                               "queued": queued}))
        events.sort(key=lambda e: e[0])
        for _, doc in events:
            fh.write(json.dumps(doc) + "\n")
        return len(events)


def availability_from_trace(trace: SimTrace):
    """Served fraction per station; None where a station saw no arrivals."""
    if trace.mode != "loss":
        raise ValidationError("empirical availability needs a loss-mode trace")
    out = []
    for a, s in zip(trace.arrived.tolist(), trace.served.tolist()):
        out.append(s / a if a > 0 else None)
    return out


def run(config: SimConfig, m: int, policy: str = "none") -> SimTrace:
    """Simulate a fleet of ``m`` vehicles under the configured demand.

    policy "none" never repositions; "realtime-dispatch" plans integer
    moves at every repositioning boundary using the current fleet state.
    Initial vehicles spread uniformly, remainder to the lowest indices.
    Within a step the order is: park finished trips, admit customer
    arrivals, board, then dispatch; vehicle conservation is asserted at
    every processed step.
    """
    if m < 0:
        raise ValidationError("fleet size must be nonnegative")
    if policy not in ("none", "realtime-dispatch"):
        raise ValidationError(f"unknown policy {policy!r}")
    prof = config.profile
    n = prof.n_stations
    dt = config.dt
    steps_total = round(config.duration / dt)
    steps_hour = max(1, round(SECONDS_PER_HOUR / dt))
    reb_steps = round(config.rebalance_every / dt)

    root = np.random.SeedSequence(config.seed)
    children = root.spawn(2 * n)
    arr_rng = [np.random.default_rng(s) for s in children[:n]]
    trv_rng = [np.random.default_rng(s) for s in children[n:]]

    idle = np.full(n, m // n, dtype=np.int64)
    idle[: m % n] += 1
    enroute = np.zeros((n, n), dtype=np.int64)
    traveling = 0
    trips = []  # heap of (finish_t, seq, origin, dest, is_reb)
    seq = 0

    queues = [deque() for _ in range(n)]  # indices into customers
    customers = []  # mutable [t_arr, origin, dest, board_t, lost]
    dispatches = []
    samples = []
    waits = []
    arrived = np.zeros(n, dtype=np.int64)
    served = np.zeros(n, dtype=np.int64)
    lost = np.zeros(n, dtype=np.int64)
    reb_trips = 0
    reb_clipped = 0

    net = prof.slice_for_hour(0)

    def depart(origin: int, dest: int, now: float, is_reb: bool):
        nonlocal seq, traveling
        mean_s = net.T[origin, dest] * SECONDS_PER_HOUR
        if config.travel == "exponential":
            dur = trv_rng[origin].exponential(mean_s)
        else:
            dur = mean_s
        heapq.heappush(trips, (now + dur, seq, origin, dest, is_reb))
        seq += 1
        idle[origin] -= 1
        enroute[origin, dest] += 1
        traveling += 1

    # Per-hour-block arrival data, refreshed lazily.
    block = -1
    counts = None          # (n, block_len) per-step arrival counts
    dests = None           # per-station destination draws for the block
    dptr = None
    arrival_steps = None   # global step indices with any arrival
    aptr = 0
    block_end = 0

    step = 0
    while step < steps_total:
        this_block = step // steps_hour
        if this_block != block:
            block = this_block
            net = prof.slice_for_hour(block)
            start = block * steps_hour
            block_end = min(start + steps_hour, steps_total)
            length = block_end - start
            per_step = net.lam * (dt / SECONDS_PER_HOUR)
            counts = np.stack(
                [arr_rng[i].poisson(per_step[i], length) for i in range(n)]
            )
            dests = []
            for i in range(n):
                total = int(counts[i].sum())
                if total:
                    dests.append(arr_rng[i].choice(n, size=total, p=net.P[i]))
                else:
                    dests.append(np.empty(0, dtype=np.int64))
            dptr = [0] * n
            arrival_steps = start + np.nonzero(counts.any(axis=0))[0]
            aptr = 0

        while aptr < len(arrival_steps) and arrival_steps[aptr] < step:
            aptr += 1

        nxt = block_end
        if aptr < len(arrival_steps):
            nxt = min(nxt, int(arrival_steps[aptr]))
        if trips:
            due = max(step, math.ceil(trips[0][0] / dt - 1e-9))
            nxt = min(nxt, due)
        if policy == "realtime-dispatch":
            k = ((step + reb_steps - 1) // reb_steps) * reb_steps
            if k == 0:
                k = reb_steps
            nxt = min(nxt, k)
        if config.sample_every:
            k = ((step + config.sample_every - 1)
                 // config.sample_every) * config.sample_every
            nxt = min(nxt, k)
        if nxt >= block_end:
            step = block_end
            continue
        step = nxt
        t = step * dt

        while trips and trips[0][0] <= t + 1e-9:
            _, _, o, d, _ = heapq.heappop(trips)
            enroute[o, d] -= 1
            idle[d] += 1
            traveling -= 1

        col = step - block * steps_hour
        if aptr < len(arrival_steps) and arrival_steps[aptr] == step:
            aptr += 1
            for i in range(n):
                c = int(counts[i, col])
                for _ in range(c):
                    dest = int(dests[i][dptr[i]])
                    dptr[i] += 1
                    arrived[i] += 1
                    if config.mode == "loss":
                        if idle[i] > 0:
                            customers.append((t, i, dest, t, False))
                            served[i] += 1
                            depart(i, dest, t, False)
                        else:
                            customers.append((t, i, dest, None, True))
                            lost[i] += 1
                    else:
                        customers.append([t, i, dest, None, False])
                        queues[i].append(len(customers) - 1)

        if config.mode == "queue":
            for i in range(n):
                while idle[i] > 0 and queues[i]:
                    rec = customers[queues[i].popleft()]
                    rec[3] = t
                    waits.append(t - rec[0])
                    served[i] += 1
                    depart(i, rec[2], t, False)

        if policy == "realtime-dispatch" and step > 0 and step % reb_steps == 0:
            state = FleetState(
                v=idle.copy(), v_enroute=enroute.copy(),
                c_wait=np.array([len(q) for q in queues], dtype=np.int64),
                c_boarding=np.zeros((n, n), dtype=np.int64), t=t,
            )
            order = plan_dispatch(state, m, net.T)
            sent = 0
            for i in range(n):
                for j in range(n):
                    k = min(int(order.num[i, j]), int(idle[i]))
                    for _ in range(k):
                        depart(i, j, t, True)
                    sent += k
            requested = order.total()
            reb_trips += sent
            reb_clipped += requested - sent
            dispatches.append((t, requested, sent, order.num.tolist()))

        if config.sample_every and step % config.sample_every == 0:
            samples.append((t, idle.tolist(),
                            [len(q) for q in queues]))

        if int(idle.sum()) + traveling != m:
            raise AssertionError(
                f"vehicle conservation broken at t={t}: "
                f"{int(idle.sum())} idle + {traveling} traveling != {m}"
            )
        step += 1

    customers = tuple(tuple(rec) for rec in customers)
    return SimTrace(
        m=m, n_stations=n, mode=config.mode, duration=config.duration,
        seed=config.seed, customers=customers, dispatches=tuple(dispatches),
        samples=tuple(samples), arrived=arrived, served=served, lost=lost,
        waits=np.array(waits, dtype=float), reb_trips=reb_trips,
        reb_clipped=reb_clipped,
    )
