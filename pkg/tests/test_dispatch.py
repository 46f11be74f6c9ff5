import numpy as np
import pytest

from modfleet import (
    DispatchOrder,
    FleetState,
    ValidationError,
    excess_and_target,
    plan_dispatch,
)


def simple_state(v, c_wait=None, enroute=None, boarding=None):
    n = len(v)
    return FleetState(
        v=np.array(v),
        v_enroute=np.zeros((n, n), dtype=int) if enroute is None else np.array(enroute),
        c_wait=np.zeros(n, dtype=int) if c_wait is None else np.array(c_wait),
        c_boarding=np.zeros((n, n), dtype=int) if boarding is None else np.array(boarding),
    )


def uniform_times(n):
    t = np.ones((n, n))
    np.fill_diagonal(t, 0.0)
    return t


def random_state(rng, n, m):
    """Consistent fleet snapshot: m vehicles split over idle and en route,
    and every queued customer that can board is boarding (the equal-share
    target is only guaranteed feasible under maximal boarding)."""
    idle = rng.multinomial(m, np.full(n, 1.0 / n))
    moving = rng.integers(0, idle + 1)
    enroute = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        if moving[i]:
            dests = rng.integers(0, n - 1, size=moving[i])
            dests = dests + (dests >= i)
            for d in dests:
                enroute[i, d] += 1
    idle = idle - moving
    c_wait = rng.poisson(1.0, size=n)
    boarding = np.zeros((n, n), dtype=np.int64)
    for j in range(n):
        k = min(int(idle[j]), int(c_wait[j]))
        for _ in range(k):
            d = int(rng.integers(0, n - 1))
            boarding[j, d + (d >= j)] += 1
    return FleetState(v=idle, v_enroute=enroute, c_wait=c_wait,
                      c_boarding=boarding)


class TestExcessAndTarget:
    def test_worked_example(self):
        # one vehicle already heading to station 1; one customer queued there
        state = simple_state([3, 0], c_wait=[0, 1], enroute=[[0, 1], [0, 0]])
        excess, target = excess_and_target(state, 4)
        assert excess.tolist() == [3, 0]
        assert target == 1

    def test_uniform_idle_fleet(self):
        state = simple_state([1, 1, 1, 1, 1])
        excess, target = excess_and_target(state, 5)
        assert excess.tolist() == [1, 1, 1, 1, 1]
        assert target == 1

    def test_swamped_station_goes_negative(self):
        state = simple_state([0, 5], c_wait=[3, 0])
        excess, target = excess_and_target(state, 5)
        assert excess.tolist() == [-3, 5]
        # three unmet customers shrink the distributable excess
        assert target == (5 - 3) // 2

    def test_boarding_counts_toward_destination(self):
        # two customers at station 0 boarding toward station 1
        state = FleetState(
            v=np.array([3, 0]), v_enroute=np.zeros((2, 2), dtype=int),
            c_wait=np.array([2, 0]),
            c_boarding=np.array([[0, 2], [0, 0]]),
        )
        excess, _ = excess_and_target(state, 3)
        assert excess.tolist() == [1, 2]

    def test_inconsistent_total_rejected(self):
        state = simple_state([1, 1])
        with pytest.raises(ValidationError, match="vehicles"):
            excess_and_target(state, 5)

    def test_boarding_exceeding_idle_rejected(self):
        with pytest.raises(ValidationError, match="boarding"):
            FleetState(v=np.array([1, 0]),
                       v_enroute=np.zeros((2, 2), dtype=int),
                       c_wait=np.zeros(2, dtype=int),
                       c_boarding=np.array([[0, 2], [0, 0]]))


class TestPlanDispatch:
    def test_single_deficit(self):
        state = simple_state([3, 0], c_wait=[0, 1], enroute=[[0, 1], [0, 0]])
        order = plan_dispatch(state, 4, uniform_times(2))
        assert order.num[0, 1] == 1
        assert order.total() == 1

    def test_already_balanced_sends_nothing(self):
        state = simple_state([2, 2, 2])
        order = plan_dispatch(state, 6, uniform_times(3))
        assert order.total() == 0

    def test_three_station_worked_example(self):
        state = simple_state([4, 0, 2])
        order = plan_dispatch(state, 6, uniform_times(3))
        assert order.num[0, 1] == 2
        assert order.total() == 2

    def test_surplus_station_keeps_extra(self):
        # station 0 has 5, target is 2: only the deficit of station 1 moves
        state = simple_state([5, 0, 1])
        order = plan_dispatch(state, 6, uniform_times(3))
        excess, target = excess_and_target(state, 6)
        after = excess + order.num.sum(axis=0) - order.num.sum(axis=1)
        assert np.all(after >= target)
        assert order.total() == sum(max(target - e, 0) for e in excess)

    def test_relay_when_cheaper(self):
        travel = np.array([[0.0, 1.0, 5.0], [1.0, 0.0, 1.0], [5.0, 1.0, 0.0]])
        state = simple_state([6, 0, 0])
        order = plan_dispatch(state, 6, travel)
        # station 2 needs 2; routing through station 1 costs 2 per vehicle
        assert order.num[0, 1] == 4
        assert order.num[1, 2] == 2
        after = np.array([6, 0, 0]) + order.num.sum(axis=0) - order.num.sum(axis=1)
        assert np.all(after >= 2)

    def test_randomized_integrality_and_coverage(self):
        rng = np.random.default_rng(99)
        for _ in range(300):
            n = int(rng.integers(2, 10))
            m = int(rng.integers(0, 8 * n))
            state = random_state(rng, n, m)
            travel = rng.uniform(0.5, 3.0, size=(n, n))
            np.fill_diagonal(travel, 0.0)
            order = plan_dispatch(state, m, travel)
            excess, target = excess_and_target(state, m)
            after = excess + order.num.sum(axis=0) - order.num.sum(axis=1)
            assert np.all(after >= target)
            assert np.all(order.num >= 0)

    def test_zero_order_fixed_point(self):
        rng = np.random.default_rng(123)
        for _ in range(50):
            n = int(rng.integers(2, 8))
            base = int(rng.integers(1, 5))
            v = np.full(n, base) + rng.integers(0, 3, size=n)
            state = simple_state(v.tolist())
            order = plan_dispatch(state, int(v.sum()), uniform_times(n))
            excess, target = excess_and_target(state, int(v.sum()))
            if np.all(excess >= target):
                assert order.total() == 0

    def test_order_validation(self):
        with pytest.raises(ValidationError, match="origin"):
            DispatchOrder(num=np.array([[1, 0], [0, 0]]))
        with pytest.raises(ValidationError, match="nonnegative"):
            DispatchOrder(num=np.array([[0, -1], [0, 0]]))
