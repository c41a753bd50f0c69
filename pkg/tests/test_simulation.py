from bisect import insort

import pytest

from models.schemas import EnvironmentSeries
from models.state import ClusterState, ContainerState, EpochMetrics, Plan, RequestStatus
from services.simulation_service import CapacityError, EpochSimulator, RoutingKind, violation_rate
from tests.conftest import make_cluster, make_profiles, make_request, warm_state


class TestApplyPlan:
    def test_identical_plan_is_fixed_point(self, simulator):
        placements = {"f1": [(0, 1), (1, 2)], "f2": [(1, 1)]}
        state = warm_state(simulator, placements)
        metrics, end = simulator.simulate_epoch(state, Plan.build(placements), [])
        assert (metrics.cold_starts, metrics.shutdowns) == (0, 0)
        assert end.distribution().key() == Plan.build(placements).key()

    def test_empty_plan_shuts_everything_down(self, simulator):
        state = warm_state(simulator, {"f1": [(0, 1), (1, 1)], "f2": [(0, 1)]})
        cores_before = list(state.cores_used)
        simulator.apply_plan(state, Plan.build({}))
        assert all(c.state == ContainerState.SHUTTING_DOWN for c in state.containers.values())
        assert state.cores_used == cores_before
        done = sorted(t for t, kind, *_ in state.events)
        assert done == [pytest.approx(15.0)] * 3

        metrics, end = simulator.simulate_epoch(
            warm_state(simulator, {"f1": [(0, 1), (1, 1)], "f2": [(0, 1)]}), Plan.build({}), []
        )
        assert metrics.shutdowns == 3
        assert end.containers == {}
        assert end.cores_used == [0, 0]

    def test_cold_start_batch_on_one_node(self, simulator):
        state = ClusterState.empty(simulator.cluster)
        simulator.apply_plan(state, Plan.build({"f1": [(0, 1)], "f2": [(0, 1)]}))
        ready = [c.ready_at for c in state.containers.values()]
        assert ready == [pytest.approx(2.1, rel=1e-9)] * 2
        assert all(c.state == ContainerState.COLD_STARTING for c in state.containers.values())

    def test_over_capacity_plan_rejected(self, simulator):
        with pytest.raises(CapacityError, match="node 0"):
            simulator.apply_plan(ClusterState.empty(simulator.cluster), Plan.build({"f1": [(0, 5)]}))

    def test_unknown_function_rejected(self, simulator):
        with pytest.raises(CapacityError, match="unknown"):
            simulator.apply_plan(ClusterState.empty(simulator.cluster), Plan.build({"zz": [(0, 1)]}))

    def test_new_container_waits_for_shutdown(self, env):
        profiles = make_profiles(f1=(3.0, 125.0), f2=(1.0, 125.0))
        sim = EpochSimulator(make_cluster(cores=8), env, profiles, check_invariants=True)
        state = warm_state(sim, {"f1": [(0, 4)]})
        request = make_request(profiles, "f2", 1.0, laxity=30.0)
        run = sim.simulate_epoch_detailed(state, Plan.build({"f2": [(0, 4)]}), [request])
        done = run.requests[0]
        assert done.status == RequestStatus.COMPLETED
        assert done.cold_start == pytest.approx(15.1, rel=1e-9)
        assert done.finish == pytest.approx(17.1, rel=1e-9)
        assert [c.function_id for c in run.state.containers.values()] == ["f2"]


class TestRouting:
    def test_single_free_container(self, simulator, profiles):
        state = warm_state(simulator, {"f1": [(0, 1)]})
        (container,) = state.containers_of("f1")
        outcome = simulator.route_request(state, make_request(profiles, "f1", 0.0))
        assert outcome.kind == RoutingKind.ROUTED
        assert outcome.container_id == container.container_id

    def test_most_free_slots_wins(self, simulator, profiles):
        state = warm_state(simulator, {"f1": [(0, 1), (1, 3)]})
        big = next(c for c in state.containers_of("f1") if c.units == 3)
        outcome = simulator.route_request(state, make_request(profiles, "f1", 0.0))
        assert outcome.container_id == big.container_id

    def test_no_container_violates_at_deadline(self, simulator, profiles):
        request = make_request(profiles, "f1", 10.0)
        run = simulator.simulate_epoch_detailed(ClusterState.empty(simulator.cluster),
                                                Plan.build({"f1": []}), [request])
        assert run.requests[0].status == RequestStatus.VIOLATED
        assert run.metrics.violations == {"f1": 1}
        assert run.metrics.slo_rates == {"f1": 1.0}

    def test_late_request_dropped_at_dispatch(self, env):
        profiles = make_profiles(f1=(3.0, 125.0))
        sim = EpochSimulator(make_cluster(nodes=1, cores=2), env, profiles, check_invariants=True)
        state = warm_state(sim, {"f1": [(0, 1)]})
        requests = [make_request(profiles, "f1", 0.0, laxity=1.5, seq=0),
                    make_request(profiles, "f1", 0.1, laxity=1.5, seq=1)]
        run = sim.simulate_epoch_detailed(state, Plan.build({"f1": [(0, 1)]}), requests)
        assert [r.status for r in run.requests] == [RequestStatus.COMPLETED, RequestStatus.VIOLATED]
        assert run.requests[1].finish is None

    def test_request_dropped_by_autoscale_is_rejected(self, simulator, profiles):
        state = warm_state(simulator, {"f1": [(0, 1)]})
        (container,) = state.containers_of("f1")
        container.active_requests = 1
        request = make_request(profiles, "f1", 0.0, laxity=0.5)
        outcome = simulator.route_request(state, request)
        assert outcome.kind == RoutingKind.REJECTED
        assert request.status == RequestStatus.VIOLATED
        assert container.units == 2
        assert container.queued_requests == []


class TestAutoscale:
    def queue(self, container, profiles, count, start_seq=0):
        for i in range(count):
            request = make_request(profiles, container.function_id, 0.0, laxity=100.0, seq=start_seq + i)
            request.container_id = container.container_id
            insort(container.queued_requests, (request.deadline, request.seq, request))

    def test_full_node_unchanged(self, simulator, profiles):
        state = warm_state(simulator, {"f1": [(0, 4)]})
        (container,) = state.containers_of("f1")
        container.active_requests = 4
        self.queue(container, profiles, 2)
        simulator.autoscale(state, 0)
        assert container.units == 4
        assert len(container.queued_requests) == 2
        assert state.cores_used[0] == 8

    def test_grows_until_queue_drains(self, env, profiles):
        sim = EpochSimulator(make_cluster(nodes=1, cores=12), env, profiles)
        state = warm_state(sim, {"f1": [(0, 1)]})
        (container,) = state.containers_of("f1")
        container.active_requests = 1
        self.queue(container, profiles, 5)
        sim.autoscale(state, 0)
        assert container.units == 6
        assert container.queued_requests == []
        assert container.active_requests == 6
        assert state.cores_used[0] == 12

    def test_largest_backlog_grows_first(self, env, profiles):
        sim = EpochSimulator(make_cluster(nodes=1, cores=6), env, profiles)
        state = warm_state(sim, {"f1": [(0, 1)], "f2": [(0, 1)]})
        (busy,) = state.containers_of("f1")
        (other,) = state.containers_of("f2")
        busy.active_requests = other.active_requests = 1
        self.queue(busy, profiles, 6)
        self.queue(other, profiles, 1, start_seq=100)
        sim.autoscale(state, 0)
        assert (busy.units, other.units) == (2, 1)


class TestEpoch:
    def test_idle_cluster_carbon(self, simulator):
        metrics, _ = simulator.simulate_epoch(ClusterState.empty(simulator.cluster), Plan.build({}), [])
        # (2 nodes x 100 W + 50 + 30) x 1.3 cooling, 900 s at 400 g/kWh
        assert metrics.carbon == pytest.approx(400.0 * 364.0 * 900.0 / 3.6e6, rel=1e-9)
        assert metrics.slo_average == 0.0
        assert not metrics.slo_defined
        assert metrics.avg_load == 0.0
        assert metrics.duration == 900.0

    def test_warm_request_runs_without_delay(self, simulator, profiles):
        state = warm_state(simulator, {"f1": [(0, 1)]})
        run = simulator.simulate_epoch_detailed(state, Plan.build({"f1": [(0, 1)]}),
                                                [make_request(profiles, "f1", 10.0)])
        request = run.requests[0]
        assert (request.wait, request.cold_start) == (0.0, 0.0)
        assert request.finish == pytest.approx(13.0)
        assert request.status == RequestStatus.COMPLETED

    def test_request_waits_for_cold_start(self, simulator, profiles):
        run = simulator.simulate_epoch_detailed(
            ClusterState.empty(simulator.cluster),
            Plan.build({"f1": [(0, 1)], "f2": [(0, 1)]}),
            [make_request(profiles, "f1", 0.0, laxity=10.0)],
        )
        request = run.requests[0]
        assert request.cold_start == pytest.approx(2.1, rel=1e-9)
        assert request.wait == pytest.approx(0.0, abs=1e-12)
        assert request.finish == pytest.approx(5.1, rel=1e-9)
        assert request.status == RequestStatus.COMPLETED

    def test_unsorted_arrivals_rejected(self, simulator, profiles):
        arrivals = [make_request(profiles, "f1", 5.0), make_request(profiles, "f1", 1.0)]
        with pytest.raises(ValueError, match="sorted"):
            simulator.simulate_epoch(ClusterState.empty(simulator.cluster), Plan.build({"f1": [(0, 1)]}), arrivals)

    def test_input_state_untouched(self, simulator, profiles):
        state = warm_state(simulator, {"f1": [(0, 1)]})
        before = state.copy()
        simulator.simulate_epoch(state, Plan.build({}), [make_request(profiles, "f1", 1.0)])
        assert state.cores_used == before.cores_used
        assert state.containers.keys() == before.containers.keys()

    def test_hourly_intensity_follows_epoch_index(self, cluster, profiles):
        ci = tuple(float(100 * (h + 1)) for h in range(24))
        env = EnvironmentSeries(carbon_intensity=ci, energy_price=(0.0,) * 24,
                                cooling_eff=(0.0,) * 24, water_factor=(0.0,) * 24)
        sim = EpochSimulator(cluster, env, profiles)
        empty = ClusterState.empty(cluster)
        first, _ = sim.simulate_epoch(empty, Plan.build({}, epoch_index=0), [])
        later, _ = sim.simulate_epoch(empty, Plan.build({}, epoch_index=8), [])
        assert later.carbon == pytest.approx(3 * first.carbon, rel=1e-9)


class TestEpochBoundaries:
    PROFILES = make_profiles(f1=(6.5, 125.0))
    PLACEMENTS = {"f1": [(0, 1)]}

    def spill_over(self, env):
        sim = EpochSimulator(make_cluster(), env, self.PROFILES, check_invariants=True)
        state = warm_state(sim, self.PLACEMENTS)
        run = sim.simulate_epoch_detailed(state, Plan.build(self.PLACEMENTS),
                                          [make_request(self.PROFILES, "f1", 899.0)])
        return sim, run

    def test_tail_ends_with_last_work(self, env):
        _, run = self.spill_over(env)
        assert run.requests[0].finish == pytest.approx(905.5)
        assert run.metrics.duration == pytest.approx(905.5)
        assert run.state.carry_over == pytest.approx(5.5)

    def test_consecutive_epochs_account_each_second_once(self, env):
        sim, first = self.spill_over(env)
        second, _ = sim.simulate_epoch(first.state, Plan.build(self.PLACEMENTS, epoch_index=1), [])
        assert first.metrics.duration + second.duration == pytest.approx(1800.0, rel=1e-12)

    def test_early_arrival_waits_for_spill_over(self, env):
        sim, first = self.spill_over(env)
        run = sim.simulate_epoch_detailed(first.state, Plan.build(self.PLACEMENTS, epoch_index=1),
                                          [make_request(self.PROFILES, "f1", 2.0)])
        request = run.requests[0]
        assert request.wait == pytest.approx(3.5)
        assert request.finish == pytest.approx(12.0)
        assert request.status == RequestStatus.COMPLETED

    def test_expiry_without_container_adds_no_tail(self, simulator, profiles):
        run = simulator.simulate_epoch_detailed(ClusterState.empty(simulator.cluster), Plan.build({"f1": []}),
                                                [make_request(profiles, "f1", 899.0)])
        assert run.requests[0].status == RequestStatus.VIOLATED
        assert run.metrics.duration == 900.0
        assert run.state.carry_over == 0.0


class TestViolationRate:
    @pytest.mark.parametrize("violations,total,expected", [(0, 10, 0.0), (3, 60, 0.05), (7, 7, 1.0)])
    def test_rate(self, violations, total, expected):
        metrics = EpochMetrics(violations={"f1": violations}, totals={"f1": total})
        assert violation_rate(metrics, "f1") == pytest.approx(expected)

    def test_undefined(self):
        with pytest.raises(ValueError, match="undefined"):
            violation_rate(EpochMetrics(), "f1")
