"""
Discrete-event simulation of one epoch on the FaaS cluster.

Containers move through pending -> cold_starting -> idle/busy ->
shutting_down; requests are routed, queued earliest-deadline-first and
expire at their deadline. Power is integrated between events; an epoch
starts where the previous one's spill-over ended.
"""
import dataclasses
import heapq
import logging
import math
from bisect import insort
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from models.schemas import ClusterSpec, EnvironmentSeries, FunctionProfile, PowerSample, SimulationParams
from models.state import (
    ClusterState,
    Container,
    ContainerState,
    EpochMetrics,
    EventKind,
    Plan,
    Request,
    RequestStatus,
)
from services.power_service import EnergyLedger, cold_start_latency

logger = logging.getLogger(__name__)


class CapacityError(ValueError):
    """A plan or transition does not fit the cluster."""


class RoutingKind(str, Enum):
    ROUTED = "routed"
    QUEUED = "queued"
    REJECTED = "rejected"


@dataclass(frozen=True)
class RoutingOutcome:
    kind: RoutingKind
    container_id: Optional[int] = None


@dataclass
class EpochRun:
    """Full record of one simulated epoch."""
    metrics: EpochMetrics
    state: ClusterState
    requests: List[Request]
    samples: List[PowerSample] = field(default_factory=list)
    event_log: List[Tuple[float, float, EventKind]] = field(default_factory=list)


def violation_rate(metrics: EpochMetrics, function_id: str) -> float:
    """SL_{f,e} = V_{f,e} / N_{f,e}."""
    total = metrics.totals.get(function_id, 0)
    if total <= 0:
        raise ValueError(f"no requests for {function_id}: violation rate undefined")
    return metrics.violations.get(function_id, 0) / total


class EpochSimulator:
    """Simulates epochs for a fixed cluster, environment and profile set."""

    def __init__(
        self,
        cluster: ClusterSpec,
        env: EnvironmentSeries,
        profiles: Mapping[str, FunctionProfile],
        params: Optional[SimulationParams] = None,
        record_samples: bool = False,
        check_invariants: bool = False,
    ):
        self.cluster = cluster
        self.env = env
        self.profiles = profiles
        self.params = params or SimulationParams()
        self.record_samples = record_samples
        self.check_invariants = check_invariants

    # ------------------------------------------------------------------
    # resources and events

    def _fits(self, state: ClusterState, node_id: int, cores: int, dram: int) -> bool:
        node = self.cluster.nodes[node_id]
        return (state.cores_used[node_id] + cores <= node.total_cores
                and state.dram_used[node_id] + dram <= node.total_dram)

    def _allocate(self, state: ClusterState, node_id: int, cores: int, dram: int) -> None:
        state.cores_used[node_id] += cores
        state.dram_used[node_id] += dram

    def _release(self, state: ClusterState, node_id: int, cores: int, dram: int) -> None:
        state.cores_used[node_id] -= cores
        state.dram_used[node_id] -= dram

    def _push(self, state: ClusterState, time: float, kind: EventKind, payload) -> None:
        heapq.heappush(state.events, (max(time, state.clock), int(kind), state.next_event_seq, state.clock, payload))
        state.next_event_seq += 1
        if kind != EventKind.DEADLINE:
            state.work_events += 1

    def _is_stale(self, state: ClusterState, kind: EventKind, payload) -> bool:
        """Events that no longer change anything and must not move the clock."""
        if kind == EventKind.DEADLINE:
            return payload.status != RequestStatus.PENDING
        if kind == EventKind.COLD_START_DONE:
            container = state.containers.get(payload)
            return container is None or container.state != ContainerState.COLD_STARTING
        return False

    def _capacity(self, container: Container) -> int:
        return container.capacity(self.params.concurrency_per_unit)

    def _effective_cores(self, container: Container) -> float:
        if container.state == ContainerState.PENDING:
            return 0.0
        if container.state == ContainerState.COLD_STARTING:
            return container.cores * self.params.startup_util
        if container.state == ContainerState.SHUTTING_DOWN:
            return container.cores * self.params.shutdown_util
        busy = min(1.0, container.active_requests / self._capacity(container))
        return container.cores * (busy + (1.0 - busy) * self.params.idle_util)

    def _advance(self, state: ClusterState, ledger: EnergyLedger, time: float) -> None:
        if time > state.clock:
            usages = [0.0] * self.cluster.size
            load = 0.0
            for c in state.containers.values():
                cores = self._effective_cores(c)
                usages[c.node_id] += cores
                if c.serving:
                    load += cores
            ledger.add(state.clock, time, usages, load)
            state.clock = time

    def _check_resources(self, state: ClusterState) -> None:
        cores = [0] * self.cluster.size
        dram = [0] * self.cluster.size
        for c in state.containers.values():
            if c.state != ContainerState.PENDING:
                cores[c.node_id] += c.cores
                dram[c.node_id] += c.dram
        for node in self.cluster.nodes:
            i = node.node_id
            if cores[i] != state.cores_used[i] or dram[i] != state.dram_used[i]:
                raise RuntimeError(f"node {i}: occupancy bookkeeping drifted")
            if cores[i] > node.total_cores or dram[i] > node.total_dram:
                raise RuntimeError(f"node {i}: over capacity at t={state.clock}")

    # ------------------------------------------------------------------
    # request handling

    def _start(self, state: ClusterState, container: Container, request: Request) -> bool:
        """Begin executing request on container, or drop it if it cannot meet its deadline."""
        now = state.clock
        profile = self.profiles[request.function_id]
        cold = max(0.0, min(now, container.ready_at) - request.arrival) if container.ready_at > request.arrival else 0.0
        wait = max(0.0, now - request.arrival - cold)
        finish = request.arrival + wait + cold + profile.avg_exec_time
        request.container_id = None
        if finish > request.deadline:
            request.status = RequestStatus.VIOLATED
            return False
        request.wait = wait
        request.cold_start = cold
        request.finish = finish
        request.status = RequestStatus.RUNNING
        container.active_requests += 1
        if container.state == ContainerState.IDLE:
            container.state = ContainerState.BUSY
            container.state_entered_at = now
        self._push(state, finish, EventKind.EXEC_DONE, (container.container_id, request))
        return True

    def _dispatch(self, state: ClusterState, container: Container) -> None:
        capacity = self._capacity(container)
        while container.queued_requests and container.active_requests < capacity:
            _, _, request = container.queued_requests.pop(0)
            self._start(state, container, request)
        if container.state == ContainerState.BUSY and container.active_requests == 0:
            container.state = ContainerState.IDLE
            container.state_entered_at = state.clock

    def route_request(self, state: ClusterState, request: Request) -> RoutingOutcome:
        """
        Route an arriving request.

        Ready containers of its ID with free slots are preferred (most free
        slots, then lowest node, then lowest container id); otherwise it joins
        the shortest queue and the node is autoscaled.
        """
        candidates = [c for c in state.containers.values() if c.function_id == request.function_id and c.serving]
        if not candidates:
            return RoutingOutcome(RoutingKind.REJECTED)

        free = [c for c in candidates if c.is_ready and c.active_requests < self._capacity(c)]
        if free:
            target = min(free, key=lambda c: (-(self._capacity(c) - c.active_requests), c.node_id, c.container_id))
            if not self._start(state, target, request):
                return RoutingOutcome(RoutingKind.REJECTED, target.container_id)
            return RoutingOutcome(RoutingKind.ROUTED, target.container_id)

        target = min(candidates, key=lambda c: (len(c.queued_requests), c.node_id, c.container_id))
        request.container_id = target.container_id
        insort(target.queued_requests, (request.deadline, request.seq, request))
        self.autoscale(state, target.node_id)
        if request.status == RequestStatus.RUNNING:
            return RoutingOutcome(RoutingKind.ROUTED, target.container_id)
        if request.status == RequestStatus.VIOLATED:
            # dispatched by the autoscale but too late to meet the deadline
            return RoutingOutcome(RoutingKind.REJECTED, target.container_id)
        return RoutingOutcome(RoutingKind.QUEUED, target.container_id)

    def autoscale(self, state: ClusterState, node_id: int) -> ClusterState:
        """
        Grow containers in place, one base unit at a time, on one node.

        The container with the most active + queued requests that exceeds
        its capacity grows first; stops once the node cannot fit a unit.
        """
        while True:
            backlog = [
                c for c in state.containers.values()
                if c.node_id == node_id
                and c.state in (ContainerState.COLD_STARTING, ContainerState.IDLE, ContainerState.BUSY)
                and c.demand() > self._capacity(c)
            ]
            if not backlog:
                break
            container = max(backlog, key=lambda c: (c.demand(), -c.container_id))
            if not self._fits(state, node_id, container.base_cores, container.base_dram):
                break
            self._allocate(state, node_id, container.base_cores, container.base_dram)
            container.units += 1
            if container.target_units is not None and container.units >= container.target_units:
                container.target_units = None
            logger.debug("autoscale: container %d (%s) -> %d units", container.container_id,
                         container.function_id, container.units)
            if container.is_ready:
                self._dispatch(state, container)
        return state

    # ------------------------------------------------------------------
    # plan transitions

    def _admit_pending(self, state: ClusterState, node_id: int) -> None:
        """Start cold starts and finish in-place growth that now fit on node."""
        batch: List[Container] = []
        for c in sorted(state.containers_on(node_id), key=lambda c: c.container_id):
            if c.state == ContainerState.PENDING:
                if self._fits(state, node_id, c.cores, c.dram):
                    self._allocate(state, node_id, c.cores, c.dram)
                    batch.append(c)
            elif c.target_units is not None and c.serving:
                while c.units < c.target_units and self._fits(state, node_id, c.base_cores, c.base_dram):
                    self._allocate(state, node_id, c.base_cores, c.base_dram)
                    c.units += 1
                if c.units >= c.target_units:
                    c.target_units = None
                if c.is_ready:
                    self._dispatch(state, c)
        if not batch:
            return
        node = self.cluster.nodes[node_id]
        images = math.fsum(self.profiles[c.function_id].image_size for c in batch)
        ready_at = state.clock + cold_start_latency(node, images, self.cluster.switch_delay)
        for c in batch:
            c.state = ContainerState.COLD_STARTING
            c.state_entered_at = state.clock
            c.ready_at = ready_at
            self._push(state, ready_at, EventKind.COLD_START_DONE, c.container_id)

    def _begin_shutdown(self, state: ClusterState, container: Container) -> List[Request]:
        orphans = [request for _, _, request in container.queued_requests]
        container.queued_requests = []
        container.target_units = None
        container.state = ContainerState.SHUTTING_DOWN
        container.state_entered_at = state.clock
        self._push(state, state.clock + self.cluster.shutdown_duration, EventKind.SHUTDOWN_DONE, container.container_id)
        return orphans

    def _transition(self, state: ClusterState, plan: Plan) -> Tuple[int, int]:
        unknown = [f for f in plan.placements if f not in self.profiles]
        if unknown:
            raise CapacityError(f"plan references unknown function ids: {', '.join(unknown)}")
        problems = plan.capacity_violations(self.cluster, self.profiles)
        if problems:
            raise CapacityError("plan exceeds cluster capacity: " + "; ".join(problems))

        existing: Dict[Tuple[str, int], List[Container]] = {}
        for c in state.containers.values():
            if c.serving:
                existing.setdefault((c.function_id, c.node_id), []).append(c)
        desired: Dict[Tuple[str, int], List[int]] = {}
        for function_id, items in plan.placements.items():
            for node_id, units in items:
                desired.setdefault((function_id, node_id), []).append(units)

        removed: List[Container] = []
        resized: List[Tuple[Container, int]] = []
        created: List[Tuple[str, int, int]] = []
        for key in sorted(set(existing) | set(desired)):
            have = sorted(existing.get(key, []), key=lambda c: (-(c.target_units or c.units), c.container_id))
            want = sorted(desired.get(key, []), reverse=True)
            for c, units in zip(have, want):
                resized.append((c, units))
            removed.extend(have[len(want):])
            created.extend((key[0], key[1], units) for units in want[len(have):])

        orphans: List[Request] = []
        for c in removed:
            # a pending container never held resources; drop it outright
            if c.state == ContainerState.PENDING:
                orphans.extend(request for _, _, request in c.queued_requests)
                del state.containers[c.container_id]
                continue
            orphans.extend(self._begin_shutdown(state, c))

        touched = set()
        for c, units in resized:
            c.target_units = None
            if c.state == ContainerState.PENDING:
                c.units = units
            elif units < c.units:
                self._release(state, c.node_id, (c.units - units) * c.base_cores, (c.units - units) * c.base_dram)
                c.units = units
            elif units > c.units:
                c.target_units = units
            touched.add(c.node_id)

        for function_id, node_id, units in created:
            profile = self.profiles[function_id]
            container = Container(
                container_id=state.next_container_id,
                function_id=function_id,
                node_id=node_id,
                units=units,
                base_cores=profile.base_cores,
                base_dram=profile.base_dram,
                state=ContainerState.PENDING,
                state_entered_at=state.clock,
            )
            state.next_container_id += 1
            state.containers[container.container_id] = container
            touched.add(node_id)

        for node_id in sorted(touched):
            self._admit_pending(state, node_id)
        for request in sorted(orphans, key=lambda r: r.seq):
            self.route_request(state, request)
        logger.debug("plan %d applied: %d new, %d removed, %d kept",
                     plan.epoch_index, len(created), len(removed), len(resized))
        return len(created), len(removed)

    def apply_plan(self, state: ClusterState, plan: Plan) -> ClusterState:
        """
        Move the cluster towards plan at the current clock.

        Matching containers stay warm (resized in place), missing ones are
        cold-started per node batch, surplus ones shut down and keep their
        resources until the shutdown completes.
        """
        self._transition(state, plan)
        return state

    # ------------------------------------------------------------------
    # epoch loop

    def _reset_for_epoch(self, state: ClusterState) -> None:
        if state.events:
            logger.warning("discarding %d undrained events from previous epoch", len(state.events))
            state.events = []
        # work that spilled past the previous epoch end was charged there
        state.clock = state.carry_over
        state.next_event_seq = 0
        state.work_events = 0
        for c in state.containers.values():
            c.state_entered_at = state.clock
            if c.is_ready:
                c.ready_at = 0.0

    def _handle(self, state: ClusterState, kind: EventKind, payload) -> None:
        if kind == EventKind.ARRIVAL:
            request = payload
            self._push(state, request.deadline, EventKind.DEADLINE, request)
            self.route_request(state, request)
        elif kind == EventKind.DEADLINE:
            request = payload
            if request.status == RequestStatus.PENDING:
                if request.container_id is not None:
                    container = state.containers.get(request.container_id)
                    if container is not None:
                        container.queued_requests = [
                            item for item in container.queued_requests if item[2] is not request
                        ]
                    request.container_id = None
                request.status = RequestStatus.VIOLATED
        elif kind == EventKind.EXEC_DONE:
            container_id, request = payload
            request.status = (RequestStatus.COMPLETED if request.finish <= request.deadline
                              else RequestStatus.VIOLATED)
            container = state.containers.get(container_id)
            if container is not None:
                container.active_requests -= 1
                if container.is_ready:
                    self._dispatch(state, container)
                    self.autoscale(state, container.node_id)
        elif kind == EventKind.COLD_START_DONE:
            container = state.containers.get(payload)
            if container is not None and container.state == ContainerState.COLD_STARTING:
                container.state = ContainerState.IDLE
                container.state_entered_at = state.clock
                self._dispatch(state, container)
                self.autoscale(state, container.node_id)
        elif kind == EventKind.SHUTDOWN_DONE:
            container = state.containers.pop(payload, None)
            if container is not None:
                self._release(state, container.node_id, container.cores, container.dram)
                self._admit_pending(state, container.node_id)
                self.autoscale(state, container.node_id)

    def simulate_epoch_detailed(
        self, state: ClusterState, plan: Plan, arrivals: Sequence[Request]
    ) -> EpochRun:
        """Like simulate_epoch but also returns requests, power samples and the event log."""
        for before, after in zip(arrivals, arrivals[1:]):
            if after.arrival < before.arrival:
                raise ValueError("arrivals must be sorted by arrival time")
        state = state.copy()
        self._reset_for_epoch(state)
        requests = [dataclasses.replace(r, status=RequestStatus.PENDING, finish=None, wait=0.0,
                                        cold_start=0.0, container_id=None) for r in arrivals]
        ledger = EnergyLedger(
            cluster=self.cluster,
            env=self.env,
            epoch_start=plan.epoch_index * self.cluster.epoch_length,
            record_samples=self.record_samples,
        )
        event_log: List[Tuple[float, float, EventKind]] = []

        cold_starts, shutdowns = self._transition(state, plan)
        for request in requests:
            self._push(state, request.arrival, EventKind.ARRIVAL, request)

        while state.events:
            time, kind, _, scheduled_at, payload = heapq.heappop(state.events)
            kind = EventKind(kind)
            if kind != EventKind.DEADLINE:
                state.work_events -= 1
            if self._is_stale(state, kind, payload):
                continue
            # with no work left, expiring requests resolve without running the clock on
            if kind != EventKind.DEADLINE or state.work_events > 0:
                self._advance(state, ledger, time)
            if self.check_invariants:
                event_log.append((scheduled_at, time, kind))
            self._handle(state, kind, payload)
            if self.check_invariants:
                self._check_resources(state)
        self._advance(state, ledger, max(self.cluster.epoch_length, state.clock))
        state.carry_over = state.clock - self.cluster.epoch_length

        metrics = self._collect(requests, ledger)
        metrics.cold_starts = cold_starts
        metrics.shutdowns = shutdowns
        metrics.containers_end = len(state.containers)
        return EpochRun(metrics=metrics, state=state, requests=requests,
                        samples=ledger.samples, event_log=event_log)

    def simulate_epoch(
        self, state: ClusterState, plan: Plan, arrivals: Sequence[Request]
    ) -> Tuple[EpochMetrics, ClusterState]:
        """Apply plan, replay arrivals to completion and account the epoch."""
        run = self.simulate_epoch_detailed(state, plan, arrivals)
        return run.metrics, run.state

    def _collect(self, requests: Sequence[Request], ledger: EnergyLedger) -> EpochMetrics:
        totals: Dict[str, int] = {}
        violations: Dict[str, int] = {}
        for request in requests:
            totals[request.function_id] = totals.get(request.function_id, 0) + 1
            if request.status != RequestStatus.COMPLETED:
                violations[request.function_id] = violations.get(request.function_id, 0) + 1
        for function_id in totals:
            violations.setdefault(function_id, 0)
        rates = {f: violations[f] / totals[f] for f in sorted(totals)}
        return EpochMetrics(
            carbon=ledger.carbon,
            cost=ledger.cost,
            water_carbon=ledger.water_carbon,
            energy=ledger.energy_kwh,
            violations=dict(sorted(violations.items())),
            totals=dict(sorted(totals.items())),
            slo_rates=rates,
            slo_average=math.fsum(rates.values()) / len(rates) if rates else 0.0,
            avg_load=ledger.average_load(),
            duration=ledger.elapsed,
        )
