"""
Mutable simulation state and the plan/metric records passed between services.
"""
import copy
import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Tuple

from models.schemas import ClusterSpec, FunctionProfile


class RequestStatus(str, Enum):
    PENDING = "pending"
    RUNNING = "running"
    COMPLETED = "completed"
    VIOLATED = "violated"


@dataclass
class Request:
    """One invocation; times are seconds from the epoch start."""
    function_id: str
    arrival: float
    deadline: float
    wait: float = 0.0
    cold_start: float = 0.0
    finish: Optional[float] = None
    status: RequestStatus = RequestStatus.PENDING
    seq: int = 0
    container_id: Optional[int] = None  # container whose queue holds it


class ContainerState(str, Enum):
    PENDING = "pending"  # waiting for a shutting-down neighbour to free room
    COLD_STARTING = "cold_starting"
    IDLE = "idle"
    BUSY = "busy"
    SHUTTING_DOWN = "shutting_down"


@dataclass
class Container:
    container_id: int
    function_id: str
    node_id: int
    units: int
    base_cores: int
    base_dram: int
    state: ContainerState
    state_entered_at: float = 0.0
    ready_at: float = math.inf
    active_requests: int = 0
    queued_requests: List[Tuple[float, int, Request]] = field(default_factory=list)
    target_units: Optional[int] = None  # pending in-place growth

    @property
    def cores(self) -> int:
        return self.units * self.base_cores

    @property
    def dram(self) -> int:
        return self.units * self.base_dram

    @property
    def is_ready(self) -> bool:
        return self.state in (ContainerState.IDLE, ContainerState.BUSY)

    @property
    def serving(self) -> bool:
        """Holds or will hold capacity for its function this epoch."""
        return self.state != ContainerState.SHUTTING_DOWN

    def capacity(self, concurrency_per_unit: int) -> int:
        return self.units * concurrency_per_unit

    def demand(self) -> int:
        return self.active_requests + len(self.queued_requests)


class EventKind(IntEnum):
    """Event kinds; the value orders events that share a timestamp."""
    SHUTDOWN_DONE = 0
    COLD_START_DONE = 1
    EXEC_DONE = 2
    ARRIVAL = 3
    DEADLINE = 4


@dataclass
class ClusterState:
    clock: float
    cores_used: List[int]
    dram_used: List[int]
    containers: Dict[int, Container] = field(default_factory=dict)
    events: list = field(default_factory=list)
    next_container_id: int = 0
    next_event_seq: int = 0
    # queued events other than deadlines
    work_events: int = 0
    # seconds past the epoch end already accounted; the next epoch starts here
    carry_over: float = 0.0

    @classmethod
    def empty(cls, cluster: ClusterSpec) -> "ClusterState":
        return cls(clock=0.0, cores_used=[0] * cluster.size, dram_used=[0] * cluster.size)

    def copy(self) -> "ClusterState":
        return copy.deepcopy(self)

    def containers_of(self, function_id: str) -> List[Container]:
        return [c for c in self.containers.values() if c.function_id == function_id]

    def containers_on(self, node_id: int) -> List[Container]:
        return [c for c in self.containers.values() if c.node_id == node_id]

    def distribution(self, epoch_index: int = 0) -> "Plan":
        """The plan this state realizes (containers that are not shutting down)."""
        placements: Dict[str, List[Placement]] = {}
        for c in self.containers.values():
            if c.serving:
                placements.setdefault(c.function_id, []).append(Placement(c.node_id, c.target_units or c.units))
        return Plan.build(placements, epoch_index)


class Placement(NamedTuple):
    node_id: int
    units: int


@dataclass(frozen=True)
class Plan:
    """Distribution D: containers per function ID, canonically sorted."""
    placements: Mapping[str, Tuple[Placement, ...]]
    epoch_index: int = 0
    saturated: bool = False

    @classmethod
    def build(cls, placements: Mapping[str, Iterable], epoch_index: int = 0, saturated: bool = False) -> "Plan":
        canonical = {
            function_id: tuple(sorted(Placement(int(n), int(u)) for n, u in items))
            for function_id, items in sorted(placements.items())
        }
        return cls(placements=canonical, epoch_index=epoch_index, saturated=saturated)

    def key(self) -> Tuple:
        return tuple(sorted(self.placements.items()))

    def replace(self, function_id: str, items: Iterable) -> "Plan":
        placements = dict(self.placements)
        placements[function_id] = tuple(items)
        return Plan.build(placements, self.epoch_index)

    def container_count(self) -> int:
        return sum(len(items) for items in self.placements.values())

    def node_allocation(self, profiles: Mapping[str, FunctionProfile], num_nodes: int) -> Tuple[List[int], List[int]]:
        """Per-node (cores, DRAM MB) the plan allocates."""
        cores = [0] * num_nodes
        dram = [0] * num_nodes
        for function_id, items in self.placements.items():
            profile = profiles[function_id]
            for node_id, units in items:
                cores[node_id] += units * profile.base_cores
                dram[node_id] += units * profile.base_dram
        return cores, dram

    def capacity_violations(self, cluster: ClusterSpec, profiles: Mapping[str, FunctionProfile]) -> List[str]:
        problems = []
        for function_id, items in self.placements.items():
            for node_id, units in items:
                if not 0 <= node_id < cluster.size:
                    problems.append(f"{function_id}: unknown node {node_id}")
                if units < 1:
                    problems.append(f"{function_id}: container with {units} units")
        if problems:
            return problems
        cores, dram = self.node_allocation(profiles, cluster.size)
        for node in cluster.nodes:
            if cores[node.node_id] > node.total_cores:
                problems.append(f"node {node.node_id}: {cores[node.node_id]} cores > {node.total_cores}")
            if dram[node.node_id] > node.total_dram:
                problems.append(f"node {node.node_id}: {dram[node.node_id]} MB > {node.total_dram}")
        return problems

    def fits(self, cluster: ClusterSpec, profiles: Mapping[str, FunctionProfile]) -> bool:
        return not self.capacity_violations(cluster, profiles)


@dataclass
class EpochMetrics:
    carbon: float = 0.0        # g
    cost: float = 0.0          # currency
    water_carbon: float = 0.0  # g
    energy: float = 0.0        # kWh (IT + cooling)
    violations: Dict[str, int] = field(default_factory=dict)
    totals: Dict[str, int] = field(default_factory=dict)
    slo_rates: Dict[str, float] = field(default_factory=dict)
    slo_average: float = 0.0
    avg_load: float = 0.0
    decision_time: float = 0.0
    duration: float = 0.0
    cold_starts: int = 0
    shutdowns: int = 0
    containers_end: int = 0

    @property
    def slo_defined(self) -> bool:
        return bool(self.slo_rates)


@dataclass(frozen=True)
class Objectives:
    slo_average: float
    carbon: float
    cost: float
    load: float

    def feasible(self, cstr: float) -> bool:
        return self.slo_average <= cstr

    def rank(self, cstr: float) -> Tuple:
        """Feasibility-first ordering key: smaller is better."""
        if self.feasible(cstr):
            return (0, self.carbon, self.slo_average)
        return (1, self.slo_average, self.carbon)

    @classmethod
    def from_metrics(cls, metrics: EpochMetrics) -> "Objectives":
        return cls(metrics.slo_average, metrics.carbon, metrics.cost, metrics.avg_load)
