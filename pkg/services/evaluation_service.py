"""
Shared planning context and plan evaluation with common random numbers.
"""
import logging
import threading
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional

from models.schemas import ClusterSpec, EnvironmentSeries, EpochInput, FunctionProfile, SimulationParams
from models.state import ClusterState, EpochMetrics, Objectives, Plan, Request
from services.simulation_service import EpochSimulator
from services.workload_service import synthesize_arrivals
from utils import derive_seed, hour_of_day

logger = logging.getLogger(__name__)

FORECAST_STREAM = 0
ACTUAL_STREAM = 1


@dataclass
class OptimizerContext:
    """Everything a policy sees when deciding D_e."""
    epoch_input: EpochInput
    prev_state: ClusterState
    cluster: ClusterSpec
    env: EnvironmentSeries
    profiles: Mapping[str, FunctionProfile]
    params: SimulationParams = field(default_factory=SimulationParams)
    seed: int = 0
    wall_clock_budget: float = 180.0
    max_containers_per_id: Optional[int] = None
    max_units: Optional[int] = None
    eval_workers: int = 1

    def __post_init__(self):
        if not self.wall_clock_budget > 0:
            raise ValueError(f"wall_clock_budget must be positive, got {self.wall_clock_budget}")

    @property
    def epoch_index(self) -> int:
        return self.epoch_input.epoch_index

    @property
    def hour(self) -> int:
        return hour_of_day(self.epoch_index * self.cluster.epoch_length)

    @property
    def carbon_intensity(self) -> float:
        """CI_e."""
        return self.env.carbon_intensity[self.hour]

    @property
    def energy_price(self) -> float:
        """EP_e."""
        return self.env.energy_price[self.hour]

    @property
    def prev_distribution(self) -> Plan:
        """D_{e-1}."""
        return self.prev_state.distribution(self.epoch_index)

    @property
    def forecast_seed(self) -> int:
        return derive_seed(self.seed, self.epoch_index, FORECAST_STREAM)


@dataclass(frozen=True)
class Evaluation:
    objectives: Objectives
    metrics: EpochMetrics


class PlanEvaluator:
    """
    Simulates candidate plans against one fixed set of forecast arrivals.

    Results are cached per plan, so re-visiting a plan is free.
    """

    def __init__(self, context: OptimizerContext):
        self.context = context
        self.simulator = EpochSimulator(context.cluster, context.env, context.profiles, context.params)
        self.arrivals: List[Request] = synthesize_arrivals(
            context.epoch_input, context.profiles, context.cluster.epoch_length, context.forecast_seed
        )
        self.evaluations = 0
        self._cache: Dict[tuple, Evaluation] = {}
        self._lock = threading.Lock()

    def evaluate(self, plan: Plan) -> Evaluation:
        key = plan.key()
        with self._lock:
            cached = self._cache.get(key)
        if cached is not None:
            return cached
        plan = Plan.build(plan.placements, self.context.epoch_index)
        metrics, _ = self.simulator.simulate_epoch(self.context.prev_state, plan, self.arrivals)
        evaluation = Evaluation(Objectives.from_metrics(metrics), metrics)
        with self._lock:
            self._cache[key] = evaluation
            self.evaluations += 1
        return evaluation


def evaluate(plan: Plan, context: OptimizerContext) -> Objectives:
    """Objectives (SL_ave, CA, CO, LO) of plan under the context's forecast."""
    return PlanEvaluator(context).evaluate(plan).objectives
