"""
Carbon- and SLO-aware container distribution optimizer.

Each epoch starts from the inherited distribution and alternates between
an SLO local search (while the SLO constraint is violated) and a carbon
local search (while it holds). Function IDs that fail K consecutive
searches are blacklisted per optimizer for the rest of the epoch.
"""
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np

from models.schemas import ClusterSpec, FunctionProfile
from models.state import EpochMetrics, Objectives, Placement, Plan
from services.evaluation_service import Evaluation, OptimizerContext, PlanEvaluator
from utils import derive_seed

logger = logging.getLogger(__name__)

NEIGHBORHOOD_STREAM = 2


class SearchMode(str, Enum):
    SLO = "slo"
    CARBON = "carbon"


@dataclass(frozen=True)
class StepRecord:
    iteration: int
    optimizer: SearchMode
    function_id: str
    accepted: bool
    slo_average: float
    carbon: float
    candidates: int
    slo_before: float = 0.0


@dataclass
class SearchState:
    current: Plan
    objectives: Objectives
    metrics: EpochMetrics
    best_plan: Plan
    best_objectives: Objectives
    intensities: Dict[str, int]
    carbon_order: List[str]
    violation_scores: Dict[str, float] = field(default_factory=dict)
    blacklist_slo: Set[str] = field(default_factory=set)
    blacklist_carbon: Set[str] = field(default_factory=set)
    slo_failures: Dict[str, int] = field(default_factory=dict)
    carbon_failures: Dict[str, int] = field(default_factory=dict)
    iterations_used: int = 0
    step_log: List[StepRecord] = field(default_factory=list)
    exhausted: bool = False
    timed_out: bool = False


def initial_plan(context: OptimizerContext) -> Plan:
    """
    Inherit D_{e-1}, drop IDs absent from F_e and give each new ID one base
    container on the least-allocated node that fits it.
    """
    active = set(context.epoch_input.function_ids)
    prev = context.prev_distribution
    placements = {f: items for f, items in prev.placements.items() if f in active and items}
    cores, dram = Plan.build(placements).node_allocation(context.profiles, context.cluster.size)
    for function_id in context.epoch_input.function_ids:
        if function_id in placements:
            continue
        profile = context.profiles[function_id]
        fitting = [
            node.node_id for node in context.cluster.nodes
            if cores[node.node_id] + profile.base_cores <= node.total_cores
            and dram[node.node_id] + profile.base_dram <= node.total_dram
        ]
        if not fitting:
            logger.warning("epoch %d: no room for a base container of %s", context.epoch_index, function_id)
            placements[function_id] = ()
            continue
        node_id = min(fitting, key=lambda n: (cores[n], n))
        cores[node_id] += profile.base_cores
        dram[node_id] += profile.base_dram
        placements[function_id] = (Placement(node_id, 1),)
    return Plan.build(placements, context.epoch_index)


def neighborhood(
    plan: Plan,
    function_id: str,
    mode: SearchMode,
    rng: np.random.Generator,
    cluster: ClusterSpec,
    profiles: Mapping[str, FunctionProfile],
    intensity: int = 1,
    max_containers: Optional[int] = None,
    max_units: Optional[int] = None,
) -> List[Plan]:
    """
    Candidate plans that change only function_id's containers.

    SLO mode adds a base container per node, grows each container by a
    unit and moves containers to nodes with more free cores. Carbon mode
    removes containers (keeping one while the ID has requests), shrinks
    multi-unit containers and moves containers onto busier nodes that fit.
    """
    items = list(plan.placements.get(function_id, ()))
    profile = profiles[function_id]
    cores, dram = plan.node_allocation(profiles, cluster.size)

    def room(node_id: int, units: int) -> bool:
        node = cluster.nodes[node_id]
        return (cores[node_id] + units * profile.base_cores <= node.total_cores
                and dram[node_id] + units * profile.base_dram <= node.total_dram)

    def free_cores(node_id: int) -> int:
        return cluster.nodes[node_id].total_cores - cores[node_id]

    variants: List[List[Placement]] = []
    if mode == SearchMode.SLO:
        if max_containers is None or len(items) < max_containers:
            for node in cluster.nodes:
                if room(node.node_id, 1):
                    variants.append(items + [Placement(node.node_id, 1)])
        for i, (node_id, units) in enumerate(items):
            if (max_units is None or units < max_units) and room(node_id, 1):
                variants.append(items[:i] + [Placement(node_id, units + 1)] + items[i + 1:])
        for i, (node_id, units) in enumerate(items):
            for node in cluster.nodes:
                m = node.node_id
                if m != node_id and free_cores(m) > free_cores(node_id) and room(m, units):
                    variants.append(items[:i] + [Placement(m, units)] + items[i + 1:])
    else:
        if len(items) > 1 or intensity <= 0:
            for i in range(len(items)):
                variants.append(items[:i] + items[i + 1:])
        for i, (node_id, units) in enumerate(items):
            if units > 1:
                variants.append(items[:i] + [Placement(node_id, units - 1)] + items[i + 1:])
        for i, (node_id, units) in enumerate(items):
            for node in cluster.nodes:
                m = node.node_id
                if m != node_id and cores[m] > cores[node_id] and room(m, units):
                    variants.append(items[:i] + [Placement(m, units)] + items[i + 1:])

    seen = {plan.key()}
    candidates: List[Plan] = []
    for variant in variants:
        candidate = plan.replace(function_id, variant)
        key = candidate.key()
        if key in seen or not candidate.fits(cluster, profiles):
            continue
        seen.add(key)
        candidates.append(candidate)
    order = rng.permutation(len(candidates))
    return [candidates[i] for i in order]


class CasaOptimizer:
    """Dual-objective local search for one epoch."""

    def __init__(self, context: OptimizerContext, evaluator: Optional[PlanEvaluator] = None):
        self.context = context
        self.evaluator = evaluator or PlanEvaluator(context)
        self.rng = np.random.default_rng(derive_seed(context.seed, context.epoch_index, NEIGHBORHOOD_STREAM))
        self.cstr = context.epoch_input.slo_constraint
        self.k = context.epoch_input.local_search_limit
        self._deadline = time.monotonic() + context.wall_clock_budget
        self._executor: Optional[ThreadPoolExecutor] = None

    # ------------------------------------------------------------------

    def _evaluate_all(self, candidates: Sequence[Plan]) -> List[Tuple[int, Evaluation]]:
        """Evaluate in index order, stopping early once the budget is spent."""
        results: List[Tuple[int, Evaluation]] = []
        chunk = max(1, self.context.eval_workers)
        for start in range(0, len(candidates), chunk):
            if time.monotonic() >= self._deadline:
                break
            batch = candidates[start:start + chunk]
            if self._executor is not None and len(batch) > 1:
                evaluations = list(self._executor.map(self.evaluator.evaluate, batch))
            else:
                evaluations = [self.evaluator.evaluate(plan) for plan in batch]
            results.extend(zip(range(start, start + len(batch)), evaluations))
        return results

    def _remember(self, state: SearchState, plan: Plan, objectives: Objectives) -> None:
        if objectives.rank(self.cstr) < state.best_objectives.rank(self.cstr):
            state.best_plan = plan
            state.best_objectives = objectives

    def _finish_step(
        self,
        state: SearchState,
        mode: SearchMode,
        function_id: str,
        candidates: Sequence[Plan],
        results: List[Tuple[int, Evaluation]],
    ) -> SearchState:
        for index, evaluation in results:
            self._remember(state, candidates[index], evaluation.objectives)

        if mode == SearchMode.SLO:
            sort_key = lambda r: (r[1].objectives.slo_average, r[1].objectives.carbon, r[0])
            improves = lambda o: o.slo_average < state.objectives.slo_average
            failures, blacklist = state.slo_failures, state.blacklist_slo
        else:
            sort_key = lambda r: (r[1].objectives.carbon, r[1].objectives.slo_average, r[0])
            improves = lambda o: o.carbon < state.objectives.carbon
            failures, blacklist = state.carbon_failures, state.blacklist_carbon

        slo_before = state.objectives.slo_average
        best = min(results, key=sort_key) if results else None
        accepted = best is not None and improves(best[1].objectives)
        if accepted:
            index, evaluation = best
            state.current = candidates[index]
            state.objectives = evaluation.objectives
            state.metrics = evaluation.metrics
            state.violation_scores = self._violation_scores(evaluation.metrics)
            failures[function_id] = 0
        else:
            failures[function_id] = failures.get(function_id, 0) + 1
            if failures[function_id] >= self.k:
                blacklist.add(function_id)
                logger.debug("epoch %d: %s blacklisted by %s optimizer",
                             self.context.epoch_index, function_id, mode.value)

        state.iterations_used += 1
        record = StepRecord(
            iteration=state.iterations_used,
            optimizer=mode,
            function_id=function_id,
            accepted=accepted,
            slo_average=state.objectives.slo_average,
            carbon=state.objectives.carbon,
            candidates=len(results),
            slo_before=slo_before,
        )
        state.step_log.append(record)
        logger.debug("step %s", record)
        return state

    def _violation_scores(self, metrics: EpochMetrics) -> Dict[str, float]:
        """S(f): per-ID violation rate of the latest adopted evaluation."""
        return {f: metrics.slo_rates.get(f, 0.0) for f in self.context.epoch_input.function_ids}

    def _step(self, state: SearchState, mode: SearchMode, function_id: str) -> SearchState:
        candidates = neighborhood(
            state.current,
            function_id,
            mode,
            self.rng,
            self.context.cluster,
            self.context.profiles,
            intensity=state.intensities.get(function_id, 0),
            max_containers=self.context.max_containers_per_id,
            max_units=self.context.max_units,
        )
        results = self._evaluate_all(candidates)
        if candidates and not results:
            state.timed_out = True
            return state
        return self._finish_step(state, mode, function_id, candidates, results)

    # ------------------------------------------------------------------

    def slo_step(self, state: SearchState) -> SearchState:
        """Search the non-blacklisted ID with the most violations."""
        eligible = [f for f in self.context.epoch_input.function_ids if f not in state.blacklist_slo]
        if not eligible:
            state.exhausted = True
            return state
        function_id = min(eligible, key=lambda f: (-state.violation_scores.get(f, 0.0), f))
        return self._step(state, SearchMode.SLO, function_id)

    def carbon_step(self, state: SearchState) -> SearchState:
        """Search the non-blacklisted ID that comes first in the fixed intensity order."""
        function_id = next((f for f in state.carbon_order if f not in state.blacklist_carbon), None)
        if function_id is None:
            state.exhausted = True
            return state
        return self._step(state, SearchMode.CARBON, function_id)

    def initial_state(self) -> SearchState:
        plan = initial_plan(self.context)
        evaluation = self.evaluator.evaluate(plan)
        intensities = dict(self.context.epoch_input.intensities)
        return SearchState(
            current=plan,
            objectives=evaluation.objectives,
            metrics=evaluation.metrics,
            best_plan=plan,
            best_objectives=evaluation.objectives,
            intensities=intensities,
            carbon_order=sorted(intensities, key=lambda f: (-intensities[f], f)),
            violation_scores=self._violation_scores(evaluation.metrics),
        )

    def optimize_epoch(self) -> Tuple[Plan, Objectives, SearchState]:
        """
        Run the SLO/carbon loop until gen steps, the wall-clock budget or
        exhaustion of the optimizer the SLO check selects.

        Returns:
            Best plan seen under the feasibility-first ordering, its
            objectives, and the final search state
        """
        self._deadline = time.monotonic() + self.context.wall_clock_budget
        gen = self.context.epoch_input.iteration_ceiling
        state = self.initial_state()
        workers = self.context.eval_workers
        self._executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
        try:
            while state.iterations_used < gen:
                if time.monotonic() >= self._deadline:
                    state.timed_out = True
                    break
                if state.objectives.slo_average > self.cstr:
                    self.slo_step(state)
                else:
                    self.carbon_step(state)
                if state.exhausted or state.timed_out:
                    break
        finally:
            if self._executor is not None:
                self._executor.shutdown(wait=True)
                self._executor = None
        if state.timed_out:
            logger.warning("epoch %d: decision budget reached after %d steps",
                           self.context.epoch_index, state.iterations_used)
        logger.info(
            "epoch %d: CASA %d steps, %d evaluations, SL_ave %.4f, CA %.2f g",
            self.context.epoch_index, state.iterations_used, self.evaluator.evaluations,
            state.best_objectives.slo_average, state.best_objectives.carbon,
        )
        return state.best_plan, state.best_objectives, state


def optimize_epoch(context: OptimizerContext) -> Tuple[Plan, Objectives, SearchState]:
    return CasaOptimizer(context).optimize_epoch()
