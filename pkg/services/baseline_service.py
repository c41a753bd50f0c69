"""
Comparison planners: spread-scoring, round-robin, random, and an
exhaustive oracle for tiny instances.
"""
import itertools
import logging
import math
from typing import Dict, List, Optional, Tuple

import numpy as np

from models.state import Objectives, Placement, Plan
from services.evaluation_service import OptimizerContext, PlanEvaluator

logger = logging.getLogger(__name__)


class EnumerationBoundError(ValueError):
    """Oracle instance too large to enumerate."""


def provisioning_count(context: OptimizerContext, function_id: str) -> int:
    """ceil(R * T_ave / (epoch_length * concurrency)) + 1 prewarmed spare."""
    profile = context.profiles[function_id]
    demand = context.epoch_input.intensities[function_id] * profile.avg_exec_time
    per_container = context.cluster.epoch_length * context.params.concurrency_per_unit
    return math.ceil(demand / per_container) + 1


def _demand_order(context: OptimizerContext) -> List[str]:
    intensities = context.epoch_input.intensities
    return sorted(context.epoch_input.function_ids, key=lambda f: (-intensities[f], f))


class _Packer:
    """Tracks per-node free resources while a baseline places base containers."""

    def __init__(self, context: OptimizerContext):
        self.context = context
        self.free_cores = [node.total_cores for node in context.cluster.nodes]
        self.free_dram = [node.total_dram for node in context.cluster.nodes]
        self.placements: Dict[str, List[Placement]] = {}
        self.saturated = False

    def fitting_nodes(self, function_id: str) -> List[int]:
        profile = self.context.profiles[function_id]
        return [
            n for n in range(len(self.free_cores))
            if self.free_cores[n] >= profile.base_cores and self.free_dram[n] >= profile.base_dram
        ]

    def place(self, function_id: str, node_id: int) -> None:
        profile = self.context.profiles[function_id]
        self.free_cores[node_id] -= profile.base_cores
        self.free_dram[node_id] -= profile.base_dram
        self.placements.setdefault(function_id, []).append(Placement(node_id, 1))

    def plan(self, name: str) -> Plan:
        for function_id in self.context.epoch_input.function_ids:
            self.placements.setdefault(function_id, [])
        if self.saturated:
            logger.warning("epoch %d: %s provisioning saturated the cluster", self.context.epoch_index, name)
        return Plan.build(self.placements, self.context.epoch_index, saturated=self.saturated)


def score_plan(context: OptimizerContext) -> Plan:
    """Performance-first spread: each container goes where the most cores stay free."""
    packer = _Packer(context)
    for function_id in _demand_order(context):
        for _ in range(provisioning_count(context, function_id)):
            nodes = packer.fitting_nodes(function_id)
            if not nodes:
                packer.saturated = True
                break
            base = context.profiles[function_id].base_cores
            packer.place(function_id, max(nodes, key=lambda n: (packer.free_cores[n] - base, -n)))
    return packer.plan("score")


def round_robin_plan(context: OptimizerContext) -> Plan:
    """Cycle nodes 0..N-1 in ID-then-container order, skipping full nodes."""
    packer = _Packer(context)
    size = context.cluster.size
    cursor = 0
    for function_id in context.epoch_input.function_ids:
        for _ in range(provisioning_count(context, function_id)):
            fitting = set(packer.fitting_nodes(function_id))
            if not fitting:
                packer.saturated = True
                break
            while cursor % size not in fitting:
                cursor += 1
            packer.place(function_id, cursor % size)
            cursor += 1
    return packer.plan("round_robin")


def random_plan(context: OptimizerContext, seed: int) -> Plan:
    """Uniformly random feasible node per container."""
    rng = np.random.default_rng(seed)
    packer = _Packer(context)
    for function_id in context.epoch_input.function_ids:
        for _ in range(provisioning_count(context, function_id)):
            nodes = packer.fitting_nodes(function_id)
            if not nodes:
                packer.saturated = True
                break
            packer.place(function_id, nodes[int(rng.integers(len(nodes)))])
    return packer.plan("random")


def _per_id_choices(num_nodes: int, max_containers: int, max_units: int) -> List[Tuple[Placement, ...]]:
    options = [Placement(n, u) for n in range(num_nodes) for u in range(1, max_units + 1)]
    choices: List[Tuple[Placement, ...]] = []
    for count in range(1, max_containers + 1):
        choices.extend(itertools.combinations_with_replacement(options, count))
    return choices


def oracle_plan_count(context: OptimizerContext, max_containers: int = 2, max_units: int = 2) -> int:
    """Number of canonical plans the oracle enumerates (before capacity filtering)."""
    per_id = len(_per_id_choices(context.cluster.size, max_containers, max_units))
    return per_id ** len(context.epoch_input.function_ids)


def exhaustive_oracle(
    context: OptimizerContext,
    bound: int = 1_000_000,
    max_containers: int = 2,
    max_units: int = 2,
    evaluator: Optional[PlanEvaluator] = None,
) -> Tuple[Plan, Objectives]:
    """
    Enumerate every plan with 1..max_containers containers per ID of
    1..max_units units each, and return the feasibility-first optimum.

    Raises:
        EnumerationBoundError: If the plan count exceeds bound
    """
    total = oracle_plan_count(context, max_containers, max_units)
    if total > bound:
        raise EnumerationBoundError(f"oracle would enumerate {total} plans (bound {bound})")
    evaluator = evaluator or PlanEvaluator(context)
    cstr = context.epoch_input.slo_constraint
    function_ids = list(context.epoch_input.function_ids)
    choices = _per_id_choices(context.cluster.size, max_containers, max_units)

    best: Optional[Tuple[Plan, Objectives]] = None
    evaluated = 0
    for combo in itertools.product(choices, repeat=len(function_ids)):
        plan = Plan.build(dict(zip(function_ids, combo)), context.epoch_index)
        if not plan.fits(context.cluster, context.profiles):
            continue
        objectives = evaluator.evaluate(plan).objectives
        evaluated += 1
        if best is None or objectives.rank(cstr) < best[1].rank(cstr):
            best = (plan, objectives)
    if best is None:
        raise EnumerationBoundError("no capacity-valid plan in the enumeration space")
    logger.info("epoch %d: oracle evaluated %d of %d plans", context.epoch_index, evaluated, total)
    return best
