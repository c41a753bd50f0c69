"""
Experiment harness: runs a policy epoch by epoch over a simulated day and
writes per-epoch metrics plus a day summary.
"""
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import pandas as pd

from models.schemas import ExperimentConfig, PolicyKind
from models.state import ClusterState, EpochMetrics, Plan
from services.baseline_service import exhaustive_oracle, random_plan, round_robin_plan, score_plan
from services.casa_service import CasaOptimizer, StepRecord
from services.evaluation_service import ACTUAL_STREAM, OptimizerContext
from services.power_service import load_environment
from services.simulation_service import EpochSimulator
from services.workload_service import (
    epoch_forecast,
    load_function_profiles,
    load_trace,
    scale_intensity,
    synthesize_arrivals,
)
from utils import atomic_write_csv, atomic_write_json, derive_seed

logger = logging.getLogger(__name__)

METRICS_COLUMNS = [
    "epoch", "carbon_g", "cost", "water_carbon_g", "energy_kwh",
    "slo_avg", "load_avg", "decision_s", "containers_end",
]
STEP_LOG_COLUMNS = ["epoch", "iteration", "optimizer", "function_id", "accepted", "slo_avg", "carbon_g"]
SWEEP_PARAMETERS = ("intensity", "laxity", "cstr", "nodes")
RANDOM_POLICY_STREAM = 3


class BudgetExceededError(RuntimeError):
    """A non-anytime policy overran its decision budget."""


class EpochError(RuntimeError):
    """Failure while running one epoch; the message carries the epoch index."""

    def __init__(self, epoch: int, cause: Exception):
        super().__init__(f"epoch {epoch}: {cause}")
        self.epoch = epoch


@dataclass
class ExperimentResult:
    rows: List[Dict] = field(default_factory=list)
    summary: Dict = field(default_factory=dict)
    step_log: List[Dict] = field(default_factory=list)
    final_state: Optional[ClusterState] = None
    epoch_states: List[ClusterState] = field(default_factory=list)


def summarize(rows: Sequence[Dict], policy: str, seed: int) -> Dict:
    """Day-level aggregates; SL_ave averages only epochs with requests."""
    defined = [r["slo_avg"] for r in rows if r["slo_avg"] is not None]
    return {
        "ca_cum_g": math.fsum(r["carbon_g"] for r in rows),
        "co_total": math.fsum(r["cost"] for r in rows),
        "water_carbon_total_g": math.fsum(r["water_carbon_g"] for r in rows),
        "energy_total_kwh": math.fsum(r["energy_kwh"] for r in rows),
        "sl_ave": math.fsum(defined) / len(defined) if defined else 0.0,
        "lo_mean": math.fsum(r["load_avg"] for r in rows) / len(rows) if rows else 0.0,
        "epochs": len(rows),
        "policy": policy,
        "seed": seed,
        "decision_times_s": [r["decision_s"] for r in rows],
    }


def write_metrics(rows: Sequence[Dict], summary: Dict, metrics_path, summary_path) -> Tuple[Path, Path]:
    """Write the per-epoch CSV and the summary JSON atomically."""
    df = pd.DataFrame(list(rows), columns=METRICS_COLUMNS)
    metrics_path = atomic_write_csv(df, Path(metrics_path))
    summary_path = atomic_write_json(summary, Path(summary_path))
    logger.info("Wrote %d metric rows to %s and summary to %s", len(df), metrics_path, summary_path)
    return metrics_path, summary_path


def write_step_log(records: Sequence[Dict], path) -> Path:
    df = pd.DataFrame(list(records), columns=STEP_LOG_COLUMNS)
    return atomic_write_csv(df, Path(path))


def _step_row(epoch: int, record: StepRecord) -> Dict:
    return {
        "epoch": epoch,
        "iteration": record.iteration,
        "optimizer": record.optimizer.value,
        "function_id": record.function_id,
        "accepted": record.accepted,
        "slo_avg": record.slo_average,
        "carbon_g": record.carbon,
    }


class ExperimentService:
    """Loads the inputs of one experiment and runs it over the trace horizon."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.cluster = config.cluster_spec()
        self.params = config.simulation_params()
        self.forecast_params = config.forecast_params()
        self.profiles = load_function_profiles(config.profiles_path, config.base_cores, config.base_dram_mb)
        self.env = load_environment(config.environment_path)
        trace = load_trace(config.trace_path, self.profiles, horizon=config.horizon)
        self.schedule = scale_intensity(trace, config.intensity)
        self.simulator = EpochSimulator(self.cluster, self.env, self.profiles, self.params)

    def context_for(self, epoch: int, state: ClusterState) -> OptimizerContext:
        return OptimizerContext(
            epoch_input=epoch_forecast(self.schedule, epoch, self.forecast_params),
            prev_state=state,
            cluster=self.cluster,
            env=self.env,
            profiles=self.profiles,
            params=self.params,
            seed=self.config.seed,
            wall_clock_budget=self.config.decision_budget_s,
            max_containers_per_id=self.config.max_containers_per_id,
            max_units=self.config.max_units,
            eval_workers=self.config.eval_workers,
        )

    def decide(self, context: OptimizerContext) -> Tuple[Plan, float, List[StepRecord]]:
        """Run the configured policy; returns plan, decision seconds and CASA steps."""
        policy = self.config.policy
        started = time.perf_counter()
        steps: List[StepRecord] = []
        if policy == PolicyKind.CASA:
            plan, _, search = CasaOptimizer(context).optimize_epoch()
            steps = search.step_log
        elif policy == PolicyKind.SCORE:
            plan = score_plan(context)
        elif policy == PolicyKind.ROUND_ROBIN:
            plan = round_robin_plan(context)
        elif policy == PolicyKind.RANDOM:
            plan = random_plan(context, derive_seed(self.config.seed, context.epoch_index, RANDOM_POLICY_STREAM))
        elif policy == PolicyKind.ORACLE:
            plan, _ = exhaustive_oracle(
                context,
                bound=self.config.oracle_bound,
                max_containers=self.config.max_containers_per_id or 2,
                max_units=self.config.max_units or 2,
            )
        else:
            raise ValueError(f"unsupported policy {policy}")
        elapsed = time.perf_counter() - started
        if policy != PolicyKind.CASA and elapsed > self.config.decision_budget_s:
            raise BudgetExceededError(
                f"{policy.value} took {elapsed:.1f} s, budget {self.config.decision_budget_s:.1f} s"
            )
        return plan, elapsed, steps

    def _row(self, epoch: int, metrics: EpochMetrics, decision_s: float) -> Dict:
        return {
            "epoch": epoch,
            "carbon_g": metrics.carbon,
            "cost": metrics.cost,
            "water_carbon_g": metrics.water_carbon,
            "energy_kwh": metrics.energy,
            "slo_avg": metrics.slo_average if metrics.slo_defined else None,
            "load_avg": metrics.avg_load,
            "decision_s": decision_s if self.config.record_decision_time else 0.0,
            "containers_end": metrics.containers_end,
        }

    def run(self) -> ExperimentResult:
        """Decide, simulate and record every epoch, carrying the end state forward."""
        result = ExperimentResult()
        state = ClusterState.empty(self.cluster)
        policy = self.config.policy.value
        logger.info("Running %s over %d epochs (seed %d)", policy, self.schedule.horizon, self.config.seed)
        for epoch in range(self.schedule.horizon):
            try:
                context = self.context_for(epoch, state)
                plan, decision_s, steps = self.decide(context)
                arrivals = synthesize_arrivals(
                    context.epoch_input,
                    self.profiles,
                    self.cluster.epoch_length,
                    derive_seed(self.config.seed, epoch, ACTUAL_STREAM),
                )
                metrics, state = self.simulator.simulate_epoch(state, plan, arrivals)
            except Exception as e:
                raise EpochError(epoch, e) from e
            metrics.decision_time = decision_s
            result.rows.append(self._row(epoch, metrics, decision_s))
            result.step_log.extend(_step_row(epoch, s) for s in steps)
            result.epoch_states.append(state)
            logger.info(
                "epoch %d: %s CA %.2f g, SL_ave %.4f, LO %.4f, %d containers, decided in %.2f s",
                epoch, policy, metrics.carbon, metrics.slo_average, metrics.avg_load,
                metrics.containers_end, decision_s,
            )
        result.final_state = state
        result.summary = summarize(result.rows, policy, self.config.seed)
        return result


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Run one experiment and write whichever outputs the config names."""
    result = ExperimentService(config).run()
    if config.out is not None and config.summary is not None:
        write_metrics(result.rows, result.summary, config.out, config.summary)
    elif config.out is not None:
        atomic_write_csv(pd.DataFrame(result.rows, columns=METRICS_COLUMNS), Path(config.out))
    elif config.summary is not None:
        atomic_write_json(result.summary, Path(config.summary))
    if config.step_log is not None:
        write_step_log(result.step_log, config.step_log)
    return result


def run_sweep(
    config: ExperimentConfig,
    parameter: str,
    values: Sequence[float],
    policies: Sequence[PolicyKind],
    out=None,
    scale_intensity_with_nodes: bool = False,
) -> pd.DataFrame:
    """
    Rerun the experiment for each (policy, value) of one parameter.

    Returns:
        One summary row per run, also written to out when given
    """
    if parameter not in SWEEP_PARAMETERS:
        raise ValueError(f"cannot sweep {parameter!r}; choose one of {', '.join(SWEEP_PARAMETERS)}")
    rows = []
    for policy in policies:
        for value in values:
            update = {"policy": policy, "out": None, "summary": None, "step_log": None}
            if parameter == "nodes":
                nodes = int(value)
                update["nodes"] = nodes
                update["hops_per_node"] = [config.hops_per_node[0]] * nodes
                if scale_intensity_with_nodes:
                    update["intensity"] = config.intensity * nodes / config.nodes
            else:
                update[parameter] = float(value)
            run_config = ExperimentConfig(**{**config.model_dump(), **update})
            summary = ExperimentService(run_config).run().summary
            row = {"parameter": parameter, "value": value}
            row.update({k: v for k, v in summary.items() if k != "decision_times_s"})
            row["decision_s_max"] = max(summary["decision_times_s"], default=0.0)
            rows.append(row)
            logger.info("sweep %s=%s %s: CA %.2f g, SL_ave %.4f", parameter, value,
                        policy.value, summary["ca_cum_g"], summary["sl_ave"])
    df = pd.DataFrame(rows)
    if out is not None:
        atomic_write_csv(df, Path(out))
    return df
