"""
Physical models: node power, IT and cooling power, carbon, energy cost,
water-related carbon and cold-start latency.
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Sequence, Tuple

import pandas as pd

from models.schemas import ClusterSpec, EnvironmentSeries, NodeSpec, PowerSample
from utils import SECONDS_PER_HOUR, hour_of_day

logger = logging.getLogger(__name__)

ENVIRONMENT_COLUMNS = ["hour", "ci_g_per_kwh", "price_per_kwh", "cooling_eff", "water_factor"]
JOULES_PER_KWH = 3.6e6
_USAGE_TOLERANCE = 1e-9


class PowerModelError(ValueError):
    """Input outside the domain of a power or energy model."""


class EnvironmentFormatError(ValueError):
    """Malformed environment CSV."""


def load_environment(path) -> EnvironmentSeries:
    """Parse the 24-row environment CSV into an EnvironmentSeries."""
    path = Path(path)
    try:
        df = pd.read_csv(path, skipinitialspace=True)
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise EnvironmentFormatError(f"{path}: {e}")
    if [c.strip() for c in df.columns] != ENVIRONMENT_COLUMNS:
        raise EnvironmentFormatError(f"{path}: line 1: expected header {','.join(ENVIRONMENT_COLUMNS)}")
    df.columns = ENVIRONMENT_COLUMNS
    try:
        df = df.astype(float)
    except ValueError as e:
        raise EnvironmentFormatError(f"{path}: non-numeric value: {e}")
    hours = sorted(int(h) for h in df["hour"])
    if hours != list(range(24)):
        raise EnvironmentFormatError(f"{path}: expected hours 0..23 exactly once each")
    df = df.sort_values("hour")
    try:
        return EnvironmentSeries(
            carbon_intensity=tuple(df["ci_g_per_kwh"]),
            energy_price=tuple(df["price_per_kwh"]),
            cooling_eff=tuple(df["cooling_eff"]),
            water_factor=tuple(df["water_factor"]),
        )
    except ValueError as e:
        raise EnvironmentFormatError(f"{path}: {e}")


def node_power(spec: NodeSpec, usage: float) -> float:
    """P_i = A U^4 + B U^3 + C U^2 + D U + E for U cores in use."""
    if usage < -_USAGE_TOLERANCE or usage > spec.total_cores + _USAGE_TOLERANCE:
        raise PowerModelError(f"node {spec.node_id}: usage {usage} outside [0, {spec.total_cores}]")
    a, b, c, d, e = spec.power_coeffs
    return (((a * usage + b) * usage + c) * usage + d) * usage + e


def it_power(cluster: ClusterSpec, usages: Sequence[float]) -> float:
    """P_IT = sum of node power + P_S + P_N."""
    if len(usages) != cluster.size:
        raise PowerModelError(f"expected {cluster.size} node usages, got {len(usages)}")
    total = math.fsum(node_power(node, u) for node, u in zip(cluster.nodes, usages))
    return total + cluster.storage_power + cluster.network_power


def _check_hour(hour: int) -> None:
    if not 0 <= hour <= 23:
        raise PowerModelError(f"hour {hour} outside 0..23")


def cooling_power(p_it: float, hour: int, env: EnvironmentSeries) -> float:
    """P_Cooling = E_t * P_IT."""
    _check_hour(hour)
    return env.cooling_eff[hour] * p_it


def _check_interval(hour: int, dt: float, start) -> None:
    _check_hour(hour)
    if not dt > 0:
        raise PowerModelError(f"interval length must be positive, got {dt}")
    if dt > SECONDS_PER_HOUR:
        raise PowerModelError(f"interval of {dt} s crosses an hour boundary")
    if start is not None:
        if hour_of_day(start) != hour:
            raise PowerModelError(f"interval start {start} is not in hour {hour}")
        end_hour_start = (start // SECONDS_PER_HOUR + 1) * SECONDS_PER_HOUR
        if start + dt > end_hour_start + 1e-9:
            raise PowerModelError(f"interval [{start}, {start + dt}) crosses an hour boundary")


def interval_carbon(p_it: float, p_cooling: float, hour: int, env: EnvironmentSeries, dt: float, start=None) -> float:
    """Grams of CO2 for constant power over dt seconds inside one hour."""
    _check_interval(hour, dt, start)
    return env.carbon_intensity[hour] * (p_it + p_cooling) * dt / JOULES_PER_KWH


def interval_cost(
    p_it: float, p_cooling: float, hour: int, env: EnvironmentSeries, dt: float, start=None
) -> Tuple[float, float]:
    """(energy cost, water-related grams CO2) over dt seconds inside one hour."""
    _check_interval(hour, dt, start)
    money = env.energy_price[hour] * (p_it + p_cooling) * dt / JOULES_PER_KWH
    water = env.water_factor[hour] * p_cooling * dt / JOULES_PER_KWH
    return money, water


def cold_start_latency(spec: NodeSpec, queued_image_mb: float, switch_delay: float) -> float:
    """T_cold = C_cold / B_node + NH * T_switch."""
    if queued_image_mb < 0:
        raise PowerModelError(f"queued image size must be >= 0, got {queued_image_mb}")
    return queued_image_mb / spec.bandwidth + spec.hop_count * switch_delay


@dataclass
class EnergyLedger:
    """
    Integrates piecewise-constant power over an epoch.

    Intervals are split at hour boundaries of absolute time
    (epoch_start + t) before the hourly factors are applied.
    """
    cluster: ClusterSpec
    env: EnvironmentSeries
    epoch_start: float = 0.0
    record_samples: bool = False
    carbon: float = 0.0
    cost: float = 0.0
    water_carbon: float = 0.0
    energy_kwh: float = 0.0
    load_integral: float = 0.0
    elapsed: float = 0.0
    samples: List[PowerSample] = field(default_factory=list)

    def add(self, t0: float, t1: float, usages: Sequence[float], load_cores: float) -> None:
        """Account constant node usages (and busy-core load) over [t0, t1)."""
        if t1 <= t0:
            return
        p_it = it_power(self.cluster, usages)
        self.load_integral += load_cores * (t1 - t0)
        self.elapsed += t1 - t0
        start = self.epoch_start + t0
        end = self.epoch_start + t1
        while start < end:
            boundary = (math.floor(start / SECONDS_PER_HOUR) + 1) * SECONDS_PER_HOUR
            piece_end = min(end, boundary)
            dt = piece_end - start
            if dt <= 0:
                break
            hour = hour_of_day(start)
            p_cooling = cooling_power(p_it, hour, self.env)
            self.carbon += interval_carbon(p_it, p_cooling, hour, self.env, dt)
            money, water = interval_cost(p_it, p_cooling, hour, self.env, dt)
            self.cost += money
            self.water_carbon += water
            self.energy_kwh += (p_it + p_cooling) * dt / JOULES_PER_KWH
            if self.record_samples:
                self.samples.append(PowerSample(timestamp=start - self.epoch_start, duration=dt, p_it=p_it, p_cooling=p_cooling))
            start = piece_end

    def average_load(self) -> float:
        """Time-weighted mean of busy-core-equivalents over total cluster cores."""
        return average_load(self.load_integral, self.elapsed, self.cluster.total_cores)


def average_load(load_integral: float, elapsed: float, total_cores: int) -> float:
    """LO = integral of effective cores dt / (elapsed * cluster cores)."""
    if elapsed <= 0 or total_cores <= 0:
        return 0.0
    return min(1.0, max(0.0, load_integral / (elapsed * total_cores)))
