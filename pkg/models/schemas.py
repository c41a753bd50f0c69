"""
Pydantic models for inputs, configuration and request/response schemas.
"""
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

HOURS_PER_DAY = 24


class FunctionProfile(BaseModel):
    """Static description of one function ID."""
    model_config = ConfigDict(frozen=True)

    function_id: str = Field(min_length=1)
    avg_exec_time: float = Field(gt=0)   # seconds
    image_size: float = Field(gt=0)      # MB pulled per cold start
    base_cores: int = Field(default=2, ge=1)
    base_dram: int = Field(default=150, ge=1)  # MB


class EpochInput(BaseModel):
    """Forecast handed to a policy at the start of an epoch."""
    model_config = ConfigDict(frozen=True)

    epoch_index: int = Field(ge=0)
    function_ids: Tuple[str, ...] = ()
    intensities: Dict[str, int] = Field(default_factory=dict)
    slo_constraint: float = Field(default=0.05, gt=0, lt=1)
    laxity: float = Field(default=10.0, gt=1)
    iteration_ceiling: int = Field(default=500, ge=0)
    local_search_limit: int = Field(default=5, ge=1)

    @model_validator(mode="after")
    def _check_intensities(self):
        for function_id in self.function_ids:
            if self.intensities.get(function_id, 0) <= 0:
                raise ValueError(f"function {function_id} listed with zero intensity")
        return self

    @property
    def size(self) -> int:
        """Z = |F_e|."""
        return len(self.function_ids)


class ForecastParams(BaseModel):
    """Per-epoch knobs copied into every EpochInput."""
    slo_constraint: float = Field(default=0.05, gt=0, lt=1)
    laxity: float = Field(default=10.0, gt=1)
    iteration_ceiling: int = Field(default=500, ge=0)
    local_search_limit: int = Field(default=5, ge=1)


class NodeSpec(BaseModel):
    """One compute node and its quartic power curve."""
    model_config = ConfigDict(frozen=True)

    node_id: int = Field(ge=0)
    total_cores: int = Field(gt=0)
    total_dram: int = Field(gt=0)
    power_coeffs: Tuple[float, float, float, float, float]  # A, B, C, D, E
    bandwidth: float = Field(gt=0)  # MB/s towards persistent storage
    hop_count: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _check_power_curve(self):
        a, b, c, d, e = self.power_coeffs
        previous = None
        for usage in range(self.total_cores + 1):
            watts = (((a * usage + b) * usage + c) * usage + d) * usage + e
            if watts < 0:
                raise ValueError(f"node {self.node_id}: negative power {watts:.3f} W at {usage} cores")
            if previous is not None and watts < previous:
                raise ValueError(f"node {self.node_id}: power decreases at {usage} cores")
            previous = watts
        return self


class ClusterSpec(BaseModel):
    """Compute nodes plus the fixed storage/network overhead."""
    model_config = ConfigDict(frozen=True)

    nodes: Tuple[NodeSpec, ...] = Field(min_length=1)
    storage_power: float = Field(default=0.0, ge=0)
    network_power: float = Field(default=0.0, ge=0)
    switch_delay: float = Field(default=0.0, ge=0)
    epoch_length: float = Field(default=900.0, gt=0)
    shutdown_duration: float = Field(default=15.0, ge=0)

    @model_validator(mode="after")
    def _check_node_ids(self):
        for index, node in enumerate(self.nodes):
            if node.node_id != index:
                raise ValueError(f"node ids must be 0..N-1 in order, got {node.node_id} at {index}")
        return self

    @property
    def size(self) -> int:
        return len(self.nodes)

    @property
    def total_cores(self) -> int:
        return sum(node.total_cores for node in self.nodes)


class EnvironmentSeries(BaseModel):
    """Hourly grid and facility factors for one day."""
    model_config = ConfigDict(frozen=True)

    carbon_intensity: Tuple[float, ...]  # gCO2/kWh
    energy_price: Tuple[float, ...]      # currency/kWh
    cooling_eff: Tuple[float, ...]       # cooling W per IT W
    water_factor: Tuple[float, ...]      # gCO2/kWh of cooling energy

    @field_validator("carbon_intensity", "energy_price", "cooling_eff", "water_factor")
    @classmethod
    def _check_hours(cls, values, info):
        if len(values) != HOURS_PER_DAY:
            raise ValueError(f"{info.field_name} needs {HOURS_PER_DAY} hourly values, got {len(values)}")
        if any(v < 0 for v in values):
            raise ValueError(f"{info.field_name} has negative entries")
        return values

    @classmethod
    def constant(cls, ci: float = 0.0, price: float = 0.0, cooling: float = 0.0, water: float = 0.0):
        """Flat series, handy for tests and what-if runs."""
        return cls(
            carbon_intensity=(ci,) * HOURS_PER_DAY,
            energy_price=(price,) * HOURS_PER_DAY,
            cooling_eff=(cooling,) * HOURS_PER_DAY,
            water_factor=(water,) * HOURS_PER_DAY,
        )


class PowerSample(BaseModel):
    """Power drawn over one integration interval starting at timestamp."""
    timestamp: float
    duration: float
    p_it: float
    p_cooling: float


class SimulationParams(BaseModel):
    """Container lifecycle overheads and per-unit concurrency."""
    model_config = ConfigDict(frozen=True)

    concurrency_per_unit: int = Field(default=1, ge=1)
    idle_util: float = Field(default=0.1, ge=0, le=1)
    startup_util: float = Field(default=1.0, ge=0, le=1)
    shutdown_util: float = Field(default=0.5, ge=0, le=1)


class PolicyKind(str, Enum):
    """Planners selectable from the harness."""
    CASA = "casa"
    SCORE = "score"
    ROUND_ROBIN = "round_robin"
    RANDOM = "random"
    ORACLE = "oracle"

    @classmethod
    def parse(cls, value: str) -> "PolicyKind":
        normalized = value.strip().lower().replace("-", "_")
        if normalized == "roundrobin":
            normalized = "round_robin"
        return cls(normalized)


class ExperimentConfig(BaseModel):
    """One experiment as read from the YAML config file (plus overrides)."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    # inputs
    trace_path: Path
    profiles_path: Path
    environment_path: Path

    # cluster
    nodes: int = Field(default=4, ge=1)
    cores_per_node: int = Field(default=128, ge=1)
    dram_mb_per_node: int = Field(default=65536, ge=1)
    power_coeffs: Tuple[float, float, float, float, float] = (0.0, 0.0, 0.0, 2.1875, 120.0)
    bandwidth_mb_s: float = Field(default=125.0, gt=0)
    hops_per_node: Optional[List[int]] = None
    switch_delay_s: float = Field(default=0.05, ge=0)
    storage_power_w: float = Field(default=50.0, ge=0)
    network_power_w: float = Field(default=30.0, ge=0)

    # workload and policy
    policy: PolicyKind = PolicyKind.CASA
    intensity: float = Field(default=20.0, gt=0)
    laxity: float = Field(default=10.0, gt=1)
    cstr: float = Field(default=0.05, gt=0, lt=1)
    gen: int = Field(default=500, ge=0)
    k: int = Field(default=5, ge=1)
    seed: int = Field(default=0, ge=0, lt=2 ** 64)
    epoch_length_s: float = Field(default=900.0, gt=0)
    horizon: Optional[int] = Field(default=None, ge=0)
    shutdown_s: float = Field(default=15.0, ge=0)
    decision_budget_s: float = Field(default=180.0, gt=0)
    max_containers_per_id: Optional[int] = Field(default=None, ge=1)
    max_units: Optional[int] = Field(default=None, ge=1)
    oracle_bound: int = Field(default=1_000_000, ge=1)
    eval_workers: int = Field(default=1, ge=1)

    # containers
    base_cores: int = Field(default=2, ge=1)
    base_dram_mb: int = Field(default=150, ge=1)
    concurrency_per_unit: int = Field(default=1, ge=1)
    idle_util: float = Field(default=0.1, ge=0, le=1)
    startup_util: float = Field(default=1.0, ge=0, le=1)
    shutdown_util: float = Field(default=0.5, ge=0, le=1)

    # outputs
    out: Optional[Path] = None
    summary: Optional[Path] = None
    step_log: Optional[Path] = None
    record_decision_time: bool = True

    @field_validator("policy", mode="before")
    @classmethod
    def _parse_policy(cls, value):
        if isinstance(value, str):
            try:
                return PolicyKind.parse(value)
            except ValueError:
                raise ValueError(f"unknown policy {value!r}")
        return value

    @field_validator("trace_path", "profiles_path", "environment_path")
    @classmethod
    def _check_exists(cls, path: Path, info):
        if not Path(path).is_file():
            raise ValueError(f"{info.field_name}: file not found: {path}")
        return path

    @model_validator(mode="before")
    @classmethod
    def _fill_hops(cls, data):
        if not isinstance(data, dict):
            return data
        hops = data.get("hops_per_node")
        try:
            nodes = int(data.get("nodes", 4))
        except (TypeError, ValueError):
            return data
        if hops is None:
            return {**data, "hops_per_node": [2] * nodes}
        if isinstance(hops, (list, tuple)) and len(hops) == 1:
            return {**data, "hops_per_node": list(hops) * nodes}
        return data

    @model_validator(mode="after")
    def _check_hops(self):
        if len(self.hops_per_node) != self.nodes:
            raise ValueError(f"hops_per_node: expected {self.nodes} entries, got {len(self.hops_per_node)}")
        if any(h < 0 for h in self.hops_per_node):
            raise ValueError("hops_per_node: hop counts must be >= 0")
        return self

    def cluster_spec(self) -> ClusterSpec:
        nodes = tuple(
            NodeSpec(
                node_id=i,
                total_cores=self.cores_per_node,
                total_dram=self.dram_mb_per_node,
                power_coeffs=self.power_coeffs,
                bandwidth=self.bandwidth_mb_s,
                hop_count=self.hops_per_node[i],
            )
            for i in range(self.nodes)
        )
        return ClusterSpec(
            nodes=nodes,
            storage_power=self.storage_power_w,
            network_power=self.network_power_w,
            switch_delay=self.switch_delay_s,
            epoch_length=self.epoch_length_s,
            shutdown_duration=self.shutdown_s,
        )

    def simulation_params(self) -> SimulationParams:
        return SimulationParams(
            concurrency_per_unit=self.concurrency_per_unit,
            idle_util=self.idle_util,
            startup_util=self.startup_util,
            shutdown_util=self.shutdown_util,
        )

    def forecast_params(self) -> ForecastParams:
        return ForecastParams(
            slo_constraint=self.cstr,
            laxity=self.laxity,
            iteration_ceiling=self.gen,
            local_search_limit=self.k,
        )


class ExperimentRunRequest(BaseModel):
    """Request model for running an experiment over HTTP."""
    config_path: Optional[str] = None
    policy: Optional[str] = None
    seed: Optional[int] = None
    intensity: Optional[float] = None
    laxity: Optional[float] = None
    cstr: Optional[float] = None
    nodes: Optional[int] = None


class SummaryResponse(BaseModel):
    """Day-level results of one experiment."""
    policy: str
    seed: int
    epochs: int
    ca_cum_g: float
    co_total: float
    water_carbon_total_g: float
    energy_total_kwh: float
    sl_ave: float
    lo_mean: float
    decision_times_s: List[float] = Field(default_factory=list)
    metrics_file_path: Optional[str] = None
    summary_file_path: Optional[str] = None


class HealthResponse(BaseModel):
    """Health check response."""
    status: str
    message: str
    default_config_found: bool
