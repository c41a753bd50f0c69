"""
Shared fixtures: a small two-node cluster, flat environment factors and
helpers to build warm states, requests and optimizer contexts.
"""
import sys
from pathlib import Path
from typing import Dict, Optional

import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from models.schemas import (  # noqa: E402
    ClusterSpec,
    EnvironmentSeries,
    EpochInput,
    FunctionProfile,
    NodeSpec,
    SimulationParams,
)
from models.state import ClusterState, Plan, Request  # noqa: E402
from services.evaluation_service import OptimizerContext  # noqa: E402
from services.simulation_service import EpochSimulator  # noqa: E402

LINEAR = (0.0, 0.0, 0.0, 2.0, 100.0)


def make_cluster(
    nodes: int = 2,
    cores: int = 8,
    dram: int = 4096,
    coeffs=LINEAR,
    bandwidth: float = 125.0,
    hops: int = 2,
    switch_delay: float = 0.05,
    storage_power: float = 50.0,
    network_power: float = 30.0,
) -> ClusterSpec:
    return ClusterSpec(
        nodes=tuple(
            NodeSpec(node_id=i, total_cores=cores, total_dram=dram, power_coeffs=coeffs,
                     bandwidth=bandwidth, hop_count=hops)
            for i in range(nodes)
        ),
        storage_power=storage_power,
        network_power=network_power,
        switch_delay=switch_delay,
    )


def make_profiles(**specs) -> Dict[str, FunctionProfile]:
    """make_profiles(f1=(3.0, 125)) -> {f1: profile with T_ave 3 s, 125 MB image}."""
    return {
        f: FunctionProfile(function_id=f, avg_exec_time=t, image_size=img)
        for f, (t, img) in specs.items()
    }


def make_request(profiles, function_id: str, arrival: float, laxity: float = 10.0, seq: int = 0) -> Request:
    deadline = arrival + laxity * profiles[function_id].avg_exec_time
    return Request(function_id=function_id, arrival=arrival, deadline=deadline, seq=seq)


def warm_state(simulator: EpochSimulator, placements) -> ClusterState:
    """Drained state holding the plan's containers idle, clock at 0."""
    plan = Plan.build(placements)
    _, state = simulator.simulate_epoch(ClusterState.empty(simulator.cluster), plan, [])
    simulator._reset_for_epoch(state)
    return state


def make_context(
    cluster: ClusterSpec,
    env: EnvironmentSeries,
    profiles,
    intensities: Dict[str, int],
    prev_state: Optional[ClusterState] = None,
    seed: int = 0,
    gen: int = 50,
    k: int = 5,
    cstr: float = 0.05,
    laxity: float = 10.0,
    epoch_index: int = 0,
    **kwargs,
) -> OptimizerContext:
    function_ids = tuple(sorted(f for f, r in intensities.items() if r > 0))
    epoch_input = EpochInput(
        epoch_index=epoch_index,
        function_ids=function_ids,
        intensities={f: intensities[f] for f in function_ids},
        slo_constraint=cstr,
        laxity=laxity,
        iteration_ceiling=gen,
        local_search_limit=k,
    )
    return OptimizerContext(
        epoch_input=epoch_input,
        prev_state=prev_state if prev_state is not None else ClusterState.empty(cluster),
        cluster=cluster,
        env=env,
        profiles=profiles,
        params=kwargs.pop("params", SimulationParams()),
        seed=seed,
        **kwargs,
    )


@pytest.fixture
def cluster() -> ClusterSpec:
    return make_cluster()


@pytest.fixture
def env() -> EnvironmentSeries:
    return EnvironmentSeries.constant(ci=400.0, price=0.12, cooling=0.3, water=50.0)


@pytest.fixture
def profiles() -> Dict[str, FunctionProfile]:
    return make_profiles(f1=(3.0, 125.0), f2=(1.0, 125.0), f3=(2.0, 60.0))


@pytest.fixture
def simulator(cluster, env, profiles) -> EpochSimulator:
    return EpochSimulator(cluster, env, profiles, check_invariants=True)


@pytest.fixture
def data_dir(tmp_path) -> Path:
    """Tiny experiment inputs: two functions, three epochs, flat environment."""
    (tmp_path / "profiles.csv").write_text(
        "function_id,avg_exec_s,image_mb\n"
        "fa,2.0,125\n"
        "fb,0.5,60\n"
    )
    (tmp_path / "trace.csv").write_text(
        "epoch,function_id,invocations\n"
        "0,fa,2\n"
        "0,fb,3\n"
        "1,fa,1\n"
        "2,fb,4\n"
    )
    rows = ["hour,ci_g_per_kwh,price_per_kwh,cooling_eff,water_factor"]
    rows += [f"{h},{300 + 10 * h},0.1,0.3,40" for h in range(24)]
    (tmp_path / "environment.csv").write_text("\n".join(rows) + "\n")
    return tmp_path


@pytest.fixture
def experiment_yaml(data_dir):
    """Factory writing an experiment config next to the tiny inputs."""
    def write(name: str = "experiment.yaml", **keys) -> Path:
        config = {
            "trace_path": "trace.csv",
            "profiles_path": "profiles.csv",
            "environment_path": "environment.csv",
            "nodes": 2,
            "cores_per_node": 8,
            "dram_mb_per_node": 4096,
            "intensity": 5,
            "gen": 6,
            "decision_budget_s": 20,
            "record_decision_time": False,
            "max_containers_per_id": 2,
            "max_units": 2,
        }
        config.update(keys)
        lines = []
        for key, value in config.items():
            if isinstance(value, (list, tuple)):
                value = "[" + ", ".join(str(v) for v in value) + "]"
            elif isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{key}: {value}")
        path = data_dir / name
        path.write_text("\n".join(lines) + "\n")
        return path
    return write
