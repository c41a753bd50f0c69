"""
Workload ingestion: function profiles, invocation traces, intensity scaling,
per-epoch forecasts and synthetic arrivals.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from models.schemas import EpochInput, ForecastParams, FunctionProfile
from models.state import Request

logger = logging.getLogger(__name__)

PROFILE_COLUMNS = ["function_id", "avg_exec_s", "image_mb"]
TRACE_COLUMNS = ["epoch", "function_id", "invocations"]


class ProfileFormatError(ValueError):
    """Malformed or inconsistent function profile file."""


class TraceFormatError(ValueError):
    """Malformed or inconsistent invocation trace file."""


@dataclass(frozen=True)
class ArrivalSchedule:
    """Invocation counts indexed by epoch (rows) and function ID (columns)."""
    counts: pd.DataFrame

    @property
    def horizon(self) -> int:
        return len(self.counts.index)

    @property
    def function_ids(self) -> List[str]:
        return list(self.counts.columns)

    def count(self, epoch: int, function_id: str) -> int:
        return int(self.counts.at[epoch, function_id])

    def epoch_totals(self) -> pd.Series:
        return self.counts.sum(axis=1)


def _read_csv(path: Path, columns: List[str], error_cls, allow_empty: bool = False) -> pd.DataFrame:
    try:
        df = pd.read_csv(path, dtype=str, skipinitialspace=True, keep_default_na=False)
    except pd.errors.EmptyDataError:
        if allow_empty:
            return pd.DataFrame(columns=columns, dtype=str)
        raise error_cls(f"{path}: empty file, expected header {','.join(columns)}")
    except FileNotFoundError:
        raise error_cls(f"{path}: file not found")
    except pd.errors.ParserError as e:
        raise error_cls(f"{path}: {e}")
    header = [c.strip() for c in df.columns]
    if header != columns:
        raise error_cls(f"{path}: line 1: expected header {','.join(columns)}, got {','.join(header)}")
    df.columns = header
    return df


def _to_number(value: str, cast, path: Path, line: int, column: str, error_cls):
    try:
        return cast(value.strip())
    except (TypeError, ValueError):
        raise error_cls(f"{path}: line {line}: {column} is not a number: {value!r}")


def load_function_profiles(path, base_cores: int = 2, base_dram: int = 150) -> Dict[str, FunctionProfile]:
    """
    Load the profile CSV (`function_id,avg_exec_s,image_mb`).

    Returns:
        Profiles keyed by function ID

    Raises:
        ProfileFormatError: On parse errors, duplicates or non-positive fields
    """
    path = Path(path)
    df = _read_csv(path, PROFILE_COLUMNS, ProfileFormatError)
    profiles: Dict[str, FunctionProfile] = {}
    for offset, row in enumerate(df.itertuples(index=False)):
        line = offset + 2
        function_id = row.function_id.strip()
        if not function_id:
            raise ProfileFormatError(f"{path}: line {line}: empty function_id")
        if function_id in profiles:
            raise ProfileFormatError(f"{path}: line {line}: duplicate function_id {function_id}")
        avg_exec = _to_number(row.avg_exec_s, float, path, line, "avg_exec_s", ProfileFormatError)
        image = _to_number(row.image_mb, float, path, line, "image_mb", ProfileFormatError)
        if not avg_exec > 0 or not image > 0:
            raise ProfileFormatError(f"{path}: line {line}: avg_exec_s and image_mb must be positive")
        profiles[function_id] = FunctionProfile(
            function_id=function_id,
            avg_exec_time=avg_exec,
            image_size=image,
            base_cores=base_cores,
            base_dram=base_dram,
        )
    logger.info("Loaded %d function profiles from %s", len(profiles), path)
    return profiles


def load_trace(path, profiles: Dict[str, FunctionProfile], horizon: Optional[int] = None) -> ArrivalSchedule:
    """
    Load the trace CSV (`epoch,function_id,invocations`); missing pairs are 0
    and an empty file is an empty trace.

    Raises:
        TraceFormatError: On parse errors, unknown IDs or negative counts
    """
    path = Path(path)
    df = _read_csv(path, TRACE_COLUMNS, TraceFormatError, allow_empty=True)
    records = []
    for offset, row in enumerate(df.itertuples(index=False)):
        line = offset + 2
        function_id = row.function_id.strip()
        if function_id not in profiles:
            raise TraceFormatError(f"{path}: line {line}: unknown function_id {function_id}")
        epoch = _to_number(row.epoch, int, path, line, "epoch", TraceFormatError)
        count = _to_number(row.invocations, int, path, line, "invocations", TraceFormatError)
        if epoch < 0:
            raise TraceFormatError(f"{path}: line {line}: negative epoch {epoch}")
        if count < 0:
            raise TraceFormatError(f"{path}: line {line}: negative invocation count {count}")
        records.append((epoch, function_id, count))

    last_epoch = max((r[0] for r in records), default=-1)
    if horizon is None:
        horizon = last_epoch + 1
    elif last_epoch >= horizon:
        raise TraceFormatError(f"{path}: epoch {last_epoch} beyond horizon {horizon}")

    counts = pd.DataFrame(0, index=pd.RangeIndex(horizon, name="epoch"), columns=sorted(profiles), dtype=np.int64)
    for epoch, function_id, count in records:
        counts.at[epoch, function_id] += count
    logger.info("Loaded trace %s: %d epochs, %d invocations", path, horizon, int(counts.values.sum()))
    return ArrivalSchedule(counts)


def scale_intensity(schedule: ArrivalSchedule, factor: float) -> ArrivalSchedule:
    """Multiply every count by factor, rounding half-up."""
    if not factor > 0:
        raise ValueError(f"intensity factor must be positive, got {factor}")
    scaled = np.floor(schedule.counts.to_numpy(dtype=float) * factor + 0.5).astype(np.int64)
    return ArrivalSchedule(pd.DataFrame(scaled, index=schedule.counts.index, columns=schedule.counts.columns))


def epoch_forecast(schedule: ArrivalSchedule, epoch: int, params: ForecastParams) -> EpochInput:
    """Forecast F_e/R_e for epoch e: nonzero IDs in lexicographic order."""
    if not 0 <= epoch < schedule.horizon:
        raise IndexError(f"epoch {epoch} outside trace horizon {schedule.horizon}")
    row = schedule.counts.loc[epoch]
    active = row[row > 0]
    function_ids = tuple(sorted(active.index))
    return EpochInput(
        epoch_index=epoch,
        function_ids=function_ids,
        intensities={f: int(active[f]) for f in function_ids},
        slo_constraint=params.slo_constraint,
        laxity=params.laxity,
        iteration_ceiling=params.iteration_ceiling,
        local_search_limit=params.local_search_limit,
    )


def assign_deadline(request: Request, profile: FunctionProfile, laxity: float) -> Request:
    """Set T_deadline = T_arrival + laxity * T_ave."""
    if not laxity > 0:
        raise ValueError(f"laxity must be positive, got {laxity}")
    request.deadline = request.arrival + laxity * profile.avg_exec_time
    return request


def observed_laxity(request: Request, profile: FunctionProfile) -> float:
    return (request.deadline - request.arrival) / profile.avg_exec_time


def synthesize_arrivals(
    epoch_input: EpochInput,
    profiles: Dict[str, FunctionProfile],
    epoch_length: float,
    seed: int,
) -> List[Request]:
    """
    Draw R_e(f) uniform arrival times per ID over [0, epoch_length).

    Returns:
        Requests sorted by arrival, deadlines assigned, seq = position
    """
    if not epoch_length > 0:
        raise ValueError(f"epoch_length must be positive, got {epoch_length}")
    rng = np.random.default_rng(seed)
    requests: List[Request] = []
    for function_id in epoch_input.function_ids:
        times = rng.uniform(0.0, epoch_length, size=epoch_input.intensities[function_id])
        profile = profiles[function_id]
        for t in times:
            request = Request(function_id=function_id, arrival=float(t), deadline=float(t))
            requests.append(assign_deadline(request, profile, epoch_input.laxity))
    requests.sort(key=lambda r: r.arrival)
    for seq, request in enumerate(requests):
        request.seq = seq
    return requests
