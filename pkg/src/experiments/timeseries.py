"""
Diagnostics time series: comma-separated text with the resolved config embedded
as comment lines above the header row.
"""

import logging
from pathlib import Path
from typing import IO, List, NamedTuple, Optional, Union

import numpy as np

from src.config import CONFIG_BEGIN, CONFIG_END, dump_sim_config, extract_embedded_config
from src.core.diagnostics import all_generators
from src.models.sim_models import DiagnosticsRecord, SimConfig, Variant

logger = logging.getLogger("biwave.experiments.timeseries")


def column_names(l_plus_1: int, variant: Variant = Variant.STANDARD) -> List[str]:
    """Fixed column order; E_psi is appended only for the variant."""
    columns = ["t", "E_eps", "E_geom", "penalty_mass", "constraint_l2", "constraint_linf"]
    columns += [g.label for g in all_generators(l_plus_1)]
    columns += ["tangential_residual_l2", "identity_gap_l2"]
    if variant == Variant.TANGENTIAL_LAPLACIAN:
        columns.append("E_psi")
    return columns


def record_row(record: DiagnosticsRecord) -> List[float]:
    row = [
        record.t,
        record.energy_penalized,
        record.energy_geometric,
        record.penalty_mass,
        record.constraint_l2,
        record.constraint_linf,
        *record.charges,
        record.tangential_residual_l2,
        record.identity_gap_l2,
    ]
    if record.energy_variant is not None:
        row.append(record.energy_variant)
    return row


class TimeSeriesWriter:
    """
    Streams diagnostics rows to a file.

    Usable as a context manager and as a run() observer.
    """

    def __init__(self, path: Union[str, Path], config: SimConfig):
        self.path = Path(path)
        self.config = config
        self.columns = column_names(config.l_plus_1, config.integrator.variant)
        self.rows_written = 0
        self._handle: Optional[IO[str]] = None

    def __enter__(self) -> "TimeSeriesWriter":
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._handle = self.path.open("w")
        self._handle.write(CONFIG_BEGIN + "\n")
        for line in dump_sim_config(self.config):
            self._handle.write(f"# {line}\n")
        self._handle.write(CONFIG_END + "\n")
        self._handle.write(",".join(self.columns) + "\n")
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if self._handle is not None:
            self._handle.close()
            self._handle = None
        logger.info(f"Wrote {self.rows_written} diagnostics rows to {self.path}")

    def write(self, record: DiagnosticsRecord) -> None:
        if self._handle is None:
            raise RuntimeError("writer is not open")
        # repr round-trips floats exactly
        self._handle.write(",".join(repr(float(value)) for value in record_row(record)) + "\n")
        self._handle.flush()
        self.rows_written += 1

    def __call__(self, index: int, state, record: DiagnosticsRecord) -> None:
        self.write(record)


class TimeSeries(NamedTuple):
    config_text: str
    columns: List[str]
    data: np.ndarray

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.columns.index(name)]


def write_timeseries(path: Union[str, Path], config: SimConfig, records: List[DiagnosticsRecord]) -> Path:
    with TimeSeriesWriter(path, config) as writer:
        for record in records:
            writer.write(record)
    return Path(path)


def read_timeseries(path: Union[str, Path]) -> TimeSeries:
    """
    Read a diagnostics file back.

    Returns:
        TimeSeries: Embedded config text, column names and a (rows, columns) array
    """
    text = Path(path).read_text()
    body = [line for line in text.splitlines() if line and not line.startswith("#")]
    if not body:
        raise ValueError(f"{path} has no header row")
    columns = body[0].split(",")
    rows = [[float(value) for value in line.split(",")] for line in body[1:]]
    data = np.array(rows, dtype=float).reshape(len(rows), len(columns))
    return TimeSeries(config_text=extract_embedded_config(text), columns=columns, data=data)
