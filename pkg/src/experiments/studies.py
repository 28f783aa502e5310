"""
Canned studies on top of the integrator: a single run, an epsilon sweep and
dt / grid self-convergence.
"""

import asyncio
import logging
import math
from contextlib import ExitStack
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field as PydanticField

from src.config import get_fft_workers
from src.core.dynamics import Observer, Trajectory, run, step_count
from src.core.field_ops import SpectralWorkspace, l2_norm
from src.core.initial_data import build_initial_state
from src.exceptions import ConfigError, ConvergenceFailure, NonFinite
from src.experiments.snapshots import write_snapshot
from src.experiments.timeseries import TimeSeriesWriter
from src.models.sim_models import DiagnosticsRecord, GridSpec, SimConfig, State

logger = logging.getLogger("biwave.experiments.studies")

SWEEP_DT_FACTOR = 0.1
SWEEP_CHECKPOINTS = 10
MIN_DT_ORDER = 1.8
ERROR_FLOOR = 1e-12
GRID_DECAY = 10.0
GRID_FLOOR = 1e-10


class RunResult(BaseModel):
    """Outcome of one simulation."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    config: SimConfig
    initial: State
    trajectory: Trajectory

    @property
    def initial_energy(self) -> float:
        return self.trajectory.records[0].energy_penalized


def run_single(
    config: SimConfig,
    ws: Optional[SpectralWorkspace] = None,
    keep_states: bool = False,
    observer: Optional[Observer] = None,
) -> RunResult:
    """
    Run one configured simulation, streaming diagnostics to the configured file.

    With a snapshot directory configured, initial.bin and final.bin are written there.

    Args:
        config: Resolved configuration
        ws: Workspace to reuse; built from config.grid when omitted
        keep_states: Keep sampled states in the trajectory
        observer: Extra callback for every sample, after the diagnostics writer

    Returns:
        RunResult: Initial state and trajectory

    Raises:
        NonFinite: on blow-up; the last good state is written as last_good.bin
            in the snapshot directory when one is configured
    """
    ws = ws if ws is not None else SpectralWorkspace(config.grid, workers=get_fft_workers())
    initial = build_initial_state(config.initial, config.grid, config.l, ws)
    snapshot_dir = Path(config.output.snapshots) if config.output.snapshots else None
    epsilon = config.integrator.penalty.epsilon

    with ExitStack() as stack:
        observers: List[Observer] = []
        if config.output.diagnostics:
            observers.append(stack.enter_context(TimeSeriesWriter(config.output.diagnostics, config)))
        if observer is not None:
            observers.append(observer)

        def observe(index: int, state: State, record: DiagnosticsRecord) -> None:
            for callback in observers:
                callback(index, state, record)

        try:
            trajectory = run(
                initial,
                config.integrator,
                config.T,
                config.sample_every,
                ws,
                keep_states=keep_states,
                observer=observe,
            )
        except NonFinite as e:
            if snapshot_dir is not None and e.last_good is not None:
                write_snapshot(snapshot_dir / "last_good.bin", e.last_good, config.grid, epsilon)
            raise

    if snapshot_dir is not None:
        write_snapshot(snapshot_dir / "initial.bin", initial, config.grid, epsilon)
        write_snapshot(snapshot_dir / "final.bin", trajectory.final, config.grid, epsilon)
    logger.info(f"Run finished at t={trajectory.final.t!r} with {len(trajectory.records)} samples")
    return RunResult(config=config, initial=initial, trajectory=trajectory)


# --- epsilon sweep ---


class SweepMember(BaseModel):
    """Summary of one epsilon of a sweep."""
    epsilon: float
    dt: float
    steps: int
    status: str = "ok"
    error: Optional[str] = None
    initial_energy: Optional[float] = None
    max_mass_ratio: Optional[float] = None
    max_constraint_l2: Optional[float] = None
    max_charge_drift: Optional[float] = None
    max_energy_ratio: Optional[float] = None
    diagnostics_path: Optional[str] = None


class SweepSummary(BaseModel):
    members: List[SweepMember]
    slope: Optional[float] = None
    # (eps_k, eps_{k+1}, max over matched times of ||u_k - u_{k+1}||_L2)
    distances: List[Tuple[float, float, float]] = PydanticField(default_factory=list)

    @property
    def succeeded(self) -> List[SweepMember]:
        return [member for member in self.members if member.status == "ok"]


def sweep_schedule(epsilon: float, T: float) -> Tuple[float, int, int]:
    """
    dt near 0.1 sqrt(eps), adjusted so the step count is a multiple of the checkpoint count.

    Returns:
        Tuple[float, int, int]: (dt, steps, steps between checkpoints)
    """
    target = SWEEP_DT_FACTOR * math.sqrt(epsilon)
    blocks = max(int(math.ceil(T / (target * SWEEP_CHECKPOINTS))), 1)
    steps = blocks * SWEEP_CHECKPOINTS
    return T / steps, steps, blocks


def member_config(config: SimConfig, epsilon: float, diagnostics: Optional[str]) -> SimConfig:
    """Copy of config with penalty epsilon and the sweep dt applied, sampling every step."""
    dt, _, _ = sweep_schedule(epsilon, config.T)
    penalty = config.integrator.penalty.model_copy(update={"epsilon": epsilon})
    integrator = config.integrator.model_copy(update={"dt": dt, "penalty": penalty})
    output = config.output.model_copy(update={"diagnostics": diagnostics, "snapshots": None})
    return config.model_copy(update={"integrator": integrator, "sample_every": 1, "output": output})


def fit_slope(epsilons: Sequence[float], values: Sequence[float]) -> float:
    """Least-squares slope of log(values) against log(epsilons)."""
    slope, _ = np.polyfit(np.log(epsilons), np.log(values), 1)
    return float(slope)


def _member_path(output_dir: Path, stem: str, epsilon: float) -> Path:
    return output_dir / f"{stem}_eps{epsilon!r}.csv"


def _run_member(config: SimConfig, epsilon: float, path: Optional[Path]) -> Tuple[SweepMember, List[State]]:
    cfg = member_config(config, epsilon, str(path) if path is not None else None)
    _, steps, stride = sweep_schedule(epsilon, config.T)
    member = SweepMember(
        epsilon=epsilon,
        dt=cfg.integrator.dt,
        steps=steps,
        diagnostics_path=str(path) if path is not None else None,
    )
    logger.info(f"Sweep member eps={epsilon!r} starting: dt={cfg.integrator.dt!r}, {steps} steps")
    try:
        checkpoints: List[State] = []

        def keep_checkpoint(index: int, state: State, record: DiagnosticsRecord) -> None:
            if index % stride == 0:
                checkpoints.append(state)

        result = run_single(cfg, observer=keep_checkpoint)
    except Exception as e:
        logger.warning(f"Sweep member eps={epsilon!r} failed: {e}")
        return member.model_copy(update={"status": "failed", "error": str(e)}), []

    records = result.trajectory.records
    e0 = result.initial_energy
    q0 = np.asarray(records[0].charges)
    drifts = [float(np.max(np.abs(np.asarray(r.charges) - q0), initial=0.0)) for r in records]
    member = member.model_copy(
        update={
            "initial_energy": e0,
            "max_mass_ratio": max(r.penalty_mass for r in records) / (epsilon * e0) if e0 > 0 else 0.0,
            "max_constraint_l2": max(r.constraint_l2 for r in records),
            "max_charge_drift": max(drifts),
            "max_energy_ratio": max(r.energy_geometric for r in records) / e0 if e0 > 0 else 0.0,
        }
    )
    logger.info(f"Sweep member eps={epsilon!r} finished")
    return member, checkpoints


def _check_epsilons(epsilons: Sequence[float]) -> None:
    if not epsilons:
        raise ConfigError("sweep needs at least one epsilon")
    if any(not eps > 0 for eps in epsilons):
        raise ConfigError(f"sweep epsilons must be positive, got {list(epsilons)}")
    if any(b >= a for a, b in zip(epsilons, epsilons[1:])):
        raise ConfigError(f"sweep epsilons must be strictly decreasing, got {list(epsilons)}")


async def run_sweep_async(
    config: SimConfig,
    epsilons: Sequence[float],
    jobs: int = 1,
    output_dir: Optional[Union[str, Path]] = None,
) -> SweepSummary:
    """
    Run one simulation per epsilon, at most `jobs` at a time, and summarize.

    Members share the initial data and are sampled at the same checkpoints,
    so fields can be compared at matched times.
    """
    _check_epsilons(epsilons)
    stem = Path(config.output.diagnostics).stem if config.output.diagnostics else "diagnostics"
    out = Path(output_dir) if output_dir is not None else None
    semaphore = asyncio.Semaphore(max(jobs, 1))

    async def member(epsilon: float) -> Tuple[SweepMember, List[State]]:
        async with semaphore:
            path = _member_path(out, stem, epsilon) if out is not None else None
            return await asyncio.to_thread(_run_member, config, epsilon, path)

    results = await asyncio.gather(*(member(eps) for eps in epsilons))
    members = [m for m, _ in results]
    states = {m.epsilon: s for m, s in results if m.status == "ok"}

    ok = [m for m in members if m.status == "ok"]
    slope = None
    if len(ok) >= 2:
        slope = fit_slope([m.epsilon for m in ok], [m.max_constraint_l2 for m in ok])

    distances = []
    for a, b in zip(ok, ok[1:]):
        pairs = zip(states[a.epsilon], states[b.epsilon])
        grid = config.grid
        distance = max(l2_norm(np.sqrt(np.sum((sa.u - sb.u) ** 2, axis=-1)), grid) for sa, sb in pairs)
        distances.append((a.epsilon, b.epsilon, float(distance)))

    summary = SweepSummary(members=members, slope=slope, distances=distances)
    if out is not None:
        write_sweep_summary(out / "sweep_summary.csv", summary)
    return summary


def run_sweep(
    config: SimConfig,
    epsilons: Sequence[float],
    jobs: int = 1,
    output_dir: Optional[Union[str, Path]] = None,
) -> SweepSummary:
    return asyncio.run(run_sweep_async(config, epsilons, jobs, output_dir))


def _fmt(value: Optional[float]) -> str:
    return "" if value is None else repr(float(value))


def write_sweep_summary(path: Union[str, Path], summary: SweepSummary) -> Path:
    """Write the per-epsilon table, then the fitted slope and the pairwise distances as comments."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["epsilon,dt,steps,status,max_mass_ratio,max_constraint_l2,max_charge_drift,max_energy_ratio"]
    for m in summary.members:
        lines.append(
            ",".join(
                [
                    repr(m.epsilon),
                    repr(m.dt),
                    str(m.steps),
                    m.status,
                    _fmt(m.max_mass_ratio),
                    _fmt(m.max_constraint_l2),
                    _fmt(m.max_charge_drift),
                    _fmt(m.max_energy_ratio),
                ]
            )
        )
    if summary.slope is not None:
        lines.append(f"# constraint_slope = {summary.slope!r}")
    for eps_a, eps_b, distance in summary.distances:
        lines.append(f"# distance {eps_a!r} {eps_b!r} = {distance!r}")
    path.write_text("\n".join(lines) + "\n")
    logger.info(f"Wrote sweep summary to {path}")
    return path


# --- convergence ---


class ConvergenceLevel(BaseModel):
    level: int
    dt: float
    points: Tuple[int, ...]
    error: float
    order: Optional[float] = None


class ConvergenceReport(BaseModel):
    mode: str
    levels: List[ConvergenceLevel]
    passed: bool

    def raise_for_failure(self) -> None:
        if not self.passed:
            raise ConvergenceFailure(f"{self.mode} convergence failed: {self.describe()}")

    def describe(self) -> str:
        return "; ".join(
            f"level {lv.level}: error={lv.error:.3e} order={'-' if lv.order is None else f'{lv.order:.3f}'}"
            for lv in self.levels
        )


def _final_state(config: SimConfig, grid: GridSpec, dt: float) -> State:
    ws = SpectralWorkspace(grid, workers=get_fft_workers())
    initial = build_initial_state(config.initial, grid, config.l, ws)
    cfg = config.integrator.model_copy(update={"dt": dt})
    steps = step_count(config.T, dt)
    trajectory = run(initial, cfg, config.T, steps, ws, keep_states=False)
    return trajectory.final


def _state_distance(a: State, b: State, grid: GridSpec) -> float:
    du = l2_norm(np.sqrt(np.sum((a.u - b.u) ** 2, axis=-1)), grid)
    dv = l2_norm(np.sqrt(np.sum((a.v - b.v) ** 2, axis=-1)), grid)
    return float(math.hypot(du, dv))


def _subsample(state: State, factor: int, n: int) -> State:
    index = (slice(None, None, factor),) * n
    return State(u=state.u[index], v=state.v[index], t=state.t)


def _dt_convergence(config: SimConfig, levels: int) -> ConvergenceReport:
    # every level must land exactly on T
    dt0 = config.T / step_count(config.T, config.integrator.dt)
    reference = _final_state(config, config.grid, dt0 / 2 ** levels)
    rows: List[ConvergenceLevel] = []
    for level in range(levels):
        dt = dt0 / 2 ** level
        error = _state_distance(_final_state(config, config.grid, dt), reference, config.grid)
        order = None
        if rows and error > ERROR_FLOOR and rows[-1].error > ERROR_FLOOR:
            order = math.log2(rows[-1].error / error)
        rows.append(ConvergenceLevel(level=level, dt=dt, points=config.grid.points, error=error, order=order))
    passed = all(row.order >= MIN_DT_ORDER for row in rows if row.order is not None)
    return ConvergenceReport(mode="dt", levels=rows, passed=passed)


def _grid_convergence(config: SimConfig, levels: int) -> ConvergenceReport:
    dt = config.integrator.dt
    finest = config.grid.refined(2 ** levels)
    reference = _final_state(config, finest, dt)
    rows: List[ConvergenceLevel] = []
    passed = True
    for level in range(levels):
        grid = config.grid.refined(2 ** level)
        coarse_ref = _subsample(reference, 2 ** (levels - level), grid.n)
        error = _state_distance(_final_state(config, grid, dt), coarse_ref, grid)
        order = None
        if rows:
            previous = rows[-1].error
            order = math.log10(previous / error) if error > 0 and previous > 0 else None
            if error > GRID_FLOOR and error * GRID_DECAY > previous:
                passed = False
        rows.append(ConvergenceLevel(level=level, dt=dt, points=grid.points, error=error, order=order))
    return ConvergenceReport(mode="grid", levels=rows, passed=passed)


def run_convergence(
    config: SimConfig,
    mode: str = "dt",
    levels: int = 4,
    output_dir: Optional[Union[str, Path]] = None,
) -> ConvergenceReport:
    """
    Self-convergence study against the finest level as reference.

    dt mode halves dt per level; the observed order must reach 1.8 wherever
    the errors are above roundoff. grid mode doubles N per level; each level's
    error must drop tenfold or already sit below 1e-10. In grid mode the
    reported order is the decimal decay per doubling.

    Args:
        config: Base configuration (level 0)
        mode: "dt" or "grid"
        levels: Number of compared levels, at least 2
        output_dir: Directory for convergence_<mode>.csv

    Returns:
        ConvergenceReport: Per-level errors and the verdict
    """
    if levels < 2:
        raise ConfigError("need ≥ 2 levels")
    if mode == "dt":
        report = _dt_convergence(config, levels)
    elif mode == "grid":
        report = _grid_convergence(config, levels)
    else:
        raise ConfigError(f"unknown convergence mode {mode!r}")

    logger.info(f"Convergence ({mode}): {report.describe()}")
    if output_dir is not None:
        write_convergence_table(Path(output_dir) / f"convergence_{mode}.csv", report)
    return report


def write_convergence_table(path: Union[str, Path], report: ConvergenceReport) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["level,dt,N,error,order"]
    for row in report.levels:
        points = "x".join(str(size) for size in row.points)
        lines.append(f"{row.level},{row.dt!r},{points},{row.error!r},{_fmt(row.order)}")
    lines.append(f"# passed = {str(report.passed).lower()}")
    path.write_text("\n".join(lines) + "\n")
    return path
