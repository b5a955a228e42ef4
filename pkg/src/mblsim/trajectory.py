"""Quantum-trajectory engine: unitary evolution interleaved with monitoring.

One protocol step is evolve(dt) followed by a measurement sweep; observables
are evaluated after the sweep at the sampled steps.  The unitary between
consecutive "interesting" steps (a measurement hit or a sample point) is
applied as a single exp(-i H k dt), which is exact for a time-independent H
and keeps low measurement rates cheap.  The RNG draw layout stays strictly
per-step, so results are a pure function of the configuration.

Seed splitting is counter-addressed: stream keys (kind, indices...) are fed to
numpy's SeedSequence as spawn keys, which makes every disorder realization and
trajectory independent of scheduling order.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from multiprocessing import get_context
from typing import Callable

import numpy as np

from .hamiltonian import (
    DisorderRealization,
    EigenSystem,
    build_hamiltonian,
    diagonalize,
    evolve,
    sample_disorder,
)
from .measurement import BASES, MeasurementEvent, MeasurementRecord, measure_site
from .observables import (
    _spectrum,
    _entropy_from_probs,
    _renyi_from_probs,
    diagonal_entropy,
    quarter_partition,
    reduced_density_matrix,
    segment_entropy_profile,
    tripartite_information,
)

INITIAL_STATES = ("haar_product", "z_product", "specified")
TIME_GRIDS = ("linear", "geometric")

# Stream kinds for counter-addressed seed derivation.
_STREAM_DISORDER = 1
_STREAM_TRAJECTORY = 2
_STREAM_CELL = 3


@dataclass(frozen=True)
class ObservableSet:
    """Which observables the engine records at each sampled step.

    renyi_orders take effect on the segment profile when entropy_vs_l is on,
    and on the half chain otherwise.
    """

    half_chain_entropy: bool = True
    tripartite: bool = True
    diagonal_entropy: bool = True
    entropy_vs_l: bool = False
    renyi_orders: tuple[float, ...] = ()

    def __post_init__(self):
        for order in self.renyi_orders:
            if not order > 0 or order == 1:
                raise ValueError(f"Renyi order must be positive and != 1, got {order}")
        if not (
            self.half_chain_entropy
            or self.tripartite
            or self.diagonal_entropy
            or self.entropy_vs_l
        ):
            raise ValueError("observable set is empty")


@dataclass(frozen=True)
class TrajectoryConfig:
    """Full specification of a monitored ensemble; every output is a pure
    function of this object."""

    n_sites: int
    measure_prob: float
    basis: str = "Z"
    disorder_strength: float = 10.0
    coupling: float = 1.0
    dt: float = 1.0
    t_max: float = 400.0
    boundary: str = "periodic"
    observables: ObservableSet = ObservableSet()
    initial_state: str = "haar_product"
    initial_vector: tuple[complex, ...] | None = None
    master_seed: int = 0
    n_disorder: int = 30
    n_traj_per_disorder: int = 10
    time_grid: str = "linear"
    sample_stride: int = 1
    n_geometric: int = 48

    def __post_init__(self):
        if not 2 <= self.n_sites <= 16:
            raise ValueError(f"n_sites must be in [2, 16], got {self.n_sites}")
        if not 0.0 <= self.measure_prob <= 1.0:
            raise ValueError(f"measure_prob must be in [0, 1], got {self.measure_prob}")
        if self.basis not in BASES:
            raise ValueError(f"basis must be one of {BASES}, got {self.basis!r}")
        if self.disorder_strength < 0:
            raise ValueError("disorder_strength must be non-negative")
        if self.coupling <= 0:
            raise ValueError("coupling must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.t_max <= 0:
            raise ValueError("t_max must be positive")
        steps = round(self.t_max / self.dt)
        if steps < 1 or abs(steps * self.dt - self.t_max) > 1e-9 * max(1.0, self.t_max):
            raise ValueError("t_max must be a positive integer multiple of dt")
        if self.boundary not in ("periodic", "open"):
            raise ValueError(f"unknown boundary {self.boundary!r}")
        if self.observables.tripartite and self.n_sites < 4:
            raise ValueError("tripartite information needs at least 4 sites")
        if self.initial_state not in INITIAL_STATES:
            raise ValueError(f"initial_state must be one of {INITIAL_STATES}")
        if self.initial_state == "specified":
            if self.initial_vector is None:
                raise ValueError("initial_state='specified' requires initial_vector")
            vec = np.asarray(self.initial_vector)
            if vec.shape != (2**self.n_sites,):
                raise ValueError("initial_vector has wrong length")
            if abs(np.linalg.norm(vec) - 1.0) > 1e-8:
                raise ValueError("initial_vector must be normalized")
        elif self.initial_vector is not None:
            raise ValueError("initial_vector only allowed with initial_state='specified'")
        if self.master_seed < 0:
            raise ValueError("master_seed must be non-negative")
        if self.n_disorder < 1 or self.n_traj_per_disorder < 1:
            raise ValueError("ensemble counts must be at least 1")
        if self.time_grid not in TIME_GRIDS:
            raise ValueError(f"time_grid must be one of {TIME_GRIDS}")
        if self.sample_stride < 1:
            raise ValueError("sample_stride must be at least 1")
        if self.n_geometric < 2:
            raise ValueError("n_geometric must be at least 2")

    @property
    def n_steps(self) -> int:
        return round(self.t_max / self.dt)


@dataclass(frozen=True)
class SeriesStats:
    mean: np.ndarray
    sem: np.ndarray


@dataclass
class TimeSeriesRecord:
    """Pooled ensemble means with standard errors, plus the config echo."""

    times: np.ndarray
    series: dict[str, SeriesStats]
    n_samples: int
    config: TrajectoryConfig
    t0_steps: int | None = None


@dataclass(frozen=True)
class SteadyValue:
    value: float
    sem: float
    saturation_warning: bool


@dataclass
class SteadyStateEstimate:
    window: tuple[float, float]
    values: dict[str, SteadyValue]


@dataclass
class TrajectoryResult:
    times: np.ndarray
    series: dict[str, np.ndarray]
    record: MeasurementRecord


def derive_seed(master_seed: int, *key: int) -> int:
    """Counter-addressed 64-bit child seed, independent of call order."""
    seq = np.random.SeedSequence(master_seed, spawn_key=tuple(int(k) for k in key))
    return int(seq.generate_state(1, np.uint64)[0])


def disorder_seed(master_seed: int, disorder_index: int) -> int:
    return derive_seed(master_seed, _STREAM_DISORDER, disorder_index)


def trajectory_seed(master_seed: int, disorder_index: int, traj_index: int) -> int:
    return derive_seed(master_seed, _STREAM_TRAJECTORY, disorder_index, traj_index)


def cell_seed(master_seed: int, n_sites: int, measure_prob: float) -> int:
    """Seed for one (N, p) sweep cell, derived from the parameter values so a
    cell reproduces byte-identically in any plan with the same master seed."""
    bits = int(np.float64(measure_prob).view(np.uint64))
    return derive_seed(
        master_seed, _STREAM_CELL, n_sites, bits & 0xFFFFFFFF, bits >> 32
    )


def random_product_state(
    n_sites: int, kind: str, rng: np.random.Generator
) -> np.ndarray:
    """haar_product: independent Bloch-uniform qubits (4 normals per site,
    ascending).  z_product: one uniform computational basis state (1 draw)."""
    if kind == "z_product":
        state = np.zeros(2**n_sites, dtype=np.complex128)
        state[int(rng.integers(0, 2**n_sites))] = 1.0
        return state
    if kind != "haar_product":
        raise ValueError(f"unknown product state kind {kind!r}")
    state = np.array([1.0 + 0.0j])
    for _ in range(n_sites):
        raw = rng.standard_normal(4)
        qubit = np.array([raw[0] + 1j * raw[1], raw[2] + 1j * raw[3]])
        qubit /= np.linalg.norm(qubit)
        # Ascending sites occupy ascending bits, so each new site is the
        # most-significant factor.
        state = np.kron(qubit, state)
    return state


def _initial_state(config: TrajectoryConfig, rng: np.random.Generator) -> np.ndarray:
    if config.initial_state == "specified":
        return np.asarray(config.initial_vector, dtype=np.complex128).copy()
    return random_product_state(config.n_sites, config.initial_state, rng)


def sample_steps(config: TrajectoryConfig) -> np.ndarray:
    """Protocol steps at which observables are recorded; always includes the
    first and last step.  The geometric grid keeps a dense head, roughly
    log-spaced bulk, and a linear tail through the steady-state window."""
    n = config.n_steps
    if config.time_grid == "linear":
        steps = np.arange(0, n + 1, config.sample_stride)
    else:
        head = np.arange(0, min(10, n) + 1)
        bulk = np.round(np.geomspace(1, n, config.n_geometric)).astype(np.int64)
        tail_start = int(np.ceil(0.75 * n))
        tail = np.arange(tail_start, n + 1, max(1, n // 80))
        steps = np.concatenate([head, bulk, tail])
    steps = np.unique(np.concatenate([steps, [0, n]]))
    return steps.astype(np.int64)


def _format_order(order: float) -> str:
    return f"{order:g}"


class _Evaluator:
    """Evaluates the configured observables on a state, in a fixed key order."""

    def __init__(self, config: TrajectoryConfig, eigensystem: EigenSystem):
        self.config = config
        self.eigensystem = eigensystem
        obs = config.observables
        n = config.n_sites
        self.half_sites = tuple(range(n // 2))
        self.partition = quarter_partition(n) if obs.tripartite else None
        self.lengths = tuple(range(1, n // 2 + 1)) if obs.entropy_vs_l else ()
        self.cyclic = config.boundary == "periodic"
        names: list[str] = []
        if obs.half_chain_entropy:
            names.append("S_half")
            if obs.renyi_orders and not obs.entropy_vs_l:
                names.extend(f"S{_format_order(o)}_half" for o in obs.renyi_orders)
        if obs.tripartite:
            names.append("I3")
        if obs.diagonal_entropy:
            names.append("S_diag")
        if obs.entropy_vs_l:
            names.extend(f"S_l{l}" for l in self.lengths)
            for o in obs.renyi_orders:
                names.extend(f"S{_format_order(o)}_l{l}" for l in self.lengths)
        self.names = names

    def row(self, state: np.ndarray) -> list[float]:
        obs = self.config.observables
        n = self.config.n_sites
        out: list[float] = []
        if obs.half_chain_entropy:
            lam = _spectrum(reduced_density_matrix(state, self.half_sites, n))
            out.append(_entropy_from_probs(lam))
            if obs.renyi_orders and not obs.entropy_vs_l:
                out.extend(_renyi_from_probs(lam, o) for o in obs.renyi_orders)
        if obs.tripartite:
            out.append(tripartite_information(state, self.partition, n))
        if obs.diagonal_entropy:
            out.append(diagonal_entropy(state, self.eigensystem))
        if obs.entropy_vs_l:
            profile = segment_entropy_profile(
                state, self.lengths, obs.renyi_orders, cyclic=self.cyclic, n_sites=n
            )
            out.extend(profile[1.0][l] for l in self.lengths)
            for o in obs.renyi_orders:
                out.extend(profile[float(o)][l] for l in self.lengths)
        return out


def run_trajectory(
    config: TrajectoryConfig,
    realization: DisorderRealization,
    eigensystem: EigenSystem,
    traj_seed: int,
) -> TrajectoryResult:
    """One monitored trajectory, fully determined by (realization, traj_seed).

    Time t=0 is sampled on the initial state; afterwards each sampled step
    records observables right after its measurement sweep.
    """
    if realization.n_sites != config.n_sites:
        raise ValueError("realization size does not match config")
    if eigensystem.chain_length != config.n_sites:
        raise ValueError("eigensystem size does not match config")
    rng = np.random.default_rng(traj_seed)
    state = _initial_state(config, rng)
    steps = sample_steps(config)
    evaluator = _Evaluator(config, eigensystem)
    data = np.empty((len(evaluator.names), len(steps)))
    record = MeasurementRecord()

    sample_pos = 0
    if steps[0] == 0:
        data[:, 0] = evaluator.row(state)
        sample_pos = 1
    next_sample = int(steps[sample_pos]) if sample_pos < len(steps) else -1

    n, p, dt = config.n_sites, config.measure_prob, config.dt
    pending = 0
    for step in range(1, config.n_steps + 1):
        pending += 1
        # Same draw layout as measurement_sweep: a Bernoulli batch, then one
        # outcome uniform per hit in ascending site order.  Drawing the batch
        # here lets hit-free, unsampled steps defer their unitary.
        draws = rng.random(n)
        hits = np.nonzero(draws < p)[0]
        is_sample = step == next_sample
        if hits.size or is_sample:
            state = evolve(state, eigensystem, pending * dt)
            pending = 0
            for site in hits:
                state, outcome, born = measure_site(state, int(site), config.basis, rng)
                record.events.append(
                    MeasurementEvent(step, int(site), config.basis, outcome, born)
                )
            if is_sample:
                data[:, sample_pos] = evaluator.row(state)
                sample_pos += 1
                next_sample = int(steps[sample_pos]) if sample_pos < len(steps) else -1
    series = {name: data[k] for k, name in enumerate(evaluator.names)}
    return TrajectoryResult(times=steps * dt, series=series, record=record)


def _disorder_batch(config: TrajectoryConfig, disorder_index: int):
    """All trajectories of one disorder realization; the eigensystem is
    computed once here and shared, read-only, by every trajectory."""
    realization = sample_disorder(
        config.n_sites,
        config.disorder_strength,
        config.coupling,
        disorder_seed(config.master_seed, disorder_index),
    )
    eig = diagonalize(build_hamiltonian(realization, config.boundary))
    stacks: dict[str, list[np.ndarray]] = {}
    times = None
    for t in range(config.n_traj_per_disorder):
        res = run_trajectory(
            config, realization, eig,
            trajectory_seed(config.master_seed, disorder_index, t),
        )
        times = res.times
        for name, arr in res.series.items():
            stacks.setdefault(name, []).append(arr)
    return times, {name: np.vstack(rows) for name, rows in stacks.items()}


def _pool_batches(
    config: TrajectoryConfig,
    batch_fn: Callable,
    workers: int | None,
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Run batch_fn(config, d) for every disorder index and stack the sample
    arrays in index order, so the result is independent of scheduling."""
    if workers is None:
        workers = min(os.cpu_count() or 1, config.n_disorder)
    indices = range(config.n_disorder)
    if workers <= 1:
        batches = [batch_fn(config, d) for d in indices]
    else:
        # Spawned workers re-import numpy with inherited thread caps; results
        # are collected by index so completion order cannot matter.
        os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
        os.environ.setdefault("OMP_NUM_THREADS", "1")
        ctx = get_context("spawn")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            futures = [pool.submit(batch_fn, config, d) for d in indices]
            batches = [f.result() for f in futures]
    times = batches[0][0]
    names = list(batches[0][1].keys())
    pooled = {
        name: np.vstack([batch[1][name] for batch in batches]) for name in names
    }
    return times, pooled


def run_ensemble(
    config: TrajectoryConfig, workers: int | None = None
) -> TimeSeriesRecord:
    """Pooled mean and standard error over n_disorder x n_traj trajectories."""
    times, pooled = _pool_batches(config, _disorder_batch, workers)
    series = {}
    for name, arr in pooled.items():
        m = arr.shape[0]
        mean = arr.mean(axis=0)
        sem = (
            arr.std(axis=0, ddof=1) / np.sqrt(m)
            if m > 1
            else np.zeros_like(mean)
        )
        series[name] = SeriesStats(mean=mean, sem=sem)
    n_samples = config.n_disorder * config.n_traj_per_disorder
    return TimeSeriesRecord(
        times=times, series=series, n_samples=n_samples, config=config
    )


def steady_state(
    record: TimeSeriesRecord, window_fraction: float = 0.25
) -> SteadyStateEstimate:
    """Time-average every observable over the final window_fraction of the
    series.  The sem is the larger of the windowed ensemble sems and the
    temporal scatter of the windowed means (windowed samples are correlated,
    so neither is reduced by the window length).  A linear drift across the
    window larger than twice the sem raises the saturation warning."""
    if not 0 < window_fraction <= 0.5:
        raise ValueError("window_fraction must be in (0, 0.5]")
    times = record.times
    span = times[-1] - times[0]
    cut = times[-1] - window_fraction * span
    window = times >= cut - 1e-12 * max(1.0, abs(float(times[-1])))
    if window.sum() < 4:
        raise ValueError(
            f"steady-state window holds {int(window.sum())} samples; need >= 4"
        )
    t_win = times[window]
    values = {}
    for name, stats in record.series.items():
        vals = stats.mean[window]
        value = float(vals.mean())
        ensemble_sem = float(stats.sem[window].mean())
        temporal_sem = float(vals.std(ddof=1))
        sem = max(ensemble_sem, temporal_sem)
        slope = float(np.polyfit(t_win, vals, 1)[0])
        drift = abs(slope) * float(t_win[-1] - t_win[0])
        values[name] = SteadyValue(
            value=value, sem=sem, saturation_warning=drift > 2.0 * sem
        )
    return SteadyStateEstimate(
        window=(float(t_win[0]), float(t_win[-1])), values=values
    )


def saturation_time(
    record: TimeSeriesRecord, observable: str = "I3"
) -> float | None:
    """Earliest sampled time from which the remaining series passes the
    steady-state drift test; None if even the final window is still moving."""
    if observable not in record.series:
        raise KeyError(f"observable {observable!r} not in record")
    times = record.times
    stats = record.series[observable]
    for start in range(len(times) - 3):
        t_win = times[start:]
        vals = stats.mean[start:]
        ensemble_sem = float(stats.sem[start:].mean())
        temporal_sem = float(vals.std(ddof=1))
        sem = max(ensemble_sem, temporal_sem)
        slope = float(np.polyfit(t_win, vals, 1)[0])
        if abs(slope) * float(t_win[-1] - t_win[0]) <= 2.0 * sem:
            return float(times[start])
    return None
