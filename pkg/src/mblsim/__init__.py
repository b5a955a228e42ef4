"""Quantum-trajectory simulation of measurement-induced entanglement
transitions in a disordered Heisenberg chain, with the scaling-collapse
analysis used to locate them."""

from .hilbert import Sector, SectorBasis, enumerate_sectors, sector_of
from .hamiltonian import (
    DisorderRealization,
    EigenSystem,
    build_hamiltonian,
    diagonalize,
    evolve,
    sample_disorder,
)
from .measurement import MeasurementRecord, measure_site, measurement_sweep
from .observables import (
    diagonal_entropy,
    entanglement_entropy,
    mutual_information,
    quarter_partition,
    reduced_density_matrix,
    renyi_entropy,
    segment_entropy_profile,
    tripartite_information,
    von_neumann_entropy,
)
from .trajectory import (
    ObservableSet,
    SeriesStats,
    SteadyStateEstimate,
    SteadyValue,
    TimeSeriesRecord,
    TrajectoryConfig,
    TrajectoryResult,
    random_product_state,
    run_ensemble,
    run_trajectory,
    saturation_time,
    steady_state,
)
from .ancilla import ancilla_entropy_series, entangle_ancilla, run_ancilla_trajectory
from .analysis import (
    CollapsePoint,
    CollapseResult,
    collapse_cost,
    fit_dynamic_collapse,
    fit_dynamical_exponent,
    fit_exponential_decay,
    fit_log_scaling,
    fit_power_law,
    fit_renyi_coefficient,
    fit_static_collapse,
)

__version__ = "0.1.0"

from .planfile import AnalysisRequest, ConfigError, ExperimentPlan, load_plan
from .pipeline import (
    AnalysisError,
    CellSpec,
    ResultManifest,
    emit_plot_data,
    plan_cells,
    run_analysis,
    run_plan,
)

__all__ = [
    "Sector",
    "SectorBasis",
    "enumerate_sectors",
    "sector_of",
    "DisorderRealization",
    "EigenSystem",
    "build_hamiltonian",
    "diagonalize",
    "evolve",
    "sample_disorder",
    "MeasurementRecord",
    "measure_site",
    "measurement_sweep",
    "diagonal_entropy",
    "entanglement_entropy",
    "mutual_information",
    "quarter_partition",
    "reduced_density_matrix",
    "renyi_entropy",
    "segment_entropy_profile",
    "tripartite_information",
    "von_neumann_entropy",
    "ObservableSet",
    "SeriesStats",
    "SteadyStateEstimate",
    "SteadyValue",
    "TimeSeriesRecord",
    "TrajectoryConfig",
    "TrajectoryResult",
    "random_product_state",
    "run_ensemble",
    "run_trajectory",
    "saturation_time",
    "steady_state",
    "ancilla_entropy_series",
    "entangle_ancilla",
    "run_ancilla_trajectory",
    "CollapsePoint",
    "CollapseResult",
    "collapse_cost",
    "fit_dynamic_collapse",
    "fit_dynamical_exponent",
    "fit_exponential_decay",
    "fit_log_scaling",
    "fit_power_law",
    "fit_renyi_coefficient",
    "fit_static_collapse",
    "AnalysisRequest",
    "ConfigError",
    "ExperimentPlan",
    "load_plan",
    "AnalysisError",
    "CellSpec",
    "ResultManifest",
    "emit_plot_data",
    "plan_cells",
    "run_analysis",
    "run_plan",
]
