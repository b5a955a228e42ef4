"""Experiment plan files: flat `key = value` text with dotted key names.

A plan names a sweep grid over chain sizes and measurement probabilities,
the engine settings shared by every cell, optional ancilla-probe settings,
and the analysis requests to run over the stored results.  Lines starting
with `#` and blank lines are ignored.  List values are comma-separated.

Every value is checked against a fixed schema; unknown keys are rejected so
typos fail loudly instead of silently running defaults.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

from .trajectory import ObservableSet, TrajectoryConfig, cell_seed

_REQUIRED = object()


class ConfigError(ValueError):
    """Invalid plan file: bad syntax, unknown key, or out-of-range value."""


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered == "true":
        return True
    if lowered == "false":
        return False
    raise ValueError(f"expected true or false, got {text!r}")


def _parse_int(text: str) -> int:
    return int(text, 10)


def _parse_auto_int(text: str) -> int | None:
    if text.lower() == "auto":
        return None
    return int(text, 10)


def _parse_list(item_parser):
    def parse(text: str):
        items = [piece.strip() for piece in text.split(",")]
        if any(not piece for piece in items):
            raise ValueError("empty list item")
        return tuple(item_parser(piece) for piece in items)

    return parse


# key -> (parser, default); _REQUIRED defaults must be present in the file.
_PLAN_SCHEMA: dict[str, tuple[Any, Any]] = {
    "run.n_sites": (_parse_list(_parse_int), _REQUIRED),
    "run.measure_prob": (_parse_list(float), _REQUIRED),
    "run.basis": (str, "Z"),
    "run.disorder_strength": (float, 10.0),
    "run.coupling": (float, 1.0),
    "run.dt": (float, 1.0),
    "run.t_max": (float, 400.0),
    "run.boundary": (str, "periodic"),
    "run.initial_state": (str, "haar_product"),
    "run.master_seed": (_parse_int, 0),
    "run.n_disorder": (_parse_int, 30),
    "run.n_traj_per_disorder": (_parse_int, 10),
    "run.time_grid": (str, "linear"),
    "run.sample_stride": (_parse_int, 1),
    "run.n_geometric": (_parse_int, 48),
    "observables.half_chain_entropy": (_parse_bool, True),
    "observables.tripartite": (_parse_bool, True),
    "observables.diagonal_entropy": (_parse_bool, True),
    "observables.entropy_vs_l": (_parse_bool, False),
    "observables.renyi_orders": (_parse_list(float), ()),
    "ancilla.enabled": (_parse_bool, False),
    "ancilla.t0_steps": (_parse_auto_int, None),
    "ancilla.reference_site": (_parse_auto_int, None),
    "output.dir": (str, "results"),
    "analysis.window_fraction": (float, 0.25),
    "analysis.requests": (_parse_list(str), ()),
}

# analysis request name -> parameter key -> (parser, default)
_REQUEST_SCHEMAS: dict[str, dict[str, tuple[Any, Any]]] = {
    "static_collapse": {
        "observable": (str, "I3"),
        "p_c_min": (float, None),
        "p_c_max": (float, None),
        "nu_min": (float, 0.5),
        "nu_max": (float, 4.0),
        "weighted": (_parse_bool, False),
    },
    "dynamic_collapse": {
        "observable": (str, "I3"),
        "alpha_min": (float, 0.3),
        "alpha_max": (float, 1.4),
        "beta_min": (float, 0.3),
        "beta_max": (float, 1.4),
        "gamma_min": (float, 0.3),
        "gamma_max": (float, 1.4),
        "delta_min": (float, 0.0),
        "delta_max": (float, 0.5),
    },
    "exponential_decay": {
        "observable": (str, "S_diag"),
    },
    "power_law_peaks": {
        "observable": (str, "I3"),
        "n_sites": (_parse_int, None),
    },
    "log_scaling": {
        "measure_prob": (float, None),
        "n_sites": (_parse_int, None),
        "l_min": (_parse_int, 2),
    },
    "z_collapse": {
        "measure_prob": (float, None),
        "exclusion": (float, 0.0),
        "z_min": (float, 0.3),
        "z_max": (float, 3.0),
    },
}


@dataclass(frozen=True)
class AnalysisRequest:
    name: str
    params: tuple[tuple[str, Any], ...]

    def get(self, key: str) -> Any:
        for k, v in self.params:
            if k == key:
                return v
        raise KeyError(key)


@dataclass(frozen=True)
class ExperimentPlan:
    """A validated sweep: engine settings plus (N, p) grid axes.

    Each grid cell gets its own master seed derived from the plan seed and
    the cell's (N, p), so a cell's output is reproducible from the plan seed
    alone, in this plan or any other.
    """

    n_sites_values: tuple[int, ...]
    measure_prob_values: tuple[float, ...]
    basis: str
    disorder_strength: float
    coupling: float
    dt: float
    t_max: float
    boundary: str
    initial_state: str
    master_seed: int
    n_disorder: int
    n_traj_per_disorder: int
    time_grid: str
    sample_stride: int
    n_geometric: int
    observables: ObservableSet
    ancilla_enabled: bool
    ancilla_t0_steps: int | None
    ancilla_reference_site: int | None
    output_dir: str
    window_fraction: float
    analysis_requests: tuple[AnalysisRequest, ...]
    resolved: tuple[tuple[str, Any], ...]

    def cell_config(self, n_sites: int, measure_prob: float) -> TrajectoryConfig:
        return TrajectoryConfig(
            n_sites=n_sites,
            measure_prob=measure_prob,
            basis=self.basis,
            disorder_strength=self.disorder_strength,
            coupling=self.coupling,
            dt=self.dt,
            t_max=self.t_max,
            boundary=self.boundary,
            observables=self.observables,
            initial_state=self.initial_state,
            master_seed=cell_seed(self.master_seed, n_sites, measure_prob),
            n_disorder=self.n_disorder,
            n_traj_per_disorder=self.n_traj_per_disorder,
            time_grid=self.time_grid,
            sample_stride=self.sample_stride,
            n_geometric=self.n_geometric,
        )

    def request(self, name: str) -> AnalysisRequest:
        for req in self.analysis_requests:
            if req.name == name:
                return req
        raise KeyError(f"plan has no analysis request {name!r}")


def parse_plan_text(text: str, source: str = "<string>") -> ExperimentPlan:
    entries: dict[str, str] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected `key = value`, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key or not value:
            raise ConfigError(f"{source}:{lineno}: empty key or value")
        if key in entries:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        entries[key] = value

    resolved: dict[str, Any] = {}
    for key, (parser, default) in _PLAN_SCHEMA.items():
        if key in entries:
            try:
                resolved[key] = parser(entries.pop(key))
            except ValueError as err:
                raise ConfigError(f"{source}: key {key!r}: {err}") from err
        elif default is _REQUIRED:
            raise ConfigError(f"{source}: missing required key {key!r}")
        else:
            resolved[key] = default

    requests = _resolve_requests(resolved["analysis.requests"], entries, source)
    if entries:
        unknown = ", ".join(sorted(entries))
        raise ConfigError(f"{source}: unknown keys: {unknown}")

    try:
        observables = ObservableSet(
            half_chain_entropy=resolved["observables.half_chain_entropy"],
            tripartite=resolved["observables.tripartite"],
            diagonal_entropy=resolved["observables.diagonal_entropy"],
            entropy_vs_l=resolved["observables.entropy_vs_l"],
            renyi_orders=resolved["observables.renyi_orders"],
        )
    except ValueError as err:
        raise ConfigError(f"{source}: observables: {err}") from err

    plan = ExperimentPlan(
        n_sites_values=resolved["run.n_sites"],
        measure_prob_values=resolved["run.measure_prob"],
        basis=resolved["run.basis"],
        disorder_strength=resolved["run.disorder_strength"],
        coupling=resolved["run.coupling"],
        dt=resolved["run.dt"],
        t_max=resolved["run.t_max"],
        boundary=resolved["run.boundary"],
        initial_state=resolved["run.initial_state"],
        master_seed=resolved["run.master_seed"],
        n_disorder=resolved["run.n_disorder"],
        n_traj_per_disorder=resolved["run.n_traj_per_disorder"],
        time_grid=resolved["run.time_grid"],
        sample_stride=resolved["run.sample_stride"],
        n_geometric=resolved["run.n_geometric"],
        observables=observables,
        ancilla_enabled=resolved["ancilla.enabled"],
        ancilla_t0_steps=resolved["ancilla.t0_steps"],
        ancilla_reference_site=resolved["ancilla.reference_site"],
        output_dir=resolved["output.dir"],
        window_fraction=resolved["analysis.window_fraction"],
        analysis_requests=requests,
        resolved=tuple(sorted(resolved.items())),
    )
    _validate_plan(plan, source)
    return plan


def _resolve_requests(
    names: tuple[str, ...], entries: dict[str, str], source: str
) -> tuple[AnalysisRequest, ...]:
    seen = set()
    requests = []
    for name in names:
        if name not in _REQUEST_SCHEMAS:
            known = ", ".join(sorted(_REQUEST_SCHEMAS))
            raise ConfigError(
                f"{source}: unknown analysis request {name!r} (known: {known})"
            )
        if name in seen:
            raise ConfigError(f"{source}: duplicate analysis request {name!r}")
        seen.add(name)
        params: dict[str, Any] = {}
        for key, (parser, default) in _REQUEST_SCHEMAS[name].items():
            full = f"analysis.{name}.{key}"
            if full in entries:
                try:
                    params[key] = parser(entries.pop(full))
                except ValueError as err:
                    raise ConfigError(f"{source}: key {full!r}: {err}") from err
            else:
                params[key] = default
        requests.append(AnalysisRequest(name=name, params=tuple(sorted(params.items()))))
    # Parameters for requests that were never listed are typos.
    for key in list(entries):
        if key.startswith("analysis."):
            raise ConfigError(
                f"{source}: key {key!r} configures an analysis request that is "
                "not listed in analysis.requests"
            )
    return tuple(requests)


def _validate_plan(plan: ExperimentPlan, source: str) -> None:
    if not plan.n_sites_values or not plan.measure_prob_values:
        raise ConfigError(f"{source}: sweep axes must be nonempty")
    if not 0 < plan.window_fraction <= 0.5:
        raise ConfigError(f"{source}: analysis.window_fraction must be in (0, 0.5]")
    if len(set(plan.n_sites_values)) != len(plan.n_sites_values):
        raise ConfigError(f"{source}: run.n_sites has duplicates")
    if len(set(plan.measure_prob_values)) != len(plan.measure_prob_values):
        raise ConfigError(f"{source}: run.measure_prob has duplicates")
    for n in plan.n_sites_values:
        for p in plan.measure_prob_values:
            try:
                plan.cell_config(n, p)
            except ValueError as err:
                raise ConfigError(f"{source}: cell (N={n}, p={p}): {err}") from err
    if plan.ancilla_enabled:
        steps = round(plan.t_max / plan.dt)
        if plan.ancilla_t0_steps is not None and not 0 <= plan.ancilla_t0_steps < steps:
            raise ConfigError(
                f"{source}: ancilla.t0_steps must be in [0, {steps}) or auto"
            )
        if plan.ancilla_reference_site is not None:
            for n in plan.n_sites_values:
                if not 0 <= plan.ancilla_reference_site < n:
                    raise ConfigError(
                        f"{source}: ancilla.reference_site outside chain of {n} sites"
                    )
    for req in plan.analysis_requests:
        _validate_request(plan, req, source)


def _validate_request(plan: ExperimentPlan, req: AnalysisRequest, source: str) -> None:
    obs = plan.observables
    def need(flag: bool, what: str):
        if not flag:
            raise ConfigError(
                f"{source}: analysis request {req.name!r} needs {what}"
            )

    if req.name in ("static_collapse", "dynamic_collapse", "power_law_peaks"):
        if req.get("observable") == "I3":
            need(obs.tripartite, "observables.tripartite = true")
    if req.name in ("static_collapse", "dynamic_collapse", "z_collapse"):
        need(len(plan.n_sites_values) >= 2, "at least two chain sizes")
    if req.name == "exponential_decay" and req.get("observable") == "S_diag":
        need(obs.diagonal_entropy, "observables.diagonal_entropy = true")
    if req.name == "log_scaling":
        need(obs.entropy_vs_l, "observables.entropy_vs_l = true")
        need(
            len(obs.renyi_orders) >= 2,
            "at least two Renyi orders besides the von Neumann entropy",
        )
        _resolve_cell_params(plan, req, source)
    if req.name == "z_collapse":
        need(plan.ancilla_enabled, "ancilla.enabled = true")
        p = req.get("measure_prob")
        if p is None and len(plan.measure_prob_values) > 1:
            raise ConfigError(
                f"{source}: z_collapse needs analysis.z_collapse.measure_prob "
                "when the plan sweeps several probabilities"
            )
        if p is not None and p not in plan.measure_prob_values:
            raise ConfigError(f"{source}: z_collapse.measure_prob {p} not in sweep")
    if req.name == "power_law_peaks":
        n = req.get("n_sites")
        if n is not None and n not in plan.n_sites_values:
            raise ConfigError(f"{source}: power_law_peaks.n_sites {n} not in sweep")


def _resolve_cell_params(plan: ExperimentPlan, req: AnalysisRequest, source: str):
    p = req.get("measure_prob")
    if p is None:
        if len(plan.measure_prob_values) > 1:
            raise ConfigError(
                f"{source}: {req.name} needs analysis.{req.name}.measure_prob "
                "when the plan sweeps several probabilities"
            )
        p = plan.measure_prob_values[0]
    elif p not in plan.measure_prob_values:
        raise ConfigError(f"{source}: {req.name}.measure_prob {p} not in sweep")
    n = req.get("n_sites")
    if n is None:
        n = max(plan.n_sites_values)
    elif n not in plan.n_sites_values:
        raise ConfigError(f"{source}: {req.name}.n_sites {n} not in sweep")
    return n, p


def load_plan(path: str | Path) -> ExperimentPlan:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read plan file {path}: {err}") from err
    return parse_plan_text(text, source=str(path))


def plan_summary(plan: ExperimentPlan) -> str:
    """Human-readable one-screen digest used by the validate subcommand."""
    cells = len(plan.n_sites_values) * len(plan.measure_prob_values)
    if plan.ancilla_enabled:
        cells *= 2
    lines = [
        f"sizes          {', '.join(str(n) for n in plan.n_sites_values)}",
        f"measure_prob   {', '.join(f'{p:g}' for p in plan.measure_prob_values)}",
        f"basis          {plan.basis}",
        f"disorder       W = {plan.disorder_strength:g} J, "
        f"{plan.n_disorder} realizations x {plan.n_traj_per_disorder} trajectories",
        f"time           dt = {plan.dt:g}, t_max = {plan.t_max:g}, "
        f"{plan.time_grid} sampling",
        f"cells          {cells} ({'with' if plan.ancilla_enabled else 'no'} ancilla probe)",
        f"master seed    {plan.master_seed}",
        f"output dir     {plan.output_dir}",
    ]
    if plan.analysis_requests:
        names = ", ".join(req.name for req in plan.analysis_requests)
        lines.append(f"analysis       {names}")
    return "\n".join(lines)
