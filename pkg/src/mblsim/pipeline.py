"""Plan execution, result manifests, fit reports, and plot-data emission.

A plan expands into one cell per (N, p) grid point (plus an ancilla cell per
point when the ancilla probe is enabled).  Each cell writes one CSV time
series; the manifest is a JSON-lines file recording, per cell, the status,
the content hash of the data file, and a hash of the cell's full
configuration.  Resuming skips cells whose config hash and file hash both
still match, so a killed run continues where it stopped and a finished run
is a no-op.

Data files are byte-reproducible from the plan alone; manifest records also
carry per-cell wall-clock times, which is the one field that varies between
reruns.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from .analysis import (
    CollapsePoint,
    CollapseResult,
    dynamic_transform,
    fit_dynamic_collapse,
    fit_dynamical_exponent,
    fit_exponential_decay,
    fit_log_scaling,
    fit_power_law,
    fit_renyi_coefficient,
    fit_static_collapse,
)
from .ancilla import ancilla_entropy_series
from .planfile import AnalysisRequest, ExperimentPlan, _resolve_cell_params
from .storage import (
    atomic_write_text,
    canonical_json,
    read_jsonl,
    read_timeseries_csv,
    sha256_file,
    sha256_text,
    table_csv_text,
    write_jsonl,
    write_timeseries_csv,
)
from .trajectory import (
    TimeSeriesRecord,
    run_ensemble,
    saturation_time,
    steady_state,
)

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.jsonl"

FIGURES = (
    "fig2", "fig3a", "fig3b", "fig4", "fig5", "fig6a", "fig6b", "fig6c", "fig7",
)

# Observable used to auto-detect the ancilla insertion step, in preference
# order; the first one present in the plain cell's series wins.  The
# tripartite information is the primary saturation marker.
_T0_MARKERS = ("I3", "S_half", "S_diag")


class AnalysisError(RuntimeError):
    """An analysis or emission request cannot run on the stored results."""

    def __init__(self, message: str, missing: Sequence[str] = ()):
        super().__init__(message)
        self.missing = tuple(missing)


@dataclass(frozen=True)
class CellSpec:
    protocol: str  # "ensemble" or "ancilla"
    n_sites: int
    measure_prob: float

    @property
    def name(self) -> str:
        # repr is the shortest digit string that parses back to the same
        # double, so names stay short and still identify p exactly.
        prefix = "cell" if self.protocol == "ensemble" else "ancilla"
        return f"{prefix}_N{self.n_sites}_p{self.measure_prob!r}"

    @property
    def filename(self) -> str:
        return self.name + ".csv"


@dataclass
class ResultManifest:
    path: Path
    header: dict[str, Any]
    cells: dict[str, dict[str, Any]]

    @classmethod
    def load(cls, path: str | Path) -> "ResultManifest":
        path = Path(path)
        records = read_jsonl(path)
        if not records or records[0].get("kind") != "plan":
            raise ValueError(f"{path}: first record must have kind 'plan'")
        cells = {}
        for rec in records[1:]:
            if rec.get("kind") != "cell":
                raise ValueError(f"{path}: unexpected record kind {rec.get('kind')!r}")
            cells[rec["name"]] = rec
        return cls(path=path, header=records[0], cells=cells)

    @property
    def output_dir(self) -> Path:
        return self.path.parent

    def complete(self, name: str) -> bool:
        rec = self.cells.get(name)
        return rec is not None and rec.get("status") == "complete"

    def failed_cells(self) -> list[str]:
        return [n for n, rec in self.cells.items() if rec.get("status") == "failed"]


def plan_cells(plan: ExperimentPlan) -> list[CellSpec]:
    """All cells of a plan in execution order: largest chains first (they
    dominate the runtime), then by measurement probability, with each ancilla
    cell after the plain cell it shares (N, p) with."""
    specs = []
    for n in plan.n_sites_values:
        for p in plan.measure_prob_values:
            specs.append(CellSpec("ensemble", n, p))
            if plan.ancilla_enabled:
                specs.append(CellSpec("ancilla", n, p))
    specs.sort(key=lambda s: (-s.n_sites, s.measure_prob, s.protocol != "ensemble"))
    return specs


def cell_config_payload(plan: ExperimentPlan, spec: CellSpec) -> dict[str, Any]:
    """Everything that determines the cell's bytes; hashed for resume checks.

    The ancilla t0/reference settings enter as configured (possibly 'auto'):
    auto resolution is itself a deterministic function of these inputs."""
    payload = dataclasses.asdict(plan.cell_config(spec.n_sites, spec.measure_prob))
    payload["protocol"] = spec.protocol
    if spec.protocol == "ancilla":
        payload["t0_steps"] = (
            "auto" if plan.ancilla_t0_steps is None else plan.ancilla_t0_steps
        )
        payload["reference_site"] = (
            "auto"
            if plan.ancilla_reference_site is None
            else plan.ancilla_reference_site
        )
    return payload


def cell_config_hash(plan: ExperimentPlan, spec: CellSpec) -> str:
    return sha256_text(canonical_json(cell_config_payload(plan, spec)))


def plan_header(plan: ExperimentPlan) -> dict[str, Any]:
    config = dict(plan.resolved)
    content_keys = {
        k: v
        for k, v in config.items()
        if k.startswith(("run.", "observables.", "ancilla."))
    }
    return {
        "kind": "plan",
        "schema": 1,
        "software_version": __version__,
        "plan_hash": sha256_text(canonical_json(content_keys)),
        "config": config,
    }


def _resume_reusable(
    spec: CellSpec, config_hash: str, old: ResultManifest | None, out_dir: Path
) -> dict[str, Any] | None:
    if old is None:
        return None
    rec = old.cells.get(spec.name)
    if rec is None or rec.get("status") != "complete":
        return None
    if rec.get("config_hash") != config_hash:
        return None
    data_path = out_dir / rec["file"]
    if not data_path.exists() or sha256_file(data_path) != rec["sha256"]:
        return None
    return rec


def _detect_t0(plain_record: TimeSeriesRecord) -> int:
    """Earliest saturated sample of the preferred marker observable, falling
    back to three quarters of the run when nothing has settled."""
    config = plain_record.config
    marker = next(
        (m for m in _T0_MARKERS if m in plain_record.series),
        sorted(plain_record.series)[0],
    )
    t_sat = saturation_time(plain_record, marker)
    n_steps = config.n_steps
    if t_sat is None:
        return (3 * n_steps) // 4
    steps = int(round(t_sat / config.dt))
    return min(max(steps, 0), n_steps - 1)


def run_plan(
    plan: ExperimentPlan,
    output_dir: str | Path | None = None,
    workers: int | None = None,
    resume: bool = False,
) -> ResultManifest:
    """Execute every cell, write one CSV per cell plus the manifest, and
    return the manifest.  Cell failures are recorded and do not stop the
    remaining cells."""
    out_dir = Path(output_dir) if output_dir is not None else Path(plan.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out_dir / MANIFEST_NAME
    previous = None
    if resume and manifest_path.exists():
        previous = ResultManifest.load(manifest_path)

    specs = plan_cells(plan)
    records: dict[str, dict[str, Any]] = {}
    loaded: dict[str, TimeSeriesRecord] = {}

    def ensure_loaded(spec: CellSpec) -> TimeSeriesRecord:
        rec = records[spec.name]
        if spec.name not in loaded:
            loaded[spec.name] = read_timeseries_csv(
                out_dir / rec["file"],
                config=plan.cell_config(spec.n_sites, spec.measure_prob),
                n_samples=rec["n_samples"],
                t0_steps=rec.get("t0_steps"),
            )
        return loaded[spec.name]

    for spec in specs:
        config_hash = cell_config_hash(plan, spec)
        reused = _resume_reusable(spec, config_hash, previous, out_dir)
        if reused is not None:
            records[spec.name] = reused
            logger.info("cell %s: reused (resume)", spec.name)
            continue
        started = time.perf_counter()
        try:
            record, extra = _execute_cell(plan, spec, workers, records, ensure_loaded)
        except Exception as err:
            logger.error("cell %s: failed: %s", spec.name, err)
            records[spec.name] = {
                "kind": "cell",
                "name": spec.name,
                "status": "failed",
                "protocol": spec.protocol,
                "n_sites": spec.n_sites,
                "measure_prob": spec.measure_prob,
                "config_hash": config_hash,
                "error": f"{type(err).__name__}: {err}"[:500],
                "software_version": __version__,
            }
            continue
        data_path = out_dir / spec.filename
        write_timeseries_csv(data_path, record)
        loaded[spec.name] = record
        wall = time.perf_counter() - started
        records[spec.name] = {
            "kind": "cell",
            "name": spec.name,
            "status": "complete",
            "protocol": spec.protocol,
            "n_sites": spec.n_sites,
            "measure_prob": spec.measure_prob,
            "file": spec.filename,
            "sha256": sha256_file(data_path),
            "config_hash": config_hash,
            "n_samples": record.n_samples,
            "wall_clock_s": wall,
            "software_version": __version__,
            **extra,
        }
        logger.info("cell %s: complete in %.1f s", spec.name, wall)

    manifest_records = [plan_header(plan)] + [records[s.name] for s in specs]
    write_jsonl(manifest_path, manifest_records)
    return ResultManifest.load(manifest_path)


def _execute_cell(
    plan: ExperimentPlan,
    spec: CellSpec,
    workers: int | None,
    records: dict[str, dict[str, Any]],
    ensure_loaded: Callable[[CellSpec], TimeSeriesRecord],
) -> tuple[TimeSeriesRecord, dict[str, Any]]:
    config = plan.cell_config(spec.n_sites, spec.measure_prob)
    if spec.protocol == "ensemble":
        return run_ensemble(config, workers=workers), {}

    if plan.ancilla_t0_steps is not None:
        t0_steps = plan.ancilla_t0_steps
    else:
        plain = CellSpec("ensemble", spec.n_sites, spec.measure_prob)
        plain_rec = records.get(plain.name)
        if plain_rec is None or plain_rec.get("status") != "complete":
            raise RuntimeError(
                f"auto t0 needs the completed cell {plain.name}; "
                "set ancilla.t0_steps explicitly to skip the dependency"
            )
        t0_steps = _detect_t0(ensure_loaded(plain))
    reference_site = (
        plan.ancilla_reference_site
        if plan.ancilla_reference_site is not None
        else spec.n_sites // 2
    )
    record = ancilla_entropy_series(
        config, t0_steps, reference_site=reference_site, workers=workers
    )
    return record, {"t0_steps": t0_steps, "reference_site": reference_site}


def load_cell(
    plan: ExperimentPlan, manifest: ResultManifest, spec: CellSpec
) -> TimeSeriesRecord:
    rec = manifest.cells.get(spec.name)
    if rec is None or rec.get("status") != "complete":
        raise AnalysisError(
            f"cell {spec.name} is not complete", missing=[spec.name]
        )
    return read_timeseries_csv(
        manifest.output_dir / rec["file"],
        config=plan.cell_config(spec.n_sites, spec.measure_prob),
        n_samples=rec["n_samples"],
        t0_steps=rec.get("t0_steps"),
    )


def _require_cells(
    plan: ExperimentPlan, manifest: ResultManifest, specs: Sequence[CellSpec]
) -> dict[str, TimeSeriesRecord]:
    missing = [s.name for s in specs if not manifest.complete(s.name)]
    if missing:
        raise AnalysisError(
            "missing or failed cells: " + ", ".join(sorted(missing)),
            missing=sorted(missing),
        )
    return {s.name: load_cell(plan, manifest, s) for s in specs}


def _ensemble_specs(plan: ExperimentPlan) -> list[CellSpec]:
    return [s for s in plan_cells(plan) if s.protocol == "ensemble"]


def _ancilla_specs(plan: ExperimentPlan, measure_prob: float) -> list[CellSpec]:
    return [
        CellSpec("ancilla", n, measure_prob)
        for n in sorted(plan.n_sites_values)
    ]


def _steady_points(
    plan: ExperimentPlan,
    manifest: ResultManifest,
    observable: str,
    negate: bool = False,
) -> list[CollapsePoint]:
    specs = _ensemble_specs(plan)
    cells = _require_cells(plan, manifest, specs)
    points = []
    for spec in specs:
        est = steady_state(cells[spec.name], plan.window_fraction)
        if observable not in est.values:
            raise AnalysisError(
                f"cell {spec.name} has no observable {observable!r}"
            )
        sv = est.values[observable]
        value = -sv.value if negate else sv.value
        points.append(
            CollapsePoint(
                control=spec.measure_prob,
                size=spec.n_sites,
                value=value,
                sem=sv.sem,
            )
        )
    return points


def _collapse_records(
    request_name: str, fit: CollapseResult, extra: dict[str, Any]
) -> list[dict[str, Any]]:
    head: dict[str, Any] = {
        "kind": "fit",
        "request": request_name,
        "parameters": fit.parameters,
        "error_bars": {k: list(v) for k, v in fit.error_bars.items()},
        "cost_min": fit.cost_min,
        "flags": list(fit.flags),
        "n_points": int(len(fit.scaled_x)),
    }
    head.update(extra)
    records = [head]
    for x, y, size in zip(fit.scaled_x, fit.scaled_y, fit.scaled_size):
        records.append(
            {"kind": "scaled_point", "x": float(x), "y": float(y), "size": int(size)}
        )
    return records


def _run_static_collapse(plan, manifest, req: AnalysisRequest):
    observable = req.get("observable")
    points = _steady_points(plan, manifest, observable)
    p_c_min = req.get("p_c_min")
    p_c_max = req.get("p_c_max")
    p_c_range = None
    if p_c_min is not None or p_c_max is not None:
        controls = [pt.control for pt in points]
        p_c_range = (
            p_c_min if p_c_min is not None else min(controls),
            p_c_max if p_c_max is not None else max(controls),
        )
    fit = fit_static_collapse(
        points,
        p_c_range=p_c_range,
        nu_range=(req.get("nu_min"), req.get("nu_max")),
        weighted=req.get("weighted"),
    )
    return _collapse_records("static_collapse", fit, {"observable": observable})


def _dynamic_points(plan, manifest, observable: str) -> list[CollapsePoint]:
    specs = _ensemble_specs(plan)
    cells = _require_cells(plan, manifest, specs)
    points = []
    for spec in specs:
        record = cells[spec.name]
        if observable not in record.series:
            raise AnalysisError(f"cell {spec.name} has no observable {observable!r}")
        stats = record.series[observable]
        for t, mean, sem in zip(record.times, stats.mean, stats.sem):
            points.append(
                CollapsePoint(
                    control=spec.measure_prob,
                    size=spec.n_sites,
                    value=-float(mean),
                    sem=float(sem),
                    time=float(t),
                )
            )
    return points


def _run_dynamic_collapse(plan, manifest, req: AnalysisRequest):
    observable = req.get("observable")
    points = _dynamic_points(plan, manifest, observable)
    fit = fit_dynamic_collapse(
        points,
        alpha_range=(req.get("alpha_min"), req.get("alpha_max")),
        beta_range=(req.get("beta_min"), req.get("beta_max")),
        gamma_range=(req.get("gamma_min"), req.get("gamma_max")),
        delta_range=(req.get("delta_min"), req.get("delta_max")),
    )
    return _collapse_records("dynamic_collapse", fit, {"observable": observable})


def _decay_fits(plan, manifest, observable: str):
    """Per-cell exponential fits; cells where the fit is impossible yield a
    NaN rate so the report still enumerates every cell."""
    specs = _ensemble_specs(plan)
    cells = _require_cells(plan, manifest, specs)
    rows = []
    for spec in specs:
        record = cells[spec.name]
        if observable not in record.series:
            raise AnalysisError(f"cell {spec.name} has no observable {observable!r}")
        stats = record.series[observable]
        try:
            fit = fit_exponential_decay(record.times, stats.mean)
            rows.append((spec, fit))
        except ValueError as err:
            logger.warning("cell %s: decay fit failed: %s", spec.name, err)
            rows.append((spec, None))
    return rows


def _run_exponential_decay(plan, manifest, req: AnalysisRequest):
    observable = req.get("observable")
    records = [
        {"kind": "fit", "request": "exponential_decay", "observable": observable}
    ]
    for spec, fit in _decay_fits(plan, manifest, observable):
        rec = {
            "kind": "fit_cell",
            "n_sites": spec.n_sites,
            "measure_prob": spec.measure_prob,
        }
        if fit is None:
            rec.update(
                {"rate": math.nan, "asymptote": math.nan,
                 "rms_residual": math.nan, "poor_fit": True}
            )
        else:
            rec.update(
                {"rate": fit.rate, "asymptote": fit.asymptote,
                 "rms_residual": fit.rms_residual, "poor_fit": fit.poor_fit}
            )
        records.append(rec)
    return records


PEAK_WINDOW_FRACTION = 0.5


def _refine_peak_time(times, values, sems) -> float:
    """Sub-grid peak location.  The mean curve around an intermediate-time
    peak is broad and flat-topped, so the bare argmax lands wherever sampling
    noise puts the highest wiggle and is biased late.  Instead fit a weighted
    quadratic in ln t over the contiguous half-maximum window and take its
    vertex; fall back to the argmax when the window is too small or the fit
    is not concave."""
    k = int(np.argmax(values))
    threshold = PEAK_WINDOW_FRACTION * values[k]
    lo = k
    while lo > 0 and values[lo - 1] >= threshold:
        lo -= 1
    hi = k
    while hi + 1 < len(values) and values[hi + 1] >= threshold:
        hi += 1
    if hi - lo + 1 < 3:
        return float(times[k])
    x = np.log(times[lo : hi + 1])
    y = values[lo : hi + 1]
    s = sems[lo : hi + 1]
    w = np.where(s > 0, 1.0 / np.maximum(s, 1e-300), 1.0)
    coef = np.polyfit(x, y, 2, w=w)
    if coef[0] >= 0:
        return float(times[k])
    vertex = float(np.clip(-coef[1] / (2 * coef[0]), x[0], x[-1]))
    return float(np.exp(vertex))


def _peak_rows(plan, manifest, observable: str, n_sites: int):
    specs = [
        CellSpec("ensemble", n_sites, p) for p in sorted(plan.measure_prob_values)
    ]
    cells = _require_cells(plan, manifest, specs)
    rows = []
    for spec in specs:
        record = cells[spec.name]
        if observable not in record.series:
            raise AnalysisError(f"cell {spec.name} has no observable {observable!r}")
        mask = record.times > 0
        values = -record.series[observable].mean[mask]
        sems = record.series[observable].sem[mask]
        times = record.times[mask]
        k = int(np.argmax(values))
        t_peak = _refine_peak_time(times, values, sems)
        rows.append((spec.measure_prob, t_peak, float(values[k])))
    return rows


def _run_power_law_peaks(plan, manifest, req: AnalysisRequest):
    observable = req.get("observable")
    n_sites = req.get("n_sites")
    if n_sites is None:
        n_sites = max(plan.n_sites_values)
    rows = _peak_rows(plan, manifest, observable, n_sites)
    usable = [(p, t, v) for p, t, v in rows if v > 0 and p > 0]
    if len(usable) < 3:
        raise AnalysisError(
            "power_law_peaks needs at least 3 probabilities with a positive peak"
        )
    probs = [p for p, _, _ in usable]
    t_fit = fit_power_law(probs, [t for _, t, _ in usable])
    v_fit = fit_power_law(probs, [v for _, _, v in usable])
    records = [
        {
            "kind": "fit",
            "request": "power_law_peaks",
            "observable": observable,
            "n_sites": n_sites,
            "t_peak_exponent": t_fit.exponent,
            "t_peak_log_prefactor": t_fit.log_prefactor,
            "t_peak_rms_residual": t_fit.rms_residual,
            "peak_exponent": v_fit.exponent,
            "peak_log_prefactor": v_fit.log_prefactor,
            "peak_rms_residual": v_fit.rms_residual,
        }
    ]
    for p, t_peak, peak in rows:
        records.append(
            {"kind": "peak", "measure_prob": p, "t_peak": t_peak, "neg_peak": peak}
        )
    return records


def _profile_orders(plan) -> list[float]:
    return [1.0] + [float(o) for o in plan.observables.renyi_orders]


def _order_series_name(order: float, length: int) -> str:
    if order == 1.0:
        return f"S_l{length}"
    return f"S{order:g}_l{length}"


def _steady_profile(plan, record: TimeSeriesRecord, order: float, l_min: int):
    """Steady-state segment entropies S_order(l) for l in [l_min, N/2]."""
    est = steady_state(record, plan.window_fraction)
    lengths, values, sems = [], [], []
    for length in range(l_min, record.config.n_sites // 2 + 1):
        name = _order_series_name(order, length)
        if name not in est.values:
            raise AnalysisError(f"series {name!r} missing; record segment entropies")
        lengths.append(length)
        values.append(est.values[name].value)
        sems.append(est.values[name].sem)
    return lengths, values, sems


def _run_log_scaling(plan, manifest, req: AnalysisRequest):
    n_sites, measure_prob = _resolve_cell_params(plan, req, "analysis")
    l_min = req.get("l_min")
    spec = CellSpec("ensemble", n_sites, measure_prob)
    record = _require_cells(plan, manifest, [spec])[spec.name]
    orders = _profile_orders(plan)
    alphas = []
    records = [
        {
            "kind": "fit",
            "request": "log_scaling",
            "n_sites": n_sites,
            "measure_prob": measure_prob,
            "l_min": l_min,
        }
    ]
    order_records = []
    for order in orders:
        lengths, values, _ = _steady_profile(plan, record, order, l_min)
        fit = fit_log_scaling(lengths, values)
        alphas.append(fit.slope)
        order_records.append(
            {
                "kind": "fit_order",
                "order": order,
                "alpha": fit.slope,
                "beta": fit.intercept,
                "rms_residual": fit.rms_residual,
            }
        )
    coeff = fit_renyi_coefficient(orders, alphas)
    records[0].update(
        {
            "alpha_inf": coeff.alpha_inf,
            "rms_residual": coeff.rms_residual,
            "offset_slope": coeff.offset_slope,
            "offset_intercept": coeff.offset_intercept,
            "offset_rms_residual": coeff.offset_rms_residual,
            "poor_fit": coeff.poor_fit,
        }
    )
    return records + order_records


def _ancilla_points(plan, manifest, measure_prob: float):
    specs = _ancilla_specs(plan, measure_prob)
    cells = _require_cells(plan, manifest, specs)
    points = []
    t0_by_size = {}
    for spec in specs:
        record = cells[spec.name]
        rec = manifest.cells[spec.name]
        t0 = rec["t0_steps"] * plan.dt
        t0_by_size[spec.n_sites] = (t0, rec["t0_steps"])
        stats = record.series["S_anc"]
        for t, mean, sem in zip(record.times, stats.mean, stats.sem):
            points.append(
                CollapsePoint(
                    control=float(t) - t0,
                    size=spec.n_sites,
                    value=float(mean),
                    sem=float(sem),
                )
            )
    return points, t0_by_size


def _run_z_collapse(plan, manifest, req: AnalysisRequest):
    measure_prob = req.get("measure_prob")
    if measure_prob is None:
        measure_prob = plan.measure_prob_values[0]
    elif measure_prob not in plan.measure_prob_values:
        raise AnalysisError(f"z_collapse.measure_prob {measure_prob} not in sweep")
    points, t0_by_size = _ancilla_points(plan, manifest, measure_prob)
    fit = fit_dynamical_exponent(
        points,
        exclusion=req.get("exclusion"),
        z_range=(req.get("z_min"), req.get("z_max")),
    )
    records = _collapse_records(
        "z_collapse",
        fit,
        {"measure_prob": measure_prob, "exclusion": req.get("exclusion")},
    )
    for n in sorted(t0_by_size):
        t0, t0_steps = t0_by_size[n]
        records.insert(
            1, {"kind": "t0", "n_sites": n, "t0": t0, "t0_steps": t0_steps}
        )
    return records


_REQUEST_RUNNERS = {
    "static_collapse": _run_static_collapse,
    "dynamic_collapse": _run_dynamic_collapse,
    "exponential_decay": _run_exponential_decay,
    "power_law_peaks": _run_power_law_peaks,
    "log_scaling": _run_log_scaling,
    "z_collapse": _run_z_collapse,
}


def run_analysis(
    plan: ExperimentPlan,
    manifest: ResultManifest,
    request_name: str | None = None,
) -> list[Path]:
    """Execute the plan's analysis requests (or just one) over the stored
    results and write one fit report per request."""
    requests = plan.analysis_requests
    if request_name is not None:
        requests = tuple(r for r in requests if r.name == request_name)
        if not requests:
            raise AnalysisError(f"plan has no analysis request {request_name!r}")
    if not requests:
        raise AnalysisError("plan lists no analysis requests")
    paths = []
    errors = []
    for req in requests:
        try:
            records = _REQUEST_RUNNERS[req.name](plan, manifest, req)
        except (AnalysisError, ValueError) as err:
            logger.error("analysis %s: %s", req.name, err)
            errors.append(f"{req.name}: {err}")
            continue
        path = manifest.output_dir / f"fit_{req.name}.jsonl"
        write_jsonl(path, records)
        logger.info("analysis %s: wrote %s", req.name, path)
        paths.append(path)
    if errors:
        raise AnalysisError("; ".join(errors))
    return paths


def _optional_request(plan: ExperimentPlan, name: str) -> AnalysisRequest | None:
    try:
        return plan.request(name)
    except KeyError:
        return None


def _series_rows(plan, manifest, observable: str):
    specs = _ensemble_specs(plan)
    cells = _require_cells(plan, manifest, specs)
    rows = []
    for spec in specs:
        record = cells[spec.name]
        if observable not in record.series:
            raise AnalysisError(f"cell {spec.name} has no observable {observable!r}")
        stats = record.series[observable]
        for t, mean, sem in zip(record.times, stats.mean, stats.sem):
            rows.append((float(t), float(mean), float(sem), spec.measure_prob, spec.n_sites))
    return rows


def _emit_fig2(plan, manifest):
    rows = [
        (t, -mean, sem, p, n)
        for t, mean, sem, p, n in _series_rows(plan, manifest, "I3")
    ]
    files = [
        ("fig2.csv", ("time", "neg_I3", "sem", "measure_prob", "n_sites"), rows)
    ]
    req = _optional_request(plan, "dynamic_collapse")
    points = _dynamic_points(plan, manifest, "I3")
    kwargs = {}
    if req is not None:
        kwargs = dict(
            alpha_range=(req.get("alpha_min"), req.get("alpha_max")),
            beta_range=(req.get("beta_min"), req.get("beta_max")),
            gamma_range=(req.get("gamma_min"), req.get("gamma_max")),
            delta_range=(req.get("delta_min"), req.get("delta_max")),
        )
    fit = fit_dynamic_collapse(points, error_bars=False, **kwargs)
    x, y, _ = dynamic_transform(points, *(fit.parameters[k] for k in
                                          ("alpha", "beta", "gamma", "delta")))
    inset = []
    for k, pt in enumerate(points):
        if np.isfinite(x[k]) and np.isfinite(y[k]):
            inset.append((float(x[k]), float(y[k]), pt.control, pt.size))
    files.append(
        ("fig2_inset.csv", ("x_scaled", "y_scaled", "measure_prob", "n_sites"), inset)
    )
    return files


def _emit_fig3a(plan, manifest):
    if not plan.observables.entropy_vs_l:
        raise AnalysisError("fig3a needs observables.entropy_vs_l = true")
    specs = _ensemble_specs(plan)
    cells = _require_cells(plan, manifest, specs)
    rows = []
    for spec in specs:
        lengths, values, sems = _steady_profile(plan, cells[spec.name], 1.0, 1)
        for l, v, s in zip(lengths, values, sems):
            rows.append((l, v, s, spec.measure_prob, spec.n_sites))
    return [
        (
            "fig3a.csv",
            ("segment_length", "entropy", "sem", "measure_prob", "n_sites"),
            rows,
        )
    ]


def _emit_fig3b(plan, manifest):
    rows = []
    for n in sorted(plan.n_sites_values):
        for p, t_peak, peak in _peak_rows(plan, manifest, "I3", n):
            rows.append((p, n, t_peak, peak))
    return [
        ("fig3b.csv", ("measure_prob", "n_sites", "t_peak", "neg_I3_peak"), rows)
    ]


def _emit_decay_figure(plan, manifest, stem: str, rate_label: str):
    rows = _series_rows(plan, manifest, "S_diag")
    inset = []
    for spec, fit in _decay_fits(plan, manifest, "S_diag"):
        if fit is None:
            inset.append((spec.measure_prob, spec.n_sites, math.nan, math.nan))
        else:
            inset.append((spec.measure_prob, spec.n_sites, fit.rate, fit.asymptote))
    return [
        (f"{stem}.csv", ("time", "S_diag", "sem", "measure_prob", "n_sites"), rows),
        (
            f"{stem}_inset.csv",
            ("measure_prob", "n_sites", rate_label, "asymptote"),
            inset,
        ),
    ]


def _emit_fig4(plan, manifest):
    return _emit_decay_figure(plan, manifest, "fig4", "decay_rate")


def _emit_fig6a(plan, manifest):
    return _emit_decay_figure(plan, manifest, "fig6a", "growth_rate")


def _emit_fig5(plan, manifest):
    points = _steady_points(plan, manifest, "I3", negate=True)
    rows = [(pt.control, pt.size, pt.value, pt.sem) for pt in points]
    rows.sort(key=lambda r: (r[0], r[1]))
    return [("fig5.csv", ("measure_prob", "n_sites", "neg_I3", "sem"), rows)]


def _emit_fig6b(plan, manifest):
    if not plan.observables.entropy_vs_l:
        raise AnalysisError("fig6b needs observables.entropy_vs_l = true")
    specs = _ensemble_specs(plan)
    cells = _require_cells(plan, manifest, specs)
    rows = []
    for spec in specs:
        for order in _profile_orders(plan):
            lengths, values, sems = _steady_profile(plan, cells[spec.name], order, 1)
            for l, v, s in zip(lengths, values, sems):
                rows.append((order, l, v, s, spec.measure_prob, spec.n_sites))
    return [
        (
            "fig6b.csv",
            ("renyi_order", "segment_length", "entropy", "sem",
             "measure_prob", "n_sites"),
            rows,
        )
    ]


def _emit_fig6c(plan, manifest):
    req = _optional_request(plan, "log_scaling")
    if req is None:
        if not plan.observables.entropy_vs_l:
            raise AnalysisError("fig6c needs observables.entropy_vs_l = true")
        if len(plan.observables.renyi_orders) < 2:
            raise AnalysisError("fig6c needs at least two Renyi orders")
        if len(plan.measure_prob_values) > 1:
            raise AnalysisError(
                "fig6c needs a log_scaling analysis request to pick the "
                "measurement probability"
            )
        n_sites = max(plan.n_sites_values)
        measure_prob = plan.measure_prob_values[0]
        l_min = 2
    else:
        n_sites, measure_prob = _resolve_cell_params(plan, req, "emit")
        l_min = req.get("l_min")
    spec = CellSpec("ensemble", n_sites, measure_prob)
    record = _require_cells(plan, manifest, [spec])[spec.name]
    orders = _profile_orders(plan)
    alphas = []
    for order in orders:
        lengths, values, _ = _steady_profile(plan, record, order, l_min)
        alphas.append(fit_log_scaling(lengths, values).slope)
    coeff = fit_renyi_coefficient(orders, alphas)
    rows = [
        (order, alpha, coeff.alpha_inf * (1.0 + 1.0 / order),
         measure_prob, n_sites)
        for order, alpha in zip(orders, alphas)
    ]
    return [
        (
            "fig6c.csv",
            ("renyi_order", "alpha", "alpha_fit", "measure_prob", "n_sites"),
            rows,
        )
    ]


def _emit_fig7(plan, manifest):
    if not plan.ancilla_enabled:
        raise AnalysisError("fig7 needs ancilla.enabled = true")
    files = []
    main_rows = []
    inset_rows = []
    req = _optional_request(plan, "z_collapse")
    exclusion = req.get("exclusion") if req is not None else 0.0
    for p in sorted(plan.measure_prob_values):
        points, t0_by_size = _ancilla_points(plan, manifest, p)
        specs = _ancilla_specs(plan, p)
        cells = {s.name: load_cell(plan, manifest, s) for s in specs}
        for spec in specs:
            record = cells[spec.name]
            t0, _ = t0_by_size[spec.n_sites]
            stats = record.series["S_anc"]
            for t, mean, sem in zip(record.times, stats.mean, stats.sem):
                main_rows.append(
                    (float(t), float(t) - t0, float(mean), float(sem),
                     spec.n_sites, p)
                )
        if len(plan.n_sites_values) >= 2:
            fit = fit_dynamical_exponent(points, exclusion=exclusion,
                                         error_bars=False)
            z = fit.parameters["z"]
            for pt in points:
                if pt.control > exclusion:
                    inset_rows.append(
                        (math.log(pt.control) - z * math.log(pt.size),
                         pt.value, pt.sem, pt.size, p)
                    )
    files.append(
        (
            "fig7.csv",
            ("time", "elapsed", "S_anc", "sem", "n_sites", "measure_prob"),
            main_rows,
        )
    )
    if inset_rows:
        files.append(
            (
                "fig7_inset.csv",
                ("x_scaled", "S_anc", "sem", "n_sites", "measure_prob"),
                inset_rows,
            )
        )
    return files


_FIGURE_EMITTERS = {
    "fig2": _emit_fig2,
    "fig3a": _emit_fig3a,
    "fig3b": _emit_fig3b,
    "fig4": _emit_fig4,
    "fig5": _emit_fig5,
    "fig6a": _emit_fig6a,
    "fig6b": _emit_fig6b,
    "fig6c": _emit_fig6c,
    "fig7": _emit_fig7,
}


def emit_plot_data(
    plan: ExperimentPlan, manifest: ResultManifest, figure: str
) -> list[Path]:
    """Write the plot-ready tables for one figure and return their paths."""
    if figure not in _FIGURE_EMITTERS:
        known = ", ".join(FIGURES)
        raise AnalysisError(f"unknown figure {figure!r} (known: {known})")
    files = _FIGURE_EMITTERS[figure](plan, manifest)
    paths = []
    for filename, header, rows in files:
        path = manifest.output_dir / filename
        atomic_write_text(path, table_csv_text(header, rows))
        logger.info("emit %s: wrote %s (%d rows)", figure, path, len(rows))
        paths.append(path)
    return paths
