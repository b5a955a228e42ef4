"""Scaling-collapse cost function and the exponent fitters built on it.

The collapse quality of a family of curves y(control; size) under a candidate
scaling transform is scored by how far each transformed point falls from the
linear interpolation through its nearest left/right neighbours drawn from the
OTHER sizes.  Perfectly collapsing data has cost equal to the noise floor;
each fitter minimizes the cost with a coarse grid scan followed by
Nelder-Mead refinement (tolerance 1e-6 in the parameters), and quotes
per-parameter intervals where the profiled cost stays below 1.3x its minimum.

Everything here is deterministic: grid ties resolve to the lexicographically
first grid point and no RNG is consumed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

COST_BAND = 1.3  # error bars span the region with cost < COST_BAND * cost_min


@dataclass(frozen=True)
class CollapsePoint:
    """One measured sample entering a collapse fit.

    control is the scan variable (measurement rate, or elapsed time for the
    dynamical-exponent fit); time carries the extra axis of the space-time
    collapse and is None elsewhere.
    """

    control: float
    size: int
    value: float
    sem: float = 0.0
    time: float | None = None


@dataclass(frozen=True)
class CollapseResult:
    parameters: dict[str, float]
    cost_min: float
    error_bars: dict[str, tuple[float, float]]
    scaled_x: np.ndarray
    scaled_y: np.ndarray
    scaled_size: np.ndarray
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class ExponentialFit:
    """y(t) = (y0 - y_inf) exp(-rate * (t - t_first)) + y_inf, y0 pinned to
    the first sample."""

    rate: float
    asymptote: float
    rms_residual: float
    poor_fit: bool


@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    log_prefactor: float
    rms_residual: float


@dataclass(frozen=True)
class LogScalingFit:
    slope: float
    intercept: float
    rms_residual: float


@dataclass(frozen=True)
class RenyiCoefficientFit:
    """alpha(n) = alpha_inf * (1 + 1/n), with an affine comparison fit
    reported when the one-parameter form leaves visible residuals."""

    alpha_inf: float
    rms_residual: float
    offset_slope: float
    offset_intercept: float
    offset_rms_residual: float
    poor_fit: bool


def _interp_cost(
    x: np.ndarray,
    y: np.ndarray,
    sizes: np.ndarray,
    sigma: np.ndarray | None = None,
) -> float:
    """Mean squared distance of each point to the interpolant through its
    nearest neighbours from other sizes; points without a bracketing pair are
    skipped.  Returns inf when nothing can be scored."""
    if len(x) < 3:
        raise ValueError("collapse cost needs at least 3 points")
    if np.ptp(x) == 0:
        raise ValueError("transformed x values are all identical")
    total = 0.0
    count = 0
    for s in np.unique(sizes):
        own = sizes == s
        other = ~own
        if not other.any():
            continue
        # Tied x values are merged to their mean y so neither the exact-match
        # nor the bracketing lookup can depend on the ordering of the points.
        xo, inverse = np.unique(x[other], return_inverse=True)
        yo = np.zeros(len(xo))
        np.add.at(yo, inverse, y[other])
        yo /= np.bincount(inverse, minlength=len(xo))
        xi = x[own]
        yi = y[own]
        wi = None if sigma is None else sigma[own]
        pos = np.searchsorted(xo, xi, side="left")
        exact = (pos < len(xo)) & (np.take(xo, pos, mode="clip") == xi)
        interior = (pos > 0) & (pos < len(xo))
        for k in np.nonzero(exact | interior)[0]:
            j = pos[k]
            if exact[k]:
                predicted = yo[j]
            else:
                w = (xi[k] - xo[j - 1]) / (xo[j] - xo[j - 1])
                predicted = (1 - w) * yo[j - 1] + w * yo[j]
            r2 = (yi[k] - predicted) ** 2
            if wi is not None:
                if wi[k] <= 0:
                    raise ValueError("weighted cost requires positive sems")
                r2 /= wi[k] ** 2
            total += r2
            count += 1
    if count == 0:
        return math.inf
    return total / count


def collapse_cost(
    points: Sequence[CollapsePoint],
    transform: Callable,
    weighted: bool = False,
) -> float:
    """Score a transform mapping points to scaled coordinates.

    transform(points) must return (x, y, sigma) arrays; entries with
    non-finite x or y are dropped (log transforms produce them for points
    outside their domain)."""
    x, y, sigma = transform(points)
    keep = np.isfinite(x) & np.isfinite(y)
    if keep.sum() < 3:
        return math.inf
    sizes = np.array([p.size for p in points])[keep]
    if len(np.unique(sizes)) < 2:
        raise ValueError("collapse needs at least two distinct sizes")
    return _interp_cost(
        x[keep], y[keep], sizes, sigma[keep] if weighted else None
    )


def _point_arrays(points: Sequence[CollapsePoint]):
    control = np.array([p.control for p in points], dtype=float)
    size = np.array([p.size for p in points], dtype=float)
    value = np.array([p.value for p in points], dtype=float)
    sem = np.array([p.sem for p in points], dtype=float)
    time = np.array(
        [p.time if p.time is not None else np.nan for p in points], dtype=float
    )
    return control, size, value, sem, time


def static_transform(points: Sequence[CollapsePoint], p_c: float, nu: float):
    """x = (p - p_c) N^(1/nu), y = value."""
    control, size, value, sem, _ = _point_arrays(points)
    x = (control - p_c) * size ** (1.0 / nu)
    return x, value, sem


def dynamic_transform(
    points: Sequence[CollapsePoint],
    alpha: float,
    beta: float,
    gamma: float,
    delta: float,
):
    """Log-log coordinates of y = F[t p^alpha / N^gamma] / (p^beta e^(N delta)).

    x = ln t + alpha ln p - gamma ln N and y = ln(value) + beta ln p +
    delta N; points with non-positive value or time drop out as NaN."""
    control, size, value, _, time = _point_arrays(points)
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.log(time) + alpha * np.log(control) - gamma * np.log(size)
        y = np.log(value) + beta * np.log(control) + delta * size
    sigma = np.full_like(x, 1.0)
    return x, y, sigma


def elapsed_transform(points: Sequence[CollapsePoint], z: float):
    """x = ln[(t - t0) N^(-z)], y = value."""
    control, size, value, sem, _ = _point_arrays(points)
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.log(control) - z * np.log(size)
    return x, value, sem


def _scaled_points(points, transform):
    x, y, _ = transform(points)
    keep = np.isfinite(x) & np.isfinite(y)
    sizes = np.array([p.size for p in points])[keep]
    return x[keep], y[keep], sizes


def _grid_axes(bounds, n_grid):
    return [np.linspace(lo, hi, n) for (lo, hi), n in zip(bounds, n_grid)]


def _minimize(cost, start, bounds):
    """Bounded Nelder-Mead refinement around a grid start."""
    res = optimize.minimize(
        cost,
        np.asarray(start, dtype=float),
        method="Nelder-Mead",
        bounds=bounds,
        options={"xatol": 1e-6, "fatol": 1e-12, "maxiter": 4000, "maxfev": 8000},
    )
    return res.x, float(res.fun)


def _profile_interval(
    cost_of_vector: Callable,
    optimum: np.ndarray,
    index: int,
    bounds: Sequence[tuple[float, float]],
    cost_min: float,
    n_scan: int = 25,
) -> tuple[tuple[float, float], list[str]]:
    """1.3x-band interval for one parameter, profiling out the others.

    Walks outward from the optimum on each side, re-minimizing the remaining
    parameters (warm-started), and locates the threshold crossing by linear
    interpolation.  Hitting the search bound before crossing flags that side
    as unbounded."""
    threshold = COST_BAND * max(cost_min, 1e-300)
    flags: list[str] = []
    interval = [optimum[index], optimum[index]]
    free = [k for k in range(len(optimum)) if k != index]
    free_bounds = [bounds[k] for k in free]

    for side, stop in ((0, bounds[index][0]), (1, bounds[index][1])):
        grid = np.linspace(optimum[index], stop, n_scan)
        warm = optimum[free].copy() if free else np.empty(0)
        prev_val, prev_cost = optimum[index], cost_min
        crossed = False
        for fixed in grid[1:]:
            if free:
                def partial(v, fixed=fixed):
                    full = np.empty(len(optimum))
                    full[index] = fixed
                    full[free] = v
                    return cost_of_vector(full)

                warm, cost = _minimize(partial, warm, free_bounds)
            else:
                full = np.array([fixed])
                cost = cost_of_vector(full)
            if cost > threshold:
                # Linear interpolation between the last inside and first
                # outside scan values.
                frac = (
                    (threshold - prev_cost) / (cost - prev_cost)
                    if cost > prev_cost
                    else 1.0
                )
                interval[side] = prev_val + frac * (fixed - prev_val)
                crossed = True
                break
            prev_val, prev_cost = fixed, cost
        if not crossed:
            interval[side] = stop
            flags.append(f"interval_{'lower' if side == 0 else 'upper'}_unbounded")
    return (float(min(interval)), float(max(interval))), flags


def _fit_collapse(
    points: Sequence[CollapsePoint],
    names: Sequence[str],
    transform_of: Callable,
    bounds: Sequence[tuple[float, float]],
    n_grid: Sequence[int],
    weighted: bool,
    error_bars: bool = True,
) -> CollapseResult:
    def cost_of_vector(vec) -> float:
        return collapse_cost(points, lambda pts: transform_of(pts, *vec), weighted)

    axes = _grid_axes(bounds, n_grid)
    mesh = np.meshgrid(*axes, indexing="ij")
    grid_points = np.stack([m.ravel() for m in mesh], axis=1)
    grid_costs = np.array([cost_of_vector(g) for g in grid_points])
    if not np.isfinite(grid_costs).any():
        raise ValueError("collapse cost is infinite everywhere on the grid")
    # np.argmin returns the first (lexicographically smallest) grid minimum.
    best_order = np.argsort(grid_costs, kind="stable")[:3]

    best_x, best_cost = None, math.inf
    for k in best_order:
        if not np.isfinite(grid_costs[k]):
            continue
        xk, ck = _minimize(cost_of_vector, grid_points[k], bounds)
        if ck < best_cost:
            best_x, best_cost = xk, ck

    flags: list[str] = []
    for k, (lo, hi) in enumerate(bounds):
        span = hi - lo
        if min(best_x[k] - lo, hi - best_x[k]) < 1e-3 * span:
            flags.append(f"{names[k]}_at_search_bound")

    intervals: dict[str, tuple[float, float]] = {}
    if error_bars:
        for k, name in enumerate(names):
            interval, side_flags = _profile_interval(
                cost_of_vector, best_x, k, bounds, best_cost
            )
            intervals[name] = interval
            flags.extend(f"{name}_{f}" for f in side_flags)

    sx, sy, ssize = _scaled_points(points, lambda pts: transform_of(pts, *best_x))
    return CollapseResult(
        parameters={name: float(v) for name, v in zip(names, best_x)},
        cost_min=best_cost,
        error_bars=intervals,
        scaled_x=sx,
        scaled_y=sy,
        scaled_size=ssize,
        flags=tuple(flags),
    )


def fit_static_collapse(
    points: Sequence[CollapsePoint],
    p_c_range: tuple[float, float] | None = None,
    nu_range: tuple[float, float] = (0.5, 4.0),
    n_grid: tuple[int, int] = (41, 29),
    weighted: bool = False,
    error_bars: bool = True,
) -> CollapseResult:
    """Fit (p_c, nu) so steady-state values collapse against (p - p_c) N^(1/nu)."""
    controls = np.array([p.control for p in points])
    if p_c_range is None:
        p_c_range = (float(controls.min()), float(controls.max()))
    return _fit_collapse(
        points, ("p_c", "nu"), static_transform,
        (p_c_range, nu_range), n_grid, weighted, error_bars,
    )


def fit_dynamic_collapse(
    points: Sequence[CollapsePoint],
    alpha_range: tuple[float, float] = (0.3, 1.4),
    beta_range: tuple[float, float] = (0.3, 1.4),
    gamma_range: tuple[float, float] = (0.3, 1.4),
    delta_range: tuple[float, float] = (0.0, 0.5),
    n_grid: tuple[int, int, int, int] = (6, 6, 6, 6),
    weighted: bool = False,
    error_bars: bool = True,
) -> CollapseResult:
    """Fit the four space-time exponents (alpha, beta, gamma, delta) of
    y(t, p, N) = F[t p^alpha / N^gamma] / (p^beta e^(N delta))."""
    if any(p.time is None for p in points):
        raise ValueError("dynamic collapse points need a time coordinate")
    return _fit_collapse(
        points, ("alpha", "beta", "gamma", "delta"), dynamic_transform,
        (alpha_range, beta_range, gamma_range, delta_range), n_grid, weighted,
        error_bars,
    )


def fit_dynamical_exponent(
    points: Sequence[CollapsePoint],
    exclusion: float = 0.0,
    z_range: tuple[float, float] = (0.3, 3.0),
    n_grid: int = 109,
    weighted: bool = False,
    error_bars: bool = True,
) -> CollapseResult:
    """Fit z collapsing curves against (t - t0) N^(-z); points with elapsed
    time <= exclusion are dropped before fitting."""
    kept = [p for p in points if p.control > exclusion]
    if len(kept) < 3:
        raise ValueError("too few points after the exclusion window")
    return _fit_collapse(
        kept, ("z",), elapsed_transform, (z_range,), (n_grid,), weighted,
        error_bars,
    )


def fit_exponential_decay(
    times: Sequence[float],
    values: Sequence[float],
    rate_range: tuple[float, float] | None = None,
    poor_fit_fraction: float = 0.1,
) -> ExponentialFit:
    """Fit y(t) = (y0 - y_inf) e^(-rate (t - t0)) + y_inf with y0 fixed to the
    first sample.  For fixed rate the asymptote is linear, so only the rate is
    scanned (log grid) and polished (bounded Brent); covers decay and
    saturating growth alike."""
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.ndim != 1 or t.shape != y.shape or len(t) < 6:
        raise ValueError("need matching 1-D arrays with at least 6 samples")
    if np.any(np.diff(t) <= 0):
        raise ValueError("times must be strictly increasing")
    if np.ptp(y) == 0:
        raise ValueError("series is constant; no decay rate to fit")
    tau = t - t[0]
    y0 = y[0]
    span = tau[-1]

    def sse(rate: float) -> float:
        e = np.exp(-rate * tau)
        a = 1.0 - e
        denom = float(a @ a)
        if denom == 0:
            return float(np.sum((y - y0) ** 2))
        y_inf = float(a @ (y - y0 * e)) / denom
        r = (y0 - y_inf) * e + y_inf - y
        return float(r @ r)

    if rate_range is None:
        rate_range = (1e-4 / span, 50.0 / max(float(np.min(np.diff(t))), 1e-12))
    grid = np.geomspace(rate_range[0], rate_range[1], 240)
    costs = np.array([sse(r) for r in grid])
    k = int(np.argmin(costs))
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, len(grid) - 1)]
    res = optimize.minimize_scalar(
        sse, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12}
    )
    rate = float(res.x)
    e = np.exp(-rate * tau)
    a = 1.0 - e
    y_inf = float(a @ (y - y0 * e)) / float(a @ a)
    rms = math.sqrt(sse(rate) / len(t))
    poor = rms > poor_fit_fraction * float(np.ptp(y))
    return ExponentialFit(
        rate=rate, asymptote=y_inf, rms_residual=rms, poor_fit=poor
    )


def fit_power_law(x: Sequence[float], y: Sequence[float]) -> PowerLawFit:
    """Least-squares slope of ln y against ln x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or len(x) < 3:
        raise ValueError("need at least 3 samples")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("power-law fit needs positive data")
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    rms = math.sqrt(float(np.mean((ly - slope * lx - intercept) ** 2)))
    return PowerLawFit(
        exponent=float(slope), log_prefactor=float(intercept), rms_residual=rms
    )


def fit_log_scaling(lengths: Sequence[float], entropies: Sequence[float]) -> LogScalingFit:
    """Least-squares fit of S = slope * ln(l) + intercept."""
    l = np.asarray(lengths, dtype=float)
    s = np.asarray(entropies, dtype=float)
    if l.shape != s.shape:
        raise ValueError("lengths and entropies must align")
    if len(np.unique(l)) < 3:
        raise ValueError("need at least 3 distinct segment lengths")
    if np.any(l <= 0):
        raise ValueError("segment lengths must be positive")
    slope, intercept = np.polyfit(np.log(l), s, 1)
    rms = math.sqrt(float(np.mean((s - slope * np.log(l) - intercept) ** 2)))
    return LogScalingFit(
        slope=float(slope), intercept=float(intercept), rms_residual=rms
    )


def fit_renyi_coefficient(
    orders: Sequence[float],
    alphas: Sequence[float],
    poor_fit_rel: float = 0.02,
) -> RenyiCoefficientFit:
    """One-parameter fit of alpha(n) = alpha_inf (1 + 1/n); order inf enters
    with weight 1.  When the fractional rms residual exceeds poor_fit_rel an
    affine comparison fit alpha(n) = a (1 + 1/n) + b is worth reading."""
    n = np.asarray(orders, dtype=float)
    a = np.asarray(alphas, dtype=float)
    if n.shape != a.shape or len(n) < 3:
        raise ValueError("need at least 3 Renyi orders")
    if np.any(n <= 0):
        raise ValueError("Renyi orders must be positive")
    w = 1.0 + np.where(np.isinf(n), 0.0, 1.0 / n)
    alpha_inf = float(w @ a) / float(w @ w)
    rms = math.sqrt(float(np.mean((a - alpha_inf * w) ** 2)))
    slope, intercept = np.polyfit(w, a, 1)
    offset_rms = math.sqrt(float(np.mean((a - slope * w - intercept) ** 2)))
    scale = math.sqrt(float(np.mean(a**2)))
    return RenyiCoefficientFit(
        alpha_inf=alpha_inf,
        rms_residual=rms,
        offset_slope=float(slope),
        offset_intercept=float(intercept),
        offset_rms_residual=offset_rms,
        poor_fit=rms > poor_fit_rel * max(scale, 1e-300),
    )
