import math

import numpy as np
import pytest

from mblsim.analysis import (
    CollapsePoint,
    collapse_cost,
    dynamic_transform,
    elapsed_transform,
    fit_dynamic_collapse,
    fit_dynamical_exponent,
    fit_exponential_decay,
    fit_log_scaling,
    fit_power_law,
    fit_renyi_coefficient,
    fit_static_collapse,
    static_transform,
)

from synthetic import (
    DYNAMIC_TRUTH,
    STATIC_TRUTH,
    Z_TRUTH,
    make_dynamic_points,
    make_static_points,
    make_z_points,
)


def _identity_transform(points):
    x = np.array([p.control for p in points])
    y = np.array([p.value for p in points])
    sem = np.array([p.sem for p in points])
    return x, y, sem


# ------------------------------------------------------------ collapse cost


def test_cost_of_identical_curves_is_zero():
    xs = np.linspace(0.0, 1.0, 11)
    points = [
        CollapsePoint(control=float(x), size=n, value=float(np.sin(x)), sem=0.01)
        for n in (8, 10)
        for x in xs
    ]
    assert collapse_cost(points, _identity_transform) == 0.0


def test_cost_of_smooth_overlapping_curves_is_tiny():
    # Offset grids force true interpolation; the residual is the O(h^2)
    # interpolation error of a smooth curve, not a fitting failure.
    points = []
    for n, offset in ((8, 0.0), (10, 0.005), (12, 0.0025)):
        xs = np.linspace(0.0, 1.0, 101) + offset
        points.extend(
            CollapsePoint(float(x), n, float(np.sin(x)), 0.01) for x in xs
        )
    assert collapse_cost(points, _identity_transform) < 1e-8


def test_cost_is_permutation_invariant():
    rng = np.random.default_rng(400)
    points = make_static_points(noise=0.02, seed=41)
    transform = lambda pts: static_transform(pts, 0.014, 1.3)
    reference = collapse_cost(points, transform)
    shuffled = list(points)
    rng.shuffle(shuffled)
    assert collapse_cost(shuffled, transform) == pytest.approx(reference, rel=1e-12)


def test_cost_separates_good_from_bad_parameters():
    points = make_static_points(noise=0.005, seed=42)
    good = collapse_cost(points, lambda p: static_transform(p, 0.014, 1.3))
    bad = collapse_cost(points, lambda p: static_transform(p, 0.020, 3.0))
    assert good < bad / 10


def test_cost_requires_two_sizes_and_spread():
    xs = np.linspace(0.0, 1.0, 5)
    one_size = [CollapsePoint(float(x), 8, float(x), 0.1) for x in xs]
    with pytest.raises(ValueError, match="two distinct sizes"):
        collapse_cost(one_size, _identity_transform)
    degenerate = [
        CollapsePoint(0.5, n, float(n), 0.1) for n in (8, 10, 12)
    ]
    with pytest.raises(ValueError, match="identical"):
        collapse_cost(degenerate, _identity_transform)


def test_cost_is_inf_when_too_few_finite_points():
    # Log coordinates wipe out non-positive values; fewer than 3 survivors
    # cannot be scored.
    points = [
        CollapsePoint(0.1, 8, -1.0, 0.1, time=1.0),
        CollapsePoint(0.1, 10, -1.0, 0.1, time=2.0),
        CollapsePoint(0.1, 10, 0.5, 0.1, time=4.0),
        CollapsePoint(0.1, 8, 0.7, 0.1, time=8.0),
    ]
    cost = collapse_cost(points, lambda p: dynamic_transform(p, 1.0, 1.0, 1.0, 0.1))
    assert cost == math.inf


def test_weighted_cost_rescales_by_sem():
    points = make_static_points(noise=0.01, seed=43)
    transform = lambda pts: static_transform(pts, 0.014, 1.3)
    plain = collapse_cost(points, transform)
    weighted = collapse_cost(points, transform, weighted=True)
    # All sems equal 0.01, so weighting divides each residual by 1e-4.
    assert weighted == pytest.approx(plain / 0.01**2, rel=1e-9)
    bad = [CollapsePoint(p.control, p.size, p.value, 0.0) for p in points]
    with pytest.raises(ValueError, match="positive sems"):
        collapse_cost(bad, transform, weighted=True)


# ------------------------------------------------------------ static fits


def test_static_collapse_recovers_truth_at_one_percent_noise():
    fit = fit_static_collapse(make_static_points(noise=0.01, seed=10))
    assert fit.parameters["p_c"] == pytest.approx(STATIC_TRUTH["p_c"], abs=0.002)
    assert fit.parameters["nu"] == pytest.approx(STATIC_TRUTH["nu"], abs=0.1)
    lo, hi = fit.error_bars["p_c"]
    assert lo <= STATIC_TRUTH["p_c"] <= hi
    assert lo < hi


def test_static_collapse_noiseless_recovery_is_sharp():
    fit = fit_static_collapse(make_static_points(noise=0.0), error_bars=False)
    assert fit.parameters["p_c"] == pytest.approx(STATIC_TRUTH["p_c"], abs=5e-4)
    assert fit.parameters["nu"] == pytest.approx(STATIC_TRUTH["nu"], abs=0.05)
    assert fit.cost_min < 1e-5


def test_static_collapse_flags_unidentified_nu():
    # Size-independent curves collapse for any stretch: nu runs to the edge
    # of its search range and the interval is open on that side.
    rng = np.random.default_rng(14)
    controls = np.linspace(0.004, 0.024, 15)
    points = []
    for n in (8, 10, 12, 14):
        y = np.tanh(400.0 * (controls - 0.014))
        y = y + 0.005 * rng.standard_normal(len(controls))
        points.extend(
            CollapsePoint(float(p), n, float(v), 0.005)
            for p, v in zip(controls, y)
        )
    fit = fit_static_collapse(points)
    assert "nu_at_search_bound" in fit.flags
    assert "nu_interval_upper_unbounded" in fit.flags


def test_static_collapse_is_deterministic():
    points = make_static_points(noise=0.01, seed=10)
    a = fit_static_collapse(points, error_bars=False)
    b = fit_static_collapse(points, error_bars=False)
    assert a.parameters == b.parameters
    assert a.cost_min == b.cost_min


# ----------------------------------------------------------- dynamic fits


def test_dynamic_collapse_recovers_exponents():
    fit = fit_dynamic_collapse(make_dynamic_points(noise=0.01), error_bars=False)
    for name, truth in DYNAMIC_TRUTH.items():
        assert fit.parameters[name] == pytest.approx(truth, abs=0.05), name


def test_dynamic_collapse_interval_includes_zero_when_delta_is_zero():
    points = make_dynamic_points(
        noise=0.01, delta=0.0, sizes=(8, 12), probs=(0.02, 0.1), n_times=15
    )
    fit = fit_dynamic_collapse(points)
    assert fit.parameters["delta"] == pytest.approx(0.0, abs=0.01)
    assert fit.error_bars["delta"][0] <= 1e-6


def test_dynamic_error_bars_shrink_with_noise():
    widths = []
    for noise in (0.02, 0.01, 0.005):
        fit = fit_dynamic_collapse(
            make_dynamic_points(
                noise=noise, seed=13, sizes=(8, 12), probs=(0.02, 0.1), n_times=15
            )
        )
        spans = [hi - lo for lo, hi in fit.error_bars.values()]
        widths.append(float(np.mean(spans)))
    assert widths[0] > widths[1] > widths[2]


def test_dynamic_collapse_requires_times():
    points = make_static_points(noise=0.01)
    with pytest.raises(ValueError, match="time"):
        fit_dynamic_collapse(points)


# --------------------------------------------------- dynamical exponent


def test_dynamical_exponent_recovers_z():
    fit = fit_dynamical_exponent(make_z_points(noise=0.005))
    assert fit.parameters["z"] == pytest.approx(Z_TRUTH["z"], abs=0.02)
    lo, hi = fit.error_bars["z"]
    assert lo <= Z_TRUTH["z"] <= hi


def test_dynamical_exponent_exclusion_window():
    # Early-time points carry transient garbage; the exclusion window must
    # remove them before they can bias the fit.
    clean = make_z_points(noise=0.003, seed=15)
    poisoned = list(clean)
    for n in (8, 10, 12):
        poisoned.extend(
            CollapsePoint(control=float(t), size=n, value=5.0, sem=0.003)
            for t in (0.2, 0.5, 0.9)
        )
    biased = fit_dynamical_exponent(poisoned, error_bars=False)
    excluded = fit_dynamical_exponent(poisoned, exclusion=1.0, error_bars=False)
    reference = fit_dynamical_exponent(clean, exclusion=1.0, error_bars=False)
    assert excluded.parameters["z"] == pytest.approx(
        reference.parameters["z"], abs=1e-12
    )
    assert abs(biased.parameters["z"] - Z_TRUTH["z"]) > abs(
        excluded.parameters["z"] - Z_TRUTH["z"]
    )


def test_dynamical_exponent_rejects_overlong_exclusion():
    with pytest.raises(ValueError, match="exclusion"):
        fit_dynamical_exponent(make_z_points(), exclusion=1e6)


def test_elapsed_transform_coordinates():
    points = [CollapsePoint(control=10.0, size=8, value=0.3, sem=0.01)]
    x, y, sem = elapsed_transform(points, 1.5)
    assert x[0] == pytest.approx(math.log(10.0) - 1.5 * math.log(8.0), abs=1e-12)
    assert y[0] == 0.3


# ------------------------------------------------------- exponential decay


def test_exponential_decay_exact_recovery():
    t = np.arange(0.0, 60.0, 1.5)
    y = 0.3 + 0.45 * np.exp(-0.1 * t)
    fit = fit_exponential_decay(t, y)
    assert fit.rate == pytest.approx(0.1, abs=1e-6)
    assert fit.asymptote == pytest.approx(0.3, abs=1e-6)
    assert fit.rms_residual < 1e-8
    assert not fit.poor_fit


def test_exponential_growth_form():
    t = np.linspace(0.0, 80.0, 50)
    y = 0.7 - 0.5 * np.exp(-0.07 * t)
    fit = fit_exponential_decay(t, y)
    assert fit.rate == pytest.approx(0.07, abs=1e-6)
    assert fit.asymptote == pytest.approx(0.7, abs=1e-6)


def test_exponential_decay_with_offset_origin():
    # y0 is pinned to the first sample, so a series starting at t=25 must
    # recover the same rate.
    t = np.arange(25.0, 100.0, 2.5)
    y = 0.2 + 0.6 * np.exp(-0.05 * (t - 25.0))
    fit = fit_exponential_decay(t, y)
    assert fit.rate == pytest.approx(0.05, abs=1e-6)
    assert fit.asymptote == pytest.approx(0.2, abs=1e-6)


def test_exponential_decay_flags_poor_fit():
    t = np.linspace(0.0, 50.0, 60)
    y = np.sin(0.8 * t) + 0.02 * t
    fit = fit_exponential_decay(t, y)
    assert fit.poor_fit


def test_exponential_decay_input_validation():
    with pytest.raises(ValueError):
        fit_exponential_decay([0.0, 1.0, 2.0], [1.0, 0.5, 0.2])  # too short
    t = np.arange(0.0, 10.0)
    with pytest.raises(ValueError):
        fit_exponential_decay(t[::-1], np.exp(-t))
    with pytest.raises(ValueError):
        fit_exponential_decay(t, np.ones(10))


# ------------------------------------------------------------- power laws


def test_power_law_exact():
    x = np.arange(1.0, 9.0)
    fit = fit_power_law(x, 3.0 / x)
    assert fit.exponent == pytest.approx(-1.0, abs=1e-10)
    assert fit.log_prefactor == pytest.approx(math.log(3.0), abs=1e-10)
    assert fit.rms_residual < 1e-12


def test_power_law_validation():
    with pytest.raises(ValueError):
        fit_power_law([1.0, 2.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        fit_power_law([1.0, 2.0, -3.0], [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        fit_power_law([1.0, 2.0, 3.0], [1.0, 0.0, 3.0])


def test_log_scaling_exact():
    lengths = np.arange(1.0, 6.0)
    entropies = 0.5 * np.log(lengths) + 0.1
    fit = fit_log_scaling(lengths, entropies)
    assert fit.slope == pytest.approx(0.5, abs=1e-12)
    assert fit.intercept == pytest.approx(0.1, abs=1e-12)
    assert fit.rms_residual < 1e-14


def test_log_scaling_validation():
    with pytest.raises(ValueError):
        fit_log_scaling([1.0, 2.0, 2.0], [0.1, 0.2, 0.2])
    with pytest.raises(ValueError):
        fit_log_scaling([0.0, 1.0, 2.0], [0.1, 0.2, 0.3])
    with pytest.raises(ValueError):
        fit_log_scaling([1.0, 2.0, 3.0], [0.1, 0.2])


# -------------------------------------------------------- Renyi coefficient


def test_renyi_coefficient_exact():
    orders = np.array([1.5, 2.0, 3.0, 5.0, math.inf])
    alphas = 0.34 * (1.0 + np.where(np.isinf(orders), 0.0, 1.0 / orders))
    fit = fit_renyi_coefficient(orders, alphas)
    assert fit.alpha_inf == pytest.approx(0.34, abs=1e-12)
    assert not fit.poor_fit


def test_renyi_coefficient_flags_offset_data():
    orders = np.array([1.5, 2.0, 3.0, 5.0, math.inf])
    w = 1.0 + np.where(np.isinf(orders), 0.0, 1.0 / orders)
    alphas = 0.34 * w + 0.12
    fit = fit_renyi_coefficient(orders, alphas)
    assert fit.poor_fit
    assert fit.offset_slope == pytest.approx(0.34, abs=1e-10)
    assert fit.offset_intercept == pytest.approx(0.12, abs=1e-10)
    assert fit.offset_rms_residual < 1e-12


def test_renyi_coefficient_validation():
    with pytest.raises(ValueError):
        fit_renyi_coefficient([2.0, 3.0], [0.5, 0.45])
    with pytest.raises(ValueError):
        fit_renyi_coefficient([2.0, -3.0, 4.0], [0.5, 0.45, 0.4])
