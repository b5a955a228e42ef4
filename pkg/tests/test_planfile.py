import pytest

from mblsim.planfile import (
    ConfigError,
    load_plan,
    parse_plan_text,
    plan_summary,
)
from mblsim.trajectory import cell_seed

MINIMAL = "run.n_sites = 8, 10\nrun.measure_prob = 0.05, 0.1\n"


def _plan(extra=""):
    return parse_plan_text(MINIMAL + extra)


# ----------------------------------------------------------------- parsing


def test_minimal_plan_uses_defaults():
    plan = _plan()
    assert plan.n_sites_values == (8, 10)
    assert plan.measure_prob_values == (0.05, 0.1)
    assert plan.basis == "Z"
    assert plan.disorder_strength == 10.0
    assert plan.t_max == 400.0
    assert plan.n_disorder == 30
    assert plan.n_traj_per_disorder == 10
    assert plan.observables.half_chain_entropy
    assert not plan.observables.entropy_vs_l
    assert not plan.ancilla_enabled
    assert plan.output_dir == "results"
    assert plan.window_fraction == 0.25
    assert plan.analysis_requests == ()


def test_full_plan_round_trip():
    plan = _plan(
        "run.basis = X\n"
        "run.disorder_strength = 8.5\n"
        "run.t_max = 128\n"
        "run.master_seed = 42\n"
        "run.n_disorder = 5\n"
        "run.n_traj_per_disorder = 3\n"
        "run.time_grid = geometric\n"
        "run.n_geometric = 32\n"
        "observables.entropy_vs_l = true\n"
        "observables.renyi_orders = 2, 3\n"
        "ancilla.enabled = true\n"
        "ancilla.t0_steps = 16\n"
        "ancilla.reference_site = 4\n"
        "output.dir = out/sweep\n"
        "analysis.window_fraction = 0.3\n"
    )
    assert plan.basis == "X"
    assert plan.disorder_strength == 8.5
    assert plan.time_grid == "geometric"
    assert plan.observables.renyi_orders == (2.0, 3.0)
    assert plan.ancilla_enabled
    assert plan.ancilla_t0_steps == 16
    assert plan.ancilla_reference_site == 4
    assert plan.output_dir == "out/sweep"
    assert plan.window_fraction == 0.3


def test_comments_and_blank_lines_ignored():
    plan = parse_plan_text(
        "# sweep grid\n\nrun.n_sites = 8, 10\n# inline settings below\n"
        "run.measure_prob = 0.1\n\n"
    )
    assert plan.n_sites_values == (8, 10)


def test_syntax_errors():
    with pytest.raises(ConfigError, match="key = value"):
        parse_plan_text(MINIMAL + "just some words\n")
    with pytest.raises(ConfigError, match="empty key or value"):
        parse_plan_text(MINIMAL + "run.basis =\n")
    with pytest.raises(ConfigError, match="duplicate key"):
        parse_plan_text(MINIMAL + "run.basis = Z\nrun.basis = X\n")


def test_missing_required_key():
    with pytest.raises(ConfigError, match="missing required key"):
        parse_plan_text("run.n_sites = 8, 10\n")


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown keys"):
        _plan("run.tmax = 100\n")


def test_value_errors_carry_key_and_source():
    with pytest.raises(ConfigError, match="run.n_sites"):
        parse_plan_text("run.n_sites = 8, ten\nrun.measure_prob = 0.1\n")
    with pytest.raises(ConfigError, match="true or false"):
        _plan("observables.tripartite = 1\n")
    with pytest.raises(ConfigError, match="empty list item"):
        parse_plan_text("run.n_sites = 8,,10\nrun.measure_prob = 0.1\n")


def test_auto_values():
    plan = _plan("ancilla.enabled = true\nancilla.t0_steps = auto\n")
    assert plan.ancilla_t0_steps is None
    plan = _plan("ancilla.enabled = true\nancilla.t0_steps = 12\n")
    assert plan.ancilla_t0_steps == 12


# ------------------------------------------------------------ cell configs


def test_cell_config_seeds_are_content_derived():
    plan = _plan("run.master_seed = 9\n")
    config = plan.cell_config(10, 0.05)
    assert config.master_seed == cell_seed(9, 10, 0.05)
    assert config.n_sites == 10
    assert config.measure_prob == 0.05
    other = plan.cell_config(8, 0.05)
    assert other.master_seed != config.master_seed
    # The same cell in a different plan with the same plan seed is identical.
    bigger = parse_plan_text(
        "run.n_sites = 8, 10, 12\nrun.measure_prob = 0.02, 0.05\n"
        "run.master_seed = 9\n"
    )
    assert bigger.cell_config(10, 0.05) == config


# --------------------------------------------------------------- requests


def test_requests_parse_with_overrides_and_defaults():
    plan = _plan(
        "analysis.requests = static_collapse, exponential_decay\n"
        "analysis.static_collapse.nu_max = 3.0\n"
    )
    static = plan.request("static_collapse")
    assert static.get("nu_max") == 3.0
    assert static.get("nu_min") == 0.5
    assert static.get("observable") == "I3"
    decay = plan.request("exponential_decay")
    assert decay.get("observable") == "S_diag"
    with pytest.raises(KeyError):
        plan.request("log_scaling")
    with pytest.raises(KeyError):
        static.get("no_such_param")


def test_unknown_request_name_lists_known():
    with pytest.raises(ConfigError, match="known:.*static_collapse"):
        _plan("analysis.requests = finite_size_scaling\n")


def test_duplicate_request_rejected():
    with pytest.raises(ConfigError, match="duplicate analysis request"):
        _plan("analysis.requests = static_collapse, static_collapse\n")


def test_parameters_for_unlisted_request_rejected():
    with pytest.raises(ConfigError, match="not listed in analysis.requests"):
        _plan("analysis.static_collapse.nu_max = 3.0\n")


# -------------------------------------------------------------- validation


def test_sweep_axis_validation():
    with pytest.raises(ConfigError, match="duplicates"):
        parse_plan_text("run.n_sites = 8, 8\nrun.measure_prob = 0.1\n")
    with pytest.raises(ConfigError, match="duplicates"):
        parse_plan_text("run.n_sites = 8\nrun.measure_prob = 0.1, 0.1\n")


def test_every_cell_must_build():
    # n_sites = 3 cannot support the quartered chain of the default
    # tripartite observable; the error names the offending cell.
    with pytest.raises(ConfigError, match=r"cell \(N=3"):
        parse_plan_text("run.n_sites = 3, 8\nrun.measure_prob = 0.1\n")
    with pytest.raises(ConfigError, match="measure_prob"):
        parse_plan_text("run.n_sites = 8\nrun.measure_prob = 1.5\n")


def test_window_fraction_bounds():
    for bad in ("0", "0.6", "-0.2"):
        with pytest.raises(ConfigError, match="window_fraction"):
            _plan(f"analysis.window_fraction = {bad}\n")


def test_ancilla_validation():
    with pytest.raises(ConfigError, match="t0_steps"):
        _plan("ancilla.enabled = true\nancilla.t0_steps = 400\n")
    with pytest.raises(ConfigError, match="reference_site"):
        _plan("ancilla.enabled = true\nancilla.reference_site = 9\n")
    # Disabled ancilla settings are not range-checked against the sweep.
    plan = _plan("ancilla.t0_steps = 400\n")
    assert plan.ancilla_t0_steps == 400


def test_collapse_requests_need_two_sizes():
    with pytest.raises(ConfigError, match="two chain sizes"):
        parse_plan_text(
            "run.n_sites = 8\nrun.measure_prob = 0.05, 0.1\n"
            "analysis.requests = static_collapse\n"
        )


def test_i3_requests_need_tripartite():
    with pytest.raises(ConfigError, match="tripartite"):
        _plan(
            "observables.tripartite = false\n"
            "analysis.requests = static_collapse\n"
        )


def test_decay_request_needs_diagonal_entropy():
    with pytest.raises(ConfigError, match="diagonal_entropy"):
        _plan(
            "observables.diagonal_entropy = false\n"
            "analysis.requests = exponential_decay\n"
        )


def test_log_scaling_requirements():
    with pytest.raises(ConfigError, match="entropy_vs_l"):
        _plan("analysis.requests = log_scaling\n")
    with pytest.raises(ConfigError, match="Renyi orders"):
        _plan(
            "observables.entropy_vs_l = true\n"
            "analysis.requests = log_scaling\n"
        )
    with pytest.raises(ConfigError, match="measure_prob"):
        _plan(
            "observables.entropy_vs_l = true\n"
            "observables.renyi_orders = 2, 3\n"
            "analysis.requests = log_scaling\n"
        )
    plan = _plan(
        "observables.entropy_vs_l = true\n"
        "observables.renyi_orders = 2, 3\n"
        "analysis.requests = log_scaling\n"
        "analysis.log_scaling.measure_prob = 0.1\n"
    )
    assert plan.request("log_scaling").get("measure_prob") == 0.1
    with pytest.raises(ConfigError, match="not in sweep"):
        _plan(
            "observables.entropy_vs_l = true\n"
            "observables.renyi_orders = 2, 3\n"
            "analysis.requests = log_scaling\n"
            "analysis.log_scaling.measure_prob = 0.3\n"
        )


def test_z_collapse_requirements():
    with pytest.raises(ConfigError, match="ancilla.enabled"):
        _plan("analysis.requests = z_collapse\n")
    with pytest.raises(ConfigError, match="measure_prob"):
        _plan("ancilla.enabled = true\nanalysis.requests = z_collapse\n")
    with pytest.raises(ConfigError, match="not in sweep"):
        _plan(
            "ancilla.enabled = true\nanalysis.requests = z_collapse\n"
            "analysis.z_collapse.measure_prob = 0.2\n"
        )
    plan = _plan(
        "ancilla.enabled = true\nanalysis.requests = z_collapse\n"
        "analysis.z_collapse.measure_prob = 0.1\n"
    )
    assert plan.request("z_collapse").get("exclusion") == 0.0


def test_power_law_peaks_size_must_be_in_sweep():
    with pytest.raises(ConfigError, match="not in sweep"):
        _plan(
            "analysis.requests = power_law_peaks\n"
            "analysis.power_law_peaks.n_sites = 12\n"
        )


# ------------------------------------------------------------ files, summary


def test_load_plan_from_file(tmp_path):
    path = tmp_path / "sweep.cfg"
    path.write_text(MINIMAL + "run.master_seed = 3\n")
    plan = load_plan(path)
    assert plan.master_seed == 3
    with pytest.raises(ConfigError, match="cannot read"):
        load_plan(tmp_path / "absent.cfg")


def test_plan_summary_mentions_the_grid():
    plan = _plan("analysis.requests = static_collapse\n")
    text = plan_summary(plan)
    assert "8, 10" in text
    assert "0.05, 0.1" in text
    assert "static_collapse" in text
    assert "4" in text  # cell count
