"""Ancilla order parameter: entangle a reference qubit, monitor the system.

At a chosen step t0 the trajectory state |psi> is replaced by

    (|0>_a (x) |psi>  +  |1>_a (x) |psi_1>) / sqrt(2),

where |psi_1> is the Gram-Schmidt orthonormalized partner X_ref|psi>.  The
ancilla occupies the highest bit of the register and is never measured or
evolved; the protocol continues on the system sites only, acting identically
on both branches.  The ancilla entropy starts at ln 2 exactly and decays only
through system measurements, which is what makes it an order parameter.

If |psi> is an exact X_ref eigenstate (it is whenever the reference site was
projected in the X basis on the final sweep before t0) the X partner
degenerates; the Z_ref partner is then exactly orthogonal and is used as an
opt-in fallback by the ensemble runner.
"""

from __future__ import annotations

import functools

import numpy as np

from .hamiltonian import build_hamiltonian, diagonalize, evolve, sample_disorder
from .measurement import measure_site
from .observables import reduced_density_matrix, von_neumann_entropy
from .trajectory import (
    SeriesStats,
    TimeSeriesRecord,
    TrajectoryConfig,
    _initial_state,
    _pool_batches,
    disorder_seed,
    sample_steps,
    trajectory_seed,
)

_DEGENERATE_TOL = 1e-10


def _site_flip(state: np.ndarray, site: int) -> np.ndarray:
    """Apply 2*S^x at one site (bit flip)."""
    view = state.reshape(-1, 2, 1 << site)
    return view[:, ::-1, :].reshape(state.shape)


def _site_z(state: np.ndarray, site: int) -> np.ndarray:
    """Apply 2*S^z at one site (sign on the spin-down slice)."""
    view = state.reshape(-1, 2, 1 << site).copy()
    view[:, 0, :] *= -1.0
    return view.reshape(state.shape)


def entangle_ancilla(
    state: np.ndarray,
    reference_site: int,
    n_sites: int | None = None,
    allow_z_fallback: bool = False,
) -> np.ndarray:
    """Attach a maximally entangled ancilla as the new highest bit.

    Raises if X_ref|state> has no component orthogonal to |state| and the Z
    fallback is not allowed.
    """
    state = np.asarray(state, dtype=np.complex128)
    n = int(np.log2(len(state)) + 0.5) if n_sites is None else n_sites
    if 2**n != len(state):
        raise ValueError("state length is not a power of two")
    if not 0 <= reference_site < n:
        raise ValueError(f"reference_site {reference_site} outside [0, {n})")

    partner = _site_flip(state, reference_site)
    partner = partner - np.vdot(state, partner) * state
    norm = np.linalg.norm(partner)
    if norm < _DEGENERATE_TOL:
        if not allow_z_fallback:
            raise ValueError(
                "X partner is degenerate: the state is an X eigenstate at the "
                "reference site"
            )
        # Z_ref maps an X_ref eigenstate to the orthogonal one exactly.
        partner = _site_z(state, reference_site)
        partner = partner - np.vdot(state, partner) * state
        norm = np.linalg.norm(partner)
    out = np.empty(2 ** (n + 1), dtype=np.complex128)
    out[: 2**n] = state / np.sqrt(2.0)
    out[2**n :] = partner / (norm * np.sqrt(2.0))
    return out


def ancilla_entropy(state: np.ndarray, n_system: int) -> float:
    """Von Neumann entropy of the top-bit ancilla."""
    rho = reduced_density_matrix(state, [n_system], n_sites=n_system + 1)
    return von_neumann_entropy(rho)


def run_ancilla_trajectory(
    config: TrajectoryConfig,
    realization,
    eigensystem,
    traj_seed: int,
    t0_steps: int,
    reference_site: int,
) -> tuple[np.ndarray, np.ndarray]:
    """One trajectory of the ancilla protocol.

    Identical draw layout to the plain engine through step t0 (so the pre-t0
    dynamics is the standard ensemble member), then the register doubles and
    the protocol continues with sweeps over system sites only.  Returns
    (times, S_ancilla) sampled at t0 and at every configured sample step
    after it.
    """
    if not 0 <= t0_steps < config.n_steps:
        raise ValueError(f"t0_steps must be in [0, {config.n_steps})")
    rng = np.random.default_rng(traj_seed)
    state = _initial_state(config, rng)
    n, p, dt = config.n_sites, config.measure_prob, config.dt

    pending = 0
    for step in range(1, t0_steps + 1):
        pending += 1
        draws = rng.random(n)
        hits = np.nonzero(draws < p)[0]
        if hits.size:
            state = evolve(state, eigensystem, pending * dt)
            pending = 0
            for site in hits:
                state, _, _ = measure_site(state, int(site), config.basis, rng)
    if pending:
        state = evolve(state, eigensystem, pending * dt)

    state = entangle_ancilla(state, reference_site, n, allow_z_fallback=True)

    steps = sample_steps(config)
    steps = np.unique(np.concatenate([[t0_steps], steps[steps > t0_steps]]))
    entropies = np.empty(len(steps))
    entropies[0] = ancilla_entropy(state, n)
    sample_pos = 1
    next_sample = int(steps[sample_pos]) if sample_pos < len(steps) else -1

    pending = 0
    for step in range(t0_steps + 1, config.n_steps + 1):
        pending += 1
        draws = rng.random(n)
        hits = np.nonzero(draws < p)[0]
        is_sample = step == next_sample
        if hits.size or is_sample:
            view = state.reshape(2, 2**n)
            evolved = np.empty_like(view)
            for branch in range(2):
                evolved[branch] = evolve(view[branch], eigensystem, pending * dt)
            state = evolved.reshape(-1)
            pending = 0
            for site in hits:
                state, _, _ = measure_site(state, int(site), config.basis, rng)
            if is_sample:
                entropies[sample_pos] = ancilla_entropy(state, n)
                sample_pos += 1
                next_sample = int(steps[sample_pos]) if sample_pos < len(steps) else -1
    return steps * dt, entropies


def _ancilla_batch(config: TrajectoryConfig, disorder_index: int,
                   t0_steps: int = 0, reference_site: int = 0):
    realization = sample_disorder(
        config.n_sites,
        config.disorder_strength,
        config.coupling,
        disorder_seed(config.master_seed, disorder_index),
    )
    eig = diagonalize(build_hamiltonian(realization, config.boundary))
    rows = []
    times = None
    for t in range(config.n_traj_per_disorder):
        times, entropies = run_ancilla_trajectory(
            config, realization, eig,
            trajectory_seed(config.master_seed, disorder_index, t),
            t0_steps, reference_site,
        )
        rows.append(entropies)
    return times, {"S_anc": np.vstack(rows)}


def ancilla_entropy_series(
    config: TrajectoryConfig,
    t0_steps: int,
    reference_site: int | None = None,
    workers: int | None = None,
) -> TimeSeriesRecord:
    """Pooled ancilla entropy S_anc(t) for t >= t0 over the full ensemble."""
    if reference_site is None:
        reference_site = config.n_sites // 2
    if not 0 <= reference_site < config.n_sites:
        raise ValueError("reference_site outside the chain")

    batch = functools.partial(
        _ancilla_batch, t0_steps=t0_steps, reference_site=reference_site
    )
    times, pooled = _pool_batches(config, batch, workers)
    arr = pooled["S_anc"]
    m = arr.shape[0]
    mean = arr.mean(axis=0)
    sem = arr.std(axis=0, ddof=1) / np.sqrt(m) if m > 1 else np.zeros_like(mean)
    return TimeSeriesRecord(
        times=times,
        series={"S_anc": SeriesStats(mean=mean, sem=sem)},
        n_samples=m,
        config=config,
        t0_steps=t0_steps,
    )
