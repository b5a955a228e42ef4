"""Projective single-site measurements in the Z or X basis.

Projectors are P(Z, +-) = (1 +- 2 S^z_i)/2 and P(X, +-) = (1 +- 2 S^x_i)/2,
with outcomes +-1 sampled from the Born rule.  To act on site i the state is
viewed as (rest, bit_i, 2**i); the Z projectors select one slice of the middle
axis and the X projectors take sums and differences of the two slices.

RNG contract for a sweep at probability p: one uniform per site is drawn as a
batch (one Bernoulli(p) decision per site, ascending), then the selected sites
are projected sequentially in ascending order, each consuming exactly one more
uniform for its outcome.  The draw layout never depends on the state, so a
trajectory is reproducible from its seed alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

BASES = ("Z", "X")

# Below this total Born weight the state is treated as corrupted rather than
# renormalized into nonsense.
_BORN_FLOOR = 1e-14


class MeasurementEvent(NamedTuple):
    step: int
    site: int
    basis: str
    outcome: int
    probability: float


@dataclass
class MeasurementRecord:
    """Every outcome of a trajectory, including deterministic ones."""

    events: list[MeasurementEvent] = field(default_factory=list)

    def count(self) -> int:
        return len(self.events)


def _infer_sites(state: np.ndarray) -> int:
    n = int(np.log2(len(state)) + 0.5)
    if 2**n != len(state):
        raise ValueError("state length is not a power of two")
    return n


def measure_site(
    state: np.ndarray,
    site: int,
    basis: str,
    rng: np.random.Generator,
) -> tuple[np.ndarray, int, float]:
    """Projectively measure one site, returning (state', outcome, probability).

    The returned probability is the Born weight of the realized outcome and
    the returned state is renormalized to unit norm.
    """
    if basis not in BASES:
        raise ValueError(f"basis must be one of {BASES}, got {basis!r}")
    state = np.asarray(state)
    n = _infer_sites(state)
    if not 0 <= site < n:
        raise ValueError(f"site {site} outside [0, {n})")

    view = state.reshape(-1, 2, 1 << site)
    if basis == "Z":
        # bit = 1 is spin-up, outcome +1.
        w_plus = float(np.sum(np.abs(view[:, 1, :]) ** 2))
        w_minus = float(np.sum(np.abs(view[:, 0, :]) ** 2))
    else:
        # (1 +- X)/2 eigenvectors are the symmetric/antisymmetric combinations.
        sym = 0.5 * (view[:, 0, :] + view[:, 1, :])
        anti = 0.5 * (view[:, 0, :] - view[:, 1, :])
        w_plus = 2.0 * float(np.sum(np.abs(sym) ** 2))
        w_minus = 2.0 * float(np.sum(np.abs(anti) ** 2))

    total = w_plus + w_minus
    if total < _BORN_FLOOR:
        raise ValueError(
            f"state has vanishing weight under both {basis} projectors at site {site}"
        )
    prob_plus = w_plus / total
    outcome = 1 if rng.random() < prob_plus else -1

    out = np.zeros_like(view, dtype=np.complex128)
    if basis == "Z":
        keep = 1 if outcome == 1 else 0
        out[:, keep, :] = view[:, keep, :]
        weight = w_plus if outcome == 1 else w_minus
    else:
        branch = sym if outcome == 1 else anti
        out[:, 0, :] = branch
        out[:, 1, :] = branch if outcome == 1 else -branch
        weight = w_plus if outcome == 1 else w_minus
    out = out.reshape(state.shape)
    out /= np.sqrt(weight)
    probability = prob_plus if outcome == 1 else (w_minus / total)
    return out, outcome, probability


def measurement_sweep(
    state: np.ndarray,
    prob: float,
    basis: str,
    rng: np.random.Generator,
    step: int = 0,
    n_sites: int | None = None,
    record: MeasurementRecord | None = None,
) -> tuple[np.ndarray, list[MeasurementEvent]]:
    """One monitoring sweep: each site is measured independently with
    probability `prob`.  Restricting n_sites leaves higher bits untouched
    (used when an ancilla occupies the top of the register)."""
    if not 0.0 <= prob <= 1.0:
        raise ValueError(f"prob must be in [0, 1], got {prob}")
    state = np.asarray(state)
    n_register = _infer_sites(state)
    n = n_register if n_sites is None else n_sites
    if not 0 < n <= n_register:
        raise ValueError(f"n_sites must be in [1, {n_register}], got {n}")

    draws = rng.random(n)
    events: list[MeasurementEvent] = []
    for site in np.nonzero(draws < prob)[0]:
        state, outcome, born = measure_site(state, int(site), basis, rng)
        events.append(
            MeasurementEvent(int(step), int(site), basis, outcome, born)
        )
    if record is not None:
        record.events.extend(events)
    return state, events
