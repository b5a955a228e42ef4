"""Entanglement and spectral observables of pure chain states.

Reduced density matrices are built by index-partition summation: the state is
reshaped into one axis per site, the kept axes are moved to the front, and the
resulting (2^|A|, 2^|rest|) matrix M gives rho_A = M M^dagger.  The full
2^n x 2^n projector |psi><psi| is never formed.

Entropies are in nats.  Spectrum weights below 1e-14 are dropped before any
log, which also regularizes Renyi indices below one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .hamiltonian import EigenSystem

EIG_FLOOR = 1e-14
_NEGATIVE_TOL = 1e-10
_HERM_TOL = 1e-10
_TRACE_TOL = 1e-8


def _infer_sites(state: np.ndarray) -> int:
    n = int(np.log2(len(state)) + 0.5)
    if 2**n != len(state):
        raise ValueError("state length is not a power of two")
    return n


def _check_sites(sites: Iterable[int], n_sites: int, proper: bool = True) -> tuple[int, ...]:
    sites = tuple(int(s) for s in sites)
    if len(sites) == 0:
        raise ValueError("subsystem must contain at least one site")
    if len(set(sites)) != len(sites):
        raise ValueError(f"duplicate sites in subsystem {sites}")
    if any(not 0 <= s < n_sites for s in sites):
        raise ValueError(f"sites {sites} outside [0, {n_sites})")
    if proper and len(sites) >= n_sites:
        raise ValueError("subsystem must be a proper subset of the chain")
    return tuple(sorted(sites))


def reduced_density_matrix(
    state: np.ndarray,
    sites: Iterable[int],
    n_sites: int | None = None,
) -> np.ndarray:
    """Partial trace of |state><state| onto `sites`.

    Row/column index r encodes the kept sites in ascending order, little
    endian: bit k of r is the ascending k-th kept site.  That matches the
    global convention where bit i of a basis integer is site i.
    """
    state = np.asarray(state)
    n = _infer_sites(state) if n_sites is None else n_sites
    if len(state) != 2**n:
        raise ValueError("state length inconsistent with n_sites")
    kept = _check_sites(sites, n)
    rest = [s for s in range(n) if s not in kept]
    tensor = state.reshape((2,) * n)
    # Axis n-1-s holds site s; order each group most-significant-site first
    # so the flattened indices are little endian in site order.
    axes = [n - 1 - s for s in reversed(kept)] + [n - 1 - s for s in reversed(rest)]
    m = tensor.transpose(axes).reshape(2 ** len(kept), -1)
    return m @ m.conj().T


def _spectrum(rho: np.ndarray) -> np.ndarray:
    """Validated eigenvalues of a density matrix, with the near-zero tail cut."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError("density matrix must be square")
    scale = max(1.0, float(np.abs(rho).max()))
    if np.abs(rho - rho.conj().T).max() > _HERM_TOL * scale:
        raise ValueError("density matrix is not Hermitian")
    lam = np.linalg.eigvalsh(rho)
    if lam.min() < -_NEGATIVE_TOL:
        raise ValueError(f"density matrix has eigenvalue {lam.min()} < -{_NEGATIVE_TOL}")
    if abs(lam.sum() - 1.0) > _TRACE_TOL:
        raise ValueError(f"density matrix trace {lam.sum()} is not 1")
    return lam[lam > EIG_FLOOR]


def _entropy_from_probs(lam: np.ndarray) -> float:
    return float(-np.sum(lam * np.log(lam)))


def _renyi_from_probs(lam: np.ndarray, order: float) -> float:
    if order == math.inf:
        return float(-np.log(lam.max()))
    return float(np.log(np.sum(lam**order)) / (1.0 - order))


def von_neumann_entropy(rho: np.ndarray) -> float:
    """-Tr rho ln rho over the retained spectrum."""
    return _entropy_from_probs(_spectrum(rho))


def renyi_entropy(rho: np.ndarray, order: float) -> float:
    """S_n = ln(Tr rho^n) / (1 - n); order = inf gives -ln(lambda_max)."""
    if not order > 0:
        raise ValueError(f"Renyi order must be positive, got {order}")
    if order == 1:
        raise ValueError("order 1 is the von Neumann limit; use von_neumann_entropy")
    return _renyi_from_probs(_spectrum(rho), float(order))


def entanglement_entropy(
    state: np.ndarray,
    sites: Iterable[int],
    n_sites: int | None = None,
) -> float:
    return von_neumann_entropy(reduced_density_matrix(state, sites, n_sites))


def mutual_information(
    state: np.ndarray,
    sites_a: Iterable[int],
    sites_b: Iterable[int],
    n_sites: int | None = None,
) -> float:
    """I(A:B) = S_A + S_B - S_AB for a pure chain state."""
    state = np.asarray(state)
    n = _infer_sites(state) if n_sites is None else n_sites
    a = _check_sites(sites_a, n)
    b = _check_sites(sites_b, n)
    if set(a) & set(b):
        raise ValueError("subsystems A and B overlap")
    s_a = entanglement_entropy(state, a, n)
    s_b = entanglement_entropy(state, b, n)
    s_ab = entanglement_entropy(state, a + b, n)
    return s_a + s_b - s_ab


@dataclass(frozen=True)
class QuarterPartition:
    """Four contiguous blocks covering the chain (used for I3)."""

    quarters: tuple[tuple[int, ...], tuple[int, ...], tuple[int, ...], tuple[int, ...]]

    @property
    def n_sites(self) -> int:
        return sum(len(q) for q in self.quarters)


def quarter_partition(n_sites: int) -> QuarterPartition:
    """Contiguous quarters starting at site 0, sizes ceil/floor interleaved.

    The remainder sites go to quarters (0, 2, 1) in that order, so even
    remainders alternate large/small around the ring.
    """
    if n_sites < 4:
        raise ValueError("quarter partition needs at least 4 sites")
    base = n_sites // 4
    sizes = [base] * 4
    for q in (0, 2, 1)[: n_sites % 4]:
        sizes[q] += 1
    quarters = []
    start = 0
    for size in sizes:
        quarters.append(tuple(range(start, start + size)))
        start += size
    return QuarterPartition(quarters=tuple(quarters))


def tripartite_information(
    state: np.ndarray,
    partition: QuarterPartition | None = None,
    n_sites: int | None = None,
) -> float:
    """I3 = I(A:B) + I(A:C) - I(A:BC) on a quartered chain.

    For a pure state on A+B+C+D this equals the symmetric combination
    S_A + S_B + S_C + S_D - S_AB - S_AC - S_AD, which is what gets evaluated:
    every reduced block then involves at most half the chain.
    """
    state = np.asarray(state)
    n = _infer_sites(state) if n_sites is None else n_sites
    if partition is None:
        partition = quarter_partition(n)
    if partition.n_sites != n:
        raise ValueError("partition does not cover the chain")
    a, b, c, d = partition.quarters
    s = {
        key: entanglement_entropy(state, sites, n)
        for key, sites in {
            "a": a, "b": b, "c": c, "d": d,
            "ab": a + b, "ac": a + c, "ad": a + d,
        }.items()
    }
    return s["a"] + s["b"] + s["c"] + s["d"] - s["ab"] - s["ac"] - s["ad"]


def diagonal_entropy(state: np.ndarray, eigensystem: EigenSystem) -> float:
    """Shannon entropy of |<E_i|state>|^2 across all sectors.

    Invariant under Hamiltonian evolution by construction; measurements
    repopulate the eigenbasis and move it.
    """
    state = np.asarray(state)
    if len(state) != 2**eigensystem.chain_length:
        raise ValueError("state length inconsistent with eigensystem")
    total = 0.0
    for sec in eigensystem.sectors:
        amp = state[sec.basis_indices]
        if np.iscomplexobj(sec.vectors):
            coeff = sec.vectors.conj().T @ amp
            probs = np.abs(coeff) ** 2
        else:
            cols = np.column_stack((amp.real, amp.imag))
            coeff = sec.vectors.T @ cols
            probs = coeff[:, 0] ** 2 + coeff[:, 1] ** 2
        probs = probs[probs > EIG_FLOOR]
        if len(probs):
            total -= float(np.sum(probs * np.log(probs)))
    return total


def segment_entropy_profile(
    state: np.ndarray,
    lengths: Sequence[int],
    renyi_orders: Sequence[float] = (),
    cyclic: bool = True,
    n_sites: int | None = None,
) -> dict[float, dict[int, float]]:
    """Average segment entropies S(l) over contiguous segment positions.

    Returns {order: {l: mean entropy}} where order 1 is von Neumann.  With
    cyclic=True every translate of the segment (wrapping included) enters the
    average; otherwise only the n-l+1 non-wrapping windows do.
    """
    state = np.asarray(state)
    n = _infer_sites(state) if n_sites is None else n_sites
    orders: tuple[float, ...] = (1.0,) + tuple(float(o) for o in renyi_orders)
    out: dict[float, dict[int, float]] = {o: {} for o in orders}
    for length in lengths:
        if not 1 <= length <= n - 1:
            raise ValueError(f"segment length {length} outside [1, {n - 1}]")
        starts = range(n) if cyclic else range(n - length + 1)
        sums = dict.fromkeys(orders, 0.0)
        count = 0
        for start in starts:
            sites = [(start + k) % n for k in range(length)]
            lam = _spectrum(reduced_density_matrix(state, sites, n))
            sums[1.0] += _entropy_from_probs(lam)
            for o in orders[1:]:
                sums[o] += _renyi_from_probs(lam, o)
            count += 1
        for o in orders:
            out[o][int(length)] = sums[o] / count
    return out
