"""Independent reference implementations used only by the tests.

Everything here is built by a different route than the package: the
Hamiltonian as a dense 2^N x 2^N kron sum, time evolution via scipy's expm,
and partial traces via an explicit bit loop (and a tensordot variant for
bulk checks).  Slow and memory-hungry on purpose; keep N <= 8.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import expm

SX = np.array([[0.0, 0.5], [0.5, 0.0]], dtype=complex)
SY = np.array([[0.0, 0.5j], [-0.5j, 0.0]], dtype=complex)
SZ = np.array([[-0.5, 0.0], [0.0, 0.5]], dtype=complex)
# Basis order per site is (down, up): basis integer bit i is site i's spin,
# set bit = up, so site 0 is the least-significant bit.


def op_at(op: np.ndarray, site: int, n_sites: int) -> np.ndarray:
    left = np.eye(1 << (n_sites - 1 - site))
    right = np.eye(1 << site)
    return np.kron(left, np.kron(op, right))


def dense_hamiltonian(
    fields, coupling: float = 1.0, boundary: str = "periodic"
) -> np.ndarray:
    fields = list(fields)
    n = len(fields)
    bonds = [(i, i + 1) for i in range(n - 1)]
    if boundary == "periodic" and n >= 3:
        bonds.append((n - 1, 0))
    dim = 1 << n
    h = np.zeros((dim, dim), dtype=complex)
    for i, j in bonds:
        for op in (SX, SY, SZ):
            h += coupling * op_at(op, i, n) @ op_at(op, j, n)
    for i, field in enumerate(fields):
        h += field * op_at(SZ, i, n)
    return h


def dense_evolve(state: np.ndarray, h: np.ndarray, t: float) -> np.ndarray:
    return expm(-1j * h * t) @ state


def dense_diagonal_entropy(state: np.ndarray, h: np.ndarray) -> float:
    energies, vectors = np.linalg.eigh(h)
    probs = np.abs(vectors.conj().T @ state) ** 2
    probs = probs[probs > 1e-14]
    return float(-np.sum(probs * np.log(probs)))


def rdm_bitloop(state: np.ndarray, kept, n_sites: int) -> np.ndarray:
    """Partial trace by summing the full outer product index by index."""
    kept = sorted(kept)
    rest = [s for s in range(n_sites) if s not in kept]
    dim = 1 << len(kept)
    rho = np.zeros((dim, dim), dtype=complex)
    for a in range(dim):
        for b in range(dim):
            acc = 0.0 + 0.0j
            for r in range(1 << len(rest)):
                ia = ib = 0
                for k, site in enumerate(kept):
                    ia |= ((a >> k) & 1) << site
                    ib |= ((b >> k) & 1) << site
                for k, site in enumerate(rest):
                    bit = (r >> k) & 1
                    ia |= bit << site
                    ib |= bit << site
                acc += state[ia] * np.conj(state[ib])
            rho[a, b] = acc
    return rho


def rdm_tensordot(state: np.ndarray, kept, n_sites: int) -> np.ndarray:
    """Partial trace contracting complement axes directly (no reshape trick).

    Axis n_sites-1-s of the amplitude tensor is site s; the result's row
    index is little-endian over ascending kept sites, matching rdm_bitloop.
    """
    kept = sorted(kept)
    rest_axes = [n_sites - 1 - s for s in range(n_sites) if s not in kept]
    tensor = np.asarray(state).reshape((2,) * n_sites)
    rho = np.tensordot(tensor, tensor.conj(), axes=(rest_axes, rest_axes))
    dim = 1 << len(kept)
    return rho.reshape(dim, dim)


def entropy_of(rho: np.ndarray) -> float:
    lam = np.linalg.eigvalsh(rho)
    lam = lam[lam > 1e-14]
    return float(-np.sum(lam * np.log(lam)))


def random_state(n_sites: int, rng: np.random.Generator) -> np.ndarray:
    raw = rng.standard_normal(1 << n_sites) + 1j * rng.standard_normal(1 << n_sites)
    return raw / np.linalg.norm(raw)
