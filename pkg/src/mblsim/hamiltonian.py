"""Sector-blocked Heisenberg chain with random on-site fields.

    H = J * sum_<ij> S_i . S_j  +  sum_i h_i S_i^z

Spin-1/2 operators (S^z eigenvalues +-1/2, not Pauli +-1).  Nearest-neighbour
bonds run along the chain; periodic boundaries add the (n-1, 0) bond.  The
fields h_i are drawn uniformly from [-W*J, W*J].  Total S^z is conserved, so
the Hamiltonian is assembled, diagonalized and exponentiated one magnetization
sector at a time; the full 2^n x 2^n matrix is never formed.

Eigenvector blocks come out real (the blocks are real symmetric), and evolve()
exploits that: a complex amplitude vector is split into its real and imaginary
columns so the basis rotations run as real GEMMs instead of promoting the
eigenvector matrix to complex.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hilbert import Sector, SectorBasis, enumerate_sectors

BOUNDARIES = ("periodic", "open")

_HERMITICITY_TOL = 1e-12


@dataclass(frozen=True)
class DisorderRealization:
    """One draw of the random fields, regenerable bit-exactly from its seed."""

    fields: tuple[float, ...]
    disorder_strength: float  # W = h/J
    coupling: float  # J
    seed: int

    @property
    def n_sites(self) -> int:
        return len(self.fields)


@dataclass(frozen=True)
class BlockHamiltonian:
    """Dense Hermitian blocks of H, aligned with sector_basis.sectors."""

    chain_length: int
    boundary: str
    sector_basis: SectorBasis
    blocks: tuple[np.ndarray, ...]


@dataclass(frozen=True)
class SectorEigenpairs:
    """Eigendecomposition of one block; columns of `vectors` are eigenvectors."""

    magnetization: int
    basis_indices: np.ndarray
    values: np.ndarray
    vectors: np.ndarray


@dataclass(frozen=True)
class EigenSystem:
    chain_length: int
    boundary: str
    sectors: tuple[SectorEigenpairs, ...]


def sample_disorder(
    n_sites: int,
    disorder_strength: float,
    coupling: float = 1.0,
    seed: int = 0,
) -> DisorderRealization:
    """Draw h_i ~ Uniform[-W*J, W*J] for each site, deterministically in seed."""
    if n_sites < 1:
        raise ValueError("n_sites must be positive")
    if disorder_strength < 0:
        raise ValueError("disorder_strength must be non-negative")
    if coupling <= 0:
        raise ValueError("coupling must be positive")
    rng = np.random.default_rng(seed)
    bound = disorder_strength * coupling
    fields = rng.uniform(-bound, bound, n_sites)
    return DisorderRealization(
        fields=tuple(float(h) for h in fields),
        disorder_strength=float(disorder_strength),
        coupling=float(coupling),
        seed=int(seed),
    )


def chain_bonds(n_sites: int, boundary: str) -> tuple[tuple[int, int], ...]:
    """Nearest-neighbour bonds; the wrap-around bond needs n_sites >= 3."""
    if boundary not in BOUNDARIES:
        raise ValueError(f"boundary must be one of {BOUNDARIES}, got {boundary!r}")
    if n_sites < 2:
        raise ValueError("a chain needs at least 2 sites")
    bonds = [(i, i + 1) for i in range(n_sites - 1)]
    if boundary == "periodic":
        if n_sites == 2:
            # (1, 0) would duplicate the (0, 1) bond.
            raise ValueError("periodic boundary requires at least 3 sites")
        bonds.append((n_sites - 1, 0))
    return tuple(bonds)


def build_hamiltonian(
    realization: DisorderRealization,
    boundary: str = "periodic",
    sector_basis: SectorBasis | None = None,
) -> BlockHamiltonian:
    """Assemble the dense Hermitian block of H in every magnetization sector.

    Diagonal part: J * Sz_i Sz_j over bonds plus the field term.  Off-diagonal
    part: the (J/2)(S+_i S-_j + S-_i S+_j) flip-flop connects basis states that
    differ exactly by swapping an anti-aligned bond pair.
    """
    n = realization.n_sites
    bonds = chain_bonds(n, boundary)
    if sector_basis is None:
        sector_basis = enumerate_sectors(n)
    elif sector_basis.chain_length != n:
        raise ValueError("sector_basis chain length does not match realization")
    fields = np.asarray(realization.fields)
    j = realization.coupling

    blocks = []
    for sec in sector_basis.sectors:
        states = sec.basis_indices
        d = len(states)
        bits = ((states[:, None] >> np.arange(n)) & 1).astype(np.float64)
        sz = bits - 0.5
        diag = sz @ fields
        for i, k in bonds:
            diag += j * sz[:, i] * sz[:, k]
        block = np.zeros((d, d))
        block[np.arange(d), np.arange(d)] = diag
        for i, k in bonds:
            differ = bits[:, i] != bits[:, k]
            if not differ.any():
                continue
            rows = np.nonzero(differ)[0]
            partners = states[rows] ^ ((1 << i) | (1 << k))
            cols = np.searchsorted(states, partners)
            block[rows, cols] += 0.5 * j
        blocks.append(block)
    return BlockHamiltonian(
        chain_length=n,
        boundary=boundary,
        sector_basis=sector_basis,
        blocks=tuple(blocks),
    )


def diagonalize(block_hamiltonian: BlockHamiltonian) -> EigenSystem:
    """Eigendecompose each sector block (eigenvalues ascending)."""
    sectors = []
    for sec, block in zip(
        block_hamiltonian.sector_basis.sectors, block_hamiltonian.blocks
    ):
        scale = max(1.0, float(np.abs(block).max()))
        if np.abs(block - block.conj().T).max() > _HERMITICITY_TOL * scale:
            raise ValueError(
                f"sector m={sec.magnetization} block is not Hermitian"
            )
        values, vectors = np.linalg.eigh(block)
        sectors.append(
            SectorEigenpairs(
                magnetization=sec.magnetization,
                basis_indices=sec.basis_indices,
                values=values,
                vectors=vectors,
            )
        )
    return EigenSystem(
        chain_length=block_hamiltonian.chain_length,
        boundary=block_hamiltonian.boundary,
        sectors=tuple(sectors),
    )


def evolve(state: np.ndarray, eigensystem: EigenSystem, dt: float) -> np.ndarray:
    """Apply exp(-i H dt) sector by sector: gather, rotate to the eigenbasis,
    attach the phases, rotate back, scatter.  Norm is preserved to rounding."""
    dim = 2**eigensystem.chain_length
    state = np.asarray(state)
    if state.shape != (dim,):
        raise ValueError(f"state must have shape ({dim},), got {state.shape}")
    out = np.empty(dim, dtype=np.complex128)
    for sec in eigensystem.sectors:
        amp = state[sec.basis_indices]
        phase = np.exp(-1j * dt * sec.values)
        if np.iscomplexobj(sec.vectors):
            coeff = sec.vectors.conj().T @ amp
            out[sec.basis_indices] = sec.vectors @ (phase * coeff)
        else:
            cols = np.column_stack((amp.real, amp.imag))
            coeff = sec.vectors.T @ cols
            rotated = (coeff[:, 0] + 1j * coeff[:, 1]) * phase
            back = sec.vectors @ np.column_stack((rotated.real, rotated.imag))
            out[sec.basis_indices] = back[:, 0] + 1j * back[:, 1]
    return out


def energy_expectation(state: np.ndarray, block_hamiltonian: BlockHamiltonian) -> float:
    """<state|H|state>, accumulated block by block."""
    dim = 2**block_hamiltonian.chain_length
    state = np.asarray(state)
    if state.shape != (dim,):
        raise ValueError(f"state must have shape ({dim},), got {state.shape}")
    total = 0.0
    for sec, block in zip(
        block_hamiltonian.sector_basis.sectors, block_hamiltonian.blocks
    ):
        amp = state[sec.basis_indices]
        total += float(np.real(np.vdot(amp, block @ amp)))
    return total
