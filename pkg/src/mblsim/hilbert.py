"""Magnetization-sector bookkeeping for a spin-1/2 chain.

Basis states are integers in [0, 2**n_sites).  Bit i of a basis integer holds
site i, and a set bit means spin-up, so site 0 sits at the least significant
bit.  Magnetization is stored as 2*S^z_total = (#up - #down); keeping the
factor of two makes it an integer for every chain length.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Dense per-sector storage beyond 16 sites is not practical on one node.
MAX_SITES = 16


@dataclass(frozen=True)
class Sector:
    """One magnetization block: the ascending basis integers with fixed 2*S^z."""

    magnetization: int
    basis_indices: np.ndarray

    @property
    def dimension(self) -> int:
        return len(self.basis_indices)


@dataclass(frozen=True)
class SectorBasis:
    """All magnetization sectors of a chain, ordered by ascending magnetization."""

    chain_length: int
    sectors: tuple[Sector, ...]

    def sector(self, magnetization: int) -> Sector:
        for sec in self.sectors:
            if sec.magnetization == magnetization:
                return sec
        raise KeyError(f"no sector with magnetization {magnetization}")


def enumerate_sectors(n_sites: int) -> SectorBasis:
    """Split the full basis [0, 2**n_sites) into total-S^z sectors.

    Sectors are returned in ascending magnetization order and each carries its
    basis integers in ascending order, so concatenating them is a permutation
    of the full basis.
    """
    if not isinstance(n_sites, (int, np.integer)):
        raise TypeError("n_sites must be an integer")
    if not 1 <= n_sites <= MAX_SITES:
        raise ValueError(f"n_sites must be in [1, {MAX_SITES}], got {n_sites}")
    states = np.arange(2**n_sites, dtype=np.int64)
    mags = 2 * np.bitwise_count(states).astype(np.int64) - n_sites
    sectors = tuple(
        Sector(int(m), states[mags == m])
        for m in range(-n_sites, n_sites + 1, 2)
    )
    return SectorBasis(int(n_sites), sectors)


def sector_of(basis_index: int, n_sites: int) -> int:
    """Magnetization 2*S^z of one basis integer."""
    if not 1 <= n_sites <= MAX_SITES:
        raise ValueError(f"n_sites must be in [1, {MAX_SITES}], got {n_sites}")
    if not 0 <= basis_index < 2**n_sites:
        raise ValueError(
            f"basis_index {basis_index} outside [0, 2**{n_sites})"
        )
    return 2 * int(basis_index).bit_count() - int(n_sites)
