"""Occupation-number basis for spinless fermions on an open chain.

Conventions used throughout the package:

* A Fock state is an integer bitmask.  Bit ``j`` (value ``1 << j``) is the
  occupation of site ``j``, with sites numbered ``0 .. L-1`` from the left
  edge.  The string form writes site 0 first, so ``"0101"`` occupies sites
  1 and 3.
* The tilt assigns energy ``-g * j`` to a particle on site ``j`` and the
  interaction ``U`` acts on nearest-neighbour pairs, so the diagonal energy
  of a Fock state is ``U * pairs - g * sum_j j n_j``.
* ``charge_E`` is the dimensionless combination
  ``E_hat = -sum_j j n_j + sum_j n_j n_{j+1}``; at the resonant point
  ``U = g`` the diagonal energy is exactly ``g * E_hat``.

Sector enumeration is restricted to fixed particle number.  States are kept
sorted ascending as integers, which fixes the basis index order everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np


def state_from_string(bits: str) -> int:
    """Parse a bitstring written site-0-first into a state mask."""
    if not bits or any(c not in "01" for c in bits):
        raise ValueError(f"not a bitstring: {bits!r}")
    return int(bits[::-1], 2)


def state_to_string(s: int, L: int) -> str:
    if s < 0 or s >> L:
        raise ValueError(f"state {s} does not fit in {L} sites")
    return format(s, f"0{L}b")[::-1]


def reflect(s: int, L: int) -> int:
    """Mirror a state about the chain centre (site j -> L-1-j)."""
    if s < 0 or s >> L:
        raise ValueError(f"state {s} does not fit in {L} sites")
    r = 0
    for j in range(L):
        if s >> j & 1:
            r |= 1 << (L - 1 - j)
    return r


def weighted_occupation(s: int, L: int) -> int:
    """sum_j j * n_j with 0-based site weights."""
    return sum(j for j in range(L) if s >> j & 1)


def pair_count(s: int, L: int) -> int:
    """Number of occupied nearest-neighbour pairs."""
    return (s & s >> 1 & ((1 << (L - 1)) - 1)).bit_count()


def stark_energy(s: int, L: int, U: float, g: float) -> float:
    """Diagonal energy U * pairs - g * sum_j j n_j of a Fock state."""
    return U * pair_count(s, L) - g * weighted_occupation(s, L)


def charge_E(s: int, L: int) -> int:
    """Dimensionless charge E_hat = -sum_j j n_j + sum_j n_j n_{j+1}.

    At U = g the diagonal energy is g * E_hat, so E_hat labels the
    resonant energy groups.
    """
    return -weighted_occupation(s, L) + pair_count(s, L)


def parity_E(s: int, L: int) -> int:
    """Parity (-1)**E_hat of the charge quantum number."""
    return -1 if charge_E(s, L) & 1 else 1


def cdw_states(L: int) -> tuple[int, int]:
    """The two charge-density-wave states (|0101...>, |1010...>)."""
    if L % 2:
        raise ValueError(f"CDW states need even L, got {L}")
    cdw2 = state_from_string("10" * (L // 2))
    cdw1 = state_from_string("01" * (L // 2))
    return cdw1, cdw2


def _half(L: int) -> int:
    if L % 2 or L < 4:
        raise ValueError(f"named half-filling states need even L >= 4, got {L}")
    return L // 2


def left_packed_state(L: int) -> int:
    """|1...10...0>: the left-packed domain, alone at the top charge value."""
    N = _half(L)
    return state_from_string("1" * N + "0" * N)


def domain_wall_state(L: int) -> int:
    """|0...01...1>, the right-packed domain with a single wall."""
    N = _half(L)
    return state_from_string("0" * N + "1" * N)


def domain_wall_partner(L: int) -> int:
    """The unique state the right-packed domain couples to resonantly."""
    N = _half(L)
    return state_from_string("0" * (N - 1) + "10" + "1" * (N - 1))


def frozen_example_state(L: int) -> int:
    """|1..1010..0> with N-1 packed particles and one detached: inert under
    the resonant channel."""
    N = _half(L)
    return state_from_string("1" * (N - 1) + "01" + "0" * (N - 1))


class SectorBasis:
    """Fixed particle-number sector of the L-site chain.

    States are stored sorted ascending; ``index`` inverts the enumeration.
    """

    def __init__(self, L: int, N: int):
        if L < 1:
            raise ValueError(f"need at least one site, got L={L}")
        if not 0 <= N <= L:
            raise ValueError(f"particle number N={N} outside 0..{L}")
        self.L = L
        self.N = N
        self.dim = math.comb(L, N)
        self.states = np.empty(self.dim, dtype=np.int64)
        # Gosper's hack walks the N-bit subsets in increasing order.
        s = (1 << N) - 1
        for i in range(self.dim):
            self.states[i] = s
            if i + 1 < self.dim:
                c = s & -s
                r = s + c
                s = (((r ^ s) >> 2) // c) | r

    def __repr__(self) -> str:
        return f"SectorBasis(L={self.L}, N={self.N}, dim={self.dim})"

    def index(self, s: int) -> int:
        """Basis index of a state mask; raises if outside the sector."""
        i = int(np.searchsorted(self.states, s))
        if i == self.dim or self.states[i] != s:
            raise ValueError(
                f"state {state_to_string(s, self.L) if 0 <= s < (1 << self.L) else s} "
                f"not in sector (L={self.L}, N={self.N})"
            )
        return i

    @cached_property
    def occupations(self) -> np.ndarray:
        """(dim, L) uint8 array of site occupations."""
        occ = np.empty((self.dim, self.L), dtype=np.uint8)
        for j in range(self.L):
            occ[:, j] = (self.states >> j) & 1
        return occ

    @cached_property
    def charges(self) -> np.ndarray:
        """charge_E of every basis state."""
        sites = np.arange(self.L, dtype=np.int64)
        occ = self.occupations.astype(np.int64)
        pairs = np.sum(occ[:, :-1] & occ[:, 1:], axis=1) if self.L > 1 else np.zeros(self.dim, np.int64)
        return -occ @ sites + pairs

    def stark_energies(self, U: float, g: float) -> np.ndarray:
        sites = np.arange(self.L, dtype=np.float64)
        occ = self.occupations.astype(np.float64)
        pairs = np.sum(occ[:, :-1] * occ[:, 1:], axis=1) if self.L > 1 else np.zeros(self.dim)
        return U * pairs - g * (occ @ sites)

    def reflect_indices(self) -> np.ndarray:
        """Permutation p with p[i] = index of the mirrored i-th state."""
        perm = np.empty(self.dim, dtype=np.int64)
        for i, s in enumerate(self.states):
            perm[i] = self.index(reflect(int(s), self.L))
        return perm


@dataclass
class EnergyGroup:
    """One resonant energy group S_q: all states with charge_E = E0 + q."""

    q: int
    charge: int
    size: int
    indices: np.ndarray


def sector_quantum_numbers(basis: SectorBasis) -> list[EnergyGroup]:
    """Group the sector by charge_E, labelled by the offset q from the bottom.

    For half filling (N = L/2, N >= 3) the bottom of the spectrum sits at
    E0 = -3N(N-1)/2 - 1 and the occupied offsets are q = 0..N^2-2 and N^2;
    the value N^2 - 1 is never realised.
    """
    charges = basis.charges
    e0 = int(charges.min())
    groups = []
    for c in sorted(set(int(x) for x in charges)):
        idx = np.flatnonzero(charges == c)
        groups.append(EnergyGroup(q=c - e0, charge=c, size=len(idx), indices=idx))
    return groups


def basis_table_rows(basis: SectorBasis, U: float, g: float):
    """Yield (index, bitstring, charge_E, parity, stark_energy) per state."""
    energies = basis.stark_energies(U, g)
    charges = basis.charges
    for i in range(basis.dim):
        s = int(basis.states[i])
        c = int(charges[i])
        yield i, state_to_string(s, basis.L), c, (-1 if c & 1 else 1), float(energies[i])


def write_basis_csv(basis: SectorBasis, U: float, g: float, path) -> None:
    """Dump the sector table as CSV: index,state,charge,parity,energy."""
    with open(path, "w") as fh:
        fh.write("index,state,charge,parity,energy\n")
        for i, bits, c, p, e in basis_table_rows(basis, U, g):
            fh.write(f"{i},{bits},{c},{p},{e:.12g}\n")
