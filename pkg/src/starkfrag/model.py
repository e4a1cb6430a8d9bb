"""Hamiltonians of the driven tilted chain.

The static model is

    H0 = H_hop + U sum_j n_j n_{j+1} - g sum_j j n_j,
    H_hop = J sum_{j=0}^{L-2} (c^dag_j c_{j+1} + h.c.),

and the drive adds u cos(omega t) * H_hop.  Nearest-neighbour hops of
spinless fermions carry no string sign, so everything lives directly on
occupation bitmasks.

A hop across bond (j, j+1) changes the diagonal energy by an amount fixed
by the two adjacent sites: moving a particle rightwards costs
-g + U (n_{j+2} - n_{j-1}) with out-of-range occupations read as zero.
That splits the hopping into three projected channels, keyed here by their
energy cost at the resonant point U = g:

    "0"  : n_{j+2} (1 - n_{j-1})        cost |U - g|  -> 0
    "g"  : 1 - (n_{j-1} - n_{j+2})^2    cost g
    "2g" : n_{j-1} (1 - n_{j+2})        cost U + g    -> 2g

The effective Hamiltonians of the slow/resonantly driven chain and the
first-order stroboscopic Hamiltonian are assembled from these channels.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .basis import SectorBasis
from .ops import SparseOperator

CHANNELS = ("0", "g", "2g")

EFFECTIVE_KINDS = ("eff-u0", "eff-omega1", "eff-omega2", "eff-omega2-full")

HAMILTONIAN_TAGS = ("static",) + EFFECTIVE_KINDS + ("hf1", "hf1-general")

# relative detuning below which a drive denominator counts as resonant,
# and the window in which we warn about a near-resonance instead
RESONANCE_RTOL = 1e-9
NEAR_RESONANCE_RTOL = 1e-6


@dataclass(frozen=True)
class ModelParams:
    """Chain and drive parameters; hbar = 1 and J sets the energy unit."""

    L: int
    J: float = 1.0
    U: float = 1.0
    g: float = 1.0
    u: float = 0.0
    omega: float | None = None
    N: int | None = None

    def __post_init__(self):
        if self.L < 2:
            raise ValueError(f"need at least two sites, got L={self.L}")
        n = self.L // 2 if self.N is None else self.N
        if not 0 <= n <= self.L:
            raise ValueError(f"particle number N={n} outside 0..{self.L}")
        object.__setattr__(self, "N", n)
        if self.omega is not None and self.omega <= 0:
            raise ValueError(f"drive frequency must be positive, got {self.omega}")

    @property
    def period(self) -> float:
        if self.omega is None:
            raise ValueError("no drive frequency set")
        return 2.0 * np.pi / self.omega

    def with_omega(self, omega: float) -> "ModelParams":
        return replace(self, omega=omega)

    def sector(self) -> SectorBasis:
        return SectorBasis(self.L, self.N)


@dataclass
class DirectedChannel:
    """Rightward hop elements of one channel: target t[i] <- source s[i].

    ``delta`` is the diagonal energy *drop* of the rightward move,
    E(source) - E(target); the reverse hops raise the energy by the same
    amount.
    """

    key: str
    delta: float
    targets: np.ndarray
    sources: np.ndarray


def directed_channels(p: ModelParams, b: SectorBasis) -> list[DirectedChannel]:
    """Classify every allowed rightward hop of the sector by channel."""
    if b.L != p.L or b.N != p.N:
        raise ValueError(f"basis {b} does not match params L={p.L}, N={p.N}")
    occ = b.occupations
    L = b.L
    deltas = {"0": p.g - p.U, "g": p.g, "2g": p.g + p.U}
    parts = {k: ([], []) for k in CHANNELS}
    for j in range(L - 1):
        movable = (occ[:, j] == 1) & (occ[:, j + 1] == 0)
        if not movable.any():
            continue
        left = occ[:, j - 1] if j > 0 else np.zeros(b.dim, np.uint8)
        right = occ[:, j + 2] if j + 2 < L else np.zeros(b.dim, np.uint8)
        key_arr = np.where(left == right, "g", np.where(right == 1, "0", "2g"))
        flip = np.int64(0b11) << j
        for k in CHANNELS:
            src = np.flatnonzero(movable & (key_arr == k))
            if len(src):
                tgt_states = b.states[src] ^ flip
                tgt = np.searchsorted(b.states, tgt_states)
                parts[k][0].append(tgt)
                parts[k][1].append(src)
    out = []
    for k in CHANNELS:
        tg, sr = parts[k]
        tg = np.concatenate(tg) if tg else np.empty(0, np.int64)
        sr = np.concatenate(sr) if sr else np.empty(0, np.int64)
        out.append(DirectedChannel(key=k, delta=deltas[k], targets=tg, sources=sr))
    return out


def _csr_from_hops(dim, targets, sources, amplitude=1.0):
    vals = np.full(len(targets), amplitude, dtype=np.complex128)
    m = sp.coo_matrix((vals, (targets, sources)), shape=(dim, dim)).tocsr()
    m.sort_indices()
    return m


def build_channel(p: ModelParams, b: SectorBasis, which: str) -> SparseOperator:
    """Symmetric unit-amplitude hop operator of one channel."""
    if which not in CHANNELS:
        raise ValueError(f"unknown channel {which!r}, expected one of {CHANNELS}")
    ch = {c.key: c for c in directed_channels(p, b)}[which]
    m = _csr_from_hops(b.dim, ch.targets, ch.sources)
    m = (m + m.T).tocsr()
    m.sort_indices()
    return SparseOperator(m, hermitian=True)


def build_hopping(p: ModelParams, b: SectorBasis) -> SparseOperator:
    """The bare hop term H_hop = J * sum of all three channels."""
    chans = directed_channels(p, b)
    tg = np.concatenate([c.targets for c in chans])
    sr = np.concatenate([c.sources for c in chans])
    m = _csr_from_hops(b.dim, tg, sr, p.J)
    m = (m + m.getH()).tocsr()
    m.sort_indices()
    return SparseOperator(m, hermitian=True)


def build_diagonal(p: ModelParams, b: SectorBasis) -> SparseOperator:
    return SparseOperator(
        sp.diags(b.stark_energies(p.U, p.g)).tocsr().astype(np.complex128),
        hermitian=True,
    )


def build_H0(p: ModelParams, b: SectorBasis) -> SparseOperator:
    """Static Hamiltonian: hopping + interaction + tilt."""
    hop = build_hopping(p, b)
    m = (hop.matrix + sp.diags(b.stark_energies(p.U, p.g))).tocsr()
    m.sort_indices()
    return SparseOperator(m, hermitian=True)


def parity_diagonal(b: SectorBasis) -> np.ndarray:
    """(-1)**E_hat per basis state."""
    return np.where(b.charges & 1, -1.0, 1.0)


def fold_quasienergy(E: np.ndarray, omega: float) -> np.ndarray:
    """Fold energies into the symmetric window (-omega/2, omega/2]."""
    E = np.asarray(E, dtype=float)
    return E - omega * np.ceil(E / omega - 0.5)


def _require_resonant_U(p: ModelParams, kind: str):
    if p.U != p.g:
        raise ValueError(f"{kind} is defined at the resonant point U = g, got U={p.U}, g={p.g}")


def build_effective(p: ModelParams, b: SectorBasis, kind: str) -> SparseOperator:
    """Effective Hamiltonians of the slow (u=0) and resonantly driven chain.

    kinds: "eff-u0"          J * channel 0
           "eff-omega1"      J * channel 0 + (uJ/2) * channel g
           "eff-omega2"      J * channel 0 + (uJ/2) * channel 2g
           "eff-omega2-full" adds the parity diagonal and the imaginary
                             channel-g current term of the omega = 2g limit
    """
    if kind not in EFFECTIVE_KINDS:
        raise ValueError(f"unknown effective kind {kind!r}, expected one of {EFFECTIVE_KINDS}")
    _require_resonant_U(p, kind)
    chans = {c.key: c for c in directed_channels(p, b)}
    terms = []

    def sym(ch, amp):
        m = _csr_from_hops(b.dim, ch.targets, ch.sources, amp)
        return m + m.getH()

    terms.append(sym(chans["0"], p.J))
    if kind == "eff-omega1":
        terms.append(sym(chans["g"], 0.5 * p.u * p.J))
    elif kind in ("eff-omega2", "eff-omega2-full"):
        terms.append(sym(chans["2g"], 0.5 * p.u * p.J))
    if kind == "eff-omega2-full":
        # exact omega = 2g coefficient of the period-averaged g-channel:
        # -2iJ(3-u)/(3 pi) on the rightward direction, h.c. on the reverse
        amp = -2j * p.J * (3.0 - p.u) / (3.0 * np.pi)
        m = _csr_from_hops(b.dim, chans["g"].targets, chans["g"].sources, amp)
        terms.append(m + m.getH())
        terms.append(sp.diags(0.5 * p.g * (1.0 - parity_diagonal(b))).astype(np.complex128))
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    total = total.tocsr()
    total.sort_indices()
    return SparseOperator(total, hermitian=True)


def _interval_average(x: float, T: float):
    """(1/T) * integral_0^T exp(-i x t) dt, safe through x -> 0."""
    a = x * T
    if abs(a) < 1e-8:
        return 1.0 - 0.5j * a - a * a / 6.0
    return (np.exp(-1j * a) - 1.0) / (-1j * a)


def drive_averaged_amplitude(delta: float, p: ModelParams) -> complex:
    """Period average of J (1 + u cos(omega t)) e^{-i delta t}.

    This is the first-order stroboscopic amplitude of a hop whose diagonal
    energy drops by ``delta``.  The three Fourier components resonate when
    delta is 0 or +-omega; the crossover is handled smoothly, with a
    warning in the near-resonant window where the detuned form loses
    accuracy.
    """
    omega = p.omega
    T = p.period
    for q in (-1, 0, 1):
        det = abs(delta - q * omega)
        if RESONANCE_RTOL * omega < det < NEAR_RESONANCE_RTOL * omega:
            warnings.warn(
                f"hop with energy drop {delta:g} is nearly resonant with "
                f"{q} quanta of omega={omega:g} (relative detuning {det / omega:.1e})",
                stacklevel=2,
            )
    return p.J * (
        _interval_average(delta, T)
        + 0.5 * p.u * _interval_average(delta - omega, T)
        + 0.5 * p.u * _interval_average(delta + omega, T)
    )


def build_HF1(p: ModelParams, b: SectorBasis, general_U: bool = False) -> SparseOperator:
    """First-order Floquet Hamiltonian at drive frequency p.omega.

    Diagonal: the static energies folded into (-omega/2, omega/2].
    Hops: each directed channel weighted by its drive-averaged amplitude.
    At omega = g or 2g this reduces to the resonant effective Hamiltonians;
    at omega = g/q (integer q >= 2) the drive decouples and only the
    resonant channel plus the folded diagonal survive.
    """
    if p.omega is None:
        raise ValueError("build_HF1 needs a drive frequency (params.omega)")
    if not general_U:
        _require_resonant_U(p, "hf1")
    diag = fold_quasienergy(b.stark_energies(p.U, p.g), p.omega)
    total = sp.diags(diag).astype(np.complex128).tocsr()
    for ch in directed_channels(p, b):
        amp = drive_averaged_amplitude(ch.delta, p)
        m = _csr_from_hops(b.dim, ch.targets, ch.sources, amp)
        total = total + m + m.getH()
    total = total.tocsr()
    total.sort_indices()
    return SparseOperator(total, hermitian=True)


def build_hamiltonian(p: ModelParams, b: SectorBasis, tag: str) -> SparseOperator:
    """Dispatch on the Hamiltonian tags used by the CLI."""
    if tag == "static":
        return build_H0(p, b)
    if tag in EFFECTIVE_KINDS:
        return build_effective(p, b, tag)
    if tag == "hf1":
        return build_HF1(p, b)
    if tag == "hf1-general":
        return build_HF1(p, b, general_U=True)
    raise ValueError(f"unknown hamiltonian tag {tag!r}, expected one of {HAMILTONIAN_TAGS}")
