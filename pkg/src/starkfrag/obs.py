"""Scalar diagnostics of state vectors: entanglement, densities, correlations.

Entanglement entropies are computed blockwise: within a fixed-N sector
the left-half particle number labels disjoint Schmidt blocks, so the
reduced density matrix never has to be materialised -- each block is a
small d_A x d_B amplitude matrix whose singular values are the Schmidt
coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .basis import SectorBasis
from .floquet import PropagatorConfig, evolve_static, evolve_stroboscopic
from .model import ModelParams

NORM_TOL = 1e-8


@dataclass
class _Block:
    n_A: int
    indices: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    shape: tuple


class BipartitionPlan:
    """Schmidt-block layout of a sector for a cut after site ``cut``-1.

    Subsystem A is the left part, sites 0..cut-1.
    """

    def __init__(self, b: SectorBasis, cut: int | None = None):
        cut = b.L // 2 if cut is None else cut
        if not 0 < cut < b.L:
            raise ValueError(f"cut must split the chain, got {cut} for L={b.L}")
        self.L, self.N, self.cut, self.dim = b.L, b.N, cut, b.dim
        mask = (1 << cut) - 1
        left = b.states & mask
        right = b.states >> cut
        n_A = b.occupations[:, :cut].sum(axis=1).astype(np.int64)
        self.blocks = []
        for nA in np.unique(n_A):
            sel = np.nonzero(n_A == nA)[0]
            ul, rows = np.unique(left[sel], return_inverse=True)
            ur, cols = np.unique(right[sel], return_inverse=True)
            assert len(ul) == math.comb(cut, int(nA))
            assert len(ur) == math.comb(b.L - cut, b.N - int(nA))
            self.blocks.append(
                _Block(int(nA), sel, rows, cols, (len(ul), len(ur)))
            )
        assert sum(blk.shape[0] * blk.shape[1] for blk in self.blocks) == b.dim


def entanglement_entropy(v, plan: BipartitionPlan) -> float:
    """Half-chain von Neumann entropy -sum lam^2 ln lam^2 of a unit vector."""
    v = np.asarray(v)
    if v.shape != (plan.dim,):
        raise ValueError(f"state length {v.shape} != sector dimension {plan.dim}")
    nrm = np.linalg.norm(v)
    if abs(nrm - 1.0) > NORM_TOL:
        raise ValueError(f"entanglement entropy needs a unit vector, got norm {nrm:.6g}")
    S = 0.0
    for blk in plan.blocks:
        M = np.zeros(blk.shape, dtype=np.complex128)
        M[blk.rows, blk.cols] = v[blk.indices]
        lam2 = np.linalg.svd(M, compute_uv=False) ** 2
        lam2 = lam2[lam2 > 0.0]
        S -= float(np.sum(lam2 * np.log(lam2)))
    return max(S, 0.0)


def page_value_sector(L: int, N: int, cut: int | None = None) -> float:
    """Closed-form sector Page value (as printed):
    S_p = -sum_{n_A} [d_A d_B / D] ln(d_B / D) - 1/2."""
    cut = L // 2 if cut is None else cut
    D = math.comb(L, N)
    acc = 0.0
    for nA in range(N + 1):
        dA = math.comb(cut, nA) if nA <= cut else 0
        dB = math.comb(L - cut, N - nA) if N - nA <= L - cut else 0
        if dA * dB:
            acc -= dA * dB / D * math.log(dB / D)
    return acc - 0.5


def random_canonical_state(b: SectorBasis, indices, rng) -> np.ndarray:
    """Real-Gaussian superposition over one component's basis states."""
    indices = np.asarray(indices)
    z = rng.normal(size=len(indices))
    v = np.zeros(b.dim, dtype=np.complex128)
    v[indices] = z / np.linalg.norm(z)
    return v


def page_value_component(
    b: SectorBasis,
    indices,
    plan: BipartitionPlan | None = None,
    samples: int | None = None,
    seed: int = 0,
) -> tuple[float, float]:
    """(mean, stderr) entropy of random canonical states in a component.

    Default sample count is the component dimension.
    """
    plan = plan or BipartitionPlan(b)
    indices = np.asarray(indices)
    if samples is None:
        samples = len(indices)
    if samples < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    vals = np.array(
        [
            entanglement_entropy(random_canonical_state(b, indices, rng), plan)
            for _ in range(samples)
        ]
    )
    err = float(vals.std(ddof=1) / np.sqrt(samples)) if samples > 1 else 0.0
    return float(vals.mean()), err


def random_infinite_temperature_state(b: SectorBasis, seed: int) -> np.ndarray:
    """Complex-Gaussian unit vector spread over the whole sector."""
    rng = np.random.default_rng(seed)
    v = rng.normal(size=b.dim) + 1j * rng.normal(size=b.dim)
    return v / np.linalg.norm(v)


# -- pointwise diagnostics -------------------------------------------------


def densities(v, b: SectorBasis) -> np.ndarray:
    """n_j = <v|n_j|v> per site."""
    v = np.asarray(v)
    if v.shape != (b.dim,):
        raise ValueError(f"state length {v.shape} != sector dimension {b.dim}")
    return np.abs(v) ** 2 @ b.occupations


def fidelity(v, ref) -> float:
    """|<ref|v>|^2."""
    v, ref = np.asarray(v), np.asarray(ref)
    if v.shape != ref.shape:
        raise ValueError("state vectors differ in length")
    return float(np.abs(np.vdot(ref, v)) ** 2)


def transfer(v, target) -> float:
    """|<target|v>|^2 -- same overlap, named for the receiving state."""
    return fidelity(v, target)


# -- time series -----------------------------------------------------------


@dataclass
class TimeSeries:
    points: np.ndarray
    values: np.ndarray
    label: str = "value"
    point_name: str = "k"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.points.shape != self.values.shape:
            raise ValueError("points and values differ in length")
        if len(self.points) > 1 and not (np.diff(self.points) > 0).all():
            raise ValueError("sample points must be strictly increasing")

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(f"{self.point_name},value\n")
            for t, val in zip(self.points, self.values):
                fh.write(f"{t:.12g},{val:.12g}\n")


def saturated_average(series: TimeSeries, window) -> float:
    """Mean of the series over points in [window[0], window[1]]."""
    lo, hi = window
    sel = (series.points >= lo) & (series.points <= hi)
    if not sel.any():
        raise ValueError(f"no samples inside window [{lo}, {hi}]")
    return float(series.values[sel].mean())


def oscillation_period(series: TimeSeries) -> float:
    """Period from interpolated zero crossings of the centred series."""
    t, y = series.points, series.values - series.values.mean()
    s = np.sign(y)
    idx = np.nonzero(s[:-1] * s[1:] < 0)[0]
    if len(idx) < 3:
        raise ValueError("too few oscillations to estimate a period")
    tc = t[idx] - y[idx] * (t[idx + 1] - t[idx]) / (y[idx + 1] - y[idx])
    return float(2.0 * (tc[-1] - tc[0]) / (len(tc) - 1))


# -- autocorrelation -------------------------------------------------------


def _deviation(b: SectorBasis, j: int) -> np.ndarray:
    if not 0 <= j < b.L:
        raise ValueError(f"site {j} outside 0..{b.L - 1}")
    return b.occupations[:, j].astype(np.float64) - 0.5


def _autocorr_series(samples, dev, label, point_name):
    pts, vals, max_imag = [], [], 0.0
    for t, pair in samples:
        c = np.vdot(pair[:, 0], dev * pair[:, 1])
        pts.append(t)
        vals.append(c.real)
        max_imag = max(max_imag, abs(c.imag))
    return TimeSeries(
        np.array(pts), np.array(vals), label=label, point_name=point_name,
        meta={"max_imag": max_imag},
    )


def autocorrelation_driven(
    p: ModelParams,
    b: SectorBasis,
    j: int,
    psi,
    sample_cycles,
    cfg: PropagatorConfig | None = None,
) -> TimeSeries:
    """Stroboscopic C_j(kT) = Re<a(kT)|(n_j-1/2)|b(kT)> with
    a(0) = psi and b(0) = (n_j-1/2) psi, propagated together."""
    dev = _deviation(b, j)
    psi = np.asarray(psi, dtype=np.complex128)
    pair = np.stack([psi, dev * psi], axis=1)
    cycles = max(int(k) for k in sample_cycles)
    samples = evolve_stroboscopic(p, b, pair, cycles, sample_cycles, cfg)
    return _autocorr_series(samples, dev, f"C_{j}", "k")


def autocorrelation_static(
    p: ModelParams,
    b: SectorBasis,
    j: int,
    psi,
    times,
    cfg: PropagatorConfig | None = None,
) -> TimeSeries:
    """Continuous-time C_j(t) under the undriven Hamiltonian."""
    dev = _deviation(b, j)
    psi = np.asarray(psi, dtype=np.complex128)
    pair = np.stack([psi, dev * psi], axis=1)
    samples = evolve_static(p, b, pair, times, cfg)
    return _autocorr_series(samples, dev, f"C_{j}", "t")
