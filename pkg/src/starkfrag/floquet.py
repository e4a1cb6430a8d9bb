"""One-period and stroboscopic propagation of the driven chain.

The time-dependent Hamiltonian H(t) = H0 + u cos(omega t) H_hop is
integrated in the rotating frame of its diagonal: with D the interaction
plus tilt diagonal, the frame Hamiltonian

    H_I(t) = sum_channels J (1 + u cos omega t)
             [ e^{-i delta_c t} R_c + e^{+i delta_c t} R_c^dag ]

has a norm of order J instead of g*L, so the large tilt never enters a
matrix exponential -- it returns as an exact phase factor e^{-iDT} at the
end of each period.  R_c are the rightward hop matrices of the three
channels and delta_c their diagonal energy drops.

Substep schemes:

* "midpoint-exponential": one exponential per substep whose generator is
  the exact time integral of H_I over the substep (the drive moments are
  elementary integrals), accurate to second order in the substep length.
* "cf4": the fourth-order commutator-free scheme -- two exponentials per
  substep built from H_I at the two Gauss nodes.

Exponentials act on states through a short Taylor series; generators are
anti-hermitian with norm ~ J*dt, so a handful of terms reaches roundoff.
Substep counts double until one full period reproduces itself to
``convergence_tol``; exceeding ``max_substeps`` is a numeric error.

Below ``dense_dim_max`` the one-period operator is materialised by pushing
an identity block through the same stepper, after which a cycle costs one
dense matvec.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .basis import SectorBasis
from .model import ModelParams, build_H0, directed_channels, drive_averaged_amplitude
from .ops import DENSE_DIM_MAX, NumericError, SparseOperator, expm_multiply

SCHEMES = ("midpoint-exponential", "cf4")

_SQRT3 = np.sqrt(3.0)
# Gauss nodes on (0, 1) and the two-exponential weights of the cf4 scheme
_CF4_NODES = (0.5 - _SQRT3 / 6.0, 0.5 + _SQRT3 / 6.0)
_CF4_W1 = 0.25 + _SQRT3 / 6.0
_CF4_W2 = 0.25 - _SQRT3 / 6.0


@dataclass
class PropagatorConfig:
    substeps: int = 64
    scheme: str = "midpoint-exponential"
    prop_tol: float = 1e-9
    convergence_tol: float = 1e-8
    max_substeps: int = 1 << 14
    dense_dim_max: int = DENSE_DIM_MAX
    auto_converge: bool = True

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}, expected one of {SCHEMES}")
        if self.substeps < 1 or self.max_substeps < self.substeps:
            raise ValueError(
                f"bad substep range: {self.substeps}..{self.max_substeps}"
            )
        if self.prop_tol <= 0 or self.convergence_tol <= 0:
            raise ValueError("tolerances must be positive")


def _segment_integral(a: float, t0: float, dt: float) -> complex:
    """integral_{t0}^{t0+dt} e^{-i a tau} d tau, smooth through a = 0."""
    return dt * np.exp(-1j * a * (t0 + 0.5 * dt)) * np.sinc(a * dt / (2.0 * np.pi))


class DrivePropagator:
    """Shared stepping kernel for one sector and parameter set.

    The union of all directed hop elements is stored once as a CSR pattern;
    every substep only rewrites the value array with channel-wise phase
    coefficients, so stepping never rebuilds sparsity.
    """

    def __init__(self, p: ModelParams, b: SectorBasis):
        self.p = p
        self.b = b
        self.energies = b.stark_energies(p.U, p.g)
        chans = directed_channels(p, b)
        rows = [c.targets for c in chans] + [c.sources for c in chans]
        cols = [c.sources for c in chans] + [c.targets for c in chans]
        # group order: rightward per channel, then leftward per channel
        self.deltas = np.array([c.delta for c in chans])
        sizes = [len(c.targets) for c in chans] * 2
        rows = np.concatenate(rows) if rows else np.empty(0, np.int64)
        cols = np.concatenate(cols) if cols else np.empty(0, np.int64)
        order = np.lexsort((cols, rows))
        starts = np.cumsum([0] + sizes)
        inv = np.empty_like(order)
        inv[order] = np.arange(len(order))
        self.group_pos = [
            inv[starts[i]: starts[i + 1]] for i in range(len(sizes))
        ]
        data = np.zeros(len(order), dtype=np.complex128)
        m = sp.csr_matrix(
            (data, (rows[order], cols[order])), shape=(b.dim, b.dim)
        )
        m.sort_indices()
        self.matrix = m
        self.nchan = len(chans)

    # -- generator coefficients ------------------------------------------

    def _drive_moment(self, delta: float, t0: float, dt: float) -> complex:
        """integral of (1 + u cos omega t) e^{-i delta t} over the substep."""
        p = self.p
        out = _segment_integral(delta, t0, dt)
        if p.u:
            out += 0.5 * p.u * (
                _segment_integral(delta - p.omega, t0, dt)
                + _segment_integral(delta + p.omega, t0, dt)
            )
        return out

    def _load_generator(self, herm_right):
        """Load the anti-hermitian generator -i * H from the rightward
        coefficients of the hermitian H (leftward entries are conjugates)."""
        data = self.matrix.data
        for i in range(self.nchan):
            data[self.group_pos[i]] = -1j * herm_right[i]
            data[self.group_pos[i + self.nchan]] = -1j * np.conj(herm_right[i])

    def _apply_exponential(self, v, tol):
        """exp(matrix) @ v by Taylor; the loaded generator is anti-hermitian."""
        w = v.copy()
        term = v
        for k in range(1, 60):
            term = self.matrix @ term * (1.0 / k)
            w += term
            if np.linalg.norm(term) <= tol * np.linalg.norm(w):
                return w
        raise NumericError("substep exponential did not converge; generator too large")

    def _substep(self, v, t0, dt, scheme, tol):
        J = self.p.J
        if scheme == "midpoint-exponential":
            self._load_generator([J * self._drive_moment(d, t0, dt) for d in self.deltas])
            return self._apply_exponential(v, tol)
        # cf4: two exponentials from the Gauss-node Hamiltonians
        p = self.p
        taus = [t0 + c * dt for c in _CF4_NODES]
        drive = [
            1.0 + (p.u * np.cos(p.omega * tau) if p.u else 0.0) for tau in taus
        ]
        node_coeff = [
            [J * drive[i] * np.exp(-1j * d * taus[i]) for d in self.deltas]
            for i in (0, 1)
        ]
        for w1, w2 in ((_CF4_W1, _CF4_W2), (_CF4_W2, _CF4_W1)):
            self._load_generator(
                [dt * (w1 * node_coeff[0][c] + w2 * node_coeff[1][c]) for c in range(self.nchan)]
            )
            v = self._apply_exponential(v, tol)
        return v

    # -- public stepping --------------------------------------------------

    def one_interval(self, v, t0, t1, n, scheme, prop_tol):
        """Rotating-frame propagation over [t0, t1] in n substeps."""
        if t1 == t0:
            return v.copy()
        tol = max(1e-14, 1e-4 * prop_tol)
        dt = (t1 - t0) / n
        w = np.array(v, dtype=np.complex128, copy=True)
        for k in range(n):
            w = self._substep(w, t0 + k * dt, dt, scheme, tol)
        return w

    def one_period(self, v, n, scheme, prop_tol):
        """Lab-frame one-period map: rotating-frame interval + diagonal phase."""
        w = self.one_interval(v, 0.0, self.p.period, n, scheme, prop_tol)
        phases = np.exp(-1j * self.energies * self.p.period)
        return w * phases if w.ndim == 1 else w * phases[:, None]

    def lab_phases(self, t: float) -> np.ndarray:
        return np.exp(-1j * self.energies * t)


def _converged_substeps(prop, probe, cfg, t0=None, t1=None):
    """Double substeps until one pass reproduces itself to convergence_tol."""
    interval = t1 is not None

    def run(n):
        if interval:
            return prop.one_interval(probe, t0, t1, n, cfg.scheme, cfg.prop_tol)
        return prop.one_period(probe, n, cfg.scheme, cfg.prop_tol)

    scale = np.linalg.norm(probe)
    n = cfg.substeps
    w_prev = run(n)
    while 2 * n <= cfg.max_substeps:
        n *= 2
        w = run(n)
        if np.linalg.norm(w - w_prev) <= cfg.convergence_tol * scale:
            return n
        w_prev = w
    raise NumericError(
        f"substep doubling hit the cap {cfg.max_substeps} without reaching "
        f"convergence_tol={cfg.convergence_tol:g}"
    )


def apply_floquet(p: ModelParams, b: SectorBasis, v, cfg: PropagatorConfig | None = None):
    """Propagate a state (or column block) over exactly one drive period."""
    cfg = cfg or PropagatorConfig()
    if p.omega is None:
        raise ValueError("apply_floquet needs a drive frequency (params.omega)")
    v = np.asarray(v, dtype=np.complex128)
    if v.shape[0] != b.dim:
        raise ValueError(f"state length {v.shape[0]} != sector dimension {b.dim}")
    prop = DrivePropagator(p, b)
    n = cfg.substeps
    if cfg.auto_converge:
        probe = v[:, 0] if v.ndim == 2 else v
        n = _converged_substeps(prop, probe, cfg)
    return prop.one_period(v, n, cfg.scheme, cfg.prop_tol)


@dataclass
class FloquetOperator:
    """Dense one-period propagator with build diagnostics."""

    matrix: np.ndarray
    substeps: int
    scheme: str
    unitarity_residual: float


def _unitarity_residual(F, max_probe=1024):
    dim = F.shape[0]
    if dim <= max_probe:
        G = F.conj().T @ F
        return float(np.abs(G - np.eye(dim)).max())
    rng = np.random.default_rng(0)
    X = rng.normal(size=(dim, 16)) + 1j * rng.normal(size=(dim, 16))
    X, _ = np.linalg.qr(X)
    G = (F @ X).conj().T @ (F @ X)
    return float(np.abs(G - np.eye(16)).max())


def floquet_matrix(p: ModelParams, b: SectorBasis, cfg: PropagatorConfig | None = None) -> FloquetOperator:
    """Materialise the one-period propagator (dense path only)."""
    cfg = cfg or PropagatorConfig()
    if b.dim > cfg.dense_dim_max:
        raise ValueError(
            f"dim {b.dim} exceeds dense_dim_max={cfg.dense_dim_max}; stream instead"
        )
    if p.omega is None:
        raise ValueError("floquet_matrix needs a drive frequency (params.omega)")
    prop = DrivePropagator(p, b)
    n = cfg.substeps
    if cfg.auto_converge:
        rng = np.random.default_rng(0)
        probe = rng.normal(size=b.dim) + 1j * rng.normal(size=b.dim)
        probe /= np.linalg.norm(probe)
        n = _converged_substeps(prop, probe, cfg)
    F = prop.one_period(np.eye(b.dim, dtype=np.complex128), n, cfg.scheme, cfg.prop_tol)
    res = _unitarity_residual(F)
    if not np.isfinite(res) or res > 1e-4:
        raise NumericError(f"one-period propagator lost unitarity: residual {res:.2e}")
    return FloquetOperator(matrix=F, substeps=n, scheme=cfg.scheme, unitarity_residual=res)


def _check_samples(sample_at, last):
    ks = sorted(set(int(k) for k in sample_at))
    if ks and (ks[0] < 0 or ks[-1] > last):
        raise ValueError(f"sample cycles outside 0..{last}")
    return ks


def evolve_stroboscopic(p, b, psi0, cycles, sample_at, cfg: PropagatorConfig | None = None):
    """Yield (cycle, state) at the requested cycle numbers.

    psi0 may be a vector or a (dim, m) block of independent initial states;
    yielded arrays are lab-frame copies.
    """
    cfg = cfg or PropagatorConfig()
    psi = np.asarray(psi0, dtype=np.complex128).copy()
    if psi.shape[0] != b.dim:
        raise ValueError(f"state length {psi.shape[0]} != sector dimension {b.dim}")
    ks = _check_samples(sample_at, cycles)
    if not ks:
        return
    want = set(ks)
    if 0 in want:
        yield 0, psi.copy()
    if ks[-1] == 0:
        return
    if b.dim <= cfg.dense_dim_max:
        F = floquet_matrix(p, b, cfg).matrix
        for k in range(1, ks[-1] + 1):
            psi = F @ psi
            if k in want:
                yield k, psi.copy()
        return
    prop = DrivePropagator(p, b)
    n = cfg.substeps
    if cfg.auto_converge:
        probe = psi[:, 0] if psi.ndim == 2 else psi
        n = _converged_substeps(prop, probe, cfg)
    for k in range(1, ks[-1] + 1):
        psi = prop.one_period(psi, n, cfg.scheme, cfg.prop_tol)
        if k in want:
            yield k, psi.copy()


def evolve_static(p, b, psi0, times, cfg: PropagatorConfig | None = None):
    """Yield (t, state) under the undriven Hamiltonian at the given times.

    Below dense_dim_max this is exact through one eigendecomposition; above
    it reuses the rotating-frame stepper with u = 0, calibrating the substep
    density on the first interval.
    """
    cfg = cfg or PropagatorConfig()
    if p.u:
        raise ValueError("evolve_static is the u=0 path; use evolve_stroboscopic")
    psi = np.asarray(psi0, dtype=np.complex128).copy()
    if psi.shape[0] != b.dim:
        raise ValueError(f"state length {psi.shape[0]} != sector dimension {b.dim}")
    times = [float(t) for t in times]
    if times != sorted(times) or (times and times[0] < 0):
        raise ValueError("sample times must be ascending and non-negative")
    if not times:
        return
    if b.dim <= cfg.dense_dim_max:
        H0 = build_H0(p, b)
        t_prev, cur = 0.0, psi
        for t in times:
            cur = expm_multiply(H0, cur, t - t_prev, tol=cfg.prop_tol)
            t_prev = t
            yield t, cur.copy()
        return
    prop = DrivePropagator(p, b)
    probe = psi[:, 0] if psi.ndim == 2 else psi
    first = next((t for t in times if t > 0), None)
    per_time = None
    if first is not None:
        n1 = _converged_substeps(prop, probe, cfg, t0=0.0, t1=first)
        per_time = n1 / first
    t_prev, cur = 0.0, psi
    for t in times:
        if t > t_prev:
            n = max(cfg.substeps, int(np.ceil(per_time * (t - t_prev))))
            cur = prop.one_interval(cur, t_prev, t, n, cfg.scheme, cfg.prop_tol)
            t_prev = t
        phases = prop.lab_phases(t)
        yield t, cur * phases if cur.ndim == 1 else cur * phases[:, None]


# -- first-order stroboscopic perturbation theory -------------------------


def tdpt_F1(p: ModelParams, b: SectorBasis) -> SparseOperator:
    """First-order amplitude transfer operator over one period.

    Element (target, source) of a directed hop equals
    -i * integral_0^T e^{-i (E_src - E_tgt) t} J (1 + u cos omega t) dt;
    the diagonal vanishes because the perturbation is purely off-diagonal.
    """
    if p.omega is None:
        raise ValueError("tdpt_F1 needs a drive frequency (params.omega)")
    T = p.period
    hops = sp.csr_matrix((b.dim, b.dim), dtype=np.complex128)
    for ch in directed_channels(p, b):
        amp = drive_averaged_amplitude(ch.delta, p)
        vals = np.full(len(ch.targets), amp, dtype=np.complex128)
        m = sp.coo_matrix((vals, (ch.targets, ch.sources)), shape=(b.dim, b.dim)).tocsr()
        hops = hops + m + m.getH().tocsr()
    total = (-1j * T) * hops
    total.sort_indices()
    return SparseOperator(total.tocsr(), hermitian=False)


def tdpt_first_order_F(p: ModelParams, b: SectorBasis) -> np.ndarray:
    """Dense first-order propagator e^{-i E T} (1 + F1); not unitary."""
    F1 = tdpt_F1(p, b).to_dense()
    F1[np.diag_indices(b.dim)] += 1.0
    phases = np.exp(-1j * b.stark_energies(p.U, p.g) * p.period)
    return phases[:, None] * F1
