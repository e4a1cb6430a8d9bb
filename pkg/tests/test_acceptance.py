"""End-to-end acceptance checks, one criterion per test.

Each test prints a single `criterion N ...: PASS/FAIL` line.  The default
run covers the fast tier (exact combinatorics plus L=12 dynamics); the
long L=16 windows are behind the `slow` marker:

    pytest tests/test_acceptance.py            # fast tier
    pytest tests/test_acceptance.py -m slow    # L=16 tier (hours)
"""

import functools

import numpy as np
import pytest

from starkfrag.basis import (
    SectorBasis,
    cdw_states,
    charge_E,
    domain_wall_state,
    frozen_example_state,
    left_packed_state,
    sector_quantum_numbers,
    state_from_string,
)
from starkfrag.floquet import (
    DrivePropagator,
    PropagatorConfig,
    evolve_static,
    evolve_stroboscopic,
    floquet_matrix,
    tdpt_F1,
    tdpt_first_order_F,
)
from starkfrag.frag import (
    autocorr_bound,
    frag_stats,
    krylov_decomposition,
    locate,
    omega1_largest_ratio,
    reflection_pairing,
)
from starkfrag.model import (
    CHANNELS,
    HAMILTONIAN_TAGS,
    ModelParams,
    build_channel,
    build_effective,
    build_hamiltonian,
    build_hopping,
)
from starkfrag.obs import (
    BipartitionPlan,
    TimeSeries,
    autocorrelation_driven,
    autocorrelation_static,
    entanglement_entropy,
    fidelity,
    oscillation_period,
    page_value_component,
    random_infinite_temperature_state,
    saturated_average,
)


def report(num, label, ok, detail=""):
    tail = f" ({detail})" if detail else ""
    line = f"criterion {num} {label}: {'PASS' if ok else 'FAIL'}{tail}"
    print(line)
    assert ok, line


@functools.cache
def decomposition(L, tag):
    p = ModelParams(L=L, u=1.0)
    return p.sector(), krylov_decomposition(p, p.sector(), tag)


def mean_entropy_window(p, b, psi0, ks, window, plan, cfg):
    vals, pts = [], []
    for k, blk in evolve_stroboscopic(p, b, psi0, max(ks), ks, cfg):
        if window[0] <= k <= window[1]:
            cols = [
                entanglement_entropy(blk[:, c] / np.linalg.norm(blk[:, c]), plan)
                for c in range(blk.shape[1])
            ]
            pts.append(k)
            vals.append(float(np.mean(cols)))
    return float(np.mean(vals))


def component_columns(b, d, seed_state, n_states, rng_seed):
    cid, size = locate(b, d, seed_state)
    idx = d.component(cid)
    rng = np.random.default_rng(rng_seed)
    cols = np.sort(rng.choice(idx, size=n_states, replace=False))
    psi0 = np.zeros((b.dim, n_states), dtype=np.complex128)
    psi0[cols, np.arange(n_states)] = 1.0
    return psi0, idx, size


# -- 1: undriven fragmentation combinatorics -------------------------------


def test_criterion_1_u0_combinatorics():
    checks = []
    for L in (8, 12, 16):
        b = SectorBasis(L, L // 2)
        N = b.N
        groups = sector_quantum_numbers(b)
        checks.append(len(groups) == N * N)
        checks.append(
            [groups[0].size, groups[1].size, groups[-2].size, groups[-1].size]
            == [2, 3, 1, 1]
        )
        c1, c2 = cdw_states(L)
        checks.append(charge_E(c1, L) == -N * N)
        checks.append(charge_E(c2, L) == -N * (N - 1))
    b16, d16 = decomposition(16, "eff-u0")
    _, size = locate(b16, d16, cdw_states(16)[0])
    checks.append(size == 34)
    report(1, "eff-u0 combinatorics", all(checks), f"cdw1 component dim {size}")


# -- 2: single-photon ratio law --------------------------------------------


def test_criterion_2_omega1_ratio_law():
    checks, dims = [], []
    for L in range(4, 17, 2):
        b, d = decomposition(L, "eff-omega1")
        st = frag_stats(d, b)
        checks.append(st.ratio_to_sector == omega1_largest_ratio(L))
        checks.append(d.n_components == b.N)
        checks.append(locate(b, d, left_packed_state(L))[1] == 1)
        dims.append(st.largest_dim)
    report(2, "eff-omega1 ratio law", all(checks), f"largest dims {dims}")


# -- 3: two-photon parity/reflection structure -----------------------------


def test_criterion_3_omega2_reflection():
    checks = []
    b, d = decomposition(10, "eff-omega2")
    st = frag_stats(d, b)
    rep = reflection_pairing(d, b)
    checks.append(rep.invariant_count == 0)
    even = sorted(int(d.sizes[c]) for c in st.by_parity[1])
    odd = sorted(int(d.sizes[c]) for c in st.by_parity[-1])
    checks.append(even == odd)
    for L in (8, 16):
        b, d = decomposition(L, "eff-omega2")
        st = frag_stats(d, b)
        rep = reflection_pairing(d, b)
        big = int(np.argmax(d.sizes))
        checks.append(st.component_parity[big] == 1)
        checks.append(rep.image[big] == big)
        c1, c2 = cdw_states(L)
        checks.append(locate(b, d, c1)[0] == big)
        checks.append(locate(b, d, c2)[0] == big)
    report(3, "eff-omega2 reflection structure", all(checks))


# -- 4: autocorrelation plateau at 1/4 -------------------------------------


def _plateau_values(L, cfg):
    g = 50.0
    unit = 2.0 * np.pi / g
    b = SectorBasis(L, L // 2)
    psi = random_infinite_temperature_state(b, 0)
    j = L - 1

    p_static = ModelParams(L=L, g=g, U=g, u=0.0)
    times = np.concatenate(
        [
            np.linspace(0.0, 700 * unit, 60, endpoint=False),
            np.linspace(700 * unit, 800 * unit, 240),
        ]
    )
    s = autocorrelation_static(p_static, b, j, psi, times, cfg)
    c_static = saturated_average(s, (700 * unit, 800 * unit))

    # omega = g/2 makes one drive period two tilt periods, so the same
    # t-window is cycles [350, 400]
    p_driven = ModelParams(L=L, g=g, U=g, u=1.0, omega=g / 2)
    ks = sorted(set(range(0, 351, 10)) | set(range(350, 401)))
    sd = autocorrelation_driven(p_driven, b, j, psi, ks, cfg)
    c_driven = saturated_average(sd, (350, 400))
    return c_static, c_driven


def test_criterion_4_plateau_L12():
    b16, d16 = decomposition(16, "eff-u0")
    exact = autocorr_bound(d16, b16, 15)
    cfg = PropagatorConfig(scheme="cf4")
    c_static, c_driven = _plateau_values(12, cfg)
    ok = (
        exact == 0.25
        and abs(c_static - 0.25) <= 0.05
        and abs(c_driven - 0.25) <= 0.05
    )
    report(
        4, "C_L plateau (L=12 tier)", ok,
        f"bound {exact}, static {c_static:.4f}, driven {c_driven:.4f}",
    )


@pytest.mark.slow
def test_criterion_4_plateau_L16_slow():
    cfg = PropagatorConfig(scheme="cf4")
    c_static, c_driven = _plateau_values(16, cfg)
    ok = abs(c_static - 0.25) <= 0.05 and abs(c_driven - 0.25) <= 0.05
    report(
        4, "C_L plateau (slow, L=16)", ok,
        f"static {c_static:.4f}, driven {c_driven:.4f}",
    )


# -- 5: resonant-frequency dips of the saturated autocorrelation -----------


@pytest.mark.slow
def test_criterion_5_resonant_dips_slow():
    L, g = 12, 50.0
    b = SectorBasis(L, L // 2)
    psi = random_infinite_temperature_state(b, 0)
    j = L - 1
    cfg = PropagatorConfig(scheme="cf4")
    bounds = {
        tag: autocorr_bound(decomposition(L, tag)[1], b, j)
        for tag in ("eff-u0", "eff-omega1", "eff-omega2")
    }
    runs = (
        ("eff-omega1", g, 3000, (2900, 3000)),
        ("eff-omega2", 2 * g, 3000, (2900, 3000)),
        ("eff-u0", g / 2, 400, (350, 400)),
    )
    checks, parts = [], []
    for tag, omega, cycles, window in runs:
        p = ModelParams(L=L, g=g, U=g, u=1.0, omega=omega)
        ks = sorted(set(range(0, window[0] + 1, 25)) | set(range(window[0], window[1] + 1)))
        series = autocorrelation_driven(p, b, j, psi, ks, cfg)
        cbar = saturated_average(series, window)
        checks.append(abs(cbar - bounds[tag]) <= 0.05)
        parts.append(f"omega={omega:g}: {cbar:.4f} vs {bounds[tag]:.4f}")
    report(5, "resonant dips (slow, L=12)", all(checks), "; ".join(parts))


# -- 6: entanglement saturation at the component Page value ----------------


def _ee_saturation(L, omega_factor, tag, n_states, ks, window, cfg, page_seed=0):
    g = 50.0
    p = ModelParams(L=L, g=g, U=g, u=1.0, omega=omega_factor * g)
    b = p.sector()
    d = krylov_decomposition(ModelParams(L=L, u=1.0), b, tag)
    psi0, idx, size = component_columns(b, d, cdw_states(L)[0], n_states, rng_seed=1)
    plan = BipartitionPlan(b)
    S_bar = mean_entropy_window(p, b, psi0, ks, window, plan, cfg)
    SpK, err = page_value_component(b, idx, plan, seed=page_seed)
    return S_bar, SpK, err, size


def test_criterion_6_ee_saturation_L12():
    cfg = PropagatorConfig(scheme="cf4")
    ks = sorted(set(range(0, 2901, 50)) | set(range(2900, 3001, 5)))
    S_bar, SpK, err, size = _ee_saturation(
        12, 1.0, "eff-omega1", 50, ks, (2900, 3000), cfg
    )
    gap = (S_bar - SpK) / SpK
    report(
        6, "EE saturation (L=12 tier)", abs(gap) <= 0.05,
        f"component {size}, S_bar {S_bar:.4f}, Page {SpK:.4f}+-{err:.4f}, gap {gap:+.2%}",
    )


def _slow_ee_config(p, b):
    # fixed 16 substeps/period: measured one-period deviation ~2e-6 gives
    # a global bound of 3000 * 2e-6, far inside the 5% gate; the doubling
    # check below guards the measurement.
    prop = DrivePropagator(p, b)
    probe = random_infinite_temperature_state(b, 2)
    delta = np.linalg.norm(
        prop.one_period(probe, 16, "cf4", 1e-9)
        - prop.one_period(probe, 32, "cf4", 1e-9)
    )
    assert delta < 5e-6, f"substep-16 deviation {delta:.2e}"
    return PropagatorConfig(substeps=16, scheme="cf4", auto_converge=False)


@pytest.mark.slow
def test_criterion_6_ee_saturation_L16_omega1_slow():
    p = ModelParams(L=16, g=50.0, U=50.0, u=1.0, omega=50.0)
    b = p.sector()
    cfg = _slow_ee_config(p, b)
    ks = list(range(2900, 3001, 2))
    S_bar, SpK, err, size = _ee_saturation(
        16, 1.0, "eff-omega1", 50, ks, (2900, 3000), cfg
    )
    gap = (S_bar - SpK) / SpK
    report(
        6, "EE saturation (slow, L=16, omega=g)", abs(gap) <= 0.05,
        f"component {size}, S_bar {S_bar:.4f}, Page {SpK:.4f}+-{err:.4f}, gap {gap:+.2%}",
    )


@pytest.mark.slow
def test_criterion_6_ee_saturation_L16_omega2_slow():
    # Known red at the stated gate: the omega=2g components are not
    # Haar-ergodic (mid-spectrum eigenstates of the projected block average
    # 16% below the random-state Page value), so the dynamical plateau sits
    # ~5-7% low at L=16 regardless of run length; measured -5.7% here.
    # The gate is kept at 5% rather than widened.
    p = ModelParams(L=16, g=50.0, U=50.0, u=1.0, omega=100.0)
    b = p.sector()
    cfg = _slow_ee_config(p, b)
    ks = list(range(2900, 3001, 2))
    S_bar, SpK, err, size = _ee_saturation(
        16, 2.0, "eff-omega2", 50, ks, (2900, 3000), cfg
    )
    gap = (S_bar - SpK) / SpK
    report(
        6, "EE saturation (slow, L=16, omega=2g)", abs(gap) <= 0.05,
        f"component {size}, S_bar {S_bar:.4f}, Page {SpK:.4f}+-{err:.4f}, gap {gap:+.2%}",
    )


# -- 7: frozen-state fidelity and two-state oscillations -------------------


def test_criterion_7_frozen_and_two_state():
    g = 50.0
    unit = 2.0 * np.pi / g
    b = SectorBasis(16, 8)
    # relaxed per-interval tolerance: the accumulated error (~2e-4) is far
    # below the 0.01 fidelity margin and the 2% period gates
    cfg = PropagatorConfig(scheme="cf4", convergence_tol=1e-6)

    p = ModelParams(L=16, g=g, U=g, u=0.0)
    frozen = frozen_example_state(16)
    assert frozen == state_from_string("1111111010000000")
    psi0 = np.zeros(b.dim, dtype=np.complex128)
    psi0[b.index(frozen)] = 1.0
    times = np.linspace(0.0, 800 * unit, 161)[1:]
    min_fid = min(fidelity(v, psi0) for _, v in evolve_static(p, b, psi0, times, cfg))

    psi_d = np.zeros(b.dim, dtype=np.complex128)
    psi_d[b.index(domain_wall_state(16))] = 1.0
    tgrid = np.linspace(0.0, 4 * np.pi, 150)[1:]
    fs = [fidelity(v, psi_d) for _, v in evolve_static(p, b, psi_d, tgrid, cfg)]
    per_static = oscillation_period(TimeSeries(tgrid, fs, point_name="t"))

    pd = ModelParams(L=16, g=g, U=g, u=1.0, omega=g / 2)
    ks = list(range(0, 101))
    fs2 = [fidelity(v, psi_d) for _, v in evolve_stroboscopic(pd, b, psi_d, 100, ks, cfg)]
    per_driven = oscillation_period(TimeSeries(ks, fs2))

    ok = (
        min_fid >= 0.99
        and abs(per_static - np.pi) <= 0.02 * np.pi
        and abs(per_driven - 12.5) <= 0.02 * 12.5
    )
    report(
        7, "frozen/two-state dynamics", ok,
        f"min fid {min_fid:.4f}, static period {per_static:.4f} vs pi, "
        f"driven {per_driven:.3f} cycles vs 12.5",
    )


# -- 8: first-order propagator expansion -----------------------------------


def test_criterion_8_tdpt():
    p = ModelParams(L=6, g=20.0, U=20.0, u=1.0, omega=13.7)
    b = p.sector()
    cfg = PropagatorConfig(scheme="cf4")
    defects = []
    for J in (1.0, 0.5, 0.25):
        pJ = ModelParams(L=6, J=J, g=20.0, U=20.0, u=1.0, omega=13.7)
        F = floquet_matrix(pJ, b, cfg).matrix
        defects.append(float(np.linalg.norm(F - tdpt_first_order_F(pJ, b), 2)))
    ratios = [defects[i] / defects[i + 1] for i in range(2)]

    residuals = []
    for omega, kind in ((20.0, "eff-omega1"), (40.0, "eff-omega2-full")):
        pr = ModelParams(L=6, g=20.0, U=20.0, u=1.0, omega=omega)
        A = (1j / pr.period) * tdpt_F1(pr, b).to_dense()
        H = build_effective(pr, b, kind).to_dense()
        np.fill_diagonal(H, 0.0)
        residuals.append(float(np.abs(A - H).max()))

    ok = all(3.0 <= r <= 5.0 for r in ratios) and all(r < 1e-10 for r in residuals)
    report(
        8, "first-order propagator scaling", ok,
        f"ratios {[f'{r:.2f}' for r in ratios]}, "
        f"resonance residuals {[f'{r:.1e}' for r in residuals]}",
    )


# -- 9: numerical hygiene ---------------------------------------------------


def _hygiene_checks(L, driven):
    b = SectorBasis(L, L // 2)
    checks = []
    # channel partition: the three gated hops tile the bare hopping exactly
    s = None
    for c in CHANNELS:
        m = build_channel(driven, b, c).matrix
        s = m if s is None else s + m
    checks.append(abs(build_hopping(driven, b).matrix - driven.J * s).max() == 0.0)
    overlap = sum(abs(build_channel(driven, b, c).matrix).sign() for c in CHANNELS)
    checks.append(overlap.max() <= 1.0)
    # hermiticity of every generator
    for tag in HAMILTONIAN_TAGS:
        checks.append(build_hamiltonian(driven, b, tag).hermiticity_defect() == 0.0)
    # conserved quantities: charge under eff-u0, charge parity under eff-omega2
    import scipy.sparse as sp

    charge = sp.diags(b.charges.astype(np.float64)).tocsr()
    parity = sp.diags(np.where(b.charges % 2 == 0, 1.0, -1.0)).tocsr()
    H0 = build_effective(driven, b, "eff-u0").matrix
    H2 = build_effective(driven, b, "eff-omega2").matrix
    checks.append(abs(H0 @ charge - charge @ H0).max() == 0.0)
    checks.append(abs(H2 @ parity - parity @ H2).max() == 0.0)
    # entanglement is symmetric between the two sides of the cut
    rng = np.random.default_rng(L)
    v = rng.normal(size=b.dim) + 1j * rng.normal(size=b.dim)
    v /= np.linalg.norm(v)
    perm = b.reflect_indices()
    w = np.empty_like(v)
    w[perm] = v
    for cut in (2, L // 2):
        sa = entanglement_entropy(v, BipartitionPlan(b, cut))
        sb = entanglement_entropy(w, BipartitionPlan(b, L - cut))
        checks.append(abs(sa - sb) < 1e-10)
    # autocorrelations start at exactly 1/4
    psi = random_infinite_temperature_state(b, 3)
    for j in (0, L - 1):
        c0 = autocorrelation_driven(driven, b, j, psi, [0]).values[0]
        checks.append(abs(c0 - 0.25) < 1e-12)
    return checks


def test_criterion_9_hygiene():
    checks = []
    for L in (4, 6, 8):  # exhaustive tier
        driven = ModelParams(L=L, g=3.0, U=3.0, u=0.7, omega=2.4)
        checks.extend(_hygiene_checks(L, driven))
        cfg = PropagatorConfig(scheme="cf4")
        F = floquet_matrix(driven, driven.sector(), cfg)
        checks.append(F.unitarity_residual < 1e-8)
    # norm preservation over many periods at L=8
    p8 = ModelParams(L=8, g=3.0, U=3.0, u=0.7, omega=2.4)
    b8 = p8.sector()
    prop = DrivePropagator(p8, b8)
    v = random_infinite_temperature_state(b8, 0)
    for _ in range(50):
        v = prop.one_period(v, 64, "cf4", 1e-9)
    checks.append(abs(np.linalg.norm(v) - 1.0) < 1e-10)
    # sampled tier
    checks.extend(
        _hygiene_checks(12, ModelParams(L=12, g=3.0, U=3.0, u=0.7, omega=2.4))
    )
    report(9, "numerical hygiene", all(checks), f"{len(checks)} checks")
