"""Decomposition tests against a pattern-rewrite BFS oracle and counts."""

import json
from fractions import Fraction
from itertools import combinations

import numpy as np
import pytest
import scipy.sparse as sp

from starkfrag.basis import (
    SectorBasis,
    cdw_states,
    domain_wall_partner,
    domain_wall_state,
    frozen_example_state,
    left_packed_state,
    state_from_string,
    state_to_string,
)
from starkfrag.frag import (
    KrylovDecomposition,
    autocorr_bound,
    decompose,
    decomposition_summary,
    frag_stats,
    frozen_pattern_check,
    krylov_decomposition,
    krylov_density,
    locate,
    omega1_largest_ratio,
    reflection_pairing,
    write_summary_json,
)
from starkfrag.model import ModelParams, build_hamiltonian


# -- independent oracle: resonant moves as pure string rewriting ----------


def string_moves(bits):
    out = []
    for i in range(len(bits) - 3):
        w = bits[i : i + 4]
        if w == "0101":
            out.append(bits[:i] + "0011" + bits[i + 4 :])
        elif w == "0011":
            out.append(bits[:i] + "0101" + bits[i + 4 :])
    # site -1 counts as empty, so the windows truncate to prefixes
    if bits.startswith("101"):
        out.append("011" + bits[3:])
    elif bits.startswith("011"):
        out.append("101" + bits[3:])
    return out


def sector_strings(L, N):
    out = []
    for occ in combinations(range(L), N):
        bits = ["0"] * L
        for j in occ:
            bits[j] = "1"
        out.append("".join(bits))
    return out


def bfs_components(L, N):
    comps, seen = [], set()
    for s in sector_strings(L, N):
        if s in seen:
            continue
        comp, frontier = {s}, [s]
        while frontier:
            frontier = [
                r for t in frontier for r in string_moves(t) if r not in comp
            ]
            comp.update(frontier)
        seen |= comp
        comps.append(frozenset(comp))
    return comps


def component_strings(d, b):
    return {
        frozenset(state_to_string(int(b.states[i]), b.L) for i in idx)
        for idx in d.components()
    }


def u0_decomposition(L):
    p = ModelParams(L=L)
    b = p.sector()
    return p, b, krylov_decomposition(p, b, "eff-u0")


def test_u0_components_match_pattern_bfs():
    for L in (6, 8):
        _, b, d = u0_decomposition(L)
        assert component_strings(d, b) == set(bfs_components(L, L // 2))


def test_diagonal_matrix_gives_all_singletons():
    b = SectorBasis(6, 3)
    H = sp.diags(np.arange(1.0, b.dim + 1)).tocsr()
    d = decompose(H, b)
    assert d.n_components == b.dim
    assert (d.sizes == 1).all()


@pytest.mark.parametrize(
    "L,tag,params",
    [
        (8, "eff-u0", {}),
        (8, "eff-omega1", {"u": 1.0}),
        (6, "hf1-general", {"U": 1.3, "g": 2.7, "u": 0.7, "omega": 3.3}),
    ],
)
def test_partition_edge_and_connectivity_invariants(L, tag, params):
    p = ModelParams(L=L, **params)
    b = p.sector()
    H = build_hamiltonian(p, b, tag)
    d = decompose(H, b, tag=tag)
    assert d.sizes.sum() == b.dim
    assert np.array_equal(np.bincount(d.labels), d.sizes)
    coo = H.matrix.tocoo()
    tol = 1e-12 * np.abs(coo.data).max()
    # no above-threshold edge may straddle components
    for r, c, v in zip(coo.row, coo.col, coo.data):
        if r != c and abs(v) > tol:
            assert d.labels[r] == d.labels[c]
    # and each component must be internally connected
    adj = {}
    for r, c, v in zip(coo.row, coo.col, coo.data):
        if r != c and abs(v) > tol:
            adj.setdefault(r, set()).add(c)
    for idx in d.components():
        seen, frontier = {idx[0]}, [idx[0]]
        while frontier:
            frontier = [
                n for i in frontier for n in adj.get(i, ()) if n not in seen
            ]
            seen.update(frontier)
        assert seen == set(idx)


def test_component_ids_count_up_by_first_index():
    _, _, d = u0_decomposition(8)
    first_seen = []
    for lab in d.labels:
        if lab not in first_seen:
            first_seen.append(lab)
    assert first_seen == list(range(d.n_components))
    assert d.labels[0] == 0


def test_u0_L16_headline_numbers():
    p, b, d = u0_decomposition(16)
    cdw1, cdw2 = cdw_states(16)
    cid1, size1 = locate(b, d, cdw1)
    cid2, size2 = locate(b, d, cdw2)
    assert size1 == 34 and size2 == 34
    st = frag_stats(d, b)
    assert st.largest_dim == 34
    assert st.component_charge[cid1] == -64  # -N^2
    assert st.component_charge[cid2] == -56  # -N(N-1)
    assert locate(b, d, frozen_example_state(16))[1] == 1
    dcid, dsize = locate(b, d, domain_wall_state(16))
    assert dsize == 2
    assert locate(b, d, domain_wall_partner(16)) == (dcid, 2)


def omega1_seed(L, i):
    """(0)^{i-1} (1)^N (0)^{N-i+1} written site-0 first."""
    N = L // 2
    return state_from_string("0" * (i - 1) + "1" * N + "0" * (N - i + 1))


def test_omega1_ratio_law_and_component_structure():
    for L in (4, 6, 8, 10, 12, 14, 16):
        p = ModelParams(L=L, u=1.0)
        b = p.sector()
        d = krylov_decomposition(p, b, "eff-omega1")
        N = L // 2
        assert d.n_components == N
        st = frag_stats(d, b)
        assert st.ratio_to_sector == omega1_largest_ratio(L)
        sizes = [locate(b, d, omega1_seed(L, i))[1] for i in range(1, N + 1)]
        assert sizes[0] == 1  # left-packed state is frozen
        assert locate(b, d, left_packed_state(L))[1] == 1
        assert all(a < b_ for a, b_ in zip(sizes, sizes[1:]))
        assert sizes[-1] == st.largest_dim


def test_omega1_L16_largest_dimension():
    p = ModelParams(L=16, u=1.0)
    b = p.sector()
    d = krylov_decomposition(p, b, "eff-omega1")
    assert frag_stats(d, b).largest_dim == 4862  # 12870 * 136 / 360


def omega2_decomposition(L):
    p = ModelParams(L=L, u=1.0)
    b = p.sector()
    return b, krylov_decomposition(p, b, "eff-omega2")


def test_omega2_odd_N_reflection_bijection():
    for L in (6, 10):
        b, d = omega2_decomposition(L)
        rep = reflection_pairing(d, b)
        assert rep.invariant_count == 0
        assert np.array_equal(rep.image[rep.image], np.arange(d.n_components))
        assert np.array_equal(d.sizes[rep.image], d.sizes)
        even = sorted(
            int(s) for s, pr in zip(d.sizes, rep.component_parity) if pr == 1
        )
        odd = sorted(
            int(s) for s, pr in zip(d.sizes, rep.component_parity) if pr == -1
        )
        assert even == odd
        for cid in range(d.n_components):
            assert rep.component_parity[cid] == -rep.component_parity[rep.image[cid]]


def test_omega2_even_N_largest_is_reflection_invariant():
    for L in (8, 16):
        b, d = omega2_decomposition(L)
        rep = reflection_pairing(d, b)
        big = int(np.argmax(d.sizes))
        assert rep.image[big] == big
        assert rep.component_parity[big] == 1
        cdw1, cdw2 = cdw_states(L)
        assert d.labels[b.index(cdw1)] == d.labels[b.index(cdw2)] == big


def test_frozen_pattern_examples():
    assert frozen_pattern_check(frozen_example_state(16), 16)
    assert frozen_pattern_check(left_packed_state(12), 12)
    assert not frozen_pattern_check(cdw_states(16)[0], 16)
    assert not frozen_pattern_check(domain_wall_state(16), 16)


def test_frozen_pattern_agrees_with_singleton_components():
    for L in (8, 10, 12):
        _, b, d = u0_decomposition(L)
        for i, s in enumerate(b.states):
            assert frozen_pattern_check(int(s), L) == (d.sizes[d.labels[i]] == 1)


def test_u0_largest_ratio_decays_with_size():
    Ls = [8, 10, 12, 14, 16]
    ratios = []
    for L in Ls:
        _, b, d = u0_decomposition(L)
        ratios.append(float(frag_stats(d, b).ratio_to_sector))
    assert all(a > b_ > 0 for a, b_ in zip(ratios, ratios[1:]))
    slope = np.polyfit(Ls, np.log(ratios), 1)[0]
    assert slope < 0


def test_krylov_density_limits():
    p, b, d = u0_decomposition(8)
    cid, size = locate(b, d, frozen_example_state(8))
    assert size == 1
    occ = [int(c) for c in state_to_string(frozen_example_state(8), 8)]
    assert np.array_equal(krylov_density(d, b, cid), occ)
    whole = KrylovDecomposition(
        labels=np.zeros(b.dim, dtype=np.int64), sizes=np.array([b.dim])
    )
    assert np.allclose(krylov_density(whole, b, 0), 0.5)


def test_krylov_density_matches_bfs_enumeration():
    p, b, d = u0_decomposition(8)
    cid = locate(b, d, cdw_states(8)[0])[0]
    states = next(
        c for c in bfs_components(8, 4) if state_to_string(cdw_states(8)[0], 8) in c
    )
    ref = np.mean([[int(ch) for ch in s] for s in sorted(states)], axis=0)
    assert np.allclose(krylov_density(d, b, cid), ref)


def test_autocorr_bound_limits_and_exact_quarter():
    b = SectorBasis(8, 4)
    singles = KrylovDecomposition(
        labels=np.arange(b.dim), sizes=np.ones(b.dim, dtype=np.int64)
    )
    whole = KrylovDecomposition(
        labels=np.zeros(b.dim, dtype=np.int64), sizes=np.array([b.dim])
    )
    for j in (0, 3, 7):
        assert abs(autocorr_bound(singles, b, j) - 0.25) < 1e-14
        assert abs(autocorr_bound(whole, b, j)) < 1e-14
    for L in (12, 16):
        _, bb, d = u0_decomposition(L)
        assert abs(autocorr_bound(d, bb, L - 1) - 0.25) < 1e-14
    with pytest.raises(ValueError):
        autocorr_bound(whole, b, 8)


def test_locate_rejects_states_outside_sector():
    _, b, d = u0_decomposition(8)
    with pytest.raises(ValueError):
        locate(b, d, 0b1)


def test_decomposition_stable_under_threshold_choice():
    p = ModelParams(L=6, U=1.3, g=2.7, u=0.7, omega=3.3)
    b = p.sector()
    H = build_hamiltonian(p, b, "hf1-general")
    scale = np.abs(H.matrix.data).max()
    ref = decompose(H, b, tol=1e-14 * scale)
    for rel in (1e-12, 1e-10, 1e-8):
        assert np.array_equal(decompose(H, b, tol=rel * scale).labels, ref.labels)


def test_cache_roundtrip(tmp_path):
    p = ModelParams(L=8, u=1.0)
    b = p.sector()
    d1 = krylov_decomposition(p, b, "eff-omega1", cache_dir=tmp_path)
    files = list(tmp_path.glob("*.npz"))
    assert len(files) == 1
    d2 = krylov_decomposition(p, b, "eff-omega1", cache_dir=tmp_path)
    assert np.array_equal(d1.labels, d2.labels)
    assert list(tmp_path.glob("*.npz")) == files
    krylov_decomposition(p, b, "eff-u0", cache_dir=tmp_path)
    assert len(list(tmp_path.glob("*.npz"))) == 2


def test_summary_json_roundtrip(tmp_path):
    p, b, d = u0_decomposition(8)
    summary = decomposition_summary(d, b, top=5)
    assert summary["dim"] == b.dim
    assert summary["largest_dim"] == int(d.sizes.max())
    assert len(summary["components"]) == 5
    top = summary["components"][0]
    assert top["size"] == frag_stats(d, b).largest_dim
    assert set(top["representative"]) <= {"0", "1"}
    cdw_comp = next(c for c in summary["components"] if c["contains_cdw"])
    assert state_from_string(cdw_comp["contains_cdw"][0]) in cdw_states(8)
    path = tmp_path / "dec.json"
    write_summary_json(summary, path)
    assert json.loads(path.read_text())["largest_dim"] == summary["largest_dim"]
