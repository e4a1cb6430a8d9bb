"""Krylov decomposition of a sector under a Hamiltonian's hopping graph.

Two basis states belong to the same Krylov subspace when they are joined
by a chain of off-diagonal matrix elements above threshold.  Component
ids are deterministic: they count up in order of each component's
smallest basis index, so decompositions can be cached and compared
across runs.

The frozen-state pattern test mirrors the graph definition for the
resonant channel: a rightward hop needs the window n_{j-1..j+2} = 0101
and a leftward hop needs 0011 (sites outside the chain count as empty,
which turns the two windows into the prefixes 101 and 011 at the left
edge).  A state moves iff one of those windows occurs, so "frozen" is a
pure substring condition.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .basis import SectorBasis, cdw_states, state_to_string
from .model import ModelParams, build_hamiltonian
from .ops import SparseOperator

RELATIVE_EDGE_TOL = 1e-12


@dataclass(eq=False)
class KrylovDecomposition:
    """Partition of sector indices into dynamically connected components."""

    labels: np.ndarray  # (dim,) component id per basis index
    sizes: np.ndarray  # (n_components,) states per component
    tag: str = ""

    @property
    def dim(self) -> int:
        return len(self.labels)

    @property
    def n_components(self) -> int:
        return len(self.sizes)

    @cached_property
    def _members(self) -> list[np.ndarray]:
        order = np.argsort(self.labels, kind="stable")
        bounds = np.cumsum(self.sizes)
        return np.split(order, bounds[:-1])

    def component(self, cid: int) -> np.ndarray:
        """Ascending basis indices of one component."""
        return self._members[cid]

    def components(self) -> list[np.ndarray]:
        return list(self._members)


def _relabel_by_first_index(raw: np.ndarray) -> np.ndarray:
    """Renumber component ids in order of first appearance (= smallest
    contained basis index, since indices are scanned ascending)."""
    first = np.full(raw.max() + 1, -1, dtype=np.int64)
    nxt = 0
    for r in raw:
        if first[r] < 0:
            first[r] = nxt
            nxt += 1
    return first[raw]


def decompose(H, b: SectorBasis, tol: float | None = None, tag: str = "") -> KrylovDecomposition:
    """Connected components of the above-threshold off-diagonal graph.

    ``tol`` is the absolute edge threshold; None means
    RELATIVE_EDGE_TOL * max|entry|.
    """
    m = H.matrix if isinstance(H, SparseOperator) else H
    coo = m.tocoo()
    if tol is None:
        tol = RELATIVE_EDGE_TOL * (np.abs(coo.data).max() if coo.nnz else 0.0)
    if tol < 0:
        raise ValueError(f"edge threshold must be >= 0, got {tol}")
    keep = (coo.row != coo.col) & (np.abs(coo.data) > tol)
    graph = sp.csr_matrix(
        (np.ones(keep.sum()), (coo.row[keep], coo.col[keep])), shape=m.shape
    )
    _, raw = connected_components(graph, directed=False)
    labels = _relabel_by_first_index(raw)
    sizes = np.bincount(labels)
    return KrylovDecomposition(labels=labels, sizes=sizes, tag=tag)


def _cache_file(cache_dir, p: ModelParams, tag: str, tol) -> Path:
    key = repr((p.L, p.N, tag, p.J, p.U, p.g, p.u, p.omega, tol))
    h = hashlib.sha1(key.encode()).hexdigest()[:10]
    return Path(cache_dir) / f"krylov-{tag}-L{p.L}-N{p.N}-{h}.npz"


def krylov_decomposition(
    p: ModelParams,
    b: SectorBasis,
    tag: str,
    tol: float | None = None,
    cache_dir=None,
) -> KrylovDecomposition:
    """Decompose the sector under build_hamiltonian(p, b, tag), with an
    optional on-disk cache (sweeps revisit the same decomposition often)."""
    path = None
    if cache_dir is not None:
        path = _cache_file(cache_dir, p, tag, tol)
        if path.exists():
            labels = np.load(path)["labels"]
            return KrylovDecomposition(
                labels=labels, sizes=np.bincount(labels), tag=tag
            )
    d = decompose(build_hamiltonian(p, b, tag), b, tol=tol, tag=tag)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savez_compressed(path, labels=d.labels)
    return d


# -- statistics ------------------------------------------------------------


def _uniform_value(values: np.ndarray):
    v = values[0]
    return int(v) if (values == v).all() else None


@dataclass
class FragStats:
    largest_dim: int
    ratio_to_sector: Fraction
    ratio_to_symmetry_sector: Fraction
    frozen_count: int
    component_charge: list  # common charge_E per component, None if mixed
    component_parity: list  # common (-1)**E per component, None if mixed
    by_charge: dict = field(default_factory=dict)
    by_parity: dict = field(default_factory=dict)


def frag_stats(d: KrylovDecomposition, b: SectorBasis) -> FragStats:
    charges = b.charges
    parities = np.where(charges % 2 == 0, 1, -1)
    comp_charge, comp_parity = [], []
    by_charge, by_parity = {}, {}
    for cid, idx in enumerate(d.components()):
        q = _uniform_value(charges[idx])
        pr = _uniform_value(parities[idx])
        comp_charge.append(q)
        comp_parity.append(pr)
        if q is not None:
            by_charge.setdefault(q, []).append(cid)
        if pr is not None:
            by_parity.setdefault(pr, []).append(cid)
    big = int(np.argmax(d.sizes))
    largest = int(d.sizes[big])
    if comp_charge[big] is not None:
        denom = int((charges == comp_charge[big]).sum())
    elif comp_parity[big] is not None:
        denom = int((parities == comp_parity[big]).sum())
    else:
        denom = d.dim
    return FragStats(
        largest_dim=largest,
        ratio_to_sector=Fraction(largest, d.dim),
        ratio_to_symmetry_sector=Fraction(largest, denom),
        frozen_count=int((d.sizes == 1).sum()),
        component_charge=comp_charge,
        component_parity=comp_parity,
        by_charge=by_charge,
        by_parity=by_parity,
    )


def omega1_largest_ratio(L: int) -> Fraction:
    """Closed form for the largest-component fraction of the single-photon
    resonant splitting: 8(L+1) / ((L+2)(L+4))."""
    return Fraction(8 * (L + 1), (L + 2) * (L + 4))


def locate(b: SectorBasis, d: KrylovDecomposition, s: int) -> tuple[int, int]:
    """(component id, component size) of a Fock state."""
    cid = int(d.labels[b.index(s)])
    return cid, int(d.sizes[cid])


def frozen_pattern_check(s: int, L: int) -> bool:
    """True iff no resonant hop can move the state (substring criterion)."""
    bits = state_to_string(s, L)
    if "0101" in bits or "0011" in bits:
        return False
    return not (bits.startswith("101") or bits.startswith("011"))


def krylov_density(d: KrylovDecomposition, b: SectorBasis, cid: int) -> np.ndarray:
    """Per-site mean occupation over one component's Fock states."""
    idx = d.component(cid)
    return b.occupations[idx].mean(axis=0)


def autocorr_bound(d: KrylovDecomposition, b: SectorBasis, j: int) -> float:
    """Long-time floor of the site-j density autocorrelation:
    (1/D) sum_K [sum_{s in K} (n_j - 1/2)]^2 / D_K."""
    if not 0 <= j < b.L:
        raise ValueError(f"site {j} outside 0..{b.L - 1}")
    dev = b.occupations[:, j].astype(np.float64) - 0.5
    sums = np.bincount(d.labels, weights=dev, minlength=d.n_components)
    return float(np.sum(sums**2 / d.sizes) / d.dim)


# -- reflection structure --------------------------------------------------


@dataclass
class ReflectionReport:
    image: np.ndarray  # component id of each component's mirror
    invariant_count: int
    paired_count: int
    component_parity: list


def reflection_pairing(d: KrylovDecomposition, b: SectorBasis) -> ReflectionReport:
    """Map each component to its spatial-reflection image.

    Only defined when the hop graph is reflection symmetric (the
    two-photon resonant splitting); a component whose mirror straddles
    components is reported as an error.
    """
    perm = b.reflect_indices()
    image = np.empty(d.n_components, dtype=np.int64)
    for cid, idx in enumerate(d.components()):
        tgt = np.unique(d.labels[perm[idx]])
        if len(tgt) != 1:
            raise ValueError(
                f"component {cid} is not mapped onto a single component; "
                "the decomposition graph is not reflection symmetric"
            )
        image[cid] = tgt[0]
    inv = int((image == np.arange(d.n_components)).sum())
    parities = np.where(b.charges % 2 == 0, 1, -1)
    comp_parity = [_uniform_value(parities[idx]) for idx in d.components()]
    return ReflectionReport(
        image=image,
        invariant_count=inv,
        paired_count=d.n_components - inv,
        component_parity=comp_parity,
    )


# -- serialization ---------------------------------------------------------


def decomposition_summary(d: KrylovDecomposition, b: SectorBasis, top: int | None = None) -> dict:
    """JSON-ready digest: global counts plus per-component records."""
    stats = frag_stats(d, b)
    order = np.argsort(-d.sizes, kind="stable")
    if top is not None:
        order = order[:top]
    cdw = cdw_states(b.L) if b.L % 2 == 0 and b.N == b.L // 2 else ()
    comps = []
    for cid in order:
        idx = d.component(int(cid))
        comps.append(
            {
                "id": int(cid),
                "size": int(d.sizes[cid]),
                "charge": stats.component_charge[cid],
                "parity": stats.component_parity[cid],
                "representative": state_to_string(int(b.states[idx[0]]), b.L),
                "contains_cdw": [
                    state_to_string(s, b.L)
                    for s in cdw
                    if d.labels[b.index(s)] == cid
                ],
            }
        )
    return {
        "L": b.L,
        "N": b.N,
        "dim": b.dim,
        "hamiltonian": d.tag,
        "n_components": d.n_components,
        "largest_dim": stats.largest_dim,
        "ratio_to_sector": float(stats.ratio_to_sector),
        "frozen_count": stats.frozen_count,
        "components": comps,
    }


def write_summary_json(summary: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
