"""Command-line experiment runner.

Each verb resolves its configuration from built-in defaults, then an
optional preset, then an optional JSON config file, then explicit flags
(later wins), runs the experiment, and writes delimited data plus
figures and a ``manifest.json`` echoing the fully resolved configuration
into the output directory.  Reruns with the same configuration produce
byte-identical data files.

Exit codes: 0 ok, 1 configuration error, 2 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import plotting
from .basis import (
    cdw_states,
    domain_wall_partner,
    domain_wall_state,
    frozen_example_state,
    left_packed_state,
    sector_quantum_numbers,
    state_from_string,
    state_to_string,
    write_basis_csv,
)
from .floquet import (
    SCHEMES,
    PropagatorConfig,
    evolve_static,
    evolve_stroboscopic,
    floquet_matrix,
    tdpt_F1,
    tdpt_first_order_F,
)
from .frag import (
    decomposition_summary,
    frag_stats,
    krylov_decomposition,
    krylov_density,
    locate,
    autocorr_bound,
    omega1_largest_ratio,
    write_summary_json,
)
from .model import (
    EFFECTIVE_KINDS,
    HAMILTONIAN_TAGS,
    ModelParams,
    build_effective,
)
from .obs import (
    BipartitionPlan,
    TimeSeries,
    autocorrelation_driven,
    autocorrelation_static,
    densities,
    entanglement_entropy,
    fidelity,
    page_value_component,
    page_value_sector,
    random_infinite_temperature_state,
    saturated_average,
)
from .ops import NumericError


class ConfigError(Exception):
    """Bad command line, config file, or parameter combination."""


_NAMED_STATES = {
    "cdw1": lambda L: cdw_states(L)[0],
    "cdw2": lambda L: cdw_states(L)[1],
    "frozen": frozen_example_state,
    "domain": domain_wall_state,
    "domain-partner": domain_wall_partner,
    "left-packed": left_packed_state,
}

# Parameter frames of the figure-class experiments (L=16 dynamics at
# u=1 unless the map over the (g, g/omega) plane, which runs at L=12).
PRESETS = {
    "fig2": {
        "hamiltonian": "eff-u0", "L": 16, "u": 0.0,
        "L_list": "4,6,8,10,12,14,16",
    },
    "fig3": {
        "L": 16, "u": 0.0, "g": 50.0, "hamiltonian": "eff-u0",
        "initial": "cdw1", "sample": 34, "t_max_periods": 800.0,
        "samples": 1600, "window": "700:800",
    },
    "fig4": {
        "L": 16, "u": 1.0, "g": 50.0, "omega": 50.0,
        "hamiltonian": "eff-omega1", "initial": "cdw1", "sample": 50,
        "cycles": 3000, "stride": 10, "window": "2900:3000",
        "scheme": "cf4",
    },
    "fig5": {
        "L": 16, "u": 1.0, "g": 50.0, "omega": 100.0,
        "hamiltonian": "eff-omega2", "initial": "cdw1", "sample": 50,
        "cycles": 3000, "stride": 10, "window": "2900:3000",
        "scheme": "cf4",
    },
    "fig6": {
        "L": 16, "u": 1.0, "g": 50.0, "initial": "1010011001101001",
        "cycles": 6000, "stride": 20, "window": "5900:6000",
        "grid": "0.4,0.5,0.667,0.8,1,1.25,1.5,2", "scheme": "cf4",
        "g_grid": "2,5,15,30,50", "L_map": 12,
    },
}

_MODEL_DEFAULTS = {
    "L": 8, "N": None, "J": 1.0, "U": None, "g": 1.0, "u": 0.0,
    "omega": None,
}
# The CLI defaults to the fourth-order scheme: drive periods as long as
# 2pi/(g/2) appear in sweeps, where the second-order rule cannot reach
# tolerance under the substep cap.  PropagatorConfig itself defaults to
# the midpoint rule; --scheme selects either.
_PROP_DEFAULTS = {
    "substeps": 64, "scheme": "cf4", "prop_tol": 1e-9,
    "conv_tol": 1e-8, "max_substeps": 1 << 14,
}


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return f"{x:.12g}"
    return str(x)


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, Path):
        return str(x)
    return x


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(_jsonable(doc), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_manifest(outdir, verb, cfg, outputs, results=None):
    doc = {"command": verb, "config": cfg, "outputs": sorted(outputs)}
    if results:
        doc["results"] = results
    _write_json(outdir / "manifest.json", doc)


# -- configuration resolution ---------------------------------------------


def _resolve(verb, defaults, args):
    cfg = dict(defaults)
    preset = getattr(args, "preset", None)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; have {sorted(PRESETS)}")
        for k, v in PRESETS[preset].items():
            if k in cfg:
                cfg[k] = v
    path = getattr(args, "config", None)
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}")
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        for k, v in data.items():
            key = k.replace("-", "_")
            if key not in cfg:
                raise ConfigError(f"unknown config key {k!r} for verb {verb!r}")
            cfg[key] = v
    for k in cfg:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    cfg["plots"] = not getattr(args, "no_plots", False)
    cfg["preset"] = preset
    return cfg


def _params(cfg) -> ModelParams:
    g = float(cfg["g"])
    U = g if cfg.get("U") is None else float(cfg["U"])
    omega = cfg.get("omega")
    try:
        return ModelParams(
            L=int(cfg["L"]),
            J=float(cfg["J"]),
            U=U,
            g=g,
            u=float(cfg["u"]),
            omega=None if omega is None else float(omega),
            N=None if cfg.get("N") is None else int(cfg["N"]),
        )
    except ValueError as exc:
        raise ConfigError(str(exc))


def _prop_config(cfg) -> PropagatorConfig:
    try:
        return PropagatorConfig(
            substeps=int(cfg["substeps"]),
            scheme=str(cfg["scheme"]),
            prop_tol=float(cfg["prop_tol"]),
            convergence_tol=float(cfg["conv_tol"]),
            max_substeps=int(cfg["max_substeps"]),
        )
    except ValueError as exc:
        raise ConfigError(str(exc))


def _outdir(cfg) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _initial_state(spec, b) -> int:
    spec = str(spec)
    if spec in _NAMED_STATES:
        s = _NAMED_STATES[spec](b.L)
    elif spec and set(spec) <= {"0", "1"}:
        if len(spec) != b.L:
            raise ConfigError(f"bitstring {spec!r} has {len(spec)} sites, chain has {b.L}")
        s = state_from_string(spec)
    else:
        raise ConfigError(
            f"unknown initial state {spec!r}; use a bitstring or one of {sorted(_NAMED_STATES)}"
        )
    try:
        b.index(s)
    except ValueError:
        raise ConfigError(f"state {spec!r} has the wrong particle number for N={b.N}")
    return s


def _reference_tag(p: ModelParams) -> str:
    """Which splitting the drive selects: the resonant channel tags at
    omega = g and 2g, the undriven one otherwise."""
    if p.u == 0 or p.omega is None:
        return "eff-u0"
    if abs(p.omega - p.g) <= 1e-9 * p.omega:
        return "eff-omega1"
    if abs(p.omega - 2.0 * p.g) <= 1e-9 * p.omega:
        return "eff-omega2"
    return "eff-u0"


def _graph_params(p: ModelParams, tag: str) -> ModelParams:
    """Canonical parameters for a decomposition used as a reference: the
    effective graphs do not depend on omega, and any u != 0 gives the
    same edge set, so normalising keeps cache keys stable."""
    if tag in EFFECTIVE_KINDS:
        u = p.u if tag == "eff-u0" else 1.0
        return dataclasses.replace(p, omega=None, u=u)
    return p


def _ref_decomposition(p, b, tag, cache_dir):
    if tag not in HAMILTONIAN_TAGS:
        raise ConfigError(f"unknown hamiltonian tag {tag!r}; have {HAMILTONIAN_TAGS}")
    try:
        return krylov_decomposition(_graph_params(p, tag), b, tag, cache_dir=cache_dir)
    except ValueError as exc:
        raise ConfigError(str(exc))


def _parse_window(spec):
    try:
        lo, hi = (float(x) for x in str(spec).split(":"))
    except ValueError:
        raise ConfigError(f"window must be 'lo:hi', got {spec!r}")
    if hi < lo:
        raise ConfigError(f"window must be ascending, got {spec!r}")
    return lo, hi


def _parse_floats(spec):
    s = str(spec)
    try:
        if ":" in s:
            lo, hi, n = s.split(":")
            return [float(v) for v in np.linspace(float(lo), float(hi), int(n))]
        return [float(x) for x in s.split(",")]
    except ValueError:
        raise ConfigError(f"bad grid {spec!r}; use 'a,b,c' or 'lo:hi:n'")


def _parse_ints(spec):
    try:
        return [int(x) for x in str(spec).split(",")]
    except ValueError:
        raise ConfigError(f"bad integer list {spec!r}")


def _cycle_schedule(cycles, stride, window):
    cycles, stride = int(cycles), int(stride)
    if cycles < 1 or stride < 1:
        raise ConfigError("cycles and stride must be positive")
    lo, hi = window
    if hi > cycles:
        raise ConfigError(f"window {window} extends past --cycles {cycles}")
    ks = set(range(0, cycles + 1, stride))
    ks.add(cycles)
    ks.update(range(int(np.ceil(lo)), int(hi) + 1))
    return sorted(ks)


def _static_times(t_max_periods, samples, p):
    unit = 2.0 * np.pi / p.g
    if float(t_max_periods) <= 0 or int(samples) < 2:
        raise ConfigError("t_max_periods must be > 0 and samples >= 2")
    return np.linspace(0.0, float(t_max_periods) * unit, int(samples) + 1), unit


# -- verbs ----------------------------------------------------------------

BASIS_DEFAULTS = {**_MODEL_DEFAULTS, "out": "basis-out"}


def cmd_basis(cfg):
    p = _params(cfg)
    b = p.sector()
    out = _outdir(cfg)
    write_basis_csv(b, p.U, p.g, out / "basis.csv")
    groups = sector_quantum_numbers(b)
    _write_csv(
        out / "groups.csv",
        "q,charge,size",
        [(g_.q, g_.charge, g_.size) for g_ in groups],
    )
    outputs = ["basis.csv", "groups.csv"]
    if cfg["plots"]:
        plotting.groups_figure(
            out / "groups.png",
            [g_.charge for g_ in groups],
            [g_.size for g_ in groups],
        )
        outputs.append("groups.png")
    _write_manifest(
        out, "basis", cfg, outputs,
        {"dim": b.dim, "n_groups": len(groups),
         "edge_sizes": [groups[0].size, groups[1].size, groups[-2].size, groups[-1].size]},
    )
    return 0


# u defaults to 1 here: every u != 0 yields the same hopping graph, while
# u = 0 silently collapses the driven splittings to the undriven one.
DECOMPOSE_DEFAULTS = {
    **_MODEL_DEFAULTS, "u": 1.0,
    "hamiltonian": "eff-u0", "tol": None, "top": None, "cache": None,
    "out": "decompose-out",
}


def cmd_decompose(cfg):
    p = _params(cfg)
    b = p.sector()
    tag = cfg["hamiltonian"]
    if tag not in HAMILTONIAN_TAGS:
        raise ConfigError(f"unknown hamiltonian tag {tag!r}; have {HAMILTONIAN_TAGS}")
    try:
        d = krylov_decomposition(
            p, b, tag,
            tol=None if cfg["tol"] is None else float(cfg["tol"]),
            cache_dir=cfg["cache"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc))
    out = _outdir(cfg)
    summary = decomposition_summary(d, b, top=None if cfg["top"] is None else int(cfg["top"]))
    write_summary_json(summary, out / "decompose.json")
    stats = frag_stats(d, b)
    _write_csv(
        out / "components.csv",
        "component,size,charge,parity,representative",
        [
            (cid, int(d.sizes[cid]),
             "" if stats.component_charge[cid] is None else stats.component_charge[cid],
             "" if stats.component_parity[cid] is None else stats.component_parity[cid],
             state_to_string(int(b.states[d.component(cid)[0]]), b.L))
            for cid in range(d.n_components)
        ],
    )
    outputs = ["decompose.json", "components.csv"]
    if cfg["plots"]:
        plotting.sizes_figure(out / "sizes.png", d.sizes)
        outputs.append("sizes.png")
    _write_manifest(
        out, "decompose", cfg, outputs,
        {"n_components": d.n_components, "largest_dim": stats.largest_dim,
         "ratio_to_sector": float(stats.ratio_to_sector),
         "frozen_count": stats.frozen_count},
    )
    return 0


SCALING_DEFAULTS = {
    **_MODEL_DEFAULTS, "u": 1.0,
    "hamiltonian": "eff-omega1", "L_list": "4,6,8,10,12,14,16",
    "cache": None, "out": "scaling-out",
}


def cmd_scaling(cfg):
    tag = cfg["hamiltonian"]
    Ls = _parse_ints(cfg["L_list"])
    out = _outdir(cfg)
    rows, ratios, law = [], [], []
    for L in Ls:
        p = _params({**cfg, "L": L, "N": None})
        b = p.sector()
        d = _ref_decomposition(p, b, tag, cfg["cache"])
        st = frag_stats(d, b)
        rows.append(
            (L, b.dim, d.n_components, st.largest_dim,
             float(st.ratio_to_sector), str(st.ratio_to_sector), st.frozen_count)
        )
        ratios.append(float(st.ratio_to_sector))
        law.append(float(omega1_largest_ratio(L)))
    _write_csv(
        out / "scaling.csv",
        "L,dim,components,largest,ratio,ratio_exact,frozen",
        rows,
    )
    outputs = ["scaling.csv"]
    if cfg["plots"]:
        plotting.scaling_figure(
            out / "scaling.png", Ls, ratios, law if tag == "eff-omega1" else None
        )
        outputs.append("scaling.png")
    results = {"ratios": ratios}
    if tag == "eff-omega1":
        results["matches_closed_form"] = [
            Fraction(r[3], r[1]) == omega1_largest_ratio(r[0]) for r in rows
        ]
    _write_manifest(out, "scaling", cfg, outputs, results)
    return 0


EVOLVE_DEFAULTS = {
    **_MODEL_DEFAULTS, **_PROP_DEFAULTS,
    "hamiltonian": None, "initial": "cdw1", "sample": 0, "seed": 0,
    "page_samples": None, "page_seed": 0,
    "cycles": 200, "stride": 1, "window": "150:200",
    "t_max_periods": 200.0, "samples": 400,
    "transfer_target": None, "cache": None, "out": "evolve-out",
}


def cmd_evolve(cfg):
    p = _params(cfg)
    b = p.sector()
    driven = p.u != 0
    if driven and p.omega is None:
        raise ConfigError("driven evolution (u != 0) needs --omega")
    prop_cfg = _prop_config(cfg)
    tag = cfg["hamiltonian"] or _reference_tag(p)
    d = _ref_decomposition(p, b, tag, cfg["cache"])
    s0 = _initial_state(cfg["initial"], b)
    cid, comp_dim = locate(b, d, s0)
    idx = d.component(cid)

    nsample = int(cfg["sample"])
    if nsample > 0:
        rng = np.random.default_rng(int(cfg["seed"]))
        take = min(nsample, comp_dim)
        cols = np.sort(rng.choice(idx, size=take, replace=False))
    else:
        cols = np.array([b.index(s0)])
    psi0 = np.zeros((b.dim, len(cols)), dtype=np.complex128)
    psi0[cols, np.arange(len(cols))] = 1.0

    plan = BipartitionPlan(b)
    Sp = page_value_sector(b.L, b.N)
    page_samples = cfg["page_samples"]
    SpK, SpK_err = page_value_component(
        b, idx, plan,
        samples=None if page_samples is None else int(page_samples),
        seed=int(cfg["page_seed"]),
    )
    nK = krylov_density(d, b, cid)
    window = _parse_window(cfg["window"])

    single = len(cols) == 1
    target_vec = None
    target_name = cfg["transfer_target"]
    if target_name is None and str(cfg["initial"]) == "domain":
        target_name = "domain-partner"
    if single and target_name is not None:
        target_vec = np.zeros(b.dim, dtype=np.complex128)
        target_vec[b.index(_initial_state(target_name, b))] = 1.0

    if driven:
        ks = _cycle_schedule(cfg["cycles"], cfg["stride"], window)
        samples = evolve_stroboscopic(p, b, psi0, ks[-1], ks, prop_cfg)
        unit = 1.0
    else:
        times, unit = _static_times(cfg["t_max_periods"], cfg["samples"], p)
        window = (window[0] * unit, window[1] * unit)
        samples = evolve_static(p, b, psi0, times, prop_cfg)

    pts, S_mean, fid, trans = [], [], [], []
    prof_acc = np.zeros(b.L)
    prof_n = 0
    max_drift = 0.0
    for t, block in samples:
        cols_S = []
        for c in range(block.shape[1]):
            v = block[:, c]
            nrm = np.linalg.norm(v)
            max_drift = max(max_drift, abs(nrm - 1.0))
            cols_S.append(entanglement_entropy(v / nrm, plan))
        pts.append(t)
        S_mean.append(float(np.mean(cols_S)))
        if single:
            fid.append(fidelity(block[:, 0], psi0[:, 0]))
            if target_vec is not None:
                trans.append(fidelity(block[:, 0], target_vec))
        if window[0] <= t <= window[1]:
            dens = np.abs(block) ** 2
            prof_acc += (dens / dens.sum(axis=0)).sum(axis=1) @ b.occupations / block.shape[1]
            prof_n += 1

    out = _outdir(cfg)
    point_name = "k" if driven else "t"
    _write_csv(
        out / "ee.csv",
        f"{point_name},S,S_over_Sp",
        [(t, s, s / Sp) for t, s in zip(pts, S_mean)],
    )
    outputs = ["ee.csv"]
    series = TimeSeries(pts, S_mean, label="S", point_name=point_name)
    S_bar = saturated_average(series, window)

    if prof_n:
        profile = prof_acc / prof_n
        _write_csv(
            out / "profile.csv",
            "j,n_dyn,n_component",
            [(j, profile[j], nK[j]) for j in range(b.L)],
        )
        outputs.append("profile.csv")
    if single:
        header = f"{point_name},fidelity" + (",transfer" if target_vec is not None else "")
        rows = (
            [(t, f, tr) for t, f, tr in zip(pts, fid, trans)]
            if target_vec is not None
            else [(t, f) for t, f in zip(pts, fid)]
        )
        _write_csv(out / "fidelity.csv", header, rows)
        outputs.append("fidelity.csv")

    refs = {
        "hamiltonian": tag,
        "component": cid,
        "component_dim": comp_dim,
        "page_sector": Sp,
        "page_component": SpK,
        "page_component_stderr": SpK_err,
        "saturated_S": S_bar,
        "saturated_over_page": S_bar / Sp,
        "saturated_over_component_page": S_bar / SpK if SpK > 0 else None,
        "max_norm_drift": max_drift,
    }
    _write_json(out / "refs.json", refs)
    outputs.append("refs.json")

    if cfg["plots"]:
        norm = TimeSeries(pts, np.array(S_mean) / Sp, label="S/Sp", point_name=point_name)
        plotting.series_figure(
            out / "ee.png", [norm], {"S_p[K]/S_p": SpK / Sp},
            xlabel=point_name, ylabel="S/Sp",
        )
        outputs.append("ee.png")
        if prof_n:
            plotting.profile_figure(out / "profile.png", profile, nK)
            outputs.append("profile.png")
        if single:
            fser = [TimeSeries(pts, fid, label="fidelity", point_name=point_name)]
            if target_vec is not None:
                fser.append(TimeSeries(pts, trans, label="transfer", point_name=point_name))
            plotting.series_figure(
                out / "fidelity.png", fser, xlabel=point_name, ylabel="overlap"
            )
            outputs.append("fidelity.png")
    _write_manifest(out, "evolve", cfg, outputs, refs)
    return 0


AUTOCORR_DEFAULTS = {
    **_MODEL_DEFAULTS, **_PROP_DEFAULTS,
    "site": "last", "seed": 0,
    "cycles": 200, "stride": 1, "window": "150:200",
    "t_max_periods": 200.0, "samples": 400,
    "cache": None, "out": "autocorr-out",
}

_BOUND_TAGS = ("eff-u0", "eff-omega1", "eff-omega2")


def _site(cfg, b):
    if str(cfg["site"]) == "last":
        return b.L - 1
    try:
        j = int(cfg["site"])
    except ValueError:
        raise ConfigError(f"--site must be an integer or 'last', got {cfg['site']!r}")
    if not 0 <= j < b.L:
        raise ConfigError(f"site {j} outside 0..{b.L - 1}")
    return j


def _bounds(p, b, j, cache_dir):
    out = {}
    for tag in _BOUND_TAGS:
        d = _ref_decomposition(p, b, tag, cache_dir)
        out[tag] = autocorr_bound(d, b, j)
    return out


def cmd_autocorr(cfg):
    p = _params(cfg)
    b = p.sector()
    j = _site(cfg, b)
    prop_cfg = _prop_config(cfg)
    psi = random_infinite_temperature_state(b, int(cfg["seed"]))
    driven = p.u != 0
    if driven and p.omega is None:
        raise ConfigError("driven evolution (u != 0) needs --omega")
    window = _parse_window(cfg["window"])
    if driven:
        ks = _cycle_schedule(cfg["cycles"], cfg["stride"], window)
        series = autocorrelation_driven(p, b, j, psi, ks, prop_cfg)
    else:
        times, unit = _static_times(cfg["t_max_periods"], cfg["samples"], p)
        window = (window[0] * unit, window[1] * unit)
        series = autocorrelation_static(p, b, j, psi, times, prop_cfg)
    cbar = saturated_average(series, window)
    bounds = _bounds(p, b, j, cfg["cache"])
    out = _outdir(cfg)
    series.write_csv(out / "autocorr.csv")
    refs = {
        "site": j,
        "active_tag": _reference_tag(p),
        "bounds": bounds,
        "saturated_C": cbar,
        "max_imag": series.meta["max_imag"],
    }
    _write_json(out / "refs.json", refs)
    outputs = ["autocorr.csv", "refs.json"]
    if cfg["plots"]:
        plotting.series_figure(
            out / "autocorr.png", [series],
            {f"C[{t}]": v for t, v in bounds.items()},
            xlabel=series.point_name, ylabel=f"C_{j}",
        )
        outputs.append("autocorr.png")
    _write_manifest(out, "autocorr", cfg, outputs, refs)
    return 0


SWEEP_DEFAULTS = {
    **_MODEL_DEFAULTS, **_PROP_DEFAULTS,
    "observable": "autocorr", "grid": "0.5,1,2",
    "initial": "cdw1", "site": "last", "seed": 0,
    "cycles": 200, "stride": 1, "window": "150:200",
    "page_samples": None, "page_seed": 0,
    "cache": None, "out": "sweep-out",
}


def cmd_sweep(cfg):
    base = _params(cfg)
    if base.u == 0:
        raise ConfigError("sweep varies the drive frequency; set u != 0")
    b = base.sector()
    grid = _parse_floats(cfg["grid"])
    if any(x <= 0 for x in grid):
        raise ConfigError("grid values g/omega must be positive")
    prop_cfg = _prop_config(cfg)
    window = _parse_window(cfg["window"])
    ks = _cycle_schedule(cfg["cycles"], cfg["stride"], window)
    obs = cfg["observable"]
    out = _outdir(cfg)

    if obs == "autocorr":
        j = _site(cfg, b)
        psi = random_infinite_temperature_state(b, int(cfg["seed"]))
        refs = {"bounds": _bounds(base, b, j, cfg["cache"])}
        rows = []
        for x in grid:
            px = base.with_omega(base.g / x)
            series = autocorrelation_driven(px, b, j, psi, ks, prop_cfg)
            rows.append((x, px.omega, saturated_average(series, window)))
        header = "g_over_omega,omega,C_bar"
        values = [r[2] for r in rows]
        ylabel = f"C_{j} saturated"
        ref_lines = {f"C[{t}]": v for t, v in refs["bounds"].items()}
    elif obs == "ee":
        s0 = _initial_state(cfg["initial"], b)
        plan = BipartitionPlan(b)
        Sp = page_value_sector(b.L, b.N)
        refs = {"page_sector": Sp, "component_pages": {}}
        for tag in _BOUND_TAGS:
            d = _ref_decomposition(base, b, tag, cfg["cache"])
            cid, _ = locate(b, d, s0)
            val, err = page_value_component(
                b, d.component(cid), plan,
                samples=None if cfg["page_samples"] is None else int(cfg["page_samples"]),
                seed=int(cfg["page_seed"]),
            )
            refs["component_pages"][tag] = {
                "value": val, "stderr": err, "normalized": val / Sp,
            }
        psi0 = np.zeros(b.dim, dtype=np.complex128)
        psi0[b.index(s0)] = 1.0
        rows = []
        for x in grid:
            px = base.with_omega(base.g / x)
            vals, pts = [], []
            for k, v in evolve_stroboscopic(px, b, psi0, ks[-1], ks, prop_cfg):
                pts.append(k)
                vals.append(entanglement_entropy(v / np.linalg.norm(v), plan))
            sbar = saturated_average(TimeSeries(pts, vals), window)
            rows.append((x, px.omega, sbar, sbar / Sp))
        header = "g_over_omega,omega,S_bar,S_bar_over_Sp"
        values = [r[3] for r in rows]
        ylabel = "S/Sp saturated"
        ref_lines = {
            f"S_p[{t}]/S_p": v["normalized"]
            for t, v in refs["component_pages"].items()
        }
    else:
        raise ConfigError(f"unknown observable {obs!r}; use 'autocorr' or 'ee'")

    _write_csv(out / "sweep.csv", header, rows)
    _write_json(out / "refs.json", refs)
    outputs = ["sweep.csv", "refs.json"]
    if cfg["plots"]:
        plotting.sweep_figure(
            out / "sweep.png", [r[0] for r in rows], values, ref_lines,
            ylabel=ylabel,
        )
        outputs.append("sweep.png")
    _write_manifest(out, "sweep", cfg, outputs, refs)
    return 0


PHASE_MAP_DEFAULTS = {
    **_MODEL_DEFAULTS, **_PROP_DEFAULTS,
    "L": 12, "u": 1.0,
    "g_grid": "2,5,15,30,50", "ratio_grid": "0.25,0.5,0.75,1,1.5,2",
    "site": "last", "seed": 0,
    "cycles": 200, "stride": 1, "window": "150:200",
    "cache": None, "out": "phase-map-out",
}


def cmd_phase_map(cfg):
    cfg = dict(cfg)
    preset = cfg.get("preset")
    if preset and cfg["L"] == PRESETS[preset].get("L") and "L_map" in PRESETS[preset]:
        cfg["L"] = PRESETS[preset]["L_map"]
    p0 = _params(cfg)
    if p0.u == 0:
        raise ConfigError("the map varies the drive; set u != 0")
    b = p0.sector()
    j = _site(cfg, b)
    g_grid = _parse_floats(cfg["g_grid"])
    ratio_grid = _parse_floats(cfg["ratio_grid"])
    prop_cfg = _prop_config(cfg)
    window = _parse_window(cfg["window"])
    ks = _cycle_schedule(cfg["cycles"], cfg["stride"], window)
    psi = random_infinite_temperature_state(b, int(cfg["seed"]))
    rows = []
    grid = np.empty((len(ratio_grid), len(g_grid)))
    for col, g in enumerate(g_grid):
        for row, x in enumerate(ratio_grid):
            px = dataclasses.replace(p0, g=float(g), U=float(g), omega=float(g) / x)
            series = autocorrelation_driven(px, b, j, psi, ks, prop_cfg)
            cbar = saturated_average(series, window)
            grid[row, col] = cbar
            rows.append((g, x, px.omega, cbar))
    out = _outdir(cfg)
    _write_csv(out / "phase_map.csv", "g,g_over_omega,omega,C_bar", rows)
    outputs = ["phase_map.csv"]
    if cfg["plots"]:
        plotting.heatmap_figure(out / "phase_map.png", g_grid, ratio_grid, grid)
        outputs.append("phase_map.png")
    _write_manifest(out, "phase-map", cfg, outputs, {"site": j})
    return 0


TDPT_DEFAULTS = {
    **_MODEL_DEFAULTS, **_PROP_DEFAULTS,
    "L": 6, "g": 20.0, "u": 1.0, "omega": 13.7,
    "J_list": "1,0.5,0.25", "out": "tdpt-out",
}


def cmd_tdpt_check(cfg):
    p = _params(cfg)
    if p.omega is None:
        raise ConfigError("tdpt-check needs --omega")
    b = p.sector()
    prop_cfg = _prop_config(cfg)
    Js = [float(x) for x in _parse_floats(cfg["J_list"])]
    rows = []
    for J in Js:
        pJ = dataclasses.replace(p, J=J)
        F = floquet_matrix(pJ, b, prop_cfg).matrix
        defect = float(np.linalg.norm(F - tdpt_first_order_F(pJ, b), 2))
        rows.append((J, defect))
    ratios = [rows[i][1] / rows[i + 1][1] for i in range(len(rows) - 1)]

    residuals = {}
    for label, om, kind in (
        ("omega1", p.g, "eff-omega1"),
        ("omega2", 2.0 * p.g, "eff-omega2-full"),
    ):
        pr = dataclasses.replace(p, U=p.g, omega=om)
        A = (1j / pr.period) * tdpt_F1(pr, b).to_dense()
        H = build_effective(pr, b, kind).to_dense()
        np.fill_diagonal(H, 0.0)
        residuals[label] = float(np.abs(A - H).max())

    out = _outdir(cfg)
    _write_csv(out / "tdpt.csv", "J,defect", rows)
    results = {"defect_ratios": ratios, "resonance_residuals": residuals}
    _write_json(out / "tdpt.json", results)
    outputs = ["tdpt.csv", "tdpt.json"]
    if cfg["plots"]:
        plotting.defect_figure(out / "defect.png", [r[0] for r in rows], [r[1] for r in rows])
        outputs.append("defect.png")
    _write_manifest(out, "tdpt-check", cfg, outputs, results)
    return 0


# -- argument parsing ------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _add_common(sp):
    sp.add_argument("--config", help="JSON file with config keys")
    sp.add_argument("--preset", help=f"parameter frame: {', '.join(sorted(PRESETS))}")
    sp.add_argument("--out", help="output directory")
    sp.add_argument("--no-plots", action="store_true", help="skip figure rendering")


def _add_model(sp):
    sp.add_argument("--L", type=int)
    sp.add_argument("--N", type=int)
    sp.add_argument("--J", type=float)
    sp.add_argument("--U", type=float)
    sp.add_argument("--g", type=float)
    sp.add_argument("--u", type=float)
    sp.add_argument("--omega", type=float)


def _add_prop(sp):
    sp.add_argument("--substeps", type=int)
    sp.add_argument("--scheme", choices=SCHEMES)
    sp.add_argument("--prop-tol", dest="prop_tol", type=float)
    sp.add_argument("--conv-tol", dest="conv_tol", type=float)
    sp.add_argument("--max-substeps", dest="max_substeps", type=int)


def _build_parser():
    parser = _Parser(prog="starkfrag", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)

    sp = sub.add_parser("basis", help="dump the sector table and charge groups")
    _add_common(sp)
    _add_model(sp)

    sp = sub.add_parser("decompose", help="Krylov components of one Hamiltonian")
    _add_common(sp)
    _add_model(sp)
    sp.add_argument("--hamiltonian", choices=HAMILTONIAN_TAGS)
    sp.add_argument("--tol", type=float)
    sp.add_argument("--top", type=int)
    sp.add_argument("--cache")

    sp = sub.add_parser("scaling", help="largest-component ratio versus system size")
    _add_common(sp)
    _add_model(sp)
    sp.add_argument("--hamiltonian", choices=HAMILTONIAN_TAGS)
    sp.add_argument("--L-list", dest="L_list")
    sp.add_argument("--cache")

    sp = sub.add_parser("evolve", help="entanglement/density/fidelity dynamics")
    _add_common(sp)
    _add_model(sp)
    _add_prop(sp)
    sp.add_argument("--hamiltonian", choices=HAMILTONIAN_TAGS,
                    help="reference splitting (default: pick from the drive)")
    sp.add_argument("--initial")
    sp.add_argument("--sample", type=int, help="random Fock states from the component")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--page-samples", dest="page_samples", type=int)
    sp.add_argument("--page-seed", dest="page_seed", type=int)
    sp.add_argument("--cycles", type=int)
    sp.add_argument("--stride", type=int)
    sp.add_argument("--window")
    sp.add_argument("--t-max-periods", dest="t_max_periods", type=float)
    sp.add_argument("--samples", type=int)
    sp.add_argument("--transfer-target", dest="transfer_target")
    sp.add_argument("--cache")

    sp = sub.add_parser("autocorr", help="infinite-temperature density autocorrelation")
    _add_common(sp)
    _add_model(sp)
    _add_prop(sp)
    sp.add_argument("--site")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--cycles", type=int)
    sp.add_argument("--stride", type=int)
    sp.add_argument("--window")
    sp.add_argument("--t-max-periods", dest="t_max_periods", type=float)
    sp.add_argument("--samples", type=int)
    sp.add_argument("--cache")

    sp = sub.add_parser("sweep", help="saturated observable versus g/omega")
    _add_common(sp)
    _add_model(sp)
    _add_prop(sp)
    sp.add_argument("--observable", choices=("autocorr", "ee"))
    sp.add_argument("--grid")
    sp.add_argument("--initial")
    sp.add_argument("--site")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--cycles", type=int)
    sp.add_argument("--stride", type=int)
    sp.add_argument("--window")
    sp.add_argument("--page-samples", dest="page_samples", type=int)
    sp.add_argument("--page-seed", dest="page_seed", type=int)
    sp.add_argument("--cache")

    sp = sub.add_parser("phase-map", help="saturated autocorrelation over (g, g/omega)")
    _add_common(sp)
    _add_model(sp)
    _add_prop(sp)
    sp.add_argument("--g-grid", dest="g_grid")
    sp.add_argument("--ratio-grid", dest="ratio_grid")
    sp.add_argument("--site")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--cycles", type=int)
    sp.add_argument("--stride", type=int)
    sp.add_argument("--window")
    sp.add_argument("--cache")

    sp = sub.add_parser("tdpt-check", help="first-order propagator defect scaling")
    _add_common(sp)
    _add_model(sp)
    _add_prop(sp)
    sp.add_argument("--J-list", dest="J_list")
    return parser


_DISPATCH = {
    "basis": (BASIS_DEFAULTS, cmd_basis),
    "decompose": (DECOMPOSE_DEFAULTS, cmd_decompose),
    "scaling": (SCALING_DEFAULTS, cmd_scaling),
    "evolve": (EVOLVE_DEFAULTS, cmd_evolve),
    "autocorr": (AUTOCORR_DEFAULTS, cmd_autocorr),
    "sweep": (SWEEP_DEFAULTS, cmd_sweep),
    "phase-map": (PHASE_MAP_DEFAULTS, cmd_phase_map),
    "tdpt-check": (TDPT_DEFAULTS, cmd_tdpt_check),
}


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        defaults, fn = _DISPATCH[args.verb]
        defaults = dict(defaults)
        defaults.setdefault("out", f"{args.verb}-out")
        cfg = _resolve(args.verb, defaults, args)
        return fn(cfg)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
