"""Command-line entry point: ``geomq geometry|modes|effective|bands|oracle|compare``.

Settings are merged in the order built-in defaults < ``--config`` file <
command-line flags, and the merged configuration is checked against the
shipped JSON schema before anything is computed.

Exit codes: 0 success (including an inconclusive comparison report),
2 usage or configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import json
import sys
from importlib import resources

import numpy as np
import jsonschema

from . import geometry as geo
from .models import (
    EMField,
    SOCParams,
    build_charged_circular,
    build_charged_square,
    build_soc_circular,
    build_soc_square,
    build_spinless_circular,
    build_spinless_square,
    model_from_dict,
    model_to_dict,
)
from .modes import RadialConvergenceError, mode_table, mode_table_csv
from .oracle import OracleResult, ResourceLimitError, StagnationError, convergence_study, extract_gauge_shift
from .spectrum import AperiodicModelError, EigenSolverError, bands_to_csv, bloch_bands

__all__ = ["main", "load_schema", "validate_config", "ConfigError", "build_report"]

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

DEFAULT_CURVE = {"kind": "helix", "r": 3.0, "c": 4.0}


class ConfigError(ValueError):
    pass


def load_schema() -> dict:
    return json.loads(resources.files("geomq").joinpath("config.schema.json").read_text())


def validate_config(cfg: dict) -> None:
    v = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(v.iter_errors(cfg), key=lambda e: list(e.path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {e.message}")


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _g(x) -> str:
    return format(float(x), ".17g")


# --------------------------------------------------------------------------
# flag -> config mapping


def _set(cfg: dict, path: str, value):
    node = cfg
    keys = path.split(".")
    for k in keys[:-1]:
        node = node.setdefault(k, {})
    node[keys[-1]] = value


def _get(cfg: dict, path: str, default=None):
    node = cfg
    for k in path.split("."):
        if not isinstance(node, dict) or k not in node:
            return default
        node = node[k]
    return node


CURVE_FLAGS = {"length": "length", "R": "R", "r": "r", "c": "c", "turns": "turns", "x": "x", "y": "y", "z": "z",
               "t_range": "t_range"}
FLAG_PATHS = {
    "seed": "seed",
    "mass": "mass",
    "charge": "charge",
    "out": "output.path",
    "side": "output.side",
    "n": "sampling.n",
    "propagate": "sampling.propagate",
    "w": "modes.w",
    "ls": "modes.l",
    "model": "model",
    "l": "physics.l",
    "mode": "physics.mode",
    "half_gauge": "physics.half_gauge",
    "As": "physics.em.A_s_bar",
    "A0": "physics.em.A_0",
    "Bs": "physics.em.B_s",
    "alpha_s": "physics.soc.alpha_s",
    "alpha_n": "physics.soc.alpha_n",
    "alpha_b": "physics.soc.alpha_b",
    "n_k": "bands.n_k",
    "n_cell": "bands.n_cell",
    "n_bands": "bands.n_bands",
    "order": "bands.order",
    "spinor_phase": "bands.spinor_phase",
    "period": "bands.period",
    "cross_section": "oracle.cross_section",
    "eps": "oracle.eps",
    "k": "oracle.k",
    "grid": "oracle.grid",
    "branches": "oracle.branches",
    "threads": "oracle.threads",
    "max_dof": "oracle.max_dof",
    "s_scheme": "oracle.s_scheme",
    "coarse_factor": "oracle.coarse_factor",
    "companion": "oracle.companion",
}


def merge_config(args: argparse.Namespace) -> dict:
    cfg: dict = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
        validate_config(cfg)
    cfg = copy.deepcopy(cfg)
    given = vars(args)
    if given.get("curve") is not None:
        cfg["curve"] = dict(DEFAULT_CURVE) if given["curve"] == DEFAULT_CURVE["kind"] else {"kind": given["curve"]}
    for flag, key in CURVE_FLAGS.items():
        if given.get(flag) is not None:
            cfg.setdefault("curve", dict(DEFAULT_CURVE))
            cfg["curve"][key] = list(given[flag]) if flag == "t_range" else given[flag]
    for flag, path in FLAG_PATHS.items():
        if given.get(flag) is not None:
            v = given[flag]
            _set(cfg, path, list(v) if isinstance(v, (list, tuple)) else v)
    validate_config(cfg)
    return cfg


def curve_from_config(cfg: dict):
    d = dict(cfg.get("curve", DEFAULT_CURVE))
    try:
        return geo.curve_from_dict(d)
    except TypeError as exc:
        raise ConfigError(f"curve parameters do not fit kind {d.get('kind')!r}: {exc}") from exc


# --------------------------------------------------------------------------
# output plumbing


def _emit(text: str, path: str | None):
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _emit_side(text: str, path: str | None):
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)


# --------------------------------------------------------------------------
# subcommands


def cmd_geometry(cfg: dict) -> int:
    curve = curve_from_config(cfg)
    n = int(_get(cfg, "sampling.n", 64))
    L = geo.curve_length(curve)
    s = L * np.arange(n) / n
    if _get(cfg, "sampling.propagate", False):
        frames = geo.propagate_frames(curve, s)
    else:
        frames = geo.frames_on(curve, s)
    _emit(geo.frames_to_csv(frames), _get(cfg, "output.path"))
    _emit_side(_dump({"curve": geo.curve_to_dict(curve), "curve_hash": geo.curve_hash(curve), "n": n,
                      "length": L}), _get(cfg, "output.side"))
    return EXIT_OK


def cmd_modes(cfg: dict) -> int:
    w = float(_get(cfg, "modes.w", 1.0))
    ls = [int(x) for x in _get(cfg, "modes.l", [0, 1, 2, 3, 4, 5])]
    mass = float(cfg.get("mass", 1.0))
    _emit(mode_table_csv(ls, w, mass), _get(cfg, "output.path"))
    _emit_side(_dump({"w": w, "mass": mass, "rows": mode_table(ls, w, mass)}), _get(cfg, "output.side"))
    return EXIT_OK


def build_model_from_config(cfg: dict):
    kind = cfg.get("model", "spinless-square")
    curve = curve_from_config(cfg)
    mass = float(cfg.get("mass", 1.0))
    charge = float(cfg.get("charge", 1.0))
    phys = cfg.get("physics", {})
    circular = kind.endswith("circular")
    if "l" in phys and not circular:
        raise ConfigError(f"--l is meaningless for square confinement ({kind})")
    if "em" in phys and not kind.startswith("charged"):
        raise ConfigError(f"electromagnetic fields need a charged model, not {kind}")
    if "soc" in phys and not kind.startswith("soc"):
        raise ConfigError(f"SOC coefficients need an soc model, not {kind}")
    if "half_gauge" in phys and kind != "soc-circular":
        raise ConfigError("half_gauge applies to soc-circular only")
    if "charge" in cfg and not kind.startswith("charged"):
        raise ConfigError("charge applies to charged models only")
    l = int(phys.get("l", 0))
    em = EMField(**phys.get("em", {}))
    soc = SOCParams(**phys.get("soc", {}))
    if kind == "spinless-square":
        m = build_spinless_square(curve, mass)
    elif kind == "spinless-circular":
        m = build_spinless_circular(curve, l, mass)
    elif kind == "charged-square":
        m = build_charged_square(curve, em, mass, charge)
    elif kind == "charged-circular":
        m = build_charged_circular(curve, em, l, mass, charge)
    elif kind == "soc-square":
        m = build_soc_square(curve, soc, mass)
    else:
        m = build_soc_circular(curve, soc, l, mass, half_gauge=bool(phys.get("half_gauge", True)))
    return m.with_mode(phys.get("mode", "paper_verbatim")), curve


def _sample_points(curve, model, n: int) -> np.ndarray:
    P = model.period if model.period is not None else geo.curve_length(curve)
    return P * np.arange(n) / n


def cmd_effective(cfg: dict) -> int:
    model, curve = build_model_from_config(cfg)
    n = int(_get(cfg, "sampling.n", 64))
    d = model_to_dict(model, _sample_points(curve, model, n))
    _emit(_dump(d), _get(cfg, "output.path"))
    return EXIT_OK


def cmd_bands(cfg: dict, model_json: str | None = None) -> int:
    if model_json:
        try:
            with open(model_json) as fh:
                md = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read model JSON: {exc}") from exc
        model = model_from_dict(md)
        chash = md.get("curve_hash")
    else:
        model, curve = build_model_from_config(cfg)
        chash = geo.curve_hash(curve)
    b = cfg.get("bands", {})
    bands = bloch_bands(
        model,
        n_k=int(b.get("n_k", 41)),
        n_cell=int(b.get("n_cell", 512)),
        period=b.get("period"),
        n_bands=int(b.get("n_bands", 6)),
        order=int(b.get("order", 2)),
        spinor_phase=b.get("spinor_phase"),
    )
    _emit(bands_to_csv(bands), _get(cfg, "output.path"))
    _emit_side(_dump({
        "curve_hash": chash,
        "period": bands.period,
        "k": bands.k.tolist(),
        "energies_re": bands.energies.real.tolist(),
        "energies_im": bands.energies.imag.tolist(),
        "connected_re": bands.connected.real.tolist(),
        "flags": list(bands.flags),
    }), _get(cfg, "output.side"))
    return EXIT_OK


def cmd_oracle(cfg: dict) -> int:
    curve = curve_from_config(cfg)
    o = cfg.get("oracle", {})
    family = o.get("cross_section", "disk")
    default_grid = [1, 31, 31] if family == "square" else [1, 24, 33]
    res = convergence_study(
        curve,
        family,
        eps_list=o.get("eps", [0.2, 0.14, 0.1]),
        k_list=o.get("k", [-0.2, 0.0, 0.2]),
        grid=tuple(o.get("grid", default_grid)),
        branches=o.get("branches", [0]),
        mass=float(cfg.get("mass", 1.0)),
        s_scheme=o.get("s_scheme", "spectral"),
        seed=int(cfg.get("seed", 0)),
        threads=o.get("threads"),
        max_dof=int(o.get("max_dof", 1_000_000)),
        companion=bool(o.get("companion", True)),
        coarse_factor=float(o.get("coarse_factor", 1.5)),
    )
    _emit(_dump(res.to_dict()), _get(cfg, "output.path"))
    lines = ["eps,k,level,energy,L"]
    for ie, eps in enumerate(res.eps):
        for ik, k in enumerate(res.k):
            vals = res.eigenvalues[ie][ik]
            labels = res.labels[ie][ik]
            for j, e in enumerate(vals):
                lab = _g(labels[j]) if labels else "nan"
                lines.append(f"{_g(eps)},{_g(k)},{j},{_g(e)},{lab}")
    _emit_side("\n".join(lines) + "\n", _get(cfg, "output.side"))
    return EXIT_OK


# --------------------------------------------------------------------------
# comparison report


def _status(fitted, sd, predicted, tol):
    if fitted is None:
        return "inconclusive"
    return "PASS" if abs(fitted - predicted) <= tol else "FAIL"


def build_report(model: dict, oracle: dict) -> dict:
    """Side-by-side predicted and fitted ``c_kappa``, ``c_tau`` and ``k0``."""
    if model.get("curve_hash") != oracle.get("curve_hash"):
        raise ConfigError(
            f"curve hash mismatch: model {model.get('curve_hash')} vs oracle {oracle.get('curve_hash')}"
        )
    mass = float(model["mass"])
    vterms = model.get("terms", {}).get("V", [])
    kind = model.get("kind", "custom")
    l = int(model.get("params", {}).get("l", 0))
    fit = oracle["fit"]
    curve = geo.curve_from_dict(oracle["curve"])
    kap, tau = (float(v[0]) for v in geo.curvature_torsion(curve, np.array([0.0])))
    pred_ck = -1.0 / (8 * mass) if "curvature_gp" in vterms else 0.0
    pred_ct = -1.0 / (4 * mass) if "torsion_gp" in vterms else 0.0
    A = np.array([s["A"] for s in model["samples"]])
    pred_k0 = float(np.mean(A)) if A.size else 0.0
    polar = oracle["cross_section"] != "square"
    branch = l if polar else 0
    rows = []
    tol_ck = 0.02 * abs(pred_ck) if pred_ck else 1e-3
    if kap != 0:
        rows.append({"quantity": "c_kappa", "predicted": pred_ck, "fitted": fit.get("c_kappa"),
                     "sd": fit.get("c_kappa_sd"), "tolerance": tol_ck,
                     "status": _status(fit.get("c_kappa"), fit.get("c_kappa_sd"), pred_ck, tol_ck)})
    tol_ct = 0.1 / (4 * mass)
    if tau != 0:
        rows.append({"quantity": "c_tau", "predicted": pred_ct, "fitted": fit.get("c_tau"),
                     "sd": fit.get("c_tau_sd"), "tolerance": tol_ct,
                     "status": _status(fit.get("c_tau"), fit.get("c_tau_sd"), pred_ct, tol_ct)})
    k0_fit, k0_sd, k0_inc = None, None, True
    try:
        res = OracleResult.from_dict(oracle)
        g = extract_gauge_shift(res, branch)
        k0_fit, k0_sd, k0_inc = g["k0"], g["sd"], g["inconclusive"]
    except KeyError:
        pass
    tol_k0 = 0.05 * abs(pred_k0) if pred_k0 else 1e-3
    rows.append({"quantity": "k0", "branch": branch, "predicted": pred_k0, "fitted": None if k0_inc else k0_fit,
                 "sd": k0_sd, "tolerance": tol_k0,
                 "status": "inconclusive" if k0_inc else _status(k0_fit, k0_sd, pred_k0, tol_k0)})
    inconclusive = any(r["status"] == "inconclusive" for r in rows) or bool(
        {"non_monotone", "non_monotone_torsion"} & set(oracle.get("flags", [])))
    adjudicated = None
    if tau != 0:
        ct, sd = fit.get("c_tau"), fit.get("c_tau_sd")
        if ct is None:
            verdict = "inconclusive"
        else:
            verdict = "agree" if abs(ct - pred_ct) <= max(tol_ct, 2 * (sd or 0.0)) else "disagree"
        adjudicated = {
            "question": "torsion-induced potential for this confinement",
            "model_kind": kind,
            "cross_section": oracle["cross_section"],
            "model_has_torsion_term": "torsion_gp" in vterms,
            "predicted_c_tau": pred_ct,
            "fitted_c_tau": ct,
            "fitted_c_tau_sd": sd,
            "verdict": verdict,
        }
    return {
        "curve_hash": model.get("curve_hash"),
        "model_kind": kind,
        "cross_section": oracle["cross_section"],
        "kappa": kap,
        "tau": tau,
        "rows": rows,
        "adjudicated": adjudicated,
        "inconclusive": inconclusive,
        "oracle_flags": oracle.get("flags", []),
    }


def _fmt(x):
    return "n/a" if x is None else f"{x:.6g}"


def report_markdown(rep: dict) -> str:
    out = [
        "# Effective model vs tube oracle",
        "",
        f"- curve hash: `{rep['curve_hash']}`",
        f"- model: `{rep['model_kind']}`, oracle cross-section: `{rep['cross_section']}`",
        f"- kappa = {rep['kappa']:.6g}, tau = {rep['tau']:.6g}",
        f"- inconclusive: {'yes' if rep['inconclusive'] else 'no'}",
        "",
        "| quantity | predicted | fitted | sd | tolerance | status |",
        "|---|---|---|---|---|---|",
    ]
    for r in rep["rows"]:
        q = r["quantity"] + (f" (branch {r['branch']})" if "branch" in r else "")
        out.append(f"| {q} | {_fmt(r['predicted'])} | {_fmt(r['fitted'])} | {_fmt(r['sd'])} | "
                   f"{_fmt(r['tolerance'])} | {r['status']} |")
    adj = rep.get("adjudicated")
    if adj:
        out += ["", "## Adjudicated: torsion potential", "",
                f"The model `{adj['model_kind']}` predicts c_tau = {_fmt(adj['predicted_c_tau'])}; "
                f"the `{adj['cross_section']}` oracle fits c_tau = {_fmt(adj['fitted_c_tau'])} "
                f"+/- {_fmt(adj['fitted_c_tau_sd'])}. Verdict: **{adj['verdict']}**."]
    return "\n".join(out) + "\n"


def cmd_compare(cfg: dict, effective_json: str, oracle_json: str) -> int:
    try:
        with open(effective_json) as fh:
            model = json.load(fh)
        with open(oracle_json) as fh:
            oracle = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read inputs: {exc}") from exc
    rep = build_report(model, oracle)
    _emit(report_markdown(rep), _get(cfg, "output.path"))
    _emit_side(_dump(rep), _get(cfg, "output.side"))
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


def _common(p: argparse.ArgumentParser, side_name: str | None):
    p.add_argument("--config", help="JSON config file (flags override its keys)")
    p.add_argument("--seed", type=int)
    p.add_argument("--mass", type=float)
    p.add_argument("--out", help="primary output file (default: stdout)")
    if side_name:
        p.add_argument(f"--{side_name}", dest="side", help=f"secondary {side_name.upper()} output file")


def _curve_flags(p: argparse.ArgumentParser):
    p.add_argument("--curve", choices=["line", "circle", "helix", "parametric"])
    p.add_argument("--length", type=float)
    p.add_argument("--R", type=float)
    p.add_argument("--r", type=float)
    p.add_argument("--c", type=float)
    p.add_argument("--turns", type=float)
    p.add_argument("--x")
    p.add_argument("--y")
    p.add_argument("--z")
    p.add_argument("--t-range", dest="t_range", type=float, nargs=2)


def _physics_flags(p: argparse.ArgumentParser):
    p.add_argument("--model", choices=["spinless-square", "spinless-circular", "charged-square",
                                        "charged-circular", "soc-square", "soc-circular"])
    p.add_argument("--l", type=int)
    p.add_argument("--mode", choices=["paper_verbatim", "hermitized"])
    p.add_argument("--full-gauge", dest="half_gauge", action="store_const", const=False)
    p.add_argument("--charge", type=float)
    p.add_argument("--As", type=float, help="constant tangential vector potential")
    p.add_argument("--A0", type=float, help="constant scalar potential")
    p.add_argument("--Bs", type=float, help="constant tangential magnetic field")
    p.add_argument("--alpha-s", dest="alpha_s", type=float)
    p.add_argument("--alpha-n", dest="alpha_n", type=float)
    p.add_argument("--alpha-b", dest="alpha_b", type=float)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="geomq", description="Geometric effects for particles confined to space curves.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("geometry", help="frame samples along a curve (CSV)")
    _common(p, "json")
    _curve_flags(p)
    p.add_argument("--n", type=int)
    p.add_argument("--propagate", action="store_const", const=True,
                   help="integrate the Frenet equations instead of closed forms")

    p = sub.add_parser("modes", help="transverse mode table (CSV)")
    _common(p, "json")
    p.add_argument("--w", type=float)
    p.add_argument("--l", dest="ls", type=int, nargs="+")

    p = sub.add_parser("effective", help="effective 1D model (JSON)")
    _common(p, None)
    _curve_flags(p)
    _physics_flags(p)
    p.add_argument("--n", type=int, help="number of sample points")

    p = sub.add_parser("bands", help="Bloch bands of an effective model (CSV)")
    _common(p, "json")
    _curve_flags(p)
    _physics_flags(p)
    p.add_argument("--model-json", dest="model_json", help="read a model written by `effective`")
    p.add_argument("--n-k", dest="n_k", type=int)
    p.add_argument("--n-cell", dest="n_cell", type=int)
    p.add_argument("--n-bands", dest="n_bands", type=int)
    p.add_argument("--order", type=int, choices=[2, 4, 6, 8])
    p.add_argument("--spinor-phase", dest="spinor_phase", choices=["periodic", "antiperiodic"])
    p.add_argument("--period", type=float)

    p = sub.add_parser("oracle", help="3D tube convergence study (JSON)")
    _common(p, "csv")
    _curve_flags(p)
    p.add_argument("--cross-section", dest="cross_section", choices=["square", "disk", "harmonic"])
    p.add_argument("--eps", type=float, nargs="+")
    p.add_argument("--k", type=float, nargs="+")
    p.add_argument("--grid", type=int, nargs=3)
    p.add_argument("--branches", type=int, nargs="+")
    p.add_argument("--threads", type=int)
    p.add_argument("--max-dof", dest="max_dof", type=int)
    p.add_argument("--s-scheme", dest="s_scheme", choices=["spectral", "fd2"])
    p.add_argument("--coarse-factor", dest="coarse_factor", type=float)
    p.add_argument("--no-companion", dest="companion", action="store_const", const=False)

    p = sub.add_parser("compare", help="compare an effective model with an oracle result (markdown + JSON)")
    _common(p, "json")
    p.add_argument("effective_json")
    p.add_argument("oracle_json")
    return ap


def _error(code: int, exc: BaseException) -> int:
    sys.stderr.write(json.dumps({"error": str(exc), "type": type(exc).__name__, "exit_code": code},
                                sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        cfg = merge_config(args)
        cmd = args.command
        if cmd == "geometry":
            return cmd_geometry(cfg)
        if cmd == "modes":
            return cmd_modes(cfg)
        if cmd == "effective":
            return cmd_effective(cfg)
        if cmd == "bands":
            return cmd_bands(cfg, args.model_json)
        if cmd == "oracle":
            return cmd_oracle(cfg)
        return cmd_compare(cfg, args.effective_json, args.oracle_json)
    except (ConfigError, geo.GeometryError, ResourceLimitError, AperiodicModelError) as exc:
        return _error(EXIT_CONFIG, exc)
    except (EigenSolverError, StagnationError, RadialConvergenceError, np.linalg.LinAlgError, ArithmeticError,
            RuntimeError) as exc:
        return _error(EXIT_NUMERIC, exc)
    except ValueError as exc:
        return _error(EXIT_CONFIG, exc)


if __name__ == "__main__":
    sys.exit(main())
