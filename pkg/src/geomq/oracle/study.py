"""Convergence studies: fit the emergent effective coefficients as the tube shrinks."""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import eigh

from ..geometry import Circle, CurveSpec, curvature_torsion, curve_from_dict, curve_hash, curve_to_dict, has_constant_metric
from .discretization import DiskHardWall, Harmonic, SquareHardWall, TubeDiscretization, assemble_apply
from .eigen import lowest_eigenpairs

__all__ = [
    "OracleResult",
    "BranchFit",
    "convergence_study",
    "extract_gauge_shift",
    "resolve_threads",
    "make_cross_section",
    "fit_parabola",
    "extrapolate_eps2",
]

FAMILIES = ("square", "disk", "harmonic")
LABEL_TOLERANCE = 0.25


def resolve_threads(configured: int | None = None) -> int:
    env = os.environ.get("GEOMQ_THREADS")
    if env:
        return max(1, int(env))
    return max(1, int(configured or 1))


def make_cross_section(family: str, eps: float, mass: float = 1.0):
    if family == "square":
        return SquareHardWall(eps)
    if family == "disk":
        return DiskHardWall(eps)
    if family == "harmonic":
        return Harmonic.from_width(eps, mass)
    raise ValueError(f"unknown cross-section family {family!r}")


# --------------------------------------------------------------------------
# fits


def fit_parabola(k, E):
    """Least squares ``E = a k^2 + b k + c``; returns vertex ``k0``, ``offset`` and their covariance."""
    k, E = np.asarray(k, float), np.asarray(E, float)
    X = np.column_stack([k * k, k, np.ones_like(k)])
    beta, *_ = np.linalg.lstsq(X, E, rcond=None)
    dof = len(k) - 3
    rss = float(np.sum((X @ beta - E) ** 2))
    s2 = rss / dof if dof > 0 else 0.0
    cov = s2 * np.linalg.inv(X.T @ X)
    a, b, c = beta
    k0 = -b / (2 * a)
    off = c - b * b / (4 * a)
    # delta method
    J = np.array([
        [b / (2 * a * a), -1 / (2 * a), 0.0],
        [b * b / (4 * a * a), -b / (2 * a), 1.0],
    ])
    C = J @ cov @ J.T
    return {"a": float(a), "k0": float(k0), "offset": float(off), "cov": C.tolist(), "rss": rss}


def extrapolate_eps2(eps, y, sigma=None):
    """Fit ``y = y0 + d eps^2`` and return ``(y0, sd(y0), d)``.

    The spread of the residuals and the per-point uncertainties both enter
    the reported standard deviation.
    """
    eps, y = np.asarray(eps, float), np.asarray(y, float)
    X = np.column_stack([np.ones_like(eps), eps * eps])
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    XtXi = np.linalg.inv(X.T @ X)
    dof = len(eps) - 2
    rss = float(np.sum((X @ beta - y) ** 2))
    var = (rss / dof if dof > 0 else 0.0) * XtXi[0, 0]
    if sigma is not None:
        P = XtXi @ X.T
        var += float(P[0] @ (np.asarray(sigma, float) ** 2 * P[0]))
    return float(beta[0]), float(np.sqrt(var)), float(beta[1])


def _monotone(y, floor: float) -> bool:
    d = np.diff(np.asarray(y, float))
    d = d[np.abs(d) > floor]
    return bool(np.all(d > 0) or np.all(d < 0))


# --------------------------------------------------------------------------
# solves


def _label_states(op, res, cluster_rtol=1e-9):
    """``<L>`` and ``<L^2>`` of each eigenvector.

    Degenerate clusters are first rotated to diagonalize ``L``.
    """
    L = op.angular_momentum()
    vals, vecs = res.values, op.to_wavefunction(res.vectors)
    if L is None:
        nan = np.full(vals.shape, np.nan)
        return vals, nan, nan.copy()
    w = op.angular_weight()
    Lv = np.empty(vals.shape)
    vecs = vecs.copy()
    i = 0
    n = vals.size
    while i < n:
        j = i + 1
        while j < n and abs(vals[j] - vals[i]) <= cluster_rtol * max(1.0, abs(vals[i])):
            j += 1
        Y = vecs[:, i:j]
        G = Y.conj().T @ (w[:, None] * Y)
        Lm = Y.conj().T @ (w[:, None] * (L @ Y))
        lv, U = eigh(0.5 * (Lm + Lm.conj().T), 0.5 * (G + G.conj().T))
        vecs[:, i:j] = Y @ U
        Lv[i:j] = lv
        i = j
    LY = L @ vecs
    L2 = np.real(np.sum(np.conj(LY) * (w[:, None] * LY), axis=0) / np.sum(np.conj(vecs) * (w[:, None] * vecs), axis=0))
    return vals, Lv, L2


def _solve_job(args):
    disc, n_eig, seed = args
    op = assemble_apply(disc)
    res = lowest_eigenpairs(op, n_eig, seed=seed)
    vals, Ls, L2 = _label_states(op, res)
    return {"values": vals, "L": Ls, "L2": L2, "residual": float(np.max(res.residuals)),
            "rel_residual": float(np.max(res.relative_residuals))}


def _pick(r, branch, polar):
    """Energy of the state carrying ``branch`` and how far its labels are from the target.

    Polar: the shell is chosen by ``sqrt<L^2>`` and the sign by ``<L>``.
    Square: ``branch`` is a level index.
    """
    values = r["values"]
    if not polar:
        return float(values[int(branch)]), 0.0
    shell = np.abs(np.sqrt(np.maximum(r["L2"], 0.0)) - abs(branch))
    cand = np.flatnonzero(shell < 0.3)
    if cand.size == 0:
        i = int(np.argmin(shell))
        return float(values[i]), float(shell[i]) + 1.0
    dl = np.abs(r["L"][cand] - branch)
    i = int(cand[np.argmin(dl)])
    return float(values[i]), float(max(shell[i], abs(r["L"][i] - branch)))


@dataclass
class BranchFit:
    branch: int
    per_eps: list
    k0: float | None
    k0_sd: float | None
    offset: float | None
    offset_sd: float | None
    resolved: bool
    flags: list = field(default_factory=list)

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class OracleResult:
    curve: dict
    curve_hash: str
    cross_section: str
    eps: list
    k: list
    eigenvalues: list
    reference: list
    labels: list
    branches: list
    fit: dict
    grid: list
    residual_max: float
    rel_residual_max: float
    flags: list = field(default_factory=list)
    settings: dict = field(default_factory=dict)
    companion: dict | None = None

    def to_dict(self) -> dict:
        return {
            "curve": self.curve,
            "curve_hash": self.curve_hash,
            "cross_section": self.cross_section,
            "eps": self.eps,
            "k": self.k,
            "eigenvalues": self.eigenvalues,
            "reference": self.reference,
            "labels": self.labels,
            "branches": [b.to_dict() if isinstance(b, BranchFit) else b for b in self.branches],
            "fit": self.fit,
            "grid": self.grid,
            "residual_max": self.residual_max,
            "rel_residual_max": self.rel_residual_max,
            "flags": self.flags,
            "settings": self.settings,
            "companion": self.companion,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "OracleResult":
        d = dict(d)
        d["branches"] = [BranchFit(**b) for b in d["branches"]]
        return cls(**d)

    def branch(self, l: int) -> BranchFit:
        for b in self.branches:
            if b.branch == l:
                return b
        raise KeyError(f"branch {l} not in result")


def _clean(x):
    return np.asarray(x).tolist()


def _run_family(curve, family, eps_list, k_list, grid, mass, s_scheme, n_eig, seed, threads,
                max_dof, period):
    polar = family != "square"
    jobs, refs = [], []
    for eps in eps_list:
        base = TubeDiscretization(curve, make_cross_section(family, eps, mass), *grid, mass=mass,
                                  s_scheme=s_scheme, period=period, max_dof=max_dof)
        refs.append((base.straightened(), n_eig, seed))
        jobs.extend((base.with_k(k), n_eig, seed) for k in k_list)
    with ThreadPoolExecutor(max_workers=threads) as ex:
        out = list(ex.map(_solve_job, refs + jobs))
    ref_out, job_out = out[: len(refs)], out[len(refs):]
    nk = len(k_list)
    table = []
    for ie in range(len(eps_list)):
        row = job_out[ie * nk:(ie + 1) * nk]
        table.append((ref_out[ie], row))
    return polar, table


def _branch_series(polar, table, k_list, branch):
    """Per eps: (k, E - E_ref) on the points where the branch label is clean.

    Near a crossing the two members of a doublet mix; those k points are
    left out of the fit. Returns the series and whether every eps kept at
    least three points.
    """
    series, ok = [], True
    for ref, row in table:
        e_ref, dr = _pick(ref, branch, polar)
        ks, E = [], []
        for k, r in zip(k_list, row):
            e, dl = _pick(r, branch, polar)
            if max(dl, dr) <= LABEL_TOLERANCE:
                ks.append(k)
                E.append(e - e_ref)
        ok = ok and len(ks) >= 3
        series.append((np.array(ks), np.array(E)))
    return series, ok


def _coarser(grid, factor, polar):
    n_s, n1, n2 = grid
    c1 = max(3, int(round(n1 / factor)))
    if not polar and n1 == n2:
        return (n_s, c1, c1)
    c2 = max(3, int(round(n2 / factor)))
    if polar and c2 % 2 == 0:
        c2 += 1
    return (n_s, c1, c2)


def _summaries(polar, table, table_coarse, eps_list, k_list, branches, grid, grid_c):
    fits, diffs = [], {}
    for br in branches:
        series, resolved = _branch_series(polar, table, k_list, br)
        flags = []
        if not resolved:
            flags.append("branch_unresolved")
            fits.append(BranchFit(int(br), [], None, None, None, None, False, flags))
            continue
        per_eps = [fit_parabola(ks, E) for ks, E in series]
        for p, (ks, _) in zip(per_eps, series):
            p["k_used"] = [float(x) for x in ks]
        offs = [p["offset"] for p in per_eps]
        k0s = [p["k0"] for p in per_eps]
        sd_off = [np.sqrt(max(p["cov"][1][1], 0.0)) for p in per_eps]
        sd_k0 = [np.sqrt(max(p["cov"][0][0], 0.0)) for p in per_eps]
        floor = 1e-10 * max(1.0, max(abs(o) for o in offs))
        if len(eps_list) >= 3 and not _monotone(offs, floor):
            flags.append("non_monotone")
        # discretization estimate from the coarser transverse grid at the finest eps
        sc, _ = _branch_series(polar, table_coarse, k_list, br)
        pc = fit_parabola(*sc[0])
        ratio = (grid[1] / grid_c[1]) ** 2
        disc_off = abs(offs[-1] - pc["offset"]) / (ratio - 1.0)
        disc_k0 = abs(k0s[-1] - pc["k0"]) / (ratio - 1.0)
        off0, off_sd, _ = extrapolate_eps2(eps_list, offs, sd_off)
        k00, k0_sd, _ = extrapolate_eps2(eps_list, k0s, sd_k0)
        off_sd = float(np.hypot(off_sd, disc_off))
        k0_sd = float(np.hypot(k0_sd, disc_k0))
        asserted = "non_monotone" not in flags
        fits.append(BranchFit(
            branch=int(br),
            per_eps=[{"eps": float(e), **p} for e, p in zip(eps_list, per_eps)],
            k0=k00 if asserted else None,
            k0_sd=k0_sd if asserted else None,
            offset=off0 if asserted else None,
            offset_sd=off_sd if asserted else None,
            resolved=resolved,
            flags=flags,
        ))
        diffs[br] = (offs, sd_off, offs[-1], pc["offset"], ratio)
    return fits, diffs


def convergence_study(curve: CurveSpec, family: str, eps_list: Sequence[float], k_list: Sequence[float],
                      grid: tuple[int, int, int], branches: Sequence[int] = (0,), mass: float = 1.0,
                      s_scheme: str = "spectral", n_eig: int | None = None, seed: int = 0,
                      threads: int | None = None, max_dof: int = 1_000_000, period: float | None = None,
                      companion: bool = True, coarse_factor: float = 1.5) -> OracleResult:
    """Shrink the cross-section and fit ``E(k) - E_ref = a (k - k0)^2 + offset`` per branch.

    ``branches`` are angular momenta for disk/harmonic sections and level
    indices for the square. ``offset`` and ``k0`` are extrapolated as
    ``eps -> 0`` with an ``eps^2`` nuisance term. For curves with constant
    curvature and torsion ``c_kappa = offset / kappa^2``. When the torsion is
    nonzero a companion circle of the same curvature is solved on identical
    grids, and ``c_tau = (offset - offset_circle) / tau^2``.
    """
    if family not in FAMILIES:
        raise ValueError(f"family must be one of {FAMILIES}")
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 3:
        raise ValueError("need at least three eps values")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps sequence must be decreasing")
    k_list = [float(k) for k in k_list]
    if len(k_list) < 3:
        raise ValueError("need at least three k values for a parabola fit")
    branches = [int(b) for b in branches]
    polar = family != "square"
    if n_eig is None:
        n_eig = (2 * max(abs(b) for b in branches) + 3) if polar else max(branches) + 2
    threads = resolve_threads(threads)
    grid = tuple(int(g) for g in grid)
    grid_c = _coarser(grid, coarse_factor, polar)
    run = dict(family=family, k_list=k_list, branches=branches, mass=mass, s_scheme=s_scheme, n_eig=n_eig,
               seed=seed, threads=threads, max_dof=max_dof, period=period)

    def study(c):
        _, table = _run_family(c, eps_list=eps_list, grid=grid, **_without(run, "branches"))
        _, table_c = _run_family(c, eps_list=eps_list[-1:], grid=grid_c, **_without(run, "branches"))
        return table, table_c

    table, table_c = study(curve)
    fits, raw = _summaries(polar, table, table_c, eps_list, k_list, branches, grid, grid_c)

    flags = sorted({f for b in fits for f in b.flags})
    residual_max = max(r["residual"] for ref, row in table for r in [ref, *row])
    rel_max = max(r["rel_residual"] for ref, row in table for r in [ref, *row])
    fit = {"c_kappa": None, "c_kappa_sd": None, "c_tau": None, "c_tau_sd": None,
           "k0": {str(b.branch): b.k0 for b in fits}, "k0_sd": {str(b.branch): b.k0_sd for b in fits},
           "branch": 0, "cov": None}
    comp = None
    constant = has_constant_metric(curve)
    if constant:
        kap, tau = (float(v[0]) for v in curvature_torsion(curve, np.array([0.0])))
        main = next((b for b in fits if b.branch == 0), None)
        if main is not None and main.offset is not None and kap != 0:
            if tau == 0:
                fit["c_kappa"] = main.offset / kap**2
                fit["c_kappa_sd"] = main.offset_sd / kap**2
                fit["cov"] = [[fit["c_kappa_sd"] ** 2]]
            elif companion:
                circ = Circle(1.0 / kap)
                table2, table2_c = study(circ)
                fits2, raw2 = _summaries(polar, table2, table2_c, eps_list, k_list, [0], grid, grid_c)
                b0 = 0
                offs_h, sd_h, fine_h, coarse_h, ratio = raw[b0]
                offs_c, sd_c, fine_c, coarse_c, _ = raw2[b0]
                diff = np.array(offs_h) - np.array(offs_c)
                d0, d_sd, _ = extrapolate_eps2(eps_list, diff, np.hypot(sd_h, sd_c))
                disc = abs((fine_h - fine_c) - (coarse_h - coarse_c)) / (ratio - 1.0)
                d_sd = float(np.hypot(d_sd, disc))
                c_off = fits2[0].offset
                if c_off is not None:
                    fit["c_kappa"] = c_off / kap**2
                    fit["c_kappa_sd"] = fits2[0].offset_sd / kap**2
                if not _monotone(diff, 1e-10) and len(diff) >= 3:
                    flags.append("non_monotone_torsion")
                else:
                    fit["c_tau"] = d0 / tau**2
                    fit["c_tau_sd"] = d_sd / tau**2
                if fit["c_kappa"] is not None and fit["c_tau"] is not None:
                    fit["cov"] = [[fit["c_kappa_sd"] ** 2, 0.0], [0.0, fit["c_tau_sd"] ** 2]]
                comp = {
                    "curve": curve_to_dict(circ),
                    "offsets": [float(x) for x in offs_c],
                    "torsion_difference": [float(x) for x in diff],
                    "branches": [b.to_dict() for b in fits2],
                }
    else:
        flags.append("nonconstant_geometry")

    return OracleResult(
        curve=curve_to_dict(curve),
        curve_hash=curve_hash(curve),
        cross_section=family,
        eps=eps_list,
        k=k_list,
        eigenvalues=[[_clean(r["values"]) for r in row] for _, row in table],
        reference=[_clean(ref["values"]) for ref, _ in table],
        labels=[[_clean(r["L"]) if polar else [] for r in row] for _, row in table],
        branches=fits,
        fit=fit,
        grid=list(grid),
        residual_max=residual_max,
        rel_residual_max=rel_max,
        flags=sorted(set(flags)),
        settings={"mass": mass, "s_scheme": s_scheme, "n_eig": n_eig, "seed": seed,
                  "coarse_grid": list(grid_c), "period": period, "max_dof": max_dof},
        companion=comp,
    )


def _without(d, *keys):
    return {k: v for k, v in d.items() if k not in keys}


def extract_gauge_shift(result: OracleResult, l: int) -> dict:
    """Vertex of the branch dispersion: ``{"k0", "sd", "inconclusive"}``."""
    b = result.branch(l)
    inconclusive = (not b.resolved) or b.k0 is None
    return {"k0": b.k0, "sd": b.k0_sd, "inconclusive": bool(inconclusive), "flags": list(b.flags)}


def result_curve(result: OracleResult) -> CurveSpec:
    return curve_from_dict(result.curve)
