"""Spectra of effective 1D models: closed-form helix dispersions and a
finite-difference solver with Bloch sweeps.

The gauge field is put on the lattice through link phases
``U(j, j+m) = exp(-i/hbar * integral of A from s_j to s_{j+m})``. That keeps
the discrete operator exactly covariant under ``A -> A + dLambda/ds`` and makes
a constant shift of ``A`` an exact translation of the Bloch bands.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import linear_sum_assignment

from .geometry import Circle, Helix, Line, curvature_torsion, has_constant_metric
from .models import EffectiveModel1D
from .modes import HBAR

__all__ = [
    "WrongSolverError",
    "AperiodicModelError",
    "EigenSolverError",
    "Grid1D",
    "Eigenpairs",
    "BandStructure",
    "helix_dispersion",
    "assemble",
    "solve_fd",
    "bloch_bands",
    "bands_to_csv",
    "dump_eigenvectors",
    "hermiticity_residual",
    "DENSE_LIMIT",
]

DENSE_LIMIT = 2048

# central-difference weights c_m (m = 1..p) for d2/ds2 and d_m for d/ds
_D2 = {
    2: (-2.0, (1.0,)),
    4: (-5.0 / 2, (4.0 / 3, -1.0 / 12)),
    6: (-49.0 / 18, (3.0 / 2, -3.0 / 20, 1.0 / 90)),
    8: (-205.0 / 72, (8.0 / 5, -1.0 / 5, 8.0 / 315, -1.0 / 560)),
}
_D1 = {
    2: (1.0 / 2,),
    4: (2.0 / 3, -1.0 / 12),
    6: (3.0 / 4, -3.0 / 20, 1.0 / 60),
    8: (4.0 / 5, -1.0 / 5, 4.0 / 105, -1.0 / 280),
}
_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


class WrongSolverError(ValueError):
    """Raised when a closed-form dispersion is requested for a non-constant geometry."""


class AperiodicModelError(ValueError):
    pass


class EigenSolverError(RuntimeError):
    def __init__(self, message: str, residuals=None):
        super().__init__(message)
        self.residuals = residuals


# --------------------------------------------------------------------------
# closed-form helix dispersions


def _helix_kt(params: Mapping, curve=None) -> tuple[float, float]:
    if curve is not None:
        if not isinstance(curve, (Line, Circle, Helix)) and not has_constant_metric(curve):
            raise WrongSolverError("curvature/torsion are not constant; use solve_fd instead")
        k, t = curvature_torsion(curve, np.array([0.0]))
        return float(k[0]), float(t[0])
    if "kappa" in params and "tau" in params:
        return float(params["kappa"]), float(params["tau"])
    r, c = float(params["r"]), float(params["c"])
    L2 = r * r + c * c
    return r / L2, c / L2


def helix_dispersion(case: str, params: Mapping, p_s, curve=None) -> dict:
    """Evaluate the closed-form ``+`` and ``-`` branches on a constant-``kappa, tau`` wire.

    Cases: ``spinless_circular_l``, ``charged_circular`` and ``soc`` (``l = +-1``).
    Returns ``{"+": {...}, "-": {...}}`` with the real energy ``E``, the named
    ``terms`` that add up to it, and ``imag``, the imaginary constant the SOC case
    produces. That constant is never folded into ``E``.
    """
    p = np.asarray(p_s, dtype=float)
    kappa, tau = _helix_kt(params, curve)
    m = float(params.get("mass", 1.0))
    out = {}
    for label, sgn in (("+", 1), ("-", -1)):
        terms: dict[str, np.ndarray] = {}
        imag = np.zeros_like(p)
        gp = np.full_like(p, -(HBAR**2) * kappa**2 / (8 * m))
        if case == "spinless_circular_l":
            l = abs(int(params.get("l", 1)))
            terms["kinetic"] = (p - sgn * l * HBAR * tau) ** 2 / (2 * m)
            terms["curvature_gp"] = gp
        elif case == "charged_circular":
            l = abs(int(params.get("l", 1)))
            e = float(params.get("charge", 1.0))
            a_bar = float(params.get("A_s_bar", 0.0))
            b_s = float(params.get("B_s", 0.0))
            a0 = float(params.get("A_0", 0.0))
            mu = -HBAR * e / (2 * m)
            terms["kinetic"] = (p - sgn * l * HBAR * tau - e * a_bar) ** 2 / (2 * m)
            terms["curvature_gp"] = gp
            terms["induced_zeeman"] = np.full_like(p, b_s * sgn * l * mu)
            terms["scalar_potential"] = np.full_like(p, -e * a0)
        elif case == "soc":
            a_s = float(params.get("alpha_s", 0.0))
            a_n = float(params.get("alpha_n", 0.0))
            a_b = float(params.get("alpha_b", 0.0))
            terms["kinetic"] = (p - sgn * HBAR * tau) ** 2 / (2 * m)
            terms["curvature_gp"] = gp
            terms["soc_curvature"] = np.full_like(p, sgn * HBAR * a_s * kappa / 2)
            terms["soc_binormal"] = 2 * a_b * (p - sgn * HBAR * tau / 2)
            imag = np.full_like(p, -HBAR * a_n * tau / 2)
        else:
            raise ValueError(f"unknown dispersion case {case!r}")
        E = sum(terms.values())
        out[label] = {"E": E, "terms": terms, "imag": imag}
    return out


# --------------------------------------------------------------------------
# grid and assembly


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid on ``[start, start + length]``.

    ``boundary`` is ``dirichlet``, ``periodic`` or ``bloch`` (with crystal
    momentum ``k``). Periodic grids exclude the right end point.
    """

    length: float
    n: int
    boundary: str = "periodic"
    k: float = 0.0
    start: float = 0.0

    def __post_init__(self):
        if self.n < 16:
            raise ValueError("grid needs n >= 16")
        if self.boundary not in ("dirichlet", "periodic", "bloch"):
            raise ValueError(f"unknown boundary {self.boundary!r}")
        if not self.length > 0:
            raise ValueError("length must be positive")

    @property
    def h(self) -> float:
        return self.length / (self.n + 1) if self.boundary == "dirichlet" else self.length / self.n

    @property
    def nodes(self) -> np.ndarray:
        j = np.arange(self.n)
        if self.boundary == "dirichlet":
            return self.start + (j + 1) * self.h
        return self.start + j * self.h

    @property
    def wraps(self) -> bool:
        return self.boundary != "dirichlet"


def _link_integrals(model: EffectiveModel1D, nodes: np.ndarray, h: float) -> np.ndarray:
    """Integral of A over each unit link [s_j, s_j + h] (8-point Gauss-Legendre)."""
    if not model.gauge_terms:
        return np.zeros(nodes.size)
    x = nodes[:, None] + 0.5 * h * (_GL_X[None, :] + 1.0)
    return 0.5 * h * (model.A(x) @ _GL_W)


def _spinor_phase(model: EffectiveModel1D, spinor_phase: str | None) -> complex:
    if model.spin_dim == 1:
        return 1.0
    phase = spinor_phase or "antiperiodic"
    if phase == "antiperiodic":
        return -1.0
    if phase == "periodic":
        return 1.0
    raise ValueError("spinor_phase must be 'periodic' or 'antiperiodic'")


def _hop_tables(model, grid, order, spinor_phase):
    """Rows, columns and phases of every hop j -> j+m (m = +-1..p)."""
    n = grid.n
    if order not in _D2:
        raise ValueError(f"stencil order must be one of {sorted(_D2)}")
    p = order // 2
    if grid.wraps and n <= 2 * p:
        raise ValueError("grid too small for stencil")
    nodes = grid.nodes
    theta = _link_integrals(model, nodes, grid.h)
    cum = np.concatenate([[0.0], np.cumsum(theta)])
    total = cum[-1]
    wrap_phase = _spinor_phase(model, spinor_phase)
    if grid.boundary == "bloch":
        wrap_phase = wrap_phase * np.exp(1j * grid.k * grid.length)
    hops = []
    j = np.arange(n)
    for m in range(1, p + 1):
        tgt = j + m
        if grid.wraps:
            crossed = tgt >= n
            tgt_w = np.where(crossed, tgt - n, tgt)
            integ = np.where(crossed, total - cum[j] + cum[tgt_w], cum[np.minimum(tgt, n)] - cum[j])
            U = np.exp(-1j * integ / HBAR) * np.where(crossed, wrap_phase, 1.0)
            hops.append((m, j, tgt_w, U))
        else:
            ok = tgt < n
            src, tgt = j[ok], tgt[ok]
            U = np.exp(-1j * (cum[tgt] - cum[src]) / HBAR)
            hops.append((m, src, tgt, U))
    return nodes, hops


def _kron_blocks(rows, cols, scal, blocks, n, d):
    """Sparse matrix with d x d blocks scal[i] * blocks[i] at (rows[i], cols[i])."""
    if blocks is None:
        blocks = np.broadcast_to(np.eye(d), (len(rows), d, d))
    b = scal[:, None, None] * blocks
    a, c = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
    R = (rows[:, None, None] * d + a[None]).ravel()
    C = (cols[:, None, None] * d + c[None]).ravel()
    return sp.coo_matrix((b.ravel(), (R, C)), shape=(n * d, n * d))


def assemble(model: EffectiveModel1D, grid: Grid1D, order: int = 2, spinor_phase: str | None = None,
             hermitize_first_order: bool | None = None) -> sp.csr_matrix:
    """Sparse matrix of the model on the grid.

    The first-order term ``W p`` is written ``W (p - A) + W A`` with the
    covariant lattice momentum. In ``hermitized`` mode its first part is
    symmetrized as ``(W P + P W) / 2``.
    """
    n, d, h, m = grid.n, model.spin_dim, grid.h, model.mass
    nodes, hops = _hop_tables(model, grid, order, spinor_phase)
    c0, cs = _D2[order]
    kin = -(HBAR**2) / (2 * m * h * h)
    parts = []
    diag = np.full(n, kin * c0, dtype=complex)
    parts.append(_kron_blocks(np.arange(n), np.arange(n), diag, None, n, d))
    for (mm, src, tgt, U) in hops:
        val = kin * cs[mm - 1] * U
        parts.append(_kron_blocks(src, tgt, val, None, n, d))
        parts.append(_kron_blocks(tgt, src, np.conj(val), None, n, d))
    V = model.V(nodes)
    parts.append(_kron_blocks(np.arange(n), np.arange(n), np.ones(n, dtype=complex), V, n, d))
    if model.first_order_terms:
        W = model.W(nodes)
        A = model.A(nodes)
        sym = (model.mode == "hermitized") if hermitize_first_order is None else hermitize_first_order
        ds = _D1[order]
        pref = -1j * HBAR / h
        for (mm, src, tgt, U) in hops:
            fwd = pref * ds[mm - 1] * U  # P[src, tgt]
            bwd = -pref * ds[mm - 1] * np.conj(U)  # P[tgt, src]
            if sym:
                parts.append(_kron_blocks(src, tgt, 0.5 * fwd, W[src] + W[tgt], n, d))
                parts.append(_kron_blocks(tgt, src, 0.5 * bwd, W[tgt] + W[src], n, d))
            else:
                parts.append(_kron_blocks(src, tgt, fwd, W[src], n, d))
                parts.append(_kron_blocks(tgt, src, bwd, W[tgt], n, d))
        parts.append(_kron_blocks(np.arange(n), np.arange(n), A.astype(complex), W, n, d))
    H = parts[0]
    for p in parts[1:]:
        H = H + p
    return H.tocsr()


def hermiticity_residual(H) -> float:
    """``||H - H^H||_F / ||H||_F``."""
    H = sp.csr_matrix(H)
    num = spla.norm(H - H.getH())
    den = spla.norm(H)
    return float(num / den) if den > 0 else 0.0


# --------------------------------------------------------------------------
# eigen-solves


@dataclass(frozen=True)
class Eigenpairs:
    values: np.ndarray
    vectors: np.ndarray
    nodes: np.ndarray
    spin_dim: int
    residuals: np.ndarray
    hermitian: bool
    anti_hermitian_residual: float
    max_imag: float
    flags: tuple[str, ...] = ()

    def spinor(self, i: int) -> np.ndarray:
        return self.vectors[:, i].reshape(-1, self.spin_dim)


def _sigma_lower_bound(model, nodes, H) -> float:
    V = model.V(nodes)
    W = model.W(nodes)
    A = model.A(nodes)
    Vh = 0.5 * (V + np.conj(np.swapaxes(V, -1, -2)))
    WA = W * A[:, None, None]
    M = Vh + 0.5 * (WA + np.conj(np.swapaxes(WA, -1, -2)))
    lo = float(np.min(np.linalg.eigvalsh(M)))
    wn = float(np.max(np.linalg.norm(W, ord=2, axis=(-2, -1)))) if W.size else 0.0
    lo -= model.mass * wn * wn / 2
    return lo - 1e-2 * (1.0 + abs(lo))


def solve_fd(model: EffectiveModel1D, grid: Grid1D, k_lowest: int = 6, order: int = 2,
             spinor_phase: str | None = None, dense: bool | None = None) -> Eigenpairs:
    """Lowest ``k_lowest`` eigenpairs (sorted by real part).

    Hermitian matrices use ``eigh`` up to ``DENSE_LIMIT`` unknowns and
    shift-invert Lanczos above. Non-Hermitian (verbatim SOC) matrices are
    diagonalized as general matrices and flagged ``non_normal``.
    """
    H = assemble(model, grid, order=order, spinor_phase=spinor_phase)
    N = H.shape[0]
    k_lowest = min(k_lowest, N)
    anti = hermiticity_residual(H)
    hermitian = anti <= 1e-14
    flags = []
    if model.spin_dim == 2 and grid.wraps:
        flags.append(f"spinor_phase={spinor_phase or 'antiperiodic'}")
    use_dense = (N <= DENSE_LIMIT) if dense is None else dense
    if hermitian:
        Hh = 0.5 * (H + H.getH())
        if use_dense:
            w, v = sla.eigh(Hh.toarray(), subset_by_index=(0, k_lowest - 1))
        else:
            sigma = _sigma_lower_bound(model, grid.nodes, H)
            try:
                w, v = spla.eigsh(Hh.tocsc(), k=k_lowest, sigma=sigma, which="LM", tol=0,
                                  v0=np.ones(N, dtype=complex))
            except spla.ArpackNoConvergence as exc:
                raise EigenSolverError("Lanczos did not converge", residuals=getattr(exc, "eigenvalues", None)) from exc
            idx = np.argsort(w)
            w, v = w[idx], v[:, idx]
        w = np.asarray(w, dtype=complex)
    else:
        flags.append("non_normal")
        warnings.warn("non-Hermitian operator: eigenvalues may be complex", RuntimeWarning, stacklevel=2)
        if use_dense:
            w, v = sla.eig(H.toarray())
        else:
            sigma = _sigma_lower_bound(model, grid.nodes, H)
            w, v = spla.eigs(H.tocsc(), k=k_lowest, sigma=sigma, which="LM", v0=np.ones(N, dtype=complex))
        idx = np.lexsort((w.imag, w.real))[:k_lowest]
        w, v = w[idx], v[:, idx]
        v = v / np.linalg.norm(v, axis=0)
    res = np.linalg.norm(H @ v - v * w[None, :], axis=0)
    return Eigenpairs(
        values=w,
        vectors=v,
        nodes=grid.nodes,
        spin_dim=model.spin_dim,
        residuals=res,
        hermitian=hermitian,
        anti_hermitian_residual=anti,
        max_imag=float(np.max(np.abs(w.imag))) if w.size else 0.0,
        flags=tuple(flags),
    )


# --------------------------------------------------------------------------
# Bloch bands


@dataclass(frozen=True)
class BandStructure:
    """Bloch bands ``energies[ik, band]`` sorted per k; ``connected`` follows branches."""

    k: np.ndarray
    energies: np.ndarray
    connected: np.ndarray
    labels: tuple[str, ...]
    period: float
    flags: tuple[str, ...] = field(default_factory=tuple)

    def minimum(self, branch: int | None = None) -> tuple[float, float]:
        """(k, E) of the lowest sampled energy of a connected branch (or overall)."""
        E = self.connected.real if branch is not None else self.energies.real
        if branch is not None:
            E = E[:, branch]
            i = int(np.argmin(E))
            return float(self.k[i]), float(E[i])
        i, j = np.unravel_index(np.argmin(E), E.shape)
        return float(self.k[i]), float(E[i, j])


def check_periodic(model: EffectiveModel1D, period: float, n_test: int = 64, tol: float = 1e-10) -> float:
    s = np.linspace(0.0, period, n_test, endpoint=False) + 0.123 * period / n_test
    dev = 0.0
    for f in (model.A, model.V, model.W):
        a, b = f(s), f(s + period)
        dev = max(dev, float(np.max(np.abs(a - b))) if np.size(a) else 0.0)
    if dev > tol:
        raise AperiodicModelError(f"coefficients are not periodic with period {period}: deviation {dev:.3e}")
    return dev


def bloch_bands(model: EffectiveModel1D, n_k: int, n_cell: int, period: float | None = None,
                n_bands: int = 6, order: int = 2, spinor_phase: str | None = None,
                k_values: Sequence[float] | None = None) -> BandStructure:
    """Bands over the first Brillouin zone ``[-pi/P, pi/P)``."""
    P = period if period is not None else model.period
    if P is None:
        raise AperiodicModelError("model has no period; pass period=")
    check_periodic(model, P)
    if k_values is None:
        k_values = -math.pi / P + 2 * math.pi / P * np.arange(n_k) / n_k
    k_values = np.asarray(k_values, dtype=float)
    energies, vecs, flags = [], [], set()
    nodes = None
    for k in k_values:
        grid = Grid1D(P, n_cell, "bloch", k=float(k))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            ep = solve_fd(model, grid, n_bands, order=order, spinor_phase=spinor_phase)
        energies.append(ep.values)
        nodes = ep.nodes
        # periodic part u = exp(-iks) psi for continuity across k
        ph = np.repeat(np.exp(-1j * k * nodes), model.spin_dim)
        vecs.append(ep.vectors * ph[:, None])
        flags.update(ep.flags)
    E = np.array(energies)
    conn = E.copy()
    perm = np.arange(E.shape[1])
    for i in range(1, len(k_values)):
        O = np.abs(vecs[i - 1][:, perm].conj().T @ vecs[i])
        r, c = linear_sum_assignment(-O)
        new = np.empty_like(perm)
        new[r] = c
        perm = new
        conn[i] = E[i, perm]
        vecs[i] = vecs[i]  # kept in solver order; perm maps branch -> column
    labels = tuple(str(b) for b in range(E.shape[1]))
    return BandStructure(k_values, E, conn, labels, P, tuple(sorted(flags)))


# --------------------------------------------------------------------------
# output


def _g(x: float) -> str:
    return format(float(x), ".17g")


def bands_to_csv(bands: BandStructure) -> str:
    lines = ["k,branch,energy_re,energy_im"]
    for i, k in enumerate(bands.k):
        for b in range(bands.energies.shape[1]):
            e = complex(bands.energies[i, b])
            lines.append(f"{_g(k)},{b},{_g(e.real)},{_g(e.imag)}")
    return "\n".join(lines) + "\n"


def dump_eigenvectors(pairs: Eigenpairs, path: str) -> dict:
    """Write vectors as little-endian float64 (re, im) pairs, row-major, plus a JSON sidecar."""
    arr = np.ascontiguousarray(pairs.vectors.T)  # one eigenvector per row
    out = np.empty(arr.shape + (2,), dtype="<f8")
    out[..., 0] = arr.real
    out[..., 1] = arr.imag
    with open(path, "wb") as fh:
        fh.write(out.tobytes(order="C"))
    meta = {
        "shape": [int(arr.shape[0]), int(arr.shape[1])],
        "dtype": "complex128 as <f8 (re, im) pairs",
        "order": "row-major, one eigenvector per row",
        "spin_dim": pairs.spin_dim,
        "eigenvalues_re": [float(x) for x in pairs.values.real],
        "eigenvalues_im": [float(x) for x in pairs.values.imag],
    }
    with open(path + ".json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
    return meta
