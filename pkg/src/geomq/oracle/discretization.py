"""Full 3D Schrodinger operator in tube coordinates around a curve.

With ``f = 1 - kappa q2`` and ``D_s = d/ds + tau (q3 d/dq2 - q2 d/dq3)``
the kinetic energy of the Laplace-Beltrami operator of the tube metric is

    (hbar^2 / 2m) * int [ |D_s psi|^2 / f + f (|d2 psi|^2 + |d3 psi|^2) ] ds dq2 dq3

and the inner product carries the weight ``f``. The discrete operator is the
stiffness matrix ``K`` of this form together with a diagonal mass ``M``.
It is applied as ``M^{-1/2} K M^{-1/2}``, so it is Hermitian in the
Euclidean inner product by construction.

Along ``s`` the state is either the Bloch-periodic part ``u`` on a Fourier
grid (``s_scheme="spectral"``; ``n_s = 1`` is exact for constant
``kappa, tau``) or the wavefunction itself with a second-order flux-form
difference and the Bloch phase on the wrap (``s_scheme="fd2"``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..geometry import CurveSpec, PatchViolationError, curvature_torsion, curve_period, curve_to_dict
from ..modes import HBAR

__all__ = [
    "SquareHardWall",
    "DiskHardWall",
    "Harmonic",
    "CrossSection",
    "TubeDiscretization",
    "TubeOperator",
    "ResourceLimitError",
    "assemble_apply",
    "cross_section_to_dict",
    "cross_section_from_dict",
    "PATCH_MARGIN",
]

PATCH_MARGIN = 0.1
HARMONIC_TRUNCATION = 8.0


class ResourceLimitError(MemoryError):
    def __init__(self, message: str, required: dict):
        super().__init__(message)
        self.required = required


@dataclass(frozen=True)
class SquareHardWall:
    """Hard walls at ``|q2|, |q3| = eps``."""

    eps: float

    @property
    def radius(self) -> float:
        return self.eps * np.sqrt(2.0)

    @property
    def width(self) -> float:
        return self.eps


@dataclass(frozen=True)
class DiskHardWall:
    """Hard wall at ``rho = eps``."""

    eps: float

    @property
    def radius(self) -> float:
        return self.eps

    @property
    def width(self) -> float:
        return self.eps


@dataclass(frozen=True)
class Harmonic:
    """Potential ``m w^2 rho^2 / 2`` on a disk truncated at ``8 / sqrt(m w / hbar)``."""

    w: float

    @classmethod
    def from_width(cls, eps: float, mass: float = 1.0) -> "Harmonic":
        return cls(HBAR / (mass * eps * eps))

    def beta(self, mass: float = 1.0) -> float:
        return float(np.sqrt(mass * self.w / HBAR))

    @property
    def width(self) -> float:
        return 1.0 / self.beta()

    @property
    def radius(self) -> float:
        return HARMONIC_TRUNCATION / self.beta()


CrossSection = Union[SquareHardWall, DiskHardWall, Harmonic]


def cross_section_to_dict(cs: CrossSection) -> dict:
    if isinstance(cs, SquareHardWall):
        return {"kind": "square", "eps": cs.eps}
    if isinstance(cs, DiskHardWall):
        return {"kind": "disk", "eps": cs.eps}
    return {"kind": "harmonic", "w": cs.w}


def cross_section_from_dict(d: dict) -> CrossSection:
    kind = d["kind"]
    if kind == "square":
        return SquareHardWall(float(d["eps"]))
    if kind == "disk":
        return DiskHardWall(float(d["eps"]))
    if kind == "harmonic":
        return Harmonic(float(d["w"]))
    raise ValueError(f"unknown cross-section {kind!r}")


@dataclass(frozen=True)
class TubeDiscretization:
    """Grid for one period of the tube.

    ``n_1, n_2`` are ``(n_q2, n_q3)`` for the square and ``(n_rho, n_theta)``
    for polar sections (``n_theta`` must be odd).
    """

    curve: CurveSpec
    cross_section: CrossSection
    n_s: int
    n_1: int
    n_2: int
    k: float = 0.0
    mass: float = 1.0
    s_scheme: str = "spectral"
    period: float | None = None
    max_dof: int = 1_000_000
    straight: bool = False

    def __post_init__(self):
        if self.s_scheme not in ("spectral", "fd2"):
            raise ValueError("s_scheme must be 'spectral' or 'fd2'")
        if self.n_s < 1 or self.n_1 < 1 or self.n_2 < 1:
            raise ValueError("grid sizes must be positive")
        if self.s_scheme == "spectral" and self.n_s % 2 == 0:
            raise ValueError("spectral s grid needs odd n_s")
        if self.s_scheme == "fd2" and self.n_s < 3:
            raise ValueError("fd2 s grid needs n_s >= 3")
        if self.polar and self.n_2 % 2 == 0:
            raise ValueError("theta grid needs odd n_theta")
        if self.square and self.n_1 != self.n_2:
            raise ValueError("square grid must have n_q2 == n_q3")
        if self.resolved_period is None:
            raise ValueError("curve is not periodic; pass period=")

    @property
    def polar(self) -> bool:
        return isinstance(self.cross_section, (DiskHardWall, Harmonic))

    @property
    def square(self) -> bool:
        return isinstance(self.cross_section, SquareHardWall)

    @property
    def resolved_period(self) -> float | None:
        return self.period if self.period is not None else curve_period(self.curve)

    @property
    def n_transverse(self) -> int:
        return self.n_1 * self.n_2

    @property
    def dof(self) -> int:
        return self.n_s * self.n_transverse

    def s_nodes(self) -> np.ndarray:
        P = self.resolved_period
        return P * np.arange(self.n_s) / self.n_s

    def s_eval(self) -> np.ndarray:
        """Points where the ``s``-derivative terms are evaluated."""
        P = self.resolved_period
        if self.s_scheme == "spectral":
            return self.s_nodes()
        return P * (np.arange(self.n_s) + 0.5) / self.n_s

    def kappa_tau(self, s):
        if self.straight:
            z = np.zeros(np.shape(s))
            return z, z.copy()
        return curvature_torsion(self.curve, np.asarray(s, dtype=float))

    def with_k(self, k: float) -> "TubeDiscretization":
        return _replace(self, k=float(k))

    def straightened(self) -> "TubeDiscretization":
        return _replace(self, straight=True)

    def describe(self) -> dict:
        return {
            "curve": curve_to_dict(self.curve),
            "cross_section": cross_section_to_dict(self.cross_section),
            "grid": [self.n_s, self.n_1, self.n_2],
            "s_scheme": self.s_scheme,
            "k": self.k,
            "mass": self.mass,
            "period": self.resolved_period,
        }


def _replace(obj, **kw):
    from dataclasses import replace

    return replace(obj, **kw)


# --------------------------------------------------------------------------
# one-dimensional building blocks


def _s_operators(disc: TubeDiscretization):
    """(D, A, h_s): derivative and average from s nodes to s evaluation points."""
    n, P, k = disc.n_s, disc.resolved_period, disc.k
    h = P / n
    if disc.s_scheme == "spectral":
        freq = 2 * np.pi / P * np.fft.fftfreq(n, 1.0 / n)
        F = np.fft.fft(np.eye(n), axis=0)
        D = np.fft.ifft((1j * (freq + k))[:, None] * F, axis=0)
        if n == 1:
            D = np.array([[1j * k]])
        return sp.csr_matrix(D), sp.identity(n, format="csr", dtype=complex), h
    phase = np.exp(1j * k * P)
    rows = np.arange(n)
    cols = (rows + 1) % n
    wrap = np.where(rows == n - 1, phase, 1.0)
    D = sp.csr_matrix((np.concatenate([-np.ones(n), wrap]), (np.concatenate([rows, rows]), np.concatenate([rows, cols]))),
                      shape=(n, n)) / h
    A = sp.csr_matrix((np.concatenate([0.5 * np.ones(n), 0.5 * wrap]),
                       (np.concatenate([rows, rows]), np.concatenate([rows, cols]))), shape=(n, n))
    return D.astype(complex), A.astype(complex), h


def _fourier_derivative(M: int) -> np.ndarray:
    m = np.fft.fftfreq(M, 1.0 / M)
    F = np.fft.fft(np.eye(M), axis=0)
    return np.real_if_close(np.fft.ifft((1j * m)[:, None] * F, axis=0)).real


# --------------------------------------------------------------------------
# the operator


class TubeOperator(spla.LinearOperator):
    """Symmetrized tube Hamiltonian ``M^{-1/2} K M^{-1/2}``.

    ``matvec`` applies the factored form term by term without assembling
    ``K``; ``assemble()`` returns the sparse matrix. ``to_wavefunction`` maps
    a symmetrized vector ``y`` back to ``psi = M^{-1/2} y``.
    """

    def __init__(self, disc: TubeDiscretization):
        self.disc = disc
        terms, mass_w, diag_extra, info = _build_terms(disc)
        self._terms = terms
        self.mass_weight = mass_w
        self._diag = diag_extra
        self._scale = 1.0 / np.sqrt(mass_w)
        self.info = info
        n = mass_w.size
        super().__init__(dtype=complex, shape=(n, n))

    def _matvec(self, x):
        x = np.asarray(x).reshape(-1)
        y = x * self._scale
        out = self._diag * y
        for B, w, C in self._terms:
            out = out + B.conj().T @ (w * (C @ y))
        return out * self._scale

    def _rmatvec(self, x):
        return self._matvec(x)

    def _adjoint(self):
        return self

    def stiffness(self) -> sp.csr_matrix:
        K = sp.diags(self._diag.astype(complex))
        for B, w, C in self._terms:
            K = K + B.conj().T @ sp.diags(w) @ C
        return sp.csr_matrix(K)

    def assemble(self) -> sp.csr_matrix:
        S = sp.diags(self._scale)
        H = S @ self.stiffness() @ S
        H = 0.5 * (H + H.getH())
        return sp.csr_matrix(H)

    def inner(self, phi, psi) -> complex:
        """``<phi, psi>`` with the metric weight, for wavefunction-space vectors."""
        return complex(np.vdot(phi, self.mass_weight * psi))

    def to_wavefunction(self, y):
        return y * self._scale[:, None] if np.ndim(y) == 2 else y * self._scale

    def angular_momentum(self) -> sp.csr_matrix | None:
        """``-i d/dtheta`` on polar grids (acting on wavefunction-space vectors)."""
        return self.info.get("L")

    def angular_weight(self) -> np.ndarray | None:
        return self.info.get("rho_weight")


def _check_resources(disc: TubeDiscretization):
    dof = disc.dof
    # rough nonzero count of the assembled matrix; the spectral s grid is dense
    per_row = (disc.n_s if disc.s_scheme == "spectral" else 3) + (disc.n_2 + 4 if disc.polar else 13)
    nnz = dof * per_row
    bytes_needed = nnz * 16 * 6
    required = {"dof": dof, "nnz_estimate": nnz, "bytes_estimate": bytes_needed, "max_dof": disc.max_dof}
    if dof > disc.max_dof:
        raise ResourceLimitError(f"grid needs {dof} unknowns, above the cap of {disc.max_dof}", required)
    return required


def _check_patch(disc: TubeDiscretization, kappa_e, kappa_n):
    kmax = float(np.max(np.abs(np.concatenate([np.atleast_1d(kappa_e), np.atleast_1d(kappa_n)]))))
    fmin = 1.0 - kmax * disc.cross_section.radius
    if fmin <= PATCH_MARGIN:
        raise PatchViolationError(
            f"1 - kappa_max * radius = {fmin:.4f} <= {PATCH_MARGIN}: tube coordinates not safely valid"
        )
    return fmin


def _build_terms(disc: TubeDiscretization):
    req = _check_resources(disc)
    Ds, As, hs = _s_operators(disc)
    se, sn = disc.s_eval(), disc.s_nodes()
    ke, te = disc.kappa_tau(se)
    kn, _ = disc.kappa_tau(sn)
    ke, te, kn = np.atleast_1d(ke), np.atleast_1d(te), np.atleast_1d(kn)
    fmin = _check_patch(disc, ke, kn)
    Is = sp.identity(disc.n_s, format="csr")
    c = HBAR**2 / (2 * disc.mass)
    info = {"resources": req, "f_min": fmin}
    if disc.square:
        return _square_terms(disc, Ds, As, Is, hs, ke, te, kn, c, info)
    return _polar_terms(disc, Ds, As, Is, hs, ke, te, kn, c, info)


def _square_terms(disc, Ds, As, Is, hs, ke, te, kn, c, info):
    N = disc.n_1
    eps = disc.cross_section.eps
    h = 2 * eps / (N + 1)
    q = -eps + h * np.arange(1, N + 1)
    qf = -eps + h * (np.arange(N + 1) + 0.5)
    I = sp.identity(N, format="csr")
    Df = sp.diags([np.ones(N), -np.ones(N)], [0, -1], shape=(N + 1, N), format="csr") / h
    Av = sp.diags([0.5 * np.ones(N), 0.5 * np.ones(N)], [0, -1], shape=(N + 1, N), format="csr")
    vol = hs * h * h
    # transverse operators: nodes, q2-faces, q3-faces, cells
    D2, D3 = sp.kron(Df, I), sp.kron(I, Df)
    Ac = sp.kron(Av, Av)
    Q2c, Q3c = np.repeat(qf, N + 1), np.tile(qf, N + 1)
    Rc = sp.diags(Q3c) @ sp.kron(Df, Av) - sp.diags(Q2c) @ sp.kron(Av, Df)
    Q2n = np.repeat(q, N)
    Q2f2 = np.repeat(qf, N)
    Q2f3 = np.repeat(q, N + 1)
    ns = disc.n_s
    f_node_e = 1 - np.outer(ke, Q2n)
    f_cell_e = 1 - np.outer(ke, Q2c)
    terms = []
    # |d_s psi|^2 / f at transverse nodes
    B = sp.kron(Ds, sp.identity(N * N))
    terms.append((B, c * vol / f_node_e.ravel(), B))
    # cross and torsion terms at cell centres
    Bs = sp.kron(Ds, Ac)
    Br = sp.diags(np.repeat(te, (N + 1) ** 2)) @ sp.kron(As, Rc)
    wc = c * vol / f_cell_e.ravel()
    if np.any(te != 0):
        terms.append((Bs, wc, Br))
        terms.append((Br, wc, Bs))
        terms.append((Br, wc, Br))
    # transverse gradients at s nodes
    terms.append((sp.kron(Is, D2), c * vol * (1 - np.outer(kn, Q2f2)).ravel(), sp.kron(Is, D2)))
    terms.append((sp.kron(Is, D3), c * vol * (1 - np.outer(kn, Q2f3)).ravel(), sp.kron(Is, D3)))
    terms = [(sp.csr_matrix(B), np.asarray(w, dtype=float), sp.csr_matrix(C)) for B, w, C in terms]
    mass_w = (vol * (1 - np.outer(kn, Q2n))).ravel()
    diag = np.zeros(ns * N * N)
    info.update({"h": h, "nodes_q": q})
    return terms, mass_w, diag, info


def _polar_terms(disc, Ds, As, Is, hs, ke, te, kn, c, info):
    N, M = disc.n_1, disc.n_2
    cs = disc.cross_section
    R = cs.radius
    h = R / (N + 0.5)
    rho = (np.arange(1, N + 1) - 0.5) * h
    rf = np.arange(1, N + 1) * h
    th = 2 * np.pi * np.arange(M) / M
    dth = 2 * np.pi / M
    Dth = sp.csr_matrix(_fourier_derivative(M))
    Dr = sp.diags([-np.ones(N), np.ones(N - 1)], [0, 1], shape=(N, N), format="csr") / h
    IM, IN = sp.identity(M, format="csr"), sp.identity(N, format="csr")
    Rho, Th = np.repeat(rho, M), np.tile(th, N)
    Rf = np.repeat(rf, M)
    cos = np.cos(Th)
    vol = hs * h * dth
    f_e = 1 - np.outer(ke, Rho * cos)
    f_n = 1 - np.outer(kn, Rho * cos)
    f_nf = 1 - np.outer(kn, Rf * cos)
    DT = sp.kron(IN, Dth)
    # D_s = d/ds - tau d/dtheta
    B = sp.kron(Ds, sp.identity(N * M)) - sp.diags(np.repeat(te, N * M)) @ sp.kron(As, DT)
    terms = [
        (B, c * vol * (np.tile(Rho, disc.n_s) / f_e.ravel()), B),
        (sp.kron(Is, sp.kron(Dr, IM)), c * vol * (np.tile(Rf, disc.n_s) * f_nf.ravel()), sp.kron(Is, sp.kron(Dr, IM))),
        (sp.kron(Is, DT), c * vol * (f_n.ravel() / np.tile(Rho, disc.n_s)), sp.kron(Is, DT)),
    ]
    terms = [(sp.csr_matrix(B), np.asarray(w, dtype=float), sp.csr_matrix(C)) for B, w, C in terms]
    mass_w = vol * (np.tile(Rho, disc.n_s) * f_n.ravel())
    diag = np.zeros(mass_w.size)
    if isinstance(cs, Harmonic):
        V = 0.5 * disc.mass * cs.w**2 * np.tile(Rho, disc.n_s) ** 2
        diag = V * mass_w
    L = sp.kron(Is, -1j * DT)
    info.update({"h": h, "rho": rho, "L": sp.csr_matrix(L), "rho_weight": vol * np.tile(Rho, disc.n_s)})
    return terms, mass_w, diag, info


def assemble_apply(disc: TubeDiscretization) -> TubeOperator:
    """Matrix-free tube Hamiltonian for ``disc`` (see ``TubeOperator``)."""
    return TubeOperator(disc)
