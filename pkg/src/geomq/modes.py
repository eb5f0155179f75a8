"""Transverse ground states of the confined cross-section and their moments.

Natural units: hbar = 1 throughout; ``mass`` stays a parameter.

Harmonic states are stored as ``P(q2, q3) * exp(-beta^2 (q2^2 + q3^2) / 2)`` with
a complex coefficient table ``P[i, j]`` (coefficient of ``q2^i q3^j``), so any
moment ``<chi| q2^a q3^b d2^c d3^d |chi>`` reduces to one-dimensional Gaussian
moments.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Sequence, Union

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import comb, factorial2, jn_zeros

HBAR = 1.0
MAX_MOMENT_ORDER = 6

__all__ = [
    "HBAR",
    "SquareHarmonicMode",
    "CircularMode",
    "HardWallMode",
    "SquareBox",
    "Disk",
    "UnsupportedOrderError",
    "RadialConvergenceError",
    "moment",
    "expectation",
    "angular_matrix_elements",
    "radial_fd_energy",
    "radial_energy_oracle",
    "mode_table",
    "mode_table_csv",
    "TORSION_MOMENT_COMBINATION",
    "TWIST_SQUARED",
]


class UnsupportedOrderError(ValueError):
    pass


class RadialConvergenceError(RuntimeError):
    def __init__(self, message: str, diagnostics: dict):
        super().__init__(f"{message}: {diagnostics}")
        self.diagnostics = diagnostics


def double_factorial(n: int) -> int:
    """``n!!`` with ``(-1)!! = 0!! = 1``."""
    if n <= 0:
        return 1
    return int(factorial2(n, exact=True))


@dataclass(frozen=True)
class SquareHarmonicMode:
    """Product of the normal and binormal oscillator ground states."""

    w: float
    mass: float = 1.0

    def __post_init__(self):
        if not (self.w > 0 and self.mass > 0):
            raise ValueError("w and mass must be > 0")

    @property
    def alpha(self) -> float:
        return math.sqrt(self.mass * self.w / HBAR)

    @property
    def energy(self) -> float:
        # two zero-point energies hbar w / 2
        return HBAR * self.w

    @property
    def width(self) -> float:
        return 1.0 / self.alpha

    def polynomial(self) -> np.ndarray:
        return np.array([[self.alpha / math.sqrt(math.pi)]], dtype=complex)

    def __call__(self, q2, q3):
        a = self.alpha
        return a / math.sqrt(math.pi) * np.exp(-0.5 * a * a * (np.asarray(q2) ** 2 + np.asarray(q3) ** 2))


@dataclass(frozen=True)
class CircularMode:
    """Radial-oscillator ground state with angular momentum ``l``.

    ``A`` normalizes the state under ``rho drho dtheta``. ``A_line`` is the
    constant that normalizes ``int_0^inf |chi|^2 drho`` (no ``rho`` weight)
    and differs from ``A`` for every ``l``.

    ``energy`` comes from the radial finite-difference oracle and equals
    ``(|l| + 1) hbar w``; ``energy_alt`` is the closed form
    ``2 (l - 1/2)(l + 1/2) hbar w``, kept for comparison tables.
    """

    l: int
    w: float
    mass: float = 1.0

    def __post_init__(self):
        if int(self.l) != self.l:
            raise ValueError("l must be an integer")
        object.__setattr__(self, "l", int(self.l))
        if not (self.w > 0 and self.mass > 0):
            raise ValueError("w and mass must be > 0")

    @property
    def beta(self) -> float:
        return math.sqrt(self.mass * self.w / HBAR)

    @property
    def A(self) -> float:
        return self.beta / math.sqrt(math.pi * math.factorial(abs(self.l)))

    @property
    def A_line(self) -> float:
        m = abs(self.l)
        return math.sqrt(2 ** (m + 1) * self.beta / (math.sqrt(math.pi) * double_factorial(2 * m - 1)))

    @property
    def energy(self) -> float:
        return radial_energy_oracle(self.l, self.w, mass=self.mass)

    @property
    def energy_alt(self) -> float:
        return 2.0 * (self.l - 0.5) * (self.l + 0.5) * HBAR * self.w

    @property
    def energy_analytic(self) -> float:
        return (abs(self.l) + 1) * HBAR * self.w

    def polynomial(self) -> np.ndarray:
        # rho^|l| e^{i l theta} = (q2 + i sgn(l) q3)^|l|
        m = abs(self.l)
        sg = 1 if self.l >= 0 else -1
        P = np.zeros((m + 1, m + 1), dtype=complex)
        for j in range(m + 1):
            P[m - j, j] = comb(m, j, exact=True) * (1j * sg) ** j
        return P * self.A * self.beta**m

    def __call__(self, rho, theta):
        rho = np.asarray(rho, dtype=float)
        b = self.beta
        return self.A * np.exp(1j * self.l * np.asarray(theta)) * (b * rho) ** abs(self.l) * np.exp(-0.5 * b * b * rho**2)


@dataclass(frozen=True)
class SquareBox:
    eps: float


@dataclass(frozen=True)
class Disk:
    eps: float


@dataclass(frozen=True)
class HardWallMode:
    """Dirichlet mode of a square box ``|q2|, |q3| <= eps`` or a disk of radius ``eps``.

    ``numbers`` is ``(n2, n3)`` for the box and ``(n, l)`` for the disk, with
    ``n >= 1`` counting Bessel zeros.
    """

    shape: Union[SquareBox, Disk]
    numbers: tuple[int, int] = (1, 1)
    mass: float = 1.0

    @property
    def energy(self) -> float:
        eps = self.shape.eps
        if isinstance(self.shape, SquareBox):
            n2, n3 = self.numbers
            return math.pi**2 * HBAR**2 * (n2 * n2 + n3 * n3) / (8 * self.mass * eps * eps)
        n, l = self.numbers
        j = jn_zeros(abs(l), n)[-1]
        return HBAR**2 * j * j / (2 * self.mass * eps * eps)


# --------------------------------------------------------------------------
# moment engine


def _gauss_moments(n_max: int, beta: float) -> np.ndarray:
    """``M[n] = int x^n exp(-beta^2 x^2) dx`` via ``M[n] = (n-1)/(2 beta^2) M[n-2]``."""
    M = np.zeros(n_max + 1)
    M[0] = math.sqrt(math.pi) / beta
    for n in range(2, n_max + 1, 2):
        M[n] = (n - 1) / (2 * beta * beta) * M[n - 2]
    return M


def _d2(P: np.ndarray, beta: float) -> np.ndarray:
    out = np.zeros((P.shape[0] + 1, P.shape[1]), dtype=complex)
    i = np.arange(1, P.shape[0])
    out[:-2] += i[:, None] * P[1:]
    out[1:] -= beta * beta * P
    return out


def _d3(P: np.ndarray, beta: float) -> np.ndarray:
    return _d2(P.T, beta).T


def _apply(P: np.ndarray, beta: float, a: int, b: int, c: int, d: int) -> np.ndarray:
    Q = P
    for _ in range(c):
        Q = _d2(Q, beta)
    for _ in range(d):
        Q = _d3(Q, beta)
    out = np.zeros((Q.shape[0] + a, Q.shape[1] + b), dtype=complex)
    out[a:, b:] = Q
    return out


def _braket(P: np.ndarray, Q: np.ndarray, beta: float) -> complex:
    n = P.shape[0] + Q.shape[0] + P.shape[1] + Q.shape[1]
    M = _gauss_moments(n, beta)
    i = np.arange(P.shape[0])[:, None] + np.arange(Q.shape[0])[None, :]
    j = np.arange(P.shape[1])[:, None] + np.arange(Q.shape[1])[None, :]
    # sum conj(P[ip, jp]) Q[iq, jq] M[ip + iq] M[jp + jq]
    return complex(np.einsum("pa,qb,pq,ab->", np.conj(P), Q, M[i], M[j]))


def moment(mode: Union[SquareHarmonicMode, CircularMode], descriptor: Sequence[int]) -> complex:
    """``<chi| q2^a q3^b d2^c d3^d |chi>`` for ``descriptor = (a, b, c, d)``."""
    a, b, c, d = (int(x) for x in descriptor)
    if min(a, b, c, d) < 0:
        raise ValueError("descriptor entries must be >= 0")
    if a + b + c + d > MAX_MOMENT_ORDER:
        raise UnsupportedOrderError(f"moment order {a + b + c + d} exceeds {MAX_MOMENT_ORDER}")
    P = mode.polynomial()
    beta = mode.alpha if isinstance(mode, SquareHarmonicMode) else mode.beta
    return _braket(P, _apply(P, beta, a, b, c, d), beta)


def expectation(mode, terms: Mapping[tuple[int, int, int, int], complex]) -> complex:
    """Linear combination of moments, ``terms = {descriptor: coefficient}``."""
    return sum(coef * moment(mode, desc) for desc, coef in terms.items())


# q2 d2 + q3 d3 + 2 q2 q3 d2 d3, the torsion expectation kept in the square-case reduction
TORSION_MOMENT_COMBINATION = {(1, 0, 1, 0): 1.0, (0, 1, 0, 1): 1.0, (1, 1, 1, 1): 2.0}

# (q3 d2 - q2 d3)^2 = q3^2 d2^2 + q2^2 d3^2 - 2 q2 q3 d2 d3 - q2 d2 - q3 d3
TWIST_SQUARED = {
    (0, 2, 2, 0): 1.0,
    (2, 0, 0, 2): 1.0,
    (1, 1, 1, 1): -2.0,
    (1, 0, 1, 0): -1.0,
    (0, 1, 0, 1): -1.0,
}


def angular_matrix_elements(mode) -> tuple[complex, complex]:
    """``(<L_s>, <L_s^2>)`` with ``L_s = i hbar (q3 d2 - q2 d3)``."""
    L1 = 1j * HBAR * (moment(mode, (0, 1, 1, 0)) - moment(mode, (1, 0, 0, 1)))
    L2 = -(HBAR**2) * expectation(mode, TWIST_SQUARED)
    return L1, L2


# --------------------------------------------------------------------------
# radial oracle


def radial_fd_energy(l: int, w: float, rho_max: float, n: int, mass: float = 1.0) -> float:
    """Lowest eigenvalue of the radial oscillator on a cell-centred grid.

    Nodes ``rho_i = (i - 1/2) h``, Dirichlet wall at ``rho_max = (n + 1/2) h``;
    flux-form differences make the zero flux through ``rho = 0`` automatic.
    """
    h = rho_max / (n + 0.5)
    rho = (np.arange(1, n + 1) - 0.5) * h
    faces = np.arange(1, n + 1) * h  # rho_{i+1/2}
    c = HBAR**2 / (2 * mass * h * h)
    left = np.concatenate([[0.0], faces[:-1]])
    diag = c * (left + faces) + (l * l * HBAR**2 / (2 * mass * rho**2) + 0.5 * mass * w * w * rho**2) * rho
    off = -c * faces[:-1]
    # symmetric form D^-1/2 K D^-1/2 with D = diag(rho)
    sq = np.sqrt(rho)
    vals = eigh_tridiagonal(diag / rho, off / (sq[:-1] * sq[1:]), select="i", select_range=(0, 0),
                            eigvals_only=True)
    return float(vals[0])


@lru_cache(maxsize=256)
def radial_energy_oracle(l: int, w: float, grid: tuple[float, int] | None = None, mass: float = 1.0) -> float:
    """Converged lowest radial energy for angular momentum ``l``.

    Solves on ``n``, ``2n`` and ``4n`` points and Richardson-extrapolates the
    O(h^2) error; the two extrapolants must agree to 1e-4 relative.
    """
    beta = math.sqrt(mass * w / HBAR)
    rho_max, n = grid if grid is not None else (10.0 / beta, 400)
    if rho_max < 8.0 / beta * (1 - 1e-12):
        raise ValueError(f"rho_max = {rho_max} must be >= 8/beta = {8.0 / beta}")
    if n < 200:
        raise ValueError("n_points must be >= 200")
    E = [radial_fd_energy(l, w, rho_max, n * 2**k, mass) for k in range(3)]
    r1 = (4 * E[1] - E[0]) / 3
    r2 = (4 * E[2] - E[1]) / 3
    change = abs(r2 - r1) / abs(r2)
    if change > 1e-4:
        raise RadialConvergenceError(
            "radial oracle not converged",
            {"l": l, "w": w, "rho_max": rho_max, "n": n, "raw": E, "extrapolated": [r1, r2], "rel_change": change},
        )
    return r2


def mode_table(ls: Sequence[int], w: float, mass: float = 1.0) -> list[dict]:
    rows = []
    for l in ls:
        m = CircularMode(l, w, mass)
        rows.append({"l": l, "w": w, "E_paper": m.energy_alt, "E_oracle": m.energy, "A_norm": m.A})
    return rows


def mode_table_csv(ls: Sequence[int], w: float, mass: float = 1.0) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["l", "w", "E_paper", "E_oracle", "A_norm"])
    for r in mode_table(ls, w, mass):
        wr.writerow([r["l"], format(r["w"], ".17g"), format(r["E_paper"], ".17g"),
                     format(r["E_oracle"], ".17g"), format(r["A_norm"], ".17g")])
    return buf.getvalue()
