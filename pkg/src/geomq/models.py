"""Effective one-dimensional Hamiltonians on a curve.

A model is the coefficient record of

    H = (p - A(s))^2 / 2m + W(s) p + V(s),        p = -i hbar d/ds

where ``A`` is real, and ``V`` and ``W`` are ``spin_dim x spin_dim`` matrices. In
``hermitized`` mode the solver uses ``(W p + p W) / 2`` and ``V`` has been
replaced by its Hermitian part. Each of ``A``, ``V``, ``W`` is stored as named
terms, so tests and reports can ask which geometric contributions a model
carries.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence, Union

import numpy as np
from scipy.interpolate import CubicSpline

from .geometry import (
    CurveSpec,
    FrameSample,
    curvature_torsion,
    curve_hash,
    curve_period,
    curve_to_dict,
    frame_arrays,
)
from .modes import HBAR

__all__ = [
    "PAULI",
    "EMField",
    "SOCParams",
    "EffectiveModel1D",
    "EffectiveMomentum",
    "CurveGeometry",
    "TabulatedGeometry",
    "as_geometry",
    "build_spinless_square",
    "build_spinless_circular",
    "build_charged_square",
    "build_charged_circular",
    "build_soc_square",
    "build_soc_circular",
    "effective_momentum",
    "gauge_transform",
    "model_to_dict",
    "model_from_dict",
    "model_to_json",
    "model_from_json",
    "coefficient_table",
]

PAULI = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)
I2 = np.eye(2, dtype=complex)


def project_pauli(vec: np.ndarray) -> np.ndarray:
    """``v . sigma`` for vectors of shape ``(..., 3)``."""
    return np.einsum("...i,ijk->...jk", np.asarray(vec, dtype=float), PAULI)


# --------------------------------------------------------------------------
# geometry inputs


class CurveGeometry:
    """Frame data evaluated analytically from a curve description."""

    def __init__(self, curve: CurveSpec):
        self.curve = curve
        self.period = curve_period(curve)

    def kappa_tau(self, s):
        return curvature_torsion(self.curve, self._wrap(s))

    def frames(self, s):
        fa = frame_arrays(self.curve, self._wrap(s))
        return fa["t"], fa["n"], fa["b"]

    def _wrap(self, s):
        s = np.asarray(s, dtype=float)
        from .geometry import Line, Helix

        if isinstance(self.curve, (Line, Helix)):
            return s
        if self.period is not None:
            return np.mod(s, self.period)
        return s

    def describe(self) -> dict:
        return {"curve": curve_to_dict(self.curve), "curve_hash": curve_hash(self.curve)}


class TabulatedGeometry:
    """Frame samples interpolated cubically in ``s``."""

    def __init__(self, frames: Sequence[FrameSample], period: float | None = None):
        if len(frames) < 2:
            raise ValueError("need at least two frame samples")
        s = np.array([f.s for f in frames])
        if np.any(np.diff(s) <= 0):
            raise ValueError("frame samples must have increasing s")
        self._s = s
        self.period = period
        self._kt = CubicSpline(s, np.array([[f.kappa, f.tau] for f in frames])) if len(frames) > 2 else None
        self._kt_raw = np.array([[f.kappa, f.tau] for f in frames])
        tri = np.array([np.concatenate([f.t, f.n, f.b]) for f in frames])
        self._tri_raw = tri
        self._tri = CubicSpline(s, tri) if len(frames) > 2 else None

    def _eval(self, spline, raw, s):
        s = np.asarray(s, dtype=float)
        if self.period is not None:
            s = self._s[0] + np.mod(s - self._s[0], self.period)
        if spline is None:
            return np.moveaxis(np.array([np.interp(s, self._s, raw[:, j]) for j in range(raw.shape[1])]), 0, -1)
        out = spline(s)
        # exact values at the knots
        idx = np.searchsorted(self._s, s)
        hit = (idx < len(self._s)) & (self._s[np.minimum(idx, len(self._s) - 1)] == s)
        if np.any(hit):
            out[hit] = raw[idx[hit]]
        return out

    def kappa_tau(self, s):
        kt = self._eval(self._kt, self._kt_raw, s)
        return kt[..., 0], kt[..., 1]

    def frames(self, s):
        v = self._eval(self._tri, self._tri_raw, s)
        t, n = v[..., 0:3], v[..., 3:6]
        t = t / np.linalg.norm(t, axis=-1, keepdims=True)
        n = n - np.sum(n * t, axis=-1, keepdims=True) * t
        n = n / np.linalg.norm(n, axis=-1, keepdims=True)
        return t, n, np.cross(t, n)

    def describe(self) -> dict:
        return {"curve": {"kind": "tabulated", "n_samples": int(self._s.size)}, "curve_hash": None}


Geometry = Union[CurveGeometry, TabulatedGeometry]


def as_geometry(geom) -> Geometry:
    if isinstance(geom, (CurveGeometry, TabulatedGeometry)):
        return geom
    if isinstance(geom, (list, tuple)) and geom and isinstance(geom[0], FrameSample):
        return TabulatedGeometry(geom)
    return CurveGeometry(geom)


# --------------------------------------------------------------------------
# physics inputs


def _as_fn(v) -> Callable:
    if callable(v):
        return v
    c = float(v)
    return lambda s: np.full(np.shape(s), c)


@dataclass(frozen=True)
class EMField:
    """Fields on the curve: ``A_s_bar(s)``, ``A_0(s)`` and tangent ``B_s(s)``.

    Each entry is a constant or a vectorized callable.
    """

    A_s_bar: Union[float, Callable] = 0.0
    A_0: Union[float, Callable] = 0.0
    B_s: Union[float, Callable] = 0.0

    def fns(self):
        return _as_fn(self.A_s_bar), _as_fn(self.A_0), _as_fn(self.B_s)

    def is_zero(self) -> bool:
        return all(not callable(v) and v == 0 for v in (self.A_s_bar, self.A_0, self.B_s))


@dataclass(frozen=True)
class SOCParams:
    alpha_s: float = 0.0
    alpha_n: float = 0.0
    alpha_b: float = 0.0

    def __post_init__(self):
        for v in (self.alpha_s, self.alpha_n, self.alpha_b):
            if not math.isfinite(v):
                raise ValueError("SOC coefficients must be finite")


# --------------------------------------------------------------------------
# the model record


Term = tuple[str, Callable]


@dataclass(frozen=True)
class EffectiveModel1D:
    mass: float
    spin_dim: int
    gauge_terms: tuple[Term, ...] = ()
    potential_terms: tuple[Term, ...] = ()
    first_order_terms: tuple[Term, ...] = ()
    mode: str = "paper_verbatim"
    kind: str = "custom"
    params: Mapping = field(default_factory=dict)
    period: float | None = None
    source: Mapping = field(default_factory=dict)
    gauge_phase: Callable | None = None
    dropped: Callable | None = None

    def __post_init__(self):
        if self.spin_dim not in (1, 2):
            raise ValueError("spin_dim must be 1 or 2")
        if self.mode not in ("paper_verbatim", "hermitized"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not self.mass > 0:
            raise ValueError("mass must be > 0")

    def A(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        out = np.zeros(s.shape)
        for _, fn in self.gauge_terms:
            out = out + fn(s)
        return out

    def _matrix_sum(self, terms, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        d = self.spin_dim
        out = np.zeros(s.shape + (d, d), dtype=complex)
        for _, fn in terms:
            out = out + fn(s)
        return out

    def V(self, s) -> np.ndarray:
        return self._matrix_sum(self.potential_terms, s)

    def W(self, s) -> np.ndarray:
        return self._matrix_sum(self.first_order_terms, s)

    def term_names(self) -> dict[str, list[str]]:
        return {
            "A": [n for n, _ in self.gauge_terms],
            "V": [n for n, _ in self.potential_terms],
            "W": [n for n, _ in self.first_order_terms],
        }

    def has_term(self, name: str) -> bool:
        return any(name in names for names in self.term_names().values())

    def hermitized(self) -> "EffectiveModel1D":
        """Hermitian counterpart: V -> (V + V^H)/2, W p -> (W p + p W)/2.

        The anti-Hermitian part of V is kept in ``dropped``.
        """
        if self.mode == "hermitized":
            return self
        full = self.V

        def herm(s):
            v = full(s)
            return 0.5 * (v + np.conj(np.swapaxes(v, -1, -2)))

        def anti(s):
            v = full(s)
            return 0.5 * (v - np.conj(np.swapaxes(v, -1, -2)))

        return replace(self, potential_terms=(("hermitian_part", herm),), mode="hermitized", dropped=anti)

    def with_mode(self, mode: str) -> "EffectiveModel1D":
        return self.hermitized() if mode == "hermitized" else self

    def lift_spin(self) -> "EffectiveModel1D":
        """Same physics acting on a two-component spinor (identity in spin)."""
        if self.spin_dim == 2:
            return self
        lift = lambda fn: (lambda s, _f=fn: _f(s)[..., 0:1, 0:1] * I2)  # noqa: E731
        return replace(
            self,
            spin_dim=2,
            potential_terms=tuple((n, lift(f)) for n, f in self.potential_terms),
            first_order_terms=tuple((n, lift(f)) for n, f in self.first_order_terms),
        )


def coefficient_table(model: EffectiveModel1D, s) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return model.A(s), model.V(s), model.W(s)


def _scalar_term(fn: Callable) -> Callable:
    return lambda s: fn(np.asarray(s, dtype=float))[..., None, None] * np.ones((1, 1), dtype=complex)


def _common(geom, mass):
    g = as_geometry(geom)
    src = g.describe()
    return g, src, g.period


def _curvature_gp(g, mass):
    return lambda s: -(HBAR**2) * g.kappa_tau(s)[0] ** 2 / (8 * mass)


def _torsion_gp(g, mass):
    return lambda s: -(HBAR**2) * g.kappa_tau(s)[1] ** 2 / (4 * mass)


def _geometric_gauge(g, l):
    return lambda s: l * HBAR * g.kappa_tau(s)[1]


def build_spinless_square(geom, mass: float = 1.0) -> EffectiveModel1D:
    """Square confinement: curvature and torsion geometric potentials, no gauge field."""
    g, src, period = _common(geom, mass)
    return EffectiveModel1D(
        mass=mass,
        spin_dim=1,
        potential_terms=(
            ("curvature_gp", _scalar_term(_curvature_gp(g, mass))),
            ("torsion_gp", _scalar_term(_torsion_gp(g, mass))),
        ),
        kind="spinless-square",
        params={},
        period=period,
        source=src,
    )


def build_spinless_circular(geom, l: int, mass: float = 1.0) -> EffectiveModel1D:
    """Circular confinement with angular momentum ``l``: gauge ``A = l hbar tau``."""
    l = int(l)
    g, src, period = _common(geom, mass)
    return EffectiveModel1D(
        mass=mass,
        spin_dim=1,
        gauge_terms=(("geometric_gauge", _geometric_gauge(g, l)),),
        potential_terms=(("curvature_gp", _scalar_term(_curvature_gp(g, mass))),),
        kind="spinless-circular",
        params={"l": l},
        period=period,
        source=src,
    )


def build_charged_square(geom, em: EMField = EMField(), mass: float = 1.0, charge: float = 1.0) -> EffectiveModel1D:
    g, src, period = _common(geom, mass)
    A_s, A_0, _ = em.fns()
    e = charge
    return EffectiveModel1D(
        mass=mass,
        spin_dim=1,
        gauge_terms=(("em_gauge", lambda s: e * A_s(np.asarray(s, dtype=float))),),
        potential_terms=(
            ("curvature_gp", _scalar_term(_curvature_gp(g, mass))),
            ("torsion_gp", _scalar_term(_torsion_gp(g, mass))),
            ("scalar_potential", _scalar_term(lambda s: -e * A_0(s))),
        ),
        kind="charged-square",
        params={"charge": e},
        period=period,
        source=src,
    )


def build_charged_circular(geom, em: EMField = EMField(), l: int = 0, mass: float = 1.0,
                           charge: float = 1.0) -> EffectiveModel1D:
    """Adds the induced Zeeman term ``B_s l mu`` with ``mu = -hbar e / 2m``."""
    l = int(l)
    g, src, period = _common(geom, mass)
    A_s, A_0, B_s = em.fns()
    e = charge
    mu = -HBAR * e / (2 * mass)
    return EffectiveModel1D(
        mass=mass,
        spin_dim=1,
        gauge_terms=(
            ("geometric_gauge", _geometric_gauge(g, l)),
            ("em_gauge", lambda s: e * A_s(np.asarray(s, dtype=float))),
        ),
        potential_terms=(
            ("curvature_gp", _scalar_term(_curvature_gp(g, mass))),
            ("induced_zeeman", _scalar_term(lambda s: B_s(s) * (l * mu))),
            ("scalar_potential", _scalar_term(lambda s: -e * A_0(s))),
        ),
        kind="charged-circular",
        params={"l": l, "charge": e},
        period=period,
        source=src,
    )


def _frame_paulis(g):
    def sig(s):
        t, n, b = g.frames(s)
        return project_pauli(t), project_pauli(n), project_pauli(b)

    return sig


def _lifted(fn):
    return lambda s: fn(np.asarray(s, dtype=float))[..., None, None] * I2


def build_soc_square(geom, soc: SOCParams = SOCParams(), mass: float = 1.0) -> EffectiveModel1D:
    g, src, period = _common(geom, mass)
    sig = _frame_paulis(g)
    a_s, a_n, a_b = soc.alpha_s, soc.alpha_n, soc.alpha_b

    def soc_curvature(s):
        ss, sn, sb = sig(s)
        k = g.kappa_tau(s)[0][..., None, None]
        return -1j * HBAR * (a_s * sb - a_b * ss) * k / 2

    def soc_torsion(s):
        ss, sn, sb = sig(s)
        t = g.kappa_tau(s)[1][..., None, None]
        return 1j * HBAR * (a_n * sn + a_b * sb) * t / 2

    def w(s):
        ss, sn, sb = sig(s)
        return a_n * sb - a_b * sn

    return EffectiveModel1D(
        mass=mass,
        spin_dim=2,
        potential_terms=(
            ("curvature_gp", _lifted(_curvature_gp(g, mass))),
            ("torsion_gp", _lifted(_torsion_gp(g, mass))),
            ("soc_curvature", soc_curvature),
            ("soc_torsion", soc_torsion),
        ),
        first_order_terms=(("soc_momentum", w),),
        kind="soc-square",
        params={"alpha_s": a_s, "alpha_n": a_n, "alpha_b": a_b},
        period=period,
        source=src,
    )


def build_soc_circular(geom, soc: SOCParams = SOCParams(), l: int = 0, mass: float = 1.0,
                       half_gauge: bool = True) -> EffectiveModel1D:
    """Circular confinement with SOC.

    The SOC momentum enters as ``W (p - A_g / 2)`` when ``half_gauge`` is set
    and as ``W (p - A_g)`` otherwise; the shift is stored as the
    ``soc_gauge_shift`` potential term.
    """
    l = int(l)
    g, src, period = _common(geom, mass)
    sig = _frame_paulis(g)
    a_s, a_n, a_b = soc.alpha_s, soc.alpha_n, soc.alpha_b
    gauge = _geometric_gauge(g, l)
    frac = 0.5 if half_gauge else 1.0

    def w(s):
        ss, sn, sb = sig(s)
        return a_n * sb - a_b * sn

    def soc_curvature(s):
        ss, sn, sb = sig(s)
        k = g.kappa_tau(s)[0][..., None, None]
        return 1j * HBAR * (a_b * ss - 3 * a_s * sb) * k / 8

    def soc_orbital(s):
        ss, sn, sb = sig(s)
        k = g.kappa_tau(s)[0][..., None, None]
        return -l * HBAR * (a_s * sn - 3 * a_n * ss) * k / 4

    def soc_torsion(s):
        ss, sn, sb = sig(s)
        t = g.kappa_tau(s)[1][..., None, None]
        return 1j * HBAR * (a_n * sn + a_b * sb) * t / 4

    def soc_gauge_shift(s):
        return -w(s) * (frac * gauge(np.asarray(s, dtype=float)))[..., None, None]

    return EffectiveModel1D(
        mass=mass,
        spin_dim=2,
        gauge_terms=(("geometric_gauge", gauge),),
        potential_terms=(
            ("curvature_gp", _lifted(_curvature_gp(g, mass))),
            ("soc_curvature", soc_curvature),
            ("soc_orbital", soc_orbital),
            ("soc_torsion", soc_torsion),
            ("soc_gauge_shift", soc_gauge_shift),
        ),
        first_order_terms=(("soc_momentum", w),),
        kind="soc-circular",
        params={"l": l, "alpha_s": a_s, "alpha_n": a_n, "alpha_b": a_b, "half_gauge": half_gauge},
        period=period,
        source=src,
    )


# --------------------------------------------------------------------------
# effective momentum and gauge transformations


@dataclass(frozen=True)
class EffectiveMomentum:
    """``p = -i hbar t d/ds + geometric(s)``; ``geometric`` returns complex 3-vectors."""

    tangent: Callable
    geometric: Callable
    confinement: str

    def tangential_coefficient(self) -> complex:
        return -1j * HBAR


def effective_momentum(geom, confinement: str) -> EffectiveMomentum:
    g = as_geometry(geom)
    if confinement not in ("square", "circular"):
        raise ValueError("confinement must be 'square' or 'circular'")

    def tangent(s):
        return g.frames(s)[0]

    if confinement == "square":
        def geometric(s):
            k = g.kappa_tau(s)[0]
            return 1j * HBAR * (k / 2)[..., None] * g.frames(s)[1]
    else:
        def geometric(s):
            return np.zeros(np.shape(s) + (3,), dtype=complex)

    return EffectiveMomentum(tangent, geometric, confinement)


def _derivative(fn: Callable, h: float = 1e-3) -> Callable:
    def d(s):
        s = np.asarray(s, dtype=float)
        return (fn(s - 2 * h) - 8 * fn(s - h) + 8 * fn(s + h) - fn(s + 2 * h)) / (12 * h)

    return d


def gauge_transform(model: EffectiveModel1D, Lambda: Callable, dLambda: Callable | None = None) -> EffectiveModel1D:
    """Shift ``A -> A + dLambda/ds``; eigenvectors pick up ``exp(i Lambda / hbar)``.

    When the model has a first-order term, ``V`` gains ``-W dLambda/ds`` so the
    spectrum is untouched.
    """
    dL = dLambda if dLambda is not None else _derivative(Lambda)
    d = model.spin_dim
    dLv = lambda s: np.asarray(dL(np.asarray(s, dtype=float)), dtype=float) * np.ones(np.shape(s))  # noqa: E731
    terms = model.potential_terms
    if model.first_order_terms:
        W = model.W
        terms = terms + (("gauge_compensation", lambda s: -W(s) * dLv(s)[..., None, None]),)
    prev = model.gauge_phase
    phase = (lambda s: np.exp(1j * Lambda(np.asarray(s, dtype=float)) / HBAR)) if prev is None else (
        lambda s: prev(s) * np.exp(1j * Lambda(np.asarray(s, dtype=float)) / HBAR)
    )
    return replace(
        model,
        gauge_terms=model.gauge_terms + (("pure_gauge", dLv),),
        potential_terms=terms,
        gauge_phase=phase,
    )


# --------------------------------------------------------------------------
# serialization


def model_to_dict(model: EffectiveModel1D, s_values) -> dict:
    s = np.asarray(s_values, dtype=float)
    A, V, W = model.A(s), model.V(s), model.W(s)
    samples = []
    for j in range(s.size):
        samples.append({
            "s": float(s[j]),
            "A": float(A[j]),
            "V_re": V[j].real.tolist(),
            "V_im": V[j].imag.tolist(),
            "W_re": W[j].real.tolist(),
            "W_im": W[j].imag.tolist(),
        })
    return {
        "mass": float(model.mass),
        "spin_dim": int(model.spin_dim),
        "mode": model.mode,
        "kind": model.kind,
        "params": dict(model.params),
        "period": model.period,
        "terms": model.term_names(),
        **dict(model.source),
        "samples": samples,
    }


class _Table:
    def __init__(self, s, values, period):
        self.s = s
        self.values = values
        self.period = period
        flat = values.reshape(len(s), -1)
        self._spline = CubicSpline(s, flat) if len(s) > 2 else None
        self._flat = flat

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.period is not None:
            x = self.s[0] + np.mod(x - self.s[0], self.period)
        if self._spline is None:
            out = np.array([np.interp(x, self.s, self._flat[:, j]) for j in range(self._flat.shape[1])])
            out = np.moveaxis(out, 0, -1)
        else:
            out = self._spline(x)
        idx = np.searchsorted(self.s, x)
        idc = np.minimum(idx, len(self.s) - 1)
        hit = self.s[idc] == x
        if np.any(hit):
            out[hit] = self._flat[idc[hit]]
        return out.reshape(x.shape + self.values.shape[1:])


def model_from_dict(d: Mapping) -> EffectiveModel1D:
    samples = d["samples"]
    s = np.array([x["s"] for x in samples], dtype=float)
    A = np.array([x["A"] for x in samples], dtype=float)
    V = np.array([np.array(x["V_re"]) + 1j * np.array(x["V_im"]) for x in samples])
    W = np.array([np.array(x["W_re"]) + 1j * np.array(x["W_im"]) for x in samples])
    period = d.get("period")
    tA = _Table(s, A, period)
    tV_re, tV_im = _Table(s, V.real, period), _Table(s, V.imag, period)
    tW_re, tW_im = _Table(s, W.real, period), _Table(s, W.imag, period)
    source = {k: d[k] for k in ("curve", "curve_hash") if k in d}
    return EffectiveModel1D(
        mass=float(d["mass"]),
        spin_dim=int(d["spin_dim"]),
        gauge_terms=(("tabulated", tA),),
        potential_terms=(("tabulated", lambda x: tV_re(x) + 1j * tV_im(x)),),
        first_order_terms=(("tabulated", lambda x: tW_re(x) + 1j * tW_im(x)),),
        mode=d["mode"],
        kind=d.get("kind", "tabulated"),
        params=dict(d.get("params", {})),
        period=period,
        source=source,
    )


def model_to_json(model: EffectiveModel1D, s_values, **kw) -> str:
    return json.dumps(model_to_dict(model, s_values), **kw)


def model_from_json(text: str) -> EffectiveModel1D:
    return model_from_dict(json.loads(text))
