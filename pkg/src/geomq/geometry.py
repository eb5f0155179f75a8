"""Space curves, arc-length maps, Frenet frames and the tube metric.

Built-in curves (``Line``, ``Circle``, ``Helix``) are evaluated in closed form.
``Parametric`` curves are given as expression strings in ``t`` and are
differentiated symbolically; their Frenet frame is available both from the
derivative formulas and from integrating the Frenet-Serret equations
(``propagate_frames``), which is how the two routes are cross-checked.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import re
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Callable, Sequence, Union

import numpy as np
import sympy
from scipy.interpolate import CubicHermiteSpline

__all__ = [
    "Line",
    "Circle",
    "Helix",
    "Parametric",
    "CurveSpec",
    "FrameSample",
    "TubeMetric",
    "ArcLengthMap",
    "GeometryError",
    "DegenerateCurveError",
    "FrameUndefinedError",
    "PatchViolationError",
    "reparametrize_arclength",
    "frame_at",
    "frames_on",
    "frame_arrays",
    "propagate_frames",
    "tube_metric",
    "curvature_torsion",
    "has_constant_metric",
    "is_closed",
    "curve_length",
    "curve_period",
    "curve_to_dict",
    "curve_from_dict",
    "curve_hash",
    "frames_to_csv",
    "KAPPA_THRESHOLD",
]

# below this curvature the Frenet normal of a numeric curve is refused
KAPPA_THRESHOLD = 1e-10

FRAME_CSV_HEADER = (
    "s", "x", "y", "z", "tx", "ty", "tz", "nx", "ny", "nz", "bx", "by", "bz", "kappa", "tau",
)


class GeometryError(ValueError):
    pass


class DegenerateCurveError(GeometryError):
    def __init__(self, t: float):
        super().__init__(f"curve is degenerate (|r'(t)| = 0) at t = {t!r}")
        self.t = t


class FrameUndefinedError(GeometryError):
    def __init__(self, s: float, kappa: float):
        super().__init__(
            f"Frenet frame undefined at s = {s!r}: curvature {kappa:.3e} below {KAPPA_THRESHOLD:g}"
        )
        self.s = s
        self.kappa = kappa


class PatchViolationError(GeometryError):
    pass


# --------------------------------------------------------------------------
# curve descriptions


@dataclass(frozen=True)
class Line:
    """Straight line along x, ``r(s) = (s, 0, 0)`` for ``s`` in ``[0, length]``."""

    length: float = 1.0

    def __post_init__(self):
        if not self.length > 0:
            raise GeometryError("Line.length must be > 0")


@dataclass(frozen=True)
class Circle:
    """Circle of radius ``R`` in the xy plane, one full turn."""

    R: float

    def __post_init__(self):
        if not self.R > 0:
            raise GeometryError("Circle.R must be > 0")


@dataclass(frozen=True)
class Helix:
    """Right-handed helix ``(r cos th, r sin th, c th)``, ``th`` in ``[0, 2 pi turns]``."""

    r: float
    c: float
    turns: float = 1.0

    def __post_init__(self):
        if not self.r > 0:
            raise GeometryError("Helix.r must be > 0")
        if not self.c >= 0:
            raise GeometryError("Helix.c must be >= 0")
        if not self.turns > 0:
            raise GeometryError("Helix.turns must be > 0")

    @property
    def L(self) -> float:
        return math.hypot(self.r, self.c)

    @property
    def kappa(self) -> float:
        return self.r / self.L**2

    @property
    def tau(self) -> float:
        return self.c / self.L**2


_ALLOWED_NAMES = {"t", "sin", "cos", "sinh", "cosh", "exp", "sqrt", "pi"}
_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)|([A-Za-z_]\w*)|(\*\*|[-+*/^()]))")


def _validate_expression(expr: str) -> str:
    pos = 0
    out = []
    while pos < len(expr):
        m = _TOKEN.match(expr, pos)
        if m is None or m.end() == pos:
            if expr[pos:].strip() == "":
                break
            raise GeometryError(f"unsupported character in expression {expr!r} at offset {pos}")
        name = m.group(2)
        if name is not None and name not in _ALLOWED_NAMES:
            raise GeometryError(f"unsupported identifier {name!r} in expression {expr!r}")
        out.append(m.group(0))
        pos = m.end()
    return "".join(out).replace("^", "**")


@dataclass(frozen=True)
class Parametric:
    """Curve ``(x(t), y(t), z(t))`` given by expression strings over ``t``.

    Supported syntax: ``+ - * / ^``, parentheses, numeric literals, ``pi`` and
    the functions ``sin cos sinh cosh exp sqrt``.
    """

    x: str
    y: str
    z: str
    t_range: tuple[float, float] = (0.0, 1.0)
    tol: float = 1e-12

    def __post_init__(self):
        t0, t1 = self.t_range
        if not (math.isfinite(t0) and math.isfinite(t1) and t1 > t0):
            raise GeometryError(f"invalid t_range {self.t_range!r}")
        object.__setattr__(self, "t_range", (float(t0), float(t1)))
        for e in (self.x, self.y, self.z):
            _validate_expression(e)
        if not self.tol > 0:
            raise GeometryError("tol must be > 0")


CurveSpec = Union[Line, Circle, Helix, Parametric]


# --------------------------------------------------------------------------
# frames and metric


@dataclass(frozen=True)
class FrameSample:
    s: float
    position: np.ndarray
    t: np.ndarray
    n: np.ndarray
    b: np.ndarray
    kappa: float
    tau: float

    def triad(self) -> np.ndarray:
        """Rows ``t, n, b``."""
        return np.array([self.t, self.n, self.b])

    def row(self) -> list[float]:
        return [self.s, *self.position, *self.t, *self.n, *self.b, self.kappa, self.tau]


@dataclass(frozen=True)
class TubeMetric:
    """Covariant metric ``G`` (order s, q2, q3), its inverse, determinant and ``f``."""

    G: np.ndarray
    G_inv: np.ndarray
    detG: float
    f: float


def tube_metric(frame: FrameSample, q2: float, q3: float) -> TubeMetric:
    """Metric of the tube coordinates ``R = r + q2 n + q3 b`` at ``(s, q2, q3)``."""
    kappa, tau = frame.kappa, frame.tau
    f = 1.0 - kappa * q2
    if not f > 0:
        raise PatchViolationError(
            f"f = 1 - kappa*q2 = {f:.3g} <= 0 at s={frame.s}, q2={q2}; outside the coordinate patch"
        )
    G = np.array(
        [
            [f * f + tau * tau * (q2 * q2 + q3 * q3), -tau * q3, tau * q2],
            [-tau * q3, 1.0, 0.0],
            [tau * q2, 0.0, 1.0],
        ]
    )
    f2 = f * f
    G_inv = np.array(
        [
            [1.0 / f2, tau * q3 / f2, -tau * q2 / f2],
            [tau * q3 / f2, 1.0 + tau * tau * q3 * q3 / f2, -tau * tau * q2 * q3 / f2],
            [-tau * q2 / f2, -tau * tau * q2 * q3 / f2, 1.0 + tau * tau * q2 * q2 / f2],
        ]
    )
    return TubeMetric(G=G, G_inv=G_inv, detG=f2, f=f)


# --------------------------------------------------------------------------
# parametric machinery


@dataclass(frozen=True)
class _Symbolic:
    derivs: tuple[Callable, ...]  # r, r', r'', r''' as vector callables of t


@lru_cache(maxsize=64)
def _symbolic(curve: Parametric) -> _Symbolic:
    t = sympy.Symbol("t", real=True)
    ns = {"t": t, "sin": sympy.sin, "cos": sympy.cos, "sinh": sympy.sinh,
          "cosh": sympy.cosh, "exp": sympy.exp, "sqrt": sympy.sqrt, "pi": sympy.pi}
    comps = [sympy.sympify(_validate_expression(e), locals=ns) for e in (curve.x, curve.y, curve.z)]
    funcs = []
    for order in range(4):
        exprs = [sympy.diff(c, t, order) for c in comps]
        f = sympy.lambdify(t, exprs, modules="numpy")

        def vec(tt, _f=f):
            out = _f(tt)
            return np.array([np.broadcast_to(np.asarray(v, dtype=float), np.shape(tt)) for v in out])

        funcs.append(vec)
    return _Symbolic(tuple(funcs))


def _speed(curve: Parametric, t):
    return np.linalg.norm(_symbolic(curve).derivs[1](t), axis=0)


def _adaptive_simpson(fn, a, b, tol: float, max_depth: int = 40) -> np.ndarray:
    """Adaptive Simpson integrals of vectorized ``fn`` over each ``[a[i], b[i]]``.

    All pending subintervals are refined together; ``tol`` is the absolute
    tolerance per input interval.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    out = np.zeros(a.size)
    owner = np.arange(a.size)
    lo, hi = a.copy(), b.copy()
    flo, fhi, fmid = fn(lo), fn(hi), fn(0.5 * (lo + hi))
    whole = (hi - lo) * (flo + 4 * fmid + fhi) / 6.0
    tols = np.full(a.size, float(tol))
    for depth in range(max_depth + 1):
        mid = 0.5 * (lo + hi)
        lm, rm = 0.5 * (lo + mid), 0.5 * (mid + hi)
        flm, frm = fn(lm), fn(rm)
        left = (mid - lo) * (flo + 4 * flm + fmid) / 6.0
        right = (hi - mid) * (fmid + 4 * frm + fhi) / 6.0
        delta = left + right - whole
        done = (np.abs(delta) <= 15 * tols) | (depth == max_depth)
        np.add.at(out, owner[done], (left + right + delta / 15.0)[done])
        keep = ~done
        if not np.any(keep):
            break
        owner = np.concatenate([owner[keep], owner[keep]])
        lo, hi = np.concatenate([lo[keep], mid[keep]]), np.concatenate([mid[keep], hi[keep]])
        flo, fhi = np.concatenate([flo[keep], fmid[keep]]), np.concatenate([fmid[keep], fhi[keep]])
        fmid = np.concatenate([flm[keep], frm[keep]])
        whole = np.concatenate([left[keep], right[keep]])
        tols = np.concatenate([tols[keep], tols[keep]]) / 2
    return out


@dataclass(frozen=True)
class ArcLengthMap:
    """Monotone map between the curve parameter ``t`` and arc length ``s``."""

    t_nodes: np.ndarray
    s_nodes: np.ndarray
    speed_nodes: np.ndarray
    length: float
    _spline: CubicHermiteSpline = field(repr=False, compare=False)
    _speed: Callable = field(repr=False, compare=False)

    def s_of_t(self, t):
        return self._spline(t)

    def ds_dt(self, t):
        return self._spline.derivative()(t)

    def t_of_s(self, s, tol: float = 1e-13):
        """Safeguarded Newton inversion of the interpolant (vectorized)."""
        s_arr = np.asarray(s, dtype=float)
        flat = np.atleast_1d(s_arr).ravel()
        slack = tol * self.length
        if np.any(flat < -slack) or np.any(flat > self.length + slack):
            bad = flat[(flat < -slack) | (flat > self.length + slack)][0]
            raise GeometryError(f"s = {bad} outside [0, {self.length}]")
        flat = np.clip(flat, 0.0, self.length)
        i = np.clip(np.searchsorted(self.s_nodes, flat) - 1, 0, len(self.s_nodes) - 2)
        lo, hi = self.t_nodes[i].copy(), self.t_nodes[i + 1].copy()
        frac = (flat - self.s_nodes[i]) / (self.s_nodes[i + 1] - self.s_nodes[i])
        t = lo + frac * (hi - lo)
        d1 = self._spline.derivative()
        for _ in range(60):
            r = self._spline(t) - flat
            done = np.abs(r) <= tol * max(self.length, 1.0)
            if np.all(done):
                break
            hi = np.where(r > 0, t, hi)
            lo = np.where(r <= 0, t, lo)
            d = d1(t)
            with np.errstate(divide="ignore", invalid="ignore"):
                step = t - r / d
            ok = (d > 0) & (step > lo) & (step < hi)
            t = np.where(done, t, np.where(ok, step, 0.5 * (lo + hi)))
        return float(t[0]) if s_arr.ndim == 0 else t.reshape(s_arr.shape)


def _hermite_monotone(t, s, d) -> bool:
    sec = np.diff(s) / np.diff(t)
    return bool(np.all(sec > 0) and np.all(d[:-1] <= 3 * sec) and np.all(d[1:] <= 3 * sec))


def reparametrize_arclength(curve: CurveSpec, tol: float | None = None) -> ArcLengthMap:
    """Arc-length map of ``curve``.

    Segment lengths come from adaptive Simpson quadrature of ``|r'(t)|``; the
    nodes are refined until the cubic Hermite interpolant (with the exact
    speed as slope) is monotone and reproduces midpoint lengths to ``tol``.
    """
    if isinstance(curve, Parametric):
        return _parametric_arclength(curve, curve.tol if tol is None else tol)
    tol = 1e-12 if tol is None else tol
    if not tol > 0:
        raise GeometryError("tol must be > 0")
    total = curve_length(curve)
    t_end = _builtin_t_end(curve)
    speed = total / t_end
    t = np.linspace(0.0, t_end, 3)
    s = speed * t
    d = np.full_like(t, speed)
    spline = CubicHermiteSpline(t, s, d)
    return ArcLengthMap(t, s, d, total, spline, lambda tt: np.full_like(np.asarray(tt, float), speed))


def _builtin_t_end(curve) -> float:
    if isinstance(curve, Line):
        return curve.length
    if isinstance(curve, Circle):
        return 2 * math.pi
    if isinstance(curve, Helix):
        return 2 * math.pi * curve.turns
    raise TypeError(curve)


@lru_cache(maxsize=64)
def _parametric_arclength(curve: Parametric, tol: float) -> ArcLengthMap:
    if not tol > 0:
        raise GeometryError("tol must be > 0")
    t0, t1 = curve.t_range
    speed = lambda tt: _speed(curve, tt)  # noqa: E731
    n = 64
    while True:
        t = np.linspace(t0, t1, n + 1)
        v = _speed(curve, t)
        dense = np.linspace(t0, t1, 8 * n + 1)
        vd = _speed(curve, dense)
        scale = max(float(np.max(vd)), 1e-300)
        bad = np.nonzero(vd <= 1e-12 * scale)[0]
        if bad.size or not np.all(np.isfinite(vd)):
            idx = bad[0] if bad.size else int(np.nonzero(~np.isfinite(vd))[0][0])
            raise DegenerateCurveError(float(dense[idx]))
        seg = _adaptive_simpson(speed, t[:-1], t[1:], tol / n)
        s = np.concatenate([[0.0], np.cumsum(seg)])
        spline = CubicHermiteSpline(t, s, v)
        mids = 0.5 * (t[:-1] + t[1:])
        s_mid = s[:-1] + _adaptive_simpson(speed, t[:-1], mids, tol / n)
        err = float(np.max(np.abs(spline(mids) - s_mid)))
        if (err <= tol * max(1.0, s[-1]) and _hermite_monotone(t, s, v)) or n >= 1 << 14:
            return ArcLengthMap(t, s, v, float(s[-1]), spline, lambda tt: _speed(curve, tt))
        n *= 2


def curve_length(curve: CurveSpec) -> float:
    if isinstance(curve, Line):
        return curve.length
    if isinstance(curve, Circle):
        return 2 * math.pi * curve.R
    if isinstance(curve, Helix):
        return 2 * math.pi * curve.L * curve.turns
    return reparametrize_arclength(curve).length


def is_closed(curve: CurveSpec, tol: float = 1e-9) -> bool:
    if isinstance(curve, Circle):
        return True
    if isinstance(curve, Parametric):
        sym = _symbolic(curve)
        t0, t1 = curve.t_range
        return all(np.allclose(d(t0), d(t1), atol=tol) for d in sym.derivs[:4])
    return False


def curve_period(curve: CurveSpec) -> float | None:
    """Arc-length period over which the tube metric repeats, if any.

    For Line and Helix the metric coefficients are constant, so any period
    works; the natural one (unit length / one turn) is returned.
    """
    if isinstance(curve, Line):
        return curve.length
    if isinstance(curve, Circle):
        return 2 * math.pi * curve.R
    if isinstance(curve, Helix):
        return 2 * math.pi * curve.L
    return curve_length(curve) if is_closed(curve) else None


def has_constant_metric(curve: CurveSpec) -> bool:
    return isinstance(curve, (Line, Circle, Helix))


def frame_at(curve: CurveSpec, s: float) -> FrameSample:
    """Frenet frame, curvature and torsion at arc length ``s``."""
    s = float(s)
    if isinstance(curve, Line):
        return FrameSample(s, np.array([s, 0.0, 0.0]), np.array([1.0, 0.0, 0.0]),
                           np.array([0.0, 1.0, 0.0]), np.array([0.0, 0.0, 1.0]), 0.0, 0.0)
    if isinstance(curve, Circle):
        R = curve.R
        ph = s / R
        c, sn = math.cos(ph), math.sin(ph)
        return FrameSample(s, np.array([R * c, R * sn, 0.0]), np.array([-sn, c, 0.0]),
                           np.array([-c, -sn, 0.0]), np.array([0.0, 0.0, 1.0]), 1.0 / R, 0.0)
    if isinstance(curve, Helix):
        r, cc, L = curve.r, curve.c, curve.L
        th = s / L
        c, sn = math.cos(th), math.sin(th)
        return FrameSample(
            s,
            np.array([r * c, r * sn, cc * th]),
            np.array([-r * sn / L, r * c / L, cc / L]),
            np.array([-c, -sn, 0.0]),
            np.array([cc * sn / L, -cc * c / L, r / L]),
            curve.kappa,
            curve.tau,
        )
    amap = reparametrize_arclength(curve)
    return _parametric_frame(curve, amap.t_of_s(s), s)


def _parametric_frame(curve: Parametric, t: float, s: float) -> FrameSample:
    r0, r1, r2, r3 = (d(t) for d in _symbolic(curve).derivs)
    cr = np.cross(r1, r2)
    sp = np.linalg.norm(r1)
    ncr = np.linalg.norm(cr)
    kappa = ncr / sp**3
    if not kappa > KAPPA_THRESHOLD:
        raise FrameUndefinedError(s, kappa)
    tau = float(np.dot(cr, r3) / ncr**2)
    tt = r1 / sp
    bb = cr / ncr
    nn = np.cross(bb, tt)
    return FrameSample(s, r0.astype(float), tt, nn, bb, float(kappa), tau)


def curvature_torsion(curve: CurveSpec, s) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized ``(kappa(s), tau(s))``."""
    s = np.asarray(s, dtype=float)
    if isinstance(curve, Line):
        return np.zeros_like(s), np.zeros_like(s)
    if isinstance(curve, Circle):
        return np.full_like(s, 1.0 / curve.R), np.zeros_like(s)
    if isinstance(curve, Helix):
        return np.full_like(s, curve.kappa), np.full_like(s, curve.tau)
    t = reparametrize_arclength(curve).t_of_s(s)
    _, r1, r2, r3 = (np.moveaxis(d(t), 0, -1) for d in _symbolic(curve).derivs)
    cr = np.cross(r1, r2)
    ncr = np.linalg.norm(cr, axis=-1)
    kappa = ncr / np.linalg.norm(r1, axis=-1) ** 3
    low = kappa <= KAPPA_THRESHOLD
    if np.any(low):
        j = np.flatnonzero(low)[0]
        raise FrameUndefinedError(float(s.ravel()[j]), float(kappa.ravel()[j]))
    tau = np.einsum("...i,...i->...", cr, r3) / ncr**2
    return kappa, tau


def frame_arrays(curve: CurveSpec, s) -> dict[str, np.ndarray]:
    """Vectorized frame data: ``position, t, n, b`` with shape ``(..., 3)``, ``kappa, tau``."""
    s = np.asarray(s, dtype=float)
    z, o = np.zeros_like(s), np.ones_like(s)
    if isinstance(curve, Line):
        st = lambda *c: np.stack(c, axis=-1)  # noqa: E731
        return {"position": st(s, z, z), "t": st(o, z, z), "n": st(z, o, z), "b": st(z, z, o),
                "kappa": z, "tau": z.copy()}
    if isinstance(curve, (Circle, Helix)):
        out = [frame_at(curve, x) for x in s.ravel()]
        shape = s.shape
        pack = lambda name: np.array([getattr(f, name) for f in out]).reshape(shape + (3,))  # noqa: E731
        kt = curvature_torsion(curve, s)
        return {"position": pack("position"), "t": pack("t"), "n": pack("n"), "b": pack("b"),
                "kappa": kt[0], "tau": kt[1]}
    t = reparametrize_arclength(curve).t_of_s(s)
    r0, r1, r2, r3 = (np.moveaxis(d(t), 0, -1) for d in _symbolic(curve).derivs)
    kappa, tau = curvature_torsion(curve, s)
    cr = np.cross(r1, r2)
    tt = r1 / np.linalg.norm(r1, axis=-1, keepdims=True)
    bb = cr / np.linalg.norm(cr, axis=-1, keepdims=True)
    return {"position": r0, "t": tt, "n": np.cross(bb, tt), "b": bb, "kappa": kappa, "tau": tau}


def frames_on(curve: CurveSpec, s_values: Sequence[float]) -> list[FrameSample]:
    return [frame_at(curve, s) for s in s_values]


def _gram_schmidt(Y: np.ndarray) -> np.ndarray:
    t = Y[0] / math.sqrt(Y[0] @ Y[0])
    n = Y[1] - (Y[1] @ t) * t
    n /= math.sqrt(n @ n)
    b = np.array([t[1] * n[2] - t[2] * n[1], t[2] * n[0] - t[0] * n[2], t[0] * n[1] - t[1] * n[0]])
    return np.array([t, n, b])


def propagate_frames(curve: CurveSpec, s_values: Sequence[float], step: float = 1e-3) -> list[FrameSample]:
    """Frames obtained by integrating the Frenet-Serret equations.

    Starts from the frame at ``s_values[0]`` and takes fixed RK4 steps of at
    most ``step``, re-orthonormalizing after each step. Curvature and
    torsion along the way come from ``frame_at``.
    """
    s_values = np.asarray(s_values, dtype=float)
    if s_values.size == 0:
        return []
    if np.any(np.diff(s_values) < 0):
        raise GeometryError("s_values must be non-decreasing")
    f0 = frame_at(curve, s_values[0])
    # fixed step sequence, so all RK4 stage coefficients are evaluated in one batch
    starts, hs = [], []
    ends = []
    s = float(s_values[0])
    for target in s_values[1:]:
        n_steps = max(1, int(math.ceil((target - s) / step - 1e-12)))
        h = (target - s) / n_steps
        starts.extend(s + h * np.arange(n_steps))
        hs.extend([h] * n_steps)
        ends.append(len(starts))
        s = float(target)
    starts, hs = np.asarray(starts), np.asarray(hs)
    kap, tau = curvature_torsion(curve, np.concatenate([starts, starts + hs / 2, starts + hs]))
    m = starts.size
    K = np.zeros((3, m, 3, 3))
    K[:, :, 0, 1], K[:, :, 1, 0] = kap.reshape(3, m), -kap.reshape(3, m)
    K[:, :, 1, 2], K[:, :, 2, 1] = tau.reshape(3, m), -tau.reshape(3, m)
    K0, Km, K1 = K
    # the Frenet system is linear, so each RK4 step is a fixed 3x3 propagator
    I = np.eye(3)
    h = hs[:, None, None]
    A2 = Km @ (I + h / 2 * K0)
    A3 = Km @ (I + h / 2 * A2)
    A4 = K1 @ (I + h * A3)
    steps = I + h / 6 * (K0 + 2 * A2 + 2 * A3 + A4)
    Y = f0.triad()
    out = [f0]
    j = 0
    for idx, target in zip(ends, s_values[1:]):
        while j < idx:
            Y = _gram_schmidt(steps[j] @ Y)
            j += 1
        fr = frame_at(curve, float(target))
        out.append(FrameSample(float(target), fr.position, Y[0].copy(), Y[1].copy(), Y[2].copy(), fr.kappa, fr.tau))
    return out


# --------------------------------------------------------------------------
# serialization


def curve_to_dict(curve: CurveSpec) -> dict:
    d = {k: (float(v) if isinstance(v, (int, float)) else v) for k, v in asdict(curve).items()}
    if isinstance(curve, Parametric):
        d["t_range"] = [float(v) for v in curve.t_range]
    d["kind"] = type(curve).__name__.lower()
    return d


def curve_from_dict(d: dict) -> CurveSpec:
    d = dict(d)
    kind = d.pop("kind").lower()
    cls = {"line": Line, "circle": Circle, "helix": Helix, "parametric": Parametric}.get(kind)
    if cls is None:
        raise GeometryError(f"unknown curve kind {kind!r}")
    if cls is Parametric and "t_range" in d:
        d["t_range"] = tuple(d["t_range"])
    return cls(**d)


def curve_hash(curve: CurveSpec) -> str:
    blob = json.dumps(curve_to_dict(curve), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def frames_to_csv(frames: Sequence[FrameSample]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FRAME_CSV_HEADER)
    for fr in frames:
        w.writerow([format(float(v), ".17g") for v in fr.row()])
    return buf.getvalue()
