import csv
import io
import math

import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.special import jn_zeros

from geomq.modes import (
    TORSION_MOMENT_COMBINATION,
    CircularMode,
    Disk,
    HardWallMode,
    SquareBox,
    SquareHarmonicMode,
    UnsupportedOrderError,
    angular_matrix_elements,
    expectation,
    moment,
    mode_table,
    mode_table_csv,
    radial_energy_oracle,
    radial_fd_energy,
)


def _gh_expectation(mode, op, n=40):
    """<chi| op chi> on a Gauss-Hermite product grid; ``op(chi_fn, q2, q3)``."""
    beta = mode.alpha if isinstance(mode, SquareHarmonicMode) else mode.beta
    x, w = np.polynomial.hermite.hermgauss(n)
    x = x / beta
    w = w / beta
    Q2, Q3 = np.meshgrid(x, x, indexing="ij")
    W = np.outer(w, w) * np.exp(beta * beta * (Q2**2 + Q3**2))
    chi = mode(Q2, Q3) if isinstance(mode, SquareHarmonicMode) else mode(np.hypot(Q2, Q3), np.arctan2(Q3, Q2))
    return np.sum(W * np.conj(chi) * op(Q2, Q3))


def _sym_square(beta):
    q2, q3 = sympy.symbols("q2 q3", real=True)
    chi = beta / sympy.sqrt(sympy.pi) * sympy.exp(-beta**2 * (q2**2 + q3**2) / 2)
    return q2, q3, chi


@pytest.mark.parametrize("l", range(0, 6))
@pytest.mark.parametrize("w", [0.5, 1.0, 3.0])
def test_circular_normalization(l, w):
    m = CircularMode(l, w)
    val, _ = quad(lambda r: abs(m(r, 0.0)) ** 2 * r, 0, 40 / m.beta, epsabs=1e-14, epsrel=1e-14)
    assert abs(2 * math.pi * val - 1) < 1e-10
    assert abs(moment(m, (0, 0, 0, 0)) - 1) < 1e-12


@pytest.mark.parametrize("l", range(0, 6))
def test_line_constant_differs_from_area_constant(l):
    m = CircularMode(l, 1.0)
    val, _ = quad(lambda r: (m.A_line / m.A) ** 2 * abs(m(r, 0.0)) ** 2, 0, 40, epsabs=1e-12, epsrel=1e-12, limit=200)
    assert val == pytest.approx(1.0, abs=1e-10)
    assert m.A_line != pytest.approx(m.A, rel=1e-6)


@pytest.mark.parametrize("l", [-3, -1, 0, 1, 2, 4])
def test_angular_momentum_expectations(l):
    L1, L2 = angular_matrix_elements(CircularMode(l, 2.0))
    assert L1 == pytest.approx(l, abs=1e-12)
    assert L2 == pytest.approx(l * l, abs=1e-12)


def test_torsion_combination_analytic():
    beta = sympy.Rational(3, 2)
    q2, q3, chi = _sym_square(beta)
    expr = q2 * sympy.diff(chi, q2) + q3 * sympy.diff(chi, q3) + 2 * q2 * q3 * sympy.diff(chi, q2, q3)
    val = sympy.integrate(chi * expr, (q2, -sympy.oo, sympy.oo), (q3, -sympy.oo, sympy.oo))
    assert sympy.simplify(val) == sympy.Rational(-1, 2)


@pytest.mark.parametrize("w", [0.3, 1.0, 4.0])
def test_torsion_combination_quadrature(w):
    m = SquareHarmonicMode(w)
    a = m.alpha

    def op(q2, q3):
        chi = m(q2, q3)
        d2, d3 = -a * a * q2 * chi, -a * a * q3 * chi
        d23 = a**4 * q2 * q3 * chi
        return q2 * d2 + q3 * d3 + 2 * q2 * q3 * d23

    assert abs(_gh_expectation(m, op) + 0.5) < 1e-10
    assert abs(expectation(m, TORSION_MOMENT_COMBINATION) + 0.5) < 1e-12


@settings(max_examples=40, deadline=None)
@given(l=st.integers(-4, 4), w=st.floats(0.2, 5.0),
       desc=st.tuples(st.integers(0, 2), st.integers(0, 2), st.integers(0, 1), st.integers(0, 1)))
def test_moment_engine_against_quadrature(l, w, desc):
    m = CircularMode(l, w)
    a, b, c, d = desc
    beta = m.beta
    # derivatives of the closed form via sympy, evaluated on the Gauss-Hermite grid
    q2, q3 = sympy.symbols("q2 q3", real=True)
    sg = 1 if l >= 0 else -1
    chi = m.A * (beta * (q2 + sympy.I * sg * q3)) ** abs(l) * sympy.exp(-beta**2 * (q2**2 + q3**2) / 2)
    target = q2**a * q3**b * sympy.diff(chi, q2, c, q3, d) if (c or d) else q2**a * q3**b * chi
    fn = sympy.lambdify((q2, q3), target, "numpy")
    ref = _gh_expectation(m, lambda x, y: fn(x, y) * np.ones_like(x))
    assert abs(moment(m, desc) - ref) < 1e-10 * max(1.0, abs(ref))


def test_moment_order_limit():
    with pytest.raises(UnsupportedOrderError):
        moment(SquareHarmonicMode(1.0), (4, 0, 3, 0))
    with pytest.raises(ValueError):
        moment(SquareHarmonicMode(1.0), (-1, 0, 0, 0))


@pytest.mark.parametrize("l", range(0, 4))
@pytest.mark.parametrize("w", [0.5, 2.0])
def test_radial_oracle_energy(l, w):
    E = radial_energy_oracle(l, w)
    assert abs(E / ((l + 1) * w) - 1) < 1e-4
    assert CircularMode(l, w).energy_analytic == (l + 1) * w


def test_radial_grid_is_second_order():
    e = [radial_fd_energy(1, 1.0, 10.0, n) for n in (200, 400, 800)]
    order = math.log2((e[0] - e[1]) / (e[1] - e[2]))
    assert order == pytest.approx(2.0, abs=0.1)


def test_radial_oracle_rejects_small_grids():
    with pytest.raises(ValueError):
        radial_energy_oracle(0, 1.0, grid=(4.0, 400))
    with pytest.raises(ValueError):
        radial_energy_oracle(0, 1.0, grid=(10.0, 50))


@pytest.mark.parametrize("n, l", [(1, 0), (2, 0), (1, 1), (1, 3)])
def test_disk_mode_against_radial_fd(n, l):
    eps = 0.2
    exact = HardWallMode(Disk(eps), (n, l)).energy
    assert exact == pytest.approx(jn_zeros(l, n)[-1] ** 2 / (2 * eps * eps))
    if n == 1:
        # free radial problem with a wall at eps
        fd = [radial_fd_energy(l, 0.0, eps, N) for N in (400, 800)]
        assert (4 * fd[1] - fd[0]) / 3 == pytest.approx(exact, rel=1e-5)


@pytest.mark.parametrize("eps", [0.05, 0.2])
def test_square_box_energy(eps):
    assert HardWallMode(SquareBox(eps), (1, 1)).energy == pytest.approx(math.pi**2 / (4 * eps * eps))
    assert HardWallMode(SquareBox(eps), (1, 2)).energy == pytest.approx(5 * math.pi**2 / (8 * eps * eps))


def test_mode_table_contrasts_closed_form():
    rows = mode_table(range(4), 1.0)
    assert [r["E_oracle"] for r in rows] == pytest.approx([1.0, 2.0, 3.0, 4.0], rel=1e-4)
    assert [r["E_paper"] for r in rows] == pytest.approx([-0.5, 1.5, 7.5, 17.5], rel=1e-15)
    text = mode_table_csv(range(4), 1.0)
    parsed = list(csv.reader(io.StringIO(text)))
    assert parsed[0] == ["l", "w", "E_paper", "E_oracle", "A_norm"]
    assert float(parsed[2][3]) == rows[1]["E_oracle"]


@pytest.mark.parametrize("bad", [lambda: CircularMode(1.5, 1.0), lambda: CircularMode(1, -1.0),
                                 lambda: SquareHarmonicMode(0.0)])
def test_mode_validation(bad):
    with pytest.raises(ValueError):
        bad()
