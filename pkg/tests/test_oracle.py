import json
import math

import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.special import jn_zeros

from geomq.geometry import Circle, Helix, Line, Parametric, PatchViolationError
from geomq.oracle import (
    DiskHardWall,
    Harmonic,
    OracleResult,
    ResourceLimitError,
    SquareHardWall,
    StagnationError,
    TubeDiscretization,
    assemble_apply,
    convergence_study,
    cross_section_from_dict,
    cross_section_to_dict,
    extract_gauge_shift,
    lowest_eigenpairs,
)
from geomq.oracle.study import extrapolate_eps2, fit_parabola, resolve_threads

P = 2 * math.pi
HELIX = Helix(3.0, 4.0)


def _ground(disc, k=1):
    return lowest_eigenpairs(assemble_apply(disc), k).values


def _order(e, exact):
    e = np.abs(np.asarray(e) - exact)
    return np.log2(e[:-1] / e[1:])


@pytest.mark.parametrize("cs, g", [(SquareHardWall(0.1), (7, 7)), (DiskHardWall(0.1), (6, 9)),
                                   (Harmonic.from_width(0.1), (8, 9))])
@pytest.mark.parametrize("scheme, n_s", [("spectral", 5), ("fd2", 6)])
def test_operator_is_hermitian(cs, g, scheme, n_s):
    op = assemble_apply(TubeDiscretization(HELIX, cs, n_s, *g, k=0.13, s_scheme=scheme))
    rng = np.random.default_rng(7)
    n = op.shape[0]
    H = op.assemble()
    for _ in range(20):
        x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        y = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        a, b = np.vdot(x, op @ y), np.vdot(op @ x, y)
        assert abs(a - b) <= 1e-12 * abs(a)
        assert np.abs(H @ x - op @ x).max() <= 1e-12 * np.abs(op @ x).max()


@pytest.mark.parametrize("cs, grids, exact, tol", [
    (DiskHardWall(0.2), [(8, 9), (16, 17), (32, 33)], jn_zeros(0, 1)[0] ** 2 / (2 * 0.04), 1e-3),
    (SquareHardWall(0.2), [(7, 7), (15, 15), (31, 31)], math.pi**2 / (4 * 0.04), 1e-3),
    (Harmonic(25.0), [(12, 9), (24, 17), (48, 33)], 25.0, 4e-3),
])
def test_straight_tube_transverse_convergence(cs, grids, exact, tol):
    e = [_ground(TubeDiscretization(Line(P), cs, 1, *g))[0] for g in grids]
    assert abs(e[-1] / exact - 1) < tol
    assert np.all(np.abs(_order(e, exact) - 2.0) < 0.15)


@pytest.mark.parametrize("cs, g", [(DiskHardWall(0.2), (8, 9)), (SquareHardWall(0.2), (7, 7))])
def test_straight_tube_factorizes_along_s(cs, g):
    k = 0.7
    perp = _ground(TubeDiscretization(Line(P), cs, 1, *g))[0]
    # spectral s grid with one node is exact for the k = 0 Fourier mode
    spectral = _ground(TubeDiscretization(Line(P), cs, 1, *g, k=k))[0]
    assert spectral - perp == pytest.approx(k * k / 2, abs=1e-10)
    # fd2: the lowest Bloch state at k = 0.7 is the n = -1 harmonic, E_s = (k - 1)^2 / 2
    es = [_ground(TubeDiscretization(Line(P), cs, n, *g, k=k, s_scheme="fd2"))[0] - perp for n in (8, 16, 32)]
    assert np.all(np.abs(_order(es, (k - 1) ** 2 / 2) - 2.0) < 0.1)


def test_straightened_flag_removes_geometry():
    d = TubeDiscretization(HELIX, DiskHardWall(0.1), 1, 8, 9)
    a = _ground(d.straightened(), 3)
    b = _ground(TubeDiscretization(Line(2 * math.pi * HELIX.L), DiskHardWall(0.1), 1, 8, 9), 3)
    assert np.abs(a - b).max() < 1e-9


def test_disk_angular_labels():
    op = assemble_apply(TubeDiscretization(Line(P), DiskHardWall(0.2), 1, 16, 17))
    res = lowest_eigenpairs(op, 3)
    psi = op.to_wavefunction(res.vectors[:, 1:3])
    L, w = op.angular_momentum(), op.angular_weight()
    G = psi.conj().T @ (w[:, None] * psi)
    M = psi.conj().T @ (w[:, None] * (L @ psi))
    vals = sla.eigh(0.5 * (M + M.conj().T), 0.5 * (G + G.conj().T), eigvals_only=True)
    assert vals == pytest.approx([-1.0, 1.0], abs=1e-9)
    assert assemble_apply(TubeDiscretization(Line(P), SquareHardWall(0.2), 1, 7, 7)).angular_momentum() is None


def test_lowest_eigenpairs_dirichlet_laplacian():
    n = 100
    A = sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]) * (n + 1) ** 2
    exact = 4 * (n + 1) ** 2 * np.sin(np.arange(1, 6) * math.pi / (2 * (n + 1))) ** 2
    dense = sla.eigh(A.toarray(), eigvals_only=True)[:5]
    assert np.abs(dense - exact).max() < 1e-10 * exact.max()
    for method in ("dense", "shift-invert", "auto"):
        r = lowest_eigenpairs(A, 5, method=method)
        assert np.abs(r.values - dense).max() < 1e-10 * dense.max()
        assert r.relative_residuals.max() < 1e-8
    r = lowest_eigenpairs(A, 3, method="lobpcg", tol=1e-10, maxiter=5000)
    assert np.abs(r.values - dense[:3]).max() < 1e-6 * dense.max()


def test_lowest_eigenpairs_identity_and_limits():
    r = lowest_eigenpairs(sp.identity(40, format="csr"), 4)
    assert np.array_equal(r.values, np.ones(4))
    with pytest.raises(ValueError):
        lowest_eigenpairs(sp.identity(40), 0)
    with pytest.raises(ValueError):
        lowest_eigenpairs(sp.identity(40), 33)
    with pytest.raises(ValueError):
        lowest_eigenpairs(sp.identity(40), 1, method="power")


def test_lobpcg_stagnation_reports_history():
    n = 400
    A = sp.diags(np.linspace(1.0, 1e6, n))
    with pytest.raises(StagnationError) as info:
        lowest_eigenpairs(A, 3, method="lobpcg", maxiter=2, tol=1e-14)
    assert len(info.value.ritz_history) >= 1


def test_eigenpairs_are_deterministic():
    op = assemble_apply(TubeDiscretization(HELIX, SquareHardWall(0.1), 3, 7, 7, k=0.1))
    a, b = lowest_eigenpairs(op, 3, seed=3), lowest_eigenpairs(op, 3, seed=3)
    assert np.array_equal(a.values, b.values) and np.array_equal(a.vectors, b.vectors)


def test_patch_and_resource_errors():
    with pytest.raises(PatchViolationError):
        assemble_apply(TubeDiscretization(Circle(1.0), DiskHardWall(0.95), 1, 8, 9))
    with pytest.raises(PatchViolationError):
        assemble_apply(TubeDiscretization(Circle(1.0), SquareHardWall(0.7), 1, 7, 7))
    with pytest.raises(ResourceLimitError) as info:
        assemble_apply(TubeDiscretization(Circle(1.0), DiskHardWall(0.1), 5, 30, 31, max_dof=1000))
    assert info.value.required["dof"] == 5 * 30 * 31


@pytest.mark.parametrize("kw", [dict(n_s=2), dict(n_2=10), dict(s_scheme="cheb"),
                                dict(cross_section=SquareHardWall(0.1), n_1=7, n_2=9),
                                dict(curve=Parametric("t", "t^2", "0", (0.0, 1.0)))])
def test_discretization_validation(kw):
    base = dict(curve=Circle(1.0), cross_section=DiskHardWall(0.1), n_s=1, n_1=8, n_2=9)
    base.update(kw)
    with pytest.raises(ValueError):
        TubeDiscretization(**base)


@pytest.mark.parametrize("cs", [SquareHardWall(0.1), DiskHardWall(0.2), Harmonic(10.0)])
def test_cross_section_round_trip(cs):
    assert cross_section_from_dict(cross_section_to_dict(cs)) == cs


def test_fit_helpers_recover_exact_data():
    k = np.linspace(-0.3, 0.3, 7)
    fit = fit_parabola(k, 0.5 * (k - 0.12) ** 2 - 0.03)
    assert fit["k0"] == pytest.approx(0.12, abs=1e-12)
    assert fit["offset"] == pytest.approx(-0.03, abs=1e-12)
    eps = np.array([0.2, 0.14, 0.1])
    y0, sd, d = extrapolate_eps2(eps, -0.125 + 0.7 * eps**2)
    assert (y0, d) == pytest.approx((-0.125, 0.7), abs=1e-12)
    assert sd < 1e-12


def test_thread_resolution(monkeypatch):
    monkeypatch.delenv("GEOMQ_THREADS", raising=False)
    assert resolve_threads(None) == 1
    assert resolve_threads(3) == 3
    monkeypatch.setenv("GEOMQ_THREADS", "2")
    assert resolve_threads(3) == 2


def test_straight_tube_has_no_gauge_shift():
    r = convergence_study(Line(P), "disk", [0.2, 0.14, 0.1], [-0.2, 0.0, 0.2], (1, 12, 17))
    g = extract_gauge_shift(r, 0)
    assert not g["inconclusive"]
    assert abs(g["k0"]) < 1e-12
    # a line has no curvature, so no coefficient is asserted
    assert r.fit["c_kappa"] is None
    assert r.rel_residual_max < 1e-8


def test_study_validation():
    with pytest.raises(ValueError):
        convergence_study(Line(P), "disk", [0.2, 0.1], [-0.2, 0.0, 0.2], (1, 8, 9))
    with pytest.raises(ValueError):
        convergence_study(Line(P), "disk", [0.1, 0.14, 0.2], [-0.2, 0.0, 0.2], (1, 8, 9))
    with pytest.raises(ValueError):
        convergence_study(Line(P), "disk", [0.2, 0.14, 0.1], [0.0, 0.2], (1, 8, 9))
    with pytest.raises(ValueError):
        convergence_study(Line(P), "hexagon", [0.2, 0.14, 0.1], [-0.2, 0.0, 0.2], (1, 8, 9))


def test_unresolved_branch_is_flagged():
    # the l = 2 shell is not among the two lowest states
    r = convergence_study(Line(P), "disk", [0.2, 0.14, 0.1], [-0.2, 0.0, 0.2], (1, 12, 17), branches=(2,), n_eig=2)
    g = extract_gauge_shift(r, 2)
    assert g["inconclusive"] and "branch_unresolved" in g["flags"]


def test_result_round_trip():
    r = convergence_study(Circle(1.0), "disk", [0.1, 0.07, 0.05], [-0.2, 0.0, 0.2], (1, 12, 17))
    text = r.to_json(sort_keys=True)
    back = OracleResult.from_dict(json.loads(text))
    assert back.to_json(sort_keys=True) == text
    assert back.branch(0).k0 == r.branch(0).k0
    with pytest.raises(KeyError):
        back.branch(5)
