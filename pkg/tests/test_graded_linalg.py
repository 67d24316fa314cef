import itertools

import numpy as np
import pytest

from defectlab.fields import LightConeGrid
from defectlab.graded_linalg import (GradedMatrix, GradingError, check_osp_relations, graded_bracket,
                                     osp_generators, sl2_generators, zero_curvature_residual)
from defectlab.grassmann import GrassmannContext, random_element
from defectlab.liouville import lax_zero_curvature, make_exact_solution
from defectlab.reports import fit_slope


def dense(M):
    return np.array([[complex(e) for e in row] for row in M.entries])


def test_generator_matrices():
    g = osp_generators()
    assert np.array_equal(dense(g["H"]), np.diag([1, -1, 0]))
    fp = np.zeros((3, 3))
    fp[0, 2] = fp[2, 1] = 1
    assert np.array_equal(dense(g["F+"]), fp)
    assert np.array_equal(dense(g["E-"]), dense(g["E+"]).T)
    assert g["F+"].parity() == 1 and g["H"].parity() == 0


def test_brackets():
    g = osp_generators()
    assert np.array_equal(dense(graded_bracket(g["H"], g["E+"])), 2 * dense(g["E+"]))
    assert np.array_equal(dense(graded_bracket(g["F+"], g["F+"])), 2 * dense(g["E+"]))
    assert not dense(graded_bracket(g["H"], g["H"])).any()


def test_mixed_parity_bracket_rejected():
    g = osp_generators()
    with pytest.raises(GradingError):
        graded_bracket(g["H"] + g["F+"], g["H"])


def test_relations_exact():
    rep = check_osp_relations()
    assert rep.max_norm == 0
    assert rep.details["checked"] == 10


def test_perturbed_generator_detected():
    g = osp_generators()
    bad = [list(r) for r in g["F-"].entries]
    bad[1][2] += 0.1
    rep = check_osp_relations({**g, "F-": GradedMatrix(bad)})
    assert rep.max_norm > 0.05


def test_sl2_subset():
    rep = check_osp_relations(sl2_generators())
    assert rep.max_norm == 0 and rep.details["checked"] == 3


def _span(g, rng, parity):
    names = ("H", "E+", "E-") if parity == 0 else ("F+", "F-")
    acc = GradedMatrix.zeros()
    for n in names:
        acc = acc + float(rng.normal()) * g[n]
    return acc


def test_graded_antisymmetry_and_jacobi():
    g = osp_generators()
    rng = np.random.default_rng(1)
    for px, py, pz in itertools.product((0, 1), repeat=3):
        X, Y, Z = _span(g, rng, px), _span(g, rng, py), _span(g, rng, pz)
        s = (-1) ** (px * py)
        anti = graded_bracket(X, Y) + s * graded_bracket(Y, X)
        assert anti.max_abs() <= 1e-12
        lhs = graded_bracket(X, graded_bracket(Y, Z))
        rhs = graded_bracket(graded_bracket(X, Y), Z) + s * graded_bracket(Y, graded_bracket(X, Z))
        assert (lhs - rhs).max_abs() <= 1e-12


def test_product_associative_over_grassmann_entries():
    ctx = GrassmannContext(4)
    rng = np.random.default_rng(2)

    def rand():
        return GradedMatrix([[random_element(ctx, rng) for _ in range(3)] for _ in range(3)])
    A, B, C = rand(), rand(), rand()
    assert ((A @ B) @ C - A @ (B @ C)).max_abs() <= 1e-12


def test_zero_connection():
    Z = GradedMatrix.zeros(2)
    rep, _ = zero_curvature_residual(Z, Z)
    assert rep.max_norm == 0


def test_zero_curvature_exact_solution_analytic():
    grid = LightConeGrid.uniform((0.5, 1.0), (0.5, 1.0), 17)
    wall = make_exact_solution("static_wall", grid, 1.0)
    assert lax_zero_curvature(wall, 1.3, 1.0).max_norm < 1e-10


def test_zero_curvature_fd_slope():
    norms, hs = [], []
    for n in (33, 65, 129):
        grid = LightConeGrid.uniform((0.5, 1.0), (0.5, 1.0), n)
        wall = make_exact_solution("static_wall", grid, 1.0)
        norms.append(lax_zero_curvature(wall, 1.3, 1.0, mode="fd").max_norm)
        hs.append(0.5 / (n - 1))
    assert abs(fit_slope(hs, norms) - 2.0) <= 0.2
