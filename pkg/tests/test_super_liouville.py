import warnings

import numpy as np
import pytest
import sympy as sp

from defectlab.fields import ExactField, GField, LightConeGrid, SampledField, Z
from defectlab.graded_linalg import osp_generators
from defectlab.grassmann import ParityError
from defectlab.jets import derivative, value
from defectlab.reports import fit_slope
from defectlab.liouville import (DefectParams, backlund_integrate, conformal_defect_check, exact_backlund_pair,
                                 lax_connection, make_exact_solution, stress_tensor, type2_residual_fields)
from defectlab.super_liouville import (DefectDegrees, SuperFieldComponents, SuperState, SusyParams,
                                       assemble_superfield, charges, component_image, default_context,
                                       defect_condition_residual, exact_super_backlund_state, random_offshell_point,
                                       sD, sDbar, state_jets, super_backlund_fields, super_backlund_integrate,
                                       super_backlund_residual, super_bulk_residual, super_defect_matrix,
                                       super_kmatrix_check, super_lax, super_zero_curvature, superconformal_check,
                                       supercurrents, superspace_lax_residual, superspace_residual,
                                       superspace_residual_element, susy_invariance_check, susy_transform,
                                       theta_components)

MU, BETA = 1.3, 0.8 + 0.3j
PARAMS = DefectParams(mu=MU, beta=BETA, kappa=-1, b11=0.7, d11=1.2)
FF = sp.exp(Z) + Z / 3


@pytest.fixture(scope="module")
def ctx():
    return default_context()


@pytest.fixture(scope="module")
def grid():
    return LightConeGrid.uniform((-0.5, 0.5), (-0.5, 0.5), 7)


@pytest.fixture(scope="module")
def exact(grid):
    return exact_super_backlund_state(grid, PARAMS, a=0.9, F=FF)


def empty(ctx, grid):
    return GField(ctx, grid, {})


def const(ctx, grid, terms):
    return GField(ctx, grid, {m: SampledField(np.full(grid.shape, c, complex), grid) for m, c in terms.items()})


def boson_side(ctx, field):
    return SuperFieldComponents(GField.bosonic(ctx, field), empty(ctx, field.grid), empty(ctx, field.grid))


def fermion_free_state(ctx, pair):
    g = pair.phi1.grid
    return SuperState(boson_side(ctx, pair.phi1), boson_side(ctx, pair.phi2),
                      DefectDegrees(GField.bosonic(ctx, pair.lambda0), lambda1=empty(ctx, g), f1=empty(ctx, g)))


def body(x):
    return np.asarray(x.terms.get(0, 0.0))


# ---- containers

def test_parity_enforced(ctx, grid):
    even = const(ctx, grid, {0: 1.0})
    with pytest.raises(ParityError):
        SuperFieldComponents(even, even, empty(ctx, grid))
    with pytest.raises(ParityError):
        DefectDegrees(even, f1=even)


def test_default_context_has_six_generators(ctx):
    assert ctx.num_generators == 6
    assert set(ctx.generator_labels) >= {"theta", "thetabar", "eps", "epsbar"}


# ---- bulk

def test_bulk_fermion_free(ctx):
    g = LightConeGrid.uniform((0.5, 1.0), (0.5, 1.0), 9)
    wall = make_exact_solution("static_wall", g, MU)
    assert super_bulk_residual(boson_side(ctx, wall), MU).max_norm < 1e-10


def test_bulk_free_constant_fermion(ctx, grid):
    th = ctx.mask("theta")
    side = SuperFieldComponents(const(ctx, grid, {0: 0.0}), const(ctx, grid, {th: 1.0}), empty(ctx, grid))
    assert super_bulk_residual(side, 0.0).max_norm == 0


def test_bulk_exact_two_seed_state(exact):
    rep = super_bulk_residual((exact.side1, exact.side2), MU)
    assert rep.max_norm < 1e-10


def test_bulk_fd_converges():
    norms, hs = [], []
    for n in (65, 129, 257):
        g = LightConeGrid.uniform((-0.5, 0.5), (-0.5, 0.5), n)
        st = exact_super_backlund_state(g, PARAMS, a=0.9, F=FF)
        norms.append(super_bulk_residual(st.side1, MU, mode="fd").max_norm)
        hs.append(g.h_z)
    assert fit_slope(hs, norms) >= 1.8


# ---- superspace

def test_superspace_on_shell(exact):
    rep = superspace_residual(exact.side1, MU)
    assert rep.max_norm < 1e-10
    assert rep.details["expansion_mismatch"] < 1e-10


def test_superspace_trivial(ctx, grid):
    side = SuperFieldComponents(const(ctx, grid, {0: 0.0}), empty(ctx, grid), empty(ctx, grid),
                                const(ctx, grid, {0: 0.0}))
    assert superspace_residual(side, 0.0).max_norm == 0


def test_superderivatives_square_to_derivatives(ctx):
    rng = np.random.default_rng(4)
    Phi = assemble_superfield(*random_offshell_point(ctx, rng, size=5))
    assert (value(sD(sD(Phi))) - value(derivative(Phi, "z"))).max_abs() == 0
    assert (value(sDbar(sDbar(Phi))) - value(derivative(Phi, "zb"))).max_abs() == 0


def test_theta_expansion_matches_components_offshell(ctx):
    rng = np.random.default_rng(5)
    pt = random_offshell_point(ctx, rng, size=20)
    comps = theta_components(superspace_residual_element(*pt, MU))
    image = component_image(*pt, MU)
    for k in comps:
        assert (value(comps[k]) - value(image[k])).max_abs() <= 1e-12


def test_superspace_requires_theta(grid):
    from defectlab.grassmann import GrassmannContext
    c = GrassmannContext(2, ("s1", "s2"))
    side = SuperFieldComponents(const(c, grid, {0: 0.0}), empty(c, grid), empty(c, grid))
    with pytest.raises(ValueError):
        superspace_residual(side, MU)


# ---- Backlund system

def test_reduced_system_collapses_to_bosonic(ctx, grid):
    # φ2 and Λ0 from different deformation parameters, so every residual is nonzero
    p = exact_backlund_pair(grid, PARAMS, a=0.9, F=FF)
    q = exact_backlund_pair(grid, PARAMS, a=0.6, F=FF)
    off = type(p)(p.phi1, q.phi2, p.lambda0)
    sup = super_backlund_fields(state_jets(fermion_free_state(ctx, off)), PARAMS)
    bos = type2_residual_fields(off, PARAMS)
    pairs = {"d(phi+ - lambda0)": "tII1", "dbar lambda0": "tII2", "dbar phi-": "tII3", "d phi-": "tII4"}
    for s, b in pairs.items():
        assert np.array_equal(np.broadcast_to(body(value(sup[s])), grid.shape), bos[b])
    assert np.max(np.abs(bos["tII4"])) > 1e-2


def test_exact_state_full_and_reduced(exact):
    assert super_backlund_residual(exact, PARAMS, "reduced").max_norm < 1e-10
    assert super_backlund_residual(exact, PARAMS, "full").max_norm < 1e-10
    assert super_backlund_residual(exact, PARAMS, "full", "printed").max_norm > 1e-2


def test_b2_assigned_exactly(exact):
    g = exact.grid
    seed = tuple(f.values().map(lambda c: complex(np.asarray(c)[0, 0]))
                 for f in (exact.side2.phi, exact.defect.lambda0, exact.defect.f1))
    st = super_backlund_integrate(exact.side1, PARAMS, seed)
    P = st.side1.phi.values() + st.side2.phi.values()
    ref = 2 * np.sqrt(MU) * BETA * np.exp(0.5 * body(P - st.defect.lambda0.values()))
    assert np.array_equal(body(st.defect.b2.values()), ref)
    assert g.shape == st.grid.shape


def test_algebraic_residuals_at_zero_fields(ctx, grid):
    z = const(ctx, grid, {0: 0.0})
    side = SuperFieldComponents(z, empty(ctx, grid), empty(ctx, grid), z)
    d = DefectDegrees(z, empty(ctx, grid), empty(ctx, grid), z, z, empty(ctx, grid))
    rep = super_backlund_residual(SuperState(side, side, d), PARAMS, "full")
    per = rep.details["per_equation"]
    assert per["b2"] == pytest.approx(abs(2 * np.sqrt(MU) * BETA), rel=1e-14)
    assert per["b1"] == 0 and per["psi-"] == 0


def test_integrate_fermion_free_matches_bosonic(ctx):
    g = LightConeGrid.uniform((-0.5, 0.5), (-0.5, 0.5), 17)
    p = exact_backlund_pair(g, PARAMS, a=0.9, F=FF)
    seed = (complex(p.phi2.values()[0, 0]), complex(p.lambda0.values()[0, 0]))
    bos = backlund_integrate(p.phi1, PARAMS, seed)
    sup = super_backlund_integrate(boson_side(ctx, p.phi1), PARAMS, seed + (0.0,))
    assert set(sup.side2.phi.values().terms) == {0}
    assert np.array_equal(body(sup.side2.phi.values()), bos.phi2.values())
    assert np.array_equal(body(sup.defect.lambda0.values()), bos.lambda0.values())


def test_integrate_single_cell_returns_seed(ctx):
    g = LightConeGrid.uniform((0.0, 0.0), (0.0, 0.0), 1)
    p = exact_backlund_pair(LightConeGrid.uniform((-0.5, 0.5), (-0.5, 0.5), 3), PARAMS, a=0.9, F=FF)
    side = boson_side(ctx, p.phi1.on(g))
    st = super_backlund_integrate(side, PARAMS, (0.3, 0.1, 0.0))
    assert body(st.side2.phi.values()).ravel()[0] == 0.3
    assert body(st.defect.lambda0.values()).ravel()[0] == 0.1


def test_integrate_reproduces_exact_state():
    errs = []
    for n in (17, 33, 65):
        g = LightConeGrid.uniform((-0.5, 0.5), (-0.5, 0.5), n)
        ex = exact_super_backlund_state(g, PARAMS, a=0.9, F=FF)
        seed = tuple(f.values().map(lambda c: complex(np.asarray(c)[0, 0]))
                     for f in (ex.side2.phi, ex.defect.lambda0, ex.defect.f1))
        st = super_backlund_integrate(ex.side1, PARAMS, seed)
        errs.append((st.side2.phi.values() - ex.side2.phi.values()).max_abs())
    assert errs[0] / errs[1] > 3.2 and errs[1] / errs[2] > 3.2


# ---- defect conditions and supersymmetry

def test_defect_conditions_on_exact_state(exact):
    for form in ("with_lambda1", "reduced"):
        assert defect_condition_residual(exact, PARAMS, form).max_norm < 1e-10
        assert defect_condition_residual(exact, PARAMS, form, "printed").max_norm > 1e-2


def test_defect_conditions_equal_fields(ctx, grid):
    s1, s2 = ctx.mask("s1"), ctx.mask("s2")
    phi = const(ctx, grid, {0: 0.2})
    psi = const(ctx, grid, {s1: 0.5})
    side1 = SuperFieldComponents(phi, psi, const(ctx, grid, {s2: 0.4}))
    side2 = SuperFieldComponents(phi, psi, const(ctx, grid, {s2: -0.3}))
    d = DefectDegrees(const(ctx, grid, {0: 0.1}), lambda1=empty(ctx, grid), f1=empty(ctx, grid))
    per = defect_condition_residual(SuperState(side1, side2, d), PARAMS).details["per_equation"]
    assert per["psi-"] == 0
    assert per["psibar-"] == pytest.approx(0.7, rel=1e-14)


def test_susy_zero_parameters_identity(exact, ctx):
    J = state_jets(exact)
    T = susy_transform(J, SusyParams(ctx.zero(), ctx.zero()), PARAMS)
    for k in T.jets:
        assert (value(T[k]) - value(J[k])).max_abs() == 0


def test_susy_fermion_free_variation(ctx):
    g = LightConeGrid.uniform((-0.5, 0.5), (-0.5, 0.5), 5)
    p = exact_backlund_pair(g, PARAMS, a=0.9, F=FF)
    st = fermion_free_state(ctx, p)
    sp_ = SusyParams.from_context(ctx)
    T = susy_transform(st, sp_, PARAMS)
    e, eb = sp_.epsilon, sp_.epsilonbar
    phi = p.phi1.values()
    want = -e * p.phi1.deriv(1, 0) - 1j * MU * eb * np.exp(phi)
    assert (value(T["psi1"]) - want).max_abs() == 0


def test_susy_kappa_dichotomy(exact):
    rep = susy_invariance_check(exact, SusyParams.from_context(exact.ctx), PARAMS)
    per = rep.details["per_kappa"]
    assert per[-1.0] < 1e-8
    assert per[0.0] > 1e-2


def test_susy_free_limit(ctx, grid):
    free = DefectParams(mu=0.0, beta=BETA, kappa=-1)
    s1, s2 = ctx.mask("s1"), ctx.mask("s2")
    side = SuperFieldComponents(const(ctx, grid, {0: 0.3}), const(ctx, grid, {s1: 1.0}),
                                const(ctx, grid, {s2: 1.0}))
    d = DefectDegrees(const(ctx, grid, {0: 0.0}), lambda1=const(ctx, grid, {s1: 2.0}), f1=empty(ctx, grid))
    rep = susy_invariance_check(SuperState(side, side, d), SusyParams.from_context(ctx), free)
    assert rep.details["per_kappa"][-1.0] == 0 and rep.details["per_kappa"][0.0] == 0


# ---- charges

def _line(n, value_=0.0):
    return np.full(n, value_, complex)


def test_charges_vanish_for_zero_fields(ctx):
    n = 11
    zero = ctx.zero().map(lambda c: _line(n))
    side = {"phi": _line(n), "phi_x": _line(n), "phi_t": _line(n), "psi": zero, "psibar": zero}
    rep = charges(side, dict(side), DefectParams(mu=0.0, beta=BETA, kappa=-1), 0.1, f1=ctx.zero())
    for k in ("E", "P", "Q", "Qbar", "E_mod", "P_mod", "Q_mod", "Qbar_mod"):
        v = getattr(rep, k)
        assert (v.max_abs() if hasattr(v, "max_abs") else abs(v)) == 0


def test_charges_fermion_free_supercharges(ctx):
    n = 41
    x = np.linspace(-3, 0, n)
    h = x[1] - x[0]
    zero = ctx.zero().map(lambda c: _line(n))

    def side(xs):
        b = np.exp(-4 * (xs + 1.5) ** 2)
        return {"phi": b, "phi_x": -8 * (xs + 1.5) * b, "phi_t": 0 * b, "psi": zero, "psibar": zero}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = charges(side(x), side(-x[::-1]), PARAMS, h, lambda0=0.0, f1=ctx.zero())
    assert rep.Q.max_abs() == 0 and rep.Qbar.max_abs() == 0
    assert rep.Q_mod.max_abs() == 0 and rep.Qbar_mod.max_abs() == 0
    assert rep.E.max_abs() > 0


# ---- supercurrents and gluing

def test_supercurrents_fermion_free(ctx):
    g = LightConeGrid.uniform((0.5, 1.0), (0.5, 1.0), 7)
    wall = make_exact_solution("two_function", g, MU, FF, sp.exp(sp.Symbol("zb")))
    cur = supercurrents(boson_side(ctx, wall))
    st = stress_tensor(wall)
    assert np.array_equal(body(cur.T), st.T) and np.array_equal(body(cur.Tbar), st.Tbar)
    assert cur.J.max_abs() == 0 and cur.Jbar.max_abs() == 0


def test_supercurrents_constant_fields(ctx, grid):
    side = SuperFieldComponents(const(ctx, grid, {0: 0.4}), const(ctx, grid, {ctx.mask("s1"): 1.0}),
                                empty(ctx, grid))
    cur = supercurrents(side, mode="fd")
    assert cur.T.max_abs() <= 1e-12 and cur.J.max_abs() <= 1e-12


def test_supercurrents_conserved_on_shell(exact):
    assert supercurrents(exact.side1).conservation.max_norm < 1e-10


def test_superconformal_exact_state(exact):
    assert superconformal_check(exact).max_norm < 1e-10


def test_superconformal_fermion_free_matches_bosonic(ctx, grid):
    p = exact_backlund_pair(grid, PARAMS, a=0.9, F=FF)
    q = exact_backlund_pair(grid, PARAMS, a=0.6, F=FF)
    off = type(p)(p.phi1, q.phi2, p.lambda0)
    sup = superconformal_check(fermion_free_state(ctx, off)).details["per_equation"]
    bos = conformal_defect_check(off, PARAMS).details["per_equation"]
    assert sup["T"] == bos["cd1"] and sup["Tbar"] == bos["cd2"]
    assert sup["J"] == 0 and sup["Jbar"] == 0


def test_gluing_linear_in_perturbation(exact, ctx):
    g = exact.grid
    out = []
    for delta in (1e-3, 2e-3, 4e-3):
        phi2 = GField(ctx, g, {**exact.side2.phi.comps,
                               0: ExactField(exact.side2.phi.comps[0].expr + delta * sp.sin(Z), g)})
        s2 = SuperFieldComponents(phi2, exact.side2.psi, exact.side2.psibar, exact.side2.F)
        out.append(superconformal_check(SuperState(exact.side1, s2, exact.defect)).details["per_equation"]["T"])
    assert out[1] / out[0] == pytest.approx(2, rel=2e-2)
    assert out[2] / out[1] == pytest.approx(2, rel=2e-2)


# ---- Lax representation

def test_super_lax_fermion_free_block(ctx, grid):
    wall = exact_backlund_pair(grid, PARAMS, a=0.9, F=FF).phi1
    A, Ab = super_lax(boson_side(ctx, wall), 1.7, MU)
    a, ab = lax_connection(wall, 1.7, MU)
    for i in range(2):
        for j in range(2):
            for X, Y in ((A, a), (Ab, ab)):
                got, ref = X.entries[i][j], Y.entries[i][j]
                gv = body(value(got)) if hasattr(got, "terms") else np.asarray(got)
                rv = value(ref) if hasattr(ref, "dz") else np.asarray(ref)
                assert np.array_equal(np.broadcast_to(gv, grid.shape), np.broadcast_to(rv, grid.shape))
    for i in range(3):
        assert all(e == 0 or (hasattr(e, "terms") and not e.terms) for e in (A.entries[i][2], A.entries[2][i]))


def test_super_lax_trivial_fields(ctx, grid):
    z = const(ctx, grid, {0: 0.0})
    A, Ab = super_lax(SuperFieldComponents(z, empty(ctx, grid), empty(ctx, grid)), 1.0, 1.0)
    gens = osp_generators()

    def dense(M):
        return np.array([[complex(np.max(body(value(e)))) if hasattr(e, "terms") else complex(e) for e in row]
                         for row in M.entries])
    assert np.array_equal(dense(A), -dense(gens["E+"]))
    assert np.array_equal(dense(Ab), -dense(gens["E-"]))


def test_super_lax_rejects_zero_lambda(exact):
    with pytest.raises(ValueError):
        super_lax(exact.side1, 0.0, MU)


def test_super_zero_curvature_on_shell(exact):
    assert super_zero_curvature(exact.side1, 1.7, MU).max_norm < 1e-10
    assert super_zero_curvature(exact.side1, 1.7, MU, variant="printed").max_norm > 1e-2


def test_superspace_lax(exact, ctx):
    rep = superspace_lax_residual(exact.side1, 1.7, MU)
    assert rep.max_norm < 1e-10
    # off-shell: a wrong μ leaves a residual that is still exactly the Liouville one times H
    off = superspace_lax_residual(exact.side1, 1.7, 0.7)
    assert off.max_norm > 1e-2
    assert off.details["identity_mismatch"] < 1e-12


def test_superspace_lax_free(ctx, grid):
    side = SuperFieldComponents(const(ctx, grid, {0: 0.5}), const(ctx, grid, {ctx.mask("s1"): 1.0}),
                                empty(ctx, grid), const(ctx, grid, {0: 0.0}))
    assert superspace_lax_residual(side, 1.0, 0.0, mode="fd").max_norm == 0


# ---- defect matrix

def test_defect_matrix_trivial_fields(ctx, grid):
    z = const(ctx, grid, {0: 0.0})
    side = SuperFieldComponents(z, empty(ctx, grid), empty(ctx, grid))
    st = SuperState(side, side, DefectDegrees(z, f1=empty(ctx, grid)))
    K = super_defect_matrix(st, 1.0, DefectParams(mu=MU, beta=BETA, kappa=-1, b11=1.0, d11=1.0))

    def entry(i, j):
        e = value(K.entries[i][j])
        return complex(np.max(body(e))) if e.terms else 0.0
    bos = [[entry(i, j) for j in range(2)] for i in range(2)]
    assert bos == [[2, -2j * BETA ** 2], [0, 2]]
    assert entry(2, 2) == 2
    assert all(entry(i, 2) == 0 and entry(2, i) == 0 for i in range(2))


def test_defect_matrix_intertwines(exact):
    rep = super_kmatrix_check(exact, 1.7, PARAMS)
    assert rep.max_norm < 1e-10
    assert super_kmatrix_check(exact, 1.7, PARAMS, variant="printed").details["fermionic"] > 1e-2


def test_defect_matrix_rescale(exact):
    ref = super_kmatrix_check(exact, 1.7, PARAMS)
    scaled = super_kmatrix_check(exact, 1.7, PARAMS, scale=4.0)
    assert scaled.max_norm <= 4 * ref.max_norm + 1e-14


def test_defect_matrix_rejects_zero_lambda(exact):
    with pytest.raises(ValueError):
        super_defect_matrix(exact, 0.0, PARAMS)
