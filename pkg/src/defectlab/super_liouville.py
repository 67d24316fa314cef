"""N=1 super-Liouville fields, superspace calculus and the type-II super defect.

Component fields are Grassmann-valued: each of φ, ψ, ψ̄, F is a
:class:`~defectlab.fields.GField` (one scalar field per basis monomial of the
active :class:`~defectlab.grassmann.GrassmannContext`).  Fermionic data are
linear combinations of a few seed generators, so the whole odd sector is
handled exactly.

Bulk equations::

    ∂∂̄φ = μ²e^{2φ} + iμe^{φ}ψ̄ψ,   ∂̄ψ = iμe^{φ}ψ̄,   ∂ψ̄ = -iμe^{φ}ψ

Superspace uses two reserved generators θ, θ̄ with D = ∂_θ + θ∂ and
D̄ = ∂_θ̄ + θ̄∂̄ (left derivatives), Φ = φ + iθ̄ψ̄ + iθψ + iθ̄θF and
DD̄Φ = -iμe^{Φ}.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import sympy as sp

from .fields import ExactField, GField, LightConeGrid, Z, ZB, d4, gregory_weights
from .graded_linalg import GradedMatrix, intertwining_residual, osp_generators, zero_curvature_residual
from .grassmann import GrassmannContext, GrassmannElement, ParityError, embed, gcosh, gexp, gsinh
from .jets import Jet, derivative, value
from .liouville import DefectParams, _check_lambda
from .reports import ChargeReport, ResidualReport, norm_of

THETA, THETABAR = "theta", "thetabar"
EPS, EPSBAR = "eps", "epsbar"


def default_context(num_seeds: int = 2, superspace: bool = True, susy: bool = True) -> GrassmannContext:
    """Seeds s1..sK, then ε, ε̄, then θ, θ̄ (N = 6 for the defaults)."""
    labels = [f"s{k + 1}" for k in range(num_seeds)]
    if susy:
        labels += [EPS, EPSBAR]
    if superspace:
        labels += [THETA, THETABAR]
    return GrassmannContext(len(labels), tuple(labels))


# ---------------------------------------------------------------------------
# field containers

def _mode(f: GField | None, mode: str | None):
    if f is None or mode is None:
        return f
    return f.in_mode(mode)


def _check_parity(name: str, f: GField | None, want: int):
    if f is None:
        return
    p = f.values().parity()
    if p is not None and not f.values().terms:
        return
    if p != want:
        raise ParityError(f"{name} must be {'odd' if want else 'even'} (found {p})")


@dataclass
class SuperFieldComponents:
    phi: GField
    psi: GField
    psibar: GField
    F: GField | None = None

    def __post_init__(self):
        _check_parity("phi", self.phi, 0)
        _check_parity("psi", self.psi, 1)
        _check_parity("psibar", self.psibar, 1)
        _check_parity("F", self.F, 0)
        for f in (self.psi, self.psibar) + ((self.F,) if self.F is not None else ()):
            self.phi.grid.check_same(f.grid)
            if f.ctx != self.phi.ctx:
                raise ValueError("components live in different Grassmann contexts")

    @property
    def ctx(self) -> GrassmannContext:
        return self.phi.ctx

    @property
    def grid(self) -> LightConeGrid:
        return self.phi.grid

    def in_mode(self, mode: str | None) -> "SuperFieldComponents":
        if mode is None:
            return self
        return SuperFieldComponents(*(_mode(f, mode) for f in (self.phi, self.psi, self.psibar, self.F)))

    def auxiliary(self, mu) -> GrassmannElement:
        """F if carried, else its on-shell value -μe^{φ}."""
        if self.F is not None:
            return self.F.values()
        return -mu * gexp(self.phi.values())

    def auxiliary_jet2(self, mu) -> GrassmannElement:
        if self.F is not None:
            return self.F.jet2()
        return -mu * gexp(self.phi.jet2())


@dataclass
class DefectDegrees:
    lambda0: GField
    lambda1: GField | None = None
    f1: GField | None = None
    b1: GField | None = None
    b2: GField | None = None
    f2: GField | None = None

    def __post_init__(self):
        _check_parity("lambda0", self.lambda0, 0)
        _check_parity("lambda1", self.lambda1, 1)
        _check_parity("f1", self.f1, 1)
        _check_parity("b1", self.b1, 0)
        _check_parity("b2", self.b2, 0)
        _check_parity("f2", self.f2, 1)

    def in_mode(self, mode: str | None) -> "DefectDegrees":
        if mode is None:
            return self
        return DefectDegrees(*(_mode(getattr(self, k), mode) for k in ("lambda0", "lambda1", "f1", "b1", "b2", "f2")))


@dataclass
class SuperState:
    side1: SuperFieldComponents
    side2: SuperFieldComponents
    defect: DefectDegrees
    info: dict = field(default_factory=dict)

    @property
    def ctx(self):
        return self.side1.ctx

    @property
    def grid(self):
        return self.side1.grid

    def in_mode(self, mode: str | None) -> "SuperState":
        if mode is None:
            return self
        return SuperState(self.side1.in_mode(mode), self.side2.in_mode(mode), self.defect.in_mode(mode),
                          dict(self.info))

    def exact_fields(self):
        out = [self.side1.phi, self.side1.psi, self.side1.psibar, self.side2.phi, self.side2.psi,
               self.side2.psibar, self.defect.lambda0]
        return [f for f in out if f is not None]


@dataclass(frozen=True)
class SusyParams:
    epsilon: GrassmannElement
    epsilonbar: GrassmannElement

    @classmethod
    def from_context(cls, ctx: GrassmannContext, scale: complex = 1.0, scale_bar: complex = 1.0):
        return cls(scale * ctx.generator(EPS), scale_bar * ctx.generator(EPSBAR))


def _is_exact(fields) -> bool:
    return all(all(isinstance(c, ExactField) for c in f.comps.values()) for f in fields if f is not None)


def _margin(fields, margin):
    if margin is not None:
        return margin
    return 0 if _is_exact(fields) else 2


def _report(name: str, res: dict, margin: int, mask=None, **extra) -> ResidualReport:
    per = {k: norm_of(v, margin, mask)[0] for k, v in res.items()}
    means = [norm_of(v, margin, mask)[1] for v in res.values()]
    return ResidualReport(name, max(per.values()) if per else 0.0, float(np.mean(means)) if means else 0.0,
                          details={"per_equation": per, **extra})


# ---------------------------------------------------------------------------
# bulk

def super_bulk_fields(c: SuperFieldComponents, mu) -> dict:
    phi, psi, psib = c.phi.values(), c.psi.values(), c.psibar.values()
    e = gexp(phi)
    return {
        "phi": c.phi.deriv(1, 1) - mu ** 2 * gexp(2 * phi) - 1j * mu * e * psib * psi,
        "psi": c.psi.deriv(0, 1) - 1j * mu * e * psib,
        "psibar": c.psibar.deriv(1, 0) + 1j * mu * e * psi,
    }


def super_bulk_residual(fields, mu, mode: str | None = None, margin: int | None = None) -> ResidualReport:
    """Bulk residuals, coefficient-wise over the Grassmann basis; accepts one side or a pair."""
    sides = fields if isinstance(fields, (tuple, list)) else (fields,)
    res = {}
    used = []
    for k, s in enumerate(sides, 1):
        s = s.in_mode(mode)
        used += [s.phi, s.psi, s.psibar]
        for name, r in super_bulk_fields(s, mu).items():
            res[f"{name}{k}" if len(sides) > 1 else name] = r
    return _report("super bulk", res, _margin(used, margin))


# ---------------------------------------------------------------------------
# superspace

def sD(X: GrassmannElement) -> GrassmannElement:
    """D = ∂_θ + θ∂ on a superfield with jet coefficients."""
    th = X.ctx.generator(THETA)
    return X.derivative(THETA) + th * derivative(X, "z")


def sDbar(X: GrassmannElement) -> GrassmannElement:
    """D̄ = ∂_θ̄ + θ̄∂̄."""
    tb = X.ctx.generator(THETABAR)
    return X.derivative(THETABAR) + tb * derivative(X, "zb")


def _require_superspace(ctx: GrassmannContext):
    labels = ctx.generator_labels
    if THETA not in labels or THETABAR not in labels:
        raise ValueError("the Grassmann context has no θ, θ̄ generators")


def assemble_superfield(phi, psi, psibar, F) -> GrassmannElement:
    """Φ = φ + iθ̄ψ̄ + iθψ + iθ̄θF from component elements (jets allowed)."""
    ctx = phi.ctx
    _require_superspace(ctx)
    th, tb = ctx.generator(THETA), ctx.generator(THETABAR)
    return phi + 1j * (tb * psibar) + 1j * (th * psi) + 1j * (tb * (th * F))


def theta_components(X: GrassmannElement) -> dict:
    """Split X = X0 + θXθ + θ̄Xθ̄ + θ̄θXθ̄θ with θ-free coefficients."""
    ctx = X.ctx
    tmask = ctx.mask(THETA, THETABAR)
    return {
        "1": X.project(forbid=tmask),
        "theta": X.derivative(THETA).project(forbid=tmask),
        "thetabar": X.derivative(THETABAR).project(forbid=tmask),
        "thetabar theta": X.derivative(THETABAR).derivative(THETA).project(forbid=tmask),
    }


def superspace_residual_element(phi, psi, psibar, F, mu) -> GrassmannElement:
    """DD̄Φ + iμe^{Φ} for jet-valued components (second-order jets for φ)."""
    Phi = assemble_superfield(phi, psi, psibar, F)
    return sD(sDbar(Phi)) + 1j * mu * gexp(Phi)


def component_image(phi, psi, psibar, F, mu) -> dict:
    """The θ-coefficients the superspace residual must equal, built from component residuals.

    With δF = F + μe^{φ} and the bulk residuals r_φ, r_ψ, r_ψ̄ of
    :func:`super_bulk_fields`::

        1     : iδF
        θ     : i r_ψ̄
        θ̄     : -i r_ψ
        θ̄θ    : -r_φ - μe^{φ}δF
    """
    p, s, sb, Fv = (value(x) for x in (phi, psi, psibar, F))
    e = gexp(p)
    dF = Fv + mu * e
    r_phi = derivative(derivative(phi, "z"), "zb") - mu ** 2 * gexp(2 * p) - 1j * mu * e * sb * s
    r_psi = derivative(psi, "zb") - 1j * mu * e * sb
    r_psib = derivative(psibar, "z") + 1j * mu * e * s
    return {"1": 1j * dF, "theta": 1j * r_psib, "thetabar": -1j * r_psi,
            "thetabar theta": -r_phi - mu * e * dF}


def superspace_residual(c: SuperFieldComponents, mu, mode: str | None = None,
                        margin: int | None = None) -> ResidualReport:
    """θ-expansion of DD̄Φ + iμe^{Φ}, cross-checked against the component residuals.

    ``details["expansion_mismatch"]`` is the largest coefficient-wise
    difference between each θ-coefficient and its component image.
    """
    _require_superspace(c.ctx)
    s = c.in_mode(mode)
    F = s.F.jet2() if s.F is not None else -mu * gexp(s.phi.jet2())
    args = (s.phi.jet2(), s.psi.jet2(), s.psibar.jet2(), F)
    comps = theta_components(superspace_residual_element(*args, mu))
    image = component_image(*args, mu)
    mg = _margin([s.phi, s.psi, s.psibar], margin)
    mismatch = max(norm_of(value(comps[k]) - value(image[k]), mg)[0] for k in comps)
    return _report("superspace Liouville", {k: value(v) for k, v in comps.items()}, mg,
                   expansion_mismatch=mismatch)


def random_offshell_point(ctx: GrassmannContext, rng: np.random.Generator, size: int = 1,
                          seeds: tuple[str, ...] = ("s1", "s2")):
    """Random second-order jets for (φ, ψ, ψ̄, F) at ``size`` points.

    φ and F are even (body plus a seed-pair term), ψ, ψ̄ odd (linear in the
    seeds).  Derivatives up to second order are independent random numbers,
    i.e. the state is off-shell.
    """
    def rnd():
        return rng.normal(size=size) + 1j * rng.normal(size=size)

    def jet2():
        c = {k: rnd() for k in ("00", "10", "01", "20", "11", "02")}
        return Jet(Jet(c["00"], c["10"], c["01"]), Jet(c["10"], c["20"], c["11"]), Jet(c["01"], c["11"], c["02"]))

    masks = [ctx.mask(s) for s in seeds]
    pair = ctx.mask(*seeds[:2]) if len(seeds) >= 2 else 0

    def even():
        terms = {0: jet2()}
        if pair:
            terms[pair] = jet2()
        return GrassmannElement(ctx, terms)

    def odd():
        return GrassmannElement(ctx, {m: jet2() for m in masks})

    return even(), odd(), odd(), even()


# ---------------------------------------------------------------------------
# exact Bäcklund states

def exact_super_backlund_state(grid: LightConeGrid, params: DefectParams, a: complex = 1.0, F=None, G=None,
                               ctx: GrassmannContext | None = None, seeds: tuple[str, str] = ("s1", "s2"),
                               amplitudes: tuple[complex, complex] = (1.0, 1.0)) -> SuperState:
    """Closed-form type-II super state at κ = -1.

    A bosonic exact pair (φ1 from (F, G), φ2 from (F + a, G),
    e^{Λ0} = -2iβ²F'/(μa)) is dressed by a finite supertranslation whose two
    odd parameters are the seed generators (scaled by ``amplitudes``).  The
    result solves the bulk equations and the reduced super-Bäcklund system
    exactly, which makes it an oracle independent of the defect equations.
    """
    ctx = default_context() if ctx is None else ctx
    F = sp.exp(Z) if F is None else sp.sympify(F)
    G = sp.exp(ZB) if G is None else sp.sympify(G)
    mu, beta = sp.sympify(params.mu), sp.sympify(params.beta)
    u1, u2 = (sp.sympify(x) for x in amplitudes)
    m1, m2 = ctx.mask(seeds[0]), ctx.mask(seeds[1])
    m12 = m1 | m2
    # s1*s2 carries sign +1 for this ordering when seeds[0] precedes seeds[1]
    sgn = 1 if ctx.index(seeds[0]) < ctx.index(seeds[1]) else -1
    w = sgn * u1 * u2

    def phi_of(FF):
        return sp.log(sp.diff(FF, Z) * sp.diff(G, ZB)) / 2 - sp.log(mu) - sp.log(FF + G)

    d = lambda e: sp.diff(e, Z)  # noqa: E731
    db = lambda e: sp.diff(e, ZB)  # noqa: E731
    sqm = sp.sqrt(mu)
    p1, p2 = phi_of(F), phi_of(F + a)
    L0 = sp.log(-2 * sp.I * beta ** 2 * sp.diff(F, Z) / (mu * a))
    b1 = -(2 * sqm / beta) * sp.exp(L0 / 2) * sp.sinh((p1 - p2) / 2)
    b2 = 2 * sqm * beta * sp.exp((p1 + p2 - L0) / 2)

    def gf(exprs):
        return GField.exact(ctx, grid, exprs)

    def side(q):
        return SuperFieldComponents(
            gf({0: q, m12: w * sp.I * mu * sp.exp(q)}),
            gf({m1: -sp.I * u1 * d(q), m2: u2 * mu * sp.exp(q)}),
            gf({m1: -u1 * mu * sp.exp(q), m2: -sp.I * u2 * db(q)}),
            gf({0: -mu * sp.exp(q), m12: -w * sp.I * mu ** 2 * sp.exp(2 * q)}),
        )

    defect = DefectDegrees(
        lambda0=gf({0: L0}),
        lambda1=gf({m1: -sp.I * u1 * d(L0)}),
        f1=gf({m1: u1 * b1, m2: u2 * b2}),
        b1=gf({0: b1, m12: w * d(b2)}),
        b2=gf({0: b2, m12: -w * db(b1)}),
        f2=gf({m1: u1 * d(b2), m2: -u2 * db(b1)}),
    )
    return SuperState(side(p1), side(p2), defect, {"kappa": -1, "exact": True, "seeds": seeds})


# ---------------------------------------------------------------------------
# jet states: first-order jets of every field, the common input of the
# Bäcklund, defect-condition and SUSY checks

@dataclass
class JetState:
    """Field values carried as first-order jets (keys such as ``phi1``, ``psibar2``, ``f1``).

    ``dphi1`` etc. hold jets of the first derivatives where they are known;
    they are needed to apply a supersymmetry transformation.
    """
    jets: dict
    grid: LightConeGrid | None = None
    exact: bool = False

    def __getitem__(self, k):
        return self.jets[k]

    def __contains__(self, k):
        return k in self.jets


def state_jets(state: SuperState, mode: str | None = None) -> JetState:
    st = state.in_mode(mode)
    J = {}
    for p, s in ((1, st.side1), (2, st.side2)):
        J[f"phi{p}"] = s.phi.jet()
        J[f"psi{p}"] = s.psi.jet()
        J[f"psibar{p}"] = s.psibar.jet()
        if s.F is not None:
            J[f"F{p}"] = s.F.jet()
        J[f"dphi{p}"] = s.phi.jet(1, 0)
        J[f"dbphi{p}"] = s.phi.jet(0, 1)
    d = st.defect
    J["lambda0"] = d.lambda0.jet()
    J["dlambda0"] = d.lambda0.jet(1, 0)
    for k in ("lambda1", "f1", "b1", "b2", "f2"):
        f = getattr(d, k)
        if f is not None:
            J[k] = f.jet()
    fields = st.exact_fields() + [d.f1, d.lambda1]
    return JetState(J, st.grid, _is_exact(fields))


class _Defect:
    """Shared combinations of the two sides at the defect."""

    def __init__(self, J: JetState, params: DefectParams):
        v = value
        self.mu, self.be = complex(params.mu), complex(params.beta)
        self.sm = np.sqrt(self.mu)
        self.P, self.M = v(J["phi1"] + J["phi2"]), v(J["phi1"] - J["phi2"])
        self.L = v(J["lambda0"])
        self.sP, self.sM = v(J["psi1"] + J["psi2"]), v(J["psi1"] - J["psi2"])
        self.sbP, self.sbM = v(J["psibar1"] + J["psibar2"]), v(J["psibar1"] - J["psibar2"])
        self.f = v(J["f1"])
        self.L1 = v(J["lambda1"]) if "lambda1" in J else None
        self.E = gexp(self.P - self.L)
        self.eh = gexp(0.5 * (self.P - self.L))
        self.eL, self.eL2 = gexp(self.L), gexp(0.5 * self.L)
        self.sh, self.ch = gsinh(0.5 * self.M), gcosh(0.5 * self.M)


def _dx(X):
    return 0.5 * (derivative(X, "z") + derivative(X, "zb"))


def _dt(X):
    return 0.5 * (derivative(X, "zb") - derivative(X, "z"))


def super_backlund_fields(J: JetState, params: DefectParams, form: str = "reduced",
                          variant: str = "corrected") -> dict:
    """Residual elements of the type-II super-Bäcklund system.

    ``form='reduced'`` uses φ±, ψ±, ψ̄±, Λ0, f1; ``form='full'`` adds the
    auxiliary F, Λ1, b1, b2, f2 relations.  Two printed relations of the full
    system do not hold on exact solutions: one form of F− carries a stray
    factor i and ∂ψ̄− has the prefactor i√μ/(4β) where -√μ/(4β) is needed.
    ``variant='printed'`` evaluates them verbatim.
    """
    if form not in ("reduced", "full"):
        raise ValueError("form is 'reduced' or 'full'")
    if variant not in ("corrected", "printed"):
        raise ValueError("variant is 'corrected' or 'printed'")
    q = _Defect(J, params)
    be, sm = q.be, q.sm
    dz = lambda X: derivative(X, "z")  # noqa: E731
    dzb = lambda X: derivative(X, "zb")  # noqa: E731
    dP, dM = dz(J["phi1"] + J["phi2"]), dz(J["phi1"] - J["phi2"])
    dbM, dL = dzb(J["phi1"] - J["phi2"]), dz(J["lambda0"])
    f, sh, ch = q.f, q.sh, q.ch
    res = {"dbar lambda0": dzb(J["lambda0"]),
           "dbar phi-": dbM - params.d * q.E + be * sm / 2 * q.eh * q.sbP * f,
           "psi-": q.sM - sm / be * q.eL2 * sh * f,
           "psibar-": q.sbM - sm * be * q.eh * f,
           "dbar f1": dzb(J["f1"]) - 1j * sm * be * q.eh * q.sbP}
    if form == "reduced":
        res.update({
            "d(phi+ - lambda0)": dP - dL + params.c * q.eL * gsinh(q.M) + sm / (2 * be) * q.eL2 * ch * q.sP * f,
            # 2 sinh²(φ-/2) written as cosh φ- - 1, the bosonic form at κ = -1
            "d phi-": dM + params.c * q.eL * (gcosh(q.M) - 1.0) + sm / (2 * be) * q.eL2 * sh * q.sP * f,
            "d f1": dz(J["f1"]) + 1j * sm / be * q.eL2 * sh * q.sP,
        })
        return res
    v = value
    L1, FP, FM = q.L1, v(J["F1"] + J["F2"]), v(J["F1"] - J["F2"])
    b1, b2, f2 = v(J["b1"]), v(J["b2"]), v(J["f2"])
    sP, sM, sbP, sbM, eL2, eh = q.sP, q.sM, q.sbP, q.sbM, q.eL2, q.eh
    fm2 = (1j if variant == "printed" else 1.0) * sm / be * eL2 * (b2 * sh + 0.5j * ch * sbM * f)
    pref = 1j / 4 if variant == "printed" else -1 / 4
    res.update({
        "d(phi+ - lambda0)": dP - dL + params.c * q.eL * gsinh(q.M) + sm / (2 * be) * eL2 * sh * sM * f
        + sm / (2 * be) * eL2 * ch * L1 * f,
        "psi+ - lambda1": sP - L1 - sm / be * eL2 * ch * f,
        "F+": FP + sm / be * eL2 * (b2 * ch + 0.5j * sh * sbM * f),
        "d psibar+": dz(J["psibar1"] + J["psibar2"]) - sm / (2 * be) * eL2 * (
            1j * sh * (b1 * sbM + 0.5j * (L1 * f) * sbM - b2 * sM - FM * f)
            - ch * (2 * f2 + 1j * L1 * b2 + 0.5 * sbM * sM * f)),
        "F- (1)": FM - sm * be * eh * (b1 + 0.5j * (sP - L1) * f),
        "F- (2)": FM + fm2,
        "dbar phi- (aux)": dbM - 1j * sm * be * eh * (b2 + 0.5j * sbP * f),
        "dbar psi-": dzb(J["psi1"] - J["psi2"]) - sm * be / 2 * eh * (
            2 * f2 - 1j * b1 * sbP + 1j * b2 * (sP - L1) + (1j * FP + 0.5 * sbP * (sP - L1)) * f),
        "b1": b1 + 2 * sm / be * eL2 * sh,
        "f2 (1)": f2 - 1j * sm / be * eL2 * ch * sbM,
        "f2 (2)": f2 - 1j * sm * be * eh * (sP - L1),
        "d f1": dz(J["f1"]) + 1j * sm / be * eL2 * (ch * sM + sh * L1),
        "d b2": dz(J["b2"]) - sm / be * eL2 * (1j * ch * FM + 0.5 * sh * sbM * sM + 0.5 * ch * sbM * L1),
        "b2": b2 - 2 * sm * be * eh,
        "dbar b1": dzb(J["b1"]) - sm * be * eh * (1j * FP + 0.5 * sbP * (sP - L1)),
        "d phi-": dM - 1j * sm / be * eL2 * (b1 * sh + 0.5j * sh * L1 * f + 0.5j * ch * sM * f),
        "d psibar-": dz(J["psibar1"] - J["psibar2"]) - pref * sm / be * eL2 * (
            ch * (L1 * f) * sbM + sh * (sbM * sM) * f + 2j * ch * FM * f - 2j * ch * b1 * sbM
            + 2j * ch * b2 * sM + 2j * sh * b2 * L1 + 4 * f2 * sh),
        "dbar lambda1": dzb(J["lambda1"]),
    })
    return res


def defect_condition_fields(J: JetState, params: DefectParams, form: str = "with_lambda1",
                            variant: str = "corrected") -> dict:
    """Residual elements of the defect conditions at the defect.

    ``with_lambda1`` keeps the multiplier Λ1 and the free parameter κ (taken
    from ``params``); ``reduced`` eliminates Λ1.  Two printed relations fail
    on exact solutions: in the κ-equation the cosh/sinh factors of the
    fermion bracket are swapped, and in the reduced ∂_t φ- equation
    sinh(φ-/2) should be squared.  ``variant='printed'`` keeps them as printed.
    """
    if form not in ("with_lambda1", "reduced"):
        raise ValueError("form is 'with_lambda1' or 'reduced'")
    if variant not in ("corrected", "printed"):
        raise ValueError("variant is 'corrected' or 'printed'")
    q = _Defect(J, params)
    m, be, sm, f = q.mu, q.be, q.sm, q.f
    sh, ch = q.sh, q.ch
    lhs1 = _dx(J["phi1"]) - _dt(J["phi2"] - J["lambda0"])
    lhs2 = _dx(J["phi2"]) - _dt(J["phi1"] - J["lambda0"])
    lhs3 = _dt(J["phi1"] - J["phi2"])
    common = 1j * m * be ** 2 * q.E
    shM = 1j * m / (2 * be ** 2) * q.eL * gsinh(q.M)
    bar = be * sm / 4 * q.eh * q.sbP * f
    res = {"psi-": q.sM - sm / be * q.eL2 * sh * f,
           "psibar-": q.sbM - sm * be * q.eh * f}
    if form == "with_lambda1":
        L1 = q.L1
        brk = sm / (4 * be) * q.eL2 * (sh * q.sM + ch * L1) * f
        brk3 = (sh * q.sM + ch * L1) if variant == "printed" else (ch * q.sM + sh * L1)
        res.update({
            "x1": lhs1 - (common - shM - bar - brk),
            "x2": lhs2 - (-common - shM + bar - brk),
            "t-": lhs3 - (common + 1j * m / (2 * be ** 2) * q.eL * (gcosh(q.M) + params.kappa) - bar
                          + sm / (4 * be) * q.eL2 * brk3 * f),
            "psi+": q.sP - L1 - sm / be * q.eL2 * ch * f,
            "t f1": _dt(J["f1"]) - (1j * sm / (2 * be) * q.eL2 * (ch * q.sM + sh * L1)
                                    + 1j * sm * be / 2 * q.eh * q.sbP),
        })
    else:
        brk = sm / (4 * be) * q.eL2 * ch * q.sP * f
        s2 = sh if variant == "printed" else sh * sh
        res.update({
            "x1": lhs1 - (common - shM - bar - brk),
            "x2": lhs2 - (-common - shM + bar - brk),
            "t-": lhs3 - (common + 1j * m / be ** 2 * q.eL * s2
                          - sm / 4 * (be * q.eh * q.sbP - 1 / be * q.eL2 * sh * q.sP) * f),
            "t f1": _dt(J["f1"]) - (1j * sm * be / 2 * q.eh * q.sbP + 1j * sm / (2 * be) * q.eL2 * sh * q.sP),
        })
    return res


def _as_jets(state, mode):
    return state if isinstance(state, JetState) else state_jets(state, mode)


def super_backlund_residual(state, params: DefectParams, form: str = "reduced", variant: str = "corrected",
                            mode: str | None = None, margin: int | None = None) -> ResidualReport:
    """Coefficient-wise residuals of the super-Bäcklund system over the whole grid."""
    J = _as_jets(state, mode)
    mg = margin if margin is not None else (0 if J.exact else 2)
    res = {k: value(r) for k, r in super_backlund_fields(J, params, form, variant).items()}
    return _report(f"super Backlund ({form}, {variant})", res, mg)


def defect_condition_residual(state, params: DefectParams, form: str = "with_lambda1",
                              variant: str = "corrected", mode: str | None = None, margin: int | None = None,
                              on_line: bool = False) -> ResidualReport:
    """Defect conditions; ``on_line`` restricts to the x = 0 nodes of the grid."""
    J = _as_jets(state, mode)
    mg = margin if margin is not None else (0 if J.exact else 2)
    mask = J.grid.defect_line() if on_line and J.grid is not None else None
    res = {k: value(r) for k, r in defect_condition_fields(J, params, form, variant).items()}
    return _report(f"defect conditions ({form}, {variant})", res, mg, mask)


# ---------------------------------------------------------------------------
# supersymmetry

def susy_transform(state, susy: SusyParams, params: DefectParams, mode: str | None = None) -> JetState:
    """First-order supersymmetry variation X → X + δX of the defect data.

    δφ_p = εψ_p + ε̄ψ̄_p, δψ_p = -ε∂φ_p - iμε̄e^{φ_p}, δψ̄_p = -ε̄∂̄φ_p + iμεe^{φ_p},
    δΛ0 = εΛ1, δΛ1 = -ε∂Λ0 and
    δf1 = (2iε√μ/β)e^{Λ0/2}sinh(φ-/2) - 2i√μβ ε̄ e^{(φ+-Λ0)/2}.
    The auxiliary fields F, b1, b2, f2 are not carried over.
    """
    J = _as_jets(state, mode)
    e, eb = susy.epsilon, susy.epsilonbar
    mu, be = complex(params.mu), complex(params.beta)
    sm = np.sqrt(mu)
    out = {}
    for p in (1, 2):
        ph, ps, psb = J[f"phi{p}"], J[f"psi{p}"], J[f"psibar{p}"]
        ex = gexp(ph)
        out[f"phi{p}"] = ph + e * ps + eb * psb
        out[f"psi{p}"] = ps - e * J[f"dphi{p}"] - 1j * mu * eb * ex
        out[f"psibar{p}"] = psb - eb * J[f"dbphi{p}"] + 1j * mu * e * ex
    L0, L1 = J["lambda0"], J["lambda1"]
    P, M = J["phi1"] + J["phi2"], J["phi1"] - J["phi2"]
    out["lambda0"] = L0 + e * L1
    out["lambda1"] = L1 - e * J["dlambda0"]
    out["f1"] = J["f1"] + (2j * sm / be) * e * gexp(0.5 * L0) * gsinh(0.5 * M) \
        - 2j * sm * be * eb * gexp(0.5 * (P - L0))
    return JetState(out, J.grid, J.exact)


def susy_commutator(side: SuperFieldComponents, mu, mode: str | None = None, margin: int | None = None
                    ) -> ResidualReport:
    """[δ1, δ2] on φ, ψ, ψ̄ minus the translation 2ε1ε2∂ + 2ε̄1ε̄2∂̄.

    Informational: the bilinear sector of the composed variations is
    compared; it matches on-shell (the mixed εε̄ terms are proportional to
    the fermion equations) and the residual is reported, not asserted.
    Four fresh generators are appended to the side's context.
    """
    s = side.in_mode(mode)
    fresh = ("eps_1", "epsbar_1", "eps_2", "epsbar_2")
    if set(fresh) & set(s.ctx.generator_labels):
        raise ValueError("commutator generators collide with the state's context")
    ctx = GrassmannContext(s.ctx.num_generators + 4, tuple(s.ctx.generator_labels) + fresh)
    e1, eb1, e2, eb2 = ctx.generators(*fresh)
    base = {k: embed(getattr(s, k).jet(), ctx) for k in ("phi", "psi", "psibar")}

    def T(f, e, eb):
        ex = gexp(f["phi"])
        return {"phi": f["phi"] + e * f["psi"] + eb * f["psibar"],
                "psi": f["psi"] - e * derivative(f["phi"], "z") - 1j * mu * eb * ex,
                "psibar": f["psibar"] - eb * derivative(f["phi"], "zb") + 1j * mu * e * ex}

    def bilinear(X):
        # exactly one parameter from each transformation
        m1, m2 = ctx.mask("eps_1", "epsbar_1"), ctx.mask("eps_2", "epsbar_2")
        return GrassmannElement(ctx, {m: c for m, c in X.terms.items()
                                      if bin(m & m1).count("1") == 1 and bin(m & m2).count("1") == 1})

    a, b = T(T(base, e1, eb1), e2, eb2), T(T(base, e2, eb2), e1, eb1)
    res = {k: value(bilinear(a[k] - b[k]) - 2 * e1 * e2 * derivative(base[k], "z")
                    - 2 * eb1 * eb2 * derivative(base[k], "zb")) for k in base}
    return _report("susy commutator", res, _margin((s.phi, s.psi, s.psibar), margin))


def epsilon_sector(X: GrassmannElement) -> GrassmannElement:
    """Terms linear in the supersymmetry parameters (exactly one of ε, ε̄)."""
    ctx = X.ctx
    me, mb = ctx.mask(EPS), ctx.mask(EPSBAR)
    return GrassmannElement(ctx, {m: c for m, c in X.terms.items() if bool(m & me) != bool(m & mb)})


def susy_invariance_check(state, susy: SusyParams, params: DefectParams, kappas=(-1.0, 0.0),
                          form: str = "with_lambda1", variant: str = "corrected", mode: str | None = None,
                          margin: int | None = None) -> ResidualReport:
    """ε-linear part of the defect conditions evaluated on transformed data, for each κ.

    ``max_norm`` is the residual at the first κ; the details list every κ and
    the ratio of the largest to the first.
    """
    J = _as_jets(state, mode)
    T = susy_transform(J, susy, params)
    mg = margin if margin is not None else (0 if J.exact else 2)
    per_kappa = {}
    per_eq = {}
    for k in kappas:
        pk = replace(params, kappa=k)
        res = {n: epsilon_sector(value(r)) for n, r in defect_condition_fields(T, pk, form, variant).items()}
        rep = _report("", res, mg)
        per_kappa[float(k)] = rep.max_norm
        per_eq[float(k)] = rep.details["per_equation"]
    first = per_kappa[float(kappas[0])]
    ratio = max(per_kappa.values()) / first if first > 0 else float("inf")
    return ResidualReport("SUSY invariance (epsilon sector)", first, first,
                          details={"per_kappa": per_kappa, "per_equation": per_eq, "ratio": ratio,
                                   "form": form})


# ---------------------------------------------------------------------------
# Lax representation

def _gen_times(c, M: GradedMatrix) -> GradedMatrix:
    return GradedMatrix([[c * e if e != 0 else 0 for e in row] for row in M.entries], M.grading)


def super_lax(side: SuperFieldComponents, lam: complex, mu, variant: str = "consistent",
              mode: str | None = None) -> tuple[GradedMatrix, GradedMatrix]:
    """Component osp(1,2) connections A, Ā with jet-valued entries.

    ``consistent``: A = -½∂φH - λμe^φE⁺ + √(λμ)ψe^{φ/2}F⁺,
    Ā = ½∂̄φH - (μ/λ)e^φE⁻ - i√(μ/λ)ψ̄e^{φ/2}F⁻.
    ``printed`` uses the fermionic phases i√(λμ) and √(μ/λ), which are not
    flat on exact two-seed solutions.
    """
    if variant not in ("consistent", "printed"):
        raise ValueError("variant is 'consistent' or 'printed'")
    _check_lambda(lam)
    s = side.in_mode(mode)
    g = osp_generators()
    p = s.phi.jet()
    e, eh = gexp(p), gexp(0.5 * p)
    cA, cB = (1.0, -1j) if variant == "consistent" else (1j, 1.0)
    sl, sr = np.sqrt(lam * mu), np.sqrt(mu / lam)
    A = (_gen_times(-0.5 * s.phi.jet(1, 0), g["H"]) + _gen_times(-lam * mu * e, g["E+"])
         + _gen_times(cA * sl * (s.psi.jet() * eh), g["F+"]))
    Ab = (_gen_times(0.5 * s.phi.jet(0, 1), g["H"]) + _gen_times(-(mu / lam) * e, g["E-"])
          + _gen_times(cB * sr * (s.psibar.jet() * eh), g["F-"]))
    return A, Ab


def super_zero_curvature(side: SuperFieldComponents, lam: complex, mu, variant: str = "consistent",
                         mode: str | None = None, margin: int | None = None) -> ResidualReport:
    s = side.in_mode(mode)
    A, Ab = super_lax(s, lam, mu, variant)
    mg = _margin([s.phi, s.psi, s.psibar], margin)
    rep, _ = zero_curvature_residual(A, Ab, mg)
    rep.equation_id = f"super zero curvature ({variant})"
    return rep


_ODD_GENERATORS = ("F+", "F-")


def _envelope_product(X, Y):
    """Product of generator-valued sums Σc_aT_a; an odd T_a passing an odd c_b gives a sign."""
    out = []
    for ca, a in X:
        for cb, b in Y:
            sgn = -1 if a in _ODD_GENERATORS and cb.parity() == 1 else 1
            out.append((sgn * (ca * cb), (a, b)))
    return out


def _envelope_matrix(terms, gens):
    out = [[0] * 3 for _ in range(3)]
    for c, key in terms:
        if isinstance(key, tuple):
            M = np.array(gens[key[0]].entries) @ np.array(gens[key[1]].entries)
        else:
            M = np.array(gens[key].entries)
        for i in range(3):
            for j in range(3):
                if M[i, j]:
                    out[i][j] = out[i][j] + int(M[i, j]) * c
    return out


def superspace_lax_residual(side: SuperFieldComponents, lam: complex, mu, mode: str | None = None,
                            margin: int | None = None) -> ResidualReport:
    """D̄𝒜 + D𝒜̄ - {𝒜̄, 𝒜} for 𝒜 = -½(DΦ)H + √(λμ)e^{Φ/2}F⁺, 𝒜̄ = ½(D̄Φ)H - i√(μ/λ)e^{Φ/2}F⁻.

    The odd generators F± anticommute with odd superspace coefficients.  The
    residual equals (DD̄Φ + iμe^Φ)·H identically, so it vanishes on-shell;
    ``details['identity_mismatch']`` measures that identity.
    """
    _check_lambda(lam)
    s = side.in_mode(mode)
    _require_superspace(s.ctx)
    Phi = assemble_superfield(s.phi.jet2(), s.psi.jet2(), s.psibar.jet2(), s.auxiliary_jet2(mu))
    gens = osp_generators()
    A = [(-0.5 * sD(Phi), "H"), (np.sqrt(lam * mu) * gexp(0.5 * Phi), "F+")]
    Ab = [(0.5 * sDbar(Phi), "H"), (-1j * np.sqrt(mu / lam) * gexp(0.5 * Phi), "F-")]
    dA = [(sDbar(c), n) for c, n in A]
    dAb = [(sD(c), n) for c, n in Ab]
    R = _envelope_matrix(dA + dAb + [(-c, k) for c, k in _envelope_product(Ab, A) + _envelope_product(A, Ab)],
                         gens)
    mg = _margin([s.phi, s.psi, s.psibar], margin)
    sle = value(sD(sDbar(Phi)) + 1j * mu * gexp(Phi))
    per, ident = {}, 0.0
    for i in range(3):
        for j in range(3):
            e = R[i][j]
            if isinstance(e, int):
                continue
            ev = value(e)
            per[f"{i}{j}"] = norm_of(ev, mg)[0]
            target = sle if (i, j) == (0, 0) else (-sle if (i, j) == (1, 1) else 0 * sle)
            ident = max(ident, norm_of(ev - target, mg)[0])
    rep = ResidualReport("superspace zero curvature", max(per.values()), float(np.mean(list(per.values()))),
                         details={"per_entry": per, "identity_mismatch": ident})
    return rep


_K_ODD = {"corrected": (1j, 1.0, -1.0, 1j), "printed": (-1.0, 1j, -1j, 1.0)}


def super_defect_matrix(state: SuperState, lam: complex, params: DefectParams, variant: str = "corrected",
                        mode: str | None = None) -> GradedMatrix:
    """The 3×3 super defect matrix 𝒦 (jet-valued), with b11, d11 from ``params``.

    The bosonic block is the type-II matrix restricted to κ = -1.  The odd
    entries are (0,2) c₁β b11 e^{(φ2-Λ0)/2}f1, (1,2) (c₂/β) d11 e^{(Λ0-φ1)/2}sinh(φ-/2)f1,
    (2,0) (c₃/β) d11 e^{(Λ0-φ2)/2}sinh(φ-/2)f1, (2,1) c₄β b11 e^{(φ1-Λ0)/2}f1 with
    (c₁..c₄) = (i, 1, -1, i) for ``corrected`` and (-1, i, -i, 1) for ``printed``.
    """
    if variant not in _K_ODD:
        raise ValueError("variant is 'corrected' or 'printed'")
    _check_lambda(lam)
    st = state.in_mode(mode)
    b11, d11, be = params.b11, params.d11, complex(params.beta)
    sl = np.sqrt(lam)
    j1, j2 = st.side1.phi.jet(), st.side2.phi.jet()
    jl, f = st.defect.lambda0.jet(), st.defect.f1.jet()
    pp, pm = j1 + j2, j1 - j2
    sh = gsinh(0.5 * pm)
    c1, c2, c3, c4 = _K_ODD[variant]
    return GradedMatrix([
        [b11 / sl * gexp(-0.5 * pm) + d11 * sl * gexp(0.5 * pm), -2j * be ** 2 * b11 * sl * gexp(0.5 * pp - jl),
         c1 * be * b11 * gexp(0.5 * (j2 - jl)) * f],
        [2j * d11 / (sl * be ** 2) * gexp(jl - 0.5 * pp) * sh * sh, b11 / sl * gexp(0.5 * pm) + d11 * sl * gexp(-0.5 * pm),
         c2 / be * d11 * gexp(0.5 * (jl - j1)) * sh * f],
        [c3 / be * d11 * gexp(0.5 * (jl - j2)) * sh * f, c4 * be * b11 * gexp(0.5 * (j1 - jl)) * f,
         (b11 / sl + d11 * sl) * gexp(0 * jl)],
    ])


def super_kmatrix_check(state: SuperState, lam: complex, params: DefectParams, variant: str = "corrected",
                        lax_variant: str = "consistent", mode: str | None = None,
                        margin: int | None = None, scale: complex = 1.0) -> ResidualReport:
    """Intertwining ∂𝒦 = A1𝒦 - 𝒦A2, ∂̄𝒦 = Ā1𝒦 - 𝒦Ā2, split into bosonic and fermionic entries."""
    st = state.in_mode(mode)
    K = super_defect_matrix(st, lam, params, variant)
    if scale != 1.0:
        K = scale * K
    mu = params.mu
    A1, Ab1 = super_lax(st.side1, lam, mu, lax_variant)
    A2, Ab2 = super_lax(st.side2, lam, mu, lax_variant)
    mg = _margin(st.exact_fields() + [st.defect.f1], margin)
    rep, R, Rb = intertwining_residual(K, A1, A2, Ab1, Ab2, mg)
    grade = K.grading
    split = {"bosonic": 0.0, "fermionic": 0.0}
    for M in (R, Rb):
        for i in range(3):
            for j in range(3):
                e = M.entries[i][j]
                if isinstance(e, (int, float)) and e == 0:
                    continue
                key = "fermionic" if grade[i] != grade[j] else "bosonic"
                split[key] = max(split[key], norm_of(value(e), mg)[0])
    rep.equation_id = f"super K intertwining ({variant})"
    rep.details.update(split)
    return rep


# ---------------------------------------------------------------------------
# integration of the reduced super-Bäcklund system

def _flow_z(params: DefectParams, p1, dp1, s1, y):
    """∂ of (φ2, Λ0, f1) from the reduced system (κ = -1).

    The bosonic terms are evaluated in the same order as the bosonic
    marcher, so fermion-free data reproduce it bit for bit.
    """
    mu, be = complex(params.mu), complex(params.beta)
    sm = np.sqrt(mu)
    c = params.c
    phi2, L, f = y
    M = p1 - phi2
    eL, eL2 = gexp(L), gexp(0.5 * L)
    sh, ch = gsinh(0.5 * M), gcosh(0.5 * M)
    sP = 2 * s1 - (sm / be) * eL2 * sh * f
    dphi2 = dp1 + c * eL * (gcosh(M) - 1.0) + sm / (2 * be) * eL2 * sh * sP * f
    dL = dp1 + dphi2 + c * eL * gsinh(M) + sm / (2 * be) * eL2 * ch * sP * f
    return (dphi2, dL, -(1j * sm / be) * eL2 * sh * sP)


def _flow_zb(params: DefectParams, p1, dbp1, sb1, y):
    mu, be = complex(params.mu), complex(params.beta)
    sm = np.sqrt(mu)
    phi2, L, f = y
    eh = gexp(0.5 * (p1 + phi2 - L))
    sbP = 2 * sb1 - sm * be * eh * f
    dphi2 = dbp1 - params.d * gexp(p1 + phi2 - L) + be * sm / 2 * eh * sbP * f
    return (dphi2, 0.0 * L, 1j * sm * be * eh * sbP)


def _complete_state(side1: SuperFieldComponents, phi2, lam0, f1, params: DefectParams, info: dict) -> SuperState:
    """Rebuild ψ2, ψ̄2, F2, Λ1, b1, b2, f2 algebraically from (φ2, Λ0, f1) values."""
    grid = side1.grid
    mu, be = complex(params.mu), complex(params.beta)
    sm = np.sqrt(mu)
    p1, s1, sb1 = side1.phi.values(), side1.psi.values(), side1.psibar.values()
    M, P = p1 - phi2, p1 + phi2
    eL2, eh = gexp(0.5 * lam0), gexp(0.5 * (P - lam0))
    sh, ch = gsinh(0.5 * M), gcosh(0.5 * M)
    s2 = s1 - (sm / be) * eL2 * sh * f1
    sb2 = sb1 - sm * be * eh * f1
    gf = lambda e: GField.from_element(e, grid)  # noqa: E731
    side2 = SuperFieldComponents(gf(phi2), gf(s2), gf(sb2), gf(-mu * gexp(phi2)))
    F1 = side1.F if side1.F is not None else gf(side1.auxiliary(mu))
    side1 = SuperFieldComponents(side1.phi, side1.psi, side1.psibar, F1)
    defect = DefectDegrees(
        lambda0=gf(lam0),
        lambda1=gf(s1 + s2 - (sm / be) * eL2 * ch * f1),
        f1=gf(f1),
        b1=gf(-(2 * sm / be) * eL2 * sh),
        b2=gf(2 * sm * be * eh),
        f2=gf(1j * (sm / be) * eL2 * ch * (sb1 - sb2)),
    )
    return SuperState(side1, side2, defect, info)


def super_backlund_integrate(side1: SuperFieldComponents, params: DefectParams, seed=None,
                             bound: float | None = None, check_tol: float = 1e-8) -> SuperState:
    """March the reduced super-Bäcklund system (κ = -1) from the corner with Heun's rule.

    ``seed = (φ2, Λ0, f1)`` are corner values (numbers or Grassmann
    elements; f1 odd).  Side 1 must solve the super-Liouville equations.
    Marching goes along z̄ first, then z, as in the bosonic integrator; with
    all odd data zero the bosonic marcher at κ = -1 is reproduced.
    """
    from .liouville import DEFAULT_BLOWUP, SolutionError, _check_growth, _growth_terms, _heun

    bound = DEFAULT_BLOWUP if bound is None else bound
    ctx, grid = side1.ctx, side1.grid
    info = {"kind": "super type2", "kappa": -1.0}
    if _is_exact([side1.phi, side1.psi, side1.psibar]):
        bulk = super_bulk_residual(side1, params.mu).max_norm
        info["side1_bulk_residual"] = bulk
        if bulk > check_tol:
            raise SolutionError(f"side 1 does not solve the bulk equations (residual {bulk:.3e})")
    seed = (0.0, 0.0, 0.0) if seed is None else seed
    sv = [s if isinstance(s, GrassmannElement) else ctx.scalar(complex(s)) for s in seed]
    sv[2] = sv[2] if isinstance(seed[2], GrassmannElement) else ctx.zero()
    if sv[2].terms and sv[2].parity() != 1:
        raise ParityError("f1 seed must be odd")
    n, m = grid.shape
    p1, s1, sb1 = side1.phi.values(), side1.psi.values(), side1.psibar.values()
    dp1 = side1.phi.deriv(1, 0) if n > 1 else 0 * p1
    dbp1 = side1.phi.deriv(0, 1) if m > 1 else 0 * p1
    hz, hb = grid.h_z, grid.h_zbar
    out = [{}, {}, {}]

    def store(idx, y):
        for k, el in enumerate(y):
            for mask, c in el.terms.items():
                arr = out[k].setdefault(mask, np.zeros(grid.shape, complex))
                arr[idx] = c

    def at(el, idx):
        return el.map(lambda c: np.asarray(c)[idx])

    def body(el):
        return el.terms.get(0, 0.0)

    y = tuple(s.map(lambda c: np.array([c], complex)) for s in sv)
    store((0, 0), tuple(s.map(lambda c: c) for s in sv))
    with np.errstate(over="ignore", invalid="ignore"):
        if m > 1:
            fb = lambda j, yy: _flow_zb(params, at(p1, (0, [j])), at(dbp1, (0, [j])), at(sb1, (0, [j])), yy)  # noqa: E731
            for j in range(m - 1):
                y = _heun(fb, y, hb, j, j + 1)
                _check_growth(bound, grid.z[0], grid.zb[j + 1],
                              _growth_terms(body(at(p1, (0, j + 1))), (body(y[0]), body(y[1]))))
                store((0, j + 1), tuple(at(e, 0) for e in y))
        y = tuple(GrassmannElement(ctx, {mk: a[0].copy() for mk, a in out[k].items()}) for k in range(3))
        fz = lambda i, yy: _flow_z(params, at(p1, i), at(dp1, i), at(s1, i), yy)  # noqa: E731
        for i in range(n - 1):
            y = _heun(fz, y, hz, i, i + 1)
            _check_growth(bound, grid.z[i + 1], grid.zb, _growth_terms(body(at(p1, i + 1)), (body(y[0]), body(y[1]))))
            store(i + 1, y)
    vals = [GrassmannElement(ctx, out[k]) for k in range(3)]
    info["seed"] = sv
    return _complete_state(side1, *vals, params, info)


def _merge_jet(v: GrassmannElement, dz: GrassmannElement, dzb: GrassmannElement) -> GrassmannElement:
    masks = set(v.terms) | set(dz.terms) | set(dzb.terms)
    zero = 0.0 * next(iter(v.terms.values())) if v.terms else 0.0
    return GrassmannElement(v.ctx, {mk: Jet(v.terms.get(mk, zero), dz.terms.get(mk, zero), dzb.terms.get(mk, zero))
                                    for mk in masks})


def flow_jets(state: SuperState, params: DefectParams) -> JetState:
    """Jets whose z and z̄ derivatives of φ2, Λ0, f1 come from the reduced super-Bäcklund equations.

    Side 1 must carry closed-form fields.  Second derivatives follow by the
    chain rule through the same equations, so a supersymmetry variation can
    be applied without finite differences; residuals then measure algebraic
    consistency at the sampled values of an integrated state.
    """
    s1 = state.side1
    if not _is_exact([s1.phi, s1.psi, s1.psibar]):
        raise ValueError("flow jets need a closed-form side 1")
    mu, be = complex(params.mu), complex(params.beta)
    sm = np.sqrt(mu)
    p1v, dp1v, dbp1v = s1.phi.values(), s1.phi.deriv(1, 0), s1.phi.deriv(0, 1)
    u = (state.side2.phi.values(), state.defect.lambda0.values(), state.defect.f1.values())
    dz = _flow_z(params, p1v, dp1v, s1.psi.values(), u)
    dzb = _flow_zb(params, p1v, dbp1v, s1.psibar.values(), u)
    uj = [_merge_jet(a, b, c) for a, b, c in zip(u, dz, dzb)]
    p1, dp1, dbp1 = s1.phi.jet(), s1.phi.jet(1, 0), s1.phi.jet(0, 1)
    ps1, psb1 = s1.psi.jet(), s1.psibar.jet()
    dzj = _flow_z(params, p1, dp1, ps1, uj)
    dzbj = _flow_zb(params, p1, dbp1, psb1, uj)
    phi2, L, f = uj
    M, P = p1 - phi2, p1 + phi2
    eL2, eh = gexp(0.5 * L), gexp(0.5 * (P - L))
    sh, ch = gsinh(0.5 * M), gcosh(0.5 * M)
    ps2 = ps1 - (sm / be) * eL2 * sh * f
    psb2 = psb1 - sm * be * eh * f
    J = {"phi1": p1, "phi2": phi2, "psi1": ps1, "psi2": ps2, "psibar1": psb1, "psibar2": psb2,
         "F1": -mu * gexp(p1), "F2": -mu * gexp(phi2), "lambda0": L, "f1": f,
         "lambda1": ps1 + ps2 - (sm / be) * eL2 * ch * f,
         "b1": -(2 * sm / be) * eL2 * sh, "b2": 2 * sm * be * eh,
         "f2": 1j * (sm / be) * eL2 * ch * (psb1 - psb2),
         "dphi1": dp1, "dbphi1": dbp1, "dphi2": dzj[0], "dbphi2": dzbj[0], "dlambda0": dzj[1]}
    return JetState(J, state.grid, True)


# ---------------------------------------------------------------------------
# supercurrents and superconformal gluing

@dataclass
class Supercurrents:
    T: GrassmannElement
    Tbar: GrassmannElement
    J: GrassmannElement
    Jbar: GrassmannElement
    conservation: ResidualReport


def _current_jets(s: SuperFieldComponents):
    d1, d2 = s.phi.jet(1, 0), s.phi.jet(2, 0)
    b1, b2 = s.phi.jet(0, 1), s.phi.jet(0, 2)
    ps, psb = s.psi.jet(), s.psibar.jet()
    dps, dbpsb = s.psi.jet(1, 0), s.psibar.jet(0, 1)
    T = d1 * d1 - d2 + ps * dps
    Tb = b1 * b1 - b2 + psb * dbpsb
    J = ps * d1 - dps
    Jb = psb * b1 - dbpsb
    return T, Tb, J, Jb


def supercurrents(side: SuperFieldComponents, mode: str | None = None, margin: int | None = None) -> Supercurrents:
    """T = (∂φ)² - ∂²φ + ψ∂ψ, J = ψ∂φ - ∂ψ and their barred partners, with ∂̄T, ∂T̄, ∂̄J, ∂J̄."""
    s = side.in_mode(mode)
    T, Tb, J, Jb = _current_jets(s)
    res = {"dbar T": derivative(T, "zb"), "d Tbar": derivative(Tb, "z"),
           "dbar J": derivative(J, "zb"), "d Jbar": derivative(Jb, "z")}
    mg = _margin([s.phi, s.psi, s.psibar], margin)
    rep = _report("supercurrent conservation", res, mg)
    return Supercurrents(value(T), value(Tb), value(J), value(Jb), rep)


def superconformal_check(state: SuperState, mode: str | None = None, margin: int | None = None,
                         on_line: bool = False) -> ResidualReport:
    """Gluing |T1 - T2|, |T̄1 - T̄2|, |J1 - J2|, |J̄1 - J̄2| (whole grid, or x = 0 with ``on_line``)."""
    st = state.in_mode(mode)
    c1, c2 = supercurrents(st.side1, margin=margin), supercurrents(st.side2, margin=margin)
    res = {"T": c1.T - c2.T, "Tbar": c1.Tbar - c2.Tbar, "J": c1.J - c2.J, "Jbar": c1.Jbar - c2.Jbar}
    mg = _margin(st.exact_fields(), margin)
    mask = st.grid.defect_line() if on_line else None
    return _report("superconformal gluing", res, mg, mask)


# ---------------------------------------------------------------------------
# conserved charges with the defect

def charge_densities(phi, phi_x, phi_t, mu, psi=None, psibar=None, psi_x=None, psibar_x=None) -> dict:
    """Bulk densities of E, P (and Q, Q̄ when fermions are given) on one half-line."""
    e2 = gexp(2 * phi)
    out = {"E": phi_x * phi_x + phi_t * phi_t + mu ** 2 * e2, "P": 2 * phi_t * phi_x}
    if psi is not None:
        M = 1j * mu * gexp(phi)
        out["E"] = out["E"] + psibar * psibar_x + psi * psi_x + 2 * M * psibar * psi
        out["P"] = out["P"] + psibar * psibar_x - psi * psi_x
        out["Q"] = -(psi * (phi_x - phi_t) + M * psibar)
        out["Qbar"] = psibar * (phi_x + phi_t) - M * psi
    return out


def charge_fluxes(phi, phi_x, phi_t, mu, psi=None, psibar=None, psi_x=None, psibar_x=None) -> dict:
    """Currents j with ∂t(density) = ∂x j, so dX/dt over [a, b] is j(b) - j(a)."""
    out = {"E": 2 * phi_x * phi_t, "P": phi_x * phi_x + phi_t * phi_t - mu ** 2 * gexp(2 * phi)}
    if psi is not None:
        M = 1j * mu * gexp(phi)
        psi_t, psibar_t = -psi_x + M * psibar, psibar_x + M * psi
        out["E"] = out["E"] + psi * psi_t + psibar * psibar_t
        out["P"] = out["P"] + psibar * psibar_t - psi * psi_t - 2 * M * psibar * psi
        out["Q"] = psi * (phi_x - phi_t) - M * psibar
        out["Qbar"] = psibar * (phi_x + phi_t) + M * psi
    return out


def defect_charge_terms(params: DefectParams, phi1, phi2, lambda0=0.0, fermions=None,
                        variant: str = "corrected", type1: bool = False) -> dict:
    """Defect contributions to ℰ, 𝒫 (and 𝒬, 𝒬̄) evaluated at x = 0.

    Bosonic: B0⁺ = -2iμβ²e^{φ+-Λ0}, B0⁻ = (iμ/β²)e^{Λ0}(cosh φ- + κ),
    ℰ = E + B0⁺ + B0⁻, 𝒫 = P + B0⁺ - B0⁻ (Λ0 ≡ 0 for type I).

    Super (κ = -1), ``fermions = (ψ1, ψ2, ψ̄1, ψ̄2, f1)`` at x = 0, with
    a = (√μ/β)e^{Λ0/2}sinh(φ-/2)(ψ1 + ψ2) and b = √μβe^{(φ+-Λ0)/2}(ψ̄1 + ψ̄2)::

        ℰ = E + ψ̄1ψ̄2 + ψ1ψ2 + (2iμ/β²)e^{Λ0}sinh²(φ-/2) - 2iμβ²e^{φ+-Λ0} + (a + b)f1
        𝒫 = P + ψ̄1ψ̄2 - ψ1ψ2 - (2iμ/β²)e^{Λ0}sinh²(φ-/2) - 2iμβ²e^{φ+-Λ0} - (a - b)f1
        𝒬 = Q + (2√μ/β)e^{Λ0/2}sinh(φ-/2)f1
        𝒬̄ = Q̄ - 2√μβe^{(φ+-Λ0)/2}f1

    ``variant='printed'`` uses sinh(φ-/2) for sinh², +(a - b)f1 in 𝒫 and
    the opposite sign of the f1 term in 𝒬; those forms are not conserved.
    """
    if variant not in ("corrected", "printed"):
        raise ValueError("variant must be 'corrected' or 'printed'")
    mu, be = params.mu, params.beta
    pm, pp = phi1 - phi2, phi1 + phi2
    L = 0 * phi1 if type1 else lambda0
    if fermions is None:
        Bp = -2j * mu * be ** 2 * gexp(pp - L)
        Bm = 1j * mu / be ** 2 * gexp(L) * (gcosh(pm) + params.kappa)
        return {"E": Bp + Bm, "P": Bp - Bm}
    ps1, ps2, psb1, psb2, f1 = fermions
    printed = variant == "printed"
    sm = np.sqrt(complex(mu))
    eL2, eh, sh = gexp(0.5 * L), gexp(0.5 * (pp - L)), gsinh(0.5 * pm)
    # (2iμ/β²)sinh²(φ-/2) as (iμ/β²)(cosh φ- - 1), matching the bosonic B0⁻ at κ = -1
    e0 = 2j * mu / be ** 2 * gexp(L) * sh if printed else 1j * mu / be ** 2 * gexp(L) * (gcosh(pm) - 1.0)
    e1 = 2j * mu * be ** 2 * gexp(pp - L)
    a = sm / be * eL2 * sh * (ps1 + ps2)
    b = sm * be * eh * (psb1 + psb2)
    return {"E": psb1 * psb2 + ps1 * ps2 + e0 - e1 + (a + b) * f1,
            "P": psb1 * psb2 - ps1 * ps2 - (e0 + e1) + (1 if printed else -1) * (a - b) * f1,
            "Q": (-1 if printed else 1) * (2 * sm / be) * eL2 * sh * f1,
            "Qbar": -2 * sm * be * eh * f1}


def _integrate(u, w):
    if isinstance(u, GrassmannElement):
        return u.map(lambda c: complex(np.sum(w * np.broadcast_to(c, w.shape))))
    return complex(np.sum(w * np.asarray(u)))


def _first_derivative(u, h):
    if isinstance(u, GrassmannElement):
        return u.map(lambda c: 0 * c if np.ndim(c) == 0 else d4(c, h))
    return d4(u, h)


def _npoints(u) -> int:
    coeffs = u.terms.values() if isinstance(u, GrassmannElement) else [u]
    return max(np.size(c) for c in coeffs)


def charges(side1: dict, side2: dict, params: DefectParams, h: float, lambda0=0.0, f1=None, t: float = 0.0,
            weights=None, variant: str = "corrected", type1: bool = False, edge_tol: float = 1e-8,
            include_defect: bool = True) -> ChargeReport:
    """E, P, Q, Q̄ and their modified forms from line data on x ∈ [-L, 0] and [0, L].

    Each side is a dict with ``phi, phi_x, phi_t`` (and ``psi, psibar``,
    optionally ``psi_x, psibar_x``) sampled on a uniform grid of spacing
    ``h``; side 1 ends and side 2 starts at the defect.  The default
    quadrature is the trapezoid rule with fourth-order end corrections.  A
    warning with the edge-flux estimate is issued when the outer-edge
    currents exceed ``edge_tol``, since the charges then change through the
    edges as well as through the defect.
    """
    mu = params.mu
    super_mode = "psi" in side1
    bulk, edge = {}, {}
    for k, side in ((1, side1), (2, side2)):
        w = gregory_weights(_npoints(side["phi"]), h) if weights is None else weights
        ferm = {}
        if super_mode:
            ferm = {"psi": side["psi"], "psibar": side["psibar"],
                    "psi_x": side.get("psi_x", _first_derivative(side["psi"], h)),
                    "psibar_x": side.get("psibar_x", _first_derivative(side["psibar"], h))}
        dens = charge_densities(side["phi"], side["phi_x"], side["phi_t"], mu, **ferm)
        idx = 0 if k == 1 else -1
        flux = charge_fluxes(*(side[q][idx] for q in ("phi", "phi_x", "phi_t")), mu,
                             **{q: v[idx] for q, v in ferm.items()})
        for q, v in dens.items():
            bulk[q] = bulk.get(q, 0) + _integrate(v, w)
            edge[q] = edge.get(q, 0) + (flux[q] if k == 2 else -flux[q])
    worst = max(norm_of(v)[0] for v in edge.values())
    if worst > edge_tol:
        warnings.warn(f"fields do not decay at the cutoff; edge flux estimate {worst:.3g} per unit time",
                      stacklevel=2)
    fermions = None
    if super_mode:
        fermions = (side1["psi"][-1], side2["psi"][0], side1["psibar"][-1], side2["psibar"][0], f1)
    D = defect_charge_terms(params, side1["phi"][-1], side2["phi"][0], lambda0, fermions, variant, type1)
    mod = {q: bulk[q] + (D[q] if include_defect else 0) for q in bulk}
    return ChargeReport(t, bulk["E"], bulk["P"], bulk.get("Q", 0.0), bulk.get("Qbar", 0.0),
                        mod["E"], mod["P"], mod.get("Q", 0.0), mod.get("Qbar", 0.0))
