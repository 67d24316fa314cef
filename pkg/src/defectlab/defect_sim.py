"""Time-domain simulation of two Liouville half-lines glued by a defect at x = 0.

Each side is evolved in characteristic variables l = ∂φ = φ_x - φ_t and
r = ∂̄φ = φ_x + φ_t::

    φ_t = (r - l)/2,   l_t = -l_x + V,   r_t = r_x - V,   V = μ²e^{2φ} (+ iμe^{φ}ψ̄ψ)

with fourth-order finite differences and classical RK4.  l moves right and r
moves left, so at x = 0 the data l1 and r2 arrive from the bulk while r1 and
l2 are fixed by the defect.  The closure solves the defect conditions for
them exactly; Λ0 (and f1 in super mode) follow their ODEs.  In super mode ψ
(right-moving) and ψ̄ (left-moving) are transported the same way and all
fields are Grassmann-valued, so the coefficient equations come out of the
algebra rather than being written by hand.

Scenarios start from closed-form defect pairs (plus localized packets) and
take the edge inflow from the same closed form, so the outer boundaries are
exact.  The charge monitors subtract the time-integrated edge fluxes, which
leaves the defect as the only possible source of drift.
"""
from __future__ import annotations

import configparser
import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import sympy as sp

from .fields import LightConeGrid, Z, ZB, d4, gregory_weights
from .grassmann import GrassmannElement, gcosh, gexp, gsinh
from .liouville import BlowUpError, DefectParams, exact_backlund_pair, exact_type1_pair
from .reports import ChargeReport
from .jets import value
from .super_liouville import JetState, _merge_jet, charge_fluxes, charges, default_context, defect_condition_fields

CLOSURE_ORDER = 4  # one-sided stencils used to close the defect
MODELS = ("bosonic_type1", "bosonic_type2", "super_type2")
CONFIG_KEYS = ("model", "L", "n", "dt", "T", "mu_re", "mu_im", "beta_re", "beta_im", "kappa", "seed_spec",
               "tolerance")
DEFAULT_SEED = {"a": 3.0, "root": 0.0, "amp": 0.05, "x0": -1.0, "width": 0.25, "famp": 0.1, "fx0": 1.0,
                "fwidth": 0.2}
X, TT = sp.symbols("x t", real=True)


class ConfigError(ValueError):
    pass


class CFLError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration

def parse_seed_spec(spec) -> dict:
    """``"a=3; amp=0.05"`` → dict merged over the defaults."""
    out = dict(DEFAULT_SEED)
    if isinstance(spec, dict):
        items = spec.items()
    else:
        items = []
        for part in str(spec or "").replace(",", ";").split(";"):
            if part.strip():
                if "=" not in part:
                    raise ConfigError(f"seed_spec entry {part!r} is not key=value")
                k, v = part.split("=", 1)
                items.append((k.strip(), v.strip()))
    for k, v in items:
        if k not in DEFAULT_SEED:
            raise ConfigError(f"unknown seed_spec key {k!r}")
        try:
            out[k] = float(v)
        except ValueError as exc:
            raise ConfigError(f"seed_spec {k} must be a number") from exc
    return out


def read_flat_config(path) -> dict:
    """Flat ``key = value`` file (``#`` comments) → dict of strings."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string("[config]\n" + p.read_text())
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {p}: {exc}") from exc
    return dict(cp["config"])


@dataclass
class SimConfig:
    model: str = "bosonic_type2"
    L: float = 3.0
    n: int = 301
    dt: float = 0.004
    T: float = 2.0
    params: DefectParams = field(default_factory=lambda: DefectParams(mu=1.0, beta=complex(np.sqrt(0.7j)), kappa=0.0))
    seed_spec: dict = field(default_factory=lambda: dict(DEFAULT_SEED))
    tolerance: float = 1e-6
    cfl_max: float = 0.5
    disable_defect_terms: bool = False
    perturb: bool = False
    monitor_every: int = 1

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}")
        if int(self.n) != self.n or self.n < 16:
            raise ConfigError("n must be an integer ≥ 16")
        self.n = int(self.n)
        if self.L <= 0 or self.dt <= 0 or self.T < 0:
            raise ConfigError("L and dt must be positive and T non-negative")
        self.seed_spec = parse_seed_spec(self.seed_spec)
        if self.model == "super_type2" and self.params.kappa != -1:
            self.params = self.params.with_kappa(-1.0)
        if self.dt > self.cfl_max * self.dx + 1e-15:
            raise CFLError(f"dt = {self.dt:g} exceeds the CFL bound {self.cfl_max:g}·dx = {self.cfl_max * self.dx:g}")

    @property
    def dx(self) -> float:
        return self.L / (self.n - 1)

    def refined(self, factor: int = 2) -> "SimConfig":
        return replace(self, n=(self.n - 1) * factor + 1, dt=self.dt / factor)

    @classmethod
    def from_mapping(cls, m: dict) -> "SimConfig":
        unknown = set(m) - set(CONFIG_KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            mu = complex(float(m.get("mu_re", 1.0)), float(m.get("mu_im", 0.0)))
            b0 = complex(np.sqrt(0.7j))
            beta = complex(float(m.get("beta_re", b0.real)), float(m.get("beta_im", b0.imag)))
            params = DefectParams(mu=mu if mu.imag else mu.real, beta=beta, kappa=float(m.get("kappa", 0.0)))
            return cls(model=str(m.get("model", "bosonic_type2")).strip(), L=float(m.get("L", 3.0)),
                       n=int(m.get("n", 301)), dt=float(m.get("dt", 0.004)), T=float(m.get("T", 2.0)),
                       params=params, seed_spec=m.get("seed_spec", ""), tolerance=float(m.get("tolerance", 1e-6)))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, (ConfigError, CFLError)):
                raise
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "SimConfig":
        return cls.from_mapping(read_flat_config(path))

    def to_mapping(self) -> dict:
        mu, beta = complex(self.params.mu), complex(self.params.beta)
        return {"model": self.model, "L": self.L, "n": self.n, "dt": self.dt, "T": self.T,
                "mu_re": mu.real, "mu_im": mu.imag, "beta_re": beta.real, "beta_im": beta.imag,
                "kappa": self.params.kappa,
                "seed_spec": ";".join(f"{k}={v:g}" for k, v in self.seed_spec.items()),
                "tolerance": self.tolerance}


# ---------------------------------------------------------------------------
# numerics

def _isg(u):
    return isinstance(u, GrassmannElement)


def _D(u, h):
    return u.map(lambda c: 0 * c if np.ndim(c) == 0 else d4(c, h)) if _isg(u) else d4(u, h)


def _assign(u, idx, val, n):
    """Copy of the length-``n`` field ``u`` with node ``idx`` set to ``val``."""
    if _isg(u):
        terms = {}
        for m in set(u.terms) | set(val.terms if _isg(val) else {0: val}):
            c = u.terms.get(m)
            arr = np.zeros(n, complex) if c is None else np.array(np.broadcast_to(c, n), complex)
            v = val.terms.get(m, 0.0) if _isg(val) else (val if m == 0 else 0.0)
            arr[idx] = v
            terms[m] = arr
        return GrassmannElement(u.ctx, terms)
    out = np.array(u, complex)
    out[idx] = val
    return out


def _absmax(u) -> float:
    if _isg(u):
        return u.max_abs()
    return float(np.max(np.abs(u))) if np.size(u) else 0.0


# ---------------------------------------------------------------------------
# background scenarios

def _xt(expr):
    return sp.sympify(expr).subs({Z: (X - TT) / 2, ZB: (X + TT) / 2}, simultaneous=True)


class Background:
    """Closed-form pair (φ1, φ2, Λ0) with φ, ∂φ, ∂̄φ as functions of (x, t)."""

    def __init__(self, model: str, params: DefectParams, seed: dict):
        dummy = LightConeGrid.uniform((0.0, 1.0), (0.0, 1.0), 3)
        if params.mu == 0:
            # free theory: the defect terms vanish and φ ≡ 0 is the background
            zero = lambda x, t: 0.0 * x  # noqa: E731
            self.description = "free background, phi = 0"
            self._f = {name: (zero, zero, zero) for name in ("phi1", "phi2")}
            self._lam = zero
            return
        if model == "bosonic_type1":
            st = exact_type1_pair(dummy, params, root=int(seed["root"]))
            self.description = f"exact type-I pair, s = {st.info['s']:.6g}"
        else:
            st = exact_backlund_pair(dummy, params, a=seed["a"])
            self.description = f"exact type-II pair, a = {seed['a']:g}, kappa = {params.kappa:g}"
        self._f = {}
        for name, e in (("phi1", st.phi1.expr), ("phi2", st.phi2.expr)):
            self._f[name] = tuple(sp.lambdify((X, TT), _xt(q), "numpy")
                                  for q in (e, sp.diff(e, Z), sp.diff(e, ZB)))
        self._lam = sp.lambdify((X, TT), _xt(st.lambda0.expr), "numpy")

    def side(self, name: str, x, t):
        x = np.asarray(x, float)
        return tuple(np.asarray(f(x, t) + 0j * x, complex) for f in self._f[name])

    def lambda0(self, t) -> complex:
        return complex(self._lam(0.0, t))


# ---------------------------------------------------------------------------
# state

@dataclass
class SimState:
    """Lattice fields per side (φ, l = ∂φ, r = ∂̄φ, and ψ, ψ̄ in super mode), Λ0, f1 and edge-flux integrals."""
    t: float
    f: dict
    W: dict

    @property
    def boundary_block(self) -> dict:
        out = {"phi1(0)": self.f["phi1"][-1], "phi2(0)": self.f["phi2"][0], "lambda0": self.f["lam"]}
        if "f1" in self.f:
            out["f1"] = self.f["f1"]
        return out


def _lin(a: dict, b: dict, h: float) -> dict:
    return {k: a[k] + h * b[k] for k in a}


class Simulator:
    def __init__(self, config: SimConfig):
        self.cfg = config
        self.p = config.params
        self.super = config.model == "super_type2"
        self.type1 = config.model == "bosonic_type1"
        self.bg = Background(config.model, self.p, config.seed_spec)
        n, L = config.n, config.L
        self.x1 = np.linspace(-L, 0.0, n)
        self.x2 = np.linspace(0.0, L, n)
        self.h = config.dx
        self.w = gregory_weights(n, self.h)
        self.mu = complex(self.p.mu)
        self.be = complex(self.p.beta)
        self.sm = np.sqrt(self.mu)
        self.ctx = default_context() if self.super else None

    # -- initial data -----------------------------------------------------
    def initial_state(self) -> SimState:
        s = self.cfg.seed_spec
        f = {}
        for k, x in ((1, self.x1), (2, self.x2)):
            phi, l, r = self.bg.side(f"phi{k}", x, 0.0)
            if k == 1 and s["amp"]:
                g = s["amp"] * np.exp(-((x - s["x0"]) / s["width"]) ** 2)
                dg = -2 * (x - s["x0"]) / s["width"] ** 2 * g
                phi, l = phi + g, l + 2 * dg     # right-moving: φ_t = -φ_x
            f[f"phi{k}"], f[f"l{k}"], f[f"r{k}"] = phi, l, r
        f["lam"] = self.bg.lambda0(0.0)
        if self.super:
            ctx = self.ctx
            g1 = s["famp"] * np.exp(-((self.x1 + s["fx0"]) / s["fwidth"]) ** 2)
            g2 = s["famp"] * np.exp(-((self.x2 - s["fx0"]) / s["fwidth"]) ** 2)
            s1, s2 = ctx.generator("s1"), ctx.generator("s2")
            z = np.zeros(self.cfg.n, complex)
            for k in (1, 2):
                for name in ("phi", "l", "r"):
                    f[f"{name}{k}"] = ctx.scalar(1.0) * f[f"{name}{k}"]
            f["psi1"], f["psibar1"] = s1 * (g1 + 0j), s1 * z
            f["psi2"], f["psibar2"] = s2 * z, s2 * (g2 + 0j)
            f["lam"] = ctx.scalar(f["lam"])
            f["f1"] = 0.0 * s1
        W = {k: (self.ctx.zero() if self.super else 0j) for k in self._charge_keys()}
        return SimState(0.0, f, W)

    def _charge_keys(self):
        return ("E", "P", "Q", "Qbar") if self.super else ("E", "P")

    # -- closure ----------------------------------------------------------
    def boundary(self, f: dict) -> dict:
        """Incoming values at x = 0 from the defect conditions, plus dΛ0/dt and df1/dt."""
        c, d, k = self.p.c, self.p.d, self.p.kappa
        sgn = -1.0 if self.cfg.perturb else 1.0
        p1, p2, l1, r2, L = f["phi1"][-1], f["phi2"][0], f["l1"][-1], f["r2"][0], f["lam"]
        pm, pp = p1 - p2, p1 + p2
        out = {}
        if self.type1:
            out["l2"] = -l1 - c * gsinh(pm)
            out["r1"] = r2 + sgn * d * gexp(pp)
            out["lam_t"] = 0 * L
            return out
        if not self.super:
            eL = gexp(L)
            out["l2"] = l1 + c * eL * (gcosh(pm) + k)
            out["r1"] = r2 + sgn * d * gexp(pp - L)
            out["lam_t"] = -0.5 * (l1 + out["l2"] + c * eL * gsinh(pm))
            return out
        be, sm = self.be, self.sm
        fv = f["f1"]
        eL, eL2, eh = gexp(L), gexp(0.5 * L), gexp(0.5 * (pp - L))
        sh, ch = gsinh(0.5 * pm), gcosh(0.5 * pm)
        ps1, psb2 = f["psi1"][-1], f["psibar2"][0]
        ps2 = ps1 - (sm / be) * eL2 * sh * fv
        psb1 = psb2 + sm * be * eh * fv
        sP, sbP = ps1 + ps2, psb1 + psb2
        dM = -c * eL * (gcosh(pm) - 1.0) - sm / (2 * be) * eL2 * sh * sP * fv
        dbM = sgn * d * eh * eh - be * sm / 2 * eh * sbP * fv
        out["l2"] = l1 - dM
        out["r1"] = r2 + dbM
        out["lam_t"] = -0.5 * (l1 + out["l2"] + c * eL * gsinh(pm) + sm / (2 * be) * eL2 * ch * sP * fv)
        out["psi2"] = ps2
        out["psibar1"] = psb1
        out["f1_t"] = 1j * sm * be / 2 * eh * sbP + 1j * sm / (2 * be) * eL2 * sh * sP
        return out

    def complete(self, f: dict, t: float) -> tuple[dict, dict]:
        """Fill the nodes fixed by the edge inflow and by the defect closure."""
        g, n = dict(f), self.cfg.n
        _, lin, _ = self.bg.side("phi1", self.x1[:1], t)
        _, _, rin = self.bg.side("phi2", self.x2[-1:], t)
        g["l1"] = _assign(g["l1"], 0, lin[0], n)
        g["r2"] = _assign(g["r2"], -1, rin[0], n)
        if self.super:
            g["psi1"] = _assign(g["psi1"], 0, self.ctx.zero(), n)
            g["psibar2"] = _assign(g["psibar2"], -1, self.ctx.zero(), n)
        b = self.boundary(g)
        g["r1"] = _assign(g["r1"], -1, b["r1"], n)
        g["l2"] = _assign(g["l2"], 0, b["l2"], n)
        if self.super:
            g["psi2"] = _assign(g["psi2"], 0, b["psi2"], n)
            g["psibar1"] = _assign(g["psibar1"], -1, b["psibar1"], n)
        return g, b

    # -- right-hand side --------------------------------------------------
    def _line(self, g: dict, k: int) -> dict:
        l, r = g[f"l{k}"], g[f"r{k}"]
        side = {"phi": g[f"phi{k}"], "phi_x": 0.5 * (l + r), "phi_t": 0.5 * (r - l)}
        if self.super:
            side["psi"], side["psibar"] = g[f"psi{k}"], g[f"psibar{k}"]
            side["psi_x"], side["psibar_x"] = _D(side["psi"], self.h), _D(side["psibar"], self.h)
        return side

    def _edge_flux(self, g: dict, k: int, idx: int) -> dict:
        side = self._line(g, k)
        return charge_fluxes(*(side.pop(q)[idx] for q in ("phi", "phi_x", "phi_t")), self.mu,
                             **{q: v[idx] for q, v in side.items()})

    def rhs(self, f: dict, t: float) -> dict:
        g, b = self.complete(f, t)
        h, mu, n = self.h, self.mu, self.cfg.n
        out = {}
        for k in (1, 2):
            phi, l, r = g[f"phi{k}"], g[f"l{k}"], g[f"r{k}"]
            e1 = gexp(phi)
            V = mu ** 2 * e1 * e1
            if self.super:
                ps, psb = g[f"psi{k}"], g[f"psibar{k}"]
                V = V + 1j * mu * e1 * psb * ps
                out[f"psi{k}"] = -_D(ps, h) + 1j * mu * e1 * psb
                out[f"psibar{k}"] = _D(psb, h) + 1j * mu * e1 * ps
            out[f"phi{k}"] = 0.5 * (r - l)
            out[f"l{k}"] = -_D(l, h) + V
            out[f"r{k}"] = _D(r, h) - V
        zero = self.ctx.zero() if self.super else 0.0
        # nodes fixed algebraically carry no dynamics of their own
        for key, idx in (("l1", 0), ("r1", -1), ("l2", 0), ("r2", -1)):
            out[key] = _assign(out[key], idx, zero, n)
        if self.super:
            for key, idx in (("psi1", 0), ("psibar1", -1), ("psi2", 0), ("psibar2", -1)):
                out[key] = _assign(out[key], idx, zero, n)
            out["f1"] = b["f1_t"]
        out["lam"] = b["lam_t"]
        return out

    def _edge_rate(self, f: dict, t: float) -> dict:
        g, _ = self.complete(f, t)
        left, right = self._edge_flux(g, 1, 0), self._edge_flux(g, 2, -1)
        return {k: right[k] - left[k] for k in left}

    def step(self, st: SimState, dt: float) -> SimState:
        t, y = st.t, st.f
        k1 = self.rhs(y, t)
        w1 = self._edge_rate(y, t)
        y2 = _lin(y, k1, dt / 2)
        k2, w2 = self.rhs(y2, t + dt / 2), self._edge_rate(y2, t + dt / 2)
        y3 = _lin(y, k2, dt / 2)
        k3, w3 = self.rhs(y3, t + dt / 2), self._edge_rate(y3, t + dt / 2)
        y4 = _lin(y, k3, dt)
        k4, w4 = self.rhs(y4, t + dt), self._edge_rate(y4, t + dt)
        ny = {k: y[k] + dt / 6 * (k1[k] + 2 * k2[k] + 2 * k3[k] + k4[k]) for k in y}
        W = {k: st.W[k] + dt / 6 * (w1[k] + 2 * w2[k] + 2 * w3[k] + w4[k]) for k in st.W}
        new = SimState(t + dt, ny, W)
        self._guard(new)
        return new

    def _guard(self, st: SimState, bound: float = 1e12):
        for k in (1, 2):
            phi = st.f[f"phi{k}"]
            body = phi.terms.get(0, 0.0) if _isg(phi) else phi
            a = np.abs(np.exp(2 * np.asarray(body)))
            if not np.all(np.isfinite(a)) or np.any(a > bound):
                raise BlowUpError(f"|e^(2 phi{k})| exceeded {bound:g} at t = {st.t:.6g}")

    # -- monitors ---------------------------------------------------------
    def charges(self, st: SimState) -> ChargeReport:
        """Bulk + defect charges minus the charge that left through the outer edges."""
        g, _ = self.complete(st.f, st.t)
        rep = charges(self._line(g, 1), self._line(g, 2), self.p, self.h, lambda0=g["lam"], f1=g.get("f1"),
                      t=st.t, weights=self.w, type1=self.type1, edge_tol=np.inf,
                      include_defect=not self.cfg.disable_defect_terms)
        vals = {}
        for k in ChargeReport.KEYS:
            base = k.split("_")[0]
            vals[k] = getattr(rep, k) - st.W[base] if base in st.W else getattr(rep, k)
        return ChargeReport(st.t, **vals)

    def closure_residual(self, st: SimState) -> dict:
        """Defect conditions at x = 0 with φ_x from the one-sided lattice stencil."""
        g, b = self.complete(st.f, st.t)
        h = self.h
        p1, p2 = g["phi1"][-1], g["phi2"][0]
        px1 = _D(g["phi1"], h)[-1]
        px2 = _D(g["phi2"], h)[0]
        pt1 = 0.5 * (g["r1"][-1] - g["l1"][-1])
        pt2 = 0.5 * (g["r2"][0] - g["l2"][0])
        c, d, k, L = self.p.c, self.p.d, self.p.kappa, g["lam"]
        lt = b["lam_t"]
        dp1, dbp1, dp2, dbp2 = px1 - pt1, px1 + pt1, px2 - pt2, px2 + pt2
        pm, pp = p1 - p2, p1 + p2
        if self.type1:
            res = {"d phi+": dp1 + dp2 + c * gsinh(pm), "dbar phi-": dbp1 - dbp2 - d * gexp(pp)}
        elif not self.super:
            res = {"d phi-": dp1 - dp2 + c * gexp(L) * (gcosh(pm) + k),
                   "dbar phi-": dbp1 - dbp2 - d * gexp(pp - L),
                   "d(phi+ - lambda0)": dp1 + dp2 + 2 * lt + c * gexp(L) * gsinh(pm)}
        else:
            # only time derivatives of the defect fields Λ0(t), f1(t) enter
            zero = self.ctx.zero()
            J = {"phi1": _merge_jet(p1, dp1, dbp1), "phi2": _merge_jet(p2, dp2, dbp2),
                 "lambda0": _merge_jet(L, -lt, lt), "f1": _merge_jet(g["f1"], -b["f1_t"], b["f1_t"])}
            for n, idx in (("psi1", -1), ("psibar1", -1), ("psi2", 0), ("psibar2", 0)):
                J[n] = _merge_jet(g[n][idx], zero, zero)
            res = {kk: value(v) for kk, v in defect_condition_fields(JetState(J), self.p, form="reduced").items()}
        return {kk: _absmax(v) for kk, v in res.items()}


# ---------------------------------------------------------------------------
# runs

@dataclass
class MonitorSeries:
    config: SimConfig
    rows: list
    closure: list
    meta: dict = field(default_factory=dict)

    def keys(self):
        return ChargeReport.KEYS

    def to_csv(self, path):
        """One column per real/imaginary part (per Grassmann monomial for super charges)."""
        rows = [_flatten(r, c) for r, c in zip(self.rows, self.closure)]
        cols = []
        for r in rows:
            for k in r:
                if k not in cols:
                    cols.append(k)
        with open(path, "w", newline="") as fh:
            wr = csv.DictWriter(fh, fieldnames=cols, restval=0.0)
            wr.writeheader()
            for r in rows:
                wr.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
        return cols


def _mono_label(ctx, m: int) -> str:
    if m == 0:
        return "1"
    return "*".join(ctx.generator_labels[i] for i in range(ctx.num_generators) if m >> i & 1)


def _components(v) -> dict:
    if _isg(v):
        return {_mono_label(v.ctx, m): complex(np.asarray(c)) for m, c in sorted(v.terms.items())}
    return {"1": complex(v)}


def _flatten(rep: ChargeReport, closure: dict) -> dict:
    out = {"t": float(rep.t)}
    for k in ChargeReport.KEYS:
        for mono, c in _components(getattr(rep, k)).items():
            tag = k if mono == "1" else f"{k}[{mono}]"
            out[f"{tag}_re"], out[f"{tag}_im"] = float(c.real), float(c.imag)
    for k, v in closure.items():
        out[f"closure:{k}"] = float(v)
    return out


def step(state: SimState, config: SimConfig, sim: Simulator | None = None) -> SimState:
    """One RK4 step of size ``config.dt`` (pass ``sim`` to reuse its compiled background)."""
    return (sim or Simulator(config)).step(state, config.dt)


def run(config: SimConfig) -> MonitorSeries:
    sim = Simulator(config)
    st = sim.initial_state()
    nsteps = int(math.ceil(config.T / config.dt - 1e-9)) if config.T > 0 else 0
    dt = config.T / nsteps if nsteps else config.dt
    rows, closure = [sim.charges(st)], [sim.closure_residual(st)]
    for i in range(nsteps):
        st = sim.step(st, dt)
        if (i + 1) % config.monitor_every == 0 or i == nsteps - 1:
            rows.append(sim.charges(st))
            closure.append(sim.closure_residual(st))
    g, _ = sim.complete(st.f, st.t)
    edge = 0.0
    if sim.super:
        edge = max(_absmax(g[n][i]) for n, i in (("psi1", 0), ("psibar1", 0), ("psi2", -1), ("psibar2", -1)))
    meta = {"model": config.model, "dx": config.dx, "dt": dt, "steps": nsteps, "background": sim.bg.description,
            "edge_fermion_max": edge, "scenario": "artifact-level scenario design (closed-form pair plus packets)",
            "defect_terms": not config.disable_defect_terms, "perturb": config.perturb}
    return MonitorSeries(config, rows, closure, meta)


def _drift(values) -> dict:
    """Per Grassmann monomial: max_t |X_m(t) - X_m(0)|, relative to max_m |X_m(0)|.

    For an ordinary number this is |X(t) - X(0)|/|X(0)|.  Normalizing by the
    largest initial coefficient keeps coefficients that start at zero (and
    should stay there) meaningful.
    """
    comps = [_components(v) for v in values]
    monos = sorted({m for c in comps for m in c})
    series = {m: np.array([c.get(m, 0j) for c in comps]) for m in monos}
    scale = max((abs(s[0]) for s in series.values()), default=0.0)
    if scale == 0.0:
        scale = max((float(np.max(np.abs(s))) for s in series.values()), default=0.0)
    out = {}
    for m, s in series.items():
        absd = float(np.max(np.abs(s - s[0])))
        out[m] = {"abs": absd, "rel": absd / scale if scale > 0 else 0.0, "scale": float(scale)}
    return out


def drift_report(series: MonitorSeries) -> dict:
    """Max relative drift per charge, unmodified/modified ratios and pass/fail at the config tolerance.

    Super charges are judged per Grassmann coefficient (worst coefficient).
    """
    if not series.rows:
        raise ValueError("empty monitor series")
    cfg = series.config
    drift = {}
    for k in ChargeReport.KEYS:
        per = _drift([getattr(r, k) for r in series.rows])
        worst = max((v["rel"] for v in per.values()), default=0.0)
        drift[k] = {"rel": worst, "abs": max((v["abs"] for v in per.values()), default=0.0), "per_coefficient": per}
    checked = ("Q", "Qbar") if cfg.model == "super_type2" else ("E", "P")
    ratios = {}
    for k in checked:
        m = drift[f"{k}_mod"]["rel"]
        ratios[k] = float(drift[k]["rel"] / m) if m > 0 else float("inf")
    modified_ok = all(drift[f"{k}_mod"]["rel"] <= cfg.tolerance for k in checked)
    separation_ok = all(r >= 1e3 for r in ratios.values())
    closure_max = {k: max(c[k] for c in series.closure) for k in series.closure[0]} if series.closure else {}
    return {"model": cfg.model, "tolerance": cfg.tolerance, "checked": list(checked), "drift": drift,
            "ratio_unmodified_to_modified": ratios, "modified_pass": modified_ok,
            "separation_pass": separation_ok, "passed": bool(modified_ok and separation_ok),
            "closure_residual_max": closure_max, "meta": series.meta}


def write_outputs(series: MonitorSeries, summary: dict, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path, json_path = out / "series.csv", out / "summary.json"
    series.to_csv(csv_path)
    json_path.write_text(json.dumps(summary, indent=2, sort_keys=True, default=_json_default))
    return {"csv": str(csv_path), "json": str(json_path)}


def _json_default(o):
    if isinstance(o, complex):
        return {"re": o.real, "im": o.imag}
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(type(o))
