"""Light-cone grids and scalar / Grassmann-valued fields sampled on them.

Coordinates follow ``z = (x - t)/2``, ``z̄ = (x + t)/2`` so that
``∂ = ∂_x - ∂_t`` and ``∂̄ = ∂_x + ∂_t``.  Arrays are indexed ``[i_z, i_z̄]``.

Two kinds of field exist.  :class:`ExactField` wraps a closed-form sympy
expression and differentiates it symbolically ("analytic" mode);
:class:`SampledField` holds samples and differentiates with second-order
finite differences ("fd" mode).  Both expose ``deriv(nz, nzb)`` and
``jet(nz, nzb)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Mapping

import numpy as np
import sympy as sp

from .grassmann import GrassmannContext, GrassmannElement
from .jets import Jet

Z, ZB = sp.symbols("z zb")

ANALYTIC = "analytic"
FD = "fd"


class GridError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LightConeGrid:
    z: np.ndarray
    zb: np.ndarray

    def __post_init__(self):
        for name in ("z", "zb"):
            a = np.asarray(getattr(self, name), dtype=float)
            if a.ndim != 1 or a.size == 0:
                raise GridError(f"{name} samples must be a non-empty 1-D array")
            if a.size > 1:
                d = np.diff(a)
                if np.any(d <= 0):
                    raise GridError(f"{name} samples must be strictly increasing")
                if not np.allclose(d, d[0], rtol=1e-9, atol=0):
                    raise GridError(f"{name} samples must be uniformly spaced")
            object.__setattr__(self, name, a)

    @classmethod
    def uniform(cls, z_range, zb_range, n: int, nb: int | None = None):
        nb = n if nb is None else nb
        return cls(np.linspace(*z_range, n), np.linspace(*zb_range, nb))

    @property
    def shape(self):
        return (self.z.size, self.zb.size)

    @property
    def h_z(self) -> float:
        return float(self.z[1] - self.z[0]) if self.z.size > 1 else 0.0

    @property
    def h_zbar(self) -> float:
        return float(self.zb[1] - self.zb[0]) if self.zb.size > 1 else 0.0

    @cached_property
    def mesh(self):
        return np.meshgrid(self.z, self.zb, indexing="ij")

    @property
    def x(self):
        zz, bb = self.mesh
        return zz + bb

    @property
    def t(self):
        zz, bb = self.mesh
        return bb - zz

    def refine(self, factor: int = 2) -> "LightConeGrid":
        """Same extent, spacing divided by ``factor``; old nodes are kept."""
        nz = (self.z.size - 1) * factor + 1
        nb = (self.zb.size - 1) * factor + 1
        return LightConeGrid(np.linspace(self.z[0], self.z[-1], nz),
                             np.linspace(self.zb[0], self.zb[-1], nb))

    def defect_line(self, tol: float = 1e-9) -> np.ndarray:
        """Boolean mask of nodes lying on x = 0."""
        scale = max(np.abs(self.z).max(), np.abs(self.zb).max(), 1.0)
        return np.abs(self.x) <= tol * scale

    def same_as(self, other: "LightConeGrid") -> bool:
        return (self.shape == other.shape and np.array_equal(self.z, other.z)
                and np.array_equal(self.zb, other.zb))

    def check_same(self, *others: "LightConeGrid"):
        for o in others:
            if not self.same_as(o):
                raise GridError("fields live on different grids")


def _fd(values: np.ndarray, axis: int, h: float) -> np.ndarray:
    if values.shape[axis] < 3:
        raise GridError("finite differences need at least 3 points per direction")
    return np.gradient(values, h, axis=axis, edge_order=2)


def d4(u: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order first derivative with one-sided stencils at both ends."""
    u = np.asarray(u)
    out = np.empty_like(u)
    out[2:-2] = (u[:-4] - 8 * u[1:-3] + 8 * u[3:-1] - u[4:]) / (12 * h)
    out[0] = (-25 * u[0] + 48 * u[1] - 36 * u[2] + 16 * u[3] - 3 * u[4]) / (12 * h)
    out[1] = (-3 * u[0] - 10 * u[1] + 18 * u[2] - 6 * u[3] + u[4]) / (12 * h)
    out[-1] = -(-25 * u[-1] + 48 * u[-2] - 36 * u[-3] + 16 * u[-4] - 3 * u[-5]) / (12 * h)
    out[-2] = -(-3 * u[-1] - 10 * u[-2] + 18 * u[-3] - 6 * u[-4] + u[-5]) / (12 * h)
    return out


def gregory_weights(n: int, h: float) -> np.ndarray:
    """Trapezoid weights with fourth-order end corrections."""
    w = np.ones(n)
    w[:3] = w[-3:][::-1] = (3 / 8, 7 / 6, 23 / 24)
    return h * w


class Field:
    """Complex scalar field on a :class:`LightConeGrid`."""

    grid: LightConeGrid

    def deriv(self, nz: int = 0, nzb: int = 0) -> np.ndarray:
        raise NotImplementedError

    def values(self) -> np.ndarray:
        return self.deriv(0, 0)

    def jet(self, nz: int = 0, nzb: int = 0) -> Jet:
        return Jet(self.deriv(nz, nzb), self.deriv(nz + 1, nzb), self.deriv(nz, nzb + 1))

    def jet2(self) -> Jet:
        """Nested jet carrying all derivatives up to second order."""
        return Jet(self.jet(0, 0), self.jet(1, 0), self.jet(0, 1))

    def sampled(self) -> "SampledField":
        return SampledField(self.values(), self.grid)

    def in_mode(self, mode: str) -> "Field":
        if mode == FD:
            return self.sampled()
        if mode == ANALYTIC:
            if not isinstance(self, ExactField):
                raise ValueError("analytic mode needs a closed-form field")
            return self
        raise ValueError(f"unknown derivative mode {mode!r}")


class ExactField(Field):
    """Closed-form field; derivatives are taken symbolically."""

    def __init__(self, expr, grid: LightConeGrid):
        self.expr = sp.sympify(expr)
        self.grid = grid
        self._cache: dict[tuple[int, int], np.ndarray] = {}

    def symbolic(self, nz: int = 0, nzb: int = 0):
        e = self.expr
        if nz:
            e = sp.diff(e, Z, nz)
        if nzb:
            e = sp.diff(e, ZB, nzb)
        return e

    def deriv(self, nz: int = 0, nzb: int = 0) -> np.ndarray:
        key = (nz, nzb)
        if key not in self._cache:
            fn = sp.lambdify((Z, ZB), self.symbolic(nz, nzb), modules="numpy")
            zz, bb = self.grid.mesh
            vals = np.asarray(fn(zz.astype(complex), bb.astype(complex)), dtype=complex)
            self._cache[key] = np.broadcast_to(vals, self.grid.shape).copy()
        return self._cache[key]

    def on(self, grid: LightConeGrid) -> "ExactField":
        return ExactField(self.expr, grid)


class SampledField(Field):
    """Sampled field differentiated by second-order finite differences."""

    def __init__(self, values: np.ndarray, grid: LightConeGrid):
        v = np.asarray(values, dtype=complex)
        if v.shape != grid.shape:
            v = np.broadcast_to(v, grid.shape).copy()
        self._v = v
        self.grid = grid
        self._cache: dict[tuple[int, int], np.ndarray] = {(0, 0): v}

    def deriv(self, nz: int = 0, nzb: int = 0) -> np.ndarray:
        key = (nz, nzb)
        if key not in self._cache:
            if nzb:
                self._cache[key] = _fd(self.deriv(nz, nzb - 1), 1, self.grid.h_zbar)
            else:
                self._cache[key] = _fd(self.deriv(nz - 1, 0), 0, self.grid.h_z)
        return self._cache[key]


class GField:
    """Grassmann-valued field: one scalar :class:`Field` per basis monomial."""

    def __init__(self, ctx: GrassmannContext, grid: LightConeGrid, comps: Mapping[int, Field]):
        self.ctx = ctx
        self.grid = grid
        self.comps = dict(comps)

    @classmethod
    def exact(cls, ctx, grid, exprs: Mapping[int, object]) -> "GField":
        return cls(ctx, grid, {m: ExactField(e, grid) for m, e in exprs.items() if sp.sympify(e) != 0})

    @classmethod
    def from_element(cls, elem: GrassmannElement, grid: LightConeGrid) -> "GField":
        return cls(elem.ctx, grid, {m: SampledField(c, grid) for m, c in elem.terms.items()})

    @classmethod
    def bosonic(cls, ctx, field: Field) -> "GField":
        return cls(ctx, field.grid, {0: field})

    def deriv(self, nz: int = 0, nzb: int = 0) -> GrassmannElement:
        return GrassmannElement(self.ctx, {m: f.deriv(nz, nzb) for m, f in self.comps.items()})

    def values(self) -> GrassmannElement:
        return self.deriv(0, 0)

    def jet(self, nz: int = 0, nzb: int = 0) -> GrassmannElement:
        return GrassmannElement(self.ctx, {m: f.jet(nz, nzb) for m, f in self.comps.items()})

    def jet2(self) -> GrassmannElement:
        return GrassmannElement(self.ctx, {m: f.jet2() for m, f in self.comps.items()})

    def body(self) -> Field:
        return self.comps.get(0, SampledField(np.zeros(self.grid.shape), self.grid))

    def parity(self) -> int | None:
        return self.values().parity()

    def in_mode(self, mode: str) -> "GField":
        return GField(self.ctx, self.grid, {m: f.in_mode(mode) for m, f in self.comps.items()})

    def sampled(self) -> "GField":
        return self.in_mode(FD)

    def on(self, grid: LightConeGrid) -> "GField":
        return GField(self.ctx, grid, {m: f.on(grid) for m, f in self.comps.items()})
