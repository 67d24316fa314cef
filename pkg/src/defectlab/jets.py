"""First-order jets in the light-cone coordinates.

A :class:`Jet` carries a value together with its ``∂ = ∂/∂z`` and
``∂̄ = ∂/∂z̄`` derivatives (the parts may themselves be jets, which gives
second derivatives) and propagates them through arithmetic and the
elementary functions (forward-mode differentiation).  Jets are used as
Grassmann coefficients, so residuals of the form ``∂X - RHS`` can be formed
for composite quantities ``X`` without re-deriving chain rules by hand.
"""
from __future__ import annotations

import numpy as np


_CONST = (int, float, complex, np.number, np.ndarray)


class Jet:
    __slots__ = ("v", "dz", "dzb")
    __array_priority__ = 100

    def __init__(self, v, dz=0.0, dzb=0.0):
        self.v = v
        self.dz = dz
        self.dzb = dzb

    @classmethod
    def const(cls, v):
        return cls(v, 0.0 * v, 0.0 * v)

    def d(self, which: str):
        return self.dz if which == "z" else self.dzb

    # ---- arithmetic ------------------------------------------------------
    def __add__(self, o):
        if isinstance(o, Jet):
            return Jet(self.v + o.v, self.dz + o.dz, self.dzb + o.dzb)
        if not isinstance(o, _CONST):
            return NotImplemented
        return Jet(self.v + o, self.dz, self.dzb)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.v, -self.dz, -self.dzb)

    def __sub__(self, o):
        if not isinstance(o, (Jet,) + _CONST):
            return NotImplemented
        return self + (-o)

    def __rsub__(self, o):
        return (-self) + o

    def __mul__(self, o):
        if isinstance(o, Jet):
            return Jet(self.v * o.v, self.dz * o.v + self.v * o.dz, self.dzb * o.v + self.v * o.dzb)
        if not isinstance(o, _CONST):
            return NotImplemented
        return Jet(self.v * o, self.dz * o, self.dzb * o)

    __rmul__ = __mul__

    def reciprocal(self):
        inv = 1.0 / self.v
        return Jet(inv, -self.dz * inv * inv, -self.dzb * inv * inv)

    def __truediv__(self, o):
        if isinstance(o, Jet):
            return self * o.reciprocal()
        return Jet(self.v / o, self.dz / o, self.dzb / o)

    def __rtruediv__(self, o):
        return self.reciprocal() * o

    def __pow__(self, n):
        if isinstance(n, (int, np.integer)) and n >= 0:
            out = Jet(1.0 + 0 * self.v, 0 * self.dz, 0 * self.dzb)
            for _ in range(int(n)):
                out = out * self
            return out
        if isinstance(n, (int, np.integer)):
            return (self ** (-n)).reciprocal()
        return np.exp(n * np.log(self))

    def _chain(self, f, fprime):
        g = fprime(self.v)
        return Jet(f(self.v), g * self.dz, g * self.dzb)

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        if method != "__call__" or kwargs:
            return NotImplemented
        if len(inputs) == 2:
            a, b = inputs
            ops = {np.add: lambda: a + b if isinstance(a, Jet) else b + a,
                   np.multiply: lambda: a * b if isinstance(a, Jet) else b * a,
                   np.subtract: lambda: a - b if isinstance(a, Jet) else b.__rsub__(a),
                   np.true_divide: lambda: a / b if isinstance(a, Jet) else b.__rtruediv__(a)}
            return ops[ufunc]() if ufunc in ops else NotImplemented
        if len(inputs) != 1:
            return NotImplemented
        rules = {
            np.exp: (np.exp, np.exp),
            np.sinh: (np.sinh, np.cosh),
            np.cosh: (np.cosh, np.sinh),
            np.log: (np.log, lambda v: 1.0 / v),
            np.sqrt: (np.sqrt, lambda v: 0.5 / np.sqrt(v)),
            np.negative: (np.negative, lambda v: -1.0 + 0 * v),
        }
        if ufunc not in rules:
            return NotImplemented
        return self._chain(*rules[ufunc])

    # ---- inspection ------------------------------------------------------
    def is_zero(self, tol: float = 0.0) -> bool:
        return all(c.is_zero(tol) if isinstance(c, Jet) else not np.any(np.abs(np.asarray(c)) > tol)
                   for c in (self.v, self.dz, self.dzb))

    def max_abs(self) -> float:
        return max(c.max_abs() if isinstance(c, Jet) else (float(np.max(np.abs(c))) if np.size(c) else 0.0)
                   for c in (self.v, self.dz, self.dzb))

    def __getitem__(self, idx):
        return Jet(*(c[idx] if isinstance(c, Jet) else np.asarray(c)[idx] for c in (self.v, self.dz, self.dzb)))

    def __repr__(self):
        return f"Jet(v={self.v!r}, dz={self.dz!r}, dzb={self.dzb!r})"


def _strip(x):
    while isinstance(x, Jet):
        x = x.v
    return x


def value(x):
    """Strip jets (also nested ones, and inside Grassmann elements)."""
    from .grassmann import GrassmannElement

    if isinstance(x, GrassmannElement):
        return x.map(_strip)
    return _strip(x)


def derivative(x, which: str):
    """``∂`` (which='z') or ``∂̄`` (which='zb') of a jet or jet-valued element."""
    from .grassmann import GrassmannElement

    if isinstance(x, GrassmannElement):
        return x.map(lambda c: c.d(which) if isinstance(c, Jet) else 0.0 * c)
    if isinstance(x, Jet):
        return x.d(which)
    return 0.0 * np.asarray(x)
