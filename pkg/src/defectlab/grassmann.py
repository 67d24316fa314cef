"""Finite-generator Grassmann (exterior) algebra with complex coefficients.

Elements are stored sparsely: a dict from a bitmask multi-index to a
coefficient.  Bit ``k - 1`` of the mask stands for generator ``k``; a mask
denotes the ordered product of its generators in increasing index order.

Coefficients may be python/numpy scalars, numpy arrays (a Grassmann-valued
field sampled on a grid, combined pointwise) or :class:`~defectlab.jets.Jet`
objects (values carrying first derivatives).  The algebra only needs ``+``,
``*`` and the elementary functions on coefficients.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping

import numpy as np


class GrassmannError(Exception):
    pass


class ContextMismatchError(GrassmannError):
    pass


class ParityError(GrassmannError):
    pass


class DomainError(GrassmannError):
    pass


@dataclass(frozen=True)
class GrassmannContext:
    num_generators: int
    generator_labels: tuple[str, ...] = field(default=())
    prune_tol: float = 0.0

    def __post_init__(self):
        if self.num_generators < 0:
            raise ValueError("num_generators must be non-negative")
        if not self.generator_labels:
            labels = tuple(f"g{k}" for k in range(1, self.num_generators + 1))
            object.__setattr__(self, "generator_labels", labels)
        if len(self.generator_labels) != self.num_generators:
            raise ValueError("one label per generator required")
        if len(set(self.generator_labels)) != self.num_generators:
            raise ValueError("generator labels must be distinct")

    def index(self, label: str | int) -> int:
        """1-based generator index for a label (ints pass through)."""
        if isinstance(label, (int, np.integer)):
            k = int(label)
        else:
            k = self.generator_labels.index(label) + 1
        if not 1 <= k <= self.num_generators:
            raise IndexError(f"generator {label!r} outside 1..{self.num_generators}")
        return k

    def generator(self, label: str | int) -> "GrassmannElement":
        return GrassmannElement(self, {1 << (self.index(label) - 1): 1.0})

    def generators(self, *labels) -> list["GrassmannElement"]:
        return [self.generator(lab) for lab in labels]

    def mask(self, *labels) -> int:
        m = 0
        for lab in labels:
            m |= 1 << (self.index(lab) - 1)
        return m

    def scalar(self, c) -> "GrassmannElement":
        return GrassmannElement(self, {0: c})

    def zero(self) -> "GrassmannElement":
        return GrassmannElement(self, {})

    def one(self) -> "GrassmannElement":
        return self.scalar(1.0)


def mask_to_indices(mask: int) -> tuple[int, ...]:
    out = []
    k = 1
    while mask:
        if mask & 1:
            out.append(k)
        mask >>= 1
        k += 1
    return tuple(out)


def indices_to_mask(indices: Iterable[int]) -> int:
    idx = list(indices)
    if any(b <= a for a, b in zip(idx, idx[1:])):
        raise ValueError(f"multi-index {idx} is not strictly increasing")
    m = 0
    for k in idx:
        if k < 1:
            raise ValueError("generator indices start at 1")
        m |= 1 << (k - 1)
    return m


def _popcount(m: int) -> int:
    return bin(m).count("1")


@lru_cache(maxsize=1 << 16)
def product_sign(a: int, b: int) -> int:
    """Sign of reordering e_a e_b into increasing order (a & b must be 0)."""
    swaps = 0
    bb = b
    j = 0
    while bb:
        if bb & 1:
            swaps += _popcount(a >> (j + 1))
        bb >>= 1
        j += 1
    return -1 if swaps & 1 else 1


_SCALARS = (int, float, complex, np.integer, np.floating, np.complexfloating)


def _all_scalar(a) -> bool:
    return all(isinstance(c, _SCALARS) for c in a.terms.values())


def _scalar_product(a, b):
    # exactly rounded sums: a·a = 0 holds exactly for odd a
    parts: dict[int, list] = {}
    for ma, ca in a.terms.items():
        for mb, cb in b.terms.items():
            if not ma & mb:
                t = complex(ca) * complex(cb)
                parts.setdefault(ma | mb, []).append(t if product_sign(ma, mb) > 0 else -t)
    out = {}
    for m, ts in parts.items():
        v = complex(math.fsum(t.real for t in ts), math.fsum(t.imag for t in ts)) if len(ts) > 1 else ts[0]
        out[m] = v
    return GrassmannElement(a.ctx, out)


def _is_zero(c, tol: float = 0.0) -> bool:
    if hasattr(c, "is_zero"):
        return c.is_zero(tol)
    if isinstance(c, np.ndarray):
        return not np.any(np.abs(c) > tol) if tol else not np.any(c)
    return abs(c) <= tol


def _max_abs(c) -> float:
    if hasattr(c, "max_abs"):
        return c.max_abs()
    return float(np.max(np.abs(c))) if np.size(c) else 0.0


class GrassmannElement:
    """An element of the exterior algebra of ``ctx``; treat as immutable."""

    __slots__ = ("ctx", "terms")
    # keep numpy from broadcasting over us in ``ndarray * element``
    __array_ufunc__ = None

    def __init__(self, ctx: GrassmannContext, terms: Mapping[int, object] | None = None):
        self.ctx = ctx
        limit = 1 << ctx.num_generators
        clean = {}
        for m, c in (terms or {}).items():
            if not 0 <= m < limit:
                raise ValueError(f"mask {m} outside the algebra with {ctx.num_generators} generators")
            if not _is_zero(c, ctx.prune_tol):
                clean[m] = c
        self.terms = clean

    # ---- construction helpers -------------------------------------------
    @classmethod
    def from_indices(cls, ctx, items: Mapping[tuple[int, ...], object]):
        return cls(ctx, {indices_to_mask(k): v for k, v in items.items()})

    def _coerce(self, other) -> "GrassmannElement":
        if isinstance(other, GrassmannElement):
            if other.ctx != self.ctx:
                raise ContextMismatchError(
                    f"cannot combine elements of {self.ctx.generator_labels} and {other.ctx.generator_labels}")
            return other
        return GrassmannElement(self.ctx, {0: other})

    # ---- arithmetic -----------------------------------------------------
    def __add__(self, other):
        other = self._coerce(other)
        out = dict(self.terms)
        for m, c in other.terms.items():
            out[m] = out[m] + c if m in out else c
        return GrassmannElement(self.ctx, out)

    __radd__ = __add__

    def __neg__(self):
        return GrassmannElement(self.ctx, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, GrassmannElement):
            return GrassmannElement(self.ctx, {m: c * other for m, c in self.terms.items()})
        other = self._coerce(other)
        if _all_scalar(self) and _all_scalar(other):
            return _scalar_product(self, other)
        out: dict[int, object] = {}
        for ma, ca in self.terms.items():
            for mb, cb in other.terms.items():
                if ma & mb:
                    continue
                m = ma | mb
                term = ca * cb if product_sign(ma, mb) > 0 else -(ca * cb)
                out[m] = out[m] + term if m in out else term
        return GrassmannElement(self.ctx, out)

    def __rmul__(self, other):
        # scalars (and jets/arrays) are even and commute with everything
        return GrassmannElement(self.ctx, {m: other * c for m, c in self.terms.items()})

    def __truediv__(self, other):
        if isinstance(other, GrassmannElement):
            return self * other.inverse()
        return GrassmannElement(self.ctx, {m: c / other for m, c in self.terms.items()})

    def __rtruediv__(self, other):
        return self.inverse() * other

    def __pow__(self, n: int):
        if not isinstance(n, (int, np.integer)) or n < 0:
            raise ValueError("only non-negative integer powers")
        out = self.ctx.one()
        for _ in range(int(n)):
            out = out * self
        return out

    # ---- structure --------------------------------------------------------
    def parity(self) -> int | None:
        """0 (even), 1 (odd) or None for mixed; zero counts as even."""
        pars = {_popcount(m) & 1 for m in self.terms}
        if len(pars) > 1:
            return None
        return pars.pop() if pars else 0

    def is_even(self) -> bool:
        return self.parity() == 0

    def is_odd(self) -> bool:
        return self.parity() == 1 or not self.terms

    def is_mixed(self) -> bool:
        return self.parity() is None

    def body(self):
        return self.terms.get(0, 0.0)

    def soul(self) -> "GrassmannElement":
        return GrassmannElement(self.ctx, {m: c for m, c in self.terms.items() if m})

    def body_soul(self):
        return self.body(), self.soul()

    def coefficient(self, multi_index: Iterable[int] = ()):
        return self.terms.get(indices_to_mask(multi_index), 0.0)

    def derivative(self, k: str | int) -> "GrassmannElement":
        """Left derivative with respect to generator ``k``."""
        bit = 1 << (self.ctx.index(k) - 1)
        below = bit - 1
        out = {}
        for m, c in self.terms.items():
            if m & bit:
                out[m ^ bit] = -c if _popcount(m & below) & 1 else c
        return GrassmannElement(self.ctx, out)

    def substitute(self, k: str | int, value: "GrassmannElement") -> "GrassmannElement":
        """Replace generator ``k`` by an odd element (``value`` must avoid ``k``)."""
        bit = 1 << (self.ctx.index(k) - 1)
        value = self._coerce(value)
        out = GrassmannElement(self.ctx, {m: c for m, c in self.terms.items() if not m & bit})
        with_k = self.derivative(k)  # x = k * d_k x + (terms without k)
        return out + value * with_k

    def project(self, require: int = 0, forbid: int = 0) -> "GrassmannElement":
        """Terms whose mask contains all of ``require`` and none of ``forbid``."""
        return GrassmannElement(
            self.ctx, {m: c for m, c in self.terms.items() if (m & require) == require and not m & forbid})

    def sector(self, *labels) -> "GrassmannElement":
        """Terms containing at least one of the given generators."""
        sel = self.ctx.mask(*labels)
        return GrassmannElement(self.ctx, {m: c for m, c in self.terms.items() if m & sel})

    def max_abs(self) -> float:
        return max((_max_abs(c) for c in self.terms.values()), default=0.0)

    def map(self, fn) -> "GrassmannElement":
        """Apply ``fn`` coefficient-wise (must be linear for this to make sense)."""
        return GrassmannElement(self.ctx, {m: fn(c) for m, c in self.terms.items()})

    def __getitem__(self, idx) -> "GrassmannElement":
        return self.map(lambda c: c[idx])

    def inverse(self) -> "GrassmannElement":
        b, s = self.body_soul()
        if _is_zero(b):
            raise DomainError("element with zero body is not invertible")
        # 1/(b + s) = (1/b) sum_k (-s/b)^k, terminates by nilpotency
        q = s * (-1.0 / b)
        out = self.ctx.one()
        term = self.ctx.one()
        for _ in range(self.ctx.num_generators):
            term = term * q
            if not term.terms:
                break
            out = out + term
        return out * (1.0 / b)

    def __eq__(self, other):
        if not isinstance(other, GrassmannElement):
            other = GrassmannElement(self.ctx, {0: other})
        if other.ctx != self.ctx:
            return False
        return (self - other).max_abs() == 0.0

    __hash__ = None

    def allclose(self, other, atol: float = 1e-12, rtol: float = 0.0) -> bool:
        other = self._coerce(other)
        scale = max(self.max_abs(), other.max_abs())
        return (self - other).max_abs() <= atol + rtol * scale

    def __repr__(self):
        if not self.terms:
            return "0"
        parts = []
        for m in sorted(self.terms, key=lambda m: (_popcount(m), m)):
            c = self.terms[m]
            name = "∧".join(self.ctx.generator_labels[k - 1] for k in mask_to_indices(m)) or "1"
            parts.append(f"({c})*{name}" if m else f"{c}")
        return " + ".join(parts)

    # ---- serialization ---------------------------------------------------
    def to_json(self) -> list[dict]:
        out = []
        for m in sorted(self.terms):
            c = np.asarray(self.terms[m])
            out.append({"multi_index": list(mask_to_indices(m)),
                        "re": np.real(c).tolist(), "im": np.imag(c).tolist()})
        return out

    @classmethod
    def from_json(cls, ctx: GrassmannContext, data: list[dict]) -> "GrassmannElement":
        terms = {}
        for row in data:
            c = np.asarray(row["re"]) + 1j * np.asarray(row["im"])
            terms[indices_to_mask(row["multi_index"])] = complex(c) if c.ndim == 0 else c
        return cls(ctx, terms)


# ---- elementary functions ----------------------------------------------------

def _exp_derivs(b, n):
    e = np.exp(b)
    return [e] * (n + 1)


def _sinh_derivs(b, n):
    s, c = np.sinh(b), np.cosh(b)
    return [s if k % 2 == 0 else c for k in range(n + 1)]


def _cosh_derivs(b, n):
    s, c = np.sinh(b), np.cosh(b)
    return [c if k % 2 == 0 else s for k in range(n + 1)]


def _log_derivs(b, n):
    if np.any(np.asarray(getattr(b, "v", b)) == 0):
        raise DomainError("log of an element with zero body")
    out = [np.log(b)]
    inv = 1.0 / b
    p = inv
    for k in range(1, n + 1):
        out.append(((-1) ** (k - 1)) * math.factorial(k - 1) * p)
        p = p * inv
    return out


def _sqrt_derivs(b, n):
    out = [np.sqrt(b)]
    coef = 1.0
    for k in range(1, n + 1):
        coef *= 0.5 - (k - 1)
        out.append(coef * out[0] / b ** k)
    return out


_ANALYTIC = {"exp": _exp_derivs, "sinh": _sinh_derivs, "cosh": _cosh_derivs,
             "log": _log_derivs, "sqrt": _sqrt_derivs}


def gr_analytic(f: str, a: GrassmannElement) -> GrassmannElement:
    """Evaluate ``f(body + soul)`` as a terminating Taylor series in the soul."""
    if f not in _ANALYTIC:
        raise ValueError(f"unknown function {f!r}; choose from {sorted(_ANALYTIC)}")
    if not isinstance(a, GrassmannElement):
        raise TypeError("gr_analytic expects a GrassmannElement")
    if not a.is_even():
        raise ParityError(f"{f} needs an even argument")
    body, soul = a.body_soul()
    order = a.ctx.num_generators // 2
    derivs = _ANALYTIC[f](body, order)
    out = a.ctx.scalar(derivs[0])
    power = a.ctx.one()
    for k in range(1, order + 1):
        power = power * soul
        if not power.terms:
            break
        out = out + power * (derivs[k] / math.factorial(k))
    return out


def gexp(a):
    return gr_analytic("exp", a) if isinstance(a, GrassmannElement) else np.exp(a)


def gsinh(a):
    return gr_analytic("sinh", a) if isinstance(a, GrassmannElement) else np.sinh(a)


def gcosh(a):
    return gr_analytic("cosh", a) if isinstance(a, GrassmannElement) else np.cosh(a)


def glog(a):
    return gr_analytic("log", a) if isinstance(a, GrassmannElement) else np.log(a)


def gr_mul(a: GrassmannElement, b: GrassmannElement) -> GrassmannElement:
    return a * b


def gr_body_soul(a: GrassmannElement):
    return a.body_soul()


def gr_derivative(a: GrassmannElement, k: str | int) -> GrassmannElement:
    return a.derivative(k)


def embed(a, ctx: GrassmannContext) -> GrassmannElement:
    """Re-express ``a`` in a larger context that contains all of its generator labels."""
    if not isinstance(a, GrassmannElement):
        return ctx.scalar(a)
    bit = {1 << i: 1 << (ctx.index(lab) - 1) for i, lab in enumerate(a.ctx.generator_labels)}
    terms = {}
    for m, c in a.terms.items():
        new = 0
        for b, nb in bit.items():
            if m & b:
                new |= nb
        terms[new] = c
    return GrassmannElement(ctx, terms)


def random_element(ctx: GrassmannContext, rng: np.random.Generator, parity: int | None = None,
                   density: float = 0.5) -> GrassmannElement:
    """Random complex element; ``parity`` restricts to even (0) or odd (1) monomials."""
    terms = {}
    for m in range(1 << ctx.num_generators):
        if parity is not None and _popcount(m) % 2 != parity:
            continue
        if rng.random() < density:
            terms[m] = complex(rng.normal(), rng.normal())
    return GrassmannElement(ctx, terms)


def _rel(x: GrassmannElement, *scales: GrassmannElement) -> float:
    s = max([1.0] + [v.max_abs() for v in scales])
    return x.max_abs() / s


def property_suite(cases: int = 1000, num_generators: int = 6, seed: int = 0):
    """Randomized algebra laws; returns a ResidualReport with the worst relative deviation per law.

    Laws: associativity, graded commutativity, nilpotency of odd elements and
    of even souls, the odd-derivation rule for left derivatives and
    exp(a + b) = exp(a)exp(b) for even a, b.
    """
    from .reports import ResidualReport

    ctx = GrassmannContext(num_generators)
    rng = np.random.default_rng(seed)
    worst = dict.fromkeys(("associativity", "graded commutativity", "nilpotency", "soul nilpotency",
                           "derivation rule", "exp homomorphism"), 0.0)
    half = num_generators // 2
    for _ in range(cases):
        pa, pb = (int(p) for p in rng.integers(0, 2, 2))
        a, b = random_element(ctx, rng, pa), random_element(ctx, rng, pb)
        c = random_element(ctx, rng)
        worst["associativity"] = max(worst["associativity"], _rel((a * b) * c - a * (b * c), (a * b) * c))
        sign = -1 if pa and pb else 1
        worst["graded commutativity"] = max(worst["graded commutativity"], _rel(a * b - sign * (b * a), a * b))
        odd = random_element(ctx, rng, 1)
        worst["nilpotency"] = max(worst["nilpotency"], (odd * odd).max_abs())
        soul = random_element(ctx, rng, 0).soul()
        worst["soul nilpotency"] = max(worst["soul nilpotency"], (soul ** (half + 1)).max_abs())
        k = int(rng.integers(1, num_generators + 1))
        lhs = (a * b).derivative(k)
        rhs = a.derivative(k) * b + (-1) ** pa * (a * b.derivative(k))
        worst["derivation rule"] = max(worst["derivation rule"], _rel(lhs - rhs, lhs))
        ea, eb = 0.3 * random_element(ctx, rng, 0), 0.3 * random_element(ctx, rng, 0)
        e = gexp(ea + eb)
        worst["exp homomorphism"] = max(worst["exp homomorphism"], _rel(e - gexp(ea) * gexp(eb), e))
    return ResidualReport("grassmann laws", max(worst.values()), float(np.mean(list(worst.values()))),
                          details={"per_law": worst, "cases": cases, "num_generators": num_generators})
