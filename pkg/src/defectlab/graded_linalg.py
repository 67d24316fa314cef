"""Graded matrices over the Grassmann algebra and the osp(1,2) generators.

The 3×3 grading is (even, even, odd): indices 0 and 1 are bosonic, index 2
is fermionic.  A matrix is *even* when its boson-boson and fermion-fermion
blocks hold even entries and the mixed blocks hold odd entries; *odd* is the
reverse.  Numeric entries count as even Grassmann numbers.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .grassmann import GrassmannElement
from .jets import Jet
from .reports import ResidualReport, norm_of


class GradingError(ValueError):
    pass


def _entry_parity(e) -> int | None:
    """Grassmann parity of an entry; -1 for an exact zero."""
    if isinstance(e, GrassmannElement):
        if not e.terms:
            return -1
        return e.parity()
    if isinstance(e, Jet):
        return -1 if e.is_zero() else 0
    return -1 if not np.any(e) else 0


def _max_abs(e) -> float:
    if isinstance(e, (GrassmannElement, Jet)):
        return e.max_abs()
    return float(np.max(np.abs(e))) if np.size(e) else 0.0


class GradedMatrix:
    __slots__ = ("entries", "grading")
    __array_ufunc__ = None

    def __init__(self, entries: Sequence[Sequence[object]], grading: Sequence[int] | None = None):
        rows = [list(r) for r in entries]
        n = len(rows)
        if n not in (2, 3) or any(len(r) != n for r in rows):
            raise GradingError("graded matrices are 2×2 or 3×3")
        if grading is None:
            grading = (0, 0) if n == 2 else (0, 0, 1)
        if len(grading) != n:
            raise GradingError("grading vector length must match the dimension")
        self.entries = rows
        self.grading = tuple(int(g) for g in grading)

    @property
    def dim(self) -> int:
        return len(self.entries)

    @classmethod
    def zeros(cls, dim: int = 3, grading=None):
        return cls([[0] * dim for _ in range(dim)], grading)

    @classmethod
    def identity(cls, dim: int = 3, grading=None):
        return cls([[1 if i == j else 0 for j in range(dim)] for i in range(dim)], grading)

    def __getitem__(self, ij):
        i, j = ij
        return self.entries[i][j]

    def _check(self, other: "GradedMatrix"):
        if not isinstance(other, GradedMatrix):
            raise TypeError("expected a GradedMatrix")
        if other.dim != self.dim or other.grading != self.grading:
            raise GradingError("dimension or grading mismatch")

    def map(self, fn) -> "GradedMatrix":
        return GradedMatrix([[fn(e) for e in row] for row in self.entries], self.grading)

    def __add__(self, other):
        self._check(other)
        return GradedMatrix([[a + b for a, b in zip(r1, r2)] for r1, r2 in zip(self.entries, other.entries)],
                            self.grading)

    def __sub__(self, other):
        return self + (-other)

    def __neg__(self):
        return self.map(lambda e: -e)

    def __matmul__(self, other):
        self._check(other)
        n = self.dim
        out = [[None] * n for _ in range(n)]
        for i in range(n):
            for j in range(n):
                acc = 0
                for k in range(n):
                    a, b = self.entries[i][k], other.entries[k][j]
                    if _entry_parity(a) == -1 or _entry_parity(b) == -1:
                        continue
                    acc = acc + a * b
                out[i][j] = acc
        return GradedMatrix(out, self.grading)

    def __mul__(self, c):
        """Right multiplication of every entry by a (Grassmann) scalar."""
        if isinstance(c, GradedMatrix):
            return self @ c
        return self.map(lambda e: e * c if _entry_parity(e) != -1 else e)

    def __rmul__(self, c):
        """Left multiplication of every entry by a (Grassmann) scalar."""
        return self.map(lambda e: c * e if _entry_parity(e) != -1 else e)

    def transpose(self) -> "GradedMatrix":
        n = self.dim
        return GradedMatrix([[self.entries[j][i] for j in range(n)] for i in range(n)], self.grading)

    def parity(self) -> int | None:
        """0 even, 1 odd, None if mixed (the zero matrix is even)."""
        found = set()
        for i, row in enumerate(self.entries):
            for j, e in enumerate(row):
                p = _entry_parity(e)
                if p == -1:
                    continue
                if p is None:
                    return None
                found.add(p ^ self.grading[i] ^ self.grading[j])
        if len(found) > 1:
            return None
        return found.pop() if found else 0

    def max_abs(self) -> float:
        return max(_max_abs(e) for row in self.entries for e in row)

    def supertrace(self):
        """Auxiliary diagnostic: Σ (-1)^{g_i} M_ii."""
        acc = 0
        for i, g in enumerate(self.grading):
            acc = acc + (-1) ** g * self.entries[i][i]
        return acc

    def to_dump(self) -> dict:
        def ser(e):
            if isinstance(e, GrassmannElement):
                return e.to_json()
            c = np.asarray(e)
            return [{"multi_index": [], "re": np.real(c).tolist(), "im": np.imag(c).tolist()}] if np.any(c) else []
        return {"grading": list(self.grading), "dim": self.dim,
                "entries": [ser(e) for row in self.entries for e in row]}

    def __repr__(self):
        return f"GradedMatrix({self.entries!r}, grading={self.grading})"


def graded_bracket(X: GradedMatrix, Y: GradedMatrix) -> GradedMatrix:
    """XY - (-1)^{|X||Y|} YX; an anticommutator exactly when both are odd."""
    px, py = X.parity(), Y.parity()
    if px is None or py is None:
        raise GradingError("graded bracket needs homogeneous arguments")
    if px and py:
        return X @ Y + Y @ X
    return X @ Y - Y @ X


def osp_generators() -> dict[str, GradedMatrix]:
    """Integer 3×3 representation of osp(1,2): H, E±, F±."""
    H = GradedMatrix([[1, 0, 0], [0, -1, 0], [0, 0, 0]])
    Ep = GradedMatrix([[0, 1, 0], [0, 0, 0], [0, 0, 0]])
    Em = GradedMatrix([[0, 0, 0], [1, 0, 0], [0, 0, 0]])
    Fp = GradedMatrix([[0, 0, 1], [0, 0, 0], [0, 1, 0]])
    Fm = GradedMatrix([[0, 0, 0], [0, 0, -1], [1, 0, 0]])
    return {"H": H, "E+": Ep, "E-": Em, "F+": Fp, "F-": Fm}


def sl2_generators() -> dict[str, GradedMatrix]:
    """The bosonic 2×2 block of H and E±."""
    g = osp_generators()
    return {k: GradedMatrix([row[:2] for row in g[k].entries[:2]]) for k in ("H", "E+", "E-")}


# (lhs pair, expected combination) for each printed (anti)commutator
OSP_RELATIONS = [
    ("[H,E+]", ("H", "E+"), {"E+": 2}),
    ("[H,E-]", ("H", "E-"), {"E-": -2}),
    ("[H,F+]", ("H", "F+"), {"F+": 1}),
    ("[H,F-]", ("H", "F-"), {"F-": -1}),
    ("[E+,E-]", ("E+", "E-"), {"H": 1}),
    ("{F+,F-}", ("F+", "F-"), {"H": 1}),
    ("[E+,F-]", ("E+", "F-"), {"F+": -1}),
    ("[E-,F+]", ("E-", "F+"), {"F-": -1}),
    ("{F+,F+}", ("F+", "F+"), {"E+": 2}),
    ("{F-,F-}", ("F-", "F-"), {"E-": -2}),
]


def check_osp_relations(generators: dict[str, GradedMatrix] | None = None) -> ResidualReport:
    """Evaluate every printed relation; the report's max_norm is the worst deviation.

    Passing a dict with only H and E± (e.g. :func:`sl2_generators`) checks the
    relations that close on that subset.
    """
    gens = osp_generators() if generators is None else generators
    per = {}
    for name, (a, b), rhs in OSP_RELATIONS:
        if a not in gens or b not in gens or any(k not in gens for k in rhs):
            continue
        lhs = graded_bracket(gens[a], gens[b])
        expect = GradedMatrix.zeros(lhs.dim, lhs.grading)
        for k, c in rhs.items():
            expect = expect + c * gens[k]
        per[name] = (lhs - expect).max_abs()
    worst = max(per.values()) if per else 0.0
    return ResidualReport("osp(1,2) relations", worst, float(np.mean(list(per.values()))) if per else 0.0,
                          details={"per_relation": per, "checked": len(per)})


def matrix_derivative(M: GradedMatrix, which: str) -> GradedMatrix:
    """``∂`` or ``∂̄`` of a matrix whose entries carry jets."""
    from .jets import derivative

    def d(e):
        if isinstance(e, (GrassmannElement, Jet)):
            return derivative(e, which)
        return 0
    return M.map(d)


def zero_curvature_residual(A: GradedMatrix, Abar: GradedMatrix, margin: int = 0,
                            mask=None) -> tuple[ResidualReport, GradedMatrix]:
    """``∂̄A - ∂Ā + [A, Ā]`` for jet-valued connections.

    The derivative mode is whatever produced the jets: closed-form fields give
    analytic derivatives, sampled fields finite differences.
    """
    if A.dim != Abar.dim:
        raise GradingError("connections of different dimension")
    from .jets import value

    Av, Abv = A.map(value), Abar.map(value)
    R = matrix_derivative(A, "zb") - matrix_derivative(Abar, "z") + (Av @ Abv - Abv @ Av)
    mx = 0.0
    mean = []
    for row in R.entries:
        for e in row:
            if _entry_parity(e) == -1:
                continue
            a, b = norm_of(e, margin, mask)
            mx = max(mx, a)
            mean.append(b)
    return ResidualReport("zero curvature", mx, float(np.mean(mean)) if mean else 0.0), R


def intertwining_residual(K: GradedMatrix, A1: GradedMatrix, A2: GradedMatrix, Abar1: GradedMatrix,
                          Abar2: GradedMatrix, margin: int = 0, mask=None):
    """Residuals of ∂K = A1 K - K A2 and ∂̄K = Ā1 K - K Ā2 (jet-valued K)."""
    from .jets import value

    if not (K.dim == A1.dim == A2.dim == Abar1.dim == Abar2.dim):
        raise GradingError("dimension mismatch")
    Kv = K.map(value)
    vals = [M.map(value) for M in (A1, A2, Abar1, Abar2)]
    R = matrix_derivative(K, "z") - (vals[0] @ Kv - Kv @ vals[1])
    Rb = matrix_derivative(K, "zb") - (vals[2] @ Kv - Kv @ vals[3])
    out = {}
    for name, M in (("d", R), ("dbar", Rb)):
        mx = 0.0
        for row in M.entries:
            for e in row:
                if _entry_parity(e) != -1:
                    mx = max(mx, norm_of(e, margin, mask)[0])
        out[name] = mx
    rep = ResidualReport("K intertwining", max(out.values()), float(np.mean(list(out.values()))),
                         details=out)
    return rep, R, Rb
