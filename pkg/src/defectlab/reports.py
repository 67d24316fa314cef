"""Structured numerical evidence: residual and charge reports, convergence fits."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .grassmann import GrassmannElement


def norm_of(r, margin: int = 0, mask: np.ndarray | None = None) -> tuple[float, float]:
    """(max, mean) absolute value of a residual, coefficient-wise for Grassmann values.

    ``margin`` drops that many nodes from every grid edge (finite-difference
    stencils are one-sided there); ``mask`` restricts to selected nodes.
    """
    coeffs = list(r.terms.values()) if isinstance(r, GrassmannElement) else [r]
    mx, total, count = 0.0, 0.0, 0
    for c in coeffs:
        a = np.abs(np.asarray(c))
        if a.ndim == 2:
            sel = np.ones(a.shape, dtype=bool) if mask is None else mask.copy()
            if margin:
                inner = np.zeros(a.shape, dtype=bool)
                inner[margin:a.shape[0] - margin, margin:a.shape[1] - margin] = True
                sel &= inner
            a = a[sel]
        if a.size:
            mx = max(mx, float(a.max()))
            total += float(a.sum())
            count += a.size
    if not coeffs:
        return 0.0, 0.0
    return mx, (total / count if count else 0.0)


@dataclass
class ResidualReport:
    equation_id: str
    max_norm: float
    mean_norm: float
    slope: float | None = None
    grid_sizes: list = field(default_factory=list)
    level_norms: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    @classmethod
    def from_residual(cls, equation_id: str, r, margin: int = 0, mask=None, **details):
        mx, mean = norm_of(r, margin, mask)
        return cls(equation_id, mx, mean, details=details)

    def passed(self, tol: float) -> bool:
        return self.max_norm <= tol

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), default=_jsonable)


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return {"re": o.real, "im": o.imag}
    if isinstance(o, GrassmannElement):
        return o.to_json()
    raise TypeError(f"not serializable: {type(o)}")


def fit_slope(hs: Sequence[float], errs: Sequence[float]) -> float:
    """Least-squares slope of log(err) against log(h)."""
    hs, errs = np.asarray(hs, float), np.asarray(errs, float)
    if np.any(errs <= 0):
        return float("inf")
    return float(np.polyfit(np.log(hs), np.log(errs), 1)[0])


def convergence_study(run: Callable[[int], dict[str, float]], levels: Sequence[int],
                      spacing: Callable[[int], float]) -> dict[str, ResidualReport]:
    """Evaluate ``run(level)`` (a dict of named residual norms) on each level.

    Returns one report per residual name with the fitted slope, the finest
    level's norm as ``max_norm`` and the per-level norms.
    """
    per_level = [run(lv) for lv in levels]
    hs = [spacing(lv) for lv in levels]
    out = {}
    for name in per_level[0]:
        errs = [d[name] for d in per_level]
        rep = ResidualReport(name, errs[-1], errs[-1], fit_slope(hs, errs),
                             grid_sizes=list(levels), level_norms=errs)
        rep.details["pairwise_slopes"] = [float(np.log(errs[i] / errs[i + 1]) / np.log(hs[i] / hs[i + 1]))
                                          if errs[i + 1] > 0 and errs[i] > 0 else float("inf")
                                          for i in range(len(errs) - 1)]
        out[name] = rep
    return out


@dataclass
class ChargeReport:
    t: float
    E: object
    P: object
    Q: object = 0.0
    Qbar: object = 0.0
    E_mod: object = 0.0
    P_mod: object = 0.0
    Q_mod: object = 0.0
    Qbar_mod: object = 0.0

    KEYS = ("E", "P", "Q", "Qbar", "E_mod", "P_mod", "Q_mod", "Qbar_mod")

    def to_dict(self) -> dict:
        out = {"t": self.t}
        for k in self.KEYS:
            v = getattr(self, k)
            out[k] = v.to_json() if isinstance(v, GrassmannElement) else {"re": float(np.real(v)),
                                                                            "im": float(np.imag(v))}
        return out
