"""The constraint set K_a of 3x2 matrices generated by a flux ``a``.

A state ``(u, v)`` lifts to::

    [[a(v),    u            ],
     [u,       v            ],
     [u a(v),  u^2/2 + F(v) ]]

with ``F`` the primitive of ``a`` vanishing at 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import FluxDomainError, InputError, PreconditionError


class Flux:
    """A strictly convex, increasing flux with ``a(0) = 0`` and its primitive.

    Subclasses implement vectorized ``_a`` and ``_F`` without domain checks;
    the public ``a``/``F`` check the domain first.
    """

    kind = "abstract"
    lo = -math.inf
    hi = math.inf

    def contains(self, v) -> bool:
        v = np.asarray(v, dtype=float)
        return bool(np.all(np.isfinite(v) & (v > self.lo) & (v < self.hi)))

    def _check(self, v):
        if not self.contains(v):
            raise FluxDomainError(f"v={v} outside the {self.kind} flux domain ({self.lo}, {self.hi})")

    def a(self, v):
        self._check(v)
        return self._a(v)

    def F(self, v):
        self._check(v)
        return self._F(v)

    def to_spec(self) -> dict:
        raise NotImplementedError

    def trapezoid_defect(self, vi: float, vj: float) -> float:
        """``(a(vi) + a(vj))(vj - vi)/2 - (F(vj) - F(vi))`` without cancellation.

        Evaluated as ``1/2 int (s - vi)(vj - s) a''(s) ds`` by Gauss-Legendre, so
        the sign is exact for convex fluxes even when vi and vj nearly coincide.
        """
        lo, hi = min(vi, vj), max(vi, vj)
        x, w = np.polynomial.legendre.leggauss(_GAUSS_NODES)
        half = 0.5 * (hi - lo)
        s = lo + half * (x + 1.0)
        return float(0.5 * half * np.sum(w * (s - lo) * (hi - s) * self._a2(s)))

    def _a2(self, v):
        raise NotImplementedError


_GAUSS_NODES = 24


class ExpFlux(Flux):
    kind = "exp"

    def _a(self, v):
        return np.expm1(v)

    def _F(self, v):
        # e^v - v - 1 without cancellation near 0
        return np.expm1(v) - v

    def _a2(self, v):
        return np.exp(v)

    def to_spec(self) -> dict:
        return {"kind": "exp"}

    def __eq__(self, other):
        return isinstance(other, ExpFlux)

    def __hash__(self):
        return hash("exp")

    def __repr__(self):
        return "ExpFlux()"


@dataclass(frozen=True, eq=True)
class ShiftedPowerFlux(Flux):
    """``a(v) = (1 + v)^p - 1`` on ``(-1, inf)``, ``p > 1``."""

    p: float = 2.0
    kind = "shifted_power"
    lo = -1.0

    def __post_init__(self):
        if not (math.isfinite(self.p) and self.p > 1):
            raise InputError(f"shifted_power needs p > 1, got {self.p}")

    def _a(self, v):
        return np.power(1.0 + np.asarray(v, dtype=float), self.p) - 1.0

    def _F(self, v):
        v = np.asarray(v, dtype=float)
        q = self.p + 1.0
        return (np.power(1.0 + v, q) - 1.0) / q - v

    def _a2(self, v):
        return self.p * (self.p - 1.0) * np.power(1.0 + np.asarray(v, dtype=float), self.p - 2.0)

    def to_spec(self) -> dict:
        return {"kind": "shifted_power", "p": self.p}


class TabulatedFlux(Flux):
    """Piecewise-linear interpolation of tabulated values.

    Node values must be strictly increasing with strictly increasing slopes, and
    the interpolant must vanish at 0. Between nodes the flux is affine, so it is
    strictly convex only across nodes. ``F`` is the exact integral of the
    interpolant (composite trapezoid rule over the nodes plus a partial panel).
    """

    kind = "tabulated"

    def __init__(self, nodes, values):
        x = np.asarray(nodes, dtype=float)
        y = np.asarray(values, dtype=float)
        if x.ndim != 1 or x.shape != y.shape or x.size < 3:
            raise InputError("tabulated flux needs matching 1-d nodes/values with >= 3 entries")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise InputError("tabulated flux entries must be finite")
        if np.any(np.diff(x) <= 0) or np.any(np.diff(y) <= 0):
            raise InputError("tabulated nodes and values must be strictly increasing")
        if np.any(np.diff(np.diff(y) / np.diff(x)) <= 0):
            raise InputError("tabulated values must be strictly convex (slopes increasing)")
        if not (x[0] < 0 < x[-1]):
            raise InputError("tabulated domain must contain 0 in its interior")
        a0 = float(np.interp(0.0, x, y))
        if abs(a0) > 1e-12 * max(1.0, float(np.abs(y).max())):
            raise InputError(f"tabulated flux must vanish at 0, got a(0) = {a0}")
        self.nodes, self.values = x, y
        self.lo, self.hi = float(x[0]), float(x[-1])
        panels = 0.5 * np.diff(x) * (y[:-1] + y[1:])
        self._cum = np.concatenate([[0.0], np.cumsum(panels)])
        self._cum0 = float(self._integral_from_lo(0.0))

    def contains(self, v) -> bool:
        v = np.asarray(v, dtype=float)
        return bool(np.all(np.isfinite(v) & (v >= self.lo) & (v <= self.hi)))

    def _a(self, v):
        return np.interp(v, self.nodes, self.values)

    def _integral_from_lo(self, v):
        v = np.asarray(v, dtype=float)
        k = np.clip(np.searchsorted(self.nodes, v, side="right") - 1, 0, self.nodes.size - 2)
        x0, y0 = self.nodes[k], self.values[k]
        return self._cum[k] + 0.5 * (v - x0) * (y0 + np.interp(v, self.nodes, self.values))

    def _F(self, v):
        return self._integral_from_lo(v) - self._cum0

    def trapezoid_defect(self, vi: float, vj: float) -> float:
        # a'' is a sum of point masses (slope jumps) at the interior nodes
        lo, hi = min(vi, vj), max(vi, vj)
        slopes = np.diff(self.values) / np.diff(self.nodes)
        x, jump = self.nodes[1:-1], np.diff(slopes)
        inside = (x > lo) & (x < hi)
        return float(0.5 * np.sum((x[inside] - lo) * (hi - x[inside]) * jump[inside]))

    def to_spec(self) -> dict:
        return {"kind": "tabulated", "nodes": self.nodes.tolist(), "values": self.values.tolist()}

    def __repr__(self):
        return f"TabulatedFlux(nodes={self.nodes.tolist()}, values={self.values.tolist()})"


def flux_from_spec(spec) -> Flux:
    """Build a flux from ``{"kind": "exp"}``, ``{"kind": "shifted_power", "p": 2}``
    or ``{"kind": "tabulated", "nodes": [...], "values": [...]}``; a bare string
    such as ``"exp"`` or ``"shifted_power:2.5"`` is also accepted."""
    if isinstance(spec, str):
        kind, _, arg = spec.partition(":")
        spec = {"kind": kind}
        if arg:
            spec["p"] = float(arg)
    if not isinstance(spec, dict) or "kind" not in spec:
        raise InputError(f"flux specification must be an object with a 'kind', got {spec!r}")
    kind = spec["kind"]
    if kind == "exp":
        return ExpFlux()
    if kind == "shifted_power":
        return ShiftedPowerFlux(float(spec.get("p", 2.0)))
    if kind == "tabulated":
        return TabulatedFlux(spec["nodes"], spec["values"])
    raise InputError(f"unknown flux kind {kind!r}")


def flux_eval(flux: Flux, v: float) -> float:
    return float(flux.a(v))


def flux_primitive(flux: Flux, v: float) -> float:
    return float(flux.F(v))


@dataclass(frozen=True)
class KaPoint:
    u: float
    v: float

    def __post_init__(self):
        if not (math.isfinite(self.u) and math.isfinite(self.v)):
            raise InputError("state must be finite")


def lift(flux: Flux, point) -> np.ndarray:
    u, v = (point.u, point.v) if isinstance(point, KaPoint) else point
    flux._check(v)
    return lift_many(flux, np.array([u], float), np.array([v], float))[0]


def lift_many(flux: Flux, u, v) -> np.ndarray:
    """Vectorized lift of states to an ``(N, 3, 2)`` array; no domain check."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    av = flux._a(v)
    X = np.empty(u.shape + (3, 2))
    X[..., 0, 0] = av
    X[..., 0, 1] = u
    X[..., 1, 0] = u
    X[..., 1, 1] = v
    X[..., 2, 0] = u * av
    X[..., 2, 1] = 0.5 * u * u + flux._F(v)
    return X


def lift_states(flux: Flux, states) -> np.ndarray:
    S = np.asarray(states, dtype=float)
    if S.ndim != 2 or S.shape[1] != 2:
        raise InputError(f"states must have shape (N, 2), got {S.shape}")
    flux._check(S[:, 1])
    return lift_many(flux, S[:, 0], S[:, 1])


def is_in_ka(flux: Flux, X, tol: float = 1e-12) -> bool:
    X = np.asarray(X, dtype=float)
    if X.shape != (3, 2):
        raise InputError(f"K_a membership needs a 3x2 matrix, got {X.shape}")
    u, v = X[0, 1], X[1, 1]
    if not flux.contains(v) or not math.isfinite(u):
        return False
    if abs(X[1, 0] - X[0, 1]) > tol:
        return False
    return bool(np.max(np.abs(X - lift_many(flux, np.array([u]), np.array([v]))[0])) <= tol)


class InclusionInequality(NamedTuple):
    lhs: float
    rhs: float
    holds: bool
    gap: float  # rhs - lhs


def inclusion_inequality(flux: Flux, vi: float, vj: float) -> InclusionInequality:
    """``(F(vj) - F(vi))(a(vj) - a(vi)) < (a(vj) + a(vi))(vj - vi)(a(vj) - a(vi)) / 2``."""
    if vi == vj:
        raise PreconditionError("the inequality is only asserted for vi != vj")
    ai, aj = flux_eval(flux, vi), flux_eval(flux, vj)
    Fi, Fj = flux_primitive(flux, vi), flux_primitive(flux, vj)
    lhs = (Fj - Fi) * (aj - ai)
    rhs = (aj + ai) * (vj - vi) * (aj - ai) / 2.0
    gap = rhs - lhs
    # below the rounding level of the two products the direct difference has no
    # sign information; use the factored form (a(vj) - a(vi)) * trapezoid defect
    rounding = 16 * np.finfo(float).eps * (abs(Fj - Fi) + abs(Fi) + abs(Fj) + abs(vj - vi) * (abs(ai) + abs(aj))) * abs(aj - ai)
    if abs(gap) <= rounding:
        gap = (aj - ai) * flux.trapezoid_defect(vi, vj) * (1.0 if vj > vi else -1.0)
    return InclusionInequality(lhs, rhs, bool(gap > 0), float(gap))
