"""The (star)_i certificate of a 3x2 T_N configuration and the sign-pattern cases.

For a configuration whose upper 2x2 blocks ``Y_i`` have symmetric rank-one legs
``C_i``, the quantity::

    star_i = xi_i * sum_j t^i_j (Y_j)_11 det(Y_j - Y_i)

is strictly positive whenever the points lie in K_a, while the sign pattern of
the legs forces some designated ``star_i <= 0``. Three algebraically equal ways
of computing ``star_i`` are provided so they can check one another.

Indices ``i`` passed to the ``star_*`` functions and witness indices are 1-based,
matching the case tables.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    REL_TOL,
    SpectralParams,
    TnConfiguration,
    TVectors,
    characterization_residual,
    cof,
    det2,
    det_scale,
    inner,
    k_coefficients,
    reconstruct,
    t_vectors,
    validate_tn,
)
from .errors import (
    AmbiguousSignError,
    ConsistencyError,
    InputError,
    PreconditionError,
    StructureError,
)
from .ka import Flux, is_in_ka

SYM_TOL = 1e-12
SIGN_TOL = 1e-10
SLACK_TOL = 1e-10

UNIFORM = "uniform-sign"
SINGLE_OUTLIER = "single-outlier"
SPLIT_MIDDLE = "split-middle"
HARD = "hard-case"

# Remaining patterns after the general rules, with the index whose star value
# the case analysis proves nonpositive. Order is the published case order.
HARD_CASES = {
    4: [("+-+-", 3), ("+--+", 1), ("--++", 4)],
    5: [
        ("+-+--", 3), ("+--+-", 1), ("+---+", 1), ("-+-+-", 4), ("--++-", 4),
        ("--+-+", 5), ("---++", 5), ("--+++", 5), ("-+-++", 5), ("+--++", 1),
        ("+-+-+", 1), ("+-++-", 4), ("++-+-", 2),
    ],
}


def normalize_pattern(pattern: str) -> str:
    p = pattern.strip().strip("()").replace(" ", "").replace("−", "-")
    if not p or set(p) - {"+", "-"}:
        raise InputError(f"sign pattern must consist of '+' and '-', got {pattern!r}")
    return p


@dataclass(frozen=True)
class UpperRestriction:
    ys: np.ndarray        # (N, 2, 2)
    cs: np.ndarray        # (N, 2, 2)
    p0: np.ndarray        # (2, 2)
    partials: np.ndarray  # (N + 1, 2, 2): P_0 = P_1 = P, P_l = P + C_1 + ... + C_{l-1}
    ds: np.ndarray        # (N,): d_l = <cof C_l, P_l>

    @property
    def N(self) -> int:
        return self.ys.shape[0]

    def shifted(self) -> "UpperRestriction":
        """The same restriction translated by -P, so that P = 0."""
        return _build_restriction(self.ys - self.p0, self.cs, np.zeros((2, 2)))


def _build_restriction(ys, cs, p0) -> UpperRestriction:
    N = cs.shape[0]
    partials = np.empty((N + 1, 2, 2))
    partials[0] = p0
    partials[1:] = p0 + np.cumsum(cs, axis=0) - cs
    ds = inner(cof(cs), partials[1:])
    return UpperRestriction(ys, cs, p0, partials, ds)


def restrict_upper(config: TnConfiguration, params: Optional[SpectralParams] = None,
                   sym_tol: float = SYM_TOL) -> UpperRestriction:
    """Restrict a 3x2 configuration to its first two rows.

    Raises StructureError when an upper leg is not symmetric, since then the
    configuration cannot come from K_a. ``params`` is accepted for symmetry with
    the other operations; the restriction itself does not depend on it.
    """
    if config.shape != (3, 2):
        raise StructureError(f"not a 3x2 configuration (shape {config.shape})")
    if params is not None and params.N != config.N:
        raise InputError("params and configuration disagree on N")
    cs = config.legs[:, :2, :2]
    asym = np.abs(cs - np.swapaxes(cs, -1, -2)).max(axis=(-2, -1))
    size = np.maximum(1.0, np.abs(cs).max(axis=(-2, -1)))
    bad = np.nonzero(asym > sym_tol * size)[0]
    if bad.size:
        raise StructureError(f"upper part of leg {bad[0] + 1} is not symmetric")
    return _build_restriction(config.points[:, :2, :2].copy(), cs.copy(), config.base[:2, :2].copy())


def restriction_residuals(ur: UpperRestriction, kappas) -> dict:
    """Residuals of the structural identities of the restriction, in the P = 0 frame.

    ``det_accumulation``: max_l |det(Y_l) - (d_1 + ... + d_{l-1} + k_l d_l)|;
    ``d_sum``: |sum_l d_l|; ``closing``: max |sum_l C_l|; ``rank``: max |det C_l|.
    """
    s = ur.shifted()
    k = np.asarray(kappas, dtype=float)
    acc = np.cumsum(s.ds) - s.ds + k * s.ds
    return {
        "det_accumulation": float(np.max(np.abs(det2(s.ys) - acc))),
        "d_sum": float(abs(s.ds.sum())),
        "closing": float(np.max(np.abs(s.cs.sum(axis=0)))),
        "rank": float(np.max(np.abs(det2(s.cs)))),
    }


def _index(i: int, N: int) -> int:
    if not 1 <= i <= N:
        raise IndexError(f"index {i} outside 1..{N}")
    return i - 1


def stars_direct(ur: UpperRestriction, tv: TVectors) -> np.ndarray:
    """All ``xi_i sum_j t^i_j (Y_j)_11 det(Y_j - Y_i)`` at once."""
    Y = ur.ys
    G = det2(Y[None, :, :, :] - Y[:, None, :, :])  # G[i, j] = det(Y_j - Y_i)
    return tv.xis * np.einsum("ij,j,ij->i", tv.t, Y[:, 0, 0], G)


def star_direct(ur: UpperRestriction, tv: TVectors, i: int) -> float:
    return float(stars_direct(ur, tv)[_index(i, ur.N)])


def star_intermediate(ur: UpperRestriction, params: SpectralParams, tv: TVectors,
                      kappas, i: int) -> float:
    """``xi_i sum_a k_a (k_a - 1) t^i_a (C_a)_11 <cof C_a, P_a - Y_i>``, in the P = 0 frame."""
    idx = _index(i, ur.N)
    s = ur.shifted()
    k = np.asarray(kappas, dtype=float)
    pairing = inner(cof(s.cs), s.partials[1:] - s.ys[idx])
    return float(tv.xis[idx] * np.sum(k * (k - 1) * tv.t[idx] * s.cs[:, 0, 0] * pairing))


def st_sequences(cs, lambdas, kappas):
    """The PSD-ordered sums S_beta (over alpha < beta) and T_beta (over alpha > beta)."""
    cs = np.asarray(cs, dtype=float)
    lam = np.asarray(lambdas, dtype=float)
    k = np.asarray(kappas, dtype=float)
    if not (cs.shape[0] == lam.size == k.size):
        raise InputError("cs, lambdas and kappas must have the same length")
    w = (k * (k - 1) * lam * cs[:, 0, 0])[:, None, None] * cof(cs)
    total = np.cumsum(w, axis=0)
    s_seq = total - w
    t_seq = total[-1] - total
    return s_seq, t_seq


def _final_terms(cs, mu, kappas, s_seq, t_seq, idx):
    """The individual summands of the final star expression for 0-based ``idx``."""
    sc = inner(s_seq, cs)
    tc = inner(t_seq, cs)
    k = kappas[idx]
    return np.concatenate([
        -mu * sc[:idx],
        tc[idx + 1:],
        [-mu * k * sc[idx], (1.0 - k) * tc[idx]],
    ])


def star_final(ur: UpperRestriction, params: SpectralParams, kappas, i: int) -> float:
    idx = _index(i, ur.N)
    k = np.asarray(kappas, dtype=float)
    s_seq, t_seq = st_sequences(ur.cs, params.lambdas, k)
    return float(_final_terms(ur.cs, params.mu, k, s_seq, t_seq, idx).sum())


def phi(flux: Flux, ui: float, vi: float, uj: float, vj: float, rtol: float = 1e-10) -> float:
    """``-(uj - ui)^2 (a(vj) + a(vi)) / 2``, cross-checked against its defining expansion."""
    ai, aj = float(flux.a(vi)), float(flux.a(vj))
    defining = (aj - ai) * (0.5 * uj * uj - 0.5 * ui * ui) - (uj - ui) * (uj * aj - ui * ai)
    closed = -0.5 * (uj - ui) ** 2 * (aj + ai)
    scale = max(abs(aj - ai) * 0.5 * (uj * uj + ui * ui), abs(uj - ui) * (abs(uj * aj) + abs(ui * ai)), 1e-300)
    if abs(defining - closed) > rtol * scale:
        raise ConsistencyError(f"phi mismatch: {defining!r} vs {closed!r}")
    return closed


def _fan(p: float, c: np.ndarray, k: np.ndarray) -> np.ndarray:
    return p + np.cumsum(c) - c + k * c


def scalar_sum_identities(p: float, q: float, c, d, params: SpectralParams,
                          tol: float = 1e-10) -> tuple:
    """Residuals of the linear and quadratic summation identities for scalar fans.

    With ``x_i = p + c_1 + ... + c_{i-1} + k_i c_i`` (and ``y`` likewise from ``q, d``)
    the linear identity reads ``sum_j t^i_j x_j = p + c_1 + ... + c_{i-1}`` and the
    quadratic one
    ``sum_j t^i_j x_j y_j = sum_j k_j (k_j - 1) t^i_j c_j d_j + c_<i d_<i + p d_<i + q c_<i + p q``
    where ``c_<i`` denotes ``c_1 + ... + c_{i-1}``.
    """
    c = np.asarray(c, dtype=float)
    d = np.asarray(d, dtype=float)
    if c.size != params.N or d.size != params.N:
        raise InputError("c and d need one entry per lambda")
    cscale = max(1.0, float(np.abs(c).max()))
    dscale = max(1.0, float(np.abs(d).max()))
    if abs(c.sum()) > tol * cscale * c.size or abs(d.sum()) > tol * dscale * d.size:
        raise PreconditionError("c and d must each sum to zero")
    k = k_coefficients(params)
    t = t_vectors(params).t
    x, y = _fan(p, c, k), _fan(q, d, k)
    c_before = np.cumsum(c) - c
    d_before = np.cumsum(d) - d
    res_lin = np.max(np.abs(t @ x - (p + c_before)))
    rhs = t @ (k * (k - 1) * c * d) + c_before * d_before + p * q + p * d_before + q * c_before
    res_quad = np.max(np.abs(t @ (x * y) - rhs))
    return float(res_lin), float(res_quad)


def sign_pattern(cs, tol: float = SIGN_TOL) -> str:
    """``+`` for PSD legs and ``-`` for NSD legs, read off the trace."""
    cs = np.asarray(cs, dtype=float)
    norms = np.linalg.norm(cs, axis=(-2, -1))
    scale = float(norms.max()) if norms.size else 0.0
    out = []
    for i, (C, nrm) in enumerate(zip(cs, norms)):
        tr = float(np.trace(C))
        if nrm <= tol * scale or scale == 0.0:
            raise AmbiguousSignError(f"leg {i + 1} is (numerically) zero")
        if abs(tr) <= tol * nrm:
            raise AmbiguousSignError(f"leg {i + 1} has no definite sign")
        out.append("+" if tr > 0 else "-")
    return "".join(out)


def general_rule(pattern: str) -> Optional[tuple]:
    """The general exclusion rule catching ``pattern`` and its witness index.

    Returns ``(rule, witness)`` with a 1-based witness (``None`` for the
    uniform-sign rule, which has no witness: such legs cannot sum to zero),
    or ``None`` when no general rule applies.
    """
    p = normalize_pattern(pattern)
    N = len(p)
    if N < 4:
        raise InputError("sign-pattern rules need N >= 4")
    if len(set(p)) == 1:
        return UNIFORM, None
    for s in "+-":
        if p.count(s) == 1:
            j0 = p.index(s) + 1
            if s == "+":
                return SINGLE_OUTLIER, j0
            return SINGLE_OUTLIER, (j0 - 1 if j0 > 1 else N)
    middle = p[1:N - 1]
    plus = len(middle) - len(middle.lstrip("+"))
    if plus >= 1 and set(middle[plus:]) <= {"-"}:
        return SPLIT_MIDDLE, plus + 1
    return None


def excluded_by_general(pattern: str) -> Optional[str]:
    hit = general_rule(pattern)
    return None if hit is None else hit[0]


def hard_cases(N: int) -> list:
    if N not in HARD_CASES:
        raise InputError(f"case tables exist only for N in {sorted(HARD_CASES)}")
    return [p for p, _ in HARD_CASES[N]]


def classify(pattern: str) -> tuple:
    """``(rule, witness, case_number)`` for a pattern; rule is None when uncovered."""
    p = normalize_pattern(pattern)
    hit = general_rule(p)
    if hit is not None:
        return hit[0], hit[1], None
    for number, (q, w) in enumerate(HARD_CASES.get(len(p), []), start=1):
        if q == p:
            return HARD, w, number
    return None, None, None


def enumerate_cases(N: int) -> list:
    """Every sign pattern of length N with its classification."""
    hard_cases(N)
    rows = []
    for signs in itertools.product("+-", repeat=N):
        p = "".join(signs)
        rule, witness, number = classify(p)
        rows.append((p, rule, witness, number))
    return rows


@dataclass
class StarCertificate:
    stars: np.ndarray
    s_seq: np.ndarray
    t_seq: np.ndarray
    pattern: str
    excluded_by: Optional[str]
    witness: Optional[int]
    case_number: Optional[int] = None
    witness_value: Optional[float] = None
    slack: float = 0.0
    scale: float = 0.0
    direct_stars: Optional[np.ndarray] = None
    in_ka: Optional[bool] = None
    snapped: bool = False
    snap_distance: float = 0.0
    residuals: dict = field(default_factory=dict)

    @property
    def inconclusive(self) -> bool:
        return self.excluded_by is None

    @property
    def witness_holds(self) -> Optional[bool]:
        if self.witness_value is None:
            return None
        return self.witness_value <= self.slack

    @property
    def positivity_holds(self) -> Optional[bool]:
        """All star values of the actual points strictly positive (beyond rounding)."""
        if self.direct_stars is None:
            return None
        return bool(np.all(self.direct_stars > self.slack))

    @property
    def contradiction(self) -> bool:
        """A nonpositive witness on points lying in K_a, where every star must be positive."""
        return bool(self.witness_holds and self.in_ka)

    def to_dict(self) -> dict:
        return {
            "pattern": self.pattern,
            "stars": [float(s) for s in self.stars],
            "direct_stars": None if self.direct_stars is None else [float(s) for s in self.direct_stars],
            "verdict": {
                "excluded_by": self.excluded_by,
                "witness_index": self.witness,
                "case_number": self.case_number,
                "witness_value": self.witness_value,
                "witness_nonpositive": self.witness_holds,
            },
            "slack": self.slack,
            "scale": self.scale,
            "in_ka": self.in_ka,
            "positivity_holds": self.positivity_holds,
            "contradiction": self.contradiction,
            "snapped": self.snapped,
            "snap_distance": self.snap_distance,
            "residuals": dict(self.residuals),
        }


def _certificate_from_restriction(ur: UpperRestriction, params: SpectralParams, kappas,
                                  slack_tol: float = SLACK_TOL) -> StarCertificate:
    k = np.asarray(kappas, dtype=float)
    s_seq, t_seq = st_sequences(ur.cs, params.lambdas, k)
    terms = [_final_terms(ur.cs, params.mu, k, s_seq, t_seq, i) for i in range(ur.N)]
    stars = np.array([t.sum() for t in terms])
    scale = max(float(np.abs(t).sum()) for t in terms)
    pattern = sign_pattern(ur.cs)
    rule, witness, number = classify(pattern)
    cert = StarCertificate(
        stars=stars, s_seq=s_seq, t_seq=t_seq, pattern=pattern,
        excluded_by=rule, witness=witness, case_number=number,
        slack=slack_tol * scale, scale=scale,
    )
    if witness is not None:
        cert.witness_value = float(stars[witness - 1])
    return cert


def case_certificate(config: TnConfiguration, params: SpectralParams,
                     slack_tol: float = SLACK_TOL) -> StarCertificate:
    """Evaluate every star_i of an exact 3x2 configuration and look up the witness."""
    ur = restrict_upper(config, params)
    cert = _certificate_from_restriction(ur, params, config.kappas, slack_tol)
    cert.direct_stars = stars_direct(ur, t_vectors(params))
    cert.residuals = restriction_residuals(ur, config.kappas)
    return cert


def snap_upper_legs(cs) -> tuple:
    """Nearest exact leg system: symmetric, rank one, closing.

    Each leg is replaced by its dominant eigen-component; then the scale of
    leg N-1 is re-solved from ``det(A + s v v^T) = 0`` (``A`` the sum of the
    first N-2 legs) so that leg N, set to close the sum, is again rank one.
    Returns ``(snapped_legs, max_entry_change)``.
    """
    cs = np.asarray(cs, dtype=float)
    N = cs.shape[0]
    sym = 0.5 * (cs + np.swapaxes(cs, -1, -2))
    w, V = np.linalg.eigh(sym)
    pick = np.argmax(np.abs(w), axis=1)
    e = w[np.arange(N), pick]
    vecs = V[np.arange(N), :, pick]
    out = e[:, None, None] * vecs[:, :, None] * vecs[:, None, :]
    A = out[: N - 2].sum(axis=0)
    vv = np.outer(vecs[N - 2], vecs[N - 2])
    denom = float(inner(cof(A), vv))
    if abs(denom) <= 1e-14 * max(1.0, float(np.abs(A).max())):
        raise StructureError("cannot repair the closing condition: degenerate leg directions")
    s = -float(det2(A)) / denom
    out[N - 2] = s * vv
    out[N - 1] = -(A + s * vv)
    return out, float(np.max(np.abs(out - cs)))


def certify_points(points, params: SpectralParams, flux: Optional[Flux] = None,
                   char_tol: float = REL_TOL, slack_tol: float = SLACK_TOL) -> StarCertificate:
    """Certificate for a (possibly approximate) 3x2 point set with its (mu, lambda).

    Exact configurations go through ``case_certificate``. Otherwise the legs are
    reconstructed without the characterization precondition, snapped to the
    nearest exact upper leg system, and the case analysis runs on that system;
    the ``direct_stars`` still come from the actual points, so a near-candidate
    from K_a shows both checks side by side.
    """
    P = np.asarray(points, dtype=float)
    if P.ndim != 3 or P.shape[1:] != (3, 2):
        raise StructureError(f"not a 3x2 configuration (shape {P.shape[1:]})")
    config = reconstruct(P, params, check=False)
    tv = t_vectors(params)
    exact = (characterization_residual(P, params) <= char_tol * det_scale(P)
             and validate_tn(config).ok)
    if exact:
        cert = case_certificate(config, params, slack_tol)
    else:
        raw = restrict_upper(config, params, sym_tol=1e-6)
        cs, dist = snap_upper_legs(raw.cs)
        k = config.kappas
        ys = raw.p0 + np.cumsum(cs, axis=0) - cs + k[:, None, None] * cs
        ur = _build_restriction(ys, cs, raw.p0)
        cert = _certificate_from_restriction(ur, params, k, slack_tol)
        cert.snapped, cert.snap_distance = True, dist
        cert.direct_stars = stars_direct(raw, tv)
        cert.residuals = restriction_residuals(ur, k)
    cert.residuals["characterization"] = characterization_residual(P, params)
    if flux is not None:
        cert.in_ka = all(is_in_ka(flux, X, tol=1e-9 * max(1.0, float(np.abs(X).max()))) for X in P)
    return cert
