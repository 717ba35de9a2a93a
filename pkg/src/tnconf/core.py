"""T_N configurations in R^{m x n}: representation, validation, characterization.

Points are stored as a float array of shape ``(N, m, n)``. Indices into the
configuration (``i`` in ``t_vectors(...).t[i]``) are 0-based here; the
certificate module exposes 1-based witness indices because those are what the
case tables are written in.

A configuration is the data ``(Q, D_1..D_N, k_1..k_N)`` with rank-one legs
``D_i`` summing to zero and points ``X_i = Q + D_1 + ... + D_{i-1} + k_i D_i``.
The same point set is characterized by a pair ``(mu, lambda)`` with ``mu > 1``
and ``lambda > 0`` such that ``A_Z^mu lambda = 0`` for every 2x2 minor ``Z``.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import GenerationError, InputError, PreconditionError

log = logging.getLogger(__name__)

RANK_TOL = 1e-9
REL_TOL = 1e-8
DISTINCT_TOL = 1e-6


class MinorIndex(NamedTuple):
    """Row pair and column pair (1-based, strictly increasing) of a 2x2 minor."""

    rows: tuple
    cols: tuple

    def check(self, m: int, n: int) -> None:
        (i1, i2), (j1, j2) = self.rows, self.cols
        if not (1 <= i1 < i2 <= m and 1 <= j1 < j2 <= n):
            raise IndexError(f"minor {self} out of bounds for a {m}x{n} matrix")


Z12 = MinorIndex((1, 2), (1, 2))
Z13 = MinorIndex((1, 3), (1, 2))
Z23 = MinorIndex((2, 3), (1, 2))


def all_minors(m: int, n: int) -> list[MinorIndex]:
    """Every element of A_2 for m x n matrices, in lexicographic order."""
    return [
        MinorIndex(r, c)
        for r in itertools.combinations(range(1, m + 1), 2)
        for c in itertools.combinations(range(1, n + 1), 2)
    ]


def as_matrix(M, name: str = "matrix") -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.size == 0:
        raise InputError(f"{name} must be a non-empty 2-d array, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InputError(f"{name} has non-finite entries")
    return M


def as_points(points, name: str = "points") -> np.ndarray:
    """Coerce a sequence of equally shaped matrices into an ``(N, m, n)`` array."""
    try:
        P = np.asarray(points, dtype=float)
    except ValueError as exc:  # ragged input
        raise InputError(f"{name}: matrices do not share a common shape") from exc
    if P.ndim != 3 or 0 in P.shape:
        raise InputError(f"{name} must have shape (N, m, n), got {P.shape}")
    if not np.all(np.isfinite(P)):
        raise InputError(f"{name} has non-finite entries")
    return P


def cof(A: np.ndarray) -> np.ndarray:
    """Cofactor matrix of a 2x2 matrix (the adjugate), acting on the last two axes."""
    A = np.asarray(A, dtype=float)
    out = np.empty_like(A)
    out[..., 0, 0] = A[..., 1, 1]
    out[..., 0, 1] = -A[..., 0, 1]
    out[..., 1, 0] = -A[..., 1, 0]
    out[..., 1, 1] = A[..., 0, 0]
    return out


def det2(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    return A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]


def inner(A, B) -> np.ndarray:
    """Hilbert-Schmidt product over the last two axes."""
    return np.sum(np.asarray(A) * np.asarray(B), axis=(-2, -1))


def rank_le_one(M, rank_tol: float = RANK_TOL) -> bool:
    """True iff the second singular value is at most ``rank_tol * max(1, sigma_1)``."""
    M = as_matrix(M)
    if rank_tol <= 0:
        raise InputError("rank_tol must be positive")
    s = np.linalg.svd(M, compute_uv=False)
    if s.size < 2:
        return True
    return bool(s[1] <= rank_tol * max(1.0, s[0]))


def _submatrix(M: np.ndarray, Z: MinorIndex) -> np.ndarray:
    rows = [Z.rows[0] - 1, Z.rows[1] - 1]
    cols = [Z.cols[0] - 1, Z.cols[1] - 1]
    return M[..., rows, :][..., :, cols]


def minor_det(M, Z: MinorIndex) -> float:
    M = as_matrix(M)
    Z = MinorIndex(tuple(Z[0]), tuple(Z[1]))
    Z.check(*M.shape)
    return float(det2(_submatrix(M, Z)))


def pairwise_minor_dets(points: np.ndarray, Z: MinorIndex) -> np.ndarray:
    """``G[i, j] = det(X_j^Z - X_i^Z)`` for all pairs (symmetric, zero diagonal)."""
    sub = _submatrix(points, Z)
    return det2(sub[None, :, :, :] - sub[:, None, :, :])


def _mu_weights(N: int, mu: float) -> np.ndarray:
    # 1 above the diagonal, mu below, 0 on it
    W = np.triu(np.ones((N, N)), 1)
    return W + mu * W.T


def assemble_AZ(points, Z: MinorIndex, mu: float) -> np.ndarray:
    """The N x N matrix A_Z^mu of minor determinant differences."""
    P = as_points(points)
    if P.shape[0] < 2:
        raise InputError("need at least two points")
    if not math.isfinite(mu):
        raise InputError("mu must be finite")
    Z = MinorIndex(tuple(Z[0]), tuple(Z[1]))
    Z.check(P.shape[1], P.shape[2])
    return _mu_weights(P.shape[0], mu) * pairwise_minor_dets(P, Z)


def _minor_stack(points: np.ndarray) -> np.ndarray:
    """Pairwise determinant tables for every Z in A_2, shape (|A_2|, N, N)."""
    return np.stack([pairwise_minor_dets(points, Z) for Z in all_minors(*points.shape[1:])])


def det_scale(points) -> float:
    """Largest |det(X_j^Z - X_i^Z)| over all pairs and minors."""
    P = as_points(points)
    return float(np.max(np.abs(_minor_stack(P))))


@dataclass(frozen=True)
class SpectralParams:
    mu: float
    lambdas: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=float).reshape(-1)
        if not (math.isfinite(self.mu) and self.mu > 1):
            raise InputError(f"mu must be a finite real > 1, got {self.mu}")
        if lam.size < 2 or not np.all(np.isfinite(lam)) or np.any(lam <= 0):
            raise InputError("lambdas must be at least two finite positive reals")
        object.__setattr__(self, "mu", float(self.mu))
        object.__setattr__(self, "lambdas", lam)

    @property
    def N(self) -> int:
        return self.lambdas.size

    def normalized(self) -> "SpectralParams":
        return SpectralParams(self.mu, self.lambdas / self.lambdas.sum())


@dataclass(frozen=True)
class TVectors:
    t: np.ndarray  # row i is t^{i+1}
    xis: np.ndarray


def t_vectors(params: SpectralParams) -> TVectors:
    N, mu, lam = params.N, params.mu, params.lambdas
    raw = np.where(np.tril(np.ones((N, N)), -1) > 0, mu * lam[None, :], lam[None, :])
    xis = raw.sum(axis=1)
    return TVectors(raw / xis[:, None], xis)


def k_coefficients(params: SpectralParams) -> np.ndarray:
    mu, lam = params.mu, params.lambdas
    head = np.cumsum(lam)
    tail = lam.sum() - head
    return (mu * head + tail) / ((mu - 1.0) * lam)


def characterization_residual(points, params: SpectralParams) -> float:
    """max over Z of ||A_Z^mu lambda||_inf, with lambda scaled to unit 1-norm."""
    P = as_points(points)
    if P.shape[0] != params.N:
        raise InputError(f"{P.shape[0]} points but {params.N} lambdas")
    lam = params.lambdas / params.lambdas.sum()
    A = _mu_weights(P.shape[0], params.mu)[None] * _minor_stack(P)
    return float(np.max(np.abs(A @ lam)))


def check_characterization(points, params: SpectralParams) -> float:
    return characterization_residual(points, params)


def characterization_passes(points, params: SpectralParams, char_tol: float = REL_TOL) -> bool:
    return characterization_residual(points, params) <= char_tol * det_scale(points)


def determinant_residual(points, params: SpectralParams) -> float:
    """max over i and Z of |sum_j t^i_j det(X_j^Z - X_i^Z)|."""
    P = as_points(points)
    t = t_vectors(params).t
    G = _minor_stack(P)  # (z, i, j)
    return float(np.max(np.abs(np.einsum("ij,zij->zi", t, G))))


def _stacked(G: np.ndarray, mu: float) -> np.ndarray:
    N = G.shape[1]
    return (_mu_weights(N, mu)[None] * G).reshape(-1, N)


def _golden_min(f, a: float, b: float, xtol: float = 1e-15, maxiter: int = 200) -> float:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(maxiter):
        if abs(b - a) <= xtol * max(1.0, abs(a) + abs(b)):
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return c if fc < fd else d


MU_GRID = np.geomspace(1.0 + 1e-6, 1e3, 64)


def characterize(points, char_tol: float = REL_TOL) -> Optional[SpectralParams]:
    """Search for (mu, lambda) certifying that ``points`` induce a T_N configuration.

    Scans mu over a log-spaced grid, refines each local minimum of the smallest
    singular value of the stacked system by golden-section search, and accepts
    the minimal right singular vector when it can be signed strictly positive.
    Returns ``None`` when nothing qualifies, and also for degenerate inputs whose
    points are pairwise rank-one connected (every minor difference vanishes,
    so any lambda is a null vector and the answer carries no information).
    """
    P = as_points(points)
    N = P.shape[0]
    if N < 2:
        raise InputError("need at least two points")
    G = _minor_stack(P)
    scale = float(np.max(np.abs(G)))
    point_scale = max(1.0, float(np.max(np.abs(P))))
    if scale <= 1e-12 * point_scale**2:
        log.debug("characterize: all minor differences vanish; degenerate point set")
        return None

    def smin(mu):
        return np.linalg.svd(_stacked(G, mu) / scale, compute_uv=False)[-1]

    values = np.array([smin(mu) for mu in MU_GRID])
    best = None
    for k in np.argsort(values):
        lo_k, hi_k = max(k - 1, 0), min(k + 1, len(MU_GRID) - 1)
        if values[k] > values[lo_k] or values[k] > values[hi_k]:
            continue  # not a local minimum
        mu = _golden_min(smin, MU_GRID[lo_k], MU_GRID[hi_k])
        if not mu > 1.0:
            continue
        vt = np.linalg.svd(_stacked(G, mu))[2]
        lam = vt[-1] * np.sign(vt[-1].sum() or 1.0)
        if np.any(lam <= 1e-12 * np.max(np.abs(lam))):
            continue
        params = SpectralParams(mu, lam / lam.sum())
        res = characterization_residual(P, params)
        if res <= char_tol * scale and (best is None or res < best[0]):
            best = (res, params)
    return None if best is None else best[1]


@dataclass(frozen=True)
class Tolerances:
    """Validation thresholds; relative ones are multiplied by the problem scale."""

    rank_tol: float = RANK_TOL
    closing_tol: float = REL_TOL
    eq_tol: float = REL_TOL
    distinct_tol: float = DISTINCT_TOL


@dataclass(frozen=True)
class TnConfiguration:
    points: np.ndarray
    base: np.ndarray
    legs: np.ndarray
    kappas: np.ndarray

    def __post_init__(self):
        points = as_points(self.points, "points")
        legs = as_points(self.legs, "legs")
        base = as_matrix(self.base, "base")
        kappas = np.asarray(self.kappas, dtype=float).reshape(-1)
        N = points.shape[0]
        if N < 2:
            raise InputError("a configuration needs N >= 2 points")
        if legs.shape != points.shape or base.shape != points.shape[1:]:
            raise InputError("points, legs and base must share one matrix shape")
        if kappas.size != N or not np.all(np.isfinite(kappas)):
            raise InputError("need one finite kappa per point")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "legs", legs)
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "kappas", kappas)

    @property
    def N(self) -> int:
        return self.points.shape[0]

    @property
    def shape(self) -> tuple:
        return self.points.shape[1:]

    def assembled_points(self) -> np.ndarray:
        """Q + D_1 + ... + D_{i-1} + k_i D_i for each i."""
        prefix = np.cumsum(self.legs, axis=0) - self.legs
        return self.base[None] + prefix + self.kappas[:, None, None] * self.legs


@dataclass
class ValidationReport:
    ok: bool
    rank_defects: list
    closing_residual: float
    equation_residuals: list
    distinctness: float
    kappas_ok: bool
    scale: float
    failures: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "rank_defects": list(self.rank_defects),
            "closing_residual": self.closing_residual,
            "equation_residuals": list(self.equation_residuals),
            "distinctness": self.distinctness,
            "kappas_ok": self.kappas_ok,
            "scale": self.scale,
            "failures": list(self.failures),
        }


def min_pairwise_distance(points: np.ndarray) -> float:
    P = np.asarray(points)
    diff = np.abs(P[:, None] - P[None, :]).max(axis=(-2, -1))
    iu = np.triu_indices(P.shape[0], 1)
    return float(diff[iu].min()) if iu[0].size else math.inf


def validate_tn(config: TnConfiguration, tols: Tolerances = Tolerances()) -> ValidationReport:
    legs, kappas = config.legs, config.kappas
    scale = max(
        1.0,
        float(np.max(np.abs(config.points))),
        float(np.max(np.abs(config.base))),
        float(np.max(np.abs(kappas[:, None, None] * legs))),
    )
    failures = []

    sv = np.linalg.svd(legs, compute_uv=False)
    rank_defects = [float(s[1]) if s.size > 1 else 0.0 for s in sv]
    for i, s in enumerate(sv):
        if s.size > 1 and s[1] > tols.rank_tol * max(1.0, s[0]):
            failures.append(f"leg {i + 1} has rank > 1 (sigma_2 = {s[1]:.3e})")

    kappas_ok = bool(np.all(kappas > 1.0))
    if not kappas_ok:
        failures.append(f"kappas must exceed 1, got min {kappas.min():.17g}")

    closing = float(np.max(np.abs(legs.sum(axis=0))))
    if closing > tols.closing_tol * scale:
        failures.append(f"closing condition violated (residual {closing:.3e})")

    eq = np.abs(config.points - config.assembled_points()).max(axis=(-2, -1))
    for i, r in enumerate(eq):
        if r > tols.eq_tol * scale:
            failures.append(f"point {i + 1} does not match its decomposition (residual {r:.3e})")

    dist = min_pairwise_distance(config.points)
    point_norm = max(float(np.max(np.abs(config.points))), np.finfo(float).tiny)
    if not dist > tols.distinct_tol * point_norm:
        failures.append(f"points not pairwise distinct (min distance {dist:.3e})")

    return ValidationReport(
        ok=not failures,
        rank_defects=rank_defects,
        closing_residual=closing,
        equation_residuals=[float(r) for r in eq],
        distinctness=dist,
        kappas_ok=kappas_ok,
        scale=scale,
        failures=failures,
    )


def reconstruct(points, params: SpectralParams, char_tol: float = REL_TOL,
                check: bool = True) -> TnConfiguration:
    """Recover (Q, D, k) from a characterized point set.

    ``sum_j t^i_j X_j`` equals ``Q + D_1 + ... + D_{i-1}``, so the first row gives
    ``Q`` and successive differences give the legs. With ``check=False`` the
    characterization precondition is skipped (used for near-candidates).
    """
    P = as_points(points)
    if check and not characterization_passes(P, params, char_tol):
        raise PreconditionError(
            "characterization residual "
            f"{characterization_residual(P, params):.3e} exceeds tolerance"
        )
    t = t_vectors(params).t
    partial = np.einsum("ij,jab->iab", t, P)
    legs = np.empty_like(P)
    legs[:-1] = np.diff(partial, axis=0)
    legs[-1] = -legs[:-1].sum(axis=0)
    return TnConfiguration(P, partial[0], legs, k_coefficients(params))


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator; ``seed`` may be an int or a SeedSequence."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.Philox(ss))


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _sample_upper_legs(rng, N: int, signs: Optional[str]):
    """Symmetric rank-one 2x2 legs summing to zero, with their unit directions."""
    for _ in range(50):
        dirs = [_unit(rng.normal(size=2)) for _ in range(N - 1)]
        cs = []
        for i in range(N - 2):
            sgn = (1.0 if signs[i] == "+" else -1.0) if signs else rng.choice([-1.0, 1.0])
            cs.append(sgn * rng.uniform(0.5, 2.0) * np.outer(dirs[i], dirs[i]))
        A = np.sum(cs, axis=0)
        vv = np.outer(dirs[-1], dirs[-1])
        denom = inner(cof(A), vv)
        if abs(denom) < 1e-3 * max(1.0, float(np.abs(A).max())):
            continue
        # det(A + s vv^T) = det A + s <cof A, vv^T> since det(vv^T) = 0
        s = -det2(A) / denom
        last = -(A + s * vv)
        size = np.linalg.norm(last)
        if not (0.1 <= abs(s) <= 20.0 and 0.1 <= size <= 20.0):
            continue
        if signs and ((s > 0) != (signs[N - 2] == "+") or (np.trace(last) > 0) != (signs[N - 1] == "+")):
            continue
        w, V = np.linalg.eigh(last)
        dirs.append(V[:, np.argmax(np.abs(w))])
        cs.append(s * vv)
        cs.append(last)
        return cs, dirs
    return None


def generate_random(N: int, shape=(3, 2), seed: int = 0, pattern: Optional[str] = None,
                    max_attempts: int = 100):
    """Sample a T_N configuration together with its certifying (mu, lambda).

    Upper 2x2 parts of the legs are symmetric rank-one matrices ``t_i r_i r_i^T``;
    the last two are fixed by the closing condition. Optional third-row
    components ``w_i`` satisfy ``sum_i w_i r_i = 0`` so every 3x2 leg ``[C_i; w_i r_i^T]``
    stays rank one and the legs close. ``pattern`` (a string of ``+``/``-``)
    requests the sign class of each upper leg.
    """
    m, n = shape
    if (m, n) not in ((2, 2), (3, 2)):
        raise InputError(f"unsupported shape {shape}; use (2, 2) or (3, 2)")
    if N < 4:
        raise InputError("generate_random needs N >= 4")
    if pattern is not None:
        pattern = pattern.replace("−", "-")
        if len(pattern) != N or set(pattern) - {"+", "-"} or len(set(pattern)) < 2:
            raise InputError(f"pattern must be {N} signs, not all equal")
    rng = make_rng(seed)
    for _ in range(max_attempts):
        mu = float(np.exp(rng.uniform(np.log(1.1), np.log(20.0))))
        lam = rng.uniform(0.1, 1.0, size=N)
        params = SpectralParams(mu, lam / lam.sum())
        kappas = k_coefficients(params)
        sampled = _sample_upper_legs(rng, N, pattern)
        if sampled is None:
            continue
        cs, dirs = sampled
        legs = np.zeros((N, m, n))
        legs[:, :2, :2] = cs
        if m == 3:
            w = np.zeros(N)
            w[: N - 2] = rng.normal(size=N - 2)
            rhs = -sum(w[i] * dirs[i] for i in range(N - 2))
            w[N - 2:] = np.linalg.solve(np.column_stack([dirs[N - 2], dirs[N - 1]]), rhs)
            for i in range(N):
                legs[i, 2, :] = w[i] * dirs[i]
        legs[-1] = -legs[:-1].sum(axis=0)
        base = rng.normal(size=(m, n))
        prefix = np.cumsum(legs, axis=0) - legs
        points = base[None] + prefix + kappas[:, None, None] * legs
        config = TnConfiguration(points, base, legs, kappas)
        if not validate_tn(config).ok:
            continue
        if not characterization_passes(points, params):
            continue
        return config, params
    raise GenerationError(f"no valid configuration after {max_attempts} attempts", seed)
