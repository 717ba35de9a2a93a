"""Multi-start least-squares search for T_N configurations.

The objective is the squared characterization residual ``sum_Z ||A_Z^mu lam||^2``
(``lam`` normalized to unit 1-norm inside the objective) plus hinge penalties
keeping ``mu > 1``, ``lam > 0`` and the points apart. For K_a targets the
unknowns are the states ``(u_i, v_i)``, so every candidate lies in K_a exactly.

Each restart runs a Levenberg-Marquardt iteration with forward-difference
Jacobians. Restarts draw from independent Philox streams keyed by
``(seed, restart_index)``, so reports do not depend on execution order.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .certificate import certify_points
from .core import (
    SpectralParams,
    all_minors,
    characterization_passes,
    make_rng,
    reconstruct,
    validate_tn,
)
from .errors import AmbiguousSignError, InputError, PreconditionError, StructureError
from .ka import Flux, flux_from_spec, lift_many

log = logging.getLogger(__name__)

SUCCESS_THRESHOLD = 1e-8
NEAR_THRESHOLD = 1e-4
POLISH_THRESHOLD = 1e-6
POLISH_FACTOR = 10


@dataclass(frozen=True)
class FreeTarget:
    m: int = 2
    n: int = 2
    kind = "free"

    def to_spec(self) -> dict:
        return {"kind": "free", "m": self.m, "n": self.n}


@dataclass(frozen=True)
class KaTarget:
    flux: Flux
    kind = "ka"

    def to_spec(self) -> dict:
        return {"kind": "ka", "flux": self.flux.to_spec()}


@dataclass(frozen=True)
class Bounds:
    lo: float = -2.0
    hi: float = 2.0
    mu_max: float = 1e3

    def to_spec(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "mu_max": self.mu_max}


@dataclass(frozen=True)
class Penalties:
    eps_mu: float = 1e-3
    eps_lambda: float = 1e-2
    delta: float = 0.5  # minimum Frobenius distance between points


@dataclass(frozen=True)
class SearchProblem:
    N: int
    target: Union[FreeTarget, KaTarget]
    bounds: Bounds = Bounds()
    budget: int = 100
    max_iter: int = 300
    seed: int = 0
    penalties: Penalties = Penalties()

    def __post_init__(self):
        if self.N < 4:
            raise InputError("search needs N >= 4")
        if self.budget < 0 or self.max_iter < 1:
            raise InputError("budget must be >= 0 and max_iter >= 1")
        b = self.bounds
        if not (b.lo < b.hi and b.mu_max > 1 + self.penalties.eps_mu):
            raise InputError("empty search box")
        if isinstance(self.target, KaTarget):
            flux = self.target.flux
            if b.hi <= flux.lo or b.lo >= flux.hi:
                raise InputError("search box does not meet the flux domain")

    @property
    def n_coords(self) -> int:
        if isinstance(self.target, KaTarget):
            return 2 * self.N
        return self.N * self.target.m * self.target.n

    @property
    def n_unknowns(self) -> int:
        return self.n_coords + 1 + self.N

    def coord_bounds(self) -> tuple:
        """Box for the coordinate block; v-components are kept inside the flux domain."""
        lo = np.full(self.n_coords, self.bounds.lo)
        hi = np.full(self.n_coords, self.bounds.hi)
        if isinstance(self.target, KaTarget):
            flux = self.target.flux
            v_lo, v_hi = _v_range(flux, self.bounds)
            lo[1::2], hi[1::2] = v_lo, v_hi
        return lo, hi

    def to_spec(self) -> dict:
        return {
            "N": self.N,
            "target": self.target.to_spec(),
            "bounds": self.bounds.to_spec(),
            "budget": self.budget,
            "max_iter": self.max_iter,
            "seed": self.seed,
            "penalties": {
                "eps_mu": self.penalties.eps_mu,
                "eps_lambda": self.penalties.eps_lambda,
                "delta": self.penalties.delta,
            },
        }


def _v_range(flux: Flux, bounds: Bounds) -> tuple:
    lo, hi = bounds.lo, bounds.hi
    if math.isfinite(flux.lo):
        # keep a margin from an open endpoint such as -1 for shifted powers
        lo = max(lo, flux.lo + 0.1 * min(1.0, hi - flux.lo))
    if math.isfinite(flux.hi):
        hi = min(hi, flux.hi)
    return lo, hi


def problem_from_spec(doc: dict) -> SearchProblem:
    if not isinstance(doc, dict):
        raise InputError("problem document must be an object")
    try:
        N = int(doc["N"])
        tspec = doc["target"]
        kind = tspec["kind"]
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"problem document is missing a field: {exc}") from exc
    if kind == "free":
        target = FreeTarget(int(tspec.get("m", 2)), int(tspec.get("n", 2)))
        if target.m < 2 or target.n < 2:
            raise InputError("free target needs m, n >= 2")
    elif kind == "ka":
        target = KaTarget(flux_from_spec(tspec.get("flux", {"kind": "exp"})))
    else:
        raise InputError(f"unknown target kind {kind!r}")
    b = doc.get("bounds", {}) or {}
    p = doc.get("penalties", {}) or {}
    try:
        return SearchProblem(
            N=N,
            target=target,
            bounds=Bounds(float(b.get("lo", -2.0)), float(b.get("hi", 2.0)), float(b.get("mu_max", 1e3))),
            budget=int(doc.get("budget", 100)),
            max_iter=int(doc.get("max_iter", 300)),
            seed=int(doc.get("seed", 0)),
            penalties=Penalties(float(p.get("eps_mu", 1e-3)), float(p.get("eps_lambda", 1e-2)),
                                float(p.get("delta", 0.5))),
        )
    except (TypeError, ValueError) as exc:
        raise InputError(f"bad problem field: {exc}") from exc


def _points_of(problem: SearchProblem, coords: np.ndarray) -> np.ndarray:
    if isinstance(problem.target, KaTarget):
        return lift_many(problem.target.flux, coords[0::2], coords[1::2])
    return coords.reshape(problem.N, problem.target.m, problem.target.n)


def _split(problem: SearchProblem, x: np.ndarray) -> tuple:
    nc = problem.n_coords
    return x[:nc], x[nc], x[nc + 1:]


def _residual_batch(points: np.ndarray, mu: np.ndarray, lambdas: np.ndarray,
                    penalties: Penalties) -> np.ndarray:
    """Residual vectors for a batch: points (B, N, m, n), mu (B,), lambdas (B, N)."""
    B, N, m, n = points.shape
    lam = lambdas / np.sum(np.abs(lambdas), axis=1, keepdims=True)
    upper = np.triu(np.ones((N, N)), 1)
    W = upper[None] + mu[:, None, None] * upper.T[None]
    diff = points[:, None, :, :, :] - points[:, :, None, :, :]  # X_j - X_i at [i, j]
    blocks = []
    for Z in all_minors(m, n):
        (r1, r2), (c1, c2) = Z
        d = (diff[..., r1 - 1, c1 - 1] * diff[..., r2 - 1, c2 - 1]
             - diff[..., r1 - 1, c2 - 1] * diff[..., r2 - 1, c1 - 1])
        blocks.append(np.einsum("bij,bj->bi", W * d, lam))
    iu = np.triu_indices(N, 1)
    dist = np.sqrt(np.sum(diff[:, iu[0], iu[1]] ** 2, axis=(-2, -1)))
    return np.concatenate(
        blocks + [
            np.maximum(0.0, 1.0 + penalties.eps_mu - mu)[:, None],
            np.maximum(0.0, penalties.eps_lambda - lam),
            np.maximum(0.0, penalties.delta - dist),
        ],
        axis=1,
    )


def residual_vector(points: np.ndarray, mu: float, lambdas: np.ndarray,
                    penalties: Penalties = Penalties()) -> np.ndarray:
    P = np.asarray(points, dtype=float)
    lam = np.asarray(lambdas, dtype=float)
    return _residual_batch(P[None], np.array([float(mu)]), lam[None], penalties)[0]


def residual(points, params, penalties: Penalties = Penalties()) -> float:
    """Squared characterization residual plus hinge penalties.

    ``params`` may be a SpectralParams or a raw ``(mu, lambdas)`` pair; raw
    values need not satisfy ``mu > 1``/``lambda > 0`` (the hinges price that).
    """
    mu, lam = (params.mu, params.lambdas) if isinstance(params, SpectralParams) else params
    r = residual_vector(points, float(mu), np.asarray(lam, dtype=float), penalties)
    return float(r @ r)


def _objective_batch(problem: SearchProblem, X: np.ndarray) -> np.ndarray:
    nc = problem.n_coords
    coords = X[:, :nc]
    if isinstance(problem.target, KaTarget):
        points = lift_many(problem.target.flux, coords[:, 0::2], coords[:, 1::2])
    else:
        points = coords.reshape(-1, problem.N, problem.target.m, problem.target.n)
    return _residual_batch(points, X[:, nc], X[:, nc + 1:], problem.penalties)


def _box(problem: SearchProblem) -> tuple:
    lo_c, hi_c = problem.coord_bounds()
    N = problem.N
    lo = np.concatenate([lo_c, [1.0 + problem.penalties.eps_mu], np.full(N, 1e-12)])
    hi = np.concatenate([hi_c, [problem.bounds.mu_max], np.full(N, np.inf)])
    return lo, hi


def sample_start(problem: SearchProblem, restart_index: int) -> np.ndarray:
    """Deterministic start for one restart: uniform coordinates, log-uniform mu, flat-simplex lambda."""
    rng = make_rng(_restart_seed(problem, restart_index))
    lo, hi = problem.coord_bounds()
    coords = rng.uniform(lo, hi)
    mu_hi = min(100.0, problem.bounds.mu_max)
    mu = float(np.exp(rng.uniform(np.log(1.01), np.log(mu_hi))))
    lam = rng.dirichlet(np.ones(problem.N))
    return np.concatenate([coords, [mu], lam])


def _restart_seed(problem: SearchProblem, restart_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(problem.seed, spawn_key=(restart_index,))


@dataclass
class LocalResult:
    points: np.ndarray
    mu: float
    lambdas: np.ndarray
    residual: float
    iterations: int
    status: str

    @property
    def params(self) -> Optional[SpectralParams]:
        try:
            return SpectralParams(self.mu, self.lambdas)
        except InputError:
            return None


def _fd_jacobian(problem: SearchProblem, x: np.ndarray, r: np.ndarray, hi: np.ndarray) -> np.ndarray:
    h = 1e-7 * np.maximum(1.0, np.abs(x))
    h = np.where(x + h > hi, -h, h)  # step backwards at the upper face
    X = x[None, :] + np.diag(h)
    return ((_objective_batch(problem, X) - r[None, :]) / h[:, None]).T


def local_solve(problem: SearchProblem, start: np.ndarray) -> LocalResult:
    """Damped Gauss-Newton (Levenberg-Marquardt) from ``start`` within the box.

    Stops when an accepted step improves the objective by less than 1e-14
    relative (or it drops below 1e-30), when the damping blows up, or at the
    iteration cap. A run that reaches the cap within POLISH_THRESHOLD is
    extended to POLISH_FACTOR times the cap, since convergence next to a
    penalty face is slow.
    """
    x = np.asarray(start, dtype=float).copy()
    lo, hi = _box(problem)
    if x.shape != lo.shape:
        raise InputError(f"start has {x.size} unknowns, problem needs {lo.size}")
    if np.any(x < lo) or np.any(x > hi):
        raise PreconditionError("start lies outside the search bounds")

    def fun(y):
        return _objective_batch(problem, y[None])[0]

    nc = problem.n_coords
    r = fun(x)
    f = float(r @ r)
    status = "max_iter"
    damping = None
    it = 0
    if not math.isfinite(f):
        status = "non_finite"
    cap = problem.max_iter
    while status == "max_iter":
        if it >= cap:
            if cap == problem.max_iter and f <= POLISH_THRESHOLD:
                cap = POLISH_FACTOR * problem.max_iter
                continue
            break
        it += 1
        J = _fd_jacobian(problem, x, r, hi)
        if not np.all(np.isfinite(J)):
            status = "non_finite"
            break
        JtJ = J.T @ J
        g = J.T @ r
        diag = np.maximum(np.diag(JtJ), 1e-12)
        if damping is None:
            damping = 1e-3 * float(diag.max())
        accepted = False
        while not accepted:
            try:
                step = np.linalg.solve(JtJ + damping * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                step = None
            if step is not None:
                x_new = np.clip(x + step, lo, hi)
                x_new[nc + 1:] /= x_new[nc + 1:].sum()
                r_new = fun(x_new)
                f_new = float(r_new @ r_new)
                if math.isfinite(f_new) and f_new < f:
                    accepted = True
                    break
            damping *= 4.0
            if damping > 1e20 * max(1.0, float(diag.max())):
                status = "stalled"
                break
        if not accepted:
            break
        improvement = f - f_new
        x, r, f = x_new, r_new, f_new
        damping = max(damping / 3.0, 1e-15 * float(diag.max()))
        if f < 1e-30:
            status = "converged"
        elif improvement < 1e-14 * max(f + improvement, 1e-300):
            status = "stagnated"
    coords, mu, lam = _split(problem, x)
    return LocalResult(_points_of(problem, coords), float(mu), lam / lam.sum(), f, it, status)


@dataclass
class RestartTrace:
    restart: int
    seed: int
    residual: float
    iterations: int
    status: str
    validated: Optional[bool] = None
    witness_value: Optional[float] = None
    contradiction: Optional[bool] = None
    note: str = ""

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class SearchReport:
    problem: SearchProblem
    best_residual: float = math.inf
    best: Optional[LocalResult] = None
    best_restart: Optional[int] = None
    trace: list = field(default_factory=list)
    certificate: Optional[object] = None
    defects: list = field(default_factory=list)

    @property
    def success(self) -> bool:
        """A validated candidate at or below the success threshold exists."""
        return any(t.validated for t in self.trace if t.residual <= SUCCESS_THRESHOLD)

    @property
    def near_candidates(self) -> list:
        return [t for t in self.trace if t.residual <= NEAR_THRESHOLD]

    def to_dict(self) -> dict:
        best = None
        if self.best is not None:
            best = {
                "restart": self.best_restart,
                "m": int(self.best.points.shape[1]),
                "n": int(self.best.points.shape[2]),
                "N": int(self.best.points.shape[0]),
                "points": self.best.points.tolist(),
                "mu": self.best.mu,
                "lambdas": self.best.lambdas.tolist(),
            }
            if isinstance(self.problem.target, KaTarget):
                best["states"] = [[float(X[0, 1]), float(X[1, 1])] for X in self.best.points]
                best["flux"] = self.problem.target.flux.to_spec()
        return {
            "problem": self.problem.to_spec(),
            "success": self.success,
            "best_residual": self.best_residual,
            "best_candidate": best,
            "trace": [t.to_dict() for t in self.trace],
            "certificate": None if self.certificate is None else self.certificate.to_dict(),
            "defects": list(self.defects),
        }


def _run_restart(problem: SearchProblem, index: int) -> tuple:
    start = sample_start(problem, index)
    seed = int(_restart_seed(problem, index).generate_state(1)[0])
    try:
        res = local_solve(problem, start)
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        return index, seed, None, f"aborted: {exc}"
    return index, seed, res, ""


def _certify(problem: SearchProblem, res: LocalResult):
    params = res.params
    if params is None:
        raise StructureError("candidate (mu, lambda) left the admissible region")
    return certify_points(res.points, params, flux=problem.target.flux)


def multi_start(problem: SearchProblem, workers: int = 1) -> SearchReport:
    """Run ``problem.budget`` independent restarts and merge them.

    The merge is a min-reduction over residuals (ties go to the lower restart
    index) plus the trace sorted by restart index, so serial and parallel runs
    agree. Candidates at or below the success threshold are reconstructed and
    validated; a residual-only success that fails validation is a defect.
    For K_a targets every near-candidate is certified and the best candidate's
    certificate is attached.
    """
    report = SearchReport(problem)
    indices = range(problem.budget)
    if workers > 1 and problem.budget > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_restart, [problem] * problem.budget, indices))
    else:
        outcomes = [_run_restart(problem, i) for i in indices]
    outcomes.sort(key=lambda o: o[0])

    is_ka = isinstance(problem.target, KaTarget)
    best_key = None
    for index, seed, res, note in outcomes:
        if res is None:
            report.trace.append(RestartTrace(index, seed, math.inf, 0, "aborted", note=note))
            continue
        tr = RestartTrace(index, seed, res.residual, res.iterations, res.status)
        if res.residual <= SUCCESS_THRESHOLD:
            tr.validated = _validates(res)
            if not tr.validated:
                report.defects.append(f"restart {index}: residual {res.residual:.3e} but reconstruction fails validation")
        if is_ka and res.residual <= NEAR_THRESHOLD:
            try:
                cert = _certify(problem, res)
                tr.witness_value = cert.witness_value
                tr.contradiction = cert.contradiction
            except (StructureError, AmbiguousSignError) as exc:
                tr.note = f"certificate unavailable: {exc}"
        report.trace.append(tr)
        # defects rank after every sound candidate
        key = (tr.validated is False, res.residual)
        if report.best is None or key < best_key:
            best_key = key
            report.best_residual, report.best, report.best_restart = res.residual, res, index

    if is_ka and report.best is not None:
        try:
            report.certificate = _certify(problem, report.best)
        except (StructureError, AmbiguousSignError) as exc:
            log.info("no certificate for best candidate: %s", exc)
    return report


def _validates(res: LocalResult) -> bool:
    params = res.params
    if params is None or not characterization_passes(res.points, params):
        return False
    return validate_tn(reconstruct(res.points, params)).ok
