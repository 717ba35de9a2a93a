"""Acceptance suite: one recorded pass/fail line per criterion.

Tolerances, seeds and time limits are pinned below. The lines are printed in
the pytest terminal summary under "acceptance criteria".
"""
import math
import time

import numpy as np
import pytest

from conftest import DIAG_LEGS, DIAG_POINTS, record
from tnconf.certificate import (
    HARD,
    case_certificate,
    enumerate_cases,
    hard_cases,
    restrict_upper,
    scalar_sum_identities,
    stars_direct,
    star_final,
    star_intermediate,
)
from tnconf.core import (
    SpectralParams,
    TnConfiguration,
    check_characterization,
    generate_random,
    k_coefficients,
    reconstruct,
    t_vectors,
    validate_tn,
)
from tnconf.ka import ExpFlux, ShiftedPowerFlux, inclusion_inequality
from tnconf.search import (
    NEAR_THRESHOLD,
    SUCCESS_THRESHOLD,
    FreeTarget,
    KaTarget,
    SearchProblem,
    multi_start,
)

CORPUS_SIZE = 1000
STAR_REL_TOL = 1e-8
WITNESS_TOL = 1e-10
IDENTITY_TOL = 1e-10
HAND_TOL = 1e-12
GOLDEN_TOL = 1e-12
SPOT_TOL = 1e-9
INCLUSION_PAIRS = 10_000
SEARCH_SEED = 42

HARD_4 = ["+-+-", "+--+", "--++"]
HARD_5 = ["+-+--", "+--+-", "+---+", "-+-+-", "--++-", "--+-+", "---++",
          "--+++", "-+-++", "+--++", "+-+-+", "+-++-", "++-+-"]


@pytest.fixture(scope="module")
def corpus():
    """Star values and certificates for CORPUS_SIZE generated configurations per N."""
    out = {}
    for N in (4, 5):
        t0 = time.perf_counter()
        rows = []
        for seed in range(CORPUS_SIZE):
            config, params = generate_random(N, seed=seed)
            ur = restrict_upper(config, params)
            tv = t_vectors(params)
            direct = stars_direct(ur, tv)
            inter = np.array([star_intermediate(ur, params, tv, config.kappas, i) for i in range(1, N + 1)])
            final = np.array([star_final(ur, params, config.kappas, i) for i in range(1, N + 1)])
            rows.append((direct, inter, final, case_certificate(config, params)))
        out[N] = (rows, time.perf_counter() - t0)
    return out


def test_criterion_1_case_tables():
    t0 = time.perf_counter()
    ok = True
    details = []
    for N, expected in ((4, HARD_4), (5, HARD_5)):
        rows = enumerate_cases(N)
        hard = [p for p, rule, _, _ in rows if rule == HARD]
        uncovered = [p for p, rule, _, _ in rows if rule is None]
        good = len(rows) == 2 ** N and sorted(hard) == sorted(expected) and not uncovered
        good &= hard_cases(N) == expected
        ok &= good
        details.append(f"N={N}: {len(rows)} patterns, {len(hard)} hard")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 1.0
    record(1, "case-table fidelity", ok, "; ".join(details) + f"; {elapsed:.3f} s")
    assert ok


def test_criterion_2_star_equality(corpus):
    worst = 0.0
    elapsed = 0.0
    for N, (rows, dt) in corpus.items():
        elapsed += dt
        for direct, inter, final, _ in rows:
            scale = 1.0 + np.abs(direct)
            worst = max(worst, float(np.max(np.abs(direct - inter) / scale)),
                        float(np.max(np.abs(direct - final) / scale)))
    ok = worst <= STAR_REL_TOL and elapsed < 30.0
    record(2, "three-way star equality", ok,
           f"max scaled gap {worst:.2e} <= {STAR_REL_TOL:g}; {2 * CORPUS_SIZE} configs in {elapsed:.1f} s")
    assert ok


def test_criterion_3_witness_nonpositive(corpus):
    violations = 0
    checked = 0
    for N, (rows, _) in corpus.items():
        for _, _, _, cert in rows:
            if cert.excluded_by is None:
                violations += 1
                continue
            if cert.witness is None:
                continue  # uniform sign: never produced by a closing leg system
            checked += 1
            if not cert.witness_value <= WITNESS_TOL * cert.scale:
                violations += 1
    ok = violations == 0 and checked == 2 * CORPUS_SIZE
    record(3, "witness nonpositivity", ok, f"{checked} witnesses checked, {violations} violations")
    assert ok


def test_criterion_4_scalar_identities():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for N in (4, 5, 6):
        for _ in range(1000):
            params = SpectralParams(float(np.exp(rng.uniform(0.01, np.log(100.0)))), rng.uniform(0.05, 1.0, N))
            c = rng.normal(size=N)
            c -= c.mean()
            d = rng.normal(size=N)
            d -= d.mean()
            p, q = rng.normal(size=2)
            k = k_coefficients(params)
            scale = (1 + abs(p) + np.abs(k * c).max()) * (1 + abs(q) + np.abs(k * d).max())
            lin, quad = scalar_sum_identities(p, q, c, d, params)
            worst = max(worst, lin / scale, quad / scale)
    params = SpectralParams(2.0, np.full(4, 0.25))
    k = k_coefficients(params)
    c = np.array([1.0, -1.0, 2.0, -2.0])
    d = np.array([1.0, 1.0, -1.0, -1.0])
    x = np.cumsum(c) - c + k * c
    y = np.cumsum(d) - d + k * d
    t1 = t_vectors(params).t[0]
    lhs, rhs = float(t1 @ (x * y)), float(t1 @ (k * (k - 1) * c * d))
    hand = (np.allclose(k, [5, 6, 7, 8], rtol=0, atol=HAND_TOL)
            and abs(lhs - 4.5) <= HAND_TOL and abs(rhs - 4.5) <= HAND_TOL)
    ok = worst <= IDENTITY_TOL and hand
    record(4, "summation identities", ok,
           f"max scaled residual {worst:.2e}; hand instance {lhs!r} / {rhs!r}")
    assert ok


def test_criterion_5_golden_certificate():
    config = TnConfiguration(DIAG_POINTS, np.zeros((2, 2)), DIAG_LEGS, np.full(4, 2.0))
    params = SpectralParams(16.0, np.array([1.0, 2.0, 4.0, 8.0]) / 15.0)
    res = check_characterization(DIAG_POINTS, params)
    rebuilt = reconstruct(DIAG_POINTS, params)
    ok = (validate_tn(config).ok and res <= GOLDEN_TOL
          and np.allclose(k_coefficients(params), 2.0, rtol=0, atol=GOLDEN_TOL)
          and np.allclose(rebuilt.base, 0.0, atol=GOLDEN_TOL)
          and np.allclose(rebuilt.legs, DIAG_LEGS, atol=GOLDEN_TOL)
          and validate_tn(rebuilt).ok)
    record(5, "golden diagonal T4", ok, f"characterization residual {res:.1e}")
    assert ok


def test_criterion_6_inclusion_inequality():
    rng = np.random.default_rng(31)
    failures = 0
    for flux, lo, hi in ((ExpFlux(), -4.0, 4.0), (ShiftedPowerFlux(2.0), -0.99, 4.0)):
        for _ in range(INCLUSION_PAIRS):
            vi, vj = rng.uniform(lo, hi, 2)
            if vi != vj and not inclusion_inequality(flux, vi, vj).holds:
                failures += 1
    e = math.e
    r = inclusion_inequality(ExpFlux(), 0.0, 1.0)
    s = inclusion_inequality(ShiftedPowerFlux(2.0), 0.0, 1.0)
    spots = (abs(r.lhs - (e - 2) * (e - 1)) <= SPOT_TOL and abs(r.rhs - (e - 1) ** 2 / 2) <= SPOT_TOL
             and abs(s.lhs - 4.0) <= SPOT_TOL and abs(s.rhs - 4.5) <= SPOT_TOL)
    ok = failures == 0 and spots
    record(6, "inclusion inequality", ok,
           f"{failures} failures in 2x{INCLUSION_PAIRS} pairs; exp spot {r.lhs:.7f} / {r.rhs:.7f}")
    assert ok


def test_criterion_7_search_positive_control():
    t0 = time.perf_counter()
    report = multi_start(SearchProblem(4, FreeTarget(2, 2), budget=100, seed=SEARCH_SEED))
    elapsed = time.perf_counter() - t0
    sound = [t for t in report.trace if t.residual <= SUCCESS_THRESHOLD and t.validated]
    ok = bool(sound) and report.success and elapsed < 60.0
    record(7, "search positive control", ok,
           f"{len(sound)} validated restarts, best {report.best_residual:.1e}, "
           f"{len(report.defects)} reported defects, {elapsed:.1f} s")
    assert ok


def test_criterion_8_search_negative_evidence():
    t0 = time.perf_counter()
    parts = []
    ok = True
    for N in (4, 5):
        report = multi_start(SearchProblem(N, KaTarget(ExpFlux()), budget=200, seed=SEARCH_SEED))
        hits = [t for t in report.trace if t.residual <= SUCCESS_THRESHOLD]
        near = report.near_candidates
        missing = [t.restart for t in near if not t.contradiction]
        ok &= not hits and not missing
        parts.append(f"N={N}: best {report.best_residual:.2e}, {len(near)} near, "
                     f"{len(near) - len(missing)} contradictions")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 300.0
    record(8, "search negative evidence", ok, "; ".join(parts) + f"; {elapsed:.0f} s")
    assert ok
    assert NEAR_THRESHOLD == 1e-4
