"""Command-line front end.

Exit codes: 0 ok/found, 1 invalid, 2 input error, 3 evaluation error,
4 not found. Human-readable text goes to stdout; documents go to ``--out``.
"""
from __future__ import annotations

import argparse
import sys

from . import certificate as cert_mod
from .core import (
    REL_TOL,
    Tolerances,
    characterization_passes,
    characterization_residual,
    characterize,
    generate_random,
    reconstruct,
    validate_tn,
)
from .errors import (
    AmbiguousSignError,
    ConsistencyError,
    InputError,
    PreconditionError,
    StructureError,
    TnError,
)
from .io import config_from_doc, config_to_doc, dumps, read_document, write_document
from .ka import flux_from_spec
from .search import KaTarget, multi_start, problem_from_spec

EXIT_OK, EXIT_INVALID, EXIT_INPUT, EXIT_EVAL, EXIT_NOT_FOUND = 0, 1, 2, 3, 4


def _fmt(x) -> str:
    return "n/a" if x is None else f"{x:.17g}"


def cmd_verify(path, tol=None) -> int:
    cd = config_from_doc(read_document(path))
    tols = Tolerances() if tol is None else Tolerances(closing_tol=tol, eq_tol=tol)
    char_tol = REL_TOL if tol is None else tol
    params = cd.params
    if params is None:
        params = characterize(cd.points, char_tol)
        if params is None:
            print("characterization: no (mu, lambda) found")
            print("verdict: invalid")
            return EXIT_INVALID
        print(f"characterization: found mu = {_fmt(params.mu)}")
    res = characterization_residual(cd.points, params)
    print(f"characterization residual: {res:.3e}")
    config = cd.config
    if config is None:
        try:
            config = reconstruct(cd.points, params, char_tol)
        except PreconditionError as exc:
            print(f"reconstruction refused: {exc}")
            print("verdict: invalid")
            return EXIT_INVALID
    report = validate_tn(config, tols)
    print(f"closing residual: {report.closing_residual:.3e}")
    print(f"max equation residual: {max(report.equation_residuals):.3e}")
    print(f"min pairwise distance: {report.distinctness:.6g}")
    print("kappas: " + " ".join(_fmt(k) for k in config.kappas))
    for f in report.failures:
        print(f"failure: {f}")
    ok = report.ok and (cd.config is None or characterization_passes(cd.points, params, char_tol))
    if report.ok and not ok:
        print("failure: characterization residual exceeds tolerance")
    print("verdict: " + ("valid" if ok else "invalid"))
    return EXIT_OK if ok else EXIT_INVALID


def _certify_source(doc: dict) -> dict:
    """A search report certifies its best candidate; anything else is a configuration."""
    if "best_candidate" in doc:
        if doc["best_candidate"] is None:
            raise InputError("search report has no candidate")
        return doc["best_candidate"]
    return doc


def cmd_certify(path, out=None, flux_spec=None, tol=None) -> int:
    doc = _certify_source(read_document(path))
    cd = config_from_doc(doc)
    if cd.shape != (3, 2):
        raise StructureError(f"not a 3x2 configuration (shape {cd.shape[0]}x{cd.shape[1]})")
    flux = flux_from_spec(flux_spec) if flux_spec else cd.flux
    params = cd.params or characterize(cd.points)
    if params is None:
        raise PreconditionError("no (mu, lambda) given and none found")
    slack = cert_mod.SLACK_TOL if tol is None else tol
    cert = cert_mod.certify_points(cd.points, params, flux=flux, slack_tol=slack)
    print(f"pattern: {cert.pattern}")
    for i, s in enumerate(cert.stars, start=1):
        print(f"star[{i}] = {_fmt(s)}")
    if cert.snapped:
        print(f"snapped to an exact leg system (distance {cert.snap_distance:.3e})")
    if cert.inconclusive:
        print("verdict: inconclusive")
    else:
        case = "" if cert.case_number is None else f" case {cert.case_number}"
        print(f"verdict: excluded by {cert.excluded_by}{case}, witness i = {cert.witness}")
        print(f"witness value: {_fmt(cert.witness_value)} "
              f"({'nonpositive' if cert.witness_holds else 'POSITIVE'} within slack {cert.slack:.3e})")
    if cert.in_ka is not None:
        print(f"points in K_a: {'yes' if cert.in_ka else 'no'}")
    if cert.contradiction:
        print(f"contradiction: star[{cert.witness}] <= 0 although every star is positive for a T_N in K_a")
    if out:
        write_document(cert.to_dict(), out)
    return EXIT_OK


def cmd_search(path, out=None, budget=None, seed=None, flux_spec=None, workers=1) -> int:
    doc = read_document(path)
    if budget is not None:
        doc["budget"] = budget
    if seed is not None:
        doc["seed"] = seed
    if flux_spec:
        doc.setdefault("target", {})
        if doc["target"].get("kind") != "ka":
            raise InputError("--flux applies only to ka targets")
        doc["target"]["flux"] = flux_spec
    problem = problem_from_spec(doc)
    report = multi_start(problem, workers=workers)
    print(f"restarts: {problem.budget}")
    print(f"best residual: {report.best_residual:.6e}")
    print(f"near candidates (<= 1e-4): {len(report.near_candidates)}")
    if isinstance(problem.target, KaTarget):
        hits = sum(bool(t.contradiction) for t in report.near_candidates)
        print(f"near candidates with a reported contradiction: {hits}")
    for d in report.defects:
        print(f"defect: {d}")
    print("result: " + ("found" if report.success else "not found"))
    if out:
        write_document(report.to_dict(), out)
    return EXIT_OK if report.success else EXIT_NOT_FOUND


def cmd_generate(N, seed=0, out=None, shape=(3, 2), pattern=None) -> int:
    config, params = generate_random(N, shape=shape, seed=seed, pattern=pattern)
    doc = config_to_doc(config.points, params, config)
    if out:
        write_document(doc, out)
        print(f"wrote a T_{N} configuration (mu = {params.mu:.6g}) to {out}")
    else:
        sys.stdout.write(dumps(doc))
    return EXIT_OK


def cmd_cases(N) -> int:
    rows = cert_mod.enumerate_cases(N)
    counts = {}
    for pattern, rule, witness, number in rows:
        label = rule if number is None else f"{rule} {number}"
        print(f"{pattern}  {label:<16} witness {witness}")
        counts[rule] = counts.get(rule, 0) + 1
    n_hard = counts.get(cert_mod.HARD, 0)
    print(f"{len(rows)} patterns: " + ", ".join(
        f"{counts.get(r, 0)} {r}" for r in (cert_mod.UNIFORM, cert_mod.SINGLE_OUTLIER, cert_mod.SPLIT_MIDDLE, cert_mod.HARD)))
    print(f"{len(rows) - n_hard} excluded by general rules")
    print(f"{n_hard} hard cases")
    print(f"{n_hard} remaining cases")
    return EXIT_OK


def _shape(text: str) -> tuple:
    try:
        m, n = (int(x) for x in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError("shape must look like 3x2") from None
    return m, n


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tnconf", description="T_N configurations: verify, certify, search.")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="validate a configuration document")
    v.add_argument("file")
    v.add_argument("--tol", type=float)

    c = sub.add_parser("certify", help="sign pattern and star certificate of a 3x2 configuration")
    c.add_argument("file")
    c.add_argument("--out")
    c.add_argument("--flux")
    c.add_argument("--tol", type=float, help="slack for the witness test")

    s = sub.add_parser("search", help="multi-start search for a T_N")
    s.add_argument("file")
    s.add_argument("--out")
    s.add_argument("--budget", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--flux")
    s.add_argument("--workers", type=int, default=1)

    g = sub.add_parser("generate", help="sample a random T_N configuration")
    g.add_argument("N", type=int)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out")
    g.add_argument("--shape", type=_shape, default=(3, 2))
    g.add_argument("--pattern")

    k = sub.add_parser("cases", help="enumerate sign patterns and their exclusion rules")
    k.add_argument("N", type=int)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        if args.command == "verify":
            return cmd_verify(args.file, args.tol)
        if args.command == "certify":
            return cmd_certify(args.file, args.out, args.flux, args.tol)
        if args.command == "search":
            return cmd_search(args.file, args.out, args.budget, args.seed, args.flux, args.workers)
        if args.command == "generate":
            return cmd_generate(args.N, args.seed, args.out, args.shape, args.pattern)
        return cmd_cases(args.N)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (StructureError, AmbiguousSignError, PreconditionError, ConsistencyError) as exc:
        print(f"evaluation error: {exc}", file=sys.stderr)
        return EXIT_EVAL
    except TnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EVAL


if __name__ == "__main__":
    sys.exit(main())
