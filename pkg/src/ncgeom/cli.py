"""Command-line front end.

Exit codes: 0 success, 1 usage or parse error, 2 validation failure,
3 solver budget exhausted (bounds are still reported).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from . import gauge, moyal
from .algebra import algebra_from_json, state_from_json
from .distance import default_tol, distance_matrix, spectral_distance, spectral_distance_even
from .errors import NCGeomError, ParseError
from .linalg import matrix_from_json, matrix_to_json
from .report import SCHEMA_VERSION, ValidationReport
from .triple import check_axioms, omega1, triple_from_json

EXIT_OK, EXIT_PARSE, EXIT_INVALID, EXIT_BUDGET = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_PARSE, f"{self.prog}: error: {message}\n")


def _load(path: str):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc


def _num(v):
    v = float(v)
    if np.isfinite(v):
        return v
    return "inf" if v > 0 else ("-inf" if v < 0 else "nan")


def _clean(obj):
    # strict JSON: non-finite floats become strings
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _dist_json(r) -> dict:
    out = r.to_json()
    out["dual_residual"] = float(r.dual_residual)
    out["reduction"] = r.reduction
    return out


def _table(rows: list, fmt: str):
    return {"rows": rows, "_table": True, "_fmt": fmt}


def _emit(args, payload) -> str:
    if isinstance(payload, dict) and payload.get("_table"):
        rows = payload["rows"]
        if args.format == "csv":
            buf = io.StringIO()
            if rows:
                w = csv.DictWriter(buf, fieldnames=list(rows[0].keys()), lineterminator="\n")
                w.writeheader()
                for r in rows:
                    w.writerow({k: _num(v) if isinstance(v, float) else v for k, v in r.items()})
            return buf.getvalue()
        payload = {"rows": rows}
    if args.format == "csv" and isinstance(payload, dict):
        flat = {k: v for k, v in payload.items() if not isinstance(v, (dict, list))}
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(flat), lineterminator="\n")
        w.writeheader()
        w.writerow(flat)
        return buf.getvalue()
    body = {"schema_version": SCHEMA_VERSION, "command": args.command_name}
    body.update(payload)
    return json.dumps(_clean(body), indent=2, allow_nan=False) + "\n"


def _report(rep: ValidationReport) -> dict:
    return {"passed": rep.passed, "checks": rep.to_json()}


# ---------------------------------------------------------------- commands


def cmd_check(args):
    T = triple_from_json(_load(args.triple))
    rep = check_axioms(T)
    out = _report(rep)
    out["omega1_rank"] = omega1(T).rank
    return out, (EXIT_OK if rep.passed else EXIT_INVALID)


def cmd_distance(args):
    T = triple_from_json(_load(args.triple))
    states = [state_from_json(_load(p)) for p in args.state]
    if len(states) < 2:
        raise ParseError("distance needs at least two --state files")
    tol = args.tol
    if len(states) == 2:
        fn = spectral_distance_even if args.even else spectral_distance
        r = fn(T, states[0], states[1], tol, args.max_iter)
        return _dist_json(r), (EXIT_BUDGET if r.status == "budget_exhausted" else EXIT_OK)
    Dm = distance_matrix(T, states, tol, even=args.even, max_iter=args.max_iter)
    labels = Dm.labels
    rows = []
    for i, li in enumerate(labels):
        row = {"state": li}
        for j, lj in enumerate(labels):
            row[f"{lj}_lower"] = float(Dm.lower[i, j])
            row[f"{lj}_upper"] = float(Dm.upper[i, j])
        rows.append(row)
    bad = any(s == "budget_exhausted" for r in Dm.status for s in r)
    return _table(rows, args.format), (EXIT_BUDGET if bad else EXIT_OK)


def _gauge_inputs(args):
    A = algebra_from_json(_load(args.algebra))
    D = matrix_from_json(_load(args.D))
    g = matrix_from_json(_load(args.grading)) if getattr(args, "grading", None) else None
    return A, D, g


def cmd_gauge_mor(args):
    A, D, g = _gauge_inputs(args)
    Dp = matrix_from_json(_load(args.Dprime))
    f = gauge.mor(A, D, Dp, graded=g)
    if f is None:
        return {"exists": False}, EXIT_OK
    return {"exists": True, "omega": matrix_to_json(f.omega), **_report(f.check())}, EXIT_OK


def cmd_gauge_initial(args):
    from .triple import SpectralTriple

    A, D, g = _gauge_inputs(args)
    rank = omega1(SpectralTriple(A, D)).rank
    return {"initial": gauge.is_initial(A, D, g), "omega1_rank": rank}, EXIT_OK


def cmd_gauge_iso(args):
    A, D, _ = _gauge_inputs(args)
    Dp = matrix_from_json(_load(args.Dprime))
    f = gauge.mor(A, D, Dp)
    if f is None:
        return {"exists": False, "isomorphism": False}, EXIT_OK
    return {"exists": True, "isomorphism": gauge.is_isomorphism(f)}, EXIT_OK


def cmd_moyal_spectrum(args):
    M = moyal.truncation(args.N, args.theta)
    w = moyal.spectrum(M)
    return {"N": M.N, "theta": M.theta, "dirac_squared_eigenvalues": [float(x) for x in w],
            **_report(M.check())}, EXIT_OK


def _solver(args):
    return spectral_distance if args.full else spectral_distance_even


def cmd_moyal_eig(args):
    M = moyal.truncation(args.N, args.theta)
    r = _solver(args)(M.triple, moyal.eigenstate(M, args.m), moyal.eigenstate(M, args.n), args.tol, args.max_iter)
    f = moyal.eigenstate_distance_formula(args.m, args.n, args.theta)
    out = {"m": args.m, "n": args.n, "N": M.N, "theta": M.theta, "formula": f,
           "residual": max(0.0, r.lower - f, f - r.upper), **_dist_json(r)}
    return out, (EXIT_BUDGET if r.status == "budget_exhausted" else EXIT_OK)


def cmd_moyal_coherent(args):
    z = complex(args.z.replace(" ", ""))
    M = moyal.truncation(args.N, args.theta)
    r = _solver(args)(M.triple, moyal.coherent_state(M, 0.0), moyal.coherent_state(M, z), args.tol, args.max_iter)
    out = {"z_re": z.real, "z_im": z.imag, "N": M.N, "theta": M.theta, "formula": abs(z),
           "residual": max(0.0, r.lower - abs(z), abs(z) - r.upper), **_dist_json(r)}
    if z.imag == 0:
        out["aN_lower"] = moyal.an_lower_bound(M, z, args.Nparam)
        out["aN_sharp_lower"] = moyal.an_lower_bound(M, z, args.Nparam, sharp=True)
    return out, (EXIT_BUDGET if r.status == "budget_exhausted" else EXIT_OK)


def _gh_rows(thetas, M):
    rows = []
    for rep in moyal.gh_sweep(thetas, M):
        rows.append({"theta": rep["theta"], "hausdorff": rep["hausdorff_distance"],
                     "formula": float(rep["closed_form"]),
                     "residual": abs(rep["hausdorff_distance"] - rep["closed_form"])})
    return rows


def cmd_moyal_gh(args):
    thetas = [float(t) for t in args.theta_list.split(",")]
    return _table(_gh_rows(thetas, args.M), args.format), EXIT_OK


def cmd_moyal_zeta(args):
    return moyal.zeta_estimates(moyal.truncation(args.N, args.theta)), EXIT_OK


def cmd_moyal_corr(args):
    from .connections import similarity_check

    M = moyal.truncation(args.N, args.theta)
    fwd, rev = moyal.moyal_correspondence(args.n, M)
    rt, ident, V = moyal.round_trip(args.n, M)
    rep = ValidationReport()
    rep.extend(fwd.check(), "forward.")
    rep.extend(rev.check(), "reverse.")
    rep.add("forward.interior_intertwining", moyal.intertwining_residual(fwd, M.interior), 1e-9)
    rep.add("reverse.intertwining", moyal.intertwining_residual(rev), 1e-9)
    rep.extend(similarity_check(rt, ident, V), "round_trip.")
    return {"n": args.n, "N": M.N, "theta": M.theta, **_report(rep)}, (EXIT_OK if rep.passed else EXIT_INVALID)


# ---------------------------------------------------------------- experiments


def exp_eigdist(args):
    rows = moyal.eigenstate_rows(args.theta, args.N or 12, 6, even=not args.full, tol=args.tol)
    return [{"parameter": f"m={r['m']},n={r['n']}", **{k: v for k, v in r.items() if k not in ("m", "n")}}
            for r in rows]


def exp_coherent(args):
    Ns = [int(x) for x in args.N_list.split(",")]
    rows = []
    for r in (float(x) for x in args.r_list.split(",")):
        for row in moyal.coherent_rows(args.theta, r, Ns, even=not args.full, tol=args.tol):
            rows.append({"parameter": f"N={row['N']},r={row['r']:g}", **{k: row[k] for k in
                         ("lower", "upper", "formula", "residual", "aN_lower", "aN_sharp_lower", "status")}})
    return rows


def exp_gh(args):
    return _gh_rows([1.0, 0.5, 0.25, 0.125], args.M)


def exp_zeta(args):
    rep = moyal.zeta_estimates(moyal.truncation(args.N or 256, args.theta))
    return [
        {"parameter": "volume", "estimate": rep["volume_estimate"], "error": rep["volume_error"],
         "formula": 2.0 * args.theta, "residual": abs(rep["volume_estimate"] - 2.0 * args.theta)},
        {"parameter": "dimension", "estimate": rep["dimension_estimate"], "error": rep["dimension_error"],
         "formula": 2.0, "residual": abs(rep["dimension_estimate"] - 2.0)},
    ]


def exp_category(args):
    from .algebra import full_matrix_algebra

    rng = np.random.default_rng(args.seed)
    rows = []
    for n in range(1, 5):
        A = full_matrix_algebra(n)
        w = gauge.no_final_object_witness(A)
        for trial in range(args.trials):
            X = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
            D = (X + X.conj().T) / 2
            trivial = n == 1
            rows.append({"n": n, "trial": trial, "is_initial": gauge.is_initial(A, D),
                         "expected_initial": not trivial,
                         "mor_to_zero": gauge.mor(A, D, np.zeros((n, n))) is not None,
                         "no_final_witness": w.report.passed})
    return rows


EXPERIMENTS = {"eigdist": exp_eigdist, "coherent": exp_coherent, "gh": exp_gh, "zeta": exp_zeta,
               "category": exp_category}


def cmd_experiment(args):
    fn = EXPERIMENTS.get(args.name)
    if fn is None:
        raise ParseError(f"unknown experiment {args.name!r}; choose from {', '.join(EXPERIMENTS)}")
    rows = fn(args)
    bad = any(r.get("status") == "budget_exhausted" for r in rows)
    return _table(rows, args.format), (EXIT_BUDGET if bad else EXIT_OK)


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    # SUPPRESS keeps a subcommand from resetting a flag given before it
    S = argparse.SUPPRESS
    common.add_argument("--format", choices=("json", "csv"), default=S)
    common.add_argument("--output", "-o", default=S, help="write the report here instead of stdout")
    common.add_argument("--tol", type=float, default=S, help="solver tolerance (default $NCGEOM_TOL or 1e-7)")
    common.add_argument("--seed", type=int, default=S)
    common.add_argument("--max-iter", type=int, default=S, help="solver iteration budget (default 500)")

    p = _Parser(prog="ncgeom", description="Finite spectral triples, fluctuations and spectral distances.",
                parents=[common])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("check", parents=[common], help="validate a triple")
    c.add_argument("--triple", required=True)
    c.set_defaults(func=cmd_check, command_name="check")

    c = sub.add_parser("distance", parents=[common], help="certified spectral distance")
    c.add_argument("--triple", required=True)
    c.add_argument("--state", action="append", default=[], required=True)
    c.add_argument("--even", action="store_true", help="use the single-block reduction for even triples")
    c.set_defaults(func=cmd_distance, command_name="distance")

    g = sub.add_parser("gauge", parents=[common], help="gauge category queries")
    gs = g.add_subparsers(dest="gauge_cmd", required=True, parser_class=_Parser)
    for name, fn, needs_dp in (("mor", cmd_gauge_mor, True), ("initial", cmd_gauge_initial, False),
                               ("iso", cmd_gauge_iso, True)):
        x = gs.add_parser(name, parents=[common])
        x.add_argument("--algebra", required=True)
        x.add_argument("--D", required=True)
        if needs_dp:
            x.add_argument("--Dprime", required=True)
        if name != "iso":
            x.add_argument("--grading", default=None)
        x.set_defaults(func=fn, command_name=f"gauge {name}")

    m = sub.add_parser("moyal", parents=[common], help="truncated Moyal plane")
    ms = m.add_subparsers(dest="moyal_cmd", required=True, parser_class=_Parser)

    def moyal_cmd(name, fn, **extra):
        x = ms.add_parser(name, parents=[common])
        x.add_argument("--theta", type=float, default=1.0)
        if extra.get("N", True):
            x.add_argument("--N", type=int, default=extra.get("N_default", 12))
        x.set_defaults(func=fn, command_name=f"moyal {name}")
        return x

    moyal_cmd("spectrum", cmd_moyal_spectrum)
    x = moyal_cmd("eig-dist", cmd_moyal_eig)
    x.add_argument("--m", type=int, required=True)
    x.add_argument("--n", type=int, required=True)
    x.add_argument("--full", action="store_true", help="full constraint instead of the even reduction")
    x = moyal_cmd("coherent", cmd_moyal_coherent, N_default=32)
    x.add_argument("--z", required=True, help="complex displacement, e.g. 0.5 or 0.3+0.1j")
    x.add_argument("--Nparam", type=int, default=4)
    x.add_argument("--full", action="store_true")
    x = moyal_cmd("gh", cmd_moyal_gh, N=False)
    x.add_argument("--theta-list", default="1,0.5,0.25,0.125")
    x.add_argument("--M", type=int, default=10)
    moyal_cmd("zeta", cmd_moyal_zeta, N_default=256)
    x = moyal_cmd("correspondence", cmd_moyal_corr, N_default=24)
    x.add_argument("--n", type=int, default=3)

    e = sub.add_parser("experiment", parents=[common], help="reproduction tables (CSV)")
    e.add_argument("name", help="eigdist | coherent | gh | zeta | category")
    e.add_argument("--theta", type=float, default=1.0)
    e.add_argument("--N", type=int, default=None)
    e.add_argument("--N-list", default="16,32,64")
    e.add_argument("--r-list", default="0.25,0.5")
    e.add_argument("--M", type=int, default=10)
    e.add_argument("--trials", type=int, default=5)
    e.add_argument("--full", action="store_true")
    e.set_defaults(func=cmd_experiment, command_name="experiment")
    return p


def run(argv=None, stdout=None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    for name, val in (("format", None), ("output", None), ("tol", None), ("seed", 0), ("max_iter", 500)):
        if not hasattr(args, name):
            setattr(args, name, val)
    if args.tol is None:
        args.tol = default_tol()
    if not args.tol > 0:
        parser.error("--tol must be positive")
    if args.max_iter < 1:
        parser.error("--max-iter must be at least 1")
    if args.format is None:
        args.format = "csv" if args.command == "experiment" else "json"
    try:
        payload, code = args.func(args)
    except ParseError as exc:
        print(f"ncgeom: parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except NCGeomError as exc:
        rep = ValidationReport().add(type(exc).__name__, np.inf, passed=False)
        payload, code = {"error": str(exc), **_report(rep)}, EXIT_INVALID
    text = _emit(args, payload)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        stdout.write(text)
    return code


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
