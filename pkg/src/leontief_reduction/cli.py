"""Command-line front end: ``leontief-reduce <subcommand> ...``.

Exit codes: 0 success, 1 a check failed, 2 usage or input error,
3 an oracle was inconclusive.  Errors are printed to stderr as JSON.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from fractions import Fraction

from . import __version__
from .errors import (
    CapExceededError,
    InvalidCertificateError,
    LiftError,
    NotConvergedError,
    ReductionError,
)
from .gadgets import (
    audit_closed,
    compile_market,
    lift,
    market_from_trace,
    parse_trace,
    project,
    serialize_trace,
)
from .market import (
    cert_from_obj,
    cert_to_obj,
    market_from_obj,
    market_size,
    market_to_obj,
    verify_equilibrium,
)
from .nash import encode_decision_ne, encode_ne, game_from_obj, normalize_payoffs, verify_ne
from .ncp import (
    CAND_SCHEMA,
    NCPCandidate,
    PLCMarket,
    build_ncp,
    candidate_from_certificate,
    check_ncp,
    export_etr,
    plc_from_obj,
    plc_to_obj,
    run_solver,
)
from .oracle import SearchConfig, solve_market_grid, solve_poly_grid, tatonnement
from .poly import format_rational, system_from_obj, system_size, system_to_obj, to_rational
from .reduce import reduce_system, relation_size, relations_to_obj

SOLUTION_SCHEMA = "leontief-reduction/solution@1"
MANIFEST_SCHEMA = "leontief-reduction/manifest@1"

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_INCONCLUSIVE = 0, 1, 2, 3


class _Run:
    """Collects input/output hashes for the run manifest."""

    def __init__(self, args):
        self.args = args
        self.inputs = {}
        self.outputs = {}

    def read(self, path) -> str:
        text = sys.stdin.read() if path == "-" else open(path, encoding="utf-8").read()
        self.inputs[path] = _sha(text)
        return text

    def read_json(self, path):
        text = self.read(path)
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            from .errors import ParseError

            raise ParseError(f"{path}: syntax error: {exc.msg}", exc.lineno, exc.colno) from None

    def write(self, data, path=None, manifest=True):
        text = data if isinstance(data, str) else json.dumps(data, indent=1) + "\n"
        if path in (None, "-"):
            sys.stdout.write(text)
            return
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
        self.outputs[path] = _sha(text)
        if manifest:
            self.write_manifest(path)

    def write_manifest(self, path):
        cfg = {k: v for k, v in vars(self.args).items() if k != "func" and isinstance(v, (str, int, float, bool, type(None)))}
        man = {
            "schema": MANIFEST_SCHEMA,
            "subcommand": " ".join(self.args.command_path),
            "version": __version__,
            "config": cfg,
            "inputs": self.inputs,
            "outputs": self.outputs,
        }
        with open(f"{path}.manifest.json", "w", encoding="utf-8") as fh:
            json.dump(man, fh, indent=1)


def _sha(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def _mode(args):
    return ("exact", None) if args.mode == "exact" else ("tol", args.eps)


def _num_out(x):
    return format_rational(x) if isinstance(x, (int, Fraction)) else float(x)


def _read_solution(obj):
    z = obj["z"] if isinstance(obj, dict) else obj
    return [x if isinstance(x, float) else to_rational(x) for x in z]


# --------------------------------------------------------------------------
# subcommands


def cmd_compile(run, args):
    F = system_from_obj(run.read_json(args.system))
    R = reduce_system(F)
    M, trace = compile_market(R)
    if args.relations:
        run.write(relations_to_obj(R), args.relations, manifest=False)
    if args.trace:
        run.write(serialize_trace(trace) + "\n", args.trace, manifest=False)
    run.write(market_to_obj(M), args.out)
    return EXIT_OK


def cmd_lift(run, args):
    trace = parse_trace(run.read(args.trace))
    z = _read_solution(run.read_json(args.solution))
    mode, eps = _mode(args)
    cert = lift(trace, z, mode=mode, eps=eps)
    run.write(cert_to_obj(cert), args.out)
    return EXIT_OK


def cmd_verify(run, args):
    M = market_from_obj(run.read_json(args.market))
    cert = cert_from_obj(run.read_json(args.certificate))
    mode, eps = _mode(args)
    rep = verify_equilibrium(M, cert, mode=mode, eps=eps)
    run.write(rep.to_obj(), args.out)
    return EXIT_OK if rep.ok else EXIT_FAIL


def cmd_project(run, args):
    trace = parse_trace(run.read(args.trace))
    cert = cert_from_obj(run.read_json(args.certificate))
    F = system_from_obj(run.read_json(args.system)) if args.system else None
    mode, eps = _mode(args)
    z = project(trace, cert, F=F, mode=mode, eps=eps)
    run.write({"schema": SOLUTION_SCHEMA, "z": [_num_out(x) for x in z]}, args.out)
    return EXIT_OK


def cmd_audit(run, args):
    trace = parse_trace(run.read(args.trace))
    cert = cert_from_obj(run.read_json(args.certificate))
    M = market_from_obj(run.read_json(args.market)) if args.market else market_from_trace(trace)
    mode, eps = _mode(args)
    if not verify_equilibrium(M, cert, mode=mode, eps=eps).ok:
        raise InvalidCertificateError("certificate fails verification")
    rep = audit_closed(trace, M, cert, eps=0 if mode == "exact" else eps)
    run.write(rep.to_obj(), args.out)
    return EXIT_OK if rep.ok else EXIT_FAIL


def cmd_nash_encode(run, args):
    G = normalize_payoffs(game_from_obj(run.read_json(args.game)))
    F = encode_decision_ne(G) if args.decision else encode_ne(G)
    run.write(system_to_obj(F), args.out)
    return EXIT_OK


def cmd_nash_verify(run, args):
    G = normalize_payoffs(game_from_obj(run.read_json(args.game)))
    z = _read_solution(run.read_json(args.profile))
    ok = verify_ne(G, z, args.eps)
    run.write({"ok": ok}, args.out)
    return EXIT_OK if ok else EXIT_FAIL


def _plc_input(obj):
    if obj.get("schema", "").endswith("plc-market@1"):
        return plc_from_obj(obj), None
    M = market_from_obj(obj)
    return PLCMarket.from_leontief(M), M


def cmd_ncp_build(run, args):
    P, _ = _plc_input(run.read_json(args.market))
    inst = build_ncp(P)
    out = {
        "schema": "leontief-reduction/ncp@1",
        "market": plc_to_obj(P),
        "variables": list(inst.var_names),
        "rows": [
            {"family": r.family, "label": r.label, "sense": r.sense, "expr": _named(str(r.expr), inst.var_names)}
            for r in inst.rows
        ],
    }
    run.write(out, args.out)
    return EXIT_OK


def _named(expr: str, names) -> str:
    import re

    return re.sub(r"z(\d+)", lambda m: names[int(m.group(1)) - 1], expr)


def cmd_ncp_check(run, args):
    P, _ = _plc_input(run.read_json(args.market))
    obj = run.read_json(args.candidate)
    if obj.get("schema") == CAND_SCHEMA:
        cand = NCPCandidate.from_obj(obj)
    else:
        cand = candidate_from_certificate(P, cert_from_obj(obj))
    mode, eps = _mode(args)
    rep = check_ncp(build_ncp(P), cand, mode=mode, eps=eps)
    run.write(rep.to_obj(), args.out)
    return EXIT_OK if rep.ok else EXIT_FAIL


def cmd_ncp_export(run, args):
    P, _ = _plc_input(run.read_json(args.market))
    doc = export_etr(build_ncp(P))
    run.write(doc, args.out)
    if args.solve:
        verdict = run_solver(doc)
        sys.stderr.write(json.dumps({"solver": verdict}) + "\n")
    return EXIT_OK


def _cfg(args, **defaults):
    return SearchConfig(
        resolution=args.grid or defaults.get("resolution", 2),
        depth=args.depth if args.depth is not None else defaults.get("depth", 10),
        eps=args.eps if args.eps is not None else 1e-9,
        max_cells=args.max_iters or defaults.get("max_cells", 200_000),
    )


def cmd_oracle_poly(run, args):
    F = system_from_obj(run.read_json(args.system))
    sols = solve_poly_grid(F, _cfg(args))
    run.write({"schema": "leontief-reduction/points@1", "points": [list(s) for s in sols]}, args.out)
    return EXIT_OK if sols else EXIT_INCONCLUSIVE


def cmd_oracle_market(run, args):
    M = market_from_obj(run.read_json(args.market))
    pts = solve_market_grid(M, _cfg(args, resolution=16, depth=3))
    run.write({"schema": "leontief-reduction/points@1", "points": [list(p) for p in pts]}, args.out)
    return EXIT_OK if pts else EXIT_INCONCLUSIVE


def cmd_oracle_tatonnement(run, args):
    M = market_from_obj(run.read_json(args.market))
    p = tatonnement(M, step=args.step, iters=args.max_iters or 10_000, eps=args.eps or 1e-9, seed=args.seed)
    run.write({"schema": "leontief-reduction/points@1", "points": [p.tolist()]}, args.out)
    return EXIT_OK


def cmd_stats(run, args):
    F = system_from_obj(run.read_json(args.system))
    R = reduce_system(F)
    M, _ = compile_market(R)

    def rep(s):
        return {
            "vars": s.var_count,
            "rows": s.relation_or_poly_count,
            "bits": s.total_bit_size,
            "max_degree": s.max_degree,
            "max_terms": s.monomial_count_max,
            "U_max": format_rational(s.U_max),
        }

    out = {
        "schema": "leontief-reduction/stats@1",
        "system": rep(system_size(F)),
        "relations": rep(relation_size(R)),
        "H": format_rational(R.H),
        "market": {"goods": M.g, "agents": len(M.agents), "bits": market_size(M)},
    }
    run.write(out, args.out)
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def _common(p, mode=False, oracle=False):
    p.add_argument("-o", "--out", help="output file (default: stdout)")
    if mode or oracle:
        p.add_argument("--eps", type=float, default=None, help="tolerance")
    if mode:
        p.add_argument("--mode", choices=["exact", "tol"], default="exact")
    if oracle:
        p.add_argument("--grid", type=int, default=None, help="resolution per split / simplex divisions")
        p.add_argument("--depth", type=int, default=None)
        p.add_argument("--max-iters", type=int, default=None)
        p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="leontief-reduce", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="polynomial system -> relations -> market and trace")
    p.add_argument("system")
    p.add_argument("--trace")
    p.add_argument("--relations")
    _common(p)
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("lift", help="solution of F -> equilibrium certificate")
    p.add_argument("trace")
    p.add_argument("solution")
    _common(p, mode=True)
    p.set_defaults(func=cmd_lift)

    p = sub.add_parser("verify", help="check a certificate against a market")
    p.add_argument("market")
    p.add_argument("certificate", help="path or - for stdin")
    _common(p, mode=True)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("project", help="certificate -> solution of F")
    p.add_argument("trace")
    p.add_argument("certificate")
    p.add_argument("--system", help="also check the result against this system")
    _common(p, mode=True)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("audit", help="per-gadget closed-submarket balance")
    p.add_argument("trace")
    p.add_argument("certificate")
    p.add_argument("--market")
    _common(p, mode=True)
    p.set_defaults(func=cmd_audit)

    nash = sub.add_parser("nash", help="three-player games").add_subparsers(dest="nash_command", required=True)
    p = nash.add_parser("encode")
    p.add_argument("game")
    p.add_argument("--decision", action="store_true", help="cap strategy probabilities at 1/2")
    _common(p)
    p.set_defaults(func=cmd_nash_encode)
    p = nash.add_parser("verify")
    p.add_argument("game")
    p.add_argument("profile")
    _common(p)
    p.add_argument("--eps", type=float, default=1e-9)
    p.set_defaults(func=cmd_nash_verify)

    ncp = sub.add_parser("ncp", help="complementarity form and ETR export").add_subparsers(
        dest="ncp_command", required=True
    )
    p = ncp.add_parser("build")
    p.add_argument("market")
    _common(p)
    p.set_defaults(func=cmd_ncp_build)
    p = ncp.add_parser("check")
    p.add_argument("market")
    p.add_argument("candidate", help="NCP candidate or market certificate")
    _common(p, mode=True)
    p.set_defaults(func=cmd_ncp_check)
    p = ncp.add_parser("export-etr")
    p.add_argument("market")
    p.add_argument("--solve", action="store_true", help="run the solver named by LEONTIEF_SMT_SOLVER")
    _common(p)
    p.set_defaults(func=cmd_ncp_export)

    orc = sub.add_parser("oracle", help="numerical search").add_subparsers(dest="oracle_command", required=True)
    p = orc.add_parser("poly")
    p.add_argument("system")
    _common(p, oracle=True)
    p.set_defaults(func=cmd_oracle_poly)
    p = orc.add_parser("market")
    p.add_argument("market")
    _common(p, oracle=True)
    p.set_defaults(func=cmd_oracle_market)
    p = orc.add_parser("tatonnement")
    p.add_argument("market")
    p.add_argument("--step", type=float, default=0.1)
    _common(p, oracle=True)
    p.set_defaults(func=cmd_oracle_tatonnement)

    p = sub.add_parser("stats", help="size reports for F, R'(F) and the market")
    p.add_argument("system")
    _common(p)
    p.set_defaults(func=cmd_stats)
    return ap


def _error(exc, code):
    payload = exc.to_dict() if isinstance(exc, ReductionError) else {"error": type(exc).__name__, "message": str(exc)}
    sys.stderr.write(json.dumps(payload) + "\n")
    return code


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.command_path = [args.command] + [
        getattr(args, k) for k in ("nash_command", "ncp_command", "oracle_command") if getattr(args, k, None)
    ]
    run = _Run(args)
    try:
        return args.func(run, args)
    except (LiftError, InvalidCertificateError) as exc:
        return _error(exc, EXIT_FAIL)
    except (CapExceededError, NotConvergedError) as exc:
        return _error(exc, EXIT_INCONCLUSIVE)
    except (ReductionError, ValueError, KeyError, TypeError, OSError) as exc:
        return _error(exc, EXIT_USAGE)


if __name__ == "__main__":
    sys.exit(main())
