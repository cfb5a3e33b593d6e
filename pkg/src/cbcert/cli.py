"""Command-line front end.

Exit codes: 0 success, 1 usage/parse/IO error, 2 synthesis infeasible,
3 verification failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from cbcert import __version__, cbc, io, plot, qpfilter, verify
from cbcert.model import ProblemError
from cbcert.poly import PolynomialSyntaxError, PolynomialVector, parse_polynomial

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_VERIFY = 0, 1, 2, 3

log = logging.getLogger("cbcert")


class UsageError(Exception):
    pass


def _degrees(items: List[str]) -> dict:
    out = {}
    for item in items or []:
        for part in item.split(","):
            if not part.strip():
                continue
            if "=" not in part:
                raise UsageError(f"--degrees expects key=value, got {part!r}")
            k, v = part.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def _load_problem(args) -> tuple:
    problem, mode = io.load_problem(args.problem)
    if getattr(args, "degrees", None):
        problem = replace(problem, degrees=io.parse_degrees(_degrees(args.degrees), problem.degrees))
    if getattr(args, "seed", None) is not None:
        problem.seed = args.seed
    if getattr(args, "mode", None):
        mode = args.mode
    return problem, mode


def _load_pair(args):
    problem, mode = _load_problem(args)
    cert, meta = io.load_certificate(args.certificate)
    io.check_compatible(problem, cert)
    return problem, mode, cert, meta


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _options(args) -> cbc.SynthOptions:
    opt = cbc.SynthOptions()
    if getattr(args, "max_iters", None) is not None:
        opt.max_iter = args.max_iters
    return opt


def _sos_summary(problem, cert) -> dict:
    out = {}
    for name, w in cbc.certify(problem, cert).items():
        out[name] = {"sos": bool(w), "residual": float(getattr(w, "residual", np.inf) or 0.0)}
    return out


def _report(problem, cert, seed: int, with_sos: bool = True) -> verify.VerificationReport:
    rep = verify.verify_certificate(problem, cert, verify.VerifySettings(seed=seed))
    if with_sos:
        rep.sos = _sos_summary(problem, cert)
    return rep


def _report_ok(rep) -> bool:
    return rep.passed and (rep.sos is None or all(v["sos"] for v in rep.sos.values()))


def _write_trace(path, trace: cbc.IterationTrace):
    rows = trace.rows()
    io.write_csv(path, rows[0], rows[1:])


def cmd_synth(args) -> int:
    problem, mode = _load_problem(args)
    out = _out_dir(args)
    opt = _options(args)
    t0 = time.perf_counter()
    try:
        if mode == "cbf":
            cert, trace = cbc.synthesize_cbf(problem, opt)
        else:
            cert, trace = cbc.synthesize(problem, opt)
    except cbc.SynthesisError as exc:
        print(f"synthesis infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    elapsed = time.perf_counter() - t0
    io.save_certificate(cert, out / "certificate.json",
                        {"problem": problem.name, "stop_reason": trace.stop_reason, "seed": problem.seed})
    _write_trace(out / "trace.csv", trace)
    rep = verify.verify_certificate(problem, cert, verify.VerifySettings(seed=problem.seed))
    rep.sos = {k: {"sos": bool(w), "residual": float(getattr(w, "residual", np.inf) or 0.0)}
               for k, w in cert.witnesses.items()}
    io.write_json(out / "report.json", rep.to_dict())
    print(f"{mode.upper()} synthesis: {len(trace.records) - 1} iterations, {trace.stop_reason}, {elapsed:.2f} s")
    print(f"B = {cert.B}")
    for j, u in enumerate(cert.u):
        print(f"u{j + 1} = {u}")
    print(rep.summary())
    return EXIT_OK if _report_ok(rep) else EXIT_VERIFY


def cmd_verify(args) -> int:
    problem, _, cert, _ = _load_pair(args)
    t0 = time.perf_counter()
    try:
        full = cbc.recover_multipliers(problem, cert)
        rep = _report(problem, full, problem.seed)
    except cbc.Infeasible as exc:
        rep = _report(problem, cert, problem.seed, with_sos=False)
        rep.sos = {"multipliers": {"sos": False, "residual": float("inf"), "reason": str(exc)}}
    if args.trajectories:
        trs = _boundary_runs(problem, cert, args.trajectories, args.horizon, args.dt, problem.seed)
        rep.trajectory = verify.invariance_check(problem, cert, trs).to_dict(args.horizon)
    elapsed = time.perf_counter() - t0
    if args.out:
        io.write_json(_out_dir(args) / "report.json", {**rep.to_dict(), "elapsed_s": round(elapsed, 3)})
    print(rep.summary())
    print(f"elapsed {elapsed:.2f} s")
    return EXIT_OK if _report_ok(rep) else EXIT_VERIFY


def _boundary_runs(problem, cert, count, horizon, dt, seed, controller=None):
    if count <= 0:
        return []
    x0 = verify.boundary_starts(cert.B, verify.safe_bbox(problem), count, seed=seed)
    return verify.simulate(problem, cert.u if controller is None else controller, x0, horizon, dt)


def _nominal(text: Optional[str], problem) -> PolynomialVector:
    if not text:
        return PolynomialVector([parse_polynomial("0", problem.n)] * problem.m, problem.n)
    parts = [t for t in text.split(";")]
    if len(parts) != problem.m:
        raise UsageError(f"--nominal needs {problem.m} polynomials separated by ';'")
    return PolynomialVector([parse_polynomial(t, problem.n) for t in parts], problem.n)


def cmd_simulate(args) -> int:
    problem, _, cert, _ = _load_pair(args)
    out = _out_dir(args)
    if args.controller == "certificate":
        ctrl = cert.u
    elif args.controller == "zero":
        ctrl = PolynomialVector([parse_polynomial("0", problem.n)] * problem.m, problem.n)
    else:
        if cert.lam1 is None and args.filter_mode == "relaxed":
            cert = cbc.recover_multipliers(problem, cert)
        cfg = qpfilter.FilterConfig(cert, problem, args.filter_mode, args.band)
        ctrl = qpfilter.filtered_controller(cfg, _nominal(args.nominal, problem))
    try:
        trs = _boundary_runs(problem, cert, args.starts, args.horizon, args.dt, problem.seed, ctrl)
    except qpfilter.InfeasibleAtState as exc:
        print(f"filter infeasible: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    io.write_trajectories(out / "trajectories.csv", trs, problem.n, problem.m)
    if problem.n == 2:
        bbox = plot.square_bbox(verify.safe_bbox(problem))
        svg, _ = plot.overlay_svg(bbox, problem.s, problem.w, cert.B, trs, args.grid, title=problem.name)
        (out / "trajectories.svg").write_text(svg)
    inv = verify.invariance_check(problem, cert, trs) if trs else None
    if inv is not None:
        print(f"{len(trs)} trajectories, min B {inv.min_B:.6g}, min s {inv.min_s:.6g}, diverged {inv.diverged}")
        io.write_json(out / "invariance.json", inv.to_dict(args.horizon))
    else:
        print("no trajectories requested")
    if inv is not None and args.controller != "zero" and not inv.passed:
        return EXIT_VERIFY
    return EXIT_OK


def cmd_levelset(args) -> int:
    problem, _, cert, _ = _load_pair(args)
    if problem.n != 2:
        raise UsageError("levelset needs a planar problem (state_dim 2)")
    which = args.which
    if which == "B":
        p = cert.B
    elif which.startswith("u") and which[1:].isdigit() and 1 <= int(which[1:]) <= problem.m:
        p = cert.u[int(which[1:]) - 1]
    else:
        raise UsageError(f"--which must be B or u1..u{problem.m}")
    out = _out_dir(args)
    bbox = plot.square_bbox(verify.safe_bbox(problem))
    X, Y = plot.grid(bbox, args.grid)
    Z = plot.evaluate_grid(p, X, Y)
    io.write_grid(out / f"levelset_{which}.csv", X, Y, Z)
    levels = [0.0] if which == "B" else plot.nice_levels(Z)
    (out / f"levelset_{which}.svg").write_text(
        plot.levelset_svg(bbox, p, levels, None if which == "B" else cert.B, args.grid, title=f"{which} level sets"))
    inside = plot.evaluate_grid(cert.B, X, Y) >= 0
    if inside.any():
        print(f"{which} over {{B >= 0}}: min {Z[inside].min():.6g}, max {Z[inside].max():.6g}")
    return EXIT_OK


def cmd_compare(args) -> int:
    problem, _ = _load_problem(args)
    out = _out_dir(args)
    try:
        res = cbc.compare(problem, _options(args))
    except cbc.SynthesisError as exc:
        print(f"synthesis infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    io.save_certificate(res.cbc, out / "cbc_certificate.json", {"problem": problem.name, "reseeded": res.reseeded})
    io.save_certificate(res.cbf, out / "cbf_certificate.json", {"problem": problem.name})
    _write_trace(out / "cbc_trace.csv", res.traces["cbc"])
    _write_trace(out / "cbf_trace.csv", res.traces["cbf"])
    summary = {
        "inclusion_certified": bool(res.inclusion),
        "sigma": res.inclusion.sigma.to_string() if res.inclusion else None,
        "reason": None if res.inclusion else res.inclusion.reason,
        "reseeded": res.reseeded,
        "alpha": res.cbf.alpha,
        "area_cbc": res.traces["cbc"].areas()[-1] if res.traces["cbc"].records else None,
        "area_cbf": res.traces["cbf"].areas()[-1] if res.traces["cbf"].records else None,
    }
    io.write_json(out / "compare.json", summary)
    if problem.n == 2:
        bbox = plot.square_bbox(verify.safe_bbox(problem))
        svg, _ = plot.overlay_svg(bbox, problem.s, problem.w, res.cbc.B, (), args.grid, title="CBC vs CBF")
        X, Y = plot.grid(bbox, args.grid)
        extra = plot.SvgCanvas(bbox)
        extra.contour(plot.contours(X, Y, plot.evaluate_grid(res.cbf.B, X, Y)), "#08306b", 2.0, "cbf-barrier", "5,3")
        svg = svg.replace("</svg>\n", "\n".join(extra.elements) + "\n</svg>\n")
        (out / "compare.svg").write_text(svg)
    print(f"CBF alpha = {res.cbf.alpha:.6g}; CBC reseeded from CBF: {res.reseeded}")
    if res.inclusion:
        print(f"PASS {{B_cbf >= 0}} inside {{B_cbc >= 0}} with sigma = {res.inclusion.sigma}")
        return EXIT_OK
    print(f"FAIL inclusion not certified: {res.inclusion.reason}")
    return EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cbcert", description="Control barrier certificate synthesis via SOS programming")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = ap.add_subparsers(dest="verb", required=True)

    def common(p, cert=False, out_default="out"):
        p.add_argument("problem", help="problem JSON file (or the name of a bundled file)")
        if cert:
            p.add_argument("certificate", help="certificate JSON file")
        p.add_argument("--out", default=out_default, help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--degrees", action="append", default=[], metavar="KEY=VALUE")
        p.add_argument("--grid", type=int, default=400, help="grid size for contours and level sets")

    p = sub.add_parser("synth", help="synthesize a certificate and controller")
    common(p)
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--mode", choices=["cbc", "cbf"], default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("verify", help="check a certificate")
    common(p, cert=True, out_default=None)
    p.add_argument("--trajectories", type=int, default=0, help="also simulate N runs from the boundary")
    p.add_argument("--horizon", type=float, default=10.0)
    p.add_argument("--dt", type=float, default=1e-3)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("simulate", help="closed-loop runs from the certificate boundary")
    common(p, cert=True)
    p.add_argument("--starts", type=int, default=12)
    p.add_argument("--horizon", type=float, default=10.0)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--controller", choices=["certificate", "qp-filter", "zero"], default="certificate")
    p.add_argument("--filter-mode", choices=["relaxed", "switching"], default="relaxed")
    p.add_argument("--band", type=float, default=1e-3)
    p.add_argument("--nominal", default=None, help="nominal input for the filter, e.g. '3*x1;3*x2'")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("levelset", help="grid values and contours of B or an input")
    common(p, cert=True)
    p.add_argument("--which", default="B")
    p.set_defaults(func=cmd_levelset)

    p = sub.add_parser("compare", help="CBC and CBF synthesis plus the set-inclusion check")
    common(p)
    p.add_argument("--max-iters", type=int, default=None)
    p.set_defaults(func=cmd_compare)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except (io.FileFormatError, UsageError, ProblemError, PolynomialSyntaxError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
