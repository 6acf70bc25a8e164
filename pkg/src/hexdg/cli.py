"""Command-line driver: ``hexdg mesh | infsup | solve | convergence | verify``.

Every command accepts ``--config FILE`` with flat ``key = value`` lines; keys
are the long option names (dashes or underscores).  Explicit flags override
the file.  Exit codes: 0 success, 2 configuration error, 3 solver failure,
4 invariant violation.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_INVARIANT = 0, 2, 3, 4

log = logging.getLogger("hexdg")


class ConfigError(ValueError):
    pass


class InvariantError(RuntimeError):
    pass


def parse_range(text) -> list[int]:
    """``"3"``, ``"1-4"`` or ``"2,3,5"`` (and mixtures) to a sorted list."""
    if isinstance(text, (list, tuple)):
        return sorted({int(t) for t in text})
    out = set()
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            a, b = part.split("-", 1) if not part.startswith("-") else (part, part)
            out.update(range(int(a), int(b) + 1))
        else:
            out.add(int(part))
    return sorted(out)


def parse_floats(text) -> list[float]:
    from fractions import Fraction
    if isinstance(text, (list, tuple)):
        return [float(t) for t in text]
    return [float(Fraction(t.strip())) for t in str(text).split(",") if t.strip()]


def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = val
    return out


def _common(p):
    p.add_argument("--config", help="flat key = value file")
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=10.0)
    p.add_argument("-v", "--verbose", action="store_true")


def _solver_opts(p):
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--maxiter", type=int, default=2000)
    p.add_argument("--restart", type=int, default=200)
    p.add_argument("--preconditioner", choices=("block", "ilu", "none"), default="block")
    p.add_argument("--quad-extra", type=int, default=3)
    p.add_argument("--singular-depth", type=int, default=24)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hexdg", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mesh", help="build and serialize a patch mesh")
    _common(p)
    p.add_argument("--patch", default="uniform")
    p.add_argument("--levels", type=int, default=0)
    p.add_argument("--out", help="mesh JSON path (default: print a summary)")

    p = sub.add_parser("infsup", help="inf-sup constants over a (patch, k, level) grid")
    _common(p)
    p.add_argument("--constant", choices=("gammaB", "gammaA"), default="gammaB")
    p.add_argument("--patch", default="edge", help="comma-separated patch kinds")
    p.add_argument("--k", default="2")
    p.add_argument("--levels", default="1-4")
    p.add_argument("--dense-cap", type=int, default=6000)
    p.add_argument("--out", default="infsup.csv")
    p.add_argument("--fit", help="exponent fit JSON path")

    p = sub.add_parser("solve", help="one solve of the augmented system")
    _common(p)
    _solver_opts(p)
    p.add_argument("--case", default="PolyExact")
    p.add_argument("--patch", help="defaults to the patch matching the case")
    p.add_argument("--levels", type=int, default=1)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--nu", default="0.25")
    p.add_argument("--out", help="solution .npz path")
    p.add_argument("--json", help="result JSON path (default: stdout)")
    p.add_argument("--log", help="GMRES iteration log (JSON lines)")

    p = sub.add_parser("convergence", help="k ~ level or fixed-mesh degree study")
    _common(p)
    _solver_opts(p)
    p.add_argument("--case", default="EdgeSing")
    p.add_argument("--nu", default="0.375")
    p.add_argument("--mode", choices=("levels", "degree"), default="levels")
    p.add_argument("--levels", default="0-4", help="level range (mode=levels) or the fixed level")
    p.add_argument("--k", default="1-4", help="degree range for mode=degree")
    p.add_argument("--patch", help="mesh for mode=degree (default uniform)")
    p.add_argument("--fit-from", type=int, default=2)
    p.add_argument("--quad-check", choices=("yes", "no"), default="yes")
    p.add_argument("--out", default="convergence.csv")
    p.add_argument("--plot", help="SVG path")

    p = sub.add_parser("verify", help="run the small oracle suites")
    _common(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", help="write the check results here")
    return ap


def parse_args(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.config:
        cfg = read_config(args.config)
        sub = ap._subparsers._group_actions[0].choices[args.command]
        known = {a.dest: a for a in sub._actions}
        explicit = _explicit_dests(sub, argv if argv is not None else sys.argv[1:])
        for key, val in cfg.items():
            if key not in known or key in ("config", "help"):
                raise ConfigError(f"unknown config key {key!r} for command {args.command}")
            if key in explicit:
                continue
            act = known[key]
            try:
                conv = act.type(val) if act.type else val
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key}: {val!r}") from exc
            if act.choices and conv not in act.choices:
                raise ConfigError(f"{key} must be one of {list(act.choices)}")
            setattr(args, key, conv)
    return args


def _explicit_dests(parser, argv) -> set:
    seen = set()
    for a in parser._actions:
        for opt in a.option_strings:
            if any(t == opt or t.startswith(opt + "=") for t in argv):
                seen.add(a.dest)
    return seen


OUTPUT_KEYS = ("verbose", "out", "plot", "json", "log", "fit", "config")


def effective_config(args) -> dict:
    """Parameters that determine the results (output paths left out)."""
    return {k: v for k, v in vars(args).items() if k not in OUTPUT_KEYS and v is not None}


# -- commands ------------------------------------------------------------------

def cmd_mesh(args) -> int:
    from .mesh import build_patch_mesh
    mesh = build_patch_mesh(args.patch, args.sigma, args.levels)
    if args.out:
        mesh.save(args.out)
    print(json.dumps({"kind": mesh.kind.value, "sigma": mesh.sigma, "levels": mesh.levels,
                      "elements": len(mesh), "volume": mesh.volume}))
    return EXIT_OK


def cmd_infsup(args) -> int:
    from .infsup import CSV_FIELDS, InfSupConfig, fit_exponent, infsup_study
    from .report import write_csv, write_json
    cfg = InfSupConfig(gamma=args.gamma, theta=args.theta, dense_cap=args.dense_cap)
    kinds = [s.strip() for s in args.patch.split(",") if s.strip()]
    ks, levels = parse_range(args.k), parse_range(args.levels)
    rows = infsup_study(kinds, ks, levels, args.constant, args.sigma, cfg,
                        progress=lambda r: log.info("%s %s k=%d l=%d value=%.6g (%.1fs)", r.kind,
                                                    r.patch, r.k, r.levels, r.value, r.seconds))
    write_csv(args.out, rows, CSV_FIELDS, effective_config(args))
    fits = fit_exponent(rows)
    if args.fit:
        write_json(args.fit, {"config": effective_config(args), "fits": fits})
    for key, f in fits.items():
        print(f"{key}: exponent {f['exponent']:.4g} over k={f['k']}")
    return EXIT_OK


def _dg_config(args, k, nu):
    from .assembly import DGConfig
    return DGConfig(k=k, theta=args.theta, gamma=args.gamma, nu=nu, quad_extra=args.quad_extra,
                    singular_depth=args.singular_depth)


def _solve_config(args):
    from .solver import SolveConfig
    return SolveConfig(tol=args.tol, maxiter=args.maxiter, restart=args.restart,
                       preconditioner=args.preconditioner)


def cmd_solve(args) -> int:
    from .mesh import build_patch_mesh
    from .problems import dg_error, get_case, solve_case
    from .report import write_json
    case = get_case(args.case)
    nus = parse_floats(args.nu)
    if len(nus) != 1:
        raise ConfigError("solve takes a single nu")
    cfg = _dg_config(args, args.k, nus[0])
    case.check_nu(cfg.nu)
    mesh = build_patch_mesh(args.patch or case.patch, args.sigma, args.levels)
    res = solve_case(mesh, case, cfg, _solve_config(args))
    if args.log:
        Path(args.log).write_text(res.report.to_json_lines())
    out = {"config": effective_config(args), "case": case.name, "elements": len(mesh),
           "dofs": res.field.dofmap.total, "multiplier": res.multiplier,
           "pressure_mean": res.pressure_mean, "residual": res.residual,
           "solver": res.report.summary(), "seconds": res.seconds}
    if case.has_exact:
        err = dg_error(res.field, case, mesh, res.faces, res.field.dofmap, cfg)
        out["error"] = asdict(err)
    if args.out:
        np.savez(args.out, x=res.field.x, k=cfg.k, nu=cfg.nu, mesh=json.dumps(mesh.to_json()))
    if abs(res.multiplier) > 1e-10 or abs(res.pressure_mean) > 1e-10:
        log.error("augmented multiplier or pressure mean is not zero")
        _emit(out, args.json)
        return EXIT_INVARIANT
    _emit(out, args.json)
    return EXIT_OK


def _emit(data, path):
    from .report import _clean, write_json
    if path:
        write_json(path, data)
    else:
        print(json.dumps(_clean(data), indent=2, sort_keys=True))


def cmd_convergence(args) -> int:
    from .problems import STUDY_FIELDS, convergence_study, degree_study, fit_rate, get_case
    from .report import plot_convergence, write_csv, write_json
    case = get_case(args.case)
    nus = parse_floats(args.nu)
    if not nus:
        raise ConfigError("empty nu list")
    for nu in nus:
        case.check_nu(nu)
    base = _dg_config(args, 1, nus[0])
    qc = args.quad_check == "yes"
    prog = lambda r: log.info("%s nu=%g k=%d l=%d N=%s err=%.4g", r["case"], r["nu"], r["k"],
                              r["levels"], r["N"], r["dg_error"])
    if args.mode == "levels":
        levels = parse_range(args.levels)
        if not levels:
            raise ConfigError("empty level range")
        rows = convergence_study(case, nus, max(levels), base, _solve_config(args),
                                 min_level=min(levels), sigma=args.sigma, quad_check=qc,
                                 progress=prog)
        root = case.root
    else:
        ks = parse_range(args.k)
        levels = parse_range(args.levels)
        if not ks or len(levels) != 1:
            raise ConfigError("degree mode needs a k range and a single level")
        rows = degree_study(case, nus, ks, args.patch or "uniform", levels[0], base,
                            _solve_config(args), args.sigma, qc, progress=prog)
        root = 3
    write_csv(args.out, rows, STUDY_FIELDS, effective_config(args))
    fits = {}
    for nu in nus:
        sub = [r for r in rows if r["nu"] == nu]
        if args.mode == "levels":
            f = fit_rate(sub, root, args.fit_from)
        else:
            f = fit_rate([dict(r, levels=r["k"]) for r in sub], root, args.fit_from)
        fits[(case.name, nu)] = f.b
        print(f"{case.name} nu={nu:g}: b={f.b:.4g} R2={f.r2:.4f} over {f.points} rows")
    if args.plot:
        plot_convergence(rows, root, args.plot, f"{case.name}", fits)
    if any("error" in r for r in rows):
        return EXIT_SOLVER
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import run_checks
    results = run_checks(seed=args.seed)
    width = max(len(r["name"]) for r in results)
    for r in results:
        print(f"{'PASS' if r['ok'] else 'FAIL'}  {r['name']:<{width}}  {r['detail']}")
    if args.json:
        from .report import write_json
        write_json(args.json, results)
    return EXIT_OK if all(r["ok"] for r in results) else EXIT_INVARIANT


COMMANDS = {"mesh": cmd_mesh, "infsup": cmd_infsup, "solve": cmd_solve,
            "convergence": cmd_convergence, "verify": cmd_verify}


def main(argv=None) -> int:
    from .infsup import KernelError
    from .mesh import MeshError
    from .problems import RestrictedCaseError
    from .solver import DenseCapError, SolverError
    try:
        args = parse_args(argv)
    except ConfigError as exc:
        print(f"hexdg: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, RestrictedCaseError, DenseCapError, KeyError) as exc:
        print(f"hexdg: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"hexdg: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (KernelError, InvariantError) as exc:
        print(f"hexdg: invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (MeshError, ValueError) as exc:
        print(f"hexdg: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
