"""Command line entry point ``dimercyl``.

Exit codes: 0 success, 1 validation failure, 2 numerical failure, 3 config error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys

import numpy as np

from . import experiments as ex
from .elliptic import EllipticContext, f_mu, half_periods, wp, wp_deriv, zeta_w
from .errors import ConfigError, DomainError, NumericalError, RangeError
from .kasteleyn import discrete_cr_residual, export_table
from .height_stats import heights_along
from .lattice import TOP, domain_to_text, dual_path, validate_temperleyan
from .prediction import prediction_report
from .sampling import DimerCover, sample_covers, write_cover

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_CONFIG = 0, 1, 2, 3

log = logging.getLogger("dimercyl")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _emit(payload: dict, out) -> None:
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _config(args, kind: str) -> ex.ExperimentConfig:
    over = {"seed": args.seed, "out": args.out, "threads": args.threads}
    for key in ("n_samples", "ell", "mu", "M2", "M3", "aspect"):
        over[key] = getattr(args, key, None)
    if getattr(args, "widths", None):
        over["widths"] = [int(w) for w in args.widths.split(",")]
    dom = None
    if getattr(args, "domain", None):
        dom = args.domain
    elif getattr(args, "width", None) is not None:
        if args.height is None:
            raise ConfigError("--width needs --height (or use --domain)")
        dom = {"width": args.width, "height": args.height, "cut_column": args.cut_column}
    if dom is not None:
        over["domain"] = dom
    if args.config:
        cfg = ex.load_config(args.config, **over)
        if cfg.kind != kind:
            raise ConfigError(f"config is for {cfg.kind!r}, not {kind!r}")
        return cfg
    if over["threads"] is None:
        over["threads"] = ex.default_threads()
    return ex.ExperimentConfig.from_dict({"kind": kind}, **over)


# ---------------------------------------------------------------- commands

def cmd_validate(args) -> int:
    cfg = _config(args, "validate")
    rep = validate_temperleyan(cfg.domain)
    _emit({"valid": rep.ok, "issues": rep.issues, "domain_hash": cfg.domain.hash,
           "vertices": len(cfg.domain.vertices), "domain": domain_to_text(cfg.domain)}, cfg.out)
    return EXIT_OK if rep.ok else EXIT_INVALID


def cmd_sample(args) -> int:
    cfg = _config(args, "sample")
    if cfg.n_samples < 1:
        raise ConfigError("sample needs --n-samples >= 1")
    system, table = ex._solve(cfg.domain)
    covers = sample_covers(system, table, cfg.n_samples, cfg.seed, threads=cfg.threads)
    if args.covers:
        os.makedirs(args.covers, exist_ok=True)
        for k, m in enumerate(covers):
            write_cover(DimerCover(cfg.domain, m), cfg.seed, os.path.join(args.covers, f"cover_{k:06d}.txt"))
    h = heights_along(cfg.domain, covers, [dual_path(cfg.domain, TOP)])[:, 0]
    _emit({"domain_hash": cfg.domain.hash, "seed": cfg.seed, "n_samples": cfg.n_samples,
           "top_heights": h.tolist()}, cfg.out)
    return EXIT_OK


def cmd_moments(args) -> int:
    cfg = _config(args, "moments")
    rep, cmp_ = ex.run_moments(cfg)
    payload = rep.to_dict()
    payload["prediction"] = cmp_.to_dict() if cmp_ is not None else None
    _emit(payload, cfg.out)
    return EXIT_OK


def cmd_couplings(args) -> int:
    cfg = _config(args, "couplings")
    system, table = ex._solve(cfg.domain)
    worst = max(discrete_cr_residual(table, w) for w in cfg.domain.whites)
    summary = {"domain_hash": cfg.domain.hash, "delta": cfg.domain.delta,
               "cut_column": cfg.domain.cut_column, "log_abs_det": system.log_abs_det,
               "inverse_residual": table.residual, "max_cr_residual": worst}
    if args.table:
        export_table(table, args.table)
        summary["table"] = args.table
    _emit(summary, cfg.out)
    return EXIT_OK


def cmd_predict(args) -> int:
    cfg = _config(args, "predict")
    ctx = EllipticContext(cfg.ell)
    _emit(prediction_report(ctx, mu=cfg.mu, M2=cfg.M2, M3=cfg.M3), cfg.out)
    return EXIT_OK


def cmd_convergence(args) -> int:
    cfg = _config(args, "convergence")
    res = ex.run_convergence(cfg)
    if cfg.out:
        ex.write_convergence_csv(res, cfg.out)
    flags = res.flags()
    for name, ok in flags.items():
        if not ok:
            log.warning("%s: error sequence is not strictly decreasing", name)
    summary = {"widths": list(cfg.widths), "H2_errors": res.H2_errors, "F2_errors": res.F2_errors,
               "mu": res.mus, "mu_spread": res.mu_spread, **flags}
    sys.stdout.write(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def _parse_point(s: str) -> complex:
    try:
        x, y = (float(t) for t in s.split(","))
    except ValueError:
        raise ConfigError(f"point {s!r} is not 'x,y'") from None
    return complex(x, y)


def cmd_special_eval(args) -> int:
    if args.ell is None or args.ell <= 0:
        raise ConfigError("special-eval needs a positive --ell")
    ctx = EllipticContext(args.ell)
    mu = 0.0 if args.mu is None else args.mu
    pts = [_parse_point(p) for p in args.z] if args.z else [
        complex(x, y) for x in (0.3 * args.ell, 0.7 * args.ell) for y in (0.5, 1.5, 2.5)]
    e1, e2, e3 = half_periods(ctx)
    lines = [f"# ell={args.ell!r} mu={mu!r} c={ctx.c_ell!r} e1={e1!r} e2={e2!r} e3={e3!r}",
             "\t".join(("re_z", "im_z", "re_wp", "im_wp", "re_wp1", "im_wp1",
                        "re_zeta", "im_zeta", "re_f_mu", "im_f_mu"))]
    for z in pts:
        vals = (wp(z, ctx), wp_deriv(z, ctx, 1), zeta_w(z, ctx), f_mu(z, ctx, mu))
        cols = [z.real, z.imag] + [p for v in vals for p in (complex(v).real, complex(v).imag)]
        lines.append("\t".join(f"{v:.16e}" for v in cols))
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON experiment config")
    common.add_argument("--seed", type=int, metavar="U64")
    common.add_argument("--out", metavar="PATH")
    common.add_argument("--threads", type=int, metavar="N",
                        help=f"worker threads (default ${ex.THREADS_ENV} or 1)")
    common.add_argument("-v", "--verbose", action="store_true")

    dom = argparse.ArgumentParser(add_help=False)
    dom.add_argument("--domain", metavar="PATH", help="domain description file")
    dom.add_argument("--width", type=int)
    dom.add_argument("--height", type=int)
    dom.add_argument("--cut-column", dest="cut_column", type=int, default=0)

    p = argparse.ArgumentParser(prog="dimercyl", description="Dimers on Temperleyan cylinders.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("validate", parents=[common, dom], help="check the Temperleyan rules")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("sample", parents=[common, dom], help="draw exact uniform covers")
    s.add_argument("--n-samples", dest="n_samples", type=int, default=None)
    s.add_argument("--covers", metavar="DIR", help="also dump every cover to DIR")
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("moments", parents=[common, dom], help="exact and sampled top-height moments")
    s.add_argument("--n-samples", dest="n_samples", type=int, default=None)
    s.add_argument("--ell", type=float, help="modulus for non-straight domains")
    s.set_defaults(func=cmd_moments)

    s = sub.add_parser("couplings", parents=[common, dom], help="invert K and export the table")
    s.add_argument("--table", metavar="PATH", help="CSV dump of the coupling table")
    s.set_defaults(func=cmd_couplings)

    s = sub.add_parser("predict", parents=[common], help="elliptic moment predictions")
    s.add_argument("--ell", type=float)
    s.add_argument("--mu", type=float)
    s.add_argument("--M2", type=float)
    s.add_argument("--M3", type=float)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("convergence", parents=[common], help="mesh refinement study (CSV)")
    s.add_argument("--widths", help="comma-separated, e.g. 16,32,64")
    s.add_argument("--aspect", type=int, help="width / height (default 2)")
    s.set_defaults(func=cmd_convergence)

    s = sub.add_parser("special-eval", parents=[common], help="tabulate elliptic functions")
    s.add_argument("--ell", type=float, default=2 * math.pi)
    s.add_argument("--mu", type=float)
    s.add_argument("--z", action="append", metavar="X,Y", help="evaluation point (repeatable)")
    s.set_defaults(func=cmd_special_eval)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DomainError as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericalError, RangeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
