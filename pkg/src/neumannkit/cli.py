"""Command-line driver.

Verbs::

    neumannkit solve     GMRES (+ AMG) on a Matrix Market file or built-in problem
    neumannkit analyze   ILUT factor non-normality report
    neumannkit generate  write a built-in test matrix
    neumannkit scale     RCM reordering and/or Ruiz scaling of a matrix

Exit status of ``solve``: 0 converged, 2 iteration limit, 3 stall, 1 error.
Options may also come from a flat ``key = value`` file (``--config``); flags
given on the command line win.
"""

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .amg import AmgConfig, build_hierarchy
from .diagnostics import analyze_factorization
from .errors import SolverError
from .gmres import GmresConfig, gmres_solve
from .problems import PROBLEMS, make_problem
from .scaling import (Permutation, permute_symmetric, rcm_order, read_permutation, ruiz_scale,
                      write_permutation)
from .smoothers import SMOOTHER_KINDS, SmootherConfig
from .sparse import as_csr, mm_read, mm_write

log = logging.getLogger("neumannkit")

EXIT_OK, EXIT_ERROR, EXIT_MAXITER, EXIT_STALL = 0, 1, 2, 3

# option name -> (type, default)
SOLVE_DEFAULTS = {
    "matrix": (str, None),
    "problem": (str, None),
    "nx": (int, 32),
    "rhs": (str, None),
    "x0": (str, None),
    "permutation": (str, None),
    "seed": (int, 0),
    "max_iters": (int, 200),
    "tol": (float, 1e-5),
    "stop_rule": (str, "relres"),
    "projection": (str, "t_truncated"),
    "degree": (int, 1),
    "record_diagnostics": (bool, False),
    "preconditioner": (str, "amg"),
    "theta": (float, 0.25),
    "interpolation": (str, "mm_ext"),
    "max_levels": (int, 25),
    "min_coarse_size": (int, 50),
    "truncation_threshold": (float, 0.0),
    "max_elements_per_row": (int, 0),
    "aggressive_levels": (int, 0),
    "coarse_dense_limit": (int, 200),
    "smoother": (str, "hybrid_gs"),
    "coarse_smoother": (str, None),
    "sweeps": (int, 1),
    "poly_degree": (int, 2),
    "m_l": (int, 3),
    "m_u": (int, 3),
    "num_blocks": (int, 4),
    "ilu": (str, "ilu0"),
    "droptol": (float, 1e-2),
    "lfil": (int, 5),
    "ilu_scaling": (str, "ldu"),
    "out": (str, None),
    "history": (str, None),
    "solution": (str, None),
}

ANALYZE_DEFAULTS = {
    "matrix": (str, None),
    "problem": (str, None),
    "nx": (int, 32),
    "permutation": (str, None),
    "ordering": (str, "natural"),
    "droptol": (float, 1e-2),
    "lfil": (int, 5),
    "scaling": (str, "ldu"),
    "sweeps": (int, 3),
    "power_max": (int, 20),
    "seed": (int, 0),
    "out": (str, None),
}

# output paths are left out of the report so it does not depend on where it is written
OUTPUT_KEYS = ("out", "history", "solution")

CHOICES = {
    "stop_rule": ("relres", "nrbe"),
    "projection": ("t_full", "t_truncated", "classical_mgs"),
    "preconditioner": ("amg", "none"),
    "interpolation": ("bamg_direct", "mm_ext"),
    "smoother": SMOOTHER_KINDS,
    "coarse_smoother": SMOOTHER_KINDS,
    "ilu": ("ilu0", "ilut"),
    "ilu_scaling": ("ldu", "ruiz", "none"),
    "scaling": ("ldu", "ruiz", "none"),
    "ordering": ("natural", "rcm"),
    "problem": tuple(PROBLEMS),
}


class UsageError(Exception):
    pass


def _parse_bool(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def read_config_file(path):
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def _convert(key, value, table):
    kind, _ = table[key]
    if value is None:
        return None
    try:
        value = _parse_bool(value) if kind is bool else kind(value)
    except ValueError as exc:
        raise UsageError(f"bad value for {key}: {value!r}") from exc
    if key in CHOICES and value not in CHOICES[key]:
        raise UsageError(f"{key} must be one of {', '.join(CHOICES[key])}")
    return value


def resolve_options(args, table):
    """Defaults, then the config file, then explicit flags."""
    opts = {k: default for k, (_, default) in table.items()}
    if getattr(args, "config", None):
        for key, value in read_config_file(args.config).items():
            if key not in table:
                raise UsageError(f"unknown config key {key!r}")
            opts[key] = _convert(key, value, table)
    for key in table:
        value = getattr(args, key, None)
        if value is not None:
            opts[key] = _convert(key, value, table)
    return opts


def _add_options(parser, table):
    for key, (kind, default) in table.items():
        flag = "--" + key.replace("_", "-")
        if kind is bool:
            parser.add_argument(flag, dest=key, nargs="?", const="true", default=None,
                                help=f"(default {default})")
        else:
            parser.add_argument(flag, dest=key, default=None, metavar=key.upper(),
                                help=f"(default {default})")
    parser.add_argument("--config", help="flat key = value option file")


def _load_matrix(opts):
    if opts["matrix"]:
        if not Path(opts["matrix"]).is_file():
            raise FileNotFoundError(f"matrix file not found: {opts['matrix']}")
        return mm_read(opts["matrix"]), {"source": "file", "path": opts["matrix"]}
    if opts["problem"]:
        return (make_problem(opts["problem"], opts["nx"]),
                {"source": "generated", "problem": opts["problem"], "nx": opts["nx"]})
    raise UsageError("give --matrix or --problem")


def _load_vector(path, n, what):
    vec = np.loadtxt(path, dtype=np.float64, ndmin=1, comments=("#", "%"))
    if vec.shape != (n,):
        raise UsageError(f"{what} has {vec.size} entries, matrix has {n} rows")
    return vec


def _smoother_config(opts, kind):
    return SmootherConfig(kind=kind, sweeps=opts["sweeps"], degree=opts["poly_degree"],
                          m_L=opts["m_l"], m_U=opts["m_u"], num_blocks=opts["num_blocks"],
                          ilu=opts["ilu"], droptol=opts["droptol"], lfil=opts["lfil"],
                          scaling=opts["ilu_scaling"])


def amg_config(opts):
    coarse = opts["coarse_smoother"]
    return AmgConfig(theta=opts["theta"], max_levels=opts["max_levels"],
                     min_coarse_size=opts["min_coarse_size"],
                     interpolation=opts["interpolation"],
                     truncation_threshold=opts["truncation_threshold"],
                     max_elements_per_row=opts["max_elements_per_row"],
                     aggressive_levels=opts["aggressive_levels"],
                     smoother=_smoother_config(opts, opts["smoother"]),
                     coarse_smoother=_smoother_config(opts, coarse) if coarse else None,
                     rng_seed=opts["seed"], coarse_dense_limit=opts["coarse_dense_limit"])


def _emit(text, path):
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_solve(opts):
    """Run one solve; returns (exit status, report dict)."""
    timings = {}
    A, source = _load_matrix(opts)
    n = A.shape[0]
    perm = None
    if opts["permutation"]:
        perm = read_permutation(opts["permutation"])
        A = permute_symmetric(A, perm)
    b = (_load_vector(opts["rhs"], n, "rhs") if opts["rhs"] else A @ np.ones(n))
    x0 = _load_vector(opts["x0"], n, "x0") if opts["x0"] else None
    if perm is not None:
        b = perm.apply(b)
        x0 = None if x0 is None else perm.apply(x0)

    H = None
    if opts["preconditioner"] == "amg":
        t = time.perf_counter()
        H = build_hierarchy(A, amg_config(opts))
        timings["setup_seconds"] = time.perf_counter() - t
    cfg = GmresConfig(max_iters=opts["max_iters"], tol=opts["tol"], stop_rule=opts["stop_rule"],
                      projection=opts["projection"], degree=opts["degree"], preconditioner=H,
                      record_diagnostics=opts["record_diagnostics"])
    t = time.perf_counter()
    x, rep = gmres_solve(A, b, x0, cfg)
    timings["solve_seconds"] = time.perf_counter() - t
    rep.timings = timings

    out = {
        "options": {k: v for k, v in sorted(opts.items()) if k not in OUTPUT_KEYS},
        "matrix": dict(source, n=int(n), nnz=int(A.nnz)),
        "amg": H.summary() if H is not None else None,
        "solve": rep.to_dict(),
        "timings": timings,
    }
    _emit(json.dumps(out, indent=2, sort_keys=True) + "\n", opts["out"])
    if opts["history"]:
        Path(opts["history"]).write_text(rep.history_csv())
    if opts["solution"]:
        if perm is not None:
            x = perm.unapply(x)
        np.savetxt(opts["solution"], x, fmt="%.17g")
    status = {"max_iters": EXIT_MAXITER, "stall": EXIT_STALL}.get(rep.termination, EXIT_OK)
    log.info("%s after %d iterations (relres %.3e)", rep.termination, rep.iterations,
             rep.final_relres)
    return status, out


def cmd_analyze(opts):
    A, source = _load_matrix(opts)
    perm = read_permutation(opts["permutation"]) if opts["permutation"] else None
    report = analyze_factorization(A, droptol=opts["droptol"], lfil=opts["lfil"],
                                   scaling=opts["scaling"], ordering=opts["ordering"],
                                   sweeps=opts["sweeps"], power_max=opts["power_max"],
                                   permutation=perm, seed=opts["seed"])
    report["matrix"] = source
    _emit(json.dumps(report, indent=2, sort_keys=True, default=_json_default) + "\n",
          opts["out"])
    return EXIT_OK, report


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def cmd_generate(args):
    if args.problem not in PROBLEMS:
        raise UsageError(f"problem must be one of {', '.join(PROBLEMS)}")
    A = make_problem(args.problem, args.size)
    mm_write(A, args.path, symmetric=args.symmetric,
             comment=f"{args.problem} size={args.size}")
    log.info("wrote %s (n=%d, nnz=%d)", args.path, A.shape[0], A.nnz)
    return EXIT_OK


def cmd_scale(args):
    A = mm_read(args.matrix)
    info = {"n": int(A.shape[0]), "nnz": int(A.nnz)}
    if args.rcm:
        perm = rcm_order(A)
        A = permute_symmetric(A, perm)
        if args.perm_out:
            write_permutation(perm, args.perm_out)
    if args.ruiz:
        A, pair = ruiz_scale(A, max_iters=args.ruiz_iters)
        info["ruiz_iterations"] = pair.iterations_used
        if args.scaling_out:
            np.savetxt(args.scaling_out, np.column_stack((pair.d_row, pair.d_col)),
                       fmt="%.17g", header="d_row d_col")
    mm_write(as_csr(A), args.out)
    sys.stdout.write(json.dumps(info, sort_keys=True) + "\n")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="neumannkit", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("solve", help="solve A x = b with GMRES (+ AMG)")
    _add_options(p, SOLVE_DEFAULTS)

    p = sub.add_parser("analyze", help="ILUT factor non-normality report")
    _add_options(p, ANALYZE_DEFAULTS)

    p = sub.add_parser("generate", help="write a built-in test matrix")
    p.add_argument("problem", help=f"one of {', '.join(PROBLEMS)}")
    p.add_argument("size", type=int, help="grid points per direction (matrix order for hilbert)")
    p.add_argument("path")
    p.add_argument("--symmetric", action="store_true", help="write the lower triangle only")

    p = sub.add_parser("scale", help="RCM reordering and/or Ruiz scaling")
    p.add_argument("matrix")
    p.add_argument("out")
    p.add_argument("--rcm", action="store_true")
    p.add_argument("--ruiz", action="store_true")
    p.add_argument("--ruiz-iters", type=int, default=5)
    p.add_argument("--perm-out")
    p.add_argument("--scaling-out")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        if args.verb == "solve":
            return cmd_solve(resolve_options(args, SOLVE_DEFAULTS))[0]
        if args.verb == "analyze":
            return cmd_analyze(resolve_options(args, ANALYZE_DEFAULTS))[0]
        if args.verb == "generate":
            return cmd_generate(args)
        return cmd_scale(args)
    except (UsageError, OSError, ValueError, ArithmeticError, SolverError) as exc:
        print(f"neumannkit {args.verb}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
