"""Command-line front end.

    lowrank decompose --method aca --pivot global --tol 1e-8 --input m.csv --out fac.json
    lowrank compare --family cauchy --qmax 8
    lowrank sensors --basis fac.json --criterion cond --L 6 --out sensors.json
    lowrank report --family analytic --mx 20 --ny 20 --methods pod,eim_inf --qmax 12 --out decay.csv

Exit codes: 0 success, 1 usage error, 2 numerical failure, 3 I/O error.
A flat ``key=value`` file given with ``--config`` supplies defaults for any
flag; flags on the command line win.  ``LOWRANK_LOG`` selects the log level
(``quiet``, ``info`` or ``debug``).
"""

import argparse
import logging
import os
import sys

import numpy as np

from . import __version__
from .aca import aca2_bivariate, aca_matrix
from .eim import eim_greedy, geim_greedy
from .gappy import GappyError, gappy_system, place_sensors_cond, place_sensors_error
from .kernels import ContractError
from .pod import pod_basis
from .sampling import (
    CsvFormatError,
    Grid,
    SamplingError,
    average,
    builtin_family,
    dirac_dictionary,
    materialize,
    read_matrix_csv,
    uniform_grid,
)
from .serialize import as_array, dumps, load, write_atomic
from .verify import METHODS, check_equivalence_aca_eim, decay_report, random_corpus

log = logging.getLogger("lowrank")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3
FAMILIES = ("product", "rank_k", "cauchy", "analytic", "exp_abs", "constant")

DEFAULTS = {
    "decompose": {"method": "aca", "pivot": "global", "row_rule": "cyclic", "p": "inf",
                  "tol": 1e-8, "rank": None, "seed": None, "dictionary": "dirac"},
    "compare": {"qmax": 8, "seed": 0, "count": 100},
    "sensors": {"criterion": "cond", "L": None, "p": "inf"},
    "report": {"methods": ",".join(METHODS), "qmax": 10},
}
SOURCE_DEFAULTS = {"input": None, "family": None, "mx": 20, "ny": 20, "param": None}


class UsageError(Exception):
    pass


class NumericalFailure(Exception):
    pass


class InputFormatError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _add_source(p):
    p.add_argument("--input", help="snapshot matrix as CSV")
    p.add_argument("--family", choices=FAMILIES, help="built-in function family")
    p.add_argument("--mx", type=int, help="x grid size for --family (default 20)")
    p.add_argument("--ny", type=int, help="y grid size for --family (default 20)")
    p.add_argument("--param", action="append", metavar="KEY=VALUE",
                   help="family parameter, e.g. c=0.5 (repeatable)")


def build_parser():
    parser = _Parser(prog="lowrank", description="Low-rank decompositions of function families.")
    parser.add_argument("--version", action="version", version=f"lowrank {__version__}")
    parser.add_argument("--config", help="flat key=value file with default flag values")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("decompose", help="POD, ACA, EIM or gEIM of one snapshot matrix")
    p.add_argument("--method", choices=("pod", "aca", "eim", "geim"))
    p.add_argument("--pivot", choices=("global", "partial"),
                   help="ACA pivoting; partial runs matrix ACA on rows/columns only")
    p.add_argument("--row-rule", dest="row_rule", choices=("cyclic", "random", "node_based"))
    p.add_argument("--p", choices=("1", "2", "inf"), help="EIM/gEIM norm")
    p.add_argument("--tol", type=float)
    p.add_argument("--rank", type=int, help="number of POD modes, or a rank cap")
    p.add_argument("--seed", type=int, help="seed for --row-rule random")
    p.add_argument("--dictionary", choices=("dirac", "dirac+average"),
                   help="gEIM dictionary")
    _add_source(p)
    p.add_argument("--out", help="output JSON (default: stdout)")

    p = sub.add_parser("compare", help="check ACA (global) against EIM (max norm)")
    _add_source(p)
    p.add_argument("--qmax", type=int)
    p.add_argument("--seed", type=int, help="seed of the random corpus (no --input/--family)")
    p.add_argument("--count", type=int, help="size of the random corpus")
    p.add_argument("--out", help="output JSON (default: stdout)")

    p = sub.add_parser("sensors", help="place gappy sensors for a stored basis")
    p.add_argument("--basis", required=False, help="JSON written by decompose (pod or eim)")
    p.add_argument("--criterion", choices=("cond", "error"))
    p.add_argument("--L", type=int, help="number of sensors")
    p.add_argument("--p", choices=("1", "2", "inf"), help="norm for --criterion error")
    _add_source(p)
    p.add_argument("--out", help="output JSON (default: stdout)")

    p = sub.add_parser("report", help="error decay table with the n-width floor")
    _add_source(p)
    p.add_argument("--methods", help=f"comma list from {','.join(METHODS)}")
    p.add_argument("--qmax", type=int)
    p.add_argument("--out", help="output CSV, or JSON if the name ends in .json")
    return parser


def read_config(path):
    """Parse a flat ``key=value`` file; ``#`` starts a comment."""
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror}") from exc
    for n, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _coerce(key, text, parser_action):
    if parser_action is not None and parser_action.type is not None:
        try:
            return parser_action.type(text)
        except ValueError:
            raise UsageError(f"config value for {key!r} is not valid: {text!r}") from None
    if parser_action is not None and parser_action.choices and text not in parser_action.choices:
        raise UsageError(f"config value for {key!r} must be one of {parser_action.choices}")
    return text


def resolve(args, parser):
    """Fill unset flags from the config file, then from built-in defaults."""
    defaults = dict(SOURCE_DEFAULTS)
    defaults.update(DEFAULTS.get(args.command, {}))
    config = read_config(args.config) if args.config else {}
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    actions = {a.dest: a for a in subparser._actions}
    for key, text in config.items():
        if key not in actions:
            raise UsageError(f"unknown config key {key!r} for {args.command}")
        if getattr(args, key) is None:
            if key == "param":
                value = [s.strip() for s in text.split(";") if s.strip()]
            else:
                value = _coerce(key, text, actions[key])
            setattr(args, key, value)
    for key, value in defaults.items():
        if getattr(args, key, None) is None:
            setattr(args, key, value)
    return args


def _params(items):
    out = {}
    for item in items or ():
        if "=" not in item:
            raise UsageError(f"--param expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        try:
            out[key.strip()] = float(value)
        except ValueError:
            raise UsageError(f"--param {key} must be numeric, got {value!r}") from None
    return out


def load_snapshots(args, required=True):
    if args.input and args.family:
        raise UsageError("give either --input or --family, not both")
    if args.input:
        log.info("reading %s", args.input)
        return read_matrix_csv(args.input)
    if args.family:
        if args.mx < 1 or args.ny < 1:
            raise UsageError("--mx and --ny must be positive")
        src = builtin_family(args.family, **_params(args.param))
        return materialize(src, uniform_grid(0.0, 1.0, args.mx), uniform_grid(0.0, 1.0, args.ny))
    if required:
        raise UsageError("one of --input or --family is required")
    return None


def _grids(snap):
    return {"x": snap.grid_x.describe(), "y": snap.grid_y.describe(), "weight": snap.weight}


def _config(args, keys):
    cfg = {k: getattr(args, k) for k in keys}
    cfg.update({"input": args.input, "family": args.family,
                "mx": args.mx if args.family else None,
                "ny": args.ny if args.family else None,
                "param": _params(args.param) if args.family else None})
    return cfg


def _emit(text, out):
    if out:
        write_atomic(out, text)
        log.info("wrote %s", out)
    else:
        sys.stdout.write(text)


def _columns(a):
    return [list(col) for col in np.asarray(a).T]


def cmd_decompose(args):
    snap = load_snapshots(args)
    method = args.method
    keys = ["method", "tol", "rank"]
    if method == "pod":
        q = args.rank if args.rank is not None else args.tol
        basis = pod_basis(snap, q)
        factors = {"Q": basis.Q, "eigenvalues": basis.eigenvalues, "basis": _columns(basis.basis)}
        history = {}
    elif method == "aca":
        keys += ["pivot", "row_rule", "seed"]
        if args.pivot == "global":
            ca = aca2_bivariate(snap, args.tol, "global", max_rank=args.rank)
        else:
            ca = aca_matrix(snap, args.tol, args.row_rule, seed=args.seed, max_rank=args.rank)
        factors = {"Q": ca.Q, "tau": ca.tau, "sigma": ca.sigma, "pivots": ca.pivots,
                   "u": _columns(ca.u), "v": _columns(ca.v), "status": ca.status,
                   "entry_count": ca.entry_count}
        history = {"indicator": ca.indicator_history, "max_remainder": ca.error_history}
    elif method == "eim":
        keys += ["p"]
        es = eim_greedy(snap, args.tol, args.p, max_rank=args.rank)
        factors = {"Q": es.Q, "sample_indices": es.sample_indices,
                   "interp_indices": es.interp_indices, "basis": _columns(es.basis),
                   "B": es.B, "recovery": es.recovery, "status": es.status}
        history = {"error": es.err_history}
    else:
        keys += ["p", "dictionary"]
        m = snap.shape[0]
        dictionary = dirac_dictionary(m)
        if args.dictionary == "dirac+average":
            dictionary.append(average(m))
        gs = geim_greedy(snap, dictionary, args.tol, args.p, max_rank=args.rank)
        factors = {"Q": gs.Q, "sample_indices": gs.sample_indices,
                   "functional_indices": gs.functional_indices,
                   "functional_labels": [dictionary[k].label for k in gs.functional_indices],
                   "basis": _columns(gs.basis), "B": gs.B, "status": gs.status}
        history = {"error": gs.err_history, "lebesgue_l2": gs.lebesgue_l2}
    doc = {"version": __version__, "method": method, "config": _config(args, keys),
           "seed": args.seed if method == "aca" else None, "grids": _grids(snap),
           "factors": factors, "history": history}
    log.info("%s: Q = %s", method, factors["Q"])
    _emit(dumps(doc), args.out)
    return EXIT_OK


def cmd_compare(args):
    snap = load_snapshots(args, required=False)
    if snap is not None:
        reports = [("input", check_equivalence_aca_eim(snap, args.qmax))]
    else:
        reports = [(f"corpus[{c.index}]", check_equivalence_aca_eim(c.snapshots, args.qmax))
                   for c in random_corpus(args.count, args.seed)]
    failed = [name for name, r in reports if not r.holds]
    doc = {"version": __version__, "method": "compare",
           "config": _config(args, ["qmax", "count"]),
           "seed": None if snap is not None else args.seed,
           "grids": _grids(snap) if snap is not None else None,
           "holds": not failed, "failed": failed,
           "reports": {name: r.as_record() for name, r in reports}}
    for name, r in reports:
        log.debug("%s: %s", name, r.summary())
    _emit(dumps(doc), args.out)
    if failed:
        log.error("equivalence fails on %d of %d instances", len(failed), len(reports))
        return EXIT_NUMERIC
    return EXIT_OK


def _rebuild_snapshots(doc):
    cfg = doc.get("config", {})
    if cfg.get("input"):
        return read_matrix_csv(cfg["input"])
    if cfg.get("family"):
        src = builtin_family(cfg["family"], **(cfg.get("param") or {}))
        gx = doc["grids"]["x"]
        gy = doc["grids"]["y"]
        return materialize(src, Grid(as_array(gx["points"]), gx["measure"]),
                           Grid(as_array(gy["points"]), gy["measure"]))
    raise UsageError("basis file records no snapshot source; pass --input or --family")


def cmd_sensors(args):
    if not args.basis:
        raise UsageError("--basis is required")
    if args.L is None or args.L < 1:
        raise UsageError("--L must be a positive integer")
    try:
        doc = load(args.basis)
        columns = doc["factors"]["basis"]
        measure = float(doc["grids"]["x"]["measure"])
    except (KeyError, TypeError) as exc:
        raise InputFormatError(f"{args.basis} is not a decompose output with a basis") from exc
    if not columns:
        raise NumericalFailure("stored basis is empty")
    basis = as_array(columns).T
    if args.criterion == "cond":
        placement = place_sensors_cond(basis, args.L, measure)
        history = {"kappa": placement.history}
        snap = None
    else:
        snap = load_snapshots(args, required=False) or _rebuild_snapshots(doc)
        placement = place_sensors_error(basis, snap, args.L, args.p, measure)
        history = {"error": placement.history}
    sys_ = gappy_system(basis, placement.sensors, measure)
    doc_out = {"version": __version__, "method": "sensors",
               "config": {"basis": args.basis, "criterion": args.criterion, "L": args.L,
                          "p": args.p if args.criterion == "error" else None},
               "seed": None, "grids": doc["grids"],
               "factors": {"sensors": placement.sensors, "gram": sys_.gram,
                           "gram_cond": sys_.gram_cond},
               "history": history}
    _emit(dumps(doc_out), args.out)
    return EXIT_OK


def _format_csv(rows, columns):
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(str(row[c]) if c == "Q" else format(row[c], ".17g")
                              for c in columns))
    return "\n".join(lines) + "\n"


def cmd_report(args):
    snap = load_snapshots(args)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    unknown = [m for m in methods if m not in METHODS]
    if unknown or not methods:
        raise UsageError(f"--methods must be a comma list from {','.join(METHODS)}")
    rows = decay_report(snap, methods, args.qmax)
    columns = ["Q", "nwidth"] + methods
    if args.out and args.out.endswith(".json"):
        text = dumps({"version": __version__, "method": "report",
                      "config": _config(args, ["methods", "qmax"]), "seed": None,
                      "grids": _grids(snap), "rows": rows})
    else:
        text = _format_csv(rows, columns)
    _emit(text, args.out)
    return EXIT_OK


COMMANDS = {"decompose": cmd_decompose, "compare": cmd_compare, "sensors": cmd_sensors,
            "report": cmd_report}


def _setup_logging():
    level = os.environ.get("LOWRANK_LOG", "info").lower()
    levels = {"quiet": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    log.handlers.clear()
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("lowrank: %(levelname)s: %(message)s"))
    log.addHandler(handler)
    log.setLevel(levels.get(level, logging.INFO))
    log.propagate = False
    if level not in levels:
        log.warning("unknown LOWRANK_LOG=%r, using info", level)


def run(argv=None):
    """Run the command line; returns the exit code."""
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            raise UsageError("a subcommand is required")
        resolve(args, parser)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (CsvFormatError, InputFormatError) as exc:
        log.error("%s", exc)
        return EXIT_IO
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_IO
    except (GappyError, NumericalFailure, np.linalg.LinAlgError, RuntimeError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except SamplingError as exc:
        log.error("%s", exc)
        return EXIT_NUMERIC
    except ContractError as exc:
        log.error("invalid input: %s", exc)
        return EXIT_USAGE
    except ValueError as exc:
        # malformed JSON basis files end up here
        log.error("%s", exc)
        return EXIT_IO


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
