"""Command-line entry point: verify, canon and torus subcommands.

Exit codes: 0 success, 1 a gated target or numeric check failed, 2 usage
error, 3 engine error (parse failure, budget exceeded, invalid model).
"""
from __future__ import annotations

import argparse
import json
import os
import re
import sys
import tempfile
import time

from . import __version__

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_ENGINE = 0, 1, 2, 3

TORUS_TOLERANCES = {"parallelism": 1e-8, "defect": 1e-5, "ratio": 0.15}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


_COMPLEX = re.compile(r"^([+-]?\d+(?:\.\d*)?(?:e[+-]?\d+)?)([+-]\d+(?:\.\d*)?(?:e[+-]?\d+)?)i$", re.I)


def parse_complex(text):
    """RE+IMi (no spaces), or a plain real number."""
    m = _COMPLEX.match(text.strip())
    if m:
        return complex(float(m.group(1)), float(m.group(2)))
    try:
        return complex(float(text), 0.0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected RE+IMi, got {text!r}") from None


def _tags(text):
    out = {}
    for item in filter(None, (x.strip() for x in text.split(","))):
        name, _, val = item.partition("=")
        if val.lower() not in ("on", "off"):
            raise argparse.ArgumentTypeError(f"tag override must be NAME=on|off, got {item!r}")
        out[name] = val.lower() == "on"
    return out


def build_parser():
    p = _Parser(prog="hitchin-cas", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--budget", type=int, help="term budget per target (default $HITCHIN_CAS_BUDGET or 10^6)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    v = sub.add_parser("verify", help="close the registered identity targets")
    v.add_argument("--only", help="comma-separated target ids, or gated/informational/all")
    v.add_argument("--json", dest="json_path", help="write the JSON report here")
    v.add_argument("--markdown", help="write a markdown summary here")
    v.add_argument("--tags", type=_tags, default={}, help="axiom tag overrides, e.g. rigidity=off")
    v.add_argument("--mutate", action="store_true", help="negative control: flip one RHS sign per target")

    c = sub.add_parser("canon", help="print normal forms of the expressions in a file")
    c.add_argument("file", help="one expression per line; '-' reads stdin")
    c.add_argument("--rules", choices=("kahler", "family"), default="kahler")
    c.add_argument("--json", dest="json_path")

    t = sub.add_parser("torus", help="flat torus numerics")
    t.add_argument("--k", type=int, default=1)
    t.add_argument("--t", type=parse_complex, default=None, help="RE+IMi with RE = k (default k)")
    t.add_argument("--tau", type=parse_complex, default=1j)
    t.add_argument("--loop", type=float, default=0.01, help="side of the holonomy parallelogram")
    t.add_argument("--N", type=int, default=32, help="grid points per axis")
    t.add_argument("--mode", choices=("hitchin-witten", "hitchin"), default="hitchin-witten")
    t.add_argument("--scaling", action="store_true", help="also run the loop-halving sweep")
    t.add_argument("--tol-defect", type=float, default=TORUS_TOLERANCES["defect"])
    t.add_argument("--tol-parallelism", type=float, default=TORUS_TOLERANCES["parallelism"])
    t.add_argument("--json", dest="json_path")
    t.add_argument("--csv", dest="csv_path", help="defect-vs-loop-size table")
    return p


def write_atomic(path, text):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(doc, path):
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if path:
        write_atomic(path, text)
    else:
        sys.stdout.write(text)


def _config(args):
    cfg = {k: v for k, v in vars(args).items() if not callable(v)}
    for k, v in list(cfg.items()):
        if isinstance(v, complex):
            cfg[k] = [v.real, v.imag]
    from .canon import DEFAULT_BUDGET
    cfg["budget"] = DEFAULT_BUDGET
    cfg["version"] = __version__
    return cfg


# ---------------------------------------------------------------- subcommands

def cmd_verify(args):
    from . import verify
    from .family import family_rules
    only = args.only
    if only is None or only in ("gated", "informational", "all"):
        sel = only
    else:
        sel = [x.strip() for x in only.split(",") if x.strip()]
        unknown = [x for x in sel if x not in verify.REGISTRY]
        if unknown:
            raise UsageError(f"unknown target(s): {', '.join(unknown)}")
    rules = family_rules().with_tags(**args.tags) if args.tags else None
    report = verify.check_all(sel, mutate=args.mutate, rules_override=rules)
    report["config"] = _config(args)
    records, failed = report["targets"], report["failed_gated"]
    _emit(report, args.json_path)
    if args.markdown:
        write_atomic(args.markdown, verify.to_markdown(report))
    for r in records:
        print(f"{r['id']:6s} {r['status']:8s} {r['ms']:9.1f} ms", file=sys.stderr)
    if any(r["status"] == "error" for r in records):
        return EXIT_ENGINE
    return EXIT_OK if not failed else EXIT_FAIL


def cmd_canon(args):
    from .canon import get_normalizer
    from .expr import to_string
    from .family import family_rules
    from .parser import parse
    text = sys.stdin.read() if args.file == "-" else open(args.file, encoding="utf-8").read()
    rules = family_rules() if args.rules == "family" else None
    norm = get_normalizer(None, rules)
    out = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        nf = to_string(norm.normalize(parse(line)))
        out.append({"input": line, "normal_form": nf})
        print(nf)
    if args.json_path:
        _emit({"expressions": out, "config": _config(args)}, args.json_path)
    return EXIT_OK


def cmd_torus(args):
    from . import torus
    t0 = time.perf_counter()
    model = torus.TorusModel(args.k, args.tau, args.t, args.N)
    M, res = torus.hitchin_matrix(model)
    hol = torus.hw_holonomy(model, args.loop, mode=args.mode)
    rec = hol.record()
    rec.update(residuals=[float(r) for r in res], basis_dimension=len(torus.theta_basis(model)),
               connection_matrix_diag=[[z.real, z.imag] for z in M.diagonal()],
               trivialization=torus.TRIVIALIZATION)
    ok = max(res) < args.tol_parallelism and (args.mode != "hitchin-witten" or hol.defect < args.tol_defect)
    if args.scaling:
        sides = (4 * args.loop, 2 * args.loop, args.loop)
        rows, ratios = torus.convergence(model, sides, mode=args.mode)
        rec["scaling"] = {"sides": list(sides), "defects": [r.defect for r in rows], "ratios": ratios}
        ok = ok and all(abs(r - 4) <= TORUS_TOLERANCES["ratio"] * 4 for r in ratios)
        if args.csv_path:
            write_atomic(args.csv_path, torus.to_csv(rows))
    elif args.csv_path:
        write_atomic(args.csv_path, torus.to_csv([hol]))
    rec["ok"] = bool(ok)
    rec["ms"] = round((time.perf_counter() - t0) * 1000, 1)
    rec["config"] = _config(args)
    _emit(rec, args.json_path)
    return EXIT_OK if ok else EXIT_FAIL


def main(argv=None):
    from .canon import BudgetExceeded, set_budget
    from .expr import ExprError
    from .torus import TorusError
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"hitchin-cas: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.budget is not None:
        set_budget(args.budget)
    try:
        return {"verify": cmd_verify, "canon": cmd_canon, "torus": cmd_torus}[args.command](args)
    except UsageError as exc:
        print(f"hitchin-cas: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ExprError, BudgetExceeded, TorusError, OSError) as exc:
        print(f"hitchin-cas: {exc}", file=sys.stderr)
        return EXIT_ENGINE
    finally:
        if args.budget is not None:
            set_budget(None)


if __name__ == "__main__":
    sys.exit(main())
