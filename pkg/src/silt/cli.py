"""Command line entry point: ``silt <command> ...``.

Exit status is 0 on success, 1 for bad usage or bad input, 2 for an
internal defect. Diagnostics go to stderr as one JSON object per line.
"""

import argparse
import json
import os
import random
import sys
from dataclasses import fields
from pathlib import Path

from .difftest import FuzzConfig, campaign, derive_seed, run_case
from .generator import GenConfig, GeneratorDefect, generate, generate_corpus
from .interp import DEFAULT_FUEL, inject_checksum, interpret
from .lowering import LoweringError, PassCrash, lower_to_exec
from .optimizer import FAULTS, OPT_PASSES, apply_opt
from .report import plot_sweep, sweep_row, write_csv
from .textfmt import ParseError, parse_program, print_program
from .ubfix import fix_ub
from .verify import ValidationError


class UsageError(Exception):
    pass


def _diag(level, message, **extra):
    print(json.dumps({"level": level, "message": message, **extra}, sort_keys=True), file=sys.stderr)


def _read(path):
    text = sys.stdin.read() if path == "-" else Path(path).read_text()
    return parse_program(text)


def _emit(text, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _int_list(s):
    try:
        return [int(x) for x in s.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {s!r}")


def _fault_list(s):
    if s in ("", "none"):
        return []
    names = list(FAULTS) if s == "all" else [x.strip() for x in s.split(",") if x.strip()]
    bad = [n for n in names if n not in FAULTS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown faults {bad}; known: {', '.join(FAULTS)}")
    return names


# ---------------------------------------------------------------- config merge

def _env_seed(env):
    try:
        return int(env["SILT_SEED"])
    except ValueError:
        raise UsageError(f"SILT_SEED must be an integer, got {env['SILT_SEED']!r}")


def load_config(args, env=None):
    """Flags beat ``SILT_SEED``, which beats ``--config``, which beats defaults."""
    env = os.environ if env is None else env
    known = {f.name for f in fields(FuzzConfig)}
    merged = {}
    if getattr(args, "config", None):
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}")
        extra = set(data) - known
        if extra:
            raise UsageError(f"unknown config keys {sorted(extra)}")
        merged.update(data)
    if env.get("SILT_SEED"):
        merged["seed"] = _env_seed(env)
    for name in known:
        v = getattr(args, name, None)
        if v is not None:
            merged[name] = v
    try:
        return FuzzConfig(**merged).check()
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc))


# ---------------------------------------------------------------- commands

def cmd_gen(args):
    seed = args.seed
    if seed is None:
        seed = _env_seed(os.environ) if os.environ.get("SILT_SEED") else 0
    cfg = GenConfig(seed=seed)
    if args.count > 1 or args.out_dir:
        if not args.out_dir:
            raise UsageError("--count above 1 needs --out-dir")
        m = generate_corpus(cfg, args.count, args.out_dir)
        _diag("info", "corpus written", dir=args.out_dir, count=m["count"], corpus_hash=m["corpus_hash"])
    else:
        _emit(print_program(generate(cfg)), args.output)
    return 0


def cmd_fix(args):
    p = _read(args.file)
    q, trace = fix_ub(p, seed=args.seed)
    if args.checksum:
        inject_checksum(q)
    _emit(print_program(q), args.output)
    if args.trace:
        Path(args.trace).write_text(json.dumps(trace.to_list(), indent=2) + "\n")
    _diag("info", "fixed", rewrites=len(trace))
    return 0


def cmd_lower(args):
    p = _read(args.file)
    rng = random.Random(args.seed)
    mode = "plan" if args.planner == "topo" else "random"
    try:
        q, applied = lower_to_exec(p, budget=args.budget, mode=mode, rng=rng, faults=args.faults)
    except LoweringError as exc:
        _diag("error", str(exc), kind=type(exc).__name__)
        return 1
    if args.print_plan:
        print(json.dumps(applied))
        if args.output:
            Path(args.output).write_text(print_program(q))
        return 0
    _emit(print_program(q), args.output)
    _diag("info", "lowered", passes=applied)
    return 0


def cmd_opt(args):
    p = _read(args.file)
    fired = {}
    ids = [x for chunk in (args.passes or []) for x in chunk.split(",") if x]
    if not ids:
        raise UsageError("give at least one --pass")
    try:
        for pid in ids:
            if pid not in OPT_PASSES:
                raise UsageError(f"unknown pass {pid!r}; known: {', '.join(OPT_PASSES)}")
            p, f = apply_opt(p, pid, faults=args.faults, inplace=True)
            fired[pid] = sorted(f)
    except PassCrash as exc:
        _diag("error", str(exc), kind="PassCrash")
        return 1
    _emit(print_program(p), args.output)
    _diag("info", "optimized", fired=fired)
    return 0


def cmd_run(args):
    p = _read(args.file)
    if not p.main.result_types and not args.no_checksum:
        inject_checksum(p)
    out = interpret(p, fuel=args.fuel, mode=args.mode)
    print(json.dumps(out.to_dict(), sort_keys=True))
    return 0


def cmd_diff(args):
    p = _read(args.file)
    cfg = load_config(args)
    res = run_case(p, cfg, case=0, seed=derive_seed(cfg.seed, "diff"))
    print(json.dumps({
        "status": res.status,
        "discard_reason": res.discard_reason,
        "reports": [{"kind": r.kind, "dedup_key": r.dedup_key, "minimized_passes": r.minimized_passes}
                    for r in res.reports],
    }, indent=2, sort_keys=True))
    if cfg.out:
        os.makedirs(cfg.out, exist_ok=True)
        with open(os.path.join(cfg.out, "bugs.jsonl"), "w") as f:
            for r in res.reports:
                f.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")
    return 0


def cmd_fuzz(args):
    cfg = load_config(args)
    summary, _ = campaign(cfg)
    print(json.dumps(summary.to_dict(), indent=2, sort_keys=True))
    return 0


def cmd_sweep(args):
    base = load_config(args)
    out = base.out or "sweep"
    grid = {"optnum_each": args.optnum_grid, "diffnum": args.diffnum_grid}
    grid = {k: v for k, v in grid.items() if v}
    if not grid:
        raise UsageError("give at least one of --optnum-each or --diffnum as a comma list")
    rows = []
    for param, values in grid.items():
        for v in values:
            d = base.to_dict()
            d[param] = v
            d["out"] = os.path.join(out, f"{param}={v}")
            try:
                cfg = FuzzConfig(**d).check()
            except ValueError as exc:
                raise UsageError(str(exc))
            summary, _ = campaign(cfg)
            rows.append(sweep_row(param, v, summary))
            _diag("info", "sweep point done", param=param, value=v, unique=summary.unique_bugs)
    os.makedirs(out, exist_ok=True)
    write_csv(rows, os.path.join(out, "sweep.csv"))
    plot_sweep(rows, os.path.join(out, "sweep.png"))
    for r in rows:
        print(f"{r['param']}={r['value']}: silent={r['unique_silent']} crash={r['unique_crash']}")
    return 0


# ---------------------------------------------------------------- parser

def _campaign_flags(sp, grid=False):
    sp.add_argument("--config", help="JSON file with FuzzConfig fields")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--cases", type=int)
    sp.add_argument("--duration", type=float, help="seconds; stops early when reached")
    if grid:
        sp.add_argument("--optnum-each", dest="optnum_grid", type=_int_list, help="comma list, e.g. 1,3,5,7,9")
        sp.add_argument("--diffnum", dest="diffnum_grid", type=_int_list, help="comma list, e.g. 2,4,6,8,10")
    else:
        sp.add_argument("--optnum-each", dest="optnum_each", type=int, help="default 1")
        sp.add_argument("--diffnum", type=int, help="default 2")
    sp.add_argument("--lowering-budget", dest="lowering_budget", type=int, help="default 50")
    sp.add_argument("--planner", choices=("topo", "random"))
    sp.add_argument("--opt-select", dest="opt_select", choices=("aware", "random"))
    sp.add_argument("--faults", type=_fault_list, help="comma list, 'all' or 'none'")
    sp.add_argument("--workers", type=int)
    sp.add_argument("--fuel", type=int)
    sp.add_argument("--no-fix", dest="fix", action="store_const", const=False, help="skip UB elimination")
    sp.add_argument("--no-reduce", dest="reduce", action="store_const", const=False)
    sp.add_argument("--out", help="output directory")


def build_parser():
    ap = argparse.ArgumentParser(prog="silt", description="Generate, fix, lower, optimize, run and fuzz silt programs.")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("gen", help="generate a random program")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--count", type=int, default=1)
    sp.add_argument("--out-dir", help="write a corpus with manifest.json here")
    sp.add_argument("-o", "--output")
    sp.set_defaults(fn=cmd_gen)

    sp = sub.add_parser("fix", help="eliminate undefined behavior")
    sp.add_argument("file")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--trace", help="write the rewrite trace as JSON")
    sp.add_argument("--checksum", action="store_true", help="also make main return the checksum")
    sp.add_argument("-o", "--output")
    sp.set_defaults(fn=cmd_fix)

    sp = sub.add_parser("lower", help="lower to the exec dialect")
    sp.add_argument("file")
    sp.add_argument("--planner", choices=("topo", "random"), default="topo")
    sp.add_argument("--budget", type=int, default=50)
    sp.add_argument("--print-plan", action="store_true", help="print the applied passes as a JSON list")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--faults", type=_fault_list, default=[])
    sp.add_argument("-o", "--output")
    sp.set_defaults(fn=cmd_lower)

    sp = sub.add_parser("opt", help="apply optimization passes in order")
    sp.add_argument("file")
    sp.add_argument("--pass", "--passes", dest="passes", action="append",
                    help=f"pass id or comma list, repeatable; from {', '.join(OPT_PASSES)}")
    sp.add_argument("--faults", type=_fault_list, default=[])
    sp.add_argument("-o", "--output")
    sp.set_defaults(fn=cmd_opt)

    sp = sub.add_parser("run", help="interpret a program")
    sp.add_argument("file")
    sp.add_argument("--mode", choices=("trap", "native"), default="trap")
    sp.add_argument("--fuel", type=int, default=DEFAULT_FUEL)
    sp.add_argument("--no-checksum", action="store_true", help="do not add a checksum when main returns nothing")
    sp.set_defaults(fn=cmd_run)

    sp = sub.add_parser("diff", help="differentially test one program")
    sp.add_argument("file")
    _campaign_flags(sp)
    sp.set_defaults(fn=cmd_diff)

    sp = sub.add_parser("fuzz", help="run a fuzzing campaign")
    _campaign_flags(sp)
    sp.set_defaults(fn=cmd_fuzz)

    sp = sub.add_parser("sweep", help="run campaigns over a configuration grid")
    _campaign_flags(sp, grid=True)
    sp.set_defaults(fn=cmd_sweep)
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        return args.fn(args)
    except (UsageError, ParseError, ValidationError, OSError) as exc:
        _diag("error", str(exc), kind=type(exc).__name__)
        return 1
    except GeneratorDefect as exc:
        _diag("error", str(exc), kind="GeneratorDefect")
        return 2
    except Exception as exc:  # anything else is a bug in silt itself
        _diag("error", f"{type(exc).__name__}: {exc}", kind="internal")
        return 2


if __name__ == "__main__":
    sys.exit(main())
