"""Acceptance criteria, each run at its stated scale and tolerance.

Every test records one PASS/FAIL line (printed in the terminal summary) and
then asserts, so a failing criterion both shows up in the list and fails.
"""

import itertools
import random
import statistics

import pytest

from silt.difftest import FuzzConfig, campaign
from silt.generator import GenConfig, generate
from silt.interp import inject_checksum, interpret
from silt.intops import int_min
from silt.lowering import lower_to_exec, merged_order, pending_kinds, plan
from silt.optimizer import FAULTS, SILENT_FAULTS, compile_pipeline
from silt.registry import BINOP_SEMANTICS
from silt.textfmt import parse_program, print_program, structurally_equal
from silt.ubfix import fix_ub

from helpers import ir, small_plan_programs
from verdicts import verdict

pytestmark = pytest.mark.slow

# [DERIVED] mean number of lowering passes the planner applies to the fixed
# programs of seeds 0..199, rng Random(seed); frozen at first build
MEAN_PLAN_LENGTH_200 = 8.535

# [DERIVED] case index of the first Silent report per fault in a 500-case
# campaign at seed 0, and the key it deduplicates to; frozen at first build,
# the case index is asserted as an upper bound
FIRST_DETECTION = {
    "fold-mul-zero": (14, "silent:arith.muli|fold-constants"),
    "canon-neg": (18, "silent:arith.subi|canonicalize"),
    "vec-splat-lane": (2, "silent:|convert-vector-to-exec"),
    "unroll-iv": (4, "silent:loop.for|loop-unroll"),
    "cse-load": (7, "silent:memref.load|cse"),
}


def fixed(seed):
    q, _ = fix_ub(generate(GenConfig(seed=seed)), seed=seed)
    return q


def test_1_ub_freedom():
    traps, failed = [], []
    for s in range(1000):
        q = fixed(s)
        inject_checksum(q)
        rng = random.Random(s)
        c = compile_pipeline(q, rng.getrandbits(32), optnum_each=rng.randint(0, 3),
                             select=rng.choice(("aware", "random")))
        if c.program is None:
            failed.append(s)
            continue
        for stage, prog in (("high", q), ("exec", c.program)):
            out = interpret(prog, mode="trap")
            if out.status == "UBTrap":
                traps.append((s, stage, out.trap_kind, out.op_path))
    ok = not traps and not failed
    verdict(1, "UB-freedom", ok, f"{len(traps)} traps, {len(failed)} lowering failures over 1000 programs")
    assert ok, (traps[:5], failed[:5])


def test_2_false_positives():
    clean, _ = campaign(FuzzConfig(seed=0, cases=1000))
    unfixed, _ = campaign(FuzzConfig(seed=0, cases=200, fix=False))
    fp = clean.reports.get("Silent", 0)
    contrast = unfixed.reports.get("Silent", 0)
    ok = fp == 0 and contrast >= 1
    verdict(2, "false positives", ok,
            f"{fp} Silent in 1000 fixed cases; {contrast} Silent in 200 unfixed cases")
    assert ok


def test_3_lowering_ablation():
    planned, lengths, random_ok = 0, [], 0
    for s in range(200):
        q = fixed(s)
        try:
            _, applied = lower_to_exec(q, 50, "plan", random.Random(s))
            planned += 1
            lengths.append(len(applied))
        except Exception:
            pass
        try:
            lower_to_exec(q, 50, "random", random.Random(s))
            random_ok += 1
        except Exception:
            pass
    mean = statistics.mean(lengths) if lengths else 0.0
    ok = planned == 200 and random_ok <= 10 and mean == pytest.approx(MEAN_PLAN_LENGTH_200)
    verdict(3, "lowering ablation", ok,
            f"planner {planned}/200, random {random_ok}/200, mean plan length {mean:.3f}")
    assert ok


@pytest.mark.parametrize("fault", SILENT_FAULTS)
def test_4_detection(fault):
    assert len(SILENT_FAULTS) >= 5
    summary, reports = campaign(FuzzConfig(seed=0, cases=500, faults=[fault]))
    silent = [k for k in summary.unique_keys if k["kind"] == "Silent"]
    first = silent[0]["first_case"] if silent else None
    budget, key = FIRST_DETECTION[fault]
    keys = [k["key"] for k in silent]
    ok = keys == [key] and first <= budget
    verdict(4, f"detection {fault}", ok, f"{len(silent)} Silent key(s) {keys}, first at case {first}")
    assert ok


def test_5_recommendation_ablation():
    counts = []
    for seed in range(3):
        row = []
        for select in ("aware", "random"):
            s, _ = campaign(FuzzConfig(seed=seed, cases=500, faults=sorted(FAULTS), opt_select=select))
            # summed first-detection case: informational, shows which mode gets there sooner
            row.append((len(s.unique_keys), sum(k["first_case"] for k in s.unique_keys)))
        counts.append(tuple(row))
    ok = all(a[0] >= r[0] for a, r in counts)
    detail = ", ".join(f"seed {i}: aware {a[0]} (first-case sum {a[1]}) vs random {r[0]} ({r[1]})"
                       for i, (a, r) in enumerate(counts))
    verdict(5, "recommendation ablation", ok, detail)
    assert ok


DIV_SHIFT = sorted(k for k, v in BINOP_SEMANTICS.items()
                   if v in ("sdiv", "udiv", "srem", "urem", "ceildivs", "shl", "ashr", "lshr")
                   and not k.startswith("index."))


def expected_traps(sem):
    """The UB catalogue for one i8 operation, written out independently."""
    out = set()
    for x in range(-128, 128):
        for d in range(-128, 128):
            if sem in ("shl", "ashr", "lshr"):
                if d % 256 >= 8:
                    out.add((x, d, "ShiftOverflow"))
            elif d == 0:
                out.add((x, d, "DivisionByZero"))
            elif sem in ("sdiv", "srem", "ceildivs") and x == -128 and d == -1:
                out.add((x, d, "SignedDivisionOverflow"))
    return out


def observed_traps(kind):
    const = "exec.constant" if kind.startswith("exec.") else "arith.constant"
    p = ir(f"""func @main() -> i8 {{
  %0 = {const} {{value = 0 : i8}} : i8
  %1 = {const} {{value = 0 : i8}} : i8
  %2 = {kind} %0, %1 : (i8, i8) -> i8
  exec.return %2 : (i8) -> ()
}}
""")
    ops = p.main.body.entry.ops
    out = set()
    for x in range(-128, 128):
        ops[0].attrs["value"] = x
        for d in range(-128, 128):
            ops[1].attrs["value"] = d
            r = interpret(p)
            if r.status == "UBTrap":
                out.add((x, d, r.trap_kind))
    return out


def checksum(body):
    p = ir("func @main() {\n" + body.strip("\n") + "\n  exec.return\n}\n")
    inject_checksum(p)
    return interpret(p).checksum


def test_6_micro_checks():
    problems = []
    assert len(DIV_SHIFT) == 15
    for kind in DIV_SHIFT:
        if observed_traps(kind) != expected_traps(BINOP_SEMANTICS[kind]):
            problems.append(f"trap table {kind}")
    assert (int_min(8), -1, "SignedDivisionOverflow") in expected_traps("sdiv")

    sums = [
        checksum("""
  %0 = arith.constant {value = 1 : i32} : i32
  %1 = arith.constant {value = 2 : i32} : i32
  %2 = arith.constant {value = 3 : i32} : i32"""),
        checksum("""
  %0 = memref.alloc : memref<4xi32>
  %1 = arith.constant {value = 1 : i1} : i1
  loop.if %1 : (i1) -> () {
    %2 = arith.constant {value = 5 : i32} : i32
    linalg.fill %2, %0 : (i32, memref<4xi32>) -> ()
    loop.yield
  } {
    loop.yield
  }"""),
        checksum("""
  %0 = arith.constant {value = 2.5 : f32} : f32
  %1 = arith.constant {value = 7 : i32} : i32"""),
    ]
    if sums != [6, 21, 7]:
        problems.append(f"checksums {sums}")

    for s in range(1000):
        text = print_program(generate(GenConfig(seed=s)))
        again = parse_program(text)
        if print_program(again) != text or not structurally_equal(again, parse_program(text)):
            problems.append(f"round trip seed {s}")
            break

    checked = 0
    for p in small_plan_programs(200, seed=1):
        ps, order = merged_order(pending_kinds(p))
        # brute force: every permutation that respects every ordered pair
        exts = {perm for perm in itertools.permutations(ps)
                if all(perm.index(a) < perm.index(b) for a, b in order)}
        for r in range(3):
            if tuple(plan(p, random.Random(r))) not in exts:
                problems.append(f"plan not a linear extension: {ps}")
        checked += 1
    ok = not problems
    verdict(6, "oracle micro-checks", ok,
            f"{len(DIV_SHIFT)} i8 trap tables, checksums {sums}, 1000 round trips, {checked} plans brute-forced"
            + (f"; problems: {problems[:3]}" if problems else ""))
    assert ok


def test_7_determinism(tmp_path):
    cfg = dict(seed=7, cases=60, faults=sorted(FAULTS))
    a, reports = campaign(FuzzConfig(out=str(tmp_path / "a"), **cfg))
    campaign(FuzzConfig(out=str(tmp_path / "b"), **cfg))
    same = all((tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()
               for n in ("bugs.jsonl", "summary.json"))
    ok = same and len(reports) > 0
    verdict(7, "determinism", ok, f"{len(reports)} reports; bugs.jsonl and summary.json identical: {same}")
    assert ok
