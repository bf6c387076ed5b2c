"""Differential testing: compile each program several ways and compare checksums."""

import hashlib
import json
import multiprocessing
import os
import re
import time
from dataclasses import asdict, dataclass, field

from .generator import GenConfig, GeneratorDefect, generate
from .interp import inject_checksum, interpret
from .ir import clone_program
from .lowering import InternalCompilerError, LoweringError, PassCrash, apply_pass
from .optimizer import FAULTS, apply_opt, build_pipelines, replay
from .textfmt import print_program
from .ubfix import fix_ub
from .verify import validate

DEFAULT_FUEL = 400_000


@dataclass
class FuzzConfig:
    seed: int = 0
    cases: int = 100
    duration: float = None  # seconds; None means "until the case budget is spent"
    optnum_each: int = 1
    diffnum: int = 2
    lowering_budget: int = 50
    planner: str = "topo"  # or "random"
    opt_select: str = "aware"  # or "random"
    faults: list = field(default_factory=list)
    workers: int = 1
    out: str = None
    fix: bool = True
    step0: bool = True
    fuel: int = DEFAULT_FUEL
    reduce: bool = True
    gen: dict = field(default_factory=dict)

    def check(self):
        problems = []
        if self.diffnum < 2:
            problems.append("diffnum must be at least 2")
        if self.optnum_each < 0:
            problems.append("optnum_each must be non-negative")
        if self.lowering_budget < 0 or self.cases < 0 or (self.duration is not None and self.duration < 0):
            problems.append("budgets must be non-negative")
        if self.planner not in ("topo", "random"):
            problems.append(f"unknown planner {self.planner!r}")
        if self.opt_select not in ("aware", "random"):
            problems.append(f"unknown opt_select {self.opt_select!r}")
        unknown = [f for f in self.faults if f not in FAULTS]
        if unknown:
            problems.append(f"unknown faults {unknown}")
        if self.workers < 1:
            problems.append("workers must be at least 1")
        if problems:
            raise ValueError("; ".join(problems))
        return self

    def to_dict(self):
        d = asdict(self)
        d["faults"] = sorted(self.faults)
        return d


class NotReproducible(Exception):
    pass


@dataclass
class BugReport:
    kind: str  # "Silent" or "Crash"
    dedup_key: str
    program_pre: str
    program_post: str
    pipelines: list
    outcomes: list
    minimized_passes: list = None
    culprit_pass: str = None
    trigger_kinds: list = None
    case: int = 0
    seed: int = 0
    timestamp: int = 0  # logical: the case index, so reruns are byte-identical
    flaky: bool = False
    message: str = ""

    def to_dict(self):
        return asdict(self)


@dataclass
class CaseResult:
    case: int
    seed: int
    status: str  # "clean", "bug", or "discard"
    reports: list = field(default_factory=list)
    discard_reason: str = None
    lowered: int = 0  # pipelines that reached the exec dialect
    lowering_failures: int = 0
    plan_lengths: list = field(default_factory=list)


def derive_seed(*parts):
    h = hashlib.sha256("/".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(h[:6], "big")


_NORMALIZE = [
    (re.compile(r"0x[0-9a-fA-F]+"), "0x?"),
    (re.compile(r"\b(memref|tensor|vector)<[^>]*>"), r"\1<?>"),
    (re.compile(r"line \d+"), "line ?"),
    (re.compile(r"%\w+"), "%?"),
    (re.compile(r"\d+"), "N"),
]


def normalize_crash(message):
    for pattern, repl in _NORMALIZE:
        message = pattern.sub(repl, message)
    return message.strip()


def ddmin(items, fails):
    """Zeller's ddmin: a 1-minimal sublist of ``items`` for which ``fails`` holds."""
    items = list(items)
    cache = {}

    def test(sub):
        key = tuple(sub)
        if key not in cache:
            cache[key] = fails(sub)
        return cache[key]

    n = 2
    while len(items) >= 2:
        size = -(-len(items) // n)
        chunks = [items[i:i + size] for i in range(0, len(items), size)]
        for c in chunks:
            if test(c):
                items, n = c, 2
                break
        else:
            for i in range(len(chunks)):
                comp = [x for j, ch in enumerate(chunks) if j != i for x in ch]
                if test(comp):
                    items, n = comp, max(n - 1, 2)
                    break
            else:
                if n >= len(items):
                    break
                n = min(len(items), 2 * n)
    return items


def _run(program, cfg):
    return interpret(program, fuel=cfg.fuel, mode="native")


def _checksum_of(p, steps, cfg, only=None):
    try:
        prog, fired = replay(p, steps, cfg.faults, only, cfg.lowering_budget)
    except LoweringError:
        return None, set()
    out = _run(prog, cfg)
    return (out.checksum if out.status == "Finished" else None), fired


def minimize_passes(p, steps, cfg):
    """1-minimal set of opt passes that still changes the checksum.

    The reference is the same lowering sequence with every optimization
    removed; lowering steps are never dropped.
    """
    opt_idx = [i for i, (stage, _) in enumerate(steps) if stage == "opt"]
    lower_only = [s for s in steps if s[0] == "lower"]
    ref, _ = _checksum_of(p, lower_only, cfg)
    full, _ = _checksum_of(p, steps, cfg)
    if ref is None or full is None or full == ref:
        raise NotReproducible("pipeline does not differ from its unoptimized replay")

    def differs(idx):
        kept = set(idx)
        got, _ = _checksum_of(p, [s for i, s in enumerate(steps) if s[0] == "lower" or i in kept], cfg)
        return got is not None and got != ref

    return sorted({steps[i][1] for i in ddmin(opt_idx, differs)})


def _apply(cur, step, faults, only=None):
    stage, pid = step
    if stage == "lower":
        return apply_pass(cur, pid, faults, inplace=True)
    return apply_opt(cur, pid, faults, only, inplace=True)[0]


def localize(p, steps, cfg):
    """The step that breaks ``p``, as ``(pass, kinds)``, or None.

    Every intermediate program is interpretable, so the pipeline is replayed
    one step at a time and the culprit is the first step after which the
    checksum leaves the one of ``p`` itself. Steps that only enable the bad
    rewrite keep the checksum and are passed over. For an opt culprit,
    ``kinds`` are the op kinds whose rewrites in that step cause the change.
    """
    truth = _run(p, cfg)
    if truth.status != "Finished":
        return None
    cur = clone_program(p)
    for step in steps:
        before = clone_program(cur)
        try:
            cur = _apply(cur, step, cfg.faults)
        except (LoweringError, InternalCompilerError):
            return None
        out = _run(cur, cfg)
        if out.status == "Finished" and out.checksum != truth.checksum:
            if step[0] == "lower":
                return step[1], []
            return step[1], _culprit_kinds(before, step, cfg, truth.checksum)
    return None


def _culprit_kinds(before, step, cfg, truth):
    """Op kinds whose rewrites in ``step`` make ``before`` compute something else."""

    def result(*only_sets):
        cur = clone_program(before)
        for ks in only_sets:
            cur = _apply(cur, step, cfg.faults, set(ks))
        out = _run(cur, cfg)
        return out.checksum if out.status == "Finished" else None

    def wrong(ks):
        got = result(ks)
        return got is not None and got != truth

    _, fired = apply_opt(clone_program(before), step[1], cfg.faults)
    kinds = ddmin(sorted(fired), wrong)
    if not wrong(kinds):
        return sorted(fired)
    if len(kinds) < 2:
        return kinds
    # try each kind last; kinds that only enable another rewrite (a shift folded
    # to the 0 that x * 0 then matches) change nothing when run after the rest
    blamed = []
    for k in kinds:
        rest = set(kinds) - {k}
        a, b = result(rest), result(rest, {k})
        if a is not None and b is not None and a != b:
            blamed.append(k)
    return blamed or kinds


def run_case(p_raw, cfg, case=0, seed=0):
    """fix_ub, checksum, compile ``diffnum`` ways, run, and compare."""
    res = CaseResult(case, seed, "clean")
    pre = print_program(p_raw)
    if cfg.fix:
        p, _ = fix_ub(p_raw, seed=seed)
    else:
        p = clone_program(p_raw)
    inject_checksum(p)
    if not validate(p).ok:
        res.status, res.discard_reason = "discard", "invalid"
        return res
    post = print_program(p)
    compiled = build_pipelines(
        p, cfg.diffnum, cfg.optnum_each, seed=derive_seed(seed, "pipelines"),
        step0=cfg.step0, select=cfg.opt_select, faults=cfg.faults,
        budget=cfg.lowering_budget, lowering="plan" if cfg.planner == "topo" else "random")
    outcomes = []
    for c in compiled:
        if c.error is None:
            res.lowered += 1
            res.plan_lengths.append(len(c.pipeline.lowering_passes))
            outcomes.append(_run(c.program, cfg))
            continue
        outcomes.append(None)
        if isinstance(c.error, PassCrash):
            msg = str(c.error)
            res.reports.append(BugReport(
                "Crash", "crash:" + normalize_crash(msg), pre, post,
                [x.pipeline.to_dict() for x in compiled], [], case=case, seed=seed,
                timestamp=case, message=msg))
        else:
            res.lowering_failures += 1
    finished = [(c, o) for c, o in zip(compiled, outcomes) if o is not None and o.status == "Finished"]
    if any(o is not None and o.status == "FuelExhausted" for o in outcomes):
        res.discard_reason = "fuel"
    sums = {o.checksum for _, o in finished}
    if len(sums) >= 2:
        res.reports.append(_silent_report(p, compiled, outcomes, finished, cfg, pre, post, case, seed))
    if res.reports:
        res.status = "bug"
    elif res.discard_reason or (res.lowered == 0 and res.lowering_failures == 0):
        res.status = "discard"
        res.discard_reason = res.discard_reason or "no-pipeline"
    return res


def _reduce(p, pipelines, cfg):
    """(passes, culprit, kinds) from the first pipeline that reproduces, else Nones."""
    passes = None
    for c in pipelines:
        try:
            passes = minimize_passes(p, c.pipeline.steps, cfg)
            break
        except NotReproducible:
            continue
    for c in pipelines:
        found = localize(p, c.pipeline.steps, cfg)
        if found is not None:
            return (passes or []), found[0], found[1]
    if passes is not None:
        return passes, ",".join(passes), []
    return None, None, None


def _silent_report(p, compiled, outcomes, finished, cfg, pre, post, case, seed):
    rep = BugReport(
        "Silent", "", pre, post, [c.pipeline.to_dict() for c in compiled],
        [o.to_dict() if o is not None else None for o in outcomes],
        case=case, seed=seed, timestamp=case)
    passes, culprit, kinds = None, None, None
    if cfg.reduce:
        passes, culprit, kinds = _reduce(p, [c for c, _ in finished], cfg)
        rep.flaky = passes is None
    if passes is None:
        passes = sorted({pid for c, _ in finished for pid in c.pipeline.opt_passes})
        culprit, kinds = ",".join(passes), []
    rep.minimized_passes, rep.culprit_pass, rep.trigger_kinds = passes, culprit, kinds
    rep.dedup_key = "silent:" + ",".join(kinds) + "|" + culprit
    return rep


def dedup(reports):
    """One representative per dedup_key, with a ``duplicates`` count."""
    uniq = {}
    for r in reports:
        if r.dedup_key in uniq:
            uniq[r.dedup_key][1] += 1
        else:
            uniq[r.dedup_key] = [r, 0]
    return [(r, n) for r, n in uniq.values()]


# ---------------------------------------------------------------- campaign

def _case(args):
    cfg, i = args
    seed = derive_seed(cfg.seed, i)
    gen_cfg = GenConfig(seed=seed, **cfg.gen)
    try:
        p = generate(gen_cfg)
    except GeneratorDefect:
        return CaseResult(i, seed, "discard", discard_reason="generator")
    return run_case(p, cfg, i, seed)


def _cases(cfg, start):
    i = 0
    while i < cfg.cases:
        if cfg.duration is not None and time.monotonic() - start >= cfg.duration:
            return
        yield cfg, i
        i += 1


@dataclass
class CampaignSummary:
    config: dict
    cases_run: int = 0
    clean: int = 0
    discards: dict = field(default_factory=dict)
    pipelines_lowered: int = 0
    lowering_failures: int = 0
    mean_plan_length: float = None
    reports: dict = field(default_factory=dict)
    unique_bugs: dict = field(default_factory=dict)
    unique_keys: list = field(default_factory=list)

    @property
    def discard_rate(self):
        return sum(self.discards.values()) / self.cases_run if self.cases_run else 0.0

    @property
    def lowering_success_rate(self):
        total = self.pipelines_lowered + self.lowering_failures
        return self.pipelines_lowered / total if total else 0.0

    def to_dict(self):
        d = asdict(self)
        d["discard_rate"] = round(self.discard_rate, 6)
        d["lowering_success_rate"] = round(self.lowering_success_rate, 6)
        return d


def campaign(cfg, sink=None):
    """Generate and test programs until the case budget or duration runs out.

    Results are consumed in case order whatever the worker count, so the
    outputs depend only on (seed, config). Returns ``(summary, reports)``.
    """
    cfg.check()
    start = time.monotonic()
    # the output location is not part of the experiment, so it stays out of summary.json
    summary = CampaignSummary({k: v for k, v in cfg.to_dict().items() if k != "out"})
    reports, plan_lengths = [], []
    out = cfg.out
    bugs_file = None
    if out:
        os.makedirs(out, exist_ok=True)
        bugs_file = open(os.path.join(out, "bugs.jsonl"), "w")
    pool = multiprocessing.get_context("fork").Pool(cfg.workers) if cfg.workers > 1 else None
    try:
        results = pool.imap(_case, _cases(cfg, start), chunksize=1) if pool else map(_case, _cases(cfg, start))
        for res in results:
            summary.cases_run += 1
            summary.pipelines_lowered += res.lowered
            summary.lowering_failures += res.lowering_failures
            plan_lengths.extend(res.plan_lengths)
            if res.status == "clean":
                summary.clean += 1
            if res.discard_reason:
                summary.discards[res.discard_reason] = summary.discards.get(res.discard_reason, 0) + 1
            for r in res.reports:
                reports.append(r)
                summary.reports[r.kind] = summary.reports.get(r.kind, 0) + 1
                if bugs_file:
                    bugs_file.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")
                if sink:
                    sink(r)
    finally:
        if pool:
            pool.terminate()
        if bugs_file:
            bugs_file.close()
        uniq = dedup(reports)
        summary.unique_keys = [{"key": r.dedup_key, "kind": r.kind, "first_case": r.case, "duplicates": n}
                               for r, n in uniq]
        summary.unique_bugs = {k: sum(1 for r, _ in uniq if r.kind == k) for k in ("Silent", "Crash")}
        if plan_lengths:
            summary.mean_plan_length = round(sum(plan_lengths) / len(plan_lengths), 4)
        if out:
            _persist(out, summary, uniq, time.monotonic() - start)
    return summary, reports


def _persist(out, summary, uniq, elapsed):
    with open(os.path.join(out, "summary.json"), "w") as f:
        json.dump(summary.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    # wall-clock numbers live apart so summary.json stays reproducible
    with open(os.path.join(out, "timing.json"), "w") as f:
        rate = summary.cases_run / elapsed if elapsed > 0 else None
        json.dump({"seconds": round(elapsed, 3), "cases_per_second": rate}, f, indent=2)
        f.write("\n")
    for r, _ in uniq:
        d = os.path.join(out, "repro", f"case{r.case}_{hashlib.sha256(r.dedup_key.encode()).hexdigest()[:10]}")
        os.makedirs(d, exist_ok=True)
        with open(os.path.join(d, "pre_fix.silt"), "w") as f:
            f.write(r.program_pre)
        with open(os.path.join(d, "post_fix.silt"), "w") as f:
            f.write(r.program_post)
        with open(os.path.join(d, "pipelines.json"), "w") as f:
            json.dump({"pipelines": r.pipelines, "minimized_passes": r.minimized_passes,
                       "trigger_kinds": r.trigger_kinds, "dedup_key": r.dedup_key}, f, indent=2)
            f.write("\n")
