"""Optimization passes and the operation-aware recommendation strategy.

Every pass mutates a cloned program in place and reports the kinds of the
ops it rewrote ("fired" kinds). Passes accept ``only``, a set of kinds that
restricts which root ops they may touch; the bug reducer uses it to find
the op kinds a miscompilation depends on.
"""

import random
from dataclasses import dataclass, field

from . import intops
from .builder import Builder
from .intops import IntUB
from .ir import (INDEX, Block, Region, clone_op, clone_program, is_intlike, kinds,
                 replace_uses, walk, walk_blocks, bitwidth)
from .lowering import PassCrash, lower_to_exec, pending_kinds
from .registry import BINOP_SEMANTICS, CONSTANT_KINDS, COMPARE_KINDS, SELECT_KINDS, registry

OPT_PASSES = (
    "fold-constants",
    "cse",
    "dce",
    "canonicalize",
    "unsigned-when-equivalent",
    "loop-unroll",
    "licm",
    "strength-reduce",
)

FAULTS = {
    "fold-mul-zero": ("fold-constants", "x * 0 folds to x instead of 0"),
    "canon-neg": ("canonicalize", "0 - x is simplified to x"),
    "vec-splat-lane": ("convert-vector-to-exec", "splats wider than 4 lanes lose their last lane"),
    "unroll-iv": ("loop-unroll", "second unrolled copy reuses iv instead of iv + step"),
    "cse-load": ("cse", "memref.load is treated as pure and merged across stores"),
    "vec-reduce-crash": ("convert-vector-to-exec", "crashes on odd-length vector.reduce_add"),
}
SILENT_FAULTS = ("fold-mul-zero", "canon-neg", "vec-splat-lane", "unroll-iv", "cse-load")

_REG = registry()
_PURE = frozenset(k for k, d in _REG.items() if d.pure and not d.num_regions)
_INT_BINOPS = frozenset(BINOP_SEMANTICS)
_CASTS = frozenset({"arith.extsi", "arith.extui", "arith.trunci", "arith.index_cast",
                    "exec.sext", "exec.zext", "exec.trunc"})

RELEVANT = {
    "fold-constants": _INT_BINOPS | COMPARE_KINDS | SELECT_KINDS | _CASTS,
    "cse": _PURE,
    "dce": _PURE,
    "canonicalize": frozenset({"arith.addi", "arith.subi", "arith.muli", "index.add", "index.sub",
                               "index.mul", "exec.add", "exec.sub", "exec.mul", "arith.select",
                               "exec.select", "vector.extract", "vector.extract_strided_slice"}),
    "unsigned-when-equivalent": frozenset({"arith.divsi", "arith.remsi", "arith.shrsi", "arith.cmpi",
                                           "index.divs", "index.rems", "index.shrsi", "index.cmp"}),
    "loop-unroll": frozenset({"loop.for"}),
    "licm": frozenset({"loop.for"}),
    "strength-reduce": frozenset({"arith.muli", "arith.divui", "arith.remui", "index.mul",
                                  "index.divu", "index.remu", "exec.mul", "exec.udiv", "exec.urem"}),
}


def _allowed(op, only):
    return only is None or op.kind in only


def _const(v):
    op = v.op
    if op is not None and op.kind in CONSTANT_KINDS and is_intlike(v.type):
        return op.attrs["value"]
    return None


def _int_width(t):
    return bitwidth(t) if is_intlike(t) else None


def _xconst(b, value, t):
    return b.value("exec.constant", [], t, value=intops.wrap(value, bitwidth(t)))


class _Rewriter:
    """Shared bookkeeping: pending replacements, fired kinds, op removal."""

    def __init__(self, p, only):
        self.p, self.only = p, only
        self.mapping = {}
        self.fired = set()

    def replace(self, block, op, value):
        self.mapping[op.result] = value
        block.ops.remove(op)
        self.fired.add(op.kind)

    def finish(self):
        replace_uses(self.p, self.mapping)
        return self.fired


# ---------------------------------------------------------------- fold-constants

def _fold_value(op, args):
    k = op.kind
    t = op.result.type
    if k in _INT_BINOPS:
        return intops.BINOPS[BINOP_SEMANTICS[k]](args[0], args[1], bitwidth(t))
    if k in COMPARE_KINDS:
        return intops.compare(op.attrs["predicate"], args[0], args[1], bitwidth(op.operands[0].type))
    if k in ("arith.extui", "exec.zext"):
        return intops.wrap(intops.unsigned(args[0], bitwidth(op.operands[0].type)), bitwidth(t))
    return intops.wrap(args[0], bitwidth(t))  # sign-extension, truncation, index_cast


def fold_constants(p, faults=(), only=None):
    rw = _Rewriter(p, only)
    for block in list(walk_blocks(p)):
        for op in list(block.ops):
            if not _allowed(op, only) or op.kind not in RELEVANT["fold-constants"]:
                continue
            ops_ = [rw.mapping.get(v, v) for v in op.operands]
            op.operands = ops_
            if op.kind in SELECT_KINDS:
                c = _const(ops_[0])
                if c is not None:
                    rw.replace(block, op, ops_[1] if c else ops_[2])
                continue
            if not op.results or _int_width(op.result.type) is None:
                continue
            vals = [_const(v) for v in ops_]
            if op.kind in ("arith.muli", "index.mul", "exec.mul") and 0 in vals and None in vals:
                if "fold-mul-zero" in faults and op.kind == "arith.muli":
                    rw.replace(block, op, ops_[vals.index(None)])
                else:
                    b = Builder.before(block, op)
                    rw.replace(block, op, _xconst(b, 0, op.result.type))
                continue
            if None in vals:
                continue
            try:
                value = _fold_value(op, vals)
            except IntUB:
                continue  # folding would hide undefined behavior
            b = Builder.before(block, op)
            rw.replace(block, op, _xconst(b, value, op.result.type))
    return rw.finish()


# ---------------------------------------------------------------- cse / dce

def _attr_key(attrs):
    return tuple(sorted((k, tuple(v) if isinstance(v, list) else v) for k, v in attrs.items()))


def cse(p, faults=(), only=None):
    rw = _Rewriter(p, only)
    cseable = _PURE | ({"memref.load"} if "cse-load" in faults else frozenset())

    def visit(block, scope):
        scope = dict(scope)
        for op in list(block.ops):
            op.operands = [rw.mapping.get(v, v) for v in op.operands]
            for region in op.regions:
                for blk in region.blocks:
                    visit(blk, scope)
            if op.kind not in cseable or len(op.results) != 1 or not _allowed(op, only):
                continue
            key = (op.kind, tuple(id(v) for v in op.operands), _attr_key(op.attrs), op.result.type)
            prev = scope.get(key)
            if prev is not None:
                rw.replace(block, op, prev)
            else:
                scope[key] = op.result

    for f in p.functions:
        for blk in f.body.blocks:
            visit(blk, {})
    return rw.finish()


def dce(p, faults=(), only=None):
    fired = set()
    while True:
        used = {v for op in walk(p) for v in op.operands}
        removed = False
        for block in list(walk_blocks(p)):
            keep = []
            for op in block.ops:
                if (op.kind in _PURE and op.results and _allowed(op, only)
                        and not any(r in used for r in op.results)):
                    fired.add(op.kind)
                    removed = True
                else:
                    keep.append(op)
            block.ops = keep
        if not removed:
            return fired


# ---------------------------------------------------------------- canonicalize

_ADD = ("arith.addi", "index.add", "exec.add")
_SUB = ("arith.subi", "index.sub", "exec.sub")
_MUL = ("arith.muli", "index.mul", "exec.mul")


def canonicalize(p, faults=(), only=None):
    rw = _Rewriter(p, only)
    for block in list(walk_blocks(p)):
        for op in list(block.ops):
            if not _allowed(op, only):
                continue
            ops_ = op.operands = [rw.mapping.get(v, v) for v in op.operands]
            k = op.kind
            if k in _ADD or k in _SUB or k in _MUL:
                a, b = ops_
                ca, cb = _const(a), _const(b)
                if k in _ADD and cb == 0:
                    rw.replace(block, op, a)
                elif k in _ADD and ca == 0:
                    rw.replace(block, op, b)
                elif k in _SUB and cb == 0:
                    rw.replace(block, op, a)
                elif k in _MUL and cb == 1:
                    rw.replace(block, op, a)
                elif k in _MUL and ca == 1:
                    rw.replace(block, op, b)
                elif k == "arith.subi" and ca == 0 and "canon-neg" in faults:
                    rw.replace(block, op, b)
            elif k in SELECT_KINDS:
                if ops_[1] is ops_[2]:
                    rw.replace(block, op, ops_[1])
            elif k == "vector.extract":
                src = ops_[0].op
                if src is not None and src.kind == "vector.splat":
                    rw.replace(block, op, src.operands[0])
            elif k == "vector.extract_strided_slice":
                if op.attrs["offset"] == 0 and op.attrs["size"] == ops_[0].type.shape[0]:
                    rw.replace(block, op, ops_[0])
    return rw.finish()


# ---------------------------------------------------------------- unsigned-when-equivalent

def _nonneg(v, depth=0):
    """Conservative proof that integer ``v`` is non-negative as a signed value."""
    w = _int_width(v.type)
    if w is None or w < 2 or depth > 6:
        return False
    c = _const(v)
    if c is not None:
        return c >= 0
    op = v.op
    if op is None:
        return False
    k = op.kind
    if k in ("arith.extui", "exec.zext"):
        return bitwidth(op.operands[0].type) < w
    if k in ("arith.andi", "exec.and"):
        return any(_nonneg(x, depth + 1) for x in op.operands)
    if k in ("arith.shrui", "index.shrui", "exec.lshr"):
        amount = _const(op.operands[1])
        return amount is not None and 0 < amount < w
    if k in ("arith.remui", "index.remu", "exec.urem"):
        return _nonneg(op.operands[1], depth + 1)
    if k in ("arith.divui", "index.divu", "exec.udiv"):
        return _nonneg(op.operands[0], depth + 1)
    if k in SELECT_KINDS:
        return _nonneg(op.operands[1], depth + 1) and _nonneg(op.operands[2], depth + 1)
    return False


_TO_UNSIGNED = {
    "arith.divsi": "arith.divui", "arith.remsi": "arith.remui", "arith.shrsi": "arith.shrui",
    "index.divs": "index.divu", "index.rems": "index.remu", "index.shrsi": "index.shrui",
}
_PRED_UNSIGNED = {2: 6, 3: 7, 4: 8, 5: 9}


def unsigned_when_equivalent(p, faults=(), only=None):
    fired = set()
    for op in list(walk(p)):
        if not _allowed(op, only):
            continue
        k = op.kind
        if k in _TO_UNSIGNED:
            need = op.operands[:1] if k.endswith("shrsi") else op.operands
            if all(_nonneg(v) for v in need):
                op.kind = _TO_UNSIGNED[k]
                fired.add(k)
        elif k in ("arith.cmpi", "index.cmp"):
            pred = op.attrs["predicate"]
            if pred in _PRED_UNSIGNED and all(_nonneg(v) for v in op.operands):
                op.attrs["predicate"] = _PRED_UNSIGNED[pred]
                fired.add(k)
    return fired


# ---------------------------------------------------------------- loops

def _trip_count(op):
    lb, ub, step = (_const(v) for v in op.operands[:3])
    if None in (lb, ub, step) or step <= 0:
        return None
    return max(0, -(-(ub - lb) // step))


def loop_unroll(p, faults=(), only=None):
    """Unroll by two every loop.for with a constant, even trip count."""
    fired = set()
    for block in list(walk_blocks(p)):
        for op in list(block.ops):
            if op.kind != "loop.for" or not _allowed(op, only):
                continue
            trips = _trip_count(op)
            if trips is None or trips < 2 or trips % 2:
                continue
            step = _const(op.operands[2])
            body = op.regions[0].entry
            *inner, term = body.ops
            new = Block([a.type for a in body.args])
            b = Builder(new, guard=True)
            iv = new.args[0]
            carried = list(new.args[1:])
            for copy in range(2):
                if copy == 1 and "unroll-iv" not in faults:
                    iv = b.value("exec.add", [new.args[0], op.operands[2]], INDEX)
                vmap = dict(zip(body.args, [iv] + carried))
                for x in inner:
                    b.insert(clone_op(x, vmap))
                carried = [vmap.get(v, v) for v in term.operands]
            b.op("loop.yield", carried)
            op.operands[2] = _xconst(Builder.before(block, op), 2 * step, INDEX)
            op.regions = [Region([new])]
            fired.add(op.kind)
    return fired


def _hoistable(op):
    d = _REG[op.kind]
    return op.kind in _PURE and (d.ub_class == "None" or op.attrs.get("guarded"))


def licm(p, faults=(), only=None):
    """Move loop-invariant pure ops out of loop.for bodies."""
    fired = set()
    for block in list(walk_blocks(p)):
        for op in list(block.ops):
            if op.kind != "loop.for" or not _allowed(op, only):
                continue
            body = op.regions[0].entry
            inside = set(body.args)
            for x in walk_blocks_of(body):
                for y in x.ops:
                    inside.update(y.results)
            moved = []
            for x in list(body.ops):
                if _hoistable(x) and not any(v in inside for v in x.operands):
                    body.ops.remove(x)
                    moved.append(x)
                    inside.difference_update(x.results)
            if moved:
                pos = block.ops.index(op)
                block.ops[pos:pos] = moved
                fired.add(op.kind)
    return fired


def walk_blocks_of(block):
    yield block
    for op in block.ops:
        for region in op.regions:
            for b in region.blocks:
                yield from walk_blocks_of(b)


# ---------------------------------------------------------------- strength-reduce

_SHIFT_FOR = {"arith.muli": "arith.shli", "index.mul": "index.shli", "exec.mul": "exec.shl",
              "arith.divui": "arith.shrui", "index.divu": "index.shrui", "exec.udiv": "exec.lshr"}
_AND_FOR = {"arith.remui": "arith.andi", "exec.urem": "exec.and"}


def strength_reduce(p, faults=(), only=None):
    rw = _Rewriter(p, only)
    for block in list(walk_blocks(p)):
        for op in list(block.ops):
            k = op.kind
            if k not in RELEVANT["strength-reduce"] or not _allowed(op, only):
                continue
            ops_ = op.operands = [rw.mapping.get(v, v) for v in op.operands]
            t = op.result.type
            w = bitwidth(t)
            c = _const(ops_[1])
            x = ops_[0]
            if c is None and k in _MUL:
                c, x = _const(ops_[0]), ops_[1]
            if c is None or w < 2:
                continue
            c = intops.unsigned(c, w)
            if c < 2 or c & (c - 1) or c.bit_length() - 1 >= w:
                continue
            b = Builder.before(block, op, guard=True)
            if k in _SHIFT_FOR:
                rw.replace(block, op, b.value(_SHIFT_FOR[k], [x, _xconst(b, c.bit_length() - 1, t)], t))
            elif k in _AND_FOR:
                rw.replace(block, op, b.value(_AND_FOR[k], [x, _xconst(b, c - 1, t)], t))
            elif k == "index.remu":
                # index has no and; subtract the rounded-down multiple instead
                q = b.value("index.shrui", [x, _xconst(b, c.bit_length() - 1, t)], t)
                m = b.value("index.shli", [q, _xconst(b, c.bit_length() - 1, t)], t)
                rw.replace(block, op, b.value("index.sub", [x, m], t))
    return rw.finish()


# ---------------------------------------------------------------- driver

_OPT_FNS = {
    "fold-constants": fold_constants,
    "cse": cse,
    "dce": dce,
    "canonicalize": canonicalize,
    "unsigned-when-equivalent": unsigned_when_equivalent,
    "loop-unroll": loop_unroll,
    "licm": licm,
    "strength-reduce": strength_reduce,
}
assert set(_OPT_FNS) == set(OPT_PASSES)


@dataclass(frozen=True)
class OptPass:
    id: str
    relevant_kinds: frozenset

    def rewrite(self, p, faults=(), only=None):
        return apply_opt(p, self.id, faults, only)[0]


def opt_passes():
    return {pid: OptPass(pid, RELEVANT[pid]) for pid in OPT_PASSES}


def apply_opt(p, pass_id, faults=(), only=None, inplace=False):
    """Return ``(optimized program, fired kinds)``; failures surface as PassCrash."""
    fn = _OPT_FNS.get(pass_id)
    if fn is None:
        raise KeyError(f"unknown optimization pass {pass_id!r}")
    q = p if inplace else clone_program(p)
    try:
        fired = fn(q, frozenset(faults), None if only is None else frozenset(only))
    except Exception as exc:
        raise PassCrash(pass_id, f"{type(exc).__name__}: {exc}") from exc
    return q, fired


def eligible(p):
    present = kinds(p)
    return [pid for pid in OPT_PASSES if RELEVANT[pid] & present]


def recommend(p, n, rng, select="aware"):
    """``n`` pass ids sampled uniformly from the passes relevant to ``p``."""
    if n < 0:
        raise ValueError("n must be non-negative")
    if n == 0:
        return []
    pool = eligible(p) if select == "aware" else list(OPT_PASSES)
    if not pool:
        pool = list(OPT_PASSES)
    return [rng.choice(pool) for _ in range(n)]


@dataclass
class PassPipeline:
    """One compilation: the ordered lowering and optimization steps taken."""

    seed: int
    steps: list = field(default_factory=list)  # [("lower" | "opt", pass id)]
    plan_seed: int = None

    @property
    def opt_passes(self):
        return [pid for stage, pid in self.steps if stage == "opt"]

    @property
    def lowering_passes(self):
        return [pid for stage, pid in self.steps if stage == "lower"]

    def to_dict(self):
        return {"seed": self.seed, "plan_seed": self.plan_seed, "steps": [list(s) for s in self.steps]}

    @classmethod
    def from_dict(cls, d):
        return cls(d["seed"], [tuple(s) for s in d["steps"]], d.get("plan_seed"))


@dataclass
class Compiled:
    pipeline: PassPipeline
    program: object = None  # exec-only program, or None on failure
    error: Exception = None
    fired: set = field(default_factory=set)


def compile_pipeline(p, seed, optnum_each=1, *, plan_seed=None, step0=True, select="aware",
                     faults=(), budget=50, lowering="plan"):
    """Lower ``p`` while interleaving recommended optimizations after each step.

    ``seed`` drives the optimization choices; ``plan_seed`` (default ``seed``)
    breaks ties in the lowering planner.
    """
    rng = random.Random(seed)
    plan_seed = seed if plan_seed is None else plan_seed
    plan_rng = random.Random(plan_seed)
    out = Compiled(PassPipeline(seed, plan_seed=plan_seed))

    def opts(cur):
        for pid in recommend(cur, optnum_each, rng, select):
            out.pipeline.steps.append(("opt", pid))
            cur, fired = apply_opt(cur, pid, faults, inplace=True)
            out.fired |= fired
        return cur

    def on_step(cur, pid):
        out.pipeline.steps.append(("lower", pid))
        return opts(cur)

    try:
        cur = opts(clone_program(p)) if step0 else p
        out.program, _ = lower_to_exec(cur, budget, lowering, plan_rng, faults, on_step)
    except Exception as exc:
        out.error = exc
    return out


def build_pipelines(p, diffnum=2, optnum_each=1, seed=0, **kw):
    """``diffnum`` compilations of ``p`` driven by independent RNG streams."""
    if diffnum < 2:
        raise ValueError("diffnum must be at least 2")
    base = random.Random(seed)
    seeds = [base.getrandbits(32) for _ in range(diffnum)]
    # one planner stream for all of them, so only the optimizations differ
    plan_seed = base.getrandbits(32)
    return [compile_pipeline(p, s, optnum_each, plan_seed=plan_seed, **kw) for s in seeds]


def replay(p, steps, faults=(), only=None, budget=50):
    """Re-run recorded ``steps``; lowering is completed by the planner if needed.

    Returns ``(program, fired kinds)``.
    """
    from .lowering import apply_pass
    cur = clone_program(p)
    fired = set()
    for stage, pid in steps:
        if stage == "lower":
            cur = apply_pass(cur, pid, faults, inplace=True)
        else:
            cur, f = apply_opt(cur, pid, faults, only, inplace=True)
            fired |= f
    if pending_kinds(cur):
        cur, _ = lower_to_exec(cur, budget, "plan", None, faults)
    return cur, fired
