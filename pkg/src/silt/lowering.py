"""Progressive lowering to the exec dialect.

Each non-exec op kind has a lowering path: the set of passes needed to
turn it into exec ops, plus the order among them. The planner merges the
paths of every kind present in a program and applies passes in an order
consistent with all of them, recomputing after each step.
"""

import random
from dataclasses import dataclass, field

from .builder import Builder
from .ir import (INDEX, I1, Block, IntType, Operation, Region, ShapedType, all_values, clone_program,
                 kinds, resolve, replace_uses, walk_blocks)

PASSES = (
    "bufferize",
    "lower-linalg-to-loops",
    "lower-loop-mem",
    "convert-loop-to-cf",
    "convert-vector-to-exec",
    "convert-memref-to-exec",
    "convert-arith-to-exec",
    "convert-index-to-exec",
    "convert-cf-to-exec",
)

# p -> passes that must come after p whenever both are on one kind's path
_DIRECT_ORDER = {
    "bufferize": ("lower-linalg-to-loops", "convert-memref-to-exec", "convert-index-to-exec"),
    "lower-linalg-to-loops": ("convert-loop-to-cf", "convert-memref-to-exec",
                              "convert-arith-to-exec", "convert-index-to-exec"),
    "lower-loop-mem": ("convert-memref-to-exec", "convert-vector-to-exec", "convert-index-to-exec"),
    "convert-loop-to-cf": ("convert-cf-to-exec", "convert-index-to-exec"),
}

_LOOP_MEM = ("loop.load", "loop.store", "loop.vector_load", "loop.vector_store")
_NEST = ("loop.for", "loop.yield", "memref.dim", "index.constant")
_COPYLIKE = _NEST + ("memref.load", "memref.store", "memref.alloc", "linalg.copy")

# kinds each kind turns into when its own pass runs (exec kinds omitted)
_EMITS = {
    "tensor.empty": ("memref.alloc",),
    "tensor.splat": ("memref.alloc", "linalg.fill"),
    "tensor.from_elements": ("memref.alloc", "memref.store", "index.constant"),
    "tensor.extract": ("memref.load",),
    "tensor.insert": ("memref.alloc", "memref.dim", "index.constant", "linalg.copy", "memref.store"),
    "tensor.dim": ("memref.dim",),
    "tensor.cast": ("memref.cast",),
    "linalg.fill": _NEST + ("memref.store",),
    "linalg.copy": _COPYLIKE,
    "linalg.transpose": _COPYLIKE,
    "linalg.broadcast": _COPYLIKE,
    "linalg.matmul": _COPYLIKE + ("arith.muli", "arith.addi"),
    "loop.for": ("cf.br", "cf.cond_br", "index.cmp", "index.add"),
    "loop.if": ("cf.br", "cf.cond_br"),
    "loop.yield": ("cf.br", "index.add"),
    "loop.load": ("memref.load", "index.add", "index.constant"),
    "loop.store": ("memref.store", "index.add", "index.constant"),
    "loop.vector_load": ("vector.load", "index.add", "index.constant"),
    "loop.vector_store": ("vector.store", "index.add", "index.constant"),
}


class LoweringError(Exception):
    pass


class LegalizationError(LoweringError):
    def __init__(self, pass_id, kind, blocker):
        super().__init__(f"{pass_id} applied while {kind} still needs {blocker} first")
        self.pass_id, self.kind, self.blocker = pass_id, kind, blocker


class BudgetExceeded(LoweringError):
    pass


class CyclicOrder(LoweringError):
    pass


class PassCrash(LoweringError):
    def __init__(self, pass_id, message):
        super().__init__(f"{pass_id}: {message}")
        self.pass_id, self.message = pass_id, message


class InternalCompilerError(Exception):
    """Raised by deliberately broken passes (see the fault harness)."""


# ---------------------------------------------------------------- lowering paths

def _closure(pairs):
    pairs = set(pairs)
    while True:
        extra = {(a, d) for a, b in pairs for c, d in pairs if b == c} - pairs
        if not extra:
            return frozenset(pairs)
        pairs |= extra


ORDER = _closure((p, q) for p, qs in _DIRECT_ORDER.items() for q in qs)


def handler_pass(kind):
    dialect = kind.split(".", 1)[0]
    if dialect == "loop":
        return "lower-loop-mem" if kind in _LOOP_MEM else "convert-loop-to-cf"
    return {
        "tensor": "bufferize", "linalg": "lower-linalg-to-loops",
        "vector": "convert-vector-to-exec", "memref": "convert-memref-to-exec",
        "arith": "convert-arith-to-exec", "index": "convert-index-to-exec",
        "cf": "convert-cf-to-exec",
    }[dialect]


@dataclass(frozen=True)
class LoweringPath:
    kind: str
    passes: frozenset
    order: frozenset = field(default_factory=frozenset)


def _path_passes(kind, memo):
    if kind in memo:
        return memo[kind]
    memo[kind] = frozenset()  # cycle guard
    ps = {handler_pass(kind)}
    if kind.startswith("linalg."):
        ps.add("bufferize")  # tensor forms go through bufferization first
    for k in _EMITS.get(kind, ()):
        ps |= _path_passes(k, memo)
    memo[kind] = frozenset(ps)
    return memo[kind]


def _build_db():
    from .registry import registry
    memo = {}
    db = {}
    for kind, desc in registry().items():
        if desc.dialect == "exec":
            continue
        ps = _path_passes(kind, memo)
        db[kind] = LoweringPath(kind, ps, frozenset((a, b) for a, b in ORDER if a in ps and b in ps))
    return db


PATHS_DB = _build_db()


def paths_db():
    return PATHS_DB


def pending_kinds(p):
    return {k for k in kinds(p) if not k.startswith("exec.")}


def merged_order(kind_set):
    ps, order = set(), set()
    for k in kind_set:
        path = PATHS_DB[k]
        ps |= path.passes
        order |= path.order
    return ps, order


def _toposort(ps, order, rng):
    ps = set(ps)
    out = []
    while ps:
        ready = sorted((p for p in ps if not any((q, p) in order for q in ps)), key=PASSES.index)
        if not ready:
            raise CyclicOrder(f"no pass is ready among {sorted(ps)}")
        pick = rng.choice(ready) if rng is not None else ready[0]
        out.append(pick)
        ps.remove(pick)
    return out


def plan(p, rng=None):
    """A linearization of the merged lowering paths of every kind in ``p``."""
    ps, order = merged_order(pending_kinds(p))
    return _toposort(ps, order, rng)


def violation(kind_set, applied, pass_id):
    """First (kind, blocker) that makes running ``pass_id`` now illegal."""
    for k in sorted(kind_set):
        path = PATHS_DB[k]
        for q in sorted(path.passes - set(applied)):
            if (q, pass_id) in path.order:
                return k, q
    return None


def next_pass(p, applied, rng=None):
    """Planner step: a legal, not yet applied pass, or None when done."""
    present = pending_kinds(p)
    if not present:
        return None
    ps, order = merged_order(present)
    ps -= set(applied)
    if not ps:
        raise LoweringError(f"kinds left with no pass to lower them: {sorted(present)}")
    ready = sorted((q for q in ps if not any((r, q) in order for r in ps)), key=PASSES.index)
    if not ready:
        raise CyclicOrder(f"no pass is ready among {sorted(ps)}")
    return rng.choice(ready) if rng is not None else ready[0]


def lower_to_exec(p, budget=50, mode="plan", rng=None, faults=(), on_step=None):
    """Lower ``p`` to the exec dialect; returns ``(program, applied)``.

    ``mode="random"`` draws passes uniformly instead of planning. ``on_step``
    is called as ``on_step(program, pass_id)`` after each pass and may return
    a replacement program (used to interleave optimizations).
    """
    if mode not in ("plan", "random"):
        raise ValueError(f"unknown lowering mode {mode!r}")
    if mode == "random" and rng is None:
        rng = random.Random(0)
    applied = []
    cur = clone_program(p)
    while True:
        present = pending_kinds(cur)
        if not present:
            return cur, applied
        if len(applied) >= budget:
            raise BudgetExceeded(f"{len(present)} kinds left after {budget} passes")
        if mode == "plan":
            pid = next_pass(cur, applied, rng)
        else:
            pid = rng.choice(PASSES)
        bad = violation(present, applied, pid)
        if bad is not None:
            raise LegalizationError(pid, *bad)
        cur = apply_pass(cur, pid, faults, inplace=True)
        applied.append(pid)
        if on_step is not None:
            cur = on_step(cur, pid) or cur


# ---------------------------------------------------------------- pass driver

def apply_pass(p, pass_id, faults=(), inplace=False):
    """Return ``p`` with one lowering pass applied (on a copy unless ``inplace``)."""
    fn = _PASS_FNS.get(pass_id)
    if fn is None:
        raise KeyError(f"unknown lowering pass {pass_id!r}")
    q = p if inplace else clone_program(p)
    try:
        fn(q, frozenset(faults))
    except LoweringError:
        raise
    except Exception as exc:  # a pass that blows up is a compiler crash
        raise PassCrash(pass_id, f"{type(exc).__name__}: {exc}") from exc
    return q


def _rewrite(p, rules):
    """Replace each op whose kind has a rule; rules return the new result values."""
    mapping = {}
    for block in list(walk_blocks(p)):
        for op in list(block.ops):
            fn = rules.get(op.kind)
            if fn is None:
                continue
            op.operands = [resolve(v, mapping) for v in op.operands]
            b = Builder.before(block, op, guard=True)
            new = fn(b, op)
            if new is False:  # rule declined
                continue
            for r, v in zip(op.results, new or ()):
                mapping[r] = v
            block.ops.remove(op)
    replace_uses(p, mapping)


def _extent(b, m, k):
    d = m.type.shape[k]
    return b.index(d) if d is not None else b.value("memref.dim", [m, b.index(k)], INDEX)


def _alloc_like(b, m):
    t = m.type
    dyn = [_extent(b, m, k) for k, d in enumerate(t.shape) if d is None]
    return b.value("memref.alloc", dyn, t)


def _loop_nest(b, extents, body):
    """Emit ``loop.for`` nests over ``extents``; ``body(builder, ivs)`` fills the core."""
    zero, one = b.index(0), b.index(1)

    def rec(bb, k, ivs):
        if k == len(extents):
            body(bb, ivs)
            return
        blk = Block([INDEX])
        bb.op("loop.for", [zero, extents[k], one], regions=[Region([blk])])
        inner = Builder(blk, guard=True)
        rec(inner, k + 1, ivs + [blk.args[0]])
        inner.op("loop.yield")

    rec(b, 0, [])


def _mem(t):
    return t.with_kind("memref") if isinstance(t, ShapedType) and t.kind == "tensor" else t


# ---------------------------------------------------------------- bufferize

def _b_empty(b, op):
    return [b.value("memref.alloc", op.operands, _mem(op.result.type))]


def _b_splat(b, op):
    m = b.value("memref.alloc", op.operands[1:], _mem(op.result.type))
    b.op("linalg.fill", [op.operands[0], m])
    return [m]


def _b_from(b, op):
    t = _mem(op.result.type)
    m = b.value("memref.alloc", [], t)
    for flat, v in enumerate(op.operands):
        idx, rest = [], flat
        for d in reversed(t.shape):
            idx.append(rest % d)
            rest //= d
        b.op("memref.store", [v, m] + [b.index(i) for i in reversed(idx)])
    return [m]


def _b_extract(b, op):
    return [b.value("memref.load", op.operands, op.result.type)]


def _b_insert(b, op):
    v, src, *idx = op.operands
    m = _alloc_like(b, src)
    b.op("linalg.copy", [src, m])
    b.op("memref.store", [v, m] + idx)
    return [m]


def _b_dim(b, op):
    return [b.value("memref.dim", op.operands, INDEX)]


def _b_cast(b, op):
    return [b.value("memref.cast", op.operands, _mem(op.result.type))]


def _b_linalg(b, op):
    if not op.results:
        return False
    outs = op.operands[-1]
    m = _alloc_like(b, outs)
    b.op("linalg.copy", [outs, m])
    b.op(op.kind, op.operands[:-1] + [m], attrs=op.attrs)
    return [m]


def _bufferize(p, faults):
    rules = {
        "tensor.empty": _b_empty, "tensor.splat": _b_splat, "tensor.from_elements": _b_from,
        "tensor.extract": _b_extract, "tensor.insert": _b_insert, "tensor.dim": _b_dim,
        "tensor.cast": _b_cast,
    }
    for k in ("linalg.copy", "linalg.matmul", "linalg.transpose", "linalg.broadcast"):
        rules[k] = _b_linalg
    # first retype values the rules do not replace (block args, selects, loop results)
    replaced = set(rules) - {"linalg.copy", "linalg.matmul", "linalg.transpose", "linalg.broadcast"}
    for v in list(all_values(p)):
        owner = v.op
        if owner is not None and owner.kind in replaced:
            continue
        if owner is not None and owner.kind.startswith("linalg."):
            continue
        v.type = _mem(v.type)
    _rewrite(p, rules)


# ---------------------------------------------------------------- linalg to loops

def _l_fill(b, op):
    v, m = op.operands
    _loop_nest(b, [_extent(b, m, k) for k in range(m.type.rank)],
               lambda bb, ivs: bb.op("memref.store", [v, m] + ivs))


def _elementwise(b, src, dst, src_index):
    def body(bb, ivs):
        x = bb.value("memref.load", [src] + src_index(ivs), dst.type.elem)
        bb.op("memref.store", [x, dst] + ivs)

    _loop_nest(b, [_extent(b, dst, k) for k in range(dst.type.rank)], body)


def _l_copy(b, op):
    if op.results:
        return False
    _elementwise(b, op.operands[0], op.operands[1], lambda ivs: ivs)


def _l_transpose(b, op):
    if op.results:
        return False
    perm = op.attrs["permutation"]

    def src_index(ivs):
        s = [None] * len(perm)
        for i, q in enumerate(perm):
            s[q] = ivs[i]
        return s

    _elementwise(b, op.operands[0], op.operands[1], src_index)


def _l_broadcast(b, op):
    if op.results:
        return False
    dst = op.operands[1]
    dims = set(op.attrs["dimensions"])
    kept = [i for i in range(dst.type.rank) if i not in dims]
    _elementwise(b, op.operands[0], dst, lambda ivs: [ivs[i] for i in kept])


def _l_matmul(b, op):
    if op.results:
        return False
    A, B, C = op.operands
    t = C.type.elem
    kext = _extent(b, A, 1)

    def body(bb, ivs):
        i, j = ivs
        acc0 = bb.value("memref.load", [C, i, j], t)
        blk = Block([INDEX, t])
        zero, one = bb.index(0), bb.index(1)
        loop = bb.op("loop.for", [zero, kext, one, acc0], [t], regions=[Region([blk])])
        inner = Builder(blk, guard=True)
        kk, acc = blk.args
        x = inner.value("memref.load", [A, i, kk], t)
        y = inner.value("memref.load", [B, kk, j], t)
        s = inner.value("arith.addi", [acc, inner.value("arith.muli", [x, y], t)], t)
        inner.op("loop.yield", [s])
        bb.op("memref.store", [loop.result, C, i, j])

    _loop_nest(b, [_extent(b, C, 0), _extent(b, C, 1)], body)


def _lower_linalg(p, faults):
    _rewrite(p, {"linalg.fill": _l_fill, "linalg.copy": _l_copy, "linalg.matmul": _l_matmul,
                 "linalg.transpose": _l_transpose, "linalg.broadcast": _l_broadcast})


# ---------------------------------------------------------------- loop memory ops

def _offset_indices(b, op, idx):
    offs = op.attrs.get("offsets") or [0] * len(idx)
    return [i if o == 0 else b.value("index.add", [i, b.index(o)], INDEX) for i, o in zip(idx, offs)]


def _lower_loop_mem(p, faults):
    def load(kind):
        return lambda b, op: [b.value(kind, [op.operands[0]] + _offset_indices(b, op, op.operands[1:]),
                                      op.result.type)]

    def store(kind):
        def rule(b, op):
            b.op(kind, op.operands[:2] + _offset_indices(b, op, op.operands[2:]))
        return rule

    _rewrite(p, {"loop.load": load("memref.load"), "loop.vector_load": load("vector.load"),
                 "loop.store": store("memref.store"), "loop.vector_store": store("vector.store")})


# ---------------------------------------------------------------- structured control flow to cf

def _replace_yield(block, make_branch):
    term = block.ops.pop()
    if term.kind != "loop.yield":
        raise LoweringError(f"region ends with {term.kind}, expected loop.yield")
    make_branch(Builder(block, guard=True), term.operands)


def _flatten(block, mapping):
    for i, op in enumerate(block.ops):
        if op.kind in ("loop.for", "loop.if"):
            break
    else:
        return [block]
    exit_ = Block([r.type for r in op.results])
    exit_.ops = block.ops[i + 1:]
    block.ops = block.ops[:i]
    for r, a in zip(op.results, exit_.args):
        mapping[r] = a
    pre = Builder(block, guard=True)
    if op.kind == "loop.for":
        lb, ub, step, *inits = op.operands
        body = op.regions[0].entry
        header = Block([INDEX] + [v.type for v in inits])
        pre.op("cf.br", [lb] + inits, successors=[header])
        hb = Builder(header, guard=True)
        c = hb.value("index.cmp", [header.args[0], ub], I1, predicate=2)
        carried = header.args[1:]
        hb.op("cf.cond_br", [c] + header.args + carried, attrs={"segments": [len(header.args), len(carried)]},
              successors=[body, exit_])

        def back_edge(bb, vals):
            nxt = bb.value("index.add", [body.args[0], step], INDEX)
            bb.op("cf.br", [nxt] + list(vals), successors=[header])

        _replace_yield(body, back_edge)
        return [block, header] + _flatten(body, mapping) + _flatten(exit_, mapping)
    then, other = op.regions[0].entry, op.regions[1].entry
    pre.op("cf.cond_br", [op.operands[0]], attrs={"segments": [0, 0]}, successors=[then, other])
    for blk in (then, other):
        _replace_yield(blk, lambda bb, vals: bb.op("cf.br", list(vals), successors=[exit_]))
    return [block] + _flatten(then, mapping) + _flatten(other, mapping) + _flatten(exit_, mapping)


def _loop_to_cf(p, faults):
    for f in p.functions:
        mapping = {}
        blocks = []
        for blk in f.body.blocks:
            blocks.extend(_flatten(blk, mapping))
        f.body.blocks = blocks
        replace_uses(blocks, mapping)


# ---------------------------------------------------------------- to exec

def _xconst(b, value, t=INDEX):
    return b.value("exec.constant", [], t, value=value)


def _flat_index(b, m, idx):
    """Row-major flat offset built from exec ops."""
    if not idx:
        return _xconst(b, 0)
    flat = idx[0]
    for k in range(1, len(idx)):
        d = m.type.shape[k]
        ext = _xconst(b, d) if d is not None else b.value("exec.dim", [m, _xconst(b, k)], INDEX)
        flat = b.value("exec.add", [b.value("exec.mul", [flat, ext], INDEX), idx[k]], INDEX)
    return flat


def _same(kind):
    return lambda b, op: b.op(kind, op.operands, [r.type for r in op.results], op.attrs,
                              successors=op.successors).results


def _convert_vector(p, faults):
    def splat(b, op):
        v = b.value("exec.vsplat", op.operands, op.result.type)
        n = op.result.type.shape[0]
        if "vec-splat-lane" in faults and n > 4:
            # broken wide-splat lowering: the last lane is left zeroed
            v = b.value("exec.vinsert", [_xconst(b, 0, op.result.type.elem), v], op.result.type, position=n - 1)
        return [v]

    def reduce(b, op):
        t = op.operands[0].type
        if "vec-reduce-crash" in faults and t.shape[0] % 2 == 1:
            raise InternalCompilerError(f"cannot legalize vector.reduce_add on {t} (odd lane count)")
        return [b.value("exec.vreduce", op.operands, op.result.type)]

    def slice_(b, op):
        src = op.operands[0]
        off, size = op.attrs["offset"], op.attrs["size"]
        t = op.result.type
        v = b.value("exec.vsplat", [b.value("exec.vextract", [src], t.elem, position=off)], t)
        for i in range(1, size):
            e = b.value("exec.vextract", [src], t.elem, position=off + i)
            v = b.value("exec.vinsert", [e, v], t, position=i)
        return [v]

    def load(b, op):
        m = op.operands[0]
        return [b.value("exec.vload", [m, _flat_index(b, m, op.operands[1:])], op.result.type)]

    def store(b, op):
        v, m = op.operands[:2]
        b.op("exec.vstore", [v, m, _flat_index(b, m, op.operands[2:])])

    _rewrite(p, {"vector.splat": splat, "vector.extract": _same("exec.vextract"),
                 "vector.insert": _same("exec.vinsert"), "vector.reduce_add": reduce,
                 "vector.extract_strided_slice": slice_, "vector.load": load, "vector.store": store})


def _convert_memref(p, faults):
    def load(b, op):
        m = op.operands[0]
        return [b.value("exec.load", [m, _flat_index(b, m, op.operands[1:])], op.result.type)]

    def store(b, op):
        v, m = op.operands[:2]
        b.op("exec.store", [v, m, _flat_index(b, m, op.operands[2:])])

    _rewrite(p, {"memref.alloc": _same("exec.alloc"), "memref.alloca": _same("exec.alloc"),
                 "memref.dim": _same("exec.dim"), "memref.load": load, "memref.store": store,
                 "memref.cast": _same("exec.cast"), "memref.realloc": _same("exec.realloc"),
                 "memref.assume_alignment": _same("exec.assume_alignment")})


_ARITH_BINOPS = {
    "addi": "add", "subi": "sub", "muli": "mul", "andi": "and", "ori": "or", "xori": "xor",
    "divsi": "sdiv", "divui": "udiv", "remsi": "srem", "remui": "urem",
    "shli": "shl", "shrsi": "ashr", "shrui": "lshr",
}
_INDEX_BINOPS = {
    "add": "add", "sub": "sub", "mul": "mul", "divs": "sdiv", "divu": "udiv",
    "rems": "srem", "remu": "urem", "shli": "shl", "shrsi": "ashr", "shrui": "lshr",
}


def _ceildiv(b, op):
    a, d = op.operands
    t = op.result.type
    q = b.value("exec.sdiv", [a, d], t)
    r = b.value("exec.srem", [a, d], t)
    nonzero = b.value("exec.icmp", [r, _xconst(b, 0, t)], I1, predicate=1)
    same_sign = b.value("exec.icmp", [b.value("exec.xor", [a, d], t), _xconst(b, 0, t)], I1, predicate=5)
    bump = b.value("exec.zext", [b.value("exec.and", [nonzero, same_sign], I1)], t)
    return [b.value("exec.add", [q, bump], t)]


def _index_cast(b, op):
    dst = op.result.type
    kind = "exec.sext" if dst == INDEX else "exec.trunc"
    return [b.value(kind, op.operands, dst)]


def _convert_arith(p, faults):
    rules = {f"arith.{k}": _same(f"exec.{v}") for k, v in _ARITH_BINOPS.items()}
    rules.update({
        "arith.constant": _same("exec.constant"), "arith.cmpi": _same("exec.icmp"),
        "arith.select": _same("exec.select"), "arith.extsi": _same("exec.sext"),
        "arith.extui": _same("exec.zext"), "arith.trunci": _same("exec.trunc"),
        "arith.index_cast": _index_cast, "arith.ceildivsi": _ceildiv,
    })
    _rewrite(p, rules)


def _convert_index(p, faults):
    rules = {f"index.{k}": _same(f"exec.{v}") for k, v in _INDEX_BINOPS.items()}
    rules.update({"index.constant": _same("exec.constant"), "index.cmp": _same("exec.icmp")})
    _rewrite(p, rules)


def _convert_cf(p, faults):
    _rewrite(p, {"cf.br": _same("exec.br"), "cf.cond_br": _same("exec.cond_br")})


_PASS_FNS = {
    "bufferize": _bufferize,
    "lower-linalg-to-loops": _lower_linalg,
    "lower-loop-mem": _lower_loop_mem,
    "convert-loop-to-cf": _loop_to_cf,
    "convert-vector-to-exec": _convert_vector,
    "convert-memref-to-exec": _convert_memref,
    "convert-arith-to-exec": _convert_arith,
    "convert-index-to-exec": _convert_index,
    "convert-cf-to-exec": _convert_cf,
}
assert set(_PASS_FNS) == set(PASSES)


# ---------------------------------------------------------------- path self-test

def probe_programs(kind):
    """Small programs that contain ``kind``; operands come from exec ops where possible."""
    from .ir import Function, Program, I32, memref, tensor, vector
    out = []

    def make(build):
        main = Function("main")
        b = Builder(main.body.entry, guard=True)
        build(b)
        b.op("exec.return")
        out.append(Program([main]))

    def c(b, v=1, t=I32):
        return b.value("exec.constant", [], t, value=v)

    def mem(b, shape=(2, 4)):
        return b.value("exec.alloc", [], memref(shape, I32))

    def vec(b, n=4):
        return b.value("exec.vsplat", [c(b)], vector((n,), I32))

    def ten(b, shape=(2, 4)):
        return b.value("tensor.splat", [c(b)], tensor(shape, I32))

    dialect, name = kind.split(".", 1)
    if kind in ("arith.constant",):
        make(lambda b: b.value(kind, [], I32, value=3))
    elif kind in ("arith.cmpi", "index.cmp"):
        t = I32 if dialect == "arith" else INDEX
        make(lambda b: b.value(kind, [c(b, 1, t), c(b, 2, t)], I1, predicate=2))
    elif kind == "arith.select":
        make(lambda b: b.value(kind, [c(b, 1, I1), c(b), c(b, 2)], I32))
    elif kind in ("arith.extsi", "arith.extui"):
        make(lambda b: b.value(kind, [c(b)], IntType(64)))
    elif kind == "arith.trunci":
        make(lambda b: b.value(kind, [c(b)], IntType(8)))
    elif kind == "arith.index_cast":
        make(lambda b: b.value(kind, [c(b)], INDEX))
        make(lambda b: b.value(kind, [c(b, 1, INDEX)], I32))
    elif kind == "index.constant":
        make(lambda b: b.value(kind, [], INDEX, value=3))
    elif dialect in ("arith", "index"):
        t = I32 if dialect == "arith" else INDEX
        make(lambda b: b.value(kind, [c(b, 7, t), c(b, 2, t)], t))
    elif kind in ("memref.alloc", "memref.alloca"):
        make(lambda b: b.value(kind, [c(b, 3, INDEX)], memref((2, None), I32)))
    elif kind == "memref.dim":
        make(lambda b: b.value(kind, [mem(b), c(b, 1, INDEX)], INDEX))
    elif kind == "memref.load":
        make(lambda b: b.value(kind, [mem(b), c(b, 1, INDEX), c(b, 2, INDEX)], I32))
    elif kind == "memref.store":
        make(lambda b: b.op(kind, [c(b), mem(b), c(b, 1, INDEX), c(b, 2, INDEX)]))
    elif kind == "memref.cast":
        make(lambda b: b.value(kind, [mem(b)], memref((None, 4), I32)))
    elif kind == "memref.realloc":
        make(lambda b: b.value(kind, [mem(b, (4,))], memref((8,), I32)))
    elif kind == "memref.assume_alignment":
        make(lambda b: b.op(kind, [mem(b)], attrs={"alignment": 4}))
    elif kind == "tensor.empty":
        make(lambda b: b.value(kind, [c(b, 3, INDEX)], tensor((2, None), I32)))
    elif kind == "tensor.splat":
        make(lambda b: b.value(kind, [c(b), c(b, 3, INDEX)], tensor((None,), I32)))
    elif kind == "tensor.from_elements":
        make(lambda b: b.value(kind, [c(b, i) for i in range(4)], tensor((2, 2), I32)))
    elif kind == "tensor.extract":
        make(lambda b: b.value(kind, [ten(b), c(b, 1, INDEX), c(b, 2, INDEX)], I32))
    elif kind == "tensor.insert":
        make(lambda b: b.value(kind, [c(b), ten(b), c(b, 1, INDEX), c(b, 2, INDEX)], tensor((2, 4), I32)))
    elif kind == "tensor.dim":
        make(lambda b: b.value(kind, [ten(b), c(b, 0, INDEX)], INDEX))
    elif kind == "tensor.cast":
        make(lambda b: b.value(kind, [ten(b)], tensor((None, 4), I32)))
    elif kind == "vector.splat":
        make(lambda b: b.value(kind, [c(b)], vector((8,), I32)))
    elif kind == "vector.extract":
        make(lambda b: b.value(kind, [vec(b)], I32, position=1))
    elif kind == "vector.insert":
        make(lambda b: b.value(kind, [c(b), vec(b)], vector((4,), I32), position=1))
    elif kind in ("vector.load", "loop.vector_load"):
        attrs = {"offsets": [0, 0]} if dialect == "loop" else {}
        make(lambda b: b.value(kind, [mem(b), c(b, 1, INDEX), c(b, 0, INDEX)], vector((4,), I32), **attrs))
    elif kind in ("vector.store", "loop.vector_store"):
        attrs = {"offsets": [1, 0]} if dialect == "loop" else {}
        make(lambda b: b.op(kind, [vec(b), mem(b), c(b, 0, INDEX), c(b, 0, INDEX)], attrs=attrs))
    elif kind == "vector.reduce_add":
        make(lambda b: b.value(kind, [vec(b)], I32))
    elif kind == "vector.extract_strided_slice":
        make(lambda b: b.value(kind, [vec(b)], vector((2,), I32), offset=1, size=2))
    elif kind == "loop.load":
        make(lambda b: b.value(kind, [mem(b), c(b, 0, INDEX), c(b, 1, INDEX)], I32, offsets=[1, 2]))
    elif kind == "loop.store":
        make(lambda b: b.op(kind, [c(b), mem(b), c(b, 0, INDEX), c(b, 1, INDEX)], attrs={"offsets": [1, 0]}))
    elif kind in ("loop.for", "loop.yield"):
        def build(b):
            blk = Block([INDEX, I32])
            b.op("loop.for", [c(b, 0, INDEX), c(b, 3, INDEX), c(b, 1, INDEX), c(b)], [I32],
                 regions=[Region([blk])])
            blk.ops.append(Operation("loop.yield", [blk.args[1]]))
        make(build)
    elif kind == "loop.if":
        def build(b):
            regions = []
            for v in (1, 2):
                blk = Block()
                blk.ops.append(Operation("exec.constant", [], [I32], {"value": v}))
                blk.ops.append(Operation("loop.yield", [blk.ops[0].result]))
                regions.append(Region([blk]))
            b.op("loop.if", [c(b, 1, I1)], [I32], regions=regions)
        make(build)
    elif kind == "linalg.fill":
        make(lambda b: b.op(kind, [c(b), mem(b)]))
    elif dialect == "linalg":
        shapes = {"linalg.copy": [(2, 4), (2, 4)], "linalg.matmul": [(2, 3), (3, 4), (2, 4)],
                  "linalg.transpose": [(4, 2), (2, 4)], "linalg.broadcast": [(4,), (2, 4)]}[kind]
        attrs = {"linalg.transpose": {"permutation": [1, 0]},
                 "linalg.broadcast": {"dimensions": [0]}}.get(kind, {})
        make(lambda b: b.op(kind, [mem(b, s) for s in shapes], attrs=attrs))
        make(lambda b: b.op(kind, [ten(b, s) for s in shapes], [tensor(shapes[-1], I32)], attrs=attrs))
    elif dialect == "cf":
        def build_cf(b):
            nxt = Block([I32])
            if kind == "cf.br":
                b.op(kind, [c(b)], successors=[nxt])
            else:
                b.op(kind, [c(b, 1, I1), c(b), c(b, 2)], attrs={"segments": [1, 1]}, successors=[nxt, nxt])
            return nxt
        main = Function("main")
        nxt = build_cf(Builder(main.body.entry))
        nxt.ops.append(Operation("exec.return"))
        main.body.blocks.append(nxt)
        out.append(Program([main]))
    else:
        raise KeyError(f"no probe for {kind}")
    return out


def linear_extensions(ps, order, limit=None):
    """All orderings of ``ps`` consistent with ``order`` (brute force)."""
    from itertools import permutations
    out = []
    for perm in permutations(sorted(ps)):
        pos = {p: i for i, p in enumerate(perm)}
        if all(pos[a] < pos[b] for a, b in order if a in pos and b in pos):
            out.append(list(perm))
            if limit is not None and len(out) >= limit:
                break
    return out


def check_paths_db(max_orders=24):
    """Apply every kind's path, in each allowed order, to its probe programs.

    Returns a list of ``(kind, order, problem)``; empty means the db holds.
    """
    from .verify import validate
    problems = []
    for kind in sorted(PATHS_DB):
        for prog in probe_programs(kind):
            if kind not in pending_kinds(prog):
                problems.append((kind, [], "probe lacks the kind"))
                continue
            ps, order = merged_order(pending_kinds(prog))
            for seq in linear_extensions(ps, order, max_orders):
                cur = prog
                try:
                    for pid in seq:
                        bad = violation(pending_kinds(cur), seq[:seq.index(pid)], pid)
                        if bad:
                            raise LegalizationError(pid, *bad)
                        cur = apply_pass(cur, pid)
                except LoweringError as exc:
                    problems.append((kind, seq, str(exc)))
                    continue
                left = pending_kinds(cur)
                report = validate(cur)
                if left or not report.ok:
                    problems.append((kind, seq, f"left {sorted(left)}; {report}"))
    return problems
