"""UB elimination: rewrite every UB-prone op so no execution can misbehave.

The fixer walks the UB-prone ops in pre-order and applies one rule per op,
inserting ordinary IR (compare, select, fresh allocations) as runtime guards.
Every op it handles or creates is tagged ``guarded = 1``; a second pass skips
those, so fixing is idempotent.
"""

import random
from dataclasses import dataclass, field

from . import ir
from .ir import INDEX, I1, ShapedType
from .builder import Builder
from .intops import unsigned
from .registry import registry, CONSTANT_KINDS
from .interp import op_path

SIGNED_DIVS = {"arith.divsi", "arith.remsi", "arith.ceildivsi", "index.divs", "index.rems"}
EQ, SGE, SLE, ULE = 0, 5, 3, 7
DEFAULT_ALIGNMENT = 8
UNKNOWN_ALIGNMENT = 1

_INDEXED = {
    # kind -> (container operand position, first index position)
    "memref.load": (0, 1), "memref.store": (1, 2),
    "tensor.extract": (0, 1), "tensor.insert": (1, 2),
    "loop.load": (0, 1), "loop.store": (1, 2),
    "vector.load": (0, 1), "vector.store": (1, 2),
    "loop.vector_load": (0, 1), "loop.vector_store": (1, 2),
}

STRATEGIES = (
    "ReplaceOperand", "BoundIndex", "RuntimeGuardedReplace", "AttributeRewrite",
    "InitializeMemory", "UseChainRedirect", "ZeroDimReplace",
)


@dataclass(frozen=True)
class UBRule:
    name: str
    applies_to: frozenset
    condition: str
    strategy: str
    emits_runtime_check: bool


_k = frozenset
RULES = (
    UBRule("scalar-div", _k({"arith.divsi", "arith.divui", "arith.remsi", "arith.remui", "arith.ceildivsi",
                             "index.divs", "index.divu", "index.rems", "index.remu"}),
           "divisor is 0, or -1 with a minimal dividend (signed)", "ReplaceOperand", True),
    UBRule("scalar-shift", _k({"arith.shli", "arith.shrsi", "arith.shrui",
                               "index.shli", "index.shrsi", "index.shrui"}),
           "shift amount >= bit width", "ReplaceOperand", False),
    UBRule("index-oob", _k({"memref.load", "memref.store", "tensor.extract", "tensor.insert",
                            "loop.load", "loop.store", "memref.dim", "tensor.dim"}),
           "index outside the container (or rank)", "BoundIndex", False),
    UBRule("array-load-store", _k({"vector.load", "vector.store", "loop.vector_load", "loop.vector_store"}),
           "vector access runs past the last dimension", "RuntimeGuardedReplace", True),
    UBRule("shape", _k({"linalg.copy", "linalg.matmul", "linalg.transpose", "linalg.broadcast",
                        "memref.cast", "tensor.cast", "loop.yield"}),
           "operand extents disagree", "RuntimeGuardedReplace", True),
    UBRule("alignment", _k({"memref.assume_alignment"}), "claimed alignment exceeds the real one",
           "AttributeRewrite", False),
    UBRule("realloc", _k({"memref.realloc"}), "source used after being released", "UseChainRedirect", True),
    UBRule("alloc-init", _k({"memref.alloc", "memref.alloca"}), "read before write; invalid extent",
           "InitializeMemory", True),
    UBRule("zero-dim", _k({"tensor.empty"}), "contents undefined; zero extents", "ZeroDimReplace", False),
)
RULE_FOR_KIND = {k: r for r in RULES for k in r.applies_to}


class UnsupportedOp(Exception):
    pass


@dataclass
class FixRecord:
    op_path: str
    rule: str
    inserted: int

    def to_dict(self):
        return {"op_path": self.op_path, "rule": self.rule, "inserted": self.inserted}


@dataclass
class FixTrace:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __bool__(self):
        return bool(self.records)

    def to_list(self):
        return [r.to_dict() for r in self.records]


def collect_ub_prone_ops(p):
    """Ops whose kind has a UB class, in pre-order (nested regions included)."""
    table = registry()
    return [op for op in ir.walk(p) if table[op.kind].ub_class != "None"]


def _const_of(v):
    op = v.op
    if op is not None and op.kind in CONSTANT_KINDS:
        return op.attrs["value"]
    return None


def _is_guarded(op):
    return bool(op.attrs.get("guarded"))


class _Fixer:
    def __init__(self, p, seed=0):
        self.p = p
        self.rng = random.Random(seed)
        self.trace = FixTrace()
        self.bounded = {}  # (block, index, container, dim) -> shared bounded index
        self.reindex()

    def reindex(self):
        self.block_of = {}
        self.parent_of = {}
        for block in ir.walk_blocks(self.p):
            for op in block.ops:
                self.block_of[op] = block
                for r in op.regions:
                    for b in r.blocks:
                        self.parent_of[b] = op

    def builder(self, op, after=False):
        block = self.block_of[op]
        idx = block.ops.index(op) + (1 if after else 0)
        return Builder(block, idx, guard=True)

    def record(self, path, rule, inserted):
        self.trace.records.append(FixRecord(path, rule, inserted))

    def rand_const(self, b, t):
        if t == INDEX:
            return b.index(self.rng.randint(1, 8))
        if isinstance(t, ir.FloatType):
            return b.value("arith.constant", [], t, value=float(self.rng.randint(1, 8)))
        return b.const(self.rng.randint(1, min(100, (1 << (t.width - 1)) - 1)), t)

    # -- small IR helpers

    def cmp(self, b, pred, x, y):
        kind = "index.cmp" if x.type == INDEX else "arith.cmpi"
        return b.value(kind, [x, y], I1, predicate=pred)

    def select(self, b, c, x, y):
        return b.value("arith.select", [c, x, y], x.type)

    def dim(self, b, x, k):
        kind = "tensor.dim" if x.type.kind == "tensor" else "memref.dim"
        return b.value(kind, [x, b.index(k)], INDEX)

    def extent(self, b, x, k):
        """Extent ``k`` of ``x`` as an int (static) or an index value."""
        d = x.type.shape[k]
        return d if d is not None else self.dim(b, x, k)

    def as_value(self, b, e):
        return b.index(e) if isinstance(e, int) else e

    def clamp_extent(self, b, e):
        lo = self.cmp(b, SGE, e, b.index(1))
        hi = self.cmp(b, SLE, e, b.index(ir.MAX_DIM))
        ok = b.value("arith.andi", [lo, hi], I1)
        return self.select(b, ok, e, b.index(self.rng.randint(1, 6)))

    def fresh(self, b, t, extents):
        """A new initialized container of type ``t``; ``extents`` gives every dim."""
        dyn = [self.as_value(b, e) for e, d in zip(extents, t.shape) if d is None]
        if t.kind == "tensor":
            return b.value("tensor.splat", [self.rand_const(b, t.elem)] + dyn, t, guarded=1)
        m = b.value("memref.alloc", dyn, t)
        b.op("linalg.fill", [self.rand_const(b, t.elem), m])
        return m

    def cast(self, b, x, t):
        if x.type == t:
            return x
        kind = "tensor.cast" if t.kind == "tensor" else "memref.cast"
        return b.value(kind, [x], t)

    def conform(self, b, x, required):
        """Return a value whose extents meet ``required`` (None, int or index value per dim).

        Static disagreements are resolved by a fresh container; dims only known
        at runtime get a check selecting between ``x`` and a fresh container.
        """
        t = x.type
        shape = list(t.shape)
        checks = []
        static_bad = False
        for k, r in enumerate(required):
            if r is None:
                continue
            d = t.shape[k]
            if isinstance(r, int):
                if d is None:
                    checks.append((k, r))
                elif d != r:
                    static_bad = True
                    shape[k] = r
            else:
                checks.append((k, r))
                shape[k] = None
        if not checks and not static_bad:
            return x
        new_t = t.with_shape(shape)
        extents = []
        for k in range(t.rank):
            r = required[k] if k < len(required) else None
            extents.append(r if r is not None else self.extent(b, x, k))
        if static_bad:
            return self.fresh(b, new_t, extents)
        ok = None
        for k, r in checks:
            c = self.cmp(b, EQ, self.as_value(b, self.extent(b, x, k)), self.as_value(b, r))
            ok = c if ok is None else b.value("arith.andi", [ok, c], I1)
        xc = self.cast(b, x, new_t)
        return self.select(b, ok, xc, self.fresh(b, new_t, extents))

    def bound(self, b, idx, size):
        return b.value("index.remu", [idx, self.as_value(b, size)], INDEX)

    # -- rules

    def fix_scalar(self, op):
        b = self.builder(op)
        d = op.operands[1]
        t = d.type
        w = ir.bitwidth(t)
        c = _const_of(d)
        if op.kind in RULE_FOR_KIND and RULE_FOR_KIND[op.kind].name == "scalar-shift":
            if c is None or unsigned(c, w) >= w:
                op.operands[1] = b.const(self.rng.randrange(w), t)
            return b.count
        signed = op.kind in SIGNED_DIVS
        if c is not None:
            if c == 0 or (signed and c == -1):
                op.operands[1] = b.const(self.rng.randint(2, min(100, (1 << (w - 1)) - 1)), t)
            return b.count
        one = b.const(1, t)
        d = self.select(b, self.cmp(b, EQ, d, b.const(0, t)), one, d)
        if signed:
            d = self.select(b, self.cmp(b, EQ, d, b.const(-1, t)), one, d)
        op.operands[1] = d
        return b.count

    def fix_index_oob(self, op):
        b = self.builder(op)
        if op.kind in ("memref.dim", "tensor.dim"):
            rank = op.operands[0].type.rank
            op.operands[1] = self.bound(b, op.operands[1], rank)
            return b.count
        ci, first = _INDEXED[op.kind]
        x = op.operands[ci]
        idx = op.operands[first:]
        offs = op.attrs.get("offsets")
        new = []
        for k, i in enumerate(idx):
            if offs and offs[k]:
                i = b.value("index.add", [i, b.index(offs[k])], INDEX)
                new.append(self.bound(b, i, self.extent(b, x, k)))
                continue
            # accesses to the same container and index in one block share a check
            key = (b.block, i, x, k)
            if key not in self.bounded:
                self.bounded[key] = self.bound(b, i, self.extent(b, x, k))
            new.append(self.bounded[key])
        if offs is not None:
            op.attrs["offsets"] = [0] * len(offs)
        op.operands[first:] = new
        return b.count

    def fix_array_load_store(self, op):
        b = self.builder(op)
        ci, first = _INDEXED[op.kind]
        m = op.operands[ci]
        t = m.type
        vec_t = op.result.type if op.results else op.operands[0].type
        n = vec_t.shape[0]
        offs = op.attrs.get("offsets")
        dims = [self.extent(b, m, k) for k in range(t.rank)]
        idx = []
        for k, i in enumerate(op.operands[first:]):
            if offs and offs[k]:
                i = b.value("index.add", [i, b.index(offs[k])], INDEX)
            idx.append(self.bound(b, i, dims[k]))
        if offs is not None:
            op.attrs["offsets"] = [0] * len(offs)
        last = dims[-1]
        end = b.value("index.add", [idx[-1], b.index(n)], INDEX)
        ok = self.cmp(b, ULE, end, self.as_value(b, last))
        dyn_t = t.with_shape([None] * t.rank)
        fresh = self.fresh(b, dyn_t, dims[:-1] + [n])
        op.operands[ci] = self.select(b, ok, self.cast(b, m, dyn_t), fresh)
        idx[-1] = self.select(b, ok, idx[-1], b.index(0))
        op.operands[first:] = idx
        return b.count

    def fix_shape_inconsistency(self, op):
        b = self.builder(op)
        k = op.kind
        ops = op.operands
        if k == "linalg.copy":
            src, dst = ops
            ops[0] = self.conform(b, src, [self.extent(b, dst, i) for i in range(dst.type.rank)])
        elif k == "linalg.matmul":
            A, B, C = ops
            A = ops[0] = self.conform(b, A, [self.extent(b, C, 0), None])
            ops[1] = self.conform(b, B, [self.extent(b, A, 1), self.extent(b, C, 1)])
        elif k == "linalg.transpose":
            src, dst = ops
            perm = op.attrs["permutation"]
            req = [None] * src.type.rank
            for i, pi in enumerate(perm):
                req[pi] = self.extent(b, dst, i)
            ops[0] = self.conform(b, src, req)
        elif k == "linalg.broadcast":
            src, dst = ops
            dims = set(op.attrs["dimensions"])
            kept = [i for i in range(dst.type.rank) if i not in dims]
            ops[0] = self.conform(b, src, [self.extent(b, dst, i) for i in kept])
        elif k in ("memref.cast", "tensor.cast"):
            ops[0] = self.conform(b, ops[0], list(op.result.type.shape))
        elif k == "loop.yield":
            parent = self.parent_of.get(self.block_of[op])
            if parent is None or parent.kind != "loop.for":
                return 0
            args = self.block_of[op].args[1:]
            for i, (v, a) in enumerate(zip(ops, args)):
                if not ir.is_shaped(a.type) or a.type.kind == "vector":
                    continue
                fixed = self.conform(b, v, [self.extent(b, a, j) for j in range(a.type.rank)])
                ops[i] = self.cast(b, fixed, a.type)
        return b.count

    def alignment_of(self, v, depth=0):
        op = v.op
        if op is None or depth > 20:
            return None
        if op.kind in ("memref.alloc", "memref.alloca"):
            return op.attrs.get("alignment", DEFAULT_ALIGNMENT)
        if op.kind == "memref.cast":
            return self.alignment_of(op.operands[0], depth + 1)
        if op.kind == "memref.realloc":
            return self.alignment_of(op.operands[0], depth + 1)
        if op.kind == "arith.select":
            a = self.alignment_of(op.operands[1], depth + 1)
            c = self.alignment_of(op.operands[2], depth + 1)
            return None if a is None or c is None else min(a, c)
        return None

    def fix_alignment(self, op):
        a = self.alignment_of(op.operands[0])
        op.attrs["alignment"] = UNKNOWN_ALIGNMENT if a is None else a
        return 0

    def fix_alloc(self, op):
        b = self.builder(op)
        op.operands = [self.clamp_extent(b, e) for e in op.operands]
        n = b.count
        after = self.builder(op, after=True)
        m = op.result
        after.op("linalg.fill", [self.rand_const(after, m.type.elem), m])
        return n + after.count

    def fix_realloc(self, op):
        b = self.builder(op)
        block = self.block_of[op]
        src = op.operands[0]
        roots = ir.storage_roots(src)
        defined_here = all(r.op is not None and self.block_of.get(r.op) is block for r in roots)
        if not defined_here:
            # source lives outside this block (it may be reused on the next
            # iteration): release a private copy instead
            t = src.type
            tmp = self.fresh(b, t, [self.extent(b, src, k) for k in range(t.rank)])
            b.op("linalg.copy", [src, tmp])
            op.operands[0] = tmp
        else:
            later = block.ops[block.ops.index(op) + 1:]
            used_later = {v for o in later for inner in _tree(o) for v in inner.operands}
            mapping = {}
            for a in ir.storage_aliases(block.ops[:block.ops.index(op)], roots):
                if a in used_later:
                    t = a.type
                    mapping[a] = self.fresh(b, t, [self.extent(b, a, k) for k in range(t.rank)])
            if mapping:
                for o in later:
                    for inner in _tree(o):
                        inner.operands = [mapping.get(v, v) for v in inner.operands]
        op.operands[1:] = [self.clamp_extent(b, e) for e in op.operands[1:]]
        n = b.count
        after = self.builder(op, after=True)
        r = op.result
        after.op("linalg.fill", [self.rand_const(after, r.type.elem), r])
        return n + after.count

    def apply(self, op):
        rule = RULE_FOR_KIND.get(op.kind)
        if rule is None:
            raise UnsupportedOp(f"no UB rule for {op.kind}")
        handler = {
            "scalar-div": self.fix_scalar, "scalar-shift": self.fix_scalar,
            "index-oob": self.fix_index_oob, "array-load-store": self.fix_array_load_store,
            "shape": self.fix_shape_inconsistency, "alignment": self.fix_alignment,
            "realloc": self.fix_realloc, "alloc-init": self.fix_alloc,
            "zero-dim": self.fix_zero_dim_op,
        }[rule.name]
        n = handler(op)
        op.attrs["guarded"] = 1
        return rule.name, n

    # -- UB-irrelevant repairs

    def fix_zero_dim_op(self, op):
        b = self.builder(op)
        self.replace_empty(b, op)
        return b.count

    def replace_empty(self, b, op):
        t = op.result.type
        ext = [self.clamp_extent(b, e) for e in op.operands]
        vol = 1
        for d in t.shape:
            vol *= d if d is not None else 99
        if t.is_static and vol <= 4:
            vals = [self.rand_const(b, t.elem) for _ in range(vol)]
            new = b.value("tensor.from_elements", vals, t)
        else:
            new = b.value("tensor.splat", [self.rand_const(b, t.elem)] + ext, t, guarded=1)
        block = self.block_of[op]
        ir.replace_uses(ir.walk_blocks(self.p), {op.result: new})
        block.ops.remove(op)
        return new

    def irrelevant(self):
        """Remove zero-sized and rank-0 shapes; replace tensor.empty; clamp splat extents."""
        changed_values = set()
        for v in list(ir.all_values(self.p)):
            t = v.type
            if isinstance(t, ShapedType) and t.kind != "vector" and (t.rank == 0 or 0 in t.shape):
                shape = (1,) if t.rank == 0 else tuple(1 if d == 0 else d for d in t.shape)
                v.type = t.with_shape(shape)
                changed_values.add(v)
        touched = {}
        for op in list(ir.walk(self.p)):
            if any(v in changed_values for v in op.results):
                touched[op] = "zero-dim"
            if op.kind in _INDEXED:
                ci, first = _INDEXED[op.kind]
                rank = op.operands[ci].type.rank
                missing = rank - (len(op.operands) - first)
                if missing > 0:
                    b = self.builder(op)
                    op.operands.extend(b.index(0) for _ in range(missing))
                    if "offsets" in op.attrs:
                        op.attrs["offsets"] = list(op.attrs["offsets"]) + [0] * missing
                    touched[op] = "zero-dim"
            elif op.kind == "linalg.transpose":
                rank = op.operands[1].type.rank
                if len(op.attrs["permutation"]) < rank:
                    op.attrs["permutation"] = list(range(rank))
                    touched[op] = "zero-dim"
            elif op.kind == "linalg.broadcast":
                src, dst = op.operands
                dims = op.attrs["dimensions"]
                extra = src.type.rank + len(dims) - dst.type.rank
                if extra > 0:
                    op.attrs["dimensions"] = list(dims[:len(dims) - extra])
                    touched[op] = "zero-dim"
                elif extra < 0:
                    free = [i for i in range(dst.type.rank) if i not in dims]
                    op.attrs["dimensions"] = sorted(list(dims) + free[:(-extra)])
                    touched[op] = "zero-dim"
        paths = {op: op_path(self.p, op) for op in touched}
        for op in list(ir.walk(self.p)):
            if op.kind == "tensor.from_elements" and op in touched:
                t = op.result.type
                if len(op.operands) != _volume(t.shape):
                    self.reindex()
                    b = self.builder(op)
                    fill = op.operands[0] if op.operands else self.rand_const(b, t.elem)
                    new = b.value("tensor.splat", [fill], t, guarded=1)
                    ir.replace_uses(ir.walk_blocks(self.p), {op.result: new})
                    self.block_of[op].ops.remove(op)
            elif op.kind == "tensor.empty":
                self.reindex()
                path = op_path(self.p, op)
                b = self.builder(op)
                self.replace_empty(b, op)
                self.record(path, "zero-dim", b.count)
            elif op.kind == "tensor.splat" and op.operands[1:] and not _is_guarded(op):
                self.reindex()
                path = op_path(self.p, op)
                b = self.builder(op)
                op.operands[1:] = [self.clamp_extent(b, e) for e in op.operands[1:]]
                op.attrs["guarded"] = 1
                self.record(path, "zero-dim", b.count)
        for op, rule in touched.items():
            self.record(paths[op], rule, 0)
        self.reindex()


def _volume(shape):
    n = 1
    for d in shape:
        n *= d
    return n


def _tree(op):
    yield op
    for r in op.regions:
        for b in r.blocks:
            for o in b.ops:
                yield from _tree(o)


def ub_irrelevant_fix(p, seed=0):
    """Return a copy of ``p`` without zero-sized shapes or ``tensor.empty``."""
    q = ir.clone_program(p)
    f = _Fixer(q, seed)
    f.irrelevant()
    return q


def fix_ub(p, seed=0):
    """Return ``(fixed_copy, trace)``; the copy cannot trigger UB when run."""
    q = ir.clone_program(p)
    f = _Fixer(q, seed)
    f.irrelevant()
    targets = [op for op in collect_ub_prone_ops(q) if not _is_guarded(op)]
    paths = {op: op_path(q, op) for op in targets}
    for op in targets:
        if op not in f.block_of:
            continue  # removed by an earlier rewrite
        rule, n = f.apply(op)
        f.record(paths[op], rule, n)
    f.irrelevant()
    return q, f.trace


def _single(p, op, method, seed):
    f = _Fixer(p, seed)
    getattr(f, method)(op)
    op.attrs["guarded"] = 1
    return p


def fix_scalar(p, op, seed=0):
    return _single(p, op, "fix_scalar", seed)


def fix_index_oob(p, op, seed=0):
    return _single(p, op, "fix_index_oob", seed)


def fix_array_load_store(p, op, seed=0):
    return _single(p, op, "fix_array_load_store", seed)


def fix_shape_inconsistency(p, op, seed=0):
    return _single(p, op, "fix_shape_inconsistency", seed)


def fix_memory_refs(p, op, seed=0):
    method = {"memref.assume_alignment": "fix_alignment", "memref.realloc": "fix_realloc",
              "memref.alloc": "fix_alloc", "memref.alloca": "fix_alloc"}[op.kind]
    return _single(p, op, method, seed)
