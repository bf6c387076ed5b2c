"""Structural and type validation of programs."""

from dataclasses import dataclass, field

from . import ir
from .ir import INDEX, I1, IntType, IndexType, FloatType, ShapedType
from .registry import registry, BINOP_SEMANTICS


@dataclass
class ValidationReport:
    errors: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.errors

    def __bool__(self):
        return self.ok

    def __str__(self):
        if self.ok:
            return "ok"
        return "\n".join(f"{path}: {msg}" for path, msg in self.errors)


class ValidationError(Exception):
    def __init__(self, report):
        super().__init__(str(report))
        self.report = report


def check_type(t):
    """Return a list of invariant violations for a single type."""
    if isinstance(t, IntType):
        return [] if t.width in ir.INT_WIDTHS else [f"unsupported bit width {t.width}"]
    if isinstance(t, (IndexType, FloatType)):
        return []
    if not isinstance(t, ShapedType):
        return [f"unknown type {t!r}"]
    errs = []
    if isinstance(t.elem, ShapedType) or not isinstance(t.elem, (IntType, IndexType, FloatType)):
        errs.append(f"{t}: element type must be scalar")
    if t.rank > ir.MAX_RANK:
        errs.append(f"{t}: rank exceeds cap {ir.MAX_RANK}")
    for d in t.shape:
        if d is not None and d > ir.MAX_DIM:
            errs.append(f"{t}: dimension exceeds cap {ir.MAX_DIM}")
        if d is not None and d < 0:
            errs.append(f"{t}: negative dimension")
    if t.kind == "vector" and (not t.is_static or any(d < 1 for d in t.shape) or t.rank == 0):
        errs.append(f"{t}: vector shapes must be static and positive")
    return errs


def _compatible(a, b):
    if a.kind != b.kind or a.elem != b.elem or a.rank != b.rank:
        return False
    return all(x is None or y is None or x == y for x, y in zip(a.shape, b.shape))


def _expect(cond, msg, errs):
    if not cond:
        errs.append(msg)


def _n_operands(op, n, errs):
    if len(op.operands) != n:
        errs.append(f"expected {n} operands, got {len(op.operands)}")
        return False
    return True


def _n_results(op, n, errs):
    if len(op.results) != n:
        errs.append(f"expected {n} results, got {len(op.results)}")
        return False
    return True


def _check_indices(op, indices, rank, errs):
    _expect(len(indices) == rank, f"expected {rank} indices, got {len(indices)}", errs)
    _expect(all(v.type == INDEX for v in indices), "indices must be index typed", errs)


def _check_offsets(op, rank, errs):
    offs = op.attrs.get("offsets")
    _expect(isinstance(offs, list) and len(offs) == rank, "offsets attribute must match rank", errs)


def _check_dyn_extents(op, ext, t, errs):
    _expect(len(ext) == t.num_dynamic, "dynamic extent count mismatch", errs)
    _expect(all(v.type == INDEX for v in ext), "extents must be index typed", errs)


def _check_const(op, errs, allowed):
    if not _n_operands(op, 0, errs) or not _n_results(op, 1, errs):
        return
    t = op.result.type
    _expect(isinstance(t, allowed), f"constant of type {t} not allowed", errs)
    v = op.attrs.get("value")
    if isinstance(t, FloatType):
        _expect(isinstance(v, (int, float)), "float constant needs numeric value", errs)
    else:
        _expect(isinstance(v, int), "integer constant needs int value", errs)


def _check_binop(op, errs, allowed):
    if not _n_operands(op, 2, errs) or not _n_results(op, 1, errs):
        return
    a, b = op.operands
    _expect(a.type == b.type == op.result.type, "binary operand/result types differ", errs)
    _expect(isinstance(a.type, allowed), f"binary op on {a.type}", errs)


def _check_cmp(op, errs, allowed):
    if not _n_operands(op, 2, errs) or not _n_results(op, 1, errs):
        return
    a, b = op.operands
    _expect(a.type == b.type and isinstance(a.type, allowed), "compare operand types", errs)
    _expect(op.result.type == I1, "compare result must be i1", errs)
    _expect(op.attrs.get("predicate") in range(10), "bad predicate", errs)


def _check_select(op, errs):
    if not _n_operands(op, 3, errs) or not _n_results(op, 1, errs):
        return
    c, a, b = op.operands
    _expect(c.type == I1, "select condition must be i1", errs)
    _expect(a.type == b.type == op.result.type, "select operand types differ", errs)


def _check_cast_int(op, errs, rel):
    if not _n_operands(op, 1, errs) or not _n_results(op, 1, errs):
        return
    s, d = op.operands[0].type, op.result.type
    if rel == "index_cast":
        _expect((isinstance(s, IntType) and d == INDEX) or (s == INDEX and isinstance(d, IntType)),
                "index_cast must convert between int and index", errs)
        return
    ok = ir.is_intlike(s) and ir.is_intlike(d)
    _expect(ok, "integer conversion on non-integers", errs)
    if not ok:
        return
    ws, wd = ir.bitwidth(s), ir.bitwidth(d)
    if rel == "ext":
        _expect(wd > ws or (wd == ws and s != d), "extension must widen", errs)
    else:
        _expect(wd < ws or (wd == ws and s != d), "truncation must narrow", errs)


def _check_linalg(op, errs):
    k = op.kind
    n_in = {"linalg.copy": 2, "linalg.matmul": 3, "linalg.transpose": 2, "linalg.broadcast": 2}[k]
    if not _n_operands(op, n_in, errs):
        return
    ts = [v.type for v in op.operands]
    if not all(isinstance(t, ShapedType) and t.kind in ("tensor", "memref") for t in ts):
        errs.append("linalg operands must be tensors or memrefs")
        return
    kinds = {t.kind for t in ts}
    _expect(len(kinds) == 1, "linalg operands mix tensors and memrefs", errs)
    _expect(len({t.elem for t in ts}) == 1, "linalg element types differ", errs)
    out = ts[-1]
    if out.kind == "tensor":
        _expect(len(op.results) == 1 and op.result.type == out, "tensor linalg must return outs type", errs)
    else:
        _expect(not op.results, "memref linalg has no results", errs)
    if k == "linalg.copy":
        _expect(ts[0].rank == out.rank, "copy rank mismatch", errs)
    elif k == "linalg.matmul":
        _expect(all(t.rank == 2 for t in ts), "matmul operands must be rank 2", errs)
    elif k == "linalg.transpose":
        perm = op.attrs.get("permutation")
        _expect(isinstance(perm, list) and sorted(perm) == list(range(out.rank))
                and ts[0].rank == out.rank, "bad permutation", errs)
    else:
        dims = op.attrs.get("dimensions")
        ok = isinstance(dims, list) and all(0 <= d < out.rank for d in dims) and len(set(dims)) == len(dims)
        _expect(ok and ts[0].rank + len(dims) == out.rank, "bad broadcast dimensions", errs)


def check_op(op):
    """Signature checks for one op; returns a list of messages."""
    errs = []
    k = op.kind
    r = registry()
    if k not in r:
        return [f"unknown op kind {k}"]
    desc = r[k]
    if len(op.regions) != desc.num_regions:
        errs.append(f"expected {desc.num_regions} regions, got {len(op.regions)}")
        return errs
    for v in op.results:
        errs.extend(check_type(v.type))
    ops_ = op.operands
    ty = [v.type for v in ops_]

    if k in ("arith.constant",):
        _check_const(op, errs, (IntType, FloatType))
    elif k == "index.constant":
        _check_const(op, errs, (IndexType,))
    elif k == "exec.constant":
        _check_const(op, errs, (IntType, IndexType, FloatType))
    elif k in BINOP_SEMANTICS:
        allowed = {"arith": IntType, "index": IndexType, "exec": (IntType, IndexType)}[op.dialect]
        _check_binop(op, errs, allowed)
    elif k == "arith.cmpi":
        _check_cmp(op, errs, IntType)
    elif k == "index.cmp":
        _check_cmp(op, errs, IndexType)
    elif k == "exec.icmp":
        _check_cmp(op, errs, (IntType, IndexType))
    elif k in ("arith.select", "exec.select"):
        _check_select(op, errs)
    elif k in ("arith.extsi", "arith.extui", "exec.sext", "exec.zext"):
        if k.startswith("arith") and ops_ and not isinstance(ty[0], IntType):
            errs.append("arith extension needs int operand")
        _check_cast_int(op, errs, "ext")
    elif k in ("arith.trunci", "exec.trunc"):
        _check_cast_int(op, errs, "trunc")
    elif k == "arith.index_cast":
        _check_cast_int(op, errs, "index_cast")
    elif k in ("memref.alloc", "memref.alloca", "exec.alloc", "tensor.empty"):
        want = "tensor" if k == "tensor.empty" else "memref"
        if _n_results(op, 1, errs):
            t = op.result.type
            if ir.is_shaped(t, want):
                _check_dyn_extents(op, ops_, t, errs)
            else:
                errs.append(f"result must be a {want}")
        a = op.attrs.get("alignment")
        _expect(a is None or (isinstance(a, int) and a > 0 and a & (a - 1) == 0),
                "alignment must be a power of two", errs)
    elif k in ("memref.dim", "tensor.dim", "exec.dim"):
        want = "tensor" if k == "tensor.dim" else "memref"
        if _n_operands(op, 2, errs) and _n_results(op, 1, errs):
            _expect(ir.is_shaped(ty[0], want) and ty[1] == INDEX and op.result.type == INDEX,
                    "dim signature", errs)
    elif k in ("memref.load", "tensor.extract", "loop.load"):
        want = "tensor" if k == "tensor.extract" else "memref"
        if ops_ and ir.is_shaped(ty[0], want) and _n_results(op, 1, errs):
            _check_indices(op, ops_[1:], ty[0].rank, errs)
            _expect(op.result.type == ty[0].elem, "loaded type must be element type", errs)
            if k == "loop.load":
                _check_offsets(op, ty[0].rank, errs)
        else:
            errs.append(f"{k} needs a {want} operand")
    elif k in ("memref.store", "loop.store"):
        if len(ops_) >= 2 and ir.is_shaped(ty[1], "memref") and _n_results(op, 0, errs):
            _expect(ty[0] == ty[1].elem, "stored type must be element type", errs)
            _check_indices(op, ops_[2:], ty[1].rank, errs)
            if k == "loop.store":
                _check_offsets(op, ty[1].rank, errs)
        else:
            errs.append("store needs value and memref operands")
    elif k == "tensor.insert":
        if len(ops_) >= 2 and ir.is_shaped(ty[1], "tensor") and _n_results(op, 1, errs):
            _expect(ty[0] == ty[1].elem and op.result.type == ty[1], "insert types", errs)
            _check_indices(op, ops_[2:], ty[1].rank, errs)
        else:
            errs.append("tensor.insert needs value and tensor operands")
    elif k in ("memref.cast", "tensor.cast", "exec.cast"):
        if _n_operands(op, 1, errs) and _n_results(op, 1, errs):
            s, d = ty[0], op.result.type
            _expect(isinstance(s, ShapedType) and isinstance(d, ShapedType) and s.kind != "vector"
                    and _compatible(s, d), "incompatible cast", errs)
    elif k in ("memref.realloc", "exec.realloc"):
        if ops_ and _n_results(op, 1, errs):
            s, d = ty[0], op.result.type
            ok = ir.is_shaped(s, "memref") and ir.is_shaped(d, "memref") and s.rank == d.rank == 1
            _expect(ok and s.elem == d.elem, "realloc needs rank-1 memrefs", errs)
            if ok:
                _check_dyn_extents(op, ops_[1:], d, errs)
    elif k in ("memref.assume_alignment", "exec.assume_alignment"):
        if _n_operands(op, 1, errs) and _n_results(op, 0, errs):
            a = op.attrs.get("alignment")
            _expect(ir.is_shaped(ty[0], "memref"), "assume_alignment needs a memref", errs)
            _expect(isinstance(a, int) and a > 0 and a & (a - 1) == 0, "alignment must be a power of two", errs)
    elif k == "tensor.splat":
        if ops_ and _n_results(op, 1, errs) and ir.is_shaped(op.result.type, "tensor"):
            t = op.result.type
            _expect(ty[0] == t.elem, "splat value type", errs)
            _check_dyn_extents(op, ops_[1:], t, errs)
        else:
            errs.append("tensor.splat signature")
    elif k == "tensor.from_elements":
        if _n_results(op, 1, errs) and ir.is_shaped(op.result.type, "tensor") and op.result.type.is_static:
            t = op.result.type
            vol = 1
            for d in t.shape:
                vol *= d
            _expect(len(ops_) == vol and all(x == t.elem for x in ty), "from_elements arity/type", errs)
        else:
            errs.append("from_elements needs a static tensor result")
    elif k in ("vector.splat", "exec.vsplat"):
        if _n_operands(op, 1, errs) and _n_results(op, 1, errs):
            t = op.result.type
            _expect(ir.is_shaped(t, "vector") and t.rank == 1 and ty[0] == t.elem, "splat signature", errs)
    elif k in ("vector.extract", "exec.vextract", "vector.insert", "exec.vinsert"):
        ins = k.endswith("insert")
        vec = ty[1] if ins and len(ty) == 2 else (ty[0] if ty else None)
        if _n_operands(op, 2 if ins else 1, errs) and _n_results(op, 1, errs):
            ok = ir.is_shaped(vec, "vector") and vec.rank == 1
            _expect(ok, "needs a rank-1 vector", errs)
            if ok:
                pos = op.attrs.get("position")
                _expect(isinstance(pos, int) and 0 <= pos < vec.shape[0], "position out of range", errs)
                want = vec if ins else vec.elem
                _expect(op.result.type == want, "result type", errs)
                if ins:
                    _expect(ty[0] == vec.elem, "inserted type", errs)
    elif k in ("vector.reduce_add", "exec.vreduce"):
        if _n_operands(op, 1, errs) and _n_results(op, 1, errs):
            _expect(ir.is_shaped(ty[0], "vector") and ir.is_int(ty[0].elem)
                    and op.result.type == ty[0].elem, "reduce signature", errs)
    elif k == "vector.extract_strided_slice":
        if _n_operands(op, 1, errs) and _n_results(op, 1, errs):
            s, d = ty[0], op.result.type
            off, size = op.attrs.get("offset"), op.attrs.get("size")
            ok = ir.is_shaped(s, "vector") and ir.is_shaped(d, "vector") and s.rank == d.rank == 1
            ok = ok and isinstance(off, int) and isinstance(size, int)
            _expect(ok and d.shape[0] == size and off >= 0 and off + size <= s.shape[0]
                    and s.elem == d.elem, "strided slice bounds", errs)
    elif k in ("vector.load", "loop.vector_load", "exec.vload"):
        if ops_ and ir.is_shaped(ty[0], "memref") and _n_results(op, 1, errs):
            t = op.result.type
            _expect(ir.is_shaped(t, "vector") and t.rank == 1 and t.elem == ty[0].elem, "vector load type", errs)
            if k == "exec.vload":
                _expect(len(ops_) == 2 and ty[1] == INDEX, "exec.vload takes one flat index", errs)
            else:
                _check_indices(op, ops_[1:], ty[0].rank, errs)
            if k == "loop.vector_load":
                _check_offsets(op, ty[0].rank, errs)
        else:
            errs.append("vector load needs a memref")
    elif k in ("vector.store", "loop.vector_store", "exec.vstore"):
        if len(ops_) >= 2 and ir.is_shaped(ty[1], "memref") and _n_results(op, 0, errs):
            _expect(ir.is_shaped(ty[0], "vector") and ty[0].rank == 1 and ty[0].elem == ty[1].elem,
                    "vector store type", errs)
            if k == "exec.vstore":
                _expect(len(ops_) == 3 and ty[2] == INDEX, "exec.vstore takes one flat index", errs)
            else:
                _check_indices(op, ops_[2:], ty[1].rank, errs)
            if k == "loop.vector_store":
                _check_offsets(op, ty[1].rank, errs)
        else:
            errs.append("vector store needs vector and memref")
    elif k in ("exec.load",):
        if _n_operands(op, 2, errs) and _n_results(op, 1, errs):
            _expect(ir.is_shaped(ty[0], "memref") and ty[1] == INDEX and op.result.type == ty[0].elem,
                    "exec.load signature", errs)
    elif k in ("exec.store",):
        if _n_operands(op, 3, errs) and _n_results(op, 0, errs):
            _expect(ir.is_shaped(ty[1], "memref") and ty[2] == INDEX and ty[0] == ty[1].elem,
                    "exec.store signature", errs)
    elif k == "linalg.fill":
        if _n_operands(op, 2, errs) and _n_results(op, 0, errs):
            _expect(ir.is_shaped(ty[1], "memref") and ty[0] == ty[1].elem, "fill signature", errs)
    elif k.startswith("linalg."):
        _check_linalg(op, errs)
    elif k == "loop.for":
        if len(ops_) >= 3 and all(t == INDEX for t in ty[:3]):
            inits = ty[3:]
            _expect([v.type for v in op.results] == inits, "loop results must match iter_args", errs)
            body = op.regions[0]
            if len(body.blocks) != 1:
                errs.append("loop body must have one block")
            else:
                b = body.entry
                _expect([a.type for a in b.args] == [INDEX] + inits, "loop block arguments", errs)
                term = b.terminator
                if term is not None and term.kind == "loop.yield":
                    _expect([v.type for v in term.operands] == inits, "yield types must match iter_args", errs)
        else:
            errs.append("loop.for needs index bounds and step")
    elif k == "loop.if":
        if _n_operands(op, 1, errs):
            _expect(ty[0] == I1, "loop.if condition must be i1", errs)
            for region in op.regions:
                if len(region.blocks) != 1 or region.entry.args:
                    errs.append("loop.if regions take one argument-free block")
                    continue
                term = region.entry.terminator
                if term is not None and term.kind == "loop.yield":
                    _expect([v.type for v in term.operands] == [v.type for v in op.results],
                            "if branch yield types", errs)
    elif k == "loop.yield":
        _n_results(op, 0, errs)
    elif k in ("cf.br", "exec.br"):
        if len(op.successors) != 1:
            errs.append("br needs one successor")
        else:
            _expect([v.type for v in op.successors[0].args] == ty, "branch operand types", errs)
    elif k in ("cf.cond_br", "exec.cond_br"):
        seg = op.attrs.get("segments")
        if len(op.successors) != 2 or not (isinstance(seg, list) and len(seg) == 2):
            errs.append("cond_br needs two successors and segments")
        elif ops_ and ty[0] == I1 and len(ops_) == 1 + seg[0] + seg[1]:
            t_args, f_args = ty[1:1 + seg[0]], ty[1 + seg[0]:]
            _expect([v.type for v in op.successors[0].args] == t_args, "true branch operands", errs)
            _expect([v.type for v in op.successors[1].args] == f_args, "false branch operands", errs)
        else:
            errs.append("cond_br operands")
    elif k == "exec.return":
        _n_results(op, 0, errs)
    return errs


def validate(p):
    """Check SSA, arity, types, terminators and shape caps; never raises."""
    report = ValidationReport()
    r = registry()
    defined = set()
    names = [f.name for f in p.functions]
    if len(set(names)) != len(names):
        report.errors.append(("program", "duplicate function names"))
    try:
        main = p.main
        if main.arg_types:
            report.errors.append(("main", "main must take no arguments"))
    except KeyError:
        report.errors.append(("program", "no main function"))

    def define(v, path):
        if v in defined:
            report.errors.append((path, "value defined twice"))
        defined.add(v)
        for msg in check_type(v.type):
            report.errors.append((path, msg))

    def check_block(block, visible, path, func, region_blocks):
        scope = set(visible)
        for a in block.args:
            define(a, path)
            scope.add(a)
        for i, op in enumerate(block.ops):
            opath = f"{path}/op{i}({op.kind})"
            for v in op.operands:
                if v not in scope:
                    report.errors.append((opath, "use before def"))
                    break
            for msg in check_op(op):
                report.errors.append((opath, msg))
            desc = r.get(op.kind)
            last = i == len(block.ops) - 1
            if desc is not None:
                if desc.terminator and not last:
                    report.errors.append((opath, "terminator must end its block"))
                if last and not desc.terminator:
                    report.errors.append((opath, "block does not end with a terminator"))
            for s in op.successors:
                if s not in region_blocks:
                    report.errors.append((opath, "branch to a block outside the region"))
            if op.kind == "exec.return":
                if [v.type for v in op.operands] != list(func.result_types):
                    report.errors.append((opath, "return types do not match function"))
            for ri, region in enumerate(op.regions):
                check_region(region, scope, f"{opath}/r{ri}", func)
            for res in op.results:
                define(res, opath)
                scope.add(res)
        if not block.ops:
            report.errors.append((path, "empty block"))
        return scope

    def check_region(region, visible, path, func):
        if not region.blocks:
            report.errors.append((path, "empty region"))
            return
        blocks = set(region.blocks)
        acc = set(visible)
        for bi, block in enumerate(region.blocks):
            acc = check_block(block, acc, f"{path}/bb{bi}", func, blocks)

    for f in p.functions:
        check_region(f.body, set(), f.name, f)
    return report


def assert_valid(p):
    report = validate(p)
    if not report.ok:
        raise ValidationError(report)
    return p
