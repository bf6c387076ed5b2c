"""Reference interpreter with UB trapping, plus checksum injection.

Two modes:

* ``trap``: any undefined behavior stops execution with a ``UBTrap`` outcome.
* ``native``: UB produces the deterministic garbage a compiled binary would
  (masked shifts, junk reads from uninitialized or out-of-range memory,
  dropped out-of-range writes). Differential testing runs in this mode, since
  an unfixed program then "works" but may print different checksums under
  different pipelines.
"""

from dataclasses import dataclass, asdict

from . import intops, ir
from .intops import IntUB, wrap, unsigned
from .ir import INDEX, I64, IntType, IndexType, FloatType, ShapedType
from .builder import Builder
from .registry import BINOP_SEMANTICS

DEFAULT_FUEL = 10_000_000

# trap kinds
OUT_OF_BOUNDS = "OutOfBounds"
UNINIT_READ = "UninitializedRead"
INSUFFICIENT_VOLUME = "InsufficientVolume"
SHAPE_MISMATCH = "ShapeMismatch"
MISALIGNED = "Misaligned"
USE_AFTER_FREE = "UseAfterFree"
INVALID_ALLOCATION = "InvalidAllocation"

TRAP_KINDS = (
    intops.DIV_BY_ZERO, intops.DIV_OVERFLOW, intops.SHIFT_OVERFLOW, OUT_OF_BOUNDS,
    UNINIT_READ, INSUFFICIENT_VOLUME, SHAPE_MISMATCH, MISALIGNED, USE_AFTER_FREE,
    INVALID_ALLOCATION,
)

DEFAULT_ALIGNMENT = 8


@dataclass
class ExecOutcome:
    status: str  # Finished | UBTrap | Crash | FuelExhausted
    checksum: int = None
    trap_kind: str = None
    op_path: str = None
    message: str = None
    trace_len: int = 0

    @property
    def finished(self):
        return self.status == "Finished"

    def to_dict(self):
        return {k: v for k, v in asdict(self).items() if v is not None}

    def __str__(self):
        if self.status == "Finished":
            return f"Finished(checksum={self.checksum})"
        if self.status == "UBTrap":
            return f"UBTrap({self.trap_kind} at {self.op_path})"
        if self.status == "Crash":
            return f"Crash({self.message})"
        return "FuelExhausted"


# ---------------------------------------------------------------- runtime values

class Buffer:
    __slots__ = ("cells", "serial", "align", "freed", "step")

    def __init__(self, size, serial, align, step):
        self.cells = [None] * size
        self.serial = serial
        self.align = align
        self.freed = False
        self.step = step


class MemRef:
    __slots__ = ("buf", "shape")

    def __init__(self, buf, shape):
        self.buf = buf
        self.shape = tuple(shape)

    def __repr__(self):
        return f"MemRef(#{self.buf.serial}, {self.shape})"


class Tensor:
    __slots__ = ("shape", "cells", "serial", "step")

    def __init__(self, shape, cells, serial=0, step=0):
        self.shape = tuple(shape)
        self.cells = tuple(cells)
        self.serial = serial
        self.step = step

    def __repr__(self):
        return f"Tensor({self.shape}, {list(self.cells)})"


def volume(shape):
    n = 1
    for d in shape:
        n *= d
    return n


def strides(shape):
    out = [1] * len(shape)
    for k in range(len(shape) - 2, -1, -1):
        out[k] = out[k + 1] * shape[k + 1]
    return out


def in_bounds(shape, idx):
    return len(idx) == len(shape) and all(0 <= i < d for i, d in zip(idx, shape))


def flatten(shape, idx):
    return sum(i * s for i, s in zip(idx, strides(shape)))


def unflatten(shape, flat):
    idx = []
    for s in strides(shape):
        idx.append(flat // s)
        flat %= s
    return idx


def garbage(serial, cell, step, t):
    """Deterministic junk for reads a real machine would not define."""
    x = (serial * 0x9E3779B97F4A7C15 + cell * 0xBF58476D1CE4E5B9 + step * 0x94D049BB133111EB
         + 0x632BE59BD9B4E019) & 0xFFFFFFFFFFFFFFFF
    x ^= x >> 31
    x = (x * 0xD6E8FEB86659FD93) & 0xFFFFFFFFFFFFFFFF
    x ^= x >> 29
    if isinstance(t, FloatType):
        return float(x % 1000)
    return wrap(x, ir.bitwidth(t))


class _Trap(Exception):
    def __init__(self, kind, op=None):
        super().__init__(kind)
        self.kind = kind
        self.op = op


class _Fuel(Exception):
    pass


class _Crash(Exception):
    pass


# ---------------------------------------------------------------- interpreter

class Interpreter:
    def __init__(self, program, fuel=DEFAULT_FUEL, mode="trap"):
        if mode not in ("trap", "native"):
            raise ValueError(f"unknown mode {mode}")
        self.program = program
        self.fuel = fuel
        self.native = mode == "native"
        self.steps = 0
        self.serial = 0
        self.env = {}
        self.funcs = {f.name: f for f in program.functions}

    # -- helpers

    def trap(self, kind, op):
        raise _Trap(kind, op)

    def new_serial(self):
        self.serial += 1
        return self.serial

    def extents(self, t, dyn, op):
        shape, it = [], iter(dyn)
        for d in t.shape:
            e = d if d is not None else next(it)
            if d is None and not 1 <= e <= ir.MAX_DIM:
                if not self.native:
                    self.trap(INVALID_ALLOCATION, op)
                e = max(0, min(ir.MAX_DIM, e))
            if d is not None and d < 1:
                if not self.native:
                    self.trap(INVALID_ALLOCATION, op)
                e = max(0, d)
            shape.append(e)
        return shape

    def alloc(self, t, dyn, op, align=DEFAULT_ALIGNMENT):
        shape = self.extents(t, dyn, op)
        return MemRef(Buffer(volume(shape), self.new_serial(), align, self.steps), shape)

    def read_cell(self, m, flat, t, op, oob_kind=OUT_OF_BOUNDS):
        buf = m.buf
        if buf.freed:
            if not self.native:
                self.trap(USE_AFTER_FREE, op)
            return garbage(buf.serial, flat + 7919, buf.step, t)
        if not 0 <= flat < len(buf.cells):
            if not self.native:
                self.trap(oob_kind, op)
            return garbage(buf.serial, flat, buf.step, t)
        v = buf.cells[flat]
        if v is None:
            if not self.native:
                self.trap(UNINIT_READ, op)
            return garbage(buf.serial, flat, buf.step, t)
        return v

    def write_cell(self, m, flat, v, op, oob_kind=OUT_OF_BOUNDS):
        buf = m.buf
        if buf.freed:
            if not self.native:
                self.trap(USE_AFTER_FREE, op)
            return
        if not 0 <= flat < len(buf.cells):
            if not self.native:
                self.trap(oob_kind, op)
            return
        buf.cells[flat] = v

    def flat_of(self, shape, idx, op):
        """Row-major offset; out-of-range indices trap, or address wildly in native mode."""
        if not in_bounds(shape, idx) and not self.native:
            self.trap(OUT_OF_BOUNDS, op)
        return flatten(shape, idx)

    def load(self, m, idx, t, op):
        return self.read_cell(m, self.flat_of(m.shape, idx, op), t, op)

    def store(self, m, idx, v, op):
        self.write_cell(m, self.flat_of(m.shape, idx, op), v, op)

    def tensor_read(self, x, idx, t, op):
        if not in_bounds(x.shape, idx):
            if not self.native:
                self.trap(OUT_OF_BOUNDS, op)
            return garbage(x.serial, flatten(x.shape, idx) + 104729, x.step, t)
        flat = flatten(x.shape, idx)
        v = x.cells[flat]
        if v is None:
            if not self.native:
                self.trap(UNINIT_READ, op)
            return garbage(x.serial, flat, x.step, t)
        return v

    def dim(self, shape, k, op, serial=0):
        if not 0 <= k < len(shape):
            if not self.native:
                self.trap(OUT_OF_BOUNDS, op)
            return garbage(serial, k, 0, INDEX) % (ir.MAX_DIM + 1)
        return shape[k]

    # -- execution

    def run(self, entry="main"):
        try:
            f = self.funcs[entry]
            values = self.run_region(f.body, [])
            if not values:
                checksum = 0
            else:
                v = values[0]
                checksum = v if isinstance(v, int) else 0
            return ExecOutcome("Finished", checksum=checksum, trace_len=self.steps)
        except _Trap as t:
            return ExecOutcome("UBTrap", trap_kind=t.kind, op_path=op_path(self.program, t.op),
                               trace_len=self.steps)
        except _Fuel:
            return ExecOutcome("FuelExhausted", trace_len=self.steps)
        except RecursionError:
            return ExecOutcome("Crash", message="recursion limit", trace_len=self.steps)
        except (_Crash, KeyError, ValueError, TypeError, IndexError, ZeroDivisionError,
                AttributeError, StopIteration) as exc:
            return ExecOutcome("Crash", message=f"{type(exc).__name__}: {exc}", trace_len=self.steps)

    def run_region(self, region, args):
        """Execute a region; returns the operands of its exiting terminator."""
        env = self.env
        block = region.blocks[0]
        for a, v in zip(block.args, args):
            env[a] = v
        while True:
            for op in block.ops:
                self.steps += 1
                if self.steps > self.fuel:
                    raise _Fuel()
                k = op.kind
                if k in ("cf.br", "exec.br"):
                    target = op.successors[0]
                    vals = [env[v] for v in op.operands]
                    break
                if k in ("cf.cond_br", "exec.cond_br"):
                    n_true = op.attrs["segments"][0]
                    vals = [env[v] for v in op.operands]
                    if vals[0]:
                        target, vals = op.successors[0], vals[1:1 + n_true]
                    else:
                        target, vals = op.successors[1], vals[1 + n_true:]
                    break
                if k in ("exec.return", "loop.yield"):
                    return [env[v] for v in op.operands]
                handler = _HANDLERS.get(k)
                if handler is None:
                    raise _Crash(f"no semantics for {k}")
                try:
                    res = handler(self, op, [env[v] for v in op.operands])
                except IntUB as exc:
                    raise _Trap(exc.kind, op) from None
                if res is not None:
                    for r, v in zip(op.results, res):
                        env[r] = v
            else:
                raise _Crash("block fell through without terminator")
            for a, v in zip(target.args, vals):
                env[a] = v
            block = target


def op_path(program, target):
    if target is None:
        return ""
    for f in program.functions:
        found = _find(f.body, target, f.name)
        if found:
            return found
    return f"?({target.kind})"


def _find(region, target, prefix):
    for bi, b in enumerate(region.blocks):
        for oi, op in enumerate(b.ops):
            here = f"{prefix}/bb{bi}/op{oi}"
            if op is target:
                return f"{here}({op.kind})"
            for ri, r in enumerate(op.regions):
                found = _find(r, target, f"{here}/r{ri}")
                if found:
                    return found
    return None


# ---------------------------------------------------------------- op semantics

def _binop(name):
    def h(it, op, a):
        w = ir.bitwidth(op.result.type)
        if it.native:
            return [intops.native_binop(name, a[0], a[1], w)]
        return [intops.BINOPS[name](a[0], a[1], w)]
    return h


def _const(it, op, a):
    v = op.attrs["value"]
    t = op.result.type
    return [float(v) if isinstance(t, FloatType) else wrap(int(v), ir.bitwidth(t))]


def _cmp(it, op, a):
    return [intops.compare(op.attrs["predicate"], a[0], a[1], ir.bitwidth(op.operands[0].type))]


def _select(it, op, a):
    return [a[1] if a[0] else a[2]]


def _sext(it, op, a):
    return [wrap(a[0], ir.bitwidth(op.result.type))]


def _zext(it, op, a):
    ws = ir.bitwidth(op.operands[0].type)
    return [wrap(unsigned(a[0], ws), ir.bitwidth(op.result.type))]


def _trunc(it, op, a):
    return [wrap(a[0], ir.bitwidth(op.result.type))]


def _alloc(it, op, a):
    return [it.alloc(op.result.type, a, op, op.attrs.get("alignment", DEFAULT_ALIGNMENT))]


def _mdim(it, op, a):
    return [it.dim(a[0].shape, a[1], op, a[0].buf.serial)]


def _tdim(it, op, a):
    return [it.dim(a[0].shape, a[1], op, a[0].serial)]


def _offsets(op, idx):
    offs = op.attrs.get("offsets")
    if offs:
        return [i + o for i, o in zip(idx, offs)]
    return list(idx)


def _mload(it, op, a):
    return [it.load(a[0], _offsets(op, a[1:]), op.result.type, op)]


def _mstore(it, op, a):
    it.store(a[1], _offsets(op, a[2:]), a[0], op)


def _runtime_cast(it, op, shape, target):
    """Shape a value takes when cast to ``target``; checks static dims."""
    ok = len(shape) == target.rank and all(d is None or d == s for d, s in zip(target.shape, shape))
    if ok:
        return list(shape)
    if not it.native:
        it.trap(SHAPE_MISMATCH, op)
    if len(shape) != target.rank:
        return [d if d is not None else 1 for d in target.shape]
    return [d if d is not None else s for d, s in zip(target.shape, shape)]


def _mcast(it, op, a):
    return [MemRef(a[0].buf, _runtime_cast(it, op, a[0].shape, op.result.type))]


def _tcast(it, op, a):
    x = a[0]
    shape = _runtime_cast(it, op, x.shape, op.result.type)
    if tuple(shape) == x.shape:
        return [x]
    n = volume(shape)
    cells = list(x.cells[:n]) + [None] * max(0, n - len(x.cells))
    return [Tensor(shape, cells, x.serial, x.step)]


def _realloc(it, op, a):
    src = a[0]
    if src.buf.freed and not it.native:
        it.trap(USE_AFTER_FREE, op)
    new = it.alloc(op.result.type, a[1:], op, src.buf.align)
    n = min(len(src.buf.cells), len(new.buf.cells))
    if not src.buf.freed:
        new.buf.cells[:n] = src.buf.cells[:n]
    src.buf.freed = True
    return [new]


def _assume_alignment(it, op, a):
    m = a[0]
    if m.buf.freed and not it.native:
        it.trap(USE_AFTER_FREE, op)
    want = op.attrs["alignment"]
    if not it.native and (m.buf.align % want != 0):
        it.trap(MISALIGNED, op)


def _tempty(it, op, a):
    shape = it.extents(op.result.type, a, op)
    return [Tensor(shape, [None] * volume(shape), it.new_serial(), it.steps)]


def _tsplat(it, op, a):
    shape = it.extents(op.result.type, a[1:], op)
    return [Tensor(shape, [a[0]] * volume(shape))]


def _tfrom(it, op, a):
    return [Tensor(op.result.type.shape, a)]


def _textract(it, op, a):
    return [it.tensor_read(a[0], a[1:], op.result.type, op)]


def _tinsert(it, op, a):
    x = a[1]
    idx = a[2:]
    if not in_bounds(x.shape, idx):
        if not it.native:
            it.trap(OUT_OF_BOUNDS, op)
        return [x]
    cells = list(x.cells)
    cells[flatten(x.shape, idx)] = a[0]
    return [Tensor(x.shape, cells, x.serial, x.step)]


def _vsplat(it, op, a):
    return [(a[0],) * op.result.type.shape[0]]


def _vextract(it, op, a):
    return [a[0][op.attrs["position"]]]


def _vinsert(it, op, a):
    v = list(a[1])
    v[op.attrs["position"]] = a[0]
    return [tuple(v)]


def _vreduce(it, op, a):
    w = ir.bitwidth(op.result.type)
    return [wrap(sum(a[0]), w)]


def _vslice(it, op, a):
    off, size = op.attrs["offset"], op.attrs["size"]
    return [tuple(a[0][off:off + size])]


def _vector_span(it, m, idx, n, op):
    """Flat cell positions touched by an n-lane access along the last dimension."""
    shape = m.shape
    ok = in_bounds(shape, idx) and idx[-1] + n <= shape[-1]
    if not ok and not it.native:
        it.trap(OUT_OF_BOUNDS, op)
    base = flatten(shape, idx)
    return [base + lane for lane in range(n)]


def _vload(it, op, a):
    t = op.result.type
    cells = _vector_span(it, a[0], _offsets(op, a[1:]), t.shape[0], op)
    return [tuple(it.read_cell(a[0], c, t.elem, op) for c in cells)]


def _vstore(it, op, a):
    vec = a[0]
    cells = _vector_span(it, a[1], _offsets(op, a[2:]), len(vec), op)
    for c, v in zip(cells, vec):
        it.write_cell(a[1], c, v, op)


def _fill(it, op, a):
    m = a[1]
    if m.buf.freed:
        if not it.native:
            it.trap(USE_AFTER_FREE, op)
        return
    for i in range(volume(m.shape)):
        it.write_cell(m, i, a[0], op)


# linalg ops share an element-wise formulation over memref-like accessors

class _View:
    """Uniform indexing over a memref, or a tensor being copied into."""

    def __init__(self, it, x, op):
        self.it, self.op = it, op
        self.is_tensor = isinstance(x, Tensor)
        self.x = x
        self.shape = x.shape
        if self.is_tensor:
            self.cells = list(x.cells)

    def get(self, idx, t):
        if self.is_tensor:
            if not in_bounds(self.shape, idx):
                return self.it.tensor_read(Tensor(self.shape, self.cells, self.x.serial, self.x.step), idx, t, self.op)
            v = self.cells[flatten(self.shape, idx)]
            if v is None:
                return self.it.tensor_read(self.x, idx, t, self.op)
            return v
        return self.it.load(self.x, idx, t, self.op)

    def set(self, idx, v):
        if self.is_tensor:
            if in_bounds(self.shape, idx):
                self.cells[flatten(self.shape, idx)] = v
            return
        self.it.store(self.x, idx, v, self.op)

    def result(self):
        if self.is_tensor:
            return [Tensor(self.shape, self.cells, self.x.serial, self.x.step)]
        return None


def _index_space(shape):
    for flat in range(volume(shape)):
        yield unflatten(shape, flat)


def _shape_check(it, op, ok):
    if not ok and not it.native:
        it.trap(SHAPE_MISMATCH, op)


def _charge(it, n):
    it.steps += n
    if it.steps > it.fuel:
        raise _Fuel()


def _copy(it, op, a):
    src, dst = a
    _shape_check(it, op, tuple(src.shape) == tuple(dst.shape))
    s, d = _View(it, src, op), _View(it, dst, op)
    t = op.operands[1].type.elem
    _charge(it, volume(d.shape))
    for idx in _index_space(d.shape):
        d.set(idx, s.get(idx, t))
    return d.result()


def _matmul(it, op, a):
    A, B, C = (_View(it, x, op) for x in a)
    t = op.operands[2].type.elem
    w = ir.bitwidth(t)
    m, k = A.shape
    k2, n = B.shape
    _shape_check(it, op, k == k2 and C.shape[0] == m and C.shape[1] == n)
    _charge(it, C.shape[0] * C.shape[1] * max(k, 1))
    for i in range(C.shape[0]):
        for j in range(C.shape[1]):
            acc = C.get([i, j], t)
            for kk in range(k):
                acc = wrap(acc + A.get([i, kk], t) * B.get([kk, j], t), w)
            C.set([i, j], acc)
    return C.result()


def _transpose(it, op, a):
    src, dst = _View(it, a[0], op), _View(it, a[1], op)
    perm = op.attrs["permutation"]
    _shape_check(it, op, all(src.shape[perm[i]] == dst.shape[i] for i in range(len(perm))))
    t = op.operands[1].type.elem
    _charge(it, volume(dst.shape))
    for idx in _index_space(dst.shape):
        sidx = [0] * len(perm)
        for i, p in enumerate(perm):
            sidx[p] = idx[i]
        dst.set(idx, src.get(sidx, t))
    return dst.result()


def _broadcast(it, op, a):
    src, dst = _View(it, a[0], op), _View(it, a[1], op)
    dims = set(op.attrs["dimensions"])
    kept = [i for i in range(len(dst.shape)) if i not in dims]
    _shape_check(it, op, [dst.shape[i] for i in kept] == list(src.shape))
    t = op.operands[1].type.elem
    _charge(it, volume(dst.shape))
    for idx in _index_space(dst.shape):
        dst.set(idx, src.get([idx[i] for i in kept], t))
    return dst.result()


def _for(it, op, a):
    lb, ub, step = a[0], a[1], a[2]
    if step <= 0:
        raise _Crash("non-positive loop step")
    carried = list(a[3:])
    body = op.regions[0]
    init_shapes = [_shape_of(v) for v in carried]
    iv = lb
    while iv < ub:
        carried = it.run_region(body, [iv] + carried)
        if not it.native:
            for v, s in zip(carried, init_shapes):
                if s is not None and _shape_of(v) != s:
                    it.trap(SHAPE_MISMATCH, body.blocks[0].ops[-1])
        iv += step
    return carried


def _shape_of(v):
    if isinstance(v, (MemRef, Tensor)):
        return v.shape
    return None


def _if(it, op, a):
    return it.run_region(op.regions[0 if a[0] else 1], [])


def _index_cast(it, op, a):
    return [wrap(a[0], ir.bitwidth(op.result.type))]


# exec-level memory ops address a flat cell index

def _xload(it, op, a):
    return [it.read_cell(a[0], a[1], op.result.type, op)]


def _xstore(it, op, a):
    it.write_cell(a[1], a[2], a[0], op)


def _xvload(it, op, a):
    m, base = a
    t = op.result.type
    n = t.shape[0]
    if 0 <= base < volume(m.shape) and base + n > volume(m.shape) and not it.native:
        it.trap(INSUFFICIENT_VOLUME, op)
    return [tuple(it.read_cell(m, base + lane, t.elem, op) for lane in range(n))]


def _xvstore(it, op, a):
    vec, m, base = a
    n = len(vec)
    if 0 <= base < volume(m.shape) and base + n > volume(m.shape) and not it.native:
        it.trap(INSUFFICIENT_VOLUME, op)
    for lane, v in enumerate(vec):
        it.write_cell(m, base + lane, v, op)


def _xext(it, op, a):
    s = op.operands[0].type
    if op.kind == "exec.zext":
        return [wrap(unsigned(a[0], ir.bitwidth(s)), ir.bitwidth(op.result.type))]
    return [wrap(a[0], ir.bitwidth(op.result.type))]


_HANDLERS = {k: _binop(v) for k, v in BINOP_SEMANTICS.items()}
_HANDLERS.update({
    "arith.constant": _const, "index.constant": _const, "exec.constant": _const,
    "arith.cmpi": _cmp, "index.cmp": _cmp, "exec.icmp": _cmp,
    "arith.select": _select, "exec.select": _select,
    "arith.extsi": _sext, "arith.extui": _zext, "arith.trunci": _trunc,
    "exec.sext": _xext, "exec.zext": _xext, "exec.trunc": _trunc,
    "arith.index_cast": _index_cast,
    "memref.alloc": _alloc, "memref.alloca": _alloc, "exec.alloc": _alloc,
    "memref.dim": _mdim, "exec.dim": _mdim, "tensor.dim": _tdim,
    "memref.load": _mload, "loop.load": _mload,
    "memref.store": _mstore, "loop.store": _mstore,
    "memref.cast": _mcast, "exec.cast": _mcast, "tensor.cast": _tcast,
    "memref.realloc": _realloc, "exec.realloc": _realloc,
    "memref.assume_alignment": _assume_alignment, "exec.assume_alignment": _assume_alignment,
    "tensor.empty": _tempty, "tensor.splat": _tsplat, "tensor.from_elements": _tfrom,
    "tensor.extract": _textract, "tensor.insert": _tinsert,
    "vector.splat": _vsplat, "exec.vsplat": _vsplat,
    "vector.extract": _vextract, "exec.vextract": _vextract,
    "vector.insert": _vinsert, "exec.vinsert": _vinsert,
    "vector.reduce_add": _vreduce, "exec.vreduce": _vreduce,
    "vector.extract_strided_slice": _vslice,
    "vector.load": _vload, "loop.vector_load": _vload,
    "vector.store": _vstore, "loop.vector_store": _vstore,
    "exec.load": _xload, "exec.store": _xstore, "exec.vload": _xvload, "exec.vstore": _xvstore,
    "linalg.fill": _fill, "linalg.copy": _copy, "linalg.matmul": _matmul,
    "linalg.transpose": _transpose, "linalg.broadcast": _broadcast,
    "loop.for": _for, "loop.if": _if,
})


def interpret(p, fuel=DEFAULT_FUEL, mode="trap"):
    """Run ``main``; every failure mode is reported in the returned outcome."""
    return Interpreter(p, fuel, mode).run()


# ---------------------------------------------------------------- checksum

def _to_i64(b, v):
    t = v.type
    if isinstance(t, IndexType):
        return b.value("arith.index_cast", [v], I64)
    if t.width == 64:
        return v
    kind = "arith.extui" if t.width == 1 else "arith.extsi"
    return b.value(kind, [v], I64)


def _summable(t):
    return isinstance(t, (IntType, IndexType))


def _sum_container(b, x, acc):
    """Emit a loop nest adding every element of memref/tensor ``x`` to ``acc``."""
    t = x.type
    dims = []
    for k in range(t.rank):
        dim_kind = "tensor.dim" if t.kind == "tensor" else "memref.dim"
        dims.append(b.value(dim_kind, [x, b.index(k)], INDEX))
    lo, one = b.index(0), b.index(1)

    def nest(builder, k, idx, acc):
        if k == t.rank:
            read = "tensor.extract" if t.kind == "tensor" else "memref.load"
            e = builder.value(read, [x] + idx, t.elem)
            return builder.value("arith.addi", [acc, _to_i64(builder, e)], I64)
        body = ir.Block([INDEX, I64])
        loop = builder.op("loop.for", [lo, dims[k], one, acc], [I64], regions=[ir.Region([body])])
        inner = Builder(body, guard=True)
        out = nest(inner, k + 1, idx + [body.args[0]], body.args[1])
        inner.op("loop.yield", [out])
        return loop.result

    return nest(b, 0, [], acc)


def _freed_values(main):
    """Memrefs whose storage a realloc consumed, plus their aliases."""
    ops = main.body.entry.ops
    roots = []
    for op in ops:
        if op.kind in ("memref.realloc", "exec.realloc"):
            roots.extend(ir.storage_roots(op.operands[0]))
    return set(ir.storage_aliases(ops, roots))


def inject_checksum(p):
    """Make main return an i64 sum of every live integer scalar and element.

    Values are visited in definition order, containers in row-major order.
    Floats and memrefs released by a realloc are skipped. Modifies ``p``.
    """
    main = p.main
    block = main.body.entry
    ret = block.ops[-1]
    assert ret.kind == "exec.return"
    live = [r for op in block.ops[:-1] for r in op.results]
    freed = _freed_values(main)
    b = Builder(block, len(block.ops) - 1, guard=True)
    acc = b.const(0, I64)
    for v in live:
        t = v.type
        if _summable(t):
            acc = b.value("arith.addi", [acc, _to_i64(b, v)], I64)
        elif isinstance(t, ShapedType) and _summable(t.elem):
            if t.kind == "vector":
                for lane in range(t.shape[0]):
                    e = b.value("vector.extract", [v], t.elem, position=lane)
                    acc = b.value("arith.addi", [acc, _to_i64(b, e)], I64)
            elif v not in freed:
                acc = _sum_container(b, v, acc)
    ret.operands = [acc]
    main.result_types = [I64]
    return p
