"""Data model of the mini multi-level IR: types, SSA values, operations."""

from dataclasses import dataclass

MAX_RANK = 4
MAX_DIM = 32
INT_WIDTHS = (1, 8, 16, 32, 64)
INDEX_WIDTH = 64


# ---------------------------------------------------------------- types

@dataclass(frozen=True)
class IntType:
    width: int

    def __str__(self):
        return f"i{self.width}"


@dataclass(frozen=True)
class IndexType:
    def __str__(self):
        return "index"


@dataclass(frozen=True)
class FloatType:
    def __str__(self):
        return "f32"


@dataclass(frozen=True)
class ShapedType:
    """memref / tensor / vector type; ``None`` in ``shape`` marks a dynamic dim."""

    kind: str
    shape: tuple
    elem: object

    def __str__(self):
        dims = "".join(("?" if d is None else str(d)) + "x" for d in self.shape)
        return f"{self.kind}<{dims}{self.elem}>"

    @property
    def rank(self):
        return len(self.shape)

    @property
    def is_static(self):
        return all(d is not None for d in self.shape)

    @property
    def num_dynamic(self):
        return sum(d is None for d in self.shape)

    def with_shape(self, shape):
        return ShapedType(self.kind, tuple(shape), self.elem)

    def with_kind(self, kind):
        return ShapedType(kind, self.shape, self.elem)


INDEX = IndexType()
F32 = FloatType()
I1 = IntType(1)
I8 = IntType(8)
I16 = IntType(16)
I32 = IntType(32)
I64 = IntType(64)


def memref(shape, elem):
    return ShapedType("memref", tuple(shape), elem)


def tensor(shape, elem):
    return ShapedType("tensor", tuple(shape), elem)


def vector(shape, elem):
    return ShapedType("vector", tuple(shape), elem)


def is_int(t):
    return isinstance(t, IntType)


def is_intlike(t):
    return isinstance(t, (IntType, IndexType))


def bitwidth(t):
    if isinstance(t, IntType):
        return t.width
    if isinstance(t, IndexType):
        return INDEX_WIDTH
    raise TypeError(f"{t} has no integer bit width")


def is_shaped(t, kind=None):
    return isinstance(t, ShapedType) and (kind is None or t.kind == kind)


# ---------------------------------------------------------------- SSA

class Value:
    __slots__ = ("type", "owner", "index")

    def __init__(self, type, owner=None, index=0):
        self.type = type
        self.owner = owner
        self.index = index

    @property
    def is_block_arg(self):
        return isinstance(self.owner, Block)

    @property
    def op(self):
        """Defining operation, or None for block arguments."""
        return self.owner if isinstance(self.owner, Operation) else None

    def __repr__(self):
        return f"<Value {self.type} of {getattr(self.owner, 'kind', 'block')}>"


class Operation:
    __slots__ = ("kind", "operands", "results", "attrs", "regions", "successors")

    def __init__(self, kind, operands=(), result_types=(), attrs=None,
                 regions=None, successors=None):
        self.kind = kind
        self.operands = list(operands)
        self.results = [Value(t, self, i) for i, t in enumerate(result_types)]
        self.attrs = dict(attrs or {})
        self.regions = list(regions or [])
        self.successors = list(successors or [])

    @property
    def result(self):
        return self.results[0]

    @property
    def dialect(self):
        return self.kind.split(".", 1)[0]

    def __repr__(self):
        return f"<Operation {self.kind}>"


class Block:
    __slots__ = ("args", "ops")

    def __init__(self, arg_types=(), ops=None):
        self.args = [Value(t, self, i) for i, t in enumerate(arg_types)]
        self.ops = list(ops or [])

    def add_arg(self, type):
        v = Value(type, self, len(self.args))
        self.args.append(v)
        return v

    @property
    def terminator(self):
        return self.ops[-1] if self.ops else None


class Region:
    __slots__ = ("blocks",)

    def __init__(self, blocks=None):
        self.blocks = list(blocks or [])

    @property
    def entry(self):
        return self.blocks[0]


class Function:
    def __init__(self, name, result_types=(), body=None):
        self.name = name
        self.result_types = list(result_types)
        self.body = body if body is not None else Region([Block()])

    @property
    def arg_types(self):
        return [a.type for a in self.body.entry.args]


class Program:
    def __init__(self, functions=None):
        self.functions = list(functions or [])

    @property
    def main(self):
        for f in self.functions:
            if f.name == "main":
                return f
        raise KeyError("program has no main function")


def empty_program():
    main = Function("main")
    main.body.entry.ops.append(Operation("exec.return"))
    return Program([main])


# ---------------------------------------------------------------- traversal

def walk_block(block):
    for op in block.ops:
        yield op
        for region in op.regions:
            for b in region.blocks:
                yield from walk_block(b)


def walk(program, visitor=None):
    """Pre-order walk over every operation; parents precede nested ops.

    With ``visitor`` the callable is invoked per op; otherwise an iterator is
    returned.
    """
    it = (op for f in program.functions for b in f.body.blocks for op in walk_block(b))
    if visitor is None:
        return it
    for op in it:
        visitor(op)
    return None


def walk_blocks(program):
    def rec(block):
        yield block
        for op in block.ops:
            for region in op.regions:
                for b in region.blocks:
                    yield from rec(b)

    for f in program.functions:
        for b in f.body.blocks:
            yield from rec(b)


def walk_with_block(program):
    """Yield ``(op, block)`` pairs in pre-order."""
    for block in walk_blocks(program):
        for op in list(block.ops):
            yield op, block


def kinds(program):
    return {op.kind for op in walk(program)}


def count_ops(program):
    return sum(1 for _ in walk(program))


def all_values(program):
    for block in walk_blocks(program):
        yield from block.args
        for op in block.ops:
            yield from op.results


def resolve(value, mapping):
    seen = 0
    while value in mapping:
        value = mapping[value]
        seen += 1
        if seen > 10000:
            raise RuntimeError("cyclic value replacement")
    return value


def replace_uses(program_or_blocks, mapping):
    """Rewrite every operand found in ``mapping`` (chains are followed)."""
    if not mapping:
        return
    blocks = (walk_blocks(program_or_blocks) if isinstance(program_or_blocks, Program)
              else program_or_blocks)
    for block in blocks:
        for op in block.ops:
            op.operands = [resolve(v, mapping) if v in mapping else v for v in op.operands]


def use_counts(program):
    counts = {}
    for op in walk(program):
        for v in op.operands:
            counts[v] = counts.get(v, 0) + 1
    return counts


_ALIAS_KINDS = ("memref.cast", "exec.cast", "arith.select", "exec.select", "loop.for", "loop.if")


def storage_roots(v):
    """Memref values ``v`` may have been derived from.

    Looks through casts, selects, and loop/if results (following inits
    and yields back to their sources).
    """
    roots, stack, seen = [], [v], set()
    carried = {}  # loop body block argument -> loop result it carries
    while stack:
        x = stack.pop()
        if x in seen:
            continue
        seen.add(x)
        if x in carried:
            stack.append(carried[x])
            continue
        op = x.op
        if op is not None and op.kind in ("memref.cast", "exec.cast"):
            stack.append(op.operands[0])
        elif op is not None and op.kind in ("arith.select", "exec.select"):
            stack.extend(op.operands[1:])
        elif op is not None and op.kind == "loop.for":
            body = op.regions[0].entry
            for j, r in enumerate(op.results):
                carried[body.args[1 + j]] = r
            stack.append(op.operands[3 + x.index])
            stack.append(body.terminator.operands[x.index])
        elif op is not None and op.kind == "loop.if":
            stack.extend(r.entry.terminator.operands[x.index] for r in op.regions)
        else:
            roots.append(x)
    return roots


def storage_aliases(ops, roots):
    """Values produced by ``ops`` that may share storage with any of ``roots``."""
    alias = list(roots)
    seen = set(roots)
    for op in ops:
        if op.kind in _ALIAS_KINDS and any(v in seen for v in op.operands):
            for r in op.results:
                if is_shaped(r.type, "memref") and r not in seen:
                    seen.add(r)
                    alias.append(r)
    return alias


# ---------------------------------------------------------------- cloning

def clone_block_into(src, vmap, bmap):
    dst = bmap[src]
    for a in src.args:
        vmap[a] = dst.add_arg(a.type)
    return dst


def _clone_region(region, vmap):
    bmap = {b: Block() for b in region.blocks}
    for b in region.blocks:
        clone_block_into(b, vmap, bmap)
    for b in region.blocks:
        bmap[b].ops = [clone_op(op, vmap, bmap) for op in b.ops]
    return Region([bmap[b] for b in region.blocks])


def clone_op(op, vmap, bmap=None):
    """Clone ``op`` (recursively). ``vmap`` maps old values to new and is updated."""
    new = Operation(op.kind, [vmap.get(v, v) for v in op.operands],
                    [r.type for r in op.results], dict(op.attrs))
    new.attrs = {k: (list(v) if isinstance(v, list) else v) for k, v in op.attrs.items()}
    for old, r in zip(op.results, new.results):
        vmap[old] = r
    # regions refer to values defined before them, so operands are mapped first
    new.regions = [_clone_region(r, vmap) for r in op.regions]
    if op.successors:
        new.successors = [bmap[b] if bmap and b in bmap else b for b in op.successors]
    return new


def clone_function(f):
    vmap = {}
    return Function(f.name, list(f.result_types), _clone_region(f.body, vmap))


def clone_program(p):
    return Program([clone_function(f) for f in p.functions])
