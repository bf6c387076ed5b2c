"""Insertion-point helper for constructing ops."""

from .ir import Operation, INDEX
from .registry import ub_prone_kinds

_UB_PRONE = ub_prone_kinds()


class Builder:
    """Inserts new ops into ``block`` before position ``index`` (default: end).

    With ``guard`` set, every UB-prone op it creates is tagged ``guarded = 1``,
    marking it as built in a form that cannot misbehave.
    """

    def __init__(self, block, index=None, guard=False):
        self.block = block
        self.pos = len(block.ops) if index is None else index
        self.guard = guard
        self.count = 0

    @classmethod
    def before(cls, block, op, guard=False):
        return cls(block, block.ops.index(op), guard)

    @classmethod
    def after(cls, block, op, guard=False):
        return cls(block, block.ops.index(op) + 1, guard)

    def insert(self, op):
        if self.guard and op.kind in _UB_PRONE:
            op.attrs["guarded"] = 1
        self.block.ops.insert(self.pos, op)
        self.pos += 1
        self.count += 1
        return op

    def op(self, kind, operands=(), result_types=(), attrs=None, regions=None, successors=None):
        return self.insert(Operation(kind, operands, result_types, attrs, regions, successors))

    def value(self, kind, operands, result_type, **attrs):
        return self.op(kind, operands, [result_type], attrs).result

    # shorthands used throughout the rewrites

    def const(self, value, type):
        kind = "index.constant" if type == INDEX else "arith.constant"
        return self.value(kind, [], type, value=value)

    def index(self, value):
        return self.const(value, INDEX)
