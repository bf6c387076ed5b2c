"""Static table of every operation kind known to the IR."""

from dataclasses import dataclass
from types import MappingProxyType

REGISTRY_VERSION = 1

DIALECTS = ("arith", "index", "memref", "tensor", "vector", "linalg", "loop", "cf", "exec")
EXECUTABLE_DIALECT = "exec"

UB_CLASSES = (
    "None", "ShapeInconsistency", "IndexOOB", "ArrayLoadStore", "MemRefAlias",
    "ScalarDiv", "ScalarShift", "UninitAlloc", "ZeroDimHazard",
)


@dataclass(frozen=True)
class OpKindDescriptor:
    id: str
    dialect: str
    signature: str
    ub_class: str = "None"
    traits: frozenset = frozenset()
    num_regions: int = 0

    @property
    def terminator(self):
        return "terminator" in self.traits

    @property
    def pure(self):
        return "pure" in self.traits


def _d(id, signature, ub_class="None", traits=(), num_regions=0):
    traits = frozenset(traits) | ({"has_regions"} if num_regions else frozenset())
    return OpKindDescriptor(id, id.split(".")[0], signature, ub_class, traits, num_regions)


P = ("pure",)
T = ("terminator",)

_ARITH_BIN = ["addi", "subi", "muli", "andi", "ori", "xori"]
_ARITH_DIV = ["divsi", "divui", "remsi", "remui", "ceildivsi"]
_ARITH_SHIFT = ["shli", "shrsi", "shrui"]
_INDEX_BIN = ["add", "sub", "mul"]
_INDEX_DIV = ["divs", "divu", "rems", "remu"]
_INDEX_SHIFT = ["shli", "shrsi", "shrui"]
_EXEC_BIN = ["add", "sub", "mul", "and", "or", "xor", "sdiv", "udiv", "srem", "urem",
             "shl", "ashr", "lshr"]

_descs = [
    _d("arith.constant", "() -> int|f32 {value}", traits=P),
    *[_d(f"arith.{n}", "(int, int) -> int", traits=P) for n in _ARITH_BIN],
    *[_d(f"arith.{n}", "(int, int) -> int", "ScalarDiv", P) for n in _ARITH_DIV],
    *[_d(f"arith.{n}", "(int, int) -> int", "ScalarShift", P) for n in _ARITH_SHIFT],
    _d("arith.cmpi", "(int, int) -> i1 {predicate}", traits=P),
    _d("arith.select", "(i1, T, T) -> T", traits=P),
    _d("arith.extsi", "(iN) -> iM, M > N", traits=P),
    _d("arith.extui", "(iN) -> iM, M > N", traits=P),
    _d("arith.trunci", "(iN) -> iM, M < N", traits=P),
    _d("arith.index_cast", "(int|index) -> index|int", traits=P),

    _d("index.constant", "() -> index {value}", traits=P),
    *[_d(f"index.{n}", "(index, index) -> index", traits=P) for n in _INDEX_BIN],
    *[_d(f"index.{n}", "(index, index) -> index", "ScalarDiv", P) for n in _INDEX_DIV],
    *[_d(f"index.{n}", "(index, index) -> index", "ScalarShift", P) for n in _INDEX_SHIFT],
    _d("index.cmp", "(index, index) -> i1 {predicate}", traits=P),

    _d("memref.alloc", "(index*) -> memref {alignment?}", "UninitAlloc"),
    _d("memref.alloca", "(index*) -> memref {alignment?}", "UninitAlloc"),
    _d("memref.dim", "(memref, index) -> index", "IndexOOB", P),
    _d("memref.load", "(memref, index*) -> elem", "IndexOOB"),
    _d("memref.store", "(elem, memref, index*) -> ()", "IndexOOB"),
    _d("memref.cast", "(memref) -> memref", "ShapeInconsistency", P),
    _d("memref.realloc", "(memref<?>, index?) -> memref", "MemRefAlias"),
    _d("memref.assume_alignment", "(memref) -> () {alignment}", "MemRefAlias"),

    _d("tensor.empty", "(index*) -> tensor", "ZeroDimHazard", P),
    _d("tensor.splat", "(elem, index*) -> tensor", traits=P),
    _d("tensor.from_elements", "(elem*) -> tensor", traits=P),
    _d("tensor.extract", "(tensor, index*) -> elem", "IndexOOB", P),
    _d("tensor.insert", "(elem, tensor, index*) -> tensor", "IndexOOB", P),
    _d("tensor.dim", "(tensor, index) -> index", "IndexOOB", P),
    _d("tensor.cast", "(tensor) -> tensor", "ShapeInconsistency", P),

    _d("vector.splat", "(elem) -> vector", traits=P),
    _d("vector.extract", "(vector) -> elem {position}", traits=P),
    _d("vector.insert", "(elem, vector) -> vector {position}", traits=P),
    _d("vector.load", "(memref, index*) -> vector", "ArrayLoadStore"),
    _d("vector.store", "(vector, memref, index*) -> ()", "ArrayLoadStore"),
    _d("vector.reduce_add", "(vector) -> elem", traits=P),
    _d("vector.extract_strided_slice", "(vector) -> vector {offset, size}", traits=P),

    _d("loop.for", "(index, index, index, T*) -> T*", num_regions=1),
    _d("loop.if", "(i1) -> T*", num_regions=2),
    _d("loop.yield", "(T*) -> ()", "ShapeInconsistency", T),
    _d("loop.load", "(memref, index*) -> elem {offsets}", "IndexOOB"),
    _d("loop.store", "(elem, memref, index*) -> () {offsets}", "IndexOOB"),
    _d("loop.vector_load", "(memref, index*) -> vector {offsets}", "ArrayLoadStore"),
    _d("loop.vector_store", "(vector, memref, index*) -> () {offsets}", "ArrayLoadStore"),

    _d("linalg.fill", "(elem, memref) -> ()"),
    _d("linalg.copy", "(X, Y) -> Y?", "ShapeInconsistency"),
    _d("linalg.matmul", "(A, B, C) -> C?", "ShapeInconsistency"),
    _d("linalg.transpose", "(X, Y) -> Y? {permutation}", "ShapeInconsistency"),
    _d("linalg.broadcast", "(X, Y) -> Y? {dimensions}", "ShapeInconsistency"),

    _d("cf.br", "(T*) -> () [^succ]", traits=T),
    _d("cf.cond_br", "(i1, T*, U*) -> () [^t, ^f] {segments}", traits=T),

    _d("exec.constant", "() -> int|index|f32 {value}", traits=P),
    *[_d(f"exec.{n}", "(T, T) -> T", traits=P) for n in _EXEC_BIN],
    _d("exec.icmp", "(T, T) -> i1 {predicate}", traits=P),
    _d("exec.select", "(i1, T, T) -> T", traits=P),
    _d("exec.sext", "(int|index) -> int|index", traits=P),
    _d("exec.zext", "(int|index) -> int|index", traits=P),
    _d("exec.trunc", "(int|index) -> int|index", traits=P),
    _d("exec.alloc", "(index*) -> memref {alignment?}"),
    _d("exec.dim", "(memref, index) -> index", traits=P),
    _d("exec.load", "(memref, index) -> elem"),
    _d("exec.store", "(elem, memref, index) -> ()"),
    _d("exec.vload", "(memref, index) -> vector"),
    _d("exec.vstore", "(vector, memref, index) -> ()"),
    _d("exec.vsplat", "(elem) -> vector", traits=P),
    _d("exec.vextract", "(vector) -> elem {position}", traits=P),
    _d("exec.vinsert", "(elem, vector) -> vector {position}", traits=P),
    _d("exec.vreduce", "(vector) -> elem", traits=P),
    _d("exec.cast", "(memref) -> memref", traits=P),
    _d("exec.realloc", "(memref<?>, index?) -> memref"),
    _d("exec.assume_alignment", "(memref) -> () {alignment}"),
    _d("exec.br", "(T*) -> () [^succ]", traits=T),
    _d("exec.cond_br", "(i1, T*, U*) -> () [^t, ^f] {segments}", traits=T),
    _d("exec.return", "(T*) -> ()", traits=T),
]

_TABLE = MappingProxyType({d.id: d for d in _descs})
assert len(_TABLE) == len(_descs), "duplicate op kind"


def registry():
    return _TABLE


def lookup(kind):
    try:
        return _TABLE[kind]
    except KeyError:
        raise KeyError(f"unknown op kind {kind!r}") from None


def ub_prone_kinds():
    return frozenset(k for k, d in _TABLE.items() if d.ub_class != "None")


# kind -> integer semantics name used by intops
BINOP_SEMANTICS = {
    "arith.addi": "add", "arith.subi": "sub", "arith.muli": "mul",
    "arith.andi": "and", "arith.ori": "or", "arith.xori": "xor",
    "arith.divsi": "sdiv", "arith.divui": "udiv", "arith.remsi": "srem",
    "arith.remui": "urem", "arith.ceildivsi": "ceildivs",
    "arith.shli": "shl", "arith.shrsi": "ashr", "arith.shrui": "lshr",
    "index.add": "add", "index.sub": "sub", "index.mul": "mul",
    "index.divs": "sdiv", "index.divu": "udiv", "index.rems": "srem",
    "index.remu": "urem", "index.shli": "shl", "index.shrsi": "ashr",
    "index.shrui": "lshr",
    **{f"exec.{n}": n for n in _EXEC_BIN},
}

CONSTANT_KINDS = frozenset({"arith.constant", "index.constant", "exec.constant"})
COMPARE_KINDS = frozenset({"arith.cmpi", "index.cmp", "exec.icmp"})
SELECT_KINDS = frozenset({"arith.select", "exec.select"})
