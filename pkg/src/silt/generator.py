"""Seeded random generator of well-typed, deliberately UB-prone programs."""

import hashlib
import json
import random
from dataclasses import dataclass, field, asdict
from pathlib import Path

from . import ir
from .ir import INDEX, I1, F32, Block, Function, Program, Region
from .builder import Builder
from .intops import wrap, int_min, int_max
from .verify import validate
from .textfmt import print_program

DEFAULT_WEIGHTS = {
    "arith": 3.0, "index": 1.0, "memref": 2.0, "tensor": 1.0,
    "vector": 1.0, "linalg": 1.0, "loop": 1.5,
}

ALIGNMENTS = (1, 2, 4, 8, 16, 32, 64)
MAX_RETRIES = 20


@dataclass
class GenConfig:
    seed: int = 0
    max_ops_per_block: int = 24
    max_region_depth: int = 3
    dialect_weights: dict = field(default_factory=lambda: dict(DEFAULT_WEIGHTS))
    allow_zero_dim: bool = True
    allow_dynamic_dims: bool = True
    zero_dim_prob: float = 0.05

    def __post_init__(self):
        w = self.dialect_weights
        if any(v < 0 for v in w.values()) or not any(v > 0 for v in w.values()):
            raise ValueError("dialect weights must be >= 0 with at least one positive")
        unknown = set(w) - set(DEFAULT_WEIGHTS)
        if unknown:
            raise ValueError(f"no generator support for dialects {sorted(unknown)}")
        if self.max_region_depth < 1:
            raise ValueError("max_region_depth must be >= 1")
        if self.max_ops_per_block < 1:
            raise ValueError("max_ops_per_block must be >= 1")

    def to_dict(self):
        return asdict(self)

    def config_hash(self, include_seed=False):
        d = self.to_dict()
        if not include_seed:
            d.pop("seed")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


class GeneratorDefect(RuntimeError):
    pass


class _Gen:
    def __init__(self, cfg, seed):
        self.cfg = cfg
        self.rng = random.Random(seed)
        self.dialects = [d for d, w in cfg.dialect_weights.items() if w > 0]
        self.weights = [cfg.dialect_weights[d] for d in self.dialects]
        self.productions = {
            "arith": [(3, self.p_binop), (2, self.p_divrem), (1.5, self.p_shift), (1, self.p_cmp_select),
                      (1, self.p_cast), (3, self.p_identity), (0.2, self.p_float)],
            "index": [(2, self.p_index_binop), (1, self.p_index_divrem), (0.7, self.p_index_shift),
                      (0.7, self.p_index_cmp)],
            "memref": [(2, self.p_alloc), (3, self.p_store), (3, self.p_load), (1, self.p_rmw),
                       (1, self.p_mdim), (0.6, self.p_mcast), (0.5, self.p_realloc),
                       (0.5, self.p_assume_alignment)],
            "tensor": [(1, self.p_tensor_make), (1.5, self.p_textract), (1, self.p_tinsert),
                       (0.5, self.p_tdim), (0.5, self.p_tcast)],
            "vector": [(1.5, self.p_vsplat), (1.5, self.p_vload), (1.2, self.p_vstore), (1, self.p_vextract),
                       (0.6, self.p_vinsert), (0.6, self.p_vreduce), (0.6, self.p_vslice)],
            "linalg": [(1, self.p_fill), (1, self.p_copy), (1, self.p_matmul), (0.8, self.p_transpose),
                       (0.8, self.p_broadcast)],
            "loop": [(3, self.p_for), (1, self.p_if), (1.5, self.p_loop_access)],
        }

    # ------------------------------------------------------------ basics

    def chance(self, p):
        return self.rng.random() < p

    def int_type(self):
        return ir.IntType(self.rng.choices((8, 16, 32, 64), (1, 1, 4, 2))[0])

    def pick(self, scope, pred):
        cands = [v for v in scope if pred(v.type)]
        if not cands:
            return None
        if self.chance(0.6):
            return self.rng.choice(cands[-4:])
        return self.rng.choice(cands)

    def const_value(self, t):
        w = ir.bitwidth(t)
        r = self.rng.random()
        if r < 0.12:
            return 0
        if r < 0.24:
            return 1
        if r < 0.3:
            return -1
        if r < 0.7:
            return self.rng.randint(2, 12)
        if r < 0.75:
            return int_min(w)
        if r < 0.8:
            return int_max(w)
        return wrap(self.rng.getrandbits(w), w)

    def const_int(self, b, scope, t, value=None):
        v = b.const(self.const_value(t) if value is None else value, t)
        scope.append(v)
        return v

    def int_val(self, b, scope, t):
        v = self.pick(scope, lambda x: x == t) if self.chance(0.75) else None
        return v if v is not None else self.const_int(b, scope, t)

    def any_int(self, b, scope):
        v = self.pick(scope, lambda x: ir.is_int(x) and x.width > 1) if self.chance(0.8) else None
        return v if v is not None else self.const_int(b, scope, self.int_type())

    def index_const(self, b, scope, lo=0, hi=7):
        v = b.index(self.rng.randint(lo, hi))
        scope.append(v)
        return v

    def index_val(self, b, scope):
        """An index operand; usually small, occasionally hazardous."""
        if self.chance(0.6):
            v = self.pick(scope, lambda x: x == INDEX)
            if v is not None:
                return v
        r = self.rng.random()
        if r < 0.8:
            return self.index_const(b, scope, 0, 5)
        if r < 0.95:
            return self.index_const(b, scope, 6, 40)
        return self.index_const(b, scope, -3, -1)

    def extent_val(self, b, scope):
        if self.chance(0.7):
            return self.index_const(b, scope, 1, 6)
        return self.index_val(b, scope)

    def dim_size(self):
        return self.rng.choices((1, 2, 3, 4, 5, 6, 8), (2, 4, 4, 4, 2, 2, 1))[0]

    def shape(self, rank=None, allow_zero=True):
        if rank is None:
            rank = self.rng.choices((1, 2, 3, 4), (10, 7, 2, 1))[0]
        dims = [self.dim_size() for _ in range(rank)]
        if allow_zero and self.cfg.allow_zero_dim and self.chance(self.cfg.zero_dim_prob):
            if self.chance(0.5):
                dims = []
            else:
                dims[self.rng.randrange(rank)] = 0
        if self.cfg.allow_dynamic_dims:
            dims = [None if (d and self.chance(0.25)) else d for d in dims]
        return tuple(dims)

    # ------------------------------------------------------------ containers

    def new_memref(self, b, scope, rank=None, elem=None, shape=None):
        shape = self.shape(rank) if shape is None else shape
        t = ir.memref(shape, elem or self.int_type())
        dyn = [self.extent_val(b, scope) for d in shape if d is None]
        attrs = {"alignment": self.rng.choice(ALIGNMENTS)} if self.chance(0.3) else {}
        kind = "memref.alloca" if self.chance(0.2) else "memref.alloc"
        m = b.value(kind, dyn, t, **attrs)
        scope.append(m)
        if self.chance(0.4):
            b.op("linalg.fill", [self.int_val(b, scope, t.elem), m])
        return m

    def memref_val(self, b, scope, pred=lambda t: True, rank=None, elem=None):
        def ok(t):
            return (ir.is_shaped(t, "memref") and pred(t) and (rank is None or t.rank == rank)
                    and (elem is None or t.elem == elem))
        v = self.pick(scope, ok) if self.chance(0.75) else None
        if v is not None:
            return v
        if rank == 0:
            rank = None
        return self.new_memref(b, scope, rank, elem)

    def new_tensor(self, b, scope, rank=None, elem=None, shape=None):
        shape = self.shape(rank) if shape is None else shape
        elem = elem or self.int_type()
        t = ir.tensor(shape, elem)
        r = self.rng.random()
        vol = 1
        for d in shape:
            vol *= d if d is not None else 99
        if r < 0.3 and vol <= 8 and all(d is not None for d in shape):
            vals = [self.int_val(b, scope, elem) for _ in range(vol)]
            x = b.value("tensor.from_elements", vals, t)
        elif r < 0.7:
            dyn = [self.extent_val(b, scope) for d in shape if d is None]
            x = b.value("tensor.splat", [self.int_val(b, scope, elem)] + dyn, t)
        else:
            dyn = [self.extent_val(b, scope) for d in shape if d is None]
            x = b.value("tensor.empty", dyn, t)
        scope.append(x)
        return x

    def tensor_val(self, b, scope, rank=None, elem=None):
        def ok(t):
            return (ir.is_shaped(t, "tensor") and (rank is None or t.rank == rank)
                    and (elem is None or t.elem == elem))
        v = self.pick(scope, ok) if self.chance(0.75) else None
        return v if v is not None else self.new_tensor(b, scope, rank, elem)

    def vector_type(self, elem=None):
        return ir.vector((self.rng.choice((2, 3, 4, 5, 6, 8)),), elem or self.int_type())

    def vector_val(self, b, scope, elem=None):
        v = self.pick(scope, lambda t: ir.is_shaped(t, "vector") and (elem is None or t.elem == elem))
        if v is not None and self.chance(0.75):
            return v
        t = self.vector_type(elem)
        v = b.value("vector.splat", [self.int_val(b, scope, t.elem)], t)
        scope.append(v)
        return v

    def indices(self, b, scope, rank):
        return [self.index_val(b, scope) for _ in range(rank)]

    # ------------------------------------------------------------ arith

    def _emit(self, b, scope, kind, operands, t, **attrs):
        v = b.value(kind, operands, t, **attrs)
        scope.append(v)
        return v

    def p_binop(self, b, scope, depth):
        x = self.any_int(b, scope)
        y = self.int_val(b, scope, x.type)
        kind = self.rng.choice(("addi", "subi", "muli", "andi", "ori", "xori"))
        self._emit(b, scope, f"arith.{kind}", [x, y], x.type)
        return True

    def p_divrem(self, b, scope, depth):
        x = self.any_int(b, scope)
        d = self.int_val(b, scope, x.type)
        kind = self.rng.choice(("divsi", "divui", "remsi", "remui", "ceildivsi"))
        self._emit(b, scope, f"arith.{kind}", [x, d], x.type)
        return True

    def p_shift(self, b, scope, depth):
        x = self.any_int(b, scope)
        w = x.type.width
        if self.chance(0.5):
            s = self.const_int(b, scope, x.type, self.rng.randint(0, w + 8) if w > 8 else self.rng.randint(0, 12))
        else:
            s = self.int_val(b, scope, x.type)
        kind = self.rng.choice(("shli", "shrsi", "shrui"))
        self._emit(b, scope, f"arith.{kind}", [x, s], x.type)
        return True

    def p_cmp_select(self, b, scope, depth):
        x = self.any_int(b, scope)
        y = self.int_val(b, scope, x.type)
        c = self._emit(b, scope, "arith.cmpi", [x, y], I1, predicate=self.rng.randrange(10))
        if self.chance(0.7):
            self._emit(b, scope, "arith.select", [c, x, self.int_val(b, scope, x.type)], x.type)
        return True

    def p_cast(self, b, scope, depth):
        x = self.any_int(b, scope)
        w = x.type.width
        r = self.rng.random()
        wider = [n for n in (16, 32, 64) if n > w]
        narrower = [n for n in (8, 16, 32) if n < w]
        if r < 0.4 and wider:
            kind = self.rng.choice(("arith.extsi", "arith.extui"))
            self._emit(b, scope, kind, [x], ir.IntType(self.rng.choice(wider)))
        elif r < 0.7 and narrower:
            self._emit(b, scope, "arith.trunci", [x], ir.IntType(self.rng.choice(narrower)))
        else:
            v = self.pick(scope, lambda t: t == INDEX)
            if v is not None and self.chance(0.5):
                self._emit(b, scope, "arith.index_cast", [v], x.type)
            else:
                self._emit(b, scope, "arith.index_cast", [x], INDEX)
        return True

    def p_identity(self, b, scope, depth):
        """Algebraic idioms such as negation and scaling by 0 or 1."""
        x = self.any_int(b, scope)
        t = x.type
        form = self.rng.choice(("neg", "mul0", "mul1", "add0", "sub0"))
        if form == "neg":
            self._emit(b, scope, "arith.subi", [self.const_int(b, scope, t, 0), x], t)
        elif form == "mul0":
            self._emit(b, scope, "arith.muli", [x, self.const_int(b, scope, t, 0)], t)
        elif form == "mul1":
            self._emit(b, scope, "arith.muli", [x, self.const_int(b, scope, t, 1)], t)
        elif form == "add0":
            self._emit(b, scope, "arith.addi", [self.const_int(b, scope, t, 0), x], t)
        else:
            self._emit(b, scope, "arith.subi", [x, self.const_int(b, scope, t, 0)], t)
        return True

    def p_float(self, b, scope, depth):
        self._emit(b, scope, "arith.constant", [], F32, value=float(self.rng.randint(-8, 8)) / 2)
        return True

    # ------------------------------------------------------------ index

    def p_index_binop(self, b, scope, depth):
        x, y = self.index_val(b, scope), self.index_val(b, scope)
        self._emit(b, scope, f"index.{self.rng.choice(('add', 'sub', 'mul'))}", [x, y], INDEX)
        return True

    def p_index_divrem(self, b, scope, depth):
        x, y = self.index_val(b, scope), self.index_val(b, scope)
        self._emit(b, scope, f"index.{self.rng.choice(('divs', 'divu', 'rems', 'remu'))}", [x, y], INDEX)
        return True

    def p_index_shift(self, b, scope, depth):
        x = self.index_val(b, scope)
        s = self.index_const(b, scope, 0, 80) if self.chance(0.5) else self.index_val(b, scope)
        self._emit(b, scope, f"index.{self.rng.choice(('shli', 'shrsi', 'shrui'))}", [x, s], INDEX)
        return True

    def p_index_cmp(self, b, scope, depth):
        x, y = self.index_val(b, scope), self.index_val(b, scope)
        c = self._emit(b, scope, "index.cmp", [x, y], I1, predicate=self.rng.randrange(10))
        self._emit(b, scope, "arith.select", [c, x, y], INDEX)
        return True

    # ------------------------------------------------------------ memref

    def p_alloc(self, b, scope, depth):
        self.new_memref(b, scope)
        return True

    def p_store(self, b, scope, depth):
        m = self.memref_val(b, scope)
        v = self.int_val(b, scope, m.type.elem)
        b.op("memref.store", [v, m] + self.indices(b, scope, m.type.rank))
        return True

    def p_load(self, b, scope, depth):
        m = self.memref_val(b, scope)
        self._emit(b, scope, "memref.load", [m] + self.indices(b, scope, m.type.rank), m.type.elem)
        return True

    def p_rmw(self, b, scope, depth):
        """Read, update and re-read one cell."""
        m = self.memref_val(b, scope)
        idx = self.indices(b, scope, m.type.rank)
        t = m.type.elem
        x = self._emit(b, scope, "memref.load", [m] + idx, t)
        c = self.const_int(b, scope, t, self.rng.randint(1, 9))
        y = self._emit(b, scope, self.rng.choice(("arith.addi", "arith.xori")), [x, c], t)
        b.op("memref.store", [y, m] + idx)
        self._emit(b, scope, "memref.load", [m] + idx, t)
        return True

    def p_mdim(self, b, scope, depth):
        m = self.memref_val(b, scope)
        k = self.index_const(b, scope, 0, m.type.rank + 1)
        self._emit(b, scope, "memref.dim", [m, k], INDEX)
        return True

    def p_mcast(self, b, scope, depth):
        m = self.memref_val(b, scope)
        t = m.type
        if self.chance(0.5):
            shape = [None if (d is not None and self.chance(0.6)) else d for d in t.shape]
        else:
            shape = [(self.dim_size() if self.chance(0.5) else None) if d is None else d for d in t.shape]
        self._emit(b, scope, "memref.cast", [m], t.with_shape(shape))
        return True

    def p_realloc(self, b, scope, depth):
        m = self.memref_val(b, scope, rank=1)
        t = m.type
        if t.rank != 1:
            return False
        if self.chance(0.5):
            out = ir.memref((self.dim_size(),), t.elem)
            r = self._emit(b, scope, "memref.realloc", [m], out)
        else:
            out = ir.memref((None,), t.elem)
            r = self._emit(b, scope, "memref.realloc", [m, self.extent_val(b, scope)], out)
        if self.chance(0.4):
            # deliberately touch the released source
            b.op("memref.store", [self.int_val(b, scope, t.elem), m, self.index_val(b, scope)])
        del r
        return True

    def p_assume_alignment(self, b, scope, depth):
        m = self.memref_val(b, scope)
        b.op("memref.assume_alignment", [m], attrs={"alignment": self.rng.choice(ALIGNMENTS)})
        return True

    # ------------------------------------------------------------ tensor

    def p_tensor_make(self, b, scope, depth):
        self.new_tensor(b, scope)
        return True

    def p_textract(self, b, scope, depth):
        x = self.tensor_val(b, scope)
        self._emit(b, scope, "tensor.extract", [x] + self.indices(b, scope, x.type.rank), x.type.elem)
        return True

    def p_tinsert(self, b, scope, depth):
        x = self.tensor_val(b, scope)
        v = self.int_val(b, scope, x.type.elem)
        self._emit(b, scope, "tensor.insert", [v, x] + self.indices(b, scope, x.type.rank), x.type)
        return True

    def p_tdim(self, b, scope, depth):
        x = self.tensor_val(b, scope)
        k = self.index_const(b, scope, 0, x.type.rank + 1)
        self._emit(b, scope, "tensor.dim", [x, k], INDEX)
        return True

    def p_tcast(self, b, scope, depth):
        x = self.tensor_val(b, scope)
        t = x.type
        shape = [None if (d is not None and self.chance(0.6)) else
                 (d if d is not None else (self.dim_size() if self.chance(0.5) else None)) for d in t.shape]
        self._emit(b, scope, "tensor.cast", [x], t.with_shape(shape))
        return True

    # ------------------------------------------------------------ vector

    def p_vsplat(self, b, scope, depth):
        t = self.vector_type()
        self._emit(b, scope, "vector.splat", [self.int_val(b, scope, t.elem)], t)
        return True

    def p_vload(self, b, scope, depth):
        m = self.memref_val(b, scope)
        if m.type.rank == 0:
            return False
        t = self.vector_type(m.type.elem)
        self._emit(b, scope, "vector.load", [m] + self.indices(b, scope, m.type.rank), t)
        return True

    def p_vstore(self, b, scope, depth):
        m = self.memref_val(b, scope)
        if m.type.rank == 0:
            return False
        v = self.vector_val(b, scope, m.type.elem)
        b.op("vector.store", [v, m] + self.indices(b, scope, m.type.rank))
        return True

    def p_vextract(self, b, scope, depth):
        v = self.vector_val(b, scope)
        self._emit(b, scope, "vector.extract", [v], v.type.elem, position=self.rng.randrange(v.type.shape[0]))
        return True

    def p_vinsert(self, b, scope, depth):
        v = self.vector_val(b, scope)
        x = self.int_val(b, scope, v.type.elem)
        self._emit(b, scope, "vector.insert", [x, v], v.type, position=self.rng.randrange(v.type.shape[0]))
        return True

    def p_vreduce(self, b, scope, depth):
        v = self.vector_val(b, scope)
        self._emit(b, scope, "vector.reduce_add", [v], v.type.elem)
        return True

    def p_vslice(self, b, scope, depth):
        v = self.vector_val(b, scope)
        n = v.type.shape[0]
        size = self.rng.randint(1, n)
        off = self.rng.randint(0, n - size)
        self._emit(b, scope, "vector.extract_strided_slice", [v], ir.vector((size,), v.type.elem),
                   offset=off, size=size)
        return True

    # ------------------------------------------------------------ linalg

    def _container(self, b, scope, tensor_form, rank=None, elem=None, shape=None):
        if tensor_form:
            if shape is not None:
                return self.new_tensor(b, scope, elem=elem, shape=shape)
            return self.tensor_val(b, scope, rank, elem)
        if shape is not None:
            return self.new_memref(b, scope, elem=elem, shape=shape)
        return self.memref_val(b, scope, rank=rank, elem=elem)

    def _linalg(self, b, scope, kind, operands, **attrs):
        out = operands[-1]
        if out.type.kind == "tensor":
            self._emit(b, scope, kind, operands, out.type, **attrs)
        else:
            b.op(kind, operands, attrs=attrs)

    def _like(self, shape):
        """Mostly the same extents, sometimes perturbed to create mismatches."""
        out = []
        for d in shape:
            if self.chance(0.15):
                out.append(None if self.cfg.allow_dynamic_dims and self.chance(0.5) else self.dim_size())
            else:
                out.append(d)
        return tuple(out)

    def p_fill(self, b, scope, depth):
        m = self.memref_val(b, scope)
        b.op("linalg.fill", [self.int_val(b, scope, m.type.elem), m])
        return True

    def p_copy(self, b, scope, depth):
        tf = self.chance(0.4) and self.cfg.dialect_weights.get("tensor", 0) > 0
        src = self._container(b, scope, tf)
        if src.type.rank == 0:
            return False
        dst = self._container(b, scope, tf, elem=src.type.elem, shape=self._like(src.type.shape))
        self._linalg(b, scope, "linalg.copy", [src, dst])
        return True

    def p_matmul(self, b, scope, depth):
        tf = self.chance(0.4) and self.cfg.dialect_weights.get("tensor", 0) > 0
        elem = self.int_type()
        m, k, n = self.dim_size(), self.dim_size(), self.dim_size()
        A = self._container(b, scope, tf, elem=elem, shape=self._like((m, k)))
        B = self._container(b, scope, tf, elem=elem, shape=self._like((k, n)))
        C = self._container(b, scope, tf, elem=elem, shape=self._like((m, n)))
        self._linalg(b, scope, "linalg.matmul", [A, B, C])
        return True

    def p_transpose(self, b, scope, depth):
        tf = self.chance(0.4) and self.cfg.dialect_weights.get("tensor", 0) > 0
        rank = self.rng.choice((2, 2, 3))
        src = self._container(b, scope, tf, shape=tuple(self.dim_size() for _ in range(rank)))
        perm = list(range(rank))
        self.rng.shuffle(perm)
        want = tuple(src.type.shape[p] for p in perm)
        dst = self._container(b, scope, tf, elem=src.type.elem, shape=self._like(want))
        self._linalg(b, scope, "linalg.transpose", [src, dst], permutation=perm)
        return True

    def p_broadcast(self, b, scope, depth):
        tf = self.chance(0.4) and self.cfg.dialect_weights.get("tensor", 0) > 0
        src = self._container(b, scope, tf, shape=tuple(self.dim_size() for _ in range(self.rng.choice((1, 2)))))
        out_rank = src.type.rank + self.rng.choice((1, 1, 2))
        if out_rank > ir.MAX_RANK:
            return False
        dims = sorted(self.rng.sample(range(out_rank), out_rank - src.type.rank))
        it = iter(src.type.shape)
        want = tuple(self.dim_size() if i in dims else next(it) for i in range(out_rank))
        dst = self._container(b, scope, tf, elem=src.type.elem, shape=self._like(want))
        self._linalg(b, scope, "linalg.broadcast", [src, dst], dimensions=dims)
        return True

    # ------------------------------------------------------------ loop

    def p_for(self, b, scope, depth):
        if depth >= self.cfg.max_region_depth:
            return False
        lb = self.index_const(b, scope, 0, 1)
        ub = self.index_const(b, scope, 2, 6)
        step = self.index_const(b, scope, 1, 2) if self.chance(0.3) else self.index_const(b, scope, 1, 1)
        inits = []
        for _ in range(self.rng.choice((0, 1, 1, 1, 2))):
            inits.append(self.any_int(b, scope))
        if self.chance(0.1):
            inits.append(self.memref_val(b, scope))
        body = Block([INDEX] + [v.type for v in inits])
        inner_scope = list(scope) + list(body.args)
        ib = Builder(body)
        if inits and ir.is_int(inits[0].type) and self.chance(0.5):
            # accumulate the induction variable
            t = inits[0].type
            c = ib.value("arith.index_cast", [body.args[0]], t)
            inner_scope.append(ib.value("arith.addi", [body.args[1], c], t))
        self.fill(ib, inner_scope, depth + 1, self.rng.randint(1, max(1, self.cfg.max_ops_per_block // 3)))
        yields = []
        for a in body.args[1:]:
            if ir.is_shaped(a.type):
                yields.append(a if self.chance(0.7) else self.memref_like(ib, inner_scope, a.type))
            else:
                new = [v for v in inner_scope[len(scope):] if v.type == a.type]
                base = new[-1] if new and self.chance(0.8) else a
                yields.append(self.sink(ib, inner_scope[len(scope):], base))
        ib.op("loop.yield", yields)
        loop = b.op("loop.for", [lb, ub, step] + inits, [v.type for v in inits], regions=[Region([body])])
        scope.extend(loop.results)
        return True

    def sink(self, b, values, base, limit=10):
        """Fold recent integer values into ``base`` so nested work stays observable."""
        t = base.type
        if not ir.is_int(t) or t.width < 2 or self.chance(0.1):
            return base
        acc = base
        for v in [v for v in values if ir.is_int(v.type) and v.type.width > 1 and v is not base][-limit:]:
            if v.type != t:
                v = b.value("arith.extsi" if v.type.width < t.width else "arith.trunci", [v], t)
            acc = b.value("arith.xori", [acc, v], t)
        return acc

    def memref_like(self, b, scope, t):
        v = self.pick(scope, lambda x: x == t)
        if v is not None:
            return v
        return self.new_memref(b, scope, elem=t.elem, shape=t.shape)

    def p_if(self, b, scope, depth):
        if depth >= self.cfg.max_region_depth:
            return False
        x = self.any_int(b, scope)
        c = self._emit(b, scope, "arith.cmpi", [x, self.int_val(b, scope, x.type)], I1,
                       predicate=self.rng.randrange(10))
        rtypes = [x.type] if self.chance(0.8) else []
        regions = []
        for _ in range(2):
            blk = Block()
            inner = list(scope)
            ib = Builder(blk)
            self.fill(ib, inner, depth + 1, self.rng.randint(1, max(1, self.cfg.max_ops_per_block // 4)))
            ys = []
            for t in rtypes:
                new = [v for v in inner[len(scope):] if v.type == t]
                ys.append(self.sink(ib, inner[len(scope):], new[-1] if new else x))
            ib.op("loop.yield", ys)
            regions.append(Region([blk]))
        op = b.op("loop.if", [c], rtypes, regions=regions)
        scope.extend(op.results)
        return True

    def p_loop_access(self, b, scope, depth):
        m = self.memref_val(b, scope)
        rank = m.type.rank
        if rank == 0:
            return False
        idx = self.indices(b, scope, rank)
        offs = [self.rng.choice((0, 0, 1, 2)) for _ in range(rank)]
        r = self.rng.random()
        if r < 0.35:
            self._emit(b, scope, "loop.load", [m] + idx, m.type.elem, offsets=offs)
        elif r < 0.7:
            b.op("loop.store", [self.int_val(b, scope, m.type.elem), m] + idx, attrs={"offsets": offs})
        elif r < 0.85:
            self._emit(b, scope, "loop.vector_load", [m] + idx, self.vector_type(m.type.elem), offsets=offs)
        else:
            v = self.vector_val(b, scope, m.type.elem)
            b.op("loop.vector_store", [v, m] + idx, attrs={"offsets": offs})
        return True

    # ------------------------------------------------------------ driver

    def fill(self, b, scope, depth, n):
        made = 0
        attempts = 0
        while made < n and attempts < n * 4:
            attempts += 1
            dialect = self.rng.choices(self.dialects, self.weights)[0]
            prods = self.productions[dialect]
            fn = self.rng.choices([p for _, p in prods], [w for w, _ in prods])[0]
            if fn(b, scope, depth):
                made += 1

    def program(self):
        main = Function("main")
        block = main.body.entry
        b = Builder(block)
        n = self.rng.randint(max(1, self.cfg.max_ops_per_block // 3), self.cfg.max_ops_per_block)
        self.fill(b, [], 1, n)
        b.op("exec.return")
        return Program([main])


def generate(cfg):
    """Build one program from ``cfg.seed``; same seed, same text."""
    for attempt in range(MAX_RETRIES):
        seed = cfg.seed if attempt == 0 else (cfg.seed * 1000003 + attempt) & (2**63 - 1)
        p = _Gen(cfg, seed).program()
        report = validate(p)
        if report.ok:
            return p
        last = report
    raise GeneratorDefect(f"could not build a valid program for seed {cfg.seed}:\n{last}")


def generate_corpus(cfg, n, dir):
    """Write ``n`` programs as ``seed_<k>.silt`` plus ``manifest.json``; returns the manifest."""
    out = Path(dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    corpus = hashlib.sha256()
    for k in range(n):
        seed = cfg.seed + k
        sub = GenConfig(**{**cfg.to_dict(), "seed": seed})
        text = print_program(generate(sub))
        name = f"seed_{seed}.silt"
        (out / name).write_text(text, encoding="utf-8")
        digest = hashlib.sha256(text.encode()).hexdigest()
        corpus.update(digest.encode())
        files.append({"file": name, "seed": seed, "sha256": digest})
    manifest = {
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "count": n,
        "files": files,
        "corpus_hash": corpus.hexdigest(),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest
