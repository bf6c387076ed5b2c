import random
import re

import pytest

from silt.builder import Builder
from silt.generator import GenConfig, generate
from silt.interp import interpret
from silt.ir import I64, kinds, walk
from silt.lowering import lower_to_exec
from silt.registry import registry, ub_prone_kinds
from silt.textfmt import print_program
from silt.ubfix import (DEFAULT_ALIGNMENT, _Fixer, RULE_FOR_KIND, collect_ub_prone_ops, fix_array_load_store,
                        fix_index_oob, fix_memory_refs, fix_scalar, fix_shape_inconsistency, fix_ub,
                        ub_irrelevant_fix)
from silt.verify import validate

from helpers import ir, program


def find(p, kind):
    return next(op for op in walk(p) if op.kind == kind)


def run(p):
    return interpret(p)


def test_every_ub_class_has_a_rule():
    for kind, d in registry().items():
        assert (d.ub_class != "None") == (kind in RULE_FOR_KIND), kind


OVERRUN = """func @main() -> i32 {
  %0 = memref.alloc : memref<14xi32>
  %1 = arith.constant {value = 3 : i32} : i32
  linalg.fill %1, %0 : (i32, memref<14xi32>) -> ()
  %2 = vector.load %0, %3 : (memref<14xi32>, index) -> vector<6xi32>
  %3 = arith.constant {value = 1 : i32} : i32
  %4 = vector.extract %2 {position = 0} : (vector<6xi32>) -> i32
  %5 = arith.divsi %4, %3 : (i32, i32) -> i32
  %6 = arith.addi %5, %4 : (i32, i32) -> i32
  %7 = arith.muli %6, %6 : (i32, i32) -> i32
  exec.return %7 : (i32) -> ()
}
"""


def test_collect_overrun_example():
    p = ir(OVERRUN.replace("%2 = vector.load %0, %3", "%9 = index.constant {value = 9 : index} : index\n"
                        "  %2 = vector.load %0, %9"))
    assert [op.kind for op in collect_ub_prone_ops(p)] == ["memref.alloc", "vector.load", "arith.divsi"]


def test_collect_nothing():
    p = ir("func @main() {\n  %0 = arith.constant {value = 1 : i32} : i32\n"
           "  %1 = arith.addi %0, %0 : (i32, i32) -> i32\n  exec.return\n}\n")
    assert collect_ub_prone_ops(p) == []
    _, trace = fix_ub(p)
    assert not trace


def _depth_of(p):
    depth = {}

    def rec(block, d):
        for op in block.ops:
            depth[op] = d
            for r in op.regions:
                for b in r.blocks:
                    rec(b, d + 1)
    rec(p.main.body.entry, 0)
    return depth


def test_collect_matches_text_scan():
    ub = ub_prone_kinds()
    deepest = 0
    for seed in range(60):
        p = generate(GenConfig(seed=seed, max_region_depth=4))
        scanned = [m.group(1) for m in re.finditer(r"^\s*(?:%\d+(?:, %\d+)* = )?([a-z]+\.[a-z_]+)",
                                                   print_program(p), re.M) if m.group(1) in ub]
        found = collect_ub_prone_ops(p)
        assert [op.kind for op in found] == scanned
        depth = _depth_of(p)
        deepest = max([deepest] + [depth[op] for op in found])
    assert deepest >= 3


DIV = """func @main() -> i32 {
  %0 = arith.constant {value = 10 : i32} : i32
  %1 = arith.constant {value = 0 : i32} : i32
  %2 = arith.divui %0, %1 : (i32, i32) -> i32
  exec.return %2 : (i32) -> ()
}
"""


def test_constant_zero_divisor_replaced():
    p = ir(DIV)
    assert run(p).trap_kind == "DivisionByZero"
    q, trace = fix_ub(p)
    d = find(q, "arith.divui").operands[1]
    assert d.op.kind == "arith.constant" and d.op.attrs["value"] != 0
    assert run(q).finished
    assert [r.rule for r in trace.records] == ["scalar-div"]


def test_safe_constant_divisor_untouched():
    p = ir(DIV.replace("value = 0 : i32", "value = 7 : i32").replace("divui", "divsi"))
    q, trace = fix_ub(p)
    assert run(q).checksum == 1
    assert find(q, "arith.divsi").operands[1].op.attrs["value"] == 7
    assert trace.records[0].inserted == 0


def test_runtime_shift_amount_becomes_constant():
    p = ir("""func @main() -> index {
  %0 = index.constant {value = 5 : index} : index
  %1 = index.constant {value = 70 : index} : index
  %2 = index.add %1, %0 : (index, index) -> index
  %3 = index.shrui %0, %2 : (index, index) -> index
  exec.return %3 : (index) -> ()
}
""")
    assert run(p).trap_kind == "ShiftOverflow"
    q = fix_scalar(p, find(p, "index.shrui"), seed=3)
    amount = find(q, "index.shrui").operands[1].op
    assert amount.kind == "index.constant" and 0 <= amount.attrs["value"] < 64
    assert run(q).finished


def test_oversized_constant_shift():
    p = ir(DIV.replace("value = 0 : i32", "value = 40 : i32").replace("divui", "shli"))
    q, _ = fix_ub(p)
    assert 0 <= find(q, "arith.shli").operands[1].op.attrs["value"] < 32


def _divisor_program(x, d):
    return ir(f"""func @main() -> i8 {{
  %0 = arith.constant {{value = {x} : i8}} : i8
  %1 = arith.constant {{value = {d} : i8}} : i8
  %2 = arith.constant {{value = 0 : i8}} : i8
  %3 = arith.addi %1, %2 : (i8, i8) -> i8
  %4 = arith.divsi %0, %3 : (i8, i8) -> i8
  exec.return %4 : (i8) -> ()
}}
""")


def test_runtime_divisor_exhaustive_i8():
    for x in (-128, -1, 0, 5, 127):
        for d in range(-128, 128):
            q, _ = fix_ub(_divisor_program(x, d))
            div = find(q, "arith.divsi")
            ret = q.main.body.entry.ops[-1]
            b = Builder.before(q.main.body.entry, ret)
            ret.operands = [b.value("arith.extsi", [div.operands[1]], I64)]
            q.main.result_types = [I64]
            out = run(q)
            assert out.finished
            dd = out.checksum
            assert dd != 0 and not (x == -128 and dd == -1)
            if d not in (0, -1):
                assert dd == d  # a safe divisor is left alone
            assert run(fix_ub(_divisor_program(x, d))[0]).finished


def test_store_index_wrapped_with_remu():
    p = ir("""func @main() {
  %0 = memref.alloc : memref<14xi32>
  %1 = arith.constant {value = 1 : i32} : i32
  %2 = index.constant {value = 3 : index} : index
  %3 = index.constant {value = 20 : index} : index
  %4 = index.add %2, %3 : (index, index) -> index
  memref.store %1, %0, %4 : (i32, memref<14xi32>, index) -> ()
  memref.store %1, %0, %2 : (i32, memref<14xi32>, index) -> ()
  exec.return
}
""")
    stores = [op for op in walk(p) if op.kind == "memref.store"]
    q = p
    for op in stores:
        q = fix_index_oob(q, op)
    for op in stores:
        idx = op.operands[2].op
        assert idx.kind == "index.remu"
        assert idx.operands[1].op.attrs["value"] == 14
    assert run(q).finished


def test_dim_index_confined_to_rank():
    p = ir("""func @main() -> index {
  %0 = tensor.empty : tensor<3x4xi32>
  %1 = index.constant {value = 5 : index} : index
  %2 = tensor.dim %0, %1 : (tensor<3x4xi32>, index) -> index
  exec.return %2 : (index) -> ()
}
""")
    q = fix_index_oob(p, find(p, "tensor.dim"))
    assert find(q, "tensor.dim").operands[1].op.kind == "index.remu"
    assert run(q).checksum == 4  # remu(5, 2) = 1 -> extent of dim 1


def _vector_program(store_at, width):
    return ir(f"""func @main() -> i32 {{
  %0 = memref.alloc : memref<14xi32>
  %1 = arith.constant {{value = 3 : i32}} : i32
  linalg.fill %1, %0 : (i32, memref<14xi32>) -> ()
  %2 = arith.constant {{value = 7 : i32}} : i32
  %3 = vector.splat %2 : (i32) -> vector<{width}xi32>
  %4 = index.constant {{value = {store_at} : index}} : index
  vector.store %3, %0, %4 : (vector<{width}xi32>, memref<14xi32>, index) -> ()
  %5 = memref.load %0, %4 : (memref<14xi32>, index) -> i32
  exec.return %5 : (i32) -> ()
}}
""")


def test_overrun_guard_takes_fresh_container():
    p = _vector_program(9, 6)
    assert run(p).trap_kind == "OutOfBounds"
    q = fix_array_load_store(p, find(p, "vector.store"))
    out = run(q)
    assert out.finished and out.checksum == 3  # the store went to the fresh buffer


def test_fitting_vector_store_keeps_original():
    p = _vector_program(0, 2)
    before = run(p)
    q = fix_array_load_store(p, find(p, "vector.store"))
    assert run(q).checksum == before.checksum == 7


def _dynamic_load(n, i, w):
    return ir(f"""func @main() -> i32 {{
  %0 = index.constant {{value = {n} : index}} : index
  %1 = memref.alloc %0 : (index) -> memref<?xi32>
  %2 = arith.constant {{value = 5 : i32}} : i32
  linalg.fill %2, %1 : (i32, memref<?xi32>) -> ()
  %3 = index.constant {{value = {i} : index}} : index
  %4 = arith.constant {{value = 11 : i32}} : i32
  memref.store %4, %1, %3 : (i32, memref<?xi32>, index) -> ()
  %5 = vector.load %1, %3 : (memref<?xi32>, index) -> vector<{w}xi32>
  %6 = vector.extract %5 {{position = 0}} : (vector<{w}xi32>) -> i32
  %7 = vector.extract %5 {{position = {w - 1}}} : (vector<{w}xi32>) -> i32
  %8 = arith.addi %6, %7 : (i32, i32) -> i32
  exec.return %8 : (i32) -> ()
}}
""")


def test_dynamic_vector_load_both_branches():
    taken = kept = 0
    for seed in range(100):
        rng = random.Random(seed)
        n = rng.randint(1, 12)
        i = rng.randrange(n)
        w = rng.randint(1, 8)
        p = _dynamic_load(n, i, w)
        before = run(p)
        q = fix_array_load_store(p, find(p, "vector.load"))
        after = run(q)
        assert after.finished
        if i + w <= n:
            kept += 1
            assert after.checksum == before.checksum
        else:
            taken += 1
            assert before.trap_kind == "OutOfBounds"
    assert taken and kept


def test_matmul_inner_dimension_repaired():
    p = ir("""func @main() {
  %0 = tensor.splat %9 : (i32) -> tensor<4x3xi32>
  %1 = tensor.splat %9 : (i32) -> tensor<5x2xi32>
  %2 = tensor.splat %9 : (i32) -> tensor<4x2xi32>
  %3 = linalg.matmul %0, %1, %2 : (tensor<4x3xi32>, tensor<5x2xi32>, tensor<4x2xi32>) -> tensor<4x2xi32>
  exec.return
}
""".replace("%9 :", "%8 :").replace("{\n  %0", "{\n  %8 = arith.constant {value = 2 : i32} : i32\n  %0"))
    assert run(p).trap_kind == "ShapeMismatch"
    q = fix_shape_inconsistency(p, find(p, "linalg.matmul"))
    mm = find(q, "linalg.matmul")
    assert [tuple(v.type.shape) for v in mm.operands] == [(4, 3), (3, 2), (4, 2)]
    assert mm.result.type.shape == (4, 2)
    assert run(q).finished


def test_consistent_transpose_unchanged():
    text = """func @main() {
  %0 = arith.constant {value = 2 : i32} : i32
  %1 = tensor.splat %0 : (i32) -> tensor<2x7xi32>
  %2 = tensor.splat %0 : (i32) -> tensor<7x2xi32>
  %3 = linalg.transpose %1, %2 {permutation = [1, 0]} : (tensor<2x7xi32>, tensor<7x2xi32>) -> tensor<7x2xi32>
  exec.return
}
"""
    p = ir(text)
    q = fix_shape_inconsistency(p, find(p, "linalg.transpose"))
    assert print_program(q) == text.replace("{permutation", "{guarded = 1, permutation")


def test_dynamic_cast_source_replaced():
    p = ir("""func @main() -> i32 {
  %0 = index.constant {value = 9 : index} : index
  %1 = memref.alloc %0 : (index) -> memref<?xi32>
  %2 = arith.constant {value = 4 : i32} : i32
  linalg.fill %2, %1 : (i32, memref<?xi32>) -> ()
  %3 = memref.cast %1 : (memref<?xi32>) -> memref<10xi32>
  %4 = memref.load %3, %0 : (memref<10xi32>, index) -> i32
  exec.return %4 : (i32) -> ()
}
""")
    assert run(p).trap_kind == "ShapeMismatch"
    q = fix_shape_inconsistency(p, find(p, "memref.cast"))
    cast = find(q, "memref.cast")
    assert cast.operands[0].op.kind == "arith.select"
    assert run(q).finished


def test_alignment_taken_from_allocation():
    p = ir("""func @main() {
  %0 = memref.alloc {alignment = 8} : memref<4xi32>
  memref.assume_alignment %0 {alignment = 4} : (memref<4xi32>) -> ()
  %1 = memref.alloc : memref<4xi32>
  memref.assume_alignment %1 {alignment = 64} : (memref<4xi32>) -> ()
  exec.return
}
""")
    for op in [o for o in walk(p) if o.kind == "memref.assume_alignment"]:
        fix_memory_refs(p, op)
    got = [o.attrs["alignment"] for o in walk(p) if o.kind == "memref.assume_alignment"]
    assert got == [8, DEFAULT_ALIGNMENT]


def test_unread_alloc_still_filled():
    p = ir("func @main() {\n  %0 = memref.alloc : memref<4xi32>\n  exec.return\n}\n")
    q = fix_memory_refs(p, find(p, "memref.alloc"))
    assert [op.kind for op in walk(q)][-2] == "linalg.fill"


def test_use_after_realloc_redirected():
    p = ir("""func @main() -> i32 {
  %0 = memref.alloc : memref<4xi32>
  %1 = arith.constant {value = 6 : i32} : i32
  linalg.fill %1, %0 : (i32, memref<4xi32>) -> ()
  %2 = index.constant {value = 8 : index} : index
  %3 = memref.realloc %0, %2 : (memref<4xi32>, index) -> memref<?xi32>
  %4 = index.constant {value = 1 : index} : index
  %5 = memref.load %0, %4 : (memref<4xi32>, index) -> i32
  exec.return %5 : (i32) -> ()
}
""")
    assert run(p).trap_kind == "UseAfterFree"
    load = find(p, "memref.load")
    q = fix_memory_refs(p, find(p, "memref.realloc"))
    src = load.operands[0].op
    assert src.kind == "memref.alloc" and src is not find(q, "memref.realloc").operands[0].op
    assert run(q).finished


def test_irrelevant_fix_zero_dim():
    p = ir("""func @main() {
  %0 = arith.constant {value = 2 : i32} : i32
  %1 = tensor.splat %0 : (i32) -> tensor<0x4xi32>
  %2 = tensor.cast %1 : (tensor<0x4xi32>) -> tensor<?x4xi32>
  exec.return
}
""")
    q = ub_irrelevant_fix(p)
    text = print_program(q)
    assert "0x4" not in text and "tensor<1x4xi32>" in text
    assert validate(q).ok


def test_irrelevant_fix_is_identity_without_hazards():
    text = "func @main() {\n  %0 = arith.constant {value = 2 : i32} : i32\n  exec.return\n}\n"
    assert print_program(ub_irrelevant_fix(ir(text))) == text


def test_tensor_empty_becomes_defined():
    p = ir("""func @main() -> i32 {
  %0 = tensor.empty : tensor<2x2xi32>
  %1 = index.constant {value = 1 : index} : index
  %2 = tensor.extract %0, %1, %1 : (tensor<2x2xi32>, index, index) -> i32
  exec.return %2 : (i32) -> ()
}
""")
    assert run(p).trap_kind == "UninitializedRead"
    q = ub_irrelevant_fix(p)
    assert "tensor.empty" not in kinds(q)
    assert run(q).finished


def test_fix_validates_and_is_idempotent():
    for seed in range(80):
        q, trace = fix_ub(program(seed))
        assert validate(q).ok
        assert trace
        _, again = fix_ub(q)
        assert not again, seed


def test_result_types_preserved():
    for seed in range(40):
        p = program(seed)
        f = _Fixer(p, seed)
        f.irrelevant()
        for op in collect_ub_prone_ops(p):
            if op not in f.block_of:
                continue
            types = [r.type for r in op.results]
            f.apply(op)
            assert [r.type for r in op.results] == types, op.kind
        assert validate(p).ok


def test_fixed_programs_do_not_trap():
    for seed in range(100):
        q, _ = fix_ub(program(seed), seed=seed)
        assert run(q).status == "Finished", seed


def test_lowering_keeps_ub_prone_ops_guarded():
    ub = ub_prone_kinds()

    def check(cur, pid):
        loose = [op.kind for op in walk(cur) if op.kind in ub and not op.attrs.get("guarded")]
        assert not loose, (pid, loose)
    for seed in range(25):
        q, _ = fix_ub(program(seed))
        lower_to_exec(q, on_step=check)


@pytest.mark.parametrize("seed", [0, 1])
def test_fix_is_seeded(seed):
    a, _ = fix_ub(program(5), seed=seed)
    b, _ = fix_ub(program(5), seed=seed)
    assert print_program(a) == print_program(b)
