from silt import ir as silt_ir
from silt.ir import INDEX, I32, Block, Function, Operation, Program, Region, empty_program, walk
from silt.registry import DIALECTS, EXECUTABLE_DIALECT, lookup, registry
from silt.verify import validate

from helpers import ir, program


def test_empty_main_validates():
    assert validate(empty_program()).ok


def test_use_before_def_is_reported():
    later = Operation("arith.constant", [], [I32], {"value": 1})
    add = Operation("arith.addi", [later.result, later.result], [I32])
    main = Function("main", body=Region([Block(ops=[add, later, Operation("exec.return")])]))
    report = validate(Program([main]))
    assert not report.ok
    assert "use before def" in str(report)


def test_dimension_cap():
    too_big = silt_ir.memref((64, 64), I32)
    alloc = Operation("memref.alloc", [], [too_big])
    main = Function("main", body=Region([Block(ops=[alloc, Operation("exec.return")])]))
    report = validate(Program([main]))
    assert "exceeds cap 32" in str(report)


def test_registry_lookups():
    assert lookup("arith.divsi").ub_class == "ScalarDiv"
    assert lookup("index.shrui").ub_class == "ScalarShift"
    assert lookup("exec.add").ub_class == "None"
    assert EXECUTABLE_DIALECT == "exec"
    assert all(d.dialect in DIALECTS for d in registry().values())
    assert not [k for k, d in registry().items() if d.dialect == "exec" and d.ub_class != "None"]


LOOP = """
func @main() {
  %0 = index.constant {value = 0 : index} : index
  %1 = index.constant {value = 2 : index} : index
  loop.for %0, %1, %1 : (index, index, index) -> () {
  ^bb0(%2: index):
    %3 = index.add %2, %2 : (index, index) -> index
    %4 = index.mul %3, %2 : (index, index) -> index
    loop.yield
  }
  exec.return
}
"""


def test_walk_is_preorder():
    got = [op.kind for op in walk(ir(LOOP))]
    assert got == ["index.constant", "index.constant", "loop.for", "index.add", "index.mul",
                   "loop.yield", "exec.return"]


def _reference_order(block):
    out = []
    for op in block.ops:
        out.append(op)
        for r in op.regions:
            for b in r.blocks:
                out.extend(_reference_order(b))
    return out


def test_walk_matches_recursive_reference():
    for seed in range(40):
        p = program(seed)
        ref = [op for f in p.functions for b in f.body.blocks for op in _reference_order(b)]
        assert list(walk(p)) == ref
        assert list(walk(p)) == list(walk(p))


def test_visitor_form():
    seen = []
    walk(ir(LOOP), seen.append)
    assert len(seen) == 7


def test_generated_programs_validate():
    for seed in range(100):
        assert validate(program(seed)).ok, seed


def test_index_is_64_bit():
    assert silt_ir.bitwidth(INDEX) == 64
