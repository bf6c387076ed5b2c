import pytest

from silt.interp import TRAP_KINDS, inject_checksum, interpret
from silt.intops import int_min
from silt.textfmt import parse_program, print_program
from silt.ubfix import fix_ub

from helpers import ir, program


def main(body, ret=""):
    head = f"func @main() -> {ret} {{" if ret else "func @main() {"
    return ir(head + "\n" + body.strip("\n") + "\n}\n")


def checksum_of(body):
    p = main(body + "\n  exec.return")
    inject_checksum(p)
    out = interpret(p)
    assert out.finished, out
    return out.checksum


def test_checksum_of_three_scalars():
    assert checksum_of("""
  %0 = arith.constant {value = 1 : i32} : i32
  %1 = arith.constant {value = 2 : i32} : i32
  %2 = arith.constant {value = 3 : i32} : i32""") == 6


def test_checksum_counts_memory():
    # the fill value lives inside the if region, so only the buffer and the i1 flag are visible
    assert checksum_of("""
  %0 = memref.alloc : memref<4xi32>
  %1 = arith.constant {value = 1 : i1} : i1
  loop.if %1 : (i1) -> () {
    %2 = arith.constant {value = 5 : i32} : i32
    linalg.fill %2, %0 : (i32, memref<4xi32>) -> ()
    loop.yield
  } {
    loop.yield
  }""") == 21


def test_checksum_skips_floats():
    assert checksum_of("""
  %0 = arith.constant {value = 2.5 : f32} : f32
  %1 = arith.constant {value = 7 : i32} : i32""") == 7


def test_one_plus_one():
    assert checksum_of("""
  %0 = arith.constant {value = 1 : i32} : i32
  %1 = arith.addi %0, %0 : (i32, i32) -> i32""") == 3


def test_checksum_wraps_at_64_bits():
    big = 2**63 - 1
    assert checksum_of(f"""
  %0 = arith.constant {{value = {big} : i64}} : i64
  %1 = arith.constant {{value = {big} : i64}} : i64""") == -2


def test_checksum_sums_vector_lanes_and_tensors():
    assert checksum_of("""
  %0 = arith.constant {value = 2 : i8} : i8
  %1 = vector.splat %0 : (i8) -> vector<3xi8>
  %2 = tensor.splat %0 : (i8) -> tensor<2x2xi8>""") == 2 + 6 + 8


OVERRUN = """
  %0 = memref.alloc : memref<14xi32>
  %1 = arith.constant {value = 3 : i32} : i32
  linalg.fill %1, %0 : (i32, memref<14xi32>) -> ()
  %2 = vector.splat %1 : (i32) -> vector<6xi32>
  %3 = index.constant {value = 9 : index} : index
  vector.store %2, %0, %3 : (vector<6xi32>, memref<14xi32>, index) -> ()
  exec.return"""


def test_overrunning_store_traps():
    out = interpret(main(OVERRUN))
    assert out.status == "UBTrap" and out.trap_kind == "OutOfBounds"
    assert out.op_path == "main/bb0/op5(vector.store)"


GOLDEN = {
    "DivisionByZero": """
  %0 = arith.constant {value = 4 : i32} : i32
  %1 = arith.constant {value = 0 : i32} : i32
  %2 = arith.remui %0, %1 : (i32, i32) -> i32""",
    "SignedDivisionOverflow": """
  %0 = arith.constant {value = -128 : i8} : i8
  %1 = arith.constant {value = -1 : i8} : i8
  %2 = arith.divsi %0, %1 : (i8, i8) -> i8""",
    "ShiftOverflow": """
  %0 = index.constant {value = 1 : index} : index
  %1 = index.constant {value = 64 : index} : index
  %2 = index.shli %0, %1 : (index, index) -> index""",
    "OutOfBounds": """
  %0 = memref.alloc : memref<3xi16>
  %1 = arith.constant {value = 1 : i16} : i16
  %2 = index.constant {value = 3 : index} : index
  memref.store %1, %0, %2 : (i16, memref<3xi16>, index) -> ()""",
    "UninitializedRead": """
  %0 = memref.alloc : memref<3xi16>
  %1 = index.constant {value = 0 : index} : index
  %2 = memref.load %0, %1 : (memref<3xi16>, index) -> i16""",
    "InsufficientVolume": """
  %0 = exec.alloc : memref<14xi32>
  %1 = exec.constant {value = 3 : i32} : i32
  %2 = exec.vsplat %1 : (i32) -> vector<6xi32>
  %3 = exec.constant {value = 9 : index} : index
  exec.vstore %2, %0, %3 : (vector<6xi32>, memref<14xi32>, index) -> ()""",
    "ShapeMismatch": """
  %0 = index.constant {value = 3 : index} : index
  %1 = memref.alloc %0 : (index) -> memref<?xi32>
  %2 = memref.cast %1 : (memref<?xi32>) -> memref<4xi32>""",
    "Misaligned": """
  %0 = memref.alloc {alignment = 4} : memref<2xi32>
  memref.assume_alignment %0 {alignment = 16} : (memref<2xi32>) -> ()""",
    "UseAfterFree": """
  %0 = memref.alloc : memref<2xi32>
  %1 = arith.constant {value = 1 : i32} : i32
  linalg.fill %1, %0 : (i32, memref<2xi32>) -> ()
  %2 = index.constant {value = 4 : index} : index
  %3 = memref.realloc %0, %2 : (memref<2xi32>, index) -> memref<?xi32>
  %4 = index.constant {value = 0 : index} : index
  %5 = memref.load %0, %4 : (memref<2xi32>, index) -> i32""",
    "InvalidAllocation": """
  %0 = index.constant {value = 0 : index} : index
  %1 = memref.alloc %0 : (index) -> memref<?xi32>""",
}


def test_golden_suite_covers_every_trap():
    assert set(GOLDEN) == set(TRAP_KINDS)


@pytest.mark.parametrize("kind", sorted(GOLDEN))
def test_golden_trap(kind):
    out = interpret(main(GOLDEN[kind] + "\n  exec.return"))
    assert out.status == "UBTrap"
    assert out.trap_kind == kind


@pytest.mark.parametrize("kind", sorted(GOLDEN))
def test_native_mode_never_traps(kind):
    out = interpret(main(GOLDEN[kind] + "\n  exec.return"), mode="native")
    assert out.status == "Finished"


def _table(kind):
    p = main(f"""
  %0 = arith.constant {{value = 0 : i8}} : i8
  %1 = arith.constant {{value = 0 : i8}} : i8
  %2 = {kind} %0, %1 : (i8, i8) -> i8
  exec.return %2 : (i8) -> ()""", ret="i8")
    ops = p.main.body.entry.ops
    traps = set()
    for x in range(-128, 128):
        ops[0].attrs["value"] = x
        for d in range(-128, 128):
            ops[1].attrs["value"] = d
            out = interpret(p)
            if out.status == "UBTrap":
                traps.add((x, d, out.trap_kind))
    return traps


def test_i8_division_table():
    table = _table("arith.divsi")
    expect = {(x, 0, "DivisionByZero") for x in range(-128, 128)}
    expect.add((int_min(8), -1, "SignedDivisionOverflow"))
    assert table == expect


def test_loop_is_deterministic():
    q, _ = fix_ub(program(2))
    inject_checksum(q)
    a, b = interpret(q), interpret(q)
    assert a == b and a.finished


def test_fuel_exhaustion():
    p = main("""
  %0 = index.constant {value = 0 : index} : index
  %1 = index.constant {value = 30 : index} : index
  %2 = index.constant {value = 1 : index} : index
  loop.for %0, %1, %2 : (index, index, index) -> () {
  ^bb0(%3: index):
    loop.for %0, %1, %2 : (index, index, index) -> () {
    ^bb0(%4: index):
      %5 = index.add %3, %4 : (index, index) -> index
      loop.yield
    }
    loop.yield
  }
  exec.return""")
    assert interpret(p, fuel=100).status == "FuelExhausted"
    assert interpret(p).status == "Finished"


def test_outcome_round_trips_to_dict():
    out = interpret(main(GOLDEN["ShiftOverflow"] + "\n  exec.return"))
    d = out.to_dict()
    assert d["status"] == "UBTrap" and d["trap_kind"] == "ShiftOverflow" and "checksum" not in d


def test_injection_is_printable():
    p = main("  %0 = arith.constant {value = 9 : i16} : i16\n  exec.return")
    inject_checksum(p)
    text = print_program(p)
    assert "-> i64" in text
    assert interpret(parse_program(text)).checksum == 9
