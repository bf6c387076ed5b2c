import random
from collections import Counter

import pytest

from silt.interp import inject_checksum, interpret
from silt.ir import kinds
from silt.lowering import lower_to_exec, pending_kinds
from silt.optimizer import (FAULTS, OPT_PASSES, RELEVANT, SILENT_FAULTS, PassPipeline, apply_opt,
                            build_pipelines, compile_pipeline, eligible, recommend, replay)
from silt.textfmt import print_program
from silt.ubfix import fix_ub
from silt.verify import validate

from helpers import ir, program


def fixed(seed):
    q, _ = fix_ub(program(seed), seed=seed)
    inject_checksum(q)
    return q


def value(p):
    out = interpret(p)
    assert out.finished, out
    return out.checksum


LOADED = """func @main() -> i32 {
  %0 = memref.alloc : memref<4xi32>
  %1 = arith.constant {value = 6 : i32} : i32
  linalg.fill %1, %0 : (i32, memref<4xi32>) -> ()
  %2 = index.constant {value = 0 : index} : index
  %3 = memref.load %0, %2 : (memref<4xi32>, index) -> i32
  %4 = arith.constant {value = 0 : i32} : i32
BODY
}
"""


def loaded(body):
    return ir(LOADED.replace("BODY", body))


TRIGGERS = {
    "fold-mul-zero": ("fold-constants", loaded(
        "  %5 = arith.muli %3, %4 : (i32, i32) -> i32\n  exec.return %5 : (i32) -> ()")),
    "canon-neg": ("canonicalize", loaded(
        "  %5 = arith.subi %4, %3 : (i32, i32) -> i32\n  exec.return %5 : (i32) -> ()")),
    "cse-load": ("cse", loaded(
        "  %5 = arith.constant {value = 9 : i32} : i32\n"
        "  memref.store %5, %0, %2 : (i32, memref<4xi32>, index) -> ()\n"
        "  %6 = memref.load %0, %2 : (memref<4xi32>, index) -> i32\n"
        "  %7 = arith.subi %6, %3 : (i32, i32) -> i32\n  exec.return %7 : (i32) -> ()")),
    "unroll-iv": ("loop-unroll", ir("""func @main() -> index {
  %0 = index.constant {value = 0 : index} : index
  %1 = index.constant {value = 4 : index} : index
  %2 = index.constant {value = 1 : index} : index
  %3 = loop.for %0, %1, %2, %0 : (index, index, index, index) -> index {
  ^bb0(%4: index, %5: index):
    %6 = index.add %5, %4 : (index, index) -> index
    loop.yield %6 : (index) -> ()
  }
  exec.return %3 : (index) -> ()
}
""")),
}


@pytest.mark.parametrize("fault", sorted(TRIGGERS))
def test_fault_flips_the_answer(fault):
    pass_id, p = TRIGGERS[fault]
    assert FAULTS[fault][0] == pass_id
    good, _ = apply_opt(p, pass_id)
    assert value(good) == value(p)
    bad, fired = apply_opt(p, pass_id, faults=[fault])
    assert fired
    assert validate(bad).ok
    assert value(bad) != value(p)


def test_vector_fault_only_in_lowering():
    p = ir("""func @main() -> i32 {
  %0 = arith.constant {value = 3 : i32} : i32
  %1 = vector.splat %0 : (i32) -> vector<8xi32>
  %2 = vector.extract %1 {position = 7} : (vector<8xi32>) -> i32
  exec.return %2 : (i32) -> ()
}
""")
    good, _ = lower_to_exec(p)
    bad, _ = lower_to_exec(p, faults=["vec-splat-lane"])
    assert value(good) == value(p) == 3
    assert value(bad) == 0


def test_fault_catalog():
    assert set(SILENT_FAULTS) < set(FAULTS)
    assert {FAULTS[f][0] for f in SILENT_FAULTS} == {
        "fold-constants", "canonicalize", "convert-vector-to-exec", "loop-unroll", "cse"}


def test_signed_division_makes_unsigned_pass_eligible():
    p = ir("""func @main() {
  %0 = arith.constant {value = 8 : i32} : i32
  %1 = arith.constant {value = 3 : i32} : i32
  %2 = arith.divsi %0, %1 : (i32, i32) -> i32
  exec.return
}
""")
    assert "unsigned-when-equivalent" in eligible(p)
    rng = random.Random(0)
    picks = {recommend(p, 1, rng)[0] for _ in range(200)}
    assert picks == set(eligible(p))
    q, fired = apply_opt(p, "unsigned-when-equivalent")
    assert "arith.divui" in kinds(q) and fired == {"arith.divsi"}


def test_zero_recommendations():
    assert recommend(fixed(0), 0, random.Random(1)) == []
    with pytest.raises(ValueError):
        recommend(fixed(0), -1, random.Random(1))


def test_recommendation_covers_pool():
    for seed in range(5):
        p = fixed(seed)
        pool = eligible(p)
        rng = random.Random(seed)
        counts = Counter(recommend(p, 1000, rng))
        assert set(counts) == set(pool)
        for pid in pool:
            assert RELEVANT[pid] & kinds(p)


def test_fallback_to_full_pool():
    p = ir("func @main() {\n  exec.return\n}\n")
    assert eligible(p) == []
    assert set(recommend(p, 300, random.Random(0))) == set(OPT_PASSES)


def test_random_selection_ignores_relevance():
    p = ir("func @main() {\n  %0 = arith.constant {value = 1 : i32} : i32\n  exec.return\n}\n")
    assert set(recommend(p, 500, random.Random(0), select="random")) == set(OPT_PASSES)


def test_default_pipelines():
    p = fixed(3)
    comps = build_pipelines(p, diffnum=2, optnum_each=1, seed=7)
    assert len(comps) == 2
    for c in comps:
        assert c.error is None
        steps = c.pipeline.steps
        run = 0
        for stage, _ in steps:
            run = run + 1 if stage == "opt" else 0
            assert run <= 1
        assert len(c.pipeline.opt_passes) == len(c.pipeline.lowering_passes) + 1  # step-0 slot
    assert comps[0].pipeline.steps != comps[1].pipeline.steps


def test_no_optimizations_means_identical_pipelines():
    p = fixed(3)
    a, b = build_pipelines(p, diffnum=2, optnum_each=0, seed=7)
    assert a.pipeline.steps == b.pipeline.steps
    assert not a.pipeline.opt_passes
    assert print_program(a.program) == print_program(b.program)


def test_diffnum_four_all_lower():
    for seed in range(10):
        p = fixed(seed)
        comps = build_pipelines(p, diffnum=4, optnum_each=2, seed=seed)
        assert len(comps) == 4
        sums = set()
        for c in comps:
            assert c.error is None
            assert not pending_kinds(c.program)
            sums.add(value(c.program))
        assert len(sums) == 1


def test_diffnum_below_two_rejected():
    with pytest.raises(ValueError):
        build_pipelines(fixed(0), diffnum=1)


def test_pipeline_dict_round_trip_and_replay():
    p = fixed(8)
    c = compile_pipeline(p, 1234, 2)
    d = c.pipeline.to_dict()
    again = PassPipeline.from_dict(d)
    assert again == c.pipeline
    q, fired = replay(p, again.steps)
    assert print_program(q) == print_program(c.program)
    assert fired == c.fired


@pytest.mark.parametrize("pass_id", OPT_PASSES)
def test_each_pass_preserves_checksums(pass_id):
    # each pass is applied before lowering and again halfway down
    for seed in range(60):
        p = fixed(seed)
        want = value(p)
        q, _ = apply_opt(p, pass_id)
        assert validate(q).ok
        assert value(q) == want, seed
        mid = {}

        def halfway(cur, pid, mid=mid):
            if len(mid) == 3:
                cur, _ = apply_opt(cur, pass_id, inplace=True)
            mid[pid] = True
            return cur
        low, _ = lower_to_exec(p, rng=random.Random(seed), on_step=halfway)
        assert value(low) == want, seed
