import json

import pytest

from silt.generator import DEFAULT_WEIGHTS, GenConfig, generate, generate_corpus
from silt.interp import interpret
from silt.ir import kinds
from silt.registry import ub_prone_kinds
from silt.textfmt import parse_program, print_program
from silt.verify import validate

# Measured on the built generator and frozen as regression values.
UB_PRONE_FLOOR = 0.60
UB_PRONE_MEASURED = 1000  # of 1000 default seeds
CORPUS_HASH_SEED0_N10 = "5fc89220a090e645fa7e5115a9bd97a9a95ded6630c631ec12d8990c49b419ca"


def only(dialect):
    return {d: (1.0 if d == dialect else 0.0) for d in DEFAULT_WEIGHTS}


def _depth(block, d=0):
    return max([d] + [_depth(b, d + 1) for op in block.ops for r in op.regions for b in r.blocks])


def test_same_seed_same_text():
    assert print_program(generate(GenConfig(seed=42))) == print_program(generate(GenConfig(seed=42)))


def test_different_seeds_differ():
    assert print_program(generate(GenConfig(seed=1))) != print_program(generate(GenConfig(seed=2)))


def test_arith_only_weights():
    for seed in range(20):
        ks = kinds(generate(GenConfig(seed=seed, dialect_weights=only("arith"))))
        assert {k.split(".")[0] for k in ks} <= {"arith", "exec"}


def test_bad_configs_rejected():
    with pytest.raises(ValueError):
        GenConfig(dialect_weights={d: 0.0 for d in DEFAULT_WEIGHTS})
    with pytest.raises(ValueError):
        GenConfig(dialect_weights={**DEFAULT_WEIGHTS, "arith": -1.0})
    with pytest.raises(ValueError):
        GenConfig(max_region_depth=0)


@pytest.mark.parametrize("max_depth", [1, 2, 3])
def test_depth_bound(max_depth):
    for seed in range(30):
        p = generate(GenConfig(seed=seed, max_region_depth=max_depth))
        assert validate(p).ok
        # the function body counts as the first level
        assert _depth(p.main.body.entry) <= max_depth - 1


def test_ub_prone_fraction():
    ub = ub_prone_kinds()
    hits = sum(bool(kinds(generate(GenConfig(seed=s))) & ub) for s in range(1000))
    assert hits / 1000 >= UB_PRONE_FLOOR
    assert hits == UB_PRONE_MEASURED


def test_unfixed_programs_can_trap():
    statuses = {interpret(generate(GenConfig(seed=s))).status for s in range(50)}
    assert "UBTrap" in statuses


def test_corpus(tmp_path):
    m = generate_corpus(GenConfig(seed=0), 10, tmp_path / "a")
    files = sorted((tmp_path / "a").glob("seed_*.silt"))
    assert len(files) == 10
    for f in files:
        parse_program(f.read_text())
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["corpus_hash"] == m["corpus_hash"] == CORPUS_HASH_SEED0_N10
    again = generate_corpus(GenConfig(seed=0), 10, tmp_path / "b")
    assert again["corpus_hash"] == m["corpus_hash"]


def test_empty_corpus(tmp_path):
    m = generate_corpus(GenConfig(seed=0), 0, tmp_path)
    assert m["count"] == 0 and m["files"] == []
    assert list(tmp_path.iterdir()) == [tmp_path / "manifest.json"]
