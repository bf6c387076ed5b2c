from functools import lru_cache

from silt.generator import GenConfig, generate
from silt.textfmt import parse_program, print_program


@lru_cache(maxsize=None)
def program_text(seed):
    return print_program(generate(GenConfig(seed=seed)))


def program(seed):
    """A fresh generated program; parsing the cached text keeps callers isolated."""
    return parse_program(program_text(seed))


def ir(text):
    return parse_program(text)


def combined_probe(kind_list, rng):
    """One program holding a probe for each kind, so its pending kinds cover ``kind_list``."""
    from silt.ir import Function, Program
    from silt.lowering import probe_programs

    main = Function("main")
    ops = main.body.entry.ops
    for k in kind_list:
        probe = rng.choice([q for q in probe_programs(k) if len(q.main.body.blocks) == 1])
        ops.extend(probe.main.body.entry.ops[:-1])
    ops.append(probe.main.body.entry.ops[-1])
    return Program([main])


def small_plan_programs(n, seed=0, max_passes=6):
    """``n`` programs whose merged lowering order spans at most ``max_passes`` passes."""
    import random

    from silt.lowering import merged_order, paths_db, pending_kinds
    rng = random.Random(seed)
    from silt.lowering import probe_programs

    kinds = sorted(k for k in paths_db() if any(len(q.main.body.blocks) == 1 for q in probe_programs(k)))
    out = []
    while len(out) < n:
        pick = rng.sample(kinds, rng.randint(1, 4))
        p = combined_probe(pick, rng)
        if len(merged_order(pending_kinds(p))[0]) <= max_passes:
            out.append(p)
    return out
