"""Two's-complement integer arithmetic with explicit undefined-behavior checks.

Every binary operation takes operands already normalized to the signed range
of ``width`` bits and returns a normalized result, or raises :class:`IntUB`
when the operation has no defined outcome.
"""


class IntUB(Exception):
    """Raised when an integer operation hits undefined behavior."""

    def __init__(self, kind, message=""):
        super().__init__(message or kind)
        self.kind = kind


DIV_BY_ZERO = "DivisionByZero"
DIV_OVERFLOW = "SignedDivisionOverflow"
SHIFT_OVERFLOW = "ShiftOverflow"

# comparison predicate codes (attribute values)
PREDICATES = {
    0: "eq", 1: "ne", 2: "slt", 3: "sle", 4: "sgt", 5: "sge",
    6: "ult", 7: "ule", 8: "ugt", 9: "uge",
}
PREDICATE_CODES = {name: code for code, name in PREDICATES.items()}


def wrap(value, width):
    mask = (1 << width) - 1
    value &= mask
    if value >> (width - 1):
        value -= 1 << width
    return value


def unsigned(value, width):
    return value & ((1 << width) - 1)


def int_min(width):
    return -(1 << (width - 1))


def int_max(width):
    return (1 << (width - 1)) - 1


def _sdiv_trunc(a, b):
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


def _check_div(a, b, width, signed):
    if b == 0:
        raise IntUB(DIV_BY_ZERO)
    if signed and a == int_min(width) and b == -1:
        raise IntUB(DIV_OVERFLOW)


def add(a, b, w):
    return wrap(a + b, w)


def sub(a, b, w):
    return wrap(a - b, w)


def mul(a, b, w):
    return wrap(a * b, w)


def band(a, b, w):
    return wrap(a & b, w)


def bor(a, b, w):
    return wrap(a | b, w)


def bxor(a, b, w):
    return wrap(a ^ b, w)


def sdiv(a, b, w):
    _check_div(a, b, w, True)
    return wrap(_sdiv_trunc(a, b), w)


def udiv(a, b, w):
    _check_div(a, b, w, False)
    return wrap(unsigned(a, w) // unsigned(b, w), w)


def srem(a, b, w):
    _check_div(a, b, w, True)
    return wrap(a - _sdiv_trunc(a, b) * b, w)


def urem(a, b, w):
    _check_div(a, b, w, False)
    return wrap(unsigned(a, w) % unsigned(b, w), w)


def ceildivs(a, b, w):
    _check_div(a, b, w, True)
    q = _sdiv_trunc(a, b)
    if q * b != a and (a >= 0) == (b >= 0):
        q += 1
    return wrap(q, w)


def _shift_amount(b, w):
    amount = unsigned(b, w)
    if amount >= w:
        raise IntUB(SHIFT_OVERFLOW)
    return amount


def shl(a, b, w):
    return wrap(a << _shift_amount(b, w), w)


def ashr(a, b, w):
    return wrap(a >> _shift_amount(b, w), w)


def lshr(a, b, w):
    return wrap(unsigned(a, w) >> _shift_amount(b, w), w)


BINOPS = {
    "add": add, "sub": sub, "mul": mul, "and": band, "or": bor, "xor": bxor,
    "sdiv": sdiv, "udiv": udiv, "srem": srem, "urem": urem, "ceildivs": ceildivs,
    "shl": shl, "ashr": ashr, "lshr": lshr,
}


def compare(pred, a, b, w):
    name = PREDICATES[pred]
    if name[0] == "u":
        a, b = unsigned(a, w), unsigned(b, w)
    op = name if name in ("eq", "ne") else name[1:]
    result = {
        "eq": a == b, "ne": a != b, "lt": a < b, "le": a <= b,
        "gt": a > b, "ge": a >= b,
    }[op]
    return -1 if result else 0


def native_binop(name, a, b, w):
    """Result an executable target would produce, even where the op is UB.

    Division by zero yields all-ones, ``INT_MIN / -1`` wraps, and shift
    amounts are masked to the bit width (the usual hardware behavior).
    """
    try:
        return BINOPS[name](a, b, w)
    except IntUB as exc:
        if exc.kind == DIV_BY_ZERO:
            return -1 if name in ("sdiv", "udiv", "ceildivs") else wrap(a, w)
        if exc.kind == DIV_OVERFLOW:
            return int_min(w) if name in ("sdiv", "ceildivs") else 0
        amount = unsigned(b, w) % w
        return BINOPS[name](a, amount, w)
