"""Printer and parser for the textual ``.silt`` syntax.

One op per line::

    %2 = arith.addi %0, %1 : (i32, i32) -> i32
    %3 = arith.constant {value = 7 : i32} : i32
    cf.cond_br %4, %2 [^bb1, ^bb2] {segments = [1, 0]} : (i1, i32) -> ()

Regions follow the signature in braces. Grammar: ``docs/grammar.md``.
"""

import re
from dataclasses import dataclass

from . import ir
from .ir import Block, Function, Operation, Program, Region
from .registry import registry
from .verify import ValidationError, validate


@dataclass(frozen=True)
class SourceSpan:
    begin: int
    end: int
    line: int
    column: int

    def __str__(self):
        return f"{self.line}:{self.column}"


class ParseError(Exception):
    def __init__(self, span, message):
        super().__init__(f"{span}: {message}")
        self.span = span
        self.message = message


# ---------------------------------------------------------------- printing

def format_type(t):
    return str(t)


def _type_list(types, bare_single=True):
    if bare_single and len(types) == 1:
        return format_type(types[0])
    return "(" + ", ".join(format_type(t) for t in types) + ")"


def _format_attr(key, value, op):
    if isinstance(value, bool):
        value = int(value)
    if isinstance(value, list):
        text = "[" + ", ".join(str(int(v)) for v in value) + "]"
    elif isinstance(value, float):
        text = repr(value)
    elif isinstance(value, int):
        text = str(value)
    else:
        text = format_type(value)
    if key == "value" and op.results:
        text += " : " + format_type(op.result.type)
    return f"{key} = {text}"


class _Printer:
    def __init__(self):
        self.names = {}
        self.lines = []

    def name(self, v):
        if v not in self.names:
            self.names[v] = f"%{len(self.names)}"
        return self.names[v]

    def ref(self, v):
        # unnamed operands only occur in invalid programs
        return self.names.get(v, "%<undef>")

    def function(self, f):
        args = ", ".join(f"{self.name(a)}: {a.type}" for a in f.body.entry.args)
        head = f"func @{f.name}({args})"
        if f.result_types:
            head += " -> " + _type_list(f.result_types)
        self.lines.append(head + " {")
        self.region(f.body, 1, skip_entry_args=True)
        self.lines.append("}")

    def region(self, region, depth, skip_entry_args=False):
        labels = {b: f"^bb{i}" for i, b in enumerate(region.blocks)}
        for i, b in enumerate(region.blocks):
            show = len(region.blocks) > 1 or (b.args and not skip_entry_args)
            if show:
                args = "" if (i == 0 and skip_entry_args) else ", ".join(
                    f"{self.name(a)}: {a.type}" for a in b.args)
                label = labels[b] + (f"({args})" if args else "")
                self.lines.append("  " * (depth - 1) + label + ":")
            for op in b.ops:
                self.op(op, depth, labels)

    def op(self, op, depth, labels):
        pad = "  " * depth
        text = ""
        if op.results:
            text = ", ".join(self.name(r) for r in op.results) + " = "
        text += op.kind
        if op.operands:
            text += " " + ", ".join(self.ref(v) for v in op.operands)
        if op.successors:
            text += " [" + ", ".join(labels.get(b, "^<undef>") for b in op.successors) + "]"
        if op.attrs:
            text += " {" + ", ".join(_format_attr(k, op.attrs[k], op) for k in sorted(op.attrs)) + "}"
        rtypes = [r.type for r in op.results]
        if op.operands:
            text += " : " + _type_list([v.type for v in op.operands], False) + " -> " + _type_list(rtypes)
        elif op.results:
            text += " : " + _type_list(rtypes)
        if not op.regions:
            self.lines.append(pad + text)
            return
        self.lines.append(pad + text + " {")
        for i, region in enumerate(op.regions):
            if i:
                self.lines.append(pad + "} {")
            self.region(region, depth + 1)
        self.lines.append(pad + "}")


def print_program(p):
    pr = _Printer()
    for f in p.functions:
        pr.function(f)
    return "\n".join(pr.lines) + "\n"


def structurally_equal(a, b):
    """Equality up to value renaming: both print to the same text."""
    return print_program(a) == print_program(b)


# ---------------------------------------------------------------- lexing

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r\n]+|//[^\n]*)
  | (?P<shaped>(?:memref|tensor|vector)<(?:[0-9?]+x)*(?:i[0-9]+|index|f32)>)
  | (?P<value>%[0-9]+)
  | (?P<label>\^bb[0-9]+)
  | (?P<sym>@[A-Za-z_][A-Za-z0-9_]*)
  | (?P<float>-?(?:[0-9]+\.[0-9]*(?:[eE][-+]?[0-9]+)?|[0-9]+[eE][-+]?[0-9]+))
  | (?P<int>-?[0-9]+)
  | (?P<arrow>->)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_.]*)
  | (?P<punct>[(){}\[\],:=])
""", re.VERBOSE)


@dataclass
class _Tok:
    kind: str
    text: str
    span: SourceSpan


def tokenize(text):
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            span = SourceSpan(pos, pos + 1, line, pos - line_start + 1)
            raise ParseError(span, f"unexpected character {text[pos]!r}")
        kind = m.lastgroup
        if kind != "ws":
            span = SourceSpan(pos, m.end(), line, pos - line_start + 1)
            toks.append(_Tok(kind, m.group(), span))
        nl = m.group().count("\n")
        if nl:
            line += nl
            line_start = pos + m.group().rindex("\n") + 1
        pos = m.end()
    toks.append(_Tok("eof", "", SourceSpan(pos, pos, line, pos - line_start + 1)))
    return toks


_SCALARS = {"index": ir.INDEX, "f32": ir.F32}
_SHAPED = re.compile(r"(memref|tensor|vector)<((?:[0-9?]+x)*)(i[0-9]+|index|f32)>")


def parse_type(text):
    if text in _SCALARS:
        return _SCALARS[text]
    if re.fullmatch(r"i[0-9]+", text):
        return ir.IntType(int(text[1:]))
    m = _SHAPED.fullmatch(text)
    if not m:
        raise ValueError(f"not a type: {text}")
    dims = [None if d == "?" else int(d) for d in m.group(2).split("x")[:-1]]
    return ir.ShapedType(m.group(1), tuple(dims), parse_type(m.group(3)))


# ---------------------------------------------------------------- parsing

class _Parser:
    def __init__(self, text):
        self.toks = tokenize(text)
        self.i = 0
        self.values = {}

    @property
    def tok(self):
        return self.toks[self.i]

    def error(self, msg, tok=None):
        raise ParseError((tok or self.tok).span, msg)

    def next(self):
        t = self.tok
        if t.kind != "eof":
            self.i += 1
        return t

    def at(self, text):
        return self.tok.text == text and self.tok.kind in ("punct", "arrow", "ident")

    def expect(self, text):
        if not self.at(text):
            self.error(f"expected '{text}', found {self.tok.text or 'end of input'!r}")
        return self.next()

    def accept(self, text):
        if self.at(text):
            return self.next()
        return None

    def expect_kind(self, kind, what):
        if self.tok.kind != kind:
            self.error(f"expected {what}, found {self.tok.text or 'end of input'!r}")
        return self.next()

    def type(self):
        t = self.tok
        if t.kind in ("shaped", "ident"):
            try:
                ty = parse_type(t.text)
            except ValueError:
                self.error(f"expected type, found {t.text!r}")
            self.next()
            return ty
        self.error(f"expected type, found {t.text or 'end of input'!r}")

    def type_list(self):
        """Either a bare type or a parenthesized (possibly empty) list."""
        if self.accept("("):
            types = []
            if not self.accept(")"):
                types.append(self.type())
                while self.accept(","):
                    types.append(self.type())
                self.expect(")")
            return types
        return [self.type()]

    def define(self, tok, value):
        if tok.text in self.values:
            self.error(f"redefinition of {tok.text}", tok)
        self.values[tok.text] = value

    def use(self):
        tok = self.expect_kind("value", "SSA value")
        if tok.text not in self.values:
            self.error(f"use before def: {tok.text}", tok)
        return self.values[tok.text]

    # -- program structure

    def program(self):
        funcs = []
        while self.tok.kind != "eof":
            funcs.append(self.function())
        return Program(funcs)

    def function(self):
        self.expect("func")
        name = self.expect_kind("sym", "function name").text[1:]
        self.expect("(")
        entry = Block()
        if not self.accept(")"):
            while True:
                vt = self.expect_kind("value", "argument")
                self.expect(":")
                self.define(vt, entry.add_arg(self.type()))
                if self.accept(")"):
                    break
                self.expect(",")
        results = self.type_list() if self.accept("->") else []
        self.expect("{")
        body = self.region_body(entry)
        self.expect("}")
        return Function(name, results, body)

    def region_body(self, entry=None):
        labels = {}
        defined = set()
        blocks = []

        def label_block(text):
            if text not in labels:
                labels[text] = Block()
            return labels[text]

        current = None
        if self.tok.kind != "label":
            current = entry or Block()
            blocks.append(current)
        while not self.at("}"):
            if self.tok.kind == "eof":
                self.error("unexpected end of input inside region")
            if self.tok.kind == "label":
                lt = self.next()
                if lt.text in defined:
                    self.error(f"redefinition of block {lt.text}", lt)
                defined.add(lt.text)
                if not blocks and entry is not None:
                    labels[lt.text] = entry
                current = label_block(lt.text)
                blocks.append(current)
                if self.accept("("):
                    if current is entry and entry.args:
                        self.error("entry block arguments are declared by the function", lt)
                    while True:
                        vt = self.expect_kind("value", "block argument")
                        self.expect(":")
                        self.define(vt, current.add_arg(self.type()))
                        if self.accept(")"):
                            break
                        self.expect(",")
                self.expect(":")
                continue
            current.ops.append(self.operation(label_block))
        missing = set(labels) - defined
        if missing:
            self.error(f"undefined block {sorted(missing)[0]}")
        if not blocks:
            blocks.append(entry or Block())
        return Region(blocks)

    def attr_value(self):
        t = self.tok
        if self.accept("["):
            items = []
            if not self.accept("]"):
                items.append(int(self.expect_kind("int", "integer").text))
                while self.accept(","):
                    items.append(int(self.expect_kind("int", "integer").text))
                self.expect("]")
            return items
        if t.kind == "int":
            self.next()
            return int(t.text)
        if t.kind == "float":
            self.next()
            return float(t.text)
        if t.kind in ("shaped", "ident"):
            return self.type()
        self.error(f"expected attribute value, found {t.text or 'end of input'!r}")

    def operation(self, label_block):
        start = self.tok
        result_toks = []
        if self.tok.kind == "value":
            result_toks.append(self.next())
            while self.accept(","):
                result_toks.append(self.expect_kind("value", "result name"))
            self.expect("=")
        kt = self.expect_kind("ident", "operation name")
        if kt.text not in registry():
            self.error(f"unknown op kind {kt.text}", kt)
        operands = []
        if self.tok.kind == "value":
            operands.append(self.use())
            while self.accept(","):
                operands.append(self.use())
        successors = []
        if self.accept("["):
            successors.append(label_block(self.expect_kind("label", "block label").text))
            while self.accept(","):
                successors.append(label_block(self.expect_kind("label", "block label").text))
            self.expect("]")
        attrs = {}
        if self.accept("{"):
            while True:
                key = self.expect_kind("ident", "attribute name").text
                self.expect("=")
                attrs[key] = self.attr_value()
                if self.accept(":"):
                    self.type()
                if self.accept("}"):
                    break
                self.expect(",")
        op_types, res_types = [], []
        if self.accept(":"):
            first = self.type_list()
            if self.accept("->"):
                op_types, res_types = first, self.type_list()
            else:
                res_types = first
        if len(op_types) != len(operands):
            self.error(f"{kt.text}: {len(operands)} operands but {len(op_types)} types", kt)
        for v, t in zip(operands, op_types):
            if v.type != t:
                self.error(f"{kt.text}: operand type {v.type} does not match {t}", kt)
        if len(res_types) != len(result_toks):
            self.error(f"{kt.text}: {len(result_toks)} results but {len(res_types)} types", start)
        op = Operation(kt.text, operands, res_types, attrs, successors=successors)
        while self.accept("{"):
            op.regions.append(self.region_body())
            self.expect("}")
        for tok, r in zip(result_toks, op.results):
            self.define(tok, r)
        return op


def parse_program(text, check=True):
    """Parse text into a Program; raises ParseError or ValidationError."""
    p = _Parser(text).program()
    if check:
        report = validate(p)
        if not report.ok:
            raise ValidationError(report)
    return p


parse = parse_program
