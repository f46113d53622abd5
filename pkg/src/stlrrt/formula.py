"""STL formulas: AST, parser, fragment checks and task extraction.

Concrete syntax (ASCII)::

    psi  := phi ('|' phi)*
    phi  := tau ('&' tau)*
    tau  := OP '[' num ',' num ']' (OP '[' num ',' num ']')? IDENT | '(' psi ')'
    OP   := 'F' | 'G'

The parser accepts a slightly larger language (``!``, ``U[a,b]``, arbitrary
nesting) so that it can name the offending construct when a formula falls
outside the plannable fragment.  Pass ``fragment=False`` to get those
formulas back as ASTs, e.g. for the monitor.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Union

from .errors import FormulaSyntaxError, FragmentViolation, InvalidCount, UnknownPredicate


class Interval(NamedTuple):
    a: float
    b: float


def _span():
    return field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Predicate:
    name: str
    span: Optional[tuple] = _span()


@dataclass(frozen=True)
class Not:
    child: "Formula"
    span: Optional[tuple] = _span()


@dataclass(frozen=True)
class Eventually:
    interval: Interval
    child: "Formula"
    span: Optional[tuple] = _span()


@dataclass(frozen=True)
class Always:
    interval: Interval
    child: "Formula"
    span: Optional[tuple] = _span()


@dataclass(frozen=True)
class Until:
    interval: Interval
    left: "Formula"
    right: "Formula"
    span: Optional[tuple] = _span()


@dataclass(frozen=True)
class And:
    children: tuple
    span: Optional[tuple] = _span()


@dataclass(frozen=True)
class Or:
    children: tuple
    span: Optional[tuple] = _span()


Formula = Union[Predicate, Not, Eventually, Always, Until, And, Or]
Temporal = (Eventually, Always)


# ---------------------------------------------------------------- lexer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>-?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<sym>[\[\](),&|!~])
    """,
    re.VERBOSE,
)

_SYM_KIND = {"[": "LBRACK", "]": "RBRACK", ",": "COMMA", "(": "LPAREN", ")": "RPAREN",
             "&": "AND", "|": "OR", "!": "NOT", "~": "NOT"}

_KIND_TEXT = {"LBRACK": "'['", "RBRACK": "']'", "COMMA": "','", "LPAREN": "'('",
              "RPAREN": "')'", "AND": "'&'", "OR": "'|'", "NOT": "'!'", "NUM": "number",
              "IDENT": "predicate name", "OP": "temporal operator", "EOF": "end of input"}


class _Tok(NamedTuple):
    kind: str
    text: str
    pos: int


def _tokenize(text):
    toks = []
    i = 0
    while i < len(text):
        m = _TOKEN_RE.match(text, i)
        if m is None:
            raise FormulaSyntaxError(f"unexpected character {text[i]!r}", i)
        kind = m.lastgroup
        s = m.group()
        if kind == "ident":
            rest = text[m.end():].lstrip()
            if s in ("F", "G", "U") and rest.startswith("["):
                toks.append(_Tok("OP", s, i))
            else:
                toks.append(_Tok("IDENT", s, i))
        elif kind == "num":
            toks.append(_Tok("NUM", s, i))
        elif kind == "sym":
            toks.append(_Tok(_SYM_KIND[s], s, i))
        i = m.end()
    toks.append(_Tok("EOF", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def cur(self):
        return self.toks[self.i]

    def fail(self, *expected):
        tok = self.cur
        what = "end of input" if tok.kind == "EOF" else f"token {tok.text!r}"
        raise FormulaSyntaxError(f"unexpected {what}", tok.pos, [_KIND_TEXT[k] for k in expected])

    def expect(self, kind):
        if self.cur.kind != kind:
            self.fail(kind)
        tok = self.cur
        self.i += 1
        return tok

    def parse(self):
        node = self.or_expr()
        if self.cur.kind != "EOF":
            self.fail("AND", "OR", "EOF")
        return node

    def or_expr(self):
        start = self.cur.pos
        kids = [self.and_expr()]
        while self.cur.kind == "OR":
            self.i += 1
            kids.append(self.and_expr())
        if len(kids) == 1:
            return kids[0]
        return Or(tuple(kids), span=(start, self._end()))

    def and_expr(self):
        start = self.cur.pos
        kids = [self.until_expr()]
        while self.cur.kind == "AND":
            self.i += 1
            kids.append(self.until_expr())
        if len(kids) == 1:
            return kids[0]
        return And(tuple(kids), span=(start, self._end()))

    def until_expr(self):
        start = self.cur.pos
        left = self.unary()
        if self.cur.kind == "OP" and self.cur.text == "U":
            self.i += 1
            iv = self.interval()
            right = self.unary()
            return Until(iv, left, right, span=(start, self._end()))
        return left

    def unary(self):
        tok = self.cur
        if tok.kind == "NOT":
            self.i += 1
            child = self.unary()
            return Not(child, span=(tok.pos, self._end()))
        if tok.kind == "OP":
            if tok.text == "U":
                self.fail("OP", "IDENT", "LPAREN", "NOT")
            self.i += 1
            iv = self.interval()
            child = self.unary()
            cls = Eventually if tok.text == "F" else Always
            return cls(iv, child, span=(tok.pos, self._end()))
        if tok.kind == "LPAREN":
            self.i += 1
            node = self.or_expr()
            self.expect("RPAREN")
            return node
        if tok.kind == "IDENT":
            self.i += 1
            return Predicate(tok.text, span=(tok.pos, tok.pos + len(tok.text)))
        self.fail("OP", "IDENT", "LPAREN")

    def interval(self):
        lb = self.expect("LBRACK")
        a = self.expect("NUM")
        self.expect("COMMA")
        b = self.expect("NUM")
        self.expect("RBRACK")
        av, bv = float(a.text), float(b.text)
        if not (math.isfinite(av) and math.isfinite(bv) and 0.0 <= av <= bv):
            raise FormulaSyntaxError(f"invalid interval [{a.text},{b.text}], need 0 <= a <= b",
                                     lb.pos)
        return Interval(av, bv)

    def _end(self):
        prev = self.toks[self.i - 1]
        return prev.pos + len(prev.text)


def parse(text: str, predicates=None, *, fragment: bool = True) -> Formula:
    """Parse ``text`` into an AST.

    ``predicates`` is any container of known predicate names (``None`` skips
    the check).  With ``fragment=True`` the result is also validated by
    :func:`check_fragment`.
    """
    node = _Parser(text).parse()
    if predicates is not None:
        for p in iter_predicates(node):
            if p.name not in predicates:
                raise UnknownPredicate(f"unknown predicate {p.name!r}"
                                       + (f" at position {p.span[0]}" if p.span else ""))
    if fragment:
        check_fragment(node)
    return node


def iter_predicates(node):
    if isinstance(node, Predicate):
        yield node
    elif isinstance(node, (Not, Eventually, Always)):
        yield from iter_predicates(node.child)
    elif isinstance(node, Until):
        yield from iter_predicates(node.left)
        yield from iter_predicates(node.right)
    else:
        for c in node.children:
            yield from iter_predicates(c)


# ---------------------------------------------------------------- fragment

def check_fragment(node: Formula) -> None:
    """Raise FragmentViolation unless ``node`` is a disjunction of
    conjunctions of single or doubly nested temporal tasks."""
    disjuncts = node.children if isinstance(node, Or) else (node,)
    for d in disjuncts:
        conjuncts = d.children if isinstance(d, And) else (d,)
        for c in conjuncts:
            _check_task(c, under_temporal=False)


def _check_task(node, under_temporal):
    if isinstance(node, Not):
        raise FragmentViolation("negation is not supported", node.span)
    if isinstance(node, Until):
        raise FragmentViolation(
            "until is not supported; rewrite as G[a,tau] p & F[tau,tau] q", node.span)
    if isinstance(node, Or):
        where = "under a temporal operator" if under_temporal else "below the top level"
        raise FragmentViolation(f"disjunction {where}", node.span)
    if isinstance(node, And):
        where = "under a temporal operator" if under_temporal else "nested inside a conjunct"
        raise FragmentViolation(f"conjunction {where}", node.span)
    if isinstance(node, Predicate):
        if not under_temporal:
            raise FragmentViolation(
                f"predicate {node.name!r} needs a temporal operator (e.g. F[0,0] {node.name})",
                node.span)
        return
    # temporal chain
    _check_task(node.child, under_temporal=True)
    if not under_temporal:
        depth = _chain_depth(collapse_same_operator(node))
        if depth > 2:
            raise FragmentViolation(
                f"nesting depth {depth} of distinct temporal operators (at most 2)", node.span)


def _chain_depth(node):
    d = 0
    while isinstance(node, Temporal):
        d += 1
        node = node.child
    return d


# ---------------------------------------------------------------- printing

def _num(x):
    x = float(x)
    return str(int(x)) if x.is_integer() and abs(x) < 1e15 else repr(x)


def pretty(node: Formula) -> str:
    if isinstance(node, Predicate):
        return node.name
    if isinstance(node, Not):
        return "!" + _wrap(node.child, (And, Or, Until))
    if isinstance(node, Temporal):
        op = "F" if isinstance(node, Eventually) else "G"
        a, b = node.interval
        return f"{op}[{_num(a)},{_num(b)}] " + _wrap(node.child, (And, Or, Until))
    if isinstance(node, Until):
        a, b = node.interval
        return (_wrap(node.left, (And, Or, Until)) + f" U[{_num(a)},{_num(b)}] "
                + _wrap(node.right, (And, Or, Until)))
    if isinstance(node, And):
        return " & ".join(_wrap(c, (And, Or)) for c in node.children)
    if isinstance(node, Or):
        return " | ".join(_wrap(c, (Or,)) for c in node.children)
    raise TypeError(f"not a formula node: {node!r}")


def _wrap(node, kinds):
    s = pretty(node)
    return f"({s})" if isinstance(node, kinds) else s


# ---------------------------------------------------------------- analysis

def horizon(node: Formula) -> float:
    """Time horizon: 0 for predicates, ``b`` added per temporal layer,
    max over boolean children."""
    if isinstance(node, Predicate):
        return 0.0
    if isinstance(node, Not):
        return horizon(node.child)
    if isinstance(node, Temporal):
        return node.interval.b + horizon(node.child)
    if isinstance(node, Until):
        return node.interval.b + max(horizon(node.left), horizon(node.right))
    return max(horizon(c) for c in node.children)


def collapse_same_operator(node: Formula) -> Formula:
    """Merge directly nested identical temporal operators by summing intervals."""
    if isinstance(node, Predicate):
        return node
    if isinstance(node, Not):
        return Not(collapse_same_operator(node.child), span=node.span)
    if isinstance(node, Temporal):
        child = collapse_same_operator(node.child)
        if type(child) is type(node):
            iv = Interval(node.interval.a + child.interval.a, node.interval.b + child.interval.b)
            return type(node)(iv, child.child, span=node.span)
        return type(node)(node.interval, child, span=node.span)
    if isinstance(node, Until):
        return Until(node.interval, collapse_same_operator(node.left),
                     collapse_same_operator(node.right), span=node.span)
    return type(node)(tuple(collapse_same_operator(c) for c in node.children), span=node.span)


@dataclass(frozen=True)
class AtomicTask:
    kind: str  # "F", "G", "FG" or "GF"
    interval: Interval
    predicate: str
    inner: Optional[Interval] = None

    def __post_init__(self):
        if self.kind not in ("F", "G", "FG", "GF"):
            raise ValueError(f"bad task kind {self.kind!r}")
        if (len(self.kind) == 2) != (self.inner is not None):
            raise ValueError("nested kinds need an inner interval, single kinds must not have one")

    def to_formula(self) -> Formula:
        leaf = Predicate(self.predicate)
        ops = {"F": Eventually, "G": Always}
        if self.inner is None:
            return ops[self.kind](self.interval, leaf)
        return ops[self.kind[0]](self.interval, ops[self.kind[1]](self.inner, leaf))

    @property
    def label(self):
        return pretty(self.to_formula())

    @property
    def horizon(self):
        return self.interval.b + (self.inner.b if self.inner is not None else 0.0)


def task_from_node(node: Formula) -> AtomicTask:
    node = collapse_same_operator(node)
    if not isinstance(node, Temporal):
        raise FragmentViolation("conjunct is not a temporal task", getattr(node, "span", None))
    outer = "F" if isinstance(node, Eventually) else "G"
    child = node.child
    if isinstance(child, Predicate):
        return AtomicTask(outer, node.interval, child.name)
    if isinstance(child, Temporal) and isinstance(child.child, Predicate):
        inner = "F" if isinstance(child, Eventually) else "G"
        return AtomicTask(outer + inner, node.interval, child.child.name, child.interval)
    raise FragmentViolation("unsupported task shape", node.span)


def decompose_gf(task: AtomicTask, n_f: Optional[int] = None,
                 delta: Optional[float] = None) -> list:
    """Replace G[a,b]F[a',b'] p by point visits F[a_w,a_w] p, w = 1..n_f.

    By default the visits are spread uniformly so that the last one lands at
    b + a'; when (b-a)/(b'-a') is an integer this is the unit step.  An
    explicit ``delta`` gives a_w = a + a' + w*delta*(b'-a').
    """
    if task.kind != "GF":
        raise ValueError(f"decompose_gf needs a GF task, got {task.kind}")
    a, b = task.interval
    a2, b2 = task.inner
    width = b2 - a2
    if width <= 0.0:
        # F over a point window: G[a,b]F[c,c] p is G[a+c,b+c] p
        return [AtomicTask("G", Interval(a + a2, b + a2), task.predicate)]
    ratio = (b - a) / width
    floor = max(1, math.ceil(ratio - 1e-9))
    if n_f is None:
        n_f = floor
    elif n_f < floor:
        raise InvalidCount(f"n_f={n_f} is below the minimum {floor} for {task.label}")
    if delta is None:
        times = [a + a2 + (b - a) * w / n_f for w in range(1, n_f + 1)]
    else:
        lo = ratio / n_f
        if not (lo - 1e-12 <= delta <= 1.0):
            raise InvalidCount(f"delta={delta} outside [{lo}, 1]")
        times = [a + a2 + w * delta * width for w in range(1, n_f + 1)]
    return [AtomicTask("F", Interval(t, t), task.predicate) for t in times]


def to_conjunctions(node: Formula, n_f: Optional[dict] = None) -> list:
    """One list of atomic tasks per disjunct, GF tasks expanded.

    ``n_f`` optionally maps a GF task label to its visit count.
    """
    check_fragment(node)
    n_f = n_f or {}
    out = []
    for d in (node.children if isinstance(node, Or) else (node,)):
        tasks = []
        for c in (d.children if isinstance(d, And) else (d,)):
            t = task_from_node(c)
            if t.kind == "GF":
                tasks.extend(decompose_gf(t, n_f.get(t.label)))
            else:
                tasks.append(t)
        out.append(tasks)
    return out
