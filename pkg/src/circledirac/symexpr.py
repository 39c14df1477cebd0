"""Small computer-algebra layer used by every other module.

Expressions are plain immutable :mod:`sympy` trees. This module fixes the
text grammar, the JSON tree form, the canonical simplifier and the
side-relation reducer so that the rest of the package never depends on
sympy's own heuristics (``simplify`` is never called).

Grammar::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('+' | '-') unary | power
    power  := atom ('^' unary)?          # right associative, '**' accepted
    atom   := NUMBER | 'I' | NAME | NAME '(' expr (',' expr)* ')' | '(' expr ')'

Numbers are read as exact rationals (``0.5`` is ``1/2``). ``I`` is the
imaginary unit; ``e`` is an ordinary symbol (the charge).
"""
from __future__ import annotations

import cmath
import random
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import sympy as sp
from sympy.core.function import AppliedUndef

Expr = sp.Expr

KNOWN_FUNCTIONS = {"sin": sp.sin, "cos": sp.cos, "exp": sp.exp, "sqrt": sp.sqrt}


class ParseError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class UnboundSymbolError(KeyError):
    pass


_symbol_cache: dict[str, sp.Symbol] = {}


def sym(name: str) -> sp.Symbol:
    """Return the package-wide symbol called ``name`` (no assumptions)."""
    s = _symbol_cache.get(name)
    if s is None:
        s = _symbol_cache[name] = sp.Symbol(name)
    return s


def symbols(names: str) -> tuple[sp.Symbol, ...]:
    return tuple(sym(n) for n in names.split())


# --------------------------------------------------------------------------
# parsing / printing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?|\.\d+)|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>\*\*|[-+*/^(),]))"
)


def _tokenize(text: str):
    pos = 0
    out = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            while text[pos].isspace():
                pos += 1
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        start = m.start(kind)
        value = m.group(kind)
        if value == "**":
            value = "^"
        out.append((kind, value, start))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


class _Parser:
    def __init__(self, text: str, functions: Mapping[str, object]):
        self.toks = _tokenize(text)
        self.i = 0
        self.functions = functions

    def peek(self):
        return self.toks[self.i]

    def take(self, value=None):
        tok = self.toks[self.i]
        if value is not None and tok[1] != value:
            raise ParseError(f"expected {value!r}, found {tok[1] or 'end of input'!r}", tok[2])
        self.i += 1
        return tok

    def parse(self):
        e = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ParseError(f"unexpected token {tok[1]!r}", tok[2])
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            rhs = self.term()
            e = e + rhs if op == "+" else e - rhs
        return e

    def term(self):
        e = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            rhs = self.unary()
            e = e * rhs if op == "*" else e / rhs
        return e

    def unary(self):
        if self.peek()[1] == "-":
            self.take()
            return -self.unary()
        if self.peek()[1] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] == "^":
            self.take()
            return base ** self.unary()
        return base

    def atom(self):
        kind, value, pos = self.peek()
        if kind == "num":
            self.take()
            return sp.Rational(value)
        if kind == "name":
            self.take()
            if self.peek()[1] == "(":
                if value not in self.functions:
                    raise ParseError(f"unknown function {value!r}", pos)
                self.take("(")
                args = [self.expr()]
                while self.peek()[1] == ",":
                    self.take()
                    args.append(self.expr())
                self.take(")")
                fn = self.functions[value]
                return fn(*args)
            if value == "I":
                return sp.I
            if value == "E":
                return sp.E
            return sym(value)
        if value == "(":
            self.take()
            e = self.expr()
            self.take(")")
            return e
        raise ParseError(f"unexpected token {value or 'end of input'!r}", pos)


def parse(text: str, functions: Iterable[str] = ()) -> Expr:
    """Parse ``text`` into an expression.

    ``functions`` names extra undefined functions (e.g. ``V``) that may be
    applied to arguments; any other call raises :class:`ParseError`.
    """
    table = dict(KNOWN_FUNCTIONS)
    for name in functions:
        table[name] = sp.Function(name)
    return _Parser(text, table).parse()


def to_text(e: Expr) -> str:
    return sp.sstr(sp.sympify(e), order="lex").replace("**", "^")


# --------------------------------------------------------------------------
# JSON tree form


def to_json(e: Expr) -> dict:
    e = sp.sympify(e)
    if e is sp.I:
        return {"kind": "imaginary"}
    if e is sp.E:
        return {"kind": "exp", "children": [to_json(sp.Integer(1))]}
    if isinstance(e, sp.Rational):
        return {"kind": "rational", "num": int(e.p), "den": int(e.q)}
    if isinstance(e, sp.Symbol):
        return {"kind": "symbol", "name": e.name}
    if isinstance(e, sp.Add):
        return {"kind": "sum", "children": [to_json(a) for a in sp.Add.make_args(e)]}
    if isinstance(e, sp.Mul):
        return {"kind": "product", "children": [to_json(a) for a in sp.Mul.make_args(e)]}
    if isinstance(e, sp.Pow):
        return {"kind": "power", "children": [to_json(e.base), to_json(e.exp)]}
    for kind, cls in (("sin", sp.sin), ("cos", sp.cos), ("exp", sp.exp)):
        if isinstance(e, cls):
            return {"kind": kind, "children": [to_json(e.args[0])]}
    if isinstance(e, AppliedUndef):
        return {"kind": "function", "name": e.func.__name__, "children": [to_json(a) for a in e.args]}
    if isinstance(e, sp.Derivative):
        variables = []
        for v, n in e.variable_count:
            variables.extend([v] * int(n))
        return {"kind": "derivative", "children": [to_json(e.expr)] + [to_json(v) for v in variables]}
    raise TypeError(f"no JSON form for node {type(e).__name__}")


def from_json(tree: Mapping) -> Expr:
    kind = tree["kind"]
    ch = [from_json(c) for c in tree.get("children", ())]
    if kind == "imaginary":
        return sp.I
    if kind == "rational":
        return sp.Rational(tree["num"], tree["den"])
    if kind == "symbol":
        return sym(tree["name"])
    if kind == "sum":
        return sp.Add(*ch)
    if kind == "product":
        return sp.Mul(*ch)
    if kind == "power":
        return sp.Pow(ch[0], ch[1])
    if kind in ("sin", "cos", "exp"):
        return KNOWN_FUNCTIONS[kind](ch[0])
    if kind == "function":
        return sp.Function(tree["name"])(*ch)
    if kind == "derivative":
        return sp.Derivative(ch[0], *ch[1:])
    raise ValueError(f"unknown node kind {kind!r}")


# --------------------------------------------------------------------------
# canonical simplification and side relations


def _trig_arguments(e: Expr) -> list[Expr]:
    return sorted({a.args[0] for a in e.atoms(sp.sin)}, key=sp.default_sort_key)


def _reduce_power(e: Expr, base: Expr, degree: int, replacement: Expr) -> Expr:
    """Rewrite every top-level factor ``base**n`` (n >= degree) in the
    expanded ``e``; occurrences inside function arguments are left alone."""
    e = sp.expand(e)
    if not e.has(base):
        return e
    out = []
    changed = False
    for term in sp.Add.make_args(e):
        powers = term.as_powers_dict()
        n = powers.get(base, 0)
        if not (getattr(n, "is_Integer", False) and n >= degree):
            out.append(term)
            continue
        q, r = divmod(int(n), degree)
        out.append(term / base**n * replacement**q * base**r)
        changed = True
    return sp.expand(sp.Add(*out)) if changed else e


def _reduce_rational(e: Expr, rules) -> Expr:
    num, den = sp.fraction(sp.together(e))
    num, den = sp.expand(num), sp.expand(den)
    for _ in range(32):
        before = (num, den)
        for base, degree, repl in rules:
            num = _reduce_power(num, base, degree, repl)
            den = _reduce_power(den, base, degree, repl)
        if (num, den) == before:
            break
    else:
        raise RuntimeError("side-relation rewriting did not reach a fixed point")
    return sp.cancel(num / den)


def simplify(e) -> Expr:
    """Canonical form: expanded numerator over expanded denominator, with
    ``sin(u)**2`` replaced by ``1 - cos(u)**2``."""
    e = sp.sympify(e)
    if isinstance(e, sp.MatrixBase):
        return e.applyfunc(simplify)
    rules = [(sp.sin(u), 2, 1 - sp.cos(u) ** 2) for u in _trig_arguments(e)]
    return _reduce_rational(e, rules)


def _leading_monomial(e: Expr):
    """Pick the designated monomial of a relation: the last pure power of a
    single atom in lexicographic node order."""
    candidates = []
    for term in sp.Add.make_args(sp.expand(e)):
        coeff, rest = term.as_coeff_Mul()
        base, exp = rest.as_base_exp()
        if exp.is_Integer and exp > 0 and (base.is_Symbol or isinstance(base, (AppliedUndef, sp.sin, sp.cos))):
            candidates.append((sp.default_sort_key(base), base, int(exp), coeff))
    if not candidates:
        raise ValueError(f"no designated monomial in relation {e}")
    _, base, degree, coeff = max(candidates, key=lambda c: (c[0], c[2]))
    return base, degree, coeff


@dataclass(frozen=True)
class SideRelations:
    """Rewrite rules ``base**degree -> replacement`` applied to a fixed point.

    Build from equations with :meth:`from_equations`; each ``lhs = rhs`` is
    solved for its designated monomial (leading-term replacement, not a
    Groebner basis).
    """

    rules: tuple = ()
    equations: tuple = field(default=(), compare=False)

    @classmethod
    def from_equations(cls, pairs) -> "SideRelations":
        rules = []
        for lhs, rhs in pairs:
            rel = sp.expand(sp.sympify(lhs) - sp.sympify(rhs))
            base, degree, coeff = _leading_monomial(rel)
            repl = sp.expand(base**degree - rel / coeff)
            rules.append((base, degree, repl))
        return cls(tuple(rules), tuple(pairs))

    def __add__(self, other: "SideRelations") -> "SideRelations":
        return SideRelations(self.rules + other.rules, self.equations + other.equations)

    def __bool__(self):
        return bool(self.rules)

    def reduce(self, e) -> Expr:
        e = sp.sympify(e)
        if isinstance(e, sp.MatrixBase):
            return e.applyfunc(self.reduce)
        trig = [(sp.sin(u), 2, 1 - sp.cos(u) ** 2) for u in _trig_arguments(e)]
        return _reduce_rational(e, list(self.rules) + trig)


NO_RELATIONS = SideRelations()


# --------------------------------------------------------------------------
# calculus and substitution


def diff(e, s: sp.Symbol) -> Expr:
    return simplify(sp.diff(sp.sympify(e), s))


def subst(e, mapping: Mapping) -> Expr:
    m = {(sym(k) if isinstance(k, str) else k): sp.sympify(v) for k, v in mapping.items()}
    return simplify(sp.sympify(e).xreplace(m).doit())


# --------------------------------------------------------------------------
# numeric evaluation


def _opaque_atoms(e: Expr) -> list[Expr]:
    atoms = set(e.atoms(sp.Derivative)) | {f for f in e.atoms(AppliedUndef)}
    return sorted(atoms, key=sp.default_sort_key)


def evaluate(e, binding: Mapping[str, complex]) -> complex:
    """Evaluate a fully bound expression to a Python complex."""
    e = sp.sympify(e)
    free = sorted(s.name for s in e.free_symbols)
    missing = [n for n in free if n not in binding]
    if missing:
        raise UnboundSymbolError(f"unbound symbol(s): {', '.join(missing)}")
    if _opaque_atoms(e):
        raise UnboundSymbolError(f"undefined function in {e}")
    repl = {sym(n): sp.nsimplify(binding[n]) if isinstance(binding[n], int) else sp.sympify(complex(binding[n]))
            for n in free}
    val = e.xreplace(repl).evalf(30)
    if val.has(sp.zoo, sp.nan, sp.oo) or val is sp.zoo:
        raise ZeroDivisionError(f"division by zero evaluating {e}")
    return complex(val)


def compile_numeric(e, names: Iterable[str]):
    """Compile ``e`` into a fast ``f(*values) -> complex`` over ``names``."""
    e = sp.sympify(e)
    names = list(names)
    missing = {s.name for s in e.free_symbols} - set(names)
    if missing:
        raise UnboundSymbolError(f"unbound symbol(s): {', '.join(sorted(missing))}")
    return sp.lambdify([sym(n) for n in names], e, modules=[cmath, "math"])


# --------------------------------------------------------------------------
# equivalence


@dataclass(frozen=True)
class Equivalence:
    equal: bool
    inconclusive: bool
    symbolic_residual: Expr
    max_numeric_residual: float

    def __bool__(self):
        return self.equal and not self.inconclusive


def equiv(e1, e2, rel: SideRelations = NO_RELATIONS, probes: int = 20, rtol: float = 1e-9,
          seed: int = 0) -> Equivalence:
    """Decide ``e1 == e2`` modulo ``rel``.

    The canonical forms are compared and the verdict is confirmed at
    ``probes`` random real bindings. Derivatives and undefined function
    values are probed as independent unknowns.
    """
    a = rel.reduce(e1) if rel else simplify(e1)
    b = rel.reduce(e2) if rel else simplify(e2)
    residual = simplify(a - b)
    opaque = _opaque_atoms(a) + _opaque_atoms(b)
    stand_ins = {atom: sp.Dummy(f"w{i}") for i, atom in enumerate(dict.fromkeys(opaque))}
    a_n, b_n = a.xreplace(stand_ins), b.xreplace(stand_ins)
    free = sorted(a_n.free_symbols | b_n.free_symbols, key=sp.default_sort_key)
    fa = sp.lambdify(free, a_n, modules=[cmath, "math"])
    fb = sp.lambdify(free, b_n, modules=[cmath, "math"])
    rng = random.Random(seed)
    worst = 0.0
    numeric_equal = True
    done = 0
    attempts = 0
    while done < probes and attempts < probes * 20:
        attempts += 1
        vals = [rng.uniform(0.3, 2.0) * rng.choice((-1, 1)) for _ in free]
        try:
            va, vb = complex(fa(*vals)), complex(fb(*vals))
        except (ZeroDivisionError, ValueError, OverflowError):
            continue
        done += 1
        err = abs(va - vb) / max(1.0, abs(va), abs(vb))
        worst = max(worst, err)
        if err > rtol:
            numeric_equal = False
    symbolic_equal = residual == 0
    if symbolic_equal:
        return Equivalence(True, False, residual, worst)
    return Equivalence(False, numeric_equal, residual, worst)
