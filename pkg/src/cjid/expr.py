"""Identity AST and the line-oriented DSL the catalog is written in.

A file is a sequence of directives and identities, one statement per line::

    @p 3
    @eq E32
    d[1]*d[2]*d[3] == (q^2+m-1)/(1-q^2)*cyc(d[1])

Lattice functions are ``s c d`` (arguments spaced by 2K/p) and ``ts tc td``
(spaced by 4K/p).  ``cyc(...)`` is the sum over the p cyclic shifts of its
body and ``acyc(...)`` the same sum with alternating signs.  Coefficients
are built from integers, ``m q t``, the unknown constants ``A``..``H``,
``sqrt(...)`` and ``+ - * / ^``.  The translated (imaginary-lattice)
identities additionally use ``i``, ``q'`` and ``t'`` (q and t at 1 - m) and
an ``@lattice`` directive.
"""
from __future__ import annotations

import re
import string
from dataclasses import dataclass, field, replace
from typing import Iterator, Union

FUNC_KINDS = ("s", "c", "d", "ts", "tc", "td")
PLAIN_KINDS = frozenset({"s", "c", "d"})
TILDE_KINDS = frozenset({"ts", "tc", "td"})
SYMBOLS = frozenset({"m", "q", "t", "q'", "t'", "i"})
UNKNOWNS = tuple("ABCDEFGH")
LATTICES = ("real", "imag", "-real", "-imag")


class DSLError(ValueError):
    pass


class DSLSyntaxError(DSLError):
    def __init__(self, msg: str, line: int = 0, col: int = 0):
        super().__init__(f"line {line}, column {col}: {msg}" if line else msg)
        self.line, self.col = line, col


class ValidationError(DSLError):
    pass


class DegreeMismatchError(ValidationError):
    pass


# --------------------------------------------------------------------- nodes


@dataclass(frozen=True)
class Num:
    value: int


@dataclass(frozen=True)
class Sym:
    name: str


@dataclass(frozen=True)
class Unknown:
    name: str


@dataclass(frozen=True)
class Func:
    kind: str
    index: int


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exp: int


@dataclass(frozen=True)
class Sqrt:
    arg: "Node"


@dataclass(frozen=True)
class Cyc:
    body: "Node"
    alternating: bool = False


Node = Union[Num, Sym, Unknown, Func, BinOp, Neg, Pow, Sqrt, Cyc]

ZERO, ONE = Num(0), Num(1)


def add(a: Node, b: Node) -> Node:
    return BinOp("+", a, b)


def mul(a: Node, b: Node) -> Node:
    return BinOp("*", a, b)


def children(node: Node) -> tuple:
    if isinstance(node, BinOp):
        return (node.left, node.right)
    if isinstance(node, (Neg,)):
        return (node.operand,)
    if isinstance(node, Pow):
        return (node.base,)
    if isinstance(node, Sqrt):
        return (node.arg,)
    if isinstance(node, Cyc):
        return (node.body,)
    return ()


def walk(node: Node) -> Iterator[Node]:
    yield node
    for ch in children(node):
        yield from walk(ch)


def funcs(node: Node) -> list[Func]:
    return [n for n in walk(node) if isinstance(n, Func)]


def unknowns(node: Node) -> set[str]:
    return {n.name for n in walk(node) if isinstance(n, Unknown)}


def is_coef(node: Node) -> bool:
    """True when the subtree contains no lattice functions."""
    return not any(isinstance(n, Func) for n in walk(node))


def has_cyc(node: Node, alternating: bool | None = None) -> bool:
    return any(
        isinstance(n, Cyc) and (alternating is None or n.alternating == alternating)
        for n in walk(node)
    )


def map_funcs(node: Node, fn) -> Node:
    """Rebuild ``node`` with every Func replaced by ``fn(func)``."""
    if isinstance(node, Func):
        return fn(node)
    if isinstance(node, BinOp):
        return BinOp(node.op, map_funcs(node.left, fn), map_funcs(node.right, fn))
    if isinstance(node, Neg):
        return Neg(map_funcs(node.operand, fn))
    if isinstance(node, Pow):
        return Pow(map_funcs(node.base, fn), node.exp)
    if isinstance(node, Sqrt):
        return Sqrt(map_funcs(node.arg, fn))
    if isinstance(node, Cyc):
        return Cyc(map_funcs(node.body, fn), node.alternating)
    return node


def shift_indices(node: Node, k: int, p: int) -> Node:
    """Cyclic index shift i -> ((i - 1 + k) mod p) + 1."""
    return map_funcs(node, lambda f: Func(f.kind, (f.index - 1 + k) % p + 1))


# ------------------------------------------------------------------- degrees


def degrees(node: Node) -> frozenset[int]:
    """Total degrees of the monomials ``node`` can expand to."""
    if isinstance(node, Func):
        return frozenset({1})
    if isinstance(node, BinOp):
        left, right = degrees(node.left), degrees(node.right)
        if node.op in "+-":
            return left | right
        if node.op == "*":
            return frozenset(a + b for a in left for b in right)
        return left  # divisor is coefficient-only
    if isinstance(node, Neg):
        return degrees(node.operand)
    if isinstance(node, Pow):
        return frozenset(node.exp * d for d in degrees(node.base))
    if isinstance(node, Cyc):
        return degrees(node.body)
    return frozenset({0})


def rank_of(node: Node) -> int:
    """Common total degree of all monomials in ``node``."""
    degs = degrees(node)
    if len(degs) != 1:
        raise DegreeMismatchError(f"expression is not homogeneous (degrees {sorted(degs)})")
    return next(iter(degs))


# ----------------------------------------------------------------- rendering

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def render(node: Node) -> str:
    return _render(node, 0)


def _wrap(text: str, inner: int, outer: int) -> str:
    return f"({text})" if inner < outer else text


def _render(node: Node, ctx: int) -> str:
    if isinstance(node, Num):
        if node.value < 0:
            return _render(Neg(Num(-node.value)), ctx)
        return str(node.value)
    if isinstance(node, (Sym, Unknown)):
        return node.name
    if isinstance(node, Func):
        return f"{node.kind}[{node.index}]"
    if isinstance(node, Sqrt):
        return f"sqrt({_render(node.arg, 0)})"
    if isinstance(node, Cyc):
        return f"{'acyc' if node.alternating else 'cyc'}({_render(node.body, 0)})"
    if isinstance(node, Pow):
        return _wrap(f"{_render(node.base, 5)}^{node.exp}", 4, ctx)
    if isinstance(node, Neg):
        # unary minus is only left bare at the start of a sum
        return _wrap("-" + _render(node.operand, 3), 3 if ctx <= 1 else 2, ctx)
    prec = _PREC[node.op]
    left = _render(node.left, prec)
    right = _render(node.right, prec + 1)
    return _wrap(f"{left}{node.op}{right}", prec, ctx)


# -------------------------------------------------------------------- tokens

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t]+)
  | (?P<int>\d+)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*'?)
  | (?P<op>==|[-+*/^()\[\]])
    """,
    re.VERBOSE,
)


@dataclass
class _Tok:
    kind: str
    text: str
    col: int


def _tokenize(text: str, line: int, col0: int = 1) -> list[_Tok]:
    toks, pos = [], 0
    while pos < len(text):
        mt = _TOKEN.match(text, pos)
        if mt is None:
            raise DSLSyntaxError(f"unexpected character {text[pos]!r}", line, col0 + pos)
        if mt.lastgroup != "ws":
            toks.append(_Tok(mt.lastgroup, mt.group(), col0 + pos))
        pos = mt.end()
    toks.append(_Tok("eof", "", col0 + pos))
    return toks


class _ExprParser:
    def __init__(self, toks: list[_Tok], line: int):
        self.toks, self.pos, self.line = toks, 0, line

    @property
    def cur(self) -> _Tok:
        return self.toks[self.pos]

    def error(self, msg: str, tok: _Tok | None = None):
        tok = tok or self.cur
        raise DSLSyntaxError(msg, self.line, tok.col)

    def take(self, text: str | None = None, kind: str | None = None) -> _Tok:
        tok = self.cur
        if (text is not None and tok.text != text) or (kind is not None and tok.kind != kind):
            want = text or kind
            self.error(f"expected {want!r}, found {tok.text or 'end of line'!r}")
        self.pos += 1
        return tok

    def at(self, text: str) -> bool:
        return self.cur.text == text

    def expr(self) -> Node:
        node = self.term()
        while self.cur.text in ("+", "-"):
            op = self.take().text
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.factor()
        while self.cur.text in ("*", "/"):
            tok = self.take()
            rhs = self.factor()
            if tok.text == "/" and not is_coef(rhs):
                self.error("divisor must not contain lattice functions", tok)
            node = BinOp(tok.text, node, rhs)
        return node

    def factor(self) -> Node:
        if self.at("-"):
            self.take()
            return Neg(self.factor())
        if self.at("+"):
            self.take()
            return self.factor()
        base = self.primary()
        if self.at("^"):
            self.take()
            tok = self.take(kind="int")
            exp = int(tok.text)
            if exp < 1:
                self.error("exponent must be a positive integer", tok)
            return Pow(base, exp)
        return base

    def primary(self) -> Node:
        tok = self.cur
        if tok.kind == "int":
            self.take()
            return Num(int(tok.text))
        if tok.text == "(":
            self.take()
            node = self.expr()
            self.take(")")
            return node
        if tok.kind != "name":
            self.error(f"unexpected {tok.text or 'end of line'!r}")
        self.take()
        name = tok.text
        if name in FUNC_KINDS and self.at("["):
            self.take("[")
            idx = int(self.take(kind="int").text)
            self.take("]")
            return Func(name, idx)
        if name in ("cyc", "acyc", "sqrt"):
            self.take("(")
            inner = self.expr()
            self.take(")")
            if name == "sqrt":
                if not is_coef(inner):
                    self.error("sqrt() argument must not contain lattice functions", tok)
                return Sqrt(inner)
            return Cyc(inner, name == "acyc")
        if name in SYMBOLS:
            return Sym(name)
        if name in UNKNOWNS:
            return Unknown(name)
        self.error(f"unknown name {name!r}", tok)


def parse_expr(text: str, line: int = 0) -> Node:
    parser = _ExprParser(_tokenize(text, line), line)
    node = parser.expr()
    if parser.cur.kind != "eof":
        parser.error(f"unexpected {parser.cur.text!r}")
    return node


# ------------------------------------------------------------ identity specs


@dataclass(frozen=True)
class Factor:
    """One lattice function raised to a positive power."""

    func: str
    index: int
    power: int = 1


@dataclass(frozen=True)
class Block:
    """One right-hand-side block: ``unknown * body``."""

    unknown: str
    body: Node


@dataclass(frozen=True)
class IdentitySpec:
    """A p-point identity ``lhs == rhs``.

    ``blocks`` is the right-hand side rewritten as a linear combination of
    unknown constants times fixed polynomial blocks; ``constants_known`` maps
    the unknowns that have a closed form to that coefficient expression.
    Unknowns missing from ``constants_known`` are fitted.
    """

    name: str
    eq: str
    p: int
    lhs: Node
    rhs: Node
    rank: int
    spacing: str = "half"
    lattice: str = "real"
    blocks: tuple = ()
    constants_known: dict = field(default_factory=dict, compare=False, hash=False)
    table: int | None = None

    @property
    def unknowns(self) -> tuple[str, ...]:
        return tuple(b.unknown for b in self.blocks)

    @property
    def to_fit(self) -> tuple[str, ...]:
        return tuple(u for u in self.unknowns if u not in self.constants_known)

    @property
    def turns(self) -> int:
        return LATTICES.index(self.lattice)

    def rhs_model(self) -> Node:
        """rhs as ``sum(U_k * block_k)`` with the unknowns left symbolic."""
        return self.resolved_rhs({u: Unknown(u) for u in self.unknowns})

    def resolved_rhs(self, values: dict | None = None) -> Node:
        """rhs with known closed forms (or ``values``) substituted."""
        subs = dict(self.constants_known)
        subs.update(values or {})
        node = None
        for b in self.blocks:
            coef = subs.get(b.unknown, Unknown(b.unknown))
            term = coef if b.body == ONE else mul(coef, b.body)
            node = term if node is None else add(node, term)
        return ZERO if node is None else node

    def render(self) -> str:
        return render_spec(self)


def _split_terms(node: Node, sign: int = 1) -> list[tuple[int, Node]]:
    if isinstance(node, BinOp) and node.op in "+-":
        right_sign = sign if node.op == "+" else -sign
        return _split_terms(node.left, sign) + _split_terms(node.right, right_sign)
    if isinstance(node, Neg):
        return _split_terms(node.operand, -sign)
    return [(sign, node)]


def _split_product(node: Node) -> tuple[int, list[Node], list[Node], list[Node]]:
    """Flatten a product into (sign, coef factors, divisors, poly factors)."""
    if isinstance(node, Neg):
        sign, cf, dv, pf = _split_product(node.operand)
        return -sign, cf, dv, pf
    if isinstance(node, BinOp) and node.op == "*":
        s1, c1, d1, p1 = _split_product(node.left)
        s2, c2, d2, p2 = _split_product(node.right)
        return s1 * s2, c1 + c2, d1 + d2, p1 + p2
    if isinstance(node, BinOp) and node.op == "/":
        s1, c1, d1, p1 = _split_product(node.left)
        return s1, c1, d1 + [node.right], p1
    if is_coef(node):
        return 1, [node], [], []
    return 1, [], [], [node]


def _product(nodes: list[Node]) -> Node:
    out = None
    for n in nodes:
        out = n if out is None else mul(out, n)
    return ONE if out is None else out


def _coef_node(sign: int, factors: list[Node], divisors: list[Node]) -> Node:
    node = _product(factors)
    for d in divisors:
        node = BinOp("/", node, d)
    return Neg(node) if sign < 0 else node


def lift_blocks(rhs: Node) -> tuple[tuple[Block, ...], dict]:
    """Rewrite ``rhs`` as unknowns times polynomial blocks.

    Terms whose coefficient carries an unknown keep it; every other term's
    coefficient is lifted into a fresh unknown whose closed form goes into
    the returned ``constants_known``.
    """
    if rhs == ZERO:
        return (), {}
    explicit: dict[str, list[Node]] = {}
    known: dict[Node, list[Node]] = {}
    order: list = []
    for sign, term in _split_terms(rhs):
        tsign, cf, dv, pf = _split_product(term)
        sign *= tsign
        if cf == [ZERO]:
            continue
        body = _product(pf)
        if any(unknowns(d) for d in dv):
            raise ValidationError("unknown constants may not appear in a divisor")
        carrying = [f for f in cf if unknowns(f)]
        if carrying:
            if len(carrying) != 1 or not isinstance(carrying[0], Unknown):
                raise ValidationError("unknown constants must enter the rhs linearly")
            name = carrying[0].name
            rest = [f for f in cf if f is not carrying[0]]
            scale = _coef_node(sign, rest, dv)
            piece = body if scale == ONE else mul(scale, body) if body != ONE else scale
            if name not in explicit:
                order.append(("u", name))
            explicit.setdefault(name, []).append(piece)
        else:
            if body not in known:
                order.append(("k", body))
            known.setdefault(body, []).append(_coef_node(sign, cf, dv))
    used = set(explicit)
    fresh = (u for u in UNKNOWNS if u not in used)
    blocks, constants = [], {}
    for tag, key in order:
        if tag == "u":
            blocks.append(Block(key, _sum(explicit[key])))
        else:
            try:
                name = next(fresh)
            except StopIteration:
                raise ValidationError("too many rhs blocks") from None
            blocks.append(Block(name, key))
            constants[name] = _sum(known[key])
    return tuple(blocks), constants


def _sum(nodes: list[Node]) -> Node:
    out = nodes[0]
    for n in nodes[1:]:
        out = add(out, n)
    return out


def degree_rule_ok(spec: IdentitySpec) -> bool:
    """Every rhs block has degree rank - 2n with n >= 1."""
    for b in spec.blocks:
        for deg in degrees(b.body):
            diff = spec.rank - deg
            if diff < 2 or diff % 2:
                return False
    return True


def build_spec(
    name: str,
    eq: str,
    p: int,
    lhs: Node,
    rhs: Node,
    *,
    spacing: str | None = None,
    lattice: str = "real",
    table: int | None = None,
    constants_known: dict | None = None,
) -> IdentitySpec:
    """Validate and assemble an IdentitySpec."""
    if p < 2:
        raise ValidationError(f"{name}: p must be >= 2, got {p}")
    if lattice not in LATTICES:
        raise ValidationError(f"{name}: unknown lattice {lattice!r}")
    fs = funcs(lhs) + funcs(rhs)
    if not funcs(lhs):
        raise ValidationError(f"{name}: lhs has no lattice functions")
    for f in fs:
        if not 1 <= f.index <= p:
            raise ValidationError(f"{name}: index {f.kind}[{f.index}] outside 1..{p}")
    kinds = {f.kind for f in fs}
    if kinds & PLAIN_KINDS and kinds & TILDE_KINDS:
        raise ValidationError(f"{name}: mixes 2K/p and 4K/p lattice functions")
    used = "full" if kinds & TILDE_KINDS else "half"
    if spacing is not None and spacing != used:
        raise ValidationError(f"{name}: @spacing {spacing} contradicts the functions used")
    if (has_cyc(lhs, True) or has_cyc(rhs, True)) and p % 2:
        raise ValidationError(f"{name}: alternating cyclic sum needs even p, got p={p}")
    if unknowns(lhs):
        raise ValidationError(f"{name}: unknown constants on the lhs")
    rank = rank_of(lhs)
    blocks, lifted = lift_blocks(rhs)
    if constants_known:
        lifted.update(constants_known)
    return IdentitySpec(
        name=name, eq=eq, p=p, lhs=lhs, rhs=rhs, rank=rank, spacing=used,
        lattice=lattice, blocks=blocks, constants_known=lifted, table=table,
    )


def render_spec(spec: IdentitySpec, header: bool = True) -> str:
    lines = []
    if header:
        lines += [f"@p {spec.p}", f"@eq {spec.eq}", f'@name "{spec.name}"']
        if spec.lattice != "real":
            lines.append(f"@lattice {spec.lattice}")
    lines.append(f"{render(spec.lhs)} == {render(spec.rhs)}")
    return "\n".join(lines)


# -------------------------------------------------------------------- parser

_DIRECTIVE = re.compile(r'@(\w+)\s+("[^"]*"|\S+)')


def _suffixes() -> Iterator[str]:
    yield from string.ascii_lowercase
    for a in string.ascii_lowercase:
        for b in string.ascii_lowercase:
            yield a + b


def parse(source: str, table: int | None = None) -> list[IdentitySpec]:
    """Parse DSL text into validated IdentitySpecs.

    Identities sharing an ``@eq`` label without an explicit ``@name`` get
    the label plus a letter suffix (``E24a``, ``E24b``, ...) when the label
    covers more than one identity.  A chain ``a == b == c`` becomes the
    pairwise identities ``a == c`` and ``b == c``.
    """
    state = {"p": None, "eq": None, "spacing": None, "lattice": "real", "table": table}
    pending_name = None
    raw: list[tuple] = []
    for lineno, raw_line in enumerate(source.splitlines(), start=1):
        line = raw_line.split("#", 1)[0]
        pos = 0
        while True:
            stripped = line[pos:].lstrip()
            if not stripped.startswith("@"):
                break
            start = len(line) - len(stripped)
            mt = _DIRECTIVE.match(line, start)
            if mt is None:
                raise DSLSyntaxError("malformed directive", lineno, start + 1)
            key, val = mt.group(1), mt.group(2)
            col = mt.start(2) + 1
            if key == "p":
                if not val.isdigit():
                    raise DSLSyntaxError("@p needs an integer", lineno, col)
                state["p"] = int(val)
            elif key == "eq":
                state["eq"], state["spacing"] = val, None
            elif key == "name":
                pending_name = val.strip('"')
            elif key == "spacing":
                if val not in ("half", "full"):
                    raise DSLSyntaxError("@spacing must be 'half' or 'full'", lineno, col)
                state["spacing"] = val
            elif key == "lattice":
                if val not in LATTICES:
                    raise DSLSyntaxError(f"@lattice must be one of {LATTICES}", lineno, col)
                state["lattice"] = val
            elif key == "table":
                state["table"] = int(val)
            else:
                raise DSLSyntaxError(f"unknown directive @{key}", lineno, start + 1)
            pos = mt.end()
        body = line[pos:]
        if not body.strip():
            continue
        if state["p"] is None:
            raise DSLSyntaxError("identity before any @p directive", lineno, 1)
        sides = _split_sides(body, lineno, pos)
        eq = state["eq"] or f"L{lineno}"
        nodes = [parse_expr_at(text, lineno, col) for text, col in sides]
        *lefts, right = nodes
        for k, left in enumerate(lefts):
            name = pending_name if len(lefts) == 1 else (
                f"{pending_name}{'abcdefgh'[k]}" if pending_name else None)
            raw.append((name, eq, dict(state), left, right, lineno))
        pending_name = None

    counts: dict[str, int] = {}
    for name, eq, *_ in raw:
        if name is None:
            counts[eq] = counts.get(eq, 0) + 1
    suffix = {eq: _suffixes() for eq in counts}
    specs = []
    for name, eq, st, left, right, lineno in raw:
        if name is None:
            name = eq if counts[eq] == 1 else eq + next(suffix[eq])
        try:
            specs.append(build_spec(
                name, eq, st["p"], left, right, spacing=st["spacing"],
                lattice=st["lattice"], table=st["table"],
            ))
        except ValidationError as exc:
            raise ValidationError(f"line {lineno}: {exc}") from None
    return specs


def _split_sides(body: str, lineno: int, offset: int) -> list[tuple[str, int]]:
    parts, start = [], 0
    for mt in re.finditer("==", body):
        parts.append((body[start:mt.start()], offset + start + 1))
        start = mt.end()
    parts.append((body[start:], offset + start + 1))
    if len(parts) < 2:
        raise DSLSyntaxError("identity needs '=='", lineno, offset + 1)
    return parts


def parse_expr_at(text: str, line: int, col: int) -> Node:
    parser = _ExprParser(_tokenize(text, line, col), line)
    if parser.cur.kind == "eof":
        parser.error("empty expression")
    node = parser.expr()
    if parser.cur.kind != "eof":
        parser.error(f"unexpected {parser.cur.text!r}")
    return node


def parse_one(source: str) -> IdentitySpec:
    specs = parse(source)
    if len(specs) != 1:
        raise DSLError(f"expected one identity, got {len(specs)}")
    return specs[0]


# --------------------------------------------------------------- expansions


def expand_node(node: Node, p: int) -> Node:
    """Replace every Cyc by its explicit p-term (signed) sum."""
    if isinstance(node, Cyc):
        body = expand_node(node.body, p)
        out = body
        for k in range(1, p):
            term = shift_indices(body, k, p)
            out = BinOp("-" if node.alternating and k % 2 else "+", out, term)
        return out
    if isinstance(node, BinOp):
        return BinOp(node.op, expand_node(node.left, p), expand_node(node.right, p))
    if isinstance(node, Neg):
        return Neg(expand_node(node.operand, p))
    if isinstance(node, Pow):
        return Pow(expand_node(node.base, p), node.exp)
    return node


def expand_cyclic(spec: IdentitySpec) -> IdentitySpec:
    lhs, rhs = expand_node(spec.lhs, spec.p), expand_node(spec.rhs, spec.p)
    blocks = tuple(replace(b, body=expand_node(b.body, spec.p)) for b in spec.blocks)
    return replace(spec, lhs=lhs, rhs=rhs, blocks=blocks,
                   constants_known=dict(spec.constants_known))
