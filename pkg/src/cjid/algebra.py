"""Fully expanded polynomial form of lattice expressions.

A ``Poly`` maps a monomial (tuple of ``(kind, index, exponent)`` triples) to
a sympy coefficient over m, q, t, q', t', i and the unknown constants.
Exponents may be negative while a translation is in progress.  ``fold``
turns a Poly back into an AST, recovering ``cyc``/``acyc`` sums and pulling
common monomial factors out of grouped terms.
"""
from __future__ import annotations

from functools import reduce

import sympy as sp

from .expr import (
    BinOp, Cyc, Func, Neg, Node, Num, ONE, Pow, Sqrt, Sym, UNKNOWNS, Unknown, ZERO,
    FUNC_KINDS, DSLError, mul,
)

M = sp.Symbol("m", positive=True)
Q = sp.Symbol("q", positive=True)
T = sp.Symbol("t", positive=True)
QC = sp.Symbol("qc", positive=True)
TC = sp.Symbol("tc", positive=True)
_SYM_TO_SP = {"m": M, "q": Q, "t": T, "q'": QC, "t'": TC, "i": sp.I}
_SP_TO_SYM = {M: "m", Q: "q", T: "t", QC: "q'", TC: "t'"}
_UNKNOWN_SP = {u: sp.Symbol(u) for u in UNKNOWNS}
_SP_TO_UNKNOWN = {v: k for k, v in _UNKNOWN_SP.items()}
_KIND_ORDER = {k: n for n, k in enumerate(FUNC_KINDS)}

Monomial = tuple  # ((kind, index, exp), ...)
Poly = dict


class AlgebraError(DSLError):
    pass


# ---------------------------------------------------------- coefficient maps


def coef_to_sympy(node: Node) -> sp.Expr:
    if isinstance(node, Num):
        return sp.Integer(node.value)
    if isinstance(node, Sym):
        return _SYM_TO_SP[node.name]
    if isinstance(node, Unknown):
        return _UNKNOWN_SP[node.name]
    if isinstance(node, Neg):
        return -coef_to_sympy(node.operand)
    if isinstance(node, Pow):
        return coef_to_sympy(node.base) ** node.exp
    if isinstance(node, Sqrt):
        return sp.sqrt(coef_to_sympy(node.arg))
    if isinstance(node, BinOp):
        a, b = coef_to_sympy(node.left), coef_to_sympy(node.right)
        return {"+": a + b, "-": a - b, "*": a * b, "/": a / b}[node.op]
    raise AlgebraError(f"not a coefficient expression: {node!r}")


def sympy_to_coef(expr: sp.Expr) -> Node:
    expr = sp.sympify(expr)
    if expr.is_Add:
        # positive terms first: 1 - m rather than -m + 1
        terms = sorted(expr.as_ordered_terms(), key=lambda a: a.could_extract_minus_sign())
        out = sympy_to_coef(terms[0])
        for term in terms[1:]:
            if term.could_extract_minus_sign():
                out = BinOp("-", out, sympy_to_coef(-term))
            else:
                out = BinOp("+", out, sympy_to_coef(term))
        return out
    if expr.could_extract_minus_sign():
        return Neg(sympy_to_coef(-expr))
    if expr.is_Integer:
        return Num(int(expr))
    if expr.is_Rational:
        return BinOp("/", Num(int(expr.p)), Num(int(expr.q)))
    if expr == sp.I:
        return Sym("i")
    if expr in _SP_TO_SYM:
        return Sym(_SP_TO_SYM[expr])
    if expr in _SP_TO_UNKNOWN:
        return Unknown(_SP_TO_UNKNOWN[expr])
    if expr.is_Mul:
        num, den = sp.fraction(expr)
        if den != 1:
            return BinOp("/", sympy_to_coef(num), sympy_to_coef(den))
        factors = [sympy_to_coef(f) for f in expr.as_ordered_factors()]
        return reduce(mul, factors)
    if expr.is_Pow:
        base, exp = expr.args
        if exp.is_Integer and exp > 0:
            return Pow(sympy_to_coef(base), int(exp))
        if exp.is_Integer and exp < 0:
            return BinOp("/", ONE, sympy_to_coef(base ** -exp))
        if exp == sp.Rational(1, 2):
            return Sqrt(sympy_to_coef(base))
        if exp.is_Rational and exp.q == 2:
            inner = Sqrt(sympy_to_coef(base))
            if exp > 0:
                return Pow(inner, int(exp.p))
            return BinOp("/", ONE, inner if exp.p == -1 else Pow(inner, int(-exp.p)))
    raise AlgebraError(f"cannot express {expr} in the identity DSL")


def is_zero(c: sp.Expr) -> bool:
    c = sp.expand(c)
    if c == 0:
        return True
    return sp.simplify(c) == 0


def same(a: sp.Expr, b: sp.Expr) -> bool:
    return is_zero(a - b)


# --------------------------------------------------------------- monomials


def mono(factors) -> Monomial:
    """Canonical monomial from (kind, index, exp) triples (merging repeats)."""
    acc: dict[tuple[str, int], int] = {}
    for kind, index, exp in factors:
        acc[(kind, index)] = acc.get((kind, index), 0) + exp
    return tuple(sorted(
        ((k, i, e) for (k, i), e in acc.items() if e != 0),
        key=lambda f: (f[1], _KIND_ORDER[f[0]]),
    ))


def mono_mul(a: Monomial, b: Monomial) -> Monomial:
    return mono(a + b)


def mono_pow(a: Monomial, n: int) -> Monomial:
    return mono((k, i, e * n) for k, i, e in a)


def mono_degree(a: Monomial) -> int:
    return sum(e for _, _, e in a)


def rotate(a: Monomial, k: int, p: int) -> Monomial:
    return mono((kind, (i - 1 + k) % p + 1, e) for kind, i, e in a)


def mono_key(a: Monomial):
    return tuple((i, _KIND_ORDER[k], -e) for k, i, e in a)


# --------------------------------------------------------------- arithmetic


def clean(poly: Poly) -> Poly:
    out = {}
    for k, c in poly.items():
        c = sp.expand(c)
        if c != 0 and not is_zero(c):
            out[k] = c
    return out


def padd(a: Poly, b: Poly, scale=1) -> Poly:
    out = dict(a)
    for k, c in b.items():
        out[k] = out.get(k, 0) + scale * c
    return out


def pmul(a: Poly, b: Poly) -> Poly:
    out: Poly = {}
    for ka, ca in a.items():
        for kb, cb in b.items():
            k = mono_mul(ka, kb)
            out[k] = out.get(k, 0) + ca * cb
    return out


def pscale(a: Poly, c) -> Poly:
    return {k: v * c for k, v in a.items()}


def to_poly(node: Node, p: int) -> Poly:
    """Expand an AST (cyclic sums included) into a Poly."""
    if isinstance(node, Func):
        return {mono([(node.kind, node.index, 1)]): sp.Integer(1)}
    if isinstance(node, (Num, Sym, Unknown, Sqrt)):
        return {(): coef_to_sympy(node)}
    if isinstance(node, Neg):
        return pscale(to_poly(node.operand, p), -1)
    if isinstance(node, Pow):
        base = to_poly(node.base, p)
        out = base
        for _ in range(node.exp - 1):
            out = pmul(out, base)
        return clean(out)
    if isinstance(node, Cyc):
        body = to_poly(node.body, p)
        out: Poly = {}
        for k in range(p):
            sign = -1 if node.alternating and k % 2 else 1
            for mk, c in body.items():
                r = rotate(mk, k, p)
                out[r] = out.get(r, 0) + sign * c
        return clean(out)
    if isinstance(node, BinOp):
        a = to_poly(node.left, p)
        if node.op == "/":
            den = coef_to_sympy(node.right)
            return clean(pscale(a, 1 / den))
        b = to_poly(node.right, p)
        if node.op == "+":
            return clean(padd(a, b))
        if node.op == "-":
            return clean(padd(a, b, -1))
        return clean(pmul(a, b))
    raise AlgebraError(f"unexpected node {node!r}")


def poly_degrees(poly: Poly) -> set[int]:
    return {mono_degree(k) for k in poly}


def substitute_coefs(poly: Poly, subs: dict) -> Poly:
    return clean({k: sp.sympify(c).subs(subs, simultaneous=True) for k, c in poly.items()})


def coefficient_content(poly: Poly) -> sp.Expr:
    """Common symbolic factor of all coefficients (1 when there is none)."""
    coeffs = list(poly.values())
    if not coeffs:
        return sp.Integer(1)
    try:
        g = reduce(sp.gcd, coeffs)
    except (sp.PolynomialError, TypeError, ValueError):
        return sp.Integer(1)
    if g == 0:
        return sp.Integer(1)
    return g


# ---------------------------------------------------------------- folding


def _mono_node(a: Monomial) -> Node:
    factors = []
    for kind, index, exp in a:
        if exp < 0:
            raise AlgebraError("cannot render a negative power")
        f = Func(kind, index)
        factors.append(f if exp == 1 else Pow(f, exp))
    return reduce(mul, factors) if factors else ONE


def _common(monos: list[Monomial]) -> Monomial:
    shared = None
    for a in monos:
        d = {(k, i): e for k, i, e in a}
        shared = d if shared is None else {
            key: min(e, d[key]) for key, e in shared.items() if key in d
        }
    return mono((k, i, e) for (k, i), e in (shared or {}).items())


def _sum_node(monos: list[Monomial]) -> Node:
    """``monos`` summed, with their common monomial factor pulled out."""
    if len(monos) == 1:
        return _mono_node(monos[0])
    common = _common(monos)
    rest = [mono_mul(a, mono_pow(common, -1)) for a in monos]
    inner = reduce(lambda x, y: BinOp("+", x, y), (_mono_node(r) for r in rest))
    return inner if not common else mul(_mono_node(common), inner)


def _attach(coef: sp.Expr, body: Node) -> Node:
    if body == ONE:
        return sympy_to_coef(coef)
    if coef == 1:
        return body
    if coef == -1:
        return Neg(body)
    if coef.could_extract_minus_sign():
        return Neg(mul(sympy_to_coef(-coef), body))
    return mul(sympy_to_coef(coef), body)


def fold(poly: Poly, p: int) -> Node:
    """Rebuild an AST from ``poly``, recovering cyclic sums where possible."""
    poly = clean(poly)
    if not poly:
        return ZERO
    remaining = dict(poly)
    folded: list[tuple[int, str, sp.Expr, Monomial]] = []
    plain: list[tuple[int, sp.Expr, Monomial]] = []
    for a in sorted(poly, key=lambda k: (-mono_degree(k), mono_key(k))):
        if a not in remaining:
            continue
        c = remaining[a]
        orbit = [rotate(a, k, p) for k in range(p)]
        mode = None
        if a and len(set(orbit)) == p and all(o in remaining for o in orbit):
            if all(same(remaining[o], c) for o in orbit[1:]):
                mode = "cyc"
            elif p % 2 == 0 and all(
                same(remaining[o], c * (-1) ** k) for k, o in enumerate(orbit) if k
            ):
                mode = "acyc"
        if mode is None:
            plain.append((mono_degree(a), c, a))
            del remaining[a]
            continue
        r = min(range(p), key=lambda k: mono_key(orbit[k]))
        coef = c * (-1) ** r if mode == "acyc" else c
        folded.append((mono_degree(a), mode, coef, orbit[r]))
        for o in orbit:
            del remaining[o]

    terms: list[tuple] = []
    for deg, mode, coef, rep in folded:
        for t in terms:
            if t[0] == deg and t[1] == mode and same(t[2], coef):
                t[3].append(rep)
                break
        else:
            terms.append([deg, mode, coef, [rep]])
    for deg, coef, a in plain:
        for t in terms:
            if t[0] == deg and t[1] == "plain" and same(t[2], coef):
                t[3].append(a)
                break
        else:
            terms.append([deg, "plain", coef, [a]])
    order = {"cyc": 0, "acyc": 1, "plain": 2}
    terms.sort(key=lambda t: (-t[0], order[t[1]]))

    out = None
    for deg, mode, coef, monos in terms:
        body = _sum_node(monos)
        if mode != "plain":
            body = Cyc(body, mode == "acyc")
        node = _attach(coef, body)
        if out is None:
            out = node
        elif isinstance(node, Neg):
            out = BinOp("-", out, node.operand)
        else:
            out = BinOp("+", out, node)
    return out


def fold_linear(poly: Poly, p: int) -> Node:
    """Like ``fold`` but keeps each unknown constant in its own group.

    Coefficients such as ``A + q - 1`` are split into ``A`` and ``q - 1``
    parts so the result stays linear in the unknowns term by term.
    """
    poly = clean(poly)
    unknown_syms = sorted(
        {s for c in poly.values() for s in c.free_symbols if s in _SP_TO_UNKNOWN},
        key=str,
    )
    parts: list[Poly] = []
    rest = dict(poly)
    for u in unknown_syms:
        part = {}
        for k, c in rest.items():
            cu = sp.expand(c).coeff(u)
            if cu != 0:
                part[k] = cu * u
        rest = clean(padd(rest, part, -1))
        if part:
            parts.append(part)
    out = fold(rest, p) if rest else None
    for part in parts:
        node = fold(part, p)
        if out is None:
            out = node
        elif isinstance(node, Neg):
            out = BinOp("-", out, node.operand)
        else:
            out = BinOp("+", out, node)
    return ZERO if out is None else out


def split_top(poly: Poly) -> tuple[Poly, Poly]:
    """Split ``poly = 0`` into ``top == rest`` with a normalised leading term.

    ``top`` holds the monomials of maximal degree, ``rest`` the negated
    remainder.  Both sides are divided by the coefficient of the leading
    top monomial, so that monomial appears with coefficient 1.
    """
    poly = clean(poly)
    if not poly:
        raise AlgebraError("identity reduced to 0 == 0")
    deg = max(mono_degree(k) for k in poly)
    top = {k: c for k, c in poly.items() if mono_degree(k) == deg}
    g = top[min(top, key=mono_key)]
    lhs = clean({k: sp.simplify(c / g) for k, c in top.items()})
    rhs = clean({k: sp.simplify(-c / g) for k, c in poly.items() if mono_degree(k) != deg})
    return lhs, rhs


def reduce_by(poly: Poly, relations: list[tuple[Monomial, sp.Expr]]) -> Poly:
    """Rewrite every occurrence of a relation monomial by its value.

    Each relation ``(mono, value)`` stands for ``mono == value``; monomials
    divisible by ``mono`` are divided by it and scaled by ``value`` until no
    relation applies.
    """
    def divides(a: Monomial, b: Monomial) -> bool:
        eb = {(k, i): e for k, i, e in b}
        return all(eb.get((k, i), 0) >= e for k, i, e in a)

    poly = clean(poly)
    changed = True
    while changed:
        changed = False
        out: Poly = {}
        for k, c in poly.items():
            for rel, value in relations:
                if divides(rel, k):
                    k2 = mono_mul(k, mono_pow(rel, -1))
                    out[k2] = out.get(k2, 0) + c * value
                    changed = True
                    break
            else:
                out[k] = out.get(k, 0) + c
        poly = clean(out)
    return poly


def translate_poly(poly: Poly, p: int) -> Poly:
    """Rewrite ``poly = 0`` at parameter 1-m as an identity on the next lattice.

    Coefficients take m -> 1-m (q, t swap with q', t'); each lattice function
    is replaced through sn = i C/(k' S), cn = D/(k' S), dn = 1/S with
    k' = sqrt(1-m), and the result is multiplied by the smallest power of
    the cyclically symmetric product S_1...S_p that clears denominators.
    """
    subs = {M: 1 - M, Q: QC, QC: Q, T: TC, TC: T}
    kprime = sp.sqrt(1 - M)
    out: Poly = {}
    for k, c in poly.items():
        coef = sp.sympify(c).subs(subs, simultaneous=True)
        factors = []
        for kind, index, exp in k:
            base = kind.lstrip("t")
            tilde = kind.startswith("t")
            S = ("ts" if tilde else "s", index)
            if base == "s":
                coef *= (sp.I / kprime) ** exp
                factors += [(("tc" if tilde else "c"), index, exp), (*S, -exp)]
            elif base == "c":
                coef *= (1 / kprime) ** exp
                factors += [(("td" if tilde else "d"), index, exp), (*S, -exp)]
            else:
                factors.append((*S, -exp))
        key = mono(factors)
        out[key] = out.get(key, 0) + coef
    out = clean(out)
    need: dict[tuple[str, int], int] = {}
    for k in out:
        for kind, index, exp in k:
            if kind in ("s", "ts") and exp < 0:
                need[(kind, index)] = max(need.get((kind, index), 0), -exp)
    if not need:
        return out
    e = max(need.values())
    kinds = {kind for kind, _ in need}
    clear = mono((kind, i, e) for kind in kinds for i in range(1, p + 1))
    return clean({mono_mul(k, clear): c for k, c in out.items()})
