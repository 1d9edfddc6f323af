"""Numerical verification, constant fitting and transformations of identities.

Every lattice function is evaluated in extended precision.  A ``SampleGrid``
fixes the m values and the x samples; ``verify`` checks ``lhs - rhs`` over
the grid, fitting any constant without a closed form by least squares, and
``differentiate`` / ``imaginary_translate`` / ``multiply`` build new
identities from old ones.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from . import algebra
from .elliptic import (
    CLD, LD, DivergenceError, PoleError, _K_ld, as_modulus, jacobi_complex_ld,
    jacobi_ld, special_values_ld,
)
from .expr import (
    ONE, ZERO, BinOp, Cyc, Func, IdentitySpec, Neg, Node, Num, Pow, Sqrt, Sym,
    Unknown, LATTICES, TILDE_KINDS, build_spec, degree_rule_ok, funcs, mul,
)

X_OFFSET = 0.2971215073
DEFAULT_X_COUNT = 32
DEFAULT_M_GRID = (1e-8,) + tuple(round(0.05 * k, 2) for k in range(1, 20)) + (1 - 1e-6,)
RESIDUAL_TOL = 1e-9
CONSTANT_RTOL = 1e-8
COND_LIMIT = 1e10
# a block whose values never exceed this is lost in rounding noise
BLOCK_FLOOR = 1e-9
DIV_TOL = 1e-13
RESAMPLE_SHIFT = 0.0731
MAX_RESAMPLES = 3


class EvaluationError(ArithmeticError):
    """Coefficient division by ~0, or an unknown without a value."""


class RankDeficientError(ArithmeticError):
    """The rhs blocks are numerically dependent at this m."""

    def __init__(self, m: float, cond: float, reason: str = ""):
        reason = reason or f"condition {cond:.3g}"
        super().__init__(f"rank-deficient design at m={m!r} ({reason})")
        self.m = m
        self.cond = cond
        self.reason = reason


@dataclass(frozen=True)
class SampleGrid:
    m_values: tuple = DEFAULT_M_GRID
    x_count: int = DEFAULT_X_COUNT
    x_offset: float = X_OFFSET

    def __post_init__(self):
        if self.x_count < 8:
            raise ValueError("x_count must be at least 8")
        object.__setattr__(self, "m_values", tuple(as_modulus(m) for m in self.m_values))

    @staticmethod
    def period_multiplier(spec: IdentitySpec) -> int:
        """1 samples x over [0, 2K), 2 over [0, 4K)."""
        return 1 if spec.spacing == "half" and spec.lattice == "real" else 2

    def xs(self, m: float, multiplier: int, offset: float | None = None) -> np.ndarray:
        off = self.x_offset if offset is None else offset
        period = 2 * multiplier * _K_ld(m)
        j = np.arange(self.x_count, dtype=LD)
        return LD(off) + j * period / self.x_count


# ---------------------------------------------------------------- evaluation


class _Coefs:
    """Values of m, q, t, q', t', i at one m (computed lazily)."""

    def __init__(self, m: float):
        self.m = m
        self._cache: dict[str, object] = {}

    def __getitem__(self, name: str):
        if name not in self._cache:
            if name == "m":
                val = LD(self.m)
            elif name == "i":
                val = CLD(1j)
            elif name in ("q", "t"):
                q, t = special_values_ld(self.m)
                self._cache["q"], self._cache["t"] = q, t
                return self._cache[name]
            else:
                qc, tc = special_values_ld(1.0 - self.m)
                self._cache["q'"] = qc
                # t' = m^(1/4) exactly
                self._cache["t'"] = LD(self.m) ** LD(0.25)
                return self._cache[name]
            self._cache[name] = val
        return self._cache[name]


def _lattice(p: int, spacing: str, lattice: str, xs: np.ndarray, m: float) -> dict:
    """sn, cn, dn at the p lattice points for every x; arrays of shape (p, N)."""
    frac = LD(2 if spacing == "half" else 4) / p
    j = np.arange(p, dtype=LD)[:, None]
    turns = LATTICES.index(lattice)
    if turns % 2 == 0:
        sign = 1 if turns == 0 else -1
        args = xs[None, :] + sign * j * frac * _K_ld(m)
        s, c, d = jacobi_ld(args, m)
    else:
        sign = 1 if turns == 1 else -1
        x = np.broadcast_to(xs[None, :], (p, xs.size))
        y = np.broadcast_to(sign * j * frac * _K_ld(m, comp=True), (p, xs.size))
        s, c, d = jacobi_complex_ld(x, y, m)
    return {"s": s, "c": c, "d": d, "ts": s, "tc": c, "td": d}


class _Evaluator:
    def __init__(self, p: int, values: dict, coefs: _Coefs, assignment: dict):
        self.p = p
        self.values = values
        self.coefs = coefs
        self.assignment = assignment

    def __call__(self, node: Node, shift: int = 0):
        if isinstance(node, Func):
            return self.values[node.kind][(node.index - 1 + shift) % self.p]
        if isinstance(node, Num):
            return LD(node.value)
        if isinstance(node, Sym):
            return self.coefs[node.name]
        if isinstance(node, Unknown):
            try:
                return self.assignment[node.name]
            except KeyError:
                raise EvaluationError(f"unknown {node.name} has no value") from None
        if isinstance(node, Neg):
            return -self(node.operand, shift)
        if isinstance(node, Pow):
            return self(node.base, shift) ** node.exp
        if isinstance(node, Sqrt):
            arg = self(node.arg, shift)
            if np.iscomplexobj(arg) or arg < 0:
                return np.sqrt(CLD(arg))
            return np.sqrt(arg)
        if isinstance(node, Cyc):
            out = 0
            for k in range(self.p):
                term = self(node.body, shift + k)
                out = out - term if node.alternating and k % 2 else out + term
            return out
        if isinstance(node, BinOp):
            a = self(node.left, shift)
            b = self(node.right, shift)
            if node.op == "+":
                return a + b
            if node.op == "-":
                return a - b
            if node.op == "*":
                return a * b
            if np.any(np.abs(b) < DIV_TOL):
                raise EvaluationError("division by a coefficient that is ~0")
            return a / b
        raise EvaluationError(f"cannot evaluate {node!r}")


def _spacing_of(node: Node) -> str:
    return "full" if any(f.kind in TILDE_KINDS for f in funcs(node)) else "half"


def _to_values(arr, n: int):
    arr = np.asarray(arr)
    return np.broadcast_to(arr, (n,)) if arr.ndim == 0 else arr


def evaluate(e: Node, x, m, p: int, assignment: dict | None = None,
             lattice: str = "real"):
    """Value of ``e`` at the lattice based at ``x`` (scalar or array)."""
    m = as_modulus(m)
    if p < 2:
        raise ValueError("p must be >= 2")
    xs = np.atleast_1d(np.asarray(x, dtype=LD))
    values = _lattice(p, _spacing_of(e), lattice, xs, m)
    raw = _to_values(_Evaluator(p, values, _Coefs(m), dict(assignment or {}))(e), xs.size)
    out = raw.astype(np.complex128 if np.iscomplexobj(raw) else np.float64)
    if np.iscomplexobj(out) and np.all(out.imag == 0):
        out = out.real
    return out[0].item() if np.ndim(x) == 0 else out


# ----------------------------------------------------------------- fitting


@dataclass(frozen=True)
class FitResult:
    """Least-squares solution at one m."""

    m: float
    values: dict
    residual: float
    cond: float
    x0_values: dict = field(default_factory=dict)


def _system(spec: IdentitySpec, xs: np.ndarray, m: float, assignment: dict | None = None):
    """lhs values and each block's values at the sample points."""
    values = _lattice(spec.p, spec.spacing, spec.lattice, xs, m)
    ev = _Evaluator(spec.p, values, _Coefs(m), dict(assignment or {}))
    n = xs.size
    lhs = _to_values(ev(spec.lhs), n)
    blocks = {b.unknown: _to_values(ev(b.body), n) for b in spec.blocks}
    return lhs, blocks, ev


def _known_values(spec: IdentitySpec, ev: _Evaluator, names) -> dict:
    return {u: ev(spec.constants_known[u]) for u in names}


def _solve(lhs, cols: dict, m: float, strict: bool):
    names = list(cols)
    A = np.stack([cols[u] for u in names], axis=1)
    complex_ = np.iscomplexobj(A) or np.iscomplexobj(lhs)
    dtype = np.complex128 if complex_ else np.float64
    A64, b64 = A.astype(dtype), np.asarray(lhs).astype(dtype)
    norms = np.linalg.norm(A64, axis=0)
    if np.any(norms == 0):
        cond = math.inf
    else:
        cond = float(np.linalg.cond(A64 / norms))
    if strict:
        tiny = [u for u, col in zip(names, A64.T) if np.max(np.abs(col)) < BLOCK_FLOOR]
        if tiny:
            raise RankDeficientError(m, cond, f"block {','.join(tiny)} is ~0")
        if cond > COND_LIMIT:
            raise RankDeficientError(m, cond)
    sol, *_ = np.linalg.lstsq(A64, b64, rcond=None)
    return dict(zip(names, sol)), cond


def _as_number(v):
    v = complex(v)
    if abs(v.imag) <= 1e-12 * max(1.0, abs(v.real)):
        return float(v.real)
    return v


def _residual(lhs, blocks: dict, values: dict) -> float:
    r = np.array(lhs, copy=True)
    r = r.astype(CLD) if any(np.iscomplexobj(np.asarray(v)) for v in values.values()) else r
    for u, col in blocks.items():
        r = r - _cast(values[u]) * col
    return float(np.max(np.abs(r))) if r.size else 0.0


def _cast(v):
    if isinstance(v, (complex, np.complexfloating)):
        return CLD(v)
    return LD(v) if not isinstance(v, np.ndarray) else v


def fit_at(spec: IdentitySpec, m: float, grid: SampleGrid | None = None,
           names=None, strict: bool = True, offset: float | None = None) -> FitResult:
    """Fit the unknowns ``names`` (default: all) at one m.

    The remaining unknowns take their closed-form values.  With ``strict``
    a condition number above ``COND_LIMIT`` raises RankDeficientError;
    otherwise the minimum-norm solution is returned.
    """
    grid = grid or SampleGrid()
    names = tuple(spec.unknowns if names is None else names)
    if not names:
        raise ValueError(f"{spec.name}: nothing to fit")
    if grid.x_count < 4 * len(names):
        raise ValueError(f"{spec.name}: need at least {4 * len(names)} x samples")
    m = as_modulus(m)
    xs = grid.xs(m, grid.period_multiplier(spec), offset)
    lhs, blocks, ev = _system(spec, xs, m)
    fixed = _known_values(spec, ev, [u for u in spec.unknowns if u not in names])
    target = lhs
    for u, val in fixed.items():
        target = target - val * blocks[u]
    sol, cond = _solve(target, {u: blocks[u] for u in names}, m, strict)
    values = {u: _as_number(v) for u, v in sol.items()}
    allv = dict(fixed)
    allv.update(values)
    residual = _residual(lhs, blocks, allv)
    x0 = {}
    if len(spec.unknowns) == 1 and spec.lattice == "real":
        x0 = _x0_value(spec, m)
    return FitResult(m, values, residual, cond, x0)


def _x0_value(spec: IdentitySpec, m: float) -> dict:
    """The single constant read off at x = 0, as a cross-check on the fit."""
    try:
        lhs, blocks, _ = _system(spec, np.zeros(1, dtype=LD), m)
    except (EvaluationError, PoleError):
        return {}
    (u, col), = blocks.items()
    if abs(col[0]) < 1e-8:
        return {}
    return {u: _as_number(lhs[0] / col[0])}


def fit_constants(spec: IdentitySpec, grid: SampleGrid | None = None) -> dict:
    """Per-m least-squares values of every unknown, ordered like the grid."""
    grid = grid or SampleGrid()
    fits = [fit_at(spec, m, grid) for m in grid.m_values]
    return {u: tuple(f.values[u] for f in fits) for u in spec.unknowns}


# ------------------------------------------------------------- verification


@dataclass(frozen=True)
class MRecord:
    m: float
    constants: dict
    residual: float
    tol: float
    verdict: bool
    fitted: dict | None = None
    constants_ok: bool | None = None
    note: str = ""


@dataclass(frozen=True)
class VerificationReport:
    name: str
    eq: str
    p: int
    records: tuple
    degree_ok: bool = True

    @property
    def verdict(self) -> bool:
        return self.degree_ok and all(r.verdict for r in self.records)

    @property
    def max_residual(self) -> float:
        return max(r.residual for r in self.records)


def _close(a, b, rtol: float) -> bool:
    return abs(complex(a) - complex(b)) <= rtol * abs(complex(b))


def _verify_at(spec: IdentitySpec, m: float, grid: SampleGrid, tol: float,
               const_tol: float, offset: float) -> MRecord:
    xs = grid.xs(m, grid.period_multiplier(spec), offset)
    lhs, blocks, ev = _system(spec, xs, m)
    notes = []
    to_fit = list(spec.to_fit)
    known = {}
    for u in spec.unknowns:
        if u not in spec.constants_known:
            continue
        try:
            known[u] = _as_number(ev(spec.constants_known[u]))
        except EvaluationError as exc:
            # closed form not evaluable here: fit it and skip the match
            notes.append(f"closed form for {u} not evaluable ({exc}); fitted instead")
            to_fit.append(u)
    used = dict(known)
    if to_fit:
        target = lhs
        for u, val in known.items():
            target = target - _cast(val) * blocks[u]
        try:
            sol, _ = _solve(target, {u: blocks[u] for u in to_fit}, m, True)
        except RankDeficientError as exc:
            notes.append(f"rank-deficient fit ({exc.reason}), min-norm solution")
            sol, _ = _solve(target, {u: blocks[u] for u in to_fit}, m, False)
        used.update({u: _as_number(v) for u, v in sol.items()})
    residual = _residual(lhs, blocks, used)
    fitted, constants_ok = None, None
    if known:
        try:
            sol, _ = _solve(lhs, blocks, m, True)
            fitted = {u: _as_number(v) for u, v in sol.items()}
            constants_ok = all(_close(fitted[u], known[u], const_tol) for u in known)
        except RankDeficientError as exc:
            notes.append(f"constant match skipped ({exc.reason})")
    verdict = residual <= tol and constants_ok is not False
    return MRecord(m, used, residual, tol, verdict, fitted, constants_ok, "; ".join(notes))


def verify(spec: IdentitySpec, grid: SampleGrid | None = None, tol: float = RESIDUAL_TOL,
           const_tol: float = CONSTANT_RTOL) -> VerificationReport:
    """Check ``spec`` at every grid m; failures are reported, not raised."""
    grid = grid or SampleGrid()
    degree_ok = degree_rule_ok(spec)
    records = []
    for m in grid.m_values:
        offset = grid.x_offset
        for attempt in range(MAX_RESAMPLES + 1):
            try:
                rec = _verify_at(spec, m, grid, tol, const_tol, offset)
                if attempt:
                    rec = _with_note(rec, f"resampled {attempt}x near a pole")
                break
            except PoleError as exc:
                offset += RESAMPLE_SHIFT
                last = exc
        else:
            rec = MRecord(m, {}, math.inf, tol, False, note=f"pole: {last}")
        records.append(rec)
    return VerificationReport(spec.name, spec.eq, spec.p, tuple(records), degree_ok)


def _with_note(rec: MRecord, text: str) -> MRecord:
    note = f"{rec.note}; {text}" if rec.note else text
    return MRecord(rec.m, rec.constants, rec.residual, rec.tol, rec.verdict,
                   rec.fitted, rec.constants_ok, note)


# ----------------------------------------------------------- differentiation


def _simplify(node: Node) -> Node:
    if isinstance(node, BinOp):
        a, b = _simplify(node.left), _simplify(node.right)
        if node.op == "*":
            if a == ZERO or b == ZERO:
                return ZERO
            if a == ONE:
                return b
            if b == ONE:
                return a
        elif node.op == "/":
            if a == ZERO:
                return ZERO
        elif node.op == "+":
            if a == ZERO:
                return b
            if b == ZERO:
                return a
            if isinstance(b, Neg):
                return BinOp("-", a, b.operand)
        else:
            if b == ZERO:
                return a
            if a == ZERO:
                return Neg(b)
            if isinstance(b, Neg):
                return BinOp("+", a, b.operand)
        return BinOp(node.op, a, b)
    if isinstance(node, Neg):
        inner = _simplify(node.operand)
        if inner == ZERO:
            return ZERO
        if isinstance(inner, Neg):
            return inner.operand
        return Neg(inner)
    if isinstance(node, Pow):
        base = _simplify(node.base)
        return base if node.exp == 1 else Pow(base, node.exp)
    if isinstance(node, Cyc):
        body = _simplify(node.body)
        return ZERO if body == ZERO else Cyc(body, node.alternating)
    return node


def _dfunc(f: Func) -> Node:
    tilde = "t" if f.kind.startswith("t") else ""
    s, c, d = (Func(tilde + k, f.index) for k in "scd")
    base = f.kind[-1]
    if base == "s":
        return mul(c, d)
    if base == "c":
        return Neg(mul(s, d))
    return Neg(mul(mul(Sym("m"), s), c))


def derivative(node: Node) -> Node:
    """d/dx of an expression by the product rule (constants give 0)."""
    if isinstance(node, Func):
        return _dfunc(node)
    if isinstance(node, (Num, Sym, Unknown, Sqrt)):
        return ZERO
    if isinstance(node, Neg):
        return _simplify(Neg(derivative(node.operand)))
    if isinstance(node, Cyc):
        return _simplify(Cyc(derivative(node.body), node.alternating))
    if isinstance(node, Pow):
        inner = node.base if node.exp == 2 else Pow(node.base, node.exp - 1)
        return _simplify(mul(mul(Num(node.exp), inner), derivative(node.base)))
    if isinstance(node, BinOp):
        if node.op in "+-":
            return _simplify(BinOp(node.op, derivative(node.left), derivative(node.right)))
        if node.op == "/":
            return _simplify(BinOp("/", derivative(node.left), node.right))
        return _simplify(BinOp(
            "+", mul(derivative(node.left), node.right), mul(node.left, derivative(node.right))))
    raise EvaluationError(f"cannot differentiate {node!r}")


def differentiate(spec: IdentitySpec) -> IdentitySpec:
    """The rank r+1 identity obtained by d/dx of both sides.

    Closed-form constants are substituted before differentiating, so the new
    rhs blocks carry their own closed forms; fitted unknowns stay unknown.
    """
    lhs = derivative(spec.lhs)
    rhs = derivative(spec.resolved_rhs())
    if lhs == ZERO:
        raise EvaluationError(f"{spec.name}: lhs derivative vanishes identically")
    return build_spec(f"{spec.name}'", spec.eq, spec.p, lhs, rhs,
                      lattice=spec.lattice, table=spec.table)


# ------------------------------------------------------- symbolic rewrites


def _poly(spec: IdentitySpec) -> algebra.Poly:
    """lhs - rhs as an expanded polynomial, closed forms substituted."""
    lhs = algebra.to_poly(spec.lhs, spec.p)
    rhs = algebra.to_poly(spec.resolved_rhs(), spec.p)
    return algebra.clean(algebra.padd(lhs, rhs, -1))


def _from_poly(spec: IdentitySpec, poly: algebra.Poly, *, name: str,
               lattice: str | None = None) -> IdentitySpec:
    top, rest = algebra.split_top(poly)
    lhs = algebra.fold(top, spec.p)
    rhs = algebra.fold_linear(rest, spec.p) if rest else ZERO
    return build_spec(name, spec.eq, spec.p, lhs, rhs,
                      lattice=lattice or spec.lattice, table=spec.table)


def normalize(spec: IdentitySpec) -> IdentitySpec:
    """Canonical display form: top-degree part on the left, leading
    coefficient scaled to 1, cyclic sums refolded."""
    return _from_poly(spec, _poly(spec), name=spec.name)


def imaginary_translate(spec: IdentitySpec) -> IdentitySpec:
    """Move ``spec`` to the next lattice direction (real -> imag -> -real ...).

    m is replaced by 1-m and each function is rewritten through the
    imaginary transformation, so the lattice step picks up a factor i.
    """
    turns = (LATTICES.index(spec.lattice) + 1) % 4
    poly = algebra.translate_poly(_poly(spec), spec.p)
    return _from_poly(spec, poly, name=f"{spec.name}~", lattice=LATTICES[turns])


def multiply(spec: IdentitySpec, factor: Node) -> IdentitySpec:
    """Both sides times ``factor`` (closed-form constants substituted)."""
    lhs = mul(spec.lhs, factor)
    rhs = mul(spec.resolved_rhs(), factor)
    return build_spec(f"{spec.name}*", spec.eq, spec.p, lhs, rhs,
                      lattice=spec.lattice, table=spec.table)


def reduce_with(spec: IdentitySpec, relations: list[IdentitySpec]) -> IdentitySpec:
    """Substitute monomial relations ``mono == const`` into ``spec``.

    Every relation must have a single monomial on its lhs and a constant
    closed-form rhs; the reduced polynomial is renormalised.
    """
    rels = []
    for r in relations:
        lhs = algebra.to_poly(r.lhs, r.p)
        rhs = algebra.to_poly(r.resolved_rhs(), r.p)
        if len(lhs) != 1 or set(rhs) - {()}:
            raise ValueError(f"{r.name}: relation must read monomial == constant")
        (mono, c), = lhs.items()
        rels.append((mono, rhs.get((), 0) / c))
    poly = algebra.reduce_by(_poly(spec), rels)
    return _from_poly(spec, poly, name=spec.name)


def equivalent(a: IdentitySpec, b: IdentitySpec, m_values=(0.3, 0.7)) -> bool:
    """Whether ``a`` and ``b`` state the same relation up to a nonzero factor.

    Compared on expanded polynomials; the coefficients are evaluated at the
    given m values with unknowns set to fixed generic numbers.
    """
    if a.p != b.p or a.lattice != b.lattice:
        return False
    pa, pb = _poly(a), _poly(b)
    if set(pa) != set(pb):
        return False
    generic = {algebra._UNKNOWN_SP[u]: 0.37 + 0.11 * k
               for k, u in enumerate(algebra.UNKNOWNS)}
    keys = sorted(pa, key=algebra.mono_key)
    for m in m_values:
        q, t = (float(v) for v in special_values_ld(m))
        qc, tc = (float(v) for v in special_values_ld(1 - m))
        env = {algebra.M: m, algebra.Q: q, algebra.T: t, algebra.QC: qc, algebra.TC: tc}
        env.update(generic)
        va = [complex(sp.N(pa[k].subs(env))) for k in keys]
        vb = [complex(sp.N(pb[k].subs(env))) for k in keys]
        ratio = va[0] / vb[0]
        if any(abs(x - ratio * y) > 1e-10 * max(1.0, abs(x)) for x, y in zip(va, vb)):
            return False
    return True


__all__ = [
    "SampleGrid", "VerificationReport", "MRecord", "FitResult", "EvaluationError",
    "RankDeficientError", "DivergenceError", "evaluate", "fit_at", "fit_constants",
    "verify", "differentiate", "derivative", "normalize", "imaginary_translate",
    "multiply", "reduce_with", "equivalent", "DEFAULT_M_GRID", "RESIDUAL_TOL",
    "CONSTANT_RTOL",
]
