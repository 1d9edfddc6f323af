"""Jacobi elliptic functions sn, cn, dn and the complete integral K(m).

K(m) comes from the arithmetic-geometric mean; sn/cn/dn from the
descending Landen (AGM) recursion followed by the backward sweep over the
amplitudes.  Internally everything runs in ``numpy.longdouble`` (x87
extended precision on x86-64, 18-19 significant digits); the public
functions hand back ordinary floats / float64 arrays, while the identity
engine works with the extended-precision ``*_ld`` variants directly.

Real arguments only, plus the pure-imaginary and ``x + i*y`` evaluations
needed for the imaginary-period translation of identities.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

LD = np.longdouble
CLD = np.clongdouble
PI_LD = 4 * np.arctan(LD(1))

AGM_RTOL = 1e-15
AGM_MAX_ITER = 40
POLE_TOL = 1e-9


class EllipticError(ArithmeticError):
    """Base class for failures of the elliptic-function core."""


class DivergenceError(EllipticError):
    """K(m) requested where it diverges (m = 1, or K' at m = 0)."""


class PoleError(EllipticError):
    """Evaluation too close to a pole of sn/cn/dn."""


class ConsistencyError(EllipticError):
    """Two independent computations of the same quantity disagree."""


@dataclass(frozen=True)
class ModulusParam:
    """Elliptic parameter m, restricted to the closed interval [0, 1]."""

    m: float

    def __post_init__(self):
        m = float(self.m)
        if not math.isfinite(m) or m < 0.0 or m > 1.0:
            raise ValueError(f"elliptic parameter must lie in [0, 1], got {self.m!r}")
        object.__setattr__(self, "m", m)

    def __float__(self):
        return self.m


def as_modulus(m) -> float:
    if isinstance(m, ModulusParam):
        return m.m
    return ModulusParam(m).m


@dataclass(frozen=True)
class EllipticTriple:
    sn: float | np.ndarray
    cn: float | np.ndarray
    dn: float | np.ndarray

    def __iter__(self):
        return iter((self.sn, self.cn, self.dn))


@dataclass(frozen=True)
class QuarterPeriod:
    """K(m) together with lazy access to K' = K(1 - m)."""

    m: float
    K: float

    @property
    def Kprime(self) -> float:
        if self.m == 0.0:
            raise DivergenceError("K'(m) = K(1 - m) diverges at m = 0")
        return float(_K_ld(self.m, comp=True))


@dataclass(frozen=True)
class SpecialValues:
    """q = dn(2K/3, m) and t = dn(K/2, m) = (1 - m)**(1/4)."""

    m: float
    q: float
    t: float


def _params(m: float, comp: bool):
    """(parameter, complementary parameter) in extended precision.

    With ``comp`` the parameter is 1 - m; building it from m keeps the
    complement exact instead of rounding 1 - m to a float first.
    """
    m_ld = LD(m)
    return (LD(1) - m_ld, m_ld) if comp else (m_ld, LD(1) - m_ld)


@lru_cache(maxsize=4096)
def _agm_ladder(m: float, comp: bool = False) -> tuple[tuple, tuple]:
    """Return the AGM ladders (a_n, c_n) for a0 = 1, b0 = sqrt(1 - m)."""
    par, mc = _params(m, comp)
    a, b = LD(1), np.sqrt(mc)
    a_seq, c_seq = [a], [np.sqrt(par)]
    for _ in range(AGM_MAX_ITER):
        done = abs(a - b) <= AGM_RTOL * a
        a, b, c = (a + b) / 2, np.sqrt(a * b), (a - b) / 2
        a_seq.append(a)
        c_seq.append(c)
        # one extra step past the stopping test leaves c_N at ~1e-31
        if done:
            return tuple(a_seq), tuple(c_seq)
    raise ConsistencyError(f"AGM did not converge within {AGM_MAX_ITER} iterations (m={m!r})")


@lru_cache(maxsize=4096)
def _K_ld(m: float, comp: bool = False) -> np.longdouble:
    """K of the parameter m (or of 1 - m when ``comp``)."""
    if m == (0.0 if comp else 1.0):
        raise DivergenceError("K(m) diverges at m = 1")
    if m == (1.0 if comp else 0.0):
        return PI_LD / 2
    a_seq, _ = _agm_ladder(m, comp)
    return PI_LD / (2 * a_seq[-1])


def complete_K(m) -> QuarterPeriod:
    """Complete elliptic integral of the first kind, K(m), via the AGM.

    Raises DivergenceError at m = 1.  ``Kprime`` on the result evaluates
    K(1 - m) on demand and raises at m = 0.
    """
    m = as_modulus(m)
    return QuarterPeriod(m, float(_K_ld(m)))


def _landen(x: np.ndarray, m: float, comp: bool = False):
    """sn, cn, dn in extended precision for 0 < m < 1, x already reduced."""
    a_seq, c_seq = _agm_ladder(m, comp)
    n = len(a_seq) - 1
    phi = LD(2) ** n * a_seq[n] * x
    for k in range(n, 0, -1):
        phi = (phi + np.arcsin(c_seq[k] / a_seq[k] * np.sin(phi))) / 2
    sn, cn = np.sin(phi), np.cos(phi)
    # dn from cn keeps full absolute accuracy near the zeros of cn
    par, mc = _params(m, comp)
    dn = np.sqrt(mc + par * cn * cn)
    return sn, cn, dn


def jacobi_ld(x, m: float, comp: bool = False):
    """(sn, cn, dn) as longdouble arrays; ``m`` must already be validated.

    ``comp=True`` evaluates at parameter 1 - m.
    """
    x = np.asarray(x, dtype=LD)
    if not np.all(np.isfinite(x)):
        raise ValueError("argument must be finite")
    zero, one = (1.0, 0.0) if comp else (0.0, 1.0)
    if m == zero:
        return np.sin(x), np.cos(x), np.ones_like(x)
    if m == one:
        sech = 1 / np.cosh(x)
        return np.tanh(x), sech, sech
    period = 4 * _K_ld(m, comp)
    xr = x - period * np.round(x / period)
    return _landen(xr, m, comp)


def _out(v):
    v = np.asarray(v, dtype=np.float64)
    return float(v) if v.ndim == 0 else v


def jacobi(x, m) -> EllipticTriple:
    """sn(x|m), cn(x|m), dn(x|m) for real ``x`` (scalar or array).

    >>> t = jacobi(0.0, 0.5)
    >>> (t.sn, t.cn, t.dn)
    (0.0, 1.0, 1.0)
    """
    m = as_modulus(m)
    sn, cn, dn = jacobi_ld(x, m)
    return EllipticTriple(_out(sn), _out(cn), _out(dn))


@lru_cache(maxsize=4096)
def special_values_ld(m: float) -> tuple[np.longdouble, np.longdouble]:
    """(q, t) in extended precision, with the two t computations cross-checked."""
    if m == 1.0:
        raise DivergenceError("q and t need K(m), which diverges at m = 1")
    K = _K_ld(m)
    q = jacobi_ld(2 * K / 3, m)[2]
    t_closed = (LD(1) - LD(m)) ** LD(0.25)
    t_dn = jacobi_ld(K / 2, m)[2]
    if abs(t_closed - t_dn) > 1e-11:
        raise ConsistencyError(
            f"dn(K/2) = {float(t_dn)!r} disagrees with (1-m)^(1/4) = {float(t_closed)!r} at m={m!r}"
        )
    return LD(q), LD(t_closed)


def special_values(m) -> SpecialValues:
    m = as_modulus(m)
    q, t = special_values_ld(m)
    return SpecialValues(m, float(q), float(t))


def dn_addition(u: float, v: float, m) -> float:
    """dn(u + v) from the addition theorem."""
    m = as_modulus(m)
    su, cu, du = jacobi_ld(u, m)
    sv, cv, dv = jacobi_ld(v, m)
    den = 1 - m * su * su * sv * sv
    return float((du * dv - m * su * cu * sv * cv) / den)


def derivative_triple(x, m) -> tuple:
    """(sn', cn', dn') = (cn dn, -sn dn, -m sn cn), from a single evaluation."""
    m = as_modulus(m)
    sn, cn, dn = jacobi_ld(x, m)
    return _out(cn * dn), _out(-sn * dn), _out(-LD(m) * sn * cn)


def evaluate_imaginary(y, m) -> EllipticTriple:
    """Values at the purely imaginary point i*y.

    sn(iy|m) = i sn(y|1-m)/cn(y|1-m) is reported through its imaginary
    part; cn(iy|m) = 1/cn(y|1-m) and dn(iy|m) = dn(y|1-m)/cn(y|1-m) are real.
    """
    m = as_modulus(m)
    s1, c1, d1 = jacobi_ld(y, m, comp=True)
    if np.any(np.abs(c1) < POLE_TOL):
        raise PoleError(f"i*y too close to the pole at i*K'(m) (m={m!r})")
    return EllipticTriple(_out(s1 / c1), _out(1 / c1), _out(d1 / c1))


def jacobi_complex_ld(x, y, m: float, pole_tol: float = 1e-10):
    """(sn, cn, dn) at x + i*y as clongdouble arrays.

    The real triple at x is combined with the imaginary-axis triple at i*y
    through the addition theorem, with numerator and denominator multiplied
    through by cn(y|1-m)**2 so that i*K' itself is not a singular input.
    """
    s, c, d = jacobi_ld(x, m)
    s1, c1, d1 = jacobi_ld(y, m, comp=True)
    m_ld = LD(m)
    den = c1 * c1 + m_ld * s * s * s1 * s1
    # den / (c1^2 + m s1^2) lies in [sn(x)^2, 1] and is ~0 only near a pole
    if np.any(np.abs(den) < pole_tol * (c1 * c1 + m_ld * s1 * s1)):
        raise PoleError(f"x + i*y too close to a pole (m={m!r})")
    j = CLD(1j)
    sn = (s * d1 + j * c * d * s1 * c1) / den
    cn = (c * c1 - j * s * d * s1 * d1) / den
    dn = (d * c1 * d1 - j * m_ld * s * c * s1) / den
    return sn, cn, dn
