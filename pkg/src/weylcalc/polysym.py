"""Exact polynomial symbols and the terminating Moyal expansion.

Coefficients are Gaussian rationals p + q i with p, q in Q, so the # product
of polynomial symbols is computed without rounding.
"""
from __future__ import annotations

from fractions import Fraction
from math import comb, factorial
from typing import Iterable

import numpy as np


class GaussRational:
    """Complex number with exact rational real and imaginary parts."""

    __slots__ = ("re", "im")

    def __init__(self, re=0, im=0):
        self.re = Fraction(re)
        self.im = Fraction(im)

    @classmethod
    def coerce(cls, v) -> "GaussRational":
        if isinstance(v, GaussRational):
            return v
        if isinstance(v, complex):
            return cls(Fraction(v.real), Fraction(v.imag))
        return cls(v, 0)

    def __add__(self, o):
        o = GaussRational.coerce(o)
        return GaussRational(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __neg__(self):
        return GaussRational(-self.re, -self.im)

    def __sub__(self, o):
        return self + (-GaussRational.coerce(o))

    def __rsub__(self, o):
        return GaussRational.coerce(o) - self

    def __mul__(self, o):
        o = GaussRational.coerce(o)
        return GaussRational(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)

    __rmul__ = __mul__

    def conjugate(self):
        return GaussRational(self.re, -self.im)

    def __eq__(self, o):
        try:
            o = GaussRational.coerce(o)
        except (TypeError, ValueError):
            return NotImplemented
        return self.re == o.re and self.im == o.im

    def __hash__(self):
        return hash((self.re, self.im))

    def __bool__(self):
        return bool(self.re) or bool(self.im)

    def __complex__(self):
        return complex(float(self.re), float(self.im))

    def __repr__(self):
        return f"({self.re}+{self.im}i)"


I_UNIT = GaussRational(0, 1)


def _zero_block(d):
    return tuple(tuple(GaussRational() for _ in range(d)) for _ in range(d))


def _as_block(c, d):
    """Scalar -> c I; nested sequence -> d x d block of GaussRationals."""
    if isinstance(c, (int, Fraction, complex, GaussRational, float)):
        c = GaussRational.coerce(c)
        return tuple(tuple(c if i == j else GaussRational() for j in range(d)) for i in range(d))
    rows = tuple(tuple(GaussRational.coerce(v) for v in row) for row in c)
    if len(rows) != d or any(len(r) != d for r in rows):
        raise ValueError(f"coefficient block is not {d}x{d}")
    return rows


def _bmul(A, B):
    d = len(A)
    return tuple(tuple(sum((A[i][k] * B[k][j] for k in range(d)), GaussRational())
                       for j in range(d)) for i in range(d))


def _badd(A, B):
    return tuple(tuple(a + b for a, b in zip(ra, rb)) for ra, rb in zip(A, B))


def _bscale(c, A):
    return tuple(tuple(c * a for a in r) for r in A)


def _bnonzero(A):
    return any(bool(a) for r in A for a in r)


class PolySymbol:
    """Finite sum of coefficient blocks times x^alpha xi^beta (n = 1).

    ``terms`` maps (alpha, beta) to a d x d block of GaussRationals; zero
    blocks are dropped so equality is structural.
    """

    def __init__(self, terms: dict | None = None, d: int = 1):
        self.d = d
        clean = {}
        for (a, b), c in (terms or {}).items():
            if a < 0 or b < 0:
                raise ValueError("exponents must be non-negative")
            blk = _as_block(c, d)
            if _bnonzero(blk):
                clean[(int(a), int(b))] = blk
        self.terms = clean

    # construction helpers
    @classmethod
    def const(cls, c, d=1):
        return cls({(0, 0): c}, d)

    @classmethod
    def x(cls, d=1):
        return cls({(1, 0): 1}, d)

    @classmethod
    def xi(cls, d=1):
        return cls({(0, 1): 1}, d)

    @classmethod
    def monomial(cls, a, b, c=1, d=1):
        return cls({(a, b): c}, d)

    @property
    def degree(self) -> int:
        return max((a + b for a, b in self.terms), default=0)

    def _check(self, o):
        if self.d != o.d:
            raise ValueError("fiber dimensions differ")

    def _lift(self, o):
        return o if isinstance(o, PolySymbol) else PolySymbol.const(o, self.d)

    def __add__(self, o):
        o = self._lift(o)
        self._check(o)
        t = dict(self.terms)
        for k, v in o.terms.items():
            t[k] = _badd(t[k], v) if k in t else v
        return PolySymbol(t, self.d)

    __radd__ = __add__

    def __neg__(self):
        return PolySymbol({k: _bscale(GaussRational(-1), v) for k, v in self.terms.items()}, self.d)

    def __sub__(self, o):
        return self + (-self._lift(o))

    def __rsub__(self, o):
        return self._lift(o) - self

    def scale(self, c) -> "PolySymbol":
        c = GaussRational.coerce(c)
        return PolySymbol({k: _bscale(c, v) for k, v in self.terms.items()}, self.d)

    def __mul__(self, o):
        """Pointwise (commutative in X, ordered in the fiber) product."""
        if not isinstance(o, PolySymbol):
            return self.scale(o)
        self._check(o)
        t: dict = {}
        for (a1, b1), c1 in self.terms.items():
            for (a2, b2), c2 in o.terms.items():
                k = (a1 + a2, b1 + b2)
                p = _bmul(c1, c2)
                t[k] = _badd(t[k], p) if k in t else p
        return PolySymbol(t, self.d)

    def __rmul__(self, c):
        return self.scale(c)

    def __eq__(self, o):
        if not isinstance(o, PolySymbol):
            o = PolySymbol.const(o, self.d)
        return self.d == o.d and self.terms == o.terms

    def __hash__(self):
        return hash((self.d, tuple(sorted(self.terms.items()))))

    def diff(self, jx: int = 0, jxi: int = 0) -> "PolySymbol":
        """d^jx/dx^jx d^jxi/dxi^jxi."""
        t = {}
        for (a, b), c in self.terms.items():
            if a >= jx and b >= jxi:
                f = (factorial(a) // factorial(a - jx)) * (factorial(b) // factorial(b - jxi))
                t[(a - jx, b - jxi)] = _bscale(GaussRational(f), c)
        return PolySymbol(t, self.d)

    def adjoint(self) -> "PolySymbol":
        d = self.d
        return PolySymbol({k: tuple(tuple(v[j][i].conjugate() for j in range(d)) for i in range(d))
                           for k, v in self.terms.items()}, d)

    def evaluate(self, x, xi) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        shape = np.broadcast(x, xi).shape
        out = np.zeros(shape + (self.d, self.d), dtype=complex)
        for (a, b), c in self.terms.items():
            C = np.array([[complex(v) for v in r] for r in c])
            out += (x ** a * xi ** b)[..., None, None] * C
        return out

    def __repr__(self):
        parts = []
        for (a, b), c in sorted(self.terms.items()):
            coef = c[0][0] if self.d == 1 else [list(r) for r in c]
            parts.append(f"{coef}*x^{a}*xi^{b}")
        return " + ".join(parts) or "0"


def poisson_bracket(a: PolySymbol, b: PolySymbol) -> PolySymbol:
    """{a, b} = d_x a d_xi b - d_xi a d_x b (fiber order preserved).

    With this sign a # b = ab + (i/2){a, b} + O(degree - 4), e.g. {x, xi} = 1.
    """
    return a.diff(1, 0) * b.diff(0, 1) - a.diff(0, 1) * b.diff(1, 0)


def moyal_poly(a: PolySymbol, b: PolySymbol) -> PolySymbol:
    """Exact a # b = sum_k (i/2)^k / k! (d_x^(1) d_xi^(2) - d_xi^(1) d_x^(2))^k (a (x) b).

    The expansion terminates at k = deg a + deg b.
    """
    a._check(b)
    out = PolySymbol({}, a.d)
    half_i = GaussRational(0, Fraction(1, 2))
    pref = GaussRational(1)
    for k in range(min(a.degree, b.degree) + 1):
        if k:
            pref = pref * half_i * GaussRational(Fraction(1, k))
        for j in range(k + 1):
            # j factors of d_x^(1) d_xi^(2), k - j of -d_xi^(1) d_x^(2)
            sign = -1 if (k - j) % 2 else 1
            c = pref * GaussRational(sign * comb(k, j))
            term = a.diff(j, k - j) * b.diff(k - j, j)
            if term.terms:
                out = out + term.scale(c)
    return out


def moyal_chain(factors: Iterable[PolySymbol]) -> PolySymbol:
    it = iter(factors)
    acc = next(it)
    for f in it:
        acc = moyal_poly(acc, f)
    return acc
