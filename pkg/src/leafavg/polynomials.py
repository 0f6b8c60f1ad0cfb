"""Sparse multivariate polynomial arithmetic with calculus and sphere moments.

A polynomial lives in ``R[x1, ..., x_d]`` where ``d`` is the ambient
dimension, and is stored as a map from exponent tuples to nonzero
coefficients.  Two scalar modes exist and never mix implicitly:

* ``"exact"``  -- coefficients are :class:`fractions.Fraction`; every ring
  identity holds on the nose, which is what makes the operator checks of the
  averaging pipeline decidable rather than approximate.
* ``"float"``  -- coefficients are Python floats; used by the Monte Carlo /
  least-squares pipelines.

Monomials are ordered graded-lexicographically (higher total degree first,
then lexicographically by exponent vector), and every listing, matrix or
report in the package inherits that fixed order.

Instances are immutable after construction and safe to share between
threads.  The only internal cache is the sphere moment table, whose fill is
idempotent.
"""

from __future__ import annotations

import math
import re
from fractions import Fraction
from types import MappingProxyType
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .errors import DimensionMismatch, PolynomialParseError, ScalarModeMismatch

EXACT = "exact"
FLOAT = "float"

ExponentVector = Tuple[int, ...]


def _coerce(value, mode: str):
    if mode == EXACT:
        if isinstance(value, float):
            raise ScalarModeMismatch(
                f"float coefficient {value!r} in exact mode; convert explicitly"
            )
        return Fraction(value)
    return float(value)


class Polynomial:
    """Immutable sparse polynomial in ``ambient_dim`` variables.

    ``terms`` maps exponent tuples (length ``ambient_dim``, non-negative
    entries) to nonzero coefficients.  Arithmetic between polynomials of
    different ambient dimension or scalar mode is rejected.
    """

    __slots__ = ("ambient_dim", "mode", "_terms")

    def __init__(self, ambient_dim: int, terms, mode: str = EXACT):
        if mode not in (EXACT, FLOAT):
            raise ValueError(f"unknown scalar mode {mode!r}")
        if ambient_dim < 1:
            raise ValueError("ambient_dim must be at least 1")
        clean: Dict[ExponentVector, object] = {}
        for expo, coeff in dict(terms).items():
            expo = tuple(int(e) for e in expo)
            if len(expo) != ambient_dim:
                raise DimensionMismatch(
                    f"exponent vector {expo} has length {len(expo)}, expected {ambient_dim}"
                )
            if any(e < 0 for e in expo):
                raise ValueError(f"negative exponent in {expo}")
            c = _coerce(coeff, mode)
            if c != 0:
                c = clean.get(expo, 0) + c  # duplicate keys collapse
                if c != 0:
                    clean[expo] = c
                elif expo in clean:
                    del clean[expo]
        object.__setattr__(self, "ambient_dim", ambient_dim)
        object.__setattr__(self, "mode", mode)
        object.__setattr__(self, "_terms", clean)

    def __setattr__(self, name, value):
        raise AttributeError("Polynomial is immutable")

    # -- constructors ------------------------------------------------------

    @classmethod
    def zero(cls, ambient_dim: int, mode: str = EXACT) -> "Polynomial":
        return cls(ambient_dim, {}, mode)

    @classmethod
    def constant(cls, ambient_dim: int, value, mode: str = EXACT) -> "Polynomial":
        return cls(ambient_dim, {(0,) * ambient_dim: value}, mode)

    @classmethod
    def variable(cls, ambient_dim: int, index: int, mode: str = EXACT) -> "Polynomial":
        """The coordinate polynomial ``x_{index+1}`` (0-based index)."""
        if not 0 <= index < ambient_dim:
            raise DimensionMismatch(f"variable index {index} out of range")
        expo = [0] * ambient_dim
        expo[index] = 1
        return cls(ambient_dim, {tuple(expo): 1}, mode)

    @classmethod
    def monomial(cls, ambient_dim: int, expo: Sequence[int], coeff=1, mode: str = EXACT) -> "Polynomial":
        return cls(ambient_dim, {tuple(expo): coeff}, mode)

    # -- views -------------------------------------------------------------

    @property
    def terms(self):
        """Read-only view of the term map."""
        return MappingProxyType(self._terms)

    def coefficient(self, expo: Sequence[int]):
        return self._terms.get(tuple(expo), Fraction(0) if self.mode == EXACT else 0.0)

    @property
    def is_zero(self) -> bool:
        return not self._terms

    def __len__(self) -> int:
        return len(self._terms)

    def total_degree(self) -> int:
        """Maximum total degree of the support; -1 for the zero polynomial."""
        if not self._terms:
            return -1
        return max(sum(e) for e in self._terms)

    def is_homogeneous(self) -> bool:
        degrees = {sum(e) for e in self._terms}
        return len(degrees) <= 1

    def homogeneous_degree(self) -> int:
        """Degree of a homogeneous polynomial (0 for the zero polynomial)."""
        degrees = {sum(e) for e in self._terms}
        if len(degrees) > 1:
            raise ValueError(f"polynomial is not homogeneous: degrees {sorted(degrees)}")
        return degrees.pop() if degrees else 0

    # -- ring operations ---------------------------------------------------

    def _check_compatible(self, other: "Polynomial"):
        if self.ambient_dim != other.ambient_dim:
            raise DimensionMismatch(
                f"ambient dimensions differ: {self.ambient_dim} vs {other.ambient_dim}"
            )
        if self.mode != other.mode:
            raise ScalarModeMismatch(f"scalar modes differ: {self.mode} vs {other.mode}")

    def __add__(self, other: "Polynomial") -> "Polynomial":
        if not isinstance(other, Polynomial):
            return NotImplemented
        self._check_compatible(other)
        out = dict(self._terms)
        for expo, coeff in other._terms.items():
            c = out.get(expo, 0) + coeff
            if c == 0:
                out.pop(expo, None)
            else:
                out[expo] = c
        return Polynomial(self.ambient_dim, out, self.mode)

    def __neg__(self) -> "Polynomial":
        return Polynomial(self.ambient_dim, {e: -c for e, c in self._terms.items()}, self.mode)

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self + (-other)

    def __mul__(self, other: "Polynomial") -> "Polynomial":
        if not isinstance(other, Polynomial):
            return NotImplemented
        self._check_compatible(other)
        out: Dict[ExponentVector, object] = {}
        for ea, ca in self._terms.items():
            for eb, cb in other._terms.items():
                expo = tuple(x + y for x, y in zip(ea, eb))
                c = out.get(expo, 0) + ca * cb
                if c == 0:
                    out.pop(expo, None)
                else:
                    out[expo] = c
        return Polynomial(self.ambient_dim, out, self.mode)

    def scale(self, scalar) -> "Polynomial":
        c = _coerce(scalar, self.mode)
        if c == 0:
            return Polynomial.zero(self.ambient_dim, self.mode)
        return Polynomial(self.ambient_dim, {e: c * v for e, v in self._terms.items()}, self.mode)

    def __pow__(self, n: int) -> "Polynomial":
        if not isinstance(n, int) or n < 0:
            raise ValueError("polynomial powers must be non-negative integers")
        result = Polynomial.constant(self.ambient_dim, 1, self.mode)
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base if n > 1 else base
            n >>= 1
        return result

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Polynomial)
            and self.ambient_dim == other.ambient_dim
            and self.mode == other.mode
            and self._terms == other._terms
        )

    def __repr__(self) -> str:
        text = format_polynomial(self)
        if len(text) > 60:
            text = text[:57] + "..."
        return f"Polynomial({self.ambient_dim}, {self.mode}, {text})"

    # -- evaluation --------------------------------------------------------

    def eval(self, point: Sequence):
        """Value at ``point``; exact when mode and point are both rational."""
        if len(point) != self.ambient_dim:
            raise DimensionMismatch(
                f"point has length {len(point)}, expected {self.ambient_dim}"
            )
        total = Fraction(0) if self.mode == EXACT else 0.0
        for expo, coeff in self._terms.items():
            term = coeff
            for e, x in zip(expo, point):
                if e:
                    term = term * x ** e
            total = total + term
        return total

    def eval_many(self, points: np.ndarray) -> np.ndarray:
        """Vectorized float evaluation on an ``(N, ambient_dim)`` array."""
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != self.ambient_dim:
            raise DimensionMismatch(
                f"expected points of shape (N, {self.ambient_dim}), got {points.shape}"
            )
        n = points.shape[0]
        out = np.zeros(n)
        if not self._terms:
            return out
        max_exp = [0] * self.ambient_dim
        for expo in self._terms:
            for i, e in enumerate(expo):
                if e > max_exp[i]:
                    max_exp[i] = e
        # power tables avoid repeated np.power calls per term
        tables = []
        for i, m in enumerate(max_exp):
            col = points[:, i]
            tab = [np.ones(n)]
            for _ in range(m):
                tab.append(tab[-1] * col)
            tables.append(tab)
        for expo, coeff in self._terms.items():
            term = np.full(n, float(coeff))
            for i, e in enumerate(expo):
                if e:
                    term = term * tables[i][e]
            out += term
        return out

    # -- calculus ----------------------------------------------------------

    def partial(self, index: int) -> "Polynomial":
        """Partial derivative with respect to coordinate ``index`` (0-based)."""
        if not 0 <= index < self.ambient_dim:
            raise DimensionMismatch(f"variable index {index} out of range")
        out: Dict[ExponentVector, object] = {}
        for expo, coeff in self._terms.items():
            e = expo[index]
            if e == 0:
                continue
            new = list(expo)
            new[index] = e - 1
            out[tuple(new)] = coeff * e
        return Polynomial(self.ambient_dim, out, self.mode)

    def gradient(self) -> Tuple["Polynomial", ...]:
        return tuple(self.partial(i) for i in range(self.ambient_dim))

    def laplacian(self) -> "Polynomial":
        out = Polynomial.zero(self.ambient_dim, self.mode)
        for i in range(self.ambient_dim):
            out = out + self.partial(i).partial(i)
        return out

    def homogeneous_components(self) -> Dict[int, "Polynomial"]:
        """Split into homogeneous pieces, keyed by degree (empty for zero)."""
        buckets: Dict[int, Dict[ExponentVector, object]] = {}
        for expo, coeff in self._terms.items():
            buckets.setdefault(sum(expo), {})[expo] = coeff
        return {
            d: Polynomial(self.ambient_dim, terms, self.mode)
            for d, terms in sorted(buckets.items())
        }

    # -- conversions -------------------------------------------------------

    def to_float(self) -> "Polynomial":
        if self.mode == FLOAT:
            return self
        return Polynomial(self.ambient_dim, {e: float(c) for e, c in self._terms.items()}, FLOAT)

    def to_exact(self) -> "Polynomial":
        """Exact conversion (binary float -> Fraction, no rounding)."""
        if self.mode == EXACT:
            return self
        return Polynomial(
            self.ambient_dim, {e: Fraction(c) for e, c in self._terms.items()}, EXACT
        )

    def max_abs_coeff(self) -> float:
        return max((abs(float(c)) for c in self._terms.values()), default=0.0)


# -- monomial bookkeeping ---------------------------------------------------


def grlex_key(expo: ExponentVector):
    """Sort key putting monomials in descending graded-lex order."""
    return (-sum(expo), tuple(-e for e in expo))


def monomial_basis(ambient_dim: int, degree: int) -> List[ExponentVector]:
    """All exponent vectors of the given total degree, graded-lex order.

    The count is C(ambient_dim + degree - 1, degree).
    """
    if degree < 0:
        raise ValueError("degree must be non-negative")

    out: List[ExponentVector] = []

    def rec(prefix: List[int], remaining: int, slots: int):
        if slots == 1:
            out.append(tuple(prefix + [remaining]))
            return
        for e in range(remaining, -1, -1):
            rec(prefix + [e], remaining - e, slots - 1)

    rec([], degree, ambient_dim)
    return out


def radius_squared(ambient_dim: int, mode: str = EXACT) -> Polynomial:
    """The polynomial ``x1^2 + ... + x_d^2``."""
    terms = {}
    for i in range(ambient_dim):
        e = [0] * ambient_dim
        e[i] = 2
        terms[tuple(e)] = 1
    return Polynomial(ambient_dim, terms, mode)


def euler_apply(p: Polynomial) -> Polynomial:
    """Radial derivation ``sum_i x_i * d p / d x_i`` (degree times p on
    homogeneous input, computed through the actual derivatives)."""
    out = Polynomial.zero(p.ambient_dim, p.mode)
    for i in range(p.ambient_dim):
        out = out + Polynomial.variable(p.ambient_dim, i, p.mode) * p.partial(i)
    return out


# -- sphere moments ---------------------------------------------------------


def _double_factorial(n: int) -> int:
    # (-1)!! == 1 by convention
    out = 1
    while n > 1:
        out *= n
        n -= 2
    return out


class SphereMomentTable:
    """Normalized monomial moments over the unit sphere in ``R^ambient_dim``.

    The moment of ``x^alpha`` with respect to the uniform probability measure
    is zero whenever some exponent is odd, and otherwise equals

        prod_i (alpha_i - 1)!!  /  [d (d+2) (d+4) ... (d + |alpha| - 2)]

    with ``d = ambient_dim``.  Values are exact rationals; the cache fill is
    idempotent so concurrent readers are safe.
    """

    def __init__(self, ambient_dim: int):
        self.ambient_dim = ambient_dim
        self._cache: Dict[ExponentVector, Fraction] = {}

    def moment(self, expo: Sequence[int]) -> Fraction:
        expo = tuple(int(e) for e in expo)
        if len(expo) != self.ambient_dim:
            raise DimensionMismatch(
                f"exponent vector length {len(expo)} != ambient_dim {self.ambient_dim}"
            )
        cached = self._cache.get(expo)
        if cached is not None:
            return cached
        if any(e % 2 for e in expo):
            value = Fraction(0)
        else:
            total = sum(expo)
            num = 1
            for e in expo:
                num *= _double_factorial(e - 1)
            den = 1
            for k in range(total // 2):
                den *= self.ambient_dim + 2 * k
            value = Fraction(num, den)
        self._cache[expo] = value
        return value


_moment_tables: Dict[int, SphereMomentTable] = {}


def moment_table(ambient_dim: int) -> SphereMomentTable:
    table = _moment_tables.get(ambient_dim)
    if table is None:
        table = _moment_tables.setdefault(ambient_dim, SphereMomentTable(ambient_dim))
    return table


def sphere_mean(p: Polynomial):
    """Mean of ``p`` over the unit sphere (normalized measure).

    Exact Fraction in exact mode, float in float mode.
    """
    table = moment_table(p.ambient_dim)
    if p.mode == EXACT:
        return sum((c * table.moment(e) for e, c in p.terms.items()), Fraction(0))
    return float(sum(c * float(table.moment(e)) for e, c in p.terms.items()))


def sphere_inner(p: Polynomial, q: Polynomial):
    """L^2 pairing ``mean(p * q)`` over the unit sphere."""
    return sphere_mean(p * q)


def sphere_norm(p: Polynomial) -> float:
    """Float L^2(sphere) norm, valid in both modes."""
    return math.sqrt(max(float(sphere_inner(p, p)), 0.0))


# -- rationalization --------------------------------------------------------


def rationalize(p: Polynomial, max_denominator: int) -> Tuple[Polynomial, float]:
    """Round each coefficient to the nearest rational with bounded denominator.

    Returns the exact-mode polynomial and the largest perturbation applied.
    Lossy by design; terms rounding to zero are dropped.
    """
    if max_denominator < 1:
        raise ValueError("max_denominator must be at least 1")
    terms = {}
    worst = 0.0
    for expo, coeff in p.terms.items():
        approx = Fraction(coeff).limit_denominator(max_denominator)
        worst = max(worst, abs(float(Fraction(coeff) - approx)))
        if approx != 0:
            terms[expo] = approx
    return Polynomial(p.ambient_dim, terms, EXACT), worst


# -- text format ------------------------------------------------------------

_TOKEN = re.compile(
    r"""\s*(?:
        (?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)
      | (?P<var>x\d+)
      | (?P<op>[-+*/^()])
    )""",
    re.VERBOSE,
)


def _tokenize(text: str):
    pos = 0
    tokens = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            if text[pos:].strip() == "":
                break
            raise PolynomialParseError("unexpected character", text, pos)
        if m.lastgroup == "num":
            tokens.append(("num", m.group("num"), m.start("num")))
        elif m.lastgroup == "var":
            tokens.append(("var", m.group("var"), m.start("var")))
        elif m.group("op") is not None:
            tokens.append(("op", m.group("op"), m.start("op")))
        pos = m.end()
    return tokens


def parse_polynomial(text: str, ambient_dim: int, mode: str = EXACT) -> Polynomial:
    """Parse the text format: terms like ``3/4 * x1^2 * x2`` joined by +/-.

    Whitespace-insensitive.  Rational coefficients are written ``p/q``;
    decimal and scientific forms are accepted (converted exactly in exact
    mode).  Parentheses are not part of the format.
    """
    tokens = _tokenize(text)
    if not tokens:
        raise PolynomialParseError("empty polynomial text", text, 0)

    terms: Dict[ExponentVector, object] = {}
    i = 0
    first = True
    while i < len(tokens):
        sign = 1
        # leading sign(s)
        while i < len(tokens) and tokens[i][0] == "op" and tokens[i][1] in "+-":
            if tokens[i][1] == "-":
                sign = -sign
            i += 1
            first = False
        if i >= len(tokens):
            raise PolynomialParseError("dangling sign", text, tokens[-1][2])
        if not first and sign == 1 and tokens[i - 1][1] not in "+-":
            raise PolynomialParseError("missing operator between terms", text, tokens[i][2])

        coeff = Fraction(sign)
        expo = [0] * ambient_dim
        expect_factor = True
        while i < len(tokens):
            kind, value, pos = tokens[i]
            if kind == "op" and value in "+-" and not expect_factor:
                break
            if kind == "num":
                frac = Fraction(value)
                i += 1
                # optional /q
                if i < len(tokens) and tokens[i][:2] == ("op", "/"):
                    i += 1
                    if i >= len(tokens) or tokens[i][0] != "num":
                        raise PolynomialParseError("expected denominator", text, pos)
                    frac = frac / Fraction(tokens[i][1])
                    i += 1
                coeff = coeff * frac
            elif kind == "var":
                index = int(value[1:]) - 1
                if not 0 <= index < ambient_dim:
                    raise PolynomialParseError(
                        f"variable {value} outside ambient dimension {ambient_dim}", text, pos
                    )
                power = 1
                i += 1
                if i < len(tokens) and tokens[i][:2] == ("op", "^"):
                    i += 1
                    if i >= len(tokens) or tokens[i][0] != "num" or not tokens[i][1].isdigit():
                        raise PolynomialParseError("expected integer exponent", text, pos)
                    power = int(tokens[i][1])
                    i += 1
                expo[index] += power
            elif kind == "op" and value == "*":
                i += 1
                expect_factor = True
                continue
            else:
                raise PolynomialParseError(f"unexpected token {value!r}", text, pos)
            expect_factor = False
        if expect_factor:
            raise PolynomialParseError("term ended unexpectedly", text, len(text) - 1)

        key = tuple(expo)
        terms[key] = terms.get(key, Fraction(0)) + coeff
        first = False

    if mode == FLOAT:
        terms = {e: float(c) for e, c in terms.items()}
    return Polynomial(ambient_dim, terms, mode)


def _format_coeff(coeff, mode: str) -> str:
    if mode == EXACT:
        return str(coeff)
    return repr(float(coeff))


def format_polynomial(p: Polynomial) -> str:
    """Canonical text form, terms in descending graded-lex order."""
    if p.is_zero:
        return "0"
    pieces = []
    for expo in sorted(p.terms, key=grlex_key):
        coeff = p.terms[expo]
        negative = coeff < 0
        mag = -coeff if negative else coeff
        factors = [
            f"x{i + 1}" + (f"^{e}" if e > 1 else "")
            for i, e in enumerate(expo)
            if e > 0
        ]
        mag_is_one = (mag == 1)
        if factors and mag_is_one:
            body = " * ".join(factors)
        elif factors:
            body = " * ".join([_format_coeff(mag, p.mode)] + factors)
        else:
            body = _format_coeff(mag, p.mode)
        if not pieces:
            pieces.append(("-" if negative else "") + body)
        else:
            pieces.append(("- " if negative else "+ ") + body)
    return " ".join(pieces)
