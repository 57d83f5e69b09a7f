"""Truncated formal power series.

Two coefficient modes are supported: exact rationals (gmpy2 ``mpq``) and
doubles. A series of truncation order ``N`` stores the coefficients of
``z^0 .. z^N``; everything beyond is unknown, so binary operations truncate
to the smaller order of their operands.

Exact products go through Kronecker substitution: the integer numerators are
packed into a single big integer, multiplied by GMP and unpacked again.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import reduce
from typing import Any, Iterable, List, Optional, Sequence, Tuple

import gmpy2
import numpy as np
from gmpy2 import mpq, mpz

from gw_border.errors import DomainError, InvalidInputError, ModeMismatchError, TruncationError
from gw_border.settings import get_settings

logger = logging.getLogger(__name__)


class SeriesMode(str, Enum):
    EXACT = "exact"
    FLOAT = "float"


@dataclass(frozen=True)
class Series:
    """Coefficients ``c_0 .. c_N`` of a power series truncated at order ``N``."""

    coeffs: Tuple[Any, ...]
    mode: SeriesMode

    def __post_init__(self):
        if not self.coeffs:
            raise TruncationError("A series needs at least the constant coefficient")

    @property
    def trunc(self) -> int:
        return len(self.coeffs) - 1

    @property
    def is_exact(self) -> bool:
        return self.mode is SeriesMode.EXACT

    def coeff(self, n: int):
        if n < 0:
            raise DomainError(f"Coefficient index must be nonnegative, got {n}")
        if n > self.trunc:
            raise TruncationError(f"Coefficient {n} requested from a series truncated at {self.trunc}")
        return self.coeffs[n]

    def __getitem__(self, n: int):
        return self.coeff(n)

    def __len__(self) -> int:
        return len(self.coeffs)

    def __add__(self, other: "Series") -> "Series":
        return add(self, other)

    def __sub__(self, other: "Series") -> "Series":
        return sub(self, other)

    def __mul__(self, other: "Series") -> "Series":
        return mul(self, other)

    def __neg__(self) -> "Series":
        return scale(self, -1)

    def __pow__(self, exponent: int) -> "Series":
        return power(self, exponent)

    def __repr__(self) -> str:
        shown = ", ".join(str(c) for c in self.coeffs[:6])
        more = ", ..." if len(self.coeffs) > 6 else ""
        return f"Series({self.mode.value}, trunc={self.trunc}, [{shown}{more}])"


# ----- construction -----

def to_mpq(value: Any) -> mpq:
    """Convert an int, Fraction, mpq or rational string ("p/q", "0.25") to ``mpq``."""
    if isinstance(value, bool):
        raise InvalidInputError(f"Not a rational coefficient: {value!r}")
    if isinstance(value, str):
        try:
            return mpq(value.strip())
        except (ValueError, ZeroDivisionError) as e:
            raise InvalidInputError(f"Invalid rational {value!r}: {e}")
    if isinstance(value, float):
        if not math.isfinite(value):
            raise DomainError(f"Non-finite coefficient {value!r}")
        return mpq(value)
    try:
        return mpq(value)
    except (TypeError, ValueError) as e:
        raise InvalidInputError(f"Not a rational coefficient: {value!r} ({e})")


def _pad(values: List[Any], trunc: Optional[int], zero: Any) -> Tuple[Any, ...]:
    if trunc is None:
        trunc = len(values) - 1
    if trunc < 0:
        raise TruncationError(f"Truncation order must be nonnegative, got {trunc}")
    values = values[: trunc + 1]
    values.extend([zero] * (trunc + 1 - len(values)))
    return tuple(values)


def exact_series(values: Iterable[Any], trunc: Optional[int] = None) -> Series:
    return Series(_pad([to_mpq(v) for v in values], trunc, mpq(0)), SeriesMode.EXACT)


def float_series(values: Iterable[Any], trunc: Optional[int] = None) -> Series:
    floats = [float(v) for v in values]
    if not all(math.isfinite(v) for v in floats):
        raise DomainError("Float series coefficients must be finite")
    return Series(_pad(floats, trunc, 0.0), SeriesMode.FLOAT)


def _zero_of(mode: SeriesMode):
    return mpq(0) if mode is SeriesMode.EXACT else 0.0


def constant(value: Any, trunc: int, mode: SeriesMode = SeriesMode.EXACT) -> Series:
    if mode is SeriesMode.EXACT:
        return exact_series([value], trunc)
    return float_series([value], trunc)


def monomial(power_: int, trunc: int, mode: SeriesMode = SeriesMode.EXACT, coefficient: Any = 1) -> Series:
    """``coefficient * z^power_`` truncated at ``trunc``."""
    if power_ < 0:
        raise DomainError(f"Monomial power must be nonnegative, got {power_}")
    values = [0] * (power_ + 1)
    values[power_] = coefficient
    if mode is SeriesMode.EXACT:
        return exact_series(values, trunc)
    return float_series(values, trunc)


# ----- helpers -----

def _check_same_mode(a: Series, b: Series) -> None:
    if a.mode is not b.mode:
        raise ModeMismatchError(f"Cannot combine {a.mode.value} and {b.mode.value} series")


def truncate(a: Series, trunc: int) -> Series:
    """Forget coefficients beyond ``trunc``."""
    if trunc < 0:
        raise TruncationError(f"Truncation order must be nonnegative, got {trunc}")
    if trunc > a.trunc:
        raise TruncationError(f"Cannot raise truncation from {a.trunc} to {trunc}; use extend()")
    return Series(a.coeffs[: trunc + 1], a.mode)


def extend(a: Series, trunc: int) -> Series:
    """Treat ``a`` as a polynomial and pad it with zero coefficients up to ``trunc``."""
    if trunc <= a.trunc:
        return truncate(a, trunc)
    return Series(a.coeffs + (_zero_of(a.mode),) * (trunc - a.trunc), a.mode)


def valuation(a: Series) -> int:
    """Index of the first nonzero coefficient, or ``trunc + 1`` for the zero series."""
    for n, c in enumerate(a.coeffs):
        if c != 0:
            return n
    return a.trunc + 1


def to_float(a: Series) -> Series:
    if a.mode is SeriesMode.FLOAT:
        return a
    return Series(tuple(float(c) for c in a.coeffs), SeriesMode.FLOAT)


# ----- arithmetic -----

def add(a: Series, b: Series) -> Series:
    _check_same_mode(a, b)
    n = min(a.trunc, b.trunc) + 1
    return Series(tuple(x + y for x, y in zip(a.coeffs[:n], b.coeffs[:n])), a.mode)


def sub(a: Series, b: Series) -> Series:
    _check_same_mode(a, b)
    n = min(a.trunc, b.trunc) + 1
    return Series(tuple(x - y for x, y in zip(a.coeffs[:n], b.coeffs[:n])), a.mode)


def scale(a: Series, factor: Any) -> Series:
    if a.mode is SeriesMode.EXACT:
        factor = to_mpq(factor)
    else:
        factor = float(factor)
    return Series(tuple(c * factor for c in a.coeffs), a.mode)


def shift(a: Series, s: int = 1) -> Series:
    """Multiply by ``z^s``, keeping the truncation order."""
    if s < 0:
        raise DomainError(f"Shift must be nonnegative, got {s}")
    if s == 0:
        return a
    zero = _zero_of(a.mode)
    kept = a.coeffs[: max(0, len(a.coeffs) - s)]
    padded = (zero,) * min(s, len(a.coeffs)) + kept
    return Series(padded, a.mode)


def derivative(a: Series) -> Series:
    """Formal derivative; the truncation order drops by one (floored at zero)."""
    if a.trunc == 0:
        return Series((_zero_of(a.mode),), a.mode)
    return Series(tuple(n * a.coeffs[n] for n in range(1, len(a.coeffs))), a.mode)


def _split_signed(values: Sequence[mpz]) -> Tuple[List[mpz], List[mpz]]:
    pos = [v if v > 0 else mpz(0) for v in values]
    neg = [-v if v < 0 else mpz(0) for v in values]
    return pos, neg


def _strip(values: Sequence[mpz]) -> List[mpz]:
    end = len(values)
    while end and values[end - 1] == 0:
        end -= 1
    return list(values[:end])


def _pack(values: Sequence[mpz], width: int) -> mpz:
    return mpz(int.from_bytes(b"".join(int(v).to_bytes(width, "little") for v in values), "little"))


def _kronecker(x: List[mpz], y: List[mpz], n: int) -> List[mpz]:
    """Product of two nonnegative integer coefficient lists, first ``n`` terms."""
    x, y = _strip(x), _strip(y)
    if not x or not y:
        return [mpz(0)] * n
    bits = max(x).bit_length() + max(y).bit_length() + min(len(x), len(y)).bit_length() + 1
    width = (bits + 7) // 8
    product = _pack(x, width) * _pack(y, width)
    terms = len(x) + len(y) - 1
    raw = int(product).to_bytes(terms * width, "little")
    out = [mpz(int.from_bytes(raw[i * width:(i + 1) * width], "little")) for i in range(min(n, terms))]
    out.extend([mpz(0)] * (n - len(out)))
    return out


def _schoolbook(x: List[mpz], y: List[mpz], n: int) -> List[mpz]:
    out = [mpz(0)] * n
    for i, xi in enumerate(x[:n]):
        if not xi:
            continue
        for j in range(min(len(y), n - i)):
            out[i + j] += xi * y[j]
    return out


def _integer_product(x: List[mpz], y: List[mpz], n: int) -> List[mpz]:
    x, y = _strip(x[:n]), _strip(y[:n])
    if not x or not y:
        return [mpz(0)] * n
    if min(len(x), len(y)) < get_settings().series.kronecker_threshold:
        return _schoolbook(x, y, n)
    if all(v >= 0 for v in x) and all(v >= 0 for v in y):
        return _kronecker(x, y, n)
    xp, xn = _split_signed(x)
    yp, yn = _split_signed(y)
    out = _kronecker(xp, yp, n)
    for left, right, sign in ((xn, yn, 1), (xp, yn, -1), (xn, yp, -1)):
        if any(left) and any(right):
            part = _kronecker(left, right, n)
            out = [o + p for o, p in zip(out, part)] if sign > 0 else [o - p for o, p in zip(out, part)]
    return out


def _common_denominator(values: Sequence[mpq]) -> mpz:
    return reduce(gmpy2.lcm, (v.denominator for v in values), mpz(1))


def _exact_product(x: Sequence[mpq], y: Sequence[mpq], n: int) -> Tuple[mpq, ...]:
    dx, dy = _common_denominator(x), _common_denominator(y)
    ix = [v.numerator * (dx // v.denominator) for v in x]
    iy = [v.numerator * (dy // v.denominator) for v in y]
    d = dx * dy
    return tuple(mpq(c, d) for c in _integer_product(ix, iy, n))


def mul(a: Series, b: Series) -> Series:
    _check_same_mode(a, b)
    n = min(a.trunc, b.trunc) + 1
    if a.mode is SeriesMode.EXACT:
        return Series(_exact_product(a.coeffs[:n], b.coeffs[:n], n), a.mode)
    product = np.convolve(np.asarray(a.coeffs[:n], dtype=float), np.asarray(b.coeffs[:n], dtype=float))[:n]
    return Series(tuple(float(c) for c in product), a.mode)


def power(a: Series, exponent: int) -> Series:
    """``a ** exponent`` by repeated squaring."""
    if exponent < 0:
        raise DomainError(f"Exponent must be nonnegative, got {exponent}")
    result = constant(1, a.trunc, a.mode)
    base = a
    while exponent:
        if exponent & 1:
            result = mul(result, base)
        exponent >>= 1
        if exponent:
            base = mul(base, base)
    return result


def _add_constant(a: Series, value: Any) -> Series:
    return Series((a.coeffs[0] + value,) + a.coeffs[1:], a.mode)


def compose(outer: Series, inner: Series) -> Series:
    """``outer(inner(z))``; requires ``inner(0) == 0``."""
    _check_same_mode(outer, inner)
    if inner.coeffs[0] != 0:
        raise DomainError("compose() needs an inner series with zero constant term")
    trunc = min(outer.trunc, inner.trunc)
    inner = truncate(inner, trunc)
    v = valuation(inner)
    if v > trunc:
        return constant(outer.coeffs[0], trunc, outer.mode)
    # z^(v*j) vanishes beyond trunc for j > trunc // v
    degree = min(outer.trunc, trunc // v)
    result = constant(outer.coeffs[degree], trunc, outer.mode)
    for j in range(degree - 1, -1, -1):
        result = _add_constant(mul(result, inner), outer.coeffs[j])
    return result


def evaluate(a: Series, t: float) -> float:
    """Horner evaluation of the truncated polynomial at ``t`` in double precision."""
    t = float(t)
    acc = 0.0
    for c in reversed(a.coeffs):
        acc = acc * t + float(c)
    return acc


def evaluate_exact(a: Series, t: Any) -> mpq:
    if a.mode is not SeriesMode.EXACT:
        raise ModeMismatchError("evaluate_exact() needs an exact series")
    t = to_mpq(t)
    acc = mpq(0)
    for c in reversed(a.coeffs):
        acc = acc * t + c
    return acc


def reciprocal(a: Series) -> Series:
    """``1 / a`` by Newton iteration; requires ``a(0) != 0``."""
    if a.coeffs[0] == 0:
        raise DomainError("reciprocal() needs a nonzero constant term")
    one = 1 if a.mode is SeriesMode.EXACT else 1.0
    b = constant(one / a.coeffs[0], 0, a.mode)
    prec = 0
    while prec < a.trunc:
        prec = min(2 * prec + 1, a.trunc)
        b = extend(b, prec)
        residual = mul(truncate(a, prec), b)
        b = sub(scale(b, 2), mul(b, residual))
    return b


def exp_of(h: Series) -> Series:
    """``exp(h)``; requires ``h(0) == 0``. Uses ``n P_n = sum_j j h_j P_{n-j}``."""
    if h.coeffs[0] != 0:
        raise DomainError("exp_of() needs a series with zero constant term")
    exact = h.mode is SeriesMode.EXACT
    weighted = [(j, j * h.coeffs[j]) for j in range(1, len(h.coeffs)) if h.coeffs[j] != 0]
    out = [mpq(1) if exact else 1.0]
    for n in range(1, len(h.coeffs)):
        acc = _zero_of(h.mode)
        for j, jh in weighted:
            if j > n:
                break
            acc += jh * out[n - j]
        out.append(acc / n)
    return Series(tuple(out), h.mode)
