"""Distance to the border: exact iterates, conditional probabilities and limit constants.

The iteration G(z, w) = z(ψ(w) - b_0) applied k times to the tree function g
gives the generating function of trees whose root is at distance at least k
from the nearest leaf. Coefficients are exact; the limit constants c_k come
from a scalar recurrence along the trajectory started at the apex.
"""

import logging
import math
from typing import Dict, FrozenSet, Iterable, List, Optional, Tuple

import gmpy2
from gmpy2 import mpq
from pydantic import BaseModel, ConfigDict, Field

from gw_border import series as S
from gw_border.errors import DomainError, InternalError, InvalidInputError, UnsupportedError
from gw_border.family import (
    FamilyKind,
    OffspringFamily,
    apex,
    check_residue,
    compose_partial,
    compose_psi,
    psi_value,
    solve_g,
)
from gw_border.series import Series
from gw_border.settings import get_settings
from gw_border.utils import format_exact, format_float, round_sig

logger = logging.getLogger(__name__)


class BorderSeries(BaseModel):
    """Exact coefficients A_n^(k) of the k-th border iterate."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    family: OffspringFamily
    k: int
    trunc: int
    series: Series

    def coeff(self, n: int) -> mpq:
        return self.series.coeff(n)


class LimitConstant(BaseModel):
    model_config = ConfigDict(frozen=True)

    family: str
    k: int
    c_k: float
    rho: float
    tau: float
    trajectory: List[float] = Field(default_factory=list, description="g_0(ρ) .. g_{k-1}(ρ)")
    closed_form: Optional[float] = None
    underflow: bool = False


class BorderRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    n: int
    a_n: str
    a_n_k: str
    ratio: str
    ratio_float: float
    gap: Optional[float] = None


class BorderTable(BaseModel):
    model_config = ConfigDict(frozen=True)

    family: str
    k: int
    c_k: Optional[float]
    rows: List[BorderRow]

    def csv_rows(self) -> List[List[str]]:
        return [[str(r.n), r.a_n, r.a_n_k, r.ratio, format_float(r.gap)] for r in self.rows]


# ----- exact iterates -----

def _check_series_k(k: int) -> None:
    cap = get_settings().border.max_series_k
    if k < 0 or k > cap:
        raise DomainError(f"k must lie in [0, {cap}] for exact iterates, got {k}")


_CHAINS: Dict[Tuple[OffspringFamily, int], List[Series]] = {}
_MAX_CHAINS = 64


def _iterate_chain(fam: OffspringFamily, k: int, trunc: int) -> Series:
    key = (fam, trunc)
    if key not in _CHAINS and len(_CHAINS) >= _MAX_CHAINS:
        _CHAINS.clear()
    chain = _CHAINS.setdefault(key, [solve_g(fam, trunc)])
    b0 = S.constant(fam.b0, trunc)
    while len(chain) <= k:
        chain.append(S.shift(compose_psi(fam, chain[-1]) - b0, 1))
    return chain[k]


def iterate_scheme(fam: OffspringFamily, k: int, trunc: Optional[int] = None) -> BorderSeries:
    """
    g_0 = g and g_j = z(ψ(g_{j-1}) - b_0): the generating function of trees with ∂ ≥ k.

    Args:
        fam: The family
        k: Number of iterations, 0 ≤ k ≤ border.max_series_k
        trunc: Truncation order (default: the family's)

    Returns:
        BorderSeries holding the exact coefficients
    """
    _check_series_k(k)
    trunc = fam.trunc if trunc is None else trunc
    if trunc < 0:
        raise DomainError(f"Truncation order must be nonnegative, got {trunc}")
    g_k = _iterate_chain(fam, k, trunc)
    return BorderSeries(family=fam, k=k, trunc=trunc, series=g_k)


def exact_conditional_prob(fam: OffspringFamily, k: int, n: int) -> mpq:
    """P(∂(T_n) ≥ k) = A_n^(k) / A_n for a size n in the residue class 1 mod Q."""
    check_residue(fam, n)
    a_n = solve_g(fam, n).coeff(n)
    if a_n == 0:
        raise InvalidInputError(f"No trees of size {n} exist for family {fam.name}")
    return iterate_scheme(fam, k, n).coeff(n) / a_n


def border_distribution(fam: OffspringFamily, n: int) -> List[mpq]:
    """Exact law of ∂ given size n: entry k is (A_n^(k) - A_n^(k+1)) / A_n, k = 0..n-1."""
    check_residue(fam, n)
    _check_series_k(n)
    a_n = solve_g(fam, n).coeff(n)
    if a_n == 0:
        raise InvalidInputError(f"No trees of size {n} exist for family {fam.name}")
    counts = [iterate_scheme(fam, k, n).coeff(n) for k in range(n + 1)]
    return [(counts[k] - counts[k + 1]) / a_n for k in range(n)]


# ----- limit constants -----

def _closed_form(fam: OffspringFamily, k: int) -> Optional[float]:
    if fam.kind is FamilyKind.GEOMETRIC:
        return plane_closed_constant(k)
    if fam.kind is FamilyKind.EXPONENTIAL:
        return cayley_recurrence(k)
    if fam.kind is FamilyKind.POLYNOMIAL and fam.poly == (1, 0, 1):
        return binary_closed_constant(k)
    return None


def _walk(fam: OffspringFamily, k: int, exclude: FrozenSet[int], label: str) -> LimitConstant:
    cap = get_settings().border.max_scalar_k
    if k < 0 or k > cap:
        raise DomainError(f"k must lie in [0, {cap}], got {k}")
    quantities = apex(fam)
    rho = quantities.rho
    c = 1.0
    g = quantities.tau
    trajectory: List[float] = []
    underflow = False
    for j in range(k):
        if j > 0:
            nxt = rho * psi_value(fam, g, 0, exclude)
            if math.isnan(nxt) or nxt < 0.0:
                raise InternalError(f"Trajectory value g_{j}(ρ)={nxt!r} for {fam.name}")
            if nxt == 0.0 and g > 0.0 and not underflow:
                underflow = True
                logger.warning("[Border] %s trajectory underflowed at step %d; c_%d reported as 0", label, j, k)
            g = nxt
        trajectory.append(g)
        if not underflow:
            c *= rho * (psi_value(fam, g, 1) - _excluded_derivative(fam, g, exclude))
    if underflow or c == 0.0:
        underflow = True
        c = 0.0
    return LimitConstant(family=fam.name, k=k, c_k=c, rho=rho, tau=quantities.tau,
                         trajectory=trajectory, underflow=underflow)


def _excluded_derivative(fam: OffspringFamily, x: float, exclude: FrozenSet[int]) -> float:
    # ψ_I'(x) for the finite index set I
    return sum(float(fam.coeff(i)) * i * x ** (i - 1) for i in exclude if i >= 1)


def limit_constant(fam: OffspringFamily, k: int) -> LimitConstant:
    """
    c_k = ρ^k ∏_{j<k} ψ'(g_j(ρ)) with g_0(ρ) = τ and g_j(ρ) = ρ(ψ(g_{j-1}(ρ)) - b_0).

    Args:
        fam: A family in K*
        k: Depth, 0 ≤ k ≤ border.max_scalar_k

    Returns:
        LimitConstant with the trajectory and, for built-in families, the closed form
    """
    result = _walk(fam, k, frozenset({0}), "scheme")
    closed = _closed_form(fam, k)
    if closed is None:
        return result
    return result.model_copy(update={"closed_form": closed})


def cayley_recurrence(k: int) -> float:
    """c_k for ψ = e^w: c_k = e^{-1}·e^{G_{k-1}}·c_{k-1}, G_k = e^{-1}(e^{G_{k-1}} - 1), G_0 = 1."""
    if k < 0:
        raise DomainError(f"k must be nonnegative, got {k}")
    c, big_g = 1.0, 1.0
    for _ in range(k):
        c = math.exp(big_g - 1.0) * c
        big_g = math.expm1(big_g) / math.e
    return c


def cayley_closed_constant(k: int) -> float:
    """Nested-exponential closed forms for c_0 .. c_4 of Cayley trees."""
    inv_e = math.exp(-1.0)
    if k in (0, 1):
        return 1.0
    if k == 2:
        return math.exp(-inv_e)
    if k == 3:
        return math.exp(math.exp(-inv_e) - 2.0 * inv_e - 1.0)
    if k == 4:
        return math.exp(inv_e * math.exp(math.exp(-inv_e) - inv_e) + math.exp(-inv_e) - 3.0 * inv_e - 2.0)
    raise DomainError(f"Closed form is tabulated for k ≤ 4 only, got {k}")


def plane_closed_constant(k: int) -> float:
    """c_k = 9·4^k / (2 + 4^k)^2 for plane trees."""
    if k < 0:
        raise DomainError(f"k must be nonnegative, got {k}")
    if k > 500:
        return math.ldexp(9.0, -2 * k)
    four_k = 4.0 ** k
    return 9.0 * four_k / (2.0 + four_k) ** 2


def binary_closed_constant(k: int) -> float:
    """c_k = 2^(k - 2^k + 1) for binary trees."""
    if k < 0:
        raise DomainError(f"k must be nonnegative, got {k}")
    if k > 62:
        return 0.0
    return math.ldexp(1.0, k - 2 ** k + 1)


# ----- closed iterates -----

def _geometric_sum(z: float, k: int) -> float:
    # (1 - z^k)/(1 - z) without dividing at z = 1
    return float(k) if z == 1.0 else (1.0 - z ** k) / (1.0 - z)


def plane_closed_iterate(z: float, w: float, k: int) -> float:
    """G_k(z, w) = z^k w / (1 - ((1 - z^k)/(1 - z)) w) for ψ = 1/(1-w)."""
    if k < 0:
        raise DomainError(f"k must be nonnegative, got {k}")
    if k == 0:
        return w
    denominator = 1.0 - _geometric_sum(z, k) * w
    if abs(denominator) < 1e-300:
        raise DomainError(f"Pole of the plane iterate at z={z}, w={w}, k={k}")
    return z ** k * w / denominator


def plane_closed_partial_w(z: float, w: float, k: int) -> float:
    if k == 0:
        return 1.0
    denominator = 1.0 - _geometric_sum(z, k) * w
    if abs(denominator) < 1e-300:
        raise DomainError(f"Pole of the plane iterate at z={z}, w={w}, k={k}")
    return z ** k / denominator ** 2


def _check_binary_k(k: int) -> None:
    cap = get_settings().border.max_binary_k
    if k < 0 or k > cap:
        raise DomainError(f"k must lie in [0, {cap}] for the binary closed form, got {k}")


def binary_closed_iterate(z: float, w: float, k: int) -> float:
    """B_k(z, w) = z^(2^k - 1) w^(2^k) for ψ = 1 + w^2."""
    _check_binary_k(k)
    return z ** (2 ** k - 1) * w ** (2 ** k)


def binary_closed_partial_w(z: float, w: float, k: int) -> float:
    _check_binary_k(k)
    return 2 ** k * z ** (2 ** k - 1) * w ** (2 ** k - 1)


def binary_closed_partial_z(z: float, w: float, k: int) -> float:
    _check_binary_k(k)
    if k == 0:
        return 0.0
    return (2 ** k - 1) * z ** (2 ** k - 2) * w ** (2 ** k)


def binary_closed_coefficient(k: int, m: int) -> int:
    """[z^(2m+1)] B_k(z, g(z)) = 2^k/(2m - 2^k + 2) · C(2m - 2^k + 2, m - 2^k + 1)."""
    _check_binary_k(k)
    if m < 2 ** k - 1:
        return 0
    top = 2 * m - 2 ** k + 2
    value = mpq(2 ** k, top) * gmpy2.comb(top, m - 2 ** k + 1)
    if value.denominator != 1:
        raise InternalError(f"Binary coefficient for k={k}, m={m} is not an integer")
    return int(value.numerator)


def iterate_G(fam: OffspringFamily, z: float, w: float, k: int) -> float:
    """G^{(k)}(z, w) in floating point."""
    if k < 0:
        raise DomainError(f"k must be nonnegative, got {k}")
    for _ in range(k):
        w = z * psi_value(fam, w, 0, frozenset({0}))
    return w


def iterate_partial_w(fam: OffspringFamily, z: float, w: float, k: int) -> float:
    """∂G^{(k)}/∂w = ∏_{j<k} z ψ'(G^{(j)}(z, w))."""
    product = 1.0
    for _ in range(k):
        product *= z * psi_value(fam, w, 1)
        w = z * psi_value(fam, w, 0, frozenset({0}))
    return product


# ----- generalised scheme -----

def _check_index_set(fam: OffspringFamily, index_set: Iterable[int]) -> FrozenSet[int]:
    chosen = frozenset(int(i) for i in index_set)
    if 0 not in chosen:
        raise InvalidInputError("The index set must contain 0")
    outside = sorted(i for i in chosen if not fam.in_support(i))
    if outside:
        raise InvalidInputError(f"Indices {outside} are outside the support of {fam.name}")
    if fam.degree is not None and len(chosen) == sum(1 for c in fam.poly if c > 0):
        raise InvalidInputError("The index set must be a proper subset of the support")
    return chosen


def generalized_scheme(fam: OffspringFamily, index_set: Iterable[int], m: int,
                       trunc: Optional[int] = None) -> Series:
    """f_0 = g and f_j = z(ψ - ψ_I)(f_{j-1}) where ψ_I keeps the terms with index in I."""
    chosen = _check_index_set(fam, index_set)
    _check_series_k(m)
    trunc = fam.trunc if trunc is None else trunc
    partial = {i: fam.coeff(i) for i in chosen}
    f = solve_g(fam, trunc)
    for _ in range(m):
        f = S.shift(compose_psi(fam, f) - compose_partial(partial, f), 1)
    return f


def limit_constant_generalized(fam: OffspringFamily, index_set: Iterable[int], m: int) -> LimitConstant:
    """ρ^m ∏_{j<m} (ψ' - ψ_I')(f_j(ρ)) along f_0(ρ) = τ, f_j(ρ) = ρ(ψ - ψ_I)(f_{j-1}(ρ))."""
    chosen = _check_index_set(fam, index_set)
    if fam.support_gcd != 1:
        raise UnsupportedError(f"Generalised limits need Q = 1; {fam.name} has Q = {fam.support_gcd}")
    return _walk(fam, m, chosen, f"generalised I={sorted(chosen)}")


# ----- tables -----

def convergence_table(fam: OffspringFamily, k: int, n_max: int) -> BorderTable:
    """Rows (n, A_n, A_n^(k), ratio, |ratio - c_k|) for 1 ≤ n ≤ n_max with A_n > 0."""
    if n_max < 1:
        raise DomainError(f"n_max must be at least 1, got {n_max}")
    g = solve_g(fam, n_max)
    g_k = iterate_scheme(fam, k, n_max)
    try:
        c_k: Optional[float] = limit_constant(fam, k).c_k
    except InvalidInputError as e:
        logger.info("[Border] No limit constant for %s: %s", fam.name, e)
        c_k = None
    q = fam.support_gcd
    rows = []
    for n in range(1, n_max + 1):
        a_n = g.coeff(n)
        if (n - 1) % q or a_n == 0:
            continue
        a_n_k = g_k.coeff(n)
        ratio = a_n_k / a_n
        ratio_float = float(ratio)
        gap = round_sig(abs(ratio_float - c_k)) if c_k is not None else None
        rows.append(BorderRow(n=n, a_n=format_exact(a_n), a_n_k=format_exact(a_n_k), ratio=format_exact(ratio),
                              ratio_float=round_sig(ratio_float), gap=gap))
    return BorderTable(family=fam.name, k=k, c_k=c_k, rows=rows)
