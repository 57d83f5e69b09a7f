"""Offspring families ψ and the quantities derived from them.

A family is a power series ψ(w) = Σ b_j w^j with b_0 > 0, nonnegative
coefficients and at least one b_j > 0 for j ≥ 1. Besides finite polynomials
two rule-defined families are built in: the geometric ψ = 1/(1-w) (plane
trees) and the exponential ψ = e^w (Cayley trees).
"""

import json
import logging
import math
from enum import Enum
from functools import lru_cache, reduce
from pathlib import Path
from typing import Any, FrozenSet, List, Optional, Tuple, Union

import gmpy2
from gmpy2 import mpq
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from scipy import optimize

from gw_border import series as S
from gw_border.errors import (
    DomainError,
    InternalError,
    InvalidInputError,
    NotInKStarError,
    ResidueClassError,
    TruncationError,
)
from gw_border.series import Series
from gw_border.settings import get_settings

logger = logging.getLogger(__name__)


class FamilyKind(str, Enum):
    POLYNOMIAL = "polynomial"
    GEOMETRIC = "geometric"
    EXPONENTIAL = "exponential"


class OffspringFamily(BaseModel):
    """An offspring generating function ψ in the class K."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    name: str
    kind: FamilyKind
    poly: Tuple[Any, ...] = ()
    trunc: int = Field(256, ge=0, description="Default truncation order for series work")
    apex_hint: Optional[str] = Field(None, description="Known exact apex τ, as 'p/q'")

    @model_validator(mode="after")
    def _check_class_k(self):
        if self.kind is not FamilyKind.POLYNOMIAL:
            return self
        if not self.poly:
            raise InvalidInputError(f"Family {self.name!r} has no coefficients")
        if any(c < 0 for c in self.poly):
            raise InvalidInputError(f"Family {self.name!r} has a negative coefficient")
        if self.poly[0] <= 0:
            raise InvalidInputError(f"Family {self.name!r} needs b_0 > 0 (leaves must be allowed)")
        if all(c == 0 for c in self.poly[1:]):
            raise InvalidInputError(f"Family {self.name!r} is constant; ψ must be nonconstant")
        if self.poly[-1] == 0:
            raise InvalidInputError(f"Family {self.name!r} has trailing zero coefficients")
        return self

    @property
    def degree(self) -> Optional[int]:
        """Polynomial degree, or None when ψ has infinitely many terms."""
        if self.kind is FamilyKind.POLYNOMIAL:
            return len(self.poly) - 1
        return None

    @property
    def radius(self) -> float:
        return 1.0 if self.kind is FamilyKind.GEOMETRIC else math.inf

    @property
    def b0(self) -> mpq:
        return self.coeff(0)

    def coeff(self, j: int) -> mpq:
        if j < 0:
            raise DomainError(f"Coefficient index must be nonnegative, got {j}")
        if self.kind is FamilyKind.POLYNOMIAL:
            return self.poly[j] if j < len(self.poly) else mpq(0)
        if self.kind is FamilyKind.GEOMETRIC:
            return mpq(1)
        return mpq(1, gmpy2.fac(j))

    def in_support(self, j: int) -> bool:
        return j >= 0 and self.coeff(j) > 0

    @property
    def support_gcd(self) -> int:
        """Q: gcd of the positive indices j with b_j > 0."""
        if self.kind is not FamilyKind.POLYNOMIAL:
            return 1
        return reduce(math.gcd, (j for j, c in enumerate(self.poly) if j > 0 and c > 0))

    def describe(self) -> str:
        if self.kind is FamilyKind.GEOMETRIC:
            return "1/(1-w)"
        if self.kind is FamilyKind.EXPONENTIAL:
            return "exp(w)"
        terms = []
        for j, c in enumerate(self.poly):
            if c == 0:
                continue
            coefficient = "" if (c == 1 and j > 0) else str(c)
            power = "" if j == 0 else ("w" if j == 1 else f"w^{j}")
            terms.append(f"{coefficient}{'*' if coefficient and power else ''}{power}")
        return " + ".join(terms)


class KhinchinQuantities(BaseModel):
    """Apex data of a family in K*: the point where the tilted mean equals one."""

    model_config = ConfigDict(frozen=True)

    tau: float
    rho: float
    psi_tau: float
    sigma_tau: float
    q: int
    tau_exact: Optional[str] = None
    in_k_star: bool = True


class CustomFamilySpec(BaseModel):
    """Schema of a custom family file (--psi-file)."""

    coeffs: List[Union[int, str]] = Field(..., min_length=1, description="b_0, b_1, ... as integers or 'p/q' strings")
    egf: bool = Field(False, description="When true the coefficients are divided by j!")
    name: Optional[str] = Field(None, description="Optional display name")


# ----- construction -----

BUILTIN_FAMILIES = ("cayley", "plane", "binary", "motzkin", "unary")


def builtin_family(name: str, trunc: int = 256) -> OffspringFamily:
    key = name.strip().lower()
    if key == "cayley":
        return OffspringFamily(name="cayley", kind=FamilyKind.EXPONENTIAL, trunc=trunc, apex_hint="1")
    if key == "plane":
        return OffspringFamily(name="plane", kind=FamilyKind.GEOMETRIC, trunc=trunc, apex_hint="1/2")
    if key == "binary":
        return OffspringFamily(name="binary", kind=FamilyKind.POLYNOMIAL, poly=(mpq(1), mpq(0), mpq(1)),
                               trunc=trunc, apex_hint="1")
    if key == "motzkin":
        return OffspringFamily(name="motzkin", kind=FamilyKind.POLYNOMIAL, poly=(mpq(1), mpq(1), mpq(1)),
                               trunc=trunc, apex_hint="1")
    if key == "unary":
        return OffspringFamily(name="unary", kind=FamilyKind.POLYNOMIAL, poly=(mpq(1), mpq(1)), trunc=trunc)
    raise InvalidInputError(f"Unknown family {name!r}; choose one of {', '.join(BUILTIN_FAMILIES)}")


def polynomial_family(coeffs: List[Any], name: str = "custom", egf: bool = False,
                      trunc: int = 256) -> OffspringFamily:
    values = [S.to_mpq(c) for c in coeffs]
    if egf:
        values = [c / gmpy2.fac(j) for j, c in enumerate(values)]
    while len(values) > 1 and values[-1] == 0:
        values.pop()
    return OffspringFamily(name=name, kind=FamilyKind.POLYNOMIAL, poly=tuple(values), trunc=trunc)


def load_custom_family(path: str, trunc: int = 256) -> OffspringFamily:
    """
    Load a family from a JSON file such as ``{"coeffs": ["1", "0", "1"], "egf": false}``.

    Args:
        path: JSON file path
        trunc: Default truncation order for the family

    Returns:
        Polynomial OffspringFamily
    """
    source = Path(path)
    try:
        raw = json.loads(source.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InvalidInputError(f"Family file not found: {path}")
    except json.JSONDecodeError as e:
        raise InvalidInputError(f"Family file {path} is not valid JSON: {e}")
    try:
        spec = CustomFamilySpec.model_validate(raw)
    except ValidationError as e:
        raise InvalidInputError(f"Family file {path} does not match the schema: {e}")
    name = spec.name or f"custom:{source.stem}"
    logger.info("[Family] Loaded %s from %s (%d coefficients, egf=%s)", name, path, len(spec.coeffs), spec.egf)
    return polynomial_family(spec.coeffs, name=name, egf=spec.egf, trunc=trunc)


def resolve_family(family: Optional[str] = None, psi_file: Optional[str] = None,
                   trunc: int = 256) -> OffspringFamily:
    if bool(family) == bool(psi_file):
        raise InvalidInputError("Give exactly one of a built-in family name or a family file")
    if family:
        return builtin_family(family, trunc)
    return load_custom_family(psi_file, trunc)


# ----- exact series of ψ -----

def psi_series(fam: OffspringFamily, trunc: Optional[int] = None) -> Series:
    trunc = fam.trunc if trunc is None else trunc
    return S.exact_series([fam.coeff(j) for j in range(trunc + 1)], trunc)


def _require_composable(inner: Series) -> None:
    if not inner.is_exact:
        raise InvalidInputError("ψ composition works on exact series")
    if inner.coeffs[0] != 0:
        raise DomainError("ψ can only be composed with a series vanishing at 0")


def compose_psi(fam: OffspringFamily, inner: Series) -> Series:
    """Exact ψ(inner)."""
    _require_composable(inner)
    if fam.kind is FamilyKind.GEOMETRIC:
        return S.reciprocal(S.constant(1, inner.trunc) - inner)
    if fam.kind is FamilyKind.EXPONENTIAL:
        return S.exp_of(inner)
    return S.compose(S.extend(S.exact_series(fam.poly), inner.trunc), inner)


def compose_psi_prime(fam: OffspringFamily, inner: Series) -> Series:
    """Exact ψ'(inner)."""
    _require_composable(inner)
    if fam.kind is FamilyKind.GEOMETRIC:
        p = S.reciprocal(S.constant(1, inner.trunc) - inner)
        return p * p
    if fam.kind is FamilyKind.EXPONENTIAL:
        return S.exp_of(inner)
    return S.compose(S.extend(S.derivative(S.exact_series(fam.poly)), inner.trunc), inner)


def compose_partial(coeffs: dict, inner: Series) -> Series:
    """Σ_{i} coeffs[i]·inner^i for a finite index set (the truncation ψ_I of ψ)."""
    _require_composable(inner)
    degree = max(coeffs) if coeffs else 0
    poly = S.exact_series([coeffs.get(j, 0) for j in range(degree + 1)])
    return S.compose(S.extend(poly, inner.trunc), inner)


# ----- scalar evaluation -----

def _check_scalar_domain(fam: OffspringFamily, x: float) -> None:
    if not (0.0 <= x < fam.radius) or math.isnan(x):
        raise DomainError(f"Argument {x!r} outside [0, {fam.radius}) for family {fam.name}")


def _rule_ratio(kind: FamilyKind, j: int, d: int, x: float) -> float:
    # term_{j+1} / term_j for the d-th derivative series
    if kind is FamilyKind.GEOMETRIC:
        return x * (j + 1) / (j + 1 - d)
    return x / (j + 1 - d)


def psi_value(fam: OffspringFamily, x: float, derivative: int = 0,
              exclude: FrozenSet[int] = frozenset()) -> float:
    """
    Evaluate the derivative-th derivative of ψ at x, skipping the indices in exclude.

    Rule-defined families are summed term by term until a ratio-test bound on
    the tail drops below the configured tolerance relative to the partial sum.

    Args:
        fam: The family
        x: Evaluation point in [0, R)
        derivative: Order of derivative (0, 1 or 2 in practice)
        exclude: Indices j whose terms b_j w^j are left out

    Returns:
        The value as a float
    """
    x = float(x)
    _check_scalar_domain(fam, x)
    d = derivative
    if fam.kind is FamilyKind.POLYNOMIAL:
        total = 0.0
        for j in range(len(fam.poly) - 1, d - 1, -1):
            if j in exclude or fam.poly[j] == 0:
                continue
            total += float(fam.poly[j]) * math.perm(j, d) * x ** (j - d)
        return total

    cfg = get_settings().family
    j = d
    term = float(math.factorial(d)) if fam.kind is FamilyKind.GEOMETRIC else 1.0
    total = 0.0
    for _ in range(cfg.max_terms):
        if j not in exclude:
            total += term
        nxt = term * _rule_ratio(fam.kind, j, d, x)
        if nxt == 0.0:
            return total
        r = _rule_ratio(fam.kind, j + 1, d, x)
        if r < 1.0 and total > 0.0 and nxt / (1.0 - r) <= cfg.tail_tolerance * total:
            return total
        term = nxt
        j += 1
    raise DomainError(f"ψ^({d})({x}) did not converge within {cfg.max_terms} terms for {fam.name}")


def mean_fn(fam: OffspringFamily, t: float) -> float:
    """m(t) = tψ'(t)/ψ(t), the mean of the t-tilted offspring law."""
    return t * psi_value(fam, t, 1) / psi_value(fam, t)


def variance_fn(fam: OffspringFamily, t: float) -> float:
    """σ²(t) = t·m'(t), the variance of the t-tilted offspring law."""
    p0, p1, p2 = psi_value(fam, t), psi_value(fam, t, 1), psi_value(fam, t, 2)
    m_prime = (p1 + t * p2) / p0 - t * p1 * p1 / (p0 * p0)
    return t * m_prime


def _bisect_apex(fam: OffspringFamily) -> float:
    cfg = get_settings().family
    hi = 1.0
    ceiling = fam.radius * (1.0 - cfg.apex_radius_margin) if math.isfinite(fam.radius) else math.inf
    hi = min(hi, ceiling)
    while mean_fn(fam, hi) <= 1.0:
        if hi >= ceiling or hi > 1e300:
            raise NotInKStarError(f"Family {fam.name} is not in K*: the tilted mean never reaches 1 inside its disc")
        hi = min(2.0 * hi, ceiling)
    try:
        return optimize.bisect(lambda t: mean_fn(fam, t) - 1.0, 0.0, hi,
                               xtol=1e-300, rtol=cfg.apex_rtol, maxiter=cfg.apex_max_iter)
    except RuntimeError as e:
        raise InternalError(f"Apex bisection for {fam.name} failed: {e}")


@lru_cache(maxsize=128)
def apex(fam: OffspringFamily) -> KhinchinQuantities:
    """Solve m(τ) = 1 and report τ, ρ = τ/ψ(τ), ψ(τ), σ(τ) and Q."""
    if fam.degree is not None and fam.degree < 2:
        raise NotInKStarError(f"Family {fam.name} is not in K*: degree {fam.degree}, the apex needs degree ≥ 2")
    if fam.apex_hint:
        tau = float(S.to_mpq(fam.apex_hint))
    else:
        tau = _bisect_apex(fam)
        logger.info("[Family] Apex of %s found by bisection: τ=%.15g", fam.name, tau)
    psi_tau = psi_value(fam, tau)
    return KhinchinQuantities(
        tau=tau,
        rho=tau / psi_tau,
        psi_tau=psi_tau,
        sigma_tau=math.sqrt(variance_fn(fam, tau)),
        q=fam.support_gcd,
        tau_exact=fam.apex_hint,
    )


def is_defective(fam: OffspringFamily, t: float) -> bool:
    """True when the t-tilted progeny law has mass at infinity (t beyond the apex)."""
    try:
        tau = apex(fam).tau
    except NotInKStarError:
        return False
    return t > tau * (1.0 + 1e-12)


# ----- the tree function g -----

def height_iterate(fam: OffspringFamily, h: int, trunc: int) -> Series:
    """g_h = zψ(g_{h-1}) from g_0 = b_0 z: weighted count of trees of height ≤ h."""
    if h < 0:
        raise DomainError(f"Height must be nonnegative, got {h}")
    g = S.extend(S.monomial(1, 1, coefficient=fam.b0), trunc)
    for _ in range(h):
        g = S.shift(compose_psi(fam, g), 1)
    return g


def lagrange_coefficient(fam: OffspringFamily, n: int) -> mpq:
    """A_n = (1/n)·[w^{n-1}] ψ(w)^n."""
    if n < 1:
        raise DomainError(f"Lagrange coefficient needs n ≥ 1, got {n}")
    return S.power(psi_series(fam, n - 1), n).coeff(n - 1) / n


def _newton_g(fam: OffspringFamily, trunc: int) -> Series:
    g = S.extend(S.monomial(1, 1, coefficient=fam.b0), max(trunc, 1))
    g = S.truncate(g, min(1, trunc))
    prec = g.trunc
    while prec < trunc:
        prec = min(2 * prec, trunc)
        g = S.extend(g, prec)
        residual = g - S.shift(compose_psi(fam, g), 1)
        slope = S.constant(1, prec) - S.shift(compose_psi_prime(fam, g), 1)
        g = g - residual * S.reciprocal(slope)
    return g


@lru_cache(maxsize=64)
def solve_g(fam: OffspringFamily, trunc: Optional[int] = None, method: str = "newton") -> Series:
    """
    Exact coefficients A_0..A_trunc of the solution of g = zψ(g).

    Args:
        fam: The family
        trunc: Truncation order (default: the family's)
        method: "newton" (default), "lagrange" or "fixed_point"

    Returns:
        Exact Series with A_0 = 0 and A_1 = b_0
    """
    trunc = fam.trunc if trunc is None else trunc
    if trunc < 0:
        raise TruncationError(f"Truncation order must be nonnegative, got {trunc}")
    if method == "newton":
        g = _newton_g(fam, trunc)
    elif method == "lagrange":
        g = S.exact_series([0] + [lagrange_coefficient(fam, n) for n in range(1, trunc + 1)], trunc)
    elif method == "fixed_point":
        g = height_iterate(fam, trunc, trunc)
    else:
        raise InvalidInputError(f"Unknown method {method!r} for solve_g")
    if g.coeffs[0] != 0 or (trunc >= 1 and g.coeffs[1] != fam.b0):
        raise InternalError(f"Tree function of {fam.name} failed its normalisation check")
    logger.debug("[Family] Solved g for %s up to z^%d via %s", fam.name, trunc, method)
    return g


def coeff_H_of_g(fam: OffspringFamily, H: Series, n: int) -> mpq:
    """[z^n] H(g(z)) = (1/n)·[w^{n-1}] H'(w)ψ(w)^n for n ≥ 1."""
    if n < 1:
        raise DomainError(f"coeff_H_of_g needs n ≥ 1, got {n}")
    if not H.is_exact:
        raise InvalidInputError("coeff_H_of_g needs an exact series H")
    if H.trunc < n:
        raise TruncationError(f"H is truncated at {H.trunc} but coefficient {n} was requested")
    h_prime = S.derivative(S.truncate(H, n))
    return (h_prime * S.power(psi_series(fam, n - 1), n)).coeff(n - 1) / n


def check_residue(fam: OffspringFamily, n: int) -> None:
    q = fam.support_gcd
    if n < 1 or (n - 1) % q != 0:
        raise ResidueClassError(n, q)


def otter_asymptotic(fam: OffspringFamily, n: int) -> float:
    """Q/√(2π) · τ/σ(τ) · n^{-3/2} · (ψ(τ)/τ)^n."""
    check_residue(fam, n)
    k = apex(fam)
    log_value = (math.log(k.q) - 0.5 * math.log(2.0 * math.pi) + math.log(k.tau) - math.log(k.sigma_tau)
                 - 1.5 * math.log(n) + n * (math.log(k.psi_tau) - math.log(k.tau)))
    try:
        return math.exp(log_value)
    except OverflowError:
        raise DomainError(f"Otter estimate for n={n} exceeds double range")


# ----- tilted laws -----

def tilted_pgf(fam: OffspringFamily, t: float, trunc: Optional[int] = None) -> Series:
    """Float series of P(Y_t = j) = b_j t^j / ψ(t)."""
    t = float(t)
    psi_t = psi_value(fam, t)
    if trunc is None:
        trunc = fam.degree if fam.degree is not None else fam.trunc
    try:
        probs = [float(fam.coeff(j)) * t ** j / psi_t for j in range(trunc + 1)]
    except OverflowError:
        raise DomainError(f"Tilted law at t={t} overflows for {fam.name}")
    return S.float_series(probs, trunc)


def progeny_pgf(fam: OffspringFamily, t: float, trunc: Optional[int] = None) -> Series:
    """
    Float series of P(#T_t = n) = A_n t^{n-1} / ψ(t)^n.

    For t beyond the apex the law is defective (coefficients sum to q(t) < 1);
    a warning is logged.
    """
    t = float(t)
    _check_scalar_domain(fam, t)
    trunc = fam.trunc if trunc is None else trunc
    if is_defective(fam, t):
        logger.warning("[Family] t=%.6g exceeds the apex of %s; progeny law is defective", t, fam.name)
    g = solve_g(fam, trunc)
    probs = [0.0] * (trunc + 1)
    if t == 0.0:
        if trunc >= 1:
            probs[1] = 1.0
        return S.float_series(probs, trunc)
    log_t, log_psi = math.log(t), math.log(psi_value(fam, t))
    for n in range(1, trunc + 1):
        a_n = g.coeffs[n]
        if a_n > 0:
            probs[n] = math.exp(float(gmpy2.log(a_n)) + (n - 1) * log_t - n * log_psi)
    return S.float_series(probs, trunc)


def extinction_prob(fam: OffspringFamily, t: float) -> float:
    """q(t): smallest fixed point of x = ψ(tx)/ψ(t) in [0, 1]."""
    t = float(t)
    _check_scalar_domain(fam, t)
    if not is_defective(fam, t):
        return 1.0
    psi_t = psi_value(fam, t)
    x = 0.0
    for _ in range(1_000_000):
        nxt = psi_value(fam, t * x) / psi_t
        if abs(nxt - x) < 1e-15:
            return nxt
        x = nxt
    raise InternalError(f"Extinction probability iteration did not settle for {fam.name} at t={t}")
