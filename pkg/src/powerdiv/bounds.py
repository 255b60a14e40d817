"""Explicit Kolmogorov-distance error bounds for Poisson and Gaussian approximation.

Every bound is returned term by term. Hypotheses of the underlying results
are checked and reported through ``valid``/``violated`` rather than
enforced; evaluating outside them is the caller's decision.
"""
from __future__ import annotations

import csv
import functools
import io
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from . import kernels
from .report import dumps, format_float
from .scheme import ClassificationScheme, harmonic, moment, power, var_log, var_power

BERRY_ESSEEN = 0.4748
OCCUPANCY_PMAX = 1.0 - math.sqrt(3.0) / 2.0

TERM_FIELDS = ("term_occupancy", "term_c", "term_triple", "term_d")


@dataclass(frozen=True)
class BoundBreakdown:
    name: str
    term_occupancy: float
    term_c: float
    term_triple: float
    term_d: float
    mu: float
    c_lambda_val: float
    d_lambda_val: float
    violated: tuple[str, ...] = ()
    total: float = field(init=False)
    valid: bool = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "total", self.term_occupancy + self.term_c + self.term_triple + self.term_d)
        object.__setattr__(self, "valid", not self.violated)
        object.__setattr__(self, "violated", tuple(self.violated))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["violated"] = list(self.violated)
        return d

    def to_json(self) -> str:
        return dumps(self.to_dict())

    CSV_COLUMNS = ("name", *TERM_FIELDS, "total", "valid")

    def csv_row(self) -> list:
        return [self.name, *(format_float(getattr(self, f)) for f in TERM_FIELDS), format_float(self.total), self.valid]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_COLUMNS)
        w.writerow(self.csv_row())
        return buf.getvalue()


@dataclass(frozen=True)
class GeneralizedSpec:
    """Inputs of the general ``T = W + R`` bound.

    ``m`` is the first non-vanishing level of ``g``, ``h_values`` the per-cell
    weights ``h(p_j)`` and ``var_r`` the variance of the remainder.
    """

    m: int
    h_values: np.ndarray
    var_r: float

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"m must be an integer >= 1, got {self.m}")
        if not self.var_r >= 0:
            raise ValueError(f"var_r must be non-negative, got {self.var_r}")
        h = np.asarray(self.h_values, dtype=np.float64)
        if h.ndim != 1 or np.any(h <= 0):
            raise ValueError("h_values must be a vector of positive weights")
        object.__setattr__(self, "h_values", h)
        object.__setattr__(self, "m", int(self.m))


def _pow(base: float, exponent: float) -> float:
    """``base**exponent`` for ``base >= 0``, in log space; overflow gives ``inf``."""
    if base == 0.0:
        return 0.0 if exponent > 0 else 1.0
    t = exponent * math.log(base)
    if t > 709.0:
        return math.inf
    return math.exp(t)


def _log_binom(n: int, m: int) -> float:
    return math.log(math.comb(n, m))


def cell_pi(scheme: ClassificationScheme, n: int, m: int = 2) -> np.ndarray:
    """``pi_j = C(n, m) p_j**m (1 - p_j)**(n - m)`` for every cell."""
    n, m = int(n), int(m)
    if m < 1 or n < m:
        raise ValueError(f"need n >= m >= 1, got n={n}, m={m}")
    if scheme.kind == "uniform":
        return np.full(scheme.r, _uniform_pi(n, scheme.r, m))
    p = scheme.probs
    with np.errstate(divide="ignore"):
        return np.exp(_log_binom(n, m) + m * np.log(p) + (n - m) * np.log1p(-p))


# Above this many decimal digits in r**n the exact rational route gets slow.
_EXACT_DIGITS = 20_000


@functools.lru_cache(maxsize=256)
def _uniform_pi_sums(n: int, r: int, m: int) -> tuple[float, float, float, float]:
    """``(pi, mu, sum p_j pi_j, sum pi_j**2)`` for ``r`` equally likely cells.

    ``pi = C(n, m) (r - 1)**(n - m) / r**n`` is rational, so for moderate
    sizes every output is the correctly rounded value of the exact quantity.
    """
    if n * math.log10(max(r, 2)) <= _EXACT_DIGITS:
        pi = Fraction(math.comb(n, m) * (r - 1) ** (n - m), r**n)
        return float(pi), float(r * pi), float(pi), float(r * pi * pi)
    p = 1.0 / r
    pi = math.exp(_log_binom(n, m) + m * math.log(p) + (n - m) * math.log1p(-p))
    return pi, r * pi, pi, r * pi * pi


def _uniform_pi(n: int, r: int, m: int) -> float:
    return _uniform_pi_sums(int(n), int(r), int(m))[0]


def _pi_sums(scheme: ClassificationScheme, n: int, m: int) -> tuple[float, float, float]:
    """``(mu, sum p_j pi_j, sum pi_j**2)``."""
    if scheme.kind == "uniform":
        return _uniform_pi_sums(n, scheme.r, m)[1:]
    pi = cell_pi(scheme, n, m)
    cs = kernels.compensated_sum
    return cs(pi), cs(scheme.probs * pi), cs(pi * pi)


def mu(scheme: ClassificationScheme, n: int, m: int = 2) -> float:
    """Mean of the approximating Poisson law, ``sum_j pi_j``."""
    if int(n) < int(m) or int(m) < 1:
        raise ValueError(f"need n >= m >= 1, got n={n}, m={m}")
    return _pi_sums(scheme, int(n), int(m))[0]


def c_lambda(scheme: ClassificationScheme, lam: float) -> float:
    """``max_j |1 / (p_j**lam E[P**-lam]) - 1|``.

    The weight is monotone in ``p_j`` so the maximum sits at the smallest or
    largest cell probability.
    """
    lam = float(lam)
    if not lam > -1:
        raise ValueError(f"lambda must be > -1, got {lam}")
    if lam == 0.0 or scheme.is_uniform:
        return 0.0
    e = moment(scheme, -lam)
    return max(abs(scheme.min_prob ** (-lam) / e - 1.0), abs(scheme.max_prob ** (-lam) / e - 1.0))


def _two_pow_minus_one(lam: float) -> float:
    return math.expm1(lam * math.log(2.0))


def d_lambda(scheme: ClassificationScheme, n: int, lam: float) -> float:
    """Scaled variance of ``P**-lam`` (``log P`` when ``lam == 0``)."""
    lam = float(lam)
    if not lam > -1:
        raise ValueError(f"lambda must be > -1, got {lam}")
    if scheme.is_uniform:
        return 0.0
    if lam == 0.0:
        return n * var_log(scheme) / (4.0 * math.log(2.0) ** 2)
    e = moment(scheme, -lam)
    return n * var_power(scheme, -lam) / (4.0 * _two_pow_minus_one(lam) ** 2 * e * e)


def theorem1_validity(n: int, pmax: float) -> list[str]:
    violated = []
    if n < 4:
        violated.append("n >= 4")
    if pmax > 0.13:
        violated.append("max p <= 0.13")
    if not (n + 1) * pmax < 4:
        violated.append("(n+1)max p < 4")
    return violated


def _min_inv(mu_val: float) -> float:
    return 1.0 if mu_val <= 1.0 else 1.0 / mu_val


def _occupancy_core(n: int, mu_val: float, s_ppi: float, s_pi2: float, m: int) -> float:
    return _min_inv(mu_val) * (6.0 * n * s_ppi * s_ppi + s_pi2 + 6.0 * m * m * mu_val * mu_val / n)


def _term_c(mu_val: float, c: float) -> float:
    if c == 0.0:
        return 0.0
    return 18.0 * _pow(5.55 * mu_val * c, 0.49 / c)


def _term_d(d: float, mu_val: float) -> float:
    first = 8.1 * d
    if mu_val == 0.0:
        return first
    return min(first, 2.15 * (d / mu_val) ** (1.0 / 3.0))


def _term_triple(n: int, mu_val: float, pmax: float, m: int = 2) -> float:
    denom = (m + 2) - (n + 1) * pmax
    if denom <= 0:
        return math.inf
    if m == 2:
        return 8.0 * n * mu_val * pmax / denom
    return 6.0 * (m + 2) * n * mu_val * pmax / ((m + 1) * denom)


def occupancy_bound(scheme: ClassificationScheme, n: int, m: int = 2) -> float:
    """Poisson approximation bound for the number of cells holding exactly ``m`` trials.

    ``min(1, 1/mu) * (6n [sum p_j pi_j]**2 + sum pi_j**2 + 6 m**2 mu**2 / n)``;
    with ``m = 2`` the last term is ``24 mu**2 / n``.
    """
    n, m = int(n), int(m)
    mu_val, s_ppi, s_pi2 = _pi_sums(scheme, n, m)
    return _occupancy_core(n, mu_val, s_ppi, s_pi2, m)


def occupancy_validity(scheme: ClassificationScheme, n: int) -> list[str]:
    violated = []
    if n < 4:
        violated.append("n >= 4")
    if scheme.max_prob > OCCUPANCY_PMAX:
        violated.append("max p <= 1 - sqrt(3)/2")
    return violated


def theorem1_bound(scheme: ClassificationScheme, n: int, lam: float) -> BoundBreakdown:
    """Four-term Poisson approximation bound for the normalised statistic."""
    n = int(n)
    lam = float(lam)
    if not lam > -1:
        raise ValueError(f"lambda must be > -1, got {lam}")
    mu_val, s_ppi, s_pi2 = _pi_sums(scheme, n, 2)
    pmax = scheme.max_prob
    c = c_lambda(scheme, lam)
    d = d_lambda(scheme, n, lam)
    return BoundBreakdown(
        name="theorem1",
        term_occupancy=45.0 * _occupancy_core(n, mu_val, s_ppi, s_pi2, 2),
        term_c=_term_c(mu_val, c),
        term_triple=_term_triple(n, mu_val, pmax),
        term_d=_term_d(d, mu_val),
        mu=mu_val,
        c_lambda_val=c,
        d_lambda_val=d,
        violated=tuple(theorem1_validity(n, pmax)),
    )


def llr_bound(scheme: ClassificationScheme, n: int) -> BoundBreakdown:
    """The log-likelihood ratio case ``lambda = 0``, where the ``c`` term vanishes."""
    return _renamed(theorem1_bound(scheme, n, 0.0), "llr")


def remark1_extra(mu: float, eta: float) -> float:
    """Extra cost of approximating by Poisson(eta/2) instead of Poisson(mu)."""
    if mu < 0 or eta < 0:
        raise ValueError("mu and eta must be non-negative")
    half = eta / 2.0
    return 45.0 * min(math.sqrt(2.0 / math.e) * abs(math.sqrt(mu) - math.sqrt(half)), abs(mu - half))


def uniform_terms(n: int, r: int) -> tuple[float, float]:
    first = 45.0 * n**3 / r**4 * (3.0 * n * n / 2.0 + n * r / 4.0 + 6.0 * r * r)
    second = 4.0 * n**3 / (r * (4.0 * r - (n + 1)))
    return first, second


def uniform_bound(n: int, r: int) -> float:
    """Closed-form bound for equally likely cells; independent of lambda."""
    first, second = uniform_terms(int(n), int(r))
    return first + second


def uniform_validity(n: int, r: int) -> list[str]:
    violated = []
    if n < 4:
        violated.append("n >= 4")
    if r < 8:
        violated.append("r >= 8")
    if not (n + 1) / r < 4:
        violated.append("(n+1)/r < 4")
    return violated


def uniform_breakdown(n: int, r: int) -> BoundBreakdown:
    n, r = int(n), int(r)
    first, second = uniform_terms(n, r)
    return BoundBreakdown(
        name="uniform",
        term_occupancy=first,
        term_c=0.0,
        term_triple=second,
        term_d=0.0,
        mu=_uniform_pi_sums(n, r, 2)[1] if n >= 2 else 0.0,
        c_lambda_val=0.0,
        d_lambda_val=0.0,
        violated=tuple(uniform_validity(n, r)),
    )


def dpd_c_lambda(r: int, a: float, lam: float) -> float:
    """``c_lambda`` of the discrete power distribution via harmonic numbers.

    The cell weight ``z_r(a) j**(a lam) / z_r(a(1 - lam))`` is monotone in
    ``j``, so the largest deviation from 1 is at ``j = r`` or at ``j = 1``;
    both ends are needed (at ``r = 1e4, a = 0.2, lam = 1`` the ``j = 1`` end
    dominates).
    """
    z1 = harmonic(r, a)
    zl = harmonic(r, a * (1.0 - lam))
    return max(abs(z1 * float(r) ** (a * lam) / zl - 1.0), abs(z1 / zl - 1.0))


def dpd_bound(n: int, r: int, a: float, lam: float) -> BoundBreakdown:
    """Bound for the discrete power distribution ``p_j ~ j**(-a)``.

    Built from generalised harmonic numbers with the first arm of each
    minimum taken. Closed forms are used for ``lam > 0``; at ``a == 0`` the
    ``c`` and ``d`` terms vanish for every ``lam``. For ``a > 0`` and
    ``lam <= 0`` the general bound is evaluated on the explicit scheme.
    """
    n, r, a, lam = int(n), int(r), float(a), float(lam)
    if not 0.0 <= a <= 1.0:
        raise ValueError(f"a must lie in [0, 1], got {a}")
    if not lam > -1:
        raise ValueError(f"lambda must be > -1, got {lam}")
    if a > 0.0 and lam <= 0.0:
        return _renamed(theorem1_bound(power(a, r), n, lam), "dpd")
    z1 = harmonic(r, a)
    z2 = harmonic(r, 2 * a)
    z3 = harmonic(r, 3 * a)
    z4 = harmonic(r, 4 * a)
    t1 = 45.0 * n**3 / z1**4 * (3.0 * n * n * z3 * z3 / (2.0 * z1 * z1) + n * z4 / 4.0 + 6.0 * z2 * z2)
    t3 = 4.0 * n**3 * z2 / (z1 * z1 * (4.0 * z1 - (n + 1)))
    if a == 0.0:
        c = d = 0.0
        t2 = t4 = 0.0
    else:
        c = dpd_c_lambda(r, a, lam)
        t2 = 0.0 if c == 0.0 else 18.0 * _pow(2.78 * n * n * c * z2 / (z1 * z1), 0.49 / c)
        ratio = harmonic(r, a * (1.0 - 2.0 * lam)) * z1 / harmonic(r, a * (1.0 - lam)) ** 2 - 1.0
        d = n / (4.0 * _two_pow_minus_one(lam) ** 2) * ratio
        t4 = 2.025 * n / _two_pow_minus_one(lam) ** 2 * ratio
    pmax = 1.0 / z1
    if 4.0 * z1 - (n + 1) <= 0:
        t3 = math.inf
    return BoundBreakdown(
        name="dpd",
        term_occupancy=t1,
        term_c=t2,
        term_triple=t3,
        term_d=t4,
        mu=n * n * z2 / (2.0 * z1 * z1),
        c_lambda_val=c,
        d_lambda_val=d,
        violated=tuple(theorem1_validity(n, pmax)),
    )


def _renamed(b: BoundBreakdown, name: str) -> BoundBreakdown:
    return BoundBreakdown(
        name=name,
        term_occupancy=b.term_occupancy,
        term_c=b.term_c,
        term_triple=b.term_triple,
        term_d=b.term_d,
        mu=b.mu,
        c_lambda_val=b.c_lambda_val,
        d_lambda_val=b.d_lambda_val,
        violated=b.violated,
    )


def gaussian_bound(scheme: ClassificationScheme, n: int, lam: float) -> float:
    """Kolmogorov bound between ``(T~ - mu)/sqrt(mu)`` and a standard normal."""
    b = theorem1_bound(scheme, n, lam)
    if b.mu == 0.0:
        raise ValueError("Gaussian bound needs mu > 0")
    return b.total + BERRY_ESSEEN / math.sqrt(b.mu)


def gaussian_uniform_terms(n: int, r: int) -> tuple[float, float, float]:
    n, r = int(n), int(r)
    if n < 2:
        raise ValueError("Gaussian bound needs n >= 2")
    # (1 - 1/r)**(2 - n) in log space; the exponent is large at r ~ 1e7, n ~ 1e4.
    inflate = math.exp((2 - n) * math.log1p(-1.0 / r))
    first = 90.0 * n**3 / ((n - 1) ** 2 * float(r) ** 3) * inflate * (3.0 * n * n / 2.0 + n * r / 4.0 + 6.0 * float(r) ** 2)
    second = 4.0 * n**3 / (r * (4.0 * r - (n + 1)))
    third = BERRY_ESSEEN / (n - 1) * math.sqrt(2.0 * r * inflate)
    return first, second, third


def gaussian_uniform_bound(n: int, r: int) -> float:
    """Simplified Gaussian bound for uniform cells, using ``mu <= n**2/(2r)``
    and ``min(1, 1/mu) <= 1/mu``. Looser than :func:`gaussian_bound`.
    """
    return sum(gaussian_uniform_terms(n, r))


def generalized_validity(scheme: ClassificationScheme, n: int, m: int) -> list[str]:
    violated = []
    if (1.0 - scheme.max_prob) ** m < 0.75:
        violated.append("(1-p)^m >= 3/4")
    if not (n + 1) * scheme.max_prob < m + 2:
        violated.append("(n+1)max p < m+2")
    return violated


def generalized_bound(spec: GeneralizedSpec, scheme: ClassificationScheme, n: int) -> BoundBreakdown:
    """Bound for ``T = W + R`` with ``g`` vanishing below level ``m``."""
    n, m = int(n), spec.m
    if n < 2 * m:
        raise ValueError(f"generalized bound needs n >= 2m, got n={n}, m={m}")
    if spec.h_values.shape[0] != scheme.r:
        raise ValueError("h_values must have one weight per cell")
    mu_val, s_ppi, s_pi2 = _pi_sums(scheme, n, m)
    c = float(np.max(np.abs(spec.h_values - 1.0)))
    return BoundBreakdown(
        name="generalized",
        term_occupancy=45.0 * _occupancy_core(n, mu_val, s_ppi, s_pi2, m),
        term_c=_term_c(mu_val, c),
        term_triple=_term_triple(n, mu_val, scheme.max_prob, m),
        term_d=8.1 * spec.var_r,
        mu=mu_val,
        c_lambda_val=c,
        d_lambda_val=spec.var_r,
        violated=tuple(generalized_validity(scheme, n, m)),
    )


def lambda_weights(scheme: ClassificationScheme, lam: float) -> np.ndarray:
    """``h(p_j) = 1 / (p_j**lam E[P**-lam])``, the weights of the power divergence case."""
    return 1.0 / (scheme.probs ** lam * moment(scheme, -lam))
