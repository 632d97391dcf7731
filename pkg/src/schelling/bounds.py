"""Closed-form quantities: entropy, the trigger function g, the critical
intolerance, the rho-family exponents, the size exponents a and b, and exact
binomial probabilities for affected nodes and radical regions.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from fractions import Fraction
from math import comb, log2

from .regions import RadicalParams

DEFAULT_EPS = 0.01
DEFAULT_DELTA = 1e-6
EPS_DOUBLE_PRIME = 0.265

CSV_HEADER = ["tau", "H", "g", "a", "b", "log2rho_per_N", "log2rhop_per_N", "log2rhopp_per_N"]


def entropy(tau: float) -> float:
    """Binary entropy in bits, with H(0) = H(1) = 0."""
    if not 0 <= tau <= 1:
        raise ValueError(f"entropy needs tau in [0, 1], got {tau}")
    if tau == 0 or tau == 1:
        return 0.0
    return -tau * log2(tau) - (1 - tau) * log2(1 - tau)


def g_of_tau(tau: float) -> float:
    """Infimum of eps' for which a radical region can trigger a cascade."""
    radicand = ((2 * tau - 1) * (409 * tau - 20000)) / 80000
    if radicand < 0:
        raise ValueError(f"g(tau) undefined at tau={tau}: negative radicand")
    return (694 * tau + 800 * math.sqrt(radicand) - 347) / (200 * (6 * tau + 1))


def rho_family(tau: float, eps: float, eps_prime: float, N: float) -> tuple[float, float, float]:
    """``(log2 rho, log2 rho', log2 rho'')`` at neighborhood size N."""
    h = entropy(tau)
    s = (1 + eps_prime) ** 2
    log_rho = 0.5 * (1 - h + eps / 2) * s * N
    log_rhop = (1 - h - eps) * (1 - 0.5 * s) * N + 2 * log2(N)
    log_rhopp = (1 - h + eps) * (s - 1) * N
    return log_rho, log_rhop, log_rhopp


def rho_rates(tau: float, eps: float, eps_prime: float) -> tuple[float, float, float]:
    """Per-N exponent rates of the rho family, dropping the 2 log2(N) / N term."""
    h = entropy(tau)
    s = (1 + eps_prime) ** 2
    return 0.5 * (1 - h + eps / 2) * s, (1 - h - eps) * (1 - 0.5 * s), (1 - h + eps) * (s - 1)


def critical_margins(tau: float, eps: float) -> tuple[float, float, float, float]:
    """Margins of the four conditions defining the critical intolerance.

    Each condition holds iff its margin is negative. The rho-family terms are
    per-N rates evaluated with eps' = g(tau). The second condition is oriented
    so that it holds near 1/2 (see ``tau_star``).
    """
    g = g_of_tau(tau)
    k = (1.5 + g) ** 2 / 4
    m1 = k * tau + 0.5 * (1 - k) - tau * EPS_DOUBLE_PRIME**2 - tau
    r, rp, rpp = rho_rates(tau, eps, g)
    m2 = max(1.5 * r, 2 * rp) - 0.75 * (1 - entropy(4 * tau / 3))
    m3 = 0.5 * r - rp
    m4 = rpp - rp
    return m1, m2, m3, m4


def critical_conditions(tau: float, eps: float) -> tuple[bool, bool, bool, bool]:
    return tuple(m < 0 for m in critical_margins(tau, eps))


def trigger_condition(tau: float) -> bool:
    """First condition alone: the eps''-neighborhood destabilizes the central w-block."""
    return critical_margins(tau, DEFAULT_EPS)[0] < 0


def tau_star(eps: float = 1e-9, step: float = 1e-4, tol: float = 1e-12) -> float:
    """Lower end of the feasible interval of the four conditions closest to 1/2.

    Scans down from 1/2 on a grid of ``step`` for the first feasible point,
    keeps walking while feasible, then bisects the crossing. The rate
    conditions leave no room once eps is much above 1e-4; that raises.
    """
    if not 0 < eps < 0.1:
        raise ValueError("eps must lie in (0, 0.1)")

    def ok(t):
        return all(critical_conditions(t, eps))

    hi = 0.5 - step
    while not ok(hi):
        hi -= step
        if hi <= 0.375:
            raise ValueError(f"no intolerance satisfies all conditions at eps={eps}")
    lo = hi - step
    while ok(lo):
        hi, lo = lo, lo - step
        if lo <= 0.375:
            raise ValueError("feasible interval extends below 3/8")
    while hi - lo > tol:
        mid = (lo + hi) / 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _eps_prime(tau, eps_prime, delta):
    g = g_of_tau(tau)
    if eps_prime is None:
        return g + delta
    if eps_prime <= g:
        raise ValueError(f"eps' = {eps_prime} must exceed g(tau) = {g}")
    return eps_prime


def a_of_tau(tau: float, eps: float = DEFAULT_EPS, eps_prime: float | None = None, delta: float = DEFAULT_DELTA) -> float:
    ep = _eps_prime(tau, eps_prime, delta)
    return (1 - entropy(tau) - eps) * (2 - (1 + ep) ** 2)


def b_of_tau(tau: float, eps: float = DEFAULT_EPS, eps_prime: float | None = None, delta: float = DEFAULT_DELTA) -> float:
    ep = _eps_prime(tau, eps_prime, delta)
    return (1 + ep) ** 2 * (1 - entropy(tau) + eps)


def n_star_exponent(tau, eps=DEFAULT_EPS, eps_prime=None, delta=DEFAULT_DELTA) -> float:
    """Exponent of the waiting horizon: n* = 2^(exponent * N)."""
    return a_of_tau(tau, eps, eps_prime, delta) + eps


def mirror_tau(tau: float, N: int) -> float:
    """Map tau > 1/2 onto the equivalent tau < 1/2 problem: 1 - tau + 2/N."""
    return 1 - tau + 2 / N


# ---------------------------------------------------------------------------
# exact binomial probabilities
# ---------------------------------------------------------------------------


def binom_lower_tail(n: int, kmax: int) -> Fraction:
    """P(Binom(n, 1/2) <= kmax), exactly."""
    if kmax < 0:
        return Fraction(0)
    if kmax >= n:
        return Fraction(1)
    return Fraction(sum(comb(n, k) for k in range(kmax + 1)), 2**n)


def log2_fraction(x: Fraction) -> float:
    return log2(x.numerator) - log2(x.denominator)


@dataclass(frozen=True)
class ProbabilityBracket:
    """An exact probability next to its asymptotic reference magnitude.

    ``ratio`` is exact / reference; ``residual_bits`` is log2 of that ratio.
    """

    exact: Fraction
    reference_log2: float
    derived_tau: float

    def __post_init__(self):
        assert 0 <= self.exact <= 1

    @property
    def residual_bits(self) -> float:
        return log2_fraction(self.exact) - self.reference_log2

    @property
    def ratio(self) -> float:
        return 2.0**self.residual_bits

    def __float__(self):
        return float(self.exact)


def p_affected_exact(N: int, tau) -> ProbabilityBracket:
    """Probability that a node is theta-affected in the uniform initial configuration.

    ``tau`` must make ``tau * N`` an integer (an Intolerance's ``tau`` does).
    """
    root = math.isqrt(N)
    if root * root != N or N % 2 == 0:
        raise ValueError("N must be an odd square")
    tn = Fraction(tau) * N
    if tn.denominator != 1:
        raise ValueError("tau * N must be an integer")
    tn = int(tn)
    if tn < 2:
        raise ValueError("tau * N must be at least 2")
    exact = binom_lower_tail(N - 1, tn - 2)
    tau_p = (tn - 2) / (N - 1)
    ref = -(1 - entropy(tau_p)) * N - 0.5 * log2(N)
    return ProbabilityBracket(exact, ref, tau_p)


def radical_sizes(N: int, eps_prime: float) -> tuple[int, int]:
    w = (math.isqrt(N) - 1) // 2
    R = math.floor((1 + eps_prime) * w)
    return R, (2 * R + 1) ** 2


def p_radical_exact(N: int, tau: float, eps_prime: float, eps: float = 0.1, threshold: float | None = None) -> ProbabilityBracket:
    """Probability that a fixed radius-(1+eps')w neighborhood is a radical region.

    ``threshold`` overrides the radical threshold (count must be strictly below it).
    """
    _, n_s = radical_sizes(N, eps_prime)
    if threshold is None:
        thr = RadicalParams(eps=eps, eps_prime=eps_prime).radical_threshold(float(tau), N)
    else:
        thr = threshold
    if thr <= 0:
        raise ValueError("degenerate radical threshold")
    exact = binom_lower_tail(n_s, math.ceil(thr) - 1)
    scale = (1 + eps_prime) ** 2 * N
    tau_pp = (math.floor(thr) - 1) / scale
    ref = -(1 - entropy(min(max(tau_pp, 0.0), 1.0))) * scale
    return ProbabilityBracket(exact, ref, tau_pp)


# ---------------------------------------------------------------------------
# tables and curves
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundsRow:
    tau: float
    H: float
    g: float
    a: float
    b: float
    log2rho_per_N: float
    log2rhop_per_N: float
    log2rhopp_per_N: float

    def as_list(self):
        return [self.tau, self.H, self.g, self.a, self.b, self.log2rho_per_N, self.log2rhop_per_N, self.log2rhopp_per_N]


def bounds_row(tau: float, eps: float, N: int, delta: float = DEFAULT_DELTA) -> BoundsRow:
    """Row for ``tau``; values above 1/2 are evaluated at the mirrored intolerance."""
    t = mirror_tau(tau, N) if tau > 0.5 else tau
    g = g_of_tau(t)
    ep = g + delta
    lr, lrp, lrpp = rho_family(t, eps, ep, N)
    return BoundsRow(
        tau=tau,
        H=entropy(t),
        g=g,
        a=a_of_tau(t, eps, ep),
        b=b_of_tau(t, eps, ep),
        log2rho_per_N=lr / N,
        log2rhop_per_N=lrp / N,
        log2rhopp_per_N=lrpp / N,
    )


def bounds_table(tau_grid, eps: float = DEFAULT_EPS, N: int = 10**4, delta: float = DEFAULT_DELTA) -> list[BoundsRow]:
    return [bounds_row(float(t), eps, N, delta) for t in tau_grid if float(t) != 0.5]


def emit_curves(tau_grid, eps: float = DEFAULT_EPS, N: int = 10**4, out=None, delta: float = DEFAULT_DELTA) -> str:
    """Write the curves CSV to ``out`` (a text stream) and return it as a string."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in bounds_table(tau_grid, eps, N, delta):
        writer.writerow([f"{v:.12g}" for v in row.as_list()])
    text = buf.getvalue()
    if out is not None:
        out.write(text)
    return text
