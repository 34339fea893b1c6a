"""Numerical certification of the kernel identities and integral estimates.

Each check compares a closed form against an independent route (exact
rationals, dense grids refined by a bounded scalar search, composite
Simpson quadrature, adaptive quadrature) and reports a signed slack:
positive means the check passed with that much room.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, List

import mpmath
import numpy as np
from scipy import integrate, optimize

from .analysis import alpha_lock, envelope_constants, kappa_lock, cos2n_integral_bounds
from .kernel import (
    coupling_product,
    exact_peak,
    influence,
    influence_derivative,
    kernel_norms,
    log_norm_factors,
    log_norm_gamma,
    make_kernel,
)


@dataclass(frozen=True)
class Check:
    name: str
    n: int
    value: float
    slack: float
    inclusive: bool = False  # non-strict inequality: zero slack passes

    @property
    def passed(self) -> bool:
        return self.slack >= 0 if self.inclusive else self.slack > 0


def b_exact(n: int, dps: int = 40) -> mpmath.mpf:
    """2^n a_n / sqrt(n pi) from the exact double-factorial ratio."""
    with mpmath.workdps(dps):
        P = exact_peak(n)
        return mpmath.mpf(P.numerator) / P.denominator / mpmath.sqrt(n * mpmath.pi)


def norm_bounds_slack(n: int) -> float:
    """min slack of sqrt(n pi) <= 2^n a_n <= 2 sqrt(n), squared to stay rational."""
    P2 = exact_peak(n) ** 2
    with mpmath.workdps(40):
        lower = mpmath.mpf(P2.numerator) / P2.denominator - n * mpmath.pi
    upper = Fraction(4 * n) - P2
    # equality holds at n = 1 for the upper bound
    return float(min(lower, mpmath.mpf(upper.numerator) / upper.denominator))


def grid_max(f: Callable, lo: float, hi: float, points: int = 1_000_000) -> float:
    """max of f on [lo, hi]: dense grid, then a bounded search around the best node."""
    x = np.linspace(lo, hi, points)
    y = f(x)
    i = int(np.argmax(y))
    h = x[1] - x[0]
    a, b = max(lo, x[i] - h), min(hi, x[i] + h)
    res = optimize.minimize_scalar(lambda s: -float(f(np.array([s]))[0]), bounds=(a, b),
                                   method="bounded", options={"xatol": 1e-14})
    return max(float(y[i]), -float(res.fun))


def simpson_period_integral(n: int, panels: int = 100_000) -> float:
    k = make_kernel(n)
    x = np.linspace(-math.pi, math.pi, panels + 1)
    return float(integrate.simpson(influence(k, x), x=x))


def kernel_checks(n_max: int = 50, grid_points: int = 1_000_000) -> List[Check]:
    out: List[Check] = []
    b_prev = None
    for n in range(1, n_max + 1):
        k = make_kernel(n)
        norms = kernel_norms(k)
        out.append(Check("a_n two-route agreement", n,
                         log_norm_factors(n) - log_norm_gamma(n),
                         1e-12 - abs(math.expm1(log_norm_factors(n) - log_norm_gamma(n)))))
        out.append(Check("sqrt(n pi)/2^n <= a_n <= sqrt(n)/2^(n-1)", n, k.a_n, norm_bounds_slack(n), inclusive=True))
        b = b_exact(n)
        if b_prev is not None:
            out.append(Check("b_n strictly decreasing", n, float(b), float(b_prev - b)))
        b_prev = b
        if n >= 5:
            out.append(Check("b_n - 1 < 1/(4n)", n, float(b - 1), float(mpmath.mpf(1) / (4 * n) - (b - 1))))

        si = grid_max(lambda x: -coupling_product(k, x), 0.0, math.pi, grid_points)
        rel = abs(si - norms.sup_SI) / norms.sup_SI
        out.append(Check("sup|S I_n| closed form vs grid", n, rel, 1e-9 - rel))
        di = grid_max(lambda x: np.abs(influence_derivative(k, x)), 0.0, math.pi, grid_points)
        rel = abs(di - norms.sup_dI) / norms.sup_dI
        out.append(Check("sup|I_n'| closed form vs grid", n, rel, 1e-9 - rel))
        err = abs(simpson_period_integral(n) - 2 * math.pi)
        out.append(Check("integral of I_n over a period = 2 pi", n, err, 1e-8 - err))
    return out


def quadrature_checks(n_max: int = 30) -> List[Check]:
    out: List[Check] = []
    for n in range(2, n_max + 1):
        r = cos2n_integral_bounds(n)
        out.append(Check("int (-cos A) cos^2n(A/2) <= 2^-(n-1)", n, r.lhs_i, r.slack_i))
        out.append(Check("int cos A cos^2n(A/2) >= n(pi+2)/((n+1) 2^n a_n)", n, r.lhs_ii, r.slack_ii))
        out.append(Check("cos^2n integral identity", n, r.identity_residual, 1e-10 - abs(r.identity_residual)))
        k = make_kernel(n)
        nu = 1.0
        c = envelope_constants(k, kappa_lock(k, nu), nu, 0.999 * alpha_lock(k))
        total = c.L2_int + c.L1_int
        out.append(Check("L2 shrink + L1 growth integral < 0", n, total, -total))
        # C2^- is negative in general: its integrand is cos A < 0 times a
        # positive factor on (pi/2, 3pi/2), so it is not part of this check
        positivity = min(c.C1_plus, c.C1_minus, c.C2_plus)
        out.append(Check("C1+, C1-, C2+ positive", n, positivity, positivity))
    return out


def run_all(n_max: int = 30, grid_points: int = 1_000_000) -> List[Check]:
    return kernel_checks(max(n_max, 1), grid_points) + quadrature_checks(max(n_max, 2))
