"""Order-n influence/sensitivity pair and its closed-form extrema.

The influence kernel is ``I_n(theta) = a_n (1 + cos theta)^n`` with ``a_n``
chosen so that one period integrates to ``2*pi``; the sensitivity is
``S(theta) = -sin theta``.  Everything is evaluated in log space so that
orders up to ~1e4 neither overflow nor underflow.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

LOG2 = math.log(2.0)


class KernelError(ValueError):
    """Invalid kernel order or argument outside an operation's domain."""


@dataclass(frozen=True)
class KernelOrder:
    n: int
    log_norm: float  # ln a_n

    @property
    def a_n(self) -> float:
        return math.exp(self.log_norm)

    @property
    def log_peak(self) -> float:
        """ln(2^n a_n), the log of the kernel maximum."""
        return self.log_norm + self.n * LOG2

    @property
    def peak(self) -> float:
        return math.exp(self.log_peak)


@dataclass(frozen=True)
class KernelNorms:
    sup_I: float
    sup_SI: float
    sup_dI: float
    beta_n: float
    theta_tilde: float


def log_norm_factors(n: int) -> float:
    """ln a_n as a sum of logs of the even/odd double-factorial factors."""
    terms = [math.log(2 * k) - math.log(2 * k - 1) for k in range(1, n + 1)]
    return math.fsum(terms) - n * LOG2


def log_norm_gamma(n: int) -> float:
    """ln a_n from 2^n a_n = 4^n (n!)^2 / (2n)!."""
    return n * LOG2 + 2.0 * math.lgamma(n + 1) - math.lgamma(2 * n + 1)


def exact_peak(n: int) -> Fraction:
    """2^n a_n = (2n)!! / (2n-1)!! as an exact rational."""
    num = 1
    den = 1
    for k in range(1, n + 1):
        num *= 2 * k
        den *= 2 * k - 1
    return Fraction(num, den)


@lru_cache(maxsize=256)
def make_kernel(n: int) -> KernelOrder:
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise KernelError(f"kernel order must be a positive integer, got {n!r}")
    n = int(n)
    by_factors = log_norm_factors(n)
    by_gamma = log_norm_gamma(n)
    # the two routes agree to ~1e-13 absolute for any n we care about
    if abs(by_factors - by_gamma) > 1e-9 * max(1.0, abs(by_gamma)):
        raise ArithmeticError(f"ln a_n routes disagree for n={n}: {by_factors} vs {by_gamma}")
    return KernelOrder(n=n, log_norm=by_factors)


def _check_finite(theta):
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise KernelError("phase argument must be finite")
    return theta


def _scalar_or_array(out, theta_in):
    if np.ndim(theta_in) == 0:
        return float(out)
    return out


def _log_one_plus_cos(theta):
    # 1 + cos(theta) = 2 cos^2(theta/2), no cancellation near theta = pi
    c = np.abs(np.cos(0.5 * theta))
    with np.errstate(divide="ignore"):
        return LOG2 + 2.0 * np.log(c)


def influence(k: KernelOrder, theta):
    """I_n(theta); exactly 0 where 1 + cos(theta) vanishes or underflows."""
    th = _check_finite(theta)
    with np.errstate(under="ignore"):
        out = np.exp(k.log_norm + k.n * _log_one_plus_cos(th))
    return _scalar_or_array(out, theta)


def sensitivity(theta):
    th = _check_finite(theta)
    return _scalar_or_array(-np.sin(th), theta)


def coupling_product(k: KernelOrder, theta):
    """S(theta) * I_n(theta), odd in theta, minimal at beta_n on (0, pi)."""
    th = _check_finite(theta)
    with np.errstate(under="ignore"):
        out = -np.sin(th) * np.exp(k.log_norm + k.n * _log_one_plus_cos(th))
    return _scalar_or_array(out, theta)


def influence_derivative(k: KernelOrder, theta):
    """I_n'(theta) = -n a_n (1 + cos theta)^(n-1) sin theta."""
    th = _check_finite(theta)
    if k.n == 1:
        out = -k.a_n * np.sin(th)
    else:
        with np.errstate(under="ignore"):
            mag = np.exp(k.log_norm + math.log(k.n) + (k.n - 1) * _log_one_plus_cos(th))
        out = -mag * np.sin(th)
    return _scalar_or_array(out, theta)


def beta(n: int) -> float:
    """Minimiser of S*I_n on (0, pi): arccos(n/(n+1))."""
    # atan2 form is the same angle without arccos' loss of precision near 1
    return math.atan2(math.sqrt(2 * n + 1), n)


def theta_tilde(n: int) -> float:
    """Location of max |I_n'|: arccos((n-1)/n)."""
    return math.atan2(math.sqrt(2 * n - 1), n - 1)


def sup_influence(k: KernelOrder) -> float:
    return k.peak


def sup_coupling_product(k: KernelOrder) -> float:
    n = k.n
    log_val = (
        k.log_norm
        + n * math.log((2 * n + 1) / (n + 1))
        + 0.5 * math.log(2 * n + 1)
        - math.log(n + 1)
    )
    return math.exp(log_val)


def sup_influence_derivative(k: KernelOrder) -> float:
    n = k.n
    log_val = k.log_norm + (n - 1) * math.log((2 * n - 1) / n) + 0.5 * math.log(2 * n - 1)
    return math.exp(log_val)


def kernel_norms(k: KernelOrder) -> KernelNorms:
    return KernelNorms(
        sup_I=sup_influence(k),
        sup_SI=sup_coupling_product(k),
        sup_dI=sup_influence_derivative(k),
        beta_n=beta(k.n),
        theta_tilde=theta_tilde(k.n),
    )


def alpha_star(k: KernelOrder, alpha: float, tol: float = 1e-12) -> float:
    """Level point of S*I_n left of beta_n matching S*I_n(alpha).

    S*I_n is strictly decreasing on (0, beta_n], so plain bisection is used;
    Newton stalls at beta_n where the derivative vanishes.  ``tol`` is
    relative: for large n the level point sits close to 0.
    """
    b = beta(k.n)
    if not (math.isfinite(alpha) and b < alpha < math.pi):
        raise KernelError(f"alpha must lie in (beta_n, pi) = ({b}, {math.pi}), got {alpha}")
    target = coupling_product(k, alpha)
    lo, hi = 0.0, b
    # invariant: f(lo) >= target >= f(hi)
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if coupling_product(k, mid) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
