"""Rotation numbers, state classification, closed-form thresholds and the
trace-level checks for incoherence, death and locking.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy import integrate

from .dynamics import ModelConfig, NotApplicableError, Trace, crossing_times, rhs_many
from .kernel import (
    KernelError,
    KernelOrder,
    alpha_star as _alpha_star,
    beta,
    coupling_product,
    influence,
    make_kernel,
    sup_coupling_product,
    sup_influence_derivative,
)

SCHEMA_VERSION = 1
LABELS = ("death", "locking", "partial_locking", "incoherence", "undetermined")


class WindowError(ValueError):
    pass


class PreconditionError(ValueError):
    pass


class HypothesisViolation(ValueError):
    """The trace leaves the regime in which a locking estimate applies."""

    def __init__(self, message: str, time: float):
        super().__init__(f"{message} (first at t={time:.6g})")
        self.time = time


# -- rotation numbers and classification -------------------------------------


@dataclass(frozen=True)
class RotationEstimate:
    rho: np.ndarray
    window: Tuple[float, float]
    max_residual: float


@dataclass(frozen=True)
class ClassificationResult:
    label: str
    rho: RotationEstimate
    tolerances: Tuple[float, float]


def rotation_numbers(trace: Trace, discard_fraction: float = 0.5) -> RotationEstimate:
    """Secant slope of each lifted phase over the trailing window."""
    if not 0.0 <= discard_fraction < 1.0:
        raise WindowError("discard_fraction must lie in [0, 1)")
    t = trace.times
    if t.size < 2:
        raise WindowError("trace has fewer than two samples")
    t_cut = t[0] + discard_fraction * (t[-1] - t[0])
    i0 = int(np.searchsorted(t, t_cut - 1e-12 * max(1.0, abs(t_cut)), side="left"))
    if i0 >= t.size - 1:
        raise WindowError("retained window is empty")
    ts, te = t[i0], t[-1]
    th = trace.phases[i0:]
    rho = (th[-1] - th[0]) / (te - ts)
    secant = th[0] + np.outer(t[i0:] - ts, rho)
    resid = float(np.max(np.abs(th - secant))) if th.size else 0.0
    return RotationEstimate(rho=rho, window=(float(ts), float(te)), max_residual=resid)


def classify(est: RotationEstimate, frequencies, eps_zero: float = 1e-3, eps_equal: float = 1e-3) -> ClassificationResult:
    label = classify_rho(est.rho, frequencies, eps_zero, eps_equal)
    return ClassificationResult(label=label, rho=est, tolerances=(eps_zero, eps_equal))


def classify_rho(rho, frequencies, eps_zero: float = 1e-3, eps_equal: float = 1e-3) -> str:
    rho = np.asarray(rho, dtype=float)
    nu = np.asarray(frequencies, dtype=float)
    if rho.shape != nu.shape:
        raise ValueError("rho and frequencies differ in length")
    if not np.all(np.isfinite(rho)):
        return "undetermined"
    if np.max(np.abs(rho)) < eps_zero:
        return "death"
    mean = float(np.mean(rho))
    if np.max(np.abs(rho - mean)) < eps_equal and abs(mean) >= eps_zero:
        return "locking"
    shared = False  # some distinct-nu pair shares a rotation number
    split = False  # some pair does not
    for i, j in itertools.combinations(range(rho.size), 2):
        close = abs(rho[i] - rho[j]) < eps_equal
        if close and nu[i] != nu[j]:
            shared = True
        if not close:
            split = True
    if not shared:
        return "incoherence"
    if split:
        return "partial_locking"
    return "undetermined"


# -- closed-form thresholds ---------------------------------------------------


def _check_alpha(alpha: float) -> None:
    if not (math.isfinite(alpha) and 0.0 < alpha < math.pi):
        raise KernelError(f"alpha must lie strictly inside (0, pi), got {alpha}")


def kappa_inc_pairs(config: ModelConfig) -> np.ndarray:
    gaps = np.abs(config.frequencies[:, None] - config.frequencies[None, :])
    out = gaps / (2.0 * config.kernel.peak)
    np.fill_diagonal(out, np.nan)
    return out


def kappa_inc(config: ModelConfig) -> float:
    if config.N < 2:
        return math.nan
    return min_gap(config.frequencies) / (2.0 * config.kernel.peak)


def min_gap(frequencies) -> float:
    nu = np.sort(np.asarray(frequencies, dtype=float))
    return float(np.min(np.diff(nu))) if nu.size > 1 else math.nan


def omega_pair(config: ModelConfig, i: int, j: int) -> float:
    nu = config.frequencies
    return abs(nu[i] - nu[j]) - config.kappa * 2.0 * config.kernel.peak


def kappa_death(k: KernelOrder, vmax: float, alpha: float) -> float:
    """||V||_inf / |S I_n(alpha)|: above it B(alpha) is positively invariant."""
    _check_alpha(alpha)
    si = coupling_product(k, alpha)
    if si == 0.0:
        raise KernelError(f"S*I_n vanishes at alpha={alpha}")
    return vmax / abs(si)


def kappa_death_partial(k: KernelOrder, vmax: float, alpha: float, p: int, N: int) -> float:
    if not 2 <= p <= N:
        raise PreconditionError(f"p must lie in [2, N={N}], got {p}")
    return (N / p) * kappa_death(k, vmax, alpha)


def kappa_lock(k: KernelOrder, nu: float) -> float:
    return nu / (2.0 * k.peak)


def alpha_lock(k: KernelOrder) -> float:
    """Upper bound on the half-spread admissible for the locking estimate."""
    n = k.n
    if n < 2:
        raise KernelError("the locking bound is only available for n >= 2")
    head = math.pi / (2.0 * k.peak) * n / (n + 1) - 2.0 ** (-n)
    return head / math.sqrt(2 * n - 1) * ((2 * n) / (2 * n - 1)) ** (n - 1)


def r0_bound(k: KernelOrder, alpha: float) -> float:
    n = k.n
    growth = alpha * math.sqrt(2 * n - 1) * ((2 * n - 1) / (2 * n)) ** (n - 1) + 2.0 ** (-(n - 1))
    return alpha * math.exp(-growth)


@dataclass
class ThresholdReport:
    n: int
    kappa: float
    kappa_inc: Optional[float]
    kappa_inc_pairs: list
    omega_m: Optional[float]
    beta_n: float
    kappa_death_beta: float
    alpha: Optional[float] = None
    alpha_in_death_range: Optional[bool] = None
    kappa_death: Optional[float] = None
    alpha_star: Optional[float] = None
    p: Optional[int] = None
    kappa_death_partial: Optional[float] = None
    kappa_lock: Optional[float] = None
    alpha_lock: Optional[float] = None
    r0_bound: Optional[float] = None
    schema_version: int = SCHEMA_VERSION

    def to_json(self) -> str:
        def clean(v):
            if isinstance(v, float) and not math.isfinite(v):
                return None
            if isinstance(v, list):
                return [clean(x) for x in v]
            return v

        return json.dumps({k: clean(v) for k, v in asdict(self).items()}, indent=2, sort_keys=True)


def thresholds(config: ModelConfig, alpha: Optional[float] = None, p: Optional[int] = None) -> ThresholdReport:
    k = config.kernel
    nu = config.frequencies
    vmax = float(np.max(np.abs(nu)))
    b = beta(k.n)
    pairs = kappa_inc_pairs(config)
    kinc = kappa_inc(config)
    omega_m = (min_gap(nu) - config.kappa * 2.0 * k.peak) if config.N > 1 else math.nan
    rep = ThresholdReport(
        n=k.n,
        kappa=config.kappa,
        kappa_inc=None if math.isnan(kinc) else kinc,
        kappa_inc_pairs=[[None if math.isnan(x) else float(x) for x in row] for row in pairs],
        omega_m=None if math.isnan(omega_m) else omega_m,
        beta_n=b,
        kappa_death_beta=vmax / sup_coupling_product(k),
    )
    identical = bool(np.all(nu == nu[0]))
    if identical and nu[0] > 0:
        rep.kappa_lock = kappa_lock(k, float(nu[0]))
    if k.n >= 2:
        rep.alpha_lock = alpha_lock(k)
    if alpha is not None:
        rep.alpha = alpha
        rep.kappa_death = kappa_death(k, vmax, alpha)
        rep.alpha_in_death_range = b < alpha < math.pi
        if rep.alpha_in_death_range:
            rep.alpha_star = _alpha_star(k, alpha)
        rep.r0_bound = r0_bound(k, alpha)
        if p is not None:
            rep.p = p
            rep.kappa_death_partial = kappa_death_partial(k, vmax, alpha, p, config.N)
    elif p is not None:
        raise PreconditionError("partial death threshold needs alpha")
    return rep


# -- trace-level checks -------------------------------------------------------


def check_incoherence_gap(trace: Trace, config: ModelConfig, pair: Tuple[int, int]) -> float:
    """min over recorded samples of |theta_i' - theta_j'|."""
    i, j = pair
    vel = rhs_many(config, trace.phases)
    return float(np.min(np.abs(vel[:, i] - vel[:, j])))


def check_death_invariance(trace: Trace, alpha: float, alpha_star: float):
    """(stays in B(alpha) at every sample, first time inside B(alpha_star) or None)."""
    mags = np.max(np.abs(trace.phases), axis=1)
    if not mags[0] < alpha:
        raise PreconditionError(f"initial phases leave B({alpha}): max |theta| = {mags[0]}")
    invariant = bool(np.all(mags < alpha))
    inside = np.flatnonzero(mags < alpha_star)
    entry = float(trace.times[inside[0]]) if inside.size else None
    return invariant, entry


def _wrap(theta):
    return np.remainder(theta + np.pi, 2.0 * np.pi) - np.pi


def check_partial_death(trace: Trace, alpha: float, p: int) -> bool:
    """The first ``p`` oscillators stay in (-alpha, alpha); any later one
    that enters never leaves again.

    Membership is judged on phases wrapped to (-pi, pi]: the box is a set of
    physical states, and a drifting oscillator re-enters it one lap later.
    """
    N = trace.N
    if not 2 <= p <= N:
        raise PreconditionError(f"p must lie in [2, N={N}], got {p}")
    inside = np.abs(_wrap(trace.phases)) < alpha
    if not np.all(inside[0, :p]):
        raise PreconditionError(f"the first {p} oscillators must start inside (-alpha, alpha)")
    if not np.all(inside[:, :p]):
        return False
    for i in range(p, N):
        col = inside[:, i]
        hits = np.flatnonzero(col)
        if hits.size and not np.all(col[hits[0]:]):
            return False
    return True


# -- locking envelope ---------------------------------------------------------


def _lipschitz_term(k: KernelOrder, alpha: float) -> float:
    return alpha * sup_influence_derivative(k)


def L1(k: KernelOrder, kappa: float, nu: float, alpha: float, A):
    c = _lipschitz_term(k, alpha)
    return -kappa * np.cos(A) / (nu - kappa * k.peak) * (c + influence(k, A))


def L2(k: KernelOrder, kappa: float, nu: float, alpha: float, A):
    c = _lipschitz_term(k, alpha)
    return kappa * np.cos(A) / (nu + kappa * k.peak) * (c - influence(k, A))


def _quad(f, a, b):
    val, _ = integrate.quad(f, a, b, epsabs=1e-13, epsrel=1e-12, limit=500)
    return val


@dataclass(frozen=True)
class EnvelopeConstants:
    C1_plus: float
    C1_minus: float
    C2_plus: float
    C2_minus: float
    L1_int: float  # over (pi/2, 3pi/2)
    L2_int: float  # over (-pi/2, pi/2)


def envelope_constants(k: KernelOrder, kappa: float, nu: float, alpha: float) -> EnvelopeConstants:
    h = 0.5 * math.pi
    l1_dec = _quad(lambda A: L1(k, kappa, nu, alpha, A), -h, h)
    l1_inc = _quad(lambda A: L1(k, kappa, nu, alpha, A), h, 3 * h)
    l2_dec = _quad(lambda A: L2(k, kappa, nu, alpha, A), -h, h)
    l2_inc = _quad(lambda A: L2(k, kappa, nu, alpha, A), h, 3 * h)
    return EnvelopeConstants(
        C1_plus=-l1_dec,
        C1_minus=l1_inc,
        C2_plus=-l2_dec,
        C2_minus=l2_inc,
        L1_int=l1_inc,
        L2_int=l2_dec,
    )


def half_cycle_balance(k: KernelOrder, kappa: float, nu: float, alpha: float) -> float:
    """Integral of L2 over a shrinking half-cycle plus L1 over a growing one."""
    c = envelope_constants(k, kappa, nu, alpha)
    return c.L2_int + c.L1_int


@dataclass
class LockingEnvelopeReport:
    L1_int: float
    L2_int: float
    C1_plus: float
    C1_minus: float
    C2_plus: float
    C2_minus: float
    shrink_log_ratios: List[float] = field(default_factory=list)  # ln R(t_l^+)/R(t_l^-)
    grow_log_ratios: List[float] = field(default_factory=list)  # ln R(t_{l+1}^-)/R(t_l^+)
    cycle_log_decrements: List[float] = field(default_factory=list)  # ln R(t_{l+1}^-)/R(t_l^-)
    minus_times: List[float] = field(default_factory=list)
    R_at_minus: List[float] = field(default_factory=list)
    fitted_rate: float = math.nan
    degenerate: bool = False
    violations: List[str] = field(default_factory=list)

    @property
    def bounds_hold(self) -> bool:
        return not self.violations

    @property
    def cycle_rate(self) -> float:
        """Mean per-cycle log decrement divided by mean cycle length."""
        if len(self.minus_times) < 2:
            return math.nan
        period = (self.minus_times[-1] - self.minus_times[0]) / (len(self.minus_times) - 1)
        return float(np.mean(self.cycle_log_decrements)) / period


def locking_envelope(trace: Trace, config: ModelConfig, alpha: float, r_floor: float = 1e-9) -> LockingEnvelopeReport:
    """Per-cycle log-ratios of R at the A-crossings against the L1/L2 bounds.

    Crossings are used only while R stays above ``r_floor``; below that the
    spread is dominated by round-off in the lifted phases.
    """
    nu = config.frequencies
    if not np.all(nu == nu[0]) or nu[0] <= 0:
        raise PreconditionError("locking envelope needs identical positive frequencies")
    k = config.kernel
    consts = envelope_constants(k, config.kappa, float(nu[0]), alpha)
    rep = LockingEnvelopeReport(**{f: getattr(consts, f) for f in consts.__dataclass_fields__})

    if np.all(trace.R == 0.0):
        rep.degenerate = True
        return rep
    above = np.flatnonzero(trace.R > alpha)
    if above.size:
        raise HypothesisViolation(f"R exceeds alpha={alpha}", float(trace.times[above[0]]))
    try:
        crossings = crossing_times(trace)
    except NotApplicableError as exc:
        dA = np.diff(trace.A)
        raise HypothesisViolation(str(exc), float(trace.times[np.flatnonzero(dA <= 0)[0]])) from exc

    def R_at(tc):
        return float(np.interp(tc, trace.times, trace.R))

    # pair up as (t_l^-, t_l^+, t_{l+1}^-), starting at the first "-" crossing
    while crossings and crossings[0].kind != "-":
        crossings = crossings[1:]
    for cut, c in enumerate(crossings):
        if R_at(c.time) <= r_floor:
            crossings = crossings[:cut]
            break
    minus = [c.time for c in crossings if c.kind == "-"]
    plus = [c.time for c in crossings if c.kind == "+"]
    rep.minus_times = minus
    rep.R_at_minus = [R_at(tc) for tc in minus]

    q = math.sin(alpha) / alpha
    for idx, tm in enumerate(minus):
        if idx < len(plus):
            x = math.log(R_at(plus[idx]) / R_at(tm))
            rep.shrink_log_ratios.append(x)
            if not (-consts.C1_plus < x < -q * consts.C2_plus):
                rep.violations.append(
                    f"cycle {idx}: shrink log-ratio {x:.6g} outside ({-consts.C1_plus:.6g}, {-q * consts.C2_plus:.6g})"
                )
            if idx + 1 < len(minus):
                y = math.log(R_at(minus[idx + 1]) / R_at(plus[idx]))
                rep.grow_log_ratios.append(y)
                if not (q * consts.C2_minus < y < consts.C1_minus):
                    rep.violations.append(
                        f"cycle {idx}: growth log-ratio {y:.6g} outside ({q * consts.C2_minus:.6g}, {consts.C1_minus:.6g})"
                    )
                z = x + y
                rep.cycle_log_decrements.append(z)
                if not z < 0:
                    rep.violations.append(f"cycle {idx}: net log-ratio {z:.6g} is not negative")

    if len(minus) >= 2:
        logs = np.log(rep.R_at_minus)
        rep.fitted_rate = float(np.polyfit(np.asarray(minus), logs, 1)[0])
    return rep


# -- quadrature certificate for the cos^{2n} integrals -------------------------


@dataclass(frozen=True)
class Cos2nIntegrals:
    n: int
    lhs_i: float
    bound_i: float
    lhs_ii: float
    bound_ii: float
    identity_residual: float

    @property
    def slack_i(self) -> float:
        return self.bound_i - self.lhs_i

    @property
    def slack_ii(self) -> float:
        return self.lhs_ii - self.bound_ii


def cos2n_integral_bounds(n: int) -> Cos2nIntegrals:
    if n < 2:
        raise KernelError("the cos^{2n} integral estimates are stated for n >= 2")
    k = make_kernel(n)
    h = 0.5 * math.pi
    lhs_i = _quad(lambda A: -math.cos(A) * math.cos(0.5 * A) ** (2 * n), h, 3 * h)
    lhs_ii = _quad(lambda A: math.cos(A) * math.cos(0.5 * A) ** (2 * n), -h, h)
    bound_i = 2.0 ** (-(n - 1))
    bound_ii = n / (n + 1) * (math.pi + 2.0) / k.peak
    residual = lhs_i - (lhs_ii - math.pi / k.peak * (2 * n) / (n + 1))
    return Cos2nIntegrals(n, lhs_i, bound_i, lhs_ii, bound_ii, residual)
