"""Winfree ODE right-hand side, fixed-step integration and trace functionals.

Phases are kept lifted on the real line; nothing here wraps them.  The
mean influence ``I_{n,c}`` is computed once per evaluation which turns the
naive O(N^2) double sum into the O(N) Adler form
``theta_i' = nu_i - kappa * I_{n,c} * sin(theta_i)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import _integrate
from .kernel import KernelOrder, influence, make_kernel, sup_influence_derivative

INTEGRATORS = {"euler": _integrate.EULER, "rk4": _integrate.RK4}


class ShapeError(ValueError):
    pass


class NotApplicableError(ValueError):
    """Raised when a trace does not satisfy the hypotheses of an analysis."""


class DivergenceError(RuntimeError):
    def __init__(self, time: float, trace: Optional["Trace"] = None):
        super().__init__(f"non-finite phase encountered at t={time:.17g}")
        self.time = time
        self.trace = trace


@dataclass(frozen=True)
class ModelConfig:
    n: int
    kappa: float
    frequencies: np.ndarray

    def __post_init__(self):
        freqs = np.array(self.frequencies, dtype=float).reshape(-1)
        freqs.setflags(write=False)
        object.__setattr__(self, "frequencies", freqs)
        if freqs.size < 1:
            raise ValueError("need at least one oscillator")
        if not np.all(np.isfinite(freqs)):
            raise ValueError("frequencies must be finite")
        if not (math.isfinite(self.kappa) and self.kappa >= 0):
            raise ValueError(f"kappa must be finite and >= 0, got {self.kappa}")
        make_kernel(self.n)  # validates n

    @property
    def N(self) -> int:
        return self.frequencies.size

    @property
    def kernel(self) -> KernelOrder:
        return make_kernel(self.n)

    @classmethod
    def identical(cls, n: int, kappa: float, nu: float, N: int) -> "ModelConfig":
        return cls(n=n, kappa=kappa, frequencies=np.full(N, float(nu)))


@dataclass(frozen=True)
class EnsembleState:
    t: float
    phases: np.ndarray

    def __post_init__(self):
        ph = np.array(self.phases, dtype=float).reshape(-1)
        object.__setattr__(self, "phases", ph)
        if not np.all(np.isfinite(ph)):
            raise ValueError("phases must be finite")


@dataclass(frozen=True)
class SimOptions:
    dt: float = 1e-2
    t_end: float = 100.0
    record_stride: int = 1
    integrator: str = "euler"

    def __post_init__(self):
        if not (self.dt > 0 and self.t_end > 0):
            raise ValueError("dt and t_end must be positive")
        if self.dt > self.t_end:
            raise ValueError("dt must not exceed t_end")
        if int(self.record_stride) != self.record_stride or self.record_stride < 1:
            raise ValueError("record_stride must be a positive integer")
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"integrator must be one of {sorted(INTEGRATORS)}")

    @property
    def n_steps(self) -> int:
        # tolerate t_end/dt landing a hair below an integer
        return int(math.floor(self.t_end / self.dt + 1e-9))

    @property
    def n_samples(self) -> int:
        return self.n_steps // self.record_stride + 1


@dataclass
class Trace:
    times: np.ndarray
    phases: np.ndarray  # (samples, N)
    A: np.ndarray = field(init=False)
    R: np.ndarray = field(init=False)
    D: np.ndarray = field(init=False)
    mean_influence: np.ndarray = field(init=False)
    n: int = 1

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.phases = np.atleast_2d(np.asarray(self.phases, dtype=float))
        hi = self.phases.max(axis=1)
        lo = self.phases.min(axis=1)
        self.A = 0.5 * hi + 0.5 * lo  # no overflow for huge lifted phases
        self.R = 0.5 * (hi - lo)
        self.D = hi - lo
        self.mean_influence = influence(make_kernel(self.n), self.phases).mean(axis=1)

    def __len__(self):
        return self.times.size

    @property
    def N(self) -> int:
        return self.phases.shape[1]


def mean_influence(config: ModelConfig, phases) -> float:
    return float(np.mean(influence(config.kernel, np.asarray(phases, dtype=float))))


def rhs(config: ModelConfig, state: EnsembleState) -> np.ndarray:
    phases = state.phases
    if phases.shape != config.frequencies.shape:
        raise ShapeError(f"state has {phases.size} phases, config has {config.N} oscillators")
    inc = mean_influence(config, phases)
    return config.frequencies - config.kappa * inc * np.sin(phases)


def rhs_many(config: ModelConfig, phases: np.ndarray) -> np.ndarray:
    """Vectorised rhs over a (samples, N) block of states."""
    phases = np.atleast_2d(phases)
    inc = influence(config.kernel, phases).mean(axis=1, keepdims=True)
    return config.frequencies[None, :] - config.kappa * inc * np.sin(phases)


def step(config: ModelConfig, state: EnsembleState, dt: float, integrator: str = "euler") -> EnsembleState:
    if not dt > 0:
        raise ValueError("dt must be positive")
    th = state.phases

    def f(x):
        return rhs(config, EnsembleState(state.t, x))

    if integrator == "euler":
        new = th + dt * f(th)
    elif integrator == "rk4":
        k1 = f(th)
        k2 = f(th + 0.5 * dt * k1)
        k3 = f(th + 0.5 * dt * k2)
        k4 = f(th + dt * k3)
        new = th + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    else:
        raise ValueError(f"unknown integrator {integrator!r}")
    if not np.all(np.isfinite(new)):
        raise DivergenceError(state.t + dt)
    return EnsembleState(state.t + dt, new)


def stable_dt(config: ModelConfig, default: float = 1e-2, safety: float = 0.5) -> float:
    """Step size no larger than ``default`` keeping dt * L below ``safety``.

    L = kappa (sup I_n + sup |I_n'|) bounds the Lipschitz constant of the
    vector field; strong coupling (large death thresholds) needs this.
    """
    k = config.kernel
    lip = config.kappa * (k.peak + sup_influence_derivative(k))
    return default if lip * default <= safety else safety / lip


def simulate(config: ModelConfig, initial: EnsembleState, opts: SimOptions) -> Trace:
    """Integrate from ``initial`` to ``initial.t + opts.t_end``.

    Deterministic: identical inputs give bit-identical traces.  On a
    non-finite phase a DivergenceError is raised carrying the samples
    recorded up to that point.
    """
    theta0 = np.ascontiguousarray(initial.phases, dtype=float)
    if theta0.shape != config.frequencies.shape:
        raise ShapeError(f"initial state has {theta0.size} phases, config has {config.N}")
    k = config.kernel
    record, done = _integrate.run(
        theta0,
        np.ascontiguousarray(config.frequencies),
        float(config.kappa),
        k.n,
        k.log_peak,
        float(opts.dt),
        opts.n_steps,
        int(opts.record_stride),
        INTEGRATORS[opts.integrator],
    )
    times = initial.t + np.arange(record.shape[0]) * (opts.record_stride * opts.dt)
    trace = Trace(times, record, n=config.n)
    if done < opts.n_steps:
        raise DivergenceError(initial.t + (done + 1) * opts.dt, trace)
    return trace


@dataclass(frozen=True)
class Crossing:
    level: int
    kind: str  # "-" for A = 2l*pi - pi/2, "+" for A = 2l*pi + pi/2
    time: float


def crossing_times(trace: Trace) -> List[Crossing]:
    """Times at which A(t) passes 2l*pi -/+ pi/2, by linear interpolation.

    The accuracy is one recording interval at worst.
    """
    A = trace.A
    t = trace.times
    if A.size < 2 or not np.all(np.diff(A) > 0):
        bad = np.flatnonzero(np.diff(A) <= 0)
        where = t[bad[0]] if bad.size else t[0]
        raise NotApplicableError(f"A(t) is not strictly increasing (first failure near t={where:.6g})")
    half = 0.5 * np.pi
    # level values v = 2l*pi + s*pi/2 = (4l + s) * pi/2 with s = -1/+1
    m_lo = math.ceil(A[0] / half)
    m_hi = math.floor(A[-1] / half)
    out = []
    for m in range(m_lo, m_hi + 1):
        if m % 2 == 0:
            continue
        kind = "-" if m % 4 == 3 else "+"
        level = (m + 1) // 4 if kind == "-" else (m - 1) // 4
        v = m * half
        i = int(np.searchsorted(A, v, side="left"))
        if i == 0:
            tc = t[0]
        else:
            frac = (v - A[i - 1]) / (A[i] - A[i - 1])
            tc = t[i - 1] + frac * (t[i] - t[i - 1])
        out.append(Crossing(level=level, kind=kind, time=float(tc)))
    return out


def interpolate(trace_times: np.ndarray, values: np.ndarray, t: float) -> float:
    return float(np.interp(t, trace_times, values))


def write_trace_csv(trace: Trace, path) -> None:
    path = Path(path)
    header = ["t"] + [f"theta_{i}" for i in range(trace.N)] + ["A", "R", "D", "Inc"]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for k in range(len(trace)):
            row = [trace.times[k], *trace.phases[k], trace.A[k], trace.R[k], trace.D[k], trace.mean_influence[k]]
            w.writerow([format(float(x), ".17g") for x in row])


def read_trace_csv(path, n: int) -> Trace:
    """Load a trace; derived columns are recomputed from the phases."""
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = np.array([[float(x) for x in r] for r in reader if r], dtype=float)
    cols = [i for i, h in enumerate(header) if h.startswith("theta_")]
    if not cols or header[0] != "t":
        raise ValueError(f"{path}: not a trace CSV")
    rows = rows.reshape(-1, len(header))
    return Trace(rows[:, 0], rows[:, cols], n=n)
