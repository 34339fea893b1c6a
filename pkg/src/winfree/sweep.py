"""(n, kappa) phase-diagram sweeps with empirical critical couplings.

Every cell is an independent simulation whose initial phases come from a
Philox stream keyed by integer coordinates, so a cell can be recomputed in
isolation and the merged output never depends on scheduling.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .analysis import classify_rho, rotation_numbers
from .dynamics import DivergenceError, EnsembleState, ModelConfig, SimOptions, simulate

log = logging.getLogger(__name__)

CELL_HEADER = ["n", "kappa", "seed", "label", "rho_mean", "rho_spread", "wall_time_s"]
CURVE_HEADER = ["n", "kappa_i", "kappa_p", "kappa_d"]
# tie-break order when several seeds disagree on a cell label
_LABEL_RANK = {"death": 0, "locking": 1, "partial_locking": 2, "incoherence": 3, "undetermined": 4}


@dataclass(frozen=True)
class FrequencySpec:
    kind: str  # identical | uniform_list | explicit
    nu: float = 0.0
    N: int = 0
    start: float = 0.0
    stop: float = 0.0
    values: tuple = ()

    def vector(self) -> np.ndarray:
        if self.kind == "identical":
            return np.full(self.N, float(self.nu))
        if self.kind == "uniform_list":
            return np.linspace(self.start, self.stop, self.N)
        if self.kind == "explicit":
            return np.array(self.values, dtype=float)
        raise ValueError(f"unknown frequency spec {self.kind!r}")


@dataclass(frozen=True)
class InitialSpec:
    kind: str  # uniform_box | explicit
    alpha: float = math.pi
    values: tuple = ()
    # "cell": key ICs by (seed, n index, kappa index); "scenario": by seed only,
    # giving one fixed initial configuration across the whole diagram
    scope: str = "cell"


@dataclass(frozen=True)
class SweepSpec:
    n_values: tuple
    kappa_min: float
    kappa_max: float
    kappa_step: float
    frequencies: FrequencySpec
    initial: InitialSpec
    sim: SimOptions = field(default_factory=lambda: SimOptions(dt=1e-2, t_end=500.0, record_stride=10))
    seeds: tuple = (0,)
    eps_zero: float = 1e-3
    eps_equal: float = 1e-3
    discard_fraction: float = 0.5

    def __post_init__(self):
        if not self.kappa_step > 0:
            raise ValueError("kappa_step must be positive")
        if self.kappa_max < self.kappa_min:
            raise ValueError("kappa_max < kappa_min")
        if not self.n_values or not self.seeds:
            raise ValueError("empty n or seed grid")
        N = self.frequencies.vector().size
        if self.initial.kind == "explicit" and len(self.initial.values) != N:
            raise ValueError("explicit initial phases do not match the number of oscillators")
        if N < 1:
            raise ValueError("no oscillators")
        if self.initial.scope not in ("cell", "scenario"):
            raise ValueError("initial scope must be 'cell' or 'scenario'")

    def kappa_grid(self) -> np.ndarray:
        count = int(math.floor((self.kappa_max - self.kappa_min) / self.kappa_step + 1e-9)) + 1
        # rounding keeps 0.1*3 from printing as 0.30000000000000004
        return np.round(self.kappa_min + self.kappa_step * np.arange(count), 12)

    @classmethod
    def from_dict(cls, d: dict) -> "SweepSpec":
        d = dict(d)
        f = dict(d.pop("frequencies"))
        if "values" in f:
            f["values"] = tuple(f["values"])
        i = dict(d.pop("initial"))
        if "values" in i:
            i["values"] = tuple(i["values"])
        sim = d.pop("sim", None)
        kw = {}
        if sim is not None:
            kw["sim"] = SimOptions(**sim)
        d["n_values"] = tuple(d["n_values"])
        if "seeds" in d:
            d["seeds"] = tuple(d["seeds"])
        return cls(frequencies=FrequencySpec(**f), initial=InitialSpec(**i), **kw, **d)


@dataclass
class SweepCell:
    n: int
    kappa: float
    seed: int
    label: str
    rho_mean: float
    rho_spread: float
    wall_time: float = 0.0
    note: str = ""


def initial_phases(spec: SweepSpec, seed: int, n_index: int, kappa_index: int) -> np.ndarray:
    init = spec.initial
    N = spec.frequencies.vector().size
    if init.kind == "explicit":
        return np.array(init.values, dtype=float)
    if init.kind != "uniform_box":
        raise ValueError(f"unknown initial spec {init.kind!r}")
    if init.scope == "scenario":
        n_index = kappa_index = 0
    key = np.array([seed, (n_index << 32) | kappa_index], dtype=np.uint64)
    rng = np.random.Generator(np.random.Philox(key=key))
    return rng.uniform(-init.alpha, init.alpha, N)


def _run_cell(args):
    spec, n, n_index, kappa, kappa_index, seed = args
    t0 = time.perf_counter()
    config = ModelConfig(n=n, kappa=float(kappa), frequencies=spec.frequencies.vector())
    phases = initial_phases(spec, seed, n_index, kappa_index)
    try:
        trace = simulate(config, EnsembleState(0.0, phases), spec.sim)
    except DivergenceError as exc:
        return SweepCell(n, float(kappa), seed, "undetermined", math.nan, math.nan,
                         time.perf_counter() - t0, note=str(exc))
    rho = rotation_numbers(trace, spec.discard_fraction).rho
    label = classify_rho(rho, config.frequencies, spec.eps_zero, spec.eps_equal)
    return SweepCell(n, float(kappa), seed, label, float(np.mean(rho)), float(np.ptp(rho)),
                     time.perf_counter() - t0)


def default_workers() -> int:
    env = os.environ.get("WINFREE_WORKERS")
    if env:
        return max(1, int(env))
    return 1


def run_sweep(spec: SweepSpec, worker_count: Optional[int] = None, order: Optional[Sequence[int]] = None) -> List[SweepCell]:
    """Simulate and classify every (n, kappa, seed) cell.

    ``order`` permutes submission order (used to show that the merged result
    does not depend on it).
    """
    workers = worker_count or default_workers()
    if workers < 1:
        raise ValueError("worker_count must be positive")
    tasks = [
        (spec, n, ni, kappa, ki, seed)
        for ni, n in enumerate(spec.n_values)
        for ki, kappa in enumerate(spec.kappa_grid())
        for seed in spec.seeds
    ]
    if order is not None:
        tasks = [tasks[i] for i in order]
    if workers == 1:
        cells = [_run_cell(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(_run_cell, tasks, chunksize=max(1, len(tasks) // (8 * workers))))
    for c in cells:
        if c.note:
            log.warning("cell n=%d kappa=%g seed=%d: %s", c.n, c.kappa, c.seed, c.note)
    cells.sort(key=lambda c: (c.n, c.kappa, c.seed))
    return cells


def _fmt(x: float) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else format(float(x), ".17g")


def write_cells_csv(cells: Sequence[SweepCell], path, timings: bool = False) -> None:
    """Cell table sorted by (n, kappa, seed).

    The timing column is left blank unless ``timings`` is set, which keeps
    the file byte-identical across runs and worker counts.
    """
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CELL_HEADER)
        for c in sorted(cells, key=lambda c: (c.n, c.kappa, c.seed)):
            w.writerow([c.n, _fmt(c.kappa), c.seed, c.label, _fmt(c.rho_mean), _fmt(c.rho_spread),
                        _fmt(c.wall_time) if timings else ""])


def read_cells_csv(path) -> List[SweepCell]:
    out = []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            num = lambda s: float(s) if s != "" else math.nan  # noqa: E731
            out.append(SweepCell(int(row["n"]), float(row["kappa"]), int(row["seed"]), row["label"],
                                 num(row["rho_mean"]), num(row["rho_spread"]), num(row["wall_time_s"])))
    return out


# -- boundary extraction ------------------------------------------------------


@dataclass
class CriticalCurve:
    n_values: List[int]
    kappa_i: List[Optional[float]]
    kappa_p: List[Optional[float]]
    kappa_d: List[Optional[float]]
    loglog_slope: Optional[float]  # of kappa_i against n
    loglog_slope_d: Optional[float]  # of kappa_d against n
    fit_points: int = 0
    fit_points_d: int = 0

    def entry(self, n: int) -> Dict[str, Optional[float]]:
        i = self.n_values.index(n)
        return {"kappa_i": self.kappa_i[i], "kappa_p": self.kappa_p[i], "kappa_d": self.kappa_d[i]}


def _column_labels(cells: Sequence[SweepCell]) -> Dict[int, List[tuple]]:
    by = {}
    for c in cells:
        by.setdefault((c.n, c.kappa), []).append(c.label)
    cols: Dict[int, List[tuple]] = {}
    for (n, kappa), labels in sorted(by.items()):
        counts = Counter(labels)
        label = min(counts, key=lambda l: (-counts[l], _LABEL_RANK.get(l, 9)))
        cols.setdefault(n, []).append((kappa, label))
    return cols


def _final_run_start(col, accept) -> Optional[float]:
    """Smallest kappa after which every label is in ``accept``; None if the
    top of the grid is outside ``accept`` or the whole column already is."""
    if not col or not accept(col[-1][1]):
        return None
    i = len(col) - 1
    while i > 0 and accept(col[i - 1][1]):
        i -= 1
    if i == 0:
        return None
    return col[i][0]


def _slope(ns, ks):
    pts = [(n, k) for n, k in zip(ns, ks) if k is not None and k > 0]
    if len(pts) < 2:
        return None, len(pts)
    x = np.log([p[0] for p in pts])
    y = np.log([p[1] for p in pts])
    return float(np.polyfit(x, y, 1)[0]), len(pts)


def critical_curves(cells: Sequence[SweepCell]) -> CriticalCurve:
    cols = _column_labels(cells)
    ns = sorted(cols)
    ki, kp, kd = [], [], []
    for n in ns:
        col = cols[n]
        labels = [l for _, l in col]
        kd.append(_final_run_start(col, lambda l: l == "death"))
        inc = [kappa for kappa, l in col if l == "incoherence"]
        # bracketed only if something other than incoherence sits above it
        ki.append(inc[-1] if inc and col[-1][1] != "incoherence" else None)
        if "partial_locking" in labels and "locking" in labels:
            kp.append(_final_run_start(col, lambda l: l in ("locking", "death")))
        else:
            kp.append(None)
    s_i, m_i = _slope(ns, ki)
    s_d, m_d = _slope(ns, kd)
    return CriticalCurve(ns, ki, kp, kd, s_i, s_d, m_i, m_d)


def write_curves(curve: CriticalCurve, csv_path, json_path) -> None:
    with Path(csv_path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_HEADER)
        for n, a, b, c in zip(curve.n_values, curve.kappa_i, curve.kappa_p, curve.kappa_d):
            w.writerow([n, _fmt(a), _fmt(b), _fmt(c)])
    Path(json_path).write_text(json.dumps(asdict(curve), indent=2, sort_keys=True) + "\n")
