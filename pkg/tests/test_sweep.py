import math

import numpy as np
import pytest

from winfree.dynamics import SimOptions
from winfree.sweep import (
    CELL_HEADER,
    FrequencySpec,
    InitialSpec,
    SweepCell,
    SweepSpec,
    critical_curves,
    initial_phases,
    read_cells_csv,
    run_sweep,
    write_cells_csv,
    write_curves,
)


def small_spec(**kw):
    base = dict(
        n_values=(1, 3),
        kappa_min=0.0,
        kappa_max=0.4,
        kappa_step=0.2,
        frequencies=FrequencySpec("uniform_list", N=4, start=1.0, stop=2.5),
        initial=InitialSpec("uniform_box", alpha=math.pi / 2),
        sim=SimOptions(dt=1e-2, t_end=40.0, record_stride=10),
        seeds=(0, 1),
    )
    base.update(kw)
    return SweepSpec(**base)


def test_kappa_grid_is_clean():
    spec = small_spec(kappa_min=0.0, kappa_max=1.0, kappa_step=0.1)
    grid = spec.kappa_grid()
    assert grid.size == 11
    assert grid[3] == 0.3 and grid[-1] == 1.0


def test_spec_validation():
    with pytest.raises(ValueError):
        small_spec(kappa_step=0.0)
    with pytest.raises(ValueError):
        small_spec(kappa_max=-1.0)
    with pytest.raises(ValueError):
        small_spec(initial=InitialSpec("explicit", values=(0.0, 1.0)))
    with pytest.raises(ValueError):
        small_spec(initial=InitialSpec("uniform_box", scope="global"))


def test_from_dict_round_trip():
    spec = SweepSpec.from_dict({
        "n_values": [1, 2],
        "kappa_min": 0.0, "kappa_max": 1.0, "kappa_step": 0.5,
        "frequencies": {"kind": "explicit", "values": [1.0, 2.0]},
        "initial": {"kind": "uniform_box", "alpha": 1.0, "scope": "scenario"},
        "sim": {"dt": 0.01, "t_end": 10.0},
        "seeds": [3],
    })
    assert spec.n_values == (1, 2) and spec.seeds == (3,)
    assert spec.frequencies.vector().tolist() == [1.0, 2.0]
    assert spec.sim.t_end == 10.0


def test_initial_phases_keyed_by_coordinates():
    spec = small_spec()
    a = initial_phases(spec, 0, 0, 0)
    assert np.array_equal(a, initial_phases(spec, 0, 0, 0))
    assert not np.array_equal(a, initial_phases(spec, 0, 0, 1))
    assert not np.array_equal(a, initial_phases(spec, 1, 0, 0))
    assert np.all(np.abs(a) < math.pi / 2)
    scen = small_spec(initial=InitialSpec("uniform_box", alpha=1.0, scope="scenario"))
    assert np.array_equal(initial_phases(scen, 2, 0, 0), initial_phases(scen, 2, 1, 5))


def test_uncoupled_cells_are_incoherent():
    cells = run_sweep(small_spec(kappa_max=0.0), worker_count=1)
    assert len(cells) == 4
    assert all(c.label == "incoherence" for c in cells)
    assert all(c.rho_mean == pytest.approx(1.75, rel=1e-12) for c in cells)


def test_result_independent_of_workers_and_order(tmp_path):
    spec = small_spec()
    a = run_sweep(spec, worker_count=1)
    n_tasks = len(a)
    order = list(np.random.default_rng(0).permutation(n_tasks))
    b = run_sweep(spec, worker_count=3, order=order)
    write_cells_csv(a, tmp_path / "a.csv")
    write_cells_csv(b, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_cells_csv_round_trip(tmp_path):
    cells = [SweepCell(2, 0.1, 0, "death", 0.0, 0.0, 1.5), SweepCell(1, 0.3, 1, "undetermined", math.nan, math.nan)]
    p = tmp_path / "cells.csv"
    write_cells_csv(cells, p)
    lines = p.read_text().splitlines()
    assert lines[0] == ",".join(CELL_HEADER)
    assert lines[1].startswith("1,0.29999999999999999,1,undetermined,,,")
    assert lines[2].endswith(",")  # no wall time without timings
    back = read_cells_csv(p)
    assert [c.label for c in back] == ["undetermined", "death"]
    write_cells_csv(cells, p, timings=True)
    assert read_cells_csv(p)[1].wall_time == 1.5


def _column(n, labels, start=1.0, step=0.1):
    return [SweepCell(n, round(start + i * step, 12), 0, l, 0.0, 0.0) for i, l in enumerate(labels)]


def test_curves_read_boundaries():
    cells = _column(1, ["incoherence", "incoherence", "partial_locking", "locking", "death", "death"])
    c = critical_curves(cells)
    assert c.kappa_i == [1.1]
    assert c.kappa_p == [1.3]
    assert c.kappa_d == [1.4]


def test_curves_ignore_reverting_labels():
    cells = _column(1, ["incoherence", "death", "incoherence", "death", "death"])
    c = critical_curves(cells)
    assert c.kappa_d == [1.3]
    assert c.kappa_i == [1.2]


def test_curves_unbracketed_entries_are_none():
    cells = _column(1, ["incoherence"] * 3) + _column(2, ["death"] * 3)
    c = critical_curves(cells)
    assert c.kappa_i == [None, None]
    assert c.kappa_d == [None, None]
    assert c.loglog_slope is None and c.fit_points == 0


def test_curves_majority_over_seeds():
    cells = [SweepCell(1, 1.0, s, l, 0, 0) for s, l in enumerate(["incoherence", "incoherence", "death"])]
    cells += [SweepCell(1, 1.1, s, "death", 0, 0) for s in range(3)]
    assert critical_curves(cells).kappa_d == [1.1]


def test_loglog_slope_of_inverse_sqrt():
    ns = [1, 2, 5, 10, 20, 30]
    cells = []
    for n in ns:
        kc = 4.0 / math.sqrt(n)
        grid = np.round(np.arange(0.0, 5.0, 0.001), 12)
        cells += [SweepCell(n, float(k), 0, "incoherence" if k <= kc else "locking", 0, 0) for k in grid]
    c = critical_curves(cells)
    assert c.fit_points == 6
    assert c.loglog_slope == pytest.approx(-0.5, abs=0.01)


def test_write_curves(tmp_path):
    cells = _column(1, ["incoherence", "locking"]) + _column(2, ["incoherence", "incoherence"])
    curve = critical_curves(cells)
    write_curves(curve, tmp_path / "c.csv", tmp_path / "c.json")
    assert (tmp_path / "c.csv").read_text() == "n,kappa_i,kappa_p,kappa_d\n1,1,,\n2,,,\n"
    assert '"loglog_slope": null' in (tmp_path / "c.json").read_text()
