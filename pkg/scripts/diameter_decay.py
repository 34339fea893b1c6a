"""Phase diameter D(t) of ten identical oscillators (nu=5, kappa=1) for n = 1, 10, 30.

Runs `winfree simulate` on each config and writes the traces next to an
ascii summary of D at a few times.  Plot column D of the trace CSVs to see
the stair-like decay.
"""
import csv
import sys
from pathlib import Path

from winfree.cli import main

HERE = Path(__file__).parent
out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("diameter_out")

for n in (1, 10, 30):
    code = main(["--quiet", "--out-dir", str(out), "simulate", str(HERE / "configs" / f"diameter_n{n}.json")])
    if code:
        sys.exit(code)
    with (out / f"diameter_n{n}_trace.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    picks = [rows[int(i * (len(rows) - 1) / 5)] for i in range(6)]
    print(f"n={n:<3d} " + "  ".join(f"D({float(r['t']):.0f})={float(r['D']):.3g}" for r in picks))
