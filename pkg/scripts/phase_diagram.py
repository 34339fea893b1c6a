"""Desk-scale (n, kappa) phase diagrams: nonidentical nu in [5.4, 9] and identical nu = 5.

Usage: python scripts/phase_diagram.py [out_dir] [workers]
Writes cells.csv, curves.csv and curves.json under out_dir/<name>/.
"""
import sys
from pathlib import Path

from winfree.cli import main

HERE = Path(__file__).parent
out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("phase_diagram_out")
workers = sys.argv[2] if len(sys.argv) > 2 else "1"

for name in ("sweep_nonidentical", "sweep_identical"):
    print(f"-- {name}")
    code = main(["--out-dir", str(out / name), "--workers", workers, "sweep", str(HERE / "configs" / f"{name}.json")])
    if code:
        sys.exit(code)
