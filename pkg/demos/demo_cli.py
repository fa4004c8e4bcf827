"""
Driving everything from the command line
========================================

The ``iflasso`` command exposes four subcommands: ``fit`` for a panel CSV,
``simulate`` for the Monte Carlo grid, ``portfolio`` for holdings estimation
and ``bench`` for a head-to-head timing.  This script runs each once in a
scratch directory through the same entry point.
"""

import tempfile
from pathlib import Path

from iflasso import ScenarioSpec, generate_instance, write_panel_csv
from iflasso.cli import main

with tempfile.TemporaryDirectory() as d:
    d = Path(d)
    write_panel_csv(generate_instance(ScenarioSpec(p=5, q=1, R=2, n_per_regime=20), 0).panel, d / "panel.csv")

    print("fit ->", main(["fit", str(d / "panel.csv"), "--out", str(d / "fit")]))
    print("  ", sorted(p.name for p in (d / "fit").iterdir()))

    print("simulate ->", main(["simulate", "--reps", "1", "--p", "20", "--q", "2", "--n-per-regime", "30", "--out", str(d / "sim")]))
    print((d / "sim" / "tables.csv").read_text())

    print("portfolio ->", main(["portfolio", "--synth", "--paper-shape", "--n-per-regime", "60", "--out", str(d / "pf")]))
    print("  ", (d / "pf" / "breaks.csv").read_text().splitlines()[:4])

    print("bench ->", main(["bench", "--p", "10", "--q", "2", "--n-per-regime", "20", "--out", str(d / "bench")]))
    print((d / "bench" / "bench.json").read_text())
