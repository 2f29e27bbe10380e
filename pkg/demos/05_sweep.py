"""
A small Monte Carlo sweep
=========================

Desk-scale version of the separation sweep; use the CLI ``reproduce``
command for the full grids.
"""

import tempfile

from twostage_spade.montecarlo import SweepConfig, export_results, run_sweep

cfg = SweepConfig(thetas=(0.2, 0.5, 1.0), n_photons=1e4, trials=50, seed=1)
res = run_sweep(cfg, progress=lambda c: print(f"{c.policy:>10}  theta={c.theta:3.1f}  "
                                              f"mse/QCRB={c.mse / c.qcrb:7.2f} +- {c.mse_stderr / c.qcrb:5.2f}"))

path = tempfile.mkdtemp() + "/sweep.csv"
export_results(res, path)
print("written", path)
