"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v`` (the lines are printed even
without ``-s``). The Monte Carlo criteria take several minutes on one core.
"""

import math
import os

import numpy as np
import pytest

from twostage_spade.cli import main
from twostage_spade.estimation import (
    AlignmentPrior,
    bspade_cubic_estimate,
    bspade_exact_inverse,
    centroid_com,
    centroid_error_variance,
)
from twostage_spade.information import (
    bspade_estimator_variance,
    bspade_fisher_per_photon,
    fisher_direct_numeric,
    optimal_alpha,
)
from twostage_spade.models import LINE, TWO_POINT, ImagingSystem, ObjectModel, bspade_prob, bspade_prob_numeric_oracle
from twostage_spade.montecarlo import SweepConfig, run_sweep
from twostage_spade.sampling import RandomStream, Stage2Record, sample_positions

SYS = ImagingSystem()
SEED = 2024


@pytest.fixture
def report(capsys):
    def _report(n, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail
    return _report


def within_2se(low, high):
    """``low <= high`` up to two standard errors of the difference."""
    return low.mse <= high.mse + 2.0 * math.hypot(low.mse_stderr, high.mse_stderr)


def test_criterion_01_model_oracle(report):
    worst = 0.0
    for kind in (TWO_POINT, LINE):
        for xi in np.linspace(-2, 2, 9):
            for theta in np.linspace(0, 4, 9):
                obj = ObjectModel(kind, float(theta))
                worst = max(worst, abs(bspade_prob(float(xi), obj) - bspade_prob_numeric_oracle(float(xi), obj)))
    report(1, worst <= 1e-9, f"max |closed - oracle| = {worst:.2e} over 2x81 points (tol 1e-9)")


def test_criterion_02_rayleigh_curse(report):
    small = fisher_direct_numeric(0.05, TWO_POINT) * 4
    zero = fisher_direct_numeric(0.0, TWO_POINT)
    report(2, small < 0.05 and zero == 0.0, f"I_D(0.05)*4sigma^2 = {small:.3e} (< 0.05), I_D(0) = {zero!r}")


def test_criterion_03_quantum_limit_at_alignment(report):
    n2 = 10_000
    var = bspade_estimator_variance(0.2, n2, AlignmentPrior(0.0), TWO_POINT)
    info = bspade_fisher_per_photon(0.2, TWO_POINT)
    r1, r2 = var / (4.0 / n2), info / 0.25
    report(3, abs(r1 - 1) <= 0.1 and abs(r2 - 1) <= 0.01,
           f"variance / (4/n2) = {r1:.4f} (within 10%), info / (1/4) = {r2:.5f} (within 1%)")


def _com_ratio(kind, theta, n1=1000, trials=2000):
    est = [centroid_com(sample_positions(n1, 0.0, ObjectModel(kind, theta), SYS, RandomStream(SEED, 4, i)))
           for i in range(trials)]
    return np.var(est, ddof=1) / centroid_error_variance(n1, theta, kind)


def test_criterion_04_centroid_variance(report):
    cases = [(TWO_POINT, 0.0), (TWO_POINT, 1.0), (TWO_POINT, 2.0), (LINE, 2.0)]
    ratios = [_com_ratio(k, t) for k, t in cases]
    detail = ", ".join(f"{k} {t:g}: {r:.3f}" for (k, t), r in zip(cases, ratios))
    report(4, all(abs(r - 1) <= 0.05 for r in ratios), f"empirical / predicted variance: {detail}")


def test_criterion_05_cubic_vs_exact(report):
    n2 = 10_000
    worst = 0.0
    for kind in (TWO_POINT, LINE):
        for theta in np.linspace(0.05, 0.5, 10):
            for xi in np.linspace(-0.2, 0.2, 9):
                g = bspade_prob(float(xi), ObjectModel(kind, float(theta)))
                sd = math.sqrt(n2 * g * (1 - g))
                for k in range(max(0, math.ceil(n2 * g - 3 * sd)), min(n2, math.floor(n2 * g + 3 * sd)) + 1):
                    rec = Stage2Record(k, n2)
                    exact = bspade_exact_inverse(rec, float(xi), kind)
                    cubic = bspade_cubic_estimate(rec, float(xi), kind)
                    if exact == 0.0:
                        err = 0.0 if cubic == 0.0 else math.inf
                    else:
                        err = abs(cubic - exact) / exact
                    worst = max(worst, err)
    report(5, worst < 0.005, f"max relative error = {worst:.2e} (< 0.5%)")


def test_criterion_06_alpha_endpoints(report):
    small = optimal_alpha(0.05, 1e5, 0.0, TWO_POINT)
    large = {t: optimal_alpha(t, 1e5, 0.0, TWO_POINT) for t in (2.5, 3.0, 4.0, 6.0, 8.0)}
    ok_small = 0.4 <= small <= 0.6
    ok_large = all(a == 1.0 for a in large.values())
    report(6, ok_small and ok_large,
           f"alpha*(0.05 sigma) = {small:.3f} (need [0.4, 0.6]: {'ok' if ok_small else 'no'}); "
           f"alpha*(theta >= 2.5 sigma) = {sorted(set(large.values()))} (need 1: {'ok' if ok_large else 'no'})")


def test_criterion_07_fig3a_desk(report):
    thetas = (0.2, 0.5, 1.0)
    res = run_sweep(SweepConfig(thetas=thetas, n_photons=1e4, trials=500, seed=SEED))
    qcrb = 4.0 / 1e4
    msgs, ok = [], True
    for t in thetas:
        d, f, a = (res.cell(p, t) for p in ("direct", "fixed:0.5", "adaptive"))
        ratio = a.mse / qcrb
        ordered = within_2se(a, f) and within_2se(f, d)
        ok &= ratio <= 5.0 and ordered
        if t == 0.2:
            gain = d.mse / a.mse
            ok &= 1.0 <= ratio and gain >= 10.0
            msgs.append(f"direct/adaptive at 0.2 = {gain:.1f}")
        msgs.append(f"theta {t:g}: adaptive/QCRB = {ratio:.2f}, mse*N/4 d/f/a = "
                    f"{d.mse / qcrb:.2f}/{f.mse / qcrb:.2f}/{a.mse / qcrb:.2f} ordered={ordered}")
    report(7, ok, "; ".join(msgs))


def test_criterion_08_fig3b_reversion(report):
    res = run_sweep(SweepConfig(thetas=(3.0,), n_photons=1e5, trials=200, policies=("direct", "adaptive"),
                                seed=SEED))
    d, a = res.cell("direct", 3.0), res.cell("adaptive", 3.0)
    n_full = int(np.sum(a.alphas == 1.0))
    ratio = a.mse / d.mse
    report(8, n_full >= 190 and ratio <= 1.2,
           f"alpha_used = 1 in {n_full}/200 trials (>= 95%), adaptive/direct MSE = {ratio:.3f} (<= 1.2)")


def test_criterion_09_fig4_desk(report):
    thetas = (0.2, 0.5, 1.0)
    res = run_sweep(SweepConfig(thetas=thetas, n_photons=1e4, trials=500, kind=LINE, seed=SEED))
    msgs, ok = [], True
    for t in thetas:
        d, f, a = (res.cell(p, t) for p in ("direct", "fixed:0.5", "adaptive"))
        ordered = within_2se(a, f) and within_2se(f, d)
        ok &= ordered
        msgs.append(f"theta {t:g}: mse*N/4 d/f/a = {d.mse * 2500:.2f}/{f.mse * 2500:.2f}/{a.mse * 2500:.2f}")
    com = _com_ratio(LINE, 1.0)
    ok &= abs(com - 1) <= 0.05
    msgs.append(f"line centroid variance ratio at sigma = {com:.3f}")
    report(9, ok, "; ".join(msgs))


def test_criterion_10_misalignment_trend(report):
    levels = (0.0, 0.01, 0.05, 0.1)
    res = run_sweep(SweepConfig(thetas=(0.3,), sigma_s=levels, n_photons=1e4, trials=500, policies=("adaptive",),
                                seed=SEED))
    cells = [res.cell("adaptive", 0.3, s) for s in levels]
    ok = all(within_2se(lo, hi) for lo, hi in zip(cells, cells[1:]))
    detail = ", ".join(f"{s:g}: {c.mse * 2500:.2f}+-{c.mse_stderr * 2500:.2f}" for s, c in zip(levels, cells))
    report(10, ok, f"adaptive mse*N/4 by sigma_s: {detail}")


def _files(d):
    return {f: open(os.path.join(d, f), "rb").read() for f in sorted(os.listdir(d)) if f != "manifest.txt"}


def test_criterion_11_determinism(report, tmp_path):
    runs = {
        "fisher": ["--theta", "0.1,0.5,1,2"],
        "alpha": ["--theta", "0.5,1", "--photons", "5000", "--sigma-s", "0,0.05"],
        "trial": ["--theta", "0.3", "--policy", "adaptive", "--sigma-s", "0.05", "--seed", "9"],
        "sweep": ["--theta", "0.5", "--policy", "direct,fixed:0.5", "--trials", "4"],
        "reproduce": ["fig4", "--theta", "0.5", "--trials", "2", "--photons", "2000", "--sigma-s", "0"],
    }
    bad = []
    for cmd, args in runs.items():
        first, second = str(tmp_path / f"{cmd}1"), str(tmp_path / f"{cmd}2")
        rc1 = main([cmd, *args, "--out", first])
        rc2 = main([cmd, "--config", os.path.join(first, "manifest.txt"), "--out", second])
        if rc1 != 0 or rc2 != 0 or _files(first) != _files(second) or not _files(first):
            bad.append(cmd)
    report(11, not bad, f"re-run from manifest byte-identical for {sorted(set(runs) - set(bad))}"
           + (f"; differs: {bad}" if bad else ""))
