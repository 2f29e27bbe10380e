import csv
import math

import numpy as np
import pytest

from twostage_spade.montecarlo import (
    RESULT_COLUMNS,
    SweepConfig,
    SweepResult,
    export_results,
    manifest_path,
    read_results,
    run_sweep,
)

SMALL = SweepConfig(thetas=(0.5,), trials=2, policies=("direct", "fixed:0.5"), seed=42)


def test_sweep_is_reproducible(tmp_path):
    a, b = run_sweep(SMALL), run_sweep(SMALL)
    export_results(a, tmp_path / "a.csv")
    export_results(b, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert open(manifest_path(tmp_path / "a.csv")).read() == open(manifest_path(tmp_path / "b.csv")).read()


def test_workers_do_not_change_results():
    cfg = SweepConfig(thetas=(0.5,), trials=4, policies=("fixed:0.5",), seed=1, workers=2)
    serial = SweepConfig(thetas=(0.5,), trials=4, policies=("fixed:0.5",), seed=1)
    assert run_sweep(cfg).cells[0].mse == run_sweep(serial).cells[0].mse


def test_empty_sweep_header_only(tmp_path):
    path = tmp_path / "empty.csv"
    export_results(SweepResult([]), path)
    assert path.read_text() == ",".join(RESULT_COLUMNS) + "\n"


def test_round_trip(tmp_path):
    res = run_sweep(SMALL)
    path = tmp_path / "r.csv"
    export_results(res, path)
    back = read_results(path)
    for c, r in zip(res.cells, back):
        for name in ("kind", "policy", "theta", "sigma_s", "n_photons", "trials", "mse", "mse_stderr", "bias",
                     "mean_alpha", "qcrb", "crb_direct"):
            assert getattr(c, name) == getattr(r, name)


def test_manifest_reproduces_mse(tmp_path):
    res = run_sweep(SMALL)
    path = tmp_path / "r.csv"
    export_results(res, path)
    manifest = dict(line.split(" = ", 1) for line in open(manifest_path(path)).read().splitlines())
    assert int(manifest["seed"]) == 42
    again = run_sweep(SweepConfig(thetas=(float(manifest["thetas"]),), trials=int(manifest["trials"]),
                                  policies=tuple(manifest["policies"].split(",")), seed=int(manifest["seed"])))
    assert [c.mse for c in again.cells] == [c.mse for c in res.cells]


def test_stderr_matches_bootstrap():
    res = run_sweep(SweepConfig(thetas=(0.5,), trials=200, policies=("fixed:0.5",), seed=3))
    cell = res.cells[0]
    rng = np.random.default_rng(0)
    boot = [rng.choice(cell.squared_errors, cell.squared_errors.size).mean() for _ in range(2000)]
    assert cell.mse_stderr == pytest.approx(np.std(boot), rel=0.2)


def test_bad_configs():
    with pytest.raises(ValueError):
        SweepConfig(thetas=(), trials=2)
    with pytest.raises(ValueError):
        SweepConfig(thetas=(0.5,), trials=2, policies=("sometimes",))


def test_unwritable_path_reports_path(tmp_path):
    bad = tmp_path / "missing" / "r.csv"
    with pytest.raises(OSError, match="missing"):
        export_results(SweepResult([]), bad)


def test_cell_lookup_and_bounds():
    res = run_sweep(SMALL)
    assert res.cell("direct", 0.5).mean_alpha == 1.0
    assert math.isfinite(res.cell("fixed:0.5", 0.5).qcrb)
    with pytest.raises(KeyError):
        res.cell("adaptive", 0.5)
    assert [b.bound_kind for b in res.bounds] == ["CRB_direct", "QCRB"]
