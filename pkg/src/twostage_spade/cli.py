"""Command-line entry point.

Settings are resolved as built-in defaults, then a ``key = value`` config
file (``--config``), then command-line flags. Every command writes
``manifest.txt`` to its output directory listing the fully resolved
settings; passing that manifest back through ``--config`` repeats the run.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import os
import sys

from . import __version__
from .adaptive import ADAPTIVE, AlphaPolicy, TrialConfig, run_trial, write_trace
from .estimation import LikelihoodConfig
from .information import (
    bspade_curve,
    crb_curve,
    export_bound_curves,
    fisher_direct_closed,
    fisher_direct_numeric,
    optimal_alpha,
    qcrb_curve,
    two_stage_variance,
)
from .models import TWO_POINT, ImagingSystem
from .montecarlo import SweepConfig, export_results, run_sweep

SEED_ENV = "TWOSTAGE_SPADE_SEED"
COMMANDS = ("fisher", "alpha", "trial", "sweep", "reproduce")

DEFAULTS = {
    "object": TWO_POINT,
    "sigma": "1.0",
    "photons": "10000",
    "trials": "500",
    "seed": "0",
    "sigma_s": "0",
    "policy": "direct,fixed:0.5,adaptive",
    "out": "out",
    "workers": "1",
    "scale": "desk",
    "theta": "0.1,0.2,0.3,0.5,0.7,1.0,1.5,2.0",
    "stream": "0",
    "checkpoints": "100",
    "figure": "fig3a",
    "bin_width": repr(LikelihoodConfig.bin_width),
    "nodes": str(LikelihoodConfig.n_nodes),
    "theta_max": repr(LikelihoodConfig.theta_max),
    "prior_mode": LikelihoodConfig.prior_mode,
}
# written into manifests for provenance; accepted and ignored when read back
INFO_KEYS = {"command", "argv", "timestamp", "code_version", "seed_source"}

SIGMA_S_GRID = "0,0.01,0.05,0.1"
PRESETS = {
    "fig3a": {"object": TWO_POINT, "theta": "0.05,0.1,0.2,0.3,0.5,0.7,1.0"},
    "fig3b": {"object": TWO_POINT, "theta": "0.5,1.0,1.5,2.0,2.5,3.0,4.0"},
    "fig4": {"object": "line", "theta": "0.1,0.2,0.3,0.5,0.7,1.0,1.5,2.0"},
}
SCALES = {"desk": {"photons": "10000", "trials": "500"}, "full": {"photons": "100000", "trials": "500"}}


class UsageError(Exception):
    pass


def read_config(path) -> dict:
    cfg = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    for n, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected 'key = value', got {line!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        key = key.replace("-", "_")
        if key in INFO_KEYS:
            continue
        if key not in DEFAULTS:
            raise UsageError(f"{path}:{n}: unknown config key {key!r}")
        cfg[key] = value
    return cfg


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value settings file (a manifest works)")
    common.add_argument("--object", choices=["two-point", "line"])
    common.add_argument("--sigma", help="PSF width")
    common.add_argument("--photons", help="mean total photon number N")
    common.add_argument("--trials")
    common.add_argument("--seed")
    common.add_argument("--sigma-s", dest="sigma_s", help="comma-separated pointing-error RMS values")
    common.add_argument("--policy", help="comma-separated: direct | fixed:<a> | adaptive")
    common.add_argument("--theta", help="comma-separated theta values in units of sigma")
    common.add_argument("--out")
    common.add_argument("--workers")
    common.add_argument("--scale", choices=list(SCALES))
    common.add_argument("--stream")
    common.add_argument("--checkpoints")
    common.add_argument("--bin-width", dest="bin_width")
    common.add_argument("--nodes")
    common.add_argument("--theta-max", dest="theta_max")
    common.add_argument("--prior-mode", dest="prior_mode")

    parser = argparse.ArgumentParser(prog="twostage-spade", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("fisher", parents=[common], help="direct-detection information and bounds")
    sub.add_parser("alpha", parents=[common], help="optimal allocation ratio curves")
    sub.add_parser("trial", parents=[common], help="run a single imaging trial")
    sub.add_parser("sweep", parents=[common], help="Monte Carlo sweep")
    rep = sub.add_parser("reproduce", parents=[common], help="figure presets")
    rep.add_argument("figure", nargs="?", choices=list(PRESETS))
    return parser


def resolve(args) -> tuple[dict, str]:
    settings = dict(DEFAULTS)
    seed_source = "default"
    if os.environ.get(SEED_ENV):
        settings["seed"] = os.environ[SEED_ENV]
        seed_source = f"env:{SEED_ENV}"
    file_cfg = read_config(args.config) if args.config else {}
    flags = {k: v for k, v in vars(args).items() if k in DEFAULTS and v is not None}
    if args.command == "reproduce":
        figure = flags.get("figure") or file_cfg.get("figure") or settings["figure"]
        if figure not in PRESETS:
            raise UsageError(f"unknown figure {figure!r}")
        scale = flags.get("scale") or file_cfg.get("scale") or settings["scale"]
        settings.update(PRESETS[figure])
        settings.update(SCALES[scale])
        settings["sigma_s"] = SIGMA_S_GRID
    settings.update(file_cfg)
    settings.update(flags)
    if "seed" in file_cfg:
        seed_source = "config"
    if "seed" in flags:
        seed_source = "flag"
    return settings, seed_source


def _floats(text, key):
    try:
        vals = [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"invalid number in {key}: {text!r}") from exc
    if not vals:
        raise UsageError(f"{key} must not be empty")
    return vals


def _int(text, key):
    try:
        return int(float(text))
    except ValueError as exc:
        raise UsageError(f"invalid integer for {key}: {text!r}") from exc


def likelihood_config(s) -> LikelihoodConfig:
    bw = None if s["bin_width"] in ("None", "none", "") else float(s["bin_width"])
    try:
        return LikelihoodConfig(bin_width=bw, n_nodes=_int(s["nodes"], "nodes"),
                                theta_max=float(s["theta_max"]), prior_mode=s["prior_mode"])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def write_manifest(out, command, settings, seed_source, argv) -> str:
    path = os.path.join(out, "manifest.txt")
    with open(path, "w") as fh:
        fh.write(f"command = {command}\n")
        fh.write(f"argv = {' '.join(argv)}\n")
        fh.write(f"timestamp = {datetime.datetime.now(datetime.timezone.utc).isoformat()}\n")
        fh.write(f"code_version = {__version__}\n")
        fh.write(f"seed_source = {seed_source}\n")
        for k in sorted(settings):
            fh.write(f"{k} = {settings[k]}\n")
    return path


def cmd_fisher(s, out):
    sigma = float(s["sigma"])
    sys_ = ImagingSystem(sigma)
    thetas = [t * sigma for t in _floats(s["theta"], "theta")]
    if min(thetas) < 0:
        raise UsageError("theta values must be non-negative")
    n = float(s["photons"])
    kind = s["object"]
    with open(os.path.join(out, "fisher_info.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["theta_over_sigma", "sigma", "fisher_numeric", "fisher_closed", "rel_deviation"])
        for t in thetas:
            num = fisher_direct_numeric(t, kind, sys_)
            closed = fisher_direct_closed(t, kind, sys_) if t > 0 else float("nan")
            dev = (closed - num) / num if t > 0 and num > 0 else float("nan")
            w.writerow([repr(t / sigma), repr(sigma), repr(num), repr(closed), repr(dev)])
    curves = [crb_curve(thetas, n, kind, sys_), bspade_curve(thetas, n, kind, sys_)]
    if kind == TWO_POINT:
        curves.append(qcrb_curve(thetas, n, sys_))
    export_bound_curves(curves, os.path.join(out, "bounds.csv"))
    return 0


def cmd_alpha(s, out):
    sigma = float(s["sigma"])
    sys_ = ImagingSystem(sigma)
    thetas = [t * sigma for t in _floats(s["theta"], "theta")]
    n = float(s["photons"])
    with open(os.path.join(out, "alpha.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["theta_over_sigma", "sigma_s_over_sigma", "alpha_star", "variance", "normalized_variance"])
        for ss in [v * sigma for v in _floats(s["sigma_s"], "sigma_s")]:
            for t in thetas:
                a = optimal_alpha(t, n, ss, s["object"], sys_)
                v = two_stage_variance(a, t, n, ss, s["object"], sys_)
                w.writerow([repr(t / sigma), repr(ss / sigma), repr(a), repr(v), repr(v * n / (4 * sigma**2))])
    return 0


def _trial_config(s) -> TrialConfig:
    thetas = _floats(s["theta"], "theta")
    policies = s["policy"].split(",")
    sigma_s = _floats(s["sigma_s"], "sigma_s")
    if len(thetas) != 1 or len(policies) != 1 or len(sigma_s) != 1:
        raise UsageError("trial needs exactly one theta, one policy and one sigma_s")
    sigma = float(s["sigma"])
    try:
        policy = AlphaPolicy.parse(policies[0])
        return TrialConfig(float(s["photons"]), s["object"], thetas[0] * sigma, sigma_s[0] * sigma, policy,
                           _int(s["checkpoints"], "checkpoints"), _int(s["seed"], "seed"),
                           _int(s["stream"], "stream"), sigma, likelihood_config(s))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_trial(s, out):
    cfg = _trial_config(s)
    o = run_trial(cfg)
    lines = [
        f"policy = {cfg.policy.name}",
        f"theta_true = {cfg.theta!r}",
        f"theta_hat = {o.theta_hat!r}",
        f"phi_hat = {o.phi_hat!r}",
        f"log_likelihood_at_max = {o.report.log_likelihood_at_max!r}",
        f"search_status = {o.report.search_status}",
        f"alpha_used = {o.alpha_used!r}",
        f"switch_checkpoint = {o.switch_checkpoint}",
        f"n1 = {o.stage1.n1}",
        f"k = {o.stage2.k}",
        f"n2 = {o.stage2.n2}",
        f"xi_p = {o.misalignment.xi_p!r}",
        f"xi_s = {o.misalignment.xi_s!r}",
    ]
    if cfg.policy.mode == ADAPTIVE:
        trace = os.path.join(out, "trace.csv")
        write_trace(o.trace, trace)
    else:
        trace = "none"
    # the saved report names the trace relative to the output directory
    with open(os.path.join(out, "trial.txt"), "w") as fh:
        fh.write("\n".join(lines + [f"trace = {os.path.basename(trace)}"]) + "\n")
    sys.stdout.write("\n".join(lines + [f"trace = {trace}"]) + "\n")
    return 0


def _sweep_config(s) -> SweepConfig:
    sigma = float(s["sigma"])
    try:
        return SweepConfig(
            thetas=tuple(t * sigma for t in _floats(s["theta"], "theta")),
            sigma_s=tuple(v * sigma for v in _floats(s["sigma_s"], "sigma_s")),
            n_photons=float(s["photons"]),
            trials=_int(s["trials"], "trials"),
            policies=tuple(p.strip() for p in s["policy"].split(",") if p.strip()),
            seed=_int(s["seed"], "seed"),
            kind=s["object"],
            sigma=sigma,
            checkpoints=_int(s["checkpoints"], "checkpoints"),
            workers=_int(s["workers"], "workers"),
            likelihood=likelihood_config(s),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _run_sweep(s, out, name):
    cfg = _sweep_config(s)
    report = lambda c: sys.stderr.write(
        f"{c.policy:>10} theta={c.theta / cfg.sigma:g} sigma_s={c.sigma_s / cfg.sigma:g} "
        f"mse={c.mse:.4g} +- {c.mse_stderr:.2g}\n")
    result = run_sweep(cfg, progress=report)
    export_results(result, os.path.join(out, f"{name}.csv"))
    export_bound_curves(result.bounds, os.path.join(out, f"{name}_bounds.csv"))
    degenerate = [c for c in result.cells if c.n_degenerate]
    for c in degenerate:
        sys.stderr.write(f"note: {c.n_degenerate} zero-photon trials in cell {c.policy} theta={c.theta:g}\n")
    return 0


def cmd_sweep(s, out):
    return _run_sweep(s, out, "results")


def cmd_reproduce(s, out):
    return _run_sweep(s, out, s["figure"])


HANDLERS = {"fisher": cmd_fisher, "alpha": cmd_alpha, "trial": cmd_trial, "sweep": cmd_sweep,
            "reproduce": cmd_reproduce}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings, seed_source = resolve(args)
        if args.command == "reproduce" and args.figure:
            settings["figure"] = args.figure
        out = settings["out"]
        os.makedirs(out, exist_ok=True)
        write_manifest(out, args.command, settings, seed_source, argv)
        return HANDLERS[args.command](settings, out)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"{parser.prog}: error: {exc}\n")
        return 2
    except Exception as exc:  # cells that did not complete
        sys.stderr.write(f"{parser.prog}: failed: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
