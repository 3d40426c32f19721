"""Command-line front end for certification runs, sweeps, and data ingestion.

Commands
--------
certify           one scenario -> JSON report with p_guess / H_min
scan              eta grid with binning-period optimisation -> CSV
expbound          evaluate the model dual witness on measured samples
convergence       H_min versus Fock cutoff -> CSV
dump-certificate  solve one scenario and write the dual witness JSON

A run is configured by a JSON file (--config) and/or flags; flags take
precedence over the file, which takes precedence over defaults.  Exit codes:
0 success, 1 stage failure, 2 malformed configuration, 3 missing setting
pair in input data.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys

import numpy as np

from . import certify as certify_mod
from . import experiment, sdp, stats
from .config import ConfigError, RunConfig
from .fock import gaussian_to_fock, truncation_overlap
from .gaussian import (
    ChannelParams,
    GaussianState,
    apply_loss_noise,
    db_to_parameter,
    largest_variance,
    split_sms_covariance,
    tms_covariance,
)
from .povm import IntervalBinning, PeriodicBinning, alice_measurements, bob_measurements

EXIT_FAILURE = 1
EXIT_BAD_CONFIG = 2
EXIT_MISSING_PAIR = 3


def build_state(cfg: RunConfig, eta: float | None = None) -> GaussianState:
    eta = cfg.eta if eta is None else eta
    if cfg.source == "experiment_model":
        return experiment.experiment_covariance(
            experiment.TemporalModeParams(efficiency=eta)
        )
    if cfg.source == "external_G":
        return GaussianState(2, np.asarray(cfg.external_g, dtype=float))
    s = db_to_parameter(cfg.squeezing_db)
    state = tms_covariance(s) if cfg.source == "tms" else split_sms_covariance(s)
    return apply_loss_noise(state, ChannelParams(eta, cfg.noise_snu))


def bob_measurement_set(cfg: RunConfig, state: GaussianState, cutoff: int):
    half_range = cfg.half_range_bob
    if half_range is None:
        half_range = 5.0 * math.sqrt(largest_variance(state))
    binning = IntervalBinning(half_range, cfg.num_outcomes_bob)
    return bob_measurements(cfg.num_settings_bob, binning, cutoff), binning


def certify_scenario(cfg: RunConfig, eta: float | None = None, period_q: float | None = None):
    """Solve one scenario; returns (result, deficit, period_q used)."""
    state = build_state(cfg, eta)
    period = cfg.period_q if period_q is None else period_q
    if period is None:
        raise ConfigError("period_q: required unless period_scan is given")
    alice = alice_measurements(
        PeriodicBinning(period, cfg.num_outcomes_alice), cfg.cutoff
    )
    rho, deficit = gaussian_to_fock(state, cfg.cutoff)
    assemblage = stats.assemblage_from_state(rho, alice)
    kwargs = dict(
        target_setting=cfg.target_setting,
        gap_tol=cfg.gap_tol,
        feas_tol=cfg.feas_tol,
        method=cfg.solver,
    )
    if cfg.tomography:
        result = certify_mod.pguess_tomography(assemblage, **kwargs)
    else:
        bob, _ = bob_measurement_set(cfg, state, cfg.cutoff)
        dist = stats.assemblage_to_joint(assemblage, bob)
        result = certify_mod.pguess_probabilities(dist, alice, bob, **kwargs)
    return result, deficit, period


def optimized_period(cfg: RunConfig, eta: float | None = None):
    """(best period, best result, deficit) over the configured period scan."""
    lo, hi, step = cfg.period_scan
    best = None
    for period in np.arange(lo, hi + 1e-9, step):
        result, deficit, _ = certify_scenario(cfg, eta, float(period))
        if best is None or result.hmin > best[1].hmin:
            best = (float(period), result, deficit)
    return best


def _load_config(args) -> RunConfig:
    if args.config:
        with open(args.config) as fh:
            cfg = RunConfig.from_json(fh.read())
    else:
        cfg = RunConfig()
    for name in vars(cfg):
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    cfg.validate()
    return cfg


def _write_json(path, payload) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def cmd_certify(args) -> int:
    cfg = _load_config(args)
    try:
        if cfg.period_scan is not None:
            period, result, deficit = optimized_period(cfg)
        else:
            result, deficit, period = certify_scenario(cfg)
    except sdp.NumericalFailure as exc:
        print(f"solver stage failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    report = {
        "pguess": result.pguess,
        "hmin": result.hmin,
        "duality_gap": result.gap,
        "residuals": result.residuals,
        "truncation_deficit": deficit,
        "period_q": period,
        **cfg.stamp(),
    }
    _write_json(cfg.output, report)
    print(
        f"source={cfg.source} eta={cfg.eta} o_A={cfg.num_outcomes_alice} "
        f"T_q={period} cutoff={cfg.cutoff}: "
        f"p_guess={result.pguess:.6f}  H_min={result.hmin:.4f} bits",
        file=sys.stderr,
    )
    return 0


def cmd_scan(args) -> int:
    cfg = _load_config(args)
    if not cfg.eta_grid:
        print("config error: eta_grid: non-empty grid required", file=sys.stderr)
        return EXIT_BAD_CONFIG
    if cfg.period_scan is None:
        cfg.period_scan = [cfg.period_q, cfg.period_q, 1.0]
    out = open(cfg.output, "w", newline="") if cfg.output else sys.stdout
    try:
        stamp = cfg.stamp()
        out.write(f"# config_hash={stamp['config_hash']} "
                  f"artifact_version={stamp['artifact_version']}\n")
        writer = csv.writer(out)
        writer.writerow(["eta", "T_q_opt", "H_min", "source", "m_B", "noise_snu"])
        for eta in cfg.eta_grid:
            try:
                period, result, _ = optimized_period(cfg, eta)
                writer.writerow(
                    [eta, period, f"{result.hmin:.8f}", cfg.source,
                     cfg.num_settings_bob, cfg.noise_snu]
                )
            except (sdp.SdpError, ValueError) as exc:
                writer.writerow([eta, "", "failed", cfg.source,
                                 cfg.num_settings_bob, cfg.noise_snu])
                out.write(f"# eta={eta} failed: {exc}\n")
            if cfg.output:
                out.flush()
    finally:
        if cfg.output:
            out.close()
    return 0


def cmd_convergence(args) -> int:
    cfg = _load_config(args)
    if not cfg.cutoff_list or len(cfg.cutoff_list) < 2:
        print("config error: cutoff_list: at least two cutoffs required",
              file=sys.stderr)
        return EXIT_BAD_CONFIG
    out = open(cfg.output, "w", newline="") if cfg.output else sys.stdout
    try:
        stamp = cfg.stamp()
        out.write(f"# config_hash={stamp['config_hash']} "
                  f"artifact_version={stamp['artifact_version']}\n")
        writer = csv.writer(out)
        writer.writerow(["cutoff", "H_min", "epsilon", "trace_deficit"])
        for cutoff in cfg.cutoff_list:
            point = RunConfig(**{**vars(cfg), "cutoff": int(cutoff)})
            if cfg.source in ("tms", "split_sms"):
                eps = truncation_overlap(db_to_parameter(cfg.squeezing_db), int(cutoff))
            else:
                eps = float("nan")
            try:
                result, deficit, _ = certify_scenario(point)
                writer.writerow([cutoff, f"{result.hmin:.8f}", f"{eps:.3e}",
                                 f"{deficit:.3e}"])
            except (sdp.SdpError, ValueError) as exc:
                writer.writerow([cutoff, "failed", f"{eps:.3e}", ""])
                out.write(f"# cutoff={cutoff} failed: {exc}\n")
            if cfg.output:
                out.flush()
    finally:
        if cfg.output:
            out.close()
    return 0


def cmd_expbound(args) -> int:
    cfg = _load_config(args)
    params = experiment.TemporalModeParams(efficiency=cfg.eta)
    measured = None
    if args.data:
        state = experiment.experiment_covariance(params)
        half_range = cfg.half_range_bob
        if half_range is None:
            half_range = 5.0 * math.sqrt(largest_variance(state))
        try:
            records = stats.read_samples_csv(args.data)
            measured = stats.empirical_distribution(
                records,
                PeriodicBinning(cfg.period_q, cfg.num_outcomes_alice),
                IntervalBinning(half_range, cfg.num_outcomes_bob),
                num_bob_settings=cfg.num_settings_bob,
            )
        except stats.MissingSettingPair as exc:
            print(f"data error: {exc}", file=sys.stderr)
            return EXIT_MISSING_PAIR
    try:
        report = experiment.experiment_report(
            params,
            cfg.num_outcomes_alice,
            cfg.num_outcomes_bob,
            cfg.period_q,
            cfg.cutoff,
            num_settings_bob=cfg.num_settings_bob,
            target_setting=cfg.target_setting,
            measured=measured,
            gap_tol=cfg.gap_tol,
            feas_tol=cfg.feas_tol,
            method=cfg.solver,
        )
    except sdp.NumericalFailure as exc:
        print(f"solver stage failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    if measured is not None:
        report["signalling_max"] = stats.signalling_report(measured).max_deviation
    report.update(cfg.stamp())
    _write_json(cfg.output, report)
    return 0


def cmd_dump_certificate(args) -> int:
    cfg = _load_config(args)
    if cfg.tomography:
        print("config error: tomography: certificate export requires the "
              "probability variant", file=sys.stderr)
        return EXIT_BAD_CONFIG
    try:
        result, _, _ = certify_scenario(cfg)
    except sdp.NumericalFailure as exc:
        print(f"solver stage failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    payload = json.loads(result.certificate.to_json())
    payload.update(cfg.stamp())
    _write_json(cfg.output, payload)
    return 0


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--source", choices=["tms", "split_sms", "experiment_model",
                                        "external_G"])
    p.add_argument("--squeezing-db", dest="squeezing_db", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--noise-snu", dest="noise_snu", type=float)
    p.add_argument("--o-a", dest="num_outcomes_alice", type=int)
    p.add_argument("--o-b", dest="num_outcomes_bob", type=int)
    p.add_argument("--m-b", dest="num_settings_bob", type=int)
    p.add_argument("--t-q", dest="period_q", type=float)
    p.add_argument("--cutoff", type=int)
    p.add_argument("--target-setting", dest="target_setting", type=int)
    p.add_argument("--tomography", action="store_const", const=True, default=None)
    p.add_argument("--solver", choices=["auto", "clarabel", "scs", "cvxopt"])
    p.add_argument("--gap-tol", dest="gap_tol", type=float)
    p.add_argument("--feas-tol", dest="feas_tol", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--output", "-o")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="steercert", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    handlers = {
        "certify": cmd_certify,
        "scan": cmd_scan,
        "expbound": cmd_expbound,
        "convergence": cmd_convergence,
        "dump-certificate": cmd_dump_certificate,
    }
    for name in handlers:
        p = sub.add_parser(name)
        _add_common_flags(p)
        if name == "expbound":
            p.add_argument("--data", help="CSV of quadrature samples (x,y,a_value,b_value)")
    args = parser.parse_args(argv)
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG


if __name__ == "__main__":
    sys.exit(main())
