"""Command-line interface.

Subcommands: run (single trajectory with ledger and snapshots), ensemble
(lockstep Monte Carlo with moment statistics), verify (identity and
inequality sweeps), twin (same-noise pair of trajectories for uniqueness
probing), spectrum (eigenvalue and trace tables).

Exit codes: 0 success, 2 configuration error, 3 blow-up, 4 trace-class
hypothesis violation, 5 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .basis import sorted_modes
from .batch import run_batch
from .dynamics import SystemState, run, thread_count
from .errors import BlowUpError, ConfigError, TraceClassError, VesiflowError
from .ledger import SnapshotCollector, ensemble_moments
from .noise import sobolev_sums, trace_diagnostics
from .shell import (LedgerCsvWriter, RunConfig, build_initial, format_float,
                    load_config, load_sweep_config, manifest_text,
                    twin_distances, twin_perturbation, write_moments_csv,
                    write_reports_csv, write_snapshot)
from .veriflab import all_passed, run_all

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BLOWUP = 3
EXIT_HYPOTHESIS = 4
EXIT_VERIFY = 5


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    noise = cfg.noise
    if args.seed is not None:
        noise = replace(noise, seed=args.seed)
    if getattr(args, "override_hypothesis", False):
        noise = replace(noise, override=True)
    output = cfg.output
    if args.out:
        output = replace(output, directory=args.out)
    return replace(cfg, noise=noise, output=output)


def _prepare_out(cfg: RunConfig) -> str:
    out = cfg.output.directory
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "manifest.toml"), "w") as fh:
        fh.write(manifest_text(cfg))
    return out


def cmd_run(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    cfg.noise.require_trace_class()
    out = _prepare_out(cfg)
    initial = build_initial(cfg)
    ledger = LedgerCsvWriter(os.path.join(out, "ledger.csv"))

    def snapshot_sink(state):
        write_snapshot(os.path.join(out, f"snapshot_{state.step:08d}.vsfl"),
                       state, cfg.domain)

    try:
        final = run(initial, cfg.problem(), cfg.stepper, cfg.noise,
                    f_max=cfg.output.f_max, record_sink=ledger,
                    record_every=cfg.output.record_every,
                    snapshot_sink=snapshot_sink if cfg.output.snapshot_every else None,
                    snapshot_every=cfg.output.snapshot_every)
    finally:
        ledger.close()
    write_snapshot(os.path.join(out, "final.vsfl"), final, cfg.domain)
    print(f"run complete: t={final.t:.6g} steps={final.step} out={out}")
    return EXIT_OK


def cmd_ensemble(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    cfg.noise.require_trace_class()
    if args.trajectories < 2:
        raise ConfigError("ensemble needs at least 2 trajectories")
    out = _prepare_out(cfg)
    initial = build_initial(cfg)
    specs = [replace(cfg.noise, stream_id=r) for r in range(args.trajectories)]
    gal = cfg.stepper.galerkin_n or None
    result = run_batch(initial, cfg.problem(), cfg.stepper, specs,
                       galerkin_ns=[gal] * len(specs) if gal else None,
                       f_max=cfg.output.f_max, with_ledger=not args.no_ledger)
    reports = [ensemble_moments(result.f_series,
                                np.column_stack([result.dissipation_series,
                                                 result.dissipation_series[:, -1:]]),
                                cfg.stepper.dt, k)
               for k in args.moments]
    write_moments_csv(os.path.join(out, "moments.csv"), reports)
    if not args.no_ledger:
        with open(os.path.join(out, "ensemble_ledger.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["stream_id", "cumulative_residual",
                             "cumulative_martingale", "final_F"])
            for r in range(len(specs)):
                writer.writerow([r, format_float(result.cum_residual[r]),
                                 format_float(result.cum_martingale[r]),
                                 format_float(result.f_series[r, -1])])
    for rep in reports:
        print(f"k={rep.k}: sup_t mean F^k = {rep.sup_mean_fk:.6g} "
              f"(+/- {rep.sup_mean_fk_halfwidth:.2g}), "
              f"mean sup_t F^k = {rep.mean_sup_fk:.6g} "
              f"(+/- {rep.mean_sup_fk_halfwidth:.2g})")
    print(f"ensemble complete: R={args.trajectories} out={out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    sweep = load_sweep_config(args.config)
    if args.seed is not None:
        sweep = replace(sweep, seed=args.seed)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
    reports = run_all(sweep)
    for rep in reports:
        print(rep.summary_line())
    if args.out:
        write_reports_csv(os.path.join(args.out, "verification_reports.csv"),
                          reports)
        with open(os.path.join(args.out, "verification_summary.txt"), "w") as fh:
            for rep in reports:
                fh.write(rep.summary_line() + "\n")
    if not all_passed(reports):
        failing = [r.name for r in reports if not r.passed]
        print(f"verification FAILED: {', '.join(failing)}", file=sys.stderr)
        return EXIT_VERIFY
    print(f"verification passed ({len(reports)} reports)")
    return EXIT_OK


def cmd_twin(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    cfg.noise.require_trace_class()
    out = _prepare_out(cfg)
    initial = build_initial(cfg)
    dv, dc = twin_perturbation(cfg.domain, args.delta, cfg.fluid.alpha)
    perturbed = SystemState(initial.v + dv, initial.phi + dc)
    every = max(cfg.output.record_every, 1)
    snaps = []
    for start in (initial, perturbed):
        coll = SnapshotCollector()
        run(start, cfg.problem(), cfg.stepper, cfg.noise,
            f_max=cfg.output.f_max, snapshot_sink=coll, snapshot_every=every)
        snaps.append(coll)
    a, b = snaps
    path = os.path.join(out, "twin.csv")
    bitwise = True
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "dist_v", "dist_phi", "dist_total"])
        for i, t in enumerate(a.times):
            sa = SystemState(a.v[i], a.phi[i], t=t)
            sb = SystemState(b.v[i], b.phi[i], t=t)
            d_v, d_phi = twin_distances(cfg.domain, cfg.fluid.alpha, sa, sb)
            bitwise &= (np.array_equal(a.v[i], b.v[i])
                        and np.array_equal(a.phi[i], b.phi[i]))
            writer.writerow([format_float(t), format_float(d_v),
                             format_float(d_phi), format_float(d_v + d_phi)])
    print(f"twin complete: delta={args.delta:.3g} "
          f"bitwise_identical={'yes' if bitwise else 'no'} out={path}")
    if args.delta == 0.0 and not bitwise:
        print("twin runs with identical data diverged bitwise", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_spectrum(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    modes = sorted_modes(cfg.domain)
    sigma_a = cfg.noise.sigma_a(cfg.domain).ravel()
    sigma_b = cfg.noise.sigma_b(cfg.domain).ravel()
    tr = cfg.domain.transforms()
    order = tr.mode_order
    count = min(args.modes, len(modes))
    print(f"{'idx':>4s} {'lambda':>8s} {'j':>3s} {'k':>3s} "
          f"{'sigma_A':>12s} {'sigma_B':>12s}")
    for i in range(count):
        lam, j, k = modes[i]
        flat = order[i]
        print(f"{i:4d} {lam:8.1f} {j:3d} {k:3d} "
              f"{sigma_a[flat]:12.5g} {sigma_b[flat]:12.5g}")
    print()
    print(f"{'n':>5s} {'tr_A_weighted':>15s} {'tr_B':>12s} {'tr_B_delta2':>13s}")
    n_total = cfg.domain.n_modes
    for n in (1, 4, 16, 64, min(256, n_total), n_total):
        if n > n_total:
            continue
        td = trace_diagnostics(cfg.noise, cfg.domain, n, cfg.fluid.alpha)
        print(f"{n:5d} {td.tr_a_weighted:15.8g} {td.tr_b:12.6g} "
              f"{td.tr_b_delta2:13.6g}")
    ss = sobolev_sums(cfg.noise, cfg.domain, n_total)
    print(f"\nmode-wise Sobolev sums at n={n_total}: "
          f"sup^2={ss.sum_inf:.6g} W22^2={ss.sum_w22:.6g} "
          f"grad-L3^2={ss.sum_grad3:.6g}")
    print(f"trace-class hypothesis holds: "
          f"{'yes' if cfg.noise.hypothesis_holds else 'no'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vesiflow",
        description="Spectral Galerkin simulator and verification lab for the "
                    "stochastic phase-field alpha-Navier-Stokes vesicle-fluid "
                    "system")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="TOML configuration file")
        p.add_argument("--out", default="", help="output directory override")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads for multi-run commands "
                            "(default: VESIFLOW_THREADS or all cores)")
        p.add_argument("--override-hypothesis", action="store_true",
                       help="simulate even if the noise is not trace class")

    p_run = sub.add_parser("run", help="integrate one trajectory")
    common(p_run)
    p_run.set_defaults(fn=cmd_run)

    p_ens = sub.add_parser("ensemble", help="Monte Carlo ensemble")
    common(p_ens)
    p_ens.add_argument("-R", "--trajectories", type=int, default=64)
    p_ens.add_argument("--moments", type=int, nargs="+", default=[1, 2],
                       help="moment orders k to report")
    p_ens.add_argument("--no-ledger", action="store_true",
                       help="skip the per-step balance audit")
    p_ens.set_defaults(fn=cmd_ensemble)

    p_ver = sub.add_parser("verify", help="identity and inequality sweeps")
    p_ver.add_argument("--config", required=True)
    p_ver.add_argument("--out", default="", help="directory for report files")
    p_ver.add_argument("--seed", type=int, default=None)
    p_ver.set_defaults(fn=cmd_verify)

    p_twin = sub.add_parser("twin", help="same-noise twin trajectories")
    common(p_twin)
    p_twin.add_argument("--delta", type=float, default=0.0,
                        help="initial distance in V + H2")
    p_twin.set_defaults(fn=cmd_twin)

    p_spec = sub.add_parser("spectrum", help="eigenvalue and trace tables")
    common(p_spec)
    p_spec.add_argument("--modes", type=int, default=16,
                        help="number of modes to list")
    p_spec.set_defaults(fn=cmd_spectrum)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    threads = getattr(args, "threads", None)
    if threads:
        os.environ["VESIFLOW_THREADS"] = str(threads)
    try:
        return args.fn(args)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except TraceClassError as err:
        print(f"hypothesis violation: {err}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except BlowUpError as err:
        print(f"blow-up: {err}; diagnostics: {err.diagnostics}", file=sys.stderr)
        return EXIT_BLOWUP
    except VesiflowError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
