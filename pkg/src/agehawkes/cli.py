"""Command line interface.

    agehawkes [--seed S] [--threads T] [--out-dir D] SUBCOMMAND --config FILE [options]

Every subcommand writes CSV files plus ``manifest.json`` into the output
directory. Exit codes: 0 success, 2 config error, 3 model-contract
violation, 4 non-convergence.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunSettings, build_age_law, build_signal, load_config
from .experiments import (
    chaos_experiment,
    coupling_experiment,
    rescaling_test,
    truncation_ladder,
    weight_approx_experiment,
)
from .io import RunManifest, emit_csv
from .meanfield import NonConvergenceError, cross_validate, solve_hard_refractory_dde, solve_picard_mc
from .network import ExplosionError, compensator, intensity_trace, simulate
from .rates import ModelError
from .stationary import NoSolutionError, delta_sweep, solve_fixed_point

log = logging.getLogger("agehawkes")

EXIT_OK, EXIT_CONFIG, EXIT_MODEL, EXIT_NONCONV = 0, 2, 3, 4


class _Run:
    """Output directory, manifest and checksums for one invocation."""

    def __init__(self, args, settings: RunSettings):
        self.out = Path(args.out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.manifest = RunManifest(args.command, settings.hash, args.seed, args.threads).start()

    def emit(self, name, records, header):
        self.manifest.outputs[name] = emit_csv(records, self.out / name, header)
        log.info("wrote %s", self.out / name)

    def close(self):
        self.manifest.finish().write(self.out / "manifest.json")


MF_HEADER = ["time", "population", "phi", "x", "lambda_bar", "p"]


def cmd_simulate(args, st: RunSettings, run: _Run) -> int:
    cfg = st.network
    ev = simulate(cfg, cfg.streams(args.seed), audit_candidates=args.audit)
    run.emit(args.out or "events.csv", ev.records(), ["time", "population", "unit"])
    if args.trace:
        grid = np.arange(0.0, cfg.horizon, args.trace_step)
        lam = intensity_trace(ev, cfg, grid)
        rows = [(float(t), int(g), float(v)) for i, t in enumerate(grid) for g, v in enumerate(lam[i])]
        run.emit(args.trace, rows, ["time", "unit", "intensity"])
    ages = [(k, j, float(a)) for k, row in enumerate(ev.initial_ages) for j, a in enumerate(row)]
    run.emit("initial_ages.csv", ages, ["population", "unit", "age"])
    run.manifest.summary = {"events": len(ev), **{k: v for k, v in ev.audit.items()
                                                    if isinstance(v, (int, float))}}
    return EXIT_OK


def _mf_settings(st: RunSettings, args):
    mf = st.section("meanfield")
    return {
        "particles": args.particles or mf.get("particles", 10_000),
        "dt": args.step or mf.get("step_time"),
        "tol": mf.get("tol", 1e-3),
        "max_iter": mf.get("max_iter", 50),
    }


def cmd_meanfield(args, st: RunSettings, run: _Run) -> int:
    cfg = st.network
    s = _mf_settings(st, args)
    code = EXIT_OK
    mc = dde = None
    if args.method in ("picard", "picard-mc", "both"):
        mc = solve_picard_mc(cfg, particles=s["particles"], dt=s["dt"], tol=s["tol"],
                             max_iter=s["max_iter"], seed=args.seed)
        name = args.out if args.out and args.method != "both" else "meanfield_picard.csv"
        run.emit(name, mc.rows(), MF_HEADER)
        run.emit("picard_deviations.csv", list(enumerate(mc.deviations, 1)), ["iteration", "sup_deviation"])
        run.manifest.summary["picard_iterations"] = mc.iterations
        run.manifest.summary["picard_converged"] = mc.converged
        if not mc.converged:
            log.error("Picard iteration did not converge in %d iterations", mc.iterations)
            code = EXIT_NONCONV
    if args.method in ("dde", "both"):
        try:
            dde = solve_hard_refractory_dde(cfg, dt=s["dt"])
        except ValueError as exc:
            raise ConfigError([("", str(exc))]) from exc
        run.emit(args.out if args.out and args.method == "dde" else "meanfield_dde.csv", dde.rows(), MF_HEADER)
    if mc is not None and dde is not None:
        rep = cross_validate(mc, dde)
        run.emit("cross_validation.csv", sorted(rep.items()), ["quantity", "value"])
        run.manifest.summary["within_band"] = rep["within_band"]
    return code


def _h_integral(st: RunSettings) -> float:
    sec = st.section("stationary")
    if "h_integral" in sec:
        return float(sec["h_integral"])
    if st.network.n_populations != 1:
        raise ConfigError([("stationary/h_integral", "required when there is more than one population")])
    return float(st.network.kernels[0, 0].integral())


def cmd_stationary(args, st: RunSettings, run: _Run) -> int:
    rate = st.network.populations[0].rate
    H = _h_integral(st)
    lam_max = st.section("stationary").get("lambda_max_rate")
    res = solve_fixed_point(rate, H, lam_max=lam_max)
    run.emit(args.out or "stationary.csv",
             [(i, r, H * r, int(i == 0)) for i, r in enumerate(res.roots)],
             ["root", "lambda_bar", "x_star", "selected"])
    dens = res.age_density
    a_max = args.max_age if args.max_age else max(5.0 / res.lambda_bar, 2 * rate.delta)
    ages = np.linspace(0.0, a_max, args.points)
    run.emit("age_density.csv", list(zip(ages.tolist(), np.asarray(dens(ages)).tolist())), ["age", "density"])
    run.manifest.summary = {"lambda_bar": res.lambda_bar, "status": res.status, "residual": res.residual}
    if args.sweep_delta:
        lo, hi, n = args.sweep_delta.split(":")
        deltas = np.linspace(float(lo), float(hi), int(n))
        sw = delta_sweep(lambda d: replace(rate, delta=d), H, deltas)
        rows = list(zip(sw["delta"].tolist(), sw["lambda_bar"].tolist(), sw["n_roots"].tolist()))
        run.emit("delta_sweep.csv", rows, ["delta", "lambda_bar", "n_roots"])
        run.manifest.summary["sweep_verdict"] = sw["verdict"]
    if res.status == "multiple":
        log.warning("fixed-point equation has %d roots; the smallest is selected", len(res.roots))
    return EXIT_OK


def cmd_couple(args, st: RunSettings, run: _Run) -> int:
    sec = st.section("coupling")
    if not sec:
        raise ConfigError([("coupling", "section required for the couple subcommand")])
    init_a = (build_age_law(sec["initial_age_a"]), build_age_law(sec["initial_age_b"]))
    init_r = None
    if "initial_signal_a" in sec or "initial_signal_b" in sec:
        init_r = (build_signal(sec.get("initial_signal_a")), build_signal(sec.get("initial_signal_b")))
    reps = args.replicates or sec.get("replicates", 100)
    rep = coupling_experiment(st.network, args.seed, init_a, init_r, replicates=reps, threads=args.threads)
    run.emit("coupling.csv", rep.rows(), ["replicate", "coupled", "coupling_time", "seed"])
    run.manifest.summary = {"fraction_coupled": rep.fraction_coupled}
    return EXIT_OK


def cmd_chaos(args, st: RunSettings, run: _Run) -> int:
    sec = st.section("chaos")
    N_grid = [int(n) for n in args.N.split(",")] if args.N else sec.get("N_grid", [50, 100, 200, 400])
    rep = chaos_experiment(st.network, N_grid, replicates=args.replicates or sec.get("replicates", 20),
                           seed=args.seed, particles=sec.get("particles", 10_000),
                           tagged=sec.get("tagged", "all"), threads=args.threads)
    run.emit("chaos.csv", rep.rows(), ["N", "sup_distance", "sup_distance_se", "noncommon", "noncommon_se"])
    return EXIT_OK


def cmd_weights(args, st: RunSettings, run: _Run) -> int:
    sec = st.section("weights")
    if not sec:
        raise ConfigError([("weights", "section required for the weights subcommand")])
    horizons = sec["truncation_horizons_time"]
    variants = truncation_ladder(st.network.kernels, horizons)
    res = weight_approx_experiment(st.network, variants, replicates=args.replicates or sec.get("replicates", 20),
                                   seed=args.seed, threads=args.threads)
    rows = list(zip([float(h) for h in horizons], res["l1_gap"].tolist(), res["event_distance"].tolist(),
                    res["event_distance_se"].tolist(), res["ratio"].tolist()))
    run.emit("weights.csv", rows, ["truncation_time", "l1_gap", "event_distance", "event_distance_se", "ratio"])
    run.manifest.summary = {"C_hat": res["C_hat"], "ratio_spread": res["ratio_spread"]}
    return EXIT_OK


def cmd_diagnose(args, st: RunSettings, run: _Run) -> int:
    cfg = st.network
    ev = simulate(cfg, cfg.streams(args.seed))
    times, comp, _ = compensator(ev, cfg, args.population, args.unit)
    gaps = np.diff(np.concatenate([[0.0], comp]))
    run.emit("rescaled_gaps.csv", list(zip(times.tolist(), gaps.tolist())), ["event_time", "rescaled_gap"])
    rep = rescaling_test(ev, cfg, args.population, args.unit, min_events=args.min_events, compensated=comp)
    run.emit("rescaling.csv", sorted(rep.items()), ["quantity", "value"])
    run.manifest.summary = rep
    return EXIT_OK


def cmd_validate(args, st: RunSettings, run: _Run) -> int:
    rows = []
    ok = True
    for k, pop in enumerate(st.network.populations):
        rep = pop.rate.validate(sample_count=args.samples, seed=args.seed)
        for prop, v in rep.items():
            if isinstance(v, dict):
                rows.append((f"rate/{k}", prop, float(v["margin"]), int(v["pass"])))
        ok &= rep["pass"]
    for k, row in enumerate(st.network.kernels.entries):
        for l, ker in enumerate(row):
            chk = ker.integrability_check()
            rows.append((f"kernel/{k}/{l}", "integrable", float(ker.integral(0.0, st.network.horizon)),
                         int(chk["pass"])))
            ok &= chk["pass"]
    run.emit("validate.csv", rows, ["item", "property", "value", "pass"])
    run.manifest.summary = {"pass": bool(ok)}
    if not ok:
        log.error("declared rate constants or kernels fail validation")
        return EXIT_MODEL
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "meanfield": cmd_meanfield,
    "stationary": cmd_stationary,
    "couple": cmd_couple,
    "chaos": cmd_chaos,
    "weights": cmd_weights,
    "diagnose": cmd_diagnose,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="agehawkes", description="Age dependent Hawkes networks: simulation and mean-field analysis.")
    p.add_argument("--seed", type=int, default=0, help="master seed of the driving Poisson measures")
    p.add_argument("--threads", type=int, default=1, help="worker threads for replicate loops")
    p.add_argument("--out-dir", default=".", help="directory for CSV outputs and manifest.json")
    p.add_argument("--verbose", "-v", action="store_true")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help):
        sp = sub.add_parser(name, help=help)
        sp.add_argument("--config", required=True, help="JSON configuration file")
        return sp

    sp = add("simulate", "exact simulation of the network; writes events.csv")
    sp.add_argument("--audit", action="store_true", help="count candidates and majorant checks")
    sp.add_argument("--out", help="events file name (default events.csv)")
    sp.add_argument("--trace", help="also write left-limit intensities of every unit to this file")
    sp.add_argument("--trace-step", type=float, default=0.1, help="grid step of the intensity trace")
    sp = add("meanfield", "solve the mean-field limit")
    sp.add_argument("--method", choices=["picard-mc", "picard", "dde", "both"], default="picard-mc")
    sp.add_argument("--out", help="output file name for a single method")
    sp.add_argument("--particles", type=int)
    sp.add_argument("--step", type=float, help="grid step (time)")
    sp = add("stationary", "equilibrium rate and stationary age density")
    sp.add_argument("--sweep-delta", help="lo:hi:n grid of refractory lengths")
    sp.add_argument("--out", help="roots file name (default stationary.csv)")
    sp.add_argument("--points", type=int, default=201, help="age grid size of age_density.csv")
    sp.add_argument("--max-age", type=float)
    sp = add("couple", "coupling experiment on shared noise")
    sp.add_argument("--replicates", type=int)
    sp = add("chaos", "propagation of chaos experiment")
    sp.add_argument("--N", help="comma separated network sizes")
    sp.add_argument("--replicates", type=int)
    sp = add("weights", "weight approximation against a truncation ladder")
    sp.add_argument("--replicates", type=int)
    sp = add("diagnose", "goodness-of-fit diagnostics of a simulated path")
    sp.add_argument("--test", choices=["rescaling"], default="rescaling")
    sp.add_argument("--population", type=int, default=0)
    sp.add_argument("--unit", type=int, default=0)
    sp.add_argument("--min-events", type=int, default=100)
    sp = add("validate", "check declared rate constants and kernel integrability")
    sp.add_argument("--samples", type=int, default=10_000)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        st = load_config(args.config)
        run = _Run(args, st)
        try:
            code = COMMANDS[args.command](args, st, run)
        finally:
            run.close()
        return code
    except ConfigError as exc:
        for path, msg in exc.errors:
            print(f"config error at {path or '<root>'}: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except (ModelError, ExplosionError) as exc:
        print(f"model contract violated: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (NonConvergenceError, NoSolutionError) as exc:
        print(f"no convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONV
    except ValueError as exc:
        # parameter combinations the library rejects
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
