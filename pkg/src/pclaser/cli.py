"""Command-line front end: ``pclaser <command> [options]``.

Exit codes: 0 success, 2 usage error, 3 input/parse error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, surface, units
from .config import ConfigError, RunConfig, load_config
from .dynamics import (IntegrationError, PeriodicConvergenceError, TraceError,
                       extract_decay_time, integrate)
from .fitting import (ExtractionError, LifetimeSet, MultiExponential, RateModel,
                      fit_trace, model_curve, passivation_report, synth_trace)
from .model import LaserState, PumpKind, rate
from .records import ResultRecord, SchemaError, load_trace_csv, write_table, write_trace_csv
from .steadystate import (SteadyStateError, differential_efficiency, kink_threshold,
                          lasing_curve, threshold_analytic, threshold_numeric)

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3, 4


def _ps(x):
    return units.from_si(x, "ps")


def _uw(x):
    return units.from_si(x, "uW")


def _cm3(x):
    return units.from_si(x, "cm3")


def _out(args, name):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out / name


def _ext(args):
    return "jsonl" if args.format == "jsonl" else "csv"


def _record(args, cfg: RunConfig, command, outputs):
    rec = ResultRecord(command, f"{cfg.digest}:{args.seed_value}", outputs)
    path = _out(args, f"{command.replace('-', '_')}_record.{_ext(args)}")
    rec.write(path, args.format)
    return path


def cmd_simulate(args, cfg: RunConfig):
    drive = cfg.pump
    if args.power_uW is not None:
        drive = drive.replace(power_avg=units.to_si(args.power_uW, "uW"))
    t_end = units.to_si(args.t_end_ps, "ps")
    traj = integrate(cfg.laser, drive, LaserState(), (0.0, t_end), cfg.integrator)
    t = np.arange(0.0, t_end + 0.5 * units.to_si(args.dt_ps, "ps"),
                  units.to_si(args.dt_ps, "ps"))
    y = traj(t)
    l_out = cfg.laser.output_power(y[0])
    path = _out(args, f"simulate.{_ext(args)}")
    write_table(path, {"time_ps": _ps(t), "p_cm3": _cm3(y[0]), "n_g_cm3": _cm3(y[1]),
                       "n_e_cm3": _cm3(y[2]), "l_out_uW": _uw(l_out)}, args.format)
    outputs = {"power_uW": _uw(drive.power_avg),
               "final": {"p_cm3": _cm3(y[0, -1]), "n_g_cm3": _cm3(y[1, -1]),
                         "n_e_cm3": _cm3(y[2, -1])},
               "peak_l_out_uW": _uw(float(l_out.max()))}
    if drive.kind is PumpKind.PULSE_TRAIN and l_out.max() > 0:
        from .dynamics import TimeTrace
        try:
            fit = extract_decay_time(TimeTrace(t, l_out), floor=1e-3 * l_out.max())
            outputs["decay_time_ps"] = _ps(fit.tau)
        except TraceError as exc:
            outputs["decay_time_ps"] = None
            print(f"decay fit skipped: {exc}", file=sys.stderr)
    _record(args, cfg, "simulate", outputs)
    if args.plot:
        from .plotting import plot_trace
        plot_trace(_out(args, "simulate.png"), _ps(t), {"L_out": _uw(l_out)},
                   ylabel=r"$L_{out}$ ($\mu$W)")
    print(f"wrote {path}")


def cmd_lasing_curve(args, cfg: RunConfig):
    laser = cfg.laser
    th = threshold_analytic(laser)
    l_max = units.to_si(args.l_max_uW, "uW") if args.l_max_uW else 4.0 * th.l_th_analytic
    grid = np.linspace(0.0, l_max, args.points)
    curve = lasing_curve(laser, grid)
    path = _out(args, f"lasing_curve.{_ext(args)}")
    write_table(path, {"l_in_uW": _uw(curve.l_in), "l_out_uW": _uw(curve.l_out),
                       "n_g_cm3": _cm3(curve.n_g), "p_cm3": _cm3(curve.p)}, args.format)
    outputs = {"l_th_analytic_uW": _uw(th.l_th_analytic)}
    try:
        outputs["l_th_kink_uW"] = _uw(kink_threshold(curve))
    except ValueError:
        outputs["l_th_kink_uW"] = None
    try:
        outputs["differential_efficiency"] = differential_efficiency(curve, th.l_th_analytic)
    except ValueError as exc:
        outputs["differential_efficiency"] = None
        print(f"slope skipped: {exc}", file=sys.stderr)
    _record(args, cfg, "lasing-curve", outputs)
    if args.plot:
        from .plotting import plot_lasing_curve
        plot_lasing_curve(_out(args, "lasing_curve.png"), _uw(curve.l_in), _uw(curve.l_out),
                          _uw(th.l_th_analytic), cfg.label or None)
    print(f"wrote {path}")


def _threshold_values(laser):
    rep = threshold_analytic(laser)
    numeric = threshold_numeric(laser)
    return rep, numeric


def cmd_threshold(args, cfg: RunConfig):
    rep, numeric = _threshold_values(cfg.laser)
    terms = rep.bracket_terms
    lines = [
        f"label: {cfg.label}",
        f"threshold_numeric_uW: {_uw(numeric):.6g}",
        f"threshold_analytic_uW: {_uw(rep.l_th_analytic):.6g}",
        f"bracket_radiative: {terms[0]:.6g}",
        f"bracket_nonradiative: {terms[1]:.6g}",
        f"bracket_one_photon: {terms[2]:.6g}",
    ]
    outputs = {"label": cfg.label, "l_th_numeric_uW": _uw(numeric),
               "l_th_analytic_uW": _uw(rep.l_th_analytic), "bracket_terms": list(terms)}
    if args.baseline:
        base = load_config(args.baseline)
        b_rep, b_num = _threshold_values(base.laser)
        ratio_a = b_rep.l_th_analytic / rep.l_th_analytic
        ratio_n = b_num / numeric
        lines.append(f"ratio_analytic ({base.label or args.baseline} / {cfg.label}): {ratio_a:.4f}")
        lines.append(f"ratio_numeric ({base.label or args.baseline} / {cfg.label}): {ratio_n:.4f}")
        outputs.update({"baseline_label": base.label, "ratio_analytic": ratio_a,
                        "ratio_numeric": ratio_n})
    print("\n".join(lines))
    _record(args, cfg, "threshold", outputs)


def _fit_model(cfg: RunConfig):
    fs = cfg.fit
    if fs.model == "rate":
        return RateModel(cfg.laser, cfg.pump, fs.observable, fs.region), fs.free
    model = MultiExponential(fs.n_decay, fs.rise)
    return model, model.param_names


def _sample_times(cfg):
    fs = cfg.fit
    n = int(math.floor(fs.t_end / fs.dt + 1e-9)) + 1
    return fs.dt * np.arange(n)


def cmd_synth(args, cfg: RunConfig):
    fs = cfg.fit
    trace = synth_trace(cfg.laser, cfg.pump, _sample_times(cfg), sigma=fs.noise_rel,
                        seed=args.seed_value, irf_fwhm=fs.irf_fwhm, observable=fs.observable,
                        region=fs.region, cfg=cfg.integrator)
    path = _out(args, "synth.csv")
    write_trace_csv(path, trace, {"label": cfg.label})
    _record(args, cfg, "synth", {"path": path.name, "samples": int(trace.t.size),
                                 "noise_sigma": trace.meta.get("noise_sigma", 0.0)})
    if args.plot:
        from .plotting import plot_trace
        plot_trace(_out(args, "synth.png"), _ps(trace.t), {"data": trace.y})
    print(f"wrote {path}")


def _io_params(values: dict):
    out = {}
    for k, v in values.items():
        if k.startswith("tau") or k in ("t0", "t_shift"):
            out[f"{k}_ps"] = _ps(v) if v is not None else None
        else:
            out[k] = v
    return out


def cmd_fit_trace(args, cfg: RunConfig):
    trace = load_trace_csv(args.trace)
    model, free = _fit_model(cfg)
    result = fit_trace(model, trace, free, irf_fwhm=cfg.fit.irf_fwhm,
                       max_iter=cfg.fit.max_iter)
    outputs = {
        "model": cfg.fit.model,
        "params_hat": _io_params(result.params_hat),
        "stderr": None if result.stderr is None else _io_params(result.stderr),
        "residual_norm": result.residual_norm,
        "iterations": result.iterations,
        "converged": result.converged,
        "unidentifiable": ",".join(result.unidentifiable),
        "derived": _io_params(result.derived),
    }
    _record(args, cfg, "fit-trace", outputs)
    best = model_curve(model, result, trace.t, cfg.fit.irf_fwhm)
    from .dynamics import TimeTrace
    path = _out(args, "fit_model.csv")
    write_trace_csv(path, TimeTrace(trace.t, best), {"source": Path(args.trace).name})
    if args.plot:
        from .plotting import plot_trace
        plot_trace(_out(args, "fit_trace.png"), _ps(trace.t), {"data": trace.y, "fit": best})
    status = "converged" if result.converged else "NOT converged"
    print(f"fit {status} after {result.iterations} iterations; "
          + ", ".join(f"{k}={v:.6g}" for k, v in _io_params(result.params_hat).items()))
    if not result.converged:
        return EXIT_NUMERIC
    return EXIT_OK


def _lifetimes(cfg: RunConfig, fit_record=None) -> LifetimeSet:
    fs = cfg.fit
    tau_pc = fs.tau_pc
    if fit_record is not None:
        rec = ResultRecord.read(fit_record)
        key = "derived.tau_pc_ps"
        if key not in rec.outputs:
            raise ConfigError(f"{fit_record}: record has no {key}")
        tau_pc = units.to_si(float(rec.outputs[key]), "ps")
    if fs.tau_bulk is None or tau_pc is None:
        raise ConfigError("extract needs [fit] tau_bulk_ps and tau_pc_ps (or --fit-record)")
    return LifetimeSet(fs.tau_bulk, tau_pc, fs.tau_cav).extract(cfg.laser.f_pc)


def _lifetime_outputs(ls: LifetimeSet, radius):
    s = surface.s_from_tau_nr(ls.tau_pc_nr, radius)
    return {"tau_bulk_ps": _ps(ls.tau_bulk), "tau_pc_ps": _ps(ls.tau_pc),
            "tau_r_ps": _ps(ls.tau_r), "tau_pc_nr_ps": _ps(ls.tau_pc_nr),
            "f_cav": ls.f_cav, "s_cm_per_s": units.from_si(s, "cm_per_s")}


def cmd_extract(args, cfg: RunConfig):
    after = _lifetimes(cfg, args.fit_record)
    radius = cfg.surface.radius
    s_after = surface.s_from_tau_nr(after.tau_pc_nr, radius)
    outputs = {"label": cfg.label, "radius_nm": units.from_si(radius, "nm"),
               "sample": _lifetime_outputs(after, radius),
               "s_300K_cm_per_s": units.from_si(
                   surface.s_temperature_scale(s_after, cfg.surface.temperature, 300.0),
                   "cm_per_s"),
               "diffusion_length_um": units.from_si(
                   surface.diffusion_length(cfg.surface.d_amb, 1.0 / (
                       cfg.laser.f_pc / after.tau_r + rate(after.tau_pc_nr))), "um")}
    lines = [f"{cfg.label}: tau_r = {_ps(after.tau_r):.4g} ps, "
             f"tau_pc_nr = {_ps(after.tau_pc_nr):.4g} ps, "
             f"S = {units.from_si(s_after, 'cm_per_s'):.4g} cm/s"]
    if after.f_cav is not None:
        lines.append(f"F_cav = {after.f_cav:.4g}")
    if args.baseline:
        base_cfg = load_config(args.baseline)
        before = _lifetimes(base_cfg)
        rep = passivation_report(before, after, radius, cfg.laser)
        outputs["baseline"] = _lifetime_outputs(before, radius)
        outputs["report"] = {
            "s_before_cm_per_s": units.from_si(rep.s_before, "cm_per_s"),
            "s_after_cm_per_s": units.from_si(rep.s_after, "cm_per_s"),
            "nr_rate_reduction": rep.nr_rate_reduction,
            "s_reduction": rep.s_reduction,
            "threshold_reduction_predicted": rep.threshold_reduction,
            "bracket_before": list(rep.bracket_before),
            "bracket_after": list(rep.bracket_after),
        }
        lines.append(f"NR-rate reduction {rep.nr_rate_reduction:.3f}, "
                     f"predicted threshold reduction {rep.threshold_reduction:.3f}")
    print("\n".join(lines))
    _record(args, cfg, "extract", outputs)


COMMANDS = {
    "simulate": cmd_simulate,
    "lasing-curve": cmd_lasing_curve,
    "threshold": cmd_threshold,
    "fit-trace": cmd_fit_trace,
    "extract": cmd_extract,
    "synth": cmd_synth,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default="passivated",
                        help="config file or bundled preset name (default: passivated)")
    common.add_argument("--out", default=".", help="output directory (default: .)")
    common.add_argument("--seed", type=int, default=None,
                        help="random seed; overrides [run] seed")
    common.add_argument("--format", choices=("csv", "jsonl"), default="csv",
                        help="format of records and tables (default: csv)")
    common.add_argument("--plot", action="store_true",
                        help="also render PNG figures next to the outputs (needs matplotlib)")

    parser = argparse.ArgumentParser(
        prog="pclaser",
        description="Rate-equation simulation and lifetime extraction for nanocavity lasers.",
        epilog="exit codes: 0 ok, 2 usage, 3 input or parse error, 4 numerical failure")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="time-domain run from the dark state")
    p.add_argument("--t-end-ps", type=float, default=300.0)
    p.add_argument("--dt-ps", type=float, default=0.1)
    p.add_argument("--power-uW", type=float, default=None, help="override [pump] power_uW")

    p = sub.add_parser("lasing-curve", parents=[common], help="CW L-in sweep")
    p.add_argument("--l-max-uW", type=float, default=None,
                   help="sweep end (default: 4x analytic threshold)")
    p.add_argument("--points", type=int, default=81)

    p = sub.add_parser("threshold", parents=[common], help="numeric and analytic threshold")
    p.add_argument("--baseline", default=None,
                   help="second config; prints baseline/config threshold ratios")

    p = sub.add_parser("fit-trace", parents=[common], help="fit a time_ps,intensity CSV trace")
    p.add_argument("trace", help="trace CSV")

    p = sub.add_parser("extract", parents=[common],
                       help="lifetime, F_cav and S extraction, passivation report")
    p.add_argument("--baseline", default=None, help="config of the untreated sample")
    p.add_argument("--fit-record", default=None,
                   help="fit-trace record whose derived tau_pc replaces [fit] tau_pc_ps")

    sub.add_parser("synth", parents=[common], help="seeded synthetic trace")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        args.seed_value = cfg.seed if args.seed is None else args.seed
        if args.seed_value < 0:
            parser.error("--seed must be >= 0")
        code = COMMANDS[args.command](args, cfg)
    except (ConfigError, SchemaError, TraceError, OSError, ExtractionError) as exc:
        print(f"pclaser {args.command}: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SteadyStateError, IntegrationError, PeriodicConvergenceError,
            ArithmeticError) as exc:
        module = type(exc).__module__.rsplit(".", 1)[-1]
        print(f"pclaser {args.command}: numerical failure in {module}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
