"""``qfcsim`` command line.

Exit codes: 0 success, 1 usage, 2 invalid config, 3 runtime or numerical
failure, 4 file I/O or file-format failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import AnalysisError, build_histogram, compute_snr, default_bin_width, estimate_fwhm, write_histogram_csv
from .config import ConfigError, RunConfig, load
from .conversion import FitError, OpticalPath, PUMP_COUPLING, fit_efficiency_curve, mu1_from_slope, predict_g2, read_efficiency_csv
from .filters import noise_bandwidth, noise_suppression_ratio, write_transmission_csv
from .io_utils import _clean, write_csv, write_json
from .lock_sim import simulate_lock_session, write_trace_csv
from .photon_sim import simulate_timetags
from .tagfile import TagFileError, csv_to_tagfile, read_tagfile, tagfile_to_csv, write_tagfile

log = logging.getLogger("qfcsim")

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME, EXIT_IO = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _args_hash(d: dict) -> str:
    canon = json.dumps(d, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _seed(cli_seed, cfg_seed):
    if cli_seed is not None:
        return cli_seed
    env = os.environ.get("QFC_SEED")
    if env not in (None, ""):
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"QFC_SEED must be an integer, got {env!r}") from None
    return cfg_seed


def _load_cfg(args) -> RunConfig:
    cfg = load(args.config)
    seed = _seed(getattr(args, "seed", None), cfg.seed)
    if seed != cfg.seed:
        cfg.seed = seed
    return cfg


def _outdir(args, cfg: RunConfig | None = None) -> Path:
    d = Path(args.output_dir or (cfg.output_dir if cfg else "qfc_out"))
    d.mkdir(parents=True, exist_ok=True)
    return d


def _emit(path: Path, record: dict):
    write_json(path, record)
    flat = {k: v for k, v in record.items() if not isinstance(v, (list, dict))}
    print(json.dumps(_clean({"output": str(path), **flat})))


# --- subcommands ------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = _load_cfg(args)
    s = cfg.scenario_obj(seed=cfg.seed)
    if args.without_cavity:
        s = cfg.scenario_obj(seed=cfg.seed, use_cavity=False)
    out = _outdir(args, cfg)
    stem = args.name or f"sim_{'cav' if s.use_cavity else 'nocav'}_seed{cfg.seed}"
    t0 = time.perf_counter()
    tags = simulate_timetags(s)
    tag_path = out / f"{stem}.qfctags"
    write_tagfile(tag_path, tags)
    rec = {"config_hash": cfg.config_hash(), "seed": cfg.seed, "tag_file": str(tag_path),
           "n_records": len(tags), "n_triggers": int(tags.triggers.size), "n_clicks": int(tags.clicks.size),
           "pulse_delay_s": s.delay_s, "period_s": s.period_s, "filtered_noise_cps": s.filtered_noise_cps,
           "runtime_s": time.perf_counter() - t0, "scenario": s.to_dict()}
    _emit(out / f"{stem}.json", rec)
    return EXIT_OK


def _sidecar(path: Path) -> dict:
    sc = path.with_suffix(".json")
    if sc.exists():
        try:
            return json.loads(sc.read_text())
        except json.JSONDecodeError:
            log.warning("ignoring unreadable sidecar %s", sc)
    return {}


def cmd_analyze(args) -> int:
    src = Path(args.input)
    tags = read_tagfile(src)
    meta = _sidecar(src)
    sc = meta.get("scenario", {})
    trig = tags.triggers
    if trig.size == 0:
        raise AnalysisError("tag stream contains no triggers")
    span = args.span or meta.get("period_s")
    if span is None:
        if trig.size < 2:
            raise AnalysisError("cannot infer the pulse period from a single trigger; pass --span")
        span = float(np.median(np.diff(trig.astype(np.int64)))) * 1e-12
    bw = args.bin_width or default_bin_width(args.fwhm)
    h = build_histogram(tags, bw, span)
    center = args.center if args.center is not None else meta.get("pulse_delay_s")
    fwhm_fit = None
    if center is None:
        est = estimate_fwhm(h)
        center = est.center_s
        fwhm_fit = {"fwhm_s": est.fwhm_s, "fwhm_sigma_s": est.sigma_s, "center_s": est.center_s,
                    "center_sigma_s": est.center_sigma_s}
    dark = args.dark_rate if args.dark_rate is not None else sc.get("dark_rate_cps", 0.0)
    mu_in = args.mu_in if args.mu_in is not None else sc.get("mu_in")
    nw = args.noise_window
    if nw not in (None, "equal", "max"):
        nw = float(nw)
    elif nw == "equal":
        nw = None
    r = compute_snr(h, center, args.fwhm, dark_rate_cps=dark, mu_in=mu_in,
                    dark_subtract=not args.no_dark_subtract, noise_gap_fwhm=args.noise_gap,
                    noise_window_s=nw)
    out = _outdir(args)
    write_histogram_csv(out / f"{src.stem}_histogram.csv", h)
    seed = meta.get("seed")
    chash = meta.get("config_hash") or _args_hash({"input": str(src), "fwhm": args.fwhm})
    rec = {"config_hash": chash, "seed": seed, "input": str(src), "pulse_center_s": center,
           "fwhm_s": args.fwhm, "bin_width_s": h.bin_width_s, "dark_rate_cps": dark, **r.to_dict()}
    if fwhm_fit:
        rec["peak_fit"] = fwhm_fit
    _emit(out / f"{src.stem}_snr.json", rec)
    return EXIT_OK


def cmd_mu1_sweep(args) -> int:
    from .sweep import run_mu1_sweep

    cfg = _load_cfg(args)
    if args.workers:
        cfg.analysis.sweep.workers = args.workers
    out = _outdir(args, cfg)
    t0 = time.perf_counter()
    res = run_mu1_sweep(cfg)
    rows = []
    for (cav, sub), pts in sorted(res.points.items()):
        rows += [(int(cav), int(sub), p.fwhm_s, p.mu1, p.mu1_sigma) for p in pts]
    write_csv(out / "mu1_points.csv", ["with_cavity", "dark_subtracted", "fwhm_s", "mu1", "mu1_sigma"], rows)
    rec = {"config_hash": cfg.config_hash(), "seed": cfg.seed, "runtime_s": time.perf_counter() - t0,
           "slope_with_cavity_per_us": res.fits[(True, True)].slope_per_us,
           "slope_without_cavity_per_us": res.fits[(False, True)].slope_per_us,
           "slope_ratio": res.slope_ratio, **res.to_dict()}
    _emit(out / "mu1_sweep.json", rec)
    return EXIT_OK


def cmd_filter_report(args) -> int:
    cfg = _load_cfg(args)
    t0 = time.perf_counter()
    with_c, without_c = cfg.cascades()
    span, step = cfg.filters.span_hz, cfg.filters.step_hz
    bw_with = noise_bandwidth(with_c, span, step)
    bw_without = noise_bandwidth(without_c, span, step)
    ratio = noise_suppression_ratio(without_c, with_c, span, step)
    out = _outdir(args, cfg)
    which = "without_cavity" if args.without_cavity else "with_cavity"
    csv_path = out / f"transmission_{which}.csv"
    write_transmission_csv(csv_path, without_c if args.without_cavity else with_c, span)
    rec = {"config_hash": cfg.config_hash(), "seed": cfg.seed,
           "noise_bandwidth_with_cavity_hz": bw_with, "noise_bandwidth_without_cavity_hz": bw_without,
           "noise_bandwidth_hz": bw_without if args.without_cavity else bw_with,
           "suppression_ratio": ratio, "span_hz": span, "step_hz": step, "curve": str(csv_path),
           "runtime_s": time.perf_counter() - t0}
    _emit(out / "filter_report.json", rec)
    return EXIT_OK


def cmd_fit_efficiency(args) -> int:
    cfg = _load_cfg(args) if args.config else None
    pts = read_efficiency_csv(args.input)
    if args.power_before_waveguide:
        coupling = cfg.conversion.pump_coupling if cfg else PUMP_COUPLING
        pts[:, 0] *= coupling
    path = cfg.optical_path() if cfg else OpticalPath()
    seed = _seed(args.seed, cfg.seed if cfg else 0)
    t0 = time.perf_counter()
    fit = fit_efficiency_curve(pts, path, args.length_cm, n_mc=args.n_mc, seed=seed)
    chash = cfg.config_hash() if cfg else _args_hash(
        {"input": Path(args.input).read_text(), "length_cm": args.length_cm, "n_mc": args.n_mc})
    rec = {"config_hash": chash, **fit.to_dict(), "seed": seed, "runtime_s": time.perf_counter() - t0}
    _emit(_outdir(args, cfg) / "efficiency_fit.json", rec)
    return EXIT_OK


def cmd_predict_g2(args) -> int:
    if args.mu1 is not None:
        m1 = args.mu1
    elif args.fwhm is not None and args.slope is not None:
        m1 = mu1_from_slope(args.slope, args.fwhm)
    else:
        raise UsageError("predict-g2: give --mu1, or both --fwhm and --slope")
    p = predict_g2(args.g2si, args.mu_in, m1)
    rec = {"config_hash": _args_hash(vars(args) | {"func": None}), "seed": None, **p.to_dict(),
           "snr": args.mu_in / m1}
    _emit(_outdir(args) / "g2_prediction.json", rec)
    return EXIT_OK


def cmd_lock_sim(args) -> int:
    cfg = _load_cfg(args)
    with_c, _ = cfg.cascades()
    lk = cfg.lock
    cav = cfg.cavity_state()
    dur = args.duration or lk.duration_s
    t0 = time.perf_counter()
    tr = simulate_lock_session(cav, cfg.controller(), with_c, dur, chopper_hz=cfg.scenario.chopper_hz,
                               seed=cfg.seed, update_hz=lk.update_hz, duty=cfg.scenario.chopper_duty)
    out = _outdir(args, cfg)
    write_trace_csv(out / "lock_trace.csv", tr)
    rec = {"config_hash": cfg.config_hash(), "seed": cfg.seed, **tr.summary(),
           "runtime_s": time.perf_counter() - t0}
    _emit(out / "lock_summary.json", rec)
    return EXIT_OK


def cmd_convert(args) -> int:
    src, dst = Path(args.input), Path(args.output)
    if src.suffix.lower() == ".csv":
        csv_to_tagfile(src, dst)
    else:
        tagfile_to_csv(src, dst)
    print(json.dumps({"input": str(src), "output": str(dst)}))
    return EXIT_OK


# --- parser -----------------------------------------------------------------


def _float_or_inf(v: str) -> float:
    return float("inf") if v.lower() in ("inf", "infinity") else float(v)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qfcsim", description="Quantum frequency conversion noise and detection simulator.")
    p.add_argument("--version", action="version", version=f"qfcsim {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    common = _Parser(add_help=False)
    common.add_argument("--output-dir", default=None, help="where outputs go (default: config output_dir)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common], help="simulate a time-tag stream")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--without-cavity", action="store_true")
    s.add_argument("--name", help="output file stem")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("analyze", parents=[common], help="histogram a tag file and compute the SNR")
    s.add_argument("--input", required=True)
    s.add_argument("--fwhm", type=float, required=True, help="pulse FWHM in s")
    s.add_argument("--dark-rate", type=float, help="detector dark-count rate in cps")
    s.add_argument("--no-dark-subtract", action="store_true")
    s.add_argument("--mu-in", type=float)
    s.add_argument("--center", type=float, help="pulse centre after the trigger in s")
    s.add_argument("--span", type=float, help="histogram span in s (default: pulse period)")
    s.add_argument("--bin-width", type=float)
    s.add_argument("--noise-window", default="max", help="equal, max or a duration in s")
    s.add_argument("--noise-gap", type=float, default=1.0, help="gap before the signal window, in FWHM")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("mu1-sweep", parents=[common], help="mu_1 versus pulse length, both cascades")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_mu1_sweep)

    s = sub.add_parser("filter-report", parents=[common], help="noise bandwidths and suppression ratio")
    s.add_argument("--config", required=True)
    s.add_argument("--without-cavity", action="store_true")
    s.set_defaults(func=cmd_filter_report, seed=None)

    s = sub.add_parser("fit-efficiency", parents=[common], help="fit beta and eta_max to efficiency data")
    s.add_argument("--input", required=True, help="CSV with power_w, efficiency, sigma")
    s.add_argument("--length-cm", type=float, required=True)
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--n-mc", type=int, default=1000)
    s.add_argument("--power-before-waveguide", action="store_true",
                   help="powers were measured before the waveguide; apply pump coupling")
    s.set_defaults(func=cmd_fit_efficiency)

    s = sub.add_parser("predict-g2", parents=[common], help="cross-correlation after conversion")
    s.add_argument("--g2si", type=_float_or_inf, required=True)
    s.add_argument("--mu-in", type=float, required=True)
    s.add_argument("--mu1", type=float)
    s.add_argument("--fwhm", type=float, help="pulse FWHM in s")
    s.add_argument("--slope", type=float, help="mu_1 slope per us")
    s.set_defaults(func=cmd_predict_g2)

    s = sub.add_parser("lock-sim", parents=[common], help="simulate the chopped cavity lock")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--duration", type=float, help="override lock.duration_s")
    s.set_defaults(func=cmd_lock_sim)

    s = sub.add_parser("convert", help="tag file <-> CSV")
    s.add_argument("--input", required=True)
    s.add_argument("--output", required=True)
    s.set_defaults(func=cmd_convert)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args = build_parser().parse_args(argv)
        if args.verbose:
            log.setLevel(logging.INFO)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TagFileError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (AnalysisError, FitError, ValueError, ZeroDivisionError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
