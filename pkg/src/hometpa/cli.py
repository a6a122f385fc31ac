"""Command-line interface: simulate, analyze, report, calibrate.

Exit codes: 0 success, 1 analysis failure, 2 usage or config error.
"""

import argparse
import hashlib
import json
import logging
import platform
import re
import sys
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from .analysis import Geometry, build_report
from .config import ConfigError, load_config
from .errors import HomTpaError
from .io import (
    OutputExistsError,
    SchemaError,
    check_writable,
    dumps_json,
    power_scan_text,
    delay_scan_text,
    profile_text,
    read_delay_scan,
    read_power_scan,
    write_csv,
)

log = logging.getLogger("hometpa")

EXIT_OK, EXIT_ANALYSIS, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def slug(text):
    return re.sub(r"[^A-Za-z0-9.+-]+", "_", str(text)).strip("_") or "unnamed"


def _write(path, text, force):
    check_writable(path, force).write_text(text)
    return path


def _sha(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _versions():
    return {"hometpa": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def cmd_simulate(args):
    from .protocols import run_etpa_demo, run_scenario

    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    out = Path(args.out)
    run = run_scenario(cfg, workers=args.workers)
    files = []
    for scan in run.power_scans:
        files.append(_write(out / "power" / f"{slug(scan.label)}__{scan.delay_setting:g}fs.csv",
                            power_scan_text(scan), args.force))
    for scan in run.delay_scans:
        files.append(_write(out / "delay" / f"{slug(scan.label)}.csv", delay_scan_text(scan), args.force))
    for label, prof in run.profiles.items():
        files.append(_write(out / "profiles" / f"{slug(label)}.csv", profile_text(prof, label), args.force))
    if cfg.etpa_demo is not None:
        files.append(_write(out / "etpa_demo.json", dumps_json(run_etpa_demo(cfg)), args.force))
    manifest = {
        "config": str(Path(args.config).name),
        "config_hash": cfg.config_hash,
        "seed": cfg.seed,
        "versions": _versions(),
        "area_convention": "A = pi * w0^2",
        "counts": {"power_scans": len(run.power_scans), "delay_scans": len(run.delay_scans),
                   "profiles": len(run.profiles)},
        "files": {str(p.relative_to(out)): _sha(p) for p in sorted(files)},
    }
    _write(out / "manifest.json", dumps_json(manifest), args.force)
    log.info("wrote %d files to %s", len(files) + 1, out)
    return EXIT_OK


def _expand(paths, sub):
    out = []
    for p in paths or []:
        p = Path(p)
        if p.is_dir():
            out += sorted((p / sub).glob("*.csv")) if (p / sub).is_dir() else sorted(p.glob("*.csv"))
        else:
            out.append(p)
    return out


def cmd_analyze(args):
    power_paths = _expand(args.power, "power") + _expand(args.input, "power")
    delay_paths = _expand(args.delay, "delay") + _expand(args.input, "delay")
    if not power_paths and not delay_paths:
        raise UsageError("no input files (use --power, --delay or --in)")
    for p in power_paths + delay_paths:
        if not p.is_file():
            raise UsageError(f"input file not found: {p}")
    errors = []
    power, delay = [], []
    for p in power_paths:
        try:
            power.append(read_power_scan(p))
        except SchemaError as exc:
            errors.append(str(exc))
    for p in delay_paths:
        try:
            delay.append(read_delay_scan(p))
        except SchemaError as exc:
            errors.append(str(exc))
    if errors:
        for e in errors:
            print(f"error: {e}", file=sys.stderr)
        return EXIT_ANALYSIS

    geometry = Geometry.from_beam(args.waist, args.effective_length)
    thresholds = dict(ratio_threshold=args.ratio_threshold, p_threshold=args.p_threshold,
                      consistency_threshold=args.consistency_threshold)
    if args.config:
        cfg = load_config(args.config)
        geometry = Geometry.from_beam(cfg.beam_waist, cfg.effective_length)
        thresholds = dict(ratio_threshold=cfg.ratio_threshold, p_threshold=cfg.p_threshold,
                          consistency_threshold=cfg.consistency_threshold)
    report = build_report(power, delay, geometry, **thresholds)
    out = Path(args.out)
    _write(out / "report.json", dumps_json(report.to_dict()), args.force)
    _write(out / "report.txt", report.to_table(), args.force)
    if not args.quiet:
        sys.stdout.write(report.to_table())
    for e in report.errors:
        print(f"error: {e}", file=sys.stderr)
    return EXIT_ANALYSIS if report.errors else EXIT_OK


def cmd_report(args):
    src = Path(args.input)
    if not src.is_file():
        raise UsageError(f"report not found: {src}")
    try:
        data = json.loads(src.read_text())
    except json.JSONDecodeError as exc:
        print(f"error: {src}: invalid JSON ({exc.msg}, line {exc.lineno})", file=sys.stderr)
        return EXIT_ANALYSIS
    out = Path(args.out)

    dips = data.get("dips")
    if dips is None:
        print("notice: report has no 'dips' section; dip_overlay.csv left empty", file=sys.stderr)
    rows = []
    for d in dips or []:
        for t, r, n in zip(d["delays"], d["rates"], d.get("normalized") or [None] * len(d["rates"])):
            rows.append([d.get("group", ""), d["label"], d.get("role", ""), t, r, n])
    write_csv(out / "dip_overlay.csv", ["group", "label", "role", "delay_fs", "rate", "normalized"], rows, args.force)

    table = data.get("rows")
    if table is None:
        print("notice: report has no 'rows' section; slope and cross-section CSVs left empty", file=sys.stderr)
    table = [r for r in table or [] if r.get("concentration")]
    write_csv(out / "m_vs_C.csv", ["concentration_M", "m_zero", "m_zero_err", "m_long", "m_long_err"],
              [[r["concentration"], r["m_zero"], r["m_zero_err"], r.get("m_long"), r.get("m_long_err")]
               for r in table], args.force)

    def lg(v):
        return None if not v else float(np.log10(v))

    write_csv(out / "sigma_e_vs_C.csv",
              ["concentration_M", "log10_concentration", "sigma_e_zero", "log10_sigma_e_zero", "sigma_e_long",
               "log10_sigma_e_long"],
              [[r["concentration"], lg(r["concentration"]), r.get("sigma_e_zero"), lg(r.get("sigma_e_zero")),
                r.get("sigma_e_long"), lg(r.get("sigma_e_long"))] for r in table], args.force)
    return EXIT_OK


_SCENARIO_FILES = {"rhb": "paper_rhb.cfg", "solvents": "solvent_ladder.cfg", "nanoparticle": "nanoparticle.cfg",
                   "etpa": "etpa_demo.cfg"}


def cmd_calibrate(args):
    from .protocols import paper_calibration, paper_config

    tpath = Path(args.targets)
    if not tpath.is_file():
        raise UsageError(f"targets file not found: {tpath}")
    try:
        targets = json.loads(tpath.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"{tpath}: invalid JSON ({exc.msg}, line {exc.lineno})") from None
    if args.config:
        cfg = load_config(args.config)
        targets = {**targets, "pump": {"center_wavelength": cfg.pump.center_wavelength,
                                       "fwhm_bandwidth": cfg.pump.fwhm_bandwidth, "regime": cfg.pump.regime}}
    try:
        calib = paper_calibration(targets)
    except KeyError as exc:
        raise UsageError(f"{tpath}: missing target {exc.args[0]!r}") from None
    text = dumps_json(calib)
    if args.out is None:
        sys.stdout.write(text)
        return EXIT_OK
    out = Path(args.out)
    _write(out / "calibration.json", text, args.force)
    if args.emit_configs:
        for scenario, name in _SCENARIO_FILES.items():
            cfg_map = paper_config(calib, targets, scenario)
            head = (f"# Scenario '{scenario}' generated by `hometpa calibrate` from {tpath.name}.\n"
                    f"# Phase matching reproduces a free-space dip with V = {targets['free_space_dip']['visibility']}"
                    f" and FWHM = {targets['free_space_dip']['fwhm_fs']} fs.\n")
            _write(out / name, head + yaml.safe_dump(json.loads(dumps_json(cfg_map)), sort_keys=False), args.force)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="hometpa", description="HOM-based ETPA transmission simulator and analysis")
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.add_argument("-q", "--quiet", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    s = sub.add_parser("simulate", help="run a scenario config and write scans")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int, default=None)
    s.add_argument("--force", action="store_true", help="overwrite existing outputs")
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("analyze", help="fit scan CSVs and write a report")
    a.add_argument("--power", nargs="*", default=[])
    a.add_argument("--delay", nargs="*", default=[])
    a.add_argument("--in", dest="input", nargs="*", default=[], help="simulate output directories")
    a.add_argument("--out", required=True)
    a.add_argument("--config", help="take geometry and thresholds from a scenario config")
    a.add_argument("--waist", type=float, default=58.0, help="beam waist [um]")
    a.add_argument("--effective-length", type=float, default=1.03, help="interaction length [cm]")
    a.add_argument("--ratio-threshold", type=float, default=0.5)
    a.add_argument("--p-threshold", type=float, default=0.05)
    a.add_argument("--consistency-threshold", type=float, default=0.5)
    a.add_argument("--force", action="store_true")
    a.set_defaults(func=cmd_analyze)

    r = sub.add_parser("report", help="turn a report JSON into plot-ready CSVs")
    r.add_argument("--in", dest="input", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--force", action="store_true")
    r.set_defaults(func=cmd_report)

    c = sub.add_parser("calibrate", help="fit source and sample knobs to target observables")
    c.add_argument("--config")
    c.add_argument("--targets", required=True)
    c.add_argument("--out")
    c.add_argument("--emit-configs", action="store_true", help="also write the scenario configs")
    c.add_argument("--force", action="store_true")
    c.set_defaults(func=cmd_calibrate)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError, OutputExistsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (HomTpaError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS


if __name__ == "__main__":
    sys.exit(main())
