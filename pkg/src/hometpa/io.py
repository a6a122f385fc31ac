"""Text formats: JSA dumps, profile and scan CSVs, report JSON.

CSV files start with ``# key=value`` metadata lines followed by a column
header row and data rows. Floats are written with ``repr`` so files
round-trip exactly and identical inputs give identical bytes.
"""

import csv
import io as _io
import json
import math
from pathlib import Path

import numpy as np

from .biphoton import FrequencyGrid, JointSpectralAmplitude
from .counting import HomScan, PowerScan
from .errors import HomTpaError

POWER_COLUMNS = ("power_mW", "counts_solvent", "counts_sample")
DELAY_COLUMNS = ("delay_fs", "counts")
PROFILE_COLUMNS = ("delay_fs", "normalized_coincidence")
_NUMERIC_KEYS = {"acquisition_time", "delay_setting", "pump_power", "concentration", "center_signal",
                 "center_idler", "span", "n_points"}


class SchemaError(HomTpaError):
    """A file does not follow the documented schema; lists every bad row."""

    def __init__(self, path, problems):
        self.path, self.problems = str(path), list(problems)
        super().__init__(f"{path}: " + "; ".join(self.problems))


class OutputExistsError(HomTpaError):
    pass


def check_writable(path, force=False):
    path = Path(path)
    if path.exists() and not force:
        raise OutputExistsError(f"{path} exists; pass --force to overwrite")
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def _header(meta):
    return "".join(f"# {k}={_fmt(v)}\n" for k, v in meta.items() if v is not None)


def _parse_header(lines, path):
    meta, body, problems = {}, [], []
    for n, line in enumerate(lines, start=1):
        if line.startswith("#"):
            text = line[1:].strip()
            if not text:
                continue
            if "=" not in text:
                problems.append(f"line {n}: metadata line without '='")
                continue
            key, value = (s.strip() for s in text.split("=", 1))
            if key in _NUMERIC_KEYS:
                try:
                    value = float(value)
                except ValueError:
                    problems.append(f"line {n}: {key} must be numeric")
                    continue
            meta[key] = value
        elif line.strip():
            body.append((n, line))
    return meta, body, problems


def _read_table(path, columns, kinds):
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise SchemaError(path, [f"cannot read: {exc.strerror}"]) from None
    meta, body, problems = _parse_header(lines, path)
    if not body:
        raise SchemaError(path, problems + ["no column header"])
    n_head, head = body[0]
    found = tuple(c.strip() for c in head.split(","))
    if found != columns:
        raise SchemaError(path, problems + [f"line {n_head}: expected columns {','.join(columns)}, got {head!r}"])
    cols = [[] for _ in columns]
    for n, line in body[1:]:
        cells = [c.strip() for c in line.split(",")]
        if len(cells) != len(columns):
            problems.append(f"line {n}: expected {len(columns)} fields, got {len(cells)}")
            continue
        try:
            values = [kind(c) for kind, c in zip(kinds, cells)]
        except ValueError:
            problems.append(f"line {n}: non-numeric field")
            continue
        if any(isinstance(v, float) and not math.isfinite(v) for v in values):
            problems.append(f"line {n}: non-finite value")
            continue
        if any(kind is _int and v < 0 for kind, v in zip(kinds, values)):
            problems.append(f"line {n}: negative count")
            continue
        for col, v in zip(cols, values):
            col.append(v)
    if problems:
        raise SchemaError(path, problems)
    return meta, [np.asarray(c) for c in cols]


def _int(text):
    v = float(text)
    if v != int(v):
        raise ValueError(text)
    return int(v)


def _require(meta, key, path):
    if key not in meta:
        raise SchemaError(path, [f"missing header line '# {key}=...'"])
    return meta[key]


def power_scan_text(scan):
    meta = {"kind": "power_scan", "label": scan.label, "acquisition_time": scan.acquisition_time,
            "delay_setting": scan.delay_setting, **scan.metadata}
    rows = "".join(f"{_fmt(float(p))},{int(a)},{int(b)}\n"
                   for p, a, b in zip(scan.powers, scan.counts_solvent, scan.counts_sample))
    return _header(meta) + ",".join(POWER_COLUMNS) + "\n" + rows


def delay_scan_text(scan):
    meta = {"kind": "delay_scan", "label": scan.label, "acquisition_time": scan.acquisition_time,
            "pump_power": scan.pump_power, **scan.metadata}
    rows = "".join(f"{_fmt(float(d))},{int(c)}\n" for d, c in zip(scan.delays, scan.counts))
    return _header(meta) + ",".join(DELAY_COLUMNS) + "\n" + rows


def write_power_scan(scan, path, force=False):
    check_writable(path, force).write_text(power_scan_text(scan))


def write_delay_scan(scan, path, force=False):
    check_writable(path, force).write_text(delay_scan_text(scan))


def _split_meta(meta, fixed):
    extra = {k: v for k, v in meta.items() if k not in fixed}
    return extra


def read_power_scan(path):
    meta, (p, a, b) = _read_table(path, POWER_COLUMNS, (float, _int, _int))
    acq = _require(meta, "acquisition_time", path)
    delay = _require(meta, "delay_setting", path)
    label = meta.get("label", Path(path).stem)
    try:
        return PowerScan(p, a, b, delay, acq, label,
                         _split_meta(meta, {"kind", "label", "acquisition_time", "delay_setting"}))
    except HomTpaError as exc:
        raise SchemaError(path, [str(exc)]) from None


def read_delay_scan(path):
    meta, (d, c) = _read_table(path, DELAY_COLUMNS, (float, _int))
    acq = _require(meta, "acquisition_time", path)
    label = meta.get("label", Path(path).stem)
    try:
        return HomScan(d, c, acq, meta.get("pump_power", math.nan), label,
                       _split_meta(meta, {"kind", "label", "acquisition_time", "pump_power"}))
    except HomTpaError as exc:
        raise SchemaError(path, [str(exc)]) from None


def profile_text(profile, label=""):
    meta = {"kind": "profile", "label": label, "plateau_reference_delay": repr(profile.plateau_reference_delay)}
    rows = "".join(f"{_fmt(float(d))},{_fmt(float(v))}\n"
                   for d, v in zip(profile.delays, profile.normalized_coincidence))
    return _header(meta) + ",".join(PROFILE_COLUMNS) + "\n" + rows


def write_profile(profile, path, label="", force=False):
    check_writable(path, force).write_text(profile_text(profile, label))


def read_profile(path):
    from .hom import DipProfile

    meta, (d, v) = _read_table(path, PROFILE_COLUMNS, (float, float))
    ref = float(meta.get("plateau_reference_delay", 167.0))
    return DipProfile(d, v, None, ref)


def write_jsa(jsa, path, force=False):
    """Grid metadata header then one ``omega1 omega2 re im`` row per grid cell."""
    g = jsa.grid
    out = _io.StringIO()
    out.write(_header({"kind": "jsa", "center_signal": g.center_signal, "center_idler": g.center_idler,
                       "span": g.span, "n_points": g.n_points}))
    w1, w2 = jsa.omega1, jsa.omega2
    a = jsa.amplitude
    for i in range(g.n_points):
        for j in range(g.n_points):
            out.write(f"{_fmt(w1[i])} {_fmt(w2[j])} {_fmt(a[i, j].real)} {_fmt(a[i, j].imag)}\n")
    check_writable(path, force).write_text(out.getvalue())


def read_jsa(path):
    meta, body, problems = _parse_header(Path(path).read_text().splitlines(), path)
    try:
        grid = FrequencyGrid(meta["center_signal"], meta["center_idler"], meta["span"], int(meta["n_points"]))
    except KeyError as exc:
        raise SchemaError(path, problems + [f"missing header line '# {exc.args[0]}=...'"]) from None
    n = grid.n_points
    if len(body) != n * n:
        raise SchemaError(path, problems + [f"expected {n * n} rows, got {len(body)}"])
    bad = [n for n, line in body if len(line.split()) != 4]
    if bad:
        raise SchemaError(path, problems + [f"line {n}: expected 4 fields" for n in bad])
    try:
        data = np.array([[float(x) for x in line.split()[2:4]] for _, line in body])
    except ValueError:
        raise SchemaError(path, problems + ["non-numeric amplitude field"]) from None
    return JointSpectralAmplitude(grid, (data[:, 0] + 1j * data[:, 1]).reshape(n, n))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def dumps_json(obj):
    return json.dumps(_jsonable(obj), sort_keys=True, indent=1) + "\n"


def write_json(obj, path, force=False):
    check_writable(path, force).write_text(dumps_json(obj))


def write_csv(path, header, rows, force=False):
    out = _io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) if v is not None else "" for v in row])
    check_writable(path, force).write_text(out.getvalue())
