"""Scenario configuration: YAML loading and validation with line-anchored errors.

Schema (units in brackets; everything except ``ladder`` is optional)::

    name: str
    seed: int                               # master seed
    source:
      pump: {center_wavelength [nm], fwhm_bandwidth [nm], regime: CW | Pulsed}
      phase_match: {crystal_length [mm], group_delay_signal [fs/mm],
                    group_delay_idler [fs/mm], profile: sinc | gaussian,
                    nondegeneracy [nm]}
      grid: {n_points, span_factor}
      rate: {brightness [1/(s mW)] | reference_rate [1/s] + reference_power [mW],
             detection_pair_efficiency, beam_waist [um]}
    powers: [mW, ...] | {start, stop, num}
    delays: [fs, ...] | {start, stop, step, extra: [fs, ...]}
    delay_settings: [0, 167]                # power-scan delays [fs]
    delay_scan_power: 43.9                  # [mW]
    acquisition_time: 1.0                   # per power point [s]
    delay_acquisition_time: 1.0             # per delay point [s]
    geometry: {beam_waist [um], effective_length [cm]}
    analysis: {ratio_threshold, p_threshold, consistency_threshold}
    nuisance: {enabled: bool}               # delay-correlated slope term
    references:                             # solvent-only samples
      - {label, group, sample: <sample entry>, delay_scan: bool}
    ladder:
      - {label, reference, concentration [mol/L], group, sample: <sample entry>,
         long_delay_gain, experiments: [power, delay]}
    etpa_demo: {pulsed_pump: {...}, cw_pump: {...}, depths: [...],
                notch: {center_sum_wavelength, notch_fwhm, coincidence_window},
                delays: [...]}

Sample entries follow :func:`hometpa.samples.sample_from_spec`. A ladder
entry's sample is composed with its reference's sample.
"""

from dataclasses import dataclass, field
import hashlib
import json
from pathlib import Path

import numpy as np
import yaml

from .biphoton import PhaseMatch, PumpEnvelope
from .counting import PAPER_POWERS, SourceRateModel
from .errors import HomTpaError
from .hom import PLATEAU_DELAY, PLATEAU_THRESHOLD
from .samples import sample_from_spec


class ConfigError(HomTpaError):
    def __init__(self, message, key=None, line=None, source=None):
        self.key, self.line, self.source = key, line, source
        where = source or "<config>"
        if line is not None:
            where += f":{line}"
        if key:
            where += f" [{key}]"
        super().__init__(f"{where}: {message}")


def _line_map(node, path=(), out=None):
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            p = path + (k.value,)
            out[p] = k.start_mark.line + 1
            _line_map(v, p, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            p = path + (i,)
            out[p] = v.start_mark.line + 1
            _line_map(v, p, out)
    return out


@dataclass(frozen=True)
class LadderEntry:
    label: str
    sample_spec: dict
    reference: str = None
    concentration: float = None
    group: str = ""
    long_delay_gain: float = 1.0
    experiments: tuple = ("power", "delay")


@dataclass(frozen=True)
class Reference:
    label: str
    sample_spec: dict
    group: str = ""
    delay_scan: bool = True


@dataclass(frozen=True)
class EtpaDemoConfig:
    pulsed_pump: PumpEnvelope
    cw_pump: PumpEnvelope
    depths: tuple
    notch: dict
    delays: np.ndarray


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    name: str = "scenario"
    seed: int = 0
    pump: PumpEnvelope = field(default_factory=PumpEnvelope)
    phase_match: PhaseMatch = field(default_factory=PhaseMatch)
    n_points: int = 512
    span_factor: float = 8.0
    rate_model: SourceRateModel = None
    powers: np.ndarray = None
    delays: np.ndarray = None
    delay_settings: tuple = (0.0, PLATEAU_DELAY)
    delay_scan_power: float = PAPER_POWERS[1]
    acquisition_time: float = 1.0
    delay_acquisition_time: float = 1.0
    beam_waist: float = 58.0
    effective_length: float = 1.03
    ratio_threshold: float = 0.5
    p_threshold: float = 0.05
    consistency_threshold: float = 0.5
    nuisance: bool = False
    references: tuple = ()
    ladder: tuple = ()
    etpa_demo: EtpaDemoConfig = None
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def config_hash(self):
        blob = json.dumps(self.raw, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()

    def reference(self, label):
        for r in self.references:
            if r.label == label:
                return r
        raise KeyError(label)

    def with_seed(self, seed):
        from dataclasses import replace

        return replace(self, seed=int(seed), raw={**self.raw, "seed": int(seed)})


def default_delays(start=-250.0, stop=250.0, step=5.0, extra=(-PLATEAU_DELAY, PLATEAU_DELAY)):
    grid = np.arange(start, stop + step / 2, step)
    return np.unique(np.concatenate([grid, np.asarray(extra, dtype=float)]))


def default_powers(num=10):
    return np.linspace(PAPER_POWERS[0], PAPER_POWERS[1], num)


class _Reader:
    """Typed access to a parsed mapping that reports key paths and lines."""

    def __init__(self, data, lines, source):
        self.lines, self.source = lines, source
        self.data = data

    def fail(self, message, path):
        line = None
        for n in range(len(path), 0, -1):
            line = self.lines.get(tuple(path[:n]))
            if line is not None:
                break
        raise ConfigError(message, ".".join(str(p) for p in path), line, self.source)

    def get(self, path, default=None, kind=None):
        node = self.data
        for p in path:
            if isinstance(node, dict) and p in node:
                node = node[p]
            elif isinstance(node, list) and isinstance(p, int) and p < len(node):
                node = node[p]
            else:
                return default
        if kind is None or node is None:
            return node
        try:
            if kind is float and isinstance(node, bool):
                raise TypeError
            return kind(node)
        except (TypeError, ValueError):
            self.fail(f"expected {kind.__name__}, got {node!r}", path)

    def mapping(self, path):
        node = self.get(path, {})
        if not isinstance(node, dict):
            self.fail("expected a mapping", path)
        return node

    def sequence(self, path):
        node = self.get(path, [])
        if not isinstance(node, list):
            self.fail("expected a list", path)
        return node


def _float_array(r, path, default_fn, range_keys):
    node = r.get(path)
    if node is None:
        return default_fn()
    if isinstance(node, list):
        try:
            return np.asarray([float(v) for v in node])
        except (TypeError, ValueError):
            r.fail("expected a list of numbers", path)
    if isinstance(node, dict):
        unknown = set(node) - set(range_keys)
        if unknown:
            r.fail(f"unknown keys {sorted(unknown)}", path)
        return None
    r.fail("expected a list or a range mapping", path)


_TOP_KEYS = {"name", "seed", "source", "powers", "delays", "delay_settings", "delay_scan_power",
             "acquisition_time", "delay_acquisition_time", "geometry", "analysis", "nuisance",
             "references", "ladder", "etpa_demo"}


def _pump(r, path, default=None):
    node = r.mapping(path)
    unknown = set(node) - {"center_wavelength", "fwhm_bandwidth", "regime"}
    if unknown:
        r.fail(f"unknown keys {sorted(unknown)}", path)
    base = default or PumpEnvelope()
    try:
        return PumpEnvelope(
            r.get(path + ("center_wavelength",), base.center_wavelength, float),
            r.get(path + ("fwhm_bandwidth",), base.fwhm_bandwidth, float),
            r.get(path + ("regime",), base.regime, str),
        )
    except HomTpaError as exc:
        r.fail(str(exc), path)


def _check_sample(r, spec, path):
    if not isinstance(spec, dict):
        r.fail("sample entry must be a mapping", path)
    try:
        sample_from_spec(spec)
    except HomTpaError as exc:
        r.fail(str(exc), path)


def parse_config(data, lines=None, source=None):
    """Validate a parsed config mapping into a ScenarioConfig."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping", source=source)
    r = _Reader(data, lines or {}, source)
    unknown = set(data) - _TOP_KEYS
    if unknown:
        r.fail(f"unknown keys {sorted(unknown)}", (sorted(unknown)[0],))

    pump = _pump(r, ("source", "pump"))
    pm_node = r.mapping(("source", "phase_match"))
    base = PhaseMatch()
    pm_keys = ("crystal_length", "group_delay_signal", "group_delay_idler", "profile", "nondegeneracy")
    if set(pm_node) - set(pm_keys):
        r.fail(f"unknown keys {sorted(set(pm_node) - set(pm_keys))}", ("source", "phase_match"))
    try:
        pm = PhaseMatch(**{k: r.get(("source", "phase_match", k), getattr(base, k),
                                    str if k == "profile" else float) for k in pm_keys})
    except HomTpaError as exc:
        r.fail(str(exc), ("source", "phase_match"))

    n_points = r.get(("source", "grid", "n_points"), 512, int)
    span_factor = r.get(("source", "grid", "span_factor"), 8.0, float)
    if n_points < 64 or n_points & (n_points - 1):
        r.fail("n_points must be a power of two >= 64", ("source", "grid", "n_points"))
    if span_factor < 5:
        r.fail("span_factor must be at least 5 marginal bandwidths", ("source", "grid", "span_factor"))

    rp = ("source", "rate")
    waist = r.get(rp + ("beam_waist",), 58.0, float)
    eff = r.get(rp + ("detection_pair_efficiency",), 1.0, float)
    try:
        if r.get(rp + ("brightness",)) is not None:
            rate = SourceRateModel(r.get(rp + ("brightness",), kind=float), eff, waist)
        else:
            ref_rate = r.get(rp + ("reference_rate",), 3.17e4, float)
            ref_power = r.get(rp + ("reference_power",), PAPER_POWERS[1], float)
            rate = SourceRateModel.from_reference(ref_rate, ref_power, eff, waist)
    except HomTpaError as exc:
        r.fail(str(exc), rp)

    powers = _float_array(r, ("powers",), default_powers, ("start", "stop", "num"))
    if powers is None:
        powers = np.linspace(r.get(("powers", "start"), PAPER_POWERS[0], float),
                             r.get(("powers", "stop"), PAPER_POWERS[1], float),
                             r.get(("powers", "num"), 10, int))
    if powers.size and (np.any(np.diff(powers) <= 0) or powers[0] <= 0):
        r.fail("powers must be positive and strictly increasing", ("powers",))
    if powers.size and (powers[0] < PAPER_POWERS[0] - 1e-9 or powers[-1] > PAPER_POWERS[1] + 1e-9):
        r.fail(f"powers must lie within [{PAPER_POWERS[0]}, {PAPER_POWERS[1]}] mW", ("powers",))

    delays = _float_array(r, ("delays",), default_delays, ("start", "stop", "step", "extra"))
    if delays is None:
        step = r.get(("delays", "step"), 5.0, float)
        if not step > 0:
            r.fail("step must be positive", ("delays", "step"))
        extra = r.get(("delays", "extra"), [-PLATEAU_DELAY, PLATEAU_DELAY])
        delays = default_delays(r.get(("delays", "start"), -250.0, float),
                                r.get(("delays", "stop"), 250.0, float), step, extra)
    delays = np.unique(delays)
    if not np.any(np.abs(delays) >= PLATEAU_THRESHOLD):
        r.fail(f"delay grid needs a plateau point with |delay| >= {PLATEAU_THRESHOLD:g} fs", ("delays",))

    settings = tuple(float(v) for v in r.get(("delay_settings",), [0.0, PLATEAU_DELAY]))
    for i, d in enumerate(settings):
        if not np.any(np.isclose(delays, d)):
            r.fail(f"delay setting {d:g} fs is not on the delay grid", ("delay_settings", i))
    if 0.0 not in settings:
        r.fail("delay settings must include 0 fs", ("delay_settings",))

    acq = r.get(("acquisition_time",), 1.0, float)
    dacq = r.get(("delay_acquisition_time",), 1.0, float)
    for key, v in (("acquisition_time", acq), ("delay_acquisition_time", dacq)):
        if not v > 0:
            r.fail("must be positive", (key,))
    scan_power = r.get(("delay_scan_power",), PAPER_POWERS[1], float)
    if not scan_power > 0:
        r.fail("must be positive", ("delay_scan_power",))

    geo_waist = r.get(("geometry", "beam_waist"), waist, float)
    l_eff = r.get(("geometry", "effective_length"), 1.03, float)
    if not (geo_waist > 0 and l_eff > 0):
        r.fail("geometry values must be positive", ("geometry",))

    references = []
    labels = set()
    for i, node in enumerate(r.sequence(("references",))):
        path = ("references", i)
        if not isinstance(node, dict) or "label" not in node:
            r.fail("reference needs a label", path)
        _check_sample(r, node.get("sample", {"kind": "identity"}), path + ("sample",))
        if node["label"] in labels:
            r.fail(f"duplicate label {node['label']!r}", path + ("label",))
        labels.add(node["label"])
        references.append(Reference(str(node["label"]), dict(node.get("sample", {"kind": "identity"})),
                                    str(node.get("group", "")), bool(node.get("delay_scan", True))))
    ref_labels = {ref.label for ref in references}

    ladder = []
    for i, node in enumerate(r.sequence(("ladder",))):
        path = ("ladder", i)
        if not isinstance(node, dict) or "label" not in node or "sample" not in node:
            r.fail("ladder entry needs a label and a sample", path)
        unknown = set(node) - {"label", "reference", "concentration", "group", "sample", "long_delay_gain",
                               "experiments"}
        if unknown:
            r.fail(f"unknown keys {sorted(unknown)}", path)
        if node["label"] in labels:
            r.fail(f"duplicate label {node['label']!r}", path + ("label",))
        labels.add(node["label"])
        _check_sample(r, node["sample"], path + ("sample",))
        ref = node.get("reference")
        if ref is not None and ref not in ref_labels:
            r.fail(f"unknown reference {ref!r}", path + ("reference",))
        conc = r.get(path + ("concentration",), None, float)
        if conc is not None and conc < 0:
            r.fail("concentration must be non-negative", path + ("concentration",))
        gain = r.get(path + ("long_delay_gain",), 1.0, float)
        if not gain > 0:
            r.fail("long_delay_gain must be positive", path + ("long_delay_gain",))
        exps = tuple(node.get("experiments", ["power", "delay"]))
        if set(exps) - {"power", "delay"}:
            r.fail("experiments must be a subset of [power, delay]", path + ("experiments",))
        if "power" in exps and ref is None:
            r.fail("power experiments need a solvent reference", path + ("reference",))
        ladder.append(LadderEntry(str(node["label"]), dict(node["sample"]), ref, conc,
                                  str(node.get("group", "")), gain, exps))

    demo = None
    if r.get(("etpa_demo",)) is not None:
        dp = ("etpa_demo",)
        pulsed = _pump(r, dp + ("pulsed_pump",), PumpEnvelope(403.0, 5.0, "Pulsed"))
        cw = _pump(r, dp + ("cw_pump",), pump)
        depths = tuple(float(d) for d in r.get(dp + ("depths",), [0.0, 0.5]))
        notch = dict(r.mapping(dp + ("notch",)))
        try:
            sample_from_spec({"kind": "notch", "depth": 0.5, **notch})
        except HomTpaError as exc:
            r.fail(str(exc), dp + ("notch",))
        demo_delays = _float_array(r, dp + ("delays",), lambda: np.array([-PLATEAU_DELAY, 0.0, PLATEAU_DELAY]), ())
        demo = EtpaDemoConfig(pulsed, cw, depths, notch, demo_delays)

    return ScenarioConfig(
        name=str(r.get(("name",), "scenario")),
        seed=r.get(("seed",), 0, int),
        pump=pump,
        phase_match=pm,
        n_points=n_points,
        span_factor=span_factor,
        rate_model=rate,
        powers=powers,
        delays=delays,
        delay_settings=settings,
        delay_scan_power=scan_power,
        acquisition_time=acq,
        delay_acquisition_time=dacq,
        beam_waist=geo_waist,
        effective_length=l_eff,
        ratio_threshold=r.get(("analysis", "ratio_threshold"), 0.5, float),
        p_threshold=r.get(("analysis", "p_threshold"), 0.05, float),
        consistency_threshold=r.get(("analysis", "consistency_threshold"), 0.5, float),
        nuisance=bool(r.get(("nuisance", "enabled"), False)),
        references=tuple(references),
        ladder=tuple(ladder),
        etpa_demo=demo,
        raw=data,
    )


def load_config(path):
    """Read and validate a YAML scenario config."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}", source=str(path))
    text = path.read_text()
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {getattr(exc, 'problem', exc)}", line=mark.line + 1 if mark else None,
                          source=str(path)) from None
    return parse_config(data, _line_map(node) if node is not None else {}, str(path))
