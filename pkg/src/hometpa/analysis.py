"""Derived quantities from count records: dip fits, slopes, cross-sections, verdict."""

from dataclasses import dataclass, field
from enum import Enum
import math
import warnings

import numpy as np
from scipy.optimize import OptimizeWarning, curve_fit

from .errors import ContractError, DomainError
from .hom import PLATEAU_THRESHOLD, visibility_from_rates
from .stats import anova_oneway
from .units import AVOGADRO, FWHM_PER_SIGMA, fwhm

DEFAULT_EFFECTIVE_LENGTH = 1.03  # cm, mean back-computed interaction length
DEFAULT_WAIST = 58.0  # um


class Verdict(str, Enum):
    LINEAR_LOSS_ARTIFACT = "LinearLossArtifact"
    CANDIDATE_ETPA = "CandidateETPA"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class DipFit:
    r_max: float
    r_max_err: float
    r_min: float
    r_min_err: float
    visibility: float
    visibility_err: float
    fwhm: float
    fwhm_err: float
    visibility_se: float = math.nan
    flags: tuple = ()

    def to_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def _gaussian_dip(tau, a, b, s):
    return a - b * np.exp(-(tau**2) / (2 * s**2))


def _visibility_err(r_max, r_min, s_max, s_min):
    total = r_max + r_min
    return 2.0 * math.hypot(r_min * s_max, r_max * s_min) / total**2


def _fit_window(tau, rates, r_max, plateau_threshold, widths=1.5):
    """Points within `widths` raw half-depth widths of the dip centre.

    Sinc-type dips have a cusped core and slow wings that a Gaussian cannot
    follow at once; fitting only the core keeps the minimum estimate close
    to the true dip floor. Falls back to the whole scan.
    """
    order = np.argsort(tau)
    try:
        width, _ = fwhm(tau[order], r_max - rates[order])
    except ValueError:
        return np.ones(tau.shape, bool)
    window = np.abs(tau) <= min(widths * width, plateau_threshold)
    return window if window.sum() >= 5 else np.ones(tau.shape, bool)


def fit_dip(scan, plateau_threshold=PLATEAU_THRESHOLD):
    """Plateau mean, Gaussian-fit minimum, visibility and width of a delay scan.

    The ``*_err`` fields follow the single-reading convention of tabulated
    dip data: plateau scatter for ``r_max``, fit covariance plus one
    reading's Poisson variance for ``r_min``. ``visibility_se`` is the
    standard error of the fitted visibility itself (plateau mean error and
    fit covariance only); use it to compare visibilities between scans.
    """
    tau = scan.delays
    rates = scan.rates
    t = scan.acquisition_time
    plateau = np.abs(tau) >= plateau_threshold
    if not plateau.any():
        raise ContractError(f"no plateau: scan needs points with |delay| >= {plateau_threshold:g} fs")
    if (~plateau).sum() < 3:
        raise ContractError("scan needs at least three points inside the dip region")
    r_max = float(rates[plateau].mean())
    r_max_err = float(rates[plateau].std(ddof=1)) if plateau.sum() > 1 else math.sqrt(max(r_max, 1.0) / t)
    r_max_se = r_max_err / math.sqrt(plateau.sum())
    flags = []

    sigma = np.sqrt(np.maximum(scan.counts, 1)) / t
    centre = np.abs(tau) < plateau_threshold
    depth0 = max(r_max - rates[centre].min(), 1e-12)
    window = _fit_window(tau, rates, r_max, plateau_threshold)
    s0 = max(np.ptp(tau[window]) / 6.0, 1.0)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", OptimizeWarning)
            popt, pcov = curve_fit(_gaussian_dip, tau[window], rates[window], p0=[r_max, depth0, s0],
                                   sigma=sigma[window], absolute_sigma=True, maxfev=5000)
        a, b, s = popt
        var_min = pcov[0, 0] + pcov[1, 1] - 2 * pcov[0, 1]
        if not (np.all(np.isfinite(pcov)) and b > 0 and var_min >= 0):
            raise RuntimeError("degenerate fit")
        r_min = float(a - b)
        r_min_se = math.sqrt(var_min)
        r_min_err = math.sqrt(var_min + max(r_min, 1.0) / t)
        width = FWHM_PER_SIGMA * abs(s)
        width_err = FWHM_PER_SIGMA * math.sqrt(pcov[2, 2])
    except (RuntimeError, ValueError, OptimizeWarning):
        flags.append("fit_failed")
        r_min = float(rates[centre].min())
        r_min_err = r_min_se = 3.0 * math.sqrt(max(r_min, 1.0) / t)
        width, width_err = math.nan, math.nan
    if r_min < 0:
        flags.append("r_min_clamped")
        r_min = 0.0
    if r_min > r_max:
        flags.append("no_dip")
        r_min = r_max
    vis = visibility_from_rates(r_max, r_min)
    return DipFit(r_max, r_max_err, r_min, r_min_err, vis,
                  _visibility_err(r_max, r_min, r_max_err, r_min_err), width, width_err,
                  _visibility_err(r_max, r_min, r_max_se, r_min_se), tuple(flags))


@dataclass(frozen=True)
class SlopeFit:
    m: float
    m_err: float
    residual_norm: float
    flags: tuple = ()


def slope_fit(scan, min_points=5):
    """Zero-intercept regression of R_TPA = R_sol - R_sam against R_sol.

    The standard error is the larger of the regression (residual) estimate
    and the Poisson-propagated counting error.
    """
    if scan.powers.size < min_points:
        raise ContractError(f"slope fit needs at least {min_points} power points")
    x = scan.rates_solvent
    y = x - scan.rates_sample
    sxx = float(np.dot(x, x))
    if sxx == 0:
        raise ContractError("solvent counts are all zero")
    m = float(np.dot(x, y)) / sxx
    resid = y - m * x
    dof = x.size - 1
    se_resid = math.sqrt(float(np.dot(resid, resid)) / dof / sxx)
    # counting-noise floor: first-order propagation of independent Poisson errors
    # in both channels; guards against lucky small residuals on short ladders
    s = scan.rates_sample
    var_x = scan.counts_solvent / scan.acquisition_time**2
    var_s = scan.counts_sample / scan.acquisition_time**2
    var_m = np.sum(x**2 * var_s + (2 * x * (1 - m) - s) ** 2 * var_x) / sxx**2
    m_err = max(se_resid, math.sqrt(float(var_m)))
    flags = []
    noise = 2.0 * np.sqrt((scan.counts_solvent + scan.counts_sample) / scan.acquisition_time**2)
    if np.count_nonzero(y < -np.maximum(noise, 1e-12)) > x.size / 2:
        flags.append("sample_brighter_than_solvent")
    if m < -2 * m_err or m > 1 + 2 * m_err:
        flags.append("unphysical_slope")
    return SlopeFit(m, m_err, float(np.linalg.norm(resid)), tuple(flags))


@dataclass(frozen=True)
class Geometry:
    area: float  # cm^2
    interaction_volume: float  # cm^3

    def __post_init__(self):
        if not (self.area > 0 and self.interaction_volume > 0):
            raise DomainError("area and volume must be positive")

    @classmethod
    def from_beam(cls, waist_um=DEFAULT_WAIST, effective_length=DEFAULT_EFFECTIVE_LENGTH):
        area = math.pi * (waist_um * 1e-4) ** 2
        return cls(area, area * effective_length)

    @property
    def effective_length(self):
        return self.interaction_volume / self.area


def cross_section(m, C, g):
    """sigma_e = (m / C) * A / (V0 * N_A), C in mol/L, result in cm^2/molecule."""
    m = np.asarray(m, dtype=float)
    C = np.asarray(C, dtype=float)
    if np.any(C <= 0):
        raise DomainError("concentration must be positive")
    if np.any(m < 0):
        raise DomainError("slope must be non-negative")
    molecules_per_cm3 = C * AVOGADRO / 1000.0
    out = m / molecules_per_cm3 * g.area / g.interaction_volume
    return float(out) if out.ndim == 0 else out


def effective_length_from(m, C, sigma_e):
    """Interaction length (cm) implied by a reported (m, C, sigma_e) triple."""
    return np.asarray(m, float) * 1000.0 / (np.asarray(C, float) * AVOGADRO * np.asarray(sigma_e, float))


@dataclass(frozen=True)
class Consistency:
    ratio_spread: float
    is_intensive: bool
    orders_of_magnitude: float


def consistency_check(rows, threshold=0.5):
    """Is m/C constant across concentrations, as an intensive sigma_e requires?"""
    rows = list(rows)
    if len(rows) < 3:
        raise ContractError("consistency check needs at least three concentrations")
    ratios = np.array([m / c for m, c in rows], dtype=float)
    spread = float(np.std(ratios) / np.mean(ratios)) if np.mean(ratios) != 0 else math.inf
    positive = ratios[ratios > 0]
    orders = float(np.log10(positive.max() / positive.min())) if positive.size else 0.0
    return Consistency(spread, spread < threshold, orders)


def predict_tpa_rate(phi, sigma_e, delta_c=0.0):
    """Entangled (linear) plus classical (quadratic) two-photon absorption rate."""
    phi = np.asarray(phi, dtype=float)
    if np.any(phi < 0) or sigma_e < 0 or delta_c < 0:
        raise DomainError("inputs must be non-negative")
    return sigma_e * phi + delta_c * phi**2


def discriminate(m_zero, m_long, v_sol, v_sam, anova_p_visibility, ratio_threshold=0.5, p_threshold=0.05):
    """Classify the absorption signal from its delay dependence and visibility change.

    ``v_sol``/``v_sam`` are sequences of (value, sigma) pairs; they are
    required but the decision itself uses the ANOVA p-value computed from
    them. An undefined p-value (identical visibilities) counts as no change.
    """
    if m_zero is None or m_long is None or v_sol is None or v_sam is None:
        raise ContractError("discrimination needs both delay slopes and both visibility sets")
    if len(v_sol) == 0 or len(v_sam) == 0:
        raise ContractError("visibility sets must be nonempty")
    p = 1.0 if anova_p_visibility is None or math.isnan(anova_p_visibility) else anova_p_visibility
    if not m_zero > 0:
        return Verdict.INCONCLUSIVE
    ratio = m_long / m_zero
    if ratio > ratio_threshold and p > p_threshold:
        return Verdict.LINEAR_LOSS_ARTIFACT
    if ratio < ratio_threshold and p <= p_threshold:
        return Verdict.CANDIDATE_ETPA
    return Verdict.INCONCLUSIVE


@dataclass
class EtpaReport:
    rows: list = field(default_factory=list)
    consistency: dict = field(default_factory=dict)
    anova: dict = field(default_factory=dict)
    dips: list = field(default_factory=list)
    slope_ratio: float = None
    verdict: Verdict = Verdict.INCONCLUSIVE
    geometry: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    errors: list = field(default_factory=list)  # scans rejected by a fit precondition

    def to_dict(self):
        return {
            "rows": self.rows,
            "consistency": self.consistency,
            "anova": self.anova,
            "dips": self.dips,
            "slope_ratio": self.slope_ratio,
            "verdict": self.verdict.value,
            "geometry": self.geometry,
            "flags": self.flags,
            "notes": self.notes,
            "errors": self.errors,
            "uncertainty_convention": "1 sigma",
        }

    def to_table(self):
        lines = []
        head = f"{'C [M]':>10} | {'m(0 fs)':>18} | {'sigma_e(0 fs)':>13} | {'m(long)':>18} | {'sigma_e(long)':>13}"
        lines += [head, "-" * len(head)]
        for r in self.rows:
            lines.append(
                f"{_fmt_c(r['concentration']):>10} | {_fmt_pm(r['m_zero'], r['m_zero_err'])}"
                f" | {_fmt(r['sigma_e_zero']):>13} | {_fmt_pm(r['m_long'], r['m_long_err'])}"
                f" | {_fmt(r['sigma_e_long']):>13}"
            )
        if self.dips:
            lines.append("")
            head = f"{'scan':<28} {'role':<8} {'V [%]':>13} {'R_max':>14} {'R_min':>14}"
            lines += [head, "-" * len(head)]
            for d in self.dips:
                f = d["fit"]
                lines.append(
                    f"{d['label']:<28} {d['role']:<8} {100 * f['visibility']:6.1f} +/- {100 * f['visibility_err']:3.1f}"
                    f" {f['r_max']:7.0f} +/- {f['r_max_err']:4.0f} {f['r_min']:7.0f} +/- {f['r_min_err']:4.0f}"
                )
        lines.append("")
        if self.consistency:
            c = self.consistency
            lines.append(f"m/C relative spread {c['ratio_spread']:.3g} over {c['orders_of_magnitude']:.1f} decades;"
                         f" intensive: {c['is_intensive']}")
        for name, res in sorted(self.anova.items()):
            if res is not None:
                lines.append(f"ANOVA {name}: F={res['F']}, p={res['p']}")
        if self.slope_ratio is not None:
            lines.append(f"median m(long)/m(0 fs): {self.slope_ratio:.3f}")
        lines.append(f"verdict: {self.verdict.value}")
        lines += [f"flag: {f}" for f in self.flags]
        lines += [f"note: {n}" for n in self.notes]
        lines += [f"error: {e}" for e in self.errors]
        return "\n".join(lines) + "\n"


def _fmt(x):
    return "-" if x is None else f"{x:.3e}"


def _fmt_c(c):
    return "-" if c is None else f"{c:.3g}"


def _fmt_pm(x, e):
    return f"{'-':>18}" if x is None else f"{x:>8.4f} +/- {e:<6.4f}"


def _power_rows(power_scans, geometry):
    by_label = {}
    for scan in power_scans:
        by_label.setdefault(scan.label, {})[scan.delay_setting] = scan
    rows, flags, errors = [], [], []
    for label, scans in by_label.items():
        if 0.0 not in scans:
            flags.append(f"{label}: no zero-delay power scan")
            continue
        long_delays = sorted(d for d in scans if abs(d) >= PLATEAU_THRESHOLD)
        conc = scans[0.0].metadata.get("concentration")
        try:
            s0 = slope_fit(scans[0.0])
            sl = slope_fit(scans[long_delays[-1]]) if long_delays else None
        except ContractError as exc:
            errors.append(f"{label}: {exc}")
            continue
        flags += [f"{label} @0 fs: {f}" for f in s0.flags]
        if sl is not None:
            flags += [f"{label} @{long_delays[-1]:g} fs: {f}" for f in sl.flags]
        row = {
            "label": label,
            "concentration": None if conc is None else float(conc),
            "m_zero": s0.m,
            "m_zero_err": s0.m_err,
            "long_delay": long_delays[-1] if long_delays else None,
            "m_long": None if sl is None else sl.m,
            "m_long_err": None if sl is None else sl.m_err,
            "sigma_e_zero": None,
            "sigma_e_long": None,
        }
        if conc:
            row["sigma_e_zero"] = cross_section(max(s0.m, 0.0), conc, geometry)
            if sl is not None:
                row["sigma_e_long"] = cross_section(max(sl.m, 0.0), conc, geometry)
        rows.append(row)
    rows.sort(key=lambda r: (r["concentration"] is None, r["concentration"] or 0.0, r["label"]))
    return rows, flags, errors


def build_report(power_scans=(), delay_scans=(), geometry=None, ratio_threshold=0.5, p_threshold=0.05,
                 consistency_threshold=0.5):
    """Chain slope fits, cross-sections, dip fits and statistics into one report."""
    geometry = geometry or Geometry.from_beam()
    report = EtpaReport(geometry={
        "area_cm2": geometry.area,
        "interaction_volume_cm3": geometry.interaction_volume,
        "effective_length_cm": geometry.effective_length,
        "area_convention": "A = pi * w0^2",
    })
    rows, flags, errors = _power_rows(power_scans, geometry)
    report.rows = rows
    report.flags += flags
    report.errors += errors

    with_c = [r for r in rows if r["concentration"]]
    if len(with_c) >= 3:
        c0 = consistency_check([(r["m_zero"], r["concentration"]) for r in with_c], consistency_threshold)
        report.consistency = {"ratio_spread": c0.ratio_spread, "is_intensive": c0.is_intensive,
                              "orders_of_magnitude": c0.orders_of_magnitude, "threshold": consistency_threshold}
    paired = [r for r in with_c if r["sigma_e_long"] and r["sigma_e_zero"]]
    if len(paired) >= 2:
        zero = np.array([r["sigma_e_zero"] for r in paired])
        long = np.array([r["sigma_e_long"] for r in paired])
        report.anova["sigma_e_log10"] = anova_oneway([np.log10(zero), np.log10(long)]).to_dict()
        report.anova["sigma_e_raw"] = anova_oneway([zero, long]).to_dict()
        report.notes.append("sigma_e ANOVA groups: delay 0 fs vs long delay, primary test on log10(sigma_e)")

    v_sol, v_sam = [], []
    for scan in delay_scans:
        try:
            fit = fit_dip(scan)
        except ContractError as exc:
            report.errors.append(f"{scan.label}: {exc}")
            continue
        role = scan.metadata.get("role", "sample")
        report.flags += [f"{scan.label}: {f}" for f in fit.flags]
        (v_sol if role == "solvent" else v_sam).append((fit.visibility, fit.visibility_err))
        report.dips.append({
            "label": scan.label,
            "role": role,
            "group": scan.metadata.get("group", ""),
            "fit": fit.to_dict(),
            "delays": scan.delays.tolist(),
            "rates": scan.rates.tolist(),
            "normalized": (scan.rates / fit.r_max).tolist() if fit.r_max > 0 else [],
        })
    p_vis = None
    if len(v_sol) >= 2 and len(v_sam) >= 2:
        res = anova_oneway([[v for v, _ in v_sol], [v for v, _ in v_sam]])
        report.anova["visibility"] = res.to_dict()
        p_vis = res.p

    ratios = [r["m_long"] / r["m_zero"] for r in rows if r["m_long"] is not None and r["m_zero"] > 0]
    if ratios:
        report.slope_ratio = float(np.median(ratios))
    have_slopes = any(r["m_long"] is not None for r in rows)
    if have_slopes and "visibility" in report.anova:
        m_zero = float(np.median([r["m_zero"] for r in rows]))
        m_long = report.slope_ratio * m_zero if report.slope_ratio is not None else 0.0
        report.verdict = discriminate(m_zero, m_long, v_sol, v_sam, p_vis, ratio_threshold, p_threshold)
    else:
        report.flags.append("insufficient data for a verdict (need power scans at two delays "
                            "and at least two solvent and two sample delay scans)")
    return report
