"""Loss and absorption mechanisms acting on the two-photon state.

User-facing knobs are intensity quantities (transmission T, extinction);
internally every one-photon mechanism is an amplitude transmission t(w)
applied to both photons, so a flat sample of transmission T passes a pair
with probability T**2.
"""

from dataclasses import dataclass, field
from functools import lru_cache
import math
from typing import Callable, Optional
import warnings

import numpy as np

from .biphoton import JointSpectralAmplitude
from .errors import ContractError, DomainError, OpaqueSampleError
from .units import FWHM_PER_SIGMA, bandwidth_nm_to_omega, omega_to_wavelength, wavelength_to_omega

OPAQUE_LIMIT = 1e-12
SOLVENTS = ("Methanol", "Ethanol", "Chloroform", "EthyleneGlycol")
WINDOW_TAPER = 30.0  # fs


@dataclass(frozen=True)
class SampleModel:
    """One-photon amplitude transmission plus optional two-photon transfer.

    ``one_photon_transmission`` maps absolute angular frequency (rad/fs) to
    amplitude transmission; ``two_photon_transfer`` maps the pair's sum
    frequency to the two-photon transfer g. When ``coincidence_window`` (fs) is
    set, g only acts on the part of the pair wavefunction whose arrival-time
    difference lies inside the window.
    """

    label: str
    one_photon_transmission: Optional[Callable] = None
    two_photon_transfer: Optional[Callable] = None
    coincidence_window: Optional[float] = None
    kind: str = "custom"
    params: dict = field(default_factory=dict, compare=False)
    notes: tuple = ()

    def __post_init__(self):
        if not self.label:
            raise DomainError("sample label must be nonempty")
        if self.coincidence_window is not None and not self.coincidence_window > WINDOW_TAPER:
            raise DomainError(f"coincidence window must exceed the {WINDOW_TAPER:g} fs taper")

    @property
    def delay_dependent(self):
        return self.two_photon_transfer is not None and self.coincidence_window is not None

    @property
    def is_identity(self):
        return self.one_photon_transmission is None and self.two_photon_transfer is None


def _checked(values, what):
    values = np.asarray(values, dtype=float)
    if np.any(values < -1e-15) or np.any(values > 1 + 1e-12):
        raise DomainError(f"{what} must lie in [0, 1] on the grid")
    return values


def identity(label="identity"):
    return SampleModel(label, kind="identity")


def flat_attenuator(T, label=None):
    """Frequency-independent loss with per-photon intensity transmission `T`."""
    if not 0 < T <= 1:
        raise DomainError("flat transmission must lie in (0, 1]")
    if T == 1:
        return SampleModel(label or "flat T=1", kind="flat", params={"transmission": 1.0})
    amp = math.sqrt(T)
    return SampleModel(
        label or f"flat T={T:g}",
        one_photon_transmission=lambda w: np.full(np.shape(w), amp),
        kind="flat",
        params={"transmission": float(T)},
    )


@dataclass(frozen=True)
class SolutionSpec:
    concentration: float  # mol/L
    path_length: float = 1.0  # cm
    solvent: str = "Methanol"

    def __post_init__(self):
        if self.concentration < 0:
            raise DomainError("concentration must be non-negative")
        if not self.path_length > 0:
            raise DomainError("path length must be positive")
        if self.solvent not in SOLVENTS:
            raise DomainError(f"unknown solvent {self.solvent!r}")


def beer_lambert_absorber(peak_extinction, band_center, band_fwhm, sol, label=None):
    """Gaussian absorption band with pair transmission 10**(-eps C L) at the band.

    Each photon sees T(w) = 10**(-eps(w) C L / 2), so a degenerate pair at
    wavelength w carries the full decadic optical depth eps(w) C L.
    """
    if peak_extinction < 0 or not band_center > 0 or not band_fwhm > 0:
        raise DomainError("absorber parameters must be positive")
    params = dict(peak_extinction=peak_extinction, band_center=band_center, band_fwhm=band_fwhm,
                  concentration=sol.concentration, path_length=sol.path_length, solvent=sol.solvent)
    label = label or f"absorber C={sol.concentration:g} M"
    if sol.concentration == 0 or peak_extinction == 0:
        return SampleModel(label, kind="absorber", params=params)
    sigma = band_fwhm / FWHM_PER_SIGMA
    optical_depth = sol.concentration * sol.path_length

    def t(w):
        lam = omega_to_wavelength(w)
        eps = peak_extinction * np.exp(-((lam - band_center) ** 2) / (2 * sigma**2))
        return 10.0 ** (-eps * optical_depth / 2.0)

    return SampleModel(label, one_photon_transmission=t, kind="absorber", params=params)


def extinction_at(peak_extinction, band_center, band_fwhm, wavelength):
    """Molar extinction of the Gaussian band at `wavelength` (L/(mol cm))."""
    sigma = band_fwhm / FWHM_PER_SIGMA
    return peak_extinction * math.exp(-((wavelength - band_center) ** 2) / (2 * sigma**2))


@dataclass(frozen=True)
class NanoparticleSpec:
    mass_concentration: float  # mg per 10 mL
    diameter: float = 10.0  # nm
    material_density: float = 2.2  # g/cm^3
    effective_diameter: Optional[float] = None  # nm, defaults to diameter

    def __post_init__(self):
        if self.mass_concentration < 0 or not self.diameter > 0 or not self.material_density > 0:
            raise DomainError("nanoparticle parameters must be positive")
        if self.effective_diameter is None:
            object.__setattr__(self, "effective_diameter", self.diameter)
        if self.effective_diameter < self.diameter:
            raise DomainError("effective diameter must be >= the monomer diameter")

    @property
    def number_density(self):
        """Scatterers per cm^3, with mass grouped into effective-diameter spheres."""
        grams_per_cm3 = self.mass_concentration * 1e-3 / 10.0
        d_cm = self.effective_diameter * 1e-7
        return grams_per_cm3 / (self.material_density * math.pi / 6.0 * d_cm**3)


def rayleigh_cross_section(diameter_nm, wavelength_nm, relative_index):
    """Rayleigh scattering cross-section of a sphere, in cm^2."""
    d = diameter_nm * 1e-7
    lam = np.asarray(wavelength_nm, dtype=float) * 1e-7
    m2 = relative_index**2
    return 2.0 * math.pi**5 / 3.0 * d**6 / lam**4 * ((m2 - 1) / (m2 + 2)) ** 2


def rayleigh_extinction(spec, relative_index, wavelength, path):
    """Per-photon optical depth n * sigma_s * L."""
    return spec.number_density * rayleigh_cross_section(spec.effective_diameter, wavelength, relative_index) * path


def rayleigh_scatterer(spec, relative_index=1.10, wavelength=806.0, path=1.0, label=None):
    """Scattering loss exp(-n sigma_s(w) L) keeping the lambda^-4 slope across the grid."""
    valid = spec.effective_diameter <= wavelength / 10.0
    notes = ()
    if not valid:
        msg = (f"effective diameter {spec.effective_diameter:g} nm exceeds lambda/10; "
               "Rayleigh regime assumed anyway (aggregate stand-in for the monomer)")
        warnings.warn(msg, RuntimeWarning)
        notes = (msg,)
    params = dict(mass_concentration=spec.mass_concentration, diameter=spec.diameter,
                  material_density=spec.material_density, effective_diameter=spec.effective_diameter,
                  relative_index=relative_index, wavelength=wavelength, path_length=path,
                  rayleigh_valid=valid,
                  extinction=float(rayleigh_extinction(spec, relative_index, wavelength, path)))
    label = label or f"SiO2 {spec.mass_concentration:g} mg/10mL"
    if spec.mass_concentration == 0:
        return SampleModel(label, kind="nanoparticle", params=params, notes=notes)

    def t(w):
        od = rayleigh_extinction(spec, relative_index, omega_to_wavelength(w), path)
        return np.exp(-od / 2.0)

    return SampleModel(label, one_photon_transmission=t, kind="nanoparticle", params=params, notes=notes)


def etpa_notch(depth, center_sum_wavelength=403.0, notch_fwhm=1.0, coincidence_window=None, label=None):
    """Two-photon notch g(w1+w2) = 1 - depth * exp(-(ws - wf)^2 / (2 sf^2)).

    `center_sum_wavelength` and `notch_fwhm` refer to the sum frequency
    expressed as a wavelength (the pump-like wavelength). With a
    `coincidence_window` the notch is time-local: photons arriving further
    apart than the window pass unaffected.
    """
    if not 0 <= depth <= 1:
        raise DomainError("notch depth must lie in [0, 1]")
    if not notch_fwhm > 0:
        raise DomainError("notch width must be positive")
    params = dict(depth=depth, center_sum_wavelength=center_sum_wavelength, notch_fwhm=notch_fwhm,
                  coincidence_window=coincidence_window)
    label = label or f"ETPA notch depth={depth:g}"
    if depth == 0:
        return SampleModel(label, kind="notch", params=params)
    wf = float(wavelength_to_omega(center_sum_wavelength))
    sf = bandwidth_nm_to_omega(notch_fwhm, center_sum_wavelength) / FWHM_PER_SIGMA

    def g(ws):
        return 1.0 - depth * np.exp(-((ws - wf) ** 2) / (2 * sf**2))

    return SampleModel(label, two_photon_transfer=g, coincidence_window=coincidence_window,
                       kind="notch", params=params)


def compose(*samples, label=None):
    """Samples traversed in sequence (transmissions multiply)."""
    parts = [s for s in samples if not s.is_identity]
    label = label or " + ".join(s.label for s in samples)
    params = {"parts": [dict(kind=s.kind, label=s.label, **s.params) for s in samples]}
    notes = tuple(n for s in samples for n in s.notes)
    ones = [s.one_photon_transmission for s in parts if s.one_photon_transmission is not None]
    twos = [s for s in parts if s.two_photon_transfer is not None]
    if len(twos) > 1:
        raise ContractError("at most one two-photon transfer per composite sample")

    def t(w):
        out = np.ones(np.shape(w))
        for fn in ones:
            out = out * fn(w)
        return out

    return SampleModel(
        label,
        one_photon_transmission=t if ones else None,
        two_photon_transfer=twos[0].two_photon_transfer if twos else None,
        coincidence_window=twos[0].coincidence_window if twos else None,
        kind="composite",
        params=params,
        notes=notes,
    )


def window_function(dt, half_width, taper=WINDOW_TAPER):
    """Flat-top acceptance in arrival-time difference with a cos^2 edge."""
    a = np.abs(dt)
    inner = half_width - taper
    w = np.where(a <= inner, 1.0, 0.0)
    edge = (a > inner) & (a < half_width)
    w[edge] = np.cos(0.5 * np.pi * (a[edge] - inner) / taper) ** 2
    return w


def _time_difference(grid):
    n = grid.n_points
    t = 2.0 * np.pi * np.fft.fftfreq(n, d=grid.step)
    period = 2.0 * np.pi / grid.step
    dt = t[:, None] - t[None, :]
    return (dt + period / 2) % period - period / 2


@lru_cache(maxsize=8)
def _window_on_grid(grid, half_width):
    w = window_function(_time_difference(grid), half_width)
    w.setflags(write=False)
    return w


def propagate(jsa, sample, delay=0.0):
    """Unnormalised amplitude after delaying photon 2 by `delay` and crossing `sample`."""
    grid = jsa.grid
    f = jsa.amplitude
    nu = grid.detuning
    if delay:
        f = f * np.exp(-1j * nu[None, :] * delay)
    if sample.two_photon_transfer is not None:
        ws = jsa.omega1[:, None] + jsa.omega2[None, :]
        g = _checked(sample.two_photon_transfer(ws), "two-photon transfer")
        if sample.coincidence_window is None:
            f = g * f
        else:
            lost = np.fft.ifft2((1.0 - g) * f)
            lost *= _window_on_grid(grid, sample.coincidence_window)
            f = f - np.fft.fft2(lost)
    if sample.one_photon_transmission is not None:
        t1 = _checked(sample.one_photon_transmission(jsa.omega1), "one-photon transmission")
        t2 = _checked(sample.one_photon_transmission(jsa.omega2), "one-photon transmission")
        f = t1[:, None] * t2[None, :] * f
    return f


def apply_sample(jsa, sample, delay=0.0):
    """Filtered, renormalised JSA and the pair transmission.

    ``f' = t(w1) t(w2) g(w1 + w2) f`` for delay-independent samples.
    """
    if sample.is_identity and not delay:
        return jsa, 1.0
    f = propagate(jsa, sample, delay)
    t = float(np.sum(np.abs(f) ** 2) * jsa.d_area / jsa.norm)
    if t < OPAQUE_LIMIT:
        raise OpaqueSampleError(f"sample {sample.label!r} is opaque (pair transmission {t:.1e})")
    return JointSpectralAmplitude(jsa.grid, f / np.sqrt(t * jsa.norm)), t


def sample_from_spec(spec):
    """Build a SampleModel from a sample-library entry.

    Entry keys: ``kind`` (flat | absorber | nanoparticle | notch | composite |
    identity), optional ``label`` and the kind's parameters:

    flat: transmission (per-photon intensity)
    absorber: peak_extinction [L/(mol cm)], band_center [nm], band_fwhm [nm],
        concentration [mol/L], path_length [cm], solvent
    nanoparticle: mass_concentration [mg/10 mL], diameter [nm],
        material_density [g/cm^3], effective_diameter [nm],
        relative_index, wavelength [nm], path_length [cm]
    notch: depth, center_sum_wavelength [nm], notch_fwhm [nm],
        coincidence_window [fs]
    composite: parts (list of entries)
    """
    spec = dict(spec)
    kind = spec.pop("kind", None)
    label = spec.pop("label", None)
    try:
        sample = _build(kind, label, spec)
    except KeyError as exc:
        raise ContractError(f"sample entry of kind {kind!r} is missing {exc.args[0]!r}") from None
    if spec:
        raise ContractError(f"unknown keys for sample kind {kind!r}: {sorted(spec)}")
    return sample


def _build(kind, label, spec):
    if kind == "identity":
        return identity(label or "identity")
    if kind == "flat":
        return flat_attenuator(float(spec.pop("transmission")), label=label)
    if kind == "absorber":
        sol = SolutionSpec(float(spec.pop("concentration")), float(spec.pop("path_length", 1.0)),
                           spec.pop("solvent", "Methanol"))
        return beer_lambert_absorber(float(spec.pop("peak_extinction")), float(spec.pop("band_center")),
                                     float(spec.pop("band_fwhm")), sol, label=label)
    if kind == "nanoparticle":
        eff = spec.pop("effective_diameter", None)
        np_spec = NanoparticleSpec(float(spec.pop("mass_concentration")), float(spec.pop("diameter", 10.0)),
                                   float(spec.pop("material_density", 2.2)),
                                   None if eff is None else float(eff))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return rayleigh_scatterer(np_spec, float(spec.pop("relative_index", 1.10)),
                                      float(spec.pop("wavelength", 806.0)),
                                      float(spec.pop("path_length", 1.0)), label=label)
    if kind == "notch":
        window = spec.pop("coincidence_window", None)
        return etpa_notch(float(spec.pop("depth")), float(spec.pop("center_sum_wavelength", 403.0)),
                          float(spec.pop("notch_fwhm", 1.0)),
                          None if window is None else float(window), label=label)
    if kind == "composite":
        parts = [sample_from_spec(p) for p in spec.pop("parts")]
        return compose(*parts, label=label)
    raise ContractError(f"unknown sample kind {kind!r}")
