"""Type-II SPDC joint spectral amplitude on a discrete two-frequency grid.

The amplitude is ``f(w1, w2) = pump(w1 + w2) * phasematch(w1, w2)``. Both
axes share one detuning grid centred on the degenerate frequency so that the
exchange ``f(w2, w1)`` is a plain transpose; all arithmetic is done on
detunings to avoid cancellation at optical frequencies.
"""

from dataclasses import dataclass, field, replace
import warnings

import numpy as np

from .errors import ContractError, DomainError, TruncationError
from .units import (
    FWHM_PER_SIGMA,
    bandwidth_nm_to_omega,
    bandwidth_omega_to_nm,
    fwhm,
    omega_to_wavelength,
    wavelength_to_omega,
)

CW = "CW"
PULSED = "Pulsed"
SINC = "sinc"
GAUSSIAN = "gaussian"

# exp(-g x^2) has the same intensity FWHM as sinc(x)^2 for this g
_GAUSS_MATCH = np.log(2.0) / (2.0 * 1.391557377**2)

BOUNDARY_MASS_LIMIT = 1e-6


@dataclass(frozen=True)
class PumpEnvelope:
    center_wavelength: float = 403.0  # nm
    fwhm_bandwidth: float = 1.0  # nm, intensity FWHM
    regime: str = CW

    def __post_init__(self):
        if self.regime not in (CW, PULSED):
            raise DomainError(f"unknown pump regime {self.regime!r}")
        if not self.center_wavelength > 0:
            raise DomainError("pump center wavelength must be positive")
        if not self.fwhm_bandwidth > 0:
            raise DomainError("pump bandwidth must be positive")
        if self.regime == CW and self.fwhm_bandwidth > 2.0:
            raise DomainError("CW pump bandwidth must not exceed 2 nm")

    @property
    def center_omega(self):
        return float(wavelength_to_omega(self.center_wavelength))

    @property
    def sigma_omega(self):
        """Standard deviation of the pump intensity spectrum (rad/fs)."""
        return bandwidth_nm_to_omega(self.fwhm_bandwidth, self.center_wavelength) / FWHM_PER_SIGMA


@dataclass(frozen=True)
class PhaseMatch:
    """Linearised phase matching ``L/2 * (gs*(v1 - d/2) + gi*(v2 + d/2))``.

    ``group_delay_signal``/``group_delay_idler`` are the inverse group velocity
    mismatches to the pump (fs/mm); ``nondegeneracy`` is the signal-idler
    centre splitting in nm (signal on the blue side).
    """

    # Defaults calibrated so the free-space CW dip has V = 0.58 and FWHM = 79 fs
    # (sum gs + gi held at 80 fs/mm; see hometpa.protocols.calibrate_phase_match)
    crystal_length: float = 1.0  # mm
    group_delay_signal: float = 103.06402461  # fs/mm
    group_delay_idler: float = -23.06402461  # fs/mm
    profile: str = SINC
    nondegeneracy: float = 7.38709694  # nm

    def __post_init__(self):
        if self.profile not in (SINC, GAUSSIAN):
            raise DomainError(f"unknown phase-matching profile {self.profile!r}")
        if not self.crystal_length > 0:
            raise DomainError("crystal length must be positive")
        if self.group_delay_signal == self.group_delay_idler:
            raise DomainError("signal and idler group delays must differ")

    @property
    def sum_coefficient(self):
        """Phase-matching argument per unit sum detuning (fs)."""
        return self.crystal_length * (self.group_delay_signal + self.group_delay_idler) / 4.0

    @property
    def difference_coefficient(self):
        """Phase-matching argument per unit difference detuning (fs)."""
        return self.crystal_length * (self.group_delay_signal - self.group_delay_idler) / 4.0

    def splitting_omega(self, degenerate_wavelength):
        return bandwidth_nm_to_omega(self.nondegeneracy, degenerate_wavelength)

    def __call__(self, nu1, nu2, degenerate_wavelength):
        split = self.splitting_omega(degenerate_wavelength)
        x = 0.5 * self.crystal_length * (
            self.group_delay_signal * (nu1 - split / 2) + self.group_delay_idler * (nu2 + split / 2)
        )
        if self.profile == SINC:
            return np.sinc(x / np.pi)
        return np.exp(-_GAUSS_MATCH * x**2)


@dataclass(frozen=True)
class FrequencyGrid:
    center_signal: float  # rad/fs
    center_idler: float  # rad/fs
    span: float  # rad/fs, per axis
    n_points: int = 512

    def __post_init__(self):
        n = self.n_points
        if n < 64 or n & (n - 1):
            raise DomainError("n_points must be a power of two >= 64")
        if not self.span > 0:
            raise DomainError("grid span must be positive")

    @classmethod
    def degenerate(cls, pump_wavelength, span, n_points=512):
        w0 = float(wavelength_to_omega(2.0 * pump_wavelength))
        return cls(w0, w0, span, n_points)

    @classmethod
    def for_source(cls, pump, pm, n_points=512, span_factor=8.0):
        """Grid spanning `span_factor` times the expected marginal FWHM."""
        q = abs(pm.difference_coefficient)
        # sinc^2(2 q v) halves at |2 q v| = 1.3916
        marginal = 2 * 1.391557377 / (2 * q)
        spread = max(marginal, pump.sigma_omega * FWHM_PER_SIGMA)
        return cls.degenerate(pump.center_wavelength, span_factor * spread, n_points)

    @property
    def step(self):
        return self.span / self.n_points

    @property
    def detuning(self):
        return (np.arange(self.n_points) - self.n_points // 2) * self.step

    @property
    def shared_axis(self):
        return self.center_signal == self.center_idler

    def refined(self, factor=2):
        return FrequencyGrid(self.center_signal, self.center_idler, self.span, self.n_points * factor)


@dataclass(frozen=True, eq=False)
class JointSpectralAmplitude:
    grid: FrequencyGrid
    amplitude: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = np.array(self.amplitude, dtype=complex)
        n = self.grid.n_points
        if a.shape != (n, n):
            raise ContractError(f"amplitude shape {a.shape} does not match grid {n}x{n}")
        if not np.all(np.isfinite(a)):
            raise ContractError("amplitude contains non-finite entries")
        a.setflags(write=False)
        object.__setattr__(self, "amplitude", a)

    @property
    def d_area(self):
        return self.grid.step**2

    @property
    def omega1(self):
        return self.grid.center_signal + self.grid.detuning

    @property
    def omega2(self):
        return self.grid.center_idler + self.grid.detuning

    @property
    def norm(self):
        return float(np.sum(np.abs(self.amplitude) ** 2) * self.d_area)

    @property
    def intensity(self):
        return np.abs(self.amplitude) ** 2

    def normalized(self):
        return JointSpectralAmplitude(self.grid, self.amplitude / np.sqrt(self.norm))

    def boundary_mass(self):
        jsi = self.intensity
        ring = jsi[0].sum() + jsi[-1].sum() + jsi[1:-1, 0].sum() + jsi[1:-1, -1].sum()
        return float(ring * self.d_area / self.norm)

    def swapped(self):
        if not self.grid.shared_axis:
            raise ContractError("exchange requires identical signal and idler axes")
        return JointSpectralAmplitude(self.grid, self.amplitude.T)


def build_jsa(pump, pm, grid):
    """Normalised JSA for the given pump, phase matching and grid.

    Raises TruncationError when more than 1e-6 of the probability sits on the
    outermost ring of grid cells.
    """
    nu = grid.detuning
    nu1, nu2 = np.meshgrid(nu, nu, indexing="ij")
    # pump detuning from exact energy conservation at the grid centres
    offset = grid.center_signal + grid.center_idler - pump.center_omega
    nu_sum = nu1 + nu2 + offset
    pump_amp = np.exp(-(nu_sum**2) / (4.0 * pump.sigma_omega**2))
    degenerate = 2.0 * pump.center_wavelength
    f = pump_amp * pm(nu1 + grid.center_signal - 0.5 * pump.center_omega,
                      nu2 + grid.center_idler - 0.5 * pump.center_omega, degenerate)
    norm = np.sum(np.abs(f) ** 2) * grid.step**2
    if not norm > 0:
        raise TruncationError("phase-matched emission lies outside the grid")
    jsa = JointSpectralAmplitude(grid, f / np.sqrt(norm))
    if pm.profile == SINC:
        # sinc tails fall off as 1/x^2 and always reach the edge; test containment
        # of the emission band with the width-matched Gaussian envelope instead
        envelope = pump_amp * replace(pm, profile=GAUSSIAN)(
            nu1 + grid.center_signal - 0.5 * pump.center_omega,
            nu2 + grid.center_idler - 0.5 * pump.center_omega, degenerate)
        mass = JointSpectralAmplitude(grid, envelope).boundary_mass()
    else:
        mass = jsa.boundary_mass()
    if mass > BOUNDARY_MASS_LIMIT:
        raise TruncationError(f"grid too narrow: {mass:.2e} of the pair probability on the boundary")
    return jsa


def marginal(jsa, photon=1):
    """Single-photon spectral density on the detuning axis."""
    axis = 1 if photon == 1 else 0
    return jsa.intensity.sum(axis=axis) * jsa.grid.step


def marginal_bandwidth(jsa, photon=1):
    """FWHM in nm of one photon's marginal spectrum, at its mean wavelength."""
    density = marginal(jsa, photon)
    nu = jsa.grid.detuning
    width, multimodal = fwhm(nu, density)
    if multimodal:
        warnings.warn("marginal spectrum is multimodal; reporting the widest crossing", RuntimeWarning)
    center = jsa.grid.center_signal if photon == 1 else jsa.grid.center_idler
    mean = center + np.sum(nu * density) / np.sum(density)
    return bandwidth_omega_to_nm(width, float(omega_to_wavelength(mean)))


def exchange_overlap(jsa):
    """Inner product of the JSA with its argument-swapped copy."""
    f = jsa.amplitude
    if not jsa.grid.shared_axis:
        raise ContractError("exchange requires identical signal and idler axes")
    return complex(np.sum(f * np.conj(f.T)) * jsa.d_area)


def sum_frequency_spread(jsa):
    """Standard deviation of (w1 + w2) under |f|^2, in rad/fs."""
    nu = jsa.grid.detuning
    s = nu[:, None] + nu[None, :]
    p = jsa.intensity / jsa.intensity.sum()
    mean = np.sum(p * s)
    return float(np.sqrt(np.sum(p * (s - mean) ** 2)))
