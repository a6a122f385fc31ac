"""Detector count records: expected rates, Poisson sampling and flux density."""

from dataclasses import dataclass, field
import hashlib
import math

import numpy as np

from .errors import ContractError, DomainError

PAPER_POWERS = (0.25, 43.9)  # mW, ladder end points


@dataclass(frozen=True)
class SourceRateModel:
    brightness: float  # coincidences / (s mW) before detection losses
    detection_pair_efficiency: float = 1.0
    beam_waist: float = 58.0  # um

    def __post_init__(self):
        if not self.brightness > 0:
            raise DomainError("brightness must be positive")
        if not 0 < self.detection_pair_efficiency <= 1:
            raise DomainError("detection efficiency must lie in (0, 1]")
        if not self.beam_waist > 0:
            raise DomainError("beam waist must be positive")

    @classmethod
    def from_reference(cls, rate, power, detection_pair_efficiency=1.0, beam_waist=58.0):
        """Model whose free-space plateau rate at `power` is `rate`."""
        return cls(rate / (power * detection_pair_efficiency), detection_pair_efficiency, beam_waist)


@dataclass(frozen=True, eq=False)
class HomScan:
    delays: np.ndarray
    counts: np.ndarray
    acquisition_time: float
    pump_power: float
    label: str
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        delays = np.asarray(self.delays, dtype=float)
        counts = np.asarray(self.counts, dtype=np.int64)
        if delays.shape != counts.shape:
            raise ContractError("delays and counts must have equal length")
        if np.any(counts < 0):
            raise ContractError("counts must be non-negative")
        if not self.acquisition_time > 0:
            raise ContractError("acquisition time must be positive")
        object.__setattr__(self, "delays", delays)
        object.__setattr__(self, "counts", counts)

    @property
    def rates(self):
        return self.counts / self.acquisition_time


@dataclass(frozen=True, eq=False)
class PowerScan:
    powers: np.ndarray
    counts_solvent: np.ndarray
    counts_sample: np.ndarray
    delay_setting: float
    acquisition_time: float
    label: str = ""
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        powers = np.asarray(self.powers, dtype=float)
        sol = np.asarray(self.counts_solvent, dtype=np.int64)
        sam = np.asarray(self.counts_sample, dtype=np.int64)
        if not (powers.shape == sol.shape == sam.shape):
            raise ContractError("power scan arrays must have equal length")
        if np.any(np.diff(powers) <= 0):
            raise ContractError("powers must be strictly increasing")
        if np.any(sol < 0) or np.any(sam < 0):
            raise ContractError("counts must be non-negative")
        if not self.acquisition_time > 0:
            raise ContractError("acquisition time must be positive")
        object.__setattr__(self, "powers", powers)
        object.__setattr__(self, "counts_solvent", sol)
        object.__setattr__(self, "counts_sample", sam)

    @property
    def rates_solvent(self):
        return self.counts_solvent / self.acquisition_time

    @property
    def rates_sample(self):
        return self.counts_sample / self.acquisition_time


def expected_rate(model, power, pair_transmission, nc):
    """Mean coincidence rate (counts/s); linear in pump power."""
    return model.brightness * np.asarray(power, dtype=float) * model.detection_pair_efficiency * pair_transmission * nc


def focal_area(waist_um):
    """Beam area pi*w0^2 in cm^2."""
    return math.pi * (waist_um * 1e-4) ** 2


def flux_density(rate, waist):
    """Photon-pair flux density (cm^-2 s^-1) for a rate through a waist in um."""
    return np.asarray(rate, dtype=float) / focal_area(waist)


def derive_seed(master, label):
    """Seed sequence that depends only on (master seed, label)."""
    digest = hashlib.sha256(str(label).encode()).digest()
    return np.random.SeedSequence([int(master), int.from_bytes(digest[:8], "little")])


def sample_counts(expected_rate, acquisition_time, seed):
    """Poisson counts with mean ``expected_rate * acquisition_time``."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    lam = np.asarray(expected_rate, dtype=float) * acquisition_time
    if np.any(lam < 0):
        raise DomainError("expected rate must be non-negative")
    return rng.poisson(lam)


def simulate_power_scan(model, profile_sol, profile_sam, powers, delay_setting, acq_time, seed, label="",
                        sample_gain=1.0, metadata=None):
    """Solvent and sample counts over a pump-power ladder at one delay.

    ``sample_gain`` multiplies the sample rate; it carries the optional
    phenomenological delay-correlated term and is 1 otherwise.
    """
    powers = np.asarray(powers, dtype=float)
    rng = np.random.default_rng(seed)
    sol = expected_rate(model, powers, 1.0, profile_sol.rate_factor(delay_setting))
    sam = expected_rate(model, powers, 1.0, profile_sam.rate_factor(delay_setting)) * sample_gain
    return PowerScan(
        powers,
        sample_counts(sol, acq_time, rng),
        sample_counts(sam, acq_time, rng),
        float(delay_setting),
        float(acq_time),
        label,
        dict(metadata or {}),
    )


def simulate_delay_scan(model, profile, power, acq_time, seed, label="", metadata=None):
    """Coincidence counts along the profile's delay axis at fixed pump power."""
    rate = expected_rate(model, power, 1.0, profile.rate_factors)
    counts = sample_counts(rate, acq_time, np.random.default_rng(seed))
    return HomScan(profile.delays, counts, float(acq_time), float(power), label, dict(metadata or {}))
