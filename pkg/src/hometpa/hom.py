"""HOM coincidence profile of a two-photon state versus relative delay."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, NoDipError
from .units import fwhm

PLATEAU_DELAY = 167.0  # fs, canonical R_max position
PLATEAU_THRESHOLD = 150.0  # fs, smallest |delay| treated as plateau


@dataclass(frozen=True, eq=False)
class DipProfile:
    """Plateau-normalised coincidence probability versus delay.

    ``pair_transmission`` holds the fraction of pairs surviving a sample at
    each delay (all ones without a sample); the detected rate scales with
    ``pair_transmission * normalized_coincidence``.
    """

    delays: np.ndarray
    normalized_coincidence: np.ndarray
    pair_transmission: np.ndarray = field(default=None)
    plateau_reference_delay: float = PLATEAU_DELAY

    def __post_init__(self):
        d = np.asarray(self.delays, dtype=float)
        nc = np.asarray(self.normalized_coincidence, dtype=float)
        t = np.ones_like(d) if self.pair_transmission is None else np.asarray(self.pair_transmission, float)
        if not (d.shape == nc.shape == t.shape):
            raise ContractError("profile arrays must have equal length")
        object.__setattr__(self, "delays", d)
        object.__setattr__(self, "normalized_coincidence", nc)
        object.__setattr__(self, "pair_transmission", t)

    def index(self, delay):
        hit = np.flatnonzero(np.isclose(self.delays, delay, atol=1e-9))
        if hit.size == 0:
            raise ContractError(f"profile does not contain delay {delay} fs")
        return int(hit[0])

    def value(self, delay):
        return float(self.normalized_coincidence[self.index(delay)])

    def rate_factor(self, delay):
        i = self.index(delay)
        return float(self.pair_transmission[i] * self.normalized_coincidence[i])

    @property
    def rate_factors(self):
        return self.pair_transmission * self.normalized_coincidence


def _check_delays(delays):
    delays = np.atleast_1d(np.asarray(delays, dtype=float))
    if not np.any(np.abs(delays) >= PLATEAU_THRESHOLD):
        raise ContractError(f"delays need at least one plateau point with |delay| >= {PLATEAU_THRESHOLD:g} fs")
    return delays


def exchange_kernel(jsa):
    """Collapse f(w1,w2) conj(f(w2,w1)) onto the difference-frequency diagonals.

    Returns ``(k, kernel)`` with ``w1 - w2 = k * step``. Summing the kernel
    against ``exp(i k step tau)`` is exactly the 2-D quadrature regrouped.
    """
    f = jsa.amplitude
    n = f.shape[0]
    prod = (f * np.conj(f.T)).ravel() * jsa.d_area
    i, j = np.indices((n, n))
    idx = (i - j).ravel() + n - 1
    kernel = np.bincount(idx, weights=prod.real, minlength=2 * n - 1) + 1j * np.bincount(
        idx, weights=prod.imag, minlength=2 * n - 1
    )
    return np.arange(-(n - 1), n), kernel


def interference_term(jsa, delays, method="diagonal"):
    """W(tau) = sum f(w1,w2) conj(f(w2,w1)) exp(i (w1-w2) tau) dA."""
    delays = np.atleast_1d(np.asarray(delays, dtype=float))
    step = jsa.grid.step
    if method == "diagonal":
        k, kernel = exchange_kernel(jsa)
        phase = np.exp(1j * np.outer(delays, k * step))
        return phase @ kernel
    if method == "direct":
        f = jsa.amplitude
        prod = f * np.conj(f.T) * jsa.d_area
        nu = jsa.grid.detuning
        diff = nu[:, None] - nu[None, :]
        return np.array([np.sum(prod * np.exp(1j * diff * tau)) for tau in delays])
    raise ValueError(f"unknown method {method!r}")


def coincidence_profile(jsa, delays, method="diagonal", plateau_reference_delay=PLATEAU_DELAY):
    """Normalised coincidence ``Nc(tau) = 1 - Re W(tau)`` of a normalised JSA."""
    delays = _check_delays(delays)
    jsa = jsa.normalized()
    nc = 1.0 - interference_term(jsa, delays, method).real
    return DipProfile(delays, nc, None, plateau_reference_delay)


def transmitted_profile(jsa, sample, delays, plateau_reference_delay=PLATEAU_DELAY):
    """Profile and pair survival of a state passing `sample` after the delay line.

    For samples whose action does not depend on the delay, the state is
    filtered once and the ordinary profile is used. Time-local samples are
    re-applied at every delay.
    """
    from .samples import apply_sample, propagate

    delays = _check_delays(delays)
    if not sample.delay_dependent:
        out, t = apply_sample(jsa, sample)
        prof = coincidence_profile(out, delays, plateau_reference_delay=plateau_reference_delay)
        return DipProfile(delays, prof.normalized_coincidence, np.full(delays.shape, t), plateau_reference_delay)
    jsa = jsa.normalized()
    trans = np.empty_like(delays)
    nc = np.empty_like(delays)
    for n, tau in enumerate(delays):
        f = propagate(jsa, sample, tau)
        norm = np.sum(np.abs(f) ** 2) * jsa.d_area
        overlap = np.sum(f * np.conj(f.T)) * jsa.d_area
        trans[n] = norm
        nc[n] = (norm - overlap.real) / norm if norm > 0 else 1.0
    return DipProfile(delays, nc, trans, plateau_reference_delay)


def visibility_from_rates(r_max, r_min):
    total = r_max + r_min
    if total == 0:
        raise ContractError("visibility undefined for R_max + R_min = 0")
    return (r_max - r_min) / total


def visibility(profile, max_delay=None, min_delay=0.0):
    """Visibility from the rates at the plateau reference and at zero delay."""
    if max_delay is None:
        max_delay = profile.plateau_reference_delay
    return visibility_from_rates(profile.rate_factor(max_delay), profile.rate_factor(min_delay))


def dip_fwhm(profile, noise_floor=1e-6):
    """Full width at half depth between the plateau level and the minimum."""
    d = profile.delays
    y = profile.rate_factors
    order = np.argsort(d)
    d, y = d[order], y[order]
    try:
        plateau = profile.rate_factor(profile.plateau_reference_delay)
    except ContractError:
        plateau = float(np.mean(y[np.abs(d) >= PLATEAU_THRESHOLD]))
    depth = plateau - y.min()
    if depth <= noise_floor * max(plateau, 1e-300):
        raise NoDipError("dip depth below noise floor")
    width, _ = fwhm(d, plateau - y)
    return width
