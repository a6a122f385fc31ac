"""Physical constants and unit conversions.

Internal units: time in fs, angular frequency in rad/fs, wavelength in nm.
"""

import numpy as np

SPEED_OF_LIGHT = 299.792458  # nm/fs
AVOGADRO = 6.02214076e23  # 1/mol
FWHM_PER_SIGMA = 2.0 * np.sqrt(2.0 * np.log(2.0))


def wavelength_to_omega(wavelength_nm):
    return 2.0 * np.pi * SPEED_OF_LIGHT / np.asarray(wavelength_nm, dtype=float)


def omega_to_wavelength(omega):
    return 2.0 * np.pi * SPEED_OF_LIGHT / np.asarray(omega, dtype=float)


def bandwidth_nm_to_omega(fwhm_nm, center_nm):
    """Convert a (small) wavelength width at `center_nm` to angular frequency."""
    return 2.0 * np.pi * SPEED_OF_LIGHT * fwhm_nm / center_nm**2


def bandwidth_omega_to_nm(fwhm_omega, center_nm):
    return fwhm_omega * center_nm**2 / (2.0 * np.pi * SPEED_OF_LIGHT)


def fwhm(x, y, level=0.5, baseline=0.0):
    """Width between the outermost crossings of ``baseline + level*(peak-baseline)``.

    Crossings are located by linear interpolation between samples. Returns
    ``(width, multimodal)`` where ``multimodal`` is True when the curve crosses
    the level more than twice, i.e. the reported width is the widest one.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float) - baseline
    peak = y.max()
    if not peak > 0:
        raise ValueError("curve has no positive peak")
    half = level * peak
    above = y >= half
    edges = np.flatnonzero(np.diff(above.astype(int)) != 0)
    if above[0] or above[-1]:
        raise ValueError("curve does not fall below the half level inside the sampled range")
    left, right = edges[0], edges[-1]
    xl = np.interp(half, [y[left], y[left + 1]], [x[left], x[left + 1]])
    xr = np.interp(half, [y[right + 1], y[right]], [x[right + 1], x[right]])
    return float(xr - xl), len(edges) > 2
