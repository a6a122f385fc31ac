"""HOM interferometry simulator and analysis toolkit for entangled two-photon absorption tests."""

__version__ = "0.1.0"

from .analysis import (  # noqa: E402
    DipFit,
    EtpaReport,
    Geometry,
    SlopeFit,
    Verdict,
    build_report,
    consistency_check,
    cross_section,
    discriminate,
    fit_dip,
    predict_tpa_rate,
    slope_fit,
)
from .biphoton import (  # noqa: E402
    FrequencyGrid,
    JointSpectralAmplitude,
    PhaseMatch,
    PumpEnvelope,
    build_jsa,
    exchange_overlap,
    marginal_bandwidth,
)
from .hom import DipProfile, coincidence_profile, dip_fwhm, visibility  # noqa: E402
from .stats import anova_oneway  # noqa: E402

__all__ = [
    "DipFit", "EtpaReport", "Geometry", "SlopeFit", "Verdict", "build_report", "consistency_check",
    "cross_section", "discriminate", "fit_dip", "predict_tpa_rate", "slope_fit",
    "FrequencyGrid", "JointSpectralAmplitude", "PhaseMatch", "PumpEnvelope", "build_jsa",
    "exchange_overlap", "marginal_bandwidth",
    "DipProfile", "coincidence_profile", "dip_fwhm", "visibility", "anova_oneway",
]
