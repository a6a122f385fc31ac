import json
import math

from hypothesis import given, settings, strategies as st
import numpy as np
import pytest

from hometpa.analysis import (
    Geometry,
    Verdict,
    build_report,
    consistency_check,
    cross_section,
    discriminate,
    effective_length_from,
    fit_dip,
    predict_tpa_rate,
    slope_fit,
)
from hometpa.counting import HomScan, PowerScan, SourceRateModel, simulate_delay_scan
from hometpa.errors import ContractError, DomainError
from hometpa.hom import transmitted_profile
from hometpa.samples import flat_attenuator
from hometpa.stats import anova_oneway

AVOGADRO = 6.02214076e23
TAUS = np.unique(np.concatenate([np.arange(-250.0, 251.0, 5.0), [-167.0, 167.0]]))
POWERS = np.linspace(0.25, 43.9, 10)


def exact_scan(rates, t=1e8):
    return HomScan(TAUS, np.round(np.asarray(rates) * t).astype(np.int64), t, 43.9, "exact")


def gaussian_dip(a, v, s=25.0):
    r_min = a * (1 - v) / (1 + v)
    return a - (a - r_min) * np.exp(-(TAUS**2) / (2 * s**2))


def test_noiseless_round_trip():
    fit = fit_dip(exact_scan(gaussian_dip(6035.0, 0.574)))
    assert fit.visibility == pytest.approx(0.574, abs=1e-6)
    assert fit.r_max == pytest.approx(6035.0, rel=1e-6)
    assert fit.fwhm == pytest.approx(2 * math.sqrt(2 * math.log(2)) * 25.0, rel=1e-4)
    assert not fit.flags


def test_dipfit_invariants():
    fit = fit_dip(exact_scan(gaussian_dip(3636.0, 0.573)))
    assert fit.r_max >= fit.r_min >= 0
    assert fit.visibility == pytest.approx((fit.r_max - fit.r_min) / (fit.r_max + fit.r_min), abs=1e-10)


def _solvent_scan(jsa, plateau, seed):
    # per-photon T putting the free-space plateau onto `plateau`
    model = SourceRateModel(3e8 * math.pi * (58e-4) ** 2 / 43.9)
    T = math.sqrt(plateau / (model.brightness * 43.9))
    prof = transmitted_profile(jsa, flat_attenuator(T), TAUS)
    return simulate_delay_scan(model, prof, 43.9, 1.0, seed)


@pytest.mark.parametrize("plateau,v_paper,err_paper", [(6035.0, 0.574, 0.015), (3636.0, 0.573, 0.017)])
def test_noisy_table_levels(cw_jsa, plateau, v_paper, err_paper):
    fit = fit_dip(_solvent_scan(cw_jsa, plateau, 1))
    assert fit.visibility == pytest.approx(v_paper, abs=0.02)
    # single-reading convention: comparable to the tabulated uncertainty
    assert 0.5 * err_paper < fit.visibility_err < 2 * err_paper
    assert fit.visibility_se < fit.visibility_err


def test_visibility_se_matches_scatter(cw_jsa):
    vs, ses = [], []
    for seed in range(60):
        fit = fit_dip(_solvent_scan(cw_jsa, 6035.0, 100 + seed))
        vs.append(fit.visibility)
        ses.append(fit.visibility_se)
    assert np.std(vs, ddof=1) == pytest.approx(np.mean(ses), rel=0.3)


def test_no_plateau_is_contract_error():
    scan = HomScan(np.arange(-100.0, 101.0, 10.0), np.full(21, 100), 1.0, 43.9, "short")
    with pytest.raises(ContractError, match="150"):
        fit_dip(scan)


def test_flat_scan_flags_no_dip():
    fit = fit_dip(HomScan(TAUS, np.full(TAUS.size, 5000), 1.0, 43.9, "flat"))
    assert fit.visibility == pytest.approx(0.0, abs=0.01)
    assert fit.flags


def _power_scan(sol, sam, t=1.0):
    return PowerScan(POWERS, np.asarray(sol, np.int64), np.asarray(sam, np.int64), 0.0, t)


def test_slope_identical_channels():
    counts = np.round(700 * POWERS).astype(int)
    fit = slope_fit(_power_scan(counts, counts))
    assert fit.m == 0.0


def test_slope_dark_sample_is_one():
    counts = np.round(700 * POWERS).astype(int)
    assert slope_fit(_power_scan(counts, np.zeros_like(counts))).m == 1.0


def test_slope_exact_data_machine_precision():
    m0 = 0.203
    sol = np.round(700 * POWERS * 1e6).astype(np.int64)
    sam = sol * (1 - m0)
    fit = slope_fit(PowerScan(POWERS, sol, np.round(sam).astype(np.int64), 0.0, 1e6))
    assert abs(fit.m - m0) < 1e-9
    exact = PowerScan(POWERS, np.full(10, 1000) * np.arange(1, 11), np.full(10, 750) * np.arange(1, 11), 0.0, 1.0)
    assert slope_fit(exact).m == pytest.approx(0.25, abs=1e-15)


def test_slope_needs_five_points():
    with pytest.raises(ContractError):
        slope_fit(PowerScan([1.0, 2.0, 3.0, 4.0], [10, 20, 30, 40], [9, 18, 27, 36], 0.0, 1.0))


def test_slope_flags():
    counts = np.round(700 * POWERS).astype(int)
    fit = slope_fit(_power_scan(counts, 2 * counts))
    assert "sample_brighter_than_solvent" in fit.flags
    assert "unphysical_slope" in fit.flags


def test_cross_section_table_row():
    g = Geometry.from_beam(58.0, 1.047)
    assert cross_section(0.1452, 1e-2, g) == pytest.approx(2.303e-20, rel=1e-3)
    assert cross_section(0.026, 1e-8, Geometry.from_beam(58.0, 1.028)) == pytest.approx(4.2e-15, rel=0.05)
    assert cross_section(0.026, 1e-8, Geometry.from_beam()) == pytest.approx(4.2e-15, rel=0.05)
    assert cross_section(0.0, 1e-3, g) == 0.0


def test_cross_section_hand_formula():
    g = Geometry.from_beam(58.0, 1.03)
    n = 1e-3 * AVOGADRO / 1000.0
    assert cross_section(0.103, 1e-3, g) == pytest.approx(0.103 / (n * 1.03), rel=1e-12)


def test_cross_section_domain():
    g = Geometry.from_beam()
    with pytest.raises(DomainError):
        cross_section(0.1, 0.0, g)
    with pytest.raises(DomainError):
        cross_section(-0.1, 1e-3, g)


@settings(max_examples=50)
@given(k=st.floats(min_value=1e-6, max_value=1e6), m=st.floats(min_value=1e-4, max_value=1.0),
       c=st.floats(min_value=1e-9, max_value=1.0))
def test_cross_section_homogeneity(k, m, c):
    g = Geometry.from_beam()
    assert cross_section(k * m, k * c, g) == pytest.approx(cross_section(m, c, g), rel=1e-12)


def test_geometry():
    g = Geometry.from_beam(58.0, 1.03)
    assert g.area / g.interaction_volume == pytest.approx(1 / 1.03)
    assert g.effective_length == pytest.approx(1.03)
    with pytest.raises(DomainError):
        Geometry(0.0, 1.0)


def test_effective_length_inverts_cross_section():
    g = Geometry.from_beam(58.0, 1.047)
    s = cross_section(0.1452, 1e-2, g)
    assert effective_length_from(0.1452, 1e-2, s) == pytest.approx(1.047, rel=1e-12)


def test_consistency_intensive_and_degenerate():
    proportional = consistency_check([(1e-3 * k, 1e-2 * k) for k in (1, 3, 10, 30)])
    assert proportional.ratio_spread == pytest.approx(0.0, abs=1e-12)
    assert proportional.is_intensive
    repeated = consistency_check([(0.1, 1e-2)] * 3)
    assert repeated.ratio_spread == 0.0
    with pytest.raises(ContractError):
        consistency_check([(0.1, 1e-2), (0.2, 2e-2)])


def test_consistency_on_table(targets):
    rows = [(r["m_zero"], r["concentration"]) for r in targets["rhb_table"]]
    res = consistency_check(rows)
    assert res.orders_of_magnitude >= 5
    assert not res.is_intensive


def test_predict_tpa_rate():
    assert predict_tpa_rate(0.0, 1e-17, 1e-50) == 0.0
    lin = 1e-17 * 3e8
    quad = 1e-50 * 3e8**2
    assert lin == pytest.approx(3e-9)
    assert quad == pytest.approx(9e-34)
    assert predict_tpa_rate(3e8, 1e-17, 1e-50) == pytest.approx(lin + quad, rel=1e-15)
    assert predict_tpa_rate(6e8, 1e-17) == pytest.approx(2 * predict_tpa_rate(3e8, 1e-17))
    with pytest.raises(DomainError):
        predict_tpa_rate(-1.0, 1e-17)


def test_discriminate_paper_values(targets):
    row = next(r for r in targets["rhb_table"] if r["concentration"] == 0.0045)
    v_sol = [tuple(v) for v in targets["solvent_visibilities"].values()]
    v_sam = [tuple(v) for v in targets["rhb_in_solvent_visibilities"].values()]
    assert row["m_long"] / row["m_zero"] == pytest.approx(0.78, abs=0.01)
    verdict = discriminate(row["m_zero"], row["m_long"], v_sol, v_sam, targets["visibility_anova_p"])
    assert verdict is Verdict.LINEAR_LOSS_ARTIFACT


def test_discriminate_cases():
    vs = [(0.58, 0.01), (0.57, 0.01)]
    assert discriminate(0.2, 0.01, vs, vs, 0.001) is Verdict.CANDIDATE_ETPA
    assert discriminate(0.0, 0.0, vs, vs, float("nan")) is Verdict.INCONCLUSIVE
    assert discriminate(0.2, 0.18, vs, vs, 0.001) is Verdict.INCONCLUSIVE
    assert discriminate(0.2, 0.18, vs, vs, 0.3, ratio_threshold=0.95) is Verdict.INCONCLUSIVE
    with pytest.raises(ContractError):
        discriminate(0.2, None, vs, vs, 0.3)
    with pytest.raises(ContractError):
        discriminate(0.2, 0.1, [], vs, 0.3)


def test_empty_report():
    report = build_report()
    assert report.verdict is Verdict.INCONCLUSIVE
    assert report.rows == []
    d = report.to_dict()
    assert json.loads(json.dumps(d))["verdict"] == "Inconclusive"
    assert "verdict: Inconclusive" in report.to_table()


def test_visibility_anova_on_tabulated_values(targets):
    # the tabulated visibilities are rounded to 0.1 %, so p agrees to a few hundredths
    sol = [v for v, _ in targets["solvent_visibilities"].values()]
    sam = [v for v, _ in targets["rhb_in_solvent_visibilities"].values()]
    res = anova_oneway([sol, sam])
    assert res.p == pytest.approx(targets["visibility_anova_p"], abs=0.03)
