"""Characteristic functionals, convergence studies, and marginal GOF."""

import math

import numpy as np
import pytest

from levyspline.exponents import JumpLaw, cauchy, gaussian, poissonize
from levyspline.grid import Box, Grid
from levyspline.noise import RngStream, sample_impulse_field
from levyspline.operators import make_operator
from levyspline.synthesis import GridRealization, ensemble, reference_levy_path, synthesize_spline
from levyspline.verify import (
    CFEstimate,
    GridMismatch,
    NoiseFloor,
    TailTruncationWarning,
    VerifyError,
    analytic_cf,
    build_cf_bank,
    build_identity_bank,
    compound_marginal_reference,
    convergence_study,
    empirical_cf,
    left_inverse_residual,
    marginal_gof,
    marginal_values,
    psd_spot_check,
)

GRID1 = Grid(Box.cube(0.0, 10.0, 1), 0.01)
OP_D = make_operator("D")


def constant_realizations(values):
    """One-point-mass realizations: s identically equal to a constant."""
    out = []
    for v in values:
        out.append(
            GridRealization(
                dim=1,
                box=GRID1.box,
                step=GRID1.step,
                samples=np.full(GRID1.shape, float(v)),
                operator=OP_D,
                provenance="test",
                seed=0,
            )
        )
    return out


def test_cf_bank_shapes():
    bank = build_cf_bank(GRID1, OP_D)
    assert bank.names == ["bump1", "bump2", "bump3", "bump4", "plateau"]
    assert len(bank.phis) == 5 and len(bank.tphis) == 5
    for phi in bank.phis:
        assert phi.shape == GRID1.shape
        assert phi[0] == 0.0 and phi[-1] == 0.0  # compact support inside
    with pytest.raises(VerifyError):
        build_cf_bank(Grid(Box.cube(0.0, 1.0, 2), 0.125), make_operator("DxDy"))


def test_identity_bank_zero_mean():
    bank = build_identity_bank(GRID1, zero_mean=True)
    w = GRID1.weight_array()
    for phi in bank.phis:
        assert abs(np.sum(w * phi)) < 1e-10 * np.abs(phi).max()


def test_empirical_cf_matches_manual_computation():
    # s_i constant c_i pairs to c_i * integral(phi)
    bank = build_cf_bank(GRID1, OP_D)
    phi = bank.phis[0]
    mass = float(np.sum(GRID1.weight_array() * phi))
    values = [0.3, -0.7, 1.1] * 40
    est = empirical_cf(constant_realizations(values), phi)
    summands = np.exp(1j * np.asarray(values) * mass)
    mean = summands.mean()
    assert isinstance(est, CFEstimate)
    assert est.count == len(values)
    assert est.value == pytest.approx(mean, abs=1e-12)
    expected_se = math.sqrt((1.0 - abs(mean) ** 2) / (len(values) - 1))
    assert est.se == pytest.approx(expected_se, abs=1e-12)


def test_empirical_cf_minimum_ensemble():
    bank = build_cf_bank(GRID1, OP_D)
    with pytest.raises(VerifyError):
        empirical_cf(constant_realizations([0.0] * 99), bank.phis[0])


def test_empirical_cf_grid_mismatch():
    with pytest.raises(GridMismatch):
        empirical_cf(constant_realizations([0.0] * 100), np.ones(7))


def test_analytic_cf_worked_examples():
    # ramp pairing on [0, 1]: Brownian gives exp(-1/6), Cauchy exp(-1/2)
    x = GRID1.axis(0)
    phi = ((x >= 0.0) & (x <= 1.0)).astype(float)
    got = analytic_cf(gaussian(1.0), OP_D, phi, GRID1)
    assert abs(got - math.exp(-1.0 / 6.0)) < 5e-3
    got = analytic_cf(cauchy(1.0), OP_D, phi, GRID1)
    assert abs(got - math.exp(-0.5)) < 5e-3


def test_analytic_cf_agrees_with_reference_monte_carlo():
    bank = build_cf_bank(GRID1, OP_D)
    f = gaussian(1.0)

    def make(stream):
        return reference_levy_path(f, OP_D, GRID1, stream)

    paths = list(ensemble(make, 20000, 3))
    for phi in bank.phis:
        est = empirical_cf(paths, phi)
        ana = analytic_cf(f, OP_D, phi, GRID1)
        assert abs(est.value - ana) < 4.0 * est.se


def test_analytic_cf_unit_modulus_bound():
    bank = build_cf_bank(GRID1, OP_D)
    for f in (gaussian(1.0), cauchy(1.0), poissonize(gaussian(1.0), 4.0)):
        for phi in bank.phis:
            assert abs(analytic_cf(f, OP_D, phi, GRID1)) <= 1.0 + 1e-12


def test_analytic_cf_shape_validation():
    with pytest.raises(GridMismatch):
        analytic_cf(gaussian(1.0), OP_D, np.ones(5), GRID1)


def test_analytic_cf_tail_warning():
    # heavy-tailed exponent over a two-sided decaying kernel: the margin
    # truncation leaves visible integrand mass at the padded edge
    g = Grid(Box.cube(0.0, 1.0, 1), 1.0 / 128)
    op = make_operator("frac_laplacian", gamma=1.5, dim=1)
    x = g.axis(0)
    r = (x - 0.5) / 0.3
    phi = np.zeros_like(x)
    inside = np.abs(r) < 1.0
    phi[inside] = np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
    with pytest.warns(TailTruncationWarning):
        analytic_cf(cauchy(1.0), op, phi, g)


def test_left_inverse_residuals_fine_grid():
    fine = Grid(Box.cube(0.0, 10.0, 1), 0.001)
    bank = build_identity_bank(fine)
    for op in (make_operator("D"), make_operator("DaI", alpha=0.1)):
        for phi in bank.phis:
            assert left_inverse_residual(op, phi, fine.step) < 1e-3


def test_convergence_study_fast_path_equals_pipeline():
    # the suffix-table estimator must reproduce the synthesize-then-pair
    # pipeline to round-off for both step and exponential kernels
    from levyspline.verify import _fast_rung_cf, _generic_rung_cf

    for fam, kw, f in (("D", {}, gaussian(1.0)), ("DaI", {"alpha": 0.1}, cauchy(1.0))):
        op = make_operator(fam, **kw)
        bank = build_cf_bank(GRID1, op)
        fast, fast_se = _fast_rung_cf(f, op, 4.0, 200, bank, 17, 600)
        slow, slow_se = _generic_rung_cf(f, op, 4.0, 200, bank, 17, 600)
        np.testing.assert_allclose(fast, slow, atol=1e-12)
        np.testing.assert_allclose(fast_se, slow_se, atol=1e-12)


def test_convergence_study_report_contents():
    f = gaussian(1.0)
    bank = build_cf_bank(GRID1, OP_D)
    report = convergence_study(f, OP_D, (1.0, 4.0, 16.0, 64.0), 5000, bank, base_seed=0)
    assert report.empirical.shape == (4, 5)
    assert report.ladder == [1.0, 4.0, 16.0, 64.0]
    assert report.ensemble_size == 5000
    # errors decay and the fitted slope lands in the first-order band
    assert report.mean_err[0] > report.mean_err[-1]
    assert -1.3 < report.slope < -0.7
    assert report.per_phi_monotone(2.0)
    assert report.mean_monotone(2.0)
    assert report.qualified.sum() >= 2
    text = report.summary_text()
    assert "slope" in text and "lambda=64" in text


def test_convergence_study_is_deterministic():
    f = cauchy(1.0)
    bank = build_cf_bank(GRID1, OP_D)
    a = convergence_study(f, OP_D, (1.0, 4.0, 16.0), 8000, bank, base_seed=9)
    b = convergence_study(f, OP_D, (1.0, 4.0, 16.0), 8000, bank, base_seed=9)
    np.testing.assert_array_equal(a.empirical, b.empirical)
    assert a.slope == b.slope


def test_convergence_study_validation():
    bank = build_cf_bank(GRID1, OP_D)
    with pytest.raises(VerifyError):
        convergence_study(gaussian(1.0), OP_D, (1.0, 4.0), 500, bank)
    with pytest.raises(VerifyError):
        convergence_study(gaussian(1.0), OP_D, (4.0, 1.0, 16.0), 500, bank)
    with pytest.raises(VerifyError):
        convergence_study(gaussian(1.0), OP_D, (1.0, 4.0, 16.0), 50, bank)


def test_convergence_study_noise_floor():
    f = gaussian(1.0)
    bank = build_cf_bank(GRID1, OP_D)
    with pytest.raises(NoiseFloor) as exc_info:
        convergence_study(f, OP_D, (64.0, 128.0, 256.0), 200, bank, base_seed=0)
    report = exc_info.value.report
    assert report is not None
    assert math.isnan(report.slope)
    assert report.qualified.sum() < 2
    assert "NOISE_FLOOR" in report.summary_text()


def test_csv_report_round_trip_columns(tmp_path):
    f = gaussian(1.0)
    bank = build_cf_bank(GRID1, OP_D)
    report = convergence_study(f, OP_D, (1.0, 4.0, 16.0), 5000, bank, base_seed=1)
    path = tmp_path / "cfreport.csv"
    report.to_csv(path)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "lambda,phi,re_emp,im_emp,se,re_ana,im_ana,abs_err"
    assert len(lines) == 1 + 3 * 5
    row = lines[1].split(",")
    assert row[0] == "1" and row[1] == "bump1"
    assert abs(complex(float(row[2]), float(row[3]))) <= 1.0 + 1e-9


def test_marginal_values_and_validation():
    reals = constant_realizations([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(marginal_values(reals, 5.0), [1.0, 2.0, 3.0])
    np.testing.assert_array_equal(marginal_values(reals, 10.0), [1.0, 2.0, 3.0])
    with pytest.raises(VerifyError):
        marginal_values(reals, 0.0)
    with pytest.raises(VerifyError):
        marginal_values(reals, 11.0)


def test_compound_marginal_reference_moments():
    law = JumpLaw("gaussian", 0.5)
    vals = compound_marginal_reference(4.0, law, 2.0, 200000, seed=12)
    # sum of N ~ Poisson(8) jumps of variance 0.5: total variance 4.0
    assert np.mean(vals) == pytest.approx(0.0, abs=0.02)
    assert np.var(vals) == pytest.approx(4.0, rel=0.05)


def test_compound_marginal_reference_budget_cap():
    law = JumpLaw("gaussian", 1.0)
    vals = compound_marginal_reference(200.0, law, 10.0, 10**6, seed=0)
    # capped near MAX_REFERENCE_VALUES / (lam t) draws
    assert len(vals) <= 10**4


def test_marginal_gof_accepts_matching_law():
    f = gaussian(1.0)

    def make(stream):
        return reference_levy_path(f, OP_D, GRID1, stream)

    paths = list(ensemble(make, 5000, 8))
    assert marginal_gof(paths, 10.0, f) > 1e-3
    # inflated variance must be rejected
    assert marginal_gof(paths, 10.0, gaussian(2.0)) < 1e-3


def test_marginal_gof_compound_target():
    lam = 5.0
    f = poissonize(gaussian(1.0), lam)

    def make(stream):
        field = sample_impulse_field(1, GRID1.box, lam, f.jump_law, stream)
        return synthesize_spline(field, OP_D, GRID1)

    paths = ensemble(make, 4000, 15)
    assert marginal_gof(paths, 10.0, f) > 1e-3


def test_psd_spot_check():
    bank = build_cf_bank(GRID1, OP_D)
    phis = [0.3 * phi for phi in bank.phis[:4]]
    for f in (gaussian(1.0), cauchy(1.0)):
        assert psd_spot_check(f, OP_D, GRID1, phis) > -1e-10
