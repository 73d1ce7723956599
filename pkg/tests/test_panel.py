import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import panelselect as ps
from panelselect.exceptions import (
    DegenerateFitError,
    DimensionError,
    RankDeficiencyError,
    ValidationError,
)
from panelselect.panel import cluster_sandwich, demean_within

from conftest import lsdv_fit, random_panel


class TestPanelDataset:
    def test_rejects_unbalanced_shapes(self, rng):
        with pytest.raises(DimensionError, match="outcome"):
            ps.PanelDataset(("a", "b"), (1, 2), np.zeros((2, 3)), np.zeros((2, 2, 4)))
        with pytest.raises(DimensionError, match="weather"):
            ps.PanelDataset(("a", "b"), (1, 2), np.zeros((2, 2)), np.zeros((3, 2, 4)))

    def test_rejects_missing_values(self, rng):
        y = np.zeros((2, 2))
        y[0, 1] = np.nan
        with pytest.raises(ValidationError, match="balanced"):
            ps.PanelDataset(("a", "b"), (1, 2), y, np.zeros((2, 2, 4)))

    def test_rejects_tiny_panels(self):
        with pytest.raises(ValidationError):
            ps.PanelDataset(("a",), (1, 2), np.zeros((1, 2)), np.zeros((1, 2, 3)))
        with pytest.raises(ValidationError):
            ps.PanelDataset(("a", "b"), (1,), np.zeros((2, 1)), np.zeros((2, 1, 3)))

    def test_cluster_default_is_units(self, rng):
        data = random_panel(rng)
        assert data.cluster_ids == data.unit_ids

    def test_arrays_immutable(self, rng):
        data = random_panel(rng)
        with pytest.raises(ValueError):
            data.outcome[0, 0] = 1.0


class TestWithinTransform:
    def test_simple_mean_subtraction(self):
        # Y = [[1,3],[2,2]] -> demeaned [[-1,1],[0,0]]
        data = ps.PanelDataset(
            ("a", "b"), (1, 2), np.array([[1.0, 3.0], [2.0, 2.0]]),
            np.arange(8, dtype=float).reshape(2, 2, 2),
        )
        view = ps.within_transform(data, np.zeros((4, 0)))
        assert np.allclose(view.demeaned_outcome, [[-1.0, 1.0], [0.0, 0.0]])

    def test_constant_column_vanishes(self, rng):
        data = random_panel(rng)
        design = np.ones((data.n_obs, 1))
        view = ps.within_transform(data, design)
        assert np.allclose(view.demeaned_design, 0.0)

    def test_unit_rows_sum_to_zero(self, rng):
        data = random_panel(rng, n=4, T=3)
        design = rng.normal(size=(12, 2))
        view = ps.within_transform(data, design)
        per_unit = view.demeaned_design.reshape(4, 3, 2).sum(axis=1)
        assert np.abs(per_unit).max() < 1e-12
        assert np.abs(view.demeaned_outcome.sum(axis=1)).max() < 1e-12

    def test_demeaning_idempotent(self, rng):
        x = rng.normal(size=(6, 4, 3))
        once = demean_within(x)
        assert np.allclose(demean_within(once), once)

    def test_dimension_mismatch_names_axis(self, rng):
        data = random_panel(rng, n=3, T=3)
        with pytest.raises(DimensionError, match="axis 0"):
            ps.within_transform(data, np.zeros((7, 2)))


class TestFEEstimate:
    def test_noiseless_recovery(self, rng):
        spec = ps.annual_mean(6)
        data = random_panel(rng, n=6, T=4, H=6, spec=spec, beta=[2.0], noise_sd=0.0)
        fit = ps.fe_estimate(data, spec)
        assert fit.beta_hat[0] == pytest.approx(2.0, abs=1e-10)
        assert fit.sigma2_hat == pytest.approx(0.0, abs=1e-18)
        assert fit.perfect_fit

    def test_matches_lsdv_oracle(self, rng):
        spec = ps.quarterly_means(8)
        data = random_panel(rng, n=5, T=3, H=8, spec=spec, beta=[1, -1, 0.5, 0])
        fit = ps.fe_estimate(data, spec)
        design = ps.build_design(data, spec)
        expected = lsdv_fit(data, design)
        assert np.allclose(fit.beta_hat, expected, rtol=1e-8)

    @settings(max_examples=100, deadline=None)
    @given(
        n=st.integers(2, 12), T=st.integers(2, 5), k=st.integers(1, 4),
        seed=st.integers(0, 2 ** 31),
    )
    def test_lsdv_equivalence_property(self, n, T, k, seed):
        rng = np.random.default_rng(seed)
        data = random_panel(rng, n=n, T=T, H=2 * k + 2)
        design = rng.normal(size=(n * T, k))
        view = ps.within_transform(data, design)
        from panelselect.panel import solve_within

        try:
            beta = solve_within(view.demeaned_outcome.reshape(-1), view.demeaned_design)
        except RankDeficiencyError:
            return
        expected = lsdv_fit(data, design)
        assert np.allclose(beta, expected, rtol=1e-8, atol=1e-10)

    def test_residual_orthogonality(self, rng):
        spec = ps.quarterly_means(12)
        data = random_panel(rng, n=8, T=4, H=12, spec=spec, beta=[1, 0, -1, 2])
        fit = ps.fe_estimate(data, spec)
        view = ps.within_transform(data, ps.build_design(data, spec))
        x = view.demeaned_design
        r = fit.residuals.reshape(-1)
        bound = 1e-8 * np.linalg.norm(x) * np.linalg.norm(r)
        assert np.abs(x.T @ r).max() <= max(bound, 1e-12)

    def test_argmin_certification(self, rng):
        spec = ps.annual_mean(8)
        data = random_panel(rng, n=6, T=3, H=8, spec=spec, beta=[1.5])
        fit = ps.fe_estimate(data, spec)
        view = ps.within_transform(data, ps.build_design(data, spec))
        y = view.demeaned_outcome.reshape(-1)
        x = view.demeaned_design
        rss_hat = np.sum((y - x @ fit.beta_hat) ** 2)
        for _ in range(25):
            delta = rng.normal(size=fit.k)
            delta *= 1e-3 / np.linalg.norm(delta)
            rss = np.sum((y - x @ (fit.beta_hat + delta)) ** 2)
            assert rss >= rss_hat - 1e-12

    def test_fixed_effect_invariance(self, rng):
        spec = ps.quarterly_means(8)
        data = random_panel(rng, n=6, T=4, H=8, spec=spec, beta=[1, 2, 3, 4])
        fit = ps.fe_estimate(data, spec)
        shifted = ps.PanelDataset(
            data.unit_ids, data.period_ids,
            data.outcome + rng.normal(0, 10, size=(data.n, 1)),
            data.weather,
        )
        fit2 = ps.fe_estimate(shifted, spec)
        assert np.allclose(fit.beta_hat, fit2.beta_hat, atol=1e-10)
        assert fit.sigma2_hat == pytest.approx(fit2.sigma2_hat, abs=1e-10)
        assert fit.loglik == pytest.approx(fit2.loglik, abs=1e-8)

    def test_rank_deficiency_reported_with_columns(self, rng):
        data = random_panel(rng, n=5, T=3, H=6)
        dup = ps.custom_linear(
            "dup", np.vstack([np.ones(6) / 6, np.ones(6) / 6]), ("c1", "c2")
        )
        with pytest.raises(RankDeficiencyError) as exc_info:
            ps.fe_estimate(data, dup)
        err = exc_info.value
        assert err.condition_number is not None
        assert set(err.columns) == {"c1", "c2"}

    def test_year_effects_and_controls(self, rng):
        spec = ps.annual_mean(6)
        data = random_panel(rng, n=8, T=4, H=6, spec=spec, beta=[1.0], controls=2)
        fit = ps.fe_estimate(data, spec, controls=True, year_effects=True)
        # annual mean + 2 controls + (T-1) period dummies
        assert fit.k == 1 + 2 + 3
        assert fit.coef_names[:3] == ("annual_mean", "control_1", "control_2")
        # matches LSDV with the same appended columns
        from panelselect.panel import _assemble_design

        design, _ = _assemble_design(data, spec, True, True)
        expected = lsdv_fit(data, design)
        assert np.allclose(fit.beta_hat, expected, rtol=1e-7, atol=1e-9)

    def test_full_bin_set_is_collinear_after_demeaning(self, rng):
        # counts over all bins sum to H, a per-row constant absorbed by
        # the unit effects; estimation must flag it, the interior-bin
        # form must fit
        data = random_panel(rng, n=6, T=4, H=12)
        full = ps.bins(12, edges=[45.0, 50.0, 55.0], name="allbins")
        with pytest.raises(RankDeficiencyError):
            ps.fe_estimate(data, full)
        interior = ps.bins(12, edges=[45.0, 50.0, 55.0], unbounded_ends=False)
        fit = ps.fe_estimate(data, interior)
        assert fit.k == 2

    def test_no_temperature_baseline(self, rng):
        data = random_panel(rng, n=5, T=3, H=6)
        fit = ps.fe_estimate(data, ps.no_temperature(6))
        assert fit.k == 0
        assert fit.beta_hat.shape == (0,)
        view = ps.within_transform(data, np.zeros((data.n_obs, 0)))
        rss = np.sum(view.demeaned_outcome ** 2)
        assert fit.sigma2_hat == pytest.approx(rss / (data.n * (data.T - 1)))


class TestProfileLoglik:
    def test_sigma2_one_gives_zero(self, rng):
        spec = ps.annual_mean(6)
        data = random_panel(rng, n=6, T=4, H=6)
        fit = ps.fe_estimate(data, spec)
        scaled = ps.FEFit(
            model_name=fit.model_name, beta_hat=fit.beta_hat, sigma2_hat=1.0,
            loglik=0.0, residuals=fit.residuals, clustered_cov=fit.clustered_cov,
            k=fit.k, n_obs=fit.n_obs, n=fit.n, T=fit.T, k_features=fit.k_features,
        )
        assert ps.profile_loglik(scaled) == pytest.approx(0.0)

    def test_direct_formula(self):
        # n=500, T=5, sigma2=2 -> -2000 log 2
        fit = ps.FEFit(
            model_name="m", beta_hat=np.zeros(1), sigma2_hat=2.0, loglik=0.0,
            residuals=np.zeros((500, 5)), clustered_cov=np.zeros((1, 1)),
            k=1, n_obs=2500, n=500, T=5, k_features=1,
        )
        assert ps.profile_loglik(fit) == pytest.approx(-2000 * np.log(2.0))
        assert ps.profile_loglik(fit) == pytest.approx(-1386.294, abs=1e-3)

    def test_perfect_fit_signals(self, rng):
        spec = ps.annual_mean(6)
        data = random_panel(rng, n=5, T=3, H=6, spec=spec, beta=[1.0], noise_sd=0.0)
        fit = ps.fe_estimate(data, spec)
        with pytest.raises(DegenerateFitError):
            ps.profile_loglik(fit)
        # the stored loglik beats any non-degenerate model on the same data
        other = ps.fe_estimate(data, ps.no_temperature(6))
        assert fit.loglik > other.loglik + 100

    def test_scaling_shifts_loglik_equally(self, rng):
        spec_a = ps.annual_mean(8)
        spec_q = ps.quarterly_means(8)
        data = random_panel(rng, n=8, T=4, H=8, spec=spec_a, beta=[1.0])
        c = 3.7
        scaled = ps.PanelDataset(
            data.unit_ids, data.period_ids, c * data.outcome, data.weather
        )
        shift = -data.n * (data.T - 1) * 2 * np.log(c)
        for spec in (spec_a, spec_q):
            l1 = ps.fe_estimate(data, spec).loglik
            l2 = ps.fe_estimate(scaled, spec).loglik
            assert l2 - l1 == pytest.approx(shift, rel=1e-9)


class TestPredictDelta:
    def test_zero_beta_gives_zero(self, rng):
        spec = ps.annual_mean(6)
        data = random_panel(rng, n=5, T=3, H=6)
        fit = ps.fe_estimate(data, spec)
        view = ps.within_transform(data, ps.build_design(data, spec))
        zero_fit = ps.FEFit(
            model_name="z", beta_hat=np.zeros(1), sigma2_hat=1.0, loglik=0.0,
            residuals=fit.residuals, clustered_cov=fit.clustered_cov, k=1,
            n_obs=fit.n_obs, n=fit.n, T=fit.T, k_features=1,
        )
        assert np.allclose(ps.predict_within(zero_fit, view), 0.0)

    def test_predictions_plus_residuals_identity(self, rng):
        spec = ps.quarterly_means(8)
        data = random_panel(rng, n=6, T=3, H=8, spec=spec, beta=[1, -2, 0, 1])
        fit = ps.fe_estimate(data, spec)
        view = ps.within_transform(data, ps.build_design(data, spec))
        recomputed = view.demeaned_outcome - ps.predict_within(fit, view)
        assert np.array_equal(recomputed, fit.residuals)

    def test_noiseless_predictions_exact(self, rng):
        spec = ps.annual_mean(6)
        data = random_panel(rng, n=5, T=3, H=6, spec=spec, beta=[2.0], noise_sd=0.0)
        fit = ps.fe_estimate(data, spec)
        view = ps.within_transform(data, ps.build_design(data, spec))
        assert np.allclose(ps.predict_within(fit, view), view.demeaned_outcome, atol=1e-10)

    def test_delta_prediction_same_weather_is_zero(self, rng):
        spec = ps.annual_mean(6)
        data = random_panel(rng, n=5, T=3, H=6, spec=spec, beta=[1.0])
        fit = ps.fe_estimate(data, spec)
        w = rng.normal(50, 5, 6)
        assert ps.delta_prediction(fit, spec, w, w) == 0.0

    def test_delta_prediction_annual_unit_rise(self, rng):
        # annual-mean coefficient -0.82: one-unit rise in the mean -> -0.82
        spec = ps.annual_mean(4)
        data = random_panel(rng, n=5, T=3, H=4)
        fit = ps.fe_estimate(data, spec)
        forced = ps.FEFit(
            model_name="a", beta_hat=np.array([-0.82]), sigma2_hat=1.0, loglik=0.0,
            residuals=fit.residuals, clustered_cov=fit.clustered_cov, k=1,
            n_obs=fit.n_obs, n=fit.n, T=fit.T, k_features=1,
        )
        wa = np.array([10.0, 11.0, 9.0, 10.0])
        assert ps.delta_prediction(forced, spec, wa, wa + 1.0) == pytest.approx(-0.82)

    def test_delta_prediction_quarterly_q3(self, rng):
        # raising only the Q3 mean by one with coefficient 0.92 -> +0.92
        spec = ps.quarterly_means(8)
        data = random_panel(rng, n=5, T=3, H=8)
        fit = ps.fe_estimate(data, spec)
        forced = ps.FEFit(
            model_name="q", beta_hat=np.array([-0.85, 0.09, 0.92, -0.08]),
            sigma2_hat=1.0, loglik=0.0, residuals=fit.residuals,
            clustered_cov=fit.clustered_cov, k=4, n_obs=fit.n_obs,
            n=fit.n, T=fit.T, k_features=4,
        )
        wa = np.full(8, 10.0)
        wb = wa.copy()
        wb[4:6] += 1.0  # H=8 quarters are pairs; positions 4,5 are Q3
        assert ps.delta_prediction(forced, spec, wa, wb) == pytest.approx(0.92)


class TestClusteredCovariance:
    def test_reduces_to_hc1_with_singleton_clusters(self, rng):
        x = rng.normal(size=(40, 3))
        r = rng.normal(size=40)
        cov = cluster_sandwich(x, r, np.arange(40))
        bread = np.linalg.inv(x.T @ x)
        hc1 = bread @ (x.T @ np.diag(r ** 2) @ x) @ bread * 40 / (40 - 3)
        assert np.allclose(cov, hc1, rtol=1e-10)

    def test_psd_always(self, rng):
        spec = ps.quarterly_means(8)
        for seed in range(10):
            local = np.random.default_rng(seed)
            data = random_panel(local, n=7, T=3, H=8, spec=spec, beta=[1, 0, -1, 2])
            fit = ps.fe_estimate(data, spec)
            eigs = np.linalg.eigvalsh(fit.clustered_cov)
            assert eigs.min() >= -1e-12 * max(1.0, eigs.max())
            assert np.allclose(fit.clustered_cov, fit.clustered_cov.T)

    def test_cluster_grouping_pools_units(self, rng):
        spec = ps.annual_mean(6)
        data = random_panel(rng, n=6, T=3, H=6, spec=spec, beta=[1.0])
        grouped = ps.PanelDataset(
            data.unit_ids, data.period_ids, data.outcome, data.weather,
            cluster_ids=("g1", "g1", "g1", "g2", "g2", "g2"),
        )
        fit_units = ps.fe_estimate(data, spec)
        fit_grouped = ps.fe_estimate(grouped, spec)
        assert not np.allclose(fit_units.clustered_cov, fit_grouped.clustered_cov)
        assert np.allclose(fit_units.beta_hat, fit_grouped.beta_hat)
