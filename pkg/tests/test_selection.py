import math

import numpy as np
import pytest

import panelselect as ps
from panelselect.exceptions import RankDeficiencyError, ValidationError
from panelselect.selection import draw_split_masks, mccv_gamma
from panelselect.simlab import (
    WeatherConfig,
    dgp_annual,
    dgp_quarterly,
    gen_outcome,
    run_selection_experiment,
    synth_weather,
)

from conftest import random_panel


class TestPenaltyValue:
    def test_aic_is_two(self):
        assert ps.penalty_value("aic", 500, 5) == 2.0
        assert ps.penalty_value("aic", 2, 1) == 2.0

    def test_bic_direct(self):
        assert ps.penalty_value("bic", 500, 5) == pytest.approx(math.log(2500))
        assert ps.penalty_value("bic", 500, 5) == pytest.approx(7.8240, abs=1e-4)

    def test_sw_penalties(self):
        assert ps.penalty_value("sw1", 500, 5) == pytest.approx(
            math.sqrt(2500 * math.log(math.log(2500)))
        )
        assert ps.penalty_value("sw2", 500, 5) == pytest.approx(139.857, abs=1e-3)

    def test_sw1_needs_nT_at_least_three(self):
        with pytest.raises(ValidationError, match="sw1"):
            ps.penalty_value("sw1", 2, 1)

    def test_custom_callable(self):
        assert ps.penalty_value(lambda nT: math.sqrt(nT), 100, 5) == pytest.approx(
            math.sqrt(500)
        )

    def test_growth_ordering(self):
        # at experiment scales: aic < bic < sw1 < sw2
        for n in (200, 500, 3000):
            values = [ps.penalty_value(k, n, 5) for k in ("aic", "bic", "sw1", "sw2")]
            assert values == sorted(values)


class TestCriterionSpec:
    def test_fixed_p_bounds(self):
        with pytest.raises(ValidationError):
            ps.mccv_fixed_p(0.0)
        with pytest.raises(ValidationError):
            ps.mccv_fixed_p(1.0)

    def test_shao_sizes(self):
        crit = ps.mccv_shao()
        assert crit.split_sizes(500) == (106, 394)
        assert crit.split_sizes(3000) == (406, 2594)
        # test fraction grows to one
        assert 394 / 500 < 2594 / 3000

    def test_fixed_p_sizes(self):
        crit = ps.mccv_fixed_p(0.75)
        assert crit.split_sizes(500) == (375, 125)

    def test_default_split_count(self):
        assert ps.mccv_shao().n_splits(500) == 100
        assert ps.mccv_shao().n_splits(3000) == 160
        assert ps.mccv_shao(b=7).n_splits(3000) == 7

    def test_parse_criteria_tokens(self):
        crits = ps.parse_criteria("aic,bic,sw1,sw2,mccv-p:0.75,mccv-shao", seed=9)
        labels = [c.label for c in crits]
        assert labels == ["aic", "bic", "sw1", "sw2", "mccv-p:0.75", "mccv-shao"]
        assert crits[4].p == 0.75
        assert crits[5].seed == 9
        with pytest.raises(ValidationError, match="unknown criterion"):
            ps.parse_criteria("hqic")


class TestGICSelect:
    def test_identical_models_tie_breaks_by_name(self, rng):
        data = random_panel(rng, n=6, T=3, H=8, spec=ps.annual_mean(8), beta=[1.0])
        models = [ps.annual_mean(8, name="m2"), ps.annual_mean(8, name="m1")]
        report = ps.gic_select(data, models, "bic")
        assert report.selected == "m1"
        assert set(report.ties) == {"m1", "m2"}
        assert report.scores["m1"] == report.scores["m2"]

    def test_selected_attains_optimum(self, rng):
        spec = ps.annual_mean(8)
        data = random_panel(rng, n=10, T=4, H=8, spec=spec, beta=[1.0])
        models = [ps.annual_mean(8), ps.quarterly_means(8), ps.quadratic_annual(8)]
        report = ps.gic_select(data, models, "bic")
        assert report.scores[report.selected] == max(report.scores.values())
        assert report.direction == "max"

    def test_monotone_penalty_never_switches_larger(self):
        lambdas = [0.5, 2.0, 8.0, 50.0, 400.0]
        for seed in range(12):
            rng = np.random.default_rng(seed)
            spec = ps.annual_mean(12)
            data = random_panel(rng, n=12, T=4, H=12, spec=spec, beta=[1.0])
            models = [ps.annual_mean(12), ps.quadratic_annual(12), ps.quarterly_means(12)]
            dims = {m.name: m.k for m in models}
            picked = [
                dims[ps.gic_select(data, models, lambda nT, lam=lam: lam).selected]
                for lam in lambdas
            ]
            assert picked == sorted(picked, reverse=True) or all(
                picked[i] >= picked[i + 1] for i in range(len(picked) - 1)
            )

    def test_fit_failure_names_model(self, rng):
        data = random_panel(rng, n=6, T=3, H=6)
        bad = ps.custom_linear("collinear", np.vstack([np.ones(6), np.ones(6)]))
        with pytest.raises(RankDeficiencyError, match="collinear"):
            ps.gic_select(data, [ps.annual_mean(6), bad], "bic")

    def test_scale_invariance_of_selection(self, rng):
        spec = ps.annual_mean(8)
        data = random_panel(rng, n=10, T=4, H=8, spec=spec, beta=[1.0])
        models = [ps.annual_mean(8), ps.quarterly_means(8)]
        scaled = ps.PanelDataset(
            data.unit_ids, data.period_ids, 5.0 * data.outcome, data.weather
        )
        for penalty in ("aic", "bic", "sw2"):
            assert (
                ps.gic_select(data, models, penalty).selected
                == ps.gic_select(scaled, models, penalty).selected
            )


class TestSplitDrawing:
    def test_mask_shape_and_sizes(self):
        masks = draw_split_masks(10, 4, 25, seed=3)
        assert masks.shape == (25, 10)
        assert (masks.sum(axis=1) == 4).all()

    def test_deterministic_and_order_independent(self):
        a = draw_split_masks(20, 8, 10, seed=5)
        b = draw_split_masks(20, 8, 10, seed=5)
        assert np.array_equal(a, b)
        # split s does not depend on how many splits are drawn
        c = draw_split_masks(20, 8, 3, seed=5)
        assert np.array_equal(a[:3], c)

    def test_redraws_avoid_rank_deficient_training(self):
        # only unit 0 carries design variation: it must never be held out
        sxx = np.zeros((6, 1, 1))
        sxx[0, 0, 0] = 1.0
        masks = draw_split_masks(6, 1, 40, seed=2, sxx_models=[sxx])
        assert not masks[:, 0].any()

    def test_redraw_budget_exhausted(self):
        sxx = np.zeros((5, 1, 1))
        with pytest.raises(ValidationError, match="redraws"):
            draw_split_masks(5, 2, 4, seed=0, sxx_models=[sxx])


class TestMCCVScore:
    def test_noiseless_contained_dgp_gives_zero(self, rng):
        spec = ps.annual_mean(8)
        data = random_panel(rng, n=12, T=3, H=8, spec=spec, beta=[2.0], noise_sd=0.0)
        crit = ps.mccv_fixed_p(0.5, b=20, seed=1)
        scale = float(np.mean(data.outcome ** 2))
        assert abs(ps.mccv_score(data, spec, crit)) <= 1e-12 * scale

    def test_tiny_split_hand_computed(self, rng):
        # n=4, T=2, one split with n_v=2: recompute everything with loops
        n, T, H = 4, 2, 3
        spec = ps.annual_mean(H)
        data = random_panel(rng, n=n, T=T, H=H, spec=spec, beta=[1.5])
        crit = ps.mccv_fixed_p(0.5, b=1, seed=42)
        score = ps.mccv_score(data, spec, crit)

        masks = draw_split_masks(n, 2, 1, seed=42)
        test_units = [i for i in range(n) if masks[0, i]]
        train_units = [i for i in range(n) if not masks[0, i]]
        x = data.weather.mean(axis=2)  # annual means, (n, T)
        x_dm = x - x.mean(axis=1, keepdims=True)
        y_dm = data.outcome - data.outcome.mean(axis=1, keepdims=True)
        num = sum(x_dm[i, t] * y_dm[i, t] for i in train_units for t in range(T))
        den = sum(x_dm[i, t] ** 2 for i in train_units for t in range(T))
        beta = num / den
        rss = sum(
            (y_dm[i, t] - x_dm[i, t] * beta) ** 2 for i in test_units for t in range(T)
        )
        assert score == pytest.approx(rss / (2 * T * 1), rel=1e-12)

    def test_scale_equivariance(self, rng):
        spec = ps.annual_mean(8)
        data = random_panel(rng, n=12, T=3, H=8, spec=spec, beta=[1.0])
        crit = ps.mccv_shao(b=15, seed=3)
        base = ps.mccv_score(data, spec, crit)
        c = 2.5
        scaled = ps.PanelDataset(
            data.unit_ids, data.period_ids, c * data.outcome, data.weather
        )
        assert ps.mccv_score(scaled, spec, crit) == pytest.approx(c ** 2 * base, rel=1e-10)

    def test_selection_scale_invariant(self, rng):
        spec = ps.annual_mean(8)
        data = random_panel(rng, n=14, T=3, H=8, spec=spec, beta=[1.0])
        models = [ps.annual_mean(8), ps.quarterly_means(8)]
        crit = ps.mccv_shao(b=20, seed=3)
        scaled = ps.PanelDataset(
            data.unit_ids, data.period_ids, 0.3 * data.outcome, data.weather
        )
        assert (
            ps.mccv_select(data, models, crit).selected
            == ps.mccv_select(scaled, models, crit).selected
        )

    def test_common_random_numbers_determinism(self, rng):
        spec = ps.annual_mean(8)
        data = random_panel(rng, n=10, T=3, H=8, spec=spec, beta=[1.0])
        models = [ps.annual_mean(8), ps.quarterly_means(8), ps.quadratic_annual(8)]
        crit = ps.mccv_shao(b=11, seed=7)
        r1 = ps.mccv_select(data, models, crit)
        r2 = ps.mccv_select(data, models, crit)
        assert r1 == r2
        assert all(r1.scores[m] == r2.scores[m] for m in r1.scores)

    def test_single_candidate_selected(self, rng):
        spec = ps.annual_mean(8)
        data = random_panel(rng, n=8, T=3, H=8, spec=spec, beta=[1.0])
        report = ps.mccv_select(data, [spec], ps.mccv_shao(b=5, seed=0))
        assert report.selected == spec.name

    def test_training_size_must_fit_model(self, rng):
        data = random_panel(rng, n=6, T=3, H=12)
        crit = ps.mccv_fixed_p(0.2, b=2, seed=0)  # n_c = 1 < k+1
        with pytest.raises(ValidationError, match="too small"):
            ps.mccv_select(data, [ps.monthly_means(12)], crit)


class TestMCCVDecomposition:
    def test_dimension_penalty_gap(self):
        """Both candidates nest an iid-noise DGP: the criterion gap matches
        sigma2 * dk / (n_c T) within 3 Monte Carlo standard errors."""
        H, n, T = 365, 300, 5
        sigma2 = 1.3
        cfg = WeatherConfig(n=n, T=T, H=H, seed=5)
        weather = synth_weather(cfg)
        dgp = dgp_annual(H, error_kind="iid", noise_variance=sigma2)
        annual = ps.annual_mean(H, name="A")
        quarterly = ps.quarterly_means(H, name="Q")
        crit = ps.mccv_shao(b=60, seed=0)
        n_c, n_v = crit.split_sizes(n)

        units = tuple(f"u{i}" for i in range(n))
        periods = tuple(range(T))
        gaps = []
        for rep in range(40):
            y = gen_outcome(weather, dgp, seed=rep)
            data = ps.PanelDataset(units, periods, y, weather)
            rep_crit = ps.mccv_shao(b=60, seed=rep)
            report = ps.mccv_select(data, [annual, quarterly], rep_crit)
            gaps.append(report.scores["Q"] - report.scores["A"])
        gaps = np.array(gaps)
        predicted = sigma2 * (4 - 1) / (n_c * T)
        se = gaps.std(ddof=1) / math.sqrt(len(gaps))
        assert abs(gaps.mean() - predicted) <= 3 * se

    def test_nesting_model_beats_category_one(self):
        """MCCV-Shao picks the model nesting the DGP over a misspecified
        one with Delta bounded away from zero."""
        H = 365
        cfg = WeatherConfig(n=500, seed=4)
        report = run_selection_experiment(
            cfg,
            [ps.mccv_shao(seed=0)],
            dgps=(dgp_quarterly(H),),
            candidate_sets=(("A", "Q"),),
            reps=200,
            seed=31,
        )
        freq = {
            r["model"]: r["frequency"]
            for r in report.selection_rows
            if r["criterion"] == "mccv-shao"
        }
        assert freq["Q"] >= 0.95
