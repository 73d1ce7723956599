"""Synthetic weather, data-generating processes, and experiment drivers.

The weather generator stands in for a restricted daily-temperature
archive: unit-specific mean levels, year-level shocks, a seasonal cycle
whose amplitude varies by unit-year, and AR(1) day-to-day noise.  The
amplitude responds nonlinearly to the standardized year shock
(anomalously warm or cold years get a different seasonal swing), which
gives sub-annual aggregates genuine information about squared annual
anomalies, as real weather has; under jointly Gaussian weather that
information is exactly zero and misspecified candidates become
indistinguishable in fit.

Outcomes are generated from one of three response functions (annual
mean, quadratic in annual mean, quarterly means), unit effects drawn
around the unit's long-run weather mean, and errors that are the sum of
two correlated normal vectors (heteroskedastic and serially correlated
across periods), or optionally iid for the homoskedastic theory checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.signal import lfilter

from .exceptions import DimensionError, GenerationError, ValidationError
from .features import ModelSpec, annual_mean, quadratic_annual, quarterly_means
from .panel import demean_within, unit_moments
from .selection import CriterionSpec, draw_split_masks, mccv_gamma, penalty_value, _pick_winner

# Error covariance of the two summed normal components for T = 5.
SIGMA1_T5 = np.array(
    [
        [1.0, 0.5, 0.1, 0.0, 0.0],
        [0.5, 1.0, 0.5, 0.1, 0.0],
        [0.1, 0.5, 1.0, 0.5, 0.1],
        [0.0, 0.1, 0.5, 1.0, 0.5],
        [0.0, 0.0, 0.1, 0.5, 1.0],
    ]
)
SIGMA2_T5 = np.array(
    [
        [1.0, 0.5, 0.1, 0.0, 0.0],
        [0.5, 0.75, 0.5, 0.1, 0.0],
        [0.1, 0.5, 1.0, 0.5, 0.1],
        [0.0, 0.1, 0.5, 0.75, 0.5],
        [0.0, 0.0, 0.1, 0.5, 1.0],
    ]
)


def _factor_psd(cov: np.ndarray, name: str) -> np.ndarray:
    """Square root of a PSD matrix; raises on indefinite input."""
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {cov.shape}")
    if not np.allclose(cov, cov.T, atol=1e-12):
        raise ValidationError(f"{name} must be symmetric")
    w, v = np.linalg.eigh(cov)
    if w.min() < -1e-10 * max(1.0, w.max()):
        raise ValidationError(f"{name} is not positive semidefinite (min eig {w.min():.3e})")
    return v * np.sqrt(np.clip(w, 0.0, None))


@dataclass(frozen=True)
class WeatherConfig:
    """Parameters of the synthetic daily-weather panel.

    ``amplitude_shock_curvature`` is the loading of the seasonal
    amplitude on the squared standardized year shock; it is the only
    non-Gaussian ingredient and controls how much sub-annual aggregates
    reveal about squared annual anomalies.  ``seasonal_phase`` offsets
    the cycle from the calendar (seasons lag the calendar year).
    """

    n: int
    T: int = 5
    H: int = 365
    unit_mean_range: tuple = (48.0, 62.0)
    year_shock_sd: float = 1.4
    seasonal_amplitude: float = 16.0
    amplitude_jitter_sd: float = 0.05
    amplitude_shock_curvature: float = 0.18
    seasonal_phase: float = 2.25
    ar1_rho: float = 0.65
    ar1_innovation_sd: float = 2.6
    seed: int = 0

    def __post_init__(self):
        if self.n < 2 or self.T < 2:
            raise ValidationError(f"need n >= 2 and T >= 2, got n={self.n}, T={self.T}")
        if self.H < 4:
            raise ValidationError(f"need H >= 4 so quarters exist, got H={self.H}")
        lo, hi = self.unit_mean_range
        if not lo <= hi:
            raise ValidationError(f"empty unit_mean_range {self.unit_mean_range}")
        if not -1.0 < self.ar1_rho < 1.0:
            raise ValidationError(f"ar1_rho must lie in (-1, 1), got {self.ar1_rho}")
        for name in ("year_shock_sd", "amplitude_jitter_sd", "ar1_innovation_sd"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be nonnegative")


def synth_weather(config: WeatherConfig) -> np.ndarray:
    """Generate an (n, T, H) weather panel; deterministic given the seed.

    Raises GenerationError when the configuration is degenerate, i.e.
    the within-demeaned annual or quarterly designs would be rank
    deficient (no candidate model could be fit).
    """
    n, T, H = config.n, config.T, config.H
    rng = np.random.default_rng(np.random.SeedSequence([config.seed]))
    lo, hi = config.unit_mean_range
    m = rng.uniform(lo, hi, size=n)
    g = rng.normal(0.0, config.year_shock_sd, size=(n, T))
    z = g / config.year_shock_sd if config.year_shock_sd > 0 else np.zeros((n, T))
    jitter = rng.normal(0.0, 1.0, size=(n, T))
    amplitude = config.seasonal_amplitude * (
        1.0
        + config.amplitude_shock_curvature * (z ** 2 - 1.0)
        + config.amplitude_jitter_sd * jitter
    )
    season = np.sin(2.0 * np.pi * np.arange(1, H + 1) / H + config.seasonal_phase)
    eta = rng.normal(0.0, config.ar1_innovation_sd, size=(n, T, H))
    rho = config.ar1_rho
    if abs(rho) > 0:
        eta[..., 0] /= math.sqrt(1.0 - rho ** 2)
        noise = lfilter([1.0], [1.0, -rho], eta, axis=-1)
    else:
        noise = eta
    weather = (
        m[:, None, None]
        + g[:, :, None]
        + amplitude[:, :, None] * season[None, None, :]
        + noise
    )
    _check_not_degenerate(weather)
    return weather


def _check_not_degenerate(weather: np.ndarray):
    n, T, H = weather.shape
    for spec in (annual_mean(H), quarterly_means(H)):
        x = spec.apply(weather.reshape(n * T, H)).reshape(n, T, spec.k)
        x_dm = demean_within(x).reshape(n * T, spec.k)
        col_var = x_dm.var(axis=0)
        if np.any(col_var <= 1e-12):
            raise GenerationError(
                f"degenerate weather: within variance of '{spec.name}' features "
                "vanishes; all candidate designs would be rank deficient"
            )
        s = np.linalg.svd(x_dm, compute_uv=False)
        if s[-1] <= 1e-10 * s[0]:
            raise GenerationError(
                f"degenerate weather: '{spec.name}' design is rank deficient "
                f"(condition number {s[0] / max(s[-1], 1e-300):.3e})"
            )


@dataclass(frozen=True)
class DgpSpec:
    """Outcome equation: response function, unit-effect rule, error rule.

    Unit effects are drawn around 0.5x the unit's long-run weather mean
    (correlated with the regressors by construction, which is what fixed
    effects estimation must absorb).  The default error is the sum of
    two correlated normal vectors with covariances ``cov1`` and ``cov2``
    and opposite mean shifts, so E[u] = 0 and Cov(u) = cov1 + cov2; the
    "iid" kind draws homoskedastic serially uncorrelated errors instead.
    """

    name: str
    response: ModelSpec
    beta: np.ndarray
    fe_loading: float = 0.5
    fe_sd: float = 1.0
    error_kind: str = "mixture_sum"  # or "iid"
    mean_shift: float = 0.5
    cov1: Optional[np.ndarray] = None
    cov2: Optional[np.ndarray] = None
    noise_variance: float = 1.0

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float).reshape(-1)
        if beta.shape[0] != self.response.k:
            raise DimensionError(
                f"beta has length {beta.shape[0]}, response '{self.response.name}' "
                f"has k={self.response.k}"
            )
        object.__setattr__(self, "beta", beta)
        if self.error_kind == "mixture_sum":
            cov1 = SIGMA1_T5 if self.cov1 is None else np.asarray(self.cov1, dtype=float)
            cov2 = SIGMA2_T5 if self.cov2 is None else np.asarray(self.cov2, dtype=float)
            _factor_psd(cov1, "cov1")
            _factor_psd(cov2, "cov2")
            object.__setattr__(self, "cov1", cov1)
            object.__setattr__(self, "cov2", cov2)
        elif self.error_kind == "iid":
            if not self.noise_variance > 0:
                raise ValidationError("iid errors need noise_variance > 0")
        else:
            raise ValidationError(f"unknown error kind {self.error_kind!r}")

    def error_cov(self, T: int) -> np.ndarray:
        """Cov(u_i) for one unit's T-vector of errors."""
        if self.error_kind == "iid":
            return self.noise_variance * np.eye(T)
        if self.cov1.shape[0] != T:
            raise DimensionError(
                f"error covariances are {self.cov1.shape[0]}x{self.cov1.shape[0]}, "
                f"panel has T={T}"
            )
        return self.cov1 + self.cov2

    def within_error_variance(self, T: int) -> float:
        """Average variance of the within-demeaned error, (1/T) tr(M C M)."""
        C = self.error_cov(T)
        ones = np.ones(T)
        return float((np.trace(C) - ones @ C @ ones / T) / T)

    def draw_errors(self, rng: np.random.Generator, n: int, T: int) -> np.ndarray:
        if self.error_kind == "iid":
            return rng.normal(0.0, math.sqrt(self.noise_variance), size=(n, T))
        if self.cov1.shape[0] != T:
            raise DimensionError(
                f"error covariances are {self.cov1.shape[0]}x{self.cov1.shape[0]}, "
                f"panel has T={T}"
            )
        l1 = _factor_psd(self.cov1, "cov1")
        l2 = _factor_psd(self.cov2, "cov2")
        e1 = -self.mean_shift + rng.standard_normal((n, T)) @ l1.T
        e2 = self.mean_shift + rng.standard_normal((n, T)) @ l2.T
        return e1 + e2


def dgp_annual(H: int, beta: float = 1.0, name: str = "A", **kwargs) -> DgpSpec:
    return DgpSpec(name=name, response=annual_mean(H, name="A"), beta=[beta], **kwargs)


def dgp_quad_annual(
    H: int, beta: Sequence[float] = (0.2, -0.05), name: str = "QinA", **kwargs
) -> DgpSpec:
    return DgpSpec(
        name=name, response=quadratic_annual(H, name="QinA"), beta=beta, **kwargs
    )


def dgp_quarterly(
    H: int, beta: Sequence[float] = (-0.25, 0.0, 0.75, 0.0), name: str = "Q", **kwargs
) -> DgpSpec:
    return DgpSpec(
        name=name, response=quarterly_means(H, name="Q"), beta=beta, **kwargs
    )


def standard_dgps(H: int) -> tuple:
    return (dgp_annual(H), dgp_quad_annual(H), dgp_quarterly(H))


def standard_models(H: int) -> tuple:
    """The trio of candidate models used throughout the experiments."""
    return (
        annual_mean(H, name="A"),
        quadratic_annual(H, name="QinA"),
        quarterly_means(H, name="Q"),
    )


def gen_outcome(weather: np.ndarray, dgp: DgpSpec, seed) -> np.ndarray:
    """Draw one (n, T) outcome panel from the response + effects + errors."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(
        np.random.SeedSequence([int(seed)])
    )
    weather = np.asarray(weather, dtype=float)
    n, T, H = weather.shape
    x = dgp.response.apply(weather.reshape(n * T, H)).reshape(n, T, dgp.response.k)
    signal = x @ dgp.beta
    unit_mean = weather.mean(axis=(1, 2))
    a = rng.normal(dgp.fe_loading * unit_mean, dgp.fe_sd)
    u = dgp.draw_errors(rng, n, T)
    return signal + a[:, None] + u


# ---------------------------------------------------------------------------
# Experiment engine
# ---------------------------------------------------------------------------

@dataclass
class SimulationReport:
    """Tidy records from one experiment run, ready for CSV emission."""

    n: int
    T: int
    H: int
    reps: int
    seed: int
    coefficient_rows: list = field(default_factory=list)
    mse_rows: list = field(default_factory=list)
    selection_rows: list = field(default_factory=list)


class _ModelCache:
    """Per-model quantities that depend on weather only."""

    def __init__(self, spec: ModelSpec, weather: np.ndarray):
        n, T, H = weather.shape
        self.spec = spec
        x = spec.apply(weather.reshape(n * T, H)).reshape(n, T, spec.k)
        self.x_dm = demean_within(x)
        self.sxx = np.einsum("ntj,ntk->njk", self.x_dm, self.x_dm)
        self.sxx_tot = self.sxx.sum(axis=0)
        self.k = spec.k
        if spec.k:
            self.sxx_inv = np.linalg.inv(self.sxx_tot)
        else:
            self.sxx_inv = np.zeros((0, 0))


def _rep_result(weather, resp_design, dgp, caches, criteria, seed_key, rep, T):
    """Everything one replication contributes, in plain arrays."""
    n = weather.shape[0]
    rng = np.random.default_rng(np.random.SeedSequence([*seed_key, rep]))
    signal = resp_design @ dgp.beta
    unit_mean = weather.mean(axis=(1, 2))
    a = rng.normal(dgp.fe_loading * unit_mean, dgp.fe_sd)
    u = dgp.draw_errors(rng, n, T)
    y = signal + a[:, None] + u
    y_dm = y - y.mean(axis=1, keepdims=True)
    syy_units = np.einsum("nt,nt->n", y_dm, y_dm)
    syy = float(syy_units.sum())

    out = {"betas": [], "rejects": [], "sxy": [], "syy": syy, "gammas": {}}
    N = n * T
    for cache in caches:
        if cache.k == 0:
            out["betas"].append(np.zeros(0))
            out["rejects"].append(np.zeros(0, dtype=bool))
            out["sxy"].append(np.zeros(0))
            continue
        sxy_units = np.einsum("ntj,nt->nj", cache.x_dm, y_dm)
        sxy = sxy_units.sum(axis=0)
        beta = cache.sxx_inv @ sxy
        scores = sxy_units - cache.sxx @ beta
        meat = scores.T @ scores
        correction = (n / (n - 1)) * ((N - 1) / (N - cache.k))
        cov = correction * cache.sxx_inv @ meat @ cache.sxx_inv
        se = np.sqrt(np.clip(np.diag(cov), 1e-300, None))
        out["betas"].append(beta)
        out["rejects"].append(np.abs(beta) / se > 1.959963984540054)
        out["sxy"].append(sxy)
    for ci, crit in enumerate(criteria):
        if crit.kind != "mccv":
            continue
        n_c, n_v = crit.split_sizes(n)
        b = crit.n_splits(n)
        masks = draw_split_masks(
            n, n_v, b, (*seed_key, 101 + ci, rep),
            sxx_models=[c.sxx for c in caches if c.k],
        )
        gammas = []
        for cache in caches:
            sxy_units = (
                np.einsum("ntj,nt->nj", cache.x_dm, y_dm)
                if cache.k
                else np.zeros((n, 0))
            )
            gammas.append(
                mccv_gamma(cache.sxx, sxy_units, syy_units, masks, T)
            )
        out["gammas"][ci] = gammas
    return out


def run_experiment(
    config: WeatherConfig,
    dgps: Sequence[DgpSpec],
    models: Sequence[ModelSpec],
    candidate_sets: Sequence[Sequence[str]] = (),
    criteria: Sequence[CriterionSpec] = (),
    reps: int = 500,
    seed: int = 0,
    threads: int = 1,
) -> SimulationReport:
    """Shared engine: one weather panel, fresh outcomes per replication.

    Weather is held fixed across replications (as when regressors come
    from an archive); unit effects and errors are redrawn.  Replication
    r of DGP d uses the stream derived from (seed, d, r), so reports are
    identical for any thread count.
    """
    if reps < 1:
        raise ValidationError(f"need reps >= 1, got {reps}")
    weather = synth_weather(config)
    n, T, H = weather.shape
    caches = [_ModelCache(spec, weather) for spec in models]
    model_names = [spec.name for spec in models]
    name_to_idx = {m: i for i, m in enumerate(model_names)}
    dims = {spec.name: spec.k for spec in models}
    for cs in candidate_sets:
        unknown = [m for m in cs if m not in name_to_idx]
        if unknown:
            raise ValidationError(f"candidate set names unknown models: {unknown}")

    report = SimulationReport(n=n, T=T, H=H, reps=reps, seed=seed)
    nT = n * T

    for d, dgp in enumerate(dgps):
        resp_design = dgp.response.apply(weather.reshape(nT, H)).reshape(n, T, -1)
        lambdas = {
            ci: penalty_value(crit.penalty, n, T)
            for ci, crit in enumerate(criteria)
            if crit.kind == "gic"
        }

        def one_rep(r, _d=d, _dgp=dgp, _resp=resp_design):
            return _rep_result(
                weather, _resp, _dgp, caches, criteria, (seed, _d), r, T
            )

        if threads > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=threads) as ex:
                results = list(ex.map(one_rep, range(reps)))
        else:
            results = [one_rep(r) for r in range(reps)]

        # Coefficient statistics and MSE at the mean coefficient vector.
        for mi, cache in enumerate(caches):
            k = cache.k
            betas = np.array([res["betas"][mi] for res in results]).reshape(reps, k)
            rejects = np.array([res["rejects"][mi] for res in results]).reshape(reps, k)
            mean = betas.mean(axis=0)
            sd = betas.std(axis=0, ddof=1) if reps > 1 else np.zeros(k)
            for j in range(k):
                report.coefficient_rows.append(
                    {
                        "dgp": dgp.name,
                        "model": model_names[mi],
                        "coef": cache.spec.feature_names[j],
                        "mean": float(mean[j]),
                        "sd": float(sd[j]),
                        "rej_rate": float(rejects[:, j].mean()),
                        "n": n,
                        "reps": reps,
                    }
                )
            syy_sum = float(sum(res["syy"] for res in results))
            sxy_sum = np.sum([res["sxy"][mi] for res in results], axis=0).reshape(k)
            quad = float(mean @ cache.sxx_tot @ mean) if k else 0.0
            mse = (syy_sum - 2.0 * float(mean @ sxy_sum)) / (reps * nT) + quad / nT
            report.mse_rows.append(
                {
                    "dgp": dgp.name,
                    "model": model_names[mi],
                    "mse": mse,
                    "n": n,
                    "reps": reps,
                }
            )

        # Selection frequencies per candidate set and criterion.
        for cs in candidate_sets:
            set_label = "+".join(cs)
            for ci, crit in enumerate(criteria):
                counts = {m: 0 for m in cs}
                for res in results:
                    if crit.kind == "gic":
                        lam = lambdas[ci]
                        scores = {}
                        for m in cs:
                            mi = name_to_idx[m]
                            rss = res["syy"] - float(
                                res["betas"][mi] @ res["sxy"][mi]
                            )
                            sigma2 = max(rss / (n * (T - 1)), 1e-300)
                            scores[m] = -n * (T - 1) * math.log(sigma2) - lam * dims[m]
                        winner, _ = _pick_winner(scores, dims, "max")
                    else:
                        gammas = res["gammas"][ci]
                        scores = {m: gammas[name_to_idx[m]] for m in cs}
                        winner, _ = _pick_winner(scores, dims, "min")
                    counts[winner] += 1
                for m in cs:
                    freq = counts[m] / reps
                    report.selection_rows.append(
                        {
                            "dgp": dgp.name,
                            "candidate_set": set_label,
                            "criterion": crit.label,
                            "model": m,
                            "frequency": freq,
                            "ci_halfwidth": 1.959963984540054
                            * math.sqrt(freq * (1.0 - freq) / reps),
                            "n": n,
                            "reps": reps,
                        }
                    )
    return report


def run_phacking_experiment(
    config: WeatherConfig,
    dgps: Optional[Sequence[DgpSpec]] = None,
    models: Optional[Sequence[ModelSpec]] = None,
    reps: int = 500,
    seed: int = 0,
    threads: int = 1,
) -> SimulationReport:
    """Fit every model under every DGP; record Mean, S.D. and the 5%
    rejection proportion per coefficient (no multiple-testing correction)."""
    H = config.H
    return run_experiment(
        config,
        dgps if dgps is not None else standard_dgps(H),
        models if models is not None else standard_models(H),
        reps=reps,
        seed=seed,
        threads=threads,
    )


def run_pseudo_true_experiment(
    config: WeatherConfig,
    dgps: Optional[Sequence[DgpSpec]] = None,
    models: Optional[Sequence[ModelSpec]] = None,
    reps: int = 200,
    seed: int = 0,
    threads: int = 1,
) -> SimulationReport:
    """Simulation means of coefficients and the MSE at those means on a
    large panel, approximating pseudo-true values and their fit."""
    return run_phacking_experiment(
        config, dgps=dgps, models=models, reps=reps, seed=seed, threads=threads
    )


def run_selection_experiment(
    config: WeatherConfig,
    criteria: Sequence[CriterionSpec],
    dgps: Optional[Sequence[DgpSpec]] = None,
    models: Optional[Sequence[ModelSpec]] = None,
    candidate_sets: Optional[Sequence[Sequence[str]]] = None,
    reps: int = 500,
    seed: int = 0,
    threads: int = 1,
) -> SimulationReport:
    """Selection probabilities per criterion, DGP and candidate set."""
    H = config.H
    if candidate_sets is None:
        candidate_sets = (("A", "Q"), ("A", "QinA"), ("A", "Q", "QinA"))
    return run_experiment(
        config,
        dgps if dgps is not None else standard_dgps(H),
        models if models is not None else standard_models(H),
        candidate_sets=candidate_sets,
        criteria=criteria,
        reps=reps,
        seed=seed,
        threads=threads,
    )
