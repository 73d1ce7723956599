"""Pseudo-true parameters and misspecification diagnostics.

Under a known data-generating outcome equation, the within estimator of
any candidate model converges to the projection of the true signal onto
the candidate's demeaned feature span.  This module computes that
projection on a large weather panel (the sample analogue of the
probability limit), the resulting misspecification error Delta, the
Category I/II classification (Delta positive vs zero), the three-part
decomposition of mean squared prediction error, and the equality check
of predicted values at pseudo-true parameters that separates consistent
from pseudo-inconsistent selection regimes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import DimensionError, PanelSelectError, ValidationError
from .features import ModelSpec
from .panel import demean_within


@dataclass(frozen=True)
class DgpTruth:
    """The most parsimonious correct outcome equation: features, slope, noise."""

    star_spec: ModelSpec
    beta_star: np.ndarray
    sigma2: float

    def __post_init__(self):
        beta = np.asarray(self.beta_star, dtype=float).reshape(-1)
        if beta.shape[0] != self.star_spec.k:
            raise DimensionError(
                f"beta_star has length {beta.shape[0]}, star spec has k={self.star_spec.k}"
            )
        if not np.all(np.isfinite(beta)):
            raise ValidationError("beta_star must be finite")
        if not self.sigma2 > 0:
            raise ValidationError(f"sigma2 must be positive, got {self.sigma2}")
        object.__setattr__(self, "beta_star", beta)


@dataclass(frozen=True)
class MspeParts:
    """Three-part mean squared prediction error of a fitted candidate."""

    noise: float  # sigma2 * (T-1)/T
    dimension: float  # sigma2 * k / (nT)
    misspec: float  # Delta

    @property
    def total(self) -> float:
        return self.noise + self.dimension + self.misspec


@dataclass(frozen=True)
class PseudoTrueResult:
    model_name: str
    beta_pseudo: np.ndarray
    delta: float
    category: str  # "I" or "II"
    mspe_parts: MspeParts


@dataclass(frozen=True)
class PredictionGap:
    """Elementwise comparison of two models' pseudo-true predictions."""

    equal: bool
    max_gap: float
    scale: float
    tol: float


def _demeaned_features(weather: np.ndarray, spec: ModelSpec) -> np.ndarray:
    weather = np.asarray(weather, dtype=float)
    if weather.ndim != 3:
        raise DimensionError(
            f"weather panel must be (n, T, H), got shape {weather.shape}"
        )
    n, T, H = weather.shape
    x = spec.apply(weather.reshape(n * T, H)).reshape(n, T, spec.k)
    return demean_within(x).reshape(n * T, spec.k)


def _signal(weather: np.ndarray, truth: DgpTruth) -> np.ndarray:
    x_star = _demeaned_features(weather, truth.star_spec)
    return x_star @ truth.beta_star


def _solve_projection(x_dm: np.ndarray, target: np.ndarray, spec_name: str):
    k = x_dm.shape[1]
    if k == 0:
        return np.zeros(0), target.copy()
    gram = x_dm.T @ x_dm
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > 1e12:
        raise ValidationError(
            f"within second-moment matrix of '{spec_name}' is near singular "
            f"(condition number {cond:.3e})"
        )
    beta, *_ = np.linalg.lstsq(x_dm, target, rcond=None)
    return beta, target - x_dm @ beta


def pseudo_true_params(
    weather: np.ndarray, spec: ModelSpec, truth: DgpTruth
) -> np.ndarray:
    """Sample-analogue pseudo-true coefficient vector of a candidate.

    Projects the true demeaned signal onto the candidate's demeaned
    feature span; on a large weather panel this approximates the
    probability limit of the within estimator (the panel counterpart of
    the omitted variable bias formula).
    """
    x_dm = _demeaned_features(weather, spec)
    beta, _ = _solve_projection(x_dm, _signal(weather, truth), spec.name)
    return beta


def pseudo_true_nested(R: np.ndarray, beta_star: np.ndarray) -> np.ndarray:
    """Pseudo-true coefficients R' beta_star when the truth is nested."""
    R = np.asarray(R, dtype=float)
    beta_star = np.asarray(beta_star, dtype=float).reshape(-1)
    if R.shape[0] != beta_star.shape[0]:
        raise DimensionError(
            f"R has {R.shape[0]} rows, beta_star has length {beta_star.shape[0]}"
        )
    return R.T @ beta_star


def misspec_delta(weather: np.ndarray, spec: ModelSpec, truth: DgpTruth) -> float:
    """Misspecification error Delta: mean squared unprojected signal.

    Computed through the residual of a least-squares sub-fit, never
    materializing the nT x nT projector.
    """
    x_dm = _demeaned_features(weather, spec)
    signal = _signal(weather, truth)
    _, resid = _solve_projection(x_dm, signal, spec.name)
    return float(resid @ resid / signal.shape[0])


def category_tolerance(weather: np.ndarray, truth: DgpTruth) -> float:
    """Relative tolerance separating Delta == 0 from Delta > 0."""
    signal = _signal(weather, truth)
    return 1e-8 * (1.0 + float(signal @ signal) / signal.shape[0])


def classify_category(delta: float, tol: float) -> str:
    """Category II when Delta vanishes (the candidate nests the truth)."""
    if delta < -tol:
        raise PanelSelectError(
            f"Delta = {delta} is negative beyond tolerance {tol}; "
            "numerical violation of Delta >= 0"
        )
    return "II" if delta <= tol else "I"


def pseudo_predictions_equal(
    weather: np.ndarray,
    spec_a: ModelSpec,
    spec_g: ModelSpec,
    truth: DgpTruth,
    tol: float = 1e-8,
) -> PredictionGap:
    """Compare the two models' predictions at their pseudo-true parameters.

    Both candidates nesting the truth forces elementwise equality; a
    strictly positive gap is the operational precondition for the
    large-penalty regime in which BIC picks the larger model among
    misspecified candidates.
    """
    signal = _signal(weather, truth)
    xa = _demeaned_features(weather, spec_a)
    xg = _demeaned_features(weather, spec_g)
    beta_a, resid_a = _solve_projection(xa, signal, spec_a.name)
    beta_g, resid_g = _solve_projection(xg, signal, spec_g.name)
    pred_a = signal - resid_a
    pred_g = signal - resid_g
    scale = max(float(np.abs(pred_a).max(initial=0.0)),
                float(np.abs(pred_g).max(initial=0.0)), 1e-12)
    max_gap = float(np.abs(pred_a - pred_g).max())
    return PredictionGap(
        equal=max_gap <= tol * scale, max_gap=max_gap, scale=scale, tol=tol
    )


def mspe_decompose(
    truth: DgpTruth, spec: ModelSpec, weather: np.ndarray, n: int, T: int
) -> MspeParts:
    """Analytic MSPE parts under homoskedastic, serially uncorrelated errors.

    noise sigma2 (T-1)/T from demeaning fresh errors, dimension
    sigma2 k/(nT) from estimation noise, plus the misspecification
    error Delta of the candidate.
    """
    weather = np.asarray(weather, dtype=float)
    if weather.shape[0] != n or weather.shape[1] != T:
        raise DimensionError(
            f"weather has shape {weather.shape[:2]}, expected (n={n}, T={T})"
        )
    sigma2 = truth.sigma2
    return MspeParts(
        noise=sigma2 * (T - 1) / T,
        dimension=sigma2 * spec.k / (n * T),
        misspec=misspec_delta(weather, spec, truth),
    )


def mspe_monte_carlo(
    truth: DgpTruth,
    spec: ModelSpec,
    weather: np.ndarray,
    reps: int = 200,
    seed: int = 0,
):
    """Fresh-sample Monte Carlo estimate of the MSPE and its standard error.

    Each replication draws iid N(0, sigma2) errors for an estimation
    panel and an independent prediction panel on the same weather, fits
    the candidate within-style, and scores squared prediction error on
    the demeaned fresh outcomes.  Unit effects cancel under demeaning so
    they are not drawn.
    """
    weather = np.asarray(weather, dtype=float)
    n, T, _ = weather.shape
    x_dm = _demeaned_features(weather, spec)
    signal = _signal(weather, truth)
    k = spec.k
    gram = x_dm.T @ x_dm if k else None
    sd = np.sqrt(truth.sigma2)
    values = np.empty(reps)
    for r in range(reps):
        rng = np.random.default_rng(np.random.SeedSequence([seed, r]))
        u = rng.normal(0.0, sd, size=(n, T))
        y_dm = signal + demean_within(u).reshape(-1)
        if k:
            beta = np.linalg.solve(gram, x_dm.T @ y_dm)
            fitted = x_dm @ beta
        else:
            fitted = np.zeros(n * T)
        u_z = rng.normal(0.0, sd, size=(n, T))
        z_dm = signal + demean_within(u_z).reshape(-1)
        values[r] = np.mean((z_dm - fitted) ** 2)
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(reps))


def pseudo_true_analysis(
    weather: np.ndarray,
    spec: ModelSpec,
    truth: DgpTruth,
    tol: Optional[float] = None,
) -> PseudoTrueResult:
    """Full pseudo-true diagnosis of one candidate on a weather panel."""
    weather = np.asarray(weather, dtype=float)
    n, T, _ = weather.shape
    beta = pseudo_true_params(weather, spec, truth)
    delta = misspec_delta(weather, spec, truth)
    if tol is None:
        tol = category_tolerance(weather, truth)
    category = classify_category(delta, tol)
    parts = mspe_decompose(truth, spec, weather, n, T)
    return PseudoTrueResult(
        model_name=spec.name,
        beta_pseudo=beta,
        delta=delta,
        category=category,
        mspe_parts=parts,
    )
