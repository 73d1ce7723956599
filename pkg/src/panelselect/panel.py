"""Fixed-effects panel core: data model, within transformation, estimation.

The estimator is the classic within (demeaning) estimator for a balanced
panel.  Unit fixed effects are absorbed by subtracting unit means, never
estimated.  The error variance uses the n(T-1) divisor so that the
profile log-likelihood is -n(T-1) * log(sigma2), and inference uses the
cluster-sandwich covariance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .exceptions import (
    DegenerateFitError,
    DimensionError,
    RankDeficiencyError,
    ValidationError,
)

# Floor applied to sigma2 before taking logs so a perfect fit reports a
# finite (huge) log-likelihood instead of +inf; the ordering against any
# non-degenerate model is preserved.
SIGMA2_FLOOR = 1e-300


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float).copy()
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class PanelDataset:
    """A balanced panel with high-frequency regressors.

    Parameters
    ----------
    unit_ids : sequence of n labels
    period_ids : sequence of T labels
    outcome : (n, T) array
        Outcome observed once per unit and period.
    weather : (n, T, H) array
        H sub-period observations (e.g. daily temperature) per period.
    controls : (n, T, c) array, optional
        Additional regressors entering every candidate model.
    control_names : sequence of c labels, optional
    cluster_ids : sequence of n labels, optional
        Covariance clustering labels; defaults to one cluster per unit.
    period_calendar : sequence of H labels, optional
        Sub-period position labels, 1..H when omitted.
    """

    unit_ids: tuple
    period_ids: tuple
    outcome: np.ndarray
    weather: np.ndarray
    controls: Optional[np.ndarray] = None
    control_names: tuple = ()
    cluster_ids: tuple = ()
    period_calendar: tuple = ()

    def __post_init__(self):
        units = tuple(self.unit_ids)
        periods = tuple(self.period_ids)
        object.__setattr__(self, "unit_ids", units)
        object.__setattr__(self, "period_ids", periods)
        n, T = len(units), len(periods)
        if n < 2:
            raise ValidationError(f"need at least 2 units, got n={n}")
        if T < 2:
            raise ValidationError(f"need at least 2 periods, got T={T}")
        if len(set(units)) != n:
            raise ValidationError("unit_ids contain duplicates")
        if len(set(periods)) != T:
            raise ValidationError("period_ids contain duplicates")

        outcome = np.asarray(self.outcome, dtype=float)
        if outcome.shape != (n, T):
            raise DimensionError(
                f"outcome has shape {outcome.shape}, expected (n={n}, T={T})"
            )
        weather = np.asarray(self.weather, dtype=float)
        if weather.ndim != 3 or weather.shape[:2] != (n, T):
            raise DimensionError(
                f"weather has shape {weather.shape}, expected (n={n}, T={T}, H)"
            )
        H = weather.shape[2]
        if H < 1:
            raise DimensionError("weather must have H >= 1 sub-period observations")
        for name, a in (("outcome", outcome), ("weather", weather)):
            if not np.all(np.isfinite(a)):
                raise ValidationError(f"{name} contains NaN or infinite values; panels must be balanced and complete")
        object.__setattr__(self, "outcome", _readonly(outcome))
        object.__setattr__(self, "weather", _readonly(weather))

        if self.controls is not None:
            controls = np.asarray(self.controls, dtype=float)
            if controls.ndim != 3 or controls.shape[:2] != (n, T):
                raise DimensionError(
                    f"controls have shape {controls.shape}, expected (n={n}, T={T}, c)"
                )
            if not np.all(np.isfinite(controls)):
                raise ValidationError("controls contain NaN or infinite values")
            names = tuple(self.control_names) or tuple(
                f"control_{j + 1}" for j in range(controls.shape[2])
            )
            if len(names) != controls.shape[2]:
                raise DimensionError(
                    f"{len(names)} control names for {controls.shape[2]} control columns"
                )
            object.__setattr__(self, "controls", _readonly(controls))
            object.__setattr__(self, "control_names", names)
        else:
            object.__setattr__(self, "control_names", ())

        clusters = tuple(self.cluster_ids) if self.cluster_ids else units
        if len(clusters) != n:
            raise DimensionError(f"{len(clusters)} cluster labels for n={n} units")
        object.__setattr__(self, "cluster_ids", clusters)

        calendar = tuple(self.period_calendar) if self.period_calendar else tuple(range(1, H + 1))
        if len(calendar) != H:
            raise DimensionError(f"{len(calendar)} calendar labels for H={H} sub-periods")
        object.__setattr__(self, "period_calendar", calendar)

    @property
    def n(self) -> int:
        return len(self.unit_ids)

    @property
    def T(self) -> int:
        return len(self.period_ids)

    @property
    def H(self) -> int:
        return self.weather.shape[2]

    @property
    def n_obs(self) -> int:
        return self.n * self.T


@dataclass(frozen=True)
class WithinView:
    """Within-demeaned outcome and design, plus the unit means removed.

    Rows of ``demeaned_design`` are stacked unit-major, period-minor, the
    same layout as ``outcome.reshape(-1)``.  Unit means are retained so a
    held-out unit can be demeaned with its own means in cross-validation.
    """

    demeaned_outcome: np.ndarray  # (n, T)
    demeaned_design: np.ndarray  # (nT, k)
    outcome_unit_means: np.ndarray  # (n,)
    design_unit_means: np.ndarray  # (n, k)


@dataclass(frozen=True)
class FEFit:
    """Within-estimator output for one candidate model."""

    model_name: str
    beta_hat: np.ndarray  # (k,)
    sigma2_hat: float
    loglik: float
    residuals: np.ndarray  # (n, T)
    clustered_cov: np.ndarray  # (k, k)
    k: int  # total fitted design dimension
    n_obs: int  # nT
    n: int
    T: int
    k_features: int  # leading columns produced by the feature map
    coef_names: tuple = ()
    perfect_fit: bool = False

    @property
    def clustered_se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.clustered_cov), 0.0, None))

    @property
    def t_stats(self) -> np.ndarray:
        se = self.clustered_se
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(se > 0, self.beta_hat / se, np.inf * np.sign(self.beta_hat))


def demean_within(values: np.ndarray) -> np.ndarray:
    """Subtract unit means along axis 1 of an (n, T, ...) array."""
    values = np.asarray(values, dtype=float)
    return values - values.mean(axis=1, keepdims=True)


def within_transform(data: PanelDataset, design: np.ndarray) -> WithinView:
    """Apply the within transformation to the outcome and a stacked design.

    Parameters
    ----------
    data : PanelDataset
    design : (nT, k) array
        Stacked unit-major, period-minor, matching the dataset layout.

    Returns
    -------
    WithinView
    """
    design = np.asarray(design, dtype=float)
    n, T = data.n, data.T
    if design.ndim != 2:
        raise DimensionError(f"design must be 2-d, got ndim={design.ndim}")
    if design.shape[0] != n * T:
        raise DimensionError(
            f"design has {design.shape[0]} rows along axis 0, expected nT={n * T}"
        )
    k = design.shape[1]
    y_means = data.outcome.mean(axis=1)
    y_dm = data.outcome - y_means[:, None]
    x = design.reshape(n, T, k)
    x_means = x.mean(axis=1)
    x_dm = (x - x_means[:, None, :]).reshape(n * T, k)
    return WithinView(
        demeaned_outcome=y_dm,
        demeaned_design=x_dm,
        outcome_unit_means=y_means,
        design_unit_means=x_means,
    )


def _check_rank(x_dm: np.ndarray, names: Sequence[str]):
    """Raise RankDeficiencyError when the demeaned design is not full rank."""
    nT, k = x_dm.shape
    if k == 0:
        return
    s = np.linalg.svd(x_dm, compute_uv=False)
    tol = np.finfo(float).eps * max(nT, k) * s[0] if s[0] > 0 else 0.0
    rank = int(np.count_nonzero(s > tol))
    if rank < k:
        # Columns loading on the null directions are the near-collinear ones.
        _, _, vt = np.linalg.svd(x_dm, full_matrices=False)
        null_mass = np.abs(vt[rank:]).max(axis=0)
        suspects = [names[j] for j in np.nonzero(null_mass > 1e-8)[0]] if len(names) == k else []
        cond = s[0] / s[min(rank, k - 1)] if s.min() == 0 else s[0] / s.min()
        raise RankDeficiencyError(
            f"demeaned design is rank deficient (rank {rank} < k {k}); "
            f"near-collinear columns: {suspects or 'unknown'}; condition number {cond:.3e}",
            condition_number=cond,
            columns=suspects,
        )


def solve_within(y_dm: np.ndarray, x_dm: np.ndarray, names: Sequence[str] = ()) -> np.ndarray:
    """Least squares on demeaned data via orthogonal factorization.

    Raises RankDeficiencyError with a condition-number diagnostic instead
    of silently returning a minimum-norm solution.
    """
    if x_dm.shape[1] == 0:
        return np.zeros(0)
    _check_rank(x_dm, names)
    beta, *_ = np.linalg.lstsq(x_dm, y_dm, rcond=None)
    return beta


def cluster_sandwich(
    x_dm: np.ndarray, residuals: np.ndarray, groups: np.ndarray
) -> np.ndarray:
    """Cluster-robust sandwich covariance for the within estimator.

    meat = sum_g (X_g' r_g)(X_g' r_g)', bread = (X'X)^(-1), with the
    G/(G-1) * (N-1)/(N-k) finite-sample correction.  With every
    observation its own cluster this reduces to the HC1 estimator.
    """
    k = x_dm.shape[1]
    if k == 0:
        return np.zeros((0, 0))
    N = x_dm.shape[0]
    _, inverse = np.unique(groups, return_inverse=True)
    G = int(inverse.max()) + 1
    weighted = x_dm * residuals[:, None]
    scores = np.zeros((G, k))
    np.add.at(scores, inverse, weighted)
    meat = scores.T @ scores
    bread_inv = np.linalg.inv(x_dm.T @ x_dm)
    correction = (G / (G - 1)) * ((N - 1) / (N - k)) if G > 1 else 1.0
    cov = correction * bread_inv @ meat @ bread_inv
    return 0.5 * (cov + cov.T)


def _assemble_design(data: PanelDataset, spec, controls: bool, year_effects: bool):
    """Stack feature, control and period-dummy columns for one model."""
    from .features import build_design

    cols = [build_design(data, spec)]
    names = list(spec.feature_names)
    n, T = data.n, data.T
    if controls and data.controls is not None:
        cols.append(data.controls.reshape(n * T, -1))
        names.extend(data.control_names)
    if year_effects:
        # First period dropped to avoid collinearity with unit effects.
        dummies = np.zeros((n * T, T - 1))
        period_index = np.tile(np.arange(T), n)
        for t in range(1, T):
            dummies[period_index == t, t - 1] = 1.0
        cols.append(dummies)
        names.extend(f"period_{p}" for p in data.period_ids[1:])
    return np.hstack(cols), tuple(names)


def fe_estimate(
    data: PanelDataset,
    spec,
    controls: bool = True,
    year_effects: bool = False,
) -> FEFit:
    """Fixed-effects least squares for one candidate model.

    The design is the model's feature columns, followed by any controls
    and optional period dummies.  Unit effects are absorbed by the within
    transformation; sigma2 uses the n(T-1) divisor and the log-likelihood
    is -n(T-1)*log(sigma2).

    Returns
    -------
    FEFit
    """
    design, names = _assemble_design(data, spec, controls, year_effects)
    view = within_transform(data, design)
    n, T = data.n, data.T
    y_dm = view.demeaned_outcome.reshape(-1)
    beta = solve_within(y_dm, view.demeaned_design, names)
    fitted = view.demeaned_design @ beta if beta.size else np.zeros(n * T)
    resid = (y_dm - fitted).reshape(n, T)
    dof = n * (T - 1)
    sigma2 = float((resid ** 2).sum() / dof)
    # Perfect fit detected relative to the outcome scale: a noiseless
    # problem leaves sigma2 at rounding level, not exactly zero.
    perfect = sigma2 <= 1e-20 * max(1.0, float(np.mean(y_dm ** 2)))
    loglik = float(-dof * np.log(max(sigma2, SIGMA2_FLOOR)))
    cluster_index = {c: i for i, c in enumerate(dict.fromkeys(data.cluster_ids))}
    cluster_of_unit = np.array([cluster_index[c] for c in data.cluster_ids])
    groups = np.repeat(cluster_of_unit, T)
    cov = cluster_sandwich(view.demeaned_design, resid.reshape(-1), groups)
    return FEFit(
        model_name=spec.name,
        beta_hat=beta,
        sigma2_hat=sigma2,
        loglik=loglik,
        residuals=resid,
        clustered_cov=cov,
        k=design.shape[1],
        n_obs=n * T,
        n=n,
        T=T,
        k_features=spec.k,
        coef_names=names,
        perfect_fit=perfect,
    )


def profile_loglik(fit: FEFit) -> float:
    """Conditional profile log-likelihood -n(T-1)*log(sigma2) of a fit.

    A perfect fit (sigma2 == 0) has a degenerate likelihood; it signals
    via DegenerateFitError so the caller can treat the model as winning
    any likelihood comparison.
    """
    if fit.perfect_fit:
        raise DegenerateFitError(
            f"model '{fit.model_name}' fits perfectly (sigma2 = 0); "
            "profile log-likelihood is unbounded"
        )
    return float(-fit.n * (fit.T - 1) * np.log(fit.sigma2_hat))


def predict_within(fit: FEFit, view: WithinView) -> np.ndarray:
    """Within-demeaned predictions X~ beta_hat, shaped (n, T)."""
    if view.demeaned_design.shape[1] != fit.k:
        raise DimensionError(
            f"view has k={view.demeaned_design.shape[1]} design columns, fit has k={fit.k}"
        )
    pred = view.demeaned_design @ fit.beta_hat if fit.k else np.zeros(view.demeaned_design.shape[0])
    return pred.reshape(fit.n, fit.T)


def delta_prediction(
    fit: FEFit, spec, weather_a: np.ndarray, weather_b: np.ndarray
) -> float:
    """Predicted outcome change when sub-period weather moves from a to b.

    Fixed effects and control terms cancel in the difference, so only the
    feature-map coefficients enter.
    """
    if spec.k != fit.k_features:
        raise DimensionError(
            f"spec '{spec.name}' has k={spec.k} features, fit carries k_features={fit.k_features}"
        )
    xa = spec.apply(np.asarray(weather_a, dtype=float))
    xb = spec.apply(np.asarray(weather_b, dtype=float))
    beta = fit.beta_hat[: fit.k_features]
    return float((xb - xa) @ beta)


def unit_moments(y_dm: np.ndarray, x_dm: np.ndarray):
    """Per-unit sufficient statistics of the demeaned data.

    Parameters
    ----------
    y_dm : (n, T) array
    x_dm : (n, T, k) array

    Returns
    -------
    (sxx, sxy, syy) : ((n, k, k), (n, k), (n,)) arrays
        Everything a train/test split needs: any subset's least squares
        problem and residual sum of squares are sums of these.
    """
    sxx = np.einsum("ntj,ntk->njk", x_dm, x_dm)
    sxy = np.einsum("ntj,nt->nj", x_dm, y_dm)
    syy = np.einsum("nt,nt->n", y_dm, y_dm)
    return sxx, sxy, syy
