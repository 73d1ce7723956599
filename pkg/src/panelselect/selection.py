"""Model selection criteria: penalized profile likelihood and MCCV.

Two families are implemented over a common candidate registry:

* GIC: profile log-likelihood minus a dimension penalty, maximized.
  Penalties cover AIC (2), BIC (log nT), and the square-root family
  sqrt(nT log log nT) / sqrt(nT log nT) whose growth exceeds sqrt(nT).
* Monte Carlo cross-validation: repeated random unit splits, fitting on
  the training complement and scoring squared prediction error on the
  within-demeaned test units, minimized.  The testing fraction is either
  fixed (n_c/n = p) or grows to one with n_c = ceil(n^(3/4)), the regime
  that makes the procedure selection-consistent.

The same b splits are reused for every candidate (common random
numbers), which makes score differences comparable and reports
deterministic given a seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .exceptions import RankDeficiencyError, ValidationError
from .panel import fe_estimate, unit_moments, within_transform
from .features import build_design

TIE_RTOL = 1e-10

_PENALTIES = ("aic", "bic", "sw1", "sw2")


def penalty_value(kind: Union[str, Callable], n: int, T: int) -> float:
    """Dimension penalty lambda for a GIC variant at sample size nT."""
    nT = n * T
    if nT < 2:
        raise ValidationError(f"penalty needs nT >= 2, got nT={nT}")
    if callable(kind):
        lam = float(kind(nT))
        if lam <= 0:
            raise ValidationError(f"custom penalty must be positive, got {lam}")
        return lam
    kind = kind.lower()
    if kind == "aic":
        return 2.0
    if kind == "bic":
        return math.log(nT)
    if kind == "sw1":
        if nT < 3:
            raise ValidationError(
                f"sw1 needs log(log(nT)) > 0, i.e. nT >= 3, got nT={nT}"
            )
        return math.sqrt(nT * math.log(math.log(nT)))
    if kind == "sw2":
        return math.sqrt(nT * math.log(nT))
    raise ValidationError(f"unknown penalty {kind!r}; known: {_PENALTIES}")


@dataclass(frozen=True)
class CriterionSpec:
    """One selection criterion: a GIC penalty or an MCCV configuration."""

    kind: str  # "gic" | "mccv"
    penalty: Optional[Union[str, Callable]] = None
    ratio_rule: str = "shao"  # "fixed_p" | "shao"
    p: Optional[float] = None
    b: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.kind == "gic":
            if self.penalty is None:
                raise ValidationError("GIC criterion needs a penalty")
        elif self.kind == "mccv":
            if self.ratio_rule == "fixed_p":
                if self.p is None or not (0.0 < self.p < 1.0):
                    raise ValidationError(
                        f"fixed-p MCCV needs 0 < p < 1, got p={self.p}"
                    )
            elif self.ratio_rule != "shao":
                raise ValidationError(f"unknown ratio rule {self.ratio_rule!r}")
            if self.b is not None and self.b < 1:
                raise ValidationError(f"MCCV needs b >= 1 splits, got b={self.b}")
        else:
            raise ValidationError(f"unknown criterion kind {self.kind!r}")

    @property
    def label(self) -> str:
        if self.kind == "gic":
            return self.penalty if isinstance(self.penalty, str) else "gic-custom"
        if self.ratio_rule == "shao":
            return "mccv-shao"
        return f"mccv-p:{self.p:g}"

    @property
    def direction(self) -> str:
        return "max" if self.kind == "gic" else "min"

    def split_sizes(self, n: int):
        """Training and test sizes (n_c, n_v) for a panel of n units."""
        if self.kind != "mccv":
            raise ValidationError("split sizes only apply to MCCV criteria")
        if self.ratio_rule == "shao":
            n_c = math.ceil(n ** 0.75)
        else:
            n_c = int(round(self.p * n))
        n_c = min(max(n_c, 1), n - 1)
        return n_c, n - n_c

    def n_splits(self, n: int) -> int:
        if self.b is not None:
            return self.b
        n_c, _ = self.split_sizes(n)
        return max(100, math.ceil(n / n_c) * 20)


def gic(penalty: Union[str, Callable]) -> CriterionSpec:
    return CriterionSpec(kind="gic", penalty=penalty)


def mccv_shao(b: Optional[int] = None, seed: int = 0) -> CriterionSpec:
    return CriterionSpec(kind="mccv", ratio_rule="shao", b=b, seed=seed)


def mccv_fixed_p(p: float, b: Optional[int] = None, seed: int = 0) -> CriterionSpec:
    return CriterionSpec(kind="mccv", ratio_rule="fixed_p", p=p, b=b, seed=seed)


def parse_criteria(
    tokens: Union[str, Sequence[str]], b: Optional[int] = None, seed: int = 0
) -> list:
    """Parse CLI criterion tokens like 'aic,bic,mccv-p:0.75,mccv-shao'."""
    if isinstance(tokens, str):
        tokens = [t for t in tokens.split(",") if t]
    out = []
    for token in tokens:
        token = token.strip().lower()
        if token in _PENALTIES:
            out.append(gic(token))
        elif token == "mccv-shao":
            out.append(mccv_shao(b=b, seed=seed))
        elif token.startswith("mccv-p:"):
            try:
                p = float(token.split(":", 1)[1])
            except ValueError:
                raise ValidationError(f"bad MCCV ratio in {token!r}") from None
            out.append(mccv_fixed_p(p, b=b, seed=seed))
        else:
            raise ValidationError(
                f"unknown criterion {token!r}; expected one of {_PENALTIES}, "
                "mccv-shao, or mccv-p:<ratio>"
            )
    if not out:
        raise ValidationError("no criteria given")
    return out


@dataclass(frozen=True)
class SelectionReport:
    """Scores per candidate and the winner for one criterion."""

    criterion: str
    direction: str  # "max" for GIC, "min" for MCCV
    scores: dict
    selected: str
    ties: tuple
    n: int
    T: int

    @property
    def n_obs(self) -> int:
        return self.n * self.T


def _pick_winner(scores: dict, dims: dict, direction: str):
    values = scores.values()
    opt = max(values) if direction == "max" else min(values)
    tol = TIE_RTOL * (1.0 + abs(opt))
    tied = [m for m, v in scores.items() if abs(v - opt) <= tol]
    selected = min(tied, key=lambda m: (dims[m], m))
    return selected, tuple(sorted(tied)) if len(tied) > 1 else ()


# ---------------------------------------------------------------------------
# GIC
# ---------------------------------------------------------------------------

def gic_score(loglik: float, k: int, lam: float) -> float:
    return loglik - lam * k


def gic_select(
    data,
    models: Sequence,
    penalty: Union[str, Callable],
    controls: bool = True,
    year_effects: bool = False,
) -> SelectionReport:
    """Fit every candidate and maximize profile log-likelihood - lambda*k."""
    lam = penalty_value(penalty, data.n, data.T)
    scores, dims = {}, {}
    for spec in models:
        try:
            fit = fe_estimate(data, spec, controls=controls, year_effects=year_effects)
        except RankDeficiencyError as exc:
            raise RankDeficiencyError(
                f"model '{spec.name}' failed to fit: {exc}",
                condition_number=exc.condition_number,
                columns=exc.columns,
            ) from exc
        scores[spec.name] = gic_score(fit.loglik, fit.k, lam)
        dims[spec.name] = fit.k
    selected, ties = _pick_winner(scores, dims, "max")
    label = penalty if isinstance(penalty, str) else "gic-custom"
    return SelectionReport(
        criterion=label, direction="max", scores=scores,
        selected=selected, ties=ties, n=data.n, T=data.T,
    )


# ---------------------------------------------------------------------------
# MCCV
# ---------------------------------------------------------------------------

def _seed_key(seed) -> tuple:
    return tuple(seed) if isinstance(seed, (tuple, list)) else (int(seed),)


def _split_rng(seed, split_index: int, attempt: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence([*_seed_key(seed), split_index, attempt])
    )


def _train_ok(sxx_models, train_idx) -> bool:
    """Every candidate's training moment matrix must be well conditioned."""
    for sxx in sxx_models:
        k = sxx.shape[1]
        if k == 0:
            continue
        m = sxx[train_idx].sum(axis=0)
        eigs = np.linalg.eigvalsh(m)
        if eigs[0] <= np.finfo(float).eps * max(1.0, eigs[-1]) * k * 100:
            return False
    return True


def draw_split_masks(
    n: int,
    n_v: int,
    b: int,
    seed,
    sxx_models: Sequence[np.ndarray] = (),
) -> np.ndarray:
    """Draw b test subsets of size n_v as a (b, n) boolean mask.

    Split s is produced by the stream derived from (seed, s, attempt),
    so the collection does not depend on evaluation order; seed may be
    an int or a tuple of ints.  A split whose training complement leaves
    any candidate rank deficient is redrawn, up to 10*b attempts in
    total.
    """
    if not (1 <= n_v <= n - 1):
        raise ValidationError(f"test size n_v={n_v} must lie in [1, n-1]")
    masks = np.zeros((b, n), dtype=bool)
    budget = 10 * b
    used = 0
    for s in range(b):
        for attempt in range(budget + 1):
            used += 1
            if used > b + budget:
                raise ValidationError(
                    f"exceeded {budget} split redraws; candidate designs are "
                    "too often rank deficient on training sets"
                )
            rng = _split_rng(seed, s, attempt)
            test = rng.permutation(n)[:n_v]
            train = np.setdiff1d(np.arange(n), test, assume_unique=True)
            if not sxx_models or _train_ok(sxx_models, train):
                masks[s, test] = True
                break
    return masks


def mccv_gamma(
    sxx: np.ndarray,
    sxy: np.ndarray,
    syy: np.ndarray,
    test_masks: np.ndarray,
    T: int,
) -> float:
    """MCCV criterion from per-unit demeaned moments and test masks.

    For each split, fit on the complement and accumulate the squared
    prediction error of the within-demeaned test outcomes; average over
    n_v * T * b.
    """
    b, n = test_masks.shape
    n_v = int(test_masks[0].sum())
    test_f = test_masks.astype(float)
    train_f = 1.0 - test_f
    k = sxx.shape[1]
    syy_test = test_f @ syy
    if k == 0:
        return float(syy_test.sum() / (n_v * T * b))
    sxx_flat = sxx.reshape(n, k * k)
    sxx_train = (train_f @ sxx_flat).reshape(b, k, k)
    sxy_train = train_f @ sxy
    beta = np.linalg.solve(sxx_train, sxy_train[:, :, None])[:, :, 0]
    sxx_test = (test_f @ sxx_flat).reshape(b, k, k)
    sxy_test = test_f @ sxy
    rss = (
        syy_test
        - 2.0 * np.einsum("bk,bk->b", beta, sxy_test)
        + np.einsum("bi,bij,bj->b", beta, sxx_test, beta)
    )
    return float(rss.sum() / (n_v * T * b))


def _model_moments(data, models, controls, year_effects):
    from .panel import _assemble_design

    n, T = data.n, data.T
    out = []
    for spec in models:
        design, names = _assemble_design(data, spec, controls, year_effects)
        view = within_transform(data, design)
        x_dm = view.demeaned_design.reshape(n, T, -1)
        out.append(unit_moments(view.demeaned_outcome, x_dm))
    return out


def mccv_select(
    data,
    models: Sequence,
    config: CriterionSpec,
    controls: bool = True,
    year_effects: bool = False,
) -> SelectionReport:
    """Minimize the MCCV squared prediction error over candidates.

    The same splits are used for every model, so the pure-noise part of
    the criterion cancels from score comparisons.
    """
    if config.kind != "mccv":
        raise ValidationError("mccv_select needs an MCCV criterion")
    n, T = data.n, data.T
    n_c, n_v = config.split_sizes(n)
    b = config.n_splits(n)
    moments = _model_moments(data, models, controls, year_effects)
    for spec, (sxx, _, _) in zip(models, moments):
        if n_c < sxx.shape[1] + 1:
            raise ValidationError(
                f"training size n_c={n_c} too small for model '{spec.name}' "
                f"with k={sxx.shape[1]}"
            )
    masks = draw_split_masks(
        n, n_v, b, config.seed, sxx_models=[m[0] for m in moments]
    )
    scores, dims = {}, {}
    for spec, (sxx, sxy, syy) in zip(models, moments):
        scores[spec.name] = mccv_gamma(sxx, sxy, syy, masks, T)
        dims[spec.name] = sxx.shape[1]
    selected, ties = _pick_winner(scores, dims, "min")
    return SelectionReport(
        criterion=config.label, direction="min", scores=scores,
        selected=selected, ties=ties, n=n, T=T,
    )


def mccv_score(
    data,
    spec,
    config: CriterionSpec,
    controls: bool = True,
    year_effects: bool = False,
) -> float:
    """MCCV criterion value for a single candidate model."""
    report = mccv_select(
        data, [spec], config, controls=controls, year_effects=year_effects
    )
    return report.scores[spec.name]


def select(
    data,
    models: Sequence,
    criteria: Sequence[CriterionSpec],
    controls: bool = True,
    year_effects: bool = False,
) -> list:
    """Run a suite of criteria over one candidate set."""
    reports = []
    for crit in criteria:
        if crit.kind == "gic":
            reports.append(
                gic_select(data, models, crit.penalty, controls, year_effects)
            )
        else:
            reports.append(mccv_select(data, models, crit, controls, year_effects))
    return reports
