"""Feature maps compressing H sub-period observations into model regressors.

Each candidate model is a named map from the H-vector of sub-period
weather to a k-vector of regressors: period-block means at several
aggregation levels, the annual mean with its square, interval bin
counts, and degree days.  Linear maps admit an exact k x H matrix
representation, which is what makes exact nesting relations between
candidates decidable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .exceptions import DimensionError, RegistryError, ValidationError

# Non-leap month lengths used whenever H is a full daily year.
_MONTH_LENGTHS_365 = (31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31)


def month_blocks(H: int) -> tuple:
    """Partition positions 0..H-1 into 12 contiguous months."""
    if H == 365:
        bounds = np.cumsum((0,) + _MONTH_LENGTHS_365)
        return tuple(np.arange(bounds[i], bounds[i + 1]) for i in range(12))
    if H < 12:
        raise ValidationError(f"monthly blocks need H >= 12, got H={H}")
    return tuple(np.array_split(np.arange(H), 12))


def quarter_blocks(H: int) -> tuple:
    """Partition positions 0..H-1 into 4 quarters (month triples when H >= 12)."""
    if H >= 12:
        months = month_blocks(H)
        return tuple(
            np.concatenate(months[3 * q : 3 * q + 3]) for q in range(4)
        )
    if H < 4:
        raise ValidationError(f"quarter blocks need H >= 4, got H={H}")
    return tuple(np.array_split(np.arange(H), 4))


def half_blocks(H: int) -> tuple:
    """Partition positions 0..H-1 into 2 halves (quarter pairs when H >= 4)."""
    if H >= 4:
        quarters = quarter_blocks(H)
        return (
            np.concatenate(quarters[:2]),
            np.concatenate(quarters[2:]),
        )
    if H < 2:
        raise ValidationError(f"half blocks need H >= 2, got H={H}")
    return tuple(np.array_split(np.arange(H), 2))


def _validate_partition(blocks: Sequence[np.ndarray], H: int):
    seen = np.concatenate([np.asarray(b) for b in blocks]) if blocks else np.array([], dtype=int)
    for i, b in enumerate(blocks):
        if len(b) == 0:
            raise ValidationError(f"calendar period {i + 1} is empty")
    if len(seen) != H or not np.array_equal(np.sort(seen), np.arange(H)):
        raise ValidationError("calendar blocks must partition positions 1..H exactly once")


def _block_mean_matrix(blocks: Sequence[np.ndarray], H: int) -> np.ndarray:
    m = np.zeros((len(blocks), H))
    for i, b in enumerate(blocks):
        m[i, b] = 1.0 / len(b)
    return m


@dataclass(frozen=True)
class ModelSpec:
    """A named feature map from H-vectors to k-vectors.

    Built through the module-level constructors (``annual_mean``,
    ``quarterly_means``, ``bins``, ...) rather than directly.  ``matrix``
    is set exactly for linear kinds and None otherwise.
    """

    name: str
    kind: str
    k: int
    H: int
    feature_names: tuple
    matrix: Optional[np.ndarray] = None
    edges: Optional[tuple] = None
    bases: Optional[tuple] = None
    fn: Optional[Callable] = None
    unbounded_ends: bool = True

    @property
    def is_linear(self) -> bool:
        return self.matrix is not None

    def apply(self, w: np.ndarray) -> np.ndarray:
        """Map one H-vector (or a stack of them) to feature space."""
        w = np.asarray(w, dtype=float)
        if w.shape[-1] != self.H:
            raise DimensionError(
                f"spec '{self.name}' expects H={self.H} sub-periods along the last "
                f"axis, got {w.shape[-1]}"
            )
        single = w.ndim == 1
        w2 = w[None, :] if single else w.reshape(-1, self.H)
        out = self._apply2d(w2)
        if single:
            return out[0]
        return out.reshape(w.shape[:-1] + (self.k,))

    def _apply2d(self, w: np.ndarray) -> np.ndarray:
        if self.matrix is not None:
            return w @ self.matrix.T
        if self.kind == "quadratic_annual":
            m = w.mean(axis=1)
            return np.column_stack([m, m ** 2])
        if self.kind == "bins":
            edges = np.asarray(self.edges)
            idx = np.digitize(w, edges)  # right-open [e_j, e_{j+1})
            counts = np.zeros((w.shape[0], len(edges) + 1))
            rows = np.repeat(np.arange(w.shape[0]), w.shape[1])
            np.add.at(counts, (rows, idx.reshape(-1)), 1.0)
            return counts if self.unbounded_ends else counts[:, 1:-1]
        if self.kind == "degree_days":
            bases = np.asarray(self.bases)
            exceed = np.clip(w[:, :, None] - bases[None, None, :], 0.0, None)
            return exceed.sum(axis=1)
        if self.kind == "none":
            return np.zeros((w.shape[0], 0))
        if self.fn is not None:
            out = np.asarray([self.fn(row) for row in w], dtype=float)
            if out.shape != (w.shape[0], self.k):
                raise DimensionError(
                    f"custom map '{self.name}' returned shape {out.shape}, "
                    f"expected ({w.shape[0]}, {self.k})"
                )
            return out
        raise ValidationError(f"spec '{self.name}' has no applicable feature map")


def _linear_spec(name, kind, H, blocks, feature_names):
    _validate_partition(blocks, H)
    return ModelSpec(
        name=name,
        kind=kind,
        k=len(blocks),
        H=H,
        feature_names=tuple(feature_names),
        matrix=_block_mean_matrix(blocks, H),
    )


def annual_mean(H: int, name: str = "annual") -> ModelSpec:
    return _linear_spec(name, "annual_mean", H, (np.arange(H),), ("annual_mean",))


def biannual_means(H: int, name: str = "biannual") -> ModelSpec:
    return _linear_spec(
        name, "biannual_means", H, half_blocks(H), ("h1_mean", "h2_mean")
    )


def quarterly_means(H: int, name: str = "quarterly") -> ModelSpec:
    return _linear_spec(
        name,
        "quarterly_means",
        H,
        quarter_blocks(H),
        ("q1_mean", "q2_mean", "q3_mean", "q4_mean"),
    )


def monthly_means(H: int, name: str = "monthly") -> ModelSpec:
    return _linear_spec(
        name,
        "monthly_means",
        H,
        month_blocks(H),
        tuple(f"m{i + 1}_mean" for i in range(12)),
    )


def quadratic_annual(H: int, name: str = "quadratic") -> ModelSpec:
    return ModelSpec(
        name=name,
        kind="quadratic_annual",
        k=2,
        H=H,
        feature_names=("annual_mean", "annual_mean_sq"),
    )


def bins(
    H: int, edges: Sequence[float], name: str = "bins", unbounded_ends: bool = True
) -> ModelSpec:
    """Counts of sub-period values in right-open intervals.

    ``edges = (e1, ..., em)`` yields m+1 bins by default: (-inf, e1),
    [e1, e2), ..., [em, inf), so counts always sum to H.  A full bin set
    is therefore collinear with the unit effects once demeaned; pass
    ``unbounded_ends=False`` to keep only the m-1 interior bins (the
    usual omitted-category form) when the model is to be estimated.
    """
    edges = tuple(float(e) for e in edges)
    if len(edges) < 1:
        raise ValidationError("bins need at least one edge")
    if any(a >= b for a, b in zip(edges, edges[1:])):
        raise ValidationError(f"bin edges must be strictly increasing, got {edges}")
    if not unbounded_ends and len(edges) < 2:
        raise ValidationError("interior bins need at least two edges")
    names = [f"bin_{a:g}_{b:g}" for a, b in zip(edges, edges[1:])]
    k = len(edges) - 1
    if unbounded_ends:
        names = [f"bin_lt_{edges[0]:g}", *names, f"bin_ge_{edges[-1]:g}"]
        k += 2
    return ModelSpec(
        name=name,
        kind="bins",
        k=k,
        H=H,
        feature_names=tuple(names),
        edges=edges,
        unbounded_ends=unbounded_ends,
    )


def degree_days(H: int, bases: Sequence[float], name: str = "degree_days") -> ModelSpec:
    """Sum of positive exceedances over each base threshold."""
    bases = tuple(float(b) for b in bases)
    if len(bases) < 1:
        raise ValidationError("degree days need at least one base")
    return ModelSpec(
        name=name,
        kind="degree_days",
        k=len(bases),
        H=H,
        feature_names=tuple(f"dd_{b:g}" for b in bases),
        bases=bases,
    )


def no_temperature(H: int, name: str = "none") -> ModelSpec:
    """The k=0 baseline model with no weather regressors."""
    return ModelSpec(name=name, kind="none", k=0, H=H, feature_names=())


def custom_linear(name: str, matrix: np.ndarray, feature_names=None) -> ModelSpec:
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2:
        raise DimensionError("custom linear map needs a k x H matrix")
    k, H = matrix.shape
    names = tuple(feature_names) if feature_names else tuple(f"x{i + 1}" for i in range(k))
    if len(names) != k:
        raise DimensionError(f"{len(names)} feature names for k={k}")
    return ModelSpec(
        name=name, kind="custom_linear", k=k, H=H, feature_names=names, matrix=matrix
    )


def custom_map(name: str, H: int, k: int, fn: Callable, feature_names=None) -> ModelSpec:
    names = tuple(feature_names) if feature_names else tuple(f"x{i + 1}" for i in range(k))
    return ModelSpec(
        name=name, kind="custom", k=k, H=H, feature_names=names, fn=fn
    )


def build_design(data, spec: ModelSpec) -> np.ndarray:
    """Feature design for a whole panel, rows unit-major then period."""
    if spec.H != data.H:
        raise DimensionError(
            f"spec '{spec.name}' built for H={spec.H}, dataset has H={data.H}"
        )
    n, T, H = data.weather.shape
    return spec.apply(data.weather.reshape(n * T, H))


# ---------------------------------------------------------------------------
# Nesting relations
# ---------------------------------------------------------------------------

NESTED = "nested"
OVERLAPPING = "overlapping_non_nested"
STRICT = "strictly_non_nested"


@dataclass(frozen=True)
class NestingRelation:
    """Outcome of probing whether one feature map linearly contains another.

    ``nested`` means every probe satisfies x_a = R x_g; ``overlapping``
    means the two prediction spans share a nonzero function (a witness
    coefficient pair is attached); otherwise strictly non-nested.
    """

    verdict: str
    R: Optional[np.ndarray]
    witness: Optional[tuple]
    residual: float
    tol: float

    @property
    def is_nested(self) -> bool:
        return self.verdict == NESTED


def default_probes(H: int, n_random: int = 200, seed: int = 1729) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.vstack([rng.standard_normal((n_random, H)), np.eye(H)])


def detect_nesting(
    spec_a: ModelSpec,
    spec_g: ModelSpec,
    probes: Optional[np.ndarray] = None,
    tol_scale: float = 1e-8,
) -> NestingRelation:
    """Classify the relation of spec_a to spec_g over a probe set.

    Solves least squares for the matrix R mapping spec_g's features onto
    spec_a's; if the worst probe residual is within tolerance the verdict
    is nested.  Otherwise the nullspace of the stacked contrast system
    [X_a, -X_g] is searched for a coefficient pair giving identical
    nonzero predictions on every probe (overlapping); an empty nullspace
    means strictly non-nested.
    """
    if spec_a.H != spec_g.H:
        raise DimensionError(
            f"specs have different H: {spec_a.H} vs {spec_g.H}"
        )
    if probes is None:
        probes = default_probes(spec_a.H)
    probes = np.asarray(probes, dtype=float)
    needed = 10 * (spec_a.k + spec_g.k)
    if probes.shape[0] < needed:
        raise ValidationError(
            f"insufficient probes: got {probes.shape[0]}, need at least "
            f"{needed} for k_a={spec_a.k}, k_g={spec_g.k}"
        )
    xa = spec_a.apply(probes)
    xg = spec_g.apply(probes)
    scale = 1.0 + np.abs(xg).max(axis=1, initial=0.0)

    if spec_a.k > 0 and spec_g.k > 0:
        rt, *_ = np.linalg.lstsq(xg, xa, rcond=None)
        per_probe = np.abs(xa - xg @ rt).max(axis=1)
        residual = float(per_probe.max())
        if np.all(per_probe <= tol_scale * scale):
            return NestingRelation(
                verdict=NESTED, R=rt.T, witness=None,
                residual=residual, tol=tol_scale,
            )
    else:
        residual = float(np.abs(xa).max()) if spec_a.k else 0.0
        if spec_a.k == 0:
            # The empty feature map is trivially a linear image of anything.
            return NestingRelation(
                verdict=NESTED, R=np.zeros((0, spec_g.k)), witness=None,
                residual=0.0, tol=tol_scale,
            )

    stacked = np.hstack([xa, -xg])
    u, s, vt = np.linalg.svd(stacked, full_matrices=True)
    cutoff = tol_scale * (s[0] if s.size else 0.0)
    rank = int(np.count_nonzero(s > cutoff))
    null_basis = vt[rank:]
    best = None
    best_norm = 0.0
    for v in null_basis:
        shared = xa @ v[: spec_a.k]
        norm = float(np.abs(shared).max())
        if norm > best_norm:
            best_norm = norm
            best = v
    if best is not None and best_norm > tol_scale * float(scale.max()):
        v = best / np.abs(best).max()
        lead = v[np.argmax(np.abs(v) > 0.5 * np.abs(v).max())]
        if lead < 0:
            v = -v
        witness = (v[: spec_a.k].copy(), v[spec_a.k :].copy())
        return NestingRelation(
            verdict=OVERLAPPING, R=None, witness=witness,
            residual=residual, tol=tol_scale,
        )
    return NestingRelation(
        verdict=STRICT, R=None, witness=None, residual=residual, tol=tol_scale
    )


# ---------------------------------------------------------------------------
# Model registry files
# ---------------------------------------------------------------------------

_REGISTRY_KINDS = {
    "annual_mean": lambda H, name, params: annual_mean(H, name),
    "biannual_means": lambda H, name, params: biannual_means(H, name),
    "quarterly_means": lambda H, name, params: quarterly_means(H, name),
    "monthly_means": lambda H, name, params: monthly_means(H, name),
    "quadratic_annual": lambda H, name, params: quadratic_annual(H, name),
    "bins": lambda H, name, params: bins(H, params, name),
    "degree_days": lambda H, name, params: degree_days(H, params, name),
    "none": lambda H, name, params: no_temperature(H, name),
}


def builtin_specs(H: int) -> dict:
    """Standard candidate models keyed by their conventional short names."""
    return {
        "annual": annual_mean(H),
        "biannual": biannual_means(H) if H >= 2 else None,
        "quarterly": quarterly_means(H) if H >= 4 else None,
        "monthly": monthly_means(H) if H >= 12 else None,
        "quadratic": quadratic_annual(H),
        "none": no_temperature(H),
    }


def parse_registry(text: str, H: int) -> list:
    """Parse a plain-text model registry into ModelSpecs.

    One model per blank-line-separated block, ``key: value`` lines with
    keys ``name``, ``kind`` and optional comma-separated ``params``.
    Lines starting with '#' are comments.
    """
    blocks = []
    current = {}
    current_line = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            if current:
                blocks.append((current_line, current))
                current = {}
            continue
        if ":" not in line:
            raise RegistryError(f"line {lineno}: expected 'key: value', got {raw!r}")
        key, value = line.split(":", 1)
        key = key.strip().lower()
        if key not in ("name", "kind", "params"):
            raise RegistryError(f"line {lineno}: unknown key {key!r}")
        if not current:
            current_line = lineno
        if key in current:
            raise RegistryError(f"line {lineno}: duplicate key {key!r} in block")
        current[key] = value.strip()
    if current:
        blocks.append((current_line, current))

    specs = []
    names = set()
    for lineno, block in blocks:
        if "name" not in block or "kind" not in block:
            raise RegistryError(
                f"line {lineno}: model block needs both 'name' and 'kind'"
            )
        name, kind = block["name"], block["kind"]
        if name in names:
            raise RegistryError(f"line {lineno}: duplicate model name {name!r}")
        names.add(name)
        if kind not in _REGISTRY_KINDS:
            raise RegistryError(
                f"line {lineno}: unknown kind {kind!r}; known kinds: "
                f"{sorted(_REGISTRY_KINDS)}"
            )
        params = ()
        if "params" in block and block["params"]:
            try:
                params = tuple(float(p) for p in block["params"].split(","))
            except ValueError as exc:
                raise RegistryError(f"line {lineno}: bad params: {exc}") from None
        try:
            specs.append(_REGISTRY_KINDS[kind](H, name, params))
        except (ValidationError, DimensionError) as exc:
            raise RegistryError(f"line {lineno}: {exc}") from None
    if not specs:
        raise RegistryError("registry contains no model blocks")
    return specs


def load_registry(path, H: int) -> list:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_registry(fh.read(), H)
