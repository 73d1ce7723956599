import numpy as np
import pytest

from panelselect import PanelDataset


def random_panel(rng, n=5, T=3, H=8, beta=None, spec=None, noise_sd=1.0,
                 controls=0, weather_loc=50.0, weather_scale=5.0):
    """A small random balanced panel, optionally with a known signal."""
    weather = rng.normal(weather_loc, weather_scale, size=(n, T, H))
    a = rng.normal(0.0, 2.0, size=n)
    y = a[:, None] + rng.normal(0.0, noise_sd, size=(n, T))
    if spec is not None and beta is not None:
        x = spec.apply(weather.reshape(n * T, H)).reshape(n, T, spec.k)
        y = y + x @ np.asarray(beta, dtype=float)
    ctrl = None
    if controls:
        ctrl = rng.normal(0.0, 1.0, size=(n, T, controls))
        y = y + ctrl.sum(axis=2)
    return PanelDataset(
        unit_ids=tuple(f"u{i}" for i in range(n)),
        period_ids=tuple(2000 + t for t in range(T)),
        outcome=y,
        weather=weather,
        controls=ctrl,
    )


def lsdv_fit(data, design):
    """Brute-force dummy-variable OLS: unit indicator columns, no demeaning."""
    n, T = data.n, data.T
    dummies = np.kron(np.eye(n), np.ones((T, 1)))
    full = np.hstack([design, dummies])
    coef, *_ = np.linalg.lstsq(full, data.outcome.reshape(-1), rcond=None)
    return coef[: design.shape[1]]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
