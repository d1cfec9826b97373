"""Canned configurations for the two benchmark models.

Both live on a 20x20 grid with the rect(2,1) neighborhood. The comparative
studies run 50 years; the estimation benchmarks run 15 years from a
Bernoulli(0.1) initial field:

* model 1 -- intercept only. Studies use expit(b0) = 0.2 as the baseline
  level (and Bernoulli(0.2) starts); the estimation benchmark uses
  b0 = -1.4 with a zero-coefficient tent covariate in the fit design.
* model 2 -- one spatially constant temporal covariate. Studies use
  x_t = t with b = (logit(0.1), 0.1); the estimation benchmark uses the
  tent covariate x_t = min(t, 16 - t) with b = (-2.8, 0.1).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lattice import GridShape, NeighborhoodSpec, Rect
from .model import CovariateSeries, ModelParams
from .sampling import SamplerConfig
from .study import StudyConfig

__all__ = [
    "tent_covariate",
    "linear_covariate",
    "TrajectoryPreset",
    "estimation_model1",
    "estimation_model2",
    "study_model1",
    "study_model2",
    "STUDY_PRESETS",
    "ESTIMATION_PRESETS",
]

GRID_20 = GridShape(20, 20)
RECT_21 = Rect(2, 1)
RHO_GRID_FULL = tuple((r1, r2) for r1 in (0.3, 0.5, 0.7) for r2 in (0.3, 0.5, 0.7))
RHO_GRID_BANDS = tuple((r1, r2) for r1 in (0.5, 0.7) for r2 in (0.5, 0.7))


def tent_covariate(horizon: int = 15) -> np.ndarray:
    """x_t = t up to year 8 then back down to 1 at year 15 (0 at the unscored
    t = 0)."""
    if horizon > 15:
        raise ValueError("the tent covariate is defined for horizons up to 15 years")
    t = np.arange(horizon + 1, dtype=np.float64)
    values = np.minimum(t, 16.0 - t)
    values[0] = 0.0
    return values


def linear_covariate(horizon: int = 50) -> np.ndarray:
    """x_t = t (0 at the unscored t = 0)."""
    return np.arange(horizon + 1, dtype=np.float64)


@dataclass(frozen=True)
class TrajectoryPreset:
    """Everything needed to simulate benchmark data and fit it back."""

    label: str
    shape: GridShape
    neighborhood: NeighborhoodSpec
    params: ModelParams
    covariates: CovariateSeries
    horizon: int
    initial_p0: float
    sampler: SamplerConfig = field(default_factory=SamplerConfig)


def estimation_model1(horizon: int = 15) -> TrajectoryPreset:
    """Intercept-only truth (b0 = -1.4, r1 = r2 = 0.5) with a zero-effect
    tent covariate column kept in the design."""
    X = CovariateSeries.temporal(tent_covariate(horizon), GRID_20.n_sites, name="tent")
    params = ModelParams(beta=np.array([-1.4, 0.0]), rho1=0.5, rho2=0.5)
    return TrajectoryPreset(
        label="model1",
        shape=GRID_20,
        neighborhood=RECT_21,
        params=params,
        covariates=X,
        horizon=horizon,
        initial_p0=0.1,
        sampler=SamplerConfig(initial_p0=0.1),
    )


def estimation_model2(horizon: int = 15) -> TrajectoryPreset:
    """Tent-covariate truth: b = (-2.8, 0.1), r1 = r2 = 0.5."""
    X = CovariateSeries.temporal(tent_covariate(horizon), GRID_20.n_sites, name="tent")
    params = ModelParams(beta=np.array([-2.8, 0.1]), rho1=0.5, rho2=0.5)
    return TrajectoryPreset(
        label="model2",
        shape=GRID_20,
        neighborhood=RECT_21,
        params=params,
        covariates=X,
        horizon=horizon,
        initial_p0=0.1,
        sampler=SamplerConfig(initial_p0=0.1),
    )


def study_model1(n_replicates: int = 100, horizon: int = 50, grid: str = "bands") -> StudyConfig:
    """Intercept-only comparative study at baseline level 0.2."""
    beta0 = float(np.log(0.2 / 0.8))
    return StudyConfig(
        shape=GRID_20,
        neighborhood=RECT_21,
        horizon=horizon,
        beta=np.array([beta0]),
        covariates=CovariateSeries.none(GRID_20.n_sites, horizon),
        rho_grid=RHO_GRID_FULL if grid == "full" else RHO_GRID_BANDS,
        n_replicates=n_replicates,
        initial_p0=0.2,
        label="model1",
    )


def study_model2(n_replicates: int = 100, horizon: int = 50, grid: str = "bands") -> StudyConfig:
    """Rising-trend study: x_t = t, levels from 0.1 at t = 1 to 0.94 at t = 50."""
    beta0 = float(np.log(0.1 / 0.9))
    return StudyConfig(
        shape=GRID_20,
        neighborhood=RECT_21,
        horizon=horizon,
        beta=np.array([beta0, 0.1]),
        covariates=CovariateSeries.temporal(linear_covariate(horizon), GRID_20.n_sites,
                                            name="trend"),
        rho_grid=RHO_GRID_FULL if grid == "full" else RHO_GRID_BANDS,
        n_replicates=n_replicates,
        initial_p0=0.1,
        label="model2",
    )


STUDY_PRESETS = {"model1": study_model1, "model2": study_model2}
ESTIMATION_PRESETS = {"model1": estimation_model1, "model2": estimation_model2}
