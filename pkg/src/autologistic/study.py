"""Comparative simulation studies of the three centering variants.

For each variant and each (r1, r2) cell the study simulates replicate
trajectories and tracks three summaries per year:

* ``L_t`` -- the large-scale mean implied by the covariates alone,
  expit(x_t' b), averaged over sites when covariates vary in space;
* ``C_t`` -- the mean of expit(x_t' b + r2 * z_{i,t-1}) over sites, i.e. the
  expected level given the realized past (one curve per trajectory);
* ``D_t`` -- the empirical fraction of ones in the simulated slice.

Across replicates the study reports empirical 2.5% / 50% / 97.5% bands of
``D_t`` and keeps one example trajectory per cell.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from scipy.special import expit

from .lattice import GridShape, NeighborhoodSpec, build_neighbor_graph
from .model import CENTERINGS, CovariateSeries, ModelParams
from .rng import RngStream
from .sampling import SamplerConfig, simulate_trajectories

__all__ = [
    "StudyConfig",
    "StudySeries",
    "large_scale_L",
    "conditional_scale_C",
    "empirical_mean_D",
    "replicate_study",
]

BAND_QUANTILES = (0.025, 0.5, 0.975)


def large_scale_L(params: ModelParams, x_t: np.ndarray) -> float:
    """Mean level implied by covariates alone: expit(x'b), site-averaged when
    ``x_t`` is an (n, p) matrix of spatially varying rows."""
    x_t = np.asarray(x_t, dtype=np.float64)
    lp = params.beta[0] + x_t @ params.beta[1:]
    return float(np.mean(expit(lp)))


def conditional_scale_C(params: ModelParams, x_t: np.ndarray, z_prev: np.ndarray) -> float:
    """Mean of expit(x'b + r2 * z_prev) over sites, for one realized past slice."""
    z_prev = np.asarray(z_prev, dtype=np.float64)
    x_t = np.asarray(x_t, dtype=np.float64)
    lp = params.beta[0] + x_t @ params.beta[1:] + params.rho2 * z_prev
    return float(np.mean(expit(lp)))


def empirical_mean_D(field_slice: np.ndarray) -> float:
    """Fraction of ones in a slice."""
    field_slice = np.asarray(field_slice)
    return float(field_slice.mean())


@dataclass(frozen=True)
class StudyConfig:
    """One comparative study: grid, horizon, variants, (r1, r2) cells,
    replicate count, covariates, and how trajectories are drawn."""

    shape: GridShape
    neighborhood: NeighborhoodSpec
    horizon: int
    beta: np.ndarray
    covariates: CovariateSeries
    rho_grid: tuple[tuple[float, float], ...]
    variants: tuple[str, ...] = CENTERINGS
    n_replicates: int = 100
    initial_p0: float = 0.2
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    label: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "beta", np.atleast_1d(np.asarray(self.beta, dtype=np.float64)))
        if self.n_replicates < 1:
            raise ValueError("need at least one replicate")
        if not self.rho_grid:
            raise ValueError("the (rho1, rho2) grid must be nonempty")
        unknown = set(self.variants) - set(CENTERINGS)
        if unknown:
            raise ValueError(f"unknown variants {sorted(unknown)}")


@dataclass
class StudySeries:
    """Replicate summaries per (variant, rho1, rho2) cell.

    ``D[cell]`` is (n_replicates, T+1); ``C[cell]`` is (n_replicates, T)
    covering t = 1..T; ``bands[cell]`` stacks the 2.5/50/97.5 percent
    quantiles of D as a (3, T+1) array; ``example[cell]`` is one trajectory.
    ``L`` covers t = 1..T and is shared by all cells.
    """

    config: StudyConfig
    L: np.ndarray
    D: dict
    C: dict
    bands: dict
    example: dict

    def cells(self):
        return list(self.D.keys())

    def to_frame(self) -> pd.DataFrame:
        """Tidy per-replicate series: variant, rho1, rho2, replicate, t, L, C, D."""
        rows = []
        T = self.config.horizon
        L_full = np.concatenate([[np.nan], self.L])
        for (variant, r1, r2), D in self.D.items():
            C = self.C[(variant, r1, r2)]
            B = D.shape[0]
            for b in range(B):
                C_full = np.concatenate([[np.nan], C[b]])
                for t in range(T + 1):
                    rows.append((variant, r1, r2, b, t, L_full[t], C_full[t], D[b, t]))
        return pd.DataFrame(
            rows, columns=["variant", "rho1", "rho2", "replicate", "t", "L", "C", "D"]
        )

    def summary_frame(self) -> pd.DataFrame:
        """Quantile bands of D per cell and year."""
        rows = []
        T = self.config.horizon
        L_full = np.concatenate([[np.nan], self.L])
        for (variant, r1, r2), band in self.bands.items():
            for t in range(T + 1):
                rows.append(
                    (variant, r1, r2, t, L_full[t], band[0, t], band[1, t], band[2, t])
                )
        return pd.DataFrame(
            rows,
            columns=["variant", "rho1", "rho2", "t", "L", "band_lo", "median", "band_hi"],
        )


def replicate_study(config: StudyConfig, stream: RngStream) -> StudySeries:
    """Run the full study grid; every cell consumes its own random substream,
    so cells and replicates are reproducible independently of run order."""
    graph = build_neighbor_graph(config.shape, config.neighborhood)
    X = config.covariates
    T = config.horizon
    base = ModelParams(config.beta, 0.0, 0.0, centering="centered")
    L = np.array([large_scale_L(base, X.at_time(t)) for t in range(1, T + 1)])

    sampler = replace(config.sampler, initial_p0=config.initial_p0)
    D, C, bands, example = {}, {}, {}, {}
    for variant in config.variants:
        for r1, r2 in config.rho_grid:
            cell = (variant, float(r1), float(r2))
            params = ModelParams(config.beta, r1, r2, centering=variant)
            cell_stream = stream.child("study", variant, int(round(r1 * 1000)),
                                       int(round(r2 * 1000)))
            Z = simulate_trajectories(config.n_replicates, T, X, params, graph,
                                      sampler, cell_stream)
            D[cell] = Z.mean(axis=1)
            C[cell] = np.stack(
                [
                    [conditional_scale_C(params, X.at_time(t), Z[b, :, t - 1])
                     for t in range(1, T + 1)]
                    for b in range(config.n_replicates)
                ]
            )
            bands[cell] = np.quantile(D[cell], BAND_QUANTILES, axis=0)
            example[cell] = Z[0]
    return StudySeries(config=config, L=L, D=D, C=C, bands=bands, example=example)
