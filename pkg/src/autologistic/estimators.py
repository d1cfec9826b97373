"""Scikit-learn style front end.

:class:`AutologisticRegressor` fits the centered spatio-temporal
autologistic model to a binary field series; :class:`NeighborhoodSelector`
searches candidate neighborhood structures by maximal pseudo-likelihood.
Both follow the usual conventions (constructor stores hyperparameters
verbatim, ``fit`` returns ``self``, fitted attributes end in underscores,
``get_params``/``set_params`` work with :func:`sklearn.base.clone`).

Field series can be passed as (rows, cols, T+1) cubes, or flat
(n_sites, T+1) arrays plus an explicit ``shape=``.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator

from . import dataio, estimation, sampling, selection
from .lattice import GridShape, build_neighbor_graph
from .model import centering_offsets
from .rng import RngStream
from .validation import as_covariate_series, as_neighborhood, resolve_field

__all__ = ["AutologisticRegressor", "NeighborhoodSelector"]


class AutologisticRegressor(BaseEstimator):
    """Pseudo-likelihood fit of a (centered) spatio-temporal autologistic model.

    Parameters
    ----------
    neighborhood : spec or config
        Instantaneous structure, e.g. ``Rect(2, 1)`` or ``{"rect": [2, 1]}``.
    past_neighborhood : spec or config, optional
        When set, the count of previously infected neighbors under this
        structure is appended as the last covariate column.
    centering : {"centered", "onestep", "traditional"}
        How neighbor values are centered in the spatial term.
    fit_spatial : bool
        ``False`` constrains the spatial coefficient to zero (plain logistic
        regression on covariates and the past indicator).
    sandwich_rows : {"centered", "raw"}
        Spatial column convention in the (U'WU)^-1 covariance.
    bootstrap : int
        Number of parametric-bootstrap replicates (0 disables).
    random_state : int, optional
        Seed for the bootstrap simulations.
    """

    def __init__(self, neighborhood=("rect", (2, 1)), past_neighborhood=None,
                 centering="centered", fit_spatial=True, max_em_iter=50,
                 em_tol=1e-6, sandwich_rows="centered", bootstrap=0,
                 bootstrap_sampler=None, random_state=None, n_jobs=1):
        self.neighborhood = neighborhood
        self.past_neighborhood = past_neighborhood
        self.centering = centering
        self.fit_spatial = fit_spatial
        self.max_em_iter = max_em_iter
        self.em_tol = em_tol
        self.sandwich_rows = sandwich_rows
        self.bootstrap = bootstrap
        self.bootstrap_sampler = bootstrap_sampler
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _resolve(self, Z, X, shape):
        Z, shape = resolve_field(Z, shape)
        X = as_covariate_series(X, shape.n_sites, Z.shape[1] - 1)
        graph = build_neighbor_graph(shape, as_neighborhood(self.neighborhood))
        past_graph = None
        if self.past_neighborhood is not None:
            past_graph = build_neighbor_graph(shape, as_neighborhood(self.past_neighborhood))
            X = X.with_column(
                dataio.build_past_neighbor_covariate(Z, past_graph),
                dataio.PAST_NEIGHBOR_COLUMN,
            )
        return Z, X, shape, graph, past_graph

    def fit(self, Z, X=None, shape: Optional[GridShape] = None):
        """Fit on a binary field series Z with optional covariates X."""
        Z, X_full, shape, graph, past_graph = self._resolve(Z, X, shape)
        result = estimation.empl_fit(
            Z, X_full, graph,
            centering=self.centering,
            fit_spatial=self.fit_spatial,
            max_em_iter=self.max_em_iter,
            em_tol=self.em_tol,
            sandwich_rows=self.sandwich_rows,
        )
        if self.bootstrap:
            X_base = as_covariate_series(X, shape.n_sites, Z.shape[1] - 1)
            boot = estimation.bootstrap_variance(
                result,
                X_base,
                graph,
                self.bootstrap,
                RngStream(self.random_state if self.random_state is not None else 0),
                initial_slice=Z[:, 0],
                past_graph=past_graph,
                horizon=Z.shape[1] - 1,
                sampler=self.bootstrap_sampler,
                n_jobs=self.n_jobs,
            )
            result.cov_bootstrap = boot.cov
            self.bootstrap_failures_ = boot.failed
        self.result_ = result
        self.shape_ = shape
        self.graph_ = graph
        self.past_graph_ = past_graph
        self.params_ = result.params
        self.intercept_ = float(result.params.beta[0])
        self.coef_ = result.params.beta[1:].copy()
        self.rho1_ = result.params.rho1
        self.rho2_ = result.params.rho2
        self.n_iter_ = result.em_iterations
        return self

    def predict_proba(self, Z, X=None, shape: Optional[GridShape] = None) -> np.ndarray:
        """Fitted conditional probabilities for every scored cell, as an
        (n_sites, T) array over t = 1..T."""
        self._check_fitted()
        Z, X_full, shape, graph, _ = self._resolve(Z, X, shape)
        params = self.params_
        T = Z.shape[1] - 1
        out = np.empty((shape.n_sites, T))
        Zf = Z.astype(np.float64)
        for t in range(1, T + 1):
            x_t = X_full.at_time(t)
            offsets = centering_offsets(params, x_t, Zf[:, t - 1])
            eta = (
                params.beta[0]
                + x_t @ params.beta[1:]
                + params.rho1 * graph.neighbor_sums(Zf[:, t] - offsets)
                + params.rho2 * Zf[:, t - 1]
            )
            out[:, t - 1] = expit(eta)
        return out

    def score(self, Z, X=None, shape: Optional[GridShape] = None) -> float:
        """Mean log pseudo-likelihood per scored cell at the fitted parameters."""
        self._check_fitted()
        Z, X_full, shape, graph, _ = self._resolve(Z, X, shape)
        value = estimation.pseudo_log_likelihood(self.params_, Z, X_full, graph)
        return value / (shape.n_sites * (Z.shape[1] - 1))

    def sample(self, horizon: int, X=None, *, initial_slice=None, initial_p0=0.2,
               seed: Optional[int] = None, mode: str = "cftp",
               gibbs_sweeps: int = 100) -> np.ndarray:
        """Simulate one trajectory from the fitted model (n_sites, T+1)."""
        self._check_fitted()
        config = sampling.SamplerConfig(
            mode=mode, gibbs_sweeps=gibbs_sweeps, initial_p0=initial_p0,
            initial_slice=initial_slice,
        )
        stream = RngStream(seed if seed is not None else 0)
        X_series = as_covariate_series(X, self.shape_.n_sites, horizon)
        if self.past_graph_ is not None:
            return sampling.simulate_past_covariate_trajectories(
                1, horizon, X_series, self.params_, self.graph_, self.past_graph_,
                config, stream,
            )[0]
        return sampling.simulate_trajectory(
            horizon, X_series, self.params_, self.graph_, config, stream
        )

    def _check_fitted(self):
        if not hasattr(self, "result_"):
            raise RuntimeError("call fit() first")


class NeighborhoodSelector(BaseEstimator):
    """Pick the neighborhood structure with maximal log pseudo-likelihood.

    ``candidates`` is a :class:`~autologistic.selection.CandidateSet` (see
    ``enumerate_rect_candidates`` / ``enumerate_ellipse_candidates``).
    """

    def __init__(self, candidates=None, centering="centered", n_jobs=1):
        self.candidates = candidates
        self.centering = centering
        self.n_jobs = n_jobs

    def fit(self, Z, X=None, shape: Optional[GridShape] = None):
        if self.candidates is None:
            raise ValueError("pass a CandidateSet of neighborhood structures")
        Z, shape = resolve_field(Z, shape)
        X_series = as_covariate_series(X, shape.n_sites, Z.shape[1] - 1)
        report = selection.select_by_pl(
            Z, X_series, shape, self.candidates,
            centering=self.centering, n_jobs=self.n_jobs,
        )
        self.report_ = report
        self.winner_ = report.winner
        self.best_candidate_ = report.winner_candidate
        self.best_result_ = report.results[report.winner]
        return self
