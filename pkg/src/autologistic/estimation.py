"""Maximum pseudo-likelihood estimation by a two-stage EM scheme.

The pseudo-likelihood is the product over scored cells (t = 1..T, all sites)
of the full conditional Bernoulli likelihoods, so its log is

    sum_{i,t} [ Z_it * eta_it - log(1 + exp(eta_it)) ],
    eta_it = x_it' b + r1 * S_it + r2 * Z_{i,t-1},

with S_it the centered neighbor sum. Because the centering means depend on
(b, r2), S_it entangles the parameters and the objective cannot be maximized
as a plain logistic regression. The fit therefore alternates:

1. Initialisation: fit the no-spatial model
   ``logit p = x'b + r2 * z_prev`` by quasi-Newton, giving (b~, r2~); start
   the full model at (b~, r1 = 1, r2~).
2. Expectation: recompute the centering means (and hence the S_it column)
   at the current parameters.
3. Maximization: with S_it frozen, the objective is a concave logistic
   log-likelihood in (b, r1, r2); maximize it by quasi-Newton (BFGS,
   gradient sup-norm tolerance 1e-8).

Steps 2-3 repeat until successive parameter vectors agree to ``em_tol`` in
sup-norm (default 1e-6, at most 50 iterations).

Two variance estimates are provided: the inverse weighted cross-product
(U' W U)^-1 with W = diag(p(1-p)) evaluated at the fit (the classical GLM
covariance, with either centered or raw neighbor-sum rows in U), and a
parametric bootstrap that re-simulates and refits at the estimate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from .errors import EstimationError, SingularDesignError
from .lattice import NeighborGraph
from .model import CovariateSeries, ModelParams
from .rng import RngStream

__all__ = [
    "FitResult",
    "BootstrapVariance",
    "pseudo_log_likelihood",
    "pl_gradient",
    "maximize_pl_step",
    "empl_fit",
    "variance_sandwich",
    "bootstrap_variance",
]

GRAD_TOL = 1e-8
MAX_QN_ITER = 200


@dataclass
class FitResult:
    """Estimates plus diagnostics from one pseudo-likelihood fit."""

    params: ModelParams
    pl_value: float
    cov_sandwich: Optional[np.ndarray]
    cov_bootstrap: Optional[np.ndarray]
    em_iterations: int
    converged: bool
    pl_trace: list[tuple[float, float]]
    column_names: list[str]
    n_cells: int

    @property
    def theta(self) -> np.ndarray:
        return self.params.as_vector()

    def sd_sandwich(self) -> Optional[np.ndarray]:
        if self.cov_sandwich is None:
            return None
        return np.sqrt(np.clip(np.diag(self.cov_sandwich), 0.0, None))

    def sd_bootstrap(self) -> Optional[np.ndarray]:
        if self.cov_bootstrap is None:
            return None
        return np.sqrt(np.clip(np.diag(self.cov_bootstrap), 0.0, None))

    def to_dict(self) -> dict:
        def _mat(m):
            return None if m is None else np.asarray(m).tolist()

        return {
            "beta": self.params.beta.tolist(),
            "rho1": self.params.rho1,
            "rho2": self.params.rho2,
            "centering": self.params.centering,
            "pl_value": self.pl_value,
            "n_cells": self.n_cells,
            "em_iterations": self.em_iterations,
            "converged": self.converged,
            "column_names": self.column_names,
            "sd_sandwich": _mat(self.sd_sandwich()),
            "sd_bootstrap": _mat(self.sd_bootstrap()),
            "cov_sandwich": _mat(self.cov_sandwich),
            "cov_bootstrap": _mat(self.cov_bootstrap),
            "pl_trace": [[float(a), float(b)] for a, b in self.pl_trace],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


@dataclass
class BootstrapVariance:
    """Empirical covariance of bootstrap refits, with failure bookkeeping."""

    cov: np.ndarray
    n_used: int
    failed: list[tuple[int, str]]


class _PLData:
    """Precomputed scored-cell arrays shared by likelihood, gradient, and EM.

    Rows are ordered time-major: block t holds sites 0..n-1 for t = 1..T.
    """

    def __init__(self, Z: np.ndarray, X: CovariateSeries, graph: NeighborGraph):
        Z = np.asarray(Z)
        if Z.ndim != 2 or Z.shape[0] != graph.n_sites:
            raise ValueError(
                f"field series must be (n_sites, T+1) with n_sites={graph.n_sites}, got {Z.shape}"
            )
        if not np.isin(Z, (0, 1)).all():
            raise ValueError("field series must be binary")
        T = Z.shape[1] - 1
        if T < 1:
            raise ValueError("need at least one transition (T >= 1)")
        if X.horizon < T:
            raise ValueError(f"covariates defined up to t={X.horizon}, data has T={T}")
        if X.n_sites != graph.n_sites:
            raise ValueError("covariate series and graph disagree on the number of sites")
        self.graph = graph
        self.n = graph.n_sites
        self.T = T
        self.Zf = Z.astype(np.float64)
        self.y = self.Zf[:, 1:].T.reshape(-1)
        self.past = self.Zf[:, :-1].T.reshape(-1)
        self.raw_nbr = graph.neighbor_sums(self.Zf[:, 1:].T).reshape(-1)
        # (T, n, p) covariate rows for scored times
        self.x_rows = np.stack([np.asarray(X.at_time(t)) for t in range(1, T + 1)])
        self.p = self.x_rows.shape[2]
        self.x_flat = self.x_rows.reshape(self.T * self.n, self.p)
        self.names = ["intercept"] + list(X.names) + ["spatial", "past"]

    def offsets(self, params: ModelParams) -> np.ndarray:
        """(T, n) centering means at the scored times."""
        z_prev = self.Zf[:, :-1].T
        lp = params.beta[0] + self.x_rows @ params.beta[1:]
        if params.centering == "traditional":
            return np.zeros_like(lp)
        if params.centering == "onestep":
            return expit(lp)
        return expit(lp + params.rho2 * z_prev)

    def spatial_column(self, offsets: np.ndarray) -> np.ndarray:
        """Centered neighbor-sum column from frozen (T, n) centering means."""
        return self.raw_nbr - self.graph.neighbor_sums(offsets).reshape(-1)

    def design(self, spatial: np.ndarray) -> np.ndarray:
        return np.column_stack(
            [np.ones(self.T * self.n), self.x_flat, spatial, self.past]
        )

    def design_no_spatial(self) -> np.ndarray:
        return np.column_stack([np.ones(self.T * self.n), self.x_flat, self.past])


def _loglik_and_grad(theta: np.ndarray, U: np.ndarray, y: np.ndarray):
    eta = U @ theta
    value = float(y @ eta - np.logaddexp(0.0, eta).sum())
    grad = U.T @ (y - expit(eta))
    return value, grad


def _newton_polish(theta, U, y, gtol, max_iter=50):
    """Exact-Newton cleanup for the rare line searches BFGS ends early on.

    Close to the optimum the objective gain per step falls below float
    rounding, so steps are accepted on gradient-norm decrease as well.
    """
    value, grad = _loglik_and_grad(theta, U, y)
    gnorm = np.max(np.abs(grad))
    for _ in range(max_iter):
        if gnorm < gtol:
            break
        p = expit(U @ theta)
        w = p * (1.0 - p)
        hess = U.T @ (U * w[:, None])
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError as exc:
            raise EstimationError(f"singular Hessian during polish: {exc}") from exc
        scale = 1.0
        while scale > 1e-10:
            cand = theta + scale * step
            cand_value, cand_grad = _loglik_and_grad(cand, U, y)
            cand_gnorm = np.max(np.abs(cand_grad))
            if cand_gnorm < gnorm or cand_value > value + 1e-12 * (1.0 + abs(value)):
                theta, value, grad, gnorm = cand, cand_value, cand_grad, cand_gnorm
                break
            scale *= 0.5
        else:
            break
    return theta, value, grad


def _maximize_logistic(U: np.ndarray, y: np.ndarray, theta0: np.ndarray,
                       gtol: float = GRAD_TOL, maxiter: int = MAX_QN_ITER):
    """Quasi-Newton maximizer of the (concave) logistic log-likelihood.

    Returns (theta, value); raises :class:`EstimationError` if the gradient
    sup-norm cannot be brought below ``gtol``.
    """

    def objective(theta):
        value, grad = _loglik_and_grad(theta, U, y)
        return -value, -grad

    theta = np.asarray(theta0, dtype=np.float64)
    for _ in range(2):
        res = minimize(objective, theta, jac=True, method="BFGS",
                       options={"gtol": gtol, "maxiter": maxiter})
        theta = res.x
        if np.max(np.abs(res.jac)) < gtol:
            value, _ = _loglik_and_grad(theta, U, y)
            return theta, value
    theta, value, grad = _newton_polish(theta, U, y, gtol)
    if np.max(np.abs(grad)) >= gtol:
        raise EstimationError(
            f"quasi-Newton stalled at gradient sup-norm {np.max(np.abs(grad)):.2e} "
            f"(tolerance {gtol:.0e}); data may be separable or collinear"
        )
    return theta, value


def pseudo_log_likelihood(
    params: ModelParams,
    Z: np.ndarray,
    X: CovariateSeries,
    graph: NeighborGraph,
    *,
    offsets: Optional[np.ndarray] = None,
) -> float:
    """Log pseudo-likelihood at ``params``.

    With ``offsets=None`` the centering means are those implied by ``params``
    (the self-consistent objective); passing a frozen (T, n) array evaluates
    the M-step objective instead.
    """
    data = _PLData(Z, X, graph)
    if offsets is None:
        offsets = data.offsets(params)
    U = data.design(data.spatial_column(np.asarray(offsets)))
    value, _ = _loglik_and_grad(params.as_vector(), U, data.y)
    return value


def pl_gradient(
    params: ModelParams,
    Z: np.ndarray,
    X: CovariateSeries,
    graph: NeighborGraph,
    *,
    offsets: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Gradient of the log pseudo-likelihood in (beta, r1, r2), holding the
    centering means fixed (the M-step score): U'(y - p)."""
    data = _PLData(Z, X, graph)
    if offsets is None:
        offsets = data.offsets(params)
    U = data.design(data.spatial_column(np.asarray(offsets)))
    _, grad = _loglik_and_grad(params.as_vector(), U, data.y)
    return grad


def maximize_pl_step(
    params_init: ModelParams,
    Z: np.ndarray,
    X: CovariateSeries,
    graph: NeighborGraph,
    offsets: np.ndarray,
) -> ModelParams:
    """One M-step: maximize the pseudo-likelihood with frozen centering means."""
    data = _PLData(Z, X, graph)
    U = data.design(data.spatial_column(np.asarray(offsets)))
    theta, _ = _maximize_logistic(U, data.y, params_init.as_vector())
    return params_init.with_vector(theta)


def _check_spatial_column(spatial: np.ndarray):
    if spatial.size and np.ptp(spatial) == 0.0:
        raise SingularDesignError(
            ["spatial"],
            "spatial regressor is constant (empty neighbor graph?); "
            "refit with fit_spatial=False for the independence submodel",
        )


def empl_fit(
    Z: np.ndarray,
    X: CovariateSeries,
    graph: NeighborGraph,
    *,
    centering: str = "centered",
    fit_spatial: bool = True,
    max_em_iter: int = 50,
    em_tol: float = 1e-6,
    compute_sandwich: bool = True,
    sandwich_rows: str = "centered",
) -> FitResult:
    """Fit the model by the two-stage EM pseudo-likelihood scheme.

    ``fit_spatial=False`` constrains r1 = 0 and reduces to an ordinary
    logistic regression of Z_it on (1, X, Z_{i,t-1}).

    Returns a :class:`FitResult`; raises :class:`EstimationError` (or
    :class:`SingularDesignError`) when an inner maximization cannot
    converge, with the EM iteration in the message.
    """
    data = _PLData(Z, X, graph)

    # Stage 1: no-spatial logistic fit for starting values.
    U1 = data.design_no_spatial()
    theta1, value1 = _maximize_logistic(U1, data.y, np.zeros(U1.shape[1]))
    beta_tilde, rho2_tilde = theta1[:-1], float(theta1[-1])

    if not fit_spatial:
        params = ModelParams(beta_tilde, 0.0, rho2_tilde, centering=centering)
        cov = (
            variance_sandwich(params, Z, X, graph, rows=sandwich_rows, spatial_in_rows=False)
            if compute_sandwich
            else None
        )
        return FitResult(
            params=params,
            pl_value=value1,
            cov_sandwich=cov,
            cov_bootstrap=None,
            em_iterations=0,
            converged=True,
            pl_trace=[],
            column_names=[c for c in data.names if c != "spatial"],
            n_cells=data.T * data.n,
        )

    params = ModelParams(beta_tilde, 1.0, rho2_tilde, centering=centering)
    trace: list[tuple[float, float]] = []
    converged = False
    iterations = 0
    for iteration in range(1, max_em_iter + 1):
        iterations = iteration
        offsets = data.offsets(params)
        spatial = data.spatial_column(offsets)
        if iteration == 1:
            _check_spatial_column(spatial)
        U = data.design(spatial)
        theta_prev = params.as_vector()
        value_start, _ = _loglik_and_grad(theta_prev, U, data.y)
        try:
            theta_new, value_end = _maximize_logistic(U, data.y, theta_prev)
        except EstimationError as exc:
            raise EstimationError(f"EM iteration {iteration}: {exc}") from exc
        if value_end < value_start - 1e-8 * (1.0 + abs(value_start)):
            raise EstimationError(
                f"EM iteration {iteration}: M-step decreased the objective "
                f"({value_start:.10g} -> {value_end:.10g})"
            )
        trace.append((value_start, value_end))
        params = params.with_vector(theta_new)
        if np.max(np.abs(theta_new - theta_prev)) < em_tol:
            converged = True
            break

    pl_value = pseudo_log_likelihood(params, Z, X, graph)
    cov = (
        variance_sandwich(params, Z, X, graph, rows=sandwich_rows)
        if compute_sandwich
        else None
    )
    return FitResult(
        params=params,
        pl_value=pl_value,
        cov_sandwich=cov,
        cov_bootstrap=None,
        em_iterations=iterations,
        converged=converged,
        pl_trace=trace,
        column_names=data.names,
        n_cells=data.T * data.n,
    )


def variance_sandwich(
    params: ModelParams,
    Z: np.ndarray,
    X: CovariateSeries,
    graph: NeighborGraph,
    *,
    rows: str = "centered",
    spatial_in_rows: bool = True,
    inverse: bool = True,
) -> np.ndarray:
    """Coefficient covariance (U' W U)^-1 at the fitted parameters.

    U has one row per scored cell: (1, x_it, spatial term, z_prev). With
    ``rows="centered"`` the spatial term is the centered neighbor sum used by
    the fit; ``rows="raw"`` uses the raw neighbor count instead. W is
    diagonal with entries p(1-p) from the fitted conditional probabilities.
    ``inverse=False`` returns U' W U itself.
    """
    if rows not in ("centered", "raw"):
        raise ValueError(f"rows must be 'centered' or 'raw', got {rows!r}")
    data = _PLData(Z, X, graph)
    spatial_fit = data.spatial_column(data.offsets(params))
    eta = data.design(spatial_fit) @ params.as_vector()
    p = expit(eta)
    w = p * (1.0 - p)

    if spatial_in_rows:
        spatial_rows = spatial_fit if rows == "centered" else data.raw_nbr
        U = data.design(spatial_rows)
        names = data.names
    else:
        U = data.design_no_spatial()
        names = [c for c in data.names if c != "spatial"]

    info = U.T @ (U * w[:, None])
    eigvals, eigvecs = np.linalg.eigh(info)
    if eigvals[-1] <= 0 or eigvals[0] < 1e-12 * eigvals[-1]:
        null = eigvecs[:, 0]
        cols = [names[k] for k in np.nonzero(np.abs(null) > 0.1)[0]]
        raise SingularDesignError(cols)
    if not inverse:
        return info
    cov = np.linalg.inv(info)
    return 0.5 * (cov + cov.T)


def bootstrap_variance(
    fit: FitResult,
    X: CovariateSeries,
    graph: NeighborGraph,
    B: int,
    stream: RngStream,
    *,
    initial_slice: np.ndarray,
    sampler=None,
    past_graph: Optional[NeighborGraph] = None,
    horizon: Optional[int] = None,
    replicate_streams: Optional[Sequence[RngStream]] = None,
    n_jobs: int = 1,
) -> BootstrapVariance:
    """Parametric bootstrap: simulate B trajectories at the fitted
    parameters, refit each, and return the empirical covariance.

    ``initial_slice`` seeds every replicate (conditional bootstrap on the
    observed t = 0 slice by default; pass a fresh draw to change protocols).
    When the model uses a derived past-neighbor covariate, pass the base
    exogenous series as ``X`` together with ``past_graph``; the derived
    column is rebuilt per replicate. ``replicate_streams`` overrides the
    per-replicate randomness (one stream per replicate), mainly for tests.

    Failed replicate fits are dropped and reported with their index.
    """
    # Imported here: sampling depends on model, estimation depends on both.
    from . import dataio, sampling

    if B < 2:
        raise ValueError("need at least B = 2 bootstrap replicates")
    params = fit.params
    T = horizon if horizon is not None else X.horizon
    if sampler is None:
        sampler = sampling.SamplerConfig()
    mode = sampler.mode
    if params.rho1 < 0 and mode in ("cftp", "pgs"):
        # exact coupling needs rho1 >= 0; documented fallback is plain Gibbs
        # (SamplerConfig.sweeps_for then applies the 10x sweep factor)
        mode = "gibbs"
    config = sampling.SamplerConfig(
        mode=mode,
        gibbs_sweeps=sampler.gibbs_sweeps,
        cftp_start_sweeps=sampler.cftp_start_sweeps,
        cftp_max_sweeps=sampler.cftp_max_sweeps,
        initial_slice=np.asarray(initial_slice, dtype=np.int8),
    )

    def _simulate(n_reps, strm):
        if past_graph is None:
            return sampling.simulate_trajectories(n_reps, T, X, params, graph, config, strm)
        return sampling.simulate_past_covariate_trajectories(
            n_reps, T, X, params, graph, past_graph, config, strm
        )

    if replicate_streams is not None:
        if len(replicate_streams) != B:
            raise ValueError("need one replicate stream per replicate")
        Z_reps = np.concatenate([_simulate(1, s) for s in replicate_streams], axis=0)
    else:
        Z_reps = _simulate(B, stream.child("bootstrap"))

    def _refit(r):
        Z_r = Z_reps[r]
        X_r = X
        if past_graph is not None:
            X_r = X.with_column(
                dataio.build_past_neighbor_covariate(Z_r, past_graph), "past_neighbors"
            )
        res = empl_fit(
            Z_r, X_r, graph, centering=params.centering, compute_sandwich=False
        )
        return res.theta

    thetas = []
    failed: list[tuple[int, str]] = []
    if n_jobs != 1:
        from joblib import Parallel, delayed

        outcomes = Parallel(n_jobs=n_jobs)(delayed(_safe_refit)(_refit, r) for r in range(B))
    else:
        outcomes = [_safe_refit(_refit, r) for r in range(B)]
    for r, (theta, err) in enumerate(outcomes):
        if err is None:
            thetas.append(theta)
        else:
            failed.append((r, err))
    if len(thetas) < 2:
        raise EstimationError(
            f"bootstrap collapsed: only {len(thetas)} of {B} replicate fits succeeded"
        )
    thetas = np.asarray(thetas)
    cov = np.cov(thetas, rowvar=False, ddof=1)
    return BootstrapVariance(cov=np.atleast_2d(cov), n_used=len(thetas), failed=failed)


def _safe_refit(refit, r):
    try:
        return refit(r), None
    except (EstimationError, np.linalg.LinAlgError) as exc:
        return None, str(exc)
