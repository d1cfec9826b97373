"""Centered spatio-temporal autologistic model on a lattice.

Binary states Z[i, t] evolve as a Markov chain of Markov random fields:
conditional on the previous slice and covariates, the log-odds that site i
is 1 at time t are

    logit p_it = x_it' b + r1 * sum_{j in N_i} (Z_jt - m_jt) + r2 * Z_{i,t-1}

where m_jt is a centering mean that depends on the chosen variant:

    traditional : m_jt = 0
    onestep     : m_jt = expit(x_jt' b)
    centered    : m_jt = expit(x_jt' b + r2 * Z_{j,t-1})

The ``centered`` variant subtracts the exact conditional expectation
E(Z_jt | Z_{t-1}, X_t), so the spatial autoregression r1 captures only
small-scale correlation while the covariate part keeps its marginal
(large-scale) interpretation.

For a fixed t the slice law given the past is a Gibbs field with singleton
potentials

    phi_i(z_i) = z_i * (x_it' b - r1 * sum_{j in N_i} m_jt + r2 * Z_{i,t-1})

and pairwise potentials  r1 * z_i * z_j  on neighbor pairs {i, j}. The
normalizing constant is intractable in general; :func:`brute_force_joint`
evaluates it by explicit enumeration on tiny lattices and serves as the
exactness oracle for everything else in the package.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit, logsumexp

from .lattice import NeighborGraph

__all__ = [
    "CENTERINGS",
    "ModelParams",
    "CovariateSeries",
    "centering_offset",
    "centering_offsets",
    "base_logits",
    "conditional_logit",
    "conditional_prob",
    "conditional_logits_slice",
    "joint_unnormalized_log_density",
    "enumerate_states",
    "brute_force_joint",
    "transition_log_prob",
]

CENTERINGS = ("traditional", "onestep", "centered")

# Enumeration beyond 16 sites would need >2^16 joint states; refuse.
MAX_ENUMERATION_SITES = 16


@dataclass(frozen=True)
class ModelParams:
    """Model coefficients: intercept-first beta, spatial r1, temporal r2."""

    beta: np.ndarray
    rho1: float
    rho2: float
    centering: str = "centered"

    def __post_init__(self):
        beta = np.atleast_1d(np.asarray(self.beta, dtype=np.float64))
        if beta.ndim != 1 or beta.size < 1:
            raise ValueError("beta must be a 1-d vector with the intercept first")
        if not (np.all(np.isfinite(beta)) and np.isfinite(self.rho1) and np.isfinite(self.rho2)):
            raise ValueError("parameters must be finite")
        if self.centering not in CENTERINGS:
            raise ValueError(f"centering must be one of {CENTERINGS}, got {self.centering!r}")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "rho1", float(self.rho1))
        object.__setattr__(self, "rho2", float(self.rho2))

    @property
    def n_covariates(self) -> int:
        """Number of covariate coefficients excluding the intercept."""
        return self.beta.size - 1

    def as_vector(self) -> np.ndarray:
        """(beta_0..beta_p, rho1, rho2) as one flat vector."""
        return np.concatenate([self.beta, [self.rho1, self.rho2]])

    def with_vector(self, theta: np.ndarray) -> "ModelParams":
        theta = np.asarray(theta, dtype=np.float64)
        if theta.size != self.beta.size + 2:
            raise ValueError(f"expected {self.beta.size + 2} entries, got {theta.size}")
        return replace(self, beta=theta[:-2], rho1=float(theta[-2]), rho2=float(theta[-1]))


class CovariateSeries:
    """Covariate vectors X[i, t] for t = 0..T (t = 0 is never scored).

    Values are held either as a spatially constant ``(T+1, p)`` array shared
    by every site or as a full ``(n, T+1, p)`` array; ``p`` may be zero for
    intercept-only models.
    """

    def __init__(self, values: np.ndarray, n_sites: int, names: Optional[Sequence[str]] = None):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim == 2:
            self.spatially_constant = True
        elif values.ndim == 3:
            if values.shape[0] != n_sites:
                raise ValueError(
                    f"covariate array has {values.shape[0]} sites, expected {n_sites}"
                )
            self.spatially_constant = False
        else:
            raise ValueError("covariates must be (T+1, p) or (n, T+1, p)")
        if not np.all(np.isfinite(values)):
            raise ValueError("covariates must be finite")
        self.values = values
        self.n_sites = int(n_sites)
        self.names = list(names) if names is not None else [f"x{k + 1}" for k in range(values.shape[-1])]
        if len(self.names) != values.shape[-1]:
            raise ValueError("one name per covariate column required")

    @classmethod
    def none(cls, n_sites: int, horizon: int) -> "CovariateSeries":
        """Intercept-only series (p = 0) over t = 0..horizon."""
        return cls(np.zeros((horizon + 1, 0)), n_sites, names=[])

    @classmethod
    def temporal(cls, values: np.ndarray, n_sites: int, name: str = "x1") -> "CovariateSeries":
        """Single spatially constant covariate from a length-(T+1) vector."""
        values = np.asarray(values, dtype=np.float64).reshape(-1, 1)
        return cls(values, n_sites, names=[name])

    @property
    def horizon(self) -> int:
        return self.values.shape[-2] - 1

    @property
    def n_features(self) -> int:
        return self.values.shape[-1]

    def at_time(self, t: int) -> np.ndarray:
        """Covariate matrix (n, p) at time t (constant rows broadcast)."""
        if not (0 <= t <= self.horizon):
            raise IndexError(f"time {t} outside 0..{self.horizon}")
        if self.spatially_constant:
            return np.broadcast_to(self.values[t], (self.n_sites, self.n_features))
        return self.values[:, t, :]

    def with_column(self, column: np.ndarray, name: str) -> "CovariateSeries":
        """New series with an extra per-(site, time) column appended."""
        column = np.asarray(column, dtype=np.float64)
        if column.shape != (self.n_sites, self.horizon + 1):
            raise ValueError(
                f"column must be (n_sites, T+1) = ({self.n_sites}, {self.horizon + 1})"
            )
        if name in self.names:
            raise ValueError(f"covariate name {name!r} already present")
        if self.spatially_constant:
            full = np.broadcast_to(
                self.values[None, :, :], (self.n_sites, self.horizon + 1, self.n_features)
            )
        else:
            full = self.values
        stacked = np.concatenate([full, column[:, :, None]], axis=2)
        return CovariateSeries(stacked, self.n_sites, names=self.names + [name])


def _covariate_part(params: ModelParams, x_t: np.ndarray) -> np.ndarray:
    """beta_0 + x' beta over the last axis of ``x_t``: a (p,) vector, (n, p)
    rows, or batched (n_reps, n, p) rows."""
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.shape[-1] != params.n_covariates:
        raise ValueError(
            f"covariate rows have {x_t.shape[-1]} entries, model expects {params.n_covariates}"
        )
    return params.beta[0] + x_t @ params.beta[1:]


def base_logits(params: ModelParams, x_t: np.ndarray, z_prev: np.ndarray) -> np.ndarray:
    """Non-spatial part of the conditional logit: x'b + r2 * z_prev.

    ``z_prev`` may be (n,) or (n_reps, n); broadcasting follows numpy rules.
    """
    lp = _covariate_part(params, x_t)
    return lp + params.rho2 * np.asarray(z_prev, dtype=np.float64)


def centering_offsets(params: ModelParams, x_t: np.ndarray, z_prev: np.ndarray) -> np.ndarray:
    """Centering means m_it for one slice (vectorized over sites).

    traditional -> 0; onestep -> expit(x'b); centered -> expit(x'b + r2*z_prev).
    """
    z_prev = np.asarray(z_prev, dtype=np.float64)
    lp = _covariate_part(params, x_t)
    shape = np.broadcast_shapes(lp.shape, z_prev.shape)
    if params.centering == "traditional":
        return np.zeros(shape)
    if params.centering == "onestep":
        return expit(np.broadcast_to(lp, shape))
    return expit(lp + params.rho2 * z_prev)


def centering_offset(params: ModelParams, x: np.ndarray, z_prev: float) -> float:
    """Scalar centering mean for one site; see :func:`centering_offsets`."""
    return float(centering_offsets(params, np.asarray(x, dtype=np.float64), np.float64(z_prev)))


def conditional_logits_slice(
    z_t: np.ndarray,
    z_prev: np.ndarray,
    x_t: np.ndarray,
    params: ModelParams,
    graph: NeighborGraph,
) -> np.ndarray:
    """Conditional logits of every site given the full current slice.

    Each site's value is ignored in its own logit (only neighbors enter);
    works on (n,) or batched (n_reps, n) slices.
    """
    offsets = centering_offsets(params, x_t, z_prev)
    centered = np.asarray(z_t, dtype=np.float64) - offsets
    return base_logits(params, x_t, z_prev) + params.rho1 * graph.neighbor_sums(centered)


def conditional_logit(
    site: int,
    t: int,
    Z: np.ndarray,
    X: CovariateSeries,
    params: ModelParams,
    graph: NeighborGraph,
) -> float:
    """Conditional log-odds of Z[site, t] = 1 given neighbors, past, covariates."""
    if t < 1:
        raise ValueError("conditional law needs a previous slice; t must be >= 1")
    Z = np.asarray(Z)
    z_t, z_prev = Z[:, t].astype(np.float64), Z[:, t - 1].astype(np.float64)
    return float(conditional_logits_slice(z_t, z_prev, X.at_time(t), params, graph)[site])


def conditional_prob(
    site: int,
    t: int,
    Z: np.ndarray,
    X: CovariateSeries,
    params: ModelParams,
    graph: NeighborGraph,
) -> float:
    """Conditional probability that Z[site, t] = 1; see :func:`conditional_logit`."""
    return float(expit(conditional_logit(site, t, Z, X, params, graph)))


def _singleton_potentials(
    params: ModelParams, x_t: np.ndarray, z_prev: np.ndarray, graph: NeighborGraph
) -> np.ndarray:
    """phi_i coefficients: x'b - r1 * (neighbor sum of centering means) + r2 * z_prev."""
    offsets = centering_offsets(params, x_t, z_prev)
    return base_logits(params, x_t, z_prev) - params.rho1 * graph.neighbor_sums(offsets)


def joint_unnormalized_log_density(
    z: np.ndarray,
    z_prev: np.ndarray,
    x_t: np.ndarray,
    params: ModelParams,
    graph: NeighborGraph,
) -> float:
    """Log of the slice Gibbs density up to its normalizing constant.

    sum_i z_i * phi_i + r1 * sum_{{i,j} neighbors} z_i z_j, with phi_i built
    from the variant's centering means (the all-zero state has value 0).
    """
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (graph.n_sites,):
        raise ValueError(f"state has shape {z.shape}, expected ({graph.n_sites},)")
    phi = _singleton_potentials(params, x_t, np.asarray(z_prev, dtype=np.float64), graph)
    pair = 0.5 * params.rho1 * float(z @ graph.neighbor_sums(z))
    return float(z @ phi) + pair


def enumerate_states(n_sites: int) -> np.ndarray:
    """All 2^n binary states, row ``mask`` holding bit i of ``mask`` at site i."""
    if n_sites > MAX_ENUMERATION_SITES:
        raise ValueError(f"enumeration limited to {MAX_ENUMERATION_SITES} sites, got {n_sites}")
    masks = np.arange(2**n_sites, dtype=np.uint32)
    return ((masks[:, None] >> np.arange(n_sites)) & 1).astype(np.float64)


def _all_state_log_weights(
    z_prev: np.ndarray, x_t: np.ndarray, params: ModelParams, graph: NeighborGraph
) -> np.ndarray:
    """Unnormalized log density of every state, indexed by bitmask."""
    n = graph.n_sites
    states = enumerate_states(n)
    phi = _singleton_potentials(params, x_t, np.asarray(z_prev, dtype=np.float64), graph)
    adj = graph.adjacency.toarray()
    pair = 0.5 * params.rho1 * np.einsum("si,ij,sj->s", states, adj, states)
    return states @ phi + pair


def brute_force_joint(
    z_prev: np.ndarray,
    x_t: np.ndarray,
    params: ModelParams,
    graph: NeighborGraph,
) -> np.ndarray:
    """Exact slice law by full enumeration: probs[mask] for all 2^n states.

    Only feasible for n <= 16 sites; the oracle every sampler and conditional
    in this package is checked against.
    """
    logw = _all_state_log_weights(z_prev, x_t, params, graph)
    return np.exp(logw - logsumexp(logw))


def transition_log_prob(
    y: np.ndarray,
    z: np.ndarray,
    x_t: np.ndarray,
    params: ModelParams,
    graph: NeighborGraph,
) -> float:
    """log P(Z_t = z | Z_{t-1} = y), normalized by explicit enumeration."""
    logw = _all_state_log_weights(y, x_t, params, graph)
    z = np.asarray(z)
    mask = int(np.sum((z.astype(np.uint32) & 1) << np.arange(z.size, dtype=np.uint32)))
    return float(logw[mask] - logsumexp(logw))
