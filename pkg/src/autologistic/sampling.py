"""Simulation of the Markov-field Markov chain.

Each time slice, given the previous one, is a Gibbs field (see ``model``).
Three ways to draw it are provided:

* ``cftp`` -- exact draws by monotone coupling-from-the-past: a lower chain
  started all-zero and an upper chain started all-one evolve under common
  random numbers from epochs -1, -2, -4, ... sweeps in the past until they
  meet at time 0. Valid for r1 >= 0, where the single-site conditionals are
  nondecreasing in the neighbors and the sandwich ordering is preserved.
* ``pgs`` -- one exact draw, then a fixed number of systematic-scan Gibbs
  sweeps (cheap burn-in-free sampling started from a perfect state).
* ``gibbs`` -- plain Gibbs sweeps started from the previous slice; the only
  option when r1 < 0 (used with 10x the configured sweeps there, since the
  monotone coupling is unavailable to certify mixing).

All samplers are replicate-batched: ``n_reps`` independent chains advance in
lockstep as rows of an (n_reps, n_sites) array, and the random numbers for
sweep s of time step t are a pure function of (seed, t, s), which is what
allows CFTP to replay past randomness instead of storing it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import expit

from .errors import CoalescenceError, MonotonicityError
from .lattice import GridShape, NeighborGraph
from .model import CovariateSeries, ModelParams, base_logits, centering_offsets
from .rng import RngStream

__all__ = [
    "SamplerConfig",
    "init_bernoulli",
    "gibbs_sweep",
    "cftp_slice_sample",
    "simulate_trajectory",
    "simulate_trajectories",
    "simulate_past_covariate_trajectories",
]

MODES = ("cftp", "pgs", "gibbs")


@dataclass(frozen=True)
class SamplerConfig:
    """How to draw each time slice and how to start the trajectory.

    ``initial_slice`` (an explicit t = 0 field) wins over ``initial_p0``
    (i.i.d. Bernoulli initialization). ``seed`` is only a convenience for
    callers that do not pass an :class:`~autologistic.rng.RngStream`.
    """

    mode: str = "cftp"
    gibbs_sweeps: int = 100
    cftp_start_sweeps: int = 1
    cftp_max_sweeps: int = 2**20
    initial_p0: float = 0.2
    initial_slice: Optional[np.ndarray] = field(default=None, repr=False)
    seed: Optional[int] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.gibbs_sweeps < 1:
            raise ValueError("gibbs_sweeps must be >= 1")
        if self.cftp_start_sweeps < 1:
            raise ValueError("cftp_start_sweeps must be >= 1")
        if not (0.0 <= self.initial_p0 <= 1.0):
            raise ValueError("initial_p0 must lie in [0, 1]")

    def sweeps_for(self, params: ModelParams) -> int:
        """Plain-Gibbs sweep count; 10x when r1 < 0 (no monotone coupling)."""
        return self.gibbs_sweeps * (10 if params.rho1 < 0 else 1)


def _site_neighbor_lists(graph: NeighborGraph) -> list[np.ndarray]:
    return [graph.neighbors_of(i) for i in range(graph.n_sites)]


def _sweep_inplace(
    states: np.ndarray,
    base: np.ndarray,
    rho1: float,
    nbrs: list[np.ndarray],
    uniforms: np.ndarray,
) -> None:
    """One systematic-scan sweep (row-major site order) on batched chains.

    ``states`` is (n_reps, n) of 0/1 floats and is updated in place; ``base``
    holds the non-spatial logit per (rep, site); ``uniforms`` supplies one
    U(0,1) per (rep, site).
    """
    for i, nb in enumerate(nbrs):
        if nb.size:
            eta = base[:, i] + rho1 * states[:, nb].sum(axis=1)
        else:
            eta = base[:, i]
        states[:, i] = uniforms[:, i] < expit(eta)


def _conditional_base(
    params: ModelParams, x_t: np.ndarray, z_prev: np.ndarray, graph: NeighborGraph
) -> np.ndarray:
    """Per-(rep, site) logit part that does not involve the current slice:
    x'b + r2*z_prev - r1 * (neighbor sum of centering means)."""
    offsets = centering_offsets(params, x_t, z_prev)
    base = base_logits(params, x_t, z_prev) - params.rho1 * graph.neighbor_sums(offsets)
    return np.atleast_2d(base)


def init_bernoulli(shape: GridShape, p0: float, rng) -> np.ndarray:
    """An i.i.d. Bernoulli(p0) slice; ``rng`` is an RngStream or Generator."""
    if not (0.0 <= p0 <= 1.0):
        raise ValueError("p0 must lie in [0, 1]")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    return (gen.random(shape.n_sites) < p0).astype(np.int8)


def gibbs_sweep(
    field_slice: np.ndarray,
    z_prev: np.ndarray,
    x_t: np.ndarray,
    params: ModelParams,
    graph: NeighborGraph,
    rng: np.random.Generator,
) -> np.ndarray:
    """Resample every site once, in row-major order, from its full conditional.

    Returns the updated slice (a new int8 array).
    """
    z_prev = np.asarray(z_prev, dtype=np.float64)
    states = np.asarray(field_slice, dtype=np.float64)[None, :].copy()
    base = _conditional_base(params, x_t, z_prev[None, :], graph)
    _sweep_inplace(states, base, params.rho1, _site_neighbor_lists(graph), rng.random((1, graph.n_sites)))
    return states[0].astype(np.int8)


def _cftp_batch(
    z_prev: np.ndarray,
    x_t: np.ndarray,
    params: ModelParams,
    graph: NeighborGraph,
    stream: RngStream,
    start_sweeps: int,
    max_sweeps: int,
    check_sandwich: bool = False,
) -> np.ndarray:
    """Exact draws for a batch of chains, one per row of ``z_prev``.

    Uniforms for the sweep ``s`` steps before time 0 are replayed from
    ``stream.child(s)`` on every doubling pass, as the coupling requires;
    chains already coalesced keep their draw and drop out of deeper passes.
    """
    if params.rho1 < 0:
        raise MonotonicityError(
            "coupling-from-the-past needs rho1 >= 0; use plain Gibbs sampling instead"
        )
    z_prev = np.atleast_2d(np.asarray(z_prev, dtype=np.float64))
    n_reps, n = z_prev.shape
    base = _conditional_base(params, x_t, z_prev, graph)
    nbrs = _site_neighbor_lists(graph)

    result = np.empty((n_reps, n), dtype=np.int8)
    active = np.arange(n_reps)
    sweeps = start_sweeps
    while True:
        lower = np.zeros((active.size, n))
        upper = np.ones((active.size, n))
        base_a = base[active]
        for s in range(sweeps, 0, -1):
            uniforms = stream.child(s).uniforms((n_reps, n))[active]
            _sweep_inplace(lower, base_a, params.rho1, nbrs, uniforms)
            _sweep_inplace(upper, base_a, params.rho1, nbrs, uniforms)
            if check_sandwich and np.any(lower > upper):
                raise AssertionError("sandwich ordering violated; coupling is not monotone")
        met = np.all(lower == upper, axis=1)
        result[active[met]] = lower[met].astype(np.int8)
        active = active[~met]
        if active.size == 0:
            return result
        if sweeps >= max_sweeps:
            raise CoalescenceError(sweeps, active.size)
        sweeps *= 2


def cftp_slice_sample(
    z_prev: np.ndarray,
    x_t: np.ndarray,
    params: ModelParams,
    graph: NeighborGraph,
    stream: RngStream,
    *,
    start_sweeps: int = 1,
    max_sweeps: int = 2**20,
    check_sandwich: bool = False,
) -> np.ndarray:
    """One exact draw from the slice law given the previous slice ``z_prev``.

    Deterministic in ``stream``: the same stream yields the same state.
    Raises :class:`MonotonicityError` for r1 < 0 and
    :class:`CoalescenceError` if the doubling schedule passes ``max_sweeps``.
    """
    z_prev = np.asarray(z_prev)
    if z_prev.ndim == 1:
        return _cftp_batch(
            z_prev, x_t, params, graph, stream, start_sweeps, max_sweeps, check_sandwich
        )[0]
    return _cftp_batch(z_prev, x_t, params, graph, stream, start_sweeps, max_sweeps, check_sandwich)


def _initial_slices(
    n_reps: int, shape: GridShape, config: SamplerConfig, stream: RngStream
) -> np.ndarray:
    if config.initial_slice is not None:
        slice0 = np.asarray(config.initial_slice, dtype=np.int8)
        if slice0.shape != (shape.n_sites,):
            raise ValueError(
                f"initial slice has shape {slice0.shape}, expected ({shape.n_sites},)"
            )
        return np.broadcast_to(slice0, (n_reps, shape.n_sites)).copy()
    uniforms = stream.child("init").uniforms((n_reps, shape.n_sites))
    return (uniforms < config.initial_p0).astype(np.int8)


def simulate_trajectories(
    n_reps: int,
    horizon: int,
    X: CovariateSeries,
    params: ModelParams,
    graph: NeighborGraph,
    config: SamplerConfig,
    stream: RngStream,
) -> np.ndarray:
    """``n_reps`` independent trajectories as an (n_reps, n_sites, T+1) array.

    Slice 0 comes from the configured initializer; every later slice is drawn
    conditionally on its predecessor by the configured mode. Replicates are
    coupled to nothing but their own row of random numbers.
    """
    if X.horizon < horizon:
        raise ValueError(f"covariates defined up to t={X.horizon}, horizon is {horizon}")
    if X.n_sites != graph.n_sites:
        raise ValueError("covariate series and graph disagree on the number of sites")
    shape = graph.shape
    n = shape.n_sites
    Z = np.empty((n_reps, n, horizon + 1), dtype=np.int8)
    Z[:, :, 0] = _initial_slices(n_reps, shape, config, stream)
    nbrs = _site_neighbor_lists(graph)

    for t in range(1, horizon + 1):
        t_stream = stream.child("time", t)
        z_prev = Z[:, :, t - 1].astype(np.float64)
        x_t = X.at_time(t)
        if config.mode in ("cftp", "pgs"):
            states = _cftp_batch(
                z_prev,
                x_t,
                params,
                graph,
                t_stream.child("cftp"),
                config.cftp_start_sweeps,
                config.cftp_max_sweeps,
            ).astype(np.float64)
        else:
            states = z_prev.copy()
        if config.mode in ("pgs", "gibbs"):
            base = _conditional_base(params, x_t, z_prev, graph)
            n_sweeps = config.gibbs_sweeps if config.mode == "pgs" else config.sweeps_for(params)
            for k in range(n_sweeps):
                uniforms = t_stream.child("gibbs", k).uniforms((n_reps, n))
                _sweep_inplace(states, base, params.rho1, nbrs, uniforms)
        Z[:, :, t] = states.astype(np.int8)
    return Z


def simulate_past_covariate_trajectories(
    n_reps: int,
    horizon: int,
    X: CovariateSeries,
    params: ModelParams,
    graph: NeighborGraph,
    past_graph: NeighborGraph,
    config: SamplerConfig,
    stream: RngStream,
) -> np.ndarray:
    """Trajectories for models whose last covariate is the count of past
    infected neighbors, sum_{j in N_i^past} Z_{j,t-1}.

    That column depends on the evolving state, so it is rebuilt from the
    previous slice at every step; ``X`` holds only the exogenous covariates
    and ``params.beta`` must have one extra coefficient for the derived
    column (ordered last).
    """
    if params.n_covariates != X.n_features + 1:
        raise ValueError(
            f"model has {params.n_covariates} covariates but the exogenous series "
            f"provides {X.n_features}; exactly one derived past-neighbor column is expected"
        )
    if X.horizon < horizon:
        raise ValueError(f"covariates defined up to t={X.horizon}, horizon is {horizon}")
    shape = graph.shape
    n = shape.n_sites
    Z = np.empty((n_reps, n, horizon + 1), dtype=np.int8)
    Z[:, :, 0] = _initial_slices(n_reps, shape, config, stream)
    nbrs = _site_neighbor_lists(graph)

    for t in range(1, horizon + 1):
        t_stream = stream.child("time", t)
        z_prev = Z[:, :, t - 1].astype(np.float64)
        counts = past_graph.neighbor_sums(z_prev)
        exo = np.broadcast_to(X.at_time(t), (n_reps, n, X.n_features))
        x_t = np.concatenate([exo, counts[:, :, None]], axis=2)
        if config.mode in ("cftp", "pgs"):
            states = _cftp_batch(
                z_prev,
                x_t,
                params,
                graph,
                t_stream.child("cftp"),
                config.cftp_start_sweeps,
                config.cftp_max_sweeps,
            ).astype(np.float64)
        else:
            states = z_prev.copy()
        if config.mode in ("pgs", "gibbs"):
            base = _conditional_base(params, x_t, z_prev, graph)
            n_sweeps = config.gibbs_sweeps if config.mode == "pgs" else config.sweeps_for(params)
            for k in range(n_sweeps):
                uniforms = t_stream.child("gibbs", k).uniforms((n_reps, n))
                _sweep_inplace(states, base, params.rho1, nbrs, uniforms)
        Z[:, :, t] = states.astype(np.int8)
    return Z


def simulate_trajectory(
    horizon: int,
    X: CovariateSeries,
    params: ModelParams,
    graph: NeighborGraph,
    config: SamplerConfig,
    stream: Optional[RngStream] = None,
) -> np.ndarray:
    """Single trajectory as an (n_sites, T+1) array; see
    :func:`simulate_trajectories`."""
    if stream is None:
        if config.seed is None:
            raise ValueError("pass a stream or set SamplerConfig.seed")
        stream = RngStream(config.seed)
    return simulate_trajectories(1, horizon, X, params, graph, config, stream)[0]
