import numpy as np
import pytest
from scipy.special import expit

from autologistic.errors import CoalescenceError, MonotonicityError
from autologistic.lattice import GridShape, Rect, build_neighbor_graph
from autologistic.model import CovariateSeries, ModelParams, brute_force_joint
from autologistic.rng import RngStream
from autologistic.sampling import (
    SamplerConfig,
    cftp_slice_sample,
    gibbs_sweep,
    init_bernoulli,
    simulate_past_covariate_trajectories,
    simulate_trajectories,
    simulate_trajectory,
)


def state_masks(draws):
    n = draws.shape[1]
    return (draws.astype(np.uint32) * (1 << np.arange(n, dtype=np.uint32))).sum(axis=1)


def tv_distance(draws, probs):
    emp = np.bincount(state_masks(draws), minlength=len(probs)) / draws.shape[0]
    return 0.5 * np.abs(emp - probs).sum()


class TestRngStream:
    def test_same_path_same_draws(self):
        a = RngStream(123).child("time", 3, "cftp", 7)
        b = RngStream(123).child("time", 3).child("cftp").child(7)
        np.testing.assert_array_equal(a.uniforms(10), b.uniforms(10))

    def test_replayable(self):
        s = RngStream(5).child(2)
        np.testing.assert_array_equal(s.uniforms((3, 4)), s.uniforms((3, 4)))

    def test_distinct_paths_differ(self):
        s = RngStream(5)
        assert not np.array_equal(s.child(1).uniforms(8), s.child(2).uniforms(8))
        assert not np.array_equal(s.child("a").uniforms(8), s.child("b").uniforms(8))

    def test_int_and_string_labels_do_not_collide(self):
        s = RngStream(5)
        assert not np.array_equal(s.child(7).uniforms(8), s.child("7").uniforms(8))

    def test_negative_label_rejected(self):
        with pytest.raises(ValueError):
            RngStream(1).child(-3)


class TestInitBernoulli:
    def test_extremes(self):
        shape = GridShape(5, 5)
        assert init_bernoulli(shape, 0.0, RngStream(0)).sum() == 0
        assert init_bernoulli(shape, 1.0, RngStream(0)).sum() == 25

    def test_mean_within_binomial_error(self):
        shape = GridShape(20, 20)
        draws = np.stack([
            init_bernoulli(shape, 0.2, RngStream(9).child(r)) for r in range(100)
        ])
        se = np.sqrt(0.2 * 0.8 / draws.size)
        assert abs(draws.mean() - 0.2) < 3 * se

    def test_invalid_p0(self):
        with pytest.raises(ValueError):
            init_bernoulli(GridShape(2, 2), 1.5, RngStream(0))


class TestGibbsSweep:
    def test_independent_sites_match_target_rate(self):
        shape = GridShape(20, 20)
        graph = build_neighbor_graph(shape, Rect(2, 1))
        params = ModelParams(np.array([-1.4]), 0.0, 0.0)
        gen = np.random.default_rng(42)
        x_t = np.zeros((400, 0))
        draws = []
        state = np.zeros(400, dtype=np.int8)
        for _ in range(250):
            state = gibbs_sweep(state, np.zeros(400), x_t, params, graph, gen)
            draws.append(state.mean())
        target = expit(-1.4)
        se = np.sqrt(target * (1 - target) / (250 * 400))
        assert abs(np.mean(draws) - target) < 4 * se

    def test_saturated_negative_intercept_zeroes_slice(self):
        shape = GridShape(10, 10)
        graph = build_neighbor_graph(shape, Rect(1, 1))
        params = ModelParams(np.array([-50.0]), 0.5, 0.5)
        state = np.ones(100, dtype=np.int8)
        out = gibbs_sweep(state, np.zeros(100), np.zeros((100, 0)), params, graph,
                          np.random.default_rng(3))
        assert out.sum() == 0

    def test_long_run_occupancy_matches_oracle(self):
        # detailed balance: thinned Gibbs draws approach the enumerated law
        shape = GridShape(2, 2)
        graph = build_neighbor_graph(shape, Rect(1, 1))
        params = ModelParams(np.array([-0.5]), 0.6, 0.5)
        z_prev = np.array([0.0, 1.0, 0.0, 0.0])
        x_t = np.zeros((4, 0))
        probs = brute_force_joint(z_prev, x_t, params, graph)
        gen = np.random.default_rng(11)
        state = np.zeros(4, dtype=np.int8)
        draws = []
        for k in range(200000):
            state = gibbs_sweep(state, z_prev, x_t, params, graph, gen)
            if k % 2 == 0:
                draws.append(state.copy())
        assert tv_distance(np.array(draws), probs) < 0.01


class TestCFTP:
    def setup_method(self):
        self.shape = GridShape(2, 2)
        self.graph = build_neighbor_graph(self.shape, Rect(1, 1))
        self.params = ModelParams(np.array([-1.4]), 0.5, 0.5)
        self.z_prev = np.array([0.0, 1.0, 0.0, 0.0])
        self.x_t = np.zeros((4, 0))

    def test_deterministic_given_stream(self):
        s = RngStream(77).child("draw")
        a = cftp_slice_sample(self.z_prev, self.x_t, self.params, self.graph, s)
        b = cftp_slice_sample(self.z_prev, self.x_t, self.params, self.graph, s)
        np.testing.assert_array_equal(a, b)

    def test_instant_coalescence_when_independent(self):
        params = ModelParams(np.array([-0.2]), 0.0, 0.4)
        out = cftp_slice_sample(self.z_prev, self.x_t, params, self.graph,
                                RngStream(1).child("x"), max_sweeps=1)
        assert out.shape == (4,)

    def test_negative_rho1_refused(self):
        params = ModelParams(np.array([-0.2]), -0.3, 0.4)
        with pytest.raises(MonotonicityError):
            cftp_slice_sample(self.z_prev, self.x_t, params, self.graph, RngStream(1))

    def test_sweep_cap_raises(self):
        # strong coupling on a larger lattice cannot coalesce in one sweep
        shape = GridShape(5, 5)
        graph = build_neighbor_graph(shape, Rect(1, 1))
        params = ModelParams(np.array([0.0]), 2.5, 0.0)
        with pytest.raises(CoalescenceError):
            cftp_slice_sample(np.zeros(25), np.zeros((25, 0)), params, graph,
                              RngStream(3).child("cap"), max_sweeps=1)

    def test_sandwich_ordering_asserted(self):
        cftp_slice_sample(self.z_prev, self.x_t, self.params, self.graph,
                          RngStream(5).child("sw"), check_sandwich=True)

    def test_exactness_against_oracle(self):
        probs = brute_force_joint(self.z_prev, self.x_t, self.params, self.graph)
        zp = np.broadcast_to(self.z_prev, (20000, 4))
        draws = cftp_slice_sample(zp, self.x_t, self.params, self.graph,
                                  RngStream(13).child("tv"))
        assert tv_distance(draws, probs) < 0.012

    def test_batch_rows_match_chi_square(self):
        # frequencies of every joint state agree with the oracle (padded chi2)
        probs = brute_force_joint(self.z_prev, self.x_t, self.params, self.graph)
        zp = np.broadcast_to(self.z_prev, (50000, 4))
        draws = cftp_slice_sample(zp, self.x_t, self.params, self.graph,
                                  RngStream(21).child("chi"))
        counts = np.bincount(state_masks(draws), minlength=16)
        expected = probs * len(draws)
        chi2 = ((counts - expected) ** 2 / expected).sum()
        # 15 dof; 0.001 quantile is 37.7
        assert chi2 < 37.7


class TestTrajectories:
    def setup_method(self):
        self.shape = GridShape(4, 4)
        self.graph = build_neighbor_graph(self.shape, Rect(1, 1))
        self.params = ModelParams(np.array([-1.0]), 0.4, 0.5)
        self.X = CovariateSeries.none(16, 6)

    def test_zero_horizon(self):
        config = SamplerConfig(initial_p0=0.3)
        Z = simulate_trajectory(0, self.X, self.params, self.graph, config, RngStream(2))
        assert Z.shape == (16, 1)

    def test_explicit_initial_slice(self):
        slice0 = np.arange(16) % 2
        config = SamplerConfig(initial_slice=slice0)
        Z = simulate_trajectory(3, self.X, self.params, self.graph, config, RngStream(2))
        np.testing.assert_array_equal(Z[:, 0], slice0)

    def test_reproducible_and_batch_consistent(self):
        config = SamplerConfig(initial_p0=0.2)
        a = simulate_trajectories(3, 4, self.X, self.params, self.graph, config, RngStream(8))
        b = simulate_trajectories(3, 4, self.X, self.params, self.graph, config, RngStream(8))
        np.testing.assert_array_equal(a, b)
        assert a.shape == (3, 16, 5)

    def test_modes_produce_binary_fields(self):
        for mode in ("cftp", "pgs", "gibbs"):
            config = SamplerConfig(mode=mode, gibbs_sweeps=3, initial_p0=0.2)
            Z = simulate_trajectory(2, self.X, self.params, self.graph, config, RngStream(4))
            assert set(np.unique(Z)).issubset({0, 1})

    def test_gibbs_mode_allows_negative_rho1(self):
        params = ModelParams(np.array([-1.0]), -0.4, 0.3)
        config = SamplerConfig(mode="gibbs", gibbs_sweeps=2)
        Z = simulate_trajectory(2, self.X, params, self.graph, config, RngStream(4))
        assert Z.shape == (16, 3)
        assert config.sweeps_for(params) == 20  # 10x fallback for rho1 < 0

    def test_cftp_mode_propagates_refusal(self):
        params = ModelParams(np.array([-1.0]), -0.4, 0.3)
        config = SamplerConfig(mode="cftp")
        with pytest.raises(MonotonicityError):
            simulate_trajectory(2, self.X, params, self.graph, config, RngStream(4))

    def test_covariate_horizon_checked(self):
        config = SamplerConfig()
        with pytest.raises(ValueError):
            simulate_trajectory(9, self.X, self.params, self.graph, config, RngStream(1))

    def test_missing_stream_needs_seed(self):
        with pytest.raises(ValueError):
            simulate_trajectory(2, self.X, self.params, self.graph, SamplerConfig())
        Z = simulate_trajectory(2, self.X, self.params, self.graph, SamplerConfig(seed=3))
        assert Z.shape == (16, 3)


class TestPastCovariateSimulation:
    def test_shapes_and_coefficient_count(self):
        shape = GridShape(4, 4)
        graph = build_neighbor_graph(shape, Rect(1, 1))
        past_graph = build_neighbor_graph(shape, Rect(1, 0))
        params = ModelParams(np.array([-1.5, 0.3]), 0.2, 0.8)
        X = CovariateSeries.none(16, 4)
        Z = simulate_past_covariate_trajectories(
            2, 4, X, params, graph, past_graph, SamplerConfig(initial_p0=0.3), RngStream(6)
        )
        assert Z.shape == (2, 16, 5)
        bad = ModelParams(np.array([-1.5]), 0.2, 0.8)
        with pytest.raises(ValueError):
            simulate_past_covariate_trajectories(
                2, 4, X, bad, graph, past_graph, SamplerConfig(), RngStream(6)
            )

    def test_past_neighbor_effect_matches_independence_oracle(self):
        # with no spatial or own-past terms the sites are independent given
        # the derived column: p = expit(-8 + 6 * past neighbor count)
        shape = GridShape(5, 5)
        graph = build_neighbor_graph(shape, Rect(0, 0))
        past_graph = build_neighbor_graph(shape, Rect(1, 1))
        params = ModelParams(np.array([-8.0, 6.0]), 0.0, 0.0)
        slice0 = np.zeros(25, dtype=np.int8)
        slice0[12] = 1
        X = CovariateSeries.none(25, 1)
        Z = simulate_past_covariate_trajectories(
            800, 1, X, params, graph, past_graph,
            SamplerConfig(initial_slice=slice0), RngStream(10),
        )
        want = expit(-8.0 + 6.0)
        infected_rate = Z[:, past_graph.neighbors_of(12), 1].mean()
        se = np.sqrt(want * (1 - want) / (800 * 4))
        assert abs(infected_rate - want) < 4 * se
        assert Z[:, [0, 4, 20, 24], 1].mean() < 0.01
