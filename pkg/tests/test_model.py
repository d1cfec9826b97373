import numpy as np
import pytest
from scipy.special import expit, logsumexp

from autologistic.lattice import GridShape, Rect, build_neighbor_graph
from autologistic.model import (
    CENTERINGS,
    CovariateSeries,
    ModelParams,
    brute_force_joint,
    centering_offset,
    centering_offsets,
    conditional_logit,
    conditional_prob,
    enumerate_states,
    joint_unnormalized_log_density,
    transition_log_prob,
)


def random_instance(rng, max_side=3, p_covariates=1):
    rows = int(rng.integers(1, max_side + 1))
    cols = int(rng.integers(1, max_side + 1))
    shape = GridShape(rows, cols)
    spec = Rect(int(rng.integers(0, 3)), int(rng.integers(0, 3)))
    graph = build_neighbor_graph(shape, spec)
    params = ModelParams(
        beta=rng.normal(scale=0.8, size=p_covariates + 1),
        rho1=float(rng.uniform(-1.0, 1.0)),
        rho2=float(rng.uniform(-1.0, 1.0)),
        centering=CENTERINGS[int(rng.integers(0, 3))],
    )
    z_prev = rng.integers(0, 2, shape.n_sites).astype(float)
    x_t = rng.normal(size=(shape.n_sites, p_covariates))
    return shape, graph, params, z_prev, x_t


def conditional_from_table(probs, states, site, current):
    """Oracle: condition the exact joint table on all other sites."""
    others = np.delete(np.arange(states.shape[1]), site)
    match = np.all(states[:, others] == current[others], axis=1)
    p1 = probs[match & (states[:, site] == 1)].sum()
    p0 = probs[match & (states[:, site] == 0)].sum()
    return p1 / (p0 + p1)


class TestCenteringOffsets:
    def test_traditional_is_zero(self):
        params = ModelParams(np.array([0.7, -0.2]), 0.5, 0.5, centering="traditional")
        assert centering_offset(params, np.array([1.3]), 1.0) == 0.0

    def test_onestep_ignores_past(self):
        params = ModelParams(np.array([-1.0, 0.4]), 0.5, 0.5, centering="onestep")
        x = np.array([0.8])
        assert centering_offset(params, x, 0.0) == centering_offset(params, x, 1.0)
        assert centering_offset(params, x, 0.0) == pytest.approx(expit(-1.0 + 0.4 * 0.8))

    def test_centered_values(self):
        params = ModelParams(np.array([-1.4]), 0.5, 0.5)
        assert centering_offset(params, np.array([]), 0.0) == pytest.approx(0.19781611144, abs=1e-10)
        assert centering_offset(params, np.array([]), 1.0) == pytest.approx(0.28905049737, abs=1e-10)

    def test_bounds(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            _, _, params, z_prev, x_t = random_instance(rng)
            off = centering_offsets(params, x_t, z_prev)
            if params.centering == "traditional":
                assert np.all(off == 0.0)
            else:
                assert np.all((off > 0.0) & (off < 1.0))

    def test_centered_with_zero_rho2_equals_onestep(self):
        rng = np.random.default_rng(1)
        beta = rng.normal(size=3)
        x_t = rng.normal(size=(6, 2))
        z_prev = rng.integers(0, 2, 6).astype(float)
        a = centering_offsets(ModelParams(beta, 0.4, 0.0, centering="centered"), x_t, z_prev)
        b = centering_offsets(ModelParams(beta, 0.4, 0.0, centering="onestep"), x_t, z_prev)
        np.testing.assert_allclose(a, b)


class TestConditional:
    def test_pure_logistic_when_no_autoregression(self):
        rng = np.random.default_rng(2)
        shape = GridShape(3, 3)
        graph = build_neighbor_graph(shape, Rect(1, 1))
        params = ModelParams(np.array([-0.3, 0.9]), 0.0, 0.0)
        Z = rng.integers(0, 2, (9, 3))
        x = rng.normal(size=(3, 1))
        X = CovariateSeries(x, 9)
        for site in range(9):
            want = float(params.beta[0] + params.beta[1] * x[1, 0])
            assert conditional_logit(site, 1, Z, X, params, graph) == pytest.approx(want)

    def test_isolated_site_probability(self):
        shape = GridShape(1, 1)
        graph = build_neighbor_graph(shape, Rect(0, 0))
        params = ModelParams(np.array([-1.4]), 0.5, 0.5)
        Z = np.array([[0, 1]])
        X = CovariateSeries.none(1, 1)
        assert conditional_prob(0, 1, Z, X, params, graph) == pytest.approx(0.19781611, abs=1e-7)

    def test_logit_zero_gives_half(self):
        shape = GridShape(1, 1)
        graph = build_neighbor_graph(shape, Rect(0, 0))
        params = ModelParams(np.array([0.0]), 0.0, 0.0)
        Z = np.array([[0, 0]])
        X = CovariateSeries.none(1, 1)
        assert conditional_prob(0, 1, Z, X, params, graph) == pytest.approx(0.5)

    def test_t_zero_rejected(self):
        shape = GridShape(2, 2)
        graph = build_neighbor_graph(shape, Rect(1, 1))
        params = ModelParams(np.array([0.0]), 0.1, 0.1)
        Z = np.zeros((4, 2), dtype=int)
        X = CovariateSeries.none(4, 1)
        with pytest.raises(ValueError):
            conditional_logit(0, 0, Z, X, params, graph)

    def test_traditional_logit_dominates_with_active_neighbors(self):
        # uncentered neighbors only add log-odds; centered variants subtract means
        shape = GridShape(3, 3)
        graph = build_neighbor_graph(shape, Rect(1, 1))
        Z = np.ones((9, 2), dtype=int)
        X = CovariateSeries.none(9, 1)
        logits = {}
        for variant in CENTERINGS:
            params = ModelParams(np.array([-1.4]), 0.5, 0.5, centering=variant)
            logits[variant] = conditional_logit(4, 1, Z, X, params, graph)
        assert logits["traditional"] > logits["onestep"]
        assert logits["traditional"] > logits["centered"]

    def test_monotone_in_each_neighbor(self):
        rng = np.random.default_rng(3)
        shape = GridShape(3, 3)
        graph = build_neighbor_graph(shape, Rect(1, 1))
        for variant in CENTERINGS:
            params = ModelParams(np.array([-0.5]), 0.6, 0.4, centering=variant)
            Z = rng.integers(0, 2, (9, 2))
            X = CovariateSeries.none(9, 1)
            site = 4
            for j in graph.neighbors_of(site):
                lo, hi = Z.copy(), Z.copy()
                lo[j, 1], hi[j, 1] = 0, 1
                assert conditional_prob(site, 1, hi, X, params, graph) >= conditional_prob(
                    site, 1, lo, X, params, graph
                )


class TestJointOracle:
    def test_all_zero_state_has_zero_potential(self):
        rng = np.random.default_rng(4)
        shape, graph, params, z_prev, x_t = random_instance(rng)
        assert joint_unnormalized_log_density(
            np.zeros(shape.n_sites), z_prev, x_t, params, graph
        ) == 0.0

    def test_rho1_zero_factorizes(self):
        rng = np.random.default_rng(5)
        shape = GridShape(2, 3)
        graph = build_neighbor_graph(shape, Rect(1, 1))
        params = ModelParams(np.array([-0.6, 0.5]), 0.0, 0.7)
        z_prev = rng.integers(0, 2, 6).astype(float)
        x_t = rng.normal(size=(6, 1))
        probs = brute_force_joint(z_prev, x_t, params, graph)
        site_p = expit(params.beta[0] + x_t[:, 0] * params.beta[1] + params.rho2 * z_prev)
        states = enumerate_states(6)
        factorized = np.prod(np.where(states == 1, site_p, 1 - site_p), axis=1)
        np.testing.assert_allclose(probs, factorized, atol=1e-12)

    def test_single_site_symmetric(self):
        shape = GridShape(1, 1)
        graph = build_neighbor_graph(shape, Rect(0, 0))
        params = ModelParams(np.array([0.0]), 0.5, 0.0)
        probs = brute_force_joint(np.zeros(1), np.zeros((1, 0)), params, graph)
        np.testing.assert_allclose(probs, [0.5, 0.5])

    def test_table_normalizes(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            shape, graph, params, z_prev, x_t = random_instance(rng)
            probs = brute_force_joint(z_prev, x_t, params, graph)
            assert probs.sum() == pytest.approx(1.0, abs=1e-12)

    def test_enumeration_refused_above_limit(self):
        with pytest.raises(ValueError):
            enumerate_states(17)

    def test_hammersley_clifford_consistency(self):
        # conditionals extracted from the joint table equal the model formula
        rng = np.random.default_rng(7)
        for _ in range(40):
            shape, graph, params, z_prev, x_t = random_instance(rng)
            n = shape.n_sites
            probs = brute_force_joint(z_prev, x_t, params, graph)
            states = enumerate_states(n)
            current = rng.integers(0, 2, n)
            Z = np.stack([z_prev, current], axis=1).astype(int)
            X = CovariateSeries(np.stack([x_t, x_t], axis=1), n)
            for site in range(n):
                want = conditional_from_table(probs, states, site, current)
                got = conditional_prob(site, 1, Z, X, params, graph)
                assert got == pytest.approx(want, abs=1e-12)


class TestTransitions:
    def setup_method(self):
        self.shape = GridShape(2, 2)
        self.graph = build_neighbor_graph(self.shape, Rect(1, 1))
        self.params = ModelParams(np.array([-0.8]), 0.5, 0.6)
        self.x_t = np.zeros((4, 0))

    def test_rows_normalize(self):
        states = enumerate_states(4)
        for y in (np.zeros(4), np.ones(4), np.array([1.0, 0, 0, 1])):
            logs = [
                transition_log_prob(y, states[m], self.x_t, self.params, self.graph)
                for m in range(16)
            ]
            assert logsumexp(logs) == pytest.approx(0.0, abs=1e-12)

    def test_matches_brute_force_table(self):
        y = np.array([0.0, 1.0, 1.0, 0.0])
        probs = brute_force_joint(y, self.x_t, self.params, self.graph)
        states = enumerate_states(4)
        for m in range(16):
            got = transition_log_prob(y, states[m], self.x_t, self.params, self.graph)
            assert np.exp(got) == pytest.approx(probs[m], rel=1e-10)

    def test_no_past_dependence_when_rho2_zero(self):
        # with onestep centering and rho2 = 0, offsets are y-free
        params = ModelParams(np.array([-0.8]), 0.5, 0.0, centering="onestep")
        states = enumerate_states(4)
        z = states[9]
        base = transition_log_prob(np.zeros(4), z, self.x_t, params, self.graph)
        for m in range(16):
            got = transition_log_prob(states[m], z, self.x_t, params, self.graph)
            assert got == pytest.approx(base, abs=1e-12)


def test_params_validation():
    with pytest.raises(ValueError):
        ModelParams(np.array([np.nan]), 0.0, 0.0)
    with pytest.raises(ValueError):
        ModelParams(np.array([0.0]), 0.0, 0.0, centering="other")
    params = ModelParams(np.array([1.0, 2.0]), 0.3, -0.2)
    round_trip = params.with_vector(params.as_vector())
    np.testing.assert_allclose(round_trip.beta, params.beta)
    assert round_trip.rho1 == params.rho1 and round_trip.rho2 == params.rho2


def test_covariate_series_shapes():
    X = CovariateSeries.temporal(np.arange(4.0), 5, name="trend")
    assert X.spatially_constant and X.horizon == 3 and X.n_features == 1
    assert X.at_time(2).shape == (5, 1)
    full = X.with_column(np.ones((5, 4)), "extra")
    assert not full.spatially_constant and full.n_features == 2
    assert full.names == ["trend", "extra"]
    with pytest.raises(ValueError):
        full.with_column(np.ones((5, 4)), "extra")
    with pytest.raises(IndexError):
        X.at_time(4)
