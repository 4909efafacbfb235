import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fkbackward.config import dumps, model_from_config, simulate_data
from fkbackward.errors import ValidationError
from fkbackward.models import (
    h_obs_from_config,
    kalman_rts_moments,
    make_bernoulli_hmm,
    make_finite_hmm,
    make_gaussian_rw_hmm,
    make_linear_gaussian_hmm,
)
from fkbackward.oracle import forward_flow

from .conftest import random_finite_model


def gauss_logpdf(y, m, v):
    return -0.5 * (np.log(2 * np.pi * v) + (y - m) ** 2 / v)


# ---------------------------------------------------------------- gaussian_rw


def test_gaussian_rw_zero_obs_constant_potential():
    m = make_gaussian_rw_hmm(1, 1.5, 5.0, h_obs_from_config("zero"), [0.0, 0.0, 0.0])
    x = np.linspace(-30, 30, 101)[:, None]
    lg = m.log_potential(1, x)
    assert np.allclose(lg, -0.5 * np.log(2 * np.pi * 5.0), rtol=0, atol=1e-15)


def test_gaussian_rw_zero_obs_filter_is_prior_walk():
    from fkbackward import smc

    m = make_gaussian_rw_hmm(1, 1.5, 5.0, h_obs_from_config("zero"), [0.0] * 4)
    ens = list(smc.run_filter(m, 4, 20000, smc.RngPolicy(5)))[-1]
    # prior walk at time 4: N(0, 1 + 4)
    assert abs(np.mean(ens.particles)) < 4 * np.sqrt(5 / 20000)
    assert abs(np.var(ens.particles) - 5.0) < 0.25


def test_gaussian_rw_tanh_potential_direct_formula():
    m = make_gaussian_rw_hmm(1, 1.5, 5.0, h_obs_from_config("tanh"), [0.5])
    direct = gauss_logpdf(0.5, np.tanh(0.0), 5.0)
    assert abs(float(m.log_potential(0, np.zeros((1, 1)))[0]) - direct) < 1e-14


def test_gaussian_rw_sigma5_exceeds_threshold():
    m = make_gaussian_rw_hmm(1, 1.05, 5.0, h_obs_from_config("tanh"), [0.1])
    assert m.sigma_y2 > 4


@pytest.mark.parametrize("delta0", [1.0, 0.5, -2.0])
def test_gaussian_rw_rejects_small_delta0(delta0):
    with pytest.raises(ValidationError):
        make_gaussian_rw_hmm(1, delta0, 5.0, h_obs_from_config("tanh"), [0.1])


def test_gaussian_rw_rejects_empty_observations():
    with pytest.raises(ValidationError):
        make_gaussian_rw_hmm(1, 1.5, 5.0, h_obs_from_config("tanh"), [])


def test_gaussian_rw_potential_bounded_by_analytic_sup():
    rng = np.random.default_rng(0)
    for d in (1, 2):
        obs = rng.uniform(-1, 1, size=(6, d))
        m = make_gaussian_rw_hmm(d, 1.5, 5.0, h_obs_from_config("tanh"), obs)
        axis = np.linspace(-50, 50, 201 if d == 1 else 41)
        grid = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), -1).reshape(-1, d)
        for p in range(6):
            assert np.max(m.log_potential(p, grid)) <= m.log_potential_sup + 1e-15


def test_gaussian_rw_drift_V():
    m = make_gaussian_rw_hmm(2, 1.5, 5.0, h_obs_from_config("tanh"), np.zeros((3, 2)))
    x = np.array([[1.0, 2.0]])
    assert m.drift.V(x)[0] == pytest.approx(1 + 5.0 / (2 * 2.5), abs=1e-15)
    assert np.all(m.drift.V(np.random.default_rng(1).normal(size=(100, 2))) >= 1.0)


# ---------------------------------------------------------------- bernoulli


def test_bernoulli_half_at_zero():
    for y in (0.0, 1.0):
        m = make_bernoulli_hmm(1, [y])
        assert np.exp(m.log_potential(0, np.zeros((1, 1))))[0] == pytest.approx(0.5, abs=1e-15)


def test_bernoulli_monotone_limit():
    m = make_bernoulli_hmm(1, [1.0])
    x = np.linspace(0, 40, 400)[:, None]
    g = np.exp(m.log_potential(0, x))
    assert np.all(np.diff(g) >= 0)
    assert g[-1] == pytest.approx(1.0, abs=1e-15)


def test_bernoulli_product_of_scalars():
    m = make_bernoulli_hmm(2, [[1.0, 0.0]])
    x = np.array([[0.3, -0.7]])
    expected = (1 / (1 + np.exp(-0.3))) * (1 - 1 / (1 + np.exp(0.7)))
    assert np.exp(m.log_potential(0, x))[0] == pytest.approx(expected, rel=1e-14)


def test_bernoulli_rejects_non_binary():
    with pytest.raises(ValidationError, match="not 0 or 1"):
        make_bernoulli_hmm(1, [0.0, 0.5])


@given(st.lists(st.floats(-60, 60), min_size=1, max_size=20), st.integers(0, 1))
def test_bernoulli_potentials_in_unit_interval(xs, y):
    m = make_bernoulli_hmm(1, [float(y)])
    g = np.exp(m.log_potential(0, np.array(xs)[:, None]))
    assert np.all((g > 0) & (g <= 1))


# ---------------------------------------------------------------- finite


def test_finite_single_state():
    m = make_finite_hmm(1, [1.0], [[1.0]], [[0.3], [2.0], [0.7]])
    flow = forward_flow(m, 3)
    assert np.all(flow.etas == 1.0)


def test_finite_identity_transition_frozen_paths():
    mu = np.array([0.3, 0.7])
    G = np.array([[0.5, 2.0], [1.5, 0.1], [0.9, 0.9]])
    m = make_finite_hmm(2, mu, np.eye(2), G)
    flow = forward_flow(m, 3)
    w = mu * G.prod(axis=0)
    assert np.allclose(flow.etas[3], w / w.sum(), atol=1e-15)


def test_finite_rejects_bad_row():
    with pytest.raises(ValidationError, match="row 1"):
        make_finite_hmm(2, [0.5, 0.5], [[0.5, 0.5], [0.5, 0.6]], [[1.0, 1.0]])


def test_finite_rejects_bad_initial():
    with pytest.raises(ValidationError):
        make_finite_hmm(2, [0.5, 0.6], np.eye(2), [[1.0, 1.0]])


def test_finite_rejects_negative_potential():
    with pytest.raises(ValidationError, match="potentials"):
        make_finite_hmm(2, [0.5, 0.5], np.eye(2), [[1.0, -1.0]])


def test_finite_config_roundtrip_bit_exact():
    rng = np.random.default_rng(3)
    cfg = {
        "model": "finite",
        "initial": rng.dirichlet(np.ones(3)).tolist(),
        "transition": rng.dirichlet(np.ones(3), size=3).tolist(),
        "potentials": rng.uniform(0.1, 2, size=(4, 3)).tolist(),
    }
    m1 = model_from_config(cfg)
    cfg2 = json.loads(dumps(m1.to_config()))
    m2 = model_from_config(cfg2)
    assert np.array_equal(m1.initial, m2.initial)
    assert np.array_equal(m1.transition, m2.transition)
    assert np.array_equal(m1.potentials, m2.potentials)


@pytest.mark.parametrize("seed", range(3))
def test_finite_density_sampler_consistency(seed):
    m = random_finite_model(seed, S=3)
    rng = np.random.default_rng(seed)
    draws = 100_000
    for x_prev in range(3):
        y = m.transition_sampler(1, np.full(draws, x_prev), rng)
        freq = np.bincount(y, minlength=3) / draws
        p = np.exp(m.transition_log_density(1, np.full(3, x_prev), np.arange(3)))
        assert np.all(np.abs(freq - p) <= 3 * np.sqrt(p * (1 - p) / draws) + 1e-12)
    x0 = m.initial_sampler(rng, draws)
    freq = np.bincount(x0, minlength=3) / draws
    assert np.all(np.abs(freq - m.initial) <= 3 * np.sqrt(m.initial * (1 - m.initial) / draws) + 1e-12)


@given(st.integers(0, 10_000))
@settings(max_examples=30)
def test_finite_transition_rows_normalised(seed):
    m = random_finite_model(seed)
    S = m.states.size
    s = np.arange(S)
    dens = np.exp(m.transition_log_density(1, s[:, None], s[None, :]))
    assert np.allclose(dens.sum(axis=1), 1.0, atol=1e-12)


def test_gaussian_density_sampler_consistency():
    m = make_gaussian_rw_hmm(1, 1.5, 5.0, h_obs_from_config("tanh"), [0.0, 0.0], walk_coef=0.5, walk_var=2.0)
    rng = np.random.default_rng(0)
    x = m.transition_sampler(1, np.full((100_000, 1), 1.0), rng)
    assert abs(x.mean() - 0.5) < 4 * np.sqrt(2.0 / 1e5)
    assert abs(x.var() - 2.0) < 0.05
    ys = np.linspace(-5, 5, 11)[:, None]
    ld = m.transition_log_density(1, np.ones_like(ys), ys)
    assert np.allclose(ld, gauss_logpdf(ys[:, 0], 0.5, 2.0), atol=1e-14)


# ---------------------------------------------------------------- linear gaussian


def grid_smoother(a, q, c, r, y, n, m0=0.0, P0=1.0, step=0.01, lim=10.0):
    """Discretised forward-backward: smoothed means of x_0..x_n given y_0..y_{n-1}."""
    x = np.arange(-lim, lim + step / 2, step)
    K = np.exp(-0.5 * (x[None, :] - a * x[:, None]) ** 2 / q)
    K /= K.sum(axis=1, keepdims=True)
    prior = np.exp(-0.5 * (x - m0) ** 2 / P0)
    prior /= prior.sum()
    lik = [np.exp(-0.5 * (y[p] - c * x) ** 2 / r) for p in range(n)]
    alpha = [prior]
    for p in range(n):
        f = alpha[-1] * lik[p]
        alpha.append((f / f.sum()) @ K)
    beta = np.ones_like(x)
    means = [None] * (n + 1)
    means[n] = alpha[n] @ x
    for p in range(n - 1, -1, -1):
        beta = lik[p] * (K @ beta)
        beta /= beta.max()
        post = alpha[p] * beta
        means[p] = post @ x / post.sum()
    return np.array(means)


def test_kalman_matches_grid_solver():
    rng = np.random.default_rng(11)
    y = rng.normal(size=11)
    m = make_linear_gaussian_hmm(0.9, 1.0, 1.0, 1.0, y)
    km = kalman_rts_moments(m, 11)
    ref = grid_smoother(0.9, 1.0, 1.0, 1.0, y, 11)
    assert np.max(np.abs(km.smoothed_mean - ref)) < 2e-3


def test_kalman_uninformative_keeps_prior_mean():
    m = make_linear_gaussian_hmm(1.0, 1.0, 0.0, 1.0, [3.0, -2.0, 5.0], m0=0.7)
    km = kalman_rts_moments(m, 3)
    assert km.smoothed_mean[0] == pytest.approx(0.7, abs=1e-14)


def test_kalman_a_zero_conjugate_update():
    y = np.array([1.5, -0.4, 2.2, 0.3])
    q, c, r = 2.0, 1.3, 0.7
    m = make_linear_gaussian_hmm(0.0, q, c, r, y)
    km = kalman_rts_moments(m, 4)
    for p in range(1, 4):
        post_mean = c * q / (c * c * q + r) * y[p]
        assert km.filtered_mean[p] == pytest.approx(post_mean, abs=1e-14)
        assert km.predicted_mean[p] == 0.0


def test_linear_gaussian_rejects_bad_variance():
    with pytest.raises(ValidationError):
        make_linear_gaussian_hmm(0.9, 0.0, 1.0, 1.0, [0.0])


# ---------------------------------------------------------------- config


def test_simulate_data_reproducible():
    cfg = {"model": "linear_gaussian", "a": 0.9, "sigma_x2": 1.0, "c": 1.0, "sigma_y2": 1.0}
    x1, y1 = simulate_data(cfg, 15, 4)
    x2, y2 = simulate_data(cfg, 15, 4)
    assert np.array_equal(y1, y2) and np.array_equal(x1, x2)
    assert len(y1) == 15


def test_config_simulated_observations():
    cfg = {"model": "finite", "initial": [0.5, 0.5], "transition": [[0.9, 0.1], [0.1, 0.9]],
           "emission": [[0.8, 0.2], [0.2, 0.8]], "observations": {"simulate": {"n": 12, "seed": 1}}}
    m = model_from_config(cfg)
    assert m.horizon == 12


def test_config_unknown_model():
    with pytest.raises(ValidationError, match="unknown model"):
        model_from_config({"model": "nope"})
