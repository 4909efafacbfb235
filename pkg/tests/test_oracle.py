import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fkbackward import functionals as fn
from fkbackward.errors import DegenerateFlowError, SingularKernelError, ValidationError
from fkbackward.models import make_finite_hmm
from fkbackward.oracle import (
    BackwardKernel,
    DiscreteDistribution,
    TransitionMatrix,
    asymptotic_variance,
    backward_kernels,
    enumerate_paths,
    forward_flow,
    oracle_report,
    semigroup_cache,
    smoother_expectation,
)

from .conftest import random_finite_model, random_functional_table


def table_functional(table):
    return fn.AdditiveFunctional(lambda p, x: table[p][np.asarray(x)], name="table")


def oracle_bundle(model, n):
    flow = forward_flow(model, n)
    return flow, backward_kernels(flow, model)


# ---------------------------------------------------------------- types


def test_discrete_distribution_validates():
    DiscreteDistribution(np.array([0.25, 0.75]))
    with pytest.raises(ValidationError):
        DiscreteDistribution(np.array([0.5, 0.6]))
    with pytest.raises(ValidationError):
        DiscreteDistribution(np.array([1.5, -0.5]))


def test_transition_matrix_semantics():
    TransitionMatrix(np.array([[0.5, 0.5], [1.0, 0.0]]))
    TransitionMatrix(np.array([[2.0, 0.5], [1.0, 3.0]]), markov=False)
    with pytest.raises(ValidationError):
        TransitionMatrix(np.array([[2.0, 0.5], [1.0, 3.0]]))


# ---------------------------------------------------------------- forward flow


def test_flow_n0_is_mu(finite3):
    flow = forward_flow(finite3, 0)
    assert np.array_equal(flow.etas[0], finite3.initial)
    assert flow.log_gamma_n == 0.0


def test_flow_unit_potentials_is_markov():
    P = np.array([[0.7, 0.3], [0.4, 0.6]])
    mu = np.array([0.2, 0.8])
    m = make_finite_hmm(2, mu, P, np.ones((5, 2)))
    flow = forward_flow(m, 5)
    for p in range(6):
        assert np.allclose(flow.etas[p], mu @ np.linalg.matrix_power(P, p), atol=1e-15)


def test_flow_matches_enumeration(finite3):
    n = 5
    flow = forward_flow(finite3, n)
    for s in range(3):
        ind = fn.AdditiveFunctional(lambda p, x, s=s: (np.asarray(x) == s).astype(float) * (p == n))
        _, val = enumerate_paths(finite3, n, ind)
        assert abs(flow.etas[n][s] - val) < 1e-12


def test_flow_degenerate_names_p():
    m = make_finite_hmm(2, [1.0, 0.0], np.eye(2), [[1.0, 1.0], [0.0, 3.0], [1.0, 1.0]])
    with pytest.raises(DegenerateFlowError) as info:
        forward_flow(m, 3)
    assert info.value.p == 1


def test_log_gamma_matches_enumeration(finite3):
    n = 4
    flow = forward_flow(finite3, n)
    terminal_one = fn.AdditiveFunctional(lambda p, x: np.full(np.shape(x), float(p == n)))
    z, _ = enumerate_paths(finite3, n, terminal_one)
    assert abs(flow.log_gamma_n - np.log(z)) < 1e-12


# ---------------------------------------------------------------- enumeration


def test_enumerate_constant_normalised(finite3):
    _, val = enumerate_paths(finite3, 4, fn.constant(1.0).scaled(1.0 / 5))
    assert val == pytest.approx(1.0, abs=1e-15)


def test_enumerate_n0_is_mu(finite3):
    f = fn.coordinate(0, labels=finite3.states.labels)
    _, val = enumerate_paths(finite3, 0, f)
    assert val == pytest.approx(finite3.initial @ np.arange(3), abs=1e-15)


def test_enumerate_refuses_large():
    m = random_finite_model(0, S=4, T=20)
    with pytest.raises(ValidationError, match="refused"):
        enumerate_paths(m, 12, fn.constant(1.0))


# ---------------------------------------------------------------- backward kernels


@given(st.integers(0, 5000))
@settings(max_examples=40)
def test_backward_rows_stochastic(seed):
    m = random_finite_model(seed)
    _, kern = oracle_bundle(m, 6)
    for q in range(1, 7):
        assert np.allclose(kern[q].sum(axis=1), 1.0, atol=1e-12)


def test_backward_identity_frozen():
    m = make_finite_hmm(3, [0.2, 0.3, 0.5], np.eye(3), np.ones((4, 3)))
    _, kern = oracle_bundle(m, 4)
    for q in range(1, 5):
        assert np.array_equal(kern[q], np.eye(3))


def test_backward_symmetric_is_transpose():
    P = np.array([[0.7, 0.3], [0.3, 0.7]])
    m = make_finite_hmm(2, [0.5, 0.5], P, np.ones((3, 2)))
    _, kern = oracle_bundle(m, 3)
    for q in range(1, 4):
        assert np.allclose(kern[q], P.T, atol=1e-15)


def test_backward_smoother_marginals_match_enumeration(finite3):
    n = 5
    flow, kern = oracle_bundle(finite3, n)
    marg = flow.etas[n].copy()
    for q in range(n, 0, -1):
        marg = marg @ kern[q]
        for s in range(3):
            ind = fn.AdditiveFunctional(lambda p, x, s=s, t=q - 1: (np.asarray(x) == s).astype(float) * (p == t))
            _, val = enumerate_paths(finite3, n, ind)
            assert abs(marg[s] - val) < 1e-12


def test_backward_singular_kernel():
    # state 1 is reachable only from state 1, whose potential vanishes at p = 0
    m = make_finite_hmm(2, [0.5, 0.5], [[0.5, 0.5], [0.0, 1.0]], [[1.0, 0.0], [1.0, 1.0]])
    flow = forward_flow(m, 1)
    assert flow.etas[1][1] > 0
    kern = backward_kernels(flow, m)  # reachable via state 0
    assert np.allclose(kern[1].sum(axis=1), 1.0)
    m2 = make_finite_hmm(2, [0.5, 0.5], [[1.0, 0.0], [0.0, 1.0]], [[1.0, 0.0], [1.0, 1.0]])
    flow2 = forward_flow(m2, 1)
    assert flow2.etas[1][1] == 0.0  # unreachable: no error
    backward_kernels(flow2, m2)
    # make state 1 reachable from the unweighted state only through a zero-mass path
    from fkbackward.oracle import Flow

    bad_flow = Flow(np.array([[0.5, 0.5], [0.5, 0.5]]), np.array([0.0]), m2)
    with pytest.raises(SingularKernelError) as info:
        backward_kernels(bad_flow, m2)
    assert info.value.q == 1 and info.value.state == 1


# ---------------------------------------------------------------- smoother value


def test_smoother_constant(finite3):
    flow, kern = oracle_bundle(finite3, 6)
    assert smoother_expectation(flow, kern, fn.constant(2.5), 6) == pytest.approx(7 * 2.5, abs=1e-13)


def test_smoother_n0(finite3):
    flow, kern = oracle_bundle(finite3, 0)
    f = fn.coordinate(0, labels=finite3.states.labels)
    assert smoother_expectation(flow, kern, f, 0) == pytest.approx(finite3.initial @ np.arange(3), abs=1e-15)


def test_smoother_matches_enumeration_n6(finite3):
    tab = random_functional_table(3, 3, 6)
    F = table_functional(tab)
    flow, kern = oracle_bundle(finite3, 6)
    _, ref = enumerate_paths(finite3, 6, F)
    assert abs(smoother_expectation(flow, kern, F, 6) - ref) < 1e-10


@given(st.integers(0, 10_000), st.integers(0, 6))
@settings(max_examples=50, deadline=None)
def test_smoother_equals_enumeration_property(seed, n):
    m = random_finite_model(seed)
    S = m.states.size
    if S ** (n + 1) > 1e5:
        n = int(np.log(1e5) / np.log(max(S, 2))) - 1
    tab = random_functional_table(seed, S, n)
    F = table_functional(tab)
    flow, kern = oracle_bundle(m, n)
    _, ref = enumerate_paths(m, n, F)
    assert abs(smoother_expectation(flow, kern, F, n) - ref) < 1e-9


# ---------------------------------------------------------------- semigroup


def test_semigroup_identity_at_n(finite3):
    flow = forward_flow(finite3, 4)
    cache = semigroup_cache(flow)
    assert np.all(cache.q1_scaled[4] == 1.0) and cache.log_scale[4] == 0.0
    assert np.allclose(cache.h[4], 1.0, atol=1e-15)


def test_semigroup_unit_potentials():
    m = make_finite_hmm(3, [0.2, 0.3, 0.5], np.full((3, 3), 1 / 3), np.ones((4, 3)))
    cache = semigroup_cache(forward_flow(m, 4))
    q1 = cache.q1_scaled * np.exp(cache.log_scale)[:, None]
    assert np.allclose(q1, 1.0, atol=1e-15)


@given(st.integers(0, 5000))
@settings(max_examples=30)
def test_semigroup_normaliser_identity(seed):
    m = random_finite_model(seed)
    n = 6
    flow = forward_flow(m, n)
    cache = semigroup_cache(flow)
    log_eq = cache.log_eta_q1(flow.etas)
    for p in range(n + 1):
        assert abs(log_eq[p] - np.sum(flow.log_lambdas[p:n])) < 1e-10
        assert abs(flow.etas[p] @ cache.h[p] - 1.0) < 1e-10


# ---------------------------------------------------------------- variance


def test_variance_zero_functional(finite3):
    flow, kern = oracle_bundle(finite3, 5)
    v = asymptotic_variance(flow, kern, fn.constant(0.0), 5)
    assert v.sigma2 == 0.0 and np.all(v.per_p_terms == 0.0)


def test_variance_n0(finite3):
    f = fn.coordinate(0, labels=finite3.states.labels)
    flow, kern = oracle_bundle(finite3, 0)
    v = asymptotic_variance(flow, kern, f, 0)
    x = np.arange(3.0)
    mu = finite3.initial
    assert v.sigma2 == pytest.approx(mu @ x ** 2 - (mu @ x) ** 2, abs=1e-15)


def brute_force_variance(model, F, n):
    """Var-sum form with D_{p,n} built from explicit path sums (no recursions)."""
    S = model.states.size
    flow = forward_flow(model, n)
    import itertools

    G = model.potentials
    P = model.transition
    # weight of x_{0:n} given x_p, split into backward (via eta_p-independent path weights) and forward parts
    total = 0.0
    _, q_val = enumerate_paths(model, n, F)
    for p in range(n + 1):
        g = np.zeros(S)
        for path in itertools.product(range(S), repeat=n + 1):
            path = np.array(path)
            # backward weight: eta-path prior to p
            wb = model.initial[path[0]]
            for q in range(p):
                wb *= G[q, path[q]] * P[path[q], path[q + 1]]
            wf = 1.0
            for q in range(p, n):
                wf *= G[q, path[q]] * P[path[q], path[q + 1]]
            Fv = sum(F(q, path[q:q + 1])[0] for q in range(n + 1)) - q_val
            g[path[p]] += wb * wf * Fv
        # g[x] = gamma_p(x) * D_{p,n}(F_c)(x); divide by gamma_p(x) = eta_p(x) gamma_p(1) and normalise
        gamma_p1 = np.exp(np.sum(flow.log_lambdas[:p]))
        with np.errstate(invalid="ignore", divide="ignore"):
            D = np.where(flow.etas[p] > 0, g / (flow.etas[p] * gamma_p1), 0.0)
        norm = np.exp(np.sum(flow.log_lambdas[p:n]))
        ghat = D / norm
        total += flow.etas[p] @ (ghat - flow.etas[p] @ ghat) ** 2
    return total


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_variance_matches_path_space_brute_force(seed):
    m = random_finite_model(seed, S=2 + seed % 2, T=4)
    n = 3
    F = table_functional(random_functional_table(seed, m.states.size, n))
    flow, kern = oracle_bundle(m, n)
    v = asymptotic_variance(flow, kern, F, n)
    assert v.sigma2 == pytest.approx(brute_force_variance(m, F, n), rel=1e-10, abs=1e-12)


@given(st.integers(0, 10_000), st.floats(-50, 50), st.floats(-4, 4))
@settings(max_examples=50, deadline=None)
def test_variance_forms_shift_and_scale(seed, c, s):
    m = random_finite_model(seed)
    n = 5
    F = table_functional(random_functional_table(seed, m.states.size, n))
    flow, kern = oracle_bundle(m, n)
    base = asymptotic_variance(flow, kern, F, n)
    assert abs(base.sigma2 - base.sigma2_varsum) <= 1e-9 * max(1.0, base.sigma2)
    shifted = asymptotic_variance(flow, kern, F.shifted(c), n)
    assert abs(shifted.sigma2 - base.sigma2) <= 1e-9 * max(1.0, base.sigma2)
    scaled = asymptotic_variance(flow, kern, F.scaled(s), n)
    assert abs(scaled.sigma2 - s * s * base.sigma2) <= 1e-9 * max(1.0, s * s * base.sigma2)


def test_variance_two_state_forms_agree(finite2):
    F = fn.indicator(1)
    flow, kern = oracle_bundle(finite2, 3)
    v = asymptotic_variance(flow, kern, F, 3)
    assert abs(v.sigma2 - v.sigma2_varsum) < 1e-10


@pytest.mark.slow
def test_variance_two_state_against_replicates(finite2):
    """N * Var of the backward smoother over replicates vs the oracle (3 standard errors)."""
    from fkbackward import smc, smoothers
    from fkbackward.experiments import variance_with_se

    F = fn.indicator(1)
    n, N, R = 3, 2000, 3000
    flow, kern = oracle_bundle(finite2, n)
    sigma2 = asymptotic_variance(flow, kern, F, n).sigma2
    pol = smc.RngPolicy(99)
    vals = np.array([smoothers.run_smoothers(finite2, F, n, N, pol, r, method="backward").backward[n]
                     for r in range(R)])
    var, se = variance_with_se(vals)
    assert abs(N * var - sigma2) <= 3 * N * se


def test_oracle_report_keys(finite3):
    rep = oracle_report(finite3, fn.indicator(1, 0.5), 5)
    assert set(rep) >= {"n", "sigma2", "per_p_terms", "smoother_value", "log_gamma_n"}
    assert len(rep["per_p_terms"]) == 6


def test_backward_kernel_indexing():
    k = BackwardKernel((np.eye(2), 2 * np.eye(2)))
    assert k[2][0, 0] == 2.0
