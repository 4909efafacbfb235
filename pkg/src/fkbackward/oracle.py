"""Exact Feynman-Kac quantities on finite state spaces.

Everything here is matrix-vector algebra over ``S`` states. Products of
normalizers are carried as logs; backward sweeps rescale their vectors to
unit maximum at every step and keep the log scale aside.

``enumerate_paths`` sums over every path and is the reference that the
recursions are tested against.
"""
import itertools
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateFlowError,
    OracleInconsistencyError,
    SingularKernelError,
    ValidationError,
)
from .models import FiniteHMM

MAX_PATHS = 10_000_000


@dataclass(frozen=True)
class DiscreteDistribution:
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if np.any(p < 0.0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValidationError("probabilities must be nonnegative and sum to 1")

    def expect(self, f):
        return float(self.probs @ np.asarray(f, dtype=float))


@dataclass(frozen=True)
class TransitionMatrix:
    entries: np.ndarray
    markov: bool = True

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=float)
        if np.any(e < 0.0):
            raise ValidationError("transition entries must be nonnegative")
        if self.markov and np.any(np.abs(e.sum(axis=1) - 1.0) > 1e-12):
            raise ValidationError("markov transition rows must sum to 1")


@dataclass(frozen=True)
class Flow:
    """Predictor flow ``eta_0..eta_n`` and normalizers ``lambda_p = eta_p(G_p)``, ``p < n``."""

    etas: np.ndarray  # (n+1, S)
    log_lambdas: np.ndarray  # (n,)
    model: FiniteHMM

    @property
    def n(self):
        return self.etas.shape[0] - 1

    @property
    def log_gamma_n(self):
        return float(np.sum(self.log_lambdas))

    def distributions(self):
        return [DiscreteDistribution(e) for e in self.etas]


@dataclass(frozen=True)
class BackwardKernel:
    """``mats[q-1][x_q, x_{q-1}] = M_{q, eta_{q-1}}(x_q, x_{q-1})`` for ``q = 1..n``."""

    mats: tuple

    def __getitem__(self, q):
        return self.mats[q - 1]


@dataclass(frozen=True)
class SemigroupCache:
    n: int
    q1_scaled: np.ndarray  # (n+1, S): Q_{p,n}(1) / exp(log_scale[p])
    log_scale: np.ndarray  # (n+1,)
    log_lambdas: np.ndarray
    h: np.ndarray  # (n+1, S): h_{p,n}

    def log_eta_q1(self, etas):
        """``log eta_p(Q_{p,n}(1))`` for every p."""
        return self.log_scale + np.log(np.einsum("ps,ps->p", etas, self.q1_scaled))


@dataclass
class VarianceOracle:
    n: int
    sigma2: float
    per_p_terms: np.ndarray
    sigma2_varsum: float
    per_p_varsum: np.ndarray
    smoother_value: float
    log_gamma_n: float

    def report(self):
        return {
            "n": self.n,
            "sigma2": self.sigma2,
            "per_p_terms": self.per_p_terms.tolist(),
            "sigma2_varsum": self.sigma2_varsum,
            "smoother_value": self.smoother_value,
            "log_gamma_n": self.log_gamma_n,
        }


def _require_finite(model):
    if not isinstance(model, FiniteHMM):
        raise ValidationError("the exact oracle needs a finite-state model")


def forward_flow(model, n):
    _require_finite(model)
    model.check_horizon(n)
    etas = np.empty((n + 1, model.states.size))
    etas[0] = model.initial
    log_lambdas = np.empty(n)
    for p in range(1, n + 1):
        w = etas[p - 1] * model.potential_vector(p - 1)
        lam = w.sum()
        if not lam > 0.0:
            raise DegenerateFlowError(p - 1)
        log_lambdas[p - 1] = np.log(lam)
        etas[p] = (w / lam) @ model.transition
    return Flow(etas, log_lambdas, model)


def enumerate_paths(model, n, F):
    """Brute-force sum over all ``S^(n+1)`` paths.

    Returns ``(unnormalized, normalized)``: the weighted sum of ``F`` (which
    is ``gamma_n(f)`` when ``F = f(x_n)``) and ``Q_n(F)``. Only the model's
    density callables are used, not its matrices.
    """
    _require_finite(model)
    model.check_horizon(n)
    S = model.states.size
    if S ** (n + 1) > MAX_PATHS:
        raise ValidationError(f"path enumeration refused: {S}^{n + 1} paths exceeds {MAX_PATHS}")
    states = np.arange(S)
    log_mu = model.initial_log_density(states)
    log_g = np.stack([model.log_potential(p, states) for p in range(n)]) if n else np.zeros((0, S))
    log_h = [model.transition_log_density(p, states[:, None], states[None, :]) for p in range(1, n + 1)]
    paths = np.array(list(itertools.product(range(S), repeat=n + 1)), dtype=np.int64).reshape(-1, n + 1)
    log_w = log_mu[paths[:, 0]].copy()
    for p in range(n):
        log_w += log_g[p][paths[:, p]] + log_h[p][paths[:, p], paths[:, p + 1]]
    shift = log_w.max()
    if not np.isfinite(shift):
        raise DegenerateFlowError(n, "every path has zero weight")
    w = np.exp(log_w - shift)
    values = F(paths) if callable(F) and not hasattr(F, "on_path") else F.on_path(paths)
    values = np.asarray(values, dtype=float)
    z = w.sum()
    normalized = float(w @ values / z)
    unnormalized = float(np.exp(shift) * z * normalized)
    return unnormalized, normalized


def backward_kernels(flow, model=None):
    model = model or flow.model
    mats = []
    for q in range(1, flow.n + 1):
        eta_prev = flow.etas[q - 1]
        num = (eta_prev * model.potential_vector(q - 1))[:, None] * model.transition  # (x_{q-1}, x_q)
        norm = num.sum(axis=0)
        reachable = flow.etas[q] > 0.0
        bad = np.flatnonzero(reachable & ~(norm > 0.0))
        if bad.size:
            raise SingularKernelError(q, int(bad[0]))
        mat = np.empty_like(num.T)
        ok = norm > 0.0
        mat[ok] = num.T[ok] / norm[ok, None]
        # rows of unreachable states carry zero eta-mass; any distribution will do
        mat[~ok] = eta_prev
        mats.append(mat)
    return BackwardKernel(tuple(mats))


def _backward_sums(kernels, ftab, n):
    """``B_p(x)``: backward expectation of ``sum_{q<p} f_q(x_q)`` given ``x_p = x``."""
    S = ftab.shape[1]
    B = np.zeros((n + 1, S))
    for q in range(1, n + 1):
        B[q] = kernels[q] @ (ftab[q - 1] + B[q - 1])
    return B


def _ftable(F, model, n):
    if isinstance(F, np.ndarray):
        if F.shape != (n + 1, model.states.size):
            raise ValidationError(f"functional table must have shape {(n + 1, model.states.size)}")
        return F.astype(float)
    return F.table(model.states.size, n)


def smoother_expectation(flow, kernels, F, n=None):
    n = flow.n if n is None else n
    if n != flow.n or len(kernels.mats) != n:
        raise ValidationError("flow, kernels and horizon disagree")
    ftab = _ftable(F, flow.model, n)
    B = _backward_sums(kernels, ftab, n)
    return float(flow.etas[n] @ (ftab[n] + B[n]))


def semigroup_cache(flow, model=None, n=None):
    model = model or flow.model
    n = flow.n if n is None else n
    S = model.states.size
    u = np.empty((n + 1, S))
    log_scale = np.zeros(n + 1)
    u[n] = 1.0
    for p in range(n - 1, -1, -1):
        v = model.potential_vector(p) * (model.transition @ u[p + 1])
        m = v.max()
        if not m > 0.0:
            raise DegenerateFlowError(p, f"Q_{{{p},{n}}}(1) vanishes identically")
        u[p] = v / m
        log_scale[p] = log_scale[p + 1] + np.log(m)
    eta_u = np.einsum("ps,ps->p", flow.etas, u)
    h = u / eta_u[:, None]
    return SemigroupCache(n, u, log_scale, flow.log_lambdas, h)


def _forward_sums(model, ftab, cache):
    """``A_p = sum_{q=p}^n Q_{p,q}(f_q Q_{q,n}(1))`` in the scale of ``cache.q1_scaled[p]``."""
    n = cache.n
    A = np.empty_like(cache.q1_scaled)
    A[n] = ftab[n]
    for p in range(n - 1, -1, -1):
        rescale = np.exp(cache.log_scale[p + 1] - cache.log_scale[p])
        A[p] = ftab[p] * cache.q1_scaled[p] + model.potential_vector(p) * (model.transition @ A[p + 1]) * rescale
    return A


def asymptotic_variance(flow, kernels, F, n=None, *, cache=None, tol=1e-9):
    """Asymptotic variance of the forward-only smoother for additive ``F``.

    ``D_{p,n}(F)(x) = Q_{p,n}(1)(x) B_p(x) + A_p(x)`` with ``B_p`` the
    backward sum and ``A_p`` the forward sum. Two forms are evaluated: the
    ``h_{p,n} (P_{p,n}(F) - ratio)`` form on the uncentered functional, and
    ``sum_p Var_{eta_p}(D_{p,n}(F_c) / eta_p(Q_{p,n}(1)))`` on ``F`` centered
    by its smoothed mean. They must agree to ``tol``.
    """
    n = flow.n if n is None else n
    model = flow.model
    ftab = _ftable(F, model, n)
    cache = cache or semigroup_cache(flow, model, n)
    etas = flow.etas
    B = _backward_sums(kernels, ftab, n)
    A = _forward_sums(model, ftab, cache)
    U = cache.q1_scaled
    D_F = U * B + A  # D_{p,n}(F) up to the per-p scale
    D_1 = U  # D_{p,n}(1) = Q_{p,n}(1)

    terms = np.empty(n + 1)
    for p in range(n + 1):
        zero = np.flatnonzero(~(D_1[p] > 0.0))
        if zero.size:
            raise SingularKernelError(p, int(zero[0]), f"D_{{{p},{n}}}(1) vanishes at state {int(zero[0])} (p={p})")
        P = D_F[p] / D_1[p]
        ratio = (etas[p] @ D_F[p]) / (etas[p] @ D_1[p])
        terms[p] = etas[p] @ (cache.h[p] * (P - ratio)) ** 2

    q_value = smoother_expectation(flow, kernels, ftab, n)
    var_terms = np.empty(n + 1)
    for p in range(n + 1):
        norm = etas[p] @ U[p]
        g_c = (D_F[p] - q_value * D_1[p]) / norm
        mean = etas[p] @ g_c
        var_terms[p] = etas[p] @ (g_c - mean) ** 2

    sigma2 = float(np.sum(terms))
    sigma2_vs = float(np.sum(var_terms))
    if abs(sigma2 - sigma2_vs) > tol * max(1.0, abs(sigma2)):
        raise OracleInconsistencyError(
            f"variance forms disagree: {sigma2!r} vs {sigma2_vs!r} (n={n})"
        )
    return VarianceOracle(n, sigma2, terms, sigma2_vs, var_terms, q_value, flow.log_gamma_n)


def oracle_report(model, F, n):
    """Everything the ``oracle`` CLI subcommand writes."""
    flow = forward_flow(model, n)
    kernels = backward_kernels(flow, model)
    return asymptotic_variance(flow, kernels, F, n).report()
