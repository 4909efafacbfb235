"""Bootstrap particle system: multinomial selection on ``G_{p-1}``, then mutation by ``M_p``.

Randomness comes from :class:`RngPolicy`. Each ``(replicate, time, purpose)``
triple owns an independent PCG64 stream and particle ``i`` always consumes
position ``i`` of that stream's draws, so results never depend on how work is
split across threads.
"""
import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import ParticleCollapseError, ValidationError

_SELECT, _MUTATE, _INIT = 0, 1, 2


@dataclass(frozen=True)
class RngPolicy:
    master_seed: int

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2 ** 64:
            raise ValidationError("master seed must be a 64-bit unsigned integer")

    def generator(self, replicate, p, purpose):
        seq = np.random.SeedSequence(int(self.master_seed), spawn_key=(int(replicate), int(p), int(purpose)))
        return np.random.Generator(np.random.PCG64(seq))


@dataclass(frozen=True)
class ParticleEnsemble:
    time_index: int
    particles: np.ndarray
    ancestors: np.ndarray  # None at p = 0
    log_mean_potentials: tuple  # log eta_q^N(G_q), q < time_index

    @property
    def N(self):
        return self.particles.shape[0]

    def digest(self):
        return hashlib.sha256(np.ascontiguousarray(self.particles).tobytes()).hexdigest()


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def init(model, N, rng_policy, replicate=0):
    N = int(N)
    if N < 1:
        raise ValidationError(f"N must be >= 1, got {N}")
    rng = rng_policy.generator(replicate, 0, _INIT)
    x = model.initial_sampler(rng, N)
    return ParticleEnsemble(0, _frozen(x), None, ())


def sorted_uniforms(rng, N):
    """N sorted U(0,1) order statistics in O(N) via normalised exponential spacings."""
    e = rng.standard_exponential(N + 1)
    c = np.cumsum(e)
    return c[:N] / c[N]


def select_ancestors(log_weights, u):
    """Inverse-CDF multinomial selection of ancestors for sorted uniforms ``u``.

    Returns ``(ancestors, log_mean_weight)``; ancestors is None when every
    weight is zero.
    """
    m = np.max(log_weights)
    if not np.isfinite(m):
        return None, -np.inf
    w = np.exp(log_weights - m)
    cdf = np.cumsum(w)
    total = cdf[-1]
    idx = np.searchsorted(cdf, u * total, side="right")
    np.minimum(idx, len(w) - 1, out=idx)
    return idx, float(m + np.log(total / len(w)))


def step(ensemble, model, rng_policy, replicate=0, log_potentials=None):
    p = ensemble.time_index + 1
    model.check_horizon(p)
    if log_potentials is None:
        log_potentials = model.log_potential(p - 1, ensemble.particles)
    u = sorted_uniforms(rng_policy.generator(replicate, p, _SELECT), ensemble.N)
    anc, log_mean = select_ancestors(log_potentials, u)
    if anc is None:
        raise ParticleCollapseError(p - 1, replicate)
    x = model.transition_sampler(p, ensemble.particles[anc], rng_policy.generator(replicate, p, _MUTATE))
    return ParticleEnsemble(p, _frozen(x), _frozen(anc), ensemble.log_mean_potentials + (log_mean,))


def eta_estimate(ensemble, f):
    """``eta_n^N(f)``; ``f`` maps a state array to values (or a time-indexed term)."""
    vals = f(ensemble.particles) if not hasattr(f, "term") else f(ensemble.time_index, ensemble.particles)
    return float(np.mean(np.asarray(vals, dtype=float)))


def gamma_log_estimate(ensemble, f=None):
    """``(log |gamma_n^N(f)|, sign)``; ``f=None`` means ``f = 1``."""
    log_norm = float(np.sum(ensemble.log_mean_potentials)) if ensemble.log_mean_potentials else 0.0
    if f is None:
        return log_norm, 1.0
    eta = eta_estimate(ensemble, f)
    if eta == 0.0:
        return -np.inf, 0.0
    return log_norm + float(np.log(abs(eta))), float(np.sign(eta))


def run_filter(model, n, N, rng_policy, replicate=0):
    """Yield the ensembles at times ``0..n``."""
    model.check_horizon(n)
    ens = init(model, N, rng_policy, replicate)
    yield ens
    for _ in range(n):
        ens = step(ens, model, rng_policy, replicate)
        yield ens
