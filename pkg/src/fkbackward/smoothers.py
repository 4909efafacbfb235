"""Smoothing estimators for additive functionals.

``backward_update`` is the forward-only O(N^2) recursion: each new particle
carries ``F_p^N(x)``, the backward-weighted average of the previous values
plus ``f_p(x)``. ``genealogy_smooth`` is the O(N) path-space estimator that
averages ``F`` along ancestral lines, kept as the comparator.
"""
import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import kernels, smc
from .errors import SingularKernelError, ValidationError


@dataclass(frozen=True)
class SmoothingStatistics:
    time_index: int
    values: np.ndarray  # F_p^N(x_p^i)
    functional: object
    kernel_evals: int = 0


@dataclass
class Genealogy:
    particles: list = field(default_factory=list)
    ancestors: list = field(default_factory=list)  # ancestors[p] indexes time p-1; None at p = 0

    def append(self, ensemble):
        if ensemble.time_index != len(self.particles):
            raise ValidationError("genealogy must be extended one time step at a time")
        self.particles.append(ensemble.particles)
        self.ancestors.append(ensemble.ancestors)

    @property
    def n(self):
        return len(self.particles) - 1

    def ancestor_matrix(self):
        """``(n+1, N)`` ancestor indices; row 0 is ``-1``."""
        N = self.particles[0].shape[0]
        rows = [np.full(N, -1, dtype=np.int64)] + [np.asarray(a, dtype=np.int64) for a in self.ancestors[1:]]
        return np.stack(rows)

    def trace(self, j, n=None):
        """Indices ``(i_0, ..., i_n)`` of the ancestral path of terminal particle ``j``."""
        n = self.n if n is None else n
        idx = [int(j)]
        for p in range(n, 0, -1):
            idx.append(int(self.ancestors[p][idx[-1]]))
        return idx[::-1]


def init_statistics(ensemble, functional):
    if ensemble.time_index != 0:
        raise ValidationError("smoothing statistics start at p = 0")
    return SmoothingStatistics(0, functional(0, ensemble.particles), functional)


def backward_update(prev_stats, prev_ensemble, new_ensemble, model, *, mode="auto", backend=None):
    """Advance ``F_{p-1}^N`` on the previous ensemble to ``F_p^N`` on the new one.

    ``mode``: ``"dense"`` evaluates all N^2 pairwise weights; ``"aggregated"``
    (finite models only) groups source particles by state, giving the same
    estimator for S^2 table entries; ``"auto"`` picks aggregated when possible.
    """
    p = new_ensemble.time_index
    if prev_ensemble.time_index != p - 1 or prev_stats.time_index != p - 1:
        raise ValidationError("backward_update needs consecutive ensembles and matching statistics")
    if prev_ensemble.N != new_ensemble.N:
        raise ValidationError("ensemble size must stay constant")
    F = prev_stats.functional
    src = prev_ensemble.particles
    tgt = new_ensemble.particles
    f_new = np.asarray(F(p, tgt), dtype=float)
    # shifting by a reference value keeps constant functionals exact and
    # limits cancellation once F grows with p
    ref = float(prev_stats.values[0])
    f_prev = np.asarray(prev_stats.values, dtype=float) - ref
    if model.is_finite:
        states = np.arange(model.states.size)
        log_g_states = model.log_potential(p - 1, states)
        log_trans = model.transition_log_density(p, states[:, None], states[None, :])
        if mode in ("auto", "aggregated"):
            values, evals, bad = kernels.finite_backward_aggregated(src, log_g_states, f_prev, tgt, f_new, log_trans)
        elif mode == "dense":
            values, evals, bad = kernels.finite_backward_dense(
                src, log_g_states, f_prev, tgt, f_new, log_trans, backend=backend)
        else:
            raise ValidationError(f"unknown backward mode {mode!r}")
    else:
        if mode == "aggregated":
            raise ValidationError("aggregated backward mode needs a finite model")
        log_g = model.log_potential(p - 1, src)
        pk = model.pair_kernel
        if pk is not None:
            values, evals, bad = kernels.gaussian_backward(
                src, log_g, f_prev, tgt, f_new, pk.coef, 0.5 / pk.var, backend=backend)
        else:
            def pair(s, t):
                return model.transition_log_density(p, s[None, ...], t[:, None, ...])

            values, evals, bad = kernels.generic_backward(src, log_g, f_prev, tgt, f_new, pair)
    if bad >= 0:
        raise SingularKernelError(p, message=f"singular backward weight: all weights zero for target particle {bad} at p={p}")
    return SmoothingStatistics(p, values + ref, F, int(evals))


def backward_weights(prev_ensemble, new_ensemble, model, j):
    """Normalised backward weights over the previous particles for target ``j``."""
    p = new_ensemble.time_index
    src = prev_ensemble.particles
    x = new_ensemble.particles[j]
    lw = model.log_potential(p - 1, src) + model.transition_log_density(p, src, np.broadcast_to(x, src.shape))
    m = lw.max()
    w = np.exp(lw - m)
    return w / w.sum()


def smooth_estimate(stats, ensemble):
    if stats.time_index != ensemble.time_index:
        raise ValidationError("statistics and ensemble are at different times")
    return float(np.mean(stats.values))


def genealogy_smooth(genealogy, F, n=None):
    """Average of ``F`` over the ancestral paths of the time-``n`` particles."""
    n = genealogy.n if n is None else n
    if n > genealogy.n:
        raise ValidationError(f"genealogy only reaches n={genealogy.n}")
    N = genealogy.particles[n].shape[0]
    idx = np.arange(N)
    total = np.zeros(N)
    for p in range(n, -1, -1):
        total += F(p, genealogy.particles[p][idx])
        if p > 0:
            idx = genealogy.ancestors[p][idx]
    return float(np.mean(total))


@dataclass
class SmootherRun:
    backward: np.ndarray  # Q_p^N(F_p) for p = 0..n (nan if not run)
    genealogy: dict  # horizon -> estimate
    filter_log_gamma: np.ndarray
    ensemble_digest: str
    kernel_evals: list
    final_ensemble: object = None
    genealogy_record: object = None


def run_smoothers(model, F, n, N, rng_policy, replicate=0, *, method="both", mode="auto",
                  backend=None, genealogy_horizons=None):
    """Run one particle system to time ``n`` and feed both smoothers from it.

    Both estimators see the same ensembles; the run's digest hashes every
    particle array so paired runs can be compared.
    """
    if method not in ("backward", "genealogy", "both"):
        raise ValidationError(f"unknown smoothing method {method!r}")
    do_back = method in ("backward", "both")
    do_gen = method in ("genealogy", "both")
    model.check_horizon(n)
    horizons = range(n + 1) if genealogy_horizons is None else sorted(set(genealogy_horizons))
    digest = hashlib.sha256()
    ens = smc.init(model, N, rng_policy, replicate)
    digest.update(ens.particles.tobytes())
    gen = Genealogy()
    gen.append(ens)
    back = np.full(n + 1, np.nan)
    evals = []
    stats = None
    if do_back:
        stats = init_statistics(ens, F)
        back[0] = smooth_estimate(stats, ens)
    log_gamma = np.zeros(n + 1)
    for p in range(1, n + 1):
        new = smc.step(ens, model, rng_policy, replicate)
        digest.update(new.particles.tobytes())
        log_gamma[p] = log_gamma[p - 1] + new.log_mean_potentials[-1]
        if do_back:
            stats = backward_update(stats, ens, new, model, mode=mode, backend=backend)
            back[p] = smooth_estimate(stats, new)
            evals.append(stats.kernel_evals)
        gen.append(new)
        ens = new
    gen_est = {}
    if do_gen:
        for h in horizons:
            if h <= n:
                gen_est[h] = genealogy_smooth(gen, F, h)
    return SmootherRun(back, gen_est, log_gamma, digest.hexdigest(), evals, ens, gen)
