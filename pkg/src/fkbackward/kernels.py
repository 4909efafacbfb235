"""Hot loops of the O(N^2) backward recursion.

Each backward update computes, for every target particle ``x_j``,

    values[j] = f(x_j) + sum_i w_ij F[i] / sum_i w_ij,
    log w_ij  = log G(x_i) + log H(x_i, x_j).

Two implementations exist for each kernel family: a numba one (default) and
a blocked numpy one. ``FK_DISABLE_NUMBA=1`` selects numpy everywhere.
Both return ``(values, kernel_evals, bad_row)`` where ``bad_row`` is -1 or
the first target index whose weights are all zero.
"""
import math

import numpy as np

from . import _accel

# Rows whose shifted weight sum falls below this are recomputed with the exact
# row maximum; any weight clamped by the fast exponential is < 1e-307.
_UNDERFLOW_GUARD = 1e-200
# log-weights below this are treated as zero weight
_NEG_FLOOR = -1e300
_BLOCK = 256


def _sanitize_log_weights(log_g):
    log_g = np.asarray(log_g, dtype=np.float64)
    if np.isnan(log_g).any():
        raise ValueError("NaN in log potentials")
    return np.maximum(log_g, _NEG_FLOOR)


# ---------------------------------------------------------------- numpy paths


def gaussian_backward_numpy(src, log_g, f_prev, tgt, f_new, coef, inv2var):
    """Blocked numpy backward update for ``H(x, .) = N(coef * x, var I)``."""
    src = np.ascontiguousarray(src, dtype=np.float64)
    tgt = np.ascontiguousarray(tgt, dtype=np.float64)
    log_g = _sanitize_log_weights(log_g)
    mean = coef * src
    out = np.empty(tgt.shape[0])
    bad = -1
    for start in range(0, tgt.shape[0], _BLOCK):
        xb = tgt[start:start + _BLOCK]
        diff = xb[:, None, :] - mean[None, :, :]
        lw = log_g[None, :] - inv2var * np.einsum("jik,jik->ji", diff, diff)
        row_max = lw.max(axis=1, keepdims=True)
        w = np.exp(lw - row_max)
        w[lw <= _NEG_FLOOR] = 0.0
        total = w.sum(axis=1)
        zero = np.flatnonzero(total <= 0.0)
        if zero.size and bad < 0:
            bad = start + int(zero[0])
        with np.errstate(invalid="ignore", divide="ignore"):
            out[start:start + _BLOCK] = f_new[start:start + _BLOCK] + (w @ f_prev) / total
    return out, src.shape[0] * tgt.shape[0], bad


def finite_weight_table(log_g_states, log_trans):
    """``W[s, t] = exp(logG[s] + logH[s, t] - max_s(...))`` and its column max.

    Every column is shifted by its own maximum, so the table is exact up to
    one rounding per entry.
    """
    lw = log_g_states[:, None] + log_trans
    col_max = lw.max(axis=0)
    finite = np.isfinite(col_max)
    shift = np.where(finite, col_max, 0.0)
    with np.errstate(invalid="ignore"):
        table = np.exp(lw - shift[None, :])
    table[:, ~finite] = 0.0
    return table


def finite_backward_numpy(src, log_g_states, f_prev, tgt, f_new, log_trans):
    table = finite_weight_table(log_g_states, log_trans)
    src = np.asarray(src, dtype=np.int64)
    tgt = np.asarray(tgt, dtype=np.int64)
    out = np.empty(tgt.shape[0])
    bad = -1
    for start in range(0, tgt.shape[0], _BLOCK):
        w = table[src[None, :], tgt[start:start + _BLOCK, None]]
        total = w.sum(axis=1)
        zero = np.flatnonzero(total <= 0.0)
        if zero.size and bad < 0:
            bad = start + int(zero[0])
        with np.errstate(invalid="ignore", divide="ignore"):
            out[start:start + _BLOCK] = f_new[start:start + _BLOCK] + (w @ f_prev) / total
    return out, src.shape[0] * tgt.shape[0], bad


def finite_backward_aggregated(src, log_g_states, f_prev, tgt, f_new, log_trans):
    """Same estimator as the dense finite update, grouped by source state.

    The pairwise weight depends on ``(state(x_i), state(x_j))`` only, so the
    N^2 sum collapses to S^2 table entries plus two O(N) bincounts.
    """
    n_states = log_trans.shape[0]
    table = finite_weight_table(log_g_states, log_trans)
    counts = np.bincount(src, minlength=n_states).astype(np.float64)
    sums = np.bincount(src, weights=f_prev, minlength=n_states)
    denom = counts @ table
    numer = sums @ table
    tgt = np.asarray(tgt, dtype=np.int64)
    zero = np.flatnonzero(denom[tgt] <= 0.0)
    bad = int(zero[0]) if zero.size else -1
    with np.errstate(invalid="ignore", divide="ignore"):
        per_state = numer / denom
    return f_new + per_state[tgt], n_states * n_states, bad


# ---------------------------------------------------------------- numba paths

if _accel.HAVE_NUMBA:
    import numba
    from llvmlite import ir
    from numba import types
    from numba.extending import intrinsic

    @intrinsic
    def _bits_to_double(typingctx, v):
        sig = types.float64(types.int64)

        def codegen(context, builder, signature, args):
            return builder.bitcast(args[0], ir.DoubleType())

        return sig, codegen

    _LOG2E = 1.4426950408889634
    _LN2_HI = 6.93147180369123816490e-01
    _LN2_LO = 1.90821492927058770002e-10

    @numba.njit(fastmath=True, inline="always")
    def _exp_nonpos(x):
        # exp for x <= 0, branch-free so the caller's loop vectorizes.
        # Relative error < 1e-14; inputs below -708 return ~3e-308.
        x = max(x, -708.0)
        k = math.floor(x * _LOG2E + 0.5)
        r = (x - k * _LN2_HI) - k * _LN2_LO
        p = 1.0 + r * (1.0 + r * (0.5 + r * (1.0 / 6.0 + r * (1.0 / 24.0 + r * (
            1.0 / 120.0 + r * (1.0 / 720.0 + r * (1.0 / 5040.0 + r * (
                1.0 / 40320.0 + r * (1.0 / 362880.0 + r * (
                    1.0 / 3628800.0 + r * (1.0 / 39916800.0)))))))))))
        return p * _bits_to_double((np.int64(k) + 1023) << 52)

    @numba.njit(fastmath=True, nogil=True, cache=True)
    def _gaussian_rows(src_mean_t, log_g, f_prev, tgt, f_new, inv2var, out):
        # src_mean_t is (d, m): every inner loop runs over i and vectorizes
        d, m = src_mean_t.shape
        n = tgt.shape[0]
        shift = -np.inf
        for i in range(m):
            shift = max(shift, log_g[i])
        bad = -1
        q = np.empty(m)
        for j in range(n):
            x0 = tgt[j, 0]
            for i in range(m):
                diff = x0 - src_mean_t[0, i]
                q[i] = diff * diff
            for k in range(1, d):
                xk = tgt[j, k]
                for i in range(m):
                    diff = xk - src_mean_t[k, i]
                    q[i] += diff * diff
            s = 0.0
            t = 0.0
            for i in range(m):
                w = _exp_nonpos(log_g[i] - inv2var * q[i] - shift)
                s += w
                t += w * f_prev[i]
            if s < _UNDERFLOW_GUARD:
                # exact row maximum; libm exp gives true zeros
                row_max = -np.inf
                for i in range(m):
                    q[i] = log_g[i] - inv2var * q[i]
                    row_max = max(row_max, q[i])
                s = 0.0
                t = 0.0
                if row_max > _NEG_FLOOR:
                    for i in range(m):
                        if q[i] > _NEG_FLOOR:
                            w = math.exp(q[i] - row_max)
                            s += w
                            t += w * f_prev[i]
                if s <= 0.0:
                    if bad < 0:
                        bad = j
                    out[j] = np.nan
                    continue
            out[j] = f_new[j] + t / s
        return m * n, bad

    @numba.njit(nogil=True, cache=True)
    def _finite_rows(src, table, f_prev, tgt, f_new, out):
        m = src.shape[0]
        n = tgt.shape[0]
        evals = 0
        bad = -1
        for j in range(n):
            col = tgt[j]
            s = 0.0
            t = 0.0
            for i in range(m):
                w = table[src[i], col]
                s += w
                t += w * f_prev[i]
            evals += m
            if s <= 0.0:
                if bad < 0:
                    bad = j
                out[j] = np.nan
            else:
                out[j] = f_new[j] + t / s
        return evals, bad


def gaussian_backward_numba(src, log_g, f_prev, tgt, f_new, coef, inv2var):
    src_mean_t = np.ascontiguousarray((coef * np.asarray(src, dtype=np.float64)).T)
    tgt = np.ascontiguousarray(tgt, dtype=np.float64)
    log_g = _sanitize_log_weights(log_g)
    if log_g.max() <= _NEG_FLOOR:
        return np.full(tgt.shape[0], np.nan), 0, 0
    out = np.empty(tgt.shape[0])
    evals, bad = _gaussian_rows(
        src_mean_t,
        log_g,
        np.ascontiguousarray(f_prev, dtype=np.float64),
        tgt,
        np.ascontiguousarray(f_new, dtype=np.float64),
        float(inv2var),
        out,
    )
    return out, int(evals), int(bad)


def finite_backward_numba(src, log_g_states, f_prev, tgt, f_new, log_trans):
    table = finite_weight_table(log_g_states, log_trans)
    out = np.empty(len(tgt))
    evals, bad = _finite_rows(
        np.ascontiguousarray(src, dtype=np.int64),
        table,
        np.ascontiguousarray(f_prev, dtype=np.float64),
        np.ascontiguousarray(tgt, dtype=np.int64),
        np.ascontiguousarray(f_new, dtype=np.float64),
        out,
    )
    return out, int(evals), int(bad)


def gaussian_backward(*args, backend=None):
    backend = backend or _accel.backend_name()
    if backend == "numba":
        return gaussian_backward_numba(*args)
    return gaussian_backward_numpy(*args)


def finite_backward_dense(*args, backend=None):
    backend = backend or _accel.backend_name()
    if backend == "numba":
        return finite_backward_numba(*args)
    return finite_backward_numpy(*args)


def generic_backward(src, log_g, f_prev, tgt, f_new, pair_log_density):
    """Fallback for arbitrary models; ``pair_log_density(src, tgt_block)``
    returns the ``(len(tgt_block), len(src))`` matrix of log H."""
    log_g = _sanitize_log_weights(log_g)
    n = len(tgt)
    out = np.empty(n)
    bad = -1
    for start in range(0, n, _BLOCK):
        lw = log_g[None, :] + pair_log_density(src, tgt[start:start + _BLOCK])
        row_max = lw.max(axis=1, keepdims=True)
        with np.errstate(invalid="ignore"):
            w = np.exp(lw - row_max)
        w[~(lw > _NEG_FLOOR)] = 0.0
        total = w.sum(axis=1)
        zero = np.flatnonzero(total <= 0.0)
        if zero.size and bad < 0:
            bad = start + int(zero[0])
        with np.errstate(invalid="ignore", divide="ignore"):
            out[start:start + _BLOCK] = f_new[start:start + _BLOCK] + (w @ f_prev) / total
    return out, len(src) * n, bad
