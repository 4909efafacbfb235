"""Replicate studies of estimator variance and per-step cost.

Each replicate owns its RNG streams (see :class:`~fkbackward.smc.RngPolicy`),
so the replicate results do not depend on execution order or thread count.
Results are gathered by replicate index before any reduction.
"""
import os
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from . import oracle, smc, smoothers
from .config import model_from_config, resolve_config
from .errors import ValidationError
from .functionals import default_probe, functional_from_config

ESTIMATORS = ("backward", "genealogy", "filter")
CLT_RATIO_BAND = (0.8, 1.2)
SKEW_BAND = 0.25
EXCESS_KURTOSIS_BAND = 0.6
SLOPE_BANDS = {"backward": (0.6, 1.4), "genealogy": (1.5, 2.5)}
COST_BANDS = {"backward_update": (3.0, 6.0), "filter_step": (1.5, 3.0)}
LOW_POWER_REL_SE = 0.3


def resolve_threads(threads=None):
    if threads is None:
        threads = os.environ.get("FK_THREADS", "1")
    try:
        threads = int(threads)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"threads must be an integer, got {threads!r}") from exc
    if threads < 1:
        raise ValidationError("threads must be >= 1")
    return threads


@dataclass
class ReplicateStudySpec:
    model_config: dict
    functional: dict = None
    horizons: list = field(default_factory=lambda: [5])
    particles: list = field(default_factory=lambda: [1000])
    replicates: int = 100
    master_seed: int = 0
    estimators: tuple = ("backward",)
    steps: int = 5  # cost study only
    repeats: int = 3  # cost study only
    mode: str = "auto"

    def __post_init__(self):
        if int(self.replicates) < 2:
            raise ValidationError("a replicate study needs R >= 2")
        self.replicates = int(self.replicates)
        self.horizons = [int(n) for n in self.horizons]
        self.particles = [int(N) for N in self.particles]
        if not self.horizons or self.horizons != sorted(self.horizons) or len(set(self.horizons)) != len(self.horizons):
            raise ValidationError("horizons must be a nonempty strictly increasing list")
        if not self.particles or min(self.particles) < 1:
            raise ValidationError("particle counts must be >= 1")
        bad = [e for e in self.estimators if e not in ESTIMATORS]
        if bad:
            raise ValidationError(f"unknown estimators {bad}; choose from {list(ESTIMATORS)}")
        self.estimators = tuple(self.estimators)

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict) or "model" not in d:
            raise ValidationError("study spec must be an object with a 'model' config")
        known = {"model", "functional", "horizons", "particles", "replicates", "seed", "estimators",
                 "steps", "repeats", "mode", "kind"}
        extra = set(d) - known
        if extra:
            raise ValidationError(f"unknown study spec keys {sorted(extra)}")
        return cls(
            model_config=resolve_config(d["model"]),
            functional=d.get("functional"),
            horizons=d.get("horizons", [5]),
            particles=d.get("particles", [1000]),
            replicates=d.get("replicates", 100),
            master_seed=int(d.get("seed", 0)),
            estimators=tuple(d.get("estimators", ["backward"])),
            steps=int(d.get("steps", 5)),
            repeats=int(d.get("repeats", 3)),
            mode=d.get("mode", "auto"),
        )

    def build(self):
        model = model_from_config(self.model_config)
        F = functional_from_config(self.functional, model) if self.functional else default_probe(model)
        return model, F


@dataclass
class VarianceRow:
    estimator: str
    n: int
    N: int
    R: int
    mean: float
    var: float
    n_var: float
    var_se: float
    ratio_to_oracle: float = float("nan")

    @property
    def n_var_se(self):
        return self.N * self.var_se


@dataclass
class VarianceReport:
    kind: str
    rows: list
    bands: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    digests: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(b["passed"] for b in self.bands)

    def row(self, estimator, n, N):
        for r in self.rows:
            if (r.estimator, r.n, r.N) == (estimator, n, N):
                return r
        raise KeyError((estimator, n, N))

    CSV_HEADER = ("estimator", "n", "N", "R", "mean", "var", "n_var", "var_se", "ratio_to_oracle")

    def csv_rows(self):
        return [(r.estimator, r.n, r.N, r.R, r.mean, r.var, r.n_var, r.var_se, r.ratio_to_oracle) for r in self.rows]

    def summary(self):
        return {"kind": self.kind, "passed": self.passed, "bands": self.bands, **self.extra}


def variance_with_se(values):
    """Unbiased sample variance and its fourth-moment standard error."""
    x = np.asarray(values, dtype=float)
    R = x.size
    if R < 2:
        raise ValidationError("need at least 2 replicates for a variance")
    c = x - x.mean()
    m2 = float(np.mean(c * c))
    m4 = float(np.mean(c ** 4))
    var = m2 * R / (R - 1)
    var_of_var = (m4 - (R - 3) / (R - 1) * m2 * m2) / R
    return var, float(np.sqrt(max(var_of_var, 0.0)))


def _band(name, value, lo, hi, se=None):
    ok = bool(np.isfinite(value) and lo <= value <= hi)
    out = {"name": name, "value": float(value), "lo": lo, "hi": hi, "passed": ok}
    if se is not None:
        out["se"] = float(se)
    return out


def _one_replicate(model, F, horizons, N, policy, r, estimators, mode):
    n_max = horizons[-1]
    do_back = "backward" in estimators
    do_gen = "genealogy" in estimators
    method = "both" if do_back and do_gen else ("backward" if do_back else "genealogy")
    run = smoothers.run_smoothers(model, F, n_max, N, policy, r, method=method, mode=mode,
                                  genealogy_horizons=horizons)
    out = {}
    for n in horizons:
        if do_back:
            out[("backward", n)] = float(run.backward[n])
        if do_gen:
            out[("genealogy", n)] = float(run.genealogy[n])
        if "filter" in estimators:
            out[("filter", n)] = float(np.mean(F(n, run.genealogy_record.particles[n])))
    return out, run.ensemble_digest


def run_replicates(spec, threads=None):
    """Raw replicate values ``{(estimator, n, N): array of R}`` plus per-replicate digests."""
    model, F = spec.build()
    model.check_horizon(spec.horizons[-1])
    policy = smc.RngPolicy(spec.master_seed)
    threads = resolve_threads(threads)
    values = {}
    digests = {}
    for N in spec.particles:
        def job(r, N=N):
            return _one_replicate(model, F, spec.horizons, N, policy, r, spec.estimators, spec.mode)

        if threads == 1:
            results = [job(r) for r in range(spec.replicates)]
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(job, range(spec.replicates)))  # map keeps replicate order
        for key in results[0][0]:
            values[(key[0], key[1], N)] = np.array([res[key] for res, _ in results])
        digests[N] = [d for _, d in results]
    return values, digests, model, F


def _rows(values, R):
    rows = []
    for (est, n, N) in sorted(values, key=lambda k: (ESTIMATORS.index(k[0]), k[2], k[1])):
        x = values[(est, n, N)]
        var, se = variance_with_se(x)
        rows.append(VarianceRow(est, n, N, R, float(np.mean(x)), var, N * var, se))
    return rows


def run_clt_study(spec, threads=None):
    """N * Var of the backward smoother against the exact asymptotic variance."""
    if len(spec.horizons) != 1:
        raise ValidationError("the CLT study takes a single horizon")
    values, digests, model, F = run_replicates(spec, threads)
    if not model.is_finite:
        raise ValidationError("the CLT study needs a finite model (exact oracle)")
    n = spec.horizons[0]
    flow = oracle.forward_flow(model, n)
    kern = oracle.backward_kernels(flow, model)
    orc = oracle.asymptotic_variance(flow, kern, F, n)
    rows = _rows(values, spec.replicates)
    bands = []
    moments = {}
    for row in rows:
        sigma2 = orc.sigma2
        row.ratio_to_oracle = row.n_var / sigma2 if sigma2 > 0 else (1.0 if row.n_var == 0 else float("inf"))
        if row.estimator != "backward":
            continue
        tag = f"{row.estimator}_N{row.N}"
        lo, hi = CLT_RATIO_BAND
        bands.append(_band(f"clt_ratio_{tag}", row.ratio_to_oracle, lo, hi, se=row.n_var_se / sigma2 if sigma2 > 0 else 0.0))
        x = values[(row.estimator, n, row.N)]
        if row.var > 0:
            z = np.sqrt(row.N) * (x - orc.smoother_value)
            skew = float(sps.skew(z))
            exkurt = float(sps.kurtosis(z, fisher=True))
            moments[tag] = {"skewness": skew, "kurtosis": exkurt + 3.0,
                            "mean_bias_sqrtN": float(np.mean(z))}
            bands.append(_band(f"skewness_{tag}", skew, -SKEW_BAND, SKEW_BAND))
            bands.append(_band(f"excess_kurtosis_{tag}", exkurt, -EXCESS_KURTOSIS_BAND, EXCESS_KURTOSIS_BAND))
    extra = {"n": n, "oracle": orc.report(), "moments": moments}
    return VarianceReport("clt", rows, bands, extra, {str(k): v for k, v in digests.items()})


def _fit_slope(xs, ys, ses):
    """OLS slope/intercept of ``ys`` on ``xs`` with a propagated slope SE."""
    X = np.column_stack([np.ones(len(xs)), xs])
    pinv = np.linalg.pinv(X)
    coef = pinv @ ys
    slope_se = float(np.sqrt(np.sum((pinv[1] * ses) ** 2)))
    return float(coef[1]), float(coef[0]), slope_se


def growth_summary(rows, estimator, N):
    sel = sorted((r for r in rows if r.estimator == estimator and r.N == N), key=lambda r: r.n)
    ns = np.array([r.n for r in sel], dtype=float)
    nv = np.array([r.n_var for r in sel])
    se = np.array([r.n_var_se for r in sel])
    out = {"estimator": estimator, "N": N, "horizons": ns.astype(int).tolist(), "n_var": nv.tolist(),
           "n_var_se": se.tolist()}
    slope, icpt, slope_se = _fit_slope(ns, nv, se)
    out.update(linear_slope=slope, linear_intercept=icpt, linear_slope_se=slope_se)
    if np.all(nv > 0):
        ls, li, lse = _fit_slope(np.log(ns), np.log(nv), se / nv)
        out.update(loglog_slope=ls, loglog_intercept=li, loglog_slope_se=lse)
    else:
        out.update(loglog_slope=float("nan"), loglog_intercept=float("nan"), loglog_slope_se=float("nan"))
    by_n = {r.n: r for r in sel}
    ratios = []
    for r in sel:
        if 2 * r.n in by_n and r.n_var > 0:
            s = by_n[2 * r.n]
            ratio = s.n_var / r.n_var
            ratio_se = ratio * float(np.hypot(r.var_se / r.var, s.var_se / s.var)) if s.var > 0 else float("nan")
            ratios.append({"n": r.n, "ratio": ratio, "se": ratio_se})
    out["doubling_ratios"] = ratios
    rel = [r.var_se / r.var for r in sel if r.var > 0]
    out["low_power"] = bool(rel and max(rel) > LOW_POWER_REL_SE)
    return out


def run_growth_study(spec, threads=None):
    """Backward and genealogy smoothers on paired ensembles across horizons."""
    if set(spec.estimators) != {"backward", "genealogy"} and not {"backward", "genealogy"} <= set(spec.estimators):
        raise ValidationError("the growth study needs both the backward and the genealogy estimators")
    if len(spec.horizons) < 2:
        raise ValidationError("the growth study needs at least two horizons")
    values, digests, model, F = run_replicates(spec, threads)
    rows = _rows(values, spec.replicates)
    fits = []
    bands = []
    for N in spec.particles:
        per = {est: growth_summary(rows, est, N) for est in ("backward", "genealogy")}
        fits.extend(per.values())
        for est, (lo, hi) in SLOPE_BANDS.items():
            bands.append(_band(f"loglog_slope_{est}_N{N}", per[est]["loglog_slope"], lo, hi,
                               se=per[est]["loglog_slope_se"]))
        back = [r["ratio"] for r in per["backward"]["doubling_ratios"]]
        gen = [r["ratio"] for r in per["genealogy"]["doubling_ratios"]]
        if back and gen:
            gap = min(gen) - max(back)
            bands.append(_band(f"doubling_separation_N{N}", gap, 0.0, float("inf")))
        # per-step sanity bound anchored at the shortest horizon
        b_rows = sorted((r for r in rows if r.estimator == "backward" and r.N == N), key=lambda r: r.n)
        c = 1.5 * b_rows[0].n_var / (b_rows[0].n + 1)
        worst = max((r.n_var - c * (r.n + 1) for r in b_rows[1:]), default=0.0)
        bands.append(_band(f"linear_bound_backward_N{N}", worst, -float("inf"), 0.0))
    extra = {"fits": fits, "low_power": any(f["low_power"] for f in fits)}
    return VarianceReport("growth", rows, bands, extra, {str(k): v for k, v in digests.items()})


@dataclass
class CostRow:
    operation: str
    N: int
    steps: int
    repeats: int
    median_seconds: float
    kernel_evals_per_step: int
    doubling_ratio: float = float("nan")

    CSV_HEADER = ("operation", "N", "steps", "repeats", "median_seconds", "kernel_evals_per_step", "doubling_ratio")

    def csv_row(self):
        return (self.operation, self.N, self.steps, self.repeats, self.median_seconds,
                self.kernel_evals_per_step, self.doubling_ratio)


def time_backward_and_filter(model, F, N, steps, repeats, seed, mode="dense", backend=None):
    """Median wall time of one ``backward_update`` and one filter ``step``."""
    policy = smc.RngPolicy(seed)
    ens = [smc.init(model, N, policy)]
    for _ in range(steps):
        ens.append(smc.step(ens[-1], model, policy))
    stats = [smoothers.init_statistics(ens[0], F)]
    # warm-up: compiles kernels and fills caches
    smoothers.backward_update(stats[0], ens[0], ens[1], model, mode=mode, backend=backend)
    smc.step(ens[0], model, policy)
    for p in range(1, steps + 1):
        stats.append(smoothers.backward_update(stats[-1], ens[p - 1], ens[p], model, mode=mode, backend=backend))
    back_t, filt_t, evals = [], [], set()
    for _ in range(repeats):
        for p in range(1, steps + 1):
            t0 = time.perf_counter()
            s = smoothers.backward_update(stats[p - 1], ens[p - 1], ens[p], model, mode=mode, backend=backend)
            back_t.append(time.perf_counter() - t0)
            evals.add(s.kernel_evals)
            t0 = time.perf_counter()
            smc.step(ens[p - 1], model, policy)
            filt_t.append(time.perf_counter() - t0)
    if len(evals) != 1:
        raise AssertionError(f"kernel evaluation count varied across steps: {sorted(evals)}")
    return statistics.median(back_t), statistics.median(filt_t), evals.pop()


def run_cost_study(spec, backend=None):
    """Per-step timings over the particle counts in ``spec.particles`` (dense kernels)."""
    model, F = spec.build()
    model.check_horizon(spec.steps)
    mode = "dense" if spec.mode == "auto" else spec.mode
    rows = []
    for N in spec.particles:
        tb, tf, evals = time_backward_and_filter(model, F, N, spec.steps, spec.repeats, spec.master_seed, mode, backend)
        rows.append(CostRow("backward_update", N, spec.steps, spec.repeats, tb, evals))
        rows.append(CostRow("filter_step", N, spec.steps, spec.repeats, tf, 0))
    bands = []
    for op in ("backward_update", "filter_step"):
        seq = [r for r in rows if r.operation == op]
        for prev, cur in zip(seq, seq[1:]):
            if cur.N == 2 * prev.N:
                cur.doubling_ratio = cur.median_seconds / prev.median_seconds
                lo, hi = COST_BANDS[op]
                bands.append(_band(f"doubling_{op}_N{cur.N}", cur.doubling_ratio, lo, hi))
    for r in rows:
        if r.operation == "backward_update":
            bands.append(_band(f"kernel_evals_N{r.N}", r.kernel_evals_per_step - r.N * r.N, 0, 0))
    return CostReport(rows, bands)


@dataclass
class CostReport:
    rows: list
    bands: list
    kind: str = "cost"

    @property
    def passed(self):
        return all(b["passed"] for b in self.bands)

    CSV_HEADER = CostRow.CSV_HEADER

    def csv_rows(self):
        return [r.csv_row() for r in self.rows]

    def summary(self):
        return {"kind": self.kind, "passed": self.passed, "bands": self.bands}
