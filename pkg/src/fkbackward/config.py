"""JSON model configs, synthetic data, and the numeric I/O conventions.

Config shape::

    {"model": "gaussian_rw" | "bernoulli" | "finite" | "linear_gaussian",
     ...parameters...,
     "observations": [...] | {"simulate": {"n": int, "seed": int}}}

Matrices are row-major nested lists. Floats are written with 17 significant
digits so that every value round-trips exactly.
"""
import copy
import json

import numpy as np

from .errors import ValidationError
from .models import (
    h_obs_from_config,
    make_bernoulli_hmm,
    make_finite_hmm,
    make_gaussian_rw_hmm,
    make_linear_gaussian_hmm,
)

MODEL_KINDS = ("gaussian_rw", "bernoulli", "finite", "linear_gaussian")


def fmt_float(x):
    return format(float(x), ".17g")


def _require(cfg, *keys):
    missing = [k for k in keys if k not in cfg]
    if missing:
        raise ValidationError(f"config for model {cfg.get('model')!r} is missing {missing}")


def _build(cfg, observations):
    kind = cfg["model"]
    if kind == "gaussian_rw":
        _require(cfg, "d_x", "delta0", "sigma_y2")
        return make_gaussian_rw_hmm(
            cfg["d_x"], float(cfg["delta0"]), float(cfg["sigma_y2"]),
            h_obs_from_config(cfg.get("h_obs")), observations,
            delta=float(cfg.get("delta", 0.5)),
            walk_coef=float(cfg.get("walk_coef", 1.0)),
            walk_var=float(cfg.get("walk_var", 1.0)),
            init_var=float(cfg.get("init_var", 1.0)),
            config=cfg,
        )
    if kind == "bernoulli":
        _require(cfg, "d_x")
        return make_bernoulli_hmm(
            cfg["d_x"], observations, delta0=float(cfg.get("delta0", 1.05)),
            delta=float(cfg.get("delta", 0.5)), config=cfg,
        )
    if kind == "linear_gaussian":
        _require(cfg, "a", "sigma_x2", "c", "sigma_y2")
        return make_linear_gaussian_hmm(
            float(cfg["a"]), float(cfg["sigma_x2"]), float(cfg["c"]), float(cfg["sigma_y2"]),
            observations, m0=float(cfg.get("m0", 0.0)), P0=float(cfg.get("P0", 1.0)), config=cfg,
        )
    if kind == "finite":
        _require(cfg, "initial", "transition")
        initial = np.asarray(cfg["initial"], dtype=float)
        S = int(cfg.get("S", initial.shape[0]))
        if "potentials" in cfg:
            table = np.asarray(cfg["potentials"], dtype=float)
        elif "emission" in cfg:
            emission = np.asarray(cfg["emission"], dtype=float)
            if emission.ndim != 2 or emission.shape[0] != S:
                raise ValidationError(f"emission must be an S x K matrix with S={S}")
            if observations is None or len(observations) == 0:
                raise ValidationError("finite: observations must be nonempty")
            obs = np.asarray(observations)
            if obs.ndim != 1 or not np.all(obs == np.round(obs)) or obs.min() < 0 or obs.max() >= emission.shape[1]:
                raise ValidationError(f"finite: observations must be integers in [0, {emission.shape[1]})")
            table = emission[:, obs.astype(np.int64)].T.copy()
        else:
            raise ValidationError("finite model needs 'potentials' (T x S) or 'emission' + 'observations'")
        return make_finite_hmm(
            S, initial, np.asarray(cfg["transition"], dtype=float), table,
            V=cfg.get("V"), delta=float(cfg.get("delta", 0.5)), config=cfg,
        )
    raise ValidationError(f"unknown model kind {kind!r}; choose from {list(MODEL_KINDS)}")


def _signal_model(cfg):
    """Model with placeholder observations, used only for its signal samplers."""
    kind = cfg["model"]
    stub = dict(cfg)
    if kind == "gaussian_rw":
        d_y = np.asarray(h_obs_from_config(cfg.get("h_obs"))(np.zeros((1, int(cfg["d_x"]))))).shape[-1]
        return _build(stub, np.zeros((1, d_y)))
    if kind == "bernoulli":
        return _build(stub, np.zeros((1, int(cfg["d_x"]))))
    if kind == "linear_gaussian":
        return _build(stub, [0.0])
    if kind == "finite":
        if "emission" not in cfg:
            raise ValidationError("simulating a finite model requires an 'emission' matrix")
        stub.pop("potentials", None)
        return _build(stub, [0])
    raise ValidationError(f"unknown model kind {kind!r}")


def simulate_data(cfg, n, seed):
    """Draw ``(states x_0..x_{n-1}, observations y_0..y_{n-1})`` from the model."""
    if n < 1:
        raise ValidationError("simulate: n must be >= 1")
    cfg = {k: v for k, v in cfg.items() if k != "observations"}
    _require(cfg, "model")
    model = _signal_model(cfg)
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    xs = [model.initial_sampler(rng, 1)[0]]
    for p in range(1, n):
        xs.append(model.transition_sampler(p, xs[-1][None, ...], rng)[0])
    xs = np.asarray(xs)
    kind = cfg["model"]
    if kind == "gaussian_rw":
        hx = np.asarray(model.H_obs(xs.reshape(n, -1)), dtype=float)
        ys = hx + np.sqrt(float(cfg["sigma_y2"])) * rng.standard_normal(hx.shape)
    elif kind == "bernoulli":
        prob = 1.0 / (1.0 + np.exp(-xs))
        ys = (rng.random(xs.shape) < prob).astype(float)
    elif kind == "linear_gaussian":
        ys = float(cfg["c"]) * xs[:, 0] + np.sqrt(float(cfg["sigma_y2"])) * rng.standard_normal(n)
    else:
        emission = np.asarray(cfg["emission"], dtype=float)
        cdf = np.cumsum(emission, axis=1)
        u = rng.random(n)
        ys = np.array([min(int(np.searchsorted(cdf[s], u[i] * cdf[s, -1], side="right")), emission.shape[1] - 1)
                       for i, s in enumerate(xs)])
    return xs, ys


def resolve_config(cfg):
    """Return a copy of ``cfg`` with simulated observations materialised."""
    if not isinstance(cfg, dict) or "model" not in cfg:
        raise ValidationError("model config must be a JSON object with a 'model' key")
    cfg = copy.deepcopy(cfg)
    obs = cfg.get("observations")
    if isinstance(obs, dict):
        if "simulate" not in obs:
            raise ValidationError("observations object must be {'simulate': {'n': int, 'seed': int}}")
        sim = obs["simulate"]
        _, ys = simulate_data(cfg, int(sim["n"]), int(sim["seed"]))
        cfg["observations"] = ys.tolist()
        cfg["simulated_from"] = sim
    return cfg


def model_from_config(cfg):
    cfg = resolve_config(cfg)
    return _build(cfg, cfg.get("observations"))


def load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ValidationError(f"file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"invalid JSON in {path}: {exc}") from exc


def _exact(obj):
    if isinstance(obj, dict):
        return {k: _exact(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_exact(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _exact(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def dumps(obj):
    """JSON text; Python's float repr is the shortest exact round-trip form."""
    return json.dumps(_exact(obj), indent=2, sort_keys=True, allow_nan=True) + "\n"


def write_json(path, obj):
    text = dumps(obj)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return text


def write_csv(path, header, rows):
    """CSV with LF endings and floats in ``%.17g``."""
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, (float, np.floating)):
                cells.append(fmt_float(v))
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    text = "\n".join(lines) + "\n"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return text
