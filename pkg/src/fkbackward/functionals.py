"""Additive path functionals ``F_n(x_{0:n}) = sum_p f_p(x_p)`` and the probe registry."""
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class AdditiveFunctional:
    """``term(p, x)`` evaluates ``f_p`` on an array of states."""

    term: Callable[[int, np.ndarray], np.ndarray]
    alpha: float = 0.1  # exponent of v^alpha, used only for norm reporting
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __call__(self, p, x):
        return np.asarray(self.term(p, x), dtype=float)

    def on_path(self, paths):
        """Evaluate ``F`` on paths given as ``(K, n+1, ...)`` state arrays."""
        paths = np.asarray(paths)
        return sum(self(p, paths[:, p]) for p in range(paths.shape[1]))

    def table(self, n_states, n):
        """``(n+1, S)`` array of ``f_p(s)`` for a finite model."""
        states = np.arange(n_states)
        return np.stack([self(p, states) for p in range(n + 1)])

    def scaled(self, s):
        return AdditiveFunctional(lambda p, x: s * self.term(p, x), self.alpha, f"{s}*{self.name}")

    def shifted(self, c):
        """Add the constant ``c`` to ``F_n`` (absorbed into ``f_0``)."""
        return AdditiveFunctional(
            lambda p, x: self.term(p, x) + (c if p == 0 else 0.0), self.alpha, f"{self.name}+{c}"
        )

    def __add__(self, other):
        return AdditiveFunctional(
            lambda p, x: self.term(p, x) + other.term(p, x), self.alpha, f"{self.name}+{other.name}"
        )

    def sup_norm_report(self, V, grid, horizon):
        """Grid estimate of ``sup_p sup_x |f_p(x)| / v(x)^alpha`` with ``v = exp(V)``."""
        grid = np.asarray(grid)
        log_v_alpha = self.alpha * np.asarray(V(grid), dtype=float)
        best = 0.0
        for p in range(horizon + 1):
            vals = np.abs(self(p, grid))
            with np.errstate(divide="ignore"):
                best = max(best, float(np.max(np.exp(np.log(vals) - log_v_alpha))))
        return best


def constant(c=1.0):
    c = float(c)
    return AdditiveFunctional(lambda p, x: np.full(np.shape(x)[:1], c), name="constant", params={"c": c})


def coordinate(k=0, center=0.0, labels=None):
    """``f_p(x) = x^k - center``; on finite models the state label is used."""
    k, center = int(k), float(center)
    if labels is not None:
        lab = np.asarray(labels, dtype=float)
        return AdditiveFunctional(lambda p, x: lab[np.asarray(x, dtype=np.int64)] - center,
                                  name="coordinate", params={"k": k, "center": center})
    return AdditiveFunctional(lambda p, x: np.asarray(x, dtype=float)[..., k] - center,
                              name="coordinate", params={"k": k, "center": center})


def indicator(state, center=0.0):
    state, center = int(state), float(center)
    return AdditiveFunctional(lambda p, x: (np.asarray(x) == state).astype(float) - center,
                              name="indicator", params={"state": state, "center": center})


def tanh(k=0, scale=1.0):
    k, scale = int(k), float(scale)
    return AdditiveFunctional(lambda p, x: np.tanh(scale * np.asarray(x, dtype=float)[..., k]),
                              name="tanh", params={"k": k, "scale": scale})


def grid_table(values, grid=None, k=0):
    """Tabulated ``f``.

    Finite models: ``values`` has one entry per state, or a ``(T, S)`` table
    for time-dependent terms. Continuous models: ``values`` on the sorted
    ``grid`` of coordinate ``k``, linearly interpolated and held constant
    outside the grid.
    """
    values = np.asarray(values, dtype=float)
    if grid is None:
        if values.ndim == 1:
            return AdditiveFunctional(lambda p, x: values[np.asarray(x, dtype=np.int64)],
                                      name="grid_table", params={"values": values.tolist()})

        def term(p, x):
            if p >= values.shape[0]:
                raise ValidationError(f"grid_table has no row for time p={p}")
            return values[p][np.asarray(x, dtype=np.int64)]

        return AdditiveFunctional(term, name="grid_table", params={"values": values.tolist()})
    grid = np.asarray(grid, dtype=float)
    if grid.shape != values.shape or np.any(np.diff(grid) <= 0):
        raise ValidationError("grid_table: grid must be increasing and match values")
    return AdditiveFunctional(lambda p, x: np.interp(np.asarray(x, dtype=float)[..., k], grid, values),
                              name="grid_table", params={"grid": grid.tolist(), "values": values.tolist(), "k": k})


def functional_from_config(spec, model=None):
    """Build a probe from ``{"type": "coordinate"|"indicator"|"tanh"|"grid_table"|"constant", ...}``."""
    if not isinstance(spec, dict) or "type" not in spec:
        raise ValidationError("functional config must be an object with a 'type' key")
    kind = spec["type"]
    alpha = float(spec.get("alpha", 0.1))
    if not 0.0 < alpha <= 1.0 / 6.0:
        raise ValidationError(f"alpha must lie in (0, 1/6], got {alpha}")
    if kind == "constant":
        f = constant(spec.get("c", 1.0))
    elif kind == "coordinate":
        labels = model.states.labels if model is not None and model.is_finite else None
        f = coordinate(spec.get("k", 0), spec.get("center", 0.0), labels=labels)
    elif kind == "indicator":
        if "state" not in spec:
            raise ValidationError("indicator functional needs 'state'")
        f = indicator(spec["state"], spec.get("center", 0.0))
    elif kind == "tanh":
        f = tanh(spec.get("k", 0), spec.get("scale", 1.0))
    elif kind == "grid_table":
        if "values" not in spec:
            raise ValidationError("grid_table functional needs 'values'")
        f = grid_table(spec["values"], spec.get("grid"), spec.get("k", 0))
    else:
        raise ValidationError(f"unknown functional type {kind!r}")
    return AdditiveFunctional(f.term, alpha, f.name, dict(f.params, alpha=alpha))


def default_probe(model):
    """Centered indicator of state 1 (finite) or centered first coordinate."""
    if model.is_finite:
        return indicator(1 if model.states.size > 1 else 0, center=0.5)
    return coordinate(0, 0.0)
