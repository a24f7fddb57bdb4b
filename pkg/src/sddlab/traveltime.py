"""Inverse-speed models: sampling, realized speed fields, on-time probability.

Travel times are distances (km) times inverse speeds (min/km). Planning works
with an assumed distribution family (deterministic, gaussian, or a gaussian
mixture); settlement draws realized inverse speeds from the true family, one
per (quadrant, 15-minute period) cell, truncated to the instance's bounds by
rejection. Planning probabilities deliberately ignore the truncation: route
evaluation uses the closed normal/mixture forms, with a fixed-seed
common-random-number Monte Carlo fallback when the exact mixture enumeration
would exceed its term cap.
"""

from __future__ import annotations

import math

import numpy as np

from . import _kernels
from .core import FIELD_PERIODS, InstanceConfig, SpeedModelSpec, period_of

_KIND_CODE = {"deterministic": 0, "gaussian": 1, "mixture": 2}

MC_SAMPLES = 2000
MC_LEGS = 128
# Fixed seed for the planning-side Monte Carlo tables: probabilities must be
# deterministic and common across candidates, policies, and episodes.
_MC_SEED = 20240915

_MC_BASE = None
_MODEL_CACHE: dict[tuple, "KernelModel"] = {}


def _mc_base():
    global _MC_BASE
    if _MC_BASE is None:
        rng = np.random.default_rng(_MC_SEED)
        z = rng.standard_normal((MC_SAMPLES, MC_LEGS))
        u = rng.random((MC_SAMPLES, MC_LEGS))
        _MC_BASE = (z, u)
    return _MC_BASE


class KernelModel:
    """Kernel-ready encoding of a SpeedModelSpec.

    Holds the scalar moments plus per-component arrays, and for mixtures the
    shared Monte Carlo inverse-speed table (untruncated draws, matching the
    untruncated closed forms used everywhere in planning).
    """

    __slots__ = ("spec", "kind", "mu", "var", "weights", "means", "stds", "mc")

    def __init__(self, spec: SpeedModelSpec):
        self.spec = spec
        self.kind = _KIND_CODE[spec.kind]
        self.mu = spec.mean
        std = spec.std
        self.var = std * std
        self.weights = np.array([w for w, _, _ in spec.components], dtype=np.float64)
        self.means = np.array([m for _, m, _ in spec.components], dtype=np.float64)
        self.stds = np.array([s for _, _, s in spec.components], dtype=np.float64)
        if self.kind == 2:
            z, u = _mc_base()
            edges = np.cumsum(self.weights)
            comp = np.searchsorted(edges, u, side="right")
            comp[comp >= len(self.weights)] = len(self.weights) - 1
            self.mc = np.ascontiguousarray(
                self.means[comp] + self.stds[comp] * z, dtype=np.float64
            )
        else:
            self.mc = np.empty((0, 0), dtype=np.float64)


def kernel_model(spec: SpeedModelSpec) -> KernelModel:
    key = (spec.kind, spec.components)
    model = _MODEL_CACHE.get(key)
    if model is None:
        model = KernelModel(spec)
        _MODEL_CACHE[key] = model
    return model


def model_moments(spec: SpeedModelSpec) -> tuple[float, float]:
    """Closed-form (mean, std) of the untruncated inverse speed, min/km."""
    return spec.mean, spec.std


def sample_inverse_speed(
    spec: SpeedModelSpec,
    bounds: tuple[float, float],
    rng: np.random.Generator,
    max_attempts: int = 1_000_000,
) -> float:
    """One truncated draw by rejection; raises after max_attempts misses."""
    lo, hi = bounds
    if spec.kind == "deterministic":
        v = spec.components[0][1]
        if not (lo <= v <= hi):
            raise RuntimeError("deterministic inverse speed outside bounds")
        return v
    weights = [w for w, _, _ in spec.components]
    edges = []
    acc = 0.0
    for w in weights:
        acc += w
        edges.append(acc)
    for _ in range(max_attempts):
        if len(weights) == 1:
            c = 0
        else:
            u = rng.random()
            c = 0
            while c < len(edges) - 1 and u > edges[c]:
                c += 1
        _, m, s = spec.components[c]
        v = rng.normal(m, s)
        if lo <= v <= hi:
            return v
    raise RuntimeError("rejection sampling failed to land within bounds")


class SpeedField:
    """Realized inverse speeds per (quadrant, 15-minute period).

    Covers the shift plus overtime periods; lookups past the last period
    clamp to it (very late returns keep the final period's speed).
    """

    __slots__ = ("values",)

    def __init__(self, values: np.ndarray):
        assert values.shape == (4, FIELD_PERIODS)
        self.values = values

    def at(self, quadrant: int, t: float) -> float:
        p = period_of(t)
        if p >= FIELD_PERIODS:
            p = FIELD_PERIODS - 1
        return float(self.values[quadrant, p])


def realize_speed_field(
    spec: SpeedModelSpec,
    bounds: tuple[float, float],
    rng: np.random.Generator,
) -> SpeedField:
    """Draw one truncated inverse speed per (quadrant, period) cell.

    Draw order is quadrant-major then period, so a given rng state always
    produces the same field.
    """
    values = np.empty((4, FIELD_PERIODS), dtype=np.float64)
    for q in range(4):
        for p in range(FIELD_PERIODS):
            values[q, p] = sample_inverse_speed(spec, bounds, rng)
    return SpeedField(values)


def leg_time_stats(dist_km: float, spec: SpeedModelSpec) -> tuple[float, float]:
    """(mean, variance) of one leg's travel time in minutes."""
    if dist_km < 0:
        raise ValueError("negative distance")
    mu, std = model_moments(spec)
    return dist_km * mu, dist_km * dist_km * std * std


def on_time_probability(budget_min: float, dists_km, spec: SpeedModelSpec) -> float:
    """P(sum of leg travel times <= budget) under the assumed model.

    The caller is responsible for having subtracted service times from the
    budget. Negative budgets yield 0.0. Deterministic models use the strict
    indicator (boundary counts late).
    """
    m = kernel_model(spec)
    d = np.ascontiguousarray(dists_km, dtype=np.float64)
    if d.ndim != 1:
        raise ValueError("dists_km must be one-dimensional")
    if np.any(d < 0):
        raise ValueError("negative distance")
    return float(
        _kernels.ontime_probability(
            float(budget_min), d, m.kind, m.mu, m.var, m.weights, m.means, m.stds, m.mc
        )
    )


def deterministic_on_time(budget_min: float, dists_km, spec: SpeedModelSpec) -> bool:
    """Strict indicator: total distance times mean inverse speed < budget."""
    mu, _ = model_moments(spec)
    total = 0.0
    for d in dists_km:
        if d < 0:
            raise ValueError("negative distance")
        total += float(d)
    return total * mu < budget_min


def assumed_spec(inst: InstanceConfig, assumption: str) -> SpeedModelSpec:
    """Planning model under an experimental arm.

    deterministic: constant mean inverse speed of the true model;
    stochastic: the true family itself;
    misspecified: the catalog family that is not the true one.
    """
    if assumption == "deterministic":
        return inst.speed_model("deterministic")
    if assumption == "stochastic":
        return inst.speed_model(inst.true_speed_model)
    if assumption == "misspecified":
        others = [
            n
            for n in inst.speed_models
            if n not in ("deterministic", inst.true_speed_model)
        ]
        if len(others) != 1:
            raise ValueError(
                f"misspecified arm needs exactly one alternative family, have {others}"
            )
        return inst.speed_model(others[0])
    raise ValueError(f"unknown assumption {assumption!r}")


def true_spec(inst: InstanceConfig) -> SpeedModelSpec:
    return inst.speed_model(inst.true_speed_model)
