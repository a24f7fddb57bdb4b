"""Linear value-function approximation over 15-minute periods.

The value of a post-decision state is approximated per period as a linear
function of five route features:

  f1  free time budget: shift end minus the latest expected depot return
      across vehicles (idle vehicles count as returning now),
  f2  flexibility: mean deadline slack of unserved routed customers
      (shift end minus now when none are routed),
  f3  product of on-time probabilities of unserved routed customers,
  f4  conservative free time budget: like f1 with returns padded by two
      standard deviations,
  f5  mean planned leg distance per routed customer (0 when none).

Training observes completed episodes of the opportunity-cost pricing policy:
at every decision epoch the adopted plan's features are recorded together
with the revenue settled strictly after that epoch, and coefficients are
refit by ridge-regularized least squares (intercept included in the penalty)
per period over all observations collected so far, after every batch of
episodes.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .core import PLANNING_PERIODS, PERIOD_MINUTES, InstanceConfig
from .routing import InsertionCandidate, VehicleStats

N_FEATURES = 5
_VFA_SCHEMA = "sddlab vfa v1"


def fleet_features(
    stats: list[VehicleStats], now: float, shift_end: float
) -> tuple[float, float, float, float, float]:
    """Feature vector of a plan from its per-vehicle aggregates."""
    worst_mean = stats[0].final_mean
    worst_dev = stats[0].final_mean + 2.0 * math.sqrt(stats[0].final_var)
    slack_sum = 0.0
    slack_cnt = 0
    pon_prod = 1.0
    dist_sum = 0.0
    n_cust = 0
    for s in stats:
        if s.final_mean > worst_mean:
            worst_mean = s.final_mean
        dev = s.final_mean + 2.0 * math.sqrt(s.final_var)
        if dev > worst_dev:
            worst_dev = dev
        slack_sum += s.slack_sum
        slack_cnt += s.slack_cnt
        pon_prod *= s.pon_prod
        dist_sum += s.dist_sum
        n_cust += s.n_cust
    f1 = shift_end - worst_mean
    f2 = slack_sum / slack_cnt if slack_cnt else shift_end - now
    f3 = pon_prod
    f4 = shift_end - worst_dev
    f5 = dist_sum / n_cust if n_cust else 0.0
    return (f1, f2, f3, f4, f5)


def candidate_stats(
    base_stats: list[VehicleStats], cand: InsertionCandidate
) -> list[VehicleStats]:
    """Fleet aggregates if the candidate insertion were adopted."""
    out = list(base_stats)
    out[cand.vehicle] = cand.stats
    return out


@dataclass
class ValueModel:
    """Per-period linear value of post-decision state features.

    coef has one row per period: (bias, w1..w5). Values clamp at zero from
    below; times at or past the shift end fall into the last period.
    """

    coef: np.ndarray
    period_minutes: float = PERIOD_MINUTES

    @classmethod
    def zero(cls, n_periods: int = PLANNING_PERIODS) -> "ValueModel":
        return cls(coef=np.zeros((n_periods, 1 + N_FEATURES), dtype=np.float64))

    def period_index(self, t: float) -> int:
        if t < 0:
            raise ValueError(f"negative time has no period: {t}")
        p = int(t // self.period_minutes)
        n = self.coef.shape[0]
        return p if p < n else n - 1

    def value(self, t: float, features) -> float:
        row = self.coef[self.period_index(t)]
        v = float(row[0])
        for i in range(N_FEATURES):
            v += float(row[1 + i]) * features[i]
        return v if v > 0.0 else 0.0

    def to_json_dict(self, meta: dict | None = None) -> dict:
        d = {
            "schema": _VFA_SCHEMA,
            "period_minutes": self.period_minutes,
            "coef": [[float(c) for c in row] for row in self.coef],
        }
        if meta:
            d["meta"] = meta
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "ValueModel":
        if d.get("schema") != _VFA_SCHEMA:
            raise ValueError(f"unsupported value model schema: {d.get('schema')!r}")
        coef = np.array(d["coef"], dtype=np.float64)
        if coef.ndim != 2 or coef.shape[1] != 1 + N_FEATURES:
            raise ValueError("malformed coefficient table")
        return cls(coef=coef, period_minutes=float(d["period_minutes"]))

    def save(self, path, meta: dict | None = None) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(meta), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "ValueModel":
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


def opportunity_costs(
    model: ValueModel,
    now: float,
    shift_end: float,
    base_stats: list[VehicleStats],
    cands: dict[float, InsertionCandidate],
) -> dict[float, float]:
    """Value lost by committing to each candidate, floored at zero."""
    v0 = model.value(now, fleet_features(base_stats, now, shift_end))
    out = {}
    for delta, cand in cands.items():
        vj = model.value(
            now, fleet_features(candidate_stats(base_stats, cand), now, shift_end)
        )
        o = v0 - vj
        out[delta] = o if o > 0.0 else 0.0
    return out


@dataclass(frozen=True)
class Observation:
    """One training sample: period, plan features, revenue settled later."""

    period: int
    features: tuple[float, float, float, float, float]
    reward_togo: float


def refit(
    model: ValueModel, observations: list[Observation], ridge_lam: float = 1e-3
) -> ValueModel:
    """Ridge least squares per period over all given observations.

    Periods with no observations keep their previous coefficients.
    """
    n_periods = model.coef.shape[0]
    by_period: dict[int, list[Observation]] = {}
    for obs in observations:
        by_period.setdefault(obs.period, []).append(obs)
    coef = model.coef.copy()
    eye = np.eye(1 + N_FEATURES)
    for p, group in by_period.items():
        if not 0 <= p < n_periods:
            raise ValueError(f"observation period {p} outside the model table")
        x = np.ones((len(group), 1 + N_FEATURES), dtype=np.float64)
        y = np.empty(len(group), dtype=np.float64)
        for i, obs in enumerate(group):
            x[i, 1:] = obs.features
            y[i] = obs.reward_togo
        coef[p] = np.linalg.solve(x.T @ x + ridge_lam * eye, x.T @ y)
    return ValueModel(coef=coef, period_minutes=model.period_minutes)


def train(
    inst: InstanceConfig,
    customers: str,
    assumption: str,
    episodes: int,
    seed: int,
    batch_size: int = 50,
    ridge_lam: float = 1e-3,
    params=None,
    progress=None,
):
    """Fit a value model by repeated simulation under the optimizing policy.

    Starts from the zero model, simulates episodes with quote optimization
    using the current model, collects (period, features, reward-to-go)
    observations at every decision epoch, and refits after every batch
    (and once more at the end for a partial final batch).

    Returns (model, curve) where curve rows are (episode, profit,
    running average over the trailing 100 episodes).
    """
    from .engine import episode_seed_seq, run_episode
    from .pricing import PolicyParams

    if params is None:
        params = PolicyParams()
    model = ValueModel.zero()
    observations: list[Observation] = []
    curve: list[tuple[int, float, float]] = []
    window: deque[float] = deque(maxlen=100)
    for e in range(episodes):
        res = run_episode(
            inst,
            "opt",
            params,
            assumption,
            customers,
            episode_seed_seq(seed, e),
            value_model=model,
            collect_observations=True,
        )
        observations.extend(res.observations)
        profit = res.metrics.revenue
        window.append(profit)
        running = sum(window) / len(window)
        curve.append((e, profit, running))
        if (e + 1) % batch_size == 0:
            model = refit(model, observations, ridge_lam)
            if progress is not None:
                progress(e + 1, running)
    if episodes % batch_size != 0:
        model = refit(model, observations, ridge_lam)
    return model, curve
