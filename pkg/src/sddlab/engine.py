"""Episode simulation.

One episode: a Poisson stream of requests arrives over the order horizon;
at each request the fleet state is advanced to the request time against the
realized speed field, feasible insertions are searched under the assumed
travel-time model, the policy quotes prices, the customer chooses, and an
accepted option is inserted into the plan at the agreed price. After the
last request the fleet runs to completion and every accepted customer
settles as served (on time) or missed.

Planning never reads the realized speed field and settlement never reads the
assumed model; the interfaces keep them apart.

Randomness: an episode is driven by one numpy SeedSequence, split into three
independent child streams (requests, speed field, choice noise). Use
episode_seed_seq(master, index) for episode streams that depend only on the
master seed and the episode index, so runs with different policies or
assumptions are paired (common random numbers).
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from .choice import NEXT_DAY, ChoiceModel, sample_choice
from .core import (
    PLANNING_PERIODS,
    SENTINEL_PRICE,
    Customer,
    InstanceConfig,
    RoutePlan,
    RunMetrics,
    period_of,
)
from .pricing import PolicyParams, quote
from .routing import adopt, advance_routes, feasible_insertions, plan_views
from .traveltime import assumed_spec, kernel_model, realize_speed_field, true_spec
from .vfa import Observation, candidate_stats, fleet_features, opportunity_costs

VALUE_POLICIES = ("opp", "opt", "opt-basis")


def episode_seed_seq(master_seed: int, index: int) -> np.random.SeedSequence:
    """Seed for one episode, a pure function of (master seed, index)."""
    return np.random.SeedSequence(entropy=master_seed, spawn_key=(index,))


def generate_customers(
    inst: InstanceConfig, model_name: str, rng: np.random.Generator
) -> list[Customer]:
    """One realized request stream, ids in arrival-time order.

    The count is Poisson with the instance's expected order volume; arrival
    times are uniform over the order horizon (sorted); locations follow the
    named spatial model, resampled until inside the service square.
    """
    spec = inst.customer_model(model_name)
    half = inst.square_half_km
    n = int(rng.poisson(inst.expected_orders))
    times = np.sort(rng.uniform(0.0, inst.last_order_minute, size=n))
    out = []
    for i in range(n):
        if spec.kind == "uniform":
            xy = rng.uniform(-half, half, size=2)
        elif spec.kind == "gaussian":
            std = spec.params["std_km"]
            while True:
                xy = rng.normal(0.0, std, size=2)
                if abs(xy[0]) <= half and abs(xy[1]) <= half:
                    break
        elif spec.kind == "clusters":
            centers = spec.params["centers"]
            std = spec.params["std_km"]
            while True:
                c = centers[int(rng.integers(len(centers)))]
                xy = rng.normal(0.0, std, size=2)
                xy = (c[0] + xy[0], c[1] + xy[1])
                if abs(xy[0]) <= half and abs(xy[1]) <= half:
                    break
        else:
            raise ValueError(f"unknown customer model kind {spec.kind!r}")
        out.append(
            Customer(customer_id=i, t_request=float(times[i]), x=float(xy[0]), y=float(xy[1]))
        )
    return out


@dataclass
class EpisodeResult:
    metrics: RunMetrics
    observations: list[Observation] | None
    records: dict[int, dict]


def run_episode(
    inst: InstanceConfig,
    policy: str,
    params: PolicyParams,
    assumption: str,
    customers_model: str,
    seed_seq: np.random.SeedSequence,
    value_model=None,
    collect_observations: bool = False,
    choice_model: ChoiceModel | None = None,
    on_event=None,
) -> EpisodeResult:
    """Simulate one full episode and settle everything.

    records maps customer id to its lifecycle dict (status, option, price,
    settlement); observations (when collected) hold post-decision features
    and the revenue settled strictly after each epoch.
    """
    if choice_model is None:
        choice_model = ChoiceModel()
    needs_value = policy in VALUE_POLICIES
    if needs_value and value_model is None:
        raise ValueError(f"policy {policy!r} needs a trained value model")

    cust_ss, field_ss, choice_ss = seed_seq.spawn(3)
    customers = generate_customers(
        inst, customers_model, np.random.default_rng(cust_ss)
    )
    field = realize_speed_field(
        true_spec(inst), inst.inverse_speed_bounds, np.random.default_rng(field_ss)
    )
    choice_rng = np.random.default_rng(choice_ss)
    model = kernel_model(assumed_spec(inst, assumption))

    plan = RoutePlan.initial(inst.n_vehicles, inst.depot_xy)
    metrics = RunMetrics()
    settlements: list[tuple[float, float]] = []
    records: dict[int, dict] = {}
    obs_raw: list[tuple[float, tuple]] = []
    w_prices = params.search_prices(inst.deadline_options)

    def on_settle(vi, stop, arr, on_time, amount):
        settlements.append((arr, amount))
        rec = records[stop.customer_id]
        rec["status"] = "served" if on_time else "missed"
        rec["settle_t"] = arr
        rec["amount"] = amount
        if on_time:
            metrics.served += 1
        else:
            metrics.missed += 1

    for cust in customers:
        t_k = cust.t_request
        advance_routes(plan, t_k, field, inst, on_settle, on_event)
        views = plan_views(plan, t_k, inst, model)
        cands = feasible_insertions(views, cust, t_k, inst, model, w_prices)
        metrics.total_requests += 1
        rec = {"status": "pending", "t_request": t_k, "option": None,
               "price": None, "amount": 0.0, "settle_t": None,
               "x": cust.x, "y": cust.y}
        records[cust.customer_id] = rec
        if on_event is not None:
            on_event("request", {
                "customer": cust.customer_id, "t": t_k, "x": cust.x, "y": cust.y,
            })

        opps = None
        if needs_value and cands:
            base_stats = [v.base for v in views]
            opps = opportunity_costs(
                value_model, t_k, inst.shift_minutes, base_stats, cands
            )

        if cands:
            pq = quote(policy, params, inst, cust, cands, opps, choice_model)
            prices = pq.prices
        else:
            pq = None
            prices = {d: SENTINEL_PRICE for d in inst.deadline_options}
        # the sampler always runs so random streams stay aligned across
        # policies; with every option at the sentinel price the opt-out is
        # numerically certain
        chosen = sample_choice(choice_model, prices, choice_rng)

        if on_event is not None and pq is not None:
            on_event("quote", {
                "customer": cust.customer_id, "t": t_k,
                "prices": {str(int(d)): prices[d] for d in inst.deadline_options},
                "pon": {str(int(d)): pq.pon[d] for d in pq.pon},
                "opp": {str(int(d)): pq.opp[d] for d in pq.opp},
            })

        if pq is None:
            metrics.rejected += 1
            rec["status"] = "rejected"
            adopted = [v.base for v in views]
        elif chosen == NEXT_DAY:
            metrics.declined += 1
            rec["status"] = "declined"
            adopted = [v.base for v in views]
        else:
            metrics.accepted += 1
            cand = cands[chosen]
            price = prices[chosen]
            adopt(plan, cand, cust, price, t_k, inst)
            rec["status"] = "accepted"
            rec["option"] = chosen
            rec["price"] = price
            adopted = candidate_stats([v.base for v in views], cand)

        if on_event is not None:
            on_event("choice", {
                "customer": cust.customer_id, "t": t_k,
                "option": "next_day" if chosen == NEXT_DAY else str(int(chosen)),
            })
        if collect_observations:
            obs_raw.append(
                (t_k, fleet_features(adopted, t_k, inst.shift_minutes))
            )

    advance_routes(plan, math.inf, field, inst, on_settle, on_event)

    # canonical revenue accumulation: customer-id order
    revenue = 0.0
    for cid in sorted(records):
        revenue += records[cid]["amount"]
    metrics.revenue = revenue

    assert metrics.accepted == metrics.served + metrics.missed
    assert metrics.total_requests == (
        metrics.accepted + metrics.declined + metrics.rejected
    )
    for rec in records.values():
        assert rec["status"] in ("served", "missed", "declined", "rejected")

    observations = None
    if collect_observations:
        settlements.sort(key=lambda sa: sa[0])
        ts = [sa[0] for sa in settlements]
        suffix = [0.0] * (len(settlements) + 1)
        for i in range(len(settlements) - 1, -1, -1):
            suffix[i] = settlements[i][1] + suffix[i + 1]
        observations = []
        for t_k, feats in obs_raw:
            idx = bisect_right(ts, t_k)
            period = period_of(t_k)
            if period >= PLANNING_PERIODS:
                period = PLANNING_PERIODS - 1
            observations.append(
                Observation(period=period, features=feats, reward_togo=suffix[idx])
            )

    return EpisodeResult(metrics=metrics, observations=observations, records=records)


def aggregate(metrics_list: list[RunMetrics]) -> dict[str, float]:
    """Means and standard errors of the per-episode counters."""
    fields = (
        "revenue", "served", "accepted", "missed",
        "declined", "rejected", "total_requests",
    )
    n = len(metrics_list)
    if n == 0:
        raise ValueError("no episodes to aggregate")
    out: dict[str, float] = {"episodes": float(n)}
    for f in fields:
        vals = [float(getattr(m, f)) for m in metrics_list]
        mean = sum(vals) / n
        out[f"{f}_mean"] = mean
        if n > 1:
            ss = sum((v - mean) ** 2 for v in vals)
            out[f"{f}_se"] = math.sqrt(ss / (n - 1)) / math.sqrt(n)
        else:
            out[f"{f}_se"] = 0.0
    return out


def evaluate(
    inst: InstanceConfig,
    policy: str,
    params: PolicyParams,
    assumption: str,
    customers_model: str,
    episodes: int,
    master_seed: int,
    value_model=None,
    on_event=None,
) -> tuple[list[RunMetrics], dict[str, float]]:
    """Run paired evaluation episodes; returns per-episode metrics + summary."""
    results = []
    for e in range(episodes):
        res = run_episode(
            inst, policy, params, assumption, customers_model,
            episode_seed_seq(master_seed, e),
            value_model=value_model, on_event=on_event,
        )
        results.append(res.metrics)
    return results, aggregate(results)
