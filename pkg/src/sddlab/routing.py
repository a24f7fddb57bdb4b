"""Route planning and settlement.

Planning evaluates candidate routes under the assumed travel-time model via
the kernel lanes; settlement advances vehicles against the realized speed
field. The two never mix: planning functions take a KernelModel, settlement
takes a SpeedField, and nothing here holds both.

Timing conventions:

* every stop (customer or depot) costs `service_minutes` after arrival;
* a tour assigned to an idle vehicle at time t departs at
  max(free_at, t + service_minutes) (loading);
* while a vehicle drives, the arrival time at its next stop is realized and
  fixed; insertion may only touch stops after the current tour's depot
  return (the committed prefix).

Insertion legality and preference: positions scan the uncommitted suffix
ascending; the winner is the first strict maximum of the route's expected
revenue among positions whose expected depot return stays within the shift.
Across vehicles the first strict maximum of the revenue gain wins (vehicle
index ascending), so ties resolve to the lowest (vehicle, position) pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import (
    CUSTOMER_KIND,
    Customer,
    InstanceConfig,
    RoutePlan,
    Stop,
    VehicleRoute,
    customer_stop,
    depot_stop,
    distance,
    quadrant_of,
)
from .traveltime import KernelModel, SpeedField

_EMPTY_F64 = np.empty(0, dtype=np.float64)
_EMPTY_I32 = np.empty(0, dtype=np.int32)


@dataclass
class VehicleStats:
    """Aggregates of one vehicle's planned route under the assumed model.

    revenue is the expected-revenue term of the route (price * p_on -
    miss_penalty * (1 - p_on) summed over unserved routed customers);
    final_mean/var describe the arrival at the route's last stop (the depot
    return for non-empty routes, `now` for idle vehicles); slack/pon/dist
    fields feed the feature extractor.
    """

    revenue: float
    final_mean: float
    final_var: float
    slack_sum: float
    slack_cnt: int
    pon_prod: float
    dist_sum: float
    n_cust: int


@dataclass
class VehicleView:
    """Kernel-ready snapshot of one vehicle at a decision epoch.

    The walk is the mutable suffix of the stop list (everything except an
    en-route first stop, whose realized arrival is folded into prefix_*
    fields and the cursor). Walk index w maps to stops[w + stop_offset].
    """

    idx: int
    cx: float
    cy: float
    ct: float
    xs: np.ndarray
    ys: np.ndarray
    kinds: np.ndarray
    deadlines: np.ndarray
    prices: np.ndarray
    n: int
    legal_from: int
    stop_offset: int
    empty: bool
    prefix_rev: float
    prefix_slack_sum: float
    prefix_slack_cnt: int
    prefix_pon: float
    prefix_ncust: int
    prefix_arrival: float | None
    base: VehicleStats | None = None


def _walk_arrays(stops: list[Stop]):
    n = len(stops)
    if n == 0:
        return _EMPTY_F64, _EMPTY_F64, _EMPTY_I32, _EMPTY_F64, _EMPTY_F64, 0
    xs = np.empty(n, dtype=np.float64)
    ys = np.empty(n, dtype=np.float64)
    kinds = np.empty(n, dtype=np.int32)
    deadlines = np.zeros(n, dtype=np.float64)
    prices = np.zeros(n, dtype=np.float64)
    for i, s in enumerate(stops):
        xs[i] = s.x
        ys[i] = s.y
        if s.kind == CUSTOMER_KIND:
            kinds[i] = 1
            deadlines[i] = s.deadline_abs
            prices[i] = s.price
        else:
            kinds[i] = 0
    return xs, ys, kinds, deadlines, prices, n


def vehicle_view(
    v: VehicleRoute, idx: int, now: float, inst: InstanceConfig, model: KernelModel
) -> VehicleView:
    service = inst.service_minutes
    prefix_rev = 0.0
    prefix_slack_sum = 0.0
    prefix_slack_cnt = 0
    prefix_pon = 1.0
    prefix_ncust = 0
    prefix_arrival = None
    empty = False

    if v.en_route_arrival is not None:
        s0 = v.stops[0]
        arr = v.en_route_arrival
        cx, cy, ct = s0.x, s0.y, arr + service
        walked = v.stops[1:]
        offset = 1
        legal = v.committed_prefix() - 1
        prefix_arrival = arr
        if s0.is_customer():
            pon = 1.0 if arr <= s0.deadline_abs else 0.0
            prefix_rev = s0.price * pon - inst.miss_penalty * (1.0 - pon)
            prefix_slack_sum = s0.deadline_abs - arr
            prefix_slack_cnt = 1
            prefix_pon = pon
            prefix_ncust = 1
    elif v.stops:
        cx, cy = v.loc
        ct = v.free_at
        walked = v.stops
        offset = 0
        legal = v.committed_prefix()
    else:
        if not v.at_depot():
            raise ValueError("vehicle with no planned stops away from the depot")
        cx, cy = v.loc
        ct = max(v.free_at, now + service)
        walked = []
        offset = 0
        legal = 0
        empty = True

    xs, ys, kinds, deadlines, prices, n = _walk_arrays(walked)
    view = VehicleView(
        idx=idx, cx=cx, cy=cy, ct=ct,
        xs=xs, ys=ys, kinds=kinds, deadlines=deadlines, prices=prices, n=n,
        legal_from=legal, stop_offset=offset, empty=empty,
        prefix_rev=prefix_rev, prefix_slack_sum=prefix_slack_sum,
        prefix_slack_cnt=prefix_slack_cnt, prefix_pon=prefix_pon,
        prefix_ncust=prefix_ncust, prefix_arrival=prefix_arrival,
    )
    view.base = _base_stats(view, now, inst, model)
    return view


def _combine(view: VehicleView, res: tuple) -> VehicleStats:
    """Merge a kernel walk result with the view's fixed-prefix contribution."""
    (rev, final_mean, final_var, slack_sum, slack_cnt,
     pon_prod, dist_sum, n_cust, _pon, _m, _v) = res
    return VehicleStats(
        revenue=view.prefix_rev + rev,
        final_mean=final_mean,
        final_var=final_var,
        slack_sum=view.prefix_slack_sum + slack_sum,
        slack_cnt=view.prefix_slack_cnt + slack_cnt,
        pon_prod=view.prefix_pon * pon_prod,
        dist_sum=dist_sum,
        n_cust=view.prefix_ncust + n_cust,
    )


def _base_stats(
    view: VehicleView, now: float, inst: InstanceConfig, model: KernelModel
) -> VehicleStats:
    if view.empty:
        return VehicleStats(0.0, now, 0.0, 0.0, 0, 1.0, 0.0, 0)
    if view.n == 0:
        # en route to the last remaining stop; its realized arrival is final
        return VehicleStats(
            revenue=view.prefix_rev,
            final_mean=view.prefix_arrival,
            final_var=0.0,
            slack_sum=view.prefix_slack_sum,
            slack_cnt=view.prefix_slack_cnt,
            pon_prod=view.prefix_pon,
            dist_sum=0.0,
            n_cust=view.prefix_ncust,
        )
    res = _kernels.eval_walk(
        view.cx, view.cy, view.ct,
        view.xs, view.ys, view.kinds, view.deadlines, view.prices, view.n,
        -1, 0.0, 0.0, 0.0, 0.0,
        0.0, 0.0,
        inst.service_minutes, inst.miss_penalty,
        model.kind, model.mu, model.var,
        model.weights, model.means, model.stds, model.mc,
    )
    return _combine(view, res)


def plan_views(
    plan: RoutePlan, now: float, inst: InstanceConfig, model: KernelModel
) -> list[VehicleView]:
    return [
        vehicle_view(v, i, now, inst, model) for i, v in enumerate(plan.vehicles)
    ]


@dataclass
class InsertionCandidate:
    """One feasible way to serve the new customer under one deadline."""

    vehicle: int
    walk_pos: int
    stops_pos: int
    walk_n: int
    deadline_abs: float
    delta_revenue: float
    pon_new: float
    stats: VehicleStats
    vehicle_was_empty: bool


def best_insertion_for(
    view: VehicleView,
    customer: Customer,
    deadline_abs: float,
    search_price: float,
    inst: InstanceConfig,
    model: KernelModel,
) -> InsertionCandidate | None:
    res = _kernels.best_insertion(
        view.cx, view.cy, view.ct,
        view.xs, view.ys, view.kinds, view.deadlines, view.prices, view.n,
        view.legal_from, customer.x, customer.y, deadline_abs, search_price,
        inst.depot_xy[0], inst.depot_xy[1],
        inst.service_minutes, inst.miss_penalty, inst.shift_minutes,
        model.kind, model.mu, model.var,
        model.weights, model.means, model.stds, model.mc,
    )
    pos = res[0]
    if pos < 0:
        return None
    stats = _combine(view, res[1:])
    return InsertionCandidate(
        vehicle=view.idx,
        walk_pos=pos,
        stops_pos=pos + view.stop_offset,
        walk_n=view.n,
        deadline_abs=deadline_abs,
        delta_revenue=stats.revenue - view.base.revenue,
        pon_new=res[9],
        stats=stats,
        vehicle_was_empty=view.empty,
    )


def feasible_insertions(
    views: list[VehicleView],
    customer: Customer,
    now: float,
    inst: InstanceConfig,
    model: KernelModel,
    avg_prices: dict[float, float],
) -> dict[float, InsertionCandidate]:
    """Best insertion per deadline option; only strict revenue gains qualify.

    The tentative stop is priced at the option's average willingness to pay
    during the search. Options with no return-feasible position, or whose
    best gain is not strictly positive, are absent from the result.
    """
    out: dict[float, InsertionCandidate] = {}
    for delta in inst.deadline_options:
        deadline_abs = now + delta
        best: InsertionCandidate | None = None
        for view in views:
            cand = best_insertion_for(
                view, customer, deadline_abs, avg_prices[delta], inst, model
            )
            if cand is not None and (
                best is None or cand.delta_revenue > best.delta_revenue
            ):
                best = cand
        if best is not None and best.delta_revenue > 0.0:
            out[delta] = best
    return out


def adopt(
    plan: RoutePlan,
    cand: InsertionCandidate,
    customer: Customer,
    price: float,
    now: float,
    inst: InstanceConfig,
) -> None:
    """Mutate the plan to include the customer at the agreed price."""
    v = plan.vehicles[cand.vehicle]
    stop = customer_stop(customer, cand.deadline_abs, price)
    if cand.walk_pos == cand.walk_n:
        v.stops.append(stop)
        v.stops.append(depot_stop(*v.depot_xy))
    else:
        v.stops.insert(cand.stops_pos, stop)
    if cand.vehicle_was_empty:
        v.free_at = max(v.free_at, now + inst.service_minutes)


def propagate_schedule(
    plan: RoutePlan, now: float, inst: InstanceConfig, model: KernelModel
) -> None:
    """Annotate every planned stop with expected arrival, variance, p_on."""
    for i, v in enumerate(plan.vehicles):
        view = vehicle_view(v, i, now, inst, model)
        if view.prefix_arrival is not None:
            s0 = v.stops[0]
            s0.expected_arrival_min = view.prefix_arrival
            s0.arrival_var_min2 = 0.0
            s0.on_time_prob = view.prefix_pon if s0.is_customer() else None
        if view.n == 0:
            continue
        out_mean = np.empty(view.n, dtype=np.float64)
        out_var = np.empty(view.n, dtype=np.float64)
        out_pon = np.empty(view.n, dtype=np.float64)
        _kernels.eval_walk(
            view.cx, view.cy, view.ct,
            view.xs, view.ys, view.kinds, view.deadlines, view.prices, view.n,
            -1, 0.0, 0.0, 0.0, 0.0,
            0.0, 0.0,
            inst.service_minutes, inst.miss_penalty,
            model.kind, model.mu, model.var,
            model.weights, model.means, model.stds, model.mc,
            out_mean, out_var, out_pon,
        )
        for w in range(view.n):
            s = v.stops[w + view.stop_offset]
            s.expected_arrival_min = float(out_mean[w])
            s.arrival_var_min2 = float(out_var[w])
            s.on_time_prob = float(out_pon[w]) if s.is_customer() else None


def expected_plan_revenue(
    plan: RoutePlan, now: float, inst: InstanceConfig, model: KernelModel
) -> float:
    """Expected-revenue objective of the current plan (no tentative stop)."""
    total = 0.0
    for view in plan_views(plan, now, inst, model):
        total += view.base.revenue
    return total


def advance_routes(
    plan: RoutePlan,
    until: float,
    field: SpeedField,
    inst: InstanceConfig,
    on_settle=None,
    on_event=None,
) -> None:
    """Advance every vehicle against the realized speed field through `until`.

    Departures draw the realized inverse speed of the departure location's
    quadrant at the departure period. Customers settle on arrival: on time
    (arrival <= deadline) pays the agreed price, late costs the miss penalty.
    on_settle(vehicle, stop, arrival, on_time, amount) fires per customer;
    on_event(kind, payload) mirrors departures and arrivals for event logs.
    """
    for vi, v in enumerate(plan.vehicles):
        while True:
            if v.en_route_arrival is not None:
                arr = v.en_route_arrival
                if arr > until:
                    break
                s = v.stops.pop(0)
                v.loc = (s.x, s.y)
                v.free_at = arr + inst.service_minutes
                v.en_route_arrival = None
                if s.is_customer():
                    on_time = arr <= s.deadline_abs
                    amount = s.price if on_time else -inst.miss_penalty
                    if on_settle is not None:
                        on_settle(vi, s, arr, on_time, amount)
                    if on_event is not None:
                        on_event(
                            "settle",
                            {
                                "vehicle": vi,
                                "customer": s.customer_id,
                                "t": arr,
                                "on_time": on_time,
                                "amount": amount,
                            },
                        )
                elif on_event is not None:
                    on_event("return", {"vehicle": vi, "t": arr})
            else:
                if not v.stops:
                    break
                dep = v.free_at
                if dep > until:
                    break
                nxt = v.stops[0]
                d = distance(v.loc[0], v.loc[1], nxt.x, nxt.y)
                inv = field.at(quadrant_of(v.loc[0], v.loc[1]), dep)
                v.en_route_arrival = dep + d * inv
                if on_event is not None:
                    on_event(
                        "depart",
                        {
                            "vehicle": vi,
                            "t": dep,
                            "to_kind": nxt.kind,
                            "to": [nxt.x, nxt.y],
                        },
                    )
