"""Pricing policies for deadline option quotes.

Five policies share one interface: given the feasible insertion candidates
for a new request (and, for the value-based ones, opportunity costs), they
return a price per deadline option. Infeasible options are quoted at a large
sentinel price, which the choice model turns into an exact zero acceptance
probability.

fix        fixed ladder: alpha times (1, 0.75, 0.5) for the 60/120/240 options
dist       fixed ladder plus gamma * (depot distance / max distance)
opp        elementwise max of the fixed ladder and the opportunity cost
opt        maximizes expected immediate net reward over [0, cap]^k
opt-basis  like opt but bounded below by the dist ladder
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import _kernels
from .choice import ChoiceModel
from .core import SENTINEL_PRICE, Customer, InstanceConfig, distance
from .routing import InsertionCandidate

POLICIES = ("fix", "dist", "opp", "opt", "opt-basis")

LADDER = (1.0, 0.75, 0.5)

DEFAULT_ALPHA_GRID = tuple(i * 0.5 for i in range(1, 11))  # 0.5 .. 5.0
DEFAULT_GAMMA_GRID = tuple(i * 0.5 for i in range(0, 7))  # 0.0 .. 3.0


@dataclass(frozen=True)
class PolicyParams:
    """Tunable policy inputs.

    alpha scales the fixed ladder, gamma the distance surcharge. avg_prices
    is the assumed willingness to pay per option (used to price the
    tentative stop inside the insertion search), option order ascending.
    """

    alpha: float = 2.0
    gamma: float = 1.0
    avg_prices: tuple[float, ...] = (2.0, 1.5, 1.0)

    def search_prices(self, options: tuple[float, ...]) -> dict[float, float]:
        if len(self.avg_prices) != len(options):
            raise ValueError("avg_prices length must match the option count")
        return dict(zip(options, self.avg_prices))


def fixed_prices(alpha: float, options: tuple[float, ...]) -> dict[float, float]:
    if len(options) != len(LADDER):
        raise ValueError("fixed ladder is defined for exactly three options")
    return {opt: alpha * m for opt, m in zip(options, LADDER)}


def dist_scaled_prices(
    alpha: float,
    gamma: float,
    dist_km: float,
    max_dist_km: float,
    options: tuple[float, ...],
) -> dict[float, float]:
    """Fixed ladder plus a shared distance surcharge gamma * d / d_max."""
    surcharge = gamma * dist_km / max_dist_km
    return {opt: p + surcharge for opt, p in fixed_prices(alpha, options).items()}


@dataclass
class PriceQuote:
    """Quoted prices per option (sentinel marks infeasible options)."""

    prices: dict[float, float]
    pon: dict[float, float]
    opp: dict[float, float]
    objective: float | None = None


def max_depot_distance(inst: InstanceConfig) -> float:
    return math.sqrt(2.0) * inst.square_half_km


def quote(
    policy: str,
    params: PolicyParams,
    inst: InstanceConfig,
    customer: Customer,
    cands: dict[float, InsertionCandidate],
    opps: dict[float, float] | None,
    choice_model: ChoiceModel,
) -> PriceQuote:
    """Price every deadline option for one request.

    cands holds the feasible options only; opps their opportunity costs
    (required for opp/opt/opt-basis, ignored otherwise).
    """
    options = inst.deadline_options
    pon = {d: cands[d].pon_new for d in options if d in cands}
    opp = {d: (opps[d] if opps else 0.0) for d in options if d in cands}
    prices = {d: SENTINEL_PRICE for d in options}
    objective = None

    if policy == "fix":
        base = fixed_prices(params.alpha, options)
        for d in pon:
            prices[d] = base[d]
    elif policy == "dist":
        base = dist_scaled_prices(
            params.alpha,
            params.gamma,
            distance(customer.x, customer.y, *inst.depot_xy),
            max_depot_distance(inst),
            options,
        )
        for d in pon:
            prices[d] = base[d]
    elif policy == "opp":
        if opps is None:
            raise ValueError("opp pricing needs opportunity costs")
        base = fixed_prices(params.alpha, options)
        for d in pon:
            prices[d] = base[d] if base[d] > opp[d] else opp[d]
    elif policy in ("opt", "opt-basis"):
        if opps is None:
            raise ValueError(f"{policy} pricing needs opportunity costs")
        feas = [d for d in options if d in cands]
        if not feas:
            raise ValueError("quote optimization needs at least one feasible option")
        cap = inst.price_cap
        if policy == "opt-basis":
            base = dist_scaled_prices(
                params.alpha,
                params.gamma,
                distance(customer.x, customer.y, *inst.depot_xy),
                max_depot_distance(inst),
                options,
            )
            lb = [min(base[d], cap) for d in feas]
        else:
            lb = [0.0 for _ in feas]
        ub = [cap for _ in feas]
        b = [choice_model.base_utils[d] for d in feas]
        a_on = [pon[d] for d in feas]
        b_pen = [inst.miss_penalty * (1.0 - pon[d]) + opp[d] for d in feas]
        px, objective = _kernels.maximize_quote(lb, ub, b, a_on, b_pen)
        for j, d in enumerate(feas):
            prices[d] = px[j]
    else:
        raise ValueError(f"unknown policy {policy!r}; expected one of {POLICIES}")

    return PriceQuote(prices=prices, pon=pon, opp=opp, objective=objective)


def policy_search(
    policy: str,
    inst: InstanceConfig,
    customers: str,
    assumption: str,
    runs: int,
    seed: int,
    alpha_grid: tuple[float, ...] = DEFAULT_ALPHA_GRID,
    gamma_grid: tuple[float, ...] = DEFAULT_GAMMA_GRID,
    value_model=None,
    avg_prices: tuple[float, ...] = (2.0, 1.5, 1.0),
):
    """Grid search of policy parameters by paired simulation.

    Every grid point is evaluated on the same episode seeds (common random
    numbers), so differences are policy effects, not sampling noise. Returns
    (best PolicyParams, rows) with rows of (alpha, gamma, mean revenue,
    sample std); ties keep the earlier grid point (alpha-major order).
    """
    from .engine import episode_seed_seq, run_episode

    if policy == "opt":
        raise ValueError("the optimizing policy has no tunable price parameters")
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}")
    if runs <= 0 or not alpha_grid:
        raise ValueError("need a nonempty grid and at least one validation run")
    gammas = gamma_grid if policy in ("dist", "opt-basis") else (0.0,)
    if not gammas:
        raise ValueError("need a nonempty gamma grid")

    best_params = None
    best_mean = -math.inf
    rows = []
    for alpha in alpha_grid:
        for gamma in gammas:
            params = PolicyParams(alpha=alpha, gamma=gamma, avg_prices=avg_prices)
            revs = []
            for e in range(runs):
                res = run_episode(
                    inst,
                    policy,
                    params,
                    assumption,
                    customers,
                    episode_seed_seq(seed, e),
                    value_model=value_model,
                )
                revs.append(res.metrics.revenue)
            mean_rev = sum(revs) / runs
            if runs > 1:
                var = sum((r - mean_rev) ** 2 for r in revs) / (runs - 1)
                std_rev = math.sqrt(var)
            else:
                std_rev = 0.0
            rows.append((alpha, gamma, mean_rev, std_rev))
            if mean_rev > best_mean:
                best_mean = mean_rev
                best_params = params
    return best_params, rows
