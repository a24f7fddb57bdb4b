"""Multinomial logit customer choice over deadline options.

A quoted customer sees one price per deadline option plus the free opt-out
(next-day delivery, utility 0). Option utilities are base_util - price;
choice probabilities are the softmax of utilities, and sampled choices add
independent standard Gumbel noise and take the argmax, which realizes the
same distribution.

Infeasible options are quoted at a large sentinel price, which drives their
utility (and choice probability) to an exact numerical zero; no special
casing is needed and the sampler always consumes the same number of random
draws regardless of feasibility, keeping random streams aligned across
policies (common random numbers).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

NEXT_DAY = "next_day"

# Calibrated so shorter deadlines are preferred at equal prices.
DEFAULT_BASE_UTILS = {60.0: 1.0, 120.0: 0.75, 240.0: 0.5}


@dataclass(frozen=True)
class ChoiceModel:
    base_utils: dict[float, float] = field(
        default_factory=lambda: dict(DEFAULT_BASE_UTILS)
    )

    def options(self) -> tuple[float, ...]:
        return tuple(self.base_utils)

    def utilities(self, prices: dict[float, float]) -> list[float]:
        """[opt-out, option...] deterministic utilities for given prices."""
        utils = [0.0]
        for delta, base in self.base_utils.items():
            utils.append(base - prices[delta])
        return utils


def option_probabilities(
    model: ChoiceModel, prices: dict[float, float]
) -> dict[object, float]:
    """Choice probabilities keyed by NEXT_DAY and each deadline option."""
    utils = model.utilities(prices)
    m = max(utils)
    exps = [math.exp(u - m) for u in utils]
    z = sum(exps)
    keys = [NEXT_DAY] + list(model.base_utils)
    return {k: e / z for k, e in zip(keys, exps)}


def sample_choice(
    model: ChoiceModel, prices: dict[float, float], rng: np.random.Generator
):
    """One sampled choice: NEXT_DAY or a deadline option (minutes).

    Always draws one Gumbel per slot (opt-out + every option), so the
    consumption of the random stream does not depend on prices or
    feasibility. Ties keep the first slot in listing order.
    """
    utils = model.utilities(prices)
    noise = rng.gumbel(0.0, 1.0, size=len(utils))
    best = 0
    best_u = utils[0] + noise[0]
    for i in range(1, len(utils)):
        u = utils[i] + noise[i]
        if u > best_u:
            best = i
            best_u = u
    if best == 0:
        return NEXT_DAY
    return list(model.base_utils)[best - 1]
