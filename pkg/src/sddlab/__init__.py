"""Simulation and optimization laboratory for stochastic dynamic pricing and
routing of same-day delivery.

Same-day requests arrive through a working shift; each one is quoted a price
per delivery-deadline option (or turned away), chooses by a multinomial logit
model, and accepted parcels are inserted into vehicle routes whose travel
times are random. Pricing policies range from fixed ladders to an
anticipatory policy that maximizes immediate net reward minus an opportunity
cost from a trained value-function approximation.
"""

from ._kernels import LANE as kernel_lane
from .core import InstanceConfig, load_catalog, load_instance

__version__ = "0.1.0"

__all__ = [
    "InstanceConfig",
    "kernel_lane",
    "load_catalog",
    "load_instance",
    "__version__",
]
