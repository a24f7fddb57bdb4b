"""Domain model: instances, customers, routes, plans, run metrics.

Conventions used throughout the package:

* distances in km on a square service area centered on the depot,
* times in minutes from the start of the shift,
* inverse speeds in min/km (instance files store h/km; the loader converts),
* money in abstract currency units.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

SHIFT_MINUTES = 480.0
LAST_ORDER_MINUTE = 420.0
SERVICE_MINUTES = 2.0
DEADLINE_OPTIONS = (60.0, 120.0, 240.0)
PERIOD_MINUTES = 15.0
PLANNING_PERIODS = 32
FIELD_PERIODS = 40  # planning periods + overtime cover for late returns
SENTINEL_PRICE = 10000.0

DEPOT_KIND = "depot"
CUSTOMER_KIND = "customer"

_CATALOG_SCHEMA = "sddlab instances v1"


def distance(ax: float, ay: float, bx: float, by: float) -> float:
    """Euclidean distance in km.

    Written as sqrt of squares (not hypot) so python-side distances match the
    kernel lanes' arithmetic exactly.
    """
    dx = ax - bx
    dy = ay - by
    return math.sqrt(dx * dx + dy * dy)


def quadrant_of(x: float, y: float) -> int:
    """Quadrant index of a point: 0=NE, 1=NW, 2=SW, 3=SE.

    Points on an axis belong to the nonnegative side, so the depot (0, 0)
    sits in quadrant 0.
    """
    if x >= 0.0:
        return 0 if y >= 0.0 else 3
    return 1 if y >= 0.0 else 2


def period_of(t: float) -> int:
    """15-minute period index of a time, floor(t / 15).

    Raises ValueError for negative times; times past the end of the shift
    are legal (late returns land in overtime periods).
    """
    if t < 0.0:
        raise ValueError(f"negative time has no period: {t}")
    return int(t // PERIOD_MINUTES)


@dataclass(frozen=True)
class SpeedModelSpec:
    """Distribution family of inverse speeds, in min/km.

    kind is one of "gaussian", "mixture", "deterministic". For gaussian,
    components holds a single (weight=1, mean, std); for mixture one triple
    per component; for deterministic a single (1, mean, 0).
    """

    kind: str
    components: tuple[tuple[float, float, float], ...]

    @property
    def mean(self) -> float:
        return sum(w * m for w, m, _ in self.components)

    @property
    def std(self) -> float:
        mu = self.mean
        second = sum(w * (s * s + m * m) for w, m, s in self.components)
        return math.sqrt(max(second - mu * mu, 0.0))


@dataclass(frozen=True)
class CustomerModelSpec:
    """Spatial request distribution: gaussian | uniform | clusters."""

    kind: str
    params: dict


@dataclass(frozen=True)
class InstanceConfig:
    """Immutable description of one experimental instance."""

    instance_id: int
    expected_orders: int
    n_vehicles: int
    miss_penalty: float
    customer_models: dict[str, CustomerModelSpec]
    speed_models: dict[str, SpeedModelSpec]  # min/km
    true_speed_model: str
    shift_minutes: float = SHIFT_MINUTES
    last_order_minute: float = LAST_ORDER_MINUTE
    service_minutes: float = SERVICE_MINUTES
    deadline_options: tuple[float, ...] = DEADLINE_OPTIONS
    square_half_km: float = 10.0
    depot_xy: tuple[float, float] = (0.0, 0.0)
    price_cap: float = 20.0
    inverse_speed_bounds: tuple[float, float] = (0.5, 12.0)

    def speed_model(self, name: str) -> SpeedModelSpec:
        try:
            return self.speed_models[name]
        except KeyError:
            raise KeyError(
                f"unknown speed model {name!r}; have {sorted(self.speed_models)}"
            ) from None

    def customer_model(self, name: str) -> CustomerModelSpec:
        try:
            return self.customer_models[name]
        except KeyError:
            raise KeyError(
                f"unknown customer model {name!r}; have {sorted(self.customer_models)}"
            ) from None


def _speed_spec_from_json(raw: dict) -> SpeedModelSpec:
    # Instance files store h/km; everything downstream runs in min/km.
    comps = tuple(
        (float(w), float(m) * 60.0, float(s) * 60.0) for w, m, s in raw["components"]
    )
    return SpeedModelSpec(kind=raw["kind"], components=comps)


def _load_catalog_payload(path: Path | None = None) -> dict:
    if path is None:
        text = (
            resources.files("sddlab").joinpath("data/instances.json").read_text()
        )
    else:
        text = Path(path).read_text()
    payload = json.loads(text)
    if payload.get("schema") != _CATALOG_SCHEMA:
        raise ValueError(
            f"unsupported instance file schema: {payload.get('schema')!r}"
        )
    return payload


def _instance_from_entry(defaults: dict, entry: dict) -> InstanceConfig:
    customer_models = {
        name: CustomerModelSpec(kind=raw["kind"], params={
            k: v for k, v in raw.items() if k != "kind"
        })
        for name, raw in defaults["customer_models"].items()
    }
    speed_models = {
        name: _speed_spec_from_json(raw)
        for name, raw in defaults["speed_models_h_per_km"].items()
    }
    # Deterministic planning uses the mean inverse speed of the true model.
    true_name = defaults["true_speed_model"]
    det_mean = speed_models[true_name].mean
    speed_models["deterministic"] = SpeedModelSpec(
        kind="deterministic", components=((1.0, det_mean, 0.0),)
    )
    lo, hi = defaults["inverse_speed_bounds_min_per_km"]
    return InstanceConfig(
        instance_id=int(entry["id"]),
        expected_orders=int(entry["expected_orders"]),
        n_vehicles=int(entry["vehicles"]),
        miss_penalty=float(entry["miss_penalty"]),
        customer_models=customer_models,
        speed_models=speed_models,
        true_speed_model=true_name,
        shift_minutes=float(defaults["shift_minutes"]),
        last_order_minute=float(defaults["last_order_minute"]),
        service_minutes=float(defaults["service_minutes"]),
        deadline_options=tuple(float(d) for d in defaults["deadline_options_minutes"]),
        square_half_km=float(defaults["square_half_km"]),
        depot_xy=tuple(defaults["depot"]),
        price_cap=float(defaults["price_cap"]),
        inverse_speed_bounds=(float(lo), float(hi)),
    )


def load_catalog(path: Path | None = None) -> dict[int, InstanceConfig]:
    """All instances of the bundled (or given) catalog, keyed by id."""
    payload = _load_catalog_payload(path)
    defaults = payload["defaults"]
    out = {}
    for entry in payload["instances"]:
        cfg = _instance_from_entry(defaults, entry)
        out[cfg.instance_id] = cfg
    return out


def load_instance(ref: int | str | Path) -> InstanceConfig:
    """Load one instance by catalog id, or every-field-explicit JSON path.

    A string that parses as an int is a catalog id; anything else is a path
    to a file with the catalog schema (its first instance is used).
    """
    if isinstance(ref, str):
        try:
            ref = int(ref)
        except ValueError:
            ref = Path(ref)
    if isinstance(ref, int):
        catalog = load_catalog()
        try:
            return catalog[ref]
        except KeyError:
            raise KeyError(
                f"instance id {ref} not in catalog (0..{max(catalog)})"
            ) from None
    catalog = load_catalog(ref)
    first = min(catalog)
    return catalog[first]


@dataclass(frozen=True)
class Customer:
    """One delivery request."""

    customer_id: int
    t_request: float
    x: float
    y: float


@dataclass
class Stop:
    """One stop of a planned route.

    Planning annotations (expected arrival, variance, on-time probability
    under the assumed travel-time model) are filled by schedule propagation
    and carry no meaning for depot stops' on-time field.
    """

    kind: str
    x: float
    y: float
    customer_id: int = -1
    deadline_abs: float = math.inf
    price: float = 0.0
    expected_arrival_min: float | None = None
    arrival_var_min2: float | None = None
    on_time_prob: float | None = None

    def is_customer(self) -> bool:
        return self.kind == CUSTOMER_KIND


def depot_stop(x: float = 0.0, y: float = 0.0) -> Stop:
    return Stop(kind=DEPOT_KIND, x=x, y=y)


def customer_stop(customer: Customer, deadline_abs: float, price: float) -> Stop:
    return Stop(
        kind=CUSTOMER_KIND,
        x=customer.x,
        y=customer.y,
        customer_id=customer.customer_id,
        deadline_abs=deadline_abs,
        price=price,
    )


@dataclass
class VehicleRoute:
    """One vehicle: physical situation plus its remaining planned stops.

    loc / free_at describe the last committed physical fact: the vehicle is
    (or will be) ready to depart from loc at free_at. While driving,
    en_route_arrival holds the realized arrival time at stops[0] and the
    planning model treats that first leg as settled.
    """

    loc: tuple[float, float]
    free_at: float = 0.0
    stops: list[Stop] = field(default_factory=list)
    en_route_arrival: float | None = None
    depot_xy: tuple[float, float] = (0.0, 0.0)

    def committed_prefix(self) -> int:
        """Number of leading stops whose order may not be changed.

        Idle or loading at the depot: nothing is committed. Away from the
        depot (or already rolling toward stops[0]): the remainder of the
        current tour, through its closing depot stop, is committed (parcels
        were loaded for that tour in order).
        """
        if not self.stops:
            return 0
        if self.at_depot() and self.en_route_arrival is None:
            return 0
        for i, stop in enumerate(self.stops):
            if stop.kind == DEPOT_KIND:
                return i + 1
        raise ValueError("open tour: no depot return in remaining stops")

    def at_depot(self) -> bool:
        # loc equality with the depot is exact: stops copy coordinates.
        return self.loc == self.depot_xy

    def copy(self) -> "VehicleRoute":
        return VehicleRoute(
            loc=self.loc,
            free_at=self.free_at,
            stops=[replace(s) for s in self.stops],
            en_route_arrival=self.en_route_arrival,
            depot_xy=self.depot_xy,
        )


@dataclass
class RoutePlan:
    """Planned routes for the whole fleet."""

    vehicles: list[VehicleRoute]

    @classmethod
    def initial(cls, n_vehicles: int, depot_xy: tuple[float, float] = (0.0, 0.0)) -> "RoutePlan":
        return cls(
            vehicles=[
                VehicleRoute(loc=depot_xy, depot_xy=depot_xy)
                for _ in range(n_vehicles)
            ]
        )

    def copy(self) -> "RoutePlan":
        return RoutePlan(vehicles=[v.copy() for v in self.vehicles])

    def routed_customer_ids(self) -> set[int]:
        return {
            s.customer_id
            for v in self.vehicles
            for s in v.stops
            if s.kind == CUSTOMER_KIND
        }


@dataclass
class DecisionState:
    """Snapshot at a decision epoch: time, plan, and the requesting customer."""

    now: float
    plan: RoutePlan
    customer: Customer


@dataclass
class RunMetrics:
    """Per-episode outcome counters.

    Identities (asserted by the engine after every episode):
    accepted == served + missed and
    total_requests == accepted + declined + rejected.
    revenue == sum of served prices - miss_penalty * missed, accumulated
    in customer-id order.
    """

    revenue: float = 0.0
    total_requests: int = 0
    accepted: int = 0
    served: int = 0
    missed: int = 0
    declined: int = 0
    rejected: int = 0
