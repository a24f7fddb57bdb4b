"""Command-line interface.

Verbs:
  train          fit a value model on one instance by repeated simulation
  policy-search  grid-search policy parameters with common random numbers
  evaluate       run evaluation episodes over a policy/assumption sweep
  compare        percentage differences between two results files
  emit-plots     derive plot-ready CSV data from stored run artifacts

All randomness derives from --seed; reruns with identical arguments produce
byte-identical outputs. CSV files start with a schema comment line that
readers validate.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import engine, pricing, vfa
from .choice import ChoiceModel, option_probabilities
from .core import SENTINEL_PRICE, InstanceConfig, load_instance
from .pricing import PolicyParams

RESULTS_SCHEMA = "# sddlab results v1"
CURVE_SCHEMA = "# sddlab curve v1"
GRID_SCHEMA = "# sddlab grid v1"
COMPARE_SCHEMA = "# sddlab compare v1"
CHOICE_SCHEMA = "# sddlab choice-curve v1"
FAIRNESS_SCHEMA = "# sddlab fairness v1"

RESULTS_HEADER = (
    "instance,policy,assumption,customers,episodes,seed,"
    "revenue_mean,revenue_se,served_mean,served_se,accepted_mean,accepted_se,"
    "missed_mean,missed_se,declined_mean,declined_se,rejected_mean,rejected_se,"
    "requests_mean"
)

COMPARE_METRICS = (
    "revenue_mean", "served_mean", "accepted_mean",
    "missed_mean", "declined_mean", "rejected_mean",
)


def _write_lines(path: Path, lines: list[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        for line in lines:
            fh.write(line)
            fh.write("\n")


def _read_csv(path: Path, schema: str) -> tuple[list[str], list[list[str]]]:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != schema:
        raise SystemExit(f"{path}: expected schema line {schema!r}")
    header = lines[1].split(",")
    rows = [ln.split(",") for ln in lines[2:] if ln]
    return header, rows


def _fmt(x: float) -> str:
    return repr(float(x))


def _model_path(models_dir: Path, instance_id: int, customers: str) -> Path:
    return models_dir / f"vfa_i{instance_id}_{customers}.json"


def _params_path(
    params_dir: Path, policy: str, instance_id: int, customers: str
) -> Path:
    return params_dir / f"params_{policy}_i{instance_id}_{customers}.json"


# A policy without its own tuned parameters borrows the ladder it is built
# on: opp tops up the fixed ladder, opt-basis is lower-bounded by the dist
# ladder.
_PARAMS_FALLBACK = {"opp": "fix", "opt-basis": "dist"}


def _load_params(args, policy: str, inst: InstanceConfig, customers: str) -> PolicyParams:
    if args.params_dir:
        for name in (policy, _PARAMS_FALLBACK.get(policy)):
            if name is None:
                continue
            p = _params_path(Path(args.params_dir), name, inst.instance_id, customers)
            if not p.exists():
                continue
            with open(p) as fh:
                d = json.load(fh)
            if d.get("schema") != "sddlab params v1":
                raise SystemExit(f"{p}: unsupported params schema")
            return PolicyParams(alpha=float(d["alpha"]), gamma=float(d["gamma"]))
    return PolicyParams(alpha=args.alpha, gamma=args.gamma)


def _load_value_model(args, policy: str, inst: InstanceConfig, customers: str):
    if policy not in engine.VALUE_POLICIES:
        return None
    if not args.models:
        raise SystemExit(f"policy {policy!r} needs --models DIR with a trained model")
    p = _model_path(Path(args.models), inst.instance_id, customers)
    if not p.exists():
        raise SystemExit(f"missing value model {p}")
    return vfa.ValueModel.load(p)


def _parse_grid(text: str) -> tuple[float, ...]:
    try:
        start_s, stop_s, step_s = text.split(":")
        start, stop, step = float(start_s), float(stop_s), float(step_s)
    except ValueError:
        raise SystemExit(f"bad grid spec {text!r}, expected start:stop:step")
    if step <= 0 or stop < start:
        raise SystemExit(f"bad grid spec {text!r}")
    vals = []
    i = 0
    while True:
        v = start + i * step
        if v > stop + 1e-9:
            break
        vals.append(v)
        i += 1
    if not vals:
        raise SystemExit(f"empty grid {text!r}")
    return tuple(vals)


def cmd_train(args) -> int:
    inst = load_instance(args.instance)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model, curve = vfa.train(
        inst, args.customers, args.assumption, args.episodes, args.seed,
        batch_size=args.batch,
    )
    meta = {
        "instance": inst.instance_id,
        "customers": args.customers,
        "assumption": args.assumption,
        "episodes": args.episodes,
        "seed": args.seed,
        "batch": args.batch,
    }
    model.save(_model_path(out, inst.instance_id, args.customers), meta=meta)
    lines = [CURVE_SCHEMA, "episode,profit,running_avg"]
    for e, profit, running in curve:
        lines.append(f"{e},{_fmt(profit)},{_fmt(running)}")
    _write_lines(out / f"curve_i{inst.instance_id}_{args.customers}.csv", lines)
    print(
        f"trained value model: instance {inst.instance_id}, "
        f"{args.episodes} episodes, final running avg {curve[-1][2]:.3f}"
    )
    return 0


def cmd_policy_search(args) -> int:
    inst = load_instance(args.instance)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    value_model = _load_value_model(args, args.policy, inst, args.customers)
    best, rows = pricing.policy_search(
        args.policy, inst, args.customers, args.assumption, args.runs, args.seed,
        alpha_grid=_parse_grid(args.grid_alpha),
        gamma_grid=_parse_grid(args.grid_gamma),
        value_model=value_model,
    )
    lines = [GRID_SCHEMA, "alpha,gamma,revenue_mean,revenue_std"]
    for alpha, gamma, mean_rev, std_rev in rows:
        lines.append(f"{_fmt(alpha)},{_fmt(gamma)},{_fmt(mean_rev)},{_fmt(std_rev)}")
    _write_lines(
        out / f"grid_{args.policy}_i{inst.instance_id}_{args.customers}.csv", lines
    )
    best_mean = max(r[2] for r in rows)
    payload = {
        "schema": "sddlab params v1",
        "policy": args.policy,
        "instance": inst.instance_id,
        "customers": args.customers,
        "assumption": args.assumption,
        "alpha": best.alpha,
        "gamma": best.gamma,
        "revenue_mean": best_mean,
        "runs": args.runs,
        "seed": args.seed,
    }
    p = _params_path(out, args.policy, inst.instance_id, args.customers)
    with open(p, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(
        f"policy-search {args.policy}: best alpha={best.alpha} gamma={best.gamma} "
        f"mean revenue {best_mean:.3f}"
    )
    return 0


def cmd_evaluate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    instances = [load_instance(tok) for tok in args.instance.split(",")]
    policies = args.policy.split(",")
    assumptions = args.assumption.split(",")
    customer_models = args.customers.split(",")
    lines = [RESULTS_SCHEMA, RESULTS_HEADER]
    for inst in instances:
        for customers in customer_models:
            for policy in policies:
                params = _load_params(args, policy, inst, customers)
                value_model = _load_value_model(args, policy, inst, customers)
                for assumption in assumptions:
                    sink = None
                    events = None
                    if args.events:
                        events = []
                        episode_box = [-1]

                        def sink(kind, payload, _events=events, _box=episode_box):
                            _events.append(
                                {"event": kind, "episode": _box[0], **payload}
                            )

                    metrics_list = []
                    for e in range(args.episodes):
                        if args.events:
                            episode_box[0] = e
                        res = engine.run_episode(
                            inst, policy, params, assumption, customers,
                            engine.episode_seed_seq(args.seed, e),
                            value_model=value_model, on_event=sink,
                        )
                        metrics_list.append(res.metrics)
                    agg = engine.aggregate(metrics_list)
                    lines.append(
                        ",".join(
                            [
                                str(inst.instance_id), policy, assumption,
                                customers, str(args.episodes), str(args.seed),
                                _fmt(agg["revenue_mean"]), _fmt(agg["revenue_se"]),
                                _fmt(agg["served_mean"]), _fmt(agg["served_se"]),
                                _fmt(agg["accepted_mean"]), _fmt(agg["accepted_se"]),
                                _fmt(agg["missed_mean"]), _fmt(agg["missed_se"]),
                                _fmt(agg["declined_mean"]), _fmt(agg["declined_se"]),
                                _fmt(agg["rejected_mean"]), _fmt(agg["rejected_se"]),
                                _fmt(agg["total_requests_mean"]),
                            ]
                        )
                    )
                    print(
                        f"evaluate i{inst.instance_id} {policy}/{assumption}/"
                        f"{customers}: revenue {agg['revenue_mean']:.3f} "
                        f"+/- {agg['revenue_se']:.3f}"
                    )
                    if args.events:
                        ev_path = out / (
                            f"events_i{inst.instance_id}_{policy}_"
                            f"{assumption}_{customers}.jsonl"
                        )
                        _write_lines(
                            ev_path,
                            [json.dumps(ev, sort_keys=True) for ev in events],
                        )
    _write_lines(out / "results.csv", lines)
    return 0


def cmd_compare(args) -> int:
    header_a, rows_a = _read_csv(Path(args.a), RESULTS_SCHEMA)
    header_b, rows_b = _read_csv(Path(args.b), RESULTS_SCHEMA)
    if header_a != header_b:
        raise SystemExit("results files have different headers")
    idx = {name: i for i, name in enumerate(header_a)}
    key_cols = ("instance", "policy", "assumption", "customers")

    def key_of(row):
        return tuple(row[idx[c]] for c in key_cols)

    b_by_key = {key_of(r): r for r in rows_b}
    out_lines = [
        COMPARE_SCHEMA,
        ",".join(key_cols) + "," + ",".join(f"{m}_pct" for m in COMPARE_METRICS),
    ]
    for row in rows_a:
        k = key_of(row)
        other = b_by_key.get(k)
        if other is None:
            continue
        cells = list(k)
        for m in COMPARE_METRICS:
            a_val = float(row[idx[m]])
            b_val = float(other[idx[m]])
            if a_val == 0.0:
                cells.append("0.0" if b_val == 0.0 else "")
            else:
                cells.append(_fmt((b_val - a_val) / a_val * 100.0))
        out_lines.append(",".join(cells))
    _write_lines(Path(args.out), out_lines)
    print(f"compared {len(out_lines) - 2} matching rows -> {args.out}")
    return 0


def _emit_choice_curve(out: Path) -> None:
    model = ChoiceModel()
    lines = [CHOICE_SCHEMA, "alpha,p_60,p_120,p_240,p_sdd,p_next_day"]
    options = tuple(model.base_utils)
    for i in range(61):
        alpha = i / 10.0
        prices = pricing.fixed_prices(alpha, options)
        probs = option_probabilities(model, prices)
        p_next = probs["next_day"]
        lines.append(
            ",".join(
                [_fmt(alpha)]
                + [_fmt(probs[d]) for d in options]
                + [_fmt(1.0 - p_next), _fmt(p_next)]
            )
        )
    _write_lines(out / "choice_curve.csv", lines)


def _emit_training(curve_path: Path, out: Path) -> None:
    _, rows = _read_csv(curve_path, CURVE_SCHEMA)
    lines = [CURVE_SCHEMA, "episode,profit,running_avg"]
    lines += [",".join(r) for r in rows]
    _write_lines(out / f"plot_{curve_path.name}", lines)


def _emit_fairness(events_path: Path, out: Path) -> None:
    per_customer: dict[tuple[int, int], dict] = {}
    with open(events_path) as fh:
        for line in fh:
            ev = json.loads(line)
            key = (ev.get("episode", -1), ev.get("customer", -1))
            if ev["event"] == "request":
                per_customer[key] = {
                    "dist": math.sqrt(ev["x"] ** 2 + ev["y"] ** 2),
                    "prices": None,
                    "sdd": False,
                }
            elif ev["event"] == "quote" and key in per_customer:
                per_customer[key]["prices"] = ev["prices"]
            elif ev["event"] == "choice" and key in per_customer:
                per_customer[key]["sdd"] = ev["option"] != "next_day"
    if not per_customer:
        return
    bins: dict[int, dict] = {}
    for rec in per_customer.values():
        b = int(rec["dist"])
        agg = bins.setdefault(
            b,
            {"requests": 0, "quoted": 0, "sdd": 0,
             "sum": {"60": 0.0, "120": 0.0, "240": 0.0},
             "cnt": {"60": 0, "120": 0, "240": 0}},
        )
        agg["requests"] += 1
        if rec["sdd"]:
            agg["sdd"] += 1
        if rec["prices"] is not None:
            agg["quoted"] += 1
            for opt, price in rec["prices"].items():
                if price < SENTINEL_PRICE / 2.0:
                    agg["sum"][opt] += price
                    agg["cnt"][opt] += 1
    lines = [
        FAIRNESS_SCHEMA,
        "bin_km,requests,quoted,mean_price_60,mean_price_120,mean_price_240,sdd_share",
    ]
    for b in sorted(bins):
        agg = bins[b]
        cells = [str(b), str(agg["requests"]), str(agg["quoted"])]
        for opt in ("60", "120", "240"):
            if agg["cnt"][opt]:
                cells.append(_fmt(agg["sum"][opt] / agg["cnt"][opt]))
            else:
                cells.append("")
        cells.append(_fmt(agg["sdd"] / agg["requests"]))
        lines.append(",".join(cells))
    _write_lines(out / f"fairness_{events_path.stem}.csv", lines)


def cmd_emit_plots(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _emit_choice_curve(out)
    n = 1
    if args.artifacts:
        art = Path(args.artifacts)
        for curve in sorted(art.glob("curve_*.csv")):
            _emit_training(curve, out)
            n += 1
        for events in sorted(art.glob("events_*.jsonl")):
            _emit_fairness(events, out)
            n += 1
    print(f"emitted {n} plot data file(s) -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sddlab",
        description="same-day delivery pricing and routing laboratory",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, episodes_default: int):
        p.add_argument("--instance", required=True, help="catalog id or JSON path")
        p.add_argument("--customers", default="gaussian",
                       help="spatial model: gaussian|uniform|clusters")
        p.add_argument("--assumption", default="stochastic",
                       help="deterministic|stochastic|misspecified")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", required=True, help="output directory")
        if episodes_default:
            p.add_argument("--episodes", type=int, default=episodes_default)

    p = sub.add_parser("train", help="fit a value model")
    common(p, 1000)
    p.add_argument("--batch", type=int, default=50, help="episodes per refit")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("policy-search", help="grid-search policy parameters")
    common(p, 0)
    p.add_argument("--policy", required=True, choices=[x for x in pricing.POLICIES if x != "opt"])
    p.add_argument("--runs", type=int, default=25, help="episodes per grid point")
    p.add_argument("--grid-alpha", default="0.5:5:0.5")
    p.add_argument("--grid-gamma", default="0:3:0.5")
    p.add_argument("--models", help="directory with trained value models")
    p.set_defaults(func=cmd_policy_search)

    p = sub.add_parser("evaluate", help="run evaluation episodes")
    common(p, 1000)
    p.add_argument("--policy", required=True,
                   help="comma list from: " + ",".join(pricing.POLICIES))
    p.add_argument("--models", help="directory with trained value models")
    p.add_argument("--params-dir", help="directory with policy-search outputs")
    p.add_argument("--alpha", type=float, default=2.0)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--events", action="store_true",
                   help="also write event logs (one JSONL per sweep cell)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="diff two results files")
    p.add_argument("--a", required=True, help="baseline results.csv")
    p.add_argument("--b", required=True, help="comparison results.csv")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("emit-plots", help="derive plot-ready data")
    p.add_argument("--artifacts", help="directory with run artifacts to derive from")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_emit_plots)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
