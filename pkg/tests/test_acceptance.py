"""Acceptance gate: twelve end-to-end checks at fixed tolerances.

Each check records one PASS/FAIL line (echoed in the terminal summary by
conftest) and then asserts. The statistical checks run the full published
protocol: tuned policy parameters via grid search, 1,000-episode value-model
training, and 500-episode paired evaluations with common random numbers.
Session-scoped caching shares the tuned artifacts between checks.
"""

import math

import numpy as np
import pytest
from scipy import stats

from conftest import make_instance, record_acceptance
from test_cli import _tiny_catalog
from test_routing import (
    W_PRICES,
    _random_plan,
    oracle_gain_at,
    oracle_insertions,
)

from sddlab import _kernels
from sddlab.choice import NEXT_DAY, ChoiceModel, option_probabilities, sample_choice
from sddlab.cli import main
from sddlab.core import (
    Customer,
    customer_stop,
    depot_stop,
    load_catalog,
    load_instance,
)
from sddlab.engine import episode_seed_seq, evaluate, run_episode
from sddlab.pricing import PolicyParams, policy_search
from sddlab.routing import feasible_insertions, plan_views
from sddlab.traveltime import kernel_model, model_moments, on_time_probability
from sddlab.vfa import ValueModel, train

SEED_TUNE = 1001
SEED_TRAIN = 2002
SEED_EVAL = 3003

EVAL_EPISODES = 500
TRAIN_EPISODES = 1000
SEARCH_RUNS = 20


def _verdict(ok: bool) -> str:
    return "PASS" if ok else "FAIL"


@pytest.fixture(scope="session")
def tuned_cell():
    """Per instance id: tuned fix/dist parameters, trained model, curve.

    All artifacts are for gaussian customers under the stochastic travel-time
    assumption, the cell the revenue-ordering and training-curve checks use.
    """
    cache = {}

    def get(iid):
        if iid not in cache:
            inst = load_instance(iid)
            fix_p, _ = policy_search(
                "fix", inst, "gaussian", "stochastic",
                runs=SEARCH_RUNS, seed=SEED_TUNE,
            )
            dist_p, _ = policy_search(
                "dist", inst, "gaussian", "stochastic",
                runs=SEARCH_RUNS, seed=SEED_TUNE,
            )
            model, curve = train(
                inst, "gaussian", "stochastic", TRAIN_EPISODES, SEED_TRAIN
            )
            cache[iid] = (inst, fix_p, dist_p, model, curve)
        return cache[iid]

    return get


def test_01_inverse_speed_moment_consistency():
    inst = load_instance(0)
    g_mean, g_std = model_moments(inst.speed_model("gaussian"))
    m_mean, m_std = model_moments(inst.speed_model("mixture"))
    ok = (
        abs(g_mean - 2.25) <= 1e-12
        and abs(g_std - 0.786) <= 1e-12
        and abs(m_mean - 2.25) <= 1e-12
        and abs(m_std - 0.786) <= 2e-3
    )
    record_acceptance(
        f"[acceptance 01] inverse-speed moment consistency: {_verdict(ok)} "
        f"(gaussian {g_mean}/{g_std}, mixture {m_mean}/{m_std:.6f})"
    )
    assert ok, (g_mean, g_std, m_mean, m_std)


def _mc_leg_times(rng, spec, dists, n_samples):
    """Monte-Carlo total travel times: one inverse speed drawn per leg."""
    weights = np.array([w for w, _, _ in spec.components])
    means = np.array([m for _, m, _ in spec.components])
    stds = np.array([s for _, _, s in spec.components])
    n = dists.size
    if len(spec.components) == 1:
        draws = rng.normal(means[0], stds[0], size=(n_samples, n))
    else:
        idx = rng.choice(len(spec.components), size=(n_samples, n), p=weights)
        draws = rng.normal(means[idx], stds[idx])
    return draws @ dists


def test_02_ontime_probability_vs_monte_carlo():
    rng = np.random.default_rng(7007)
    inst = load_instance(0)
    n_samples = 1_000_000
    chunk = 250_000
    worst = 0.0
    for case in range(50):
        spec = inst.speed_model("gaussian" if case % 2 == 0 else "mixture")
        n_legs = int(rng.integers(1, 11))
        dists = rng.uniform(0.3, 8.0, size=n_legs)
        total = float(dists.sum())
        spread = float(np.sqrt((dists * dists).sum()))
        budget = 2.25 * total + float(rng.uniform(-1.5, 1.5)) * 0.786 * spread
        exact = on_time_probability(budget, dists, spec)
        hits = 0
        for _ in range(n_samples // chunk):
            hits += int((_mc_leg_times(rng, spec, dists, chunk) <= budget).sum())
        worst = max(worst, abs(exact - hits / n_samples))
    ok = worst <= 0.005
    record_acceptance(
        f"[acceptance 02] on-time probability vs Monte-Carlo oracle: "
        f"{_verdict(ok)} (worst |diff| {worst:.5f} over 50 leg sets)"
    )
    assert ok, worst


def test_03_family_divergence_at_matched_moments():
    inst = load_instance(0)
    g = on_time_probability(30.0, [10.0], inst.speed_model("gaussian"))
    m = on_time_probability(30.0, [10.0], inst.speed_model("mixture"))
    ok = abs(g - 0.830) <= 0.002 and abs(m - 0.750) <= 0.002
    record_acceptance(
        f"[acceptance 03] matched-moment family divergence: {_verdict(ok)} "
        f"(gaussian path {g:.4f}, mixture path {m:.4f})"
    )
    assert ok, (g, m)


def _grid_best(b, a_on, b_pen, grids):
    """Exhaustive objective maximum over a dense price grid."""
    mesh = np.meshgrid(*grids, indexing="ij")
    exps = [np.exp(b[j] - mesh[j]) for j in range(len(grids))]
    z = 1.0 + sum(exps)
    val = sum(
        exps[j] * (mesh[j] * a_on[j] - b_pen[j]) for j in range(len(grids))
    ) / z
    return float(val.max())


def test_04_price_optimizer_vs_grid_oracle():
    rng = np.random.default_rng(8008)
    grid_sizes = {1: 2001, 2: 201, 3: 51}
    worst_margin = math.inf
    for case in range(100):
        k = 1 + case % 3
        lb = rng.uniform(0.0, 2.0, size=k)
        ub = lb + rng.uniform(1.0, 10.0, size=k)
        b = rng.uniform(0.0, 2.0, size=k)
        pon = rng.uniform(0.3, 1.0, size=k)
        c_miss = float(rng.choice([0.0, 2.0, 5.0]))
        b_pen = c_miss * (1.0 - pon) + rng.uniform(0.0, 5.0, size=k)
        prices, value = _kernels.maximize_quote(
            list(lb), list(ub), list(b), list(pon), list(b_pen)
        )
        assert all(
            lb[j] - 1e-12 <= prices[j] <= ub[j] + 1e-12 for j in range(k)
        ), case
        grids = [np.linspace(lb[j], ub[j], grid_sizes[k]) for j in range(k)]
        worst_margin = min(worst_margin, value - _grid_best(b, pon, b_pen, grids))
    p_single, _ = _kernels.maximize_quote([0.0], [20.0], [1.0], [1.0], [0.0])
    ok = worst_margin >= -1e-3 and abs(p_single[0] - 1.569) <= 0.01
    record_acceptance(
        f"[acceptance 04] price optimizer vs grid oracle: {_verdict(ok)} "
        f"(worst margin {worst_margin:.2e}, single-option price "
        f"{p_single[0]:.4f})"
    )
    assert ok, (worst_margin, p_single)


def test_05_choice_probabilities_and_sampler():
    model = ChoiceModel()
    free = {60.0: 0.0, 120.0: 0.0, 240.0: 0.0}
    probs = option_probabilities(model, free)
    keys = [60.0, 120.0, 240.0, NEXT_DAY]
    wanted = (0.3632, 0.2829, 0.2203, 0.1336)
    prob_dev = max(abs(probs[k] - w) for k, w in zip(keys, wanted))

    n = 1_000_000
    rng = np.random.default_rng(505)
    counts = dict.fromkeys(keys, 0)
    for _ in range(n):
        counts[sample_choice(model, free, rng)] += 1
    worst_z = max(
        abs(counts[k] - n * probs[k]) / math.sqrt(n * probs[k] * (1 - probs[k]))
        for k in keys
    )
    ok = prob_dev <= 1e-4 and worst_z <= 3.0
    record_acceptance(
        f"[acceptance 05] choice probabilities and sampler: {_verdict(ok)} "
        f"(max prob dev {prob_dev:.2e}, max sampler z {worst_z:.2f})"
    )
    assert ok, (prob_dev, worst_z)


def test_06_insertion_oracle_equivalence():
    rng = np.random.default_rng(606)
    base = load_instance(0)
    families = ("gaussian", "mixture", "deterministic")
    mismatches = []
    for case in range(200):
        spec = base.speed_model(families[case % 3])
        model = kernel_model(spec)
        now = float(rng.uniform(0.0, 400.0))
        inst = make_instance(base, miss_penalty=float(rng.choice([0.0, 2.0])))
        plan = _random_plan(rng, now, int(rng.integers(1, 4)))
        cust = Customer(
            customer_id=1,
            t_request=now,
            x=float(rng.uniform(-10, 10)),
            y=float(rng.uniform(-10, 10)),
        )
        views = plan_views(plan, now, inst, model)
        got = feasible_insertions(views, cust, now, inst, model, W_PRICES)
        want = oracle_insertions(plan, cust, now, inst, spec, W_PRICES)
        # Exact ties between positions or vehicles are common (gains equal
        # the full option price when everything is safely on time) and the
        # two sides may break them differently by one ulp of accumulation
        # order, so equivalence means: same feasible deadline set, and the
        # chosen insertion is itself an enumeration maximizer within 1e-9.
        same = set(got) == set(want)
        if same:
            for d, cand in got.items():
                best_gain = want[d][2]
                recheck = oracle_gain_at(
                    plan.vehicles[cand.vehicle], now, inst, spec,
                    cust, now + d, W_PRICES[d], cand.walk_pos,
                )
                if (
                    recheck is None
                    or abs(cand.delta_revenue - best_gain) > 1e-9
                    or abs(recheck - best_gain) > 1e-9
                ):
                    same = False
                    break
        if not same:
            mismatches.append(case)
    ok = not mismatches
    record_acceptance(
        f"[acceptance 06] cheapest insertion vs exhaustive enumeration: "
        f"{_verdict(ok)} (200 states, {len(mismatches)} mismatches)"
    )
    assert ok, mismatches


def test_07_accounting_identities_hold_everywhere():
    catalog = load_catalog()
    ids = sorted(catalog)
    policies = ("fix", "dist", "opp", "opt", "opt-basis")
    assumptions = ("stochastic", "deterministic", "misspecified")
    spatial = ("gaussian", "uniform", "clusters")
    params = PolicyParams(alpha=2.0, gamma=1.0)
    zero_model = ValueModel.zero()
    rng = np.random.default_rng(4004)
    violations = 0
    for e in range(1000):
        inst = catalog[ids[int(rng.integers(len(ids)))]]
        policy = policies[int(rng.integers(len(policies)))]
        assumption = assumptions[int(rng.integers(len(assumptions)))]
        customers = spatial[int(rng.integers(len(spatial)))]
        needs_model = policy in ("opp", "opt", "opt-basis")
        res = run_episode(
            inst, policy, params, assumption, customers,
            episode_seed_seq(4004, e),
            value_model=zero_model if needs_model else None,
        )
        m = res.metrics
        recs = res.records
        by_status = {"served": 0, "missed": 0, "declined": 0, "rejected": 0}
        for r in recs.values():
            by_status[r["status"]] += 1
        resummed = 0.0
        for cid in sorted(recs):
            resummed += recs[cid]["amount"]
        price_sum = sum(
            r["price"] for r in recs.values() if r["status"] == "served"
        )
        good = (
            m.accepted == m.served + m.missed
            and m.total_requests == m.accepted + m.declined + m.rejected
            and m.total_requests == len(recs)
            and by_status["served"] == m.served
            and by_status["missed"] == m.missed
            and by_status["declined"] == m.declined
            and by_status["rejected"] == m.rejected
            and resummed == m.revenue
            and abs(price_sum - inst.miss_penalty * m.missed - m.revenue) <= 1e-9
        )
        if not good:
            violations += 1
    ok = violations == 0
    record_acceptance(
        f"[acceptance 07] accounting identities over 1,000 episodes: "
        f"{_verdict(ok)} ({violations} violations)"
    )
    assert ok, violations


def test_08_fixed_policy_benchmark_level():
    inst = load_instance(0)
    tuned, _ = policy_search(
        "fix", inst, "gaussian", "deterministic", runs=SEARCH_RUNS, seed=5005
    )
    _, summary = evaluate(
        inst, "fix", tuned, "deterministic", "gaussian", EVAL_EPISODES, 6006
    )
    revenue = summary["revenue_mean"]
    missed = summary["missed_mean"]
    ok = abs(revenue - 35.32) <= 0.20 * 35.32 and abs(missed - 0.38) <= 0.5
    record_acceptance(
        f"[acceptance 08] fixed-price benchmark level: {_verdict(ok)} "
        f"(revenue {revenue:.2f} vs 35.32 +/-20%, missed {missed:.2f} "
        f"vs 0.38 +/-0.5)"
    )
    assert ok, (revenue, missed)


def test_09_stochastic_assumption_reduces_missed():
    inst = load_instance(14)
    basis, _ = policy_search(
        "dist", inst, "uniform", "stochastic", runs=SEARCH_RUNS, seed=SEED_TUNE
    )
    model, _ = train(inst, "uniform", "stochastic", TRAIN_EPISODES, SEED_TRAIN)
    det_metrics, _ = evaluate(
        inst, "opt-basis", basis, "deterministic", "uniform",
        EVAL_EPISODES, SEED_EVAL, value_model=model,
    )
    sto_metrics, _ = evaluate(
        inst, "opt-basis", basis, "stochastic", "uniform",
        EVAL_EPISODES, SEED_EVAL, value_model=model,
    )
    det = np.array([m.missed for m in det_metrics], dtype=float)
    sto = np.array([m.missed for m in sto_metrics], dtype=float)
    reduction = 1.0 - sto.mean() / det.mean()
    p = stats.ttest_rel(det, sto, alternative="greater").pvalue
    ok = reduction >= 0.20 and p < 0.05
    record_acceptance(
        f"[acceptance 09] stochastic assumption cuts missed deliveries: "
        f"{_verdict(ok)} (missed {det.mean():.2f} -> {sto.mean():.2f}, "
        f"reduction {reduction:.0%}, p {p:.2e})"
    )
    assert ok, (reduction, p)


def test_10_value_policy_revenue_ordering(tuned_cell):
    pooled = {"fix": [], "dist": [], "opt-basis": []}
    for iid in (6, 8, 10):
        inst, fix_p, dist_p, model, _ = tuned_cell(iid)
        runs = {
            "fix": evaluate(
                inst, "fix", fix_p, "stochastic", "gaussian",
                EVAL_EPISODES, SEED_EVAL,
            ),
            "dist": evaluate(
                inst, "dist", dist_p, "stochastic", "gaussian",
                EVAL_EPISODES, SEED_EVAL,
            ),
            "opt-basis": evaluate(
                inst, "opt-basis", dist_p, "stochastic", "gaussian",
                EVAL_EPISODES, SEED_EVAL, value_model=model,
            ),
        }
        for name, (metrics, _summary) in runs.items():
            pooled[name].extend(m.revenue for m in metrics)
    fix = np.array(pooled["fix"])
    dist = np.array(pooled["dist"])
    optb = np.array(pooled["opt-basis"])
    p_fix = stats.ttest_rel(optb, fix, alternative="greater").pvalue
    p_dist = stats.ttest_rel(optb, dist, alternative="greater").pvalue
    ok = (
        optb.mean() > fix.mean()
        and optb.mean() > dist.mean()
        and p_fix < 0.05
        and p_dist < 0.05
    )
    record_acceptance(
        f"[acceptance 10] anticipative pricing revenue ordering: "
        f"{_verdict(ok)} (opt-basis {optb.mean():.2f} > dist {dist.mean():.2f} "
        f"p {p_dist:.2e}; > fix {fix.mean():.2f} p {p_fix:.2e})"
    )
    assert ok, (fix.mean(), dist.mean(), optb.mean(), p_fix, p_dist)


def test_11_training_curve_plateaus(tuned_cell):
    _, _, _, _, curve = tuned_cell(6)
    assert len(curve) == TRAIN_EPISODES
    running = np.array([row[2] for row in curve[-500:]], dtype=float)
    x = np.arange(running.size, dtype=float)
    slope = float(np.polyfit(x, running, 1)[0])
    final = float(running[-1])
    drift = slope * (running.size - 1)
    allowance = 0.05 * final
    ok = drift >= -allowance
    record_acceptance(
        f"[acceptance 11] training curve plateaus: {_verdict(ok)} "
        f"(final-half drift {drift:+.2f} vs allowance -{allowance:.2f}, "
        f"final running avg {final:.2f})"
    )
    assert ok, (drift, allowance)


def test_12_cli_rerun_is_byte_identical(tmp_path):
    instance = _tiny_catalog(tmp_path)
    roots = []
    for name in ("first", "second"):
        root = tmp_path / name
        art = root / "artifacts"
        plots = root / "plots"
        assert main([
            "train", "--instance", instance, "--customers", "gaussian",
            "--episodes", "4", "--batch", "2", "--seed", "11",
            "--out", str(art),
        ]) == 0
        assert main([
            "policy-search", "--instance", instance, "--policy", "fix",
            "--runs", "2", "--grid-alpha", "1:3:1", "--seed", "12",
            "--out", str(art),
        ]) == 0
        assert main([
            "evaluate", "--instance", instance, "--policy", "fix,opp",
            "--models", str(art), "--episodes", "2", "--seed", "13",
            "--events", "--out", str(art),
        ]) == 0
        assert main([
            "compare", "--a", str(art / "results.csv"),
            "--b", str(art / "results.csv"),
            "--out", str(root / "delta.csv"),
        ]) == 0
        assert main([
            "emit-plots", "--artifacts", str(art), "--out", str(plots),
        ]) == 0
        roots.append(root)

    rel_a = sorted(p.relative_to(roots[0]) for p in roots[0].rglob("*") if p.is_file())
    rel_b = sorted(p.relative_to(roots[1]) for p in roots[1].rglob("*") if p.is_file())
    ok = rel_a == rel_b and all(
        (roots[0] / rel).read_bytes() == (roots[1] / rel).read_bytes()
        for rel in rel_a
    )
    record_acceptance(
        f"[acceptance 12] command reruns byte-identical: {_verdict(ok)} "
        f"({len(rel_a)} files compared)"
    )
    assert ok
