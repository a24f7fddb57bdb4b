"""Pure-Python kernel lane.

Mirror of the compiled lane in `_ckernels.pyx`: identical algorithms with the
identical floating-point operation order, so both lanes produce bit-identical
results (the extension is compiled with -ffp-contract=off and both lanes call
the same libm erfc/exp/sqrt). Everything here is scalar Python on purpose; the
compiled lane is the performance lane, this one is the readable reference and
the fallback when the extension is unavailable.

Model encoding shared by all kernels:
    kind: 0 deterministic, 1 gaussian, 2 mixture
    mu, var: mean and variance of the inverse speed (min/km, min^2/km^2)
    weights/means/stds: per-component arrays (length 1 for non-mixtures)
    mc: (n_samples, n_legs) inverse-speed table for Monte Carlo fallback,
        shape (0, 0) when unavailable

Probability conventions: a negative time budget yields 0.0; zero-variance
indicators are strict (boundary counts late), matching the deterministic
planning rule.
"""

import math

SQRT1_2 = 0.7071067811865476
ENUM_CAP = 1024  # component assignments; 2-component mixtures: 10 legs
MAX_WALK_LEGS = 512
MC_SMAX = 4096


def norm_cdf(x):
    """Standard normal CDF via erfc."""
    return 0.5 * math.erfc(-x * SQRT1_2)


class _TravelSum:
    """Distribution state of the running travel-time sum of a walk.

    Supports the three model kinds; for mixtures it keeps the exact
    component-assignment enumeration while it fits within ENUM_CAP terms and
    degrades to the common-random-number Monte Carlo table (or, past the
    table width, a moment-matched normal) afterwards.
    """

    def __init__(self, kind, mu, var, weights, means, stds, mc):
        self.kind = kind
        self.mu = mu
        self.var = var
        self.weights = weights
        self.means = means
        self.stds = stds
        self.mc = mc
        self.mc_s = mc.shape[0] if mc is not None else 0
        if self.mc_s > MC_SMAX:
            self.mc_s = 0
        self.mc_l = mc.shape[1] if mc is not None else 0
        self.nlegs = 0
        self.sumd = 0.0
        self.sumd2 = 0.0
        self.legs = []
        k = len(weights)
        self.k = k
        self.enum_active = kind == 2
        self.enum_w = [1.0]
        self.enum_m = [0.0]
        self.enum_v = [0.0]
        self.mc_active = False
        self.mc_t = None

    def push(self, d):
        d = float(d)
        self.legs.append(d)
        self.nlegs += 1
        self.sumd += d
        self.sumd2 += d * d
        if self.kind != 2:
            return
        if self.enum_active:
            if len(self.enum_w) * self.k <= ENUM_CAP:
                w0, m0, v0 = self.enum_w, self.enum_m, self.enum_v
                nw, nm, nv = [], [], []
                for a in range(len(w0)):
                    wa, ma, va = w0[a], m0[a], v0[a]
                    for c in range(self.k):
                        sc = float(self.stds[c])
                        nw.append(wa * float(self.weights[c]))
                        nm.append(ma + d * float(self.means[c]))
                        nv.append(va + d * d * (sc * sc))
                self.enum_w, self.enum_m, self.enum_v = nw, nm, nv
            else:
                self.enum_active = False
                if self.mc_s > 0 and self.nlegs <= self.mc_l:
                    self.mc_active = True
                    t = [0.0] * self.mc_s
                    for s in range(self.mc_s):
                        acc = 0.0
                        for i in range(self.nlegs):
                            acc += self.legs[i] * float(self.mc[s, i])
                        t[s] = acc
                    self.mc_t = t
        elif self.mc_active:
            if self.nlegs <= self.mc_l:
                col = self.nlegs - 1
                t = self.mc_t
                for s in range(self.mc_s):
                    t[s] += d * float(self.mc[s, col])
            else:
                self.mc_active = False

    def prob_within(self, budget):
        """P(sum of leg times <= budget) under the assumed model."""
        if budget < 0.0:
            return 0.0
        if self.nlegs == 0:
            return 1.0
        if self.kind == 0:
            return 1.0 if self.sumd * self.mu < budget else 0.0
        if self.kind == 1:
            sd2 = self.sumd2 * self.var
            if sd2 <= 0.0:
                return 1.0 if self.sumd * self.mu < budget else 0.0
            return norm_cdf((budget - self.sumd * self.mu) / math.sqrt(sd2))
        if self.enum_active:
            p = 0.0
            for a in range(len(self.enum_w)):
                va = self.enum_v[a]
                if va > 0.0:
                    p += self.enum_w[a] * norm_cdf(
                        (budget - self.enum_m[a]) / math.sqrt(va)
                    )
                elif self.enum_m[a] < budget:
                    p += self.enum_w[a]
            return p
        if self.mc_active:
            cnt = 0
            for s in range(self.mc_s):
                if self.mc_t[s] <= budget:
                    cnt += 1
            return cnt / self.mc_s
        sd2 = self.sumd2 * self.var
        if sd2 <= 0.0:
            return 1.0 if self.sumd * self.mu < budget else 0.0
        return norm_cdf((budget - self.sumd * self.mu) / math.sqrt(sd2))


def ontime_probability(budget, dists, kind, mu, var, weights, means, stds, mc):
    """P(sum_i d_i X_i <= budget) for i.i.d. inverse speeds X_i."""
    budget = float(budget)
    state = _TravelSum(kind, mu, var, weights, means, stds, mc)
    for d in dists:
        state.push(d)
    return state.prob_within(budget)


def eval_walk(
    cx, cy, ct,
    xs, ys, kinds, deadlines, prices, n,
    inj_pos, inj_x, inj_y, inj_deadline, inj_price,
    depot_x, depot_y,
    service, c_miss,
    kind, mu, var, weights, means, stds, mc,
    out_mean=None, out_var=None, out_pon=None,
):
    """Walk a stop sequence, optionally with one stop injected at inj_pos.

    Stops are visited from the cursor (cx, cy) departing at ct; every stop
    costs `service` minutes after arrival. inj_pos == -1 walks the sequence
    as-is; inj_pos == n appends the injected stop plus a synthetic depot
    return. Arrival annotations land in the out arrays (walk index order)
    when given.

    Returns (revenue, final_mean, final_var, slack_sum, slack_cnt, pon_prod,
    dist_sum, n_cust, inj_pon, inj_mean, inj_var).
    """
    state = _TravelSum(kind, mu, var, weights, means, stds, mc)
    n_total = n
    if inj_pos >= 0:
        n_total += 1
        if inj_pos == n:
            n_total += 1  # synthetic depot return after an appended stop

    px, py, t0 = float(cx), float(cy), float(ct)
    revenue = 0.0
    slack_sum = 0.0
    slack_cnt = 0
    pon_prod = 1.0
    dist_sum = 0.0
    n_cust = 0
    inj_pon = -1.0
    inj_mean = 0.0
    inj_var = 0.0
    final_mean = t0
    final_var = 0.0

    for w in range(n_total):
        if inj_pos < 0 or w < inj_pos:
            sx, sy = float(xs[w]), float(ys[w])
            is_cust = kinds[w] != 0
            dl, price = float(deadlines[w]), float(prices[w])
        elif w == inj_pos:
            sx, sy = float(inj_x), float(inj_y)
            is_cust = True
            dl, price = float(inj_deadline), float(inj_price)
        elif inj_pos == n and w == n + 1:
            sx, sy = float(depot_x), float(depot_y)
            is_cust = False
            dl, price = 0.0, 0.0
        else:
            sx, sy = float(xs[w - 1]), float(ys[w - 1])
            is_cust = kinds[w - 1] != 0
            dl, price = float(deadlines[w - 1]), float(prices[w - 1])

        ddx = px - sx
        ddy = py - sy
        d = math.sqrt(ddx * ddx + ddy * ddy)
        state.push(d)
        dist_sum += d
        mean_w = t0 + service * w + state.sumd * state.mu
        var_w = state.sumd2 * state.var
        pon = -1.0
        if is_cust:
            budget = dl - t0 - service * w
            pon = state.prob_within(budget)
            revenue += price * pon - c_miss * (1.0 - pon)
            slack_sum += dl - mean_w
            slack_cnt += 1
            pon_prod *= pon
            n_cust += 1
            if w == inj_pos:
                inj_pon = pon
                inj_mean = mean_w
                inj_var = var_w
        if out_mean is not None:
            out_mean[w] = mean_w
            out_var[w] = var_w
            out_pon[w] = pon
        final_mean = mean_w
        final_var = var_w
        px, py = sx, sy

    return (
        revenue, final_mean, final_var, slack_sum, slack_cnt,
        pon_prod, dist_sum, n_cust, inj_pon, inj_mean, inj_var,
    )


def best_insertion(
    cx, cy, ct,
    xs, ys, kinds, deadlines, prices, n,
    lo, inj_x, inj_y, inj_deadline, inj_price,
    depot_x, depot_y,
    service, c_miss, shift_end,
    kind, mu, var, weights, means, stds, mc,
):
    """Best feasible insertion position for one vehicle's walk.

    Scans positions lo..n ascending, keeps the first strict revenue maximum
    among positions whose expected depot return stays within shift_end.
    Returns the eval_walk tuple of the winner prefixed with its position;
    position -1 means no position is return-feasible.
    """
    best_pos = -1
    best_rev = 0.0
    for pos in range(lo, n + 1):
        res = eval_walk(
            cx, cy, ct, xs, ys, kinds, deadlines, prices, n,
            pos, inj_x, inj_y, inj_deadline, inj_price,
            depot_x, depot_y, service, c_miss,
            kind, mu, var, weights, means, stds, mc,
        )
        if res[1] > shift_end:
            continue
        if best_pos < 0 or res[0] > best_rev:
            best_pos = pos
            best_rev = res[0]
    if best_pos < 0:
        return (-1, 0.0, 0.0, 0.0, 0.0, 0, 1.0, 0.0, 0, -1.0, 0.0, 0.0)
    res = eval_walk(
        cx, cy, ct, xs, ys, kinds, deadlines, prices, n,
        best_pos, inj_x, inj_y, inj_deadline, inj_price,
        depot_x, depot_y, service, c_miss,
        kind, mu, var, weights, means, stds, mc,
    )
    return (best_pos,) + res


def _quote_value(k, b, a_on, b_pen, p):
    """Expected immediate net reward of a price vector under logit choice."""
    se = 1.0  # opt-out utility exp(0)
    num = 0.0
    for j in range(k):
        e = math.exp(float(b[j]) - p[j])
        se += e
        num += e * (p[j] * float(a_on[j]) - float(b_pen[j]))
    return num / se


def _quote_grad(k, b, a_on, b_pen, p, g):
    for j in range(k):
        pj = p[j]
        h = 1e-6 * (abs(pj) if abs(pj) > 1.0 else 1.0)
        p[j] = pj + h
        f1 = _quote_value(k, b, a_on, b_pen, p)
        p[j] = pj - h
        f2 = _quote_value(k, b, a_on, b_pen, p)
        p[j] = pj
        g[j] = (f1 - f2) / (2.0 * h)


def _project(k, lb, ub, p):
    for j in range(k):
        if p[j] < float(lb[j]):
            p[j] = float(lb[j])
        elif p[j] > float(ub[j]):
            p[j] = float(ub[j])


def _quote_ascent(k, lb, ub, b, a_on, b_pen, x):
    """Projected gradient ascent with Barzilai-Borwein steps + Armijo."""
    _project(k, lb, ub, x)
    g = [0.0] * k
    gn = [0.0] * k
    xn = [0.0] * k
    fx = _quote_value(k, b, a_on, b_pen, x)
    _quote_grad(k, b, a_on, b_pen, x, g)
    gmax = 0.0
    for j in range(k):
        if abs(g[j]) > gmax:
            gmax = abs(g[j])
    alpha = 1.0 if gmax <= 1e-12 else 1.0 / gmax
    for _ in range(200):
        # projected-gradient residual as the stationarity measure
        resid = 0.0
        for j in range(k):
            t = x[j] + g[j]
            if t < float(lb[j]):
                t = float(lb[j])
            elif t > float(ub[j]):
                t = float(ub[j])
            if abs(t - x[j]) > resid:
                resid = abs(t - x[j])
        if resid < 1e-9:
            break
        t_step = alpha
        accepted = False
        fn = fx
        for _bt in range(60):
            for j in range(k):
                xn[j] = x[j] + t_step * g[j]
            _project(k, lb, ub, xn)
            gd = 0.0
            for j in range(k):
                gd += g[j] * (xn[j] - x[j])
            if gd <= 1e-18:
                break  # step fully blocked by the box
            fn = _quote_value(k, b, a_on, b_pen, xn)
            if fn >= fx + 1e-4 * gd:
                accepted = True
                break
            t_step *= 0.5
        if not accepted:
            break
        _quote_grad(k, b, a_on, b_pen, xn, gn)
        ss = 0.0
        sy = 0.0
        for j in range(k):
            s = xn[j] - x[j]
            y = g[j] - gn[j]  # ascent: curvature pair uses -grad differences
            ss += s * s
            sy += s * y
        alpha = ss / sy if sy > 1e-16 else alpha * 2.0
        if alpha < 1e-10:
            alpha = 1e-10
        elif alpha > 1e8:
            alpha = 1e8
        for j in range(k):
            x[j] = xn[j]
            g[j] = gn[j]
        fx = fn
    return fx


def maximize_quote(lb, ub, b, a_on, b_pen):
    """Maximize expected immediate net reward over the price box.

    Multi-start projected quasi-Newton: one start per box corner plus the
    midpoint; ties keep the earliest start. Returns (prices list, value).
    """
    k = len(lb)
    if k == 0:
        raise ValueError("no feasible options to price")
    if k > 16:
        raise ValueError("too many options")
    best_f = -math.inf
    best_x = None
    x = [0.0] * k
    for mask in range(1 << k):
        for j in range(k):
            x[j] = float(ub[j]) if (mask >> j) & 1 else float(lb[j])
        f = _quote_ascent(k, lb, ub, b, a_on, b_pen, x)
        if f > best_f:
            best_f = f
            best_x = list(x)
    for j in range(k):
        x[j] = 0.5 * (float(lb[j]) + float(ub[j]))
    f = _quote_ascent(k, lb, ub, b, a_on, b_pen, x)
    if f > best_f:
        best_f = f
        best_x = list(x)
    return best_x, best_f
