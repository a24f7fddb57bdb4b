# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernel lane.

Bit-for-bit mirror of `pykernels.py`: identical algorithms, identical
floating-point operation order, same libm calls. Compiled with
-ffp-contract=off so no FMA contraction changes results. Keep the two files
in sync; the parity test suite compares them exhaustively.
"""

from libc.math cimport erfc, exp, fabs, sqrt
from libc.stdlib cimport free, malloc

cdef double SQRT1_2 = 0.7071067811865476
cdef int ENUM_CAP = 1024
cdef int MAX_LEGS = 512
cdef int MC_SMAX = 4096

MAX_WALK_LEGS = 512  # python-visible mirror of MAX_LEGS


cdef inline double _norm_cdf(double x) nogil:
    return 0.5 * erfc(-x * SQRT1_2)


def norm_cdf(double x):
    """Standard normal CDF via erfc."""
    return _norm_cdf(x)


cdef struct TS:
    int kind
    int k
    int nlegs
    double mu
    double var
    double sumd
    double sumd2
    bint enum_active
    bint mc_active
    int enum_n
    int mc_s
    int mc_l
    double* legs
    double* ew
    double* em
    double* ev
    double* mct
    const double* weights
    const double* means
    const double* stds
    const double* mc


cdef inline void ts_init(TS* ts, int kind, double mu, double var, int k,
                         const double* weights, const double* means,
                         const double* stds, const double* mc,
                         int mc_s, int mc_l,
                         double* legs, double* ew, double* em, double* ev,
                         double* mct) nogil:
    ts.kind = kind
    ts.k = k
    ts.nlegs = 0
    ts.mu = mu
    ts.var = var
    ts.sumd = 0.0
    ts.sumd2 = 0.0
    ts.enum_active = kind == 2
    ts.mc_active = False
    ts.enum_n = 1
    ts.mc_s = mc_s if mc_s <= MC_SMAX else 0
    ts.mc_l = mc_l
    ts.legs = legs
    ts.ew = ew
    ts.em = em
    ts.ev = ev
    ts.mct = mct
    ts.weights = weights
    ts.means = means
    ts.stds = stds
    ts.mc = mc
    ew[0] = 1.0
    em[0] = 0.0
    ev[0] = 0.0


cdef inline void ts_push(TS* ts, double d) nogil:
    cdef int a, c, s, i, col
    cdef double wa, ma, va, sc, acc
    if ts.nlegs < MAX_LEGS:
        ts.legs[ts.nlegs] = d
    ts.nlegs += 1
    ts.sumd += d
    ts.sumd2 += d * d
    if ts.kind != 2:
        return
    if ts.enum_active:
        if ts.enum_n * ts.k <= ENUM_CAP:
            # in-place backward fill: targets of iteration a are all > a
            # except a == 0, which is processed last
            for a in range(ts.enum_n - 1, -1, -1):
                wa = ts.ew[a]
                ma = ts.em[a]
                va = ts.ev[a]
                for c in range(ts.k - 1, -1, -1):
                    sc = ts.stds[c]
                    ts.ew[a * ts.k + c] = wa * ts.weights[c]
                    ts.em[a * ts.k + c] = ma + d * ts.means[c]
                    ts.ev[a * ts.k + c] = va + d * d * (sc * sc)
            ts.enum_n *= ts.k
        else:
            ts.enum_active = False
            if ts.mc_s > 0 and ts.nlegs <= ts.mc_l and ts.nlegs <= MAX_LEGS:
                ts.mc_active = True
                for s in range(ts.mc_s):
                    acc = 0.0
                    for i in range(ts.nlegs):
                        acc += ts.legs[i] * ts.mc[s * ts.mc_l + i]
                    ts.mct[s] = acc
    elif ts.mc_active:
        if ts.nlegs <= ts.mc_l:
            col = ts.nlegs - 1
            for s in range(ts.mc_s):
                ts.mct[s] += d * ts.mc[s * ts.mc_l + col]
        else:
            ts.mc_active = False


cdef inline double ts_prob(TS* ts, double budget) nogil:
    cdef int a, s, cnt
    cdef double p, va, sd2
    if budget < 0.0:
        return 0.0
    if ts.nlegs == 0:
        return 1.0
    if ts.kind == 0:
        return 1.0 if ts.sumd * ts.mu < budget else 0.0
    if ts.kind == 1:
        sd2 = ts.sumd2 * ts.var
        if sd2 <= 0.0:
            return 1.0 if ts.sumd * ts.mu < budget else 0.0
        return _norm_cdf((budget - ts.sumd * ts.mu) / sqrt(sd2))
    if ts.enum_active:
        p = 0.0
        for a in range(ts.enum_n):
            va = ts.ev[a]
            if va > 0.0:
                p += ts.ew[a] * _norm_cdf((budget - ts.em[a]) / sqrt(va))
            elif ts.em[a] < budget:
                p += ts.ew[a]
        return p
    if ts.mc_active:
        cnt = 0
        for s in range(ts.mc_s):
            if ts.mct[s] <= budget:
                cnt += 1
        return (<double> cnt) / (<double> ts.mc_s)
    sd2 = ts.sumd2 * ts.var
    if sd2 <= 0.0:
        return 1.0 if ts.sumd * ts.mu < budget else 0.0
    return _norm_cdf((budget - ts.sumd * ts.mu) / sqrt(sd2))


def ontime_probability(double budget, double[::1] dists,
                       int kind, double mu, double var,
                       double[::1] weights, double[::1] means,
                       double[::1] stds, double[:, ::1] mc):
    """P(sum_i d_i X_i <= budget) for i.i.d. inverse speeds X_i."""
    cdef double legs[512]
    cdef double ew[1024]
    cdef double em[1024]
    cdef double ev[1024]
    cdef double* mct = <double*> malloc(MC_SMAX * sizeof(double))
    if mct == NULL:
        raise MemoryError()
    cdef TS ts
    cdef int mc_s = mc.shape[0]
    cdef int mc_l = mc.shape[1]
    cdef const double* mcp = NULL
    cdef int i
    if mc_s > 0:
        mcp = &mc[0, 0]
    try:
        ts_init(&ts, kind, mu, var, weights.shape[0], &weights[0], &means[0],
                &stds[0], mcp, mc_s, mc_l, legs, ew, em, ev, mct)
        for i in range(dists.shape[0]):
            ts_push(&ts, dists[i])
        return ts_prob(&ts, budget)
    finally:
        free(mct)


cdef struct WalkRes:
    double revenue
    double final_mean
    double final_var
    double slack_sum
    int slack_cnt
    double pon_prod
    double dist_sum
    int n_cust
    double inj_pon
    double inj_mean
    double inj_var


cdef int _walk_impl(double cx, double cy, double ct,
                    double[::1] xs, double[::1] ys, int[::1] kinds,
                    double[::1] deadlines, double[::1] prices, int n,
                    int inj_pos, double inj_x, double inj_y,
                    double inj_deadline, double inj_price,
                    double depot_x, double depot_y,
                    double service, double c_miss,
                    int kind, double mu, double var,
                    double[::1] weights, double[::1] means, double[::1] stds,
                    double[:, ::1] mc,
                    double* out_mean, double* out_var, double* out_pon,
                    WalkRes* res) except -1:
    cdef double legs[512]
    cdef double ew[1024]
    cdef double em[1024]
    cdef double ev[1024]
    cdef double* mct = <double*> malloc(MC_SMAX * sizeof(double))
    if mct == NULL:
        raise MemoryError()
    cdef TS ts
    cdef int mc_s = mc.shape[0]
    cdef int mc_l = mc.shape[1]
    cdef const double* mcp = NULL
    cdef int n_total, w
    cdef bint is_cust
    cdef double sx, sy, dl, price, ddx, ddy, d, mean_w, var_w, pon, budget
    cdef double px = cx
    cdef double py = cy
    cdef double t0 = ct
    if mc_s > 0:
        mcp = &mc[0, 0]
    try:
        ts_init(&ts, kind, mu, var, weights.shape[0], &weights[0], &means[0],
                &stds[0], mcp, mc_s, mc_l, legs, ew, em, ev, mct)
        n_total = n
        if inj_pos >= 0:
            n_total += 1
            if inj_pos == n:
                n_total += 1  # synthetic depot return after an appended stop
        res.revenue = 0.0
        res.slack_sum = 0.0
        res.slack_cnt = 0
        res.pon_prod = 1.0
        res.dist_sum = 0.0
        res.n_cust = 0
        res.inj_pon = -1.0
        res.inj_mean = 0.0
        res.inj_var = 0.0
        res.final_mean = t0
        res.final_var = 0.0
        for w in range(n_total):
            if inj_pos < 0 or w < inj_pos:
                sx = xs[w]
                sy = ys[w]
                is_cust = kinds[w] != 0
                dl = deadlines[w]
                price = prices[w]
            elif w == inj_pos:
                sx = inj_x
                sy = inj_y
                is_cust = True
                dl = inj_deadline
                price = inj_price
            elif inj_pos == n and w == n + 1:
                sx = depot_x
                sy = depot_y
                is_cust = False
                dl = 0.0
                price = 0.0
            else:
                sx = xs[w - 1]
                sy = ys[w - 1]
                is_cust = kinds[w - 1] != 0
                dl = deadlines[w - 1]
                price = prices[w - 1]
            ddx = px - sx
            ddy = py - sy
            d = sqrt(ddx * ddx + ddy * ddy)
            ts_push(&ts, d)
            res.dist_sum += d
            mean_w = t0 + service * w + ts.sumd * ts.mu
            var_w = ts.sumd2 * ts.var
            pon = -1.0
            if is_cust:
                budget = dl - t0 - service * w
                pon = ts_prob(&ts, budget)
                res.revenue += price * pon - c_miss * (1.0 - pon)
                res.slack_sum += dl - mean_w
                res.slack_cnt += 1
                res.pon_prod *= pon
                res.n_cust += 1
                if w == inj_pos:
                    res.inj_pon = pon
                    res.inj_mean = mean_w
                    res.inj_var = var_w
            if out_mean != NULL:
                out_mean[w] = mean_w
                out_var[w] = var_w
                out_pon[w] = pon
            res.final_mean = mean_w
            res.final_var = var_w
            px = sx
            py = sy
        return 0
    finally:
        free(mct)


def eval_walk(double cx, double cy, double ct,
              double[::1] xs, double[::1] ys, int[::1] kinds,
              double[::1] deadlines, double[::1] prices, int n,
              int inj_pos, double inj_x, double inj_y,
              double inj_deadline, double inj_price,
              double depot_x, double depot_y,
              double service, double c_miss,
              int kind, double mu, double var,
              double[::1] weights, double[::1] means, double[::1] stds,
              double[:, ::1] mc,
              out_mean=None, out_var=None, out_pon=None):
    """Walk a stop sequence, optionally with one stop injected at inj_pos.

    See the pure lane for full semantics; the two implementations agree
    bit-for-bit.
    """
    cdef WalkRes res
    cdef double[::1] om
    cdef double[::1] ov
    cdef double[::1] op
    cdef double* pm = NULL
    cdef double* pv = NULL
    cdef double* pp = NULL
    if out_mean is not None:
        om = out_mean
        ov = out_var
        op = out_pon
        if om.shape[0] > 0:
            pm = &om[0]
            pv = &ov[0]
            pp = &op[0]
    _walk_impl(cx, cy, ct, xs, ys, kinds, deadlines, prices, n,
               inj_pos, inj_x, inj_y, inj_deadline, inj_price,
               depot_x, depot_y, service, c_miss,
               kind, mu, var, weights, means, stds, mc,
               pm, pv, pp, &res)
    return (res.revenue, res.final_mean, res.final_var, res.slack_sum,
            res.slack_cnt, res.pon_prod, res.dist_sum, res.n_cust,
            res.inj_pon, res.inj_mean, res.inj_var)


def best_insertion(double cx, double cy, double ct,
                   double[::1] xs, double[::1] ys, int[::1] kinds,
                   double[::1] deadlines, double[::1] prices, int n,
                   int lo, double inj_x, double inj_y,
                   double inj_deadline, double inj_price,
                   double depot_x, double depot_y,
                   double service, double c_miss, double shift_end,
                   int kind, double mu, double var,
                   double[::1] weights, double[::1] means, double[::1] stds,
                   double[:, ::1] mc):
    """Best feasible insertion position for one vehicle's walk.

    Scans positions lo..n ascending, keeps the first strict revenue maximum
    among positions whose expected depot return stays within shift_end.
    """
    cdef WalkRes res
    cdef int best_pos = -1
    cdef double best_rev = 0.0
    cdef int pos
    for pos in range(lo, n + 1):
        _walk_impl(cx, cy, ct, xs, ys, kinds, deadlines, prices, n,
                   pos, inj_x, inj_y, inj_deadline, inj_price,
                   depot_x, depot_y, service, c_miss,
                   kind, mu, var, weights, means, stds, mc,
                   NULL, NULL, NULL, &res)
        if res.final_mean > shift_end:
            continue
        if best_pos < 0 or res.revenue > best_rev:
            best_pos = pos
            best_rev = res.revenue
    if best_pos < 0:
        return (-1, 0.0, 0.0, 0.0, 0.0, 0, 1.0, 0.0, 0, -1.0, 0.0, 0.0)
    _walk_impl(cx, cy, ct, xs, ys, kinds, deadlines, prices, n,
               best_pos, inj_x, inj_y, inj_deadline, inj_price,
               depot_x, depot_y, service, c_miss,
               kind, mu, var, weights, means, stds, mc,
               NULL, NULL, NULL, &res)
    return (best_pos, res.revenue, res.final_mean, res.final_var,
            res.slack_sum, res.slack_cnt, res.pon_prod, res.dist_sum,
            res.n_cust, res.inj_pon, res.inj_mean, res.inj_var)


cdef inline double _quote_value(int k, const double* b, const double* a_on,
                                const double* b_pen, const double* p) nogil:
    cdef double se = 1.0  # opt-out utility exp(0)
    cdef double num = 0.0
    cdef double e
    cdef int j
    for j in range(k):
        e = exp(b[j] - p[j])
        se += e
        num += e * (p[j] * a_on[j] - b_pen[j])
    return num / se


cdef inline void _quote_grad(int k, const double* b, const double* a_on,
                             const double* b_pen, double* p, double* g) nogil:
    cdef int j
    cdef double pj, h, f1, f2
    for j in range(k):
        pj = p[j]
        h = 1e-6 * (fabs(pj) if fabs(pj) > 1.0 else 1.0)
        p[j] = pj + h
        f1 = _quote_value(k, b, a_on, b_pen, p)
        p[j] = pj - h
        f2 = _quote_value(k, b, a_on, b_pen, p)
        p[j] = pj
        g[j] = (f1 - f2) / (2.0 * h)


cdef inline void _project(int k, const double* lb, const double* ub,
                          double* p) nogil:
    cdef int j
    for j in range(k):
        if p[j] < lb[j]:
            p[j] = lb[j]
        elif p[j] > ub[j]:
            p[j] = ub[j]


cdef double _quote_ascent(int k, const double* lb, const double* ub,
                          const double* b, const double* a_on,
                          const double* b_pen, double* x) nogil:
    cdef double g[16]
    cdef double gn[16]
    cdef double xn[16]
    cdef double fx, gmax, alpha, resid, t, t_step, fn, gd, ss, sy, s, y
    cdef int j, it, bt
    cdef bint accepted
    _project(k, lb, ub, x)
    fx = _quote_value(k, b, a_on, b_pen, x)
    _quote_grad(k, b, a_on, b_pen, x, g)
    gmax = 0.0
    for j in range(k):
        if fabs(g[j]) > gmax:
            gmax = fabs(g[j])
    alpha = 1.0 if gmax <= 1e-12 else 1.0 / gmax
    for it in range(200):
        resid = 0.0
        for j in range(k):
            t = x[j] + g[j]
            if t < lb[j]:
                t = lb[j]
            elif t > ub[j]:
                t = ub[j]
            if fabs(t - x[j]) > resid:
                resid = fabs(t - x[j])
        if resid < 1e-9:
            break
        t_step = alpha
        accepted = False
        fn = fx
        for bt in range(60):
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
    cdef int k = len(lb)
    if k == 0:
        raise ValueError("no feasible options to price")
    if k > 16:
        raise ValueError("too many options")
    cdef double clb[16]
    cdef double cub[16]
    cdef double cb[16]
    cdef double ca[16]
    cdef double cp[16]
    cdef double x[16]
    cdef double bx[16]
    cdef int j, mask
    for j in range(k):
        clb[j] = lb[j]
        cub[j] = ub[j]
        cb[j] = b[j]
        ca[j] = a_on[j]
        cp[j] = b_pen[j]
    cdef double best_f = -1e308
    cdef double f
    cdef bint have = False
    for mask in range(1 << k):
        for j in range(k):
            x[j] = cub[j] if (mask >> j) & 1 else clb[j]
        f = _quote_ascent(k, clb, cub, cb, ca, cp, x)
        if not have or f > best_f:
            best_f = f
            have = True
            for j in range(k):
                bx[j] = x[j]
    for j in range(k):
        x[j] = 0.5 * (clb[j] + cub[j])
    f = _quote_ascent(k, clb, cub, cb, ca, cp, x)
    if f > best_f:
        best_f = f
        for j in range(k):
            bx[j] = x[j]
    return [bx[j] for j in range(k)], best_f
