"""Numeric inner loops.

Everything here is written in the numba nopython subset and compiled through
:mod:`batreg._jit`, so the same source doubles as the pure-Python fallback.
Functions take and return plain floats, ints and float64 arrays only.
"""
import math

import numpy as np

from ._jit import njit

INF = math.inf
# largest suffix table the offline search precomputes per run
_TABLE_ROWS = 1 << 18


# ---------------------------------------------------------------------------
# battery dynamics and action clipping


@njit(cache=True)
def soc_next(e, c, d, T, eta_c, eta_d):
    return e + T * eta_c * c - (T / eta_d) * d


@njit(cache=True)
def roll_soc(e0, c, d, T, eta_c, eta_d):
    N = c.shape[0]
    e = np.empty(N + 1)
    e[0] = e0
    for n in range(N):
        e[n + 1] = soc_next(e[n], c[n], d[n], T, eta_c, eta_d)
    return e


@njit(cache=True)
def bounded_charge(e, want, upper, emin_n, band, T, eta_c, eta_d):
    """Largest charge <= want keeping the next SoC <= upper and within band of emin_n.

    The closed-form clip is nudged down (one ulp, then doubling steps) until
    the rolled-forward SoC satisfies both conditions exactly in floating point.
    """
    c = min((upper - e) / (T * eta_c), want)
    if not c > 0.0:
        return 0.0
    e_new = soc_next(e, c, 0.0, T, eta_c, eta_d)
    step = c - np.nextafter(c, 0.0)
    while e_new > upper or e_new - emin_n > band:
        c -= step
        step *= 2.0
        if not c > 0.0:
            return 0.0
        e_new = soc_next(e, c, 0.0, T, eta_c, eta_d)
    return c


@njit(cache=True)
def bounded_discharge(e, want, lower, emax_n, band, T, eta_c, eta_d):
    d = min(eta_d * (e - lower) / T, want)
    if not d > 0.0:
        return 0.0
    e_new = soc_next(e, 0.0, d, T, eta_c, eta_d)
    step = d - np.nextafter(d, 0.0)
    while e_new < lower or emax_n - e_new > band:
        d -= step
        step *= 2.0
        if not d > 0.0:
            return 0.0
        e_new = soc_next(e, 0.0, d, T, eta_c, eta_d)
    return d


@njit(cache=True)
def threshold_action(e, r, emax_n, emin_n, band, e_lo, e_hi, T, eta_c, eta_d):
    """One controller decision given already-updated running extrema.

    ``band`` is the allowed SoC span (u_hat * E); pass ``inf`` for a
    controller that is limited by the physical bounds only.
    """
    if r >= 0.0:
        upper = min(e_hi, emin_n + band)
        return bounded_charge(e, r, upper, emin_n, band, T, eta_c, eta_d), 0.0
    lower = max(e_lo, emax_n - band)
    return 0.0, bounded_discharge(e, -r, lower, emax_n, band, T, eta_c, eta_d)


# ---------------------------------------------------------------------------
# extrema and rainflow


@njit(cache=True)
def extract_extrema(profile, tol):
    n = profile.shape[0]
    out = np.empty(n)
    k = 0
    for i in range(n):
        x = profile[i]
        if k == 0:
            out[0] = x
            k = 1
            continue
        dx = x - out[k - 1]
        if abs(dx) <= tol:
            continue
        if k >= 2 and (out[k - 1] - out[k - 2]) * dx > 0.0:
            out[k - 1] = x
        else:
            out[k] = x
            k += 1
    return out[:k].copy()


@njit(cache=True)
def rainflow_batch(s):
    """Full-cycle extraction over an extrema sequence.

    Works on a linked list of the points. After a cycle is removed the scan
    backs up two points, which revisits exactly the windows that touch the
    new adjacency; all earlier windows are unchanged and already failed, so
    this matches a rescan from the beginning of the profile.

    Returns (full-cycle depths, residue points).
    """
    m = s.shape[0]
    cycles = np.empty(m // 2 + 1)
    nc = 0
    if m < 4:
        return cycles[:0].copy(), s.copy()
    nxt = np.empty(m, dtype=np.int64)
    prv = np.empty(m, dtype=np.int64)
    for i in range(m):
        nxt[i] = i + 1
        prv[i] = i - 1
    i = 0
    while True:
        b = nxt[i]
        if b >= m:
            break
        c = nxt[b]
        if c >= m:
            break
        d = nxt[c]
        if d >= m:
            break
        d1 = abs(s[i] - s[b])
        d2 = abs(s[b] - s[c])
        d3 = abs(s[c] - s[d])
        if d2 <= d1 and d2 <= d3:
            cycles[nc] = d2
            nc += 1
            nxt[i] = d
            prv[d] = i
            k = 0
            while k < 2 and prv[i] >= 0:
                i = prv[i]
                k += 1
        else:
            i = b
    res = np.empty(m)
    k = 0
    j = 0
    while j < m:
        res[k] = s[j]
        k += 1
        j = nxt[j]
    return cycles[:nc].copy(), res[:k].copy()


@njit(cache=True)
def stack_push(stack, n, x, tol, cycles, nc):
    """Push one profile sample onto a rainflow stack held in ``stack[:n]``.

    Samples continuing the current monotone run replace the top; moves of at
    most ``tol`` are ignored. Full cycles found are written to
    ``cycles[nc:]``. Returns the new (n, nc).
    """
    if n == 0:
        stack[0] = x
        return 1, nc
    dx = x - stack[n - 1]
    if abs(dx) <= tol:
        return n, nc
    if n >= 2 and (stack[n - 1] - stack[n - 2]) * dx > 0.0:
        stack[n - 1] = x
    else:
        stack[n] = x
        n += 1
    while n >= 4:
        y = abs(stack[n - 2] - stack[n - 3])
        if y <= abs(stack[n - 1] - stack[n - 2]) and y <= abs(stack[n - 3] - stack[n - 4]):
            cycles[nc] = y
            nc += 1
            stack[n - 3] = stack[n - 1]
            n -= 2
        else:
            break
    return n, nc


@njit(cache=True)
def split_residue(res):
    """Residue points -> (charge half depths, discharge half depths)."""
    m = res.shape[0]
    v = np.empty(max(m - 1, 0))
    w = np.empty(max(m - 1, 0))
    nv = 0
    nw = 0
    for i in range(m - 1):
        dx = res[i + 1] - res[i]
        if dx > 0.0:
            v[nv] = dx
            nv += 1
        elif dx < 0.0:
            w[nw] = -dx
            nw += 1
    return v[:nv].copy(), w[:nw].copy()


# ---------------------------------------------------------------------------
# closed-loop simulation


@njit(cache=True)
def run_controller(r, e0, band, e_lo, e_hi, T, eta_c, eta_d, E, tol, simple):
    """Step the threshold controller (or the simple follower) over a trace.

    The normalized profile is counted on the fly with the streaming stack.
    Returns (c, d, e, full-cycle depths, final residue).
    """
    N = r.shape[0]
    c = np.zeros(N)
    d = np.zeros(N)
    e = np.empty(N + 1)
    e[0] = e0
    emax = e0
    emin = e0
    kc = T * eta_c / E
    kd = T / (eta_d * E)
    stack = np.empty(N + 2)
    cyc = np.empty(N + 2)
    ns = 0
    nc = 0
    x = 0.0
    ns, nc = stack_push(stack, ns, x, tol, cyc, nc)
    for n in range(N):
        en = e[n]
        if en > emax:
            emax = en
        if en < emin:
            emin = en
        if simple:
            cn, dn = threshold_action(en, r[n], e_hi, e_lo, INF, e_lo, e_hi, T, eta_c, eta_d)
        else:
            cn, dn = threshold_action(en, r[n], emax, emin, band, e_lo, e_hi, T, eta_c, eta_d)
        c[n] = cn
        d[n] = dn
        e[n + 1] = soc_next(en, cn, dn, T, eta_c, eta_d)
        x = x + (kc * cn - kd * dn)
        ns, nc = stack_push(stack, ns, x, tol, cyc, nc)
    return c, d, e, cyc[:nc].copy(), stack[:ns].copy()


@njit(cache=True)
def ar1_filter(noise, rho):
    """y_n = rho * y_{n-1} + noise_n with y_{-1} = 0."""
    out = np.empty(noise.shape[0])
    y = 0.0
    for n in range(noise.shape[0]):
        y = rho * y + noise[n]
        out[n] = y
    return out


# ---------------------------------------------------------------------------
# offline branch-and-bound


@njit(cache=True)
def _phi(u, alpha, beta):
    if u <= 0.0:
        return 0.0
    return alpha * u ** beta


@njit(cache=True)
def _run_floor(total, up, h, room, T, theta, pi, ER, alpha, beta, kc, kd):
    """Least cost a monotone run can still add.

    ``total`` is the instructed |r| left in the run, ``h`` the depth of the
    stack's top half when the run extends it (0 otherwise) and ``room`` the
    largest normalized move the SoC window allows. Moving m costs at least
    half the stress increase of the extended half, and every unit not moved
    pays the penalty.
    """
    if total <= 0.0:
        return 0.0
    if up:
        k = kc
        price = theta
    else:
        k = kd
        price = pi
    pen = T * price * total
    mmax = min(k * total, room)
    if mmax <= 0.0:
        return pen
    rate = T * price / k
    if ER <= 0.0:
        return pen - rate * mmax
    hh = 0.5 * ER * alpha
    # stationary point of rate * m = hh * ((h + m)**beta - h**beta)
    target = (rate / (hh * beta)) ** (1.0 / (beta - 1.0)) if rate > 0.0 else 0.0
    m = min(max(target - h, 0.0), mmax)
    return pen - rate * m + hh * ((h + m) ** beta - h ** beta)


@njit(cache=True)
def _aging_after(stack, top, x, up, tol, scratch, cyc, alpha, beta):
    """Push ``x`` on a copy of the stack (left in ``scratch``).

    Returns the stress of the cycles it closes plus half the residue stress
    afterwards, the length of the top half when it points in direction
    ``up`` (0 otherwise) and the new stack height.
    """
    for q in range(top):
        scratch[q] = stack[q]
    top, nc = stack_push(scratch, top, x, tol, cyc, 0)
    ag = 0.0
    for q in range(nc):
        ag += _phi(cyc[q], alpha, beta)
    half = 0.0
    for q in range(top - 1):
        half += _phi(abs(scratch[q + 1] - scratch[q]), alpha, beta)
    h = 0.0
    if top >= 2:
        seg = scratch[top - 1] - scratch[top - 2]
        if (seg > 0.0) == up:
            h = abs(seg)
    return ag + 0.5 * half, h, top


@njit(cache=True)
def _next_floor(stack, top, soc, i, nrun, run_total, run_up, e_lo, e_hi, E,
                T, theta, pi, ER, alpha, beta, kc, kd):
    """Least cost run ``i`` can add given the stack and SoC it starts from.

    Reversing past the top half (length h) closes it as a full cycle when the
    half below (length H) is at least as long; from there on the move
    extends that lower half. Further closures only add stress.
    """
    if i >= nrun:
        return 0.0
    up = run_up[i]
    if up:
        room = (e_hi - soc) / E
    else:
        room = (soc - e_lo) / E
    room = max(room, 0.0)
    h = 0.0
    big = -1.0
    if top >= 2:
        seg = stack[top - 1] - stack[top - 2]
        if (seg > 0.0) == up:
            # the run extends the top half
            return _run_floor(run_total[i], up, abs(seg), room,
                              T, theta, pi, ER, alpha, beta, kc, kd)
        h = abs(seg)
        if top >= 3:
            big = abs(stack[top - 2] - stack[top - 3])
    if big < h or ER <= 0.0:
        return _run_floor(run_total[i], up, 0.0, room,
                          T, theta, pi, ER, alpha, beta, kc, kd)
    total = run_total[i]
    if total <= 0.0:
        return 0.0
    if up:
        k = kc
        price = theta
    else:
        k = kd
        price = pi
    pen = T * price * total
    mmax = min(k * total, room)
    if mmax <= 0.0:
        return pen
    rate = T * price / k
    hh = 0.5 * ER * alpha
    target = (rate / (hh * beta)) ** (1.0 / (beta - 1.0)) if rate > 0.0 else 0.0
    m = min(target, h, mmax)
    if m >= h and mmax > h:
        # past the closure the increment follows the lower half's curve
        m = min(max(target - big + h, h), mmax)
        inc = hh * h ** beta + hh * ((big + m - h) ** beta - big ** beta)
    else:
        inc = hh * m ** beta
    return pen - rate * m + inc


@njit(cache=True)
def _extension_gain(h, dmax, rate, k, hh, beta):
    """min over 0 <= D <= dmax of hh * ((h + k D)**beta - h**beta) - rate * D."""
    if dmax <= 0.0 or rate <= 0.0:
        return 0.0
    if hh <= 0.0:
        return -rate * dmax
    target = (rate / (k * hh * beta)) ** (1.0 / (beta - 1.0))
    dd = min(max((target - h) / k, 0.0), dmax)
    return hh * ((h + k * dd) ** beta - h ** beta) - rate * dd


@njit(cache=True)
def _grow(pool_lv, pool_lb, cnt):
    if cnt < pool_lb.shape[0]:
        return pool_lv, pool_lb
    lv = np.zeros((2 * pool_lb.shape[0], pool_lv.shape[1]), dtype=np.int64)
    lv[:cnt] = pool_lv[:cnt]
    lb = np.zeros(2 * pool_lb.shape[0])
    lb[:cnt] = pool_lb[:cnt]
    return lv, lb


@njit(cache=True)
def _suffix_table(mags, K):
    """All level combinations of ``mags`` sorted by their response total.

    Steps with a zero set-point only take level 0. Combinations are generated
    in lexicographic order and sorted stably, so equal totals keep it.
    """
    L = mags.shape[0]
    count = 1
    for t in range(L):
        if mags[t] > 0.0:
            count *= K
    lv = np.zeros((count, max(L, 1)), dtype=np.int64)
    vals = np.zeros(count)
    cur = np.zeros(max(L, 1), dtype=np.int64)
    for row in range(count):
        v = 0.0
        for t in range(L):
            lv[row, t] = cur[t]
            v += mags[t] * cur[t] / (K - 1)
        vals[row] = v
        # next combination, last step fastest
        t = L - 1
        while t >= 0:
            if mags[t] > 0.0 and cur[t] < K - 1:
                cur[t] += 1
                break
            cur[t] = 0
            t -= 1
    order = np.argsort(vals, kind="mergesort")
    return vals[order].copy(), lv[order].copy()


@njit(cache=True)
def offline_search(r, e0, e_lo, e_hi, T, eta_c, eta_d, E, K, theta, pi, ER,
                   alpha, beta, tol, budget, upper):
    """Exact minimum of aging + settlement cost over per-step action grids.

    Step n may respond with j/(K-1) of |r_n| (j = 0..K-1) in the instructed
    direction, clipped to the SoC limits. Inside a monotone run of the
    instruction the profile is monotone too, so the cost depends on each run
    only through the total it moves. The search is a depth-first branch and
    bound over runs, branching on achievable run totals best bound first.

    The achievable totals of a run are prefix levels (searched depth first)
    plus a suffix total from a table sorted once up front; the table is cut
    by bisection over index ranges. A range of totals [a, b] is bounded by
    the exact cost of stopping at a (rainflow aging with residue halves at
    one half never decreases as the path grows), the least that extending
    the top half can still save up to b, and ``_run_floor`` for every later
    run.

    Among (near-)equal costs the lexicographically smallest magnitude
    sequence wins. ``upper`` is a known achievable cost (or ``inf``).

    Returns (best cost, best magnitudes, visited nodes, status) where status
    is 0 on success and 1 when ``budget`` nodes were exceeded.
    """
    N = r.shape[0]
    best_acts = np.zeros(N)
    if N == 0:
        return 0.0, best_acts, 0, 0
    kc = T * eta_c / E
    kd = T / (eta_d * E)
    hh = 0.5 * ER * alpha
    window = (e_hi - e_lo) / E
    # monotone runs; zero set-points join the run that follows them
    run_start = np.zeros(N + 1, dtype=np.int64)
    run_up = np.zeros(N + 1, dtype=np.bool_)
    run_total = np.zeros(N + 1)
    nrun = 0
    last = 0.0
    for n in range(N):
        if r[n] != 0.0:
            if last == 0.0 or (r[n] > 0.0) != (last > 0.0):
                run_up[nrun] = r[n] > 0.0
                run_start[nrun] = n if nrun > 0 else 0
                nrun += 1
            last = r[n]
            run_total[nrun - 1] += abs(r[n])
    if nrun == 0:
        return 0.0, best_acts, 1, 0
    run_end = np.zeros(N + 1, dtype=np.int64)
    for i in range(nrun):
        run_end[i] = run_start[i + 1] if i + 1 < nrun else N
    floor = np.zeros(nrun + 2)
    for i in range(nrun - 1, -1, -1):
        floor[i] = floor[i + 1] + _run_floor(run_total[i], run_up[i], 0.0, window,
                                             T, theta, pi, ER, alpha, beta, kc, kd)
    # per run: the longest suffix whose table stays small
    run_split = np.zeros(N + 1, dtype=np.int64)
    tab_off = np.zeros(N + 2, dtype=np.int64)
    total_rows = 0
    for i in range(nrun):
        size = 1
        sp = run_end[i]
        while sp > run_start[i]:
            grow = K if r[sp - 1] != 0.0 else 1
            if size * grow > _TABLE_ROWS:
                break
            size *= grow
            sp -= 1
        run_split[i] = sp
        tab_off[i] = total_rows
        total_rows += size
    tab_off[nrun] = total_rows
    tab_vals = np.zeros(total_rows)
    tab_lv = np.zeros((total_rows, N), dtype=np.int64)
    for i in range(nrun):
        mags = np.abs(r[run_split[i]:run_end[i]])
        vals, lvs = _suffix_table(mags, K)
        o = tab_off[i]
        for row in range(vals.shape[0]):
            tab_vals[o + row] = vals[row]
            for t in range(mags.shape[0]):
                tab_lv[o + row, t] = lvs[row, t]

    S = N + 3
    stacks = np.empty((nrun + 1, S))
    ns = np.zeros(nrun + 1, dtype=np.int64)
    soc = np.empty(nrun + 1)
    prof = np.empty(nrun + 1)
    aging = np.zeros(nrun + 1)
    settle = np.zeros(nrun + 1)
    cyc = np.empty(S)
    scratch = np.empty(S)
    acts = np.zeros(N)
    # candidate pool used as a stack of per-depth segments
    pool_lv = np.zeros((64, N), dtype=np.int64)
    pool_lb = np.zeros(64)
    seg_lo = np.zeros(nrun + 1, dtype=np.int64)
    seg_hi = np.zeros(nrun + 1, dtype=np.int64)
    lv = np.zeros(N, dtype=np.int64)
    psum = np.zeros(N + 1)
    rem = np.zeros(N + 1)
    rng_a = np.zeros(64, dtype=np.int64)
    rng_b = np.zeros(64, dtype=np.int64)

    soc[0] = e0
    prof[0] = 0.0
    n0, _ = stack_push(stacks[0], 0, 0.0, tol, cyc, 0)
    ns[0] = n0
    best = INF
    found = False
    nodes = 0
    ub = upper

    depth = 0
    expand = True
    while depth >= 0:
        bound = ub + 1e-9 * max(1.0, abs(ub)) if ub < INF else INF
        if expand:
            expand = False
            # collect the totals run ``depth`` may move
            i = depth
            a0 = run_start[i]
            L = run_end[i] - a0
            nA = run_split[i] - a0
            if run_up[i]:
                k = kc
                price = theta
                room = (e_hi - soc[i]) / E
            else:
                k = kd
                price = pi
                room = (soc[i] - e_lo) / E
            room = max(room, 0.0)
            cap = room / k
            rate = T * price
            sgn = 1.0 if run_up[i] else -1.0
            base = settle[i] + rate * run_total[i] + ER * aging[i] + floor[i + 1]
            t0 = tab_off[i]
            tn = tab_off[i + 1] - t0
            smin = tab_vals[t0]
            smax = tab_vals[t0 + tn - 1]
            start = seg_hi[i - 1] if i > 0 else 0
            cnt = start
            rem[L] = 0.0
            for q in range(L - 1, -1, -1):
                rem[q] = rem[q + 1] + abs(r[a0 + q])
            # prefix levels depth first (q == nA: prefix complete)
            q = 0
            psum[0] = 0.0
            if nA > 0:
                lv[0] = -1
            while q >= 0:
                if q < nA:
                    mag = abs(r[a0 + q])
                    j = lv[q] + 1
                    if j >= K or (mag == 0.0 and j > 0):
                        q -= 1
                        continue
                    lv[q] = j
                    v = psum[q] + mag * j / (K - 1)
                    nodes += 1
                    lo_v = v + smin
                    if lo_v >= cap:
                        q -= 1
                        continue
                    # the remaining prefix steps may add up to rem[q+1] - smax
                    hi_v = min(v + rem[q + 1], cap)
                    g, hv, _ = _aging_after(stacks[i], ns[i], prof[i] + sgn * k * lo_v, run_up[i],
                                         tol, scratch, cyc, alpha, beta)
                    lb = (base - rate * lo_v + ER * g
                          + _extension_gain(hv, hi_v - lo_v, rate, k, hh, beta))
                    if lb > bound:
                        continue
                    psum[q + 1] = v
                    q += 1
                    if q < nA:
                        lv[q] = -1
                    continue
                # prefix complete: bisect the suffix table below the cap
                v = psum[nA]
                lim = tn
                lo_i = 0
                hi_i = tn
                while lo_i < hi_i:
                    mid = (lo_i + hi_i) // 2
                    if v + tab_vals[t0 + mid] >= cap:
                        hi_i = mid
                    else:
                        lo_i = mid + 1
                lim = lo_i
                top_r = 0
                if lim > 0:
                    rng_a[0] = 0
                    rng_b[0] = lim
                    top_r = 1
                while top_r > 0:
                    top_r -= 1
                    a = rng_a[top_r]
                    b = rng_b[top_r]
                    nodes += 1
                    x_lo = v + tab_vals[t0 + a]
                    x_hi = v + tab_vals[t0 + b - 1]
                    g, hv, top2 = _aging_after(stacks[i], ns[i], prof[i] + sgn * k * x_lo,
                                               run_up[i], tol, scratch, cyc, alpha, beta)
                    lb = base - rate * x_lo + ER * g
                    if b - a > 1:
                        lb += _extension_gain(hv, x_hi - x_lo, rate, k, hh, beta)
                    else:
                        nf = _next_floor(scratch, top2, soc[i] + sgn * k * x_lo * E, i + 1, nrun,
                                         run_total, run_up, e_lo, e_hi, E, T, theta, pi, ER,
                                         alpha, beta, kc, kd) + floor[i + 2]
                        if nf > floor[i + 1]:
                            lb += nf - floor[i + 1]
                    if lb > bound:
                        continue
                    if b - a == 1:
                        pool_lv, pool_lb = _grow(pool_lv, pool_lb, cnt)
                        for t in range(nA):
                            pool_lv[cnt, t] = lv[t]
                        for t in range(L - nA):
                            pool_lv[cnt, nA + t] = tab_lv[t0 + a, t]
                        pool_lb[cnt] = lb
                        cnt += 1
                        continue
                    if top_r + 2 > rng_a.shape[0]:
                        ga = np.zeros(2 * rng_a.shape[0], dtype=np.int64)
                        gb = np.zeros(2 * rng_a.shape[0], dtype=np.int64)
                        ga[:top_r] = rng_a[:top_r]
                        gb[:top_r] = rng_b[:top_r]
                        rng_a = ga
                        rng_b = gb
                    mid = (a + b) // 2
                    # upper half pushed first so the lower half pops first
                    rng_a[top_r] = mid
                    rng_b[top_r] = b
                    rng_a[top_r + 1] = a
                    rng_b[top_r + 1] = mid
                    top_r += 2
                q -= 1
                if nodes > budget:
                    return best, best_acts, nodes, 1
            # one representative for all totals clipped at the SoC limit:
            # the smallest levels that still reach it
            if run_total[i] >= cap:
                nodes += 1
                g, hv, top2 = _aging_after(stacks[i], ns[i], prof[i] + sgn * room, run_up[i],
                                           tol, scratch, cyc, alpha, beta)
                lb = base - rate * cap + ER * g
                nf = _next_floor(scratch, top2, e_hi if run_up[i] else e_lo, i + 1, nrun,
                                 run_total, run_up, e_lo, e_hi, E, T, theta, pi, ER,
                                 alpha, beta, kc, kd) + floor[i + 2]
                if nf > floor[i + 1]:
                    lb += nf - floor[i + 1]
                if lb <= bound:
                    pool_lv, pool_lb = _grow(pool_lv, pool_lb, cnt)
                    p = 0.0
                    for t in range(L):
                        mag = abs(r[a0 + t])
                        jj = 0
                        if p < cap and mag > 0.0:
                            while jj < K - 1 and p + mag * jj / (K - 1) + rem[t + 1] < cap:
                                jj += 1
                        pool_lv[cnt, t] = jj
                        p += mag * jj / (K - 1)
                    pool_lb[cnt] = lb
                    cnt += 1
            if nodes > budget:
                return best, best_acts, nodes, 1
            if cnt > start:
                # best bound first; the stable sort keeps generation order on ties
                order = np.argsort(pool_lb[start:cnt], kind="mergesort")
                tmp_lv = pool_lv[start:cnt].copy()
                tmp_lb = pool_lb[start:cnt].copy()
                for q in range(cnt - start):
                    pool_lv[start + q] = tmp_lv[order[q]]
                    pool_lb[start + q] = tmp_lb[order[q]]
            seg_lo[i] = start
            seg_hi[i] = cnt

        i = depth
        if seg_lo[i] >= seg_hi[i]:
            depth -= 1
            continue
        c_idx = seg_lo[i]
        seg_lo[i] += 1
        if pool_lb[c_idx] > bound:
            seg_lo[i] = seg_hi[i]
            continue
        nodes += 1
        if nodes > budget:
            return best, best_acts, nodes, 1
        # apply the run step by step, exactly as a dispatch would
        a0 = run_start[i]
        L = run_end[i] - a0
        e = soc[i]
        x = prof[i]
        st = settle[i]
        m = i + 1
        top = ns[i]
        for q in range(top):
            stacks[m, q] = stacks[i, q]
        ag = aging[i]
        for t in range(L):
            n = a0 + t
            rn = r[n]
            want = abs(rn) * pool_lv[c_idx, t] / (K - 1)
            if rn >= 0.0:
                a = bounded_charge(e, want, e_hi, e_lo, INF, T, eta_c, eta_d)
                cn = a
                dn = 0.0
            else:
                a = bounded_discharge(e, want, e_lo, e_hi, INF, T, eta_c, eta_d)
                cn = 0.0
                dn = a
            acts[n] = a
            e = soc_next(e, cn, dn, T, eta_c, eta_d)
            x += kc * cn - kd * dn
            over = rn - cn + dn
            if over > 0.0:
                st += T * theta * over
            else:
                st += T * pi * (-over)
            top, nc = stack_push(stacks[m], top, x, tol, cyc, 0)
            for q in range(nc):
                ag += _phi(cyc[q], alpha, beta)
        soc[m] = e
        prof[m] = x
        settle[m] = st
        aging[m] = ag
        ns[m] = top
        half = 0.0
        for q in range(top - 1):
            half += _phi(abs(stacks[m, q + 1] - stacks[m, q]), alpha, beta)
        cost = st + ER * (ag + 0.5 * half)
        tail = floor[m]
        if m < nrun:
            nf = _next_floor(stacks[m], top, e, m, nrun, run_total, run_up, e_lo, e_hi, E,
                             T, theta, pi, ER, alpha, beta, kc, kd) + floor[m + 1]
            tail = max(tail, nf)
        if cost + tail > bound:
            continue
        if m == nrun:
            if not found:
                better = True
            else:
                tie = 1e-12 * max(1.0, abs(best))
                better = cost < best - tie
                if not better and cost <= best + tie:
                    for n in range(N):
                        if acts[n] != best_acts[n]:
                            better = acts[n] < best_acts[n]
                            break
            if better:
                best = cost
                found = True
                ub = min(ub, best)
                for n in range(N):
                    best_acts[n] = acts[n]
            continue
        depth = m
        expand = True
    return best, best_acts, nodes, 0
