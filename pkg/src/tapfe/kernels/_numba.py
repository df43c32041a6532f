"""numba implementations of the hot loops.  Signatures mirror _numpy.py."""
import math

import numpy as np
from numba import njit


@njit(cache=True)
def _herm1(phi, dphi, x0, dx, y):
    n = phi.shape[0]
    t = (y - x0) / dx
    if t <= 0.0:
        return phi[0] + dphi[0] * (y - x0), dphi[0]
    if t >= n - 1:
        return phi[n - 1] + dphi[n - 1] * (y - x0 - (n - 1) * dx), dphi[n - 1]
    i = int(t)
    if i > n - 2:
        i = n - 2
    u = t - i
    u2 = u * u
    u3 = u2 * u
    p0 = phi[i]
    p1 = phi[i + 1]
    m0 = dphi[i] * dx
    m1 = dphi[i + 1] * dx
    val = (2 * u3 - 3 * u2 + 1) * p0 + (u3 - 2 * u2 + u) * m0 \
        + (-2 * u3 + 3 * u2) * p1 + (u3 - u2) * m1
    der = ((6 * u2 - 6 * u) * (p0 - p1) + (3 * u2 - 4 * u + 1) * m0
           + (3 * u2 - 2 * u) * m1) / dx
    return val, der


@njit(cache=True)
def hermite_eval(phi, dphi, x0, dx, xs):
    n = xs.shape[0]
    v = np.empty(n)
    d = np.empty(n)
    for j in range(n):
        v[j], d[j] = _herm1(phi, dphi, x0, dx, xs[j])
    return v, d


@njit(cache=True)
def cole_hopf_eval(phi, dphi, x0, dx, xs, sigma, zeta, nodes, weights):
    n = xs.shape[0]
    k = nodes.shape[0]
    out_v = np.empty(n)
    out_d = np.empty(n)
    vals = np.empty(k)
    ders = np.empty(k)
    for j in range(n):
        vbar = 0.0
        dbar = 0.0
        for a in range(k):
            vv, dd = _herm1(phi, dphi, x0, dx, xs[j] + sigma * nodes[a])
            vals[a] = vv
            ders[a] = dd
            vbar += weights[a] * vv
            dbar += weights[a] * dd
        if zeta <= 0.0:
            out_v[j] = vbar
            out_d[j] = min(1.0, max(-1.0, dbar))
            continue
        # centre on the plain mean: sum w (e^d - 1 - d) has no cancellation
        dmax = -np.inf
        for a in range(k):
            e = zeta * (vals[a] - vbar)
            vals[a] = e
            if e > dmax:
                dmax = e
        num = 0.0
        den = 0.0
        if dmax < 50.0:
            acc = 0.0
            for a in range(k):
                em = math.expm1(vals[a])
                acc += weights[a] * (em - vals[a])
                wa = weights[a] * (em + 1.0)
                num += wa * ders[a]
                den += wa
            out_v[j] = vbar + math.log1p(acc) / zeta
        else:
            for a in range(k):
                wa = weights[a] * math.exp(vals[a] - dmax)
                num += wa * ders[a]
                den += wa
            out_v[j] = vbar + (dmax + math.log(den)) / zeta
        # slopes of Phi are bounded by 1; clip the rounding excess of the average
        out_d[j] = min(1.0, max(-1.0, num / den))
    return out_v, out_d


@njit(cache=True)
def soft_fixed_point(xs, lam, tol, maxiter):
    n = xs.shape[0]
    out = np.empty(n)
    for j in range(n):
        x = xs[j]
        m = math.tanh(x)
        for _ in range(maxiter):
            t = math.tanh(x + 2.0 * lam * m)
            r = m - t
            if abs(r) < tol:
                break
            # Newton step on m - tanh(x + 2 lam m); slope >= 1/2 for |lam| < 1/4
            m = m - r / (1.0 - 2.0 * lam * (1.0 - t * t))
            if m > 1.0:
                m = 1.0
            elif m < -1.0:
                m = -1.0
        out[j] = m
    return out


@njit(cache=True)
def _soft_obj(m, x, lam):
    a = 0.5 * (1.0 + m)
    b = 0.5 * (1.0 - m)
    ent = 0.0
    if a > 0.0:
        ent += a * math.log(a)
    if b > 0.0:
        ent += b * math.log(b)
    return m * x + lam * m * m - ent


@njit(cache=True)
def soft_direct_max(xs, lam, n_grid, n_golden):
    n = xs.shape[0]
    f = np.empty(n)
    mm = np.empty(n)
    grid = np.linspace(-1.0, 1.0, n_grid)
    # the x-independent part lam m^2 - I(m) is tabulated once
    cgrid = np.empty(n_grid)
    for i in range(n_grid):
        cgrid[i] = _soft_obj(grid[i], 0.0, lam)
    g = 0.5 * (math.sqrt(5.0) - 1.0)
    for j in range(n):
        x = xs[j]
        best = -np.inf
        ib = 0
        for i in range(n_grid):
            val = grid[i] * x + cgrid[i]
            if val > best:
                best = val
                ib = i
        lo = grid[max(ib - 1, 0)]
        hi = grid[min(ib + 1, n_grid - 1)]
        c = hi - g * (hi - lo)
        d = lo + g * (hi - lo)
        fc = _soft_obj(c, x, lam)
        fd = _soft_obj(d, x, lam)
        for _ in range(n_golden):
            if fc > fd:
                hi = d
                d = c
                fd = fc
                c = hi - g * (hi - lo)
                fc = _soft_obj(c, x, lam)
            else:
                lo = c
                c = d
                fc = fd
                d = lo + g * (hi - lo)
                fd = _soft_obj(d, x, lam)
        m = 0.5 * (lo + hi)
        val = _soft_obj(m, x, lam)
        if best > val:
            m = grid[ib]
            val = best
        f[j] = val
        mm[j] = m
    return f, mm


@njit(cache=True)
def _lin(row, x0, dx, x):
    n = row.shape[0]
    t = (x - x0) / dx
    if t <= 0.0:
        return row[0]
    if t >= n - 1:
        return row[n - 1]
    i = int(t)
    if i > n - 2:
        i = n - 2
    u = t - i
    return (1.0 - u) * row[i] + u * row[i + 1]


@njit(cache=True)
def _field(dphi, lev, w, x0, dx, x):
    a = _lin(dphi[lev], x0, dx, x)
    if w == 0.0:
        return a
    b = _lin(dphi[lev + 1], x0, dx, x)
    return (1.0 - w) * a + w * b


@njit(cache=True)
def sde_paths(dphi, x0, dx, st_level, st_w, st_drift, st_sd,
              ck_step, ck_level, ck_w, x_start, normals):
    n_half = normals.shape[0]
    n_steps = st_level.shape[0]
    n_ck = ck_step.shape[0]
    xlo = x0
    xhi = x0 + (dphi.shape[1] - 1) * dx
    V = np.empty((2 * n_half, n_ck))
    X_end = np.empty(2 * n_half)
    escaped = 0
    for p in range(2 * n_half):
        sign = 1.0 if p < n_half else -1.0
        row = p if p < n_half else p - n_half
        x = x_start
        c = 0
        out = False
        for j in range(n_steps + 1):
            while c < n_ck and ck_step[c] == j:
                V[p, c] = _field(dphi, ck_level[c], ck_w[c], x0, dx, x)
                c += 1
            if j == n_steps:
                break
            v = _field(dphi, st_level[j], st_w[j], x0, dx, x)
            x = x + st_drift[j] * v + st_sd[j] * sign * normals[row, j]
            if x < xlo or x > xhi:
                out = True
        if out:
            escaped += 1
        X_end[p] = x
    return V, X_end, escaped


@njit(cache=True)
def _ctz(t):
    i = 0
    while (t & 1) == 0:
        t >>= 1
        i += 1
    return i


@njit(cache=True)
def _energy_full(const, b, J, K, has_cubic, s):
    n = s.shape[0]
    e = const
    for i in range(n):
        e += b[i] * s[i]
        for j in range(i + 1, n):
            e += J[i, j] * s[i] * s[j]
    if has_cubic:
        for i in range(n):
            for j in range(i + 1, n):
                for k in range(j + 1, n):
                    e += K[i, j, k] * s[i] * s[j] * s[k]
    return e


@njit(cache=True)
def _flip_delta(b, J, K, has_cubic, s, loc, i):
    n = s.shape[0]
    field = b[i] + loc[i]
    if has_cubic:
        acc = 0.0
        for j in range(n):
            if j == i:
                continue
            sj = s[j]
            for k in range(j + 1, n):
                if k == i:
                    continue
                acc += K[i, j, k] * sj * s[k]
        field += acc
    return -2.0 * s[i] * field


@njit(cache=True)
def _gray_walk(const, b, J, K, has_cubic, n, store):
    total = 1 << n
    s = np.ones(n)
    loc = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for j in range(n):
            if j != i:
                acc += J[i, j]
        loc[i] = acc
    e = _energy_full(const, b, J, K, has_cubic, s)
    energies = np.empty(total if store else 1)
    if store:
        energies[0] = e
    mx = e
    sm = 1.0
    code = 0
    for t in range(1, total):
        i = _ctz(t)
        e += _flip_delta(b, J, K, has_cubic, s, loc, i)
        si_old = s[i]
        s[i] = -si_old
        for j in range(n):
            if j != i:
                loc[j] -= 2.0 * si_old * J[j, i]
        code ^= (1 << i)
        if store:
            energies[code] = e
        if e > mx:
            sm = sm * math.exp(mx - e) + 1.0
            mx = e
        else:
            sm += math.exp(e - mx)
    return energies, mx + math.log(sm)


@njit(cache=True)
def enum_energies(const, b, J, K, has_cubic, n):
    energies, _ = _gray_walk(const, b, J, K, has_cubic, n, True)
    return energies


@njit(cache=True)
def enum_logsumexp(const, b, J, K, has_cubic, n):
    _, lz = _gray_walk(const, b, J, K, has_cubic, n, False)
    return lz


@njit(cache=True)
def gibbs_moments(energies, log_z, n):
    total = energies.shape[0]
    mag = np.zeros(n)
    corr = np.zeros((n, n))
    mean_e = 0.0
    mean_lg = 0.0
    s = np.empty(n)
    for c in range(total):
        lg = energies[c] - log_z
        p = math.exp(lg)
        if p == 0.0:
            continue
        mean_e += p * energies[c]
        mean_lg += p * lg
        for i in range(n):
            s[i] = -1.0 if (c >> i) & 1 else 1.0
            mag[i] += p * s[i]
        for i in range(n):
            pi = p * s[i]
            for j in range(i + 1, n):
                corr[i, j] += pi * s[j]
    for i in range(n):
        corr[i, i] = 1.0
        for j in range(i + 1, n):
            corr[j, i] = corr[i, j]
    return mag, corr, mean_e, mean_lg


@njit(cache=True)
def _popcount(x):
    c = 0
    while x:
        x &= x - 1
        c += 1
    return c


@njit(cache=True)
def cluster_stats(energies, log_z, n, code, dmax):
    """Gibbs weight and unnormalised magnetisation of {rho : d(rho, code) <= dmax[t]}."""
    n_t = dmax.shape[0]
    msum = np.zeros((n_t, n))
    wsum = np.zeros(n_t)
    top = 0
    for t in range(n_t):
        if dmax[t] > top:
            top = dmax[t]
    for c in range(energies.shape[0]):
        d = _popcount(c ^ code)
        if d > top:
            continue
        p = math.exp(energies[c] - log_z)
        for t in range(n_t):
            if d <= dmax[t]:
                wsum[t] += p
                for i in range(n):
                    msum[t, i] += -p if (c >> i) & 1 else p
    return msum, wsum
