"""Pure-numpy implementations of the hot loops (reference / fallback)."""
import numpy as np
from scipy.special import logsumexp, xlogy

_CHUNK = 1 << 15


def hermite_eval(phi, dphi, x0, dx, xs):
    xs = np.asarray(xs, dtype=float)
    n = phi.shape[0]
    t = (xs - x0) / dx
    i = np.clip(np.floor(t).astype(np.int64), 0, n - 2)
    u = t - i
    u2 = u * u
    u3 = u2 * u
    p0, p1 = phi[i], phi[i + 1]
    m0, m1 = dphi[i] * dx, dphi[i + 1] * dx
    val = (2 * u3 - 3 * u2 + 1) * p0 + (u3 - 2 * u2 + u) * m0 \
        + (-2 * u3 + 3 * u2) * p1 + (u3 - u2) * m1
    der = ((6 * u2 - 6 * u) * (p0 - p1) + (3 * u2 - 4 * u + 1) * m0
           + (3 * u2 - 2 * u) * m1) / dx
    lo = t <= 0.0
    hi = t >= n - 1
    if lo.any():
        val[lo] = phi[0] + dphi[0] * (xs[lo] - x0)
        der[lo] = dphi[0]
    if hi.any():
        val[hi] = phi[-1] + dphi[-1] * (xs[hi] - x0 - (n - 1) * dx)
        der[hi] = dphi[-1]
    return val, der


def cole_hopf_eval(phi, dphi, x0, dx, xs, sigma, zeta, nodes, weights):
    xs = np.asarray(xs, dtype=float)
    out_v = np.empty(xs.shape[0])
    out_d = np.empty(xs.shape[0])
    step = max(1, _CHUNK // nodes.shape[0])
    for s in range(0, xs.shape[0], step):
        y = xs[s:s + step, None] + sigma * nodes[None, :]
        v, d = hermite_eval(phi, dphi, x0, dx, y.ravel())
        v = v.reshape(y.shape)
        d = d.reshape(y.shape)
        if zeta > 0.0:
            vbar = v @ weights
            e = zeta * (v - vbar[:, None])
            dmax = e.max(axis=1)
            small = dmax < 50.0
            em = np.expm1(np.where(small[:, None], e, 0.0))
            acc = (em - np.where(small[:, None], e, 0.0)) @ weights
            shift = np.where(small, 0.0, dmax)
            wa = np.exp(e - shift[:, None]) * weights
            den = wa.sum(axis=1)
            out_v[s:s + step] = np.where(small, vbar + np.log1p(acc) / zeta,
                                         vbar + (shift + np.log(den)) / zeta)
            out_d[s:s + step] = (wa * d).sum(axis=1) / den
        else:
            out_v[s:s + step] = v @ weights
            out_d[s:s + step] = d @ weights
    # slopes of Phi are bounded by 1; clip the rounding excess of the average
    np.clip(out_d, -1.0, 1.0, out=out_d)
    return out_v, out_d


def soft_fixed_point(xs, lam, tol, maxiter):
    xs = np.asarray(xs, dtype=float)
    m = np.tanh(xs)
    for _ in range(maxiter):
        t = np.tanh(xs + 2.0 * lam * m)
        r = m - t
        if np.all(np.abs(r) < tol):
            break
        m = np.clip(m - r / (1.0 - 2.0 * lam * (1.0 - t * t)), -1.0, 1.0)
    return m


def _soft_obj(m, x, lam):
    a = 0.5 * (1.0 + m)
    b = 0.5 * (1.0 - m)
    return m * x + lam * m * m - (xlogy(a, a) + xlogy(b, b))


def soft_direct_max(xs, lam, n_grid, n_golden):
    xs = np.asarray(xs, dtype=float)
    grid = np.linspace(-1.0, 1.0, n_grid)
    f = np.empty(xs.shape[0])
    mm = np.empty(xs.shape[0])
    # the x-independent part lam m^2 - I(m) is tabulated once
    cgrid = _soft_obj(grid, 0.0, lam)
    g = 0.5 * (np.sqrt(5.0) - 1.0)
    step = max(1, _CHUNK // n_grid)
    for s in range(0, xs.shape[0], step):
        x = xs[s:s + step]
        vals = x[:, None] * grid[None, :] + cgrid[None, :]
        ib = vals.argmax(axis=1)
        best = vals[np.arange(x.shape[0]), ib]
        lo = grid[np.maximum(ib - 1, 0)]
        hi = grid[np.minimum(ib + 1, n_grid - 1)]
        c = hi - g * (hi - lo)
        d = lo + g * (hi - lo)
        fc = _soft_obj(c, x, lam)
        fd = _soft_obj(d, x, lam)
        for _ in range(n_golden):
            left = fc > fd
            hi = np.where(left, d, hi)
            lo = np.where(left, lo, c)
            nc = np.where(left, hi - g * (hi - lo), d)
            nd = np.where(left, c, lo + g * (hi - lo))
            nfc = np.where(left, _soft_obj(nc, x, lam), fd)
            nfd = np.where(left, fc, _soft_obj(nd, x, lam))
            c, d, fc, fd = nc, nd, nfc, nfd
        m = 0.5 * (lo + hi)
        val = _soft_obj(m, x, lam)
        worse = best > val
        m = np.where(worse, grid[ib], m)
        val = np.where(worse, best, val)
        f[s:s + step] = val
        mm[s:s + step] = m
    return f, mm


def _lin(row, x0, dx, x):
    n = row.shape[0]
    t = np.clip((x - x0) / dx, 0.0, n - 1)
    i = np.minimum(t.astype(np.int64), n - 2)
    u = t - i
    return (1.0 - u) * row[i] + u * row[i + 1]


def _field(dphi, lev, w, x0, dx, x):
    a = _lin(dphi[lev], x0, dx, x)
    if w == 0.0:
        return a
    return (1.0 - w) * a + w * _lin(dphi[lev + 1], x0, dx, x)


def sde_paths(dphi, x0, dx, st_level, st_w, st_drift, st_sd,
              ck_step, ck_level, ck_w, x_start, normals):
    n_half, n_steps = normals.shape
    n_ck = ck_step.shape[0]
    xhi = x0 + (dphi.shape[1] - 1) * dx
    x = np.full(2 * n_half, float(x_start))
    sign = np.concatenate([np.ones(n_half), -np.ones(n_half)])
    out = np.zeros(2 * n_half, dtype=bool)
    V = np.empty((2 * n_half, n_ck))
    c = 0
    for j in range(n_steps + 1):
        while c < n_ck and ck_step[c] == j:
            V[:, c] = _field(dphi, ck_level[c], ck_w[c], x0, dx, x)
            c += 1
        if j == n_steps:
            break
        v = _field(dphi, st_level[j], st_w[j], x0, dx, x)
        z = np.concatenate([normals[:, j], normals[:, j]])
        x = x + st_drift[j] * v + st_sd[j] * sign * z
        out |= (x < x0) | (x > xhi)
    return V, x, int(out.sum())


def _spins(start, stop, n):
    codes = np.arange(start, stop, dtype=np.int64)
    bits = (codes[:, None] >> np.arange(n, dtype=np.int64)[None, :]) & 1
    return codes, 1.0 - 2.0 * bits


def _chunk_energies(const, b, J, K, has_cubic, S):
    e = const + S @ b + np.einsum("ci,ci->c", S @ np.triu(J, 1), S)
    if has_cubic:
        n = S.shape[1]
        T = (S @ K.reshape(n, n * n)).reshape(S.shape[0], n, n)
        e = e + np.einsum("cjk,cj,ck->c", T, S, S)
    return e


def enum_energies(const, b, J, K, has_cubic, n):
    total = 1 << n
    out = np.empty(total)
    K = _upper3(K, has_cubic)
    for s in range(0, total, _CHUNK):
        _, S = _spins(s, min(total, s + _CHUNK), n)
        out[s:s + S.shape[0]] = _chunk_energies(const, b, J, K, has_cubic, S)
    return out


def _upper3(K, has_cubic):
    if not has_cubic:
        return K
    n = K.shape[0]
    i, j, k = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
    return np.where((i < j) & (j < k), K, 0.0)


def enum_logsumexp(const, b, J, K, has_cubic, n):
    total = 1 << n
    K = _upper3(K, has_cubic)
    parts = []
    for s in range(0, total, _CHUNK):
        _, S = _spins(s, min(total, s + _CHUNK), n)
        parts.append(logsumexp(_chunk_energies(const, b, J, K, has_cubic, S)))
    return float(logsumexp(np.array(parts)))


def gibbs_moments(energies, log_z, n):
    total = energies.shape[0]
    mag = np.zeros(n)
    corr = np.zeros((n, n))
    mean_e = 0.0
    mean_lg = 0.0
    for s in range(0, total, _CHUNK):
        _, S = _spins(s, min(total, s + _CHUNK), n)
        lg = energies[s:s + S.shape[0]] - log_z
        p = np.exp(lg)
        mean_e += p @ energies[s:s + S.shape[0]]
        mean_lg += p @ lg
        mag += p @ S
        corr += (S * p[:, None]).T @ S
    np.fill_diagonal(corr, 1.0)
    return mag, corr, float(mean_e), float(mean_lg)


def _popcount(x):
    if hasattr(np, "bitwise_count"):
        return np.bitwise_count(x)
    x = x.astype(np.uint64)
    c = np.zeros(x.shape, dtype=np.int64)
    while np.any(x):
        c += (x & np.uint64(1)).astype(np.int64)
        x = x >> np.uint64(1)
    return c


def cluster_stats(energies, log_z, n, code, dmax):
    total = energies.shape[0]
    msum = np.zeros((dmax.shape[0], n))
    wsum = np.zeros(dmax.shape[0])
    for s in range(0, total, _CHUNK):
        codes, S = _spins(s, min(total, s + _CHUNK), n)
        d = _popcount(codes ^ code)
        p = np.exp(energies[s:s + S.shape[0]] - log_z)
        for t, dm in enumerate(dmax):
            sel = d <= dm
            wsum[t] += p[sel].sum()
            msum[t] += p[sel] @ S[sel]
    return msum, wsum
