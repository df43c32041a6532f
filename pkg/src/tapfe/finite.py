"""Finite-N laboratory: disorder, exact enumeration, TAP ascent, pure states."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import kernels
from .errors import (DegenerateStateError, DomainError, OptimizerError, SizeError,
                     UnsupportedPError)
from .mixture import MixtureSpec, bernoulli_entropy, onsager_C, plefka_for_spec
from .rng import stream

MAX_EXACT_N = 24
MAX_GIBBS_N = 20
MAX_P3_N = 64
MAX_TAP_N = 500
CLIP = 1.0 - 1e-9


@dataclass(frozen=True, eq=False)
class FiniteInstance:
    """One disorder realisation with unsymmetrised Gaussian couplings."""

    spec: MixtureSpec
    N: int
    seed: int
    couplings: dict

    @property
    def h(self) -> float:
        return self.spec.h

    @property
    def p_list(self) -> tuple:
        return tuple(sorted(self.couplings))

    def scale(self, p: int) -> float:
        return self.spec.coeffs[p] * self.N ** (-(p - 1) / 2.0)


def sample_instance(spec: MixtureSpec, N: int, seed: int, max_n_p3: int = MAX_P3_N) -> FiniteInstance:
    """Draw i.i.d. standard normals over all ordered p-tuples for each active p."""
    if N < 1:
        raise DomainError("N must be >= 1")
    active = [p for p, b in spec.coeffs.items() if b != 0.0]
    bad = [p for p in active if p not in (2, 3)]
    if bad:
        raise UnsupportedPError(f"finite-N couplings support p in {{2, 3}}, got {bad}")
    if 3 in active and N > max_n_p3:
        raise SizeError(f"N={N} exceeds the p=3 storage cap {max_n_p3}")
    coup = {}
    for p in active:
        g = stream(seed, "couplings", N, p).standard_normal((N,) * p)
        g.setflags(write=False)
        coup[p] = g
    return FiniteInstance(spec, int(N), int(seed), coup)


def _check_m(inst, m):
    m = np.asarray(m, dtype=float)
    if m.shape != (inst.N,):
        raise DomainError(f"expected a vector of length {inst.N}, got shape {m.shape}")
    return m


def hamiltonian(inst: FiniteInstance, m) -> float:
    """H_N(m) = X_N(m) + h sum_i m_i on soft configurations."""
    m = _check_m(inst, m)
    if np.any(np.abs(m) > 1.0):
        raise DomainError("m must lie in [-1, 1]^N")
    e = inst.h * m.sum()
    for p, g in inst.couplings.items():
        if p == 2:
            e += inst.scale(2) * (m @ g @ m)
        else:
            e += inst.scale(3) * ((g @ m) @ m) @ m
    return float(e)


def field_X(inst: FiniteInstance, m) -> np.ndarray:
    """Gradient of X_N at m."""
    m = _check_m(inst, m)
    out = np.zeros(inst.N)
    for p, g in inst.couplings.items():
        c = inst.scale(p)
        if p == 2:
            out += c * (g @ m + g.T @ m)
        else:
            out += c * (np.einsum("ijk,j,k->i", g, m, m) + np.einsum("jik,j,k->i", g, m, m)
                        + np.einsum("jki,j,k->i", g, m, m))
    return out


def energy_model(inst: FiniteInstance):
    """Reduce H_N on {-1,1}^N to const + b.s + sum_{i<j} J s s + sum_{i<j<k} K s s s.

    J and K are returned fully symmetric with zero entries on repeated indices.
    """
    n = inst.N
    const = 0.0
    b = np.full(n, inst.h)
    J = np.zeros((n, n))
    K = np.zeros((1, 1, 1))
    has_cubic = False
    if 2 in inst.couplings:
        c = inst.scale(2)
        g = inst.couplings[2]
        const += c * np.trace(g)
        J = c * (g + g.T)
        np.fill_diagonal(J, 0.0)
    if 3 in inst.couplings:
        t = inst.scale(3) * inst.couplings[3]
        d = np.einsum("iii->i", t)
        b = b + d + (np.einsum("aac->c", t) - d) + (np.einsum("aca->c", t) - d) \
            + (np.einsum("caa->c", t) - d)
        sym = (t + t.transpose(0, 2, 1) + t.transpose(1, 0, 2) + t.transpose(1, 2, 0)
               + t.transpose(2, 0, 1) + t.transpose(2, 1, 0))
        i, j, k = np.indices((n, n, n))
        K = np.where((i != j) & (j != k) & (i != k), sym, 0.0)
        has_cubic = n >= 3
    return float(const), np.ascontiguousarray(b), np.ascontiguousarray(J), \
        np.ascontiguousarray(K), has_cubic


def exact_free_energy(inst: FiniteInstance) -> float:
    """N^-1 log sum_sigma exp H_N(sigma) by Gray-code enumeration."""
    if inst.N > MAX_EXACT_N:
        raise SizeError(f"exact enumeration is capped at N={MAX_EXACT_N}")
    const, b, J, K, cub = energy_model(inst)
    return float(kernels.enum_logsumexp(const, b, J, K, cub, inst.N)) / inst.N


def all_energies(inst: FiniteInstance) -> np.ndarray:
    """H_N(sigma) indexed by the code with bit i set iff sigma_i = -1."""
    if inst.N > MAX_GIBBS_N:
        raise SizeError(f"storing all energies is capped at N={MAX_GIBBS_N}")
    const, b, J, K, cub = energy_model(inst)
    return kernels.enum_energies(const, b, J, K, cub, inst.N)


def spins_of(code: int, n: int) -> np.ndarray:
    return 1.0 - 2.0 * ((int(code) >> np.arange(n)) & 1)


def code_of(sigma) -> int:
    sigma = np.asarray(sigma)
    return int(sum(1 << i for i, s in enumerate(sigma) if s < 0))


@dataclass(frozen=True, eq=False)
class GibbsStats:
    magnetization: np.ndarray
    entropy: float
    overlap_second_moment: float
    mean_energy: float
    free_energy: float
    log_z: float
    correlations: np.ndarray
    energies: np.ndarray = field(repr=False)


def gibbs_statistics(inst: FiniteInstance) -> GibbsStats:
    """Magnetisation, <log G>/N, E<R^2> and <H>/N from one enumeration."""
    e = all_energies(inst)
    lz = float(logsumexp(e))
    mag, corr, me, mlg = kernels.gibbs_moments(e, lz, inst.N)
    n = inst.N
    return GibbsStats(magnetization=mag, entropy=mlg / n,
                      overlap_second_moment=float((corr ** 2).sum()) / n ** 2,
                      mean_energy=me / n, free_energy=lz / n, log_z=lz,
                      correlations=corr, energies=e)


def tap_value(inst: FiniteInstance, m) -> float:
    """H_N(m)/N - I_N(m) + C(q_EA)."""
    m = _check_m(inst, m)
    q = float(np.mean(m * m))
    return hamiltonian(inst, m) / inst.N - float(np.mean(bernoulli_entropy(m))) \
        + onsager_C(inst.spec, min(q, 1.0))


def tap_gradient(inst: FiniteInstance, m) -> np.ndarray:
    """Gradient of tap_value for m strictly inside (-1, 1)^N."""
    m = _check_m(inst, m)
    if np.any(np.abs(m) >= 1.0):
        raise DomainError("tap_gradient needs |m_i| < 1")
    q = float(np.mean(m * m))
    sp = inst.spec
    return (field_X(inst, m) + inst.h - np.arctanh(m)
            - sp.xi(q, 2) * (1.0 - q) * m) / inst.N


@dataclass(frozen=True, eq=False)
class TapPoint:
    """Magnetisation with its self-overlap and TAP value.

    grad_norm is max_i |N * dF/dm_i|, the scale-free stationarity residual.
    """

    m: np.ndarray
    q_EA: float
    value: float
    grad_norm: float
    constraint_active: bool
    iterations: int = 0
    start: str = ""


def _project(m, lo, hi):
    m = np.clip(m, -CLIP, CLIP)
    for _ in range(8):
        q = float(np.mean(m * m))
        if q < lo - 1e-15 and q > 0.0:
            m = np.clip(m * math.sqrt(lo / q), -CLIP, CLIP)
        elif q > hi + 1e-15:
            m = np.clip(m * math.sqrt(hi / q), -CLIP, CLIP)
        else:
            break
    return m


def _is_active(m, lo, hi):
    q = float(np.mean(m * m))
    edge = (lo > 0.0 and q <= lo + 1e-10) or (hi < 1.0 and q >= hi - 1e-10)
    return bool(edge or np.any(np.abs(m) >= CLIP - 1e-12))


def _ascend(inst, m, lo, hi, max_iter, tol):
    n = inst.N
    m = _project(m, lo, hi)
    f = tap_value(inst, m)
    g = tap_gradient(inst, m)
    step = 1.0
    it = 0
    for it in range(1, max_iter + 1):
        d = n * g * (1.0 - m * m)  # diagonal preconditioner from the entropy Hessian
        if np.max(np.abs(n * g)) < tol and not _is_active(m, lo, hi):
            break
        t = step
        accepted = False
        for _ in range(60):
            m_new = _project(m + t * d, lo, hi)
            f_new = tap_value(inst, m_new)
            if f_new >= f + 1e-4 * float(g @ (m_new - m)) and f_new >= f:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        g_new = tap_gradient(inst, m_new)
        s = m_new - m
        y = n * (g_new - g)
        sy = float(s @ y)
        step = min(max(abs(float(s @ s) / sy), 1e-6), 1e3) if sy != 0.0 else 1.0
        small = np.max(np.abs(s)) < 1e-15
        m, f, g = m_new, f_new, g_new
        if small:
            break
    gn = float(np.max(np.abs(n * g)))
    return TapPoint(m=m, q_EA=float(np.mean(m * m)), value=tap_value(inst, m), grad_norm=gn,
                    constraint_active=_is_active(m, lo, hi), iterations=it)


def maximize_tap(inst: FiniteInstance, window=(0.0, 1.0), n_random: int = 3, gibbs_mag=None,
                 seed: int = 0, max_iter: int = 5000, tol: float = 1e-8) -> TapPoint:
    """Projected gradient ascent of the TAP functional over {m : q_EA in window}."""
    lo, hi = float(window[0]), float(window[1])
    if not (0.0 <= lo <= hi <= 1.0):
        raise DomainError("window must satisfy 0 <= lo <= hi <= 1")
    if inst.N > MAX_TAP_N:
        raise SizeError(f"TAP ascent is capped at N={MAX_TAP_N}")
    rng = stream(seed, "tap", inst.seed, inst.N)
    starts = [("zero", 0.01 * rng.standard_normal(inst.N))]
    if gibbs_mag is not None:
        starts.append(("gibbs", np.asarray(gibbs_mag, dtype=float).copy()))
    for i in range(n_random):
        starts.append((f"random{i}", math.tanh(1.0) * rng.choice([-1.0, 1.0], inst.N)))
    best = None
    errors = []
    for name, m0 in starts:
        try:
            pt = _ascend(inst, m0, lo, hi, max_iter, tol)
        except (FloatingPointError, DomainError) as exc:
            errors.append(f"{name}: {exc}")
            continue
        if not np.isfinite(pt.value):
            errors.append(f"{name}: non-finite value")
            continue
        pt = TapPoint(pt.m, pt.q_EA, pt.value, pt.grad_norm, pt.constraint_active,
                      pt.iterations, name)
        if best is None or pt.value > best.value:
            best = pt
    if best is None:
        raise OptimizerError("all TAP restarts failed", errors)
    return best


@dataclass(frozen=True, eq=False)
class PureState:
    m: np.ndarray
    weight: float


def _dmax(n, threshold):
    # R(sigma, rho) >= r  <=>  Hamming distance <= N (1 - r) / 2
    return int(math.floor(n * (1.0 - threshold) / 2.0 + 1e-9))


def pure_state_barycentres(inst: FiniteInstance, sigma, thresholds, stats: GibbsStats | None = None):
    """Barycentre and Gibbs weight of {rho : R(sigma, rho) >= r} for each r in thresholds."""
    if inst.N > MAX_GIBBS_N:
        raise SizeError(f"pure states need N <= {MAX_GIBBS_N}")
    stats = stats or gibbs_statistics(inst)
    n = inst.N
    dm = np.array([_dmax(n, r) for r in thresholds], dtype=np.int64)
    if np.any(dm < 0):
        raise DegenerateStateError("threshold above 1: the pure state is empty")
    dm = np.minimum(dm, n)
    msum, w = kernels.cluster_stats(stats.energies, stats.log_z, n, code_of(sigma), dm)
    if np.any(w <= 0.0):
        raise DegenerateStateError("pure state with zero Gibbs weight")
    return [PureState(msum[i] / w[i], float(w[i])) for i in range(len(thresholds))]


def pure_state_barycentre(inst: FiniteInstance, sigma, epsilon: float, q_p: float,
                          stats: GibbsStats | None = None) -> PureState:
    """m(sigma) and W_N(sigma) for the neighbourhood R(sigma, rho) >= q_P - epsilon."""
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != (inst.N,) or np.any(np.abs(sigma) != 1.0):
        raise DomainError("sigma must be a +-1 vector of length N")
    return pure_state_barycentres(inst, sigma, [q_p - epsilon], stats)[0]


def sample_gibbs(inst: FiniteInstance, n: int, seed: int, stats: GibbsStats | None = None):
    """Exact draws from G_N by inverse CDF over the enumerated weights."""
    stats = stats or gibbs_statistics(inst)
    cdf = np.cumsum(np.exp(stats.energies - stats.log_z))
    u = stream(seed, "gibbs", inst.seed, inst.N).random(n) * cdf[-1]
    codes = np.minimum(np.searchsorted(cdf, u, side="right"), cdf.shape[0] - 1)
    return np.array([spins_of(c, inst.N) for c in codes])


def pure_state_gap(inst: FiniteInstance, q_p: float, epsilons, n_samples: int = 16, seed: int = 0,
                   stats: GibbsStats | None = None) -> dict:
    """Monte Carlo E_G (F_TAP(m(sigma)) - F_N)^2 for each epsilon."""
    stats = stats or gibbs_statistics(inst)
    sig = sample_gibbs(inst, n_samples, seed, stats)
    eps = list(epsilons)
    acc = np.zeros(len(eps))
    for s in sig:
        states = pure_state_barycentres(inst, s, [q_p - e for e in eps], stats)
        for i, st in enumerate(states):
            acc[i] += (tap_value(inst, st.m) - stats.free_energy) ** 2
    return {e: float(a / n_samples) for e, a in zip(eps, acc)}


def entropy_discrepancy(inst: FiniteInstance, stats: GibbsStats | None = None,
                        q_star: float | None = None) -> dict:
    """<log G>/N - I_N(<sigma>) next to C evaluated at two overlap proxies."""
    stats = stats or gibbs_statistics(inst)
    lhs = stats.entropy - float(np.mean(bernoulli_entropy(np.clip(stats.magnetization, -1, 1))))
    r2 = stats.overlap_second_moment
    q_hat = math.sqrt(min(max(r2, 0.0), 1.0))
    out = {"lhs": lhs, "rhs": onsager_C(inst.spec, q_hat), "q_hat": q_hat,
           "overlap_second_moment": r2}
    if q_star is not None:
        out["rhs_fixed_point"] = onsager_C(inst.spec, q_star)
        out["q_star"] = q_star
    return out


def instance_row(spec: MixtureSpec, N: int, seed: int, window, q_p: float | None,
                 q_star: float | None, epsilon: float, n_samples: int = 16) -> dict:
    """One manifest row: exact, TAP and pure-state quantities for (seed, N)."""
    inst = sample_instance(spec, N, seed)
    row = {"seed": seed, "N": N}
    status = []
    stats = None
    if N <= MAX_GIBBS_N:
        stats = gibbs_statistics(inst)
        row["F_N"] = stats.free_energy
        row["F_TAP_at_gibbs_mag"] = tap_value(inst, stats.magnetization)
        ed = entropy_discrepancy(inst, stats, q_star)
        row["entropy_lhs"] = ed["lhs"]
        row["C_rhs"] = ed.get("rhs_fixed_point", math.nan)
        row["C_rhs_overlap"] = ed["rhs"]
        row["q_hat"] = ed["q_hat"]
    elif N <= MAX_EXACT_N:
        row["F_N"] = exact_free_energy(inst)
        status.append("gibbs statistics skipped (N > 20)")
    else:
        status.append("exact enumeration skipped (N > 24)")
    if N <= MAX_TAP_N:
        mag = stats.magnetization if stats is not None else None
        tp = maximize_tap(inst, window, gibbs_mag=mag, seed=seed)
        row["F_TAP_max_constrained"] = tp.value
    if stats is not None and q_p is not None:
        gap = pure_state_gap(inst, q_p, [epsilon], n_samples, seed, stats)
        row["pure_state_gap"] = gap[epsilon]
    if stats is not None:
        try:
            ok, margin = plefka_for_spec(spec, stats.magnetization)
            row["plefka_flag"] = ok
            row["plefka_margin"] = margin
        except Exception:
            row["plefka_flag"] = "n/a"
    row["status"] = "; ".join(status) or "ok"
    return row


ROW_COLUMNS = ["seed", "N", "F_N", "F_TAP_at_gibbs_mag", "F_TAP_max_constrained", "entropy_lhs",
               "C_rhs", "C_rhs_overlap", "q_hat", "pure_state_gap", "plefka_flag",
               "plefka_margin", "status"]


def _row_job(args):
    return instance_row(*args)


def run_manifest(spec: MixtureSpec, N_list, seeds, epsilon: float, window, q_p: float | None,
                 q_star: float | None, n_samples: int = 16, workers: int = 1) -> list:
    """Rows for every (seed, N); instances run in parallel, output order is fixed."""
    jobs = [(spec, int(n), int(s), window, q_p, q_star, epsilon, n_samples)
            for n in N_list for s in seeds]
    if workers <= 1:
        return [_safe_row(j) for j in jobs]
    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(workers) as ex:
        return list(ex.map(_safe_row, jobs))


def _safe_row(job):
    try:
        return _row_job(job)
    except (SizeError, UnsupportedPError, DegenerateStateError, OptimizerError) as exc:
        return {"seed": job[2], "N": job[1], "status": f"failed: {exc}"}
