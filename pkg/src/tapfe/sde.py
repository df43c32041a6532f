"""Optimal-control SDE driven by a Parisi PDE solution, and derived estimators.

    dX = xi''(s) alpha(s) d_x Phi(s, X) ds + sqrt(xi''(s)) dW,   X(0) = h
    v(s) = d_x Phi(s, X(s))

Integrated coefficients are used on each step (drift alpha * (xi'(t+dt) - xi'(t)),
noise variance xi'(t+dt) - xi'(t)), so the region where alpha = 0 is sampled
exactly.  Standard errors come from independent batches, each with its own
counter-based stream.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DomainError, GridEscapeError, NotApplicableError
from .mixture import MixtureSpec, onsager_C, theta
from .pde import LAMBDA_CLOSED_FORM, PdeSolution, log2cosh
from .profiles import StepProfile, evaluate
from .rng import stream


@dataclass(frozen=True)
class SdeRun:
    n_paths: int
    n_steps: int
    s_checkpoints: np.ndarray
    v_sq_mean: np.ndarray
    v_sq_se: np.ndarray
    v_mean: np.ndarray
    v_mean_se: np.ndarray
    terminal_X: np.ndarray
    seed: int
    end_s: float
    h: float
    batch_v_sq: np.ndarray
    batch_v: np.ndarray
    batch_cross: np.ndarray | None = None

    @property
    def n_batches(self) -> int:
        return self.batch_v_sq.shape[0]

    def batch_estimate(self, fn):
        """Mean and batch standard error of E fn(X(end_s))."""
        vals = np.array([np.mean(fn(row)) for row in self.terminal_X])
        return mean_se(vals)

    def terminal_summary(self) -> dict:
        x = self.terminal_X.ravel()
        return {"mean": float(x.mean()), "std": float(x.std()),
                "min": float(x.min()), "max": float(x.max()),
                "quantiles": [float(v) for v in np.quantile(x, [0.01, 0.25, 0.5, 0.75, 0.99])]}

    def checkpoint_index(self, s: float) -> int:
        i = int(np.argmin(np.abs(self.s_checkpoints - s)))
        if abs(self.s_checkpoints[i] - s) > 1e-12:
            raise DomainError(f"s={s} is not a checkpoint")
        return i


def mean_se(batch_values):
    b = np.asarray(batch_values, dtype=float)
    n = b.shape[0]
    m = b.mean(axis=0)
    se = b.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(m)
    return m, se


def _merge_times(parts, tol=1e-14):
    t = np.unique(np.concatenate(parts))
    keep = np.concatenate([[True], np.diff(t) > tol])
    return t[keep]


def _locate(levels, t):
    """Level index and in-panel weight for each time in t."""
    L = levels.shape[0]
    idx = np.searchsorted(levels, t + 1e-14, side="right") - 1
    idx = np.clip(idx, 0, L - 1)
    w = np.zeros_like(t)
    inner = idx < L - 1
    span = levels[np.minimum(idx + 1, L - 1)] - levels[idx]
    w[inner] = (t[inner] - levels[idx[inner]]) / span[inner]
    w = np.clip(w, 0.0, 1.0)
    w[np.abs(w) < 1e-13] = 0.0
    return idx.astype(np.int64), w


def simulate(spec: MixtureSpec, profile: StepProfile, pde: PdeSolution, end_s: float | None = None,
             n_paths: int = 100_000, n_steps: int = 2000, seed: int = 0, checkpoints=None,
             n_batches: int = 100, cross_moments: bool = False, backend: str | None = None) -> SdeRun:
    """Euler scheme with antithetic pairs; records v at the checkpoints."""
    if pde.meta.get("profile") != profile.to_dict() or pde.meta.get("h") != spec.h:
        raise DomainError("the PDE solution was not built from this (spec, profile)")
    if end_s is None:
        end_s = pde.domain_end
    end_s = float(end_s)
    if not (0.0 <= end_s <= pde.domain_end + 1e-15):
        raise DomainError("end_s must lie in [0, domain_end]")
    end_s = min(end_s, pde.domain_end)
    n_batches = max(1, min(n_batches, n_paths // 2))
    half = n_paths // (2 * n_batches)
    if half < 1:
        raise DomainError("need at least two paths per batch")
    n_paths = 2 * half * n_batches
    impl = kernels.get_impl(backend) if backend else kernels.active

    if checkpoints is None:
        ks = [q for q, _ in profile.knots if q <= end_s]
        checkpoints = np.concatenate([[0.0, end_s], ks, np.linspace(0.0, end_s, 51)])
    ck = _merge_times([np.asarray(checkpoints, dtype=float)])
    if ck.size and (ck[0] < 0.0 or ck[-1] > end_s + 1e-14):
        raise DomainError("checkpoints must lie in [0, end_s]")
    levels = pde.s_levels
    lev_in = levels[levels <= end_s + 1e-14]
    if end_s > 0.0:
        times = _merge_times([np.linspace(0.0, end_s, n_steps + 1), lev_in, ck])
    else:
        times = np.array([0.0])
    T = times.shape[0] - 1
    st_level, st_w = _locate(levels, times[:-1])
    dxi = np.maximum(np.diff(spec.xi(times, 1)), 0.0) if T else np.zeros(0)
    zeta = np.asarray(pde.zeta)
    st_zeta = zeta[np.minimum(st_level, zeta.shape[0] - 1)] if zeta.size else np.zeros(T)
    st_drift = np.ascontiguousarray(st_zeta * dxi)
    st_sd = np.ascontiguousarray(np.sqrt(dxi))
    ck_step = np.searchsorted(times, ck - 1e-14).astype(np.int64)
    ck_level, ck_w = _locate(levels, ck)
    dphi = np.ascontiguousarray(pde.dphi)

    C = ck.shape[0]
    bv2 = np.empty((n_batches, C))
    bv = np.empty((n_batches, C))
    bcross = np.empty((n_batches, C, C)) if cross_moments else None
    term = np.empty((n_batches, 2 * half))
    escaped = 0
    for b in range(n_batches):
        z = stream(seed, "sde", b).standard_normal((half, T))
        V, xe, esc = impl.sde_paths(dphi, pde.x0, pde.dx, st_level, st_w, st_drift, st_sd,
                                    ck_step, ck_level, ck_w, float(spec.h), z)
        escaped += esc
        bv2[b] = (V * V).mean(axis=0)
        bv[b] = V.mean(axis=0)
        if cross_moments:
            bcross[b] = V.T @ V / V.shape[0]
        term[b] = xe
    if escaped:
        raise GridEscapeError(
            f"{escaped / n_paths:.3g} of the paths ({escaped}/{n_paths}) left the x-grid"
        )
    m2, se2 = mean_se(bv2)
    m1, se1 = mean_se(bv)
    return SdeRun(n_paths=n_paths, n_steps=T, s_checkpoints=ck, v_sq_mean=m2, v_sq_se=se2,
                  v_mean=m1, v_mean_se=se1, terminal_X=term, seed=seed, end_s=end_s,
                  h=spec.h, batch_v_sq=bv2, batch_v=bv, batch_cross=bcross)


def optimality_profile(run: SdeRun, spec: MixtureSpec):
    """List of (s, g(s), se) with g(s) = xi''(s) (E v(s)^2 - s)."""
    out = []
    for i, s in enumerate(run.s_checkpoints):
        x2 = spec.xi(s, 2)
        out.append((float(s), float(x2 * (run.v_sq_mean[i] - s)), float(x2 * run.v_sq_se[i])))
    return out


def pure_state_moments(run: SdeRun, k_max: int):
    """[(k, E tanh(X(end))^k, se)] for k = 0..k_max."""
    out = [(0, 1.0, 0.0)]
    for k in range(1, k_max + 1):
        m, se = run.batch_estimate(lambda x, k=k: np.tanh(x) ** k)
        out.append((k, float(m), float(se)))
    return out


def atom_sums(spec: MixtureSpec, alpha: StepProfile):
    """(sum_i w_i (xi(1) - xi(q_i)), sum_i w_i xi(q_i)) over the atoms of alpha."""
    a = b = 0.0
    x1 = spec.xi(1.0)
    for q, w in alpha.atoms:
        a += w * (x1 - spec.xi(q))
        b += w * spec.xi(q)
    return a, b


def delta_and_energy(spec: MixtureSpec, alpha_p: StepProfile, run: SdeRun, parisi_value: float) -> dict:
    """Monte Carlo Delta, its closed-form counterpart and the energy assembly."""
    from .profiles import support_max
    qp = support_max(alpha_p)
    if abs(run.end_s - qp) > 1e-12:
        raise DomainError("the run must stop at the top of the support")
    h = spec.h
    d_mc, d_se = run.batch_estimate(lambda x: (x - h) * np.tanh(x) - log2cosh(x))
    s1, s2 = atom_sums(spec, alpha_p)
    c = onsager_C(spec, qp)
    d_id = -c - parisi_value + s1
    energy = spec.xi(qp, 1) - theta(spec, qp) - s2
    resid = abs(energy - d_id + c - parisi_value)
    return {"Delta_mc": float(d_mc), "Delta_mc_se": float(d_se), "Delta_identity": float(d_id),
            "energy_limit": float(energy), "assembly_residual": float(resid)}


def _gl5():
    t, w = np.polynomial.legendre.leggauss(5)
    return t, w


def _integrate_pieces(spec, run, breaks, weight_fn, upper):
    """Per-batch integral of xi''(s) (E v(s)^2 - s) weight(s) over [0, upper]."""
    t, w = _gl5()
    pts = _merge_times([breaks, run.s_checkpoints, [0.0, upper]])
    pts = pts[(pts >= 0.0) & (pts <= upper)]
    est = np.zeros(run.n_batches)
    for a, b in zip(pts[:-1], pts[1:]):
        if b <= a:
            continue
        mid = 0.5 * (a + b)
        wt = weight_fn(mid)
        if wt == 0.0:
            continue
        s = mid + 0.5 * (b - a) * t
        x2 = spec.xi(s, 2)
        for j in range(run.n_batches):
            ev2 = np.interp(s, run.s_checkpoints, run.batch_v_sq[j])
            est[j] += 0.5 * (b - a) * wt * np.dot(w, x2 * (ev2 - s))
    return est


def directional_derivative_unconstrained(spec: MixtureSpec, alpha0: StepProfile, alpha: StepProfile,
                                         run: SdeRun):
    """1/2 int_0^1 xi'' (E w0^2 - s)(alpha - alpha0) ds; returns (estimate, se)."""
    if alpha0.mode != "CDF" or alpha.mode != "CDF":
        raise DomainError("both profiles must be CDFs")
    if abs(run.end_s - 1.0) > 1e-12:
        raise DomainError("the run must cover [0, 1]")
    breaks = np.array([q for q, _ in alpha.knots] + [q for q, _ in alpha0.knots])
    est = 0.5 * _integrate_pieces(spec, run, breaks,
                                  lambda s: evaluate(alpha, s) - evaluate(alpha0, s), 1.0)
    m, se = mean_se(est)
    return float(m), float(se)


def directional_derivative_constrained(spec: MixtureSpec, u: float, lam0: float, gamma0: StepProfile,
                                       lam: float, gamma: StepProfile, run: SdeRun):
    """Right derivative of P_u from (lam0, gamma0) toward (lam, gamma); (estimate, se)."""
    if not abs(lam0) < LAMBDA_CLOSED_FORM:
        raise NotApplicableError("the derivative formula needs |lambda0| < 1/4")
    if abs(run.end_s - u) > 1e-12:
        raise DomainError("the run must stop at u")
    breaks = np.array([q for q, _ in gamma.knots] + [q for q, _ in gamma0.knots])

    def dg(s):
        return evaluate(gamma, s) - evaluate(gamma0, s) if s < u else 0.0

    est = 0.5 * _integrate_pieces(spec, run, breaks, dg, u)
    i = run.checkpoint_index(u)
    est = est + (lam - lam0) * (run.batch_v_sq[:, i] - u)
    m, se = mean_se(est)
    return float(m), float(se)


def profile_csv(run: SdeRun, spec: MixtureSpec, path: str):
    """Write s, v_sq_mean, v_sq_se, g, g_se per checkpoint."""
    with open(path, "w") as fh:
        fh.write("s,v_sq_mean,v_sq_se,g,g_se\n")
        for i, (s, g, gse) in enumerate(optimality_profile(run, spec)):
            vals = (s, run.v_sq_mean[i], run.v_sq_se[i], g, gse)
            fh.write(",".join(format(float(v), ".17g") for v in vals) + "\n")
