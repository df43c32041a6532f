"""Minimisation of the Parisi functional and of its constrained soft-spin variant."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize, minimize_scalar
from scipy.special import expit, logit

from .errors import ConvergenceError, DomainError, OptimizerError
from .mixture import MixtureSpec, onsager_C
from .pde import (DEFAULT_GRID, LAMBDA_CLOSED_FORM, SEARCH_GRID, Boundary, GridConfig,
                  constrained_functional, log2cosh, parisi_functional, soft_arrays, solve_parisi)
from .profiles import GAMMA, StepProfile, restrict_to_gamma, support_max
from .quadrature import gauss_expect
from .rng import stream

log = logging.getLogger(__name__)

WEIGHT_DROP = 1e-6
PARSIMONY_TOL = 1e-10
LAMBDA_BOUND = 0.249
GAMMA_MAX = 50.0
LAMBDA_WIDE = 20.0


@dataclass
class MinimizeResult:
    profile: StepProfile
    value: float
    lam: float | None = None
    iterations: int = 0
    converged: bool = True
    diagnostics: dict = field(default_factory=dict)
    starts: list = field(default_factory=list)
    flags: list = field(default_factory=list)

    @property
    def q_P(self):
        return support_max(self.profile) if self.profile.mode == "CDF" else None

    def to_dict(self) -> dict:
        return {"value": self.value, "lambda": self.lam, "profile": self.profile.to_dict(),
                "q_P": self.q_P, "converged": self.converged, "starts": self.starts,
                "diagnostics": self.diagnostics, "flags": self.flags,
                "iterations": self.iterations}


# ---------------------------------------------------------------- replica symmetric

def rs_fixed_point(spec: MixtureSpec, damping: float = 0.5, tol: float = 1e-12,
                   max_iter: int = 100_000) -> float:
    """Solution of q = E tanh^2(z sqrt(xi'(q)) + h) by damped iteration from q = 0.5."""
    h = spec.h
    q = 0.5
    res = math.inf
    for _ in range(max_iter):
        sd = math.sqrt(max(spec.xi(q, 1), 0.0))
        target = gauss_expect(lambda y: np.tanh(y) ** 2, h, sd)
        res = abs(target - q)
        if res < tol:
            return float(target)
        q = (1.0 - damping) * q + damping * target
        if h == 0.0 and q < 1e-10:
            return 0.0
    raise ConvergenceError(f"RS fixed point did not converge (residual {res:.3e})", res)


def rs_free_energy(spec: MixtureSpec, q: float) -> float:
    """E log 2cosh(h + z sqrt(xi'(q))) + C(q)."""
    if not (0.0 <= q <= 1.0):
        raise DomainError("q must lie in [0, 1]")
    sd = math.sqrt(max(spec.xi(q, 1), 0.0))
    return gauss_expect(log2cosh, spec.h, sd) + onsager_C(spec, q)


def rs_minimum(spec: MixtureSpec):
    """(q, value) minimising rs_free_energy over [0, 1]."""
    cands = [0.0]
    try:
        cands.append(rs_fixed_point(spec))
    except ConvergenceError:
        pass
    r = minimize_scalar(lambda q: rs_free_energy(spec, q), bounds=(0.0, 1.0), method="bounded",
                        options={"xatol": 1e-12, "maxiter": 500})
    cands.append(float(r.x))
    vals = [(rs_free_energy(spec, q), q) for q in cands]
    best = min(vals)
    return best[1], best[0]


# ---------------------------------------------------------------- parameterisations

def _stick(b):
    """Increasing fractions in (0, 1) ending at 1 from k-1 reals."""
    v, out = 0.0, []
    for x in b:
        v = v + (1.0 - v) * expit(x)
        out.append(v)
    out.append(1.0)
    return np.array(out)


def _unstick(v):
    out, prev = [], 0.0
    for x in v[:-1]:
        frac = (x - prev) / max(1.0 - prev, 1e-300)
        out.append(logit(np.clip(frac, 1e-12, 1 - 1e-12)))
        prev = x
    return np.array(out)


def _cdf_from_params(theta, k):
    qs = np.sort(expit(theta[:k]))
    vs = _stick(theta[k:])
    return qs, vs


def _cdf_params(qs, vs):
    qs = np.clip(np.asarray(qs, float), 1e-9, 1 - 1e-9)
    return np.concatenate([logit(qs), _unstick(np.asarray(vs, float))])


def _safe_profile(qs, vs, domain_end=1.0, mode="CDF"):
    return StepProfile(tuple(zip(qs, vs)), domain_end, mode)


def drop_light_atoms(profile: StepProfile, tol: float = WEIGHT_DROP) -> StepProfile:
    """Remove atoms lighter than tol, folding their mass into a neighbour."""
    kn = list(profile.knots)
    changed = True
    while changed and len(kn) > 1:
        changed = False
        prev = 0.0
        for i, (q, v) in enumerate(kn):
            w = v - prev
            if w < tol:
                if i == len(kn) - 1:
                    kn[i - 1] = (kn[i - 1][0], v)
                del kn[i]
                changed = True
                break
            prev = v
    return StepProfile(tuple(kn), profile.domain_end, profile.mode)


def _profile_key(p: StepProfile):
    return (len(p.knots), tuple(q for q, _ in p.knots), tuple(v for _, v in p.knots))


def _pick(cands):
    """Best (value, profile) with parsimony: fewer atoms win ties within PARSIMONY_TOL."""
    best_val = min(v for v, _ in cands)
    near = [(v, p) for v, p in cands if v <= best_val + PARSIMONY_TOL]
    near.sort(key=lambda vp: _profile_key(vp[1]))
    return near[0]


def _polish(fn, x, passes=2, width=0.5):
    fx = fn(x)
    nfev = 1
    for _ in range(passes):
        for i in range(x.shape[0]):
            def f1(t, i=i):
                y = x.copy()
                y[i] = t
                return fn(y)
            r = minimize_scalar(f1, bracket=(x[i] - width, x[i] + width),
                                options={"xtol": 1e-10, "maxiter": 100})
            nfev += r.nfev
            if r.fun < fx:
                x = x.copy()
                x[i] = r.x
                fx = r.fun
    return x, fx, nfev


def _nelder_mead(fn, x0, maxfev, step=0.5):
    n = x0.shape[0]
    simplex = np.vstack([x0] + [x0 + step * np.eye(n)[i] for i in range(n)])
    r = minimize(fn, x0, method="Nelder-Mead",
                 options={"initial_simplex": simplex, "xatol": 1e-9, "fatol": 1e-13,
                          "maxfev": maxfev, "adaptive": n > 4})
    return r


# ---------------------------------------------------------------- unconstrained

def minimize_parisi(spec: MixtureSpec, k: int = 3, n_starts: int = 8, seed: int = 0,
                    search_grid: GridConfig = SEARCH_GRID, grid: GridConfig = DEFAULT_GRID,
                    maxfev: int | None = None, diagnostics: bool = True,
                    diag_paths: int = 20_000, diag_steps: int = 500,
                    warm: StepProfile | None = None) -> MinimizeResult:
    """Minimise the Parisi functional over CDFs with at most k atoms."""
    if k < 1:
        raise DomainError("k must be >= 1")
    trace = []
    cands = []
    q_rs, _ = rs_minimum(spec)
    for q in sorted({0.0, q_rs}):
        p = StepProfile.dirac(q)
        cands.append((parisi_functional(spec, p, grid), p))
        trace.append({"start": f"dirac({q:.6g})", "value": cands[-1][0]})
    iters = 0
    prev = warm if warm is not None else StepProfile.dirac(q_rs)
    for kk in range(2, k + 1):
        res = _minimize_k(spec, kk, n_starts, seed, search_grid, maxfev, prev, trace)
        iters += res[2]
        for p in res[0]:
            cands.append((parisi_functional(spec, p, grid), p))
        prev = _pick(cands)[1]
    if not cands or not all(np.isfinite(v) for v, _ in cands[:1]):
        raise OptimizerError("no finite candidate", trace)
    value, prof = _pick(cands)
    out = MinimizeResult(profile=prof, value=float(value), iterations=iters,
                         converged=True, starts=trace)
    if diagnostics:
        out.diagnostics = parisi_diagnostics(spec, prof, grid, diag_paths, diag_steps, seed)
    return out


def _minimize_k(spec, k, n_starts, seed, cfg, maxfev, prev, trace):
    dim = 2 * k - 1
    maxfev = maxfev or 300 * dim

    def obj(th):
        qs, vs = _cdf_from_params(th, k)
        try:
            return parisi_functional(spec, _safe_profile(qs, vs), cfg)
        except Exception:  # degenerate parameter corners
            return math.inf

    starts = []
    # nest the previous optimum: split its top atom
    pq = list(prev.qs)
    pv = list(prev.vs)
    while len(pq) < k:
        below = pv[-2] if len(pv) > 1 else 0.0
        pv[-1] = 0.5 * (below + 1.0)
        pq.append(min(pq[-1] + 0.02, 1 - 1e-6))
        pv.append(1.0)
    starts.append(_cdf_params(pq, pv))
    rng = stream(seed, "parisi", k)
    while len(starts) < n_starts:
        qs = np.sort(rng.uniform(0.02, 0.98, k))
        vs = np.concatenate([np.sort(rng.uniform(0.05, 0.95, k - 1)), [1.0]])
        starts.append(_cdf_params(qs, vs))
    found = []
    total = 0
    for i, x0 in enumerate(starts):
        r = _nelder_mead(obj, x0, maxfev)
        total += r.nfev
        trace.append({"start": f"k={k}#{i}", "value": float(r.fun), "nfev": int(r.nfev),
                      "converged": bool(r.success)})
        if np.isfinite(r.fun):
            found.append((float(r.fun), r.x))
    if not found:
        raise OptimizerError(f"all {k}-atom starts failed", trace)
    found.sort(key=lambda t: t[0])
    x, fx, nf = _polish(obj, found[0][1])
    total += nf
    profs = []
    for th in [x] + [f[1] for f in found[:2]]:
        qs, vs = _cdf_from_params(th, k)
        profs.append(drop_light_atoms(_safe_profile(qs, vs)))
    return profs, fx, total


def parisi_diagnostics(spec, alpha, grid=DEFAULT_GRID, n_paths=20_000, n_steps=500, seed=0) -> dict:
    """Optimality profile g at the atoms of alpha."""
    from .sde import optimality_profile, simulate
    qp = support_max(alpha)
    pde = solve_parisi(spec, alpha, Boundary(), grid)
    atom_qs = {q for q, _ in alpha.knots}
    ck = sorted({0.0, qp} | atom_qs)
    run = simulate(spec, alpha, pde, end_s=qp, n_paths=n_paths, n_steps=n_steps, seed=seed,
                   checkpoints=ck)
    prof = optimality_profile(run, spec)
    atoms = [{"s": s, "g": g, "se": se} for s, g, se in prof if s in atom_qs]
    i = run.checkpoint_index(qp)
    return {"atoms": atoms, "Ev2_at_qP": float(run.v_sq_mean[i]),
            "Ev2_at_qP_se": float(run.v_sq_se[i]), "n_paths": run.n_paths,
            "n_steps": run.n_steps}


# ---------------------------------------------------------------- constrained

@dataclass
class _GammaParam:
    u: float
    k: int
    gamma_max: float
    lam_bound: float

    @property
    def dim(self):
        return 1 + self.k + 1 + (self.k - 1)

    def decode(self, th):
        k = self.k
        lam = self.lam_bound * math.tanh(th[0])
        qs = np.sort(self.u * expit(th[1:1 + k]))
        top = self.gamma_max * expit(th[1 + k])
        vs = top * _stick(th[2 + k:])
        return lam, qs, vs

    def encode(self, lam, gamma: StepProfile):
        k = self.k
        t0 = math.atanh(np.clip(lam / self.lam_bound, -0.999999, 0.999999))
        qs = list(gamma.qs)
        vs = list(gamma.vs)
        if not qs:
            qs, vs = [0.5 * self.u], [1e-12]
        while len(qs) < k:  # pad with near-copies of the top atom
            qs.append(min(qs[-1] + 1e-3 * self.u, self.u * (1 - 1e-6)))
            vs.append(vs[-1] * (1 + 1e-9) + 1e-12)
        qs = np.array(qs[-k:]) if len(qs) > k else np.array(qs)
        vs = np.array(vs[-k:]) if len(vs) > k else np.array(vs)
        frac = np.clip(qs / self.u, 1e-9, 1 - 1e-9)
        top = np.clip(vs[-1] / self.gamma_max, 1e-14, 1 - 1e-9)
        return np.concatenate([[t0], logit(frac), [logit(top)], _unstick(vs / vs[-1])])

    def profile(self, qs, vs):
        return StepProfile(tuple(zip(qs, vs)), self.u, GAMMA)


def _u_zero_result(spec) -> MinimizeResult:
    # P_0(lam, empty) = f(h, lam), nondecreasing in lam with limit log 2 as lam -> -inf
    empty = StepProfile((), 0.0, GAMMA)
    if spec.h == 0.0:
        return MinimizeResult(profile=empty, value=math.log(2.0), lam=0.0)
    return MinimizeResult(profile=empty, value=math.log(2.0), lam=-math.inf, converged=False,
                          flags=["infimum possibly not attained: lambda -> -inf"])


def minimize_constrained(spec: MixtureSpec, u: float, k: int = 3, n_starts: int = 4, seed: int = 0,
                         gamma_max: float = GAMMA_MAX, lam_bound: float = LAMBDA_BOUND,
                         warm: list | None = None, search_grid: GridConfig = SEARCH_GRID,
                         grid: GridConfig = DEFAULT_GRID, maxfev: int | None = None) -> MinimizeResult:
    """inf over (lambda, gamma) of P_u with gamma having at most k atoms below gamma_max.

    ``warm`` is a list of (lambda, gamma) pairs used as extra starting points.
    """
    u = float(u)
    if not (0.0 <= u <= 1.0):
        raise DomainError("u must lie in [0, 1]")
    if u == 0.0:
        return _u_zero_result(spec)
    trace = []
    par = _GammaParam(u, k, gamma_max, lam_bound)

    def make_obj(par, cfg):
        def obj(th):
            lam, qs, vs = par.decode(th)
            try:
                return constrained_functional(spec, u, lam, par.profile(qs, vs), cfg)
            except Exception:
                return math.inf
        return obj

    obj = make_obj(par, search_grid)
    starts = []
    for lam0, g0 in (warm or []):
        g0 = _rescale_gamma(g0, u, gamma_max)
        if abs(lam0) < lam_bound:
            starts.append(par.encode(lam0, g0))
    rng = stream(seed, "constrained", int(round(u * 1e9)))
    while len(starts) < n_starts + len(warm or []):
        lam0 = rng.uniform(-0.1, 0.1)
        qs = np.sort(rng.uniform(0.05, 0.95, k)) * u
        vs = np.sort(rng.uniform(0.1, 2.0, k))
        starts.append(par.encode(lam0, par.profile(qs, vs)))
    found = []
    total = 0
    mf = maxfev or 200 * par.dim
    for i, x0 in enumerate(starts):
        r = _nelder_mead(obj, x0, mf)
        total += r.nfev
        trace.append({"start": i, "value": float(r.fun), "nfev": int(r.nfev)})
        if np.isfinite(r.fun):
            found.append((float(r.fun), r.x))
    if not found:
        raise OptimizerError(f"all starts failed at u={u}", trace)
    found.sort(key=lambda t: t[0])
    x, fx, nf = _polish(obj, found[0][1], passes=1)
    total += nf
    lam, qs, vs = par.decode(x)
    flags = []
    if abs(lam) > 0.98 * lam_bound:
        # widen: lambda unbounded, soft boundary via direct maximisation
        par2 = _GammaParam(u, k, gamma_max, LAMBDA_WIDE)
        obj2 = make_obj(par2, search_grid)
        r = _nelder_mead(obj2, par2.encode(lam, par.profile(qs, vs)), mf)
        total += r.nfev
        trace.append({"start": "widened", "value": float(r.fun), "nfev": int(r.nfev)})
        if r.fun < fx:
            lam, qs, vs = par2.decode(r.x)
            fx = r.fun
        if abs(lam) > 0.98 * LAMBDA_WIDE:
            flags.append("lambda pinned at the widened edge")
    cands = [(lam, par.profile(qs, vs))]
    for lam0, g0 in (warm or []):
        cands.append((lam0, _rescale_gamma(g0, u, gamma_max)))
    scored = []
    for lam_c, g in cands:
        try:
            scored.append((constrained_functional(spec, u, lam_c, g, grid), lam_c, g))
        except Exception as exc:  # pragma: no cover - reported in trace
            trace.append({"start": "final", "error": str(exc)})
    if not scored:
        raise OptimizerError(f"final evaluation failed at u={u}", trace)
    scored.sort(key=lambda t: (t[0], _profile_key(t[2])))
    value, lam, g = scored[0]
    if g.knots and g.knots[-1][1] >= 0.999 * gamma_max:
        flags.append("gamma pinned at gamma_max")
    converged = not flags
    if flags:
        flags.append("infimum possibly not attained")
    return MinimizeResult(profile=g, value=float(value), lam=float(lam), iterations=total,
                          converged=converged, starts=trace, flags=flags)


def _rescale_gamma(g: StepProfile, u: float, gamma_max: float) -> StepProfile:
    """Restrict or stretch a GAMMA profile onto [0, u)."""
    if g.domain_end == u:
        kn = g.knots
    elif g.domain_end > 0:
        kn = tuple((q * u / g.domain_end, v) for q, v in g.knots)
    else:
        kn = ()
    kn = tuple((q, min(v, gamma_max)) for q, v in kn if q < u)
    return StepProfile(kn, u, GAMMA)


# ---------------------------------------------------------------- TAP curve

@dataclass
class CurvePoint:
    u: float
    F_TAP: float
    lam: float | None
    gamma: StepProfile | None
    status: str
    P_u: float = math.nan
    C: float = math.nan


def tap_limit_curve(spec: MixtureSpec, u_grid, k: int = 3, alpha_p: StepProfile | None = None,
                    warm_start: bool = True, seed: int = 0, gamma_max: float = GAMMA_MAX,
                    n_starts: int = 1, search_grid: GridConfig = SEARCH_GRID,
                    grid: GridConfig = DEFAULT_GRID, progress=None) -> list:
    """F_TAP(u) = inf P_u + C(u) along u_grid (processed in ascending order).

    Each point also starts from the restriction of alpha_p and from the previous
    optimum, so one random start is usually enough.
    """
    u_grid = [float(u) for u in u_grid]
    if any(not (0.0 <= u <= 1.0) for u in u_grid):
        raise DomainError("u_grid must lie in [0, 1]")
    if alpha_p is None and u_grid:
        alpha_p = minimize_parisi(spec, k, diagnostics=False, seed=seed).profile
    out = {}
    prev = None
    for u in sorted(set(u_grid)):
        warm = []
        if alpha_p is not None:
            warm.append((0.0, restrict_to_gamma(alpha_p, u)))
        if warm_start and prev is not None and prev.lam is not None and math.isfinite(prev.lam):
            warm.append((prev.lam, prev.profile))
        try:
            res = minimize_constrained(spec, u, k, n_starts=n_starts, seed=seed, warm=warm,
                                       gamma_max=gamma_max, search_grid=search_grid, grid=grid)
            c = onsager_C(spec, u)
            status = "ok" if res.converged else "; ".join(res.flags)
            out[u] = CurvePoint(u, res.value + c, res.lam, res.profile, status, res.value, c)
            prev = res
        except Exception as exc:
            log.warning("tap curve point u=%g failed: %s", u, exc)
            out[u] = CurvePoint(u, math.nan, None, None, f"failed: {exc}")
        if progress:
            progress(out[u])
    return [out[u] for u in u_grid]
