"""Backward Cole-Hopf recursion for the Parisi PDE on step profiles.

On a step where the profile equals zeta on [a, b] the PDE is solved exactly by

    Phi(a, x) = zeta^-1 log E exp(zeta Phi(b, x + sigma z)),  sigma^2 = xi'(b) - xi'(a)

(plain average when zeta = 0).  Gaussian expectations use Gauss-Hermite
nodes, the function is carried between grid points by cubic Hermite
interpolation of (Phi, d_x Phi), and d_x Phi is propagated with the same
tilted weights, so |d_x Phi| <= 1 holds by construction.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DomainError, GridError, ModeError, NotApplicableError
from .mixture import MixtureSpec
from .profiles import GAMMA, StepProfile, weighted_integral
from .quadrature import hermite_rule

LOGCH = "LOGCH"
SOFT = "SOFT"
LAMBDA_CLOSED_FORM = 0.25
EDGE_TOL = 1e-4


@dataclass(frozen=True)
class Boundary:
    """Terminal condition: log cosh x, or the soft-spin f(x, lambda)."""

    kind: str = LOGCH
    lam: float = 0.0

    def __post_init__(self):
        if self.kind not in (LOGCH, SOFT):
            raise DomainError(f"unknown boundary {self.kind!r}")
        if self.kind == LOGCH and self.lam != 0.0:
            raise DomainError("LOGCH boundary takes no lambda")

    @classmethod
    def logch(cls) -> "Boundary":
        return cls(LOGCH)

    @classmethod
    def soft(cls, lam: float) -> "Boundary":
        return cls(SOFT, float(lam))

    def to_dict(self):
        return {"kind": self.kind, "lambda": self.lam}


@dataclass(frozen=True)
class GridConfig:
    """x-grid and quadrature settings.

    x_max=None selects |h| + 8 sqrt(xi'(1)) + 4 (+ 2|lambda| for SOFT).
    Each Cole-Hopf step is split into sub-steps with standard deviation at
    most sigma_max, tilt zeta*sigma at most tilt_max and zeta*sigma^2 at most
    curv_max, which keeps the tilted Gaussian integrands well inside the
    range where the Hermite rule is accurate.
    """

    dx: float = 2e-3
    x_max: float | None = None
    n_nodes: int = 61
    sigma_max: float = 0.5
    tilt_max: float = 3.0
    curv_max: float = 0.5
    sub_knots: int = 8

    def to_dict(self):
        return {"dx": self.dx, "x_max": self.x_max, "n_nodes": self.n_nodes,
                "sigma_max": self.sigma_max, "tilt_max": self.tilt_max,
                "curv_max": self.curv_max, "sub_knots": self.sub_knots}


DEFAULT_GRID = GridConfig()
SEARCH_GRID = GridConfig(dx=2e-2, n_nodes=41)


@dataclass(frozen=True)
class SoftBoundaryPoint:
    x: float
    lam: float
    m_star: float
    f_value: float


def log2cosh(y):
    y = np.abs(np.asarray(y, dtype=float))
    return y + np.log1p(np.exp(-2.0 * y))


def logcosh(y):
    return log2cosh(y) - math.log(2.0)


def magnetization_fixed_point(x: float, lam: float) -> float:
    """The root of m = tanh(x + 2 lam m) for |lam| < 1/4."""
    if not abs(lam) < LAMBDA_CLOSED_FORM:
        raise NotApplicableError("fixed point is only a contraction for |lambda| < 1/4")
    return float(kernels.soft_fixed_point(np.array([float(x)]), float(lam), 1e-13, 200)[0])


def soft_arrays(xs, lam: float):
    """Vectorised (f(x, lam), m(x, lam))."""
    xs = np.ascontiguousarray(xs, dtype=float)
    lam = float(lam)
    if lam == 0.0:
        return log2cosh(xs), np.tanh(xs)
    if abs(lam) < LAMBDA_CLOSED_FORM:
        m = kernels.soft_fixed_point(xs, lam, 1e-13, 200)
        return log2cosh(xs + 2.0 * lam * m) - lam * m * m, m
    return kernels.soft_direct_max(xs, lam, 512, 48)


def soft_boundary_f(x: float, lam: float) -> SoftBoundaryPoint:
    """f(x, lam) = max_m (m x + lam m^2 - I(m)) and its maximiser."""
    f, m = soft_arrays(np.array([float(x)]), lam)
    return SoftBoundaryPoint(float(x), float(lam), float(m[0]), float(f[0]))


def boundary_values(xs, boundary: Boundary):
    if boundary.kind == LOGCH:
        xs = np.asarray(xs, dtype=float)
        return logcosh(xs), np.tanh(xs)
    return soft_arrays(xs, boundary.lam)


def x_max_for(spec: MixtureSpec, boundary: Boundary, cfg: GridConfig) -> float:
    if cfg.x_max is not None:
        return float(cfg.x_max)
    xm = abs(spec.h) + 8.0 * math.sqrt(spec.xi(1.0, 1)) + 4.0
    if boundary.kind == SOFT:
        xm += 2.0 * abs(boundary.lam)
    return xm


def make_grid(spec, boundary, cfg):
    n_half = int(math.ceil(x_max_for(spec, boundary, cfg) / cfg.dx))
    x0 = -n_half * cfg.dx
    return x0 + cfg.dx * np.arange(2 * n_half + 1), x0


def _closed_form_top(profile: StepProfile, boundary: Boundary, a, b, zeta):
    return boundary.kind == LOGCH and zeta == 1.0 and b == 1.0


def _sigma_cap(zeta, cfg):
    cap = cfg.sigma_max
    if zeta > 0.0:
        cap = min(cap, cfg.tilt_max / zeta, math.sqrt(cfg.curv_max / zeta))
    return cap


def _check_profile(profile: StepProfile, boundary: Boundary):
    if boundary.kind == LOGCH and profile.domain_end != 1.0:
        raise ModeError("the log cosh boundary lives at s = 1")


def _check_edges(dphi, ref_lo, ref_hi, s):
    dev = max(abs(dphi[0] - ref_lo), abs(dphi[-1] - ref_hi))
    if dev > EDGE_TOL:
        raise GridError(
            f"grid underflow at s={s:.6g}: edge slope deviates by {dev:.2e} from the "
            f"boundary slope; increase x_max"
        )


def phi_at_origin(spec: MixtureSpec, profile: StepProfile, boundary: Boundary,
                  cfg: GridConfig = DEFAULT_GRID) -> float:
    """Phi(0, h) without storing intermediate levels."""
    _check_profile(profile, boundary)
    h = spec.h
    steps = [st for st in reversed(profile.steps())]
    if not steps:
        return float(boundary_values(np.array([h]), boundary)[0][0])
    ops = []
    for a, b, z in steps:
        if _closed_form_top(profile, boundary, a, b, z):
            ops.append(("closed", a))
            continue
        var = spec.xi(b, 1) - spec.xi(a, 1)
        if var <= 0.0:
            continue
        n_sub = max(1, int(math.ceil(math.sqrt(var) / _sigma_cap(z, cfg) - 1e-12)))
        sig = math.sqrt(var / n_sub)
        ops.extend(("step", sig, z) for _ in range(n_sub))
    if not ops:
        return float(boundary_values(np.array([h]), boundary)[0][0])
    if len(ops) == 1 and ops[0][0] == "closed":
        a = ops[0][1]
        return float(logcosh(h) + 0.5 * (spec.xi(1.0, 1) - spec.xi(a, 1)))
    x, x0 = make_grid(spec, boundary, cfg)
    nodes, weights = hermite_rule(cfg.n_nodes)
    phi, dphi = boundary_values(x, boundary)
    ref_lo, ref_hi = dphi[0], dphi[-1]
    for i, op in enumerate(ops):
        last = i == len(ops) - 1
        if op[0] == "closed":
            phi = logcosh(x) + 0.5 * (spec.xi(1.0, 1) - spec.xi(op[1], 1))
            dphi = np.tanh(x)
            continue
        _, sig, z = op
        xs = np.array([h]) if last else x
        phi, dphi = kernels.cole_hopf_eval(phi, dphi, x0, cfg.dx, xs, sig, z, nodes, weights)
        if not last:
            _check_edges(dphi, ref_lo, ref_hi, float("nan"))
    return float(phi[0])


@dataclass(frozen=True)
class PdeSolution:
    """Grid values of Phi and d_x Phi at the levels s_levels (ascending).

    ``zeta[i]`` is the profile value on [s_levels[i], s_levels[i+1]).
    ``s_knots`` are the profile knots together with 0 and domain_end; every
    knot is also a level.
    """

    x0: float
    dx: float
    s_levels: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray
    zeta: np.ndarray
    s_knots: np.ndarray
    boundary: Boundary
    domain_end: float
    spec_hash: str
    meta: dict = field(default_factory=dict)

    @property
    def x_grid(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.phi.shape[1])

    def level_index(self, s: float) -> int:
        idx = np.flatnonzero(np.abs(self.s_levels - s) <= 1e-14)
        if idx.size == 0:
            raise DomainError(f"s={s} is not a stored level")
        return int(idx[-1])

    def eval(self, s: float, x):
        """(Phi, d_x Phi) at a stored level s and arbitrary x."""
        i = self.level_index(s)
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        return kernels.hermite_eval(self.phi[i], self.dphi[i], self.x0, self.dx,
                                    np.ascontiguousarray(xs))

    def to_csv(self, path):
        x = self.x_grid
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["s", "x", "phi", "dphi"])
            for i, s in enumerate(self.s_levels):
                for j in range(x.shape[0]):
                    w.writerow([f"{s:.17g}", f"{x[j]:.17g}", f"{self.phi[i, j]:.17g}",
                                f"{self.dphi[i, j]:.17g}"])


def inputs_hash(spec, profile, boundary, cfg) -> str:
    blob = json.dumps({"spec": spec.to_dict(), "profile": profile.to_dict(),
                       "boundary": boundary.to_dict(), "grid": cfg.to_dict()},
                      sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _sub_levels(spec, a, b, z, cfg):
    var_cap = _sigma_cap(z, cfg) ** 2
    n = max(1, cfg.sub_knots)
    while True:
        s = a + (b - a) * np.arange(n + 1) / n
        s[-1] = b
        if np.max(np.diff(spec.xi(s, 1))) <= var_cap * (1 + 1e-12) or n > 1 << 16:
            return s
        n *= 2


def solve_parisi(spec: MixtureSpec, profile: StepProfile, boundary: Boundary = Boundary(),
                 cfg: GridConfig = DEFAULT_GRID) -> PdeSolution:
    """Full backward solve storing Phi and d_x Phi at every (sub-)knot level."""
    _check_profile(profile, boundary)
    x, x0 = make_grid(spec, boundary, cfg)
    nodes, weights = hermite_rule(cfg.n_nodes)
    phi, dphi = boundary_values(x, boundary)
    ref_lo, ref_hi = dphi[0], dphi[-1]
    end = profile.domain_end
    levels = [end]
    phis = [phi]
    dphis = [dphi]
    zetas = []
    for a, b, z in reversed(profile.steps()):
        sub = _sub_levels(spec, a, b, z, cfg)
        closed = _closed_form_top(profile, boundary, a, b, z)
        for j in range(len(sub) - 1, 0, -1):
            lo, hi = sub[j - 1], sub[j]
            if closed:
                phi = logcosh(x) + 0.5 * (spec.xi(1.0, 1) - spec.xi(lo, 1))
                dphi = np.tanh(x)
            else:
                var = max(spec.xi(hi, 1) - spec.xi(lo, 1), 0.0)
                phi, dphi = kernels.cole_hopf_eval(phi, dphi, x0, cfg.dx, x,
                                                   math.sqrt(var), z, nodes, weights)
                _check_edges(dphi, ref_lo, ref_hi, lo)
            levels.append(lo)
            phis.append(phi)
            dphis.append(dphi)
            zetas.append(z)
    knots = sorted({0.0, end} | {q for q, _ in profile.knots})
    return PdeSolution(
        x0=x0, dx=cfg.dx,
        s_levels=np.array(levels[::-1]),
        phi=np.array(phis[::-1]),
        dphi=np.array(dphis[::-1]),
        zeta=np.array(zetas[::-1]),
        s_knots=np.array(knots),
        boundary=boundary,
        domain_end=end,
        spec_hash=inputs_hash(spec, profile, boundary, cfg),
        meta={"h": spec.h, "profile": profile.to_dict()},
    )


def parisi_functional(spec: MixtureSpec, alpha: StepProfile,
                      cfg: GridConfig = DEFAULT_GRID) -> float:
    """log 2 + Phi_alpha(0, h) - 1/2 int_0^1 xi''(s) s alpha(s) ds."""
    if alpha.mode != "CDF":
        raise ModeError("parisi_functional needs a CDF profile")
    val = phi_at_origin(spec, alpha, Boundary(), cfg)
    return math.log(2.0) + val - 0.5 * weighted_integral(spec, alpha, 1.0)


def constrained_functional(spec: MixtureSpec, u: float, lam: float, gamma: StepProfile,
                           cfg: GridConfig = DEFAULT_GRID) -> float:
    """Phi_{u,gamma}(0, h, lam) - lam u - 1/2 int_0^u xi''(s) s gamma(s) ds."""
    if gamma.mode != GAMMA:
        raise ModeError("constrained_functional needs a GAMMA profile")
    if abs(gamma.domain_end - u) > 1e-15:
        raise DomainError("gamma must live on [0, u)")
    val = phi_at_origin(spec, gamma, Boundary.soft(lam), cfg)
    return val - lam * u - 0.5 * weighted_integral(spec, gamma, u)


def pair_identity_residual(spec: MixtureSpec, alpha: StepProfile, q: float | None = None,
                           cfg: GridConfig = DEFAULT_GRID) -> float:
    """log 2 + Phi_alpha(0,h) - Phi_{q,gamma}(0,h,0) - (xi'(1) - xi'(q))/2 with gamma = alpha on [0,q).

    q defaults to the top of the support of alpha; both solves share cfg.
    """
    from .profiles import restrict_to_gamma, support_max
    if alpha.mode != "CDF":
        raise ModeError("the pair identity needs a CDF profile")
    q = support_max(alpha) if q is None else float(q)
    lhs = math.log(2.0) + phi_at_origin(spec, alpha, Boundary(), cfg)
    rhs = phi_at_origin(spec, restrict_to_gamma(alpha, q), Boundary.soft(0.0), cfg)
    return float(lhs - rhs - 0.5 * (spec.xi(1.0, 1) - spec.xi(q, 1)))
