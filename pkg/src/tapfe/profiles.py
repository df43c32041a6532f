"""Step profiles: CDFs on [0, 1] and nonnegative nondecreasing functions on [0, u)."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ModeError, SpecParseError

CDF = "CDF"
GAMMA = "GAMMA"

Q_MERGE = 1e-9
V_MERGE = 1e-12


def canonical_knots(knots, domain_end: float, mode: str):
    """Sort, merge and prune knots into the strict canonical form.

    Knots closer than Q_MERGE in q collapse onto the later value; consecutive
    values closer than V_MERGE merge into the earlier knot.  Leading zero
    values and (in GAMMA mode) knots sitting at domain_end carry no mass on
    [0, domain_end) and are dropped.
    """
    ks = sorted((float(q), float(v)) for q, v in knots)
    merged: list[list[float]] = []
    for q, v in ks:
        if merged and q - merged[-1][0] < Q_MERGE:
            merged[-1][1] = max(merged[-1][1], v)
        else:
            merged.append([q, v])
    out: list[list[float]] = []
    for q, v in merged:
        prev = out[-1][1] if out else 0.0
        if v < prev - V_MERGE:
            raise DomainError("profile values must be nondecreasing")
        if v - prev < V_MERGE:
            continue
        out.append([q, v])
    if mode == GAMMA:
        out = [kv for kv in out if kv[0] < domain_end]
    return tuple((q, v) for q, v in out)


@dataclass(frozen=True)
class StepProfile:
    """Right-continuous step function equal to v_i on [q_i, q_{i+1}).

    Below the first knot the function is 0.  In CDF mode the last value is 1
    and domain_end is 1; in GAMMA mode values are finite and nonnegative.
    """

    knots: tuple
    domain_end: float = 1.0
    mode: str = CDF

    def __post_init__(self):
        if self.mode not in (CDF, GAMMA):
            raise ModeError(f"unknown mode {self.mode!r}")
        end = float(self.domain_end)
        if not (0.0 <= end <= 1.0):
            raise DomainError("domain_end must lie in [0, 1]")
        if self.mode == CDF and end != 1.0:
            raise DomainError("CDF profiles live on [0, 1]")
        kn = []
        for kv in self.knots:
            q, v = float(kv[0]), float(kv[1])
            if not (np.isfinite(q) and np.isfinite(v)):
                raise DomainError("knots must be finite")
            if q < 0.0 or q > end:
                raise DomainError(f"knot q={q} outside [0, {end}]")
            if v < 0.0:
                raise DomainError("profile values must be nonnegative")
            if self.mode == CDF and v > 1.0 + 1e-12:
                raise DomainError("CDF values must lie in [0, 1]")
            kn.append((q, min(v, 1.0) if self.mode == CDF else v))
        kn = canonical_knots(kn, end, self.mode)
        if self.mode == CDF:
            if not kn or kn[-1][1] != 1.0:
                if kn and abs(kn[-1][1] - 1.0) <= 1e-12:
                    kn = kn[:-1] + ((kn[-1][0], 1.0),)
                else:
                    raise DomainError("a CDF profile must reach the value 1")
        object.__setattr__(self, "knots", kn)
        object.__setattr__(self, "domain_end", end)

    # constructors
    @classmethod
    def dirac(cls, q: float) -> "StepProfile":
        return cls(((q, 1.0),))

    @classmethod
    def cdf(cls, qs, vs) -> "StepProfile":
        return cls(tuple(zip(qs, vs)))

    @classmethod
    def gamma(cls, qs, vs, u: float) -> "StepProfile":
        return cls(tuple(zip(qs, vs)), u, GAMMA)

    @property
    def qs(self) -> np.ndarray:
        return np.array([q for q, _ in self.knots])

    @property
    def vs(self) -> np.ndarray:
        return np.array([v for _, v in self.knots])

    @property
    def atoms(self):
        """(q_i, weight_i) of the measure with distribution function self."""
        out, prev = [], 0.0
        for q, v in self.knots:
            out.append((q, v - prev))
            prev = v
        return out

    def steps(self):
        """Ascending list of (a, b, value) covering [0, domain_end)."""
        pts = [0.0] + [q for q, _ in self.knots] + [self.domain_end]
        vals = [0.0] + [v for _, v in self.knots]
        out = []
        for i, val in enumerate(vals):
            a, b = pts[i], pts[i + 1]
            if b > a:
                out.append((a, b, val))
        return out

    def __call__(self, s):
        return evaluate(self, s)

    def mix(self, other: "StepProfile", t: float) -> "StepProfile":
        """Pointwise (1 - t) self + t other."""
        if self.mode != other.mode or self.domain_end != other.domain_end:
            raise ModeError("can only mix profiles of the same mode and domain")
        pts = sorted({q for q, _ in self.knots} | {q for q, _ in other.knots})
        kn = [(q, (1 - t) * _eval1(self, q) + t * _eval1(other, q)) for q in pts]
        return StepProfile(tuple(kn), self.domain_end, self.mode)

    def to_dict(self) -> dict:
        return {"mode": self.mode, "domain_end": self.domain_end,
                "knots": [[q, v] for q, v in self.knots]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "StepProfile":
        try:
            return cls(tuple(tuple(kv) for kv in d["knots"]), float(d.get("domain_end", 1.0)),
                       d.get("mode", CDF))
        except (KeyError, TypeError, IndexError) as exc:
            raise SpecParseError(f"bad profile: {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> "StepProfile":
        return cls.from_dict(json.loads(text))


def _eval1(p: StepProfile, s: float) -> float:
    val = 0.0
    for q, v in p.knots:
        if s >= q:
            val = v
        else:
            break
    return val


def evaluate(profile: StepProfile, s):
    """Right-continuous step evaluation, 0 below the first knot."""
    arr = np.asarray(s, dtype=float)
    if np.any(arr < 0.0) or np.any(arr > profile.domain_end) or np.any(~np.isfinite(arr)):
        raise DomainError(f"s outside [0, {profile.domain_end}]")
    if not profile.knots:
        out = np.zeros_like(arr)
    else:
        qs = profile.qs
        vals = np.concatenate([[0.0], profile.vs])
        out = vals[np.searchsorted(qs, arr, side="right")]
    return out if out.ndim else float(out)


def support_max(profile: StepProfile) -> float:
    """Largest atom of the measure whose CDF is ``profile``."""
    if profile.mode != CDF:
        raise ModeError("support_max needs a CDF profile")
    return profile.knots[-1][0]


def restrict_to_gamma(alpha: StepProfile, u: float) -> StepProfile:
    """The GAMMA profile equal to alpha on [0, u)."""
    if alpha.mode != CDF:
        raise ModeError("restrict_to_gamma needs a CDF profile")
    u = float(u)
    if not (0.0 <= u <= 1.0):
        raise DomainError("u must lie in [0, 1]")
    kn = tuple((q, v) for q, v in alpha.knots if q < u)
    return StepProfile(kn, u, GAMMA)


def xi_s_antiderivative(spec, s):
    """Antiderivative of xi''(s) s, which is theta(s) = s xi'(s) - xi(s)."""
    return s * spec.xi(s, 1) - spec.xi(s, 0)


def weighted_integral(spec, profile: StepProfile, upper: float | None = None) -> float:
    """Exact integral of xi''(s) s profile(s) over [0, upper]."""
    end = profile.domain_end
    if upper is None:
        upper = end
    upper = float(upper)
    if upper < 0.0 or upper > end:
        raise DomainError(f"upper must lie in [0, {end}]")
    total = 0.0
    for a, b, v in profile.steps():
        if v == 0.0 or a >= upper:
            continue
        b = min(b, upper)
        total += v * (xi_s_antiderivative(spec, b) - xi_s_antiderivative(spec, a))
    return float(total)
