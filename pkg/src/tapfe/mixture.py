"""Mixture specification and the scalar functions derived from it."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.special import xlogy

from .errors import DomainError, NotApplicableError, SpecParseError


@dataclass(frozen=True)
class MixtureSpec:
    """Mixed p-spin model with xi(s) = sum_p beta_p^2 s^p and field h.

    The SK model at inverse temperature beta is ``MixtureSpec.sk(beta, h)``,
    i.e. beta_2 = beta / sqrt(2).
    """

    coeffs: Mapping[int, float]
    h: float = 0.0
    _p: tuple = field(init=False, repr=False, compare=False)
    _b2: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        items = []
        for p, b in dict(self.coeffs).items():
            if isinstance(p, bool) or not isinstance(p, (int, np.integer)):
                raise DomainError(f"degree {p!r} is not an integer")
            if p < 2:
                raise DomainError(f"degree {p} < 2")
            b = float(b)
            if not math.isfinite(b):
                raise DomainError(f"beta_{p} is not finite")
            items.append((int(p), b))
        items.sort()
        if not any(b != 0.0 for _, b in items):
            raise DomainError("at least one beta_p must be nonzero")
        if not math.isfinite(float(self.h)):
            raise DomainError("h is not finite")
        object.__setattr__(self, "coeffs", dict(items))
        object.__setattr__(self, "h", float(self.h))
        object.__setattr__(self, "_p", tuple(p for p, _ in items))
        object.__setattr__(self, "_b2", tuple(b * b for _, b in items))

    @classmethod
    def sk(cls, beta: float, h: float = 0.0) -> "MixtureSpec":
        return cls({2: beta / math.sqrt(2.0)}, h)

    @property
    def degrees(self) -> tuple:
        return self._p

    @property
    def sk_beta(self):
        """beta if this is a pure p=2 model, else None."""
        nz = [p for p, b in self.coeffs.items() if b != 0.0]
        if nz == [2]:
            return abs(self.coeffs[2]) * math.sqrt(2.0)
        return None

    def xi(self, s, order: int = 0):
        """Vectorised xi and its first two derivatives (no domain check)."""
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        for p, b2 in zip(self._p, self._b2):
            if order == 0:
                out = out + b2 * s**p
            elif order == 1:
                out = out + b2 * p * s ** (p - 1)
            elif order == 2:
                out = out + b2 * p * (p - 1) * s ** (p - 2)
            else:
                raise DomainError(f"order must be 0, 1 or 2, got {order}")
        return out if out.ndim else float(out)

    def to_dict(self) -> dict:
        return {"coeffs": {str(p): b for p, b in self.coeffs.items()}, "h": self.h}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "MixtureSpec":
        if not isinstance(d, dict):
            raise SpecParseError("spec must be a JSON object")
        extra = set(d) - {"coeffs", "h"}
        if extra:
            raise SpecParseError(f"unknown spec keys: {sorted(extra)}")
        raw = d.get("coeffs")
        if not isinstance(raw, dict) or not raw:
            raise SpecParseError("'coeffs' must be a non-empty object")
        coeffs = {}
        for key, val in raw.items():
            k = str(key).strip()
            if not k.isdigit():
                raise SpecParseError(f"coefficient key {key!r} is not a decimal integer")
            if int(k) < 2:
                raise SpecParseError(f"coefficient key {key!r} is < 2")
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                raise SpecParseError(f"coefficient {key!r} is not a number")
            coeffs[int(k)] = float(val)
        h = d.get("h", 0.0)
        if isinstance(h, bool) or not isinstance(h, (int, float)):
            raise SpecParseError("'h' is not a number")
        try:
            return cls(coeffs, float(h))
        except DomainError as exc:
            raise SpecParseError(str(exc)) from exc

    @classmethod
    def from_json(cls, text: str) -> "MixtureSpec":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SpecParseError(
                f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
            ) from exc
        return cls.from_dict(d)


def _check_unit(s, name="s"):
    arr = np.asarray(s, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise DomainError(f"{name} must lie in [0, 1]")
    return arr


def mixture_eval(spec: MixtureSpec, s, order: int = 0):
    """xi(s), xi'(s) or xi''(s) for s in [0, 1]."""
    _check_unit(s)
    if order not in (0, 1, 2):
        raise DomainError(f"order must be 0, 1 or 2, got {order}")
    return spec.xi(s, order)


def theta(spec: MixtureSpec, s):
    """s xi'(s) - xi(s)."""
    _check_unit(s)
    s = np.asarray(s, dtype=float)
    out = s * spec.xi(s, 1) - spec.xi(s, 0)
    return out if np.ndim(out) else float(out)


def onsager_C(spec: MixtureSpec, u):
    """Onsager correction (xi(1) - xi(u) - xi'(u)(1-u)) / 2."""
    _check_unit(u, "u")
    u = np.asarray(u, dtype=float)
    out = 0.5 * (spec.xi(1.0) - spec.xi(u) - spec.xi(u, 1) * (1.0 - u))
    out = np.maximum(out, 0.0)
    return out if np.ndim(out) else float(out)


def bernoulli_entropy(x):
    """I(x) = (1+x)/2 log((1+x)/2) + (1-x)/2 log((1-x)/2), with I(+-1) = 0."""
    x = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(x)) or np.any(np.abs(x) > 1.0):
        raise DomainError("x must lie in [-1, 1]")
    a = 0.5 * (1.0 + x)
    b = 0.5 * (1.0 - x)
    out = xlogy(a, a) + xlogy(b, b)
    return out if out.ndim else float(out)


def plefka_condition(beta: float, m) -> tuple[bool, float]:
    """SK convergence criterion 1 > beta^2 (1 - 2 q_EA + r); returns (ok, margin)."""
    m = np.asarray(m, dtype=float).ravel()
    if m.size == 0:
        raise DomainError("m must be nonempty")
    if np.any(np.abs(m) > 1.0):
        raise DomainError("entries of m must lie in [-1, 1]")
    m2 = m * m
    q = m2.mean()
    r = (m2 * m2).mean()
    margin = 1.0 - beta * beta * (1.0 - 2.0 * q + r)
    return bool(margin > 0.0), float(margin)


def plefka_for_spec(spec: MixtureSpec, m) -> tuple[bool, float]:
    beta = spec.sk_beta
    if beta is None:
        raise NotApplicableError("the Plefka condition is only stated for the SK model")
    return plefka_condition(beta, m)
