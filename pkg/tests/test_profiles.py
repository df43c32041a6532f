import math

import numpy as np
import pytest
from hypothesis import example, given, settings, strategies as st
from scipy.integrate import quad

from tapfe.errors import DomainError, ModeError
from tapfe.mixture import MixtureSpec
from tapfe.profiles import (CDF, GAMMA, StepProfile, canonical_knots, evaluate,
                            restrict_to_gamma, support_max, weighted_integral)


@st.composite
def cdf_profiles(draw, max_atoms=4):
    k = draw(st.integers(1, max_atoms))
    qs = sorted(draw(st.lists(st.floats(0, 1), min_size=k, max_size=k, unique=True)))
    vs = sorted(draw(st.lists(st.floats(0.01, 0.99), min_size=k - 1, max_size=k - 1))) + [1.0]
    return StepProfile.cdf(qs, vs)


def test_evaluate_examples():
    assert evaluate(StepProfile.dirac(0.0), 0.5) == 1.0
    assert evaluate(StepProfile.dirac(0.3), 0.1) == 0.0
    g = StepProfile(((0.1, 0.4), (0.5, 2.0)), 0.8, GAMMA)
    assert evaluate(g, 0.6) == 2.0
    assert evaluate(g, 0.05) == 0.0
    assert evaluate(g, 0.1) == 0.4  # right-continuous
    with pytest.raises(DomainError):
        evaluate(g, 0.9)


def test_support_max_examples():
    assert support_max(StepProfile.dirac(0.0)) == 0.0
    assert support_max(StepProfile.cdf([0.2, 0.7], [0.4, 1.0])) == 0.7
    assert support_max(StepProfile.dirac(0.35)) == 0.35
    with pytest.raises(ModeError):
        support_max(StepProfile(((0.1, 0.4),), 0.8, GAMMA))


def test_restrict_examples():
    a = StepProfile.cdf([0.2, 0.7], [0.4, 1.0])
    g = restrict_to_gamma(a, 0.7)
    assert g.mode == GAMMA and g.domain_end == 0.7 and g.knots == ((0.2, 0.4),)
    e = restrict_to_gamma(StepProfile.dirac(0.0), 0.0)
    assert e.knots == () and e.domain_end == 0.0
    b = StepProfile.cdf([0.1, 0.4, 0.9], [0.3, 0.6, 1.0])
    assert restrict_to_gamma(b, 0.4).knots == ((0.1, 0.3),)


def test_cdf_invariants_enforced():
    with pytest.raises(DomainError):
        StepProfile.cdf([0.2, 0.5], [0.4, 0.9])  # must end at 1
    with pytest.raises(DomainError):
        StepProfile.cdf([0.2, 1.5], [0.4, 1.0])
    with pytest.raises(DomainError):
        StepProfile.cdf([0.2, 0.5], [0.8, 0.4])


def test_weighted_integral_examples():
    one = MixtureSpec({2: 1.0})
    # alpha = 1 on [0,1] with xi = s^2: int_0^1 xi''(s) s ds = int_0^1 2 s ds = 1
    assert weighted_integral(one, StepProfile.dirac(0.0)) == pytest.approx(1.0, abs=1e-15)
    assert weighted_integral(one, StepProfile((), 0.5, GAMMA)) == 0.0
    spec = MixtureSpec({2: 0.4, 3: 0.7, 5: 0.2})
    q = 0.37
    want = spec.xi(1.0, 1) - spec.xi(q, 1) * q - (spec.xi(1.0) - spec.xi(q))
    assert weighted_integral(spec, StepProfile.dirac(q)) == pytest.approx(want, abs=1e-14)


@settings(max_examples=40, deadline=None)
@given(cdf_profiles(), st.floats(0, 1))
def test_weighted_integral_vs_quad(alpha, upper):
    spec = MixtureSpec({2: 0.6, 3: 0.4, 4: 0.3})
    pts = [q for q in alpha.qs if 0 < q < upper]
    val, _ = quad(lambda s: spec.xi(s, 2) * s * evaluate(alpha, s), 0, upper, points=pts or None,
                  epsabs=1e-13, epsrel=1e-13, limit=200)
    assert weighted_integral(spec, alpha, upper) == pytest.approx(val, abs=1e-10)


@settings(max_examples=60, deadline=None)
@given(cdf_profiles(), st.floats(0, 1))
@example(StepProfile.dirac(0.0), 5.687055197991945e-21)  # u below the knot-merge scale
def test_restrict_agrees_below_u(alpha, u):
    g = restrict_to_gamma(alpha, u)
    if u == 0.0:
        assert g.knots == ()
        return
    s = np.linspace(0, u, 50, endpoint=False)
    assert np.array_equal(evaluate(g, s), evaluate(alpha, s))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=6))
def test_canonicalisation_idempotent(raw):
    raw = sorted(raw)
    vs = np.maximum.accumulate([v for _, v in raw])
    knots = [(q, float(v)) for (q, _), v in zip(raw, vs)] + [(1.0, 1.0)]
    once = canonical_knots(knots, 1.0, CDF)
    twice = canonical_knots(once, 1.0, CDF)
    assert tuple(once) == tuple(twice)
    p = StepProfile(tuple(once), 1.0, CDF)
    qs = [q for q, _ in once]
    assert all(b - a >= 1e-9 for a, b in zip(qs, qs[1:]))
    # pointwise unchanged away from merged knots
    s = np.linspace(0, 1, 97)
    ref = np.array([max([v for q, v in knots if q <= x], default=0.0) for x in s])
    far = np.array([min(abs(x - q) for q, _ in knots) > 1e-8 for x in s])
    assert np.allclose(evaluate(p, s)[far], ref[far], atol=1e-12)


@given(cdf_profiles())
def test_profile_json_roundtrip(alpha):
    assert StepProfile.from_json(alpha.to_json()) == alpha


def test_atoms_weights_sum_to_one():
    a = StepProfile.cdf([0.1, 0.3, 0.8], [0.25, 0.5, 1.0])
    assert [w for _, w in a.atoms] == pytest.approx([0.25, 0.25, 0.5])
    assert math.fsum(w for _, w in a.atoms) == pytest.approx(1.0)
