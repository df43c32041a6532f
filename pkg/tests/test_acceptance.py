"""The eleven acceptance criteria at their stated tolerances.

Each test records one line in conftest.ACCEPTANCE (printed in the terminal
summary) before asserting.  Run alone with ``pytest tests/test_acceptance.py -v``.
"""
import math
import time

import numpy as np
import pytest

import conftest
from tapfe import finite as F
from tapfe.cli import perturb_top
from tapfe.mixture import MixtureSpec, onsager_C
from tapfe.optimize import (minimize_constrained, minimize_parisi, rs_fixed_point,
                            rs_free_energy, tap_limit_curve)
from tapfe.pde import pair_identity_residual, parisi_functional, solve_parisi
from tapfe.profiles import StepProfile, restrict_to_gamma, support_max
from tapfe.sde import delta_and_energy, optimality_profile, simulate

pytestmark = pytest.mark.slow

SK_HT = MixtureSpec.sk(0.3, 0.3)
MIXED = MixtureSpec({2: 0.5, 3: 0.3}, 0.2)
SK_LT = MixtureSpec.sk(1.5, 0.3)
N_PATHS, N_STEPS = 100_000, 2000


def record(n, ok, detail):
    conftest.ACCEPTANCE[n] = (bool(ok), detail)
    return ok


_parisi_cache = {}


def parisi(spec):
    key = (tuple(sorted(spec.coeffs.items())), spec.h)
    if key not in _parisi_cache:
        _parisi_cache[key] = minimize_parisi(spec, k=3, diagnostics=False)
    return _parisi_cache[key]


# ---------------------------------------------------------------- 1, 2: RS regime

def test_criterion_01_rs_value_high_temperature():
    spec = MixtureSpec.sk(0.3, 0.0)
    t = time.perf_counter()
    res = minimize_parisi(spec, k=3, diagnostics=False)
    dt = time.perf_counter() - t
    want = math.log(2) + 0.3 ** 2 / 4
    err = abs(res.value - want)
    ok = err < 5e-4 and res.q_P < 1e-6 and len(res.profile.knots) == 1 and dt < 60
    record(1, ok, f"|F-log2-b^2/4|={err:.2e} q_P={res.q_P:.2e} atoms={len(res.profile.knots)} "
                  f"runtime={dt:.1f}s")
    assert ok


def test_criterion_02_rs_consistency():
    q = rs_fixed_point(SK_HT)
    res = parisi(SK_HT)
    d_val = abs(res.value - rs_free_energy(SK_HT, q))
    d_top = abs(res.q_P - q)
    ok = d_val < 1e-3 and d_top < 1e-3
    record(2, ok, f"|F-RS(q*)|={d_val:.2e} |q_P-q*|={d_top:.2e}")
    assert ok


# ---------------------------------------------------------------- 3: pair identity

def test_criterion_03_pair_identity_and_equality_branch():
    rng = np.random.default_rng(3)
    worst = 0.0
    for spec in (SK_HT, MIXED):
        res = parisi(spec)
        alphas = [res.profile]
        for _ in range(3):
            qs = np.sort(rng.uniform(0.02, 0.95, 3))
            vs = np.sort(rng.uniform(0.05, 1.0, 3))
            vs[-1] = 1.0
            alphas.append(StepProfile.cdf(qs, vs))
        for a in alphas:
            worst = max(worst, abs(pair_identity_residual(spec, a, support_max(a))))
    res = parisi(SK_HT)
    qp = res.q_P
    con = minimize_constrained(SK_HT, qp, k=3, warm=[(0.0, restrict_to_gamma(res.profile, qp))])
    gap = abs(con.value + onsager_C(SK_HT, qp) - res.value)
    ok = worst < 1e-6 and gap < 1e-3
    record(3, ok, f"max pair residual={worst:.2e} (8 profiles, 2 specs) |F_TAP(q_P)-F|={gap:.2e}")
    assert ok


# ---------------------------------------------------------------- 4: inequality branch

def test_criterion_04_tap_curve_below_parisi():
    t = time.perf_counter()
    worst = -math.inf
    bad = []
    for name, spec in (("SK", SK_HT), ("mixed", MIXED)):
        res = parisi(spec)
        qp = res.q_P
        u_grid = [qp + (1 - qp) * i / 20 for i in range(1, 21)]
        pts = tap_limit_curve(spec, u_grid, k=3, alpha_p=res.profile)
        for p in pts:
            excess = p.F_TAP - res.value
            worst = max(worst, excess)
            if not (excess <= 1e-3):
                bad.append((name, round(p.u, 4), p.status))
    dt = time.perf_counter() - t
    ok = not bad and dt < 1800
    record(4, ok, f"max F_TAP(u)-F={worst:.3e} over 40 points, runtime={dt / 60:.1f} min"
                  + (f" violations={bad}" if bad else ""))
    assert ok


# ---------------------------------------------------------------- 5, 6: SDE diagnostics

def _optimality(spec, alpha, seed=0):
    qp = support_max(alpha)
    atoms = sorted({q for q, _ in alpha.knots})
    pde = solve_parisi(spec, alpha)
    run = simulate(spec, alpha, pde, end_s=qp, n_paths=N_PATHS, n_steps=N_STEPS, seed=seed,
                   checkpoints=sorted({0.0, qp} | set(atoms)))
    i = run.checkpoint_index(qp)
    terms = [(run.v_sq_mean[i] - qp, run.v_sq_se[i])]
    terms += [(g, se) for s, g, se in optimality_profile(run, spec) if s in atoms]
    ratio = max(abs(v) / (3 * se + 1e-12) for v, se in terms)
    return run, ratio


@pytest.mark.parametrize("label,spec", [("SK b=0.3", SK_HT), ("SK b=1.5", SK_LT)])
def test_criterion_05_optimality_diagnostics(label, spec):
    res = parisi(spec)
    _, ratio = _optimality(spec, res.profile)
    _, ratio_neg = _optimality(spec, perturb_top(res.profile, 0.05))
    ok = ratio < 1 and ratio_neg >= 1
    prev = conftest.ACCEPTANCE.get(5, (True, ""))
    detail = (prev[1] + "; " if prev[1] else "") + \
        f"{label}: max |resid|/3SE={ratio:.2f}, +0.05 control={ratio_neg:.1f}"
    record(5, prev[0] and ok, detail)
    assert ok


@pytest.mark.parametrize("label,spec", [("SK b=0.3", SK_HT), ("SK b=1.5", SK_LT)])
def test_criterion_06_delta_identity_and_assembly(label, spec):
    res = parisi(spec)
    run, _ = _optimality(spec, res.profile, seed=1)
    d = delta_and_energy(spec, res.profile, run, res.value)
    r = abs(d["Delta_mc"] - d["Delta_identity"])
    ok = r < 3 * d["Delta_mc_se"] and d["assembly_residual"] < 1e-10
    prev = conftest.ACCEPTANCE.get(6, (True, ""))
    detail = (prev[1] + "; " if prev[1] else "") + \
        f"{label}: |dMC-dId|/SE={r / d['Delta_mc_se']:.2f} assembly={d['assembly_residual']:.1e}"
    record(6, prev[0] and ok, detail)
    assert ok


# ---------------------------------------------------------------- 7, 8, 9: high temperature, finite N

@pytest.fixture(scope="module")
def ht_sweep():
    q_star = rs_fixed_point(SK_HT)
    out = {"q_star": q_star, "C": onsager_C(SK_HT, q_star)}
    t = time.perf_counter()
    for n in (12, 16, 20):
        tap, ent, fn, ft = [], [], [], []
        for s in range(100):
            inst = F.sample_instance(SK_HT, n, s)
            st = F.gibbs_statistics(inst)
            tap.append(F.tap_value(inst, st.magnetization) - st.free_energy)
            ent.append(F.entropy_discrepancy(inst, st, q_star)["lhs"])
            if n == 20:
                fn.append(st.free_energy)
                tp = F.maximize_tap(inst, (q_star - 0.05, 1.0), gibbs_mag=st.magnetization, seed=s)
                ft.append(tp.value)
        out[n] = {"tap": np.array(tap), "ent": np.array(ent), "F_N": np.array(fn),
                  "F_TAP": np.array(ft)}
    out["runtime"] = time.perf_counter() - t
    return out


def test_criterion_07_tap_at_gibbs_magnetization(ht_sweep):
    rms = [math.sqrt(np.mean(ht_sweep[n]["tap"] ** 2)) for n in (12, 16, 20)]
    ok = rms[0] > rms[1] > rms[2] and rms[2] < 0.05 and ht_sweep["runtime"] < 1200
    record(7, ok, "RMS(F_TAP(<s>)-F_N) N=12,16,20: " + ", ".join(f"{r:.4f}" for r in rms)
           + f"; sweep runtime={ht_sweep['runtime'] / 60:.1f} min")
    assert ok


def test_criterion_08_entropy_discrepancy(ht_sweep):
    c = ht_sweep["C"]
    rms = [math.sqrt(np.mean((ht_sweep[n]["ent"] - c) ** 2)) for n in (12, 16, 20)]
    mean_abs = float(np.mean(np.abs(ht_sweep[20]["ent"])))
    ok = rms[0] > rms[1] > rms[2] and mean_abs > c / 2
    record(8, ok, "RMS(lhs-C(q*)) N=12,16,20: " + ", ".join(f"{r:.5f}" for r in rms)
           + f"; mean|lhs| at N=20={mean_abs:.5f} > C(q*)/2={c / 2:.5f}")
    assert ok


def test_criterion_09_constrained_tap_max(ht_sweep):
    d = abs(float(np.mean(ht_sweep[20]["F_TAP"]) - np.mean(ht_sweep[20]["F_N"])))
    ok = d < 0.02
    record(9, ok, f"|mean max F_TAP - mean F_N| at N=20 = {d:.4f}")
    assert ok


# ---------------------------------------------------------------- 10: oracle suite

def _naive_h(inst, s):
    e = inst.h * s.sum()
    n = inst.N
    for p, g in inst.couplings.items():
        c = inst.scale(p)
        if p == 2:
            for i in range(n):
                for j in range(n):
                    e += c * g[i, j] * s[i] * s[j]
        else:
            for i in range(n):
                for j in range(n):
                    for k in range(n):
                        e += c * g[i, j, k] * s[i] * s[j] * s[k]
    return e


def test_criterion_10_oracle_suite():
    rng = np.random.default_rng(10)
    details = []
    # tap_gradient vs central differences
    inst = F.sample_instance(MixtureSpec({2: 0.5, 3: 0.4}, 0.2), 10, 1)
    worst_g = 0.0
    for _ in range(50):
        m = np.tanh(rng.normal(size=10))
        g = F.tap_gradient(inst, m)
        fd = np.array([(F.tap_value(inst, m + 1e-6 * e) - F.tap_value(inst, m - 1e-6 * e)) / 2e-6
                       for e in np.eye(10)])
        worst_g = max(worst_g, np.max(np.abs(g - fd)) / np.max(np.abs(g)))
    details.append(f"grad rel={worst_g:.1e}")
    # Gray code vs naive enumeration
    worst_e = 0.0
    for spec, n in ((MixtureSpec.sk(1.0, 0.2), 12), (MixtureSpec({2: 0.4, 3: 0.6}, 0.1), 10)):
        inst = F.sample_instance(spec, n, 4)
        naive = np.array([_naive_h(inst, F.spins_of(c, n)) for c in range(1 << n)])
        worst_e = max(worst_e, np.max(np.abs(F.all_energies(inst) - naive)))
    details.append(f"enum={worst_e:.1e}")
    # hamiltonian vs loops on soft points
    worst_h = 0.0
    for s in range(20):
        inst = F.sample_instance(MixtureSpec({2: 0.6, 3: 0.5}, -0.2), 6, s)
        m = rng.uniform(-1, 1, 6)
        worst_h = max(worst_h, abs(F.hamiltonian(inst, m) - _naive_h(inst, m)))
    details.append(f"H={worst_h:.1e}")
    # variational identity
    worst_v = 0.0
    for s in range(5):
        st = F.gibbs_statistics(F.sample_instance(MixtureSpec({2: 0.8, 3: 0.3}, 0.2), 12, s))
        worst_v = max(worst_v, abs(st.free_energy - (st.mean_energy - st.entropy)))
    details.append(f"F=<H>/N-S: {worst_v:.1e}")
    # covariance of X_N against N xi(R)
    spec = MixtureSpec({2: 0.7, 3: 0.5})
    n = 8
    s1 = np.ones(n)
    s2 = s1.copy()
    s2[:2] = -1.0
    x = np.array([[F.hamiltonian(inst, s1), F.hamiltonian(inst, s2)]
                  for inst in (F.sample_instance(spec, n, k) for k in range(10_000))])
    r = float(s1 @ s2) / n
    rel_c = abs(np.mean(x[:, 0] * x[:, 1]) / (n * spec.xi(r)) - 1)
    rel_v = abs(np.mean(x[:, 0] ** 2) / (n * spec.xi(1.0)) - 1)
    details.append(f"cov rel={rel_c:.3f}, var rel={rel_v:.3f}")
    ok = worst_g < 1e-6 and worst_e < 1e-12 and worst_h < 1e-10 and worst_v < 1e-10 \
        and rel_c < 0.05 and rel_v < 0.05
    record(10, ok, "; ".join(details))
    assert ok


# ---------------------------------------------------------------- 11: low temperature pure states

def test_criterion_11_pure_state_gap():
    qp = parisi(SK_LT).q_P
    eps = (0.1, 0.2, 0.3)
    gaps = {}
    for n in (14, 18):
        rows = []
        for s in range(50):
            inst = F.sample_instance(SK_LT, n, s)
            rows.append(F.pure_state_gap(inst, qp, eps, 16, s))
        gaps[n] = {e: float(np.mean([r[e] for r in rows])) for e in eps}
    again = [F.pure_state_gap(F.sample_instance(SK_LT, 18, s), qp, eps, 16, s) for s in range(3)]
    first = [F.pure_state_gap(F.sample_instance(SK_LT, 18, s), qp, eps, 16, s) for s in range(3)]
    reproducible = again == first
    finite = all(math.isfinite(v) for g in gaps.values() for v in g.values())
    ok = finite and reproducible and gaps[18][0.2] <= gaps[14][0.2]
    record(11, ok, f"q_P={qp:.4f}; N=18 gap by eps " +
           ", ".join(f"{e}:{gaps[18][e]:.2e}" for e in eps) +
           f"; eps=0.2 N=14 {gaps[14][0.2]:.2e} -> N=18 {gaps[18][0.2]:.2e}; reproducible={reproducible}")
    assert ok
