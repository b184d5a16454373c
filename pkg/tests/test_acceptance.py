"""Acceptance criteria at their stated sizes.

Every test prints one ``ACCEPTANCE <n> PASS|FAIL`` line, then asserts. The
master seed below was fixed before any of these runs and is not tuned.
"""
import math
import time

import numpy as np
import pytest

from coalpoint import _kernels, analytics
from coalpoint.experiments import ExperimentConfig, run_experiment
from coalpoint.genealogy import CoalescentSample, simulate, subtending_measures
from coalpoint.mutation import MutationOverlay, allele_spectrum, haplotype_keys, overlay, site_spectrum
from coalpoint.scale_model import BirthDeath, CriticalBD, Stable, Yule

SEED = 20261016


@pytest.fixture
def verdict(capsys):
    def emit(number, ok, elapsed, limit, detail=""):
        ok = bool(ok) and elapsed < limit
        with capsys.disabled():
            print(f"\nACCEPTANCE {number:>2} {'PASS' if ok else 'FAIL'} "
                  f"({elapsed:.3g} s, limit {limit:g} s) {detail}")
        assert elapsed < limit, f"runtime {elapsed:.1f} s over {limit} s"
        return ok
    return emit


def _run(**kwargs):
    t0 = time.perf_counter()
    rep = run_experiment(ExperimentConfig(seed=SEED, **kwargs))
    return rep, time.perf_counter() - t0


def _failed(rep):
    return "; ".join(f"{r.check} n={r.n} k={r.k}: {r.note or r.statistic}" for r in rep.failures)


# -- 1 --------------------------------------------------------------------------------

FIG2_LENGTHS = (6, 12, 6.5, 3.5, 7.5, 16.5, 6, 3)
FIG2_MUTATIONS = {0: [14.5], 2: [10.5], 3: [2.0], 6: [8.0, 13.0], 7: [5.0]}


def _fig2():
    s = CoalescentSample(np.array(FIG2_LENGTHS, dtype=float))
    ov = MutationOverlay.from_branch_lists(s, FIG2_MUTATIONS)
    return site_spectrum(s, ov), allele_spectrum(haplotype_keys(s, ov))


def test_figure2_golden(verdict):
    _fig2()  # warm-up: the kernels compile on first use
    best = math.inf
    for _ in range(20):
        t0 = time.perf_counter()
        sites, alleles = _fig2()
        best = min(best, time.perf_counter() - t0)
    ok = (sites.total == 6 and alleles.total == 5 and sites.as_dict() == {1: 1, 2: 1, 3: 2, 4: 1, 6: 1}
          and alleles.as_dict() == {1: 2, 2: 2, 3: 1})
    verdict(1, ok, best, 1e-3, f"S={sites.as_dict()} A={alleles.as_dict()}")
    assert ok


# -- 2 --------------------------------------------------------------------------------

def test_oracle_equivalence(verdict):
    rep, elapsed = _run(kind="oracle", instances=1000)
    ok = rep.passed
    verdict(2, ok, elapsed, 30, rep.row("oracle_mismatches").note)
    assert ok, _failed(rep)


# -- 3 --------------------------------------------------------------------------------

def test_closed_forms_reproduced_by_quadrature(verdict):
    t0 = time.perf_counter()
    worst = 0.0
    for theta in (0.5, 1.0, 2.0):
        for k in range(1, 11):
            pairs = [
                (analytics.limit_site_spectrum(Yule(1.0), theta, k, method="quadrature").value,
                 theta / (k * (k + 1))),
                (analytics.limit_site_spectrum(CriticalBD(1.0), theta, k, method="quadrature").value, theta / k),
                (analytics.limit_allele_spectrum(CriticalBD(1.0), theta, k, method="quadrature").value,
                 theta / k * (1 + theta) ** -k),
            ]
            worst = max(worst, max(abs(a - b) for a, b in pairs))
        frac = analytics.limit_allele_fraction(CriticalBD(1.0), theta, method="quadrature").value
        worst = max(worst, abs(frac - theta * math.log1p(1 / theta)))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8
    verdict(3, ok, elapsed, 5, f"max abs error {worst:.2e}")
    assert ok


# -- 4 --------------------------------------------------------------------------------

def test_exact_expectation_yule(verdict):
    rep, elapsed = _run(kind="spectrum", model="yule:a=1.0", theta=1.0, n=(10,), reps=10**5, k_max=9,
                        target="exact")
    spot = analytics.expected_site_count_exact(Yule(1.0), 1.0, 2, 1).value
    rows = [r for r in rep.rows if r.check in ("site_spectrum", "site_spectrum_given_tree")]
    ok = rep.passed and len(rows) == 18 and abs(spot - 2.0) <= 1e-10
    worst = max(abs(r.z) for r in rows)
    verdict(4, ok, elapsed, 120, f"max |z| {worst:.2f}; E S_2(1) = {spot!r}")
    assert ok, _failed(rep)


# -- 5 --------------------------------------------------------------------------------

def test_spectrum_limits(verdict):
    details, ok, elapsed = [], True, 0.0
    for model in ("yule:a=1.0", "critical:a=1.0"):
        rep, t = _run(kind="spectrum", model=model, theta=1.0, n=(20000,), reps=200, k_max=5, target="limit")
        elapsed += t
        z = [r.z for r in rep.rows if r.check == "site_spectrum"]
        mc = [r.z for r in rep.rows if r.check == "site_spectrum_mc_form"]
        ok = ok and rep.passed and len(z) == 5 and len(mc) == 5
        details.append(f"{model}: max |z| {max(map(abs, z)):.2f}, mc-form max |z| {max(map(abs, mc)):.2f}")
        if not rep.passed:
            details.append(_failed(rep))
    verdict(5, ok, elapsed, 180, "; ".join(details))
    assert ok


# -- 6 --------------------------------------------------------------------------------

def test_clt_variance(verdict):
    rep, elapsed = _run(kind="clt", model="yule:a=1.0", theta=1.0, n=(10**4,), reps=2000)
    row = rep.row("clt_variance", n=10**4)
    ok = rep.passed and row.analytic == 2.0
    verdict(6, ok, elapsed, 120, f"variance {row.statistic:.4f}, {row.note}")
    assert ok, _failed(rep)


# -- 7 --------------------------------------------------------------------------------

def test_allele_limits(verdict):
    rep, elapsed = _run(kind="allele", model="critical:a=1.0", theta=1.0, n=(10**3, 10**4, 10**5), reps=50,
                        k_max=1, tolerance=0.01)
    frac = rep.row("allele_fraction", n=10**5)
    single = rep.row("allele_spectrum", n=10**5, k=1)
    trend = rep.row("allele_fraction_trend")
    ok = (rep.passed and frac.passed and single.passed and trend.passed
          and frac.analytic == pytest.approx(math.log(2), abs=1e-15) and single.analytic == 0.5)
    verdict(7, ok, elapsed, 180, f"A_n/n {frac.mc_mean:.5f}; A_n(1)/n {single.mc_mean:.5f}; {trend.note}")
    assert ok, _failed(rep)


# -- 8 --------------------------------------------------------------------------------

def test_thinned_branch_law(verdict):
    rep, elapsed = _run(kind="wtheta", model="critical:a=1.0", theta=1.0, n=(5000,), pooled=10**4)
    ks = rep.row("ks_survival_1_over_w_theta")
    lag = rep.row("lag1_increment_correlation")
    m = 10**4
    ok = rep.passed and ks.statistic < 1.63 / math.sqrt(m) and abs(lag.statistic) <= 4 / math.sqrt(m)
    verdict(8, ok, elapsed, 120, f"KS {ks.statistic:.4f}; lag-1 {lag.statistic:+.4f}; {ks.note}")
    assert ok, _failed(rep)


# -- 9 --------------------------------------------------------------------------------

def test_brownian_regime(verdict):
    rep, elapsed = _run(kind="brownian", model="critical:a=1.0", theta=1.0, n=(10**4, 10**5, 10**6), reps=50,
                        tolerance=0.30)
    level = rep.row("brownian_median", n=10**6)
    trend = rep.row("brownian_trend")
    ok = rep.passed
    verdict(9, ok, elapsed, 600, f"median {level.mc_mean:.4f} (level {'ok' if level.passed else 'off'}); "
                                 f"trend {'ok' if trend.passed else 'not monotone'}: {trend.note}")
    assert ok, _failed(rep)


# -- 10 -------------------------------------------------------------------------------

def test_stable_regime(verdict):
    rep, elapsed = _run(kind="stable", model="stable:alpha=1.5,c=1.0", theta=1.0, n=(10**3, 10**4, 10**5),
                        reps=200, lambdas=(1.0,), tolerance=0.02)
    level = rep.row("stable_laplace", n=10**5, lam=1.0)
    trend = rep.row("stable_laplace_trend", lam=1.0)
    phi_inf = analytics.phi(1.5, math.inf)
    ok = rep.passed and abs(phi_inf - math.sqrt(math.pi)) < 1e-6
    verdict(10, ok, elapsed, 600, f"mean {level.mc_mean:.4f} vs {level.analytic:.4f} (level "
                                  f"{'ok' if level.passed else 'off'}); trend "
                                  f"{'ok' if trend.passed else 'not monotone'}: {trend.note}; phi(inf) {phi_inf!r}")
    assert ok, _failed(rep)


# -- 11 -------------------------------------------------------------------------------

def test_census_equivalence(verdict):
    # the comparator exactly as stated: BirthDeath(a p, a (1 - p)) with a = 1, p = 1/2,
    # which has b = d and is therefore the critical law with a = 1/2
    a, p = 1.0, 0.5
    b, d = a * p, a * (1 - p)
    comparator = f"bd:b={b},d={d}" if b != d else f"critical:a={b}"
    rep, elapsed = _run(kind="census-equivalence", model=f"yule:a={a}", census_p=p, draws=10**5,
                        compare_model=comparator)
    ks = rep.row("census_two_sample_ks")
    identity = rep.row("brownian_census_identity")
    ok = rep.passed
    verdict(11, ok, elapsed, 60, f"KS {ks.statistic:.4f} ({ks.note}); Stable(2,1) identity "
                                 f"{'exact' if identity.passed else 'broken'}")
    assert ok, _failed(rep)


# -- 12 -------------------------------------------------------------------------------

_FAMILIES = (Yule(1.0), CriticalBD(1.0), BirthDeath(1.0, 2.0, horizon=5.0), BirthDeath(2.0, 1.0),
             Stable(1.6, 1.0), Stable(2.0, 0.5))


def _invariant_violations(rng, index):
    model = _FAMILIES[index % len(_FAMILIES)]
    theta = float(rng.choice([0.0, 0.3, 1.0, 3.0]))
    n = int(rng.integers(2, 120))
    s = simulate(model, n, rng)
    ov = overlay(s, theta, rng)
    sites = site_spectrum(s, ov)
    alleles = allele_spectrum(haplotype_keys(s, ov))
    bad = []
    if not sites.total >= alleles.total - 1:
        bad.append("S_n >= A_n - 1")
    if sum(k * c for k, c in alleles.as_dict().items()) != n:
        bad.append("sum k A_n(k) = n")
    if sum(sites.as_dict().values()) != ov.total:
        bad.append("sum S_n(k) = S_n")
    L = subtending_measures(s)
    total = s.max_length + float(s.lengths.sum())
    if abs(float(L.sum()) - total) > 1e-9 * max(1.0, total):
        bad.append("sum L_k = Y_n + sum H_i")
    m = int(rng.integers(1, n + 1))
    sub = s.prefix(m)
    full = _kernels.carrier_interval_table(s.h, s.next_taller, s.max_length)
    part = _kernels.carrier_interval_table(sub.h, sub.next_taller, sub.max_length)
    for i in range(1, m):
        if s.next_taller[i] < m:
            a = slice(full[0][i], full[0][i + 1])
            b = slice(part[0][i], part[0][i + 1])
            if not (np.array_equal(full[1][a], part[1][b]) and np.array_equal(full[2][a], part[2][b])):
                bad.append("prefix consistency")
                break
    return bad


def test_invariant_suite(verdict):
    rng = np.random.Generator(np.random.Philox(SEED))
    _invariant_violations(rng, 0)
    t0 = time.perf_counter()
    violations = {}
    for index in range(10**4):
        for name in _invariant_violations(rng, index):
            violations[name] = violations.get(name, 0) + 1
    elapsed = time.perf_counter() - t0
    ok = not violations
    verdict(12, ok, elapsed, 60, f"violations {violations or 'none'} over 10^4 instances")
    assert ok
