import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coalpoint.genealogy import CoalescentSample, simulate, subtending_measures
from coalpoint.mutation import (
    ANCESTRAL,
    MutationOverlay,
    allele_spectrum,
    brute_force_check,
    carrier_counts,
    expected_spectrum_given_tree,
    haplotype_keys,
    overlay,
    prefix,
    read_spectrum_csv,
    segregating_sites,
    site_spectrum,
    theta_scan,
)
from coalpoint.scale_model import CriticalBD, Stable, Yule

FIG2_LENGTHS = np.array([6, 12, 6.5, 3.5, 7.5, 16.5, 6, 3], dtype=float)
# g at 22 sits above Y_9 = 16.5 and is dropped on construction
FIG2_MUTATIONS = {0: [14.5, 22.0], 2: [10.5], 3: [2.0], 6: [8.0, 13.0], 7: [5.0]}


@pytest.fixture
def fig2():
    s = CoalescentSample(FIG2_LENGTHS)
    return s, MutationOverlay.from_branch_lists(s, FIG2_MUTATIONS, theta=1.0)


def carried_sets(sample, ov):
    """Mutation ids carried by each individual, straight from the carrying rule."""
    h = sample.h
    out = [set() for _ in range(sample.n)]
    for i in range(sample.n):
        for m in range(ov.offsets[i], ov.offsets[i + 1]):
            x = ov.heights[m]
            running = 0.0
            for j in range(i, sample.n):
                if j > i:
                    running = max(running, h[j])
                if running < x < h[i]:
                    out[j].add(m)
    return out


def test_fig2_site_spectrum(fig2):
    s, ov = fig2
    assert ov.total == 6
    sites = site_spectrum(s, ov)
    assert sites.total == 6
    assert sites.as_dict() == {1: 1, 2: 1, 3: 2, 4: 1, 6: 1}


def test_fig2_haplotypes(fig2):
    s, ov = fig2
    c, h, e, f, d = 0, 1, 2, 3, 5
    keys = haplotype_keys(s, ov)
    assert list(keys) == [c, c, h, e, h, h, f, d, d]
    alleles = allele_spectrum(keys)
    assert alleles.total == 5
    assert alleles.as_dict() == {1: 2, 2: 2, 3: 1}


def test_fig2_brute_force(fig2):
    s, ov = fig2
    sites, alleles = brute_force_check(s, ov)
    assert sites == site_spectrum(s, ov)
    assert alleles == allele_spectrum(haplotype_keys(s, ov))


def test_fig2_theta_scan(fig2):
    s, ov = fig2
    scan = theta_scan(s, ov)
    assert list(scan.indices) == [1] and list(scan.lengths) == [6.0]


def test_zero_theta():
    rng = np.random.default_rng(0)
    s = simulate(Yule(1.0), 40, rng)
    for collapse in (False, True):
        ov = overlay(s, 0.0, rng, collapse=collapse)
        assert ov.total == 0
        assert site_spectrum(s, ov).total == 0
        keys = haplotype_keys(s, ov)
        assert np.all(keys == ANCESTRAL)
        alleles = allele_spectrum(keys)
        assert alleles.total == 1 and alleles[s.n] == 1
        scan = theta_scan(s, ov)
        assert np.array_equal(scan.indices, np.arange(1, s.n))
        assert np.array_equal(scan.lengths, s.lengths)
    assert np.all(expected_spectrum_given_tree(s, 0.0) == 0)


def test_negative_theta_rejected():
    s = simulate(Yule(1.0), 5, np.random.default_rng(0))
    with pytest.raises(ValueError):
        overlay(s, -1.0, np.random.default_rng(0))


def test_overlay_deterministic():
    s = simulate(Yule(1.0), 100, np.random.default_rng(1))
    a = overlay(s, 1.3, np.random.default_rng(7))
    b = overlay(s, 1.3, np.random.default_rng(7))
    assert np.array_equal(a.offsets, b.offsets) and np.array_equal(a.heights, b.heights)


def test_overlay_poisson_means():
    s = simulate(Yule(1.0), 6, np.random.default_rng(2))
    theta, reps = 1.5, 10**4
    rng = np.random.default_rng(3)
    counts = np.array([np.diff(overlay(s, theta, rng).offsets) for _ in range(reps)])
    caps = np.concatenate([[s.max_length], s.lengths])
    mean = counts.mean(axis=0)
    assert np.all(np.abs(mean - theta * caps) <= 4 * np.sqrt(theta * caps / reps))


def test_overlay_heights_inside_branches():
    rng = np.random.default_rng(4)
    s = simulate(Stable(1.5, 1.0), 300, rng)
    ov = overlay(s, 2.0, rng)
    for i in range(s.n):
        b = ov.branch(i)
        assert np.all(np.diff(b) > 0)
        assert np.all((b > 0) & (b < s.branch_cap(i)))


def test_overlay_validation():
    s = CoalescentSample(FIG2_LENGTHS)
    with pytest.raises(ValueError, match="above branch"):
        MutationOverlay.from_branch_lists(s, {1: [6.0]})
    with pytest.raises(ValueError, match="strictly increasing"):
        MutationOverlay.from_branch_lists(s, {2: [1.0, 1.0]})
    with pytest.raises(ValueError, match="above branch"):
        MutationOverlay.from_branch_lists(s, {0: [20.0]}, drop_fixed=False)
    with pytest.raises(ValueError):
        MutationOverlay(np.array([0, 1]), np.array([1.0]), 1.0, s)
    offsets = np.zeros(s.n + 1, dtype=np.int64)
    offsets[2:] = 1
    with pytest.raises(ValueError, match="multiplicity"):
        MutationOverlay(offsets, np.array([1.0]), 1.0, s, multiplicity=np.array([0]))


def test_mismatched_sample_rejected(fig2):
    s, ov = fig2
    other = CoalescentSample(FIG2_LENGTHS.copy())
    with pytest.raises(ValueError):
        site_spectrum(other, ov)
    with pytest.raises(ValueError):
        haplotype_keys(other, ov)


def test_expected_spectrum_example():
    s = CoalescentSample(np.array([1.0, 3.0]))
    assert list(expected_spectrum_given_tree(s, 2.0)) == [10.0, 4.0]


@pytest.mark.parametrize("collapse", [False, True])
def test_conditional_unbiasedness(collapse):
    s = simulate(Yule(1.0), 12, np.random.default_rng(5))
    theta, reps = 1.0, 10**4
    rng = np.random.default_rng(6)
    spectra = np.array([site_spectrum(s, overlay(s, theta, rng, collapse=collapse)).counts for _ in range(reps)])
    target = theta * subtending_measures(s)
    stderr = spectra.std(axis=0, ddof=1) / np.sqrt(reps)
    assert np.all(np.abs(spectra.mean(axis=0) - target) <= 4 * stderr)


def test_own_branch_mutation_is_key():
    s = CoalescentSample(np.array([2.0, 1.0, 4.0]))
    ov = MutationOverlay.from_branch_lists(s, {3: [0.5, 1.5]})
    assert haplotype_keys(s, ov)[3] == 0


instances = st.tuples(
    st.lists(st.floats(0.05, 20.0), min_size=0, max_size=30),
    st.floats(0.0, 3.0),
    st.integers(0, 2**32 - 1),
    st.booleans(),
)


@settings(max_examples=300, deadline=None)
@given(instances)
def test_fast_paths_match_brute_force(inst):
    lengths, theta, seed, collapse = inst
    s = CoalescentSample(np.array(lengths, dtype=float))
    ov = overlay(s, theta, np.random.default_rng(seed), collapse=collapse)
    sites, alleles = brute_force_check(s, ov)
    assert site_spectrum(s, ov) == sites
    assert allele_spectrum(haplotype_keys(s, ov)) == alleles


@settings(max_examples=200, deadline=None)
@given(instances)
def test_spectrum_invariants(inst):
    lengths, theta, seed, collapse = inst
    s = CoalescentSample(np.array(lengths, dtype=float))
    ov = overlay(s, theta, np.random.default_rng(seed), collapse=collapse)
    sites = site_spectrum(s, ov)
    alleles = allele_spectrum(haplotype_keys(s, ov))
    assert sites.total >= alleles.total - 1
    assert alleles.n == s.n
    assert sites.total == int(sites.counts.sum())
    assert sites.counts.size == s.n - 1
    if not collapse:
        assert sites.total == ov.total - int(np.sum(carrier_counts(s, ov) == s.n))


@settings(max_examples=150, deadline=None)
@given(instances)
def test_theta_scan_matches_definition(inst):
    lengths, theta, seed, collapse = inst
    s = CoalescentSample(np.array(lengths, dtype=float))
    ov = overlay(s, theta, np.random.default_rng(seed), collapse=collapse)
    sets = carried_sets(s, ov)
    members = [j for j in range(1, s.n) if sets[j] <= sets[0]]
    scan = theta_scan(s, ov)
    assert list(scan.indices) == members
    prev = [0] + members[:-1]
    assert list(scan.lengths) == [float(s.lengths[a:b].max()) for a, b in zip(prev, members)]


def test_theta_scan_max_pairs():
    s = simulate(Yule(1.0), 200, np.random.default_rng(0))
    ov = overlay(s, 0.2, np.random.default_rng(1))
    full = theta_scan(s, ov)
    short = theta_scan(s, ov, max_pairs=3)
    assert np.array_equal(short.indices, full.indices[:3])
    assert np.array_equal(short.lengths, full.lengths[:3])


@settings(max_examples=150, deadline=None)
@given(instances, st.integers(1, 31))
def test_prefix_matches_restricted_sample(inst, m):
    lengths, theta, seed, collapse = inst
    s = CoalescentSample(np.array(lengths, dtype=float))
    m = min(m, s.n)
    ov = overlay(s, theta, np.random.default_rng(seed), collapse=collapse)
    sub, sub_ov = prefix(s, ov, m)
    assert sub.n == m
    sites, alleles = brute_force_check(sub, sub_ov)
    assert site_spectrum(sub, sub_ov) == sites
    assert allele_spectrum(haplotype_keys(sub, sub_ov)) == alleles
    # haplotype classes of the first m individuals are those of the full sample restricted
    full_keys = haplotype_keys(s, ov)[:m]
    sub_keys = haplotype_keys(sub, sub_ov)
    same_full = full_keys[:, None] == full_keys[None, :]
    same_sub = sub_keys[:, None] == sub_keys[None, :]
    assert np.array_equal(same_full, same_sub)


def test_collapsed_overlay_total_mean():
    s = simulate(CriticalBD(1.0), 50, np.random.default_rng(3))
    rng = np.random.default_rng(4)
    theta, reps = 0.7, 4000
    totals = np.array([overlay(s, theta, rng, collapse=True).total for _ in range(reps)])
    lam = theta * (s.max_length + s.lengths.sum())
    assert abs(totals.mean() - lam) <= 4 * np.sqrt(lam / reps)


def test_collapsed_overlay_is_small_under_heavy_tails():
    s = simulate(Stable(1.5, 1.0), 10**5, np.random.default_rng(0))
    ov = overlay(s, 1.0, np.random.default_rng(1), collapse=True)
    assert ov.heights.size < 10 * s.n
    assert ov.total >= ov.heights.size


def test_count_overflow_is_reported():
    s = simulate(Stable(1.05, 1.0), 10**4, np.random.default_rng(0))
    with pytest.raises(OverflowError):
        segregating_sites(s, 1.0, np.random.default_rng(1))


def test_segregating_sites_law():
    s = simulate(Yule(1.0), 30, np.random.default_rng(5))
    rng = np.random.default_rng(6)
    draws = np.array([segregating_sites(s, 1.0, rng) for _ in range(4000)])
    lam = s.max_length + s.lengths.sum()
    assert abs(draws.mean() - lam) <= 4 * np.sqrt(lam / 4000)


def test_spectrum_csv(fig2):
    s, ov = fig2
    text = site_spectrum(s, ov).to_csv()
    assert text.splitlines() == ["k,count", "1,1", "2,1", "3,2", "4,1", "6,1", "TOTAL,6"]
    assert read_spectrum_csv(text) == ({1: 1, 2: 1, 3: 2, 4: 1, 6: 1}, 6)
    alleles = allele_spectrum(haplotype_keys(s, ov)).to_csv()
    assert alleles.splitlines()[-1] == "TOTAL,5"
    with pytest.raises(ValueError):
        read_spectrum_csv("k,count\n1,2\n")
