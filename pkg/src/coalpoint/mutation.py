"""Infinite-sites mutations on a coalescent point process.

Mutations fall as Poisson points of rate theta along every branch. On branch
i >= 1 only heights below H_i matter; on branch 0 only heights below Y_n are
generated, since anything older is carried by the whole sample.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Optional, Tuple

import numpy as np

from . import _kernels
from .genealogy import CoalescentSample, coalescence_times, subtending_measures

__all__ = [
    "ANCESTRAL",
    "MutationOverlay",
    "SiteSpectrum",
    "AlleleSpectrum",
    "ThetaScan",
    "overlay",
    "segregating_sites",
    "site_spectrum",
    "expected_spectrum_given_tree",
    "haplotype_keys",
    "allele_spectrum",
    "theta_scan",
    "brute_force_check",
    "prefix",
    "carrier_counts",
    "read_spectrum_csv",
]

ANCESTRAL = _kernels.ANCESTRAL


@dataclass(frozen=True, eq=False)
class MutationOverlay:
    """Per-branch sorted mutation heights in CSR layout.

    ``heights[offsets[i]:offsets[i+1]]`` are the mutations on branch i.

    A collapsed overlay stores one representative per carrier interval (the
    lowest mutation there) and ``multiplicity`` counts the mutations it
    stands for. Carrier sets, and hence both spectra, are the same as for
    the full overlay; without ``multiplicity`` every entry counts once.
    """

    offsets: np.ndarray
    heights: np.ndarray
    theta: float
    sample: CoalescentSample = field(repr=False)
    seed_path: Tuple[int, ...] = ()
    multiplicity: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        offsets = np.ascontiguousarray(self.offsets, dtype=np.int64)
        heights = np.ascontiguousarray(self.heights, dtype=float)
        n = self.sample.n
        if offsets.shape != (n + 1,) or offsets[0] != 0 or offsets[-1] != heights.size:
            raise ValueError("offsets do not describe the heights array")
        if np.any(np.diff(offsets) < 0):
            raise ValueError("offsets must be nondecreasing")
        caps = np.concatenate([[self.sample.max_length], self.sample.lengths])
        code = _kernels.overlay_violation(offsets, heights, caps)
        if code == 1:
            raise ValueError("mutation above branch")
        if code == 2:
            raise ValueError("mutation heights must be strictly increasing within a branch")
        if self.multiplicity is not None:
            mult = np.ascontiguousarray(self.multiplicity, dtype=np.int64)
            if mult.shape != heights.shape or np.any(mult < 1):
                raise ValueError("multiplicity must be a positive count per stored mutation")
            mult.setflags(write=False)
            object.__setattr__(self, "multiplicity", mult)
        offsets.setflags(write=False)
        heights.setflags(write=False)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "heights", heights)

    @property
    def weights(self) -> np.ndarray:
        if self.multiplicity is None:
            return np.ones(self.heights.size, dtype=np.int64)
        return self.multiplicity

    @property
    def total(self) -> int:
        """Number of mutations represented (stored entries times multiplicity)."""
        return int(self.heights.size) if self.multiplicity is None else int(self.multiplicity.sum())

    def branch(self, i: int) -> np.ndarray:
        return self.heights[self.offsets[i] : self.offsets[i + 1]]

    def branch_of(self, mutation_id: int) -> int:
        return int(np.searchsorted(self.offsets, mutation_id, side="right") - 1)

    @classmethod
    def from_branch_lists(
        cls,
        sample: CoalescentSample,
        mutations: Mapping[int, Iterable[float]],
        theta: float = float("nan"),
        drop_fixed: bool = True,
    ) -> "MutationOverlay":
        """Build an overlay from ``{branch: heights}``.

        With ``drop_fixed``, branch-0 heights at or above Y_n are discarded
        (every sampled individual carries them).
        """
        lists = []
        for i in range(sample.n):
            xs = np.sort(np.asarray(list(mutations.get(i, ())), dtype=float))
            if i == 0 and drop_fixed:
                xs = xs[xs < sample.max_length]
            lists.append(xs)
        counts = np.array([x.size for x in lists], dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(counts)])
        heights = np.concatenate(lists) if lists else np.empty(0)
        return cls(offsets, heights, theta, sample)


@dataclass(frozen=True)
class SiteSpectrum:
    """counts[k-1] = S_n(k) for k = 1..n-1."""

    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(np.sum(self.counts))

    def __getitem__(self, k: int) -> int:
        return int(self.counts[k - 1]) if 1 <= k <= self.counts.size else 0

    def as_dict(self) -> Dict[int, int]:
        return {int(k) + 1: int(c) for k, c in enumerate(self.counts) if c}

    def __eq__(self, other):
        return isinstance(other, SiteSpectrum) and np.array_equal(self.counts, other.counts)

    def to_csv(self) -> str:
        return _spectrum_csv(self.as_dict(), self.total)


@dataclass(frozen=True)
class AlleleSpectrum:
    """counts[k-1] = A_n(k) for k = 1..n."""

    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(np.sum(self.counts))

    @property
    def n(self) -> int:
        return int(np.dot(np.arange(1, self.counts.size + 1), self.counts))

    def __getitem__(self, k: int) -> int:
        return int(self.counts[k - 1]) if 1 <= k <= self.counts.size else 0

    def as_dict(self) -> Dict[int, int]:
        return {int(k) + 1: int(c) for k, c in enumerate(self.counts) if c}

    def __eq__(self, other):
        return isinstance(other, AlleleSpectrum) and np.array_equal(self.counts, other.counts)

    def to_csv(self) -> str:
        return _spectrum_csv(self.as_dict(), self.total)


def _spectrum_csv(entries: Dict[int, int], total: int) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["k", "count"])
    for k, c in entries.items():
        writer.writerow([k, c])
    writer.writerow(["TOTAL", total])
    return buf.getvalue()


def read_spectrum_csv(text: str) -> Tuple[Dict[int, int], int]:
    entries, total = {}, None
    for row in csv.DictReader(io.StringIO(text)):
        if row["k"] == "TOTAL":
            total = int(row["count"])
        else:
            entries[int(row["k"])] = int(row["count"])
    if total is None:
        raise ValueError("spectrum CSV has no TOTAL row")
    return entries, total


@dataclass(frozen=True)
class ThetaScan:
    """Members K_1 < K_2 < ... of E^theta after individual 0.

    ``lengths[i]`` is the coalescence time between consecutive members,
    max(H_{K_{i-1}+1}..H_{K_i}) with K_0 = 0: the branch lengths of the
    coalescent point process formed by E^theta.
    """

    indices: np.ndarray
    lengths: np.ndarray

    @property
    def increments(self) -> np.ndarray:
        return np.diff(np.concatenate([[0], self.indices]))

    def __len__(self):
        return int(self.indices.size)


# mutation counts are int64; numpy's Poisson sampler stops near 9.2e18 anyway
_MAX_POISSON_MEAN = 1e18


def _poisson(stream, lam):
    if np.any(np.asarray(lam) > _MAX_POISSON_MEAN):
        raise OverflowError(
            f"expected mutation count {float(np.max(lam)):.3g} exceeds the 64-bit counting range"
        )
    return stream.poisson(lam)


def overlay(
    sample: CoalescentSample,
    theta: float,
    stream: np.random.Generator,
    root: bool = True,
    collapse: bool = False,
) -> MutationOverlay:
    """Poisson(theta) mutations on every branch, heights sorted per branch.

    Given its Poisson count, each branch receives sorted uniform heights built
    from normalized exponential spacings, which avoids a sort. ``root=False``
    leaves branch 0 empty; its mutations never separate haplotypes within
    E^theta.

    ``collapse=True`` draws the collapsed overlay instead: a Poisson count
    for each carrier interval and, when positive, the lowest of that many
    uniform points as the representative. Its size is bounded by the number
    of carrier intervals, whereas the full overlay holds about theta * Y_n
    mutations on branch 0, which is unbounded in mean under heavy tails.
    """
    if not theta >= 0:
        raise ValueError("theta must be nonnegative")
    if collapse:
        return _collapsed_overlay(sample, theta, stream, root)
    caps = np.concatenate([[sample.max_length if root else 0.0], sample.lengths])
    counts = _poisson(stream, theta * caps) if theta > 0 else np.zeros(sample.n, dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    spacings = stream.standard_exponential(int(offsets[-1]) + int(np.count_nonzero(counts)))
    heights = _kernels.spacing_heights(offsets, caps, spacings)
    return MutationOverlay(offsets, heights, theta, sample)


def _collapsed_overlay(sample, theta, stream, root):
    table, lower, upper = _kernels.carrier_interval_table(
        sample.h, sample.next_taller, sample.max_length if root else 0.0
    )
    counts = _poisson(stream, theta * (upper - lower)) if theta > 0 else np.zeros(lower.size, dtype=np.int64)
    hit = counts > 0
    c = counts[hit]
    # the minimum of c uniforms on (0, 1) is 1 - U**(1/c)
    u = stream.random(c.size)
    frac = -np.expm1(np.log1p(-u) / c)
    heights = lower[hit] + frac * (upper[hit] - lower[hit])
    heights = np.clip(heights, np.nextafter(lower[hit], np.inf), np.nextafter(upper[hit], -np.inf))
    offsets = np.concatenate([[0], np.cumsum(hit, dtype=np.int64)])[table]
    return MutationOverlay(offsets, heights, theta, sample, multiplicity=c)


def segregating_sites(sample: CoalescentSample, theta: float, stream: np.random.Generator) -> int:
    """S_n without materializing mutations.

    Every generated mutation is polymorphic (those on branch 0 lie below Y_n),
    so S_n is Poisson with mean theta (Y_n + sum H_i).
    """
    if theta == 0:
        return 0
    return int(_poisson(stream, theta * (sample.max_length + float(np.sum(sample.lengths)))))


def prefix(sample: CoalescentSample, ov: MutationOverlay, m: int):
    """Restrict a sample and its overlay to individuals 0..m-1.

    Branch-0 mutations at or above the prefix's Y_m become fixed and are dropped.
    """
    _check_pair(sample, ov)
    sub = sample.prefix(m)
    offsets = ov.offsets[: m + 1].copy()
    root = ov.branch(0)
    keep0 = int(np.searchsorted(root, sub.max_length, side="left"))
    heights = np.concatenate([root[:keep0], ov.heights[ov.offsets[1] : ov.offsets[m]]])
    offsets[1:] -= root.size - keep0
    mult = None
    if ov.multiplicity is not None:
        w = ov.multiplicity
        mult = np.concatenate([w[:keep0], w[ov.offsets[1] : ov.offsets[m]]])
    return sub, MutationOverlay(offsets, heights, ov.theta, sub, ov.seed_path, mult)


def carrier_counts(sample: CoalescentSample, ov: MutationOverlay) -> np.ndarray:
    """Number of sampled carriers of every mutation, in overlay order."""
    _check_pair(sample, ov)
    return _kernels.carrier_counts(sample.h, sample.next_taller, ov.offsets, ov.heights)


def _check_pair(sample, ov):
    if ov.sample is not sample:
        raise ValueError("overlay was built on a different sample")


def site_spectrum(sample: CoalescentSample, ov: MutationOverlay) -> SiteSpectrum:
    _check_pair(sample, ov)
    counts = _kernels.site_spectrum(sample.h, sample.next_taller, ov.offsets, ov.heights, ov.weights)
    return SiteSpectrum(counts[1 : sample.n])


def expected_spectrum_given_tree(sample: CoalescentSample, theta: float) -> np.ndarray:
    """theta * L_k, k = 1..n-1: the spectrum's conditional mean given the genealogy."""
    return theta * subtending_measures(sample)


def haplotype_keys(sample: CoalescentSample, ov: MutationOverlay) -> np.ndarray:
    """Youngest carried mutation id per individual, ANCESTRAL if none."""
    _check_pair(sample, ov)
    return _kernels.haplotype_keys(sample.h, ov.offsets, ov.heights)


def allele_spectrum(keys: np.ndarray) -> AlleleSpectrum:
    keys = np.asarray(keys)
    _, sizes = np.unique(keys, return_counts=True)
    counts = np.bincount(sizes, minlength=keys.size + 1)[1:]
    return AlleleSpectrum(counts)


def theta_scan(
    sample: CoalescentSample,
    ov: MutationOverlay,
    max_pairs: Optional[int] = None,
    keys: Optional[np.ndarray] = None,
) -> ThetaScan:
    """Individuals i >= 1 carrying no mutation beyond those of individual 0.

    Such an individual's youngest mutation, if any, sits on branch 0.
    With ``max_pairs`` only the first members are returned.
    """
    if keys is None:
        keys = haplotype_keys(sample, ov)
    branch0_end = ov.offsets[1]
    members = np.flatnonzero(keys[1:] < branch0_end) + 1
    if max_pairs is not None:
        members = members[:max_pairs]
    previous = np.concatenate([[0], members])[:-1]
    return ThetaScan(members, coalescence_times(sample, previous, members))


def brute_force_check(sample: CoalescentSample, ov: MutationOverlay) -> Tuple[SiteSpectrum, AlleleSpectrum]:
    """Both spectra straight from the carrying rule, without any shortcuts.

    Individual i + k carries mutation l on branch i iff
    max(H_{i+1}..H_{i+k}) < l < H_i. Carrier sets are formed by testing every
    individual, and haplotypes are compared as full mutation sets.
    """
    _check_pair(sample, ov)
    n = sample.n
    h = sample.h
    weights = ov.weights
    carried_by = [[] for _ in range(n)]
    site_counts = np.zeros(n + 1, dtype=np.int64)
    for i in range(n):
        ls = ov.branch(i)
        if ls.size == 0:
            continue
        ids = np.arange(ov.offsets[i], ov.offsets[i + 1])
        # running max of H_{i+1..i+k}, with max of the empty set = 0 for k = 0
        running = np.maximum.accumulate(np.concatenate([[0.0], h[i + 1 :]]))
        carries = running[None, :] < ls[:, None]
        carries &= ls[:, None] < h[i]
        np.add.at(site_counts, np.count_nonzero(carries, axis=1), weights[ids])
        for k in range(n - i):
            col = carries[:, k]
            if col.any():
                carried_by[i + k].append(ids[col])
    sites = SiteSpectrum(site_counts[1:n].copy())

    groups: Dict[bytes, int] = {}
    for j in range(n):
        own = np.sort(np.concatenate(carried_by[j])) if carried_by[j] else np.empty(0, dtype=np.int64)
        token = own.astype(np.int64).tobytes()
        groups[token] = groups.get(token, 0) + 1
    sizes = np.fromiter(groups.values(), dtype=np.int64)
    alleles = AlleleSpectrum(np.bincount(sizes, minlength=n + 1)[1:])
    return sites, alleles
