"""Coalescent point process samples.

A sample of n individuals 0..n-1 is the sequence of branch lengths
H_1..H_{n-1}; the divergence time of individuals i < j is the maximum of
H_{i+1}..H_j. Individual 0 sits on an infinite branch which is never stored:
operations cap it at Y_n = max(H_1..H_{n-1}).
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Optional, Tuple

import numpy as np

from . import _kernels
from .scale_model import ScaleModel

__all__ = [
    "CoalescentSample",
    "DefectiveLawError",
    "simulate",
    "open_uniform",
    "coalescence_time",
    "coalescence_times",
    "carrier_count",
    "carrier_intervals",
    "subtending_measures",
]


class DefectiveLawError(ValueError):
    pass


def open_uniform(stream: np.random.Generator, size=None):
    """Uniform draws on the open interval (0, 1), 53-bit resolution."""
    k = stream.integers(0, 2**53, size=size, dtype=np.int64)
    return (k + 0.5) * 2.0**-53


@dataclass(frozen=True, eq=False)
class CoalescentSample:
    lengths: np.ndarray
    model: Optional[ScaleModel] = None
    seed_path: Tuple[int, ...] = ()
    h: np.ndarray = field(init=False, repr=False)
    next_taller: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        lengths = np.ascontiguousarray(self.lengths, dtype=float)
        if lengths.ndim != 1:
            raise ValueError("lengths must be one-dimensional")
        if lengths.size and not (np.all(np.isfinite(lengths)) and np.all(lengths > 0)):
            raise ValueError("branch lengths must be finite and positive")
        lengths.setflags(write=False)
        h = np.concatenate([[np.inf], lengths])
        h.setflags(write=False)
        nt = _kernels.next_taller(h)
        nt.setflags(write=False)
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "next_taller", nt)

    @property
    def n(self) -> int:
        return self.lengths.size + 1

    @cached_property
    def max_length(self) -> float:
        """Y_n; zero for a single individual."""
        return float(self.lengths.max()) if self.lengths.size else 0.0

    @cached_property
    def _sparse_table(self) -> List[np.ndarray]:
        table = [self.h]
        span = 1
        while 2 * span <= self.n:
            prev = table[-1]
            table.append(np.maximum(prev[:-span], prev[span:]))
            span *= 2
        return table

    def branch_cap(self, i: int) -> float:
        return self.max_length if i == 0 else float(self.h[i])

    def prefix(self, m: int) -> "CoalescentSample":
        """The sample restricted to individuals 0..m-1."""
        if not 1 <= m <= self.n:
            raise ValueError("prefix size out of range")
        return CoalescentSample(self.lengths[: m - 1], self.model, self.seed_path)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["index", "length"])
        for i, x in enumerate(self.lengths, start=1):
            writer.writerow([i, repr(float(x))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, model: Optional[ScaleModel] = None) -> "CoalescentSample":
        rows = list(csv.DictReader(io.StringIO(text)))
        indices = [int(r["index"]) for r in rows]
        if indices != list(range(1, len(rows) + 1)):
            raise ValueError("sample CSV rows must be indexed 1..n-1 in order")
        return cls(np.array([float(r["length"]) for r in rows]), model)


def simulate(model: ScaleModel, n: int, stream: np.random.Generator) -> CoalescentSample:
    """Draw H_1..H_{n-1} i.i.d. from ``model`` by inversion."""
    if n < 1:
        raise ValueError("sample size must be at least 1")
    if model.defect_mass() > 0:
        raise DefectiveLawError(
            "defective branch law: apply horizon or condition_finite"
        )
    lengths = model.sample(open_uniform(stream, n - 1)) if n > 1 else np.empty(0)
    return CoalescentSample(np.atleast_1d(lengths), model)


def coalescence_time(sample: CoalescentSample, i: int, j: int) -> float:
    """max(H_{i+1}..H_j) via the sparse range-maximum table."""
    if not 0 <= i < j <= sample.n - 1:
        raise ValueError("need 0 <= i < j <= n-1")
    return float(coalescence_times(sample, np.array([i]), np.array([j]))[0])


def coalescence_times(sample: CoalescentSample, i: np.ndarray, j: np.ndarray) -> np.ndarray:
    """Vectorized :func:`coalescence_time` for index arrays with i < j."""
    i = np.asarray(i, dtype=np.int64)
    j = np.asarray(j, dtype=np.int64)
    if i.size == 0:
        return np.empty(0)
    if np.any(i < 0) or np.any(j <= i) or np.any(j > sample.n - 1):
        raise ValueError("need 0 <= i < j <= n-1")
    lo, hi = i + 1, j + 1
    level = np.floor(np.log2(hi - lo)).astype(np.int64)
    # guard against log2 rounding at exact powers of two
    level -= (1 << level) > (hi - lo)
    level += (1 << (level + 1)) <= (hi - lo)
    out = np.empty(i.size)
    table = sample._sparse_table
    for lev in np.unique(level):
        sel = level == lev
        row = table[lev]
        out[sel] = np.maximum(row[lo[sel]], row[hi[sel] - (1 << lev)])
    return out


def carrier_count(sample: CoalescentSample, i: int, x: float) -> int:
    """Number of sampled individuals carrying a mutation at height x on branch i."""
    n = sample.n
    if not 0 <= i <= n - 1:
        raise ValueError("branch index out of range")
    if not x > 0:
        raise ValueError("mutation height must be positive")
    if i >= 1 and x >= sample.h[i]:
        raise ValueError("mutation above branch")
    h, nt = sample.h, sample.next_taller
    j = i + 1
    while j < n and h[j] < x:
        j = nt[j]
    return int(j - i)


def carrier_intervals(sample: CoalescentSample, i: int) -> List[Tuple[Tuple[float, float], int]]:
    """Partition of branch i into height intervals with a constant carrier count.

    Branch 0 is covered up to Y_n only.
    """
    n = sample.n
    if not 0 <= i <= n - 1:
        raise ValueError("branch index out of range")
    h, nt = sample.h, sample.next_taller
    top = sample.branch_cap(i)
    out = []
    lower = 0.0
    j = i + 1
    while lower < top:
        if j >= n:
            out.append(((lower, top), n - i))
            break
        upper = min(float(h[j]), top)
        if upper > lower:
            out.append(((lower, upper), int(j - i)))
        lower = upper
        j = nt[j]
    return out


def subtending_measures(sample: CoalescentSample) -> np.ndarray:
    """L_k for k = 1..n-1 (index k-1 of the returned array)."""
    if sample.n < 2:
        raise ValueError("subtending measures need n >= 2")
    L = _kernels.subtending_measures(sample.h, sample.next_taller, sample.max_length)
    return L[1 : sample.n]
