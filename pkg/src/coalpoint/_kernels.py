"""Inner loops over branch arrays.

Conventions shared by every kernel:

* ``h`` has length n with ``h[0] = inf`` and ``h[i] = H_i`` for i >= 1.
* ``nt[i]`` is the least j > i with ``h[j] >= h[i]``, or n if none.
* mutations are stored CSR-style: heights of branch i are
  ``heights[offsets[i]:offsets[i+1]]``, sorted ascending. A mutation's id is
  its position in ``heights``.
"""
import numpy as np

from ._accel import jit

ANCESTRAL = -1


@jit
def next_taller(h):
    n = h.shape[0]
    out = np.full(n, n, dtype=np.int64)
    stack = np.empty(n, dtype=np.int64)
    top = 0
    for j in range(n):
        hj = h[j]
        while top > 0 and h[stack[top - 1]] <= hj:
            top -= 1
            out[stack[top]] = j
        stack[top] = j
        top += 1
    return out


@jit
def spacing_heights(offsets, caps, spacings):
    """Sorted uniform heights on every branch from exponential spacings.

    For c points on branch i, c + 1 consecutive spacings are consumed: the
    partial sums divided by the full sum are the order statistics of c
    uniforms, then scaled by the branch cap.
    """
    out = np.empty(offsets[-1])
    k = 0
    for i in range(offsets.shape[0] - 1):
        lo = offsets[i]
        hi = offsets[i + 1]
        if hi == lo:
            continue
        total = 0.0
        for m in range(lo, hi):
            total += spacings[k]
            out[m] = total
            k += 1
        total += spacings[k]
        k += 1
        scale = caps[i] / total
        prev = 0.0
        for m in range(lo, hi):
            x = out[m] * scale
            # zero spacings or rounding can tie neighbours
            if x <= prev:
                x = np.nextafter(prev, np.inf)
            out[m] = x
            prev = x
    return out


@jit
def overlay_violation(offsets, heights, caps):
    """0 if every branch holds strictly increasing heights in (0, cap), else an error code."""
    for i in range(offsets.shape[0] - 1):
        prev = 0.0
        for m in range(offsets[i], offsets[i + 1]):
            x = heights[m]
            if not x > prev:
                return 2 if m > offsets[i] else 1
            if not x < caps[i]:
                return 1
            prev = x
    return 0


@jit
def carrier_counts(h, nt, offsets, heights):
    """Number of sampled carriers of every mutation (n means fixed in the sample)."""
    n = h.shape[0]
    out = np.empty(heights.shape[0], dtype=np.int64)
    for i in range(n):
        j = i + 1
        for m in range(offsets[i], offsets[i + 1]):
            x = heights[m]
            while j < n and h[j] < x:
                j = nt[j]
            out[m] = j - i
    return out


@jit
def site_spectrum(h, nt, offsets, heights, weights):
    """counts[k] = total weight of mutations with exactly k carriers, k = 0..n."""
    n = h.shape[0]
    counts = np.zeros(n + 1, dtype=np.int64)
    for i in range(n):
        j = i + 1
        for m in range(offsets[i], offsets[i + 1]):
            x = heights[m]
            while j < n and h[j] < x:
                j = nt[j]
            counts[j - i] += weights[m]
    return counts


@jit
def _interval_count(h, nt, top, i):
    n = h.shape[0]
    count = 0
    lower = 0.0
    j = i + 1
    while lower < top:
        upper = top if j >= n or h[j] >= top else h[j]
        if upper > lower:
            count += 1
        lower = upper
        if j < n:
            j = nt[j]
    return count


@jit
def carrier_interval_table(h, nt, y):
    """Every branch cut into height intervals of constant carrier set.

    Returns CSR offsets over branches with the lower and upper end of each
    interval; branch 0 is capped at y.
    """
    n = h.shape[0]
    offsets = np.zeros(n + 1, dtype=np.int64)
    for i in range(n):
        offsets[i + 1] = offsets[i] + _interval_count(h, nt, y if i == 0 else h[i], i)
    lower_out = np.empty(offsets[n])
    upper_out = np.empty(offsets[n])
    for i in range(n):
        top = y if i == 0 else h[i]
        m = offsets[i]
        lower = 0.0
        j = i + 1
        while lower < top:
            upper = top if j >= n or h[j] >= top else h[j]
            if upper > lower:
                lower_out[m] = lower
                upper_out[m] = upper
                m += 1
            lower = upper
            if j < n:
                j = nt[j]
    return offsets, lower_out, upper_out


@jit
def subtending_measures(h, nt, y):
    """L[k] = length of tree subtending exactly k tips; branch 0 is capped at y."""
    n = h.shape[0]
    L = np.zeros(n + 1)
    for i in range(n):
        top = y if i == 0 else h[i]
        lower = 0.0
        j = i + 1
        while True:
            if j >= n:
                L[n - i] += top - lower
                break
            hj = h[j]
            if hj >= top:
                L[j - i] += top - lower
                break
            L[j - i] += hj - lower
            lower = hj
            j = nt[j]
    return L


@jit
def haplotype_keys(h, offsets, heights):
    """Youngest mutation carried by each individual, or -1 (ancestral).

    Left-to-right scan with a stack of the branches whose mutations can still
    be carried (strictly decreasing heights). Each stacked branch keeps a
    pointer to its lowest mutation above the current threshold, which is the
    height of the entry stacked just above it.
    """
    n = h.shape[0]
    keys = np.empty(n, dtype=np.int64)
    st = np.empty(n, dtype=np.int64)
    ptr = np.empty(n, dtype=np.int64)
    resolved = np.empty(n, dtype=np.int64)
    top = 0
    for j in range(n):
        hj = h[j]
        while top > 0 and h[st[top - 1]] <= hj:
            top -= 1
        if top > 0:
            t = top - 1
            b = st[t]
            p = ptr[t]
            end = offsets[b + 1]
            while p < end and heights[p] <= hj:
                p += 1
            ptr[t] = p
            if p < end:
                resolved[t] = p
            elif t > 0:
                resolved[t] = resolved[t - 1]
            else:
                resolved[t] = ANCESTRAL
        st[top] = j
        ptr[top] = offsets[j]
        if offsets[j] < offsets[j + 1]:
            resolved[top] = offsets[j]
        elif top > 0:
            resolved[top] = resolved[top - 1]
        else:
            resolved[top] = ANCESTRAL
        keys[j] = resolved[top]
        top += 1
    return keys


@jit
def spectrum_gap(draws):
    """(min(H_1, H_{k+1}) - max(H_2..H_k))^+ for each row of a (reps, k+1) array."""
    reps, width = draws.shape
    out = np.empty(reps)
    for r in range(reps):
        top = min(draws[r, 0], draws[r, width - 1])
        low = 0.0
        for c in range(1, width - 1):
            if draws[r, c] > low:
                low = draws[r, c]
        out[r] = top - low if top > low else 0.0
    return out
