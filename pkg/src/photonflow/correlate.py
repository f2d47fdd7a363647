"""Streaming cross-correlator: the performance-critical histogram kernel."""

from __future__ import annotations

import numpy as np

from .core import CoincidenceHistogram, ConfigError, TagStream


def cross_correlate(
    a: TagStream,
    b: TagStream,
    max_delay_ps: int,
    bin_width_ps: int,
    chunk_size: int = 1 << 16,
) -> CoincidenceHistogram:
    """Histogram of delays (t_b - t_a) over [-max_delay, +max_delay).

    Both streams must be sorted.  A sliding window located with binary search
    visits each qualifying pair exactly once, so the cost is
    O(n log m + pairs) and the result is identical to brute-force enumeration.
    Work proceeds in chunks of stream A to bound memory.
    """
    if max_delay_ps <= 0 or bin_width_ps <= 0:
        raise ConfigError("max_delay_ps and bin_width_ps must be positive")
    if max_delay_ps % bin_width_ps != 0:
        raise ConfigError("bin_width_ps must divide max_delay_ps")
    ta, tb = a.tags, b.tags
    if np.any(np.diff(ta) < 0) or np.any(np.diff(tb) < 0):
        raise ConfigError("tag streams must be sorted")

    n_bins = 2 * max_delay_ps // bin_width_ps
    counts = np.zeros(n_bins, dtype=np.int64)

    for start in range(0, ta.size, chunk_size):
        a_chunk = ta[start : start + chunk_size]
        lo = np.searchsorted(tb, a_chunk - max_delay_ps, side="left")
        hi = np.searchsorted(tb, a_chunk + max_delay_ps, side="left")
        per = hi - lo
        total = int(per.sum())
        if total == 0:
            continue
        # flat indices of every (a_i, b_j) pair inside the window
        offsets = np.repeat(np.cumsum(per) - per, per)
        flat = np.repeat(lo, per) + (np.arange(total) - offsets)
        delays = tb[flat] - np.repeat(a_chunk, per)
        bins = (delays + max_delay_ps) // bin_width_ps
        counts += np.bincount(bins, minlength=n_bins)

    return CoincidenceHistogram(
        bin_width_ps=bin_width_ps,
        offset_ps=-max_delay_ps + bin_width_ps / 2.0,
        counts=counts,
    )
