"""Stratified train/val/test assignment.

Every (class, type_tag) stratum is split on its own, so each stratum's
share of each split is the floor or the ceiling of its exact proportional
quota.  The leftover units after flooring are placed so that the split
totals also equal the largest-remainder rounding of the global quotas
(controlled rounding).  Among valid placements the one preferring the
largest fractional remainders is chosen, ties broken by stratum name and
then by split order; the result depends only on the stratum sizes.
"""

from __future__ import annotations

import logging
from collections import OrderedDict, deque
from dataclasses import replace
from fractions import Fraction

from ..tensor import make_rng
from ..tensor.rng import stream_id
from .manifest import SampleManifest

log = logging.getLogger(__name__)

SPLIT_NAMES = ("train", "val", "test")
MIN_STRATUM = 3


def _exact(ratios) -> list[Fraction]:
    fr = [Fraction(str(r)) for r in ratios]
    s = sum(fr)
    return [r / s for r in fr]


def largest_remainder(total: int, ratios) -> list[int]:
    """Apportion ``total`` by ``ratios``; ties go to the earlier position."""
    quotas = [total * r for r in _exact(ratios)]
    counts = [int(q) for q in quotas]
    order = sorted(range(len(ratios)), key=lambda j: (-(quotas[j] - counts[j]), j))
    for j in order[: total - sum(counts)]:
        counts[j] += 1
    return counts


def controlled_rounding(sizes: "OrderedDict[str, int]", ratios) -> dict[str, list[int]]:
    """Integer allocation per stratum with exact row totals and rounded column totals."""
    shares = _exact(ratios)
    k = len(ratios)
    quotas = {name: [n * r for r in shares] for name, n in sizes.items()}
    alloc = {name: [int(q) for q in qs] for name, qs in quotas.items()}
    extra = {name: sizes[name] - sum(alloc[name]) for name in sizes}
    targets = largest_remainder(sum(sizes.values()), ratios)
    demand = [targets[j] - sum(alloc[n][j] for n in sizes) for j in range(k)]
    frac = {n: [quotas[n][j] - alloc[n][j] for j in range(k)] for n in sizes}
    given = {n: [False] * k for n in sizes}

    cells = sorted(
        ((n, j) for n in sizes for j in range(k) if frac[n][j] > 0),
        key=lambda c: (-frac[c[0]][c[1]], c[0], c[1]),
    )
    for n, j in cells:
        if extra[n] > 0 and demand[j] > 0:
            given[n][j] = True
            extra[n] -= 1
            demand[j] -= 1

    # augmenting paths for any leftovers: row -> free cell -> column -> given cell -> row ...
    for start in sizes:
        while extra[start] > 0:
            path = _augment(start, sizes, frac, given, demand, k)
            if path is None:
                raise RuntimeError(f"controlled rounding failed for stratum {start!r}")
            for n, j, add in path:
                given[n][j] = add
            extra[start] -= 1
            demand[path[-1][1]] -= 1

    return {n: [alloc[n][j] + int(given[n][j]) for j in range(k)] for n in sizes}


def _augment(start, sizes, frac, given, demand, k):
    prev = {("row", start): None}
    queue = deque([("row", start)])
    while queue:
        kind, key = queue.popleft()
        if kind == "row":
            for j in range(k):
                if frac[key][j] > 0 and not given[key][j] and ("col", j) not in prev:
                    prev[("col", j)] = (kind, key)
                    if demand[j] > 0:
                        return _trace(prev, ("col", j))
                    queue.append(("col", j))
        else:
            for n in sizes:
                if given[n][key] and ("row", n) not in prev:
                    prev[("row", n)] = (kind, key)
                    queue.append(("row", n))
    return None


def _trace(prev, end):
    steps = []
    node = end
    while prev[node] is not None:
        parent = prev[node]
        if node[0] == "col":
            steps.append((parent[1], node[1], True))
        else:
            steps.append((node[1], parent[1], False))
        node = parent
    return list(reversed(steps))


def stratified_split(manifest: SampleManifest, ratios=(0.6, 0.2, 0.2), seed: int = 0) -> SampleManifest:
    """Assign train/val/test within every (class, type_tag) stratum.

    Records are shuffled inside each stratum with a stream keyed by
    ``(seed, stratum)``, so a different seed changes membership but never
    the per-stratum counts.  Strata with fewer than 3 records go entirely to
    train with a warning.
    """
    if len(ratios) != 3 or min(ratios) < 0 or sum(ratios) <= 0:
        raise ValueError(f"ratios must be three non-negative numbers, got {ratios}")
    strata: OrderedDict[str, list[int]] = OrderedDict()
    for i, r in enumerate(manifest.records):
        strata.setdefault(r.stratum, []).append(i)
    strata = OrderedDict(sorted(strata.items()))

    splits = ["train"] * len(manifest.records)
    eligible = OrderedDict()
    for name, idx in strata.items():
        if len(idx) < MIN_STRATUM:
            log.warning("stratum %s has %d record(s); assigning all to train", name, len(idx))
            continue
        eligible[name] = len(idx)

    counts = controlled_rounding(eligible, ratios) if eligible else {}
    for name, n_split in counts.items():
        idx = strata[name]
        order = make_rng(seed, "split", stream_id(name)).permutation(len(idx))
        bounds = [0, n_split[0], n_split[0] + n_split[1], len(idx)]
        for s, split_name in enumerate(SPLIT_NAMES):
            for pos in order[bounds[s] : bounds[s + 1]]:
                splits[idx[pos]] = split_name

    records = [replace(r, split=s) for r, s in zip(manifest.records, splits)]
    out = manifest.with_records(records)
    out.seed = seed
    return out
