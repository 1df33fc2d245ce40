"""Tool-agreement analytics over a flagged matrix.

The central measure is the asymmetric overlap between two tools: over the
SWC classes both can detect, the share of the first tool's flagged codes
that the second tool also flags.  100 % therefore means the first tool
flags a subset of what the second flags, and mutual 100 % means the
flagged sets coincide on every shared class.

Undefined values (no shared class, or an empty denominator) are kept
distinct from 0 and 100: functions return ``None`` and exports leave the
cell empty.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

from .corpus import DEFAULT_BIN_WIDTH, BinRow, BinSeries, CodeFamily, Corpus
from .findings import FlaggedMatrix


@dataclass(frozen=True)
class OverlapMatrix:
    """Pairwise overlaps; asymmetric by construction."""

    tools: tuple[str, ...]
    values: dict[tuple[str, str], float | None]

    def get(self, t1: str, t2: str) -> float | None:
        return self.values[(t1, t2)]


@dataclass(frozen=True)
class BreakdownRow:
    """Shares of one tool's flagged codes by how many tools agree."""

    tool: str
    swc_class: int
    flagged: int
    share_1: float | None
    share_2: float | None
    share_3: float | None
    share_4plus: float | None

    def shares(self) -> tuple[float | None, ...]:
        return (self.share_1, self.share_2, self.share_3, self.share_4plus)


@dataclass(frozen=True)
class OverlapTimelineRow:
    """One bin of the stacked agreement timeline for a single SWC class."""

    bin_index: int
    numerator: int
    denominator: int
    share_1: float | None
    share_2: float | None
    share_3: float | None
    share_4plus: float | None

    @property
    def percentage(self) -> float | None:
        if self.denominator == 0:
            return None
        return 100.0 * self.numerator / self.denominator

    def shares(self) -> tuple[float | None, ...]:
        return (self.share_1, self.share_2, self.share_3, self.share_4plus)


def overlap(t1: str, t2: str, matrix: FlaggedMatrix) -> float | None:
    """Share of t1's flagged codes that t2 confirms, over shared classes."""
    t1, t2 = matrix.resolve(t1), matrix.resolve(t2)
    shared = matrix.swc[t1] & matrix.swc[t2]
    if not shared:
        return None
    numerator = sum(len(matrix.flagged_set(t1, s) & matrix.flagged_set(t2, s)) for s in shared)
    denominator = sum(len(matrix.flagged_set(t1, s)) for s in shared)
    if denominator == 0:
        return None
    return 100.0 * numerator / denominator


def overlap_matrix(matrix: FlaggedMatrix, tools: Sequence[str] | None = None) -> OverlapMatrix:
    """Evaluate every ordered tool pair."""
    names = tuple(matrix.resolve(t) for t in tools) if tools is not None else matrix.tools
    values = {(t1, t2): overlap(t1, t2, matrix) for t1 in names for t2 in names}
    return OverlapMatrix(tools=names, values=values)


def _agreement_counts(
    matrix: FlaggedMatrix, swc_class: int, tools: Sequence[str]
) -> Counter[str]:
    counts: Counter[str] = Counter()
    for tool in tools:
        if swc_class in matrix.swc[tool]:
            counts.update(matrix.flagged_set(tool, swc_class))
    return counts


def _bucket_shares(bucket_counts: Sequence[int], total: int) -> tuple[float | None, ...]:
    if total == 0:
        return (None, None, None, None)
    return tuple(100.0 * b / total for b in bucket_counts)


def agreement_breakdown(
    matrix: FlaggedMatrix, swc_class: int, tools: Sequence[str] | None = None
) -> tuple[BreakdownRow, ...]:
    """Per tool, how many of its flags for a class are shared by others.

    Each included tool's flagged set is partitioned by the number of
    included tools flagging the same code (1, 2, 3, or 4 and more).
    """
    names = tuple(matrix.resolve(t) for t in tools) if tools is not None else matrix.tools
    covering = [t for t in names if swc_class in matrix.swc[t]]
    if not covering:
        raise ValueError(f"SWC-{swc_class} is covered by no included tool")
    agreement = _agreement_counts(matrix, swc_class, covering)
    rows = []
    for tool in covering:
        codes = matrix.flagged_set(tool, swc_class)
        buckets = [0, 0, 0, 0]
        for code in codes:
            buckets[min(agreement[code], 4) - 1] += 1
        shares = _bucket_shares(buckets, len(codes))
        rows.append(BreakdownRow(tool, swc_class, len(codes), *shares))
    return tuple(rows)


def jaccard(t1: str, t2: str, matrix: FlaggedMatrix, swc_class: int | None = None) -> float | None:
    """Codes flagged by both tools over codes flagged by at least one.

    With a class, the per-class flagged sets are compared; without one, the
    sets are unioned over all classes the tools share.  Undefined when the
    union is empty or the tools share no applicable class.
    """
    t1, t2 = matrix.resolve(t1), matrix.resolve(t2)
    if swc_class is not None:
        if swc_class not in set().union(*matrix.swc.values()):
            raise KeyError(f"SWC-{swc_class} is covered by no tool in the matrix")
        if swc_class not in (matrix.swc[t1] & matrix.swc[t2]):
            return None
        a = matrix.flagged_set(t1, swc_class)
        b = matrix.flagged_set(t2, swc_class)
    else:
        shared = matrix.swc[t1] & matrix.swc[t2]
        if not shared:
            return None
        a = frozenset().union(*(matrix.flagged_set(t1, s) for s in shared))
        b = frozenset().union(*(matrix.flagged_set(t2, s) for s in shared))
    union = a | b
    if not union:
        return None
    return 100.0 * len(a & b) / len(union)


def _first_blocks(families: Sequence[CodeFamily]) -> dict[str, int]:
    return {
        code_id: family.first_block
        for family in families
        for code_id in family.member_code_ids
    }


def overlap_timeline(
    matrix: FlaggedMatrix,
    corpus: Corpus,
    swc_class: int,
    tools: Sequence[str] | None = None,
    *,
    bin_width: int = DEFAULT_BIN_WIDTH,
    families: Sequence[CodeFamily] | None = None,
) -> tuple[OverlapTimelineRow, ...]:
    """Per-bin flagged counts for a class, partitioned by agreement level.

    The denominator counts the corpus families in the bin; the numerator
    counts codes flagged by at least one included tool, split into shares
    flagged by exactly one, two, three, or four and more tools.
    """
    if families is None:
        from .corpus import cluster

        families = cluster(corpus)
    names = tuple(matrix.resolve(t) for t in tools) if tools is not None else matrix.tools
    first_blocks = _first_blocks(families)
    agreement = _agreement_counts(matrix, swc_class, names)

    bin_total: dict[int, int] = {}
    for family in families:
        idx = family.first_block // bin_width
        bin_total[idx] = bin_total.get(idx, 0) + 1

    bin_buckets: dict[int, list[int]] = {}
    for code, n_tools in agreement.items():
        block = first_blocks.get(code)
        if block is None:
            continue
        buckets = bin_buckets.setdefault(block // bin_width, [0, 0, 0, 0])
        buckets[min(n_tools, 4) - 1] += 1

    max_bin = max(bin_total, default=None)
    if max_bin is None:
        return ()
    rows = []
    for idx in range(max_bin + 1):
        buckets = bin_buckets.get(idx, [0, 0, 0, 0])
        flagged = sum(buckets)
        shares = _bucket_shares(buckets, flagged)
        rows.append(
            OverlapTimelineRow(idx, flagged, bin_total.get(idx, 0), *shares)
        )
    return tuple(rows)


def jaccard_timeline(
    matrix: FlaggedMatrix,
    corpus: Corpus,
    t1: str,
    t2: str,
    swc_class: int,
    *,
    bin_width: int = DEFAULT_BIN_WIDTH,
    families: Sequence[CodeFamily] | None = None,
    cumulative: bool = False,
) -> BinSeries:
    """Jaccard similarity of two tools' flagged sets along the timeline.

    Per-bin mode compares codes first deployed in each bin; cumulative mode
    compares everything first deployed up to the end of each bin.
    """
    if families is None:
        from .corpus import cluster

        families = cluster(corpus)
    t1, t2 = matrix.resolve(t1), matrix.resolve(t2)
    first_blocks = _first_blocks(families)
    a_all = matrix.flagged_set(t1, swc_class)
    b_all = matrix.flagged_set(t2, swc_class)

    def bin_of(codes: frozenset[str]) -> Mapping[int, set[str]]:
        out: dict[int, set[str]] = {}
        for code in codes:
            block = first_blocks.get(code)
            if block is None:
                continue
            out.setdefault(block // bin_width, set()).add(code)
        return out

    a_bins, b_bins = bin_of(a_all), bin_of(b_all)
    max_bin = max((f.first_block // bin_width for f in families), default=None)
    if max_bin is None:
        return BinSeries(bin_width=bin_width, bins=())
    rows = []
    a_acc: set[str] = set()
    b_acc: set[str] = set()
    for idx in range(max_bin + 1):
        if cumulative:
            a_acc |= a_bins.get(idx, set())
            b_acc |= b_bins.get(idx, set())
            a, b = a_acc, b_acc
        else:
            a, b = a_bins.get(idx, set()), b_bins.get(idx, set())
        rows.append(BinRow(idx, len(a & b), len(a | b)))
    return BinSeries(bin_width=bin_width, bins=tuple(rows))
