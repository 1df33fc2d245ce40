"""Deployment-record ingestion, code-family clustering, and timelines.

A corpus is the set of distinct runtime codes (content-addressed by the
SHA-256 of the raw bytes) together with every deployment of each code.
Families group codes by skeleton digest; each family is represented by a
single member and dated by the first deployment of any member.  Timeline
statistics bin families by that first-deployment block.
"""

from __future__ import annotations

import bisect
import hashlib
import json
import logging
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib.resources import files
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from . import evm, metadata, skeleton
from .hexutil import HexInputError, parse_hex

log = logging.getLogger(__name__)

DEFAULT_BIN_WIDTH = 100_000
DEFAULT_HORIZON = 14_000_000

_INLINE_HEX_RE = re.compile(r"(0[xX])?[0-9a-fA-F]*")
_ADDRESS_RE = re.compile(r"(0x)?[0-9a-fA-F]{40}")


class IngestError(ValueError):
    """A malformed deployment record, reported with its line number."""


@dataclass(frozen=True)
class DeploymentRecord:
    """One successful contract deployment."""

    code_id: str
    block: int
    has_source: bool
    address: str | None = None


@dataclass(frozen=True)
class CodeFamily:
    """Runtime codes sharing one skeleton."""

    skeleton_digest: str
    member_code_ids: frozenset[str]
    representative: str
    first_block: int
    deployment_count: int


@dataclass(frozen=True)
class BinRow:
    bin_index: int
    numerator: int
    denominator: int

    @property
    def percentage(self) -> float | None:
        """Percentage for the bin, or ``None`` for an empty bin."""
        if self.denominator == 0:
            return None
        return 100.0 * self.numerator / self.denominator


@dataclass(frozen=True)
class BinSeries:
    bin_width: int
    bins: tuple[BinRow, ...]


@dataclass(frozen=True)
class DedupStats:
    """Counts at each stage of the deduplication pipeline."""

    deployments: int
    distinct_codes: int
    distinct_without_metadata: int
    distinct_without_push_args: int
    distinct_skeletons: int

    def as_dict(self) -> dict[str, int]:
        return {
            "deployments": self.deployments,
            "distinct_runtime_codes": self.distinct_codes,
            "distinct_without_metadata": self.distinct_without_metadata,
            "distinct_without_push_args": self.distinct_without_push_args,
            "skeletons": self.distinct_skeletons,
        }


class Corpus:
    """Distinct runtime codes plus their deployment multiplicities."""

    def __init__(self) -> None:
        self.deployments: list[DeploymentRecord] = []
        self.codes: dict[str, bytes] = {}

    def add(self, record: DeploymentRecord, code: bytes) -> None:
        self.deployments.append(record)
        self.codes.setdefault(record.code_id, code)

    def deployments_by_code(self) -> dict[str, list[DeploymentRecord]]:
        grouped: dict[str, list[DeploymentRecord]] = {cid: [] for cid in self.codes}
        for record in self.deployments:
            grouped[record.code_id].append(record)
        return grouped

    def first_block_by_code(self) -> dict[str, int]:
        first: dict[str, int] = {}
        for record in self.deployments:
            prev = first.get(record.code_id)
            if prev is None or record.block < prev:
                first[record.code_id] = record.block
        return first

    def has_source_by_code(self) -> dict[str, bool]:
        flags = {cid: False for cid in self.codes}
        for record in self.deployments:
            flags[record.code_id] = flags[record.code_id] or record.has_source
        return flags


def code_digest(code: bytes) -> str:
    """Content address of a raw runtime code."""
    return hashlib.sha256(code).hexdigest()


def _resolve_code(code_ref: str, base_dir: Path) -> bytes:
    """Inline hex if it parses as such, otherwise a path to a hex file."""
    ref = code_ref.strip()
    if _INLINE_HEX_RE.fullmatch(ref) and len(ref.removeprefix("0x").removeprefix("0X")) % 2 == 0:
        return parse_hex(ref)
    path = Path(ref) if os.path.isabs(ref) else base_dir / ref
    return parse_hex(path.read_text())


def _parse_record(obj: dict, base_dir: Path, horizon: int) -> tuple[DeploymentRecord, bytes]:
    if not isinstance(obj, dict):
        raise ValueError("record is not a JSON object")
    block = obj["block"]
    if not isinstance(block, int) or isinstance(block, bool) or block < 0:
        raise ValueError(f"block must be a non-negative integer, got {block!r}")
    if block > horizon:
        raise ValueError(f"block {block} beyond corpus horizon {horizon}")
    has_source = obj["has_source"]
    if not isinstance(has_source, bool):
        raise ValueError(f"has_source must be a boolean, got {has_source!r}")
    address = obj.get("address")
    if address is not None:
        if not isinstance(address, str) or not _ADDRESS_RE.fullmatch(address):
            raise ValueError(f"address must be 20-byte hex, got {address!r}")
        address = address.removeprefix("0x").lower()
    code_ref = obj["code_ref"]
    if not isinstance(code_ref, str):
        raise ValueError("code_ref must be a string")
    code = _resolve_code(code_ref, base_dir)
    computed = code_digest(code)
    declared = obj["code_id"]
    if declared != computed:
        raise ValueError(f"code_id {declared!r} does not match code digest {computed}")
    return DeploymentRecord(code_id=computed, block=block, has_source=has_source, address=address), code


def ingest(
    records_path: str | Path,
    *,
    store_dir: str | Path | None = None,
    strict: bool = False,
    horizon: int = DEFAULT_HORIZON,
) -> Corpus:
    """Read line-delimited deployment records into a corpus.

    Codes are deduplicated by raw-code digest; deployment multiplicities
    are retained.  Malformed lines are reported with their line number and
    skipped, or abort the ingest in strict mode.  With ``store_dir`` the
    corpus is also persisted as content-addressed code files plus an index.
    """
    records_path = Path(records_path)
    corpus = Corpus()
    with open(records_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                record, code = _parse_record(obj, records_path.parent, horizon)
            except (ValueError, KeyError, OSError, HexInputError) as exc:
                message = f"{records_path}:{lineno}: {exc}"
                if strict:
                    raise IngestError(message) from exc
                log.error("skipping record: %s", message)
                continue
            corpus.add(record, code)
    if store_dir is not None:
        persist_store(corpus, store_dir)
    return corpus


def persist_store(corpus: Corpus, store_dir: str | Path) -> None:
    """Write content-addressed code files and a deployment index."""
    store = Path(store_dir)
    codes_dir = store / "codes"
    codes_dir.mkdir(parents=True, exist_ok=True)
    for code_id in sorted(corpus.codes):
        shard = codes_dir / code_id[:2]
        shard.mkdir(exist_ok=True)
        (shard / f"{code_id}.hex").write_text(corpus.codes[code_id].hex() + "\n")
    with open(store / "index.jsonl", "w", encoding="utf-8") as fh:
        for record in corpus.deployments:
            fh.write(
                json.dumps(
                    {
                        "code_id": record.code_id,
                        "block": record.block,
                        "address": record.address,
                        "has_source": record.has_source,
                    },
                    sort_keys=True,
                    separators=(",", ":"),
                )
                + "\n"
            )


def load_store(store_dir: str | Path) -> Corpus:
    """Reload a corpus persisted by :func:`persist_store`."""
    store = Path(store_dir)
    corpus = Corpus()
    with open(store / "index.jsonl", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            code_id = obj["code_id"]
            code = parse_hex((store / "codes" / code_id[:2] / f"{code_id}.hex").read_text())
            record = DeploymentRecord(
                code_id=code_id,
                block=obj["block"],
                has_source=obj["has_source"],
                address=obj.get("address"),
            )
            corpus.add(record, code)
    return corpus


def _stage_digests(code: bytes) -> tuple[str, str, str]:
    """Digests after metadata removal, PUSH-argument removal, zero strip."""
    no_meta = metadata.strip_metadata(code, "remove").stripped
    no_push = skeleton.strip_push_operands(no_meta)
    canonical = skeleton.strip_trailing_zeros(no_push)
    return (
        hashlib.sha256(no_meta).hexdigest(),
        hashlib.sha256(no_push).hexdigest(),
        hashlib.sha256(canonical).hexdigest(),
    )


def compute_stages(corpus: Corpus, *, jobs: int = 1) -> dict[str, tuple[str, str, str]]:
    """Stage digests per distinct code, optionally in parallel.

    Results are keyed by code id and independent of ``jobs``.
    """
    code_ids = sorted(corpus.codes)
    payloads = [corpus.codes[cid] for cid in code_ids]
    if jobs > 1 and len(payloads) > 1:
        chunksize = max(1, len(payloads) // (jobs * 4))
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_stage_digests, payloads, chunksize=chunksize))
    else:
        results = [_stage_digests(code) for code in payloads]
    return dict(zip(code_ids, results))


def cluster(
    corpus: Corpus,
    *,
    stages: Mapping[str, tuple[str, str, str]] | None = None,
    jobs: int = 1,
) -> list[CodeFamily]:
    """Partition the corpus codes into skeleton-keyed families.

    The representative is a member with source available when any exists,
    tie-broken by earliest first-deployment block and then by smallest
    code id, so record order never matters.
    """
    if stages is None:
        stages = compute_stages(corpus, jobs=jobs)
    first_block = corpus.first_block_by_code()
    has_source = corpus.has_source_by_code()
    n_deploys = {cid: len(records) for cid, records in corpus.deployments_by_code().items()}

    groups: dict[str, list[str]] = {}
    for code_id in sorted(corpus.codes):
        groups.setdefault(stages[code_id][2], []).append(code_id)

    families = []
    for digest in sorted(groups):
        members = groups[digest]
        candidates = [m for m in members if has_source[m]] or members
        representative = min(candidates, key=lambda m: (first_block[m], m))
        families.append(
            CodeFamily(
                skeleton_digest=digest,
                member_code_ids=frozenset(members),
                representative=representative,
                first_block=min(first_block[m] for m in members),
                deployment_count=sum(n_deploys[m] for m in members),
            )
        )
    return families


def first_deployment_block(corpus: Corpus, code_ids: Iterable[str]) -> int:
    """Earliest deployment block over the given member codes."""
    code_ids = set(code_ids)
    blocks = [r.block for r in corpus.deployments if r.code_id in code_ids]
    if not blocks:
        raise ValueError("no deployments for the given code ids")
    return min(blocks)


def dedup_stats(
    corpus: Corpus,
    *,
    stages: Mapping[str, tuple[str, str, str]] | None = None,
    jobs: int = 1,
) -> DedupStats:
    """Pipeline counts: deployments, then distinct codes stage by stage."""
    if stages is None:
        stages = compute_stages(corpus, jobs=jobs)
    return DedupStats(
        deployments=len(corpus.deployments),
        distinct_codes=len(corpus.codes),
        distinct_without_metadata=len({s[0] for s in stages.values()}),
        distinct_without_push_args=len({s[1] for s in stages.values()}),
        distinct_skeletons=len({s[2] for s in stages.values()}),
    )


def _series_from_counts(
    counts: Mapping[int, tuple[int, int]], bin_width: int, max_bin: int | None
) -> BinSeries:
    if max_bin is None:
        return BinSeries(bin_width=bin_width, bins=())
    rows = tuple(BinRow(i, *counts.get(i, (0, 0))) for i in range(max_bin + 1))
    return BinSeries(bin_width=bin_width, bins=rows)


def ops_timeline(
    corpus: Corpus,
    mnemonics: Sequence[str],
    *,
    bin_width: int = DEFAULT_BIN_WIDTH,
    families: Sequence[CodeFamily] | None = None,
    table: evm.OpcodeTable | None = None,
) -> dict[str, BinSeries]:
    """Per-bin share of families whose representative contains each operation."""
    table = table or evm.default_table()
    for mnemonic in mnemonics:
        table.by_mnemonic[mnemonic]  # unknown mnemonics are table lookup misses
    if families is None:
        families = cluster(corpus)
    rep_ops = {
        family.representative: evm.ops_present(corpus.codes[family.representative], table=table)
        for family in families
    }
    max_bin = max((f.first_block // bin_width for f in families), default=None)
    series: dict[str, BinSeries] = {}
    for mnemonic in mnemonics:
        counts: dict[int, tuple[int, int]] = {}
        for family in families:
            idx = family.first_block // bin_width
            num, den = counts.get(idx, (0, 0))
            counts[idx] = (num + (mnemonic in rep_ops[family.representative]), den + 1)
        series[mnemonic] = _series_from_counts(counts, bin_width, max_bin)
    return series


@dataclass(frozen=True)
class VersionRange:
    label: str
    min_version: tuple[int, int, int]


@dataclass(frozen=True)
class CompilerBinRow:
    bin_index: int
    families: int
    known: int
    shares: tuple[float, ...] | None


@dataclass(frozen=True)
class CompilerTimeline:
    bin_width: int
    labels: tuple[str, ...]
    rows: tuple[CompilerBinRow, ...]


def load_version_ranges(path: str | Path | None = None) -> tuple[VersionRange, ...]:
    """Compiler version ranges; bundled default has one range per capability step."""
    if path is None:
        text = files("skelforge").joinpath("data/compiler_ranges.json").read_text()
    else:
        text = Path(path).read_text()
    ranges = []
    for entry in json.loads(text):
        parts = tuple(int(p) for p in entry["min_version"].split("."))
        if len(parts) != 3:
            raise ValueError(f"min_version must be major.minor.patch, got {entry['min_version']!r}")
        ranges.append(VersionRange(label=entry["label"], min_version=parts))
    if not ranges or ranges[0].min_version != (0, 0, 0):
        raise ValueError("version ranges must start at 0.0.0")
    bounds = [r.min_version for r in ranges]
    if bounds != sorted(set(bounds)):
        raise ValueError("version range bounds must be strictly increasing")
    return tuple(ranges)


def _code_solc_version(code: bytes) -> tuple[int, int, int] | None:
    """Version from the rightmost section carrying one (the code's own trailer)."""
    for section in reversed(metadata.find_metadata(code)):
        if section.solc_version is not None:
            return section.solc_version
    return None


def compiler_timeline(
    corpus: Corpus,
    *,
    bin_width: int = DEFAULT_BIN_WIDTH,
    families: Sequence[CodeFamily] | None = None,
    ranges: Sequence[VersionRange] | None = None,
) -> CompilerTimeline:
    """Per-bin compiler-version-range shares, rescaled over known versions.

    Versions are extracted from the representatives' embedded metadata; in
    each bin the distribution of the known versions is extended to the
    whole bin by rescaling to 100 %.  Bins without any known version carry
    no shares.
    """
    if families is None:
        families = cluster(corpus)
    ranges = tuple(ranges) if ranges is not None else load_version_ranges()
    bounds = [r.min_version for r in ranges]

    max_bin = max((f.first_block // bin_width for f in families), default=None)
    if max_bin is None:
        return CompilerTimeline(bin_width, tuple(r.label for r in ranges), ())

    per_bin_counts: dict[int, list[int]] = {}
    per_bin_total: dict[int, int] = {}
    for family in families:
        idx = family.first_block // bin_width
        per_bin_total[idx] = per_bin_total.get(idx, 0) + 1
        version = _code_solc_version(corpus.codes[family.representative])
        if version is None:
            continue
        range_idx = bisect.bisect_right(bounds, version) - 1
        counts = per_bin_counts.setdefault(idx, [0] * len(ranges))
        counts[range_idx] += 1

    rows = []
    for idx in range(max_bin + 1):
        total = per_bin_total.get(idx, 0)
        counts = per_bin_counts.get(idx)
        known = sum(counts) if counts else 0
        shares = tuple(100.0 * c / known for c in counts) if known else None
        rows.append(CompilerBinRow(bin_index=idx, families=total, known=known, shares=shares))
    return CompilerTimeline(bin_width, tuple(r.label for r in ranges), tuple(rows))
