"""Normalized tool-run records, SWC mapping, and the flagged matrix.

Each tool run yields findings (tags for detected properties), errors
(conditions the tool reported), fails (timeouts, out-of-memory, program
issues), and free-form messages.  Findings translate to SWC classes via a
mapping table; rows marked OMITTED (redundant, intermediate, or positive
findings) and UNMAPPED (no fitting SWC class) contribute nothing.

A finding accompanied by errors or fails still counts as a finding; the
error and failure channels are tracked as parallel series instead.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from importlib.resources import files
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .corpus import DEFAULT_BIN_WIDTH, BinRow, BinSeries, Corpus

log = logging.getLogger(__name__)

OMITTED = "OMITTED"
UNMAPPED = "UNMAPPED"

# Cardinalities of the bundled table, asserted at load time.
_BUNDLED_MAPPED_ROWS = 56
_BUNDLED_DISTINCT_CLASSES = 15
_BUNDLED_OMITTED = 7
_BUNDLED_UNMAPPED = 9


class MappingTableError(ValueError):
    """Raised for structurally invalid mapping tables."""


@dataclass(frozen=True)
class FailFlags:
    timeout: bool = False
    oom: bool = False
    program_issue: bool = False

    def any(self) -> bool:
        return self.timeout or self.oom or self.program_issue


@dataclass(frozen=True)
class ToolRunRecord:
    """One tool executed on one code, in normalized form."""

    tool: str
    code_id: str
    findings: tuple[str, ...] = ()
    errors: tuple[str, ...] = ()
    fails: FailFlags = FailFlags()
    messages: tuple[str, ...] = ()
    duration_s: float = 0.0

    def __post_init__(self) -> None:
        if not self.tool:
            raise ValueError("tool id must be nonempty")
        if not self.code_id:
            raise ValueError("code_id must be nonempty")
        if self.duration_s < 0:
            raise ValueError(f"duration_s must be non-negative, got {self.duration_s}")


class MappingTable:
    """(tool, finding) -> SWC class | OMITTED | UNMAPPED.

    Tool ids are matched case-insensitively; finding tags are exact.
    """

    def __init__(self, rows: Iterable[tuple[str, str, int | str]]):
        self._rows: dict[tuple[str, str], int | str] = {}
        self._display: dict[str, str] = {}
        for tool, finding, classification in rows:
            key = (tool.casefold(), finding)
            if key in self._rows:
                raise MappingTableError(f"duplicate mapping row for ({tool}, {finding})")
            self._rows[key] = classification
            self._display.setdefault(tool.casefold(), tool)

    def classification(self, tool: str, finding: str) -> int | str | None:
        """SWC class number, OMITTED/UNMAPPED, or ``None`` when unknown."""
        return self._rows.get((tool.casefold(), finding))

    def display_name(self, tool: str) -> str:
        return self._display.get(tool.casefold(), tool)

    def swc_classes(self, tool: str) -> frozenset[int]:
        """All classes any finding of the tool maps to."""
        key = tool.casefold()
        return frozenset(
            cls for (t, _), cls in self._rows.items() if t == key and isinstance(cls, int)
        )

    def tools(self) -> tuple[str, ...]:
        return tuple(sorted(self._display.values(), key=str.casefold))

    def counts(self) -> tuple[int, int, int, int]:
        """(mapped rows, distinct classes, omitted rows, unmapped rows)."""
        mapped = [cls for cls in self._rows.values() if isinstance(cls, int)]
        omitted = sum(1 for cls in self._rows.values() if cls == OMITTED)
        unmapped = sum(1 for cls in self._rows.values() if cls == UNMAPPED)
        return len(mapped), len(set(mapped)), omitted, unmapped


def _parse_mapping_rows(reader: csv.DictReader) -> list[tuple[str, str, int | str]]:
    rows: list[tuple[str, str, int | str]] = []
    for row in reader:
        token = row["classification"].strip()
        classification: int | str
        if token in (OMITTED, UNMAPPED):
            classification = token
        elif token.startswith("SWC-") and token[4:].isdigit():
            classification = int(token[4:])
        else:
            raise MappingTableError(f"unknown classification token {token!r}")
        rows.append((row["tool"].strip(), row["finding"].strip(), classification))
    return rows


def load_mapping(table_file: str | Path | None = None) -> MappingTable:
    """Load a mapping table; the bundled default is also count-checked."""
    if table_file is None:
        text = files("skelforge").joinpath("data/swc_mapping.csv").read_text()
        table = MappingTable(_parse_mapping_rows(csv.DictReader(io.StringIO(text))))
        counts = table.counts()
        expected = (
            _BUNDLED_MAPPED_ROWS,
            _BUNDLED_DISTINCT_CLASSES,
            _BUNDLED_OMITTED,
            _BUNDLED_UNMAPPED,
        )
        if counts != expected:
            raise MappingTableError(f"bundled table counts {counts} != expected {expected}")
        return table
    with open(table_file, newline="", encoding="utf-8") as fh:
        return MappingTable(_parse_mapping_rows(csv.DictReader(fh)))


def map_record(record: ToolRunRecord, table: MappingTable, *, unknown: str = "warn") -> frozenset[int]:
    """SWC classes of a record's findings; OMITTED/UNMAPPED contribute nothing.

    Findings without a table row are an error in strict mode and are
    otherwise skipped with a warning.
    """
    classes = set()
    for finding in record.findings:
        classification = table.classification(record.tool, finding)
        if classification is None:
            message = f"no mapping row for ({record.tool}, {finding})"
            if unknown == "error":
                raise KeyError(message)
            log.warning("%s; finding ignored", message)
        elif isinstance(classification, int):
            classes.add(classification)
    return frozenset(classes)


def _non_omitted_findings(record: ToolRunRecord, table: MappingTable, unknown: str) -> int:
    count = 0
    for finding in record.findings:
        classification = table.classification(record.tool, finding)
        if classification is None:
            if unknown == "error":
                raise KeyError(f"no mapping row for ({record.tool}, {finding})")
            continue
        if classification != OMITTED:
            count += 1
    return count


def load_run_records(path: str | Path, *, strict: bool = False) -> list[ToolRunRecord]:
    """Read line-delimited JSON tool-run records."""
    records = []
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                fails = obj.get("fails", {})
                record = ToolRunRecord(
                    tool=obj["tool"],
                    code_id=obj["code_id"],
                    findings=tuple(obj.get("findings", ())),
                    errors=tuple(obj.get("errors", ())),
                    fails=FailFlags(
                        timeout=bool(fails.get("timeout", False)),
                        oom=bool(fails.get("oom", False)),
                        program_issue=bool(fails.get("program_issue", False)),
                    ),
                    messages=tuple(obj.get("messages", ())),
                    duration_s=float(obj.get("duration_s", 0.0)),
                )
            except (ValueError, KeyError, TypeError) as exc:
                message = f"{path}:{lineno}: {exc}"
                if strict:
                    raise ValueError(message) from exc
                log.error("skipping run record: %s", message)
                continue
            records.append(record)
    return records


def write_run_records(records: Iterable[ToolRunRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(
                json.dumps(
                    {
                        "tool": r.tool,
                        "code_id": r.code_id,
                        "findings": list(r.findings),
                        "errors": list(r.errors),
                        "fails": {
                            "timeout": r.fails.timeout,
                            "oom": r.fails.oom,
                            "program_issue": r.fails.program_issue,
                        },
                        "messages": list(r.messages),
                        "duration_s": r.duration_s,
                    },
                    sort_keys=True,
                    separators=(",", ":"),
                )
                + "\n"
            )


@dataclass
class FlaggedMatrix:
    """Per-(tool, SWC class) flagged-code sets plus detectable classes.

    ``swc`` is derived from the mapping table by default, so a tool's
    detectable classes do not depend on what happened to be observed.
    """

    tools: tuple[str, ...]
    flagged: dict[tuple[str, int], frozenset[str]] = field(default_factory=dict)
    swc: dict[str, frozenset[int]] = field(default_factory=dict)

    def resolve(self, tool: str) -> str:
        for name in self.tools:
            if name.casefold() == tool.casefold():
                return name
        raise KeyError(f"unknown tool id {tool!r}")

    def flagged_set(self, tool: str, swc_class: int) -> frozenset[str]:
        return self.flagged.get((tool, swc_class), frozenset())

    def classes(self) -> tuple[int, ...]:
        return tuple(sorted(set().union(*self.swc.values()) if self.swc else set()))


def build_matrix(
    records: Sequence[ToolRunRecord],
    table: MappingTable,
    *,
    corpus: Corpus | None = None,
    unknown: str = "warn",
    swc_from_observed: bool = False,
) -> FlaggedMatrix:
    """Aggregate run records into the flagged matrix.

    Multiple records for the same (tool, code) are unioned.  With a corpus,
    records for codes outside it are skipped with a warning; without one,
    the check is skipped entirely.  ``swc_from_observed`` derives each
    tool's detectable classes from nonempty flagged sets instead of the
    table.
    """
    flagged: dict[tuple[str, int], set[str]] = {}
    tools: set[str] = set()
    for record in records:
        tool = table.display_name(record.tool)
        tools.add(tool)
        if corpus is not None and record.code_id not in corpus.codes:
            log.warning("record for unknown code %s skipped", record.code_id)
            continue
        for swc_class in map_record(record, table, unknown=unknown):
            flagged.setdefault((tool, swc_class), set()).add(record.code_id)

    ordered = tuple(sorted(tools, key=str.casefold))
    if swc_from_observed:
        swc = {
            tool: frozenset(c for (t, c), codes in flagged.items() if t == tool and codes)
            for tool in ordered
        }
    else:
        swc = {tool: table.swc_classes(tool) for tool in ordered}
    return FlaggedMatrix(
        tools=ordered,
        flagged={key: frozenset(codes) for key, codes in flagged.items()},
        swc=swc,
    )


def rate_timelines(
    records: Sequence[ToolRunRecord],
    corpus: Corpus,
    kind: str,
    table: MappingTable | None = None,
    *,
    bin_width: int = DEFAULT_BIN_WIDTH,
    first_blocks: Mapping[str, int] | None = None,
    unknown: str = "warn",
) -> dict[str, BinSeries]:
    """Per-tool, per-bin rates of flagged / error / failed codes.

    ``flagged`` counts codes with at least one non-omitted finding, which
    requires a mapping table.  The denominator of each bin is the number of
    codes the tool analyzed there, so flagged and unflagged codes partition
    each bin.  Codes are dated by their family's first deployment.
    """
    if kind not in ("flagged", "error", "failure"):
        raise ValueError(f"unknown timeline kind {kind!r}")
    if kind == "flagged" and table is None:
        raise ValueError("flagged timelines require a mapping table")
    if first_blocks is None:
        from .corpus import cluster

        first_blocks = {
            code_id: family.first_block
            for family in cluster(corpus)
            for code_id in family.member_code_ids
        }

    hits: dict[str, dict[str, bool]] = {}
    for record in records:
        if record.code_id not in first_blocks:
            log.warning("record for unknown code %s skipped", record.code_id)
            continue
        tool = table.display_name(record.tool) if table else record.tool
        if kind == "flagged":
            hit = _non_omitted_findings(record, table, unknown) > 0  # type: ignore[arg-type]
        elif kind == "error":
            hit = bool(record.errors)
        else:
            hit = record.fails.any()
        per_code = hits.setdefault(tool, {})
        per_code[record.code_id] = per_code.get(record.code_id, False) or hit

    series: dict[str, BinSeries] = {}
    for tool in sorted(hits, key=str.casefold):
        counts: dict[int, tuple[int, int]] = {}
        for code_id, hit in hits[tool].items():
            idx = first_blocks[code_id] // bin_width
            num, den = counts.get(idx, (0, 0))
            counts[idx] = (num + hit, den + 1)
        max_bin = max(counts) if counts else None
        if max_bin is None:
            series[tool] = BinSeries(bin_width=bin_width, bins=())
            continue
        rows = tuple(BinRow(i, *counts.get(i, (0, 0))) for i in range(max_bin + 1))
        series[tool] = BinSeries(bin_width=bin_width, bins=rows)
    return series


def parse_tool_output(tool: str, code_id: str, text: str, duration_s: float = 0.0) -> ToolRunRecord:
    """Reference line-oriented parser for raw tool output.

    Recognizes ``FINDING <tag>``, ``ERROR <msg>``, ``FAIL timeout|oom|
    program_issue`` and ``MESSAGE <text>``; any other nonempty line is kept
    as a message.
    """
    findings: list[str] = []
    errors: list[str] = []
    messages: list[str] = []
    fails = {"timeout": False, "oom": False, "program_issue": False}
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        head, _, rest = line.partition(" ")
        rest = rest.strip()
        if head == "FINDING" and rest:
            findings.append(rest)
        elif head == "ERROR" and rest:
            errors.append(rest)
        elif head == "FAIL" and rest in fails:
            fails[rest] = True
        elif head == "MESSAGE" and rest:
            messages.append(rest)
        else:
            messages.append(line)
    return ToolRunRecord(
        tool=tool,
        code_id=code_id,
        findings=tuple(findings),
        errors=tuple(errors),
        fails=FailFlags(**fails),
        messages=tuple(messages),
        duration_s=duration_s,
    )


Parser = Callable[[str, str, str], ToolRunRecord]

PARSERS: dict[str, Parser] = {"lines": parse_tool_output}


def register_parser(name: str, parser: Parser) -> None:
    """Register an output parser under a format name."""
    if name in PARSERS:
        raise ValueError(f"parser {name!r} already registered")
    PARSERS[name] = parser
