"""Command-line front end: single-code inspection, corpus pipelines, analytics.

Exit codes: 0 on success, 2 on input errors (bad hex, malformed records in
strict mode, unknown tool or class ids).  All file outputs are deterministic
for identical inputs and configuration, independent of ``--jobs``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import shutil
import sys
from pathlib import Path

from . import config as config_mod
from . import corpus as corpus_mod
from . import evm, findings, metadata, overlap, skeleton
from .hexutil import HexInputError, parse_hex

log = logging.getLogger(__name__)


class InputError(ValueError):
    """Bad command-line input; reported and mapped to exit code 2."""


def _read_hex_input(source: str) -> bytes:
    if source == "-":
        return parse_hex(sys.stdin.read())
    try:
        text = Path(source).read_text()
    except OSError as exc:
        raise InputError(str(exc)) from exc
    return parse_hex(text)


def _fmt_pct(value: float | None) -> str:
    return "" if value is None else f"{value:.1f}"


def _load_config(args: argparse.Namespace) -> config_mod.Config:
    cfg = config_mod.from_env()
    return config_mod.with_overrides(
        cfg,
        bin_width=getattr(args, "bin_width", None),
        horizon_block=getattr(args, "horizon", None),
        mapping_table_path=getattr(args, "mapping_table", None),
        opcode_table_path=getattr(args, "opcode_table", None),
        strict=True if getattr(args, "strict", False) else None,
        swc_from_observed=True if getattr(args, "swc_from_observed", False) else None,
    )


def _opcode_table(cfg: config_mod.Config) -> evm.OpcodeTable:
    if cfg.opcode_table_path:
        return evm.OpcodeTable.from_csv(cfg.opcode_table_path)
    return evm.default_table()


class _OutputTracker:
    """Records produced paths so aborts leave no partial outputs behind."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.files: list[Path] = []
        self.dirs: list[Path] = []

    def file(self, name: str) -> Path:
        path = self.out_dir / name
        self.files.append(path)
        return path

    def dir(self, name: str) -> Path:
        path = self.out_dir / name
        self.dirs.append(path)
        return path

    def discard(self) -> None:
        for path in self.files:
            path.unlink(missing_ok=True)
        for path in self.dirs:
            shutil.rmtree(path, ignore_errors=True)


def _csv_writer(fh):
    return csv.writer(fh, lineterminator="\n")


def _write_families(path: Path, families) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for family in families:
            fh.write(
                json.dumps(
                    {
                        "skeleton_digest": family.skeleton_digest,
                        "representative": family.representative,
                        "members": sorted(family.member_code_ids),
                        "first_block": family.first_block,
                        "deployment_count": family.deployment_count,
                    },
                    sort_keys=True,
                    separators=(",", ":"),
                )
                + "\n"
            )


def _write_series_csv(path: Path, series_by_key, key_field: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = _csv_writer(fh)
        writer.writerow([key_field, "bin_index", "numerator", "denominator", "percentage"])
        for key in sorted(series_by_key, key=str.casefold):
            for row in series_by_key[key].bins:
                writer.writerow(
                    [key, row.bin_index, row.numerator, row.denominator, _fmt_pct(row.percentage)]
                )


def _write_compiler_csv(path: Path, timeline) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = _csv_writer(fh)
        writer.writerow(["bin_index", "families", "known", *timeline.labels])
        for row in timeline.rows:
            shares = row.shares if row.shares is not None else (None,) * len(timeline.labels)
            writer.writerow([row.bin_index, row.families, row.known, *(_fmt_pct(s) for s in shares)])


def _write_overlap_csv(path: Path, matrix: overlap.OverlapMatrix) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = _csv_writer(fh)
        writer.writerow(["tool", *matrix.tools])
        for t1 in matrix.tools:
            writer.writerow([t1, *(_fmt_pct(matrix.get(t1, t2)) for t2 in matrix.tools)])


def _write_agreement_csv(path: Path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = _csv_writer(fh)
        writer.writerow(["tool", "swc_class", "share_1", "share_2", "share_3", "share_4plus"])
        for row in sorted(rows, key=lambda r: (r.tool.casefold(), r.swc_class)):
            writer.writerow([row.tool, row.swc_class, *(_fmt_pct(s) for s in row.shares())])


def _write_flagged_csv(path: Path, matrix: findings.FlaggedMatrix, tools) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = _csv_writer(fh)
        writer.writerow(["tool", "swc_class", "code_id"])
        for tool in tools:
            for swc_class in sorted(matrix.swc[tool]):
                for code_id in sorted(matrix.flagged_set(tool, swc_class)):
                    writer.writerow([tool, swc_class, code_id])


def _write_overlap_timeline_csv(path: Path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = _csv_writer(fh)
        writer.writerow(
            ["bin_index", "numerator", "denominator", "percentage", "share_1", "share_2", "share_3", "share_4plus"]
        )
        for row in rows:
            writer.writerow(
                [
                    row.bin_index,
                    row.numerator,
                    row.denominator,
                    _fmt_pct(row.percentage),
                    *(_fmt_pct(s) for s in row.shares()),
                ]
            )


def _write_jaccard_csv(path: Path, per_bin, cumulative) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = _csv_writer(fh)
        writer.writerow(["variant", "bin_index", "numerator", "denominator", "percentage"])
        for variant, series in (("per_bin", per_bin), ("cumulative", cumulative)):
            for row in series.bins:
                writer.writerow(
                    [variant, row.bin_index, row.numerator, row.denominator, _fmt_pct(row.percentage)]
                )


def _cmd_disasm(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    code = _read_hex_input(args.input)
    table = _opcode_table(cfg)
    if args.first_block:
        starts = [s.start for s in metadata.find_metadata(code)]
        dis = evm.disassemble(code, "first_block", metadata_starts=starts, table=table)
    else:
        dis = evm.disassemble(code, table=table)
    for ins in dis.instructions:
        print(evm.format_instruction(ins))
    return 0


def _cmd_meta(args: argparse.Namespace) -> int:
    code = _read_hex_input(args.input)
    if args.mode:
        print(metadata.strip_metadata(code, args.mode).stripped.hex())
        return 0
    for section in metadata.find_metadata(code):
        print(
            json.dumps(
                {
                    "start": section.start,
                    "end": section.end,
                    "keys": list(section.cbor_keys),
                    "solc_version": list(section.solc_version) if section.solc_version else None,
                },
                sort_keys=True,
                separators=(",", ":"),
            )
        )
    return 0


def _cmd_skel(args: argparse.Namespace) -> int:
    code = _read_hex_input(args.input)
    sk = skeleton.skeletonize(code, args.kind)
    removed = {
        "metadata_bytes": sk.removed.metadata_bytes,
        "push_operand_bytes": sk.removed.push_operand_bytes,
        "trailing_zero_bytes": sk.removed.trailing_zero_bytes,
        "constructor_arg_bytes": sk.removed.constructor_arg_bytes,
    }
    print(f"{sk.digest} {json.dumps(removed, sort_keys=True, separators=(',', ':'))}")
    if args.emit_canonical:
        print(sk.canonical_bytes.hex())
    return 0


def _cmd_pipeline(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    tracker = _OutputTracker(out_dir)
    try:
        table = _opcode_table(cfg)
        corpus = corpus_mod.ingest(
            args.records,
            store_dir=tracker.dir("store"),
            strict=cfg.strict,
            horizon=cfg.horizon_block,
        )
        stages = corpus_mod.compute_stages(corpus, jobs=args.jobs)
        families = corpus_mod.cluster(corpus, stages=stages)
        stats = corpus_mod.dedup_stats(corpus, stages=stages)
        fork_ops = [spec.mnemonic for spec in table.fork_gated()]
        ops = corpus_mod.ops_timeline(
            corpus, fork_ops, bin_width=cfg.bin_width, families=families, table=table
        )
        compilers = corpus_mod.compiler_timeline(corpus, bin_width=cfg.bin_width, families=families)

        _write_families(tracker.file("families.jsonl"), families)
        with open(tracker.file("stats.json"), "w", encoding="utf-8") as fh:
            json.dump(stats.as_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        _write_series_csv(tracker.file("ops_timeline.csv"), ops, "mnemonic")
        _write_compiler_csv(tracker.file("compiler_timeline.csv"), compilers)

        if args.figures:
            from . import figures

            figures.save_series_lines(
                ops, str(tracker.file("ops_timeline.png")), title="operation presence per bin"
            )
            figures.save_compiler_stack(compilers, str(tracker.file("compiler_timeline.png")))
    except BaseException:
        tracker.discard()
        raise
    return 0


def _parse_swc_ids(text: str) -> list[int]:
    ids = []
    for token in text.split(","):
        token = token.strip().removeprefix("SWC-")
        if not token.isdigit():
            raise InputError(f"bad SWC class id {token!r}")
        ids.append(int(token))
    return ids


def _cmd_analytics(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    tracker = _OutputTracker(out_dir)
    try:
        corpus = corpus_mod.ingest(args.records, strict=cfg.strict, horizon=cfg.horizon_block)
        families = corpus_mod.cluster(corpus, jobs=args.jobs)
        first_blocks = {
            code_id: family.first_block for family in families for code_id in family.member_code_ids
        }
        table = findings.load_mapping(cfg.mapping_table_path)
        records = findings.load_run_records(args.runs, strict=cfg.strict)
        if not records:
            log.warning("runs file %s contains no records", args.runs)
        unknown = "error" if cfg.strict else "warn"
        matrix = findings.build_matrix(
            records, table, corpus=corpus, unknown=unknown, swc_from_observed=cfg.swc_from_observed
        )

        included = list(matrix.tools)
        if args.exclude:
            for raw in args.exclude.split(","):
                try:
                    name = matrix.resolve(raw.strip())
                except KeyError as exc:
                    raise InputError(f"unknown tool id {raw.strip()!r} in --exclude") from exc
                included.remove(name)

        covered = sorted(set().union(*(matrix.swc[t] for t in included)) if included else set())
        if args.swc:
            requested = _parse_swc_ids(args.swc)
            missing = [c for c in requested if c not in covered]
            if missing:
                raise InputError(
                    "SWC classes covered by no included tool: "
                    + ", ".join(str(c) for c in missing)
                )
            classes = sorted(requested)
        else:
            classes = covered

        om = overlap.overlap_matrix(matrix, included)
        breakdown_rows = []
        for swc_class in classes:
            breakdown_rows.extend(overlap.agreement_breakdown(matrix, swc_class, included))

        _write_overlap_csv(tracker.file("overlap_matrix.csv"), om)
        _write_agreement_csv(tracker.file("agreement.csv"), breakdown_rows)
        _write_flagged_csv(tracker.file("flagged_matrix.csv"), matrix, included)

        rate_series = {}
        for kind in ("flagged", "error", "failure"):
            series = findings.rate_timelines(
                records,
                corpus,
                kind,
                table,
                bin_width=cfg.bin_width,
                first_blocks=first_blocks,
                unknown=unknown,
            )
            series = {tool: s for tool, s in series.items() if tool in included}
            rate_series[kind] = series
            _write_series_csv(tracker.file(f"rates_{kind}.csv"), series, "tool")

        timeline_rows = {}
        for swc_class in classes:
            rows = overlap.overlap_timeline(
                matrix, corpus, swc_class, included, bin_width=cfg.bin_width, families=families
            )
            timeline_rows[swc_class] = rows
            _write_overlap_timeline_csv(tracker.file(f"swc{swc_class}_timeline.csv"), rows)

        if args.jaccard:
            pair = [p.strip() for p in args.jaccard.split(",")]
            if len(pair) != 2:
                raise InputError("--jaccard expects two tool ids separated by a comma")
            try:
                t1, t2 = (matrix.resolve(p) for p in pair)
            except KeyError as exc:
                raise InputError(f"unknown tool id in --jaccard: {exc}") from exc
            shared = sorted(matrix.swc[t1] & matrix.swc[t2])
            for swc_class in [c for c in shared if c in classes]:
                per_bin = overlap.jaccard_timeline(
                    matrix, corpus, t1, t2, swc_class,
                    bin_width=cfg.bin_width, families=families,
                )
                cumulative = overlap.jaccard_timeline(
                    matrix, corpus, t1, t2, swc_class,
                    bin_width=cfg.bin_width, families=families, cumulative=True,
                )
                name = f"jaccard_swc{swc_class}_{t1.casefold()}_{t2.casefold()}.csv"
                _write_jaccard_csv(tracker.file(name), per_bin, cumulative)

        if args.figures:
            from . import figures

            figures.save_overlap_heatmap(om, str(tracker.file("overlap_matrix.png")))
            if breakdown_rows:
                figures.save_agreement_bars(breakdown_rows, str(tracker.file("agreement.png")))
            for kind, series in rate_series.items():
                figures.save_series_lines(
                    series,
                    str(tracker.file(f"rates_{kind}.png")),
                    title=f"codes with {kind} results per bin",
                )
            for swc_class, rows in timeline_rows.items():
                figures.save_overlap_timeline(
                    rows, cfg.bin_width, swc_class, str(tracker.file(f"swc{swc_class}_timeline.png"))
                )
    except BaseException:
        tracker.discard()
        raise
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skelforge",
        description="EVM bytecode disassembly, skeleton clustering, and tool-agreement analytics",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, *names: str) -> None:
        if "opcode-table" in names:
            p.add_argument("--opcode-table", metavar="CSV", help="override the bundled opcode table")
        if "corpus" in names:
            p.add_argument("--bin-width", type=int, metavar="N", help="timeline bin width in blocks")
            p.add_argument("--horizon", type=int, metavar="N", help="maximum admissible block number")
            p.add_argument("--jobs", type=int, default=1, metavar="N", help="worker processes")
            p.add_argument("--strict", action="store_true", help="abort on malformed input lines")
            p.add_argument("--figures", action="store_true", help="render figures next to the CSV files")

    p_disasm = sub.add_parser("disasm", help="print the instruction listing of a bytecode")
    p_disasm.add_argument("input", help="hex file, or - for stdin")
    p_disasm.add_argument(
        "--first-block", action="store_true", help="stop at the earliest metadata section"
    )
    add_common(p_disasm, "opcode-table")
    p_disasm.set_defaults(handler=_cmd_disasm)

    p_meta = sub.add_parser("meta", help="locate metadata sections (JSON lines)")
    p_meta.add_argument("input", help="hex file, or - for stdin")
    p_meta.add_argument(
        "--mode",
        choices=("remove", "zero_fill"),
        help="print the stripped bytecode instead of the section list",
    )
    p_meta.set_defaults(handler=_cmd_meta)

    p_skel = sub.add_parser("skel", help="print skeleton digest and removal counts")
    p_skel.add_argument("input", help="hex file, or - for stdin")
    p_skel.add_argument("--kind", choices=("runtime", "deployment"), default="runtime")
    p_skel.add_argument(
        "--emit-canonical",
        action="store_true",
        help="also print canonical bytes (not executable EVM code; an equivalence key only)",
    )
    p_skel.set_defaults(handler=_cmd_skel)

    p_pipe = sub.add_parser("pipeline", help="ingest records, cluster families, emit timelines")
    p_pipe.add_argument("records", help="line-delimited JSON deployment records")
    p_pipe.add_argument("--out", required=True, metavar="DIR")
    add_common(p_pipe, "opcode-table", "corpus")
    p_pipe.set_defaults(handler=_cmd_pipeline)

    p_ana = sub.add_parser("analytics", help="overlap, agreement, and rate analytics")
    p_ana.add_argument("records", help="line-delimited JSON deployment records")
    p_ana.add_argument("runs", help="line-delimited JSON tool-run records")
    p_ana.add_argument("--out", required=True, metavar="DIR")
    p_ana.add_argument("--mapping-table", metavar="CSV", help="override the bundled SWC mapping")
    p_ana.add_argument("--exclude", metavar="TOOLS", help="comma-separated tool ids to drop")
    p_ana.add_argument("--swc", metavar="CLASSES", help="comma-separated SWC class filter")
    p_ana.add_argument(
        "--jaccard", metavar="T1,T2", help="emit per-bin and cumulative Jaccard series for a tool pair"
    )
    p_ana.add_argument(
        "--swc-from-observed",
        action="store_true",
        help="derive detectable classes from observed flags instead of the mapping table",
    )
    add_common(p_ana, "opcode-table", "corpus")
    p_ana.set_defaults(handler=_cmd_analytics)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.handler(args)
    except (HexInputError, InputError, corpus_mod.IngestError, findings.MappingTableError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
