"""Linear EVM bytecode disassembly over a versioned opcode table.

Decoding is total: every byte sequence disassembles.  Bytes without a table
entry become INVALID instructions of size one, and PUSH operand underruns
are reported as diagnostics rather than errors.  Presence checks are an
overapproximation by design, since data embedded in the code may be decoded
as operations.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from functools import lru_cache
from importlib.resources import files
from typing import Iterable, Iterator

INVALID = "INVALID"

INCOMPLETE_PUSH = "incomplete_push"
INVALID_OPCODE = "invalid_opcode"

_PUSH1, _PUSH32 = 0x60, 0x7F


@dataclass(frozen=True)
class OpcodeSpec:
    """One row of the opcode table."""

    byte_value: int
    mnemonic: str
    operand_width: int
    introduced_at_block: int | None = None


class OpcodeTable:
    """Validated opcode set with byte-value and mnemonic lookups."""

    def __init__(self, specs: Iterable[OpcodeSpec]):
        self.by_byte: dict[int, OpcodeSpec] = {}
        self.by_mnemonic: dict[str, OpcodeSpec] = {}
        for spec in specs:
            if not 0 <= spec.byte_value <= 0xFF:
                raise ValueError(f"opcode byte out of range: {spec.byte_value:#x}")
            if not 0 <= spec.operand_width <= 32:
                raise ValueError(f"{spec.mnemonic}: operand width {spec.operand_width} out of range")
            is_push = _PUSH1 <= spec.byte_value <= _PUSH32
            if (spec.operand_width > 0) != is_push:
                raise ValueError(f"{spec.mnemonic}: only PUSH1..PUSH32 carry operand bytes")
            if is_push and spec.operand_width != spec.byte_value - _PUSH1 + 1:
                raise ValueError(f"{spec.mnemonic}: operand width inconsistent with PUSH index")
            if spec.byte_value in self.by_byte:
                raise ValueError(f"duplicate opcode byte {spec.byte_value:#04x}")
            if spec.mnemonic in self.by_mnemonic:
                raise ValueError(f"duplicate mnemonic {spec.mnemonic}")
            self.by_byte[spec.byte_value] = spec
            self.by_mnemonic[spec.mnemonic] = spec

    def __contains__(self, byte_value: int) -> bool:
        return byte_value in self.by_byte

    def __iter__(self) -> Iterator[OpcodeSpec]:
        return iter(self.by_byte.values())

    def fork_gated(self) -> list[OpcodeSpec]:
        """Opcodes activated after genesis, ordered by (block, mnemonic)."""
        gated = [s for s in self if s.introduced_at_block is not None]
        return sorted(gated, key=lambda s: (s.introduced_at_block, s.mnemonic))

    @classmethod
    def from_csv(cls, path) -> "OpcodeTable":
        with open(path, newline="") as fh:
            return cls._from_reader(csv.DictReader(fh))

    @classmethod
    def _from_reader(cls, reader: csv.DictReader) -> "OpcodeTable":
        specs = []
        for row in reader:
            block = (row.get("introduced_at_block") or "").strip()
            specs.append(
                OpcodeSpec(
                    byte_value=int(row["byte_value"], 16),
                    mnemonic=row["mnemonic"].strip(),
                    operand_width=int(row["operand_width"]),
                    introduced_at_block=int(block) if block else None,
                )
            )
        return cls(specs)


@lru_cache(maxsize=1)
def default_table() -> OpcodeTable:
    """The opcode table bundled with the package."""
    text = files("skelforge").joinpath("data/opcodes.csv").read_text()
    return OpcodeTable._from_reader(csv.DictReader(io.StringIO(text)))


@lru_cache(maxsize=256)
def _invalid_spec(byte_value: int) -> OpcodeSpec:
    return OpcodeSpec(byte_value=byte_value, mnemonic=INVALID, operand_width=0)


@dataclass(frozen=True)
class Instruction:
    """A decoded instruction; operands may be short only at stream end."""

    offset: int
    opcode: OpcodeSpec
    operand: bytes = b""
    incomplete: bool = False

    @property
    def mnemonic(self) -> str:
        return self.opcode.mnemonic

    @property
    def is_invalid(self) -> bool:
        return self.opcode.mnemonic == INVALID

    @property
    def size(self) -> int:
        return 1 + len(self.operand)


@dataclass(frozen=True)
class Disassembly:
    """Instruction stream plus diagnostics for one scanned byte range."""

    instructions: tuple[Instruction, ...]
    scanned_length: int
    diagnostics: tuple[tuple[int, str], ...]

    def reserialize(self) -> bytes:
        """Reassemble the scanned bytes from the instruction stream."""
        out = bytearray()
        for ins in self.instructions:
            out.append(ins.opcode.byte_value)
            out += ins.operand
        return bytes(out)

    def mnemonics(self) -> set[str]:
        return {ins.mnemonic for ins in self.instructions if not ins.is_invalid}


def disassemble(
    code: bytes,
    mode: str = "full",
    *,
    metadata_starts: Iterable[int] = (),
    table: OpcodeTable | None = None,
) -> Disassembly:
    """Decode ``code`` linearly from offset 0.

    ``full`` mode scans the whole input.  ``first_block`` mode stops at the
    earliest metadata boundary given in ``metadata_starts`` (the caller
    computes boundaries; this module stays metadata-agnostic).
    """
    if mode not in ("full", "first_block"):
        raise ValueError(f"unknown disassembly mode {mode!r}")
    table = table or default_table()
    limit = len(code)
    if mode == "first_block":
        limit = min(metadata_starts, default=len(code))
        limit = max(0, min(limit, len(code)))

    instructions: list[Instruction] = []
    diagnostics: list[tuple[int, str]] = []
    offset = 0
    while offset < limit:
        byte = code[offset]
        spec = table.by_byte.get(byte)
        if spec is None:
            spec = _invalid_spec(byte)
            diagnostics.append((offset, INVALID_OPCODE))
        operand = code[offset + 1 : min(offset + 1 + spec.operand_width, limit)]
        incomplete = len(operand) < spec.operand_width
        if incomplete:
            diagnostics.append((offset, INCOMPLETE_PUSH))
        instructions.append(Instruction(offset, spec, bytes(operand), incomplete))
        offset += 1 + len(operand)
    return Disassembly(tuple(instructions), limit, tuple(diagnostics))


def ops_present(code: bytes, table: OpcodeTable | None = None) -> set[str]:
    """Mnemonics decoded anywhere in a full scan (an overapproximation)."""
    return disassemble(code, table=table).mnemonics()


def op_is_active(mnemonic: str, block: int, table: OpcodeTable | None = None) -> bool:
    """Whether the operation exists on-chain at ``block``.

    Raises ``KeyError`` for mnemonics absent from the opcode table.
    """
    table = table or default_table()
    spec = table.by_mnemonic[mnemonic]
    return spec.introduced_at_block is None or spec.introduced_at_block <= block


def format_instruction(ins: Instruction) -> str:
    """Render one listing line: ``<offset-hex>: <MNEMONIC> [<operand-hex>] [INCOMPLETE]``."""
    parts = [f"{ins.offset:04x}: {ins.mnemonic}"]
    if ins.operand:
        parts.append(ins.operand.hex())
    if ins.incomplete:
        parts.append("INCOMPLETE")
    return " ".join(parts)
