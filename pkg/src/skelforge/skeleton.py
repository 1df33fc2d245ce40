"""Canonical skeletons: the equivalence key for grouping bytecodes.

The skeleton drops the parts of a code that vary without changing behavior
in kind: metadata sections, PUSH operand bytes, constructor arguments (for
deployment code), and trailing zero bytes.  The canonical byte sequence is
not executable EVM code (PUSH opcodes lose their operands); it exists only
as a grouping key, digested with SHA-256.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from . import evm, metadata


@dataclass(frozen=True)
class RemovedCounts:
    """Byte counts dropped at each canonicalization step."""

    metadata_bytes: int = 0
    push_operand_bytes: int = 0
    trailing_zero_bytes: int = 0
    constructor_arg_bytes: int = 0

    def total(self) -> int:
        return (
            self.metadata_bytes
            + self.push_operand_bytes
            + self.trailing_zero_bytes
            + self.constructor_arg_bytes
        )


@dataclass(frozen=True)
class Skeleton:
    canonical_bytes: bytes
    digest: str
    removed: RemovedCounts


def strip_push_operands(code: bytes, table: evm.OpcodeTable | None = None) -> bytes:
    """Delete PUSH operand bytes, keeping each opcode byte."""
    dis = evm.disassemble(code, table=table)
    return bytes(ins.opcode.byte_value for ins in dis.instructions)


def strip_trailing_zeros(code: bytes) -> bytes:
    return code.rstrip(b"\x00")


def skeletonize(code: bytes, kind: str = "runtime") -> Skeleton:
    """Reduce ``code`` to its skeleton.

    Pipeline order: metadata removal (plus constructor-argument removal for
    deployment code), PUSH operand deletion, trailing-zero stripping.
    Incomplete pushes lose whatever operand bytes they carry.
    """
    if kind not in ("runtime", "deployment"):
        raise ValueError(f"unknown code kind {kind!r}")
    sections = metadata.find_metadata(code)
    body, ctor_bytes = code, 0
    if kind == "deployment":
        body, ctor_bytes = metadata.split_constructor_args(code, sections)
    no_meta = metadata.remove_sections(body, sections)
    no_push = strip_push_operands(no_meta)
    canonical = strip_trailing_zeros(no_push)
    removed = RemovedCounts(
        metadata_bytes=len(body) - len(no_meta),
        push_operand_bytes=len(no_meta) - len(no_push),
        trailing_zero_bytes=len(no_push) - len(canonical),
        constructor_arg_bytes=ctor_bytes,
    )
    return Skeleton(
        canonical_bytes=canonical,
        digest=hashlib.sha256(canonical).hexdigest(),
        removed=removed,
    )


def skeleton_digest(code: bytes, kind: str = "runtime") -> str:
    """Hex digest of the skeleton of ``code``."""
    return skeletonize(code, kind).digest
