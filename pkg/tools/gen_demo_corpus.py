#!/usr/bin/env python3
"""Regenerate the bundled demo corpus (records.jsonl + runs.jsonl).

The demo is synthetic but shaped like the real thing: code families whose
members differ in PUSH constants and metadata hashes, era-correlated
opcodes and compiler versions, declining flag rates over time, and one
tool pair whose flags mostly subsume another's.  Output is deterministic
for a fixed seed; rerun only when the shape of the demo should change.
"""

from __future__ import annotations

import hashlib
import json
import random
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from skelforge import evm  # noqa: E402

SEED = 20220113
OUT_DIR = Path(__file__).resolve().parents[1] / "src" / "skelforge" / "data" / "demo"

GENESIS_OPS = [
    "DUP1", "SWAP1", "POP", "ADD", "MUL", "SUB", "MLOAD", "MSTORE", "SLOAD",
    "SSTORE", "JUMP", "JUMPI", "JUMPDEST", "CALLVALUE", "CALLDATALOAD",
    "CALLDATASIZE", "ISZERO", "EQ", "LT", "GT", "AND", "OR", "NOT", "SHA3",
    "CALLER", "TIMESTAMP", "NUMBER", "GAS", "CALL", "RETURN", "SELFDESTRUCT",
]

# (first block of use, mnemonics that start appearing there)
ERA_OPS = [
    (1_200_000, ["DELEGATECALL"]),
    (3_000_000, ["REVERT"]),
    (4_400_000, ["RETURNDATASIZE", "RETURNDATACOPY"]),
    (5_000_000, ["STATICCALL"]),
    (7_300_000, ["SHR", "SHL"]),
    (7_600_000, ["EXTCODEHASH", "CREATE2", "SAR"]),
    (9_200_000, ["SELFBALANCE", "CHAINID"]),
    (13_000_000, ["BASEFEE"]),
]

# (first block, candidate solc versions)
ERA_VERSIONS = [
    (0, [None, (0, 4, 4), (0, 4, 8)]),
    (3_000_000, [(0, 4, 11), (0, 4, 16), None]),
    (4_400_000, [(0, 4, 22), (0, 4, 24), (0, 4, 25)]),
    (5_500_000, [(0, 5, 0), (0, 5, 2), None]),
    (7_300_000, [(0, 5, 5), (0, 5, 11), (0, 5, 13)]),
    (9_200_000, [(0, 5, 17), (0, 6, 2), (0, 6, 12)]),
    (11_000_000, [(0, 8, 0), (0, 8, 4), None]),
    (13_000_000, [(0, 8, 7), (0, 8, 9), (0, 8, 11)]),
]

TOOLS = ["Conkas", "eThor", "Maian", "Mythril", "Osiris", "Oyente", "Vandal"]


def encode_cbor_text(s: str) -> bytes:
    data = s.encode()
    assert len(data) < 24
    return bytes([0x60 | len(data)]) + data


def encode_cbor_bytes(b: bytes) -> bytes:
    if len(b) < 24:
        return bytes([0x40 | len(b)]) + b
    assert len(b) < 256
    return bytes([0x58, len(b)]) + b


def make_trailer(rng: random.Random, version: tuple[int, int, int] | None) -> bytes:
    entries = [(b"\x65" + b"bzzr0", encode_cbor_bytes(rng.randbytes(32)))]
    if version is not None:
        entries.append((encode_cbor_text("solc"), encode_cbor_bytes(bytes(version))))
    payload = bytes([0xA0 | len(entries)]) + b"".join(k + v for k, v in entries)
    return payload + len(payload).to_bytes(2, "big")


def make_body(rng: random.Random, block: int, table: evm.OpcodeTable) -> bytes:
    ops = list(GENESIS_OPS)
    for first, extra in ERA_OPS:
        if block >= first:
            ops.extend(extra)
    body = bytearray()
    for _ in range(rng.randint(12, 40)):
        if rng.random() < 0.4:
            width = rng.choice((1, 1, 2, 4, 20, 32))
            body.append(0x60 + width - 1)
            body += rng.randbytes(width)
        else:
            body.append(table.by_mnemonic[rng.choice(ops)].byte_value)
    # era-specific ops appear at least once so presence timelines move
    for first, extra in ERA_OPS:
        if block >= first and rng.random() < 0.8:
            body.append(table.by_mnemonic[rng.choice(extra)].byte_value)
    return bytes(body)


def version_for(rng: random.Random, block: int):
    candidates = [vs for first, vs in ERA_VERSIONS if block >= first][-1]
    return rng.choice(candidates)


def pick_findings(
    rng: random.Random,
    tool: str,
    block: int,
    reentrant: bool,
    arithmetic: bool,
    osiris: list[str] | None = None,
) -> list[str]:
    """Declining rates over time; Osiris mostly subsumes Oyente."""
    late = block / 14_000_000
    out = []
    if tool == "Conkas":
        if arithmetic and rng.random() < 0.8 - 0.5 * late:
            out.append(rng.choice(["Integer_Overflow", "Integer_Underflow"]))
        if reentrant and rng.random() < 0.6:
            out.append("Reentrancy")
        if rng.random() < 0.25:
            out.append("Time_Manipulation")
    elif tool == "eThor":
        if reentrant and rng.random() < 0.75:
            out.append("insecure")
        elif rng.random() < 0.6:
            out.append("secure")
    elif tool == "Maian":
        if block < 7_000_000 and rng.random() < 0.25:
            out.append(rng.choice(["Destructible", "Ether_leak"]))
        if rng.random() < 0.1 + 0.5 * late:
            out.append("Ether_lock")
        if rng.random() < 0.2:
            out.append("accepts_Ether")
    elif tool == "Mythril":
        if arithmetic and rng.random() < 0.9 - 0.55 * late:
            out.append("Integer_Arithmetic_Bugs_SWC_101")
        if reentrant and rng.random() < 0.7:
            out.append("External_Call_To_User_Supplied_Address_SWC_107")
        if rng.random() < 0.35 - 0.2 * late:
            out.append("Unchecked_return_value_from_external_call_SWC_104")
        if rng.random() < 0.2:
            out.append("Dependence_on_predictable_environment_variable_SWC_116")
    elif tool == "Osiris":
        if block < 9_000_000:
            if arithmetic and rng.random() < 0.75:
                out.append(rng.choice(["Overflow_bugs", "Underflow_bugs"]))
                out.append("arithmetic_bug")
            if reentrant and rng.random() < 0.85:
                out.append("Reentrancy_bug")
            if rng.random() < 0.3:
                out.append("Timedependency_bug")
        if rng.random() < 0.3:
            out.append("Callstack_bug")
    elif tool == "Oyente":
        osiris = osiris or []
        if block < 9_000_000:
            # mostly a subset of what Osiris flags
            if "Reentrancy_bug" in osiris and rng.random() < 0.6:
                out.append("Re_Entrancy_Vulnerability")
            elif reentrant and rng.random() < 0.06:
                out.append("Re_Entrancy_Vulnerability")
            if "Timedependency_bug" in osiris and rng.random() < 0.5:
                out.append("Timestamp_Dependency")
            elif rng.random() < 0.04:
                out.append("Timestamp_Dependency")
        if rng.random() < 0.25:
            out.append("Callstack_Depth_Attack_Vulnerability")
    elif tool == "Vandal":
        if rng.random() < 0.9:
            out.append("UncheckedCall")
        if rng.random() < 0.8:
            out.append("ReentrantCall")
            out.append("checked_call_state_update")
        if rng.random() < 0.15:
            out.append(rng.choice(["Destroyable", "OriginUsed", "UnsecuredValueSend"]))
    return out


def main() -> None:
    rng = random.Random(SEED)
    table = evm.default_table()
    OUT_DIR.mkdir(parents=True, exist_ok=True)

    records = []
    codes = {}  # code_id -> (code, first_block)
    family_blocks = sorted(rng.randrange(0, 13_999_000) for _ in range(48))
    reps = []

    for block in family_blocks:
        body = make_body(rng, block, table)
        version = version_for(rng, block)
        n_members = rng.choice((1, 1, 1, 2, 2, 3))
        member_ids = []
        for member in range(n_members):
            code = body + make_trailer(rng, version)
            # members differ in metadata hash (fresh trailer each time) and,
            # for some, in PUSH constants too
            if member > 0 and rng.random() < 0.6:
                code = bytearray(code)
                dis = evm.disassemble(bytes(code))
                operand_offsets = [
                    ins.offset + 1 + i
                    for ins in dis.instructions
                    if ins.operand and not ins.incomplete
                    for i in range(len(ins.operand))
                ]
                for off in rng.sample(operand_offsets, k=min(4, len(operand_offsets))):
                    code[off] = rng.randrange(256)
                code = bytes(code)
            code_id = hashlib.sha256(code).hexdigest()
            member_block = min(block + member * rng.randrange(0, 900_000), 13_999_999)
            deploys = rng.choice((1, 1, 1, 2, 5))
            for d in range(deploys):
                records.append(
                    {
                        "code_id": code_id,
                        "block": min(member_block + d * rng.randrange(0, 200_000), 13_999_999),
                        "address": "0x" + rng.randbytes(20).hex(),
                        "has_source": rng.random() < 0.45,
                        "code_ref": code.hex(),
                    }
                )
            codes[code_id] = (code, member_block)
            member_ids.append(code_id)
        reps.append((member_ids[0], block))

    # data-only deployments around the block-2.3M attack era: no metadata,
    # some padded with trailing zeros, so they merge only at skeleton stage
    data_blob = rng.randbytes(120)
    for padding in (0, 0, 64, 200):
        code = data_blob + bytes(padding)
        code_id = hashlib.sha256(code).hexdigest()
        block = 2_300_000 + rng.randrange(0, 90_000)
        records.append(
            {
                "code_id": code_id,
                "block": block,
                "address": "0x" + rng.randbytes(20).hex(),
                "has_source": False,
                "code_ref": code.hex(),
            }
        )
        codes[code_id] = (code, block)

    runs = []
    for code_id, block in reps:
        late = block / 14_000_000
        reentrant = rng.random() < 0.5
        arithmetic = rng.random() < 0.6
        osiris_finds: list[str] = []
        for tool in TOOLS:
            finds = pick_findings(rng, tool, block, reentrant, arithmetic, osiris=osiris_finds)
            if tool == "Osiris":
                osiris_finds = finds
            errors = []
            fails = {"timeout": False, "oom": False, "program_issue": False}
            if tool in ("Osiris", "Maian") and rng.random() < 0.1 + 0.6 * late:
                errors.append("unknown instruction")
            if tool == "Conkas" and rng.random() < 0.1 + 0.5 * late:
                fails["program_issue"] = True
            if tool == "eThor" and rng.random() < 0.15 + 0.25 * late:
                fails["timeout"] = True
            if tool == "Mythril" and rng.random() < 0.03:
                fails["oom"] = True
            messages = ["analysis complete"] if not errors and not any(fails.values()) else []
            runs.append(
                {
                    "tool": tool,
                    "code_id": code_id,
                    "findings": finds,
                    "errors": errors,
                    "fails": fails,
                    "messages": messages,
                    "duration_s": round(rng.uniform(1.0, 1800.0), 1),
                }
            )
            # occasional rerun with more memory; results union
            if fails["timeout"] and rng.random() < 0.4:
                runs.append(
                    {
                        "tool": tool,
                        "code_id": code_id,
                        "findings": finds[:1],
                        "errors": [],
                        "fails": {"timeout": False, "oom": False, "program_issue": False},
                        "messages": ["rerun with 32g"],
                        "duration_s": round(rng.uniform(1.0, 1800.0), 1),
                    }
                )

    with open(OUT_DIR / "records.jsonl", "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n")
    with open(OUT_DIR / "runs.jsonl", "w", encoding="utf-8") as fh:
        for run in runs:
            fh.write(json.dumps(run, sort_keys=True, separators=(",", ":")) + "\n")
    print(f"{len(records)} deployment records, {len(codes)} distinct codes, {len(runs)} runs")


if __name__ == "__main__":
    main()
