"""Locate, strip, and interrogate Solidity metadata sections in bytecode.

The Solidity compiler terminates each emitted code with a CBOR map (holding
a source hash and version information) followed by a 2-byte big-endian
length covering the map.  Nested deployments proliferate such sections, so
the scanner looks for them anywhere, not only at the very end.

Detection requires at least one source-hash key (bzzr0/bzzr1/ipfs); a solc
key alone does not qualify.  This keeps coincidental CBOR-decodable data,
such as the large data-only deployments seen in early chain history, from
being misread as metadata.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass

from . import cbor

log = logging.getLogger(__name__)

RECOGNIZED_KEYS = frozenset({"bzzr0", "bzzr1", "ipfs", "solc", "experimental"})
SOURCE_HASH_KEYS = frozenset({"bzzr0", "bzzr1", "ipfs"})

_SEMVER_RE = re.compile(r"^v?(\d+)\.(\d+)\.(\d+)")

# Recognized keys cap a valid map at 5 pairs, so only small definite-length
# map heads can start an acceptable payload.
_MAP_HEADS = frozenset(range(0xA1, 0xA6))


@dataclass(frozen=True)
class MetadataSection:
    """A located metadata section; offsets refer to the scanned input."""

    start: int
    end: int
    cbor_keys: tuple[str, ...]
    solc_version: tuple[int, int, int] | None
    raw: bytes

    @property
    def length(self) -> int:
        return self.end - self.start

    def payload(self) -> bytes:
        """The CBOR map bytes, without the trailing length field."""
        return self.raw[:-2]


@dataclass(frozen=True)
class StripResult:
    """Outcome of removing or zero-filling every detected section."""

    stripped: bytes
    sections: tuple[MetadataSection, ...]
    mode: str


def _version_from_map(mapping: dict) -> tuple[int, int, int] | None:
    value = mapping.get("solc")
    if value is None:
        return None
    if isinstance(value, bytes):
        if len(value) == 3:
            return (value[0], value[1], value[2])
        log.warning("malformed solc version value: %d bytes, expected 3", len(value))
        return None
    if isinstance(value, str):
        match = _SEMVER_RE.match(value)
        if match:
            return tuple(int(g) for g in match.groups())  # type: ignore[return-value]
        log.warning("unparseable solc version string %r", value)
        return None
    log.warning("unexpected solc version type %s", type(value).__name__)
    return None


def find_metadata(code: bytes) -> list[MetadataSection]:
    """Scan for metadata sections, rightmost candidates first.

    Every end position ``e`` is tried from the end of the input toward the
    front: the 16-bit length ``L`` at ``[e-2, e)`` must fit, and the bytes
    ``[e-2-L, e-2)`` must decode as exactly one CBOR map whose keys all
    belong to the recognized set and include a source-hash key.  Accepted
    sections never overlap; the result is sorted by ascending start.
    """
    accepted: list[MetadataSection] = []
    for end in range(len(code), 2, -1):
        length = int.from_bytes(code[end - 2 : end], "big")
        start = end - 2 - length
        if start < 0:
            continue
        if any(start < s.end and s.start < end for s in accepted):
            continue
        payload = code[start : end - 2]
        if not payload or payload[0] not in _MAP_HEADS:
            continue
        try:
            mapping = cbor.decode_map(payload)
        except cbor.CborError:
            continue
        keys = tuple(k for k in mapping if isinstance(k, str))
        if len(keys) != len(mapping) or not set(keys) <= RECOGNIZED_KEYS:
            continue
        if not set(keys) & SOURCE_HASH_KEYS:
            continue
        accepted.append(
            MetadataSection(
                start=start,
                end=end,
                cbor_keys=keys,
                solc_version=_version_from_map(mapping),
                raw=code[start:end],
            )
        )
    accepted.sort(key=lambda s: s.start)
    return accepted


def remove_sections(code: bytes, sections: list[MetadataSection]) -> bytes:
    """Concatenate the byte ranges between ``sections``."""
    out = bytearray()
    pos = 0
    for section in sorted(sections, key=lambda s: s.start):
        out += code[pos : section.start]
        pos = section.end
    out += code[pos:]
    return bytes(out)


def strip_metadata(code: bytes, mode: str = "remove") -> StripResult:
    """Remove or zero-fill every detected metadata section."""
    if mode not in ("remove", "zero_fill"):
        raise ValueError(f"unknown strip mode {mode!r}")
    sections = find_metadata(code)
    if mode == "remove":
        stripped = remove_sections(code, sections)
    else:
        buf = bytearray(code)
        for section in sections:
            buf[section.start : section.end] = bytes(section.length)
        stripped = bytes(buf)
    return StripResult(stripped=stripped, sections=tuple(sections), mode=mode)


def split_constructor_args(code: bytes, sections: list[MetadataSection]) -> tuple[bytes, int]:
    """Split trailing constructor arguments off a deployment code.

    The compiler places ABI-encoded constructor arguments after the last
    metadata section, so everything past the last accepted section is
    classified as arguments.  Without a detected section there is no anchor
    and nothing is split.
    """
    if not sections:
        return code, 0
    last_end = max(s.end for s in sections)
    return code[:last_end], len(code) - last_end


def extract_solc_version(section: MetadataSection) -> tuple[int, int, int] | None:
    """Compiler version from a section's ``solc`` entry, if present.

    3-byte values decode as (major, minor, patch); string values are parsed
    as semver.  Malformed values yield ``None`` plus a logged diagnostic.
    """
    try:
        mapping = cbor.decode_map(section.payload())
    except cbor.CborError:
        log.warning("section at %d..%d no longer decodes as CBOR", section.start, section.end)
        return None
    return _version_from_map(mapping)
