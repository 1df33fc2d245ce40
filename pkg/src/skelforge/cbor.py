"""Strict decoder for the CBOR subset found in Solidity metadata trailers.

Definite lengths only; no tags, no floats, no indefinite items.  Anything
outside the subset raises :class:`CborError`, which callers treat as "not a
metadata candidate".  Leniency here would directly translate into false
metadata detections, so the decoder rejects rather than guesses.
"""

from __future__ import annotations

_MAX_DEPTH = 16


class CborError(ValueError):
    """Raised when bytes do not decode under the supported CBOR subset."""


def decode_map(payload: bytes) -> dict:
    """Decode ``payload`` as exactly one CBOR map consuming every byte."""
    item, pos = _decode_item(payload, 0, 0)
    if pos != len(payload):
        raise CborError(f"{len(payload) - pos} trailing bytes after first item")
    if not isinstance(item, dict):
        raise CborError("top-level item is not a map")
    return item


def _read_length(data: bytes, pos: int, info: int) -> tuple[int, int]:
    if info < 24:
        return info, pos
    if info > 27:
        raise CborError(f"unsupported additional info {info}")
    width = 1 << (info - 24)
    if pos + width > len(data):
        raise CborError("truncated length field")
    return int.from_bytes(data[pos : pos + width], "big"), pos + width


def _decode_item(data: bytes, pos: int, depth: int):
    if depth > _MAX_DEPTH:
        raise CborError("nesting too deep")
    if pos >= len(data):
        raise CborError("unexpected end of input")
    head = data[pos]
    major, info = head >> 5, head & 0x1F
    pos += 1

    if major == 0:
        return _read_length(data, pos, info)
    if major == 1:
        value, pos = _read_length(data, pos, info)
        return -1 - value, pos
    if major in (2, 3):
        length, pos = _read_length(data, pos, info)
        if pos + length > len(data):
            raise CborError("string extends past end of input")
        raw = data[pos : pos + length]
        if major == 2:
            return bytes(raw), pos + length
        try:
            return raw.decode("utf-8"), pos + length
        except UnicodeDecodeError as exc:
            raise CborError("invalid UTF-8 in text string") from exc
    if major == 4:
        count, pos = _read_length(data, pos, info)
        items = []
        for _ in range(count):
            item, pos = _decode_item(data, pos, depth + 1)
            items.append(item)
        return items, pos
    if major == 5:
        count, pos = _read_length(data, pos, info)
        mapping: dict = {}
        for _ in range(count):
            key, pos = _decode_item(data, pos, depth + 1)
            if not isinstance(key, (str, int, bytes)):
                raise CborError(f"unhashable map key of type {type(key).__name__}")
            if key in mapping:
                raise CborError(f"duplicate map key {key!r}")
            value, pos = _decode_item(data, pos, depth + 1)
            mapping[key] = value
        return mapping, pos
    if major == 7:
        if info == 20:
            return False, pos
        if info == 21:
            return True, pos
        if info == 22:
            return None, pos
        raise CborError(f"unsupported simple/float value {info}")
    raise CborError(f"unsupported major type {major}")
