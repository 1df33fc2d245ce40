"""Hex input parsing shared by the CLI commands."""

from __future__ import annotations

_HEX_DIGITS = frozenset("0123456789abcdefABCDEF")


class HexInputError(ValueError):
    """Raised for hex input that cannot be decoded into bytes."""


def parse_hex(text: str) -> bytes:
    """Decode a hex string into bytes.

    Whitespace is ignored and a single leading ``0x`` is accepted.  Errors
    name the offset of the offending digit, counted within the cleaned
    string (after whitespace and prefix removal).
    """
    s = "".join(text.split())
    if s.startswith(("0x", "0X")):
        s = s[2:]
    for i, ch in enumerate(s):
        if ch not in _HEX_DIGITS:
            raise HexInputError(f"invalid hex digit {ch!r} at offset {i}")
    if len(s) % 2:
        raise HexInputError(f"odd-length hex input ({len(s)} digits); dangling digit at offset {len(s) - 1}")
    return bytes.fromhex(s)
