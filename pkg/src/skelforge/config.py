"""Run configuration, merged from a JSON file and command-line flags."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path

ENV_VAR = "SKELFORGE_CONFIG"

DIGEST_ALGORITHM = "sha256"


@dataclass(frozen=True)
class Config:
    bin_width: int = 100_000
    horizon_block: int = 14_000_000
    digest_algorithm: str = DIGEST_ALGORITHM
    mapping_table_path: str | None = None
    opcode_table_path: str | None = None
    strict: bool = False
    swc_from_observed: bool = False

    def validate(self) -> "Config":
        if self.bin_width <= 0:
            raise ValueError(f"bin_width must be positive, got {self.bin_width}")
        if self.horizon_block <= 0:
            raise ValueError(f"horizon_block must be positive, got {self.horizon_block}")
        if self.digest_algorithm != DIGEST_ALGORITHM:
            # The digest identifies codes across corpus files; it is not a knob.
            raise ValueError(f"digest_algorithm is fixed to {DIGEST_ALGORITHM}")
        return self


def from_file(path: str | Path) -> Config:
    data = json.loads(Path(path).read_text())
    known = {f.name for f in fields(Config)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return Config(**data).validate()


def from_env(environ: dict[str, str] | None = None) -> Config:
    """Config from the file named by ``SKELFORGE_CONFIG``, else defaults."""
    environ = os.environ if environ is None else environ
    path = environ.get(ENV_VAR)
    if path:
        return from_file(path)
    return Config()


def with_overrides(cfg: Config, **overrides) -> Config:
    """Apply non-``None`` overrides (CLI flags beat the config file)."""
    effective = {k: v for k, v in overrides.items() if v is not None}
    return replace(cfg, **effective).validate()
