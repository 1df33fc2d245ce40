"""Toolkit for analyzing EVM runtime bytecode at corpus scale.

The package decodes bytecode into instruction streams, locates and strips
Solidity compiler metadata, reduces codes to their canonical skeletons,
clusters deployment corpora into code families, and computes agreement
analytics over normalized weakness-detection tool runs.
"""

__version__ = "0.1.0"

from .evm import Disassembly, Instruction, OpcodeSpec, OpcodeTable, disassemble, op_is_active, ops_present
from .metadata import MetadataSection, StripResult, extract_solc_version, find_metadata, strip_metadata
from .skeleton import Skeleton, skeleton_digest, skeletonize

__all__ = [
    "Disassembly",
    "Instruction",
    "MetadataSection",
    "OpcodeSpec",
    "OpcodeTable",
    "Skeleton",
    "StripResult",
    "disassemble",
    "extract_solc_version",
    "find_metadata",
    "op_is_active",
    "ops_present",
    "skeleton_digest",
    "skeletonize",
    "strip_metadata",
]
