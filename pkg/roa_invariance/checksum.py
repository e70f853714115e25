# roa_invariance/checksum.py
"""CRC32 digests of emitted artifacts, logged so repeated runs can be compared."""
import zlib
from pathlib import Path


def crc32_hex(data: bytes) -> str:
    return f"{zlib.crc32(data) & 0xFFFFFFFF:08x}"


def artifact_digest(text: str) -> str:
    return crc32_hex(text.encode("utf-8"))


def file_digest(path: str | Path) -> str:
    return crc32_hex(Path(path).read_bytes())
