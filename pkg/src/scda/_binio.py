"""Low-level helpers shared by the binary file formats (.scdat/.scdf/.scdi/.scdt).

All multi-byte integers are little-endian unsigned; float payloads are
little-endian IEEE-754 single precision.
"""

import struct

import numpy as np


class FormatError(ValueError):
    """Raised when a binary artifact file fails validation.

    ``code`` is a stable machine-readable identifier:
    bad-magic, bad-version, truncated, trailing-bytes, non-finite,
    bad-dtype, bad-tag.
    """

    def __init__(self, code, message, path=None):
        self.code = code
        self.path = path
        where = f" ({path})" if path else ""
        super().__init__(f"{code}: {message}{where}")


class Reader:
    """Cursor over an in-memory file image with truncation checking."""

    def __init__(self, data: bytes, path=None):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(
                "truncated",
                f"needed {n} bytes at offset {self.pos}, file has {len(self.data)}",
                self.path,
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u8(self) -> int:
        return self.take(1)[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def magic(self, expected: bytes):
        got = self.take(4)
        if got != expected:
            raise FormatError(
                "bad-magic", f"expected {expected!r}, got {got!r}", self.path
            )

    def version(self, expected: int):
        got = self.u32()
        if got != expected:
            raise FormatError(
                "bad-version", f"expected version {expected}, got {got}", self.path
            )
        return got

    def string(self, nbytes: int) -> str:
        return self.take(nbytes).decode("utf-8")

    def f32_array(self, count: int) -> np.ndarray:
        raw = self.take(4 * count)
        return np.frombuffer(raw, dtype="<f4", count=count)

    def u32_array(self, count: int) -> np.ndarray:
        raw = self.take(4 * count)
        return np.frombuffer(raw, dtype="<u4", count=count)

    def done(self):
        if self.pos != len(self.data):
            raise FormatError(
                "trailing-bytes",
                f"{len(self.data) - self.pos} unexpected bytes after payload",
                self.path,
            )


def atomic_write_bytes(path, data: bytes):
    """Write via temp-and-rename so readers never observe a partial file."""
    import os

    tmp = f"{path}.tmp-{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def u8(value: int) -> bytes:
    return struct.pack("<B", value)


def u32(value: int) -> bytes:
    return struct.pack("<I", value)


def f32_bytes(values: np.ndarray) -> bytes:
    return np.ascontiguousarray(values, dtype="<f4").tobytes()


def u32_bytes(values) -> bytes:
    return np.ascontiguousarray(values, dtype="<u4").tobytes()
