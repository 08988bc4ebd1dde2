from __future__ import annotations

import bisect
import re
from dataclasses import dataclass, field
from pathlib import Path

_DIRECTIVE_START = re.compile(rb"^[ \t]*#")


@dataclass(frozen=True)
class SourceUnit:
    """One C source file. ``line_index`` holds the byte offset of every line start."""

    path: str
    text: str
    line_index: tuple[int, ...] = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        if not self.line_index:
            object.__setattr__(self, "line_index", _line_starts(self.data))

    @classmethod
    def from_path(cls, path: str | Path) -> "SourceUnit":
        raw = Path(path).read_bytes()
        return cls(str(path), raw.decode("utf-8"))

    @classmethod
    def from_text(cls, text: str, path: str = "<memory>") -> "SourceUnit":
        return cls(path, text)

    @property
    def data(self) -> bytes:
        return self.text.encode("utf-8")

    def line_of(self, offset: int) -> int:
        """1-based line number of a byte offset."""
        return bisect.bisect_right(self.line_index, offset)

    def blanked(self) -> bytes:
        """Source bytes with preprocessor directives replaced by spaces.

        Newlines and byte offsets are preserved, so spans computed on the
        blanked text index straight into the original.
        """
        out = bytearray()
        continuing = False
        for line in self.data.splitlines(keepends=True):
            body = line.rstrip(b"\r\n")
            if continuing or _DIRECTIVE_START.match(body):
                continuing = body.endswith(b"\\")
                out += b" " * len(body) + line[len(body):]
            else:
                out += line
        return bytes(out)


def _line_starts(data: bytes) -> tuple[int, ...]:
    starts = [0]
    pos = data.find(b"\n")
    while pos != -1:
        starts.append(pos + 1)
        pos = data.find(b"\n", pos + 1)
    return tuple(starts)


def normalize_whitespace(text: str) -> str:
    return " ".join(text.split())
