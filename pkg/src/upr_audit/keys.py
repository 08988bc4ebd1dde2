from __future__ import annotations

from dataclasses import dataclass

# Function slot for file-scope variables. Not a valid C identifier, so it cannot
# collide with a real function name.
GLOBAL = "<global>"


@dataclass(frozen=True, order=True)
class VariableKey:
    """A variable as seen by the analysis: owning function (or GLOBAL) plus name.

    Field and array accesses are collapsed to the base identifier; a write
    through ``*p`` is tracked under the pseudo-name ``*p``.
    """

    function: str
    name: str

    @property
    def is_global(self) -> bool:
        return self.function == GLOBAL

    def __str__(self) -> str:
        return f"{self.function}:{self.name}"

    def to_json(self) -> dict:
        return {"function": self.function, "name": self.name}

    @classmethod
    def from_json(cls, data: dict) -> "VariableKey":
        return cls(data["function"], data["name"])

    @classmethod
    def parse(cls, text: str) -> "VariableKey":
        """Parse ``function:name``; ``GLOBAL:x`` and ``:x`` both mean a global."""
        function, sep, name = text.rpartition(":")
        if not sep or not name:
            raise ValueError(f"expected function:name, got {text!r}")
        if function in ("", "GLOBAL", GLOBAL):
            function = GLOBAL
        return cls(function, name)
