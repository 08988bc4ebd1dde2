from __future__ import annotations

import re
from dataclasses import dataclass

INSTRUCTION = (
    "I want you to act as a security critical code statement identifier. "
    "I will type a code statement and you will reply with a criticalness rating "
    "from 0 to 10 of the code statement. 0 is the least level of criticalness. "
    "Only reply with the criticalness rating and do not write explanation."
)
GOALS_INTRO = (
    "Regarding what is a critical code statement, when it is tampered, it may result in:"
)

MALICIOUS_GOALS = (
    "One can bypass authentication and/or authorization",
    "One can achieve behaviors that are being banned",
    "One can gain elevated privileges (uid changes)",
    "One can access files/data that are not accessible (chown related)",
    "One can steal secrets (keys, passwd, etc.)",
)


@dataclass(frozen=True)
class PromptProfile:
    id: str
    goals: tuple[str, ...]


FULL = PromptProfile("full", MALICIOUS_GOALS)
PARTIAL = PromptProfile("partial", MALICIOUS_GOALS[3:5])
NONE = PromptProfile("none", ())
PROFILES = {p.id: p for p in (FULL, PARTIAL, NONE)}


def get_profile(name: str) -> PromptProfile:
    try:
        return PROFILES[name]
    except KeyError:
        raise ValueError(f"unknown prompt profile {name!r}; choose from {sorted(PROFILES)}") from None


def initial_prompt(profile: PromptProfile) -> str:
    if not profile.goals:
        return INSTRUCTION
    items = "\n".join(f"{i}. {g}" for i, g in enumerate(profile.goals, 1))
    return f"{INSTRUCTION} {GOALS_INTRO}\n{items}"


def build_prompt(profile: PromptProfile, statement: str) -> str:
    """The instruction block for ``profile`` followed by exactly one statement."""
    return f"{initial_prompt(profile)}\n\n{statement}"


def statement_of(prompt: str) -> str:
    """Inverse of :func:`build_prompt` for the statement part."""
    return prompt.rsplit("\n\n", 1)[-1]


class ParseError(ValueError):
    pass


_INT = re.compile(r"-?\d+")


def parse_reply(text: str) -> int:
    """First integer token of a model reply, which must lie in 0..10."""
    m = _INT.search(text or "")
    if m is None:
        raise ParseError(f"no rating in reply {text!r}")
    value = int(m.group())
    if not 0 <= value <= 10:
        raise ParseError(f"rating {value} outside 0..10 in reply {text!r}")
    return value
