"""Rate unique statements 0..10 through a pluggable provider, with caching."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Iterable

from upr_audit.rater.cache import Rating, RatingCache, RecordLog, read_records, stmt_hash
from upr_audit.rater.prompts import (
    FULL, NONE, PARTIAL, PROFILES, ParseError, PromptProfile, build_prompt,
    get_profile, parse_reply,
)
from upr_audit.rater.providers import (
    LLMProvider, MockProvider, Provider, ReplayProvider, TransportError,
    make_provider, mock_rating,
)

logger = logging.getLogger(__name__)

RETRIES = 3
MAX_FLAGGED_FRACTION = 0.10

RatingMap = dict[str, Rating]


class RatingFailure(RuntimeError):
    """Too many statements could not be rated."""

    def __init__(self, message: str, ratings: RatingMap):
        super().__init__(message)
        self.ratings = ratings


def rate_statement(provider: Provider, profile: PromptProfile, statement: str,
                   cache: RatingCache, transcript: RecordLog | None = None) -> Rating:
    cached = cache.get(statement, provider.name, profile.id)
    if cached is not None:
        return cached
    prompt = build_prompt(profile, statement)
    transport_error: TransportError | None = None
    parse_failures = 0
    reply = None
    rating = None
    for _ in range(RETRIES):
        try:
            reply = provider.query(prompt, statement, profile)
        except TransportError as exc:
            transport_error = exc
            continue
        if transcript is not None:
            rec = Rating(statement, 0, provider.name, profile.id).to_record()
            rec.update(prompt=prompt, reply=reply)
            try:
                rec["value"] = parse_reply(reply)
            except ParseError:
                rec["flagged"] = True
            transcript.append(rec)
        try:
            rating = Rating(statement, parse_reply(reply), provider.name, profile.id)
            break
        except ParseError:
            parse_failures += 1
    if rating is None:
        if parse_failures == 0:
            raise transport_error
        logger.warning("unratable statement %r after %d attempts (last reply %r); using 0",
                       statement, RETRIES, reply)
        rating = Rating(statement, 0, provider.name, profile.id, flagged=True)
    cache.put(rating)
    return rating


def rate_all(provider: Provider, profile: PromptProfile, statements: Iterable[str],
             cache: RatingCache, max_inflight: int = 1,
             transcript: RecordLog | None = None) -> RatingMap:
    """Rate every statement independently, at most ``max_inflight`` at a time."""
    if max_inflight < 1:
        raise ValueError("max_inflight must be >= 1")
    entries = sorted(set(statements))
    if not entries:
        return {}
    with ThreadPoolExecutor(max_workers=max_inflight) as pool:
        results = list(pool.map(
            lambda s: rate_statement(provider, profile, s, cache, transcript), entries))
    ratings = {r.statement: r for r in results}
    flagged = sum(r.flagged for r in results)
    if flagged > MAX_FLAGGED_FRACTION * len(entries):
        raise RatingFailure(f"{flagged} of {len(entries)} statements could not be rated", ratings)
    return ratings


def load_ratings(path: str | Path) -> RatingMap:
    return {r.statement: r for r in map(Rating.from_record, read_records(path))}


def write_ratings(ratings: RatingMap, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for stmt in sorted(ratings):
            rec = ratings[stmt].to_record(timestamp=0)
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


__all__ = [
    "FULL", "NONE", "PARTIAL", "PROFILES", "LLMProvider", "MockProvider", "ParseError",
    "PromptProfile", "Provider", "Rating", "RatingCache", "RatingFailure", "RatingMap",
    "RecordLog", "ReplayProvider", "TransportError", "build_prompt", "get_profile",
    "load_ratings", "make_provider", "mock_rating", "parse_reply", "rate_all",
    "rate_statement", "stmt_hash", "write_ratings",
]
