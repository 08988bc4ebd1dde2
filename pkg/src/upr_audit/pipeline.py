"""End-to-end run: parse, build PDGs, slice, rate, score, rank, and write artifacts."""

from __future__ import annotations

import json
import logging
import re
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable

from upr_audit.cfront.lower import LoweringError, extract_variables, lower_to_statements
from upr_audit.cfront.parse import FileScope, FunctionAst, parse_unit
from upr_audit.cfront.source import SourceUnit
from upr_audit.keys import VariableKey
from upr_audit.pdg import FunctionAnalysis, FunctionPDG, build_pdg, pdg_from_json
from upr_audit.rater import (
    RatingCache, RatingMap, RecordLog, get_profile, load_ratings, make_provider, rate_all,
    write_ratings,
)
from upr_audit.rater.providers import Provider
from upr_audit.scorer import (
    DomainError, ScoredSubgraph, UPRReport, combine, rank, score_variable, subsumption,
)
from upr_audit.slicer import StatementSet, VariableSubgraph, collect_statements, extract_subgraph

logger = logging.getLogger(__name__)

PROVIDERS = ("llm", "mock", "replay")
DEFAULT_LAMBDA = 0.5
DEFAULT_THRESHOLD = 9.0


class ConfigError(ValueError):
    pass


class AnalysisError(RuntimeError):
    pass


@dataclass
class RunConfig:
    sources: list[str] = field(default_factory=list)
    provider: str = "mock"
    profile: str = "full"
    lam: float = DEFAULT_LAMBDA
    threshold: float = DEFAULT_THRESHOLD
    cache_path: str | None = None
    endpoint: dict = field(default_factory=dict)
    max_inflight: int = 1
    extra_sinks: list[str] = field(default_factory=list)
    transcript: str | None = None
    record: str | None = None
    latency: float = 0.0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"lambda must be in [0, 1], got {self.lam}")
        if not 0.0 <= self.threshold <= 10.0:
            raise ConfigError(f"threshold must be in [0, 10], got {self.threshold}")
        if self.max_inflight < 1:
            raise ConfigError(f"max_inflight must be >= 1, got {self.max_inflight}")
        if self.provider not in PROVIDERS:
            raise ConfigError(f"unknown provider {self.provider!r}")
        try:
            get_profile(self.profile)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.provider == "replay" and not self.transcript:
            raise ConfigError("the replay provider needs a transcript")
        if self.provider == "llm" and not (self.endpoint.get("base_url") and self.endpoint.get("model")):
            raise ConfigError("the llm provider needs endpoint.base_url and endpoint.model")
        unknown = set(self.endpoint) - {"base_url", "model"}
        if unknown:
            raise ConfigError(f"unknown endpoint keys: {sorted(unknown)}")

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        if "lambda" in data:
            data["lam"] = data.pop("lambda")
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if any("key" in k.lower() or "secret" in k.lower() for k in data.get("endpoint", {})):
            raise ConfigError("credentials are read from the environment, not from config")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def make_provider(self) -> Provider:
        return make_provider(self.provider, transcript=self.transcript,
                             base_url=self.endpoint.get("base_url"),
                             model=self.endpoint.get("model"), latency=self.latency)

    def to_json(self) -> dict:
        out = asdict(self)
        out["lambda"] = out.pop("lam")
        return out


# -- analysis ----------------------------------------------------------------

@dataclass
class Analysis:
    functions: list[FunctionAnalysis]
    variables: list[VariableKey]
    subgraphs: list[VariableSubgraph]
    statements: StatementSet
    errors: list[dict] = field(default_factory=list)

    @property
    def pdgs(self) -> dict[str, FunctionPDG]:
        return {fa.pdg.function: fa.pdg for fa in self.functions}


def load_units(paths: Iterable[str | Path]) -> list[SourceUnit]:
    units = []
    for p in paths:
        try:
            units.append(SourceUnit.from_path(p))
        except (OSError, UnicodeDecodeError) as exc:
            raise AnalysisError(f"{p}: cannot read source: {exc}") from exc
    return units


def _disambiguate(fns: list[FunctionAst]) -> None:
    """Give same-named functions from different files distinct names (``f@file.c``)."""
    counts = Counter(fn.name for fn in fns)
    for fn in fns:
        if counts[fn.name] > 1:
            fn.name = f"{fn.name}@{Path(fn.unit.path).name}"
    seen = Counter(fn.name for fn in fns)
    for name, n in seen.items():
        if n > 1:
            raise AnalysisError(f"function {name} is defined more than once in the same file")


def analyze_units(units: list[SourceUnit]) -> Analysis:
    """Steps one to three: PDGs per function, variable subgraphs, unique statements."""
    parsed = [parse_unit(u) for u in units]
    shared = FileScope()
    for p in parsed:
        for attr in ("arrays", "functions", "typedefs"):
            getattr(shared, attr).update(getattr(p.scope, attr))
    for p in parsed:
        for attr in ("arrays", "functions", "typedefs"):
            getattr(p.scope, attr).update(getattr(shared, attr))
    errors: list[dict] = [e.to_json() for p in parsed for e in p.errors]
    fns = [fn for p in parsed for fn in p.functions]
    _disambiguate(fns)

    functions: list[FunctionAnalysis] = []
    variables: set[VariableKey] = set()
    subgraphs: list[VariableSubgraph] = []
    for fn in fns:
        try:
            lowered = lower_to_statements(fn)
        except LoweringError as exc:
            logger.warning("skipping: %s", exc)
            errors.append({"path": fn.unit.path, "line": exc.line, "column": None,
                           "function": fn.name, "message": str(exc)})
            continue
        pdg = build_pdg(lowered)
        functions.append(FunctionAnalysis(fn, lowered, pdg))
        fn_vars = extract_variables(lowered)
        variables |= fn_vars
        subgraphs.extend(extract_subgraph(pdg, v) for v in sorted(fn_vars))
    pdgs = {fa.pdg.function: fa.pdg for fa in functions}
    return Analysis(functions, sorted(variables), subgraphs,
                    collect_statements(subgraphs, pdgs), errors)


def analyze(paths: Iterable[str | Path]) -> Analysis:
    return analyze_units(load_units(paths))


# -- scoring -----------------------------------------------------------------

def score_all(subgraphs: list[VariableSubgraph], pdgs: dict[str, FunctionPDG],
              ratings: RatingMap, lam: float) -> list:
    """One UPRScore per variable; a global referenced in several functions takes the max."""
    per_var = defaultdict(list)
    for sg in subgraphs:
        pdg = pdgs[sg.function]
        node_scores = {}
        for n in sg.nodes:
            text = pdg.node(n).norm_text
            if text not in ratings:
                raise DomainError(f"no rating for statement {text!r}")
            node_scores[n] = ratings[text].value
        per_var[sg.variable].append(score_variable(ScoredSubgraph(sg, node_scores), lam))
    return [combine(per_var[v]) for v in sorted(per_var)]


def make_report(analysis_subgraphs, pdgs, ratings: RatingMap, lam: float, threshold: float,
                provider: str, profile: str, errors=()) -> UPRReport:
    scores = score_all(analysis_subgraphs, pdgs, ratings, lam)
    report = rank(scores, threshold, lam=lam, provider=provider, profile=profile,
                  flagged_statements=sum(r.flagged for r in ratings.values()),
                  subsumed=subsumption(analysis_subgraphs, scores))
    report.meta["skipped"] = list(errors)
    return report


# -- artifacts ---------------------------------------------------------------

_UNSAFE = re.compile(r"[^A-Za-z0-9_.@-]")


def safe_name(name: str) -> str:
    return _UNSAFE.sub("_", name)


def _dump(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, ensure_ascii=False, sort_keys=True) + "\n",
                    encoding="utf-8")


def write_analysis(analysis: Analysis, out: Path) -> None:
    for sub in ("pdg", "subgraphs"):
        (out / sub).mkdir(parents=True, exist_ok=True)
        for stale in (out / sub).glob("*.json"):
            stale.unlink()
    for fa in analysis.functions:
        (out / "pdg" / f"{safe_name(fa.pdg.function)}.json").write_text(fa.pdg.dumps(), encoding="utf-8")
    by_fn = defaultdict(list)
    for sg in analysis.subgraphs:
        by_fn[sg.function].append(sg.to_json())
    for fn, sgs in by_fn.items():
        _dump(out / "subgraphs" / f"{safe_name(fn)}.json", sgs)
    _dump(out / "statements.json", analysis.statements.to_json())
    _dump(out / "errors.json", analysis.errors)


def read_analysis(out: Path) -> tuple[list[VariableSubgraph], dict[str, FunctionPDG], StatementSet, list]:
    out = Path(out)
    pdgs = {}
    for p in sorted((out / "pdg").glob("*.json")):
        pdg = pdg_from_json(json.loads(p.read_text(encoding="utf-8")))
        pdgs[pdg.function] = pdg
    subgraphs = []
    for p in sorted((out / "subgraphs").glob("*.json")):
        subgraphs.extend(VariableSubgraph.from_json(d) for d in json.loads(p.read_text(encoding="utf-8")))
    stmts = StatementSet.from_json(json.loads((out / "statements.json").read_text(encoding="utf-8")))
    errors_path = out / "errors.json"
    errors = json.loads(errors_path.read_text(encoding="utf-8")) if errors_path.exists() else []
    return subgraphs, pdgs, stmts, errors


def write_report(report: UPRReport, out: Path, figures: bool = True,
                 ratings: RatingMap | None = None) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.dumps(), encoding="utf-8")
    (out / "report.csv").write_text(report.to_csv(), encoding="utf-8")
    if figures:
        from upr_audit import plots
        plots.plot_score_ranking(report, out / "scores.png")
        if ratings is not None:
            plots.plot_rating_histogram(histogram(ratings).counts, out / "ratings_histogram.png")


# -- orchestration -----------------------------------------------------------

def rate_statements(config: RunConfig, statements: Iterable[str],
                    provider: Provider | None = None, cache: RatingCache | None = None) -> RatingMap:
    provider = provider or config.make_provider()
    cache = cache if cache is not None else RatingCache(config.cache_path)
    transcript = RecordLog(config.record) if config.record else None
    return rate_all(provider, get_profile(config.profile), statements, cache,
                    config.max_inflight, transcript)


def run_pipeline(config: RunConfig, out_dir: str | Path | None = None, *,
                 provider: Provider | None = None, cache: RatingCache | None = None,
                 figures: bool = True) -> UPRReport:
    """Run all six stages in order, writing intermediate artifacts to ``out_dir``."""
    config.validate()
    analysis = analyze(config.sources)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        write_analysis(analysis, out)
    provider = provider or config.make_provider()
    ratings = rate_statements(config, analysis.statements, provider, cache)
    if out is not None:
        write_ratings(ratings, out / "ratings.jsonl")
    report = make_report(analysis.subgraphs, analysis.pdgs, ratings, config.lam,
                         config.threshold, provider.name, config.profile, analysis.errors)
    if out is not None:
        write_report(report, out, figures, ratings)
    return report


def score_from_dir(out: str | Path, lam: float, threshold: float,
                   ratings_path: str | Path | None = None) -> UPRReport:
    out = Path(out)
    subgraphs, pdgs, _, errors = read_analysis(out)
    ratings = load_ratings(ratings_path or out / "ratings.jsonl")
    provider = next(iter(ratings.values())).provider if ratings else ""
    profile = next(iter(ratings.values())).profile if ratings else ""
    return make_report(subgraphs, pdgs, ratings, lam, threshold, provider, profile, errors)


# -- evaluation instruments --------------------------------------------------

@dataclass(frozen=True)
class BucketCounts:
    counts: tuple[int, ...]

    def __post_init__(self):
        if len(self.counts) != 11 or any(c < 0 for c in self.counts):
            raise DomainError("counts must be 11 non-negative integers")

    @property
    def low(self) -> int:
        return sum(self.counts[0:3])

    @property
    def mid(self) -> int:
        return sum(self.counts[3:8])

    @property
    def high(self) -> int:
        return sum(self.counts[8:11])

    @property
    def total(self) -> int:
        return sum(self.counts)

    def h1(self) -> bool:
        """Highly rated statements are a minority."""
        return self.high < self.low and 2 * self.high < self.total

    def h2(self) -> bool:
        """Most statements are rated low."""
        return 2 * self.low > self.total

    def h3(self) -> bool:
        """Only a few statements get a middling rating."""
        return self.mid < self.high

    def to_json(self) -> dict:
        return {"counts": list(self.counts), "low": self.low, "mid": self.mid,
                "high": self.high, "h1": self.h1(), "h2": self.h2(), "h3": self.h3()}


def histogram(ratings: RatingMap | Iterable[int]) -> BucketCounts:
    values = [r.value for r in ratings.values()] if isinstance(ratings, dict) else list(ratings)
    c = Counter(values)
    return BucketCounts(tuple(c.get(i, 0) for i in range(11)))


def ablation_recall(confirmed: Iterable[VariableKey], report: UPRReport) -> float:
    confirmed = set(confirmed)
    if not confirmed:
        raise DomainError("confirmed list is empty")
    return len(confirmed & set(report.candidates)) / len(confirmed)


__all__ = [
    "Analysis", "AnalysisError", "BucketCounts", "ConfigError", "DEFAULT_LAMBDA",
    "DEFAULT_THRESHOLD", "RunConfig", "ablation_recall", "analyze", "analyze_units",
    "histogram", "load_units", "make_report", "rate_statements", "read_analysis",
    "run_pipeline", "score_all", "score_from_dir", "write_analysis", "write_report",
]
