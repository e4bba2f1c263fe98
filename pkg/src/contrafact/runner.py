"""Run orchestration: per-case pipeline execution with resumable records.

Layout of a run directory:

    runs/<name>/run.json          config echo + config digest (checked on resume)
    runs/<name>/records/<id>.json stable per-case record (replay-deterministic)
    runs/<name>/manifest.jsonl    dataset-ordered per-case status + timings
    runs/<name>/metrics.json      classification metrics over completed cases

Record files never contain wall-clock data; timings live in the manifest so
that replayed runs are byte-identical regardless of worker width.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

from .contrastive import FormulationError, formulate
from .corpus import ClaimCase, DatasetLoader
from .extraction import ExtractionConfig, ExtractionError, extract_case_audited
from .gateway import LlmGateway, ModelRequest
from .metrics import prf
from .prompts import PromptLibrary, load_fewshot
from .reasoning import (
    QAPair,
    ReasoningConfig,
    SummaryUnavailable,
    answer_questions,
    build_context,
    summarise,
)
from .verification import LabelScheme, UnparseableVerdict, load_scheme, verify

log = logging.getLogger(__name__)

MODE_FULL = "full"
MODE_NAIVE = "naive"
MODE_KG_ONLY = "kg-augment-only"
MODE_LLM_QUESTIONS = "llm-questions"
MODES = (MODE_FULL, MODE_NAIVE, MODE_KG_ONLY, MODE_LLM_QUESTIONS)

_UNSAFE = re.compile(r"[^A-Za-z0-9._-]")
_QUESTION_MARKER = re.compile(r"^\s*(?:[-*•]\s*)*(?:\(?\d{1,3}\)?\s*[.):\]]\s*)?")


class QuestionParsingError(RuntimeError):
    """Free-form question output yielded no usable questions."""


@dataclass(frozen=True)
class StageModels:
    """Per-stage model ids; extraction may use a cheaper model than the rest."""

    extract: str = "default"
    answer: str = "default"
    summarise: str = "default"
    verify: str = "default"
    embed: str = "hash:32"


@dataclass(frozen=True)
class RunConfig:
    dataset: str
    scheme: str
    split: str = "test"
    k: int = 5
    mode: str = MODE_FULL
    models: StageModels = field(default_factory=StageModels)
    workers: int = 1
    question_workers: int = 4
    max_tokens: int = 1024
    answer_max_tokens: int = 512
    context_char_budget: int = 30000
    candidate_limit: int | None = None
    extraction_retries: int = 2
    limit: int | None = None
    ids: tuple[str, ...] | None = None
    retry_failed: bool = False
    fewshot_path: str | None = None
    template_dir: str | None = None

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.workers < 1 or self.question_workers < 1:
            raise ValueError("worker counts must be >= 1")

    def to_dict(self) -> dict:
        """Semantics-affecting fields only.

        Worker widths and retry-failed are deliberately excluded: they must
        never change record bytes.
        """
        return {
            "dataset": self.dataset,
            "scheme": self.scheme,
            "split": self.split,
            "k": self.k,
            "mode": self.mode,
            "models": {
                "extract": self.models.extract,
                "answer": self.models.answer,
                "summarise": self.models.summarise,
                "verify": self.models.verify,
                "embed": self.models.embed,
            },
            "max_tokens": self.max_tokens,
            "answer_max_tokens": self.answer_max_tokens,
            "context_char_budget": self.context_char_budget,
            "candidate_limit": self.candidate_limit,
            "extraction_retries": self.extraction_retries,
            "limit": self.limit,
            "ids": list(self.ids) if self.ids else None,
            "fewshot_path": self.fewshot_path,
            "template_dir": self.template_dir,
        }

    def digest(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


STATUS_PARTIAL = "partial"
STATUS_DONE = "done"
STATUS_FAILED = "failed"


@dataclass
class PipelineRecord:
    """Per-claim audit trail; `done` records contain every stage output."""

    case_id: str
    claim: str
    mode: str
    config_digest: str
    gold_label: str | None = None
    status: str = STATUS_PARTIAL
    last_stage: str | None = None
    failure: dict | None = None
    kg: dict | None = None
    extraction_drops: dict | None = None
    candidate_count: int | None = None
    questions: list | None = None
    trace: dict | None = None
    qa_pairs: list | None = None
    summary: dict | None = None
    verdict: dict | None = None
    timings: dict = field(default_factory=dict)  # volatile, manifest-only

    def stable_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "claim": self.claim,
            "mode": self.mode,
            "config_digest": self.config_digest,
            "gold_label": self.gold_label,
            "status": self.status,
            "last_stage": self.last_stage,
            "failure": self.failure,
            "kg": self.kg,
            "extraction_drops": self.extraction_drops,
            "candidate_count": self.candidate_count,
            "questions": self.questions,
            "trace": self.trace,
            "qa_pairs": self.qa_pairs,
            "summary": self.summary,
            "verdict": self.verdict,
        }

    def stable_json(self) -> str:
        return json.dumps(self.stable_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, payload: dict) -> "PipelineRecord":
        known = {f for f in cls.__dataclass_fields__ if f != "timings"}
        return cls(**{k: v for k, v in payload.items() if k in known})


def record_filename(case_id: str) -> str:
    safe = _UNSAFE.sub("_", case_id)
    if safe != case_id:
        safe = f"{safe}-{hashlib.sha256(case_id.encode('utf-8')).hexdigest()[:8]}"
    return f"{safe}.json"


def parse_llm_questions(raw: str, limit: int = 5) -> list[str]:
    """Line-split free-form question lists, stripping bullets and numbering."""
    out: list[str] = []
    for line in raw.splitlines():
        text = _QUESTION_MARKER.sub("", line.strip(), count=1).strip()
        if text:
            out.append(text)
        if len(out) >= limit:
            break
    return out


class RunDirectory:
    def __init__(self, root: Path | str) -> None:
        self.root = Path(root)
        self.records_dir = self.root / "records"
        self.manifest_path = self.root / "manifest.jsonl"
        self.metrics_path = self.root / "metrics.json"
        self.run_meta_path = self.root / "run.json"
        self.records_dir.mkdir(parents=True, exist_ok=True)

    def record_path(self, case_id: str) -> Path:
        return self.records_dir / record_filename(case_id)

    def read_record(self, case_id: str) -> PipelineRecord | None:
        path = self.record_path(case_id)
        if not path.exists():
            return None
        return PipelineRecord.from_dict(json.loads(path.read_text(encoding="utf-8")))

    def write_record(self, record: PipelineRecord) -> None:
        path = self.record_path(record.case_id)
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(record.stable_json(), encoding="utf-8")
        tmp.replace(path)

    def check_or_write_meta(self, config: RunConfig) -> None:
        digest = config.digest()
        if self.run_meta_path.exists():
            existing = json.loads(self.run_meta_path.read_text(encoding="utf-8"))
            if existing.get("config_digest") != digest:
                raise RuntimeError(
                    "run directory was created with a different configuration "
                    f"(digest {existing.get('config_digest')!r} != {digest!r})"
                )
            return
        self.run_meta_path.write_text(
            json.dumps(
                {"config_digest": digest, "config": config.to_dict()},
                sort_keys=True,
                indent=2,
            )
            + "\n",
            encoding="utf-8",
        )

    def write_manifest(self, entries: Sequence[dict]) -> None:
        tmp = self.manifest_path.with_suffix(".jsonl.tmp")
        lines = [json.dumps(entry, sort_keys=True) for entry in entries]
        tmp.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
        tmp.replace(self.manifest_path)

    def write_metrics(self, payload: dict) -> None:
        self.metrics_path.write_text(
            json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )


@dataclass
class _StageClock:
    timings: dict

    def time(self, stage: str, fn: Callable):
        started = time.perf_counter()
        try:
            return fn()
        finally:
            self.timings[stage] = time.perf_counter() - started


class CaseRunner:
    """Executes the configured mode for one case at a time."""

    def __init__(
        self,
        config: RunConfig,
        scheme: LabelScheme,
        gateway: LlmGateway,
        prompts: PromptLibrary | None = None,
    ) -> None:
        self.config = config
        self.scheme = scheme
        self.gateway = gateway
        self.prompts = prompts or PromptLibrary(config.template_dir)
        self.fewshot = load_fewshot(config.fewshot_path)
        self._digest = config.digest()
        self.extraction_config = ExtractionConfig(
            model=config.models.extract,
            max_retries=config.extraction_retries,
            max_tokens=config.max_tokens,
            fewshot=self.fewshot,
        )
        self.reasoning_config = ReasoningConfig(
            model=config.models.answer,
            max_tokens=config.answer_max_tokens,
            context_char_budget=config.context_char_budget,
            workers=config.question_workers,
        )

    def run_case(
        self,
        case: ClaimCase,
        on_stage: Callable[[PipelineRecord], None] | None = None,
        stop_after: str | None = None,
    ) -> PipelineRecord:
        record = PipelineRecord(
            case_id=case.id,
            claim=case.claim,
            mode=self.config.mode,
            config_digest=self._digest,
            gold_label=case.gold_label,
        )
        clock = _StageClock(record.timings)

        class _Stop(Exception):
            pass

        def checkpoint(stage: str) -> None:
            record.last_stage = stage
            if on_stage is not None:
                on_stage(record)
            if stop_after == stage:
                raise _Stop

        try:
            if self.config.mode == MODE_NAIVE:
                self._verify_on_context(
                    record,
                    clock,
                    build_context(case.report_texts, self.config.context_char_budget),
                )
            elif self.config.mode == MODE_KG_ONLY:
                graph = self._extract(case, record, clock)
                checkpoint("extract")
                context = build_context(
                    case.report_texts, self.config.context_char_budget
                )
                augmented = (
                    f"{context}\n\n--- Knowledge graph ---\n{graph.canonical_json()}"
                )
                self._verify_on_context(record, clock, augmented)
            elif self.config.mode == MODE_LLM_QUESTIONS:
                questions = self._llm_questions(case, record, clock)
                checkpoint("questions")
                pairs = self._answer(case, questions, record, clock)
                checkpoint("answer")
                summary = self._summarise(case, pairs, record, clock)
                checkpoint("summarise")
                self._verify_on_context(record, clock, summary)
            else:  # MODE_FULL
                graph = self._extract(case, record, clock)
                checkpoint("extract")
                questions = self._formulate(graph, record, clock)
                checkpoint("questions")
                pairs = self._answer(case, questions, record, clock)
                checkpoint("answer")
                summary = self._summarise(case, pairs, record, clock)
                checkpoint("summarise")
                self._verify_on_context(record, clock, summary)
            record.last_stage = "verify" if record.verdict else record.last_stage
            record.status = STATUS_DONE
        except _Stop:
            pass  # caller asked for a prefix of the pipeline; record stays partial
        except Exception as exc:  # per-case failures are recorded, never fatal
            record.status = STATUS_FAILED
            record.failure = {
                "stage": _failure_stage(exc, record.last_stage, self.config.mode),
                "reason": str(exc),
            }
            log.warning("case %s failed at %s: %s", case.id, record.failure["stage"], exc)
        return record

    # -- stages --------------------------------------------------------------

    def _extract(self, case: ClaimCase, record: PipelineRecord, clock: _StageClock):
        extraction = clock.time(
            "extract",
            lambda: extract_case_audited(
                case, self.extraction_config, self.gateway, self.prompts
            ),
        )
        record.kg = extraction.graph.to_dict()
        record.extraction_drops = {
            "entities": extraction.dropped_entities,
            "triples": extraction.dropped_triples,
        }
        return extraction.graph

    def _formulate(self, graph, record: PipelineRecord, clock: _StageClock):
        result = clock.time(
            "questions",
            lambda: formulate(
                graph,
                self.config.k,
                self.gateway.embedding_client(self.config.models.embed),
                candidate_limit=self.config.candidate_limit,
            ),
        )
        record.candidate_count = result.candidate_count
        record.questions = [q.to_dict() for q in result.questions]
        record.trace = result.trace.to_dict()
        return list(result.questions)

    def _llm_questions(
        self, case: ClaimCase, record: PipelineRecord, clock: _StageClock
    ) -> list[str]:
        example = self.fewshot.get("llm_questions", {})
        context = build_context(case.report_texts, self.config.context_char_budget)
        prompt = self.prompts.render(
            "llm_questions",
            **{
                "claim example": example.get("claim", ""),
                "reports examples": example.get("reports", ""),
                "contrastive questions examples": example.get("questions", ""),
                "claim": case.claim,
                "reports": context,
            },
        )
        raw = clock.time(
            "questions",
            lambda: self.gateway.complete(
                ModelRequest(
                    model=self.config.models.answer,
                    prompt=prompt,
                    max_tokens=self.config.max_tokens,
                )
            ),
        )
        questions = parse_llm_questions(raw, limit=self.config.k)
        if not questions:
            raise QuestionParsingError("no questions extractable from model output")
        record.candidate_count = len(questions)
        record.questions = [{"text": q} for q in questions]
        return questions

    def _answer(self, case, questions, record: PipelineRecord, clock: _StageClock):
        pairs = clock.time(
            "answer",
            lambda: answer_questions(
                questions,
                case.report_texts,
                case.claim,
                self.gateway,
                self.reasoning_config,
                self.prompts,
            ),
        )
        record.qa_pairs = [pair.to_dict() for pair in pairs]
        return pairs

    def _summarise(
        self, case, pairs: list[QAPair], record: PipelineRecord, clock: _StageClock
    ) -> str:
        summarise_config = replace(
            self.reasoning_config, model=self.config.models.summarise
        )
        summary = clock.time(
            "summarise",
            lambda: summarise(
                case.claim, pairs, self.gateway, summarise_config, self.prompts
            ),
        )
        record.summary = {"text": summary.text, "word_count": summary.word_count}
        return summary.text

    def _verify_on_context(
        self, record: PipelineRecord, clock: _StageClock, context: str
    ) -> None:
        verdict = clock.time(
            "verify",
            lambda: verify(
                record.claim,
                context,
                self.scheme,
                self.gateway,
                model=self.config.models.verify,
                prompts=self.prompts,
                max_tokens=64,
            ),
        )
        record.verdict = {
            "label": verdict.label,
            "value": verdict.value,
            "raw": verdict.raw,
        }


_NEXT_STAGE = {
    MODE_FULL: {
        None: "extract",
        "extract": "questions",
        "questions": "answer",
        "answer": "summarise",
        "summarise": "verify",
    },
    MODE_LLM_QUESTIONS: {
        None: "questions",
        "questions": "answer",
        "answer": "summarise",
        "summarise": "verify",
    },
    MODE_KG_ONLY: {None: "extract", "extract": "verify"},
    MODE_NAIVE: {None: "verify"},
}


def _failure_stage(exc: Exception, last_stage: str | None, mode: str) -> str:
    if isinstance(exc, ExtractionError):
        return "extract"
    if isinstance(exc, (FormulationError, QuestionParsingError)):
        return "questions"
    if isinstance(exc, SummaryUnavailable):
        return "summarise"
    if isinstance(exc, UnparseableVerdict):
        return "verify"
    return _NEXT_STAGE.get(mode, {}).get(last_stage, "unknown")


@dataclass
class RunResult:
    run_dir: Path
    total: int
    executed: int
    done: int
    failed: int
    skipped: int
    metrics: dict


def compute_metrics(
    records: Sequence[PipelineRecord], scheme: LabelScheme, config_digest: str, mode: str
) -> dict:
    pairs = [
        (r.gold_label, r.verdict["label"])
        for r in records
        if r.status == STATUS_DONE and r.gold_label is not None and r.verdict
    ]
    failed = sum(1 for r in records if r.status == STATUS_FAILED)
    unlabeled = sum(
        1 for r in records if r.status == STATUS_DONE and r.gold_label is None
    )
    payload: dict = {
        "config_digest": config_digest,
        "mode": mode,
        "scheme": scheme.name,
        "cases": len(records),
        "evaluated": len(pairs),
        "excluded_failed": failed,
        "excluded_unlabeled": unlabeled,
        "report": None,
    }
    if pairs:
        payload["report"] = prf(pairs, scheme, excluded=failed).to_dict()
    return payload


def run(
    config: RunConfig,
    run_dir: Path | str,
    gateway: LlmGateway,
    prompts: PromptLibrary | None = None,
) -> RunResult:
    """Execute the configured mode over the selected cases, resumably.

    Completed (and, unless retry_failed, failed) cases are skipped on rerun.
    The manifest is rewritten in dataset order after every case so it never
    reorders or duplicates ids regardless of worker interleaving.
    """
    scheme = load_scheme(config.scheme)
    loader = DatasetLoader(config.dataset, scheme)
    cases = loader.load(
        splits=[config.split], limit=config.limit, ids=config.ids
    )
    directory = RunDirectory(run_dir)
    directory.check_or_write_meta(config)
    case_runner = CaseRunner(config, scheme, gateway, prompts)

    records: dict[str, PipelineRecord] = {}
    todo: list[ClaimCase] = []
    skipped = 0
    for case in cases:
        existing = directory.read_record(case.id)
        terminal = existing is not None and (
            existing.status == STATUS_DONE
            or (existing.status == STATUS_FAILED and not config.retry_failed)
        )
        if terminal:
            records[case.id] = existing
            skipped += 1
        else:
            todo.append(case)

    manifest_lock = threading.Lock()
    case_order = [case.id for case in cases]

    def manifest_entries() -> list[dict]:
        entries = []
        for case_id in case_order:
            record = records.get(case_id)
            if record is None:
                entries.append({"id": case_id, "status": "pending"})
            else:
                entries.append(
                    {
                        "id": case_id,
                        "status": record.status,
                        "stage": record.last_stage,
                        "error": (record.failure or {}).get("reason"),
                        "timings": {
                            k: round(v, 6) for k, v in record.timings.items()
                        },
                    }
                )
        return entries

    def publish(record: PipelineRecord) -> None:
        directory.write_record(record)
        with manifest_lock:
            records[record.case_id] = record
            directory.write_manifest(manifest_entries())

    def process(case: ClaimCase) -> PipelineRecord:
        record = case_runner.run_case(case, on_stage=directory.write_record)
        publish(record)
        return record

    with manifest_lock:
        directory.write_manifest(manifest_entries())

    if config.workers > 1 and len(todo) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            list(pool.map(process, todo))
    else:
        for case in todo:
            process(case)

    ordered_records = [records[case_id] for case_id in case_order if case_id in records]
    metrics = compute_metrics(ordered_records, scheme, config.digest(), config.mode)
    metrics["load_diagnostics"] = len(loader.diagnostics)
    directory.write_metrics(metrics)

    done = sum(1 for r in ordered_records if r.status == STATUS_DONE)
    failed = sum(1 for r in ordered_records if r.status == STATUS_FAILED)
    return RunResult(
        run_dir=Path(run_dir),
        total=len(cases),
        executed=len(todo),
        done=done,
        failed=failed,
        skipped=skipped,
        metrics=metrics,
    )


def load_run_records(run_dir: Path | str) -> list[PipelineRecord]:
    directory = RunDirectory(run_dir)
    records = []
    for path in sorted(directory.records_dir.glob("*.json")):
        records.append(PipelineRecord.from_dict(json.loads(path.read_text(encoding="utf-8"))))
    return records
