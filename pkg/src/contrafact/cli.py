"""Command-line surface: per-stage commands, full runs, evaluation, stats."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import click

from .corpus import SPLITS, DatasetError, DatasetLoader, dataset_stats
from .gateway import (
    HttpBackend,
    HttpEmbedder,
    LlmGateway,
    RecordingWriter,
    ReplayBackend,
    ResponseCache,
    RetryPolicy,
)
from .gateway.embedding import parse_embedder_id
from .metrics import (
    ALIGN_RANGE,
    RQUGE_RANGE,
    TokenOverlapScorer,
    metrics_markdown,
    prf,
    weighted_run_report,
)
from .prompts import PromptLibrary
from .runner import (
    MODES,
    CaseRunner,
    PipelineRecord,
    RunConfig,
    StageModels,
    compute_metrics,
    run,
)
from .verification import load_scheme


def read_config_file(path: Path) -> dict[str, str]:
    """Flat key=value config; keys mirror the long flags (dots allowed)."""
    values: dict[str, str] = {}
    for i, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise click.ClickException(f"{path}:{i}: expected key=value, got {line!r}")
        key, value = stripped.split("=", 1)
        values[key.strip()] = value.strip()
    return values


_CONFIG_KEY_ALIASES = {"replay": "replay_path", "record": "record_path"}


def _param_name(key: str) -> str:
    name = key.replace(".", "_").replace("-", "_")
    return _CONFIG_KEY_ALIASES.get(name, name)


@click.group()
@click.option(
    "--config",
    "config_path",
    type=click.Path(exists=True, path_type=Path),
    default=None,
    help="key=value file mirroring the flags",
)
@click.option("--verbose", is_flag=True, default=False)
@click.pass_context
def main(ctx: click.Context, config_path: Path | None, verbose: bool) -> None:
    """Claim verification through contrastive questioning over extracted graphs."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    if config_path is not None:
        values = {_param_name(k): v for k, v in read_config_file(config_path).items()}
        ctx.default_map = {
            command: dict(values) for command in main.commands
        }


def dataset_options(f):
    f = click.option("--ids", default=None, help="comma-separated case ids")(f)
    f = click.option("--limit", type=int, default=None)(f)
    f = click.option(
        "--split", type=click.Choice(SPLITS), default="test", show_default=True
    )(f)
    f = click.option("--scheme", default="liar-raw", show_default=True)(f)
    f = click.option(
        "--dataset", required=True, type=click.Path(exists=True, path_type=Path)
    )(f)
    return f


def model_options(f):
    f = click.option("--model.embed", "model_embed", default="hash:32", show_default=True)(f)
    f = click.option("--model.verify", "model_verify", default="default", show_default=True)(f)
    f = click.option("--model.summarise", "model_summarise", default="default", show_default=True)(f)
    f = click.option("--model.answer", "model_answer", default="default", show_default=True)(f)
    f = click.option("--model.extract", "model_extract", default="default", show_default=True)(f)
    return f


def gateway_options(f):
    f = click.option("--gateway-wall-budget", type=float, default=60.0, show_default=True, help="max seconds per call incl. retries")(f)
    f = click.option("--gateway-retries", type=int, default=2, show_default=True)(f)
    f = click.option("--http-timeout", type=float, default=60.0, show_default=True)(f)
    f = click.option("--max-inflight", type=int, default=8, show_default=True)(f)
    f = click.option("--no-cache", is_flag=True, default=False)(f)
    f = click.option("--cache-dir", type=click.Path(path_type=Path), default=Path("cache"), show_default=True)(f)
    f = click.option("--replay", "replay_path", type=click.Path(exists=True, path_type=Path), default=None)(f)
    f = click.option("--record", "record_path", type=click.Path(path_type=Path), default=None)(f)
    f = click.option(
        "--header",
        "headers",
        multiple=True,
        help='extra HTTP header, "Name: value"; $VARS expand from the environment',
    )(f)
    f = click.option("--api-base", default=None, help="chat-completions base URL")(f)
    return f


def pipeline_options(f):
    f = click.option("--templates", type=click.Path(exists=True, path_type=Path), default=None)(f)
    f = click.option("--fewshot", type=click.Path(exists=True, path_type=Path), default=None)(f)
    f = click.option("--extraction-retries", type=int, default=2, show_default=True)(f)
    f = click.option("--context-budget", type=int, default=30000, show_default=True)(f)
    f = click.option("--answer-max-tokens", type=int, default=512, show_default=True)(f)
    f = click.option("--max-tokens", type=int, default=1024, show_default=True)(f)
    f = click.option("--candidate-limit", type=int, default=None)(f)
    f = click.option("--question-workers", type=int, default=4, show_default=True)(f)
    f = click.option("--workers", type=int, default=1, show_default=True)(f)
    f = click.option(
        "--mode", type=click.Choice(MODES), default="full", show_default=True
    )(f)
    f = click.option("--k", type=int, default=5, show_default=True)(f)
    return f


def _build_config(kw: dict) -> RunConfig:
    ids = None
    if kw.get("ids"):
        ids = tuple(part.strip() for part in kw["ids"].split(",") if part.strip())
    return RunConfig(
        dataset=str(kw["dataset"]),
        scheme=kw["scheme"],
        split=kw["split"],
        k=kw["k"],
        mode=kw["mode"],
        models=StageModels(
            extract=kw["model_extract"],
            answer=kw["model_answer"],
            summarise=kw["model_summarise"],
            verify=kw["model_verify"],
            embed=kw["model_embed"],
        ),
        workers=kw["workers"],
        question_workers=kw["question_workers"],
        max_tokens=kw["max_tokens"],
        answer_max_tokens=kw["answer_max_tokens"],
        context_char_budget=kw["context_budget"],
        candidate_limit=kw["candidate_limit"],
        extraction_retries=kw["extraction_retries"],
        limit=kw["limit"],
        ids=ids,
        retry_failed=kw.get("retry_failed", False),
        fewshot_path=str(kw["fewshot"]) if kw.get("fewshot") else None,
        template_dir=str(kw["templates"]) if kw.get("templates") else None,
    )


def _parse_headers(raw: tuple[str, ...]) -> dict[str, str]:
    headers = {}
    for item in raw:
        if ":" not in item:
            raise click.ClickException(f'header must look like "Name: value": {item!r}')
        name, value = item.split(":", 1)
        headers[name.strip()] = value.strip()
    return headers


def _build_gateway(kw: dict, config: RunConfig) -> LlmGateway:
    headers = _parse_headers(kw.get("headers", ()))
    timeout = kw.get("http_timeout", 60.0)
    if kw.get("replay_path"):
        backend = ReplayBackend(kw["replay_path"])
    elif kw.get("api_base"):
        backend = HttpBackend(kw["api_base"], headers=headers, timeout=timeout)
    else:
        raise click.ClickException(
            "no backend configured: pass --api-base or --replay"
        )
    embedder = parse_embedder_id(config.models.embed)
    if embedder is None:
        if kw.get("api_base"):
            embedder = HttpEmbedder(
                kw["api_base"],
                model_id=config.models.embed,
                headers=headers,
                timeout=timeout,
            )
        elif not kw.get("replay_path"):
            # replay runs serve embeddings from the recording itself
            raise click.ClickException(
                f"embedding model {config.models.embed!r} needs --api-base "
                '(use "hash:<dim>" for the offline embedder)'
            )
    cache = None if kw.get("no_cache") else ResponseCache(kw["cache_dir"])
    recorder = RecordingWriter(kw["record_path"]) if kw.get("record_path") else None
    return LlmGateway(
        backend,
        embedder=embedder,
        cache=cache,
        recorder=recorder,
        retry=RetryPolicy(
            max_retries=kw.get("gateway_retries", 2),
            wall_budget=kw.get("gateway_wall_budget", 60.0),
        ),
        max_in_flight=kw.get("max_inflight", 8),
    )


def _emit(payloads: list[dict], out: Path | None) -> None:
    lines = [json.dumps(p, sort_keys=True) for p in payloads]
    if out is None:
        for line in lines:
            click.echo(line)
    else:
        out.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def _stage_command(kw: dict, stop_after: str | None, fields: tuple[str, ...]) -> None:
    config = _build_config(kw)
    try:
        scheme = load_scheme(config.scheme)
        loader = DatasetLoader(config.dataset, scheme)
        cases = loader.load(
            splits=[config.split], limit=config.limit, ids=config.ids
        )
    except DatasetError as exc:
        raise click.ClickException(str(exc)) from exc
    gateway = _build_gateway(kw, config)
    prompts = PromptLibrary(config.template_dir)
    case_runner = CaseRunner(config, scheme, gateway, prompts)
    payloads = []
    for case in cases:
        record = case_runner.run_case(case, stop_after=stop_after)
        payload = {"case_id": record.case_id, "status": record.status}
        if record.failure:
            payload["failure"] = record.failure
        for field in fields:
            payload[field] = getattr(record, field)
        payloads.append(payload)
    _emit(payloads, kw.get("out"))


def _out_option(f):
    return click.option("--out", type=click.Path(path_type=Path), default=None)(f)


@main.command()
@dataset_options
@model_options
@gateway_options
@pipeline_options
@_out_option
def extract(**kw) -> None:
    """Extract one merged knowledge graph per selected case."""
    kw["mode"] = "full"
    _stage_command(kw, stop_after="extract", fields=("kg",))


@main.command()
@dataset_options
@model_options
@gateway_options
@pipeline_options
@_out_option
def questions(**kw) -> None:
    """Generate and rank contrastive questions per selected case."""
    _stage_command(
        kw, stop_after="questions", fields=("candidate_count", "questions", "trace")
    )


@main.command()
@dataset_options
@model_options
@gateway_options
@pipeline_options
@_out_option
def answer(**kw) -> None:
    """Answer the ranked questions from the reports."""
    _stage_command(kw, stop_after="answer", fields=("qa_pairs",))


@main.command()
@dataset_options
@model_options
@gateway_options
@pipeline_options
@_out_option
def summarise(**kw) -> None:
    """Summarise the question/answer pairs into one paragraph."""
    _stage_command(kw, stop_after="summarise", fields=("summary",))


@main.command()
@dataset_options
@model_options
@gateway_options
@pipeline_options
@_out_option
def verify(**kw) -> None:
    """Run the pipeline through veracity classification."""
    _stage_command(kw, stop_after=None, fields=("verdict", "gold_label"))


@main.command(name="run")
@dataset_options
@model_options
@gateway_options
@pipeline_options
@click.option("--run-dir", type=click.Path(path_type=Path), required=True)
@click.option("--resume", is_flag=True, default=False, help="reuse an existing run directory")
@click.option("--retry-failed", is_flag=True, default=False)
def run_command(**kw) -> None:
    """Execute the configured mode over the dataset into a run directory."""
    config = _build_config(kw)
    run_dir: Path = kw["run_dir"]
    records_dir = run_dir / "records"
    if records_dir.exists() and any(records_dir.iterdir()) and not kw["resume"]:
        raise click.ClickException(
            f"{run_dir} already holds records; pass --resume to continue it"
        )
    gateway = _build_gateway(kw, config)
    try:
        result = run(config, run_dir, gateway, prompts=PromptLibrary(config.template_dir))
    except (DatasetError, RuntimeError) as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(
        json.dumps(
            {
                "run_dir": str(result.run_dir),
                "total": result.total,
                "executed": result.executed,
                "done": result.done,
                "failed": result.failed,
                "skipped": result.skipped,
                "macro_f1": (result.metrics.get("report") or {})
                .get("macro", {})
                .get("f1"),
            },
            sort_keys=True,
        )
    )


@main.command(name="eval")
@click.option("--run-dir", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--scheme", default="liar-raw", show_default=True)
@click.option("--name", default="run", show_default=True, help="row label for the table")
@click.option("--weighted/--no-weighted", default=True, show_default=True)
def eval_command(run_dir: Path, scheme: str, name: str, weighted: bool) -> None:
    """Recompute metrics over a run directory; write evaluation.json/metrics.md."""
    scheme_obj = load_scheme(scheme)
    records_dir = run_dir / "records"
    if not records_dir.exists():
        raise click.ClickException(f"no records directory under {run_dir}")
    records = [
        json.loads(path.read_text(encoding="utf-8"))
        for path in sorted(records_dir.glob("*.json"))
    ]
    if not records:
        raise click.ClickException(f"no records found under {records_dir}")
    as_objects = [PipelineRecord.from_dict(r) for r in records]
    digest = records[0].get("config_digest", "")
    mode = records[0].get("mode", "full")
    payload = compute_metrics(as_objects, scheme_obj, digest, mode)
    if weighted:
        payload["weighted"] = weighted_run_report(
            records,
            scheme_obj,
            align_scorer=TokenOverlapScorer(ALIGN_RANGE),
            rquge_scorer=TokenOverlapScorer(RQUGE_RANGE),
        )
    (run_dir / "evaluation.json").write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    if payload["report"]:
        pairs = [
            (r.gold_label, r.verdict["label"])
            for r in as_objects
            if r.status == "done" and r.gold_label and r.verdict
        ]
        report = prf(pairs, scheme_obj, excluded=payload["excluded_failed"])
        (run_dir / "metrics.md").write_text(
            metrics_markdown(name, report), encoding="utf-8"
        )
    click.echo(json.dumps(payload, sort_keys=True))


@main.command()
@click.option("--dataset", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--scheme", default="liar-raw", show_default=True)
@click.option(
    "--split",
    type=click.Choice(SPLITS + ("all",)),
    default="all",
    show_default=True,
)
@click.option("--limit", type=int, default=None)
def stats(dataset: Path, scheme: str, split: str, limit: int | None) -> None:
    """Dataset statistics: per-label counts and average reports per claim."""
    scheme_obj = load_scheme(scheme)
    try:
        loader = DatasetLoader(dataset, scheme_obj)
        splits = list(SPLITS) if split == "all" else [split]
        if limit is None:
            stream = (case for s in splits for case in loader.iter_split(s))
        else:
            stream = iter(loader.load(splits=splits, limit=limit))
        payload = dataset_stats(stream).to_dict()
    except DatasetError as exc:
        raise click.ClickException(str(exc)) from exc
    payload["diagnostics"] = len(loader.diagnostics)
    click.echo(json.dumps(payload, sort_keys=True, indent=2))


if __name__ == "__main__":
    main(prog_name="contrafact")
