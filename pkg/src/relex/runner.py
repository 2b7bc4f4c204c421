"""End-to-end experiment orchestration: config, run, resume, manifests.

A run renders one prompt per test instance (simple query, or augmented
with retrieved training examples), dispatches it through the cached
generation client, normalizes and scores the outputs, and persists
``predictions.jsonl`` plus ``manifest.json`` under the output directory.
Train/test separation is enforced before and during retrieval.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import logging
import random
from dataclasses import dataclass, fields
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping

from relex import client as llm
from relex import embeddings as emb
from relex import metrics as metrics_mod
from relex.data import EXPECTED_COUNTS, DatasetBundle, load_bundle
from relex.errors import ConfigDriftError, ConfigError, LeakageError, TransportError, ValidationError
from relex.metrics import MetricsReport, report_from_dict, report_to_dict
from relex.normalize import Normalizer, PredictionRecord, policy_from_name
from relex.prompts import (
    PromptRecord,
    default_augmented_template,
    default_simple_template,
    load_template,
    render_augmented,
    render_simple_query,
)

logger = logging.getLogger(__name__)

METHODS = ("simple", "rag", "finetuned", "rag_finetuned")
RAG_METHODS = ("rag", "rag_finetuned")

PREDICTIONS_FILENAME = "predictions.jsonl"
MANIFEST_FILENAME = "manifest.json"


@dataclass(frozen=True)
class ExperimentConfig:
    dataset_name: str = ""
    bundle_path: str = ""
    method: str = "simple"
    generation_endpoint: str = ""
    generation_model_id: str = ""
    embedding_endpoint: str = ""
    embedding_model_id: str = ""
    store_path: str = ""
    template_path: str = ""
    k: int = 1
    max_new_tokens: int = llm.DEFAULT_MAX_NEW_TOKENS
    temperature: float = llm.DEFAULT_TEMPERATURE
    stop: tuple[str, ...] = llm.DEFAULT_STOP
    parallelism: int = 4
    requests_per_second: float = 0.0
    retry_attempts: int = 3
    retry_backoff: float = 0.5
    normalization_policy: str = "containment-cascade"
    cache_path: str = ""
    output_dir: str = ""
    seed: int = 0
    allow_train_overlap_prompting: bool = False

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; have {METHODS}")
        for key in ("dataset_name", "bundle_path", "generation_endpoint", "generation_model_id", "output_dir"):
            if not getattr(self, key):
                raise ConfigError(f"config key {key!r} is required")
        if self.method in RAG_METHODS:
            if not self.embedding_endpoint:
                raise ConfigError(f"method {self.method!r} requires embedding_endpoint")
            if not self.store_path:
                raise ConfigError(f"method {self.method!r} requires store_path (a built store)")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        if self.retry_attempts < 1:
            raise ConfigError("retry_attempts must be >= 1")
        if self.max_new_tokens < 1:
            raise ConfigError("max_new_tokens must be >= 1")
        if self.temperature < 0:
            raise ConfigError("temperature must be non-negative")

    def resolved_cache_path(self) -> Path:
        return Path(self.cache_path) if self.cache_path else Path(self.output_dir) / "cache.jsonl"


_BOOL_VALUES = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def _coerce(key: str, value, target_type) -> object:
    if target_type is bool:
        if isinstance(value, bool):
            return value
        lowered = str(value).strip().lower()
        if lowered not in _BOOL_VALUES:
            raise ConfigError(f"config key {key!r}: expected a boolean, got {value!r}")
        return _BOOL_VALUES[lowered]
    if target_type is int:
        return int(value)
    if target_type is float:
        return float(value)
    if target_type is tuple:
        if isinstance(value, (list, tuple)):
            return tuple(str(v) for v in value)
        decoded = str(value).encode("utf-8").decode("unicode_escape")
        return tuple(part for part in decoded.split("||"))
    return str(value)


def config_from_mapping(mapping: Mapping[str, object]) -> ExperimentConfig:
    """Build a config from string-keyed values, coercing types per field."""
    field_types = {f.name: f.type for f in fields(ExperimentConfig)}
    origin = {"str": str, "int": int, "float": float, "bool": bool, "tuple[str, ...]": tuple}
    values = {}
    for key, value in mapping.items():
        if key not in field_types:
            raise ConfigError(f"unknown config key {key!r}")
        target = origin[field_types[key]] if isinstance(field_types[key], str) else field_types[key]
        try:
            values[key] = _coerce(key, value, target)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config key {key!r}: {exc}") from exc
    return ExperimentConfig(**values)


def parse_config_file(path: str | Path) -> dict[str, str]:
    """Parse the flat ``key = value`` config format; '#' starts a comment line."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = stripped.split("=", 1)
        raw[key.strip()] = value.strip()
    return raw


def load_config(path: str | Path, overrides: Mapping[str, str] | None = None) -> ExperimentConfig:
    raw = parse_config_file(path)
    raw.update(overrides or {})
    return config_from_mapping(raw)


def config_snapshot(config: ExperimentConfig) -> dict:
    snapshot = {}
    for f in fields(ExperimentConfig):
        value = getattr(config, f.name)
        snapshot[f.name] = list(value) if isinstance(value, tuple) else value
    return snapshot


def config_from_snapshot(snapshot: Mapping[str, object]) -> ExperimentConfig:
    return config_from_mapping(snapshot)


@dataclass
class RunManifest:
    config: dict
    dataset_counts: dict[str, int]
    store_fingerprint: str | None
    template_sha256: str
    started_at: str
    finished_at: str
    cache_hits: int
    cache_misses: int
    unparseable_count: int
    total: int
    partial: bool
    metrics: dict[str, MetricsReport]
    predictions_path: str

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "dataset_counts": self.dataset_counts,
            "store_fingerprint": self.store_fingerprint,
            "template_sha256": self.template_sha256,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "cache_hits": self.cache_hits,
            "cache_misses": self.cache_misses,
            "unparseable_count": self.unparseable_count,
            "total": self.total,
            "partial": self.partial,
            "metrics": {mode: report_to_dict(r) for mode, r in self.metrics.items()},
            "predictions_path": self.predictions_path,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "RunManifest":
        return cls(
            config=raw["config"],
            dataset_counts=raw["dataset_counts"],
            store_fingerprint=raw["store_fingerprint"],
            template_sha256=raw["template_sha256"],
            started_at=raw["started_at"],
            finished_at=raw["finished_at"],
            cache_hits=raw["cache_hits"],
            cache_misses=raw["cache_misses"],
            unparseable_count=raw["unparseable_count"],
            total=raw["total"],
            partial=raw["partial"],
            metrics={mode: report_from_dict(r) for mode, r in raw["metrics"].items()},
            predictions_path=raw["predictions_path"],
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
        )

    @classmethod
    def load(cls, path: str | Path) -> "RunManifest":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat()


def _select_template(config: ExperimentConfig):
    if config.template_path:
        return load_template(config.template_path)
    if config.method in RAG_METHODS:
        return default_augmented_template()
    return default_simple_template()


def _template_sha256(template) -> str:
    payload = (template.example_block or "") + "\n---\n" + template.body
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _check_dataset_rules(config: ExperimentConfig, bundle: DatasetBundle) -> None:
    if config.dataset_name != bundle.schema.dataset_name:
        raise ConfigError(
            f"config dataset {config.dataset_name!r} != bundle dataset "
            f"{bundle.schema.dataset_name!r}"
        )
    if config.dataset_name == "SemEVAL":
        if config.method == "rag_finetuned":
            raise ConfigError(
                "SemEVAL has no held-out prompt split; method rag_finetuned is not runnable"
            )
        if config.method == "rag" and not config.allow_train_overlap_prompting:
            raise ConfigError(
                "SemEVAL prompt data is drawn from the training split; pass "
                "--allow-train-overlap-prompting to run rag anyway"
            )
    expected = EXPECTED_COUNTS.get(config.dataset_name)
    if expected is not None:
        for split in ("train", "test"):
            have = len(bundle.split(split))
            if have != expected[split]:
                logger.warning(
                    "%s %s split has %d instances; published count is %d",
                    config.dataset_name, split, have, expected[split],
                )


def _render_prompts(config, bundle, template, provider, store) -> list[PromptRecord]:
    schema = bundle.schema
    test_ids = {inst.id for inst in bundle.test}
    if config.method in RAG_METHODS:
        overlap = sorted(set(store.ids) & test_ids)
        if overlap:
            raise LeakageError(f"store contains test-split ids: {overlap[:10]}")
        train_by_id = {inst.id: inst for inst in bundle.train}
        records = []
        for inst in bundle.test:
            query_vector = provider.embed(inst.sentence)
            results = emb.query_top_k(store, query_vector, config.k, query_id=inst.id)
            examples = []
            for result in results:
                if result.neighbor_id in test_ids:
                    raise LeakageError(
                        f"retrieved example {result.neighbor_id!r} is in the test split"
                    )
                example = train_by_id.get(result.neighbor_id)
                if example is None:
                    raise ValidationError(
                        f"store id {result.neighbor_id!r} not found in the train split"
                    )
                examples.append((example, example.gold_label))
            records.append(render_augmented(inst, examples, schema, template))
        return records
    return [render_simple_query(inst, schema, template) for inst in bundle.test]


def _dispatch(config, requests, endpoint, cache):
    """Issue requests with bounded parallelism; returns responses keyed by index.

    Requests are deduplicated by key so an identical prompt is never in
    flight twice; the seed only shuffles dispatch order.
    """
    limiter = llm.RateLimiter(config.requests_per_second)
    retry_policy = llm.RetryPolicy(attempts=config.retry_attempts, backoff_base=config.retry_backoff)
    unique: dict[str, llm.GenerationRequest] = {}
    for request in requests:
        unique.setdefault(request.request_key, request)
    keys = list(unique)
    random.Random(config.seed).shuffle(keys)
    by_key: dict[str, llm.GenerationResponse] = {}
    failure: TransportError | None = None
    workers = min(config.parallelism, max(1, len(keys)))
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {
            pool.submit(llm.cached_generate, cache, endpoint, unique[key], retry_policy, limiter): key
            for key in keys
        }
        for future in concurrent.futures.as_completed(futures):
            key = futures[future]
            try:
                by_key[key] = future.result()
            except TransportError as exc:
                failure = exc
                for pending in futures:
                    pending.cancel()
                break
    responses = {
        i: by_key[request.request_key]
        for i, request in enumerate(requests)
        if request.request_key in by_key
    }
    return responses, failure


def _write_predictions(path: Path, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row, ensure_ascii=False) + "\n")


def _prediction_rows(prompt_records, responses, normalizer):
    rows = []
    preds = []
    for i, record in enumerate(prompt_records):
        if i not in responses:
            continue
        answer = normalizer.normalize(responses[i].raw_text)
        preds.append(
            PredictionRecord(
                instance_id=record.instance_id,
                raw_text=responses[i].raw_text,
                normalized_label=answer.normalized_label,
                match_kind=answer.match_kind,
                scored_label=answer.scored_label,
            )
        )
        rows.append(
            {
                "instance_id": record.instance_id,
                "prompt_hash": hashlib.sha256(record.prompt_text.encode("utf-8")).hexdigest(),
                "raw_text": responses[i].raw_text,
                "normalized_label": answer.normalized_label,
                "match_kind": answer.match_kind,
                "scored_label": answer.scored_label,
            }
        )
    return rows, preds


def run_experiment(
    config: ExperimentConfig,
    endpoint: llm.GenerationEndpoint | None = None,
    embed_provider: emb.EmbeddingProvider | None = None,
) -> RunManifest:
    """Execute one configured experiment over the bundle's test split."""
    config.validate()
    started_at = _utcnow()
    bundle = load_bundle(config.bundle_path)
    if not bundle.test:
        raise ConfigError(f"bundle {config.bundle_path!r} has an empty test split")
    _check_dataset_rules(config, bundle)
    template = _select_template(config)
    normalizer = Normalizer(bundle.schema, policy_from_name(config.normalization_policy))

    store = None
    provider = None
    if config.method in RAG_METHODS:
        provider = embed_provider or emb.make_embedding_provider(
            config.embedding_endpoint, config.embedding_model_id
        )
        store = emb.load_store(config.store_path)
        expected = provider.expected_fingerprint(store.dimension)
        if store.provider_fingerprint != expected:
            raise ConfigError(
                f"store fingerprint {store.provider_fingerprint!r} does not match the "
                f"configured embedding endpoint ({expected!r})"
            )

    prompt_records = _render_prompts(config, bundle, template, provider, store)

    requests = [
        llm.GenerationRequest(
            model_id=config.generation_model_id,
            prompt=record.prompt_text,
            max_new_tokens=config.max_new_tokens,
            temperature=config.temperature,
            stop_sequences=config.stop,
        )
        for record in prompt_records
    ]
    # Exhaustive collision check: one key, one request tuple.
    by_key: dict[str, llm.GenerationRequest] = {}
    for request in requests:
        held = by_key.setdefault(request.request_key, request)
        if held is not request and held != request:
            raise ValidationError(f"request key collision on {request.request_key}")

    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cache = llm.ResponseCache(config.resolved_cache_path())
    endpoint = endpoint or llm.make_generation_endpoint(config.generation_endpoint)

    responses, failure = _dispatch(config, requests, endpoint, cache)
    hits = sum(1 for r in responses.values() if r.from_cache)
    misses = len(responses) - hits

    predictions_path = out_dir / PREDICTIONS_FILENAME
    rows, preds = _prediction_rows(prompt_records, responses, normalizer)
    _write_predictions(predictions_path, rows)

    if failure is not None:
        manifest = RunManifest(
            config=config_snapshot(config),
            dataset_counts=bundle.counts(),
            store_fingerprint=store.provider_fingerprint if store else None,
            template_sha256=_template_sha256(template),
            started_at=started_at,
            finished_at=_utcnow(),
            cache_hits=hits,
            cache_misses=misses,
            unparseable_count=0,
            total=len(rows),
            partial=True,
            metrics={},
            predictions_path=str(predictions_path),
        )
        manifest.save(out_dir / MANIFEST_FILENAME)
        raise TransportError(
            f"run aborted after {len(rows)} of {len(prompt_records)} predictions "
            f"(partial outputs persisted, resume to continue): {failure}"
        ) from failure

    golds = {inst.id: inst.gold_label for inst in bundle.test}
    reports = {
        metrics_mod.MODE_POSITIVE: metrics_mod.score_positive_class(preds, golds, bundle.schema),
        metrics_mod.MODE_ALL: metrics_mod.score_all_class(preds, golds, bundle.schema),
    }
    manifest = RunManifest(
        config=config_snapshot(config),
        dataset_counts=bundle.counts(),
        store_fingerprint=store.provider_fingerprint if store else None,
        template_sha256=_template_sha256(template),
        started_at=started_at,
        finished_at=_utcnow(),
        cache_hits=hits,
        cache_misses=misses,
        unparseable_count=reports[metrics_mod.MODE_POSITIVE].unparseable_count,
        total=len(preds),
        partial=False,
        metrics=reports,
        predictions_path=str(predictions_path),
    )
    manifest.save(out_dir / MANIFEST_FILENAME)
    return manifest


def resume(
    manifest_path: str | Path,
    overrides: Mapping[str, str] | None = None,
    endpoint: llm.GenerationEndpoint | None = None,
    embed_provider: emb.EmbeddingProvider | None = None,
) -> RunManifest:
    """Re-run from a manifest; cached responses are never re-issued."""
    manifest = RunManifest.load(manifest_path)
    config = config_from_snapshot(manifest.config)
    if overrides:
        current = config_from_mapping({**manifest.config, **dict(overrides)})
        drift = []
        for f in fields(ExperimentConfig):
            old, new = getattr(config, f.name), getattr(current, f.name)
            if old != new:
                drift.append(f"{f.name}: manifest={old!r} requested={new!r}")
        if drift:
            raise ConfigDriftError("config drift vs manifest: " + "; ".join(drift))
    return run_experiment(config, endpoint=endpoint, embed_provider=embed_provider)
