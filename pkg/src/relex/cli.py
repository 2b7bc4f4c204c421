"""Command line interface: ingest, gen-prompts, build-index, run, resume, eval, report, serve."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from relex import data as data_mod
from relex import embeddings as emb
from relex import metrics as metrics_mod
from relex.errors import ConfigError, RelexError
from relex.normalize import Normalizer, PredictionRecord, policy_from_name
from relex.prompts import build_prompt_dataset, load_template, write_prompt_records_jsonl
from relex.report import emit_report
from relex.runner import RunManifest, load_config, resume, run_experiment


def _load_split(path: str, dataset_name: str, split: str):
    if dataset_name == "SemEVAL":
        return data_mod.load_semeval(path, split=split)
    return data_mod.load_tacred_family(path, dataset_name, split=split)


def cmd_ingest(args) -> int:
    train = _load_split(args.train, args.dataset, "train")
    test = _load_split(args.test, args.dataset, "test")
    prompt = _load_split(args.prompt, args.dataset, "prompt") if args.prompt else []
    schema = data_mod.derive_schema(train + test + prompt, args.dataset)
    bundle = data_mod.assemble_bundle(schema, train, test, prompt)
    expected = data_mod.EXPECTED_COUNTS.get(args.dataset)
    for split, count in bundle.counts().items():
        note = ""
        if expected and (split != "prompt" or count):
            published = expected[split]
            note = " (matches published count)" if count == published else f" (published: {published})"
        print(f"{split}: {count} instances{note}")
    print(f"labels: {len(schema.labels)} (negative: {schema.negative_label})")
    data_mod.save_bundle(bundle, args.out)
    print(f"bundle written to {args.out}")
    return 0


def cmd_gen_prompts(args) -> int:
    bundle = data_mod.load_bundle(args.bundle)
    instances = bundle.split(args.split)
    if args.split == "prompt" and not instances and bundle.schema.dataset_name == "SemEVAL":
        raise ConfigError(
            "SemEVAL has no prompt split; pass --split train to build its prompt dataset"
        )
    template = load_template(args.template) if args.template else None
    records = build_prompt_dataset(instances, bundle.schema, template)
    count = write_prompt_records_jsonl(args.out, records)
    print(f"{count} prompt records written to {args.out}")
    return 0


def cmd_build_index(args) -> int:
    bundle = data_mod.load_bundle(args.bundle)
    provider = emb.make_embedding_provider(args.provider, args.model)
    store = emb.build_store(bundle.split(args.split), provider)
    emb.save_store(store, args.out)
    print(f"store with {len(store)} vectors (d={store.dimension}) written to {args.out}")
    print(f"fingerprint: {store.provider_fingerprint}")
    return 0


def _overrides(pairs) -> dict[str, str]:
    overrides = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        overrides[key.strip()] = value.strip()
    return overrides


def cmd_run(args) -> int:
    overrides = _overrides(args.set)
    if args.allow_train_overlap_prompting:
        overrides["allow_train_overlap_prompting"] = "true"
    config = load_config(args.config, overrides)
    manifest = run_experiment(config)
    _print_manifest_summary(manifest)
    return 0


def cmd_resume(args) -> int:
    manifest = resume(args.manifest, _overrides(args.set))
    _print_manifest_summary(manifest)
    return 0


def _print_manifest_summary(manifest: RunManifest) -> None:
    print(f"predictions: {manifest.predictions_path}")
    print(f"cache hits/misses: {manifest.cache_hits}/{manifest.cache_misses}")
    for mode, report in manifest.metrics.items():
        print(
            f"{mode}: P={100 * report.precision:.2f} R={100 * report.recall:.2f} "
            f"F1={100 * report.f1:.2f} (unparseable: {report.unparseable_count})"
        )


def cmd_eval(args) -> int:
    bundle = data_mod.load_bundle(args.bundle)
    golds = {inst.id: inst.gold_label for inst in bundle.test}
    normalizer = Normalizer(bundle.schema, policy_from_name(args.policy))
    preds = []
    with open(args.preds, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            answer = normalizer.normalize(row["raw_text"])
            preds.append(
                PredictionRecord(
                    instance_id=row["instance_id"],
                    raw_text=row["raw_text"],
                    normalized_label=answer.normalized_label,
                    match_kind=answer.match_kind,
                    scored_label=answer.scored_label,
                )
            )
    scorer = (
        metrics_mod.score_positive_class if args.mode == "positive_class" else metrics_mod.score_all_class
    )
    report = scorer(preds, golds, bundle.schema)
    print(metrics_mod.format_report_text(report), end="")
    if args.out:
        Path(args.out).write_text(metrics_mod.report_to_json(report) + "\n", encoding="utf-8")
        print(f"JSON report written to {args.out}")
    return 0


def cmd_report(args) -> int:
    manifests = [RunManifest.load(path) for path in args.manifest]
    txt_path, csv_path = emit_report(manifests, args.out)
    print(Path(txt_path).read_text(encoding="utf-8"), end="")
    print(f"written: {txt_path}, {csv_path}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from relex.client import MockEndpoint
    from relex.server import create_app

    generation = MockEndpoint.from_file(args.gen_fixture) if args.gen_fixture else None
    provider = emb.make_embedding_provider(args.embed_provider) if args.embed_provider else None
    app = create_app(generation=generation, embedding_provider=provider)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="relex", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse benchmark files into a validated bundle")
    p.add_argument("--dataset", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--prompt")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("gen-prompts", help="render a split into a prompt dataset JSONL")
    p.add_argument("--bundle", required=True)
    p.add_argument("--split", default="prompt", choices=data_mod.SPLITS)
    p.add_argument("--template")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_prompts)

    p = sub.add_parser("build-index", help="embed a split into a binary vector store")
    p.add_argument("--bundle", required=True)
    p.add_argument("--split", default="train", choices=data_mod.SPLITS)
    p.add_argument("--provider", required=True, help="'test' or an embedding endpoint URL")
    p.add_argument("--model", default="", help="embedding model id for http providers")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_index)

    p = sub.add_parser("run", help="run one configured experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    p.add_argument("--allow-train-overlap-prompting", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("resume", help="resume a run from its manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=cmd_resume)

    p = sub.add_parser("eval", help="re-score a predictions file against a bundle")
    p.add_argument("--preds", required=True)
    p.add_argument("--bundle", required=True)
    p.add_argument("--mode", default="positive_class", choices=["positive_class", "all_class"])
    p.add_argument("--policy", default="containment-cascade")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="aggregate manifests into report.txt/report.csv")
    p.add_argument("--manifest", action="append", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve", help="serve the generation/embedding wire contracts")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--gen-fixture", help="mock generation fixture JSON file")
    p.add_argument("--embed-provider", help="'test' to serve the deterministic provider")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (RelexError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
