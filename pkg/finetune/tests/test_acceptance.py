"""Secondary acceptance: Table-style config fidelity, training smoke, bridge."""

from __future__ import annotations

import json
import subprocess
import sys
import time
from pathlib import Path

import pytest

from finetuner.cli import main as finetune_main
from finetuner.config import FineTuneConfig
from finetuner.manifest import ManifestError, export_serving_manifest
from finetuner.train import smoothed, train_adapter

from conftest import LABELS


def _passed(name: str) -> None:
    print(f"[PASS] {name}")


class TestConfigFidelity:
    def test_emitted_snapshots_match_published_defaults(self, tmp_path):
        decoder = FineTuneConfig.for_family("decoder_only", "llama-like", "p.jsonl", str(tmp_path / "d"))
        decoder.save_snapshot(tmp_path / "decoder.json")
        snap = json.loads((tmp_path / "decoder.json").read_text(encoding="utf-8"))
        assert snap["learning_rate"] == 2e-4
        assert snap["batch_size"] == 4
        assert snap["epochs"] == 1
        assert snap["weight_decay"] == 0.001
        assert snap["lora_alpha"] == 16
        assert snap["lora_dropout"] == 0.1
        assert snap["lora_r"] == 64
        assert snap["quantization"] == "nf4"

        encdec = FineTuneConfig.for_family("encoder_decoder", "t5-like", "p.jsonl", str(tmp_path / "e"))
        encdec.save_snapshot(tmp_path / "encdec.json")
        snap = json.loads((tmp_path / "encdec.json").read_text(encoding="utf-8"))
        assert snap["learning_rate"] == 5e-5
        assert snap["batch_size"] == 8
        assert snap["epochs"] == 1
        assert snap["weight_decay"] is None
        assert snap["lora_alpha"] == 32
        assert snap["lora_dropout"] == 0.01
        assert snap["lora_r"] == 4
        assert snap["quantization"] == "nf4"
        _passed("config fidelity: snapshots match published per-family defaults field for field")


class TestTrainingSmoke:
    def test_fifty_steps_on_tiny_model(self, tiny_t5_dir, prompt_dataset_64, tmp_path):
        started = time.monotonic()
        config = FineTuneConfig.for_family(
            "encoder_decoder",
            tiny_t5_dir,
            prompt_dataset_64,
            str(tmp_path / "adapter"),
            max_steps=50,
            learning_rate=5e-3,  # tiny random-init base; published LR is for T5 Large
            seed=7,
        )
        result = train_adapter(config)
        assert result.steps == 50
        windows = smoothed(result.losses, window=10)
        assert windows[-1] < windows[0], f"loss did not decrease: {windows[0]:.4f} -> {windows[-1]:.4f}"
        assert result.base_hash_before == result.base_hash_after
        assert result.trainable_fraction < 0.05
        elapsed = time.monotonic() - started
        assert elapsed < 600.0, f"took {elapsed:.0f}s, budget 600s"
        _passed(
            "training smoke: 50 SFT steps, smoothed loss "
            f"{windows[0]:.3f}->{windows[-1]:.3f}, base hash unchanged, "
            f"trainable fraction {result.trainable_fraction:.3%} < 5%"
        )


class TestServingManifest:
    def test_valid_adapter_dir_exports_model_id(self, tiny_t5_dir, prompt_dataset_64, tmp_path):
        config = FineTuneConfig.for_family(
            "encoder_decoder", tiny_t5_dir, prompt_dataset_64, str(tmp_path / "adapter"), max_steps=2
        )
        train_adapter(config)
        manifest = export_serving_manifest(tmp_path / "adapter")
        assert manifest["model_id"]
        assert manifest["base_model_id"] == tiny_t5_dir
        assert Path(manifest["adapter_path"]).exists()
        reloaded = json.loads((tmp_path / "adapter" / "serving_manifest.json").read_text(encoding="utf-8"))
        assert reloaded == manifest

    def test_empty_dir_rejected(self, tmp_path):
        with pytest.raises(ManifestError, match="missing"):
            export_serving_manifest(tmp_path)


def _relex(args, cwd):
    proc = subprocess.run(
        [sys.executable, "-m", "relex.cli", *args],
        capture_output=True,
        text=True,
        cwd=cwd,
        timeout=120,
    )
    assert proc.returncode == 0, f"relex {args[0]} failed:\n{proc.stdout}\n{proc.stderr}"
    return proc.stdout


class TestBridgeIntegration:
    def test_manifest_model_id_drives_primary_pipeline(self, tiny_t5_dir, tmp_path):
        started = time.monotonic()
        # Benchmark-format fixture files for the primary's ingest CLI.
        def rows(prefix, count, offset=0):
            out = []
            for i in range(count):
                idx = offset + i
                out.append(
                    {
                        "id": f"{prefix}{idx:03d}",
                        "token": ["ada", "works", "in", "cairo", "office", str(idx), "."],
                        "subj_start": 0,
                        "subj_end": 0,
                        "obj_start": 3,
                        "obj_end": 3,
                        "subj_type": "PERSON",
                        "obj_type": "CITY",
                        "relation": LABELS[idx % len(LABELS)],
                    }
                )
            return out

        train_file = tmp_path / "train.json"
        test_file = tmp_path / "test.json"
        train_file.write_text(json.dumps(rows("tr", 16)), encoding="utf-8")
        test_file.write_text(json.dumps(rows("te", 8, offset=100)), encoding="utf-8")
        bundle_dir = tmp_path / "bundle"
        _relex(
            ["ingest", "--dataset", "BRIDGE", "--train", str(train_file), "--test", str(test_file),
             "--out", str(bundle_dir)],
            cwd=tmp_path,
        )

        # The prompting module's export feeds the trainer verbatim.
        prompts_path = tmp_path / "prompts.jsonl"
        _relex(
            ["gen-prompts", "--bundle", str(bundle_dir), "--split", "train", "--out", str(prompts_path)],
            cwd=tmp_path,
        )

        adapter_dir = tmp_path / "adapter"
        rc = finetune_main(
            [
                "--config", _write_ft_config(tmp_path, tiny_t5_dir, prompts_path, adapter_dir),
                "--set", "max_steps=5",
                "--export-manifest",
            ]
        )
        assert rc == 0
        manifest = json.loads((adapter_dir / "serving_manifest.json").read_text(encoding="utf-8"))
        model_id = manifest["model_id"]
        assert model_id

        # Mock-serve the adapter under exactly that model id.
        gold = {}
        for row in json.loads(test_file.read_text(encoding="utf-8")):
            sentence = " ".join(row["token"])
            gold[sentence] = row["relation"]
        fixture_path = tmp_path / "served.json"
        fixture_path.write_text(json.dumps({"__model__": model_id, **gold}), encoding="utf-8")

        run_config = tmp_path / "run.conf"
        out_dir = tmp_path / "run-out"
        run_config.write_text(
            "\n".join(
                [
                    "dataset_name = BRIDGE",
                    f"bundle_path = {bundle_dir}",
                    "method = finetuned",
                    f"generation_endpoint = mock:{fixture_path}",
                    f"generation_model_id = {model_id}",
                    f"output_dir = {out_dir}",
                    "retry_backoff = 0.0",
                ]
            ),
            encoding="utf-8",
        )
        _relex(["run", "--config", str(run_config)], cwd=tmp_path)

        run_manifest = json.loads((out_dir / "manifest.json").read_text(encoding="utf-8"))
        assert run_manifest["config"]["generation_model_id"] == model_id
        assert run_manifest["metrics"]["positive_class"]["f1"] == 1.0
        assert run_manifest["unparseable_count"] == 0
        elapsed = time.monotonic() - started
        assert elapsed < 60.0, f"took {elapsed:.0f}s, budget 60s"
        _passed(f"bridge: serving manifest model_id {model_id!r} drove the end-to-end run, F1=1.0")


def _write_ft_config(tmp_path, base_dir, prompts_path, adapter_dir) -> str:
    path = tmp_path / "ft.json"
    path.write_text(
        json.dumps(
            {
                "base_model_id": base_dir,
                "model_family": "encoder_decoder",
                "prompt_dataset_path": str(prompts_path),
                "output_dir": str(adapter_dir),
            }
        ),
        encoding="utf-8",
    )
    return str(path)
