"""Serving manifest: the bridge from a trained adapter to a generation endpoint.

The manifest names the model_id under which a serving layer must expose the
adapted model via the shared generation wire contract
(POST {model, prompt, max_new_tokens, temperature, stop} -> {text}).
"""

from __future__ import annotations

import json
import re
from pathlib import Path

from finetuner.train import ADAPTER_FILENAME, SNAPSHOT_FILENAME

MANIFEST_FILENAME = "serving_manifest.json"


class ManifestError(ValueError):
    pass


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "-", text).strip("-")


def export_serving_manifest(adapter_dir: str | Path) -> dict:
    adapter_dir = Path(adapter_dir)
    adapter_path = adapter_dir / ADAPTER_FILENAME
    snapshot_path = adapter_dir / SNAPSHOT_FILENAME
    for path in (adapter_path, snapshot_path):
        if not path.exists():
            raise ManifestError(f"missing adapter artifact {path}")
    snapshot = json.loads(snapshot_path.read_text(encoding="utf-8"))
    base_model_id = snapshot["base_model_id"]
    model_id = f"{_slug(Path(base_model_id).name)}+{_slug(adapter_dir.name)}"
    if not model_id:
        raise ManifestError("could not derive a non-empty model_id")
    manifest = {
        "base_model_id": base_model_id,
        "adapter_path": str(adapter_dir.resolve()),
        "model_id": model_id,
        "model_family": snapshot["model_family"],
    }
    (adapter_dir / MANIFEST_FILENAME).write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
    )
    return manifest
