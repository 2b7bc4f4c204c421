#!/usr/bin/env python3
"""Download SemEval-2010 Task 8 and place the two files the pipeline reads.

Writes data/semeval/TRAIN_FILE.TXT and data/semeval/TEST_FILE_FULL.TXT.
TACRED and its relabelings are licensed (LDC2018T24) and must be obtained
separately; point the acceptance suite at them with RELEX_TACRED_TRAIN etc.
"""

from __future__ import annotations

import io
import sys
import urllib.request
import zipfile
from pathlib import Path

MIRRORS = [
    "https://github.com/sahitya0000/Relation-Classification/raw/master/corpus/SemEval2010_task8_all_data.zip",
    "https://github.com/CrazilyCode/SemEval2010-Task8/raw/master/SemEval2010_task8_all_data.zip",
]

WANTED = {
    "SemEval2010_task8_training/TRAIN_FILE.TXT": "TRAIN_FILE.TXT",
    "SemEval2010_task8_testing_keys/TEST_FILE_FULL.TXT": "TEST_FILE_FULL.TXT",
}


def main() -> int:
    out_dir = Path(__file__).resolve().parents[1] / "data" / "semeval"
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = None
    for url in MIRRORS:
        try:
            print(f"fetching {url} ...")
            with urllib.request.urlopen(url, timeout=60) as response:
                payload = response.read()
            break
        except OSError as exc:
            print(f"  failed: {exc}")
    if payload is None:
        print("could not reach any mirror; download SemEval2010_task8_all_data.zip "
              "manually and extract TRAIN_FILE.TXT / TEST_FILE_FULL.TXT into data/semeval/")
        return 1
    archive = zipfile.ZipFile(io.BytesIO(payload))
    found = 0
    for name in archive.namelist():
        for suffix, target in WANTED.items():
            if name.endswith(suffix):
                (out_dir / target).write_bytes(archive.read(name))
                print(f"wrote {out_dir / target}")
                found += 1
    if found != len(WANTED):
        print("archive did not contain the expected files")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
