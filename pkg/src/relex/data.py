"""Benchmark dataset loaders and the canonical instance model.

Two input families are supported: the LDC TACRED JSON layout (also used by
the TACREV / Re-TACRED relabelings) and the SemEval-2010 Task 8 text format
with inline ``<e1>``/``<e2>`` entity markers.  Everything downstream works on
the canonical :class:`RelationInstance` JSONL, one object per line with the
fixed key order ``id, tokens, head_start, head_end, tail_start, tail_end,
head_type, tail_type, gold_label, split``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from relex.errors import ParseError, ValidationError

SPLITS = ("train", "test", "prompt")

TACRED_FAMILY = ("TACRED", "TACREV", "Re-TACRED")
NAMED_DATASETS = TACRED_FAMILY + ("SemEVAL",)

# Published split sizes and label-set cardinalities for the four benchmarks.
EXPECTED_COUNTS = {
    "TACRED": {"train": 68124, "test": 15509, "prompt": 22631, "relations": 42},
    "TACREV": {"train": 68124, "test": 15509, "prompt": 22631, "relations": 42},
    "Re-TACRED": {"train": 58465, "test": 13418, "prompt": 19584, "relations": 40},
    "SemEVAL": {"train": 8000, "test": 2717, "prompt": 8000, "relations": 19},
}

NEGATIVE_LABELS = {
    "TACRED": "no_relation",
    "TACREV": "no_relation",
    "Re-TACRED": "no_relation",
    "SemEVAL": "Other",
}

DEFAULT_NEGATIVE_LABEL = "no_relation"

_JSONL_KEYS = (
    "id",
    "tokens",
    "head_start",
    "head_end",
    "tail_start",
    "tail_end",
    "head_type",
    "tail_type",
    "gold_label",
    "split",
)


@dataclass(frozen=True)
class RelationInstance:
    """One annotated sentence with head/tail entity spans.

    Spans are half-open token index intervals [start, end).
    """

    id: str
    tokens: tuple[str, ...]
    head_span: tuple[int, int]
    tail_span: tuple[int, int]
    head_type: str | None
    tail_type: str | None
    gold_label: str
    split: str

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValidationError(f"instance {self.id!r}: unknown split {self.split!r}")
        if not self.tokens:
            raise ValidationError(f"instance {self.id!r}: empty token list")
        for name, (start, end) in (("head", self.head_span), ("tail", self.tail_span)):
            if not (0 <= start < end <= len(self.tokens)):
                raise ValidationError(
                    f"instance {self.id!r}: {name}_span [{start}, {end}) out of range "
                    f"for {len(self.tokens)} tokens"
                )

    @property
    def sentence(self) -> str:
        return " ".join(self.tokens)

    @property
    def head_text(self) -> str:
        return " ".join(self.tokens[self.head_span[0] : self.head_span[1]])

    @property
    def tail_text(self) -> str:
        return " ".join(self.tokens[self.tail_span[0] : self.tail_span[1]])


@dataclass(frozen=True)
class RelationSchema:
    """A dataset's closed label set with its designated negative label."""

    dataset_name: str
    labels: tuple[str, ...]
    negative_label: str
    directional: bool

    def __post_init__(self):
        if len(set(self.labels)) != len(self.labels):
            dupes = sorted({l for l in self.labels if self.labels.count(l) > 1})
            raise ValidationError(f"schema {self.dataset_name!r}: duplicate labels {dupes}")
        if self.negative_label not in self.labels:
            raise ValidationError(
                f"schema {self.dataset_name!r}: negative label {self.negative_label!r} "
                "not in label set"
            )
        expected = EXPECTED_COUNTS.get(self.dataset_name)
        if expected is not None and len(self.labels) != expected["relations"]:
            raise ValidationError(
                f"schema {self.dataset_name!r}: {len(self.labels)} labels, "
                f"published count is {expected['relations']}"
            )

    @property
    def label_set(self) -> frozenset[str]:
        return frozenset(self.labels)


@dataclass(frozen=True)
class DatasetBundle:
    """Validated splits of one dataset plus its schema."""

    schema: RelationSchema
    train: tuple[RelationInstance, ...]
    test: tuple[RelationInstance, ...]
    prompt: tuple[RelationInstance, ...]

    def split(self, name: str) -> tuple[RelationInstance, ...]:
        if name not in SPLITS:
            raise ValueError(f"unknown split {name!r}")
        return getattr(self, name)

    def counts(self) -> dict[str, int]:
        return {name: len(getattr(self, name)) for name in SPLITS}


def load_tacred_family(
    path: str | Path,
    dataset_name: str,
    split: str = "train",
    schema: RelationSchema | None = None,
) -> list[RelationInstance]:
    """Parse an LDC-layout TACRED JSON file into instances.

    The file is a JSON array of objects carrying ``token``, inclusive
    ``subj_*``/``obj_*`` span indices, entity types, and ``relation``.
    Subject maps to head, object to tail; inclusive ends become half-open.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        rows = json.loads(text)
    except json.JSONDecodeError as exc:
        byte_offset = len(text[: exc.pos].encode("utf-8"))
        raise ParseError(f"{path}: malformed JSON at byte offset {byte_offset}: {exc.msg}") from exc
    if not isinstance(rows, list):
        raise ParseError(f"{path}: expected a JSON array, got {type(rows).__name__}")

    instances = []
    seen_ids = set()
    for index, row in enumerate(rows):
        if not isinstance(row, dict):
            raise ParseError(f"{path}: element {index} is not an object")
        try:
            instance = RelationInstance(
                id=str(row["id"]),
                tokens=tuple(str(t) for t in row["token"]),
                head_span=(int(row["subj_start"]), int(row["subj_end"]) + 1),
                tail_span=(int(row["obj_start"]), int(row["obj_end"]) + 1),
                head_type=row.get("subj_type"),
                tail_type=row.get("obj_type"),
                gold_label=str(row["relation"]),
                split=split,
            )
        except KeyError as exc:
            raise ParseError(f"{path}: element {index} missing field {exc.args[0]!r}") from exc
        if instance.id in seen_ids:
            raise ValidationError(f"{path}: duplicate instance id {instance.id!r}")
        seen_ids.add(instance.id)
        if schema is not None and instance.gold_label not in schema.label_set:
            raise ValidationError(
                f"{path}: instance {instance.id!r} has unknown relation "
                f"{instance.gold_label!r} for dataset {schema.dataset_name}"
            )
        instances.append(instance)
    return instances


_SENTENCE_LINE = re.compile(r"^(\d+)\t\"(.*)\"\s*$")
_E1 = re.compile(r"<e1>(.*?)</e1>", re.DOTALL)
_E2 = re.compile(r"<e2>(.*?)</e2>", re.DOTALL)
_SENTENCE_FINAL = (".", "!", "?")


def _tokenize_marked(sentence: str, source: str) -> tuple[tuple[str, ...], tuple[int, int], tuple[int, int]]:
    """Tokenize a marker-bearing sentence, returning tokens and both spans.

    Whitespace tokenization is applied per segment (before/inside/between/
    after the markers) so entity boundaries always fall on token boundaries;
    a sentence-final ``.``, ``!`` or ``?`` attached to the last token is
    split off unless that token lies inside an entity span.
    """
    for tag in ("<e1>", "</e1>", "<e2>", "</e2>"):
        if sentence.count(tag) != 1:
            raise ParseError(f"{source}: marker {tag} missing or repeated")
    m1, m2 = _E1.search(sentence), _E2.search(sentence)
    if m1 is None or m2 is None:
        raise ParseError(f"{source}: entity markers not well-formed")
    first, second = (m1, m2) if m1.start() < m2.start() else (m2, m1)
    if first.end() > second.start():
        raise ParseError(f"{source}: overlapping entity markers")

    segments = [
        (sentence[: first.start()], None),
        (first.group(1), "first"),
        (sentence[first.end() : second.start()], None),
        (second.group(1), "second"),
        (sentence[second.end() :], None),
    ]
    tokens: list[str] = []
    spans: dict[str, tuple[int, int]] = {}
    for text, role in segments:
        part = text.split()
        if role is not None:
            if not part:
                raise ParseError(f"{source}: empty entity marker")
            spans[role] = (len(tokens), len(tokens) + len(part))
        tokens.extend(part)

    last = len(tokens) - 1
    in_entity = any(lo <= last < hi for lo, hi in spans.values())
    if tokens and not in_entity and len(tokens[last]) > 1 and tokens[last].endswith(_SENTENCE_FINAL):
        tokens[last], mark = tokens[last][:-1], tokens[last][-1]
        tokens.append(mark)

    head = spans["first"] if m1.start() < m2.start() else spans["second"]
    tail = spans["second"] if m1.start() < m2.start() else spans["first"]
    return tuple(tokens), head, tail


def load_semeval(path: str | Path, split: str = "train") -> list[RelationInstance]:
    """Parse a SemEval-2010 Task 8 file (numbered sentence + relation line).

    Entity markers are stripped into token spans; the directional relation
    string is kept verbatim.  ``Comment:`` lines are ignored.
    """
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    instances = []
    seen_ids = set()
    i = 0
    while i < len(lines):
        line = lines[i].strip("\ufeff").rstrip("\r")
        if not line.strip():
            i += 1
            continue
        match = _SENTENCE_LINE.match(line)
        if match is None:
            raise ParseError(f"{path}:{i + 1}: expected a numbered sentence line")
        sent_id, marked = match.group(1), match.group(2)
        if i + 1 >= len(lines):
            raise ParseError(f"{path}:{i + 1}: relation line absent for sentence {sent_id}")
        relation = lines[i + 1].strip()
        if not relation or relation.startswith("Comment:") or _SENTENCE_LINE.match(relation):
            raise ParseError(f"{path}:{i + 2}: relation line absent for sentence {sent_id}")
        tokens, head, tail = _tokenize_marked(marked, f"{path}:{i + 1}")
        if sent_id in seen_ids:
            raise ValidationError(f"{path}: duplicate sentence id {sent_id}")
        seen_ids.add(sent_id)
        instances.append(
            RelationInstance(
                id=sent_id,
                tokens=tokens,
                head_span=head,
                tail_span=tail,
                head_type=None,
                tail_type=None,
                gold_label=relation,
                split=split,
            )
        )
        i += 2
        if i < len(lines) and lines[i].strip().startswith("Comment:"):
            i += 1
    return instances


def derive_schema(
    instances: Sequence[RelationInstance],
    dataset_name: str,
    negative_label: str | None = None,
    directional: bool | None = None,
) -> RelationSchema:
    """Derive a schema from observed gold labels plus dataset conventions.

    For the four named benchmarks the negative label and directionality are
    fixed by convention and the label count is checked against the published
    figure.  The negative label is injected if no instance carries it.
    """
    if not instances:
        raise ValidationError("cannot derive a schema from an empty instance list")
    if negative_label is None:
        negative_label = NEGATIVE_LABELS.get(dataset_name, DEFAULT_NEGATIVE_LABEL)
    if directional is None:
        directional = dataset_name == "SemEVAL"
    labels = sorted({inst.gold_label for inst in instances} | {negative_label})
    expected = EXPECTED_COUNTS.get(dataset_name)
    if expected is not None and len(labels) != expected["relations"]:
        raise ValidationError(
            f"{dataset_name}: derived {len(labels)} labels, published count is "
            f"{expected['relations']}"
        )
    return RelationSchema(
        dataset_name=dataset_name,
        labels=tuple(labels),
        negative_label=negative_label,
        directional=directional,
    )


def assemble_bundle(
    schema: RelationSchema,
    train: Iterable[RelationInstance],
    test: Iterable[RelationInstance],
    prompt: Iterable[RelationInstance] = (),
) -> DatasetBundle:
    """Validate splits against the schema and check id disjointness."""
    splits = {"train": tuple(train), "test": tuple(test), "prompt": tuple(prompt)}
    if schema.dataset_name == "SemEVAL" and splits["prompt"]:
        raise ValidationError("SemEVAL provides no additional split; prompt split must be empty")
    owner: dict[str, str] = {}
    duplicates = []
    for name, instances in splits.items():
        within = set()
        for inst in instances:
            if inst.split != name:
                raise ValidationError(
                    f"instance {inst.id!r} carries split {inst.split!r} but was "
                    f"assigned to {name!r}"
                )
            if inst.gold_label not in schema.label_set:
                raise ValidationError(
                    f"instance {inst.id!r}: label {inst.gold_label!r} not in "
                    f"{schema.dataset_name} schema"
                )
            if inst.id in within:
                raise ValidationError(f"duplicate id {inst.id!r} within split {name!r}")
            within.add(inst.id)
            if inst.id in owner:
                duplicates.append(f"{inst.id!r} in both {owner[inst.id]} and {name}")
            else:
                owner[inst.id] = name
    if duplicates:
        raise ValidationError("instance ids shared across splits: " + "; ".join(duplicates))
    return DatasetBundle(schema=schema, **splits)


def write_instances_jsonl(path: str | Path, instances: Iterable[RelationInstance]) -> int:
    """Write canonical instance JSONL; returns the number of lines written."""
    count = 0
    with open(path, "w", encoding="utf-8") as handle:
        for inst in instances:
            row = {
                "id": inst.id,
                "tokens": list(inst.tokens),
                "head_start": inst.head_span[0],
                "head_end": inst.head_span[1],
                "tail_start": inst.tail_span[0],
                "tail_end": inst.tail_span[1],
                "head_type": inst.head_type,
                "tail_type": inst.tail_type,
                "gold_label": inst.gold_label,
                "split": inst.split,
            }
            handle.write(json.dumps(row, ensure_ascii=False) + "\n")
            count += 1
    return count


def read_instances_jsonl(path: str | Path) -> list[RelationInstance]:
    path = Path(path)
    instances = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: malformed JSON: {exc.msg}") from exc
            missing = [key for key in _JSONL_KEYS if key not in row]
            if missing:
                raise ParseError(f"{path}:{lineno}: missing fields {missing}")
            instances.append(
                RelationInstance(
                    id=row["id"],
                    tokens=tuple(row["tokens"]),
                    head_span=(row["head_start"], row["head_end"]),
                    tail_span=(row["tail_start"], row["tail_end"]),
                    head_type=row["head_type"],
                    tail_type=row["tail_type"],
                    gold_label=row["gold_label"],
                    split=row["split"],
                )
            )
    return instances


def save_bundle(bundle: DatasetBundle, out_dir: str | Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    schema = bundle.schema
    (out_dir / "schema.json").write_text(
        json.dumps(
            {
                "dataset_name": schema.dataset_name,
                "labels": list(schema.labels),
                "negative_label": schema.negative_label,
                "directional": schema.directional,
            },
            ensure_ascii=False,
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    for name in SPLITS:
        write_instances_jsonl(out_dir / f"{name}.jsonl", bundle.split(name))


def load_bundle(bundle_dir: str | Path) -> DatasetBundle:
    bundle_dir = Path(bundle_dir)
    schema_path = bundle_dir / "schema.json"
    if not schema_path.exists():
        raise ParseError(f"{bundle_dir}: no schema.json; not an ingested bundle")
    raw = json.loads(schema_path.read_text(encoding="utf-8"))
    schema = RelationSchema(
        dataset_name=raw["dataset_name"],
        labels=tuple(raw["labels"]),
        negative_label=raw["negative_label"],
        directional=raw["directional"],
    )
    splits = {}
    for name in SPLITS:
        path = bundle_dir / f"{name}.jsonl"
        splits[name] = read_instances_jsonl(path) if path.exists() else []
    return assemble_bundle(schema, splits["train"], splits["test"], splits["prompt"])
