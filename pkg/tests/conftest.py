"""Shared fixtures: synthetic bundles, label sets, mock endpoints."""

from __future__ import annotations

import json
import random

import pytest

from relex.data import RelationInstance, RelationSchema, assemble_bundle

# The published TACRED label set (41 relations + no_relation).
TACRED_LABELS = sorted(
    [
        "no_relation",
        "org:alternate_names",
        "org:city_of_headquarters",
        "org:country_of_headquarters",
        "org:dissolved",
        "org:founded",
        "org:founded_by",
        "org:member_of",
        "org:members",
        "org:number_of_employees/members",
        "org:parents",
        "org:political/religious_affiliation",
        "org:shareholders",
        "org:stateorprovince_of_headquarters",
        "org:subsidiaries",
        "org:top_members/employees",
        "org:website",
        "per:age",
        "per:alternate_names",
        "per:cause_of_death",
        "per:charges",
        "per:children",
        "per:cities_of_residence",
        "per:city_of_birth",
        "per:city_of_death",
        "per:countries_of_residence",
        "per:country_of_birth",
        "per:country_of_death",
        "per:date_of_birth",
        "per:date_of_death",
        "per:employee_of",
        "per:origin",
        "per:other_family",
        "per:parents",
        "per:religion",
        "per:schools_attended",
        "per:siblings",
        "per:spouse",
        "per:stateorprovince_of_birth",
        "per:stateorprovince_of_death",
        "per:stateorprovinces_of_residence",
        "per:title",
    ]
)

_SEMEVAL_BASES = [
    "Cause-Effect",
    "Component-Whole",
    "Content-Container",
    "Entity-Destination",
    "Entity-Origin",
    "Instrument-Agency",
    "Member-Collection",
    "Message-Topic",
    "Product-Producer",
]

# 9 directional pairs + Other = 19 labels.
SEMEVAL_LABELS = sorted(
    [f"{base}({d})" for base in _SEMEVAL_BASES for d in ("e1,e2", "e2,e1")] + ["Other"]
)


@pytest.fixture
def tacred_schema() -> RelationSchema:
    return RelationSchema(
        dataset_name="TACRED",
        labels=tuple(TACRED_LABELS),
        negative_label="no_relation",
        directional=False,
    )


@pytest.fixture
def semeval_schema() -> RelationSchema:
    return RelationSchema(
        dataset_name="SemEVAL",
        labels=tuple(SEMEVAL_LABELS),
        negative_label="Other",
        directional=True,
    )


def make_instance(
    instance_id: str,
    sentence: str,
    head: tuple[int, int],
    tail: tuple[int, int],
    label: str,
    split: str = "train",
    head_type: str | None = None,
    tail_type: str | None = None,
) -> RelationInstance:
    return RelationInstance(
        id=instance_id,
        tokens=tuple(sentence.split()),
        head_span=head,
        tail_span=tail,
        head_type=head_type,
        tail_type=tail_type,
        gold_label=label,
        split=split,
    )


FIXTURE_LABELS = ("born_in", "capital_of", "founded", "no_relation", "works_at")

_SUBJECTS = ("Ada", "Boris", "Clara", "Dmitri", "Elena", "Farid", "Grace", "Hugo")
_PLACES = ("Ankara", "Bogota", "Cairo", "Dublin", "Espoo", "Fresno", "Geneva", "Harare")
_ORGS = ("Acme", "Borealis", "Cobalt", "Dynamo", "Electra", "Fathom", "Gradient", "Helix")


def synthetic_instances(count: int, split: str, seed: int = 7) -> list[RelationInstance]:
    """Deterministic sentences over a small positive-heavy label set."""
    rng = random.Random(seed + (0 if split == "train" else 1000))
    instances = []
    for i in range(count):
        label = FIXTURE_LABELS[rng.randrange(len(FIXTURE_LABELS))]
        subject = rng.choice(_SUBJECTS)
        place = rng.choice(_PLACES)
        org = rng.choice(_ORGS)
        marker = f"{split}{i:04d}"
        sentence = f"{subject} of {org} visited {place} on day {marker} ."
        instances.append(
            make_instance(
                f"{split}-{i:04d}",
                sentence,
                head=(0, 1),
                tail=(4, 5),
                label=label,
                split=split,
            )
        )
    return instances


@pytest.fixture
def fixture_schema() -> RelationSchema:
    return RelationSchema(
        dataset_name="FIXTURE",
        labels=FIXTURE_LABELS,
        negative_label="no_relation",
        directional=False,
    )


@pytest.fixture
def small_bundle(fixture_schema):
    train = synthetic_instances(20, "train")
    test = synthetic_instances(10, "test")
    return assemble_bundle(fixture_schema, train, test)


def gold_fixture_for(instances) -> dict[str, str]:
    """Mock fixture mapping each instance's sentence to its gold label."""
    return {inst.sentence: inst.gold_label for inst in instances}


def write_json(path, payload) -> str:
    path.write_text(json.dumps(payload, ensure_ascii=False), encoding="utf-8")
    return str(path)
