"""Map raw generated text onto exactly one schema label.

The matching cascade is: exact (verbatim label), canonical (equal after
canonicalization), containment (the canonical form of exactly-or-more
labels appears inside the canonical output; the longest canonical label
wins, remaining ties broken by schema label order), else UNPARSEABLE.
An UNPARSEABLE output is scored as the schema's negative label so that
scoring stays total; the UNPARSEABLE count is surfaced separately.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass

from relex.data import RelationSchema

UNPARSEABLE = "UNPARSEABLE"

MATCH_EXACT = "exact"
MATCH_CANONICAL = "canonical"
MATCH_CONTAINMENT = "containment"
MATCH_UNPARSEABLE = "unparseable"

_DIR_E12 = re.compile(r"\(\s*e1\s*,\s*e2\s*\)")
_DIR_E21 = re.compile(r"\(\s*e2\s*,\s*e1\s*\)")
_SEPARATOR_RUN = re.compile(r"[\s\-_:/]+")
# Underscore counts as strippable at the edges: labels never start or end with one.
_EDGE_PUNCT = re.compile(r"^[\W_]+|[\W_]+$")


def canonicalize(text: str) -> str:
    """Lowercased, separator-collapsed form; direction markers become suffixes.

    ``(e1,e2)`` / ``(e2,e1)`` are rewritten to ``_e1e2`` / ``_e2e1`` before
    any punctuation handling so directionality is never lost.
    """
    t = unicodedata.normalize("NFKC", text).lower()
    t = _DIR_E12.sub("_e1e2", t)
    t = _DIR_E21.sub("_e2e1", t)
    t = _SEPARATOR_RUN.sub("_", t)
    return _EDGE_PUNCT.sub("", t)


@dataclass(frozen=True)
class NormalizationPolicy:
    name: str = "containment-cascade"
    use_containment: bool = True
    # None falls back to the schema's negative label.
    unparseable_fallback: str | None = None


_POLICIES = {
    "containment-cascade": NormalizationPolicy(),
    "strict": NormalizationPolicy(name="strict", use_containment=False),
}


def policy_from_name(name: str) -> NormalizationPolicy:
    if name not in _POLICIES:
        raise ValueError(f"unknown normalization policy {name!r}; have {sorted(_POLICIES)}")
    return _POLICIES[name]


@dataclass(frozen=True)
class PredictionRecord:
    instance_id: str
    raw_text: str
    normalized_label: str
    match_kind: str
    scored_label: str


@dataclass(frozen=True)
class NormalizedAnswer:
    normalized_label: str
    match_kind: str
    scored_label: str


class Normalizer:
    """Per-schema normalizer with precomputed canonical label forms."""

    def __init__(self, schema: RelationSchema, policy: NormalizationPolicy | None = None):
        if not schema.labels:
            raise ValueError("schema has no labels")
        self.schema = schema
        self.policy = policy or NormalizationPolicy()
        self._labels = schema.labels
        self._label_set = schema.label_set
        self._canon = {label: canonicalize(label) for label in schema.labels}
        fallback = self.policy.unparseable_fallback or schema.negative_label
        if fallback not in self._label_set:
            raise ValueError(f"unparseable fallback {fallback!r} not in schema")
        self._fallback = fallback

    def normalize(self, raw: str) -> NormalizedAnswer:
        if raw in self._label_set:
            return NormalizedAnswer(raw, MATCH_EXACT, raw)
        canon_raw = canonicalize(raw)
        if canon_raw:
            canonical = [l for l in self._labels if self._canon[l] and self._canon[l] == canon_raw]
            if len(canonical) == 1:
                return NormalizedAnswer(canonical[0], MATCH_CANONICAL, canonical[0])
            if self.policy.use_containment:
                contained = [l for l in self._labels if self._canon[l] and self._canon[l] in canon_raw]
                if contained:
                    best = min(
                        contained,
                        key=lambda l: (-len(self._canon[l]), self._labels.index(l)),
                    )
                    return NormalizedAnswer(best, MATCH_CONTAINMENT, best)
        return NormalizedAnswer(UNPARSEABLE, MATCH_UNPARSEABLE, self._fallback)


def normalize_output(
    raw: str, schema: RelationSchema, policy: NormalizationPolicy | None = None
) -> NormalizedAnswer:
    return Normalizer(schema, policy).normalize(raw)
