"""Dialogue corpora: ingest, sentence segmentation, label scheme, splits, agreement.

Corpus files are UTF-8 JSON lines, one utterance per line:

    {"session_id": "s01", "seq": 3, "role": "tutor",
     "text": "Oh, I get it. Thanks!",
     "labels": [{"sentence_index": 0, "tag": "Understanding"}]}

``labels`` is optional; ``sentence_index`` refers to the position of the
sentence after segmentation and symbol filtering.  ``export_corpus``
emits the same field names, so export -> ingest round-trips to a
structurally equal corpus.

Scheme files are JSON: ``{"version": "...", "tags": [{"name": "...",
"role": "tutor"|"student"|"both"}, ...]}``.  Tag declaration order is
stable and defines the class index used by the classifier.
"""
from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ROLES = ("tutor", "student")
TAG_ROLES = ("tutor", "student", "both")

# Kept verbatim by the symbol filter even though it matches the
# alphanumeric rule anyway: it is a first-class labelable sentence.
IMAGE_TOKEN = "[Image]"


class CorpusError(ValueError):
    """Malformed corpus data, bad labels, or scheme violations."""


@dataclass(frozen=True)
class SchemeTag:
    name: str
    role: str = "both"


@dataclass(frozen=True)
class LabelScheme:
    """Ordered tag list; order defines class indices 0..C-1."""

    tags: tuple[SchemeTag, ...]
    version: str = "v1"
    _index: dict = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        if not self.tags:
            raise CorpusError("scheme has no tags")
        names = [t.name for t in self.tags]
        if len(set(names)) != len(names):
            raise CorpusError("scheme tag names are not unique")
        for t in self.tags:
            if t.role not in TAG_ROLES:
                raise CorpusError(f"tag {t.name!r} has invalid role {t.role!r}")
        object.__setattr__(self, "_index", {t.name: i for i, t in enumerate(self.tags)})

    @property
    def num_classes(self) -> int:
        return len(self.tags)

    def names(self) -> list[str]:
        return [t.name for t in self.tags]

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise CorpusError(f"unknown tag {name!r}") from None

    def role_of(self, name: str) -> str:
        return self.tags[self.index(name)].role

    def allows(self, name: str, role: str) -> bool:
        tag_role = self.role_of(name)
        return tag_role == "both" or tag_role == role

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "tags": [{"name": t.name, "role": t.role} for t in self.tags],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LabelScheme":
        try:
            tags = tuple(SchemeTag(t["name"], t.get("role", "both")) for t in d["tags"])
            return cls(tags=tags, version=str(d.get("version", "v1")))
        except (KeyError, TypeError) as exc:
            raise CorpusError(f"malformed scheme: {exc}") from exc


def load_scheme(path: str | Path) -> LabelScheme:
    with open(path, encoding="utf-8") as fh:
        return LabelScheme.from_dict(json.load(fh))


def save_scheme(scheme: LabelScheme, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scheme.to_dict(), fh, ensure_ascii=False, indent=2)
        fh.write("\n")


def default_scheme() -> LabelScheme:
    """Second-level dialogue-act scheme: the seven published student tags
    plus named placeholders for the remaining tags of the 31-tag scheme."""
    student = [
        "Confirmation Question",
        "Request Feedback by Image",
        "Understanding",
        "Direction Question",
        "Information Question",
        "Not Understanding",
        "Ready Answer",
    ]
    tags = [SchemeTag(n, "student") for n in student]
    tags += [SchemeTag(f"Tutor DA {i:02d}", "tutor") for i in range(8, 25)]
    tags += [SchemeTag(f"Shared DA {i:02d}", "both") for i in range(25, 32)]
    return LabelScheme(tags=tuple(tags), version="second-level-v1")


@dataclass(frozen=True)
class Utterance:
    session_id: str
    seq: int
    role: str
    text: str


@dataclass(frozen=True)
class Sentence:
    """The unit of annotation. ``id`` is ``"{session}:{seq}:{index}"``."""

    id: str
    role: str
    text: str
    gold_label: str | None = None


@dataclass(frozen=True)
class SplitSpec:
    train_sessions: frozenset[str]
    test_sessions: frozenset[str]
    seed: int

    def __post_init__(self):
        if self.train_sessions & self.test_sessions:
            raise CorpusError("train/test sessions overlap")


_BOUNDARY = re.compile(r"(?<=[.!?])\s+|\s*\n\s*")


def segment_utterance(text: str) -> list[str]:
    """Split at terminal punctuation (. ! ?) followed by whitespace, and at
    newlines. Joining the pieces preserves every non-whitespace character."""
    return [piece.strip() for piece in _BOUNDARY.split(text) if piece.strip()]


def filter_meaningless(sentences: list[str]) -> list[str]:
    """Drop sentences made only of symbols or emoji: keep those with at least
    one alphanumeric character or the literal image placeholder token."""
    return [
        s
        for s in sentences
        if IMAGE_TOKEN in s or any(ch.isalnum() for ch in s)
    ]


def sentence_id(session_id: str, seq: int, index: int) -> str:
    return f"{session_id}:{seq}:{index}"


@dataclass
class Corpus:
    """Immutable after ingest; utterances sorted by (session_id, seq)."""

    utterances: list[Utterance]
    labels: dict[str, str]
    sentences: list[Sentence] = field(compare=False, repr=False, default_factory=list)

    @classmethod
    def build(
        cls,
        utterances: list[Utterance],
        labels: dict[str, str],
        scheme: LabelScheme | None = None,
    ) -> "Corpus":
        utts = sorted(utterances, key=lambda u: (u.session_id, u.seq))
        seen: set[tuple[str, int]] = set()
        for u in utts:
            key = (u.session_id, u.seq)
            if key in seen:
                raise CorpusError(f"duplicate utterance (session={u.session_id}, seq={u.seq})")
            seen.add(key)
            if u.role not in ROLES:
                raise CorpusError(f"invalid role {u.role!r} in session {u.session_id}")
        sentences: list[Sentence] = []
        valid_ids: dict[str, Sentence] = {}
        for u in utts:
            parts = filter_meaningless(segment_utterance(u.text))
            for k, part in enumerate(parts):
                sid = sentence_id(u.session_id, u.seq, k)
                sent = Sentence(id=sid, role=u.role, text=part, gold_label=labels.get(sid))
                sentences.append(sent)
                valid_ids[sid] = sent
        for sid, tag in labels.items():
            sent = valid_ids.get(sid)
            if sent is None:
                raise CorpusError(f"label references missing sentence {sid!r}")
            if scheme is not None:
                if tag not in scheme:
                    raise CorpusError(f"unknown tag {tag!r} on sentence {sid}")
                if not scheme.allows(tag, sent.role):
                    raise CorpusError(
                        f"tag {tag!r} is not applicable to role {sent.role!r} (sentence {sid})"
                    )
        return cls(utterances=utts, labels=dict(labels), sentences=sentences)

    def session_ids(self) -> list[str]:
        return sorted({u.session_id for u in self.utterances})

    def labeled_sentences(self) -> list[Sentence]:
        return [s for s in self.sentences if s.gold_label is not None]

    def subset(self, sessions: set[str] | frozenset[str]) -> "Corpus":
        utts = [u for u in self.utterances if u.session_id in sessions]
        labels = {
            sid: tag for sid, tag in self.labels.items() if sid.split(":")[0] in sessions
        }
        return Corpus.build(utts, labels)


def ingest_corpus(path: str | Path, scheme: LabelScheme) -> Corpus:
    """Parse a JSONL corpus file, validating every gold label against the scheme.

    Errors name the offending line number.
    """
    utterances: list[Utterance] = []
    labels: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {lineno}: malformed JSON ({exc.msg})") from exc
            try:
                session_id = str(rec["session_id"])
                seq = int(rec["seq"])
                role = str(rec["role"])
                text = str(rec["text"])
            except (KeyError, TypeError, ValueError) as exc:
                raise CorpusError(f"line {lineno}: missing or invalid field ({exc})") from exc
            if role not in ROLES:
                raise CorpusError(f"line {lineno}: invalid role {role!r}")
            utterances.append(Utterance(session_id, seq, role, text))
            for lab in rec.get("labels", []) or []:
                try:
                    k = int(lab["sentence_index"])
                    tag = str(lab["tag"])
                except (KeyError, TypeError, ValueError) as exc:
                    raise CorpusError(f"line {lineno}: malformed label entry ({exc})") from exc
                if tag not in scheme:
                    raise CorpusError(f"line {lineno}: unknown tag {tag!r}")
                sid = sentence_id(session_id, seq, k)
                if sid in labels:
                    raise CorpusError(f"line {lineno}: duplicate label for sentence {sid}")
                labels[sid] = tag
    return Corpus.build(utterances, labels, scheme)


def export_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write the identical line-delimited format ingest reads (same field names)."""
    by_utt: dict[tuple[str, int], list[dict]] = {}
    for sid, tag in corpus.labels.items():
        session_id, seq, k = sid.rsplit(":", 2)
        by_utt.setdefault((session_id, int(seq)), []).append(
            {"sentence_index": int(k), "tag": tag}
        )
    with open(path, "w", encoding="utf-8") as fh:
        for u in corpus.utterances:
            rec: dict = {
                "session_id": u.session_id,
                "seq": u.seq,
                "role": u.role,
                "text": u.text,
            }
            labs = by_utt.get((u.session_id, u.seq))
            if labs:
                rec["labels"] = sorted(labs, key=lambda d: d["sentence_index"])
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def split_sessions(corpus: Corpus, test_fraction: float, seed: int) -> SplitSpec:
    """Session-level train/test partition, |test| = round(fraction * n),
    chosen uniformly by seed."""
    if not 0.0 < test_fraction < 1.0:
        raise CorpusError(f"test_fraction must be in (0, 1), got {test_fraction}")
    sessions = corpus.session_ids()
    n = len(sessions)
    if n < 2:
        raise CorpusError(f"need at least 2 sessions to split, got {n}")
    n_test = round(test_fraction * n)
    if n_test == 0 or n_test == n:
        raise CorpusError(
            f"too few sessions ({n}) for test_fraction={test_fraction}: one side would be empty"
        )
    rng = np.random.default_rng(seed)
    test = set(rng.choice(np.array(sessions, dtype=object), size=n_test, replace=False))
    train = set(sessions) - test
    return SplitSpec(frozenset(train), frozenset(test), seed)


def label_frequency(corpus: Corpus) -> dict[str, float]:
    """Fractions per tag over all labeled sentences, in descending order."""
    counts = Counter(corpus.labels.values())
    total = sum(counts.values())
    if total == 0:
        raise CorpusError("corpus has no labeled sentences")
    return {
        tag: c / total for tag, c in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    }


def cohens_kappa(labels_a: list[str], labels_b: list[str]) -> float:
    """Chance-corrected agreement between two coders over the same items.

    kappa = (p_o - p_e) / (1 - p_e), where p_e comes from each coder's
    marginal label distribution. When p_e == 1 (both coders constant and
    identical) the agreement is perfect and 1.0 is returned.
    """
    if len(labels_a) != len(labels_b):
        raise CorpusError(
            f"label lists differ in length: {len(labels_a)} vs {len(labels_b)}"
        )
    n = len(labels_a)
    if n == 0:
        raise CorpusError("cannot compute agreement on empty label lists")
    p_o = sum(a == b for a, b in zip(labels_a, labels_b)) / n
    freq_a = Counter(labels_a)
    freq_b = Counter(labels_b)
    p_e = sum(freq_a[t] * freq_b.get(t, 0) for t in freq_a) / (n * n)
    if p_e >= 1.0:
        return 1.0
    return (p_o - p_e) / (1.0 - p_e)
