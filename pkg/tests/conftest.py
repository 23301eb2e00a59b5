from __future__ import annotations

import json

import pytest

from dialcart.corpus import Corpus, LabelScheme, SchemeTag, Utterance


@pytest.fixture
def scheme4() -> LabelScheme:
    return LabelScheme(
        tags=(
            SchemeTag("Statement", "both"),
            SchemeTag("Question", "both"),
            SchemeTag("Feedback", "tutor"),
            SchemeTag("Understanding", "student"),
        ),
        version="test-v1",
    )


@pytest.fixture
def tiny_corpus(scheme4) -> Corpus:
    utterances = [
        Utterance("s1", 0, "tutor", "Welcome back. Ready to start?"),
        Utterance("s1", 1, "student", "Oh, I get it. Thanks!"),
        Utterance("s2", 0, "tutor", "No, it is incorrect!"),
        Utterance("s2", 1, "student", "Why?"),
    ]
    labels = {
        "s1:0:0": "Statement",
        "s1:0:1": "Question",
        "s1:1:0": "Understanding",
        "s1:1:1": "Statement",
        "s2:0:0": "Feedback",
        "s2:1:0": "Question",
    }
    return Corpus.build(utterances, labels, scheme4)


def write_corpus_file(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
    return path
