"""Synthetic dialogue corpus generator.

Each class owns a disjoint keyword vocabulary; sentences mix class
keywords with shared filler words, so the corpus is linearly separable
at filler ratios well below 1.  The "longtail" imbalance profile models a
long-tailed dialogue-act distribution (4.93% down to 0.07% for the
seven minority tags, the remainder on a majority tag); optional label
noise flips a fraction of gold labels to random other tags.
"""
from __future__ import annotations

import numpy as np

from .corpus import Corpus, LabelScheme, SchemeTag, Utterance, sentence_id

LONGTAIL_TAGS = (
    "Confirmation Question",
    "Request Feedback by Image",
    "Understanding",
    "Direction Question",
    "Information Question",
    "Not Understanding",
    "Ready Answer",
)
LONGTAIL_FREQS = (0.0493, 0.0434, 0.0146, 0.0120, 0.0106, 0.0024, 0.0007)

PROFILES = ("uniform", "longtail")


def synthetic_scheme(profile: str = "longtail", n_classes: int = 8) -> LabelScheme:
    if profile == "longtail":
        tags = [SchemeTag("Other", "both")] + [SchemeTag(t, "both") for t in LONGTAIL_TAGS]
        return LabelScheme(tags=tuple(tags), version="synthetic-longtail")
    tags = tuple(SchemeTag(f"Class {i:02d}", "both") for i in range(n_classes))
    return LabelScheme(tags=tags, version=f"synthetic-uniform-{n_classes}")


def class_weights(profile: str, n_classes: int) -> np.ndarray:
    if profile == "longtail":
        w = np.array([1.0 - sum(LONGTAIL_FREQS), *LONGTAIL_FREQS])
        if n_classes != len(w):
            raise ValueError(f"longtail profile fixes {len(w)} classes, got {n_classes}")
        return w
    if profile == "uniform":
        return np.full(n_classes, 1.0 / n_classes)
    raise ValueError(f"unknown imbalance profile {profile!r}; expected one of {PROFILES}")


def generate_corpus(
    n_sessions: int = 50,
    sentences_per_session: tuple[int, int] = (30, 50),
    profile: str = "longtail",
    n_classes: int = 8,
    keywords_per_class: int = 20,
    filler_vocab: int = 40,
    filler_ratio: float = 0.25,
    noise: float = 0.0,
    seed: int = 0,
) -> tuple[Corpus, LabelScheme, list[str]]:
    """Build a labeled corpus; returns (corpus, scheme, flipped_sentence_ids).

    ``noise`` is the fraction of sentences whose gold labels are flipped to
    a uniformly random different tag after generation.
    """
    scheme = synthetic_scheme(profile, n_classes)
    weights = class_weights(profile, scheme.num_classes)
    rng = np.random.default_rng(seed)
    vocab = [
        [f"kw{c}x{j}" for j in range(keywords_per_class)]
        for c in range(scheme.num_classes)
    ]
    fillers = [f"fill{j}" for j in range(filler_vocab)]
    tags = scheme.names()

    utterances: list[Utterance] = []
    labels: dict[str, str] = {}
    order: list[str] = []  # sentence ids in generation order, for noise flips
    for s in range(n_sessions):
        session = f"syn{s:03d}"
        n_sents = int(rng.integers(sentences_per_session[0], sentences_per_session[1] + 1))
        seq = 0
        produced = 0
        role_toggle = 0
        while produced < n_sents:
            per_utt = int(min(rng.integers(1, 4), n_sents - produced))
            texts = []
            for k in range(per_utt):
                c = int(rng.choice(scheme.num_classes, p=weights))
                length = int(rng.integers(3, 9))
                words = [
                    fillers[int(rng.integers(filler_vocab))]
                    if rng.random() < filler_ratio
                    else vocab[c][int(rng.integers(keywords_per_class))]
                    for _ in range(length)
                ]
                texts.append(" ".join(words) + ".")
                sid = sentence_id(session, seq, k)
                labels[sid] = tags[c]
                order.append(sid)
            role = "tutor" if role_toggle % 2 == 0 else "student"
            utterances.append(Utterance(session, seq, role, " ".join(texts)))
            produced += per_utt
            seq += 1
            role_toggle += 1

    flipped: list[str] = []
    if noise > 0:
        n_flip = int(round(noise * len(order)))
        flip_rows = rng.choice(len(order), size=n_flip, replace=False)
        for row in sorted(flip_rows):
            sid = order[row]
            current = scheme.index(labels[sid])
            offset = int(rng.integers(1, scheme.num_classes))
            labels[sid] = tags[(current + offset) % scheme.num_classes]
            flipped.append(sid)

    corpus = Corpus.build(utterances, labels, scheme)
    return corpus, scheme, flipped
