import random

import pytest

from cori.corpus import (Dataset, LabeledSample, LanguageId, SPACE_JOINED, Task,
                         Utterance, Word)
from cori.romanize import load_tables


@pytest.fixture(scope="session")
def tables():
    return load_tables()


def build_utterance(lang, surfaces, romans=None, tokens=None):
    """Assemble a well-formed utterance: spans tile the joined text."""
    sep = " " if lang in SPACE_JOINED else ""
    romans = romans if romans is not None else list(surfaces)
    words = []
    pos = 0
    for i, s in enumerate(surfaces):
        if tokens is not None:
            toks = tuple(tokens[i])
        elif lang in SPACE_JOINED:
            toks = tuple(s.split(" "))
        else:
            toks = tuple(s)
        words.append(Word(surface=s, tokens=toks, roman=romans[i],
                          span=(pos, pos + len(s))))
        pos += len(s) + len(sep)
    return Utterance(lang=lang, text=sep.join(surfaces), words=tuple(words))


CJK_CHARS = "他是形而上学文神和古典科方面的者日産自動車感觉好"
LATIN_WORDS = ["khoa", "hoc", "van", "than", "sieu", "hinh", "ong", "la", "mot"]


def random_utterance(rng: random.Random, lang=None):
    lang = lang or rng.choice(list(LanguageId))
    n = rng.randint(1, 8)
    if lang in SPACE_JOINED:
        surfaces = [rng.choice(LATIN_WORDS) for _ in range(n)]
        romans = list(surfaces)
    else:
        surfaces = []
        i = 0
        while i < n:
            k = rng.randint(1, 3)
            surfaces.append("".join(rng.choice(CJK_CHARS) for _ in range(k)))
            i += 1
        romans = [f"rom{j}" for j in range(len(surfaces))]
    return build_utterance(lang, surfaces, romans)


def random_bio_tags(rng: random.Random, n: int, types=("ORG", "LOC", "PER")):
    tags = []
    i = 0
    while i < n:
        if rng.random() < 0.5:
            tags.append("O")
            i += 1
        else:
            t = rng.choice(types)
            length = min(rng.randint(1, 3), n - i)
            tags.append(f"B-{t}")
            tags.extend(f"I-{t}" for _ in range(length - 1))
            i += length
    return tags


def random_sample(rng: random.Random, task: Task, idx: int) -> LabeledSample:
    kind = task.kind
    if kind == "sentence":
        u = random_utterance(rng)
        u2 = random_utterance(rng, u.lang) if rng.random() < 0.7 else None
        return LabeledSample(id=f"s{idx}", task=task, utterance=u, utterance2=u2,
                             label=rng.randint(0, 2))
    if kind == "token":
        u = random_utterance(rng)
        if task is Task.PANX:
            tags = tuple(random_bio_tags(rng, len(u.words)))
        else:
            tags = tuple(rng.choice(["NOUN", "VERB", "ADJ"]) for _ in u.words)
        return LabeledSample(id=f"s{idx}", task=task, utterance=u, label=tags)
    ctx = random_utterance(rng)
    q = random_utterance(rng, ctx.lang)
    start = rng.randrange(len(ctx.words))
    end = rng.randint(start, len(ctx.words) - 1)
    return LabeledSample(id=f"s{idx}", task=task, context=ctx, question=q,
                         label=(start, end))


def random_dataset(rng: random.Random, task=None, n=None) -> Dataset:
    task = task or rng.choice(list(Task))
    n = n if n is not None else rng.randint(1, 6)
    samples = tuple(random_sample(rng, task, i) for i in range(n))
    lang = samples[0].input_utterances()[0].lang
    return Dataset(samples=samples, split=rng.choice(["train", "dev", "test"]),
                   source_lang=lang)
