"""Synthetic bilingual corpus for desk-scale experiments.

Two languages with disjoint orthographic vocabularies; a configurable fraction
of word types shares its romanized form across the languages. Sentences are
parallel (same underlying word-index sequence) and carry a two-class topic
label, so both zero-shot accuracy and cross-lingual representation similarity
can be measured.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .augment import BilingualDictionary, Translation
from .corpus import Dataset, LabeledSample, LanguageId, Task, Utterance, Word


@dataclass(frozen=True)
class ToyWorld:
    train: Dataset                       # labeled source-language training set
    parallel_src: tuple[Utterance, ...]  # held-out parallel sentences, source side
    parallel_tgt: tuple[Utterance, ...]  # ... target side (same content)
    parallel_labels: tuple[int, ...]
    dictionary: BilingualDictionary      # source surface -> target word


def _src_word(k: int, romans: list[str], pos: int) -> Word:
    surface = chr(0x4E00 + k)  # one ideograph per word type: disjoint from target
    return Word(surface=surface, tokens=(surface,), roman=romans[k],
                span=(pos, pos + 1))


def _utterance_src(indices: list[int], romans: list[str]) -> Utterance:
    words = []
    for pos, k in enumerate(indices):
        words.append(_src_word(k, romans, pos))
    text = "".join(w.surface for w in words)
    return Utterance(lang=LanguageId.ZH, text=text, words=tuple(words))


def _utterance_tgt(indices: list[int], surfaces: list[str]) -> Utterance:
    words = []
    pos = 0
    for k in indices:
        s = surfaces[k]
        words.append(Word(surface=s, tokens=(s,), roman=s, span=(pos, pos + len(s))))
        pos += len(s) + 1
    text = " ".join(w.surface for w in words)
    return Utterance(lang=LanguageId.VI, text=text, words=tuple(words))


def make_toy_world(n_train: int = 200, n_parallel: int = 100, vocab_words: int = 40,
                   shared_roman_frac: float = 0.5, sent_len: tuple[int, int] = (5, 9),
                   topic_purity: float = 0.8, seed: int = 0) -> ToyWorld:
    rng = random.Random(seed)
    n_shared = int(round(vocab_words * shared_roman_frac))
    shared = set(rng.sample(range(vocab_words), n_shared))

    tgt_surfaces = [f"tau{k}" for k in range(vocab_words)]
    src_romans = [tgt_surfaces[k] if k in shared else f"sig{k}"
                  for k in range(vocab_words)]

    half = vocab_words // 2
    topics = (list(range(half)), list(range(half, vocab_words)))

    def draw_sentence() -> tuple[list[int], int]:
        label = rng.randrange(2)
        length = rng.randint(*sent_len)
        indices = []
        for _ in range(length):
            pool = topics[label] if rng.random() < topic_purity else topics[1 - label]
            indices.append(rng.choice(pool))
        return indices, label

    train_samples = []
    for i in range(n_train):
        indices, label = draw_sentence()
        train_samples.append(LabeledSample(
            id=f"toy-train-{i}", task=Task.PAWSX,
            utterance=_utterance_src(indices, src_romans), label=label))
    train = Dataset(samples=tuple(train_samples), split="train",
                    source_lang=LanguageId.ZH)

    par_src, par_tgt, par_labels = [], [], []
    for _ in range(n_parallel):
        indices, label = draw_sentence()
        par_src.append(_utterance_src(indices, src_romans))
        par_tgt.append(_utterance_tgt(indices, tgt_surfaces))
        par_labels.append(label)

    entries = {}
    for k in range(vocab_words):
        src_surface = chr(0x4E00 + k)
        entries[src_surface] = (Translation(lang=LanguageId.VI,
                                            surface=tgt_surfaces[k],
                                            roman=tgt_surfaces[k]),)
    dictionary = BilingualDictionary(src_lang=LanguageId.ZH, entries=entries)

    return ToyWorld(train=train, parallel_src=tuple(par_src),
                    parallel_tgt=tuple(par_tgt), parallel_labels=tuple(par_labels),
                    dictionary=dictionary)


def parallel_dataset(world: ToyWorld, side: str = "tgt") -> Dataset:
    """The parallel sentences as a labeled dataset (zero-shot eval side)."""
    utts = world.parallel_src if side == "src" else world.parallel_tgt
    samples = tuple(
        LabeledSample(id=f"toy-par-{side}-{i}", task=Task.PAWSX, utterance=u, label=lab)
        for i, (u, lab) in enumerate(zip(utts, world.parallel_labels)))
    lang = LanguageId.ZH if side == "src" else LanguageId.VI
    return Dataset(samples=samples, split="test", source_lang=lang)
