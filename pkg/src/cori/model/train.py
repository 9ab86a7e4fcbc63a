"""Training loop: anchor -> two augmented views -> contrastive + task objectives,
plain gradient-descent updates, deterministic given the seed."""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, replace as dc_replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import torch
import torch.nn as nn

from ..augment import AugmentationConfig, BilingualDictionary, multi_view
from ..corpus import Dataset, LabeledSample, LanguageId, SPACE_JOINED, Task, Utterance
from ..metrics import EmbeddingMatrix, accuracy, exact_match, repair_bio, span_f1
from .encoder import (EncoderConfig, FusedRepresentation, MODES, ProjectionHead,
                      TransformerEncoder, encode_fuse, sentence_rep)
from .losses import CLConfig, TaskHead, cl_loss, task_loss, total_loss
from .subword import SubwordVocab

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "both"
    cl: bool = True
    ratio: float = 0.5
    temperature: float = 0.1
    cl_weight: float = 1.0
    lr: float = 0.1
    steps: int = 200
    batch_size: int = 8
    seed: int = 0
    embed_dim: int = 16
    num_layers: int = 1
    num_heads: int = 2
    max_seq_len: int = 256
    proj_hidden: int = 32
    proj_out: int = 16

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0.0 <= self.ratio <= 1.0:
            raise ValueError(f"ratio {self.ratio} not in [0, 1]")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")


class Model(nn.Module):
    """Encoder + contrastive projection head + task head, with the subword and
    label vocabularies they were built against."""

    def __init__(self, enc_cfg: EncoderConfig, mode: str, head_kind: str,
                 n_outputs: int, cl_cfg: CLConfig, vocab: SubwordVocab,
                 label_vocab: Optional[tuple[str, ...]] = None):
        super().__init__()
        self.encoder = TransformerEncoder(enc_cfg)
        self.mode = mode
        in_dim = enc_cfg.embed_dim * (2 if mode == "both" else 1)
        if cl_cfg.projection_dims[0] != in_dim:
            raise ValueError(f"projection input {cl_cfg.projection_dims[0]} "
                             f"does not match fused width {in_dim}")
        self.cl_cfg = cl_cfg
        self.g = ProjectionHead(*cl_cfg.projection_dims, seed=enc_cfg.seed)
        self.head = TaskHead(head_kind, in_dim, n_outputs, seed=enc_cfg.seed)
        self.vocab = vocab
        self.label_vocab = label_vocab

    def utterance_vectors(self, u: Utterance) -> torch.Tensor:
        return encode_fuse(u, self.encoder, self.vocab, self.mode)

    def fused(self, u: Utterance) -> FusedRepresentation:
        rows = self.utterance_vectors(u)
        return FusedRepresentation(word_vectors=rows,
                                   sentence_vector=sentence_rep(rows, self.g))


def sample_word_vectors(model: Model, s: LabeledSample) -> tuple[torch.Tensor, torch.Tensor]:
    """(all_rows, task_rows): all word vectors of the sample, and the rows the
    task head scores (context rows for QA, everything otherwise)."""
    if s.task.kind == "qa":
        q = model.utterance_vectors(s.question)
        c = model.utterance_vectors(s.context)
        return torch.cat([q, c], dim=0), c
    mats = [model.utterance_vectors(u) for u in s.input_utterances()]
    rows = torch.cat(mats, dim=0) if len(mats) > 1 else mats[0]
    return rows, rows


def encode_label(model: Model, s: LabeledSample):
    if s.task.kind == "sentence":
        return int(s.label)
    if s.task.kind == "token":
        return tuple(model.label_vocab.index(t) for t in s.label)
    return (int(s.label[0]), int(s.label[1]))


def _derive_seed(*parts) -> int:
    digest = hashlib.blake2b("|".join(map(str, parts)).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") % 2 ** 32


def augment_sample(s: LabeledSample, dictionary: BilingualDictionary,
                   ratio: float, base_seed: int, step: int,
                   index: int) -> tuple[LabeledSample, LabeledSample]:
    """Two positive views of a sample: every input utterance code-switched on
    the ortho stream (view 1) or the roman stream (view 2), masks independent."""
    fields = (("utterance", s.utterance), ("utterance2", s.utterance2),
              ("context", s.context), ("question", s.question))
    up1: dict[str, Utterance] = {}
    up2: dict[str, Utterance] = {}
    for k, (name, u) in enumerate(fields):
        if u is None:
            continue
        cfg1 = AugmentationConfig(ratio=ratio, seed=_derive_seed(base_seed, step, index, k, 1),
                                  view="ortho")
        cfg2 = AugmentationConfig(ratio=ratio, seed=_derive_seed(base_seed, step, index, k, 2),
                                  view="roman")
        p1, p2 = multi_view(u, dictionary, (cfg1, cfg2))
        up1[name] = p1
        up2[name] = p2
    return dc_replace(s, **up1), dc_replace(s, **up2)


def batch_loss(model: Model, batch: Sequence[LabeledSample],
               dictionary: BilingualDictionary, cfg: TrainConfig,
               step: int = 0) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """(total, task, contrastive) losses for one batch, no parameter update.

    Per sample: the anchor representation feeds the task loss; the two
    code-switched views feed the contrastive loss, with the other samples'
    view-2 sentence vectors as in-batch negatives."""
    task_reps, labels = [], []
    v1s, v2s = [], []
    for i, s in enumerate(batch):
        _, task_rows = sample_word_vectors(model, s)
        task_reps.append(task_rows)
        labels.append(encode_label(model, s))
        if cfg.cl:
            s1, s2 = augment_sample(s, dictionary, cfg.ratio, cfg.seed, step, i)
            a1, _ = sample_word_vectors(model, s1)
            a2, _ = sample_word_vectors(model, s2)
            v1s.append(sentence_rep(a1, model.g))
            v2s.append(sentence_rep(a2, model.g))

    t_loss = task_loss(task_reps, model.head, labels)
    if cfg.cl and len(batch) >= 2:
        per_sample = [cl_loss(v1s[i], v2s[i],
                              [v2s[j] for j in range(len(batch)) if j != i],
                              model.cl_cfg.temperature)
                      for i in range(len(batch))]
        c_loss = torch.stack(per_sample).mean()
    else:
        c_loss = torch.zeros((), dtype=torch.float64)
    return total_loss(t_loss, c_loss, cfg.cl_weight), t_loss, c_loss


def train_step(model: Model, batch: Sequence[LabeledSample],
               dictionary: BilingualDictionary, cfg: TrainConfig,
               step: int = 0) -> dict:
    """One forward/backward/update pass; returns the loss record."""
    loss, t_loss, c_loss = batch_loss(model, batch, dictionary, cfg, step)
    model.zero_grad(set_to_none=True)
    loss.backward()
    with torch.no_grad():
        for p in model.parameters():
            if p.grad is not None:
                p -= cfg.lr * p.grad
    return {"step": step, "task_loss": t_loss.detach().item(),
            "cl_loss": c_loss.detach().item(),
            "total_loss": loss.detach().item()}


def corpus_strings(samples: Sequence[LabeledSample],
                   dictionary: Optional[BilingualDictionary] = None) -> list[str]:
    """All word strings the model may see: both streams plus dictionary targets."""
    out: list[str] = []
    for s in samples:
        for u in s.input_utterances():
            out.extend(u.surfaces())
            out.extend(u.romans())
    if dictionary is not None:
        for ts in dictionary.entries.values():
            for t in ts:
                out.append(t.surface)
                out.append(t.roman)
    return out


def head_spec_for(dataset: Dataset) -> tuple[str, int, Optional[tuple[str, ...]]]:
    """(head kind, output dim, label vocab) inferred from a labeled dataset."""
    task = dataset.samples[0].task
    if task.kind == "sentence":
        n = max(int(s.label) for s in dataset.samples) + 1
        return "sentence-classify", max(n, 2), None
    if task.kind == "token":
        tags = sorted({t for s in dataset.samples for t in s.label})
        return "word-tag", len(tags), tuple(tags)
    return "qa-span", 2, None


def build_model(cfg: TrainConfig, vocab: SubwordVocab, head_kind: str,
                n_outputs: int, label_vocab: Optional[tuple[str, ...]] = None) -> Model:
    enc_cfg = EncoderConfig(vocab_size=len(vocab), embed_dim=cfg.embed_dim,
                            num_layers=cfg.num_layers, num_heads=cfg.num_heads,
                            max_seq_len=cfg.max_seq_len, seed=cfg.seed)
    in_dim = cfg.embed_dim * (2 if cfg.mode == "both" else 1)
    cl_cfg = CLConfig(temperature=cfg.temperature,
                      projection_dims=(in_dim, cfg.proj_hidden, cfg.proj_out))
    return Model(enc_cfg, cfg.mode, head_kind, n_outputs, cl_cfg, vocab, label_vocab)


def train(dataset: Dataset, dictionary: BilingualDictionary, cfg: TrainConfig,
          vocab: Optional[SubwordVocab] = None) -> tuple[Model, list[dict]]:
    """Train on a labeled dataset; returns the model and per-step loss records.

    Single-threaded and fully seeded: identical inputs give bit-identical
    trajectories.
    """
    if not dataset.samples:
        raise ValueError("cannot train on an empty dataset")
    torch.set_num_threads(1)
    if vocab is None:
        vocab = SubwordVocab.train(corpus_strings(dataset.samples, dictionary))
    head_kind, n_outputs, label_vocab = head_spec_for(dataset)
    model = build_model(cfg, vocab, head_kind, n_outputs, label_vocab)
    rng = random.Random(cfg.seed)
    n = len(dataset.samples)
    records = []
    for step in range(cfg.steps):
        batch = [dataset.samples[rng.randrange(n)]
                 for _ in range(min(cfg.batch_size, n))]
        records.append(train_step(model, batch, dictionary, cfg, step))
    return model, records


# ---------------------------------------------------------------------------
# Prediction and evaluation
# ---------------------------------------------------------------------------

def _join_words(words: Sequence[str], lang: LanguageId) -> str:
    sep = " " if lang in SPACE_JOINED else ""
    return sep.join(words)


def predict(model: Model, s: LabeledSample):
    """Class index, word tag list, or (answer string, word span) per task kind."""
    with torch.no_grad():
        _, task_rows = sample_word_vectors(model, s)
        out = model.head(task_rows)
        if s.task.kind == "sentence":
            return int(torch.argmax(out))
        if s.task.kind == "token":
            idx = torch.argmax(out, dim=-1).tolist()
            return [model.label_vocab[i] for i in idx]
        start_scores = out[:, 0]
        end_scores = out[:, 1]
        m = task_rows.shape[0]
        best, best_pair = None, (0, 0)
        for a in range(m):
            for b in range(a, m):
                score = float(start_scores[a] + end_scores[b])
                if best is None or score > best:
                    best, best_pair = score, (a, b)
        a, b = best_pair
        answer = _join_words([w.surface for w in s.context.words[a:b + 1]],
                             s.context.lang)
        return answer, (a, b)


def evaluate(model: Model, dataset: Dataset) -> dict:
    """Task metric report: accuracy (sentence, UDPOS words), entity span F1
    (PANX), or exact match (QA)."""
    samples = dataset.samples
    if not samples:
        raise ValueError("cannot evaluate an empty dataset")
    task = samples[0].task
    if task.kind == "sentence":
        preds = [predict(model, s) for s in samples]
        return {"task": task.value, "metric": "accuracy",
                "value": accuracy(preds, [int(s.label) for s in samples])}
    if task.kind == "token":
        preds = [predict(model, s) for s in samples]
        gold = [list(s.label) for s in samples]
        if task is Task.PANX:
            p, r, f1 = span_f1([repair_bio(t) for t in preds], gold)
            return {"task": task.value, "metric": "span_f1", "value": f1,
                    "precision": p, "recall": r}
        flat_p = [t for ts in preds for t in ts]
        flat_g = [t for ts in gold for t in ts]
        return {"task": task.value, "metric": "accuracy",
                "value": accuracy(flat_p, flat_g)}
    preds, golds = [], []
    for s in samples:
        answer, _ = predict(model, s)
        preds.append(answer)
        a, b = s.label
        golds.append(_join_words([w.surface for w in s.context.words[a:b + 1]],
                                 s.context.lang))
    return {"task": task.value, "metric": "exact_match",
            "value": exact_match(preds, golds)}


def utterance_embedding(model: Model, u: Utterance) -> np.ndarray:
    with torch.no_grad():
        return model.fused(u).sentence_vector.numpy()


def embed_utterances(model: Model, utts: Sequence[Utterance],
                     ids: Optional[Sequence[str]] = None) -> EmbeddingMatrix:
    if ids is None:
        ids = [str(i) for i in range(len(utts))]
    rows = np.stack([utterance_embedding(model, u) for u in utts])
    return EmbeddingMatrix(ids=tuple(ids), rows=rows)


# ---------------------------------------------------------------------------
# Checkpoint: npz tensor dump with a JSON config header
# ---------------------------------------------------------------------------

def save_checkpoint(model: Model, path: Union[str, Path]) -> None:
    meta = {
        "version": CHECKPOINT_VERSION,
        "mode": model.mode,
        "head_kind": model.head.kind,
        "n_outputs": model.head.output_dim,
        "temperature": model.cl_cfg.temperature,
        "projection_dims": list(model.cl_cfg.projection_dims),
        "encoder": {
            "vocab_size": model.encoder.cfg.vocab_size,
            "embed_dim": model.encoder.cfg.embed_dim,
            "num_layers": model.encoder.cfg.num_layers,
            "num_heads": model.encoder.cfg.num_heads,
            "max_seq_len": model.encoder.cfg.max_seq_len,
            "seed": model.encoder.cfg.seed,
        },
        "label_vocab": list(model.label_vocab) if model.label_vocab else None,
        "subword_pieces": json.loads(model.vocab.to_json()),
    }
    arrays = {k: v.numpy() for k, v in model.state_dict().items()}
    np.savez(Path(path), __meta__=np.array(json.dumps(meta)), **arrays)


def load_checkpoint(path: Union[str, Path]) -> Model:
    data = np.load(Path(path), allow_pickle=False)
    meta = json.loads(str(data["__meta__"]))
    if meta["version"] != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {meta['version']}")
    vocab = SubwordVocab(meta["subword_pieces"])
    enc_cfg = EncoderConfig(**meta["encoder"])
    cl_cfg = CLConfig(temperature=meta["temperature"],
                      projection_dims=tuple(meta["projection_dims"]))
    label_vocab = tuple(meta["label_vocab"]) if meta["label_vocab"] else None
    model = Model(enc_cfg, meta["mode"], meta["head_kind"], meta["n_outputs"],
                  cl_cfg, vocab, label_vocab)
    state = {k: torch.from_numpy(data[k]) for k in data.files if k != "__meta__"}
    model.load_state_dict(state)
    return model
