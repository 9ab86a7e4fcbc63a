"""Contrastive and task objectives over fused word representations."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import torch
import torch.nn as nn


class ZeroNormError(ValueError):
    """Cosine similarity is undefined for a zero vector."""


@dataclass(frozen=True)
class CLConfig:
    temperature: float = 0.1
    projection_dims: tuple[int, int, int] = (32, 32, 16)  # in -> hidden -> out

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")


HEAD_KINDS = ("sentence-classify", "word-tag", "qa-span")


class TaskHead(nn.Module):
    """Task projection: class logits from pooled vectors, per-word tag logits,
    or start/end span scores over context words."""

    def __init__(self, kind: str, in_dim: int, output_dim: int, seed: int = 0):
        super().__init__()
        if kind not in HEAD_KINDS:
            raise ValueError(f"kind must be one of {HEAD_KINDS}, got {kind!r}")
        if kind == "qa-span" and output_dim != 2:
            raise ValueError("qa-span head has output_dim 2 (start/end scores)")
        self.kind = kind
        self.output_dim = output_dim
        torch.manual_seed(seed + 2)
        self.proj = nn.Linear(in_dim, output_dim)
        nn.init.normal_(self.proj.weight, std=0.02)
        self.double()

    def forward(self, word_vectors: torch.Tensor) -> torch.Tensor:
        if self.kind == "sentence-classify":
            return self.proj(word_vectors.mean(dim=0))
        return self.proj(word_vectors)


def _cosine(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    na = torch.linalg.vector_norm(a)
    nb = torch.linalg.vector_norm(b)
    if na.detach().item() == 0.0 or nb.detach().item() == 0.0:
        raise ZeroNormError("cosine of a zero-norm vector")
    return (a @ b) / (na * nb)


def cl_loss(anchor_view1: torch.Tensor, anchor_view2: torch.Tensor,
            negatives: Sequence[torch.Tensor], temperature: float) -> torch.Tensor:
    """InfoNCE-style loss: -log of the positive pair's share of similarity mass.

    Strictly positive; decreasing in the positive cosine, increasing in each
    negative cosine; invariant to positive rescaling of any input vector.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    if len(negatives) < 1:
        raise ValueError("cl_loss needs at least one negative sample")
    pos = _cosine(anchor_view1, anchor_view2) / temperature
    sims = [pos] + [_cosine(anchor_view1, n) / temperature for n in negatives]
    stacked = torch.stack(sims)
    return torch.logsumexp(stacked, dim=0) - pos


def _cross_entropy(logits: torch.Tensor, target: int) -> torch.Tensor:
    if not 0 <= target < logits.shape[-1]:
        raise ValueError(f"label {target} out of range for {logits.shape[-1]} classes")
    return torch.logsumexp(logits, dim=-1) - logits[target]


def task_loss(batch: Sequence[torch.Tensor], head: TaskHead,
              labels: Sequence[Union[int, Sequence[int], tuple[int, int]]]) -> torch.Tensor:
    """Mean cross-entropy of the task head over a batch of word-vector matrices.

    sentence-classify: one class index per sample, logits from pooled rows.
    word-tag: per-word tag indices (averaged over words within a sample).
    qa-span: (start_word, end_word) inclusive; start and end cross-entropies
    over context words, averaged.
    """
    if len(batch) != len(labels):
        raise ValueError(f"{len(batch)} representations vs {len(labels)} labels")
    losses = []
    for word_vectors, label in zip(batch, labels):
        out = head(word_vectors)
        if head.kind == "sentence-classify":
            losses.append(_cross_entropy(out, int(label)))
        elif head.kind == "word-tag":
            tags = list(label)
            if len(tags) != out.shape[0]:
                raise ValueError(f"{len(tags)} tags for {out.shape[0]} words")
            per_word = [_cross_entropy(out[i], t) for i, t in enumerate(tags)]
            losses.append(torch.stack(per_word).mean())
        else:
            start, end = label
            start_scores = out[:, 0]
            end_scores = out[:, 1]
            losses.append((_cross_entropy(start_scores, start)
                           + _cross_entropy(end_scores, end)) / 2)
    return torch.stack(losses).mean()


def total_loss(task: torch.Tensor, cl: torch.Tensor,
               cl_weight: float = 1.0) -> torch.Tensor:
    """Unweighted sum by default; the weight flag is a documented deviation point."""
    return task + cl_weight * cl
