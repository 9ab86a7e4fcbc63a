"""Desk-scale transformer encoder and the word-level fusion of the two streams.

The shared encoder runs over each stream's full subword sequence; subword
vectors are mean-pooled within each word, and the two M x d stream matrices
are concatenated feature-wise into the M x 2d fused representation. All
tensors are double precision for gradient verification.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..corpus import Utterance
from .subword import DegenerateWordError, SubwordVocab

MODES = ("ortho", "roman", "both")


class SequenceTooLongError(ValueError):
    pass


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    embed_dim: int
    num_layers: int
    num_heads: int
    max_seq_len: int
    seed: int = 0

    def __post_init__(self):
        if min(self.vocab_size, self.embed_dim, self.num_layers,
               self.num_heads, self.max_seq_len) <= 0:
            raise ValueError("all encoder dimensions must be positive")
        if self.embed_dim % self.num_heads != 0:
            raise ValueError(
                f"embed_dim {self.embed_dim} not divisible by num_heads {self.num_heads}")


@dataclass(frozen=True)
class FusedRepresentation:
    """Per-word fused vectors (M x 2d; M x d in single-stream modes) and the
    pooled sentence vector once computed."""
    word_vectors: torch.Tensor
    sentence_vector: torch.Tensor | None = None

    def __post_init__(self):
        if self.sentence_vector is not None \
                and not bool(torch.all(torch.isfinite(self.sentence_vector.detach()))):
            raise ValueError("sentence vector contains non-finite values")


class EncoderLayer(nn.Module):
    def __init__(self, d: int, heads: int):
        super().__init__()
        self.heads = heads
        self.ln1 = nn.LayerNorm(d)
        self.qkv = nn.Linear(d, 3 * d)
        self.out = nn.Linear(d, d)
        self.ln2 = nn.LayerNorm(d)
        self.ff1 = nn.Linear(d, 4 * d)
        self.ff2 = nn.Linear(4 * d, d)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        L, d = x.shape
        h = self.heads
        hd = d // h
        q, k, v = self.qkv(self.ln1(x)).split(d, dim=-1)
        q = q.view(L, h, hd).transpose(0, 1)
        k = k.view(L, h, hd).transpose(0, 1)
        v = v.view(L, h, hd).transpose(0, 1)
        att = torch.softmax(q @ k.transpose(-2, -1) / math.sqrt(hd), dim=-1)
        ctx = (att @ v).transpose(0, 1).reshape(L, d)
        x = x + self.out(ctx)
        x = x + self.ff2(F.gelu(self.ff1(self.ln2(x))))
        return x


class TransformerEncoder(nn.Module):
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        torch.manual_seed(cfg.seed)
        self.tok = nn.Embedding(cfg.vocab_size, cfg.embed_dim)
        self.pos = nn.Embedding(cfg.max_seq_len, cfg.embed_dim)
        self.layers = nn.ModuleList(
            EncoderLayer(cfg.embed_dim, cfg.num_heads) for _ in range(cfg.num_layers))
        self.ln_f = nn.LayerNorm(cfg.embed_dim)
        for p in self.parameters():
            if p.dim() > 1:
                nn.init.normal_(p, std=0.02)
        self.double()

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        if ids.numel() > self.cfg.max_seq_len:
            raise SequenceTooLongError(
                f"sequence of {ids.numel()} subwords exceeds max_seq_len {self.cfg.max_seq_len}")
        x = self.tok(ids) + self.pos(torch.arange(ids.numel()))
        for layer in self.layers:
            x = layer(x)
        return self.ln_f(x)


def _encode_stream(strings: list[str], encoder: TransformerEncoder,
                   vocab: SubwordVocab) -> torch.Tensor:
    """Encode one stream of M word strings; returns M x d word vectors."""
    pieces = []
    for s in strings:
        ids = vocab.encode(s)
        if not ids:
            raise DegenerateWordError(f"word {s!r} tokenized to zero subwords")
        pieces.append(ids)
    flat = torch.tensor([i for ids in pieces for i in ids], dtype=torch.long)
    hidden = encoder(flat)
    rows = []
    offset = 0
    for ids in pieces:
        rows.append(hidden[offset:offset + len(ids)].mean(dim=0))
        offset += len(ids)
    return torch.stack(rows)


def encode_fuse(u: Utterance, encoder: TransformerEncoder, vocab: SubwordVocab,
                mode: str = "both") -> torch.Tensor:
    """Word-level fused representation of one romanized utterance.

    mode "both" concatenates the ortho and roman stream encodings (M x 2d);
    "ortho"/"roman" return the single stream (M x d) for ablations.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    streams = []
    if mode in ("ortho", "both"):
        streams.append(u.surfaces())
    if mode in ("roman", "both"):
        streams.append(u.romans())
    mats = [_encode_stream(s, encoder, vocab) for s in streams]
    return torch.cat(mats, dim=-1) if len(mats) > 1 else mats[0]


class ProjectionHead(nn.Module):
    """Two-layer MLP projection (tanh nonlinearity, smooth for grad checks)."""

    def __init__(self, in_dim: int, hidden_dim: int, out_dim: int, seed: int = 0):
        super().__init__()
        torch.manual_seed(seed + 1)
        self.fc1 = nn.Linear(in_dim, hidden_dim)
        self.fc2 = nn.Linear(hidden_dim, out_dim)
        for p in self.parameters():
            if p.dim() > 1:
                nn.init.normal_(p, std=0.02)
        self.double()

    def forward(self, v: torch.Tensor) -> torch.Tensor:
        return self.fc2(torch.tanh(self.fc1(v)))


def sentence_rep(word_vectors: torch.Tensor, g: ProjectionHead) -> torch.Tensor:
    """Average-pool the M word vectors and project: the sentence-level vector."""
    if word_vectors.ndim != 2 or word_vectors.shape[0] == 0:
        raise ValueError("word_vectors must be a non-empty M x D matrix")
    return g(word_vectors.mean(dim=0))
