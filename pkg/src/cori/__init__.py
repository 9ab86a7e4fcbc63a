"""Word-aligned orthographic/romanized CJKV corpus toolkit with a desk-scale
phonemic-orthographic contrastive trainer and CKA representation metrics."""

__version__ = "0.1.0"
