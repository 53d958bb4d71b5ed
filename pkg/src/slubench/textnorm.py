"""Canonical text normalization used by corpus filtering and WER scoring.

Normalization is deliberately minimal: lowercase, collapse whitespace
runs, strip the ends. Punctuation is left untouched so that transcript
consistency checks and WER tokenization agree with each other.
"""


def normalize(text: str) -> str:
    return " ".join(text.lower().split())


def tokenize(text: str) -> list[str]:
    return normalize(text).split()
