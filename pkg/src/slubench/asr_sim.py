"""Configurable ASR-error simulator.

Corrupts gold transcripts into 1-best hypotheses at a chosen WER
operating point and synthesizes scored lattices around the corrupted
sequence. Both operations derive their random stream from
(profile.seed, utterance id), so corpus-level corruption is
reproducible and parallelizable.

Two presets emulate the published recognizer operating points:
"unadapted" targets 34.4% WER, "adapted" 15.5%, splitting the error
mass 60% substitutions / 25% deletions / 15% insertions.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from . import metrics
from .lattice import Arc, Lattice, make_lattice
from .textnorm import tokenize

TOKEN_SECONDS = 0.3

DEFAULT_CONFUSION_VOCAB = tuple(f"fuzz{i:02d}" for i in range(24))

PRESET_WER = {"unadapted": 0.344, "adapted": 0.155}
_PRESET_MIX = (0.60, 0.25, 0.15)  # substitution, deletion, insertion shares


@dataclass(frozen=True)
class NoiseProfile:
    p_sub: float
    p_del: float
    p_ins: float
    confusion_vocab: tuple[str, ...] = DEFAULT_CONFUSION_VOCAB
    seed: int = 0
    depth: int = 3

    def __post_init__(self):
        for name in ("p_sub", "p_del", "p_ins"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ContractError(f"{name} must be in [0, 1], got {p}")
        if self.p_sub + self.p_del + self.p_ins > 1.0 + 1e-12:
            raise ContractError("p_sub + p_del + p_ins must not exceed 1")
        if self.depth < 1:
            raise ContractError(f"depth must be >= 1, got {self.depth}")
        if self.p_sub + self.p_ins > 0 and not self.confusion_vocab:
            raise ContractError("confusion_vocab must be non-empty when substituting or inserting")


def preset_profile(name: str, seed: int = 0, depth: int = 3) -> NoiseProfile:
    if name not in PRESET_WER:
        raise ContractError(f"unknown preset {name!r}; choose from {sorted(PRESET_WER)}")
    target = PRESET_WER[name]
    return NoiseProfile(
        p_sub=_PRESET_MIX[0] * target,
        p_del=_PRESET_MIX[1] * target,
        p_ins=_PRESET_MIX[2] * target,
        seed=seed,
        depth=depth,
    )


def _stream(profile: NoiseProfile, utt_id: str) -> np.random.Generator:
    return np.random.default_rng([profile.seed, zlib.crc32(utt_id.encode("utf-8"))])


def _pick(rng: np.random.Generator, vocab: tuple[str, ...],
          exclude: str | None = None) -> str:
    choices = [w for w in vocab if w != exclude] if exclude is not None else list(vocab)
    if not choices:
        choices = list(vocab)
    return choices[rng.integers(len(choices))]


@dataclass(frozen=True)
class _TokenEdit:
    op: str                 # "keep" | "sub" | "del"
    gold: str
    output: str | None      # emitted token, None when deleted
    inserted: str | None    # extra token emitted after, if any


def _edit_plan(tokens: list[str], profile: NoiseProfile,
               rng: np.random.Generator) -> list[_TokenEdit]:
    plan = []
    for tok in tokens:
        u = rng.random()
        if u < profile.p_sub:
            op, output = "sub", _pick(rng, profile.confusion_vocab, exclude=tok)
        elif u < profile.p_sub + profile.p_del:
            op, output = "del", None
        else:
            op, output = "keep", tok
        inserted = None
        if rng.random() < profile.p_ins:
            inserted = _pick(rng, profile.confusion_vocab)
        plan.append(_TokenEdit(op, tok, output, inserted))
    return plan


def corrupt_transcript(transcript: str, profile: NoiseProfile,
                       utt_id: str = "") -> str:
    """Per-token independent substitution/deletion/insertion edits."""
    tokens = tokenize(transcript)
    if not tokens:
        raise ContractError("cannot corrupt an empty transcript")
    out = []
    for edit in _edit_plan(tokens, profile, _stream(profile, utt_id)):
        if edit.output is not None:
            out.append(edit.output)
        if edit.inserted is not None:
            out.append(edit.inserted)
    return " ".join(out)


def _fanout(one_best: str, gold: str | None, profile: NoiseProfile,
            rng: np.random.Generator) -> list[tuple[str, float]]:
    """Candidate words and probabilities for one corrupted position.

    The 1-best word dominates; the gold word keeps mass shrinking with
    p_sub; remaining slots go to low-mass confusion tokens. Fan-out
    width is capped by the profile depth.
    """
    weights = [(one_best, 1.0)]
    if gold is not None and gold != one_best and profile.depth >= 2:
        weights.append((gold, max(1.0 - profile.p_sub, 0.05)))
    pool = [w for w in profile.confusion_vocab if all(w != tok for tok, _ in weights)]
    while len(weights) < profile.depth and pool:
        extra = pool.pop(int(rng.integers(len(pool))))
        weights.append((extra, max(profile.p_sub, 0.02) / profile.depth))
    total = sum(w for _, w in weights)
    return [(tok, w / total) for tok, w in weights]


def synthesize_lattice(transcript: str, profile: NoiseProfile,
                       utt_id: str = "") -> Lattice:
    """Lattice whose best path is the corrupted 1-best for the same
    (profile, utterance id) stream.

    Positions get uniform 0.3 s slots; corrupted positions fan out into
    up-to-depth alternatives forming a proper probability distribution
    (arc scores are natural-log probabilities, lm scores zero).
    """
    tokens = tokenize(transcript)
    if not tokens:
        raise ContractError("cannot synthesize a lattice for an empty transcript")
    rng = _stream(profile, utt_id)
    plan = _edit_plan(tokens, profile, rng)

    positions: list[list[tuple[str, float]]] = []
    for edit in plan:
        if edit.op == "keep":
            positions.append([(edit.gold, 1.0)])
        elif edit.op == "sub":
            positions.append(_fanout(edit.output, edit.gold, profile, rng))
        if edit.inserted is not None:
            if profile.depth >= 2:
                alt = _pick(rng, profile.confusion_vocab, exclude=edit.inserted)
                total = 1.0 + 0.15
                positions.append([(edit.inserted, 1.0 / total), (alt, 0.15 / total)])
            else:
                positions.append([(edit.inserted, 1.0)])
    if not positions:
        # Degenerate all-deleted draw: keep the first gold token so the
        # lattice stays structurally valid.
        positions = [[(tokens[0], 1.0)]]

    times = [i * TOKEN_SECONDS for i in range(len(positions) + 1)]
    arcs = []
    for i, candidates in enumerate(positions):
        for tok, p in candidates:
            arcs.append(Arc(i, i + 1, tok, float(np.log(p)), 0.0))
    return make_lattice(times, arcs)


def empirical_wer_of_profile(profile: NoiseProfile,
                             corpus: list[str]) -> float:
    """Pooled WER of corrupt_transcript over the corpus (total edits over
    total reference tokens). Requires at least 1000 reference tokens."""
    total_tokens = sum(len(tokenize(t)) for t in corpus)
    if total_tokens < 1000:
        raise ContractError(
            f"corpus too small for calibration: {total_tokens} tokens, need >= 1000"
        )
    errors = 0
    for i, transcript in enumerate(corpus):
        hyp = corrupt_transcript(transcript, profile, utt_id=str(i))
        errors += metrics.align(transcript, hyp).errors
    return errors / total_tokens
