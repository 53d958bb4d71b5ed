"""Corpus loading, validation, filtering, splitting, and synthesis.

Metadata files are UTF-8 JSON-lines, one object per utterance::

    {"id": "...", "transcript": "...", "intent": "scenario_action",
     "recordings": [{"file": "...", "range": "close"|"far",
                     "wer": 0.0, "transcript": "..."}]}

Unknown keys are ignored. The filtering rule drops an utterance when any
recording reports a metadata WER above zero, or when the metadata
transcripts disagree with each other or with the gold transcript after
canonical normalization.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, FormatError
from .textnorm import normalize, tokenize

RANGES = ("close", "far")
SPLITS = ("train", "dev", "test")

REASON_WER = "wer_gt_zero"
REASON_INCONSISTENT = "inconsistent_transcript"


@dataclass(frozen=True)
class RecordingMeta:
    file_id: str
    range: str
    metadata_wer: float
    metadata_transcript: str

    def __post_init__(self):
        if self.range not in RANGES:
            raise ContractError(f"recording range must be one of {RANGES}, got {self.range!r}")
        if self.metadata_wer < 0:
            raise ContractError(f"metadata WER must be >= 0, got {self.metadata_wer}")


@dataclass(frozen=True)
class UtteranceRecord:
    id: str
    transcript: str
    intent: str
    recordings: tuple[RecordingMeta, ...]
    split: str = "train"

    def __post_init__(self):
        if not self.id:
            raise ContractError("record id must be non-empty")
        if not self.intent:
            raise ContractError(f"record {self.id}: intent must be non-empty")
        if not self.transcript.strip():
            raise ContractError(f"record {self.id}: transcript must be non-empty")
        if not self.recordings:
            raise ContractError(f"record {self.id}: needs at least one recording")
        if self.split not in SPLITS:
            raise ContractError(f"record {self.id}: unknown split {self.split!r}")


@dataclass(frozen=True)
class CorpusStats:
    n_audio: int
    n_close: int
    n_far: int
    duration_hr: float
    avg_len_s: float
    n_intents: int


@dataclass(frozen=True)
class SyntheticGrammar:
    scenarios: tuple[str, ...]
    actions_per_scenario: dict[str, tuple[str, ...]]
    templates: dict[str, tuple[str, ...]]
    slot_fillers: dict[str, tuple[str, ...]]
    seed: int = 0

    def intents(self) -> list[str]:
        out = []
        for scenario in self.scenarios:
            for action in self.actions_per_scenario[scenario]:
                out.append(f"{scenario}_{action}")
        return out


@dataclass
class FilterResult:
    kept: list[UtteranceRecord]
    dropped: list[UtteranceRecord]
    reason_counts: dict[str, int]


@dataclass
class SplitResult:
    train: list[UtteranceRecord]
    dev: list[UtteranceRecord]
    test: list[UtteranceRecord]
    warnings: list[str] = field(default_factory=list)


def record_to_json(rec: UtteranceRecord) -> str:
    obj = {
        "id": rec.id,
        "transcript": rec.transcript,
        "intent": rec.intent,
        "recordings": [
            {"file": r.file_id, "range": r.range, "wer": r.metadata_wer,
             "transcript": r.metadata_transcript}
            for r in rec.recordings
        ],
    }
    return json.dumps(obj, sort_keys=True)


def write_metadata(path: str | Path, records: list[UtteranceRecord]) -> None:
    Path(path).write_text(
        "".join(record_to_json(rec) + "\n" for rec in records), encoding="utf-8"
    )


def _record_from_obj(obj: dict, split: str, lineno: int) -> UtteranceRecord:
    try:
        recordings = tuple(
            RecordingMeta(
                file_id=str(r["file"]),
                range=str(r["range"]),
                metadata_wer=float(r["wer"]),
                metadata_transcript=str(r["transcript"]),
            )
            for r in obj["recordings"]
        )
        return UtteranceRecord(
            id=str(obj["id"]),
            transcript=str(obj["transcript"]),
            intent=str(obj["intent"]),
            recordings=recordings,
            split=split,
        )
    except KeyError as exc:
        raise FormatError(f"missing field {exc.args[0]!r}", lineno) from None
    except (TypeError, ContractError) as exc:
        raise FormatError(str(exc), lineno) from None


def load_metadata(path: str | Path, split: str = "train") -> list[UtteranceRecord]:
    """Read a JSON-lines metadata file; all records are tagged with `split`.

    Raises FormatError naming the line for malformed lines and
    ContractError naming the id for duplicates.
    """
    if split not in SPLITS:
        raise ContractError(f"unknown split {split!r}")
    records: list[UtteranceRecord] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"invalid JSON ({exc.msg})", lineno) from None
            if not isinstance(obj, dict):
                raise FormatError("each line must hold a JSON object", lineno)
            rec = _record_from_obj(obj, split, lineno)
            if rec.id in seen:
                raise ContractError(f"duplicate record id {rec.id!r}")
            seen.add(rec.id)
            records.append(rec)
    return records


def _is_consistent(rec: UtteranceRecord) -> bool:
    texts = {normalize(r.metadata_transcript) for r in rec.recordings}
    texts.add(normalize(rec.transcript))
    return len(texts) == 1


def filter_corpus(records: list[UtteranceRecord]) -> FilterResult:
    """Partition records into kept and dropped.

    A record is dropped iff any recording has metadata WER > 0, or its
    metadata transcripts are not all identical to each other and to the
    gold transcript after normalization. A record violating both rules
    counts under both reasons.
    """
    kept: list[UtteranceRecord] = []
    dropped: list[UtteranceRecord] = []
    reasons = {REASON_WER: 0, REASON_INCONSISTENT: 0}
    for rec in records:
        bad_wer = any(r.metadata_wer > 0.0 for r in rec.recordings)
        inconsistent = not _is_consistent(rec)
        if bad_wer:
            reasons[REASON_WER] += 1
        if inconsistent:
            reasons[REASON_INCONSISTENT] += 1
        (dropped if bad_wer or inconsistent else kept).append(rec)
    return FilterResult(kept, dropped, reasons)


def compute_stats(records: list[UtteranceRecord],
                  durations: dict[str, float]) -> CorpusStats:
    """Exact counts and means over all recordings of the given records."""
    n_close = n_far = 0
    total_s = 0.0
    n_audio = 0
    for rec in records:
        for r in rec.recordings:
            if r.file_id not in durations:
                raise ContractError(f"missing duration for recording {r.file_id!r}")
            total_s += durations[r.file_id]
            n_audio += 1
            if r.range == "close":
                n_close += 1
            else:
                n_far += 1
    n_intents = len({rec.intent for rec in records})
    avg = total_s / n_audio if n_audio else 0.0
    return CorpusStats(n_audio, n_close, n_far, total_s / 3600.0, avg, n_intents)


def _template_slots(template: str) -> list[str]:
    return [tok[1:-1] for tok in template.split() if tok.startswith("{") and tok.endswith("}")]


def validate_grammar(grammar: SyntheticGrammar) -> None:
    for scenario in grammar.scenarios:
        if scenario not in grammar.actions_per_scenario:
            raise ContractError(f"scenario {scenario!r} has no actions")
    for intent in grammar.intents():
        templates = grammar.templates.get(intent, ())
        if not templates:
            raise ContractError(f"intent {intent!r} has no templates")
        for template in templates:
            for slot in _template_slots(template):
                if not grammar.slot_fillers.get(slot):
                    raise ContractError(
                        f"intent {intent!r}: no fillers for slot {slot!r}"
                    )


def generate_synthetic_corpus(grammar: SyntheticGrammar,
                              n_per_intent: int) -> list[UtteranceRecord]:
    """Template-expanded corpus; deterministic for a fixed grammar seed.

    Every intent appears exactly `n_per_intent` times; each record gets
    one close and one far recording with zero metadata WER.
    """
    if n_per_intent < 1:
        raise ContractError(f"n_per_intent must be >= 1, got {n_per_intent}")
    validate_grammar(grammar)
    rng = np.random.default_rng(grammar.seed)
    records: list[UtteranceRecord] = []
    for intent in grammar.intents():
        templates = grammar.templates[intent]
        for i in range(n_per_intent):
            template = templates[rng.integers(len(templates))]
            words = []
            for tok in template.split():
                if tok.startswith("{") and tok.endswith("}"):
                    fillers = grammar.slot_fillers[tok[1:-1]]
                    words.append(fillers[rng.integers(len(fillers))])
                else:
                    words.append(tok)
            transcript = normalize(" ".join(words))
            rec_id = f"{intent}-{i:04d}"
            recordings = tuple(
                RecordingMeta(f"{rec_id}-{range_name}", range_name, 0.0, transcript)
                for range_name in RANGES
            )
            records.append(UtteranceRecord(rec_id, transcript, intent, recordings))
    return records


def split_corpus(records: list[UtteranceRecord],
                 fractions: tuple[float, float, float],
                 seed: int) -> SplitResult:
    """Stratified-by-intent split; remainders go to train.

    Intents with fewer records than nonzero partitions produce a warning
    and land entirely in train. Deterministic for a fixed seed.
    """
    if any(f < 0 for f in fractions):
        raise ContractError(f"fractions must be nonnegative, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ContractError(f"fractions must sum to 1, got {sum(fractions)}")
    _, f_dev, f_test = fractions
    by_intent: dict[str, list[UtteranceRecord]] = {}
    for rec in records:
        by_intent.setdefault(rec.intent, []).append(rec)

    result = SplitResult([], [], [])
    rng = np.random.default_rng(seed)
    nonzero = sum(1 for f in fractions if f > 0)
    for intent in sorted(by_intent):
        group = by_intent[intent]
        order = rng.permutation(len(group))
        shuffled = [group[i] for i in order]
        if len(group) < nonzero:
            result.warnings.append(
                f"intent {intent!r} has only {len(group)} record(s); all assigned to train"
            )
            result.train.extend(dataclasses.replace(r, split="train") for r in shuffled)
            continue
        n_dev = int(f_dev * len(group))
        n_test = int(f_test * len(group))
        n_train = len(group) - n_dev - n_test
        chunks = (
            ("train", shuffled[:n_train]),
            ("dev", shuffled[n_train:n_train + n_dev]),
            ("test", shuffled[n_train + n_dev:]),
        )
        for name, chunk in chunks:
            getattr(result, name).extend(dataclasses.replace(r, split=name) for r in chunk)
    return result


def derive_slot_tags(grammar: SyntheticGrammar, tokens: list[str]) -> list[str]:
    """BIO tags for a token sequence via longest-match against slot fillers.

    Tokens not covered by any filler phrase get "O"; unknown (e.g.
    corrupted) tokens therefore tag as "O" naturally.
    """
    phrases: list[tuple[tuple[str, ...], str]] = []
    for slot in sorted(grammar.slot_fillers):
        for filler in grammar.slot_fillers[slot]:
            phrases.append((tuple(tokenize(filler)), slot))
    phrases.sort(key=lambda it: (-len(it[0]), it[0], it[1]))

    tags = ["O"] * len(tokens)
    i = 0
    while i < len(tokens):
        for phrase, slot in phrases:
            k = len(phrase)
            if tuple(tokens[i:i + k]) == phrase:
                tags[i] = f"B-{slot}"
                for j in range(i + 1, i + k):
                    tags[j] = f"I-{slot}"
                i += k
                break
        else:
            i += 1
    return tags


def default_grammar(seed: int = 0) -> SyntheticGrammar:
    """Shipped 8-intent home-assistant grammar (4 scenarios x 2 actions)."""
    return SyntheticGrammar(
        scenarios=("lights", "music", "alarm", "weather"),
        actions_per_scenario={
            "lights": ("on", "off"),
            "music": ("play", "stop"),
            "alarm": ("set", "cancel"),
            "weather": ("today", "tomorrow"),
        },
        templates={
            "lights_on": (
                "turn the {device} on in the {room}",
                "please switch the {device} on",
                "can you turn on the {device} in the {room}",
                "put the {room} {device} on",
            ),
            "lights_off": (
                "turn the {device} off in the {room}",
                "please switch the {device} off",
                "can you turn off the {device} in the {room}",
                "kill the {device} in the {room}",
            ),
            "music_play": (
                "play some {genre} music",
                "play {artist} in the {room}",
                "put on some {genre} please",
                "can you play {artist} now",
            ),
            "music_stop": (
                "stop the music in the {room}",
                "please stop playing {artist}",
                "turn the music off now",
                "silence the {genre} music",
            ),
            "alarm_set": (
                "set an alarm for {time}",
                "wake me up at {time} please",
                "can you set the alarm to {time}",
                "i need an alarm at {time}",
            ),
            "alarm_cancel": (
                "cancel the alarm at {time}",
                "remove my {time} alarm",
                "please cancel the alarm",
                "no alarm at {time} anymore",
            ),
            "weather_today": (
                "what is the weather like in {place} today",
                "is it raining in {place} right now",
                "tell me the weather for {place}",
                "how warm is it in {place} today",
            ),
            "weather_tomorrow": (
                "what is the weather in {place} tomorrow",
                "will it rain in {place} tomorrow",
                "tell me the forecast for {place} tomorrow",
                "how cold will {place} be tomorrow",
            ),
        },
        slot_fillers={
            "device": ("lamp", "heater", "fan", "ceiling light"),
            "room": ("kitchen", "bedroom", "office", "hallway"),
            "artist": ("abba", "queen", "coldplay", "adele"),
            "genre": ("jazz", "rock", "disco", "techno"),
            "time": ("six am", "seven pm", "noon", "midnight"),
            "place": ("london", "paris", "oslo", "tokyo"),
        },
        seed=seed,
    )


# Shipped fixture recreating the published SLURP cleaning statistics:
# 72,277 single-recording records of which 50,568 survive filtering
# (25,799 close + 24,769 far, 47 of 48 intents), a ~30% drop.
_FIXTURE_TOTALS = {
    "kept_close": 25_799,
    "kept_far": 24_769,
    "dropped_close": 8_804,
    "dropped_far": 12_905,
}
_FIXTURE_KEPT_HOURS = 37.2
_FIXTURE_TOTAL_HOURS = 58.0


def slurp_cleaning_fixture() -> tuple[list[UtteranceRecord], dict[str, float]]:
    """Synthetic corpus whose filter/stats output matches the published
    SLURP and cleaned-SLURP statistics. Returns (records, durations)."""
    n_kept = _FIXTURE_TOTALS["kept_close"] + _FIXTURE_TOTALS["kept_far"]
    n_dropped = _FIXTURE_TOTALS["dropped_close"] + _FIXTURE_TOTALS["dropped_far"]
    kept_dur = _FIXTURE_KEPT_HOURS * 3600.0 / n_kept
    dropped_dur = (_FIXTURE_TOTAL_HOURS - _FIXTURE_KEPT_HOURS) * 3600.0 / n_dropped

    intents = [f"domain{i:02d}_action{j}" for i in range(12) for j in range(4)]
    records: list[UtteranceRecord] = []
    durations: dict[str, float] = {}

    def add(index: int, range_name: str, wer: float, consistent: bool,
            intent: str, duration: float) -> None:
        rec_id = f"utt{index:06d}"
        transcript = f"please handle request number {index}"
        meta = transcript if consistent else transcript + " indeed"
        records.append(UtteranceRecord(
            id=rec_id,
            transcript=transcript,
            intent=intent,
            recordings=(RecordingMeta(f"{rec_id}-audio", range_name, wer, meta),),
        ))
        durations[f"{rec_id}-audio"] = duration

    index = 0
    kept_plan = [("close", _FIXTURE_TOTALS["kept_close"]),
                 ("far", _FIXTURE_TOTALS["kept_far"])]
    for range_name, count in kept_plan:
        for _ in range(count):
            add(index, range_name, 0.0, True, intents[index % 47], kept_dur)
            index += 1
    dropped_plan = [("close", _FIXTURE_TOTALS["dropped_close"]),
                    ("far", _FIXTURE_TOTALS["dropped_far"])]
    k = 0
    for range_name, count in dropped_plan:
        for _ in range(count):
            # Mix of drop reasons: WER-only, both, and inconsistency-only.
            if k % 4 == 3:
                wer, consistent = 0.0, False
            elif k % 4 == 2:
                wer, consistent = 0.12, False
            else:
                wer, consistent = 0.12, True
            add(index, range_name, wer, consistent, intents[index % 48], dropped_dur)
            index += 1
            k += 1
    return records, durations
