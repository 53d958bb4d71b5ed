"""Config-driven experiment matrix over the three model families.

Each experiment trains one model on a (train-input, eval-input)
combination of gold text, simulator-corrupted 1-best text, synthesized
confusion networks, or text+acoustic stream pairs, then reports intent
accuracy and F1 on dev and test. The shipped default matrix covers the
eight canonical combinations (EXP1..EXP8).
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field, replace

from . import asr_sim, corpus, metrics, models, wcn
from .errors import ContractError, FormatError
from .textnorm import tokenize

TRAIN_INPUTS = ("manual", "onebest")
EVAL_INPUTS = ("manual", "onebest", "wcn", "multimodal")
PROFILES = ("unadapted", "adapted", "none")
VARIANTS = ("original", "filtered")
ACOUSTIC_PRESETS = {"standard": 0.3, "clean": 0.1}


@dataclass(frozen=True)
class ExperimentSpec:
    id: str
    family: str
    train_input: str
    eval_input: str
    asr_profile: str
    dataset_variant: str = "original"
    seed: int = 0
    acoustic_preset: str = "standard"

    def __post_init__(self):
        if self.family not in models.FAMILIES:
            raise ContractError(f"{self.id}: unknown family {self.family!r}")
        if self.train_input not in TRAIN_INPUTS:
            raise ContractError(f"{self.id}: unknown train_input {self.train_input!r}")
        if self.eval_input not in EVAL_INPUTS:
            raise ContractError(f"{self.id}: unknown eval_input {self.eval_input!r}")
        if self.asr_profile not in PROFILES:
            raise ContractError(f"{self.id}: unknown asr_profile {self.asr_profile!r}")
        if self.dataset_variant not in VARIANTS:
            raise ContractError(f"{self.id}: unknown dataset_variant {self.dataset_variant!r}")
        if self.acoustic_preset not in ACOUSTIC_PRESETS:
            raise ContractError(f"{self.id}: unknown acoustic_preset {self.acoustic_preset!r}")
        if self.family == "wcn" and self.eval_input != "wcn":
            raise ContractError(f"{self.id}: wcn family requires eval_input=wcn")
        if self.family == "multimodal" and self.eval_input != "multimodal":
            raise ContractError(f"{self.id}: multimodal family requires eval_input=multimodal")
        if self.family == "text" and self.eval_input in ("wcn", "multimodal"):
            raise ContractError(f"{self.id}: text family cannot consume {self.eval_input!r}")
        uses_asr = self.train_input == "onebest" or self.eval_input != "manual"
        if self.asr_profile == "none" and uses_asr:
            raise ContractError(
                f"{self.id}: asr_profile=none is only valid with purely manual inputs"
            )


@dataclass
class MatrixConfig:
    specs: list[ExperimentSpec]
    n_per_intent: int = 63
    split_fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)
    split_seed: int = 13
    grammar_seed: int = 5
    # One recognizer per operating point: every experiment sees the same
    # corrupted text / lattices / acoustic streams for a given profile.
    asr_seed: int = 101
    train: models.TrainConfig = field(default_factory=models.TrainConfig)

    def __post_init__(self):
        ids = [s.id for s in self.specs]
        if len(set(ids)) != len(ids):
            raise ContractError(f"experiment ids are not unique: {ids}")


def default_matrix(seed: int = 0) -> MatrixConfig:
    """The canonical eight-experiment matrix.

    EXP1-4 are the text pipeline over manual/1-best train-eval
    combinations at the unadapted operating point; EXP5 is the
    confusion-network model at the adapted point; EXP6-8 are the
    multimodal model unadapted, adapted, and adapted with the clean
    acoustic preset.
    """
    def spec(i, family, tr, ev, profile, preset="standard"):
        return ExperimentSpec(f"EXP{i}", family, tr, ev, profile,
                              seed=seed + i, acoustic_preset=preset)
    return MatrixConfig(specs=[
        spec(1, "text", "manual", "manual", "none"),
        spec(2, "text", "manual", "onebest", "unadapted"),
        spec(3, "text", "onebest", "manual", "unadapted"),
        spec(4, "text", "onebest", "onebest", "unadapted"),
        spec(5, "wcn", "onebest", "wcn", "adapted"),
        spec(6, "multimodal", "onebest", "multimodal", "unadapted"),
        spec(7, "multimodal", "onebest", "multimodal", "adapted"),
        spec(8, "multimodal", "onebest", "multimodal", "adapted", preset="clean"),
    ])


def _utt_seed(spec_seed: int, rec_id: str) -> int:
    return (spec_seed * 1_000_003 + zlib.crc32(rec_id.encode("utf-8"))) % (2**31)


_MM_DEFAULTS = models.ModelConfig("multimodal", n_intents=1)


class _ViewBuilder:
    """Turns corpus records into family-specific examples for one spec."""

    def __init__(self, spec: ExperimentSpec, grammar: corpus.SyntheticGrammar,
                 asr_seed: int = 101):
        self.spec = spec
        self.grammar = grammar
        self.asr_seed = asr_seed
        self.profile = None
        if spec.asr_profile != "none":
            self.profile = asr_sim.preset_profile(spec.asr_profile, seed=asr_seed)
        self.noise_sd = ACOUSTIC_PRESETS[spec.acoustic_preset]
        self.frames_per_token = _MM_DEFAULTS.frames_per_token
        self.d_acoustic = _MM_DEFAULTS.d_acoustic

    def _text_tokens(self, rec: corpus.UtteranceRecord, input_kind: str) -> tuple[str, ...]:
        if input_kind == "manual" or self.profile is None:
            return tuple(tokenize(rec.transcript))
        hyp = asr_sim.corrupt_transcript(rec.transcript, self.profile, utt_id=rec.id)
        tokens = tuple(tokenize(hyp))
        # A fully-deleted hypothesis still needs one token to encode.
        return tokens if tokens else (models.UNK,)

    def example(self, rec: corpus.UtteranceRecord, input_kind: str,
                for_train: bool = False) -> models.Example:
        if input_kind in ("manual", "onebest"):
            tokens = self._text_tokens(rec, input_kind)
            slots = tuple(corpus.derive_slot_tags(self.grammar, list(tokens)))
            return models.Example(intent=rec.intent, tokens=tokens, slots=slots)
        if input_kind == "wcn":
            if for_train and self.spec.train_input == "manual":
                cn = wcn.from_tokens(tokenize(rec.transcript), source_id=rec.id)
            else:
                lat = asr_sim.synthesize_lattice(rec.transcript, self.profile, utt_id=rec.id)
                cn = wcn.build_from_lattice(lat, source_id=rec.id)
            return models.Example(intent=rec.intent, cn=cn)
        # multimodal: text side follows train_input; the acoustic stream
        # always derives from the spoken (gold) words.
        tokens = self._text_tokens(rec, self.spec.train_input)
        acoustic = models.make_acoustic_features(
            rec.transcript, self.frames_per_token, self.noise_sd,
            seed=_utt_seed(self.asr_seed, rec.id), d_acoustic=self.d_acoustic,
        )
        return models.Example(intent=rec.intent, tokens=tokens, acoustic=acoustic)

    def train_view(self, recs) -> list[models.Example]:
        kind = self.spec.eval_input if self.spec.family != "text" else self.spec.train_input
        return [self.example(r, kind, for_train=True) for r in recs]

    def eval_view(self, recs) -> list[models.Example]:
        return [self.example(r, self.spec.eval_input) for r in recs]


@dataclass
class SplitData:
    train: list[corpus.UtteranceRecord]
    dev: list[corpus.UtteranceRecord]
    test: list[corpus.UtteranceRecord]


def prepare_corpus(cfg: MatrixConfig) -> tuple[corpus.SyntheticGrammar, SplitData]:
    grammar = corpus.default_grammar(seed=cfg.grammar_seed)
    records = corpus.generate_synthetic_corpus(grammar, cfg.n_per_intent)
    result = corpus.split_corpus(records, cfg.split_fractions, cfg.split_seed)
    return grammar, SplitData(result.train, result.dev, result.test)


def _variant_records(spec: ExperimentSpec, data: SplitData) -> SplitData:
    if spec.dataset_variant == "original":
        return data
    return SplitData(
        corpus.filter_corpus(data.train).kept,
        corpus.filter_corpus(data.dev).kept,
        corpus.filter_corpus(data.test).kept,
    )


def run_experiment(spec: ExperimentSpec, grammar: corpus.SyntheticGrammar,
                   data: SplitData,
                   train_cfg: models.TrainConfig | None = None,
                   asr_seed: int = 101) -> tuple[list[metrics.ReportRow], models.Model]:
    """Train the model family `spec` asks for and score dev and test.
    Returns the report rows and the trained model."""
    train_cfg = train_cfg or models.TrainConfig()
    train_cfg = replace(train_cfg, seed=spec.seed)
    data = _variant_records(spec, data)
    if not data.train or not data.dev or not data.test:
        raise ContractError(f"{spec.id}: empty split after variant selection")

    builder = _ViewBuilder(spec, grammar, asr_seed=asr_seed)
    train_ex = builder.train_view(data.train)
    dev_ex = builder.eval_view(data.dev)
    test_ex = builder.eval_view(data.test)

    intents = sorted({r.intent for r in data.train})
    if spec.family == "text":
        tag_seqs = [ex.slots for ex in train_ex if ex.slots]
        labels = models.LabelSpace.build(intents, tag_seqs)
        token_seqs = [ex.tokens for ex in train_ex]
    elif spec.family == "wcn":
        labels = models.LabelSpace.build(intents)
        token_seqs = [[tok for b in ex.cn.bins for tok, _ in b.entries] for ex in train_ex]
    else:
        labels = models.LabelSpace.build(intents)
        token_seqs = [ex.tokens for ex in train_ex]
    vocab = models.Vocabulary.build(token_seqs)
    noise_sd = ACOUSTIC_PRESETS[spec.acoustic_preset]
    cfg = models.ModelConfig(
        spec.family, n_intents=len(labels.intents), n_slot_tags=len(labels.slot_tags),
        seed=spec.seed, noise_sd=noise_sd,
    )
    model = models.build_model(cfg, vocab, labels)
    model, _history = models.train(model, train_ex, dev_ex, train_cfg)

    rows = []
    for split_name, examples in (("dev", dev_ex), ("test", test_ex)):
        gold, pred = models.evaluate_intents(model, examples)
        f1 = metrics.f1_scores(gold, pred)
        rows.append(metrics.ReportRow(
            experiment=spec.id, variant=spec.dataset_variant, split=split_name,
            accuracy=metrics.intent_accuracy(gold, pred),
            f1_micro=f1.micro, f1_macro=f1.macro, per_class=f1.per_class,
        ))
    return rows, model


@dataclass
class MatrixResult:
    report: metrics.EvalReport
    failures: dict[str, str]
    improvements: list[tuple[str, str, float]]

    @property
    def ok(self) -> bool:
        return not self.failures


def _test_f1(report: metrics.EvalReport, experiment: str) -> float | None:
    for row in report.rows:
        if row.experiment == experiment and row.split == "test" and not row.failed:
            return row.f1_micro
    return None


def run_matrix(cfg: MatrixConfig) -> MatrixResult:
    """Run every spec; a failing experiment marks its rows FAILED and the
    matrix keeps going. Also computes relative improvements of the
    richer representations over the 1-best-trained text baseline."""
    grammar, data = prepare_corpus(cfg)
    report = metrics.EvalReport()
    failures: dict[str, str] = {}
    for spec in cfg.specs:
        try:
            rows, _model = run_experiment(spec, grammar, data, cfg.train,
                                          asr_seed=cfg.asr_seed)
            report.rows.extend(rows)
        except Exception as exc:  # noqa: BLE001 - a matrix row must not kill the run
            failures[spec.id] = str(exc)
            for split_name in ("dev", "test"):
                report.rows.append(metrics.ReportRow(
                    experiment=spec.id, variant=spec.dataset_variant,
                    split=split_name, error=str(exc),
                ))

    improvements: list[tuple[str, str, float]] = []
    baseline_id = next((s.id for s in cfg.specs
                        if s.family == "text" and s.train_input == "onebest"
                        and s.eval_input == "onebest"), None)
    if baseline_id is not None:
        base = _test_f1(report, baseline_id)
        if base:
            for spec in cfg.specs:
                if spec.family in ("wcn", "multimodal"):
                    candidate = _test_f1(report, spec.id)
                    if candidate is not None:
                        improvements.append((
                            spec.id, baseline_id,
                            metrics.relative_improvement(base, candidate),
                        ))
    return MatrixResult(report, failures, improvements)


def render_improvements(result: MatrixResult) -> str:
    if not result.improvements:
        return ""
    lines = ["", "Relative improvement over the 1-best baseline (test micro-F1):"]
    for exp, base, value in result.improvements:
        lines.append(f"- {exp} vs {base}: {metrics.round2(value)}%")
    return "\n".join(lines) + "\n"


# --- line-oriented matrix config files -------------------------------------

_GLOBAL_KEYS = {"n_per_intent", "split_seed", "grammar_seed", "asr_seed",
                "epochs", "lr", "batch", "clip", "train_seed"}
_SPEC_KEYS = {"family", "train_input", "eval_input", "asr_profile",
              "dataset_variant", "seed", "acoustic_preset"}


def parse_matrix_config(text: str) -> MatrixConfig:
    """Parse the ``key = value`` / ``[EXPn]`` matrix config format.

    Unknown keys are rejected with their line number. Sections define
    experiments; keys before the first section configure the corpus and
    trainer.
    """
    global_kv: dict[str, str] = {}
    sections: list[tuple[str, dict[str, str]]] = []
    current: dict[str, str] | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if not name:
                raise FormatError("empty section name", lineno)
            current = {}
            sections.append((name, current))
            continue
        if "=" not in line:
            raise FormatError(f"expected 'key = value', got {line!r}", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if current is None:
            if key not in _GLOBAL_KEYS:
                raise FormatError(f"unknown global key {key!r}", lineno)
            global_kv[key] = value
        else:
            if key not in _SPEC_KEYS:
                raise FormatError(f"unknown experiment key {key!r}", lineno)
            current[key] = value

    specs = []
    for name, kv in sections:
        try:
            specs.append(ExperimentSpec(
                id=name,
                family=kv["family"],
                train_input=kv.get("train_input", "manual"),
                eval_input=kv.get("eval_input", "manual"),
                asr_profile=kv.get("asr_profile", "none"),
                dataset_variant=kv.get("dataset_variant", "original"),
                seed=int(kv.get("seed", "0")),
                acoustic_preset=kv.get("acoustic_preset", "standard"),
            ))
        except KeyError as exc:
            raise FormatError(f"experiment {name!r} misses key {exc.args[0]!r}") from None

    train = models.TrainConfig(
        lr=float(global_kv.get("lr", models.TrainConfig.lr)),
        epochs=int(global_kv.get("epochs", models.TrainConfig.epochs)),
        batch=int(global_kv.get("batch", models.TrainConfig.batch)),
        clip=float(global_kv.get("clip", models.TrainConfig.clip)),
        seed=int(global_kv.get("train_seed", models.TrainConfig.seed)),
    )
    return MatrixConfig(
        specs=specs,
        n_per_intent=int(global_kv.get("n_per_intent", 63)),
        split_seed=int(global_kv.get("split_seed", 13)),
        grammar_seed=int(global_kv.get("grammar_seed", 5)),
        asr_seed=int(global_kv.get("asr_seed", 101)),
        train=train,
    )
