"""The three intent-classification model families and their training loop.

* text: trainable embeddings + positions, bidirectional GRU, one
  self-attention block, mean pooling; intent head on the pooled state
  and a CRF slot head fed the sequence states concatenated with the
  broadcast intent posterior (hierarchical multitask coupling).
* wcn: confusion-network bins enter as posterior-weighted sums of token
  embeddings (epsilon has its own row), then a stack of self-attention
  blocks, mean pooling, and an intent head.
* multimodal: token and acoustic streams are projected to a shared
  width, refined by directional crossmodal blocks against the other
  stream's low-level features, concatenated along time, passed through
  one self-attention block, and read out at the last position.

Training is plain SGD with global-norm clipping; batches accumulate
per-utterance gradients and average them, so runs are bit-reproducible
for a fixed seed in a single thread.
"""

from __future__ import annotations

import dataclasses
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError
from . import nnkernel as nk
from .nnkernel import ParamStore, Tensor, AttentionConfig
from .nnkernel import checkpoint as ckpt
from .textnorm import tokenize
from .wcn import EPSILON, ConfusionNetwork

PAD, UNK = "<pad>", "<unk>"
FAMILIES = ("text", "wcn", "multimodal")

_ACOUSTIC_CODE_SALT = 0x5EED


@dataclass(frozen=True)
class Vocabulary:
    index: dict[str, int]

    def __post_init__(self):
        for tok, want in ((PAD, 0), (UNK, 1), (EPSILON, 2)):
            if self.index.get(tok) != want:
                raise ContractError(f"special token {tok!r} must map to {want}")
        values = sorted(self.index.values())
        if values != list(range(len(self.index))):
            raise ContractError("vocabulary indices must be a bijection onto 0..n-1")

    @classmethod
    def build(cls, token_sequences) -> "Vocabulary":
        tokens = sorted({tok for seq in token_sequences for tok in seq}
                        - {PAD, UNK, EPSILON})
        index = {PAD: 0, UNK: 1, EPSILON: 2}
        for tok in tokens:
            index[tok] = len(index)
        return cls(index)

    def encode(self, tokens) -> list[int]:
        unk = self.index[UNK]
        return [self.index.get(tok, unk) for tok in tokens]

    @property
    def size(self) -> int:
        return len(self.index)


@dataclass(frozen=True)
class LabelSpace:
    intents: tuple[str, ...]
    slot_tags: tuple[str, ...] = ("O",)

    def __post_init__(self):
        if len(set(self.intents)) != len(self.intents) or not self.intents:
            raise ContractError("intent labels must be non-empty and unique")
        if "O" not in self.slot_tags or len(set(self.slot_tags)) != len(self.slot_tags):
            raise ContractError("slot tags must be unique and include 'O'")

    @classmethod
    def build(cls, intents, slot_tag_sequences=()) -> "LabelSpace":
        tags = {"O"}
        for seq in slot_tag_sequences:
            tags.update(seq)
        return cls(tuple(sorted(set(intents))), tuple(sorted(tags)))

    def intent_index(self, intent: str) -> int:
        try:
            return self.intents.index(intent)
        except ValueError:
            raise ContractError(f"unknown intent {intent!r}") from None

    def slot_index(self, tag: str) -> int:
        try:
            return self.slot_tags.index(tag)
        except ValueError:
            raise ContractError(f"unknown slot tag {tag!r}") from None


@dataclass(frozen=True)
class ModelConfig:
    family: str
    n_intents: int
    n_slot_tags: int = 1
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    hidden: int = 32
    multitask_weight: float = 0.5
    max_len: int = 64
    seed: int = 0
    d_acoustic: int = 16
    frames_per_token: int = 3
    noise_sd: float = 0.3

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ContractError(f"unknown model family {self.family!r}")
        for name in ("n_intents", "n_slot_tags", "d_model", "n_heads", "n_layers",
                     "hidden", "max_len", "d_acoustic", "frames_per_token"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be positive")
        if self.d_model % self.n_heads:
            raise ContractError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}"
            )
        if self.family == "text" and 2 * self.hidden != self.d_model:
            raise ContractError(
                "text family needs 2*hidden == d_model so the bidirectional "
                f"GRU feeds the attention block: {self.hidden} vs {self.d_model}"
            )
        if not 0.0 <= self.multitask_weight <= 1.0:
            raise ContractError("multitask_weight must lie in [0, 1]")

    def attention(self) -> AttentionConfig:
        return AttentionConfig(self.d_model, self.n_heads)


@dataclass(frozen=True)
class Example:
    """One labelled (or to-be-labelled) utterance in family-specific form."""

    intent: str | None = None
    tokens: tuple[str, ...] | None = None
    slots: tuple[str, ...] | None = None
    cn: ConfusionNetwork | None = None
    acoustic: np.ndarray | None = None


@dataclass
class Model:
    cfg: ModelConfig
    vocab: Vocabulary
    labels: LabelSpace
    store: ParamStore


def build_model(cfg: ModelConfig, vocab: Vocabulary, labels: LabelSpace) -> Model:
    if len(labels.intents) != cfg.n_intents:
        raise ContractError(
            f"config says {cfg.n_intents} intents, label space has {len(labels.intents)}"
        )
    store = ParamStore(cfg.seed)
    d = cfg.d_model
    store.embedding("emb", vocab.size, d)
    if cfg.family == "text":
        store.embedding("pos", cfg.max_len, d)
        nk.init_gru(store, "gru", d, cfg.hidden, bidirectional=True)
        nk.init_block(store, "enc0", d)
        store.weight("intent.w", d, cfg.n_intents)
        store.zeros("intent.b", 1, cfg.n_intents)
        store.weight("slot.w", d + cfg.n_intents, cfg.n_slot_tags)
        store.zeros("slot.b", 1, cfg.n_slot_tags)
        store.weight("slot.trans", cfg.n_slot_tags, cfg.n_slot_tags)
    elif cfg.family == "wcn":
        store.embedding("pos", cfg.max_len, d)
        for layer in range(cfg.n_layers):
            nk.init_block(store, f"enc{layer}", d)
        store.weight("intent.w", d, cfg.n_intents)
        store.zeros("intent.b", 1, cfg.n_intents)
    else:
        store.embedding("pos_text", cfg.max_len, d)
        store.embedding("pos_ac", cfg.max_len * cfg.frames_per_token, d)
        store.weight("proj_text.w", d, d)
        store.zeros("proj_text.b", 1, d)
        store.weight("proj_ac.w", cfg.d_acoustic, d)
        store.zeros("proj_ac.b", 1, d)
        for layer in range(cfg.n_layers):
            nk.init_block(store, f"cm_text{layer}", d)
            nk.init_block(store, f"cm_ac{layer}", d)
        nk.init_block(store, "fuse", d)
        store.weight("head.w1", d, d)
        store.zeros("head.b1", 1, d)
        store.weight("head.w2", d, cfg.n_intents)
        store.zeros("head.b2", 1, cfg.n_intents)
    return Model(cfg, vocab, labels, store)


def _embed_tokens(model: Model, tokens, pos_name: str | None = "pos") -> Tensor:
    toks = list(tokens)[: model.cfg.max_len]
    if not toks:
        raise ContractError("cannot encode an empty token sequence")
    ids = model.vocab.encode(toks)
    x = nk.embedding_gather(model.store["emb"], ids)
    if pos_name is None:
        return x
    return nk.add(x, nk.slice_rows(model.store[pos_name], 0, len(ids)))


def encode_text(model: Model, tokens) -> tuple[Tensor, Tensor]:
    """Embedding+position -> biGRU -> self-attention block -> (seq, pooled)."""
    if model.cfg.family != "text":
        raise ContractError(f"encode_text called on family {model.cfg.family!r}")
    x = _embed_tokens(model, tokens)
    g = nk.gru_layer(x, model.store, "gru", model.cfg.hidden, bidirectional=True)
    seq = nk.encoder_layer(g, model.cfg.attention(), model.store, "enc0")
    return seq, nk.mean_rows(seq)


def text_intent_forward(model: Model, seq: Tensor, pooled: Tensor) -> tuple[Tensor, Tensor]:
    """Intent logits from the pooled state; slot emissions from sequence
    states concatenated with the broadcast intent posterior."""
    logits = nk.add(nk.matmul(pooled, model.store["intent.w"]), model.store["intent.b"])
    posterior = nk.softmax_rows(logits)
    feats = nk.concat_cols([seq, nk.broadcast_rows(posterior, seq.shape[0])])
    emissions = nk.add(nk.matmul(feats, model.store["slot.w"]), model.store["slot.b"])
    return logits, emissions


def _wcn_bin_rows(model: Model, cn: ConfusionNetwork) -> Tensor:
    rows = []
    for k, b in enumerate(cn.bins[: model.cfg.max_len]):
        total = sum(p for _, p in b.entries)
        if abs(total - 1.0) > 1e-3:
            raise ContractError(f"bin {k} posteriors sum to {total}, expected 1 within 1e-3")
        ids = model.vocab.encode([tok for tok, _ in b.entries])
        table = nk.embedding_gather(model.store["emb"], ids)
        weights = Tensor([[p for _, p in b.entries]])
        rows.append(nk.matmul(weights, table))
    return nk.concat_rows(rows)


def _attention_stack(model: Model, x: Tensor) -> Tensor:
    for layer in range(model.cfg.n_layers):
        x = nk.encoder_layer(x, model.cfg.attention(), model.store, f"enc{layer}")
    return x


def encode_wcn(model: Model, cn: ConfusionNetwork) -> tuple[Tensor, Tensor]:
    """Posterior-weighted bin embeddings through the self-attention stack."""
    if model.cfg.family != "wcn":
        raise ContractError(f"encode_wcn called on family {model.cfg.family!r}")
    x = _wcn_bin_rows(model, cn)
    x = nk.add(x, nk.slice_rows(model.store["pos"], 0, x.shape[0]))
    seq = _attention_stack(model, x)
    return seq, nk.mean_rows(seq)


def make_acoustic_features(transcript: str, frames_per_token: int = 3,
                           noise_sd: float = 0.3, seed: int = 0,
                           d_acoustic: int = 16) -> np.ndarray:
    """Frame-level stand-in for speech embeddings.

    Each token owns a deterministic hash-seeded base code shared across
    utterances; the code repeats frames_per_token times with Gaussian
    perturbation. Token count and frame rate are decoupled on purpose,
    so the stream is never aligned with the token sequence.
    """
    if frames_per_token < 1:
        raise ContractError(f"frames_per_token must be >= 1, got {frames_per_token}")
    tokens = tokenize(transcript)
    if not tokens:
        raise ContractError("cannot featurize an empty transcript")
    noise_rng = np.random.default_rng([seed, zlib.crc32(transcript.encode("utf-8"))])
    frames = []
    for tok in tokens:
        code_rng = np.random.default_rng([_ACOUSTIC_CODE_SALT, zlib.crc32(tok.encode("utf-8"))])
        base = code_rng.standard_normal(d_acoustic)
        for _ in range(frames_per_token):
            frame = base
            if noise_sd > 0:
                frame = base + noise_sd * noise_rng.standard_normal(d_acoustic)
            frames.append(frame)
    return np.array(frames)


def encode_multimodal(model: Model, text_stream: Tensor,
                      acoustic_stream: Tensor) -> tuple[Tensor, Tensor]:
    """Directional crossmodal refinement, concatenation along time,
    self-attention fusion, last-position readout.

    Streams may have any positive lengths; nothing is resampled or
    truncated to align them. Returns (pooled 1xd state, fused sequence).
    """
    if model.cfg.family != "multimodal":
        raise ContractError(f"encode_multimodal called on family {model.cfg.family!r}")
    if text_stream.shape[0] < 1 or acoustic_stream.shape[0] < 1:
        raise ContractError("multimodal streams must be non-empty")
    store, cfg = model.store, model.cfg
    attn = cfg.attention()
    t = nk.add(nk.matmul(text_stream, store["proj_text.w"]), store["proj_text.b"])
    t = nk.add(t, nk.slice_rows(store["pos_text"], 0, t.shape[0]))
    a = nk.add(nk.matmul(acoustic_stream, store["proj_ac.w"]), store["proj_ac.b"])
    a = nk.add(a, nk.slice_rows(store["pos_ac"], 0, a.shape[0]))

    t_low, a_low = t, a
    for layer in range(cfg.n_layers):
        t = nk.crossmodal_attention_block(t, a_low, attn, store, f"cm_text{layer}")
        a = nk.crossmodal_attention_block(a, t_low, attn, store, f"cm_ac{layer}")
    fused = nk.concat_rows([t, a])
    fused = nk.encoder_layer(fused, attn, store, "fuse")
    pooled = nk.slice_rows(fused, fused.shape[0] - 1, fused.shape[0])
    return pooled, fused


def _multimodal_logits(model: Model, ex: Example) -> Tensor:
    if ex.tokens is None or ex.acoustic is None:
        raise ContractError("multimodal examples need tokens and acoustic features")
    max_frames = model.cfg.max_len * model.cfg.frames_per_token
    acoustic = np.asarray(ex.acoustic, dtype=np.float64)[:max_frames]
    text_stream = _embed_tokens(model, ex.tokens, pos_name=None)
    pooled, _ = encode_multimodal(model, text_stream, Tensor(acoustic))
    hidden = nk.relu(nk.add(nk.matmul(pooled, model.store["head.w1"]), model.store["head.b1"]))
    return nk.add(nk.matmul(hidden, model.store["head.w2"]), model.store["head.b2"])


def intent_logits(model: Model, ex: Example) -> Tensor:
    if model.cfg.family == "text":
        if ex.tokens is None:
            raise ContractError("text examples need tokens")
        seq, pooled = encode_text(model, ex.tokens)
        logits, _ = text_intent_forward(model, seq, pooled)
        return logits
    if model.cfg.family == "wcn":
        if ex.cn is None:
            raise ContractError("wcn examples need a confusion network")
        _, pooled = encode_wcn(model, ex.cn)
        return nk.add(nk.matmul(pooled, model.store["intent.w"]), model.store["intent.b"])
    return _multimodal_logits(model, ex)


def loss_for(model: Model, ex: Example) -> Tensor:
    """Scalar training loss for one example."""
    if ex.intent is None:
        raise ContractError("training examples need a gold intent")
    gold = [model.labels.intent_index(ex.intent)]
    if model.cfg.family == "text":
        seq, pooled = encode_text(model, ex.tokens or ())
        logits, emissions = text_intent_forward(model, seq, pooled)
        intent_loss = nk.cross_entropy(logits, gold)
        if ex.slots is None:
            return intent_loss
        tags = [model.labels.slot_index(t) for t in ex.slots[: emissions.shape[0]]]
        if len(tags) != emissions.shape[0]:
            raise ContractError(
                f"slot tags ({len(tags)}) do not cover the token sequence "
                f"({emissions.shape[0]})"
            )
        slot_loss = nk.crf_nll(emissions, model.store["slot.trans"], tags)
        w = model.cfg.multitask_weight
        return nk.add(nk.scale_shift(intent_loss, w), nk.scale_shift(slot_loss, 1.0 - w))
    return nk.cross_entropy(intent_logits(model, ex), gold)


def predict(model: Model, ex: Example) -> str:
    """Argmax intent; ties resolve to the smallest label index."""
    logits = intent_logits(model, ex)
    return model.labels.intents[int(np.argmax(logits.data[0]))]


def predict_slots(model: Model, ex: Example) -> list[str]:
    if model.cfg.family != "text":
        raise ContractError("slot decoding is only defined for the text family")
    seq, pooled = encode_text(model, ex.tokens or ())
    _, emissions = text_intent_forward(model, seq, pooled)
    labels, _ = nk.crf_viterbi(emissions, model.store["slot.trans"])
    return [model.labels.slot_tags[i] for i in labels]


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.2
    epochs: int = 18
    batch: int = 8
    clip: float = 5.0
    seed: int = 0


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    dev_accuracy: float


def evaluate_intents(model: Model, examples) -> tuple[list[str], list[str]]:
    gold, pred = [], []
    for ex in examples:
        gold.append(ex.intent)
        pred.append(predict(model, ex))
    return gold, pred


def train(model: Model, train_set: list[Example], dev_set: list[Example],
          hp: TrainConfig) -> tuple[Model, list[EpochStats]]:
    """Mini-batch SGD; returns the parameters of the best dev epoch.

    Batches accumulate per-example gradients and average them. Shuffling
    derives from (seed, epoch), so a fixed seed reproduces the run
    bit-for-bit in a single thread.
    """
    if not train_set:
        raise ContractError("training set is empty")
    if not dev_set:
        raise ContractError("dev set is empty")
    params = model.store.as_dict()
    history: list[EpochStats] = []
    best_acc = -1.0
    best_values = model.store.snapshot()
    for epoch in range(hp.epochs):
        rng = np.random.default_rng([hp.seed, epoch])
        order = rng.permutation(len(train_set))
        total_loss = 0.0
        for lo in range(0, len(order), hp.batch):
            batch = order[lo:lo + hp.batch]
            model.store.zero_grads()
            for i in batch:
                loss = loss_for(model, train_set[i])
                total_loss += loss.item()
                loss.backward()
            grads = {name: g / len(batch) for name, g in model.store.grads().items()}
            nk.sgd_step(params, grads, hp.lr, hp.clip)
        gold, pred = evaluate_intents(model, dev_set)
        acc = sum(g == p for g, p in zip(gold, pred)) / len(gold)
        history.append(EpochStats(epoch, total_loss / len(order), acc))
        if acc > best_acc:
            best_acc = acc
            best_values = model.store.snapshot()
    model.store.load_values(best_values)
    model.store.zero_grads()
    return model, history


def save_model(path: str | Path, model: Model) -> None:
    config = {
        "model": dataclasses.asdict(model.cfg),
        "intents": list(model.labels.intents),
        "slot_tags": list(model.labels.slot_tags),
        "vocab": model.vocab.index,
    }
    ckpt.save_params(path, model.store.snapshot(), config)


def load_model(path: str | Path) -> Model:
    values, config = ckpt.load_params(path)
    cfg = ModelConfig(**config["model"])
    vocab = Vocabulary(dict(config["vocab"]))
    labels = LabelSpace(tuple(config["intents"]), tuple(config["slot_tags"]))
    model = build_model(cfg, vocab, labels)
    model.store.load_values(values)
    return model
