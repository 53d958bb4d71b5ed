"""Word confusion networks: construction from lattices, one-best, text format.

A confusion network is an ordered list of bins; each bin holds distinct
tokens with posteriors that sum to 1. ``<eps>`` is the reserved token
carrying the mass of paths that skip the bin.

Text format: line 1 ``WCN <n_bins>``; then one line per bin::

    B <start> <end> token:posterior token:posterior ...

with entries in canonical order (posterior descending, token ascending)
and posteriors printed with 6 decimals.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ContractError, FormatError
from .lattice import Lattice, forward_backward

EPSILON = "<eps>"

# Bins dominated by epsilon mass carry almost no word signal; prune them.
EPSILON_PRUNE_DEFAULT = 0.99


@dataclass(frozen=True)
class Bin:
    entries: tuple[tuple[str, float], ...]
    time_span: tuple[float, float]

    def posterior(self, token: str) -> float:
        for tok, p in self.entries:
            if tok == token:
                return p
        return 0.0


@dataclass(frozen=True)
class ConfusionNetwork:
    bins: tuple[Bin, ...]
    source_id: str = ""


def _canonical_entries(entries: dict[str, float]) -> tuple[tuple[str, float], ...]:
    return tuple(sorted(entries.items(), key=lambda kv: (-kv[1], kv[0])))


def validate_wcn(cn: ConfusionNetwork, tol: float = 1e-6) -> None:
    # Bin order is temporal by construction: clustering consumes arcs as
    # consecutive runs of the midpoint-sorted arc list, so per-bin mean
    # arc midpoints are nondecreasing. Only per-bin invariants need a check.
    if not cn.bins:
        raise ContractError("confusion network has no bins")
    for k, b in enumerate(cn.bins):
        if not b.entries:
            raise ContractError(f"bin {k} is empty")
        tokens = [tok for tok, _ in b.entries]
        if len(tokens) != len(set(tokens)):
            raise ContractError(f"bin {k} repeats a token")
        total = sum(p for _, p in b.entries)
        if abs(total - 1.0) > tol:
            raise ContractError(f"bin {k} posteriors sum to {total}, expected 1")
        if any(p <= 0.0 or p > 1.0 + tol for _, p in b.entries):
            raise ContractError(f"bin {k} has a posterior outside (0, 1]")


def build_from_lattice(lat: Lattice, lm_scale: float = 1.0,
                       epsilon_prune: float = EPSILON_PRUNE_DEFAULT,
                       source_id: str = "") -> ConfusionNetwork:
    """Cluster lattice arcs into posterior bins.

    Arcs are sorted by midpoint time and greedily clustered: an arc
    joins the current bin iff its time interval strictly overlaps the
    bin's running intersection interval. Same-word arcs in a bin merge
    by summing posteriors; mass below 1 becomes an ``<eps>`` entry; each
    bin is then normalized to sum exactly 1.
    """
    post = forward_backward(lat, lm_scale)
    items = []
    for arc, p in zip(lat.arcs, post):
        start, end = lat.times[arc.from_node], lat.times[arc.to_node]
        items.append((start, end, arc.word, p))
    items.sort(key=lambda it: ((it[0] + it[1]) / 2.0, it[0], it[1], it[2]))

    clusters: list[list[tuple[float, float, str, float]]] = []
    lo = hi = 0.0
    for item in items:
        start, end = item[0], item[1]
        if clusters and start < hi and lo < end:
            clusters[-1].append(item)
            lo, hi = max(lo, start), min(hi, end)
        else:
            clusters.append([item])
            lo, hi = start, end

    bins: list[Bin] = []
    for cluster in clusters:
        masses: dict[str, float] = {}
        for _, _, word, p in cluster:
            if p > 0.0:
                masses[word] = masses.get(word, 0.0) + p
        if not masses:
            continue
        total = sum(masses.values())
        if total < 1.0 - 1e-9:
            masses[EPSILON] = 1.0 - total
            total = 1.0
        masses = {tok: p / total for tok, p in masses.items()}
        span = (min(c[0] for c in cluster), max(c[1] for c in cluster))
        bins.append(Bin(_canonical_entries(masses), span))

    kept = [b for b in bins if b.posterior(EPSILON) <= epsilon_prune]
    if not kept:
        kept = bins
    cn = ConfusionNetwork(tuple(kept), source_id)
    validate_wcn(cn)
    return cn


def from_tokens(tokens: list[str], slot_seconds: float = 0.3,
                source_id: str = "") -> ConfusionNetwork:
    """Degenerate network: one posterior-1 bin per token."""
    if not tokens:
        raise ContractError("cannot build a confusion network from no tokens")
    bins = tuple(
        Bin(((tok, 1.0),), (i * slot_seconds, (i + 1) * slot_seconds))
        for i, tok in enumerate(tokens)
    )
    return ConfusionNetwork(bins, source_id)


def one_best(cn: ConfusionNetwork) -> str:
    """Per-bin argmax; ties go to the lexicographically smallest token and
    epsilon loses every tie. Epsilon picks emit nothing."""
    validate_wcn(cn)
    words = []
    for b in cn.bins:
        tok = min(b.entries, key=lambda e: (-e[1], e[0] == EPSILON, e[0]))[0]
        if tok != EPSILON:
            words.append(tok)
    return " ".join(words)


def serialize_wcn(cn: ConfusionNetwork) -> str:
    validate_wcn(cn)
    out = [f"WCN {len(cn.bins)}"]
    for b in cn.bins:
        entries = " ".join(f"{tok}:{p:.6f}" for tok, p in _canonical_entries(dict(b.entries)))
        out.append(f"B {float(b.time_span[0])!r} {float(b.time_span[1])!r} {entries}")
    return "\n".join(out) + "\n"


def parse_wcn(text: str) -> ConfusionNetwork:
    lines = [ln for ln in text.splitlines()]
    header: int | None = None
    bins: list[Bin] = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split(" ")
        if header is None:
            if fields[0] != "WCN" or len(fields) != 2:
                raise FormatError("expected header 'WCN <n_bins>'", lineno)
            try:
                header = int(fields[1])
            except ValueError:
                raise FormatError("non-integer bin count", lineno) from None
            continue
        if fields[0] != "B" or len(fields) < 4:
            raise FormatError("bin line needs 'B <start> <end> token:posterior ...'", lineno)
        try:
            start, end = float(fields[1]), float(fields[2])
        except ValueError:
            raise FormatError("malformed bin times", lineno) from None
        entries: dict[str, float] = {}
        for piece in fields[3:]:
            tok, sep, value = piece.rpartition(":")
            if not sep or not tok:
                raise FormatError(f"malformed entry {piece!r}", lineno)
            try:
                p = float(value)
            except ValueError:
                raise FormatError(f"malformed posterior in {piece!r}", lineno) from None
            if tok in entries:
                raise FormatError(f"bin repeats token {tok!r}", lineno)
            entries[tok] = p
        total = sum(entries.values())
        if abs(total - 1.0) > 1e-3:
            raise FormatError(
                f"bin {len(bins)} posteriors sum to {total}, expected 1 within 1e-3", lineno
            )
        entries = {tok: p / total for tok, p in entries.items()}
        bins.append(Bin(_canonical_entries(entries), (start, end)))
    if header is None:
        raise FormatError("empty confusion network text", 1)
    if len(bins) != header:
        raise FormatError(f"header declares {header} bins, found {len(bins)}", 1)
    cn = ConfusionNetwork(tuple(bins))
    validate_wcn(cn)
    return cn
