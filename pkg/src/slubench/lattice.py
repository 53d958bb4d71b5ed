"""Word-lattice data structure and algorithms.

A lattice is a DAG over timed nodes with word-labelled, scored arcs.
Node 0 is the unique start, node n-1 the unique final. Arc weights are
natural-log probabilities combined as ``am_score + lm_scale * lm_score``.
Posteriors use the log semiring, best paths the tropical semiring; all
sums run in the log domain.

Text format (UTF-8, line oriented, ``#`` starts a comment line)::

    LAT <n_nodes> <n_arcs>
    N <id> <time_sec>            one line per node, ids 0..n-1
    A <from> <to> <word> <am_score> <lm_score>

``-`` and ``<eps>`` are prohibited as words; fields are single-space
separated. Serialization is canonical: nodes by id, arcs sorted by
(from, to, word, am, lm), floats printed with shortest round-trip repr.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, FormatError
from .textnorm import tokenize

_FORBIDDEN_WORDS = ("-", "<eps>")


@dataclass(frozen=True)
class Arc:
    from_node: int
    to_node: int
    word: str
    am_score: float
    lm_score: float

    def weight(self, lm_scale: float) -> float:
        return self.am_score + lm_scale * self.lm_score


@dataclass(frozen=True)
class Lattice:
    times: tuple[float, ...]
    arcs: tuple[Arc, ...]

    @property
    def n_nodes(self) -> int:
        return len(self.times)

    @property
    def start(self) -> int:
        return 0

    @property
    def final(self) -> int:
        return self.n_nodes - 1


def make_lattice(times: list[float], arcs: list[Arc]) -> Lattice:
    lat = Lattice(tuple(times), tuple(arcs))
    validate_lattice(lat)
    return lat


def _out_arcs(lat: Lattice) -> list[list[int]]:
    out: list[list[int]] = [[] for _ in range(lat.n_nodes)]
    for i, arc in enumerate(lat.arcs):
        out[arc.from_node].append(i)
    return out


def _in_arcs(lat: Lattice) -> list[list[int]]:
    inc: list[list[int]] = [[] for _ in range(lat.n_nodes)]
    for i, arc in enumerate(lat.arcs):
        inc[arc.to_node].append(i)
    return inc


def topological_order(lat: Lattice) -> list[int]:
    """Kahn's algorithm; raises ContractError naming one cycle if cyclic."""
    indeg = [0] * lat.n_nodes
    for arc in lat.arcs:
        indeg[arc.to_node] += 1
    out = _out_arcs(lat)
    ready = [v for v in range(lat.n_nodes) if indeg[v] == 0]
    order: list[int] = []
    while ready:
        v = ready.pop()
        order.append(v)
        for i in out[v]:
            u = lat.arcs[i].to_node
            indeg[u] -= 1
            if indeg[u] == 0:
                ready.append(u)
    if len(order) != lat.n_nodes:
        cycle = _find_cycle(lat, {v for v in range(lat.n_nodes) if indeg[v] > 0})
        raise ContractError(f"lattice contains a cycle: {' -> '.join(map(str, cycle))}")
    return order


def _find_cycle(lat: Lattice, candidates: set[int]) -> list[int]:
    out = _out_arcs(lat)
    start = min(candidates)
    path: list[int] = []
    seen: dict[int, int] = {}
    v = start
    while v not in seen:
        seen[v] = len(path)
        path.append(v)
        v = next(lat.arcs[i].to_node for i in out[v] if lat.arcs[i].to_node in candidates)
    return path[seen[v]:] + [v]


def validate_lattice(lat: Lattice) -> None:
    """Check every structural invariant; raise ContractError on the first breach."""
    n = lat.n_nodes
    if n < 2:
        raise ContractError(f"lattice needs at least 2 nodes, got {n}")
    if not lat.arcs:
        raise ContractError("lattice has no arcs")
    for arc in lat.arcs:
        if not (0 <= arc.from_node < n and 0 <= arc.to_node < n):
            raise ContractError(f"arc references unknown node: {arc.from_node}->{arc.to_node}")
        if arc.word in _FORBIDDEN_WORDS or not arc.word or any(c.isspace() for c in arc.word):
            raise ContractError(f"illegal arc word {arc.word!r}")
        if lat.times[arc.to_node] < lat.times[arc.from_node]:
            raise ContractError(
                f"arc {arc.from_node}->{arc.to_node} runs backwards in time"
            )
        if arc.to_node == lat.start:
            raise ContractError("start node has an incoming arc")
        if arc.from_node == lat.final:
            raise ContractError("final node has an outgoing arc")
    topological_order(lat)

    fwd = {lat.start}
    changed = True
    out = _out_arcs(lat)
    while changed:
        changed = False
        for v in list(fwd):
            for i in out[v]:
                if lat.arcs[i].to_node not in fwd:
                    fwd.add(lat.arcs[i].to_node)
                    changed = True
    bwd = {lat.final}
    inc = _in_arcs(lat)
    changed = True
    while changed:
        changed = False
        for v in list(bwd):
            for i in inc[v]:
                if lat.arcs[i].from_node not in bwd:
                    bwd.add(lat.arcs[i].from_node)
                    changed = True
    for v in range(n):
        if v not in fwd or v not in bwd:
            raise ContractError(f"node {v} lies on no start-to-final path")


def parse_lattice(text: str) -> Lattice:
    """Parse the lattice text format; errors carry 1-based line numbers."""
    lines = text.splitlines()
    header: tuple[int, int] | None = None
    times: dict[int, float] = {}
    arcs: list[Arc] = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split(" ")
        if header is None:
            if fields[0] != "LAT" or len(fields) != 3:
                raise FormatError("expected header 'LAT <n_nodes> <n_arcs>'", lineno)
            try:
                header = (int(fields[1]), int(fields[2]))
            except ValueError:
                raise FormatError("non-integer lattice header counts", lineno) from None
            continue
        if fields[0] == "N":
            if len(fields) != 3:
                raise FormatError("node line needs 'N <id> <time_sec>'", lineno)
            try:
                node_id, t = int(fields[1]), float(fields[2])
            except ValueError:
                raise FormatError("malformed node line", lineno) from None
            if node_id in times:
                raise FormatError(f"duplicate node id {node_id}", lineno)
            times[node_id] = t
        elif fields[0] == "A":
            if len(fields) != 6:
                raise FormatError("arc line needs 'A <from> <to> <word> <am> <lm>'", lineno)
            try:
                arc = Arc(int(fields[1]), int(fields[2]), fields[3],
                          float(fields[4]), float(fields[5]))
            except ValueError:
                raise FormatError("malformed arc line", lineno) from None
            if arc.word in _FORBIDDEN_WORDS:
                raise FormatError(f"word {arc.word!r} is prohibited", lineno)
            arcs.append(arc)
        else:
            raise FormatError(f"unknown record type {fields[0]!r}", lineno)
    if header is None:
        raise FormatError("empty lattice text", 1)
    n_nodes, n_arcs = header
    if sorted(times) != list(range(n_nodes)):
        raise FormatError(f"node ids must be exactly 0..{n_nodes - 1}", 1)
    if len(arcs) != n_arcs:
        raise FormatError(f"header declares {n_arcs} arcs, found {len(arcs)}", 1)
    for arc in arcs:
        if not (0 <= arc.from_node < n_nodes and 0 <= arc.to_node < n_nodes):
            raise FormatError(
                f"arc {arc.from_node}->{arc.to_node} references an unknown node", 1
            )
    lat = Lattice(tuple(times[i] for i in range(n_nodes)), tuple(arcs))
    validate_lattice(lat)
    return lat


def serialize_lattice(lat: Lattice) -> str:
    validate_lattice(lat)
    out = [f"LAT {lat.n_nodes} {len(lat.arcs)}"]
    for i, t in enumerate(lat.times):
        out.append(f"N {i} {float(t)!r}")
    key = lambda a: (a.from_node, a.to_node, a.word, a.am_score, a.lm_score)
    for arc in sorted(lat.arcs, key=key):
        out.append(f"A {arc.from_node} {arc.to_node} {arc.word} "
                   f"{float(arc.am_score)!r} {float(arc.lm_score)!r}")
    return "\n".join(out) + "\n"


def forward_backward(lat: Lattice, lm_scale: float = 1.0) -> np.ndarray:
    """Arc posteriors via log-domain forward/backward path sums.

    Returns an array aligned with ``lat.arcs``: posterior(a) =
    exp(alpha(from) + w(a) + beta(to) - logZ).
    """
    order = topological_order(lat)
    out = _out_arcs(lat)
    inc = _in_arcs(lat)
    alpha = np.full(lat.n_nodes, -np.inf)
    alpha[lat.start] = 0.0
    for v in order:
        for i in inc[v]:
            arc = lat.arcs[i]
            alpha[v] = np.logaddexp(alpha[v], alpha[arc.from_node] + arc.weight(lm_scale))
    beta = np.full(lat.n_nodes, -np.inf)
    beta[lat.final] = 0.0
    for v in reversed(order):
        for i in out[v]:
            arc = lat.arcs[i]
            beta[v] = np.logaddexp(beta[v], beta[arc.to_node] + arc.weight(lm_scale))
    log_z = alpha[lat.final]
    post = np.empty(len(lat.arcs))
    for i, arc in enumerate(lat.arcs):
        post[i] = math.exp(alpha[arc.from_node] + arc.weight(lm_scale) + beta[arc.to_node] - log_z)
    return post


def best_path(lat: Lattice, lm_scale: float = 1.0) -> tuple[str, float]:
    """Max-weight start-to-final path; ties break to the lexicographically
    smallest word sequence.

    Computed as a suffix DP in reverse topological order so that the
    tie-break composes correctly across shared nodes.
    """
    order = topological_order(lat)
    out = _out_arcs(lat)
    best: dict[int, tuple[float, tuple[str, ...]]] = {lat.final: (0.0, ())}
    for v in reversed(order):
        if v == lat.final:
            continue
        candidate: tuple[float, tuple[str, ...]] | None = None
        for i in out[v]:
            arc = lat.arcs[i]
            if arc.to_node not in best:
                continue
            score, words = best[arc.to_node]
            cand = (score + arc.weight(lm_scale), (arc.word,) + words)
            if candidate is None or cand[0] > candidate[0] or (
                cand[0] == candidate[0] and cand[1] < candidate[1]
            ):
                candidate = cand
        if candidate is not None:
            best[v] = candidate
    score, words = best[lat.start]
    return " ".join(words), score


def nbest(lat: Lattice, n: int, lm_scale: float = 1.0) -> list[tuple[str, float]]:
    """Top-n distinct word sequences by path score, descending.

    Duplicate word sequences are merged keeping their best score. Uses
    best-first search with the exact suffix score as heuristic, so
    partial paths pop in true total-score order.
    """
    if n < 1:
        raise ContractError(f"n must be >= 1, got {n}")
    order = topological_order(lat)
    out = _out_arcs(lat)
    suffix = np.full(lat.n_nodes, -np.inf)
    suffix[lat.final] = 0.0
    for v in reversed(order):
        for i in out[v]:
            arc = lat.arcs[i]
            suffix[v] = max(suffix[v], suffix[arc.to_node] + arc.weight(lm_scale))

    results: dict[tuple[str, ...], float] = {}
    counter = 0
    heap: list[tuple[float, tuple[str, ...], int, int]] = []
    heapq.heappush(heap, (-suffix[lat.start], (), counter, lat.start))
    while heap:
        neg_total, words, _, v = heapq.heappop(heap)
        total = -neg_total
        if len(results) >= n:
            nth = sorted(results.values(), reverse=True)[n - 1]
            if total < nth:
                break
        if v == lat.final:
            if words not in results:
                results[words] = total
            continue
        for i in out[v]:
            arc = lat.arcs[i]
            g = total - suffix[v] + arc.weight(lm_scale)
            counter += 1
            heapq.heappush(heap, (-(g + suffix[arc.to_node]), words + (arc.word,),
                                  counter, arc.to_node))
    ranked = sorted(results.items(), key=lambda kv: (-kv[1], kv[0]))[:n]
    return [(" ".join(words), float(score)) for words, score in ranked]


@dataclass
class _OracleState:
    cost: int
    back: tuple[int, int] | None = None
    word: str | None = None


def oracle_wer(lat: Lattice, reference: str) -> tuple[float, str]:
    """Minimum WER over all lattice paths, with one achieving path.

    Dynamic program over (node, reference position) states: arcs either
    consume a reference token (match or substitution) or act as an
    insertion; skipping a reference token within a node is a deletion.
    """
    ref = tokenize(reference)
    if not ref:
        raise ContractError("empty reference: oracle WER is undefined")
    r = len(ref)
    order = topological_order(lat)
    out = _out_arcs(lat)
    inf = math.inf
    cost = {(v, j): inf for v in range(lat.n_nodes) for j in range(r + 1)}
    back: dict[tuple[int, int], tuple[tuple[int, int], str | None]] = {}
    cost[(lat.start, 0)] = 0

    def relax(state: tuple[int, int], new_cost: float, prev: tuple[int, int],
              word: str | None) -> None:
        if new_cost < cost[state]:
            cost[state] = new_cost
            back[state] = (prev, word)

    for v in order:
        for j in range(r):
            if cost[(v, j)] < inf:
                relax((v, j + 1), cost[(v, j)] + 1, (v, j), None)
        for i in out[v]:
            arc = lat.arcs[i]
            for j in range(r + 1):
                c = cost[(v, j)]
                if c == inf:
                    continue
                relax((arc.to_node, j), c + 1, (v, j), arc.word)
                if j < r:
                    step = 0 if arc.word == ref[j] else 1
                    relax((arc.to_node, j + 1), c + step, (v, j), arc.word)

    final_cost = cost[(lat.final, r)]
    words: list[str] = []
    state = (lat.final, r)
    while state != (lat.start, 0):
        prev, word = back[state]
        if word is not None:
            words.append(word)
        state = prev
    words.reverse()
    return final_cost / r, " ".join(words)
