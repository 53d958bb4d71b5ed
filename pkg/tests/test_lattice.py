import math

import numpy as np
import pytest

from slubench import metrics
from slubench.errors import ContractError, FormatError
from slubench.lattice import (
    Arc,
    best_path,
    forward_backward,
    make_lattice,
    nbest,
    oracle_wer,
    parse_lattice,
    serialize_lattice,
    topological_order,
)

from conftest import enumerate_paths, random_lattice


class TestValidation:
    def test_cycle_rejected(self):
        arcs = [Arc(0, 1, "a", 0, 0), Arc(1, 2, "b", 0, 0),
                Arc(2, 1, "c", 0, 0), Arc(2, 3, "d", 0, 0)]
        with pytest.raises(ContractError, match="cycle"):
            make_lattice([0.0, 0.1, 0.1, 0.2], arcs)

    def test_unreachable_node_rejected(self):
        arcs = [Arc(0, 2, "a", 0, 0)]
        with pytest.raises(ContractError, match="node 1"):
            make_lattice([0.0, 0.1, 0.2], arcs)

    def test_unknown_node_rejected(self):
        with pytest.raises(ContractError, match="unknown node"):
            make_lattice([0.0, 0.1], [Arc(0, 5, "a", 0, 0)])

    def test_backwards_time_rejected(self):
        with pytest.raises(ContractError, match="backwards"):
            make_lattice([0.5, 0.0], [Arc(0, 1, "a", 0, 0)])

    def test_epsilon_word_rejected(self):
        with pytest.raises(ContractError):
            make_lattice([0.0, 0.1], [Arc(0, 1, "<eps>", 0, 0)])


class TestParseSerialize:
    def test_minimal(self):
        lat = parse_lattice("LAT 2 1\nN 0 0.0\nN 1 0.3\nA 0 1 hello -0.5 0.0\n")
        assert lat.n_nodes == 2
        assert lat.arcs[0].word == "hello"

    def test_comments_and_blanks(self):
        text = "# header comment\nLAT 2 1\n\nN 0 0.0\nN 1 0.3\nA 0 1 hi -1.0 0.0\n"
        assert parse_lattice(text).arcs[0].word == "hi"

    def test_round_trip_isomorphic(self, diamond):
        text = serialize_lattice(diamond)
        again = serialize_lattice(parse_lattice(text))
        assert text == again

    def test_two_serializations_identical(self, diamond):
        assert serialize_lattice(diamond) == serialize_lattice(diamond)

    def test_diamond_has_sorted_arc_lines(self, diamond):
        lines = [l for l in serialize_lattice(diamond).splitlines() if l.startswith("A")]
        assert len(lines) == 4
        assert lines == sorted(lines, key=lambda l: (int(l.split()[1]), int(l.split()[2]),
                                                     l.split()[3]))

    def test_unknown_node_reference_errors(self):
        with pytest.raises(FormatError):
            parse_lattice("LAT 2 1\nN 0 0.0\nN 1 0.3\nA 0 9 x -1.0 0.0\n")

    def test_syntax_error_carries_line_number(self):
        with pytest.raises(FormatError, match="line 3"):
            parse_lattice("LAT 2 1\nN 0 0.0\nN x 0.3\nA 0 1 x -1.0 0.0\n")

    def test_dash_word_rejected(self):
        with pytest.raises(FormatError, match="prohibited"):
            parse_lattice("LAT 2 1\nN 0 0.0\nN 1 0.3\nA 0 1 - -1.0 0.0\n")

    def test_random_lattices_round_trip(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            lat = random_lattice(rng)
            text = serialize_lattice(lat)
            assert serialize_lattice(parse_lattice(text)) == text


class TestForwardBackward:
    def test_single_path_posteriors_one(self, single_path):
        post = forward_backward(single_path)
        assert np.allclose(post, 1.0)

    def test_diamond_hand_values(self, diamond):
        post = forward_backward(diamond)
        by_word = {arc.word: p for arc, p in zip(diamond.arcs, post)}
        assert by_word["cat"] == pytest.approx(0.75, abs=1e-12)
        assert by_word["hat"] == pytest.approx(0.25, abs=1e-12)

    def test_matches_enumeration_on_random_lattices(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            lat = random_lattice(rng)
            lm_scale = float(rng.uniform(0.5, 1.5))
            post = forward_backward(lat, lm_scale)
            paths = enumerate_paths(lat, lm_scale)
            weights = np.array([w for _, _, w in paths])
            z = np.logaddexp.reduce(weights)
            for i in range(len(lat.arcs)):
                through = [w for ids, _, w in paths if i in ids]
                expected = math.exp(np.logaddexp.reduce(through) - z) if through else 0.0
                assert post[i] == pytest.approx(expected, abs=1e-9)

    def test_cut_sums_to_one(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            lat = random_lattice(rng)
            post = forward_backward(lat)
            order = topological_order(lat)
            for k in range(1, len(order)):
                prefix = set(order[:k])
                if lat.final in prefix:
                    continue
                crossing = sum(p for arc, p in zip(lat.arcs, post)
                               if arc.from_node in prefix and arc.to_node not in prefix)
                assert crossing == pytest.approx(1.0, abs=1e-9)

    def test_log_domain_stability_long_chain(self):
        n = 51
        arcs = [Arc(i, i + 1, f"w{i}", -100.0, 0.0) for i in range(n - 1)]
        lat = make_lattice([0.1 * i for i in range(n)], arcs)
        post = forward_backward(lat)
        assert np.all(np.isfinite(post))
        assert np.allclose(post, 1.0)


class TestBestPath:
    def test_single_path(self, single_path):
        words, _ = best_path(single_path)
        assert words == "turn lights on"

    def test_diamond_prefers_heavier(self, diamond):
        words, score = best_path(diamond)
        assert words == "the cat sat"
        assert score == pytest.approx(math.log(3.0))

    def test_tie_breaks_lexicographically(self):
        arcs = [Arc(0, 1, "a", -1.0, 0.0),
                Arc(1, 2, "a", -1.0, 0.0), Arc(1, 2, "b", -1.0, 0.0)]
        lat = make_lattice([0.0, 0.3, 0.6], arcs)
        assert best_path(lat)[0] == "a a"

    def test_matches_enumeration(self):
        rng = np.random.default_rng(8)
        for _ in range(200):
            lat = random_lattice(rng)
            words, score = best_path(lat)
            paths = enumerate_paths(lat)
            best = max(w for _, _, w in paths)
            winners = sorted(" ".join(ws) for _, ws, w in paths
                             if w == pytest.approx(best, abs=1e-12))
            assert score == pytest.approx(best, abs=1e-9)
            assert words == winners[0]

    def test_uniform_arc_shift_keeps_argmax(self, diamond):
        words, _ = best_path(diamond)
        shifted = make_lattice(
            list(diamond.times),
            [Arc(a.from_node, a.to_node, a.word, a.am_score - 2.5, a.lm_score)
             for a in diamond.arcs],
        )
        assert best_path(shifted)[0] == words


class TestNbest:
    def test_single_path_short_list(self, single_path):
        assert len(nbest(single_path, 5)) == 1

    def test_diamond_both_paths_descending(self, diamond):
        top = nbest(diamond, 2)
        assert [w for w, _ in top] == ["the cat sat", "the hat sat"]
        assert top[0][1] >= top[1][1]

    def test_top1_equals_best_path(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            lat = random_lattice(rng)
            assert nbest(lat, 1)[0] == pytest.approx(best_path(lat))

    def test_matches_enumeration_with_dedup(self):
        rng = np.random.default_rng(10)
        for _ in range(150):
            lat = random_lattice(rng)
            n = int(rng.integers(1, 6))
            got = nbest(lat, n)
            merged = {}
            for _, ws, w in enumerate_paths(lat):
                key = " ".join(ws)
                merged[key] = max(merged.get(key, -np.inf), w)
            expected = sorted(merged.items(), key=lambda kv: (-kv[1], kv[0]))[:n]
            assert [w for w, _ in got] == [w for w, _ in expected]
            for (_, got_s), (_, exp_s) in zip(got, expected):
                assert got_s == pytest.approx(exp_s, abs=1e-9)

    def test_scores_nonincreasing_no_duplicates(self):
        rng = np.random.default_rng(12)
        for _ in range(50):
            lat = random_lattice(rng)
            top = nbest(lat, 4)
            words = [w for w, _ in top]
            assert len(set(words)) == len(words)
            scores = [s for _, s in top]
            assert all(a >= b - 1e-12 for a, b in zip(scores, scores[1:]))


class TestOracleWer:
    def test_reference_in_lattice(self, diamond):
        value, path = oracle_wer(diamond, "the hat sat")
        assert value == 0.0
        assert path == "the hat sat"

    def test_single_path_equals_wer(self, single_path):
        reference = "turn the lights on"
        value, path = oracle_wer(single_path, reference)
        assert value == pytest.approx(metrics.wer(reference, path))
        assert path == "turn lights on"

    def test_matches_enumeration(self):
        rng = np.random.default_rng(13)
        vocab = ["a", "b", "c"]
        for _ in range(200):
            lat = random_lattice(rng, max_nodes=8)
            reference = " ".join(rng.choice(vocab, size=rng.integers(1, 6)))
            value, path = oracle_wer(lat, reference)
            expected = min(metrics.wer(reference, " ".join(ws))
                           for _, ws, _ in enumerate_paths(lat))
            assert value == pytest.approx(expected, abs=1e-12)
            assert metrics.wer(reference, path) == pytest.approx(value, abs=1e-12)

    def test_never_worse_than_best_path(self):
        rng = np.random.default_rng(14)
        for _ in range(100):
            lat = random_lattice(rng)
            reference = "a b c"
            value, _ = oracle_wer(lat, reference)
            assert value <= metrics.wer(reference, best_path(lat)[0]) + 1e-12

    def test_empty_reference_rejected(self, diamond):
        with pytest.raises(ContractError):
            oracle_wer(diamond, "   ")
