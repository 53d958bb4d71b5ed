import pytest

from slubench import models
from slubench.errors import ContractError, FormatError
from slubench.experiments import (
    ExperimentSpec,
    MatrixConfig,
    default_matrix,
    parse_matrix_config,
    prepare_corpus,
    render_improvements,
    run_experiment,
    run_matrix,
)
from slubench.metrics import render_report


def small_matrix(specs, n_per_intent=10, epochs=2):
    return MatrixConfig(
        specs=specs,
        n_per_intent=n_per_intent,
        train=models.TrainConfig(lr=0.3, epochs=epochs, batch=4),
    )


def spec(sid="EXPX", family="text", tr="manual", ev="manual", profile="none", **kw):
    return ExperimentSpec(sid, family, tr, ev, profile, **kw)


class TestSpecValidation:
    def test_wcn_requires_wcn_eval(self):
        with pytest.raises(ContractError):
            spec(family="wcn", ev="manual", profile="adapted")

    def test_multimodal_requires_multimodal_eval(self):
        with pytest.raises(ContractError):
            spec(family="multimodal", ev="onebest", profile="adapted")

    def test_profile_none_needs_manual(self):
        with pytest.raises(ContractError):
            spec(tr="onebest", ev="onebest", profile="none")

    def test_text_cannot_eval_wcn(self):
        with pytest.raises(ContractError):
            spec(family="text", ev="wcn", profile="adapted")

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ContractError):
            MatrixConfig(specs=[spec("A"), spec("A")])

    def test_default_matrix_shape(self):
        cfg = default_matrix()
        assert [s.id for s in cfg.specs] == [f"EXP{i}" for i in range(1, 9)]
        assert cfg.specs[4].family == "wcn"
        assert cfg.specs[4].asr_profile == "adapted"
        assert {s.family for s in cfg.specs[5:]} == {"multimodal"}
        assert cfg.specs[7].acoustic_preset == "clean"


class TestRunExperiment:
    def test_manual_manual_acc_equals_micro_f1(self):
        grammar, data = prepare_corpus(small_matrix([], n_per_intent=10))
        rows, _ = run_experiment(spec(), grammar, data,
                                 models.TrainConfig(lr=0.3, epochs=2, batch=4))
        for row in rows:
            assert row.accuracy == pytest.approx(row.f1_micro, abs=1e-12)

    def test_same_spec_same_rows(self):
        grammar, data = prepare_corpus(small_matrix([], n_per_intent=10))
        tc = models.TrainConfig(lr=0.3, epochs=2, batch=4)
        rows_a, _ = run_experiment(spec(seed=3), grammar, data, tc)
        rows_b, _ = run_experiment(spec(seed=3), grammar, data, tc)
        assert [(r.split, r.accuracy, r.f1_micro, r.f1_macro) for r in rows_a] \
            == [(r.split, r.accuracy, r.f1_micro, r.f1_macro) for r in rows_b]

    def test_rows_cover_dev_and_test(self):
        grammar, data = prepare_corpus(small_matrix([], n_per_intent=10))
        rows, _ = run_experiment(spec(), grammar, data,
                                 models.TrainConfig(lr=0.3, epochs=1, batch=4))
        assert [r.split for r in rows] == ["dev", "test"]

    def test_wcn_spec_trains(self):
        grammar, data = prepare_corpus(small_matrix([], n_per_intent=10))
        rows, model = run_experiment(
            spec(family="wcn", tr="onebest", ev="wcn", profile="adapted"),
            grammar, data, models.TrainConfig(lr=0.3, epochs=1, batch=4))
        assert model.cfg.family == "wcn"
        assert all(r.accuracy is not None for r in rows)

    def test_multimodal_spec_trains(self):
        grammar, data = prepare_corpus(small_matrix([], n_per_intent=10))
        rows, model = run_experiment(
            spec(family="multimodal", tr="onebest", ev="multimodal", profile="adapted"),
            grammar, data, models.TrainConfig(lr=0.2, epochs=1, batch=4))
        assert model.cfg.family == "multimodal"
        assert all(0.0 <= r.accuracy <= 1.0 for r in rows)


class TestGoldVersusCorruptedEval:
    def test_same_model_scores_higher_on_gold_text(self):
        cfg = small_matrix([], n_per_intent=20)
        grammar, data = prepare_corpus(cfg)
        manual_spec = spec("CLEAN", seed=4)
        noisy_spec = spec("NOISY", tr="manual", ev="onebest",
                          profile="unadapted", seed=4)
        tc = models.TrainConfig(lr=0.4, epochs=8, batch=8)
        _, model = run_experiment(manual_spec, grammar, data, tc)

        from slubench.experiments import _ViewBuilder
        gold_view = _ViewBuilder(manual_spec, grammar).eval_view(data.test)
        noisy_view = _ViewBuilder(noisy_spec, grammar).eval_view(data.test)
        gold_g, gold_p = models.evaluate_intents(model, gold_view)
        noisy_g, noisy_p = models.evaluate_intents(model, noisy_view)
        acc_gold = sum(g == p for g, p in zip(gold_g, gold_p)) / len(gold_g)
        acc_noisy = sum(g == p for g, p in zip(noisy_g, noisy_p)) / len(noisy_g)
        assert acc_gold > acc_noisy


class TestRunMatrix:
    def test_empty_matrix(self):
        result = run_matrix(small_matrix([]))
        assert result.ok
        assert result.report.rows == []

    def test_failed_experiment_marks_rows_and_continues(self, monkeypatch):
        cfg = small_matrix([spec("GOOD"), spec("BAD", seed=1)])
        import slubench.experiments as E
        original = E.run_experiment

        def flaky(sp, grammar, data, train_cfg=None, asr_seed=101):
            if sp.id == "BAD":
                raise RuntimeError("synthetic failure")
            return original(sp, grammar, data, train_cfg, asr_seed)

        monkeypatch.setattr(E, "run_experiment", flaky)
        result = E.run_matrix(cfg)
        assert "BAD" in result.failures
        failed_rows = [r for r in result.report.rows if r.experiment == "BAD"]
        assert len(failed_rows) == 2 and all(r.failed for r in failed_rows)
        good_rows = [r for r in result.report.rows if r.experiment == "GOOD"]
        assert all(not r.failed for r in good_rows)
        assert "FAILED" in render_report(result.report)

    def test_improvement_appendix(self):
        cfg = small_matrix([
            spec("BASE", tr="onebest", ev="onebest", profile="adapted"),
            spec("RICH", family="wcn", tr="onebest", ev="wcn", profile="adapted"),
        ], n_per_intent=10, epochs=1)
        result = run_matrix(cfg)
        assert result.ok
        assert len(result.improvements) == 1
        assert result.improvements[0][0] == "RICH"
        text = render_improvements(result)
        assert "RICH vs BASE" in text

    def test_csv_and_markdown_agree(self):
        cfg = small_matrix([spec()], n_per_intent=10, epochs=1)
        result = run_matrix(cfg)
        csv = render_report(result.report, "csv")
        md = render_report(result.report, "markdown")
        for cell in csv.strip().splitlines()[1].split(",")[1:]:
            assert cell in md


class TestConfigParser:
    GOOD = """
# demo matrix
n_per_intent = 5
epochs = 1
lr = 0.3

[EXPA]
family = text
train_input = manual
eval_input = manual
asr_profile = none
seed = 2

[EXPB]
family = wcn
train_input = onebest
eval_input = wcn
asr_profile = adapted
"""

    def test_round_trip(self):
        cfg = parse_matrix_config(self.GOOD)
        assert [s.id for s in cfg.specs] == ["EXPA", "EXPB"]
        assert cfg.n_per_intent == 5
        assert cfg.train.epochs == 1
        assert cfg.specs[0].seed == 2
        assert cfg.specs[1].asr_profile == "adapted"

    def test_unknown_global_key_rejected_with_line(self):
        with pytest.raises(FormatError, match="line 2"):
            parse_matrix_config("\nwhat = 3\n")

    def test_unknown_spec_key_rejected(self):
        with pytest.raises(FormatError, match="colour"):
            parse_matrix_config("[E]\nfamily = text\ncolour = red\n")

    def test_invalid_spec_propagates(self):
        with pytest.raises(ContractError):
            parse_matrix_config("[E]\nfamily = wcn\neval_input = manual\n"
                                "asr_profile = adapted\n")

    def test_comments_ignored(self):
        cfg = parse_matrix_config("n_per_intent = 4  # inline comment\n")
        assert cfg.n_per_intent == 4
