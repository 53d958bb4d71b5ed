"""Command-line interface.

Subcommands map thinly onto the library modules; everything reads files
named by flags and writes to stdout or --out. Exit codes: 0 success,
1 contract violation, 2 I/O or parse error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import asr_sim, corpus, experiments, lattice, metrics, models, wcn
from . import nnkernel as nk
from .errors import ContractError, FormatError
from .textnorm import tokenize

GRAD_TOLERANCE = 1e-4


def _write_out(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _load_durations(args) -> dict[str, float]:
    if args.durations:
        with open(args.durations, encoding="utf-8") as handle:
            raw = json.load(handle)
        return {str(k): float(v) for k, v in raw.items()}
    return {}


def cmd_gen_corpus(args) -> int:
    grammar = corpus.default_grammar(seed=args.seed)
    records = corpus.generate_synthetic_corpus(grammar, args.n_per_intent)
    text = "".join(corpus.record_to_json(rec) + "\n" for rec in records)
    _write_out(text, args.out)
    return 0


def cmd_filter(args) -> int:
    records = corpus.load_metadata(args.infile)
    result = corpus.filter_corpus(records)
    _write_out("".join(corpus.record_to_json(r) + "\n" for r in result.kept), args.out)
    if args.dropped:
        Path(args.dropped).write_text(
            "".join(corpus.record_to_json(r) + "\n" for r in result.dropped),
            encoding="utf-8",
        )
    summary = {
        "total": len(records),
        "kept": len(result.kept),
        "dropped": len(result.dropped),
        "drop_fraction": len(result.dropped) / len(records) if records else 0.0,
        "reason_counts": result.reason_counts,
    }
    print(json.dumps(summary, sort_keys=True), file=sys.stderr)
    return 0


def cmd_stats(args) -> int:
    records = corpus.load_metadata(args.infile)
    durations = _load_durations(args)
    for rec in records:
        for r in rec.recordings:
            durations.setdefault(r.file_id, args.assume_duration)
    stats = corpus.compute_stats(records, durations)
    _write_out(json.dumps(dataclasses.asdict(stats), sort_keys=True) + "\n", args.out)
    return 0


def cmd_split(args) -> int:
    records = corpus.load_metadata(args.infile)
    fractions = tuple(float(f) for f in args.fractions.split(","))
    if len(fractions) != 3:
        raise ContractError(f"--fractions needs three comma-separated values, got {args.fractions!r}")
    result = corpus.split_corpus(records, fractions, args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in ("train", "dev", "test"):
        corpus.write_metadata(out_dir / f"{name}.jsonl", getattr(result, name))
    for warning in result.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    return 0


def _profile_from_args(args) -> asr_sim.NoiseProfile:
    if args.profile != "custom":
        return asr_sim.preset_profile(args.profile, seed=args.seed, depth=args.depth)
    return asr_sim.NoiseProfile(
        p_sub=args.p_sub, p_del=args.p_del, p_ins=args.p_ins,
        seed=args.seed, depth=args.depth,
    )


def cmd_simulate_asr(args) -> int:
    records = corpus.load_metadata(args.infile)
    profile = _profile_from_args(args)
    out_dir = Path(args.out_dir)
    lat_dir = out_dir / "lattices"
    lat_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    for rec in records:
        one_best = asr_sim.corrupt_transcript(rec.transcript, profile, utt_id=rec.id)
        lat = asr_sim.synthesize_lattice(rec.transcript, profile, utt_id=rec.id)
        lat_file = f"lattices/{rec.id}.lat"
        (out_dir / lat_file).write_text(lattice.serialize_lattice(lat), encoding="utf-8")
        lines.append(json.dumps(
            {"id": rec.id, "one_best": one_best, "lattice_file": lat_file},
            sort_keys=True,
        ))
    (out_dir / "hyps.jsonl").write_text("".join(line + "\n" for line in lines),
                                        encoding="utf-8")
    return 0


def cmd_lattice_to_wcn(args) -> int:
    lat = lattice.parse_lattice(Path(args.infile).read_text(encoding="utf-8"))
    cn = wcn.build_from_lattice(lat, lm_scale=args.lm_scale)
    _write_out(wcn.serialize_wcn(cn), args.out)
    return 0


def _examples_for_family(family: str, records, args) -> list[models.Example]:
    out = []
    for rec in records:
        if family == "text":
            out.append(models.Example(intent=rec.intent,
                                      tokens=tuple(tokenize(rec.transcript))))
        elif family == "wcn":
            if not args.lattice_dir:
                raise ContractError("wcn family needs --lattice-dir")
            lat_path = Path(args.lattice_dir) / f"{rec.id}.lat"
            lat = lattice.parse_lattice(lat_path.read_text(encoding="utf-8"))
            out.append(models.Example(
                intent=rec.intent,
                cn=wcn.build_from_lattice(lat, source_id=rec.id),
            ))
        else:
            acoustic = models.make_acoustic_features(
                rec.transcript, args.frames_per_token, args.noise_sd, seed=args.seed,
            )
            out.append(models.Example(intent=rec.intent,
                                      tokens=tuple(tokenize(rec.transcript)),
                                      acoustic=acoustic))
    return out


def cmd_train(args) -> int:
    train_records = corpus.load_metadata(args.train)
    dev_records = corpus.load_metadata(args.dev)
    train_ex = _examples_for_family(args.family, train_records, args)
    dev_ex = _examples_for_family(args.family, dev_records, args)
    intents = sorted({r.intent for r in train_records})
    labels = models.LabelSpace.build(intents)
    if args.family == "text":
        token_seqs = [ex.tokens for ex in train_ex]
    elif args.family == "wcn":
        token_seqs = [[tok for b in ex.cn.bins for tok, _ in b.entries] for ex in train_ex]
    else:
        token_seqs = [ex.tokens for ex in train_ex]
    vocab = models.Vocabulary.build(token_seqs)
    cfg = models.ModelConfig(args.family, n_intents=len(intents),
                             n_slot_tags=len(labels.slot_tags), seed=args.seed)
    model = models.build_model(cfg, vocab, labels)
    hp = models.TrainConfig(lr=args.lr, epochs=args.epochs, batch=args.batch,
                            clip=args.clip, seed=args.seed)
    model, history = models.train(model, train_ex, dev_ex, hp)
    models.save_model(args.out, model)
    for h in history:
        print(f"epoch {h.epoch}: train_loss {h.train_loss:.4f} "
              f"dev_accuracy {h.dev_accuracy:.4f}", file=sys.stderr)
    return 0


def cmd_evaluate(args) -> int:
    model = models.load_model(args.model)
    records = corpus.load_metadata(args.data)
    examples = _examples_for_family(model.cfg.family, records, args)
    gold, pred = models.evaluate_intents(model, examples)
    row = {
        "experiment": args.experiment,
        "variant": args.variant,
        "split": args.split,
        "gold": gold,
        "pred": pred,
    }
    _write_out(json.dumps(row, sort_keys=True) + "\n", args.out)
    return 0


def _row_from_obj(obj: dict, lineno: int) -> metrics.ReportRow:
    for key in ("experiment", "variant", "split"):
        if key not in obj:
            raise FormatError(f"result row misses key {key!r}", lineno)
    if "gold" in obj and "pred" in obj:
        gold = [str(x) for x in obj["gold"]]
        pred = [str(x) for x in obj["pred"]]
        f1 = metrics.f1_scores(gold, pred)
        return metrics.ReportRow(
            experiment=str(obj["experiment"]), variant=str(obj["variant"]),
            split=str(obj["split"]),
            accuracy=metrics.intent_accuracy(gold, pred),
            f1_micro=f1.micro, f1_macro=f1.macro, per_class=f1.per_class,
        )
    try:
        return metrics.ReportRow(
            experiment=str(obj["experiment"]), variant=str(obj["variant"]),
            split=str(obj["split"]), accuracy=float(obj["accuracy"]),
            f1_micro=float(obj["f1_micro"]), f1_macro=float(obj["f1_macro"]),
        )
    except KeyError as exc:
        raise FormatError(
            f"result row needs gold/pred arrays or metric values; missing {exc.args[0]!r}",
            lineno,
        ) from None


def cmd_report(args) -> int:
    report = metrics.EvalReport()
    with open(args.infile, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"invalid JSON ({exc.msg})", lineno) from None
            report.rows.append(_row_from_obj(obj, lineno))
    _write_out(metrics.render_report(report, args.format), args.out)
    return 0


def cmd_run_matrix(args) -> int:
    if args.config:
        cfg = experiments.parse_matrix_config(Path(args.config).read_text(encoding="utf-8"))
    else:
        cfg = experiments.default_matrix(seed=args.seed)
    result = experiments.run_matrix(cfg)
    markdown = metrics.render_report(result.report, "markdown")
    appendix = experiments.render_improvements(result)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.md").write_text(markdown + appendix, encoding="utf-8")
    (out_dir / "report.csv").write_text(
        metrics.render_report(result.report, "csv"), encoding="utf-8"
    )
    sys.stdout.write(markdown + appendix)
    if result.failures:
        for exp, message in sorted(result.failures.items()):
            print(f"FAILED {exp}: {message}", file=sys.stderr)
        return 1
    return 0


def _grad_check_cases(seed: int):
    rng = np.random.default_rng(seed)
    cfg = nk.AttentionConfig(8, 2)

    store_a = nk.ParamStore(seed)
    nk.init_attention(store_a, "attn", 8)
    x_a = rng.standard_normal((5, 8))
    c_a = rng.standard_normal((5, 8))
    yield "attention", store_a, lambda: nk.sum_all(nk.mul(
        nk.multi_head_self_attention(nk.Tensor(x_a), cfg, store_a, "attn"), nk.Tensor(c_a)))

    store_c = nk.ParamStore(seed + 1)
    nk.init_block(store_c, "cm", 8)
    t_c = rng.standard_normal((4, 8))
    s_c = rng.standard_normal((7, 8))
    c_c = rng.standard_normal((4, 8))
    yield "crossmodal", store_c, lambda: nk.sum_all(nk.mul(
        nk.crossmodal_attention_block(nk.Tensor(t_c), nk.Tensor(s_c), cfg, store_c, "cm"),
        nk.Tensor(c_c)))

    store_g = nk.ParamStore(seed + 2)
    nk.init_gru(store_g, "gru", 6, 5, bidirectional=True)
    x_g = rng.standard_normal((4, 6))
    c_g = rng.standard_normal((4, 10))
    yield "gru", store_g, lambda: nk.sum_all(nk.mul(
        nk.gru_layer(nk.Tensor(x_g), store_g, "gru", 5, bidirectional=True), nk.Tensor(c_g)))

    store_f = nk.ParamStore(seed + 3)
    emis = store_f.weight("emis", 5, 4)
    trans = store_f.weight("trans", 4, 4)
    yield "crf", store_f, lambda: nk.crf_nll(emis, trans, [0, 2, 1, 3, 2])


def cmd_grad_check(args) -> int:
    worst = 0.0
    status = 0
    for name, store, loss_fn in _grad_check_cases(args.seed):
        if args.block != "all" and args.block != name:
            continue
        err = nk.gradient_check(loss_fn, store, step=1e-3)
        worst = max(worst, err)
        verdict = "ok" if err <= GRAD_TOLERANCE else "FAIL"
        print(f"{name}: max relative error {err:.3e} {verdict}")
        if err > GRAD_TOLERANCE:
            status = 1
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slubench",
        description="Benchmarking workbench for spoken-language-understanding "
                    "intent classification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", help="generate a synthetic metadata corpus")
    p.add_argument("--n-per-intent", type=int, default=63)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("filter", help="drop records with nonzero metadata WER or "
                                      "inconsistent transcripts")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out")
    p.add_argument("--dropped")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("stats", help="corpus statistics")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--durations", help="JSON map file_id -> seconds")
    p.add_argument("--assume-duration", type=float, default=0.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("split", help="stratified train/dev/test split")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--fractions", default="0.8,0.1,0.1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("simulate-asr", help="corrupt transcripts and synthesize lattices")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--profile", choices=("unadapted", "adapted", "custom"),
                   default="adapted")
    p.add_argument("--p-sub", type=float, default=0.0)
    p.add_argument("--p-del", type=float, default=0.0)
    p.add_argument("--p-ins", type=float, default=0.0)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_simulate_asr)

    p = sub.add_parser("lattice-to-wcn", help="build a confusion network from a lattice")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--lm-scale", type=float, default=1.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_lattice_to_wcn)

    p = sub.add_parser("train", help="train an intent model")
    p.add_argument("--family", choices=models.FAMILIES, required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lattice-dir")
    p.add_argument("--frames-per-token", type=int, default=3)
    p.add_argument("--noise-sd", type=float, default=0.3)
    p.add_argument("--lr", type=float, default=models.TrainConfig.lr)
    p.add_argument("--epochs", type=int, default=models.TrainConfig.epochs)
    p.add_argument("--batch", type=int, default=models.TrainConfig.batch)
    p.add_argument("--clip", type=float, default=models.TrainConfig.clip)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a trained model on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--lattice-dir")
    p.add_argument("--frames-per-token", type=int, default=3)
    p.add_argument("--noise-sd", type=float, default=0.3)
    p.add_argument("--experiment", default="EXP")
    p.add_argument("--variant", default="original")
    p.add_argument("--split", default="test")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="render a results table")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--format", choices=("markdown", "csv"), default="markdown")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("run-matrix", help="run the experiment matrix end to end")
    p.add_argument("--config", help="matrix config file; defaults to the shipped matrix")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default="runs")
    p.set_defaults(func=cmd_run_matrix)

    p = sub.add_parser("grad-check", help="finite-difference verification of the blocks")
    p.add_argument("--block", default="all",
                   choices=("all", "attention", "crossmodal", "gru", "crf"))
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_grad_check)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
