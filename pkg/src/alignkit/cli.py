"""Command-line entry point.

One subcommand per pipeline stage. Every subcommand takes --seed,
--config, and --out; a config file (JSON) supplies defaults that
explicit flags override, and each run logs its resolved settings so a
logged config reproduces the run bit for bit.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

logger = logging.getLogger("alignkit")

EXIT_OK = 0
EXIT_FAILURE = 1


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--seed", type=int, default=0, help="run seed")
    sub.add_argument("--config", default=None,
                     help="JSON file of defaults for this subcommand")
    sub.add_argument("--out", default=None, help="output path")


def build_parser(suppress_defaults: bool = False) -> argparse.ArgumentParser:
    kwargs = {"argument_default": argparse.SUPPRESS} if suppress_defaults else {}
    parser = argparse.ArgumentParser(
        prog="alignkit",
        description="word alignment toolkit: statistical, attention, and "
                    "discriminative aligners with projection and annotation "
                    "tools", **kwargs)
    subs = parser.add_subparsers(dest="command", required=True)

    def sub(name, help_text):
        s = subs.add_parser(name, help=help_text, **kwargs)
        _add_common(s)
        return s

    s = sub("synth", "generate a synthetic aligned corpus")
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--vocab-size", type=int, default=60)
    s.add_argument("--ambiguous-pairs", type=int, default=12)
    s.add_argument("--function-words", type=int, default=8)
    s.add_argument("--min-len", type=int, default=4)
    s.add_argument("--max-len", type=int, default=10)
    s.add_argument("--reorder-window", type=int, default=1)
    s.add_argument("--insertion-rate", type=float, default=0.0)
    s.add_argument("--ambiguity-rate", type=float, default=0.0)
    s.add_argument("--zipf", type=float, default=0.0,
                   help="rank-frequency exponent for regular words "
                        "(0 = uniform)")

    s = sub("pretrain", "train the translation model on bitext")
    s.add_argument("--bitext", required=True)
    s.add_argument("--steps", type=int, default=2500)
    s.add_argument("--batch-size", type=int, default=8)
    s.add_argument("--layers", type=int, default=2)
    s.add_argument("--heads", type=int, default=2)
    s.add_argument("--dim", type=int, default=32)
    s.add_argument("--ff-dim", type=int, default=64)
    s.add_argument("--learning-rate", type=float, default=3e-3)
    s.add_argument("--src-vocab", type=int, default=8000)
    s.add_argument("--tgt-vocab", type=int, default=8000)
    s.add_argument("--tie-embeddings", action="store_true", default=False)

    s = sub("train-aligner", "train the discriminative head on labeled pairs")
    s.add_argument("--bitext", required=True)
    s.add_argument("--alignments", required=True)
    s.add_argument("--model", required=True, help="pretrained translation model")
    s.add_argument("--steps", type=int, default=1200)
    s.add_argument("--batch-size", type=int, default=8)
    s.add_argument("--hidden", type=int, default=64)
    s.add_argument("--learning-rate", type=float, default=1e-3)
    s.add_argument("--alpha", type=float, default=0.5)
    s.add_argument("--no-conv", action="store_true", default=False,
                   help="freeze the convolution at the identity kernel")
    s.add_argument("--unfreeze", action="store_true", default=False,
                   help="finetune the translation model jointly")
    s.add_argument("--pin-decoder", action="store_true", default=False,
                   help="with --unfreeze, keep the decoder half fixed")
    s.add_argument("--save-model", default=None,
                   help="with --unfreeze, write the finetuned translation "
                        "model here for a later frozen pass")
    s.add_argument("--dev-bitext", default=None)
    s.add_argument("--dev-alignments", default=None)

    s = sub("align", "decode alignments with a trained aligner")
    s.add_argument("--bitext", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--aligner", required=True)
    s.add_argument("--alpha", type=float, default=None,
                   help="override the stored threshold")

    s = sub("em-align", "EM-train a statistical aligner and decode")
    s.add_argument("--bitext", required=True)
    s.add_argument("--iterations", type=int, default=5)
    s.add_argument("--mode", choices=["model1", "model2_loglinear"],
                   default="model2_loglinear")
    s.add_argument("--p0", type=float, default=0.1, help="null link mass")
    s.add_argument("--heuristic",
                   choices=["forward", "intersection", "union",
                            "grow-diag-final-and"],
                   default="grow-diag-final-and")
    s.add_argument("--decode-bitext", default=None,
                   help="decode these pairs instead of the training bitext")
    s.add_argument("--tune-p0", default=None,
                   help="comma-separated p0 grid; needs --tune-gold")
    s.add_argument("--tune-gold", default=None,
                   help="gold alignments for the decoded pairs")
    s.add_argument("--save-model", default=None,
                   help="write the forward lexical table here")

    s = sub("attn-align", "decode alignments from attention averages")
    s.add_argument("--bitext", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--alpha", type=float, default=0.14)

    s = sub("symmetrize", "combine forward and backward alignments")
    s.add_argument("--forward", required=True, dest="fwd")
    s.add_argument("--backward", required=True, dest="bwd")
    s.add_argument("--heuristic",
                   choices=["intersection", "union", "grow-diag-final-and"],
                   default="grow-diag-final-and")

    s = sub("bpe-learn", "learn BPE merges from tokenized text")
    s.add_argument("--input", required=True,
                   help="one whitespace-tokenized sentence per line")
    s.add_argument("--merges", type=int, default=200)

    s = sub("bpe-apply", "segment tokenized text with learned merges")
    s.add_argument("--input", required=True)
    s.add_argument("--codes", required=True)

    s = sub("score", "score predicted alignments against gold")
    s.add_argument("--pred", required=True)
    s.add_argument("--gold", required=True)
    s.add_argument("--mode", choices=["macro", "micro"], default="macro")
    s.add_argument("--spans", default=None,
                   help="source tag file; restrict scoring to tagged spans")
    s.add_argument("--json", action="store_true", default=False,
                   dest="as_json")

    s = sub("sweep", "score a threshold grid for a probabilistic aligner")
    s.add_argument("--bitext", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--aligner", default=None,
                   help="discriminative head; omit to sweep attention")
    s.add_argument("--gold", required=True)
    s.add_argument("--grid", default=None,
                   help="comma-separated thresholds")

    s = sub("project", "project source tags across alignments")
    s.add_argument("--bitext", required=True)
    s.add_argument("--alignments", required=True)
    s.add_argument("--tags", required=True, help="source tags, CoNLL format")
    s.add_argument("--conflict", choices=["first", "majority"],
                   default="first")
    s.add_argument("--default-tag", default="O")
    s.add_argument("--no-repair", action="store_true", default=False)

    s = sub("serve", "run the annotation service")
    s.add_argument("--tasks", required=True, help="bitext of task pairs")
    s.add_argument("--alignments", default=None,
                   help="optional pre-filled alignments")
    s.add_argument("--journal", required=True)
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8000)
    s.add_argument("--annotator", default="default")
    s.add_argument("--static-dir", default=None,
                   help="override the bundled UI assets directory")

    s = sub("score-annotator", "score a journal against gold alignments")
    s.add_argument("--journal", required=True)
    s.add_argument("--tasks", required=True, help="bitext of task pairs")
    s.add_argument("--gold", required=True)
    s.add_argument("--spans", default=None)
    s.add_argument("--json", action="store_true", default=False,
                   dest="as_json")

    return parser


def _suppress_all_defaults(parser: argparse.ArgumentParser) -> None:
    for action in parser._actions:
        action.default = argparse.SUPPRESS
        if isinstance(action, argparse._SubParsersAction):
            for child in action.choices.values():
                _suppress_all_defaults(child)


def resolve_args(argv: list[str]) -> argparse.Namespace:
    """Merge precedence: defaults < config file < explicit flags."""
    ns = build_parser().parse_args(argv)
    detector = build_parser(suppress_defaults=True)
    _suppress_all_defaults(detector)
    explicit = vars(detector.parse_args(argv))
    config_path = getattr(ns, "config", None)
    if config_path:
        with open(config_path, encoding="utf-8") as fh:
            overrides = json.load(fh)
        if not isinstance(overrides, dict):
            raise ValueError(f"config file {config_path} must hold an object")
        valid = set(vars(ns))
        for key, value in overrides.items():
            dest = key.replace("-", "_")
            if dest not in valid:
                raise ValueError(f"config key {key!r} not recognized for "
                                 f"{ns.command}")
            if dest not in explicit:
                setattr(ns, dest, value)
    return ns


def _log_resolved(ns: argparse.Namespace) -> None:
    settings = {k: v for k, v in sorted(vars(ns).items()) if k != "command"}
    logger.info("%s %s", ns.command, json.dumps(settings, sort_keys=True,
                                                default=str))


def _require_out(ns) -> Path:
    if not ns.out:
        raise ValueError(f"{ns.command} needs --out")
    return Path(ns.out)


def _read_corpus(path):
    from .corpus import read_bitext

    return read_bitext(path)


def _read_gold(path, pairs):
    from .corpus import read_alignments, validate_corpus_alignments

    gold = read_alignments(path)
    validate_corpus_alignments(pairs, gold)
    return gold


def cmd_synth(ns) -> int:
    from .corpus import write_alignments, write_bitext, write_tagged
    from .synth import SynthSpec, generate

    out = _require_out(ns)
    spec = SynthSpec(vocab_size=ns.vocab_size,
                     ambiguous_pairs=ns.ambiguous_pairs,
                     function_words=ns.function_words,
                     min_len=ns.min_len, max_len=ns.max_len,
                     reorder_window=ns.reorder_window,
                     insertion_rate=ns.insertion_rate,
                     ambiguity_rate=ns.ambiguity_rate,
                     zipf_exponent=ns.zipf,
                     seed=ns.seed)
    corpus = generate(spec, ns.n)
    out.mkdir(parents=True, exist_ok=True)
    write_bitext(corpus.pairs, out / "corpus.bitext")
    write_alignments(corpus.alignments, out / "gold.aln")
    write_tagged(corpus.source_tags, out / "source.tags")
    write_tagged(corpus.target_tags, out / "target.tags")
    manifest = spec.manifest()
    manifest["n"] = ns.n
    (out / "spec.json").write_text(json.dumps(manifest, indent=2,
                                              sort_keys=True) + "\n",
                                   encoding="utf-8")
    print(f"wrote {ns.n} sentence pairs under {out}")
    return EXIT_OK


def cmd_pretrain(ns) -> int:
    from .seq2seq import Seq2SeqConfig, pretrain_mt, save_seq2seq

    out = _require_out(ns)
    corpus = _read_corpus(ns.bitext)
    config = Seq2SeqConfig(src_vocab_size=ns.src_vocab,
                           tgt_vocab_size=ns.tgt_vocab,
                           layers=ns.layers, heads=ns.heads, dim=ns.dim,
                           ff_dim=ns.ff_dim, tie_embeddings=ns.tie_embeddings,
                           learning_rate=ns.learning_rate, seed=ns.seed)
    model = pretrain_mt(corpus, config, steps=ns.steps,
                        batch_size=ns.batch_size)
    save_seq2seq(model, out)
    print(f"final loss {model.loss_history[-1]:.4f} nats/token; "
          f"model at {out}")
    return EXIT_OK


def cmd_train_aligner(ns) -> int:
    from .aligner import AlignerConfig, save_aligner, train_aligner
    from .seq2seq import load_seq2seq, save_seq2seq

    out = _require_out(ns)
    if ns.save_model and not ns.unfreeze:
        raise ValueError("--save-model needs --unfreeze")
    pairs = _read_corpus(ns.bitext)
    gold = _read_gold(ns.alignments, pairs)
    model = load_seq2seq(ns.model)
    dev_pairs, dev_gold = (), ()
    if ns.dev_bitext:
        if not ns.dev_alignments:
            raise ValueError("--dev-bitext needs --dev-alignments")
        dev_pairs = _read_corpus(ns.dev_bitext)
        dev_gold = _read_gold(ns.dev_alignments, dev_pairs)
    config = AlignerConfig(hidden=ns.hidden, learning_rate=ns.learning_rate,
                           steps=ns.steps, batch_size=ns.batch_size,
                           freeze_encoder=not ns.unfreeze,
                           freeze_decoder=ns.pin_decoder,
                           train_conv=not ns.no_conv, alpha=ns.alpha,
                           seed=ns.seed)
    aligner = train_aligner(pairs, gold, model, config,
                            dev_pairs=dev_pairs, dev_gold=dev_gold)
    save_aligner(aligner, out)
    print(f"aligner at {out}; threshold alpha={aligner.alpha:g}")
    if ns.save_model:
        save_seq2seq(model, ns.save_model)
        print(f"finetuned model at {ns.save_model}")
    return EXIT_OK


def cmd_align(ns) -> int:
    from .aligner import align_corpus, load_aligner
    from .corpus import write_alignments
    from .seq2seq import load_seq2seq

    out = _require_out(ns)
    pairs = _read_corpus(ns.bitext)
    model = load_seq2seq(ns.model)
    aligner = load_aligner(ns.aligner)
    links = align_corpus(aligner, model, pairs, alpha=ns.alpha)
    write_alignments(links, out)
    print(f"aligned {len(pairs)} pairs at "
          f"alpha={ns.alpha if ns.alpha is not None else aligner.alpha:g}")
    return EXIT_OK


def cmd_em_align(ns) -> int:
    from .corpus import write_alignments
    from .scoring import score
    from .statalign import bidirectional_align, em_train, align_corpus, \
        save_stat_model

    out = _require_out(ns)
    pairs = _read_corpus(ns.bitext)
    decode_pairs = _read_corpus(ns.decode_bitext) if ns.decode_bitext \
        else pairs

    grid = [ns.p0]
    gold = None
    if ns.tune_p0:
        if not ns.tune_gold:
            raise ValueError("--tune-p0 needs --tune-gold")
        grid = [float(x) for x in ns.tune_p0.split(",") if x.strip()]
        gold = _read_gold(ns.tune_gold, decode_pairs)

    best = None
    for p0 in grid:
        if ns.heuristic == "forward":
            model, _ = em_train(pairs, iterations=ns.iterations,
                                mode=ns.mode, null_prob=p0)
            aligned = align_corpus(model, decode_pairs)
            fwd_model = model
        else:
            aligned, fwd_model, _ = bidirectional_align(
                pairs, iterations=ns.iterations, mode=ns.mode, null_prob=p0,
                heuristic=ns.heuristic, decode_pairs=decode_pairs)
        if gold is None:
            best = (p0, aligned, fwd_model)
            break
        f1 = score(aligned, gold).macro_f1
        logger.info("p0=%g macro F1 %.4f", p0, f1)
        if best is None or f1 > best[3]:
            best = (p0, aligned, fwd_model, f1)

    p0, aligned, fwd_model = best[0], best[1], best[2]
    write_alignments(aligned, out)
    if ns.save_model:
        save_stat_model(fwd_model, ns.save_model)
    print(f"aligned {len(decode_pairs)} pairs with p0={p0:g} "
          f"({ns.heuristic})")
    return EXIT_OK


def cmd_attn_align(ns) -> int:
    from .corpus import write_alignments
    from .seq2seq import attention_align, encode_pair, load_seq2seq

    out = _require_out(ns)
    pairs = _read_corpus(ns.bitext)
    model = load_seq2seq(ns.model)
    links = [attention_align(encode_pair(model, p)[1], ns.alpha)
             for p in pairs]
    write_alignments(links, out)
    print(f"aligned {len(pairs)} pairs at alpha={ns.alpha:g}")
    return EXIT_OK


def cmd_symmetrize(ns) -> int:
    from .corpus import read_alignments, write_alignments
    from .statalign import symmetrize

    out = _require_out(ns)
    forward = read_alignments(ns.fwd)
    backward = read_alignments(ns.bwd)
    if len(forward) != len(backward):
        raise ValueError("forward and backward files differ in length")
    merged = [symmetrize(f, b, heuristic=ns.heuristic)
              for f, b in zip(forward, backward)]
    write_alignments(merged, out)
    print(f"symmetrized {len(merged)} pairs with {ns.heuristic}")
    return EXIT_OK


def _read_token_lines(path) -> list[list[str]]:
    sentences = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            tokens = line.split()
            if tokens:
                sentences.append(tokens)
    return sentences


def cmd_bpe_learn(ns) -> int:
    from .bpe import learn_bpe, write_merges

    out = _require_out(ns)
    merges = learn_bpe(_read_token_lines(ns.input), ns.merges)
    write_merges(merges, out)
    print(f"learned {len(merges)} merges")
    return EXIT_OK


def cmd_bpe_apply(ns) -> int:
    from .bpe import read_merges, segment_sentence

    out = _require_out(ns)
    merges = read_merges(ns.codes)
    with open(out, "w", encoding="utf-8") as fh:
        for tokens in _read_token_lines(ns.input):
            subwords, _ = segment_sentence(tokens, merges)
            fh.write(" ".join(subwords) + "\n")
    print(f"segmented {ns.input} into {out}")
    return EXIT_OK


def cmd_score(ns) -> int:
    from .corpus import read_alignments, read_tagged
    from .scoring import score, score_span_restricted, span_source_indices

    predicted = read_alignments(ns.pred)
    gold = read_alignments(ns.gold)
    if len(predicted) != len(gold):
        raise ValueError(f"{len(predicted)} predictions vs {len(gold)} gold")
    if ns.spans:
        spans = [span_source_indices(t) for t in read_tagged(ns.spans)]
        report = score_span_restricted(predicted, gold, spans)
    else:
        report = score(predicted, gold)
    if ns.as_json:
        text = report.to_json()
    elif ns.mode == "macro":
        text = (f"precision\t{report.macro_precision:.6f}\n"
                f"recall\t{report.macro_recall:.6f}\n"
                f"f1\t{report.macro_f1:.6f}")
    else:
        text = (f"precision\t{report.micro_precision:.6f}\n"
                f"recall\t{report.micro_recall:.6f}\n"
                f"f1\t{report.micro_f1:.6f}")
    if ns.out:
        Path(ns.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def cmd_sweep(ns) -> int:
    from .scoring import DEFAULT_ALPHA_GRID, sweep_threshold
    from .seq2seq import attention_prob_matrix, encode_pair, load_seq2seq

    pairs = _read_corpus(ns.bitext)
    gold = _read_gold(ns.gold, pairs)
    model = load_seq2seq(ns.model)
    if ns.aligner:
        from .aligner import load_aligner, prob_matrix

        aligner = load_aligner(ns.aligner)
        probs = [prob_matrix(aligner, model, p) for p in pairs]
    else:
        probs = [attention_prob_matrix(encode_pair(model, p)[1])
                 for p in pairs]
    grid = DEFAULT_ALPHA_GRID
    if ns.grid:
        grid = tuple(float(x) for x in ns.grid.split(",") if x.strip())
    result = sweep_threshold(probs, gold, grid)
    text = result.to_tsv()
    if ns.out:
        Path(ns.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    print(f"best alpha {result.best_alpha:g} macro F1 {result.best_f1:.6f}")
    return EXIT_OK


def cmd_project(ns) -> int:
    from .corpus import read_alignments, read_tagged, write_tagged
    from .projection import ProjectionPolicy, project_corpus

    out = _require_out(ns)
    pairs = _read_corpus(ns.bitext)
    alignments = _read_gold(ns.alignments, pairs)
    tagged = read_tagged(ns.tags)
    if len(tagged) != len(pairs):
        raise ValueError(f"{len(tagged)} tagged sentences vs "
                         f"{len(pairs)} pairs")
    for sent, pair in zip(tagged, pairs):
        if sent.tokens != pair.source:
            raise ValueError(f"tag tokens do not match source of pair "
                             f"{pair.id}")
    policy = ProjectionPolicy(default_tag=ns.default_tag,
                              conflict=ns.conflict,
                              bio_repair=not ns.no_repair)
    projected = project_corpus(tagged, [p.target for p in pairs], alignments,
                               policy)
    header = (f"projected from {ns.tags} via {ns.alignments} "
              f"(conflict={ns.conflict}, default={ns.default_tag}, "
              f"repair={not ns.no_repair})")
    write_tagged(projected, out, header_lines=[header])
    print(f"projected tags for {len(projected)} sentences into {out}")
    return EXIT_OK


def _build_store(ns):
    from .corpus import read_alignments, validate_corpus_alignments
    from .service import TaskStore, tasks_from_corpus

    pairs = _read_corpus(ns.tasks)
    alignments = None
    if getattr(ns, "alignments", None):
        alignments = read_alignments(ns.alignments)
        validate_corpus_alignments(pairs, alignments)
    tasks = tasks_from_corpus(pairs, alignments,
                              annotator=getattr(ns, "annotator", "default"))
    return TaskStore(tasks, ns.journal), pairs


def cmd_serve(ns) -> int:
    import uvicorn

    from .service import create_app

    store, _ = _build_store(ns)
    static_dir = ns.static_dir
    if static_dir is None:
        bundled = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        static_dir = bundled if bundled.is_dir() else None
    app = create_app(store, static_dir=static_dir)
    logger.info("serving %s tasks on %s:%d", len(store.list_tasks()),
                ns.host, ns.port)
    uvicorn.run(app, host=ns.host, port=ns.port, log_level="warning")
    return EXIT_OK


def cmd_score_annotator(ns) -> int:
    from .corpus import read_tagged
    from .scoring import span_source_indices
    from .service import annotator_report

    pairs = _read_corpus(ns.tasks)
    gold = _read_gold(ns.gold, pairs)
    spans = None
    if ns.spans:
        spans = [span_source_indices(t) for t in read_tagged(ns.spans)]
    report, rate, submitted = annotator_report(ns.journal, gold, pairs,
                                               source_spans=spans)
    if ns.as_json:
        payload = json.loads(report.to_json())
        payload["sentences_per_minute"] = rate
        payload["submitted"] = submitted
        text = json.dumps(payload, sort_keys=True)
    else:
        text = (f"{report.to_tsv()}\n"
                f"submitted\t{submitted}\n"
                f"sentences_per_minute\t{rate:.2f}")
    if ns.out:
        Path(ns.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


HANDLERS = {
    "synth": cmd_synth,
    "pretrain": cmd_pretrain,
    "train-aligner": cmd_train_aligner,
    "align": cmd_align,
    "em-align": cmd_em_align,
    "attn-align": cmd_attn_align,
    "symmetrize": cmd_symmetrize,
    "bpe-learn": cmd_bpe_learn,
    "bpe-apply": cmd_bpe_apply,
    "score": cmd_score,
    "sweep": cmd_sweep,
    "project": cmd_project,
    "serve": cmd_serve,
    "score-annotator": cmd_score_annotator,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(name)s: %(message)s",
                        stream=sys.stderr)
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        ns = resolve_args(argv)
        _log_resolved(ns)
        return HANDLERS[ns.command](ns)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
