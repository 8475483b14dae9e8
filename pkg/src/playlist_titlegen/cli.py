"""Command-line pipeline: synth, convert, filter, split, build-vocab, train,
generate, evaluate, report.

Every command accepts ``--seed`` and ``--config FILE`` (TOML; precedence is
defaults < file < flags) and writes a run manifest next to its output.
"""
import argparse
import datetime as dt
import hashlib
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import corpus as corpus_mod
from . import metrics as metrics_mod
from . import splitter as splitter_mod
from . import synth as synth_mod
from . import vocab as vocab_mod
from .generator import DecodeConfig, generate, read_generations, write_generations
from .model import CheckpointError, ModelConfig, Seq2SeqModel, load_checkpoint, make_batch, save_checkpoint
from .trainer import TrainConfig, TrainingDiverged, restore, train, write_log

log = logging.getLogger("playlist_titlegen")

EXIT_RUNTIME = 1
EXIT_USAGE = 2

_USAGE_ERRORS = (
    corpus_mod.CorpusError,
    vocab_mod.VocabError,
    CheckpointError,
    FileNotFoundError,
    IsADirectoryError,
    json.JSONDecodeError,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------- manifests

def _now():
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = float(epoch) if epoch else time.time()
    return dt.datetime.fromtimestamp(t, tz=dt.timezone.utc).isoformat()


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _hashes(paths):
    return {str(p): _sha256(p) for p in paths if p is not None and Path(p).is_file()}


def _atomic_write_json(obj, path):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as f:
        json.dump(obj, f, indent=1, sort_keys=True, ensure_ascii=False)
        f.write("\n")
    os.replace(tmp, path)


def _jsonable(v):
    if isinstance(v, (dt.date, Path)):
        return str(v)
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


class Run:
    """Collects what a command read and wrote, then writes its RunManifest."""

    def __init__(self, args, argv):
        self.args = args
        self.argv = list(argv)
        self.started = _now()
        self.inputs = []
        self.outputs = []
        self.results = {}

    def write(self, manifest_path):
        config = {k: _jsonable(v) for k, v in sorted(vars(self.args).items())
                  if k not in ("func", "config_file")}
        manifest = {
            "command": self.args.command,
            "argv": self.argv,
            "config": config,
            "config_file": _jsonable(self.args.config_file),
            "seed": self.args.seed,
            "version": __version__,
            "started_at": self.started,
            "finished_at": _now(),
            "inputs": _hashes(self.inputs),
            "outputs": _hashes(self.outputs),
            "results": self.results,
        }
        _atomic_write_json(manifest, manifest_path)
        return manifest


def _manifest_path(output, command):
    output = Path(output)
    if output.is_dir():
        return output / f"{command}.manifest.json"
    return output.with_name(output.name + ".manifest.json")


# ---------------------------------------------------------------- commands

def cmd_synth(args, run):
    cfg = synth_mod.SynthConfig(
        n_playlists=args.n_playlists, n_tracks=args.n_tracks, tracks_per_artist=args.tracks_per_artist,
        artists_per_track=args.artists_per_track, zipf=args.zipf, start_date=args.start_date,
        end_date=args.end_date, min_tracks=args.min_tracks, max_tracks=args.max_tracks,
        noise_fraction=args.noise_fraction, seed=args.seed)
    grammar = synth_mod.load_grammar(args.grammar)
    run.inputs.append(args.grammar)
    ps = synth_mod.synth(cfg, grammar)
    corpus_mod.write_jsonl(ps, args.output)
    run.outputs.append(args.output)
    if args.tags_output:
        corpus_mod.write_tags(synth_mod.grammar_tags(grammar), args.tags_output)
        run.outputs.append(args.tags_output)
    run.results["n_playlists"] = len(ps)
    return args.output


def cmd_convert(args, run):
    ps = corpus_mod.ingest(args.input, args.format, song_meta=args.song_meta, mapping=args.mapping)
    run.inputs += [args.input, args.song_meta, args.mapping]
    corpus_mod.write_jsonl(ps, args.output)
    run.outputs.append(args.output)
    run.results["n_playlists"] = len(ps)
    return args.output


def cmd_filter(args, run):
    ps = corpus_mod.ingest(args.input)
    tags = corpus_mod.load_tags(args.tags)
    run.inputs += [args.input, args.tags]
    cfg = corpus_mod.FilterConfig(args.min_title_tokens, args.min_avg_char_len, args.min_tracks, args.tag_match)
    kept, stats = corpus_mod.filter_corpus(ps, cfg, tags)
    corpus_mod.write_jsonl(kept, args.output)
    run.outputs.append(args.output)
    run.results.update({"n_input": len(ps), "n_kept": len(kept), "rejected": stats})
    log.info("kept %d of %d playlists; rejections %s", len(kept), len(ps), stats)
    return args.output


def cmd_split(args, run):
    ps = corpus_mod.ingest(args.input)
    run.inputs.append(args.input)
    cfg = splitter_mod.SplitConfig(args.cutoff, args.val_fraction, args.seed)
    result = splitter_mod.chronological_split(ps, cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name in ("train", "val", "test"):
        corpus_mod.write_jsonl(getattr(result, name), out / f"{name}.jsonl")
    splitter_mod.write_split_manifest(result, cfg, out / "split.json")
    table = splitter_mod.build_frequency_table(result.train)
    splitter_mod.write_frequency_tsv(table.track_counts, out / "track_freq.tsv")
    splitter_mod.write_frequency_tsv(table.artist_counts, out / "artist_freq.tsv")
    run.outputs += [out / f for f in ("train.jsonl", "val.jsonl", "test.jsonl", "split.json",
                                      "track_freq.tsv", "artist_freq.tsv")]
    run.results.update({"n_train": len(result.train), "n_val": len(result.val), "n_test": len(result.test),
                        "ratios": list(result.ratios)})
    return out


def cmd_build_vocab(args, run):
    train_ps = corpus_mod.ingest(args.train)
    run.inputs.append(args.train)
    in_vocab = vocab_mod.build_input_vocab(train_ps, args.input_mode, args.min_count)
    out_vocab = vocab_mod.build_output_vocab(train_ps, args.min_word_count)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    in_path = out / f"input_vocab.{args.input_mode}.txt"
    out_path = out / "output_vocab.txt"
    in_vocab.save(in_path)
    out_vocab.save(out_path)
    run.outputs += [in_path, out_path]
    run.results.update({"input_vocab_size": len(in_vocab), "output_vocab_size": len(out_vocab)})
    held = []
    for path in args.heldout or []:
        held += corpus_mod.ingest(path)
        run.inputs.append(path)
    if held:
        examples = [vocab_mod.encode(p, in_vocab, out_vocab, args.input_mode) for p in held]
        # proportion over token occurrences, not unique IDs
        run.results["unk_proportion_occurrences"] = vocab_mod.unk_proportion(examples)
    return out / f"build-vocab.{args.input_mode}"


def _load_vocabs(args, run):
    in_vocab = vocab_mod.Vocab.load(args.input_vocab)
    out_vocab = vocab_mod.Vocab.load(args.output_vocab)
    run.inputs += [args.input_vocab, args.output_vocab]
    return in_vocab, out_vocab


def cmd_train(args, run):
    in_vocab, out_vocab = _load_vocabs(args, run)
    train_ps = corpus_mod.ingest(args.train)
    val_ps = corpus_mod.ingest(args.val)
    run.inputs += [args.train, args.val]
    mcfg = ModelConfig(
        in_vocab_size=len(in_vocab), out_vocab_size=len(out_vocab), d_model=args.d_model,
        n_heads=args.n_heads, n_enc_layers=args.n_enc_layers, n_dec_layers=args.n_dec_layers,
        d_ff=args.d_ff, dropout=args.dropout, max_input_len=args.max_input_len,
        max_title_len=args.max_title_len, use_input_positions=args.use_input_positions,
        pre_norm=args.pre_norm)
    tcfg = TrainConfig(
        lr_max=args.lr_max, weight_decay=args.weight_decay, lr_min=args.lr_min, batch_size=args.batch_size,
        max_epochs=args.max_epochs, patience=args.patience, seed=args.seed, adam_beta1=args.adam_beta1,
        adam_beta2=args.adam_beta2, adam_eps=args.adam_eps, decay_mode=args.decay_mode,
        schedule_unit=args.schedule_unit)

    def enc(ps):
        return [vocab_mod.encode(p, in_vocab, out_vocab, args.input_mode, mcfg.max_input_len, mcfg.max_title_len)
                for p in ps if p.tracks]

    model = Seq2SeqModel.init(mcfg, args.seed, np.dtype(args.dtype).type)
    hashes = {"input": in_vocab.sha256(), "output": out_vocab.sha256()}
    meta = {"input_mode": args.input_mode}

    def finish(result):
        restore(model, result.best_params)
        save_checkpoint(args.output, model, hashes, {**meta, "best_epoch": result.best_epoch})
        run.outputs.append(args.output)
        if args.log:
            write_log(result.log, args.log)
            run.outputs.append(args.log)
        run.results.update({"best_epoch": result.best_epoch, "epochs_run": len(result.log),
                            "best_val_nll": result.state.best_val_nll, "diverged": result.diverged,
                            "n_params": model.n_params()})

    try:
        result = train(model, enc(train_ps), enc(val_ps), tcfg)
    except TrainingDiverged as e:
        finish(e.result)
        raise
    finish(result)
    return args.output


def _load_model(args, run):
    in_vocab, out_vocab = _load_vocabs(args, run)
    model, header = load_checkpoint(args.checkpoint, {"input": in_vocab.sha256(), "output": out_vocab.sha256()})
    run.inputs.append(args.checkpoint)
    return model, header, in_vocab, out_vocab


def cmd_generate(args, run):
    model, header, in_vocab, out_vocab = _load_model(args, run)
    mode = header["meta"]["input_mode"]
    ps = corpus_mod.ingest(args.input)
    run.inputs.append(args.input)
    dcfg = DecodeConfig(args.strategy, args.beam_width, args.max_len, args.length_penalty)
    rows = []
    for p in ps:
        ex = vocab_mod.encode(p, in_vocab, out_vocab, mode, model.cfg.max_input_len, model.cfg.max_title_len)
        if not ex.input_ids:
            continue
        g = generate(model, dcfg, ex.input_ids)
        rows.append((p.pid, vocab_mod.decode_title(g.token_ids, out_vocab), g.score))
    write_generations(rows, args.output)
    run.outputs.append(args.output)
    run.results["n_generated"] = len(rows)
    return args.output


def _pair_nll(model, header, in_vocab, out_vocab, ps):
    mode = header["meta"]["input_mode"]
    examples = [vocab_mod.encode(p, in_vocab, out_vocab, mode, model.cfg.max_input_len, model.cfg.max_title_len)
                for p in ps if p.tracks]
    out = {}
    for i in range(0, len(examples), 64):
        chunk = examples[i:i + 64]
        sums, counts = model.example_nll(make_batch(chunk))
        for e, s, c in zip(chunk, sums, counts):
            out[e.pid] = float(s / c)
    return out


def cmd_evaluate(args, run):
    if args.pairs:
        pairs = metrics_mod.read_pairs(args.pairs)
        run.inputs.append(args.pairs)
        refs = None
    else:
        if not (args.generated and args.references):
            raise UsageError("evaluate needs --pairs, or --generated with --references")
        refs = {p.pid: p for p in corpus_mod.ingest(args.references)}
        gens = read_generations(args.generated)
        run.inputs += [args.references, args.generated]
        missing = [pid for pid, _, _ in gens if pid not in refs]
        if missing:
            raise corpus_mod.CorpusError(f"generated pids absent from references: {missing[:10]}")
        pairs = [metrics_mod.EvalPair(pid, tuple(corpus_mod.tokenize_title(refs[pid].title)), tuple(toks))
                 for pid, toks, _ in gens if corpus_mod.tokenize_title(refs[pid].title)]
    stats = None
    if args.train:
        if refs is None:
            if not args.references:
                raise UsageError("--train needs --references to compute frequency stats")
            refs = {p.pid: p for p in corpus_mod.ingest(args.references)}
            run.inputs.append(args.references)
        table = splitter_mod.build_frequency_table(corpus_mod.ingest(args.train))
        run.inputs.append(args.train)
        stats = {p.pid: splitter_mod.playlist_frequency_stats(refs[p.pid], table) for p in pairs if p.pid in refs}
    embeddings = None
    if args.embeddings:
        embeddings = metrics_mod.read_embeddings(args.embeddings)
        run.inputs.append(args.embeddings)
    nll = None
    if args.checkpoint:
        if refs is None:
            raise UsageError("--checkpoint needs --references")
        model, header, in_vocab, out_vocab = _load_model(args, run)
        nll = _pair_nll(model, header, in_vocab, out_vocab, [refs[p.pid] for p in pairs])
    report = metrics_mod.evaluate(pairs, stats, embeddings, nll)
    metrics_mod.write_report(report, args.output, args.csv)
    run.outputs += [args.output, args.csv]
    if args.pairs_out:
        metrics_mod.write_pairs(pairs, args.pairs_out)
        run.outputs.append(args.pairs_out)
    run.results["corpus"] = report["corpus"]
    return args.output


def _histogram(values, bins):
    counts, edges = np.histogram(values, bins=bins)
    return [(float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(len(counts))]


def cmd_report(args, run):
    """Plot-ready tables: F_t/F_a histograms, distinct-n bars, bucket metrics."""
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reports = []
    for item in args.report:
        label, _, path = item.rpartition("=")
        label = label or Path(path).stem
        with open(path, encoding="utf-8") as f:
            reports.append((label, json.load(f)))
        run.inputs.append(path)
    written = []

    for key, attr in (("ft", "f_t"), ("fa", "f_a")):
        path = out / f"hist_{key}.csv"
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write("label,bin_lo,bin_hi,count\n")
            for label, rep in reports:
                values = [r[attr] for r in rep["per_pair"] if attr in r]
                if not values:
                    continue
                kept = splitter_mod.trim_percentile(values, args.percentile)
                for lo, hi, c in _histogram(kept, args.bins):
                    f.write(f"{label},{lo!r},{hi!r},{c}\n")
        written.append(path)
        qpath = out / f"quartile_cuts_{key}.csv"
        with open(qpath, "w", encoding="utf-8", newline="\n") as f:
            f.write("label,q25,q50,q75\n")
            for label, rep in reports:
                values = sorted(r[attr] for r in rep["per_pair"] if attr in r)
                if len(values) >= 4:
                    cuts = [values[max(0, math.ceil(q * len(values)) - 1)] for q in (0.25, 0.5, 0.75)]
                    f.write(f"{label},{cuts[0]!r},{cuts[1]!r},{cuts[2]!r}\n")
        written.append(qpath)

    path = out / "distinct.csv"
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("label,scope,n,value\n")
        for label, rep in reports:
            scopes = [("corpus", rep["corpus"])]
            for key in ("ft", "fa"):
                for b, block in rep.get(f"by_bucket_{key}", {}).items():
                    scopes.append((f"{key}_{b}", block))
            for scope, block in scopes:
                for n in (1, 2, 3):
                    v = block.get(f"distinct_{n}")
                    f.write(f"{label},{scope},{n},{'' if v is None else repr(v)}\n")
    written.append(path)

    path = out / "buckets.csv"
    metric_keys = ["n_pairs", "bleu_1", "bleu_2", "rouge_1", "rouge_2", "meteor",
                   "distinct_1", "distinct_2", "distinct_3", "bert_score", "sentbert", "nll"]
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("label,axis,bucket," + ",".join(metric_keys) + "\n")
        for label, rep in reports:
            rows = [("all", "corpus", rep["corpus"])]
            for key in ("ft", "fa"):
                rows += [(key, b, block) for b, block in rep.get(f"by_bucket_{key}", {}).items()]
            for axis, bucket, block in rows:
                vals = ["" if block.get(k) is None else repr(block[k]) for k in metric_keys]
                f.write(f"{label},{axis},{bucket}," + ",".join(vals) + "\n")
    written.append(path)
    run.outputs += written
    return out / "report"


# ---------------------------------------------------------------- parser

def _date(text):
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an ISO date: {text!r}") from None


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1: {text}")
    return v


def _add_model_args(p):
    p.add_argument("--d-model", type=_positive_int, default=128)
    p.add_argument("--n-heads", type=_positive_int, default=4)
    p.add_argument("--n-enc-layers", type=_positive_int, default=2)
    p.add_argument("--n-dec-layers", type=_positive_int, default=2)
    p.add_argument("--d-ff", type=_positive_int, default=None, help="default 4 * d_model")
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--max-input-len", type=_positive_int, default=128)
    p.add_argument("--max-title-len", type=_positive_int, default=16)
    p.add_argument("--use-input-positions", action="store_true")
    p.add_argument("--pre-norm", action="store_true")
    p.add_argument("--dtype", choices=("float32", "float64"), default="float32")


def _add_train_args(p):
    p.add_argument("--lr-max", type=float, default=0.005)
    p.add_argument("--weight-decay", type=float, default=1e-4)
    p.add_argument("--lr-min", type=float, default=1e-6)
    p.add_argument("--batch-size", type=_positive_int, default=64)
    p.add_argument("--max-epochs", type=_positive_int, default=50)
    p.add_argument("--patience", type=_positive_int, default=10)
    p.add_argument("--adam-beta1", type=float, default=0.9)
    p.add_argument("--adam-beta2", type=float, default=0.999)
    p.add_argument("--adam-eps", type=float, default=1e-8)
    p.add_argument("--decay-mode", choices=("decoupled", "l2"), default="decoupled")
    p.add_argument("--schedule-unit", choices=("epoch", "step"), default="epoch")


def _add_vocab_args(p):
    p.add_argument("--input-vocab", required=True)
    p.add_argument("--output-vocab", required=True)


def build_parser():
    parser = _Parser(prog="playlist-titlegen", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--config", dest="config_file", default=None, help="TOML file of option defaults")
    common.add_argument("--threads", type=_positive_int, default=None, help="cap numeric worker threads")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic long-tail corpus")
    p.add_argument("--output", required=True)
    p.add_argument("--tags-output")
    p.add_argument("--n-playlists", type=_positive_int, default=2000)
    p.add_argument("--n-tracks", type=_positive_int, default=6000)
    p.add_argument("--tracks-per-artist", type=_positive_int, default=20)
    p.add_argument("--artists-per-track", type=_positive_int, default=1)
    p.add_argument("--zipf", type=float, default=1.1)
    p.add_argument("--start-date", type=_date, default=dt.date(2015, 1, 1))
    p.add_argument("--end-date", type=_date, default=dt.date(2020, 12, 31))
    p.add_argument("--min-tracks", type=_positive_int, default=5)
    p.add_argument("--max-tracks", type=_positive_int, default=15)
    p.add_argument("--noise-fraction", type=float, default=0.05)
    p.add_argument("--grammar", help="JSON title grammar (genres, moods, contexts, templates)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("convert", parents=[common], help="ingest a dataset into normalized JSONL")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=corpus_mod.FORMATS, required=True)
    p.add_argument("--song-meta", help="Melon song_meta.json sidecar")
    p.add_argument("--mapping", help="JSON field-name overrides for the adapter")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("filter", parents=[common], help="drop noisy playlists")
    p.add_argument("--input", required=True)
    p.add_argument("--tags", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--min-title-tokens", type=_positive_int, default=3)
    p.add_argument("--min-avg-char-len", type=float, default=2.0)
    p.add_argument("--min-tracks", type=_positive_int, default=2)
    p.add_argument("--tag-match", choices=("token", "substring"), default="token")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("split", parents=[common], help="chronological train/val/test split")
    p.add_argument("--input", required=True)
    p.add_argument("--cutoff", type=_date, required=True)
    p.add_argument("--val-fraction", type=float, default=0.5)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("build-vocab", parents=[common], help="input and output vocabularies")
    p.add_argument("--train", required=True)
    p.add_argument("--input-mode", choices=vocab_mod.INPUT_MODES, required=True)
    p.add_argument("--min-count", type=_positive_int, default=1)
    p.add_argument("--min-word-count", type=_positive_int, default=1)
    p.add_argument("--heldout", action="append", help="val/test JSONL for the UNK proportion")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_build_vocab)

    p = sub.add_parser("train", parents=[common], help="train a title generator")
    p.add_argument("--train", required=True)
    p.add_argument("--val", required=True)
    _add_vocab_args(p)
    p.add_argument("--input-mode", choices=vocab_mod.INPUT_MODES, required=True)
    p.add_argument("--output", required=True, help="checkpoint path")
    p.add_argument("--log", help="per-epoch CSV log")
    _add_model_args(p)
    _add_train_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", parents=[common], help="decode titles for playlists")
    p.add_argument("--checkpoint", required=True)
    _add_vocab_args(p)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--strategy", choices=("greedy", "beam"), default="greedy")
    p.add_argument("--beam-width", type=_positive_int, default=4)
    p.add_argument("--max-len", type=_positive_int, default=16)
    p.add_argument("--length-penalty", type=float, default=0.0)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", parents=[common], help="score generated titles")
    p.add_argument("--pairs", help="JSONL {pid, reference, candidate}")
    p.add_argument("--generated")
    p.add_argument("--references", help="playlists JSONL holding the reference titles")
    p.add_argument("--train", help="train playlists, enables F_t/F_a bucket reporting")
    p.add_argument("--embeddings", help="token embedding file for BERT-based metrics")
    p.add_argument("--checkpoint", help="adds per-pair NLL")
    p.add_argument("--input-vocab")
    p.add_argument("--output-vocab")
    p.add_argument("--output", required=True)
    p.add_argument("--csv")
    p.add_argument("--pairs-out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", parents=[common], help="plot-ready tables from evaluation reports")
    p.add_argument("--report", action="append", required=True, metavar="[LABEL=]PATH")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--bins", type=_positive_int, default=30)
    p.add_argument("--percentile", type=float, default=99.0)
    p.set_defaults(func=cmd_report)
    return parser


def _config_defaults(path, parser_for_command):
    try:
        import tomllib
    except ImportError:  # Python 3.10
        import tomli as tomllib

    with open(path, "rb") as f:
        try:
            data = tomllib.load(f)
        except tomllib.TOMLDecodeError as e:
            raise UsageError(f"config file {path}: {e}") from None
    known = {a.dest for a in parser_for_command._actions}
    out = {}
    for key, value in data.items():
        dest = key.replace("-", "_")
        if dest not in known:
            raise UsageError(f"unknown option {key!r} in config file {path}")
        out[dest] = value
    return out


def parse_args(argv):
    parser = build_parser()
    commands = parser._subparsers._group_actions[0].choices
    command = next((a for a in argv if a in commands), None)
    pre = _Parser(add_help=False)
    pre.add_argument("--config", dest="config_file")
    config_file = pre.parse_known_args(argv)[0].config_file
    if command and config_file:
        # file values become defaults, so flags still win and required options may come from the file
        sub = commands[command]
        values = _config_defaults(config_file, sub)
        sub.set_defaults(**values)
        for action in sub._actions:
            if action.dest in values:
                action.required = False
    args = parser.parse_args(argv)
    for name in ("start_date", "end_date", "cutoff"):
        if isinstance(getattr(args, name, None), str):
            try:
                setattr(args, name, _date(getattr(args, name)))
            except argparse.ArgumentTypeError as e:
                raise UsageError(str(e)) from None
    return args


def _one_line(e):
    if isinstance(e, OSError) and e.strerror:
        msg = f"{e.strerror}: {e.filename}" if e.filename else e.strerror
    else:
        msg = str(e) or type(e).__name__
    return " ".join(msg.split())


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except UsageError as e:
        print(f"error: usage: {_one_line(e)}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as e:
        print(f"error: usage: {_one_line(e)}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    run = Run(args, argv)
    limiter = None
    if args.threads:
        from threadpoolctl import threadpool_limits
        limiter = threadpool_limits(limits=args.threads)
    try:
        target = args.func(args, run)
    except UsageError as e:
        print(f"error: usage: {_one_line(e)}", file=sys.stderr)
        return EXIT_USAGE
    except _USAGE_ERRORS as e:
        print(f"error: {type(e).__name__}: {_one_line(e)}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDiverged as e:
        run.results["error"] = _one_line(e)
        run.write(_manifest_path(args.output, args.command))
        print(f"error: {type(e).__name__}: {_one_line(e)}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as e:  # noqa: BLE001 - every runtime failure maps to exit 1
        log.debug("command failed", exc_info=True)
        print(f"error: {type(e).__name__}: {_one_line(e)}", file=sys.stderr)
        return EXIT_RUNTIME
    finally:
        if limiter is not None:
            limiter.unregister()
    run.write(_manifest_path(target, args.command))
    return 0


if __name__ == "__main__":
    sys.exit(main())
