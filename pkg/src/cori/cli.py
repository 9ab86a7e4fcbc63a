"""Single command-line entry point for every pipeline stage and the experiment
harness. Each subcommand prints one JSON summary line (echoing its effective
configuration, seed included) to stdout; progress goes to stderr. Exit codes:
0 success, 2 usage, 3 missing file, 4 data/schema violation, 5 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .augment import (AugmentationConfig, DictionaryFormatError, code_switch,
                      load_dictionary)
from .corpus import (DatasetFormatError, LanguageId, Task, Utterance,
                     read_dataset, read_utterances, write_utterances)
from .metrics import cka, read_embeddings, write_embeddings
from .model import TrainConfig, evaluate, load_checkpoint, save_checkpoint, train
from .model.train import embed_utterances
from .mt import (HttpBackend, MockBackend, MTClient, TranslationError)
from .pipeline import DEFAULT_MASK, TemplateIntegrityError, build_dataset
from .report import render_report
from .romanize import TableFormatError, load_tables, romanize_utterance
from .segment import LexiconFormatError, empty_lexicon, load_lexicon, segment
from .toy import make_toy_world, parallel_dataset

log = logging.getLogger("cori")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_DATA = 4
EXIT_RUNTIME = 5

DATA_ERRORS = (DatasetFormatError, LexiconFormatError, DictionaryFormatError,
               TableFormatError, ValueError)
RUNTIME_ERRORS = (TranslationError, TemplateIntegrityError, RuntimeError)


def _lang(v) -> LanguageId:
    return v if isinstance(v, LanguageId) else LanguageId.parse(str(v))


def _langs(v) -> list[LanguageId]:
    if isinstance(v, (list, tuple)):
        return [_lang(x) for x in v]
    return [_lang(x) for x in str(v).split(",") if x]


def _jsonable(v):
    if isinstance(v, LanguageId):
        return v.value
    if isinstance(v, Path):
        return str(v)
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def parse_config_file(path) -> dict:
    """Parse a ``key = value`` config file (TOML-style scalars, '#' comments)."""
    out = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, _, raw = line.partition("=")
        key = key.strip().replace("-", "_")
        raw = raw.strip()
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw.strip("\"'")
        out[key] = value
    return out


def _load_lexicon_arg(path, lang: LanguageId):
    if not path:
        return empty_lexicon(lang)
    return load_lexicon(path, lang)


def _lexicon_dir(dir_path, langs):
    lexicons = {}
    if dir_path:
        base = Path(dir_path)
        for lang in langs:
            p = base / f"{lang.value}.tsv"
            if p.exists():
                lexicons[lang] = load_lexicon(p, lang)
    return lexicons


def _make_client(args) -> MTClient:
    if args.mt == "http":
        backend = HttpBackend(args.endpoint or "")
    elif args.mt == "identity":
        backend = MockBackend(identity=True)
    else:
        if args.fixtures:
            backend = MockBackend.from_fixture_file(args.fixtures)
        else:
            backend = MockBackend()
    return MTClient(backend, cache_dir=args.cache_dir,
                    max_concurrent=max(1, args.jobs))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_segment(args) -> dict:
    lang = _lang(args.lang)
    lex = _load_lexicon_arg(args.lexicon, lang)
    utts = []
    with Path(args.infile).open(encoding="utf-8") as f:
        for line in f:
            text = line.rstrip("\n")
            if not text:
                continue
            utts.append(Utterance(lang=lang, text=text, words=tuple(segment(text, lex))))
    write_utterances(utts, args.out)
    return {"sentences": len(utts), "out": str(args.out)}


def cmd_romanize(args) -> dict:
    lang = _lang(args.lang) if args.lang else None
    tables = load_tables(args.tables)
    utts = read_utterances(args.infile)
    out = []
    for u in utts:
        if lang is not None and u.lang is not lang:
            raise DatasetFormatError(
                f"record language {u.lang.value} does not match --lang {lang.value}")
        lex = _load_lexicon_arg(args.lexicon, u.lang)
        out.append(romanize_utterance(u, lex, tables, strip_tones=args.strip_tones))
    write_utterances(out, args.out)
    oov = sum(w.oov for u in out for w in u.words)
    return {"sentences": len(out), "oov_words": oov, "out": str(args.out)}


def cmd_augment(args) -> dict:
    utts = read_utterances(args.infile)
    src = _lang(args.src_lang) if args.src_lang else (utts[0].lang if utts else LanguageId.ZH)
    single = _lang(args.single_target) if args.single_target else None
    dictionary = load_dictionary(args.dict, src, single_target=single)
    out = []
    switched = 0
    for i, u in enumerate(utts):
        cfg = AugmentationConfig(ratio=args.ratio, seed=args.seed + i, view=args.view)
        v = code_switch(u, dictionary, cfg)
        switched += sum(a.surface != b.surface or a.roman != b.roman
                        for a, b in zip(v.words, u.words))
        out.append(v)
    write_utterances(out, args.out)
    return {"sentences": len(out), "switched_words": switched, "out": str(args.out)}


def cmd_build(args) -> dict:
    task = Task.parse(args.task)
    src = _lang(args.src_lang)
    targets = _langs(args.targets) if args.targets else []
    lexicons = _lexicon_dir(args.lexicon_dir, set(targets) | {src})
    tables = load_tables(args.tables)
    client = _make_client(args) if task.kind != "token" else None
    report = build_dataset(args.infile, task, src, targets, lexicons, tables,
                           client, args.out_dir, mask=args.mask,
                           strip_tones=args.strip_tones, split=args.split)
    return report


def cmd_train_toy(args) -> dict:
    world = make_toy_world(n_train=args.train_size, n_parallel=args.parallel_size,
                           vocab_words=args.vocab_words,
                           shared_roman_frac=args.shared_roman, seed=args.seed)
    cfg = TrainConfig(mode=args.mode, cl=args.cl == "on", ratio=args.ratio,
                      temperature=args.temperature, lr=args.lr, steps=args.steps,
                      batch_size=args.batch_size, seed=args.seed,
                      embed_dim=args.embed_dim, num_layers=args.layers,
                      num_heads=args.heads, proj_hidden=args.proj_hidden,
                      proj_out=args.proj_out)
    model, records = train(world.train, world.dictionary, cfg)
    acc_src = evaluate(model, parallel_dataset(world, "src"))["value"]
    acc_tgt = evaluate(model, parallel_dataset(world, "tgt"))["value"]
    emb_src = embed_utterances(model, world.parallel_src)
    emb_tgt = embed_utterances(model, world.parallel_tgt)
    xl_cka = cka(emb_src, emb_tgt)
    summary = {"mode": cfg.mode, "cl": cfg.cl, "seed": cfg.seed, "steps": cfg.steps,
               "final_task_loss": records[-1]["task_loss"],
               "final_cl_loss": records[-1]["cl_loss"],
               "final_total_loss": records[-1]["total_loss"],
               "acc_src": acc_src, "acc_tgt": acc_tgt, "cka": xl_cka}
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with (out / "log.jsonl").open("w", encoding="utf-8") as f:
            for r in records:
                f.write(json.dumps(r, sort_keys=True) + "\n")
        with (out / "summary.json").open("w", encoding="utf-8") as f:
            json.dump(summary, f, sort_keys=True, indent=1)
        save_checkpoint(model, out / "checkpoint.npz")
        write_embeddings(emb_src, out / "embeddings.src.tsv")
        write_embeddings(emb_tgt, out / "embeddings.tgt.tsv")
        summary["out_dir"] = str(out)
    return summary


def cmd_eval(args) -> dict:
    model = load_checkpoint(args.model)
    dataset = read_dataset(args.data)
    return evaluate(model, dataset)


def cmd_cka(args) -> dict:
    a = read_embeddings(args.a)
    b = read_embeddings(args.b)
    return {"cka": cka(a, b), "rows": len(a.ids)}


def cmd_report(args) -> dict:
    return render_report(args.runs, args.out_dir)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file; flags override")
    common.add_argument("--jobs", type=int, default=1,
                        help="parallel workers (1 = bit-reproducible)")

    parser = argparse.ArgumentParser(
        prog="cori",
        description="CJKV corpus toolkit: segmentation, romanization, "
                    "code-switching, dataset construction, desk-scale "
                    "contrastive training, and CKA metrics.")
    sub = parser.add_subparsers(dest="command")
    subparsers = {}

    p = sub.add_parser("segment", parents=[common],
                       help="segment raw text (one sentence per line) into words")
    p.add_argument("--lang", required=True, help="language code: zh/ja/ko/vi/en")
    p.add_argument("--lexicon", help="segmentation lexicon TSV")
    p.add_argument("--in", dest="infile", required=True, help="input text file")
    p.add_argument("--out", required=True, help="output utterance JSONL")
    p.set_defaults(func=cmd_segment)
    subparsers["segment"] = p

    p = sub.add_parser("romanize", parents=[common],
                       help="fill romanized stream of utterance JSONL")
    p.add_argument("--lang", help="expected language of the records")
    p.add_argument("--lexicon", help="lexicon TSV with readings/pinyin")
    p.add_argument("--tables", help="romanization tables TSV (default: built-in)")
    p.add_argument("--strip-tones", action="store_true",
                   help="strip tone diacritics from romanization")
    p.add_argument("--in", dest="infile", required=True, help="input utterance JSONL")
    p.add_argument("--out", required=True, help="output utterance JSONL")
    p.set_defaults(func=cmd_romanize)
    subparsers["romanize"] = p

    p = sub.add_parser("augment", parents=[common],
                       help="code-switch utterances through a bilingual dictionary")
    p.add_argument("--dict", required=True, help="bilingual dictionary TSV")
    p.add_argument("--ratio", type=float, default=0.5,
                   help="per-word replacement probability")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--view", choices=("ortho", "roman"), default="ortho",
                   help="stream to switch")
    p.add_argument("--src-lang", help="dictionary source language (default: records)")
    p.add_argument("--single-target", help="restrict switching to one target language")
    p.add_argument("--in", dest="infile", required=True, help="input utterance JSONL")
    p.add_argument("--out", required=True, help="output utterance JSONL")
    p.set_defaults(func=cmd_augment)
    subparsers["augment"] = p

    p = sub.add_parser("build", parents=[common],
                       help="construct task datasets (translate/segment/romanize)")
    p.add_argument("--task", required=True,
                   help="pawsx, xnli, udpos, panx, xquad, or mlqa")
    p.add_argument("--in", dest="infile", required=True, help="raw input JSONL")
    p.add_argument("--src-lang", required=True, help="source language code")
    p.add_argument("--targets", help="comma-separated target language codes")
    p.add_argument("--lexicon-dir", help="directory of per-language <lang>.tsv lexicons")
    p.add_argument("--tables", help="romanization tables TSV (default: built-in)")
    p.add_argument("--out-dir", required=True, help="output directory")
    p.add_argument("--mt", choices=("mock", "identity", "http"), default="mock",
                   help="translation backend")
    p.add_argument("--fixtures", help="mock fixture JSON file")
    p.add_argument("--endpoint", help="http backend endpoint URL")
    p.add_argument("--cache-dir", help="translation cache directory")
    p.add_argument("--mask", default=DEFAULT_MASK, help="QA answer mask token")
    p.add_argument("--strip-tones", action="store_true",
                   help="strip tone diacritics from romanization")
    p.add_argument("--split", default="test", help="split tag for output files")
    p.set_defaults(func=cmd_build)
    subparsers["build"] = p

    p = sub.add_parser("train-toy", parents=[common],
                       help="train the desk-scale encoder on the synthetic "
                            "bilingual corpus and report transfer metrics")
    p.add_argument("--mode", choices=("ortho", "roman", "both"), default="both",
                   help="input streams the encoder consumes")
    p.add_argument("--cl", choices=("on", "off"), default="on",
                   help="contrastive objective on/off")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--steps", type=int, default=200, help="training steps")
    p.add_argument("--batch-size", type=int, default=8, help="batch size")
    p.add_argument("--ratio", type=float, default=0.5,
                   help="code-switch replacement probability")
    p.add_argument("--temperature", type=float, default=0.1,
                   help="contrastive softmax temperature")
    p.add_argument("--lr", type=float, default=0.1, help="gradient-descent step size")
    p.add_argument("--embed-dim", type=int, default=16, help="encoder width")
    p.add_argument("--layers", type=int, default=1, help="encoder layers")
    p.add_argument("--heads", type=int, default=2, help="attention heads")
    p.add_argument("--proj-hidden", type=int, default=32,
                   help="projection head hidden width")
    p.add_argument("--proj-out", type=int, default=16,
                   help="projection head output width")
    p.add_argument("--train-size", type=int, default=200,
                   help="synthetic training sentences")
    p.add_argument("--parallel-size", type=int, default=100,
                   help="held-out parallel sentence pairs")
    p.add_argument("--vocab-words", type=int, default=40,
                   help="synthetic word types per language")
    p.add_argument("--shared-roman", type=float, default=0.5,
                   help="fraction of word types with shared romanization")
    p.add_argument("--out-dir", help="run directory (checkpoint, log, embeddings)")
    p.set_defaults(func=cmd_train_toy)
    subparsers["train-toy"] = p

    p = sub.add_parser("eval", parents=[common],
                       help="evaluate a checkpoint on a dataset file")
    p.add_argument("--model", required=True, help="checkpoint .npz")
    p.add_argument("--data", required=True, help="dataset JSONL")
    p.set_defaults(func=cmd_eval)
    subparsers["eval"] = p

    p = sub.add_parser("cka", parents=[common],
                       help="linear CKA between two embedding TSV dumps")
    p.add_argument("--a", required=True, help="first embedding TSV")
    p.add_argument("--b", required=True, help="second embedding TSV")
    p.set_defaults(func=cmd_cka)
    subparsers["cka"] = p

    p = sub.add_parser("report", parents=[common],
                       help="render summary table and figures from run directories")
    p.add_argument("--runs", required=True, help="directory of train-toy run dirs")
    p.add_argument("--out-dir", required=True, help="report output directory")
    p.set_defaults(func=cmd_report)
    subparsers["report"] = p

    return parser, subparsers


def _echo_config(args) -> dict:
    skip = {"func", "command", "config"}
    return {k: _jsonable(v) for k, v in vars(args).items() if k not in skip}


def _emit(obj: dict) -> None:
    print(json.dumps(obj, sort_keys=True, ensure_ascii=False))


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")

    parser, subparsers = build_parser()
    if "--config" in argv:
        idx = argv.index("--config")
        if idx + 1 >= len(argv):
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        try:
            overrides = parse_config_file(argv[idx + 1])
        except FileNotFoundError as e:
            _emit({"error": str(e), "category": "missing-file"})
            return EXIT_MISSING_FILE
        except ValueError as e:
            _emit({"error": str(e), "category": "data"})
            return EXIT_DATA
        for sp in subparsers.values():
            dests = {a.dest for a in sp._actions}
            sp.set_defaults(**{k: v for k, v in overrides.items() if k in dests})

    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if not getattr(args, "command", None):
        parser.print_help(sys.stderr)
        return EXIT_USAGE

    try:
        summary = args.func(args)
    except FileNotFoundError as e:
        _emit({"command": args.command, "error": str(e), "category": "missing-file"})
        return EXIT_MISSING_FILE
    except DATA_ERRORS as e:
        _emit({"command": args.command, "error": str(e), "category": "data"})
        return EXIT_DATA
    except RUNTIME_ERRORS as e:
        _emit({"command": args.command, "error": str(e), "category": "runtime"})
        return EXIT_RUNTIME
    _emit({"command": args.command, "config": _echo_config(args), **summary})
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
