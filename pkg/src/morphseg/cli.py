"""Command-line surface: reproducible experiments over the library.

Verbs
    train     fit one or more replicates and write checkpoints + reports
    eval      score a checkpoint on a held-out file
    segment   decode words to segmentations on standard output
    stats     corpus statistics (word/morph counts, top morphs)
    make-aux  draw random strings matching a corpus's alphabet and lengths

Conventions
    - exit codes: 0 success, 1 usage error, 2 data error, 3 runtime failure
    - every run prints its resolved configuration to standard error
    - artifacts of a run live under one output directory with a manifest;
      identical flags and seed reproduce them byte for byte (figures aside)
    - a key=value config file can preset train flags; explicit flags win
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import autodiff as ad
from . import model as M
from . import training as T
from .data import (
    MODES,
    DataError,
    SegExample,
    corpus_stats,
    decorate_for_mode,
    encode_example,
    generate_random_strings,
    lang_symbol,
    load_aux_words,
    load_dataset,
)
from .evaluation import EvaluationError
from .report import (
    format_eval_text,
    format_stats_text,
    write_eval_report,
    write_history_report,
    write_manifest,
    write_stats_report,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3

LANG_ALIASES = {
    "mex": "MX", "mx": "MX", "mexicanero": "MX",
    "nah": "NA", "na": "NA", "nahuatl": "NA",
    "wix": "WX", "wx": "WX", "wixarika": "WX",
    "yn": "YN", "yorem": "YN", "yoremnokki": "YN",
}


class UsageError(Exception):
    """Bad flags or flag combinations (exit code 1)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); we map usage to 1
        raise UsageError(message)


def canon_lang(tag: str) -> str:
    return LANG_ALIASES.get(tag.lower(), tag.upper())


def canon_mode(raw: str) -> str:
    mode = raw.upper()
    if mode not in MODES:
        raise UsageError(
            f"unknown mode {raw!r}; choose from {', '.join(m.lower() for m in MODES)}"
        )
    return mode


def split_tagged(spec: str) -> tuple[str | None, str]:
    """Parse "TAG:PATH" into (canonical tag, path); a bare path (or one whose
    colon prefix looks like a path component) has no tag."""
    if ":" in spec:
        prefix, rest = spec.split(":", 1)
        if prefix and "/" not in prefix and "\\" not in prefix and "." not in prefix:
            return canon_lang(prefix), rest
    return None, spec


# ---------------------------------------------------------------------------
# config file and resolved-configuration plumbing

_INT_KEYS = {
    "m", "seed", "replicates", "epochs", "eval-every", "batch-size",
    "hidden", "embed", "attn",
}
_LIST_KEYS = {"train", "dev", "test"}
_TRAIN_KEYS = _INT_KEYS | _LIST_KEYS | {"mode", "aux", "lang-tag", "out"}


def parse_config_file(path) -> dict:
    """Flat key=value text ('#' comments allowed); keys are the train flag
    names.  Values given on the command line override these."""
    values: dict = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise DataError(f"cannot read config file: {err}") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip().lower().replace("_", "-")
        value = value.strip()
        if key not in _TRAIN_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        if not value:
            continue
        if key in _INT_KEYS:
            try:
                values[key] = int(value)
            except ValueError:
                raise UsageError(
                    f"{path}:{lineno}: key {key!r} expects an integer, got {value!r}"
                ) from None
        elif key in _LIST_KEYS:
            values[key] = [part.strip() for part in value.split(",") if part.strip()]
        else:
            values[key] = value
    return values


def print_resolved(resolved: dict) -> None:
    print("resolved configuration:", file=sys.stderr)
    for key in sorted(resolved):
        value = resolved[key]
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        print(f"  {key} = {'' if value is None else value}", file=sys.stderr)


def config_text(resolved: dict) -> str:
    """The resolved train configuration as reusable key=value text."""
    lines = []
    for key in sorted(resolved):
        value = resolved[key]
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key} = {'' if value is None else value}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# verbs


def cmd_train(args) -> None:
    file_vals = parse_config_file(args.config) if args.config else {}

    def pick(key, default=None):
        flag = getattr(args, key.replace("-", "_"))
        if flag is not None:
            return flag
        return file_vals.get(key, default)

    mode = canon_mode(pick("mode", "S2S"))
    train_specs = pick("train")
    dev_specs = pick("dev")
    test_specs = pick("test")
    out = pick("out")
    if not train_specs:
        raise UsageError("--train is required")
    if not dev_specs:
        raise UsageError("--dev is required")
    if not out:
        raise UsageError("--out is required")
    aux_path = pick("aux")
    if mode in ("MTT-U", "DA-U") and not aux_path:
        raise UsageError(f"mode {mode.lower()} needs --aux (an unannotated word list)")

    config = T.TrainConfig(
        mode=mode,
        m=pick("m"),
        seed=pick("seed", 1),
        max_epochs=pick("epochs", 200),
        eval_every=pick("eval-every", 5),
        batch_size=pick("batch-size", 20),
        replicates=pick("replicates", 5),
        hidden=pick("hidden", 100),
        embed_dim=pick("embed", 300),
        attn_dim=pick("attn"),
    )

    lang = None
    if mode == "XLING":
        def load_map(specs, what):
            pairs = [split_tagged(s) for s in specs]
            if len(pairs) < 2 or any(tag is None for tag, _ in pairs):
                raise UsageError(
                    f"multilingual runs need two or more TAG:PATH values for --{what}"
                )
            return {tag: load_dataset(path, lang=tag) for tag, path in pairs}

        train_data = load_map(train_specs, "train")
        dev_data = load_map(dev_specs, "dev")
        test_data = load_map(test_specs, "test") if test_specs else None
    else:
        def load_single(specs, what):
            if len(specs) != 1:
                raise UsageError(f"mode {mode.lower()} takes exactly one --{what} file")
            tag, path = split_tagged(specs[0])
            return load_dataset(path, lang=tag or lang)

        tag0, _ = split_tagged(train_specs[0])
        lang = tag0 or (canon_lang(args.lang_tag) if args.lang_tag else None)
        train_data = load_single(train_specs, "train")
        dev_data = load_single(dev_specs, "dev")
        test_data = load_single(test_specs, "test") if test_specs else None

    aux_words = load_aux_words(aux_path) if aux_path else None
    m_resolved = T.resolve_m(config, lang)

    resolved = {
        "mode": mode, "m": m_resolved, "seed": config.seed,
        "epochs": config.max_epochs, "eval-every": config.eval_every,
        "batch-size": config.batch_size, "replicates": config.replicates,
        "hidden": config.hidden, "embed": config.embed_dim,
        "attn": config.attention_dim, "train": list(train_specs),
        "dev": list(dev_specs), "test": list(test_specs) if test_specs else None,
        "aux": aux_path, "lang-tag": lang, "out": str(out),
    }
    print_resolved(resolved)

    def on_eval(seed, epoch, acc):
        print(f"[seed {seed}] epoch {epoch}: dev accuracy {acc:.4f}", file=sys.stderr)

    history, models = T.run_replicates(
        config, train_data, dev_data, test_data=test_data,
        aux_words=aux_words, on_eval=on_eval,
    )

    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    for mdl, rep in zip(models, history.replicates):
        meta = {
            "mode": mode, "m": m_resolved, "seed": rep.seed,
            "epoch": rep.selected_epoch, "dev_accuracy": rep.selected_dev_accuracy,
        }
        if mode == "XLING":
            meta["languages"] = sorted(train_data)
        elif lang:
            meta["lang"] = lang
        name = f"replicate_{rep.seed}.ckpt"
        T.save_checkpoint(out_dir / name, mdl, meta)
        files.append(name)
    files += write_history_report(out_dir, history)
    (out_dir / "config.txt").write_text(config_text(resolved), encoding="utf-8")
    files.append("config.txt")
    write_manifest(out_dir, "train", resolved, files)

    n_params = models[0].n_parameters()
    mean_dev, std_dev = history.dev_summary()
    print(f"trained {len(models)} replicate(s); {n_params} parameters each")
    print(f"dev accuracy: mean {mean_dev:.4f} std {std_dev:.4f}")
    for key, metrics in history.test_summary().items():
        label = key if key else (lang or "test")
        mv, sv = metrics["accuracy"]
        fv, _ = metrics["f1"]
        print(f"test[{label}]: accuracy {mv:.4f} (std {sv:.4f}), f1 {fv:.4f}")
    print(f"artifacts in {out_dir}")


def _load_model_for_decoding(args):
    mp, meta = T.load_checkpoint(args.model)
    mode = meta.get("mode", "S2S")
    lang = canon_lang(args.lang_tag) if args.lang_tag else meta.get("lang")
    if mode == "XLING":
        if not lang:
            raise UsageError(
                "--lang-tag is required to decode with a multilingual checkpoint"
            )
        if lang_symbol(lang) not in mp.vocab.symbols:
            known = [
                s[3:-1] for s in mp.vocab.symbols if s.startswith("<L=")
            ]
            raise DataError(
                f"checkpoint has no language tag {lang}; it knows {', '.join(known)}"
            )
    return mp, meta, mode, lang


def cmd_eval(args) -> None:
    mp, meta, mode, lang = _load_model_for_decoding(args)
    resolved = {
        "model": args.model, "test": args.test, "report": args.report,
        "lang-tag": lang, "mode": mode,
    }
    print_resolved(resolved)
    ds = load_dataset(args.test)
    report = T.test_report(mp, ds, mode, lang)
    files = write_eval_report(args.report, report)
    write_manifest(args.report, "eval", resolved, files)
    sys.stdout.write(format_eval_text(report))


def cmd_segment(args) -> None:
    mp, meta, mode, lang = _load_model_for_decoding(args)
    resolved = {
        "model": args.model, "word": list(args.word) if args.word else None,
        "input-file": args.input_file, "lang-tag": lang, "mode": mode,
    }
    print_resolved(resolved)
    words = list(args.word) if args.word else []
    if args.input_file:
        text = Path(args.input_file).read_text(encoding="utf-8")
        words += [line.strip() for line in text.splitlines() if line.strip()]
    if not args.word and not args.input_file:
        raise UsageError("give --word and/or --input-file")
    vocab = mp.vocab
    for word in words:
        ex = decorate_for_mode(SegExample(source=word, target=word), mode, lang)
        oov = sorted({ch for ch in word if vocab.char_id(ch) == vocab.unk_id})
        if oov:
            print(
                f"warning: {word!r}: characters {', '.join(map(repr, oov))} are "
                "outside the model alphabet; using the unknown symbol",
                file=sys.stderr,
            )
        result = M.segment_word(mp, encode_example(vocab, ex))
        if result.truncated:
            print(
                f"warning: {word!r}: decode hit the length cap before the end "
                "symbol", file=sys.stderr,
            )
        print(f"{word}\t{result.text}")


def cmd_stats(args) -> None:
    resolved = {"data": args.data, "top-k": args.top_k, "out": args.out}
    print_resolved(resolved)
    ds = load_dataset(args.data)
    stats = corpus_stats(ds.examples, top_k=args.top_k)
    sys.stdout.write(format_stats_text(stats))
    if args.out:
        files = write_stats_report(args.out, stats)
        write_manifest(args.out, "stats", resolved, files)


def cmd_make_aux(args) -> None:
    resolved = {
        "alphabet-from": args.alphabet_from, "n": args.n, "seed": args.seed,
        "out": args.out,
    }
    print_resolved(resolved)
    ds = load_dataset(args.alphabet_from)
    if len(ds) == 0:
        raise DataError(f"{args.alphabet_from}: no words to draw an alphabet from")
    alphabet = sorted({ch for ex in ds for ch in ex.source})
    lengths = [len(ex.source) for ex in ds]
    words = generate_random_strings(alphabet, args.n, lengths, args.seed)
    text = "".join(w + "\n" for w in words)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {len(words)} words to {args.out}", file=sys.stderr)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# parser


def build_parser() -> _Parser:
    parser = _Parser(
        prog="morphseg",
        description="Character-level morphological surface segmentation.",
    )
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train replicates and write checkpoints")
    t.add_argument("--config", help="key=value file presetting these flags")
    t.add_argument("--train", action="append", metavar="[TAG:]PATH",
                   help="training file; repeat TAG:PATH entries for mode xling")
    t.add_argument("--dev", action="append", metavar="[TAG:]PATH",
                   help="development file for model selection")
    t.add_argument("--test", action="append", metavar="[TAG:]PATH",
                   help="optional held-out file scored after training")
    t.add_argument("--mode", help="s2s, mtt-u, mtt-r, da-u, da-r, or xling")
    t.add_argument("--aux", metavar="PATH",
                   help="unannotated word list (required for mtt-u and da-u)")
    t.add_argument("--m", type=int, help="auxiliary examples per gold example")
    t.add_argument("--seed", type=int, help="experiment seed (default 1)")
    t.add_argument("--replicates", type=int, help="training runs to average (default 5)")
    t.add_argument("--epochs", type=int, help="maximum epochs (default 200)")
    t.add_argument("--eval-every", type=int, help="epochs between dev decodes (default 5)")
    t.add_argument("--batch-size", type=int, help="examples per update (default 20)")
    t.add_argument("--hidden", type=int, help="recurrent state size (default 100)")
    t.add_argument("--embed", type=int, help="character embedding size (default 300)")
    t.add_argument("--attn", type=int, help="attention size (default: hidden)")
    t.add_argument("--lang-tag", help="language tag for a single-language run")
    t.add_argument("--out", help="output directory for checkpoints and reports")

    e = sub.add_parser("eval", help="score a checkpoint on a held-out file")
    e.add_argument("--model", required=True, help="checkpoint path")
    e.add_argument("--test", required=True, help="gold-segmented file")
    e.add_argument("--report", required=True, help="output directory")
    e.add_argument("--lang-tag", help="language tag (multilingual checkpoints)")

    s = sub.add_parser("segment", help="decode words to segmentations on stdout")
    s.add_argument("--model", required=True, help="checkpoint path")
    s.add_argument("--word", action="append", help="word to segment (repeatable)")
    s.add_argument("--input-file", help="file with one word per line")
    s.add_argument("--lang-tag", help="language tag (multilingual checkpoints)")

    st = sub.add_parser("stats", help="corpus statistics")
    st.add_argument("--data", required=True, help="gold-segmented file")
    st.add_argument("--top-k", type=int, default=10, help="morphs to rank (default 10)")
    st.add_argument("--out", help="optional output directory for report files")

    ma = sub.add_parser("make-aux", help="draw random strings from a corpus's alphabet")
    ma.add_argument("--alphabet-from", required=True, metavar="PATH",
                    help="gold-segmented file supplying alphabet and lengths")
    ma.add_argument("--n", type=int, required=True, help="number of strings")
    ma.add_argument("--seed", type=int, default=0, help="draw seed (default 0)")
    ma.add_argument("--out", help="output word list (default: stdout)")
    return parser


HANDLERS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "segment": cmd_segment,
    "stats": cmd_stats,
    "make-aux": cmd_make_aux,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        HANDLERS[args.verb](args)
        return EXIT_OK
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, EvaluationError, T.CheckpointError, M.ModelError,
            UnicodeDecodeError, OSError) as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except (T.TrainingDivergedError, ad.DimensionError, ArithmeticError) as err:
        print(f"runtime error: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
