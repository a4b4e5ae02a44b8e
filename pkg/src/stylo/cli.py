"""``stylo`` command line: ingest, synth, train, eval, query, cluster, export.

Settings resolve as: built-in defaults < ``--config`` JSON file <
``STYLO_SEED`` (seed only) < command-line flags. Failures print one JSON
line on stderr and exit nonzero (2 usage, 3 missing file, 4 bad config,
5 bad data, 1 anything else).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import types
import typing
from dataclasses import MISSING, asdict, dataclass, field, fields
from pathlib import Path

from . import corpus as corpus_mod
from .cluster import cluster_report, kmeans, write_cluster_report
from .evaluate import (
    activity_breakdown,
    author_post_counts,
    dimension_sweep,
    split_half_eval,
    temporal_eval,
    write_activity_tsv,
    write_sweep_tsv,
)
from .index import build_index
from .modelio import ModelFileError, export_text, load_model, save_model
from .pvdm import TrainConfig, infer_vector, train
from .synth import SynthConfig, synth_posts

logger = logging.getLogger("stylo")

EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_BAD_CONFIG = 4
EXIT_BAD_DATA = 5
EXIT_OTHER = 1


class CliError(Exception):
    def __init__(self, kind: str, message: str, code: int):
        super().__init__(message)
        self.kind = kind
        self.code = code


@dataclass
class RunConfig:
    # paths and pipeline choices
    input: str | None = None
    format: str = "jsonl"
    split: str = "whole"
    output: str | None = None
    corpus: str | None = None
    model: str | None = None
    report: str | None = None
    tsv: str | None = None
    activity_report: str | None = None
    drop_rt: bool = False
    # training
    dim: int = 100
    window: int = 5
    negatives: int = 5
    epochs: int = 10
    lr0: float = 0.025
    lr_min: float = 0.0001
    subsample: float | None = 1e-3
    min_count: int = 5
    seed: int = 1
    workers: int = 1
    # evaluation and clustering
    k: int = 1
    dims: list[int] = field(default_factory=lambda: [10, 50, 100, 200])
    thresholds: list[int] = field(default_factory=lambda: [0, 500])
    clusters: int = 8
    max_iters: int = 100
    infer_steps: int | None = None
    # synthetic corpus
    n_authors: int = 100
    posts_per_author: int = 1000
    vocab_shared: int = 2000
    vocab_per_author: int = 50
    zipf_s: float = 1.1
    author_weight: float = 0.3
    style_sigma: float = 0.5
    post_length: float = 15.0
    n_years: int = 1
    start_year: int = 2015
    mention_rate: float = 0.05

    def train_config(self) -> TrainConfig:
        return TrainConfig.from_dict(asdict(self))

    def synth_config(self) -> SynthConfig:
        names = {f.name for f in fields(SynthConfig)}
        return SynthConfig(**{k: v for k, v in asdict(self).items() if k in names})

    def validate(self) -> None:
        if self.format not in corpus_mod.FORMATS:
            raise ValueError(f"format must be one of {corpus_mod.FORMATS}")
        if self.split not in corpus_mod.SPLITS:
            raise ValueError(f"split must be one of {corpus_mod.SPLITS}")
        if self.k < 1 or self.clusters < 1 or self.max_iters < 1:
            raise ValueError("k, clusters and max_iters must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        self.train_config()


def _base_type(annotation):
    """(scalar type, is_list, optional) for a RunConfig annotation string."""
    hint = typing.get_type_hints(RunConfig)[annotation]
    optional = False
    args = typing.get_args(hint)
    if isinstance(hint, types.UnionType) or typing.get_origin(hint) is typing.Union:
        optional = type(None) in args
        hint = next(a for a in args if a is not type(None))
    if typing.get_origin(hint) is list:
        return typing.get_args(hint)[0], True, optional
    return hint, False, optional


def _optional_number(kind):
    def parse(text: str):
        return None if text.lower() in ("none", "null", "off") else kind(text)
    parse.__name__ = kind.__name__
    return parse


def _coerce(name: str, value):
    kind, is_list, optional = _base_type(name)
    if value is None:
        if optional:
            return None
        raise ValueError(f"{name} must not be null")
    if is_list:
        if not isinstance(value, list):
            raise ValueError(f"{name} must be a list")
        return [_coerce_scalar(name, kind, v) for v in value]
    return _coerce_scalar(name, kind, value)


def _coerce_scalar(name, kind, value):
    if kind is bool:
        if not isinstance(value, bool):
            raise ValueError(f"{name} must be true or false")
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValueError(f"{name} must be an integer")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError(f"{name} must be a number")
        return float(value)
    if not isinstance(value, str):
        raise ValueError(f"{name} must be a string")
    return value


def add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("configuration (override --config)")
    group.add_argument("--config", help="JSON config file")
    group.add_argument("--print-config", action="store_true", help="print the resolved config as JSON and exit")
    group.add_argument("-v", "--verbose", action="store_true")
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        kind, is_list, optional = _base_type(f.name)
        if kind is bool:
            group.add_argument(flag, dest=f.name, action=argparse.BooleanOptionalAction, default=argparse.SUPPRESS)
        elif is_list:
            group.add_argument(flag, dest=f.name, type=kind, nargs="+", default=argparse.SUPPRESS,
                               metavar=f.name.upper())
        else:
            conv = _optional_number(kind) if optional and kind in (int, float) else kind
            group.add_argument(flag, dest=f.name, type=conv, default=argparse.SUPPRESS, metavar=f.name.upper())


def resolve_config(args: argparse.Namespace, environ=os.environ) -> RunConfig:
    values = {}
    for f in fields(RunConfig):
        values[f.name] = f.default if f.default is not MISSING else f.default_factory()
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise CliError("missing_file", f"config file not found: {path}", EXIT_MISSING_FILE)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise CliError("bad_config", f"{path}: {exc}", EXIT_BAD_CONFIG) from None
        if not isinstance(data, dict):
            raise CliError("bad_config", f"{path}: top level must be an object", EXIT_BAD_CONFIG)
        unknown = sorted(set(data) - set(values))
        if unknown:
            raise CliError("bad_config", f"{path}: unknown field(s) {', '.join(unknown)}", EXIT_BAD_CONFIG)
        try:
            values.update({k: _coerce(k, v) for k, v in data.items()})
        except ValueError as exc:
            raise CliError("bad_config", f"{path}: {exc}", EXIT_BAD_CONFIG) from None
    if "STYLO_SEED" in environ:
        try:
            values["seed"] = int(environ["STYLO_SEED"])
        except ValueError:
            raise CliError("bad_config", "STYLO_SEED must be an integer", EXIT_BAD_CONFIG) from None
    for f in fields(RunConfig):
        if hasattr(args, f.name):
            values[f.name] = getattr(args, f.name)
    cfg = RunConfig(**values)
    try:
        cfg.validate()
    except ValueError as exc:
        raise CliError("bad_config", str(exc), EXIT_BAD_CONFIG) from None
    return cfg


def _need(path: str | None, what: str, must_exist: bool = True) -> Path:
    if not path:
        raise CliError("usage", f"--{what} is required", EXIT_USAGE)
    p = Path(path)
    if must_exist and not p.is_file():
        raise CliError("missing_file", f"{what} file not found: {p}", EXIT_MISSING_FILE)
    return p


def cmd_ingest(cfg: RunConfig, args) -> None:
    src = _need(cfg.input, "input")
    out = _need(cfg.output, "output", must_exist=False)
    raw, skipped = corpus_mod.read_posts(src, cfg.format)
    posts, empty = corpus_mod.tokenize_posts(raw, drop_rt=cfg.drop_rt)
    policy = corpus_mod.SplitPolicy(cfg.split, cfg.seed)
    docs, dropped = corpus_mod.aggregate(posts, policy)
    corpus_mod.write_corpus(out, docs)
    print(f"posts={len(raw)} skipped={skipped} empty_posts={empty} documents={len(docs)} dropped={dropped}")


def cmd_synth(cfg: RunConfig, args) -> None:
    out = _need(cfg.output, "output", must_exist=False)
    posts = synth_posts(cfg.synth_config())
    if cfg.format == "jsonl":
        n = corpus_mod.write_posts_jsonl(out, posts)
    else:
        n = corpus_mod.write_posts_tsv(out, posts)
    print(f"posts={n} authors={cfg.n_authors}")


def cmd_train(cfg: RunConfig, args) -> None:
    docs = corpus_mod.read_corpus(_need(cfg.corpus, "corpus"))
    out = _need(cfg.model, "model", must_exist=False)
    model = train(docs, cfg.train_config())
    save_model(model, out)
    for epoch, loss in enumerate(model.epoch_losses, start=1):
        print(f"epoch={epoch} loss={loss:.6f}")
    print(f"model={out} vocab={len(model.vocab)} documents={len(model.doc_keys)} dim={model.dim}")


def _emit_report(report, cfg: RunConfig) -> None:
    if cfg.report:
        report.write_json(cfg.report)
    if cfg.tsv:
        report.write_tsv(cfg.tsv)


def cmd_eval(cfg: RunConfig, args) -> None:
    protocol = args.protocol
    if protocol == "sweep":
        docs = corpus_mod.read_corpus(_need(cfg.corpus, "corpus"))
        points = dimension_sweep(docs, cfg.dims, cfg.train_config(), cfg.k)
        for p in points:
            print(f"D={p.dim} accuracy={'nan' if p.accuracy is None else format(p.accuracy, '.6f')}"
                  + (f" error={json.dumps(p.error)}" if p.error else ""))
        if cfg.tsv:
            write_sweep_tsv(points, cfg.tsv)
        if cfg.report:
            payload = [{"dim": p.dim, "error": p.error, "report": p.report.to_dict() if p.report else None}
                       for p in points]
            Path(cfg.report).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        return

    model = load_model(_need(cfg.model, "model"))
    index = build_index(model)
    docs = corpus_mod.read_corpus(_need(cfg.corpus, "corpus")) if cfg.corpus else None
    counts = author_post_counts(docs) if docs is not None else None
    if protocol == "split-half":
        report = split_half_eval(index, cfg.k, counts, config=model.config.to_dict())
    else:
        report = temporal_eval(index, counts, config=model.config.to_dict())
    print(f"accuracy={report.accuracy:.6f}")
    print(f"n_authors={report.n_authors} positives={report.positives} k={report.k}")
    if docs is not None and protocol == "split-half":
        rows = activity_breakdown(report, docs, cfg.thresholds)
        for r in rows:
            acc = "undefined" if r.accuracy is None else f"{r.accuracy:.6f}"
            print(f"min_posts={r.min_posts} n_authors={r.n_authors} accuracy={acc}")
        if cfg.activity_report:
            write_activity_tsv(rows, cfg.activity_report)
    _emit_report(report, cfg)


def cmd_query(cfg: RunConfig, args) -> None:
    model = load_model(_need(cfg.model, "model"))
    index = build_index(model)
    if args.key:
        if args.key not in index:
            raise CliError("unknown_key", f"no document with key {args.key!r}", EXIT_BAD_DATA)
        hits = index.most_similar(args.key, args.top)
    elif args.text is not None:
        tokens = corpus_mod.normalize_and_tokenize(args.text, drop_rt=cfg.drop_rt)
        vec = infer_vector(tokens, model, steps=cfg.infer_steps, seed=cfg.seed)
        hits = index.query_vector(vec, args.top)
    else:
        raise CliError("usage", "query needs --key or --text", EXIT_USAGE)
    for rank, (key, score) in enumerate(hits, start=1):
        print(f"{rank} {key} {score:.6f}")


def cmd_cluster(cfg: RunConfig, args) -> None:
    model = load_model(_need(cfg.model, "model"))
    index = build_index(model)
    clustering = kmeans(index, cfg.clusters, seed=cfg.seed, max_iters=cfg.max_iters)
    if cfg.output:
        clustering.write_tsv(cfg.output)
    docs = corpus_mod.read_corpus(_need(cfg.corpus, "corpus")) if cfg.corpus else []
    rows = cluster_report(clustering, index, docs)
    if cfg.report:
        write_cluster_report(rows, cfg.report)
    for r in rows:
        tokens = ",".join(t for t, _ in r.top_tokens[:5])
        print(f"cluster={r.cluster} size={r.size} medoid={r.medoid} tokens={tokens}")
    print(f"inertia={clustering.inertia:.6f} iterations={clustering.iterations}")


def cmd_export(cfg: RunConfig, args) -> None:
    model = load_model(_need(cfg.model, "model"))
    out = _need(cfg.output, "output", must_exist=False)
    if args.what == "authors":
        n = export_text(model.doc_keys, model.w_doc, out)
    elif args.what == "fingerprints":
        index = build_index(model)
        n = export_text(index.keys, index.vectors, out)
    elif args.what == "words":
        n = export_text(model.vocab.id_to_word, model.w_in, out)
    else:
        model.vocab.to_tsv(out)
        n = len(model.vocab)
    print(f"lines={n} output={out}")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message, EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stylo", description="Author style fingerprints with PV-DM embeddings.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        add_config_flags(p)
        p.set_defaults(func=func)
        return p

    add("ingest", cmd_ingest, "tokenize raw posts into a keyed corpus file")
    add("synth", cmd_synth, "generate a synthetic post file")
    add("train", cmd_train, "train a model on a corpus file")
    p = add("eval", cmd_eval, "run an evaluation protocol")
    p.add_argument("protocol", choices=["split-half", "temporal", "sweep"])
    p = add("query", cmd_query, "nearest authors for a key or a text")
    p.add_argument("--key")
    p.add_argument("--text")
    p.add_argument("--top", type=int, default=10)
    add("cluster", cmd_cluster, "spherical k-means over author fingerprints")
    p = add("export", cmd_export, "export vectors or vocabulary as text")
    p.add_argument("--what", choices=["authors", "fingerprints", "words", "vocab"], default="authors")
    return parser


def _fail(kind: str, message: str, code: int) -> int:
    line = json.dumps({"error": kind, "exit": code, "message": " ".join(str(message).split())})
    print(line, file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = resolve_config(args)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.print_config:
            print(json.dumps(asdict(cfg), sort_keys=True))
            return 0
        args.func(cfg, args)
        return 0
    except CliError as exc:
        return _fail(exc.kind, str(exc), exc.code)
    except FileNotFoundError as exc:
        return _fail("missing_file", str(exc), EXIT_MISSING_FILE)
    except ModelFileError as exc:
        return _fail(exc.code, str(exc), EXIT_BAD_DATA)
    except (corpus_mod.CorpusFormatError, ValueError, KeyError) as exc:
        return _fail("bad_data", f"{type(exc).__name__}: {exc}", EXIT_BAD_DATA)
    except Exception as exc:  # noqa: BLE001
        return _fail("internal", f"{type(exc).__name__}: {exc}", EXIT_OTHER)


if __name__ == "__main__":
    sys.exit(main())
