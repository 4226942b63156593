"""Command-line entry point.

Subcommands: parse, graph, train, index (build/query), eval, sweep,
export-fixtures. Exit codes: 0 success, 1 usage, 2 data/format error,
3 internal invariant violation. Every stochastic component threads --seed,
and seeded invocations produce byte-identical output files.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from astsearch import errors as err
from astsearch.corpus import read_corpus, synthetic_corpus, write_corpus
from astsearch.embeddings import HashingProvider, StoreProvider, load_store
from astsearch.gnn import load_checkpoint, save_checkpoint
from astsearch.graph import TypeVocabulary, serialize_graph
from astsearch.index import build_index, load_index, query, read_payload, save_index
from astsearch.metrics import evaluate_retrieval
from astsearch.pipeline import Pipeline, PipelineOptions
from astsearch.syntax import parse_source
from astsearch.train import TrainConfig, train, write_metrics_csv

CONFIG_ENV_VAR = "ASTSEARCH_CONFIG"

_USAGE_EXIT = 1
_DATA_EXIT = 2
_INTERNAL_EXIT = 3

_DATA_ERRORS = (
    err.UnsupportedLanguage,
    err.EncodingError,
    err.FormatError,
    err.MissingEmbedding,
    err.DuplicateId,
    err.FingerprintMismatch,
    err.EmbeddingError,
    err.TrainingDiverged,
    FileNotFoundError,
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 instead of argparse's default 2
        raise _UsageError(f"{message}\n{self.format_usage()}")


def make_provider(spec: str, default_seed: int = 0):
    """Parse an embedder spec: hash:dim=D:seed=S or store:PATH[:strict]."""
    parts = spec.split(":")
    if parts[0] == "hash":
        dim, seed = 64, default_seed
        for part in parts[1:]:
            key, _, value = part.partition("=")
            if key == "dim":
                dim = int(value)
            elif key == "seed":
                seed = int(value)
            else:
                raise _UsageError(f"unknown hash embedder option {part!r}")
        return HashingProvider(dim=dim, seed=seed)
    if parts[0] == "store":
        if len(parts) < 2:
            raise _UsageError("store embedder needs a path: store:PATH[:strict]")
        strict = len(parts) > 2 and parts[2] == "strict"
        return StoreProvider(load_store(parts[1]), strict=strict)
    raise _UsageError(f"unknown embedder spec {spec!r}; use hash:... or store:PATH")


def provider_from_fingerprint(fingerprint: str):
    """Rebuild a hashing provider from its fingerprint; store providers need --embedder."""
    if fingerprint.startswith("hash:"):
        options = dict(part.split("=", 1) for part in fingerprint.split(":")[1:])
        return HashingProvider(dim=int(options["dim"]), seed=int(options["seed"]))
    raise _UsageError(
        f"index was built with embedder {fingerprint!r}; pass a matching --embedder"
    )


def _write_text(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        Path(path).write_text(text, encoding="utf-8")


# --- subcommand implementations -------------------------------------------------


def _cmd_parse(args) -> int:
    ast = parse_source(Path(args.file).read_bytes(), args.lang)
    ast.validate()
    depths = {ast.root: 0}
    max_depth = 0
    for node in reversed(ast.nodes):
        for child in node.children:
            depths[child] = depths.get(node.id, 0) + 1
            max_depth = max(max_depth, depths[child])
    kinds: dict[str, int] = {}
    for node in ast.nodes:
        kinds[node.kind] = kinds.get(node.kind, 0) + 1
    summary = {
        "language": args.lang,
        "nodes": len(ast.nodes),
        "depth": max_depth,
        "error_nodes": kinds.get("ERROR", 0),
        "root_kind": ast.nodes[ast.root].kind,
        "kinds": dict(sorted(kinds.items())),
    }
    _write_text(args.out, json.dumps(summary, indent=2, sort_keys=True))
    return 0


def _cmd_graph(args) -> int:
    raw = Path(args.file).read_bytes()
    try:
        source = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise err.EncodingError(f"source is not valid UTF-8: {exc}") from exc
    pipeline = Pipeline(
        vocab=TypeVocabulary.for_language(args.lang),
        provider=make_provider(args.embedder, args.seed),
        options=PipelineOptions(no_node_type=args.no_node_type, undirected=args.undirected),
    )
    graph, _ = pipeline.encode_sample(source, args.lang)
    _write_text(args.out, serialize_graph(graph))
    return 0


def _load_config(args) -> TrainConfig:
    config_path = args.config or os.environ.get(CONFIG_ENV_VAR)
    config = TrainConfig.from_file(config_path) if config_path else TrainConfig()
    overrides = {
        "seed": args.seed,
        "steps": args.steps,
        "batch_size": args.batch_size,
        "lr": args.lr,
        "pooling_ratio": args.ratio,
        "pooling_method": args.pooling,
    }
    for name, value in overrides.items():
        if value is not None:
            setattr(config, name, value)
    if getattr(args, "no_node_type", False):
        config.no_node_type = True
    if getattr(args, "undirected", False):
        config.undirected = True
    if getattr(args, "mlp_adapter", False):
        config.mlp_adapter = True
    config.validate()
    return config


def _cmd_train(args) -> int:
    config = _load_config(args)
    samples = read_corpus(args.corpus)
    provider = make_provider(args.embedder, config.seed)
    text_provider = make_provider(args.text_embedder, config.seed) if args.text_embedder else None
    result = train(
        config, samples, provider, text_provider=text_provider,
        diagnostics_dir=Path(args.out).parent,
    )
    save_checkpoint(result.model, args.out)
    if args.metrics:
        write_metrics_csv(result.log, args.metrics)
    summary = {
        "steps": config.steps,
        "final_loss": result.log[-1].loss,
        "sigma_lambda": result.log[-1].sigma_lambda,
        "tau": result.log[-1].tau,
        "checkpoint": args.out,
    }
    sys.stdout.write(json.dumps(summary, sort_keys=True) + "\n")
    return 0


def _pipeline_for_index(args, samples, provider) -> Pipeline:
    vocab = TypeVocabulary.for_languages({s.language for s in samples})
    return Pipeline(
        vocab=vocab,
        provider=provider,
        options=PipelineOptions(no_node_type=args.no_node_type, undirected=args.undirected),
    )


def _cmd_index_build(args) -> int:
    samples = read_corpus(args.corpus)
    provider = make_provider(args.embedder, args.seed)
    text_provider = (
        make_provider(args.text_embedder, args.seed) if args.text_embedder else provider
    )
    model = load_checkpoint(args.ckpt)
    pipeline = _pipeline_for_index(args, samples, provider)
    if args.jobs > 1:
        # Deterministic: executor.map preserves sample order.
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            encoded = list(
                pool.map(lambda s: pipeline.encode_sample(s.code, s.language), samples)
            )

        class _Precomputed(Pipeline):
            def __init__(self, base, table):
                super().__init__(base.vocab, base.provider, base.options)
                self._table = table

            def encode_sample(self, code, language):
                return self._table[(code, language)]

        table = {(s.code, s.language): enc for s, enc in zip(samples, encoded)}
        pipeline = _Precomputed(pipeline, table)
    index = build_index(samples, pipeline, text_provider, model)
    save_index(index, args.out, samples=samples)
    sys.stdout.write(
        json.dumps(
            {"entries": len(index.entries), "errors": len(index.errors), "index": args.out},
            sort_keys=True,
        )
        + "\n"
    )
    return 0


def _cmd_index_query(args) -> int:
    index = load_index(args.index)
    if args.embedder:
        provider = make_provider(args.embedder, args.seed)
    else:
        provider = provider_from_fingerprint(index.text_provider_fingerprint)
    hits = query(index, args.text, provider, k=args.k)
    entries = {e.id: e for e in index.entries}
    rows = []
    for hit_id, score in hits:
        row = {"id": hit_id, "score": score}
        if args.show_code:
            payload = read_payload(index, args.index, entries[hit_id])
            if payload is not None:
                row["code"] = payload["code"]
        rows.append(row)
    _write_text(args.out, json.dumps(rows, indent=2))
    return 0


def _cmd_eval(args) -> int:
    index = load_index(args.index)
    if args.embedder:
        provider = make_provider(args.embedder, args.seed)
    else:
        provider = provider_from_fingerprint(index.text_provider_fingerprint)
    if provider.fingerprint() != index.text_provider_fingerprint:
        raise err.FingerprintMismatch(
            f"index built with {index.text_provider_fingerprint!r}, "
            f"eval invoked with {provider.fingerprint()!r}"
        )
    pairs = read_corpus(args.pairs)
    ks = tuple(int(k) for k in args.k.split(","))
    queries = [
        (s.id, np.asarray(provider.embed_text(s.doc, key=s.id), dtype=np.float64), s.id)
        for s in pairs
    ]
    pool_ids = index.ids()
    pool_vectors = index.matrix()
    if args.pool_size is not None and args.pool_size < len(pool_ids):
        # seeded subsample for comparable runs; ground-truth entries stay in
        rng = np.random.default_rng(args.seed)
        truth_ids = {truth for _, _, truth in queries}
        chosen = set(rng.permutation(len(pool_ids))[: args.pool_size].tolist())
        chosen |= {i for i, pid in enumerate(pool_ids) if pid in truth_ids}
        keep = sorted(chosen)
        pool_ids = [pool_ids[i] for i in keep]
        pool_vectors = pool_vectors[keep]
    report = evaluate_retrieval(pool_ids, pool_vectors, queries, ks=ks)
    if args.format == "csv":
        lines = ["metric,value"]
        payload = report.to_json_dict()
        lines.append(f"mrr,{payload['mrr']!r}")
        for k, v in sorted(report.recall.items()):
            lines.append(f"recall@{k},{v!r}")
        lines.append(f"mam_mean,{report.mam.mean!r}")
        lines.append(f"mam_sd,{report.mam.sd!r}")
        lines.append(f"mam_prime_sd,{report.mam.sd_prime!r}")
        _write_text(args.out, "\n".join(lines) + "\n")
    else:
        _write_text(args.out, json.dumps(report.to_json_dict(), indent=2, sort_keys=True))
    if args.ranks_csv:
        with open(args.ranks_csv, "w", encoding="utf-8") as fh:
            fh.write("query_id,rank\n")
            for r in report.ranks:
                fh.write(f"{r.query_id},{r.rank}\n")
    return 0


def _cmd_sweep(args) -> int:
    config = _load_config(args)
    samples = read_corpus(args.corpus)
    ratios = [float(r) for r in args.ratios.split(",")]
    provider = make_provider(args.embedder, config.seed)
    lines = ["ratio,mrr"]
    for ratio in ratios:
        run_config = dataclasses.replace(config, pooling_ratio=ratio)
        result = train(run_config, samples, provider)
        embeddings = np.stack(
            [
                result.model.encode(g, r).data
                for g, r in zip(result.graphs, result.root_embeddings)
            ]
        )
        queries = [
            (sid, result.text_embeddings[i], sid) for i, sid in enumerate(result.sample_ids)
        ]
        report = evaluate_retrieval(result.sample_ids, embeddings, queries, ks=(1,))
        lines.append(f"{ratio},{report.mrr!r}")
    _write_text(args.out, "\n".join(lines) + "\n")
    return 0


def _cmd_export_fixtures(args) -> int:
    from astsearch import fixtures

    written = fixtures.export_fixtures(args.out, seed=args.seed)
    sys.stdout.write(json.dumps({"files": written, "dir": args.out}, sort_keys=True) + "\n")
    return 0


def _cmd_make_corpus(args) -> int:
    samples = synthetic_corpus(args.n, seed=args.seed)
    write_corpus(samples, args.out)
    sys.stdout.write(json.dumps({"samples": len(samples), "corpus": args.out}, sort_keys=True) + "\n")
    return 0


# --- parser wiring ------------------------------------------------------------


def _add_common_embedder(p, default="hash:dim=64:seed=0", with_text: bool = False):
    p.add_argument("--embedder", default=default, help="hash:dim=D:seed=S or store:PATH[:strict]")
    if with_text:
        p.add_argument(
            "--text-embedder",
            default=None,
            help="separate provider for docs/queries (defaults to --embedder)",
        )


def build_parser() -> _Parser:
    parser = _Parser(prog="astsearch", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="print a syntax-tree summary")
    p.add_argument("file")
    p.add_argument("--lang", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_parse)

    p = sub.add_parser("graph", help="emit the refined reversed-edge graph as JSON")
    p.add_argument("file")
    p.add_argument("--lang", required=True)
    p.add_argument("--no-node-type", action="store_true")
    p.add_argument("--undirected", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    _add_common_embedder(p)
    p.set_defaults(fn=_cmd_graph)

    p = sub.add_parser("train", help="contrastive training on a JSONL corpus")
    p.add_argument("--config", default=None, help=f"JSON/TOML config (or ${CONFIG_ENV_VAR})")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--metrics", default=None, help="per-step CSV log path")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--ratio", type=float, default=None)
    p.add_argument("--pooling", choices=("astgpool", "topkpool", "sagpool"), default=None)
    p.add_argument("--no-node-type", action="store_true")
    p.add_argument("--undirected", action="store_true")
    p.add_argument("--mlp-adapter", action="store_true")
    _add_common_embedder(p, with_text=True)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("index", help="build or query a retrieval index")
    index_sub = p.add_subparsers(dest="index_command", required=True)

    pb = index_sub.add_parser("build")
    pb.add_argument("--corpus", required=True)
    pb.add_argument("--ckpt", required=True)
    pb.add_argument("--out", required=True)
    pb.add_argument("--seed", type=int, default=0)
    pb.add_argument("--no-node-type", action="store_true")
    pb.add_argument("--undirected", action="store_true")
    pb.add_argument("--jobs", type=int, default=1)
    _add_common_embedder(pb, with_text=True)
    pb.set_defaults(fn=_cmd_index_build)

    pq = index_sub.add_parser("query")
    pq.add_argument("--index", required=True)
    pq.add_argument("--text", required=True)
    pq.add_argument("-k", type=int, default=10)
    pq.add_argument("--seed", type=int, default=0)
    pq.add_argument("--embedder", default=None)
    pq.add_argument("--show-code", action="store_true")
    pq.add_argument("--out", default=None)
    pq.set_defaults(fn=_cmd_index_query)

    p = sub.add_parser("eval", help="retrieval metrics over an index and query pairs")
    p.add_argument("--index", required=True)
    p.add_argument("--pairs", required=True, help="JSONL with id/doc ground-truth pairs")
    p.add_argument("--k", default="1,5,10")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--embedder", default=None)
    p.add_argument("--pool-size", type=int, default=None, help="seeded candidate-pool subsample")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--ranks-csv", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("sweep", help="train once per pooling ratio; emit ratio,mrr CSV")
    p.add_argument("--corpus", required=True)
    p.add_argument("--ratios", default="0.1,0.3,0.5,0.7,0.9")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--ratio", type=float, default=None)
    p.add_argument("--pooling", choices=("astgpool", "topkpool", "sagpool"), default=None)
    p.add_argument("--out", default=None)
    _add_common_embedder(p)
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("export-fixtures", help="write the derived-oracle fixture inputs")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_export_fixtures)

    p = sub.add_parser("make-corpus", help="write a deterministic synthetic corpus")
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_make_corpus)

    return parser


def run(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except _UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return _USAGE_EXIT
    except _DATA_ERRORS as exc:
        sys.stderr.write(f"error: {exc}\n")
        return _DATA_EXIT
    except Exception as exc:  # invariant violations and genuine bugs
        sys.stderr.write(f"internal error: {type(exc).__name__}: {exc}\n")
        return _INTERNAL_EXIT


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
