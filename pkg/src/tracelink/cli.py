"""Command-line entry point: ingest, pipeline, recommend, combine, eval.

Every subcommand accepts ``--config FILE`` (JSON), ``--seed``, ``--out``
and ``--threads``; explicit flags win over config values. Relative paths
inside a config file are resolved against the file's directory.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import corpus
from .corpus import TaskDataset, TaskKind
from .docvec import embed_artifacts, embed_document, save_vectors
from .embeddings import WordEmbeddingModel, load_text_embeddings
from .errors import EmptyQuery, TraceLinkError, UnknownMetricTag
from .evaluation import accuracy_curve, report, safe_filename, write_report
from .metrics import (
    DistanceMatrix,
    combine_matrices,
    distance_matrix,
    load_matrix,
    matrix_to_csv,
    rank_targets,
    save_matrix,
)
from .neural import TrainConfig, load_model, save_model, split_sources, train

logger = logging.getLogger("tracelink")


class StageError(Exception):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@contextlib.contextmanager
def stage(name: str):
    logger.info("stage: %s", name)
    try:
        yield
    except StageError:
        raise
    except (TraceLinkError, OSError, ValueError, KeyError) as exc:
        raise StageError(name, exc) from exc


# -- configuration ------------------------------------------------------------


@dataclass
class RunConfig:
    embeddings: dict[str, Path] = field(default_factory=dict)
    dataset: Path | None = None
    inputs: dict[str, Path] = field(default_factory=dict)
    kind: TaskKind = TaskKind.TRACEABILITY
    train: dict = field(default_factory=dict)
    transfer: dict[str, Path] = field(default_factory=dict)
    out: Path = Path("tracelink-out")
    seed: int = 0
    threads: int | None = None

    def train_config(self) -> TrainConfig:
        return TrainConfig.from_dict({**self.train, "seed": self.seed})

    def check_paths(self) -> None:
        paths = [*self.embeddings.values(), *self.inputs.values(), *self.transfer.values()]
        if self.dataset is not None:
            paths.append(self.dataset)
        missing = [str(p) for p in paths if not Path(p).exists()]
        if missing:
            raise FileNotFoundError(f"missing input files: {', '.join(missing)}")

    def to_dict(self) -> dict:
        return {
            "embeddings": {k: str(v) for k, v in self.embeddings.items()},
            "dataset": str(self.dataset) if self.dataset else None,
            "inputs": {k: str(v) for k, v in self.inputs.items()},
            "kind": self.kind.value,
            "train": self.train_config().to_dict(),
            "transfer": {k: str(v) for k, v in self.transfer.items()},
            "seed": self.seed,
        }


def _named_paths(items: Sequence[str] | None) -> dict[str, Path]:
    out = {}
    for item in items or ():
        name, sep, path = item.partition("=")
        if not sep:
            path = name
            name = Path(name).stem
        out[name] = Path(path)
    return out


def _train_overrides(items: Sequence[str] | None) -> dict:
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"--train expects KEY=VALUE, got {item!r}")
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def load_run_config(args: argparse.Namespace) -> RunConfig:
    data: dict = {}
    base = Path.cwd()
    if args.config:
        cfg_path = Path(args.config)
        data = json.loads(cfg_path.read_text(encoding="utf-8"))
        base = cfg_path.resolve().parent

    def resolve(p):
        p = Path(p)
        return p if p.is_absolute() else base / p

    cfg = RunConfig(
        embeddings={k: resolve(v) for k, v in data.get("embeddings", {}).items()},
        dataset=resolve(data["dataset"]) if data.get("dataset") else None,
        inputs={k: resolve(v) for k, v in data.get("inputs", {}).items()},
        kind=TaskKind(data.get("kind", "traceability")),
        train=dict(data.get("train", {})),
        transfer={k: resolve(v) for k, v in data.get("transfer", {}).items()},
        out=resolve(data.get("out", "tracelink-out")),
        seed=int(data.get("seed", 0)),
        threads=data.get("threads"),
    )
    # flags win
    if getattr(args, "embedding", None):
        cfg.embeddings = _named_paths(args.embedding)
    if getattr(args, "dataset", None):
        cfg.dataset = Path(args.dataset)
    if getattr(args, "transfer", None):
        cfg.transfer = _named_paths(args.transfer)
    for key in ("commits", "tickets", "links"):
        if getattr(args, key, None):
            cfg.inputs[key] = Path(getattr(args, key))
    if getattr(args, "kind", None):
        cfg.kind = TaskKind(args.kind)
    cfg.train.update(_train_overrides(getattr(args, "train", None)))
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = Path(args.out)
    if args.threads is not None:
        cfg.threads = args.threads
    return cfg


# -- shared steps ---------------------------------------------------------------


def ingest_dataset(kind: TaskKind, inputs: dict[str, Path]) -> TaskDataset:
    def need(key):
        if key not in inputs:
            raise ValueError(f"{kind.value} dataset needs --{key}")
        return inputs[key]

    tickets = corpus.read_tickets(need("tickets"))
    if kind is TaskKind.TRACEABILITY:
        return corpus.build_traceability(corpus.read_commits(need("commits")), tickets)
    if kind is TaskKind.DUPLICATES:
        return corpus.build_duplicates(tickets, corpus.read_links(need("links")))
    return corpus.build_summary_description(tickets)


def _load_dataset(cfg: RunConfig) -> TaskDataset:
    if cfg.dataset is not None:
        return corpus.read_dataset(cfg.dataset)
    if cfg.inputs:
        return ingest_dataset(cfg.kind, cfg.inputs)
    raise ValueError("no dataset given (use --dataset or config 'dataset'/'inputs')")


def _load_embeddings(paths: dict[str, Path]) -> dict[str, WordEmbeddingModel]:
    if not paths:
        raise ValueError("no embedding model given (use --embedding NAME=PATH)")
    return {name: load_text_embeddings(path, name=name) for name, path in paths.items()}


def _multi_name(names: Sequence[str]) -> str:
    return f"{len(names)}M"


def _resolve_metric(tag: str, names: Sequence[str]) -> tuple[str, list[str]]:
    kind, sep, suffix = tag.partition(":")
    if not sep or kind not in ("cos", "nl", "combined"):
        raise UnknownMetricTag(f"unknown metric tag {tag!r}")
    if suffix in names:
        return kind, [suffix]
    if len(names) > 1 and suffix == _multi_name(names):
        return kind, list(names)
    raise UnknownMetricTag(f"unknown metric tag {tag!r}; embeddings: {', '.join(names)}")


# -- subcommands ------------------------------------------------------------------


def cmd_ingest(args) -> int:
    cfg = load_run_config(args)
    with stage("ingest"):
        try:
            dataset = ingest_dataset(cfg.kind, cfg.inputs)
        except TraceLinkError as exc:
            files = ", ".join(f"{k}={v}" for k, v in sorted(cfg.inputs.items()))
            exc.args = (f"{exc} [inputs: {files}]",)
            raise
        cfg.out.mkdir(parents=True, exist_ok=True)
        path = cfg.out / "dataset.jsonl"
        corpus.write_dataset(dataset, path)
    summary = {"kind": dataset.kind.value, "retained": dataset.counts(), "dropped": dataset.dropped}
    print(json.dumps(summary, sort_keys=True))
    logger.info("wrote %s", path)
    return 0


def cmd_pipeline(args) -> int:
    with stage("config"):
        cfg = load_run_config(args)
        cfg.check_paths()
        tcfg = cfg.train_config()
    out = cfg.out
    for sub in ("vectors", "matrices", "models", "curves"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    failed = out / "FAILED"
    if failed.exists():
        failed.unlink()
    try:
        _run_pipeline(cfg, tcfg, out)
    except StageError as exc:
        failed.write_text(f"{exc}\n", encoding="utf-8")
        raise
    return 0


def _run_pipeline(cfg: RunConfig, tcfg: TrainConfig, out: Path) -> None:
    with stage("dataset"):
        dataset = _load_dataset(cfg)
        corpus.write_dataset(dataset, out / "dataset.jsonl")
    with stage("embeddings"):
        models = _load_embeddings(cfg.embeddings)

    eval_sources = dataset.source_ids
    if tcfg.mode == "split":
        _, eval_sources = split_sources(dataset, tcfg.train_fraction, tcfg.seed)
    eval_set = set(eval_sources)
    eval_links = [l for l in dataset.links if l[0] in eval_set]

    cos: dict[str, DistanceMatrix] = {}
    nl: dict[str, DistanceMatrix] = {}
    for name, model in models.items():
        with stage(f"vectorize:{name}"):
            src = embed_artifacts(model, dataset.sources, cfg.threads)
            tgt = embed_artifacts(model, dataset.targets, cfg.threads)
            save_vectors(src, out / "vectors" / f"{name}_sources.dvec")
            save_vectors(tgt, out / "vectors" / f"{name}_targets.dvec")
            oov = sum(v.oov_count for v in src + tgt)
            total = sum(v.token_count for v in src + tgt)
            logger.info("%s: %d/%d tokens out of vocabulary", name, oov, total)
        with stage(f"cosine:{name}"):
            cos[name] = distance_matrix(src, tgt, "cosine", tag=f"cos:{name}", workers=cfg.threads)
        if name in cfg.transfer:
            with stage(f"load-model:{name}"):
                net = load_model(cfg.transfer[name])
            nl_tag = "nl:transfer" if len(models) == 1 else f"nl:transfer:{name}"
        else:
            with stage(f"train:{name}"):
                vecs = ({v.artifact_id: v for v in src}, {v.artifact_id: v for v in tgt})
                net, history = train(dataset, vecs, tcfg)
                save_model(net, out / "models" / f"nl_{name}.json")
                lines = ["epoch,loss"] + [f"{i},{l!r}" for i, l in enumerate(history, 1)]
                (out / "models" / f"nl_{name}_loss.csv").write_text("\n".join(lines) + "\n")
            nl_tag = f"nl:{name}"
        with stage(f"nl:{name}"):
            nl[name] = distance_matrix(src, tgt, net, tag=nl_tag, workers=cfg.threads)

    with stage("combine"):
        matrices: list[DistanceMatrix] = []
        pairings: list[tuple[str, str]] = []
        groups = [(name, cos[name], nl[name]) for name in models]
        if len(models) > 1:
            multi = _multi_name(list(models))
            groups.append((
                multi,
                combine_matrices(list(cos.values()), tag=f"cos:{multi}"),
                combine_matrices(list(nl.values()), tag=f"nl:{multi}"),
            ))
        for name, c, n in groups:
            comb_name = name if not n.metric_tag.startswith("nl:transfer") else n.metric_tag[3:]
            combined = combine_matrices([c, n], tag=f"combined:{comb_name}")
            matrices += [c, n, combined]
            pairings += [(n.metric_tag, c.metric_tag), (n.metric_tag, combined.metric_tag)]
        for m in matrices:
            save_matrix(m, out / "matrices" / f"{safe_filename(m.metric_tag)}.dmat")

    with stage("evaluate"):
        curves = [
            accuracy_curve(m.select_rows(eval_sources), eval_links, dataset.excluded_pairs)
            for m in matrices
        ]
        title = (
            f"task: {dataset.kind.value}; sources evaluated: {len(eval_sources)}; "
            f"targets: {len(dataset.targets)}; mode: {tcfg.mode}; seed: {tcfg.seed}"
        )
        rep = report(curves, pairings, title=title)
        write_report(rep, out)
        (out / "run_config.json").write_text(
            json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    sys.stdout.write(rep.text)


def cmd_recommend(args) -> int:
    cfg = load_run_config(args)
    with stage("load"):
        dataset = _load_dataset(cfg)
        models = _load_embeddings(cfg.embeddings)
        kind, names = _resolve_metric(args.metric, list(models))
    text = args.query if args.query is not None else sys.stdin.read()
    tokens = corpus.tokenize(text)
    if not tokens:
        raise EmptyQuery("query has no tokens after preprocessing")

    model_paths = _named_paths(args.model)
    with stage("score"):
        cos_rows, nl_rows = [], []
        for name in names:
            emb = models[name]
            query = embed_document(emb, tokens, "<query>")
            if query.oov_count == query.token_count:
                logger.warning("%s: every query token is out of vocabulary", name)
            targets = embed_artifacts(emb, dataset.targets, cfg.threads)
            if kind in ("cos", "combined"):
                cos_rows.append(distance_matrix([query], targets, "cosine", tag=f"cos:{name}"))
            if kind in ("nl", "combined"):
                path = model_paths.get(name, cfg.out / "models" / f"nl_{name}.json")
                net = load_model(path)
                nl_rows.append(distance_matrix([query], targets, net, tag=f"nl:{name}"))
        parts = []
        if cos_rows:
            parts.append(combine_matrices(cos_rows, tag="cos"))
        if nl_rows:
            parts.append(combine_matrices(nl_rows, tag="nl"))
        scores = combine_matrices(parts, tag=args.metric)

    n_targets = scores.shape[1]
    k = args.k
    if k > n_targets:
        logger.warning("k=%d exceeds %d targets; showing all", k, n_targets)
        k = n_targets
    for target_id, dist in rank_targets(scores, 0, k):
        print(f"{target_id}\t{dist:.6f}")
    return 0


def _tagged_matrices(items: Sequence[str]) -> list[DistanceMatrix]:
    out = []
    for item in items:
        tag, sep, path = item.rpartition("=")
        out.append(load_matrix(path, metric_tag=tag if sep else None))
    return out


def cmd_combine(args) -> int:
    cfg = load_run_config(args)
    with stage("combine"):
        matrices = _tagged_matrices(args.matrices)
        combined = combine_matrices(matrices, tag=args.tag)
        cfg.out.mkdir(parents=True, exist_ok=True)
        path = cfg.out / f"{safe_filename(combined.metric_tag)}.dmat"
        save_matrix(combined, path)
        if args.csv:
            path.with_suffix(".csv").write_text(matrix_to_csv(combined), encoding="utf-8")
    print(path)
    return 0


def cmd_eval(args) -> int:
    cfg = load_run_config(args)
    with stage("eval"):
        dataset = _load_dataset(cfg)
        matrices = _tagged_matrices(args.matrices)
        curves = [accuracy_curve(m, dataset.links, dataset.excluded_pairs) for m in matrices]
        pairings = [tuple(p.split(",", 1)) for p in args.pair or ()]
        if any(len(p) != 2 for p in pairings):
            raise ValueError("--pair expects CHALLENGER,BASELINE")
        rep = report(curves, pairings)
        write_report(rep, cfg.out)
    sys.stdout.write(rep.text)
    return 0


# -- argument parsing --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="seed for every stochastic step")
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, help="worker threads (default: all cores)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="tracelink", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def data_flags(p):
        p.add_argument("--dataset", help="dataset JSONL written by 'ingest'")
        p.add_argument("--kind", choices=[k.value for k in TaskKind])
        p.add_argument("--commits", help="commits JSONL")
        p.add_argument("--tickets", help="tickets JSONL")
        p.add_argument("--links", help="duplicate links CSV")

    p = sub.add_parser("ingest", parents=[common], help="clean raw data into a dataset")
    data_flags(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("pipeline", parents=[common], help="vectorize, train, score, evaluate")
    data_flags(p)
    p.add_argument("--embedding", action="append", metavar="NAME=PATH")
    p.add_argument("--transfer", action="append", metavar="NAME=MODEL_JSON",
                   help="use a trained network instead of training one")
    p.add_argument("--train", action="append", metavar="KEY=VALUE",
                   help="training option override, e.g. epochs=20")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("recommend", parents=[common], help="top-k targets for a query text")
    data_flags(p)
    p.add_argument("--embedding", action="append", metavar="NAME=PATH")
    p.add_argument("--model", action="append", metavar="NAME=MODEL_JSON",
                   help="network per embedding (default: OUT/models/nl_NAME.json)")
    p.add_argument("--metric", default=None, help="cos:NAME, nl:NAME, combined:NAME or *:2M")
    p.add_argument("-k", type=int, default=10)
    p.add_argument("query", nargs="?", help="query text (default: stdin)")
    p.set_defaults(func=cmd_recommend)

    p = sub.add_parser("combine", parents=[common], help="average distance matrices")
    p.add_argument("matrices", nargs="+", metavar="[TAG=]PATH")
    p.add_argument("--tag", help="tag of the combined matrix")
    p.add_argument("--csv", action="store_true", help="also write a CSV export")
    p.set_defaults(func=cmd_combine)

    p = sub.add_parser("eval", parents=[common], help="accuracy@k report for matrices")
    data_flags(p)
    p.add_argument("matrices", nargs="+", metavar="[TAG=]PATH")
    p.add_argument("--pair", action="append", metavar="CHALLENGER,BASELINE")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.threads is not None and args.threads < 1:
        print("tracelink: --threads must be positive", file=sys.stderr)
        return 1
    if args.command == "recommend" and args.metric is None:
        first = next(iter(load_run_config(args).embeddings), None)
        args.metric = f"cos:{first}"
    try:
        return args.func(args)
    except StageError as exc:
        print(f"tracelink: {exc}", file=sys.stderr)
        return 1
    except (TraceLinkError, OSError, ValueError) as exc:
        print(f"tracelink: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
