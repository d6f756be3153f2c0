"""``anchor-rag`` command line.

Exit codes: 0 ok, 2 usage or configuration error, 3 data error, 4 backend error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import __version__
from .backends import BackendConfig, BackendError, RemoteEmbedder, RemoteFillMask, RemoteGenerator
from .estimator import AnchorRAG, AnchorSelector
from .evaluation import load_dataset, run_eval
from .exceptions import AnchorRAGError, DataError, EmptyGenerationError, IndexBuildError, InvalidParameterError
from .fixtures import write_fixtures
from .generate import ExtractiveBackend, ScriptedBackend, load_template
from .index import FlatIndex, HashedEmbedder, build_index, load_corpus
from .text import tokenize

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_BACKEND = 0, 2, 3, 4

logger = logging.getLogger("anchor_rag")


class ConfigError(AnchorRAGError):
    pass


def _opt_float(raw: str):
    return None if raw.strip().lower() in ("", "none", "off") else float(raw)


def _opt_str(raw: str):
    return None if raw.strip().lower() in ("", "none") else raw.strip()


def _lambdas(raw: str):
    return tuple(float(x) for x in raw.split(","))


def _opt(default, parse, help, choices=None):
    return field(default=default, metadata={"parse": parse, "help": help, "choices": choices})


@dataclass
class RunConfig:
    corpus_path: str | None = _opt(None, _opt_str, "newline-delimited JSON corpus (id, title, text)")
    index_path: str | None = _opt(None, _opt_str, "index directory")
    dataset_path: str | None = _opt(None, _opt_str, "newline-delimited JSON QA set (id, question, answers)")
    mode: str = _opt("anchor-rag", str, "pipeline mode", ("anchor-rag", "naive-rag", "no-retrieval"))
    predictor: str = _opt("ngram", str, "fill-mask backend", ("ngram", "remote"))
    embedder: str = _opt("hashed", str, "embedding backend", ("hashed", "remote"))
    generator: str = _opt("extractive", str, "generation backend", ("extractive", "scripted", "remote"))
    script_path: str | None = _opt(None, _opt_str, "JSON steps for the scripted generator")
    k: int = _opt(10, int, "fill-mask top-k")
    top_n: int = _opt(5, int, "retrieval depth")
    alpha: float = _opt(0.2, float, "anchor count as a fraction of candidates")
    m_max: int = _opt(3, int, "maximum number of anchors")
    tau: float | None = _opt(None, _opt_float, "entropy threshold in nats (none disables)")
    context_window: int = _opt(5, int, "tokens of context kept on each side of an anchor")
    ngram_lambdas: tuple = _opt((0.6, 0.3, 0.1), _lambdas, "trigram,bigram,unigram interpolation weights")
    temperature: float = _opt(0.1, float, "softmax temperature over retrieval similarities")
    window: int = _opt(100, int, "chunk size in tokens")
    overlap: int = _opt(20, int, "chunk overlap in tokens")
    dimension: int = _opt(4096, int, "hashed embedding dimension")
    seed: int = _opt(0, int, "hashed embedding seed")
    template_id: str = _opt("default-v1", str, "prompt template")
    prompt_budget: int = _opt(1024, int, "prompt budget in whitespace tokens")
    max_tokens: int = _opt(64, int, "generation length limit")
    workers: int = _opt(1, int, "worker threads")
    backend_url: str | None = _opt(None, _opt_str, "base URL of the remote inference service")
    api_key_env: str = _opt("ANCHOR_RAG_API_KEY", str, "environment variable holding the API key")
    timeout_ms: int = _opt(30000, int, "remote request timeout")
    max_retries: int = _opt(3, int, "retries for rate-limited or transport failures")
    backoff_initial_ms: int = _opt(250, int, "first retry delay; doubles per retry")

    def validate(self) -> "RunConfig":
        for f in dataclasses.fields(self):
            choices = f.metadata["choices"]
            if choices and getattr(self, f.name) not in choices:
                raise ConfigError(f"{f.name} must be one of {choices}")
        checks = [
            ("k", self.k >= 2), ("top_n", self.top_n >= 1), ("alpha", self.alpha > 0),
            ("m_max", self.m_max >= 1), ("context_window", self.context_window >= 0),
            ("temperature", self.temperature > 0), ("window", self.window > self.overlap >= 0),
            ("dimension", self.dimension >= 8), ("prompt_budget", self.prompt_budget >= 1),
            ("max_tokens", self.max_tokens >= 1), ("workers", self.workers >= 1),
            ("timeout_ms", self.timeout_ms >= 1), ("max_retries", self.max_retries >= 0),
            ("backoff_initial_ms", self.backoff_initial_ms >= 1),
            ("ngram_lambdas", len(self.ngram_lambdas) == 3 and min(self.ngram_lambdas) >= 0
             and abs(sum(self.ngram_lambdas) - 1) <= 1e-9),
        ]
        for name, ok in checks:
            if not ok:
                raise ConfigError(f"invalid value for {name}: {getattr(self, name)!r}")
        try:
            load_template(self.template_id)
        except KeyError:
            raise ConfigError(f"unknown template {self.template_id!r}") from None
        remote = "remote" in (self.predictor, self.embedder, self.generator)
        if remote and not self.backend_url:
            raise ConfigError("backend_url is required for remote backends")
        if self.generator == "scripted" and not self.script_path:
            raise ConfigError("script_path is required for the scripted generator")
        return self


CONFIG_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def flag_name(field_name: str) -> str:
    return "--" + field_name.replace("_", "-")


def read_config_file(path) -> dict:
    """Parse a flat ``key = value`` file; ``#`` starts a comment line."""
    values = {}
    try:
        lines = Path(path).read_text("utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_FIELDS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, raw)
    return values


def _parse_value(key: str, raw: str):
    try:
        return CONFIG_FIELDS[key].metadata["parse"](raw)
    except ValueError:
        raise ConfigError(f"invalid value for {key}: {raw!r}") from None


def _config_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", metavar="PATH", help="flat key = value config file")
    parent.add_argument("--json", metavar="PATH", dest="json_out",
                        help="write machine-readable output here instead of standard output")
    for name, f in CONFIG_FIELDS.items():
        default = f.default
        if isinstance(default, tuple):
            default = ",".join(str(x) for x in default)
        help_text = f"{f.metadata['help']} (default: {default})"
        parent.add_argument(flag_name(name), dest=name, default=argparse.SUPPRESS, metavar="VALUE",
                            help=help_text.replace("%", "%%"))
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="anchor-rag", description="Entropy-anchored retrieval QA.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    parent = _config_parent()
    sub.add_parser("build-index", parents=[parent], help="chunk, embed and persist a corpus")
    p = sub.add_parser("anchors", parents=[parent], help="score anchor candidates of a question")
    p.add_argument("question")
    p = sub.add_parser("ask", parents=[parent], help="answer one question")
    p.add_argument("question")
    sub.add_parser("eval", parents=[parent], help="evaluate a QA dataset")
    p = sub.add_parser("gen-fixtures", help="write a synthetic corpus and QA set")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-docs", type=int, default=200)
    p.add_argument("--n-questions", type=int, default=50)
    p.add_argument("--out-dir", default=".")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = read_config_file(args.config) if getattr(args, "config", None) else {}
    for name in CONFIG_FIELDS:
        if name in vars(args):
            values[name] = _parse_value(name, getattr(args, name))
    return RunConfig(**values).validate()


def _backend_config(cfg: RunConfig) -> BackendConfig:
    return BackendConfig(cfg.backend_url, cfg.api_key_env, cfg.timeout_ms, cfg.max_retries,
                         cfg.backoff_initial_ms)


def make_predictor(cfg: RunConfig):
    return RemoteFillMask(_backend_config(cfg)) if cfg.predictor == "remote" else None


def make_embedder(cfg: RunConfig, dimension: int | None = None):
    if cfg.embedder == "remote":
        return RemoteEmbedder(_backend_config(cfg), dimension)
    return HashedEmbedder(cfg.dimension, cfg.seed)


def make_generator(cfg: RunConfig):
    if cfg.generator == "remote":
        return RemoteGenerator(_backend_config(cfg))
    if cfg.generator == "scripted":
        try:
            raw = json.loads(Path(cfg.script_path).read_text("utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read script: {exc}", cfg.script_path) from None
        return ScriptedBackend({None if key == "*" else key: [tuple(s) for s in steps] for key, steps in raw.items()})
    return ExtractiveBackend()


def _require(cfg: RunConfig, name: str) -> str:
    value = getattr(cfg, name)
    if not value:
        raise ConfigError(f"{name} is required (set {flag_name(name)} or the config file)")
    return value


def _load_docs(cfg: RunConfig):
    path = _require(cfg, "corpus_path")
    try:
        return load_corpus(path)
    except OSError as exc:
        raise DataError(f"cannot read corpus: {exc.strerror}", path) from None


def _load_index(cfg: RunConfig) -> FlatIndex:
    path = Path(_require(cfg, "index_path"))
    if not (path / "manifest.json").is_file():
        raise DataError("index not found; run build-index first", path)
    embedder = make_embedder(cfg) if cfg.embedder == "remote" else None
    index = FlatIndex.load(path, embedder)
    if index.embedder is None:
        raise ConfigError("index was built with a remote embedder; set --embedder remote")
    return index


def _pipeline(cfg: RunConfig) -> AnchorRAG:
    predictor = make_predictor(cfg)
    docs = _load_docs(cfg) if cfg.predictor == "ngram" and cfg.corpus_path else None
    index = _load_index(cfg) if cfg.mode != "no-retrieval" or cfg.index_path else None
    est = AnchorRAG(
        mode=cfg.mode, k=cfg.k, top_n=cfg.top_n, alpha=cfg.alpha, m_max=cfg.m_max, tau=cfg.tau,
        context_window=cfg.context_window, temperature=cfg.temperature, window=cfg.window,
        overlap=cfg.overlap, dimension=cfg.dimension, seed=cfg.seed, ngram_lambdas=cfg.ngram_lambdas,
        template_id=cfg.template_id, prompt_budget=cfg.prompt_budget, max_tokens=cfg.max_tokens,
        predictor=predictor, embedder=index.embedder if index is not None else None,
        generator=make_generator(cfg), n_jobs=cfg.workers,
    )
    if cfg.mode == "anchor-rag" and docs is None and predictor is None:
        raise ConfigError("anchor-rag mode with the ngram predictor needs corpus_path")
    return est.fit(docs, index=index)


def _emit(text: str, json_out: str | None) -> None:
    if json_out:
        Path(json_out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _question(args) -> str:
    if not tokenize(args.question):
        raise ConfigError("question is empty")
    return args.question


def cmd_build_index(cfg: RunConfig, args) -> int:
    docs = _load_docs(cfg)
    out = _require(cfg, "index_path")
    index = build_index(docs, make_embedder(cfg), cfg.window, cfg.overlap)
    index.save(out)
    print(f"documents: {len(docs)}")
    print(f"chunks:    {len(index)}")
    return EXIT_OK


def cmd_anchors(cfg: RunConfig, args) -> int:
    question = _question(args)
    predictor = make_predictor(cfg)
    selector = AnchorSelector(cfg.k, cfg.alpha, cfg.m_max, cfg.tau, cfg.context_window, cfg.ngram_lambdas,
                              predictor, cfg.workers)
    selector.fit(_load_docs(cfg) if predictor is None else None)
    _, candidates, anchors = selector.score_question(question)
    chosen = {a.position for a in anchors}
    lines = [
        json.dumps({"position": c.position, "token": c.token.normalized, "entropy": c.entropy_nats,
                    "selected": c.position in chosen})
        for c in candidates
    ]
    _emit("".join(line + "\n" for line in lines), args.json_out)
    return EXIT_OK


def cmd_ask(cfg: RunConfig, args) -> int:
    question = _question(args)
    answer = _pipeline(cfg).answer(question)
    _emit(json.dumps(answer.to_dict(), indent=2, ensure_ascii=False) + "\n", args.json_out)
    return EXIT_OK


def cmd_eval(cfg: RunConfig, args) -> int:
    path = _require(cfg, "dataset_path")
    try:
        dataset = load_dataset(path)
    except OSError as exc:
        raise DataError(f"cannot read dataset: {exc.strerror}", path) from None
    if not dataset:
        raise DataError("dataset is empty", path)
    report = run_eval(_pipeline(cfg), dataset, cfg.mode, n_jobs=cfg.workers)
    if args.json_out:
        Path(args.json_out).write_text(report.to_json(), encoding="utf-8")
        print(report.table())
    else:
        sys.stdout.write(report.to_json())
        print(report.table(), file=sys.stderr)
    return EXIT_OK


def cmd_gen_fixtures(args) -> int:
    corpus, dataset = write_fixtures(args.out_dir, args.seed, args.n_docs, args.n_questions)
    print(f"corpus:  {corpus}")
    print(f"dataset: {dataset}")
    return EXIT_OK


COMMANDS = {"build-index": cmd_build_index, "anchors": cmd_anchors, "ask": cmd_ask, "eval": cmd_eval}


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, (BackendError, EmptyGenerationError)):
        return EXIT_BACKEND
    if isinstance(exc, IndexBuildError) and isinstance(exc.__cause__, BackendError):
        return EXIT_BACKEND
    if isinstance(exc, (ConfigError, InvalidParameterError)):
        return EXIT_CONFIG
    return EXIT_DATA


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "gen-fixtures":
            return cmd_gen_fixtures(args)
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg, args)
    except (AnchorRAGError, OSError) as exc:
        code = _exit_code(exc)
        print(f"anchor-rag: error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
