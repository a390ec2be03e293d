"""Command line interface for modular-debias."""

import argparse
import dataclasses
import json
import logging
import sys
import time
from collections.abc import Callable, Iterable, Sequence
from pathlib import Path
from typing import Any

from .artifacts import fingerprint, write_text_atomic
from .bench_gen import (
    SynthCorpusSpec,
    expand_bias_suite,
    load_similarity_dataset,
    load_template_spec,
    read_suite,
    subsample,
    synth_bias_corpus,
    synth_triple_suite,
    write_suite,
)
from .bias_metrics import (
    ModelScorer,
    ScoreLog,
    ScoreSource,
    bias_sts_eval,
    crows_eval,
    crows_pairs_from_records,
    jigsaw_evaluate,
    read_comments,
    read_jsonl,
    stereo_triples_from_records,
    stereoset_eval,
    sts_eval,
)
from .cda_pipeline import (
    DEFAULT_PROPERTY_MAP,
    CounterfactualPair,
    Diagnostics,
    SwapTable,
    TermCatalog,
    apply_cda,
    build_cda_corpus,
    default_seed_pairs,
    extract_terms,
    filter_pairs,
    iter_dump,
    load_default_pairs,
    propose_pairs,
    read_frequency_table,
    read_pair_list,
    write_pair_list,
)
from .checkpoint import LoadedCheckpoint, load_adapters, load_checkpoint, save_checkpoint
from .config import CliConfig, load_config
from .corpus import BiasDimension, Corpus, Vocabulary, read_corpus
from .datasets import (
    HEAD_FOR_TASK,
    ClassificationData,
    LabeledText,
    MlmData,
    TaskData,
    TaskType,
    read_classification_dataset,
)
from .exceptions import (
    CheckpointError,
    ConfigError,
    InputFileError,
    ModularDebiasError,
)
from .experiments import IDENTITY_PAIRS, LINKERS, POLE_A, POLE_B
from .proposer import proposer_from_env
from .report import REPORT_NAME, merge_into_report, read_report, report_emit
from .tinylm import AdapterConfig, HeadKind, TinyLM, WiringMode, build_model
from .training import (
    ADAPTER_DROP_GRID,
    ADAPTER_DROP_PICK,
    TRAINING_PRESETS,
    RunManifest,
    predict,
    train,
)

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = "model.ckpt"
MANIFEST_NAME = "manifest.json"
MANIFEST_SUFFIX = ".manifest.json"
TASK_ADAPTER = "task"
ALL_CDA_ADAPTER = "all_cda"
EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_INTERRUPTED = 130

Handler = Callable[[argparse.Namespace, CliConfig], None]


def setup_logging(*, verbose: bool = False) -> None:
    """Set up logging configuration.

    Args:
        verbose: Whether to enable verbose logging

    """
    level = logging.DEBUG if verbose else logging.INFO
    format_str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    logging.basicConfig(level=level, format=format_str)


# helpers


def _fingerprints(**inputs: Path | None) -> dict[str, str]:
    return {name: fingerprint(path.read_bytes()) for name, path in inputs.items() if path}


def _write_manifest(
    path: Path,
    config: CliConfig,
    command: str,
    fingerprints: dict[str, str],
    started: float,
    extra: dict[str, Any] | None = None,
) -> None:
    manifest = RunManifest(
        config=config.to_dict(),
        wiring={},
        fingerprints=fingerprints,
        seed=config.training.seed,
        wall_clock_seconds=round(time.monotonic() - started, 3),
        final_losses={},
        extra={"command": command, **(extra or {})},
    )
    manifest.write(path)


def _sidecar(path: Path) -> Path:
    return path.with_name(path.name + MANIFEST_SUFFIX)


def _out_dir(args: argparse.Namespace, config: CliConfig) -> Path:
    return args.out if args.out is not None else Path(config.paths.out)


def _templates_path(override: Path | None, config: CliConfig) -> Path | None:
    if override is not None:
        return override
    return Path(config.paths.templates) if config.paths.templates else None


def _comma_list(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def _write_lines(path: Path, lines: Iterable[str]) -> None:
    write_text_atomic(path, "".join(f"{line}\n" for line in lines))


def _dimension(value: str | None, config: CliConfig) -> BiasDimension:
    return BiasDimension.parse(value or config.pipeline.dimension)


def _dimensions(values: Sequence[str] | None) -> list[BiasDimension]:
    return [BiasDimension.parse(v) for v in values] if values else list(BiasDimension)


def _default_pairs(
    dimension: BiasDimension, config: CliConfig, diagnostics: Diagnostics
) -> list[CounterfactualPair]:
    if config.paths.pairs_dir:
        path = Path(config.paths.pairs_dir) / f"{dimension}.tsv"
        return read_pair_list(path, dimension, on_invalid="skip", diagnostics=diagnostics)
    return load_default_pairs(dimension, diagnostics)


def _pair_lists(
    paths: Sequence[Path] | None,
    dimensions: Sequence[BiasDimension],
    config: CliConfig,
    diagnostics: Diagnostics,
) -> list[list[CounterfactualPair]]:
    if paths:
        return [read_pair_list(p, on_invalid="skip", diagnostics=diagnostics) for p in paths]
    return [_default_pairs(d, config, diagnostics) for d in dimensions]


def _swap_tables(
    pair_lists: Iterable[Sequence[CounterfactualPair]],
    config: CliConfig,
    diagnostics: Diagnostics,
) -> list[SwapTable]:
    on_conflict = "raise" if config.pipeline.on_conflict == "raise" else "skip"
    return [
        SwapTable.build(p, on_conflict=on_conflict, diagnostics=diagnostics) for p in pair_lists
    ]


def _load_model(path: Path) -> LoadedCheckpoint:
    loaded = load_checkpoint(path)
    if loaded.vocab is None:
        msg = f"Checkpoint {path} has no vocabulary"
        raise CheckpointError(msg)
    return loaded


def _data_corpus(data: TaskData) -> Corpus:
    if isinstance(data, MlmData):
        return data.corpus
    if isinstance(data, ClassificationData):
        return Corpus.from_texts(e.text for e in data.examples)
    return Corpus.from_texts(s for e in data.examples for s in (e.sentence_a, e.sentence_b))


def _base_model(base: Path | None, data: TaskData, config: CliConfig) -> tuple[TinyLM, Vocabulary]:
    if base is not None:
        loaded = _load_model(base)
        return loaded.model, loaded.vocab  # type: ignore[return-value]
    vocab = Vocabulary.from_corpus(_data_corpus(data), max_size=config.model.max_vocab)
    return build_model(config.encoder_config(len(vocab)), head=HeadKind.MLM), vocab


def _read_task_data(task: str, path: Path) -> TaskData:
    task_type = TaskType(task)
    if task_type == TaskType.MLM:
        return MlmData(read_corpus(path))
    if task_type == TaskType.REGRESSION:
        return load_similarity_dataset(path)
    return read_classification_dataset(path)


def _ensure_head(model: TinyLM, data: TaskData) -> None:
    kind = HEAD_FOR_TASK[data.task_type]
    if model.head_kind != kind:
        model.set_head(kind)


def _run_training(  # noqa: PLR0913
    args: argparse.Namespace,
    config: CliConfig,
    model: TinyLM,
    mode: WiringMode,
    data: TaskData,
    vocab: Vocabulary,
    inputs: dict[str, str],
) -> None:
    out = _out_dir(args, config)
    out.mkdir(parents=True, exist_ok=True)
    cfg = config.train_config()
    model, manifest = train(
        model,
        mode,
        data,
        cfg,
        vocab,
        log_every=config.training.log_every,
        extra={"command": args.command_name, "cli_config": config.to_dict()},
    )
    checkpoint = out / CHECKPOINT_NAME
    save_checkpoint(checkpoint, model, vocab, extra={"seed": cfg.seed})
    manifest.fingerprints.update(inputs)
    manifest.checkpoint_path = str(checkpoint)
    manifest.write(out / MANIFEST_NAME)
    logger.info("Wrote checkpoint %s", checkpoint)


def _score_source(args: argparse.Namespace) -> tuple[ScoreSource, str | None]:
    if args.scores is not None:
        return ScoreLog.read(args.scores), None
    loaded = _load_model(args.model)
    manifest = args.model.parent / MANIFEST_NAME
    reference = str(manifest) if manifest.is_file() else None
    return ModelScorer(loaded.model, loaded.vocab), reference  # type: ignore[arg-type]


def _finish_eval(
    args: argparse.Namespace,
    config: CliConfig,
    started: float,
    reference: str | None,
    **updates: Any,  # noqa: ANN401
) -> None:
    out = _out_dir(args, config)
    out.mkdir(parents=True, exist_ok=True)
    if reference is not None:
        updates["manifest"] = reference
    merge_into_report(out, **updates)
    names = ("data", "scores", "model", "comments", "sts")
    inputs = {k: getattr(args, k) for k in names if getattr(args, k, None)}
    _write_manifest(
        out / f"{args.command_name.replace(' ', '-')}{MANIFEST_SUFFIX}",
        config,
        args.command_name,
        _fingerprints(**inputs),
        started,
    )


# pairs


def cmd_pairs_extract(args: argparse.Namespace, config: CliConfig) -> None:
    """Harvest identity terms from a knowledge-base dump."""
    started = time.monotonic()
    allowlist = args.properties or config.pipeline.property_allowlist or tuple(DEFAULT_PROPERTY_MAP)
    diagnostics = Diagnostics()
    catalog = extract_terms(iter_dump(args.dump), allowlist, diagnostics=diagnostics)
    _write_lines(args.out, catalog.to_lines())
    _write_manifest(
        _sidecar(args.out),
        config,
        args.command_name,
        _fingerprints(dump=args.dump),
        started,
        {"diagnostics": diagnostics.to_dict(), "terms": len(catalog)},
    )


def _read_lexicon(path: Path | None) -> dict[str, str]:
    if path is None:
        return {}
    if not path.is_file():
        raise InputFileError(path)
    lexicon = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        term, sep, counterpart = line.partition("\t")
        if sep and not line.startswith("#"):
            lexicon[term.strip()] = counterpart.strip()
    return lexicon


def cmd_pairs_propose(args: argparse.Namespace, config: CliConfig) -> None:
    """Ask the pair proposer for counterparts of catalog terms."""
    started = time.monotonic()
    dimension = _dimension(args.dimension, config)
    if not args.catalog.is_file():
        raise InputFileError(args.catalog)
    catalog = TermCatalog.from_lines(args.catalog.read_text(encoding="utf-8").splitlines())
    seeds = read_pair_list(args.seeds, dimension) if args.seeds else default_seed_pairs(dimension)
    diagnostics = Diagnostics()
    pairs = propose_pairs(
        catalog,
        seeds,
        proposer_from_env(_read_lexicon(args.lexicon)),
        dimension,
        retries=config.pipeline.proposer_retries,
        retry_delay=config.pipeline.proposer_retry_delay,
        diagnostics=diagnostics,
    )
    write_pair_list(args.out, pairs)
    _write_manifest(
        _sidecar(args.out),
        config,
        args.command_name,
        _fingerprints(catalog=args.catalog, seeds=args.seeds, lexicon=args.lexicon),
        started,
        {"diagnostics": diagnostics.to_dict(), "pairs": len(pairs)},
    )


def cmd_pairs_filter(args: argparse.Namespace, config: CliConfig) -> None:
    """Drop pairs whose terms are too rare."""
    started = time.monotonic()
    diagnostics = Diagnostics()
    if args.pairs:
        pairs = read_pair_list(args.pairs, on_invalid="skip", diagnostics=diagnostics)
    else:
        pairs = _default_pairs(_dimension(args.dimension, config), config, diagnostics)
    kept = filter_pairs(pairs, read_frequency_table(args.freq), config.pipeline.thresholds())
    write_pair_list(args.out, kept)
    _write_manifest(
        _sidecar(args.out),
        config,
        args.command_name,
        _fingerprints(pairs=args.pairs, freq=args.freq),
        started,
        {"diagnostics": diagnostics.to_dict(), "kept": len(kept), "total": len(pairs)},
    )


# cda


def cmd_cda_build(args: argparse.Namespace, config: CliConfig) -> None:
    """Write the 2-way counterfactually augmented corpus."""
    started = time.monotonic()
    corpus = read_corpus(args.corpus)
    diagnostics = Diagnostics()
    lists = _pair_lists(args.pairs, _dimensions(args.dimensions), config, diagnostics)
    tables = _swap_tables(lists, config, diagnostics)
    if len(tables) == 1:
        augmented = apply_cda(corpus, tables[0])
    else:
        augmented = build_cda_corpus(corpus, tables)
    _write_lines(args.out, augmented.to_lines())
    inputs = {"corpus": args.corpus, **{f"pairs{i}": p for i, p in enumerate(args.pairs or [])}}
    _write_manifest(
        _sidecar(args.out),
        config,
        args.command_name,
        _fingerprints(**inputs),
        started,
        {"diagnostics": diagnostics.to_dict(), "sentences": len(augmented)},
    )


# train


def cmd_train_dba(args: argparse.Namespace, config: CliConfig) -> None:
    """Mode (a): train one debiasing adapter with MLM on a CDA corpus."""
    corpus = read_corpus(args.corpus)
    diagnostics = Diagnostics()
    dimension = BiasDimension.parse(args.dimension) if args.dimension else None
    if args.pairs:
        pairs = read_pair_list(args.pairs, dimension, on_invalid="skip", diagnostics=diagnostics)
        dimension = dimension or (pairs[0].dimension if pairs else None)
        corpus = apply_cda(corpus, _swap_tables([pairs], config, diagnostics)[0])
    elif dimension is not None:
        pairs = _default_pairs(dimension, config, diagnostics)
        corpus = apply_cda(corpus, _swap_tables([pairs], config, diagnostics)[0])
    data = MlmData(corpus)
    name = args.name or (str(dimension) if dimension else "dba")
    model, vocab = _base_model(args.base, data, config)
    model.add_adapter(AdapterConfig(name, config.model.reduction_factor))
    _ensure_head(model, data)
    inputs = _fingerprints(corpus=args.corpus, pairs=args.pairs, base=args.base)
    _run_training(args, config, model, WiringMode.dba_pretrain(name), data, vocab, inputs)


def cmd_train_all_cda(args: argparse.Namespace, config: CliConfig) -> None:
    """ALL-CDA baseline: one adapter on the concatenated CDA corpora of every dimension."""
    corpus = read_corpus(args.corpus)
    diagnostics = Diagnostics()
    lists = _pair_lists(args.pairs, _dimensions(args.dimensions), config, diagnostics)
    data = MlmData(build_cda_corpus(corpus, _swap_tables(lists, config, diagnostics)))
    model, vocab = _base_model(args.base, data, config)
    model.add_adapter(AdapterConfig(ALL_CDA_ADAPTER, config.model.reduction_factor))
    _ensure_head(model, data)
    inputs = _fingerprints(corpus=args.corpus, base=args.base)
    mode = WiringMode.dba_pretrain(ALL_CDA_ADAPTER)
    _run_training(args, config, model, mode, data, vocab, inputs)


def cmd_train_full(args: argparse.Namespace, config: CliConfig) -> None:
    """Mode (b): finetune every parameter on a task."""
    data = _read_task_data(args.task, args.data)
    model, vocab = _base_model(args.base, data, config)
    _ensure_head(model, data)
    inputs = _fingerprints(data=args.data, base=args.base)
    _run_training(args, config, model, WiringMode.full_finetune(), data, vocab, inputs)


def _task_model(
    args: argparse.Namespace, config: CliConfig, data: TaskData
) -> tuple[TinyLM, Vocabulary]:
    loaded = _load_model(args.base)
    model = loaded.model
    model.add_adapter(AdapterConfig(TASK_ADAPTER, config.model.reduction_factor))
    _ensure_head(model, data)
    return model, loaded.vocab  # type: ignore[return-value]


def cmd_train_task(args: argparse.Namespace, config: CliConfig) -> None:
    """Mode (c): a task adapter and head over frozen debiasing adapters."""
    data = _read_task_data(args.task, args.data)
    model, vocab = _task_model(args, config, data)
    names = args.adapters or [n for n in model.adapters if n != TASK_ADAPTER]
    mode = WiringMode.with_task_adapter(TASK_ADAPTER, names)
    inputs = _fingerprints(data=args.data, base=args.base)
    _run_training(args, config, model, mode, data, vocab, inputs)


def cmd_train_fusion(args: argparse.Namespace, config: CliConfig) -> None:
    """Mode (d): fuse debiasing adapters and stack a task adapter."""
    data = _read_task_data(args.task, args.data)
    loaded = _load_model(args.base)
    model = loaded.model
    for path in args.adapters or []:
        load_adapters(model, path, vocab=loaded.vocab)
    names = [n for n in model.adapters if n != TASK_ADAPTER]
    model.add_fusion(names)
    model.add_adapter(AdapterConfig(TASK_ADAPTER, config.model.reduction_factor))
    _ensure_head(model, data)
    inputs = _fingerprints(data=args.data, base=args.base)
    for index, path in enumerate(args.adapters or []):
        inputs[f"adapters{index}"] = fingerprint(path.read_bytes())
    mode = WiringMode.fusion(names, TASK_ADAPTER)
    _run_training(args, config, model, mode, data, loaded.vocab, inputs)  # type: ignore[arg-type]


# eval


def cmd_eval_stereoset(args: argparse.Namespace, config: CliConfig) -> None:
    """StereoSet SS and LM score."""
    started = time.monotonic()
    source, reference = _score_source(args)
    result = stereoset_eval(source, stereo_triples_from_records(read_jsonl(args.data)))
    _finish_eval(args, config, started, reference, stereoset=result.to_dict())


def cmd_eval_crows(args: argparse.Namespace, config: CliConfig) -> None:
    """CrowS-Pairs stereotype score."""
    started = time.monotonic()
    source, reference = _score_source(args)
    pairs = crows_pairs_from_records(read_jsonl(args.data))
    reduce = "raw" if config.evaluation.crows_reduce == "raw" else "log"
    result = crows_eval(source, pairs, reduce=reduce)
    _finish_eval(args, config, started, reference, crows=result.to_dict())


def cmd_eval_bias_sts(args: argparse.Namespace, config: CliConfig) -> None:
    """Per-dimension multi-way Δ, plus ρ and Ψ when an STS test set is given."""
    started = time.monotonic()
    source, reference = _score_source(args)
    if args.suite:
        tuples = [t for path in args.suite for t in read_suite(path)]
    else:
        spec = load_template_spec(_templates_path(None, config))
        tuples = []
        for dimension in args.dimensions or [str(d) for d in spec.identities]:
            expanded = expand_bias_suite(spec, dimension)
            if args.sample is not None:
                size = min(args.sample, len(expanded))
                expanded = subsample(expanded, size, config.training.seed)
            tuples.extend(expanded)
    delta = {}
    for dimension in sorted({t.dimension for t in tuples}):
        chosen = [t for t in tuples if t.dimension == dimension]
        delta[dimension] = bias_sts_eval(source, chosen, config.evaluation.similarity_scale).delta
    updates: dict[str, Any] = {"delta": delta, "alpha": config.evaluation.alpha}
    if args.sts is not None:
        sts = load_similarity_dataset(args.sts)
        pairs = [(e.sentence_a, e.sentence_b) for e in sts.examples]
        updates["rho"] = sts_eval(source, pairs, sts.targets())
    _finish_eval(args, config, started, reference, **updates)


def cmd_eval_jigsaw(args: argparse.Namespace, config: CliConfig) -> None:
    """Jigsaw subgroup AUCs and Overall score."""
    started = time.monotonic()
    comments = read_comments(args.comments)
    reference = None
    if args.model is not None:
        loaded = _load_model(args.model)
        data = ClassificationData([LabeledText(c.text, int(c.toxic)) for c in comments])
        batch_size = config.evaluation.batch_size
        scores = predict(loaded.model, data, loaded.vocab, batch_size)  # type: ignore[arg-type]
        comments = [
            dataclasses.replace(c, score=float(s)) for c, s in zip(comments, scores, strict=True)
        ]
        manifest = args.model.parent / MANIFEST_NAME
        reference = str(manifest) if manifest.is_file() else None
    result = jigsaw_evaluate(comments, p=config.evaluation.power)
    _finish_eval(args, config, started, reference, jigsaw=result.to_dict())


# report and bench


def cmd_report(args: argparse.Namespace, config: CliConfig) -> None:
    """Merge run reports into one table or records document."""
    started = time.monotonic()
    paths = [p / REPORT_NAME if p.is_dir() else p for p in args.inputs]
    document = report_emit([read_report(p) for p in paths], args.format)
    if args.out is None:
        sys.stdout.write(document)
        return
    write_text_atomic(args.out, document)
    inputs = {f"report{i}": p for i, p in enumerate(paths)}
    _write_manifest(_sidecar(args.out), config, args.command_name, _fingerprints(**inputs), started)


def cmd_bench_expand(args: argparse.Namespace, config: CliConfig) -> None:
    """Write a Bias-STS suite expanded from templates."""
    started = time.monotonic()
    spec = load_template_spec(_templates_path(args.templates, config))
    tuples = expand_bias_suite(spec, _dimension(args.dimension, config))
    if args.sample is not None:
        tuples = subsample(tuples, args.sample, config.training.seed)
    write_suite(args.out, tuples)
    _write_manifest(
        _sidecar(args.out),
        config,
        args.command_name,
        _fingerprints(templates=args.templates),
        started,
        {"tuples": len(tuples)},
    )


def cmd_bench_synth(args: argparse.Namespace, config: CliConfig) -> None:
    """Write a skewed synthetic corpus and, optionally, its matched triple suite."""
    started = time.monotonic()
    dimension = _dimension(args.dimension, config)
    if dimension not in IDENTITY_PAIRS:
        msg = f"No synthetic identities for {dimension}; choose one of {', '.join(IDENTITY_PAIRS)}"
        raise ConfigError(msg)
    spec = SynthCorpusSpec(
        identity_pairs=IDENTITY_PAIRS[dimension],
        pole_a=POLE_A,
        pole_b=POLE_B,
        skew=args.skew,
        count=args.count,
        seed=config.training.seed,
        linkers=LINKERS,
    )
    _write_lines(args.out, synth_bias_corpus(spec).texts)
    if args.triples is not None:
        triples = synth_triple_suite(spec, str(dimension))
        records = (json.dumps(dataclasses.asdict(t), sort_keys=True) for t in triples)
        _write_lines(args.triples, records)
    _write_manifest(_sidecar(args.out), config, args.command_name, {}, started, {"skew": args.skew})


# argument parsing


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="Enable verbose logging")
    common.add_argument("--config", type=Path, help="TOML configuration file")
    common.add_argument(
        "--set",
        dest="assignments",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="Override one configuration value (repeatable)",
    )
    common.add_argument("--seed", type=int, help="Seed (overrides MAFIA_SEED and the config file)")
    return common


def _training_parser() -> argparse.ArgumentParser:
    training = argparse.ArgumentParser(add_help=False)
    training.add_argument("--out", type=Path, help="Output directory (default: paths.out)")
    training.add_argument("--lr", type=float, help="Peak learning rate")
    training.add_argument("--epochs", type=int, help="Number of epochs")
    training.add_argument("--batch-size", type=int, help="Batch size")
    training.add_argument("--max-steps", type=int, help="Stop after this many optimizer steps")
    training.add_argument(
        "--adapter-drop",
        type=float,
        nargs="?",
        const=ADAPTER_DROP_PICK,
        help=(
            f"Task-adapter drop probability (bare flag: {ADAPTER_DROP_PICK}, "
            f"tuned over {ADAPTER_DROP_GRID})"
        ),
    )
    training.add_argument(
        "--preset",
        choices=sorted(TRAINING_PRESETS),
        help="Full-scale learning rate, epochs and batch size as defaults",
    )
    return training


def _eval_parser(*, scores: bool = True) -> argparse.ArgumentParser:
    evaluation = argparse.ArgumentParser(add_help=False)
    evaluation.add_argument(
        "--out", type=Path, help="Run directory holding report.json (default: paths.out)"
    )
    evaluation.add_argument("--alpha", type=float, help="Useful-fairness constant")
    if scores:
        source = evaluation.add_mutually_exclusive_group(required=True)
        source.add_argument("--model", type=Path, help="Model checkpoint to score with")
        source.add_argument("--scores", type=Path, help="Pre-computed score log (JSON lines)")
    return evaluation


def _add(
    group: Any,  # noqa: ANN401
    name: str,
    handler: Handler,
    parents: Sequence[argparse.ArgumentParser],
    command_name: str,
) -> argparse.ArgumentParser:
    parser = group.add_parser(name, parents=list(parents), help=(handler.__doc__ or "").strip())
    parser.set_defaults(handler=handler, command_name=command_name)
    return parser


def build_parser() -> argparse.ArgumentParser:  # noqa: PLR0915
    """Build the argument parser with every subcommand.

    Returns:
        The top-level parser

    """
    parser = argparse.ArgumentParser(
        prog="modular-debias",
        description="Counterfactual augmentation, debiasing adapters, fusion and bias metrics",
    )
    common = _common_parser()
    training = _training_parser()
    commands = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    pairs = commands.add_parser("pairs", help="Build counterfactual pair lists").add_subparsers(
        dest="action", required=True
    )
    p = _add(pairs, "extract", cmd_pairs_extract, [common], "pairs extract")
    p.add_argument("--dump", type=Path, required=True, help="Newline-delimited record dump")
    p.add_argument("--out", type=Path, required=True, help="Term catalog output")
    p.add_argument("--properties", type=_comma_list, help="Comma-separated property codes")
    p = _add(pairs, "propose", cmd_pairs_propose, [common], "pairs propose")
    p.add_argument("--catalog", type=Path, required=True, help="Term catalog")
    p.add_argument("--dimension", help="Bias dimension")
    p.add_argument("--seeds", type=Path, help="Seed pair list (default: built-in seeds)")
    p.add_argument("--lexicon", type=Path, help="term<TAB>counterpart lexicon for the offline stub")
    p.add_argument("--out", type=Path, required=True, help="Pair list output")
    p = _add(pairs, "filter", cmd_pairs_filter, [common], "pairs filter")
    p.add_argument("--pairs", type=Path, help="Pair list (default: shipped list for --dimension)")
    p.add_argument("--dimension", help="Bias dimension of the shipped list")
    p.add_argument("--freq", type=Path, required=True, help="term<TAB>freq_per_million table")
    p.add_argument("--out", type=Path, required=True, help="Filtered pair list output")

    cda = commands.add_parser("cda", help="Counterfactual data augmentation").add_subparsers(
        dest="action", required=True
    )
    p = _add(cda, "build", cmd_cda_build, [common], "cda build")
    p.add_argument("--corpus", type=Path, required=True, help="One sentence per line")
    p.add_argument("--pairs", type=Path, nargs="+", help="Pair lists (default: shipped lists)")
    p.add_argument("--dimensions", nargs="+", help="Shipped lists to use when --pairs is absent")
    p.add_argument("--out", type=Path, required=True, help="Augmented corpus output")

    train_parser = commands.add_parser("train", help="Train in one of the wiring modes")
    train_cmds = train_parser.add_subparsers(dest="action", required=True)
    p = _add(train_cmds, "dba", cmd_train_dba, [common, training], "train dba")
    p.add_argument(
        "--corpus", type=Path, required=True, help="Corpus (already augmented without --pairs)"
    )
    p.add_argument("--pairs", type=Path, help="Pair list to augment the corpus with")
    p.add_argument("--dimension", help="Use the shipped pair list of this dimension")
    p.add_argument("--name", help="Adapter name (default: the dimension)")
    p.add_argument("--base", type=Path, help="Base checkpoint (default: fresh toy encoder)")
    p = _add(train_cmds, "all-cda", cmd_train_all_cda, [common, training], "train all-cda")
    p.add_argument("--corpus", type=Path, required=True, help="Raw corpus")
    p.add_argument("--pairs", type=Path, nargs="+", help="Pair lists (default: shipped lists)")
    p.add_argument("--dimensions", nargs="+", help="Shipped lists to use when --pairs is absent")
    p.add_argument("--base", type=Path, help="Base checkpoint (default: fresh toy encoder)")
    for name, handler, needs_base in (
        ("full", cmd_train_full, False),
        ("task", cmd_train_task, True),
        ("fusion", cmd_train_fusion, True),
    ):
        p = _add(train_cmds, name, handler, [common, training], f"train {name}")
        tasks = [t.value for t in TaskType]
        p.add_argument("--task", choices=tasks, default=TaskType.REGRESSION.value)
        p.add_argument("--data", type=Path, required=True, help="Task dataset")
        p.add_argument("--base", type=Path, required=needs_base, help="Base checkpoint")
        if name == "task":
            p.add_argument("--adapters", nargs="+", help="Debiasing adapters (default: all)")
        if name == "fusion":
            p.add_argument("--adapters", type=Path, nargs="+", help="Checkpoints holding adapters")

    evals = commands.add_parser("eval", help="Evaluate bias metrics").add_subparsers(
        dest="action", required=True
    )
    p = _add(evals, "stereoset", cmd_eval_stereoset, [common, _eval_parser()], "eval stereoset")
    p.add_argument("--data", type=Path, required=True, help="Stereotype triples (JSON lines)")
    p = _add(evals, "crows", cmd_eval_crows, [common, _eval_parser()], "eval crows")
    p.add_argument("--data", type=Path, required=True, help="Minimal pairs (JSON lines)")
    p = _add(evals, "bias-sts", cmd_eval_bias_sts, [common, _eval_parser()], "eval bias-sts")
    p.add_argument("--suite", type=Path, nargs="+", help="Suites (default: shipped templates)")
    p.add_argument("--dimensions", nargs="+", help="Dimensions to expand when --suite is absent")
    p.add_argument("--sample", type=int, help="Tuples to sample per expanded dimension")
    p.add_argument("--sts", type=Path, help="STS test set for Pearson correlation")
    p = _add(evals, "jigsaw", cmd_eval_jigsaw, [common, _eval_parser(scores=False)], "eval jigsaw")
    p.add_argument("--comments", type=Path, required=True, help="Annotated comments (JSON lines)")
    p.add_argument("--model", type=Path, help="Classifier checkpoint to rescore comments with")

    p = _add(commands, "report", cmd_report, [common], "report")
    p.add_argument("--in", dest="inputs", type=Path, nargs="+", required=True, help="Run dirs")
    p.add_argument("--format", choices=["table", "records"], default="table", help="Output format")
    p.add_argument("--out", type=Path, help="Output file (default: stdout)")

    bench = commands.add_parser("bench", help="Generate evaluation suites").add_subparsers(
        dest="action", required=True
    )
    p = _add(bench, "expand", cmd_bench_expand, [common], "bench expand")
    p.add_argument("--dimension", help="Bias dimension")
    p.add_argument("--templates", type=Path, help="Template spec (default: shipped)")
    p.add_argument("--sample", type=int, help="Number of tuples to sample")
    p.add_argument("--out", type=Path, required=True, help="Suite output (JSON lines)")
    p = _add(bench, "synth", cmd_bench_synth, [common], "bench synth")
    p.add_argument("--dimension", help="Synthetic dimension (gender or religion)")
    p.add_argument("--skew", type=float, default=0.95, help="Co-occurrence skew in [0.5, 1]")
    p.add_argument("--count", type=int, default=1000, help="Number of sentences")
    p.add_argument("--triples", type=Path, help="Also write the matched triple suite here")
    p.add_argument("--out", type=Path, required=True, help="Corpus output")
    return parser


def _flags(args: argparse.Namespace) -> dict[str, Any]:
    return {
        "training.seed": args.seed,
        "training.learning_rate": getattr(args, "lr", None),
        "training.epochs": getattr(args, "epochs", None),
        "training.batch_size": getattr(args, "batch_size", None),
        "training.max_steps": getattr(args, "max_steps", None),
        "training.adapter_drop_prob": getattr(args, "adapter_drop", None),
        "evaluation.alpha": getattr(args, "alpha", None),
    }


def run(argv: Sequence[str] | None = None) -> int:
    """Run one command and return its exit code.

    Args:
        argv: Arguments without the program name (default: ``sys.argv[1:]``)

    Returns:
        0 on success, 1 on a computation error, 2 on a usage or configuration
        error, 130 when interrupted

    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    setup_logging(verbose=args.verbose)
    try:
        config = load_config(
            args.config,
            assignments=args.assignments,
            flags=_flags(args),
            preset=getattr(args, "preset", None),
        )
        args.handler(args, config)
    except ConfigError as e:
        logger.error("%s", e)  # noqa: TRY400
        return EXIT_USAGE
    except ModularDebiasError:
        logger.exception("Error")
        return EXIT_FAILURE
    except KeyboardInterrupt:
        logger.info("Interrupted by user")
        return EXIT_INTERRUPTED
    except Exception:
        logger.exception("Unexpected error")
        return EXIT_FAILURE
    return EXIT_OK


def main() -> None:
    """Run the main program."""
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
