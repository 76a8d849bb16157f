"""Command-line interface.

Subcommands: bpe-train, pretrain, finetune, evaluate, predict, gradcheck,
baseline-nbsvm. Every run writes a small JSON run manifest (arguments,
resolved config, seed, input paths, output hashes, timestamps) next to its
primary artifact, or wherever --manifest points.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, toy_corpus
from .bpe import bpe_train, load_tokenizer, save_tokenizer
from .checkpoint import load_checkpoint, save_checkpoint, sha256_file
from .config import (BINARY, REGRESSION, ModelConfig, TrainConfig,
                     paper_scale, toy_scale)
from .data import load_dataset
from .errors import ConfigError, DataError, FiglangError, NumericError
from .gradsuite import run_suite
from .metrics import classification_metrics, regression_metrics, report_json
from .nbsvm import nbsvm_predict, nbsvm_train, save_nbsvm
from .rcnn import init_head_params, is_head_param, predict as model_predict
from .training import TrainLog, finetune, pretrain_mlm, rng_streams

TASK_NAMES = {"binary": BINARY, "score": REGRESSION}
TASK_LABELS = {v: k for k, v in TASK_NAMES.items()}
PRESETS = {"paper": paper_scale, "toy": toy_scale}

GRAD_TOL = 1e-4


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad usage; this project reserves 2 for data
    errors, so usage problems are rethrown as ConfigError (exit 1)."""

    def error(self, message):
        raise ConfigError(message)


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _write_run_manifest(path, *, subcommand, argv, seed, config, inputs,
                        output_files, started):
    doc = {
        "tool": f"figlang {__version__}",
        "subcommand": subcommand,
        "argv": argv,
        "seed": seed,
        "config": config,
        "inputs": {k: str(v) for k, v in inputs.items()},
        "outputs": {str(p): sha256_file(p) for p in output_files if Path(p).is_file()},
        "started": started,
        "finished": _utc_now(),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


def _read_lines(path) -> list[str]:
    try:
        with open(path, encoding="utf-8") as f:
            return [line for line in f.read().splitlines() if line.strip()]
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from None


def _resolve_configs(args) -> tuple[ModelConfig, TrainConfig, set]:
    """Precedence: command-line flags > --config file > preset defaults.
    Returns the configs plus the set of model fields set explicitly."""
    file_model: dict = {}
    file_train: dict = {}
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        try:
            with open(cfg_path, encoding="utf-8") as f:
                doc = json.load(f)
        except OSError as e:
            raise ConfigError(f"cannot read config file {cfg_path}: {e}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {cfg_path} is not valid JSON: {e}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(doc) - {"model", "train"}
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        file_model = dict(doc.get("model", {}))
        file_train = dict(doc.get("train", {}))

    model_kwargs = PRESETS[getattr(args, "preset", "paper")]().to_dict()
    explicit_model = set(file_model)
    for key in file_model:
        if key not in model_kwargs:
            raise ConfigError(f"unknown model config field: {key!r}")
    model_kwargs.update(file_model)
    if getattr(args, "max_seq_len", None) is not None:
        model_kwargs["max_seq_len"] = args.max_seq_len
        explicit_model.add("max_seq_len")
    task_flag = getattr(args, "task", None)
    if task_flag:
        model_kwargs["task_head"] = TASK_NAMES[task_flag]
        explicit_model.add("task_head")

    train_kwargs = dataclasses.asdict(TrainConfig())
    for key in file_train:
        if key not in train_kwargs:
            raise ConfigError(f"unknown train config field: {key!r}")
    train_kwargs.update(file_train)
    flag_map = {"seed": "seed", "epochs": "epochs", "batch_size": "batch_size",
                "lr": "learning_rate", "max_steps": "max_steps",
                "grad_clip": "grad_clip_norm"}
    for flag, field in flag_map.items():
        value = getattr(args, flag, None)
        if value is not None:
            train_kwargs[field] = value
    if getattr(args, "freeze_encoder", False):
        train_kwargs["freeze_encoder"] = True

    try:
        model_cfg = ModelConfig(**model_kwargs)
        train_cfg = TrainConfig(**train_kwargs)
    except TypeError as e:
        raise ConfigError(str(e)) from None
    return model_cfg, train_cfg, explicit_model


def _adopt_tokenizer_vocab(model_cfg: ModelConfig, explicit: set, tokenizer):
    """The embedding table is sized by the tokenizer unless the config pinned
    a conflicting value, which is an error worth stopping on."""
    if "vocab_size" in explicit and model_cfg.vocab_size != tokenizer.size:
        raise DataError(f"config vocab_size={model_cfg.vocab_size} does not match "
                        f"tokenizer ({tokenizer.size} ids)")
    if model_cfg.vocab_size != tokenizer.size:
        model_cfg = dataclasses.replace(model_cfg, vocab_size=tokenizer.size)
    return model_cfg


def _config_echo(model_cfg, train_cfg) -> dict:
    return {"model": model_cfg.to_dict(), "train": dataclasses.asdict(train_cfg)}


def _cmd_bpe_train(args, argv) -> int:
    started = _utc_now()
    lines = _read_lines(args.corpus)
    model = bpe_train(lines, args.vocab_size)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_tokenizer(model, out)
    manifest = args.manifest or out.with_name(out.name + ".run.json")
    _write_run_manifest(manifest, subcommand="bpe-train", argv=argv,
                        seed=None, config={"vocab_size": args.vocab_size},
                        inputs={"corpus": args.corpus},
                        output_files=[out], started=started)
    print(f"tokenizer: {model.size} ids ({len(model.merges)} merges) -> {out}")
    return 0


def _cmd_pretrain(args, argv) -> int:
    started = _utc_now()
    tokenizer = load_tokenizer(args.tokenizer)
    model_cfg, train_cfg, explicit = _resolve_configs(args)
    model_cfg = _adopt_tokenizer_vocab(model_cfg, explicit, tokenizer)
    lines = toy_corpus() if args.corpus == "toy" else _read_lines(args.corpus)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log = TrainLog(out / "train_log.jsonl")
    params, log = pretrain_mlm(lines, tokenizer, model_cfg, train_cfg, log=log)
    save_checkpoint(out, params, model_config=model_cfg, train_config=train_cfg,
                    task=TASK_LABELS[model_cfg.task_head],
                    tokenizer_path=args.tokenizer)
    manifest = args.manifest or out / "run.json"
    _write_run_manifest(manifest, subcommand="pretrain", argv=argv,
                        seed=train_cfg.seed, config=_config_echo(model_cfg, train_cfg),
                        inputs={"corpus": args.corpus, "tokenizer": args.tokenizer},
                        output_files=[out / "manifest.json", out / "weights.bin",
                                      out / "tokenizer.json", out / "train_log.jsonl"],
                        started=started)
    first, last = log.records[0]["loss"], log.records[-1]["loss"]
    print(f"pretrained {len(log.records)} steps; loss {first:.4f} -> {last:.4f}; "
          f"checkpoint at {out}")
    return 0


def _cmd_finetune(args, argv) -> int:
    started = _utc_now()
    model_cfg, train_cfg, explicit = _resolve_configs(args)
    task = TASK_NAMES[args.task]

    init_params = None
    tokenizer_path = args.tokenizer
    if args.init:
        bundle = load_checkpoint(args.init)
        init_params = bundle.params
        model_cfg = dataclasses.replace(bundle.model_config, task_head=task)
        if tokenizer_path is None:
            tokenizer_path = bundle.tokenizer_path
        if bundle.task != args.task:
            # head shape may differ across tasks; encoder weights carry over
            streams = rng_streams(train_cfg.seed)
            for name in [n for n in init_params if is_head_param(n)]:
                del init_params[name]
            init_params.update(init_head_params(model_cfg, streams["init"]))
    if tokenizer_path is None:
        raise ConfigError("--tokenizer is required unless --init provides one")
    tokenizer = load_tokenizer(tokenizer_path)
    model_cfg = _adopt_tokenizer_vocab(model_cfg, explicit, tokenizer)

    dataset = load_dataset(args.train, task)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log = TrainLog(out / "train_log.jsonl")
    params, log = finetune(dataset.examples, tokenizer, model_cfg, train_cfg,
                           params=init_params, log=log)
    save_checkpoint(out, params, model_config=model_cfg, train_config=train_cfg,
                    task=args.task, tokenizer_path=tokenizer_path)
    manifest = args.manifest or out / "run.json"
    _write_run_manifest(manifest, subcommand="finetune", argv=argv,
                        seed=train_cfg.seed, config=_config_echo(model_cfg, train_cfg),
                        inputs={"train": args.train, "tokenizer": str(tokenizer_path),
                                "init": args.init or ""},
                        output_files=[out / "manifest.json", out / "weights.bin",
                                      out / "tokenizer.json", out / "train_log.jsonl"],
                        started=started)
    print(f"finetuned {len(log.records)} steps on {len(dataset)} examples; "
          f"final loss {log.records[-1]['loss']:.4f}; checkpoint at {out}")
    return 0


def _evaluate_checkpoint(bundle, dataset):
    tokenizer = load_tokenizer(bundle.tokenizer_path)
    texts = [ex.text for ex in dataset]
    records = model_predict(bundle.params, bundle.model_config, tokenizer, texts)
    if bundle.model_config.task_head == BINARY:
        preds = [r["label"] for r in records]
        scores = [r["probs"][1] for r in records]
        golds = [int(ex.target) for ex in dataset]
        return classification_metrics(preds, golds, scores=scores)
    preds = [r["score"] for r in records]
    golds = [float(ex.target) for ex in dataset]
    return regression_metrics(preds, golds)


def _cmd_evaluate(args, argv) -> int:
    started = _utc_now()
    bundle = load_checkpoint(args.checkpoint)
    schema = TASK_NAMES[bundle.task]
    dataset = load_dataset(args.test, schema)
    report = _evaluate_checkpoint(bundle, dataset)
    text = report_json(report)
    out = Path(args.report)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text, encoding="utf-8")
    manifest = args.manifest or out.with_name(out.name + ".run.json")
    _write_run_manifest(manifest, subcommand="evaluate", argv=argv,
                        seed=None, config={"checkpoint": str(args.checkpoint)},
                        inputs={"test": args.test, "checkpoint": str(args.checkpoint)},
                        output_files=[out], started=started)
    sys.stdout.write(text)
    return 0


def _cmd_predict(args, argv) -> int:
    bundle = load_checkpoint(args.checkpoint)
    tokenizer = load_tokenizer(bundle.tokenizer_path)
    if args.input:
        texts = _read_lines(args.input)
    else:
        texts = [line for line in sys.stdin.read().splitlines() if line.strip()]
    records = model_predict(bundle.params, bundle.model_config, tokenizer, texts)
    for rec in records:
        sys.stdout.write(json.dumps(rec) + "\n")
    return 0


def _cmd_gradcheck(args, argv) -> int:
    n_seeds = 20 if args.full else args.seeds
    worst = run_suite(n_seeds=n_seeds)
    print(f"max relative error: {worst:.3e} over {n_seeds} seeds "
          f"(tolerance {GRAD_TOL:.0e})")
    if not (worst < GRAD_TOL):
        raise NumericError(f"gradient check failed: {worst:.3e} >= {GRAD_TOL:.0e}")
    return 0


def _cmd_baseline_nbsvm(args, argv) -> int:
    started = _utc_now()
    train_set = load_dataset(args.train, BINARY)
    test_set = load_dataset(args.test, BINARY)
    model = nbsvm_train(train_set.examples, alpha=args.alpha, lr=args.lr,
                        epochs=args.epochs, batch_size=args.batch_size,
                        seed=args.seed if args.seed is not None else 42)
    labels, scores = nbsvm_predict(model, [ex.text for ex in test_set])
    golds = [int(ex.target) for ex in test_set]
    report = classification_metrics(labels, golds, scores=scores)
    text = report_json(report)
    out = Path(args.report)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text, encoding="utf-8")
    outputs = [out]
    if args.model_out:
        save_nbsvm(args.model_out, model)
        outputs.append(Path(args.model_out))
    manifest = args.manifest or out.with_name(out.name + ".run.json")
    _write_run_manifest(manifest, subcommand="baseline-nbsvm", argv=argv,
                        seed=args.seed, config={"alpha": args.alpha, "lr": args.lr,
                                                "epochs": args.epochs,
                                                "batch_size": args.batch_size},
                        inputs={"train": args.train, "test": args.test},
                        output_files=outputs, started=started)
    sys.stdout.write(text)
    return 0


def _add_config_flags(p, *, with_task=False):
    d = TrainConfig()
    m = ModelConfig()
    p.add_argument("--config", help="JSON file with {'model': {...}, 'train': {...}}")
    p.add_argument("--preset", choices=sorted(PRESETS), default="paper",
                   help=f"base model size (default: paper = {m.n_layers} layers, "
                        f"{m.n_heads} heads, {m.lstm_units} LSTM units, "
                        f"dropout {m.dropout})")
    p.add_argument("--seed", type=int, default=None,
                   help=f"master random seed (default {d.seed})")
    p.add_argument("--epochs", type=int, default=None,
                   help=f"training epochs (default {d.epochs})")
    p.add_argument("--batch-size", type=int, default=None,
                   help=f"examples per step (default {d.batch_size})")
    p.add_argument("--lr", type=float, default=None,
                   help=f"Adam learning rate (default {d.learning_rate}; "
                        f"eps {d.adam_eps}, weight decay {d.weight_decay})")
    p.add_argument("--max-steps", type=int, default=None,
                   help="stop after this many optimizer steps")
    p.add_argument("--grad-clip", type=float, default=None,
                   help="global gradient-norm ceiling (default: off)")
    p.add_argument("--max-seq-len", type=int, default=None,
                   help=f"token window including specials (default {m.max_seq_len})")
    if with_task:
        p.add_argument("--task", choices=sorted(TASK_NAMES), required=True,
                       help="binary label or -5..5 score regression")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="figlang", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("bpe-train", help="learn a byte-level BPE tokenizer")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab-size", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--manifest")
    p.set_defaults(func=_cmd_bpe_train)

    p = sub.add_parser("pretrain", help="masked-LM pretraining")
    p.add_argument("--corpus", required=True,
                   help="text file, one sentence per line ('toy' = bundled corpus)")
    p.add_argument("--tokenizer", required=True)
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.add_argument("--manifest")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_pretrain)

    p = sub.add_parser("finetune", help="supervised training")
    p.add_argument("--train", required=True, help="TSV: id<TAB>label<TAB>text")
    p.add_argument("--init", help="checkpoint directory to start from")
    p.add_argument("--tokenizer", help="defaults to the --init checkpoint's")
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.add_argument("--freeze-encoder", action="store_true")
    p.add_argument("--manifest")
    _add_config_flags(p, with_task=True)
    p.set_defaults(func=_cmd_finetune)

    p = sub.add_parser("evaluate", help="score a checkpoint on a labeled TSV")
    p.add_argument("--test", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--report", required=True, help="metrics JSON output path")
    p.add_argument("--manifest")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("predict", help="JSONL predictions to stdout")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", help="text file, one input per line (default: stdin)")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    p.add_argument("--full", action="store_true", help="run all 20 seeds")
    p.add_argument("--seeds", type=int, default=3)
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("baseline-nbsvm", help="n-gram logistic baseline")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--model-out")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--batch-size", type=int, default=10)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--manifest")
    p.set_defaults(func=_cmd_baseline_nbsvm)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
        return args.func(args, argv)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 3
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except FiglangError as e:
        # internal contract violations surface as data problems
        print(f"error: {e}", file=sys.stderr)
        return 2
