"""`cdkit` command line: synth, train, eval, infer, gradcheck, patchify.

Every value resolves as flag > environment > config file > default. The
config file holds dotenv-style KEY=VALUE lines (see OPTIONS for the keys).
"""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Sequence

from dotenv import dotenv_values
from pydantic import ValidationError

from src.core.config import Config
from src.core.errors import CdkitError, ConfigError, DatasetError, NumericalError, UserError
from src.core.log import get_logger
from src.core.models import AugmentConfig, DecoderConfig, ModelConfig, RunConfig, TrainConfig
from src.data import SPLIT_PRESETS, load_dataset, patchify, synth_generate, write_dataset
from src.data.synthetic import check_synth_size
from src.metrics import REFERENCE_ROWS, reference_table
from src.model import ChangeFormer
from src.services import (
    MODEL_ROW_NOTE,
    EvaluationService,
    InferenceService,
    TrainingService,
    VerificationService,
    load_checkpoint,
)

logger = get_logger(__name__)

PROG = "cdkit"
RUN_CONFIG_FILE = "run_config.json"


def _bool(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {value!r}")


@dataclass(frozen=True)
class Option:
    key: str
    default: Any
    cast: Callable[[Any], Any] = str
    env: Optional[str] = None


# argparse dest -> config-file key, default, type and environment variable
OPTIONS: Dict[str, Option] = {
    "preset": Option("PRESET", "tiny"),
    "epochs": Option("EPOCHS", 200, int),
    "seed": Option("SEED", 0, int),
    "lr": Option("LR", 1e-4, float),
    "weight_decay": Option("WEIGHT_DECAY", 0.01, float),
    "batch_size": Option("BATCH_SIZE", 16, int),
    "dtype": Option("DTYPE", "float32", str, "CDKIT_DTYPE"),
    "augment": Option("AUGMENT", True, _bool),
    "difference_mode": Option("DIFFERENCE_MODE", "learned"),
    "count": Option("COUNT", 16, int),
    "size": Option("SIZE", 64, int),
    "data": Option("DATA", None, Path, "CDKIT_DATA_DIR"),
    "out": Option("OUT", None, Path, "CDKIT_OUTPUT_DIR"),
}


def resolve(args: argparse.Namespace) -> Dict[str, Any]:
    """Merge flags, environment, config file and defaults for every option the command defines"""
    file_values: Dict[str, Optional[str]] = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file {path} does not exist")
        file_values = dotenv_values(path)

    resolved = {}
    for dest, option in OPTIONS.items():
        if not hasattr(args, dest):
            continue
        value = getattr(args, dest)
        if value is None and option.env and os.getenv(option.env):
            value = os.getenv(option.env)
        if value is None and file_values.get(option.key) is not None:
            value = file_values[option.key]
        if value is None:
            value = option.default
        resolved[dest] = option.cast(value) if value is not None else None
    return resolved


def _default_out(command: str, values: Dict[str, Any]) -> Path:
    return values.get("out") or Config.OUTPUT_DIR / command


def _dump_run_config(run: RunConfig) -> None:
    run.output_dir.mkdir(parents=True, exist_ok=True)
    (run.output_dir / RUN_CONFIG_FILE).write_text(run.model_dump_json(indent=2) + "\n")


def _banner(title: str) -> None:
    line = Config.SEPARATOR_CHAR * Config.BANNER_WIDTH
    print(f"\n{line}\n{title}\n{line}")


class _Parser(argparse.ArgumentParser):
    """Usage errors exit 1; exit code 2 means a numerical failure"""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(UserError.exit_code, f"{self.prog}: error: {message}\n")


def _help(dest: str, text: str) -> str:
    option = OPTIONS[dest]
    default = option.default if option.default is not None else "none"
    env = f", env {option.env}" if option.env else ""
    return f"{text} (default: {default}; config key {option.key}{env})"


# ----------------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------------

def cmd_synth(args: argparse.Namespace) -> int:
    values = resolve(args)
    check_synth_size(values["size"])
    out = _default_out("synth", values)
    run = RunConfig(
        command="synth", output_dir=out,
        options={"count": values["count"], "size": values["size"], "seed": values["seed"],
                 "val_count": args.val_count, "test_count": args.test_count},
    )

    seed, size = values["seed"], values["size"]
    splits = {"train": synth_generate(values["count"], size, seed, prefix="train")}
    if args.val_count:
        splits["val"] = synth_generate(args.val_count, size, seed, prefix="val", stream=1)
    if args.test_count:
        splits["test"] = synth_generate(args.test_count, size, seed, prefix="test", stream=2)
    counts = write_dataset(out, splits)
    _dump_run_config(run)

    _banner("SYNTHETIC DATASET")
    for split, count in counts.items():
        print(f"  {split}: {count}")
    print(f"✅ wrote {sum(counts.values())} samples ({size}x{size}) to {out}")
    return 0


def _train_config(values: Dict[str, Any]) -> TrainConfig:
    return TrainConfig(
        initial_lr=values["lr"], weight_decay=values["weight_decay"], epochs=values["epochs"],
        batch_size=values["batch_size"], seed=values["seed"], dtype=values["dtype"],
    )


def cmd_train(args: argparse.Namespace) -> int:
    values = resolve(args)
    if values["data"] is None:
        raise ConfigError("train needs --data (or DATA / CDKIT_DATA_DIR)")
    train_cfg = _train_config(values)
    augment_cfg = AugmentConfig(enabled=values["augment"])
    out = _default_out("train", values)

    dataset = load_dataset(values["data"])
    train = dataset.load_split("train")
    val = dataset.load_split("val") if "val" in dataset.splits else []
    if not train:
        raise DatasetError(f"dataset {values['data']} has an empty train split")

    if args.resume:
        service, start_epoch, global_step, metrics = TrainingService.resume(args.resume, train_cfg, out, augment_cfg)
        model_cfg = service.model.config
    else:
        model_cfg = ModelConfig.from_preset(values["preset"], input_size=train[0].size)
        model_cfg = model_cfg.model_copy(update={
            "decoder": DecoderConfig(embed_dim=model_cfg.decoder.embed_dim, difference_mode=values["difference_mode"]),
        })
        model = ChangeFormer.initialize(model_cfg, train_cfg.seed, train_cfg.dtype)
        service = TrainingService(model, train_cfg, out, augment_cfg)
        start_epoch, global_step, metrics = 0, 0, {}

    run = RunConfig(command="train", preset=model_cfg.preset,
                    model=model_cfg, train=train_cfg, augment=augment_cfg,
                    data_root=values["data"], output_dir=out,
                    options={"resume": str(args.resume) if args.resume else None})
    _dump_run_config(run)

    _banner("TRAINING")
    print(f"  preset: {model_cfg.preset}  parameters: {service.model.num_parameters():,}")
    print(f"  samples: train {len(train)}, val {len(val)}  epochs: {train_cfg.epochs}  "
          f"batch size: {train_cfg.batch_size}  lr: {train_cfg.initial_lr}")

    result = service.fit(
        train, val, start_epoch=start_epoch, global_step=global_step,
        best_f1=metrics.get("best_f1", -1.0), best_epoch=int(metrics.get("best_epoch", -1)),
    )
    if not result.history.empty:
        print(result.history[["epoch", "mean_loss", "steps", "best_f1"]].tail(10).to_string(index=False))
    print(f"✅ best F1 {100 * max(result.best_f1, 0.0):.2f} (epoch {result.best_epoch}); "
          f"checkpoints in {out}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    values = resolve(args)
    if values["data"] is None:
        raise ConfigError("eval needs --data (or DATA / CDKIT_DATA_DIR)")
    out = _default_out("eval", values)
    checkpoint = load_checkpoint(args.checkpoint)
    model = checkpoint.build_model()
    _dump_run_config(RunConfig(command="eval", preset=model.config.preset, model=model.config,
                               data_root=values["data"], output_dir=out,
                               options={"checkpoint": str(args.checkpoint), "split": args.split}))

    samples = load_dataset(values["data"]).iter_samples(args.split)
    cm, metrics = EvaluationService(model, values["batch_size"]).evaluate(samples)

    text = metrics.to_text()
    out.mkdir(parents=True, exist_ok=True)
    (out / f"metrics_{args.split}.txt").write_text(text)
    (out / f"metrics_{args.split}.json").write_text(metrics.model_dump_json(indent=2) + "\n")

    _banner(f"METRICS ({args.split}, {cm.total:,} pixels)")
    print(text, end="")
    if args.compare:
        print("\nPublished reference (%):")
        print(reference_table().loc[[args.compare]].to_string())
    return 0


def cmd_infer(args: argparse.Namespace) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    mask = InferenceService(checkpoint.build_model()).infer(
        args.pre, args.post, args.out, logits_path=args.logits, preview_path=args.preview,
    )
    print(f"✅ {mask.shape[0]}x{mask.shape[1]} mask -> {args.out}")
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    values = resolve(args)
    report = VerificationService().run(seed=values["seed"], preset=values["preset"])

    _banner("GRADIENT CHECK")
    print(report.table.to_string(index=False))
    print(f"ℹ️  {MODEL_ROW_NOTE}")
    if values.get("out"):
        Path(values["out"]).mkdir(parents=True, exist_ok=True)
        report.table.to_csv(Path(values["out"]) / "gradcheck.csv", index=False)
    if not report.passed:
        raise NumericalError(f"gradient check failed for: {', '.join(report.failures())}")
    print(f"✅ all {len(report.table)} checks passed in {report.seconds:.1f}s")
    return 0


def cmd_patchify(args: argparse.Namespace) -> int:
    values = resolve(args)
    out = _default_out("patchify", values)
    if args.split_preset:
        counts = SPLIT_PRESETS[args.split_preset]
    elif args.counts:
        counts = tuple(args.counts)
    else:
        raise ConfigError("patchify needs --counts TRAIN VAL TEST or --split-preset")

    written = patchify(args.src, out, args.patch_size, counts, values["seed"])
    _dump_run_config(RunConfig(command="patchify", output_dir=out, options={
        "src": str(args.src), "patch_size": args.patch_size, "counts": list(counts), "seed": values["seed"],
    }))
    _banner("PATCHIFY")
    for split, count in written.items():
        print(f"  {split}: {count}")
    return 0


# ----------------------------------------------------------------------------
# Parser
# ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog=PROG, description="Bi-temporal change detection with ChangeFormer")
    parser.add_argument("--version", action="version", version=f"{PROG} {Config.VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name: str, handler, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", type=Path, help="KEY=VALUE config file (flags override it)")
        p.set_defaults(handler=handler)
        return p

    p = command("synth", cmd_synth, "Write a synthetic LEVIR-layout dataset")
    p.add_argument("--out", type=Path, help=_help("out", "Dataset root to create"))
    p.add_argument("--count", type=int, help=_help("count", "Training samples"))
    p.add_argument("--size", type=int, help=_help("size", "Image side, a multiple of 32"))
    p.add_argument("--seed", type=int, help=_help("seed", "Generator seed"))
    p.add_argument("--val-count", type=int, default=4, help="Validation samples (default: 4)")
    p.add_argument("--test-count", type=int, default=4, help="Test samples (default: 4)")

    p = command("train", cmd_train, "Train a model (CE loss, AdamW, linear LR decay)")
    p.add_argument("--data", type=Path, help=_help("data", "Dataset root"))
    p.add_argument("--preset", choices=["tiny", "base"], help=_help("preset", "Architecture preset"))
    p.add_argument("--epochs", type=int, help=_help("epochs", "Training epochs"))
    p.add_argument("--seed", type=int, help=_help("seed", "Initialization, shuffle and augmentation seed"))
    p.add_argument("--out", type=Path, help=_help("out", "Run directory"))
    p.add_argument("--lr", type=float, help=_help("lr", "Initial learning rate, decays linearly to 0"))
    p.add_argument("--weight-decay", type=float, help=_help("weight_decay", "AdamW decoupled weight decay"))
    p.add_argument("--batch-size", type=int, help=_help("batch_size", "Batch size"))
    p.add_argument("--dtype", choices=["float32", "float64"], help=_help("dtype", "Numeric mode"))
    p.add_argument("--no-augment", dest="augment", action="store_const", const=False,
                   help=_help("augment", "Disable augmentation"))
    p.add_argument("--difference-mode", choices=["learned", "absolute"],
                   help=_help("difference_mode", "Difference module variant"))
    p.add_argument("--resume", type=Path, help="Continue from this checkpoint")

    p = command("eval", cmd_eval, "Report P/R/F1/IoU/OA of a checkpoint on a split")
    p.add_argument("--data", type=Path, help=_help("data", "Dataset root"))
    p.add_argument("--checkpoint", type=Path, required=True, help="Checkpoint file")
    p.add_argument("--split", default="test", choices=["train", "val", "test"], help="Split (default: test)")
    p.add_argument("--out", type=Path, help=_help("out", "Directory for the metric report"))
    p.add_argument("--batch-size", type=int, help=_help("batch_size", "Evaluation batch size"))
    p.add_argument("--compare", choices=sorted(REFERENCE_ROWS), help="Print a published reference row")

    p = command("infer", cmd_infer, "Predict a change mask PNG for one image pair")
    p.add_argument("--pre", type=Path, required=True, help="Pre-change RGB PNG")
    p.add_argument("--post", type=Path, required=True, help="Post-change RGB PNG")
    p.add_argument("--checkpoint", type=Path, required=True, help="Checkpoint file")
    p.add_argument("--out", type=Path, required=True, help="Mask PNG ({0,255})")
    p.add_argument("--logits", type=Path, help="Optional .npy dump of the raw logits")
    p.add_argument("--preview", type=Path, help="Optional pre | post | mask preview PNG")

    p = command("gradcheck", cmd_gradcheck, "Finite-difference check of every op and the end-to-end model")
    p.epilog = MODEL_ROW_NOTE.capitalize()
    p.add_argument("--preset", choices=["tiny", "base"],
                   help=_help("preset", "Model preset for the end-to-end row (weights scaled, see below)"))
    p.add_argument("--seed", type=int, help=_help("seed", "Input and weight seed"))
    p.add_argument("--out", type=Path, help="Optional directory for gradcheck.csv")

    p = command("patchify", cmd_patchify, "Crop source images into patches and split them randomly")
    p.add_argument("--src", type=Path, required=True, help="Flat source tree with A/, B/, label/")
    p.add_argument("--out", type=Path, help=_help("out", "Dataset root to create"))
    p.add_argument("--patch-size", type=int, default=256, help="Patch side (default: 256)")
    p.add_argument("--counts", type=int, nargs=3, metavar=("TRAIN", "VAL", "TEST"), help="Split sizes")
    p.add_argument("--split-preset", choices=sorted(SPLIT_PRESETS), help="Published split sizes")
    p.add_argument("--seed", type=int, help=_help("seed", "Split seed"))
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command; returns the process exit code"""
    args = build_parser().parse_args(argv)
    try:
        Config.validate()
        return args.handler(args)
    except CdkitError as e:
        print(f"❌ {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    except ValidationError as e:
        print(f"❌ invalid configuration: {e.errors()[0]['msg']}", file=sys.stderr)
        return ConfigError.exit_code
    except OSError as e:
        print(f"❌ {e}", file=sys.stderr)
        return 1
