"""Command-line front end for the full pipeline.

Subcommands: synth, zero-shot, pretrain, train, adapt, eval, ablate. Every
command writes its artifacts under --out, so runs can be diffed; repeating a
command with identical inputs and seeds produces byte-identical artifacts.

Exit codes: 0 success, 2 usage or invalid configuration, 3 I/O or file
format failure, 4 non-finite loss/gradient, 5 violated data invariant.
"""

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .data import (
    SynthConfig,
    generate_synthetic,
    load_embeddings,
    load_prototypes,
    write_embeddings,
    write_prototypes,
)
from .errors import (
    FormatError,
    InvalidConfig,
    IoError,
    NonFiniteGradient,
    NonFiniteLoss,
    OdaError,
)
from .evaluation import evaluate, evaluate_zero_shot, write_report
from .losses import LossToggles, Mode
from .model import OdaClassifier
from .trainer import HyperParams, run_ablation, train
from .zero_shot import default_delta, predict_rows
from .data import Domain, stack_vectors

log = logging.getLogger("odakit")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NONFINITE = 4
EXIT_INVARIANT = 5

EMBEDDINGS_NAME = "embeddings.bin"
PROTOTYPES_NAME = "prototypes.bin"


def _hp_parent():
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("training hyperparameters")
    g.add_argument("--seed", type=int, default=7, help="rng seed for init and sampling")
    g.add_argument("--tau", type=float, default=0.01, help="softmax temperature for zero-shot scores")
    g.add_argument("--delta", type=float, default=None,
                   help="entropy threshold; default ln(num_known)/2")
    g.add_argument("--clip-delta", type=float, default=None,
                   help="override threshold for the zero-shot partition only")
    g.add_argument("--margin", type=float, default=0.5, help="entropy-separation margin")
    g.add_argument("--lr", type=float, default=0.01, help="SGD learning rate")
    g.add_argument("--momentum", type=float, default=0.9, help="SGD momentum")
    g.add_argument("--epochs", type=int, default=30, help="training epochs")
    g.add_argument("--batch", type=int, default=4, help="mini-batch size")
    g.add_argument("--no-source", action="store_true", help="disable the source CE loss")
    g.add_argument("--no-ent", action="store_true", help="disable the entropy-separation loss")
    g.add_argument("--no-kwn", action="store_true", help="disable the known-distillation loss")
    g.add_argument("--no-unk", action="store_true", help="disable the unknown-entropy loss")
    return p


def _report_parent():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--macro", action="store_true",
                   help="macro-average known-class accuracy instead of micro")
    return p


def build_parser():
    parser = argparse.ArgumentParser(
        prog="odakit",
        description="CLIP-guided open-set domain adaptation over precomputed embeddings",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"odakit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    hp = _hp_parent()
    rep = _report_parent()
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("synth", help="generate a seeded synthetic benchmark",
                       formatter_class=fmt)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=7, help="generator seed")
    p.add_argument("--dim", type=int, default=64, help="embedding dimension")
    p.add_argument("--known", type=int, default=10, help="number of known (source) classes")
    p.add_argument("--total", type=int, default=21, help="number of target classes")
    p.add_argument("--src-per-class", type=int, default=50, help="source samples per class")
    p.add_argument("--tgt-per-class", type=int, default=50, help="target samples per class")
    p.add_argument("--spread", type=float, default=0.15, help="expected sample noise norm")
    p.add_argument("--shift", type=float, default=0.2, help="domain shift magnitude")
    p.add_argument("--separation", type=float, default=0.28,
                   help="class-center cone width before renormalization")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("zero-shot", help="per-record zero-shot predictions",
                       formatter_class=fmt)
    p.add_argument("--data", required=True, help="embedding file")
    p.add_argument("--protos", required=True, help="prototype file")
    p.add_argument("--tau", type=float, default=0.01, help="softmax temperature")
    p.add_argument("--delta", type=float, default=None,
                   help="entropy threshold; default ln(num_known)/2")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_zero_shot)

    p = sub.add_parser("pretrain", help="source-only supervised pretraining",
                       parents=[hp, rep], formatter_class=fmt)
    p.add_argument("--data", required=True, help="embedding file")
    p.add_argument("--protos", required=True, help="prototype file")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", help="joint training with all losses",
                       parents=[hp, rep], formatter_class=fmt)
    p.add_argument("--data", required=True, help="embedding file")
    p.add_argument("--protos", required=True, help="prototype file")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("adapt", help="source-free adaptation from a checkpoint",
                       parents=[hp, rep], formatter_class=fmt)
    p.add_argument("--data", required=True, help="embedding file (target domain is used)")
    p.add_argument("--protos", required=True, help="prototype file")
    p.add_argument("--checkpoint", required=True, help="pretrained model checkpoint")
    p.add_argument("--source", help=argparse.SUPPRESS)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("eval", help="evaluate a checkpoint or the zero-shot baseline",
                       parents=[rep], formatter_class=fmt)
    p.add_argument("--data", required=True, help="embedding file")
    p.add_argument("--checkpoint", help="model checkpoint to evaluate")
    p.add_argument("--protos", help="prototype file (zero-shot baseline instead)")
    p.add_argument("--tau", type=float, default=0.01, help="zero-shot softmax temperature")
    p.add_argument("--delta", type=float, default=None,
                   help="entropy threshold; default ln(num_known)/2")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train every loss-toggle variant and tabulate",
                       parents=[hp], formatter_class=fmt)
    p.add_argument("--data", required=True, help="embedding file")
    p.add_argument("--protos", required=True, help="prototype file")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_ablate)

    return parser


def _hp_from_args(args):
    return HyperParams(
        tau=args.tau,
        delta=args.delta,
        margin=args.margin,
        batch_size=args.batch,
        epochs=args.epochs,
        lr=args.lr,
        momentum=args.momentum,
        seed=args.seed,
        loss_toggles=LossToggles(
            use_source=not args.no_source,
            use_ent=not args.no_ent,
            use_kwn=not args.no_kwn,
            use_unk=not args.no_unk,
        ),
        clip_delta=args.clip_delta,
    )


def cmd_synth(args):
    config = SynthConfig(
        dim=args.dim,
        num_known=args.known,
        num_total=args.total,
        samples_per_class_source=args.src_per_class,
        samples_per_class_target=args.tgt_per_class,
        cluster_spread=args.spread,
        domain_shift=args.shift,
        seed=args.seed,
        separation=args.separation,
    )
    dataset, bank = generate_synthetic(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    emb_path = out / EMBEDDINGS_NAME
    proto_path = out / PROTOTYPES_NAME
    write_embeddings(dataset, emb_path)
    write_prototypes(bank, proto_path)
    n_src = len(dataset.indices(Domain.SOURCE))
    n_tgt = len(dataset.indices(Domain.TARGET))
    print(
        f"wrote {emb_path} ({n_src} source + {n_tgt} target records, dim {dataset.dim})"
    )
    print(f"wrote {proto_path} ({bank.num_classes} known-class prototypes)")
    return EXIT_OK


def cmd_zero_shot(args):
    dataset = load_embeddings(args.data)
    bank = load_prototypes(args.protos)
    delta = args.delta if args.delta is not None else default_delta(bank.num_classes)
    idx = dataset.indices(Domain.TARGET)
    records = [dataset.records[i] for i in idx]
    labels, _, ent = predict_rows(stack_vectors(records), bank, args.tau, delta)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pred_path = out / "predictions.csv"
    try:
        with open(pred_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "predicted_class", "entropy", "is_unknown"])
            for rec, label, h in zip(records, labels, ent):
                unknown = label == -1
                w.writerow(
                    [str(rec.id), str(int(label)), repr(float(h)),
                     "true" if unknown else "false"]
                )
    except OSError as exc:
        raise IoError(f"cannot write {pred_path}: {exc}") from exc
    rejected = int((labels == -1).sum())
    print(f"wrote {pred_path} ({len(records)} records, {rejected} rejected as unknown)")
    return EXIT_OK


def _finish_with_report(model, dataset, delta, macro, out):
    report = evaluate(model, dataset, delta, macro=macro)
    write_report(report, out)
    print(
        f"acc_kwn {report.acc_kwn:.4f}  acc_unk {report.acc_unk:.4f}  "
        f"h_score {report.h_score:.4f}  auroc {report.auroc:.4f}"
    )
    print(f"report written under {out}")
    return EXIT_OK


def cmd_pretrain(args):
    dataset = load_embeddings(args.data)
    bank = load_prototypes(args.protos)
    hp = _hp_from_args(args)
    run = train(dataset, None, bank, hp, Mode.SF_PRETRAIN, out_dir=args.out)
    print(f"checkpoint written to {run.final_checkpoint}")
    delta = hp.resolve(bank.num_classes).delta
    return _finish_with_report(run.model, dataset, delta, args.macro, Path(args.out))


def cmd_train(args):
    dataset = load_embeddings(args.data)
    bank = load_prototypes(args.protos)
    hp = _hp_from_args(args)
    run = train(dataset, dataset, bank, hp, Mode.ODA, out_dir=args.out)
    print(f"checkpoint written to {run.final_checkpoint}")
    delta = hp.resolve(bank.num_classes).delta
    return _finish_with_report(run.model, dataset, delta, args.macro, Path(args.out))


def cmd_adapt(args):
    if args.source is not None:
        print("odakit adapt: error: adapt is source-free", file=sys.stderr)
        return EXIT_USAGE
    dataset = load_embeddings(args.data)
    bank = load_prototypes(args.protos)
    init = OdaClassifier.load(args.checkpoint)
    hp = _hp_from_args(args)
    run = train(None, dataset, bank, hp, Mode.SF_ADAPT, init_model=init, out_dir=args.out)
    print(f"checkpoint written to {run.final_checkpoint}")
    delta = hp.resolve(bank.num_classes).delta
    return _finish_with_report(run.model, dataset, delta, args.macro, Path(args.out))


def cmd_eval(args):
    if (args.checkpoint is None) == (args.protos is None):
        print(
            "odakit eval: error: pass exactly one of --checkpoint or --protos",
            file=sys.stderr,
        )
        return EXIT_USAGE
    dataset = load_embeddings(args.data)
    out = Path(args.out)
    delta = (
        args.delta
        if args.delta is not None
        else default_delta(dataset.num_known_classes)
    )
    if args.checkpoint is not None:
        model = OdaClassifier.load(args.checkpoint)
        return _finish_with_report(model, dataset, delta, args.macro, out)
    bank = load_prototypes(args.protos)
    report = evaluate_zero_shot(bank, dataset, args.tau, delta, macro=args.macro)
    write_report(report, out)
    print(
        f"acc_kwn {report.acc_kwn:.4f}  acc_unk {report.acc_unk:.4f}  "
        f"h_score {report.h_score:.4f}  auroc {report.auroc:.4f}"
    )
    print(f"report written under {out}")
    return EXIT_OK


def cmd_ablate(args):
    dataset = load_embeddings(args.data)
    bank = load_prototypes(args.protos)
    hp = _hp_from_args(args)
    rows = run_ablation(dataset, dataset, bank, hp, out_dir=args.out)
    width = max(len(r.name) for r in rows)
    print(f"{'variant':<{width}}  acc_kwn  acc_unk  h_score")
    for r in rows:
        print(f"{r.name:<{width}}  {r.acc_kwn:.4f}   {r.acc_unk:.4f}   {r.h_score:.4f}")
    print(f"table written to {Path(args.out) / 'ablation.csv'}")
    return EXIT_OK


def _configure_logging():
    level_name = os.environ.get("ODA_LOG_LEVEL", "info").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    if level_name not in levels:
        raise InvalidConfig(
            f"ODA_LOG_LEVEL must be one of error, info, debug; got {level_name!r}"
        )
    logging.basicConfig(level=levels[level_name], format="%(levelname)s %(name)s: %(message)s")


def main(argv=None):
    """Parse arguments, dispatch, and map errors to exit codes."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        _configure_logging()
        return args.func(args)
    except InvalidConfig as exc:
        print(f"odakit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (IoError, FormatError) as exc:
        print(f"odakit: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NonFiniteLoss as exc:
        print(f"odakit: error: {exc}", file=sys.stderr)
        out = getattr(args, "out", None)
        if exc.model is not None and out:
            rescue = Path(out)
            rescue.mkdir(parents=True, exist_ok=True)
            rescue_path = rescue / "checkpoint_last_finite.bin"
            exc.model.save(rescue_path)
            print(f"last finite parameters saved to {rescue_path}", file=sys.stderr)
        return EXIT_NONFINITE
    except NonFiniteGradient as exc:
        print(f"odakit: error: {exc}", file=sys.stderr)
        return EXIT_NONFINITE
    except OdaError as exc:
        print(f"odakit: error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


def entry():
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
