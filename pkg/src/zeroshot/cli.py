"""Command-line pipeline: synth, split, train, eval, predict, gradcheck.

Exit codes are a stable scripting contract: 0 success, 2 usage or input
error, 3 numeric failure, 4 checkpoint/artifact mismatch.  Every command is
deterministic given its flags.  Relative data paths resolve against
$ZEROSHOT_DATA_DIR when it is set.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

from filelock import FileLock

from . import data as data_mod
from . import evaluator as eval_mod
from . import network as net_mod
from . import semantic as sem_mod
from . import trainer as train_mod
from . import zslf
from .errors import NumericError

DATA_DIR_ENV = "ZEROSHOT_DATA_DIR"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3
EXIT_ARTIFACT = 4


class ArtifactError(Exception):
    """Checkpoint missing or incompatible with the supplied data."""


def _resolve(path: str) -> Path:
    base = os.environ.get(DATA_DIR_ENV)
    p = Path(path)
    if base and not p.is_absolute():
        return Path(base) / p
    return p


def _widths(text: str) -> tuple:
    text = text.strip()
    if not text:
        return ()
    return tuple(int(w) for w in text.split(","))


def _ks(text: str) -> tuple:
    return tuple(int(k) for k in text.split(","))


def _out_lock(out_dir: Path) -> FileLock:
    # Advisory guard against concurrent writers in the same output directory.
    return FileLock(out_dir / ".zeroshot.lock", timeout=0)


def _load_tables(args):
    img = zslf.load_feature_file(_resolve(args.images))
    txt = zslf.load_feature_file(_resolve(args.texts))
    cv = zslf.ClassVectorSet.from_table(zslf.load_feature_file(_resolve(args.class_vectors)))
    manifest = data_mod.Manifest.load(_resolve(args.manifest))
    return img, txt, cv, manifest


def _load_checkpoint(path, img=None, txt=None, cv=None):
    try:
        model = net_mod.load_model(_resolve(path))
    except (OSError, ValueError) as exc:
        raise ArtifactError(f"cannot load checkpoint {path}: {exc}") from exc
    checks = [
        (img, "n1", img.dim if img else None, "image table dim"),
        (txt, "n2", txt.dim if txt else None, "text table dim"),
        (cv, "sem_dim", cv.dim if cv else None, "class-vector dim"),
    ]
    for obj, attr, dim, what in checks:
        if obj is not None and getattr(model.config, attr) != dim:
            raise ArtifactError(
                f"checkpoint {attr}={getattr(model.config, attr)} but {what} is {dim}"
            )
    return model


def _model_config_from_args(args, n1, n2, sem_dim) -> net_mod.ModelConfig:
    return net_mod.ModelConfig(
        n1=n1,
        n2=n2,
        reducer_widths=_widths(args.reducer_widths),
        trunk_widths=_widths(args.trunk_widths),
        sem_dim=sem_dim,
        semantic_activation=args.semantic_activation,
        reducer_dropout=args.reducer_dropout,
        trunk_dropout=args.trunk_dropout,
        reducer_batchnorm=not args.no_batchnorm,
        train_output_layer=args.train_output_layer,
        seed=args.seed,
    )


def _train_config_from_args(args) -> train_mod.TrainConfig:
    return train_mod.TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch,
        max_epochs=args.epochs,
        early_stop_patience=args.patience,
        seed=args.seed,
        shuffle=not getattr(args, "no_shuffle", False),
    )


# --- commands ---------------------------------------------------------------


def cmd_synth(args) -> int:
    if args.classes <= 0 or args.per_class <= 0:
        raise ValueError("--classes and --per-class must be positive")
    out_dir = _resolve(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with _out_lock(out_dir):
        img, txt, cv, manifest = data_mod.generate_synthetic(
            num_classes=args.classes,
            n1=args.n1,
            n2=args.n2,
            sem_dim=args.sem_dim,
            per_class=args.per_class,
            noise_sigma=args.noise,
            seed=args.seed,
            nonnegative_classes=args.nonnegative,
        )
        zslf.write_feature_file(img, out_dir / "images.zslf")
        zslf.write_feature_file(txt, out_dir / "texts.zslf")
        zslf.write_feature_file(cv.to_table(), out_dir / "class_vectors.zslf")
        manifest.save(out_dir / "manifest.json")
    print(
        f"wrote {args.classes} classes x {args.per_class} samples "
        f"(n1={args.n1}, n2={args.n2}, sem_dim={args.sem_dim}) to {out_dir}"
    )
    return EXIT_OK


def cmd_split(args) -> int:
    cv = zslf.ClassVectorSet.from_table(zslf.load_feature_file(_resolve(args.class_vectors)))
    manifest = data_mod.Manifest.load(_resolve(args.manifest))
    retained = [l for l in manifest.labels if l in cv]
    dropped = [l for l in manifest.labels if l not in cv]
    if dropped:
        print(f"dropped {len(dropped)} classes without class vectors: {dropped}")
    split = data_mod.make_split(retained, args.unseen, args.seed)
    split.save(_resolve(args.out))
    print(f"seen={len(split.seen_labels)} unseen={len(split.unseen_labels)} -> {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    img, txt, cv, manifest = _load_tables(args)
    split = data_mod.SplitSpec.load(_resolve(args.split))
    train_set, _ = data_mod.assemble_dataset(img, txt, cv, manifest, split)
    if len(train_set) == 0:
        raise ValueError("no training rows after assembly")
    config = _model_config_from_args(args, img.dim, txt.dim, cv.dim)
    model = net_mod.init_model(cv, train_set.label_order, config)

    out_dir = _resolve(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint = out_dir / "checkpoint.zip"
    history_path = out_dir / "history.log"
    with _out_lock(out_dir), open(history_path, "w", encoding="utf-8") as hist:

        def emit(line):
            print(line)
            hist.write(line + "\n")

        tc = _train_config_from_args(args)
        history = train_mod.train(model, train_set, tc, log_fn=emit, checkpoint_path=checkpoint)
        if tc.max_epochs == 0:
            net_mod.save_model(model, checkpoint)
    print(f"trained {len(history)} epochs -> {checkpoint}")
    return EXIT_OK


def cmd_eval(args) -> int:
    img, txt, cv, manifest = _load_tables(args)
    split = data_mod.SplitSpec.load(_resolve(args.split))
    model = _load_checkpoint(args.checkpoint, img, txt, cv)
    train_set, zeroshot_set = data_mod.assemble_dataset(img, txt, cv, manifest, split)

    eval_config = eval_mod.EvalConfig(
        ks=_ks(args.k),
        candidate_mode="unseen_only" if args.mode == "unseen" else "seen_only",
        seen_holdout_fraction=args.holdout,
        seed=args.seed,
        normalize_class_vectors=args.normalize_class_vectors,
    )
    if args.repeats < 1:
        raise ValueError(f"--repeats must be >= 1, got {args.repeats}")
    if args.mode == "unseen":
        if args.repeats > 1:
            raise ValueError(
                "--repeats applies to --mode seen only; unseen evaluation of a "
                "fixed checkpoint is deterministic"
            )
        report = eval_mod.evaluate_with_extra_modes(
            model, zeroshot_set, cv, eval_config, extra_modes=("all_classes",)
        )
    else:
        if train_set.label_order != model.label_order:
            raise ArtifactError(
                "checkpoint label_order does not match the seen classes of this split"
            )
        if args.repeats > 1:
            rendered = _repeated_seen_eval(args, model, train_set, cv, eval_config)
            _emit_report(args, rendered)
            return EXIT_OK
        report = eval_mod.seen_class_eval(
            model,
            train_set,
            eval_config,
            train_config=_train_config_from_args(args),
            full_cv=cv,
        )
    rendered = eval_mod.render_report(report, args.format, include_samples=args.include_samples)
    _emit_report(args, rendered)
    return EXIT_OK


def _emit_report(args, rendered: str) -> None:
    if args.out:
        out = _resolve(args.out)
        out.write_text(rendered + "\n", encoding="utf-8")
        print(f"report -> {out}")
    else:
        print(rendered)


def _repeated_seen_eval(args, model, train_set, cv, eval_config) -> str:
    """Run the 70:30 protocol R times (seeds seed..seed+R-1) and summarize
    per-k accuracy as mean +- sample standard deviation."""
    runs = []
    for i in range(args.repeats):
        seed = args.seed + i
        tc = _train_config_from_args(args)
        report = eval_mod.seen_class_eval(
            model,
            train_set,
            replace(eval_config, seed=seed),
            train_config=replace(tc, seed=seed),
            full_cv=cv,
        )
        runs.append(report.mode_table())
    seeds = list(range(args.seed, args.seed + args.repeats))

    def stats(values):
        mean = sum(values) / len(values)
        var = sum((v - mean) ** 2 for v in values) / (len(values) - 1)
        return mean, math.sqrt(var)

    summary = {
        mode: {k: stats([run[mode][k] for run in runs]) for k in eval_config.ks}
        for mode in runs[0]
    }
    if args.format == "json":
        doc = {
            "config": eval_config.as_dict(),
            "repeats": args.repeats,
            "seeds": seeds,
            "modes": {
                mode: {
                    f"top{k}": {
                        "mean": summary[mode][k][0],
                        "std": summary[mode][k][1],
                        "runs": [run[mode][k] for run in runs],
                    }
                    for k in eval_config.ks
                }
                for mode in summary
            },
        }
        return json.dumps(doc, indent=2, sort_keys=True)
    lines = [f"seen-protocol repeats: {args.repeats} (seeds {seeds[0]}..{seeds[-1]})"]
    header = "mode" + " " * 12 + "  ".join(f"top-{k}".center(17) for k in eval_config.ks)
    lines.append(header)
    for mode, per_k in summary.items():
        cells = "  ".join(f"{m:.4f} +- {s:.4f}" for m, s in per_k.values())
        lines.append(f"{mode:<15} {cells}")
    return "\n".join(lines)


def cmd_predict(args) -> int:
    if args.k <= 0:
        raise ValueError(f"--k must be positive, got {args.k}")
    img = zslf.load_feature_file(_resolve(args.images))
    txt = zslf.load_feature_file(_resolve(args.texts))
    cv = zslf.ClassVectorSet.from_table(zslf.load_feature_file(_resolve(args.class_vectors)))
    model = _load_checkpoint(args.checkpoint, img, txt, cv)
    if args.image_id not in img:
        raise ValueError(f"unknown image id {args.image_id!r}")
    if args.text_id not in txt:
        raise ValueError(f"unknown text doc id {args.text_id!r}")

    if args.candidates == "all":
        labels = cv.labels
    else:
        if not args.split:
            raise ValueError(f"--split is required for --candidates {args.candidates}")
        split = data_mod.SplitSpec.load(_resolve(args.split))
        wanted = split.unseen_labels if args.candidates == "unseen" else split.seen_labels
        labels = [l for l in wanted if l in cv]
    index = sem_mod.build_index(cv, labels)
    sem = net_mod.predict_semantic(model, img.vector(args.image_id), txt.vector(args.text_id))
    ranked = sem_mod.query_k_nearest(index, sem, args.k)
    for rank, (label, dist) in enumerate(ranked.entries, start=1):
        print(f"{rank}  {label}  dist={dist:.6f}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    config = net_mod.ModelConfig(
        n1=6,
        n2=4,
        reducer_widths=(5,),
        trunk_widths=(6,),
        sem_dim=4,
        semantic_activation="relu",
        reducer_dropout=0.0,
        trunk_dropout=0.0,
        reducer_batchnorm=True,
        seed=args.seed,
    )
    err, checked, excluded = train_mod.gradient_check(
        config, seed=args.seed, eps=args.eps, details=True
    )
    print(f"max_rel_err={err:.3e} checked={checked} excluded={excluded}")
    return EXIT_OK if err < 1e-4 else EXIT_NUMERIC


# --- wiring -----------------------------------------------------------------


def _add_io_args(p, checkpoint=False):
    p.add_argument("--images", required=True, help="image features (.zslf)")
    p.add_argument("--texts", required=True, help="text features (.zslf)")
    p.add_argument("--class-vectors", required=True, help="class vectors (.zslf)")
    if checkpoint:
        p.add_argument("--checkpoint", required=True, help="model checkpoint archive")


def _add_train_args(p):
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--no-shuffle", action="store_true")


def _add_arch_args(p):
    p.add_argument("--reducer-widths", default="2048,1536,1024", help="comma list, '' for none")
    p.add_argument("--trunk-widths", default="1536,1024,768,512", help="comma list, '' for none")
    p.add_argument("--semantic-activation", choices=("relu", "linear"), default="relu")
    p.add_argument("--reducer-dropout", type=float, default=0.3)
    p.add_argument("--trunk-dropout", type=float, default=0.2)
    p.add_argument("--no-batchnorm", action="store_true")
    p.add_argument("--train-output-layer", action="store_true", help=argparse.SUPPRESS)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zeroshot",
        description="Zero-shot classification over a learned semantic embedding space.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--per-class", type=int, required=True)
    p.add_argument("--n1", type=int, default=64)
    p.add_argument("--n2", type=int, default=32)
    p.add_argument("--sem-dim", type=int, default=16)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--nonnegative", action="store_true", help="abs() the class vectors")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("split", help="partition classes into seen/unseen")
    p.add_argument("--class-vectors", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--unseen", type=int, default=25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train the mapping network on seen classes")
    _add_io_args(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_train_args(p)
    _add_arch_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="top-k accuracy report")
    _add_io_args(p, checkpoint=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--mode", choices=("unseen", "seen"), default="unseen")
    p.add_argument("--k", default="1,5,10", help="comma list of k values")
    p.add_argument("--holdout", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--normalize-class-vectors", action="store_true")
    p.add_argument(
        "--repeats",
        type=int,
        default=1,
        help="seen mode: rerun the holdout protocol R times and report mean +- std",
    )
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--include-samples", action="store_true")
    p.add_argument("--out", help="write the report here instead of stdout")
    _add_train_args(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="ranked labels for one (image, text) pair")
    _add_io_args(p, checkpoint=True)
    p.add_argument("--image-id", required=True)
    p.add_argument("--text-id", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--candidates", choices=("all", "unseen", "seen"), default="all")
    p.add_argument("--split", help="required for --candidates unseen/seen")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=1e-5)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ArtifactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARTIFACT
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
