"""Top-k accuracy evaluation over ranked nearest-label predictions.

Three candidate protocols: `unseen_only` ranks a sample against the
zero-shot classes only, `all_classes` against every class vector, and
`seen_only` against the training classes (used by the stratified
70:30 seen-class protocol).
"""

from __future__ import annotations

import copy
import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .data import AssembledDataset
from .network import Model, predict_semantic
from .semantic import RankedLabels, build_index, query_k_nearest, scan_k_nearest
from .trainer import TrainConfig, train
from .zslf import ClassVectorSet

log = logging.getLogger(__name__)

CANDIDATE_MODES = ("all_classes", "unseen_only", "seen_only")


@dataclass
class EvalConfig:
    ks: tuple = (1, 5, 10)
    candidate_mode: str = "unseen_only"
    seen_holdout_fraction: float = 0.3
    seed: int = 0
    normalize_class_vectors: bool = False

    def __post_init__(self):
        self.ks = tuple(int(k) for k in self.ks)
        if not self.ks or any(k <= 0 for k in self.ks):
            raise ValueError("ks must be positive integers")
        if list(self.ks) != sorted(set(self.ks)):
            raise ValueError("ks must be strictly ascending")
        if self.candidate_mode not in CANDIDATE_MODES:
            raise ValueError(f"candidate_mode must be one of {CANDIDATE_MODES}")
        if not 0.0 < self.seen_holdout_fraction < 1.0:
            raise ValueError("seen_holdout_fraction must be in (0, 1)")

    def as_dict(self):
        return {
            "ks": list(self.ks),
            "candidate_mode": self.candidate_mode,
            "seen_holdout_fraction": self.seen_holdout_fraction,
            "seed": self.seed,
            "normalize_class_vectors": self.normalize_class_vectors,
        }


@dataclass
class EvalReport:
    config: EvalConfig
    candidate_mode: str
    n: int
    accuracy: dict[int, float]  # k -> accuracy in [0, 1]
    samples: list[dict] = field(default_factory=list)
    extra_modes: dict[str, dict[int, float]] = field(default_factory=dict)

    def mode_table(self) -> dict[str, dict[int, float]]:
        table = {self.candidate_mode: self.accuracy}
        table.update(self.extra_modes)
        return table


def top_k_hit(ranked: RankedLabels, true_label: str, k: int) -> bool:
    """True iff `true_label` is among the k nearest ranked labels."""
    if k > len(ranked):
        raise ValueError(f"k={k} exceeds ranked list of length {len(ranked)}")
    return true_label in ranked.labels[:k]


def _candidate_labels(mode: str, model: Model, dataset: AssembledDataset, cv: ClassVectorSet):
    if mode == "all_classes":
        return cv.labels
    if mode == "unseen_only":
        return dataset.label_order
    return model.label_order  # seen_only


def _maybe_normalized(cv: ClassVectorSet, normalize: bool) -> ClassVectorSet:
    if not normalize:
        return cv
    entries = {}
    for label, vec in cv.entries.items():
        norm = float(np.linalg.norm(vec.astype(np.float64)))
        entries[label] = vec / np.float32(norm) if norm > 0 else vec
    return ClassVectorSet(cv.dim, entries)


def rank_rows(sem_matrix, index, k: int, backend: str = "kdtree") -> list[RankedLabels]:
    """Ranked k-nearest labels for each semantic-prediction row."""
    query = query_k_nearest if backend == "kdtree" else scan_k_nearest
    return [query(index, row, k) for row in np.asarray(sem_matrix, dtype=np.float32)]


def accuracy_from_ranked(ranked_lists, true_labels, ks) -> dict[int, float]:
    n = len(true_labels)
    if n == 0:
        return {k: float("nan") for k in ks}
    return {
        k: sum(top_k_hit(r, t, k) for r, t in zip(ranked_lists, true_labels)) / n
        for k in ks
    }


def evaluate(
    model: Model,
    dataset: AssembledDataset,
    cv: ClassVectorSet,
    config: EvalConfig,
    backend: str = "kdtree",
) -> EvalReport:
    """Predict a semantic vector per row and score ranked label retrieval.

    `backend` selects the KD-tree or the exhaustive scan; both produce
    identical reports.
    """
    cv_used = _maybe_normalized(cv, config.normalize_class_vectors)
    candidates = _candidate_labels(config.candidate_mode, model, dataset, cv_used)
    outside = sorted(set(dataset.labels) - set(candidates))
    if outside:
        raise ValueError(
            f"dataset labels outside the {config.candidate_mode} candidate set: {outside}"
        )
    if max(config.ks) > len(candidates):
        raise ValueError(
            f"max k {max(config.ks)} exceeds candidate-set size {len(candidates)}"
        )
    index = build_index(cv_used, candidates)
    kmax = max(config.ks)
    ranked_lists: list[RankedLabels] = []
    if len(dataset):
        sems = predict_semantic(model, dataset.images, dataset.texts)
        ranked_lists = rank_rows(sems, index, kmax, backend=backend)
    true_labels = dataset.labels
    samples = [
        {
            "id": dataset.ids[i] if dataset.ids else str(i),
            "true": true_labels[i],
            "ranked": [{"label": l, "dist": d} for l, d in ranked_lists[i].entries],
        }
        for i in range(len(dataset))
    ]
    return EvalReport(
        config=config,
        candidate_mode=config.candidate_mode,
        n=len(dataset),
        accuracy=accuracy_from_ranked(ranked_lists, true_labels, config.ks),
        samples=samples,
    )


def evaluate_with_extra_modes(
    model: Model,
    dataset: AssembledDataset,
    cv: ClassVectorSet,
    config: EvalConfig,
    extra_modes=("all_classes",),
    backend: str = "kdtree",
) -> EvalReport:
    """evaluate(), plus accuracy under the additional candidate protocols."""
    report = evaluate(model, dataset, cv, config, backend=backend)
    for mode in extra_modes:
        if mode == config.candidate_mode:
            continue
        extra = evaluate(model, dataset, cv, replace(config, candidate_mode=mode), backend=backend)
        report.extra_modes[mode] = extra.accuracy
    return report


def stratified_holdout(label_indices, fraction: float, seed: int):
    """Per-class row split: (train_rows, test_rows), both non-empty per class.

    Classes with fewer than 2 rows are excluded entirely, with a warning.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    label_indices = np.asarray(label_indices)
    train_rows, test_rows = [], []
    for c in np.unique(label_indices):
        rows = np.flatnonzero(label_indices == c)
        if len(rows) < 2:
            log.warning("class index %d has %d sample(s); excluded from holdout", c, len(rows))
            continue
        rows = rows[rng.permutation(len(rows))]
        n_test = int(np.clip(round(fraction * len(rows)), 1, len(rows) - 1))
        test_rows.extend(rows[:n_test])
        train_rows.extend(rows[n_test:])
    return np.sort(np.asarray(train_rows, int)), np.sort(np.asarray(test_rows, int))


def seen_class_eval(
    model_untrained: Model,
    data_seen: AssembledDataset,
    config: EvalConfig,
    train_config: TrainConfig | None = None,
    full_cv: ClassVectorSet | None = None,
) -> EvalReport:
    """The seen-class protocol: stratified 70:30 row split, train on the 70%,
    score top-k on the held-out 30% against seen-class candidates only.

    The input model is copied; the caller's instance stays untrained.  When
    `full_cv` is given, all_classes accuracies on the holdout are attached
    as an extra mode.
    """
    if data_seen.label_order != model_untrained.label_order:
        raise ValueError("dataset label_order does not match the model's")
    train_config = train_config or TrainConfig()
    train_rows, test_rows = stratified_holdout(
        data_seen.label_indices, config.seen_holdout_fraction, config.seed
    )
    if not len(train_rows):
        raise ValueError("no class has enough samples for a holdout split")
    model = copy.deepcopy(model_untrained)
    train(model, data_seen.subset(train_rows), train_config)
    holdout = data_seen.subset(test_rows)
    # The model's frozen output columns are exactly the seen class vectors.
    cv_seen = ClassVectorSet(
        model.config.sem_dim,
        {l: model.output_weights[:, c] for c, l in enumerate(model.label_order)},
    )
    report = evaluate(model, holdout, cv_seen, replace(config, candidate_mode="seen_only"))
    if full_cv is not None:
        extra = evaluate(model, holdout, full_cv, replace(config, candidate_mode="all_classes"))
        report.extra_modes["all_classes"] = extra.accuracy
    return report


def render_report(report: EvalReport, fmt: str = "text", include_samples: bool = False) -> str:
    """Report as a text table or a machine-stable JSON document."""
    if fmt == "json":
        doc = {
            "config": report.config.as_dict(),
            "n": report.n,
            "accuracy": {f"top{k}": v for k, v in report.accuracy.items()},
            "modes": {
                mode: {f"top{k}": v for k, v in acc.items()}
                for mode, acc in report.mode_table().items()
            },
            "samples": report.samples if include_samples else [],
        }
        return json.dumps(doc, indent=2, sort_keys=True)
    if fmt != "text":
        raise ValueError(f"unknown report format {fmt!r}")

    def cell(v):
        return "   n/a" if not np.isfinite(v) else f"{v:.4f}"

    ks = list(report.config.ks)
    c = report.config
    lines = [
        # config echo so every report carries its provenance
        f"config: ks={','.join(str(k) for k in c.ks)} mode={c.candidate_mode} "
        f"holdout={c.seen_holdout_fraction} seed={c.seed} "
        f"normalize_class_vectors={str(c.normalize_class_vectors).lower()}",
        "mode" + " " * 16 + "n  " + "  ".join(f"top-{k}".rjust(6) for k in ks),
    ]
    for mode, acc in report.mode_table().items():
        row = f"{mode:<15}{report.n:>6}  " + "  ".join(cell(acc[k]) for k in ks)
        lines.append(row)
    if include_samples:
        lines.append("")
        for s in report.samples:
            nearest = ", ".join(f"{r['label']} (d={r['dist']:.4f})" for r in s["ranked"])
            lines.append(f"{s['id']}  true={s['true']}  nearest: {nearest}")
    return "\n".join(lines)
