"""Dataset plumbing: manifests, seen/unseen splits, assembly, synthetic data.

A dataset is four artifacts: an image feature table, a text feature table
(one document per class), a class-vector set, and a JSON manifest tying
image ids and text documents to class labels.  From those plus a split we
assemble dense training/zero-shot arrays.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ReferentialIntegrityError, ValidationError
from .zslf import ClassVectorSet, FeatureTable

log = logging.getLogger(__name__)


@dataclass
class Manifest:
    """classes: (label, text_doc_id) pairs; samples: (image_id, class_label) pairs."""

    classes: list[tuple[str, str]]
    samples: list[tuple[str, str]]

    def __post_init__(self):
        labels = [label for label, _ in self.classes]
        if len(set(labels)) != len(labels):
            raise ValidationError("duplicate class labels in manifest")
        known = set(labels)
        orphans = sorted({lab for _, lab in self.samples if lab not in known})
        if orphans:
            raise ValidationError(f"samples reference labels missing from classes: {orphans}")

    @property
    def labels(self) -> list[str]:
        return [label for label, _ in self.classes]

    def text_doc_id(self, label: str) -> str:
        return dict(self.classes)[label]

    def samples_for(self, label: str) -> list[str]:
        return [img for img, lab in self.samples if lab == label]

    def to_json(self) -> str:
        doc = {
            "classes": [{"label": l, "text_doc_id": t} for l, t in self.classes],
            "samples": [{"image_id": i, "class_label": l} for i, l in self.samples],
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Manifest":
        doc = json.loads(text)
        return cls(
            classes=[(c["label"], c["text_doc_id"]) for c in doc["classes"]],
            samples=[(s["image_id"], s["class_label"]) for s in doc["samples"]],
        )

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> "Manifest":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


@dataclass
class SplitSpec:
    """Deterministic partition of class labels into seen and unseen."""

    seed: int
    seen_labels: list[str]
    unseen_labels: list[str]

    def __post_init__(self):
        overlap = set(self.seen_labels) & set(self.unseen_labels)
        if overlap:
            raise ValidationError(f"labels in both splits: {sorted(overlap)}")

    def to_json(self) -> str:
        doc = {"seed": self.seed, "seen": self.seen_labels, "unseen": self.unseen_labels}
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SplitSpec":
        doc = json.loads(text)
        return cls(seed=doc["seed"], seen_labels=doc["seen"], unseen_labels=doc["unseen"])

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> "SplitSpec":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def make_split(labels: list[str], unseen_count: int, seed: int) -> SplitSpec:
    """Partition `labels` into seen/unseen with a seeded Fisher-Yates shuffle.

    The shuffle runs over the sorted label list, so the result depends only
    on the label *set* and the seed; the first `unseen_count` shuffled labels
    become the unseen split.
    """
    if not 0 < unseen_count < len(labels):
        raise ValueError(
            f"unseen_count must be in (0, {len(labels)}), got {unseen_count}"
        )
    if len(set(labels)) != len(labels):
        raise ValidationError("duplicate labels passed to make_split")
    pool = sorted(labels)
    rng = np.random.Generator(np.random.PCG64(seed))
    for i in range(len(pool) - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        pool[i], pool[j] = pool[j], pool[i]
    return SplitSpec(
        seed=seed, seen_labels=pool[unseen_count:], unseen_labels=pool[:unseen_count]
    )


@dataclass
class AssembledDataset:
    """Dense, row-aligned arrays ready for training or evaluation.

    `label_order` fixes one-hot indexing: row i belongs to class
    `label_order[label_indices[i]]`.  Text vectors repeat the class's single
    document embedding on every row of that class.
    """

    images: np.ndarray  # (N, n1) float32
    texts: np.ndarray  # (N, n2) float32
    label_indices: np.ndarray  # (N,) int64
    label_order: list[str]
    ids: list[str] = field(default_factory=list)  # image ids, row-aligned

    def __post_init__(self):
        n = len(self.images)
        if not (len(self.texts) == len(self.label_indices) == n):
            raise ValidationError("row arrays are not the same length")
        if self.ids and len(self.ids) != n:
            raise ValidationError("ids are not row-aligned")
        if n and not (
            0 <= self.label_indices.min() and self.label_indices.max() < len(self.label_order)
        ):
            raise ValidationError("label index outside [0, C)")

    def __len__(self):
        return len(self.images)

    @property
    def labels(self) -> list[str]:
        return [self.label_order[i] for i in self.label_indices]

    def subset(self, rows) -> "AssembledDataset":
        rows = np.asarray(rows)
        return AssembledDataset(
            images=self.images[rows],
            texts=self.texts[rows],
            label_indices=self.label_indices[rows],
            label_order=list(self.label_order),
            ids=[self.ids[r] for r in rows] if self.ids else [],
        )


def _build_rows(labels, img, txt, manifest, text_doc_of):
    ids, img_rows, txt_rows, idx = [], [], [], []
    for c, label in enumerate(labels):
        tvec = txt.vector(text_doc_of[label])
        for image_id in manifest.samples_for(label):
            ids.append(image_id)
            img_rows.append(img.vector(image_id))
            txt_rows.append(tvec)
            idx.append(c)
    images = np.stack(img_rows) if img_rows else np.zeros((0, img.dim), np.float32)
    texts = np.stack(txt_rows) if txt_rows else np.zeros((0, txt.dim), np.float32)
    return AssembledDataset(
        images=images,
        texts=texts,
        label_indices=np.asarray(idx, dtype=np.int64),
        label_order=list(labels),
        ids=ids,
    )


def assemble_dataset(
    img: FeatureTable,
    txt: FeatureTable,
    cv: ClassVectorSet,
    manifest: Manifest,
    split: SplitSpec,
) -> tuple[AssembledDataset, AssembledDataset]:
    """Join the four artifacts into (train, zeroshot) datasets.

    Classes without a class vector are dropped from both splits; classes with
    zero samples are dropped with a warning.  Missing image/text ids raise a
    ReferentialIntegrityError listing every offender.
    """
    text_doc_of = dict(manifest.classes)

    missing_imgs = sorted({i for i, _ in manifest.samples if i not in img})
    if missing_imgs:
        raise ReferentialIntegrityError("sample image ids missing from image table", missing_imgs)
    missing_docs = sorted(
        {doc for _, doc in manifest.classes if doc not in txt}
    )
    if missing_docs:
        raise ReferentialIntegrityError("class text docs missing from text table", missing_docs)

    def retained(labels):
        kept = []
        for label in labels:
            if label not in text_doc_of:
                continue  # label not part of this manifest
            if label not in cv:
                log.warning("dropping class %r: no class vector", label)
                continue
            if not manifest.samples_for(label):
                log.warning("dropping class %r: zero samples", label)
                continue
            kept.append(label)
        return kept

    train = _build_rows(retained(split.seen_labels), img, txt, manifest, text_doc_of)
    zeroshot = _build_rows(retained(split.unseen_labels), img, txt, manifest, text_doc_of)
    return train, zeroshot


def generate_synthetic(
    num_classes: int,
    n1: int,
    n2: int,
    sem_dim: int,
    per_class: int,
    noise_sigma: float,
    seed: int,
    nonnegative_classes: bool = False,
) -> tuple[FeatureTable, FeatureTable, ClassVectorSet, Manifest]:
    """Generate a desk-scale dataset whose features are noisy linear images
    of random class vectors.

    Class vectors are i.i.d. standard Gaussian (absolute value taken when
    `nonnegative_classes`, for use with a relu semantic layer).  Each class's
    image vectors are one fixed random linear map of its class vector plus
    per-sample Gaussian noise; its single text vector is a second fixed map,
    noise-free.  Fully deterministic in `seed`.
    """
    if min(num_classes, n1, n2, sem_dim, per_class) <= 0:
        raise ValueError("all dimensions and counts must be positive")
    if noise_sigma < 0:
        raise ValueError(f"noise_sigma must be >= 0, got {noise_sigma}")

    rng = np.random.Generator(np.random.PCG64(seed))
    class_vecs = rng.standard_normal((num_classes, sem_dim))
    if nonnegative_classes:
        class_vecs = np.abs(class_vecs)
    # Map entries scaled by 1/sqrt(sem_dim) to keep feature norms O(1).
    img_map = rng.standard_normal((n1, sem_dim)) / np.sqrt(sem_dim)
    txt_map = rng.standard_normal((n2, sem_dim)) / np.sqrt(sem_dim)

    width = max(3, len(str(num_classes - 1)))
    labels = [f"class_{c:0{width}d}" for c in range(num_classes)]

    img_ids, img_rows = [], []
    txt_ids, txt_rows = [], []
    classes, samples = [], []
    for c, label in enumerate(labels):
        doc_id = f"{label}_doc"
        classes.append((label, doc_id))
        txt_ids.append(doc_id)
        txt_rows.append(txt_map @ class_vecs[c])
        base = img_map @ class_vecs[c]
        for s in range(per_class):
            image_id = f"{label}_img_{s:04d}"
            noise = rng.standard_normal(n1) * noise_sigma if noise_sigma > 0 else 0.0
            img_ids.append(image_id)
            img_rows.append(base + noise)
            samples.append((image_id, label))

    img_table = FeatureTable(
        dim=n1, ids=img_ids, vectors=np.asarray(img_rows, dtype=np.float32)
    )
    txt_table = FeatureTable(
        dim=n2, ids=txt_ids, vectors=np.asarray(txt_rows, dtype=np.float32)
    )
    cv = ClassVectorSet(
        sem_dim, {label: class_vecs[c].astype(np.float32) for c, label in enumerate(labels)}
    )
    return img_table, txt_table, cv, Manifest(classes=classes, samples=samples)
