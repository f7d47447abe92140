"""
End-to-end pipeline, stratified 3-fold cross-validation and the
four-transform comparison.
"""
from __future__ import annotations

import csv
import io
import math
import time
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import classifier
from .config import VARIANTS, PipelineConfig
from .eigenspace import Eigenspace, fit_eigenspace, flatten, project
from .errors import (
    EmptyClassInTraining,
    InvalidParameter,
    SizesMismatch,
    StratificationImpossible,
    TooFewSamples,
)
from .imaging import DatasetManifest, ManifestEntry, as_gray, load_image
from .linefeat import MaskBank, default_mask_bank, extract_line_image, load_mask_bank
from .polar import center_and_radius, log_polar_transform, output_side

TOP_KS = (1, 2, 3)
# test fold for each of the three arrangements, in run order
ARRANGEMENT = (2, 1, 0)


def resolve_bank(cfg: PipelineConfig) -> MaskBank:
    if cfg.linefeat.bank_path:
        return load_mask_bank(cfg.linefeat.bank_path)
    return default_mask_bank()


def resize_nearest(img, side: int) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    rows = (np.arange(side) * img.shape[0]) // side
    cols = (np.arange(side) * img.shape[1]) // side
    return img[rows[:, None], cols[None, :]]


def transform_image(img, variant: str, cfg: PipelineConfig, bank: Optional[MaskBank] = None) -> np.ndarray:
    """
    Apply one transform variant, returning a square image.

    ``raw`` and ``line_skeletal`` work on the Cartesian image resized to the
    polar output side, so every variant yields the same geometry. Cartesian
    line extraction replicates edges on both axes; polar line extraction
    wraps the angle axis.
    """
    if variant not in VARIANTS:
        raise InvalidParameter(f"unknown variant {variant!r}")
    if variant in ("line_skeletal", "polar_line_skeletal") and bank is None:
        bank = resolve_bank(cfg)
    binarize_at = cfg.linefeat.binarize_at
    if variant in ("raw", "line_skeletal"):
        img = as_gray(img)
        out = resize_nearest(img, output_side(center_and_radius(img)[2], cfg.polar))
        if variant == "line_skeletal":
            out = extract_line_image(out, bank, wrap_columns=False, binarize_at=binarize_at)
        return out
    out = log_polar_transform(img, cfg.polar)
    if variant == "polar_line_skeletal":
        out = extract_line_image(out, bank, binarize_at=binarize_at)
    return out


def make_pipeline(variant: str, cfg: PipelineConfig, bank: Optional[MaskBank] = None) -> Callable:
    """Image-to-feature-vector function: :func:`transform_image` then flatten."""
    if variant not in VARIANTS:
        raise InvalidParameter(f"unknown variant {variant!r}")
    if variant in ("line_skeletal", "polar_line_skeletal") and bank is None:
        bank = resolve_bank(cfg)

    def pipeline(img):
        return flatten(transform_image(img, variant, cfg, bank))

    return pipeline


def default_fold_sizes(total: int) -> tuple:
    """Split in the proportions 7:7:6, exact for 2000 images (700, 700, 600)."""
    first = (7 * total + 10) // 20
    return first, first, total - 2 * first


def assign_folds(
    manifest: DatasetManifest, sizes: Optional[Sequence[int]] = None, seed: int = 0
) -> DatasetManifest:
    """
    Stratified fold assignment with exact fold sizes.

    Each subject's images are shuffled, given fractional positions
    ``(i + 0.5) / n_subject`` and merged across subjects by position; the
    first ``sizes[0]`` go to fold 0, the next ``sizes[1]`` to fold 1 and the
    rest to fold 2. A manifest that already carries a fold for every entry
    is returned unchanged.
    """
    if manifest.has_folds:
        return manifest
    total = len(manifest)
    sizes = tuple(sizes) if sizes is not None else default_fold_sizes(total)
    if len(sizes) != 3 or sum(sizes) != total or min(sizes) < 0:
        raise SizesMismatch(f"fold sizes {sizes} do not partition {total} entries")
    by_subject = defaultdict(list)
    for idx, entry in enumerate(manifest.entries):
        by_subject[entry.subject].append(idx)
    if any(len(members) < 3 for members in by_subject.values()):
        raise StratificationImpossible("every subject needs at least 3 images")
    rng = np.random.default_rng(seed)
    keyed = []
    for subject in sorted(by_subject):
        members = by_subject[subject]
        shuffled = [members[i] for i in rng.permutation(len(members))]
        for rank, idx in enumerate(shuffled):
            keyed.append(((rank + 0.5) / len(members), subject, idx))
    keyed.sort()
    folds = np.empty(total, dtype=np.int64)
    bounds = np.cumsum(sizes)
    for pos, (_, _, idx) in enumerate(keyed):
        folds[idx] = int(np.searchsorted(bounds, pos, side="right"))
    entries = [
        ManifestEntry(e.path, e.subject, int(f)) for e, f in zip(manifest.entries, folds)
    ]
    return DatasetManifest(entries, manifest.num_subjects, manifest.base_dir)


# ---------------------------------------------------------------------
# Training one model
# ---------------------------------------------------------------------
@dataclass
class TrainedModel:
    """Eigenspace and network fitted together; valid only as a pair."""

    variant: str
    eigenspace: Eigenspace
    feature_scale: float
    mlp: classifier.MlpModel
    labels: list
    history: list = field(default_factory=list)

    def features(self, raw_vectors) -> np.ndarray:
        return project(self.eigenspace, raw_vectors) * self.feature_scale

    def scores(self, raw_vectors) -> np.ndarray:
        feats = np.atleast_2d(self.features(raw_vectors))
        return np.array([classifier.forward(self.mlp, f).scores for f in feats])


def _feature_scale(es: Eigenspace, scaling: str) -> float:
    if scaling == "top_eigenvalue" and es.k and es.eigenvalues[0] > 0:
        return 1.0 / math.sqrt(float(es.eigenvalues[0]))
    return 1.0


def fit_model(
    vectors: np.ndarray,
    labels: Sequence[int],
    num_classes: int,
    cfg: PipelineConfig,
    variant: Optional[str] = None,
    label_names: Optional[list] = None,
) -> TrainedModel:
    """Fit the eigenspace on *vectors*, project them and train the MLP."""
    labels = np.asarray(labels, dtype=np.int64)
    missing = sorted(set(range(num_classes)) - set(labels.tolist()))
    if missing:
        raise EmptyClassInTraining(f"classes {missing} have no training images")
    es = fit_eigenspace(vectors, cfg.pca_k, clamp=True)
    if es.k == 0:
        raise TooFewSamples("training images carry no variance; cannot fit an eigenspace")
    scale = _feature_scale(es, cfg.eval.feature_scaling)
    projected = project(es, vectors) * scale
    mlp_cfg = cfg.mlp_for(es.k, num_classes)
    samples = list(zip(projected, labels.tolist()))
    mlp, history = classifier.train(classifier.init_model(mlp_cfg), samples)
    names = label_names or [f"subject_{i:02d}" for i in range(num_classes)]
    return TrainedModel(variant or cfg.eval.variant, es, scale, mlp, list(names), history)


# ---------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------
def topk_hits(scores: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Boolean array ``[sample, j]``: true label within the top ``TOP_KS[j]``."""
    ranking = np.array([classifier.rank_scores(s) for s in scores])
    n_classes = scores.shape[1]
    return np.column_stack([
        (ranking[:, : min(k, n_classes)] == labels[:, None]).any(axis=1) for k in TOP_KS
    ])


@dataclass
class FoldResult:
    fold: int
    n_test: int
    accuracy: tuple  # top-1, top-2, top-3


@dataclass
class EvaluationReport:
    variant: str
    folds: list
    aggregate: tuple
    confusion: np.ndarray
    timing: dict = field(default_factory=dict)
    models: list = field(default_factory=list, repr=False)

    @property
    def n_test(self) -> int:
        return sum(f.n_test for f in self.folds)


def load_features(manifest: DatasetManifest, variant: str, cfg: PipelineConfig, bank=None) -> np.ndarray:
    pipeline = make_pipeline(variant, cfg, bank)
    return np.array([pipeline(load_image(manifest.resolve(e))) for e in manifest.entries])


def run_cross_validation(
    manifest: DatasetManifest,
    variant: Optional[str] = None,
    cfg: Optional[PipelineConfig] = None,
    features: Optional[np.ndarray] = None,
    keep_models: bool = False,
) -> EvaluationReport:
    """
    Three-fold cross-validation: test on fold 2, then 1, then 0, training
    each time on the other two. Eigenspace and network see training images
    only. The aggregate is weighted by fold size.
    """
    cfg = cfg or PipelineConfig()
    variant = variant or cfg.eval.variant
    if not manifest.has_folds:
        raise InvalidParameter("manifest has no fold assignment; run assign_folds first")
    timing = defaultdict(float)
    t0 = time.perf_counter()
    if features is None:
        features = load_features(manifest, variant, cfg)
    timing["features"] += time.perf_counter() - t0

    labels = manifest.subjects()
    folds = np.array([e.fold for e in manifest.entries])
    n_classes = manifest.num_subjects
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    results, models, all_hits = [], [], []
    for test_fold in ARRANGEMENT:
        train_mask = folds != test_fold
        test_mask = ~train_mask
        t0 = time.perf_counter()
        model = fit_model(features[train_mask], labels[train_mask], n_classes, cfg, variant)
        timing["train"] += time.perf_counter() - t0
        t0 = time.perf_counter()
        if test_mask.any():
            scores = model.scores(features[test_mask])
            hits = topk_hits(scores, labels[test_mask])
            np.add.at(confusion, (labels[test_mask], scores.argmax(axis=1)), 1)
        else:
            hits = np.zeros((0, len(TOP_KS)), dtype=bool)
        timing["score"] += time.perf_counter() - t0
        all_hits.append(hits)
        accuracy = tuple(float(h) for h in hits.mean(axis=0)) if len(hits) else (0.0,) * len(TOP_KS)
        results.append(FoldResult(int(test_fold), int(test_mask.sum()), accuracy))
        if keep_models:
            models.append(model)
    stacked = np.concatenate(all_hits)
    aggregate = tuple(float(h) for h in stacked.mean(axis=0))
    return EvaluationReport(variant, results, aggregate, confusion, dict(timing), models)


def compare_transforms(
    manifest: DatasetManifest, cfg: Optional[PipelineConfig] = None, variants: Sequence[str] = VARIANTS
) -> list:
    """Cross-validate every transform variant on the same folds and seed."""
    cfg = cfg or PipelineConfig()
    return [run_cross_validation(manifest, v, cfg) for v in variants]


def report_csv(reports: Sequence[EvaluationReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["variant", "fold", "top1", "top2", "top3", "n_test"])
    for rep in reports:
        for f in rep.folds:
            writer.writerow([rep.variant, f.fold, *(f"{a:.6f}" for a in f.accuracy), f.n_test])
        writer.writerow([rep.variant, "all", *(f"{a:.6f}" for a in rep.aggregate), rep.n_test])
    return buf.getvalue()


def confusion_csv(report: EvaluationReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    n = report.confusion.shape[0]
    writer.writerow(["true\\predicted", *range(n)])
    for i, row in enumerate(report.confusion):
        writer.writerow([i, *row.tolist()])
    return buf.getvalue()


# recognition rates reported for the OTCBVS thermal set (top-1, top-2, top-3)
REFERENCE_ACCURACY = (0.9615, 0.9845, 0.9925)


def summary_text(reports: Sequence[EvaluationReport]) -> str:
    lines = []
    for rep in reports:
        lines.append(f"variant: {rep.variant}")
        lines.append("  fold  n_test   top-1    top-2    top-3")
        for f in rep.folds:
            acc = "  ".join(f"{100 * a:6.2f}%" for a in f.accuracy)
            lines.append(f"  {f.fold:>4}  {f.n_test:>6}  {acc}")
        acc = "  ".join(f"{100 * a:6.2f}%" for a in rep.aggregate)
        lines.append(f"  {'all':>4}  {rep.n_test:>6}  {acc}")
        lines.append("")
        lines.append("  No.  Top choices   Accuracy   Reference (OTCBVS)")
        for i, (k, a, ref) in enumerate(zip(TOP_KS, rep.aggregate, REFERENCE_ACCURACY), start=1):
            label = f"top {k}"
            lines.append(f"  {i:>3}  {label:<12}  {100 * a:7.2f}%   {100 * ref:6.2f}%")
        if rep.timing:
            timing = ", ".join(f"{k} {v:.2f}s" for k, v in sorted(rep.timing.items()))
            lines.append(f"  timing: {timing}")
        lines.append("")
    return "\n".join(lines)
