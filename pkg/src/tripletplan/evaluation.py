"""Recognition/planning evaluation: average precision, component-wise mAP,
multi-horizon sweeps and bootstrap confidence intervals.

Protocol decisions (kept in one place so an alternate protocol is a
one-point change): scores are pooled globally across all test frames,
component classes with no positive frames are excluded from the mean, and
ranking ties break deterministically by ascending original row index.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, Optional, Union

import numpy as np

from . import _kernels as kernels
from .core import COMPONENTS, RngStream, TripletVocab, encode_labels, project_components, project_labels

HORIZON_SECONDS = (1, 2, 3, 5, 10, 20)
HorizonKey = Union[str, int]  # "current" or horizon in frames (= seconds at 1 FPS)


class UndefinedAPError(ValueError):
    """AP is undefined for a class with no positive examples."""


class EmptyDumpError(ValueError):
    pass


def average_precision(scores, labels) -> float:
    """Non-interpolated AP with deterministic tie-breaking.

    Rows are ranked by descending score, ties resolved by ascending
    original index; AP is the mean of precision-at-rank over the positive
    rows. Raises UndefinedAPError when there are no positives.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError(f"scores {s.shape} and labels {y.shape} must be equal-length vectors")
    n = s.shape[0]
    if n == 0 or y.sum() == 0:
        raise UndefinedAPError("no positive labels; AP undefined for this class")
    order = np.lexsort((np.arange(n), -s))
    y_sorted = y[order] > 0
    cum_pos = np.cumsum(y_sorted)
    precision = cum_pos / np.arange(1, n + 1)
    return float(precision[y_sorted].mean())


@dataclass
class HorizonSlice:
    """Pooled test-frame predictions for one horizon (or recognition)."""

    scores: np.ndarray
    labels: np.ndarray
    video_index: np.ndarray  # per-row index into `videos`
    videos: list

    def __post_init__(self):
        if self.scores.shape != self.labels.shape:
            raise ValueError(f"scores {self.scores.shape} vs labels {self.labels.shape}")
        if self.scores.shape[0] != self.video_index.shape[0]:
            raise ValueError("row count mismatch between scores and video index")

    @property
    def n_rows(self) -> int:
        return self.scores.shape[0]


@dataclass
class PredictionDump:
    """Per-horizon score/label slices for one model over one test corpus."""

    slices: Dict[HorizonKey, HorizonSlice] = field(default_factory=dict)

    def horizons(self) -> list:
        return list(self.slices)

    def __getitem__(self, key: HorizonKey) -> HorizonSlice:
        return self.slices[key]

    def __contains__(self, key: HorizonKey) -> bool:
        return key in self.slices


def mean_ap_arrays(scores: np.ndarray, labels: np.ndarray, vocab: TripletVocab, component: str) -> float:
    """Component mAP over pooled rows; classes without positives excluded."""
    if scores.shape[0] == 0:
        raise EmptyDumpError("no rows to evaluate")
    proj_scores = project_components(scores, vocab, component)
    proj_labels = project_labels(labels, vocab, component)
    aps = []
    for j in range(proj_scores.shape[1]):
        col = proj_labels[:, j]
        if col.sum() > 0:
            aps.append(average_precision(proj_scores[:, j], col))
    if not aps:
        raise UndefinedAPError(f"component {component}: no class has a positive example")
    return float(np.mean(aps))


def mean_ap(dump: PredictionDump, vocab: TripletVocab, component: str, horizon: HorizonKey) -> float:
    if horizon not in dump:
        raise EmptyDumpError(f"dump does not cover horizon {horizon!r}")
    sl = dump[horizon]
    return mean_ap_arrays(sl.scores, sl.labels, vocab, component)


# --- horizon sweep ----------------------------------------------------

class PlanningAdapter:
    """Model-side interface the sweep drives.

    plan(episode, max_h) returns scores of shape (T, max_h, C): row t holds
    the per-class probabilities predicted for frames t+1 .. t+max_h using
    observations up to t only. recognition(episode) returns (T, C) current-
    frame scores or None for models without a recognition head.
    """

    def plan(self, episode, max_h: int) -> np.ndarray:
        raise NotImplementedError

    def recognition(self, episode) -> Optional[np.ndarray]:
        return None


def horizon_sweep(
    adapter: PlanningAdapter,
    episodes: list,
    vocab: TripletVocab,
    horizons: Iterable[int] = HORIZON_SECONDS,
    include_current: bool = True,
) -> PredictionDump:
    """Evaluate every anchor frame of every episode at every horizon.

    At 1 FPS a horizon of h seconds is h frames. Anchors within h frames
    of the episode end are excluded at horizon h (no ground truth exists).
    """
    horizons = sorted(set(int(h) for h in horizons))
    if any(h < 1 for h in horizons):
        raise ValueError("horizons must be >= 1 frame")
    max_h = max(horizons) if horizons else 0
    videos = [ep.video_id for ep in episodes]
    per_h_scores = {h: [] for h in horizons}
    per_h_labels = {h: [] for h in horizons}
    per_h_vidx = {h: [] for h in horizons}
    cur_scores, cur_labels, cur_vidx = [], [], []
    for vi, ep in enumerate(episodes):
        T = len(ep)
        truth = encode_labels(ep.labels, vocab)
        if max_h:
            plan = adapter.plan(ep, max_h)
            if plan.shape != (T, max_h, vocab.num_classes):
                raise ValueError(
                    f"adapter.plan returned {plan.shape}, expected {(T, max_h, vocab.num_classes)}"
                )
            for h in horizons:
                n = T - h
                if n <= 0:
                    continue
                per_h_scores[h].append(plan[:n, h - 1, :])
                per_h_labels[h].append(truth[h:])
                per_h_vidx[h].append(np.full(n, vi, dtype=np.int64))
        if include_current:
            rec = adapter.recognition(ep)
            if rec is not None:
                cur_scores.append(rec)
                cur_labels.append(truth)
                cur_vidx.append(np.full(T, vi, dtype=np.int64))
    dump = PredictionDump()
    for h in horizons:
        if per_h_scores[h]:
            dump.slices[h] = HorizonSlice(
                scores=np.concatenate(per_h_scores[h]),
                labels=np.concatenate(per_h_labels[h]),
                video_index=np.concatenate(per_h_vidx[h]),
                videos=videos,
            )
    if cur_scores:
        dump.slices["current"] = HorizonSlice(
            scores=np.concatenate(cur_scores),
            labels=np.concatenate(cur_labels),
            video_index=np.concatenate(cur_vidx),
            videos=videos,
        )
    return dump


# --- bootstrap ---------------------------------------------------------

def _resample_multiplicities(n_videos: int, n_resamples: int, stream: RngStream) -> np.ndarray:
    """(n_resamples, n_videos) integer counts from sampling videos with
    replacement."""
    rng = stream.rng
    picks = rng.integers(0, n_videos, size=(n_resamples, n_videos))
    counts = np.zeros((n_resamples, n_videos), dtype=np.int64)
    for r in range(n_resamples):
        np.add.at(counts[r], picks[r], 1)
    return counts


def bootstrap_ci(
    sl: HorizonSlice,
    metric: Union[str, Callable[[np.ndarray, np.ndarray], float]],
    vocab: Optional[TripletVocab] = None,
    n_resamples: int = 1000,
    level: float = 0.95,
    seed: int = 0,
) -> tuple:
    """Percentile bootstrap CI, resampling test videos with replacement.

    `metric` is either a component name (fast weighted-AP path computing
    that component's mAP) or a callable metric(scores, labels) evaluated on
    the materialized resampled rows. A single-video slice yields a
    degenerate interval and a warning. The interval is widened, if needed,
    to contain the point estimate.
    """
    n_videos = len(sl.videos)
    if isinstance(metric, str):
        if vocab is None:
            raise ValueError("component-name metric requires a vocab")
        point = mean_ap_arrays(sl.scores, sl.labels, vocab, metric)
        eval_fn = None
    else:
        point = float(metric(sl.scores, sl.labels))
        eval_fn = metric
    if n_videos < 2:
        warnings.warn("bootstrap over a single video: degenerate interval")
        return point, point
    stream = RngStream(seed).child("bootstrap")
    counts = _resample_multiplicities(n_videos, n_resamples, stream)
    stats = np.empty(n_resamples)
    if eval_fn is None:
        proj_scores = project_components(sl.scores, vocab, metric)
        proj_labels = project_labels(sl.labels, vocab, metric)
        n_comp = proj_scores.shape[1]
        orders, ys, vidx_sorted = [], [], []
        for j in range(n_comp):
            order = np.lexsort((np.arange(sl.n_rows), -proj_scores[:, j]))
            orders.append(order)
            ys.append(np.ascontiguousarray(proj_labels[order, j]))
            vidx_sorted.append(np.ascontiguousarray(sl.video_index[order]))
        for r in range(n_resamples):
            row_mult = counts[r]
            aps = []
            for j in range(n_comp):
                ap = kernels.ap_weighted(ys[j], np.ascontiguousarray(row_mult[vidx_sorted[j]]))
                if not np.isnan(ap):
                    aps.append(ap)
            stats[r] = np.mean(aps) if aps else np.nan
    else:
        for r in range(n_resamples):
            rows = np.repeat(np.arange(sl.n_rows), counts[r][sl.video_index])
            stats[r] = eval_fn(sl.scores[rows], sl.labels[rows])
    stats = stats[~np.isnan(stats)]
    if stats.size == 0:
        return point, point
    alpha = (1.0 - level) / 2.0
    lo, hi = np.percentile(stats, [100 * alpha, 100 * (1 - alpha)])
    return min(float(lo), point), max(float(hi), point)


# --- report ------------------------------------------------------------

@dataclass
class EvalReport:
    """Per-component, per-horizon mAP grid with optional CI bounds."""

    cells: dict = field(default_factory=dict)  # (component, horizon_key) -> (map, lo, hi)

    def set(self, component: str, horizon: HorizonKey, value: float, lo=None, hi=None):
        if lo is not None and not (lo <= value <= hi):
            raise ValueError(f"CI [{lo}, {hi}] does not bracket {value}")
        self.cells[(component, horizon)] = (value, lo, hi)

    def get(self, component: str, horizon: HorizonKey):
        return self.cells.get((component, horizon))

    def to_json(self) -> dict:
        return {
            "cells": [
                {"component": c, "horizon": h, "map": v, "ci_lo": lo, "ci_hi": hi}
                for (c, h), (v, lo, hi) in sorted(
                    self.cells.items(), key=lambda kv: (kv[0][0], str(kv[0][1]))
                )
            ]
        }

    @classmethod
    def from_json(cls, obj: dict) -> "EvalReport":
        rep = cls()
        for cell in obj["cells"]:
            h = cell["horizon"]
            rep.cells[(cell["component"], h if isinstance(h, str) else int(h))] = (
                cell["map"],
                cell["ci_lo"],
                cell["ci_hi"],
            )
        return rep

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "EvalReport":
        return cls.from_json(json.loads(Path(path).read_text()))

    def render(self, components=COMPONENTS, horizons=("current",) + HORIZON_SECONDS) -> str:
        """Aligned plain-text grid, '—' for missing cells."""
        headers = ["component"] + [str(h) for h in horizons]
        rows = []
        for c in components:
            row = [c]
            for h in horizons:
                cell = self.get(c, h)
                row.append("—" if cell is None else f"{100 * cell[0]:.1f}")
            rows.append(row)
        widths = [max(len(r[i]) for r in [headers] + rows) for i in range(len(headers))]
        lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
        lines.append("  ".join("-" * w for w in widths))
        for row in rows:
            lines.append("  ".join(v.ljust(w) for v, w in zip(row, widths)))
        return "\n".join(lines)


def build_report(
    dump: PredictionDump,
    vocab: TripletVocab,
    components=COMPONENTS,
    with_ci: bool = False,
    n_resamples: int = 1000,
    seed: int = 0,
) -> EvalReport:
    report = EvalReport()
    for comp in components:
        for h, sl in dump.slices.items():
            try:
                value = mean_ap_arrays(sl.scores, sl.labels, vocab, comp)
            except (UndefinedAPError, EmptyDumpError):
                continue
            if with_ci:
                lo, hi = bootstrap_ci(sl, comp, vocab, n_resamples=n_resamples, seed=seed)
                report.set(comp, h, value, lo, hi)
            else:
                report.set(comp, h, value)
    return report


# --- reference predictors ----------------------------------------------

def class_prevalence(episodes: list, vocab: TripletVocab) -> np.ndarray:
    """Per-class frequency over all frames of `episodes`."""
    total = np.zeros(vocab.num_classes)
    n = 0
    for ep in episodes:
        total += encode_labels(ep.labels, vocab).sum(axis=0)
        n += len(ep)
    return total / max(n, 1)


class ConstantScoreAdapter(PlanningAdapter):
    """Scores every frame and horizon with one fixed per-class vector
    (prevalence or uniform baselines)."""

    def __init__(self, scores: np.ndarray, with_recognition: bool = True):
        self._scores = np.asarray(scores, dtype=np.float64)
        self._with_recognition = with_recognition

    def plan(self, episode, max_h: int) -> np.ndarray:
        T = len(episode)
        return np.broadcast_to(self._scores, (T, max_h, self._scores.shape[0])).copy()

    def recognition(self, episode):
        if not self._with_recognition:
            return None
        return np.broadcast_to(self._scores, (len(episode), self._scores.shape[0])).copy()


# --- dump persistence ----------------------------------------------------

def save_dump(dump: PredictionDump, directory) -> None:
    """One canonical corpus-format file pair per horizon: score vectors ride
    the embedding block, ground truth rides the label records."""
    from .core import Episode, FrameLabel
    from .dataio import write_corpus

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for h, sl in dump.slices.items():
        episodes = []
        for vi, vid in enumerate(sl.videos):
            rows = np.nonzero(sl.video_index == vi)[0]
            if rows.size == 0:
                continue
            labels = [
                FrameLabel(frozenset(np.nonzero(sl.labels[r])[0].tolist())) for r in rows
            ]
            episodes.append(Episode(vid, sl.scores[rows], labels))
        write_corpus(episodes, directory / f"horizon_{h}")


def load_dump(directory, vocab: TripletVocab) -> PredictionDump:
    from .dataio import read_corpus

    directory = Path(directory)
    dump = PredictionDump()
    for labels_path in sorted(directory.glob("horizon_*.labels.jsonl")):
        key_raw = labels_path.name[len("horizon_") : -len(".labels.jsonl")]
        key: HorizonKey = key_raw if key_raw == "current" else int(key_raw)
        episodes = read_corpus(str(labels_path)[: -len(".labels.jsonl")])
        scores, labels, vidx, videos = [], [], [], []
        for vi, ep in enumerate(episodes):
            videos.append(ep.video_id)
            scores.append(np.asarray(ep.embeddings, dtype=np.float64))
            labels.append(encode_labels(ep.labels, vocab))
            vidx.append(np.full(len(ep), vi, dtype=np.int64))
        dump.slices[key] = HorizonSlice(
            scores=np.concatenate(scores),
            labels=np.concatenate(labels),
            video_index=np.concatenate(vidx),
            videos=videos,
        )
    return dump
