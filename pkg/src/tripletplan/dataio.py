"""Canonical on-disk formats.

Corpus = `<name>.labels.jsonl` (header line + one JSON record per frame)
plus `<name>.embed.bin` (16-byte header: frame count and dim as little-
endian uint64, then row-major little-endian float32). Text for
inspectability, binary for bulk. Checkpoints are npz archives of named
flat arrays; run records are append-only jsonl metric streams.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .core import Episode, FrameLabel, TripletVocab

CORPUS_FORMAT = "tripletplan-corpus"


class CorpusFormatError(ValueError):
    """Malformed or inconsistent corpus files."""


# --- corpus ----------------------------------------------------------

def _paths(base) -> tuple:
    base = Path(base)
    return base.with_suffix(base.suffix + ".labels.jsonl"), base.with_suffix(base.suffix + ".embed.bin")


def write_corpus(episodes: list, base) -> None:
    """Write episodes as the canonical file pair. All episodes must carry
    embeddings of one shared dimension."""
    dims = {ep.embed_dim for ep in episodes}
    if len(dims) > 1:
        raise CorpusFormatError(f"inconsistent embedding dims across episodes: {sorted(dims)}")
    if None in dims:
        raise CorpusFormatError("cannot write a corpus with missing embeddings")
    embed_dim = dims.pop() if dims else 0
    n_frames = sum(len(ep) for ep in episodes)
    labels_path, embed_path = _paths(base)
    labels_path.parent.mkdir(parents=True, exist_ok=True)
    fps = episodes[0].fps if episodes else 1
    with open(labels_path, "w") as fh:
        header = {
            "format": CORPUS_FORMAT,
            "version": 1,
            "fps": fps,
            "embed_dim": embed_dim,
            "frame_count": n_frames,
        }
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for ep in episodes:
            for t, lab in enumerate(ep.labels):
                rec = {
                    "video_id": ep.video_id,
                    "t": t,
                    "classes": sorted(lab.active_classes),
                    "phase": lab.phase_id,
                }
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    with open(embed_path, "wb") as fh:
        fh.write(np.uint64(n_frames).tobytes())
        fh.write(np.uint64(embed_dim).tobytes())
        for ep in episodes:
            fh.write(np.ascontiguousarray(ep.embeddings, dtype="<f4").tobytes())


def read_corpus(base) -> list:
    labels_path, embed_path = _paths(base)
    if not labels_path.exists():
        raise CorpusFormatError(f"missing labels file {labels_path}")
    with open(labels_path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise CorpusFormatError(f"{labels_path} is empty")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise CorpusFormatError(f"{labels_path}: bad header line: {e}") from e
    if header.get("format") != CORPUS_FORMAT:
        raise CorpusFormatError(f"{labels_path}: not a {CORPUS_FORMAT} file")
    embed_dim = int(header["embed_dim"])
    n_frames = int(header["frame_count"])
    fps = int(header.get("fps", 1))

    raw = Path(embed_path).read_bytes()
    if len(raw) < 16:
        raise CorpusFormatError(f"{embed_path}: truncated header")
    count = int(np.frombuffer(raw[:8], dtype="<u8")[0])
    dim = int(np.frombuffer(raw[8:16], dtype="<u8")[0])
    if count != n_frames or dim != embed_dim:
        raise CorpusFormatError(
            f"header mismatch: labels say {n_frames}x{embed_dim}, embeddings say {count}x{dim}"
        )
    flat = np.frombuffer(raw[16:], dtype="<f4")
    if flat.size != count * dim:
        raise CorpusFormatError(
            f"{embed_path}: expected {count * dim} float32 values, found {flat.size}"
        )
    embeddings = flat.reshape(count, dim) if dim else np.zeros((count, 0), dtype=np.float32)

    episodes = []
    current_id, cur_labels, start = None, [], 0
    row = 0
    for line in lines[1:]:
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            vid, t = rec["video_id"], int(rec["t"])
            classes, phase = rec["classes"], int(rec.get("phase", 0))
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise CorpusFormatError(f"{labels_path}: bad frame record {line!r}: {e}") from e
        if vid != current_id:
            if current_id is not None:
                episodes.append(
                    Episode(current_id, embeddings[start : start + len(cur_labels)], cur_labels, fps)
                )
                start += len(cur_labels)
            current_id, cur_labels = vid, []
        if t != len(cur_labels):
            raise CorpusFormatError(f"{labels_path}: frame index {t} out of order in video {vid}")
        cur_labels.append(FrameLabel(active_classes=frozenset(classes), phase_id=phase))
        row += 1
    if current_id is not None:
        episodes.append(Episode(current_id, embeddings[start : start + len(cur_labels)], cur_labels, fps))
    if row != n_frames:
        raise CorpusFormatError(f"{labels_path}: header says {n_frames} frames, found {row}")
    return episodes


def ingest_external(path, vocab: TripletVocab) -> list:
    """Adapter for external per-frame triplet annotations (no embeddings).

    Expected schema: jsonl with one record per frame carrying video_id, t,
    classes (list of joint-class ids) and optionally phase; a corpus header
    line is tolerated and skipped. Unknown class ids are dropped with one
    summary warning; frames with more than 3 actions are kept with a
    warning. Returned episodes have embeddings=None until an external
    feature file is attached.
    """
    path = Path(path)
    videos: dict = {}
    dropped = 0
    crowded = 0
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            if rec.get("format") == CORPUS_FORMAT:
                continue
            try:
                vid, t, classes = rec["video_id"], int(rec["t"]), rec["classes"]
            except (KeyError, TypeError) as e:
                raise CorpusFormatError(f"{path}: bad external record {line!r}: {e}") from e
            keep = []
            for c in classes:
                if 0 <= int(c) < vocab.num_classes:
                    keep.append(int(c))
                else:
                    dropped += 1
            if len(keep) > 3:
                crowded += 1
            videos.setdefault(vid, []).append(
                (t, FrameLabel(active_classes=frozenset(keep), phase_id=int(rec.get("phase", 0))))
            )
    if dropped:
        warnings.warn(f"{path}: dropped {dropped} class id(s) outside the {vocab.num_classes}-class vocab")
    if crowded:
        warnings.warn(f"{path}: {crowded} frame(s) carry more than 3 simultaneous actions")
    episodes = []
    for vid, frames in videos.items():
        frames.sort(key=lambda pair: pair[0])
        episodes.append(Episode(vid, None, [lab for _, lab in frames]))
    return episodes


# --- manifests -------------------------------------------------------

@dataclass
class CorpusManifest:
    train_video_ids: list
    test_video_ids: list
    vocab_path: str
    fps: int = 1

    def __post_init__(self):
        overlap = set(self.train_video_ids) & set(self.test_video_ids)
        if overlap:
            raise ValueError(f"train/test overlap: {sorted(overlap)}")

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.__dict__, indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "CorpusManifest":
        obj = json.loads(Path(path).read_text())
        return cls(
            train_video_ids=obj["train_video_ids"],
            test_video_ids=obj["test_video_ids"],
            vocab_path=obj["vocab_path"],
            fps=int(obj.get("fps", 1)),
        )


def split_episodes(episodes: list, manifest: CorpusManifest) -> tuple:
    by_id = {ep.video_id: ep for ep in episodes}
    train = [by_id[v] for v in manifest.train_video_ids]
    test = [by_id[v] for v in manifest.test_video_ids]
    return train, test


# --- run records -----------------------------------------------------

def config_hash(config: dict) -> str:
    """Digest stable under key reordering."""
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


class RunRecord:
    """Append-only metric stream for one run. Single writer; readers free."""

    def __init__(self, run_id: str, config_hash: str, seed: int, path=None):
        self.run_id = run_id
        self.config_hash = config_hash
        self.seed = int(seed)
        self.metrics: list = []
        self._fh = None
        if path is not None:
            path = Path(path)
            path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(path, "w")
            self._fh.write(
                json.dumps(
                    {"run_id": run_id, "config_hash": config_hash, "seed": self.seed},
                    sort_keys=True,
                )
                + "\n"
            )
            self._fh.flush()

    def log(self, step: int, name: str, value: float):
        entry = (int(step), str(name), float(value))
        self.metrics.append(entry)
        if self._fh is not None:
            self._fh.write(json.dumps({"step": entry[0], "name": entry[1], "value": entry[2]}) + "\n")
            self._fh.flush()

    def series(self, name: str) -> list:
        return [(s, v) for s, n, v in self.metrics if n == name]

    def last(self, name: str) -> Optional[float]:
        series = self.series(name)
        return series[-1][1] if series else None

    def close(self):
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    @classmethod
    def load(cls, path) -> "RunRecord":
        with open(path) as fh:
            lines = [json.loads(line) for line in fh if line.strip()]
        head = lines[0]
        rec = cls(head["run_id"], head["config_hash"], head["seed"])
        for entry in lines[1:]:
            rec.metrics.append((int(entry["step"]), entry["name"], float(entry["value"])))
        return rec


# --- checkpoints -------------------------------------------------------

def save_checkpoint(path, state: dict) -> None:
    """Parameters as named arrays (`module.layer.param` convention)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, **{k: np.asarray(v) for k, v in state.items()})


def load_checkpoint(path) -> dict:
    path = Path(path)
    if path.suffix != ".npz":
        path = path.with_suffix(path.suffix + ".npz")
    with np.load(path) as data:
        return {k: data[k].copy() for k in data.files}
