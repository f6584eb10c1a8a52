"""Shared domain types: triplet vocabulary, frame labels, episodes, RNG streams.

Everything here is immutable after construction and safe to share across
threads. RngStream instances are the exception: each one is single-owner,
clone per worker via :meth:`RngStream.child`.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

COMPONENTS = ("I", "V", "T", "IV", "IT", "IVT")

_MASK64 = (1 << 64) - 1


class VocabError(ValueError):
    """Raised for malformed vocabularies or out-of-range class ids."""


def _hash64(*parts) -> int:
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        h.update(str(p).encode("utf-8"))
        h.update(b"\x00")
    return int.from_bytes(h.digest(), "little")


class RngStream:
    """Deterministic counter-based random stream keyed by (seed, stream_id).

    Identical (seed, stream_id) pairs reproduce identical draw sequences
    regardless of machine or thread schedule. Derive independent substreams
    with :meth:`child` instead of sharing one instance between workers.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        self.rng = np.random.Generator(np.random.Philox(key=key))

    def child(self, tag) -> "RngStream":
        """New independent stream; `tag` can be any printable value."""
        return RngStream(self.seed, _hash64(self.stream_id, tag))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


@dataclass(frozen=True)
class ActionTriplet:
    """One (instrument, verb, target) action and its joint-class index."""

    instrument_id: int
    verb_id: int
    target_id: int
    class_id: int


@dataclass(frozen=True)
class FrameLabel:
    """Multi-hot action annotation of one frame plus its phase."""

    active_classes: frozenset
    phase_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "active_classes", frozenset(int(c) for c in self.active_classes))


class TripletVocab:
    """The (instrument, verb, target) class system.

    `valid_triplets` is an ordered, duplicate-free list of (i, v, t) tuples;
    its length defines the number of joint classes. Component projections
    are precomputed as index tables so score/label projection is a cheap
    grouped reduction.
    """

    def __init__(
        self,
        num_instruments: int,
        num_verbs: int,
        num_targets: int,
        valid_triplets: Sequence[tuple],
        phase_count: int,
        instrument_names: Optional[Sequence[str]] = None,
        verb_names: Optional[Sequence[str]] = None,
        target_names: Optional[Sequence[str]] = None,
    ):
        self.num_instruments = int(num_instruments)
        self.num_verbs = int(num_verbs)
        self.num_targets = int(num_targets)
        self.phase_count = int(phase_count)
        triplets = [tuple(int(x) for x in t) for t in valid_triplets]
        if len(set(triplets)) != len(triplets):
            raise VocabError("valid_triplets contains duplicates")
        for (i, v, t) in triplets:
            if not (0 <= i < self.num_instruments and 0 <= v < self.num_verbs and 0 <= t < self.num_targets):
                raise VocabError(f"triplet {(i, v, t)} outside component ranges")
        self.valid_triplets = tuple(triplets)
        self.num_classes = len(triplets)
        self._class_of = {t: k for k, t in enumerate(triplets)}

        self.instrument_names = tuple(instrument_names or (f"inst{i:02d}" for i in range(self.num_instruments)))
        self.verb_names = tuple(verb_names or (f"verb{v:02d}" for v in range(self.num_verbs)))
        self.target_names = tuple(target_names or (f"targ{t:02d}" for t in range(self.num_targets)))
        if (
            len(self.instrument_names) != self.num_instruments
            or len(self.verb_names) != self.num_verbs
            or len(self.target_names) != self.num_targets
        ):
            raise VocabError("component name list lengths do not match counts")

        tri = np.asarray(triplets, dtype=np.int64).reshape(self.num_classes, 3)
        self._component_group = {
            "I": tri[:, 0].copy(),
            "V": tri[:, 1].copy(),
            "T": tri[:, 2].copy(),
            "IV": tri[:, 0] * self.num_verbs + tri[:, 1],
            "IT": tri[:, 0] * self.num_targets + tri[:, 2],
            "IVT": np.arange(self.num_classes, dtype=np.int64),
        }
        self._component_size = {
            "I": self.num_instruments,
            "V": self.num_verbs,
            "T": self.num_targets,
            "IV": self.num_instruments * self.num_verbs,
            "IT": self.num_instruments * self.num_targets,
            "IVT": self.num_classes,
        }

    def class_of(self, instrument_id: int, verb_id: int, target_id: int) -> int:
        key = (int(instrument_id), int(verb_id), int(target_id))
        if key not in self._class_of:
            raise VocabError(f"{key} is not a valid triplet")
        return self._class_of[key]

    def triplet(self, class_id: int) -> ActionTriplet:
        if not 0 <= class_id < self.num_classes:
            raise VocabError(f"class id {class_id} out of range 0..{self.num_classes - 1}")
        i, v, t = self.valid_triplets[class_id]
        return ActionTriplet(i, v, t, int(class_id))

    def component_size(self, component: str) -> int:
        self._check_component(component)
        return self._component_size[component]

    def component_groups(self, component: str) -> np.ndarray:
        """Group index of every joint class under `component` (read-only view)."""
        self._check_component(component)
        return self._component_group[component]

    def _check_component(self, component: str):
        if component not in COMPONENTS:
            raise VocabError(f"unknown component {component!r}; expected one of {COMPONENTS}")

    def __eq__(self, other):
        return (
            isinstance(other, TripletVocab)
            and self.valid_triplets == other.valid_triplets
            and self.num_instruments == other.num_instruments
            and self.num_verbs == other.num_verbs
            and self.num_targets == other.num_targets
            and self.phase_count == other.phase_count
        )

    def __repr__(self):
        return (
            f"TripletVocab({self.num_instruments}i/{self.num_verbs}v/{self.num_targets}t, "
            f"{self.num_classes} classes, {self.phase_count} phases)"
        )


@dataclass
class Episode:
    """Per-video sequence of frame embeddings and frame labels.

    `embeddings` may be None for externally ingested label-only data;
    such episodes are unusable for training until features are attached.
    """

    video_id: str
    embeddings: Optional[np.ndarray]
    labels: list
    fps: int = 1

    def __post_init__(self):
        if self.embeddings is not None:
            emb = np.asarray(self.embeddings, dtype=np.float32)
            if emb.ndim != 2:
                raise ValueError(f"embeddings must be 2-D (frames, dim), got shape {emb.shape}")
            if emb.shape[0] != len(self.labels):
                raise ValueError(
                    f"episode {self.video_id}: {emb.shape[0]} embeddings vs {len(self.labels)} labels"
                )
            emb.setflags(write=False)
            self.embeddings = emb

    def __len__(self):
        return len(self.labels)

    @property
    def embed_dim(self) -> Optional[int]:
        return None if self.embeddings is None else int(self.embeddings.shape[1])


def encode_multihot(label: FrameLabel, vocab: TripletVocab) -> np.ndarray:
    """Binary vector over the joint vocabulary, 1 exactly at active classes."""
    out = np.zeros(vocab.num_classes, dtype=np.float64)
    for c in label.active_classes:
        if not 0 <= c < vocab.num_classes:
            raise VocabError(f"class id {c} out of range for {vocab.num_classes}-class vocab")
        out[c] = 1.0
    return out


def decode_multihot(vector: np.ndarray, vocab: TripletVocab, phase_id: int = 0) -> FrameLabel:
    vector = np.asarray(vector)
    if vector.shape != (vocab.num_classes,):
        raise VocabError(f"expected shape ({vocab.num_classes},), got {vector.shape}")
    active = frozenset(int(i) for i in np.nonzero(vector)[0])
    return FrameLabel(active_classes=active, phase_id=phase_id)


def encode_labels(labels: Iterable[FrameLabel], vocab: TripletVocab) -> np.ndarray:
    """Stack of multi-hot rows, shape (frames, num_classes)."""
    rows = [encode_multihot(lab, vocab) for lab in labels]
    if not rows:
        return np.zeros((0, vocab.num_classes), dtype=np.float64)
    return np.stack(rows)


def project_components(class_scores: np.ndarray, vocab: TripletVocab, component: str) -> np.ndarray:
    """Max-pool joint-class scores onto one component vocabulary.

    The score of a component value is the max over scores of all triplets
    containing it; component values contained in no triplet score 0.
    IVT is the identity. Accepts a single vector or a (rows, num_classes)
    batch and preserves that leading axis.
    """
    scores = np.asarray(class_scores, dtype=np.float64)
    single = scores.ndim == 1
    if single:
        scores = scores[None, :]
    if scores.shape[1] != vocab.num_classes:
        raise VocabError(f"expected {vocab.num_classes} class scores, got {scores.shape[1]}")
    if component == "IVT":
        out = scores.copy()
    else:
        groups = vocab.component_groups(component)
        size = vocab.component_size(component)
        out = np.full((scores.shape[0], size), -np.inf)
        np.maximum.at(out.T, groups, scores.T)
        out[np.isinf(out)] = 0.0
    return out[0] if single else out


def project_labels(multihot: np.ndarray, vocab: TripletVocab, component: str) -> np.ndarray:
    """Binary component labels: positive iff any containing triplet is positive."""
    labels = np.asarray(multihot, dtype=np.float64)
    single = labels.ndim == 1
    if single:
        labels = labels[None, :]
    if component == "IVT":
        out = labels.copy()
    else:
        groups = vocab.component_groups(component)
        size = vocab.component_size(component)
        out = np.zeros((labels.shape[0], size))
        np.maximum.at(out.T, groups, labels.T)
    return out[0] if single else out


# --- vocab persistence -------------------------------------------------

def vocab_to_json(vocab: TripletVocab) -> dict:
    return {
        "instruments": list(vocab.instrument_names),
        "verbs": list(vocab.verb_names),
        "targets": list(vocab.target_names),
        "phase_count": vocab.phase_count,
        "valid_triplets": [list(t) for t in vocab.valid_triplets],
    }


def vocab_from_json(obj: dict) -> TripletVocab:
    try:
        return TripletVocab(
            num_instruments=len(obj["instruments"]),
            num_verbs=len(obj["verbs"]),
            num_targets=len(obj["targets"]),
            valid_triplets=[tuple(t) for t in obj["valid_triplets"]],
            phase_count=obj["phase_count"],
            instrument_names=obj["instruments"],
            verb_names=obj["verbs"],
            target_names=obj["targets"],
        )
    except KeyError as e:
        raise VocabError(f"vocab file missing key {e}") from e


def save_vocab(vocab: TripletVocab, path) -> None:
    Path(path).write_text(json.dumps(vocab_to_json(vocab), indent=1) + "\n")


def load_vocab(path) -> TripletVocab:
    return vocab_from_json(json.loads(Path(path).read_text()))


def build_vocab(
    num_instruments: int = 6,
    num_verbs: int = 10,
    num_targets: int = 15,
    num_classes: int = 100,
    phase_count: int = 7,
    seed: int = 17,
) -> TripletVocab:
    """Deterministic benchmark vocabulary.

    Picks `num_classes` distinct (i, v, t) combinations so that every
    instrument, verb and target occurs in at least one triplet (keeps all
    component vocabularies populated). The default sizes give the shipped
    100-class layout.
    """
    total = num_instruments * num_verbs * num_targets
    if num_classes > total:
        raise VocabError(f"cannot pick {num_classes} distinct triplets from {total} combinations")
    rng = RngStream(seed, _hash64("vocab")).rng
    combos = [
        (i, v, t)
        for i in range(num_instruments)
        for v in range(num_verbs)
        for t in range(num_targets)
    ]
    order = rng.permutation(total)
    chosen = []
    seen_i, seen_v, seen_t = set(), set(), set()
    # first pass: cover every component value
    for idx in order:
        i, v, t = combos[idx]
        if i not in seen_i or v not in seen_v or t not in seen_t:
            chosen.append((i, v, t))
            seen_i.add(i)
            seen_v.add(v)
            seen_t.add(t)
        if len(seen_i) == num_instruments and len(seen_v) == num_verbs and len(seen_t) == num_targets:
            break
    taken = set(chosen)
    for idx in order:
        if len(chosen) >= num_classes:
            break
        combo = combos[idx]
        if combo not in taken:
            chosen.append(combo)
            taken.add(combo)
    chosen.sort()
    return TripletVocab(num_instruments, num_verbs, num_targets, chosen, phase_count)


def default_vocab() -> TripletVocab:
    """The shipped 100-class vocabulary (packaged JSON)."""
    path = Path(__file__).parent / "data" / "default_vocab.json"
    return load_vocab(path)
