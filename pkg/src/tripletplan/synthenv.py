"""Phase-structured stochastic workflow process.

Doubles as (a) the expert-demonstration generator (surrogate frame
embeddings: one fixed prototype per class, averaged over active classes,
plus Gaussian noise) and (b) the ground-truth environment that scores
predicted action vectors with cosine similarity against the next frame.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .core import Episode, FrameLabel, RngStream, TripletVocab, encode_multihot

MAX_CONCURRENT = 3


@dataclass
class WorkflowSpec:
    """Parameters of the synthetic procedure dynamics.

    phase_transition rows must sum to 1; dwell is a lazy-chain overlay
    (leave the current phase with probability 1/mean_dwell, then draw the
    next phase from phase_transition). With uniform mean_dwell the lazy
    chain keeps phase_transition's stationary distribution.
    """

    phase_transition: np.ndarray
    phase_action_dist: np.ndarray
    concurrency_dist: np.ndarray
    mean_dwell: np.ndarray
    embed_dim: int = 128
    embed_noise: float = 0.10
    action_persist: Optional[np.ndarray] = None
    succession_prob: Optional[np.ndarray] = None

    def __post_init__(self):
        self.phase_transition = np.asarray(self.phase_transition, dtype=np.float64)
        self.phase_action_dist = np.asarray(self.phase_action_dist, dtype=np.float64)
        self.concurrency_dist = np.asarray(self.concurrency_dist, dtype=np.float64)
        self.mean_dwell = np.asarray(self.mean_dwell, dtype=np.float64)
        P = self.phase_transition.shape[0]
        if self.action_persist is None:
            self.action_persist = np.ones(P)
        self.action_persist = np.asarray(self.action_persist, dtype=np.float64)
        if self.succession_prob is None:
            self.succession_prob = np.zeros(P)
        self.succession_prob = np.asarray(self.succession_prob, dtype=np.float64)
        if self.phase_transition.shape != (P, P):
            raise ValueError("phase_transition must be square")
        if not np.allclose(self.phase_transition.sum(axis=1), 1.0, atol=1e-9):
            raise ValueError("phase_transition rows must sum to 1")
        if self.concurrency_dist.shape != (P, MAX_CONCURRENT + 1):
            raise ValueError(f"concurrency_dist must be (phases, {MAX_CONCURRENT + 1})")
        if np.any(self.mean_dwell < 1.0):
            raise ValueError("mean_dwell must be >= 1 frame")
        if np.any(self.action_persist < 1.0):
            raise ValueError("action_persist must be >= 1 frame")
        if np.any((self.succession_prob < 0) | (self.succession_prob > 1)):
            raise ValueError("succession_prob must be in [0, 1]")
        if (
            self.phase_action_dist.shape[0] != P
            or self.mean_dwell.shape != (P,)
            or self.action_persist.shape != (P,)
            or self.succession_prob.shape != (P,)
        ):
            raise ValueError("per-phase arrays disagree on phase count")
        # deterministic per-phase successor ring over the phase support,
        # ordered by descending weight (ties by class id); scripted
        # progressions are what makes long-horizon planning a real task
        self._rings = []
        for p in range(P):
            support = np.nonzero(self.phase_action_dist[p])[0]
            order = support[np.lexsort((support, -self.phase_action_dist[p][support]))]
            ring_pos = {int(c): k for k, c in enumerate(order)}
            self._rings.append((order, ring_pos))

    def successor_classes(self, phase: int, classes) -> tuple:
        """Advance every class one slot along the phase's support ring."""
        order, pos = self._rings[phase]
        out = []
        for c in classes:
            if int(c) in pos:
                out.append(int(order[(pos[int(c)] + 1) % len(order)]))
            else:
                out.append(int(c))  # class foreign to this phase: keep it
        return tuple(dict.fromkeys(out))  # dedupe, preserve order

    @property
    def phase_count(self) -> int:
        return self.phase_transition.shape[0]

    @property
    def num_classes(self) -> int:
        return self.phase_action_dist.shape[1]

    def to_json(self) -> dict:
        return {
            "phase_transition": self.phase_transition.tolist(),
            "phase_action_dist": self.phase_action_dist.tolist(),
            "concurrency_dist": self.concurrency_dist.tolist(),
            "mean_dwell": self.mean_dwell.tolist(),
            "embed_dim": self.embed_dim,
            "embed_noise": self.embed_noise,
            "action_persist": self.action_persist.tolist(),
            "succession_prob": self.succession_prob.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "WorkflowSpec":
        return cls(
            phase_transition=obj["phase_transition"],
            phase_action_dist=obj["phase_action_dist"],
            concurrency_dist=obj["concurrency_dist"],
            mean_dwell=obj["mean_dwell"],
            embed_dim=int(obj["embed_dim"]),
            embed_noise=float(obj["embed_noise"]),
            action_persist=obj.get("action_persist"),
            succession_prob=obj.get("succession_prob"),
        )


def save_workflow_spec(spec: WorkflowSpec, path) -> None:
    Path(path).write_text(json.dumps(spec.to_json()) + "\n")


def load_workflow_spec(path) -> WorkflowSpec:
    return WorkflowSpec.from_json(json.loads(Path(path).read_text()))


def default_workflow_spec(
    vocab: TripletVocab,
    embed_dim: int = 128,
    embed_noise: float = 0.10,
    actions_per_phase: int = 12,
    mean_dwell: float = 30.0,
    action_persist: float = 8.0,
    succession_prob: float = 0.85,
    seed: int = 23,
) -> WorkflowSpec:
    """Deterministic benchmark dynamics.

    Phases progress mostly forward through a cycle; each phase draws from
    a small concentrated subset of the triplet vocabulary. A drawn action
    set persists for a geometric sojourn (mean action_persist frames, cut
    at phase changes) and then usually advances to its scripted successor
    along the phase's support ring, so the sequence is predictable well
    past the current action set but never trivially so.
    """
    P = vocab.phase_count
    C = vocab.num_classes
    trans = np.zeros((P, P))
    for p in range(P):
        trans[p, (p + 1) % P] += 0.75
        trans[p, (p + 2) % P] += 0.15
        trans[p, (p - 1) % P] += 0.10
    action_dist = np.zeros((P, C))
    rng = RngStream(seed).child("phase_actions").rng
    k = min(actions_per_phase, C)
    for p in range(P):
        chosen = rng.choice(C, size=k, replace=False)
        weights = 1.0 / (1.0 + np.arange(k))
        action_dist[p, chosen] = weights / weights.sum()
    concurrency = np.tile(np.array([0.15, 0.50, 0.25, 0.10]), (P, 1))
    return WorkflowSpec(
        phase_transition=trans,
        phase_action_dist=action_dist,
        concurrency_dist=concurrency,
        mean_dwell=np.full(P, float(mean_dwell)),
        embed_dim=embed_dim,
        embed_noise=embed_noise,
        action_persist=np.full(P, float(action_persist)),
        succession_prob=np.full(P, float(succession_prob)),
    )


def class_prototypes(spec: WorkflowSpec, seed: int) -> np.ndarray:
    """(num_classes + 1, embed_dim) unit-norm prototypes; last row is the
    null prototype used by empty frames. Fixed by the corpus seed so every
    split generated from one seed shares the same embedding geometry."""
    rng = RngStream(seed).child("prototypes").rng
    protos = rng.normal(size=(spec.num_classes + 1, spec.embed_dim))
    protos /= np.linalg.norm(protos, axis=1, keepdims=True)
    return protos


def stationary_distribution(transition: np.ndarray) -> np.ndarray:
    """Left eigenvector of the transition matrix for eigenvalue 1."""
    vals, vecs = np.linalg.eig(transition.T)
    idx = int(np.argmin(np.abs(vals - 1.0)))
    pi = np.real(vecs[:, idx])
    pi = np.abs(pi)
    return pi / pi.sum()


def _sample_phase_path(spec: WorkflowSpec, n_frames: int, rng) -> np.ndarray:
    path = np.empty(n_frames, dtype=np.int64)
    phase = 0
    for t in range(n_frames):
        path[t] = phase
        if rng.random() < 1.0 / spec.mean_dwell[phase]:
            phase = int(rng.choice(spec.phase_count, p=spec.phase_transition[phase]))
    return path


def generate_episode(
    spec: WorkflowSpec,
    vocab: TripletVocab,
    video_id: str,
    n_frames: int,
    stream: RngStream,
    prototypes: np.ndarray,
) -> Episode:
    if n_frames <= 0:
        raise ValueError(f"frames per video must be positive, got {n_frames}")
    rng = stream.rng
    phases = _sample_phase_path(spec, n_frames, rng)
    labels = []
    embeddings = np.empty((n_frames, spec.embed_dim))
    null_proto = prototypes[-1]
    active: tuple = ()
    frames_in_set = 0
    for t in range(n_frames):
        p = phases[t]
        # an action set holds for a fixed duration (scripted pacing), then
        # usually advances to its successor on the phase's support ring;
        # phase changes and the remaining sojourn ends draw a fresh set
        same_phase = t > 0 and phases[t] == phases[t - 1]
        sojourn_over = t == 0 or not same_phase or frames_in_set >= round(spec.action_persist[p])
        if sojourn_over:
            frames_in_set = 0
            # empty sets take the succession branch too (staying empty), so
            # survival is not size-biased and the concurrency marginal is
            # exactly the per-phase distribution
            if same_phase and rng.random() < spec.succession_prob[p]:
                active = spec.successor_classes(p, active)
            else:
                n_active = int(rng.choice(MAX_CONCURRENT + 1, p=spec.concurrency_dist[p]))
                weights = spec.phase_action_dist[p]
                n_active = min(n_active, int(np.count_nonzero(weights)))
                if n_active > 0:
                    active = tuple(
                        int(a)
                        for a in rng.choice(spec.num_classes, size=n_active, replace=False, p=weights)
                    )
                else:
                    active = ()
        frames_in_set += 1
        mean_vec = prototypes[np.asarray(active)].mean(axis=0) if active else null_proto
        noise = rng.normal(size=spec.embed_dim) * spec.embed_noise if spec.embed_noise > 0 else 0.0
        embeddings[t] = mean_vec + noise
        labels.append(FrameLabel(active_classes=frozenset(active), phase_id=int(p)))
    return Episode(video_id=video_id, embeddings=embeddings.astype(np.float32), labels=labels)


def generate_corpus(
    spec: WorkflowSpec,
    vocab: TripletVocab,
    n_videos: int,
    frames_per_video: int,
    seed: int,
    id_prefix: str = "synth",
    start_index: int = 0,
) -> list:
    """Deterministic corpus: one RNG stream per video keyed by video index."""
    if n_videos < 1:
        raise ValueError(f"need at least one video, got {n_videos}")
    if frames_per_video <= 0:
        raise ValueError(f"frames per video must be positive, got {frames_per_video}")
    root = RngStream(seed)
    protos = class_prototypes(spec, seed)
    episodes = []
    for i in range(start_index, start_index + n_videos):
        stream = root.child(("video", i))
        episodes.append(
            generate_episode(spec, vocab, f"{id_prefix}{i:04d}", frames_per_video, stream, protos)
        )
    return episodes


def cosine_reward(action: np.ndarray, truth: np.ndarray) -> float:
    """Cosine similarity of two binary vectors.

    Both empty counts as a perfect match (1.0); exactly one empty is a
    total miss (0.0).
    """
    a = np.asarray(action, dtype=np.float64)
    b = np.asarray(truth, dtype=np.float64)
    na2 = a @ a
    nb2 = b @ b
    if na2 == 0.0 and nb2 == 0.0:
        return 1.0
    if na2 == 0.0 or nb2 == 0.0:
        return 0.0
    # sqrt of the product keeps exact matches at exactly 1.0 (k*k is a
    # perfect square; sqrt(k)*sqrt(k) is not exactly k in floats)
    return float((a @ b) / np.sqrt(na2 * nb2))


class EnvDone(RuntimeError):
    """Raised when stepping an exhausted environment."""


@dataclass
class EnvState:
    """Observable state: context of recent frame embeddings, never labels."""

    phase_id: int
    frame_index: int
    context: np.ndarray
    rng: Optional[RngStream] = None


class TripletEnv:
    """Steps through one ground-truth episode.

    The agent observes the embedding context up to frame t and acts by
    predicting the next frame's multi-hot action vector; the reward is the
    cosine match against the ground truth at t+1, after which the trajectory
    advances one frame. Single-owner; run many instances for parallelism.
    """

    def __init__(self, episode: Episode, vocab: TripletVocab, context_window: int = 20):
        if episode.embeddings is None:
            raise ValueError("environment episodes need embeddings")
        self.episode = episode
        self.vocab = vocab
        self.w = int(context_window)
        self._truth = np.stack([encode_multihot(lab, vocab) for lab in episode.labels])
        self._t = 0
        self._done = len(episode) < 2

    @property
    def done(self) -> bool:
        return self._done

    def state(self) -> EnvState:
        lo = max(0, self._t + 1 - self.w)
        return EnvState(
            phase_id=self.episode.labels[self._t].phase_id,
            frame_index=self._t,
            context=np.asarray(self.episode.embeddings[lo : self._t + 1], dtype=np.float64),
        )

    def reset(self) -> EnvState:
        self._t = 0
        self._done = len(self.episode) < 2
        return self.state()

    def step(self, action: np.ndarray):
        """Score `action` against the next frame and advance. Returns
        (next_state, reward, done)."""
        if self._done:
            raise EnvDone(f"episode {self.episode.video_id} is exhausted")
        action = np.asarray(action, dtype=np.float64)
        if action.shape != (self.vocab.num_classes,):
            raise ValueError(
                f"action length {action.shape} != num_classes {self.vocab.num_classes}"
            )
        reward = cosine_reward(action, self._truth[self._t + 1])
        self._t += 1
        self._done = self._t >= len(self.episode) - 1
        return self.state(), reward, self._done

    def expert_action(self) -> np.ndarray:
        """Ground-truth multi-hot for the frame the agent is about to predict."""
        if self._done:
            raise EnvDone("no next frame left to predict")
        return self._truth[self._t + 1].copy()
