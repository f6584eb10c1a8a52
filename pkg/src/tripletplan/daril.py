"""Dual-task autoregressive imitation learner.

Two pathways over a sliding window of frame embeddings: a BiLSTM encoder
scores the current frame's actions (and phase), a causal decoder stack
predicts the next frame's actions and embedding. Multi-step planning feeds
the predicted embedding back into the window, so rollouts never touch
ground truth beyond the context.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import nn
from .core import Episode, RngStream, TripletVocab, encode_labels
from .dataio import RunRecord, save_checkpoint


@dataclass
class DarilConfig:
    context_window: int = 20
    embed_dim: int = 64
    model_dim: int = 64
    n_heads: int = 4
    n_blocks: int = 2
    lstm_hidden: int = 64
    w_current: float = 1.0
    w_next: float = 1.0
    w_embed: float = 1.0
    w_phase: float = 1.0
    lr: float = 1e-3
    epochs: int = 12
    batch_size: int = 64
    max_horizon: int = 30

    def __post_init__(self):
        if self.context_window < 1:
            raise ValueError("context window must be >= 1")
        for name in ("w_current", "w_next", "w_embed", "w_phase"):
            if getattr(self, name) < 0:
                raise ValueError(f"loss weight {name} must be >= 0")


@dataclass
class DarilOutput:
    current_logits: nn.Tensor
    next_logits: nn.Tensor
    next_embed: nn.Tensor
    phase_logits: nn.Tensor


class DarilModel(nn.Module):
    def __init__(self, cfg: DarilConfig, vocab: TripletVocab, rng):
        self.cfg = cfg
        self.vocab_size = vocab.num_classes
        self.null_embed = nn.parameter((cfg.embed_dim,), name="null_embed")
        self.bilstm = nn.BiLSTM(cfg.embed_dim, cfg.lstm_hidden, rng)
        # recognition heads read the BiLSTM state plus a skip of the raw
        # current-frame embedding
        rec_dim = 2 * cfg.lstm_hidden + cfg.embed_dim
        self.head_current = nn.Linear(rec_dim, vocab.num_classes, rng)
        self.head_phase = nn.Linear(rec_dim, vocab.phase_count, rng)
        self.in_proj = nn.Linear(cfg.embed_dim, cfg.model_dim, rng)
        self.pos = nn.parameter((cfg.context_window, cfg.model_dim), rng, 0.02, name="pos")
        self.blocks = [
            nn.CausalSelfAttentionBlock(cfg.model_dim, cfg.n_heads, rng, mlp_ratio=2)
            for _ in range(cfg.n_blocks)
        ]
        self.ln_f = nn.LayerNorm(cfg.model_dim)
        self.head_next = nn.Linear(cfg.model_dim, vocab.num_classes, rng)
        # the embedding head reads the predicted action probabilities, so a
        # confident prediction feeds a sharp class-consistent embedding back
        # into the window during rollouts (it effectively learns one
        # embedding direction per class plus an empty-frame offset)
        self.head_embed = nn.Linear(vocab.num_classes, cfg.embed_dim, rng)

    def forward(self, windows: np.ndarray, pad_mask: np.ndarray) -> DarilOutput:
        """windows: (B, w, E) with arbitrary values at padded slots;
        pad_mask: (B, w) True where the slot is padding."""
        mask = pad_mask[:, :, None].astype(np.float64)
        x = nn.as_tensor(windows * (1.0 - mask)) + self.null_embed * nn.as_tensor(mask)
        enc = self.bilstm(x)
        last = nn.concat([enc[:, -1, :], x[:, -1, :]], axis=-1)
        current_logits = self.head_current(last)
        phase_logits = self.head_phase(last)
        h = self.in_proj(x) + self.pos
        for block in self.blocks:
            h = block(h)
        h_last = self.ln_f(h[:, -1, :])
        next_logits = self.head_next(h_last)
        next_embed = self.head_embed(nn.sigmoid(next_logits))
        return DarilOutput(current_logits, next_logits, next_embed, phase_logits)


def make_window(embeddings: np.ndarray, t: int, w: int) -> tuple:
    """Left-padded window ending at frame t; returns (window (w,E), mask (w,))."""
    E = embeddings.shape[1]
    lo = max(0, t + 1 - w)
    chunk = np.asarray(embeddings[lo : t + 1], dtype=np.float64)
    pad = w - chunk.shape[0]
    window = np.zeros((w, E))
    window[pad:] = chunk
    mask = np.zeros(w, dtype=bool)
    mask[:pad] = True
    return window, mask


def episode_windows(episode: Episode, w: int) -> tuple:
    """All anchor windows of one episode, shapes (T, w, E) and (T, w)."""
    T = len(episode)
    E = episode.embed_dim
    windows = np.zeros((T, w, E))
    masks = np.zeros((T, w), dtype=bool)
    for t in range(T):
        windows[t], masks[t] = make_window(episode.embeddings, t, w)
    return windows, masks


def daril_loss(
    out: DarilOutput,
    labels_t: np.ndarray,
    labels_next: Optional[np.ndarray],
    true_embed_next: Optional[np.ndarray],
    phase_t: np.ndarray,
    cfg: DarilConfig,
) -> tuple:
    """Weighted four-term objective. Next-frame terms are skipped when their
    targets are absent (episode-final anchors). Returns (total, components)."""
    comps = {}
    comps["current"] = nn.multilabel_bce(out.current_logits, labels_t)
    comps["phase"] = nn.softmax_ce(out.phase_logits, phase_t)
    if labels_next is not None:
        comps["next"] = nn.multilabel_bce(out.next_logits, labels_next)
    if true_embed_next is not None:
        comps["embed"] = nn.mse(out.next_embed, true_embed_next)
    weights = {
        "current": cfg.w_current,
        "next": cfg.w_next,
        "embed": cfg.w_embed,
        "phase": cfg.w_phase,
    }
    total = None
    for name, term in comps.items():
        weighted = term * weights[name]
        total = weighted if total is None else total + weighted
    return total, {k: v.item() for k, v in comps.items()}


class _AnchorSet:
    """Flat training view of a corpus: every (episode, t<T-1) anchor with
    its window, current/next targets and phase."""

    def __init__(self, episodes: list, vocab: TripletVocab, w: int):
        self.windows, self.masks = [], []
        self.labels_t, self.labels_next, self.embed_next, self.phases = [], [], [], []
        for ep in episodes:
            truth = encode_labels(ep.labels, vocab)
            wins, masks = episode_windows(ep, w)
            T = len(ep)
            if T < 2:
                continue
            self.windows.append(wins[: T - 1])
            self.masks.append(masks[: T - 1])
            self.labels_t.append(truth[: T - 1])
            self.labels_next.append(truth[1:])
            self.embed_next.append(np.asarray(ep.embeddings[1:], dtype=np.float64))
            self.phases.append(np.array([lab.phase_id for lab in ep.labels[: T - 1]], dtype=np.intp))
        if not self.windows:
            raise ValueError("corpus has no trainable anchors (all episodes shorter than 2 frames)")
        self.windows = np.concatenate(self.windows)
        self.masks = np.concatenate(self.masks)
        self.labels_t = np.concatenate(self.labels_t)
        self.labels_next = np.concatenate(self.labels_next)
        self.embed_next = np.concatenate(self.embed_next)
        self.phases = np.concatenate(self.phases)

    def __len__(self):
        return self.windows.shape[0]


def train_daril(
    episodes: list,
    vocab: TripletVocab,
    cfg: DarilConfig,
    seed: int,
    record: Optional[RunRecord] = None,
    ckpt_dir=None,
) -> DarilModel:
    """Behavior cloning on expert demonstrations (teacher forcing).

    Writes a checkpoint per epoch when ckpt_dir is given; aborts on a
    non-finite loss and restores the last finite-epoch parameters.
    """
    if not episodes:
        raise ValueError("training corpus is empty")
    stream = RngStream(seed).child("daril")
    model = DarilModel(cfg, vocab, stream.child("init").rng)
    data = _AnchorSet(episodes, vocab, cfg.context_window)
    opt = nn.Adam(model.named_params(), lr=cfg.lr)
    shuffle_rng = stream.child("shuffle").rng
    last_good = model.state_dict()
    step = 0
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(len(data))
        epoch_loss, n_batches = 0.0, 0
        for lo in range(0, len(data), cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            out = model.forward(data.windows[idx], data.masks[idx])
            total, comps = daril_loss(
                out, data.labels_t[idx], data.labels_next[idx],
                data.embed_next[idx], data.phases[idx], cfg,
            )
            if not np.isfinite(total.item()):
                model.load_state_dict(last_good)
                if record is not None:
                    record.log(step, "daril/diverged", 1.0)
                return model
            model.zero_grad()
            total.backward()
            opt.step()
            epoch_loss += total.item()
            n_batches += 1
            step += 1
        mean_loss = epoch_loss / max(n_batches, 1)
        last_good = model.state_dict()
        if record is not None:
            record.log(step, "daril/train_loss", mean_loss)
        if ckpt_dir is not None:
            save_checkpoint(f"{ckpt_dir}/daril_epoch{epoch:03d}", model.state_dict())
    if ckpt_dir is not None:
        save_checkpoint(f"{ckpt_dir}/daril_final", model.state_dict())
    return model


def plan_rollout(model: DarilModel, context: np.ndarray, horizon: int) -> np.ndarray:
    """Autoregressive planning scores for one context, shape (H, num_classes).

    Step 1 consumes the real context; each later step slides the model's
    own predicted embedding into the window. Scores are sigmoid
    probabilities.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if horizon > model.cfg.max_horizon:
        raise ValueError(f"horizon {horizon} exceeds configured max {model.cfg.max_horizon}")
    context = np.asarray(context, dtype=np.float64)
    w = model.cfg.context_window
    window = np.zeros((1, w, context.shape[1]))
    mask = np.zeros((1, w), dtype=bool)
    window[0], mask[0] = make_window(context, context.shape[0] - 1, w)
    return _rollout_batch(model, window, mask, horizon)[0]


def _rollout_batch(model: DarilModel, windows: np.ndarray, masks: np.ndarray, horizon: int) -> np.ndarray:
    """(B, w, E) windows -> (B, H, C) sigmoid planning scores, no tape."""
    B = windows.shape[0]
    scores = np.empty((B, horizon, model.vocab_size))
    win = windows.copy()
    msk = masks.copy()
    with nn.no_grad():
        for h in range(horizon):
            out = model.forward(win, msk)
            scores[:, h, :] = 1.0 / (1.0 + np.exp(-out.next_logits.data))
            if h + 1 < horizon:
                pred = out.next_embed.data
                win = np.concatenate([win[:, 1:, :], pred[:, None, :]], axis=1)
                msk = np.concatenate([msk[:, 1:], np.zeros((B, 1), dtype=bool)], axis=1)
    return scores


class DarilAdapter:
    """Planning-adapter view of a trained model for the horizon sweep."""

    def __init__(self, model: DarilModel, chunk: int = 256):
        self.model = model
        self.chunk = chunk

    def plan(self, episode: Episode, max_h: int) -> np.ndarray:
        windows, masks = episode_windows(episode, self.model.cfg.context_window)
        T = windows.shape[0]
        out = np.empty((T, max_h, self.model.vocab_size))
        for lo in range(0, T, self.chunk):
            hi = min(lo + self.chunk, T)
            out[lo:hi] = _rollout_batch(self.model, windows[lo:hi], masks[lo:hi], max_h)
        return out

    def recognition(self, episode: Episode) -> np.ndarray:
        windows, masks = episode_windows(episode, self.model.cfg.context_window)
        T = windows.shape[0]
        out = np.empty((T, self.model.vocab_size))
        with nn.no_grad():
            for lo in range(0, T, self.chunk):
                hi = min(lo + self.chunk, T)
                res = self.model.forward(windows[lo:hi], masks[lo:hi])
                out[lo:hi] = 1.0 / (1.0 + np.exp(-res.current_logits.data))
        return out
