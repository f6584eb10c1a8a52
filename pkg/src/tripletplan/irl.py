"""Maximum-entropy-style reward learning from expert trajectories.

A pairwise contrastive surrogate replaces the intractable partition
function over the 2^100 action space: the reward net is trained to rank
the expert action above sampled negatives (1-3 bit flips) given the state,
maximizing log sigma(R(s,a+) - R(s,a-)). Fine-tuning then runs PPO with
the learned reward plus a behavior-cloning anchor that keeps the policy
near its imitation initialization.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import nn
from .core import RngStream, TripletVocab, encode_labels
from .daril import DarilConfig, episode_windows
from .dataio import RunRecord
from .directrl import PolicyNet, PpoConfig, train_direct_rl
from .worldmodel import SUMMARY_TAPS, window_summary


@dataclass
class IrlConfig:
    context_window: int = 20
    embed_dim: int = 128
    hidden: int = 128
    lr: float = 2e-3
    epochs: int = 12
    batch_size: int = 128
    flip_probs: tuple = (0.5, 0.3, 0.2)  # over flip counts {1, 2, 3}
    beta: float = 0.5  # behavior-cloning anchor weight for fine-tuning

    def __post_init__(self):
        p = np.asarray(self.flip_probs, dtype=np.float64)
        if p.shape != (3,) or abs(p.sum() - 1.0) > 1e-9 or np.any(p < 0):
            raise ValueError("flip_probs must be a distribution over {1,2,3}")


class NegativeSampler:
    """Draws actions deviating from the expert multi-hot by 1-3 bit flips.

    Flip positions are distinct, so the Hamming distance equals the drawn
    flip count and is always >= 1.
    """

    def __init__(self, flip_probs, stream: RngStream):
        self.flip_probs = np.asarray(flip_probs, dtype=np.float64)
        self.rng = stream.rng

    def sample(self, expert: np.ndarray) -> np.ndarray:
        out = expert.copy()
        k = int(self.rng.choice(3, p=self.flip_probs)) + 1
        flips = self.rng.choice(out.shape[0], size=k, replace=False)
        out[flips] = 1.0 - out[flips]
        return out

    def sample_batch(self, experts: np.ndarray) -> np.ndarray:
        return np.stack([self.sample(e) for e in experts])


class RewardNet(nn.Module):
    """R(state window summary, action multi-hot) -> scalar.

    Linear-in-action form: R(s, a) = a . u(s), with per-class utilities
    u(s) from a state MLP. For pairwise ranking this family contains the
    Bayes-optimal discriminator (log-likelihood differences of factorized
    action models are linear in the action bits), and it avoids the
    overfitting a free-form (state, action) mixer shows on desk-scale data.
    """

    def __init__(self, cfg: IrlConfig, vocab: TripletVocab, rng):
        self.cfg = cfg
        self.state_fc = nn.Linear((1 + len(SUMMARY_TAPS)) * cfg.embed_dim, cfg.hidden, rng)
        self.utilities = nn.Linear(cfg.hidden, vocab.num_classes, rng)

    def class_utilities(self, summaries: np.ndarray) -> nn.Tensor:
        return self.utilities(nn.tanh(self.state_fc(nn.as_tensor(summaries))))

    def score(self, summaries: np.ndarray, actions: np.ndarray) -> nn.Tensor:
        u = self.class_utilities(summaries)
        return (u * nn.as_tensor(actions)).sum(axis=-1)

    def score_np(self, summaries: np.ndarray, actions: np.ndarray) -> np.ndarray:
        with nn.no_grad():
            return self.score(summaries, actions).data.copy()


def ranking_auc(pos_scores: np.ndarray, neg_scores: np.ndarray) -> float:
    """P(R+ > R-) with ties counted half (Mann-Whitney), rank-sum form.

    Invariant under any strictly increasing transform of the scores."""
    pos = np.asarray(pos_scores, dtype=np.float64)
    neg = np.asarray(neg_scores, dtype=np.float64)
    if pos.size == 0 or neg.size == 0:
        raise ValueError("AUC needs both positive and negative scores")
    combined = np.concatenate([pos, neg])
    order = np.argsort(combined, kind="mergesort")
    ranks = np.empty(combined.size)
    ranks[order] = np.arange(1, combined.size + 1)
    # average ranks across ties
    sorted_vals = combined[order]
    i = 0
    while i < sorted_vals.size:
        j = i
        while j + 1 < sorted_vals.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        if j > i:
            ranks[order[i : j + 1]] = ranks[order[i : j + 1]].mean()
        i = j + 1
    rank_sum = ranks[: pos.size].sum()
    u = rank_sum - pos.size * (pos.size + 1) / 2.0
    return float(u / (pos.size * neg.size))


class _PairSet:
    def __init__(self, episodes: list, vocab: TripletVocab, w: int):
        states, experts = [], []
        for ep in episodes:
            truth = encode_labels(ep.labels, vocab)
            wins, masks = episode_windows(ep, w)
            T = len(ep)
            if T < 2:
                continue
            states.append(window_summary(wins[: T - 1], masks[: T - 1]))
            experts.append(truth[1:])
        if not states:
            raise ValueError("no expert transitions available")
        self.states = np.concatenate(states)
        self.experts = np.concatenate(experts)

    def __len__(self):
        return self.states.shape[0]


def train_reward(
    train_episodes: list,
    val_episodes: list,
    vocab: TripletVocab,
    cfg: IrlConfig,
    seed: int,
    record: Optional[RunRecord] = None,
) -> tuple:
    """Contrastive reward learning. Returns (reward_net, held-out AUC)."""
    stream = RngStream(seed).child("irl")
    net = RewardNet(cfg, vocab, stream.child("init").rng)
    sampler = NegativeSampler(cfg.flip_probs, stream.child("negatives"))
    data = _PairSet(train_episodes, vocab, cfg.context_window)
    val = _PairSet(val_episodes, vocab, cfg.context_window)
    opt = nn.Adam(net.named_params(), lr=cfg.lr)
    shuffle = stream.child("shuffle").rng
    step = 0
    for epoch in range(cfg.epochs):
        order = shuffle.permutation(len(data))
        for lo in range(0, len(data), cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            pos = data.experts[idx]
            neg = sampler.sample_batch(pos)
            r_pos = net.score(data.states[idx], pos)
            r_neg = net.score(data.states[idx], neg)
            loss = nn.logsigmoid(r_pos - r_neg).mean() * -1.0
            if not np.isfinite(loss.item()):
                raise FloatingPointError("reward training diverged")
            net.zero_grad()
            loss.backward()
            opt.step()
            step += 1
        if record is not None:
            record.log(step, "irl/pair_loss", loss.item())
    val_sampler = NegativeSampler(cfg.flip_probs, stream.child("val_negatives"))
    val_neg = val_sampler.sample_batch(val.experts)
    auc = ranking_auc(net.score_np(val.states, val.experts), net.score_np(val.states, val_neg))
    if record is not None:
        record.log(step, "irl/heldout_auc", auc)
    return net, auc


def finetune_with_reward(
    daril_state: dict,
    reward_net: RewardNet,
    episodes: list,
    vocab: TripletVocab,
    arch: DarilConfig,
    cfg: PpoConfig,
    seed: int,
    record: Optional[RunRecord] = None,
) -> PolicyNet:
    """PPO fine-tuning of a DARIL-initialized policy under the learned
    reward, with a behavior-cloning anchor (cfg.bc_coef) holding it near
    the imitation baseline."""

    def learned_reward(windows, masks, actions):
        return reward_net.score_np(window_summary(windows, masks), actions)

    return train_direct_rl(
        episodes,
        vocab,
        arch,
        cfg,
        seed,
        algo="ppo",
        init_state=daril_state,
        record=record,
        reward_model=learned_reward,
        track_expert=True,
    )
