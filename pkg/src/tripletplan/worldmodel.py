"""Action-conditioned latent dynamics learned from demonstrations, plus
policy optimization run entirely inside imagined rollouts.

Latents are deterministic (tanh-bounded); the reward head is trained on
expert transitions and on corrupted-action transitions relabeled with the
true cosine reward, otherwise it would collapse to the constant 1 the
expert data exhibits. The environment's frame stream is exogenous, so the
dynamics target does not depend on the action taken; the action input
still conditions the head (and matters to the reward).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import nn
from .core import RngStream, TripletVocab, encode_labels
from .daril import episode_windows
from .dataio import RunRecord
from .directrl import PpoConfig, RolloutBuffer, sample_action, ppo_update
from .synthenv import cosine_reward


@dataclass
class WorldModelConfig:
    context_window: int = 20
    embed_dim: int = 128
    latent_dim: int = 32
    hidden: int = 64
    lr: float = 2e-3
    epochs: int = 12
    batch_size: int = 128
    corrupt_per_expert: int = 1
    imagine_horizon: int = 10
    max_imagine_horizon: int = 30

    def __post_init__(self):
        if self.imagine_horizon < 1 or self.imagine_horizon > self.max_imagine_horizon:
            raise ValueError("imagine horizon out of range")


SUMMARY_TAPS = (-1, -2, -3, -4, -5, -6, -7, -8)


def window_summary(windows: np.ndarray, masks: np.ndarray) -> np.ndarray:
    """(B, 9E) flat window features: mean over real frames plus the last
    eight frames individually. The per-frame taps expose how long the
    current action set has been running (one full scripted duration),
    which both the latent encoder and the reward net need."""
    real = (~masks)[:, :, None].astype(np.float64)
    counts = np.maximum(real.sum(axis=1), 1.0)
    mean = (windows * real).sum(axis=1) / counts
    w = windows.shape[1]
    taps = [windows[:, tap, :] * real[:, tap, :] if w + tap >= 0 else np.zeros_like(mean) for tap in SUMMARY_TAPS]
    return np.concatenate([mean] + taps, axis=1)


class WorldModel(nn.Module):
    def __init__(self, cfg: WorldModelConfig, vocab: TripletVocab, rng):
        self.cfg = cfg
        self.vocab_size = vocab.num_classes
        Z, H = cfg.latent_dim, cfg.hidden
        self.enc = nn.Linear((1 + len(SUMMARY_TAPS)) * cfg.embed_dim, Z, rng)
        self.dyn1 = nn.Linear(Z + vocab.num_classes, H, rng)
        self.dyn2 = nn.Linear(H, Z, rng)
        self.rew1 = nn.Linear(Z + vocab.num_classes, H, rng)
        self.rew2 = nn.Linear(H, 1, rng)
        self.dec = nn.Linear(Z, cfg.embed_dim, rng)

    def encode(self, summaries: np.ndarray) -> nn.Tensor:
        return nn.tanh(self.enc(nn.as_tensor(summaries)))

    def dynamics(self, z, actions) -> nn.Tensor:
        za = nn.concat([z, nn.as_tensor(actions)], axis=-1)
        return nn.tanh(self.dyn2(nn.tanh(self.dyn1(za))))

    def reward(self, z, actions) -> nn.Tensor:
        za = nn.concat([z, nn.as_tensor(actions)], axis=-1)
        return nn.sigmoid(self.rew2(nn.tanh(self.rew1(za)))).reshape(-1)

    def reconstruct(self, z) -> nn.Tensor:
        return self.dec(z)


def _corrupt(action: np.ndarray, rng) -> np.ndarray:
    """Corrupted action for reward-head training: half near-expert (1-3 bit
    flips), half far (dense random multi-hots). The far samples keep the
    head informative for policies early in training, whose actions are
    nothing like the expert's sparse vectors."""
    C = action.shape[0]
    if rng.random() < 0.5:
        out = action.copy()
        k = int(rng.integers(1, 4))
        flips = rng.choice(C, size=k, replace=False)
        out[flips] = 1.0 - out[flips]
        return out
    density = rng.uniform(0.0, 0.5)
    return (rng.random(C) < density).astype(np.float64)


class _TransitionSet:
    """Flattened (state summary, expert action, next summary, current embed)
    tuples over a corpus."""

    def __init__(self, episodes: list, vocab: TripletVocab, w: int):
        s_t, s_next, a_t, e_t = [], [], [], []
        for ep in episodes:
            truth = encode_labels(ep.labels, vocab)
            wins, masks = episode_windows(ep, w)
            summaries = window_summary(wins, masks)
            T = len(ep)
            if T < 2:
                continue
            s_t.append(summaries[: T - 1])
            s_next.append(summaries[1:])
            a_t.append(truth[1:])  # expert action at t predicts frame t+1
            e_t.append(np.asarray(ep.embeddings[: T - 1], dtype=np.float64))
        if not s_t:
            raise ValueError("no transitions in corpus")
        self.s_t = np.concatenate(s_t)
        self.s_next = np.concatenate(s_next)
        self.a_t = np.concatenate(a_t)
        self.e_t = np.concatenate(e_t)

    def __len__(self):
        return self.s_t.shape[0]


def one_step_latent_mse(model: WorldModel, data: _TransitionSet) -> float:
    """One-step prediction error, normalized by the target latents' variance.

    Training reshapes the latent space (the reconstruction anchor inflates
    its scale), so raw MSE is not comparable between an untrained and a
    trained model; dividing by Var(z_next) makes the error scale-free
    (1.0 ~ predicting the mean, 0 ~ perfect)."""
    with nn.no_grad():
        z = model.encode(data.s_t)
        z_next = model.encode(data.s_next)
        pred = model.dynamics(z, data.a_t)
    diff = pred.data - z_next.data
    var = z_next.data.var()
    return float((diff * diff).mean() / max(var, 1e-12))


def train_world_model(
    train_episodes: list,
    val_episodes: list,
    vocab: TripletVocab,
    cfg: WorldModelConfig,
    seed: int,
    record: Optional[RunRecord] = None,
) -> WorldModel:
    """Minimize one-step latent error + reward error + reconstruction error.

    Latent targets are stop-gradient encodings of the next window; the
    reconstruction term anchors the latent space against collapse.
    """
    stream = RngStream(seed).child("worldmodel")
    model = WorldModel(cfg, vocab, stream.child("init").rng)
    data = _TransitionSet(train_episodes, vocab, cfg.context_window)
    val = _TransitionSet(val_episodes, vocab, cfg.context_window)
    if record is not None:
        record.log(0, "wm/val_latent_mse", one_step_latent_mse(model, val))
    opt = nn.Adam(model.named_params(), lr=cfg.lr)
    shuffle = stream.child("shuffle").rng
    corrupt_rng = stream.child("corrupt").rng
    step = 0
    for epoch in range(cfg.epochs):
        order = shuffle.permutation(len(data))
        for lo in range(0, len(data), cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            s = data.s_t[idx]
            a_pos = data.a_t[idx]
            # corrupted actions, relabeled with the true cosine reward
            reps = [a_pos]
            rewards = [np.ones(len(idx))]
            for _ in range(cfg.corrupt_per_expert):
                neg = np.stack([_corrupt(a, corrupt_rng) for a in a_pos])
                reps.append(neg)
                rewards.append(
                    np.array([cosine_reward(n, t) for n, t in zip(neg, a_pos)])
                )
            actions = np.concatenate(reps)
            true_r = np.concatenate(rewards)
            s_rep = np.concatenate([s] * (1 + cfg.corrupt_per_expert))
            z = model.encode(s_rep)
            with nn.no_grad():
                z_next_target = model.encode(np.concatenate([data.s_next[idx]] * (1 + cfg.corrupt_per_expert))).data
            latent_loss = nn.mse(model.dynamics(z, actions), z_next_target)
            reward_loss = nn.mse(model.reward(z, actions), true_r)
            recon_loss = nn.mse(model.reconstruct(model.encode(s)), data.e_t[idx])
            loss = latent_loss + reward_loss + recon_loss
            if not np.isfinite(loss.item()):
                raise FloatingPointError("world model training diverged")
            model.zero_grad()
            loss.backward()
            opt.step()
            step += 1
        if record is not None:
            record.log(step, "wm/latent_loss", latent_loss.item())
            record.log(step, "wm/reward_loss", reward_loss.item())
            record.log(step, "wm/recon_loss", recon_loss.item())
    if record is not None:
        record.log(step, "wm/val_latent_mse", one_step_latent_mse(model, val))
    return model


def open_loop_errors(model: WorldModel, episodes: list, vocab: TripletVocab, ks=(1, 5, 10)) -> dict:
    """Mean k-step open-loop latent prediction error (expert actions fed)."""
    w = model.cfg.context_window
    max_k = max(ks)
    errs = {k: [] for k in ks}
    with nn.no_grad():
        for ep in episodes:
            T = len(ep)
            if T <= max_k:
                continue
            truth = encode_labels(ep.labels, vocab)
            wins, masks = episode_windows(ep, w)
            summaries = window_summary(wins, masks)
            z_all = model.encode(summaries).data
            n = T - max_k
            z = nn.Tensor(z_all[:n].copy())
            for k in range(1, max_k + 1):
                actions = truth[k : k + n]  # expert action leading into frame t+k
                z = model.dynamics(z, actions)
                if k in errs:
                    diff = z.data - z_all[k : k + n]
                    errs[k].append((diff * diff).mean())
    return {k: float(np.mean(v)) for k, v in errs.items() if v}


@dataclass
class ImaginationBatch:
    latents: np.ndarray  # (K, B, Z) state at each imagined step
    actions: np.ndarray  # (K, B, C)
    rewards: np.ndarray  # (K, B)
    log_probs: np.ndarray  # (K, B)
    values: np.ndarray  # (K, B)
    bootstrap: np.ndarray  # (B,) value of the final imagined state


class LatentPolicy(nn.Module):
    """Actor-critic over world-model latents."""

    def __init__(self, latent_dim: int, hidden: int, vocab: TripletVocab, rng):
        self.latent_dim = latent_dim
        self.vocab_size = vocab.num_classes
        self.fc = nn.Linear(latent_dim, hidden, rng)
        self.actor = nn.Linear(hidden, vocab.num_classes, rng)
        # start sparse: a coin-flip policy over 100 classes sits in the
        # reward head's dead zone (dense actions score ~0 with no gradient)
        self.actor.b.data[:] = -3.0
        self.critic = nn.Linear(hidden, 1, rng)

    def evaluate(self, latents: np.ndarray, _mask=None):
        h = nn.tanh(self.fc(nn.as_tensor(latents)))
        return self.actor(h), self.critic(h).reshape(-1)

    def action_probs(self, latents: np.ndarray) -> np.ndarray:
        with nn.no_grad():
            logits, _ = self.evaluate(latents)
        return 1.0 / (1.0 + np.exp(-logits.data))


def imagine(
    model: WorldModel,
    policy: LatentPolicy,
    start_latents: np.ndarray,
    horizon: int,
    stream: RngStream,
) -> ImaginationBatch:
    """Closed-loop rollout inside the learned model; no environment access."""
    if horizon < 1:
        raise ValueError("imagination horizon must be >= 1")
    if horizon > model.cfg.max_imagine_horizon:
        raise ValueError(f"horizon {horizon} exceeds max {model.cfg.max_imagine_horizon}")
    B = start_latents.shape[0]
    Z = start_latents.shape[1]
    rng = stream.rng
    latents = np.empty((horizon, B, Z))
    actions = np.empty((horizon, B, model.vocab_size))
    rewards = np.empty((horizon, B))
    log_probs = np.empty((horizon, B))
    values = np.empty((horizon, B))
    z = start_latents.copy()
    with nn.no_grad():
        for k in range(horizon):
            logits, vals = policy.evaluate(z)
            act, lp = sample_action(logits.data, rng)
            latents[k] = z
            actions[k] = act
            log_probs[k] = lp
            values[k] = vals.data
            rewards[k] = model.reward(nn.Tensor(z), act).data
            z = model.dynamics(nn.Tensor(z), act).data
        _, boot = policy.evaluate(z)
    return ImaginationBatch(latents, actions, rewards, log_probs, values, boot.data.copy())


def train_policy_in_latent(
    model: WorldModel,
    start_episodes: list,
    vocab: TripletVocab,
    cfg: PpoConfig,
    seed: int,
    record: Optional[RunRecord] = None,
) -> LatentPolicy:
    """PPO on imagined transitions only; evaluation happens against the real
    environment through the encoder."""
    stream = RngStream(seed).child("latent_rl")
    policy = LatentPolicy(model.cfg.latent_dim, model.cfg.hidden, vocab, stream.child("init").rng)
    opt = nn.Adam(policy.named_params(), lr=cfg.lr)
    data = _TransitionSet(start_episodes, vocab, model.cfg.context_window)
    start_rng = stream.child("starts").rng
    imagine_stream = stream.child("imagine")
    update_stream = stream.child("updates")
    K = model.cfg.imagine_horizon
    n_starts = max(1, cfg.steps_per_update // K)
    for u in range(cfg.updates):
        idx = start_rng.choice(len(data), size=n_starts, replace=False)
        with nn.no_grad():
            z0 = model.encode(data.s_t[idx]).data
        batch = imagine(model, policy, z0, K, imagine_stream.child(u))
        buffer = RolloutBuffer()
        dones = np.zeros(n_starts)
        for k in range(K):
            buffer.add(
                batch.latents[k],
                np.zeros((n_starts, 1), dtype=bool),  # mask stub: latents carry no padding
                batch.actions[k],
                batch.log_probs[k],
                batch.rewards[k],
                batch.values[k],
                dones,
            )
        buffer.finalize(batch.bootstrap, cfg.gamma, cfg.gae_lambda)
        stats = ppo_update(buffer, policy, opt, cfg, update_stream.child(u))
        if record is not None:
            record.log(u, "latent_rl/imagined_reward", float(batch.rewards.mean()))
            for key, val in stats.items():
                record.log(u, f"latent_rl/{key}", val)
        if stats.get("aborted"):
            break
    return policy


class LatentPolicyAdapter:
    """Real-environment evaluation of a latent policy via the encoder."""

    def __init__(self, model: WorldModel, policy: LatentPolicy, chunk: int = 512):
        self.model = model
        self.policy = policy
        self.chunk = chunk

    def plan(self, episode, max_h: int) -> np.ndarray:
        wins, masks = episode_windows(episode, self.model.cfg.context_window)
        summaries = window_summary(wins, masks)
        T = wins.shape[0]
        probs = np.empty((T, self.model.vocab_size))
        with nn.no_grad():
            for lo in range(0, T, self.chunk):
                hi = min(lo + self.chunk, T)
                z = self.model.encode(summaries[lo:hi]).data
                probs[lo:hi] = self.policy.action_probs(z)
        return np.repeat(probs[:, None, :], max_h, axis=1)

    def recognition(self, episode):
        return None
