"""Model-free policy optimization (PPO and A2C) on the sequence environment.

The action space is factorized Bernoulli over the joint triplet vocabulary
(the only representation matching 0-3 simultaneous actions per frame
without a 2^100 joint space). The policy mirrors the imitation model's
causal-decoder pathway so a warm start is an exact parameter copy and
step-0 evaluation matches the imitation scores bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import nn
from . import _kernels as kernels
from .core import RngStream, TripletVocab
from .daril import DarilConfig, episode_windows, make_window
from .dataio import RunRecord
from .synthenv import TripletEnv


@dataclass
class PpoConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    epochs: int = 4
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    lr: float = 3e-4
    steps_per_update: int = 256
    n_envs: int = 8
    updates: int = 40
    minibatch_size: int = 256
    cardinality_coef: float = 0.0
    bc_coef: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if self.clip_eps <= 0:
            raise ValueError("clip epsilon must be positive")


class PolicyNet(nn.Module):
    """Actor-critic over the frame-embedding window.

    Shares attribute names with the imitation model's decoder pathway
    (null_embed, in_proj, pos, blocks, ln_f, head_next) so
    load_state_dict(daril_state, strict=False) is a warm start; the critic
    head is policy-only.
    """

    def __init__(self, arch: DarilConfig, vocab: TripletVocab, rng):
        self.cfg = arch
        self.vocab_size = vocab.num_classes
        self.null_embed = nn.parameter((arch.embed_dim,), name="null_embed")
        self.in_proj = nn.Linear(arch.embed_dim, arch.model_dim, rng)
        self.pos = nn.parameter((arch.context_window, arch.model_dim), rng, 0.02, name="pos")
        self.blocks = [
            nn.CausalSelfAttentionBlock(arch.model_dim, arch.n_heads, rng, mlp_ratio=2)
            for _ in range(arch.n_blocks)
        ]
        self.ln_f = nn.LayerNorm(arch.model_dim)
        self.head_next = nn.Linear(arch.model_dim, vocab.num_classes, rng)
        self.critic = nn.Linear(arch.model_dim, 1, rng)

    def evaluate(self, windows: np.ndarray, pad_mask: np.ndarray):
        """Returns (actor logits (B,C), values (B,)) as tape tensors."""
        mask = pad_mask[:, :, None].astype(np.float64)
        x = nn.as_tensor(windows * (1.0 - mask)) + self.null_embed * nn.as_tensor(mask)
        h = self.in_proj(x) + self.pos
        for block in self.blocks:
            h = block(h)
        h_last = self.ln_f(h[:, -1, :])
        return self.head_next(h_last), self.critic(h_last).reshape(-1)

    def action_probs(self, windows: np.ndarray, pad_mask: np.ndarray) -> np.ndarray:
        with nn.no_grad():
            logits, _ = self.evaluate(windows, pad_mask)
        return 1.0 / (1.0 + np.exp(-logits.data))


def sample_action(logits: np.ndarray, rng) -> tuple:
    """Independent Bernoulli per class. Returns (binary actions, log_prob)."""
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise ValueError("non-finite policy logits")
    p = 1.0 / (1.0 + np.exp(-logits))
    actions = (rng.random(p.shape) < p).astype(np.float64)
    # stable per-class log-likelihood: a*log(sigmoid) + (1-a)*log(1-sigmoid)
    logsig = np.minimum(logits, 0.0) - np.log1p(np.exp(-np.abs(logits)))
    log_prob = (actions * logsig + (1.0 - actions) * (logsig - logits)).sum(axis=-1)
    return actions, log_prob


def bernoulli_log_prob(logits: nn.Tensor, actions: np.ndarray) -> nn.Tensor:
    """Differentiable joint log-likelihood of binary action vectors."""
    pos = nn.logsigmoid(logits)
    neg = nn.logsigmoid(logits * -1.0)
    return (nn.as_tensor(actions) * pos + nn.as_tensor(1.0 - actions) * neg).sum(axis=-1)


def bernoulli_entropy(logits: nn.Tensor) -> nn.Tensor:
    """Mean per-sample entropy of the factorized action distribution."""
    p = nn.sigmoid(logits)
    pos = nn.logsigmoid(logits)
    neg = nn.logsigmoid(logits * -1.0)
    per_class = p * pos + (1.0 - p) * neg
    return per_class.sum(axis=-1).mean() * -1.0


def gae(rewards, values, dones, gamma: float, lam: float) -> tuple:
    """Generalized advantage estimation; values carries one bootstrap entry
    beyond the last reward. Returns (advantages, returns)."""
    rewards = np.ascontiguousarray(rewards, dtype=np.float64)
    values = np.ascontiguousarray(values, dtype=np.float64)
    dones = np.ascontiguousarray(dones, dtype=np.float64)
    if values.shape[0] != rewards.shape[0] + 1:
        raise ValueError("values must append a terminal bootstrap entry")
    return kernels.gae_scan(rewards, values, dones, float(gamma), float(lam))


class RolloutBuffer:
    """Fixed-size on-policy batch: (T, n_envs) layout until finalized."""

    def __init__(self):
        self.windows, self.masks, self.actions = [], [], []
        self.log_probs, self.rewards, self.values, self.dones = [], [], [], []
        self.expert_actions = []
        self.advantages = None
        self.returns = None

    def add(self, windows, masks, actions, log_probs, rewards, values, dones, expert=None):
        self.windows.append(windows)
        self.masks.append(masks)
        self.actions.append(actions)
        self.log_probs.append(log_probs)
        self.rewards.append(rewards)
        self.values.append(values)
        self.dones.append(dones)
        if expert is not None:
            self.expert_actions.append(expert)

    def finalize(self, bootstrap_values: np.ndarray, gamma: float, lam: float):
        """GAE per environment stream, then flatten to (T*n_envs, ...)."""
        rewards = np.stack(self.rewards)  # (T, n_envs)
        values = np.stack(self.values)
        dones = np.stack(self.dones)
        T, n_envs = rewards.shape
        adv = np.empty((T, n_envs))
        ret = np.empty((T, n_envs))
        for e in range(n_envs):
            v = np.append(values[:, e], bootstrap_values[e])
            adv[:, e], ret[:, e] = gae(rewards[:, e], v, dones[:, e], gamma, lam)
        self.advantages = adv.reshape(-1)
        self.returns = ret.reshape(-1)
        flat = lambda chunks: np.concatenate([c[None] for c in chunks]).reshape(-1, *chunks[0].shape[1:])
        self.windows = flat(self.windows)
        self.masks = flat(self.masks)
        self.actions = flat(self.actions)
        self.log_probs = np.stack(self.log_probs).reshape(-1)
        self.rewards_flat = rewards.reshape(-1)
        if self.expert_actions:
            self.expert_actions = flat(self.expert_actions)
        else:
            self.expert_actions = None

    def __len__(self):
        return self.windows.shape[0] if isinstance(self.windows, np.ndarray) else 0


def _normalized_advantages(buffer: RolloutBuffer) -> np.ndarray:
    adv = buffer.advantages
    std = adv.std()
    return (adv - adv.mean()) / max(std, 1e-8)


def _policy_objective(policy, buffer, idx, adv_norm, cfg: PpoConfig, clipped: bool):
    logits, values = policy.evaluate(buffer.windows[idx], buffer.masks[idx])
    new_logp = bernoulli_log_prob(logits, buffer.actions[idx])
    adv = adv_norm[idx]
    if clipped:
        ratio = nn.exp(new_logp - nn.as_tensor(buffer.log_probs[idx]))
        surr = nn.minimum(ratio * adv, nn.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv)
        policy_loss = surr.mean() * -1.0
        kl = float(np.mean(buffer.log_probs[idx] - new_logp.data))
    else:
        policy_loss = (new_logp * adv).mean() * -1.0
        kl = 0.0
    value_loss = nn.mse(values, buffer.returns[idx])
    entropy = bernoulli_entropy(logits)
    loss = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy
    if cfg.cardinality_coef > 0:
        excess = nn.relu(nn.sigmoid(logits).sum(axis=-1) - 3.0).mean()
        loss = loss + cfg.cardinality_coef * excess
    if cfg.bc_coef > 0 and buffer.expert_actions is not None:
        loss = loss + cfg.bc_coef * nn.multilabel_bce(logits, buffer.expert_actions[idx])
    stats = {
        "policy_loss": policy_loss.item(),
        "value_loss": value_loss.item(),
        "entropy": entropy.item(),
        "kl": kl,
    }
    return loss, stats


def ppo_update(buffer: RolloutBuffer, policy, opt: nn.Adam, cfg: PpoConfig, stream: RngStream) -> dict:
    """Clipped-surrogate update over several epochs of minibatches.

    A non-finite loss aborts the whole update and restores the parameters
    from before it."""
    adv_norm = _normalized_advantages(buffer)
    backup = policy.state_dict()
    rng = stream.rng
    stats = {}
    n = len(buffer)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for lo in range(0, n, cfg.minibatch_size):
            idx = order[lo : lo + cfg.minibatch_size]
            loss, stats = _policy_objective(policy, buffer, idx, adv_norm, cfg, clipped=True)
            if not np.isfinite(loss.item()):
                policy.load_state_dict(backup)
                stats["aborted"] = 1.0
                return stats
            policy.zero_grad()
            loss.backward()
            opt.step()
    return stats


def a2c_update(buffer: RolloutBuffer, policy, opt: nn.Adam, cfg: PpoConfig, stream: RngStream) -> dict:
    """Unclipped policy-gradient counterpart: one full-batch pass."""
    adv_norm = _normalized_advantages(buffer)
    backup = policy.state_dict()
    idx = np.arange(len(buffer))
    loss, stats = _policy_objective(policy, buffer, idx, adv_norm, cfg, clipped=False)
    if not np.isfinite(loss.item()):
        policy.load_state_dict(backup)
        stats["aborted"] = 1.0
        return stats
    policy.zero_grad()
    loss.backward()
    opt.step()
    return stats


class EpisodeCycler:
    """Deterministically shuffled endless episode source (the env factory)."""

    def __init__(self, episodes: list, vocab: TripletVocab, window: int, stream: RngStream):
        if not episodes:
            raise ValueError("need at least one episode")
        self.episodes = list(episodes)
        self.vocab = vocab
        self.window = window
        self.rng = stream.rng
        self._queue: list = []

    def next_env(self) -> TripletEnv:
        if not self._queue:
            self._queue = list(self.rng.permutation(len(self.episodes)))
        ep = self.episodes[int(self._queue.pop())]
        env = TripletEnv(ep, self.vocab, self.window)
        env.reset()
        return env


def _env_window(env: TripletEnv, w: int) -> tuple:
    ctx = env.state().context
    return make_window(ctx, ctx.shape[0] - 1, w)


def train_direct_rl(
    episodes: list,
    vocab: TripletVocab,
    arch: DarilConfig,
    cfg: PpoConfig,
    seed: int,
    algo: str = "ppo",
    init_state: Optional[dict] = None,
    record: Optional[RunRecord] = None,
    reward_model: Optional[Callable] = None,
    track_expert: bool = False,
) -> PolicyNet:
    """On-policy training against the sequence environment.

    init_state warm-starts the decoder pathway from an imitation
    checkpoint. reward_model, when given, replaces the environment's
    cosine reward (used by the inverse-RL fine-tuner); the environment
    still drives the trajectory. Mean episode reward per update is logged
    under `<algo>/reward`.
    """
    if algo not in ("ppo", "a2c"):
        raise ValueError(f"unknown algorithm {algo!r}")
    stream = RngStream(seed).child(("direct_rl", algo))
    policy = PolicyNet(arch, vocab, stream.child("init").rng)
    if init_state is not None:
        policy.load_state_dict(init_state, strict=False)
    opt = nn.Adam(policy.named_params(), lr=cfg.lr)
    cycler = EpisodeCycler(episodes, vocab, arch.context_window, stream.child("episodes"))
    act_rng = stream.child("actions").rng
    update_stream = stream.child("updates")
    w = arch.context_window
    envs = [cycler.next_env() for _ in range(cfg.n_envs)]
    steps_per_env = max(1, cfg.steps_per_update // cfg.n_envs)
    update = a2c_update if algo == "a2c" else ppo_update
    for u in range(cfg.updates):
        buffer = RolloutBuffer()
        for _ in range(steps_per_env):
            wins = np.empty((cfg.n_envs, w, arch.embed_dim))
            msks = np.empty((cfg.n_envs, w), dtype=bool)
            for e, env in enumerate(envs):
                wins[e], msks[e] = _env_window(env, w)
            with nn.no_grad():
                logits_t, values_t = policy.evaluate(wins, msks)
            actions, log_probs = sample_action(logits_t.data, act_rng)
            rewards = np.empty(cfg.n_envs)
            dones = np.empty(cfg.n_envs)
            expert = np.empty((cfg.n_envs, vocab.num_classes)) if track_expert else None
            for e, env in enumerate(envs):
                if track_expert:
                    expert[e] = env.expert_action()
                _, r, done = env.step(actions[e])
                rewards[e] = r
                dones[e] = float(done)
                if done:
                    envs[e] = cycler.next_env()
            if reward_model is not None:
                rewards = np.asarray(reward_model(wins, msks, actions), dtype=np.float64)
            buffer.add(wins, msks, actions, log_probs, rewards, values_t.data.copy(), dones, expert)
        wins = np.empty((cfg.n_envs, w, arch.embed_dim))
        msks = np.empty((cfg.n_envs, w), dtype=bool)
        for e, env in enumerate(envs):
            wins[e], msks[e] = _env_window(env, w)
        with nn.no_grad():
            _, boot = policy.evaluate(wins, msks)
        buffer.finalize(boot.data, cfg.gamma, cfg.gae_lambda)
        stats = update(buffer, policy, opt, cfg, update_stream.child(u))
        if record is not None:
            record.log(u, f"{algo}/reward", float(buffer.rewards_flat.mean()))
            for key, val in stats.items():
                record.log(u, f"{algo}/{key}", val)
        if stats.get("aborted"):
            break
    return policy


class PolicyAdapter:
    """Evaluation view: actor probabilities as planning scores at every
    horizon (model-free policies have no forward model to roll)."""

    def __init__(self, policy: PolicyNet, chunk: int = 256):
        self.policy = policy
        self.chunk = chunk

    def plan(self, episode, max_h: int) -> np.ndarray:
        windows, masks = episode_windows(episode, self.policy.cfg.context_window)
        T = windows.shape[0]
        probs = np.empty((T, self.policy.vocab_size))
        for lo in range(0, T, self.chunk):
            hi = min(lo + self.chunk, T)
            probs[lo:hi] = self.policy.action_probs(windows[lo:hi], masks[lo:hi])
        return np.repeat(probs[:, None, :], max_h, axis=1)

    def recognition(self, episode):
        return None
