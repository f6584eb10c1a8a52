"""Config schema, presets, file loading and key=value overrides.

One flat dotted-key schema is the single source of truth: defaults, help
text, CLI `--help` listing and the doc-drift test all read from it.
"""

from __future__ import annotations

import json
from pathlib import Path

from .core import TripletVocab, build_vocab
from .daril import DarilConfig
from .directrl import PpoConfig
from .irl import IrlConfig
from .synthenv import WorkflowSpec, default_workflow_spec
from .worldmodel import WorldModelConfig

# key -> (default, help)
SCHEMA = {
    "preset": ("desk", "preset name: desk (minutes-scale) or paper-scale (hours-scale)"),
    "seed": (0, "global seed; every stochastic stage derives its stream from it"),
    "corpus.n_train_videos": (40, "training videos to generate"),
    "corpus.n_test_videos": (10, "test videos to generate"),
    "corpus.frames_per_video": (200, "frames per video (1 FPS)"),
    "corpus.embed_dim": (128, "surrogate frame-embedding dimension"),
    "corpus.embed_noise": (0.10, "per-dim Gaussian noise std on frame embeddings"),
    "corpus.actions_per_phase": (12, "triplet classes each phase draws from"),
    "corpus.mean_dwell": (30.0, "mean frames spent in a phase before transitioning"),
    "corpus.action_persist": (8.0, "frames an action set holds before advancing (deterministic duration)"),
    "corpus.succession_prob": (0.85, "probability a finished action set advances to its scripted successor"),
    "vocab.num_instruments": (6, "instrument vocabulary size"),
    "vocab.num_verbs": (10, "verb vocabulary size"),
    "vocab.num_targets": (15, "target vocabulary size"),
    "vocab.num_classes": (100, "valid (instrument,verb,target) triplet count"),
    "vocab.phase_count": (7, "workflow phase count"),
    "daril.context_window": (20, "context window w in frames"),
    "daril.model_dim": (64, "causal decoder width"),
    "daril.n_heads": (4, "decoder attention heads"),
    "daril.n_blocks": (2, "decoder blocks"),
    "daril.lstm_hidden": (64, "BiLSTM hidden size per direction"),
    "daril.w_current": (1.0, "loss weight: current-action recognition"),
    "daril.w_next": (1.0, "loss weight: next-action prediction"),
    "daril.w_embed": (1.0, "loss weight: next-embedding regression"),
    "daril.w_phase": (1.0, "loss weight: phase recognition"),
    "daril.lr": (2e-3, "imitation learning rate"),
    "daril.epochs": (14, "imitation training epochs"),
    "daril.batch_size": (128, "imitation batch size"),
    "daril.max_horizon": (30, "maximum plan_rollout horizon"),
    "directrl.algo": ("ppo", "direct-RL algorithm: ppo or a2c"),
    "directrl.warm_start": (True, "initialize the policy from the trained imitation model"),
    "directrl.gamma": (0.99, "discount factor"),
    "directrl.gae_lambda": (0.95, "GAE lambda"),
    "directrl.clip_eps": (0.2, "PPO clip epsilon"),
    "directrl.epochs": (4, "PPO epochs per batch"),
    "directrl.entropy_coef": (0.01, "entropy bonus coefficient"),
    "directrl.value_coef": (0.5, "value loss coefficient"),
    "directrl.lr": (3e-4, "policy learning rate"),
    "directrl.steps_per_update": (256, "environment steps per update"),
    "directrl.n_envs": (8, "parallel environment instances"),
    "directrl.updates": (40, "policy updates"),
    "directrl.minibatch_size": (256, "PPO minibatch size"),
    "directrl.cardinality_coef": (0.0, "penalty weight for expected action count above 3"),
    "worldmodel.latent_dim": (32, "latent state dimension"),
    "worldmodel.hidden": (64, "world-model MLP hidden width"),
    "worldmodel.lr": (2e-3, "world-model learning rate"),
    "worldmodel.epochs": (12, "world-model training epochs"),
    "worldmodel.batch_size": (128, "world-model batch size"),
    "worldmodel.corrupt_per_expert": (1, "corrupted-action transitions per expert transition"),
    "worldmodel.imagine_horizon": (10, "imagination rollout length K"),
    "latentrl.lr": (3e-4, "latent policy learning rate"),
    "latentrl.updates": (40, "latent policy updates"),
    "latentrl.steps_per_update": (250, "imagined transitions per update"),
    "latentrl.entropy_coef": (0.01, "entropy bonus coefficient"),
    "latentrl.clip_eps": (0.2, "PPO clip epsilon"),
    "latentrl.epochs": (4, "PPO epochs per batch"),
    "irl.hidden": (128, "reward net hidden width"),
    "irl.lr": (2e-3, "reward net learning rate"),
    "irl.epochs": (12, "reward net training epochs"),
    "irl.batch_size": (128, "reward net batch size"),
    "irl.flip1": (0.5, "negative sampler: probability of 1 flip"),
    "irl.flip2": (0.3, "negative sampler: probability of 2 flips"),
    "irl.flip3": (0.2, "negative sampler: probability of 3 flips"),
    "irl.beta": (0.5, "behavior-cloning anchor weight during fine-tuning"),
    "irl.finetune_updates": (30, "PPO updates during reward-guided fine-tuning"),
    "irl.finetune_lr": (1e-4, "fine-tuning learning rate"),
    "eval.horizons": ("1,2,3,5,10,20", "planning horizons in seconds (= frames at 1 FPS)"),
    "eval.bootstrap_resamples": (1000, "bootstrap resamples for confidence intervals"),
    "eval.bootstrap_level": (0.95, "confidence level"),
}

PRESETS = {
    "desk": {},
    "paper-scale": {
        "corpus.frames_per_video": 2000,
        "corpus.embed_dim": 1024,
        "daril.epochs": 20,
        "directrl.updates": 200,
        "latentrl.updates": 200,
        "irl.finetune_updates": 100,
    },
}

METHODS = ("daril", "daril+irl", "daril+direct_rl", "latent_wm_rl", "all")


class ConfigError(ValueError):
    pass


def default_config() -> dict:
    return {k: v for k, (v, _) in SCHEMA.items()}


def apply_preset(cfg: dict, name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    out = dict(cfg)
    out["preset"] = name
    out.update(PRESETS[name])
    return out


def _flatten(obj: dict, prefix: str = "") -> dict:
    flat = {}
    for k, v in obj.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            flat.update(_flatten(v, key + "."))
        else:
            flat[key] = v
    return flat


def coerce(key: str, value):
    """Cast a raw (often string) value to the schema default's type."""
    if key not in SCHEMA:
        raise ConfigError(f"unknown config key {key!r}")
    default = SCHEMA[key][0]
    if isinstance(value, str):
        if isinstance(default, bool):
            low = value.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ConfigError(f"{key}: cannot parse boolean from {value!r}")
        if isinstance(default, int) and not isinstance(default, bool):
            return int(value)
        if isinstance(default, float):
            return float(value)
        return value
    if isinstance(default, bool):
        return bool(value)
    if isinstance(default, int) and not isinstance(default, bool):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return value


def load_config_file(path) -> dict:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: not valid JSON: {e}") from e
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return {k: coerce(k, v) for k, v in _flatten(obj).items()}


def parse_overrides(pairs) -> dict:
    out = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not of the form key=value")
        key, value = pair.split("=", 1)
        out[key.strip()] = coerce(key.strip(), value.strip())
    return out


def resolve_config(path=None, preset=None, overrides=None, seed=None) -> dict:
    cfg = default_config()
    if path:
        cfg.update(load_config_file(path))
    if preset:
        cfg = apply_preset(cfg, preset)
    cfg.update(parse_overrides(overrides))
    if seed is not None:
        cfg["seed"] = int(seed)
    return cfg


def schema_help_lines() -> list:
    width = max(len(k) for k in SCHEMA)
    return [f"  {k.ljust(width)}  default={v!r}  {doc}" for k, (v, doc) in SCHEMA.items()]


# --- builders --------------------------------------------------------

def vocab_from_config(cfg: dict) -> TripletVocab:
    return build_vocab(
        num_instruments=cfg["vocab.num_instruments"],
        num_verbs=cfg["vocab.num_verbs"],
        num_targets=cfg["vocab.num_targets"],
        num_classes=cfg["vocab.num_classes"],
        phase_count=cfg["vocab.phase_count"],
    )


def workflow_from_config(cfg: dict, vocab: TripletVocab) -> WorkflowSpec:
    return default_workflow_spec(
        vocab,
        embed_dim=cfg["corpus.embed_dim"],
        embed_noise=cfg["corpus.embed_noise"],
        actions_per_phase=cfg["corpus.actions_per_phase"],
        mean_dwell=cfg["corpus.mean_dwell"],
        action_persist=cfg["corpus.action_persist"],
        succession_prob=cfg["corpus.succession_prob"],
    )


def daril_from_config(cfg: dict) -> DarilConfig:
    return DarilConfig(
        context_window=cfg["daril.context_window"],
        embed_dim=cfg["corpus.embed_dim"],
        model_dim=cfg["daril.model_dim"],
        n_heads=cfg["daril.n_heads"],
        n_blocks=cfg["daril.n_blocks"],
        lstm_hidden=cfg["daril.lstm_hidden"],
        w_current=cfg["daril.w_current"],
        w_next=cfg["daril.w_next"],
        w_embed=cfg["daril.w_embed"],
        w_phase=cfg["daril.w_phase"],
        lr=cfg["daril.lr"],
        epochs=cfg["daril.epochs"],
        batch_size=cfg["daril.batch_size"],
        max_horizon=cfg["daril.max_horizon"],
    )


def direct_rl_from_config(cfg: dict) -> PpoConfig:
    return PpoConfig(
        gamma=cfg["directrl.gamma"],
        gae_lambda=cfg["directrl.gae_lambda"],
        clip_eps=cfg["directrl.clip_eps"],
        epochs=cfg["directrl.epochs"],
        entropy_coef=cfg["directrl.entropy_coef"],
        value_coef=cfg["directrl.value_coef"],
        lr=cfg["directrl.lr"],
        steps_per_update=cfg["directrl.steps_per_update"],
        n_envs=cfg["directrl.n_envs"],
        updates=cfg["directrl.updates"],
        minibatch_size=cfg["directrl.minibatch_size"],
        cardinality_coef=cfg["directrl.cardinality_coef"],
    )


def latent_rl_from_config(cfg: dict) -> PpoConfig:
    return PpoConfig(
        gamma=cfg["directrl.gamma"],
        gae_lambda=cfg["directrl.gae_lambda"],
        clip_eps=cfg["latentrl.clip_eps"],
        epochs=cfg["latentrl.epochs"],
        entropy_coef=cfg["latentrl.entropy_coef"],
        value_coef=cfg["directrl.value_coef"],
        lr=cfg["latentrl.lr"],
        steps_per_update=cfg["latentrl.steps_per_update"],
        updates=cfg["latentrl.updates"],
        minibatch_size=cfg["directrl.minibatch_size"],
    )


def finetune_from_config(cfg: dict) -> PpoConfig:
    return PpoConfig(
        gamma=cfg["directrl.gamma"],
        gae_lambda=cfg["directrl.gae_lambda"],
        clip_eps=cfg["directrl.clip_eps"],
        epochs=cfg["directrl.epochs"],
        entropy_coef=cfg["directrl.entropy_coef"],
        value_coef=cfg["directrl.value_coef"],
        lr=cfg["irl.finetune_lr"],
        steps_per_update=cfg["directrl.steps_per_update"],
        n_envs=cfg["directrl.n_envs"],
        updates=cfg["irl.finetune_updates"],
        minibatch_size=cfg["directrl.minibatch_size"],
        bc_coef=cfg["irl.beta"],
    )


def worldmodel_from_config(cfg: dict) -> WorldModelConfig:
    return WorldModelConfig(
        context_window=cfg["daril.context_window"],
        embed_dim=cfg["corpus.embed_dim"],
        latent_dim=cfg["worldmodel.latent_dim"],
        hidden=cfg["worldmodel.hidden"],
        lr=cfg["worldmodel.lr"],
        epochs=cfg["worldmodel.epochs"],
        batch_size=cfg["worldmodel.batch_size"],
        corrupt_per_expert=cfg["worldmodel.corrupt_per_expert"],
        imagine_horizon=cfg["worldmodel.imagine_horizon"],
    )


def irl_from_config(cfg: dict) -> IrlConfig:
    return IrlConfig(
        context_window=cfg["daril.context_window"],
        embed_dim=cfg["corpus.embed_dim"],
        hidden=cfg["irl.hidden"],
        lr=cfg["irl.lr"],
        epochs=cfg["irl.epochs"],
        batch_size=cfg["irl.batch_size"],
        flip_probs=(cfg["irl.flip1"], cfg["irl.flip2"], cfg["irl.flip3"]),
        beta=cfg["irl.beta"],
    )


def eval_horizons(cfg: dict) -> list:
    return [int(h) for h in str(cfg["eval.horizons"]).split(",") if h.strip()]
