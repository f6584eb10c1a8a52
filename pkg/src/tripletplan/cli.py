"""Experiment runner CLI.

Verbs: gen-corpus, train, eval, run, emit-curves, report, bench.
Run directories live under $TRIPLETPLAN_RUNS (default ./runs); every
artifact records the resolved config hash so any table traces back to
config+seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .config import ConfigError, METHODS, resolve_config, schema_help_lines
from .core import RngStream, load_vocab, save_vocab
from .dataio import (
    CorpusManifest,
    RunRecord,
    config_hash,
    load_checkpoint,
    read_corpus,
    save_checkpoint,
    write_corpus,
)
from .evaluation import (
    bootstrap_ci,
    build_report,
    horizon_sweep,
    load_dump,
    save_dump,
)
from .synthenv import generate_corpus, save_workflow_spec

TABLE1_COLUMNS = ("current", 1, 5, 10)
METHOD_LABELS = {
    "daril": "DARIL",
    "daril+irl": "DARIL + IRL",
    "daril+direct_rl": "DARIL + Direct Video RL",
    "latent_wm_rl": "Latent World Model + RL",
}


def runs_root() -> Path:
    return Path(os.environ.get("TRIPLETPLAN_RUNS", "runs"))


# --- pipeline stages ---------------------------------------------------


def build_corpus(cfg: dict, out_dir: Path):
    """Generate vocab, workflow and the train/test corpus files."""
    vocab = cfgmod.vocab_from_config(cfg)
    spec = cfgmod.workflow_from_config(cfg, vocab)
    n_train, n_test = cfg["corpus.n_train_videos"], cfg["corpus.n_test_videos"]
    episodes = generate_corpus(
        spec, vocab, n_train + n_test, cfg["corpus.frames_per_video"], seed=cfg["seed"]
    )
    train, test = episodes[:n_train], episodes[n_train:]
    out_dir.mkdir(parents=True, exist_ok=True)
    save_vocab(vocab, out_dir / "vocab.json")
    save_workflow_spec(spec, out_dir / "workflow.json")
    write_corpus(train, out_dir / "train")
    write_corpus(test, out_dir / "test")
    manifest = CorpusManifest(
        train_video_ids=[ep.video_id for ep in train],
        test_video_ids=[ep.video_id for ep in test],
        vocab_path="vocab.json",
    )
    manifest.save(out_dir / "manifest.json")
    return vocab, spec, train, test


def load_run_corpus(run_dir: Path):
    corpus_dir = run_dir / "corpus"
    vocab = load_vocab(corpus_dir / "vocab.json")
    train = read_corpus(corpus_dir / "train")
    test = read_corpus(corpus_dir / "test")
    return vocab, train, test


def _val_split(train_episodes: list) -> tuple:
    """Hold out the last ~10% of training videos for model selection metrics."""
    n_val = max(1, len(train_episodes) // 8)
    return train_episodes[:-n_val], train_episodes[-n_val:]


def train_method(cfg: dict, method: str, run_dir: Path, vocab, train_eps, record: RunRecord) -> dict:
    """Train every component `method` needs; returns adapters keyed by the
    Table-1 method names."""
    from .daril import DarilAdapter, DarilModel, train_daril
    from .directrl import PolicyAdapter, train_direct_rl
    from .irl import finetune_with_reward, train_reward
    from .worldmodel import (
        LatentPolicyAdapter,
        open_loop_errors,
        train_policy_in_latent,
        train_world_model,
    )

    ckpt = run_dir / "checkpoints"
    adapters = {}
    seed = cfg["seed"]
    arch = cfgmod.daril_from_config(cfg)
    needs_daril = method in ("daril", "daril+irl", "daril+direct_rl", "all")

    daril_model = None
    if needs_daril:
        t0 = time.time()
        daril_model = train_daril(train_eps, vocab, arch, seed, record, ckpt)
        record.log(0, "time/train_daril_s", time.time() - t0)
        adapters["daril"] = DarilAdapter(daril_model)

    if method in ("daril+direct_rl", "all"):
        t0 = time.time()
        rl_cfg = cfgmod.direct_rl_from_config(cfg)
        init = daril_model.state_dict() if cfg["directrl.warm_start"] else None
        policy = train_direct_rl(
            train_eps, vocab, arch, rl_cfg, seed,
            algo=cfg["directrl.algo"], init_state=init, record=record,
        )
        save_checkpoint(ckpt / "direct_rl_policy", policy.state_dict())
        record.log(0, "time/train_direct_rl_s", time.time() - t0)
        adapters["daril+direct_rl"] = PolicyAdapter(policy)

    if method in ("daril+irl", "all"):
        t0 = time.time()
        irl_cfg = cfgmod.irl_from_config(cfg)
        tr, val = _val_split(train_eps)
        reward_net, auc = train_reward(tr, val, vocab, irl_cfg, seed, record)
        save_checkpoint(ckpt / "irl_reward", reward_net.state_dict())
        ft_cfg = cfgmod.finetune_from_config(cfg)
        policy = finetune_with_reward(
            daril_model.state_dict(), reward_net, train_eps, vocab, arch, ft_cfg, seed, record
        )
        # the fine-tune adjusts the shared decoder pathway; merging it back
        # into the imitation model keeps the full rollout machinery, so the
        # enhanced model is evaluated exactly like the baseline
        merged = daril_model.state_dict()
        merged.update({k: v for k, v in policy.state_dict().items() if k in merged})
        enhanced = DarilModel(arch, vocab, RngStream(seed).child("irl_merge").rng)
        enhanced.load_state_dict(merged)
        save_checkpoint(ckpt / "irl_policy", enhanced.state_dict())
        record.log(0, "time/train_irl_s", time.time() - t0)
        adapters["daril+irl"] = DarilAdapter(enhanced)

    if method in ("latent_wm_rl", "all"):
        t0 = time.time()
        wm_cfg = cfgmod.worldmodel_from_config(cfg)
        tr, val = _val_split(train_eps)
        wm = train_world_model(tr, val, vocab, wm_cfg, seed, record)
        save_checkpoint(ckpt / "world_model", wm.state_dict())
        for k, err in open_loop_errors(wm, val, vocab).items():
            record.log(0, f"wm/open_loop_mse_k{k}", err)
        lp_cfg = cfgmod.latent_rl_from_config(cfg)
        latent_policy = train_policy_in_latent(wm, tr, vocab, lp_cfg, seed, record)
        save_checkpoint(ckpt / "latent_policy", latent_policy.state_dict())
        record.log(0, "time/train_latent_wm_rl_s", time.time() - t0)
        adapters["latent_wm_rl"] = LatentPolicyAdapter(wm, latent_policy)

    return adapters


def evaluate_adapters(cfg: dict, adapters: dict, run_dir: Path, vocab, test_eps, record: RunRecord) -> dict:
    """Horizon sweep + component mAP grid per method; logs Table-1 cells."""
    horizons = cfgmod.eval_horizons(cfg)
    eval_dir = run_dir / "eval"
    eval_dir.mkdir(parents=True, exist_ok=True)
    reports = {}
    daril_current = None
    for name, adapter in adapters.items():
        t0 = time.time()
        dump = horizon_sweep(adapter, test_eps, vocab, horizons=horizons)
        report = build_report(dump, vocab)
        slug = name.replace("+", "_")
        report.save(eval_dir / f"{slug}_report.json")
        (eval_dir / f"{slug}_table.txt").write_text(report.render() + "\n")
        if name == "daril":
            save_dump(dump, eval_dir / "daril_dump")
            daril_current = report.get("IVT", "current")
        record.log(0, f"time/eval_{slug}_s", time.time() - t0)
        reports[name] = report
    for name, report in reports.items():
        for col in TABLE1_COLUMNS:
            cell = report.get("IVT", col)
            if cell is None and col == "current" and name != "latent_wm_rl" and daril_current is not None:
                # warm-started policies reuse the frozen imitation
                # recognition head; latent WM RL has no recognition head
                cell = daril_current
            if cell is not None:
                record.log(0, f"table1/{name}/{col}", cell[0])
    if "daril" in reports:
        rep = reports["daril"]
        for comp in ("I", "V", "T", "IV", "IT", "IVT"):
            cur = rep.get(comp, "current")
            nxt = rep.get(comp, 1)
            if cur is not None:
                record.log(0, f"table2/{comp}/current", cur[0])
            if nxt is not None:
                record.log(0, f"table2/{comp}/next", nxt[0])
    return reports


def render_table1(cells: dict) -> str:
    """cells: {(method, column) -> value}; layout mirrors the comparison
    table (methods x current/1s/5s/10s, IVT mAP %)."""
    headers = ["Method", "Current", "1s", "5s", "10s"]
    rows = []
    for method in ("daril", "daril+irl", "daril+direct_rl", "latent_wm_rl"):
        if not any((method, col) in cells for col in TABLE1_COLUMNS):
            continue
        row = [METHOD_LABELS[method]]
        for col in TABLE1_COLUMNS:
            v = cells.get((method, col))
            row.append("—" if v is None else f"{100 * v:.1f}")
        rows.append(row)
    widths = [max(len(r[i]) for r in [headers] + rows) for i in range(len(headers))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(v.ljust(w) for v, w in zip(row, widths)) for row in rows]
    return "\n".join(lines)


def render_table2(cells: dict) -> str:
    headers = ["Component", "Current", "Next"]
    rows = []
    for comp in ("I", "V", "T", "IV", "IT", "IVT"):
        if (comp, "current") not in cells and (comp, "next") not in cells:
            continue
        row = [comp]
        for col in ("current", "next"):
            v = cells.get((comp, col))
            row.append("—" if v is None else f"{100 * v:.1f}")
        rows.append(row)
    widths = [max(len(r[i]) for r in [headers] + rows) for i in range(len(headers))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(v.ljust(w) for v, w in zip(row, widths)) for row in rows]
    return "\n".join(lines)


def _tables_from_record(record: RunRecord) -> tuple:
    t1, t2 = {}, {}
    for _, name, value in record.metrics:
        parts = name.split("/")
        if parts[0] == "table1" and len(parts) == 3:
            col = parts[2] if parts[2] == "current" else int(parts[2])
            t1[(parts[1], col)] = value
        elif parts[0] == "table2" and len(parts) == 3:
            t2[(parts[1], parts[2])] = value
    return t1, t2


def write_tables(run_dir: Path, record: RunRecord):
    t1, t2 = _tables_from_record(record)
    if t1:
        (run_dir / "table1.txt").write_text(render_table1(t1) + "\n")
        (run_dir / "table1.json").write_text(
            json.dumps({f"{m}/{c}": v for (m, c), v in sorted(t1.items(), key=str)}, indent=1) + "\n"
        )
    if t2:
        (run_dir / "table2.txt").write_text(render_table2(t2) + "\n")
        (run_dir / "table2.json").write_text(
            json.dumps({f"{comp}/{c}": v for (comp, c), v in sorted(t2.items())}, indent=1) + "\n"
        )


def adapters_from_checkpoints(cfg: dict, method: str, run_dir: Path, vocab) -> dict:
    """Rebuild evaluation adapters from saved checkpoints."""
    from .daril import DarilAdapter, DarilModel
    from .directrl import PolicyAdapter, PolicyNet
    from .worldmodel import LatentPolicy, LatentPolicyAdapter, WorldModel

    ckpt = run_dir / "checkpoints"
    arch = cfgmod.daril_from_config(cfg)
    rng = RngStream(cfg["seed"]).child("reload").rng
    adapters = {}

    def maybe(path):
        p = ckpt / f"{path}.npz"
        return load_checkpoint(p) if p.exists() else None

    if method in ("daril", "daril+irl", "daril+direct_rl", "all"):
        state = maybe("daril_final")
        if state is None:
            raise FileNotFoundError(f"no daril checkpoint in {ckpt}; run `tripletplan train` first")
        model = DarilModel(arch, vocab, rng)
        model.load_state_dict(state)
        adapters["daril"] = DarilAdapter(model)
    if method in ("daril+direct_rl", "all"):
        state = maybe("direct_rl_policy")
        if state is not None:
            policy = PolicyNet(arch, vocab, rng)
            policy.load_state_dict(state)
            adapters["daril+direct_rl"] = PolicyAdapter(policy)
    if method in ("daril+irl", "all"):
        state = maybe("irl_policy")
        if state is not None:
            enhanced = DarilModel(arch, vocab, rng)
            enhanced.load_state_dict(state)
            adapters["daril+irl"] = DarilAdapter(enhanced)
    if method in ("latent_wm_rl", "all"):
        wm_state, lp_state = maybe("world_model"), maybe("latent_policy")
        if wm_state is not None and lp_state is not None:
            wm = WorldModel(cfgmod.worldmodel_from_config(cfg), vocab, rng)
            wm.load_state_dict(wm_state)
            lp = LatentPolicy(cfg["worldmodel.latent_dim"], cfg["worldmodel.hidden"], vocab, rng)
            lp.load_state_dict(lp_state)
            adapters["latent_wm_rl"] = LatentPolicyAdapter(wm, lp)
    if not adapters:
        raise FileNotFoundError(f"no checkpoints for method {method!r} in {ckpt}")
    return adapters


def _start_record(cfg: dict, run_dir: Path, stage: str) -> RunRecord:
    name = "runrecord.jsonl" if stage == "run" else f"runrecord_{stage}.jsonl"
    return RunRecord(run_dir.name, config_hash(cfg), cfg["seed"], path=run_dir / name)


def _ensure_corpus(cfg: dict, run_dir: Path):
    corpus_dir = run_dir / "corpus"
    if (corpus_dir / "manifest.json").exists():
        vocab, train_eps, test_eps = load_run_corpus(run_dir)
        return vocab, train_eps, test_eps
    vocab, _, train_eps, test_eps = build_corpus(cfg, corpus_dir)
    return vocab, train_eps, test_eps


def train_only(cfg: dict, method: str, run_dir: Path) -> RunRecord:
    """Corpus (if missing) + training + checkpoints, no evaluation."""
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.json").write_text(json.dumps(cfg, indent=1, sort_keys=True) + "\n")
    record = _start_record(cfg, run_dir, "train")
    try:
        vocab, train_eps, _ = _ensure_corpus(cfg, run_dir)
        train_method(cfg, method, run_dir, vocab, train_eps, record)
    finally:
        record.close()
    return record


def eval_only(cfg: dict, method: str, run_dir: Path) -> RunRecord:
    """Evaluation of stored checkpoints + tables."""
    record = _start_record(cfg, run_dir, "eval")
    try:
        vocab, _, test_eps = _ensure_corpus(cfg, run_dir)
        adapters = adapters_from_checkpoints(cfg, method, run_dir, vocab)
        evaluate_adapters(cfg, adapters, run_dir, vocab, test_eps, record)
        write_tables(run_dir, record)
    finally:
        record.close()
    return record


def run_experiment(cfg: dict, method: str, run_dir: Path) -> RunRecord:
    """End-to-end: corpus -> training -> evaluation -> tables."""
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; choose from {METHODS}")
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.json").write_text(json.dumps(cfg, indent=1, sort_keys=True) + "\n")
    record = _start_record(cfg, run_dir, "run")
    try:
        vocab, spec, train_eps, test_eps = build_corpus(cfg, run_dir / "corpus")
        adapters = train_method(cfg, method, run_dir, vocab, train_eps, record)
        evaluate_adapters(cfg, adapters, run_dir, vocab, test_eps, record)
        write_tables(run_dir, record)
    finally:
        record.close()
    return record


def emit_curves(run_dir: Path, n_resamples: int = None, seed: int = None) -> Path:
    """Per-component, per-horizon (mAP, ci_lo, ci_hi) rows from the stored
    planning dump, plus the relative-degradation summary."""
    cfg = json.loads((run_dir / "config.json").read_text())
    vocab = load_vocab(run_dir / "corpus" / "vocab.json")
    dump_dir = run_dir / "eval" / "daril_dump"
    if not dump_dir.exists():
        raise FileNotFoundError(f"{dump_dir} missing; run the daril evaluation first")
    dump = load_dump(dump_dir, vocab)
    n_resamples = n_resamples if n_resamples is not None else cfg["eval.bootstrap_resamples"]
    seed = seed if seed is not None else cfg["seed"]
    level = cfg["eval.bootstrap_level"]
    wanted = ["current"] + cfgmod.eval_horizons(cfg)
    missing = [h for h in wanted if h not in dump.slices]
    if missing:
        print(f"warning: horizons missing from dump (skipped): {missing}", file=sys.stderr)
    lines = ["component\thorizon\tmap\tci_lo\tci_hi"]
    values = {}
    for comp in ("I", "V", "T", "IV", "IT", "IVT"):
        for h in wanted:
            if h not in dump.slices:
                continue
            sl = dump[h]
            try:
                from .evaluation import mean_ap_arrays

                point = mean_ap_arrays(sl.scores, sl.labels, vocab, comp)
            except ValueError:
                continue
            lo, hi = bootstrap_ci(sl, comp, vocab, n_resamples=n_resamples, level=level, seed=seed)
            values[(comp, h)] = point
            lines.append(f"{comp}\t{h}\t{point:.6f}\t{lo:.6f}\t{hi:.6f}")
    curves_path = run_dir / "curves.tsv"
    curves_path.write_text("\n".join(lines) + "\n")
    deg_lines = ["component\tmap_at_1\tmap_at_10\trelative_decrease"]
    for comp in ("I", "V", "T", "IV", "IT", "IVT"):
        if (comp, 1) in values and (comp, 10) in values:
            m1, m10 = values[(comp, 1)], values[(comp, 10)]
            rel = (m1 - m10) / m1 if m1 > 0 else float("nan")
            deg_lines.append(f"{comp}\t{m1:.6f}\t{m10:.6f}\t{rel:.6f}")
    (run_dir / "degradation.tsv").write_text("\n".join(deg_lines) + "\n")
    return curves_path


def report_from_record(run_dir: Path) -> str:
    paths = [p for p in (run_dir / "runrecord.jsonl", run_dir / "runrecord_eval.jsonl") if p.exists()]
    if not paths:
        raise FileNotFoundError(f"no run record in {run_dir}")
    record = RunRecord.load(paths[0])
    for extra in paths[1:]:
        record.metrics.extend(RunRecord.load(extra).metrics)
    t1, t2 = _tables_from_record(record)
    parts = [f"run {record.run_id}  config_hash={record.config_hash}  seed={record.seed}", ""]
    if t1:
        parts += ["IL vs RL comparison (IVT mAP %):", render_table1(t1), ""]
    if t2:
        parts += ["Component-wise imitation performance (mAP %):", render_table2(t2), ""]
    return "\n".join(parts)


# --- bench -------------------------------------------------------------


def run_bench(repeats: int = 20) -> str:
    """Compare the compiled kernels against the pure-numpy fallback."""
    from ._kernels import available_backends

    backends = available_backends()
    rng = np.random.default_rng(0)
    B, T, H = 64, 20, 64
    pre = rng.normal(size=(B, T, 4 * H))
    w_hh = rng.normal(size=(H, 4 * H)) * 0.1
    dh = rng.normal(size=(B, T, H))
    n = 4096
    rewards = rng.random(n)
    values = rng.random(n + 1)
    dones = (rng.random(n) < 0.02).astype(np.float64)
    p = rng.normal(size=65536)
    g = rng.normal(size=65536)
    labels = (rng.random(n) < 0.1).astype(np.float64)
    weights = rng.integers(0, 4, size=n)

    def time_case(fn):
        fn()
        t0 = time.perf_counter()
        for _ in range(repeats):
            fn()
        return (time.perf_counter() - t0) / repeats * 1000

    rows = []
    for name, mod in backends.items():
        h_seq, c_seq, gates = mod.lstm_forward(pre, w_hh)
        cases = {
            "lstm_forward": lambda m=mod: m.lstm_forward(pre, w_hh),
            "lstm_backward": lambda m=mod: m.lstm_backward(dh, h_seq, c_seq, gates, w_hh),
            "gae_scan": lambda m=mod: m.gae_scan(rewards, values, dones, 0.99, 0.95),
            "adam_step": lambda m=mod: m.adam_step(p.copy(), g, np.zeros_like(p), np.zeros_like(p), 1, 1e-3, 0.9, 0.999, 1e-8),
            "ap_weighted": lambda m=mod: m.ap_weighted(labels, weights),
        }
        for case, fn in cases.items():
            rows.append((case, name, time_case(fn)))
    by_case = {}
    for case, name, ms in rows:
        by_case.setdefault(case, {})[name] = ms
    lines = [f"{'kernel':<14} {'pure (ms)':>10} {'compiled (ms)':>14} {'speedup':>8}"]
    for case, vals in by_case.items():
        pure_ms = vals.get("pure", float("nan"))
        comp_ms = vals.get("compiled")
        speedup = f"{pure_ms / comp_ms:.1f}x" if comp_ms else "n/a"
        comp_txt = f"{comp_ms:.3f}" if comp_ms else "missing"
        lines.append(f"{case:<14} {pure_ms:>10.3f} {comp_txt:>14} {speedup:>8}")
    return "\n".join(lines)


# --- argument parsing ----------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    epilog = "config keys (override with --set key=value):\n" + "\n".join(schema_help_lines())
    parser = argparse.ArgumentParser(
        prog="tripletplan",
        description="Imitation-vs-RL benchmark for sequential action-triplet planning.",
        epilog=epilog,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_args(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--set", dest="overrides", action="append", metavar="KEY=VALUE",
                       help="config override (repeatable)")
        p.add_argument("--preset", choices=sorted(cfgmod.PRESETS), help="config preset")
        p.add_argument("--seed", type=int, help="global seed")

    p = sub.add_parser("gen-corpus", help="generate the synthetic corpus files")
    add_config_args(p)
    p.add_argument("--out", required=True, help="output directory")

    for verb in ("train", "eval"):
        p = sub.add_parser(verb, help=f"{verb} one method inside a run directory")
        add_config_args(p)
        p.add_argument("--method", default="daril", choices=METHODS)
        p.add_argument("--run-dir", help="run directory (default derived from config hash)")

    p = sub.add_parser("run", help="end-to-end experiment: corpus, training, evaluation, tables")
    add_config_args(p)
    p.add_argument("--method", default="all", choices=METHODS)
    p.add_argument("--run-dir", help="run directory (default derived from config hash)")

    p = sub.add_parser("emit-curves", help="write per-component per-horizon mAP/CI curve files")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--resamples", type=int, help="bootstrap resamples (default from run config)")

    p = sub.add_parser("report", help="re-render tables from the run record")
    p.add_argument("--run-dir", required=True)

    p = sub.add_parser("bench", help="benchmark compiled kernels against the pure fallback")
    p.add_argument("--repeats", type=int, default=20)
    return parser


def _resolve(args) -> dict:
    return resolve_config(
        path=getattr(args, "config", None),
        preset=getattr(args, "preset", None),
        overrides=getattr(args, "overrides", None),
        seed=getattr(args, "seed", None),
    )


def _run_dir_for(args, cfg: dict, method: str) -> Path:
    if getattr(args, "run_dir", None):
        return Path(args.run_dir)
    slug = method.replace("+", "_")
    return runs_root() / f"{slug}-{cfg['preset']}-seed{cfg['seed']}-{config_hash(cfg)[:8]}"


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "gen-corpus":
            cfg = _resolve(args)
            build_corpus(cfg, Path(args.out))
            print(f"corpus written to {args.out}")
        elif args.command == "train":
            cfg = _resolve(args)
            run_dir = _run_dir_for(args, cfg, args.method)
            train_only(cfg, args.method, run_dir)
            print(f"training complete: {run_dir}")
        elif args.command == "eval":
            cfg = _resolve(args)
            run_dir = _run_dir_for(args, cfg, args.method)
            record = eval_only(cfg, args.method, run_dir)
            print(f"evaluation complete: {run_dir}")
            t1, _ = _tables_from_record(record)
            if t1:
                print(render_table1(t1))
        elif args.command == "run":
            cfg = _resolve(args)
            run_dir = _run_dir_for(args, cfg, args.method)
            record = run_experiment(cfg, args.method, run_dir)
            print(f"run complete: {run_dir}")
            t1, _ = _tables_from_record(record)
            if t1:
                print(render_table1(t1))
        elif args.command == "emit-curves":
            path = emit_curves(Path(args.run_dir), n_resamples=args.resamples)
            print(f"curves written to {path}")
        elif args.command == "report":
            print(report_from_record(Path(args.run_dir)))
        elif args.command == "bench":
            print(run_bench(args.repeats))
        return 0
    except (ConfigError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
