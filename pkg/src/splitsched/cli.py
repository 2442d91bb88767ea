"""Command line: train, evaluate, compare, sweep-split and gen-trace.

Configuration is a flat ``key = value`` file (dotted keys) layered over a
named profile; any key can also be given as a flag, e.g. ``--window.tail 1``.
Every CSV starts with ``#`` comment lines (config hash, workload, version);
bodies depend only on the configuration and seeds.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import os
import sys
import time
from typing import Optional

import numpy as np

from . import __version__
from .agent import (
    CheckpointError, PPOAgent, PPOHyperparams, ShapeMismatchError, init_params, load_checkpoint,
    save_checkpoint,
)
from .env import RewardWeights, SchedulingEnv, WindowConfig, WorkloadExhaustedError
from .experiment import (
    eval_seed, run_agent_episode, run_heuristic_episode, run_random_episode, train_seed,
)
from .heuristics import POLICIES
from .metrics import REPORT_COLUMNS
from .workload import (
    MalformedLineError, SyntheticParams, Trace, generate_synthetic, read_swf, sample_episode,
    with_load, write_swf,
)


class ConfigError(ValueError):
    pass


DESK = {
    "cluster.cores": 16,
    "window.head": 5,
    "window.tail": 1,
    "reward.w1": 1 / 3,
    "reward.w2": 1 / 3,
    "reward.w3": 1 / 3,
    "episode.placements": 200,
    "episode.jobs": 0,
    "workload.source": "synthetic",
    "workload.jobs": 20000,
    "workload.seed": 1,
    "workload.runtime_mu": 6.0,
    "workload.runtime_sigma": 1.0,
    "workload.runtime_max": 3600.0,
    "workload.pow2_bias": 0.75,
    "workload.load": 16.96,
    "scheduler": "agent",
    "ppo.lr": 1e-3,
    "ppo.clip": 0.2,
    "ppo.gamma": 0.99,
    "ppo.minibatch": 64,
    "ppo.epochs": 10,
    "ppo.entropy_coef": 0.01,
    "ppo.value_coef": 0.5,
    "ppo.gae_lambda": "0.95",
    "ppo.optimizer": "adam",
    "ppo.hidden": "64,64",
    "train.episodes": 300,
    "train.checkpoint_every": 100,
    "train.wall_time": False,
    "eval.episodes": 10,
    "eval.greedy": False,
    "eval.checkpoint": "",
    "compare.schedulers": "fcfs,sjf,lcfs,fcfs-easy",
    "sweep.total": 8,
    "sweep.pairs": "8:0,7:1,4:4,0:8",
    "sweep.checkpoints": "",
    "seed": 0,
    "output": "runs",
}

FULL = dict(DESK, **{
    "cluster.cores": 256,
    "window.head": 19,
    "window.tail": 1,
    "episode.placements": 1000,
    "workload.jobs": 100000,
    "workload.runtime_mu": 6.4359,
    "workload.runtime_sigma": 2.0,
    "workload.runtime_max": 124707.0,
    "workload.load": 271.5,
    "ppo.lr": 3e-4,
    "ppo.minibatch": 128,
    "ppo.epochs": 4,
    "ppo.entropy_coef": 0.0,
    "ppo.gae_lambda": "none",
    "ppo.hidden": "1024,512,256",
    "train.episodes": 100000,
    "train.checkpoint_every": 5000,
    "eval.episodes": 100,
    "sweep.total": 20,
    "sweep.pairs": "20:0,19:1,15:5,10:10,0:20",
})

PROFILES = {"desk": DESK, "full": FULL}


def _parse_value(key: str, raw):
    default = DESK[key]
    if isinstance(raw, str):
        raw = raw.strip()
    try:
        if isinstance(default, bool):
            if isinstance(raw, bool):
                return raw
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {type(default).__name__}") from None
    return str(raw)


def read_config_file(path) -> dict:
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in DESK:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = _parse_value(key, value)
    return out


def _hidden(cfg) -> tuple:
    try:
        hidden = tuple(int(h) for h in cfg["ppo.hidden"].split(",") if h.strip())
    except ValueError:
        raise ConfigError(f"ppo.hidden: expected comma-separated ints, got {cfg['ppo.hidden']!r}") from None
    if not hidden or min(hidden) < 1:
        raise ConfigError("ppo.hidden: need at least one positive layer width")
    return hidden


def _gae(cfg) -> Optional[float]:
    raw = str(cfg["ppo.gae_lambda"]).strip().lower()
    if raw in ("", "none"):
        return None
    try:
        lam = float(raw)
    except ValueError:
        raise ConfigError(f"ppo.gae_lambda: expected a number or 'none', got {raw!r}") from None
    if not 0.0 <= lam <= 1.0:
        raise ConfigError("ppo.gae_lambda: must be in [0, 1]")
    return lam


def validate(cfg: dict) -> dict:
    if cfg["cluster.cores"] < 1:
        raise ConfigError("cluster.cores: must be >= 1")
    if cfg["window.head"] < 0 or cfg["window.tail"] < 0:
        raise ConfigError("window.head/window.tail: must be >= 0")
    if cfg["window.head"] + cfg["window.tail"] < 1:
        raise ConfigError("window.head + window.tail: must be >= 1")
    for k in ("reward.w1", "reward.w2", "reward.w3"):
        if not 0.0 <= cfg[k] <= 1.0:
            raise ConfigError(f"{k}: must be in [0, 1]")
    for k in ("episode.placements", "train.episodes", "train.checkpoint_every", "eval.episodes",
              "workload.jobs"):
        if cfg[k] < 1:
            raise ConfigError(f"{k}: must be >= 1")
    if cfg["episode.jobs"] < 0:
        raise ConfigError("episode.jobs: must be >= 0 (0 means twice the placements)")
    if cfg["scheduler"] not in ("agent",) + POLICIES:
        raise ConfigError(f"scheduler: unknown {cfg['scheduler']!r}")
    _hidden(cfg)
    _gae(cfg)
    try:
        hyper(cfg)
        RewardWeights(cfg["reward.w1"], cfg["reward.w2"], cfg["reward.w3"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def build_config(profile="desk", path=None, overrides=None) -> dict:
    if profile not in PROFILES:
        raise ConfigError(f"profile: unknown {profile!r}; expected one of {sorted(PROFILES)}")
    cfg = dict(PROFILES[profile])
    if path:
        cfg.update(read_config_file(path))
    for key, value in (overrides or {}).items():
        if key not in DESK:
            raise ConfigError(f"unknown key {key!r}")
        cfg[key] = _parse_value(key, value)
    return validate(cfg)


def config_hash(cfg: dict) -> str:
    # the output directory does not change results, so it is left out
    text = "\n".join(f"{k}={cfg[k]!r}" for k in sorted(cfg) if k != "output")
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def hyper(cfg) -> PPOHyperparams:
    return PPOHyperparams(
        lr=cfg["ppo.lr"], clip=cfg["ppo.clip"], gamma=cfg["ppo.gamma"],
        minibatch=cfg["ppo.minibatch"], epochs=cfg["ppo.epochs"],
        entropy_coef=cfg["ppo.entropy_coef"], value_coef=cfg["ppo.value_coef"],
        gae_lambda=_gae(cfg), optimizer=cfg["ppo.optimizer"], seed=cfg["seed"])


def synthetic_params(cfg) -> SyntheticParams:
    base = SyntheticParams(cores=cfg["cluster.cores"], runtime_mu=cfg["workload.runtime_mu"],
                           runtime_sigma=cfg["workload.runtime_sigma"],
                           runtime_max=cfg["workload.runtime_max"],
                           pow2_bias=cfg["workload.pow2_bias"], seed=cfg["workload.seed"])
    return with_load(base, cfg["workload.load"])


def load_workload(cfg) -> Trace:
    src = cfg["workload.source"]
    if src == "synthetic":
        try:
            return generate_synthetic(synthetic_params(cfg), cfg["workload.jobs"])
        except ValueError as exc:
            raise ConfigError(f"workload: {exc}") from None
    trace = read_swf(src)
    cores = cfg["cluster.cores"]
    kept = [j for j in trace.jobs if j.cores <= cores]
    if len(kept) < len(trace.jobs):
        print(f"warning: dropped {len(trace.jobs) - len(kept)} jobs wider than {cores} cores",
              file=sys.stderr)
    if not kept:
        raise WorkloadExhaustedError(f"{src}: no job fits on {cores} cores")
    return Trace(kept, cores, max(j.runtime for j in kept), trace.skipped, trace.source)


def make_env(cfg, trace, head=None, tail=None) -> SchedulingEnv:
    window = WindowConfig(cfg["window.head"] if head is None else head,
                          cfg["window.tail"] if tail is None else tail)
    return SchedulingEnv(trace, cfg["cluster.cores"], window,
                         RewardWeights(cfg["reward.w1"], cfg["reward.w2"], cfg["reward.w3"]),
                         placements=cfg["episode.placements"],
                         episode_jobs=cfg["episode.jobs"] or None)


def workload_hash(env: SchedulingEnv, seeds) -> str:
    h = hashlib.sha256()
    n = min(env.episode_jobs, len(env.trace))
    for seed in seeds:
        for j in sample_episode(env.trace, seed, n):
            h.update(f"{j.id},{j.submit_time!r},{j.cores},{j.runtime!r};".encode())
    return h.hexdigest()[:12]


class CsvOut:
    """CSV writer with the standard comment header."""

    def __init__(self, path, cfg, header, extra_comments=()):
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        self.fh = open(path, "w", newline="")
        self.fh.write(f"# config_hash {config_hash(cfg)}\n")
        self.fh.write(f"# workload {cfg['workload.source']}\n")
        self.fh.write(f"# version splitsched {__version__}\n")
        for line in extra_comments:
            self.fh.write(f"# {line}\n")
        self.writer = csv.writer(self.fh, lineterminator="\n")
        self.writer.writerow(header)

    def row(self, values):
        self.writer.writerow([_cell(v) for v in values])
        self.fh.flush()

    def close(self):
        self.fh.close()


def _cell(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return v


def read_csv_body(path) -> list:
    """Rows of a CSV written by this tool, without the comment header."""
    with open(path, newline="") as fh:
        return list(csv.reader(line for line in fh if not line.startswith("#")))


METRIC_COLS = [c for c in REPORT_COLUMNS]


def _agent_for(cfg, env, checkpoint=None) -> PPOAgent:
    if checkpoint:
        params = load_checkpoint(checkpoint, env.obs_dim, env.n_actions)
    else:
        params = init_params(env.obs_dim, env.n_actions, _hidden(cfg),
                             np.random.default_rng(cfg["seed"]))
    return PPOAgent(params, hyper(cfg))


def train(cfg, env, out_dir, prefix="", log=True) -> tuple[PPOAgent, list]:
    """Train from scratch; returns the agent and the checkpoint paths written."""
    agent = _agent_for(cfg, env)
    episodes, every = cfg["train.episodes"], cfg["train.checkpoint_every"]
    header = ["episode", "total_reward", "utilization", "wait_time", "queue_length",
              "invalid_rate", "fwd_rate"]
    if cfg["train.wall_time"]:
        header.append("wall_time")
    out = CsvOut(os.path.join(out_dir, prefix + "train_log.csv"), cfg, header) if log else None
    written = []
    t0 = time.perf_counter()
    for ep in range(1, episodes + 1):
        res = run_agent_episode(env, agent, train_seed(cfg["seed"], ep - 1), learn=True)
        if out is not None:
            r = res.report
            row = [ep, res.total_reward, r.utilization, r.wait_time, r.queue_length,
                   r.invalid_rate, r.fwd_rate]
            if cfg["train.wall_time"]:
                row.append(time.perf_counter() - t0)
            out.row(row)
        if ep % every == 0 or ep == episodes:
            path = os.path.join(out_dir, f"{prefix}checkpoint_{ep:06d}.ckpt")
            save_checkpoint(agent.params, path)
            written.append(path)
    if out is not None:
        out.close()
    return agent, written


def evaluate_rows(cfg, env, agent):
    greedy = cfg["eval.greedy"]
    results = []
    for i in range(cfg["eval.episodes"]):
        results.append(run_agent_episode(env, agent, eval_seed(cfg["seed"], i), greedy=greedy))
    return results


def cmd_train(cfg) -> int:
    trace = load_workload(cfg)
    env = make_env(cfg, trace)
    _, written = train(cfg, env, cfg["output"])
    print(f"trained {cfg['train.episodes']} episodes; {len(written)} checkpoints in {cfg['output']}")
    return 0


def cmd_evaluate(cfg, checkpoint) -> int:
    checkpoint = checkpoint or cfg["eval.checkpoint"]
    if not checkpoint:
        raise ConfigError("evaluate: a checkpoint path is required (--checkpoint)")
    if not os.path.exists(checkpoint):
        raise FileNotFoundError(f"checkpoint not found: {checkpoint}")
    trace = load_workload(cfg)
    env = make_env(cfg, trace)
    agent = PPOAgent(load_checkpoint(checkpoint, env.obs_dim, env.n_actions), hyper(cfg))
    results = evaluate_rows(cfg, env, agent)
    cols = ["total_reward"] + METRIC_COLS
    header = ["episode"] + cols + [c + "_std" for c in cols]
    mode = "greedy" if cfg["eval.greedy"] else "sampled"
    out = CsvOut(os.path.join(cfg["output"], "eval.csv"), cfg, header,
                 [f"checkpoint {os.path.basename(checkpoint)}", f"actions {mode}"])
    table = []
    for i, res in enumerate(results):
        vals = [res.total_reward] + [getattr(res.report, c) for c in METRIC_COLS]
        table.append(vals)
        out.row([i] + vals + [""] * len(cols))
    arr = np.asarray(table, dtype=float)
    out.row(["summary"] + [float(x) for x in arr.mean(axis=0)] + [float(x) for x in arr.std(axis=0)])
    out.close()
    print(f"evaluated {len(results)} episodes ({mode}); mean W~ {arr[:, 1 + METRIC_COLS.index('wait_time')].mean():.1f}")
    return 0


def _schedulers(raw) -> list:
    names = [s.strip() for s in raw.split(",") if s.strip()]
    if not names:
        raise ConfigError("compare: scheduler list is empty")
    for name in names:
        if name not in ("agent", "random") + POLICIES:
            raise ConfigError(f"compare: unknown scheduler {name!r}; expected agent, random or one of {POLICIES}")
    if len(set(names)) != len(names):
        raise ConfigError("compare: scheduler listed twice")
    return names


def cmd_compare(cfg, schedulers=None, checkpoint=None) -> int:
    names = _schedulers(schedulers if schedulers is not None else cfg["compare.schedulers"])
    checkpoint = checkpoint or cfg["eval.checkpoint"]
    if "agent" in names and not checkpoint:
        raise ConfigError("compare: scheduler 'agent' needs a checkpoint (--checkpoint)")
    trace = load_workload(cfg)
    env = make_env(cfg, trace)
    seeds = [eval_seed(cfg["seed"], i) for i in range(cfg["eval.episodes"])]
    whash = workload_hash(env, seeds)
    rows = []
    for name in names:
        if name == "agent":
            agent = PPOAgent(load_checkpoint(checkpoint, env.obs_dim, env.n_actions), hyper(cfg))
            results = [run_agent_episode(env, agent, s, greedy=cfg["eval.greedy"]) for s in seeds]
        elif name == "random":
            rng = np.random.default_rng(cfg["seed"])
            results = [run_random_episode(env, s, rng) for s in seeds]
        else:
            results = [run_heuristic_episode(env, name, s) for s in seeds]
        means = [float(np.mean([getattr(r.report, c) for r in results])) for c in METRIC_COLS]
        rows.append([name, whash] + means)
    wi = 2 + METRIC_COLS.index("wait_time")
    rows.sort(key=lambda r: (r[wi], r[0]))
    out = CsvOut(os.path.join(cfg["output"], "compare.csv"), cfg,
                 ["scheduler", "workload_hash"] + METRIC_COLS,
                 [f"episodes {cfg['eval.episodes']}"])
    for row in rows:
        out.row(row)
    out.close()
    print("\n".join(f"{r[0]:>10}  W~ {r[wi]:.1f}" for r in rows))
    return 0


def parse_pairs(raw, total) -> list:
    pairs = []
    for item in raw.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            h, t = (int(x) for x in item.split(":"))
        except ValueError:
            raise ConfigError(f"sweep.pairs: expected 'head:tail', got {item!r}") from None
        if h < 0 or t < 0 or h + t != total:
            raise ConfigError(f"sweep.pairs: {h}:{t} does not sum to window size {total}")
        pairs.append((h, t))
    if not pairs:
        raise ConfigError("sweep.pairs: empty")
    return pairs


def cmd_sweep_split(cfg) -> int:
    total = cfg["sweep.total"]
    pairs = parse_pairs(cfg["sweep.pairs"], total)
    trace = load_workload(cfg)
    out_dir = cfg["output"]
    cols = ["wait_time", "queue_length", "utilization", "invisible_jobs", "partial_ratio"]
    out = CsvOut(os.path.join(out_dir, "sweep.csv"), cfg,
                 ["M_h", "M_t"] + cols + ["total_reward", "big_job_placements", "starvation_risk"],
                 [f"window {total}", f"episodes {cfg['eval.episodes']}"])
    types = CsvOut(os.path.join(out_dir, "sweep_types.csv"), cfg,
                   ["M_h", "M_t", "core_bucket", "runtime_bucket", "placements", "mean_wait"])
    for h, t in pairs:
        env = make_env(cfg, trace, h, t)
        prefix = f"split_{h}_{t}_"
        stored = cfg["sweep.checkpoints"]
        if stored:
            # a previous sweep's output directory, trained for the same episode count
            path = os.path.join(stored, f"{prefix}checkpoint_{cfg['train.episodes']:06d}.ckpt")
            agent = PPOAgent(load_checkpoint(path, env.obs_dim, env.n_actions), hyper(cfg))
        else:
            trained, _ = train(cfg, env, out_dir, prefix)
            # fresh sampling stream, so results match a reload of the checkpoint
            agent = PPOAgent(trained.params, hyper(cfg))
        results = evaluate_rows(cfg, env, agent)
        means = [float(np.mean([getattr(r.report, c) for r in results])) for c in cols]
        merged = {}
        for r in results:
            for cb, rb, n, w in r.metrics.job_type_table():
                cnt, tot = merged.get((cb, rb), (0, 0.0))
                merged[(cb, rb)] = (cnt + n, tot + n * w)
        big = sum(n for (cb, _), (n, _) in merged.items() if cb > cfg["cluster.cores"] // 2)
        out.row([h, t] + means + [float(np.mean([r.total_reward for r in results])),
                                  big / len(results), str(h == 0).lower()])
        for (cb, rb), (n, tot) in sorted(merged.items()):
            types.row([h, t, cb, rb, n, tot / n])
        print(f"split {h}:{t}  W~ {means[0]:.1f}  L~ {means[1]:.2f}")
    out.close()
    types.close()
    return 0


def cmd_gen_trace(cfg, path) -> int:
    trace = load_workload(cfg)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        write_swf(trace, fh, [f"config_hash {config_hash(cfg)}",
                              f"offered load {trace.offered_load():.2f} core-seconds per second"])
    print(f"wrote {len(trace)} jobs to {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    keys = argparse.ArgumentParser(add_help=False)
    grp = keys.add_argument_group("configuration keys (override the config file)")
    for key in DESK:
        grp.add_argument(f"--{key}", dest=key, default=None, metavar="V")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat 'key = value' config file")
    common.add_argument("--profile", default="desk", choices=sorted(PROFILES))

    p = argparse.ArgumentParser(prog="splitsched", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"splitsched {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common, keys], help="train the agent with periodic checkpoints")
    ev = sub.add_parser("evaluate", parents=[common, keys], help="evaluate a checkpoint")
    ev.add_argument("--checkpoint")
    cmp_ = sub.add_parser("compare", parents=[common, keys], help="compare schedulers on shared workloads")
    cmp_.add_argument("--schedulers", help="comma-separated: agent, random, " + ", ".join(POLICIES))
    cmp_.add_argument("--checkpoint")
    sub.add_parser("sweep-split", parents=[common, keys], help="train and evaluate window splits")
    gen = sub.add_parser("gen-trace", parents=[common, keys], help="write a synthetic SWF trace")
    gen.add_argument("--out", required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    ns = vars(args)
    overrides = {k: ns[k] for k in DESK if ns.get(k) is not None}
    try:
        cfg = build_config(args.profile, args.config, overrides)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, args.checkpoint)
        if args.command == "compare":
            return cmd_compare(cfg, args.schedulers, args.checkpoint)
        if args.command == "sweep-split":
            return cmd_sweep_split(cfg)
        if args.command == "gen-trace":
            return cmd_gen_trace(cfg, args.out)
    except (ConfigError, CheckpointError, ShapeMismatchError, MalformedLineError,
            WorkloadExhaustedError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
