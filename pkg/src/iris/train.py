"""Asynchronous advantage actor-critic training over the refinement MDP.

Workers hold private parameter snapshots, roll whole episodes against the
environment (one episode per gradient submission, so the terminal return is
exactly zero), and push accumulated gradients to a shared store where an Adam
update is applied under a lock. A warm-up phase runs first with interactions
disabled, then the interactive phase with robot-user clicks.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import distfield, interaction, metrics, nn, reward
from .env import ActionSpec, Env, EpisodeConfig, init_episode
from .volume import Mask, SynthSpec, Volume, generate_synthetic, normalize


@dataclass
class Sample:
    """One training/evaluation case with a per-volume supervoxel cache."""

    volume: Volume  # normalized
    gt: Mask
    labeling_cache: dict = field(default_factory=dict)


def synthetic_dataset(
    count: int,
    dims=(1, 64, 64),
    seed: int = 0,
    contrast: float = 1.0,
    noise_sd: float = 0.15,
) -> list[Sample]:
    samples = []
    for i in range(count):
        spec = SynthSpec(seed=seed + i, dims=tuple(dims), contrast=contrast, noise_sd=noise_sd)
        v, m = generate_synthetic(spec)
        samples.append(Sample(normalize(v), m))
    return samples


@dataclass(frozen=True)
class TrainConfig:
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)
    channels: int = 16
    workers: int = 4
    warmup_updates: int = 300
    interactive_updates: int = 4200
    learning_rate: float = 1e-4
    lr_decay: bool = True
    entropy_coef: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")


class SharedStore:
    """Shared parameters plus Adam state; gradient application is serialized."""

    def __init__(self, params: nn.NetworkParams, lr: float, total_updates: int, lr_decay=True):
        self.params = params
        self.lr0 = lr
        self.total_updates = max(1, total_updates)
        self.lr_decay = lr_decay
        self.m = [(np.zeros_like(w), np.zeros_like(b)) for w, b in params.tensors]
        self.v = [(np.zeros_like(w), np.zeros_like(b)) for w, b in params.tensors]
        self.step = 0
        self.lock = threading.Lock()
        self.beta1, self.beta2, self.eps = 0.9, 0.999, 1e-8

    def snapshot(self) -> nn.NetworkParams:
        with self.lock:
            return self.params.copy()

    def apply_gradients(self, grads) -> int:
        with self.lock:
            self.step += 1
            t = self.step
            lr = self.lr0
            if self.lr_decay:
                lr *= max(0.0, 1.0 - (t - 1) / self.total_updates)
            b1, b2, eps = self.beta1, self.beta2, self.eps
            for i, (gw, gb) in enumerate(grads):
                mw, mb = self.m[i]
                vw, vb = self.v[i]
                mw *= b1
                mw += (1 - b1) * gw
                mb *= b1
                mb += (1 - b1) * gb
                vw *= b2
                vw += (1 - b2) * gw**2
                vb *= b2
                vb += (1 - b2) * gb**2
                corr1 = 1 - b1**t
                corr2 = 1 - b2**t
                w, b = self.params.tensors[i]
                w -= lr * (mw / corr1) / (np.sqrt(vw / corr2) + eps)
                b -= lr * (mb / corr1) / (np.sqrt(vb / corr2) + eps)
            return t


def sample_actions(policy: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Per-voxel categorical draw from a (K, ...) policy tensor."""
    k = policy.shape[0]
    spatial = policy.shape[1:]
    flat = policy.reshape(k, -1)
    u = rng.random(flat.shape[1])
    cum = np.cumsum(flat, axis=0)
    actions = (u[None, :] > cum).sum(axis=0)
    return np.minimum(actions, k - 1).reshape(spatial).astype(np.int64)


def run_episode(
    env: Env,
    params: nn.NetworkParams,
    rng: np.random.Generator | None,
    greedy: bool = False,
    clicks="robot",
):
    """Roll one full episode; returns per-step records for gradient computation."""
    steps = []
    while not env.done:
        state = env.interact(clicks)
        policy, value, cache = nn.forward(params, state)
        if greedy:
            actions = policy.argmax(axis=0)
        else:
            actions = sample_actions(policy, rng)
        _, rewards, _ = env.step(actions)
        steps.append(
            {
                "cache": cache,
                "actions": actions,
                "value": value,
                "r_total": None if rewards is None else rewards["r_total"],
            }
        )
    return steps


def episode_gradients(params: nn.NetworkParams, steps, gamma: float, entropy_coef: float = 0.0):
    """Accumulated A3C gradients over an episode, terminal return zero."""
    grads = None
    ret = np.zeros_like(steps[0]["r_total"])
    policy_loss = value_loss = 0.0
    for rec in reversed(steps):
        ret = rec["r_total"] + gamma * ret
        advantage = ret - rec["value"]
        g = nn.backward(
            params, rec["cache"], rec["actions"], advantage, ret, entropy_coef=entropy_coef
        )
        pl, vl = nn.policy_value_losses(rec["cache"], rec["actions"], advantage, ret)
        policy_loss += pl
        value_loss += vl
        if grads is None:
            grads = g
        else:
            grads = [(gw + hw, gb + hb) for (gw, gb), (hw, hb) in zip(grads, g)]
    return grads, policy_loss, value_loss


def _make_env(sample: Sample, cfg: EpisodeConfig, rng, warmup: bool) -> Env:
    episode_cfg = replace(cfg, no_interaction=True) if warmup else cfg
    return init_episode(
        sample.volume, sample.gt, episode_cfg, rng=rng, labeling_cache=sample.labeling_cache
    )


def train(
    cfg: TrainConfig,
    dataset: list[Sample],
    log_path=None,
) -> tuple[nn.NetworkParams, list[dict]]:
    """Warm-up then interactive A3C training; returns final params and log."""
    net_cfg = nn.NetConfig.for_dims(
        dataset[0].volume.dims, channels=cfg.channels, actions=cfg.episode.actions.k
    )
    params0 = nn.init_params(cfg.seed, net_cfg)
    total = cfg.warmup_updates + cfg.interactive_updates
    store = SharedStore(params0, cfg.learning_rate, total, cfg.lr_decay)
    log: list[dict] = []
    log_lock = threading.Lock()
    log_file = open(log_path, "w") if log_path else None

    def emit(record):
        with log_lock:
            log.append(record)
            if log_file:
                log_file.write(json.dumps(record, sort_keys=True) + "\n")

    def worker(worker_id: int, phase_end: int, warmup: bool):
        rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, worker_id, int(warmup))))
        while True:
            with store.lock:
                if store.step >= phase_end:
                    break
            snapshot = store.snapshot()
            sample = dataset[int(rng.integers(len(dataset)))]
            env = _make_env(sample, cfg.episode, rng, warmup)
            steps = run_episode(env, snapshot, rng, greedy=False)
            grads, pl, vl = episode_gradients(
                snapshot, steps, cfg.episode.reward.gamma, cfg.entropy_coef
            )
            step = store.apply_gradients(grads)
            emit(
                {
                    "step": step,
                    "worker": worker_id,
                    "phase": "warmup" if warmup else "interactive",
                    "mean_reward": float(np.mean([s["r_total"].mean() for s in steps])),
                    "policy_loss": pl,
                    "value_loss": vl,
                    "final_dsc": env.trace[-1]["dsc"],
                }
            )

    for warmup, phase_end in ((True, cfg.warmup_updates), (False, total)):
        if phase_end <= store.step:
            continue
        if cfg.workers == 1:
            worker(0, phase_end, warmup)
        else:
            threads = [
                threading.Thread(target=worker, args=(i, phase_end, warmup))
                for i in range(cfg.workers)
            ]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
    if log_file:
        log_file.close()
    return store.params, log


@dataclass(frozen=True)
class EvalProtocol:
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)
    clicks: str = "robot"  # 'robot' | 'random' | 'none'
    dsc_threshold: float = 0.85
    seed: int = 0


def evaluate(params: nn.NetworkParams, dataset: list[Sample], protocol: EvalProtocol) -> dict:
    """Greedy evaluation: per-iteration DSC/ASSD/HD95 and clicks-to-threshold."""
    episode_cfg = protocol.episode
    if protocol.clicks == "none":
        episode_cfg = replace(episode_cfg, no_interaction=True)
    per_case = []
    for idx, sample in enumerate(dataset):
        rng = np.random.default_rng(np.random.SeedSequence((protocol.seed, idx)))
        env = _make_env(sample, episode_cfg, rng, warmup=False)
        rows = []
        while not env.done:
            clicks = protocol.clicks if protocol.clicks != "none" else []
            state = env.interact(clicks)
            policy, _, _ = nn.forward(params, state)
            env.step(policy.argmax(axis=0))
            pred = env.prediction
            row = {"iteration": env.iteration, "dsc": metrics.dsc(pred, sample.gt.labels)}
            try:
                assd, hd95 = metrics.surface_distances(
                    pred, sample.gt.labels, sample.volume.spacing
                )
                row["assd"], row["hd95"] = assd, hd95
            except metrics.UndefinedSurfaceDistance:
                row["assd"] = row["hd95"] = None
            rows.append(row)
        n_c = episode_cfg.robot.clicks_per_iteration if protocol.clicks == "robot" else 0
        clicks_needed = None
        for row in rows:
            if row["dsc"] > protocol.dsc_threshold:
                clicks_needed = n_c * row["iteration"]
                break
        per_case.append({"case": idx, "iterations": rows, "clicks_to_threshold": clicks_needed})

    summary = []
    t_iters = episode_cfg.T
    for it in range(1, t_iters + 1):
        vals = {"dsc": [], "assd": [], "hd95": []}
        for case in per_case:
            row = case["iterations"][it - 1]
            for key in vals:
                if row[key] is not None:
                    vals[key].append(row[key])
        summary.append(
            {
                "iteration": it,
                **{
                    f"{key}_{stat}": (
                        float(getattr(np, stat)(vals[key])) if vals[key] else None
                    )
                    for key in vals
                    for stat in ("mean", "std")
                },
                "defined_surface_cases": len(vals["assd"]),
            }
        )
    reached = [c["clicks_to_threshold"] for c in per_case if c["clicks_to_threshold"] is not None]
    return {
        "per_case": per_case,
        "per_iteration": summary,
        "clicks_to_threshold_mean": float(np.mean(reached)) if reached else None,
        "threshold_reached_fraction": len(reached) / len(per_case) if per_case else 0.0,
        "dsc_threshold": protocol.dsc_threshold,
    }


def ablation_suite(variants: list[tuple[str, nn.NetworkParams, EvalProtocol]], dataset) -> dict:
    """Evaluate trained variants on one shared test set; directional report."""
    table = {}
    for name, params, protocol in variants:
        report = evaluate(params, dataset, protocol)
        final = report["per_iteration"][-1]
        table[name] = {
            "final_dsc_mean": final["dsc_mean"],
            "final_assd_mean": final["assd_mean"],
            "final_hd95_mean": final["hd95_mean"],
            "clicks_to_threshold_mean": report["clicks_to_threshold_mean"],
            "report": report,
        }
    return table
