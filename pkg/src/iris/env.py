"""The refinement MDP: state assembly, click handling, action clipping, rewards.

One episode is T iterations on one volume. Each iteration follows the same
order: interact (clicks expand into hints, maps rebuilt), assemble the
4-channel state, apply the per-voxel probability adjustments with clipping,
then score the change. Without ground truth the env runs in inference mode
and skips clicks simulation and rewards.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import distfield, interaction, metrics, reward, supervoxel
from .volume import Mask, Volume

DEFAULT_DELTAS = (-0.4, -0.2, -0.1, 0.1, 0.2, 0.4)


@dataclass(frozen=True)
class ActionSpec:
    deltas: tuple[float, ...] = DEFAULT_DELTAS

    def __post_init__(self):
        if len(self.deltas) < 1:
            raise ValueError("action set must not be empty")

    @property
    def k(self) -> int:
        return len(self.deltas)

    @classmethod
    def from_magnitudes(cls, magnitudes) -> "ActionSpec":
        """Signed action set from positive magnitudes, e.g. (0.1, 0.2, 0.4)."""
        mags = sorted(float(m) for m in magnitudes)
        deltas = tuple(-m for m in reversed(mags)) + tuple(mags)
        return cls(deltas)


@dataclass(frozen=True)
class EpisodeConfig:
    T: int = 4
    actions: ActionSpec = field(default_factory=ActionSpec)
    reward: reward.RewardConfig = field(default_factory=reward.RewardConfig)
    robot: interaction.RobotConfig = field(default_factory=interaction.RobotConfig)
    distance: distfield.DistanceKind = field(default_factory=distfield.Geodesic)
    slic: supervoxel.SlicConfig = field(default_factory=supervoxel.SlicConfig)
    # 'decline' follows the published schedule; 'fixed:N' and 'point' are
    # ablation policies for the supervoxel-size comparison
    region_policy: str = "decline"
    # 'supervoxel' expands clicks to regions, 'point' keeps bare voxels
    click_expansion: str = "supervoxel"
    no_interaction: bool = False

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be >= 1")

    def region_count(self, iteration: int, nvox: int) -> int:
        if self.region_policy == "decline":
            # the schedule gives a target region size; fewer, larger regions
            # early and progressively finer ones in later iterations
            size = supervoxel.schedule_region_count(iteration)
            k = math.ceil(nvox / size)
        elif self.region_policy == "point":
            k = nvox
        elif self.region_policy.startswith("fixed:"):
            k = int(self.region_policy.split(":", 1)[1])
        else:
            raise ValueError(f"unknown region policy {self.region_policy!r}")
        return min(k, nvox)


class Env:
    """Single-episode environment; not thread-safe, one instance per rollout."""

    def __init__(
        self,
        v: Volume,
        gt: Mask | None,
        cfg: EpisodeConfig,
        rng: np.random.Generator | None = None,
        labeling_cache: dict | None = None,
        record_arrays: bool = False,
    ):
        if gt is not None and gt.dims != v.dims:
            raise ValueError("volume/ground-truth dims mismatch")
        self.volume = v
        self.gt = gt
        self.cfg = cfg
        self.rng = rng if rng is not None else np.random.default_rng(cfg.robot.seed)
        self.prob = np.full(v.dims, 0.5)
        self.hints = interaction.HintSet()
        self.iteration = 0
        self.maps = (np.zeros(v.dims), np.zeros(v.dims))
        self._labeling_cache = labeling_cache if labeling_cache is not None else {}
        self._boundary = (
            reward.boundary_weights(gt.labels, v.spacing) if gt is not None else None
        )
        self.trace: list[dict] = []
        self.record_arrays = record_arrays
        self._maps_dirty = False
        self._interacted = False
        self._last_clicks: list[interaction.Click] = []

    @property
    def done(self) -> bool:
        return self.iteration >= self.cfg.T

    @property
    def prediction(self) -> np.ndarray:
        return (self.prob > 0.5).astype(np.uint8)

    def labeling(self) -> supervoxel.SupervoxelLabeling:
        """Supervoxel labeling for the current iteration's schedule position."""
        nvox = int(np.prod(self.volume.dims))
        k = self.cfg.region_count(self.iteration, nvox)
        if k not in self._labeling_cache:
            self._labeling_cache[k] = supervoxel.slic(self.volume.data, k, self.cfg.slic)
        return self._labeling_cache[k]

    def state(self) -> np.ndarray:
        return np.stack([self.volume.data, self.prob, self.maps[0], self.maps[1]])

    def interact(self, clicks="robot") -> np.ndarray:
        """Apply clicks for this iteration and return the new state.

        `clicks` is a list of Click, the string 'robot' (simulated clicks,
        requires ground truth), or 'random' for the random-click ablation.
        """
        if self.done:
            raise RuntimeError("episode finished")
        if self.cfg.no_interaction:
            clicks = []
        if isinstance(clicks, str):
            if clicks == "robot":
                if self.gt is None:
                    raise RuntimeError("robot clicks require ground truth")
                clicks = interaction.simulate_clicks(
                    self.prediction, self.gt.labels, self.labeling(), self.cfg.robot, self.rng
                )
            elif clicks == "random":
                clicks = interaction.random_clicks(
                    self.volume.dims, self.cfg.robot.clicks_per_iteration, self.rng
                )
            else:
                raise ValueError(f"unknown click source {clicks!r}")
        self._last_clicks = list(clicks)
        if clicks:
            self.hints = interaction.expand_clicks(
                clicks, self.labeling(), self.hints, self.cfg.click_expansion
            )
            self._maps_dirty = True
        if self._maps_dirty:
            self.maps = interaction.build_maps(self.volume, self.hints, self.cfg.distance)
            self._maps_dirty = False
        self._interacted = True
        return self.state()

    def post_clicks(self, clicks: list[interaction.Click]) -> tuple[int, int]:
        """Merge clicks into the hint sets without advancing the iteration.

        Used by the refinement service where clicks arrive separately from the
        refine call. Returns newly added (object, background) hint counts.
        """
        before = (len(self.hints.object_hints), len(self.hints.background_hints))
        if clicks:
            self.hints = interaction.expand_clicks(
                clicks, self.labeling(), self.hints, self.cfg.click_expansion
            )
            self._maps_dirty = True
        return (
            len(self.hints.object_hints) - before[0],
            len(self.hints.background_hints) - before[1],
        )

    def begin_iteration(self, allow_extra: bool = False) -> np.ndarray:
        """Start an iteration from hints merged via `post_clicks`.

        With `allow_extra` the episode may continue past T, holding the final
        supervoxel schedule position.
        """
        if self.done:
            if not allow_extra:
                raise RuntimeError("episode finished")
            self.iteration = self.cfg.T - 1
        if self._maps_dirty:
            self.maps = interaction.build_maps(self.volume, self.hints, self.cfg.distance)
            self._maps_dirty = False
        self._last_clicks = []
        self._interacted = True
        return self.state()

    def apply_actions(self, actions: np.ndarray) -> np.ndarray:
        deltas = np.asarray(self.cfg.actions.deltas)
        if actions.min() < 0 or actions.max() >= deltas.size:
            raise IndexError("action index out of range")
        return np.clip(self.prob + deltas[actions], 0.0, 1.0)

    def step(self, actions: np.ndarray):
        """Apply actions, reward the change, advance the iteration counter.

        Returns (state, reward_fields_or_None, done). reward_fields is a dict
        with r_global / r_boundary / r_total, None in inference mode.
        """
        if not self._interacted:
            raise RuntimeError("interact() must be called before step()")
        p_prev = self.prob
        p_new = self.apply_actions(actions)
        rewards = None
        if self.gt is not None:
            gt = self.gt.labels
            r_g = reward.global_reward(p_prev, p_new, gt)
            r_b = reward.boundary_reward(p_prev, p_new, gt, self._boundary)
            rewards = {
                "r_global": r_g,
                "r_boundary": r_b,
                "r_total": reward.total_reward(r_g, r_b, self.cfg.reward),
            }
        self.prob = p_new
        self.iteration += 1
        self._interacted = False
        self._record_trace(actions, rewards)
        return self.state(), rewards, self.done

    def _record_trace(self, actions, rewards):
        entry = {
            "iteration": self.iteration,
            "clicks": [c.to_wire() for c in self._last_clicks],
            "state_hash": hashlib.sha256(self.state().tobytes()).hexdigest(),
            "action_counts": np.bincount(
                actions.ravel(), minlength=self.cfg.actions.k
            ).tolist(),
        }
        if rewards is not None:
            entry["mean_reward_global"] = float(rewards["r_global"].mean())
            entry["mean_reward_boundary"] = float(rewards["r_boundary"].mean())
            entry["mean_reward_total"] = float(rewards["r_total"].mean())
        if self.gt is not None:
            entry["dsc"] = metrics.dsc(self.prediction, self.gt.labels)
        if self.record_arrays:
            entry["probability"] = self.prob.ravel().tolist()
            entry["prediction"] = self.prediction.ravel().tolist()
            entry["actions"] = actions.ravel().tolist()
            entry["h_plus"] = self.maps[0].ravel().tolist()
            entry["h_minus"] = self.maps[1].ravel().tolist()
            entry["supervoxels"] = self.labeling().labels.ravel().tolist() if not self.done else None
            if rewards is not None:
                entry["reward_global"] = rewards["r_global"].ravel().tolist()
                entry["reward_boundary"] = rewards["r_boundary"].ravel().tolist()
        self.trace.append(entry)

    def trace_records(self) -> list[dict]:
        """Episode trace as JSON-serializable records, one per iteration."""
        return [dict(rec) for rec in self.trace]


def init_episode(
    v: Volume,
    gt: Mask | None,
    cfg: EpisodeConfig,
    rng: np.random.Generator | None = None,
    labeling_cache: dict | None = None,
    record_arrays: bool = False,
) -> Env:
    """Fresh environment: p = 0.5 everywhere, empty hints, iteration 0."""
    return Env(v, gt, cfg, rng, labeling_cache, record_arrays=record_arrays)
