"""Policy improvement loops: rollouts, trajectory repair, iteration driver.

Two refinement modes over a batch of policy rollouts:

  * filter mode keeps whole rollouts whose final reward clears tau_star
    and trains on the kept set alone;
  * repair mode walks each rollout step by step, keeps strictly improving
    actions, and at the first non-improving action substitutes the expert
    click and lets the expert finish the episode; training then uses the
    seed dataset plus the repaired rollouts.

Neither mode trains anything itself: a TrainHook hands the merged
dataset path to an external command (or just records it).
"""

from __future__ import annotations

import json
import logging
import os
import shlex
import subprocess
from dataclasses import dataclass
from typing import Sequence

from . import env as envmod
from .env import EnvConfig, InitSpec, Task
from .errors import HookError, ProtocolError, RemoteError, ReplayMismatchError
from .expert import next_click
from .policy import Policy
from .raster import iou, rle_decode, rle_encode
from .segmenters import Segmenter
from .trajgen import (
    Trajectory,
    TrajectoryStep,
    generate_trajectory,
    read_jsonl,
    write_jsonl,
)
from .util import mix_seed

log = logging.getLogger(__name__)

PROVENANCES = ("generated", "rollout", "refined", "merged")


@dataclass(frozen=True)
class DatasetManifest:
    """Names a trajectory dataset: the JSONL files plus bookkeeping."""

    name: str
    files: tuple[str, ...]
    provenance: str
    n_trajectories: int

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if self.n_trajectories < 0:
            raise ValueError("trajectory count cannot be negative")

    def save(self, path: str, header: dict | None = None) -> None:
        base = os.path.dirname(os.path.abspath(path))
        obj = {
            "name": self.name,
            "files": [os.path.relpath(f, base) for f in self.files],
            "provenance": self.provenance,
            "counts": {"trajectories": self.n_trajectories},
        }
        if header is not None:
            obj["header"] = header
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str) -> "DatasetManifest":
        """Load and verify: every file must parse and the counts must match."""
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
        base = os.path.dirname(os.path.abspath(path))
        files = tuple(
            f if os.path.isabs(f) else os.path.join(base, f) for f in obj["files"]
        )
        total = sum(len(read_jsonl(f)) for f in files)
        declared = obj["counts"]["trajectories"]
        if total != declared:
            raise ValueError(
                f"{path}: manifest declares {declared} trajectories, files hold {total}"
            )
        return cls(
            name=obj["name"],
            files=files,
            provenance=obj["provenance"],
            n_trajectories=declared,
        )

    def load_trajectories(self) -> list[Trajectory]:
        out: list[Trajectory] = []
        for f in self.files:
            out.extend(read_jsonl(f))
        return out


@dataclass(frozen=True)
class TrainHook:
    """Where refined datasets go: an external command or nowhere.

    external_command mode runs the command with ``{dataset}`` replaced by
    the dataset path; a nonzero exit aborts the iteration.
    """

    mode: str = "emit_only"
    command: str | None = None

    def __post_init__(self):
        if self.mode not in ("emit_only", "external_command"):
            raise ValueError(f"unknown hook mode {self.mode!r}")
        if self.mode == "external_command":
            if not self.command or "{dataset}" not in self.command:
                raise ValueError("external_command hooks need a '{dataset}' placeholder")

    def invoke(self, dataset_path: str) -> None:
        if self.mode == "emit_only":
            log.info("training hook (emit only): %s", dataset_path)
            return
        argv = [part.replace("{dataset}", dataset_path) for part in shlex.split(self.command)]
        proc = subprocess.run(argv, capture_output=True, text=True)
        if proc.returncode != 0:
            raise HookError(
                f"hook {argv[0]!r} exited {proc.returncode}: {proc.stderr.strip()[:500]}"
            )


def rollout(
    policy: Policy,
    tasks: Sequence[Task],
    segmenter: Segmenter,
    config: EnvConfig = EnvConfig(),
    seed: int = 0,
    init: InitSpec = InitSpec.empty(),
) -> tuple[list[Trajectory], dict[str, str]]:
    """Greedy episodes: take the policy's top proposal each step.

    Records every step, improving or not; filtering is the refiners'
    job. Remote failures are collected per task and the run continues.
    Returns (trajectories, failures keyed by task id).
    """
    trajectories: list[Trajectory] = []
    failures: dict[str, str] = {}
    for task in tasks:
        try:
            trajectories.append(_rollout_one(policy, task, segmenter, config, seed, init))
        except (RemoteError, ProtocolError) as e:
            log.warning("rollout failed for task %s: %s", task.id, e)
            failures[task.id] = str(e)
    return trajectories, failures


def _rollout_one(
    policy: Policy,
    task: Task,
    segmenter: Segmenter,
    config: EnvConfig,
    seed: int,
    init: InitSpec,
) -> Trajectory:
    policy.start_task(task, seed)
    state = envmod.reset(task, init, segmenter)
    r = iou(state.mask, task.target)
    steps: list[TrajectoryStep] = []
    if r >= config.tau_stop:
        return Trajectory(task.id, init, tuple(steps), r, envmod.STOP_TAU)
    while True:
        proposals = policy.propose(task, state, 1)
        if not proposals:
            reason = envmod.STOP_CONVERGED
            break
        out = envmod.step(state, proposals[0].action, task, segmenter, config)
        steps.append(
            TrajectoryStep(proposals[0].action, rle_encode(out.state.mask), r, out.reward)
        )
        state, r = out.state, out.reward
        if out.done:
            reason = out.stop_reason
            break
    return Trajectory(task.id, init, tuple(steps), r, reason)


def refine_star_plus(
    rollout_traj: Trajectory,
    task: Task,
    segmenter: Segmenter,
    config: EnvConfig = EnvConfig(),
    keep_rule: str = "positive",
) -> Trajectory:
    """Repair one rollout: keep improving actions, splice in the expert.

    Replays the rollout through the same segmenter (divergence from the
    stored masks is an error). The default keep rule retains actions with
    strictly positive reward gain; ``tau_diff`` instead requires the same
    margin the generator uses. From the first rejected action onward the
    recorded continuation is invalid, so the expert takes over under the
    usual stop rules. Empty rollouts turn into plain expert episodes.
    """
    refined, _ = refine_star_plus_verbose(rollout_traj, task, segmenter, config, keep_rule)
    return refined


def refine_star_plus_verbose(
    rollout_traj: Trajectory,
    task: Task,
    segmenter: Segmenter,
    config: EnvConfig = EnvConfig(),
    keep_rule: str = "positive",
) -> tuple[Trajectory, bool]:
    """refine_star_plus plus a flag telling whether a substitution happened."""
    if keep_rule not in ("positive", "tau_diff"):
        raise ValueError(f"unknown keep rule {keep_rule!r}")
    if rollout_traj.task_id != task.id:
        raise ValueError(f"rollout for {rollout_traj.task_id!r} refined on {task.id!r}")
    if not rollout_traj.steps:
        return generate_trajectory(task, segmenter, config, rollout_traj.init), False

    state = envmod.reset(task, rollout_traj.init, segmenter)
    r = iou(state.mask, task.target)
    steps: list[TrajectoryStep] = []
    corrected = False
    reason = rollout_traj.stop_reason
    for i, st in enumerate(rollout_traj.steps):
        out = envmod.step(state, st.action, task, segmenter, config)
        if out.state.mask != rle_decode(st.mask_after):
            raise ReplayMismatchError(
                f"task {task.id}: replayed mask diverged at step {len(steps)}"
            )
        gain = out.reward - r
        keep = gain > 0.0 if keep_rule == "positive" else gain >= config.tau_diff
        if keep:
            steps.append(st)
            state, r = out.state, out.reward
            if out.done:
                if i + 1 < len(rollout_traj.steps):
                    raise ReplayMismatchError(
                        f"task {task.id}: rollout carries actions past the episode end"
                    )
                reason = out.stop_reason
                break
        else:
            corrected = True
            reason = _expert_continuation(task, segmenter, config, state, r, steps)
            break
    return Trajectory(task.id, rollout_traj.init, tuple(steps), _final(steps, r), reason), corrected


def _expert_continuation(
    task: Task,
    segmenter: Segmenter,
    config: EnvConfig,
    state: "envmod.EpisodeState",
    r: float,
    steps: list[TrajectoryStep],
) -> str:
    """Finish an episode with expert clicks under the generator's stop rules."""
    while True:
        if state.finished or state.step >= config.max_steps:
            return envmod.STOP_MAX
        action = next_click(state.mask, task.target)
        if action is None:
            return envmod.STOP_CONVERGED
        out = envmod.step(state, action, task, segmenter, config)
        if out.reward - r < config.tau_diff:
            return envmod.STOP_LOW_IMPACT
        steps.append(TrajectoryStep(action, rle_encode(out.state.mask), r, out.reward))
        state, r = out.state, out.reward
        if out.done:
            return out.stop_reason


def _final(steps: list[TrajectoryStep], fallback: float) -> float:
    return steps[-1].reward_after if steps else fallback


def star_filter(trajectories: Sequence[Trajectory], tau_star: float) -> list[Trajectory]:
    """Keep whole trajectories whose final reward reaches tau_star."""
    if not (0.0 <= tau_star <= 1.0):
        raise ValueError(f"tau_star out of [0, 1]: {tau_star}")
    return [t for t in trajectories if t.final_reward >= tau_star]


def star_iteration(
    mode: str,
    policy: Policy,
    seed_data: DatasetManifest,
    tasks: Sequence[Task],
    n_iters: int,
    hook: TrainHook,
    segmenter: Segmenter,
    config: EnvConfig = EnvConfig(),
    out_dir: str = ".",
    tau_star: float = 0.95,
    seed: int = 0,
    init: InitSpec = InitSpec.empty(),
    keep_rule: str = "positive",
) -> tuple[DatasetManifest, list[dict]]:
    """Drive n_iters rollout -> refine -> hand-off rounds.

    mode 'star' filters rollouts by final reward and trains on the kept
    set; 'star_plus' repairs every rollout and trains on seed_data plus
    the repaired set. Returns the last training manifest (seed_data when
    n_iters is 0) and one report dict per iteration.
    """
    if mode not in ("star", "star_plus"):
        raise ValueError(f"unknown mode {mode!r}")
    if n_iters < 0:
        raise ValueError(f"n_iters must be >= 0, got {n_iters}")
    if n_iters == 0:
        return seed_data, []
    os.makedirs(out_dir, exist_ok=True)
    task_by_id = {t.id: t for t in tasks}
    current = seed_data
    reports: list[dict] = []
    for it in range(1, n_iters + 1):
        iter_seed = mix_seed(seed, it)
        rollouts, failures = rollout(policy, tasks, segmenter, config, seed=iter_seed, init=init)
        raw_mean = _mean([t.final_reward for t in rollouts])
        n_corrections = 0
        if mode == "star":
            refined = star_filter(rollouts, tau_star)
        else:
            refined = []
            for traj in rollouts:
                fixed, corrected = refine_star_plus_verbose(
                    traj, task_by_id[traj.task_id], segmenter, config, keep_rule
                )
                refined.append(fixed)
                n_corrections += int(corrected)
        refined_path = os.path.join(out_dir, f"iter{it:02d}_refined.jsonl")
        write_jsonl(refined, refined_path)
        if mode == "star":
            train_path = refined_path
            train_count = len(refined)
            train_files: tuple[str, ...] = (refined_path,)
            provenance = "refined"
        else:
            # the training set is always the seed dataset plus this
            # iteration's repaired rollouts
            train_path = os.path.join(out_dir, f"iter{it:02d}_train.jsonl")
            seed_trajs = seed_data.load_trajectories()
            write_jsonl(seed_trajs + refined, train_path)
            train_count = len(seed_trajs) + len(refined)
            train_files = (train_path,)
            provenance = "merged"
        manifest = DatasetManifest(
            name=f"{mode}-iter{it:02d}",
            files=train_files,
            provenance=provenance,
            n_trajectories=train_count,
        )
        manifest_path = os.path.join(out_dir, f"iter{it:02d}_manifest.json")
        manifest.save(manifest_path)
        hook.invoke(train_path)
        reports.append(
            {
                "iteration": it,
                "n_rollouts": len(rollouts),
                "n_failures": len(failures),
                "n_corrections": n_corrections,
                "mean_reward_raw": raw_mean,
                "mean_reward_refined": _mean([t.final_reward for t in refined]),
            }
        )
        current = manifest
    return current, reports


def _mean(values: list[float]) -> float:
    return sum(values) / len(values) if values else 0.0
