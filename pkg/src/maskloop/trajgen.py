"""Trajectory datasets: expert demonstrations, rendering, synthetic tasks.

A trajectory records an episode as (action, mask after, reward before,
reward after) steps. generate_trajectory runs the expert with two
pruning rules: the episode stops once reward reaches tau_stop, and a
step whose reward gain falls below tau_diff is dropped along with the
rest of the episode (a low-impact click means the remaining headroom is
not worth imitating).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import env as envmod
from .env import (
    Action,
    EnvConfig,
    InitSpec,
    Task,
    action_from_dict,
    action_to_dict,
    init_from_dict,
    init_to_dict,
)
from .errors import JsonlError
from .expert import next_click
from .policy import PromptConfig, format_action, miou_percent, render_prompt
from .raster import (
    BitMask,
    GrayImage,
    RgbImage,
    RleMask,
    box_to_mask,
    components,
    iou,
    render_overlay,
    rle_decode,
    rle_encode,
)
from .segmenters import Segmenter


@dataclass(frozen=True)
class TrajectoryStep:
    action: Action
    mask_after: RleMask
    reward_before: float
    reward_after: float


@dataclass(frozen=True)
class Trajectory:
    task_id: str
    init: InitSpec
    steps: tuple[TrajectoryStep, ...]
    final_reward: float
    stop_reason: str


def generate_trajectory(
    task: Task,
    segmenter: Segmenter,
    config: EnvConfig = EnvConfig(),
    init: InitSpec = InitSpec.empty(),
) -> Trajectory:
    """Run the expert on one task and record the filtered episode."""
    state = envmod.reset(task, init, segmenter)
    r = iou(state.mask, task.target)
    steps: list[TrajectoryStep] = []
    if r >= config.tau_stop:
        return Trajectory(task.id, init, tuple(steps), r, envmod.STOP_TAU)
    while True:
        action = next_click(state.mask, task.target)
        if action is None:
            reason = envmod.STOP_CONVERGED
            break
        out = envmod.step(state, action, task, segmenter, config)
        if out.reward - r < config.tau_diff:
            # low-impact click: drop it and end the episode here
            reason = envmod.STOP_LOW_IMPACT
            break
        steps.append(TrajectoryStep(action, rle_encode(out.state.mask), r, out.reward))
        state, r = out.state, out.reward
        if out.done:
            reason = out.stop_reason
            break
    return Trajectory(task.id, init, tuple(steps), r, reason)


def replay_masks(
    trajectory: Trajectory,
    task: Task,
    segmenter: Segmenter,
    config: EnvConfig = EnvConfig(),
) -> list[BitMask]:
    """Re-run a trajectory's actions; returns [m0, m1, ...] as recomputed.

    Callers compare against the stored masks to confirm a segmenter
    reproduces the recording.
    """
    if trajectory.task_id != task.id:
        raise ValueError(f"trajectory for {trajectory.task_id!r} replayed on {task.id!r}")
    state = envmod.reset(task, trajectory.init, segmenter)
    masks = [state.mask]
    for st in trajectory.steps:
        out = envmod.step(state, st.action, task, segmenter, config)
        masks.append(out.state.mask)
        state = out.state
    return masks


@dataclass(frozen=True)
class SftSample:
    """One training sample: overlay image, prompt, expected reply text."""

    step_index: int
    image: RgbImage
    prompt: str
    target: str


def render_sft(
    trajectory: Trajectory,
    task: Task,
    prompt_config: PromptConfig = PromptConfig(),
    segmenter: Segmenter | None = None,
) -> list[SftSample]:
    """Render one sample per step: the pre-action overlay plus the action text.

    With miou_line enabled the reply text leads with the pre-action score,
    which is what a stepwise reward model trains on. Only random-click
    inits need the segmenter (to rebuild the opening mask); stored step
    masks cover everything after that.
    """
    if trajectory.task_id != task.id:
        raise ValueError(f"trajectory for {trajectory.task_id!r} rendered on {task.id!r}")
    w, h = task.image.width, task.image.height
    init = trajectory.init
    if init.variant == envmod.INIT_EMPTY:
        mask = BitMask.zeros(w, h)
    elif init.variant == envmod.INIT_BOX:
        mask = box_to_mask(init.box, w, h)
    else:
        if segmenter is None:
            raise ValueError("random-click init needs a segmenter to rebuild the first mask")
        mask = envmod.reset(task, init, segmenter).mask
    prompt = render_prompt(prompt_config.template_id, task.prompt)
    samples: list[SftSample] = []
    for t, st in enumerate(trajectory.steps):
        composite = render_overlay(task.image, mask, prompt_config.mask_color, prompt_config.alpha)
        text = format_action(st.action, prompt_config.coord_format)
        if prompt_config.miou_line:
            text = f"Current mIoU: {miou_percent(st.reward_before)}\n{text}"
        samples.append(SftSample(step_index=t, image=composite, prompt=prompt, target=text))
        mask = rle_decode(st.mask_after)
    return samples


# --- JSONL serialization ---------------------------------------------------


def trajectory_to_dict(trajectory: Trajectory) -> dict:
    return {
        "task_id": trajectory.task_id,
        "init": init_to_dict(trajectory.init),
        "steps": [
            {
                "action": action_to_dict(st.action),
                "mask_after": st.mask_after.to_dict(),
                "reward_before": st.reward_before,
                "reward_after": st.reward_after,
            }
            for st in trajectory.steps
        ],
        "final_reward": trajectory.final_reward,
        "stop_reason": trajectory.stop_reason,
    }


def trajectory_from_dict(obj: dict) -> Trajectory:
    steps = tuple(
        TrajectoryStep(
            action=action_from_dict(st["action"]),
            mask_after=RleMask.from_dict(st["mask_after"]),
            reward_before=float(st["reward_before"]),
            reward_after=float(st["reward_after"]),
        )
        for st in obj["steps"]
    )
    return Trajectory(
        task_id=obj["task_id"],
        init=init_from_dict(obj["init"]),
        steps=steps,
        final_reward=float(obj["final_reward"]),
        stop_reason=obj["stop_reason"],
    )


def write_jsonl(trajectories: Sequence[Trajectory], path: str) -> None:
    """One JSON object per line; stable field order for reproducible bytes."""
    with open(path, "w", encoding="utf-8") as fh:
        for traj in trajectories:
            fh.write(json.dumps(trajectory_to_dict(traj)))
            fh.write("\n")


def read_jsonl(path: str) -> list[Trajectory]:
    """Inverse of write_jsonl; names the offending line on any failure."""
    out: list[Trajectory] = []
    with open(path, "r", encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise JsonlError(i, f"invalid JSON: {e}")
            try:
                out.append(trajectory_from_dict(obj))
            except (KeyError, TypeError, ValueError) as e:
                raise JsonlError(i, f"invalid trajectory record: {e}")
    return out


# --- synthetic tasks -------------------------------------------------------

FAMILIES = ("disk", "rectangle", "ring", "bar", "scatter")

_PROMPTS = {
    "disk": "the filled disk",
    "rectangle": "the solid rectangle",
    "ring": "the hollow ring",
    "bar": "the thin bar",
    "scatter": "the scattered blobs",
}


def synth_tasks(n: int, side: int = 64, seed: int = 0) -> list[Task]:
    """Deterministic synthetic task set cycling through five shape families.

    Flat background and foreground intensities at least 64 levels apart,
    so intensity-based segmenters have something to hold on to. Shape
    families: disk, rectangle, ring (hollow), thin bar (<= 2 px wide),
    and a 2-3 component scatter.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if side < 16:
        raise ValueError(f"side must be >= 16, got {side}")
    rng = np.random.default_rng(seed)
    tasks: list[Task] = []
    for i in range(n):
        family = FAMILIES[i % len(FAMILIES)]
        target = _make_shape(family, side, rng)
        lo = int(rng.integers(0, 256 - 64))
        hi = int(rng.integers(lo + 64, 256))
        if rng.random() < 0.5:
            bg, fg = lo, hi
        else:
            bg, fg = hi, lo
        img = np.full((side, side), bg, dtype=np.uint8)
        img[target] = fg
        tasks.append(
            Task(
                id=f"synth-{i:04d}",
                image=GrayImage(img),
                target=BitMask(target),
                prompt=_PROMPTS[family],
            )
        )
    return tasks


def _make_shape(family: str, side: int, rng: np.random.Generator) -> np.ndarray:
    builder: Callable[[int, np.random.Generator], tuple[np.ndarray, int]] = _BUILDERS[family]
    for _ in range(64):
        mask, expected = builder(side, rng)
        if mask.any() and len(components(BitMask(mask))) == expected:
            return mask
    raise RuntimeError(f"could not synthesize a valid {family} shape")  # pragma: no cover


def _grid(side: int) -> tuple[np.ndarray, np.ndarray]:
    ys, xs = np.mgrid[0:side, 0:side]
    return xs, ys


def _disk_at(side: int, cx: int, cy: int, r: int) -> np.ndarray:
    xs, ys = _grid(side)
    return (xs - cx) ** 2 + (ys - cy) ** 2 <= r * r


def _build_disk(side: int, rng: np.random.Generator) -> tuple[np.ndarray, int]:
    r = int(rng.integers(side // 8, side // 4 + 1))
    cx = int(rng.integers(r + 1, side - r - 1))
    cy = int(rng.integers(r + 1, side - r - 1))
    return _disk_at(side, cx, cy, r), 1


def _build_rectangle(side: int, rng: np.random.Generator) -> tuple[np.ndarray, int]:
    w = int(rng.integers(side // 6, side // 2 + 1))
    h = int(rng.integers(side // 6, side // 2 + 1))
    x0 = int(rng.integers(1, side - w))
    y0 = int(rng.integers(1, side - h))
    mask = np.zeros((side, side), dtype=bool)
    mask[y0 : y0 + h, x0 : x0 + w] = True
    return mask, 1


def _build_ring(side: int, rng: np.random.Generator) -> tuple[np.ndarray, int]:
    r_out = int(rng.integers(max(5, side // 5), side // 3 + 1))
    width = int(rng.integers(2, max(3, r_out // 3) + 1))
    r_in = max(2, r_out - width)
    cx = int(rng.integers(r_out + 1, side - r_out - 1))
    cy = int(rng.integers(r_out + 1, side - r_out - 1))
    ring = _disk_at(side, cx, cy, r_out) & ~_disk_at(side, cx, cy, r_in)
    return ring, 1


def _build_bar(side: int, rng: np.random.Generator) -> tuple[np.ndarray, int]:
    thickness = int(rng.integers(1, 3))
    length = int(rng.integers(side // 2, side - 4))
    mask = np.zeros((side, side), dtype=bool)
    if rng.random() < 0.5:
        y0 = int(rng.integers(2, side - thickness - 2))
        x0 = int(rng.integers(2, side - length - 1))
        mask[y0 : y0 + thickness, x0 : x0 + length] = True
    else:
        x0 = int(rng.integers(2, side - thickness - 2))
        y0 = int(rng.integers(2, side - length - 1))
        mask[y0 : y0 + length, x0 : x0 + thickness] = True
    return mask, 1


def _build_scatter(side: int, rng: np.random.Generator) -> tuple[np.ndarray, int]:
    k = int(rng.integers(2, 4))
    cell = side // 3
    cells = rng.choice(9, size=k, replace=False)
    mask = np.zeros((side, side), dtype=bool)
    for c in cells:
        gy, gx = divmod(int(c), 3)
        r = int(rng.integers(max(3, side // 16), max(4, side // 10) + 1))
        r = min(r, cell // 2 - 2)
        cx = gx * cell + int(rng.integers(r + 1, cell - r - 1))
        cy = gy * cell + int(rng.integers(r + 1, cell - r - 1))
        mask |= _disk_at(side, cx, cy, r)
    return mask, k


_BUILDERS: dict[str, Callable[[int, np.random.Generator], tuple[np.ndarray, int]]] = {
    "disk": _build_disk,
    "rectangle": _build_rectangle,
    "ring": _build_ring,
    "bar": _build_bar,
    "scatter": _build_scatter,
}
