"""The click-annotation decision process.

An episode works on one task (image, target mask, object description).
The state is the current mask plus the full action history; a step hands
the whole history to a segmenter, which returns the next mask, and the
reward is the IoU of that mask against the target. There is no
discounting anywhere.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import EpisodeDoneError, MaskShapeError
from .raster import (
    BitMask,
    GrayImage,
    NormBox,
    NormPoint,
    bbox,
    box_to_mask,
    iou,
    read_pgm_image,
    read_pgm_mask,
    write_pgm,
)

POSITIVE_CLICK = "positive_click"
NEGATIVE_CLICK = "negative_click"
BOX = "box"

# stop reasons shared by the environment and the dataset builders
STOP_RUNNING = "running"
STOP_TAU = "reached_tau_stop"
STOP_MAX = "max_steps"
STOP_LOW_IMPACT = "low_impact"
STOP_CONVERGED = "converged"


@dataclass(frozen=True)
class Action:
    """A signed click or a box prompt."""

    kind: str
    point: NormPoint | None = None
    box: NormBox | None = None

    def __post_init__(self):
        if self.kind in (POSITIVE_CLICK, NEGATIVE_CLICK):
            if self.point is None or self.box is not None:
                raise ValueError(f"{self.kind} takes exactly a point")
        elif self.kind == BOX:
            if self.box is None or self.point is not None:
                raise ValueError("box action takes exactly a box")
        else:
            raise ValueError(f"unknown action kind {self.kind!r}")

    @classmethod
    def positive(cls, x: float, y: float) -> "Action":
        return cls(POSITIVE_CLICK, point=NormPoint(x, y))

    @classmethod
    def negative(cls, x: float, y: float) -> "Action":
        return cls(NEGATIVE_CLICK, point=NormPoint(x, y))

    @classmethod
    def box_prompt(cls, box: NormBox) -> "Action":
        return cls(BOX, box=box)

    @property
    def is_click(self) -> bool:
        return self.kind in (POSITIVE_CLICK, NEGATIVE_CLICK)

    @property
    def sign(self) -> int:
        """+1 for positive clicks, -1 for negative clicks."""
        if not self.is_click:
            raise ValueError("box actions carry no sign")
        return 1 if self.kind == POSITIVE_CLICK else -1


def action_to_dict(action: Action) -> dict:
    if action.is_click:
        return {"kind": action.kind, "x": action.point.x, "y": action.point.y}
    b = action.box
    return {"kind": BOX, "x1": b.x1, "y1": b.y1, "x2": b.x2, "y2": b.y2}


def action_from_dict(obj: dict) -> Action:
    kind = obj.get("kind")
    if kind in (POSITIVE_CLICK, NEGATIVE_CLICK):
        return Action(kind, point=NormPoint(obj["x"], obj["y"]))
    if kind == BOX:
        return Action(BOX, box=NormBox(obj["x1"], obj["y1"], obj["x2"], obj["y2"]))
    raise ValueError(f"unknown action kind {kind!r}")


@dataclass(frozen=True)
class Task:
    """One annotation problem: image, nonempty target mask, description."""

    id: str
    image: GrayImage
    target: BitMask
    prompt: str

    def __post_init__(self):
        if self.image.shape != self.target.shape:
            raise MaskShapeError(
                f"task {self.id}: image {self.image.shape} vs target {self.target.shape}"
            )
        if self.target.is_empty():
            raise ValueError(f"task {self.id}: empty target mask")


@dataclass(frozen=True)
class EnvConfig:
    """Episode limits: step budget and the stop/keep thresholds."""

    max_steps: int = 7
    tau_stop: float = 0.95
    tau_diff: float = 0.01

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError(f"max_steps must be >= 1, got {self.max_steps}")
        if not (0.0 <= self.tau_stop <= 1.0):
            raise ValueError(f"tau_stop out of [0, 1]: {self.tau_stop}")
        if not (0.0 <= self.tau_diff <= 1.0):
            raise ValueError(f"tau_diff out of [0, 1]: {self.tau_diff}")

    @classmethod
    def simple_profile(cls) -> "EnvConfig":
        """Short episodes for mostly-convex single objects."""
        return cls(max_steps=7)

    @classmethod
    def complex_profile(cls) -> "EnvConfig":
        """Longer budget for thin or multi-part objects."""
        return cls(max_steps=11)


INIT_EMPTY = "empty"
INIT_BOX = "from_box"
INIT_RANDOM = "from_random_clicks"


@dataclass(frozen=True)
class InitSpec:
    """How an episode starts: blank, a filled box, or seeded random clicks."""

    variant: str = INIT_EMPTY
    box: NormBox | None = None
    n_pos: int = 0
    n_neg: int = 0
    seed: int | None = None

    def __post_init__(self):
        if self.variant == INIT_EMPTY:
            pass
        elif self.variant == INIT_BOX:
            if self.box is None:
                raise ValueError("from_box init needs a box")
        elif self.variant == INIT_RANDOM:
            if self.n_pos < 0 or self.n_neg < 0 or self.n_pos + self.n_neg < 1:
                raise ValueError("random init needs at least one click")
            if self.seed is None:
                raise ValueError("random init needs a seed")
        else:
            raise ValueError(f"unknown init variant {self.variant!r}")

    @classmethod
    def empty(cls) -> "InitSpec":
        return cls(INIT_EMPTY)

    @classmethod
    def from_box(cls, box: NormBox) -> "InitSpec":
        return cls(INIT_BOX, box=box)

    @classmethod
    def from_random_clicks(cls, n_pos: int, n_neg: int, seed: int) -> "InitSpec":
        return cls(INIT_RANDOM, n_pos=n_pos, n_neg=n_neg, seed=seed)


def init_to_dict(init: InitSpec) -> dict:
    if init.variant == INIT_EMPTY:
        return {"variant": INIT_EMPTY}
    if init.variant == INIT_BOX:
        b = init.box
        return {"variant": INIT_BOX, "box": [b.x1, b.y1, b.x2, b.y2]}
    return {
        "variant": INIT_RANDOM,
        "n_pos": init.n_pos,
        "n_neg": init.n_neg,
        "seed": init.seed,
    }


def init_from_dict(obj: dict) -> InitSpec:
    variant = obj.get("variant")
    if variant == INIT_EMPTY:
        return InitSpec.empty()
    if variant == INIT_BOX:
        b = obj["box"]
        return InitSpec.from_box(NormBox(b[0], b[1], b[2], b[3]))
    if variant == INIT_RANDOM:
        return InitSpec.from_random_clicks(obj["n_pos"], obj["n_neg"], obj["seed"])
    raise ValueError(f"unknown init variant {variant!r}")


@dataclass(frozen=True)
class EpisodeState:
    """Immutable episode snapshot; step() returns a fresh one."""

    step: int
    mask: BitMask
    history: tuple[Action, ...] = field(default_factory=tuple)
    init_box: NormBox | None = None
    finished: bool = False


class StepOutcome(NamedTuple):
    state: EpisodeState
    reward: float
    done: bool
    stop_reason: str


def reward(mask: BitMask, target: BitMask) -> float:
    """Episode reward: IoU of the current mask against the target."""
    return iou(mask, target)


def reset(task: Task, init: InitSpec, segmenter) -> EpisodeState:
    """Start an episode.

    Empty and box inits never touch the segmenter; random-click inits run
    the segmenter once on the sampled clicks, which also become the
    opening history.
    """
    w, h = task.image.width, task.image.height
    if init.variant == INIT_EMPTY:
        return EpisodeState(step=0, mask=BitMask.zeros(w, h))
    if init.variant == INIT_BOX:
        return EpisodeState(step=0, mask=box_to_mask(init.box, w, h), init_box=init.box)
    rng = np.random.default_rng(init.seed)
    b = bbox(task.target)
    pts = rng.uniform(
        low=[b.x1, b.y1], high=[b.x2, b.y2], size=(init.n_pos + init.n_neg, 2)
    )
    clicks = tuple(
        Action.positive(x, y) if i < init.n_pos else Action.negative(x, y)
        for i, (x, y) in enumerate(pts)
    )
    mask = segmenter.segment(task, clicks, None)
    _check_mask(task, mask)
    return EpisodeState(step=0, mask=mask, history=clicks)


def effective_prompts(
    history: Sequence[Action], init_box: NormBox | None
) -> tuple[tuple[Action, ...], NormBox | None]:
    """Split a history into (clicks, box): the box is the most recent box
    action, falling back to the episode's init box."""
    clicks = tuple(a for a in history if a.is_click)
    box = init_box
    for a in history:
        if a.kind == BOX:
            box = a.box
    return clicks, box


def step(
    state: EpisodeState,
    action: Action,
    task: Task,
    segmenter,
    config: EnvConfig,
) -> StepOutcome:
    """Apply one action: re-segment from the full history, score, advance."""
    if state.finished or state.step >= config.max_steps:
        raise EpisodeDoneError(
            f"task {task.id}: episode already finished at step {state.step}"
        )
    history = state.history + (action,)
    clicks, box = effective_prompts(history, state.init_box)
    mask = segmenter.segment(task, clicks, box)
    _check_mask(task, mask)
    r = iou(mask, task.target)
    n = state.step + 1
    if r >= config.tau_stop:
        done, why = True, STOP_TAU
    elif n >= config.max_steps:
        done, why = True, STOP_MAX
    else:
        done, why = False, STOP_RUNNING
    new_state = EpisodeState(
        step=n, mask=mask, history=history, init_box=state.init_box, finished=done
    )
    return StepOutcome(new_state, r, done, why)


def _check_mask(task: Task, mask: BitMask) -> None:
    if mask.shape != task.image.shape:
        raise MaskShapeError(
            f"task {task.id}: segmenter returned {mask.shape}, expected {task.image.shape}"
        )


# --- task manifests ------------------------------------------------------


def load_tasks(manifest_path: str) -> list[Task]:
    """Load tasks from a JSON manifest of image/target PGM paths.

    Relative paths resolve against the manifest's directory. Tasks with
    mismatched dimensions or empty targets are rejected outright.
    """
    with open(manifest_path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    entries = data["tasks"] if isinstance(data, dict) else data
    base = os.path.dirname(os.path.abspath(manifest_path))
    tasks = []
    for entry in entries:
        image = read_pgm_image(_resolve(base, entry["image_path"]))
        target = read_pgm_mask(_resolve(base, entry["target_path"]))
        tasks.append(Task(id=entry["id"], image=image, target=target, prompt=entry["prompt"]))
    return tasks


def write_task_dir(tasks: Sequence[Task], out_dir: str, header: dict | None = None) -> str:
    """Write PGMs plus a manifest.json under out_dir; returns the manifest path."""
    img_dir = os.path.join(out_dir, "images")
    tgt_dir = os.path.join(out_dir, "targets")
    os.makedirs(img_dir, exist_ok=True)
    os.makedirs(tgt_dir, exist_ok=True)
    entries = []
    for task in tasks:
        image_rel = os.path.join("images", f"{task.id}.pgm")
        target_rel = os.path.join("targets", f"{task.id}.pgm")
        write_pgm(task.image, os.path.join(out_dir, image_rel))
        write_pgm(task.target, os.path.join(out_dir, target_rel))
        entries.append(
            {
                "id": task.id,
                "image_path": image_rel,
                "target_path": target_rel,
                "prompt": task.prompt,
            }
        )
    manifest: dict = {"tasks": entries}
    if header is not None:
        manifest["header"] = header
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _resolve(base: str, path: str) -> str:
    return path if os.path.isabs(path) else os.path.join(base, path)
