"""Reward-guided greedy search over candidate clicks.

Each step asks the policy for up to K candidate actions, applies every
candidate through the segmenter, scores the resulting masks with a
process reward model, and adopts the best one. The search never looks at
the true reward: it stops on the step budget or once the running best
PRM score stalls, and it returns the best-scoring mask over the whole
episode (including the initial mask), not necessarily the last one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import env as envmod
from .env import Action, EnvConfig, InitSpec, Task
from .policy import Policy, PolicyProposal, Prm, prm_score
from .raster import BitMask
from .segmenters import Segmenter


@dataclass(frozen=True)
class SearchConfig:
    """Candidate count, step budget, and the stall-based stop rule."""

    k: int = 1
    max_steps: int = 7
    convergence_eps: float = 1e-3
    convergence_patience: int = 2

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.max_steps < 1:
            raise ValueError(f"max_steps must be >= 1, got {self.max_steps}")
        if self.convergence_eps < 0:
            raise ValueError(f"convergence_eps must be >= 0, got {self.convergence_eps}")
        if self.convergence_patience < 1:
            raise ValueError(f"convergence_patience must be >= 1, got {self.convergence_patience}")

    @classmethod
    def simple_profile(cls) -> "SearchConfig":
        return cls(k=1, max_steps=7)

    @classmethod
    def complex_profile(cls) -> "SearchConfig":
        return cls(k=3, max_steps=11)


@dataclass(frozen=True)
class StepTrace:
    """What one search step considered and which candidate won."""

    candidates: tuple[Action, ...]
    scores: tuple[float, ...]
    chosen: int


@dataclass(frozen=True)
class SearchTrace:
    r0: float
    steps: tuple[StepTrace, ...]
    best_step: int
    best_reward: float

    def to_dict(self) -> dict:
        return {
            "r0": self.r0,
            "steps": [
                {
                    "candidates": [envmod.action_to_dict(a) for a in st.candidates],
                    "scores": list(st.scores),
                    "chosen": st.chosen,
                }
                for st in self.steps
            ],
            "best_step": self.best_step,
            "best_reward": self.best_reward,
        }


def _quantize_key(action: Action) -> tuple:
    def q(v: float) -> int:
        return min(999, int(v * 1000.0 + 0.5))

    if action.is_click:
        return (action.kind, q(action.point.x), q(action.point.y))
    b = action.box
    return (action.kind, q(b.x1), q(b.y1), q(b.x2), q(b.y2))


def _dedupe(proposals: list[PolicyProposal]) -> list[PolicyProposal]:
    seen: set[tuple] = set()
    out: list[PolicyProposal] = []
    for p in proposals:
        key = _quantize_key(p.action)
        if key not in seen:
            seen.add(key)
            out.append(p)
    return out


def prm_greedy(
    task: Task,
    policy: Policy,
    prm: Prm,
    segmenter: Segmenter,
    config: SearchConfig = SearchConfig(),
    init: InitSpec = InitSpec.empty(),
    seed: int | None = None,
) -> tuple[BitMask, float, SearchTrace]:
    """Best-of-K greedy search; returns (best mask, its PRM score, trace).

    The internal episode runs without a true-reward stop (the search only
    ever consults the PRM), so the loop ends on the step budget, on
    candidate exhaustion, or once the running best fails to improve by
    more than convergence_eps for convergence_patience steps in a row.
    On score ties the earlier step and the earlier candidate win.
    """
    policy.start_task(task, seed)
    env_config = EnvConfig(max_steps=config.max_steps, tau_stop=1.0, tau_diff=0.0)
    state = envmod.reset(task, init, segmenter)
    best_mask = state.mask
    best_score = prm_score(prm, task, state.mask)
    best_step = 0
    r0 = best_score
    traces: list[StepTrace] = []
    stall = 0
    for t in range(1, config.max_steps + 1):
        if state.finished:
            break
        proposals = _dedupe(policy.propose(task, state, config.k))
        if not proposals:
            break
        outcomes = [
            envmod.step(state, p.action, task, segmenter, env_config) for p in proposals
        ]
        scores = [prm_score(prm, task, o.state.mask) for o in outcomes]
        chosen = int(np.argmax(scores))
        traces.append(
            StepTrace(
                candidates=tuple(p.action for p in proposals),
                scores=tuple(scores),
                chosen=chosen,
            )
        )
        state = outcomes[chosen].state
        if scores[chosen] > best_score:
            improved = scores[chosen] - best_score > config.convergence_eps
            best_mask, best_score, best_step = state.mask, scores[chosen], t
        else:
            improved = False
        stall = 0 if improved else stall + 1
        if stall >= config.convergence_patience:
            break
    return best_mask, best_score, SearchTrace(r0, tuple(traces), best_step, best_score)
