from __future__ import annotations

import numpy as np
import pytest
from conftest import mask_of

from maskloop.env import (
    STOP_LOW_IMPACT,
    STOP_MAX,
    STOP_TAU,
    Action,
    EnvConfig,
    Task,
)
from maskloop.errors import HookError, RemoteError, ReplayMismatchError
from maskloop.expert import next_click
from maskloop.improve import (
    DatasetManifest,
    TrainHook,
    refine_star_plus,
    refine_star_plus_verbose,
    rollout,
    star_filter,
    star_iteration,
)
from maskloop.policy import (
    ExpertPolicy,
    NoiseConfig,
    NoisyExpertPolicy,
    Policy,
    PolicyProposal,
)
from maskloop.raster import GrayImage, rle_decode, rle_encode
from maskloop.segmenters import OracleSegmenter
from maskloop.trajgen import (
    Trajectory,
    TrajectoryStep,
    generate_trajectory,
    synth_tasks,
    write_jsonl,
)


def _task(rows, task_id="t0"):
    target = mask_of(rows)
    img = np.where(target.data, 200, 20).astype(np.uint8)
    return Task(id=task_id, image=GrayImage(img), target=target, prompt="the blob")


class BackgroundClicker(Policy):
    """Always clicks the top-left pixel center; useless on purpose."""

    def propose(self, task, state, k):
        x = 0.5 / task.image.width
        y = 0.5 / task.image.height
        return [PolicyProposal(Action.positive(x, y))]


class FailingPolicy(Policy):
    def __init__(self, bad_ids):
        self.bad_ids = set(bad_ids)

    def propose(self, task, state, k):
        if task.id in self.bad_ids:
            raise RemoteError("connection refused")
        return ExpertPolicy().propose(task, state, k)


# --- rollout -----------------------------------------------------------


def test_expert_rollout_matches_generated_trajectory():
    for task in synth_tasks(10, side=32, seed=1):
        trajs, failures = rollout(ExpertPolicy(), [task], OracleSegmenter())
        assert failures == {}
        assert trajs[0] == generate_trajectory(task, OracleSegmenter())


def test_rollout_same_seed_is_identical():
    tasks = synth_tasks(6, side=32, seed=2)
    policy = NoisyExpertPolicy(NoiseConfig(sigma=0.2, flip_prob=0.2, seed=5))
    a, _ = rollout(policy, tasks, OracleSegmenter(), seed=42)
    b, _ = rollout(policy, tasks, OracleSegmenter(), seed=42)
    assert a == b
    c, _ = rollout(policy, tasks, OracleSegmenter(), seed=43)
    assert a != c


def test_rollout_records_non_improving_steps():
    task = _task([".##", ".##"])
    config = EnvConfig(max_steps=4)
    trajs, _ = rollout(BackgroundClicker(), [task], OracleSegmenter(), config)
    traj = trajs[0]
    assert len(traj.steps) == 4
    assert traj.stop_reason == STOP_MAX
    assert all(st.reward_after == 0.0 for st in traj.steps)


def test_rollout_collects_remote_failures():
    tasks = synth_tasks(4, side=32, seed=3)
    policy = FailingPolicy([tasks[1].id, tasks[2].id])
    trajs, failures = rollout(policy, tasks, OracleSegmenter())
    assert sorted(failures) == sorted([tasks[1].id, tasks[2].id])
    assert [t.task_id for t in trajs] == [tasks[0].id, tasks[3].id]


# --- refine ------------------------------------------------------------


def test_refine_keeps_fully_improving_rollout():
    for task in synth_tasks(8, side=32, seed=4):
        trajs, _ = rollout(ExpertPolicy(), [task], OracleSegmenter())
        refined, corrected = refine_star_plus_verbose(trajs[0], task, OracleSegmenter())
        assert not corrected
        assert refined == trajs[0]


def _with_wasted_click(task, config=EnvConfig()):
    """Expert trajectory with a do-nothing background click spliced in."""
    base = generate_trajectory(task, OracleSegmenter(), config)
    assert len(base.steps) >= 2
    first = base.steps[0]
    x = 0.5 / task.image.width
    y = 0.5 / task.image.height
    wasted = TrajectoryStep(
        action=Action.positive(x, y),
        mask_after=first.mask_after,
        reward_before=first.reward_after,
        reward_after=first.reward_after,
    )
    steps = (first, wasted) + base.steps[1:]
    return base, Trajectory(task.id, base.init, steps, base.final_reward, base.stop_reason)


def test_refine_substitutes_expert_at_first_bad_step():
    task = _task(
        [
            "##......",
            "##......",
            "........",
            ".....###",
            ".....###",
        ]
    )
    base, damaged = _with_wasted_click(task)
    refined, corrected = refine_star_plus_verbose(damaged, task, OracleSegmenter())
    assert corrected
    assert refined.steps[0] == base.steps[0]
    # the wasted click is gone and the expert's own click takes its place
    expected = next_click(rle_decode(base.steps[0].mask_after), task.target)
    assert refined.steps[1].action == expected
    assert refined.final_reward == 1.0
    assert refined.stop_reason == STOP_TAU


def test_refined_rollouts_never_lose_reward(rng):
    tasks = synth_tasks(12, side=32, seed=6)
    policy = NoisyExpertPolicy(NoiseConfig(sigma=0.25, flip_prob=0.25, seed=8))
    trajs, _ = rollout(policy, tasks, OracleSegmenter(), seed=7)
    by_id = {t.id: t for t in tasks}
    for traj in trajs:
        refined = refine_star_plus(traj, by_id[traj.task_id], OracleSegmenter())
        assert refined.final_reward >= traj.final_reward
        for st in refined.steps:
            assert st.reward_after > st.reward_before


def test_refine_empty_rollout_becomes_expert_episode():
    task = _task(["###", "###"])
    empty = Trajectory(task.id, generate_trajectory(task, OracleSegmenter()).init, (), 0.0, STOP_LOW_IMPACT)
    refined = refine_star_plus(empty, task, OracleSegmenter())
    assert refined == generate_trajectory(task, OracleSegmenter())


def test_refine_detects_mask_divergence():
    task = _task(["##..", "....", "..##"])
    trajs, _ = rollout(ExpertPolicy(), [task], OracleSegmenter())
    traj = trajs[0]
    flipped = ~rle_decode(traj.steps[0].mask_after)
    bad_step = TrajectoryStep(
        action=traj.steps[0].action,
        mask_after=rle_encode(flipped),
        reward_before=traj.steps[0].reward_before,
        reward_after=traj.steps[0].reward_after,
    )
    damaged = Trajectory(task.id, traj.init, (bad_step,) + traj.steps[1:], traj.final_reward, traj.stop_reason)
    with pytest.raises(ReplayMismatchError):
        refine_star_plus(damaged, task, OracleSegmenter())


def test_refine_rejects_actions_past_episode_end():
    task = _task(["##", "##"])
    trajs, _ = rollout(ExpertPolicy(), [task], OracleSegmenter())
    traj = trajs[0]
    assert traj.final_reward == 1.0
    extra = traj.steps + traj.steps  # episode already done after step 1
    damaged = Trajectory(task.id, traj.init, extra, traj.final_reward, traj.stop_reason)
    with pytest.raises(ReplayMismatchError):
        refine_star_plus(damaged, task, OracleSegmenter())


def test_refine_checks_task_identity():
    task = _task(["##"])
    other = _task(["##"], task_id="zz")
    trajs, _ = rollout(ExpertPolicy(), [task], OracleSegmenter())
    with pytest.raises(ValueError):
        refine_star_plus(trajs[0], other, OracleSegmenter())


def test_keep_rule_tau_diff_is_stricter():
    # one big block plus a single far pixel: the last click gains ~4e-4,
    # positive but below tau_diff
    rows = ["#" * 20] * 20 + ["." * 20] * 2 + ["." * 19 + "#"]
    task = _task(rows)
    config = EnvConfig(tau_stop=1.0, tau_diff=0.01)
    trajs, _ = rollout(ExpertPolicy(), [task], OracleSegmenter(), config)
    traj = trajs[0]
    assert len(traj.steps) == 2
    small_gain = traj.steps[1].reward_after - traj.steps[1].reward_before
    assert 0.0 < small_gain < config.tau_diff

    kept = refine_star_plus(traj, task, OracleSegmenter(), config, keep_rule="positive")
    assert kept == traj
    trimmed = refine_star_plus(traj, task, OracleSegmenter(), config, keep_rule="tau_diff")
    assert trimmed.steps == traj.steps[:1]
    assert trimmed.stop_reason == STOP_LOW_IMPACT


def test_refine_validates_keep_rule():
    task = _task(["##"])
    trajs, _ = rollout(ExpertPolicy(), [task], OracleSegmenter())
    with pytest.raises(ValueError):
        refine_star_plus(trajs[0], task, OracleSegmenter(), keep_rule="lenient")


# --- filtering -----------------------------------------------------------


def test_star_filter_boundary_inclusive():
    t = generate_trajectory(_task(["##"]), OracleSegmenter())
    low = Trajectory(t.task_id, t.init, t.steps, 0.9499, t.stop_reason)
    edge = Trajectory(t.task_id, t.init, t.steps, 0.95, t.stop_reason)
    assert star_filter([low, edge, t], 0.95) == [edge, t]


def test_star_filter_validates_threshold():
    with pytest.raises(ValueError):
        star_filter([], 1.5)


# --- manifests and hooks ---------------------------------------------------


def _seed_manifest(tmp_path, n=3, name="seed"):
    tasks = synth_tasks(n, side=32, seed=10)
    trajs = [generate_trajectory(t, OracleSegmenter()) for t in tasks]
    path = str(tmp_path / f"{name}.jsonl")
    write_jsonl(trajs, path)
    manifest = DatasetManifest(name=name, files=(path,), provenance="generated", n_trajectories=n)
    manifest_path = str(tmp_path / f"{name}.json")
    manifest.save(manifest_path)
    return manifest, manifest_path, tasks, trajs


def test_manifest_save_load_round_trip(tmp_path):
    manifest, manifest_path, _, trajs = _seed_manifest(tmp_path)
    loaded = DatasetManifest.load(manifest_path)
    assert loaded.name == manifest.name
    assert loaded.provenance == "generated"
    assert loaded.n_trajectories == 3
    assert loaded.load_trajectories() == trajs


def test_manifest_load_rejects_count_mismatch(tmp_path):
    _, manifest_path, _, trajs = _seed_manifest(tmp_path)
    bad = DatasetManifest(name="seed", files=(str(tmp_path / "seed.jsonl"),), provenance="generated", n_trajectories=99)
    bad_path = str(tmp_path / "bad.json")
    bad.save(bad_path)
    with pytest.raises(ValueError):
        DatasetManifest.load(bad_path)


def test_manifest_rejects_unknown_provenance():
    with pytest.raises(ValueError):
        DatasetManifest(name="x", files=(), provenance="scraped", n_trajectories=0)


def test_manifest_paths_are_relative_to_manifest(tmp_path):
    manifest, manifest_path, _, trajs = _seed_manifest(tmp_path)
    moved = tmp_path / "nested"
    moved.mkdir()
    import shutil

    shutil.move(str(tmp_path / "seed.jsonl"), str(moved / "seed.jsonl"))
    shutil.move(manifest_path, str(moved / "seed.json"))
    assert DatasetManifest.load(str(moved / "seed.json")).load_trajectories() == trajs


def test_train_hook_validation():
    with pytest.raises(ValueError):
        TrainHook(mode="magic")
    with pytest.raises(ValueError):
        TrainHook(mode="external_command", command="train.sh")
    TrainHook(mode="external_command", command="train.sh {dataset}")


def test_train_hook_runs_command(tmp_path):
    marker = tmp_path / "copied.jsonl"
    data = tmp_path / "data.jsonl"
    data.write_text("{}\n")
    hook = TrainHook(mode="external_command", command=f"cp {{dataset}} {marker}")
    hook.invoke(str(data))
    assert marker.read_text() == "{}\n"


def test_train_hook_raises_on_failure(tmp_path):
    hook = TrainHook(mode="external_command", command="cp {dataset} /nonexistent-dir-xyz/out")
    with pytest.raises(HookError):
        hook.invoke(str(tmp_path / "missing.jsonl"))


# --- iteration driver --------------------------------------------------------


def test_star_iteration_zero_iters_returns_seed(tmp_path):
    manifest, _, tasks, _ = _seed_manifest(tmp_path)
    final, reports = star_iteration(
        "star", ExpertPolicy(), manifest, tasks, 0, TrainHook(), OracleSegmenter(), out_dir=str(tmp_path)
    )
    assert final is manifest
    assert reports == []


def test_star_iteration_validates_inputs(tmp_path):
    manifest, _, tasks, _ = _seed_manifest(tmp_path)
    with pytest.raises(ValueError):
        star_iteration("sft", ExpertPolicy(), manifest, tasks, 1, TrainHook(), OracleSegmenter())
    with pytest.raises(ValueError):
        star_iteration("star", ExpertPolicy(), manifest, tasks, -1, TrainHook(), OracleSegmenter())


def test_star_mode_trains_on_kept_rollouts_only(tmp_path):
    manifest, _, tasks, _ = _seed_manifest(tmp_path, n=4)
    out = tmp_path / "runs"
    final, reports = star_iteration(
        "star", ExpertPolicy(), manifest, tasks, 2, TrainHook(), OracleSegmenter(), out_dir=str(out)
    )
    assert final.provenance == "refined"
    assert final.n_trajectories == 4  # expert solves everything
    assert len(reports) == 2
    assert (out / "iter01_refined.jsonl").exists()
    assert (out / "iter02_manifest.json").exists()
    for rep in reports:
        assert rep["n_rollouts"] == 4
        assert rep["n_failures"] == 0
        assert rep["mean_reward_refined"] == 1.0


def test_star_mode_filters_bad_rollouts(tmp_path):
    manifest, _, tasks, _ = _seed_manifest(tmp_path, n=3)
    final, reports = star_iteration(
        "star",
        BackgroundClicker(),
        manifest,
        tasks,
        1,
        TrainHook(),
        OracleSegmenter(),
        out_dir=str(tmp_path / "runs"),
    )
    assert final.n_trajectories == 0
    assert reports[0]["mean_reward_raw"] == 0.0
    assert reports[0]["mean_reward_refined"] == 0.0


def test_star_plus_merges_seed_and_refined(tmp_path):
    manifest, _, tasks, seed_trajs = _seed_manifest(tmp_path, n=3)
    policy = NoisyExpertPolicy(NoiseConfig(sigma=0.25, flip_prob=0.25, seed=13))
    out = tmp_path / "runs"
    final, reports = star_iteration(
        "star_plus", policy, manifest, tasks, 2, TrainHook(), OracleSegmenter(), out_dir=str(out), seed=3
    )
    assert final.provenance == "merged"
    assert final.n_trajectories == len(seed_trajs) + len(tasks)
    loaded = final.load_trajectories()
    assert loaded[: len(seed_trajs)] == seed_trajs
    for rep in reports:
        assert rep["mean_reward_refined"] >= rep["mean_reward_raw"]
        assert set(rep) == {
            "iteration",
            "n_rollouts",
            "n_failures",
            "n_corrections",
            "mean_reward_raw",
            "mean_reward_refined",
        }


def test_star_plus_counts_corrections(tmp_path):
    manifest, _, tasks, _ = _seed_manifest(tmp_path, n=3)
    _, reports = star_iteration(
        "star_plus",
        BackgroundClicker(),
        manifest,
        tasks,
        1,
        TrainHook(),
        OracleSegmenter(),
        out_dir=str(tmp_path / "runs"),
    )
    assert reports[0]["n_corrections"] == 3
    assert reports[0]["mean_reward_refined"] == 1.0


def test_star_iteration_is_reproducible(tmp_path):
    manifest, _, tasks, _ = _seed_manifest(tmp_path, n=4)
    policy = NoisyExpertPolicy(NoiseConfig(sigma=0.2, flip_prob=0.2, seed=21))
    kwargs = dict(config=EnvConfig(), tau_star=0.95, seed=17)
    _, r1 = star_iteration(
        "star_plus", policy, manifest, tasks, 2, TrainHook(), OracleSegmenter(), out_dir=str(tmp_path / "a"), **kwargs
    )
    _, r2 = star_iteration(
        "star_plus", policy, manifest, tasks, 2, TrainHook(), OracleSegmenter(), out_dir=str(tmp_path / "b"), **kwargs
    )
    assert r1 == r2
    a = (tmp_path / "a" / "iter01_train.jsonl").read_bytes()
    b = (tmp_path / "b" / "iter01_train.jsonl").read_bytes()
    assert a == b


def test_star_iteration_invokes_hook_each_iter(tmp_path):
    manifest, _, tasks, _ = _seed_manifest(tmp_path, n=2)
    log_dir = tmp_path / "hooklog"
    log_dir.mkdir()
    hook = TrainHook(mode="external_command", command=f"cp {{dataset}} {log_dir}/last.jsonl")
    star_iteration(
        "star", ExpertPolicy(), manifest, tasks, 2, hook, OracleSegmenter(), out_dir=str(tmp_path / "runs")
    )
    assert (log_dir / "last.jsonl").read_bytes() == (tmp_path / "runs" / "iter02_refined.jsonl").read_bytes()
