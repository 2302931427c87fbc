import json

import numpy as np
import pytest

from mapfrl.curriculum import CurriculumState
from mapfrl.env import Instance
from mapfrl.grid import GridMap, Position, bfs_distance, chebyshev
from mapfrl.harness import (
    CURRICULUM_HEADER,
    CURVES_HEADER,
    EVAL_HEADER,
    ActorPolicy,
    EvalReport,
    EvalRow,
    PlanPolicy,
    ScriptedShortestPathPolicy,
    SuiteSpec,
    config_from_text,
    config_to_text,
    evaluate,
    generate_test_suite,
    load_checkpoint,
    rollout_policy,
    run_training,
    save_checkpoint,
)
from mapfrl.learner import TrainConfig, build_models, make_optimizers, train_epoch
from mapfrl.oracle import optimal_flowtime


def tiny_config(**overrides):
    base = dict(
        epochs=2,
        episodes_per_epoch=2,
        horizon=8,
        num_agents=2,
        map_sizes=(4,),
        densities=(0.0,),
        seed=9,
        workers=1,
    )
    base.update(overrides)
    return TrainConfig(**base)


# ---------------------------------------------------------------------------
# Suites


def test_suite_spec_parse_and_describe_round_trip():
    spec = SuiteSpec.parse("K=10,delta=0.3,N=8,count=50,seed=7")
    assert spec == SuiteSpec(size=10, density=0.3, agents=8, count=50, seed=7)
    assert SuiteSpec.parse(spec.describe()) == spec
    capped = SuiteSpec(size=10, density=0.0, agents=4, count=20, seed=1, radius=3)
    assert SuiteSpec.parse(capped.describe()) == capped


def test_suite_spec_parse_rejections():
    with pytest.raises(ValueError, match="unknown suite key"):
        SuiteSpec.parse("K=10,delta=0,N=4,mode=3")
    with pytest.raises(ValueError, match="missing N"):
        SuiteSpec.parse("K=10,delta=0")
    with pytest.raises(ValueError, match="bad suite field"):
        SuiteSpec.parse("K=10,delta=0,N=4,oops")


def test_generate_test_suite_is_deterministic():
    spec = SuiteSpec(size=6, density=0.2, agents=3, count=8, seed=11)
    a = generate_test_suite(spec)
    b = generate_test_suite(spec)
    assert len(a) == 8
    for x, y in zip(a, b):
        assert x.grid == y.grid and x.starts == y.starts and x.goals == y.goals


def test_generate_test_suite_distinct_starts_and_valid_instances():
    spec = SuiteSpec(size=8, density=0.25, agents=4, count=10, seed=3)
    for inst in generate_test_suite(spec):
        assert len(set(inst.starts)) == 4
        assert len(set(inst.goals)) == 4
        for p in inst.starts + inst.goals:
            assert inst.grid.is_free(p.x, p.y)


def test_generate_test_suite_honours_radius_cap():
    spec = SuiteSpec(size=10, density=0.0, agents=4, count=10, seed=5, radius=3)
    for inst in generate_test_suite(spec):
        for s, g in zip(inst.starts, inst.goals):
            assert chebyshev(s, g) <= 3


def test_generate_test_suite_rejects_oversubscribed_maps():
    with pytest.raises(ValueError, match="cannot place"):
        generate_test_suite(SuiteSpec(size=2, density=0.0, agents=5, count=1))
    with pytest.raises(ValueError, match="count"):
        generate_test_suite(SuiteSpec(size=4, density=0.0, agents=1, count=0))


# ---------------------------------------------------------------------------
# Rollouts


def test_rollout_at_goal_from_the_start():
    grid = GridMap(4, 4)
    starts = (Position(0, 0), Position(3, 3))
    inst = Instance(grid, starts, starts)
    out = rollout_policy(ScriptedShortestPathPolicy(), inst)
    assert out.completion == 1.0 and out.flowtime == 0 and out.steps == 0


def test_scripted_policy_achieves_bfs_flowtime_alone():
    rng = np.random.default_rng(0)
    for _ in range(10):
        grid = GridMap(6, 6)
        cells = grid.free_cells()
        i, j = rng.choice(len(cells), size=2, replace=False)
        inst = Instance(grid, (cells[i],), (cells[j],))
        out = rollout_policy(ScriptedShortestPathPolicy(), inst)
        assert out.completion == 1.0
        assert out.flowtime == bfs_distance(grid, cells[i], cells[j])


def test_plan_policy_replays_an_optimal_plan_to_full_completion():
    grid = GridMap(4, 4)
    inst = Instance(
        grid, (Position(0, 0), Position(3, 3)), (Position(3, 0), Position(0, 3))
    )
    result = optimal_flowtime(inst)
    out = rollout_policy(PlanPolicy(result.plan), inst)
    assert out.completion == 1.0
    assert out.flowtime == result.flowtime


def test_rollout_never_mutates_the_actor():
    config = tiny_config()
    bundle = build_models(config)
    before = [p.copy() for p in bundle.actor.params]
    grid = GridMap(5, 5)
    inst = Instance(
        grid, (Position(0, 0), Position(4, 4)), (Position(4, 0), Position(0, 4))
    )
    policy = ActorPolicy(bundle.actor)
    rollout_policy(policy, inst, greedy=True)
    rollout_policy(policy, inst, greedy=False, rng=np.random.default_rng(1))
    for p, b in zip(bundle.actor.params, before):
        assert np.array_equal(p, b)


def test_unsettled_agents_pay_the_full_horizon():
    grid = GridMap(3, 1)
    inst = Instance(
        grid,
        (Position(0, 0), Position(2, 0)),
        (Position(2, 0), Position(0, 0)),
    )
    out = rollout_policy(PlanPolicy(((), ())), inst, horizon=16)
    assert out.completion == 0.0
    assert out.flowtime == 32  # both agents sit off-goal for the whole episode


# ---------------------------------------------------------------------------
# Evaluation


def test_evaluate_greedy_is_deterministic():
    config = tiny_config()
    bundle = build_models(config)
    spec = SuiteSpec(size=5, density=0.0, agents=2, count=4, seed=2)
    r1 = evaluate(ActorPolicy(bundle.actor), spec, greedy=True)
    r2 = evaluate(ActorPolicy(bundle.actor), spec, greedy=True)
    assert r1.rows == r2.rows
    assert r1.rows[0].episodes == 4


def test_evaluate_sampled_depends_on_seed():
    config = tiny_config()
    bundle = build_models(config)
    spec = SuiteSpec(size=6, density=0.0, agents=2, count=6, seed=2)
    r1 = evaluate(ActorPolicy(bundle.actor), spec, greedy=False, seed=0)
    r2 = evaluate(ActorPolicy(bundle.actor), spec, greedy=False, seed=0)
    r3 = evaluate(ActorPolicy(bundle.actor), spec, greedy=False, seed=99)
    assert r1.rows == r2.rows
    assert r1.rows != r3.rows  # different episode streams


def test_eval_report_csv_and_table():
    spec = SuiteSpec(size=5, density=0.0, agents=2, count=3, seed=0)
    report = evaluate(ScriptedShortestPathPolicy(), spec)
    csv = report.to_csv()
    lines = csv.strip().splitlines()
    assert lines[0] == EVAL_HEADER
    assert len(lines) == 2
    assert spec.describe() in report.table()
    assert 0.0 <= report.mean_completion <= 1.0


def test_mean_completion_weights_by_episode_count():
    rows = [
        EvalRow(SuiteSpec(5, 0.0, 2, count=1), episodes=1,
                completion=1.0, flowtime=0.0, ci95=0.0),
        EvalRow(SuiteSpec(5, 0.0, 2, count=3), episodes=3,
                completion=0.0, flowtime=0.0, ci95=0.0),
    ]
    assert EvalReport(rows).mean_completion == pytest.approx(0.25)


# ---------------------------------------------------------------------------
# Config round trip


def test_config_text_round_trip():
    config = tiny_config(critic="independent", curriculum=False, learning_rate=0.0005)
    suites = [SuiteSpec(10, 0.3, 8, count=20, seed=4, radius=2)]
    text = config_to_text(config, suites)
    parsed, parsed_suites = config_from_text(text)
    assert parsed == config
    assert parsed_suites == suites


def test_config_parsing_diagnostics():
    with pytest.raises(ValueError, match="line 2: unknown key 'bogus'"):
        config_from_text("seed = 1\nbogus = 2\n")
    with pytest.raises(ValueError, match="line 1: expected"):
        config_from_text("just words\n")
    with pytest.raises(ValueError, match="bad boolean"):
        config_from_text("curriculum = maybe\n")


def test_config_comments_and_blanks_ignored():
    config, suites = config_from_text(
        "# a comment\n\nseed = 5\nmap_sizes = 10,20\ndensities = 0,0.3\n"
    )
    assert config.seed == 5
    assert config.map_sizes == (10, 20)
    assert config.densities == (0.0, 0.3)
    assert suites == []


# ---------------------------------------------------------------------------
# Checkpoints


def trained_state(config):
    bundle = build_models(config)
    optimizers = make_optimizers(bundle, config)
    state = CurriculumState() if config.curriculum else None
    train_epoch(bundle, optimizers, state, config, epoch=0)
    return bundle, optimizers, state


@pytest.mark.parametrize("critic", ["qmix", "independent"])
def test_checkpoint_round_trip(tmp_path, critic):
    config = tiny_config(critic=critic)
    bundle, optimizers, state = trained_state(config)
    directory = save_checkpoint(tmp_path / "ck", bundle, optimizers, state, epoch=1)
    loaded, opts, cstate, epoch = load_checkpoint(directory, config)
    assert epoch == 1
    assert cstate.radius == state.radius
    assert loaded.critic_mode == bundle.critic_mode
    for a, b in zip(loaded.actor.params, bundle.actor.params):
        assert np.array_equal(a, b)
    for a, b in zip(loaded.utility.params, bundle.utility.params):
        assert np.array_equal(a, b)
    if critic == "qmix":
        for a, b in zip(loaded.mixer.params, bundle.mixer.params):
            assert np.array_equal(a, b)
    else:
        assert loaded.mixer is None
    for label in ("actor", "critic"):
        old = getattr(optimizers, label)
        new = getattr(opts, label)
        assert new.step_count == old.step_count
        for a, b in zip(new.m + new.v, old.m + old.v):
            assert np.array_equal(a, b)


def test_checkpoint_rejects_unknown_format(tmp_path):
    config = tiny_config()
    bundle, optimizers, state = trained_state(config)
    directory = save_checkpoint(tmp_path / "ck", bundle, optimizers, state, epoch=1)
    blob = json.loads((directory / "state.json").read_text())
    blob["format"] = 999
    (directory / "state.json").write_text(json.dumps(blob))
    with pytest.raises(ValueError, match="format"):
        load_checkpoint(directory, config)


# ---------------------------------------------------------------------------
# Training runs


def test_run_training_writes_all_artifacts(tmp_path):
    config = tiny_config()
    suites = [SuiteSpec(4, 0.0, 2, count=2, seed=1)]
    out = run_training(config, tmp_path / "run", eval_suites=suites,
                       eval_every=2, checkpoint_every=1)
    assert (out / "config").exists()
    curves = (out / "curves.csv").read_text().strip().splitlines()
    assert curves[0] == CURVES_HEADER and len(curves) == 3
    curriculum = (out / "curriculum.csv").read_text().strip().splitlines()
    assert curriculum[0] == CURRICULUM_HEADER and len(curriculum) == 3
    assert (out / "eval_2.csv").exists()
    assert (out / "checkpoint_000001" / "actor.net").exists()
    assert (out / "checkpoint_000002" / "state.json").exists()
    manifest = json.loads((out / "manifest").read_text())
    assert manifest["epochs"] == 2 and manifest["critic_mode"] == "qmix"
    parsed, parsed_suites = config_from_text((out / "config").read_text())
    assert parsed == config and parsed_suites == suites


def test_run_training_curriculum_off_marks_unbounded_radius(tmp_path):
    config = tiny_config(epochs=1, curriculum=False)
    out = run_training(config, tmp_path / "run")
    rows = (out / "curriculum.csv").read_text().strip().splitlines()[1:]
    assert rows and all(row.split(",")[1] == "inf" for row in rows)


def test_resume_reproduces_an_uninterrupted_run(tmp_path):
    config3 = tiny_config(epochs=3)
    straight = run_training(config3, tmp_path / "straight", checkpoint_every=1)

    config2 = tiny_config(epochs=2)
    resumed = run_training(config2, tmp_path / "resumed", checkpoint_every=1)
    run_training(config3, tmp_path / "resumed", checkpoint_every=1, resume=True)

    final = "checkpoint_000003"
    for name in ("actor.net", "utility.net", "mixer_w1.net", "state.json"):
        assert (straight / final / name).read_bytes() == (
            resumed / final / name
        ).read_bytes()
    tail = lambda p: (p / "curriculum.csv").read_text().strip().splitlines()[-1]
    assert tail(straight) == tail(resumed)


def test_resume_without_checkpoint_fails(tmp_path):
    (tmp_path / "empty").mkdir()
    with pytest.raises(FileNotFoundError, match="no checkpoint"):
        run_training(tiny_config(), tmp_path / "empty", resume=True)


def test_run_training_logs_progress(tmp_path):
    lines = []
    run_training(tiny_config(epochs=1), tmp_path / "run", log=lines.append)
    assert len(lines) == 1 and lines[0].startswith("epoch 0:")
