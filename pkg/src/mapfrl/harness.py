"""Evaluation suites and the training run harness.

A run directory holds: config (key = value lines), curves.csv and
curriculum.csv appended per epoch, periodic eval_<epoch>.csv reports and
checkpoint_<epoch>/ directories (network containers + optimizer moments +
state.json, all byte-stable), and a final manifest.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import env as envmod
from .curriculum import CurriculumState, radius_marker, sample_goals
from .env import EnvState, Instance, ObservationEncoder, transition
from .grid import MapSpec, bfs_field, generate_random_map
from .learner import (
    CRITIC_QMIX,
    ModelBundle,
    Optimizers,
    TrainConfig,
    build_models,
    make_optimizers,
    sample_actions,
    train_epoch,
)
from .nn import DenseNet, load_arrays, load_net, save_arrays, save_net

FORMAT_VERSION = 1
RUN_ROOT_ENV = "MAPFRL_RUNS"

CURVES_HEADER = ("epoch,wallclock_s,radius,mu,sigma,mean_return,"
                 "ppo_loss,factorization_loss,entropy")
CURRICULUM_HEADER = "epoch,radius,mu,sigma,incremented"
EVAL_HEADER = "size,density,agents,episodes,seed,completion,flowtime,ci95"


@dataclass(frozen=True)
class SuiteSpec:
    """A block of seeded test instances sharing one map configuration."""

    size: int
    density: float
    agents: int
    count: int = 100
    seed: int = 0
    radius: int | None = None  # optional cap on goal Chebyshev distance

    @staticmethod
    def parse(text: str) -> "SuiteSpec":
        """Parse 'K=10,delta=0,N=4,count=20,seed=7[,radius=3]'."""
        keys = {"K": None, "delta": None, "N": None,
                "count": 100, "seed": 0, "radius": None}
        for part in text.split(","):
            part = part.strip()
            if not part:
                continue
            if "=" not in part:
                raise ValueError(f"bad suite field {part!r} in {text!r}")
            k, v = (s.strip() for s in part.split("=", 1))
            if k not in keys:
                raise ValueError(f"unknown suite key {k!r} in {text!r}")
            keys[k] = float(v) if k == "delta" else int(v)
        for k in ("K", "delta", "N"):
            if keys[k] is None:
                raise ValueError(f"suite {text!r} is missing {k}")
        return SuiteSpec(size=keys["K"], density=keys["delta"], agents=keys["N"],
                         count=keys["count"], seed=keys["seed"], radius=keys["radius"])

    def describe(self) -> str:
        base = f"K={self.size},delta={self.density:g},N={self.agents}," \
               f"count={self.count},seed={self.seed}"
        return base if self.radius is None else base + f",radius={self.radius}"


def generate_test_suite(spec: SuiteSpec) -> list[Instance]:
    """Deterministic instances: seeded maps, unique free starts, reachable goals."""
    if spec.count < 1:
        raise ValueError(f"suite count must be >= 1, got {spec.count}")
    instances = []
    for j in range(spec.count):
        rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(j,)))
        grid = generate_random_map(
            MapSpec(spec.size, spec.density, seed=int(rng.integers(2**63)))
        )
        free = grid.free_cells()
        if len(free) < spec.agents:
            raise ValueError(
                f"map has {len(free)} free cells, cannot place {spec.agents} agents"
            )
        idx = rng.choice(len(free), size=spec.agents, replace=False)
        starts = tuple(free[int(i)] for i in idx)
        goals = tuple(sample_goals(grid, starts, spec.radius, rng))
        instances.append(Instance(grid, starts, goals))
    return instances


class ActorPolicy:
    """Decentralized policy: each agent acts from its own observation."""

    def __init__(self, net: DenseNet):
        self.net = net

    def reset(self, instance: Instance) -> None:
        pass

    def act(self, instance, state, observations, greedy, rng) -> np.ndarray:
        probs = self.net.predict(observations)
        if greedy:
            return probs.argmax(axis=1).astype(np.int64)
        return sample_actions(probs, rng)


class ScriptedShortestPathPolicy:
    """Follows each agent's own BFS shortest path, ignoring other agents."""

    def __init__(self):
        self._fields = None

    def reset(self, instance: Instance) -> None:
        self._fields = [bfs_field(instance.grid, g) for g in instance.goals]

    def act(self, instance, state, observations, greedy, rng) -> np.ndarray:
        actions = np.zeros(instance.num_agents, dtype=np.int64)
        for i, (pos, goal) in enumerate(zip(state.positions, instance.goals)):
            if pos == goal:
                continue
            dist = self._fields[i]
            here = dist[pos.y, pos.x]
            for a in range(1, envmod.NUM_ACTIONS):
                dx, dy = envmod.ACTION_DELTAS[a]
                nx, ny = pos.x + dx, pos.y + dy
                if instance.grid.is_free(nx, ny) and 0 <= dist[ny, nx] < here:
                    actions[i] = a
                    break
        return actions


class PlanPolicy:
    """Replays fixed per-agent action sequences; waits past the plan's end."""

    def __init__(self, plan):
        self.plan = [list(seq) for seq in plan]

    def reset(self, instance: Instance) -> None:
        pass

    def act(self, instance, state, observations, greedy, rng) -> np.ndarray:
        t = state.t
        return np.array(
            [seq[t] if t < len(seq) else envmod.WAIT for seq in self.plan],
            dtype=np.int64,
        )


@dataclass
class RolloutOutcome:
    completion: float
    flowtime: int
    steps: int


def rollout_policy(
    policy, instance: Instance, greedy: bool = True,
    rng: np.random.Generator | None = None,
    horizon: int = envmod.DEFAULT_HORIZON,
) -> RolloutOutcome:
    """One evaluation episode. Flowtime counts, per agent, the first time from
    which it stays on its goal through the end; agents not on their goal at the
    end contribute the full horizon."""
    if rng is None:
        rng = np.random.default_rng(0)
    policy.reset(instance)
    enc = ObservationEncoder(instance)
    n = instance.num_agents
    state = EnvState(instance.starts, 0)
    # settled[i]: first step index from which agent i has stayed on its goal.
    settled = [0 if p == g else None
               for p, g in zip(instance.starts, instance.goals)]
    while not envmod.is_terminal(instance, state, horizon):
        obs = enc.encode_all(state).reshape(n, -1)
        actions = policy.act(instance, state, obs, greedy, rng)
        new_positions, _ = transition(
            instance.grid, instance.goals, state.positions, actions
        )
        state = EnvState(new_positions, state.t + 1)
        for i, (p, g) in enumerate(zip(new_positions, instance.goals)):
            if p == g:
                if settled[i] is None:
                    settled[i] = state.t
            else:
                settled[i] = None
    done = sum(1 for p, g in zip(state.positions, instance.goals) if p == g)
    flowtime = sum(horizon if s is None else s for s in settled)
    return RolloutOutcome(completion=done / n, flowtime=flowtime, steps=state.t)


@dataclass(frozen=True)
class EvalRow:
    spec: SuiteSpec
    episodes: int
    completion: float
    flowtime: float
    ci95: float


@dataclass
class EvalReport:
    rows: list[EvalRow] = field(default_factory=list)

    @property
    def mean_completion(self) -> float:
        total = sum(r.episodes for r in self.rows)
        return sum(r.completion * r.episodes for r in self.rows) / total

    def to_csv(self) -> str:
        lines = [EVAL_HEADER]
        for r in self.rows:
            lines.append(
                f"{r.spec.size},{r.spec.density:g},{r.spec.agents},{r.episodes},"
                f"{r.spec.seed},{r.completion:.6f},{r.flowtime:.6f},{r.ci95:.6f}"
            )
        return "\n".join(lines) + "\n"

    def table(self) -> str:
        lines = ["suite                                   completion   flowtime     ci95"]
        for r in self.rows:
            lines.append(
                f"{r.spec.describe():<40}{r.completion:>10.3f} {r.flowtime:>10.1f} "
                f"{r.ci95:>8.3f}"
            )
        return "\n".join(lines)


def evaluate(
    policy, suites, greedy: bool = True, seed: int = 0,
    horizon: int = envmod.DEFAULT_HORIZON,
) -> EvalReport:
    """Roll out each suite instance once and aggregate per configuration."""
    if isinstance(suites, SuiteSpec):
        suites = [suites]
    report = EvalReport()
    for s_idx, spec in enumerate(suites):
        instances = generate_test_suite(spec)
        completions, flowtimes = [], []
        for j, instance in enumerate(instances):
            rng = np.random.default_rng(
                np.random.SeedSequence(seed, spawn_key=(s_idx, j))
            )
            out = rollout_policy(policy, instance, greedy, rng, horizon)
            completions.append(out.completion)
            flowtimes.append(out.flowtime)
        comp = np.asarray(completions, dtype=np.float64)
        ci = 1.96 * comp.std(ddof=1) / np.sqrt(len(comp)) if len(comp) > 1 else 0.0
        report.rows.append(
            EvalRow(
                spec=spec,
                episodes=len(instances),
                completion=float(comp.mean()),
                flowtime=float(np.mean(flowtimes)),
                ci95=float(ci),
            )
        )
    return report


# ---------------------------------------------------------------------------
# Config file round-trip


def config_to_text(config: TrainConfig, eval_suites=()) -> str:
    lines = []
    for key in sorted(TrainConfig.__dataclass_fields__):
        value = getattr(config, key)
        if isinstance(value, tuple):
            value = ",".join(f"{v:g}" if isinstance(v, float) else str(v) for v in value)
        lines.append(f"{key} = {value}")
    for spec in eval_suites:
        lines.append(f"eval_suite = {spec.describe()}")
    return "\n".join(lines) + "\n"


def config_from_text(text: str) -> tuple[TrainConfig, list[SuiteSpec]]:
    """Parse key = value lines; unknown keys are rejected."""
    fields = TrainConfig.__dataclass_fields__
    values: dict = {}
    suites: list[SuiteSpec] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {line_no}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key == "eval_suite":
            suites.append(SuiteSpec.parse(value))
            continue
        if key not in fields:
            raise ValueError(f"config line {line_no}: unknown key {key!r}")
        values[key] = _parse_field(key, value, fields[key].type)
    return TrainConfig(**values), suites


def _parse_field(key: str, value: str, typename: str):
    if typename == "int":
        return int(value)
    if typename == "float":
        return float(value)
    if typename == "bool":
        lowered = value.lower()
        if lowered in ("true", "on", "1", "yes"):
            return True
        if lowered in ("false", "off", "0", "no"):
            return False
        raise ValueError(f"config key {key}: bad boolean {value!r}")
    if typename.startswith("tuple[int"):
        return tuple(int(v) for v in value.split(",") if v.strip())
    if typename.startswith("tuple[float"):
        return tuple(float(v) for v in value.split(",") if v.strip())
    return value


# ---------------------------------------------------------------------------
# Checkpoints


def save_checkpoint(
    directory, bundle: ModelBundle, optimizers: Optimizers,
    curriculum_state: CurriculumState | None, epoch: int,
) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_net(bundle.actor, directory / "actor.net")
    save_net(bundle.utility, directory / "utility.net")
    if bundle.mixer is not None:
        for name, net in zip(("w1", "b1", "w2", "b2"), bundle.mixer.hypernets):
            save_net(net, directory / f"mixer_{name}.net")
    for label, opt in (("actor", optimizers.actor), ("critic", optimizers.critic)):
        arrays = opt.m + opt.v
        tags = [f"m{i}" for i in range(len(opt.m))] + [f"v{i}" for i in range(len(opt.v))]
        save_arrays(directory / f"optim_{label}.arrs", arrays, tags)
    state = {
        "format": FORMAT_VERSION,
        "epoch": epoch,
        "critic_mode": bundle.critic_mode,
        "num_agents": bundle.num_agents,
        "mixer_embed": bundle.mixer.embed if bundle.mixer else 0,
        "radius": curriculum_state.radius if curriculum_state else None,
        "adam_steps": {
            "actor": optimizers.actor.step_count,
            "critic": optimizers.critic.step_count,
        },
    }
    (directory / "state.json").write_text(
        json.dumps(state, sort_keys=True, indent=0) + "\n"
    )
    return directory


def load_checkpoint(directory, config: TrainConfig):
    """Rebuild (bundle, optimizers, curriculum state, epoch) from a checkpoint."""
    directory = Path(directory)
    state = json.loads((directory / "state.json").read_text())
    if state["format"] != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format {state['format']}")
    actor = load_net(directory / "actor.net")
    utility = load_net(directory / "utility.net")
    mixer = None
    if state["critic_mode"] == CRITIC_QMIX:
        from .learner import MixerNet, state_feature_size

        mixer = MixerNet(
            state["num_agents"], state_feature_size(state["num_agents"]),
            embed=state["mixer_embed"], dtype=np.float32,
        )
        for i, name in enumerate(("w1", "b1", "w2", "b2")):
            net = load_net(directory / f"mixer_{name}.net")
            mixer.hypernets[i].params[:] = net.params
            mixer.hypernets[i].seed = net.seed
    bundle = ModelBundle(actor, utility, mixer, state["critic_mode"],
                         state["num_agents"])
    optimizers = make_optimizers(bundle, config)
    for label, opt in (("actor", optimizers.actor), ("critic", optimizers.critic)):
        arrays, _ = load_arrays(directory / f"optim_{label}.arrs")
        half = len(arrays) // 2
        opt.m = [a.copy() for a in arrays[:half]]
        opt.v = [a.copy() for a in arrays[half:]]
        opt.step_count = state["adam_steps"][label]
    curriculum_state = None
    if state["radius"] is not None:
        curriculum_state = CurriculumState(radius=state["radius"])
    return bundle, optimizers, curriculum_state, state["epoch"]


# ---------------------------------------------------------------------------
# Training runs


def run_training(
    config: TrainConfig,
    out_dir,
    eval_suites=(),
    eval_every: int = 0,
    checkpoint_every: int = 0,
    resume: bool = False,
    log=None,
) -> Path:
    """Train for config.epochs, writing all artifacts into out_dir.

    With resume=True, training continues from the newest checkpoint in
    out_dir and reproduces exactly what an uninterrupted run would have done
    (per-episode streams depend only on (seed, epoch, episode)).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    eval_suites = list(eval_suites)

    start_epoch = 0
    if resume:
        checkpoints = sorted(out.glob("checkpoint_*"))
        if not checkpoints:
            raise FileNotFoundError(f"resume requested but no checkpoint in {out}")
        latest = max(checkpoints, key=lambda p: int(p.name.split("_")[1]))
        bundle, optimizers, curriculum_state, start_epoch = load_checkpoint(
            latest, config
        )
        if config.curriculum and curriculum_state is None:
            raise ValueError("checkpoint has no curriculum state but curriculum is on")
    else:
        (out / "config").write_text(config_to_text(config, eval_suites))
        bundle = build_models(config)
        optimizers = make_optimizers(bundle, config)
        curriculum_state = CurriculumState() if config.curriculum else None
        (out / "curves.csv").write_text(CURVES_HEADER + "\n")
        (out / "curriculum.csv").write_text(CURRICULUM_HEADER + "\n")

    pool = None
    if config.workers > 1:
        import multiprocessing as mp
        from concurrent.futures import ProcessPoolExecutor

        pool = ProcessPoolExecutor(
            max_workers=config.workers, mp_context=mp.get_context("spawn")
        )

    started = time.monotonic()
    try:
        for epoch in range(start_epoch, config.epochs):
            result = train_epoch(
                bundle, optimizers, curriculum_state, config, epoch, pool
            )
            marker = radius_marker(result.radius_used)
            diag = result.diagnostics
            with (out / "curves.csv").open("a") as fh:
                fh.write(
                    f"{epoch},{time.monotonic() - started:.3f},{marker},"
                    f"{result.stats.mean:.6f},{result.stats.std:.6f},"
                    f"{result.mean_return:.6f},{diag['ppo_loss']:.6f},"
                    f"{diag['factorization_loss']:.6f},{diag['entropy']:.6f}\n"
                )
            with (out / "curriculum.csv").open("a") as fh:
                fh.write(
                    f"{epoch},{marker},{result.stats.mean:.6f},"
                    f"{result.stats.std:.6f},{int(result.incremented)}\n"
                )
            if log is not None:
                log(
                    f"epoch {epoch}: radius={marker} mu={result.stats.mean:.3f} "
                    f"sigma={result.stats.std:.3f} return={result.mean_return:.1f} "
                    f"ppo={diag['ppo_loss']:.4f} fact={diag['factorization_loss']:.1f}"
                )
            last = epoch == config.epochs - 1
            if eval_suites and eval_every and ((epoch + 1) % eval_every == 0 or last):
                report = evaluate(ActorPolicy(bundle.actor), eval_suites,
                                  greedy=True, seed=config.seed, horizon=config.horizon)
                (out / f"eval_{epoch + 1}.csv").write_text(report.to_csv())
            if (checkpoint_every and (epoch + 1) % checkpoint_every == 0) or last:
                save_checkpoint(
                    out / f"checkpoint_{epoch + 1:06d}", bundle, optimizers,
                    curriculum_state, epoch + 1,
                )
    finally:
        if pool is not None:
            pool.shutdown()

    manifest = {
        "format": FORMAT_VERSION,
        "seed": config.seed,
        "epochs": config.epochs,
        "critic_mode": config.critic,
        "curriculum": config.curriculum,
        "wallclock_s": round(time.monotonic() - started, 3),
    }
    (out / "manifest").write_text(json.dumps(manifest, sort_keys=True, indent=0) + "\n")
    return out
