"""Centralized-training decentralized-execution learner.

One shared softmax actor (trained with clipped-surrogate PPO against a
counterfactual advantage) and one shared per-agent utility head whose chosen-
action values are combined by a monotonic state-conditioned mixing network
(qmix mode) or regressed independently per agent (independent mode). Targets
are undiscounted Monte-Carlo returns; the critic updates before the actor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import env as envmod
from .curriculum import CurriculumConfig, CurriculumState, EpochStats, epoch_stats, epoch_update, sample_goals
from .env import EnvState, Instance, ObservationEncoder, transition
from .grid import MapSpec, generate_random_map
from .nn import Adam, DenseNet, elu, elu_grad, HEAD_SOFTMAX

CRITIC_QMIX = "qmix"
CRITIC_INDEPENDENT = "independent"

ACTOR_HIDDEN = (64, 64)
HYPER_HIDDEN = (128, 128)

RATIO_FLOOR = 1e-8
LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 5000
    episodes_per_epoch: int = 32
    horizon: int = 256
    num_agents: int = 8
    discount: float = 1.0
    learning_rate: float = 1e-3
    clip_epsilon: float = 0.2
    update_passes: int = 4
    entropy_coef: float = 0.01
    critic: str = CRITIC_QMIX
    curriculum: bool = True
    threshold: float = 0.75
    deviation: float = 2.0
    map_sizes: tuple[int, ...] = (10, 40, 80)
    densities: tuple[float, ...] = (0.0, 0.1, 0.2, 0.3)
    mixer_embed: int = 32
    advantage_norm: bool = False
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.critic not in (CRITIC_QMIX, CRITIC_INDEPENDENT):
            raise ValueError(f"unknown critic mode {self.critic!r}")
        for name in ("epochs", "episodes_per_epoch", "horizon", "num_agents",
                     "update_passes", "mixer_embed", "workers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0.0 <= self.clip_epsilon < 1.0:
            raise ValueError(f"clip_epsilon must be in [0, 1), got {self.clip_epsilon}")
        if not self.map_sizes or not self.densities:
            raise ValueError("map_sizes and densities must be non-empty")

    def curriculum_config(self) -> CurriculumConfig:
        return CurriculumConfig(
            threshold=self.threshold,
            deviation=self.deviation,
            episodes_per_epoch=self.episodes_per_epoch,
            max_radius=max(self.map_sizes) - 1,
        )


def state_feature_size(num_agents: int) -> int:
    return 4 * num_agents + 1


def global_state_features(
    instance: Instance, positions, t: int, horizon: int
) -> np.ndarray:
    """Global critic input: per agent (x, y, gx, gy) scaled to [0, 1], plus t/T."""
    grid = instance.grid
    sx = 1.0 / max(1, grid.width - 1)
    sy = 1.0 / max(1, grid.height - 1)
    out = np.empty(state_feature_size(instance.num_agents), dtype=np.float32)
    for i, (p, g) in enumerate(zip(positions, instance.goals)):
        out[4 * i : 4 * i + 4] = (p.x * sx, p.y * sy, g.x * sx, g.y * sy)
    out[-1] = t / horizon
    return out


class MixerTape:
    __slots__ = ("net", "tapes", "u", "w1", "w2", "sign_w1", "sign_w2",
                 "pre", "hidden", "squeezed", "used")

    def __init__(self, **kw):
        for k, v in kw.items():
            setattr(self, k, v)
        self.used = False


class MixerNet:
    """Monotonic mixing of per-agent utilities, conditioned on the global state.

    Four hypernetworks (two ELU hidden layers of 128 units each) map the state
    to mixing weights and biases; weights pass through abs() so the mixed value
    is non-decreasing in every utility, which makes the joint argmax decompose
    into per-agent argmaxes.
    """

    def __init__(self, num_agents: int, state_size: int, embed: int = 32,
                 seed: int = 0, dtype=np.float64):
        if num_agents < 1 or state_size < 1 or embed < 1:
            raise ValueError("num_agents, state_size, embed must be >= 1")
        self.num_agents = num_agents
        self.state_size = state_size
        self.embed = embed
        self.dtype = np.dtype(dtype)
        shape = (state_size, *HYPER_HIDDEN)
        self.hyper_w1 = DenseNet((*shape, num_agents * embed), seed=(seed, 0), dtype=dtype)
        self.hyper_b1 = DenseNet((*shape, embed), seed=(seed, 1), dtype=dtype)
        self.hyper_w2 = DenseNet((*shape, embed), seed=(seed, 2), dtype=dtype)
        self.hyper_b2 = DenseNet((*shape, 1), seed=(seed, 3), dtype=dtype)
        self.hypernets = (self.hyper_w1, self.hyper_b1, self.hyper_w2, self.hyper_b2)

    @property
    def params(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for net in self.hypernets:
            out.extend(net.params)
        return out

    def num_parameters(self) -> int:
        return sum(net.num_parameters() for net in self.hypernets)

    def forward(self, utilities, states) -> tuple[np.ndarray, MixerTape]:
        """Mix per-agent utilities into scalar values, one per batch row."""
        u = np.asarray(utilities, dtype=self.dtype)
        squeezed = u.ndim == 1
        if squeezed:
            u = u[None, :]
        if u.ndim != 2 or u.shape[1] != self.num_agents:
            raise ValueError(
                f"utilities shape {np.shape(utilities)} does not match "
                f"{self.num_agents} agents"
            )
        if not np.isfinite(u).all():
            raise ValueError("non-finite utilities")
        s = np.asarray(states, dtype=self.dtype)
        if s.ndim == 1:
            s = s[None, :]
        if s.shape[0] != u.shape[0]:
            raise ValueError("utilities and states disagree on batch size")
        w1_raw, t1 = self.hyper_w1.forward(s)
        b1, t2 = self.hyper_b1.forward(s)
        w2_raw, t3 = self.hyper_w2.forward(s)
        b2, t4 = self.hyper_b2.forward(s)
        w1 = np.abs(w1_raw).reshape(-1, self.num_agents, self.embed)
        w2 = np.abs(w2_raw)
        pre = np.einsum("bn,bnm->bm", u, w1) + b1
        hidden = elu(pre)
        qtot = (hidden * w2).sum(axis=1) + b2[:, 0]
        tape = MixerTape(
            net=self, tapes=(t1, t2, t3, t4), u=u, w1=w1, w2=w2,
            sign_w1=np.sign(w1_raw), sign_w2=np.sign(w2_raw),
            pre=pre, hidden=hidden, squeezed=squeezed,
        )
        return (qtot[0] if squeezed else qtot), tape

    def predict(self, utilities, states) -> np.ndarray:
        return self.forward(utilities, states)[0]

    def backward(self, tape: MixerTape, grad_output) -> tuple[np.ndarray, list[np.ndarray]]:
        """Returns (gradient w.r.t. utilities, gradients for self.params)."""
        if tape.net is not self:
            raise ValueError("tape was produced by a different mixer")
        if tape.used:
            raise RuntimeError("mixer tape already consumed")
        tape.used = True
        dq = np.asarray(grad_output, dtype=self.dtype)
        if dq.ndim == 0:
            dq = dq[None]
        dh = dq[:, None] * tape.w2
        dw2 = dq[:, None] * tape.hidden * tape.sign_w2
        db2 = dq[:, None]
        dpre = dh * elu_grad(tape.pre)
        db1 = dpre
        dw1 = np.einsum("bn,bm->bnm", tape.u, dpre) * tape.sign_w1.reshape(tape.w1.shape)
        du = np.einsum("bnm,bm->bn", tape.w1, dpre)
        grads: list[np.ndarray] = []
        for net, t, g in zip(
            self.hypernets,
            tape.tapes,
            (dw1.reshape(dw1.shape[0], -1), db1, dw2, db2),
        ):
            net_grads, _ = net.backward(t, g)
            grads.extend(net_grads)
        return (du[0] if tape.squeezed else du), grads


def qmix_forward(mixer: MixerNet, utilities, states) -> tuple[np.ndarray, MixerTape]:
    return mixer.forward(utilities, states)


@dataclass
class ModelBundle:
    """Shared networks: one actor and one utility head serve every agent."""

    actor: DenseNet
    utility: DenseNet
    mixer: MixerNet | None
    critic_mode: str
    num_agents: int


def build_models(config: TrainConfig, dtype=np.float32) -> ModelBundle:
    obs = envmod.OBS_SIZE
    actor = DenseNet((obs, *ACTOR_HIDDEN, envmod.NUM_ACTIONS), head=HEAD_SOFTMAX,
                     seed=(config.seed, 1), dtype=dtype)
    utility = DenseNet((obs, *ACTOR_HIDDEN, envmod.NUM_ACTIONS),
                       seed=(config.seed, 2), dtype=dtype)
    mixer = None
    if config.critic == CRITIC_QMIX:
        mixer = MixerNet(config.num_agents, state_feature_size(config.num_agents),
                         embed=config.mixer_embed, seed=(config.seed, 3), dtype=dtype)
    return ModelBundle(actor, utility, mixer, config.critic, config.num_agents)


@dataclass
class Optimizers:
    actor: Adam
    critic: Adam


def critic_params(bundle: ModelBundle) -> list[np.ndarray]:
    params = list(bundle.utility.params)
    if bundle.mixer is not None:
        params.extend(bundle.mixer.params)
    return params


def make_optimizers(bundle: ModelBundle, config: TrainConfig) -> Optimizers:
    return Optimizers(
        actor=Adam(bundle.actor.params, lr=config.learning_rate),
        critic=Adam(critic_params(bundle), lr=config.learning_rate),
    )


def model_summary(bundle: ModelBundle) -> str:
    lines = [
        f"actor {bundle.actor.layer_sizes} ({bundle.actor.head}): "
        f"{bundle.actor.num_parameters()} parameters",
        f"utility {bundle.utility.layer_sizes} (linear): "
        f"{bundle.utility.num_parameters()} parameters",
    ]
    total = bundle.actor.num_parameters() + bundle.utility.num_parameters()
    if bundle.mixer is not None:
        m = bundle.mixer
        lines.append(
            f"mixer hypernetworks ({m.state_size} -> {HYPER_HIDDEN} -> "
            f"[{m.num_agents}x{m.embed}, {m.embed}, {m.embed}, 1]): "
            f"{m.num_parameters()} parameters"
        )
        total += m.num_parameters()
    lines.append(
        f"total {total} parameters, shared across {bundle.num_agents} agents"
    )
    return "\n".join(lines)


def compute_returns(rewards, discount: float = 1.0) -> np.ndarray:
    """Returns-to-go along axis 0; identity returns[t] = r[t] + g*returns[t+1]."""
    r = np.asarray(rewards, dtype=np.float32)
    if discount == 1.0:
        return np.cumsum(r[::-1], axis=0, dtype=np.float32)[::-1].copy()
    out = np.zeros_like(r)
    acc = np.zeros(r.shape[1:], dtype=np.float32)
    for t in range(r.shape[0] - 1, -1, -1):
        acc = r[t] + discount * acc
        out[t] = acc
    return out


def counterfactual_advantage(q_values, probs, returns) -> np.ndarray:
    """Monte-Carlo return minus the policy-expected utility, per sample."""
    q = np.asarray(q_values)
    p = np.asarray(probs)
    r = np.asarray(returns)
    return r - (p * q).sum(axis=-1)


@dataclass
class EpisodeBatch:
    """Per-step tensors for one episode; may be empty if it starts terminal."""

    observations: np.ndarray  # (L, N, OBS_SIZE) float32
    actions: np.ndarray  # (L, N) int64
    probs: np.ndarray  # (L, N) float32, taken-action probability at collection
    rewards: np.ndarray  # (L, N) float32
    returns: np.ndarray  # (L, N) float32
    state_features: np.ndarray  # (L, 4N+1) float32
    completion: float

    @property
    def num_steps(self) -> int:
        return self.observations.shape[0]


def episode_rng(seed: int, epoch: int, episode: int) -> np.random.Generator:
    """Stream for one episode; independent of rollout order and worker count."""
    return np.random.default_rng(
        np.random.SeedSequence(seed, spawn_key=(epoch, episode))
    )


def sample_actions(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Sample one action per row of a probability matrix."""
    cum = np.cumsum(probs.astype(np.float64), axis=1)
    cum /= cum[:, -1:]
    u = rng.random(probs.shape[0])
    return (cum < u[:, None]).sum(axis=1).astype(np.int64)


def sample_training_instance(
    config: TrainConfig, radius: int | None, rng: np.random.Generator
) -> Instance:
    """Random map (size 10 at twice the weight), starts, and curriculum goals."""
    sizes = list(config.map_sizes)
    weights = np.array([2.0 if k == 10 else 1.0 for k in sizes])
    size = sizes[int(rng.choice(len(sizes), p=weights / weights.sum()))]
    density = config.densities[int(rng.integers(len(config.densities)))]
    grid = generate_random_map(MapSpec(size, density, seed=int(rng.integers(2**63))))
    free = grid.free_cells()
    if len(free) < config.num_agents:
        raise ValueError(
            f"map has {len(free)} free cells for {config.num_agents} agents"
        )
    idx = rng.choice(len(free), size=config.num_agents, replace=False)
    starts = [free[int(i)] for i in idx]
    goals = sample_goals(grid, starts, radius, rng)
    return Instance(grid, tuple(starts), tuple(goals))


def run_episode(
    actor: DenseNet,
    instance: Instance,
    rng: np.random.Generator,
    horizon: int = envmod.DEFAULT_HORIZON,
    discount: float = 1.0,
) -> EpisodeBatch:
    """Roll out the sampling policy once and package the step data."""
    enc = ObservationEncoder(instance)
    n = instance.num_agents
    goals = instance.goals
    state = EnvState(instance.starts, 0)
    obs_l, act_l, prob_l, rew_l, feat_l = [], [], [], [], []
    while not envmod.is_terminal(instance, state, horizon):
        obs = enc.encode_all(state).reshape(n, -1)
        probs = actor.predict(obs)
        actions = sample_actions(probs, rng)
        feats = global_state_features(instance, state.positions, state.t, horizon)
        new_positions, rewards = transition(instance.grid, goals, state.positions, actions)
        obs_l.append(obs)
        act_l.append(actions)
        prob_l.append(probs[np.arange(n), actions])
        rew_l.append(rewards)
        feat_l.append(feats)
        state = EnvState(new_positions, state.t + 1)
    length = len(obs_l)
    obs_size = envmod.OBS_SIZE
    if length == 0:
        empty = np.zeros((0, n), dtype=np.float32)
        batch = EpisodeBatch(
            observations=np.zeros((0, n, obs_size), dtype=np.float32),
            actions=np.zeros((0, n), dtype=np.int64),
            probs=empty.copy(),
            rewards=empty.copy(),
            returns=empty.copy(),
            state_features=np.zeros((0, state_feature_size(n)), dtype=np.float32),
            completion=1.0,
        )
        return batch
    rewards = np.stack(rew_l)
    done = sum(1 for p, g in zip(state.positions, goals) if p == g)
    return EpisodeBatch(
        observations=np.stack(obs_l),
        actions=np.stack(act_l),
        probs=np.stack(prob_l).astype(np.float32),
        rewards=rewards,
        returns=compute_returns(rewards, discount),
        state_features=np.stack(feat_l),
        completion=done / n,
    )


def policy_loss_and_grads(
    actor: DenseNet,
    observations: np.ndarray,
    actions: np.ndarray,
    old_probs: np.ndarray,
    advantages: np.ndarray,
    clip_epsilon: float,
    entropy_coef: float,
):
    """Clipped-surrogate PPO loss (negated objective) and actor gradients.

    Returns (loss, mean surrogate, mean entropy, grads, floor_hits,
    clip_fraction). floor_hits counts stored probabilities below the 1e-8
    ratio floor.
    """
    probs, tape = actor.forward(observations)
    s = len(actions)
    idx = np.arange(s)
    adv = np.asarray(advantages, dtype=probs.dtype)
    floor_hits = int((old_probs < RATIO_FLOOR).sum())
    denom = np.maximum(old_probs, RATIO_FLOOR).astype(probs.dtype)
    ratio = probs[idx, actions] / denom
    clipped = np.clip(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon)
    term_raw = adv * ratio
    term_clip = adv * clipped
    surrogate = np.minimum(term_raw, term_clip)
    logp = np.log(np.maximum(probs, LOG_FLOOR))
    entropy = -(probs * logp).sum(axis=1)
    objective = surrogate.mean() + entropy_coef * entropy.mean()
    # Gradient of the loss (-objective) w.r.t. the probability matrix.
    dprobs = (entropy_coef / s) * (logp + 1.0)
    active = term_raw <= term_clip  # min() follows the unclipped branch on ties
    dprobs[idx, actions] -= np.where(active, adv / denom, 0.0) / s
    grads, _ = actor.backward(tape, dprobs)
    clip_fraction = float((~active).mean()) if s else 0.0
    return (
        float(-objective),
        float(surrogate.mean()),
        float(entropy.mean()),
        grads,
        floor_hits,
        clip_fraction,
    )


def ppo_update(
    actor: DenseNet,
    optimizer: Adam,
    observations: np.ndarray,
    actions: np.ndarray,
    old_probs: np.ndarray,
    advantages: np.ndarray,
    config: TrainConfig,
) -> dict:
    """Run the configured number of PPO passes; returns last-pass diagnostics."""
    diag = {"ppo_loss": 0.0, "surrogate": 0.0, "entropy": 0.0,
            "floor_hits": 0, "clip_fraction": 0.0}
    for _ in range(config.update_passes):
        loss, surrogate, entropy, grads, floor_hits, clip_fraction = (
            policy_loss_and_grads(
                actor, observations, actions, old_probs, advantages,
                config.clip_epsilon, config.entropy_coef,
            )
        )
        optimizer.step(actor.params, grads)
        diag = {
            "ppo_loss": loss,
            "surrogate": surrogate,
            "entropy": entropy,
            "floor_hits": floor_hits,
            "clip_fraction": clip_fraction,
        }
    return diag


def qmix_loss_and_grads(
    utility: DenseNet,
    mixer: MixerNet,
    obs_steps: np.ndarray,
    actions_steps: np.ndarray,
    states: np.ndarray,
    targets: np.ndarray,
):
    """Factorization loss: MSE between mixed chosen-action utilities and the
    summed per-step team return. Returns (loss, utility grads, mixer grads)."""
    tt, n, d = obs_steps.shape
    flat_obs = obs_steps.reshape(tt * n, d)
    flat_actions = actions_steps.reshape(-1)
    q_all, utape = utility.forward(flat_obs)
    idx = np.arange(tt * n)
    chosen = q_all[idx, flat_actions].reshape(tt, n)
    qtot, mtape = mixer.forward(chosen, states)
    diff = qtot - np.asarray(targets, dtype=qtot.dtype)
    loss = float((diff * diff).mean())
    du, mixer_grads = mixer.backward(mtape, (2.0 / tt) * diff)
    dq_all = np.zeros_like(q_all)
    dq_all[idx, flat_actions] = np.asarray(du, dtype=q_all.dtype).reshape(-1)
    utility_grads, _ = utility.backward(utape, dq_all)
    return loss, utility_grads, mixer_grads


def independent_loss_and_grads(
    utility: DenseNet,
    observations: np.ndarray,
    actions: np.ndarray,
    returns: np.ndarray,
):
    """Per-agent regression of the chosen-action utility on its own return."""
    q_all, tape = utility.forward(observations)
    s = len(actions)
    idx = np.arange(s)
    diff = q_all[idx, actions] - np.asarray(returns, dtype=q_all.dtype)
    loss = float((diff * diff).mean())
    dq_all = np.zeros_like(q_all)
    dq_all[idx, actions] = (2.0 / s) * diff
    grads, _ = utility.backward(tape, dq_all)
    return loss, grads


def factorization_update(
    bundle: ModelBundle,
    optimizer: Adam,
    obs_steps: np.ndarray,
    actions_steps: np.ndarray,
    returns_steps: np.ndarray,
    states: np.ndarray,
    config: TrainConfig,
) -> dict:
    """Critic passes (one gradient step each); returns last-pass diagnostics."""
    loss = 0.0
    params = critic_params(bundle)
    for _ in range(config.update_passes):
        if bundle.critic_mode == CRITIC_QMIX:
            targets = returns_steps.sum(axis=1)
            loss, ugrads, mgrads = qmix_loss_and_grads(
                bundle.utility, bundle.mixer, obs_steps, actions_steps, states, targets
            )
            optimizer.step(params, ugrads + mgrads)
        else:
            tt, n, d = obs_steps.shape
            loss, grads = independent_loss_and_grads(
                bundle.utility,
                obs_steps.reshape(tt * n, d),
                actions_steps.reshape(-1),
                returns_steps.reshape(-1),
            )
            optimizer.step(params, grads)
    return {"factorization_loss": loss}


@dataclass
class EpochResult:
    stats: EpochStats
    incremented: bool
    radius_used: int | None  # None means unbounded (curriculum off)
    mean_return: float
    episode_steps: int
    diagnostics: dict = field(default_factory=dict)


def _episode_task(args):
    actor, config, radius, epoch, episode = args
    rng = episode_rng(config.seed, epoch, episode)
    instance = sample_training_instance(config, radius, rng)
    return run_episode(actor, instance, rng, config.horizon, config.discount)


def rollout_epoch(
    bundle: ModelBundle, config: TrainConfig, radius: int | None, epoch: int,
    pool=None,
) -> list[EpisodeBatch]:
    """Collect one epoch of episodes; order and results are schedule-independent."""
    tasks = [
        (bundle.actor, config, radius, epoch, m)
        for m in range(config.episodes_per_epoch)
    ]
    if pool is None:
        return [_episode_task(t) for t in tasks]
    return list(pool.map(_episode_task, tasks))


def train_epoch(
    bundle: ModelBundle,
    optimizers: Optimizers,
    curriculum_state: CurriculumState | None,
    config: TrainConfig,
    epoch: int,
    pool=None,
) -> EpochResult:
    """One training epoch: rollouts, critic update, actor update, curriculum."""
    if config.curriculum and curriculum_state is None:
        raise ValueError("curriculum enabled but no CurriculumState given")
    radius = curriculum_state.radius if config.curriculum else None
    episodes = rollout_epoch(bundle, config, radius, epoch, pool)
    rates = [ep.completion for ep in episodes]

    nonempty = [ep for ep in episodes if ep.num_steps > 0]
    diag = {"ppo_loss": 0.0, "surrogate": 0.0, "entropy": 0.0,
            "floor_hits": 0, "clip_fraction": 0.0, "factorization_loss": 0.0}
    total_steps = 0
    if nonempty:
        obs_steps = np.concatenate([ep.observations for ep in nonempty])
        actions_steps = np.concatenate([ep.actions for ep in nonempty])
        probs_steps = np.concatenate([ep.probs for ep in nonempty])
        returns_steps = np.concatenate([ep.returns for ep in nonempty])
        states = np.concatenate([ep.state_features for ep in nonempty])
        total_steps = obs_steps.shape[0]
        tt, n, d = obs_steps.shape

        fact_diag = factorization_update(
            bundle, optimizers.critic, obs_steps, actions_steps, returns_steps,
            states, config,
        )

        obs_flat = obs_steps.reshape(tt * n, d)
        actions_flat = actions_steps.reshape(-1)
        returns_flat = returns_steps.reshape(-1)
        probs_all = bundle.actor.predict(obs_flat)
        q_all = bundle.utility.predict(obs_flat)
        advantages = counterfactual_advantage(q_all, probs_all, returns_flat)
        if config.advantage_norm:
            advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)
        ppo_diag = ppo_update(
            bundle.actor, optimizers.actor, obs_flat, actions_flat,
            probs_steps.reshape(-1), advantages, config,
        )
        diag.update(fact_diag)
        diag.update(ppo_diag)

    mean_return = float(
        np.mean([ep.returns[0].mean() if ep.num_steps else 0.0 for ep in episodes])
    )
    if config.curriculum:
        for r in rates:
            curriculum_state.record(r)
        _, stats, incremented = epoch_update(curriculum_state, config.curriculum_config())
    else:
        stats = epoch_stats(rates)
        incremented = False
    return EpochResult(
        stats=stats,
        incremented=incremented,
        radius_used=radius,
        mean_return=mean_return,
        episode_steps=total_steps,
        diagnostics=diag,
    )
