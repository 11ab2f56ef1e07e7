"""Training pipeline: per-agent prioritized replay over a shared transition
store, truncated multi-step returns, deterministic-policy updates with a
shared critic per agent type, and soft target syncs."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .env import max_obs_len, observe, step
from .errors import CheckpointError, ConfigError, ContractError
from .hetgraph import (CUAV, MUAV, global_action_slice, global_feature_batch,
                       global_feature_width, local_feature_batch,
                       local_feature_width, local_neighbors, local_template)
from .metrics import compute_all
from .neural import (LINEAR, TANH, NetSpec, Network, adam_step, backward,
                     forward, network_from_tensors, network_tensors,
                     save_checkpoint)
from .rollout import EpisodeTracker
from .world import WorldConfig, _config_from_mapping, _load_flat_mapping, \
    generate_scenario

PRIORITY_EPS = 1e-4


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.98
    tau: float = 0.01
    n_step: int = 3
    f_soft: int = 50
    e_min: int = 50
    buffer_capacity: int = 100_000
    batch_size: int = 128
    per_alpha: float = 0.6
    lr_critic: float = 0.001
    lr_actor: float = 0.0001
    noise_sigma0: float = 0.3
    noise_decay: float = 0.9995
    noise_min: float = 0.05
    max_episodes: int = 500
    share_actor_per_type: bool = False
    use_gat: bool = True

    def validate(self) -> "TrainConfig":
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError("gamma must lie in [0, 1)")
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError("tau must lie in (0, 1]")
        if self.n_step < 1:
            raise ConfigError("n_step must be >= 1")
        if self.buffer_capacity < 1 or self.batch_size < 1:
            raise ConfigError("buffer_capacity and batch_size must be >= 1")
        if self.f_soft < 1:
            raise ConfigError("f_soft must be >= 1")
        if self.e_min < 0 or self.max_episodes < 1:
            raise ConfigError("e_min must be >= 0 and max_episodes >= 1")
        if self.per_alpha < 0:
            raise ConfigError("per_alpha must be >= 0")
        return self


def load_train_config(path) -> TrainConfig:
    cfg = _config_from_mapping(TrainConfig, _load_flat_mapping(path), str(path))
    return cfg.validate()


# ---------------------------------------------------------------------------
# prioritized replay

class SumTree:
    """Binary tree over leaf priorities; every internal node is recomputed as
    the sum (and max) of its children on update, so the partial sums stay
    exactly consistent under any update sequence."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        cap = 1
        while cap < capacity:
            cap <<= 1
        self.capacity = cap
        self.levels = cap.bit_length() - 1
        self.sums = np.zeros(2 * cap)
        self.maxes = np.zeros(2 * cap)

    @property
    def total(self) -> float:
        return float(self.sums[1])

    @property
    def max_leaf(self) -> float:
        return float(self.maxes[1])

    def leaves(self, idxs) -> np.ndarray:
        return self.sums[np.asarray(idxs, dtype=int) + self.capacity]

    def set_many(self, idxs, values) -> None:
        nodes = np.asarray(idxs, dtype=int) + self.capacity
        if np.any(nodes < self.capacity) or np.any(nodes >= 2 * self.capacity):
            raise ContractError("sum-tree index out of range")
        self.sums[nodes] = values
        self.maxes[nodes] = values
        level = np.unique(nodes >> 1)
        while True:
            left = level << 1
            self.sums[level] = self.sums[left] + self.sums[left + 1]
            self.maxes[level] = np.maximum(self.maxes[left], self.maxes[left + 1])
            if level[0] == 1:
                break
            level = np.unique(level >> 1)

    def set(self, idx: int, value: float) -> None:
        self.set_many([idx], [value])

    def sample(self, k: int, rng: np.random.Generator):
        """Stratified proportional draw: one uniform point per equal-mass
        segment, walked down the tree. Returns (leaf indices, normalized
        probabilities)."""
        total = self.total
        if total <= 0.0:
            raise ContractError("sampling from an empty sum-tree")
        x = (np.arange(k) + rng.uniform(size=k)) * (total / k)
        x = np.minimum(x, np.nextafter(total, 0.0))
        node = np.ones(k, dtype=int)
        for _ in range(self.levels):
            left = node << 1
            left_sum = self.sums[left]
            go_left = x < left_sum
            node = np.where(go_left, left, left + 1)
            x = np.where(go_left, x, x - left_sum)
            # keep x strictly inside the chosen subtree despite rounding
            x = np.minimum(x, np.nextafter(self.sums[node], 0.0))
        idx = node - self.capacity
        return idx, self.sums[node] / total


def per_sample(tree: SumTree, k: int, rng: np.random.Generator):
    return tree.sample(k, rng)


def per_update(tree: SumTree, index: int, new_delta: float, alpha: float,
               epsilon_p: float = PRIORITY_EPS) -> None:
    tree.set(index, (abs(new_delta) + epsilon_p) ** alpha)


def nstep_return(rewards, gamma: float, n: int):
    """Discounted sum of up to n leading rewards; returns (partial return,
    number of rewards actually summed)."""
    lam = 0.0
    count = 0
    for k, r in enumerate(rewards[:n]):
        lam += (gamma ** k) * float(r)
        count += 1
    return lam, count


@dataclass
class Transition:
    obs: np.ndarray        # (U, W) padded joint observation
    actions: np.ndarray    # (U, 2)
    rewards: np.ndarray    # (U,)
    next_obs: np.ndarray   # (U, W)
    done: bool
    episode: int
    step: int
    nbrs: np.ndarray       # (U, 2) local-graph neighbor indices, -1 = absent
    next_nbrs: np.ndarray


class ReplayStore:
    """Ring buffer of joint transitions shared by all per-agent trees."""

    def __init__(self, capacity: int, num_agents: int, obs_width: int):
        self.capacity = capacity
        self.obs = np.zeros((capacity, num_agents, obs_width))
        self.next_obs = np.zeros((capacity, num_agents, obs_width))
        self.actions = np.zeros((capacity, num_agents, 2))
        self.rewards = np.zeros((capacity, num_agents))
        self.done = np.zeros(capacity, dtype=bool)
        self.episode = np.full(capacity, -1, dtype=np.int64)
        self.step = np.zeros(capacity, dtype=np.int64)
        self.nbrs = np.zeros((capacity, num_agents, 2), dtype=np.int64)
        self.next_nbrs = np.zeros((capacity, num_agents, 2), dtype=np.int64)
        self.size = 0
        self.cursor = 0

    def add(self, tr: Transition) -> int:
        i = self.cursor
        self.obs[i] = tr.obs
        self.next_obs[i] = tr.next_obs
        self.actions[i] = tr.actions
        self.rewards[i] = tr.rewards
        self.done[i] = tr.done
        self.episode[i] = tr.episode
        self.step[i] = tr.step
        self.nbrs[i] = tr.nbrs
        self.next_nbrs[i] = tr.next_nbrs
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        return i

    def chain(self, idxs: np.ndarray, n: int):
        """Follow up to n consecutive same-episode transitions from each
        index (robust to ring overwrites). Returns (per-step inclusion mask
        (n, B), per-step slot indices (n, B), steps summed (B,), bootstrap
        slot (B,), terminal flag (B,))."""
        b = len(idxs)
        oks = np.zeros((n, b), dtype=bool)
        js = np.zeros((n, b), dtype=np.int64)
        valid = np.ones(b, dtype=bool)
        count = np.zeros(b, dtype=np.int64)
        boot = np.asarray(idxs, dtype=np.int64).copy()
        terminal = np.zeros(b, dtype=bool)
        base_ep = self.episode[idxs]
        base_step = self.step[idxs]
        for k in range(n):
            j = (idxs + k) % self.capacity
            ok = valid & (self.episode[j] == base_ep) & (self.step[j] == base_step + k)
            oks[k] = ok
            js[k] = j
            count = np.where(ok, k + 1, count)
            boot = np.where(ok, j, boot)
            terminal = np.where(ok, self.done[j], terminal)
            valid = ok & ~self.done[j]
        return oks, js, count, boot, terminal


def exploration_noise(rng: np.random.Generator, sigma: float) -> np.ndarray:
    """Independent zero-mean Gaussian noise per action component."""
    return rng.normal(0.0, sigma, size=2)


def soft_update(target: Network, source: Network, tau: float) -> None:
    target.flat *= (1.0 - tau)
    target.flat += tau * source.flat


# ---------------------------------------------------------------------------
# update rules (free functions so they can be exercised in isolation)

def actor_spec(config: WorldConfig) -> NetSpec:
    kinds = ([MUAV] if config.num_muavs else []) + ([CUAV] if config.num_cuavs else [])
    return NetSpec({k: local_feature_width(config) for k in kinds}, 2, TANH)


def critic_spec(config: WorldConfig) -> NetSpec:
    kinds = ([MUAV] if config.num_muavs else []) + ([CUAV] if config.num_cuavs else [])
    return NetSpec({k: global_feature_width(config) for k in kinds}, 1, LINEAR)


def critic_target_values(critic_target: Network, next_feats: np.ndarray,
                         kinds, ego: int, lam: np.ndarray, count: np.ndarray,
                         terminal: np.ndarray, gamma: float,
                         use_gat: bool = True) -> np.ndarray:
    """Bootstrapped targets y = lambda + gamma^n Q'(o', a'); terminal
    transitions keep y = lambda."""
    q_next = forward(critic_target, next_feats, kinds, ego,
                     use_gat=use_gat).out[:, 0]
    return lam + np.where(terminal, 0.0, (gamma ** count) * q_next)


def critic_update(critic: Network, feats: np.ndarray, kinds, ego: int,
                  y: np.ndarray, zeta: np.ndarray, lr: float,
                  use_gat: bool = True):
    """One descent step on mean(zeta * (y - Q)^2). Returns (loss, deltas)."""
    b = feats.shape[0]
    tape = forward(critic, feats, kinds, ego, use_gat=use_gat)
    q = tape.out[:, 0]
    delta = y - q
    loss = float(np.mean(zeta * delta * delta))
    dq = (-2.0 / b) * zeta * delta
    grads, _ = backward(critic, tape, dq[:, None])
    adam_step(critic, grads, lr)
    return loss, delta


def actor_update(actor: Network, critic: Network,
                 actor_feats: np.ndarray, actor_kinds, actor_mask,
                 critic_feats: np.ndarray, critic_kinds, ego: int,
                 action_slice: slice, lr: float, use_gat: bool = True) -> float:
    """Ascend mean Q with the ego's action slot replaced by the current
    policy output; the critic is read-only here. Returns the objective."""
    b = actor_feats.shape[0]
    atape = forward(actor, actor_feats, actor_kinds, 0, actor_mask, use_gat)
    subbed = critic_feats.copy()
    subbed[:, ego, action_slice] = atape.out
    ctape = forward(critic, subbed, critic_kinds, ego, use_gat=use_gat)
    objective = float(np.mean(ctape.out[:, 0]))
    _, dfeats = backward(critic, ctape, np.full((b, 1), -1.0 / b))
    da = dfeats[:, ego, action_slice]
    agrads, _ = backward(actor, atape, da)
    adam_step(actor, agrads, lr)
    return objective


# ---------------------------------------------------------------------------
# trainer

class Trainer:
    def __init__(self, world_config: WorldConfig, train_config: TrainConfig,
                 seed: int):
        world_config.validate()
        train_config.validate()
        self.wc = world_config
        self.tc = train_config
        self.seed = seed
        self.kinds = [MUAV] * world_config.num_muavs + [CUAV] * world_config.num_cuavs
        self.num_agents = len(self.kinds)
        if world_config.num_muavs < 1 or world_config.num_cuavs < 1:
            raise ConfigError("training needs at least one MUAV and one CUAV "
                              "(the episode report metrics are undefined otherwise)")

        ss = np.random.SeedSequence(seed)
        init_ss, noise_ss, sample_ss = ss.spawn(3)
        init_rng = np.random.default_rng(init_ss)
        self.noise_rng = np.random.default_rng(noise_ss)
        self.sample_rng = np.random.default_rng(sample_ss)

        a_spec = actor_spec(world_config)
        c_spec = critic_spec(world_config)
        if train_config.share_actor_per_type:
            shared = {}
            for kind in dict.fromkeys(self.kinds):
                shared[kind] = Network(a_spec, init_rng)
            self.actors = [shared[kind] for kind in self.kinds]
        else:
            self.actors = [Network(a_spec, init_rng) for _ in self.kinds]
        clones: dict[int, Network] = {}
        self.actor_targets = [clones.setdefault(id(a), a.clone()) for a in self.actors]
        self.critics = {kind: Network(c_spec, init_rng)
                        for kind in dict.fromkeys(self.kinds)}
        self.critic_targets = {k: v.clone() for k, v in self.critics.items()}

        self.obs_width = max_obs_len(world_config)
        self.store = ReplayStore(train_config.buffer_capacity, self.num_agents,
                                 self.obs_width)
        self.trees = [SumTree(train_config.buffer_capacity)
                      for _ in range(self.num_agents)]
        self.sigma = train_config.noise_sigma0
        self.action_slice = global_action_slice(world_config)
        self.templates = {kind: local_template(world_config, kind)
                          for kind in dict.fromkeys(self.kinds)}

    # -- acting ------------------------------------------------------------

    def policy_actions(self, obs_rows: np.ndarray, nbr_rows: np.ndarray,
                       explore: bool) -> np.ndarray:
        """Greedy actor actions for one timestep (B=1 path through the same
        batched features used in updates)."""
        actions = np.zeros((self.num_agents, 2))
        obs_b = obs_rows[None, :, :]
        nbr_b = nbr_rows[None, :, :]
        for u in range(self.num_agents):
            feats, mask = local_feature_batch(obs_b, nbr_b, u, self.kinds, self.wc)
            tpl = self.templates[self.kinds[u]]
            out = forward(self.actors[u], feats, tpl.kinds, 0, mask,
                          self.tc.use_gat).out[0]
            if explore:
                out = out + exploration_noise(self.noise_rng, self.sigma)
            actions[u] = np.clip(out, -1.0, 1.0)
        return actions

    def _padded_obs(self, state) -> np.ndarray:
        rows = np.zeros((self.num_agents, self.obs_width))
        for u in range(self.num_agents):
            vec = observe(state, u)
            rows[u, : len(vec)] = vec
        return rows

    def _nbr_rows(self, state) -> np.ndarray:
        rows = np.full((self.num_agents, 2), -1, dtype=np.int64)
        for u in range(self.num_agents):
            muav_nbr, cuav_nbr = local_neighbors(state, u)
            rows[u, 0] = -1 if muav_nbr is None else muav_nbr
            rows[u, 1] = -1 if cuav_nbr is None else cuav_nbr
        return rows

    # -- learning ----------------------------------------------------------

    def insert_priority(self, tree: SumTree) -> float:
        m = tree.max_leaf
        return m if m > 0.0 else 1.0

    def update(self, episode: int, step_index: int):
        """One round of critic/actor updates for every agent; returns the
        mean critic loss or None when updates are gated off."""
        tc = self.tc
        if episode <= tc.e_min or self.store.size == 0:
            return None
        tree = self.trees[step_index % self.num_agents]
        if tree.total <= 0.0:
            return None
        idxs, _ = tree.sample(tc.batch_size, self.sample_rng)
        b = len(idxs)
        oks, js, count, boot, terminal = self.store.chain(idxs, tc.n_step)

        next_obs = self.store.next_obs[boot]
        next_nbrs = self.store.next_nbrs[boot]
        a_prime = np.zeros((b, self.num_agents, 2))
        for v in range(self.num_agents):
            feats, mask = local_feature_batch(next_obs, next_nbrs, v,
                                              self.kinds, self.wc)
            tpl = self.templates[self.kinds[v]]
            a_prime[:, v] = forward(self.actor_targets[v], feats, tpl.kinds, 0,
                                    mask, tc.use_gat).out
        next_gfeats = global_feature_batch(next_obs, a_prime, self.kinds, self.wc)

        cur_obs = self.store.obs[idxs]
        cur_nbrs = self.store.nbrs[idxs]
        cur_gfeats = global_feature_batch(cur_obs, self.store.actions[idxs],
                                          self.kinds, self.wc)

        discounts = np.power(tc.gamma, np.arange(tc.n_step))
        losses = []
        deltas = np.zeros((self.num_agents, b))
        for u in range(self.num_agents):
            kind = self.kinds[u]
            rew = self.store.rewards[js, u]                     # (n, B)
            lam = np.sum(np.where(oks, rew, 0.0) * discounts[:, None], axis=0)
            y = critic_target_values(self.critic_targets[kind], next_gfeats,
                                     self.kinds, u, lam, count, terminal,
                                     tc.gamma, tc.use_gat)
            zeta = self.trees[u].leaves(idxs) / self.trees[u].total
            loss, delta = critic_update(self.critics[kind], cur_gfeats,
                                        self.kinds, u, y, zeta, tc.lr_critic,
                                        tc.use_gat)
            losses.append(loss)
            deltas[u] = delta

            afeats, amask = local_feature_batch(cur_obs, cur_nbrs, u,
                                                self.kinds, self.wc)
            tpl = self.templates[kind]
            actor_update(self.actors[u], self.critics[kind], afeats, tpl.kinds,
                         amask, cur_gfeats, self.kinds, u, self.action_slice,
                         tc.lr_actor, tc.use_gat)

        if episode % tc.f_soft == 0:
            self.sync_targets()

        for u in range(self.num_agents):
            vals = (np.abs(deltas[u]) + PRIORITY_EPS) ** tc.per_alpha
            self.trees[u].set_many(idxs, vals)
        return float(np.mean(losses))

    def sync_targets(self) -> None:
        done: set[int] = set()
        for a, at in zip(self.actors, self.actor_targets):
            if id(a) not in done:
                soft_update(at, a, self.tc.tau)
                done.add(id(a))
        for kind, c in self.critics.items():
            soft_update(self.critic_targets[kind], c, self.tc.tau)

    # -- episodes ----------------------------------------------------------

    def scenario_seed(self, episode: int) -> int:
        return int(np.random.SeedSequence((self.seed, episode)).generate_state(1)[0])

    def run_episode(self, episode: int) -> dict:
        state = generate_scenario(self.wc, self.scenario_seed(episode))
        tracker = EpisodeTracker(state)
        reward_sums = np.zeros(self.num_agents)
        losses = []
        obs_rows = self._padded_obs(state)
        nbr_rows = self._nbr_rows(state)
        while not state.done:
            actions = self.policy_actions(obs_rows, nbr_rows, explore=True)
            t_before = state.t
            _, events = step(state, list(actions))
            breakdowns = tracker.after_step(state, events)
            rewards = np.array([bd.total for bd in breakdowns])
            next_obs_rows = self._padded_obs(state)
            next_nbr_rows = self._nbr_rows(state)
            slot = self.store.add(Transition(
                obs=obs_rows, actions=actions, rewards=rewards,
                next_obs=next_obs_rows, done=state.done, episode=episode,
                step=t_before, nbrs=nbr_rows, next_nbrs=next_nbr_rows))
            for tree in self.trees:
                tree.set(slot, self.insert_priority(tree))
            loss = self.update(episode, t_before)
            if loss is not None:
                losses.append(loss)
            reward_sums += rewards
            obs_rows, nbr_rows = next_obs_rows, next_nbr_rows

        m = self.wc.num_muavs
        report = compute_all(tracker.episode_log(state))
        row = {
            "episode": episode,
            "steps": state.t,
            "reward_muav_mean": float(np.mean(reward_sums[:m])) if m else 0.0,
            "reward_cuav_mean": float(np.mean(reward_sums[m:])) if self.wc.num_cuavs else 0.0,
            "C": report["C"],
            "omega": report["omega"],
            "upsilon": report["upsilon"],
            "D": report["D"],
            "F": report["F"],
            "sigma": self.sigma,
            "loss_critic_mean": float(np.mean(losses)) if losses else 0.0,
        }
        self.sigma = max(self.tc.noise_min, self.sigma * self.tc.noise_decay)
        return row

    # -- persistence -------------------------------------------------------

    def network_map(self) -> dict[str, Network]:
        nets: dict[str, Network] = {}
        for i, (a, at) in enumerate(zip(self.actors, self.actor_targets)):
            nets[f"actor_{i}"] = a
            nets[f"actor_target_{i}"] = at
        for kind in self.critics:
            nets[f"critic_{kind}"] = self.critics[kind]
            nets[f"critic_target_{kind}"] = self.critic_targets[kind]
        return nets

    def save(self, path) -> None:
        tensors: dict[str, np.ndarray] = {}
        for name, net in self.network_map().items():
            tensors.update(network_tensors(name, net))
        save_checkpoint(path, tensors)

    def run(self, out_dir, checkpoint_interval: int = 100) -> list[dict]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        final_ckpt = out / "checkpoint.hgam"
        self.save(final_ckpt)  # fail fast on an unwritable destination
        rows = []
        for episode in range(1, self.tc.max_episodes + 1):
            rows.append(self.run_episode(episode))
            if episode % checkpoint_interval == 0:
                self.save(out / f"checkpoint_ep{episode:06d}.hgam")
        self.save(final_ckpt)
        write_training_csv(out / "training_report.csv", rows)
        return rows


TRAIN_COLUMNS = ["episode", "steps", "reward_muav_mean", "reward_cuav_mean",
                 "C", "omega", "upsilon", "D", "F", "sigma", "loss_critic_mean"]


def write_training_csv(path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRAIN_COLUMNS)
        for row in rows:
            writer.writerow([
                repr(float(row[c])) if isinstance(row[c], float) else str(row[c])
                for c in TRAIN_COLUMNS
            ])


def train(world_config: WorldConfig, train_config: TrainConfig, seed: int,
          out_dir) -> list[dict]:
    """Full training run; writes the per-episode report CSV and checkpoints
    under out_dir and returns the report rows."""
    trainer = Trainer(world_config, train_config, seed)
    return trainer.run(out_dir)


def load_actor_networks(path, world_config: WorldConfig) -> list[Network]:
    """Actor networks for every agent from a checkpoint, shape-validated
    against the world configuration."""
    from .neural import load_checkpoint
    tensors = load_checkpoint(path)
    spec = actor_spec(world_config)
    n = world_config.num_uavs
    missing = [f"actor_{i}" for i in range(n)
               if f"actor_{i}/head_w2" not in tensors]
    if missing:
        raise CheckpointError(f"checkpoint lacks networks for agents: {missing}")
    return [network_from_tensors(f"actor_{i}", spec, tensors) for i in range(n)]
