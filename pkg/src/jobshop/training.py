"""Improvement environment and the windowed policy-gradient trainer.

An episode starts from the dispatching-rule solution and applies one swap per
step for a fixed horizon. The reward of a step is the incumbent improvement
``max(incumbent - new_makespan, 0)``, so the rewards accumulated along a
rollout always equal the total improvement over the starting solution.
States without candidate moves are absorbing: the no-op action keeps the
state and earns zero forever.

Training follows a windowed policy-gradient scheme: every ``window`` steps
(and at the horizon) the buffered transitions are turned into within-window
returns-to-go, the gradient of ``sum_t log pi(a_t|s_t) * R_t`` is averaged
over the instance batch, and one Adam step is taken.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dispatch import initial_solution_fdd_mwkr
from .graph import Move, Solution, apply_move
from .instances import Instance, generate_taillard
from .neighborhood import StateAnalysis, analyze_solution
from .nn import Adam
from .policy import (
    DUMMY_ACTION,
    PolicyCache,
    PolicyConfig,
    PolicyNetwork,
    encode_states,
)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    num_jobs: int = 10
    num_machines: int = 10
    batch_size: int = 64
    step_limit: int = 500
    window: int = 10
    learning_rate: float = 5e-5
    total_instances: int = 128000
    validation_size: int = 100
    validation_period: int = 10      # batches between validations
    validation_steps: int = 50
    seed: int = 0
    policy: PolicyConfig = field(default_factory=PolicyConfig)

    def validate(self) -> None:
        if self.window > self.step_limit:
            raise ValueError("window must not exceed step_limit")
        for name in ("num_jobs", "num_machines", "batch_size", "step_limit",
                     "window", "total_instances", "validation_size",
                     "validation_period", "validation_steps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


class Environment:
    """One improvement episode over a fixed instance."""

    def __init__(self, inst: Instance, rng: np.random.Generator,
                 solution: Solution | None = None):
        self.inst = inst
        self.rng = rng
        sol = initial_solution_fdd_mwkr(inst) if solution is None else solution
        self.solution = sol
        self.analysis: StateAnalysis = analyze_solution(inst, sol, rng)
        self.initial_makespan = self.analysis.schedule.makespan
        self.incumbent_makespan = self.initial_makespan
        self.incumbent_solution = sol
        self.steps_taken = 0
        self.cumulative_reward = 0

    @property
    def absorbing(self) -> bool:
        return self.analysis.moves.absorbing

    def step(self, move: Move | None) -> int:
        """Apply one move (or the no-op) and return the reward."""
        self.steps_taken += 1
        if move is None:
            if not self.absorbing:
                raise TrainingError("no-op action outside an absorbing state")
            return 0
        self.solution = apply_move(self.solution, move)
        self.analysis = analyze_solution(self.inst, self.solution, self.rng)
        makespan = self.analysis.schedule.makespan
        reward = max(self.incumbent_makespan - makespan, 0)
        if makespan < self.incumbent_makespan:
            self.incumbent_makespan = makespan
            self.incumbent_solution = self.solution
        self.cumulative_reward += reward
        return reward


def compute_returns(rewards: list[int]) -> list[int]:
    """Undiscounted within-window returns-to-go."""
    out = [0] * len(rewards)
    acc = 0
    for j in range(len(rewards) - 1, -1, -1):
        acc += rewards[j]
        out[j] = acc
    return out


@dataclass
class StepRecord:
    cache: PolicyCache
    actions: list[int]
    rewards: list[int]


def reinforce_update(policy: PolicyNetwork, optimizer: Adam,
                     window: list[StepRecord]) -> float:
    """One ascent step on the window's mean return-weighted log-likelihood.

    Returns the gradient norm. Non-finite gradients abort.
    """
    if not window:
        return 0.0
    batch = len(window[0].actions)
    rewards_per_env = [[rec.rewards[b] for rec in window] for b in range(batch)]
    returns = [compute_returns(r) for r in rewards_per_env]
    policy.store.zero_grads()
    for j, rec in enumerate(window):
        # Adam descends, so feed the negated coefficient of log-probability
        coeffs = [-returns[b][j] / batch for b in range(batch)]
        policy.accumulate_logprob_grad(rec.cache, rec.actions, coeffs)
    for name, g in policy.store.grads.items():
        if not np.isfinite(g).all():
            raise TrainingError(f"non-finite gradient in {name!r}")
    norm = policy.store.grad_norm()
    optimizer.step()
    policy.store.zero_grads()
    return norm


def rollout_batch(policy: PolicyNetwork, instances: list[Instance],
                  steps: int, seed: int, *, greedy: bool = False,
                  train_mode: bool = False,
                  solutions: list[Solution] | None = None) -> list[Environment]:
    """Roll out the policy on many instances in lockstep and return the envs."""
    envs = [Environment(inst, np.random.default_rng([seed, i]),
                        None if solutions is None else solutions[i])
            for i, inst in enumerate(instances)]
    for _ in range(steps):
        if all(env.absorbing for env in envs):
            # nothing can change any more; spinning would only burn time
            break
        enc = encode_states([env.analysis for env in envs])
        dists, _ = policy.forward(enc, train=train_mode,
                                  update_running=train_mode)
        for env, dist in zip(envs, dists):
            idx = dist.greedy() if greedy else dist.sample(env.rng)
            env.step(None if idx == DUMMY_ACTION else dist.moves[idx])
    return envs


@dataclass
class TrainResult:
    log_rows: list[dict]
    best_checkpoint: Path
    last_checkpoint: Path
    log_path: Path
    best_metric: float


LOG_COLUMNS = ["instances_seen", "mean_validation_makespan",
               "mean_cumulative_reward", "wall_seconds"]


def train(cfg: TrainConfig, out_dir: Path,
          resume_from: Path | None = None) -> TrainResult:
    cfg.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    best_path = out_dir / "best.npz"
    last_path = out_dir / "last.npz"
    log_path = out_dir / "train_log.csv"

    if resume_from is not None:
        policy = PolicyNetwork.load(resume_from)
        if policy.config != cfg.policy:
            raise TrainingError("resume checkpoint was built with a different "
                                "policy configuration")
    else:
        policy = PolicyNetwork(cfg.policy, seed=cfg.seed)
    optimizer = policy.optimizer(cfg.learning_rate)

    instance_seed_rng = np.random.default_rng([cfg.seed, 1])
    validation_set = [generate_taillard(cfg.num_jobs, cfg.num_machines,
                                        seed=int(s))
                      for s in np.random.default_rng([cfg.seed, 2]).integers(
                          2**63, size=cfg.validation_size)]

    resume = resume_from is not None and log_path.exists()
    log_rows: list[dict] = []
    log_file = open(log_path, "a" if resume else "w", newline="")
    writer = csv.writer(log_file)
    if not resume:
        writer.writerow(LOG_COLUMNS)

    def validate(instances_seen: int, started: float) -> float:
        envs = rollout_batch(policy, validation_set, cfg.validation_steps,
                             seed=cfg.seed + 777)
        mean_makespan = float(np.mean([e.incumbent_makespan for e in envs]))
        mean_reward = float(np.mean([e.cumulative_reward for e in envs]))
        row = {"instances_seen": instances_seen,
               "mean_validation_makespan": mean_makespan,
               "mean_cumulative_reward": mean_reward,
               "wall_seconds": round(time.perf_counter() - started, 3)}
        log_rows.append(row)
        writer.writerow([row[c] for c in LOG_COLUMNS])
        log_file.flush()
        return mean_makespan

    started = time.perf_counter()
    best_metric = float("inf")
    policy.save(best_path)
    instances_seen = 0
    n_batches = cfg.total_instances // cfg.batch_size
    for batch_idx in range(n_batches):
        instances = [generate_taillard(cfg.num_jobs, cfg.num_machines,
                                       seed=int(instance_seed_rng.integers(2**63)))
                     for _ in range(cfg.batch_size)]
        envs = [Environment(inst, np.random.default_rng(
            [cfg.seed, 3, batch_idx, b]))
            for b, inst in enumerate(instances)]
        window: list[StepRecord] = []
        for t in range(1, cfg.step_limit + 1):
            enc = encode_states([env.analysis for env in envs])
            dists, cache = policy.forward(enc, train=True)
            actions = []
            rewards = []
            for env, dist in zip(envs, dists):
                idx = dist.sample(env.rng)
                reward = env.step(None if idx == DUMMY_ACTION
                                  else dist.moves[idx])
                actions.append(idx)
                rewards.append(reward)
            window.append(StepRecord(cache=cache, actions=actions,
                                     rewards=rewards))
            if t % cfg.window == 0 or t == cfg.step_limit:
                reinforce_update(policy, optimizer, window)
                window = []
        instances_seen += cfg.batch_size
        if (batch_idx + 1) % cfg.validation_period == 0 \
                or batch_idx == n_batches - 1:
            metric = validate(instances_seen, started)
            if metric < best_metric:
                best_metric = metric
                policy.save(best_path)
    policy.save(last_path)
    log_file.close()
    return TrainResult(log_rows=log_rows, best_checkpoint=best_path,
                       last_checkpoint=last_path, log_path=log_path,
                       best_metric=best_metric)
