"""Desk-scale training run: 10x10 instances, small policy, ~30 minutes on CPU.

Writes checkpoints and the training log under runs/desk/. The held-out
comparison against the uniform-random walker mirrors the acceptance suite.
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

from jobshop.baselines import run_random_walk
from jobshop.dispatch import initial_solution_fdd_mwkr
from jobshop.instances import generate_taillard
from jobshop.policy import PolicyConfig, PolicyNetwork
from jobshop.training import TrainConfig, rollout_batch, train

ROOT = Path(__file__).resolve().parent.parent

DESK_POLICY = PolicyConfig(iterations=2, embed_dim=32, mlp_hidden=32,
                           head_hidden=32, head_layers=2, score_dim=16)

DESK_CONFIG = TrainConfig(num_jobs=10, num_machines=10, batch_size=16,
                          step_limit=128, window=10, learning_rate=5e-5,
                          total_instances=2000, validation_size=20,
                          validation_period=10, validation_steps=500,
                          seed=0, policy=DESK_POLICY)


def main() -> int:
    out = ROOT / "runs" / "desk"
    result = train(DESK_CONFIG, out)
    print(f"best checkpoint: {result.best_checkpoint}")
    print(f"training log:    {result.log_path}")

    held = [generate_taillard(10, 10, seed=900_000 + k) for k in range(50)]
    policy = PolicyNetwork.load(result.best_checkpoint)
    envs = rollout_batch(policy, held, steps=500, seed=424242)
    learned = float(np.mean([e.incumbent_makespan for e in envs]))
    initial = float(np.mean([e.initial_makespan for e in envs]))
    random_mean = float(np.mean([
        run_random_walk(inst, initial_solution_fdd_mwkr(inst), 500,
                        np.random.default_rng([424242, k])).best_makespan
        for k, inst in enumerate(held)]))
    print(f"held-out mean initial makespan: {initial:.2f}")
    print(f"held-out mean incumbent, trained policy: {learned:.2f}")
    print(f"held-out mean incumbent, uniform random: {random_mean:.2f}")
    print(f"improvement over initial: {100 * (1 - learned / initial):.2f}%")
    return 0


if __name__ == "__main__":
    sys.exit(main())
