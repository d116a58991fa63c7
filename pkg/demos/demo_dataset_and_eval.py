"""End-to-end: dataset generation, baseline rollouts, and the metric suite.

Builds a small multi-task dataset, rolls the oracle follower and the random
agent over it, and prints the aggregate SR / SPL / nDTW / CR report.
"""
import numpy as np

from navbench.agents import OracleFollower, RandomAgent, run_episode
from navbench.episodes import SceneContext, build_dataset
from navbench.generator import GeneratorParams, generate_scene
from navbench.metrics import aggregate, score_episode
from navbench.simulator import SimConfig, Simulator


def roll(agent_factory, episodes, contexts, mode):
    results = []
    for ep in episodes:
        ctx = contexts[ep.scene_id]
        sim = Simulator(ctx.scene, SimConfig(mode=mode))
        traj = run_episode(sim, ep, agent_factory())
        results.append(score_episode(ep, traj, ctx.nav_grid, ctx.cache))
    return aggregate(results, {"mode": mode})


def main():
    scenes = [generate_scene(GeneratorParams(), s) for s in (60, 61, 62, 63)]
    contexts = {s.scene_id: SceneContext(s) for s in scenes}
    dataset = build_dataset(scenes, {"fine": 2, "coarse": 2, "long_horizon": 1},
                            seed=9, contexts=contexts)

    print("dataset splits:")
    for name, eps in dataset.episodes_by_split.items():
        kinds = {}
        for ep in eps:
            kinds[ep.task_type] = kinds.get(ep.task_type, 0) + 1
        print(f"  {name}: {len(eps)} episodes {kinds}")

    ep = dataset.split("train")[0]
    print(f"\nsample episode {ep.episode_id} ({ep.task_type}):")
    bundle = ep.instruction_bundle
    print(f"  instruction: {bundle.fine or bundle.coarse or bundle.sub_instructions}")

    test_eps = dataset.split("test")
    print(f"\noracle follower on the {len(test_eps)}-episode test split (strict):")
    report = roll(OracleFollower, test_eps, contexts, "strict")
    print(" ", {k: report.aggregates[k] for k in ("N", "SR", "OSR", "SPL", "nDTW", "CR")})

    print("random agent on the same split (strict):")
    report = roll(lambda: RandomAgent(seed=1), test_eps, contexts, "strict")
    print(" ", {k: report.aggregates[k] for k in ("N", "SR", "OSR", "SPL", "nDTW", "CR")})


if __name__ == "__main__":
    main()
