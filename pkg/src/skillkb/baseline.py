"""A/B measurement: the same policy with and without retrieved skills."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .context import Environment, PipelineContext, Policy
from .extraction import rollout
from .retrieval import prompt_for
from .skills import SkillLibrary
from .trajectory import Task, Trajectory


@dataclass
class Metrics:
    avg_at_m: float
    pass_at_m: float
    mean_steps: float
    per_task: dict[str, dict] = field(default_factory=dict)
    trajectories: list[Trajectory] = field(default_factory=list, repr=False)

    def to_json(self) -> dict:
        return {
            "avg_at_m": self.avg_at_m,
            "pass_at_m": self.pass_at_m,
            "mean_steps": self.mean_steps,
            "per_task": self.per_task,
        }


def summarize(trajectories: Sequence[Trajectory]) -> Metrics:
    by_task: dict[str, list[Trajectory]] = {}
    for tr in trajectories:
        by_task.setdefault(tr.task.id, []).append(tr)
    per_task = {}
    for tid in sorted(by_task):
        runs = by_task[tid]
        wins = sum(t.success for t in runs)
        per_task[tid] = {
            "rollouts": len(runs),
            "successes": wins,
            "avg": wins / len(runs),
            "mean_steps": sum(len(t.steps) for t in runs) / len(runs),
        }
    if not per_task:
        return Metrics(0.0, 0.0, 0.0, {}, [])
    n = len(per_task)
    return Metrics(
        avg_at_m=sum(p["avg"] for p in per_task.values()) / n,
        pass_at_m=sum(p["successes"] > 0 for p in per_task.values()) / n,
        mean_steps=sum(len(t.steps) for t in trajectories) / len(trajectories),
        per_task=per_task,
        trajectories=list(trajectories),
    )


def _run(
    tasks: Sequence[Task],
    policy: Policy,
    environment: Environment,
    m: int,
    prompts: Sequence[str],
    *,
    temperature: float,
    step_cap: int,
    seed: int,
) -> Metrics:
    trajectories: list[Trajectory] = []
    for task, prompt in zip(tasks, prompts):
        trajectories.extend(
            rollout(task, policy, environment, m, temperature, step_cap=step_cap, skill_prompt=prompt, seed=seed)
        )
    return summarize(trajectories)


def run_baseline(
    tasks: Sequence[Task],
    policy: Policy,
    environment: Environment,
    m: int = 4,
    *,
    temperature: float = 0.9,
    step_cap: int = 40,
    seed: int = 0,
) -> Metrics:
    """No skills in context."""
    return _run(tasks, policy, environment, m, [""] * len(tasks), temperature=temperature, step_cap=step_cap, seed=seed)


def run_conditioned(
    tasks: Sequence[Task],
    policy: Policy,
    environment: Environment,
    library: SkillLibrary,
    ctx: PipelineContext,
    m: int = 4,
    *,
    temperature: float = 0.9,
    step_cap: int = 40,
) -> Metrics:
    """Each task runs with the skill section retrieved for it from ``library``."""
    prompts = ctx.map(lambda t: prompt_for(t.text, library, ctx), tasks)
    return _run(tasks, policy, environment, m, prompts, temperature=temperature, step_cap=step_cap, seed=ctx.seed)
