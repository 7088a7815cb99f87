"""Experience-guided exploration and skill expansion.

Tool statistics from earlier rollouts rank the tools: never invoked first,
then failure-prone, then the rest. An explorer probes the top targets, the
model writes new tasks grounded in what the probes did, and the ordinary
acquisition pipeline runs on those tasks.
"""

from __future__ import annotations

import hashlib
import logging
import random
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .context import Environment, PipelineContext, Policy, run_episode
from .errors import EnvironmentError_, PreconditionError
from .extraction import render_trajectory
from .gateway import ChatGateway
from .prompts import build_request
from .refinement import run_round
from .skills import SkillLibrary
from .trajectory import Task, Trajectory

log = logging.getLogger(__name__)

_TASK = re.compile(r"<task>(.*?)</task>", re.DOTALL | re.IGNORECASE)


@dataclass(frozen=True)
class ToolStats:
    tool: str
    invocation_count: int = 0
    success_count: int = 0
    failure_count: int = 0

    @property
    def failure_rate(self) -> float:
        return self.failure_count / self.invocation_count if self.invocation_count else 0.0

    @property
    def never_invoked(self) -> bool:
        return self.invocation_count == 0

    def to_json(self) -> dict:
        return {
            "tool": self.tool,
            "invocations": self.invocation_count,
            "successes": self.success_count,
            "failures": self.failure_count,
            "failure_rate": self.failure_rate,
            "never_invoked": self.never_invoked,
        }


def compute_tool_stats(trajectories: Sequence[Trajectory], tool_universe: Sequence[str]) -> list[ToolStats]:
    counts = {t: [0, 0, 0] for t in sorted(set(tool_universe))}
    for tr in trajectories:
        for step in tr.tool_calls():
            c = counts.get(step.action.tool or "")
            if c is None:
                continue
            c[0] += 1
            # a call without a recorded outcome counts as neither
            if step.outcome == "success":
                c[1] += 1
            elif step.outcome == "failure":
                c[2] += 1
    return [ToolStats(t, n, s, f) for t, (n, s, f) in counts.items()]


def tool_tier(stats: ToolStats, failure_threshold: float = 0.5) -> int:
    if stats.never_invoked:
        return 0
    if stats.failure_rate >= failure_threshold:
        return 1
    return 2


def prioritize_tools(stats: Sequence[ToolStats], failure_threshold: float = 0.5) -> list[str]:
    ranked = sorted(stats, key=lambda s: (tool_tier(s, failure_threshold), s.invocation_count, s.tool))
    return [s.tool for s in ranked]


@dataclass(frozen=True)
class ExplorationDirective:
    targets: tuple[str, ...]
    temperature: float = 1.0
    rollouts_per_task: int = 1

    def validate(self, tool_universe: Sequence[str]) -> None:
        unknown = set(self.targets) - set(tool_universe)
        if unknown:
            raise PreconditionError(f"exploration targets outside the tool universe: {sorted(unknown)}")

    def for_task(self, i: int) -> tuple[str, ...]:
        """Targets for the i-th seed task: the ranking rotated, so the top tools spread over tasks."""
        if not self.targets:
            return ()
        k = i % len(self.targets)
        return self.targets[k:] + self.targets[:k]


@dataclass
class Exploration:
    trajectories: list[Trajectory] = field(default_factory=list)
    targets: dict[str, tuple[str, ...]] = field(default_factory=dict)  # trajectory key -> guidance
    skipped: list[str] = field(default_factory=list)


def explore(
    environment: Environment,
    directive: ExplorationDirective,
    seed_tasks: Sequence[Task],
    policy: Policy,
    *,
    per_task_targets: Sequence[Sequence[str]] | None = None,
    step_cap: int = 40,
    seed: int = 0,
) -> Exploration:
    """One exploratory rollout per seed task, guided towards the directive's targets."""
    out = Exploration()
    for i, task in enumerate(seed_tasks):
        guidance = tuple(per_task_targets[i]) if per_task_targets is not None else directive.for_task(i)
        for r in range(1, directive.rollouts_per_task + 1):
            try:
                tr = run_episode(
                    task,
                    policy,
                    environment,
                    rollout_index=r,
                    temperature=directive.temperature,
                    step_cap=step_cap,
                    guidance=guidance,
                    seed=seed,
                )
            except EnvironmentError_ as exc:
                log.warning("exploration on %s skipped: %s", task.id, exc)
                out.skipped.append(task.id)
                continue
            probe_task = Task(f"{task.id}~explore", task.text, "synthesized")
            tr = Trajectory(probe_task, tr.steps, tr.success, tr.rollout_index)
            out.trajectories.append(tr)
            out.targets[tr.key] = guidance
    return out


def normalize_task_text(text: str) -> str:
    return re.sub(r"\s+", " ", text.strip().lower()).rstrip(" .!")


def synthesize_tasks(
    trajectories: Sequence[Trajectory],
    gateway: ChatGateway,
    targets: Mapping[str, Sequence[str]] | None = None,
    *,
    jobs_map=map,
) -> list[Task]:
    """One chat call per exploratory run; returns de-duplicated synthesized tasks."""
    if not trajectories:
        raise PreconditionError("task synthesis needs at least one exploratory trajectory")
    targets = targets or {}

    def one(tr: Trajectory) -> str | None:
        if not any(s.outcome == "success" for s in tr.tool_calls()):
            return None  # nothing was exercised; a task would not be grounded
        guidance = targets.get(tr.key, ())
        req = build_request(
            "task_synthesis",
            temperature=1.0,
            targets=guidance[0] if guidance else "(none)",
            trajectory=render_trajectory(tr),
        )
        m = _TASK.search(gateway.complete(req))
        if not m or not m.group(1).strip():
            log.info("task synthesis for %s unparseable; skipped", tr.key)
            return None
        return " ".join(m.group(1).split())

    tasks: list[Task] = []
    seen: set[str] = set()
    for tr, text in zip(trajectories, jobs_map(one, trajectories)):
        if text is None:
            continue
        key = normalize_task_text(text)
        if key in seen:
            continue
        seen.add(key)
        tid = "syn-" + hashlib.sha256(key.encode("utf-8")).hexdigest()[:10]
        tasks.append(Task(tid, text, "synthesized", tr.key))
    return tasks


def register_synthesized(
    tasks: Sequence[Task], trajectories: Sequence[Trajectory], *targets: object
) -> None:
    """Hand each synthesized task and its source run to anything that accepts them."""
    by_key = {t.key: t for t in trajectories}
    for task in tasks:
        ref = by_key.get(task.source_trajectory or "")
        if ref is None:
            continue
        for obj in targets:
            reg = getattr(obj, "register_task", None)
            if reg is not None:
                reg(task, ref)


def expand(
    library: SkillLibrary,
    synthesized_tasks: Sequence[Task],
    policy: Policy,
    environment: Environment,
    ctx: PipelineContext,
) -> tuple[SkillLibrary, dict]:
    """Rerun acquisition and refinement on synthesized tasks; new skills are tagged expanded."""
    if not synthesized_tasks:
        return library, {"iteration": library.iteration, "candidates_in": 0, "updates": {"add": 0, "modify": 0, "keep": 0}}
    result = run_round(library, synthesized_tasks, policy, environment, ctx, origin="expanded")
    return result.library, result.report


@dataclass
class ExpansionResult:
    library: SkillLibrary
    stats: list[ToolStats]
    ranking: list[str]
    exploration: Exploration
    synthesized: list[Task]
    report: dict

    def coverage(self, tool_universe: Sequence[str]) -> int:
        return len(self.library.tools_covered() & set(tool_universe))

    def to_json(self) -> dict:
        return {
            "stats": [s.to_json() for s in self.stats],
            "ranking": self.ranking,
            "exploration_targets": {k: list(v) for k, v in self.exploration.targets.items()},
            "skipped": self.exploration.skipped,
            "synthesized": [t.to_dict() for t in self.synthesized],
            "report": self.report,
        }


def run_expansion(
    library: SkillLibrary,
    experience: Sequence[Trajectory],
    seed_tasks: Sequence[Task],
    environment: Environment,
    explorer: Policy,
    agent: Policy,
    ctx: PipelineContext,
    *,
    mode: str = "guided",
    rng_seed: int | None = None,
) -> ExpansionResult:
    """stats -> prioritize -> explore -> synthesize -> acquire.

    ``mode="random"`` replaces the ranking with one uniformly random tool per
    seed task, the untargeted baseline with the same rollout budget.
    """
    universe = sorted(environment.schemas)
    stats = compute_tool_stats(experience, universe)
    ranking = prioritize_tools(stats, ctx.expansion.failure_rate_threshold)
    cfg = ctx.expansion
    directive = ExplorationDirective(tuple(ranking), cfg.temperature, cfg.rollouts_per_task)
    directive.validate(universe)
    per_task = None
    if mode == "random":
        rng = random.Random(ctx.seed if rng_seed is None else rng_seed)
        per_task = [(rng.choice(universe),) for _ in seed_tasks]
    elif mode != "guided":
        raise ValueError(f"unknown exploration mode {mode!r}")
    exploration = explore(
        environment, directive, seed_tasks, explorer,
        per_task_targets=per_task, step_cap=ctx.extraction.step_cap, seed=ctx.seed,
    )
    synthesized = (
        synthesize_tasks(exploration.trajectories, ctx.gateway, exploration.targets, jobs_map=ctx.map)
        if exploration.trajectories
        else []
    )
    register_synthesized(synthesized, exploration.trajectories, environment, agent)
    new_library, report = expand(library, synthesized, agent, environment, ctx)
    return ExpansionResult(new_library, stats, ranking, exploration, synthesized, report)
