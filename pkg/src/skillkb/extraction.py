"""From rollouts to candidate skills at the three levels.

Only trajectories the environment judged successful are mined. Every chat
reply is parsed defensively; a reply that cannot be parsed costs its own
step (or tool) and nothing else.
"""

from __future__ import annotations

import json
import logging
import re
import threading
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .config import ExtractionConfig, count_tokens
from .context import Environment, PipelineContext, Policy, run_episode
from .errors import EmptyPlan, MalformedResponse, ParseError, PreconditionError, SchemaError, TransportError
from .gateway import ChatGateway
from .prompts import build_request
from .skills import Provenance, Skill, SkillLevel, SkillLibrary, SkillUpdate, validate_skill
from .callsites import call_sequence
from .trajectory import PseudoPlanStep, Task, Trajectory
from .vectors import text_digest

log = logging.getLogger(__name__)

_PLAN = re.compile(r"<plan>(.*?)</plan>", re.DOTALL | re.IGNORECASE)
_STEP = re.compile(r"^\s*#\s*step\s*(\d+)\s*:\s*(.+?)\s*$", re.IGNORECASE)
_FEEDBACK = re.compile(r"<feedback>(.*?)</feedback>", re.DOTALL | re.IGNORECASE)
_FENCE = re.compile(r"^\s*```[\w-]*\s*\n?|\n?\s*```\s*$")


# ---------------------------------------------------------------- rollouts


def rollout(
    task: Task,
    policy: Policy,
    environment: Environment,
    m: int = 4,
    temperature: float = 0.9,
    *,
    step_cap: int = 40,
    skill_prompt: str = "",
    guidance: Sequence[str] = (),
    seed: int = 0,
) -> list[Trajectory]:
    if m < 1:
        raise PreconditionError("rollout needs m >= 1")
    return [
        run_episode(
            task,
            policy,
            environment,
            rollout_index=i,
            temperature=temperature,
            step_cap=step_cap,
            skill_prompt=skill_prompt,
            guidance=guidance,
            seed=seed,
        )
        for i in range(1, m + 1)
    ]


# ---------------------------------------------------------------- feedback


@dataclass
class FeedbackSummarizer:
    """Shrinks oversized observations through the chat gateway.

    Results are memoised by observation digest, so the m rollouts of a task
    do not pay for the same summary m times. ``truncated`` counts the
    observations that fell back to a hard cut.
    """

    gateway: ChatGateway
    token_limit: int = 1500
    tokenizer: str = "whitespace"
    truncated: int = 0
    _memo: dict[str, str] = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock)

    def __call__(self, observation: str, action_text: str = "") -> str:
        if count_tokens(observation, self.tokenizer) <= self.token_limit:
            return observation
        key = text_digest(action_text + "\x00" + observation)
        with self._lock:
            hit = self._memo.get(key)
        if hit is not None:
            return hit
        try:
            out = self._ask(observation, action_text)
        except MalformedResponse:
            log.warning("feedback summary unparseable twice; truncating at %d tokens", self.token_limit)
            out = _truncate(observation, self.token_limit, self.tokenizer)
            with self._lock:
                self.truncated += 1
        with self._lock:
            self._memo[key] = out
        return out

    def _ask(self, observation: str, action_text: str) -> str:
        req = build_request("tool_summary", temperature=0.0, action=action_text or "(none)", observation=observation)
        for _ in range(2):
            m = _FEEDBACK.search(self.gateway.complete(req))
            if m and m.group(1).strip():
                return m.group(1).strip()
        raise MalformedResponse("no <feedback> tags in summary reply")


def _truncate(text: str, limit: int, tokenizer: str) -> str:
    if tokenizer == "whitespace":
        return " ".join(text.split()[:limit])
    return text[: limit * 4]


def summarize_feedback(
    observation: str,
    gateway: ChatGateway,
    token_limit: int = 1500,
    *,
    action_text: str = "",
    tokenizer: str = "whitespace",
) -> str:
    return FeedbackSummarizer(gateway, token_limit, tokenizer)(observation, action_text)


def render_trajectory(trajectory: Trajectory, summarize: FeedbackSummarizer | None = None) -> str:
    lines = []
    for s in trajectory.steps:
        action = s.action.render()
        obs = summarize(s.observation, action) if summarize else s.observation
        lines.append(f"[{s.t}] thought: {s.thought}")
        lines.append(f"    action: {action}")
        lines.append(f"    observation ({s.outcome}): {obs}")
    lines.append(f"result: {'success' if trajectory.success else 'failure'}")
    return "\n".join(lines)


def render_library(skills: Sequence[Skill]) -> str:
    """Library snapshot as shown to the extractors."""
    rows = [{"name": s.name, "document": s.document, "content": s.content, "tools": list(s.tools)} for s in skills]
    return json.dumps(rows, indent=2, ensure_ascii=False)


# ---------------------------------------------------------------- parsers


def parse_plan(text: str) -> list[PseudoPlanStep]:
    m = _PLAN.search(text)
    if not m:
        raise ParseError("no <plan> tags")
    steps = []
    for line in m.group(1).splitlines():
        sm = _STEP.match(line)
        if not sm:
            continue
        body = sm.group(2)
        goal, sep, apis = body.rpartition(";")
        tools: tuple[str, ...] = ()
        if sep and re.match(r"\s*(apis?|tools?)\s*:", apis, re.IGNORECASE):
            tools = tuple(t.strip() for t in apis.split(":", 1)[1].split(",") if t.strip())
        else:
            goal = body
        goal = goal.strip()
        if goal:
            steps.append(PseudoPlanStep(len(steps) + 1, goal, tools))
    if not steps:
        raise EmptyPlan("plan has no steps")
    return steps


def format_plan_step(step: PseudoPlanStep) -> str:
    line = f"# step {step.ordinal}: {step.goal_text}"
    if step.key_tools:
        line += "; apis: " + ", ".join(step.key_tools)
    return line


def _strip_fences(text: str) -> str:
    text = text.strip()
    m = re.search(r"```[\w-]*\s*\n(.*?)```", text, re.DOTALL)
    if m:
        return m.group(1).strip()
    return _FENCE.sub("", text).strip()


def _skill_from(raw: object, level: SkillLevel, provenance: Provenance) -> Skill:
    if not isinstance(raw, Mapping):
        raise SchemaError("skill must be a JSON object")
    for key in ("name", "document", "content"):
        if not isinstance(raw.get(key), str):
            raise SchemaError(f"skill lacks string field {key!r}")
    tools = raw.get("tools")
    if tools is None:
        tools = list(dict.fromkeys(call_sequence(raw["content"])))
    elif isinstance(tools, str):
        tools = [tools]
    elif not isinstance(tools, list):
        raise SchemaError("skill tools must be a list")
    return Skill(
        name=raw["name"].strip(),
        document=raw["document"],
        content=raw["content"],
        tools=tuple(str(t) for t in tools),
        level=level,
        provenance=provenance,
    )


def parse_update_response(
    text: str, level: SkillLevel | str = SkillLevel.FUNCTIONAL, provenance: Provenance | None = None
) -> list[SkillUpdate]:
    level = SkillLevel(level)
    provenance = provenance or Provenance()
    body = _strip_fences(text)
    try:
        data = json.loads(body)
    except json.JSONDecodeError as exc:
        raise ParseError(f"update reply is not JSON: {exc}") from exc
    if isinstance(data, Mapping):
        data = [data]
    if not isinstance(data, list):
        raise ParseError("update reply must be a JSON array")
    out = []
    for item in data:
        if not isinstance(item, Mapping):
            raise SchemaError("update entries must be objects")
        option = item.get("option")
        if option == "add":
            if "skill" not in item:
                raise SchemaError("add without skill")
            out.append(SkillUpdate.add(_skill_from(item["skill"], level, provenance)))
        elif option == "modify":
            if "skill" not in item:
                raise SchemaError("modify without skill")
            target = item.get("modified_from")
            if not isinstance(target, str) or not target.strip():
                raise SchemaError("modify without modified_from")
            out.append(SkillUpdate.modify(_skill_from(item["skill"], level, provenance), target.strip()))
        elif option == "keep":
            name = item.get("skill_name", item.get("name"))
            if name is None and isinstance(item.get("skill"), Mapping):
                name = item["skill"].get("name")
            if not isinstance(name, str) or not name.strip():
                raise SchemaError("keep without skill_name")
            out.append(SkillUpdate.keep(name.strip()))
        else:
            raise SchemaError(f"unknown update option {option!r}")
    return out


# ---------------------------------------------------------------- extractors


def _require_success(trajectory: Trajectory) -> None:
    if not trajectory.success:
        raise PreconditionError(f"trajectory {trajectory.key} did not succeed")


def planning_skill_name(task: Task) -> str:
    return f"plan {task.id}"


def extract_planning_skill(
    trajectory: Trajectory,
    task: Task,
    gateway: ChatGateway,
    *,
    summarize: FeedbackSummarizer | None = None,
    iteration: int = 0,
    origin: str = "extracted",
) -> Skill:
    _require_success(trajectory)
    req = build_request("plan_extract", task=task.text, trajectory=render_trajectory(trajectory, summarize))
    steps = parse_plan(gateway.complete(req))
    tools = tuple(dict.fromkeys(t for s in steps for t in s.key_tools))
    return Skill(
        name=planning_skill_name(task),
        document=f"Reference plan for tasks like: {task.text}",
        content="\n".join(format_plan_step(s) for s in steps),
        tools=tools,
        level=SkillLevel.PLANNING,
        provenance=Provenance(task.id, iteration, origin),
        source_task_text=task.text,
    )


def _valid_updates(updates: list[SkillUpdate], where: str) -> list[SkillUpdate]:
    kept = []
    for u in updates:
        if u.skill is not None:
            problems = validate_skill(u.skill)
            if problems:
                log.info("%s: dropping %r (%s)", where, u.skill.name, "; ".join(problems))
                continue
        kept.append(u)
    return kept


def extract_functional_skills(
    trajectory: Trajectory,
    planning_skill: Skill,
    library_snapshot: SkillLibrary,
    gateway: ChatGateway,
    *,
    summarize: FeedbackSummarizer | None = None,
    iteration: int = 0,
    origin: str = "extracted",
    jobs_map=map,
) -> list[list[SkillUpdate]]:
    """One chat call per plan step; returns the updates grouped by step."""
    _require_success(trajectory)
    steps = planning_skill.plan_steps()
    if not steps:
        raise PreconditionError("planning skill has no steps")
    history = render_trajectory(trajectory, summarize)
    snapshot = render_library(library_snapshot.by_level(SkillLevel.FUNCTIONAL))
    prov = Provenance(trajectory.task.id, iteration, origin)

    def one(step: str) -> list[SkillUpdate]:
        req = build_request(
            "functional_extract", task=trajectory.task.text, trajectory=history, library=snapshot, step=step
        )
        try:
            ups = parse_update_response(gateway.complete(req), SkillLevel.FUNCTIONAL, prov)
        except ParseError as exc:
            log.info("functional extraction for %s %r dropped: %s", trajectory.key, step, exc)
            return []
        return _valid_updates(ups, f"functional {trajectory.key}")

    return list(jobs_map(one, steps))


def extract_atomic_skills(
    trajectory: Trajectory,
    tool: str,
    library_snapshot: SkillLibrary,
    gateway: ChatGateway,
    *,
    summarize: FeedbackSummarizer | None = None,
    iteration: int = 0,
    origin: str = "extracted",
) -> list[SkillUpdate]:
    _require_success(trajectory)
    if tool not in trajectory.tools_used():
        raise PreconditionError(f"tool {tool!r} was not invoked in {trajectory.key}")
    req = build_request(
        "atomic_extract",
        task=trajectory.task.text,
        trajectory=render_trajectory(trajectory, summarize),
        library=render_library(library_snapshot.by_level(SkillLevel.ATOMIC)),
        tool=tool,
    )
    prov = Provenance(trajectory.task.id, iteration, origin)
    ups = parse_update_response(gateway.complete(req), SkillLevel.ATOMIC, prov)
    out: list[SkillUpdate] = []
    changed = False
    for u in _valid_updates(ups, f"atomic {trajectory.key}"):
        if u.option == "keep":
            out.append(u)
        elif u.skill is not None and u.skill.name == tool and not changed:
            out.append(u)
            changed = True
        else:
            log.info("atomic extraction for %s: ignoring update %r", tool, u.target_name)
    return out


# ---------------------------------------------------------------- collection


@dataclass
class Candidates:
    """Extractor output for one round, in a stable order."""

    planning: list[Skill] = field(default_factory=list)
    functional: list[SkillUpdate] = field(default_factory=list)
    atomic: list[SkillUpdate] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.planning) + len(self.functional) + len(self.atomic)

    def all_updates(self) -> list[SkillUpdate]:
        return [SkillUpdate.add(p) for p in self.planning] + self.functional + self.atomic


def _mine_one(
    tr: Trajectory, library: SkillLibrary, ctx: PipelineContext, summarize: FeedbackSummarizer, iteration: int, origin: str
) -> tuple[list[Skill], list[SkillUpdate], list[SkillUpdate]]:
    try:
        plan = extract_planning_skill(
            tr, tr.task, ctx.gateway, summarize=summarize, iteration=iteration, origin=origin
        )
    except ParseError as exc:
        log.info("plan extraction for %s failed: %s", tr.key, exc)
        plan = None
    planning, functional = [], []
    if plan is not None and not validate_skill(plan):
        planning.append(plan)
        for group in extract_functional_skills(
            tr, plan, library, ctx.gateway, summarize=summarize, iteration=iteration, origin=origin
        ):
            functional.extend(group)
    atomic: list[SkillUpdate] = []
    for tool in sorted(tr.tools_used()):
        if tool not in ctx.schemas:
            continue
        try:
            atomic.extend(
                extract_atomic_skills(tr, tool, library, ctx.gateway, summarize=summarize, iteration=iteration, origin=origin)
            )
        except ParseError as exc:
            log.info("atomic extraction for %s/%s failed: %s", tr.key, tool, exc)
    return planning, functional, atomic


def collect_candidates(
    trajectories: Sequence[Trajectory],
    library: SkillLibrary,
    ctx: PipelineContext,
    *,
    iteration: int = 0,
    origin: str = "extracted",
    config: ExtractionConfig | None = None,
) -> Candidates:
    """Mine every successful trajectory; order by (task id, rollout index)."""
    cfg = config or ctx.extraction
    summarize = FeedbackSummarizer(ctx.gateway, cfg.summary_token_limit, cfg.tokenizer)
    winners = sorted((t for t in trajectories if t.success), key=lambda t: (t.task.id, t.rollout_index))

    def mine(tr: Trajectory) -> tuple[list[Skill], list[SkillUpdate], list[SkillUpdate]]:
        # the gateway has already retried; an unreachable model drops this run only
        try:
            return _mine_one(tr, library, ctx, summarize, iteration, origin)
        except TransportError as exc:
            log.warning("dropping %s: %s", tr.key, exc)
            return [], [], []

    results = ctx.map(mine, winners)
    out = Candidates()
    for planning, functional, atomic in results:
        out.planning.extend(planning)
        out.functional.extend(functional)
        out.atomic.extend(atomic)
    return out
