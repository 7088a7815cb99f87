"""Cluster, merge and filter candidate skills, then fold them into the library.

Per level the candidates go through density clustering (cosine, min_samples
2), an LLM merge of each cluster, a portability review, a static check
against the tool schemas and finally an LLM schema audit. Survivors become
add/modify/keep updates; nothing is ever deleted.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .callsites import find_calls, literal_type, type_compatible
from .config import RefinementConfig
from .context import Environment, PipelineContext, Policy
from .errors import ParseError, PreconditionError
from .extraction import Candidates, collect_candidates, render_library, rollout
from .gateway import ChatGateway
from .prompts import build_request
from .skills import Provenance, Skill, SkillLevel, SkillLibrary, SkillUpdate, apply_updates, validate_skill
from .store import ToolSchema
from .trajectory import Task, Trajectory
from .vectors import similarity_matrix

log = logging.getLogger(__name__)

_SKILL_TAG = re.compile(r"<skill>(.*?)</skill>", re.DOTALL | re.IGNORECASE)
_ANSWER = re.compile(r"<answer>(.*?)</answer>", re.DOTALL | re.IGNORECASE)
LEVEL_ORDER = (SkillLevel.PLANNING, SkillLevel.FUNCTIONAL, SkillLevel.ATOMIC)


# ---------------------------------------------------------------- clustering


def dbscan_labels(sims: np.ndarray, min_sim: float, min_samples: int = 2) -> np.ndarray:
    """DBSCAN labels over a similarity matrix; -1 marks noise.

    Two points are neighbours when their similarity is at least ``min_sim``
    (cosine distance within eps). Neighbourhoods include the point itself.
    Clusters are numbered by their lowest-index core point, and a border
    point joins the lowest-numbered cluster among its core neighbours, which
    is what the sequential algorithm produces.
    """
    n = sims.shape[0]
    labels = np.full(n, -1, dtype=int)
    if n == 0:
        return labels
    adj = sims >= min_sim
    np.fill_diagonal(adj, True)
    core = adj.sum(axis=1) >= min_samples
    core_idx = np.flatnonzero(core)
    if core_idx.size == 0:
        return labels
    sub = adj[np.ix_(core_idx, core_idx)]
    _, comp = connected_components(csr_matrix(sub), directed=False)
    # renumber components by first appearance
    order: dict[int, int] = {}
    for c in comp:
        order.setdefault(int(c), len(order))
    labels[core_idx] = [order[int(c)] for c in comp]
    for i in np.flatnonzero(~core):
        near = core_idx[adj[i, core_idx]]
        if near.size:
            labels[i] = labels[near].min()
    return labels


@dataclass(frozen=True)
class SkillCluster:
    members: tuple[str, ...]
    level: SkillLevel
    medoid: str
    mean_similarity: float
    min_similarity: float
    overflow: tuple[str, ...] = ()  # members cut by the size cap


def cluster_skills(
    skills: Sequence[Skill], vectors: np.ndarray, config: RefinementConfig | None = None
) -> tuple[list[SkillCluster], list[str]]:
    """Density clusters of same-level skills plus the names left as noise.

    Names are only labels here: candidates may share a name, and the
    returned member names refer to positions via :func:`cluster_indices`.
    """
    clusters, noise = cluster_indices(skills, vectors, config)
    return (
        [
            SkillCluster(
                tuple(skills[i].name for i in c.members_idx),
                c.level,
                skills[c.medoid_idx].name,
                c.mean_similarity,
                c.min_similarity,
                tuple(skills[i].name for i in c.overflow_idx),
            )
            for c in clusters
        ],
        [skills[i].name for i in noise],
    )


@dataclass(frozen=True)
class IndexCluster:
    members_idx: tuple[int, ...]
    overflow_idx: tuple[int, ...]
    medoid_idx: int
    level: SkillLevel
    mean_similarity: float
    min_similarity: float


def cluster_indices(
    skills: Sequence[Skill], vectors: np.ndarray, config: RefinementConfig | None = None
) -> tuple[list[IndexCluster], list[int]]:
    cfg = config or RefinementConfig()
    if not skills:
        return [], []
    levels = {s.level for s in skills}
    if len(levels) > 1:
        raise PreconditionError("cluster_skills runs on one level at a time")
    level = levels.pop()
    sims = similarity_matrix(vectors)
    labels = dbscan_labels(sims, cfg.cluster_sim_threshold, cfg.min_cluster_points)
    out = []
    for lab in range(labels.max() + 1 if labels.size else 0):
        idx = np.flatnonzero(labels == lab)
        block = sims[np.ix_(idx, idx)]
        medoid_pos = int(np.argmax(block.sum(axis=1)))
        # nearest to the medoid first; position breaks ties
        order = sorted(range(len(idx)), key=lambda p: (-block[medoid_pos, p], p))
        keep = sorted(order[: cfg.cluster_cap])
        cut = sorted(order[cfg.cluster_cap :])
        kept_idx = idx[keep]
        kb = sims[np.ix_(kept_idx, kept_idx)]
        off = kb[~np.eye(len(kept_idx), dtype=bool)]
        if cut:
            log.info("cluster of %d truncated to %d", len(idx), cfg.cluster_cap)
        out.append(
            IndexCluster(
                tuple(int(i) for i in kept_idx),
                tuple(int(i) for i in idx[cut]),
                int(idx[medoid_pos]),
                level,
                float(off.mean()),
                float(off.min()),
            )
        )
    return out, [int(i) for i in np.flatnonzero(labels == -1)]


# ---------------------------------------------------------------- merge


def merge_cluster(
    members: Sequence[Skill], gateway: ChatGateway, *, iteration: int = 0, origin: str = "merged"
) -> list[Skill]:
    if len(members) < 2:
        raise PreconditionError("merge needs a cluster of at least two skills")
    level = members[0].level
    req = build_request("merge", temperature=0.0, skills=render_library(members))
    reply = gateway.complete(req)
    m = _SKILL_TAG.search(reply)
    if not m:
        raise ParseError("no <skill> tags in merge reply")
    try:
        raw = json.loads(m.group(1).strip())
    except json.JSONDecodeError as exc:
        raise ParseError(f"merge reply is not JSON: {exc}") from exc
    if isinstance(raw, Mapping):
        raw = [raw]
    if not isinstance(raw, list):
        raise ParseError("merge reply must hold a JSON array")
    prov = Provenance(members[0].provenance.source_task_id, iteration, origin)
    out = []
    for item in raw:
        if not isinstance(item, Mapping):
            continue
        tools = item.get("tools", [])
        skill = Skill(
            name=str(item.get("name", "")).strip(),
            document=str(item.get("document", "")),
            content=str(item.get("content", "")),
            tools=tuple(str(t) for t in ([tools] if isinstance(tools, str) else tools)),
            level=level,
            provenance=prov,
        )
        problems = validate_skill(skill)
        if problems:
            log.info("merge output %r rejected: %s", skill.name, "; ".join(problems))
            continue
        out.append(skill)
    if not out:
        raise ParseError("merge reply held no valid skill")
    return out


# ---------------------------------------------------------------- filters


def _skill_text(skill: Skill) -> str:
    return json.dumps(
        {"name": skill.name, "document": skill.document, "content": skill.content, "tools": list(skill.tools)},
        indent=2,
        ensure_ascii=False,
    )


def _verdict_word(reply: str) -> str:
    return re.sub(r"[^a-z]", "", reply.strip().lower())


def general_filter(skill: Skill, gateway: ChatGateway) -> str:
    req = build_request("general_filter", temperature=0.0, skill=_skill_text(skill))
    for _ in range(2):
        word = _verdict_word(gateway.complete(req))
        if word in ("good", "bad"):
            return word
    return "bad"


@dataclass
class StaticReport:
    skill: str
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def tool_schema_static_check(skill: Skill, schemas: Mapping[str, ToolSchema]) -> StaticReport:
    report = StaticReport(skill.name)
    v = report.violations
    for t in skill.tools:
        if t not in schemas:
            v.append(f"nonexistent tool '{t}'")
    if skill.level is SkillLevel.PLANNING:
        return report
    for site in find_calls(skill.content):
        schema = schemas.get(site.tool)
        if schema is None:
            msg = f"nonexistent tool '{site.tool}'"
            if msg not in v:
                v.append(msg)
            continue
        if site.error:
            v.append(f"{site.tool}: {site.error}")
            continue
        given: dict[str, object] = {}
        if len(site.positional) > len(schema.parameters):
            v.append(f"{site.tool}: too many positional arguments")
        for p, node in zip(schema.parameters, site.positional):
            given[p.name] = node
        for key, node in site.keywords.items():
            if schema.param(key) is None:
                v.append(f"{site.tool}: unknown parameter '{key}'")
            elif key in given:
                v.append(f"{site.tool}: parameter '{key}' given twice")
            else:
                given[key] = node
        if not site.splat:
            for req_name in schema.required:
                if req_name not in given:
                    v.append(f"{site.tool}: missing required parameter '{req_name}'")
        for key, node in given.items():
            p = schema.param(key)
            lt = literal_type(node)  # type: ignore[arg-type]
            if p is not None and lt is not None and not type_compatible(lt, p.type):
                v.append(f"{site.tool}: parameter '{key}' expects {p.type}, got {lt} literal")
    return report


def referenced_tools(skill: Skill) -> list[str]:
    names = set(skill.tools)
    if skill.level is not SkillLevel.PLANNING:
        names.update(c.tool for c in find_calls(skill.content))
    return sorted(names)


def tool_schema_llm_check(skill: Skill, schemas: Mapping[str, ToolSchema], gateway: ChatGateway) -> str:
    specs = "\n".join(schemas[t].render() for t in referenced_tools(skill) if t in schemas)
    req = build_request("tool_schema_filter", temperature=0.0, schemas=specs or "(none)", skill=_skill_text(skill))
    for _ in range(2):
        answers = _ANSWER.findall(gateway.complete(req))
        if answers:
            word = _verdict_word(answers[-1])
            return "correct" if word == "correct" else "fail"
    return "fail"


# ---------------------------------------------------------------- refine


@dataclass
class _Cand:
    skill: Skill
    modified_from: str | None = None


def _as_candidates(candidates: Candidates | Sequence[SkillUpdate | Skill]) -> tuple[list[_Cand], list[str]]:
    if isinstance(candidates, Candidates):
        candidates = candidates.all_updates()
    cands, keeps = [], []
    for c in candidates:
        if isinstance(c, Skill):
            cands.append(_Cand(c))
        elif c.option == "keep":
            keeps.append(c.kept_name or "")
        else:
            assert c.skill is not None
            cands.append(_Cand(c.skill, c.modified_from))
    return cands, keeps


def _fresh_name(name: str, taken: set[str]) -> str:
    k = 2
    while f"{name} ({k})" in taken:
        k += 1
    return f"{name} ({k})"


def _dedup_names(cands: list[_Cand], taken: set[str]) -> list[_Cand]:
    """One candidate per name. Equal bodies collapse; others get fresh names."""
    by_name: dict[str, list[_Cand]] = {}
    for c in cands:
        by_name.setdefault(c.skill.name, []).append(c)
    out: list[_Cand] = []
    used = set(taken) | set(by_name)
    for name in sorted(by_name):
        group = by_name[name]
        distinct: list[_Cand] = []
        for c in group:
            same = next((d for d in distinct if d.skill.same_body(c.skill)), None)
            if same is None:
                distinct.append(c)
            elif same.modified_from is None and c.modified_from:
                same.modified_from = c.modified_from
        if len(distinct) > 1 and distinct[0].skill.level is SkillLevel.ATOMIC:
            distinct.sort(key=lambda d: (d.skill.document, d.skill.content))
            log.info("atomic %r: %d variants, keeping one", name, len(distinct))
            distinct = distinct[:1]
        out.append(distinct[0])
        for extra in distinct[1:]:
            fresh = _fresh_name(name, used)
            used.add(fresh)
            out.append(_Cand(extra.skill.with_(name=fresh), None))
    return out


def _to_updates(cands: list[_Cand], library: SkillLibrary, names: set[str], touched: set[str]) -> list[SkillUpdate]:
    updates = []
    for c in sorted(cands, key=lambda c: c.skill.name):
        skill, mf = c.skill, c.modified_from
        if mf and mf in names and mf in library and mf not in touched and library[mf].level is skill.level:
            if skill.name != mf and skill.name in names:
                skill = skill.with_(name=mf)  # rename would collide; keep the old name
            if skill.name == mf and library[mf].same_body(skill):
                updates.append(SkillUpdate.keep(mf))
                touched.add(mf)
                continue
            updates.append(SkillUpdate.modify(skill, mf))
            names.discard(mf)
            names.add(skill.name)
            touched.add(skill.name)
            continue
        if skill.name in names:
            current = library.skills.get(skill.name)
            if current is None or skill.name in touched:
                log.info("dropping %r: name already claimed this round", skill.name)
                continue
            if current.level is not skill.level:
                if skill.level is SkillLevel.ATOMIC:
                    log.info("dropping atomic %r: name held by a %s skill", skill.name, current.level.value)
                    continue
                skill = skill.with_(name=_fresh_name(skill.name, names))
            elif current.same_body(skill):
                updates.append(SkillUpdate.keep(skill.name))
                touched.add(skill.name)
                continue
            else:
                updates.append(SkillUpdate.modify(skill, skill.name))
                touched.add(skill.name)
                continue
        updates.append(SkillUpdate.add(skill))
        names.add(skill.name)
        touched.add(skill.name)
    return updates


def refine(
    candidates: Candidates | Sequence[SkillUpdate | Skill],
    library: SkillLibrary,
    ctx: PipelineContext,
    *,
    iteration: int = 0,
    report: dict | None = None,
    origin: str = "extracted",
) -> list[SkillUpdate]:
    """Cluster, merge and filter candidates level by level; return the updates to apply.

    Merged skills are tagged ``merged``, except during expansion where every
    new skill keeps the ``expanded`` tag.
    """
    merged_origin = "expanded" if origin == "expanded" else "merged"
    cands, keeps = _as_candidates(candidates)
    rep = {
        "iteration": iteration,
        "candidates_in": len(cands) + len(keeps),
        "clusters": 0,
        "merged_out": 0,
        "filtered_general": 0,
        "filtered_static": 0,
        "filtered_llm": 0,
        "updates": {"add": 0, "modify": 0, "keep": 0},
    }
    names = set(library.names())
    touched: set[str] = set()
    updates: list[SkillUpdate] = []
    for level in LEVEL_ORDER:
        group = [c for c in cands if c.skill.level is level]
        if not group:
            continue
        survivors = _merge_level(group, ctx, iteration, rep, merged_origin)
        survivors = _filter_level(survivors, ctx, rep)
        survivors = _dedup_names(survivors, names)
        updates.extend(_to_updates(survivors, library, names, touched))
    emitted_keeps = {u.kept_name for u in updates if u.option == "keep"}
    for name in sorted(set(keeps)):
        if name in library and name not in touched and name not in emitted_keeps:
            updates.append(SkillUpdate.keep(name))
    for u in updates:
        rep["updates"][u.option] += 1
    if report is not None:
        report.clear()
        report.update(rep)
    return updates


def _merge_level(
    group: list[_Cand], ctx: PipelineContext, iteration: int, rep: dict, origin: str = "merged"
) -> list[_Cand]:
    skills = [c.skill for c in group]
    vectors = ctx.cache.matrix(skills)
    clusters, noise = cluster_indices(skills, vectors, ctx.refinement)
    rep["clusters"] += len(clusters)
    out = [group[i] for i in noise]

    def merge_one(cl: IndexCluster) -> list[_Cand]:
        members = [group[i] for i in cl.members_idx]
        if cl.level is SkillLevel.PLANNING:
            # plans are keyed by their task; the medoid stands for the cluster
            return [group[cl.medoid_idx]]
        try:
            merged = merge_cluster([m.skill for m in members], ctx.gateway, iteration=iteration, origin=origin)
        except ParseError as exc:
            log.info("merge failed (%s); %d members pass through", exc, len(members))
            return members
        targets = {m.skill.name: m.modified_from for m in members if m.modified_from}
        return [_Cand(s, targets.get(s.name)) for s in merged]

    for produced in ctx.map(merge_one, clusters):
        rep["merged_out"] += len(produced)
        out.extend(produced)
    return out


def _filter_level(cands: list[_Cand], ctx: PipelineContext, rep: dict) -> list[_Cand]:
    def verdict(c: _Cand) -> str:
        s = c.skill
        if s.level is SkillLevel.PLANNING:
            return "ok" if tool_schema_static_check(s, ctx.schemas).ok else "static"
        if general_filter(s, ctx.gateway) != "good":
            return "general"
        report = tool_schema_static_check(s, ctx.schemas)
        if not report.ok:
            log.info("static check rejects %r: %s", s.name, "; ".join(report.violations))
            return "static"
        if tool_schema_llm_check(s, ctx.schemas, ctx.gateway) != "correct":
            return "llm"
        return "ok"

    out = []
    for c, v in zip(cands, ctx.map(verdict, cands)):
        if v == "ok":
            out.append(c)
        else:
            rep[f"filtered_{v}"] += 1
    return out


# ---------------------------------------------------------------- rounds


@dataclass
class RoundResult:
    library: SkillLibrary
    report: dict
    trajectories: list[Trajectory]


def roll_tasks(
    tasks: Sequence[Task],
    policy: Policy,
    environment: Environment,
    library: SkillLibrary,
    ctx: PipelineContext,
    *,
    m: int | None = None,
    temperature: float | None = None,
) -> list[Trajectory]:
    """m rollouts per task, each conditioned on the skills retrieved for it."""
    from .retrieval import prompt_for

    cfg = ctx.extraction

    def one(task: Task) -> list[Trajectory]:
        prompt = prompt_for(task.text, library, ctx)
        return rollout(
            task,
            policy,
            environment,
            m or cfg.rollouts,
            cfg.temperature if temperature is None else temperature,
            step_cap=cfg.step_cap,
            skill_prompt=prompt,
            seed=ctx.seed,
        )

    return [tr for group in ctx.map(one, tasks) for tr in group]


def run_round(
    library: SkillLibrary,
    tasks: Sequence[Task],
    policy: Policy,
    environment: Environment,
    ctx: PipelineContext,
    *,
    origin: str = "extracted",
    trajectories: Sequence[Trajectory] | None = None,
) -> RoundResult:
    """One pass of rollout, extraction, refinement and update."""
    k = library.iteration + 1
    if trajectories is None:
        trajectories = roll_tasks(tasks, policy, environment, library, ctx)
    cands = collect_candidates(trajectories, library, ctx, iteration=k, origin=origin)
    report: dict = {}
    updates = refine(cands, library, ctx, iteration=k, report=report, origin=origin)
    new = apply_updates(library.with_iteration(k), updates)
    report["library_size"] = len(new)
    report["trajectories"] = len(trajectories)
    report["successes"] = sum(t.success for t in trajectories)
    return RoundResult(new, report, list(trajectories))


def iterate(
    library: SkillLibrary,
    train_tasks: Sequence[Task],
    policy: Policy,
    environment: Environment,
    ctx: PipelineContext,
    *,
    rounds: int | None = None,
    evaluate: Callable[[SkillLibrary], float] | None = None,
    on_round: Callable[[RoundResult], None] | None = None,
) -> tuple[list[SkillLibrary], list[dict]]:
    """Run up to ``rounds`` refinement rounds; return snapshots D0..DK and reports.

    With an ``evaluate`` hook, iteration stops after the first round whose
    score does not beat the best so far (that round's snapshot is kept).
    """
    k_max = ctx.refinement.max_iterations if rounds is None else rounds
    if k_max > ctx.refinement.max_iterations:
        raise PreconditionError(f"at most {ctx.refinement.max_iterations} rounds")
    snapshots = [library]
    reports: list[dict] = []
    best = evaluate(library) if evaluate else None
    for _ in range(k_max):
        result = run_round(snapshots[-1], train_tasks, policy, environment, ctx)
        snapshots.append(result.library)
        reports.append(result.report)
        if on_round:
            on_round(result)
        if evaluate is not None:
            score = evaluate(result.library)
            if best is not None and score <= best:
                log.info("evaluation did not improve (%.4f <= %.4f); stopping", score, best)
                break
            best = score
    return snapshots, reports
