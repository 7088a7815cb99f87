"""Inference-time skill retrieval.

The path for one query: find reference plans for similar tasks, have the
model draft a pseudo-plan, search with every plan step, keep results near
the best match, union across steps, drop near-duplicates, diversify with
MMR and let the model make the final cut. The pseudo-plan steers the search
only and never reaches the assembled prompt.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .ann import AnnIndex, HnswParams
from .config import RetrievalConfig
from .context import PipelineContext
from .errors import ParseError
from .extraction import format_plan_step, parse_plan
from .gateway import ChatGateway
from .prompts import build_request
from .skills import Skill, SkillLevel, SkillLibrary
from .trajectory import PseudoPlanStep
from .vectors import normalize

log = logging.getLogger(__name__)

_SELECTED = re.compile(r"<selected>(.*?)</selected>", re.DOTALL | re.IGNORECASE)


def _dot(a: np.ndarray, b: np.ndarray) -> float:
    # correctly rounded, hence order-independent and exactly symmetric
    return math.fsum((a * b).tolist())


@dataclass(frozen=True)
class RetrievedSkill:
    name: str
    similarity: float
    vector: np.ndarray = field(repr=False, compare=False)


# ---------------------------------------------------------------- filters


def hybrid_threshold_filter(candidates: Sequence, config: RetrievalConfig | None = None) -> list:
    """Keep candidates at or above the floor and within the band of the best.

    ``candidates`` are ``(name, sim)`` pairs or :class:`RetrievedSkill`, sorted
    by similarity descending; order is preserved.
    """
    cfg = config or RetrievalConfig()
    if not candidates:
        return []
    sims = [c.similarity if isinstance(c, RetrievedSkill) else c[1] for c in candidates]
    best = max(sims)
    return [c for c, s in zip(candidates, sims) if s >= cfg.min_similarity and best - s <= cfg.best_match_band]


def _by_score(candidates: Sequence[RetrievedSkill]) -> list[RetrievedSkill]:
    return sorted(candidates, key=lambda c: (-c.similarity, c.name))


def semantic_dedup(candidates: Sequence[RetrievedSkill], config: RetrievalConfig | None = None) -> list[RetrievedSkill]:
    """Greedy in score order: drop anything above the dedup threshold to a kept item."""
    cfg = config or RetrievalConfig()
    kept: list[RetrievedSkill] = []
    for c in _by_score(candidates):
        if all(_dot(c.vector, k.vector) <= cfg.dedup_threshold for k in kept):
            kept.append(c)
    return kept


def cross_step_dedup(
    per_step: Sequence[Sequence[RetrievedSkill]], config: RetrievalConfig | None = None
) -> list[RetrievedSkill]:
    best: dict[str, RetrievedSkill] = {}
    for lst in per_step:
        for c in lst:
            cur = best.get(c.name)
            if cur is None or c.similarity > cur.similarity:
                best[c.name] = c
    return semantic_dedup(list(best.values()), config)


def mmr_select(
    candidates: Sequence[RetrievedSkill],
    query_vector: np.ndarray | None = None,
    config: RetrievalConfig | None = None,
    *,
    lam: float | None = None,
    cap: int | None = None,
) -> list[RetrievedSkill]:
    """Greedy maximal marginal relevance.

    Relevance is each candidate's stored similarity unless a query vector is
    given. Ties go to the lexicographically smaller name.
    """
    cfg = config or RetrievalConfig()
    lam = cfg.mmr_lambda if lam is None else lam
    cap = cfg.final_cap if cap is None else cap
    n = len(candidates)
    if n == 0:
        return []
    if query_vector is not None:
        rel = np.array([_dot(c.vector, query_vector) for c in candidates])
    else:
        rel = np.array([c.similarity for c in candidates], dtype=np.float64)
    names = [c.name for c in candidates]
    name_rank = np.empty(n, dtype=np.int64)
    name_rank[np.argsort(np.array(names, dtype=object), kind="stable")] = np.arange(n)
    redundancy = np.zeros(n)
    remaining = np.ones(n, dtype=bool)
    picked: list[int] = []
    while remaining.any() and len(picked) < cap:
        scores = lam * rel - (1.0 - lam) * redundancy
        if not picked:
            scores = lam * rel  # the redundancy term over an empty set is zero
        scores = np.where(remaining, scores, -np.inf)
        top = scores.max()
        tied = np.flatnonzero(scores == top)
        j = int(tied[np.argmin(name_rank[tied])])
        picked.append(j)
        remaining[j] = False
        vj = candidates[j].vector
        for i in np.flatnonzero(remaining):
            s = _dot(candidates[i].vector, vj)
            if not picked[:-1] or s > redundancy[i]:
                redundancy[i] = s
    return [candidates[i] for i in picked]


def self_filter(
    query: str,
    pseudo_plan: Sequence[PseudoPlanStep],
    candidates: Sequence[Skill],
    gateway: ChatGateway,
) -> tuple[list[Skill], bool]:
    """Model-chosen subset of ``candidates``; returns (skills, failed_open)."""
    if not candidates:
        return [], False
    listing = "\n".join(f"- {s.name}: {s.document}" for s in candidates)
    plan = "\n".join(format_plan_step(s) for s in pseudo_plan)
    req = build_request("self_filter", temperature=0.0, task=query, plan=plan, candidates=listing)
    reply = gateway.complete(req)
    m = _SELECTED.search(reply)
    names = None
    if m:
        try:
            names = json.loads(m.group(1).strip())
        except json.JSONDecodeError:
            names = None
    if not isinstance(names, list) or not all(isinstance(x, str) for x in names):
        log.info("self-filter reply unparseable; keeping all %d candidates", len(candidates))
        return list(candidates), True
    if not names:
        return [], False
    chosen = set(names)
    kept = [s for s in candidates if s.name in chosen]
    if not kept:
        log.info("self-filter named only unknown skills; keeping all")
        return list(candidates), True
    return kept, False


# ---------------------------------------------------------------- bundle


@dataclass
class RetrievalBundle:
    query: str
    planning_skills: list[Skill] = field(default_factory=list)
    pseudo_plan: list[PseudoPlanStep] = field(default_factory=list)
    selected_skills: list[Skill] = field(default_factory=list)
    similarities: dict[str, float] = field(default_factory=dict)
    trace: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "query": self.query,
            "plan_steps": [format_plan_step(s) for s in self.pseudo_plan],
            "planning": [
                {"name": s.name, "similarity": round(self.similarities.get(s.name, 0.0), 6)}
                for s in self.planning_skills
            ],
            "selected": [
                {"name": s.name, "level": s.level.value, "similarity": round(self.similarities.get(s.name, 0.0), 6)}
                for s in self.selected_skills
            ],
            "trace": self.trace,
        }

    @property
    def prompt(self) -> str:
        return assemble_prompt(self)


def _block(skill: Skill) -> list[str]:
    if skill.level is SkillLevel.PLANNING:
        return [f"### {skill.name}", skill.document, skill.content]
    return [
        f"### {skill.name}",
        skill.document,
        "Implementation:",
        skill.content,
        "Tools: " + ", ".join(skill.tools),
    ]


def assemble_prompt(bundle: RetrievalBundle) -> str:
    """System-prompt section for a bundle: plans, then functional, then atomic.

    A line that would reproduce any pseudo-plan goal text is left out (and
    a block whose heading would, entirely), so the draft plan cannot leak.
    """
    goals = [s.goal_text for s in bundle.pseudo_plan]
    functional = [s for s in bundle.selected_skills if s.level is SkillLevel.FUNCTIONAL]
    atomic = [s for s in bundle.selected_skills if s.level is SkillLevel.ATOMIC]
    sections = [
        ("## Reference plans", bundle.planning_skills),
        ("## Functional skills", functional),
        ("## Atomic skills", atomic),
    ]
    excluded = 0
    out: list[str] = []
    for title, skills in sections:
        blocks = []
        for s in skills:
            lines = "\n".join(_block(s)).splitlines()
            if any(g in lines[0] for g in goals):
                excluded += len(lines)
                continue
            clean = [ln for ln in lines if not any(g in ln for g in goals)]
            excluded += len(lines) - len(clean)
            blocks.append("\n".join(clean))
        if blocks:
            out.append(title + "\n\n" + "\n\n".join(blocks))
    bundle.trace["prompt_exclusions"] = excluded
    return ("\n\n".join(out) + "\n") if out else ""


# ---------------------------------------------------------------- retriever


class _LevelIndex:
    def __init__(self, skills: Sequence[Skill], ctx: PipelineContext):
        self.skills = {s.name: s for s in skills}
        self.index: AnnIndex | None = None
        if skills:
            embs = ctx.cache.for_skills(list(skills))
            p = ctx.hnsw
            self.index = AnnIndex(embs[0].vector.shape[0], HnswParams(p.M, p.ef_construction, p.ef_search, p.seed))
            for e in embs:
                self.index.add(e.skill_name, e.vector)
            self.index.ensure_reachable()

    def __len__(self) -> int:
        return len(self.skills)

    def search(self, q: np.ndarray, k: int) -> list[RetrievedSkill]:
        if self.index is None:
            return []
        hits = self.index.search(q, min(k, len(self.index)))
        return [RetrievedSkill(n, s, self.index.vector(n)) for n, s in hits]


class Retriever:
    """Indexes one library snapshot; safe to query from several threads."""

    def __init__(self, library: SkillLibrary, ctx: PipelineContext):
        self.library = library
        self.ctx = ctx
        self.cfg = ctx.retrieval
        self.plans = _LevelIndex(library.by_level(SkillLevel.PLANNING), ctx)
        self.skills = _LevelIndex(
            library.by_level(SkillLevel.FUNCTIONAL) + library.by_level(SkillLevel.ATOMIC), ctx
        )

    def _embed(self, text: str) -> np.ndarray:
        return normalize(self.ctx.cache.embed_texts([text])[0])

    def retrieve_planning(self, query: str) -> list[RetrievedSkill]:
        if not len(self.plans):
            return []
        hits = self.plans.search(self._embed(query), self.cfg.broad_k)
        return hybrid_threshold_filter(hits, self.cfg)[: self.cfg.planning_cap]

    def rewrite_pseudo_plan(self, query: str, plans: Sequence[Skill], trace: dict) -> list[PseudoPlanStep]:
        ref = "\n\n".join(f"Task: {p.source_task_text}\n{p.content}" for p in plans) or "(none)"
        req = build_request("rewrite", temperature=0.0, task=query, plans=ref)
        try:
            steps = parse_plan(self.ctx.gateway.complete(req))
            trace["rewrite_fallback"] = False
        except ParseError as exc:
            log.info("pseudo-plan unparseable (%s); searching with the raw query", exc)
            steps = [PseudoPlanStep(1, query.strip())]
            trace["rewrite_fallback"] = True
        return steps

    def retrieve_for_plan(self, plan: Sequence[PseudoPlanStep]) -> list[list[RetrievedSkill]]:
        def one(step: PseudoPlanStep) -> list[RetrievedSkill]:
            if not len(self.skills):
                return []
            hits = self.skills.search(self._embed(step.goal_text), self.cfg.broad_k)
            return hybrid_threshold_filter(hits, self.cfg)

        return self.ctx.map(one, plan)

    def retrieve(self, query: str) -> RetrievalBundle:
        trace: dict = {}
        bundle = RetrievalBundle(query, trace=trace)
        plan_hits = self.retrieve_planning(query)
        trace["planning_kept"] = len(plan_hits)
        bundle.planning_skills = [self.plans.skills[h.name] for h in plan_hits]
        bundle.pseudo_plan = self.rewrite_pseudo_plan(query, bundle.planning_skills, trace)
        per_step = self.retrieve_for_plan(bundle.pseudo_plan)
        trace["per_step"] = [len(x) for x in per_step]
        union = cross_step_dedup(per_step, self.cfg)
        trace["deduped"] = len(union)
        picked = mmr_select(union, None, self.cfg)
        trace["mmr"] = len(picked)
        skills = [self.skills.skills[c.name] for c in picked]
        chosen, failed_open = self_filter(query, bundle.pseudo_plan, skills, self.ctx.gateway) if skills else ([], False)
        trace["self_filter"] = len(chosen)
        trace["self_filter_fail_open"] = failed_open
        bundle.selected_skills = chosen
        bundle.similarities = {h.name: h.similarity for h in plan_hits}
        bundle.similarities.update({c.name: c.similarity for c in picked})
        if not self.cfg.include_plans:
            bundle.planning_skills = []
        return bundle


def retrieve(query: str, library: SkillLibrary, ctx: PipelineContext) -> RetrievalBundle:
    return Retriever(library, ctx).retrieve(query)


def prompt_for(query: str, library: SkillLibrary, ctx: PipelineContext) -> str:
    """Assembled skill section for ``query``; empty for an empty library."""
    if len(library) == 0:
        return ""
    return retrieve(query, library, ctx).prompt
