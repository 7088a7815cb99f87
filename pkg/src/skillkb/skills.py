"""Skill, library and the add/modify/keep update algebra."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

from .errors import DuplicateName, NameCollision, UnknownTarget


class SkillLevel(str, enum.Enum):
    PLANNING = "planning"
    FUNCTIONAL = "functional"
    ATOMIC = "atomic"


ORIGINS = ("extracted", "merged", "expanded")

_STEP_LINE = re.compile(r"^\s*#\s*step\s*\d+\s*:", re.IGNORECASE | re.MULTILINE)
_TOOL_NAME = re.compile(r"^[A-Za-z_][\w.]*$")


@dataclass(frozen=True)
class Provenance:
    source_task_id: str = ""
    iteration: int = 0
    origin: str = "extracted"

    def to_dict(self) -> dict:
        return {"source_task_id": self.source_task_id, "iteration": self.iteration, "origin": self.origin}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Provenance":
        return cls(str(d.get("source_task_id", "")), int(d.get("iteration", 0)), str(d.get("origin", "extracted")))


@dataclass(frozen=True)
class Skill:
    name: str
    document: str
    content: str
    tools: tuple[str, ...]
    level: SkillLevel
    provenance: Provenance = field(default_factory=Provenance)
    source_task_text: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "tools", tuple(self.tools))
        object.__setattr__(self, "level", SkillLevel(self.level))

    def same_body(self, other: "Skill") -> bool:
        return (self.document, self.content, self.tools) == (other.document, other.content, other.tools)

    def with_(self, **changes) -> "Skill":
        return replace(self, **changes)

    def plan_steps(self) -> list[str]:
        return [ln.strip() for ln in self.content.splitlines() if _STEP_LINE.match(ln)]

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "document": self.document,
            "content": self.content,
            "tools": list(self.tools),
            "level": self.level.value,
            "provenance": self.provenance.to_dict(),
        }
        if self.source_task_text:
            d["source_task_text"] = self.source_task_text
        return d

    @classmethod
    def from_dict(cls, d: Mapping, level: SkillLevel | str | None = None) -> "Skill":
        tools = d.get("tools", [])
        if isinstance(tools, str):
            tools = [tools]
        return cls(
            name=str(d.get("name", "")).strip(),
            document=str(d.get("document", "")),
            content=str(d.get("content", "")),
            tools=tuple(str(t) for t in tools),
            level=SkillLevel(level if level is not None else d.get("level", "functional")),
            provenance=Provenance.from_dict(d.get("provenance", {})),
            source_task_text=str(d.get("source_task_text", "")),
        )


def validate_skill(skill: Skill) -> list[str]:
    """Return every violated structural invariant; an empty list means ok."""
    problems: list[str] = []
    if not skill.name.strip():
        problems.append("name empty")
    if not skill.document.strip():
        problems.append("document empty")
    if not skill.content.strip():
        problems.append("content empty")
    if skill.provenance.origin not in ORIGINS:
        problems.append(f"unknown provenance origin {skill.provenance.origin!r}")
    if any(not t.strip() for t in skill.tools):
        problems.append("blank tool name")
    if skill.level is SkillLevel.ATOMIC:
        if not _TOOL_NAME.match(skill.name):
            problems.append("atomic skill name must be a single tool name")
        elif skill.name not in skill.tools:
            problems.append("atomic skill name must be one of its tools")
    elif skill.level is SkillLevel.PLANNING:
        if not skill.plan_steps():
            problems.append("planning skill has no steps")
        if not skill.source_task_text.strip():
            problems.append("planning skill has no source task text")
    return problems


@dataclass(frozen=True)
class SkillUpdate:
    option: str
    skill: Skill | None = None
    modified_from: str | None = None
    kept_name: str | None = None

    def __post_init__(self) -> None:
        if self.option == "add":
            if self.skill is None:
                raise ValueError("add update needs a skill")
        elif self.option == "modify":
            if self.skill is None or not self.modified_from:
                raise ValueError("modify update needs a skill and modified_from")
        elif self.option == "keep":
            if not self.kept_name:
                raise ValueError("keep update needs kept_name")
        else:
            raise ValueError(f"unknown update option {self.option!r}")

    @classmethod
    def add(cls, skill: Skill) -> "SkillUpdate":
        return cls("add", skill=skill)

    @classmethod
    def modify(cls, skill: Skill, modified_from: str) -> "SkillUpdate":
        return cls("modify", skill=skill, modified_from=modified_from)

    @classmethod
    def keep(cls, name: str) -> "SkillUpdate":
        return cls("keep", kept_name=name)

    @property
    def target_name(self) -> str:
        if self.option == "keep":
            return self.kept_name or ""
        return self.skill.name if self.skill else ""

    def summary(self) -> dict:
        d = {"option": self.option, "name": self.target_name}
        if self.modified_from:
            d["modified_from"] = self.modified_from
        return d


@dataclass(frozen=True)
class SkillLibrary:
    """Immutable, name-keyed skill collection. Updates return new values."""

    skills: Mapping[str, Skill] = field(default_factory=dict)
    version: int = 0
    iteration: int = 0
    update_log: tuple[dict, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "skills", dict(self.skills))
        object.__setattr__(self, "update_log", tuple(self.update_log))
        if self.iteration < 0:
            raise ValueError("iteration must be >= 0")

    def __len__(self) -> int:
        return len(self.skills)

    def __contains__(self, name: object) -> bool:
        return name in self.skills

    def __getitem__(self, name: str) -> Skill:
        return self.skills[name]

    def names(self) -> list[str]:
        return sorted(self.skills)

    def by_level(self, level: SkillLevel | str) -> list[Skill]:
        level = SkillLevel(level)
        return [self.skills[n] for n in self.names() if self.skills[n].level is level]

    def tools_covered(self) -> set[str]:
        return {t for s in self.skills.values() for t in s.tools}

    def with_iteration(self, k: int) -> "SkillLibrary":
        return replace(self, iteration=k)

    @classmethod
    def from_skills(cls, skills: Iterable[Skill], **kw) -> "SkillLibrary":
        out: dict[str, Skill] = {}
        for s in skills:
            if s.name in out:
                raise DuplicateName(s.name)
            out[s.name] = s
        return cls(out, **kw)


def apply_update(library: SkillLibrary, update: SkillUpdate) -> SkillLibrary:
    if update.option == "keep":
        return library

    skill = update.skill
    assert skill is not None
    skills = dict(library.skills)
    if update.option == "add":
        if skill.name in skills:
            raise DuplicateName(skill.name)
        skills[skill.name] = skill
    else:
        target = update.modified_from
        if target not in skills:
            raise UnknownTarget(str(target))
        if skill.name != target and skill.name in skills:
            raise NameCollision(f"{target!r} -> {skill.name!r}")
        del skills[target]
        skills[skill.name] = skill

    entry = {"iteration": library.iteration, **update.summary()}
    return SkillLibrary(skills, library.version + 1, library.iteration, library.update_log + (entry,))


def apply_updates(library: SkillLibrary, updates: Iterable[SkillUpdate]) -> SkillLibrary:
    for u in updates:
        library = apply_update(library, u)
    return library


def library_diff(a: SkillLibrary, b: SkillLibrary) -> tuple[set[str], set[str], set[str]]:
    """(added, modified, removed) names going from ``a`` to ``b``."""
    an, bn = set(a.skills), set(b.skills)
    modified = {n for n in an & bn if not a.skills[n].same_body(b.skills[n])}
    return bn - an, modified, an - bn
