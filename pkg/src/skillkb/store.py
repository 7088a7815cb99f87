"""Canonical, byte-stable persistence for libraries, schemas and trajectories."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import DuplicateName, DuplicateTool, FormatError, ValidationError, VersionError
from .skills import Skill, SkillLevel, SkillLibrary, validate_skill
from .trajectory import Task, Trajectory, TrajectoryStep
from .vectors import SkillEmbedding

LIBRARY_FORMAT = 1
PARAM_TYPES = ("string", "integer", "number", "boolean", "object", "array")


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, indent=2, allow_nan=False) + "\n"


def digest_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def atomic_write(path: str | os.PathLike, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def _read_json(path: str | os.PathLike) -> Any:
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------- library


def library_to_dict(library: SkillLibrary, embeddings: Sequence[SkillEmbedding] | None = None) -> dict:
    grouped = {lvl.value: [] for lvl in SkillLevel}
    for name in library.names():
        s = library[name]
        d = s.to_dict()
        del d["level"]
        grouped[s.level.value].append(d)
    body: dict = {
        "format_version": LIBRARY_FORMAT,
        "version": library.version,
        "iteration": library.iteration,
        "skills": grouped,
        "update_log": list(library.update_log),
    }
    if embeddings:
        body["embeddings"] = {
            e.skill_name: {"digest": e.embedded_text_digest, "vector": [float(x) for x in e.vector]}
            for e in sorted(embeddings, key=lambda e: e.skill_name)
        }
    body["content_digest"] = digest_bytes(canonical_json(body).encode("utf-8"))
    return body


def library_from_dict(data: Mapping) -> tuple[SkillLibrary, list[SkillEmbedding]]:
    if not isinstance(data, Mapping):
        raise FormatError("library file must hold a JSON object")
    fmt = data.get("format_version")
    if fmt != LIBRARY_FORMAT:
        raise VersionError(f"unsupported library format {fmt!r}")
    skills: dict[str, Skill] = {}
    try:
        for level in SkillLevel:
            for raw in data["skills"].get(level.value, []):
                s = Skill.from_dict(raw, level)
                problems = validate_skill(s)
                if problems:
                    raise ValidationError(f"skill {s.name!r}: {'; '.join(problems)}")
                if s.name in skills:
                    raise ValidationError(f"skill {s.name!r}: duplicate name")
                skills[s.name] = s
        lib = SkillLibrary(
            skills, int(data["version"]), int(data["iteration"]), tuple(dict(e) for e in data["update_log"])
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise FormatError(f"malformed library: {exc}") from exc
    embs = [
        SkillEmbedding(name, np.asarray(e["vector"], dtype=np.float64), e["digest"])
        for name, e in sorted(data.get("embeddings", {}).items())
    ]
    return lib, embs


def dump_library(library: SkillLibrary, embeddings: Sequence[SkillEmbedding] | None = None) -> bytes:
    return canonical_json(library_to_dict(library, embeddings)).encode("utf-8")


def save_library(
    library: SkillLibrary, path: str | os.PathLike, embeddings: Sequence[SkillEmbedding] | None = None
) -> str:
    """Write ``library`` canonically; return the sha256 of the written bytes."""
    for s in library.skills.values():
        problems = validate_skill(s)
        if problems:
            raise ValidationError(f"skill {s.name!r}: {'; '.join(problems)}")
    data = dump_library(library, embeddings)
    atomic_write(path, data)
    return digest_bytes(data)


def load_library_with_embeddings(path: str | os.PathLike) -> tuple[SkillLibrary, list[SkillEmbedding]]:
    return library_from_dict(_read_json(path))


def load_library(path: str | os.PathLike) -> SkillLibrary:
    return load_library_with_embeddings(path)[0]


def file_digest(path: str | os.PathLike) -> str:
    return digest_bytes(Path(path).read_bytes())


# ---------------------------------------------------------------- tool schemas


@dataclass(frozen=True)
class ParamSpec:
    name: str
    type: str
    required: bool = False
    description: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "type": self.type, "required": self.required, "description": self.description}


@dataclass(frozen=True)
class ToolSchema:
    name: str
    description: str
    parameters: tuple[ParamSpec, ...]
    returns: str = ""

    def param(self, name: str) -> ParamSpec | None:
        for p in self.parameters:
            if p.name == name:
                return p
        return None

    @property
    def required(self) -> list[str]:
        return [p.name for p in self.parameters if p.required]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "parameters": [p.to_dict() for p in self.parameters],
            "returns": self.returns,
        }

    def render(self) -> str:
        params = ", ".join(
            f"{p.name}: {p.type}{'' if p.required else ' (optional)'}" for p in self.parameters
        )
        return f"{self.name}({params}) -> {self.returns}\n    {self.description}"


def schemas_from_dict(data: Mapping) -> dict[str, ToolSchema]:
    try:
        tools = data["tools"]
    except (KeyError, TypeError) as exc:
        raise FormatError("schema file needs a 'tools' list") from exc
    out: dict[str, ToolSchema] = {}
    for raw in tools:
        try:
            name = str(raw["name"])
            params = []
            seen = set()
            for p in raw.get("parameters", []):
                ptype = p["type"]
                if ptype not in PARAM_TYPES:
                    raise FormatError(f"tool {name!r}: unknown parameter type {ptype!r}")
                if p["name"] in seen:
                    raise FormatError(f"tool {name!r}: duplicate parameter {p['name']!r}")
                seen.add(p["name"])
                params.append(ParamSpec(str(p["name"]), ptype, bool(p.get("required", False)), str(p.get("description", ""))))
        except (KeyError, TypeError) as exc:
            raise FormatError(f"malformed tool entry: {exc}") from exc
        if name in out:
            raise DuplicateTool(name)
        out[name] = ToolSchema(name, str(raw.get("description", "")), tuple(params), str(raw.get("returns", "")))
    return out


def schemas_to_dict(schemas: Mapping[str, ToolSchema]) -> dict:
    return {"tools": [schemas[n].to_dict() for n in sorted(schemas)]}


def load_tool_schemas(path: str | os.PathLike) -> dict[str, ToolSchema]:
    return schemas_from_dict(_read_json(path))


def save_tool_schemas(schemas: Mapping[str, ToolSchema], path: str | os.PathLike) -> str:
    data = canonical_json(schemas_to_dict(schemas)).encode("utf-8")
    atomic_write(path, data)
    return digest_bytes(data)


# ---------------------------------------------------------------- trajectories


def _line(obj: Mapping) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":")) + "\n"


def dump_trajectories(trajectories: Iterable[Trajectory]) -> str:
    """Line-delimited JSON: header, one line per step, trailer; repeated."""
    parts = []
    for tr in trajectories:
        header = {"task_id": tr.task.id, "split": tr.task.split, "text": tr.task.text, "rollout_index": tr.rollout_index}
        if tr.task.source_trajectory is not None:
            header["source_trajectory"] = tr.task.source_trajectory
        parts.append(_line(header))
        parts.extend(_line(s.to_dict()) for s in tr.steps)
        parts.append(_line({"success": tr.success, "steps": len(tr.steps)}))
    return "".join(parts)


def parse_trajectories(text: str) -> list[Trajectory]:
    out: list[Trajectory] = []
    header = None
    steps: list[TrajectoryStep] = []
    for n, raw in enumerate(text.splitlines(), 1):
        if not raw.strip():
            continue
        try:
            rec = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise FormatError(f"trajectory line {n}: {exc}") from exc
        try:
            if "task_id" in rec:
                if header is not None:
                    raise FormatError(f"trajectory line {n}: header before trailer")
                header, steps = rec, []
            elif "success" in rec:
                if header is None:
                    raise FormatError(f"trajectory line {n}: trailer without header")
                if rec["steps"] != len(steps):
                    raise FormatError(f"trajectory line {n}: step count mismatch")
                task = Task(header["task_id"], header["text"], header["split"], header.get("source_trajectory"))
                out.append(Trajectory(task, tuple(steps), bool(rec["success"]), int(header.get("rollout_index", 1))))
                header = None
            else:
                if header is None:
                    raise FormatError(f"trajectory line {n}: step outside a trajectory")
                steps.append(TrajectoryStep.from_dict(rec))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, FormatError):
                raise
            raise FormatError(f"trajectory line {n}: {exc}") from exc
    if header is not None:
        raise FormatError("trajectory file ends without trailer")
    return out


def save_trajectories(trajectories: Iterable[Trajectory], path: str | os.PathLike) -> str:
    data = dump_trajectories(trajectories).encode("utf-8")
    atomic_write(path, data)
    return digest_bytes(data)


def load_trajectories(path: str | os.PathLike) -> list[Trajectory]:
    p = Path(path)
    if p.is_dir():
        out: list[Trajectory] = []
        for f in sorted(p.glob("*.jsonl")):
            out.extend(parse_trajectories(f.read_text(encoding="utf-8")))
        return out
    return parse_trajectories(p.read_text(encoding="utf-8"))


def save_trajectories_by_task(trajectories: Iterable[Trajectory], directory: str | os.PathLike) -> list[Path]:
    """One file per task, as the trajectory log layout prescribes."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    by_task: dict[str, list[Trajectory]] = {}
    for tr in trajectories:
        by_task.setdefault(tr.task.id, []).append(tr)
    paths = []
    for task_id in sorted(by_task):
        safe = "".join(c if c.isalnum() or c in "-_." else "_" for c in task_id)
        path = d / f"{safe}.jsonl"
        save_trajectories(by_task[task_id], path)
        paths.append(path)
    return paths


# ---------------------------------------------------------------- tasks


def dump_tasks(tasks: Iterable[Task]) -> str:
    return "".join(_line(t.to_dict()) for t in tasks)


def load_tasks(path: str | os.PathLike) -> list[Task]:
    tasks = []
    seen = set()
    for n, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not raw.strip():
            continue
        try:
            t = Task.from_dict(json.loads(raw))
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise FormatError(f"task line {n}: {exc}") from exc
        if t.id in seen:
            raise DuplicateName(f"task id {t.id!r}")
        seen.add(t.id)
        tasks.append(t)
    return tasks


def save_tasks(tasks: Iterable[Task], path: str | os.PathLike) -> str:
    data = dump_tasks(tasks).encode("utf-8")
    atomic_write(path, data)
    return digest_bytes(data)
