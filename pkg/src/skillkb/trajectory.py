"""Tasks, actions and trajectories."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Mapping

SPLITS = ("train", "synthesized", "test")
OUTCOMES = ("success", "failure", "none")


@dataclass(frozen=True)
class Task:
    id: str
    text: str
    split: str = "train"
    source_trajectory: str | None = None

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError(f"task {self.id!r} has empty text")
        if self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}")

    def to_dict(self) -> dict:
        d = {"id": self.id, "text": self.text, "split": self.split}
        if self.source_trajectory is not None:
            d["source_trajectory"] = self.source_trajectory
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "Task":
        return cls(str(d["id"]), str(d["text"]), str(d.get("split", "train")), d.get("source_trajectory"))


@dataclass(frozen=True)
class Action:
    """A tool call, a raw code action, or the terminal ``finish`` action."""

    tool: str | None = None
    args: Mapping[str, Any] = field(default_factory=dict)
    code: str | None = None

    FINISH = "__finish__"

    def __post_init__(self) -> None:
        object.__setattr__(self, "args", dict(self.args))
        if (self.tool is None) == (self.code is None):
            raise ValueError("action needs exactly one of tool or code")

    @classmethod
    def finish(cls) -> "Action":
        return cls(tool=cls.FINISH)

    @property
    def is_finish(self) -> bool:
        return self.tool == self.FINISH

    def render(self) -> str:
        if self.code is not None:
            return self.code
        args = ", ".join(f"{k}={json.dumps(v, ensure_ascii=False, sort_keys=True)}" for k, v in self.args.items())
        return f"{self.tool}({args})"

    def to_dict(self) -> dict:
        if self.code is not None:
            return {"code": self.code}
        return {"tool": self.tool, "args": dict(self.args)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Action":
        if "code" in d:
            return cls(code=str(d["code"]))
        return cls(tool=str(d["tool"]), args=dict(d.get("args", {})))


@dataclass(frozen=True)
class TrajectoryStep:
    t: int
    thought: str
    action: Action
    observation: str
    outcome: str = "none"

    def __post_init__(self) -> None:
        if self.outcome not in OUTCOMES:
            raise ValueError(f"unknown tool outcome {self.outcome!r}")

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "thought": self.thought,
            "action": self.action.to_dict(),
            "observation": self.observation,
            "outcome": self.outcome,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrajectoryStep":
        return cls(int(d["t"]), str(d["thought"]), Action.from_dict(d["action"]), str(d["observation"]), str(d["outcome"]))


@dataclass(frozen=True)
class Trajectory:
    task: Task
    steps: tuple[TrajectoryStep, ...]
    success: bool
    rollout_index: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "steps", tuple(self.steps))
        prev = 0
        for s in self.steps:
            if s.t <= prev:
                raise ValueError("step indices must be strictly increasing")
            prev = s.t

    @property
    def task_id(self) -> str:
        return self.task.id

    @property
    def key(self) -> str:
        return f"{self.task.id}#{self.rollout_index}"

    def tool_calls(self) -> list[TrajectoryStep]:
        return [s for s in self.steps if s.action.tool is not None and not s.action.is_finish]

    def tools_used(self) -> list[str]:
        """Distinct tools in first-use order."""
        out: list[str] = []
        for s in self.tool_calls():
            if s.action.tool not in out:
                out.append(s.action.tool)
        return out


@dataclass(frozen=True)
class PseudoPlanStep:
    ordinal: int
    goal_text: str
    key_tools: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "key_tools", tuple(self.key_tools))
        if not self.goal_text.strip():
            raise ValueError("plan step goal text is empty")
