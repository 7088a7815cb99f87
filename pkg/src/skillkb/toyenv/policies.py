"""Scripted agents for the toy world.

A script is a list of steps ``{"tool", "args", "thought"}``. Two optional
gates make a script skill-aware:

* ``only_if_hint``: run the step only when some injected skill calls these
  tools in this order;
* ``skip_if_hint``: drop the step when some injected skill does.

Hints are the tool-call sequences of the functional and atomic skill
implementations in the assembled prompt. With no prompt every gate reads
"no hint", so the run is the plain scripted baseline.
"""

from __future__ import annotations

import random
import threading
from functools import lru_cache
from typing import Mapping, Sequence

from ..callsites import call_sequence, is_subsequence
from ..context import AgentContext
from ..trajectory import Action, Task, Trajectory

_HINT_SECTIONS = ("## Functional skills", "## Atomic skills")


@lru_cache(maxsize=256)
def _hints(prompt: str) -> tuple[tuple[str, ...], ...]:
    out = []
    section = None
    body: list[str] | None = None
    for line in prompt.splitlines():
        if line.startswith("## "):
            section = line.strip()
            body = None
            continue
        if section not in _HINT_SECTIONS:
            continue
        if line.startswith("### "):
            body = None
        elif line.strip() == "Implementation:":
            body = []
        elif line.startswith("Tools:") and body is not None:
            out.append(tuple(call_sequence("\n".join(body))))
            body = None
        elif body is not None:
            body.append(line)
    return tuple(out)


def skill_hints(prompt: str) -> list[list[str]]:
    """Tool-call sequences of the skill implementations found in ``prompt``."""
    return [list(h) for h in _hints(prompt)]


def _hinted(seq: Sequence[str], hints: Sequence[Sequence[str]]) -> bool:
    return any(is_subsequence(list(seq), list(h)) for h in hints)


def _active(step: Mapping, hints: Sequence[Sequence[str]]) -> bool:
    if "only_if_hint" in step and not _hinted(step["only_if_hint"], hints):
        return False
    if "skip_if_hint" in step and _hinted(step["skip_if_hint"], hints):
        return False
    return True


def _act(step: Mapping) -> tuple[str, Action]:
    return step.get("thought", f"Call {step['tool']}."), Action(step["tool"], dict(step.get("args", {})))


_FINISH = ("The task is complete.", Action.finish())


class ScriptedPolicy:
    def __init__(self, scripts: Mapping[str, Sequence[Mapping]]):
        self.scripts = {k: list(v) for k, v in scripts.items()}
        self._lock = threading.Lock()

    def plan(self, task_id: str, prompt: str = "") -> list[Mapping]:
        hints = _hints(prompt)
        return [s for s in self.scripts.get(task_id, []) if _active(s, hints)]

    def __call__(self, ctx: AgentContext) -> tuple[str, Action]:
        with self._lock:
            known = ctx.task.id in self.scripts
        if not known:
            return "I have no way to approach this task.", Action.finish()
        steps = self.plan(ctx.task.id, ctx.skill_prompt)
        i = len(ctx.history)
        return _act(steps[i]) if i < len(steps) else _FINISH

    def register_task(self, task: Task, reference: Trajectory) -> None:
        """Adopt the successful calls of ``reference`` as the script for ``task``."""
        script = [
            {"tool": s.action.tool, "args": dict(s.action.args), "thought": s.thought}
            for s in reference.tool_calls()
            if s.outcome == "success"
        ]
        with self._lock:
            self.scripts[task.id] = script


class LoopingPolicy:
    """Never finishes; exercises the step cap."""

    def __call__(self, ctx: AgentContext) -> tuple[str, Action]:
        return "Check the playlists again.", Action("list_playlists", {"page": 1})


class ExplorationPolicy:
    """Probes the first tool named in the guidance; finishes when the probe ends."""

    def __init__(self, probes: Mapping[str, Sequence[Mapping]]):
        self.probes = {k: list(v) for k, v in probes.items()}

    def __call__(self, ctx: AgentContext) -> tuple[str, Action]:
        if not ctx.guidance:
            return "Nothing to explore.", Action.finish()
        steps = self.probes.get(ctx.guidance[0], [])
        i = len(ctx.history)
        return _act(steps[i]) if i < len(steps) else _FINISH


class RandomToolPolicy:
    """Calls random tools with no arguments; a noisy stand-in for tests."""

    def __init__(self, tools: Sequence[str], steps: int = 3):
        self.tools = sorted(tools)
        self.steps = steps

    def __call__(self, ctx: AgentContext) -> tuple[str, Action]:
        if len(ctx.history) >= self.steps:
            return _FINISH
        rng: random.Random = ctx.rng
        return "Try something.", Action(rng.choice(self.tools), {})


def hint_gates(script: Sequence[Mapping]) -> list[str]:
    """Human-readable gate summary of a script (used by the demos)."""
    out = []
    for s in script:
        gate = ""
        if "only_if_hint" in s:
            gate = " [only with " + " -> ".join(s["only_if_hint"]) + "]"
        elif "skip_if_hint" in s:
            gate = " [skipped with " + " -> ".join(s["skip_if_hint"]) + "]"
        out.append(f"{s['tool']}({', '.join(f'{k}={v!r}' for k, v in s.get('args', {}).items())}){gate}")
    return out

