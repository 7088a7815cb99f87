"""Bundled toy environment: a 12-tool world, six seed tasks and a mock table."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

from ..gateway import MockChatGateway
from .policies import ExplorationPolicy, LoopingPolicy, ScriptedPolicy
from .world import ToyEnvironment, ToyWorld, state_digest


def data_path(name: str) -> Path:
    return Path(str(resources.files("skillkb").joinpath("toyenv").joinpath("data").joinpath(name)))


def load_fixture(path: str | Path | None = None) -> dict:
    p = Path(path) if path else data_path("world.json")
    return json.loads(p.read_text(encoding="utf-8"))


def default_environment(fixture: dict | None = None) -> ToyEnvironment:
    return ToyEnvironment(fixture or load_fixture())


def default_policy(fixture: dict | None = None) -> ScriptedPolicy:
    return ScriptedPolicy((fixture or load_fixture())["scripts"])


def exploration_policy(fixture: dict | None = None) -> ExplorationPolicy:
    return ExplorationPolicy((fixture or load_fixture())["probes"])


def default_gateway() -> MockChatGateway:
    return MockChatGateway.from_file(data_path("mock_table.json"))


__all__ = [
    "ExplorationPolicy",
    "LoopingPolicy",
    "ScriptedPolicy",
    "ToyEnvironment",
    "ToyWorld",
    "data_path",
    "default_environment",
    "default_gateway",
    "default_policy",
    "exploration_policy",
    "load_fixture",
    "state_digest",
]
