from __future__ import annotations

import random

import numpy as np
import pytest

from skillkb.context import PipelineContext
from skillkb.refinement import run_round
from skillkb.skills import Provenance, Skill, SkillLevel, SkillLibrary
from skillkb.toyenv import default_environment, default_gateway, default_policy, exploration_policy, load_fixture

ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


def record(n: int, title: str, ok: bool, detail: str = "") -> None:
    """Register an acceptance verdict; the terminal summary prints one line each."""
    ACCEPTANCE[n] = (title, ok, detail)
    print(f"criterion {n:2d} [{'PASS' if ok else 'FAIL'}] {title} {detail}".rstrip())


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d} [{'PASS' if ok else 'FAIL'}] {title} {detail}".rstrip())


# ---------------------------------------------------------------- toy world


@pytest.fixture(scope="session")
def fixture_data():
    return load_fixture()


@pytest.fixture
def env(fixture_data):
    return default_environment(fixture_data)


@pytest.fixture
def policy(fixture_data):
    return default_policy(fixture_data)


@pytest.fixture
def explorer(fixture_data):
    return exploration_policy(fixture_data)


@pytest.fixture
def gateway():
    return default_gateway()


@pytest.fixture
def ctx(env, gateway):
    return PipelineContext.build(gateway, env.schemas)


@pytest.fixture(scope="session")
def built():
    """D1 from the bundled fixture, with the trajectories that produced it."""
    fx = load_fixture()
    env = default_environment(fx)
    ctx = PipelineContext.build(default_gateway(), env.schemas)
    return run_round(SkillLibrary(), env.seed_tasks(), default_policy(fx), env, ctx)


# ---------------------------------------------------------------- random data


def unit_rows(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    m = rng.standard_normal((n, dim))
    return m / np.linalg.norm(m, axis=1, keepdims=True)


def make_skill(name: str, level: SkillLevel | str = SkillLevel.FUNCTIONAL, *, body: str = "", tools=()) -> Skill:
    level = SkillLevel(level)
    if level is SkillLevel.ATOMIC:
        return Skill(name, f"How to call {name}.", f"{name}(x=1)", (name, *tools), level)
    if level is SkillLevel.PLANNING:
        return Skill(
            name,
            f"Reference plan for tasks like: {name}",
            f"# step 1: do {body or name}; apis: login\n# step 2: finish",
            ("login", *tools),
            level,
            Provenance(name, 0, "extracted"),
            source_task_text=f"task {name}",
        )
    return Skill(name, f"Does {name}. {body}".strip(), f"login(username=u, password=p)\n# {body or name}", ("login", *tools), level)


def random_skill(rng: random.Random, name: str) -> Skill:
    level = rng.choice(list(SkillLevel))
    if level is SkillLevel.ATOMIC:
        name = "t_" + name.replace(" ", "_").replace("-", "_")
    body = " ".join(rng.choice(["alpha", "beta", "ünï", "line\nbreak", '"q"', "x" * rng.randint(1, 5)]) for _ in range(3))
    s = make_skill(name, level, body=body)
    return s.with_(provenance=Provenance(f"T{rng.randint(0, 9)}", rng.randint(0, 3), rng.choice(["extracted", "merged", "expanded"])))
