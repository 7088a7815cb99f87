"""Runtime wiring shared by the pipeline stages, plus the agent contracts."""

from __future__ import annotations

import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Protocol, Sequence, TypeVar

from .ann import HnswParams
from .config import ExpansionConfig, ExtractionConfig, PipelineConfig, RefinementConfig, RetrievalConfig
from .gateway import ChatGateway, EmbeddingGateway, HashEmbedder
from .store import ToolSchema
from .trajectory import Action, Task, Trajectory, TrajectoryStep
from .vectors import EmbeddingCache

T = TypeVar("T")
R = TypeVar("R")


@dataclass(frozen=True)
class AgentContext:
    """Everything a policy sees when choosing its next action."""

    task: Task
    history: tuple[TrajectoryStep, ...]
    tools: Mapping[str, ToolSchema]
    skill_prompt: str = ""
    guidance: tuple[str, ...] = ()
    temperature: float = 0.9
    rng: random.Random = field(default_factory=random.Random, compare=False)


class Policy(Protocol):
    def __call__(self, ctx: AgentContext) -> tuple[str, Action]: ...


class World(Protocol):
    def step(self, action: Action) -> tuple[str, str]: ...

    def evaluate(self, task_id: str) -> int: ...


class Environment(Protocol):
    schemas: Mapping[str, ToolSchema]

    def reset(self, task: Task) -> World: ...


@dataclass
class PipelineContext:
    gateway: ChatGateway
    cache: EmbeddingCache
    schemas: Mapping[str, ToolSchema]
    extraction: ExtractionConfig = field(default_factory=ExtractionConfig)
    refinement: RefinementConfig = field(default_factory=RefinementConfig)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    expansion: ExpansionConfig = field(default_factory=ExpansionConfig)
    hnsw: HnswParams = field(default_factory=HnswParams)
    jobs: int = 1
    seed: int = 0

    @classmethod
    def build(
        cls,
        gateway: ChatGateway,
        schemas: Mapping[str, ToolSchema],
        embedder: EmbeddingGateway | None = None,
        config: PipelineConfig | None = None,
    ) -> "PipelineContext":
        config = config or PipelineConfig()
        embedder = embedder or HashEmbedder(config.embedding_dimension, seed=config.seed)
        ix = config.index
        return cls(
            gateway=gateway,
            cache=EmbeddingCache(embedder),
            schemas=dict(schemas),
            extraction=config.extraction,
            refinement=config.refinement,
            retrieval=config.retrieval,
            expansion=config.expansion,
            hnsw=HnswParams(ix.M, ix.ef_construction, ix.ef_search, config.seed),
            jobs=config.jobs,
            seed=config.seed,
        )

    def map(self, fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
        """Ordered map, concurrent when ``jobs`` > 1."""
        items = list(items)
        if self.jobs <= 1 or len(items) <= 1:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(max_workers=self.jobs) as pool:
            return list(pool.map(fn, items))


def rollout_rng(seed: int, task_id: str, rollout_index: int, salt: str = "") -> random.Random:
    return random.Random(f"{seed}:{salt}:{task_id}:{rollout_index}")


def run_episode(
    task: Task,
    policy: Policy,
    environment: Environment,
    *,
    rollout_index: int = 1,
    temperature: float = 0.9,
    step_cap: int = 40,
    skill_prompt: str = "",
    guidance: Sequence[str] = (),
    seed: int = 0,
) -> Trajectory:
    from .errors import UnknownTool

    world = environment.reset(task)
    rng = rollout_rng(seed, task.id, rollout_index)
    steps: list[TrajectoryStep] = []
    finished = False
    for t in range(1, step_cap + 1):
        ctx = AgentContext(task, tuple(steps), environment.schemas, skill_prompt, tuple(guidance), temperature, rng)
        thought, action = policy(ctx)
        if action.is_finish:
            finished = True
            break
        try:
            observation, outcome = world.step(action)
        except UnknownTool as exc:
            observation, outcome = f"Error: unknown tool {exc}", "failure"
        steps.append(TrajectoryStep(t, thought, action, observation, outcome))
    else:
        # one more chance to finish right at the cap
        ctx = AgentContext(task, tuple(steps), environment.schemas, skill_prompt, tuple(guidance), temperature, rng)
        finished = policy(ctx)[1].is_finish
    success = finished and bool(world.evaluate(task.id))
    return Trajectory(task, tuple(steps), success, rollout_index)
