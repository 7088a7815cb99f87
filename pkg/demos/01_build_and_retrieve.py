"""
Build a skill library from the toy world and query it
=====================================================

Rollouts on the six seed tasks are mined for plans, functional skills and
atomic skills, then clustered, merged and filtered into one library.
Everything runs offline against the bundled mock chat table.
"""

# %%
# the bundled world: 12 tools, six seed tasks, a scripted agent
import numpy as np

from skillkb.context import PipelineContext
from skillkb.refinement import run_round
from skillkb.retrieval import Retriever
from skillkb.skills import SkillLevel, SkillLibrary
from skillkb.toyenv import default_environment, default_gateway, default_policy

env = default_environment()
policy = default_policy()
ctx = PipelineContext.build(default_gateway(), env.schemas)
print(len(env.tool_universe), "tools;", len(env.seed_tasks()), "seed tasks")

# %%
# one round: rollouts -> extraction -> refinement -> update
result = run_round(SkillLibrary(), env.seed_tasks(), policy, env, ctx)
lib = result.library
print("successful rollouts:", result.report["successes"], "of", result.report["trajectories"])
for level in SkillLevel:
    print(f"{level.value:>10}: {len(lib.by_level(level))}")

# %%
# the atomic level is one usage note per tool
for s in lib.by_level("atomic")[:3]:
    print("---", s.name)
    print(s.content)

# %%
# similarity structure of the functional skills
funcs = lib.by_level("functional")
m = ctx.cache.matrix(funcs)
sims = m @ m.T
off = sims[~np.eye(len(funcs), dtype=bool)]
print("functional skills:", len(funcs), " mean pairwise cosine: %.3f  max: %.3f" % (off.mean(), off.max()))

# %%
# retrieval for a seed task: plans, a draft plan, then per-step skills
query = lib.by_level("planning")[0].source_task_text
bundle = Retriever(lib, ctx).retrieve(query)
print("query:", query)
print("plans:", [s.name for s in bundle.planning_skills])
print("draft plan:")
for step in bundle.pseudo_plan:
    print("  ", step.ordinal, step.goal_text, list(step.key_tools))
print("selected:", [s.name for s in bundle.selected_skills])

# %%
# the section that goes into the agent's system prompt
print(bundle.prompt)
