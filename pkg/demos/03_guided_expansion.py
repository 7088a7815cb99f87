"""
Growing the library beyond the seed tasks
=========================================

Tool statistics from past rollouts rank the tools the library knows least
about. An explorer probes them, each probe becomes a synthesized task, and
the usual acquisition round runs on those tasks.
"""

# %%
from skillkb.context import PipelineContext
from skillkb.expansion import compute_tool_stats, prioritize_tools, run_expansion, tool_tier
from skillkb.refinement import run_round
from skillkb.skills import SkillLibrary
from skillkb.toyenv import default_environment, default_gateway, default_policy, exploration_policy

env = default_environment()
policy = default_policy()
ctx = PipelineContext.build(default_gateway(), env.schemas)
first = run_round(SkillLibrary(), env.seed_tasks(), policy, env, ctx)
universe = env.tool_universe

# %%
# per-tool experience: tier 0 never called, tier 1 mostly failing, tier 2 fine
stats = compute_tool_stats(first.trajectories, universe)
for s in sorted(stats, key=lambda s: (tool_tier(s), s.tool)):
    print(f"tier {tool_tier(s)}  {s.tool:<22} calls {s.invocation_count:>3}  failure rate {s.failure_rate:.2f}")
print("ranking:", prioritize_tools(stats)[:4], "...")

# %%
# guided expansion
res = run_expansion(first.library, first.trajectories, env.seed_tasks(), env, exploration_policy(), policy, ctx)
print("synthesized tasks:")
for t in res.synthesized:
    print("  ", t.id, t.text)
before = len(first.library.tools_covered() & set(universe))
print(f"tool coverage {before}/{len(universe)} -> {res.coverage(universe)}/{len(universe)}")

# %%
# the untargeted baseline: one random tool per seed task, same budget
env2, policy2 = default_environment(), default_policy()
ctx2 = PipelineContext.build(default_gateway(), env2.schemas)
base = run_round(SkillLibrary(), env2.seed_tasks(), policy2, env2, ctx2)
rnd = run_expansion(base.library, base.trajectories, env2.seed_tasks(), env2, exploration_policy(), policy2, ctx2,
                    mode="random", rng_seed=0)
print("random exploration coverage:", rnd.coverage(universe), "/", len(universe))

# %%
# new skills carry the expanded tag
added = sorted(set(res.library.names()) - set(first.library.names()))
for name in added:
    print(f"{res.library[name].provenance.origin:>9}  {name}")
