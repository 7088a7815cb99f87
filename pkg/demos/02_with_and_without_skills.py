"""
Same agent, with and without retrieved skills
=============================================

The scripted agent has optional steps: some only run when an injected skill
shows a call sequence, others are skipped when one does. Comparing the two
conditions shows what the library changes.
"""

# %%
from skillkb.baseline import run_baseline, run_conditioned
from skillkb.context import PipelineContext
from skillkb.refinement import run_round
from skillkb.retrieval import prompt_for
from skillkb.skills import SkillLibrary
from skillkb.toyenv import default_environment, default_gateway, default_policy
from skillkb.toyenv.policies import hint_gates

env = default_environment()
policy = default_policy()
ctx = PipelineContext.build(default_gateway(), env.schemas)
tasks = env.seed_tasks()
lib = run_round(SkillLibrary(), tasks, policy, env, ctx).library

# %%
# a gated script, as the agent sees it
task = tasks[0]
for line in hint_gates(policy.scripts[task.id]):
    print("  ", line)

# %%
# which steps run with and without the skill section
with_skills = policy.plan(task.id, prompt_for(task.text, lib, ctx))
without = policy.plan(task.id)
print("without skills:", [s["tool"] for s in without])
print("with skills:   ", [s["tool"] for s in with_skills])

# %%
# four rollouts per task in each condition
base = run_baseline(tasks, policy, env, m=4)
cond = run_conditioned(tasks, policy, env, lib, ctx, m=4)
print(f"{'':12} {'Avg@4':>6} {'Pass@4':>7} {'steps':>6}")
print(f"{'no skills':12} {base.avg_at_m:6.3f} {base.pass_at_m:7.3f} {base.mean_steps:6.2f}")
print(f"{'with skills':12} {cond.avg_at_m:6.3f} {cond.pass_at_m:7.3f} {cond.mean_steps:6.2f}")

# %%
# per task
for tid in sorted(base.per_task):
    b, c = base.per_task[tid], cond.per_task[tid]
    print(f"{tid:>4}  {b['avg']:.2f} -> {c['avg']:.2f}   steps {b['mean_steps']:.1f} -> {c['mean_steps']:.1f}")
