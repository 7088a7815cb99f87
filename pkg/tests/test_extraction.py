from __future__ import annotations

import json

import pytest

from conftest import make_skill
from skillkb.context import AgentContext, run_episode
from skillkb.errors import EmptyPlan, ParseError, PreconditionError, SchemaError, TransportError
from skillkb.extraction import (
    FeedbackSummarizer,
    collect_candidates,
    extract_atomic_skills,
    extract_functional_skills,
    extract_planning_skill,
    format_plan_step,
    parse_plan,
    parse_update_response,
    render_trajectory,
    rollout,
    summarize_feedback,
)
from skillkb.gateway import FunctionChatGateway
from skillkb.skills import SkillLevel, SkillLibrary
from skillkb.toyenv.policies import LoopingPolicy
from skillkb.trajectory import Action, Task, Trajectory, TrajectoryStep


def _tr(success=True, tools=("login", "send_email")) -> Trajectory:
    steps = [TrajectoryStep(i + 1, f"use {t}", Action(t, {"x": i}), "{}", "success") for i, t in enumerate(tools)]
    return Trajectory(Task("T9", "Email the report to alice."), tuple(steps), success)


# ---------------------------------------------------------------- parsers


def test_parse_plan_variants():
    steps = parse_plan("noise <plan>\n# step 1: sign in; apis: login\n#Step 2 : send it ; tools: send_email, login\n"
                       "not a step\n# step 3: wrap up; no api list here\n</plan> tail")
    assert [s.goal_text for s in steps] == ["sign in", "send it", "wrap up; no api list here"]
    assert steps[1].key_tools == ("send_email", "login")
    assert steps[2].key_tools == ()
    assert format_plan_step(steps[0]) == "# step 1: sign in; apis: login"
    assert parse_plan(f"<plan>{format_plan_step(steps[1])}</plan>")[0].key_tools == steps[1].key_tools
    with pytest.raises(ParseError):
        parse_plan("no tags")
    with pytest.raises(EmptyPlan):
        parse_plan("<plan>\nnothing\n</plan>")


def test_parse_update_response():
    skill = {"name": "mail send", "document": "Sends.", "content": "login(u, p)\nsend_email(to=a, subject=s, body=b)"}
    text = "```json\n" + json.dumps([
        {"option": "add", "skill": skill},
        {"option": "modify", "modified_from": "old", "skill": dict(skill, tools=["send_email"])},
        {"option": "keep", "skill_name": "k1"},
        {"option": "keep", "skill": {"name": "k2"}},
    ]) + "\n```"
    ups = parse_update_response(text)
    assert [u.option for u in ups] == ["add", "modify", "keep", "keep"]
    assert ups[0].skill.tools == ("login", "send_email")  # derived from the call sites
    assert ups[1].modified_from == "old" and ups[1].skill.tools == ("send_email",)
    assert [ups[2].kept_name, ups[3].kept_name] == ["k1", "k2"]
    single = parse_update_response(json.dumps({"option": "keep", "name": "x"}))
    assert single[0].kept_name == "x"


@pytest.mark.parametrize(
    "payload, err",
    [
        ("not json", ParseError),
        ('"a string"', ParseError),
        ('[{"option": "add"}]', SchemaError),
        ('[{"option": "modify", "skill": {"name": "a", "document": "d", "content": "c"}}]', SchemaError),
        ('[{"option": "delete", "skill_name": "a"}]', SchemaError),
        ('[{"option": "keep"}]', SchemaError),
        ('[{"option": "add", "skill": {"name": "a", "document": 3, "content": "c"}}]', SchemaError),
        ("[1]", SchemaError),
    ],
)
def test_parse_update_response_errors(payload, err):
    with pytest.raises(err):
        parse_update_response(payload)


# ---------------------------------------------------------------- feedback


def test_summarizer_passthrough_memo_and_truncation():
    replies = iter(["<feedback>short version</feedback>"])
    gw = FunctionChatGateway(lambda r: next(replies, "garbage"))
    s = FeedbackSummarizer(gw, token_limit=3)
    assert s("one two three") == "one two three"
    assert gw.calls == []
    long = "a b c d e f"
    assert s(long, "act()") == "short version"
    assert s(long, "act()") == "short version"
    assert len(gw.calls) == 1  # memoised
    # unparseable twice: hard cut
    assert s("p q r s t", "other()") == "p q r"
    assert s.truncated == 1 and len(gw.calls) == 3
    assert summarize_feedback("x y z w", FunctionChatGateway(lambda r: "nope"), 2) == "x y"


def test_render_trajectory_uses_summarizer():
    tr = _tr()
    text = render_trajectory(tr, lambda obs, act: "<<" + act + ">>")
    assert '<<login(x=0)>>' in text and text.endswith("result: success")


# ---------------------------------------------------------------- extractors


def test_planning_extraction():
    gw = FunctionChatGateway(lambda r: "<plan>\n# step 1: sign in; apis: login\n# step 2: send; apis: send_email\n</plan>")
    plan = extract_planning_skill(_tr(), _tr().task, gw, iteration=2)
    assert plan.name == "plan T9" and plan.level is SkillLevel.PLANNING
    assert plan.tools == ("login", "send_email")
    assert plan.source_task_text == "Email the report to alice."
    assert plan.provenance.iteration == 2 and len(plan.plan_steps()) == 2
    with pytest.raises(PreconditionError):
        extract_planning_skill(_tr(success=False), _tr().task, gw)


def test_functional_extraction_one_call_per_step_and_bad_steps_dropped():
    plan = make_skill("p", "planning")  # two steps
    good = json.dumps([{"option": "add", "skill": {"name": "f", "document": "d", "content": "login(username=u, password=p)"}}])
    replies = iter([good, "garbage"])
    gw = FunctionChatGateway(lambda r: next(replies))
    groups = extract_functional_skills(_tr(), plan, SkillLibrary(), gw)
    assert len(gw.calls) == 2
    assert [len(g) for g in groups] == [1, 0]
    assert groups[0][0].skill.level is SkillLevel.FUNCTIONAL


def test_atomic_extraction_rules():
    def reply(req):
        return json.dumps([
            {"option": "add", "skill": {"name": "send_email", "document": "d", "content": "send_email(to=a, subject=s, body=b)", "tools": ["send_email"]}},
            {"option": "add", "skill": {"name": "send_email", "document": "again", "content": "send_email(to=a, subject=s, body=b)", "tools": ["send_email"]}},
            {"option": "add", "skill": {"name": "login", "document": "d", "content": "login(username=u, password=p)", "tools": ["login"]}},
            {"option": "keep", "skill_name": "login"},
        ])

    ups = extract_atomic_skills(_tr(), "send_email", SkillLibrary(), FunctionChatGateway(reply))
    assert [(u.option, u.target_name) for u in ups] == [("add", "send_email"), ("keep", "login")]
    with pytest.raises(PreconditionError):
        extract_atomic_skills(_tr(), "delete_file", SkillLibrary(), FunctionChatGateway(reply))


def test_collect_candidates_on_fixture(env, policy, ctx):
    trs = [t for task in env.seed_tasks() for t in rollout(task, policy, env, 2)]
    cands = collect_candidates(trs, SkillLibrary(), ctx)
    winners = {t.task.id for t in trs if t.success}
    assert {p.provenance.source_task_id for p in cands.planning} == winners
    assert len(cands.all_updates()) == len(cands)
    assert all(u.skill.level is SkillLevel.ATOMIC for u in cands.atomic if u.skill)


def test_transport_failure_drops_only_that_run(env, policy, ctx):
    trs = [t for task in env.seed_tasks()[1:3] for t in rollout(task, policy, env, 1)]
    assert all(t.success for t in trs)
    inner = ctx.gateway
    doomed = trs[0].task.text

    def reply(req):
        if doomed in req.joined():
            raise TransportError("chat endpoint unreachable after 3 attempts")
        return inner.complete(req)

    ctx.gateway = FunctionChatGateway(reply)
    cands = collect_candidates(trs, SkillLibrary(), ctx)
    assert [p.provenance.source_task_id for p in cands.planning] == [trs[1].task.id]


# ---------------------------------------------------------------- episodes


def test_rollout_contracts(env, policy):
    task = env.seed_tasks()[1]
    with pytest.raises(PreconditionError):
        rollout(task, policy, env, 0)
    a = rollout(task, policy, env, 3)
    b = rollout(task, policy, env, 3)
    assert a == b and [t.rollout_index for t in a] == [1, 2, 3]


def test_step_cap_and_unknown_tool(env):
    task = env.seed_tasks()[0]
    looped = run_episode(task, LoopingPolicy(), env, step_cap=5)
    assert len(looped.steps) == 5 and not looped.success

    def bogus(ctx: AgentContext):
        if ctx.history:
            return "done", Action.finish()
        return "try", Action("teleport", {})

    tr = run_episode(task, bogus, env)
    assert tr.steps[0].outcome == "failure" and "unknown tool" in tr.steps[0].observation
