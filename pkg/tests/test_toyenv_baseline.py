from __future__ import annotations

import pytest

from skillkb.baseline import run_baseline, run_conditioned, summarize
from skillkb.context import PipelineContext, run_episode
from skillkb.errors import UnknownTask, UnknownTool
from skillkb.toyenv import data_path
from skillkb.toyenv.authoring import render_files
from skillkb.toyenv.policies import RandomToolPolicy, ScriptedPolicy, hint_gates, skill_hints
from skillkb.trajectory import Action, Task, Trajectory, TrajectoryStep


def _login(world, fixture_data):
    pw = fixture_data["initial_state"]["users"]["me"]["password"]
    return world.step(Action("login", {"username": "me", "password": pw}))


def test_committed_data_matches_authoring_source():
    for name, text in render_files().items():
        assert data_path(name).read_text(encoding="utf-8") == text, name


def test_fixture_shape(env):
    assert len(env.tool_universe) == 12
    assert env.seed_tasks() and all(t.split == "train" for t in env.seed_tasks())


def test_argument_validation(env):
    w = env.reset()
    assert w.step(Action("list_files", {"page": 1, "extra": 2}))[1] == "failure"
    assert "missing required parameter 'file_id'" in w.step(Action("read_file", {}))[0]
    assert "must be integer" in w.step(Action("read_file", {"file_id": True}))[0]
    assert "must be integer" in w.step(Action("read_file", {"file_id": "1"}))[0]
    assert w.step(Action(None, {}, code="print(1)"))[1] == "failure"
    with pytest.raises(UnknownTool):
        w.step(Action("teleport", {}))


def test_login_gate_and_pagination(env, fixture_data):
    w = env.reset()
    obs, outcome = w.step(Action("send_message", {"to": "bob", "text": "hi"}))
    assert outcome == "failure" and "login first" in obs
    assert w.step(Action("login", {"username": "me", "password": "wrong"}))[1] == "failure"
    assert _login(w, fixture_data)[1] == "success"
    assert w.step(Action("send_message", {"to": "bob", "text": "hi"}))[1] == "success"
    assert w.step(Action("send_message", {"to": "nobody", "text": "hi"}))[1] == "failure"
    first = w.step(Action("list_files", {}))[0]
    assert '"budget.xlsx"' in first and '"notes.txt"' not in first
    assert '"notes.txt"' in w.step(Action("list_files", {"page": 2}))[0]


def test_evaluate_goal_types(env, fixture_data):
    w = env.reset()
    env.goals.update({
        "g_exists": [{"type": "playlist_exists", "name": "Chill"}],
        "g_genre": [{"type": "playlist_has_genre", "playlist": "Focus", "genre": "jazz"}],
        "g_mail": [{"type": "email_sent", "to": "bob@example.com", "body_contains": "hello"}],
        "g_msg": [{"type": "message_sent", "to": "carol"}],
        "g_del": [{"type": "file_deleted", "name": "todo.txt"}],
    })
    assert [w.evaluate(k) for k in ("g_exists", "g_genre", "g_mail", "g_msg", "g_del")] == [0, 0, 0, 0, 0]
    _login(w, fixture_data)
    w.step(Action("create_playlist", {"name": "Chill"}))
    for song in (2, 6, 8):
        w.step(Action("add_song_to_playlist", {"playlist_id": 3, "song_id": song}))
    w.step(Action("send_email", {"to": "bob@example.com", "subject": "s", "body": "well hello"}))
    w.step(Action("send_message", {"to": "carol", "text": "ok"}))
    w.step(Action("delete_file", {"file_id": 2}))
    assert [w.evaluate(k) for k in ("g_exists", "g_genre", "g_mail", "g_msg", "g_del")] == [1, 1, 1, 1, 1]
    with pytest.raises(UnknownTask):
        w.evaluate("nope")


def test_worlds_are_independent(env, fixture_data):
    a = env.reset()
    _login(a, fixture_data)
    a.step(Action("create_playlist", {"name": "Chill"}))
    assert env.reset().state_digest() != a.state_digest()
    assert env.reset().state_digest() == env.reset().state_digest()


def test_register_task_from_reference(env, fixture_data):
    pw = fixture_data["initial_state"]["users"]["me"]["password"]
    steps = (
        TrajectoryStep(1, "in", Action("login", {"username": "me", "password": pw}), "{}", "success"),
        TrajectoryStep(2, "make", Action("create_playlist", {"name": "Chill"}), "{}", "success"),
        TrajectoryStep(3, "oops", Action("create_playlist", {"name": "Chill"}), "Error", "failure"),
    )
    task = Task("new", "Make a Chill playlist.", "synthesized")
    ref = Trajectory(task, steps, True)
    env.register_task(task, ref)
    policy = ScriptedPolicy({})
    policy.register_task(task, ref)
    assert [s["tool"] for s in policy.scripts["new"]] == ["login", "create_playlist"]
    assert run_episode(task, policy, env).success
    with pytest.raises(ValueError):
        env.register_task(Task("x", "y"))


def test_unscripted_task_finishes_and_unregistered_task_raises(env):
    env.goals["ghost"] = [{"type": "playlist_exists", "name": "Chill"}]
    tr = run_episode(Task("ghost", "??"), ScriptedPolicy({}), env)
    assert tr.steps == () and not tr.success
    with pytest.raises(UnknownTask):
        run_episode(Task("ghost2", "??"), ScriptedPolicy({}), env)


def test_hints_and_gates():
    prompt = (
        "## Reference plans\n\n### p\nplan\n# step 1: x; apis: send_email\n\n"
        "## Functional skills\n\n### f\nDoc.\nImplementation:\nlogin(u, p)\nsend_email(to=a)\nTools: login, send_email\n\n"
        "## Atomic skills\n\n### read_file\nDoc.\nImplementation:\nread_file(file_id=1)\nTools: read_file\n"
    )
    assert skill_hints(prompt) == [["login", "send_email"], ["read_file"]]
    script = [
        {"tool": "login", "args": {}},
        {"tool": "list_files", "args": {"page": 1}, "skip_if_hint": ["read_file"]},
        {"tool": "send_email", "args": {}, "only_if_hint": ["login", "send_email"]},
        {"tool": "send_message", "args": {}, "only_if_hint": ["send_message"]},
    ]
    policy = ScriptedPolicy({"t": script})
    assert [s["tool"] for s in policy.plan("t", prompt)] == ["login", "send_email"]
    assert [s["tool"] for s in policy.plan("t")] == ["login", "list_files"]
    assert hint_gates(script)[1] == "list_files(page=1) [skipped with read_file]"


def test_random_policy_is_seeded(env):
    task = env.seed_tasks()[0]
    p = RandomToolPolicy(env.tool_universe, steps=4)
    a = run_episode(task, p, env, seed=3)
    b = run_episode(task, p, env, seed=3)
    assert a == b and len(a.tool_calls()) == 4


# ---------------------------------------------------------------- baseline metrics


def _t(task_id, success, n):
    steps = tuple(TrajectoryStep(i + 1, "t", Action("login", {}), "o", "success") for i in range(n))
    return Trajectory(Task(task_id, "x"), steps, success)


def test_summarize_against_hand_counts():
    m = summarize([_t("a", True, 2), _t("a", False, 4), _t("b", False, 3), _t("b", False, 3)])
    assert m.avg_at_m == pytest.approx((0.5 + 0.0) / 2)
    assert m.pass_at_m == pytest.approx(0.5)
    assert m.mean_steps == pytest.approx(3.0)
    assert m.per_task["a"] == {"rollouts": 2, "successes": 1, "avg": 0.5, "mean_steps": 3.0}
    assert summarize([]).to_json() == {"avg_at_m": 0.0, "pass_at_m": 0.0, "mean_steps": 0.0, "per_task": {}}


def test_deterministic_policy_avg_equals_pass(env, policy):
    m = run_baseline(env.seed_tasks(), policy, env, m=4)
    assert m.avg_at_m == m.pass_at_m
    assert all(p["rollouts"] == 4 for p in m.per_task.values())


def test_conditioned_on_empty_library_matches_baseline(env, policy, gateway):
    from skillkb.skills import SkillLibrary

    ctx = PipelineContext.build(gateway, env.schemas)
    base = run_baseline(env.seed_tasks(), policy, env, m=2)
    cond = run_conditioned(env.seed_tasks(), policy, env, SkillLibrary(), ctx, m=2)
    assert base.trajectories == cond.trajectories
