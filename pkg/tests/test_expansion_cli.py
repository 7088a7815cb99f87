from __future__ import annotations

import json

import pytest

from conftest import make_skill
from skillkb import store
from skillkb.cli import main, stats_rows
from skillkb.context import PipelineContext
from skillkb.errors import PreconditionError
from skillkb.expansion import (
    ExplorationDirective,
    ToolStats,
    compute_tool_stats,
    expand,
    explore,
    normalize_task_text,
    prioritize_tools,
    run_expansion,
    synthesize_tasks,
    tool_tier,
)
from skillkb.gateway import FunctionChatGateway
from skillkb.skills import SkillLibrary, SkillUpdate, apply_update
from skillkb.toyenv import data_path
from skillkb.trajectory import Action, Task, Trajectory, TrajectoryStep


def _run(key, calls, success=True):
    steps = tuple(TrajectoryStep(i + 1, "t", Action(tool, {}), "o", outcome) for i, (tool, outcome) in enumerate(calls))
    return Trajectory(Task(key, f"text {key}"), steps, success)


# ---------------------------------------------------------------- statistics


def test_tool_stats_against_hand_counts():
    trs = [
        _run("a", [("login", "success"), ("send_email", "failure"), ("send_email", "failure")]),
        _run("b", [("login", "success"), ("send_email", "success"), ("ghost", "failure")]),
    ]
    stats = {s.tool: s for s in compute_tool_stats(trs, ["login", "send_email", "delete_file"])}
    assert stats["login"] == ToolStats("login", 2, 2, 0)
    assert stats["send_email"] == ToolStats("send_email", 3, 1, 2)
    assert stats["send_email"].failure_rate == pytest.approx(2 / 3)
    assert stats["delete_file"].never_invoked and "ghost" not in stats
    assert [tool_tier(stats[t]) for t in ("delete_file", "send_email", "login")] == [0, 1, 2]
    assert tool_tier(ToolStats("x", 2, 1, 1)) == 1  # exactly at the threshold
    assert prioritize_tools(list(stats.values())) == ["delete_file", "send_email", "login"]
    assert stats["send_email"].to_json()["failures"] == 2


def test_directive_rotation_and_validation():
    d = ExplorationDirective(("a", "b", "c"))
    assert [d.for_task(i) for i in range(4)] == [("a", "b", "c"), ("b", "c", "a"), ("c", "a", "b"), ("a", "b", "c")]
    assert ExplorationDirective(()).for_task(5) == ()
    with pytest.raises(PreconditionError):
        d.validate(["a", "b"])


def test_explore_tags_runs(env, explorer):
    tasks = env.seed_tasks()[:2]
    ex = explore(env, ExplorationDirective(("delete_file", "rename_playlist")), tasks, explorer)
    assert [t.task.id for t in ex.trajectories] == [f"{t.id}~explore" for t in tasks]
    assert all(t.task.split == "synthesized" for t in ex.trajectories)
    assert list(ex.targets.values()) == [("delete_file", "rename_playlist"), ("rename_playlist", "delete_file")]
    assert ex.trajectories[0].tool_calls()[-1].action.tool == "delete_file"


def test_synthesis_dedup_and_skips():
    good = _run("a", [("login", "success")])
    twin = _run("b", [("login", "success")])
    idle = _run("c", [("login", "failure")])
    replies = iter(["<task>Delete the old draft.</task>", "<task>  delete the OLD draft </task>"])
    gw = FunctionChatGateway(lambda r: next(replies))
    tasks = synthesize_tasks([good, twin, idle], gw, {good.key: ("delete_file",)})
    assert len(gw.calls) == 2 and len(tasks) == 1
    t = tasks[0]
    assert t.text == "Delete the old draft." and t.split == "synthesized" and t.source_trajectory == good.key
    assert t.id.startswith("syn-") and normalize_task_text(t.text) == "delete the old draft"
    assert "delete_file" in gw.calls[0].messages[-1].content or "delete_file" in gw.calls[0].messages[0].content
    assert synthesize_tasks([good], FunctionChatGateway(lambda r: "nothing")) == []
    with pytest.raises(PreconditionError):
        synthesize_tasks([], gw)


def test_expand_without_tasks_is_noop(env, policy, ctx):
    lib = SkillLibrary.from_skills([make_skill("a")])
    new, report = expand(lib, [], policy, env, ctx)
    assert new is lib and report["candidates_in"] == 0


def test_run_expansion_modes(built, env, policy, explorer, gateway):
    universe = env.tool_universe
    ctx = PipelineContext.build(gateway, env.schemas)
    before = len(built.library.tools_covered() & set(universe))
    res = run_expansion(built.library, built.trajectories, env.seed_tasks(), env, explorer, policy, ctx)
    assert res.ranking[: 2] == [s.tool for s in res.stats if s.never_invoked]
    assert res.coverage(universe) > before
    new = set(res.library.names()) - set(built.library.names())
    assert new and all(res.library[n].provenance.origin == "expanded" for n in new)
    assert json.loads(json.dumps(res.to_json()))["ranking"] == res.ranking
    rnd = run_expansion(built.library, built.trajectories, env.seed_tasks(), env, explorer, policy,
                        PipelineContext.build(gateway, env.schemas), mode="random", rng_seed=1)
    assert all(len(v) == 1 for v in rnd.exploration.targets.values())
    with pytest.raises(ValueError):
        run_expansion(built.library, [], env.seed_tasks(), env, explorer, policy, ctx, mode="bogus")


# ---------------------------------------------------------------- CLI


@pytest.fixture
def workdir(tmp_path):
    for name in ("world.json", "schemas.json", "tasks.jsonl", "mock_table.json", "config.json"):
        (tmp_path / name).write_bytes(data_path(name).read_bytes())
    return tmp_path


def _cli(workdir, command, *rest):
    return main([command, "--config", str(workdir / "config.json"), "--library", str(workdir / "lib.json"), *rest])


def test_cli_round_trip(workdir, capsys):
    assert _cli(workdir, "build") == 0
    assert (workdir / "lib.iter1.json").is_file() and (workdir / "lib.trajectories.jsonl").is_file()
    assert _cli(workdir, "refine", "--rounds", "0") == 0
    assert not (workdir / "lib.iter2.json").exists()
    assert _cli(workdir, "refine", "--rounds", "1") == 0
    assert (workdir / "lib.iter2.json").is_file()
    capsys.readouterr()
    assert _cli(workdir, "stats") == 0
    rows = json.loads(capsys.readouterr().out)["rows"]
    assert [r["iteration"] for r in rows] == [1, 2] and rows[0]["updates"]["add"] == rows[0]["size"]
    assert _cli(workdir, "validate") == 0
    plan = store.load_library(workdir / "lib.json").by_level("planning")[0]
    prompt = workdir / "prompt.md"
    capsys.readouterr()
    assert _cli(workdir, "retrieve", plan.source_task_text, "--emit-prompt", str(prompt)) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["planning"][0]["name"] == plan.name and prompt.read_text().startswith("## Reference plans")
    assert _cli(workdir, "expand") == 0
    assert (workdir / "lib.synthesized.jsonl").is_file()
    report = json.loads((workdir / "lib.expand-report.json").read_text())
    assert report["coverage"]["after"] > report["coverage"]["before"]


def test_cli_validate_flags_broken_skill(workdir, capsys):
    lib = SkillLibrary.from_skills([make_skill("login", "atomic"), make_skill("f")])
    lib = apply_update(lib, SkillUpdate.modify(make_skill("f").with_(content="login(username=3)"), "f"))
    store.save_library(lib, workdir / "lib.json")
    assert _cli(workdir, "validate") == 1
    out = json.loads(capsys.readouterr().out)
    assert not out["ok"] and set(out["violations"]) == {"f", "login"}


def test_cli_error_exit_codes(workdir, tmp_path, capsys):
    assert main(["build", "--config", str(tmp_path / "missing.json")]) == 2
    assert main(["nonsense"]) == 2
    assert main(["build", "--config", str(workdir / "config.json"), "--schemas", str(tmp_path / "none.json"),
                 "--library", str(workdir / "x.json")]) == 2
    assert "schemas not found" in capsys.readouterr().err
    (workdir / "bad.json").write_text('{"format_version": 7}')
    assert main(["stats", "--library", str(workdir / "bad.json")]) == 2
    assert _cli(workdir, "refine", "--rounds", "9") == 2  # no library yet
    store.save_library(SkillLibrary(), workdir / "lib.json")
    assert _cli(workdir, "refine", "--rounds", "9") == 2
    assert _cli(workdir, "expand") == 2
    assert "no experience" in capsys.readouterr().err


def test_stats_rows_oracle():
    a = SkillLibrary.from_skills([make_skill("x"), make_skill("login", "atomic")], iteration=1)
    b = apply_update(a.with_iteration(2), SkillUpdate.modify(make_skill("x", body="v2"), "x"))
    rows = stats_rows([a, b], ["login", "send_email"])
    assert rows[0]["updates"] == {"add": 2, "modify": 0, "keep": 0}
    assert rows[1]["updates"] == {"add": 0, "modify": 1, "keep": 1}
    assert rows[1]["tool_coverage"] == 0.5 and rows[1]["levels"]["atomic"] == 1
