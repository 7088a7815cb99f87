"""Command line: build, refine, expand, retrieve, validate, stats.

Paths in a config file are relative to that file; paths given as flags are
relative to the working directory. Flags win over the config file.

Exit codes: 0 success, 1 validation failures, 2 usage or input error,
3 gateway or pipeline failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import re
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import store
from .config import PipelineConfig
from .context import PipelineContext
from .errors import FormatError, PreconditionError, SkillKBError, ValidationError, VersionError
from .expansion import run_expansion
from .gateway import HashEmbedder, HttpChatGateway, HttpEmbeddingGateway, MockChatGateway
from .refinement import iterate, run_round, tool_schema_static_check
from .retrieval import retrieve
from .skills import SkillLevel, SkillLibrary, library_diff, validate_skill

log = logging.getLogger("skillkb")

EXIT_OK, EXIT_INVALID, EXIT_USAGE, EXIT_PIPELINE = 0, 1, 2, 3


class UsageError(Exception):
    """Bad or missing input; exits with code 2."""


_SNAPSHOT = re.compile(r"\.iter(\d+)\.json$")


# ---------------------------------------------------------------- settings


@dataclass
class Settings:
    cfg: PipelineConfig
    base: Path  # directory config-relative paths resolve against

    def path(self, key: str) -> Path | None:
        value = getattr(self.cfg, key)
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else self.base / p


def _settings(args: argparse.Namespace) -> Settings:
    if args.config:
        cfg_path = Path(args.config)
        if not cfg_path.is_file():
            raise UsageError(f"config not found: {cfg_path}")
        cfg = PipelineConfig.load(cfg_path)
        base = cfg_path.resolve().parent
    else:
        cfg, base = PipelineConfig(), Path.cwd()
    cwd = Path.cwd()
    flag_paths = {}
    for key in ("library", "schemas", "tasks", "world", "trajectories", "mock_table", "out"):
        v = getattr(args, key, None)
        if v is not None:
            flag_paths[key] = str((cwd / v).resolve())
    cfg = cfg.override(
        **flag_paths,
        seed=args.seed,
        jobs=args.jobs,
        rounds=getattr(args, "rounds", None),
    )
    if cfg.jobs < 1 or cfg.rounds < 0:
        raise UsageError("--jobs must be >= 1 and --rounds >= 0")
    return Settings(cfg, base)


def _require(s: Settings, key: str, what: str) -> Path:
    p = s.path(key)
    if p is None or not p.exists():
        raise UsageError(f"{what} not found" + (f": {p}" if p else ""))
    return p


def _context(s: Settings, schemas) -> PipelineContext:
    mock = s.path("mock_table")
    if mock is not None:
        if not mock.is_file():
            raise UsageError(f"mock table not found: {mock}")
        gateway = MockChatGateway.from_file(mock)
    else:
        gateway = HttpChatGateway.from_env(s.cfg.chat_model)
    if os.environ.get("SKILLKB_EMBED_URL"):
        embedder = HttpEmbeddingGateway.from_env(s.cfg.embed_model, s.cfg.embedding_dimension)
    else:
        embedder = HashEmbedder(s.cfg.embedding_dimension, seed=s.cfg.seed)
    return PipelineContext.build(gateway, schemas, embedder, s.cfg)


def _world(s: Settings):
    from .toyenv import load_fixture
    from .toyenv.policies import ExplorationPolicy, ScriptedPolicy
    from .toyenv.world import ToyEnvironment

    fixture = load_fixture(_require(s, "world", "world"))
    env = ToyEnvironment(fixture)
    return env, ScriptedPolicy(fixture.get("scripts", {})), ExplorationPolicy(fixture.get("probes", {}))


def _library_path(s: Settings) -> Path:
    return _require(s, "library", "library")


def _output_path(s: Settings) -> Path:
    p = s.path("out") or s.path("library")
    if p is None:
        raise UsageError("no output path: pass --out or --library")
    return p


def _trajectories_path(s: Settings, library_path: Path) -> Path:
    return s.path("trajectories") or library_path.with_suffix(".trajectories.jsonl")


def _snapshot_path(library_path: Path, iteration: int) -> Path:
    return library_path.with_name(f"{library_path.stem}.iter{iteration}.json")


def _sidecar(path: Path, tag: str) -> Path:
    return path.with_name(f"{path.stem}.{tag}.json")


def _write_json(path: Path, obj) -> None:
    store.atomic_write(path, (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode("utf-8"))


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


# ---------------------------------------------------------------- commands


def cmd_build(args: argparse.Namespace) -> int:
    s = _settings(args)
    schemas = store.load_tool_schemas(_require(s, "schemas", "schemas"))
    tasks = store.load_tasks(_require(s, "tasks", "tasks"))
    out = _output_path(s)
    ctx = _context(s, schemas)
    if not tasks:
        log.warning("no tasks given; writing an empty library")
        library, report, trajectories = SkillLibrary(), {"iteration": 0, "library_size": 0}, []
    else:
        env, policy, _ = _world(s)
        result = run_round(SkillLibrary(), tasks, policy, env, ctx)
        library, report, trajectories = result.library, result.report, result.trajectories
    digest = store.save_library(library, out)
    store.save_library(library, _snapshot_path(out, library.iteration))
    store.save_trajectories(trajectories, _trajectories_path(s, out))
    _write_json(_sidecar(out, "report"), report)
    _emit({"library": str(out), "digest": digest, "report": report})
    return EXIT_OK


def cmd_refine(args: argparse.Namespace) -> int:
    s = _settings(args)
    lib_path = _library_path(s)
    library = store.load_library(lib_path)
    rounds = s.cfg.rounds
    if rounds == 0:
        _emit({"library": str(lib_path), "rounds": 0, "snapshots": []})
        return EXIT_OK
    schemas = store.load_tool_schemas(_require(s, "schemas", "schemas"))
    tasks = store.load_tasks(_require(s, "tasks", "tasks"))
    env, policy, _ = _world(s)
    ctx = _context(s, schemas)
    out = _output_path(s)
    traj_path = _trajectories_path(s, out)
    experience = store.load_trajectories(traj_path) if traj_path.exists() else []

    written: list[dict] = []

    def save(result) -> None:
        snap = _snapshot_path(out, result.library.iteration)
        written.append({"path": str(snap), "digest": store.save_library(result.library, snap), "size": len(result.library)})
        experience.extend(result.trajectories)

    snapshots, reports = iterate(library, tasks, policy, env, ctx, rounds=rounds, on_round=save)
    digest = store.save_library(snapshots[-1], out)
    store.save_trajectories(experience, traj_path)
    _write_json(_sidecar(out, "refine-report"), reports)
    _emit({"library": str(out), "digest": digest, "snapshots": written, "reports": reports})
    return EXIT_OK


def cmd_expand(args: argparse.Namespace) -> int:
    s = _settings(args)
    lib_path = _library_path(s)
    library = store.load_library(lib_path)
    traj_path = _trajectories_path(s, lib_path)
    experience = store.load_trajectories(traj_path) if traj_path.exists() else []
    if not experience:
        raise UsageError("no experience to guide exploration")
    schemas = store.load_tool_schemas(_require(s, "schemas", "schemas"))
    tasks = store.load_tasks(_require(s, "tasks", "tasks"))
    env, policy, explorer = _world(s)
    ctx = _context(s, schemas)
    result = run_expansion(library, experience, tasks, env, explorer, policy, ctx, mode=args.mode)
    out = _output_path(s)
    digest = store.save_library(result.library, out)
    store.save_tasks(result.synthesized, out.with_suffix(".synthesized.jsonl"))
    report = result.to_json()
    report["coverage"] = {"before": len(library.tools_covered() & set(schemas)), "after": result.coverage(schemas)}
    _write_json(_sidecar(out, "expand-report"), report)
    _emit({"library": str(out), "digest": digest, "ranking": result.ranking, "report": report["report"],
           "synthesized": len(result.synthesized), "coverage": report["coverage"]})
    return EXIT_OK


def cmd_retrieve(args: argparse.Namespace) -> int:
    s = _settings(args)
    library = store.load_library(_library_path(s))
    schemas_path = s.path("schemas")
    schemas = store.load_tool_schemas(schemas_path) if schemas_path and schemas_path.exists() else {}
    ctx = _context(s, schemas)
    bundle = retrieve(args.query, library, ctx)
    doc = bundle.to_json()
    if args.emit_prompt:
        p = Path(args.emit_prompt)
        store.atomic_write(p, bundle.prompt.encode("utf-8"))
        doc["prompt_file"] = str(p)
    if s.path("out") is not None:
        _write_json(s.path("out"), doc)
    _emit(doc)
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    s = _settings(args)
    schemas = store.load_tool_schemas(_require(s, "schemas", "schemas"))
    library = store.load_library(_library_path(s))
    violations = {}
    for name in library.names():
        skill = library[name]
        problems = validate_skill(skill) + tool_schema_static_check(skill, schemas).violations
        if problems:
            violations[name] = problems
    _emit({"skills": len(library), "violations": violations, "ok": not violations})
    return EXIT_INVALID if violations else EXIT_OK


def _snapshot_files(lib_path: Path) -> list[Path]:
    found = sorted(
        (int(m.group(1)), p)
        for p in lib_path.parent.glob(f"{lib_path.with_suffix('').name}.iter*.json")
        if (m := _SNAPSHOT.search(p.name))
    )
    return [p for _, p in found] or [lib_path]


def stats_rows(libraries: Sequence[SkillLibrary], universe: Sequence[str] = ()) -> list[dict]:
    """One row per snapshot: size, level breakdown, tool coverage, update counts vs the previous one."""
    rows = []
    prev = SkillLibrary()
    universe = set(universe)
    for lib in libraries:
        added, modified, _ = library_diff(prev, lib)
        covered = lib.tools_covered()
        if universe:
            covered &= universe
        rows.append({
            "iteration": lib.iteration,
            "size": len(lib),
            "levels": {lv.value: len(lib.by_level(lv)) for lv in SkillLevel},
            "tools_covered": len(covered),
            "tool_coverage": len(covered) / len(universe) if universe else None,
            "updates": {"add": len(added), "modify": len(modified), "keep": len(lib) - len(added) - len(modified)},
        })
        prev = lib
    return rows


def cmd_stats(args: argparse.Namespace) -> int:
    s = _settings(args)
    paths = [Path(p) for p in args.snapshots] if args.snapshots else _snapshot_files(_library_path(s))
    for p in paths:
        if not p.is_file():
            raise UsageError(f"snapshot not found: {p}")
    libraries = sorted((store.load_library(p) for p in paths), key=lambda lib: lib.iteration)
    schemas_path = s.path("schemas")
    universe = sorted(store.load_tool_schemas(schemas_path)) if schemas_path and schemas_path.exists() else []
    _emit({"rows": stats_rows(libraries, universe), "tool_universe": len(universe)})
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON pipeline config")
    common.add_argument("--library", help="library file")
    common.add_argument("--schemas", help="tool schema file")
    common.add_argument("--tasks", help="tasks JSONL")
    common.add_argument("--world", help="toy world fixture JSON")
    common.add_argument("--trajectories", help="trajectory JSONL (default: next to the library)")
    common.add_argument("--mock-table", dest="mock_table", help="scripted chat replies; omit to use the HTTP gateway")
    common.add_argument("--out", help="output file (default: overwrite --library)")
    common.add_argument("--jobs", type=int, help="worker threads")
    common.add_argument("--seed", type=int, help="top-level seed")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="skillkb", description="Build and serve a three-level skill library.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("build", parents=[common], help="rollouts, extraction and one refinement pass").set_defaults(fn=cmd_build)
    r = sub.add_parser("refine", parents=[common], help="further refinement rounds")
    r.add_argument("--rounds", type=int)
    r.set_defaults(fn=cmd_refine)
    e = sub.add_parser("expand", parents=[common], help="experience-guided exploration and acquisition")
    e.add_argument("--mode", choices=("guided", "random"), default="guided")
    e.set_defaults(fn=cmd_expand)
    q = sub.add_parser("retrieve", parents=[common], help="retrieve skills for a query")
    q.add_argument("query")
    q.add_argument("--emit-prompt", dest="emit_prompt", metavar="PATH", help="write the assembled prompt here")
    q.set_defaults(fn=cmd_retrieve)
    sub.add_parser("validate", parents=[common], help="audit a library against the tool schemas").set_defaults(fn=cmd_validate)
    st = sub.add_parser("stats", parents=[common], help="per-snapshot metrics")
    st.add_argument("snapshots", nargs="*", help="snapshot files (default: the library's iteration snapshots)")
    st.set_defaults(fn=cmd_stats)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, VersionError, PreconditionError, FileNotFoundError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SkillKBError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    raise SystemExit(main())
