"""A small deterministic multi-tool world: users, files, messages, playlists.

Tool behaviour is fixed Python; the schema, the initial state, and the task
goals come from a JSON fixture. Four tools paginate, and the mail/chat
tools fail until ``login`` succeeds.
"""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path
from typing import Any, Callable, Mapping

from ..errors import UnknownTask, UnknownTool
from ..store import ToolSchema, schemas_from_dict
from ..trajectory import Action, Task, Trajectory

PAGE_SIZE = 3
LOGIN_REQUIRED = frozenset({"send_email", "send_message", "list_messages", "delete_file"})

_PY_TYPES: dict[str, tuple[type, ...]] = {
    "string": (str,),
    "integer": (int,),
    "number": (int, float),
    "boolean": (bool,),
    "object": (dict,),
    "array": (list,),
}


class ToolFailure(Exception):
    pass


def _dump(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False)


def _page(items: list, page: int) -> dict:
    last = max(1, -(-len(items) // PAGE_SIZE))
    if page < 1 or page > last:
        raise ToolFailure(f"page {page} out of range (last page is {last})")
    start = (page - 1) * PAGE_SIZE
    return {"page": page, "last_page": last, "items": items[start : start + PAGE_SIZE]}


class ToyWorld:
    def __init__(self, state: dict, schemas: Mapping[str, ToolSchema], goals: Mapping[str, list]):
        self.state = state
        self.schemas = schemas
        self.goals = goals
        self.session: str | None = None
        self._tools: dict[str, Callable[..., Any]] = {
            "login": self._login,
            "list_playlists": self._list_playlists,
            "create_playlist": self._create_playlist,
            "rename_playlist": self._rename_playlist,
            "add_song_to_playlist": self._add_song,
            "search_songs": self._search_songs,
            "list_files": self._list_files,
            "read_file": self._read_file,
            "delete_file": self._delete_file,
            "send_email": self._send_email,
            "list_messages": self._list_messages,
            "send_message": self._send_message,
        }

    # ------------------------------------------------------------ dispatch

    def step(self, action: Action) -> tuple[str, str]:
        """Run one action; return (observation, tool outcome)."""
        if action.code is not None:
            return "Error: this environment only accepts tool calls", "failure"
        name = action.tool
        if name not in self.schemas or name not in self._tools:
            raise UnknownTool(str(name))
        schema = self.schemas[name]
        args = dict(action.args)
        for key in args:
            if schema.param(key) is None:
                return f"Error: {name} got unexpected parameter '{key}'", "failure"
        for p in schema.parameters:
            if p.name not in args:
                if p.required:
                    return f"Error: {name} is missing required parameter '{p.name}'", "failure"
                continue
            value = args[p.name]
            ok = isinstance(value, _PY_TYPES[p.type]) and not (p.type in ("integer", "number") and isinstance(value, bool))
            if not ok:
                return f"Error: parameter '{p.name}' of {name} must be {p.type}", "failure"
        if name in LOGIN_REQUIRED and self.session is None:
            return f"Error: {name} requires an authenticated session; call login first", "failure"
        try:
            result = self._tools[name](**args)
        except ToolFailure as exc:
            return f"Error: {exc}", "failure"
        return _dump(result), "success"

    def evaluate(self, task_id: str) -> int:
        if task_id not in self.goals:
            raise UnknownTask(task_id)
        return int(all(self._check(g) for g in self.goals[task_id]))

    def state_digest(self) -> str:
        return state_digest(self.state)

    # ------------------------------------------------------------ predicates

    def _playlist_by_name(self, name: str) -> dict | None:
        for p in self.state["playlists"]:
            if p["name"] == name:
                return p
        return None

    def _check(self, goal: Mapping[str, Any]) -> bool:
        kind = goal["type"]
        st = self.state
        if kind == "playlist_has_genre":
            p = self._playlist_by_name(goal["playlist"])
            if p is None:
                return False
            want = {s["id"] for s in st["songs"] if s["genre"] == goal["genre"]}
            return want <= set(p["song_ids"])
        if kind == "email_sent":
            return any(
                e["to"] == goal["to"] and goal.get("body_contains", "") in e["body"] for e in st["sent_emails"]
            )
        if kind == "message_sent":
            return any(
                m["to"] == goal["to"] and goal.get("text_contains", "") in m["text"] for m in st["sent_messages"]
            )
        if kind == "file_deleted":
            return all(f["name"] != goal["name"] or f["deleted"] for f in st["files"])
        if kind == "playlist_exists":
            return self._playlist_by_name(goal["name"]) is not None
        if kind == "state_matches":
            return self.state_digest() == goal["digest"]
        raise ValueError(f"unknown goal type {kind!r}")

    # ------------------------------------------------------------ tools

    def _login(self, username: str, password: str) -> dict:
        user = self.state["users"].get(username)
        if user is None or user["password"] != password:
            raise ToolFailure("invalid username or password")
        self.session = username
        return {"logged_in": username}

    def _list_playlists(self, page: int = 1) -> dict:
        return _page([{"id": p["id"], "name": p["name"]} for p in self.state["playlists"]], page)

    def _find_playlist(self, playlist_id: int) -> dict:
        for p in self.state["playlists"]:
            if p["id"] == playlist_id:
                return p
        raise ToolFailure(f"no playlist with id {playlist_id}")

    def _song(self, song_id: int) -> dict:
        for s in self.state["songs"]:
            if s["id"] == song_id:
                return s
        raise ToolFailure(f"no song with id {song_id}")

    def _create_playlist(self, name: str) -> dict:
        if self._playlist_by_name(name) is not None:
            raise ToolFailure(f"a playlist named '{name}' already exists")
        new_id = max((p["id"] for p in self.state["playlists"]), default=0) + 1
        self.state["playlists"].append({"id": new_id, "name": name, "song_ids": []})
        return {"id": new_id, "name": name}

    def _rename_playlist(self, playlist_id: int, name: str) -> dict:
        p = self._find_playlist(playlist_id)
        if self._playlist_by_name(name) is not None:
            raise ToolFailure(f"a playlist named '{name}' already exists")
        p["name"] = name
        return {"id": playlist_id, "name": name}

    def _add_song(self, playlist_id: int, song_id: int) -> dict:
        p = self._find_playlist(playlist_id)
        self._song(song_id)
        if song_id in p["song_ids"]:
            raise ToolFailure(f"song {song_id} is already in playlist {playlist_id}")
        p["song_ids"].append(song_id)
        return {"playlist_id": playlist_id, "song_count": len(p["song_ids"])}

    def _search_songs(self, genre: str, page: int = 1) -> dict:
        return _page([s for s in self.state["songs"] if s["genre"] == genre], page)

    def _live_files(self) -> list[dict]:
        return [f for f in self.state["files"] if not f["deleted"]]

    def _list_files(self, page: int = 1) -> dict:
        return _page([{"id": f["id"], "name": f["name"]} for f in self._live_files()], page)

    def _read_file(self, file_id: int) -> dict:
        for f in self._live_files():
            if f["id"] == file_id:
                return {"id": f["id"], "name": f["name"], "content": f["content"]}
        raise ToolFailure(f"no file with id {file_id}")

    def _delete_file(self, file_id: int) -> dict:
        for f in self._live_files():
            if f["id"] == file_id:
                f["deleted"] = True
                return {"deleted": file_id}
        raise ToolFailure(f"no file with id {file_id}")

    def _send_email(self, to: str, subject: str, body: str) -> dict:
        if "@" not in to:
            raise ToolFailure(f"'{to}' is not an email address")
        self.state["sent_emails"].append({"from": self.session, "to": to, "subject": subject, "body": body})
        return {"sent": True, "to": to}

    def _list_messages(self, page: int = 1) -> dict:
        inbox = [m for m in self.state["messages"] if m["to"] == self.session]
        return _page(inbox, page)

    def _send_message(self, to: str, text: str) -> dict:
        if to not in self.state["users"]:
            raise ToolFailure(f"no user named '{to}'")
        self.state["sent_messages"].append({"from": self.session, "to": to, "text": text})
        return {"sent": True, "to": to}


def state_digest(state: Mapping[str, Any]) -> str:
    """Digest of the mutable part of a world state (sessions excluded)."""
    keys = ("files", "playlists", "sent_emails", "sent_messages")
    payload = json.dumps({k: state[k] for k in keys}, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class ToyEnvironment:
    """Factory of fresh worlds for a fixture; also the task registry."""

    def __init__(self, fixture: Mapping[str, Any]):
        self.fixture = fixture
        self.schemas: dict[str, ToolSchema] = schemas_from_dict({"tools": fixture["tools"]})
        self.initial_state = fixture["initial_state"]
        self.tasks: dict[str, Task] = {}
        self.goals: dict[str, list] = {}
        for raw in fixture["tasks"]:
            task = Task(raw["id"], raw["text"], raw.get("split", "train"))
            self.tasks[task.id] = task
            self.goals[task.id] = list(raw["goal"])

    @classmethod
    def from_file(cls, path: str | Path) -> "ToyEnvironment":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    @property
    def tool_universe(self) -> list[str]:
        return sorted(self.schemas)

    def seed_tasks(self, split: str = "train") -> list[Task]:
        return [t for t in self.tasks.values() if t.split == split]

    def reset(self, task: Task | None = None) -> ToyWorld:
        return ToyWorld(copy.deepcopy(self.initial_state), self.schemas, self.goals)

    def replay(self, actions) -> ToyWorld:
        world = self.reset()
        for a in actions:
            try:
                world.step(a)
            except UnknownTool:
                pass
        return world

    def register_task(self, task: Task, reference: Trajectory | None = None, goal: list | None = None) -> None:
        """Add a task; without an explicit goal the reference run's end state is the goal."""
        if goal is None:
            if reference is None:
                raise ValueError("register_task needs a goal or a reference trajectory")
            world = self.replay(s.action for s in reference.steps)
            goal = [{"type": "state_matches", "digest": world.state_digest()}]
        self.tasks[task.id] = task
        self.goals[task.id] = list(goal)
