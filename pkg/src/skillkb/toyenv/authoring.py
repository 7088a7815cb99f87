"""Source of truth for the bundled toy fixture and its scripted mock table.

``python -m skillkb.toyenv.authoring [DIR]`` regenerates the JSON files in
``skillkb/toyenv/data``; a test checks that the committed copies match.

The seed suite is built so that skills matter: the naive scripts take
detours (calling protected tools before ``login``, scanning playlists that
cannot exist yet) and one of them stops after the first page of search
results. The gates in the scripts let a policy that sees the right skills
skip the detours and finish the paging.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

from ..prompts import system_marker
from ..store import canonical_json

ME = {"username": "me", "password": "hunter2"}

# ---------------------------------------------------------------- tools


def _p(name: str, type_: str, required: bool, description: str) -> dict:
    return {"name": name, "type": type_, "required": required, "description": description}


_PAGE = _p("page", "integer", False, "1-based page number, default 1")

TOOLS = [
    {"name": "login", "description": "Open an authenticated session.", "returns": "{logged_in}",
     "parameters": [_p("username", "string", True, "account name"), _p("password", "string", True, "account password")]},
    {"name": "list_playlists", "description": "List playlists, three per page.", "returns": "{page, last_page, items:[{id, name}]}",
     "parameters": [_PAGE]},
    {"name": "search_songs", "description": "Songs of a genre, three per page.", "returns": "{page, last_page, items:[{id, title, genre}]}",
     "parameters": [_p("genre", "string", True, "genre name"), _PAGE]},
    {"name": "add_song_to_playlist", "description": "Append a song to a playlist.", "returns": "{playlist_id, song_count}",
     "parameters": [_p("playlist_id", "integer", True, "playlist id"), _p("song_id", "integer", True, "song id")]},
    {"name": "create_playlist", "description": "Create an empty playlist.", "returns": "{id, name}",
     "parameters": [_p("name", "string", True, "unique playlist name")]},
    {"name": "rename_playlist", "description": "Rename a playlist.", "returns": "{id, name}",
     "parameters": [_p("playlist_id", "integer", True, "playlist id"), _p("name", "string", True, "new unique name")]},
    {"name": "list_files", "description": "List files, three per page.", "returns": "{page, last_page, items:[{id, name}]}",
     "parameters": [_PAGE]},
    {"name": "read_file", "description": "Read a file's contents.", "returns": "{id, name, content}",
     "parameters": [_p("file_id", "integer", True, "file id")]},
    {"name": "delete_file", "description": "Delete a file. Needs a session.", "returns": "{deleted}",
     "parameters": [_p("file_id", "integer", True, "file id")]},
    {"name": "send_email", "description": "Send an email. Needs a session.", "returns": "{sent, to}",
     "parameters": [_p("to", "string", True, "email address"), _p("subject", "string", True, "subject line"),
                    _p("body", "string", True, "message body")]},
    {"name": "list_messages", "description": "Chat inbox, oldest first, three per page. Needs a session.",
     "returns": "{page, last_page, items:[{from, to, text}]}", "parameters": [_PAGE]},
    {"name": "send_message", "description": "Send a chat message to a user. Needs a session.", "returns": "{sent, to}",
     "parameters": [_p("to", "string", True, "username"), _p("text", "string", True, "message text")]},
]

# ---------------------------------------------------------------- state

REPORT_HEAD = "Quarterly report: regional sales grew in every quarter."
NOTES_BODY = "Notes from the planning session: ship the beta on Friday and book the demo room."


def _report_text() -> str:
    regions = ["north", "south", "east", "west", "central"]
    lines = [REPORT_HEAD]
    for i in range(1, 181):
        r = regions[i % len(regions)]
        lines.append(f"Line {i}: the {r} region closed {40 + (i * 7) % 23} orders with steady margins.")
    return "\n".join(lines)


def initial_state() -> dict:
    songs = [
        (1, "Highway Lines", "rock"), (2, "Blue Smoke", "jazz"), (3, "Engine Heart", "rock"),
        (4, "Paper Moon", "pop"), (5, "Dust Devil", "rock"), (6, "Night Cafe", "jazz"),
        (7, "Open Road", "rock"), (8, "Slow Tide", "jazz"), (9, "Thunder Mile", "rock"),
        (10, "Neon Candy", "pop"),
    ]
    playlists = ["Morning", "Workout", "Focus", "Road Trip", "Sleep"]
    files = [
        ("budget.xlsx", "Q3 budget: travel 1200, tooling 800."),
        ("todo.txt", "Renew the domain. Water the plants."),
        ("old_draft.txt", "An outdated draft nobody needs."),
        ("report.txt", _report_text()),
        ("notes.txt", NOTES_BODY),
    ]
    messages = [
        ("carol", "Lunch moved to noon."),
        ("bob", "Status on the release?"),
        ("alice", "Thanks for the slides."),
        ("carol", "The venue changed to Pier 9."),
    ]
    return {
        "users": {
            "me": {"password": ME["password"], "email": "me@example.com"},
            "alice": {"password": "a1", "email": "alice@example.com"},
            "bob": {"password": "b2", "email": "bob@example.com"},
            "carol": {"password": "c3", "email": "carol@example.com"},
            "dave": {"password": "d4", "email": "dave@example.com"},
        },
        "songs": [{"id": i, "title": t, "genre": g} for i, t, g in songs],
        "playlists": [{"id": i, "name": n, "song_ids": []} for i, n in enumerate(playlists, 1)],
        "files": [{"id": i, "name": n, "content": c, "deleted": False} for i, (n, c) in enumerate(files, 1)],
        "messages": [{"from": f, "to": "me", "text": t} for f, t in messages],
        "sent_emails": [],
        "sent_messages": [],
    }


# ---------------------------------------------------------------- tasks and scripts


def _s(tool: str, thought: str, **args) -> dict:
    return {"tool": tool, "args": args, "thought": thought}


def _login(thought: str = "Sign in first.") -> dict:
    return _s("login", thought, **ME)


def _gate(step: dict, key: str, seq: list[str]) -> dict:
    return {**step, key: seq}


PAGED_SONGS = ["search_songs", "add_song_to_playlist"]

TASKS = [
    {"id": "T1", "text": "Add every rock song in the catalogue to my Road Trip playlist.",
     "goal": [{"type": "playlist_has_genre", "playlist": "Road Trip", "genre": "rock"}]},
    {"id": "T2", "text": "Email the file report.txt to alice@example.com.",
     "goal": [{"type": "email_sent", "to": "alice@example.com", "body_contains": "Quarterly report"}]},
    {"id": "T3", "text": "Send bob a chat message saying the meeting moved to 3pm.",
     "goal": [{"type": "message_sent", "to": "bob", "text_contains": "3pm"}]},
    {"id": "T4", "text": "Create a playlist called Chill containing every jazz song.",
     "goal": [{"type": "playlist_has_genre", "playlist": "Chill", "genre": "jazz"}]},
    {"id": "T5", "text": "Forward carol's latest chat message to dave.",
     "goal": [{"type": "message_sent", "to": "dave", "text_contains": "Pier 9"}]},
    {"id": "T6", "text": "Email the file notes.txt to bob@example.com.",
     "goal": [{"type": "email_sent", "to": "bob@example.com", "body_contains": "planning session"}]},
]


def _email_script(file_id: int, name: str, to: str, body: str) -> list[dict]:
    send = _s("send_email", f"Email {name} to {to}.", to=to, subject=name, body=body)
    return [
        _s("list_files", f"Look for {name}.", page=1),
        _s("list_files", f"{name} is not on the first page; try the next.", page=2),
        _s("read_file", f"Read {name}.", file_id=file_id),
        _gate(send, "skip_if_hint", ["login", "send_email"]),
        _login("Sending needs a session; sign in."),
        send,
    ]


SCRIPTS = {
    "T1": [
        _s("list_playlists", "Find the Road Trip playlist.", page=1),
        _s("list_playlists", "Road Trip is not on the first page.", page=2),
        _s("search_songs", "Find rock songs.", genre="rock", page=1),
        _s("add_song_to_playlist", "Add Highway Lines.", playlist_id=4, song_id=1),
        _s("add_song_to_playlist", "Add Engine Heart.", playlist_id=4, song_id=3),
        _s("add_song_to_playlist", "Add Dust Devil.", playlist_id=4, song_id=5),
        _gate(_s("search_songs", "There may be more pages of rock songs.", genre="rock", page=2), "only_if_hint", PAGED_SONGS),
        _gate(_s("add_song_to_playlist", "Add Open Road.", playlist_id=4, song_id=7), "only_if_hint", PAGED_SONGS),
        _gate(_s("add_song_to_playlist", "Add Thunder Mile.", playlist_id=4, song_id=9), "only_if_hint", PAGED_SONGS),
    ],
    "T2": _email_script(4, "report.txt", "alice@example.com", REPORT_HEAD),
    "T3": [
        _gate(_s("send_message", "Message bob.", to="bob", text="The meeting moved to 3pm."), "skip_if_hint", ["login", "send_message"]),
        _login("Messaging needs a session; sign in."),
        _s("send_message", "Message bob.", to="bob", text="The meeting moved to 3pm."),
    ],
    "T4": [
        _gate(_s("list_playlists", "Check whether Chill already exists.", page=1), "skip_if_hint", ["create_playlist"]),
        _gate(_s("list_playlists", "Check the second page too.", page=2), "skip_if_hint", ["create_playlist"]),
        _s("create_playlist", "Create Chill.", name="Chill"),
        _s("search_songs", "Find jazz songs.", genre="jazz", page=1),
        _s("add_song_to_playlist", "Add Blue Smoke.", playlist_id=6, song_id=2),
        _s("add_song_to_playlist", "Add Night Cafe.", playlist_id=6, song_id=6),
        _s("add_song_to_playlist", "Add Slow Tide.", playlist_id=6, song_id=8),
    ],
    "T5": [
        _gate(_s("list_messages", "Read the inbox.", page=1), "skip_if_hint", ["login", "list_messages"]),
        _login("The inbox needs a session; sign in."),
        _s("list_messages", "Read the inbox.", page=1),
        _s("list_messages", "The latest messages are on the next page.", page=2),
        _s("send_message", "Forward carol's message to dave.", to="dave", text="Fwd from carol: The venue changed to Pier 9."),
    ],
    "T6": _email_script(5, "notes.txt", "bob@example.com", NOTES_BODY),
}

# one probe per tool: what an explorer does when told to try that tool
PROBES = {
    "login": [_login("Try signing in.")],
    "list_playlists": [_s("list_playlists", "See what playlists exist.", page=1)],
    "search_songs": [_s("search_songs", "Browse pop songs.", genre="pop", page=1)],
    "add_song_to_playlist": [
        _s("list_playlists", "Pick a playlist.", page=1),
        _s("add_song_to_playlist", "Add Paper Moon to Morning.", playlist_id=1, song_id=4),
    ],
    "create_playlist": [_s("create_playlist", "Make a Party playlist.", name="Party")],
    "rename_playlist": [
        _s("list_playlists", "Find the Focus playlist.", page=1),
        _s("rename_playlist", "Rename Focus to Deep Focus.", playlist_id=3, name="Deep Focus"),
    ],
    "list_files": [_s("list_files", "See what files exist.", page=1)],
    "read_file": [_s("list_files", "Find a file.", page=1), _s("read_file", "Read todo.txt.", file_id=2)],
    "delete_file": [
        _login("Deleting needs a session."),
        _s("list_files", "Find old_draft.txt.", page=1),
        _s("delete_file", "Delete old_draft.txt.", file_id=3),
    ],
    "send_email": [_login(), _s("send_email", "Say hello to alice.", to="alice@example.com", subject="Hello", body="Hi Alice")],
    "list_messages": [_login(), _s("list_messages", "Read the inbox.", page=1)],
    "send_message": [_login(), _s("send_message", "Ping alice.", to="alice", text="Hi")],
}

SYNTH_TASKS = {
    "login": "Sign in to my account.",
    "list_playlists": "Show me my playlists.",
    "search_songs": "Find some pop songs.",
    "add_song_to_playlist": "Add Paper Moon to my Morning playlist.",
    "create_playlist": "Create a new playlist called Party.",
    "rename_playlist": "Rename the Focus playlist to Deep Focus.",
    "list_files": "List my files.",
    "read_file": "Open todo.txt and show me what it says.",
    "delete_file": "Delete the file old_draft.txt.",
    "send_email": "Email alice@example.com a short hello.",
    "list_messages": "Check my chat inbox.",
    "send_message": "Send alice a quick hi on chat.",
}

# ---------------------------------------------------------------- skills the mock "model" writes


def _skill(name: str, document: str, content: str, tools: list[str]) -> dict:
    return {"name": name, "document": document, "content": content, "tools": tools}


def _pager(call: str, match: str, target: str) -> str:
    return (
        f"page = 1\n{target} = None\nwhile {target} is None:\n"
        f"    result = {call}\n"
        f"    for item in result[\"items\"]:\n"
        f"        if {match}:\n"
        f"            {target} = item\n"
        f"    if page >= result[\"last_page\"]:\n"
        f"        break\n"
        f"    page += 1"
    )


COLLECT = _skill(
    "music collect songs of a genre",
    "Add all songs of a genre to a playlist, walking every page of search results. "
    "Parameters: genre: str, playlist_id: int. Outputs: added: list[int].",
    "added = []\npage = 1\nwhile True:\n"
    "    result = search_songs(genre=genre, page=page)\n"
    "    for song in result[\"items\"]:\n"
    "        add_song_to_playlist(playlist_id=playlist_id, song_id=song[\"id\"])\n"
    "        added.append(song[\"id\"])\n"
    "    if page >= result[\"last_page\"]:\n"
    "        break\n"
    "    page += 1",
    ["search_songs", "add_song_to_playlist"],
)
COLLECT_V2 = {**COLLECT, "content": COLLECT["content"] + "\n# one page is never the whole genre; stop only at last_page"}

SKILLS = {
    "collect": COLLECT,
    "create": _skill(
        "music create playlist",
        "Create a new playlist with a unique name. Parameters: name: str. Outputs: playlist_id: int.",
        "created = create_playlist(name=name)\nplaylist_id = created[\"id\"]",
        ["create_playlist"],
    ),
    "find_playlist": _skill(
        "music find playlist by name",
        "Page through the playlists until the one with a given name turns up. "
        "Parameters: name: str. Outputs: playlist: dict.",
        _pager("list_playlists(page=page)", 'item["name"] == name', "playlist"),
        ["list_playlists"],
    ),
    "find_file": _skill(
        "files find file by name",
        "Page through the files to find a file by its name. Parameters: name: str. Outputs: file: dict.",
        _pager("list_files(page=page)", 'item["name"] == name', "file"),
        ["list_files"],
    ),
    "mail_file": _skill(
        "mail send file contents by email",
        "Sign in, read a file and email the contents to an address. "
        "Parameters: username: str, password: str, file_id: int, address: str. Outputs: none.",
        "login(username=username, password=password)\n"
        "file = read_file(file_id=file_id)\n"
        "send_email(to=address, subject=file[\"name\"], body=file[\"content\"])",
        ["login", "read_file", "send_email"],
    ),
    "chat_send": _skill(
        "chat send direct message",
        "Sign in and send a direct chat message to a user. "
        "Parameters: username: str, password: str, recipient: str, text: str. Outputs: none.",
        "login(username=username, password=password)\nsend_message(to=recipient, text=text)",
        ["login", "send_message"],
    ),
    "chat_latest": _skill(
        "chat find latest message from sender",
        "Sign in and find the latest chat message from a sender, reading every inbox page. "
        "Parameters: username: str, password: str, sender: str. Outputs: message: dict.",
        "login(username=username, password=password)\nlatest = None\npage = 1\nwhile True:\n"
        "    result = list_messages(page=page)\n"
        "    for item in result[\"items\"]:\n"
        "        if item[\"from\"] == sender:\n"
        "            latest = item\n"
        "    if page >= result[\"last_page\"]:\n"
        "        break\n"
        "    page += 1",
        ["login", "list_messages"],
    ),
    "chat_forward": _skill(
        "chat forward message",
        "Forward the text of a chat message to another user. "
        "Parameters: message: dict, recipient: str. Outputs: none.",
        "send_message(to=recipient, text=\"Fwd from \" + message[\"from\"] + \": \" + message[\"text\"])",
        ["send_message"],
    ),
    # rejected by the static schema check: unknown parameter, missing required one
    "chat_forward_bad": _skill(
        "chat forward message quickly",
        "Forward a chat message in one call. Parameters: recipient: str, message_text: str. Outputs: none.",
        "send_message(recipient=recipient, text=message_text)",
        ["send_message"],
    ),
    # rejected by the portability review
    "http_helper": _skill(
        "chat http helper",
        "Post a chat payload straight to the backend over HTTP. Parameters: url: str, payload: dict. Outputs: dict.",
        "import requests\nresponse = requests.post(url, json=payload)",
        [],
    ),
    "delete_file": _skill(
        "files delete file by name",
        "Sign in, find a file by its name and delete it. "
        "Parameters: username: str, password: str, name: str. Outputs: none.",
        "login(username=username, password=password)\n"
        + _pager("list_files(page=page)", 'item["name"] == name', "file")
        + "\ndelete_file(file_id=file[\"id\"])",
        ["login", "list_files", "delete_file"],
    ),
    "rename_playlist": _skill(
        "music rename playlist",
        "Find a playlist by its current name and give it a new one. "
        "Parameters: old_name: str, new_name: str. Outputs: none.",
        _pager("list_playlists(page=page)", 'item["name"] == old_name', "playlist")
        + "\nrename_playlist(playlist_id=playlist[\"id\"], name=new_name)",
        ["list_playlists", "rename_playlist"],
    ),
}

_ATOMIC_DOCS = {
    "login": ("Opens a session; send_email, send_message, list_messages and delete_file fail until it succeeds. "
              "Parameters: username: str, password: str. Outputs: {logged_in: str}.",
              "login(username=username, password=password)"),
    "list_playlists": ("Lists playlists three per page; read last_page and request later pages. "
                       "Parameters: page: int (optional). Outputs: {page, last_page, items}.",
                       "result = list_playlists(page=page)"),
    "search_songs": ("Returns songs of one genre three per page; a genre can span several pages. "
                     "Parameters: genre: str, page: int (optional). Outputs: {page, last_page, items}.",
                     "result = search_songs(genre=genre, page=page)"),
    "add_song_to_playlist": ("Appends one song to a playlist; fails if the song is already there. "
                             "Parameters: playlist_id: int, song_id: int. Outputs: {playlist_id, song_count}.",
                             "add_song_to_playlist(playlist_id=playlist_id, song_id=song_id)"),
    "create_playlist": ("Creates an empty playlist; fails if the name is taken, so no lookup is needed first. "
                        "Parameters: name: str. Outputs: {id, name}.",
                        "created = create_playlist(name=name)"),
    "rename_playlist": ("Renames a playlist by id; the new name must be unused. "
                        "Parameters: playlist_id: int, name: str. Outputs: {id, name}.",
                        "rename_playlist(playlist_id=playlist_id, name=new_name)"),
    "list_files": ("Lists files three per page; a file may sit on a later page. "
                   "Parameters: page: int (optional). Outputs: {page, last_page, items}.",
                   "result = list_files(page=page)"),
    "read_file": ("Reads a file by id; large files return long content. "
                  "Parameters: file_id: int. Outputs: {id, name, content}.",
                  "file = read_file(file_id=file_id)"),
    "delete_file": ("Deletes a file by id; needs a session from login. Parameters: file_id: int. Outputs: {deleted}.",
                    "login(username=username, password=password)\ndelete_file(file_id=file_id)"),
    "send_email": ("Sends an email; needs a session from login and a full address in to. "
                   "Parameters: to: str, subject: str, body: str. Outputs: {sent, to}.",
                   "login(username=username, password=password)\nsend_email(to=address, subject=subject, body=body)"),
    "list_messages": ("Chat inbox oldest first, three per page; needs a session from login. "
                      "Parameters: page: int (optional). Outputs: {page, last_page, items}.",
                      "login(username=username, password=password)\nresult = list_messages(page=page)"),
    "send_message": ("Sends a chat message to a username; needs a session from login. "
                     "Parameters: to: str, text: str. Outputs: {sent, to}.",
                     "login(username=username, password=password)\nsend_message(to=recipient, text=text)"),
}


def atomic_skill(tool: str) -> dict:
    doc, content = _ATOMIC_DOCS[tool]
    deps = ["login"] if content.startswith("login(") and tool != "login" else []
    return _skill(tool, doc, content, deps + [tool])


# ---------------------------------------------------------------- plans


def _plan(*steps: tuple[str, list[str]]) -> str:
    lines = [f"# step {i}: {goal}; apis: {', '.join(apis)}" for i, (goal, apis) in enumerate(steps, 1)]
    return "<plan>\n" + "\n".join(lines) + "\n</plan>"


STEP = {
    "find_playlist": ("locate the target playlist by paging through playlists", ["list_playlists"]),
    "collect": ("add every song of the genre across all result pages", ["search_songs", "add_song_to_playlist"]),
    "find_file": ("locate the file by paging through the file list", ["list_files"]),
    "mail_file": ("sign in, read the file and email its contents", ["login", "read_file", "send_email"]),
    "prepare_chat": ("prepare the chat client", ["login"]),
    "chat_send": ("sign in and send the direct message", ["login", "send_message"]),
    "create": ("create the new playlist", ["create_playlist"]),
    "chat_latest": ("sign in and find the latest message from the sender", ["login", "list_messages"]),
    "chat_forward": ("forward the message text to the recipient", ["send_message"]),
    "delete_file": ("sign in, find the file by name and delete it", ["login", "list_files", "delete_file"]),
    "rename_playlist": ("find the playlist and rename it", ["list_playlists", "rename_playlist"]),
}

EXTRACTED_PLANS = {
    "T1": ["find_playlist", "collect"],
    "T2": ["find_file", "mail_file"],
    "T3": ["prepare_chat", "chat_send"],
    "T4": ["create", "collect"],
    "T5": ["chat_latest", "chat_forward"],
    "T6": ["find_file", "mail_file"],
    SYNTH_TASKS["delete_file"]: ["delete_file"],
    SYNTH_TASKS["rename_playlist"]: ["rename_playlist"],
}

# what the mock returns for each plan step during functional extraction
STEP_UPDATES = {
    "find_playlist": [("add", "find_playlist")],
    "collect": [("add", "collect")],
    "find_file": [("add", "find_file")],
    "mail_file": [("add", "mail_file")],
    "prepare_chat": [("add", "http_helper")],
    "chat_send": [("add", "chat_send")],
    "create": [("add", "create")],
    "chat_latest": [("add", "chat_latest")],
    "chat_forward": [("add", "chat_forward"), ("add", "chat_forward_bad")],
    "delete_file": [("add", "delete_file")],
    "rename_playlist": [("add", "rename_playlist")],
}

# pseudo-plans the mock drafts at retrieval time (never shown to the agent)
REWRITES = {
    "T1": [("page through the playlists until the Road Trip playlist turns up", ["list_playlists"]),
           ("add all rock songs to it, walking every page of search results", ["search_songs", "add_song_to_playlist"])],
    "T2": [("page through the files to find report.txt", ["list_files"]),
           ("sign in, read report.txt and email the contents to alice", ["login", "read_file", "send_email"])],
    "T3": [("sign in and send bob a direct chat message about 3pm", ["login", "send_message"])],
    "T4": [("create a new playlist named Chill", ["create_playlist"]),
           ("add all jazz songs to it, walking every page of search results", ["search_songs", "add_song_to_playlist"])],
    "T5": [("sign in and find the latest chat message from carol", ["login", "list_messages"]),
           ("forward that message text to dave as a direct chat message", ["send_message"])],
    "T6": [("page through the files to find notes.txt", ["list_files"]),
           ("sign in, read notes.txt and email the contents to bob", ["login", "read_file", "send_email"])],
}


def _fenced(updates: list[dict]) -> str:
    return "```json\n" + json.dumps(updates, indent=2) + "\n```"


def _step_line(i: int, key: str) -> str:
    goal, apis = STEP[key]
    return f"# step {i}: {goal}; apis: {', '.join(apis)}"


def mock_table() -> dict:
    m = {name: system_marker(name) for name in (
        "plan_extract", "functional_extract", "atomic_extract", "merge", "general_filter",
        "tool_schema_filter", "tool_summary", "rewrite", "task_synthesis")}
    task_text = {t["id"]: t["text"] for t in TASKS}
    rules: list[dict] = []

    def rule(note: str, all_of: list[str], reply: str) -> None:
        rules.append({"note": note, "all_of": all_of, "reply": reply})

    # plans: keyed by the task text
    for key, steps in EXTRACTED_PLANS.items():
        text = task_text.get(key, key)
        rule(f"plan for {text}", [m["plan_extract"], f"User task: {text}\n"], _plan(*(STEP[s] for s in steps)))

    # functional skills: keyed by the plan step; the collect step improves its skill once it exists
    seen_lines: set[str] = set()
    for steps in EXTRACTED_PLANS.values():
        for i, key in enumerate(steps, 1):
            line = _step_line(i, key)
            if line in seen_lines:
                continue
            seen_lines.add(line)
            if key == "collect":
                rule("refine the paging skill once it is in the library",
                     [m["functional_extract"], f"Specific-step: {line}", f'"name": "{COLLECT["name"]}"'],
                     _fenced([{"option": "modify", "skill": COLLECT_V2, "modified_from": COLLECT["name"]}]))
            ups = [{"option": op, "skill": SKILLS[s]} for op, s in STEP_UPDATES[key]]
            rule(f"functional skill for '{line}'", [m["functional_extract"], f"Specific-step: {line}"], _fenced(ups))

    # atomic skills: one per tool
    for tool in sorted(_ATOMIC_DOCS):
        rule(f"atomic skill for {tool}", [m["atomic_extract"], f"Specific-Tool: {tool}\n"],
             _fenced([{"option": "add", "skill": atomic_skill(tool)}]))

    # merges of repeated extractions; the improved paging skill must win over the original
    rule("merge copies of the improved paging skill", [m["merge"], "stop only at last_page"],
         "<skill>\n" + json.dumps([COLLECT_V2], indent=2) + "\n</skill>")
    merged = [SKILLS[k] for k in ("find_file", "mail_file", "collect", "create", "chat_send", "chat_latest",
                                   "chat_forward", "find_playlist", "delete_file", "rename_playlist")]
    merged += [atomic_skill(t) for t in sorted(_ATOMIC_DOCS)]
    for s in merged:
        rule(f"merge copies of '{s['name']}'", [m["merge"], f'"name": "{s["name"]}"'],
             "<skill>\n" + json.dumps([s], indent=2) + "\n</skill>")

    rule("the HTTP helper is not portable", [m["general_filter"], '"name": "chat http helper"'], "bad")
    rule("everything else is portable", [m["general_filter"]], "Good.")
    rule("schema audit", [m["tool_schema_filter"]], "Calls match the declared parameters.\n<answer>correct</answer>")
    rule("long feedback", [m["tool_summary"]],
         "<feedback>read_file returned report.txt: a quarterly report, regional sales grew in every quarter.</feedback>")

    for tid, steps in REWRITES.items():
        rule(f"pseudo-plan for {tid}", [m["rewrite"], f"New task: {task_text[tid]}\n"], _plan(*steps))

    for tool, text in sorted(SYNTH_TASKS.items()):
        rule(f"task written from a {tool} probe", [m["task_synthesis"], f"Exploration target: {tool}\n"],
             f"<task>\n{text}\n</task>")
    return {"fallback": "echo", "rules": rules}


def fixture() -> dict:
    return {
        "name": "toy-suite",
        "tools": TOOLS,
        "initial_state": initial_state(),
        "tasks": TASKS,
        "scripts": SCRIPTS,
        "probes": PROBES,
    }


def pipeline_config() -> dict:
    return {
        "world": "world.json",
        "schemas": "schemas.json",
        "tasks": "tasks.jsonl",
        "mock_table": "mock_table.json",
        "seed": 0,
        "jobs": 1,
        "rounds": 3,
    }


def render_files() -> dict[str, str]:
    from ..trajectory import Task

    tasks = "".join(
        json.dumps(Task(t["id"], t["text"]).to_dict(), sort_keys=True, separators=(",", ":")) + "\n" for t in TASKS
    )
    return {
        "world.json": canonical_json(fixture()),
        "schemas.json": canonical_json({"tools": sorted(TOOLS, key=lambda t: t["name"])}),
        "tasks.jsonl": tasks,
        "mock_table.json": canonical_json(mock_table()),
        "config.json": canonical_json(pipeline_config()),
    }


def write_data(directory: str | Path) -> list[Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    out = []
    for name, text in render_files().items():
        path = d / name
        path.write_text(text, encoding="utf-8")
        out.append(path)
    return out


if __name__ == "__main__":
    target = sys.argv[1] if len(sys.argv) > 1 else str(Path(__file__).parent / "data")
    for p in write_data(target):
        print(p)
