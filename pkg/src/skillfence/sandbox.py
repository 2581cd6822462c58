"""Hermetic per-run sandbox: workspace files, captured sends, canned commands.

Layout under the run root: ``workspace/`` holds fixture files and skill
outputs, ``outbox.jsonl`` captures every outbound message, ``trace.jsonl``
stores the recorded execution trace. Nothing ever touches the real network;
filesystem effects outside the workspace are simulated, never performed.
"""

from __future__ import annotations

import json
from pathlib import Path

from .errors import SandboxViolation
from . import slots

_EXEC_STUBS: tuple[tuple[str, str], ...] = (
    ("git log", "c2 Add analysis module\nc1 Initial commit"),
    ("git diff", "--- a/src/main.py\n+++ b/src/main.py\n+print('ok')"),
    ("git status", "On branch main\nnothing to commit"),
    ("ls", "README.md\ndata"),
)


class Sandbox:
    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        self.workspace = self.root / "workspace"
        self.workspace.mkdir(parents=True, exist_ok=True)
        self.outbox_path = self.root / "outbox.jsonl"
        self.trace_path = self.root / "trace.jsonl"
        self.outbox: list[dict] = []

    def _resolve(self, relpath: str) -> Path:
        p = (self.workspace / relpath).resolve()
        if not str(p).startswith(str(self.workspace.resolve())):
            raise SandboxViolation(f"path escapes workspace: {relpath}")
        return p

    @staticmethod
    def _is_external_path(text: str) -> bool:
        t = text.strip()
        return t.startswith(("/", "~", "$")) or ".." in t or t[1:3] == ":\\"

    def materialize(self, files: tuple[tuple[str, bytes], ...]) -> None:
        for relpath, data in files:
            if self._is_external_path(relpath):
                raise SandboxViolation(f"fixture path escapes workspace: {relpath}")
            target = self._resolve(relpath)
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_bytes(data)

    def read_matching(self, obj_phrase: str) -> tuple[str | None, str]:
        """Content of the workspace file best matching the object tokens.

        Falls back to a deterministic symbolic marker when nothing matches,
        so reads of objects outside the sandbox never touch the host.
        """
        want = slots.stems(obj_phrase) | set(slots.alnum_tokens(obj_phrase))
        best: tuple[int, str] | None = None
        for p in sorted(self.workspace.rglob("*")):
            if not p.is_file():
                continue
            rel = p.relative_to(self.workspace).as_posix()
            have = set(slots.alnum_tokens(rel)) | slots.stems(rel.replace("/", " "))
            score = len(want & have)
            if score > 0 and (best is None or score > best[0]):
                best = (score, rel)
        if best is None:
            return None, f"<{' '.join(sorted(want)) or 'empty'}>"
        rel = best[1]
        try:
            return rel, self._resolve(rel).read_text(encoding="utf-8")
        except UnicodeDecodeError:
            return rel, f"<binary {rel}>"

    def write_file(self, name: str, content: str) -> str | None:
        if self._is_external_path(name):
            return None  # simulated: outside-workspace writes never happen
        target = self._resolve(name)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(content, encoding="utf-8")
        return target.relative_to(self.workspace).as_posix()

    def delete_file(self, name: str) -> str | None:
        if self._is_external_path(name):
            return None  # simulated
        target = self._resolve(name)
        if target.is_file():
            target.unlink()
            return target.relative_to(self.workspace).as_posix()
        return None

    def send(self, dest: str, payload: str) -> None:
        entry = {"dest": dest, "payload": payload[:400]}
        self.outbox.append(entry)
        with open(self.outbox_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")

    def exec_command(self, command: str) -> str:
        cmd = " ".join(command.split())
        for prefix, output in _EXEC_STUBS:
            if cmd.startswith(prefix):
                return output
        return f"<executed: {cmd[:60]}>"

    def write_trace(self, steps: list[dict]) -> None:
        with open(self.trace_path, "w", encoding="utf-8") as fh:
            for step in steps:
                fh.write(json.dumps(step, sort_keys=True) + "\n")
