"""Skill bundle loading, validation, and byte-exact writing.

Layout on disk: ``<root>/SKILL.md`` (optional frontmatter + markdown body),
``<root>/skill.json`` (optional sidecar, takes precedence for metadata),
``<root>/scripts/*`` plus any script referenced from the instruction text.
All provenance is byte-offset based so later edits can be projected back.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import IoFailure, MalformedFrontmatter, MissingMetadata, PathEscape
from . import slots

SKILL_MD = "SKILL.md"
SIDECAR = "skill.json"
SCRIPTS_DIR = "scripts"

_HEADING_RE = re.compile(r"^(#{1,6})[ \t]+(.+?)\s*$", re.M)
_SCRIPT_REF_RE = re.compile(r"(?:\.\./|/)?(?:[\w.-]+/)*[\w.-]+\.(?:py|sh|bash)\b")
_SHEBANG_PY = re.compile(r"^#!.*\bpython[0-9.]*\b")
_SHEBANG_SH = re.compile(r"^#!.*\b(?:sh|bash|zsh|dash)\b")


@dataclass(frozen=True)
class SkillMetadata:
    name: str
    description: str = ""
    use_when: str | None = None
    extra: dict[str, str] = field(default_factory=dict)
    field_order: tuple[str, ...] = ()


@dataclass(frozen=True)
class Section:
    heading: str
    body_span: tuple[int, int]


@dataclass(frozen=True)
class InstructionDoc:
    raw_text: str
    sections: tuple[Section, ...] = ()

    def body(self, section: Section) -> str:
        start, end = section.body_span
        return self.raw_text[start:end]

    def check_spans(self) -> None:
        prev_end = 0
        for s in self.sections:
            start, end = s.body_span
            if not (0 <= start <= end <= len(self.raw_text)):
                raise ValueError(f"section span {s.body_span} outside raw_text")
            if start < prev_end:
                raise ValueError("section spans overlap or are out of order")
            prev_end = end


@dataclass(frozen=True)
class ScriptArtifact:
    relative_path: str
    language_hint: str  # python | shell | other
    source: str


@dataclass(frozen=True)
class Provenance:
    artifact: str  # "instruction" | "script:<relpath>" | "metadata"
    byte_range: tuple[int, int]
    excerpt: str


@dataclass(frozen=True)
class SkillBundle:
    root_path: Path
    metadata: SkillMetadata
    instruction_doc: InstructionDoc
    scripts: tuple[ScriptArtifact, ...]
    resources: tuple[tuple[str, bytes], ...] = ()
    skill_md_preamble: str = ""     # verbatim frontmatter block, if any
    sidecar_raw: bytes | None = None
    had_skill_md: bool = True

    def script(self, relative_path: str) -> ScriptArtifact | None:
        for s in self.scripts:
            if s.relative_path == relative_path:
                return s
        return None

    def artifact_text(self, artifact: str) -> str:
        """Text an ``artifact`` key refers to, for provenance re-slicing."""
        if artifact == "instruction":
            return self.instruction_doc.raw_text
        if artifact.startswith("script:"):
            s = self.script(artifact.split(":", 1)[1])
            if s is None:
                raise KeyError(artifact)
            return s.source
        if artifact == "metadata":
            return serialize_frontmatter(self.metadata)
        raise KeyError(artifact)

    def with_instruction_text(self, raw_text: str) -> "SkillBundle":
        return replace(self, instruction_doc=parse_instruction_doc(raw_text))

    def with_script_source(self, relative_path: str, source: str) -> "SkillBundle":
        scripts = tuple(
            replace(s, source=source) if s.relative_path == relative_path else s
            for s in self.scripts
        )
        return replace(self, scripts=scripts)

    def with_new_script(self, relative_path: str, source: str) -> "SkillBundle":
        hint = _language_hint(relative_path, source)
        scripts = self.scripts + (ScriptArtifact(relative_path, hint, source),)
        return replace(self, scripts=scripts)


@dataclass(frozen=True)
class SkillProfile:
    """Declared functionality summary used as the screening reference."""

    name: str
    description: str
    use_when: str | None
    summary: str
    headings: tuple[str, ...] = ()

    def declared_stems(self) -> frozenset[str]:
        parts = [self.name, self.description, self.use_when or ""]
        parts.extend(self.headings)
        return frozenset(s for p in parts for s in slots.stems(p))


def parse_frontmatter(text: str) -> tuple[dict[str, str], tuple[str, ...], int]:
    """Parse a leading ``---`` block; returns (fields, key order, preamble length)."""
    if not text.startswith("---\n") and text != "---":
        return {}, (), 0
    m = re.search(r"\n---[ \t]*(\n|$)", text[3:])
    if m is None:
        raise MalformedFrontmatter("frontmatter opened with '---' but never closed")
    end = 3 + m.start()
    body = text[4:end]
    close = 3 + m.end()
    fields: dict[str, str] = {}
    order: list[str] = []
    for line in body.split("\n"):
        if not line.strip():
            continue
        if ":" not in line:
            raise MalformedFrontmatter(f"frontmatter line without ':': {line!r}")
        key, _, value = line.partition(":")
        key = key.strip()
        value = value.strip()
        if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
            value = value[1:-1]
        fields[key] = value
        order.append(key)
    return fields, tuple(order), close


def metadata_from_fields(fields: dict[str, str], order: tuple[str, ...]) -> SkillMetadata:
    name = fields.get("name", "")
    if not name:
        raise MissingMetadata("bundle metadata has no name")
    extra = {k: v for k, v in fields.items() if k not in ("name", "description", "use_when")}
    return SkillMetadata(
        name=name,
        description=fields.get("description", ""),
        use_when=fields.get("use_when"),
        extra=extra,
        field_order=order or tuple(fields),
    )


def serialize_frontmatter(md: SkillMetadata) -> str:
    known = {"name": md.name, "description": md.description, "use_when": md.use_when}
    order = md.field_order or ("name", "description", "use_when")
    lines = ["---"]
    for key in order:
        value = known[key] if key in known else md.extra.get(key)
        if value is None:
            continue
        lines.append(f"{key}: {value}")
    lines.append("---")
    return "\n".join(lines) + "\n"


def parse_metadata(text: str) -> SkillMetadata:
    fields, order, _ = parse_frontmatter(text)
    return metadata_from_fields(fields, order)


def parse_instruction_doc(raw_text: str) -> InstructionDoc:
    sections: list[Section] = []
    matches = list(_HEADING_RE.finditer(raw_text))
    if matches and matches[0].start() > 0:
        lead = raw_text[: matches[0].start()]
        if lead.strip():
            sections.append(Section("", (0, matches[0].start())))
    if not matches:
        if raw_text.strip():
            sections.append(Section("", (0, len(raw_text))))
        return InstructionDoc(raw_text=raw_text, sections=tuple(sections))
    for i, m in enumerate(matches):
        body_start = m.end()
        if body_start < len(raw_text) and raw_text[body_start] == "\n":
            body_start += 1
        body_end = matches[i + 1].start() if i + 1 < len(matches) else len(raw_text)
        sections.append(Section(m.group(2), (body_start, body_end)))
    doc = InstructionDoc(raw_text=raw_text, sections=tuple(sections))
    doc.check_spans()
    return doc


def _language_hint(path: str, source: str) -> str:
    suffix = Path(path).suffix.lower()
    if suffix == ".py":
        return "python"
    if suffix in (".sh", ".bash"):
        return "shell"
    first = source.split("\n", 1)[0]
    if _SHEBANG_PY.match(first):
        return "python"
    if _SHEBANG_SH.match(first):
        return "shell"
    return "other"


def referenced_script_paths(raw_text: str) -> list[str]:
    """Path-like tokens in the instruction text, in order of first mention."""
    seen: list[str] = []
    for m in _SCRIPT_REF_RE.finditer(raw_text):
        p = m.group(0)
        if p not in seen:
            seen.append(p)
    return seen


def load_bundle(path: str | Path) -> SkillBundle:
    root = Path(path)
    if not root.is_dir():
        raise IoFailure(f"bundle root is not a directory: {root}")

    skill_md = root / SKILL_MD
    had_skill_md = skill_md.is_file()
    preamble = ""
    fm_fields: dict[str, str] = {}
    fm_order: tuple[str, ...] = ()
    raw_body = ""
    if had_skill_md:
        try:
            text = skill_md.read_bytes().decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedFrontmatter(f"{SKILL_MD} is not valid UTF-8") from exc
        fm_fields, fm_order, preamble_len = parse_frontmatter(text)
        preamble = text[:preamble_len]
        raw_body = text[preamble_len:]

    sidecar_raw: bytes | None = None
    sidecar_path = root / SIDECAR
    if sidecar_path.is_file():
        sidecar_raw = sidecar_path.read_bytes()
        try:
            data = json.loads(sidecar_raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise MalformedFrontmatter(f"{SIDECAR} is not valid JSON") from exc
        fields = {k: str(v) for k, v in data.items()}
        metadata = metadata_from_fields(fields, tuple(data))
    else:
        metadata = metadata_from_fields(fm_fields, fm_order)

    doc = parse_instruction_doc(raw_body)

    script_paths: list[str] = []
    scripts_dir = root / SCRIPTS_DIR
    if scripts_dir.is_dir():
        for p in sorted(scripts_dir.rglob("*")):
            if p.is_file():
                script_paths.append(p.relative_to(root).as_posix())
    for ref in referenced_script_paths(raw_body):
        resolved = (root / ref).resolve()
        try:
            rel = resolved.relative_to(root.resolve())
        except ValueError:
            raise PathEscape(f"instruction references a script outside the bundle: {ref}")
        if resolved.is_file():
            relpath = rel.as_posix()
            if relpath not in script_paths:
                script_paths.append(relpath)

    scripts: list[ScriptArtifact] = []
    script_set: set[str] = set()
    resources: list[tuple[str, bytes]] = []
    for relpath in sorted(script_paths):
        data = (root / relpath).read_bytes()
        try:
            source = data.decode("utf-8")
        except UnicodeDecodeError:
            resources.append((relpath, data))
            continue
        scripts.append(ScriptArtifact(relpath, _language_hint(relpath, source), source))
        script_set.add(relpath)

    for p in sorted(root.rglob("*")):
        if not p.is_file():
            continue
        rel = p.relative_to(root).as_posix()
        if rel in (SKILL_MD, SIDECAR) or rel in script_set:
            continue
        if any(rel == r[0] for r in resources):
            continue
        resources.append((rel, p.read_bytes()))
    resources.sort(key=lambda r: r[0])

    return SkillBundle(
        root_path=root,
        metadata=metadata,
        instruction_doc=doc,
        scripts=tuple(scripts),
        resources=tuple(resources),
        skill_md_preamble=preamble,
        sidecar_raw=sidecar_raw,
        had_skill_md=had_skill_md,
    )


def write_bundle(bundle: SkillBundle, out: str | Path) -> None:
    """Mirror the bundle's layout under ``out``; untouched artifacts stay byte-identical."""
    root = Path(out)
    try:
        root.mkdir(parents=True, exist_ok=True)
        if bundle.had_skill_md or bundle.skill_md_preamble or bundle.instruction_doc.raw_text:
            text = bundle.skill_md_preamble + bundle.instruction_doc.raw_text
            (root / SKILL_MD).write_bytes(text.encode("utf-8"))
        if bundle.sidecar_raw is not None:
            (root / SIDECAR).write_bytes(bundle.sidecar_raw)
        for script in bundle.scripts:
            target = root / script.relative_path
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_bytes(script.source.encode("utf-8"))
        for relpath, data in bundle.resources:
            target = root / relpath
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_bytes(data)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def derive_profile(bundle: SkillBundle, summary_budget: int = 400) -> SkillProfile:
    """Deterministic declared-functionality profile for screening and prompts."""
    doc = bundle.instruction_doc
    pieces: list[str] = []
    used = 0
    for section in doc.sections:
        body = " ".join(doc.body(section).split())
        if not body:
            continue
        take = body[: max(0, summary_budget - used)]
        if take:
            pieces.append(take)
            used += len(take)
        if used >= summary_budget:
            break
    return SkillProfile(
        name=bundle.metadata.name,
        description=bundle.metadata.description,
        use_when=bundle.metadata.use_when,
        summary=" ".join(pieces),
        headings=tuple(s.heading for s in doc.sections if s.heading),
    )
