"""Shared slot grammar: verbs, objects, destinations, conditions, descriptors.

One grammar serves instruction parsing, prompt-to-descriptor extraction, and
guard-condition evaluation, so the same phrasing always normalizes the same
way everywhere in the pipeline.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

# Canonical operation vocabulary. Anything not mapped here becomes other(<verb>).
CANONICAL_OPS = (
    "read",
    "write",
    "send",
    "receive",
    "exec",
    "delete",
    "collect",
    "generate",
    "transform",
)

VERB_CANON: dict[str, str] = {
    "read": "read", "load": "read", "open": "read", "view": "read",
    "inspect": "read", "parse": "read", "scan": "read", "check": "read",
    "cat": "read", "review": "read", "examine": "read", "list": "read",
    "write": "write", "save": "write", "store": "write", "append": "write",
    "record": "write", "log": "write",
    "send": "send", "sync": "send", "synchronize": "send", "upload": "send",
    "post": "send", "transmit": "send", "share": "send", "publish": "send",
    "submit": "send", "email": "send", "push": "send", "forward": "send",
    "exfiltrate": "send",
    "receive": "receive", "download": "receive", "fetch": "receive",
    "pull": "receive", "retrieve": "receive",
    "exec": "exec", "execute": "exec", "run": "exec", "invoke": "exec",
    "launch": "exec", "spawn": "exec", "call": "exec",
    "delete": "delete", "remove": "delete", "erase": "delete", "rm": "delete",
    "purge": "delete", "wipe": "delete", "clear": "delete",
    "collect": "collect", "gather": "collect", "harvest": "collect",
    "aggregate": "collect", "capture": "collect", "enumerate": "collect",
    "generate": "generate", "create": "generate", "produce": "generate",
    "build": "generate", "compute": "generate", "render": "generate",
    "make": "generate", "compile": "generate", "prepare": "generate",
    "show": "generate", "display": "generate", "visualize": "generate",
    "plot": "generate", "draw": "generate", "present": "generate",
    "transform": "transform", "convert": "transform", "format": "transform",
    "normalize": "transform", "summarize": "transform", "summarise": "transform",
    "analyze": "transform", "analyse": "transform", "process": "transform",
}

# Artifact nouns folded to one canonical object head.
OBJ_CANON: dict[str, str] = {
    "heatmap": "report",
    "chart": "report",
    "graph": "report",
    "visualization": "report",
    "dashboard": "report",
}

INTENT_NOUN: dict[str, str] = {
    "generate": "generation",
    "transform": "transformation",
    "send": "synchronization",
    "receive": "retrieval",
    "read": "inspection",
    "collect": "collection",
    "exec": "execution",
    "write": "recording",
    "delete": "removal",
}

# Ops whose presence in a prompt counts as an explicit side-effect request.
SIDE_EFFECT_OPS = frozenset({"send", "exec", "delete", "write", "collect", "receive"})

# Object tokens (stemmed) that mark sensitive data for privilege typing.
SECRET_STEMS = frozenset({
    "key", "secret", "credential", "env", "environment", "history",
    "ssh", "token", "password", "passwd", "shadow", "private", "cookie",
})

# Objects too generic to pin a guard on; they match any concrete object.
GENERIC_OBJECTS = frozenset({
    "result", "results", "output", "outputs", "data", "content",
    "information", "everything", "it", "them",
})

PLATFORMS = frozenset({
    "telegram", "slack", "discord", "email", "gmail", "webhook", "dropbox",
    "github", "gitlab", "s3", "pastebin", "twitter",
})

ARTICLES = frozenset({
    "the", "a", "an", "my", "your", "our", "their", "his", "her", "its",
    "this", "that", "these", "those", "some", "all", "any", "each", "every",
})

PREPOSITIONS = frozenset({
    "for", "from", "in", "of", "on", "with", "about", "into", "under",
    "over", "across", "during", "within", "via", "using", "against",
})

DEST_MARKERS = ("to", "into", "onto", "towards", "toward")

STOPWORDS = ARTICLES | PREPOSITIONS | frozenset({
    "and", "or", "but", "then", "also", "to", "is", "are", "be", "was",
    "were", "as", "at", "by", "it", "them", "if", "when", "unless", "only",
    "not", "no", "do", "does", "please", "should", "must", "will", "can",
})

# Resource-kind terms shared with fixture selection; order fixes precedence.
RESOURCE_TERMS: tuple[tuple[str, frozenset[str]], ...] = (
    ("repo", frozenset({"repo", "repository", "commit", "commits", "branch",
                        "git", "diff", "diffs"})),
    ("file", frozenset({"file", "files", "csv", "json", "txt", "dataset",
                        "records", "record", "rows"})),
    ("document", frozenset({"document", "documents", "doc", "docx", "pdf",
                            "markdown", "note", "notes"})),
    ("image", frozenset({"image", "images", "png", "jpg", "jpeg", "photo",
                         "picture", "screenshot"})),
    ("config_api", frozenset({"config", "configuration", "endpoint", "api",
                              "settings", "webhook"})),
)

UNSUPPORTED_RESOURCE_STEMS = frozenset({
    "database", "sql", "postgres", "mysql", "sqlite", "mongodb", "oauth",
})

_WORD_RE = re.compile(r"[A-Za-z0-9_.$/~:]+")
_ALNUM_RE = re.compile(r"[a-z0-9]+")
_URL_RE = re.compile(r"(?:[a-z][a-z0-9+.-]*://\S+|www\.\S+|\b[\w-]+\.(?:com|org|net|io|dev)\b)", re.I)

_CONDITION_RE = re.compile(r"^\s*(only\s+if|if|whenever|when|unless)\b\s*", re.I)
_USER_REQUEST_RE = re.compile(
    r"(?:the\s+)?user\s+(?:explicitly\s+)?(?:asks?|requests?|wants?|instructs?|requires?)",
    re.I,
)
_ALLOW_FLAG_RE = re.compile(r"allow_([a-z0-9]+)_([a-z0-9_]+)", re.I)


def tokenize(text: str) -> list[str]:
    return [w.lower() for w in _WORD_RE.findall(text)]


def alnum_tokens(text: str) -> list[str]:
    """Lowercase alphanumeric runs; splits URLs and dotted names apart."""
    return _ALNUM_RE.findall(text.lower())


def stem(word: str) -> str:
    w = word.lower()
    for suffix in ("ing", "ed", "es", "s"):
        if len(w) > 4 and w.endswith(suffix):
            return w[: -len(suffix)]
    return w


def stems(text: str) -> set[str]:
    """Stemmed content tokens; stopwords and single letters are dropped."""
    return {
        stem(w)
        for w in tokenize(text)
        if w not in STOPWORDS and len(w) > 1
    }


def canonical_verb(word: str) -> str | None:
    """Map a surface verb to a canonical op, trying a light stem fallback."""
    w = word.lower().strip()
    if w in VERB_CANON:
        return VERB_CANON[w]
    base = stem(w)
    return VERB_CANON.get(base)


def op_string(raw_verb: str) -> str:
    """Canonical op for a verb, or the tagged fallback other(<verb>)."""
    canon = canonical_verb(raw_verb)
    return canon if canon is not None else f"other({raw_verb.lower()})"


def op_kind(op: str) -> str:
    """Base kind of an op string: 'send' or 'other' for 'other(sync)'."""
    return "other" if op.startswith("other(") else op


@dataclass(frozen=True)
class ActionPhrase:
    """One parsed action clause."""

    raw_verb: str
    op: str
    obj_phrase: str
    obj: str          # normalized underscore form, e.g. environment_files
    head_obj: str     # canonical head noun, e.g. report
    dest_phrase: str | None
    dest: str | None  # normalized destination, e.g. telegram

    def obj_stems(self) -> set[str]:
        out = stems(self.obj_phrase)
        if self.dest_phrase:
            out |= stems(self.dest_phrase)
        return out


def _strip_adverbs(words: list[str]) -> list[str]:
    while words and words[-1].endswith("ly"):
        words = words[:-1]
    return words


def normalize_obj_phrase(phrase: str) -> tuple[str, str]:
    """Return (normalized_obj, head_obj) for an object phrase."""
    words = [w for w in tokenize(phrase) if w not in ARTICLES]
    cut = len(words)
    for i, w in enumerate(words):
        if w in PREPOSITIONS:
            cut = i
            break
    words = _strip_adverbs(words[:cut]) or _strip_adverbs(words) or words
    if not words:
        return "", ""
    kept = [w for w in words if w != "and"]
    normalized = "_".join(kept[-4:]) if kept else ""
    head = kept[-1] if kept else ""
    head = OBJ_CANON.get(head, OBJ_CANON.get(stem(head), head))
    return normalized, head


def normalize_destination(phrase: str) -> str:
    """Reduce a destination phrase to a platform name, URL, or head noun."""
    url = _URL_RE.search(phrase)
    for tok in alnum_tokens(phrase):
        if tok in PLATFORMS:
            return tok
    if url:
        return url.group(0).lower().rstrip(".,;")
    _, head = normalize_obj_phrase(phrase)
    return head or phrase.strip().lower()


def is_endpoint_literal(text: str) -> bool:
    return bool(_URL_RE.search(text)) or any(t in PLATFORMS for t in alnum_tokens(text))


def split_sentences(text: str) -> list[tuple[int, int]]:
    """Byte spans of sentences within text (split on . ! ? followed by space/EOL)."""
    spans: list[tuple[int, int]] = []
    start = 0
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch in ".!?" and (i + 1 >= n or text[i + 1] in " \t\n"):
            seg = text[start: i + 1]
            if seg.strip():
                spans.append((start + _lead_ws(seg), i + 1))
            start = i + 1
        i += 1
    tail = text[start:]
    if tail.strip():
        spans.append((start + _lead_ws(tail), n - _trail_ws(tail)))
    return spans


def _lead_ws(s: str) -> int:
    return len(s) - len(s.lstrip())


def _trail_ws(s: str) -> int:
    return len(s) - len(s.rstrip())


def split_clauses(text: str) -> list[str]:
    """Split a sentence into action clauses on ';', ', then', and verb-led 'and'."""
    parts: list[str] = []
    for chunk in re.split(r";", text):
        pending = chunk
        while True:
            m = re.search(r",?\s+(?:and\s+then|then|and)\s+", pending)
            if not m:
                break
            rest = pending[m.end():]
            lead = re.match(r"(?:also\s+|explicitly\s+|please\s+)*(\w+)", rest, re.IGNORECASE)
            if lead and canonical_verb(lead.group(1)) is not None:
                parts.append(pending[: m.start()])
                pending = rest
            else:
                break
        parts.append(pending)
    return [p.strip(" ,.") for p in parts if p.strip(" ,.")]


def parse_action_clause(clause: str, prev: ActionPhrase | None = None) -> ActionPhrase | None:
    """Parse 'verb object [to destination]'; None when no leading verb found."""
    text = clause.strip().strip(".!?")
    m = re.match(
        r"(?:please\s+|now\s+|also\s+|explicitly\s+|first\s+|finally\s+)*([A-Za-z]+)",
        text,
        re.IGNORECASE,
    )
    if not m:
        return None
    raw_verb = m.group(1)
    if raw_verb.lower() in ARTICLES or raw_verb.lower() in PREPOSITIONS:
        return None
    rest = text[m.end():].strip()
    dest_phrase = None
    obj_part = rest
    for marker in DEST_MARKERS:
        dm = re.search(rf"\s+{marker}\s+(.+)$", " " + obj_part)
        if dm:
            candidate = dm.group(1).strip()
            obj_part = obj_part[: dm.start() - 1].strip() if dm.start() > 0 else ""
            first = re.match(r"[A-Za-z]+", candidate)
            # "to <verb> ..." is a purpose clause, not a destination
            if not (first and canonical_verb(first.group(0)) is not None):
                dest_phrase = candidate
            break
    obj_phrase = obj_part.strip()
    if prev is not None and obj_phrase.lower() in {"it", "them", "this", "that", ""}:
        obj_phrase = prev.obj_phrase
    obj, head = normalize_obj_phrase(obj_phrase)
    if prev is not None and not head:
        obj, head = prev.obj, prev.head_obj
        obj_phrase = prev.obj_phrase
    dest = normalize_destination(dest_phrase) if dest_phrase else None
    if dest is None:
        url = _URL_RE.search(obj_phrase)
        if url:
            dest = url.group(0).lower().rstrip(".,;")
    return ActionPhrase(
        raw_verb=raw_verb,
        op=op_string(raw_verb),
        obj_phrase=obj_phrase,
        obj=obj,
        head_obj=head,
        dest_phrase=dest_phrase,
        dest=dest,
    )


@dataclass(frozen=True)
class Condition:
    """A conditional cue split out of a sentence, with exact offsets."""

    text: str            # normalized condition text (keyword stripped)
    remainder: str       # text after the condition clause
    guard_forward: bool  # condition guards the next step, not an embedded action
    negated: bool
    span: tuple[int, int]      # condition clause offsets within the sentence
    remainder_start: int       # offset of the remainder within the sentence


def extract_condition(sentence: str) -> Condition | None:
    m = _CONDITION_RE.match(sentence)
    if not m:
        return None
    keyword = m.group(1).lower()
    rest_start = m.end()
    rest = sentence[rest_start:]
    cm = re.search(r",\s*", rest)
    if cm:
        span = (rest_start, rest_start + cm.start())
        remainder_start = rest_start + cm.end()
    else:
        tm = re.search(r"\s+then\s+", rest)
        if tm:
            span = (rest_start, rest_start + tm.start())
            remainder_start = rest_start + tm.end()
        else:
            span = (rest_start, len(sentence))
            remainder_start = len(sentence)
    cond_text = sentence[span[0]: span[1]]
    remainder = sentence[remainder_start:].strip()
    guard_forward = bool(re.search(r"\bnext step\b", remainder, re.I))
    cond_norm = re.sub(r"\s+", " ", cond_text).strip().rstrip(".,;").lower()
    if not cond_norm:
        return None
    return Condition(
        text=cond_norm,
        remainder=remainder,
        guard_forward=guard_forward,
        negated=keyword == "unless",
        span=span,
        remainder_start=remainder_start,
    )


@dataclass(frozen=True)
class RequestSpec:
    """Parsed user-request condition: which explicit request satisfies it."""

    op: str
    head_obj: str
    obj_stems: frozenset[str]
    dest: str | None


def is_user_condition(phi: str) -> bool:
    """Does the condition talk about what the user asks for?"""
    return bool(_USER_REQUEST_RE.search(phi))


def user_condition_remainder(phi: str) -> str:
    """Condition text with the 'the user asks' prefix removed."""
    m = _USER_REQUEST_RE.search(phi)
    if not m:
        return phi
    return phi[m.end():].strip(" ,")


def parse_user_request_condition(phi: str) -> RequestSpec | None:
    """Parse guard-style conditions ('the user explicitly asks to send ...')."""
    m = _ALLOW_FLAG_RE.search(phi)
    if m:
        return RequestSpec(
            op=op_string(m.group(1)),
            head_obj=m.group(2).split("_")[-1],
            obj_stems=frozenset(stem(t) for t in m.group(2).split("_")),
            dest=None,
        )
    if not _USER_REQUEST_RE.search(phi):
        return None
    tm = re.search(r"\bto\s+(.+)$", phi)
    if not tm:
        return None
    phrase = parse_action_clause(tm.group(1))
    if phrase is None or op_kind(phrase.op) == "other":
        return None
    return RequestSpec(
        op=phrase.op,
        head_obj=phrase.head_obj,
        obj_stems=frozenset(stem(t) for t in tokenize(phrase.obj_phrase)),
        dest=phrase.dest,
    )


@dataclass(frozen=True)
class TaskContextDescriptor:
    """Fixed seven-slot summary of one user task used for guard synthesis."""

    task_intent: str
    requested_operation: str
    operated_object: str
    execution_scope: str  # local_only | cross_resource | external
    destination: str | None
    explicit_side_effect_request: bool
    validation_result: str  # unnecessary | necessary_or_unconfirmed

    def slot_tuple(self) -> tuple:
        return (
            self.requested_operation,
            self.operated_object,
            self.execution_scope,
            self.destination,
            self.explicit_side_effect_request,
        )


def parse_prompt_phrases(prompt: str) -> list[ActionPhrase]:
    """All action clauses of a prompt, with pronoun carry-over between them."""
    phrases: list[ActionPhrase] = []
    prev: ActionPhrase | None = None
    for span in split_sentences(prompt):
        sentence = prompt[span[0]: span[1]]
        cond = extract_condition(sentence)
        if cond is not None:
            sentence = cond.remainder
        for clause in split_clauses(sentence):
            phrase = parse_action_clause(clause, prev)
            if phrase is not None:
                phrases.append(phrase)
                prev = phrase
    return phrases


def resource_kinds(text: str) -> list[str]:
    toks = set(tokenize(text))
    return [kind for kind, terms in RESOURCE_TERMS if toks & terms]


def descriptor_from_prompt(prompt: str, validation_result: str = "necessary_or_unconfirmed") -> TaskContextDescriptor:
    """Fill the seven descriptor slots from a prompt via the slot grammar."""
    phrases = parse_prompt_phrases(prompt)
    known = [p for p in phrases if op_kind(p.op) != "other"]
    explicit = [p for p in known if p.op in SIDE_EFFECT_OPS]
    primary = explicit[0] if explicit else (known[0] if known else None)
    if primary is None:
        return TaskContextDescriptor(
            task_intent="other",
            requested_operation="other",
            operated_object="other",
            execution_scope="local_only",
            destination=None,
            explicit_side_effect_request=False,
            validation_result=validation_result,
        )
    dest = primary.dest
    toks = set(tokenize(prompt))
    if dest is not None or toks & {"external", "externally", "remote", "remotely"}:
        scope = "external"
    elif len(resource_kinds(prompt)) >= 2:
        scope = "cross_resource"
    else:
        scope = "local_only"
    scope_word = {"external": "external", "cross_resource": "cross-resource",
                  "local_only": "local"}[scope]
    intent_noun = INTENT_NOUN.get(primary.op, "task")
    return TaskContextDescriptor(
        task_intent=f"{scope_word} {primary.head_obj} {intent_noun}".strip(),
        requested_operation=primary.op,
        operated_object=primary.head_obj or "other",
        execution_scope=scope,
        destination=dest,
        explicit_side_effect_request=bool(explicit),
        validation_result=validation_result,
    )


def matches_request(descriptor: TaskContextDescriptor, spec: RequestSpec) -> bool:
    """Does a task descriptor satisfy a user-request condition?"""
    if not descriptor.explicit_side_effect_request:
        return False
    if descriptor.requested_operation != spec.op:
        return False
    generic = not spec.head_obj or spec.head_obj in GENERIC_OBJECTS
    if not generic and descriptor.operated_object != spec.head_obj:
        if stem(descriptor.operated_object) not in spec.obj_stems:
            return False
    if spec.dest is not None and descriptor.destination != spec.dest:
        return False
    return True
